//! Instances, assignments and feasibility.
//!
//! Schools are addressed by index: regular schools occupy `0..num_schools()`
//! in declaration order and the outside option is the extra index
//! [`Instance::outside`], ranked last by every student and never constrained.
//! Types and students are likewise addressed by their declaration index.

use std::collections::{HashMap, HashSet};
use std::ops::{Deref, DerefMut, Index, IndexMut};

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, LpOutcome, LpProblem, Relation, Sense, VarId};
use crate::rational::{self, Rational};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeSpec {
    pub id: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Student {
    pub id: String,
    pub ty: usize,
    /// Regular schools, most preferred first. Always a full permutation.
    pub prefs: Vec<usize>,
}

/// One distributional constraint `lower <= sum_{t in types} x[t, school] <= upper`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub school: usize,
    /// Sorted, duplicate-free type indices.
    pub types: Vec<usize>,
    pub lower: Rational,
    pub upper: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    schools: Vec<String>,
    outside_id: String,
    types: Vec<TypeSpec>,
    constraints: Vec<Constraint>,
    students: Vec<Student>,
}

impl Instance {
    pub fn builder() -> InstanceBuilder {
        InstanceBuilder::default()
    }

    pub fn num_schools(&self) -> usize {
        self.schools.len()
    }

    /// Index of the outside option (one past the regular schools).
    pub fn outside(&self) -> usize {
        self.schools.len()
    }

    /// Regular schools plus the outside option.
    pub fn num_columns(&self) -> usize {
        self.schools.len() + 1
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn num_students(&self) -> usize {
        self.students.len()
    }

    pub fn school_id(&self, s: usize) -> &str {
        if s == self.outside() {
            &self.outside_id
        } else {
            &self.schools[s]
        }
    }

    pub fn school_ids(&self) -> &[String] {
        &self.schools
    }

    pub fn outside_id(&self) -> &str {
        &self.outside_id
    }

    pub fn school_index(&self, id: &str) -> Option<usize> {
        if id == self.outside_id {
            return Some(self.outside());
        }
        self.schools.iter().position(|s| s == id)
    }

    pub fn types(&self) -> &[TypeSpec] {
        &self.types
    }

    pub fn type_index(&self, id: &str) -> Option<usize> {
        self.types.iter().position(|t| t.id == id)
    }

    pub fn type_count(&self, t: usize) -> usize {
        self.types[t].count
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Indices of the constraints attached to school `s` (the family Z(s)).
    pub fn constraints_at(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.constraints
            .iter()
            .enumerate()
            .filter(move |(_, c)| c.school == s)
            .map(|(k, _)| k)
    }

    pub fn students(&self) -> &[Student] {
        &self.students
    }

    pub fn student(&self, i: usize) -> &Student {
        &self.students[i]
    }

    pub fn student_index(&self, id: &str) -> Option<usize> {
        self.students.iter().position(|s| s.id == id)
    }

    /// Student `i`'s full ranking: regular schools in preference order, then
    /// the outside option.
    pub fn ranking(&self, i: usize) -> Vec<usize> {
        let mut r = self.students[i].prefs.clone();
        r.push(self.outside());
        r
    }

    /// Position of school `s` in student `i`'s ranking (0 = favourite).
    pub fn rank(&self, i: usize, s: usize) -> usize {
        if s == self.outside() {
            return self.num_schools();
        }
        self.students[i]
            .prefs
            .iter()
            .position(|&p| p == s)
            .expect("prefs are a full permutation")
    }

    pub fn total_students(&self) -> usize {
        self.students.len()
    }

    /// Copy of the instance with student `i` reporting `prefs` instead.
    pub fn with_prefs(&self, i: usize, prefs: Vec<usize>) -> Result<Instance> {
        let mut out = self.clone();
        out.students[i].prefs = prefs;
        out.validate()?;
        Ok(out)
    }

    /// Copy with every quota replaced (used for adjusted-quota audits).
    pub fn with_quotas(&self, quotas: &Quotas) -> Result<Instance> {
        if quotas.lower.len() != self.constraints.len() || quotas.upper.len() != self.constraints.len() {
            return Err(Error::Structure("quota table does not match the constraint list".into()));
        }
        let mut out = self.clone();
        for (k, c) in out.constraints.iter_mut().enumerate() {
            c.lower = quotas.lower[k].clone();
            c.upper = quotas.upper[k].clone();
        }
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        let m = self.schools.len();
        let mut seen = HashSet::new();
        for s in &self.schools {
            if !seen.insert(s.as_str()) {
                return Err(Error::Validation(format!("duplicate school id {s:?}")));
            }
        }
        if seen.contains(self.outside_id.as_str()) {
            return Err(Error::Validation(format!(
                "outside option id {:?} collides with a regular school",
                self.outside_id
            )));
        }
        let mut type_ids = HashSet::new();
        for t in &self.types {
            if !type_ids.insert(t.id.as_str()) {
                return Err(Error::Validation(format!("duplicate type id {:?}", t.id)));
            }
            if t.count == 0 {
                return Err(Error::Validation(format!("type {:?} has count 0", t.id)));
            }
        }
        let mut keys = HashSet::new();
        for c in &self.constraints {
            if c.school >= m {
                return Err(Error::Validation("constraints may only reference regular schools".into()));
            }
            if c.types.is_empty() {
                return Err(Error::Validation(format!(
                    "constraint at school {:?} has an empty type set",
                    self.schools[c.school]
                )));
            }
            if c.lower.is_negative() {
                return Err(Error::Validation(format!(
                    "constraint at school {:?} has negative lower quota {}",
                    self.schools[c.school],
                    rational::to_text(&c.lower)
                )));
            }
            if c.lower > c.upper {
                return Err(Error::Validation(format!(
                    "constraint at school {:?} has lower {} > upper {}",
                    self.schools[c.school],
                    rational::to_text(&c.lower),
                    rational::to_text(&c.upper)
                )));
            }
            if !keys.insert((c.school, c.types.clone())) {
                return Err(Error::Validation(format!(
                    "duplicate constraint on types {:?} at school {:?}",
                    c.types.iter().map(|&t| &self.types[t].id).collect::<Vec<_>>(),
                    self.schools[c.school]
                )));
            }
        }
        let mut ids = HashSet::new();
        let mut counts = vec![0usize; self.types.len()];
        for st in &self.students {
            if !ids.insert(st.id.as_str()) {
                return Err(Error::Validation(format!("duplicate student id {:?}", st.id)));
            }
            counts[st.ty] += 1;
            let mut ranked = vec![false; m];
            for &p in &st.prefs {
                if p >= m || ranked[p] {
                    return Err(Error::Validation(format!(
                        "student {:?} prefs must list each regular school exactly once",
                        st.id
                    )));
                }
                ranked[p] = true;
            }
            if let Some(missing) = ranked.iter().position(|r| !r) {
                return Err(Error::Validation(format!(
                    "student {} prefs missing school {}",
                    st.id, self.schools[missing]
                )));
            }
        }
        for (t, spec) in self.types.iter().enumerate() {
            if counts[t] != spec.count {
                return Err(Error::Validation(format!(
                    "type {:?} declares count {} but has {} students",
                    spec.id, spec.count, counts[t]
                )));
            }
        }
        Ok(())
    }
}

/// Builds an [`Instance`] from string ids.
#[derive(Clone, Debug, Default)]
pub struct InstanceBuilder {
    schools: Vec<String>,
    outside: Option<String>,
    types: Vec<(String, Option<usize>)>,
    constraints: Vec<(String, Vec<String>, Rational, Rational)>,
    students: Vec<(String, String, Vec<String>)>,
}

impl InstanceBuilder {
    pub fn school(mut self, id: impl Into<String>) -> Self {
        self.schools.push(id.into());
        self
    }

    pub fn schools<S: Into<String>>(mut self, ids: impl IntoIterator<Item = S>) -> Self {
        self.schools.extend(ids.into_iter().map(Into::into));
        self
    }

    pub fn outside(mut self, id: impl Into<String>) -> Self {
        self.outside = Some(id.into());
        self
    }

    /// Declares a type. Without an explicit count the count is taken from
    /// the students of that type.
    pub fn ty(mut self, id: impl Into<String>) -> Self {
        self.types.push((id.into(), None));
        self
    }

    pub fn ty_with_count(mut self, id: impl Into<String>, count: usize) -> Self {
        self.types.push((id.into(), Some(count)));
        self
    }

    pub fn constraint(mut self, school: &str, types: &[&str], lower: Rational, upper: Rational) -> Self {
        self.constraints.push((
            school.to_string(),
            types.iter().map(|t| t.to_string()).collect(),
            lower,
            upper,
        ));
        self
    }

    pub fn student(mut self, id: &str, ty: &str, prefs: &[&str]) -> Self {
        self.students.push((
            id.to_string(),
            ty.to_string(),
            prefs.iter().map(|p| p.to_string()).collect(),
        ));
        self
    }

    pub fn build(self) -> Result<Instance> {
        let outside_id = self.outside.unwrap_or_else(|| "phi".to_string());
        let school_of = |id: &str| -> Result<usize> {
            self.schools
                .iter()
                .position(|s| s == id)
                .ok_or_else(|| Error::Structure(format!("unknown school id {id:?}")))
        };
        let type_of = |id: &str| -> Result<usize> {
            self.types
                .iter()
                .position(|(t, _)| t == id)
                .ok_or_else(|| Error::Structure(format!("unknown type id {id:?}")))
        };
        let mut students = Vec::with_capacity(self.students.len());
        for (id, ty, prefs) in &self.students {
            let ty = type_of(ty)?;
            let mut ranked = Vec::with_capacity(prefs.len());
            for (k, p) in prefs.iter().enumerate() {
                if *p == outside_id {
                    if k + 1 != prefs.len() {
                        return Err(Error::Validation(format!(
                            "student {id:?} ranks the outside option above a regular school"
                        )));
                    }
                    continue;
                }
                ranked.push(school_of(p)?);
            }
            students.push(Student { id: id.clone(), ty, prefs: ranked });
        }
        let mut derived = vec![0usize; self.types.len()];
        for st in &students {
            derived[st.ty] += 1;
        }
        let types = self
            .types
            .iter()
            .enumerate()
            .map(|(t, (id, count))| TypeSpec { id: id.clone(), count: count.unwrap_or(derived[t]) })
            .collect();
        let mut constraints = Vec::with_capacity(self.constraints.len());
        for (school, tys, lower, upper) in &self.constraints {
            if *school == outside_id {
                return Err(Error::Validation("the outside option carries no constraints".into()));
            }
            let school = school_of(school)?;
            let mut idx = tys.iter().map(|t| type_of(t)).collect::<Result<Vec<_>>>()?;
            idx.sort_unstable();
            idx.dedup();
            constraints.push(Constraint { school, types: idx, lower: lower.clone(), upper: upper.clone() });
        }
        let inst = Instance { schools: self.schools, outside_id, types, constraints, students };
        inst.validate()?;
        Ok(inst)
    }
}

/// Dense rational matrix, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<Rational>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![Rational::zero(); rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<Rational>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Structure("ragged matrix rows".into()));
        }
        let n = rows.len();
        Ok(Matrix { rows: n, cols, data: rows.into_iter().flatten().collect() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[Rational] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_sum(&self, r: usize) -> Rational {
        rational::sum(self.row(r))
    }

    pub fn is_integral(&self) -> bool {
        self.data.iter().all(|v| v.is_integer())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|v| !v.is_negative())
    }

    pub fn scaled(&self, factor: &Rational) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * factor).collect() }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Structure("matrix dimensions differ".into()));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &Rational)> {
        let cols = self.cols;
        self.data.iter().enumerate().map(move |(k, v)| ((k / cols, k % cols), v))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = Rational;
    fn index(&self, (r, c): (usize, usize)) -> &Rational {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Rational {
        &mut self.data[r * self.cols + c]
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRow(#[serde(with = "rational::serde_text_vec")] Vec<Rational>);

/// Serialized as a list of rows of exact values.
impl Serialize for Matrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<MatrixRow> = (0..self.rows).map(|r| MatrixRow(self.row(r).to_vec())).collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<MatrixRow>::deserialize(deserializer)?;
        Matrix::from_rows(rows.into_iter().map(|r| r.0).collect()).map_err(serde::de::Error::custom)
    }
}

macro_rules! matrix_newtype {
    ($name:ident) => {
        impl Deref for $name {
            type Target = Matrix;
            fn deref(&self) -> &Matrix {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut Matrix {
                &mut self.0
            }
        }
    };
}

/// Mass of each type at each school (columns include the outside option).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeAssignment(pub Matrix);
matrix_newtype!(TypeAssignment);

impl TypeAssignment {
    pub fn zeros(inst: &Instance) -> Self {
        TypeAssignment(Matrix::zeros(inst.num_types(), inst.num_columns()))
    }

    /// `sum_{t in types} self[t, school]`.
    pub fn aggregate(&self, types: &[usize], school: usize) -> Rational {
        types.iter().fold(Rational::zero(), |acc, &t| acc + &self[(t, school)])
    }

    /// Mass on regular schools.
    pub fn regular_total(&self) -> Rational {
        let outside = self.cols() - 1;
        self.iter()
            .filter(|((_, s), _)| *s != outside)
            .fold(Rational::zero(), |acc, (_, v)| acc + v)
    }

    /// Every type's row sums to its count.
    pub fn is_complete(&self, inst: &Instance) -> bool {
        (0..inst.num_types()).all(|t| self.row_sum(t) == rational::int(inst.type_count(t) as i64))
    }
}

/// Probability of each student attending each school (columns include the
/// outside option).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StudentAssignment(pub Matrix);
matrix_newtype!(StudentAssignment);

impl StudentAssignment {
    pub fn zeros(inst: &Instance) -> Self {
        StudentAssignment(Matrix::zeros(inst.num_students(), inst.num_columns()))
    }

    pub fn rows_sum_to_one(&self) -> bool {
        (0..self.rows()).all(|i| self.row_sum(i) == rational::one())
    }

    pub fn regular_total(&self) -> Rational {
        let outside = self.cols() - 1;
        self.iter()
            .filter(|((_, s), _)| *s != outside)
            .fold(Rational::zero(), |acc, (_, v)| acc + v)
    }
}

/// Integral allocation: the school (possibly the outside option) of each student.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Allocation(pub Vec<usize>);

impl Allocation {
    pub fn school_of(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn type_profile(&self, inst: &Instance) -> TypeAssignment {
        let mut y = TypeAssignment::zeros(inst);
        for (i, &s) in self.0.iter().enumerate() {
            y[(inst.student(i).ty, s)] += rational::one();
        }
        y
    }

    pub fn to_matrix(&self, inst: &Instance) -> StudentAssignment {
        let mut x = StudentAssignment::zeros(inst);
        for (i, &s) in self.0.iter().enumerate() {
            x[(i, s)] = rational::one();
        }
        x
    }

    pub fn regular_count(&self, inst: &Instance) -> usize {
        self.0.iter().filter(|&&s| s != inst.outside()).count()
    }
}

/// Lower/upper quota per constraint, indexed like [`Instance::constraints`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quotas {
    #[serde(with = "rational::serde_text_vec")]
    pub lower: Vec<Rational>,
    #[serde(with = "rational::serde_text_vec")]
    pub upper: Vec<Rational>,
}

impl Quotas {
    pub fn original(inst: &Instance) -> Self {
        Quotas {
            lower: inst.constraints().iter().map(|c| c.lower.clone()).collect(),
            upper: inst.constraints().iter().map(|c| c.upper.clone()).collect(),
        }
    }

    /// `[lower + delta_R, upper + delta_R]` with `delta_R = sum_{t in R} delta[t, s]`.
    pub fn adjusted(inst: &Instance, delta: &Matrix) -> Self {
        let mut q = Quotas::original(inst);
        for (k, c) in inst.constraints().iter().enumerate() {
            let shift = c.types.iter().fold(Rational::zero(), |acc, &t| acc + &delta[(t, c.school)]);
            q.lower[k] += &shift;
            q.upper[k] += &shift;
        }
        q
    }

    /// Widens every quota by `slack` on both sides.
    pub fn relaxed(&self, slack: &Rational) -> Self {
        Quotas {
            lower: self.lower.iter().map(|v| v - slack).collect(),
            upper: self.upper.iter().map(|v| v + slack).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Lower,
    Upper,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub constraint: usize,
    pub school: usize,
    pub types: Vec<usize>,
    pub direction: Direction,
    /// Strictly positive exceedance.
    pub magnitude: Rational,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_magnitude(&self) -> Rational {
        self.violations
            .iter()
            .map(|v| v.magnitude.clone())
            .max()
            .unwrap_or_else(Rational::zero)
    }
}

/// Aggregates a student-level assignment by type.
pub fn type_profile(x: &StudentAssignment, inst: &Instance) -> Result<TypeAssignment> {
    if x.rows() != inst.num_students() || x.cols() != inst.num_columns() {
        return Err(Error::Structure(format!(
            "assignment is {}x{}, instance needs {}x{}",
            x.rows(),
            x.cols(),
            inst.num_students(),
            inst.num_columns()
        )));
    }
    let mut y = TypeAssignment::zeros(inst);
    for ((i, s), v) in x.iter() {
        if !v.is_zero() {
            y[(inst.student(i).ty, s)] += v;
        }
    }
    Ok(y)
}

/// Lists every constraint whose aggregate falls outside its quota interval.
pub fn check_feasible(y: &TypeAssignment, quotas: &Quotas, inst: &Instance) -> Result<ViolationReport> {
    if y.rows() != inst.num_types() || y.cols() != inst.num_columns() {
        return Err(Error::Structure("type-assignment shape does not match the instance".into()));
    }
    let n = inst.constraints().len();
    if quotas.lower.len() != n || quotas.upper.len() != n {
        return Err(Error::Structure("quota tables do not cover the constraint list".into()));
    }
    let mut violations = Vec::new();
    for (k, c) in inst.constraints().iter().enumerate() {
        let total = y.aggregate(&c.types, c.school);
        let (direction, magnitude) = if total < quotas.lower[k] {
            (Direction::Lower, &quotas.lower[k] - &total)
        } else if total > quotas.upper[k] {
            (Direction::Upper, &total - &quotas.upper[k])
        } else {
            continue;
        };
        violations.push(Violation {
            constraint: k,
            school: c.school,
            types: c.types.clone(),
            direction,
            magnitude,
        });
    }
    Ok(ViolationReport { violations })
}

/// Variables `x[t, s]` of the type-level relaxation, row-major over
/// (type, school incl. outside).
pub struct TypeVars {
    cols: usize,
    first: usize,
}

impl TypeVars {
    pub fn declare(p: &mut LpProblem, inst: &Instance) -> TypeVars {
        let first = p.num_vars();
        for t in 0..inst.num_types() {
            for s in 0..inst.num_columns() {
                p.add_nonneg(format!("x[{},{}]", inst.types()[t].id, inst.school_id(s)));
            }
        }
        TypeVars { cols: inst.num_columns(), first }
    }

    pub fn var(&self, t: usize, s: usize) -> VarId {
        VarId(self.first + t * self.cols + s)
    }

    pub fn extract(&self, inst: &Instance, point: &[Rational]) -> TypeAssignment {
        let mut y = TypeAssignment::zeros(inst);
        for t in 0..inst.num_types() {
            for s in 0..inst.num_columns() {
                y[(t, s)] = point[self.var(t, s).0].clone();
            }
        }
        y
    }
}

/// The type-level allocative-efficiency LP: maximize regular mass subject to
/// every quota and every type count.
pub fn lp1(inst: &Instance) -> (LpProblem, TypeVars) {
    let mut p = LpProblem::new(Sense::Maximize);
    let vars = TypeVars::declare(&mut p, inst);
    for c in inst.constraints() {
        let terms: Vec<_> = c.types.iter().map(|&t| (vars.var(t, c.school), rational::one())).collect();
        p.add_constraint(terms.clone(), Relation::Le, c.upper.clone());
        p.add_constraint(terms, Relation::Ge, c.lower.clone());
    }
    for t in 0..inst.num_types() {
        let terms = (0..inst.num_columns()).map(|s| (vars.var(t, s), rational::one())).collect();
        p.add_constraint(terms, Relation::Eq, rational::int(inst.type_count(t) as i64));
    }
    let objective = (0..inst.num_types())
        .flat_map(|t| (0..inst.num_schools()).map(move |s| (t, s)))
        .map(|(t, s)| (vars.var(t, s), rational::one()))
        .collect();
    p.set_objective(Sense::Maximize, objective);
    (p, vars)
}

/// OPT: the largest fractional number of students that fit in regular
/// schools without violating any quota.
pub fn compute_opt(inst: &Instance) -> Result<Rational> {
    let (p, _) = lp1(inst);
    match lp::solve(&p)? {
        LpOutcome::Optimal { value, .. } => Ok(value),
        LpOutcome::Infeasible => Err(Error::InfeasibleInstance),
        LpOutcome::Unbounded => Err(Error::Invariant("allocative LP reported unbounded".into())),
    }
}

/// Optimal type-assignment of the relaxation together with OPT.
pub fn solve_lp1(inst: &Instance) -> Result<(Rational, TypeAssignment)> {
    let (p, vars) = lp1(inst);
    match lp::solve(&p)? {
        LpOutcome::Optimal { value, point } => Ok((value, vars.extract(inst, &point))),
        LpOutcome::Infeasible => Err(Error::InfeasibleInstance),
        LpOutcome::Unbounded => Err(Error::Invariant("allocative LP reported unbounded".into())),
    }
}

/// Maps school ids to indices for an instance; convenient for tests and IO.
pub fn school_lookup(inst: &Instance) -> HashMap<String, usize> {
    (0..inst.num_columns()).map(|s| (inst.school_id(s).to_string(), s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rational::{frac, int};

    #[test]
    fn zero_assignment_profiles_to_zero() {
        let inst = fixtures::simple_example();
        let y = type_profile(&StudentAssignment::zeros(&inst), &inst).unwrap();
        assert_eq!(y, TypeAssignment::zeros(&inst));
    }

    #[test]
    fn half_half_profile() {
        let inst = fixtures::simple_example();
        let mut x = StudentAssignment::zeros(&inst);
        for i in 0..3 {
            x[(i, 0)] = frac(1, 2);
            x[(i, 1)] = frac(1, 2);
        }
        let y = type_profile(&x, &inst).unwrap();
        for t in 0..3 {
            assert_eq!(y[(t, 0)], frac(1, 2));
            assert_eq!(y[(t, 1)], frac(1, 2));
            assert_eq!(y[(t, 2)], int(0));
        }
        assert!(check_feasible(&y, &Quotas::original(&inst), &inst).unwrap().is_feasible());
    }

    #[test]
    fn two_students_of_one_type() {
        let inst = Instance::builder()
            .school("s1")
            .ty("t")
            .student("a", "t", &["s1"])
            .student("b", "t", &["s1"])
            .build()
            .unwrap();
        let y = Allocation(vec![0, 0]).type_profile(&inst);
        assert_eq!(y[(0, 0)], int(2));
        let x = Allocation(vec![0, 0]).to_matrix(&inst);
        assert_eq!(type_profile(&x, &inst).unwrap(), y);
    }

    #[test]
    fn profile_rejects_wrong_shape() {
        let inst = fixtures::simple_example();
        let x = StudentAssignment(Matrix::zeros(2, 3));
        assert!(matches!(type_profile(&x, &inst), Err(Error::Structure(_))));
    }

    #[test]
    fn vacuous_constraints_never_violated() {
        let inst = Instance::builder()
            .schools(["a", "b"])
            .ty("t")
            .student("i", "t", &["a", "b"])
            .build()
            .unwrap();
        let mut y = TypeAssignment::zeros(&inst);
        y[(0, 0)] = int(40);
        assert!(check_feasible(&y, &Quotas::original(&inst), &inst).unwrap().is_feasible());
    }

    #[test]
    fn overlapping_upper_quotas() {
        // One school; at most 10 of {t1,t2} and at most 10 of {t1,t3}.
        let inst = Instance::builder()
            .school("s")
            .ty_with_count("t1", 11)
            .ty_with_count("t2", 1)
            .ty_with_count("t3", 1)
            .constraint("s", &["t1", "t2"], int(0), int(10))
            .constraint("s", &["t1", "t3"], int(0), int(10))
            .student("a0", "t1", &["s"])
            .student("a1", "t1", &["s"])
            .student("a2", "t1", &["s"])
            .student("a3", "t1", &["s"])
            .student("a4", "t1", &["s"])
            .student("a5", "t1", &["s"])
            .student("a6", "t1", &["s"])
            .student("a7", "t1", &["s"])
            .student("a8", "t1", &["s"])
            .student("a9", "t1", &["s"])
            .student("a10", "t1", &["s"])
            .student("b", "t2", &["s"])
            .student("c", "t3", &["s"])
            .build()
            .unwrap();
        let q = Quotas::original(&inst);
        let mut y = TypeAssignment::zeros(&inst);
        y[(0, 0)] = int(10);
        y[(0, 1)] = int(1);
        y[(1, 1)] = int(1);
        y[(2, 1)] = int(1);
        assert!(check_feasible(&y, &q, &inst).unwrap().is_feasible());
        y[(0, 0)] = int(11);
        y[(0, 1)] = int(0);
        let report = check_feasible(&y, &q, &inst).unwrap();
        assert_eq!(report.violations.len(), 2);
        for v in &report.violations {
            assert_eq!(v.direction, Direction::Upper);
            assert_eq!(v.magnitude, int(1));
        }
    }

    #[test]
    fn validation_errors() {
        let truncated = Instance::builder()
            .schools(["s1", "s2"])
            .ty("t")
            .student("i", "t", &["s1"])
            .build();
        let err = truncated.unwrap_err().to_string();
        assert!(err.contains("student i prefs missing school s2"), "{err}");

        let inverted = Instance::builder()
            .school("s1")
            .ty("t")
            .constraint("s1", &["t"], int(2), int(1))
            .student("i", "t", &["s1"])
            .build();
        assert!(matches!(inverted, Err(Error::Validation(_))));

        let duplicate = Instance::builder()
            .school("s1")
            .ty("t")
            .constraint("s1", &["t"], int(0), int(1))
            .constraint("s1", &["t"], int(0), int(2))
            .student("i", "t", &["s1"])
            .build();
        assert!(matches!(duplicate, Err(Error::Validation(_))));

        let unknown = Instance::builder().school("s1").ty("t").student("i", "u", &["s1"]).build();
        assert!(matches!(unknown, Err(Error::Structure(_))));

        let on_outside = Instance::builder()
            .school("s1")
            .ty("t")
            .constraint("phi", &["t"], int(0), int(1))
            .student("i", "t", &["s1"])
            .build();
        assert!(matches!(on_outside, Err(Error::Validation(_))));

        let miscounted = Instance::builder()
            .school("s1")
            .ty_with_count("t", 2)
            .student("i", "t", &["s1"])
            .build();
        assert!(matches!(miscounted, Err(Error::Validation(_))));
    }

    #[test]
    fn opt_values() {
        assert_eq!(compute_opt(&fixtures::simple_example()).unwrap(), int(3));
        assert_eq!(compute_opt(&fixtures::appendix_example()).unwrap(), frac(11, 2));
        let free = Instance::builder()
            .schools(["a", "b"])
            .ty("t1")
            .ty("t2")
            .student("i", "t1", &["a", "b"])
            .student("j", "t2", &["b", "a"])
            .student("k", "t2", &["b", "a"])
            .build()
            .unwrap();
        assert_eq!(compute_opt(&free).unwrap(), int(3));
    }

    #[test]
    fn opt_reports_infeasible_instance() {
        let inst = Instance::builder()
            .school("s1")
            .ty("t")
            .constraint("s1", &["t"], int(2), int(3))
            .student("i", "t", &["s1"])
            .build()
            .unwrap();
        assert!(matches!(compute_opt(&inst), Err(Error::InfeasibleInstance)));
    }

    #[test]
    fn adjusted_quotas_shift_by_type_sums() {
        let inst = fixtures::simple_example();
        let mut delta = Matrix::zeros(3, 3);
        delta[(0, 0)] = frac(1, 2);
        delta[(0, 1)] = frac(-1, 2);
        let q = Quotas::adjusted(&inst, &delta);
        // {t1,t2} at s1 becomes [3/2, 5/2]
        let k = inst
            .constraints()
            .iter()
            .position(|c| c.school == 0 && c.types == vec![0, 1])
            .unwrap();
        assert_eq!((q.lower[k].clone(), q.upper[k].clone()), (frac(3, 2), frac(5, 2)));
    }
}
