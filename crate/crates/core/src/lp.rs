//! Exact linear programming over rationals.
//!
//! A dense two-phase primal simplex with Bland's anti-cycling rule. Every
//! LP in the engine (the relaxation that defines OPT, menu queries,
//! extendability and dominance searches) goes through [`solve`]. Problems at
//! this scale have tens of variables, so a dense tableau is adequate and the
//! exact arithmetic makes the pivoting predicates decidable.

use std::collections::HashSet;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::rational::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    NonNegative,
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub terms: Vec<(VarId, Rational)>,
    pub relation: Relation,
    pub rhs: Rational,
}

impl Constraint {
    pub fn lhs(&self, point: &[Rational]) -> Rational {
        eval(&self.terms, point)
    }

    pub fn holds(&self, point: &[Rational]) -> bool {
        let lhs = self.lhs(point);
        match self.relation {
            Relation::Le => lhs <= self.rhs,
            Relation::Ge => lhs >= self.rhs,
            Relation::Eq => lhs == self.rhs,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LpError {
    #[error("{context} references undeclared variable {var}")]
    UnknownVariable { var: usize, context: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LpOutcome {
    /// `point` is indexed by [`VarId`].
    Optimal { value: Rational, point: Vec<Rational> },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn value(&self) -> Option<&Rational> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(value),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LpProblem {
    names: Vec<String>,
    kinds: Vec<VarKind>,
    constraints: Vec<Constraint>,
    sense: Sense,
    objective: Vec<(VarId, Rational)>,
}

impl Default for LpProblem {
    fn default() -> Self {
        LpProblem::new(Sense::Maximize)
    }
}

impl LpProblem {
    pub fn new(sense: Sense) -> Self {
        LpProblem {
            names: Vec::new(),
            kinds: Vec::new(),
            constraints: Vec::new(),
            sense,
            objective: Vec::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind) -> VarId {
        self.names.push(name.into());
        self.kinds.push(kind);
        VarId(self.names.len() - 1)
    }

    pub fn add_nonneg(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarKind::NonNegative)
    }

    pub fn add_constraint(&mut self, terms: Vec<(VarId, Rational)>, relation: Relation, rhs: Rational) {
        self.constraints.push(Constraint { terms, relation, rhs });
    }

    pub fn set_objective(&mut self, sense: Sense, terms: Vec<(VarId, Rational)>) {
        self.sense = sense;
        self.objective = terms;
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn var_name(&self, var: VarId) -> &str {
        &self.names[var.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn objective(&self) -> &[(VarId, Rational)] {
        &self.objective
    }

    pub fn kind(&self, var: VarId) -> VarKind {
        self.kinds[var.0]
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        let check = |terms: &[(VarId, Rational)], context: String| {
            for (var, _) in terms {
                if var.0 >= n {
                    return Err(LpError::UnknownVariable { var: var.0, context });
                }
            }
            Ok(())
        };
        check(&self.objective, "objective".into())?;
        for (k, c) in self.constraints.iter().enumerate() {
            check(&c.terms, format!("constraint {k}"))?;
        }
        Ok(())
    }

    pub fn objective_value(&self, point: &[Rational]) -> Rational {
        eval(&self.objective, point)
    }

    /// Indices of constraints (and sign restrictions, reported as
    /// `constraints().len() + var`) that `point` violates.
    pub fn violations(&self, point: &[Rational]) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.holds(point))
            .map(|(k, _)| k)
            .collect();
        for (v, kind) in self.kinds.iter().enumerate() {
            if *kind == VarKind::NonNegative && point[v].is_negative() {
                out.push(self.constraints.len() + v);
            }
        }
        out
    }

    pub fn is_feasible_point(&self, point: &[Rational]) -> bool {
        point.len() == self.num_vars() && self.violations(point).is_empty()
    }
}

fn eval(terms: &[(VarId, Rational)], point: &[Rational]) -> Rational {
    terms
        .iter()
        .fold(Rational::zero(), |acc, (v, c)| acc + c * &point[v.0])
}

/// Solves `p` exactly. Optimal points satisfy every constraint with exact
/// equality/inequality; which optimal vertex is returned is deterministic but
/// otherwise unspecified.
pub fn solve(p: &LpProblem) -> Result<LpOutcome, LpError> {
    p.validate()?;
    let outcome = Simplex::build(p).run(p);
    if cfg!(debug_assertions) {
        if let LpOutcome::Optimal { value, point } = &outcome {
            debug_assert!(p.is_feasible_point(point), "simplex returned an infeasible point");
            debug_assert_eq!(&p.objective_value(point), value, "simplex value mismatch");
        }
    }
    Ok(outcome)
}

/// True iff the feasible region of `p` is nonempty (phase one only).
pub fn feasible(p: &LpProblem) -> Result<bool, LpError> {
    p.validate()?;
    let mut simplex = Simplex::build(p);
    Ok(simplex.phase_one())
}

/// Column layout: structural columns (two per free variable), then
/// slack/surplus columns, then artificial columns.
struct Simplex {
    rows: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    /// For each problem variable: (positive column, optional negative column).
    var_cols: Vec<(usize, Option<usize>)>,
    n_struct: usize,
    n_slack: usize,
    n_art: usize,
}

impl Simplex {
    fn build(p: &LpProblem) -> Simplex {
        let mut var_cols = Vec::with_capacity(p.num_vars());
        let mut n_struct = 0;
        for kind in &p.kinds {
            match kind {
                VarKind::NonNegative => {
                    var_cols.push((n_struct, None));
                    n_struct += 1;
                }
                VarKind::Free => {
                    var_cols.push((n_struct, Some(n_struct + 1)));
                    n_struct += 2;
                }
            }
        }

        // Normalize rows to structural coefficient vectors with rhs >= 0 and
        // drop exact duplicates.
        let mut seen = HashSet::new();
        let mut normalized: Vec<(Vec<Rational>, Relation, Rational)> = Vec::new();
        for c in &p.constraints {
            let mut coeffs = vec![Rational::zero(); n_struct];
            for (var, coef) in &c.terms {
                let (pos, neg) = var_cols[var.0];
                coeffs[pos] += coef;
                if let Some(neg) = neg {
                    coeffs[neg] -= coef;
                }
            }
            let mut rel = c.relation;
            let mut rhs = c.rhs.clone();
            if rhs.is_negative() {
                for x in coeffs.iter_mut() {
                    *x = -x.clone();
                }
                rhs = -rhs;
                rel = match rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
            if seen.insert((coeffs.clone(), rel, rhs.clone())) {
                normalized.push((coeffs, rel, rhs));
            }
        }

        let n_slack = normalized.iter().filter(|(_, r, _)| *r != Relation::Eq).count();
        let n_art = normalized.iter().filter(|(_, r, _)| *r != Relation::Le).count();
        let width = n_struct + n_slack + n_art + 1;
        let mut rows = Vec::with_capacity(normalized.len());
        let mut basis = Vec::with_capacity(normalized.len());
        let (mut slack, mut art) = (n_struct, n_struct + n_slack);
        for (coeffs, rel, rhs) in normalized {
            let mut row = coeffs;
            row.resize(width, Rational::zero());
            row[width - 1] = rhs;
            match rel {
                Relation::Le => {
                    row[slack] = Rational::from_integer(1.into());
                    basis.push(slack);
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = Rational::from_integer((-1).into());
                    row[art] = Rational::from_integer(1.into());
                    basis.push(art);
                    slack += 1;
                    art += 1;
                }
                Relation::Eq => {
                    row[art] = Rational::from_integer(1.into());
                    basis.push(art);
                    art += 1;
                }
            }
            rows.push(row);
        }
        Simplex { rows, basis, var_cols, n_struct, n_slack, n_art }
    }

    fn width(&self) -> usize {
        self.n_struct + self.n_slack + self.n_art + 1
    }

    fn is_artificial(&self, col: usize) -> bool {
        col >= self.n_struct + self.n_slack && col < self.n_struct + self.n_slack + self.n_art
    }

    /// Reduced-cost row for maximizing `costs` at the current basis; the last
    /// entry holds minus the objective value.
    fn reduced_costs(&self, costs: &[Rational]) -> Vec<Rational> {
        let mut z: Vec<Rational> = costs.to_vec();
        z.resize(self.width(), Rational::zero());
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = z[b].clone();
            if !cb.is_zero() {
                for (zj, aj) in z.iter_mut().zip(&self.rows[r]) {
                    if !aj.is_zero() {
                        *zj -= &cb * aj;
                    }
                }
            }
        }
        z
    }

    fn pivot(&mut self, z: &mut [Rational], r: usize, e: usize) {
        let piv = self.rows[r][e].clone();
        for x in self.rows[r].iter_mut() {
            if !x.is_zero() {
                *x /= &piv;
            }
        }
        let nz: Vec<usize> = (0..self.rows[r].len())
            .filter(|&j| !self.rows[r][j].is_zero())
            .collect();
        let pivot_row = std::mem::take(&mut self.rows[r]);
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row[e].is_zero() {
                continue;
            }
            let factor = row[e].clone();
            for &j in &nz {
                row[j] -= &factor * &pivot_row[j];
            }
        }
        if !z[e].is_zero() {
            let factor = z[e].clone();
            for &j in &nz {
                z[j] -= &factor * &pivot_row[j];
            }
        }
        self.rows[r] = pivot_row;
        self.basis[r] = e;
    }

    /// Runs simplex iterations on `z` over columns `< allowed`. Returns false
    /// if the objective is unbounded.
    fn iterate(&mut self, z: &mut [Rational], allowed: usize) -> bool {
        let rhs = self.width() - 1;
        loop {
            // Bland: lowest-index improving column.
            let Some(e) = (0..allowed).find(|&j| z[j].is_positive()) else {
                return true;
            };
            let mut leave: Option<(usize, Rational)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                if !row[e].is_positive() {
                    continue;
                }
                let ratio = &row[rhs] / &row[e];
                let better = match &leave {
                    None => true,
                    Some((lr, best)) => {
                        ratio < *best || (ratio == *best && self.basis[r] < self.basis[*lr])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
            let Some((r, _)) = leave else {
                return false;
            };
            self.pivot(z, r, e);
        }
    }

    /// Minimizes the artificial mass. Returns feasibility; on success all
    /// artificial columns are nonbasic (redundant rows are removed).
    fn phase_one(&mut self) -> bool {
        if self.n_art == 0 {
            return true;
        }
        let art_start = self.n_struct + self.n_slack;
        let mut costs = vec![Rational::zero(); self.width() - 1];
        for c in costs.iter_mut().skip(art_start) {
            *c = Rational::from_integer((-1).into());
        }
        let mut z = self.reduced_costs(&costs);
        let allowed = self.width() - 1;
        let bounded = self.iterate(&mut z, allowed);
        debug_assert!(bounded, "phase one is bounded by construction");
        let rhs = self.width() - 1;
        if !z[rhs].is_zero() {
            return false;
        }
        let mut r = 0;
        while r < self.rows.len() {
            if self.is_artificial(self.basis[r]) {
                match (0..art_start).find(|&j| !self.rows[r][j].is_zero()) {
                    Some(e) => {
                        self.pivot(&mut z, r, e);
                        r += 1;
                    }
                    None => {
                        self.rows.remove(r);
                        self.basis.remove(r);
                    }
                }
            } else {
                r += 1;
            }
        }
        true
    }

    fn run(&mut self, p: &LpProblem) -> LpOutcome {
        if !self.phase_one() {
            return LpOutcome::Infeasible;
        }
        let art_start = self.n_struct + self.n_slack;
        // Drop artificial columns; all are nonbasic now.
        let rhs = self.width() - 1;
        for row in self.rows.iter_mut() {
            let b = row[rhs].clone();
            row.truncate(art_start);
            row.push(b);
        }
        self.n_art = 0;

        let sign = match p.sense {
            Sense::Maximize => Rational::from_integer(1.into()),
            Sense::Minimize => Rational::from_integer((-1).into()),
        };
        let mut costs = vec![Rational::zero(); art_start];
        for (var, coef) in &p.objective {
            let (pos, neg) = self.var_cols[var.0];
            costs[pos] += &sign * coef;
            if let Some(neg) = neg {
                costs[neg] -= &sign * coef;
            }
        }
        let mut z = self.reduced_costs(&costs);
        if !self.iterate(&mut z, art_start) {
            return LpOutcome::Unbounded;
        }

        let mut cols = vec![Rational::zero(); art_start];
        for (r, &b) in self.basis.iter().enumerate() {
            cols[b] = self.rows[r][art_start].clone();
        }
        let point: Vec<Rational> = self
            .var_cols
            .iter()
            .map(|&(pos, neg)| match neg {
                Some(neg) => &cols[pos] - &cols[neg],
                None => cols[pos].clone(),
            })
            .collect();
        let value = p.objective_value(&point);
        LpOutcome::Optimal { value, point }
    }
}
