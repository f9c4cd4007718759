//! Serial dictatorship with dynamic menus.
//!
//! Students are processed one at a time. Each student's menu is decided by
//! the menu LP: given the running type-assignment `y` and the quota
//! adjustments `delta`, `f(t, s)` is the largest mass of type `t` that can
//! still go to `s` in a completion of `y` that stays within the adjusted
//! quotas and keeps at least OPT students at regular schools.
//!
//! A student takes the first school in her ranking with `f >= 1`, or a
//! fraction `f` of the first school with `0 < f < 1` (a partial assignment).
//! Partial assignments are then completed by shifting quota slack from a
//! critical school `s` (one with `0 < f(t_j, s) < 1`) to the partial
//! student's school; every shift is recorded in `delta`.

use num_traits::{Signed, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lp::{self, LpOutcome, LpProblem, Relation, Sense};
use crate::model::{compute_opt, Allocation, Instance, Matrix, Quotas, TypeAssignment, TypeVars};
use crate::rational::{self, Rational};

/// A student holding only part of a seat.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partial {
    pub student: usize,
    pub school: usize,
    /// Unassigned fraction, in (0, 1].
    pub remainder: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Assigned(usize),
    PartiallyAssigned { school: usize, fraction: Rational },
}

impl StepOutcome {
    pub fn school(&self) -> usize {
        match self {
            StepOutcome::Assigned(s) => *s,
            StepOutcome::PartiallyAssigned { school, .. } => *school,
        }
    }
}

/// One (j, s)-update: `rho` of quota slack moves from `school` to `target`
/// for `student`'s type, and `student` gains `rho` of `target`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JsUpdate {
    pub student: usize,
    pub school: usize,
    pub target: usize,
    pub rho: Rational,
    pub resolved: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SdmEvent {
    Assignment {
        student: usize,
        outcome: StepOutcome,
        /// `(school, f)` for every school queried, in ranking order.
        queries: Vec<(usize, Rational)>,
    },
    Update {
        update: JsUpdate,
        /// Adjusted quotas right after the update.
        quotas: Quotas,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SdmResult {
    pub order: Vec<usize>,
    pub allocation: Allocation,
    pub y: TypeAssignment,
    pub delta: Matrix,
    pub opt: Rational,
    pub trace: Vec<SdmEvent>,
}

impl SdmResult {
    pub fn adjusted_quotas(&self, inst: &Instance) -> Quotas {
        Quotas::adjusted(inst, &self.delta)
    }

    pub fn partial_assignments(&self) -> usize {
        self.trace
            .iter()
            .filter(|e| {
                matches!(e, SdmEvent::Assignment { outcome: StepOutcome::PartiallyAssigned { .. }, .. })
            })
            .count()
    }

    pub fn updates(&self) -> impl Iterator<Item = (&JsUpdate, &Quotas)> {
        self.trace.iter().filter_map(|e| match e {
            SdmEvent::Update { update, quotas } => Some((update, quotas)),
            _ => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SdmState {
    y: TypeAssignment,
    delta: Matrix,
    partials: Vec<Partial>,
    assigned_counts: Vec<usize>,
    opt: Rational,
    placement: Vec<Option<usize>>,
}

impl SdmState {
    pub fn new(inst: &Instance, opt: Rational) -> Self {
        SdmState {
            y: TypeAssignment::zeros(inst),
            delta: Matrix::zeros(inst.num_types(), inst.num_columns()),
            partials: Vec::new(),
            assigned_counts: vec![0; inst.num_types()],
            opt,
            placement: vec![None; inst.num_students()],
        }
    }

    pub fn y(&self) -> &TypeAssignment {
        &self.y
    }

    pub fn delta(&self) -> &Matrix {
        &self.delta
    }

    pub fn partials(&self) -> &[Partial] {
        &self.partials
    }

    pub fn assigned_counts(&self) -> &[usize] {
        &self.assigned_counts
    }

    pub fn opt(&self) -> &Rational {
        &self.opt
    }

    pub fn placement(&self, i: usize) -> Option<usize> {
        self.placement[i]
    }

    pub fn adjusted_quotas(&self, inst: &Instance) -> Quotas {
        Quotas::adjusted(inst, &self.delta)
    }

    /// The menu LP for `(t_hat, s_hat)` at the current state.
    pub fn menu_lp(&self, inst: &Instance, t_hat: usize, s_hat: usize) -> (LpProblem, TypeVars) {
        let mut p = LpProblem::new(Sense::Maximize);
        let x = TypeVars::declare(&mut p, inst);
        let one = rational::one;

        let regular_y = self.y.regular_total();
        let terms = (0..inst.num_types())
            .flat_map(|t| (0..inst.num_schools()).map(move |s| (t, s)))
            .map(|(t, s)| (x.var(t, s), one()))
            .collect();
        p.add_constraint(terms, Relation::Ge, &self.opt - regular_y);

        for c in inst.constraints() {
            let shift = c
                .types
                .iter()
                .fold(Rational::zero(), |acc, &t| acc + &self.delta[(t, c.school)] - &self.y[(t, c.school)]);
            let terms: Vec<_> = c.types.iter().map(|&t| (x.var(t, c.school), one())).collect();
            p.add_constraint(terms.clone(), Relation::Le, &c.upper + &shift);
            p.add_constraint(terms, Relation::Ge, &c.lower + &shift);
        }

        for t in 0..inst.num_types() {
            let terms = (0..inst.num_columns()).map(|s| (x.var(t, s), one())).collect();
            let remaining = rational::int(inst.type_count(t) as i64) - self.y.row_sum(t);
            p.add_constraint(terms, Relation::Eq, remaining);
        }

        p.set_objective(Sense::Maximize, vec![(x.var(t_hat, s_hat), one())]);
        (p, x)
    }

    /// Largest mass of type `t` that can still be placed at school `s`.
    pub fn f_value(&self, inst: &Instance, t: usize, s: usize) -> Result<Rational> {
        if t >= inst.num_types() || s >= inst.num_columns() {
            return Err(Error::Structure(format!("no (type, school) pair ({t}, {s})")));
        }
        let (p, _) = self.menu_lp(inst, t, s);
        match lp::solve(&p)? {
            LpOutcome::Optimal { value, .. } => Ok(value),
            LpOutcome::Infeasible => Err(Error::Invariant(
                "menu LP became infeasible between steps".into(),
            )),
            LpOutcome::Unbounded => Err(Error::Invariant("menu LP reported unbounded".into())),
        }
    }

    /// Schools with `f(t, s) > 0`, regular schools first then the outside option.
    pub fn available_menu(&self, inst: &Instance, t: usize) -> Result<Vec<usize>> {
        let mut menu = Vec::new();
        for s in 0..inst.num_columns() {
            if self.f_value(inst, t, s)?.is_positive() {
                menu.push(s);
            }
        }
        Ok(menu)
    }

    /// Walks student `i`'s ranking and takes the first school with positive
    /// `f`: fully if `f >= 1`, otherwise a fraction `f` of it.
    pub fn assignment_step(&mut self, inst: &Instance, i: usize) -> Result<(StepOutcome, Vec<(usize, Rational)>)> {
        if i >= inst.num_students() {
            return Err(Error::Structure(format!("no student with index {i}")));
        }
        if self.placement[i].is_some() {
            return Err(Error::Contract(format!("student {} was already processed", inst.student(i).id)));
        }
        let t = inst.student(i).ty;
        let mut queries = Vec::new();
        for s in inst.ranking(i) {
            let f = self.f_value(inst, t, s)?;
            queries.push((s, f.clone()));
            if f >= rational::one() {
                self.y[(t, s)] += rational::one();
                self.placement[i] = Some(s);
                self.assigned_counts[t] += 1;
                return Ok((StepOutcome::Assigned(s), queries));
            }
            if f.is_positive() {
                if self.partials.iter().any(|p| inst.student(p.student).ty == t) {
                    return Err(Error::Invariant(format!(
                        "second partial assignment for type {}",
                        inst.types()[t].id
                    )));
                }
                self.y[(t, s)] += &f;
                self.placement[i] = Some(s);
                self.assigned_counts[t] += 1;
                self.partials.push(Partial { student: i, school: s, remainder: rational::one() - &f });
                return Ok((StepOutcome::PartiallyAssigned { school: s, fraction: f }, queries));
            }
        }
        Err(Error::Invariant(format!(
            "no school, not even the outside option, admits student {}",
            inst.student(i).id
        )))
    }

    /// Applies the (j, s)-updates after checking that `j` is partial and `s`
    /// is critical for `j`'s type.
    pub fn apply_js_updates(&mut self, inst: &Instance, j: usize, s: usize) -> Result<JsUpdate> {
        let idx = self
            .partials
            .iter()
            .position(|p| p.student == j)
            .ok_or_else(|| Error::Contract(format!("student index {j} is not partially assigned")))?;
        if s >= inst.num_columns() || s == self.partials[idx].school {
            return Err(Error::Contract(format!("school index {s} cannot resolve student index {j}")));
        }
        let f = self.f_value(inst, inst.student(j).ty, s)?;
        if !(f.is_positive() && f < rational::one()) {
            return Err(Error::Contract(format!(
                "school {} is not critical (f = {})",
                inst.school_id(s),
                rational::to_text(&f)
            )));
        }
        Ok(self.apply_update(inst, idx, s, &f))
    }

    pub(crate) fn apply_update(&mut self, inst: &Instance, idx: usize, s: usize, f: &Rational) -> JsUpdate {
        let partial = &mut self.partials[idx];
        let t = inst.student(partial.student).ty;
        let target = partial.school;
        let rho = update_amount(f, &partial.remainder);
        self.delta[(t, s)] -= &rho;
        self.delta[(t, target)] += &rho;
        self.y[(t, target)] += &rho;
        partial.remainder -= &rho;
        let student = partial.student;
        let resolved = partial.remainder.is_zero();
        if resolved {
            self.partials.remove(idx);
        }
        JsUpdate { student, school: s, target, rho, resolved }
    }

    /// Applies (j, s)-updates until no partial student has a critical school.
    /// Partial students are scanned in processing order, schools by index
    /// with the outside option last.
    pub fn resolution_step(&mut self, inst: &Instance) -> Result<Vec<JsUpdate>> {
        let mut applied = Vec::new();
        'scan: loop {
            for idx in 0..self.partials.len() {
                let (j, sj) = (self.partials[idx].student, self.partials[idx].school);
                let t = inst.student(j).ty;
                for s in (0..inst.num_columns()).filter(|&s| s != sj) {
                    let f = self.f_value(inst, t, s)?;
                    if f.is_positive() && f < rational::one() {
                        applied.push(self.apply_update(inst, idx, s, &f));
                        continue 'scan;
                    }
                }
            }
            return Ok(applied);
        }
    }

    /// Cheap structural invariants, plus menu-LP feasibility in debug builds.
    pub fn check_invariants(&self, inst: &Instance) -> Result<()> {
        let mut seen = vec![false; inst.num_types()];
        for p in &self.partials {
            let t = inst.student(p.student).ty;
            if std::mem::replace(&mut seen[t], true) {
                return Err(Error::Invariant(format!("type {} has two partial students", inst.types()[t].id)));
            }
            if !(p.remainder.is_positive() && p.remainder <= rational::one()) {
                return Err(Error::Invariant("partial remainder outside (0, 1]".into()));
            }
        }
        for t in 0..inst.num_types() {
            if !self.delta.row_sum(t).is_zero() {
                return Err(Error::Invariant(format!("delta row of type {} does not sum to 0", inst.types()[t].id)));
            }
        }
        if self.delta.iter().any(|(_, d)| rational::abs(d) > rational::one()) {
            return Err(Error::Invariant("a delta entry left [-1, 1]".into()));
        }
        if !self.y.is_nonnegative() {
            return Err(Error::Invariant("negative entry in y".into()));
        }
        if cfg!(debug_assertions) {
            let (p, _) = self.menu_lp(inst, 0, 0);
            if !lp::feasible(&p)? {
                return Err(Error::Invariant("menu LP infeasible".into()));
            }
        }
        Ok(())
    }
}

/// `rho = min(f, r)`.
pub fn update_amount(f: &Rational, remainder: &Rational) -> Rational {
    f.min(remainder).clone()
}

/// Runs the mechanism with students processed in `order`.
pub fn run_sdm(inst: &Instance, order: &[usize]) -> Result<SdmResult> {
    let opt = compute_opt(inst)?;
    run_sdm_with_opt(inst, order, opt)
}

/// As [`run_sdm`] with OPT already known.
pub fn run_sdm_with_opt(inst: &Instance, order: &[usize], opt: Rational) -> Result<SdmResult> {
    validate_order(inst, order)?;
    let mut state = SdmState::new(inst, opt);
    let mut trace = Vec::new();
    // Replays the update log so every snapshot shows the quotas right after
    // its own update, not after the whole resolution step.
    let mut replay = Matrix::zeros(inst.num_types(), inst.num_columns());
    for &i in order {
        let (outcome, queries) = state.assignment_step(inst, i)?;
        trace.push(SdmEvent::Assignment { student: i, outcome, queries });
        state.check_invariants(inst)?;
        for update in state.resolution_step(inst)? {
            let t = inst.student(update.student).ty;
            replay[(t, update.school)] -= &update.rho;
            replay[(t, update.target)] += &update.rho;
            trace.push(SdmEvent::Update { update, quotas: Quotas::adjusted(inst, &replay) });
        }
        state.check_invariants(inst)?;
    }
    if !state.partials.is_empty() {
        return Err(Error::Invariant("partial students remain at termination".into()));
    }
    let allocation = Allocation(
        state
            .placement
            .iter()
            .map(|p| p.expect("every student in the order is placed"))
            .collect(),
    );
    Ok(SdmResult {
        order: order.to_vec(),
        allocation,
        y: state.y,
        delta: state.delta,
        opt: state.opt,
        trace,
    })
}

fn validate_order(inst: &Instance, order: &[usize]) -> Result<()> {
    let mut seen = vec![false; inst.num_students()];
    for &i in order {
        if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Structure("order is not a permutation of the students".into()));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Structure("order does not list every student".into()));
    }
    Ok(())
}

/// Uniformly random processing order (Fisher-Yates over a seeded ChaCha stream).
pub fn random_order(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Random serial dictatorship variant: a seeded random order.
pub fn run_rsd(inst: &Instance, seed: u64) -> Result<SdmResult> {
    run_sdm(inst, &random_order(inst.num_students(), seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rational::{frac, int};

    fn identity(inst: &Instance) -> Vec<usize> {
        (0..inst.num_students()).collect()
    }

    #[test]
    fn first_query_of_simple_example() {
        let inst = fixtures::simple_example();
        let state = SdmState::new(&inst, compute_opt(&inst).unwrap());
        assert_eq!(state.f_value(&inst, 0, 0).unwrap(), frac(1, 2));
        // OPT seats everyone, so the outside option is off the menu.
        assert_eq!(state.available_menu(&inst, 0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn simple_example_steps() {
        let inst = fixtures::simple_example();
        let mut state = SdmState::new(&inst, compute_opt(&inst).unwrap());
        let (outcome, _) = state.assignment_step(&inst, 0).unwrap();
        assert_eq!(outcome, StepOutcome::PartiallyAssigned { school: 0, fraction: frac(1, 2) });
        let updates = state.resolution_step(&inst).unwrap();
        assert_eq!(updates.len(), 1);
        assert_eq!(updates[0], JsUpdate { student: 0, school: 1, target: 0, rho: frac(1, 2), resolved: true });

        state.assignment_step(&inst, 1).unwrap();
        state.resolution_step(&inst).unwrap();
        assert_eq!(state.f_value(&inst, 2, 1).unwrap(), frac(1, 2));
    }

    #[test]
    fn unconstrained_gives_first_choices() {
        let inst = Instance::builder()
            .schools(["a", "b", "c"])
            .ty("t")
            .ty("u")
            .student("x", "t", &["b", "a", "c"])
            .student("y", "u", &["c", "b", "a"])
            .student("z", "t", &["b", "c", "a"])
            .build()
            .unwrap();
        let r = run_sdm(&inst, &identity(&inst)).unwrap();
        assert_eq!(r.allocation, Allocation(vec![1, 2, 1]));
        assert!(r.delta.iter().all(|(_, d)| d.is_zero()));
        let state = SdmState::new(&inst, r.opt.clone());
        assert_eq!(state.available_menu(&inst, 0).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn update_amount_is_min() {
        assert_eq!(update_amount(&frac(3, 4), &frac(1, 2)), frac(1, 2));
        assert_eq!(update_amount(&frac(1, 4), &frac(1, 2)), frac(1, 4));
    }

    #[test]
    fn update_resolves_when_remainder_exhausted() {
        let inst = fixtures::simple_example();
        let mut state = SdmState::new(&inst, int(3));
        state.y[(0, 0)] = frac(1, 2);
        state.placement[0] = Some(0);
        state.partials.push(Partial { student: 0, school: 0, remainder: frac(1, 2) });
        let u = state.apply_update(&inst, 0, 1, &frac(3, 4));
        assert_eq!(u.rho, frac(1, 2));
        assert!(u.resolved);
        assert!(state.partials.is_empty());
        assert_eq!(state.y[(0, 0)], int(1));
        assert_eq!(state.delta[(0, 0)], frac(1, 2));
        assert_eq!(state.delta[(0, 1)], frac(-1, 2));
    }

    #[test]
    fn js_update_contract() {
        let inst = fixtures::simple_example();
        let mut state = SdmState::new(&inst, int(3));
        assert!(matches!(state.apply_js_updates(&inst, 0, 1), Err(Error::Contract(_))));
        state.assignment_step(&inst, 0).unwrap();
        // s_j itself is never a resolution school.
        assert!(matches!(state.apply_js_updates(&inst, 0, 0), Err(Error::Contract(_))));
        let u = state.apply_js_updates(&inst, 0, 1).unwrap();
        assert!(u.resolved);
    }

    #[test]
    fn processed_twice_is_rejected() {
        let inst = fixtures::twin_example();
        let mut state = SdmState::new(&inst, int(1));
        state.assignment_step(&inst, 0).unwrap();
        assert!(matches!(state.assignment_step(&inst, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn bad_order_rejected() {
        let inst = fixtures::twin_example();
        assert!(matches!(run_sdm(&inst, &[0]), Err(Error::Structure(_))));
        assert!(matches!(run_sdm(&inst, &[0, 0]), Err(Error::Structure(_))));
    }

    #[test]
    fn infeasible_instance_propagates() {
        let inst = Instance::builder()
            .school("s1")
            .ty("t")
            .constraint("s1", &["t"], int(2), int(2))
            .student("a", "t", &["s1"])
            .build()
            .unwrap();
        assert!(matches!(run_sdm(&inst, &[0]), Err(Error::InfeasibleInstance)));
    }

    #[test]
    fn deterministic_runs() {
        let inst = fixtures::appendix_example();
        let order = identity(&inst);
        assert_eq!(run_sdm(&inst, &order).unwrap(), run_sdm(&inst, &order).unwrap());
        assert_eq!(random_order(7, 42), random_order(7, 42));
    }
}
