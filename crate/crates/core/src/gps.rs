//! Generalized probabilistic serial.
//!
//! Every student eats her current school at unit rate. Consumption `x` must
//! stay extendable: some student-level assignment that respects every quota,
//! places OPT students at regular schools, and gives each student at least
//! what she has already eaten of every regular school. When eating further
//! would break extendability for a (type, school) pair, that pair is blocked
//! for good and its eaters move on to their next unblocked school.

use std::collections::{BTreeSet, HashMap};

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, LpOutcome, LpProblem, Relation, Sense, VarId};
use crate::model::{compute_opt, Instance, Matrix, StudentAssignment};
use crate::rational::{self, Rational};

/// Variables `x[i, s]` of the student-level relaxation, row-major over
/// (student, school incl. outside).
pub struct StudentVars {
    cols: usize,
    first: usize,
}

impl StudentVars {
    pub fn declare(p: &mut LpProblem, inst: &Instance) -> StudentVars {
        let first = p.num_vars();
        for st in inst.students() {
            for s in 0..inst.num_columns() {
                p.add_nonneg(format!("x[{},{}]", st.id, inst.school_id(s)));
            }
        }
        StudentVars { cols: inst.num_columns(), first }
    }

    pub fn var(&self, i: usize, s: usize) -> VarId {
        VarId(self.first + i * self.cols + s)
    }

    pub fn extract(&self, inst: &Instance, point: &[Rational]) -> StudentAssignment {
        let mut x = StudentAssignment::zeros(inst);
        for i in 0..inst.num_students() {
            for s in 0..inst.num_columns() {
                x[(i, s)] = point[self.var(i, s).0].clone();
            }
        }
        x
    }
}

/// The student-level relaxation: quotas on the student shares, each row
/// summing to one, maximizing the regular mass.
pub fn lp3(inst: &Instance) -> (LpProblem, StudentVars) {
    let mut p = LpProblem::new(Sense::Maximize);
    let x = StudentVars::declare(&mut p, inst);
    let zero = Matrix::zeros(inst.num_students(), inst.num_columns());
    add_shifted_rows(&mut p, inst, &x, &zero, None);
    let objective = regular_cells(inst).map(|(i, s)| (x.var(i, s), rational::one())).collect();
    p.set_objective(Sense::Maximize, objective);
    (p, x)
}

fn regular_cells(inst: &Instance) -> impl Iterator<Item = (usize, usize)> {
    let m = inst.num_schools();
    (0..inst.num_students()).flat_map(move |i| (0..m).map(move |s| (i, s)))
}

/// Adds the relaxation's rows for `x = base + c * theta + w` with `w >= 0`
/// as the declared variables: quota rows and unit row sums, with `base`
/// moved to the right-hand side.
fn add_shifted_rows(
    p: &mut LpProblem,
    inst: &Instance,
    w: &StudentVars,
    base: &Matrix,
    eat: Option<(VarId, &Matrix)>,
) {
    let one = rational::one;
    let with_eat = |terms: &mut Vec<(VarId, Rational)>, cells: &mut dyn Iterator<Item = (usize, usize)>| {
        if let Some((c, theta)) = eat {
            let rate = cells.fold(Rational::zero(), |acc, (i, s)| acc + &theta[(i, s)]);
            if !rate.is_zero() {
                terms.push((c, rate));
            }
        }
    };
    for con in inst.constraints() {
        let members: Vec<usize> = (0..inst.num_students()).filter(|&i| con.types.contains(&inst.student(i).ty)).collect();
        let mut terms: Vec<_> = members.iter().map(|&i| (w.var(i, con.school), one())).collect();
        with_eat(&mut terms, &mut members.iter().map(|&i| (i, con.school)));
        let used = rational::sum(members.iter().map(|&i| &base[(i, con.school)]));
        p.add_constraint(terms.clone(), Relation::Le, &con.upper - &used);
        p.add_constraint(terms, Relation::Ge, &con.lower - &used);
    }
    for i in 0..inst.num_students() {
        let mut terms: Vec<_> = (0..inst.num_columns()).map(|s| (w.var(i, s), one())).collect();
        with_eat(&mut terms, &mut (0..inst.num_columns()).map(|s| (i, s)));
        p.add_constraint(terms, Relation::Eq, one() - base.row_sum(i));
    }
}

/// Witness LP over `w >= 0` (and optionally the eating duration `c`):
/// `x' = y_reg + c * theta + w` must be feasible for the student-level
/// relaxation with exactly OPT regular mass. Outside-option consumption
/// imposes no lower bound on `x'`, so it is dropped from the base.
fn witness_lp(
    inst: &Instance,
    opt: &Rational,
    y: &Matrix,
    eat: Option<&Matrix>,
) -> (LpProblem, StudentVars, Option<VarId>) {
    let mut base = y.clone();
    for i in 0..inst.num_students() {
        base[(i, inst.outside())] = Rational::zero();
    }
    let mut p = LpProblem::new(Sense::Maximize);
    let w = StudentVars::declare(&mut p, inst);
    let c = eat.map(|_| p.add_nonneg("c"));
    let mut theta = eat.cloned();
    if let Some(theta) = theta.as_mut() {
        for i in 0..inst.num_students() {
            theta[(i, inst.outside())] = Rational::zero();
        }
    }
    add_shifted_rows(&mut p, inst, &w, &base, c.zip(theta.as_ref()));

    let mut terms: Vec<_> = regular_cells(inst).map(|(i, s)| (w.var(i, s), rational::one())).collect();
    if let (Some(c), Some(theta)) = (c, theta.as_ref()) {
        let rate = rational::sum(regular_cells(inst).map(|cell| &theta[cell]));
        if !rate.is_zero() {
            terms.push((c, rate));
        }
    }
    let used = rational::sum(regular_cells(inst).map(|cell| &base[cell]));
    p.add_constraint(terms, Relation::Eq, opt - used);
    (p, w, c)
}

fn check_shape(inst: &Instance, y: &Matrix) -> Result<()> {
    if y.rows() != inst.num_students() || y.cols() != inst.num_columns() {
        return Err(Error::Structure("consumption matrix shape does not match the instance".into()));
    }
    if !y.is_nonnegative() {
        return Err(Error::Contract("consumption matrix has a negative entry".into()));
    }
    Ok(())
}

/// True iff some feasible, allocatively efficient student-level assignment
/// gives every student at least `y` of every regular school.
pub fn is_extendable(inst: &Instance, opt: &Rational, y: &Matrix) -> Result<bool> {
    check_shape(inst, y)?;
    let (p, _, _) = witness_lp(inst, opt, y, None);
    Ok(lp::feasible(&p)?)
}

/// Consumption state of the eating process.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EatingState {
    pub x: StudentAssignment,
    pub clock: Rational,
    /// School each student is eating.
    pub current: Vec<usize>,
    /// (type, school) pairs that can never be eaten again.
    pub blocked: BTreeSet<(usize, usize)>,
}

impl EatingState {
    /// Time zero, everyone at her favourite school.
    pub fn initial(inst: &Instance) -> Self {
        EatingState {
            x: StudentAssignment::zeros(inst),
            clock: Rational::zero(),
            current: (0..inst.num_students()).map(|i| inst.ranking(i)[0]).collect(),
            blocked: BTreeSet::new(),
        }
    }

    /// Unit indicator of the current eating pattern.
    pub fn theta(&self, inst: &Instance) -> Matrix {
        let mut theta = Matrix::zeros(inst.num_students(), inst.num_columns());
        for (i, &s) in self.current.iter().enumerate() {
            theta[(i, s)] = rational::one();
        }
        theta
    }
}

/// Largest `c <= 1 - clock` keeping `x + c * theta` extendable.
pub fn max_eat_duration(inst: &Instance, opt: &Rational, state: &EatingState) -> Result<Rational> {
    check_shape(inst, &state.x)?;
    let theta = state.theta(inst);
    let (mut p, _, c) = witness_lp(inst, opt, &state.x, Some(&theta));
    let c = c.expect("eating variable declared");
    p.add_constraint(vec![(c, rational::one())], Relation::Le, rational::one() - &state.clock);
    p.set_objective(Sense::Maximize, vec![(c, rational::one())]);
    match lp::solve(&p)? {
        LpOutcome::Optimal { value, .. } => Ok(value),
        LpOutcome::Infeasible => Err(Error::Contract("consumption is not extendable".into())),
        LpOutcome::Unbounded => Err(Error::Invariant("eating duration LP reported unbounded".into())),
    }
}

/// True iff no extendability witness gives type `t` more of school `s` than
/// it has already eaten. The outside option is never blocked.
pub fn blocked_now(inst: &Instance, opt: &Rational, state: &EatingState, t: usize, s: usize) -> Result<bool> {
    if s == inst.outside() {
        return Ok(false);
    }
    let (mut p, w, _) = witness_lp(inst, opt, &state.x, None);
    let objective = (0..inst.num_students())
        .filter(|&i| inst.student(i).ty == t)
        .map(|i| (w.var(i, s), rational::one()))
        .collect();
    p.set_objective(Sense::Maximize, objective);
    match lp::solve(&p)? {
        LpOutcome::Optimal { value, .. } => Ok(value.is_zero()),
        LpOutcome::Infeasible => Err(Error::Contract("consumption is not extendable".into())),
        LpOutcome::Unbounded => Err(Error::Invariant("blocking LP reported unbounded".into())),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Switch {
    pub student: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EatingEvent {
    #[serde(with = "rational::serde_text")]
    pub time: Rational,
    pub switches: Vec<Switch>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EatingTrace {
    pub events: Vec<EatingEvent>,
}

impl EatingTrace {
    pub fn switch_count(&self) -> usize {
        self.events.iter().map(|e| e.switches.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GpsResult {
    pub x: StudentAssignment,
    pub trace: EatingTrace,
    pub opt: Rational,
}

pub fn run_gps(inst: &Instance) -> Result<GpsResult> {
    let opt = compute_opt(inst)?;
    run_gps_with_opt(inst, opt)
}

pub fn run_gps_with_opt(inst: &Instance, opt: Rational) -> Result<GpsResult> {
    let mut state = EatingState::initial(inst);
    let mut trace = EatingTrace::default();
    let one = rational::one();
    // Each student can switch at most once per school.
    let max_passes = (inst.num_columns() + 1) * inst.num_students().max(1) + 1;
    let mut passes = 0;

    loop {
        let c = max_eat_duration(inst, &opt, &state)?;
        if c.is_positive() {
            for (i, &s) in state.current.iter().enumerate() {
                state.x[(i, s)] += &c;
            }
            state.clock += &c;
        }
        if state.clock == one {
            break;
        }
        if !is_extendable(inst, &opt, &state.x)? {
            return Err(Error::Invariant(format!(
                "consumption left the extendable region at time {}",
                rational::to_text(&state.clock)
            )));
        }

        passes += 1;
        if passes > max_passes {
            return Err(Error::Invariant("eating process did not terminate".into()));
        }
        // Statuses that are not blocked may change with the next advance, so
        // only blocked pairs persist across passes.
        let mut fresh: HashMap<(usize, usize), bool> = HashMap::new();
        let mut is_blocked = |state: &EatingState, t: usize, s: usize| -> Result<bool> {
            if state.blocked.contains(&(t, s)) {
                return Ok(true);
            }
            if let Some(&b) = fresh.get(&(t, s)) {
                return Ok(b);
            }
            let b = blocked_now(inst, &opt, state, t, s)?;
            fresh.insert((t, s), b);
            Ok(b)
        };

        let pairs: BTreeSet<(usize, usize)> =
            (0..inst.num_students()).map(|i| (inst.student(i).ty, state.current[i])).collect();
        let mut newly = Vec::new();
        for &(t, s) in &pairs {
            if is_blocked(&state, t, s)? {
                newly.push((t, s));
            }
        }
        state.blocked.extend(newly);

        let mut switches = Vec::new();
        for i in 0..inst.num_students() {
            let t = inst.student(i).ty;
            let from = state.current[i];
            if !state.blocked.contains(&(t, from)) {
                continue;
            }
            let ranking = inst.ranking(i);
            let start = inst.rank(i, from) + 1;
            let mut to = None;
            for &s in &ranking[start..] {
                if !is_blocked(&state, t, s)? {
                    to = Some(s);
                    break;
                }
                state.blocked.insert((t, s));
            }
            let to = to.ok_or_else(|| Error::Invariant("outside option reported blocked".into()))?;
            state.current[i] = to;
            switches.push(Switch { student: i, from, to });
        }
        if switches.is_empty() {
            if c.is_zero() {
                return Err(Error::Invariant(format!(
                    "eating stalled at time {} with no blocked pair",
                    rational::to_text(&state.clock)
                )));
            }
            continue;
        }
        match trace.events.last_mut() {
            Some(last) if last.time == state.clock => last.switches.extend(switches),
            _ => trace.events.push(EatingEvent { time: state.clock.clone(), switches }),
        }
    }

    let x = state.x;
    if !x.rows_sum_to_one() {
        return Err(Error::Invariant("terminal assignment rows do not sum to one".into()));
    }
    let (p, vars) = lp3(inst);
    let mut point = vec![Rational::zero(); p.num_vars()];
    for ((i, s), v) in x.iter() {
        point[vars.var(i, s).0] = v.clone();
    }
    if !p.is_feasible_point(&point) || p.objective_value(&point) != opt {
        return Err(Error::Invariant("terminal assignment is not an optimal relaxation point".into()));
    }
    Ok(GpsResult { x, trace, opt })
}
