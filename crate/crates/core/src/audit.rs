//! Property checks for mechanism outcomes.
//!
//! Every check returns an [`AuditReport`]; a violated verdict always carries
//! a witness that can be re-checked by hand or by rerunning the mechanism.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::gps::{lp3, run_gps_with_opt};
use crate::lp::{self, LpOutcome, Relation, Sense};
use crate::model::{check_feasible, compute_opt, Allocation, Instance, Quotas, StudentAssignment};
use crate::rational::{self, Rational};
use crate::sdm::{random_order, run_sdm_with_opt, SdmResult};

/// Most regular schools for which misreports are enumerated exhaustively.
pub const MISREPORT_SCHOOL_CAP: usize = 4;
/// Default limit on candidate allocations in the Pareto search.
pub const PARETO_SEARCH_CAP: u64 = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    Violated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// Reporting `report` gets `student` a school she truly prefers.
    Misreport { student: usize, report: Vec<usize>, truthful_school: usize, misreport_school: usize },
    /// Reporting `report` gives `student` a row that strictly dominates her truthful row.
    DominatingMisreport {
        student: usize,
        report: Vec<usize>,
        #[serde(with = "rational::serde_text_vec")]
        truthful: Vec<Rational>,
        #[serde(with = "rational::serde_text_vec")]
        misreport: Vec<Rational>,
    },
    /// `envious` gets less of her top-`school` prefix than `envied` does.
    Envy { envious: usize, envied: usize, school: usize },
    /// A feasible assignment stochastically dominating the audited one.
    DominatingAssignment {
        z: StudentAssignment,
        #[serde(with = "rational::serde_text")]
        surplus: Rational,
    },
    /// A feasible allocation every student weakly prefers, some strictly.
    DominatingAllocation { allocation: Allocation },
    /// Empirical assignment frequencies of two interchangeable students differ.
    Asymmetry { first: usize, second: usize, school: usize, gap: f64, tolerance: f64 },
    /// A mechanism guarantee that failed, with the offending quantity.
    Guarantee { detail: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub property: String,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
}

impl AuditReport {
    fn from_witness(property: &str, witness: Option<Witness>) -> Self {
        let verdict = if witness.is_some() { Verdict::Violated } else { Verdict::Holds };
        AuditReport { property: property.to_string(), verdict, witness }
    }

    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }
}

/// Prefix sums of `row` along `pref`, one per prefix length `1..=pref.len()`.
fn prefix_sums(row: &[Rational], pref: &[usize]) -> Vec<Rational> {
    let mut acc = Rational::zero();
    pref.iter()
        .map(|&s| {
            acc += &row[s];
            acc.clone()
        })
        .collect()
}

/// `a` stochastically dominates `b` under `pref` (best school first): every
/// upper set of `pref` gets at least as much mass under `a`.
pub fn sd_dominates(a: &[Rational], b: &[Rational], pref: &[usize]) -> bool {
    prefix_sums(a, pref).iter().zip(prefix_sums(b, pref)).all(|(pa, pb)| *pa >= pb)
}

fn check_rows(x: &StudentAssignment, inst: &Instance) -> Result<()> {
    if x.rows() != inst.num_students() || x.cols() != inst.num_columns() {
        return Err(Error::Structure("assignment shape does not match the instance".into()));
    }
    Ok(())
}

/// No student prefers a same-type student's row to her own.
pub fn check_envy_free(x: &StudentAssignment, inst: &Instance) -> Result<AuditReport> {
    check_rows(x, inst)?;
    let n = inst.num_students();
    for i in 0..n {
        let pref = inst.ranking(i);
        let own = prefix_sums(x.row(i), &pref);
        for j in (0..n).filter(|&j| j != i && inst.student(j).ty == inst.student(i).ty) {
            let other = prefix_sums(x.row(j), &pref);
            if let Some(k) = (0..pref.len()).find(|&k| own[k] < other[k]) {
                let witness = Witness::Envy { envious: i, envied: j, school: pref[k] };
                return Ok(AuditReport::from_witness("envy-free", Some(witness)));
            }
        }
    }
    Ok(AuditReport::from_witness("envy-free", None))
}

/// No feasible assignment (quotas and unit rows, OPT not required)
/// stochastically dominates `x` for every student with some strict gain.
///
/// Solved as one LP: the candidate must match or beat every prefix sum of
/// `x`, and the total prefix surplus is maximized.
pub fn check_ordinal_efficiency(x: &StudentAssignment, inst: &Instance) -> Result<AuditReport> {
    check_rows(x, inst)?;
    let (mut p, z) = lp3(inst);
    let mut objective = Vec::new();
    let mut baseline = Rational::zero();
    for i in 0..inst.num_students() {
        let pref = inst.ranking(i);
        let sums = prefix_sums(x.row(i), &pref);
        // The full prefix is the unit row sum; it carries no surplus.
        for k in 1..pref.len() {
            let terms: Vec<_> = pref[..k].iter().map(|&s| (z.var(i, s), rational::one())).collect();
            objective.extend(terms.iter().cloned());
            p.add_constraint(terms, Relation::Ge, sums[k - 1].clone());
            baseline += &sums[k - 1];
        }
    }
    p.set_objective(Sense::Maximize, objective);
    match lp::solve(&p)? {
        LpOutcome::Optimal { value, point } => {
            let surplus = value - baseline;
            let witness = surplus.is_positive().then(|| Witness::DominatingAssignment {
                z: z.extract(inst, &point),
                surplus,
            });
            Ok(AuditReport::from_witness("ordinal-efficiency", witness))
        }
        LpOutcome::Infeasible => Err(Error::Contract("audited assignment is not feasible".into())),
        LpOutcome::Unbounded => Err(Error::Invariant("dominance LP reported unbounded".into())),
    }
}

/// Exhaustive search for a quota-feasible allocation that Pareto dominates
/// `alloc`. Only schools each student ranks at least as high as her current
/// one are tried; `cap` bounds the number of candidates.
pub fn check_pareto(alloc: &Allocation, inst: &Instance, quotas: &Quotas, cap: u64) -> Result<AuditReport> {
    if alloc.0.len() != inst.num_students() {
        return Err(Error::Structure("allocation does not cover every student".into()));
    }
    let options: Vec<Vec<usize>> = (0..inst.num_students())
        .map(|i| {
            let ranking = inst.ranking(i);
            ranking[..=inst.rank(i, alloc.school_of(i))].to_vec()
        })
        .collect();
    let size = options.iter().try_fold(1u64, |acc, o| acc.checked_mul(o.len() as u64));
    if size.is_none_or(|n| n > cap) {
        return Err(Error::SearchTooLarge(format!(
            "Pareto search over {} students exceeds the cap of {cap} candidates",
            inst.num_students()
        )));
    }

    let mut digits = vec![0usize; options.len()];
    loop {
        let candidate = Allocation(digits.iter().zip(&options).map(|(&d, o)| o[d]).collect());
        let strict = candidate.0.iter().zip(&alloc.0).any(|(a, b)| a != b);
        if strict && check_feasible(&candidate.type_profile(inst), quotas, inst)?.is_feasible() {
            let witness = Witness::DominatingAllocation { allocation: candidate };
            return Ok(AuditReport::from_witness("pareto", Some(witness)));
        }
        // Odometer over the option lists.
        let mut k = 0;
        loop {
            if k == digits.len() {
                return Ok(AuditReport::from_witness("pareto", None));
            }
            digits[k] += 1;
            if digits[k] < options[k].len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

/// All orderings of `items`, lexicographic by position.
pub fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for k in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(k);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn misreports(inst: &Instance) -> Result<Vec<Vec<usize>>> {
    if inst.num_schools() > MISREPORT_SCHOOL_CAP {
        return Err(Error::SearchTooLarge(format!(
            "{} regular schools exceed the misreport cap of {MISREPORT_SCHOOL_CAP}",
            inst.num_schools()
        )));
    }
    Ok(permutations(&(0..inst.num_schools()).collect::<Vec<_>>()))
}

/// No student gets a school she truly prefers by misreporting, with the
/// processing order fixed.
pub fn check_strategyproof(inst: &Instance, order: &[usize]) -> Result<AuditReport> {
    let reports = misreports(inst)?;
    let opt = compute_opt(inst)?;
    let truthful = run_sdm_with_opt(inst, order, opt.clone())?;
    let found: Vec<Option<Witness>> = (0..inst.num_students())
        .into_par_iter()
        .map(|i| -> Result<Option<Witness>> {
            let got = truthful.allocation.school_of(i);
            for report in &reports {
                if *report == inst.student(i).prefs {
                    continue;
                }
                let lied = inst.with_prefs(i, report.clone())?;
                let out = run_sdm_with_opt(&lied, order, opt.clone())?;
                let s = out.allocation.school_of(i);
                if inst.rank(i, s) < inst.rank(i, got) {
                    return Ok(Some(Witness::Misreport {
                        student: i,
                        report: report.clone(),
                        truthful_school: got,
                        misreport_school: s,
                    }));
                }
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    Ok(AuditReport::from_witness("strategyproof", found.into_iter().flatten().next()))
}

/// No misreport gives a student a row different from, and stochastically
/// dominating, her truthful probabilistic serial row.
pub fn check_weak_sp(inst: &Instance) -> Result<AuditReport> {
    let reports = misreports(inst)?;
    let opt = compute_opt(inst)?;
    let truthful = run_gps_with_opt(inst, opt.clone())?.x;
    let found: Vec<Option<Witness>> = (0..inst.num_students())
        .into_par_iter()
        .map(|i| -> Result<Option<Witness>> {
            let pref = inst.ranking(i);
            let own = truthful.row(i);
            for report in &reports {
                if *report == inst.student(i).prefs {
                    continue;
                }
                let lied = inst.with_prefs(i, report.clone())?;
                let x = run_gps_with_opt(&lied, opt.clone())?.x;
                let row = x.row(i);
                if row != own && sd_dominates(row, own, &pref) {
                    return Ok(Some(Witness::DominatingMisreport {
                        student: i,
                        report: report.clone(),
                        truthful: own.to_vec(),
                        misreport: row.to_vec(),
                    }));
                }
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    Ok(AuditReport::from_witness("weak-strategyproof", found.into_iter().flatten().next()))
}

/// Allowed gap between empirical frequencies over `n` runs.
pub fn symmetry_tolerance(n: usize) -> f64 {
    let n = n.max(1) as f64;
    4.0 * (n.ln() / n).sqrt()
}

/// Students of the same type and the same report should be placed at each
/// school equally often under uniformly random orders.
pub fn check_rsd_symmetry(inst: &Instance, n_seeds: usize) -> Result<AuditReport> {
    let n = inst.num_students();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|&(a, b)| inst.student(a).ty == inst.student(b).ty && inst.student(a).prefs == inst.student(b).prefs)
        .collect();
    if pairs.is_empty() || n_seeds == 0 {
        return Ok(AuditReport::from_witness("rsd-symmetry", None));
    }
    let opt = compute_opt(inst)?;
    let outcomes: Vec<Allocation> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|seed| run_sdm_with_opt(inst, &random_order(n, seed), opt.clone()).map(|r| r.allocation))
        .collect::<Result<_>>()?;
    let mut counts = vec![vec![0usize; inst.num_columns()]; n];
    for alloc in &outcomes {
        for (i, &s) in alloc.0.iter().enumerate() {
            counts[i][s] += 1;
        }
    }
    let tolerance = symmetry_tolerance(n_seeds);
    let mut worst: Option<Witness> = None;
    let mut worst_gap = 0.0;
    for &(a, b) in &pairs {
        for s in 0..inst.num_columns() {
            let gap = counts[a][s].abs_diff(counts[b][s]) as f64 / n_seeds as f64;
            if gap > tolerance && gap > worst_gap {
                worst_gap = gap;
                worst = Some(Witness::Asymmetry { first: a, second: b, school: s, gap, tolerance });
            }
        }
    }
    Ok(AuditReport::from_witness("rsd-symmetry", worst))
}

/// Guarantees of a completed serial-dictatorship run: the outcome respects
/// the adjusted quotas, seats at least OPT students, every per-cell
/// adjustment is at most one in magnitude and every aggregated adjustment is
/// at most the number of types.
pub fn check_sdm_guarantees(inst: &Instance, result: &SdmResult) -> Result<AuditReport> {
    let fail = |detail: String| Ok(AuditReport::from_witness("sdm-guarantees", Some(Witness::Guarantee { detail })));
    let y = result.allocation.type_profile(inst);
    if y != result.y {
        return fail("allocation does not match the final type-assignment".into());
    }
    let report = check_feasible(&y, &result.adjusted_quotas(inst), inst)?;
    if let Some(v) = report.violations.first() {
        return fail(format!(
            "constraint {} misses its adjusted quota by {}",
            v.constraint,
            rational::to_text(&v.magnitude)
        ));
    }
    if rational::int(result.allocation.regular_count(inst) as i64) < result.opt {
        return fail(format!(
            "{} students seated, OPT is {}",
            result.allocation.regular_count(inst),
            rational::to_text(&result.opt)
        ));
    }
    let one = rational::one();
    if let Some(((t, s), v)) = result.delta.iter().find(|(_, v)| rational::abs(v) > one) {
        return fail(format!("adjustment at ({t}, {s}) is {}", rational::to_text(v)));
    }
    let limit = rational::int(inst.num_types() as i64);
    for (k, c) in inst.constraints().iter().enumerate() {
        let shift = rational::sum(c.types.iter().map(|&t| &result.delta[(t, c.school)]));
        if rational::abs(&shift) > limit {
            return fail(format!("constraint {k} is shifted by {}", rational::to_text(&shift)));
        }
    }
    Ok(AuditReport::from_witness("sdm-guarantees", None))
}

/// A fractional outcome is a feasible, allocatively efficient point of
/// the student-level relaxation: unit rows, every original quota met and
/// exactly OPT mass at regular schools.
pub fn check_fractional_optimality(x: &StudentAssignment, inst: &Instance, opt: &Rational) -> Result<AuditReport> {
    check_rows(x, inst)?;
    let fail = |detail: String| Ok(AuditReport::from_witness("fractional-optimality", Some(Witness::Guarantee { detail })));
    if !x.is_nonnegative() || !x.rows_sum_to_one() {
        return fail("some row is negative or does not sum to one".into());
    }
    let report = check_feasible(&crate::model::type_profile(x, inst)?, &Quotas::original(inst), inst)?;
    if let Some(v) = report.violations.first() {
        return fail(format!("constraint {} is missed by {}", v.constraint, rational::to_text(&v.magnitude)));
    }
    if x.regular_total() != *opt {
        return fail(format!(
            "regular mass {} differs from OPT {}",
            rational::to_text(&x.regular_total()),
            rational::to_text(opt)
        ));
    }
    Ok(AuditReport::from_witness("fractional-optimality", None))
}
