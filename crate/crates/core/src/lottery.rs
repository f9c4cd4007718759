//! Lotteries over integral allocations implementing a fractional assignment.
//!
//! The rounding polytope keeps every student's row summing to one and every
//! (type, school) aggregate, plus the total outside mass, between the floor
//! and ceiling of its value in the source assignment. Its vertices are
//! integral, and each of them violates a quota by at most the number of
//! types while still seating at least `floor(OPT)` students.

use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows;
use crate::model::{check_feasible, Allocation, Instance, Matrix, Quotas, StudentAssignment};
use crate::rational::{self, Rational};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundingPolytope {
    /// `[type][regular school]` as `(lower, upper)`.
    pub type_bounds: Vec<Vec<(i64, i64)>>,
    /// Bounds on the total outside mass.
    pub outside_bounds: (i64, i64),
}

fn floor_ceil(v: &Rational) -> (i64, i64) {
    let lo = rational::floor_int(v).to_i64().expect("aggregate fits in i64");
    let hi = rational::ceil_int(v).to_i64().expect("aggregate fits in i64");
    (lo, hi)
}

/// Aggregates of `x` in polytope coordinates: `[type][regular school]` and
/// the outside total.
fn aggregates(inst: &Instance, x: &Matrix) -> (Vec<Vec<Rational>>, Rational) {
    let mut cells = vec![vec![Rational::zero(); inst.num_schools()]; inst.num_types()];
    let mut outside = Rational::zero();
    for ((i, s), v) in x.iter() {
        if s == inst.outside() {
            outside += v;
        } else {
            cells[inst.student(i).ty][s] += v;
        }
    }
    (cells, outside)
}

impl RoundingPolytope {
    pub fn contains(&self, inst: &Instance, x: &Matrix) -> bool {
        if x.rows() != inst.num_students() || x.cols() != inst.num_columns() {
            return false;
        }
        if !x.is_nonnegative() || !(0..x.rows()).all(|i| x.row_sum(i) == rational::one()) {
            return false;
        }
        let within = |v: &Rational, (lo, hi): (i64, i64)| *v >= rational::int(lo) && *v <= rational::int(hi);
        let (cells, outside) = aggregates(inst, x);
        within(&outside, self.outside_bounds)
            && cells
                .iter()
                .zip(&self.type_bounds)
                .all(|(row, bounds)| row.iter().zip(bounds).all(|(v, &b)| within(v, b)))
    }
}

pub fn build_polytope(x: &StudentAssignment, inst: &Instance) -> Result<RoundingPolytope> {
    if x.rows() != inst.num_students() || x.cols() != inst.num_columns() {
        return Err(Error::Structure("assignment shape does not match the instance".into()));
    }
    if !x.is_nonnegative() || !x.rows_sum_to_one() {
        return Err(Error::Contract("assignment rows must be nonnegative and sum to one".into()));
    }
    let (cells, outside) = aggregates(inst, x);
    let poly = RoundingPolytope {
        type_bounds: cells.iter().map(|row| row.iter().map(floor_ceil).collect()).collect(),
        outside_bounds: floor_ceil(&outside),
    };
    debug_assert!(poly.contains(inst, x));
    Ok(poly)
}

/// Quota violations of an integral allocation against the original quotas.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApproxFeasibilityCert {
    /// Per constraint, in instance order; zero when satisfied.
    #[serde(with = "rational::serde_text_vec")]
    pub violations: Vec<Rational>,
    /// Allowed violation: the number of types.
    pub limit: usize,
    pub regular_assigned: usize,
    /// `floor(OPT)`.
    pub required: i64,
}

impl ApproxFeasibilityCert {
    pub fn max_violation(&self) -> Rational {
        self.violations.iter().max().cloned().unwrap_or_else(Rational::zero)
    }

    pub fn holds(&self) -> bool {
        self.max_violation() <= rational::int(self.limit as i64) && self.regular_assigned as i64 >= self.required
    }
}

pub fn certify_approx_feasible(alloc: &Allocation, inst: &Instance, opt: &Rational) -> Result<ApproxFeasibilityCert> {
    if alloc.0.len() != inst.num_students() || alloc.0.iter().any(|&s| s >= inst.num_columns()) {
        return Err(Error::Contract("allocation must assign every student one school".into()));
    }
    let report = check_feasible(&alloc.type_profile(inst), &Quotas::original(inst), inst)?;
    let mut violations = vec![Rational::zero(); inst.constraints().len()];
    for v in report.violations {
        violations[v.constraint] = v.magnitude;
    }
    let cert = ApproxFeasibilityCert {
        violations,
        limit: inst.num_types(),
        regular_assigned: alloc.regular_count(inst),
        required: rational::floor_int(opt).to_i64().expect("OPT fits in i64"),
    };
    if cert.holds() {
        Ok(cert)
    } else {
        Err(Error::ApproxFeasibilityViolated(Box::new(cert)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LotteryEntry {
    #[serde(with = "rational::serde_text")]
    pub weight: Rational,
    pub allocation: Allocation,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lottery {
    pub entries: Vec<LotteryEntry>,
}

impl Lottery {
    pub fn total_weight(&self) -> Rational {
        rational::sum(self.entries.iter().map(|e| &e.weight))
    }

    /// `sum_k weight_k * indicator(allocation_k)`.
    pub fn expectation(&self, inst: &Instance) -> StudentAssignment {
        let mut x = StudentAssignment::zeros(inst);
        for e in &self.entries {
            for (i, &s) in e.allocation.0.iter().enumerate() {
                x[(i, s)] += &e.weight;
            }
        }
        x
    }

    /// Draws one allocation with probability equal to its weight.
    pub fn sample(&self, seed: u64) -> Option<&Allocation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = num_bigint::BigInt::from(1u8) << 64;
        let u = Rational::new(rng.gen::<u64>().into(), scale);
        let mut acc = Rational::zero();
        for e in &self.entries {
            acc += &e.weight;
            if u < acc {
                return Some(&e.allocation);
            }
        }
        self.entries.last().map(|e| &e.allocation)
    }
}

fn as_allocation(inst: &Instance, x: &Matrix) -> Allocation {
    Allocation(
        (0..inst.num_students())
            .map(|i| (0..inst.num_columns()).find(|&s| x[(i, s)] == rational::one()).expect("integral row"))
            .collect(),
    )
}

/// Writes `x` as a lottery over vertices of its rounding polytope.
///
/// Each round picks an integral point of the polytope inside the support of
/// the residual, with every aggregate the residual already has at an
/// integer pinned to that integer. The residual then moves away from that
/// point as far as the polytope allows, which zeroes a cell or pins another
/// aggregate, so the number of rounds is at most one more than the number of
/// fractional cells.
pub fn decompose(x: &StudentAssignment, inst: &Instance, opt: &Rational) -> Result<Lottery> {
    let poly = build_polytope(x, inst)?;
    let fractional = x.iter().filter(|(_, v)| !v.is_integer()).count();
    let mut residual: Matrix = x.0.clone();
    let mut remaining = rational::one();
    let mut lottery = Lottery::default();

    for _round in 0..=fractional {
        if residual.is_integral() {
            lottery.entries.push(LotteryEntry { weight: remaining, allocation: as_allocation(inst, &residual) });
            return finish(lottery, x, inst, opt, &poly);
        }
        let (cells, outside) = aggregates(inst, &residual);
        let pin = |v: &Rational, b: (i64, i64)| match rational::as_i64(v) {
            Some(k) => (k, k),
            None => b,
        };
        let face = RoundingPolytope {
            type_bounds: cells
                .iter()
                .zip(&poly.type_bounds)
                .map(|(row, bounds)| row.iter().zip(bounds).map(|(v, &b)| pin(v, b)).collect())
                .collect(),
            outside_bounds: pin(&outside, poly.outside_bounds),
        };
        let v = flows::integral_point_in_polytope(inst, &face, |i, s| residual[(i, s)].is_positive())?;

        let vm = v.to_matrix(inst);
        let (v_cells, v_outside) = aggregates(inst, &vm);
        let mut step: Option<Rational> = None;
        let mut tighten = |cand: Rational| {
            if step.as_ref().is_none_or(|cur| cand < *cur) {
                step = Some(cand);
            }
        };
        for (i, &s) in v.0.iter().enumerate() {
            tighten(residual[(i, s)].clone());
        }
        let mut slack = |a: &Rational, b: &Rational, (lo, hi): (i64, i64)| {
            let (lo, hi) = (rational::int(lo), rational::int(hi));
            if *b > lo {
                tighten((a - &lo) / (b - &lo));
            }
            if hi > *b {
                tighten((&hi - a) / (&hi - b));
            }
        };
        for t in 0..inst.num_types() {
            for s in 0..inst.num_schools() {
                slack(&cells[t][s], &v_cells[t][s], poly.type_bounds[t][s]);
            }
        }
        slack(&outside, &v_outside, poly.outside_bounds);

        let lambda = step.expect("v assigns at least one cell");
        if !lambda.is_positive() || lambda >= rational::one() {
            return Err(Error::Invariant(format!("peeling step {} out of range", rational::to_text(&lambda))));
        }
        lottery.entries.push(LotteryEntry { weight: &remaining * &lambda, allocation: v });
        let keep = rational::one() - &lambda;
        residual = residual.add(&vm.scaled(&-&lambda))?.scaled(&(rational::one() / &keep));
        remaining *= keep;
        if !poly.contains(inst, &residual) {
            return Err(Error::Invariant("peeling left the rounding polytope".into()));
        }
    }
    Err(Error::Invariant("decomposition exceeded its round bound".into()))
}

fn finish(lottery: Lottery, x: &StudentAssignment, inst: &Instance, opt: &Rational, poly: &RoundingPolytope) -> Result<Lottery> {
    if lottery.total_weight() != rational::one() {
        return Err(Error::Invariant("lottery weights do not sum to one".into()));
    }
    if lottery.expectation(inst) != *x {
        return Err(Error::Invariant("lottery expectation differs from the assignment".into()));
    }
    for e in &lottery.entries {
        if !poly.contains(inst, &e.allocation.to_matrix(inst)) {
            return Err(Error::Invariant("lottery allocation outside the rounding polytope".into()));
        }
        match certify_approx_feasible(&e.allocation, inst, opt) {
            Ok(_) => {}
            Err(Error::ApproxFeasibilityViolated(cert)) => {
                return Err(Error::Invariant(format!(
                    "lottery allocation violates a quota by {} or seats {} < {}",
                    rational::to_text(&cert.max_violation()),
                    cert.regular_assigned,
                    cert.required
                )))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(lottery)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::compute_opt;
    use crate::rational::{frac, int};

    fn half_assignment(inst: &Instance) -> StudentAssignment {
        let mut x = StudentAssignment::zeros(inst);
        for i in 0..inst.num_students() {
            for s in 0..inst.num_schools() {
                x[(i, s)] = frac(1, 2);
            }
        }
        x
    }

    #[test]
    fn integral_polytope_is_a_point() {
        let inst = fixtures::simple_example();
        let alloc = Allocation(vec![0, 1, 2]);
        let poly = build_polytope(&alloc.to_matrix(&inst), &inst).unwrap();
        assert_eq!(poly.type_bounds, vec![vec![(1, 1), (0, 0)], vec![(0, 0), (1, 1)], vec![(0, 0), (0, 0)]]);
        assert_eq!(poly.outside_bounds, (1, 1));
        let lottery = decompose(&alloc.to_matrix(&inst), &inst, &int(2)).unwrap();
        assert_eq!(lottery.entries, vec![LotteryEntry { weight: int(1), allocation: alloc }]);
    }

    #[test]
    fn half_assignment_bounds() {
        let inst = fixtures::simple_example();
        let poly = build_polytope(&half_assignment(&inst), &inst).unwrap();
        assert!(poly.type_bounds.iter().flatten().all(|&b| b == (0, 1)));
        assert_eq!(poly.outside_bounds, (0, 0));
    }

    #[test]
    fn three_halves_rounds_both_ways() {
        let inst = Instance::builder()
            .schools(["a", "b"])
            .ty("t")
            .student("x", "t", &["a", "b"])
            .student("y", "t", &["a", "b"])
            .student("z", "t", &["a", "b"])
            .build()
            .unwrap();
        let mut x = StudentAssignment::zeros(&inst);
        for i in 0..3 {
            x[(i, 0)] = frac(1, 2);
            x[(i, 1)] = frac(1, 2);
        }
        let poly = build_polytope(&x, &inst).unwrap();
        assert_eq!(poly.type_bounds[0], vec![(1, 2), (1, 2)]);
    }

    #[test]
    fn rejects_bad_rows() {
        let inst = fixtures::simple_example();
        assert!(matches!(build_polytope(&StudentAssignment::zeros(&inst), &inst), Err(Error::Contract(_))));
    }

    #[test]
    fn simple_example_decomposition() {
        let inst = fixtures::simple_example();
        let x = half_assignment(&inst);
        let opt = compute_opt(&inst).unwrap();
        let lottery = decompose(&x, &inst, &opt).unwrap();
        assert_eq!(lottery.total_weight(), int(1));
        assert_eq!(lottery.expectation(&inst), x);
        assert!(lottery.entries.iter().all(|e| e.weight.is_positive()));
        for e in &lottery.entries {
            let cert = certify_approx_feasible(&e.allocation, &inst, &opt).unwrap();
            assert_eq!(cert.regular_assigned, 3);
        }
    }

    #[test]
    fn thirds_over_three_schools() {
        let inst = Instance::builder()
            .schools(["a", "b", "c"])
            .ty("t")
            .student("x", "t", &["a", "b", "c"])
            .build()
            .unwrap();
        let mut x = StudentAssignment::zeros(&inst);
        for s in 0..3 {
            x[(0, s)] = frac(1, 3);
        }
        let lottery = decompose(&x, &inst, &int(1)).unwrap();
        assert_eq!(lottery.entries.len(), 3);
        assert!(lottery.entries.iter().all(|e| e.weight == frac(1, 3)));
        assert_eq!(lottery.expectation(&inst), x);
    }

    #[test]
    fn certificate_counts_lower_bound_shortfall() {
        let inst = fixtures::simple_example();
        let cert = certify_approx_feasible(&Allocation(vec![0, 0, 0]), &inst, &int(3)).unwrap();
        // s1: {t1,t2} holds 2, {t2,t3} 2, {t3,t1} 2; s2 lower bounds miss by 1.
        assert_eq!(cert.violations, vec![int(0), int(0), int(0), int(1), int(1), int(1)]);
        assert_eq!(cert.limit, 3);
    }

    #[test]
    fn certificate_rejects_short_count() {
        let inst = fixtures::simple_example();
        let err = certify_approx_feasible(&Allocation(vec![0, 2, 2]), &inst, &int(3)).unwrap_err();
        match err {
            Error::ApproxFeasibilityViolated(cert) => assert_eq!(cert.regular_assigned, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sampling_is_deterministic_and_in_support() {
        let inst = fixtures::simple_example();
        let lottery = decompose(&half_assignment(&inst), &inst, &int(3)).unwrap();
        let a = lottery.sample(7).unwrap();
        assert_eq!(Some(a), lottery.sample(7));
        assert!(lottery.entries.iter().any(|e| &e.allocation == a));
    }
}
