//! Seeded random instances.
//!
//! Quotas are drawn around the aggregates of a hidden reference assignment,
//! so the relaxation is feasible by construction; the retry loop only
//! guards the contract.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{compute_opt, Instance};
use crate::rational::{self, Rational};

/// Attempts before giving up.
pub const GEN_RETRIES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintStyle {
    /// Constraints on pairs of types.
    Pairs,
    /// Nested or disjoint type sets with integral quotas.
    Laminar,
    /// Arbitrary nonempty type sets.
    RandomSubsets,
}

impl ConstraintStyle {
    pub const ALL: [ConstraintStyle; 3] =
        [ConstraintStyle::Pairs, ConstraintStyle::Laminar, ConstraintStyle::RandomSubsets];
}

impl fmt::Display for ConstraintStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintStyle::Pairs => "pairs",
            ConstraintStyle::Laminar => "laminar",
            ConstraintStyle::RandomSubsets => "random-subsets",
        })
    }
}

impl FromStr for ConstraintStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairs" => Ok(ConstraintStyle::Pairs),
            "laminar" => Ok(ConstraintStyle::Laminar),
            "random-subsets" => Ok(ConstraintStyle::RandomSubsets),
            other => Err(Error::Validation(format!("unknown constraint style {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenParams {
    pub seed: u64,
    pub n_students: usize,
    pub n_schools: usize,
    pub n_types: usize,
    pub style: ConstraintStyle,
    /// Percentage (0..=100) of quota sides pinned to the reference aggregate.
    pub tightness: u8,
}

impl GenParams {
    fn validate(&self) -> Result<()> {
        if self.n_students == 0 || self.n_schools == 0 || self.n_types == 0 {
            return Err(Error::Validation("students, schools and types must all be positive".into()));
        }
        if self.tightness > 100 {
            return Err(Error::Validation(format!("tightness {} is not a percentage", self.tightness)));
        }
        Ok(())
    }
}

/// Deterministic in `params`: the same parameters give the same instance.
pub fn gen_instance(params: &GenParams) -> Result<Instance> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    for _ in 0..GEN_RETRIES {
        let inst = attempt(params, &mut rng)?;
        match compute_opt(&inst) {
            Ok(_) => return Ok(inst),
            Err(Error::InfeasibleInstance) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::GenerationFailed(GEN_RETRIES))
}

fn random_subset(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let size = rng.gen_range(1..=n);
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(rng);
    let mut out = all[..size].to_vec();
    out.sort_unstable();
    out
}

/// Nested splits of a shuffled type list; any two sets are nested or disjoint.
fn laminar_family(rng: &mut ChaCha8Rng, n: usize, want: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut intervals = vec![(0, n)];
    let mut k = 0;
    while k < intervals.len() {
        let (a, b) = intervals[k];
        if b - a >= 2 {
            let cut = rng.gen_range(a + 1..b);
            intervals.push((a, cut));
            intervals.push((cut, b));
        }
        k += 1;
    }
    intervals.shuffle(rng);
    intervals.truncate(want);
    intervals
        .into_iter()
        .map(|(a, b)| {
            let mut set = order[a..b].to_vec();
            set.sort_unstable();
            set
        })
        .collect()
}

fn attempt(p: &GenParams, rng: &mut ChaCha8Rng) -> Result<Instance> {
    let n_types = p.n_types.min(p.n_students);
    let m = p.n_schools;
    let laminar = p.style == ConstraintStyle::Laminar;

    // Every type gets at least one student.
    let mut student_types: Vec<usize> = (0..n_types).collect();
    student_types.extend((n_types..p.n_students).map(|_| rng.gen_range(0..n_types)));
    student_types.shuffle(rng);

    // Reference assignment: each student at one column (m = outside), or,
    // outside the laminar style, split evenly between two columns.
    let half = rational::frac(1, 2);
    let mut reference = vec![vec![Rational::from_integer(0.into()); m + 1]; n_types];
    for &t in &student_types {
        let first = rng.gen_range(0..=m);
        if !laminar && rng.gen_bool(0.3) {
            let second = rng.gen_range(0..=m);
            reference[t][first] += &half;
            reference[t][second] += &half;
        } else {
            reference[t][first] += rational::one();
        }
    }

    let schools: Vec<String> = (1..=m).map(|s| format!("s{s}")).collect();
    let types: Vec<String> = (1..=n_types).map(|t| format!("t{t}")).collect();
    let mut b = Instance::builder().schools(schools.iter().cloned());
    for t in &types {
        b = b.ty(t.clone());
    }

    for (s, school) in schools.iter().enumerate() {
        let want = rng.gen_range(1..=3usize);
        let mut family: Vec<Vec<usize>> = Vec::new();
        match p.style {
            ConstraintStyle::Laminar => family = laminar_family(rng, n_types, want),
            ConstraintStyle::Pairs | ConstraintStyle::RandomSubsets => {
                for _ in 0..want {
                    let set = if p.style == ConstraintStyle::Pairs && n_types >= 2 {
                        let mut pair: Vec<usize> = (0..n_types).collect::<Vec<_>>().choose_multiple(rng, 2).copied().collect();
                        pair.sort_unstable();
                        pair
                    } else {
                        random_subset(rng, n_types)
                    };
                    if !family.contains(&set) {
                        family.push(set);
                    }
                }
            }
        }
        for set in family {
            let aggregate: Rational = set.iter().map(|&t| reference[t][s].clone()).sum();
            let slack = |rng: &mut ChaCha8Rng| -> Rational {
                if rng.gen_range(0..100u8) < p.tightness {
                    return Rational::from_integer(0.into());
                }
                let steps = if laminar { rng.gen_range(1..=2) } else { rng.gen_range(1..=4) };
                if laminar {
                    rational::int(steps)
                } else {
                    rational::frac(steps, 2)
                }
            };
            let lower_slack = slack(rng);
            let upper_slack = slack(rng);
            let zero = Rational::from_integer(0.into());
            let lower = (&aggregate - lower_slack).max(zero);
            let upper = &aggregate + upper_slack;
            let ids: Vec<&str> = set.iter().map(|&t| types[t].as_str()).collect();
            b = b.constraint(school, &ids, lower, upper);
        }
    }

    for (i, &t) in student_types.iter().enumerate() {
        let mut prefs: Vec<&str> = schools.iter().map(String::as_str).collect();
        prefs.shuffle(rng);
        b = b.student(&format!("i{}", i + 1), &types[t], &prefs);
    }
    b.build()
}
