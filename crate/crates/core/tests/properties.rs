use std::cell::{Cell, RefCell};

use proptest::prelude::*;

use quotamatch::flows::{integral_opt_laminar, integral_point_in_polytope, is_laminar};
use quotamatch::generate::{gen_instance, ConstraintStyle, GenParams};
use quotamatch::gps::{lp3, run_gps};
use quotamatch::lottery::{build_polytope, decompose};
use quotamatch::lp::{self, LpOutcome, LpProblem, Relation, Sense};
use quotamatch::model::StudentAssignment;
use quotamatch::rational::{frac, int, one, zero};
use quotamatch::sdm::{random_order, run_sdm, SdmState};
use quotamatch::{check_feasible, compute_opt, type_profile, Instance, Matrix, Quotas, Rational, TypeAssignment};

fn instance(max_students: usize, max_schools: usize, styles: &'static [ConstraintStyle]) -> impl Strategy<Value = Instance> {
    (any::<u64>(), 1..=max_students, 1..=max_schools, 1usize..=4, 0..styles.len(), 0u8..=100).prop_map(
        move |(seed, n_students, n_schools, n_types, style, tightness)| {
            let params = GenParams { seed, n_students, n_schools, n_types, style: styles[style], tightness };
            gen_instance(&params).expect("generator output")
        },
    )
}

fn any_instance(max_students: usize) -> impl Strategy<Value = Instance> {
    instance(max_students, 3, &ConstraintStyle::ALL)
}

/// Same instance with fresh ids, schools and types declared in reverse and
/// students listed in `order`; `twin` appends a copy of student 0.
fn rebuild(inst: &Instance, order: &[usize], twin: bool) -> Instance {
    let school = |s: usize| if s == inst.outside() { "out".to_string() } else { format!("x{s}") };
    let ty = |t: usize| format!("u{t}");
    let mut b = Instance::builder().outside("out");
    for s in (0..inst.num_schools()).rev() {
        b = b.school(school(s));
    }
    for t in (0..inst.num_types()).rev() {
        b = b.ty(ty(t));
    }
    for c in inst.constraints() {
        let types: Vec<String> = c.types.iter().map(|&t| ty(t)).collect();
        let types: Vec<&str> = types.iter().map(String::as_str).collect();
        b = b.constraint(&school(c.school), &types, c.lower.clone(), c.upper.clone());
    }
    let add = |b: quotamatch::InstanceBuilder, i: usize, id: String| {
        let st = inst.student(i);
        let prefs: Vec<String> = st.prefs.iter().map(|&s| school(s)).collect();
        let prefs: Vec<&str> = prefs.iter().map(String::as_str).collect();
        b.student(&id, &ty(st.ty), &prefs)
    };
    for &i in order {
        b = add(b, i, format!("p{i}"));
    }
    if twin {
        b = add(b, 0, "twin".into());
    }
    b.build().expect("rebuilt instance is valid")
}

fn small_fraction() -> impl Strategy<Value = Rational> {
    (0i64..=6, 1i64..=4).prop_map(|(p, q)| frac(p, q))
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(prop::collection::vec(small_fraction(), cols), rows)
        .prop_map(|rows| Matrix::from_rows(rows).unwrap())
}

fn instance_with_matrices() -> impl Strategy<Value = (Instance, Matrix, Matrix)> {
    any_instance(6).prop_flat_map(|inst| {
        let (n, m) = (inst.num_students(), inst.num_columns());
        (Just(inst), matrix(n, m), matrix(n, m))
    })
}

/// Replays serial dictatorship one mutation at a time, calling
/// `before_update` with `(state, j, s, rho)` ahead of each (j, s)-update and
/// `after` with the state after every mutation.
fn replay(
    inst: &Instance,
    order: &[usize],
    mut before_update: impl FnMut(&SdmState, usize, usize, &Rational),
    mut after: impl FnMut(&SdmState),
) -> SdmState {
    let mut st = SdmState::new(inst, compute_opt(inst).unwrap());
    after(&st);
    for &i in order {
        st.assignment_step(inst, i).unwrap();
        after(&st);
        'resolve: loop {
            let pending: Vec<_> = st.partials().iter().map(|p| (p.student, p.school, p.remainder.clone())).collect();
            for (j, sj, r) in pending {
                let t = inst.student(j).ty;
                for s in (0..inst.num_columns()).filter(|&s| s != sj) {
                    let f = st.f_value(inst, t, s).unwrap();
                    if f > zero() && f < one() {
                        before_update(&st, j, s, &f.clone().min(r));
                        st.apply_js_updates(inst, j, s).unwrap();
                        after(&st);
                        continue 'resolve;
                    }
                }
            }
            break;
        }
    }
    st
}

fn all_f(st: &SdmState, inst: &Instance) -> Vec<Rational> {
    (0..inst.num_types())
        .flat_map(|t| (0..inst.num_columns()).map(move |s| (t, s)))
        .map(|(t, s)| st.f_value(inst, t, s).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn type_profile_is_linear((inst, x, z) in instance_with_matrices(), a in small_fraction(), b in small_fraction()) {
        let combo = StudentAssignment(x.scaled(&a).add(&z.scaled(&b)).unwrap());
        let lhs = type_profile(&combo, &inst).unwrap();
        let px = type_profile(&StudentAssignment(x), &inst).unwrap();
        let pz = type_profile(&StudentAssignment(z), &inst).unwrap();
        prop_assert_eq!(lhs.0, px.0.scaled(&a).add(&pz.0.scaled(&b)).unwrap());
    }

    #[test]
    fn feasibility_report_matches_recount((inst, x, _) in instance_with_matrices()) {
        let y = type_profile(&StudentAssignment(x), &inst).unwrap();
        let report = check_feasible(&y, &Quotas::original(&inst), &inst).unwrap();
        let mut expected = Vec::new();
        for (k, c) in inst.constraints().iter().enumerate() {
            let sum: Rational = c.types.iter().map(|&t| y[(t, c.school)].clone()).sum();
            if sum < c.lower {
                expected.push((k, &c.lower - &sum));
            } else if sum > c.upper {
                expected.push((k, &sum - &c.upper));
            }
        }
        let got: Vec<_> = report.violations.iter().map(|v| (v.constraint, v.magnitude.clone())).collect();
        prop_assert_eq!(report.is_feasible(), expected.is_empty());
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn opt_ignores_names_and_order(inst in any_instance(7), seed in any::<u64>()) {
        let order = random_order(inst.num_students(), seed);
        prop_assert_eq!(compute_opt(&rebuild(&inst, &order, false)).unwrap(), compute_opt(&inst).unwrap());
    }

    #[test]
    fn opt_equals_student_level_optimum(inst in any_instance(6)) {
        let (p, _) = lp3(&inst);
        let value = lp::solve(&p).unwrap().value().cloned();
        prop_assert_eq!(value, Some(compute_opt(&inst).unwrap()));
    }

    #[test]
    fn sdm_is_deterministic(inst in any_instance(6), seed in any::<u64>()) {
        let order = random_order(inst.num_students(), seed);
        prop_assert_eq!(run_sdm(&inst, &order).unwrap(), run_sdm(&inst, &order).unwrap());
    }

    #[test]
    fn flow_matches_opt_on_laminar(inst in instance(8, 4, &[ConstraintStyle::Laminar])) {
        prop_assert!(is_laminar(&inst));
        let alloc = integral_opt_laminar(&inst).unwrap();
        prop_assert_eq!(int(alloc.regular_count(&inst) as i64), compute_opt(&inst).unwrap());
        prop_assert!(check_feasible(&alloc.type_profile(&inst), &Quotas::original(&inst), &inst).unwrap().is_feasible());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    /// Menu values never rise, except across a resolution through the
    /// outside option (see `resolving_through_outside_can_raise_a_menu_value`).
    #[test]
    fn menu_values_never_increase(inst in any_instance(5), seed in any::<u64>()) {
        let order = random_order(inst.num_students(), seed);
        let via_outside = Cell::new(false);
        let mut last: Option<Vec<Rational>> = None;
        let mut increase: Option<String> = None;
        let mut step = 0;
        replay(&inst, &order, |_, _, s, _| via_outside.set(s == inst.outside()), |st| {
            let now = all_f(st, &inst);
            if let (Some(prev), false) = (&last, via_outside.replace(false)) {
                if let Some(k) = (0..now.len()).find(|&k| now[k] > prev[k]) {
                    let cols = inst.num_columns();
                    increase.get_or_insert(format!(
                        "f({}, {}) rose from {} to {} at mutation {step}",
                        inst.types()[k / cols].id, inst.school_id(k % cols), prev[k], now[k]
                    ));
                }
            }
            step += 1;
            last = Some(now);
        });
        prop_assert!(increase.is_none(), "{}", increase.unwrap_or_default());
    }

    #[test]
    fn placed_minus_delta_never_decreases(inst in any_instance(6), seed in any::<u64>()) {
        let order = random_order(inst.num_students(), seed);
        let mut last: Option<Matrix> = None;
        let mut ok = true;
        replay(&inst, &order, |_, _, _, _| {}, |st| {
            let now = st.y().0.add(&st.delta().scaled(&int(-1))).unwrap();
            if let Some(prev) = &last {
                ok &= now.iter().all(|(cell, v)| *v >= prev[cell]);
            }
            last = Some(now);
        });
        prop_assert!(ok);
    }

    /// An optimal menu-LP point for (t_j, s) remains feasible after the
    /// (j, s)-update once rho is taken off its (t_j, s) entry.
    #[test]
    fn update_transfers_menu_solutions(inst in any_instance(6), seed in any::<u64>()) {
        let order = random_order(inst.num_students(), seed);
        let pending: RefCell<Option<Vec<Rational>>> = RefCell::new(None);
        let mut failures = 0;
        let mut transfers = 0;
        replay(
            &inst,
            &order,
            |st, j, s, rho| {
                let t = inst.student(j).ty;
                let (p, x) = st.menu_lp(&inst, t, s);
                let LpOutcome::Optimal { mut point, .. } = lp::solve(&p).unwrap() else { panic!("menu LP not optimal") };
                point[x.var(t, s).0] -= rho;
                *pending.borrow_mut() = Some(point);
            },
            |st| {
                if let Some(point) = pending.borrow_mut().take() {
                    transfers += 1;
                    let (p, _) = st.menu_lp(&inst, 0, 0);
                    if !p.is_feasible_point(&point) {
                        failures += 1;
                    }
                }
            },
        );
        prop_assert_eq!(failures, 0, "{} of {} transfers infeasible", failures, transfers);
    }

    #[test]
    fn gps_treats_twins_alike(inst in any_instance(5)) {
        let order: Vec<usize> = (0..inst.num_students()).collect();
        let with_twin = rebuild(&inst, &order, true);
        let res = run_gps(&with_twin).unwrap();
        let (a, b) = (with_twin.student_index("p0").unwrap(), with_twin.student_index("twin").unwrap());
        prop_assert_eq!(res.x.row(a), res.x.row(b));
    }

    #[test]
    fn lottery_reproduces_gps_outcome(inst in any_instance(6)) {
        let res = run_gps(&inst).unwrap();
        let lot = decompose(&res.x, &inst, &res.opt).unwrap();
        let poly = build_polytope(&res.x, &inst).unwrap();
        prop_assert_eq!(lot.total_weight(), one());
        prop_assert_eq!(lot.expectation(&inst), res.x);
        for e in &lot.entries {
            prop_assert!(e.weight > zero());
            prop_assert!(poly.contains(&inst, &e.allocation.to_matrix(&inst)));
        }
    }

    #[test]
    fn polytope_points_are_members(inst in any_instance(6)) {
        let res = run_gps(&inst).unwrap();
        let poly = build_polytope(&res.x, &inst).unwrap();
        let v = integral_point_in_polytope(&inst, &poly, |i, s| res.x[(i, s)] > zero()).unwrap();
        prop_assert!(poly.contains(&inst, &v.to_matrix(&inst)));
        prop_assert!(v.0.iter().enumerate().all(|(i, &s)| res.x[(i, s)] > zero()));
    }
}

fn lp_strategy() -> impl Strategy<Value = LpProblem> {
    (1usize..=4, 1usize..=8).prop_flat_map(|(n, m)| {
        let row = (prop::collection::vec(-3i64..=3, n), 0usize..3, -2i64..=8);
        (prop::collection::vec(row, m), prop::collection::vec(-3i64..=3, n), any::<bool>(), any::<bool>()).prop_map(
            move |(rows, c, maximize, free_first)| {
                let sense = if maximize { Sense::Maximize } else { Sense::Minimize };
                let mut p = LpProblem::new(sense);
                let vars: Vec<_> = (0..n)
                    .map(|j| {
                        let kind = if free_first && j == 0 { lp::VarKind::Free } else { lp::VarKind::NonNegative };
                        p.add_var(format!("x{j}"), kind)
                    })
                    .collect();
                for (a, rel, b) in rows {
                    let rel = [Relation::Le, Relation::Ge, Relation::Eq][rel];
                    p.add_constraint(vars.iter().copied().zip(a.into_iter().map(int)).collect(), rel, int(b));
                }
                p.set_objective(sense, vars.iter().copied().zip(c.into_iter().map(int)).collect());
                p
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn solve_is_deterministic_and_exact(p in lp_strategy()) {
        let first = lp::solve(&p).unwrap();
        prop_assert_eq!(&first, &lp::solve(&p).unwrap());
        prop_assert_eq!(lp::feasible(&p).unwrap(), first != LpOutcome::Infeasible);
        if let LpOutcome::Optimal { value, point } = first {
            prop_assert!(p.is_feasible_point(&point));
            prop_assert_eq!(p.objective_value(&point), value);
        }
    }
}

/// The efficiency row of the menu LP counts regular schools only, so moving
/// a partial student's remainder from the outside option to her regular
/// school relaxes it. Here the t2 student may no longer be left unseated.
#[test]
fn resolving_through_outside_can_raise_a_menu_value() {
    let inst = Instance::builder()
        .schools(["s1", "s2", "s3"])
        .ty("t1")
        .ty("t2")
        .ty("t3")
        .constraint("s1", &["t1", "t3"], int(0), frac(1, 2))
        .constraint("s2", &["t1", "t3"], int(0), int(0))
        .constraint("s3", &["t1", "t3"], int(0), int(1))
        .student("i1", "t1", &["s3", "s1", "s2"])
        .student("i2", "t3", &["s1", "s3", "s2"])
        .student("i3", "t2", &["s1", "s2", "s3"])
        .build()
        .unwrap();
    let (t2, phi) = (inst.type_index("t2").unwrap(), inst.outside());
    let mut st = SdmState::new(&inst, compute_opt(&inst).unwrap());
    assert_eq!(*st.opt(), frac(5, 2));
    st.assignment_step(&inst, 0).unwrap();
    st.assignment_step(&inst, 1).unwrap();
    assert_eq!(st.partials().len(), 1);
    assert_eq!(st.f_value(&inst, t2, phi).unwrap(), zero());

    let update = st.apply_js_updates(&inst, 1, phi).unwrap();
    assert!(update.resolved);
    assert_eq!(st.f_value(&inst, t2, phi).unwrap(), frac(1, 2));
}

#[test]
fn zero_assignment_has_zero_profile() {
    let inst = gen_instance(&GenParams {
        seed: 3,
        n_students: 5,
        n_schools: 2,
        n_types: 3,
        style: ConstraintStyle::Pairs,
        tightness: 50,
    })
    .unwrap();
    let y = type_profile(&StudentAssignment::zeros(&inst), &inst).unwrap();
    assert_eq!(y, TypeAssignment::zeros(&inst));
}
