//! Step-by-step traces of the named example instances.

use quotamatch::lp::{self, Relation};
use quotamatch::rational::{frac, int, zero};
use quotamatch::sdm::{run_sdm, SdmState, StepOutcome};
use quotamatch::{compute_opt, fixtures, Instance};

fn ids(inst: &Instance, schools: &[usize]) -> Vec<String> {
    schools.iter().map(|&s| inst.school_id(s).to_string()).collect()
}

fn start(inst: &Instance) -> SdmState {
    SdmState::new(inst, compute_opt(inst).unwrap())
}

fn step(st: &mut SdmState, inst: &Instance, id: &str) -> (StepOutcome, Vec<(String, String)>) {
    let i = inst.student_index(id).unwrap();
    let (outcome, _) = st.assignment_step(inst, i).unwrap();
    let updates = st
        .resolution_step(inst)
        .unwrap()
        .into_iter()
        .map(|u| (inst.student(u.student).id.clone(), inst.school_id(u.school).to_string()))
        .collect();
    (outcome, updates)
}

#[test]
fn simple_example_queries() {
    let inst = fixtures::simple_example();
    let (t1, t3) = (inst.type_index("t1").unwrap(), inst.type_index("t3").unwrap());
    let (s1, s2) = (inst.school_index("s1").unwrap(), inst.school_index("s2").unwrap());
    let mut st = start(&inst);
    assert_eq!(st.f_value(&inst, t1, s1).unwrap(), frac(1, 2));
    // Seating everyone is required, so the outside option is closed.
    assert_eq!(ids(&inst, &st.available_menu(&inst, t1).unwrap()), ["s1", "s2"]);

    let (out, updates) = step(&mut st, &inst, "i");
    assert_eq!(out, StepOutcome::PartiallyAssigned { school: s1, fraction: frac(1, 2) });
    assert_eq!(updates, [("i".to_string(), "s2".to_string())]);
    step(&mut st, &inst, "j");
    assert_eq!(st.f_value(&inst, t3, s2).unwrap(), frac(1, 2));
    let (out, _) = step(&mut st, &inst, "k");
    assert_eq!(out, StepOutcome::PartiallyAssigned { school: s2, fraction: frac(1, 2) });
    assert!(st.partials().is_empty());

    // At termination nothing is left to place: the menu LP admits only zero.
    let (mut p, x) = st.menu_lp(&inst, t1, s1);
    for t in 0..inst.num_types() {
        for s in 0..inst.num_columns() {
            p.add_constraint(vec![(x.var(t, s), int(1))], Relation::Eq, zero());
        }
    }
    assert!(lp::feasible(&p).unwrap());
}

#[test]
fn appendix_steps() {
    let inst = fixtures::appendix_example();
    let t1 = inst.type_index("t1").unwrap();
    let (s1, s2, phi) = (0, 1, inst.outside());
    let mut st = start(&inst);

    let (out, updates) = step(&mut st, &inst, "i1");
    assert_eq!(out, StepOutcome::PartiallyAssigned { school: s1, fraction: frac(1, 2) });
    assert!(updates.is_empty(), "no school is critical for t1 yet");

    let (out, updates) = step(&mut st, &inst, "i2");
    assert_eq!(out, StepOutcome::Assigned(s2));
    assert_eq!(updates, [("i1".to_string(), "s2".to_string())]);

    for (id, critical) in [("i3", "s2"), ("i4", "s1"), ("i5", "s2")] {
        let (_, updates) = step(&mut st, &inst, id);
        assert_eq!(updates, [(id.to_string(), critical.to_string())]);
    }
    assert_eq!(st.f_value(&inst, t1, s1).unwrap(), zero());
    assert_eq!(st.f_value(&inst, t1, s2).unwrap(), zero());
    assert_eq!(st.available_menu(&inst, t1).unwrap(), vec![phi]);

    let (out, _) = step(&mut st, &inst, "i6");
    assert_eq!(out, StepOutcome::Assigned(phi));
    let (out, updates) = step(&mut st, &inst, "i7");
    assert_eq!(out, StepOutcome::PartiallyAssigned { school: s1, fraction: frac(1, 2) });
    assert_eq!(updates, [("i7".to_string(), "phi".to_string())]);
    assert_eq!(st.placement(inst.student_index("i7").unwrap()), Some(s1));
}

#[test]
fn appendix_outcome() {
    let inst = fixtures::appendix_example();
    let res = run_sdm(&inst, &(0..7).collect::<Vec<_>>()).unwrap();
    assert_eq!(ids(&inst, &res.allocation.0), ["s1", "s2", "s1", "s2", "s1", "phi", "s1"]);
    assert_eq!(res.opt, frac(11, 2));
    assert_eq!(res.allocation.regular_count(&inst), 6);
    assert_eq!(res.partial_assignments(), 5);
}

#[test]
fn appendix_twins_are_treated_alike() {
    let inst = fixtures::appendix_example();
    let (a, b) = (inst.student(0), inst.student(5));
    assert_eq!((a.ty, &a.prefs), (b.ty, &b.prefs));
    let report = quotamatch::audit::check_rsd_symmetry(&inst, 400).unwrap();
    assert!(report.holds(), "{:?}", report.witness);
}
