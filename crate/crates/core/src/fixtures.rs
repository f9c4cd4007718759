//! Small named instances used by golden tests, benches and the CLI fixtures.

use crate::model::Instance;
use crate::rational::int;

/// Two schools, three students of distinct types; every pair of types must
/// have between 1 and 2 students at each school. The only feasible
/// fractional assignment puts every student half at each school.
pub fn simple_example() -> Instance {
    let mut b = Instance::builder().schools(["s1", "s2"]).ty("t1").ty("t2").ty("t3");
    for s in ["s1", "s2"] {
        for pair in [["t1", "t2"], ["t2", "t3"], ["t3", "t1"]] {
            b = b.constraint(s, &pair, int(1), int(2));
        }
    }
    b.student("i", "t1", &["s1", "s2"])
        .student("j", "t2", &["s1", "s2"])
        .student("k", "t3", &["s2", "s1"])
        .build()
        .expect("fixture is valid")
}

/// Seven students over five types with pinned pairwise quotas at both
/// schools and a loose three-type cap.
pub fn appendix_example() -> Instance {
    Instance::builder()
        .schools(["s1", "s2"])
        .ty("t1")
        .ty("t2")
        .ty("t3")
        .ty("t4")
        .ty("t5")
        .constraint("s1", &["t1", "t2"], int(1), int(1))
        .constraint("s1", &["t2", "t3"], int(1), int(1))
        .constraint("s1", &["t3", "t1"], int(1), int(1))
        .constraint("s1", &["t1", "t2", "t3"], int(0), int(2))
        .constraint("s2", &["t3", "t4"], int(1), int(1))
        .constraint("s2", &["t4", "t5"], int(1), int(1))
        .constraint("s2", &["t5", "t3"], int(1), int(1))
        .constraint("s2", &["t1", "t2", "t3"], int(0), int(2))
        .student("i1", "t1", &["s1", "s2"])
        .student("i2", "t2", &["s2", "s1"])
        .student("i3", "t3", &["s1", "s2"])
        .student("i4", "t4", &["s2", "s1"])
        .student("i5", "t5", &["s1", "s2"])
        .student("i6", "t1", &["s1", "s2"])
        .student("i7", "t2", &["s1", "s2"])
        .build()
        .expect("fixture is valid")
}

/// Three schools; two type-`t` students `i`, `j` with the given rankings and
/// one auxiliary student for each of `t1`, `t2`, `t3` whose shares at `s1`
/// and `s2` are pinned to 1/2, leaving type `t` at most 1/2 per school.
/// Auxiliary students rank schools in index order.
pub fn impossibility_example(i_prefs: [&str; 3], j_prefs: [&str; 3]) -> Instance {
    let mut b = Instance::builder()
        .schools(["s1", "s2", "s3"])
        .ty("t")
        .ty("t1")
        .ty("t2")
        .ty("t3");
    for s in ["s1", "s2"] {
        b = b
            .constraint(s, &["t1", "t2"], int(1), int(1))
            .constraint(s, &["t2", "t3"], int(1), int(1))
            .constraint(s, &["t3", "t1"], int(1), int(1))
            .constraint(s, &["t", "t1"], int(0), int(1));
    }
    b.student("i", "t", &i_prefs)
        .student("j", "t", &j_prefs)
        .student("a1", "t1", &["s1", "s2", "s3"])
        .student("a2", "t2", &["s1", "s2", "s3"])
        .student("a3", "t3", &["s1", "s2", "s3"])
        .build()
        .expect("fixture is valid")
}

/// Truthful profile of [`impossibility_example`].
pub fn impossibility_truthful() -> Instance {
    impossibility_example(["s1", "s2", "s3"], ["s2", "s3", "s1"])
}

/// Two identical students competing for a single seat.
pub fn twin_example() -> Instance {
    Instance::builder()
        .school("s1")
        .ty("t1")
        .constraint("s1", &["t1"], int(0), int(1))
        .student("a", "t1", &["s1"])
        .student("b", "t1", &["s1"])
        .build()
        .expect("fixture is valid")
}

/// Two-seat school where types {t1,t2} and {t1,t3} may each fill one seat.
/// Seating only the t1 student is Pareto efficient yet seats one student
/// where two fit.
pub fn pareto_gap_example() -> Instance {
    Instance::builder()
        .school("s")
        .ty("t1")
        .ty("t2")
        .ty("t3")
        .constraint("s", &["t1", "t2"], int(0), int(1))
        .constraint("s", &["t1", "t3"], int(0), int(1))
        .constraint("s", &["t1", "t2", "t3"], int(0), int(2))
        .student("a", "t1", &["s"])
        .student("b", "t2", &["s"])
        .student("c", "t3", &["s"])
        .build()
        .expect("fixture is valid")
}
