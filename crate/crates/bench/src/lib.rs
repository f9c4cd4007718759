//! Workloads shared by the benchmarks in `benches/`.

use quotamatch::generate::{gen_instance, ConstraintStyle, GenParams};
use quotamatch::Instance;

/// A generated instance with `n` students over three schools and four types.
pub fn generated(n: usize, style: ConstraintStyle) -> Instance {
    let params = GenParams { seed: 17, n_students: n, n_schools: 3, n_types: 4, style, tightness: 50 };
    gen_instance(&params).expect("benchmark instance generates")
}
