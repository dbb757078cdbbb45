//! Inputs shared by the benchmarks.

use battopf_core::lp::{LinearProgram, Relation, Sense};
use battopf_core::{load_case, GridCase};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(case: &str, scenario: &str) -> GridCase {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures/");
    load_case(format!("{dir}{case}"), format!("{dir}{scenario}")).expect("fixture loads")
}

/// A feasible random LP in the shape of an oracle subproblem: box-bounded
/// variables and a few dense `≤` rows with nonnegative coefficients.
pub fn random_lp(vars: usize, rows: usize, seed: u64) -> LinearProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lp = LinearProgram::new(Sense::Maximize);
    for _ in 0..vars {
        let cost = rng.gen_range(-1.0..1.0);
        lp.add_var(0.0, rng.gen_range(10.0..100.0), cost);
    }
    for _ in 0..rows {
        let coeffs = (0..vars).map(|v| (v, rng.gen_range(0.0..2.0))).collect();
        lp.add_constraint(coeffs, Relation::Le, rng.gen_range(50.0..200.0));
    }
    lp
}
