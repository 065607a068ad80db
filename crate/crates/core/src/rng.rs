//! Seeded random streams. Each consumer gets its own ChaCha stream so adding
//! a draw in one place never shifts another's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numerics::Real;

pub type Rng = ChaCha8Rng;

pub const DENOISER_INIT: u64 = 1;
pub const INDICATOR_INIT: u64 = 2;
pub const TRAINING: u64 = 3;
pub const TARGET_SET: u64 = 4;
pub const NON_TARGET_SET: u64 = 5;
pub const SAMPLING: u64 = 6;
pub const ORACLE_INIT: u64 = 7;
pub const ORACLE_TRAINING: u64 = 8;
pub const ENTROPY_EVAL: u64 = 9;
pub const TEST_GROUPS: u64 = 10;

pub fn stream(seed: u64, id: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn normals<R: Real>(rng: &mut Rng, n: usize) -> Vec<R> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            R::of(z)
        })
        .collect()
}
