//! Helpers shared by the unit tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::rng::keyed_rng;

pub(crate) fn rng_for(seed: u64, stream: &[u64; 3]) -> ChaCha8Rng {
    keyed_rng(seed, stream[0], stream[1], stream[2])
}

pub(crate) fn standard_normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub(crate) fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
