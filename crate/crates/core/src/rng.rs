//! Seeded, portable randomness.
//!
//! Everything random in this crate flows through ChaCha8 streams so that runs
//! are reproducible across platforms. A base seed selects the cipher key and a
//! `stream` index selects one of 2^64 independent streams; sweeps allocate one
//! stream per (experiment, repetition) cell.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// RNG for the given `(seed, stream)` pair.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard complex Gaussian: independent N(0,1) real and imaginary parts.
pub fn complex_gaussian(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im)
}
