//! Seeded random streams.
//!
//! Every random quantity comes from a ChaCha20 stream selected by
//! `(seed, trial, index)`: the generator is `ChaCha20Rng::seed_from_u64(seed)`
//! with stream id `(trial << 32) | index`. Uniform reals are
//! `(next_u64() >> 11) · 2⁻⁵³` in `[0, 1)`; normals use Box–Muller on two
//! consecutive uniforms `u1, u2` as `√(−2 ln(1 − u1)) · (cos 2πu2, sin 2πu2)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::linalg::{c, C64};

pub type Stream = ChaCha20Rng;

const TWO_PI: f64 = std::f64::consts::TAU;

/// Stream for `(seed, trial, index)`; `trial` and `index` use 32 bits each.
pub fn stream(seed: u64, trial: u32, index: u32) -> Stream {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((trial as u64) << 32) | index as u64);
    rng
}

/// Uniform in `[0, 1)` with 53 random bits.
#[inline]
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform phase in `[0, 2π)`.
#[inline]
pub fn phase<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    TWO_PI * uniform(rng)
}

/// A pair of independent standard normals.
#[inline]
pub fn normal_pair<R: RngCore + ?Sized>(rng: &mut R) -> (f64, f64) {
    let u1 = uniform(rng);
    let u2 = uniform(rng);
    let r = (-2.0 * (1.0 - u1).ln()).sqrt();
    let t = TWO_PI * u2;
    (r * t.cos(), r * t.sin())
}

/// Complex Gaussian with independent standard normal real and imaginary parts.
#[inline]
pub fn complex_normal<R: RngCore + ?Sized>(rng: &mut R) -> C64 {
    let (a, b) = normal_pair(rng);
    c(a, b)
}
