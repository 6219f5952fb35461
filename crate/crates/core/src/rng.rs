//! Counter-based random numbers and ball sampling primitives.
//!
//! Draw i of a stream is a pure function of (seed, i): the SplitMix64
//! finalizer applied to `seed + (i+1)*GOLDEN`. Strata and reruns take
//! substreams derived from the same seed, so parallel evaluation or
//! re-slicing of a run cannot change any value.

use alloc::vec::Vec;
use num_complex::Complex64;

use crate::linalg::{c64, inner, vec_norm};

/// Seed used when a caller does not supply one.
pub const DEFAULT_SEED: u64 = 0x5EED_BA11;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct CounterRng {
    seed: u64,
    ctr: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed, ctr: 0 }
    }

    /// Independent stream `k` of the same seed.
    pub fn substream(seed: u64, k: u64) -> Self {
        CounterRng { seed: mix(seed ^ k.wrapping_mul(0xA076_1D64_78BD_642F)), ctr: 0 }
    }

    /// Draws consumed so far; exposes rejection costs to callers.
    pub fn counter(&self) -> u64 {
        self.ctr
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = mix(self.seed.wrapping_add((self.ctr + 1).wrapping_mul(GOLDEN)));
        self.ctr += 1;
        v
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [-1, 1).
    pub fn next_sym(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }
}

/// Uniform point of the open unit ball of C^dim by rejection from the
/// enclosing box [-1,1]^{2 dim}. Acceptance is about 30.8% for dim 2.
pub fn uniform_ball(rng: &mut CounterRng, dim: usize, out: &mut [Complex64]) {
    assert_eq!(out.len(), dim);
    loop {
        let mut r2 = 0.0;
        for x in out.iter_mut() {
            *x = c64(rng.next_sym(), rng.next_sym());
            r2 += x.norm_sqr();
        }
        if r2 < 1.0 {
            return;
        }
    }
}

/// Replaces radius r by r^(1/4), pushing the point toward the sphere while
/// keeping its direction. No-op at the origin.
pub fn boundary_push(z: &mut [Complex64]) {
    let r = vec_norm(z);
    if r == 0.0 {
        return;
    }
    let f = libm::pow(r, 0.25) / r;
    for x in z.iter_mut() {
        *x *= f;
    }
}

/// Uniform ball point whose inner-product distance to every listed root
/// stays at or above `min_dist`. Panics if 10^5 attempts fail, which for
/// the margins used here has probability zero for practical purposes.
pub fn uniform_ball_avoiding(
    rng: &mut CounterRng,
    dim: usize,
    roots: &[Vec<Complex64>],
    min_dist: f64,
    out: &mut [Complex64],
) {
    for _ in 0..100_000 {
        uniform_ball(rng, dim, out);
        if roots.iter().all(|e| inner(out, e).norm() >= min_dist) {
            return;
        }
    }
    panic!("hyperplane-avoiding sampler exhausted its attempt budget");
}
