//! Keyed, reproducible random streams.
//!
//! A stream is ChaCha8 seeded from a 64-bit seed with the 64-bit ChaCha
//! stream selector set to `stream_id`. Work units derive their stream id from
//! structural coordinates (point index, pass, block) through [`stream_id`],
//! so the variates a unit sees do not depend on scheduling.
//!
//! Gaussian variates use the Box-Muller transform: for `u1 ∈ (0, 1]` and
//! `u2 ∈ [0, 1)`, `√(−2 ln u1)·(cos 2πu2, sin 2πu2)` are two independent
//! standard normals. The second one is cached for the next call.

use std::f64::consts::TAU;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fold structural coordinates into one stream id (splitmix64 mixing).
pub fn stream_id(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243F_6A88_85A3_08D3;
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner, spare: None }
    }

    /// Stream keyed by structural coordinates, see [`stream_id`].
    pub fn keyed(seed: u64, parts: &[u64]) -> Self {
        Self::new(seed, stream_id(parts))
    }

    /// Raw 64-bit draw, used to derive child seeds.
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Standard normal variate.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    /// Overwrite `out` with i.i.d. `N(0, scale²)` draws.
    pub fn fill_normal(&mut self, out: &mut [f64], scale: f64) {
        for x in out.iter_mut() {
            *x = scale * self.normal();
        }
    }

    pub fn normal_vec(&mut self, dim: usize, scale: f64) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        self.fill_normal(&mut v, scale);
        v
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}
