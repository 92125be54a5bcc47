//! Counter-based Gaussian streams.
//!
//! Every path owns a ChaCha8 key derived from `(master seed, path index)`.
//! Normals are produced by Box-Muller with a fixed number of words per time
//! step, so the block counter at step `k` is a pure function of `k`: the draw
//! for `(master, path, step)` does not depend on which worker ran the path or
//! in which order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream carrying the driving Brownian increments of a path.
pub const DRIVER_STREAM: u64 = 0;
/// Stream for Brownian-bridge refinement inside a coarse step.
pub const BRIDGE_STREAM: u64 = 1;
/// Stream for auxiliary sampling (certifier point clouds and the like).
pub const AUX_STREAM: u64 = 2;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-path seed: a hash of `(master, index)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master ^ 0x9e37_79b9_7f4a_7c15).wrapping_add(index.wrapping_mul(0xd1b5_4a32_d192_ed03)))
}

/// Uniform in the half-open interval `(0, 1]`.
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal stream with a fixed stride of `width` normals per step.
#[derive(Clone, Debug)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
    width: usize,
}

impl GaussianStream {
    pub fn new(seed: u64, stream: u64, width: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        GaussianStream { rng, width }
    }

    /// Stream positioned at the start of `step`.
    pub fn at_step(seed: u64, stream: u64, width: usize, step: u64) -> Self {
        let mut s = Self::new(seed, stream, width);
        s.rng.set_word_pos(step as u128 * Self::words_per_step(width));
        s
    }

    fn words_per_step(width: usize) -> u128 {
        // Two u64 (four 32-bit words) per Box-Muller pair.
        4 * width.div_ceil(2) as u128
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Fills `out` (length `width`) with the next step's normals.
    pub fn next_step(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.width);
        let mut i = 0;
        while i < self.width {
            let u1 = open_unit(self.rng.next_u64());
            let u2 = open_unit(self.rng.next_u64());
            let radius = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
            out[i] = radius * c;
            if i + 1 < self.width {
                out[i + 1] = radius * s;
            }
            i += 2;
        }
    }

    /// Uniforms in `(0, 1]`, consuming one u64 each (no step alignment).
    pub fn next_uniform(&mut self) -> f64 {
        open_unit(self.rng.next_u64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_draws_match_random_access() {
        for width in [1, 2, 3] {
            let mut seq = GaussianStream::new(7, DRIVER_STREAM, width);
            let mut buf = vec![0.0; width];
            let mut draws = Vec::new();
            for _ in 0..50 {
                seq.next_step(&mut buf);
                draws.push(buf.clone());
            }
            for step in [0u64, 1, 17, 49] {
                let mut direct = GaussianStream::at_step(7, DRIVER_STREAM, width, step);
                direct.next_step(&mut buf);
                assert_eq!(buf, draws[step as usize], "width {width} step {step}");
            }
        }
    }

    #[test]
    fn streams_and_seeds_differ() {
        let mut a = GaussianStream::new(1, DRIVER_STREAM, 2);
        let mut b = GaussianStream::new(1, BRIDGE_STREAM, 2);
        let mut c = GaussianStream::new(2, DRIVER_STREAM, 2);
        let (mut x, mut y, mut z) = ([0.0; 2], [0.0; 2], [0.0; 2]);
        a.next_step(&mut x);
        b.next_step(&mut y);
        c.next_step(&mut z);
        assert_ne!(x, y);
        assert_ne!(x, z);
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }

    #[test]
    fn normal_moments() {
        let mut s = GaussianStream::new(42, DRIVER_STREAM, 2);
        let mut buf = [0.0; 2];
        let n = 200_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n / 2 {
            s.next_step(&mut buf);
            for v in buf {
                m1 += v;
                m2 += v * v;
            }
        }
        let mean = m1 / n as f64;
        let var = m2 / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.02);
    }
}
