use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// 32-bit words consumed per step: two `u64` draws for one Box–Muller pair.
const WORDS_PER_STEP: u128 = 4;

/// Anything that hands out one scalar Brownian increment per time step.
pub trait NoiseSource: Sync {
    fn increment(&self, step: usize) -> f64;
}

/// Scalar Brownian increments `W(t_{n+1}) − W(t_n)` on a uniform time grid.
///
/// Increment `n` of path `(seed, path_id)` is a pure function of the key and
/// `n`: ChaCha8 keyed by `seed` on stream `path_id`, positioned at a fixed
/// word offset per step. Any subset of increments can therefore be
/// regenerated independently and bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    seed: u64,
    path_id: u64,
    dt: f64,
    increments: Vec<f64>,
}

fn rng_at(seed: u64, path_id: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_id);
    rng.set_word_pos(step as u128 * WORDS_PER_STEP);
    rng
}

#[inline]
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * SCALE;
    let u2 = (rng.next_u64() >> 11) as f64 * SCALE;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Increment `step` of path `(seed, path_id)` without generating the others.
pub fn wiener_increment(seed: u64, path_id: u64, step: usize, dt: f64) -> f64 {
    dt.sqrt() * standard_normal(&mut rng_at(seed, path_id, step))
}

/// The first `n_steps` increments of path `(seed, path_id)`.
pub fn gen_wiener(seed: u64, path_id: u64, n_steps: usize, dt: f64) -> Result<WienerPath> {
    if n_steps == 0 {
        return Err(Error::InvalidParameter(
            "a Wiener path needs at least one step".into(),
        ));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("time step {dt}")));
    }
    let mut rng = rng_at(seed, path_id, 0);
    let scale = dt.sqrt();
    let increments = (0..n_steps)
        .map(|_| scale * standard_normal(&mut rng))
        .collect();
    Ok(WienerPath {
        seed,
        path_id,
        dt,
        increments,
    })
}

/// Sums consecutive blocks of `factor` increments; the result lives on the
/// time grid with step `factor · dt`.
pub fn coarsen_wiener(path: &WienerPath, factor: usize) -> Result<WienerPath> {
    if factor == 0 || path.increments.len() % factor != 0 {
        return Err(Error::InvalidParameter(format!(
            "coarsening factor {factor} does not divide {} steps",
            path.increments.len()
        )));
    }
    Ok(WienerPath {
        seed: path.seed,
        path_id: path.path_id,
        dt: path.dt * factor as f64,
        increments: path
            .increments
            .chunks_exact(factor)
            .map(|block| block.iter().sum())
            .collect(),
    })
}

impl WienerPath {
    /// A path with explicitly given increments, keyed for bookkeeping only.
    pub fn from_increments(seed: u64, path_id: u64, dt: f64, increments: Vec<f64>) -> Self {
        Self {
            seed,
            path_id,
            dt,
            increments,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_id(&self) -> u64 {
        self.path_id
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// The Cameron–Martin shift `W + eps ∫ 1_{[r, r+δ)}`: adds `eps · dt` to
    /// the increments with index in `start..start + len`.
    pub fn shifted(&self, start: usize, len: usize, eps: f64) -> WienerPath {
        let mut out = self.clone();
        let end = (start + len).min(out.increments.len());
        for dw in &mut out.increments[start.min(end)..end] {
            *dw += eps * self.dt;
        }
        out
    }
}

impl NoiseSource for WienerPath {
    fn increment(&self, step: usize) -> f64 {
        self.increments[step]
    }
}
