//! Random kick forcing.
//!
//! At every integer time the solution receives an independent band-limited
//! kick zeta with Fourier coefficients a_k = c_k xi, b_k = c_k xi', where
//! c_k = A 2^{-k} for k = 1..K_max and xi is uniform on [-sqrt(3), sqrt(3)]
//! (zero mean, unit variance, bounded). Bounded coefficients make every
//! exponential moment of every Sobolev norm finite by inspection.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Result, SimError};
use crate::field::{PeriodicField, SpectralField};

/// Per-mode amplitude schedule of the kick noise.
#[derive(Debug, Clone, PartialEq)]
pub struct KickDistribution {
    amplitude: f64,
    k_max: usize,
}

impl KickDistribution {
    pub fn new(amplitude: f64, k_max: usize) -> Result<Self> {
        if !(amplitude >= 0.0) || !amplitude.is_finite() {
            return Err(SimError::Config(format!(
                "kick amplitude must be a finite nonnegative real, got {amplitude}"
            )));
        }
        if k_max == 0 {
            return Err(SimError::Config("kick band limit must be >= 1".into()));
        }
        Ok(Self { amplitude, k_max })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Mode amplitude c_k = A 2^{-k}, 1 <= k <= K_max.
    pub fn mode_amplitude(&self, k: usize) -> f64 {
        debug_assert!(k >= 1 && k <= self.k_max);
        self.amplitude * 0.5f64.powi(k as i32)
    }

    /// Rejects the degenerate almost-surely-zero noise (A = 0).
    pub fn check_nontrivial(&self) -> Result<()> {
        if self.amplitude == 0.0 {
            return Err(SimError::Config(
                "kick amplitude 0 makes the forcing almost surely zero".into(),
            ));
        }
        Ok(())
    }

    /// Exact second moment I_m = E ||zeta||_m^2 = sum_k (2 pi k)^{2m} 2 c_k^2;
    /// the Monte-Carlo estimator is validated against this.
    pub fn exact_moment(&self, m: u32) -> f64 {
        let two_pi = 2.0 * std::f64::consts::PI;
        (1..=self.k_max)
            .map(|k| {
                let c = self.mode_amplitude(k);
                (two_pi * k as f64).powi(2 * m as i32) * 2.0 * c * c
            })
            .sum()
    }

    /// Triangle-inequality bound on ||zeta||_m valid for every realization:
    /// sum_k (2 pi k)^m c_k sqrt(3) sqrt(2).
    pub fn deterministic_norm_bound(&self, m: u32) -> f64 {
        let two_pi = 2.0 * std::f64::consts::PI;
        (1..=self.k_max)
            .map(|k| (two_pi * k as f64).powi(m as i32) * self.mode_amplitude(k) * 6.0f64.sqrt())
            .sum()
    }
}

impl Default for KickDistribution {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            k_max: 8,
        }
    }
}

/// Deterministic source of the kick sequence for one realization.
/// Kick i is a pure function of (master_seed, realization_id, i).
#[derive(Debug, Clone)]
pub struct KickStream {
    pub master_seed: u64,
    pub realization_id: u64,
    pub distribution: KickDistribution,
}

/// Counter-based sub-stream: the generator for kick i of realization r is
/// seeded directly from (master_seed, r, i), so realizations can run in
/// parallel with no shared RNG state and any kick can be regenerated alone.
fn kick_rng(master_seed: u64, realization_id: u64, kick_index: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&realization_id.to_le_bytes());
    seed[16..24].copy_from_slice(&kick_index.to_le_bytes());
    seed[24..].copy_from_slice(b"BURGKICK");
    ChaCha8Rng::from_seed(seed)
}

/// Uniform on [-sqrt(3), sqrt(3)]: zero mean, unit variance, bounded.
fn scalar_law(rng: &mut ChaCha8Rng) -> f64 {
    let v = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    3.0f64.sqrt() * (2.0 * v - 1.0)
}

/// (a_k, b_k) pairs for k = 1..=K_max, in draw order a then b.
fn draw_coeffs(rng: &mut ChaCha8Rng, dist: &KickDistribution) -> Vec<(f64, f64)> {
    (1..=dist.k_max)
        .map(|k| {
            let c = dist.mode_amplitude(k);
            let a = c * scalar_law(rng);
            let b = c * scalar_law(rng);
            (a, b)
        })
        .collect()
}

impl KickStream {
    pub fn new(master_seed: u64, realization_id: u64, distribution: KickDistribution) -> Self {
        Self {
            master_seed,
            realization_id,
            distribution,
        }
    }

    /// Synthesizes kick number i (i >= 1) on an N-point grid.
    pub fn sample_kick(&self, i: u64, n: usize) -> Result<PeriodicField> {
        if i == 0 {
            return Err(SimError::Config("kick indices start at 1".into()));
        }
        if n < 4 * self.distribution.k_max {
            return Err(SimError::Config(format!(
                "grid size {n} cannot resolve kicks band-limited at K_max={}; need N >= {}",
                self.distribution.k_max,
                4 * self.distribution.k_max
            )));
        }
        let mut rng = kick_rng(self.master_seed, self.realization_id, i);
        let coeffs = draw_coeffs(&mut rng, &self.distribution);
        let mut spectrum = vec![Complex64::default(); n / 2 + 1];
        for (k, &(a, b)) in coeffs.iter().enumerate() {
            spectrum[k + 1] = Complex64::new(a, -b) / 2.0f64.sqrt();
        }
        Ok(SpectralField::from_coeffs(spectrum, n)?.to_physical())
    }
}

/// u + zeta, the instantaneous state jump at a kick time.
pub fn apply_kick(u: &PeriodicField, kick: &PeriodicField) -> Result<PeriodicField> {
    if u.grid_size() != kick.grid_size() {
        return Err(SimError::GridMismatch {
            expected: u.grid_size(),
            got: kick.grid_size(),
        });
    }
    let samples = u
        .samples()
        .iter()
        .zip(kick.samples())
        .map(|(a, b)| a + b)
        .collect();
    PeriodicField::new(samples)
}

/// Monte-Carlo estimate of a norm moment.
#[derive(Debug, Clone, Copy)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// Estimates I_m = E ||zeta||_m^2 by sampling coefficients directly
/// (no grid involved: the squared norm is sum_k (2 pi k)^{2m} (a_k^2 + b_k^2)).
pub fn estimate_moment(
    dist: &KickDistribution,
    m: u32,
    n_samples: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    if n_samples < 1000 {
        return Err(SimError::Domain(format!(
            "moment estimation needs at least 1000 samples, got {n_samples}"
        )));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let weights: Vec<f64> = (1..=dist.k_max)
        .map(|k| (two_pi * k as f64).powi(2 * m as i32))
        .collect();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for j in 0..n_samples {
        let mut rng = kick_rng(seed, j as u64, 1);
        let norm_sq: f64 = draw_coeffs(&mut rng, dist)
            .iter()
            .zip(&weights)
            .map(|(&(a, b), w)| w * (a * a + b * b))
            .sum();
        sum += norm_sq;
        sum_sq += norm_sq * norm_sq;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    Ok(MomentEstimate {
        mean,
        std_error: (var / n).sqrt(),
        n_samples,
    })
}
