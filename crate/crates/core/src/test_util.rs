//! Deterministic random fields for unit tests.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::field::{PeriodicField, SpectralField};

fn unit_uniform(rng: &mut ChaCha8Rng) -> f64 {
    // 53-bit mantissa draw in [0,1).
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Band-limited field with modes 1..=kmax, amplitudes ~ k^{-decay}, phases
/// and signs from a seeded generator. Always exactly zero-mean.
pub(crate) fn random_band_limited(seed: u64, n: usize, kmax: usize, decay: f64) -> PeriodicField {
    assert!(kmax < n / 2, "band limit must stay below Nyquist");
    let mut seed_bytes = [0u8; 32];
    seed_bytes[..8].copy_from_slice(&seed.to_le_bytes());
    seed_bytes[24..].copy_from_slice(b"TESTFLDS");
    let mut rng = ChaCha8Rng::from_seed(seed_bytes);
    let mut coeffs = vec![Complex64::default(); n / 2 + 1];
    for (k, c) in coeffs.iter_mut().enumerate().skip(1).take(kmax) {
        let a = (2.0 * unit_uniform(&mut rng) - 1.0) * (k as f64).powf(-decay);
        let b = (2.0 * unit_uniform(&mut rng) - 1.0) * (k as f64).powf(-decay);
        *c = Complex64::new(a, -b) / 2.0f64.sqrt();
    }
    SpectralField::from_coeffs(coeffs, n)
        .expect("test spectrum is valid by construction")
        .to_physical()
}
