//! Zero-mean periodic fields on the unit circle and their spectral
//! representation.
//!
//! Conventions, fixed once here and relied on everywhere else:
//! - physical samples live at x_j = j/N, j = 0..N-1, N a power of two;
//! - `SpectralField` holds the half spectrum c_k, k = 0..N/2, normalized so
//!   that u(x_j) = sum_k c_k e^{2 pi i k x_j} (forward transform divides by N);
//! - the real Fourier coefficients are a_k = sqrt(2) Re c_k,
//!   b_k = -sqrt(2) Im c_k, so |u|_2^2 = sum_{k>=1} (a_k^2 + b_k^2).

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Result, SimError};

/// Absolute tolerance on the sample mean of a valid field.
pub const MEAN_TOL: f64 = 1e-12;

const MIN_GRID: usize = 16;

thread_local! {
    static PLANNER: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
}

pub(crate) fn forward_plan(n: usize) -> Arc<dyn RealToComplex<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub(crate) fn inverse_plan(n: usize) -> Arc<dyn ComplexToReal<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Compensated (Kahan) sum; keeps mean checks at O(eps) regardless of N.
pub(crate) fn kahan_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &x in xs {
        let y = x - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

fn check_grid(n: usize) -> Result<()> {
    if n < MIN_GRID || !n.is_power_of_two() {
        return Err(SimError::Config(format!(
            "grid size must be a power of two >= {MIN_GRID}, got {n}"
        )));
    }
    Ok(())
}

/// Real-valued zero-mean function on S^1 sampled at x_j = j/N.
#[derive(Debug, Clone)]
pub struct PeriodicField {
    samples: Vec<f64>,
}

impl PeriodicField {
    /// Wraps samples, enforcing the grid and zero-mean invariants.
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        check_grid(samples.len())?;
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(SimError::Domain("field sample is NaN or Inf".into()));
        }
        let mean = kahan_sum(&samples) / samples.len() as f64;
        if mean.abs() > MEAN_TOL {
            return Err(SimError::Domain(format!(
                "field mean {mean:e} exceeds the zero-mean tolerance {MEAN_TOL:e}"
            )));
        }
        Ok(Self { samples })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        check_grid(n)?;
        Ok(Self {
            samples: vec![0.0; n],
        })
    }

    /// Internal constructor for samples already known to satisfy the
    /// invariants (inverse transforms of valid spectra).
    pub(crate) fn from_samples_unchecked(samples: Vec<f64>) -> Self {
        Self { samples }
    }

    /// Samples f at the grid points x_j = j/N. f must have zero mean on [0,1].
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples = (0..n).map(|j| f(j as f64 / n as f64)).collect();
        Self::new(samples)
    }

    pub fn grid_size(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn mean(&self) -> f64 {
        kahan_sum(&self.samples) / self.samples.len() as f64
    }

    pub fn to_spectral(&self) -> SpectralField {
        let n = self.samples.len();
        let plan = forward_plan(n);
        let mut input = self.samples.clone();
        let mut coeffs = vec![Complex64::default(); n / 2 + 1];
        plan.process(&mut input, &mut coeffs)
            .expect("forward FFT on a valid grid");
        let scale = 1.0 / n as f64;
        for c in coeffs.iter_mut() {
            *c *= scale;
        }
        // Zero-mean enforcement: the k=0 coefficient is dropped after every
        // transform so round-off can never accumulate into a mean drift.
        coeffs[0] = Complex64::default();
        SpectralField {
            coeffs,
            grid_size: n,
        }
    }

    /// Quadrature L_p norm: ((1/N) sum |u_j|^p)^{1/p}, or the grid max for
    /// p = infinity. Spectrally accurate for smooth periodic integrands.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(SimError::Domain(format!("L_p norm needs p >= 1, got {p}")));
        }
        let n = self.samples.len() as f64;
        let v = if p == f64::INFINITY {
            self.samples.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
        } else if p == 2.0 {
            (self.samples.iter().map(|&x| x * x).sum::<f64>() / n).sqrt()
        } else if p == 1.0 {
            self.samples.iter().map(|&x| x.abs()).sum::<f64>() / n
        } else {
            (self.samples.iter().map(|&x| x.abs().powf(p)).sum::<f64>() / n).powf(1.0 / p)
        };
        Ok(v)
    }

    /// W^{m,p} norm |u^{(m)}|_p via the spectral derivative.
    pub fn sobolev_norm(&self, m: u32, p: f64) -> Result<f64> {
        if m == 0 {
            return self.lp_norm(p);
        }
        self.to_spectral().derivative(m)?.to_physical().lp_norm(p)
    }
}

/// L_2 inner product (1/N) sum_j u_j v_j of two fields on the same grid.
pub fn inner_product(u: &PeriodicField, v: &PeriodicField) -> Result<f64> {
    if u.grid_size() != v.grid_size() {
        return Err(SimError::GridMismatch {
            expected: u.grid_size(),
            got: v.grid_size(),
        });
    }
    let dot: f64 = u
        .samples()
        .iter()
        .zip(v.samples())
        .map(|(a, b)| a * b)
        .sum();
    Ok(dot / u.grid_size() as f64)
}

/// Half spectrum of a `PeriodicField`: coefficients of e^{2 pi i k x},
/// k = 0..N/2, with c_0 = 0 (zero mean) and Hermitian symmetry implied.
#[derive(Debug, Clone)]
pub struct SpectralField {
    coeffs: Vec<Complex64>,
    grid_size: usize,
}

impl SpectralField {
    /// Builds from raw coefficients (length N/2 + 1). c_0 must vanish and the
    /// Nyquist coefficient must be real, or the inverse transform is undefined.
    pub fn from_coeffs(coeffs: Vec<Complex64>, grid_size: usize) -> Result<Self> {
        check_grid(grid_size)?;
        if coeffs.len() != grid_size / 2 + 1 {
            return Err(SimError::Config(format!(
                "expected {} coefficients for N={}, got {}",
                grid_size / 2 + 1,
                grid_size,
                coeffs.len()
            )));
        }
        if coeffs[0].norm_sqr() != 0.0 {
            return Err(SimError::Domain("nonzero mean mode in spectrum".into()));
        }
        if coeffs[grid_size / 2].im != 0.0 {
            return Err(SimError::Domain("complex Nyquist coefficient".into()));
        }
        Ok(Self { coeffs, grid_size })
    }

    pub fn zeros(grid_size: usize) -> Result<Self> {
        check_grid(grid_size)?;
        Ok(Self {
            coeffs: vec![Complex64::default(); grid_size / 2 + 1],
            grid_size,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    /// Highest representable wavenumber, N/2.
    pub fn num_modes(&self) -> usize {
        self.grid_size / 2
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Cosine coefficient a_k of the sqrt(2) cos(2 pi k x) basis, 1 <= k <= N/2.
    pub fn a(&self, k: usize) -> f64 {
        assert!(k >= 1 && k <= self.grid_size / 2, "mode index out of range");
        std::f64::consts::SQRT_2 * self.coeffs[k].re
    }

    /// Sine coefficient b_k of the sqrt(2) sin(2 pi k x) basis, 1 <= k <= N/2.
    pub fn b(&self, k: usize) -> f64 {
        assert!(k >= 1 && k <= self.grid_size / 2, "mode index out of range");
        -std::f64::consts::SQRT_2 * self.coeffs[k].im
    }

    pub fn to_physical(&self) -> PeriodicField {
        let n = self.grid_size;
        let plan = inverse_plan(n);
        let mut scratch = self.coeffs.clone();
        let mut samples = vec![0.0; n];
        plan.process(&mut scratch, &mut samples)
            .expect("inverse FFT of a valid half spectrum");
        PeriodicField { samples }
    }

    /// n-th spectral derivative: coefficient k scaled by (2 pi i k)^n.
    /// For odd n the Nyquist mode is dropped (its derivative has no real
    /// representative on the grid); inputs are band-limited below Nyquist
    /// anyway per the contract.
    pub fn derivative(&self, n: u32) -> Result<SpectralField> {
        if n > 8 {
            return Err(SimError::Domain(format!(
                "derivative order capped at 8, got {n}"
            )));
        }
        if n == 0 {
            return Ok(self.clone());
        }
        let mut coeffs = self.coeffs.clone();
        let two_pi = 2.0 * std::f64::consts::PI;
        for (k, c) in coeffs.iter_mut().enumerate().skip(1) {
            let mag = (two_pi * k as f64).powi(n as i32);
            *c = match n % 4 {
                0 => *c * mag,
                1 => Complex64::new(-c.im, c.re) * mag,
                2 => -*c * mag,
                _ => Complex64::new(c.im, -c.re) * mag,
            };
        }
        coeffs[0] = Complex64::default();
        let half = self.grid_size / 2;
        if n % 2 == 1 {
            coeffs[half] = Complex64::default();
        }
        Ok(SpectralField {
            coeffs,
            grid_size: self.grid_size,
        })
    }

    /// Parseval sum for |u|_2^2. The Nyquist mode is unpaired and counts once.
    pub fn energy_sq(&self) -> f64 {
        self.h_norm_sq(0)
    }

    /// Parseval sum for the squared H^m norm, sum (2 pi k)^{2m} (a_k^2 + b_k^2).
    pub fn h_norm_sq(&self, m: u32) -> f64 {
        let half = self.grid_size / 2;
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut total = 0.0;
        for k in 1..half {
            total += (two_pi * k as f64).powi(2 * m as i32) * 2.0 * self.coeffs[k].norm_sqr();
        }
        total += (two_pi * half as f64).powi(2 * m as i32) * self.coeffs[half].norm_sqr();
        total
    }
}
