//! Ensemble statistics: norm time series, power-law fits, energy spectra,
//! layered spectral averages, and the gradient intermittency contrast.
//!
//! Time series sample a trajectory that jumps at integer times, so every
//! sample carries a side tag: at a kick time the pre-kick value (`Minus`)
//! and post-kick value (`Plus`) are distinct entries at the same t. The tag
//! order makes (t, side) lexicographically strict, and the zero-width
//! minus/plus pair makes trapezoid integrals handle the jump exactly.

use crate::error::{Result, SimError};
use crate::field::PeriodicField;
use crate::integrator::DissipationLedger;

/// Position of a sample relative to the kick at its timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum KickSide {
    /// Left limit u(t-): state before the kick applied at t.
    Minus,
    /// Strictly between kicks.
    Interior,
    /// State at t after the kick (the trajectory is right-continuous).
    Plus,
}

#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub t: f64,
    pub side: KickSide,
    pub value: f64,
}

fn key_cmp(a: (f64, KickSide), b: (f64, KickSide)) -> std::cmp::Ordering {
    a.0.partial_cmp(&b.0)
        .expect("sample times are finite")
        .then(a.1.cmp(&b.1))
}

/// Which scalar statistic a series tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Instant,
    SupOverKickInterval,
}

/// Identifies a Sobolev norm |u^{(m)}|_p and how it is reduced in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormDescriptor {
    pub m: u32,
    pub p: f64,
    pub statistic: Statistic,
}

/// One realization's time series of a nonnegative scalar.
#[derive(Debug, Clone)]
pub struct NormSeries {
    pub descriptor: NormDescriptor,
    pub realization_id: u64,
    samples: Vec<Sample>,
}

impl NormSeries {
    pub fn new(descriptor: NormDescriptor, realization_id: u64) -> Self {
        Self {
            descriptor,
            realization_id,
            samples: Vec::new(),
        }
    }

    /// Appends a sample; (t, side) must advance strictly and values are
    /// nonnegative by the series contract.
    pub fn push(&mut self, t: f64, side: KickSide, value: f64) -> Result<()> {
        if !t.is_finite() || !value.is_finite() {
            return Err(SimError::Domain(format!(
                "non-finite sample ({t}, {value})"
            )));
        }
        if value < 0.0 {
            return Err(SimError::Domain(format!(
                "norm series values are nonnegative, got {value}"
            )));
        }
        if let Some(last) = self.samples.last() {
            if key_cmp((t, side), (last.t, last.side)) != std::cmp::Ordering::Greater {
                return Err(SimError::Domain(format!(
                    "samples must advance: ({t}, {side:?}) after ({}, {:?})",
                    last.t, last.side
                )));
            }
        }
        self.samples.push(Sample { t, side, value });
        Ok(())
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }
}

/// Scalar reduction of one series over a time window. Window endpoints are
/// kick times: a window [t0, t1] runs from the post-kick state at t0 to the
/// pre-kick state at t1, matching integrals over [t0, t1) of the
/// right-continuous trajectory.
#[derive(Debug, Clone, Copy)]
pub enum Reducer {
    TimeAverage {
        t0: f64,
        t1: f64,
    },
    TimeAverageOfSquare {
        t0: f64,
        t1: f64,
    },
    /// sup over the kick interval [k, k+1).
    IntervalSup {
        k: u64,
    },
    /// Mean over k in k0..k1 of the sup over [k, k+1).
    IntervalSupMean {
        k0: u64,
        k1: u64,
    },
}

pub(crate) fn window<'a>(samples: &'a [Sample], t0: f64, t1: f64) -> &'a [Sample] {
    let lo = samples.partition_point(|s| key_cmp((s.t, s.side), (t0, KickSide::Plus)).is_lt());
    let hi = samples.partition_point(|s| key_cmp((s.t, s.side), (t1, KickSide::Minus)).is_le());
    &samples[lo..hi]
}

pub(crate) fn trapezoid_average(
    samples: &[Sample],
    t0: f64,
    t1: f64,
    f: impl Fn(f64) -> f64,
) -> Result<f64> {
    let w = window(samples, t0, t1);
    if w.len() < 2 {
        return Err(SimError::Domain(format!(
            "window [{t0}, {t1}] holds {} samples; need at least 2",
            w.len()
        )));
    }
    let span = w.last().unwrap().t - w[0].t;
    if !(span > 0.0) {
        return Err(SimError::Domain(format!(
            "window [{t0}, {t1}] has zero duration on the recorded grid"
        )));
    }
    let mut integral = 0.0;
    for pair in w.windows(2) {
        integral += (pair[1].t - pair[0].t) * (f(pair[0].value) + f(pair[1].value)) / 2.0;
    }
    Ok(integral / span)
}

fn interval_sup(samples: &[Sample], k: u64) -> Result<f64> {
    let w = window(samples, k as f64, (k + 1) as f64);
    if w.is_empty() {
        return Err(SimError::Domain(format!(
            "no samples recorded on kick interval [{k}, {})",
            k + 1
        )));
    }
    Ok(w.iter().fold(f64::NEG_INFINITY, |m, s| m.max(s.value)))
}

fn reduce(series: &NormSeries, reducer: &Reducer) -> Result<f64> {
    match *reducer {
        Reducer::TimeAverage { t0, t1 } => trapezoid_average(series.samples(), t0, t1, |v| v),
        Reducer::TimeAverageOfSquare { t0, t1 } => {
            trapezoid_average(series.samples(), t0, t1, |v| v * v)
        }
        Reducer::IntervalSup { k } => interval_sup(series.samples(), k),
        Reducer::IntervalSupMean { k0, k1 } => {
            if k1 <= k0 {
                return Err(SimError::Domain(format!(
                    "empty kick-interval range {k0}..{k1}"
                )));
            }
            let mut total = 0.0;
            for k in k0..k1 {
                total += interval_sup(series.samples(), k)?;
            }
            Ok(total / (k1 - k0) as f64)
        }
    }
}

/// Reduces each realization to a scalar and returns the ensemble mean with
/// its across-realization standard error.
pub fn ensemble_mean(series: &[NormSeries], reducer: &Reducer) -> Result<(f64, f64)> {
    if series.len() < 2 {
        return Err(SimError::Domain(format!(
            "ensemble statistics need at least 2 realizations, got {}",
            series.len()
        )));
    }
    let grid: Vec<(f64, KickSide)> = series[0].samples().iter().map(|s| (s.t, s.side)).collect();
    for s in &series[1..] {
        let same = s.samples().len() == grid.len()
            && s.samples()
                .iter()
                .zip(&grid)
                .all(|(a, &(t, side))| a.t == t && a.side == side);
        if !same {
            return Err(SimError::Domain(format!(
                "realization {} was recorded on a different time grid",
                s.realization_id
            )));
        }
    }
    let values: Vec<f64> = series
        .iter()
        .map(|s| reduce(s, reducer))
        .collect::<Result<_>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Least-squares power law q = C nu^slope on log-log axes.
#[derive(Debug, Clone)]
pub struct ScalingFit {
    pub nus: Vec<f64>,
    pub quantities: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_stderr: f64,
}

pub fn fit_power_law(nus: &[f64], quantities: &[f64]) -> Result<ScalingFit> {
    if nus.len() != quantities.len() {
        return Err(SimError::Domain(format!(
            "{} viscosities vs {} quantities",
            nus.len(),
            quantities.len()
        )));
    }
    let mut distinct: Vec<f64> = nus.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(SimError::Domain(format!(
            "power-law fits need at least 4 distinct viscosities, got {}",
            distinct.len()
        )));
    }
    if !nus.iter().all(|&v| v > 0.0) {
        return Err(SimError::Domain("viscosities must be positive".into()));
    }
    let span = distinct.last().unwrap() / distinct[0];
    if span < 10.0 {
        return Err(SimError::Domain(format!(
            "viscosity sweep must span a decade; ratio is only {span:.3}"
        )));
    }
    if let Some(&bad) = quantities.iter().find(|&&q| !(q > 0.0)) {
        return Err(SimError::Domain(format!(
            "power-law fits need positive quantities, got {bad}"
        )));
    }

    let xs: Vec<f64> = nus.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = quantities.iter().map(|q| q.ln()).collect();
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean) * (y - y_mean)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let slope_stderr = (ss_res / (n - 2.0) / sxx).sqrt();
    Ok(ScalingFit {
        nus: nus.to_vec(),
        quantities: quantities.to_vec(),
        slope,
        intercept,
        r_squared,
        slope_stderr,
    })
}

/// Time-and-ensemble averaged modal energies E_k = avg |c_k|^2
/// (= (1/2) avg (a_k^2 + b_k^2)), k = 1..N/2.
#[derive(Debug, Clone)]
pub struct SpectrumEstimate {
    /// e_k[k - 1] is E_k.
    pub e_k: Vec<f64>,
    pub time_window: (f64, f64),
    pub ensemble_size: usize,
    pub grid_size: usize,
}

pub fn energy_spectrum(
    states: &[PeriodicField],
    time_window: (f64, f64),
    ensemble_size: usize,
) -> Result<SpectrumEstimate> {
    let first = states
        .first()
        .ok_or_else(|| SimError::Domain("energy spectrum of an empty sample set".into()))?;
    let n = first.grid_size();
    let mut e_k = vec![0.0; n / 2];
    for state in states {
        if state.grid_size() != n {
            return Err(SimError::GridMismatch {
                expected: n,
                got: state.grid_size(),
            });
        }
        let spec = state.to_spectral();
        for (k, e) in e_k.iter_mut().enumerate() {
            *e += spec.coeffs()[k + 1].norm_sqr();
        }
    }
    let inv = 1.0 / states.len() as f64;
    for e in e_k.iter_mut() {
        *e *= inv;
    }
    Ok(SpectrumEstimate {
        e_k,
        time_window,
        ensemble_size,
        grid_size: n,
    })
}

/// Integer wavenumber window I(s, theta) = [nu^{-s+theta}, nu^{-s-theta})
/// intersected with the resolved band [1, N/2].
pub fn layer_window(nu: f64, s: f64, theta: f64, grid_size: usize) -> Result<(usize, usize)> {
    if !(nu > 0.0 && nu < 1.0) || !(s > 0.0) || !(theta > 0.0) {
        return Err(SimError::Domain(format!(
            "layer windows need nu in (0,1) and positive s, theta; got nu={nu}, s={s}, theta={theta}"
        )));
    }
    let lo = nu.powf(-s + theta);
    let hi = nu.powf(-s - theta);
    let k_lo = (lo.ceil() as usize).max(1);
    // Half-open on the right: the largest admitted integer is the last one
    // strictly below hi.
    let k_hi_raw = hi.ceil() as usize;
    let k_hi = (k_hi_raw - 1).min(grid_size / 2);
    if k_lo > k_hi {
        return Err(SimError::Domain(format!(
            "layer window [{lo:.3}, {hi:.3}) at nu={nu}, s={s}, theta={theta} \
             contains no resolved modes on an N={grid_size} grid"
        )));
    }
    Ok((k_lo, k_hi))
}

/// Layered average F_{s,theta}: mean over the window of avg |u-hat^k|^2 = 2 E_k.
pub fn layer_average(spec: &SpectrumEstimate, nu: f64, s: f64, theta: f64) -> Result<f64> {
    let (k_lo, k_hi) = layer_window(nu, s, theta, spec.grid_size)?;
    let sum: f64 = (k_lo..=k_hi).map(|k| 2.0 * spec.e_k[k - 1]).sum();
    Ok(sum / (k_hi - k_lo + 1) as f64)
}

/// Gradient statistics of one kick interval: the sup over samples of the
/// largest (signed) slope, and the time average of the enstrophy int u_x^2.
pub fn intermittency_stats(samples: &[(f64, PeriodicField)]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(SimError::Domain(
            "intermittency statistics of an empty trajectory".into(),
        ));
    }
    let mut sup_max_ux = f64::NEG_INFINITY;
    let mut enstrophies = Vec::with_capacity(samples.len());
    for (t, u) in samples {
        let ux = u.to_spectral().derivative(1)?.to_physical();
        let max_slope = ux
            .samples()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        sup_max_ux = sup_max_ux.max(max_slope);
        let h1 = u.sobolev_norm(1, 2.0)?;
        enstrophies.push((*t, h1 * h1));
    }
    let t0 = enstrophies[0].0;
    let t1 = enstrophies.last().unwrap().0;
    let mean_sq_grad = if t1 > t0 {
        let mut integral = 0.0;
        for pair in enstrophies.windows(2) {
            integral += (pair[1].0 - pair[0].0) * (pair[0].1 + pair[1].1) / 2.0;
        }
        integral / (t1 - t0)
    } else {
        enstrophies[0].1
    };
    Ok((sup_max_ux, mean_sq_grad))
}

/// Everything measured on one realization, in recording order.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub realization_id: u64,
    pub nu: f64,
    pub grid_size: usize,
    pub norms: Vec<NormSeries>,
    /// max_x u_x per sample (signed; positive side of the intermittency contrast).
    pub grad_max: Vec<Sample>,
    /// min_x u_x per sample (signed; the large negative gradients).
    pub grad_min: Vec<Sample>,
    /// Fields retained at spectrum-sampling times.
    pub sampled_fields: Vec<(f64, PeriodicField)>,
    pub ledgers: Vec<DissipationLedger>,
    /// Per kick i: (|u_i^-|^2, |u_i|^2, <u_i^-, zeta_i>, |zeta_i|^2).
    pub kick_balance: Vec<(f64, f64, f64, f64)>,
}
