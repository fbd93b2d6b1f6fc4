//! Kicked-trajectory simulation and ensemble aggregation.
//!
//! One realization alternates `advance_interval` over (i, i+1) with
//! `apply_kick` at each integer t = i >= 1; the post-kick value owns the
//! integer timestamp (the trajectory is right-continuous). Realizations are
//! embarrassingly parallel; every random draw is keyed by
//! (master_seed, realization_id, kick_index), so results do not depend on
//! scheduling and rerunning a config is bit-identical.

use super::config::ExperimentConfig;
use crate::diagnostics::{
    energy_spectrum, ensemble_mean, trapezoid_average, KickSide, NormDescriptor, NormSeries,
    Reducer, Sample, SpectrumEstimate, Statistic, TrajectoryRecord,
};
use crate::error::{Result, SimError};
use crate::field::{inner_product, PeriodicField};
use crate::flux::builtin_flux;
use crate::forcing::{apply_kick, KickDistribution, KickStream};
use crate::integrator::{advance_interval, Recorder, SolverState};
use rayon::prelude::*;

/// Times agree to this slack; recorder timestamps are exact at interval
/// boundaries and within a few ulps elsewhere.
const T_EPS: f64 = 1e-9;

/// Relative tolerance of the kick energy bookkeeping identity.
const KICK_BALANCE_TOL: f64 = 1e-10;

/// Relative tolerance of the per-interval dissipation ledger.
const LEDGER_TOL: f64 = 1e-5;

/// Slack on the one-sided gradient bound 2/sigma.
const GRADIENT_SLACK: f64 = 1e-3;

pub fn simulate_realization(
    config: &ExperimentConfig,
    nu: f64,
    realization_id: u64,
) -> Result<TrajectoryRecord> {
    let u0 = config.initial_field(config.grid_for(nu))?;
    simulate_with_u0(config, nu, realization_id, &u0)
}

/// As `simulate_realization` with an explicit start state (the independence
/// check sweeps initial conditions that the config cannot express).
pub fn simulate_with_u0(
    config: &ExperimentConfig,
    nu: f64,
    realization_id: u64,
    u0: &PeriodicField,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    let n = config.grid_for(nu);
    if u0.grid_size() != n {
        return Err(SimError::GridMismatch {
            expected: n,
            got: u0.grid_size(),
        });
    }
    let flux = builtin_flux(&config.flux)?;
    let dist = KickDistribution::new(config.kick_amplitude, config.kick_k_max)?;
    let stream = KickStream::new(config.master_seed, realization_id, dist);

    let mut norms: Vec<NormSeries> = config
        .norms
        .iter()
        .map(|d| NormSeries::new(*d, realization_id))
        .collect();
    let mut grad_max: Vec<Sample> = Vec::new();
    let mut grad_min: Vec<Sample> = Vec::new();
    let mut sampled_fields: Vec<(f64, PeriodicField)> = Vec::new();
    let mut ledgers = Vec::new();
    let mut kick_balance = Vec::new();

    let mut state = SolverState::new(u0.clone(), 0.0, nu)?;
    while state.t() < config.t_total - T_EPS {
        let t0 = state.t();
        let t_end = (t0.floor() + 1.0).min(config.t_total);
        let mut sample_err: Option<SimError> = None;
        {
            let mut hook = |s: &SolverState| {
                if sample_err.is_some() {
                    return;
                }
                if let Err(e) = record_sample(
                    s,
                    (t0, t_end),
                    config,
                    &mut norms,
                    &mut grad_max,
                    &mut grad_min,
                    &mut sampled_fields,
                ) {
                    sample_err = Some(e);
                }
            };
            let recorder = Recorder::new(config.sample_dt, &mut hook)?;
            let (next, ledger) = advance_interval(state, t_end, &flux, Some(recorder))?;
            state = next;
            ledgers.push(ledger);
        }
        if let Some(e) = sample_err {
            return Err(e);
        }

        let t = state.t();
        let i = t.round() as u64;
        if (t - i as f64).abs() < T_EPS && i >= 1 && t < config.t_total - T_EPS {
            let zeta = stream.sample_kick(i, n)?;
            let pre = state.u();
            let pre_energy = pre.lp_norm(2.0)?.powi(2);
            let cross = inner_product(pre, &zeta)?;
            let zeta_energy = zeta.lp_norm(2.0)?.powi(2);
            let post = apply_kick(pre, &zeta)?;
            let post_energy = post.lp_norm(2.0)?.powi(2);
            kick_balance.push((pre_energy, post_energy, cross, zeta_energy));
            state = SolverState::new(post, t, nu)?;
        }
    }

    Ok(TrajectoryRecord {
        realization_id,
        nu,
        grid_size: n,
        norms,
        grad_max,
        grad_min,
        sampled_fields,
        ledgers,
        kick_balance,
    })
}

#[allow(clippy::too_many_arguments)]
fn record_sample(
    s: &SolverState,
    interval: (f64, f64),
    config: &ExperimentConfig,
    norms: &mut [NormSeries],
    grad_max: &mut Vec<Sample>,
    grad_min: &mut Vec<Sample>,
    sampled_fields: &mut Vec<(f64, PeriodicField)>,
) -> Result<()> {
    let t = s.t();
    // Boundary timestamps are produced exactly by the integrator.
    let side = if t == interval.0 {
        KickSide::Plus
    } else if t == interval.1 {
        KickSide::Minus
    } else {
        KickSide::Interior
    };
    let u = s.u();
    for series in norms.iter_mut() {
        let d = series.descriptor;
        series.push(t, side, u.sobolev_norm(d.m, d.p)?)?;
    }
    let ux = u.to_spectral().derivative(1)?.to_physical();
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for &v in ux.samples() {
        hi = hi.max(v);
        lo = lo.min(v);
    }
    grad_max.push(Sample { t, side, value: hi });
    grad_min.push(Sample { t, side, value: lo });

    // Spectrum snapshots live on the coarser left-closed grid
    // t_start, t_start + spectrum_dt, ..., < t_total; at a kick time the
    // post-kick state is the trajectory's value.
    if side != KickSide::Minus && t >= config.t_start_measure - T_EPS && t < config.t_total - T_EPS
    {
        let phase = (t - config.t_start_measure) / config.spectrum_dt;
        if (phase - phase.round()).abs() < 1e-6 {
            sampled_fields.push((t, u.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct NormStat {
    pub descriptor: NormDescriptor,
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Aggregates for one viscosity.
#[derive(Debug, Clone)]
pub struct NuSummary {
    pub nu: f64,
    pub grid_size: usize,
    pub n_ok: usize,
    pub norm_stats: Vec<NormStat>,
    pub spectrum: SpectrumEstimate,
    /// Largest max_x u_x seen anywhere in the second half of any kick
    /// interval (where the one-sided bound applies).
    pub grad_sup_max: f64,
    /// Ensemble mean of the time-averaged min_x u_x over the measurement
    /// window (negative; its magnitude is the intermittency signal).
    pub grad_min_mean: f64,
    pub grad_min_stderr: f64,
}

#[derive(Debug, Clone)]
pub struct ViolationRecord {
    pub nu: f64,
    pub realization_id: u64,
    pub t: f64,
    pub invariant: String,
}

#[derive(Debug, Clone)]
pub struct FailureRecord {
    pub nu: f64,
    pub realization_id: u64,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct RunResults {
    pub summaries: Vec<NuSummary>,
    pub violations: Vec<ViolationRecord>,
    pub failures: Vec<FailureRecord>,
    pub total_realizations: usize,
}

impl RunResults {
    pub fn failed_fraction(&self) -> f64 {
        if self.total_realizations == 0 {
            0.0
        } else {
            self.failures.len() as f64 / self.total_realizations as f64
        }
    }

    /// Failed realizations are excluded from aggregation but more than 1%
    /// of them poisons the run.
    pub fn acceptable_failure_rate(&self) -> bool {
        self.failed_fraction() <= 0.01
    }
}

fn reducer_for(d: &NormDescriptor, config: &ExperimentConfig) -> Reducer {
    match d.statistic {
        Statistic::Instant => Reducer::TimeAverageOfSquare {
            t0: config.t_start_measure,
            t1: config.t_total,
        },
        Statistic::SupOverKickInterval => Reducer::IntervalSupMean {
            k0: config.t_start_measure.ceil() as u64,
            k1: config.t_total.floor() as u64,
        },
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Second-half-of-interval gradient samples: the slice of `samples` where
/// the one-sided bound u_x <= 2/sigma applies (t in [k + 1/2, k + 1), k >= 1;
/// the pre-kick limit at t = k + 1 belongs to interval k).
fn bound_applies(s: &Sample) -> bool {
    let frac = s.t - s.t.floor();
    if s.side == KickSide::Minus && frac.abs() < T_EPS {
        return s.t >= 2.0 - T_EPS;
    }
    s.t >= 1.5 - T_EPS && frac >= 0.5 - T_EPS
}

fn check_invariants(
    record: &TrajectoryRecord,
    grad_bound: f64,
    violations: &mut Vec<ViolationRecord>,
) {
    for ledger in &record.ledgers {
        if ledger.residual() > LEDGER_TOL {
            violations.push(ViolationRecord {
                nu: record.nu,
                realization_id: record.realization_id,
                t: ledger.interval_index as f64,
                invariant: format!(
                    "dissipation ledger residual {:.3e} on [{}, {}]",
                    ledger.residual(),
                    ledger.interval_index,
                    ledger.interval_index + 1
                ),
            });
        }
    }
    for (idx, &(pre, post, cross, zeta)) in record.kick_balance.iter().enumerate() {
        let lhs = post - pre;
        let rhs = 2.0 * cross + zeta;
        let scale = pre.abs().max(post.abs()).max(zeta.abs()).max(1e-12);
        if (lhs - rhs).abs() > KICK_BALANCE_TOL * scale {
            violations.push(ViolationRecord {
                nu: record.nu,
                realization_id: record.realization_id,
                t: (idx + 1) as f64,
                invariant: format!(
                    "kick energy balance off by {:.3e} (relative)",
                    (lhs - rhs).abs() / scale
                ),
            });
        }
    }
    for s in &record.grad_max {
        if bound_applies(s) && s.value > grad_bound {
            violations.push(ViolationRecord {
                nu: record.nu,
                realization_id: record.realization_id,
                t: s.t,
                invariant: format!(
                    "gradient bound: max u_x = {:.6} > {:.6} at t = {}",
                    s.value, grad_bound, s.t
                ),
            });
        }
    }
}

/// Runs and aggregates the full ensemble at one viscosity from one start
/// state. Invariant violations are collected, not raised.
pub fn run_one_ensemble(
    config: &ExperimentConfig,
    nu: f64,
    u0: &PeriodicField,
) -> Result<(NuSummary, Vec<ViolationRecord>, Vec<FailureRecord>)> {
    let outcomes: Vec<(u64, Result<TrajectoryRecord>)> = (0..config.ensemble_size as u64)
        .into_par_iter()
        .map(|id| (id, simulate_with_u0(config, nu, id, u0)))
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok(r) => records.push(r),
            Err(e) => failures.push(FailureRecord {
                nu,
                realization_id: id,
                error: e.to_string(),
            }),
        }
    }
    if records.len() < 2 {
        return Err(SimError::Domain(format!(
            "only {} of {} realizations at nu = {nu} succeeded; cannot aggregate",
            records.len(),
            config.ensemble_size
        )));
    }

    let flux = builtin_flux(&config.flux)?;
    let grad_bound = 2.0 / flux.sigma() * (1.0 + GRADIENT_SLACK);
    let mut violations = Vec::new();
    for r in &records {
        check_invariants(r, grad_bound, &mut violations);
    }

    let mut norm_stats = Vec::with_capacity(config.norms.len());
    for (idx, d) in config.norms.iter().enumerate() {
        let series: Vec<NormSeries> = records.iter().map(|r| r.norms[idx].clone()).collect();
        let (mean, std_error) = ensemble_mean(&series, &reducer_for(d, config))?;
        norm_stats.push(NormStat {
            descriptor: *d,
            mean,
            std_error,
            n: records.len(),
        });
    }

    let grad_sup_max = records
        .iter()
        .flat_map(|r| r.grad_max.iter())
        .filter(|s| bound_applies(s))
        .fold(f64::NEG_INFINITY, |m, s| m.max(s.value));
    let grad_min_avgs: Vec<f64> = records
        .iter()
        .map(|r| trapezoid_average(&r.grad_min, config.t_start_measure, config.t_total, |v| v))
        .collect::<Result<_>>()?;
    let (grad_min_mean, grad_min_stderr) = mean_and_se(&grad_min_avgs);

    let n_ok = records.len();
    let fields: Vec<PeriodicField> = records
        .into_iter()
        .flat_map(|r| r.sampled_fields.into_iter().map(|(_, u)| u))
        .collect();
    let spectrum = energy_spectrum(&fields, (config.t_start_measure, config.t_total), n_ok)?;

    Ok((
        NuSummary {
            nu,
            grid_size: config.grid_for(nu),
            n_ok,
            norm_stats,
            spectrum,
            grad_sup_max,
            grad_min_mean,
            grad_min_stderr,
        },
        violations,
        failures,
    ))
}

/// The whole viscosity sweep, in memory.
pub fn run_ensembles(config: &ExperimentConfig) -> Result<RunResults> {
    config.validate()?;
    let body = || -> Result<RunResults> {
        let mut summaries = Vec::new();
        let mut violations = Vec::new();
        let mut failures = Vec::new();
        for &nu in &config.nu_sweep {
            let u0 = config.initial_field(config.grid_for(nu))?;
            let (summary, v, f) = run_one_ensemble(config, nu, &u0)?;
            summaries.push(summary);
            violations.extend(v);
            failures.extend(f);
        }
        Ok(RunResults {
            summaries,
            violations,
            failures,
            total_realizations: config.nu_sweep.len() * config.ensemble_size,
        })
    };
    match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| SimError::Config(format!("worker pool: {e}")))?
            .install(body),
        None => body(),
    }
}

#[derive(Debug, Clone)]
pub struct IndependenceRow {
    pub descriptor: NormDescriptor,
    pub mean_a: f64,
    pub se_a: f64,
    pub mean_b: f64,
    pub se_b: f64,
    /// |mean_a - mean_b| <= 3 sqrt(se_a^2 + se_b^2)
    pub passes: bool,
}

#[derive(Debug, Clone)]
pub struct IndependenceReport {
    pub nu: f64,
    pub rows: Vec<IndependenceRow>,
    pub all_pass: bool,
}

/// Runs the configured ensemble from two different start states and reports,
/// per measured norm, whether the quasi-stationary means agree within 3
/// combined standard errors.
pub fn independence_check(
    config: &ExperimentConfig,
    u0_a: &PeriodicField,
    u0_b: &PeriodicField,
) -> Result<IndependenceReport> {
    config.validate()?;
    if config.nu_sweep.len() != 1 {
        return Err(SimError::Config(format!(
            "the independence check runs at a single viscosity; sweep has {}",
            config.nu_sweep.len()
        )));
    }
    let nu = config.nu_sweep[0];
    let body = || -> Result<(NuSummary, NuSummary)> {
        let (a, _, fa) = run_one_ensemble(config, nu, u0_a)?;
        let (b, _, fb) = run_one_ensemble(config, nu, u0_b)?;
        if !fa.is_empty() || !fb.is_empty() {
            return Err(SimError::Domain(format!(
                "{} realizations failed during the independence check",
                fa.len() + fb.len()
            )));
        }
        Ok((a, b))
    };
    let (a, b) = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| SimError::Config(format!("worker pool: {e}")))?
            .install(body),
        None => body(),
    }?;

    let rows: Vec<IndependenceRow> = a
        .norm_stats
        .iter()
        .zip(&b.norm_stats)
        .map(|(sa, sb)| {
            let diff = (sa.mean - sb.mean).abs();
            let combined = (sa.std_error.powi(2) + sb.std_error.powi(2)).sqrt();
            IndependenceRow {
                descriptor: sa.descriptor,
                mean_a: sa.mean,
                se_a: sa.std_error,
                mean_b: sb.mean,
                se_b: sb.std_error,
                passes: diff <= 3.0 * combined,
            }
        })
        .collect();
    let all_pass = rows.iter().all(|r| r.passes);
    Ok(IndependenceReport { nu, rows, all_pass })
}
