//! Acceptance suite. Every test prints exactly one verdict line,
//!
//!   criterion N: PASS|FAIL <measured values vs required band> [<elapsed>]
//!
//! and then asserts the verdict, so the numbers are visible in the log
//! whether or not the run survives. Criteria that share the long viscosity
//! sweep pull it from a OnceLock; the sweep runs once per process and its
//! wall time is quoted alongside the per-test elapsed time.

use burgulence::experiment::{
    independence_check, run_ensembles, ExperimentConfig, NuSummary, RunResults,
};
use burgulence::{
    advance_interval, builtin_flux, cfl_dt, cole_hopf, estimate_moment, fit_power_law,
    layer_average, simulate_realization, step, KickDistribution, KickStream, PeriodicField,
    SolverState, DEFAULT_CFL_SAFETY,
};
use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::Instant;

const MASTER_SEED: u64 = 20260816;
const SWEEP_NUS: [f64; 5] = [0.05, 0.02, 0.01, 0.005, 0.002];

fn sweep_config() -> ExperimentConfig {
    ExperimentConfig {
        nu_sweep: SWEEP_NUS.to_vec(),
        ensemble_size: 50,
        master_seed: MASTER_SEED,
        ..ExperimentConfig::default()
    }
}

struct Sweep {
    results: RunResults,
    wall: f64,
}

static SWEEP: OnceLock<Sweep> = OnceLock::new();

fn sweep() -> &'static Sweep {
    SWEEP.get_or_init(|| {
        let started = Instant::now();
        let results = run_ensembles(&sweep_config()).expect("viscosity sweep must complete");
        Sweep {
            results,
            wall: started.elapsed().as_secs_f64(),
        }
    })
}

fn summaries() -> &'static [NuSummary] {
    &sweep().results.summaries
}

fn report(criterion: &str, ok: bool, detail: String, started: Instant) {
    println!(
        "criterion {criterion}: {} {} [{:.1}s]",
        if ok { "PASS" } else { "FAIL" },
        detail,
        started.elapsed().as_secs_f64()
    );
    assert!(ok, "criterion {criterion}: {detail}");
}

fn linf(a: &PeriodicField, b: &PeriodicField) -> f64 {
    a.samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    sxy / sxx
}

#[test]
fn criterion_01_solver_matches_closed_form() {
    let started = Instant::now();
    let flux = builtin_flux("classical").unwrap();
    let (nu, t) = (0.1, 0.5);

    // Production path at N = 512.
    let u0 = PeriodicField::from_fn(512, |x| (2.0 * PI * x).sin()).unwrap();
    let exact = cole_hopf(&u0, nu, t, &flux, 2048).unwrap();
    let (state, _) =
        advance_interval(SolverState::new(u0, 0.0, nu).unwrap(), t, &flux, None).unwrap();
    let err512 = linf(state.u(), &exact);

    // Convergence study with dt shrunk as 1/N^2 so the temporal error stays
    // subdominant to the spatial truncation being measured.
    let mut pts = Vec::new();
    for &n in &[128usize, 256, 512] {
        let u0 = PeriodicField::from_fn(n, |x| (2.0 * PI * x).sin()).unwrap();
        let exact = cole_hopf(&u0, nu, t, &flux, 2048).unwrap();
        let mut state = SolverState::new(u0, 0.0, nu).unwrap();
        let dt = cfl_dt(&state, &flux, DEFAULT_CFL_SAFETY) * 128.0 / n as f64;
        let n_steps = (t / dt).ceil() as usize;
        let h = t / n_steps as f64;
        for _ in 0..n_steps {
            state = step(&state, h, &flux).unwrap();
        }
        pts.push(((n as f64).ln(), linf(state.u(), &exact).max(1e-16).ln()));
    }
    let order = -ls_slope(&pts);

    let ok = err512 < 1e-6 && order >= 4.0;
    report(
        "1",
        ok,
        format!("L_inf at N=512 = {err512:.3e} (< 1e-6); convergence order {order:.2} (>= 4)"),
        started,
    );
}

#[test]
fn criterion_02_energy_ledgers_close() {
    let started = Instant::now();
    let config = ExperimentConfig {
        nu_sweep: vec![0.05],
        t_total: 10.0,
        master_seed: MASTER_SEED,
        ..ExperimentConfig::default()
    };
    let record = simulate_realization(&config, 0.05, 0).unwrap();
    assert_eq!(record.ledgers.len(), 10);
    let worst = record
        .ledgers
        .iter()
        .map(|l| l.residual())
        .fold(0.0, f64::max);
    let all_nonneg = record.ledgers.iter().all(|l| l.a_i >= 0.0);
    report(
        "2",
        all_nonneg && worst <= 1e-5,
        format!(
            "10 kick intervals at nu=0.05: max relative residual {worst:.2e} (<= 1e-5), \
             all A_i nonnegative: {all_nonneg}"
        ),
        started,
    );
}

#[test]
fn criterion_03_gradient_upper_bound() {
    let started = Instant::now();
    let s = sweep();
    let targets: Vec<&NuSummary> = s
        .results
        .summaries
        .iter()
        .filter(|x| x.nu == 0.05 || x.nu == 0.01)
        .collect();
    assert_eq!(targets.len(), 2);
    let max_grad = targets
        .iter()
        .map(|x| x.grad_sup_max)
        .fold(f64::NEG_INFINITY, f64::max);
    let grad_violations = s
        .results
        .violations
        .iter()
        .filter(|v| v.invariant.contains("gradient bound"))
        .count();
    let ok = max_grad <= 1.001 && grad_violations == 0;
    report(
        "3",
        ok,
        format!(
            "sup max u_x = {max_grad:.4} (<= 1.001) over 50 realizations at nu in {{0.05, 0.01}}, \
             second half of every kick interval; {grad_violations} violations \
             [shared sweep {:.0}s]",
            s.wall
        ),
        started,
    );
}

#[test]
fn criterion_04_h1_energy_scaling() {
    let started = Instant::now();
    let means: Vec<f64> = summaries().iter().map(|s| s.norm_stats[0].mean).collect();
    let fit = fit_power_law(&SWEEP_NUS, &means).unwrap();
    let ok = (fit.slope + 1.0).abs() <= 0.2 && fit.r_squared >= 0.98;
    report(
        "4",
        ok,
        format!(
            "time-averaged E|u|_1^2 slope {:.3} (want -1.0 +- 0.2), r^2 = {:.4} (>= 0.98) \
             [shared sweep {:.0}s]",
            fit.slope,
            fit.r_squared,
            sweep().wall
        ),
        started,
    );
}

#[test]
fn criterion_05_h2_energy_scaling() {
    let started = Instant::now();
    let means: Vec<f64> = summaries().iter().map(|s| s.norm_stats[1].mean).collect();
    let fit = fit_power_law(&SWEEP_NUS, &means).unwrap();
    let ok = (fit.slope + 3.0).abs() <= 0.4;
    report(
        "5",
        ok,
        format!(
            "time-averaged E|u|_2^2 slope {:.3} (want -3.0 +- 0.4), r^2 = {:.4}",
            fit.slope, fit.r_squared
        ),
        started,
    );
}

#[test]
fn criterion_06_w11_boundedness() {
    let started = Instant::now();
    let means: Vec<f64> = summaries().iter().map(|s| s.norm_stats[2].mean).collect();
    let center = means.iter().sum::<f64>() / means.len() as f64;
    let max_dev = means
        .iter()
        .map(|v| (v / center - 1.0).abs())
        .fold(0.0, f64::max);
    let fit = fit_power_law(&SWEEP_NUS, &means).unwrap();
    let ok = max_dev < 0.25 && fit.slope.abs() <= 0.15;
    report(
        "6",
        ok,
        format!(
            "interval-sup |u|_{{1,1}} means {:?} vary {:.1}% about {:.3} (< 25%), \
             slope {:.3} (0.0 +- 0.15)",
            means
                .iter()
                .map(|v| (v * 1e3).round() / 1e3)
                .collect::<Vec<_>>(),
            100.0 * max_dev,
            center,
            fit.slope
        ),
        started,
    );
}

#[test]
fn criterion_07_gradient_intermittency_contrast() {
    let started = Instant::now();
    let s = summaries();
    let max_grad = s
        .iter()
        .map(|x| x.grad_sup_max)
        .fold(f64::NEG_INFINITY, f64::max);
    let pos_ok = max_grad <= 1.001;
    // The negative side is reported, not asserted: ensemble/time mean of
    // min_x u_x, magnitude fitted against nu.
    let mags: Vec<f64> = s.iter().map(|x| -x.grad_min_mean).collect();
    let neg_detail = if mags.iter().all(|&m| m > 0.0) {
        let fit = fit_power_law(&SWEEP_NUS, &mags).unwrap();
        format!(
            "reported: |mean min u_x| slope {:.3} (steeper than -0.5: {}), magnitudes {:?}",
            fit.slope,
            fit.slope <= -0.5,
            mags.iter()
                .map(|v| (v * 1e2).round() / 1e2)
                .collect::<Vec<_>>()
        )
    } else {
        format!("reported: mean min u_x not negative everywhere: {mags:?}")
    };
    report(
        "7",
        pos_ok,
        format!("sup max u_x = {max_grad:.4} (<= 1.001, hard assertion); {neg_detail}"),
        started,
    );
}

#[test]
fn criterion_08_spectrum_pivot() {
    let started = Instant::now();
    // nu = 0.005 rerun at N = 4096: the pinned band reaches k = 800, past
    // the production grid's dealias cut, so this criterion gets its own
    // ensemble with the resolution overridden.
    let config = ExperimentConfig {
        nu_sweep: vec![0.005],
        ensemble_size: 16,
        master_seed: MASTER_SEED,
        grid_override: Some(4096),
        ..ExperimentConfig::default()
    };
    let results = run_ensembles(&config).unwrap();
    let spectrum = &results.summaries[0].spectrum;
    assert!(spectrum.e_k[..800].iter().all(|&e| e > 0.0));

    // Local slope across k in [nu^{-1}/2, 2 nu^{-1}] = [100, 400].
    let pts: Vec<(f64, f64)> = (100..=400)
        .map(|k| ((k as f64).ln(), spectrum.e_k[k - 1].ln()))
        .collect();
    let slope = ls_slope(&pts);
    let slope_ok = (-3.0..=-1.2).contains(&slope);

    // Dissipation-range collapse: E_k at k = 4/nu versus k = 1/nu.
    let ratio = spectrum.e_k[799] / spectrum.e_k[199];
    let ratio_ok = ratio < 1e-3;

    report(
        "8",
        slope_ok && ratio_ok,
        format!(
            "E_k slope over k in [100, 400] = {slope:.2} (want within [-3, -1.2]); \
             E_800/E_200 = {ratio:.2e} (< 1e-3)"
        ),
        started,
    );
}

#[test]
fn criterion_09_layered_spectral_averages() {
    let started = Instant::now();
    let s = summaries();
    let f1: Vec<f64> = s
        .iter()
        .map(|x| layer_average(&x.spectrum, x.nu, 1.0, 0.25).unwrap())
        .collect();
    let fit = fit_power_law(&SWEEP_NUS, &f1).unwrap();
    let slope_ok = (1.5..=3.0).contains(&fit.slope);

    // F_{3/2} / F_1 must fall as nu shrinks, over the viscosities whose
    // s = 3/2 window intersects the resolved band (at nu = 0.002 the window
    // starts above N/2 and the layered average is undefined by contract).
    let mut ratios = Vec::new();
    let mut undefined = Vec::new();
    for (x, &f1v) in s.iter().zip(&f1) {
        match layer_average(&x.spectrum, x.nu, 1.5, 0.25) {
            Ok(f15) => ratios.push((x.nu, f15 / f1v)),
            Err(_) => undefined.push(x.nu),
        }
    }
    let monotone = ratios.len() >= 2 && ratios.windows(2).all(|w| w[1].1 < w[0].1);

    report(
        "9",
        slope_ok && monotone,
        format!(
            "F_{{1,0.25}} slope {:.2} (want within [1.5, 3.0]), r^2 = {:.2}; \
             F_{{1.5}}/F_1 = [{}] monotone decreasing: {monotone} \
             (undefined at nu in {undefined:?}: window above resolved band)",
            fit.slope,
            fit.r_squared,
            ratios
                .iter()
                .map(|(nu, r)| format!("{nu}: {r:.2e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        started,
    );
}

#[test]
fn criterion_10_initial_condition_independence() {
    let started = Instant::now();
    let config = ExperimentConfig {
        nu_sweep: vec![0.05],
        ensemble_size: 50,
        master_seed: MASTER_SEED,
        ..ExperimentConfig::default()
    };
    let n = config.grid_for(0.05);
    let zero = PeriodicField::zeros(n).unwrap();
    let sine = PeriodicField::from_fn(n, |x| 3.0 * (2.0 * PI * x).sin()).unwrap();
    let ind = independence_check(&config, &zero, &sine).unwrap();
    let row = &ind.rows[0];
    let combined = (row.se_a.powi(2) + row.se_b.powi(2)).sqrt();
    report(
        "10",
        row.passes,
        format!(
            "time-averaged E|u|_1^2 over [2, 12], 50 realizations each: \
             u0=0 gives {:.4} (se {:.2e}), u0=3sin gives {:.4} (se {:.2e}), \
             |diff| = {:.2e} <= 3 x combined se = {:.2e}",
            row.mean_a,
            row.se_a,
            row.mean_b,
            row.se_b,
            (row.mean_a - row.mean_b).abs(),
            3.0 * combined
        ),
        started,
    );
}

#[test]
fn criterion_11_kick_law_properties() {
    let started = Instant::now();
    let dist = KickDistribution::default();

    // Empirical energy input vs the closed form at 1e5 samples.
    let exact = dist.exact_moment(0);
    let est = estimate_moment(&dist, 0, 100_000, MASTER_SEED).unwrap();
    let moment_err = (est.mean - exact).abs() / exact;
    let moment_ok = moment_err <= 0.01;

    // Per-mode means of both quadrature components across 1e5 kicks.
    let stream = KickStream::new(MASTER_SEED, 0, KickDistribution::default());
    let n_samples = 100_000u64;
    let k_max = dist.k_max();
    let mut sums = vec![[0.0f64; 2]; k_max];
    let mut sumsq = vec![[0.0f64; 2]; k_max];
    for i in 1..=n_samples {
        let spec = stream.sample_kick(i, 64).unwrap().to_spectral();
        for (k, (s, s2)) in sums.iter_mut().zip(sumsq.iter_mut()).enumerate() {
            let (a, b) = (spec.a(k + 1), spec.b(k + 1));
            s[0] += a;
            s[1] += b;
            s2[0] += a * a;
            s2[1] += b * b;
        }
    }
    let mut worst_z = 0.0f64;
    for k in 0..k_max {
        for c in 0..2 {
            let mean = sums[k][c] / n_samples as f64;
            let var = (sumsq[k][c] / n_samples as f64 - mean * mean)
                * (n_samples as f64 / (n_samples as f64 - 1.0));
            let se = (var / n_samples as f64).sqrt();
            worst_z = worst_z.max(mean.abs() / se);
        }
    }
    let modes_ok = worst_z <= 4.0;

    // Bit-exact reproducibility of a full (small) run from (config, seed).
    let config = ExperimentConfig {
        nu_sweep: vec![0.05],
        t_total: 6.0,
        ensemble_size: 4,
        master_seed: MASTER_SEED,
        ..ExperimentConfig::default()
    };
    let a = run_ensembles(&config).unwrap();
    let b = run_ensembles(&config).unwrap();
    let sa = &a.summaries[0];
    let sb = &b.summaries[0];
    let bits_ok = sa.norm_stats.iter().zip(&sb.norm_stats).all(|(x, y)| {
        x.mean.to_bits() == y.mean.to_bits() && x.std_error.to_bits() == y.std_error.to_bits()
    }) && sa
        .spectrum
        .e_k
        .iter()
        .zip(&sb.spectrum.e_k)
        .all(|(x, y)| x.to_bits() == y.to_bits())
        && sa.grad_sup_max.to_bits() == sb.grad_sup_max.to_bits()
        && sa.grad_min_mean.to_bits() == sb.grad_min_mean.to_bits();

    report(
        "11",
        moment_ok && modes_ok && bits_ok,
        format!(
            "energy input {:.6} vs closed form {exact:.6} ({:.2}% off, <= 1%); \
             worst per-mode |mean|/se = {worst_z:.2} over {k_max} modes x 2 components \
             at 1e5 samples (<= 4); rerun bit-identical: {bits_ok}",
            est.mean,
            100.0 * moment_err
        ),
        started,
    );
}
