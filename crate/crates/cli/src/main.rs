//! Command-line front end: full experiment runs, short invariant checks,
//! the closed-form oracle verification suite, and the initial-condition
//! independence report.
//!
//! Exit status: 0 when every check passes, 1 when the physics or the fits
//! fail, 2 for configuration and usage errors.

use burgulence::experiment::{
    independence_check, run_ensembles, run_experiment, ExperimentConfig, InitialCondition,
};
use burgulence::{
    advance_interval, builtin_flux, cfl_dt, cole_hopf, step, PeriodicField, SimError, SolverState,
    DEFAULT_CFL_SAFETY,
};
use clap::{Parser, Subcommand};
use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "burgulence",
    version,
    about = "Simulator and measurement harness for the kick-forced generalized Burgers equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's worker-thread count.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (run subcommand).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured sweep and persist CSVs plus the manifest.
    Run { config: PathBuf },
    /// Short run that checks the energy and gradient invariants only.
    CheckInvariants { config: PathBuf },
    /// Verify the integrator against the closed-form solution.
    OracleVerify,
    /// Compare quasi-stationary statistics from two initial conditions.
    Independence {
        config: PathBuf,
        /// Second initial condition (zero or sin:<amplitude>).
        #[arg(long, default_value = "sin:3")]
        u0_b: String,
    },
}

fn load_config(
    path: &PathBuf,
    seed: Option<u64>,
    workers: Option<usize>,
) -> Result<ExperimentConfig, SimError> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(w) = workers {
        cfg.workers = Some(w);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(cfg: &ExperimentConfig, out_dir: Option<PathBuf>) -> Result<bool, SimError> {
    let dir = out_dir
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("burgulence_out"));
    let report = run_experiment(cfg, &dir)?;
    for s in &report.results.summaries {
        print!("nu={:?} n={} ok={}", s.nu, s.grid_size, s.n_ok);
        for stat in &s.norm_stats {
            print!(
                " m{}p{}={:.6e}(se {:.2e})",
                stat.descriptor.m, stat.descriptor.p, stat.mean, stat.std_error
            );
        }
        println!(
            " grad_max={:.4} grad_min={:.4}",
            s.grad_sup_max, s.grad_min_mean
        );
    }
    for c in &report.fit_checks {
        println!(
            "fit m{}: slope={:.4} (want {} +- {}) r2={:.4} {}",
            c.descriptor.m,
            c.slope,
            c.expected_slope,
            c.tolerance,
            c.r_squared,
            if c.ok { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "violations={} failures={} outputs={}",
        report.results.violations.len(),
        report.results.failures.len(),
        report.out_dir.display()
    );
    println!("{}", if report.success { "SUCCESS" } else { "FAILURE" });
    Ok(report.success)
}

fn cmd_check_invariants(cfg: &ExperimentConfig) -> Result<bool, SimError> {
    let mut short = cfg.clone();
    short.t_total = cfg.t_total.min(cfg.t_start_measure + 2.0);
    short.ensemble_size = cfg.ensemble_size.min(4);
    short.expected_slopes = None;
    let results = run_ensembles(&short)?;
    for v in &results.violations {
        println!(
            "VIOLATION nu={:?} realization={} t={} {}",
            v.nu, v.realization_id, v.t, v.invariant
        );
    }
    for f in &results.failures {
        println!(
            "FAILED nu={:?} realization={} {}",
            f.nu, f.realization_id, f.error
        );
    }
    let ok = results.violations.is_empty() && results.acceptable_failure_rate();
    println!(
        "invariants: {} ({} violations, {} failed realizations)",
        if ok { "PASS" } else { "FAIL" },
        results.violations.len(),
        results.failures.len()
    );
    Ok(ok)
}

fn linf(a: &PeriodicField, b: &PeriodicField) -> f64 {
    a.samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Integrator vs the closed-form solution on a kick-free run: a pointwise
/// check at N = 512 under the production time step, then a convergence
/// study with the step shrunk as 1/N^2 so temporal error stays subdominant
/// to the spectral truncation being measured.
fn cmd_oracle_verify() -> Result<bool, SimError> {
    let flux = builtin_flux("classical")?;
    let nu = 0.1;
    let t = 0.5;

    let u0 = PeriodicField::from_fn(512, |x| (2.0 * PI * x).sin())?;
    let exact = cole_hopf(&u0, nu, t, &flux, 2048)?;
    let (state, _) = advance_interval(SolverState::new(u0, 0.0, nu)?, t, &flux, None)?;
    let err_production = linf(state.u(), &exact);
    let point_ok = err_production < 1e-6;
    println!(
        "pointwise N=512: L_inf = {:.3e} (< 1e-6) {}",
        err_production,
        if point_ok { "PASS" } else { "FAIL" }
    );

    let mut logs = Vec::new();
    for &n in &[128usize, 256, 512] {
        let u0 = PeriodicField::from_fn(n, |x| (2.0 * PI * x).sin())?;
        let exact = cole_hopf(&u0, nu, t, &flux, 2048)?;
        let mut state = SolverState::new(u0, 0.0, nu)?;
        let dt = cfl_dt(&state, &flux, DEFAULT_CFL_SAFETY) * 128.0 / n as f64;
        let n_steps = (t / dt).ceil() as usize;
        let h = t / n_steps as f64;
        for _ in 0..n_steps {
            state = step(&state, h, &flux)?;
        }
        let err = linf(state.u(), &exact).max(1e-16);
        println!("convergence N={n}: L_inf = {err:.3e}");
        logs.push(((n as f64).ln(), err.ln()));
    }
    let n_pts = logs.len() as f64;
    let xm = logs.iter().map(|p| p.0).sum::<f64>() / n_pts;
    let ym = logs.iter().map(|p| p.1).sum::<f64>() / n_pts;
    let sxx: f64 = logs.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    let order = -sxy / sxx;
    let order_ok = order >= 4.0;
    println!(
        "convergence order = {:.2} (>= 4) {}",
        order,
        if order_ok { "PASS" } else { "FAIL" }
    );
    Ok(point_ok && order_ok)
}

fn parse_u0(text: &str) -> Result<InitialCondition, SimError> {
    if text == "zero" {
        return Ok(InitialCondition::Zero);
    }
    if let Some(amp) = text.strip_prefix("sin:") {
        let amplitude: f64 = amp
            .parse()
            .map_err(|_| SimError::Config(format!("bad amplitude in {text:?}")))?;
        return Ok(InitialCondition::Sine { amplitude });
    }
    Err(SimError::Config(format!(
        "unknown initial condition {text:?}"
    )))
}

fn cmd_independence(cfg: &ExperimentConfig, u0_b: &str) -> Result<bool, SimError> {
    let mut single = cfg.clone();
    single.nu_sweep = vec![cfg.nu_sweep[0]];
    let n = single.grid_for(single.nu_sweep[0]);
    let a = single.initial_field(n)?;
    let b = parse_u0(u0_b)?.build(n)?;
    let report = independence_check(&single, &a, &b)?;
    for row in &report.rows {
        let combined = (row.se_a.powi(2) + row.se_b.powi(2)).sqrt();
        println!(
            "nu={:?} m={} p={}: a={:.6e} b={:.6e} |diff|={:.3e} 3se={:.3e} {}",
            report.nu,
            row.descriptor.m,
            row.descriptor.p,
            row.mean_a,
            row.mean_b,
            (row.mean_a - row.mean_b).abs(),
            3.0 * combined,
            if row.passes { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "independence: {}",
        if report.all_pass { "PASS" } else { "FAIL" }
    );
    Ok(report.all_pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config } => load_config(config, cli.seed, cli.workers)
            .map_err(|e| (e, true))
            .and_then(|cfg| cmd_run(&cfg, cli.out_dir.clone()).map_err(|e| (e, false))),
        Command::CheckInvariants { config } => load_config(config, cli.seed, cli.workers)
            .map_err(|e| (e, true))
            .and_then(|cfg| cmd_check_invariants(&cfg).map_err(|e| (e, false))),
        Command::OracleVerify => cmd_oracle_verify().map_err(|e| (e, false)),
        Command::Independence { config, u0_b } => load_config(config, cli.seed, cli.workers)
            .map_err(|e| (e, true))
            .and_then(|cfg| cmd_independence(&cfg, u0_b).map_err(|e| (e, false))),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err((e, config_stage)) => {
            eprintln!("error: {e}");
            if config_stage || matches!(e, SimError::Config(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
