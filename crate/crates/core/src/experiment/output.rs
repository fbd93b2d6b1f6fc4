//! Persisted outputs: plot-ready CSVs, the invariant-violation report, and
//! the run manifest. All numeric CSV cells use 17 significant digits so a
//! rerun of the same (config, seed) is byte-identical.

use super::config::{render_p, ExperimentConfig};
use super::run::{run_ensembles, RunResults};
use crate::diagnostics::{fit_power_law, layer_window, NormDescriptor, Statistic};
use crate::error::{Result, SimError};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn sha256_hex(data: &[u8]) -> String {
    hex(&Sha256::digest(data))
}

/// CSV cell for a float: round-trip precision, stable across runs.
fn cell(v: f64) -> String {
    format!("{v:.16e}")
}

fn norm_tag(d: &NormDescriptor) -> String {
    let stat = match d.statistic {
        Statistic::Instant => "avg_sq",
        Statistic::SupOverKickInterval => "sup",
    };
    format!("m{}_p{}_{}", d.m, render_p(d.p), stat)
}

#[derive(Debug, Clone)]
pub struct FitCheck {
    pub descriptor: NormDescriptor,
    pub slope: f64,
    pub r_squared: f64,
    pub expected_slope: f64,
    pub tolerance: f64,
    pub ok: bool,
    pub note: String,
}

#[derive(Debug)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub results: RunResults,
    pub fit_checks: Vec<FitCheck>,
    pub manifest_path: PathBuf,
    /// No violations, failure rate within policy, all configured fits in band.
    pub success: bool,
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<(String, String)> {
    let path = dir.join(name);
    std::fs::write(&path, content.as_bytes())?;
    Ok((name.to_string(), sha256_hex(content.as_bytes())))
}

/// Runs the configured sweep and persists every output under `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let started = Instant::now();
    let results = run_ensembles(config)?;
    let wall = started.elapsed().as_secs_f64();

    let mut outputs: Vec<(String, String)> = Vec::new();

    // One scaling CSV per configured norm.
    for (idx, d) in config.norms.iter().enumerate() {
        let mut csv = String::from("nu,mean,stderr,n_realizations\n");
        for s in &results.summaries {
            let stat = &s.norm_stats[idx];
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                cell(s.nu),
                cell(stat.mean),
                cell(stat.std_error),
                stat.n
            );
        }
        outputs.push(write_file(
            out_dir,
            &format!("norm_scaling_{}.csv", norm_tag(d)),
            &csv,
        )?);
    }

    for s in &results.summaries {
        let mut csv = String::from("k,e_k\n");
        for (i, &e) in s.spectrum.e_k.iter().enumerate() {
            let _ = writeln!(csv, "{},{}", i + 1, cell(e));
        }
        outputs.push(write_file(
            out_dir,
            &format!("spectrum_nu{:?}.csv", s.nu),
            &csv,
        )?);
    }

    // Layered averages at the exponents the scaling theory pins down.
    let mut layers = String::from("nu,s,theta,k_lo,k_hi,f\n");
    for summary in &results.summaries {
        for s_exp in [1.0, 1.5] {
            let theta = 0.25;
            match layer_window(summary.nu, s_exp, theta, summary.grid_size) {
                Ok((k_lo, k_hi)) => {
                    let f: f64 = (k_lo..=k_hi)
                        .map(|k| 2.0 * summary.spectrum.e_k[k - 1])
                        .sum::<f64>()
                        / (k_hi - k_lo + 1) as f64;
                    let _ = writeln!(
                        layers,
                        "{},{},{},{},{},{}",
                        cell(summary.nu),
                        cell(s_exp),
                        cell(theta),
                        k_lo,
                        k_hi,
                        cell(f)
                    );
                }
                // Window off the resolved band: row omitted by design.
                Err(_) => continue,
            }
        }
    }
    outputs.push(write_file(out_dir, "layer_averages.csv", &layers)?);

    let mut grad = String::from("nu,sup_max_ux,mean_min_ux,stderr_min_ux\n");
    for s in &results.summaries {
        let _ = writeln!(
            grad,
            "{},{},{},{}",
            cell(s.nu),
            cell(s.grad_sup_max),
            cell(s.grad_min_mean),
            cell(s.grad_min_stderr)
        );
    }
    outputs.push(write_file(out_dir, "intermittency.csv", &grad)?);

    let mut viol = String::from("nu,realization_id,t,invariant\n");
    for v in &results.violations {
        let _ = writeln!(
            viol,
            "{},{},{},{:?}",
            cell(v.nu),
            v.realization_id,
            cell(v.t),
            v.invariant
        );
    }
    outputs.push(write_file(out_dir, "violations.csv", &viol)?);

    let mut fails = String::from("nu,realization_id,error\n");
    for f in &results.failures {
        let _ = writeln!(fails, "{},{},{:?}", cell(f.nu), f.realization_id, f.error);
    }
    outputs.push(write_file(out_dir, "failures.csv", &fails)?);

    // Configured slope bands, checked against the fitted exponents.
    let mut fit_checks = Vec::new();
    if let Some(bands) = &config.expected_slopes {
        let nus: Vec<f64> = results.summaries.iter().map(|s| s.nu).collect();
        for (idx, (d, band)) in config.norms.iter().zip(bands).enumerate() {
            let means: Vec<f64> = results
                .summaries
                .iter()
                .map(|s| s.norm_stats[idx].mean)
                .collect();
            let check = match fit_power_law(&nus, &means) {
                Ok(fit) => {
                    let ok = (fit.slope - band.slope).abs() <= band.tolerance;
                    FitCheck {
                        descriptor: *d,
                        slope: fit.slope,
                        r_squared: fit.r_squared,
                        expected_slope: band.slope,
                        tolerance: band.tolerance,
                        ok,
                        note: String::new(),
                    }
                }
                Err(e) => FitCheck {
                    descriptor: *d,
                    slope: f64::NAN,
                    r_squared: f64::NAN,
                    expected_slope: band.slope,
                    tolerance: band.tolerance,
                    ok: false,
                    note: e.to_string(),
                },
            };
            fit_checks.push(check);
        }
        let mut csv = String::from("norm,slope,r_squared,expected_slope,tolerance,ok,note\n");
        for c in &fit_checks {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{:?}",
                norm_tag(&c.descriptor),
                cell(c.slope),
                cell(c.r_squared),
                cell(c.expected_slope),
                cell(c.tolerance),
                c.ok,
                c.note
            );
        }
        outputs.push(write_file(out_dir, "fit_checks.csv", &csv)?);
    }

    let success = results.violations.is_empty()
        && results.acceptable_failure_rate()
        && fit_checks.iter().all(|c| c.ok);

    // Manifest: everything needed to reproduce plus digests of what was made.
    let canonical = config.canonical_string();
    let mut manifest = String::new();
    let _ = writeln!(manifest, "manifest_version = 1");
    let _ = writeln!(
        manifest,
        "config_sha256 = {}",
        sha256_hex(canonical.as_bytes())
    );
    let _ = writeln!(manifest, "master_seed = {}", config.master_seed);
    let _ = writeln!(manifest, "ensemble_size = {}", config.ensemble_size);
    let _ = writeln!(
        manifest,
        "realization_ids = 0..{}",
        config.ensemble_size - 1
    );
    let _ = writeln!(
        manifest,
        "rng = counter keyed by (master_seed, realization_id, kick_index)"
    );
    for s in &results.summaries {
        let _ = writeln!(manifest, "resolution nu={:?} n={}", s.nu, s.grid_size);
    }
    let _ = writeln!(manifest, "failed_realizations = {}", results.failures.len());
    let _ = writeln!(
        manifest,
        "invariant_violations = {}",
        results.violations.len()
    );
    let _ = writeln!(manifest, "success = {success}");
    let mut combined = Sha256::new();
    for (name, digest) in &outputs {
        let _ = writeln!(manifest, "output {name} sha256={digest}");
        combined.update(digest.as_bytes());
    }
    let _ = writeln!(manifest, "outputs_digest = {}", hex(&combined.finalize()));
    let _ = writeln!(manifest, "wall_clock_seconds = {wall:.3}");
    let _ = write!(manifest, "\n# canonical config\n{canonical}");
    let manifest_path = out_dir.join("manifest.txt");
    std::fs::write(&manifest_path, manifest.as_bytes())?;

    Ok(RunReport {
        out_dir: out_dir.to_path_buf(),
        results,
        fit_checks,
        manifest_path,
        success,
    })
}

/// The >1% failure policy expressed as an error, for callers that want a
/// hard stop instead of a report.
pub fn require_success(report: &RunReport) -> Result<()> {
    if report.success {
        return Ok(());
    }
    let mut reasons = Vec::new();
    if !report.results.violations.is_empty() {
        reasons.push(format!(
            "{} invariant violations",
            report.results.violations.len()
        ));
    }
    if !report.results.acceptable_failure_rate() {
        reasons.push(format!(
            "failure rate {:.2}% above 1%",
            100.0 * report.results.failed_fraction()
        ));
    }
    for c in report.fit_checks.iter().filter(|c| !c.ok) {
        reasons.push(format!(
            "norm {} slope {:.3} outside {} +- {}",
            norm_tag(&c.descriptor),
            c.slope,
            c.expected_slope,
            c.tolerance
        ));
    }
    Err(SimError::Domain(reasons.join("; ")))
}
