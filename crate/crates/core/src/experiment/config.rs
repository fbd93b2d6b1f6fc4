//! Flat key-value experiment configuration with a versioned schema.
//!
//! The format is line-oriented `key = value` text: `#` starts a comment,
//! arrays are comma-separated, unknown keys are errors. The canonical
//! rendering (sorted keys, shortest round-trip floats) is what gets hashed
//! into the run manifest, so two configs agree iff their hashes do.

use crate::diagnostics::{NormDescriptor, Statistic};
use crate::error::{Result, SimError};
use crate::field::PeriodicField;
use crate::flux::builtin_flux;
use crate::forcing::KickDistribution;
use std::f64::consts::PI;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Zero,
    /// amplitude * sin(2 pi x)
    Sine {
        amplitude: f64,
    },
}

impl InitialCondition {
    fn parse(text: &str) -> Result<Self> {
        if text == "zero" {
            return Ok(Self::Zero);
        }
        if let Some(amp) = text.strip_prefix("sin:") {
            let amplitude: f64 = amp
                .trim()
                .parse()
                .map_err(|_| SimError::Config(format!("bad sine amplitude {amp:?}")))?;
            if !amplitude.is_finite() {
                return Err(SimError::Config(format!(
                    "sine amplitude must be finite, got {amplitude}"
                )));
            }
            return Ok(Self::Sine { amplitude });
        }
        Err(SimError::Config(format!(
            "unknown initial condition {text:?}; use zero or sin:<amplitude>"
        )))
    }

    fn render(&self) -> String {
        match self {
            Self::Zero => "zero".to_string(),
            Self::Sine { amplitude } => format!("sin:{amplitude:?}"),
        }
    }

    pub fn build(&self, n: usize) -> Result<PeriodicField> {
        match self {
            Self::Zero => PeriodicField::zeros(n),
            Self::Sine { amplitude } => {
                let a = *amplitude;
                PeriodicField::from_fn(n, |x| a * (2.0 * PI * x).sin())
            }
        }
    }
}

fn parse_statistic(text: &str) -> Result<Statistic> {
    match text {
        "avg_sq" => Ok(Statistic::Instant),
        "sup" => Ok(Statistic::SupOverKickInterval),
        other => Err(SimError::Config(format!(
            "unknown norm statistic {other:?}; use avg_sq or sup"
        ))),
    }
}

fn render_statistic(s: Statistic) -> &'static str {
    match s {
        Statistic::Instant => "avg_sq",
        Statistic::SupOverKickInterval => "sup",
    }
}

fn parse_norm(text: &str) -> Result<NormDescriptor> {
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(SimError::Config(format!(
            "norm spec {text:?} must be m:p:statistic, e.g. 1:2:avg_sq"
        )));
    }
    let m: u32 = parts[0]
        .parse()
        .map_err(|_| SimError::Config(format!("bad derivative order in norm spec {text:?}")))?;
    let p: f64 = if parts[1] == "inf" {
        f64::INFINITY
    } else {
        parts[1]
            .parse()
            .map_err(|_| SimError::Config(format!("bad exponent in norm spec {text:?}")))?
    };
    if !(p >= 1.0) {
        return Err(SimError::Config(format!(
            "norm exponent must be >= 1, got {p} in {text:?}"
        )));
    }
    Ok(NormDescriptor {
        m,
        p,
        statistic: parse_statistic(parts[2])?,
    })
}

pub(crate) fn render_p(p: f64) -> String {
    if p.is_infinite() {
        "inf".to_string()
    } else if p.fract() == 0.0 && p.abs() < 1e6 {
        format!("{}", p as i64)
    } else {
        format!("{p:?}")
    }
}

fn render_norm(d: &NormDescriptor) -> String {
    format!(
        "{}:{}:{}",
        d.m,
        render_p(d.p),
        render_statistic(d.statistic)
    )
}

/// Slope band a fitted norm exponent must land in for the run to succeed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeBand {
    pub slope: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub flux: String,
    pub kick_law: String,
    pub kick_amplitude: f64,
    pub kick_k_max: usize,
    pub nu_sweep: Vec<f64>,
    pub t_total: f64,
    pub t_start_measure: f64,
    pub ensemble_size: usize,
    pub master_seed: u64,
    pub u0: InitialCondition,
    pub norms: Vec<NormDescriptor>,
    pub sample_dt: f64,
    pub spectrum_dt: f64,
    pub grid_override: Option<usize>,
    /// Optional per-norm fitted-slope bands checked by run_experiment.
    pub expected_slopes: Option<Vec<SlopeBand>>,
    pub workers: Option<usize>,
    pub out_dir: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            flux: "classical".to_string(),
            kick_law: "geometric".to_string(),
            kick_amplitude: 1.0,
            kick_k_max: 8,
            nu_sweep: vec![0.05, 0.02, 0.01, 0.005, 0.002],
            t_total: 12.0,
            t_start_measure: 2.0,
            ensemble_size: 50,
            master_seed: 0,
            u0: InitialCondition::Zero,
            norms: vec![
                NormDescriptor {
                    m: 1,
                    p: 2.0,
                    statistic: Statistic::Instant,
                },
                NormDescriptor {
                    m: 2,
                    p: 2.0,
                    statistic: Statistic::Instant,
                },
                NormDescriptor {
                    m: 1,
                    p: 1.0,
                    statistic: Statistic::SupOverKickInterval,
                },
            ],
            sample_dt: 0.05,
            spectrum_dt: 0.25,
            grid_override: None,
            expected_slopes: None,
            workers: None,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut saw_version = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SimError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| SimError::Config(format!("line {}: {what}", lineno + 1));
            match key {
                "schema_version" => {
                    let v: u32 = value.parse().map_err(|_| bad("bad schema_version"))?;
                    if v != SCHEMA_VERSION {
                        return Err(bad(&format!(
                            "unsupported schema_version {v}; this build reads {SCHEMA_VERSION}"
                        )));
                    }
                    saw_version = true;
                }
                "flux" => cfg.flux = value.to_string(),
                "kick_law" => cfg.kick_law = value.to_string(),
                "kick_amplitude" => {
                    cfg.kick_amplitude = value.parse().map_err(|_| bad("bad kick_amplitude"))?
                }
                "kick_k_max" => {
                    cfg.kick_k_max = value.parse().map_err(|_| bad("bad kick_k_max"))?
                }
                "nu_sweep" => {
                    cfg.nu_sweep = value
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("bad nu_sweep entry"))?;
                }
                "t_total" => cfg.t_total = value.parse().map_err(|_| bad("bad t_total"))?,
                "t_start_measure" => {
                    cfg.t_start_measure = value.parse().map_err(|_| bad("bad t_start_measure"))?
                }
                "ensemble_size" => {
                    cfg.ensemble_size = value.parse().map_err(|_| bad("bad ensemble_size"))?
                }
                "master_seed" => {
                    cfg.master_seed = value.parse().map_err(|_| bad("bad master_seed"))?
                }
                "u0" => cfg.u0 = InitialCondition::parse(value)?,
                "norms" => {
                    cfg.norms = value
                        .split(',')
                        .map(|s| parse_norm(s.trim()))
                        .collect::<Result<_>>()?;
                }
                "sample_dt" => cfg.sample_dt = value.parse().map_err(|_| bad("bad sample_dt"))?,
                "spectrum_dt" => {
                    cfg.spectrum_dt = value.parse().map_err(|_| bad("bad spectrum_dt"))?
                }
                "grid_override" => {
                    cfg.grid_override = Some(value.parse().map_err(|_| bad("bad grid_override"))?)
                }
                "expected_slopes" => {
                    let bands = value
                        .split(',')
                        .map(|s| -> Result<SlopeBand> {
                            let (slope, tol) = s.trim().split_once(':').ok_or_else(|| {
                                bad("expected_slopes entries are slope:tolerance")
                            })?;
                            Ok(SlopeBand {
                                slope: slope
                                    .trim()
                                    .parse()
                                    .map_err(|_| bad("bad slope in expected_slopes"))?,
                                tolerance: tol
                                    .trim()
                                    .parse()
                                    .map_err(|_| bad("bad tolerance in expected_slopes"))?,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    cfg.expected_slopes = Some(bands);
                }
                "workers" => cfg.workers = Some(value.parse().map_err(|_| bad("bad workers"))?),
                "out_dir" => cfg.out_dir = Some(value.to_string()),
                other => {
                    return Err(bad(&format!("unknown key {other:?}")));
                }
            }
        }
        if !saw_version {
            return Err(SimError::Config(
                "config must declare schema_version".to_string(),
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        builtin_flux(&self.flux)?;
        if self.kick_law != "geometric" {
            return Err(SimError::Config(format!(
                "unknown kick_law {:?}; geometric is the only implemented law",
                self.kick_law
            )));
        }
        KickDistribution::new(self.kick_amplitude, self.kick_k_max)?;
        if self.nu_sweep.is_empty() {
            return Err(SimError::Config("nu_sweep is empty".to_string()));
        }
        for &nu in &self.nu_sweep {
            if !(nu > 0.0 && nu <= 1.0) {
                return Err(SimError::Config(format!(
                    "viscosities must lie in (0, 1], got {nu}"
                )));
            }
        }
        if !(self.t_start_measure >= 2.0) {
            return Err(SimError::Config(format!(
                "measurement must start in the quasi-stationary regime t >= 2, got {}",
                self.t_start_measure
            )));
        }
        if !(self.t_total >= self.t_start_measure + 1.0) || !self.t_total.is_finite() {
            return Err(SimError::Config(format!(
                "t_total = {} leaves no measurement window after t = {}",
                self.t_total, self.t_start_measure
            )));
        }
        if self.ensemble_size < 2 {
            return Err(SimError::Config(format!(
                "ensemble_size must be at least 2, got {}",
                self.ensemble_size
            )));
        }
        if self.norms.is_empty() {
            return Err(SimError::Config("norm list is empty".to_string()));
        }
        let has_sup = self
            .norms
            .iter()
            .any(|d| d.statistic == Statistic::SupOverKickInterval);
        if has_sup && self.t_total.floor() < self.t_start_measure.ceil() + 1.0 {
            return Err(SimError::Config(
                "sup-over-interval norms need at least one whole kick interval \
                 inside the measurement window"
                    .to_string(),
            ));
        }
        if !(self.sample_dt > 0.0 && self.sample_dt <= 1.0) {
            return Err(SimError::Config(format!(
                "sample_dt must lie in (0, 1], got {}",
                self.sample_dt
            )));
        }
        let ratio = self.spectrum_dt / self.sample_dt;
        if !(ratio >= 1.0 - 1e-9) || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(SimError::Config(format!(
                "spectrum_dt = {} must be an integer multiple of sample_dt = {}",
                self.spectrum_dt, self.sample_dt
            )));
        }
        if let Some(n) = self.grid_override {
            if !n.is_power_of_two() || n < 16 {
                return Err(SimError::Config(format!(
                    "grid_override must be a power of two >= 16, got {n}"
                )));
            }
            if n < 4 * self.kick_k_max {
                return Err(SimError::Config(format!(
                    "grid_override = {n} cannot resolve kicks with k_max = {}",
                    self.kick_k_max
                )));
            }
        }
        if let Some(bands) = &self.expected_slopes {
            if bands.len() != self.norms.len() {
                return Err(SimError::Config(format!(
                    "expected_slopes lists {} bands for {} norms",
                    bands.len(),
                    self.norms.len()
                )));
            }
            for b in bands {
                if !b.slope.is_finite() || !(b.tolerance > 0.0) {
                    return Err(SimError::Config(format!(
                        "bad slope band {}:{}",
                        b.slope, b.tolerance
                    )));
                }
            }
        }
        if let Some(w) = self.workers {
            if w == 0 {
                return Err(SimError::Config("workers must be at least 1".to_string()));
            }
        }
        Ok(())
    }

    /// Grid resolution for one viscosity: enough modes to reach well past
    /// the dissipation wavenumber 1/nu after the 2/3-rule cut, never below
    /// 256, always a power of two.
    pub fn grid_for(&self, nu: f64) -> usize {
        if let Some(n) = self.grid_override {
            return n;
        }
        let wanted = (8.0 / nu).ceil() as usize;
        wanted.max(256).next_power_of_two()
    }

    pub fn initial_field(&self, n: usize) -> Result<PeriodicField> {
        self.u0.build(n)
    }

    /// Deterministic rendering: sorted keys, round-trip floats. Hashing this
    /// string identifies every knob that can change the numbers; out_dir and
    /// workers are excluded because they cannot.
    pub fn canonical_string(&self) -> String {
        let mut lines: Vec<String> = vec![
            format!("ensemble_size = {}", self.ensemble_size),
            format!("flux = {}", self.flux),
            format!(
                "expected_slopes = {}",
                self.expected_slopes.as_ref().map_or_else(
                    || "none".to_string(),
                    |b| b
                        .iter()
                        .map(|s| format!("{:?}:{:?}", s.slope, s.tolerance))
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            ),
            format!(
                "grid_override = {}",
                self.grid_override
                    .map_or_else(|| "none".to_string(), |n| n.to_string())
            ),
            format!("kick_amplitude = {:?}", self.kick_amplitude),
            format!("kick_k_max = {}", self.kick_k_max),
            format!("kick_law = {}", self.kick_law),
            format!("master_seed = {}", self.master_seed),
            format!(
                "norms = {}",
                self.norms
                    .iter()
                    .map(render_norm)
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            format!(
                "nu_sweep = {}",
                self.nu_sweep
                    .iter()
                    .map(|v| format!("{v:?}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            format!("sample_dt = {:?}", self.sample_dt),
            format!("schema_version = {SCHEMA_VERSION}"),
            format!("spectrum_dt = {:?}", self.spectrum_dt),
            format!("t_start_measure = {:?}", self.t_start_measure),
            format!("t_total = {:?}", self.t_total),
            format!("u0 = {}", self.u0.render()),
        ];
        lines.sort();
        let mut out = String::new();
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_string_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.master_seed = 42;
        cfg.expected_slopes = Some(vec![
            SlopeBand {
                slope: -1.0,
                tolerance: 0.2,
            },
            SlopeBand {
                slope: -3.0,
                tolerance: 0.4,
            },
            SlopeBand {
                slope: 0.0,
                tolerance: 0.15,
            },
        ]);
        let text = cfg.canonical_string();
        // "none" placeholders only appear for absent options.
        let parsed = ExperimentConfig::parse_str(
            &text
                .lines()
                .filter(|l| !l.starts_with("grid_override"))
                .collect::<Vec<_>>()
                .join("\n"),
        )
        .unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(parsed.canonical_string(), text);
    }

    #[test]
    fn unknown_keys_and_missing_version_are_rejected() {
        assert!(ExperimentConfig::parse_str("schema_version = 1\nbogus_key = 3").is_err());
        assert!(ExperimentConfig::parse_str("flux = classical").is_err());
        assert!(ExperimentConfig::parse_str("schema_version = 2").is_err());
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg = ExperimentConfig::parse_str(
            "# experiment\nschema_version = 1\n\nmaster_seed = 7 # inline\n",
        )
        .unwrap();
        assert_eq!(cfg.master_seed, 7);
    }

    #[test]
    fn invariants_are_enforced() {
        let reject = |patch: &str| {
            let text = format!("schema_version = 1\n{patch}\n");
            assert!(
                ExperimentConfig::parse_str(&text).is_err(),
                "accepted {patch:?}"
            );
        };
        reject("t_start_measure = 1.5");
        reject("ensemble_size = 1");
        reject("nu_sweep = 0.05, 1.5");
        reject("nu_sweep = 0.0");
        reject("t_total = 2.5");
        reject("flux = cubic");
        reject("kick_law = gaussian");
        reject("norms = 1:0.5:avg_sq");
        reject("norms = 1:2:mean");
        reject("grid_override = 100");
        reject("grid_override = 16"); // cannot hold k_max = 8 kicks
        reject("spectrum_dt = 0.27");
        reject("expected_slopes = -1:0.2");
        reject("workers = 0");
        reject("u0 = gauss");
    }

    #[test]
    fn norm_specs_parse() {
        let cfg =
            ExperimentConfig::parse_str("schema_version = 1\nnorms = 0:inf:avg_sq, 3:2:sup\n")
                .unwrap();
        assert_eq!(cfg.norms.len(), 2);
        assert!(cfg.norms[0].p.is_infinite());
        assert_eq!(cfg.norms[0].m, 0);
        assert_eq!(cfg.norms[1].statistic, Statistic::SupOverKickInterval);
    }

    #[test]
    fn resolution_policy() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.grid_for(0.05), 256);
        assert_eq!(cfg.grid_for(0.02), 512);
        assert_eq!(cfg.grid_for(0.01), 1024);
        assert_eq!(cfg.grid_for(0.005), 2048);
        assert_eq!(cfg.grid_for(0.002), 4096);
        let mut cfg = cfg;
        cfg.grid_override = Some(4096);
        assert_eq!(cfg.grid_for(0.05), 4096);
    }

    #[test]
    fn initial_conditions_build() {
        let cfg = ExperimentConfig::parse_str("schema_version = 1\nu0 = sin:3\n").unwrap();
        let u = cfg.initial_field(256).unwrap();
        assert!((u.lp_norm(f64::INFINITY).unwrap() - 3.0).abs() < 1e-3);
        let z = ExperimentConfig::default().initial_field(64).unwrap();
        assert_eq!(z.samples().iter().filter(|&&v| v != 0.0).count(), 0);
    }
}
