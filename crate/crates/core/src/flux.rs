//! Admissible flux functions: strongly convex, polynomially growing f.
//!
//! The solver only ever evaluates f' pointwise over a whole grid, so the
//! built-in fluxes dispatch once per slice rather than once per sample.

use std::sync::Arc;

use crate::error::{Result, SimError};

type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum FluxKind {
    /// f(u) = u^2
    Classical,
    /// f(u) = u^2 + u^4/12
    Quartic,
    /// g(y) = f(y + b) - b y, the Galilean shift of a base flux.
    Shifted { base: Arc<FluxFunction>, b: f64 },
    Custom {
        f: ScalarMap,
        fp: ScalarMap,
        fpp: ScalarMap,
    },
}

/// A flux f with its first two derivatives and a declared convexity floor
/// sigma <= inf f''.
#[derive(Clone)]
pub struct FluxFunction {
    name: String,
    sigma: f64,
    kind: FluxKind,
}

impl std::fmt::Debug for FluxFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FluxFunction")
            .field("name", &self.name)
            .field("sigma", &self.sigma)
            .finish()
    }
}

/// The two catalogued fluxes: "classical" (f = u^2, sigma = 2) and "quartic"
/// (f = u^2 + u^4/12, sigma = 2).
pub fn builtin_flux(name: &str) -> Result<FluxFunction> {
    match name {
        "classical" => Ok(FluxFunction {
            name: name.into(),
            sigma: 2.0,
            kind: FluxKind::Classical,
        }),
        "quartic" => Ok(FluxFunction {
            name: name.into(),
            sigma: 2.0,
            kind: FluxKind::Quartic,
        }),
        other => Err(SimError::Config(format!("unknown flux '{other}'"))),
    }
}

impl FluxFunction {
    /// User-supplied flux from scalar closures. The declared sigma is taken
    /// on trust here; `verify_convexity` checks it.
    pub fn custom(
        name: &str,
        sigma: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        fp: impl Fn(f64) -> f64 + Send + Sync + 'static,
        fpp: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> FluxFunction {
        FluxFunction {
            name: name.into(),
            sigma,
            kind: FluxKind::Custom {
                f: Arc::new(f),
                fp: Arc::new(fp),
                fpp: Arc::new(fpp),
            },
        }
    }

    /// Galilean shift g(y) = f(y + b) - b y, for running nonzero-mean data
    /// as a mean-zero problem. Convexity floor is unchanged: g'' = f''(. + b).
    pub fn shifted(&self, b: f64) -> FluxFunction {
        FluxFunction {
            name: format!("{}+shift({b})", self.name),
            sigma: self.sigma,
            kind: FluxKind::Shifted {
                base: Arc::new(self.clone()),
                b,
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// True only for the catalogued classical flux; the Hopf transform
    /// linearizes nothing else.
    pub(crate) fn is_classical(&self) -> bool {
        matches!(self.kind, FluxKind::Classical)
    }

    pub fn eval_f(&self, u: f64) -> f64 {
        match &self.kind {
            FluxKind::Classical => u * u,
            FluxKind::Quartic => {
                let u2 = u * u;
                u2 + u2 * u2 / 12.0
            }
            FluxKind::Shifted { base, b } => base.eval_f(u + b) - b * u,
            FluxKind::Custom { f, .. } => f(u),
        }
    }

    pub fn eval_fp(&self, u: f64) -> f64 {
        match &self.kind {
            FluxKind::Classical => 2.0 * u,
            FluxKind::Quartic => 2.0 * u + u * u * u / 3.0,
            FluxKind::Shifted { base, b } => base.eval_fp(u + b) - b,
            FluxKind::Custom { fp, .. } => fp(u),
        }
    }

    pub fn eval_fpp(&self, u: f64) -> f64 {
        match &self.kind {
            FluxKind::Classical => 2.0,
            FluxKind::Quartic => 2.0 + u * u,
            FluxKind::Shifted { base, b } => base.eval_fpp(u + b),
            FluxKind::Custom { fpp, .. } => fpp(u),
        }
    }

    /// out[j] = f'(u[j]); the branch sits outside the loop.
    pub(crate) fn fill_fp(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), out.len());
        match &self.kind {
            FluxKind::Classical => {
                for (o, &x) in out.iter_mut().zip(u) {
                    *o = 2.0 * x;
                }
            }
            FluxKind::Quartic => {
                for (o, &x) in out.iter_mut().zip(u) {
                    *o = 2.0 * x + x * x * x / 3.0;
                }
            }
            _ => {
                for (o, &x) in out.iter_mut().zip(u) {
                    *o = self.eval_fp(x);
                }
            }
        }
    }

    /// out[j] = f(u[j]), for conservative-form references.
    pub(crate) fn fill_f(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), out.len());
        match &self.kind {
            FluxKind::Classical => {
                for (o, &x) in out.iter_mut().zip(u) {
                    *o = x * x;
                }
            }
            FluxKind::Quartic => {
                for (o, &x) in out.iter_mut().zip(u) {
                    let x2 = x * x;
                    *o = x2 + x2 * x2 / 12.0;
                }
            }
            _ => {
                for (o, &x) in out.iter_mut().zip(u) {
                    *o = self.eval_f(x);
                }
            }
        }
    }

    /// max_j |f'(u[j])|, the advection speed entering the CFL bound.
    pub(crate) fn max_abs_fp(&self, u: &[f64]) -> f64 {
        match &self.kind {
            // |f'| is even and increasing in |u| for both built-ins.
            FluxKind::Classical => 2.0 * u.iter().fold(0.0f64, |m, &x| m.max(x.abs())),
            FluxKind::Quartic => {
                let m = u.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
                2.0 * m + m * m * m / 3.0
            }
            _ => u.iter().fold(0.0f64, |m, &x| m.max(self.eval_fp(x).abs())),
        }
    }
}

/// Samples f'' on a uniform grid over [-radius, radius] and reports whether
/// the declared convexity floor holds, together with the observed minimum.
pub fn verify_convexity(flux: &FluxFunction, radius: f64, n_samples: usize) -> Result<(bool, f64)> {
    if n_samples < 100 {
        return Err(SimError::Domain(format!(
            "convexity check needs at least 100 samples, got {n_samples}"
        )));
    }
    if !(radius > 0.0) {
        return Err(SimError::Domain(format!(
            "convexity radius must be positive, got {radius}"
        )));
    }
    let mut min_fpp = f64::INFINITY;
    for i in 0..n_samples {
        let x = -radius + 2.0 * radius * i as f64 / (n_samples - 1) as f64;
        min_fpp = min_fpp.min(flux.eval_fpp(x));
    }
    Ok((min_fpp >= flux.sigma * (1.0 - 1e-12), min_fpp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn classical_values() {
        let f = builtin_flux("classical").unwrap();
        assert_eq!(f.eval_f(3.0), 9.0);
        assert_eq!(f.eval_fp(3.0), 6.0);
        assert_eq!(f.eval_fpp(3.0), 2.0);
        assert_eq!(f.sigma(), 2.0);
        assert_eq!(f.name(), "classical");
    }

    #[test]
    fn quartic_values() {
        let f = builtin_flux("quartic").unwrap();
        assert_eq!(f.eval_f(0.0), 0.0);
        assert_eq!(f.eval_fp(0.0), 0.0);
        assert_eq!(f.eval_fpp(0.0), 2.0);
        assert_relative_eq!(f.eval_f(2.0), 16.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(f.eval_fp(2.0), 20.0 / 3.0, max_relative = 1e-14);
        assert_eq!(f.eval_fpp(2.0), 6.0);
    }

    #[test]
    fn unknown_flux_is_config_error() {
        assert!(matches!(
            builtin_flux("cubic"),
            Err(crate::SimError::Config(_))
        ));
    }

    #[test]
    fn convexity_of_builtins() {
        for name in ["classical", "quartic"] {
            let f = builtin_flux(name).unwrap();
            let (ok, min_fpp) = verify_convexity(&f, 10.0, 101).unwrap();
            assert!(ok, "{name} failed convexity");
            assert_eq!(min_fpp, 2.0, "{name} min f''");
        }
    }

    #[test]
    fn broken_flux_fails_convexity() {
        let f = FluxFunction::custom("cubic", 2.0, |u| u * u * u, |u| 3.0 * u * u, |u| 6.0 * u);
        let (ok, min_fpp) = verify_convexity(&f, 10.0, 101).unwrap();
        assert!(!ok);
        assert_eq!(min_fpp, -60.0);
    }

    #[test]
    fn convexity_preconditions() {
        let f = builtin_flux("classical").unwrap();
        assert!(verify_convexity(&f, 10.0, 99).is_err());
        assert!(verify_convexity(&f, 0.0, 101).is_err());
    }

    #[test]
    fn shift_transformer() {
        let f = builtin_flux("classical").unwrap().shifted(0.5);
        // g(y) = (y + 1/2)^2 - y/2
        assert_relative_eq!(f.eval_f(1.0), 1.75, max_relative = 1e-15);
        assert_relative_eq!(f.eval_fp(1.0), 2.5, max_relative = 1e-15);
        assert_eq!(f.eval_fpp(1.0), 2.0);
        let (ok, min_fpp) = verify_convexity(&f, 10.0, 101).unwrap();
        assert!(ok);
        assert_eq!(min_fpp, 2.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let shifted = builtin_flux("quartic").unwrap().shifted(0.7);
        let fluxes = [
            builtin_flux("classical").unwrap(),
            builtin_flux("quartic").unwrap(),
            shifted,
        ];
        let h = 1e-5;
        for f in &fluxes {
            for i in 0..100 {
                let u = -5.0 + 10.0 * (i as f64 + 0.5) / 100.0;
                let fd_fp = (f.eval_f(u + h) - f.eval_f(u - h)) / (2.0 * h);
                let fd_fpp = (f.eval_fp(u + h) - f.eval_fp(u - h)) / (2.0 * h);
                let tol_fp = 1e-6 * f.eval_fp(u).abs().max(1e-3);
                let tol_fpp = 1e-6 * f.eval_fpp(u).abs().max(1e-3);
                assert!(
                    (fd_fp - f.eval_fp(u)).abs() <= tol_fp,
                    "{} f' at {u}: fd {fd_fp} vs {}",
                    f.name(),
                    f.eval_fp(u)
                );
                assert!(
                    (fd_fpp - f.eval_fpp(u)).abs() <= tol_fpp,
                    "{} f'' at {u}: fd {fd_fpp} vs {}",
                    f.name(),
                    f.eval_fpp(u)
                );
            }
        }
    }

    #[test]
    fn slice_fill_matches_scalar() {
        let u: Vec<f64> = (0..64).map(|i| (i as f64 - 32.0) / 7.0).collect();
        for name in ["classical", "quartic"] {
            let f = builtin_flux(name).unwrap();
            let mut fp = vec![0.0; u.len()];
            let mut fv = vec![0.0; u.len()];
            f.fill_fp(&u, &mut fp);
            f.fill_f(&u, &mut fv);
            for (j, &x) in u.iter().enumerate() {
                assert_eq!(fp[j], f.eval_fp(x));
                assert_eq!(fv[j], f.eval_f(x));
            }
            let expect = u.iter().fold(0.0f64, |m, &x| m.max(f.eval_fp(x).abs()));
            assert_relative_eq!(f.max_abs_fp(&u), expect, max_relative = 1e-15);
        }
    }
}
