//! Simulation and measurement harness for the kick-forced generalized
//! Burgers equation u_t + f'(u) u_x - nu u_xx = eta on the unit circle.
//!
//! The crate is organized bottom-up: `field` holds periodic fields and their
//! spectral transforms, `flux` the nonlinearity, `forcing` the random kicks,
//! `integrator` the exponential time stepper with its dissipation ledger,
//! `oracle` two independent reference solvers, `diagnostics` norm series and
//! fits, and `experiment` the ensemble driver that ties them together.

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod field;
pub mod flux;
pub mod forcing;
pub mod integrator;
pub mod oracle;

#[cfg(test)]
pub(crate) mod test_util;

pub use diagnostics::{
    energy_spectrum, ensemble_mean, fit_power_law, intermittency_stats, layer_average,
    layer_window, KickSide, NormDescriptor, NormSeries, Reducer, Sample, ScalingFit,
    SpectrumEstimate, Statistic, TrajectoryRecord,
};
pub use error::{Result, SimError};
pub use experiment::{
    independence_check, run_ensembles, run_experiment, simulate_realization, ExperimentConfig,
    RunReport, RunResults,
};
pub use field::{inner_product, PeriodicField, SpectralField};
pub use flux::{builtin_flux, verify_convexity, FluxFunction};
pub use forcing::{apply_kick, estimate_moment, KickDistribution, KickStream, MomentEstimate};
pub use integrator::{
    advance_interval, cfl_dt, step, DissipationLedger, Recorder, SolverState, DEFAULT_CFL_SAFETY,
};
pub use oracle::{cole_hopf, fd_reference};
