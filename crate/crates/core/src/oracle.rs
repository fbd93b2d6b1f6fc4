//! Two independent reference solvers used to certify the integrator.
//!
//! `cole_hopf` handles the classical flux exactly: v = 2u turns
//! u_t + 2u u_x = nu u_xx into v_t + v v_x = nu v_xx, which linearizes to the
//! heat equation for phi = exp(-(1/(2 nu)) int v). The heat flow is applied
//! mode-by-mode, so the only numerical content is the FFT round-off.
//!
//! `fd_reference` is a deliberately different discretization (conservative
//! central differences, physical-space RK4, no dealiasing) for any flux.
//! Where the two oracles and the production integrator agree, an error in
//! any one of them would have to be replicated independently in the others.

use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::field::{forward_plan, inverse_plan, PeriodicField, SpectralField};
use crate::flux::FluxFunction;
use crate::integrator::DissipationLedger;

/// Trigonometric interpolation of u0 onto a finer grid.
fn upsample(u0: &PeriodicField, n_fine: usize) -> Result<PeriodicField> {
    let n0 = u0.grid_size();
    if n_fine == n0 {
        return Ok(u0.clone());
    }
    if n_fine < n0 {
        return Err(SimError::Config(format!(
            "refinement grid {n_fine} is coarser than the input grid {n0}"
        )));
    }
    let spec = u0.to_spectral();
    let mut fine = vec![Complex64::default(); n_fine / 2 + 1];
    for k in 1..n0 / 2 {
        fine[k] = spec.coeffs()[k];
    }
    // The coarse Nyquist bin aliases +-N0/2 together; as an interior mode of
    // the fine grid it carries half that weight.
    fine[n0 / 2] = spec.coeffs()[n0 / 2] * 0.5;
    Ok(SpectralField::from_coeffs(fine, n_fine)?.to_physical())
}

/// Restriction to a coarser grid by stride subsampling.
fn decimate(fine: &PeriodicField, n_coarse: usize) -> Result<PeriodicField> {
    let n_fine = fine.grid_size();
    debug_assert_eq!(n_fine % n_coarse, 0);
    let stride = n_fine / n_coarse;
    let samples: Vec<f64> = fine.samples().iter().step_by(stride).copied().collect();
    PeriodicField::new(samples)
}

/// Exact solution of the classical-flux equation at time t, evaluated on an
/// internal n_modes grid and restricted back to the grid of u0.
pub fn cole_hopf(
    u0: &PeriodicField,
    nu: f64,
    t: f64,
    flux: &FluxFunction,
    n_modes: usize,
) -> Result<PeriodicField> {
    if !flux.is_classical() {
        return Err(SimError::Contract(format!(
            "the Hopf transform solves the classical flux only, got '{}'",
            flux.name()
        )));
    }
    if !(nu > 0.0) {
        return Err(SimError::Domain(format!(
            "viscosity must be positive, got {nu}"
        )));
    }
    if !(t > 0.0) {
        return Err(SimError::Domain(format!(
            "oracle time must be positive, got {t}"
        )));
    }
    if n_modes < u0.grid_size() {
        return Err(SimError::Config(format!(
            "n_modes = {n_modes} cannot be below the input grid {}",
            u0.grid_size()
        )));
    }
    let n = n_modes;
    let two_pi = 2.0 * std::f64::consts::PI;

    // P = the zero-mean primitive of u0; phi(0) = exp(-P/nu). An additive
    // constant in P only scales phi, which cancels in phi_x / phi.
    let spec = upsample(u0, n)?.to_spectral();
    let mut prim = vec![Complex64::default(); n / 2 + 1];
    for (k, (p, c)) in prim.iter_mut().zip(spec.coeffs()).enumerate().skip(1) {
        *p = Complex64::new(c.im, -c.re) / (two_pi * k as f64);
    }
    *prim.last_mut().unwrap() = Complex64::default();
    let prim_phys = SpectralField::from_coeffs(prim, n)?.to_physical();

    let mut phi: Vec<f64> = prim_phys
        .samples()
        .iter()
        .map(|p| (-p / nu).exp())
        .collect();

    // Heat flow for phi, exactly, keeping the k = 0 mode (phi has mean ~ 1).
    let r2c = forward_plan(n);
    let c2r = inverse_plan(n);
    let mut phi_hat = vec![Complex64::default(); n / 2 + 1];
    r2c.process(&mut phi, &mut phi_hat)
        .map_err(|e| SimError::OracleFailure(format!("transforming phi: {e}")))?;
    let scale = 1.0 / n as f64;
    for (k, c) in phi_hat.iter_mut().enumerate() {
        let w = two_pi * k as f64;
        *c *= scale * (-nu * w * w * t).exp();
    }
    phi_hat[0].im = 0.0;
    phi_hat[n / 2].im = 0.0;

    let mut phi_x_hat: Vec<Complex64> = phi_hat
        .iter()
        .enumerate()
        .map(|(k, c)| Complex64::new(-c.im, c.re) * (two_pi * k as f64))
        .collect();
    phi_x_hat[n / 2] = Complex64::default();

    let mut phi_t = vec![0.0; n];
    c2r.process(&mut phi_hat, &mut phi_t)
        .map_err(|e| SimError::OracleFailure(format!("inverting phi: {e}")))?;
    let phi_min = phi_t.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(phi_min > 0.0) {
        return Err(SimError::OracleFailure(format!(
            "phi lost positivity (min {phi_min:e}) at nu={nu}, t={t}; \
             the transform is numerically out of range"
        )));
    }
    let mut phi_x = vec![0.0; n];
    c2r.process(&mut phi_x_hat, &mut phi_x)
        .map_err(|e| SimError::OracleFailure(format!("inverting phi_x: {e}")))?;

    let u_fine: Vec<f64> = phi_x
        .iter()
        .zip(&phi_t)
        .map(|(px, p)| -nu * px / p)
        .collect();
    let mean = crate::field::kahan_sum(&u_fine) / n as f64;
    if mean.abs() > 1e-8 {
        return Err(SimError::OracleFailure(format!(
            "transform output drifted off zero mean: {mean:e}"
        )));
    }
    // No re-projection: the output is zero-mean by construction and the
    // residual mean just measured is pure round-off.
    decimate(
        &PeriodicField::from_samples_unchecked(u_fine),
        u0.grid_size(),
    )
}

fn fd_rhs(
    u: &[f64],
    flux: &FluxFunction,
    nu: f64,
    inv_2dx: f64,
    inv_dx2: f64,
    u_pad: &mut [f64],
    f_pad: &mut [f64],
    out: &mut [f64],
) {
    let n = u.len();
    u_pad[1..=n].copy_from_slice(u);
    u_pad[0] = u[n - 1];
    u_pad[n + 1] = u[0];
    flux.fill_f(u, &mut f_pad[1..=n]);
    f_pad[0] = f_pad[n];
    f_pad[n + 1] = f_pad[1];
    for j in 0..n {
        let advect = (f_pad[j + 2] - f_pad[j]) * inv_2dx;
        let diffuse = (u_pad[j + 2] - 2.0 * u_pad[j + 1] + u_pad[j]) * inv_dx2;
        out[j] = -advect + nu * diffuse;
    }
}

/// Squared H^1 norm by the same central stencil the scheme uses.
fn fd_h1_sq(u: &[f64], inv_2dx: f64) -> f64 {
    let n = u.len();
    let mut total = 0.0;
    for j in 0..n {
        let g = (u[(j + 1) % n] - u[(j + n - 1) % n]) * inv_2dx;
        total += g * g;
    }
    total / n as f64
}

fn fd_energy(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>() / u.len() as f64
}

fn fd_run(
    u0: &PeriodicField,
    nu: f64,
    t: f64,
    flux: &FluxFunction,
    n_fine: usize,
    want_ledger: bool,
) -> Result<(PeriodicField, Option<DissipationLedger>)> {
    if !(nu > 0.0) {
        return Err(SimError::Domain(format!(
            "viscosity must be positive, got {nu}"
        )));
    }
    if !(t > 0.0) {
        return Err(SimError::Domain(format!(
            "oracle time must be positive, got {t}"
        )));
    }
    if n_fine < 4 * u0.grid_size() {
        return Err(SimError::Config(format!(
            "reference grid {n_fine} is below 4x the production grid {}",
            u0.grid_size()
        )));
    }
    let n = n_fine;
    let dx = 1.0 / n as f64;
    let inv_2dx = 1.0 / (2.0 * dx);
    let inv_dx2 = 1.0 / (dx * dx);

    let mut u = upsample(u0, n)?.samples().to_vec();

    // Fixed step from the initial data; |u|_inf does not grow between kicks,
    // so the advective bound holds for the whole run.
    let speed = flux.max_abs_fp(&u);
    let advective = if speed > 0.0 {
        dx / speed
    } else {
        f64::INFINITY
    };
    let diffusive = dx * dx / (2.0 * nu);
    let dt = 0.2 * advective.min(diffusive);
    let n_steps = (t / dt).ceil().max(1.0) as usize;
    let h = t / n_steps as f64;

    let mut u_pad = vec![0.0; n + 2];
    let mut f_pad = vec![0.0; n + 2];
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    let energy_in = fd_energy(&u);
    let mut a_i = 0.0;
    let mut g_prev = if want_ledger {
        fd_h1_sq(&u, inv_2dx)
    } else {
        0.0
    };

    for step in 0..n_steps {
        fd_rhs(
            &u, flux, nu, inv_2dx, inv_dx2, &mut u_pad, &mut f_pad, &mut k1,
        );
        for j in 0..n {
            tmp[j] = u[j] + 0.5 * h * k1[j];
        }
        fd_rhs(
            &tmp, flux, nu, inv_2dx, inv_dx2, &mut u_pad, &mut f_pad, &mut k2,
        );
        for j in 0..n {
            tmp[j] = u[j] + 0.5 * h * k2[j];
        }
        fd_rhs(
            &tmp, flux, nu, inv_2dx, inv_dx2, &mut u_pad, &mut f_pad, &mut k3,
        );
        for j in 0..n {
            tmp[j] = u[j] + h * k3[j];
        }
        fd_rhs(
            &tmp, flux, nu, inv_2dx, inv_dx2, &mut u_pad, &mut f_pad, &mut k4,
        );
        for j in 0..n {
            u[j] += h / 6.0 * (k1[j] + 2.0 * (k2[j] + k3[j]) + k4[j]);
        }
        if want_ledger {
            let g = fd_h1_sq(&u, inv_2dx);
            a_i += 2.0 * nu * 0.5 * h * (g_prev + g);
            g_prev = g;
        }
        if step % 256 == 255 && !u.iter().all(|x| x.is_finite()) {
            return Err(SimError::Instability {
                t: (step + 1) as f64 * h,
                dt: h,
                nu,
                n,
            });
        }
    }
    if !u.iter().all(|x| x.is_finite()) {
        return Err(SimError::Instability { t, dt: h, nu, n });
    }

    let ledger = want_ledger.then(|| DissipationLedger {
        interval_index: 0,
        a_i,
        energy_in,
        energy_out: fd_energy(&u),
    });
    let coarse = decimate(&PeriodicField::from_samples_unchecked(u), u0.grid_size())?;
    Ok((coarse, ledger))
}

/// Brute-force reference: conservative second-order central differences in
/// space, explicit RK4 in time on a grid at least 4x finer than production,
/// restricted back to the input grid.
pub fn fd_reference(
    u0: &PeriodicField,
    nu: f64,
    t: f64,
    flux: &FluxFunction,
    n_fine: usize,
) -> Result<PeriodicField> {
    fd_run(u0, nu, t, flux, n_fine, false).map(|(u, _)| u)
}

/// Same run, also reporting the energy ledger of the scheme itself.
#[cfg(test)]
pub(crate) fn fd_reference_with_ledger(
    u0: &PeriodicField,
    nu: f64,
    t: f64,
    flux: &FluxFunction,
    n_fine: usize,
) -> Result<(PeriodicField, DissipationLedger)> {
    fd_run(u0, nu, t, flux, n_fine, true).map(|(u, l)| (u, l.expect("ledger requested")))
}
