//! Rough differential equations on the master grid.
//!
//! The solution of `dS = b(t,S) dt + σ(t,S) d𝐖` is the Euler scheme run on every master
//! cell, packaged as a controlled path with `S′ = (b, σ)(t, S)`. Linear equations are solved
//! through the rough exponential.

mod field;

pub use field::{CoefficientField, CoefficientMap, ConstantField, FnField};

use std::sync::Arc;

use crate::controlled::{canonical_lift, compose_smooth, rough_integral, ControlledPath, SmoothMap};
use crate::error::{Error, Result};
use crate::grid::{staircase, PartitionScheme, SampledPath};
use crate::lift::{bracket, RoughPath};

/// States beyond this magnitude abort the scheme.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

fn check_dims(field: &dyn CoefficientField, s0: &[f64], noise_dim: usize) -> Result<()> {
    if s0.len() != field.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} entries, field expects {}",
            s0.len(),
            field.state_dim()
        )));
    }
    if noise_dim != field.noise_dim() {
        return Err(Error::DimensionMismatch(format!(
            "noise has dimension {noise_dim}, field expects {}",
            field.noise_dim()
        )));
    }
    Ok(())
}

/// Euler states at the grid indices `points`, driven by the scalar `clock` and the noise
/// `w`. Returns the states row by row (`points.len() × m`).
pub fn euler_on_points(
    field: &dyn CoefficientField,
    s0: &[f64],
    clock: &SampledPath,
    w: &SampledPath,
    points: &[usize],
) -> Result<Vec<f64>> {
    check_dims(field, s0, w.dim())?;
    let (m, d) = (field.state_dim(), w.dim());
    let mut states = Vec::with_capacity(points.len() * m);
    let mut x = s0.to_vec();
    let mut b = vec![0.0; m];
    let mut sig = vec![0.0; m * d];
    if !points.is_empty() {
        states.extend_from_slice(&x);
    }
    for (step, win) in points.windows(2).enumerate() {
        let (u, v) = (win[0], win[1]);
        let t = clock.value(u)[0];
        let dt = clock.value(v)[0] - t;
        let dw = w.increment(u, v);
        field.drift(t, &x, &mut b);
        field.vol(t, &x, &mut sig);
        for c in 0..m {
            let noise: f64 = (0..d).map(|j| sig[c * d + j] * dw[j]).sum();
            x[c] += b[c] * dt + noise;
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_THRESHOLD) {
            return Err(Error::Diverged { step: step + 1, time: w.times()[v] });
        }
        states.extend_from_slice(&x);
    }
    Ok(states)
}

/// Euler scheme along `𝒫ⁿ`, returned as a staircase on the master grid.
pub fn euler_solve(
    field: &dyn CoefficientField,
    s0: &[f64],
    w: &SampledPath,
    scheme: &PartitionScheme,
    n: usize,
) -> Result<SampledPath> {
    let idx = scheme.indices(n, w.grid())?;
    let clock = SampledPath::identity(w.grid().clone());
    let states = euler_on_points(field, s0, &clock, w, &idx)?;
    staircase(w.grid(), field.state_dim(), &idx, &states)
}

/// Splits a time-augmented lift into its clock (coordinate 0) and noise coordinates.
pub(crate) fn clock_and_noise(lift: &RoughPath) -> Result<(SampledPath, SampledPath)> {
    if lift.dim() < 2 {
        return Err(Error::DimensionMismatch("lift must carry a clock and at least one noise coordinate".into()));
    }
    let clock = lift.base().component(0)?;
    let noise_vals: Vec<f64> = (0..lift.len()).flat_map(|i| lift.base().value(i)[1..].to_vec()).collect();
    let noise = SampledPath::new(lift.grid().clone(), lift.dim() - 1, noise_vals)?;
    Ok((clock, noise))
}

/// Master-grid solution with its self-consistency residuals.
#[derive(Clone, Debug)]
pub struct RdeSolution {
    /// `S` as an `m × 1` controlled path with `S′ = (b, σ)(clock, S)`.
    pub path: ControlledPath,
    /// `sup_t |S_t − s_0 − ∫_0^t (b,σ)(·,S) d(·,𝐖)|` on the master grid.
    pub residual: f64,
    /// The same residual with the compensated sum taken over pairs of master cells.
    pub coarse_residual: f64,
}

/// Solves the RDE driven by a time-augmented lift whose coordinate 0 is the clock.
pub fn rde_solve(field: &dyn CoefficientField, s0: &[f64], lift: &Arc<RoughPath>) -> Result<RdeSolution> {
    if lift.dim() < 2 {
        return Err(Error::DimensionMismatch("lift must carry a clock and at least one noise coordinate".into()));
    }
    let d = lift.dim() - 1;
    check_dims(field, s0, d)?;
    let m = field.state_dim();
    let (clock, noise) = clock_and_noise(lift)?;
    let all: Vec<usize> = (0..lift.len()).collect();
    let states = euler_on_points(field, s0, &clock, &noise, &all)?;
    let values = SampledPath::new(lift.grid().clone(), m, states)?;

    // Gubinelli derivative (b, σ)(clock, S).
    let map = CoefficientMap { field };
    let mut deriv = Vec::with_capacity(lift.len() * m * (1 + d));
    let mut input = vec![0.0; 1 + m];
    let mut out = vec![0.0; m * (1 + d)];
    let mut jac = vec![0.0; m * (1 + d) * (1 + m)];
    for i in 0..lift.len() {
        input[0] = clock.value(i)[0];
        input[1..].copy_from_slice(values.value(i));
        map.eval(&input, &mut out, &mut jac)
            .map_err(|detail| Error::Singular { time: lift.grid().times()[i], detail })?;
        deriv.extend_from_slice(&out);
    }
    let path = ControlledPath::new(lift.clone(), m, 1, values.values().to_vec(), deriv)?;

    // Integrand (b, σ)(clock, S) as a controlled path, then its rough integral.
    let time = ControlledPath::coordinate(lift.clone(), 0)?;
    let ts = ControlledPath::stack_rows(&[&time, &path])?;
    let integrand = compose_smooth(&ts, &map)?;
    let reference = ControlledPath::reference_path(lift.clone());
    let integral = rough_integral(&integrand, &reference)?;
    let mut residual = 0.0f64;
    for i in 0..lift.len() {
        for c in 0..m {
            residual = residual.max((values.value(i)[c] - s0[c] - integral.value(i)[c]).abs());
        }
    }

    // Two-cell compensated sums.
    let e = 1 + d;
    let mut acc = vec![0.0; m];
    let mut coarse_residual = 0.0f64;
    let mut xx = vec![0.0; e * e];
    for u in (0..lift.len().saturating_sub(2)).step_by(2) {
        let v = u + 2;
        let dx = lift.base().increment(u, v);
        lift.second_level_into(u, v, &mut xx);
        let f = integrand.value(u);
        for c in 0..m {
            let mut inc: f64 = (0..e).map(|k| f[c * e + k] * dx[k]).sum();
            for k in 0..e {
                let fk = integrand.deriv_direction(u, k);
                for l in 0..e {
                    // Row c of F′_k (an m × e matrix) applied to direction l of X′ = I.
                    inc += fk[c * e + l] * xx[k * e + l];
                }
            }
            acc[c] += inc;
            coarse_residual = coarse_residual.max((values.value(v)[c] - s0[c] - acc[c]).abs());
        }
    }
    Ok(RdeSolution { path, residual, coarse_residual })
}

/// Rough exponential `V = ℰ(Z)` with the residual of `V = 1 + ∫ V d𝐙`.
#[derive(Clone, Debug)]
pub struct RoughExponential {
    /// `V` as a scalar controlled path on `Z`'s reference, with derivative `V Z′`.
    pub value: ControlledPath,
    pub residual: f64,
    /// First time at which a factor `1 + ΔZ` vanishes or turns negative.
    pub positivity_lost_at: Option<f64>,
}

/// `V_t = exp(Z_t − ½Γ_t) Π_{s≤t} (1+ΔZ_s) e^{−ΔZ_s}` with `Γ = [𝐙] − Σ (ΔZ)²` over the
/// declared jump indices.
pub fn rough_exponential(z: &ControlledPath, zlift: &RoughPath, jumps: &[usize]) -> Result<RoughExponential> {
    if z.shape() != (1, 1) {
        return Err(Error::DimensionMismatch("rough exponential needs a scalar path".into()));
    }
    if zlift.dim() != 1 || !zlift.grid().same_as(z.grid()) || zlift.base().values() != z.values().values() {
        return Err(Error::InvalidInput("lift does not sit above the given path".into()));
    }
    if z.value(0)[0] != 0.0 {
        return Err(Error::InvalidInput(format!("rough exponential needs Z_0 = 0, got {}", z.value(0)[0])));
    }
    let mut jumps = jumps.to_vec();
    jumps.sort_unstable();
    jumps.dedup();
    if jumps.iter().any(|&j| j == 0 || j >= z.len()) {
        return Err(Error::InvalidInput("jump indices must lie in 1..len".into()));
    }
    let br = bracket(zlift);
    let zv = |i: usize| z.value(i)[0];
    for &j in &jumps {
        let dz = zv(j) - zv(j - 1);
        let dbr = br.value(j)[0] - br.value(j - 1)[0];
        let tol = 1e-12 * (1.0 + dz * dz + br.value(j)[0].abs());
        if (dbr - dz * dz).abs() > tol {
            return Err(Error::BracketJump {
                index: j,
                detail: format!("Δ[Z] = {dbr:e} but (ΔZ)² = {:e}", dz * dz),
            });
        }
    }
    let log_space = jumps.iter().all(|&j| 1.0 + zv(j) - zv(j - 1) > 0.0);
    let mut positivity_lost_at = None;
    let mut values = Vec::with_capacity(z.len());
    let mut jump_sq = 0.0;
    let mut log_factor = 0.0;
    let mut factor = 1.0;
    let mut next = 0;
    for i in 0..z.len() {
        if next < jumps.len() && jumps[next] == i {
            let dz = zv(i) - zv(i - 1);
            jump_sq += dz * dz;
            if log_space {
                log_factor += (1.0 + dz).ln() - dz;
            } else {
                factor *= (1.0 + dz) * (-dz).exp();
                if 1.0 + dz <= 0.0 && positivity_lost_at.is_none() {
                    positivity_lost_at = Some(z.grid().times()[i]);
                }
            }
            next += 1;
        }
        let gamma = br.value(i)[0] - jump_sq;
        let v = if log_space {
            (zv(i) - 0.5 * gamma + log_factor).exp()
        } else {
            (zv(i) - 0.5 * gamma).exp() * factor
        };
        values.push(v);
    }
    let d = z.ref_dim();
    let deriv: Vec<f64> = (0..z.len()).flat_map(|i| z.deriv(i).iter().map(|zp| values[i] * zp).collect::<Vec<_>>()).collect();
    let value = ControlledPath::new(z.reference().clone(), 1, 1, values.clone(), deriv)?;
    debug_assert_eq!(value.ref_dim(), d);

    let mut integral = 0.0;
    let mut residual = 0.0f64;
    for i in 0..z.len() - 1 {
        integral += values[i] * (zv(i + 1) - zv(i)) + values[i] * zlift.second_level(i, i + 1)[0];
        residual = residual.max((values[i + 1] - 1.0 - integral).abs());
    }
    Ok(RoughExponential { value, residual, positivity_lost_at })
}

/// Solution of the linear RDE `dS = S dΞ`, `Ξ = ∫ b dt + ∫ σ d𝐖`, as `s_0 ℰ(Ξ)`.
///
/// `b` (scalar) and `sigma_row` (`1 × d`) must be controlled with respect to the
/// time-augmented lift.
pub fn linear_rde_solve(
    b: &ControlledPath,
    sigma_row: &ControlledPath,
    s0: f64,
    lift: &Arc<RoughPath>,
) -> Result<ControlledPath> {
    if !(s0 > 0.0) {
        return Err(Error::InvalidInput(format!("initial price must be positive, got {s0}")));
    }
    let coeff = ControlledPath::concat_cols(&[b, sigma_row])?;
    let xi = rough_integral(&coeff, &ControlledPath::reference_path(lift.clone()))?;
    let exp = rough_exponential(&xi, &canonical_lift(&xi)?, &[])?;
    if let Some(time) = exp.positivity_lost_at {
        return Err(Error::Positivity { time });
    }
    Ok(exp.value.scale(s0))
}
