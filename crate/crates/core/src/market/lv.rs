//! Local-volatility models `dS = b(t,S) dt + σ(t,S) d𝐖`.

use super::{assemble, assemble_discrete, kelly, kelly_point, theta_point, DiscretizedPortfolio, PointInputs, PortfolioPath, WealthPath};
use crate::controlled::{compose_smooth, ControlledPath};
use crate::error::{Error, Result};
use crate::grid::{ConsumptionClock, PartitionScheme};
use crate::lift::RoughPath;
use crate::rde::{clock_and_noise, euler_on_points, rde_solve, CoefficientField, CoefficientMap, RdeSolution};
use std::sync::Arc;

/// The price path on a time-augmented lift.
pub fn price_path(field: &dyn CoefficientField, s0: &[f64], lift: &Arc<RoughPath>) -> Result<RdeSolution> {
    rde_solve(field, s0, lift)
}

/// Coefficients `b(t,S)` and `σ(t,S)` as controlled paths along `S`.
pub fn coefficients_along(field: &dyn CoefficientField, s: &ControlledPath) -> Result<(ControlledPath, ControlledPath)> {
    let time = ControlledPath::coordinate(s.reference().clone(), 0)?;
    let ts = ControlledPath::stack_rows(&[&time, s])?;
    let coeff = compose_smooth(&ts, &CoefficientMap { field })?;
    let (m, d) = (field.state_dim(), field.noise_dim());
    Ok((coeff.submatrix(0, m, 0, 1)?, coeff.submatrix(0, m, 1, d)?))
}

/// Pathwise log-optimal portfolio for the model `(b, σ)` along the price path `S`.
///
/// `S` need not be generated by `(b, σ)`; passing a common price path gives the
/// misspecified portfolio.
pub fn log_optimal_portfolio(field: &dyn CoefficientField, s: &ControlledPath, k: &ConsumptionClock) -> Result<(PortfolioPath, WealthPath)> {
    if s.shape() != (field.state_dim(), 1) {
        return Err(Error::DimensionMismatch("price path does not match the field".into()));
    }
    let (b, sigma) = coefficients_along(field, s)?;
    let (h, theta) = kelly(&b, &sigma, s.values(), field.det_floor())?;
    assemble(h, &theta, s, k)
}

/// Portfolio built from the Euler scheme along `𝒫ⁿ` and traded against the true price `s`.
pub fn discretized_portfolio(
    field: &dyn CoefficientField,
    s0: &[f64],
    s: &ControlledPath,
    k: &ConsumptionClock,
    scheme: &PartitionScheme,
    n: usize,
) -> Result<DiscretizedPortfolio> {
    let lift = s.reference();
    let idx = scheme.indices(n, lift.grid())?;
    k.check_partition(scheme, n)?;
    let (clock, noise) = clock_and_noise(lift)?;
    let (m, d) = (field.state_dim(), field.noise_dim());
    let price = euler_on_points(field, s0, &clock, &noise, &idx)?;
    let mut ratio = Vec::with_capacity(idx.len() * m);
    let mut theta = Vec::with_capacity(idx.len() * (1 + d));
    let mut b = vec![0.0; m];
    let mut sig = vec![0.0; m * d];
    for (j, &i) in idx.iter().enumerate() {
        let (t, x) = (clock.value(i)[0], &price[j * m..(j + 1) * m]);
        field.drift(t, x, &mut b);
        field.vol(t, x, &mut sig);
        let (h, vartheta) = kelly_point(&b, &sig, m, d, field.det_floor())
            .map_err(|det| Error::DetFloor { time: t, state: x.to_vec(), det, floor: field.det_floor() })?;
        ratio.extend_from_slice(&h);
        theta.extend(theta_point(&vartheta));
    }
    assemble_discrete(PointInputs { idx, ratio, theta, price }, s, k)
}
