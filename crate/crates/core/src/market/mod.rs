//! Pathwise log-optimal investment and consumption.
//!
//! Both model classes share the same skeleton. With `h = (σσᵀ)⁻¹ b`, `ϑ = σᵀh` and
//! `θ = (½ϑᵀϑ, ϑᵀ)`, the consumption rate is `κ = exp(∫ θ d(·,𝐖)) / K_T`, the optimal
//! wealth is `V = κ (K_T − K)`, holdings are `φ = H V` and the bank account `φ⁰` is fixed
//! by the self-financing identity. Local-volatility models take `H = h`; Black–Scholes
//! type models take `Hⁱ = hⁱ / Sⁱ`.

pub mod bs;
pub mod families;
pub mod lv;


use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::controlled::{compose_smooth, product, rough_integral, ControlledPath, Exp, MatrixInverse};
use crate::error::{Error, Result};
use crate::grid::{staircase, ConsumptionClock, SampledPath};
use crate::lift::RoughPath;

/// Holdings and consumption of a portfolio, all on one time-augmented lift.
#[derive(Clone, Debug)]
pub struct PortfolioPath {
    /// Bank account `φ⁰` (`1 × 1`).
    pub phi0: ControlledPath,
    /// Risky holdings `φ` (`m × 1`).
    pub phi: ControlledPath,
    /// Consumption rate `κ` (`1 × 1`).
    pub kappa: ControlledPath,
    /// Investment ratio `H` (`m × 1`).
    pub ratio: ControlledPath,
    /// `U = ∫ θ d(·,𝐖)`, so that `κ = exp(U) / K_T`.
    pub log_growth: ControlledPath,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WealthMode {
    /// `V = κ (K_T − K)`.
    Optimal,
    /// `V̂ = 1 + ∫ φᵀ dS − ∫ κ dK`.
    Realized,
}

#[derive(Clone, Debug)]
pub struct WealthPath {
    pub v: ControlledPath,
    pub mode: WealthMode,
}

/// A portfolio rebalanced only at the points of `𝒫ⁿ`, with its wealth processes.
#[derive(Clone, Debug)]
pub struct DiscretizedPortfolio {
    /// Staircases on the master grid with zero Gubinelli derivative.
    pub portfolio: PortfolioPath,
    /// `Vⁿ = κⁿ (K_T − Kⁿ)`.
    pub wealth: WealthPath,
    /// `V̂ⁿ`, the wealth of `(φⁿ, κⁿ)` traded against the true price path.
    pub realized: WealthPath,
    /// The discretized price `Sⁿ` as a staircase.
    pub price: SampledPath,
}

/// `h = (σσᵀ)⁻¹ b` and `ϑ = σᵀ h` at one point, or the offending determinant.
pub(crate) fn kelly_point(b: &[f64], sigma: &[f64], m: usize, d: usize, floor: f64) -> std::result::Result<(Vec<f64>, Vec<f64>), f64> {
    let s = DMatrix::from_row_slice(m, d, sigma);
    let c = &s * s.transpose();
    let det = c.determinant();
    if !(det.abs() >= floor) {
        return Err(det);
    }
    let inv = c.try_inverse().ok_or(det)?;
    let h = inv * DVector::from_column_slice(b);
    let vartheta = s.transpose() * &h;
    Ok((h.as_slice().to_vec(), vartheta.as_slice().to_vec()))
}

/// `θ = (½ϑᵀϑ, ϑᵀ)` flattened.
pub(crate) fn theta_point(vartheta: &[f64]) -> Vec<f64> {
    let mut theta = Vec::with_capacity(1 + vartheta.len());
    theta.push(0.5 * vartheta.iter().map(|v| v * v).sum::<f64>());
    theta.extend_from_slice(vartheta);
    theta
}

fn det_floor_error(time: f64, state: &[f64], det: f64, floor: f64) -> Error {
    Error::DetFloor { time, state: state.to_vec(), det, floor }
}

/// Controlled `h = (σσᵀ)⁻¹ b` and `θ = (½ϑᵀϑ, ϑᵀ)` from `b` (`m × 1`) and `σ` (`m × d`).
///
/// `state` is only used to report where the determinant floor is violated.
pub(crate) fn kelly(b: &ControlledPath, sigma: &ControlledPath, state: &SampledPath, floor: f64) -> Result<(ControlledPath, ControlledPath)> {
    let (m, d) = sigma.shape();
    if b.shape() != (m, 1) {
        return Err(Error::DimensionMismatch(format!("drift must be {m}x1, got {:?}", b.shape())));
    }
    for i in 0..b.len() {
        if let Err(det) = kelly_point(b.value(i), sigma.value(i), m, d, floor) {
            return Err(det_floor_error(b.grid().times()[i], state.value(i), det, floor));
        }
    }
    let c = product(sigma, &sigma.transpose())?;
    let c_inv = compose_smooth(&c, &MatrixInverse { n: m, det_floor: floor })?;
    let h = product(&c_inv, b)?;
    let vartheta = product(&sigma.transpose(), &h)?;
    let half_sq = product(&vartheta.transpose(), &vartheta)?.scale(0.5);
    let theta = ControlledPath::concat_cols(&[&half_sq, &vartheta.transpose()])?;
    Ok((h, theta))
}

fn check_clock(k: &ConsumptionClock, lift: &RoughPath) -> Result<()> {
    if !k.path().grid().same_as(lift.grid()) {
        return Err(Error::GridMismatch("consumption clock must live on the master grid".into()));
    }
    if !(k.total() > 0.0) {
        return Err(Error::InvalidInput("consumption clock has K_T = 0".into()));
    }
    Ok(())
}

/// `K_T − K` as a controlled path with zero derivative.
fn remaining_consumption(k: &ConsumptionClock, lift: &Arc<RoughPath>) -> Result<ControlledPath> {
    let kt = k.total();
    let rest = k.path().map(1, |_, x, o| o[0] = kt - x[0])?;
    ControlledPath::with_zero_derivative(lift.clone(), 1, 1, rest)
}

/// `φ⁰ = ∫ φᵀ dS − φᵀ S`.
fn bank_account(phi: &ControlledPath, s: &ControlledPath) -> Result<ControlledPath> {
    let gains = rough_integral(&phi.transpose(), s)?;
    let held = product(&phi.transpose(), s)?;
    gains.linear_combination(1.0, &held, -1.0)
}

/// Builds `(φ, κ)` and `V` from the investment ratio `H` and the integrand `θ`.
pub(crate) fn assemble(ratio: ControlledPath, theta: &ControlledPath, s: &ControlledPath, k: &ConsumptionClock) -> Result<(PortfolioPath, WealthPath)> {
    let lift = s.reference().clone();
    check_clock(k, &lift)?;
    let x = ControlledPath::reference_path(lift.clone());
    let log_growth = rough_integral(theta, &x)?;
    let kappa = compose_smooth(&log_growth, &Exp)?.scale(1.0 / k.total());
    let v = kappa.hadamard(&remaining_consumption(k, &lift)?)?;
    let phi = product(&ratio, &v)?;
    let phi0 = bank_account(&phi, s)?;
    let portfolio = PortfolioPath { phi0, phi, kappa, ratio, log_growth };
    Ok((portfolio, WealthPath { v, mode: WealthMode::Optimal }))
}

/// `Σ κ_u (K_v − K_u)` over master cells, as a running sum.
fn consumed(kappa: &ControlledPath, k: &ConsumptionClock) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(kappa.len());
    out.push(0.0);
    for i in 0..kappa.len() - 1 {
        acc += kappa.value(i)[0] * (k.value(i + 1) - k.value(i));
        out.push(acc);
    }
    out
}

/// `V̂ = 1 + ∫ φᵀ dS − ∫ κ dK`, with the `dK` integral taken as left-point sums.
pub fn realized_wealth(portfolio: &PortfolioPath, s: &ControlledPath, k: &ConsumptionClock) -> Result<WealthPath> {
    if !portfolio.phi.grid().same_as(s.grid()) || !k.path().grid().same_as(s.grid()) {
        return Err(Error::GridMismatch("portfolio, price and clock must share the master grid".into()));
    }
    let gains = rough_integral(&portfolio.phi.transpose(), s)?;
    let spent = SampledPath::new(s.grid().clone(), 1, consumed(&portfolio.kappa, k))?;
    let spent = ControlledPath::with_zero_derivative(s.reference().clone(), 1, 1, spent)?;
    let v = gains.linear_combination(1.0, &spent, -1.0)?.shift(&[1.0])?;
    Ok(WealthPath { v, mode: WealthMode::Realized })
}

/// Portfolio inputs known at the points of `𝒫ⁿ`, row by row.
pub(crate) struct PointInputs {
    pub idx: Vec<usize>,
    /// Investment ratio `Hⁿ` (`J × m`).
    pub ratio: Vec<f64>,
    /// `θⁿ` (`J × (1+d)`).
    pub theta: Vec<f64>,
    /// Discretized price `Sⁿ` (`J × m`).
    pub price: Vec<f64>,
}

/// Left-point construction of `(φⁿ, κⁿ)`, `Vⁿ` and `V̂ⁿ` from inputs at the partition points.
pub(crate) fn assemble_discrete(inputs: PointInputs, s: &ControlledPath, k: &ConsumptionClock) -> Result<DiscretizedPortfolio> {
    let lift = s.reference().clone();
    check_clock(k, &lift)?;
    let PointInputs { idx, ratio, theta, price } = inputs;
    let (m, e) = (s.dim(), lift.dim());
    let kt = k.total();
    let jn = idx.len();
    let mut log_growth = vec![0.0; jn];
    for j in 1..jn {
        let dx = lift.base().increment(idx[j - 1], idx[j]);
        let th = &theta[(j - 1) * e..j * e];
        log_growth[j] = log_growth[j - 1] + th.iter().zip(&dx).map(|(a, b)| a * b).sum::<f64>();
    }
    let kappa: Vec<f64> = log_growth.iter().map(|u| u.exp() / kt).collect();
    let wealth: Vec<f64> = (0..jn).map(|j| kappa[j] * (kt - k.value(idx[j]))).collect();
    let phi: Vec<f64> = (0..jn).flat_map(|j| ratio[j * m..(j + 1) * m].iter().map(|h| h * wealth[j]).collect::<Vec<_>>()).collect();
    let mut phi0 = vec![0.0; jn];
    let mut gains = 0.0;
    for j in 0..jn {
        if j > 0 {
            gains += (0..m).map(|c| phi[(j - 1) * m + c] * (price[j * m + c] - price[(j - 1) * m + c])).sum::<f64>();
        }
        phi0[j] = gains - (0..m).map(|c| phi[j * m + c] * price[j * m + c]).sum::<f64>();
    }

    let grid = lift.grid();
    let stair = |dim: usize, rows: usize, at: &[f64]| -> Result<ControlledPath> {
        ControlledPath::with_zero_derivative(lift.clone(), rows, dim / rows, staircase(grid, dim, &idx, at)?)
    };
    let portfolio = PortfolioPath {
        phi0: stair(1, 1, &phi0)?,
        phi: stair(m, m, &phi)?,
        kappa: stair(1, 1, &kappa)?,
        ratio: stair(m, m, &ratio)?,
        log_growth: stair(1, 1, &log_growth)?,
    };
    let wealth = WealthPath { v: stair(1, 1, &wealth)?, mode: WealthMode::Optimal };
    let realized = realized_wealth(&portfolio, s, k)?;
    let price = staircase(grid, m, &idx, &price)?;
    Ok(DiscretizedPortfolio { portfolio, wealth, realized, price })
}

/// Sup distances between two portfolios and their wealth paths.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct PortfolioErrors {
    pub phi: f64,
    pub kappa: f64,
    pub wealth: f64,
}

pub fn portfolio_errors(a: &PortfolioPath, va: &WealthPath, b: &PortfolioPath, vb: &WealthPath) -> Result<PortfolioErrors> {
    use crate::grid::sup_distance;
    Ok(PortfolioErrors {
        phi: sup_distance(a.phi.values(), b.phi.values())?.max(sup_distance(a.phi0.values(), b.phi0.values())?),
        kappa: sup_distance(a.kappa.values(), b.kappa.values())?,
        wealth: sup_distance(va.v.values(), vb.v.values())?,
    })
}
