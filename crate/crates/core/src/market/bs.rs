//! Black–Scholes type models `dSⁱ = Sⁱ (bⁱ dt + σ^{i·} d𝐖)` with controlled coefficients.

use std::sync::Arc;

use serde::Serialize;

use super::{assemble, assemble_discrete, kelly, kelly_point, theta_point, DiscretizedPortfolio, PointInputs, PortfolioPath, WealthPath};
use crate::controlled::{canonical_lift, compose_smooth, product, rough_integral, same_reference, ControlledPath, FnMap};
use crate::error::{Error, Result};
use crate::grid::{subsample_anchors, ConsumptionClock, PartitionScheme};
use crate::lift::{frobenius, RoughPath};
use crate::rde::rough_exponential;

/// Drift `b` (`m × 1`) and volatility `σ` (`m × d`), controlled by a time-augmented lift.
///
/// The determinant floor is enforced where a portfolio is built, so degenerate
/// coefficients can still be used for `Ξ` and the price.
#[derive(Clone, Debug)]
pub struct ControlledCoefficients {
    pub b: ControlledPath,
    pub sigma: ControlledPath,
    pub det_floor: f64,
}

impl ControlledCoefficients {
    pub fn new(b: ControlledPath, sigma: ControlledPath, det_floor: f64) -> Result<Self> {
        let (m, d) = sigma.shape();
        if b.shape() != (m, 1) {
            return Err(Error::DimensionMismatch(format!("drift must be {m}x1, got {:?}", b.shape())));
        }
        if !same_reference(b.reference(), sigma.reference()) {
            return Err(Error::GridMismatch("drift and volatility need a common reference".into()));
        }
        if b.ref_dim() != d + 1 {
            return Err(Error::DimensionMismatch("coefficients must be controlled by (t, W)".into()));
        }
        Ok(Self { b, sigma, det_floor })
    }

    pub fn lift(&self) -> &Arc<RoughPath> {
        self.b.reference()
    }

    pub fn assets(&self) -> usize {
        self.b.shape().0
    }

    /// `(bⁱ − ½|σ^{i·}|², σ^{i·})` row by row.
    fn log_integrand(&self) -> Result<ControlledPath> {
        let m = self.assets();
        let c = product(&self.sigma, &self.sigma.transpose())?;
        let diag: Vec<ControlledPath> = (0..m).map(|i| c.entry(i, i)).collect::<Result<_>>()?;
        let diag = ControlledPath::stack_rows(&diag.iter().collect::<Vec<_>>())?;
        let drift = self.b.linear_combination(1.0, &diag, -0.5)?;
        ControlledPath::concat_cols(&[&drift, &self.sigma])
    }
}

/// `Ξ` together with its canonical lift.
#[derive(Clone, Debug)]
pub struct Xi {
    pub path: ControlledPath,
    pub lift: RoughPath,
}

/// `Ξ = ∫ b dt + ∫ σ d𝐖`.
pub fn xi(coeffs: &ControlledCoefficients) -> Result<Xi> {
    let coeff = ControlledPath::concat_cols(&[&coeffs.b, &coeffs.sigma])?;
    let path = rough_integral(&coeff, &ControlledPath::reference_path(coeffs.lift().clone()))?;
    let lift = canonical_lift(&path)?;
    Ok(Xi { path, lift })
}

#[derive(Clone, Debug)]
pub struct PriceExponential {
    /// `Sⁱ = s₀ⁱ exp(Aⁱ)` (`m × 1`).
    pub price: ControlledPath,
    /// `A` (`m × 1`).
    pub log_price: ControlledPath,
    /// `sup_t |s₀ℰ(Ξ)_t − s₀exp(A_t)| / |s₀exp(A_t)|` over all assets.
    pub cross_check: f64,
}

fn exp_entries(a: &ControlledPath, scale: &[f64]) -> Result<ControlledPath> {
    let m = a.dim();
    let s0 = scale.to_vec();
    let map = FnMap::new(m, (m, 1), move |x, v, jac| {
        jac.fill(0.0);
        for i in 0..m {
            let e = s0[i] * x[i].exp();
            if !e.is_finite() {
                return Err(format!("exp overflow at {}", x[i]));
            }
            v[i] = e;
            jac[i * m + i] = e;
        }
        Ok(())
    });
    compose_smooth(a, &map)
}

/// `Sⁱ = s₀ⁱ exp(Aⁱ)` with `Aⁱ = ∫(bⁱ − ½|σ^{i·}|²) dt + ∫σ^{i·} d𝐖`, cross-checked
/// against `s₀ⁱ ℰ(Ξⁱ)`.
pub fn price_exponential(coeffs: &ControlledCoefficients, s0: &[f64]) -> Result<PriceExponential> {
    let m = coeffs.assets();
    if s0.len() != m || s0.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput(format!("need {m} positive initial prices")));
    }
    let log_price = rough_integral(&coeffs.log_integrand()?, &ControlledPath::reference_path(coeffs.lift().clone()))?;
    let price = exp_entries(&log_price, s0)?;
    let big_xi = xi(coeffs)?.path;
    let mut cross_check = 0.0f64;
    for i in 0..m {
        let xi_i = big_xi.entry(i, 0)?;
        let e = rough_exponential(&xi_i, &canonical_lift(&xi_i)?, &[])?;
        if let Some(time) = e.positivity_lost_at {
            return Err(Error::Positivity { time });
        }
        for t in 0..price.len() {
            let exact = price.value(t)[i];
            cross_check = cross_check.max((s0[i] * e.value.value(t)[0] - exact).abs() / exact.abs());
        }
    }
    Ok(PriceExponential { price, log_price, cross_check })
}

fn check_positive(s: &ControlledPath) -> Result<()> {
    for i in 0..s.len() {
        if s.value(i).iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Positivity { time: s.grid().times()[i] });
        }
    }
    Ok(())
}

fn reciprocal_entries(s: &ControlledPath) -> Result<ControlledPath> {
    let m = s.dim();
    let map = FnMap::new(m, (m, 1), move |x, v, jac| {
        jac.fill(0.0);
        for i in 0..m {
            v[i] = 1.0 / x[i];
            jac[i * m + i] = -1.0 / (x[i] * x[i]);
        }
        Ok(())
    });
    compose_smooth(s, &map)
}

/// Log-optimal portfolio with `h = (σσᵀ)⁻¹ b` and `Hⁱ = hⁱ / Sⁱ`.
pub fn log_optimal_portfolio_bs(coeffs: &ControlledCoefficients, s: &ControlledPath, k: &ConsumptionClock) -> Result<(PortfolioPath, WealthPath)> {
    if s.shape() != (coeffs.assets(), 1) {
        return Err(Error::DimensionMismatch("price path does not match the coefficients".into()));
    }
    check_positive(s)?;
    let (h, theta) = kelly(&coeffs.b, &coeffs.sigma, s.values(), coeffs.det_floor)?;
    let ratio = h.hadamard(&reciprocal_entries(s)?)?;
    assemble(ratio, &theta, s, k)
}

/// `φⁱ Sⁱ / V` wherever `V > 0`; `None` where the fraction is undefined.
pub fn wealth_fractions(portfolio: &PortfolioPath, wealth: &WealthPath, s: &ControlledPath) -> Vec<Option<Vec<f64>>> {
    (0..s.len())
        .map(|i| {
            let v = wealth.v.value(i)[0];
            (v > 0.0).then(|| portfolio.phi.value(i).iter().zip(s.value(i)).map(|(p, x)| p * x / v).collect())
        })
        .collect()
}

/// How far the staircase coefficients are from the originals.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct CoefficientGaps {
    /// `‖(bⁿ)′ − b′‖_∞ + ‖(σⁿ)′ − σ′‖_∞`.
    pub derivative: f64,
    /// `‖R^{bⁿ} − R^b‖_∞ + ‖R^{σⁿ} − R^σ‖_∞` over subsampled anchor pairs.
    pub remainder: f64,
}

const GAP_ANCHORS: usize = 257;

fn coefficient_gaps(cp: &ControlledPath, idx: &[usize]) -> CoefficientGaps {
    let n = cp.len();
    let mut floor_of = vec![0usize; n];
    for (k, &start) in idx.iter().enumerate() {
        let end = idx.get(k + 1).copied().unwrap_or(n);
        floor_of[start..end].iter_mut().for_each(|f| *f = start);
    }
    let mut derivative = 0.0f64;
    for i in 0..n {
        let diff: Vec<f64> = cp.deriv(floor_of[i]).iter().zip(cp.deriv(i)).map(|(a, b)| a - b).collect();
        derivative = derivative.max(frobenius(&diff));
    }
    let anchors = subsample_anchors(n, GAP_ANCHORS, &[]);
    let mut remainder = 0.0f64;
    for (a, &s) in anchors.iter().enumerate() {
        for &t in &anchors[a + 1..] {
            let stair = cp.remainder(floor_of[s], floor_of[t]);
            let diff: Vec<f64> = stair.iter().zip(cp.remainder(s, t)).map(|(x, y)| x - y).collect();
            remainder = remainder.max(frobenius(&diff));
        }
    }
    CoefficientGaps { derivative, remainder }
}

/// Discretized portfolio along `𝒫ⁿ` from staircase coefficients and noise.
pub fn discretized_portfolio_bs(
    coeffs: &ControlledCoefficients,
    s0: &[f64],
    s: &ControlledPath,
    k: &ConsumptionClock,
    scheme: &PartitionScheme,
    n: usize,
) -> Result<(DiscretizedPortfolio, CoefficientGaps)> {
    let lift = coeffs.lift();
    let (m, d) = coeffs.sigma.shape();
    if s0.len() != m || s0.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput(format!("need {m} positive initial prices")));
    }
    let idx = scheme.indices(n, lift.grid())?;
    k.check_partition(scheme, n)?;
    let integrand = coeffs.log_integrand()?;
    let e = 1 + d;
    let mut log_price = vec![0.0; m];
    let mut price = Vec::with_capacity(idx.len() * m);
    let mut ratio = Vec::with_capacity(idx.len() * m);
    let mut theta = Vec::with_capacity(idx.len() * e);
    for (j, &i) in idx.iter().enumerate() {
        if j > 0 {
            let prev = idx[j - 1];
            let dx = lift.base().increment(prev, i);
            let f = integrand.value(prev);
            for c in 0..m {
                log_price[c] += (0..e).map(|l| f[c * e + l] * dx[l]).sum::<f64>();
            }
        }
        let sn: Vec<f64> = log_price.iter().zip(s0).map(|(a, s)| s * a.exp()).collect();
        let (h, vartheta) = kelly_point(coeffs.b.value(i), coeffs.sigma.value(i), m, d, coeffs.det_floor).map_err(|det| Error::DetFloor {
            time: lift.grid().times()[i],
            state: sn.clone(),
            det,
            floor: coeffs.det_floor,
        })?;
        ratio.extend(h.iter().zip(&sn).map(|(h, x)| h / x));
        theta.extend(theta_point(&vartheta));
        price.extend(sn);
    }
    let gb = coefficient_gaps(&coeffs.b, &idx);
    let gs = coefficient_gaps(&coeffs.sigma, &idx);
    let gaps = CoefficientGaps { derivative: gb.derivative + gs.derivative, remainder: gb.remainder + gs.remainder };
    Ok((assemble_discrete(PointInputs { idx, ratio, theta, price }, s, k)?, gaps))
}
