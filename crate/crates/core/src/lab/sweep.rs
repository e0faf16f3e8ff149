//! Stability and discretization sweeps.
//!
//! Stability sweeps perturb the drift to `b + δ·Δb` and compare the perturbed model,
//! driven along its own price path, with the unperturbed one. Discretization sweeps
//! compare the portfolio built along `𝒫ⁿ` with the master-grid portfolio.
//!
//! `err_pvar` is the `p′`-variation of the `κ` difference on subsampled anchors.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::config::{SweepConfig, SweepVariable};
use super::report::{ExperimentReport, SweepPoint, Window};
use crate::controlled::{controlled_norm, ControlledPath};
use crate::error::{Error, Result};
use crate::grid::{p_variation, piecewise_constant, subsample_anchors, sup_distance, ConsumptionClock, SampledPath};
use crate::lift::{rie_lift, rough_norm, time_augment, RoughPath};
use crate::market::bs::{discretized_portfolio_bs, log_optimal_portfolio_bs, price_exponential, ControlledCoefficients};
use crate::market::families::{Family, ModelKind};
use crate::market::lv::{discretized_portfolio, log_optimal_portfolio, price_path};
use crate::market::{portfolio_errors, realized_wealth, PortfolioPath, WealthPath};
use crate::noise::generate;

/// The time-augmented lift of the configured noise for one seed.
pub fn noise_lift(cfg: &SweepConfig, seed: u64) -> Result<Arc<RoughPath>> {
    let w = generate(&cfg.noise(seed))?;
    Ok(Arc::new(time_augment(&rie_lift(&w)).into_rough()))
}

fn bs_coefficients(family: &Family, lift: &Arc<RoughPath>, delta: f64) -> Result<ControlledCoefficients> {
    family.bs_coefficients(lift, delta)
}

/// Price path generated by the model with drift perturbed by `delta`.
pub fn model_price(cfg: &SweepConfig, lift: &Arc<RoughPath>, delta: f64) -> Result<ControlledPath> {
    match cfg.model {
        ModelKind::Lv => Ok(price_path(cfg.family.lv_field(delta)?.as_ref(), &[cfg.s0], lift)?.path),
        ModelKind::Bs => Ok(price_exponential(&bs_coefficients(&cfg.family, lift, delta)?, &[cfg.s0])?.price),
    }
}

/// Log-optimal portfolio of the model with drift perturbed by `delta`, along `s`.
pub fn model_portfolio(cfg: &SweepConfig, lift: &Arc<RoughPath>, delta: f64, s: &ControlledPath, k: &ConsumptionClock) -> Result<(PortfolioPath, WealthPath)> {
    match cfg.model {
        ModelKind::Lv => log_optimal_portfolio(cfg.family.lv_field(delta)?.as_ref(), s, k),
        ModelKind::Bs => log_optimal_portfolio_bs(&bs_coefficients(&cfg.family, lift, delta)?, s, k),
    }
}

fn sup_inverse(s: &ControlledPath) -> f64 {
    s.values().values().iter().map(|x| 1.0 / x.abs()).fold(0.0, f64::max)
}

fn difference(a: &SampledPath, b: &SampledPath) -> Result<SampledPath> {
    let values = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    SampledPath::new(a.grid().clone(), a.dim(), values)
}

fn pvar_error(cfg: &SweepConfig, a: &SampledPath, b: &SampledPath) -> Result<Option<f64>> {
    if !cfg.pvar {
        return Ok(None);
    }
    let anchors = subsample_anchors(a.len(), cfg.anchors, &[]);
    let diff = difference(a, b)?;
    Ok(Some(p_variation(&diff, cfg.exponents.p_prime, Some(&anchors))?))
}

/// Model bound `M`: sup of the drift and volatility and of `|det σσᵀ|⁻¹` along the path.
fn model_bound(cfg: &SweepConfig, lift: &Arc<RoughPath>, delta: f64) -> Result<f64> {
    match cfg.model {
        ModelKind::Lv => cfg.family.lv_bound(delta).ok_or_else(|| Error::Config("family has no model bound".into())),
        ModelKind::Bs => {
            let c = bs_coefficients(&cfg.family, lift, delta)?;
            let inv = c.sigma.values().values().iter().map(|s| 1.0 / (s * s)).fold(0.0, f64::max);
            Ok(c.b.sup_norm().max(c.sigma.sup_norm()).max(inv))
        }
    }
}

fn perturbation_norm(cfg: &SweepConfig, lift: &Arc<RoughPath>, anchors: &[usize]) -> Result<f64> {
    match cfg.model {
        ModelKind::Lv => cfg.family.perturbation_norm().ok_or_else(|| Error::Config("family has no perturbation norm".into())),
        ModelKind::Bs => controlled_norm(&cfg.family.bs_perturbation(lift)?, cfg.exponents.p, Some(anchors)),
    }
}

struct SeedContext {
    lift: Arc<RoughPath>,
    clock: ConsumptionClock,
    s: ControlledPath,
    portfolio: PortfolioPath,
    wealth: WealthPath,
    realized: WealthPath,
    rough_norm: f64,
    anchors: Vec<usize>,
}

fn seed_context(cfg: &SweepConfig, seed: u64) -> Result<SeedContext> {
    let lift = noise_lift(cfg, seed)?;
    let clock = cfg.clock.build(lift.grid().clone())?;
    let s = model_price(cfg, &lift, 0.0)?;
    let (portfolio, wealth) = model_portfolio(cfg, &lift, 0.0, &s, &clock)?;
    let realized = realized_wealth(&portfolio, &s, &clock)?;
    let anchors = subsample_anchors(lift.len(), cfg.anchors, &[]);
    let rough_norm = rough_norm(&lift, cfg.exponents.p, Some(&anchors))?;
    Ok(SeedContext { lift, clock, s, portfolio, wealth, realized, rough_norm, anchors })
}

fn stability_point(cfg: &SweepConfig, ctx: &SeedContext, seed: u64, delta: f64) -> Result<SweepPoint> {
    let s_delta = model_price(cfg, &ctx.lift, delta)?;
    let (pf, v) = model_portfolio(cfg, &ctx.lift, delta, &s_delta, &ctx.clock)?;
    let e = portfolio_errors(&ctx.portfolio, &ctx.wealth, &pf, &v)?;
    // Misspecified strategy traded on the true price path.
    let (mis, _) = model_portfolio(cfg, &ctx.lift, delta, &ctx.s, &ctx.clock)?;
    let vhat = realized_wealth(&mis, &ctx.s, &ctx.clock)?;
    let mut extras = BTreeMap::new();
    extras.insert("err_vhat_sup".into(), sup_distance(vhat.v.values(), ctx.realized.v.values())?);
    extras.insert("bound_m".into(), model_bound(cfg, &ctx.lift, delta)?);
    extras.insert("rough_norm".into(), ctx.rough_norm);
    extras.insert("perturbation_norm".into(), perturbation_norm(cfg, &ctx.lift, &ctx.anchors)?);
    extras.insert("inv_min_s".into(), sup_inverse(&ctx.s).max(sup_inverse(&s_delta)));
    Ok(SweepPoint {
        key: delta,
        seed,
        err_phi_sup: e.phi,
        err_kappa_sup: e.kappa,
        err_v_sup: e.wealth,
        err_pvar: pvar_error(cfg, ctx.portfolio.kappa.values(), pf.kappa.values())?,
        extras,
    })
}

fn sort_points(points: &mut [SweepPoint]) {
    points.sort_by(|a, b| a.key.total_cmp(&b.key).then(a.seed.cmp(&b.seed)));
}

fn run_points<F>(cfg: &SweepConfig, keys: &[f64], point: F) -> Result<Vec<SweepPoint>>
where
    F: Fn(&SeedContext, u64, f64) -> Result<SweepPoint> + Sync,
{
    let per_seed: Vec<Result<Vec<SweepPoint>>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let ctx = seed_context(cfg, seed).map_err(|e| e.tagged(format!("seed {seed}")))?;
            keys.par_iter()
                .map(|&key| point(&ctx, seed, key).map_err(|e| e.tagged(format!("seed {seed}, key {key}"))))
                .collect()
        })
        .collect();
    let mut points = Vec::new();
    for r in per_seed {
        points.extend(r?);
    }
    sort_points(&mut points);
    Ok(points)
}

fn base_report(kind: &str, cfg: &SweepConfig) -> ExperimentReport {
    let mut report = ExperimentReport::new(kind, cfg.hash.clone());
    report.model = Some(cfg.model);
    report.family = Some(cfg.family.clone());
    report.note("seeds", &cfg.seeds);
    report.note("level", cfg.level);
    report.note("noise", cfg.noise_kind.to_string());
    report.note("exponents", cfg.exponents);
    report
}

const RATE_METRICS: [&str; 3] = ["phi", "kappa", "V"];

/// Sup-distance of portfolio and wealth between `(b, σ)` and `(b + δΔb, σ)` over the
/// configured `δ` grid, with a per-seed slope window of `1 ± slope_tol`.
pub fn stability_sweep(cfg: &SweepConfig) -> Result<ExperimentReport> {
    if cfg.sweep != SweepVariable::Delta {
        return Err(Error::Config("stability sweeps run over delta".into()));
    }
    let points = run_points(cfg, &cfg.deltas, |ctx, seed, delta| stability_point(cfg, ctx, seed, delta))?;
    let mut report = base_report("stability", cfg);
    report.bound_slope = Some(1.0);
    report.points = points;
    for metric in RATE_METRICS.iter().copied().chain(["err_vhat_sup"]) {
        report.fit_metric(metric, &cfg.seeds, |d| d, 1.0, true);
    }
    for metric in RATE_METRICS {
        let fits: Vec<(Option<u64>, f64)> = report.slopes(metric).into_iter().filter(|(s, _)| s.is_some()).collect();
        let ok = fits.len() == cfg.seeds.len() && fits.iter().all(|(_, s)| (s - 1.0).abs() <= cfg.slope_tol);
        let detail = fits.iter().map(|(s, v)| format!("seed {}: {v:.3}", s.unwrap_or_default())).collect::<Vec<_>>().join(", ");
        report.push_window(Window::new(format!("slope_{metric}"), ok, format!("1 ± {} expected; {detail}", cfg.slope_tol)));
    }
    Ok(report)
}

/// `sup_t |Σ_{i<t} (Xⁿ_i − X_i) ⊗ ΔX_i|`, the gap between the left-point lifts of the
/// staircase and the full base path.
fn lift_gap(lift: &RoughPath, stair: &SampledPath) -> f64 {
    let base = lift.base();
    let d = base.dim();
    let mut acc = vec![0.0; d * d];
    let mut dx = vec![0.0; d];
    let mut sup = 0.0f64;
    for i in 0..base.len() - 1 {
        base.increment_into(i, i + 1, &mut dx);
        let (xn, x) = (stair.value(i), base.value(i));
        for a in 0..d {
            for b in 0..d {
                acc[a * d + b] += (xn[a] - x[a]) * dx[b];
            }
        }
        sup = sup.max(acc.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    sup
}

/// Number of inversions in a sequence that should be non-increasing.
pub fn inversions(errs: &[f64]) -> usize {
    errs.windows(2).filter(|w| w[1] > w[0]).count()
}

fn discretization_point(cfg: &SweepConfig, ctx: &SeedContext, seed: u64, n: usize) -> Result<SweepPoint> {
    let scheme = cfg.partition();
    let mut extras = BTreeMap::new();
    let dp = match cfg.model {
        ModelKind::Lv => discretized_portfolio(cfg.family.lv_field(0.0)?.as_ref(), &[cfg.s0], &ctx.s, &ctx.clock, &scheme, n)?,
        ModelKind::Bs => {
            let coeffs = bs_coefficients(&cfg.family, &ctx.lift, 0.0)?;
            let (dp, gaps) = discretized_portfolio_bs(&coeffs, &[cfg.s0], &ctx.s, &ctx.clock, &scheme, n)?;
            extras.insert("gap_derivative".into(), gaps.derivative);
            extras.insert("gap_remainder".into(), gaps.remainder);
            dp
        }
    };
    let e = portfolio_errors(&ctx.portfolio, &ctx.wealth, &dp.portfolio, &dp.wealth)?;
    let stair = piecewise_constant(ctx.lift.base(), &scheme, n)?;
    let mesh = scheme.mesh(n);
    extras.insert("cells".into(), scheme.cells(n) as f64);
    extras.insert("mesh".into(), mesh);
    extras.insert("w_sup".into(), sup_distance(&stair, ctx.lift.base())?);
    extras.insert("lift_sup".into(), lift_gap(&ctx.lift, &stair));
    extras.insert("rhs".into(), mesh.powf(cfg.exponents.theoretical_exponent(cfg.scheme)));
    extras.insert("rough_norm".into(), ctx.rough_norm);
    extras.insert("bound_m".into(), model_bound(cfg, &ctx.lift, 0.0)?);
    extras.insert("inv_min_s".into(), sup_inverse(&ctx.s));
    extras.insert("err_wealth_optimal".into(), e.wealth);
    Ok(SweepPoint {
        key: n as f64,
        seed,
        err_phi_sup: e.phi,
        err_kappa_sup: e.kappa,
        err_v_sup: sup_distance(dp.realized.v.values(), ctx.realized.v.values())?,
        err_pvar: pvar_error(cfg, ctx.portfolio.kappa.values(), dp.portfolio.kappa.values())?,
        extras,
    })
}

/// Master level needed for the finest partition to be at least 8× coarser than the grid.
pub fn required_level(cfg: &SweepConfig) -> u32 {
    let n_max = cfg.levels.iter().copied().max().unwrap_or(0);
    let cells = cfg.partition().cells(n_max).max(1);
    (cells as f64).log2().ceil() as u32 + 3
}

/// Distance between the portfolio along `𝒫ⁿ` and the master-grid portfolio over the
/// configured levels. `V` is the realized wealth `V̂ⁿ` against `V̂`.
pub fn discretization_sweep(cfg: &SweepConfig) -> Result<ExperimentReport> {
    if cfg.sweep != SweepVariable::N {
        return Err(Error::Config("discretization sweeps run over n".into()));
    }
    let required = required_level(cfg);
    if cfg.level < required {
        return Err(Error::InsufficientRefinement { master: cfg.level, required });
    }
    let keys: Vec<f64> = cfg.levels.iter().map(|n| *n as f64).collect();
    let points = run_points(cfg, &keys, |ctx, seed, n| discretization_point(cfg, ctx, seed, n as usize))?;
    let exponent = cfg.exponents.theoretical_exponent(cfg.scheme);
    let mut report = base_report("discretization", cfg);
    report.bound_slope = Some(-exponent);
    report.note("theoretical_exponent", exponent);
    report.note("scheme", cfg.scheme.to_string());
    report.points = points;
    let scheme = cfg.partition();
    let cells = |n: f64| scheme.cells(n as usize) as f64;
    for metric in RATE_METRICS {
        report.fit_metric(metric, &cfg.seeds, cells, -exponent, false);
    }
    let smooth = cfg.smooth_noise();
    for metric in RATE_METRICS {
        let (_, errs) = report.series(metric, None);
        let slope = report.slopes(metric).into_iter().find(|(s, _)| s.is_none()).map(|(_, v)| v);
        let window = match (slope, smooth) {
            (None, _) => Window::new(format!("rate_{metric}"), false, "fewer than 4 positive errors"),
            (Some(s), true) => Window::new(
                format!("rate_{metric}"),
                (s - cfg.smooth_slope).abs() <= cfg.smooth_tol,
                format!("slope {s:.3}, expected {} ± {}", cfg.smooth_slope, cfg.smooth_tol),
            ),
            (Some(s), false) => {
                let inv = inversions(&errs);
                Window::new(
                    format!("rate_{metric}"),
                    s <= cfg.slope_max && inv <= 1,
                    format!("slope {s:.3} (max {}), {inv} inversion(s)", cfg.slope_max),
                )
            }
        };
        report.push_window(window);
    }
    Ok(report)
}
