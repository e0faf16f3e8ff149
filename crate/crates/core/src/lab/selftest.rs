//! Deterministic self-test battery: algebraic identities, noise reproducibility and two
//! small sweeps.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Config, SweepConfig, SweepVariable};
use super::report::{ExperimentReport, Window};
use super::sweep::{discretization_sweep, stability_sweep};
use crate::controlled::{associativity_residual, compose_smooth, product, rough_integral, ControlledPath, Exp};
use crate::error::Result;
use crate::grid::PartitionScheme;
use crate::lift::{bracket, rie_lift, RoughPath};
use crate::noise::{generate, NoiseSpec};

/// Residuals of the algebraic identities on Brownian lifts at the given level.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct AlgebraicResiduals {
    /// Worst Chen residual over 1000 random triples.
    pub chen: f64,
    /// Worst `|R^{FG} − (R^F G + F R^G + ΔF ΔG)|` over 1000 random pairs.
    pub product: f64,
    /// Associativity residual divided by its scale.
    pub associativity: f64,
    /// `|2∫W dW + [𝐖]_T − W_T²|`.
    pub polarization: f64,
}

fn brownian_lift(dim: usize, level: u32, seed: u64) -> Result<Arc<RoughPath>> {
    Ok(Arc::new(rie_lift(&generate(&NoiseSpec::brownian(dim, 1.0, level, seed))?)))
}

fn ordered_pair(rng: &mut ChaCha8Rng, len: usize) -> (usize, usize) {
    let a = rng.gen_range(0..len);
    let b = rng.gen_range(0..len);
    (a.min(b), a.max(b))
}

pub fn algebraic_residuals(level: u32, seed: u64) -> Result<AlgebraicResiduals> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let rp = brownian_lift(2, level, seed)?;
    let mut chen = 0.0f64;
    for _ in 0..1000 {
        let mut idx = [rng.gen_range(0..rp.len()), rng.gen_range(0..rp.len()), rng.gen_range(0..rp.len())];
        idx.sort_unstable();
        chen = chen.max(rp.chen_residual(idx[0], idx[1], idx[2]));
    }

    let x = ControlledPath::reference_path(rp.clone());
    let (x1, x2) = (x.entry(0, 0)?, x.entry(1, 0)?);
    let f = ControlledPath::concat_cols(&[&product(&x1, &x2)?, &x1.shift(&[1.0])?])?;
    let g = ControlledPath::stack_rows(&[&compose_smooth(&x2, &Exp)?, &x1])?;
    let fg = product(&f, &g)?;
    let mut prod = 0.0f64;
    for _ in 0..1000 {
        let (s, t) = ordered_pair(&mut rng, rp.len());
        let (rf, rg) = (f.remainder(s, t), g.remainder(s, t));
        let mut expect = 0.0;
        for j in 0..2 {
            let df = f.value(t)[j] - f.value(s)[j];
            let dg = g.value(t)[j] - g.value(s)[j];
            expect += rf[j] * g.value(s)[j] + f.value(s)[j] * rg[j] + df * dg;
        }
        prod = prod.max((fg.remainder(s, t)[0] - expect).abs());
    }

    let rp1 = brownian_lift(1, level, seed)?;
    let w = ControlledPath::reference_path(rp1.clone());
    let y = product(&w, &compose_smooth(&w, &Exp)?)?;
    let h = compose_smooth(&w, &Exp)?.linear_combination(1.0, &w, 0.5)?;
    let assoc = associativity_residual(&y, &h, &w)?;

    let z = rough_integral(&w, &w)?;
    let n = rp1.len() - 1;
    let wt = rp1.base().value(n)[0];
    let polarization = (2.0 * z.value(n)[0] + bracket(&rp1).last()[0] - wt * wt).abs();

    Ok(AlgebraicResiduals { chen, product: prod, associativity: assoc.residual / assoc.scale.max(f64::MIN_POSITIVE), polarization })
}

/// Largest absolute difference between the level `L` path restricted to the level
/// `L − 1` grid and the level `L − 1` path, over `lo < L ≤ hi`.
pub fn refinement_gap(lo: u32, hi: u32, seed: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for level in lo + 1..=hi {
        let fine = generate(&NoiseSpec::brownian(1, 1.0, level, seed))?;
        let coarse = generate(&NoiseSpec::brownian(1, 1.0, level - 1, seed))?;
        let idx = PartitionScheme::dyadic(1.0).indices(level as usize - 1, fine.grid())?;
        let restricted = fine.restrict(&idx)?;
        for (a, b) in restricted.values().iter().zip(coarse.values()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

fn csv_bytes(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    Ok(buf)
}

/// Runs the battery. Recognised keys: `seed` (default 42), `level` (default 12) for the
/// algebraic checks and `sweep_level` (default 10) for the two small sweeps.
pub fn selftest(cfg: &Config) -> Result<ExperimentReport> {
    let seed: u64 = cfg.parsed("seed", 42)?;
    let level: u32 = cfg.parsed("level", 12)?;
    let sweep_level: u32 = cfg.parsed("sweep_level", 10)?;
    let mut report = ExperimentReport::new("selftest", cfg.hash());

    let r = algebraic_residuals(level, seed)?;
    report.note("algebraic", r);
    report.push_window(Window::new("chen", r.chen <= 1e-12, format!("{:e} <= 1e-12", r.chen)));
    report.push_window(Window::new("product_remainder", r.product <= 1e-12, format!("{:e} <= 1e-12", r.product)));
    report.push_window(Window::new("associativity", r.associativity <= 1e-8, format!("{:e} <= 1e-8 (relative)", r.associativity)));
    report.push_window(Window::new("polarization", r.polarization <= 1e-9, format!("{:e} <= 1e-9", r.polarization)));

    let gap = refinement_gap(2, level, seed)?;
    report.push_window(Window::new("refinement_consistency", gap == 0.0, format!("max gap {gap:e}")));
    let spec = NoiseSpec::brownian(2, 1.0, level, seed);
    let same = generate(&spec)?.values() == generate(&spec)?.values();
    report.push_window(Window::new("noise_determinism", same, "two generations compared bitwise"));

    let mut stab = Config::default();
    stab.set("family", "lv.tanh");
    stab.set("level", sweep_level);
    stab.set("seed", seed);
    let stab = SweepConfig::from_config(&stab, SweepVariable::Delta)?;
    let a = stability_sweep(&stab)?;
    let b = stability_sweep(&stab)?;
    report.push_window(Window::new("sweep_determinism", csv_bytes(&a)? == csv_bytes(&b)?, "stability CSV compared bytewise"));
    report.push_window(Window::new("stability_sweep", a.passed, format!("{} windows", a.windows.len())));

    let mut disc = Config::default();
    disc.set("family", "lv.tanh");
    disc.set("noise", "deterministic:identity");
    disc.set("level", sweep_level);
    disc.set("levels", format!("3, 4, 5, 6, {}", sweep_level.saturating_sub(3)));
    let disc = SweepConfig::from_config(&disc, SweepVariable::N)?;
    let d = discretization_sweep(&disc)?;
    report.push_window(Window::new("discretization_sweep", d.passed, format!("{} windows", d.windows.len())));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_passes_and_is_reproducible() {
        let cfg = Config::parse("level = 10\nsweep_level = 10\n").unwrap();
        let a = selftest(&cfg).unwrap();
        assert!(a.passed, "{:#?}", a.windows);
        let b = selftest(&cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn refinement_is_exact() {
        assert_eq!(refinement_gap(0, 9, 3).unwrap(), 0.0);
    }
}
