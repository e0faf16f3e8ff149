//! Library side of the command-line subcommands. Each runner reads a [`Config`],
//! writes its artifacts into an output directory and returns the report it wrote.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::config::{Config, SweepConfig, SweepVariable};
use super::report::{ExperimentReport, Window};
use super::selftest::selftest;
use super::sweep::{discretization_sweep, model_portfolio, model_price, noise_lift, stability_sweep};
use crate::error::{Error, Result};
use crate::grid::{PartitionScheme, SampledPath, SchemeKind};
use crate::lift::{bracket, rie_lift, rough_norm};
use crate::market::bs::wealth_fractions;
use crate::market::families::ModelKind;
use crate::market::lv::coefficients_along;
use crate::market::{realized_wealth, PortfolioPath, WealthPath};
use crate::noise::{generate, rie_report, NoiseKind, NoiseSpec};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn finish(report: ExperimentReport, out: &Path) -> Result<ExperimentReport> {
    report.write(out)?;
    Ok(report)
}

/// Noise settings: `noise` (kind), `d`, `horizon`, `level` (default 12) and `seed`.
pub fn noise_spec(cfg: &Config) -> Result<NoiseSpec> {
    Ok(NoiseSpec {
        kind: cfg.parsed("noise", NoiseKind::Brownian)?,
        dim: cfg.parsed("d", 1usize)?,
        horizon: cfg.parsed("horizon", 1.0)?,
        level: cfg.parsed("level", 12u32)?,
        seed: cfg.parsed("seed", 42u64)?,
    })
}

/// Writes the noise path. An `out` ending in `.csv` is the CSV file itself; otherwise
/// `out` is a directory receiving `noise.csv` and `report.json`.
pub fn gen_noise(cfg: &Config, out: &Path) -> Result<ExperimentReport> {
    let spec = noise_spec(cfg)?;
    let w = generate(&spec)?;
    let mut report = ExperimentReport::new("gen-noise", cfg.hash());
    report.note("spec", &spec);
    if out.extension().is_some_and(|e| e == "csv") {
        w.write_csv(create(out)?)?;
        return Ok(report);
    }
    w.write_csv(create(&out.join("noise.csv"))?)?;
    finish(report, out)
}

/// Lift of the noise (`lift.csv`), its bracket (`bracket.csv`), the rough norm and the
/// Riemann-sum lift diagnostic. Extra keys: `p` (2.5), `scheme` (dyadic), `n_max`.
pub fn lift(cfg: &Config, out: &Path) -> Result<ExperimentReport> {
    let spec = noise_spec(cfg)?;
    let p: f64 = cfg.parsed("p", 2.5)?;
    let scheme_kind: SchemeKind = cfg.parsed("scheme", SchemeKind::Dyadic)?;
    let scheme = PartitionScheme { kind: scheme_kind, horizon: spec.horizon };
    let n_max: usize = cfg.parsed("n_max", (spec.level as usize).min(10))?;
    let w = generate(&spec)?;
    let rp = rie_lift(&w);
    rp.write_csv(create(&out.join("lift.csv"))?)?;
    bracket(&rp).write_csv(create(&out.join("bracket.csv"))?)?;
    let mut report = ExperimentReport::new("lift", cfg.hash());
    report.note("spec", &spec);
    report.note("rough_norm", rough_norm(&rp, p, None)?);
    report.note("bracket_T", bracket(&rp).last().to_vec());
    report.note("rie", rie_report(&spec, &scheme, p, n_max)?);
    let chen = (0..rp.len()).step_by((rp.len() / 64).max(1)).fold(0.0f64, |acc, u| acc.max(rp.chen_residual(0, u, rp.len() - 1)));
    report.push_window(Window::new("chen", chen <= 1e-12, format!("{chen:e} <= 1e-12")));
    finish(report, out)
}

/// Price path of the configured family (`price.csv`). For Black–Scholes families the
/// summary carries the rough-exponential cross-check.
pub fn solve(cfg: &Config, out: &Path) -> Result<ExperimentReport> {
    let sc = SweepConfig::from_config(cfg, SweepVariable::Delta)?;
    let lift = noise_lift(&sc, sc.seeds[0])?;
    let mut report = ExperimentReport::new("solve", cfg.hash());
    report.model = Some(sc.model);
    report.family = Some(sc.family.clone());
    let s = match sc.model {
        ModelKind::Lv => {
            let sol = crate::market::lv::price_path(sc.family.lv_field(0.0)?.as_ref(), &[sc.s0], &lift)?;
            report.note("residual", sol.residual);
            report.note("coarse_residual", sol.coarse_residual);
            sol.path
        }
        ModelKind::Bs => {
            let pe = crate::market::bs::price_exponential(&sc.family.bs_coefficients(&lift, 0.0)?, &[sc.s0])?;
            report.note("cross_check", pe.cross_check);
            pe.price
        }
    };
    report.note("inv_min_s", s.values().values().iter().map(|x| 1.0 / x).fold(0.0, f64::max));
    s.values().write_csv(create(&out.join("price.csv"))?)?;
    finish(report, out)
}

fn write_portfolio_csv(path: &Path, s: &SampledPath, pf: &PortfolioPath, v: &WealthPath, vh: &WealthPath) -> Result<()> {
    use std::io::Write;
    let mut w = create(path)?;
    writeln!(w, "t,S,phi0,phi,kappa,V,Vhat")?;
    for i in 0..s.len() {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.times()[i],
            s.value(i)[0],
            pf.phi0.value(i)[0],
            pf.phi.value(i)[0],
            pf.kappa.value(i)[0],
            v.v.value(i)[0],
            vh.v.value(i)[0]
        )?;
    }
    Ok(())
}

/// Log-optimal portfolio along the model's own price path (`portfolio.csv`), with the
/// fraction identity `φS/V = h` as acceptance window.
pub fn portfolio(cfg: &Config, out: &Path) -> Result<ExperimentReport> {
    let sc = SweepConfig::from_config(cfg, SweepVariable::Delta)?;
    let lift = noise_lift(&sc, sc.seeds[0])?;
    let k = sc.clock.build(lift.grid().clone())?;
    let s = model_price(&sc, &lift, 0.0)?;
    let (pf, v) = model_portfolio(&sc, &lift, 0.0, &s, &k)?;
    let vh = realized_wealth(&pf, &s, &k)?;
    let (b, sigma) = match sc.model {
        ModelKind::Lv => coefficients_along(sc.family.lv_field(0.0)?.as_ref(), &s)?,
        ModelKind::Bs => {
            let c = sc.family.bs_coefficients(&lift, 0.0)?;
            (c.b, c.sigma)
        }
    };
    let mut worst = 0.0f64;
    for (i, frac) in wealth_fractions(&pf, &v, &s).into_iter().enumerate() {
        if let Some(f) = frac {
            let h = b.value(i)[0] / (sigma.value(i)[0] * sigma.value(i)[0]);
            let expect = match sc.model {
                ModelKind::Lv => h * s.value(i)[0],
                ModelKind::Bs => h,
            };
            worst = worst.max((f[0] - expect).abs() / expect.abs().max(1.0));
        }
    }
    write_portfolio_csv(&out.join("portfolio.csv"), s.values(), &pf, &v, &vh)?;
    let mut report = ExperimentReport::new("portfolio", cfg.hash());
    report.model = Some(sc.model);
    report.family = Some(sc.family.clone());
    report.note("kappa_T", pf.kappa.values().last()[0]);
    report.note("vhat_T", vh.v.values().last()[0]);
    report.push_window(Window::new("fraction_identity", worst <= 1e-9, format!("{worst:e} <= 1e-9")));
    finish(report, out)
}

pub fn stability(cfg: &Config, out: &Path) -> Result<ExperimentReport> {
    finish(stability_sweep(&SweepConfig::from_config(cfg, SweepVariable::Delta)?)?, out)
}

pub fn discretize(cfg: &Config, out: &Path) -> Result<ExperimentReport> {
    finish(discretization_sweep(&SweepConfig::from_config(cfg, SweepVariable::N)?)?, out)
}

pub fn run_selftest(cfg: &Config, out: &Path) -> Result<ExperimentReport> {
    finish(selftest(cfg)?, out)
}

/// Dispatches a subcommand by name.
pub fn run(command: &str, cfg: &Config, out: &Path) -> Result<ExperimentReport> {
    match command {
        "gen-noise" => gen_noise(cfg, out),
        "lift" => lift(cfg, out),
        "solve" => solve(cfg, out),
        "portfolio" => portfolio(cfg, out),
        "stability" => stability(cfg, out),
        "discretize" => discretize(cfg, out),
        "selftest" => run_selftest(cfg, out),
        other => Err(Error::UnknownKind(format!("command {other}"))),
    }
}
