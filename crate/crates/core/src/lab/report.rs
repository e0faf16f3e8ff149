use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::fit::{rate_fit_log2, RateFit};
use crate::error::Result;
use crate::market::families::{Family, ModelKind};

/// One `(sweep key, seed)` measurement.
#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    /// `δ` for stability sweeps, `n` for discretization sweeps.
    pub key: f64,
    pub seed: u64,
    pub err_phi_sup: f64,
    pub err_kappa_sup: f64,
    pub err_v_sup: f64,
    pub err_pvar: Option<f64>,
    /// Constants and auxiliary errors, keyed by column name.
    pub extras: BTreeMap<String, f64>,
}

impl SweepPoint {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "phi" => Some(self.err_phi_sup),
            "kappa" => Some(self.err_kappa_sup),
            "V" => Some(self.err_v_sup),
            "pvar" => self.err_pvar,
            other => self.extras.get(other).copied(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateStatus {
    Consistent,
    FasterThanBound,
    BoundViolated,
}

impl RateStatus {
    /// Compares a fitted slope against a bound of the form `error ≲ x^{bound_slope}`,
    /// where larger slopes mean slower decay.
    pub fn classify(fit: &RateFit, bound_slope: f64, decreasing_x: bool) -> Self {
        let tol = fit.half_width;
        let (excess, deficit) = if decreasing_x {
            // x = δ → 0: the bound needs slope ≥ bound_slope.
            (fit.slope - bound_slope, bound_slope - fit.slope)
        } else {
            // x = cells → ∞: the bound needs slope ≤ bound_slope.
            (bound_slope - fit.slope, fit.slope - bound_slope)
        };
        if deficit > tol {
            RateStatus::BoundViolated
        } else if excess > tol {
            RateStatus::FasterThanBound
        } else {
            RateStatus::Consistent
        }
    }
}

/// A fitted log-log slope for one metric, per seed or over the seed mean.
#[derive(Clone, Debug, Serialize)]
pub struct FitRecord {
    /// `None` for the fit of seed-averaged errors.
    pub seed: Option<u64>,
    pub metric: String,
    pub fit: RateFit,
    pub status: RateStatus,
}

/// A pass/fail acceptance window.
#[derive(Clone, Debug, Serialize)]
pub struct Window {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Window {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub kind: String,
    pub config_hash: String,
    pub model: Option<ModelKind>,
    pub family: Option<Family>,
    /// Slope implied by the theoretical bound, on the report's log-log axes.
    pub bound_slope: Option<f64>,
    pub points: Vec<SweepPoint>,
    pub fits: Vec<FitRecord>,
    pub summary: BTreeMap<String, serde_json::Value>,
    pub windows: Vec<Window>,
    pub passed: bool,
}

impl ExperimentReport {
    pub fn new(kind: &str, config_hash: String) -> Self {
        Self {
            kind: kind.to_string(),
            config_hash,
            model: None,
            family: None,
            bound_slope: None,
            points: Vec::new(),
            fits: Vec::new(),
            summary: BTreeMap::new(),
            windows: Vec::new(),
            passed: true,
        }
    }

    pub fn push_window(&mut self, w: Window) {
        self.passed &= w.passed;
        self.windows.push(w);
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(key.to_string(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Writes `points.csv`: the fixed error columns, `seed`, extra columns in sorted
    /// order, and a trailing `model` column for Black–Scholes runs.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let extra_keys: Vec<&String> = {
            let mut keys: Vec<&String> = self.points.iter().flat_map(|p| p.extras.keys()).collect();
            keys.sort();
            keys.dedup();
            keys
        };
        let with_model = self.model == Some(ModelKind::Bs);
        write!(w, "delta_or_n,err_phi_sup,err_kappa_sup,err_V_sup,err_pvar,seed")?;
        for k in &extra_keys {
            write!(w, ",{k}")?;
        }
        if with_model {
            write!(w, ",model")?;
        }
        writeln!(w)?;
        for p in &self.points {
            let pvar = p.err_pvar.map(|v| v.to_string()).unwrap_or_default();
            write!(w, "{},{},{},{},{},{}", p.key, p.err_phi_sup, p.err_kappa_sup, p.err_v_sup, pvar, p.seed)?;
            for k in &extra_keys {
                match p.extras.get(*k) {
                    Some(v) => write!(w, ",{v}")?,
                    None => write!(w, ",")?,
                }
            }
            if with_model {
                write!(w, ",bs")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Writes `report.json` and, when there are sweep points, `points.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        if !self.points.is_empty() {
            let mut buf = Vec::new();
            self.write_csv(&mut buf)?;
            std::fs::write(dir.join("points.csv"), buf)?;
        }
        Ok(())
    }

    /// Errors of `metric` against the sweep key for one seed, keys ascending, with
    /// non-positive errors dropped.
    pub fn series(&self, metric: &str, seed: Option<u64>) -> (Vec<f64>, Vec<f64>) {
        let mut keys: Vec<f64> = self.points.iter().map(|p| p.key).collect();
        keys.sort_by(f64::total_cmp);
        keys.dedup();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for k in keys {
            let vals: Vec<f64> = self
                .points
                .iter()
                .filter(|p| p.key == k && seed.is_none_or(|s| p.seed == s))
                .filter_map(|p| p.metric(metric))
                .collect();
            if vals.is_empty() {
                continue;
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            if mean > 0.0 {
                xs.push(k);
                ys.push(mean);
            }
        }
        (xs, ys)
    }

    /// Fits `metric` per seed and for the seed mean; `x_of` maps sweep keys to the
    /// abscissa of the log-log fit.
    pub fn fit_metric(&mut self, metric: &str, seeds: &[u64], x_of: impl Fn(f64) -> f64, bound_slope: f64, decreasing_x: bool) {
        let targets: Vec<Option<u64>> = seeds.iter().map(|s| Some(*s)).chain(std::iter::once(None)).collect();
        for seed in targets {
            let (keys, ys) = self.series(metric, seed);
            let xs: Vec<f64> = keys.iter().map(|k| x_of(*k)).collect();
            if let Ok(fit) = rate_fit_log2(&xs, &ys) {
                let status = RateStatus::classify(&fit, bound_slope, decreasing_x);
                self.fits.push(FitRecord { seed, metric: metric.to_string(), fit, status });
            }
        }
    }

    pub fn slopes(&self, metric: &str) -> Vec<(Option<u64>, f64)> {
        self.fits.iter().filter(|f| f.metric == metric).map(|f| (f.seed, f.fit.slope)).collect()
    }
}
