use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{ConsumptionClock, PartitionScheme, SchemeKind, TimeGrid};
use crate::market::families::{Family, ModelKind};
use crate::noise::{NoiseKind, NoiseSpec, MAX_LEVEL};

/// Flat `key = value` configuration. Blank lines and `#` comments are ignored.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn parsed<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| Error::Config(format!("{key} = {v}: {e}"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| s.trim().parse().map_err(|e| Error::Config(format!("{key}: {s}: {e}"))))
                    .collect()
            })
            .transpose()
    }

    /// Canonical text form: sorted `key = value` lines.
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockKind {
    Terminal,
    Linear,
}

impl FromStr for ClockKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "terminal" => Ok(ClockKind::Terminal),
            "linear" => Ok(ClockKind::Linear),
            other => Err(Error::UnknownKind(format!("consumption clock {other}"))),
        }
    }
}

impl ClockKind {
    pub fn build(self, grid: TimeGrid) -> Result<ConsumptionClock> {
        match self {
            ClockKind::Terminal => ConsumptionClock::terminal(grid),
            ClockKind::Linear => ConsumptionClock::linear(grid),
        }
    }
}

/// Rate and norm hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Exponents {
    pub p: f64,
    pub p_prime: f64,
    pub q: f64,
    pub beta: f64,
    pub eps: f64,
}

impl Default for Exponents {
    fn default() -> Self {
        Self { p: 2.5, p_prime: 2.9, q: 1.5, beta: 0.7, eps: 0.1 }
    }
}

impl Exponents {
    pub fn validate(&self) -> Result<()> {
        let Exponents { p, p_prime, q, beta, eps } = *self;
        if !(2.0 <= p && p < p_prime && p_prime < 3.0) {
            return Err(Error::Config(format!("need 2 <= p < p' < 3, got p={p}, p'={p_prime}")));
        }
        if !(1.0 < q && q < 2.0 && 1.0 / p_prime + 1.0 / q > 1.0) {
            return Err(Error::Config(format!("need q in (1,2) with 1/p' + 1/q > 1, got q={q}")));
        }
        if !(1.0 - 1.0 / p < beta && beta < 2.0 / p) {
            return Err(Error::Config(format!("need beta in (1-1/p, 2/p), got {beta}")));
        }
        if !(0.0 < eps && eps < 1.0) {
            return Err(Error::Config(format!("need eps in (0,1), got {eps}")));
        }
        Ok(())
    }

    fn gap(&self) -> f64 {
        1.0 - self.p / self.p_prime
    }

    /// Exponent `e` with error `≲ |𝒫ⁿ|^e` for Brownian noise along the scheme.
    pub fn theoretical_exponent(&self, scheme: SchemeKind) -> f64 {
        let mesh = (1.0 - 1.0 / self.q) * self.gap();
        match scheme {
            SchemeKind::Dyadic => mesh.min(1.0 / self.p - 1.0 / self.p_prime).min(0.5 * (1.0 - self.eps) * self.gap()),
            SchemeKind::Uniform => mesh.min((2.0 / self.p - self.beta) * self.gap()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    Delta,
    N,
}

/// Everything a sweep needs, decoded from a [`Config`].
#[derive(Clone, Debug, Serialize)]
pub struct SweepConfig {
    pub model: ModelKind,
    pub family: Family,
    pub s0: f64,
    pub horizon: f64,
    pub noise_kind: NoiseKind,
    pub level: u32,
    pub seeds: Vec<u64>,
    pub scheme: SchemeKind,
    pub sweep: SweepVariable,
    pub deltas: Vec<f64>,
    pub levels: Vec<usize>,
    pub clock: ClockKind,
    pub exponents: Exponents,
    pub pvar: bool,
    pub anchors: usize,
    pub slope_tol: f64,
    pub slope_max: f64,
    pub smooth_slope: f64,
    pub smooth_tol: f64,
    pub hash: String,
}

fn family_params(cfg: &Config) -> Result<BTreeMap<String, f64>> {
    let mut params = BTreeMap::new();
    for (k, v) in cfg.entries() {
        if let Some(name) = k.strip_prefix("family.") {
            let x: f64 = v.parse().map_err(|e| Error::Config(format!("{k} = {v}: {e}")))?;
            params.insert(name.to_string(), x);
        }
    }
    Ok(params)
}

impl SweepConfig {
    pub fn from_config(cfg: &Config, default_sweep: SweepVariable) -> Result<Self> {
        let family_name = cfg.get("family").unwrap_or("lv.tanh");
        let family = Family::parse(family_name, &family_params(cfg)?)?;
        let model = match cfg.get("model") {
            None => family.model(),
            Some("lv") => ModelKind::Lv,
            Some("bs") => ModelKind::Bs,
            Some(other) => return Err(Error::UnknownKind(format!("model {other}"))),
        };
        if model != family.model() {
            return Err(Error::Config(format!("family {} does not belong to model {model}", family.name())));
        }
        let sweep = match cfg.get("sweep") {
            None => default_sweep,
            Some("delta") => SweepVariable::Delta,
            Some("n") => SweepVariable::N,
            Some(other) => return Err(Error::UnknownKind(format!("sweep variable {other}"))),
        };
        let seeds = match cfg.list::<u64>("seeds")? {
            Some(s) => s,
            None => vec![cfg.parsed("seed", 42u64)?],
        };
        let deltas = cfg.list::<f64>("deltas")?.unwrap_or_else(|| (3..=8).map(|k| 2f64.powi(-k)).collect());
        let levels = match cfg.list::<usize>("levels")? {
            Some(l) => l,
            None => (cfg.parsed("n_min", 6usize)?..=cfg.parsed("n_max", 12usize)?).collect(),
        };
        let norms = cfg.get("norms").unwrap_or("sup,pvar");
        let out = Self {
            model,
            family,
            s0: cfg.parsed("s0", 1.0)?,
            horizon: cfg.parsed("horizon", 1.0)?,
            noise_kind: cfg.parsed("noise", NoiseKind::Brownian)?,
            level: cfg.parsed("level", 15u32)?,
            seeds,
            scheme: cfg.parsed("scheme", SchemeKind::Dyadic)?,
            sweep,
            deltas,
            levels,
            clock: cfg.parsed("clock", ClockKind::Terminal)?,
            exponents: Exponents {
                p: cfg.parsed("p", 2.5)?,
                p_prime: cfg.parsed("p_prime", 2.9)?,
                q: cfg.parsed("q", 1.5)?,
                beta: cfg.parsed("beta", 0.7)?,
                eps: cfg.parsed("eps", 0.1)?,
            },
            pvar: norms.split(',').any(|n| n.trim() == "pvar"),
            anchors: cfg.parsed("anchors", 1024usize)?,
            slope_tol: cfg.parsed("slope_tol", 0.25)?,
            slope_max: cfg.parsed("slope_max", -0.15)?,
            smooth_slope: cfg.parsed("smooth_slope", -1.0)?,
            smooth_tol: cfg.parsed("smooth_tol", 0.15)?,
            hash: cfg.hash(),
        };
        out.validate()?;
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        self.exponents.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.level > MAX_LEVEL {
            return Err(Error::Config(format!("level {} exceeds {MAX_LEVEL}", self.level)));
        }
        if !(self.horizon > 0.0) || !(self.s0 > 0.0) {
            return Err(Error::Config("horizon and s0 must be positive".into()));
        }
        match self.sweep {
            SweepVariable::Delta => {
                if self.deltas.len() < 4 {
                    return Err(Error::Config("a delta sweep needs at least 4 values".into()));
                }
                if self.deltas.iter().any(|d| !(*d > 0.0)) {
                    return Err(Error::Config("deltas must be positive".into()));
                }
                let r0 = (self.deltas[1] / self.deltas[0]).ln();
                if self.deltas.windows(2).any(|w| ((w[1] / w[0]).ln() - r0).abs() > 1e-9 * r0.abs().max(1.0)) {
                    return Err(Error::Config("deltas must be log-spaced".into()));
                }
            }
            SweepVariable::N => {
                if self.levels.len() < 4 {
                    return Err(Error::Config("an n sweep needs at least 4 values".into()));
                }
                if self.levels.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config("levels must be increasing".into()));
                }
            }
        }
        Ok(())
    }

    pub fn partition(&self) -> PartitionScheme {
        match self.scheme {
            SchemeKind::Dyadic => PartitionScheme::dyadic(self.horizon),
            SchemeKind::Uniform => PartitionScheme::uniform(self.horizon),
        }
    }

    pub fn noise(&self, seed: u64) -> NoiseSpec {
        NoiseSpec { kind: self.noise_kind, dim: 1, horizon: self.horizon, level: self.level, seed }
    }

    /// Whether the driving noise is a smooth deterministic path.
    pub fn smooth_noise(&self) -> bool {
        !matches!(self.noise_kind, NoiseKind::Brownian)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_files() {
        let cfg = Config::parse("# comment\nfamily = bs.const\nfamily.b = 0.2  # inline\n\nseeds = 1, 2,3\n").unwrap();
        assert_eq!(cfg.get("family.b"), Some("0.2"));
        let sc = SweepConfig::from_config(&cfg, SweepVariable::Delta).unwrap();
        assert_eq!(sc.seeds, vec![1, 2, 3]);
        assert_eq!(sc.model, ModelKind::Bs);
        assert_eq!(sc.family, Family::BsConst { b: 0.2, sigma: 0.2 });
        assert_eq!(sc.deltas.len(), 6);
    }

    #[test]
    fn rejects_malformed() {
        assert!(Config::parse("novalue").is_err());
        assert!(Config::parse("a = 1\na = 2").is_err());
        let bad = Config::parse("p = 2.95").unwrap();
        assert!(SweepConfig::from_config(&bad, SweepVariable::N).is_err());
        let bad = Config::parse("deltas = 0.5, 0.25, 0.2, 0.1").unwrap();
        assert!(SweepConfig::from_config(&bad, SweepVariable::Delta).is_err());
        let bad = Config::parse("model = bs\nfamily = lv.tanh").unwrap();
        assert!(SweepConfig::from_config(&bad, SweepVariable::N).is_err());
    }

    #[test]
    fn hash_ignores_layout() {
        let a = Config::parse("a = 1\nb = 2").unwrap();
        let b = Config::parse("b=2\n\n  a =1 # x").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), Config::parse("a = 1").unwrap().hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn default_exponents() {
        let e = Exponents::default();
        e.validate().unwrap();
        let gap: f64 = 1.0 - 2.5 / 2.9;
        let dy = ((1.0 - 1.0 / 1.5) * gap).min(1.0 / 2.5 - 1.0 / 2.9).min(0.5 * 0.9 * gap);
        assert_eq!(e.theoretical_exponent(SchemeKind::Dyadic), dy);
        let un = ((1.0 - 1.0 / 1.5) * gap).min((2.0 / 2.5 - 0.7) * gap);
        assert_eq!(e.theoretical_exponent(SchemeKind::Uniform), un);
    }
}
