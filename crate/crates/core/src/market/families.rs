//! Named coefficient families with a fixed perturbation direction.
//!
//! A family produces the model at `δ = 0` and its perturbation `b + δ·Δb`.
//!
//! | name | model | coefficients | `Δb` |
//! |------|-------|--------------|------|
//! | `lv.tanh` | lv | `b = μ + a tanh x`, `σ = vol (1 + c tanh²x)` | `tanh x` |
//! | `lv.const` | lv | `b`, `σ` constant | `1` |
//! | `bs.const` | bs | `b`, `σ` constant | `1` |
//! | `bs.sin` | bs | `b_t = b + amp sin(freq t)`, `b′ = 0`, `σ` constant | `1` |
//! | `bs.tanhw` | bs | `b = b₀ + a tanh W`, `b′ = (0, a sech²W)`, `σ` constant | `tanh W` |

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use super::bs::ControlledCoefficients;
use crate::controlled::ControlledPath;
use crate::error::{Error, Result};
use crate::grid::SampledPath;
use crate::lift::RoughPath;
use crate::rde::{CoefficientField, ConstantField, FnField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lv,
    Bs,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Lv => "lv",
            ModelKind::Bs => "bs",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "name")]
pub enum Family {
    #[serde(rename = "lv.tanh")]
    LvTanh { mu: f64, a: f64, vol: f64, c: f64 },
    #[serde(rename = "lv.const")]
    LvConst { b: f64, sigma: f64 },
    #[serde(rename = "bs.const")]
    BsConst { b: f64, sigma: f64 },
    #[serde(rename = "bs.sin")]
    BsSin { b: f64, sigma: f64, amp: f64, freq: f64 },
    #[serde(rename = "bs.tanhw")]
    BsTanhW { b: f64, sigma: f64, a: f64 },
}

/// Polynomial in `u = tanh x`, coefficients in ascending order.
#[derive(Clone, Debug)]
struct TanhPoly(Vec<f64>);

impl TanhPoly {
    fn eval(&self, u: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    /// `d/dx p(tanh x) = p′(u) (1 − u²)`.
    fn derivative(&self) -> Self {
        let dp: Vec<f64> = self.0.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect();
        let mut out = vec![0.0; dp.len() + 2];
        for (k, c) in dp.iter().enumerate() {
            out[k] += c;
            out[k + 2] -= c;
        }
        TanhPoly(out)
    }

    fn sup(&self) -> f64 {
        const SAMPLES: usize = 200_000;
        (0..=SAMPLES)
            .map(|k| self.eval(-1.0 + 2.0 * k as f64 / SAMPLES as f64).abs())
            .fold(0.0, f64::max)
    }

    /// `Σ_{j ≤ k} sup |Dʲ p|`.
    fn c_norm(&self, k: usize) -> f64 {
        let mut p = self.clone();
        let mut total = 0.0;
        for _ in 0..=k {
            total += p.sup();
            p = p.derivative();
        }
        total
    }
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

impl Family {
    /// Looks up a family by name; parameters not given take their defaults.
    pub fn parse(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let p = |k: &str, d: f64| param(params, k, d);
        let family = match name {
            "lv.tanh" => Family::LvTanh { mu: p("mu", 0.05), a: p("a", 0.1), vol: p("vol", 0.2), c: p("c", 0.5) },
            "lv.const" => Family::LvConst { b: p("b", 0.1), sigma: p("sigma", 0.2) },
            "bs.const" => Family::BsConst { b: p("b", 0.1), sigma: p("sigma", 0.2) },
            "bs.sin" => Family::BsSin { b: p("b", 0.1), sigma: p("sigma", 0.2), amp: p("amp", 0.05), freq: p("freq", std::f64::consts::TAU) },
            "bs.tanhw" => Family::BsTanhW { b: p("b", 0.1), sigma: p("sigma", 0.2), a: p("a", 0.05) },
            other => return Err(Error::UnknownKind(format!("coefficient family {other}"))),
        };
        family.validate()?;
        Ok(family)
    }

    fn validate(&self) -> Result<()> {
        let sigma = match *self {
            Family::LvTanh { vol, c, .. } => {
                if !(c > -1.0) {
                    return Err(Error::Config("lv.tanh needs c > -1".into()));
                }
                vol
            }
            Family::LvConst { sigma, .. } | Family::BsConst { sigma, .. } | Family::BsSin { sigma, .. } | Family::BsTanhW { sigma, .. } => sigma,
        };
        if !(sigma.abs() > 0.0) {
            return Err(Error::Config("volatility must be non-zero".into()));
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::LvTanh { .. } => "lv.tanh",
            Family::LvConst { .. } => "lv.const",
            Family::BsConst { .. } => "bs.const",
            Family::BsSin { .. } => "bs.sin",
            Family::BsTanhW { .. } => "bs.tanhw",
        }
    }

    pub fn model(&self) -> ModelKind {
        match self {
            Family::LvTanh { .. } | Family::LvConst { .. } => ModelKind::Lv,
            _ => ModelKind::Bs,
        }
    }

    /// The local-volatility field with drift `b + δ·Δb`.
    pub fn lv_field(&self, delta: f64) -> Result<Box<dyn CoefficientField>> {
        match *self {
            Family::LvTanh { mu, a, vol, c } => {
                let a = a + delta;
                let field = FnField::new(
                    1,
                    1,
                    move |_, x, o| o[0] = mu + a * x[0].tanh(),
                    move |_, x, o| o[0] = vol * (1.0 + c * x[0].tanh().powi(2)),
                    move |_, x, o| {
                        let u = x[0].tanh();
                        o[0] = 0.0;
                        o[1] = a * (1.0 - u * u);
                    },
                    move |_, x, o| {
                        let u = x[0].tanh();
                        o[0] = 0.0;
                        o[1] = 2.0 * vol * c * u * (1.0 - u * u);
                    },
                );
                let bound = self.lv_bound(delta).expect("lv family");
                Ok(Box::new(field.with_bound(bound)))
            }
            Family::LvConst { b, sigma } => Ok(Box::new(ConstantField::scalar(b + delta, sigma))),
            _ => Err(Error::Config(format!("{} is not a local-volatility family", self.name()))),
        }
    }

    /// `‖Δb‖_{C²_b}`, the size of the perturbation direction.
    pub fn perturbation_norm(&self) -> Option<f64> {
        match self {
            Family::LvTanh { .. } => Some(TanhPoly(vec![0.0, 1.0]).c_norm(2)),
            Family::LvConst { .. } => Some(1.0),
            _ => None,
        }
    }

    /// `M ≥ max(‖b‖_{C³_b}, ‖σ‖_{C³_b}, sup |det σσᵀ|⁻¹)` for the perturbed lv model.
    pub fn lv_bound(&self, delta: f64) -> Option<f64> {
        match *self {
            Family::LvTanh { mu, a, vol, c } => {
                let b = TanhPoly(vec![mu, a + delta]).c_norm(3);
                let s = TanhPoly(vec![vol, 0.0, vol * c]);
                let inf = (0..=1000).map(|k| s.eval(k as f64 / 1000.0).abs()).fold(f64::INFINITY, f64::min);
                Some(b.max(s.c_norm(3)).max(1.0 / (inf * inf)))
            }
            Family::LvConst { b, sigma } => Some((b + delta).abs().max(sigma.abs()).max(1.0 / (sigma * sigma))),
            _ => None,
        }
    }

    /// Black–Scholes coefficients with drift `b + δ·Δb` on a time-augmented scalar lift.
    pub fn bs_coefficients(&self, lift: &Arc<RoughPath>, delta: f64) -> Result<ControlledCoefficients> {
        if lift.dim() != 2 {
            return Err(Error::DimensionMismatch("registry families use one noise coordinate".into()));
        }
        let sigma = match *self {
            Family::BsConst { sigma, .. } | Family::BsSin { sigma, .. } | Family::BsTanhW { sigma, .. } => sigma,
            _ => return Err(Error::Config(format!("{} is not a Black-Scholes family", self.name()))),
        };
        let base = match *self {
            Family::BsConst { b, .. } => ControlledPath::constant(lift.clone(), 1, 1, &[b])?,
            Family::BsSin { b, amp, freq, .. } => {
                let path = SampledPath::from_fn(lift.grid().clone(), 1, |t, o| o[0] = b + amp * (freq * t).sin())?;
                ControlledPath::with_zero_derivative(lift.clone(), 1, 1, path)?
            }
            Family::BsTanhW { b, a, .. } => tanh_of_noise(lift, a)?.shift(&[b])?,
            _ => unreachable!(),
        };
        let drift = base.linear_combination(1.0, &self.bs_perturbation(lift)?, delta)?;
        let vol = ControlledPath::constant(lift.clone(), 1, 1, &[sigma])?;
        ControlledCoefficients::new(drift, vol, 1e-8)
    }

    /// The fixed perturbation direction `Δb` as a controlled path.
    pub fn bs_perturbation(&self, lift: &Arc<RoughPath>) -> Result<ControlledPath> {
        match self {
            Family::BsTanhW { .. } => tanh_of_noise(lift, 1.0),
            Family::BsConst { .. } | Family::BsSin { .. } => ControlledPath::constant(lift.clone(), 1, 1, &[1.0]),
            _ => Err(Error::Config(format!("{} is not a Black-Scholes family", self.name()))),
        }
    }
}

/// `a tanh(W)` with derivative `(0, a sech²W)`.
fn tanh_of_noise(lift: &Arc<RoughPath>, a: f64) -> Result<ControlledPath> {
    let n = lift.len();
    let mut values = Vec::with_capacity(n);
    let mut deriv = Vec::with_capacity(2 * n);
    for i in 0..n {
        let u = lift.base().value(i)[1].tanh();
        values.push(a * u);
        deriv.extend_from_slice(&[0.0, a * (1.0 - u * u)]);
    }
    ControlledPath::new(lift.clone(), 1, 1, values, deriv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::{rie_lift, time_augment};
    use crate::noise::{generate, NoiseSpec};

    #[test]
    fn tanh_perturbation_norm_closed_form() {
        let expect = 2.0 + 4.0 / (3.0 * 3f64.sqrt());
        let got = Family::parse("lv.tanh", &BTreeMap::new()).unwrap().perturbation_norm().unwrap();
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
    }

    #[test]
    fn tanh_poly_derivatives() {
        let p = TanhPoly(vec![0.0, 1.0]);
        let x: f64 = 0.3;
        let sech2 = 1.0 - x.tanh().powi(2);
        assert!((p.derivative().eval(x.tanh()) - sech2).abs() < 1e-15);
        assert!((p.derivative().derivative().eval(x.tanh()) + 2.0 * x.tanh() * sech2).abs() < 1e-15);
        // tanh''' at 0 is -2.
        assert!((p.derivative().derivative().derivative().eval(0.0) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn lv_field_matches_finite_differences() {
        let f = Family::parse("lv.tanh", &BTreeMap::new()).unwrap().lv_field(0.125).unwrap();
        let (x, h) = (0.37, 1e-6);
        let (mut bp, mut bm, mut sp, mut sm) = ([0.0], [0.0], [0.0], [0.0]);
        f.drift(0.0, &[x + h], &mut bp);
        f.drift(0.0, &[x - h], &mut bm);
        f.vol(0.0, &[x + h], &mut sp);
        f.vol(0.0, &[x - h], &mut sm);
        let (mut jb, mut js) = ([0.0; 2], [0.0; 2]);
        f.drift_jacobian(0.0, &[x], &mut jb);
        f.vol_jacobian(0.0, &[x], &mut js);
        assert!((jb[1] - (bp[0] - bm[0]) / (2.0 * h)).abs() < 1e-8);
        assert!((js[1] - (sp[0] - sm[0]) / (2.0 * h)).abs() < 1e-8);
        assert!(f.bound().unwrap() >= 24.99);
    }

    #[test]
    fn registry_rejects_unknown_and_invalid() {
        assert!(matches!(Family::parse("lv.nope", &BTreeMap::new()), Err(Error::UnknownKind(_))));
        let mut p = BTreeMap::new();
        p.insert("sigma".to_string(), 0.0);
        assert!(Family::parse("bs.const", &p).is_err());
        assert_eq!(Family::parse("bs.sin", &BTreeMap::new()).unwrap().model(), ModelKind::Bs);
    }

    #[test]
    fn bs_families_build() {
        let w = generate(&NoiseSpec::brownian(1, 1.0, 8, 1)).unwrap();
        let lift = Arc::new(time_augment(&rie_lift(&w)).into_rough());
        for name in ["bs.const", "bs.sin", "bs.tanhw"] {
            let fam = Family::parse(name, &BTreeMap::new()).unwrap();
            let c0 = fam.bs_coefficients(&lift, 0.0).unwrap();
            let c1 = fam.bs_coefficients(&lift, 0.5).unwrap();
            let dir = fam.bs_perturbation(&lift).unwrap();
            for i in 0..lift.len() {
                assert!((c1.b.value(i)[0] - c0.b.value(i)[0] - 0.5 * dir.value(i)[0]).abs() < 1e-15);
            }
        }
        assert!(Family::parse("lv.tanh", &BTreeMap::new()).unwrap().bs_coefficients(&lift, 0.0).is_err());
    }
}
