//! Seeded driving paths on a dyadic master grid.
//!
//! Brownian samples are built by midpoint (Brownian bridge) refinement. Each node's
//! Gaussian draw is keyed by `(seed, level, index, coordinate)`, so the path at level
//! `L` restricted to the level `L−1` grid is exactly the level `L−1` path.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{PartitionScheme, SampledPath, TimeGrid};
use crate::lift::{rie_diagnostic, RieReport};

/// Largest supported master level.
pub const MAX_LEVEL: u32 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Brownian,
    Zero,
    Identity,
    Sin,
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let name = s.trim();
        let name = name.strip_prefix("deterministic:").unwrap_or(name);
        match name {
            "brownian" => Ok(NoiseKind::Brownian),
            "zero" => Ok(NoiseKind::Zero),
            "identity" => Ok(NoiseKind::Identity),
            "sin" => Ok(NoiseKind::Sin),
            other => Err(Error::UnknownKind(format!("noise kind `{other}`"))),
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Brownian => "brownian",
            NoiseKind::Zero => "zero",
            NoiseKind::Identity => "identity",
            NoiseKind::Sin => "sin",
        })
    }
}

/// Full description of one driving path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub dim: usize,
    pub horizon: f64,
    pub level: u32,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn brownian(dim: usize, horizon: f64, level: u32, seed: u64) -> Self {
        Self { kind: NoiseKind::Brownian, dim, horizon, level, seed }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::dyadic(self.level, self.horizon)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal draw attached to one bridge node.
fn node_normal(seed: u64, level: u32, index: u64, coord: u64) -> f64 {
    let mut key = splitmix64(seed);
    key = splitmix64(key ^ u64::from(level));
    key = splitmix64(key ^ index);
    key = splitmix64(key ^ coord);
    StandardNormal.sample(&mut ChaCha8Rng::seed_from_u64(key))
}

/// Generates the path described by `spec`.
pub fn generate(spec: &NoiseSpec) -> Result<SampledPath> {
    if spec.level > MAX_LEVEL {
        return Err(Error::InvalidInput(format!("noise level {} exceeds {MAX_LEVEL}", spec.level)));
    }
    if spec.dim == 0 {
        return Err(Error::InvalidInput("noise dimension must be at least 1".into()));
    }
    let grid = spec.grid()?;
    let d = spec.dim;
    let horizon = spec.horizon;
    match spec.kind {
        NoiseKind::Zero => SampledPath::constant(grid, &vec![0.0; d]),
        NoiseKind::Identity => SampledPath::from_fn(grid, d, |t, o| o.fill(t)),
        NoiseKind::Sin => SampledPath::from_fn(grid, d, |t, o| {
            for (j, v) in o.iter_mut().enumerate() {
                *v = (2.0 * std::f64::consts::PI * (j + 1) as f64 * t / horizon).sin();
            }
        }),
        NoiseKind::Brownian => {
            let cells = grid.cells();
            let mut values = vec![0.0; grid.len() * d];
            for j in 0..d {
                values[cells * d + j] = horizon.sqrt() * node_normal(spec.seed, 0, 0, j as u64);
            }
            for level in 1..=spec.level {
                let stride = cells >> level;
                let parent = horizon / (1u64 << (level - 1)) as f64;
                let sd = (parent / 4.0).sqrt();
                for k in (1..(1usize << level)).step_by(2) {
                    let (mid, left, right) = (k * stride, (k - 1) * stride, (k + 1) * stride);
                    for j in 0..d {
                        let z = node_normal(spec.seed, level, k as u64, j as u64);
                        values[mid * d + j] = 0.5 * (values[left * d + j] + values[right * d + j]) + sd * z;
                    }
                }
            }
            SampledPath::new(grid, d, values)
        }
    }
}

/// Generates the path and runs the Riemann-sum lift diagnostic on it.
pub fn rie_report(spec: &NoiseSpec, scheme: &PartitionScheme, p: f64, n_max: usize) -> Result<RieReport> {
    rie_diagnostic(&generate(spec)?, scheme, n_max, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_kinds() {
        let mut spec = NoiseSpec { kind: NoiseKind::Zero, dim: 2, horizon: 1.0, level: 3, seed: 0 };
        assert!(generate(&spec).unwrap().values().iter().all(|&v| v == 0.0));
        spec.kind = NoiseKind::Identity;
        spec.dim = 1;
        let g = generate(&spec).unwrap();
        assert_eq!(g.values(), g.times());
        spec.kind = "deterministic:sin".parse().unwrap();
        let s = generate(&spec).unwrap();
        assert!(s.last()[0].abs() < 1e-15);
        assert!("levy".parse::<NoiseKind>().is_err());
    }

    #[test]
    fn brownian_is_reproducible_and_starts_at_zero() {
        let spec = NoiseSpec::brownian(2, 1.0, 10, 7);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.value(0), &[0.0, 0.0]);
        let other = generate(&NoiseSpec::brownian(2, 1.0, 10, 8)).unwrap();
        assert_ne!(a.values(), other.values());
    }

    #[test]
    fn refinement_consistency() {
        for seed in [0u64, 1, 42, u64::MAX] {
            let fine = generate(&NoiseSpec::brownian(2, 1.5, 9, seed)).unwrap();
            let coarse = generate(&NoiseSpec::brownian(2, 1.5, 8, seed)).unwrap();
            for i in 0..coarse.len() {
                assert_eq!(coarse.value(i), fine.value(2 * i));
            }
        }
    }

    #[test]
    fn rejects_large_levels() {
        assert!(generate(&NoiseSpec::brownian(1, 1.0, 21, 0)).is_err());
    }

    #[test]
    fn terminal_moments() {
        let n = 10_000;
        let horizon = 2.0;
        let samples: Vec<f64> = (0..n)
            .map(|s| generate(&NoiseSpec::brownian(1, horizon, 0, s)).unwrap().last()[0])
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 3.0 * horizon.sqrt() * 1e-2, "mean {mean}");
        assert!((var - horizon).abs() <= 0.05 * horizon, "var {var}");
    }

    #[test]
    fn cell_increment_variance() {
        let w = generate(&NoiseSpec::brownian(1, 1.0, 14, 3)).unwrap();
        let n = w.len() - 1;
        let qv: f64 = (0..n).map(|i| w.increment(i, i + 1)[0].powi(2)).sum();
        assert!((qv - 1.0).abs() < 0.05, "{qv}");
    }
}
