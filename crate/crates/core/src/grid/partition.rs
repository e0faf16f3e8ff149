use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::TimeGrid;
use crate::error::{Error, Result};

/// Spacing rule of a nested partition family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    /// `n` cells of width `T/n`.
    Uniform,
    /// `2^n` cells of width `2^{-n} T`.
    Dyadic,
}

/// Family of partitions `𝒫ⁿ` of `[0, T]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionScheme {
    pub kind: SchemeKind,
    pub horizon: f64,
}

impl PartitionScheme {
    pub fn uniform(horizon: f64) -> Self {
        Self { kind: SchemeKind::Uniform, horizon }
    }

    pub fn dyadic(horizon: f64) -> Self {
        Self { kind: SchemeKind::Dyadic, horizon }
    }

    /// Number of cells of `𝒫ⁿ`.
    pub fn cells(&self, n: usize) -> usize {
        match self.kind {
            SchemeKind::Uniform => n,
            SchemeKind::Dyadic => 1usize << n,
        }
    }

    pub fn points(&self, n: usize) -> Vec<f64> {
        let cells = self.cells(n);
        (0..=cells)
            .map(|k| self.horizon * (k as f64 / cells as f64))
            .collect()
    }

    /// Mesh `πₙ`.
    pub fn mesh(&self, n: usize) -> f64 {
        self.horizon / self.cells(n) as f64
    }

    /// Master-grid indices of the points of `𝒫ⁿ`.
    pub fn indices(&self, n: usize, grid: &TimeGrid) -> Result<Vec<usize>> {
        if self.kind == SchemeKind::Uniform && n == 0 {
            return Err(Error::InvalidInput("uniform partition needs n >= 1".into()));
        }
        if self.kind == SchemeKind::Dyadic && n > 24 {
            return Err(Error::InvalidInput(format!("dyadic level {n} exceeds 24")));
        }
        let tol = 1e-12 * self.horizon.abs().max(1.0);
        if (grid.horizon() - self.horizon).abs() > tol {
            return Err(Error::GridMismatch(format!(
                "scheme horizon {} differs from grid horizon {}",
                self.horizon,
                grid.horizon()
            )));
        }
        let cells = self.cells(n);
        let stride = grid.cells().is_multiple_of(cells).then(|| grid.cells() / cells);
        let mut out = Vec::with_capacity(cells + 1);
        for (k, t) in self.points(n).into_iter().enumerate() {
            let idx = match stride {
                Some(s) if (grid.times()[k * s] - t).abs() <= tol => Some(k * s),
                _ => grid.index_of(t),
            };
            out.push(idx.ok_or(Error::PartitionNotInGrid { time: t })?);
        }
        Ok(out)
    }

    /// Levels `1..=n_max` for dyadic schemes; cell counts `1..=n_max` for uniform ones.
    pub fn levels_up_to(&self, n_max: usize) -> Vec<usize> {
        (1..=n_max).collect()
    }
}

/// A single partition `𝒫ⁿ` named as `uniform:n` or `dyadic:level`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Partition {
    pub kind: SchemeKind,
    pub n: usize,
}

impl Partition {
    pub fn scheme(&self, horizon: f64) -> PartitionScheme {
        PartitionScheme { kind: self.kind, horizon }
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "uniform" => Ok(SchemeKind::Uniform),
            "dyadic" => Ok(SchemeKind::Dyadic),
            other => Err(Error::UnknownKind(format!("partition scheme `{other}`"))),
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::Uniform => "uniform",
            SchemeKind::Dyadic => "dyadic",
        })
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, n) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("partition `{s}` must look like dyadic:8")))?;
        let n = n
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad partition size in `{s}`")))?;
        Ok(Partition { kind: kind.parse()?, n })
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_and_mesh() {
        let u = PartitionScheme::uniform(2.0);
        assert_eq!(u.points(4), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(u.mesh(4), 0.5);
        let d = PartitionScheme::dyadic(1.0);
        assert_eq!(d.points(2), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(d.mesh(3), 0.125);
    }

    #[test]
    fn indices_on_master_grid() {
        let grid = TimeGrid::dyadic(4, 1.0).unwrap();
        assert_eq!(PartitionScheme::dyadic(1.0).indices(2, &grid).unwrap(), vec![0, 4, 8, 12, 16]);
        assert_eq!(PartitionScheme::uniform(1.0).indices(2, &grid).unwrap(), vec![0, 8, 16]);
        assert!(PartitionScheme::uniform(1.0).indices(3, &grid).is_err());
        assert!(PartitionScheme::dyadic(1.0).indices(5, &grid).is_err());
        assert!(PartitionScheme::dyadic(2.0).indices(1, &grid).is_err());
    }

    #[test]
    fn indices_on_irregular_grid() {
        let grid = TimeGrid::from_times(vec![0.0, 0.1, 0.5, 0.7, 1.0]).unwrap();
        assert_eq!(PartitionScheme::uniform(1.0).indices(2, &grid).unwrap(), vec![0, 2, 4]);
    }

    #[test]
    fn parse_and_display() {
        let p: Partition = "dyadic:7".parse().unwrap();
        assert_eq!(p, Partition { kind: SchemeKind::Dyadic, n: 7 });
        assert_eq!(p.to_string(), "dyadic:7");
        assert_eq!("uniform:12".parse::<Partition>().unwrap().n, 12);
        assert!("chebyshev:3".parse::<Partition>().is_err());
        assert!("dyadic".parse::<Partition>().is_err());
    }
}
