//! Paths sampled on a finite time grid over `[0, T]`.
//!
//! Every path in one experiment lives on a single master grid, shared through a
//! reference-counted [`TimeGrid`]. Two-parameter objects are never stored; they are
//! rebuilt from cumulative one-parameter data on demand.

mod clock;
mod partition;
mod pvar;

pub use clock::ConsumptionClock;
pub use partition::{Partition, PartitionScheme, SchemeKind};
pub use pvar::{
    p_variation, p_variation_with_partition, subsample_anchors, two_param_p_variation,
    DEFAULT_ANCHOR_CAP, DEFAULT_TWO_PARAM_CAP,
};

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Strictly increasing sample times `0 = t_0 < ... < t_N = T`, cheap to clone.
#[derive(Clone, Debug)]
pub struct TimeGrid {
    times: Arc<[f64]>,
}

impl TimeGrid {
    /// Dyadic grid with `2^level` cells on `[0, horizon]`.
    pub fn dyadic(level: u32, horizon: f64) -> Result<Self> {
        if level > 24 {
            return Err(Error::InvalidInput(format!("grid level {level} exceeds 24")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
        }
        let cells = 1usize << level;
        let times: Vec<f64> = (0..=cells)
            .map(|i| horizon * (i as f64 / cells as f64))
            .collect();
        Ok(Self { times: times.into() })
    }

    /// Grid from explicit times; a single point `[0]` is accepted.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidInput("empty time grid".into()));
        }
        for (i, t) in times.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::NonFinite { what: "time grid", index: i });
            }
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidInput(format!("grid must start at 0, got {}", times[0])));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("grid times must be strictly increasing".into()));
        }
        Ok(Self { times: times.into() })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of cells `N`.
    pub fn cells(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// The dyadic level if the grid is uniform with a power-of-two cell count.
    pub fn dyadic_level(&self) -> Option<u32> {
        let n = self.cells();
        if n == 0 || !n.is_power_of_two() {
            return None;
        }
        let level = n.trailing_zeros();
        let reference = TimeGrid::dyadic(level, self.horizon()).ok()?;
        (reference.times() == self.times()).then_some(level)
    }

    /// Index of the grid point at time `t`, if there is one within a relative tolerance.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * self.horizon().abs().max(1.0);
        let pos = self.times.partition_point(|&s| s < t - tol);
        (pos < self.times.len() && (self.times[pos] - t).abs() <= tol).then_some(pos)
    }

    /// True when both grids hold identical times.
    pub fn same_as(&self, other: &TimeGrid) -> bool {
        Arc::ptr_eq(&self.times, &other.times) || self.times == other.times
    }
}

/// A `d`-dimensional path known at the points of a [`TimeGrid`].
///
/// Values are stored row-major: sample `i` occupies `values[i*d..(i+1)*d]`.
#[derive(Clone, Debug)]
pub struct SampledPath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl SampledPath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("path dimension must be at least 1".into()));
        }
        if values.len() != grid.len() * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values for {} samples of dimension {dim}, got {}",
                grid.len() * dim,
                grid.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "path values", index: k / dim });
        }
        Ok(Self { grid, dim, values })
    }

    /// Builds a path by evaluating `f(t, out)` at every grid time.
    pub fn from_fn(grid: TimeGrid, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Result<Self> {
        let mut values = vec![0.0; grid.len() * dim.max(1)];
        for (i, &t) in grid.times().iter().enumerate() {
            f(t, &mut values[i * dim..(i + 1) * dim]);
        }
        Self::new(grid, dim, values)
    }

    /// The time path `γ_t = t`.
    pub fn identity(grid: TimeGrid) -> Self {
        let values = grid.times().to_vec();
        Self { grid, dim: 1, values }
    }

    pub fn constant(grid: TimeGrid, value: &[f64]) -> Result<Self> {
        let values = value.repeat(grid.len());
        Self::new(grid, value.len(), values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        self.grid.times()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.value(self.len() - 1)
    }

    /// Increment `X_{s,t} = X_t - X_s` written into `out`.
    pub fn increment_into(&self, s: usize, t: usize, out: &mut [f64]) {
        let (a, b) = (self.value(s), self.value(t));
        for k in 0..self.dim {
            out[k] = b[k] - a[k];
        }
    }

    pub fn increment(&self, s: usize, t: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.increment_into(s, t, &mut out);
        out
    }

    /// Euclidean norm of the increment between samples `s` and `t`.
    pub fn increment_norm(&self, s: usize, t: usize) -> f64 {
        let (a, b) = (self.value(s), self.value(t));
        a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt()
    }

    /// Scalar path holding coordinate `j`.
    pub fn component(&self, j: usize) -> Result<SampledPath> {
        if j >= self.dim {
            return Err(Error::DimensionMismatch(format!("component {j} of a {}-dim path", self.dim)));
        }
        let values = (0..self.len()).map(|i| self.values[i * self.dim + j]).collect();
        Ok(Self { grid: self.grid.clone(), dim: 1, values })
    }

    /// Concatenates coordinates of paths sharing one grid.
    pub fn stack(parts: &[&SampledPath]) -> Result<SampledPath> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("nothing to stack".into()))?;
        for p in parts {
            if !p.grid.same_as(&first.grid) {
                return Err(Error::GridMismatch("stacked paths must share a grid".into()));
            }
        }
        let dim: usize = parts.iter().map(|p| p.dim).sum();
        let mut values = Vec::with_capacity(first.len() * dim);
        for i in 0..first.len() {
            for p in parts {
                values.extend_from_slice(p.value(i));
            }
        }
        Ok(Self { grid: first.grid.clone(), dim, values })
    }

    /// Pointwise map of the values, keeping the grid.
    pub fn map(&self, out_dim: usize, mut f: impl FnMut(f64, &[f64], &mut [f64])) -> Result<SampledPath> {
        let mut values = vec![0.0; self.len() * out_dim];
        for i in 0..self.len() {
            f(self.times()[i], self.value(i), &mut values[i * out_dim..(i + 1) * out_dim]);
        }
        Self::new(self.grid.clone(), out_dim, values)
    }

    /// Restriction to the given grid indices.
    pub fn restrict(&self, indices: &[usize]) -> Result<SampledPath> {
        let times = indices.iter().map(|&i| self.times()[i]).collect();
        let grid = TimeGrid::from_times(times)?;
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.value(i));
        }
        Self::new(grid, self.dim, values)
    }

    /// Writes `t,x1,...,xd` CSV with round-trip precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|k| format!("x{k}")).collect();
        writeln!(w, "t,{}", header.join(","))?;
        for i in 0..self.len() {
            write!(w, "{}", self.times()[i])?;
            for v in self.value(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads the format produced by [`SampledPath::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<SampledPath> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty CSV".into()))??;
        let dim = header.split(',').count().saturating_sub(1);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::InvalidInput(format!("row {row} has {} fields", fields.len())));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("row {row}: {e}")))
            };
            times.push(parse(fields[0])?);
            for f in &fields[1..] {
                values.push(parse(f)?);
            }
        }
        Self::new(TimeGrid::from_times(times)?, dim, values)
    }
}

/// Maximum Euclidean distance between two paths on a common grid.
pub fn sup_distance(a: &SampledPath, b: &SampledPath) -> Result<f64> {
    if !a.grid.same_as(&b.grid) {
        return Err(Error::GridMismatch("sup_distance needs identical grids".into()));
    }
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch(format!("{} vs {}", a.dim, b.dim)));
    }
    let mut sup = 0.0f64;
    for i in 0..a.len() {
        let d: f64 = a
            .value(i)
            .iter()
            .zip(b.value(i))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        sup = sup.max(d);
    }
    Ok(sup)
}

/// Expands values known at the partition indices into a staircase on the master grid.
///
/// Sample `i` receives the value of the last partition point `<= i`.
pub(crate) fn staircase(grid: &TimeGrid, dim: usize, indices: &[usize], at_points: &[f64]) -> Result<SampledPath> {
    let mut values = vec![0.0; grid.len() * dim];
    for (k, &start) in indices.iter().enumerate() {
        let end = indices.get(k + 1).copied().unwrap_or(grid.len());
        let v = &at_points[k * dim..(k + 1) * dim];
        for i in start..end {
            values[i * dim..(i + 1) * dim].copy_from_slice(v);
        }
    }
    SampledPath::new(grid.clone(), dim, values)
}

/// Piecewise-constant approximation `X^n` along the partition `𝒫ⁿ`, sampled on the master grid.
pub fn piecewise_constant(path: &SampledPath, scheme: &PartitionScheme, n: usize) -> Result<SampledPath> {
    let idx = scheme.indices(n, path.grid())?;
    let mut at_points = Vec::with_capacity(idx.len() * path.dim());
    for &i in &idx {
        at_points.extend_from_slice(path.value(i));
    }
    staircase(path.grid(), path.dim(), &idx, &at_points)
}

/// The staircase time path `γⁿ` on the master grid.
pub fn time_discretization(scheme: &PartitionScheme, n: usize, grid: &TimeGrid) -> Result<SampledPath> {
    piecewise_constant(&SampledPath::identity(grid.clone()), scheme, n)
}
