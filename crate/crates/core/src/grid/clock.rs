use super::{PartitionScheme, SampledPath, TimeGrid};
use crate::error::{Error, Result};

/// Non-decreasing deterministic consumption clock `K` with declared jump times.
#[derive(Clone, Debug)]
pub struct ConsumptionClock {
    path: SampledPath,
    jumps: Vec<usize>,
}

impl ConsumptionClock {
    /// Validates monotonicity, `K_T > K_0 >= 0` and jump indices.
    pub fn new(path: SampledPath, mut jumps: Vec<usize>) -> Result<Self> {
        if path.dim() != 1 {
            return Err(Error::DimensionMismatch("consumption clock must be scalar".into()));
        }
        let v = path.values();
        if v.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("consumption clock must be non-decreasing".into()));
        }
        if v[0] < 0.0 {
            return Err(Error::InvalidInput("consumption clock must start non-negative".into()));
        }
        if v[v.len() - 1] <= v[0] {
            return Err(Error::InvalidInput("consumption clock has no mass (K_T <= K_0)".into()));
        }
        jumps.sort_unstable();
        jumps.dedup();
        if jumps.iter().any(|&j| j == 0 || j >= path.len()) {
            return Err(Error::InvalidInput("jump indices must lie in 1..len".into()));
        }
        Ok(Self { path, jumps })
    }

    /// `K = 1_{{T}}`: all consumption at the horizon.
    pub fn terminal(grid: TimeGrid) -> Result<Self> {
        let last = grid.len() - 1;
        let path = SampledPath::from_fn(grid, 1, |_, o| o[0] = 0.0)?;
        let mut values = path.values().to_vec();
        values[last] = 1.0;
        Self::new(SampledPath::new(path.grid().clone(), 1, values)?, vec![last])
    }

    /// `K_t = t`: consumption spread evenly in time.
    pub fn linear(grid: TimeGrid) -> Result<Self> {
        Self::new(SampledPath::identity(grid), Vec::new())
    }

    pub fn path(&self) -> &SampledPath {
        &self.path
    }

    pub fn jumps(&self) -> &[usize] {
        &self.jumps
    }

    pub fn value(&self, i: usize) -> f64 {
        self.path.values()[i]
    }

    /// `K_T`.
    pub fn total(&self) -> f64 {
        self.value(self.path.len() - 1)
    }

    /// Checks that every jump time is a point of `𝒫ⁿ`.
    pub fn check_partition(&self, scheme: &PartitionScheme, n: usize) -> Result<()> {
        let idx = scheme.indices(n, self.path.grid())?;
        for &j in &self.jumps {
            if idx.binary_search(&j).is_err() {
                return Err(Error::InvalidInput(format!(
                    "consumption jump at t={} is not a point of the partition",
                    self.path.times()[j]
                )));
            }
        }
        Ok(())
    }
}
