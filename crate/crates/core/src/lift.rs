//! Itô-type rough path lifts on the master grid.
//!
//! Only the cumulative left-point sum `I_t = Σ X_u ⊗ X_{u,v}` is stored. The second level
//! is rebuilt as `𝕏_{s,t} = I_t − I_s − X_s ⊗ X_{s,t}`, which satisfies Chen's relation
//! identically and vanishes on every single master cell.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{
    p_variation, subsample_anchors, two_param_p_variation, PartitionScheme, SampledPath, TimeGrid,
    DEFAULT_TWO_PARAM_CAP,
};

pub(crate) fn frobenius(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A path `X` together with its cumulative iterated integral `I`.
#[derive(Clone, Debug)]
pub struct RoughPath {
    base: SampledPath,
    /// Row-major `d×d` block per sample; entry `(i, j)` approximates `∫ X^i dX^j`.
    iterated: Vec<f64>,
}

impl RoughPath {
    /// Assembles a lift from a base path and a cumulative second level with `I_0 = 0`.
    pub fn from_parts(base: SampledPath, iterated: Vec<f64>) -> Result<Self> {
        let d = base.dim();
        if iterated.len() != base.len() * d * d {
            return Err(Error::DimensionMismatch(format!(
                "iterated integral needs {} entries, got {}",
                base.len() * d * d,
                iterated.len()
            )));
        }
        if let Some(k) = iterated.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "iterated integral", index: k / (d * d) });
        }
        if iterated[..d * d].iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidInput("iterated integral must vanish at time 0".into()));
        }
        Ok(Self { base, iterated })
    }

    pub fn base(&self) -> &SampledPath {
        &self.base
    }

    pub fn grid(&self) -> &TimeGrid {
        self.base.grid()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    /// Cumulative `I_t` at sample `i`.
    pub fn iterated_at(&self, i: usize) -> &[f64] {
        let dd = self.dim() * self.dim();
        &self.iterated[i * dd..(i + 1) * dd]
    }

    /// `𝕏_{s,t}` written row-major into `out` (length `d²`).
    pub fn second_level_into(&self, s: usize, t: usize, out: &mut [f64]) {
        let d = self.dim();
        let (is, it) = (self.iterated_at(s), self.iterated_at(t));
        let xs = self.base.value(s);
        let xt = self.base.value(t);
        for a in 0..d {
            for b in 0..d {
                out[a * d + b] = it[a * d + b] - is[a * d + b] - xs[a] * (xt[b] - xs[b]);
            }
        }
    }

    pub fn second_level(&self, s: usize, t: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim() * self.dim()];
        self.second_level_into(s, t, &mut out);
        out
    }

    /// Frobenius norm of `𝕏_{s,t}`.
    pub fn second_level_norm(&self, s: usize, t: usize) -> f64 {
        frobenius(&self.second_level(s, t))
    }

    /// Largest entry of `𝕏_{s,t} − 𝕏_{s,u} − 𝕏_{u,t} − X_{s,u} ⊗ X_{u,t}`.
    pub fn chen_residual(&self, s: usize, u: usize, t: usize) -> f64 {
        let d = self.dim();
        let (st, su, ut) = (self.second_level(s, t), self.second_level(s, u), self.second_level(u, t));
        let (xsu, xut) = (self.base.increment(s, u), self.base.increment(u, t));
        let mut worst = 0.0f64;
        for a in 0..d {
            for b in 0..d {
                let k = a * d + b;
                worst = worst.max((st[k] - su[k] - ut[k] - xsu[a] * xut[b]).abs());
            }
        }
        worst
    }

    /// Writes `t, x1..xd, I11, I12, ..., Idd` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|k| format!("x{k}")));
        for a in 1..=d {
            for b in 1..=d {
                header.push(format!("I{a}{b}"));
            }
        }
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            write!(w, "{}", self.base.times()[i])?;
            for v in self.base.value(i).iter().chain(self.iterated_at(i)) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Left-point (Itô) lift of a sampled path.
pub fn rie_lift(path: &SampledPath) -> RoughPath {
    let d = path.dim();
    let mut iterated = vec![0.0; path.len() * d * d];
    for i in 1..path.len() {
        let (prev, cur) = iterated.split_at_mut(i * d * d);
        let prev = &prev[(i - 1) * d * d..];
        let x = path.value(i - 1);
        let dx = path.increment(i - 1, i);
        for a in 0..d {
            for b in 0..d {
                cur[a * d + b] = prev[a * d + b] + x[a] * dx[b];
            }
        }
    }
    RoughPath { base: path.clone(), iterated }
}

/// Bracket `[𝐗]_t = X_{0,t} ⊗ X_{0,t} − 2 Sym(𝕏_{0,t})` as a `d²`-dimensional path.
pub fn bracket(rp: &RoughPath) -> SampledPath {
    let d = rp.dim();
    let mut values = vec![0.0; rp.len() * d * d];
    let mut xx = vec![0.0; d * d];
    for i in 0..rp.len() {
        rp.second_level_into(0, i, &mut xx);
        let inc = rp.base.increment(0, i);
        for a in 0..d {
            for b in 0..d {
                values[i * d * d + a * d + b] = inc[a] * inc[b] - (xx[a * d + b] + xx[b * d + a]);
            }
        }
    }
    SampledPath::new(rp.grid().clone(), d * d, values).expect("bracket of a finite lift is finite")
}

/// A rough path over `ℝ^{1+d}` whose first coordinate is a clock (usually `γ_t = t`).
#[derive(Clone, Debug)]
pub struct TimeAugmentedRoughPath {
    rough: RoughPath,
}

impl TimeAugmentedRoughPath {
    /// Augments `rp` by the scalar `clock`; all blocks involving the clock are left-point
    /// sums, the noise block is taken from `rp`.
    pub fn with_clock(clock: &SampledPath, rp: &RoughPath) -> Result<Self> {
        if clock.dim() != 1 {
            return Err(Error::DimensionMismatch("clock must be scalar".into()));
        }
        if !clock.grid().same_as(rp.grid()) {
            return Err(Error::GridMismatch("clock and rough path grids differ".into()));
        }
        let base = SampledPath::stack(&[clock, rp.base()])?;
        let d = rp.dim();
        let e = d + 1;
        let mut iterated = vec![0.0; base.len() * e * e];
        for i in 1..base.len() {
            let x = base.value(i - 1);
            let dx = base.increment(i - 1, i);
            let noise = rp.iterated_at(i);
            for a in 0..e {
                for b in 0..e {
                    let k = i * e * e + a * e + b;
                    iterated[k] = if a > 0 && b > 0 {
                        noise[(a - 1) * d + (b - 1)]
                    } else {
                        iterated[k - e * e] + x[a] * dx[b]
                    };
                }
            }
        }
        Ok(Self { rough: RoughPath { base, iterated } })
    }

    /// The augmentation with no noise coordinates, i.e. the lift of `γ` alone.
    pub fn pure_time(grid: TimeGrid) -> Self {
        Self { rough: rie_lift(&SampledPath::identity(grid)) }
    }

    pub fn rough(&self) -> &RoughPath {
        &self.rough
    }

    pub fn into_rough(self) -> RoughPath {
        self.rough
    }

    /// Number of noise coordinates `d`.
    pub fn noise_dim(&self) -> usize {
        self.rough.dim() - 1
    }

    pub fn grid(&self) -> &TimeGrid {
        self.rough.grid()
    }

    /// Clock value at sample `i`.
    pub fn clock(&self, i: usize) -> f64 {
        self.rough.base.value(i)[0]
    }
}

/// `(·, 𝐗)` with the clock `γ_t = t`.
pub fn time_augment(rp: &RoughPath) -> TimeAugmentedRoughPath {
    TimeAugmentedRoughPath::with_clock(&SampledPath::identity(rp.grid().clone()), rp)
        .expect("identity clock shares the grid")
}

/// One-parameter and two-parameter anchor sets for norms.
pub(crate) fn norm_anchors(len: usize, anchors: Option<&[usize]>) -> (Vec<usize>, Vec<usize>) {
    let one = match anchors {
        Some(a) => a.to_vec(),
        None => subsample_anchors(len, crate::grid::DEFAULT_ANCHOR_CAP, &[]),
    };
    let two = if one.len() > DEFAULT_TWO_PARAM_CAP {
        subsample_anchors(one.len(), DEFAULT_TWO_PARAM_CAP, &[])
            .into_iter()
            .map(|k| one[k])
            .collect()
    } else {
        one.clone()
    };
    (one, two)
}

fn check_rough_exponent(p: f64) -> Result<()> {
    if !(2.0..3.0).contains(&p) {
        return Err(Error::InvalidInput(format!("rough path exponent must lie in [2,3), got {p}")));
    }
    Ok(())
}

/// `‖𝐗‖_p = ‖X‖_p + ‖𝕏‖_{p/2}` on the given anchors (two-parameter part capped at 1024).
pub fn rough_norm(rp: &RoughPath, p: f64, anchors: Option<&[usize]>) -> Result<f64> {
    check_rough_exponent(p)?;
    let (one, two) = norm_anchors(rp.len(), anchors);
    let first = p_variation(rp.base(), p, Some(&one))?;
    let second = two_param_p_variation(|s, t| rp.second_level_norm(s, t), p / 2.0, &two)?;
    Ok(first + second)
}

/// `‖X − X̃‖_p + ‖𝕏 − 𝕏̃‖_{p/2}` on the given anchors.
pub fn rough_distance(rp: &RoughPath, rq: &RoughPath, p: f64, anchors: Option<&[usize]>) -> Result<f64> {
    check_rough_exponent(p)?;
    if !rp.grid().same_as(rq.grid()) {
        return Err(Error::GridMismatch("rough_distance needs a common grid".into()));
    }
    if rp.dim() != rq.dim() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", rp.dim(), rq.dim())));
    }
    let diff: Vec<f64> = rp
        .base()
        .values()
        .iter()
        .zip(rq.base().values())
        .map(|(a, b)| a - b)
        .collect();
    let diff = SampledPath::new(rp.grid().clone(), rp.dim(), diff)?;
    let (one, two) = norm_anchors(rp.len(), anchors);
    let first = p_variation(&diff, p, Some(&one))?;
    let second = two_param_p_variation(
        |s, t| {
            let a = rp.second_level(s, t);
            let b = rq.second_level(s, t);
            frobenius(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>())
        },
        p / 2.0,
        &two,
    )?;
    Ok(first + second)
}

/// Per-level statistics of the Riemann-sum lift diagnostic.
#[derive(Clone, Debug, Serialize)]
pub struct RieLevel {
    pub level: usize,
    /// `sup_t |X^n_t − X_t|`.
    pub part1_sup_err: f64,
    /// `sup_t |Σ X_{t_k} ⊗ X_{t_k∧t, t_{k+1}∧t} − ∫_0^t X ⊗ dX|`.
    pub part2_sup_err: f64,
    /// `sup_{k<l} |𝕏ⁿ_{t_k,t_l}|^{p/2} / (c (t_l − t_k))`.
    pub part3_sup_stat: f64,
}

/// Riemann-sum lift diagnostic across partition levels.
#[derive(Clone, Debug, Serialize)]
pub struct RieReport {
    pub p: f64,
    pub control_constant: f64,
    pub levels: Vec<RieLevel>,
    /// Running maximum of `part3_sup_stat`, non-decreasing in the level.
    pub part3_running_max: Vec<f64>,
    /// Raised when the running maximum at the last level exceeds four times its value at
    /// the middle level, a sign that no single control dominates all levels.
    pub unbounded_suspect: bool,
}

/// Largest number of partition points used for the pairwise defect statistic.
const DEFECT_POINT_CAP: usize = 2049;

/// Runs the lift diagnostic for levels `scheme.levels_up_to(n_max)` with control
/// `ŵ(s,t) = (t − s)/T`.
pub fn rie_diagnostic(path: &SampledPath, scheme: &PartitionScheme, n_max: usize, p: f64) -> Result<RieReport> {
    check_rough_exponent(p)?;
    let lift = rie_lift(path);
    let d = path.dim();
    let dd = d * d;
    let horizon = path.grid().horizon();
    let c = 1.0 / horizon;
    let mut levels = Vec::new();
    for n in scheme.levels_up_to(n_max) {
        let idx = match scheme.indices(n, path.grid()) {
            Ok(idx) => idx,
            Err(Error::PartitionNotInGrid { .. }) if scheme.kind == crate::grid::SchemeKind::Uniform => continue,
            Err(e) => return Err(e),
        };
        // Riemann sums A_k at the partition points.
        let mut sums = vec![0.0; idx.len() * dd];
        for k in 1..idx.len() {
            let x = path.value(idx[k - 1]);
            let dx = path.increment(idx[k - 1], idx[k]);
            for a in 0..d {
                for b in 0..d {
                    sums[k * dd + a * d + b] = sums[(k - 1) * dd + a * d + b] + x[a] * dx[b];
                }
            }
        }
        let mut part1 = 0.0f64;
        let mut part2 = 0.0f64;
        let mut buf = vec![0.0; dd];
        let mut k = 0;
        for i in 0..path.len() {
            while k + 1 < idx.len() && idx[k + 1] <= i {
                k += 1;
            }
            let x = path.value(idx[k]);
            let dx = path.increment(idx[k], i);
            let full = lift.iterated_at(i);
            for a in 0..d {
                for b in 0..d {
                    buf[a * d + b] = sums[k * dd + a * d + b] + x[a] * dx[b] - full[a * d + b];
                }
            }
            part2 = part2.max(frobenius(&buf));
            part1 = part1.max(frobenius(&dx));
        }
        let pts = subsample_anchors(idx.len(), DEFECT_POINT_CAP, &[]);
        let mut part3 = 0.0f64;
        for (a_pos, &ka) in pts.iter().enumerate() {
            for &kb in &pts[a_pos + 1..] {
                let x = path.value(idx[ka]);
                let dx = path.increment(idx[ka], idx[kb]);
                for a in 0..d {
                    for b in 0..d {
                        buf[a * d + b] = sums[kb * dd + a * d + b] - sums[ka * dd + a * d + b] - x[a] * dx[b];
                    }
                }
                let elapsed = path.times()[idx[kb]] - path.times()[idx[ka]];
                part3 = part3.max(frobenius(&buf).powf(p / 2.0) / (c * elapsed));
            }
        }
        levels.push(RieLevel { level: n, part1_sup_err: part1, part2_sup_err: part2, part3_sup_stat: part3 });
    }
    let mut running = Vec::with_capacity(levels.len());
    let mut top = 0.0f64;
    for l in &levels {
        top = top.max(l.part3_sup_stat);
        running.push(top);
    }
    let unbounded_suspect = match running.len() {
        0 | 1 => false,
        m => running[m - 1] > 4.0 * running[(m - 1) / 2],
    };
    Ok(RieReport { p, control_constant: c, levels, part3_running_max: running, unbounded_suspect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use proptest::prelude::*;

    fn gamma(level: u32) -> SampledPath {
        SampledPath::identity(TimeGrid::dyadic(level, 1.0).unwrap())
    }

    fn walk(steps: &[f64]) -> SampledPath {
        let grid = TimeGrid::from_times((0..=steps.len()).map(|i| i as f64 / steps.len() as f64).collect()).unwrap();
        let mut v = vec![0.0];
        for s in steps {
            v.push(v.last().unwrap() + s);
        }
        SampledPath::new(grid, 1, v).unwrap()
    }

    #[test]
    fn gamma_on_three_points() {
        let rp = rie_lift(&gamma(1));
        let i: Vec<f64> = (0..3).map(|k| rp.iterated_at(k)[0]).collect();
        assert_eq!(i, vec![0.0, 0.0, 0.25]);
        assert_eq!(rp.second_level(0, 2), vec![0.25]);
        assert_eq!(bracket(&rp).last(), &[0.5]);
    }

    #[test]
    fn gamma_second_level_limit() {
        let rp = rie_lift(&gamma(10));
        let n = rp.len() - 1;
        for (s, t) in [(0, n), (100, 900), (3, 513)] {
            let ts = rp.base().times();
            let exact = (ts[t] - ts[s]).powi(2) / 2.0;
            assert!((rp.second_level(s, t)[0] - exact).abs() <= 2.0 / n as f64);
        }
    }

    #[test]
    fn constant_path_has_trivial_lift() {
        let c = SampledPath::constant(TimeGrid::dyadic(4, 1.0).unwrap(), &[1.0, -2.0]).unwrap();
        let rp = rie_lift(&c);
        assert!(bracket(&rp).values().iter().all(|&v| v == 0.0));
        assert_eq!(rough_norm(&rp, 2.5, None).unwrap(), 0.0);
    }

    #[test]
    fn cell_second_level_vanishes() {
        let rp = rie_lift(&walk(&[0.3, -1.2, 0.7, 2.0, -0.1]));
        for i in 0..rp.len() - 1 {
            assert!(rp.second_level(i, i + 1)[0].abs() <= 1e-15);
            assert_eq!(rp.second_level(i, i), vec![0.0]);
        }
    }

    #[test]
    fn time_augmentation_blocks() {
        let grid = TimeGrid::dyadic(10, 1.0).unwrap();
        let w = SampledPath::from_fn(grid.clone(), 1, |t, o| o[0] = (5.0 * t).sin()).unwrap();
        let aug = time_augment(&rie_lift(&w));
        let rp = aug.rough();
        let n = rp.len() - 1;
        assert!((rp.second_level(0, n)[0] - 0.5).abs() <= 1.0 / n as f64);
        for i in 0..n {
            assert_eq!(rp.base().increment(i, i + 1)[0], grid.times()[i + 1] - grid.times()[i]);
        }
        // Integration by parts: 𝕏^{01} + 𝕏^{10} + Σ Δγ ΔW = γ_{0,T} W_{0,T}.
        let xx = rp.second_level(0, n);
        let cells: f64 = (0..n)
            .map(|i| rp.base().increment(i, i + 1)[0] * rp.base().increment(i, i + 1)[1])
            .sum();
        let inc = rp.base().increment(0, n);
        assert!((xx[1] + xx[2] + cells - inc[0] * inc[1]).abs() < 1e-13);
        assert_eq!(aug.noise_dim(), 1);
    }

    #[test]
    fn pure_time_matches_lift_of_gamma() {
        let grid = TimeGrid::dyadic(5, 2.0).unwrap();
        let a = TimeAugmentedRoughPath::pure_time(grid.clone());
        let b = rie_lift(&SampledPath::identity(grid));
        assert_eq!(a.rough().iterated, b.iterated);
        assert_eq!(a.noise_dim(), 0);
    }

    #[test]
    fn gamma_rough_norm() {
        let rp = rie_lift(&gamma(9));
        let v = rough_norm(&rp, 2.0, None).unwrap();
        assert!((v - 1.5).abs() < 2e-3, "{v}");
        assert_eq!(rough_distance(&rp, &rp, 2.5, None).unwrap(), 0.0);
        assert!(rough_norm(&rp, 3.0, None).is_err());
    }

    #[test]
    fn diagnostic_for_smooth_path() {
        let path = gamma(10);
        let report = rie_diagnostic(&path, &PartitionScheme::uniform(1.0), 16, 2.5).unwrap();
        assert!(!report.levels.is_empty());
        for l in &report.levels {
            assert!(l.part2_sup_err <= 1.0 / l.level as f64 + 1e-15);
        }
        assert!(report.part3_running_max.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn diagnostic_for_partition_constant_path() {
        let grid = TimeGrid::dyadic(6, 1.0).unwrap();
        let path = SampledPath::from_fn(grid, 1, |t, o| o[0] = if t < 0.5 { 0.0 } else if t < 1.0 { 1.0 } else { 3.0 }).unwrap();
        let report = rie_diagnostic(&path, &PartitionScheme::dyadic(1.0), 4, 2.5).unwrap();
        for l in &report.levels {
            assert_eq!(l.part1_sup_err, 0.0);
            assert_eq!(l.part2_sup_err, 0.0);
        }
    }

    proptest! {
        #[test]
        fn chen_identity(steps in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 3..40), picks in prop::collection::vec(0.0f64..1.0, 3)) {
            let n = steps.len();
            let times: Vec<f64> = (0..=n).map(|i| i as f64).collect();
            let mut v = vec![0.0, 0.0];
            for s in &steps {
                let l = v.len();
                v.push(v[l - 2] + s[0]);
                v.push(v[l - 1] + s[1]);
            }
            let path = SampledPath::new(TimeGrid::from_times(times).unwrap(), 2, v).unwrap();
            let rp = rie_lift(&path);
            let mut idx: Vec<usize> = picks.iter().map(|u| (u * n as f64) as usize).collect();
            idx.sort_unstable();
            prop_assert!(rp.chen_residual(idx[0], idx[1], idx[2]) <= 1e-12);
        }

        #[test]
        fn polarization_identity(steps in prop::collection::vec(-1.0f64..1.0, 2..60), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let path = walk(&steps);
            let rp = rie_lift(&path);
            let n = steps.len();
            let (s, t) = { let (x, y) = ((a * n as f64) as usize, (b * n as f64) as usize); (x.min(y), x.max(y)) };
            let cells: f64 = (s..t).map(|i| steps[i] * steps[i]).sum();
            let inc = path.increment(s, t)[0];
            prop_assert!((2.0 * rp.second_level(s, t)[0] + cells - inc * inc).abs() <= 1e-12);
        }

        #[test]
        fn distance_triangle(x in prop::collection::vec(-1.0f64..1.0, 9), y in prop::collection::vec(-1.0f64..1.0, 9), z in prop::collection::vec(-1.0f64..1.0, 9)) {
            let (px, py, pz) = (rie_lift(&walk(&x)), rie_lift(&walk(&y)), rie_lift(&walk(&z)));
            let dxz = rough_distance(&px, &pz, 2.5, None).unwrap();
            let dxy = rough_distance(&px, &py, 2.5, None).unwrap();
            let dyz = rough_distance(&py, &pz, 2.5, None).unwrap();
            prop_assert!(dxz <= dxy + dyz + 1e-12);
        }
    }
}
