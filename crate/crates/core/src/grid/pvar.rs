//! Exact p-variation over a finite anchor set by dynamic programming.
//!
//! For anchors `a_0 < ... < a_{M-1}` the optimal partition value satisfies
//! `best[j] = max_{i<j} best[i] + c(a_i, a_j)` with `c` the p-th power of the increment
//! norm. Adding a point never removes a non-negative term, so partitions may be taken
//! to start and end at the outer anchors. Cost is `O(M^2)` evaluations of `c`.

use super::SampledPath;
use crate::error::{Error, Result};

/// Anchor cap for one-parameter variation norms.
pub const DEFAULT_ANCHOR_CAP: usize = 4096;
/// Anchor cap for two-parameter variation norms.
pub const DEFAULT_TWO_PARAM_CAP: usize = 1024;

/// Evenly spread anchors over `0..len`, always keeping both endpoints and every index
/// in `required`. Returns all indices when `len <= cap`.
pub fn subsample_anchors(len: usize, cap: usize, required: &[usize]) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    if len <= cap.max(2) {
        return (0..len).collect();
    }
    let slots = cap.max(2).saturating_sub(required.len()).max(2);
    let mut out: Vec<usize> = (0..slots)
        .map(|k| ((k as u128 * (len as u128 - 1)) / (slots as u128 - 1)) as usize)
        .collect();
    out.extend(required.iter().copied().filter(|&i| i < len));
    out.sort_unstable();
    out.dedup();
    out
}

fn validate_exponent(r: f64) -> Result<()> {
    if !(r.is_finite() && r >= 1.0) {
        return Err(Error::InvalidInput(format!("variation exponent must be >= 1, got {r}")));
    }
    Ok(())
}

fn validate_anchors(anchors: &[usize], len: usize) -> Result<()> {
    if anchors.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("anchors must be strictly increasing".into()));
    }
    if anchors.last().is_some_and(|&a| a >= len) {
        return Err(Error::InvalidInput("anchor index outside the grid".into()));
    }
    Ok(())
}

/// Core DP over `m` anchors with a pairwise cost. Returns the optimal sum and the chosen
/// anchor positions. Ties go to the earliest split point.
fn optimal_partition(m: usize, mut cost: impl FnMut(usize, usize) -> Result<f64>) -> Result<(f64, Vec<usize>)> {
    if m <= 1 {
        return Ok((0.0, (0..m).collect()));
    }
    let mut best = vec![0.0f64; m];
    let mut prev = vec![0usize; m];
    for j in 1..m {
        let mut top = f64::NEG_INFINITY;
        let mut arg = 0;
        for i in 0..j {
            let v = best[i] + cost(i, j)?;
            if v > top {
                top = v;
                arg = i;
            }
        }
        best[j] = top;
        prev[j] = arg;
    }
    let mut chosen = vec![m - 1];
    let mut j = m - 1;
    while j > 0 {
        j = prev[j];
        chosen.push(j);
    }
    chosen.reverse();
    Ok((best[m - 1], chosen))
}

fn resolve_anchors(path: &SampledPath, anchors: Option<&[usize]>) -> Result<Vec<usize>> {
    match anchors {
        Some(a) => {
            validate_anchors(a, path.len())?;
            Ok(a.to_vec())
        }
        None => Ok(subsample_anchors(path.len(), DEFAULT_ANCHOR_CAP, &[])),
    }
}

/// `‖X‖_p` over partitions drawn from `anchors` (grid indices), or from all grid points
/// when absent and the grid is within [`DEFAULT_ANCHOR_CAP`]. Larger grids are subsampled,
/// which yields a lower bound.
pub fn p_variation(path: &SampledPath, p: f64, anchors: Option<&[usize]>) -> Result<f64> {
    p_variation_with_partition(path, p, anchors).map(|(v, _)| v)
}

/// As [`p_variation`], also returning the grid indices of an optimal partition.
pub fn p_variation_with_partition(
    path: &SampledPath,
    p: f64,
    anchors: Option<&[usize]>,
) -> Result<(f64, Vec<usize>)> {
    validate_exponent(p)?;
    let anchors = resolve_anchors(path, anchors)?;
    let (sum, chosen) = optimal_partition(anchors.len(), |i, j| {
        Ok(path.increment_norm(anchors[i], anchors[j]).powf(p))
    })?;
    Ok((sum.powf(1.0 / p), chosen.into_iter().map(|k| anchors[k]).collect()))
}

/// `‖𝕏‖_r` for a two-parameter field given through `norm(s, t) = |𝕏_{s,t}|` on grid
/// indices `s < t`, evaluated lazily over the anchors.
pub fn two_param_p_variation(
    norm: impl Fn(usize, usize) -> f64,
    r: f64,
    anchors: &[usize],
) -> Result<f64> {
    validate_exponent(r)?;
    if anchors.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("anchors must be strictly increasing".into()));
    }
    let (sum, _) = optimal_partition(anchors.len(), |i, j| {
        let v = norm(anchors[i], anchors[j]);
        if !v.is_finite() {
            return Err(Error::NonFinite { what: "two-parameter field", index: anchors[j] });
        }
        Ok(v.abs().powf(r))
    })?;
    Ok(sum.powf(1.0 / r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use proptest::prelude::*;

    fn scalar(vals: &[f64]) -> SampledPath {
        let grid = TimeGrid::from_times((0..vals.len()).map(|i| i as f64).collect()).unwrap();
        SampledPath::new(grid, 1, vals.to_vec()).unwrap()
    }

    /// Exhaustive supremum over every subset of the anchor positions.
    fn brute_force(m: usize, r: f64, cost: impl Fn(usize, usize) -> f64) -> f64 {
        let mut best = 0.0f64;
        for mask in 0u32..(1 << m) {
            let pts: Vec<usize> = (0..m).filter(|k| mask & (1 << k) != 0).collect();
            let s: f64 = pts.windows(2).map(|w| cost(w[0], w[1]).powf(r)).sum();
            best = best.max(s);
        }
        best.powf(1.0 / r)
    }

    #[test]
    fn examples() {
        assert_eq!(p_variation(&scalar(&[0.0, 1.0, 3.0]), 1.0, None).unwrap(), 3.0);
        let v = p_variation(&scalar(&[0.0, 1.0, 0.0]), 2.0, None).unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(p_variation(&scalar(&[2.0; 7]), 2.5, None).unwrap(), 0.0);
        assert_eq!(p_variation(&scalar(&[4.0]), 2.0, None).unwrap(), 0.0);
    }

    #[test]
    fn rejects_invalid() {
        assert!(p_variation(&scalar(&[0.0, 1.0]), 0.5, None).is_err());
        assert!(p_variation(&scalar(&[0.0, 1.0]), f64::NAN, None).is_err());
        assert!(p_variation(&scalar(&[0.0, 1.0]), 2.0, Some(&[1, 0])).is_err());
        assert!(two_param_p_variation(|_, _| f64::INFINITY, 1.0, &[0, 1]).is_err());
    }

    #[test]
    fn two_param_examples() {
        let grid = TimeGrid::dyadic(3, 1.0).unwrap();
        let t = grid.times().to_vec();
        let anchors: Vec<usize> = (0..t.len()).collect();
        let sq = two_param_p_variation(|s, u| (t[u] - t[s]).powi(2) / 2.0, 1.0, &anchors).unwrap();
        assert!((sq - 0.5).abs() < 1e-15);
        assert_eq!(two_param_p_variation(|_, _| 0.0, 1.0, &anchors).unwrap(), 0.0);
        let add = two_param_p_variation(|s, u| t[u] - t[s], 1.0, &anchors).unwrap();
        assert!((add - 1.0).abs() < 1e-15);
    }

    #[test]
    fn partition_ties_prefer_earlier_points() {
        // Increments 1,1 with p = 1: {0,2} and {0,1,2} both reach 2; the earliest
        // predecessor of the final point wins.
        let (_, part) = p_variation_with_partition(&scalar(&[0.0, 1.0, 2.0]), 1.0, None).unwrap();
        assert_eq!(part, vec![0, 2]);
        let (_, coarse) = p_variation_with_partition(&scalar(&[0.0, 1.0, 2.0]), 2.0, None).unwrap();
        assert_eq!(coarse, vec![0, 2]);
    }

    #[test]
    fn subsampling_keeps_required_points() {
        let a = subsample_anchors(10_000, 100, &[3, 9_998]);
        assert!(a.len() <= 100);
        assert_eq!(a[0], 0);
        assert_eq!(*a.last().unwrap(), 9_999);
        assert!(a.contains(&3) && a.contains(&9_998));
        assert_eq!(subsample_anchors(5, 100, &[]), vec![0, 1, 2, 3, 4]);
    }

    proptest! {
        #[test]
        fn dp_matches_enumeration(vals in prop::collection::vec(-3.0f64..3.0, 1..=12), pi in 0usize..4) {
            let p = [1.0, 1.5, 2.0, 2.5][pi];
            let path = scalar(&vals);
            let dp = p_variation(&path, p, None).unwrap();
            let bf = brute_force(vals.len(), p, |i, j| (vals[j] - vals[i]).abs());
            prop_assert!((dp - bf).abs() <= 1e-12 * (1.0 + bf));
        }

        #[test]
        fn two_param_dp_matches_enumeration(
            field in prop::collection::vec(-2.0f64..2.0, 64),
            m in 1usize..=8,
            pi in 0usize..4,
        ) {
            let r = [1.0, 1.5, 2.0, 2.5][pi];
            let f = |s: usize, t: usize| field[s * 8 + t].abs();
            let anchors: Vec<usize> = (0..m).collect();
            let dp = two_param_p_variation(f, r, &anchors).unwrap();
            let bf = brute_force(m, r, f);
            prop_assert!((dp - bf).abs() <= 1e-12 * (1.0 + bf));
        }

        #[test]
        fn decreasing_in_p(vals in prop::collection::vec(-3.0f64..3.0, 2..40), p1 in 1.0f64..3.0, dp in 0.0f64..2.0) {
            let path = scalar(&vals);
            let a = p_variation(&path, p1, None).unwrap();
            let b = p_variation(&path, p1 + dp, None).unwrap();
            prop_assert!(b <= a * (1.0 + 1e-12) + 1e-14);
        }

        #[test]
        fn superadditive_control(vals in prop::collection::vec(-3.0f64..3.0, 3..30), p in 1.0f64..3.0, cut in 0.0f64..1.0) {
            let path = scalar(&vals);
            let n = vals.len();
            let u = 1 + ((n - 2) as f64 * cut) as usize;
            let w = |a: usize, b: usize| {
                let idx: Vec<usize> = (a..=b).collect();
                p_variation(&path, p, Some(&idx)).unwrap().powf(p)
            };
            prop_assert!(w(0, u) + w(u, n - 1) <= w(0, n - 1) * (1.0 + 1e-12) + 1e-12);
        }
    }
}
