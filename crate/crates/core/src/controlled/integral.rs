//! Rough integration of one controlled path against another.
//!
//! On the master grid the integral is the running compensated sum
//! `Σ F_u G_{u,v} + F′_u G′_u 𝕏_{u,v}` over cells, reduced left to right.

use serde::Serialize;

use super::{check_exponent, controlled_norm, matmul_acc, product, same_reference, ControlledPath};
use crate::error::{Error, Result};
use crate::grid::{p_variation, sup_distance, two_param_p_variation, PartitionScheme, SampledPath};
use crate::lift::{frobenius, norm_anchors, RoughPath};

/// Default constant used in sewing bound reports.
pub const DEFAULT_SEWING_CONSTANT: f64 = 10.0;

/// Output shape of `F G`, with `1 × 1` factors acting as scalars.
fn product_shape(f: (usize, usize), g: (usize, usize)) -> Result<(usize, usize)> {
    if f.1 == g.0 {
        Ok((f.0, g.1))
    } else if f == (1, 1) {
        Ok(g)
    } else if g == (1, 1) {
        Ok(f)
    } else {
        Err(Error::DimensionMismatch(format!("cannot multiply {}x{} by {}x{}", f.0, f.1, g.0, g.1)))
    }
}

/// `out += a b` with the scalar fallback of [`product_shape`].
fn mul_acc(a: &[f64], sa: (usize, usize), b: &[f64], sb: (usize, usize), out: &mut [f64]) {
    if sa.1 == sb.0 {
        matmul_acc(a, b, sa.0, sa.1, sb.1, out);
    } else if sa == (1, 1) {
        for (o, x) in out.iter_mut().zip(b) {
            *o += a[0] * x;
        }
    } else {
        for (o, x) in out.iter_mut().zip(a) {
            *o += x * b[0];
        }
    }
}

fn check_pair(f: &ControlledPath, g: &ControlledPath) -> Result<(usize, usize)> {
    if !same_reference(f.reference(), g.reference()) {
        return Err(Error::GridMismatch("rough integration needs a shared reference".into()));
    }
    product_shape(f.shape(), g.shape())
}

/// `(∫ F dG, F G′)` evaluated on the master grid.
pub fn rough_integral(f: &ControlledPath, g: &ControlledPath) -> Result<ControlledPath> {
    let shape = check_pair(f, g)?;
    let (sf, sg) = (f.shape(), g.shape());
    let out = shape.0 * shape.1;
    let d = f.ref_dim();
    let rp = f.reference();
    let n = f.len();
    let mut values = vec![0.0; n * out];
    let mut deriv = vec![0.0; n * out * d];
    let mut xx = vec![0.0; d * d];
    let mut incr = vec![0.0; out];
    for i in 0..n {
        for l in 0..d {
            let mut tmp = vec![0.0; out];
            mul_acc(f.value(i), sf, &g.deriv_direction(i, l), sg, &mut tmp);
            for o in 0..out {
                deriv[(i * out + o) * d + l] = tmp[o];
            }
        }
        if i + 1 == n {
            break;
        }
        incr.fill(0.0);
        let dg: Vec<f64> = g.value(i + 1).iter().zip(g.value(i)).map(|(b, a)| b - a).collect();
        mul_acc(f.value(i), sf, &dg, sg, &mut incr);
        rp.second_level_into(i, i + 1, &mut xx);
        let fdirs: Vec<Vec<f64>> = (0..d).map(|k| f.deriv_direction(i, k)).collect();
        let gdirs: Vec<Vec<f64>> = (0..d).map(|l| g.deriv_direction(i, l)).collect();
        for k in 0..d {
            for l in 0..d {
                let w = xx[k * d + l];
                if w == 0.0 {
                    continue;
                }
                let mut tmp = vec![0.0; out];
                mul_acc(&fdirs[k], sf, &gdirs[l], sg, &mut tmp);
                for o in 0..out {
                    incr[o] += tmp[o] * w;
                }
            }
        }
        for o in 0..out {
            values[(i + 1) * out + o] = values[i * out + o] + incr[o];
        }
    }
    ControlledPath::new(rp.clone(), shape.0, shape.1, values, deriv)
}

/// Local sewing defect and bound on one interval of a partition.
#[derive(Clone, Debug, Serialize)]
pub struct SewingInterval {
    pub start: usize,
    pub end: usize,
    /// `|∫_s^t F dG − F_s G_{s,t} − F′_s G′_s 𝕏_{s,t}|`.
    pub defect: f64,
    /// `C (‖F′‖_∞ (‖G′‖_p^p + ‖X‖_p^p)^{2/p} ‖X‖_p + ‖F‖_p ‖R^G‖_{p/2}
    ///   + ‖R^F‖_{p/2} ‖G′‖_∞ ‖X‖_p + ‖F′G′‖_p ‖𝕏‖_{p/2})` on `[s,t]`.
    pub bound: f64,
}

/// `F′_s G′_s` contracted to the `(k,l)` tensor, flattened per sample.
fn derivative_pairing(f: &ControlledPath, g: &ControlledPath, i: usize) -> Vec<f64> {
    let d = f.ref_dim();
    let out = product_shape(f.shape(), g.shape()).map(|s| s.0 * s.1).unwrap_or(0);
    let mut all = vec![0.0; out * d * d];
    for k in 0..d {
        let fk = f.deriv_direction(i, k);
        for l in 0..d {
            let gl = g.deriv_direction(i, l);
            mul_acc(&fk, f.shape(), &gl, g.shape(), &mut all[(k * d + l) * out..(k * d + l + 1) * out]);
        }
    }
    all
}

/// Per-interval sewing report along the partition given by master-grid `indices`.
/// Bounds are reported, never enforced.
pub fn sewing_report(
    f: &ControlledPath,
    g: &ControlledPath,
    indices: &[usize],
    p: f64,
    constant: f64,
) -> Result<Vec<SewingInterval>> {
    check_exponent(p)?;
    let z = rough_integral(f, g)?;
    let rp = f.reference();
    let grid = f.grid().clone();
    let d = f.ref_dim();
    let pairing = SampledPath::new(
        grid.clone(),
        z.dim() * d * d,
        (0..f.len()).flat_map(|i| derivative_pairing(f, g, i)).collect(),
    )?;
    let mut report = Vec::with_capacity(indices.len().saturating_sub(1));
    for w in indices.windows(2) {
        let (s, t) = (w[0], w[1]);
        let span: Vec<usize> = (s..=t).collect();
        let (one, two) = norm_anchors(span.len(), None);
        let one: Vec<usize> = one.into_iter().map(|k| span[k]).collect();
        let two: Vec<usize> = two.into_iter().map(|k| span[k]).collect();

        let mut local = z.value(t).iter().zip(z.value(s)).map(|(b, a)| b - a).collect::<Vec<_>>();
        let mut lin = vec![0.0; z.dim()];
        let dg: Vec<f64> = g.value(t).iter().zip(g.value(s)).map(|(b, a)| b - a).collect();
        mul_acc(f.value(s), f.shape(), &dg, g.shape(), &mut lin);
        let xx = rp.second_level(s, t);
        let pair = pairing.value(s);
        for o in 0..z.dim() {
            let comp: f64 = (0..d * d).map(|kl| pair[kl * z.dim() + o] * xx[kl]).sum();
            local[o] -= lin[o] + comp;
        }
        let defect = frobenius(&local);

        let sup_deriv = |cp: &ControlledPath| span.iter().map(|&i| frobenius(cp.deriv(i))).fold(0.0, f64::max);
        let x_p = p_variation(rp.base(), p, Some(&one))?;
        let xx_p2 = two_param_p_variation(|a, b| rp.second_level_norm(a, b), p / 2.0, &two)?;
        let gp_p = p_variation(g.derivatives(), p, Some(&one))?;
        let f_p = p_variation(f.values(), p, Some(&one))?;
        let rg = two_param_p_variation(|a, b| frobenius(&g.remainder(a, b)), p / 2.0, &two)?;
        let rf = two_param_p_variation(|a, b| frobenius(&f.remainder(a, b)), p / 2.0, &two)?;
        let pair_p = p_variation(&pairing, p, Some(&one))?;
        let bound = constant
            * (sup_deriv(f) * (gp_p.powf(p) + x_p.powf(p)).powf(2.0 / p) * x_p
                + f_p * rg
                + rf * sup_deriv(g) * x_p
                + pair_p * xx_p2);
        report.push(SewingInterval { start: s, end: t, defect, bound });
    }
    Ok(report)
}

/// Left-point Riemann sums along `𝒫ⁿ` and their distance to the rough integral.
#[derive(Clone, Debug)]
pub struct RiemannApproximation {
    pub path: SampledPath,
    pub sup_distance: f64,
}

/// `Σ F_{t_k} G_{t_k∧t, t_{k+1}∧t}` sampled on the master grid.
pub fn riemann_sum_integral(
    f: &ControlledPath,
    g: &ControlledPath,
    scheme: &PartitionScheme,
    n: usize,
) -> Result<RiemannApproximation> {
    let shape = check_pair(f, g)?;
    let out = shape.0 * shape.1;
    let idx = scheme.indices(n, f.grid())?;
    let mut values = vec![0.0; f.len() * out];
    let mut acc = vec![0.0; out];
    let mut k = 0;
    for i in 0..f.len() {
        while k + 1 < idx.len() && idx[k + 1] <= i {
            let dg: Vec<f64> = g.value(idx[k + 1]).iter().zip(g.value(idx[k])).map(|(b, a)| b - a).collect();
            mul_acc(f.value(idx[k]), f.shape(), &dg, g.shape(), &mut acc);
            k += 1;
        }
        let cur = &mut values[i * out..(i + 1) * out];
        cur.copy_from_slice(&acc);
        let dg: Vec<f64> = g.value(i).iter().zip(g.value(idx[k])).map(|(b, a)| b - a).collect();
        mul_acc(f.value(idx[k]), f.shape(), &dg, g.shape(), cur);
    }
    let path = SampledPath::new(f.grid().clone(), out, values)?;
    let exact = rough_integral(f, g)?;
    let sup_distance = sup_distance(&path, exact.values())?;
    Ok(RiemannApproximation { path, sup_distance })
}

/// Canonical lift `(Z, ∫ Z ⊗ dZ)` of a vector-valued controlled path.
pub fn canonical_lift(cp: &ControlledPath) -> Result<RoughPath> {
    if cp.shape().1 != 1 {
        return Err(Error::DimensionMismatch("canonical lift needs a column-vector path".into()));
    }
    let zz = rough_integral(cp, &cp.transpose())?;
    RoughPath::from_parts(cp.values().clone(), zz.values().values().to_vec())
}

/// Residual of `∫ Y d(∫ F dG) = ∫ (Y F) dG` with the norms that scale it.
#[derive(Clone, Debug, Serialize)]
pub struct AssociativityReport {
    pub residual: f64,
    pub norm_y: f64,
    pub norm_f: f64,
    pub norm_g: f64,
    /// `(1 + ‖Y‖)(1 + ‖F‖)(1 + ‖G‖)` at exponent 2.5.
    pub scale: f64,
}

pub fn associativity_residual(y: &ControlledPath, f: &ControlledPath, g: &ControlledPath) -> Result<AssociativityReport> {
    let inner = rough_integral(f, g)?;
    let left = rough_integral(y, &inner)?;
    let right = rough_integral(&product(y, f)?, g)?;
    let residual = sup_distance(left.values(), right.values())?;
    let p = 2.5;
    let norm_y = controlled_norm(y, p, None)?;
    let norm_f = controlled_norm(f, p, None)?;
    let norm_g = controlled_norm(g, p, None)?;
    Ok(AssociativityReport {
        residual,
        norm_y,
        norm_f,
        norm_g,
        scale: (1.0 + norm_y) * (1.0 + norm_f) * (1.0 + norm_g),
    })
}
