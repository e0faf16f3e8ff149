//! Controlled paths `(Y, Y′)` relative to a reference rough path.
//!
//! A controlled path takes values in `rows × cols` matrices (vectors are `m × 1`). The
//! Gubinelli derivative is stored per sample as a `(rows·cols) × d` block, where `d` is the
//! reference dimension: entry `c·d + k` is the sensitivity of component `c` to `X^k`.
//! The remainder `R_{s,t} = Y_{s,t} − Y′_s X_{s,t}` is computed on demand.

mod integral;
mod smooth;

pub use integral::{
    associativity_residual, canonical_lift, riemann_sum_integral, rough_integral, sewing_report,
    AssociativityReport, RiemannApproximation, SewingInterval, DEFAULT_SEWING_CONSTANT,
};
pub use smooth::{compose_smooth, Exp, FnMap, Identity, MatrixInverse, Reciprocal, SmoothMap, Square};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{p_variation, two_param_p_variation, SampledPath, TimeGrid};
use crate::lift::{frobenius, norm_anchors, RoughPath};

/// A path `Y` with Gubinelli derivative `Y′` relative to `reference`.
#[derive(Clone, Debug)]
pub struct ControlledPath {
    reference: Arc<RoughPath>,
    rows: usize,
    cols: usize,
    values: SampledPath,
    deriv: SampledPath,
}

pub(crate) fn same_reference(a: &Arc<RoughPath>, b: &Arc<RoughPath>) -> bool {
    Arc::ptr_eq(a, b)
        || (a.grid().same_as(b.grid())
            && a.dim() == b.dim()
            && a.base().values() == b.base().values()
            && (0..a.len()).all(|i| a.iterated_at(i) == b.iterated_at(i)))
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if !(2.0..3.0).contains(&p) {
        return Err(Error::InvalidInput(format!("controlled path exponent must lie in [2,3), got {p}")));
    }
    Ok(())
}

/// `out += a · b` for row-major `a (n×k)` and `b (k×m)`.
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        for l in 0..k {
            let x = a[i * k + l];
            if x == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i * m + j] += x * b[l * m + j];
            }
        }
    }
}

impl ControlledPath {
    /// Assembles a controlled path; `values` has `rows·cols` coordinates and `deriv` has
    /// `rows·cols·d` coordinates.
    pub fn from_parts(
        reference: Arc<RoughPath>,
        rows: usize,
        cols: usize,
        values: SampledPath,
        deriv: SampledPath,
    ) -> Result<Self> {
        let dim = rows * cols;
        if dim == 0 {
            return Err(Error::InvalidInput("controlled path shape must be non-empty".into()));
        }
        if !values.grid().same_as(reference.grid()) || !deriv.grid().same_as(reference.grid()) {
            return Err(Error::GridMismatch("controlled path must live on the reference grid".into()));
        }
        if values.dim() != dim || deriv.dim() != dim * reference.dim() {
            return Err(Error::DimensionMismatch(format!(
                "shape {rows}x{cols} over a {}-dim reference needs {dim} values and {} derivatives, got {} and {}",
                reference.dim(),
                dim * reference.dim(),
                values.dim(),
                deriv.dim()
            )));
        }
        Ok(Self { reference, rows, cols, values, deriv })
    }

    /// As [`ControlledPath::from_parts`] from flat row-major buffers.
    pub fn new(reference: Arc<RoughPath>, rows: usize, cols: usize, values: Vec<f64>, deriv: Vec<f64>) -> Result<Self> {
        let grid = reference.grid().clone();
        let d = reference.dim();
        let values = SampledPath::new(grid.clone(), rows * cols, values)?;
        let deriv = SampledPath::new(grid, rows * cols * d, deriv)?;
        Self::from_parts(reference, rows, cols, values, deriv)
    }

    /// `(X, I)`: the reference path as a `d × 1` controlled path.
    pub fn reference_path(reference: Arc<RoughPath>) -> Self {
        let d = reference.dim();
        let mut eye = vec![0.0; d * d];
        for k in 0..d {
            eye[k * d + k] = 1.0;
        }
        let deriv = eye.repeat(reference.len());
        let values = reference.base().clone();
        let deriv = SampledPath::new(reference.grid().clone(), d * d, deriv).expect("identity is finite");
        Self { reference, rows: d, cols: 1, values, deriv }
    }

    /// Coordinate `X^k` with derivative `e_k`.
    pub fn coordinate(reference: Arc<RoughPath>, k: usize) -> Result<Self> {
        let d = reference.dim();
        if k >= d {
            return Err(Error::DimensionMismatch(format!("coordinate {k} of a {d}-dim reference")));
        }
        let values = reference.base().component(k)?;
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        let deriv = SampledPath::new(reference.grid().clone(), d, e.repeat(reference.len()))?;
        Self::from_parts(reference, 1, 1, values, deriv)
    }

    pub fn constant(reference: Arc<RoughPath>, rows: usize, cols: usize, value: &[f64]) -> Result<Self> {
        if value.len() != rows * cols {
            return Err(Error::DimensionMismatch("constant value does not match shape".into()));
        }
        let values = SampledPath::constant(reference.grid().clone(), value)?;
        let deriv = SampledPath::constant(reference.grid().clone(), &vec![0.0; rows * cols * reference.dim()])?;
        Self::from_parts(reference, rows, cols, values, deriv)
    }

    /// A path carried with zero Gubinelli derivative (finite-variation data such as `K`).
    pub fn with_zero_derivative(reference: Arc<RoughPath>, rows: usize, cols: usize, path: SampledPath) -> Result<Self> {
        let deriv = SampledPath::constant(reference.grid().clone(), &vec![0.0; rows * cols * reference.dim()])?;
        Self::from_parts(reference, rows, cols, path, deriv)
    }

    pub fn reference(&self) -> &Arc<RoughPath> {
        &self.reference
    }

    pub fn grid(&self) -> &TimeGrid {
        self.values.grid()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Number of value coordinates `rows · cols`.
    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    /// Reference dimension `d`.
    pub fn ref_dim(&self) -> usize {
        self.reference.dim()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &SampledPath {
        &self.values
    }

    pub fn derivatives(&self) -> &SampledPath {
        &self.deriv
    }

    pub fn value(&self, i: usize) -> &[f64] {
        self.values.value(i)
    }

    pub fn deriv(&self, i: usize) -> &[f64] {
        self.deriv.value(i)
    }

    /// The derivative in direction `k` at sample `i` as a `rows × cols` matrix.
    pub fn deriv_direction(&self, i: usize, k: usize) -> Vec<f64> {
        let d = self.ref_dim();
        self.deriv(i).iter().skip(k).step_by(d).copied().collect()
    }

    /// `R_{s,t} = Y_{s,t} − Y′_s X_{s,t}` written into `out`.
    pub fn remainder_into(&self, s: usize, t: usize, out: &mut [f64]) {
        let d = self.ref_dim();
        let dx = self.reference.base().increment(s, t);
        let (ys, yt, yp) = (self.value(s), self.value(t), self.deriv(s));
        for c in 0..self.dim() {
            let lin: f64 = (0..d).map(|k| yp[c * d + k] * dx[k]).sum();
            out[c] = yt[c] - ys[c] - lin;
        }
    }

    pub fn remainder(&self, s: usize, t: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.remainder_into(s, t, &mut out);
        out
    }

    /// Largest Euclidean norm of the values.
    pub fn sup_norm(&self) -> f64 {
        (0..self.len()).map(|i| frobenius(self.value(i))).fold(0.0, f64::max)
    }

    fn rebuild(&self, rows: usize, cols: usize, values: Vec<f64>, deriv: Vec<f64>) -> Result<Self> {
        Self::new(self.reference.clone(), rows, cols, values, deriv)
    }

    /// Matrix transpose with derivatives transposed direction by direction.
    pub fn transpose(&self) -> Self {
        let (r, c, d) = (self.rows, self.cols, self.ref_dim());
        let mut values = vec![0.0; self.len() * r * c];
        let mut deriv = vec![0.0; self.len() * r * c * d];
        for i in 0..self.len() {
            let (v, dv) = (self.value(i), self.deriv(i));
            for a in 0..r {
                for b in 0..c {
                    values[i * r * c + b * r + a] = v[a * c + b];
                    for k in 0..d {
                        deriv[(i * r * c + b * r + a) * d + k] = dv[(a * c + b) * d + k];
                    }
                }
            }
        }
        self.rebuild(c, r, values, deriv).expect("transpose preserves finiteness")
    }

    /// Entry `(r, c)` as a scalar controlled path.
    pub fn entry(&self, r: usize, c: usize) -> Result<Self> {
        if r >= self.rows || c >= self.cols {
            return Err(Error::DimensionMismatch(format!("entry ({r},{c}) of a {}x{} path", self.rows, self.cols)));
        }
        let d = self.ref_dim();
        let idx = r * self.cols + c;
        let values = (0..self.len()).map(|i| self.value(i)[idx]).collect();
        let deriv = (0..self.len())
            .flat_map(|i| self.deriv(i)[idx * d..(idx + 1) * d].to_vec())
            .collect();
        self.rebuild(1, 1, values, deriv)
    }

    /// The `rows × cols` block starting at `(r0, c0)`.
    pub fn submatrix(&self, r0: usize, rows: usize, c0: usize, cols: usize) -> Result<Self> {
        if r0 + rows > self.rows || c0 + cols > self.cols || rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "block {rows}x{cols} at ({r0},{c0}) of a {}x{} path",
                self.rows, self.cols
            )));
        }
        let d = self.ref_dim();
        let mut values = Vec::with_capacity(self.len() * rows * cols);
        let mut deriv = Vec::with_capacity(self.len() * rows * cols * d);
        for i in 0..self.len() {
            let (v, dv) = (self.value(i), self.deriv(i));
            for a in r0..r0 + rows {
                for b in c0..c0 + cols {
                    let idx = a * self.cols + b;
                    values.push(v[idx]);
                    deriv.extend_from_slice(&dv[idx * d..(idx + 1) * d]);
                }
            }
        }
        self.rebuild(rows, cols, values, deriv)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if !same_reference(&self.reference, &other.reference) {
            return Err(Error::GridMismatch("controlled paths refer to different rough paths".into()));
        }
        Ok(())
    }

    /// Stacks paths with equal column counts vertically.
    pub fn stack_rows(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::InvalidInput("nothing to stack".into()))?;
        for p in parts {
            first.check_compatible(p)?;
            if p.cols != first.cols {
                return Err(Error::DimensionMismatch("stack_rows needs equal column counts".into()));
            }
        }
        let rows = parts.iter().map(|p| p.rows).sum();
        let values = SampledPath::stack(&parts.iter().map(|p| &p.values).collect::<Vec<_>>())?;
        let deriv = SampledPath::stack(&parts.iter().map(|p| &p.deriv).collect::<Vec<_>>())?;
        Self::from_parts(first.reference.clone(), rows, first.cols, values, deriv)
    }

    /// Concatenates paths with equal row counts horizontally.
    pub fn concat_cols(parts: &[&Self]) -> Result<Self> {
        let transposed: Vec<Self> = parts.iter().map(|p| p.transpose()).collect();
        Ok(Self::stack_rows(&transposed.iter().collect::<Vec<_>>())?.transpose())
    }

    /// `a·self + b·other` for equal shapes.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.check_compatible(other)?;
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch("linear combination needs equal shapes".into()));
        }
        let comb = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| a * u + b * v).collect::<Vec<_>>();
        self.rebuild(
            self.rows,
            self.cols,
            comb(self.values.values(), other.values.values()),
            comb(self.deriv.values(), other.deriv.values()),
        )
    }

    pub fn scale(&self, a: f64) -> Self {
        let values = self.values.values().iter().map(|v| a * v).collect();
        let deriv = self.deriv.values().iter().map(|v| a * v).collect();
        self.rebuild(self.rows, self.cols, values, deriv).expect("scaling by a finite factor")
    }

    /// Adds a constant matrix to the values.
    pub fn shift(&self, c: &[f64]) -> Result<Self> {
        if c.len() != self.dim() {
            return Err(Error::DimensionMismatch("shift does not match shape".into()));
        }
        let values = self
            .values
            .values()
            .chunks(self.dim())
            .flat_map(|v| v.iter().zip(c).map(|(x, y)| x + y).collect::<Vec<_>>())
            .collect();
        self.rebuild(self.rows, self.cols, values, self.deriv.values().to_vec())
    }

    /// Entrywise product of equal-shape paths.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch("hadamard needs equal shapes".into()));
        }
        let (m, d) = (self.dim(), self.ref_dim());
        let mut values = Vec::with_capacity(self.len() * m);
        let mut deriv = Vec::with_capacity(self.len() * m * d);
        for i in 0..self.len() {
            let (f, g, fp, gp) = (self.value(i), other.value(i), self.deriv(i), other.deriv(i));
            for c in 0..m {
                values.push(f[c] * g[c]);
                for k in 0..d {
                    deriv.push(fp[c * d + k] * g[c] + f[c] * gp[c * d + k]);
                }
            }
        }
        self.rebuild(self.rows, self.cols, values, deriv)
    }

    /// Moves the path onto another reference sharing the grid, sending derivative
    /// direction `k` to direction `map[k]`. The mapped base coordinates must agree.
    pub fn reembed(&self, reference: Arc<RoughPath>, map: &[usize]) -> Result<Self> {
        let (d, e) = (self.ref_dim(), reference.dim());
        if map.len() != d || map.iter().any(|&j| j >= e) {
            return Err(Error::DimensionMismatch("invalid coordinate map for reembedding".into()));
        }
        if !reference.grid().same_as(self.grid()) {
            return Err(Error::GridMismatch("reembedding needs a common grid".into()));
        }
        for i in 0..self.len() {
            for (k, &j) in map.iter().enumerate() {
                if self.reference.base().value(i)[k] != reference.base().value(i)[j] {
                    return Err(Error::InvalidInput(format!(
                        "reference coordinate {k} does not match target coordinate {j}"
                    )));
                }
            }
        }
        let m = self.dim();
        let mut deriv = vec![0.0; self.len() * m * e];
        for i in 0..self.len() {
            let src = self.deriv(i);
            for c in 0..m {
                for (k, &j) in map.iter().enumerate() {
                    deriv[(i * m + c) * e + j] = src[c * d + k];
                }
            }
        }
        Self::new(reference, self.rows, self.cols, self.values.values().to_vec(), deriv)
    }

    /// Staircase copy frozen at the partition indices, carried on `reference`
    /// (which must share the grid and dimension).
    pub fn piecewise_constant(&self, indices: &[usize], reference: Arc<RoughPath>) -> Result<Self> {
        if reference.dim() != self.ref_dim() || !reference.grid().same_as(self.grid()) {
            return Err(Error::GridMismatch("staircase reference must match grid and dimension".into()));
        }
        let pick = |p: &SampledPath| -> Result<SampledPath> {
            let mut at = Vec::with_capacity(indices.len() * p.dim());
            for &i in indices {
                at.extend_from_slice(p.value(i));
            }
            crate::grid::staircase(p.grid(), p.dim(), indices, &at)
        };
        Self::from_parts(reference, self.rows, self.cols, pick(&self.values)?, pick(&self.deriv)?)
    }
}

/// `(F G, F′G + F G′)` for matrix-compatible shapes, or entrywise scaling when one
/// factor is `1 × 1`.
pub fn product(f: &ControlledPath, g: &ControlledPath) -> Result<ControlledPath> {
    f.check_compatible(g)?;
    let d = f.ref_dim();
    let ((a, b), (b2, c)) = (f.shape(), g.shape());
    if b == b2 {
        let mut values = vec![0.0; f.len() * a * c];
        let mut deriv = vec![0.0; f.len() * a * c * d];
        let mut tmp = vec![0.0; a * c];
        for i in 0..f.len() {
            matmul_acc(f.value(i), g.value(i), a, b, c, &mut values[i * a * c..(i + 1) * a * c]);
            for k in 0..d {
                tmp.fill(0.0);
                matmul_acc(&f.deriv_direction(i, k), g.value(i), a, b, c, &mut tmp);
                matmul_acc(f.value(i), &g.deriv_direction(i, k), a, b, c, &mut tmp);
                for (o, v) in tmp.iter().enumerate() {
                    deriv[(i * a * c + o) * d + k] = *v;
                }
            }
        }
        return ControlledPath::new(f.reference.clone(), a, c, values, deriv);
    }
    let (scalar, other) = if f.dim() == 1 {
        (f, g)
    } else if g.dim() == 1 {
        (g, f)
    } else {
        return Err(Error::DimensionMismatch(format!("cannot multiply {a}x{b} by {b2}x{c}")));
    };
    let m = other.dim();
    let mut values = Vec::with_capacity(f.len() * m);
    let mut deriv = Vec::with_capacity(f.len() * m * d);
    for i in 0..f.len() {
        let (s, sp, o, op) = (scalar.value(i)[0], scalar.deriv(i), other.value(i), other.deriv(i));
        for comp in 0..m {
            values.push(s * o[comp]);
            for k in 0..d {
                deriv.push(sp[k] * o[comp] + s * op[comp * d + k]);
            }
        }
    }
    ControlledPath::new(f.reference.clone(), other.rows, other.cols, values, deriv)
}

/// Two-parameter sup-type field of remainders for the norm computations.
fn remainder_norm(cp: &ControlledPath, s: usize, t: usize) -> f64 {
    frobenius(&cp.remainder(s, t))
}

/// `|Y_0| + |Y′_0| + ‖Y′‖_p + ‖R^Y‖_{p/2}` on the given anchors.
pub fn controlled_norm(cp: &ControlledPath, p: f64, anchors: Option<&[usize]>) -> Result<f64> {
    check_exponent(p)?;
    let (one, two) = norm_anchors(cp.len(), anchors);
    let start = frobenius(cp.value(0)) + frobenius(cp.deriv(0));
    let dvar = p_variation(&cp.deriv, p, Some(&one))?;
    let rvar = two_param_p_variation(|s, t| remainder_norm(cp, s, t), p / 2.0, &two)?;
    Ok(start + dvar + rvar)
}

/// `|Y_0−Ỹ_0| + |Y′_0−Ỹ′_0| + ‖Y′−Ỹ′‖_p + ‖R^Y−R^Ỹ‖_{p/2}`; references may differ but
/// must share the grid and dimension.
pub fn controlled_distance(cp: &ControlledPath, cq: &ControlledPath, p: f64, anchors: Option<&[usize]>) -> Result<f64> {
    check_exponent(p)?;
    if !cp.grid().same_as(cq.grid()) {
        return Err(Error::GridMismatch("controlled_distance needs a common grid".into()));
    }
    if cp.shape() != cq.shape() || cp.ref_dim() != cq.ref_dim() {
        return Err(Error::DimensionMismatch("controlled_distance needs equal shapes".into()));
    }
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    let (one, two) = norm_anchors(cp.len(), anchors);
    let start = frobenius(&diff(cp.value(0), cq.value(0))) + frobenius(&diff(cp.deriv(0), cq.deriv(0)));
    let dd = SampledPath::new(cp.grid().clone(), cp.deriv.dim(), diff(cp.deriv.values(), cq.deriv.values()))?;
    let dvar = p_variation(&dd, p, Some(&one))?;
    let rvar = two_param_p_variation(
        |s, t| frobenius(&diff(&cp.remainder(s, t), &cq.remainder(s, t))),
        p / 2.0,
        &two,
    )?;
    Ok(start + dvar + rvar)
}

#[cfg(test)]
mod tests;
