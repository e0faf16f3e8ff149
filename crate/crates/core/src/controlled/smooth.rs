use nalgebra::DMatrix;

use super::ControlledPath;
use crate::error::{Error, Result};

/// A smooth map supplied as value plus Jacobian.
pub trait SmoothMap {
    /// Number of input coordinates (row-major flattened).
    fn input_dim(&self) -> usize;
    /// Shape of the output matrix.
    fn output_shape(&self) -> (usize, usize);
    /// Writes `f(x)` and the row-major Jacobian `(out_dim × input_dim)`. Returns a
    /// diagnostic when `x` is too close to a singularity.
    fn eval(&self, x: &[f64], value: &mut [f64], jacobian: &mut [f64]) -> std::result::Result<(), String>;
}

/// Identity on `ℝ^{rows×cols}`.
pub struct Identity {
    pub rows: usize,
    pub cols: usize,
}

impl SmoothMap for Identity {
    fn input_dim(&self) -> usize {
        self.rows * self.cols
    }
    fn output_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
    fn eval(&self, x: &[f64], value: &mut [f64], jac: &mut [f64]) -> std::result::Result<(), String> {
        let n = x.len();
        value.copy_from_slice(x);
        jac.fill(0.0);
        for k in 0..n {
            jac[k * n + k] = 1.0;
        }
        Ok(())
    }
}

/// Scalar exponential.
pub struct Exp;

impl SmoothMap for Exp {
    fn input_dim(&self) -> usize {
        1
    }
    fn output_shape(&self) -> (usize, usize) {
        (1, 1)
    }
    fn eval(&self, x: &[f64], value: &mut [f64], jac: &mut [f64]) -> std::result::Result<(), String> {
        let e = x[0].exp();
        if !e.is_finite() {
            return Err(format!("exp overflow at {}", x[0]));
        }
        value[0] = e;
        jac[0] = e;
        Ok(())
    }
}

/// Scalar square.
pub struct Square;

impl SmoothMap for Square {
    fn input_dim(&self) -> usize {
        1
    }
    fn output_shape(&self) -> (usize, usize) {
        (1, 1)
    }
    fn eval(&self, x: &[f64], value: &mut [f64], jac: &mut [f64]) -> std::result::Result<(), String> {
        value[0] = x[0] * x[0];
        jac[0] = 2.0 * x[0];
        Ok(())
    }
}

/// Scalar reciprocal, rejected when `|x| < floor`.
pub struct Reciprocal {
    pub floor: f64,
}

impl SmoothMap for Reciprocal {
    fn input_dim(&self) -> usize {
        1
    }
    fn output_shape(&self) -> (usize, usize) {
        (1, 1)
    }
    fn eval(&self, x: &[f64], value: &mut [f64], jac: &mut [f64]) -> std::result::Result<(), String> {
        if x[0].abs() < self.floor {
            return Err(format!("|denominator| = {:e} below floor {:e}", x[0].abs(), self.floor));
        }
        value[0] = 1.0 / x[0];
        jac[0] = -1.0 / (x[0] * x[0]);
        Ok(())
    }
}

/// Inverse of an `n × n` matrix, rejected when `|det| < det_floor`.
///
/// The Jacobian is `∂(A⁻¹)_{ij} / ∂A_{kl} = −(A⁻¹)_{ik} (A⁻¹)_{lj}`.
pub struct MatrixInverse {
    pub n: usize,
    pub det_floor: f64,
}

impl SmoothMap for MatrixInverse {
    fn input_dim(&self) -> usize {
        self.n * self.n
    }
    fn output_shape(&self) -> (usize, usize) {
        (self.n, self.n)
    }
    fn eval(&self, x: &[f64], value: &mut [f64], jac: &mut [f64]) -> std::result::Result<(), String> {
        let n = self.n;
        let a = DMatrix::from_row_slice(n, n, x);
        let det = a.determinant();
        if !(det.abs() >= self.det_floor) {
            return Err(format!("|det| = {:e} below floor {:e}", det.abs(), self.det_floor));
        }
        let inv = a.try_inverse().ok_or_else(|| "matrix is not invertible".to_string())?;
        for i in 0..n {
            for j in 0..n {
                value[i * n + j] = inv[(i, j)];
                for k in 0..n {
                    for l in 0..n {
                        jac[(i * n + j) * n * n + k * n + l] = -inv[(i, k)] * inv[(l, j)];
                    }
                }
            }
        }
        Ok(())
    }
}

type MapFn = dyn Fn(&[f64], &mut [f64], &mut [f64]) -> std::result::Result<(), String> + Send + Sync;

/// A smooth map built from a closure.
pub struct FnMap {
    input_dim: usize,
    shape: (usize, usize),
    f: Box<MapFn>,
}

impl FnMap {
    pub fn new(
        input_dim: usize,
        shape: (usize, usize),
        f: impl Fn(&[f64], &mut [f64], &mut [f64]) -> std::result::Result<(), String> + Send + Sync + 'static,
    ) -> Self {
        Self { input_dim, shape, f: Box::new(f) }
    }
}

impl SmoothMap for FnMap {
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn output_shape(&self) -> (usize, usize) {
        self.shape
    }
    fn eval(&self, x: &[f64], value: &mut [f64], jac: &mut [f64]) -> std::result::Result<(), String> {
        (self.f)(x, value, jac)
    }
}

/// `(f(Y), Df(Y) Y′)`.
pub fn compose_smooth(cp: &ControlledPath, f: &dyn SmoothMap) -> Result<ControlledPath> {
    let m = cp.dim();
    if f.input_dim() != m {
        return Err(Error::DimensionMismatch(format!(
            "map expects {} inputs, path has {m} coordinates",
            f.input_dim()
        )));
    }
    let (rows, cols) = f.output_shape();
    let out = rows * cols;
    let d = cp.ref_dim();
    let mut values = vec![0.0; cp.len() * out];
    let mut deriv = vec![0.0; cp.len() * out * d];
    let mut jac = vec![0.0; out * m];
    for i in 0..cp.len() {
        f.eval(cp.value(i), &mut values[i * out..(i + 1) * out], &mut jac)
            .map_err(|detail| Error::Singular { time: cp.grid().times()[i], detail })?;
        let yp = cp.deriv(i);
        for o in 0..out {
            for k in 0..d {
                deriv[(i * out + o) * d + k] = (0..m).map(|c| jac[o * m + c] * yp[c * d + k]).sum();
            }
        }
    }
    ControlledPath::new(cp.reference().clone(), rows, cols, values, deriv)
}
