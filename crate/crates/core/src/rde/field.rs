use crate::controlled::SmoothMap;

/// Time- and state-dependent coefficients `b: ℝ^{1+m} → ℝ^m`, `σ: ℝ^{1+m} → ℝ^{m×d}`.
///
/// Jacobians are taken with respect to `(t, x)`; column 0 is the time derivative.
pub trait CoefficientField: Send + Sync {
    /// State dimension `m`.
    fn state_dim(&self) -> usize;
    /// Noise dimension `d`.
    fn noise_dim(&self) -> usize;
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);
    /// Row-major `m × d`.
    fn vol(&self, t: f64, x: &[f64], out: &mut [f64]);
    /// Row-major `m × (1+m)`.
    fn drift_jacobian(&self, t: f64, x: &[f64], out: &mut [f64]);
    /// Row-major `(m·d) × (1+m)`.
    fn vol_jacobian(&self, t: f64, x: &[f64], out: &mut [f64]);
    /// Upper bound `M` on the `C³_b` norms when known in closed form.
    fn bound(&self) -> Option<f64> {
        None
    }
    /// Lower bound required of `|det(σσᵀ)|` wherever the portfolio is built.
    fn det_floor(&self) -> f64 {
        1e-8
    }
}

/// Constant coefficients.
#[derive(Clone, Debug)]
pub struct ConstantField {
    pub b: Vec<f64>,
    /// Row-major `m × d`.
    pub sigma: Vec<f64>,
    pub noise_dim: usize,
}

impl ConstantField {
    pub fn scalar(b: f64, sigma: f64) -> Self {
        Self { b: vec![b], sigma: vec![sigma], noise_dim: 1 }
    }
}

impl CoefficientField for ConstantField {
    fn state_dim(&self) -> usize {
        self.b.len()
    }
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    fn drift(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b);
    }
    fn vol(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.sigma);
    }
    fn drift_jacobian(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn vol_jacobian(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn bound(&self) -> Option<f64> {
        Some(self.b.iter().chain(&self.sigma).map(|v| v.abs()).fold(0.0, f64::max))
    }
}

type Eval = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// Coefficients given by closures.
pub struct FnField {
    m: usize,
    d: usize,
    drift: Box<Eval>,
    vol: Box<Eval>,
    drift_jac: Box<Eval>,
    vol_jac: Box<Eval>,
    bound: Option<f64>,
    det_floor: f64,
}

impl FnField {
    pub fn new(
        m: usize,
        d: usize,
        drift: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        vol: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        drift_jac: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        vol_jac: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            m,
            d,
            drift: Box::new(drift),
            vol: Box::new(vol),
            drift_jac: Box::new(drift_jac),
            vol_jac: Box::new(vol_jac),
            bound: None,
            det_floor: 1e-8,
        }
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn with_det_floor(mut self, floor: f64) -> Self {
        self.det_floor = floor;
        self
    }
}

impl CoefficientField for FnField {
    fn state_dim(&self) -> usize {
        self.m
    }
    fn noise_dim(&self) -> usize {
        self.d
    }
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }
    fn vol(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.vol)(t, x, out)
    }
    fn drift_jacobian(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift_jac)(t, x, out)
    }
    fn vol_jacobian(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.vol_jac)(t, x, out)
    }
    fn bound(&self) -> Option<f64> {
        self.bound
    }
    fn det_floor(&self) -> f64 {
        self.det_floor
    }
}

/// `(t, x) ↦ [b | σ]` as an `m × (1+d)` smooth map.
pub struct CoefficientMap<'a> {
    pub field: &'a dyn CoefficientField,
}

impl SmoothMap for CoefficientMap<'_> {
    fn input_dim(&self) -> usize {
        1 + self.field.state_dim()
    }
    fn output_shape(&self) -> (usize, usize) {
        (self.field.state_dim(), 1 + self.field.noise_dim())
    }
    fn eval(&self, x: &[f64], value: &mut [f64], jac: &mut [f64]) -> std::result::Result<(), String> {
        let (m, d) = (self.field.state_dim(), self.field.noise_dim());
        let (t, state) = (x[0], &x[1..]);
        let e = 1 + m;
        let mut b = vec![0.0; m];
        let mut s = vec![0.0; m * d];
        let mut jb = vec![0.0; m * e];
        let mut js = vec![0.0; m * d * e];
        self.field.drift(t, state, &mut b);
        self.field.vol(t, state, &mut s);
        self.field.drift_jacobian(t, state, &mut jb);
        self.field.vol_jacobian(t, state, &mut js);
        for c in 0..m {
            value[c * (1 + d)] = b[c];
            jac[c * (1 + d) * e..(c * (1 + d) + 1) * e].copy_from_slice(&jb[c * e..(c + 1) * e]);
            for j in 0..d {
                let o = c * (1 + d) + 1 + j;
                value[o] = s[c * d + j];
                jac[o * e..(o + 1) * e].copy_from_slice(&js[(c * d + j) * e..(c * d + j + 1) * e]);
            }
        }
        if value.iter().chain(jac.iter()).any(|v| !v.is_finite()) {
            return Err(format!("non-finite coefficients at t={t}, x={state:?}"));
        }
        Ok(())
    }
}
