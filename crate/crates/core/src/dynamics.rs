//! Continuous-time dynamics `ẋ ∈ f(x, u) + W` and one-step reachable-set
//! overapproximation by growth bounds.
//!
//! The overapproximation of a cell under input `u` is a box whose center is
//! the nominal solution from the cell center and whose radius solves
//! `ṙ = L(u) r + w`, where `w` is the half-width of `W` and `L(u)` bounds the
//! Jacobian of `f` (nonnegative off-diagonal). Both ODEs are integrated with a
//! fixed-step classical Runge-Kutta scheme.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type RhsFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;
type BoundFn = dyn Fn(&IntervalBox, &[f64]) -> Vec<f64> + Send + Sync;

/// Axis-aligned box stored as center and nonnegative radius.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBox {
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
}

impl IntervalBox {
    pub fn new(center: Vec<f64>, radius: Vec<f64>) -> Result<Self> {
        if center.len() != radius.len() {
            return Err(Error::usage("center and radius dimensions differ"));
        }
        if radius.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::usage("box radius must be nonnegative"));
        }
        Ok(IntervalBox { center, radius })
    }

    pub fn from_bounds(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::usage("box bounds must be ordered"));
        }
        let center = lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect();
        let radius = lower.iter().zip(upper).map(|(l, u)| 0.5 * (u - l)).collect();
        Ok(IntervalBox { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.center.iter().zip(&self.radius).map(|(c, r)| c - r).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.center.iter().zip(&self.radius).map(|(c, r)| c + r).collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.center.iter().zip(&self.radius))
            .all(|(x, (c, r))| (x - c).abs() <= *r)
    }
}

/// Sampled vector field with additive box disturbance.
#[derive(Clone)]
pub struct VectorFieldSpec {
    state_dim: usize,
    input_dim: usize,
    rhs: Arc<RhsFn>,
    w_lower: Vec<f64>,
    w_upper: Vec<f64>,
    tau: f64,
    substeps: usize,
}

impl fmt::Debug for VectorFieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorFieldSpec")
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .field("w_lower", &self.w_lower)
            .field("w_upper", &self.w_upper)
            .field("tau", &self.tau)
            .field("substeps", &self.substeps)
            .finish()
    }
}

impl VectorFieldSpec {
    pub fn new(
        state_dim: usize,
        input_dim: usize,
        rhs: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        w_lower: Vec<f64>,
        w_upper: Vec<f64>,
        tau: f64,
    ) -> Result<Self> {
        if w_lower.len() != state_dim || w_upper.len() != state_dim {
            return Err(Error::usage("disturbance box dimension mismatch"));
        }
        if w_lower.iter().zip(&w_upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::usage("disturbance bounds must satisfy lo <= hi"));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::usage("sampling period must be positive"));
        }
        Ok(VectorFieldSpec {
            state_dim,
            input_dim,
            rhs: Arc::new(rhs),
            w_lower,
            w_upper,
            tau,
            substeps: 5,
        })
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps.max(1);
        self
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn w_lower(&self) -> &[f64] {
        &self.w_lower
    }

    pub fn w_upper(&self) -> &[f64] {
        &self.w_upper
    }

    pub fn w_mid(&self) -> Vec<f64> {
        self.w_lower
            .iter()
            .zip(&self.w_upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn w_half(&self) -> Vec<f64> {
        self.w_lower
            .iter()
            .zip(&self.w_upper)
            .map(|(l, u)| 0.5 * (u - l))
            .collect()
    }

    pub fn eval(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.rhs)(x, u, out)
    }

    /// Integrates `ẋ = f(x, u) + w` over one sampling period with
    /// `substeps` RK4 steps and a constant disturbance `w`.
    pub fn flow(&self, x: &[f64], u: &[f64], w: &[f64], substeps: usize) -> Result<Vec<f64>> {
        let ws = vec![w; substeps.max(1)];
        self.flow_piecewise(x, u, &ws)
    }

    /// Like [`Self::flow`] but the disturbance may change at every substep
    /// (one entry of `ws` per substep).
    pub fn flow_piecewise<W: AsRef<[f64]>>(&self, x: &[f64], u: &[f64], ws: &[W]) -> Result<Vec<f64>> {
        let n = self.state_dim;
        let h = self.tau / ws.len() as f64;
        let mut state = x.to_vec();
        let mut scratch = Rk4Scratch::new(n);
        for w in ws {
            let w = w.as_ref();
            let rhs = |s: &[f64], out: &mut [f64]| {
                (self.rhs)(s, u, out);
                for (o, wi) in out.iter_mut().zip(w) {
                    *o += wi;
                }
            };
            scratch.step(&mut state, h, rhs);
            if state.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric { state: x.to_vec() });
            }
        }
        Ok(state)
    }
}

/// Nominal one-period solution, with `W` recentered so the nominal flow uses
/// the midpoint of the disturbance box.
pub fn integrate_nominal(spec: &VectorFieldSpec, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let mut d = vec![0.0; spec.state_dim];
    spec.eval(x, u, &mut d);
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric { state: x.to_vec() });
    }
    spec.flow(x, u, &spec.w_mid(), spec.substeps)
}

/// Growth-bound matrix `L(u)` (row-major `n × n`), optionally depending on
/// the cell it is applied to.
#[derive(Clone)]
pub struct GrowthBoundModel {
    dim: usize,
    bound: Arc<BoundFn>,
}

impl fmt::Debug for GrowthBoundModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrowthBoundModel").field("dim", &self.dim).finish()
    }
}

impl GrowthBoundModel {
    pub fn new(dim: usize, bound: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self::local(dim, move |_, u| bound(u))
    }

    /// Bound valid for solutions starting in the given cell.
    pub fn local(dim: usize, bound: impl Fn(&IntervalBox, &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        GrowthBoundModel {
            dim,
            bound: Arc::new(bound),
        }
    }

    pub fn constant(dim: usize, matrix: Vec<f64>) -> Self {
        Self::new(dim, move |_| matrix.clone())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self, cell: &IntervalBox, u: &[f64]) -> Vec<f64> {
        (self.bound)(cell, u)
    }
}

/// Solves `ṙ = L(u) r + w_half` on `[0, tau]` from the radius of `cell`.
pub fn propagate_radius(
    model: &GrowthBoundModel,
    cell: &IntervalBox,
    u: &[f64],
    w_half: &[f64],
    tau: f64,
    substeps: usize,
) -> Result<Vec<f64>> {
    let n = model.dim;
    let r0 = &cell.radius;
    if r0.len() != n || w_half.len() != n {
        return Err(Error::usage("radius dimension mismatch"));
    }
    if r0.iter().chain(w_half).any(|v| !(*v >= 0.0)) {
        return Err(Error::usage("radius and disturbance half-width must be nonnegative"));
    }
    let l = model.matrix(cell, u);
    if l.len() != n * n {
        return Err(Error::usage("growth bound matrix has wrong size"));
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && l[i * n + j] < 0.0 {
                return Err(Error::usage("growth bound has negative off-diagonal entry"));
            }
        }
    }
    let substeps = substeps.max(1);
    let h = tau / substeps as f64;
    let mut r = r0.to_vec();
    let mut scratch = Rk4Scratch::new(n);
    let rhs = |s: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let mut acc = w_half[i];
            for j in 0..n {
                acc += l[i * n + j] * s[j];
            }
            out[i] = acc;
        }
    };
    for _ in 0..substeps {
        scratch.step(&mut r, h, rhs);
    }
    for v in &mut r {
        *v = v.max(0.0);
    }
    Ok(r)
}

/// Box containing every solution from `cell` under input `u` and any
/// disturbance in `W`, after one sampling period.
pub fn overapprox_successor(
    spec: &VectorFieldSpec,
    model: &GrowthBoundModel,
    cell: &IntervalBox,
    u: &[f64],
) -> Result<IntervalBox> {
    let center = integrate_nominal(spec, &cell.center, u)?;
    let radius = propagate_radius(model, cell, u, &spec.w_half(), spec.tau, spec.substeps)?;
    Ok(IntervalBox { center, radius })
}

struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    fn new(n: usize) -> Self {
        Rk4Scratch {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step(&mut self, x: &mut [f64], h: f64, f: impl Fn(&[f64], &mut [f64])) {
        let n = x.len();
        f(x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        f(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        f(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        f(&self.tmp, &mut self.k4);
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Dubins vehicle `(u1 cos x3, u1 sin x3, u2)`.
pub fn dubins_rhs(x: &[f64], u: &[f64], out: &mut [f64]) {
    out[0] = u[0] * x[2].cos();
    out[1] = u[0] * x[2].sin();
    out[2] = u[1];
}

/// Growth bound of the Dubins vehicle: `|u1|` at entries (1,3) and (2,3).
pub fn dubins_growth_bound() -> GrowthBoundModel {
    GrowthBoundModel::new(3, |u| {
        let a = u[0].abs();
        vec![0.0, 0.0, a, 0.0, 0.0, a, 0.0, 0.0, 0.0]
    })
}

/// Kinematic truck: position, orientation, velocity; inputs acceleration and
/// steering angle.
pub fn truck_rhs(x: &[f64], u: &[f64], out: &mut [f64]) {
    let t = u[1].tan();
    let alpha = (t / 2.0).atan();
    let beta = 1.0 / alpha.cos();
    out[0] = x[3] * (alpha + x[2]).cos() * beta;
    out[1] = x[3] * (alpha + x[2]).sin() * beta;
    out[2] = x[3] * t;
    out[3] = u[0];
}

/// Largest `|cos|` and `|sin|` over the angle interval `[a, b]`.
fn max_abs_cos_sin(a: f64, b: f64) -> (f64, f64) {
    if b - a >= PI {
        return (1.0, 1.0);
    }
    let hits = |offset: f64| ((b - offset) / PI).floor() >= ((a - offset) / PI).ceil();
    let c = if hits(0.0) { 1.0 } else { a.cos().abs().max(b.cos().abs()) };
    let s = if hits(FRAC_PI_2) { 1.0 } else { a.sin().abs().max(b.sin().abs()) };
    (c, s)
}

/// Growth bound of the truck, evaluated per cell. The speed along the
/// sampling interval is bounded by the cell's speed range widened by
/// `|u1| + w_half[3]` over `tau`, and never by more than `speed_cap`. The
/// heading range is widened the same way and bounds the trigonometric
/// factors of the Jacobian.
pub fn truck_growth_bound(speed_cap: f64, w_half: Vec<f64>, tau: f64) -> GrowthBoundModel {
    GrowthBoundModel::local(4, move |cell, u| {
        let t = u[1].tan();
        let alpha = (t / 2.0).atan();
        let beta = 1.0 / alpha.cos();
        let v0 = cell.center[3].abs() + cell.radius[3];
        let cap = speed_cap.min(v0 + (u[0].abs() + w_half[3]) * tau);
        let turn = cap * t.abs() * tau + w_half[2] * tau;
        let mid = cell.center[2] + alpha;
        let (c, s) = max_abs_cos_sin(mid - cell.radius[2] - turn, mid + cell.radius[2] + turn);
        let mut l = vec![0.0; 16];
        l[2] = beta * cap * s;
        l[3] = beta * c;
        l[4 + 2] = beta * cap * c;
        l[4 + 3] = beta * s;
        l[8 + 3] = t.abs();
        l
    })
}
