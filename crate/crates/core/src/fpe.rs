//! Fokker-Planck solvers on `(0, X_max)` with an absorbing (Dirichlet)
//! boundary at the origin, boundary-flux diagnostics, parametrix transition
//! densities, and the survival-representation residual.
//!
//! The equation solved is
//!
//! ```text
//! ∂_t u = ∂²_xx u - ∂_x( B(t, x) u ),   u(t, 0) = 0,  u(0, ·) = ρ.
//! ```
//!
//! The diffusion term carries coefficient **1**, not 2: the SDE's √2
//! diffusion is already accounted for in the generator, and a second factor
//! of 2 here is the most likely implementation bug. Every oracle in the
//! test suite (method of images, reflection principle, drifted images)
//! pins this convention.
//!
//! Time stepping is backward-Euler (`implicit-upwind`) or Crank-Nicolson,
//! with the advection term upwinded by the sign of `B`. The drift
//! coefficient of a step `t_n → t_{n+1}` is evaluated at `t_n`; this makes
//! a converged Picard fixed point satisfy exactly the same discrete
//! recursion as the direct nonlinear march.

use crate::kernels::{KernelError, KernelSpec};
use crate::measures::{DensityFlow, MeasureError};
use crate::quad::{gauss_hermite, gauss_legendre_unit, trapezoid_uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FpeError {
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error("CFL violation: sup|B| * k / h = {0} > 1")]
    Cfl(f64),
    #[error("scheme failure: density fell below -1e-12 at step {step}, node {node} ({value})")]
    NegativeDensity { step: usize, node: usize, value: f64 },
    #[error("scheme failure: clipped mass {mass} at step {step} exceeds 1e-10")]
    ClippedMass { step: usize, mass: f64 },
    #[error("nonlinearity divergence: beta increased by {increase} at step {step}")]
    NonlinearDivergence { step: usize, increase: f64 },
    #[error("need at least {0} spatial nodes")]
    TooFewNodes(usize),
    #[error("boundary slope estimate is negative ({0}); density must leave the origin with nonnegative slope")]
    FluxSign(f64),
    #[error("time index {0} out of range")]
    BadTimeIndex(usize),
    #[error("parametrix requires s > t, got t = {t}, s = {s}")]
    InvalidInterval { t: f64, s: f64 },
    #[error("quadrature did not converge: refinement moved the value by {delta} (tolerance {tol})")]
    QuadratureNonConvergence { delta: f64, tol: f64 },
    #[error("frozen drift exceeds its declared bound: |{value}| > {bound}")]
    DriftBound { value: f64, bound: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ImplicitUpwind,
    CrankNicolsonUpwind,
}

/// Initial density on `(0, ∞)`; tabulated onto the solver grid and
/// renormalized to unit mass, with the Dirichlet value pinned at 0.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum InitialDensity {
    Gaussian { center: f64, sigma: f64 },
    Uniform { lower: f64, upper: f64 },
    Table { xs: Vec<f64>, values: Vec<f64> },
}

impl InitialDensity {
    fn validate(&self) -> Result<(), FpeError> {
        match self {
            InitialDensity::Gaussian { center, sigma } => {
                if !(*center > 0.0 && *sigma > 0.0) {
                    return Err(FpeError::BadConfig(format!(
                        "gaussian initial density needs center, sigma > 0 (got {center}, {sigma})"
                    )));
                }
            }
            InitialDensity::Uniform { lower, upper } => {
                if !(*lower > 0.0 && upper > lower) {
                    return Err(FpeError::BadConfig(format!(
                        "uniform initial density needs 0 < lower < upper (got {lower}, {upper})"
                    )));
                }
            }
            InitialDensity::Table { xs, values } => {
                if xs.len() < 2 || xs.len() != values.len() {
                    return Err(FpeError::BadConfig("density table too short".into()));
                }
                if values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                    return Err(FpeError::BadConfig("density table has negative values".into()));
                }
                // User tables must arrive normalized.
                let mut mass = 0.0;
                for w in xs.windows(2).zip(values.windows(2)) {
                    mass += 0.5 * (w.0[1] - w.0[0]) * (w.1[0] + w.1[1]);
                }
                if (mass - 1.0).abs() > 1e-8 {
                    return Err(FpeError::BadConfig(format!(
                        "density table mass {mass} is not 1 within 1e-8"
                    )));
                }
            }
        }
        Ok(())
    }

    fn tabulate(&self, xs: &[f64]) -> Vec<f64> {
        let mut rho: Vec<f64> = match self {
            InitialDensity::Gaussian { center, sigma } => xs
                .iter()
                .map(|&x| {
                    let w = (x - center) / sigma;
                    (-0.5 * w * w).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
                })
                .collect(),
            InitialDensity::Uniform { lower, upper } => xs
                .iter()
                .map(|&x| {
                    if x >= *lower && x <= *upper {
                        1.0 / (upper - lower)
                    } else {
                        0.0
                    }
                })
                .collect(),
            InitialDensity::Table { xs: txs, values } => xs
                .iter()
                .map(|&x| {
                    if x <= txs[0] || x >= *txs.last().unwrap() {
                        if x == txs[0] { values[0] } else { 0.0 }
                    } else {
                        let i = txs.partition_point(|v| *v <= x) - 1;
                        let frac = (x - txs[i]) / (txs[i + 1] - txs[i]);
                        values[i] + frac * (values[i + 1] - values[i])
                    }
                })
                .collect(),
        };
        rho[0] = 0.0; // Dirichlet-compatible
        rho
    }
}

/// Grid and scheme parameters for one solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FpeConfig {
    pub space_step: f64,
    pub time_step: f64,
    pub x_max: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    pub initial_density: InitialDensity,
}

impl FpeConfig {
    pub fn validate(&self) -> Result<(), FpeError> {
        if !(self.space_step > 0.0 && self.time_step > 0.0 && self.x_max > 0.0 && self.horizon > 0.0)
        {
            return Err(FpeError::BadConfig("steps and ranges must be positive".into()));
        }
        let j = (self.x_max / self.space_step).round();
        if j < 3.0 || (j * self.space_step - self.x_max).abs() > 1e-9 * self.x_max {
            return Err(FpeError::BadConfig(format!(
                "x_max = {} is not an integer multiple of h = {}",
                self.x_max, self.space_step
            )));
        }
        let m = (self.horizon / self.time_step).round();
        if m < 1.0 || (m * self.time_step - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(FpeError::BadConfig(format!(
                "horizon = {} is not an integer multiple of k = {}",
                self.horizon, self.time_step
            )));
        }
        self.initial_density.validate()
    }

    pub fn n_space(&self) -> usize {
        (self.x_max / self.space_step).round() as usize
    }

    pub fn n_time(&self) -> usize {
        (self.horizon / self.time_step).round() as usize
    }

    pub fn space_grid(&self) -> Vec<f64> {
        (0..=self.n_space()).map(|j| j as f64 * self.space_step).collect()
    }

    pub fn time_grid(&self) -> Vec<f64> {
        (0..=self.n_time()).map(|m| m as f64 * self.time_step).collect()
    }

    pub fn from_json(json: &str) -> Result<Self, FpeError> {
        let cfg: Self = serde_json::from_str(json)
            .map_err(|e| FpeError::BadConfig(format!("config json: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fpe config serialization")
    }
}

/// Drift table `B(t_m, x_j)` with bilinear interpolation, clamped outside
/// the grid box.
#[derive(Clone, Debug)]
pub struct FrozenDrift {
    ts: Vec<f64>,
    xs: Vec<f64>,
    values: Vec<f64>,
    pub sup_bound: f64,
}

impl FrozenDrift {
    pub fn new(ts: Vec<f64>, xs: Vec<f64>, values: Vec<f64>) -> Result<Self, FpeError> {
        if ts.is_empty() || xs.is_empty() || values.len() != ts.len() * xs.len() {
            return Err(FpeError::BadConfig("drift table shape mismatch".into()));
        }
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !sup.is_finite() {
            return Err(FpeError::BadConfig("drift table has non-finite entries".into()));
        }
        Ok(Self {
            ts,
            xs,
            values,
            sup_bound: sup,
        })
    }

    /// Validate a table against an externally declared bound.
    pub fn with_declared_bound(mut self, bound: f64) -> Result<Self, FpeError> {
        if self.sup_bound > bound + 1e-12 {
            return Err(FpeError::DriftBound {
                value: self.sup_bound,
                bound,
            });
        }
        self.sup_bound = bound;
        Ok(self)
    }

    pub fn zero(ts: Vec<f64>, xs: Vec<f64>) -> Self {
        let values = vec![0.0; ts.len() * xs.len()];
        Self {
            ts,
            xs,
            values,
            sup_bound: 0.0,
        }
    }

    pub fn constant(c: f64, ts: Vec<f64>, xs: Vec<f64>) -> Self {
        let values = vec![c; ts.len() * xs.len()];
        Self {
            ts,
            xs,
            values,
            sup_bound: c.abs(),
        }
    }

    pub fn from_fn(ts: Vec<f64>, xs: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Result<Self, FpeError> {
        let mut values = Vec::with_capacity(ts.len() * xs.len());
        for &t in &ts {
            for &x in &xs {
                values.push(f(t, x));
            }
        }
        Self::new(ts, xs, values)
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let (wt, it) = locate(&self.ts, t);
        let (wx, ix) = locate(&self.xs, x);
        let nx = self.xs.len();
        let v = |a: usize, b: usize| self.values[a * nx + b];
        let i1 = (it + 1).min(self.ts.len() - 1);
        let j1 = (ix + 1).min(nx - 1);
        (1.0 - wt) * ((1.0 - wx) * v(it, ix) + wx * v(it, j1))
            + wt * ((1.0 - wx) * v(i1, ix) + wx * v(i1, j1))
    }
}

fn locate(axis: &[f64], v: f64) -> (f64, usize) {
    let n = axis.len();
    if n == 1 || v <= axis[0] {
        return (0.0, 0);
    }
    if v >= axis[n - 1] {
        return (1.0, n - 2);
    }
    let i = axis.partition_point(|a| *a <= v) - 1;
    let i = i.min(n - 2);
    ((v - axis[i]) / (axis[i + 1] - axis[i]), i)
}

/// Tridiagonal solve (Thomas algorithm) for the interior unknowns.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64], scratch: &mut [f64]) {
    let n = rhs.len();
    scratch[0] = upper[0] / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * scratch[i - 1];
        scratch[i] = upper[i] / m;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
}

/// Spatial operator coefficients at node `j` (interior): contribution of
/// `u_{j-1}, u_j, u_{j+1}` to `(Lu)_j` with diffusion `nu` and upwinded
/// advection from the half-node drift values.
#[inline]
fn operator_row(nu: f64, h: f64, b_left_half: f64, b_right_half: f64) -> (f64, f64, f64) {
    let (blp, blm) = (b_left_half.max(0.0), b_left_half.min(0.0));
    let (brp, brm) = (b_right_half.max(0.0), b_right_half.min(0.0));
    let a = nu / (h * h) + blp / h;
    let b = -2.0 * nu / (h * h) - brp / h + blm / h;
    let c = nu / (h * h) - brm / h;
    (a, b, c)
}

struct Stepper {
    h: f64,
    k: f64,
    nu: f64,
    scheme: Scheme,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
}

impl Stepper {
    fn new(h: f64, k: f64, nu: f64, scheme: Scheme, n_interior: usize) -> Self {
        Self {
            h,
            k,
            nu,
            scheme,
            lower: vec![0.0; n_interior],
            diag: vec![0.0; n_interior],
            upper: vec![0.0; n_interior],
            rhs: vec![0.0; n_interior],
            scratch: vec![0.0; n_interior],
        }
    }

    /// Advance `u` one step. `b_old`/`b_new` are drift values at the nodes
    /// at the start/end of the step; the implicit scheme uses `b_old`
    /// (coefficient lag), Crank-Nicolson averages both halves.
    fn advance(&mut self, u: &mut [f64], b_old: &[f64], b_new: &[f64], step: usize) -> Result<f64, FpeError> {
        let n = u.len();
        let interior = n - 2;
        let (h, k, nu) = (self.h, self.k, self.nu);
        let half = |b: &[f64], j: usize| 0.5 * (b[j] + b[j + 1]);
        match self.scheme {
            Scheme::ImplicitUpwind => {
                for j in 1..=interior {
                    let (a, b, c) = operator_row(nu, h, half(b_old, j - 1), half(b_old, j));
                    self.lower[j - 1] = -k * a;
                    self.diag[j - 1] = 1.0 - k * b;
                    self.upper[j - 1] = -k * c;
                    self.rhs[j - 1] = u[j];
                }
            }
            Scheme::CrankNicolsonUpwind => {
                for j in 1..=interior {
                    let (ao, bo, co) = operator_row(nu, h, half(b_old, j - 1), half(b_old, j));
                    let (an, bn, cn) = operator_row(nu, h, half(b_new, j - 1), half(b_new, j));
                    self.lower[j - 1] = -0.5 * k * an;
                    self.diag[j - 1] = 1.0 - 0.5 * k * bn;
                    self.upper[j - 1] = -0.5 * k * cn;
                    let um = u[j - 1];
                    let up = u[j + 1];
                    self.rhs[j - 1] = u[j] + 0.5 * k * (ao * um + bo * u[j] + co * up);
                }
            }
        }
        thomas(
            &self.lower,
            &self.diag,
            &self.upper,
            &mut self.rhs,
            &mut self.scratch,
        );
        u[0] = 0.0;
        u[n - 1] = 0.0;
        let mut clipped = 0.0;
        for j in 1..=interior {
            let v = self.rhs[j - 1];
            if v < 0.0 {
                if v < -1e-12 {
                    return Err(FpeError::NegativeDensity {
                        step,
                        node: j,
                        value: v,
                    });
                }
                clipped -= v;
                u[j] = 0.0;
            } else {
                u[j] = v;
            }
        }
        let clipped_mass = clipped * h;
        if clipped_mass > 1e-10 {
            return Err(FpeError::ClippedMass {
                step,
                mass: clipped_mass,
            });
        }
        Ok(clipped_mass)
    }
}

/// Solve the linear equation with a frozen drift table.
pub fn solve_linear_fpe(cfg: &FpeConfig, drift: &FrozenDrift) -> Result<DensityFlow, FpeError> {
    solve_with_drift_rows(cfg, drift.sup_bound, 1.0, |t, xs, row| {
        for (slot, &x) in row.iter_mut().zip(xs) {
            *slot = drift.eval(t, x);
        }
        Ok(())
    })
}

/// Internal entry with an explicit diffusion coefficient; used by the
/// validation suite's mutation checks.
pub(crate) fn solve_linear_fpe_with_diffusion(
    cfg: &FpeConfig,
    drift: &FrozenDrift,
    nu: f64,
) -> Result<DensityFlow, FpeError> {
    solve_with_drift_rows(cfg, drift.sup_bound, nu, |t, xs, row| {
        for (slot, &x) in row.iter_mut().zip(xs) {
            *slot = drift.eval(t, x);
        }
        Ok(())
    })
}

/// Solve the nonlinear equation: the drift row of each step is assembled
/// from the current density through the mean-field drift (explicit in the
/// nonlinearity, implicit in diffusion).
pub fn solve_nonlinear_fpe(cfg: &FpeConfig, kernel: &KernelSpec) -> Result<DensityFlow, FpeError> {
    kernel.validate()?;
    solve_with_drift_rows_nonlinear(cfg, kernel)
}

/// Mean-field drift table row `B(t, x_j) = ∫ b(t, x_j, y) u(y) dy`.
/// Zero, constant and separable kernels use closed accumulators; generic
/// families pay one quadrature per node, parallelized over nodes.
pub(crate) fn assemble_mean_field_row(
    kernel: &KernelSpec,
    t: f64,
    xs: &[f64],
    u: &[f64],
    beta: f64,
    out: &mut [f64],
) -> Result<(), FpeError> {
    use crate::kernels::KernelFamily::*;
    match kernel.family {
        Zero => out.fill(0.0),
        Constant => out.fill(kernel.params[0] * beta),
        SeparableProduct => {
            let (c, a, d) = (kernel.params[0], kernel.params[1], kernel.params[2]);
            let weighted: Vec<f64> = xs
                .iter()
                .zip(u)
                .map(|(&y, &uy)| (-d * y * y).exp() * uy)
                .collect();
            let s = trapezoid_uniform(&weighted, xs[1] - xs[0]);
            for (slot, &x) in out.iter_mut().zip(xs) {
                *slot = c * (-a * x * x).exp() * s;
            }
        }
        _ => {
            let h = xs[1] - xs[0];
            out.par_iter_mut().enumerate().for_each(|(j, slot)| {
                let x = xs[j];
                let mut weighted = Vec::with_capacity(xs.len());
                for (&y, &uy) in xs.iter().zip(u) {
                    weighted.push(kernel.eval(t, x, y) * uy);
                }
                *slot = trapezoid_uniform(&weighted, h);
            });
        }
    }
    Ok(())
}

fn solve_with_drift_rows_nonlinear(cfg: &FpeConfig, kernel: &KernelSpec) -> Result<DensityFlow, FpeError> {
    cfg.validate()?;
    let xs = cfg.space_grid();
    let ts = cfg.time_grid();
    let (h, k) = (cfg.space_step, cfg.time_step);
    check_cfl(kernel.sup_bound, k, h)?;
    let mut u = cfg.initial_density.tabulate(&xs);
    normalize(&mut u, h)?;
    let mut rows = Vec::with_capacity(ts.len() * xs.len());
    rows.extend_from_slice(&u);
    let mut beta = Vec::with_capacity(ts.len());
    beta.push(trapezoid_uniform(&u, h));
    let mut stepper = Stepper::new(h, k, 1.0, cfg.scheme, xs.len() - 2);
    let mut b_old = vec![0.0; xs.len()];
    let mut b_new = vec![0.0; xs.len()];
    for m in 0..cfg.n_time() {
        let beta_m = beta[m];
        assemble_mean_field_row(kernel, ts[m], &xs, &u, beta_m, &mut b_old)?;
        // Crank-Nicolson's implicit half reuses the same lagged row: the
        // nonlinearity stays explicit.
        b_new.copy_from_slice(&b_old);
        stepper.advance(&mut u, &b_old, &b_new, m)?;
        let beta_next = trapezoid_uniform(&u, h);
        if beta_next > beta_m + 1e-8 {
            return Err(FpeError::NonlinearDivergence {
                step: m,
                increase: beta_next - beta_m,
            });
        }
        rows.extend_from_slice(&u);
        beta.push(beta_next.min(beta_m));
    }
    Ok(DensityFlow::from_parts(ts, xs, rows, beta)?)
}

fn check_cfl(sup: f64, k: f64, h: f64) -> Result<(), FpeError> {
    let cfl = sup * k / h;
    if cfl > 1.0 + 1e-12 {
        return Err(FpeError::Cfl(cfl));
    }
    Ok(())
}

fn normalize(u: &mut [f64], h: f64) -> Result<(), FpeError> {
    let mass = trapezoid_uniform(u, h);
    if !(mass > 0.0) {
        return Err(FpeError::BadConfig(
            "initial density carries no mass on the grid".into(),
        ));
    }
    if (mass - 1.0).abs() > 0.02 {
        return Err(FpeError::BadConfig(format!(
            "initial density mass {mass} is too far from 1; refine the grid"
        )));
    }
    for v in u.iter_mut() {
        *v /= mass;
    }
    Ok(())
}

fn solve_with_drift_rows(
    cfg: &FpeConfig,
    drift_sup: f64,
    nu: f64,
    mut fill_row: impl FnMut(f64, &[f64], &mut [f64]) -> Result<(), FpeError>,
) -> Result<DensityFlow, FpeError> {
    cfg.validate()?;
    let xs = cfg.space_grid();
    let ts = cfg.time_grid();
    let (h, k) = (cfg.space_step, cfg.time_step);
    check_cfl(drift_sup, k, h)?;
    let mut u = cfg.initial_density.tabulate(&xs);
    normalize(&mut u, h)?;
    let mut rows = Vec::with_capacity(ts.len() * xs.len());
    rows.extend_from_slice(&u);
    let mut beta = Vec::with_capacity(ts.len());
    beta.push(trapezoid_uniform(&u, h));
    let mut stepper = Stepper::new(h, k, nu, cfg.scheme, xs.len() - 2);
    let mut b_old = vec![0.0; xs.len()];
    let mut b_new = vec![0.0; xs.len()];
    for m in 0..cfg.n_time() {
        fill_row(ts[m], &xs, &mut b_old)?;
        fill_row(ts[m + 1], &xs, &mut b_new)?;
        stepper.advance(&mut u, &b_old, &b_new, m)?;
        rows.extend_from_slice(&u);
        beta.push(trapezoid_uniform(&u, h).min(beta[m]));
    }
    Ok(DensityFlow::from_parts(ts, xs, rows, beta)?)
}

/// Instantaneous survival decay rate `-∂_x u(t_k, 0⁺)` from a one-sided
/// second-order difference. For a valid nonnegative density with
/// `u(t, 0) = 0` the interior slope is nonnegative, so the result is
/// nonpositive; a positive result signals a scheme failure.
pub fn boundary_flux(flow: &DensityFlow, k: usize) -> Result<f64, FpeError> {
    if k == 0 || k >= flow.times().len() {
        return Err(FpeError::BadTimeIndex(k));
    }
    let row = flow.row(k);
    if row.len() < 3 {
        return Err(FpeError::TooFewNodes(3));
    }
    let h = flow.space_step();
    let slope = (4.0 * row[1] - row[2]) / (2.0 * h);
    if slope < -1e-8 {
        return Err(FpeError::FluxSign(slope));
    }
    Ok(-slope)
}

/// Quadrature controls for [`parametrix_density`].
#[derive(Clone, Copy, Debug)]
pub struct QuadratureParams {
    pub time_nodes: usize,
    pub space_nodes: usize,
    /// Absolute tolerance for the node-refinement convergence check.
    pub tolerance: f64,
}

impl Default for QuadratureParams {
    fn default() -> Self {
        Self {
            time_nodes: 10,
            space_nodes: 20,
            tolerance: 1e-6,
        }
    }
}

#[inline]
fn gaussian(variance: f64, w: f64) -> f64 {
    (-(w * w) / (2.0 * variance)).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

struct ParametrixRules {
    time_nodes: Vec<f64>,
    time_weights: Vec<f64>,
    space_nodes: Vec<f64>,
    /// Hermite weights with the `e^{w²}` compensation folded in.
    space_weights: Vec<f64>,
}

impl ParametrixRules {
    fn new(nt: usize, nz: usize) -> Self {
        let (tv, tw) = gauss_legendre_unit(nt);
        let (hx, hw) = gauss_hermite(nz);
        let compensated: Vec<f64> = hx
            .iter()
            .zip(&hw)
            .map(|(&x, &w)| (w.ln() + x * x).exp())
            .collect();
        Self {
            time_nodes: tv,
            time_weights: tw,
            space_nodes: hx,
            space_weights: compensated,
        }
    }
}

/// `T_k(t, x, s, y)`: the k-th iterated time-space convolution of the
/// Gaussian parametrix with the drift correction kernel
/// `F(u, z, s, y) = B(u, z) ∂_z q(u, z, s, y)`.
fn parametrix_term(
    drift: &FrozenDrift,
    rules: &ParametrixRules,
    k: usize,
    t: f64,
    x: f64,
    s: f64,
    y: f64,
) -> f64 {
    if k == 0 {
        return gaussian(2.0 * (s - t), y - x);
    }
    let span = s - t;
    let mut acc = 0.0;
    for (&v, &wv) in rules.time_nodes.iter().zip(&rules.time_weights) {
        // u = t + (s - t) v² clusters nodes toward u = t and removes the
        // (u - t)^{-1/2} endpoint behaviour.
        let u = t + span * v * v;
        let jacobian = 2.0 * span * v;
        let r1 = 2.0 * (u - t);
        let r2 = 2.0 * (s - u);
        // Gauss-Hermite matched to the product of the two Gaussian factors.
        let center = (x * r2 + y * r1) / (r1 + r2);
        let var = r1 * r2 / (r1 + r2);
        let scale = (2.0 * var).sqrt();
        let mut inner = 0.0;
        for (&w, &cw) in rules.space_nodes.iter().zip(&rules.space_weights) {
            let z = center + scale * w;
            let t_prev = parametrix_term(drift, rules, k - 1, t, x, u, z);
            if t_prev == 0.0 {
                continue;
            }
            let dq_dz = (y - z) / r2 * gaussian(r2, y - z);
            inner += cw * t_prev * drift.eval(u, z) * dq_dz;
        }
        acc += wv * jacobian * scale * inner;
    }
    acc
}

fn parametrix_series(
    drift: &FrozenDrift,
    nt: usize,
    nz: usize,
    t: f64,
    x: f64,
    s: f64,
    y: f64,
    terms: usize,
) -> f64 {
    let rules = ParametrixRules::new(nt, nz);
    let mut total = gaussian(2.0 * (s - t), y - x);
    for k in 1..=terms {
        total += parametrix_term(drift, &rules, k, t, x, s, y);
    }
    total
}

/// Truncated parametrix expansion of the transition density of
/// `dY = B(t, Y) dt + √2 dW` on the whole line (no absorption), with
/// `terms` correction terms.
///
/// With a zero drift every correction vanishes identically and the Gaussian
/// `q` is returned without quadrature. Otherwise the value is computed at
/// two node counts; disagreement beyond `params.tolerance` is reported as
/// quadrature non-convergence.
pub fn parametrix_density(
    drift: &FrozenDrift,
    t: f64,
    x: f64,
    s: f64,
    y: f64,
    terms: usize,
    params: &QuadratureParams,
) -> Result<f64, FpeError> {
    if !(s > t) {
        return Err(FpeError::InvalidInterval { t, s });
    }
    if terms == 0 || drift.sup_bound == 0.0 {
        return Ok(gaussian(2.0 * (s - t), y - x));
    }
    let coarse = parametrix_series(drift, params.time_nodes, params.space_nodes, t, x, s, y, terms);
    let fine = parametrix_series(
        drift,
        params.time_nodes + 4,
        params.space_nodes + 8,
        t,
        x,
        s,
        y,
        terms,
    );
    let delta = (coarse - fine).abs();
    if delta > params.tolerance {
        return Err(FpeError::QuadratureNonConvergence {
            delta,
            tol: params.tolerance,
        });
    }
    Ok(fine)
}

/// Residual of the survival representation at time `s`:
///
/// ```text
/// α(s)/2 = ∫ρ(x) G(0,x) dx - G(0,0) - ∫₀ˢ α(t) ∂_t G(t,0) dt,
/// G(t,x) = ∫₀^∞ g(t,x,s,y) dy,
/// ```
///
/// with `g` the whole-line transition density evaluated by the parametrix
/// expansion, `∂_t` by one-cell central differences (one-sided at the
/// ends), and every integral by the composite trapezoid rule on the flow's
/// grids.
pub fn alpha_representation_residual(
    flow: &DensityFlow,
    drift: &FrozenDrift,
    s: f64,
    terms: usize,
    params: &QuadratureParams,
) -> Result<f64, FpeError> {
    let ks = flow.time_index(s)?;
    if ks < 3 {
        return Err(FpeError::BadTimeIndex(ks));
    }
    let xs = flow.xs();
    let h = flow.space_step();
    let k = flow.time_step();
    let ts = flow.times();

    // G(t, x') = ∫ g(t, x', s, y) dy over the grid.
    let g_bar = |t: f64, xp: f64| -> Result<f64, FpeError> {
        let values = xs
            .iter()
            .map(|&y| parametrix_density(drift, t, xp, s, y, terms, params))
            .collect::<Result<Vec<f64>, FpeError>>()?;
        Ok(trapezoid_uniform(&values, h))
    };

    // Term 1: ∫ ρ(x) G(0, x) dx with ρ the flow's initial row.
    let rho = flow.row(0);
    let g_row0 = xs
        .par_iter()
        .map(|&xp| g_bar(0.0, xp))
        .collect::<Result<Vec<f64>, FpeError>>()?;
    let weighted: Vec<f64> = rho.iter().zip(&g_row0).map(|(&r, &g)| r * g).collect();
    let term1 = trapezoid_uniform(&weighted, h);

    // Term 2: G(0, 0).
    let term2 = g_row0[0];

    // Term 3: ∫₀ˢ α(t) ∂_t G(t, 0) dt. G is tabulated on grid times
    // strictly before s; the final cell extrapolates the last integrand
    // value (the t → s side is handled one-sidedly).
    let g0: Vec<f64> = (0..ks)
        .into_par_iter()
        .map(|m| g_bar(ts[m], 0.0))
        .collect::<Result<Vec<f64>, FpeError>>()?;
    let mut dg = vec![0.0; ks];
    for m in 0..ks {
        dg[m] = if m == 0 {
            (g0[1] - g0[0]) / k
        } else if m == ks - 1 {
            (g0[ks - 1] - g0[ks - 2]) / k
        } else {
            (g0[m + 1] - g0[m - 1]) / (2.0 * k)
        };
    }
    let alpha = flow.beta();
    let integrand: Vec<f64> = (0..ks).map(|m| alpha[m] * dg[m]).collect();
    let term3 = trapezoid_uniform(&integrand, k) + k * integrand[ks - 1];

    let lhs = alpha[ks] / 2.0;
    Ok((lhs - (term1 - term2 - term3)).abs())
}
