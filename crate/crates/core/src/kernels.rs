//! Interaction kernels `b(t, x, y)`, the mean-field drift, the empirical
//! drift of the particle system, and the smooth indicator that regularizes
//! `1{x > 0}`.
//!
//! Kernels are declared, not discovered: a [`KernelSpec`] carries the family,
//! its parameters, the declared sup bound `‖b‖∞` and a Hölder exponent.
//! The sup bound is a contract — [`KernelSpec::probe_bound`] samples the
//! kernel at random points and rejects specs whose declared bound is
//! violated.

use crate::streams::ParticleStream;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("parameter count mismatch: family {family:?} takes {expected} parameters, got {got}")]
    ParamCount {
        family: KernelFamily,
        expected: usize,
        got: usize,
    },
    #[error("zero kernel must declare sup_bound = 0, got {0}")]
    ZeroBound(f64),
    #[error("sup_bound must be finite and nonnegative, got {0}")]
    BadSupBound(f64),
    #[error("holder_exponent must lie in (0, 1], got {0}")]
    BadHolder(f64),
    #[error("parameter {index} is not finite or out of range: {value}")]
    BadParam { index: usize, value: f64 },
    #[error("tabulated kernel has no grid data (missing `table` file?)")]
    MissingTable,
    #[error("kernel table: {0}")]
    BadTable(String),
    #[error("declared bound violated: |b({t}, {x}, {y})| = {value} > sup_bound = {bound}")]
    BoundViolated {
        t: f64,
        x: f64,
        y: f64,
        value: f64,
        bound: f64,
    },
    #[error("density has a negative value at index {index}: {value}")]
    NegativeDensity { index: usize, value: f64 },
    #[error("beta must lie in [0, 1], got {0}")]
    BadBeta(f64),
    #[error("density mass {mass} does not match beta {beta} (tolerance {tol})")]
    MassMismatch { mass: f64, beta: f64, tol: f64 },
    #[error("empty position vector")]
    EmptyPositions,
    #[error("particle index {index} out of range for {n} particles")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("grid must have at least 2 nodes")]
    GridTooSmall,
    #[error("kernel json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("kernel file: {0}")]
    Table(#[from] crate::tables::TableError),
}

/// Closed set of kernel families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    /// `b = 0`.
    Zero,
    /// `b = c`; params `[c]`.
    Constant,
    /// `b = c · exp(-a x²) · exp(-d y²)`; params `[c, a, d]` with `a, d ≥ 0`.
    SeparableProduct,
    /// `b = κ / (1 + (x - y)²)`; params `[κ]`.
    RationalAttractive,
    /// Multilinear interpolation of a `(t, x, y) → b` grid, clamped outside.
    Tabulated,
}

/// Dense grid data backing a tabulated kernel.
#[derive(Clone, Debug)]
pub struct KernelTable {
    pub t_axis: Vec<f64>,
    pub x_axis: Vec<f64>,
    pub y_axis: Vec<f64>,
    /// t-major, then x, then y.
    pub values: Vec<f64>,
}

impl KernelTable {
    /// Build from `(t, x, y, b)` records; rows may come in any order but
    /// must fill a complete grid.
    pub fn from_records(records: &[(f64, f64, f64, f64)]) -> Result<Self, KernelError> {
        if records.is_empty() {
            return Err(KernelError::BadTable("no rows".into()));
        }
        let mut t_axis: Vec<f64> = records.iter().map(|r| r.0).collect();
        let mut x_axis: Vec<f64> = records.iter().map(|r| r.1).collect();
        let mut y_axis: Vec<f64> = records.iter().map(|r| r.2).collect();
        for axis in [&mut t_axis, &mut x_axis, &mut y_axis] {
            axis.sort_by(|a, b| a.total_cmp(b));
            axis.dedup();
        }
        let (nt, nx, ny) = (t_axis.len(), x_axis.len(), y_axis.len());
        if nt * nx * ny != records.len() {
            return Err(KernelError::BadTable(format!(
                "grid is not complete: {} rows for a {}x{}x{} grid",
                records.len(),
                nt,
                nx,
                ny
            )));
        }
        let mut values = vec![f64::NAN; nt * nx * ny];
        let locate = |axis: &[f64], v: f64| axis.partition_point(|a| *a < v);
        for &(t, x, y, b) in records {
            let (it, ix, iy) = (locate(&t_axis, t), locate(&x_axis, x), locate(&y_axis, y));
            values[(it * nx + ix) * ny + iy] = b;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(KernelError::BadTable("duplicate or missing grid cells".into()));
        }
        Ok(Self {
            t_axis,
            x_axis,
            y_axis,
            values,
        })
    }

    /// Load from a CSV file with header `t,x,y,b`.
    pub fn from_csv_file(path: &Path) -> Result<Self, KernelError> {
        let (header, rows) = crate::tables::read_csv_file(path)?;
        if header != ["t", "x", "y", "b"] {
            return Err(KernelError::BadTable(format!(
                "expected header t,x,y,b in {}, found {:?}",
                path.display(),
                header
            )));
        }
        let records: Vec<(f64, f64, f64, f64)> =
            rows.iter().map(|r| (r[0], r[1], r[2], r[3])).collect();
        Self::from_records(&records)
    }

    fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        let (wt, it) = clamp_locate(&self.t_axis, t);
        let (wx, ix) = clamp_locate(&self.x_axis, x);
        let (wy, iy) = clamp_locate(&self.y_axis, y);
        let nx = self.x_axis.len();
        let ny = self.y_axis.len();
        let at = |a: usize, b: usize, c: usize| self.values[(a * nx + b) * ny + c];
        let mut acc = 0.0;
        for (dt, ft) in [(0, 1.0 - wt), (1, wt)] {
            for (dx, fx) in [(0, 1.0 - wx), (1, wx)] {
                for (dy, fy) in [(0, 1.0 - wy), (1, wy)] {
                    acc += ft * fx * fy * at(it + dt, ix + dx, iy + dy);
                }
            }
        }
        acc
    }
}

/// For a sorted axis, return the interpolation weight and left index of the
/// cell containing `v`, clamped to the axis range. Degenerate (single-point)
/// axes return weight 0 against a duplicated cell.
fn clamp_locate(axis: &[f64], v: f64) -> (f64, usize) {
    let n = axis.len();
    if n == 1 {
        return (0.0, 0);
    }
    if v <= axis[0] {
        return (0.0, 0);
    }
    if v >= axis[n - 1] {
        return (1.0, n - 2);
    }
    let hi = axis.partition_point(|a| *a <= v);
    let i = hi - 1;
    let w = (v - axis[i]) / (axis[i + 1] - axis[i]);
    (w, i.min(n - 2))
}

/// Serialized form: `{"family", "params", "sup_bound", "holder_exponent"}`
/// plus an optional `table` path for tabulated kernels.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct KernelSpecFile {
    family: KernelFamily,
    #[serde(default)]
    params: Vec<f64>,
    sup_bound: f64,
    holder_exponent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<String>,
}

/// Declarative description of an interaction kernel together with its
/// declared sup bound and regularity.
#[derive(Clone, Debug)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub params: Vec<f64>,
    pub sup_bound: f64,
    pub holder_exponent: f64,
    pub table_path: Option<String>,
    pub grid: Option<KernelTable>,
}

impl Serialize for KernelSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        KernelSpecFile {
            family: self.family,
            params: self.params.clone(),
            sup_bound: self.sup_bound,
            holder_exponent: self.holder_exponent,
            table: self.table_path.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for KernelSpec {
    /// Deserializes the declarative part; a tabulated kernel's grid file is
    /// loaded separately via [`KernelSpec::resolve_table`].
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = KernelSpecFile::deserialize(deserializer)?;
        Ok(Self {
            family: file.family,
            params: file.params,
            sup_bound: file.sup_bound,
            holder_exponent: file.holder_exponent,
            table_path: file.table,
            grid: None,
        })
    }
}

impl KernelSpec {
    pub fn zero() -> Self {
        Self::build(KernelFamily::Zero, vec![], 0.0, 1.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::build(KernelFamily::Constant, vec![c], c.abs(), 1.0)
    }

    /// `b = c exp(-a x²) exp(-d y²)`.
    pub fn separable_product(c: f64, a: f64, d: f64) -> Self {
        Self::build(KernelFamily::SeparableProduct, vec![c, a, d], c.abs(), 1.0)
    }

    /// `b = κ / (1 + (x-y)²)`.
    pub fn rational_attractive(kappa: f64) -> Self {
        Self::build(KernelFamily::RationalAttractive, vec![kappa], kappa.abs(), 1.0)
    }

    pub fn tabulated(grid: KernelTable, sup_bound: f64, holder_exponent: f64) -> Self {
        Self {
            family: KernelFamily::Tabulated,
            params: vec![],
            sup_bound,
            holder_exponent,
            table_path: None,
            grid: Some(grid),
        }
    }

    fn build(family: KernelFamily, params: Vec<f64>, sup_bound: f64, holder: f64) -> Self {
        Self {
            family,
            params,
            sup_bound,
            holder_exponent: holder,
            table_path: None,
            grid: None,
        }
    }

    /// Parse from JSON; `base_dir` resolves a relative `table` path.
    pub fn from_json(json: &str, base_dir: Option<&Path>) -> Result<Self, KernelError> {
        let mut spec: Self = serde_json::from_str(json)?;
        spec.resolve_table(base_dir)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Load the grid file behind a tabulated kernel, if not already loaded.
    pub fn resolve_table(&mut self, base_dir: Option<&Path>) -> Result<(), KernelError> {
        if self.family != KernelFamily::Tabulated || self.grid.is_some() {
            return Ok(());
        }
        let rel = self.table_path.as_ref().ok_or(KernelError::MissingTable)?;
        let path = match base_dir {
            Some(dir) => dir.join(rel),
            None => Path::new(rel).to_path_buf(),
        };
        self.grid = Some(KernelTable::from_csv_file(&path)?);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = KernelSpecFile {
            family: self.family,
            params: self.params.clone(),
            sup_bound: self.sup_bound,
            holder_exponent: self.holder_exponent,
            table: self.table_path.clone(),
        };
        serde_json::to_string(&file).expect("kernel spec serialization")
    }

    /// Check structural invariants (parameter counts, bound declarations).
    pub fn validate(&self) -> Result<(), KernelError> {
        if !self.sup_bound.is_finite() || self.sup_bound < 0.0 {
            return Err(KernelError::BadSupBound(self.sup_bound));
        }
        if !(self.holder_exponent > 0.0 && self.holder_exponent <= 1.0) {
            return Err(KernelError::BadHolder(self.holder_exponent));
        }
        let expected = match self.family {
            KernelFamily::Zero | KernelFamily::Tabulated => 0,
            KernelFamily::Constant | KernelFamily::RationalAttractive => 1,
            KernelFamily::SeparableProduct => 3,
        };
        if self.params.len() != expected {
            return Err(KernelError::ParamCount {
                family: self.family,
                expected,
                got: self.params.len(),
            });
        }
        for (index, &value) in self.params.iter().enumerate() {
            if !value.is_finite() {
                return Err(KernelError::BadParam { index, value });
            }
        }
        match self.family {
            KernelFamily::Zero => {
                if self.sup_bound != 0.0 {
                    return Err(KernelError::ZeroBound(self.sup_bound));
                }
            }
            KernelFamily::SeparableProduct => {
                for index in 1..=2 {
                    if self.params[index] < 0.0 {
                        return Err(KernelError::BadParam {
                            index,
                            value: self.params[index],
                        });
                    }
                }
            }
            KernelFamily::Tabulated => {
                if self.grid.is_none() {
                    return Err(KernelError::MissingTable);
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Evaluate `b(t, x, y)`. The spec must be valid; evaluation itself
    /// never fails.
    #[inline]
    pub fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        match self.family {
            KernelFamily::Zero => 0.0,
            KernelFamily::Constant => self.params[0],
            KernelFamily::SeparableProduct => {
                let (c, a, d) = (self.params[0], self.params[1], self.params[2]);
                c * (-a * x * x).exp() * (-d * y * y).exp()
            }
            KernelFamily::RationalAttractive => {
                let dxy = x - y;
                self.params[0] / (1.0 + dxy * dxy)
            }
            KernelFamily::Tabulated => self
                .grid
                .as_ref()
                .expect("validated tabulated kernel")
                .eval(t, x, y),
        }
    }

    /// Sample `n` points and reject the spec if any evaluation exceeds the
    /// declared sup bound.
    pub fn probe_bound(&self, n: usize, seed: u64) -> Result<(), KernelError> {
        self.validate()?;
        let mut stream = ParticleStream::new(seed, 0);
        // Sample over the tabulated axes when present, a generous default
        // box otherwise.
        let (t_range, x_range, y_range) = match &self.grid {
            Some(g) => (
                pad_range(&g.t_axis),
                pad_range(&g.x_axis),
                pad_range(&g.y_axis),
            ),
            None => ((0.0, 10.0), (-20.0, 20.0), (-20.0, 20.0)),
        };
        for _ in 0..n {
            let t = sample(&mut stream, t_range);
            let x = sample(&mut stream, x_range);
            let y = sample(&mut stream, y_range);
            let value = self.eval(t, x, y);
            if value.abs() > self.sup_bound + 1e-12 {
                return Err(KernelError::BoundViolated {
                    t,
                    x,
                    y,
                    value,
                    bound: self.sup_bound,
                });
            }
        }
        Ok(())
    }
}

fn pad_range(axis: &[f64]) -> (f64, f64) {
    let lo = axis[0];
    let hi = axis[axis.len() - 1];
    let pad = 0.25 * (hi - lo).abs().max(1.0);
    (lo - pad, hi + pad)
}

fn sample(stream: &mut ParticleStream, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * stream.next_block().uniform
}

/// Mean-field drift `∫₀^∞ b(t, x, y) u(y) dy` by the trapezoid rule on a
/// uniform grid.
///
/// This equals the drift functional `B(t, x, μ, a)` evaluated at the
/// self-consistent pair `μ = (1-β)δ₀ + u dx`, `a = β`: the atom at the
/// origin contributes `b(t,x,0)(1-β)`, which the functional's correction
/// term `-b(t,x,0)(1-a)` cancels exactly.
pub fn mean_field_drift(
    spec: &KernelSpec,
    t: f64,
    x: f64,
    grid: &[f64],
    density: &[f64],
    beta: f64,
) -> Result<f64, KernelError> {
    if grid.len() < 2 || density.len() != grid.len() {
        return Err(KernelError::GridTooSmall);
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(KernelError::BadBeta(beta));
    }
    for (index, &value) in density.iter().enumerate() {
        if value < -1e-12 || !value.is_finite() {
            return Err(KernelError::NegativeDensity { index, value });
        }
    }
    let h = grid[1] - grid[0];
    let mass = crate::quad::trapezoid_uniform(density, h);
    let tol = (10.0 * h * h).max(1e-8);
    if (mass - beta).abs() > tol {
        return Err(KernelError::MassMismatch { mass, beta, tol });
    }
    match spec.family {
        KernelFamily::Zero => Ok(0.0),
        KernelFamily::Constant => Ok(spec.params[0] * beta),
        _ => {
            let mut weighted = Vec::with_capacity(grid.len());
            for (y, &uy) in grid.iter().zip(density) {
                weighted.push(spec.eval(t, x, *y) * uy);
            }
            Ok(crate::quad::trapezoid_uniform(&weighted, h))
        }
    }
}

/// Empirical drift of particle `i` (0-based): `(1/N) Σ_j b(t, x_i, x_j) 1{x_j > 0}`.
///
/// The generic families sum in index order, so the result is bit-identical
/// to a plain double loop.
pub fn empirical_drift(
    spec: &KernelSpec,
    t: f64,
    i: usize,
    positions: &[f64],
) -> Result<f64, KernelError> {
    let n = positions.len();
    if n == 0 {
        return Err(KernelError::EmptyPositions);
    }
    if i >= n {
        return Err(KernelError::IndexOutOfRange { index: i, n });
    }
    Ok(empirical_drift_range(spec, t, positions[i], positions, 0, n))
}

/// Shared inner sum restricted to indices `lo..hi`; the divisor stays the
/// full vector length.
pub(crate) fn empirical_drift_range(
    spec: &KernelSpec,
    t: f64,
    x_i: f64,
    positions: &[f64],
    lo: usize,
    hi: usize,
) -> f64 {
    let n = positions.len() as f64;
    match spec.family {
        KernelFamily::Zero => 0.0,
        KernelFamily::Constant => {
            let active = positions[lo..hi].iter().filter(|&&p| p > 0.0).count();
            spec.params[0] * (active as f64 / n)
        }
        _ => {
            let mut acc = 0.0;
            for &p in &positions[lo..hi] {
                if p > 0.0 {
                    acc += spec.eval(t, x_i, p);
                }
            }
            acc / n
        }
    }
}

/// Regularization width for the smooth indicator; must lie in (0, 1].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SmoothIndicatorParam {
    pub eta: f64,
}

#[derive(Debug, thiserror::Error)]
#[error("smooth indicator width must lie in (0, 1], got {0}")]
pub struct BadIndicatorWidth(pub f64);

impl SmoothIndicatorParam {
    pub fn new(eta: f64) -> Result<Self, BadIndicatorWidth> {
        if eta > 0.0 && eta <= 1.0 {
            Ok(Self { eta })
        } else {
            Err(BadIndicatorWidth(eta))
        }
    }
}

/// Twice continuously differentiable, monotone surrogate for `1{x > 0}`:
/// `f_η(x) = S(clamp(x/η, 0, 1))` with `S(u) = 10u³ - 15u⁴ + 6u⁵`.
///
/// `S` has vanishing first and second derivatives at both ends, so `f_η`
/// is C² on the whole line, takes values in [0, 1], and agrees with the
/// indicator outside `(0, η)`.
pub fn smooth_indicator(param: SmoothIndicatorParam, x: f64) -> f64 {
    let u = (x / param.eta).clamp(0.0, 1.0);
    ((6.0 * u - 15.0) * u + 10.0) * u * u * u
}
