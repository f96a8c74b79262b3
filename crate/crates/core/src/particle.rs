//! Euler-Maruyama simulation of the absorbed interacting particle system,
//! reference systems with partially decoupled particles, and exponential
//! Girsanov weights.
//!
//! Dynamics on a uniform grid with step `Δt = T / n_steps`: an active
//! particle updates by
//!
//! ```text
//! x' = x + drift(t_k, x) Δt + √(2Δt) ξ,   ξ ~ N(0, 1),
//! ```
//!
//! where the drift averages the kernel over the step-`k` snapshot of the
//! active particles. A particle is absorbed when its endpoint is
//! nonpositive, or — with `bridge_correction` — with the Brownian-bridge
//! exit probability `exp(-x·x'/Δt)` (diffusion coefficient √2) when both
//! endpoints are positive. Absorbed particles are pinned to exactly 0 and
//! drop out of every subsequent drift sum.
//!
//! Randomness comes from per-particle counter-based streams
//! ([`crate::streams`]), so runs are reproducible for any thread count and
//! the Brownian increments of a finished run can be replayed to evaluate
//! Girsanov weights.

use crate::kernels::{empirical_drift_range, KernelError, KernelFamily, KernelSpec};
use crate::streams::ParticleStream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("n_particles must be at least 1")]
    NoParticles,
    #[error("horizon and n_steps must be positive")]
    BadGrid,
    #[error("stability guard violated: dt * sup_bound = {0} (must be < 0.1)")]
    StabilityGuard(f64),
    #[error("initial law must be supported on (0, infinity): {0}")]
    BadInitialLaw(String),
    #[error("non-positive initial sample for particle {index}: {value}")]
    NonPositiveInitial { index: usize, value: f64 },
    #[error("reference particle count r = {r} must satisfy 1 <= r < N = {n}")]
    BadReferenceCount { r: usize, n: usize },
    #[error("paths were not produced by simulate_reference with r = {expected:?} (got {got:?})")]
    ReferenceMismatch {
        expected: Option<usize>,
        got: Option<usize>,
    },
    #[error("rng manifest is missing or inconsistent; cannot replay increments")]
    MissingRngManifest,
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("config json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Initial distribution of the particles; must charge only `(0, ∞)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum InitialLaw {
    Point { z: f64 },
    Lognormal { m: f64, s: f64 },
    Uniform { a: f64, b: f64 },
    /// Quantile table: `values[i]` is the quantile at `i / (len - 1)`;
    /// draws interpolate linearly in the uniform variable.
    TabulatedQuantile { values: Vec<f64> },
}

impl InitialLaw {
    fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::BadInitialLaw(msg));
        match self {
            InitialLaw::Point { z } => {
                if !(*z > 0.0) || !z.is_finite() {
                    return bad(format!("point mass at {z}"));
                }
            }
            InitialLaw::Lognormal { m, s } => {
                if !m.is_finite() || !s.is_finite() || *s < 0.0 {
                    return bad(format!("lognormal({m}, {s})"));
                }
            }
            InitialLaw::Uniform { a, b } => {
                if !(*a > 0.0 && b > a) {
                    return bad(format!("uniform({a}, {b})"));
                }
            }
            InitialLaw::TabulatedQuantile { values } => {
                if values.is_empty()
                    || values.iter().any(|v| !(*v > 0.0) || !v.is_finite())
                    || values.windows(2).any(|w| w[1] < w[0])
                {
                    return bad("quantile table must be nondecreasing and positive".into());
                }
            }
        }
        Ok(())
    }

    fn sample(&self, block: crate::streams::Block) -> f64 {
        match self {
            InitialLaw::Point { z } => *z,
            InitialLaw::Lognormal { m, s } => (m + s * block.normal).exp(),
            InitialLaw::Uniform { a, b } => a + (b - a) * block.uniform,
            InitialLaw::TabulatedQuantile { values } => {
                if values.len() == 1 {
                    return values[0];
                }
                let pos = block.uniform * (values.len() - 1) as f64;
                let i = (pos.floor() as usize).min(values.len() - 2);
                let frac = pos - i as f64;
                values[i] + frac * (values[i + 1] - values[i])
            }
        }
    }
}

/// Full description of one particle-system run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_particles: usize,
    pub horizon: f64,
    pub n_steps: usize,
    pub kernel: KernelSpec,
    pub initial_law: InitialLaw,
    pub seed: u64,
    pub bridge_correction: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_particles == 0 {
            return Err(SimError::NoParticles);
        }
        if !(self.horizon > 0.0) || self.n_steps == 0 {
            return Err(SimError::BadGrid);
        }
        self.kernel.validate()?;
        self.initial_law.validate()?;
        let guard = self.dt() * self.kernel.sup_bound;
        if !(guard < 0.1) {
            return Err(SimError::StabilityGuard(guard));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn from_json(json: &str, base_dir: Option<&std::path::Path>) -> Result<Self, SimError> {
        let mut config: Self = serde_json::from_str(json)?;
        config.kernel.resolve_table(base_dir)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sim config serialization")
    }
}

/// Identifiers needed to replay every particle's stream.
#[derive(Clone, Debug, Default)]
pub struct RngManifest {
    pub seed: u64,
    pub stream_ids: Vec<u64>,
}

/// Seeded trajectories on the uniform grid, with absorption bookkeeping.
#[derive(Clone, Debug)]
pub struct ParticlePaths {
    pub config: SimConfig,
    /// `(n_steps + 1) × N`, step-major.
    positions: Vec<f64>,
    /// First step index at which the particle sits at 0; `n_steps + 1`
    /// means it never absorbed.
    pub absorption_step: Vec<usize>,
    pub rng_manifest: RngManifest,
    /// `Some(r)` when produced by [`simulate_reference`].
    pub reference_r: Option<usize>,
}

impl ParticlePaths {
    pub fn n_particles(&self) -> usize {
        self.config.n_particles
    }

    pub fn n_steps(&self) -> usize {
        self.config.n_steps
    }

    /// Snapshot of all positions at step `k`.
    pub fn positions_at(&self, k: usize) -> &[f64] {
        let n = self.config.n_particles;
        &self.positions[k * n..(k + 1) * n]
    }

    pub fn position(&self, k: usize, i: usize) -> f64 {
        self.positions[k * self.config.n_particles + i]
    }

    pub fn terminal(&self) -> &[f64] {
        self.positions_at(self.config.n_steps)
    }

    /// Fraction of particles still active at each grid time.
    pub fn survival_fractions(&self) -> Vec<f64> {
        let n = self.config.n_particles as f64;
        (0..=self.config.n_steps)
            .map(|k| self.positions_at(k).iter().filter(|&&x| x > 0.0).count() as f64 / n)
            .collect()
    }
}

/// Terminal-only summary for large runs where storing full paths would be
/// wasteful.
#[derive(Clone, Debug)]
pub struct SimSummary {
    pub config: SimConfig,
    pub terminal: Vec<f64>,
    /// Fraction of active particles at each grid time.
    pub survival: Vec<f64>,
    pub absorption_step: Vec<usize>,
}

/// Sentinel for "never absorbed".
pub fn never(config: &SimConfig) -> usize {
    config.n_steps + 1
}

/// Per-step drift evaluator over the snapshot, restricted to source indices
/// `lo..n`. Constant and separable kernels use one-pass accumulators; other
/// families fall back to the quadratic loop.
enum StepDrift<'a> {
    Zero,
    Constant { value: f64 },
    Separable { pre: f64, a: f64 },
    Generic {
        spec: &'a KernelSpec,
        t: f64,
        snapshot: &'a [f64],
        lo: usize,
    },
}

impl<'a> StepDrift<'a> {
    fn prepare(spec: &'a KernelSpec, t: f64, snapshot: &'a [f64], lo: usize) -> Self {
        let n = snapshot.len() as f64;
        match spec.family {
            KernelFamily::Zero => StepDrift::Zero,
            KernelFamily::Constant => {
                let active = snapshot[lo..].iter().filter(|&&x| x > 0.0).count();
                StepDrift::Constant {
                    value: spec.params[0] * (active as f64 / n),
                }
            }
            KernelFamily::SeparableProduct => {
                let (c, a, d) = (spec.params[0], spec.params[1], spec.params[2]);
                let mut s = 0.0;
                for &x in &snapshot[lo..] {
                    if x > 0.0 {
                        s += (-d * x * x).exp();
                    }
                }
                StepDrift::Separable { pre: c * s / n, a }
            }
            _ => StepDrift::Generic {
                spec,
                t,
                snapshot,
                lo,
            },
        }
    }

    #[inline]
    fn eval(&self, x_i: f64) -> f64 {
        match self {
            StepDrift::Zero => 0.0,
            StepDrift::Constant { value } => *value,
            StepDrift::Separable { pre, a } => pre * (-a * x_i * x_i).exp(),
            StepDrift::Generic {
                spec,
                t,
                snapshot,
                lo,
            } => empirical_drift_range(spec, *t, x_i, snapshot, *lo, snapshot.len()),
        }
    }
}

struct CoreOutput {
    rows: Option<Vec<f64>>,
    terminal: Vec<f64>,
    survival: Vec<f64>,
    absorption_step: Vec<usize>,
}

fn simulate_core(
    config: &SimConfig,
    reference_r: Option<usize>,
    stream_ids: &[u64],
    keep_rows: bool,
) -> Result<CoreOutput, SimError> {
    config.validate()?;
    let n = config.n_particles;
    if let Some(r) = reference_r {
        if r == 0 || r >= n {
            return Err(SimError::BadReferenceCount { r, n });
        }
    }
    let n_steps = config.n_steps;
    let dt = config.dt();
    let sqrt_2dt = (2.0 * dt).sqrt();
    let never = n_steps + 1;

    let mut streams: Vec<ParticleStream> = stream_ids
        .iter()
        .map(|&id| ParticleStream::new(config.seed, id))
        .collect();

    // Initial draws are sequential so error reporting stays simple.
    let mut current = vec![0.0f64; n];
    for (i, (slot, stream)) in current.iter_mut().zip(streams.iter_mut()).enumerate() {
        let z = config.initial_law.sample(stream.next_block());
        if !(z > 0.0) {
            return Err(SimError::NonPositiveInitial { index: i, value: z });
        }
        *slot = z;
    }

    let mut rows = if keep_rows {
        let mut rows = Vec::with_capacity((n_steps + 1) * n);
        rows.extend_from_slice(&current);
        Some(rows)
    } else {
        None
    };
    let mut survival = Vec::with_capacity(n_steps + 1);
    survival.push(1.0);
    let mut absorption_step = vec![never; n];
    let mut next = vec![0.0f64; n];

    for k in 0..n_steps {
        let t_k = k as f64 * dt;
        // The drift snapshot is the step-k row, read-only during the update.
        let lo = reference_r.unwrap_or(0);
        let interacting = StepDrift::prepare(&config.kernel, t_k, &current, lo);
        let current_ref: &[f64] = &current;
        next.par_iter_mut()
            .zip(streams.par_iter_mut())
            .zip(absorption_step.par_iter_mut())
            .enumerate()
            .for_each(|(i, ((slot, stream), absorbed))| {
                // Streams advance one block per step for every particle,
                // absorbed or not, so replay positions are step-indexed.
                let block = stream.next_block();
                let x = current_ref[i];
                if x == 0.0 {
                    *slot = 0.0;
                    return;
                }
                let drift = if reference_r.is_some_and(|r| i < r) {
                    0.0
                } else {
                    interacting.eval(x)
                };
                let x_new = x + drift * dt + sqrt_2dt * block.normal;
                let hit = x_new <= 0.0
                    || (config.bridge_correction && block.uniform < (-x * x_new / dt).exp());
                if hit {
                    *slot = 0.0;
                    *absorbed = k + 1;
                } else {
                    *slot = x_new;
                }
            });
        std::mem::swap(&mut current, &mut next);
        if let Some(rows) = rows.as_mut() {
            rows.extend_from_slice(&current);
        }
        survival.push(current.iter().filter(|&&x| x > 0.0).count() as f64 / n as f64);
    }

    Ok(CoreOutput {
        rows,
        terminal: current,
        survival,
        absorption_step,
    })
}

fn identity_ids(n: usize) -> Vec<u64> {
    (0..n as u64).collect()
}

/// Simulate the interacting system, keeping full paths.
pub fn simulate(config: &SimConfig) -> Result<ParticlePaths, SimError> {
    simulate_with_stream_ids(config, &identity_ids(config.n_particles))
}

/// Like [`simulate`] but with explicit stream assignments (exchangeability
/// experiments permute these).
pub(crate) fn simulate_with_stream_ids(
    config: &SimConfig,
    stream_ids: &[u64],
) -> Result<ParticlePaths, SimError> {
    let out = simulate_core(config, None, stream_ids, true)?;
    Ok(ParticlePaths {
        config: config.clone(),
        positions: out.rows.expect("rows requested"),
        absorption_step: out.absorption_step,
        rng_manifest: RngManifest {
            seed: config.seed,
            stream_ids: stream_ids.to_vec(),
        },
        reference_r: None,
    })
}

/// Simulate without storing paths; returns the terminal snapshot and the
/// survival curve.
pub fn simulate_summary(config: &SimConfig) -> Result<SimSummary, SimError> {
    let out = simulate_core(config, None, &identity_ids(config.n_particles), false)?;
    Ok(SimSummary {
        config: config.clone(),
        terminal: out.terminal,
        survival: out.survival,
        absorption_step: out.absorption_step,
    })
}

/// Simulate the reference system: the first `r` particles are pure stopped
/// Brownian motions, the remaining ones interact only among themselves
/// (sums over `j > r`, divisor still `N`).
pub fn simulate_reference(config: &SimConfig, r: usize) -> Result<ParticlePaths, SimError> {
    let ids = identity_ids(config.n_particles);
    let out = simulate_core(config, Some(r), &ids, true)?;
    Ok(ParticlePaths {
        config: config.clone(),
        positions: out.rows.expect("rows requested"),
        absorption_step: out.absorption_step,
        rng_manifest: RngManifest {
            seed: config.seed,
            stream_ids: ids,
        },
        reference_r: Some(r),
    })
}

/// Exponential weight of the partial change of measure that restores the
/// interactions removed by [`simulate_reference`].
#[derive(Clone, Copy, Debug)]
pub struct GirsanovWeight {
    pub r: usize,
    pub log_weight: f64,
    /// `Σ_k |β(t_k)|² Δt`.
    pub quadratic_variation: f64,
}

impl GirsanovWeight {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

/// Drift vector of the partial transform at one step: full empirical drift
/// for the first `r` coordinates, the `(1/N) Σ_{j<r}` coupling term for the
/// rest.
fn beta_component(
    kernel: &KernelSpec,
    t: f64,
    i: usize,
    r: usize,
    snapshot: &[f64],
) -> f64 {
    if i < r {
        empirical_drift_range(kernel, t, snapshot[i], snapshot, 0, snapshot.len())
    } else {
        empirical_drift_range(kernel, t, snapshot[i], snapshot, 0, r)
    }
}

/// Compute the Girsanov weight of a reference run by replaying the stored
/// Brownian increments:
///
/// ```text
/// log Z = Σ_k β(t_k) · ΔW_k - ½ Σ_k |β(t_k)|² Δt,   ΔW_{i,k} = √Δt ξ_{i,k}.
/// ```
///
/// `β(t_k)` is evaluated on the pre-increment snapshot, so the discrete
/// weight has exactly unit mean.
pub fn girsanov_weight(
    ref_paths: &ParticlePaths,
    r: usize,
    kernel: &KernelSpec,
) -> Result<GirsanovWeight, SimError> {
    let n = ref_paths.n_particles();
    if ref_paths.reference_r != Some(r) {
        return Err(SimError::ReferenceMismatch {
            expected: Some(r),
            got: ref_paths.reference_r,
        });
    }
    if ref_paths.rng_manifest.stream_ids.len() != n {
        return Err(SimError::MissingRngManifest);
    }
    kernel.validate()?;
    let n_steps = ref_paths.n_steps();
    let dt = ref_paths.config.dt();
    let sqrt_dt = dt.sqrt();
    let mut dot = 0.0;
    let mut qv = 0.0;
    for i in 0..n {
        let mut stream =
            ParticleStream::new(ref_paths.rng_manifest.seed, ref_paths.rng_manifest.stream_ids[i]);
        stream.skip_blocks(1); // initial draw
        for k in 0..n_steps {
            let xi = stream.next_block().normal;
            let snapshot = ref_paths.positions_at(k);
            let beta = beta_component(kernel, k as f64 * dt, i, r, snapshot);
            dot += beta * sqrt_dt * xi;
            qv += beta * beta * dt;
        }
    }
    Ok(GirsanovWeight {
        r,
        log_weight: dot - 0.5 * qv,
        quadratic_variation: qv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    fn base_config(n: usize, kernel: KernelSpec, seed: u64) -> SimConfig {
        SimConfig {
            n_particles: n,
            horizon: 1.0,
            n_steps: 100,
            kernel,
            initial_law: InitialLaw::Point { z: 1.0 },
            seed,
            bridge_correction: false,
        }
    }

    #[test]
    fn config_validation_guards() {
        let mut cfg = base_config(10, KernelSpec::constant(1.0), 1);
        cfg.validate().unwrap();
        cfg.n_steps = 5; // dt = 0.2, dt * sup = 0.2 >= 0.1
        assert!(matches!(cfg.validate(), Err(SimError::StabilityGuard(_))));
        let mut cfg = base_config(10, KernelSpec::zero(), 1);
        cfg.initial_law = InitialLaw::Point { z: -1.0 };
        assert!(matches!(cfg.validate(), Err(SimError::BadInitialLaw(_))));
        let mut cfg = base_config(0, KernelSpec::zero(), 1);
        cfg.n_particles = 0;
        assert!(matches!(cfg.validate(), Err(SimError::NoParticles)));
    }

    #[test]
    fn sim_config_json_round_trip() {
        let cfg = SimConfig {
            n_particles: 7,
            horizon: 2.0,
            n_steps: 50,
            kernel: KernelSpec::rational_attractive(0.5),
            initial_law: InitialLaw::Lognormal { m: 0.0, s: 0.3 },
            seed: 99,
            bridge_correction: true,
        };
        let json = cfg.to_json();
        let back = SimConfig::from_json(&json, None).unwrap();
        assert_eq!(back.n_particles, 7);
        assert_eq!(back.kernel.family, KernelFamily::RationalAttractive);
        assert!(back.bridge_correction);
    }

    #[test]
    fn single_particle_zero_kernel_is_a_stopped_random_walk() {
        // Reconstruct the expected path straight from the stream.
        let cfg = base_config(1, KernelSpec::zero(), 42);
        let paths = simulate(&cfg).unwrap();
        let dt = cfg.dt();
        let mut stream = ParticleStream::new(42, 0);
        let z = cfg.initial_law.sample(stream.next_block());
        let mut x = z;
        let mut absorbed = false;
        for k in 0..cfg.n_steps {
            let block = stream.next_block();
            if !absorbed {
                let cand = x + (2.0 * dt).sqrt() * block.normal;
                if cand <= 0.0 {
                    absorbed = true;
                    x = 0.0;
                } else {
                    x = cand;
                }
            }
            assert_eq!(paths.position(k + 1, 0).to_bits(), x.to_bits(), "step {k}");
        }
    }

    #[test]
    fn absorption_is_permanent_and_positions_positive_before() {
        let mut cfg = base_config(500, KernelSpec::constant(-0.5), 7);
        cfg.bridge_correction = true;
        let paths = simulate(&cfg).unwrap();
        for i in 0..cfg.n_particles {
            let a = paths.absorption_step[i];
            for k in 0..=cfg.n_steps {
                let x = paths.position(k, i);
                if k < a {
                    assert!(x > 0.0, "particle {i} nonpositive before absorption");
                } else {
                    assert_eq!(x, 0.0, "particle {i} not pinned after absorption");
                }
            }
        }
    }

    #[test]
    fn per_step_drift_is_bounded_by_sup_norm() {
        let cfg = base_config(200, KernelSpec::rational_attractive(1.0), 3);
        let paths = simulate(&cfg).unwrap();
        let dt = cfg.dt();
        for k in 0..cfg.n_steps {
            let snap = paths.positions_at(k);
            for i in 0..cfg.n_particles {
                if snap[i] > 0.0 {
                    let d = crate::kernels::empirical_drift(&cfg.kernel, k as f64 * dt, i, snap)
                        .unwrap();
                    assert!(d.abs() <= cfg.kernel.sup_bound + 1e-12);
                }
            }
        }
    }

    #[test]
    fn identical_seeds_are_bitwise_identical_across_thread_counts() {
        let cfg = base_config(300, KernelSpec::rational_attractive(1.0), 11);
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool8 = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let a = pool1.install(|| simulate(&cfg)).unwrap();
        let b = pool8.install(|| simulate(&cfg)).unwrap();
        assert_eq!(a.positions.len(), b.positions.len());
        for (x, y) in a.positions.iter().zip(&b.positions) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(a.absorption_step, b.absorption_step);
    }

    #[test]
    fn exchangeability_under_stream_permutation() {
        let mut cfg = base_config(5, KernelSpec::rational_attractive(1.0), 13);
        cfg.initial_law = InitialLaw::Uniform { a: 0.5, b: 2.0 };
        let perm: [usize; 5] = [2, 0, 4, 1, 3];
        let ids: Vec<u64> = (0..5u64).collect();
        let permuted_ids: Vec<u64> = perm.iter().map(|&p| ids[p]).collect();
        let base = simulate_with_stream_ids(&cfg, &ids).unwrap();
        let permuted = simulate_with_stream_ids(&cfg, &permuted_ids).unwrap();
        for k in 0..=cfg.n_steps {
            for (i, &p) in perm.iter().enumerate() {
                assert_eq!(
                    permuted.position(k, i).to_bits(),
                    base.position(k, p).to_bits(),
                    "permutation mismatch at step {k}"
                );
            }
        }
    }

    #[test]
    fn bridge_corrected_survival_matches_reflection_principle() {
        // With zero drift the bridge-corrected scheme samples the exit event
        // exactly, so the only error is Monte Carlo noise.
        let mut cfg = base_config(20_000, KernelSpec::zero(), 17);
        cfg.n_steps = 50;
        cfg.bridge_correction = true;
        let summary = simulate_summary(&cfg).unwrap();
        let alpha_hat = *summary.survival.last().unwrap();
        let alpha = stats::erf(0.5);
        let se = stats::binomial_stderr(alpha, cfg.n_particles);
        assert!(
            (alpha_hat - alpha).abs() <= 3.0 * se,
            "alpha_hat {alpha_hat} vs {alpha} (3se = {})",
            3.0 * se
        );
    }

    #[test]
    fn naive_absorption_overestimates_survival() {
        let mut cfg = base_config(20_000, KernelSpec::zero(), 19);
        cfg.n_steps = 50; // coarse grid: strong discrete-monitoring bias
        cfg.bridge_correction = false;
        let summary = simulate_summary(&cfg).unwrap();
        let alpha_hat = *summary.survival.last().unwrap();
        let alpha = stats::erf(0.5);
        let se = stats::binomial_stderr(alpha, cfg.n_particles);
        assert!(
            alpha_hat > alpha + 5.0 * se,
            "expected upward bias, got {alpha_hat} vs {alpha}"
        );
    }

    #[test]
    fn terminal_marginal_matches_the_stopped_law() {
        // The terminal law is mixed: an atom at 0 plus a continuous part.
        // Check the atom binomially and the positive part by KS against the
        // conditional CDF.
        let mut cfg = base_config(10_000, KernelSpec::zero(), 23);
        cfg.n_steps = 80;
        cfg.bridge_correction = true;
        let summary = simulate_summary(&cfg).unwrap();
        let (z, t): (f64, f64) = (1.0, 1.0);
        let alpha = stats::erf(z / (2.0 * t.sqrt()));
        let zeros = summary.terminal.iter().filter(|&&x| x == 0.0).count();
        let atom_hat = zeros as f64 / cfg.n_particles as f64;
        let se = stats::binomial_stderr(1.0 - alpha, cfg.n_particles);
        assert!(
            (atom_hat - (1.0 - alpha)).abs() <= 3.0 * se,
            "atom mass {atom_hat} vs {}",
            1.0 - alpha
        );
        let mut xs: Vec<f64> = summary
            .terminal
            .iter()
            .copied()
            .filter(|&x| x > 0.0)
            .collect();
        xs.sort_by(|a, b| a.total_cmp(b));
        let s = (2.0 * t).sqrt();
        let cdf = |x: f64| {
            let whole = 1.0 - stats::normal_cdf((z - x) / s) + stats::normal_cdf((-z - x) / s);
            ((whole - (1.0 - alpha)) / alpha).clamp(0.0, 1.0)
        };
        let d = stats::ks_statistic(&xs, cdf);
        assert!(
            d < stats::ks_critical_01(xs.len()),
            "KS statistic {d} too large (crit {})",
            stats::ks_critical_01(xs.len())
        );
    }

    #[test]
    fn reference_with_zero_kernel_equals_plain_simulation() {
        let cfg = base_config(50, KernelSpec::zero(), 29);
        let plain = simulate(&cfg).unwrap();
        let reference = simulate_reference(&cfg, 1).unwrap();
        for (a, b) in plain.positions.iter().zip(&reference.positions) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn reference_tail_drift_is_order_one_over_n() {
        // r = N - 1: the last particle's simulation drift is a 1/N-scale
        // sum over the single remaining index.
        let n = 40;
        let cfg = base_config(n, KernelSpec::constant(1.0), 31);
        let r = n - 1;
        let paths = simulate_reference(&cfg, r).unwrap();
        for k in 0..cfg.n_steps {
            let snap = paths.positions_at(k);
            let d = empirical_drift_range(&cfg.kernel, 0.0, snap[r], snap, r, n);
            assert!(d.abs() <= cfg.kernel.sup_bound / n as f64 + 1e-15);
        }
    }

    #[test]
    fn reference_two_particle_hand_stepped_recursion() {
        // N=2, r=1, constant kernel: particle 2's drift is (c/2)·1{x2 > 0}.
        let c = 0.6;
        let mut cfg = base_config(2, KernelSpec::constant(c), 37);
        cfg.n_steps = 3;
        cfg.horizon = 0.03;
        let dt = cfg.dt();
        let paths = simulate_reference(&cfg, 1).unwrap();
        let mut stream = ParticleStream::new(37, 1);
        let z = cfg.initial_law.sample(stream.next_block());
        let mut x = z;
        for k in 0..3 {
            let block = stream.next_block();
            if x > 0.0 {
                let drift = if x > 0.0 { c / 2.0 } else { 0.0 };
                let cand = x + drift * dt + (2.0 * dt).sqrt() * block.normal;
                x = if cand <= 0.0 { 0.0 } else { cand };
            }
            assert_eq!(paths.position(k + 1, 1).to_bits(), x.to_bits());
        }
    }

    #[test]
    fn reference_r_out_of_range_is_rejected() {
        let cfg = base_config(5, KernelSpec::zero(), 1);
        assert!(matches!(
            simulate_reference(&cfg, 0),
            Err(SimError::BadReferenceCount { .. })
        ));
        assert!(matches!(
            simulate_reference(&cfg, 5),
            Err(SimError::BadReferenceCount { .. })
        ));
    }

    #[test]
    fn girsanov_zero_kernel_weight_is_one() {
        let cfg = base_config(20, KernelSpec::zero(), 41);
        let paths = simulate_reference(&cfg, 2).unwrap();
        let w = girsanov_weight(&paths, 2, &cfg.kernel).unwrap();
        assert_eq!(w.log_weight, 0.0);
        assert_eq!(w.quadratic_variation, 0.0);
        assert_eq!(w.weight(), 1.0);
    }

    #[test]
    fn girsanov_mismatched_r_and_missing_manifest_error() {
        let cfg = base_config(10, KernelSpec::constant(0.5), 43);
        let reference = simulate_reference(&cfg, 2).unwrap();
        assert!(matches!(
            girsanov_weight(&reference, 3, &cfg.kernel),
            Err(SimError::ReferenceMismatch { .. })
        ));
        let plain = simulate(&cfg).unwrap();
        assert!(matches!(
            girsanov_weight(&plain, 2, &cfg.kernel),
            Err(SimError::ReferenceMismatch { .. })
        ));
        let mut broken = simulate_reference(&cfg, 2).unwrap();
        broken.rng_manifest.stream_ids.pop();
        assert!(matches!(
            girsanov_weight(&broken, 2, &cfg.kernel),
            Err(SimError::MissingRngManifest)
        ));
    }

    #[test]
    fn girsanov_quadratic_variation_respects_uniform_bound() {
        let c = 1.0;
        let mut cfg = base_config(50, KernelSpec::constant(c), 47);
        cfg.n_steps = 100;
        for r in [1usize, 3, 10] {
            let paths = simulate_reference(&cfg, r).unwrap();
            let w = girsanov_weight(&paths, r, &cfg.kernel).unwrap();
            let n = cfg.n_particles as f64;
            let bound =
                (r as f64 + (r * r) as f64 / n) * c * c * cfg.horizon;
            assert!(
                w.quadratic_variation <= bound + 1e-12,
                "qv {} > bound {bound} for r={r}",
                w.quadratic_variation
            );
        }
    }

    #[test]
    fn girsanov_weights_average_to_one() {
        // Exponential-martingale property, small-scale Monte Carlo check.
        let replicas = 2000;
        let weights: Vec<f64> = (0..replicas)
            .map(|rep| {
                let mut cfg = base_config(30, KernelSpec::constant(1.0), 0);
                cfg.n_steps = 40;
                cfg.seed = crate::streams::mix_seed(1000, rep as u64, 0);
                let paths = simulate_reference(&cfg, 1).unwrap();
                girsanov_weight(&paths, 1, &cfg.kernel).unwrap().weight()
            })
            .collect();
        let mean = stats::mean(&weights);
        let se = stats::stderr_of_mean(&weights);
        assert!(
            (mean - 1.0).abs() <= 3.0 * se,
            "mean weight {mean} (se {se})"
        );
    }
}
