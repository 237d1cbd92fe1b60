//! Synthetic-data experiment harness.
//!
//! Datasets are sampled around a base covariance `Σ*` by exponentiating
//! random symmetric tangent matrices: draw `A` with i.i.d. centered Gaussian
//! entries of variance `sigma2`, symmetrize, and form
//! `Σ_i = (I + sym(A_i)) Σ* (I + sym(A_i))`. Draws whose `I + V` is not
//! positive definite are rejected and redrawn (counted). With `recentre`
//! enabled, the accepted tangents are shifted by their empirical mean so the
//! tangent sample averages to zero exactly, which makes the base the exact
//! empirical barycenter and gives error curves an exact ground truth.
//!
//! [`run_replicated`] repeats a configuration over independently seeded
//! replicates, runs one solver variant on each, and averages the
//! squared-distance-to-reference curves with normal-approximation 95%
//! confidence bands. [`fit_rate`] estimates the decay exponent of a curve by
//! least squares on log-log axes.
//!
//! Everything is deterministic given the root seed; replicate seeds come
//! from [`crate::rng::derive_seed`]. Replicates run in parallel across
//! threads (capped by the `BURES_THREADS` environment variable) with
//! aggregation in replicate order, so results do not depend on thread count.

use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::geometry::{BuresDistribution, GaussianMeasure};
use crate::rng::{derive_seed, Rng};
use crate::schedule::StepSchedule;
use crate::solver::{self, compensated_sum, default_init, SolverResult};
use crate::spd::{sym_eigvals, Matrix, SpdMatrix, PD_FLOOR};
use crate::{Error, Result};

/// Parameters of one synthetic experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ConfigRepr", into = "ConfigRepr")]
pub struct ExperimentConfig {
    pub dim: usize,
    /// Atoms per sampled dataset.
    pub n: usize,
    /// Entry variance of the tangent perturbation matrices.
    pub sigma2: f64,
    /// Base measure the tangents are exponentiated at; the population
    /// barycenter of the sampling law.
    pub base: GaussianMeasure,
    pub schedule: StepSchedule,
    pub replicates: usize,
    pub seed: u64,
    /// Shift sampled tangents to mean zero, making `base` the exact
    /// empirical barycenter of every sampled dataset.
    pub recentre: bool,
}

#[derive(Clone, Serialize, Deserialize)]
struct ConfigRepr {
    dim: usize,
    n: usize,
    sigma2: f64,
    #[serde(default)]
    base_mean: Option<Vec<f64>>,
    base_cov: Vec<Vec<f64>>,
    schedule: StepSchedule,
    replicates: usize,
    seed: u64,
    #[serde(default)]
    recentre: bool,
}

impl TryFrom<ConfigRepr> for ExperimentConfig {
    type Error = Error;

    fn try_from(repr: ConfigRepr) -> Result<Self> {
        if repr.dim < 1 {
            return Err(Error::InvalidInput("dim must be at least 1".into()));
        }
        if repr.n < 1 {
            return Err(Error::InvalidInput("n must be at least 1".into()));
        }
        if !repr.sigma2.is_finite() || repr.sigma2 <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "sigma2 must be positive, got {}",
                repr.sigma2
            )));
        }
        if repr.replicates < 1 {
            return Err(Error::InvalidInput("replicates must be at least 1".into()));
        }
        if repr.base_cov.len() != repr.dim {
            return Err(Error::InvalidInput(format!(
                "base_cov has {} rows, expected dim {}",
                repr.base_cov.len(),
                repr.dim
            )));
        }
        let cov = SpdMatrix::from_rows(&repr.base_cov)?;
        let mean = repr.base_mean.unwrap_or_else(|| vec![0.0; repr.dim]);
        let base = GaussianMeasure::new(mean, cov)?;
        Ok(ExperimentConfig {
            dim: repr.dim,
            n: repr.n,
            sigma2: repr.sigma2,
            base,
            schedule: repr.schedule,
            replicates: repr.replicates,
            seed: repr.seed,
            recentre: repr.recentre,
        })
    }
}

impl From<ExperimentConfig> for ConfigRepr {
    fn from(cfg: ExperimentConfig) -> Self {
        ConfigRepr {
            dim: cfg.dim,
            n: cfg.n,
            sigma2: cfg.sigma2,
            base_mean: Some(cfg.base.mean().to_vec()),
            base_cov: cfg.base.cov().as_matrix().to_rows(),
            schedule: cfg.schedule,
            replicates: cfg.replicates,
            seed: cfg.seed,
            recentre: cfg.recentre,
        }
    }
}

impl ExperimentConfig {
    /// True when the base covariance leaves the unit operator-norm ball, so
    /// the regular-set theory does not apply without rescaling.
    pub fn outside_regular_ball(&self) -> bool {
        crate::spd::opnorm(self.base.cov())
            .map(|op| op > 1.0 + 1e-9)
            .unwrap_or(true)
    }
}

/// The poorly-conditioned setup: base `diag(20, 1, 1)`, unit-variance
/// tangent entries, decay constant 0.1.
///
/// The base violates `‖Σ‖_op ≤ 1`, so theory checks are skipped for it;
/// rescaling the dataset by `1/√20` (covariances by `1/20`) brings it into
/// the regular set with `ζ = det(Σ*/20) = 0.0025`.
pub fn poorly_conditioned_config() -> ExperimentConfig {
    ExperimentConfig {
        dim: 3,
        n: 1000,
        sigma2: 1.0,
        base: GaussianMeasure::centered(
            SpdMatrix::from_diag(&[20.0, 1.0, 1.0]).expect("diagonal PD"),
        ),
        schedule: StepSchedule::inverse_t(0.1).expect("valid decay"),
        replicates: 100,
        seed: 0,
        recentre: false,
    }
}

// ---------------------------------------------------------------------------
// Dataset sampling
// ---------------------------------------------------------------------------

/// A sampled dataset plus sampling statistics.
#[derive(Debug, Clone)]
pub struct SampledDataset {
    pub q: BuresDistribution,
    /// Tangent draws rejected for leaving the manifold (`I + V` not PD).
    pub rejected_draws: usize,
    /// Whole-batch redraws forced by recentring (rare).
    pub batch_retries: usize,
}

impl SampledDataset {
    pub fn rejection_rate(&self) -> f64 {
        let total = self.rejected_draws + self.q.len();
        self.rejected_draws as f64 / total as f64
    }
}

fn draw_tangent(rng: &mut Rng, dim: usize, sigma: f64) -> Matrix {
    let mut a = Matrix::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            a.set(i, j, sigma * rng.normal());
        }
    }
    a.symmetrized()
}

fn min_eig_of_shifted(v: &Matrix) -> Result<f64> {
    let iv = Matrix::identity(v.dim()).add(v);
    Ok(*sym_eigvals(&iv)?.last().expect("nonempty"))
}

/// Samples `cfg.n` atoms as `(I + V_i) Σ* (I + V_i)`, rejecting draws with
/// `I + V` not strictly positive definite. Deterministic given `cfg.seed`.
pub fn sample_dataset(cfg: &ExperimentConfig) -> Result<SampledDataset> {
    let base_eigs = sym_eigvals(cfg.base.cov().as_matrix())?;
    if *base_eigs.last().expect("nonempty") < PD_FLOOR {
        return Err(Error::SingularMatrix {
            min_eig: *base_eigs.last().unwrap(),
            floor: PD_FLOOR,
        });
    }

    let sigma = cfg.sigma2.sqrt();
    let mut rng = Rng::seed_from_u64(cfg.seed);
    let mut rejected = 0usize;
    let mut batch_retries = 0usize;

    const MAX_CONSECUTIVE_REJECTS: usize = 100_000;
    const MAX_BATCH_RETRIES: usize = 1_000;

    'batch: loop {
        let mut tangents: Vec<Matrix> = Vec::with_capacity(cfg.n);
        for _ in 0..cfg.n {
            let mut stuck = 0usize;
            loop {
                let v = draw_tangent(&mut rng, cfg.dim, sigma);
                if min_eig_of_shifted(&v)? > PD_FLOOR {
                    tangents.push(v);
                    break;
                }
                rejected += 1;
                stuck += 1;
                if stuck > MAX_CONSECUTIVE_REJECTS {
                    return Err(Error::InvalidInput(format!(
                        "tangent sampling rejected {stuck} consecutive draws; sigma2 = {} is too \
                         large for admissibility",
                        cfg.sigma2
                    )));
                }
            }
        }

        if cfg.recentre {
            let mut mean = Matrix::zeros(cfg.dim);
            for v in &tangents {
                mean = mean.add(v);
            }
            mean = mean.scale(1.0 / cfg.n as f64);
            for v in tangents.iter_mut() {
                *v = v.sub(&mean);
            }
            // Shifting can push a barely admissible tangent off the manifold;
            // redraw the whole batch so the zero-mean property stays exact.
            for v in &tangents {
                if min_eig_of_shifted(v)? <= PD_FLOOR {
                    batch_retries += 1;
                    if batch_retries > MAX_BATCH_RETRIES {
                        return Err(Error::InvalidInput(
                            "recentred batches kept leaving the manifold".into(),
                        ));
                    }
                    continue 'batch;
                }
            }
        }

        let atoms: Vec<GaussianMeasure> = tangents
            .iter()
            .map(|v| {
                let a = Matrix::identity(cfg.dim).add(v);
                let cov =
                    SpdMatrix::new_symmetrized(a.matmul(cfg.base.cov().as_matrix()).matmul(&a));
                GaussianMeasure::new(cfg.base.mean().to_vec(), cov)
            })
            .collect::<Result<Vec<_>>>()?;

        let q = BuresDistribution::uniform(atoms)?;
        return Ok(SampledDataset {
            q,
            rejected_draws: rejected,
            batch_retries,
        });
    }
}

/// Recentred sampling constrained to an eigenvalue band: redraws whole
/// datasets (with seeds derived from `cfg.seed`) until every atom's spectrum
/// lies inside `[eig_floor, 1]`, certifying regularity with
/// `ζ ≥ eig_floor^D` while keeping the base an exact barycenter.
pub fn sample_recentred_in_band(
    cfg: &ExperimentConfig,
    eig_floor: f64,
    max_attempts: usize,
) -> Result<SampledDataset> {
    for attempt in 0..max_attempts {
        let mut attempt_cfg = cfg.clone();
        attempt_cfg.recentre = true;
        attempt_cfg.seed = derive_seed(cfg.seed, attempt as u64);
        let sampled = sample_dataset(&attempt_cfg)?;
        let in_band =
            sampled
                .q
                .atoms()
                .iter()
                .all(|atom| match sym_eigvals(atom.cov().as_matrix()) {
                    Ok(eigs) => eigs[0] <= 1.0 && *eigs.last().unwrap() >= eig_floor,
                    Err(_) => false,
                });
        if in_band {
            return Ok(sampled);
        }
    }
    Err(Error::InvalidInput(format!(
        "no dataset with spectrum in [{eig_floor}, 1] within {max_attempts} attempts; \
         lower sigma2 or loosen the band"
    )))
}

// ---------------------------------------------------------------------------
// Replicated runs
// ---------------------------------------------------------------------------

/// Solver variant for a replicated run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Gd,
    Sgd,
    SgdReplacement,
    AveragedSgd,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Gd => "gd",
            Variant::Sgd => "sgd",
            Variant::SgdReplacement => "sgd-replace",
            Variant::AveragedSgd => "avg-sgd",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(Variant::Gd),
            "sgd" => Ok(Variant::Sgd),
            "sgd-replace" => Ok(Variant::SgdReplacement),
            "avg-sgd" => Ok(Variant::AveragedSgd),
            other => Err(Error::InvalidInput(format!(
                "unknown variant {other:?}; expected gd, sgd, sgd-replace, or avg-sgd"
            ))),
        }
    }
}

/// Mean error curve across replicates with 95% confidence bands.
#[derive(Debug, Clone)]
pub struct ReplicatedCurves {
    /// Iteration indices (starting at 0).
    pub iters: Vec<usize>,
    /// Mean `W₂²(b_t, reference)` across replicates.
    pub mean_error: Vec<f64>,
    pub lo95: Vec<f64>,
    pub hi95: Vec<f64>,
    pub replicates: usize,
    /// Tangent-draw rejection rate across all replicates.
    pub rejection_rate: f64,
    /// Base covariance violates the unit-ball assumption of the rate theory.
    pub outside_regular_ball: bool,
}

struct ReplicateOutput {
    curve: Vec<f64>,
    rejected: usize,
    draws: usize,
}

fn replicate_reference(
    cfg: &ExperimentConfig,
    variant: Variant,
    q: &BuresDistribution,
) -> Result<GaussianMeasure> {
    // Single-pass variants are measured against the population barycenter
    // (the base); GD and resampling variants converge to the empirical
    // barycenter, which is the base exactly when recentred and otherwise is
    // computed by running GD to tolerance.
    match variant {
        Variant::Sgd | Variant::AveragedSgd => Ok(cfg.base.clone()),
        Variant::Gd | Variant::SgdReplacement => {
            if cfg.recentre {
                Ok(cfg.base.clone())
            } else {
                Ok(solver::gd(q, default_init(q), 500, 1e-14, None)?.final_measure)
            }
        }
    }
}

fn run_one_replicate(
    cfg: &ExperimentConfig,
    variant: Variant,
    replicate: usize,
) -> Result<ReplicateOutput> {
    let mut rep_cfg = cfg.clone();
    rep_cfg.seed = derive_seed(cfg.seed, replicate as u64);
    let sampled = sample_dataset(&rep_cfg)?;
    let q = &sampled.q;
    let reference = replicate_reference(cfg, variant, q)?;

    let result: SolverResult = match variant {
        Variant::Gd => solver::gd(q, default_init(q), cfg.n, 0.0, Some(&reference))?,
        Variant::Sgd => {
            let init = q.atom(0).clone();
            solver::sgd(
                &q.atoms()[1..],
                &init,
                &cfg.schedule,
                None,
                Some(&reference),
            )?
        }
        Variant::AveragedSgd => {
            let init = q.atom(0).clone();
            solver::averaged_sgd(
                &q.atoms()[1..],
                &init,
                &cfg.schedule,
                None,
                Some(&reference),
            )?
        }
        Variant::SgdReplacement => solver::sgd_with_replacement(
            q,
            default_init(q),
            &cfg.schedule,
            cfg.n,
            derive_seed(rep_cfg.seed, u64::MAX),
            false,
            Some(&reference),
        )?,
    };

    let curve = result
        .trace
        .error_curve()
        .expect("reference supplied, so every record carries an error value");
    Ok(ReplicateOutput {
        curve,
        rejected: sampled.rejected_draws,
        draws: q.len(),
    })
}

fn thread_budget(replicates: usize) -> usize {
    let default = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let requested = std::env::var("BURES_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(default);
    requested.min(replicates).max(1)
}

/// Runs `cfg.replicates` independently seeded datasets through one solver
/// variant and aggregates the per-iteration error curves.
///
/// Identical `(cfg, variant)` inputs produce identical curves regardless of
/// the thread count.
pub fn run_replicated(cfg: &ExperimentConfig, variant: Variant) -> Result<ReplicatedCurves> {
    let replicates = cfg.replicates;
    if replicates == 0 {
        return Err(Error::InvalidInput("replicates must be at least 1".into()));
    }
    let threads = thread_budget(replicates);

    let mut outputs: Vec<Option<Result<ReplicateOutput>>> = Vec::new();
    outputs.resize_with(replicates, || None);

    if threads <= 1 {
        for (r, slot) in outputs.iter_mut().enumerate() {
            *slot = Some(run_one_replicate(cfg, variant, r));
        }
    } else {
        let chunks: Vec<Vec<usize>> = (0..threads)
            .map(|t| (t..replicates).step_by(threads).collect())
            .collect();
        let results: Vec<Vec<(usize, Result<ReplicateOutput>)>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .into_iter()
                .map(|chunk| {
                    scope.spawn(move || {
                        chunk
                            .into_iter()
                            .map(|r| (r, run_one_replicate(cfg, variant, r)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("replicate thread panicked"))
                .collect()
        });
        for batch in results {
            for (r, out) in batch {
                outputs[r] = Some(out);
            }
        }
    }

    let mut curves = Vec::with_capacity(replicates);
    let mut rejected = 0usize;
    let mut draws = 0usize;
    for (r, slot) in outputs.into_iter().enumerate() {
        let out = slot
            .expect("every replicate scheduled")
            .map_err(|e| Error::InvalidInput(format!("replicate {r} failed: {e}")))?;
        rejected += out.rejected;
        draws += out.draws;
        curves.push(out.curve);
    }

    let len = curves[0].len();
    for (r, c) in curves.iter().enumerate() {
        if c.len() != len {
            return Err(Error::InvalidInput(format!(
                "replicate {r} produced {} records, expected {len}",
                c.len()
            )));
        }
    }

    let mut mean_error = Vec::with_capacity(len);
    let mut lo95 = Vec::with_capacity(len);
    let mut hi95 = Vec::with_capacity(len);
    for i in 0..len {
        let values: Vec<f64> = curves.iter().map(|c| c[i]).collect();
        let mean = compensated_sum(&values) / replicates as f64;
        let stderr = if replicates > 1 {
            let sq_dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
            (compensated_sum(&sq_dev) / (replicates as f64 - 1.0)).sqrt()
                / (replicates as f64).sqrt()
        } else {
            0.0
        };
        mean_error.push(mean);
        lo95.push(mean - 1.96 * stderr);
        hi95.push(mean + 1.96 * stderr);
    }

    Ok(ReplicatedCurves {
        iters: (0..len).collect(),
        mean_error,
        lo95,
        hi95,
        replicates,
        rejection_rate: rejected as f64 / (rejected + draws) as f64,
        outside_regular_ball: cfg.outside_regular_ball(),
    })
}

// ---------------------------------------------------------------------------
// Rate fitting
// ---------------------------------------------------------------------------

/// Least-squares fit of `ln(error)` against `ln(t)` over an index window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub window_start: usize,
    pub window_end: usize,
    pub r_squared: f64,
}

/// Fits a power law to `curve[t] ≈ exp(intercept) · t^slope` over
/// `window` (indices into the curve; the window must start at 1 or later so
/// `ln t` is defined, contain at least 3 points, and the curve must be
/// strictly positive on it).
pub fn fit_rate(curve: &[f64], window: std::ops::Range<usize>) -> Result<RateEstimate> {
    if window.start < 1 {
        return Err(Error::DegenerateFit(
            "window must start at index 1 or later".into(),
        ));
    }
    if window.end > curve.len() {
        return Err(Error::DegenerateFit(format!(
            "window end {} exceeds curve length {}",
            window.end,
            curve.len()
        )));
    }
    if window.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "window has {} points, need 3",
            window.len()
        )));
    }

    let mut xs = Vec::with_capacity(window.len());
    let mut ys = Vec::with_capacity(window.len());
    for t in window.clone() {
        if !curve[t].is_finite() || curve[t] <= 0.0 {
            return Err(Error::DegenerateFit(format!(
                "curve value {} at index {t} is not positive",
                curve[t]
            )));
        }
        xs.push((t as f64).ln());
        ys.push(curve[t].ln());
    }

    let n = xs.len() as f64;
    let x_mean = compensated_sum(&xs) / n;
    let y_mean = compensated_sum(&ys) / n;
    let sxx: Vec<f64> = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).collect();
    let sxy: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .collect();
    let sxx = compensated_sum(&sxx);
    let sxy = compensated_sum(&sxy);
    if sxx <= 0.0 {
        return Err(Error::DegenerateFit(
            "zero variance in ln(t) over the window".into(),
        ));
    }

    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_res: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let resid = y - (intercept + slope * x);
            resid * resid
        })
        .collect();
    let ss_tot: Vec<f64> = ys.iter().map(|y| (y - y_mean) * (y - y_mean)).collect();
    let ss_res = compensated_sum(&ss_res);
    let ss_tot = compensated_sum(&ss_tot);
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };

    Ok(RateEstimate {
        slope,
        intercept,
        window_start: window.start,
        window_end: window.end,
        r_squared,
    })
}
