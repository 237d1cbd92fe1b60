//! First-order solvers for the barycenter functional
//! `G(b) = ½ Σ_i w_i W₂²(b, μ_i)`.
//!
//! The gradient of `G` at `b` is `−Σ w_i (T_{b→μ_i} − id)`, an affine map
//! with symmetric matrix part `I − M̃`, `M̃ = Σ w_i M_i`. Gradient descent
//! with unit step pushes `b` forward through `M̃`, which for covariances is
//! the fixed-point style update `Σ ← M̃ Σ M̃`; stochastic variants move along
//! the geodesic toward one sampled atom per iteration.
//!
//! Means decouple from covariances: a unit gradient step lands exactly on
//! the weighted mean of the atom means, so the solvers set the mean in
//! closed form and iterate only covariances.
//!
//! Per-atom sums (gradient averaging, objective, fixed-point residual) are
//! accumulated with pairwise/compensated summation in atom order, so results
//! are bit-stable across runs.

use std::time::Instant;

use crate::geometry::{
    geodesic_point, w2_distance_sq, BuresDistribution, GaussianMeasure, TangentMap,
};
use crate::rng::Rng;
use crate::schedule::StepSchedule;
use crate::spd::{
    sandwich_sqrt, spectral_roots, sqrt_spd, sym_opnorm, vec_norm_sq, vec_sub, Matrix, SpdMatrix,
};
use crate::{Error, Result};

/// Default gradient-norm-squared stopping tolerance for gradient descent.
pub const DEFAULT_GD_TOL: f64 = 1e-12;

/// Default iteration cap for gradient descent.
pub const DEFAULT_GD_MAX_ITERS: usize = 200;

// ---------------------------------------------------------------------------
// Traces and results
// ---------------------------------------------------------------------------

/// One recorded iterate. Entry 0 is the initial point.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// `G(b_t)` against the evaluation distribution, when one is available.
    pub objective: Option<f64>,
    /// `‖∇G(b_t)‖²_{b_t}`, when an evaluation distribution is available.
    pub grad_norm_sq: Option<f64>,
    /// `W₂²(b_t, reference)`, when a reference measure is supplied.
    pub w2_sq_to_ref: Option<f64>,
    /// Step size used to reach this iterate (absent at iteration 0).
    pub step_size: Option<f64>,
    /// Seconds since the solver started.
    pub wall_time: f64,
}

/// Per-iteration record of a solver run.
#[derive(Debug, Clone, Default)]
pub struct SolverTrace {
    records: Vec<TraceRecord>,
}

impl SolverTrace {
    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// True when the recorded objectives never increase by more than `slack`.
    pub fn objective_nonincreasing(&self, slack: f64) -> bool {
        self.records
            .windows(2)
            .all(|w| match (w[0].objective, w[1].objective) {
                (Some(prev), Some(next)) => next <= prev + slack,
                _ => true,
            })
    }

    /// The `w2_sq_to_ref` column, for runs where a reference was supplied.
    pub fn error_curve(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.w2_sq_to_ref).collect()
    }

    fn push(
        &mut self,
        iter: usize,
        objective: Option<f64>,
        grad_norm_sq: Option<f64>,
        w2_sq_to_ref: Option<f64>,
        step_size: Option<f64>,
        started: Instant,
    ) {
        self.records.push(TraceRecord {
            iter,
            objective,
            grad_norm_sq,
            w2_sq_to_ref,
            step_size,
            wall_time: started.elapsed().as_secs_f64(),
        });
    }
}

/// Output of a solver run.
#[derive(Debug, Clone)]
pub struct SolverResult {
    pub final_measure: GaussianMeasure,
    pub trace: SolverTrace,
    /// For gradient descent: the gradient tolerance was reached. For the
    /// stochastic solvers: the planned pass completed.
    pub converged: bool,
    pub iterations: usize,
}

// ---------------------------------------------------------------------------
// Deterministic accumulation
// ---------------------------------------------------------------------------

/// Neumaier-compensated sum in slice order.
pub fn compensated_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Pairwise matrix sum with a fixed reduction tree.
fn pairwise_mat_sum(mats: &[Matrix]) -> Matrix {
    match mats.len() {
        0 => panic!("empty matrix sum"),
        1 => mats[0].clone(),
        n => {
            let (left, right) = mats.split_at(n / 2);
            pairwise_mat_sum(left).add(&pairwise_mat_sum(right))
        }
    }
}

/// Weighted mean of the atom means, accumulated coordinate-wise in atom order.
pub fn weighted_mean(q: &BuresDistribution) -> Vec<f64> {
    let dim = q.dim();
    (0..dim)
        .map(|j| {
            let terms: Vec<f64> = q.iter().map(|(w, atom)| w * atom.mean()[j]).collect();
            compensated_sum(&terms)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Objective and gradient
// ---------------------------------------------------------------------------

fn check_dims(q: &BuresDistribution, b: &GaussianMeasure) -> Result<()> {
    if q.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: q.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

/// Barycenter functional `G(b) = ½ Σ w_i W₂²(b, μ_i)`.
///
/// Defined for positive semidefinite `b`; one root of `Σ_b` is shared across
/// all atoms.
pub fn objective(q: &BuresDistribution, b: &GaussianMeasure) -> Result<f64> {
    check_dims(q, b)?;
    let root_b = sqrt_spd(b.cov())?;
    let tr_b = b.cov().trace();
    let mut terms = Vec::with_capacity(q.len());
    for (w, atom) in q.iter() {
        let inner = root_b
            .as_matrix()
            .matmul(atom.cov().as_matrix())
            .matmul(root_b.as_matrix())
            .symmetrized();
        let eigs = crate::spd::sym_eigvals(&inner)?;
        let cross: f64 = eigs.iter().map(|l| l.max(0.0).sqrt()).sum();
        let mean_part = vec_norm_sq(&vec_sub(b.mean(), atom.mean()));
        terms.push(w * (mean_part + tr_b + atom.cov().trace() - 2.0 * cross).max(0.0));
    }
    Ok(0.5 * compensated_sum(&terms))
}

/// Variance of the distribution about its barycenter: `2 G(b̄)`.
pub fn variance(q: &BuresDistribution, bbar: &GaussianMeasure) -> Result<f64> {
    Ok(2.0 * objective(q, bbar)?)
}

/// One pass of transports out of `b`: the averaged transport matrix and the
/// objective value, sharing a single eigendecomposition of `Σ_b`.
struct TransportPass {
    m_tilde: Matrix,
    objective: f64,
}

fn transport_pass(q: &BuresDistribution, b: &GaussianMeasure) -> Result<TransportPass> {
    let roots = spectral_roots(b.cov())?;
    let tr_b = b.cov().trace();
    let mut weighted = Vec::with_capacity(q.len());
    let mut w2_terms = Vec::with_capacity(q.len());
    for (w, atom) in q.iter() {
        let (cross_root, tr_cross) = sandwich_sqrt(&roots, atom.cov())?;
        let m = roots
            .inv_root
            .as_matrix()
            .matmul(cross_root.as_matrix())
            .matmul(roots.inv_root.as_matrix())
            .symmetrized();
        let mean_part = vec_norm_sq(&vec_sub(b.mean(), atom.mean()));
        weighted.push(m.scale(w));
        w2_terms.push(w * (mean_part + tr_b + atom.cov().trace() - 2.0 * tr_cross).max(0.0));
    }
    Ok(TransportPass {
        m_tilde: pairwise_mat_sum(&weighted).symmetrized(),
        objective: 0.5 * compensated_sum(&w2_terms),
    })
}

fn gradient_from_pass(
    q: &BuresDistribution,
    b: &GaussianMeasure,
    pass: &TransportPass,
) -> Result<TangentMap> {
    let dim = b.dim();
    let sym = Matrix::identity(dim).sub(&pass.m_tilde);
    // Offset −v̄ with v̄ = m̄ − M̃ m_b, so the field is x ↦ (I − M̃)x − v̄.
    let m_bar = weighted_mean(q);
    let offset = vec_sub(&pass.m_tilde.apply(b.mean()), &m_bar);
    TangentMap::new(b.clone(), sym, offset)
}

/// Gradient of `G` at `b` as a tangent vector: `−Σ w_i (T_{b→μ_i} − id)`.
///
/// Requires `b` strictly positive definite. Its squared norm is
/// `tr(Σ_b (M̃−I)²) + ‖m_b − m̄‖²`.
pub fn gradient(q: &BuresDistribution, b: &GaussianMeasure) -> Result<TangentMap> {
    check_dims(q, b)?;
    let pass = transport_pass(q, b)?;
    gradient_from_pass(q, b, &pass)
}

/// `‖∇G(b)‖²_b`.
pub fn grad_norm_sq(q: &BuresDistribution, b: &GaussianMeasure) -> Result<f64> {
    Ok(gradient(q, b)?.norm_sq())
}

/// Residual of the barycenter fixed-point equation,
/// `‖Σ_b − Σ w_i (Σ_b^{1/2} Σ_i Σ_b^{1/2})^{1/2}‖_op + ‖m_b − m̄‖`.
///
/// Zero exactly at the barycenter.
pub fn fixed_point_residual(q: &BuresDistribution, b: &GaussianMeasure) -> Result<f64> {
    check_dims(q, b)?;
    let roots = spectral_roots(b.cov())?;
    let mut weighted = Vec::with_capacity(q.len());
    for (w, atom) in q.iter() {
        let (cross_root, _) = sandwich_sqrt(&roots, atom.cov())?;
        weighted.push(cross_root.as_matrix().scale(w));
    }
    let integral = pairwise_mat_sum(&weighted);
    let cov_residual = sym_opnorm(&b.cov().as_matrix().sub(&integral).symmetrized())?;
    let mean_residual = vec_norm_sq(&vec_sub(b.mean(), &weighted_mean(q))).sqrt();
    Ok(cov_residual + mean_residual)
}

/// Default initial point: the atom with the largest weight (ties break to
/// the lowest index).
pub fn default_init(q: &BuresDistribution) -> &GaussianMeasure {
    let mut best = 0;
    for i in 1..q.len() {
        if q.weight(i) > q.weight(best) {
            best = i;
        }
    }
    q.atom(best)
}

// ---------------------------------------------------------------------------
// Gradient descent
// ---------------------------------------------------------------------------

/// Unit-step gradient descent: `Σ ← M̃ Σ M̃` with `M̃` the weighted average
/// of transport matrices out of the current iterate; the mean is set to the
/// weighted atom mean in closed form.
///
/// Stops when `‖∇G(b_t)‖²` falls to `tol` or after `max_iters` updates. The
/// recorded objective is nonincreasing (each step decreases `G` by at least
/// half the squared gradient norm).
pub fn gd(
    q: &BuresDistribution,
    init: &GaussianMeasure,
    max_iters: usize,
    tol: f64,
    reference: Option<&GaussianMeasure>,
) -> Result<SolverResult> {
    check_dims(q, init)?;
    let started = Instant::now();
    let m_bar = weighted_mean(q);

    let mut b = init.clone();
    let mut trace = SolverTrace::default();
    let mut pass = transport_pass(q, &b)?;
    let mut gn = gradient_from_pass(q, &b, &pass)?.norm_sq();
    trace.push(
        0,
        Some(pass.objective),
        Some(gn),
        w2_to(reference, &b)?,
        None,
        started,
    );

    let mut converged = gn <= tol;
    let mut iterations = 0;

    while !converged && iterations < max_iters {
        iterations += 1;
        let cov = SpdMatrix::new_symmetrized(
            pass.m_tilde
                .matmul(b.cov().as_matrix())
                .matmul(&pass.m_tilde),
        );
        b = GaussianMeasure::new(m_bar.clone(), cov)?;
        pass = transport_pass(q, &b)?;
        gn = gradient_from_pass(q, &b, &pass)?.norm_sq();
        trace.push(
            iterations,
            Some(pass.objective),
            Some(gn),
            w2_to(reference, &b)?,
            Some(1.0),
            started,
        );
        converged = gn <= tol;
    }

    Ok(SolverResult {
        final_measure: b,
        trace,
        converged,
        iterations,
    })
}

// ---------------------------------------------------------------------------
// Stochastic gradient descent
// ---------------------------------------------------------------------------

fn w2_to(reference: Option<&GaussianMeasure>, b: &GaussianMeasure) -> Result<Option<f64>> {
    reference.map(|r| w2_distance_sq(b, r)).transpose()
}

fn eval_metrics(
    eval: Option<&BuresDistribution>,
    b: &GaussianMeasure,
) -> Result<(Option<f64>, Option<f64>)> {
    match eval {
        None => Ok((None, None)),
        Some(q) => {
            let pass = transport_pass(q, b)?;
            let gn = gradient_from_pass(q, b, &pass)?.norm_sq();
            Ok((Some(pass.objective), Some(gn)))
        }
    }
}

fn checked_step(schedule: &StepSchedule, t: usize) -> Result<f64> {
    let eta = schedule.step_size(t)?;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidSchedule(format!(
            "step {eta} at t = {t} outside (0, 1]"
        )));
    }
    Ok(eta)
}

/// Single-pass SGD: each iterate moves along the geodesic from `b_t` to the
/// next stream element at parameter `η_t`. Consumes each element once, in
/// order.
///
/// `eval` (optional) is the distribution against which the trace records
/// objective and gradient norm; `reference` adds a `W₂²`-to-reference column.
pub fn sgd(
    stream: &[GaussianMeasure],
    init: &GaussianMeasure,
    schedule: &StepSchedule,
    eval: Option<&BuresDistribution>,
    reference: Option<&GaussianMeasure>,
) -> Result<SolverResult> {
    if let Some(available) = schedule.finite_len() {
        if available < stream.len() {
            return Err(Error::ScheduleExhausted {
                needed: stream.len(),
                available,
            });
        }
    }
    let started = Instant::now();
    let mut b = init.clone();
    let mut trace = SolverTrace::default();
    let (obj, gn) = eval_metrics(eval, &b)?;
    trace.push(0, obj, gn, w2_to(reference, &b)?, None, started);

    for (t, sample) in stream.iter().enumerate() {
        let eta = checked_step(schedule, t)?;
        b = geodesic_point(&b, sample, eta)?;
        let (obj, gn) = eval_metrics(eval, &b)?;
        trace.push(t + 1, obj, gn, w2_to(reference, &b)?, Some(eta), started);
    }

    let iterations = stream.len();
    Ok(SolverResult {
        final_measure: b,
        trace,
        converged: true,
        iterations,
    })
}

/// SGD sampling atoms of `q` with replacement (by weight) for `iters`
/// iterations. Deterministic given `seed`: one uniform draw per iteration,
/// inverted against the cumulative weights.
pub fn sgd_with_replacement(
    q: &BuresDistribution,
    init: &GaussianMeasure,
    schedule: &StepSchedule,
    iters: usize,
    seed: u64,
    record_objectives: bool,
    reference: Option<&GaussianMeasure>,
) -> Result<SolverResult> {
    check_dims(q, init)?;
    if let Some(available) = schedule.finite_len() {
        if available < iters {
            return Err(Error::ScheduleExhausted {
                needed: iters,
                available,
            });
        }
    }
    let started = Instant::now();
    let mut rng = Rng::seed_from_u64(seed);
    let cumulative: Vec<f64> = q
        .weights()
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();

    let eval = if record_objectives { Some(q) } else { None };
    let mut b = init.clone();
    let mut trace = SolverTrace::default();
    let (obj, gn) = eval_metrics(eval, &b)?;
    trace.push(0, obj, gn, w2_to(reference, &b)?, None, started);

    for t in 0..iters {
        let u = rng.uniform();
        let idx = cumulative.partition_point(|&c| c <= u).min(q.len() - 1);
        let eta = checked_step(schedule, t)?;
        b = geodesic_point(&b, q.atom(idx), eta)?;
        let (obj, gn) = eval_metrics(eval, &b)?;
        trace.push(t + 1, obj, gn, w2_to(reference, &b)?, Some(eta), started);
    }

    Ok(SolverResult {
        final_measure: b,
        trace,
        converged: true,
        iterations: iters,
    })
}

/// SGD with iterate averaging: alongside the raw iterate `b_t`, maintains
/// `b̃_{t+1} = [t/(t+1) id + 1/(t+1) T_{b̃_t→b_{t+1}}]_# b̃_t` (so all the
/// averaging weight sits on the first raw iterate at t = 0, then decays as
/// `1/(t+1)`). The trace and final measure report the averaged sequence.
pub fn averaged_sgd(
    stream: &[GaussianMeasure],
    init: &GaussianMeasure,
    schedule: &StepSchedule,
    eval: Option<&BuresDistribution>,
    reference: Option<&GaussianMeasure>,
) -> Result<SolverResult> {
    if let Some(available) = schedule.finite_len() {
        if available < stream.len() {
            return Err(Error::ScheduleExhausted {
                needed: stream.len(),
                available,
            });
        }
    }
    let started = Instant::now();
    let mut raw = init.clone();
    let mut avg = init.clone();
    let mut trace = SolverTrace::default();
    let (obj, gn) = eval_metrics(eval, &avg)?;
    trace.push(0, obj, gn, w2_to(reference, &avg)?, None, started);

    for (t, sample) in stream.iter().enumerate() {
        let eta = checked_step(schedule, t)?;
        raw = geodesic_point(&raw, sample, eta)?;
        avg = geodesic_point(&avg, &raw, 1.0 / (t as f64 + 1.0))?;
        let (obj, gn) = eval_metrics(eval, &avg)?;
        trace.push(t + 1, obj, gn, w2_to(reference, &avg)?, Some(eta), started);
    }

    let iterations = stream.len();
    Ok(SolverResult {
        final_measure: avg,
        trace,
        converged: true,
        iterations,
    })
}
