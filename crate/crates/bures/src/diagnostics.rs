//! Numerical certification of the inequalities behind the convergence theory.
//!
//! Each check evaluates both sides of one inequality on a concrete instance
//! and reports the margin by which it holds:
//!
//! - `pl`: `‖∇G(b)‖²_b ≥ 2 C (G(b) − G(b̄))` with `C = ζ²/4`,
//! - `variance`: `G(b) − G(b̄) ≥ (ζ/2) W₂²(b, b̄)`,
//! - `smoothness`: `G(b₁) ≤ G(b₀) + ⟨∇G(b₀), log_{b₀} b₁⟩ + ½ W₂²(b₀, b₁)`,
//! - `descent`: `G(b⁺) − G(b) ≤ −½‖∇G(b)‖²` at `b⁺ = exp_b(−∇G(b))`,
//! - `integrated_pl`: `G(b) − G(b̄) ≤ (2/ζ)(∫₀¹ ‖∇G(b)‖_{L²(b_s)} ds)²`
//!   along the geodesic from `b` to `b̄`,
//! - convexity probes for `λ_max` of the second moment and `−ln det Σ`
//!   along generalized geodesics.
//!
//! All checks are pure and deterministic. Reports serialize to one
//! tab-separated line each (`name lhs rhs margin satisfied context`).

use crate::geometry::{
    exp_map, log_map, tangent_inner, transport_map, w2_distance_sq, BuresDistribution,
    GaussianMeasure,
};
use crate::rng::Rng;
use crate::solver::{gradient, objective};
use crate::spd::{logdet, sym_eigvals, vec_add, vec_norm_sq, vec_scale, Matrix, SpdMatrix};
use crate::{Error, Result};

/// Relative slack applied to every inequality margin, absorbing accumulated
/// eigensolver error.
pub const CHECK_TOL: f64 = 1e-8;

/// Tighter slack used by the grid convexity probes.
const PROBE_TOL: f64 = 1e-9;

/// Outcome of one inequality check. `margin` is oriented so that the
/// inequality holds when it is nonnegative; `satisfied` allows the stated
/// slack, scaled by the magnitude of the two sides.
#[derive(Debug, Clone)]
pub struct InequalityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub satisfied: bool,
    pub context: String,
}

impl InequalityReport {
    fn with_tol(name: &str, lhs: f64, rhs: f64, margin: f64, tol: f64, context: String) -> Self {
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        InequalityReport {
            name: name.to_string(),
            lhs,
            rhs,
            margin,
            satisfied: margin >= -tol * scale,
            context,
        }
    }

    fn new(name: &str, lhs: f64, rhs: f64, margin: f64, context: String) -> Self {
        Self::with_tol(name, lhs, rhs, margin, CHECK_TOL, context)
    }

    /// One line of the machine-readable report stream:
    /// `name\tlhs\trhs\tmargin\tsatisfied\tcontext`.
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.name, self.lhs, self.rhs, self.margin, self.satisfied, self.context
        )
    }
}

fn require_regular(m: &GaussianMeasure, zeta: f64, label: &str) -> Result<()> {
    if !m.in_regular_set(zeta) {
        return Err(Error::NotRegular {
            zeta,
            detail: format!("{label} violates the opnorm/determinant bounds"),
        });
    }
    Ok(())
}

/// PL inequality at `b` with the certified constant `C = ζ²/4`.
///
/// `bbar` must be the barycenter (fixed-point residual below 1e-8).
pub fn check_pl(
    q: &BuresDistribution,
    b: &GaussianMeasure,
    bbar: &GaussianMeasure,
    zeta: f64,
) -> Result<InequalityReport> {
    check_pl_with_constant(q, b, bbar, zeta, zeta * zeta / 4.0)
}

/// PL inequality with an explicit constant; used to probe how tight the
/// certified constant is (any constant above 1 must fail somewhere).
pub fn check_pl_with_constant(
    q: &BuresDistribution,
    b: &GaussianMeasure,
    bbar: &GaussianMeasure,
    zeta: f64,
    c_pl: f64,
) -> Result<InequalityReport> {
    require_regular(b, zeta, "b")?;
    require_regular(bbar, zeta, "bbar")?;
    let lhs = gradient(q, b)?.norm_sq();
    let gap = objective(q, b)? - objective(q, bbar)?;
    let rhs = 2.0 * c_pl * gap;
    let ratio = if gap > 0.0 {
        lhs / (2.0 * gap)
    } else {
        f64::INFINITY
    };
    Ok(InequalityReport::new(
        "pl",
        lhs,
        rhs,
        lhs - rhs,
        format!("zeta={zeta} c_pl={c_pl} observed_ratio={ratio}"),
    ))
}

/// Variance inequality: quadratic growth around the barycenter with
/// constant `ζ`.
pub fn check_variance_inequality(
    q: &BuresDistribution,
    b: &GaussianMeasure,
    bbar: &GaussianMeasure,
    zeta: f64,
) -> Result<InequalityReport> {
    require_regular(b, zeta, "b")?;
    require_regular(bbar, zeta, "bbar")?;
    let lhs = objective(q, b)? - objective(q, bbar)?;
    let w2 = w2_distance_sq(b, bbar)?;
    let rhs = 0.5 * zeta * w2;
    Ok(InequalityReport::new(
        "variance",
        lhs,
        rhs,
        lhs - rhs,
        format!("zeta={zeta} w2_sq={w2}"),
    ))
}

/// Smoothness of the objective along the geodesic from `b0` to `b1`:
/// `G(b₁) ≤ G(b₀) + ⟨∇G(b₀), log_{b₀} b₁⟩ + ½ W₂²(b₀, b₁)`.
pub fn check_smoothness(
    q: &BuresDistribution,
    b0: &GaussianMeasure,
    b1: &GaussianMeasure,
) -> Result<InequalityReport> {
    let g0 = objective(q, b0)?;
    let g1 = objective(q, b1)?;
    let grad = gradient(q, b0)?;
    let log = log_map(b0, b1)?;
    let inner = tangent_inner(b0, &grad, &log);
    let w2 = w2_distance_sq(b0, b1)?;
    let rhs = g0 + inner + 0.5 * w2;
    Ok(InequalityReport::new(
        "smoothness",
        g1,
        rhs,
        rhs - g1,
        format!("inner={inner} w2_sq={w2}"),
    ))
}

/// Descent consequence of smoothness: one unit gradient step decreases the
/// objective by at least half the squared gradient norm.
pub fn check_descent(q: &BuresDistribution, b: &GaussianMeasure) -> Result<InequalityReport> {
    let g0 = objective(q, b)?;
    let grad = gradient(q, b)?;
    let gn = grad.norm_sq();
    let stepped = exp_map(b, &grad.scale(-1.0))?;
    let lhs = objective(q, &stepped)? - g0;
    let rhs = -0.5 * gn;
    Ok(InequalityReport::new(
        "descent",
        lhs,
        rhs,
        rhs - lhs,
        format!("grad_norm_sq={gn}"),
    ))
}

/// Integrated PL inequality along the geodesic from `b` to the barycenter:
/// `G(b) − G(b̄) ≤ (2/ζ)(∫₀¹ ‖∇G(b)‖_{L²(b_s)} ds)²`.
///
/// The integral uses composite Simpson quadrature on a uniform grid;
/// `quad_nodes` is rounded up to the next odd count of at least 3.
pub fn check_integrated_pl(
    q: &BuresDistribution,
    b: &GaussianMeasure,
    bbar: &GaussianMeasure,
    zeta: f64,
    quad_nodes: usize,
) -> Result<InequalityReport> {
    require_regular(b, zeta, "b")?;
    require_regular(bbar, zeta, "bbar")?;
    let nodes = quad_nodes.max(3) | 1;

    let grad = gradient(q, b)?;
    let a = grad.sym();
    let a_sq = a.matmul(a);

    let geo = transport_map(b, bbar)?;
    let identity = Matrix::identity(b.dim());

    let integrand = |s: f64| -> f64 {
        let blend = identity
            .scale(1.0 - s)
            .add(&geo.matrix().as_matrix().scale(s));
        let cov_s = blend.matmul(b.cov().as_matrix()).matmul(&blend);
        let mean_s = vec_add(&vec_scale(b.mean(), 1.0 - s), &vec_scale(bbar.mean(), s));
        let trace_term = a_sq.matmul(&cov_s).trace();
        let mean_term = vec_norm_sq(&vec_add(&a.apply(&mean_s), grad.offset()));
        (trace_term + mean_term).max(0.0).sqrt()
    };

    let integral = simpson(&integrand, nodes);
    let lhs = objective(q, b)? - objective(q, bbar)?;
    let rhs = 2.0 / zeta * integral * integral;
    Ok(InequalityReport::new(
        "integrated_pl",
        lhs,
        rhs,
        rhs - lhs,
        format!("zeta={zeta} nodes={nodes} integral={integral}"),
    ))
}

/// Composite Simpson rule on `nodes` uniform points over `[0, 1]`
/// (`nodes` odd, ≥ 3).
fn simpson(f: &dyn Fn(f64) -> f64, nodes: usize) -> f64 {
    debug_assert!(nodes >= 3 && nodes % 2 == 1);
    let h = 1.0 / (nodes - 1) as f64;
    let mut acc = f(0.0) + f(1.0);
    for i in 1..nodes - 1 {
        let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += weight * f(i as f64 * h);
    }
    acc * h / 3.0
}

// ---------------------------------------------------------------------------
// Convexity probes along generalized geodesics
// ---------------------------------------------------------------------------

fn midpoint_convexity_report(name: &str, values: &[f64], context: String) -> InequalityReport {
    // Worst midpoint-convexity margin over grid pairs whose midpoint is a
    // grid point: ½(f_i + f_j) − f_{(i+j)/2}.
    let mut worst = f64::INFINITY;
    let mut worst_lhs = values[0];
    let mut worst_rhs = values[0];
    for i in 0..values.len() {
        for j in (i + 2)..values.len() {
            if (i + j) % 2 != 0 {
                continue;
            }
            let mid = values[(i + j) / 2];
            let avg = 0.5 * (values[i] + values[j]);
            let margin = avg - mid;
            if margin < worst {
                worst = margin;
                worst_lhs = mid;
                worst_rhs = avg;
            }
        }
    }
    InequalityReport::with_tol(name, worst_lhs, worst_rhs, worst, PROBE_TOL, context)
}

fn generalized_geodesic_values(
    base: &GaussianMeasure,
    m0: &GaussianMeasure,
    m1: &GaussianMeasure,
    grid: usize,
    f: impl Fn(&SpdMatrix, &[f64]) -> Result<f64>,
) -> Result<Vec<f64>> {
    if grid < 3 {
        return Err(Error::InvalidInput(format!(
            "grid must have at least 3 points, got {grid}"
        )));
    }
    let t0 = transport_map(base, m0)?;
    let t1 = transport_map(base, m1)?;
    let mut values = Vec::with_capacity(grid);
    for i in 0..grid {
        let s = i as f64 / (grid - 1) as f64;
        let blend = t0
            .matrix()
            .as_matrix()
            .scale(1.0 - s)
            .add(&t1.matrix().as_matrix().scale(s));
        let cov = SpdMatrix::new_symmetrized(blend.matmul(base.cov().as_matrix()).matmul(&blend));
        let mean = vec_add(&vec_scale(m0.mean(), 1.0 - s), &vec_scale(m1.mean(), s));
        values.push(f(&cov, &mean)?);
    }
    Ok(values)
}

/// Midpoint convexity of `s ↦ λ_max(second moment)` along the generalized
/// geodesic from `m0` to `m1` with the given base.
pub fn convexity_probe_opnorm(
    base: &GaussianMeasure,
    m0: &GaussianMeasure,
    m1: &GaussianMeasure,
    grid: usize,
) -> Result<InequalityReport> {
    let values = generalized_geodesic_values(base, m0, m1, grid, |cov, mean| {
        // Second moment Σ + m mᵀ.
        let mut second = cov.as_matrix().clone();
        let d = mean.len();
        for i in 0..d {
            for j in 0..d {
                second.set(i, j, second.get(i, j) + mean[i] * mean[j]);
            }
        }
        let eigs = sym_eigvals(&second)?;
        Ok(eigs[0])
    })?;
    Ok(midpoint_convexity_report(
        "convexity_opnorm",
        &values,
        format!("grid={grid}"),
    ))
}

/// Midpoint convexity of `s ↦ −Σ_i ln λ_i(Σ_s)` along the generalized
/// geodesic from `m0` to `m1` with the given base.
pub fn convexity_probe_neglogdet(
    base: &GaussianMeasure,
    m0: &GaussianMeasure,
    m1: &GaussianMeasure,
    grid: usize,
) -> Result<InequalityReport> {
    let values = generalized_geodesic_values(base, m0, m1, grid, |cov, _| Ok(-logdet(cov)?))?;
    Ok(midpoint_convexity_report(
        "convexity_neglogdet",
        &values,
        format!("grid={grid}"),
    ))
}

// ---------------------------------------------------------------------------
// The 2×2 non-convexity exhibit
// ---------------------------------------------------------------------------

/// The fixed 2×2 instance on which the squared distance is non-convex along
/// the matrix geodesic but convex along the Euclidean segment.
pub fn nonconvexity_matrices() -> (SpdMatrix, SpdMatrix, SpdMatrix) {
    let a = SpdMatrix::from_rows(&[vec![0.8, -0.4], vec![-0.4, 0.3]]).expect("PD");
    let b = SpdMatrix::from_rows(&[vec![0.3, -0.5], vec![-0.5, 1.0]]).expect("PD");
    let c = SpdMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.6]]).expect("PD");
    (a, b, c)
}

#[derive(Debug, Clone)]
pub struct NonconvexityRow {
    pub s: f64,
    /// `W₂²(γ_C, ·)` along the geodesic from A to B.
    pub geodesic_w2_sq: f64,
    /// `W₂²(γ_C, ·)` along the Euclidean segment `(1−s)A + sB`.
    pub euclidean_w2_sq: f64,
}

#[derive(Debug, Clone)]
pub struct NonconvexityDemo {
    pub rows: Vec<NonconvexityRow>,
    /// Midpoint-convexity violations found along the geodesic curve.
    pub geodesic_violations: usize,
    /// Violations along the Euclidean curve (expected zero).
    pub euclidean_violations: usize,
    pub worst_geodesic_margin: f64,
    pub worst_euclidean_margin: f64,
}

fn count_violations(values: &[f64]) -> (usize, f64) {
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for i in 0..values.len() {
        for j in (i + 2)..values.len() {
            if (i + j) % 2 != 0 {
                continue;
            }
            let margin = 0.5 * (values[i] + values[j]) - values[(i + j) / 2];
            worst = worst.min(margin);
            if margin < -PROBE_TOL {
                violations += 1;
            }
        }
    }
    (violations, worst)
}

/// Tabulates the squared distance to the fixed witness matrix along both the
/// matrix geodesic and the Euclidean segment between the exhibit endpoints,
/// then scans the grid for midpoint-convexity violations.
pub fn nonconvexity_demo(grid: usize) -> Result<NonconvexityDemo> {
    if grid < 3 {
        return Err(Error::InvalidInput(format!(
            "grid must have at least 3 points, got {grid}"
        )));
    }
    let (a, b, c) = nonconvexity_matrices();
    let ga = GaussianMeasure::centered(a.clone());
    let gb = GaussianMeasure::centered(b.clone());
    let gc = GaussianMeasure::centered(c);

    let transport = transport_map(&ga, &gb)?;
    let identity = Matrix::identity(2);

    let mut rows = Vec::with_capacity(grid);
    for i in 0..grid {
        let s = i as f64 / (grid - 1) as f64;

        let blend = identity
            .scale(1.0 - s)
            .add(&transport.matrix().as_matrix().scale(s));
        let geo_cov = SpdMatrix::new_symmetrized(blend.matmul(a.as_matrix()).matmul(&blend));
        let geodesic_w2_sq = w2_distance_sq(&gc, &GaussianMeasure::centered(geo_cov))?;

        let euclid_cov =
            SpdMatrix::new_symmetrized(a.as_matrix().scale(1.0 - s).add(&b.as_matrix().scale(s)));
        let euclidean_w2_sq = w2_distance_sq(&gc, &GaussianMeasure::centered(euclid_cov))?;

        rows.push(NonconvexityRow {
            s,
            geodesic_w2_sq,
            euclidean_w2_sq,
        });
    }

    let geo_values: Vec<f64> = rows.iter().map(|r| r.geodesic_w2_sq).collect();
    let euc_values: Vec<f64> = rows.iter().map(|r| r.euclidean_w2_sq).collect();
    let (geodesic_violations, worst_geodesic_margin) = count_violations(&geo_values);
    let (euclidean_violations, worst_euclidean_margin) = count_violations(&euc_values);

    Ok(NonconvexityDemo {
        rows,
        geodesic_violations,
        euclidean_violations,
        worst_geodesic_margin,
        worst_euclidean_margin,
    })
}

/// Extremal eigenvalues `(λ_min, λ_max)` of the transport matrix from `a`
/// to `b`: the strong-convexity and smoothness constants of the transport
/// potential. When all eigenvalues of both covariances lie in
/// `[λ_min, λ_max]`, both values lie in `[κ⁻¹, κ]` with `κ = λ_max/λ_min`.
pub fn regularity_constants(a: &GaussianMeasure, b: &GaussianMeasure) -> Result<(f64, f64)> {
    let t = transport_map(a, b)?;
    let eigs = sym_eigvals(t.matrix().as_matrix())?;
    Ok((*eigs.last().expect("nonempty"), eigs[0]))
}

// ---------------------------------------------------------------------------
// Random regular instances for Monte Carlo certification
// ---------------------------------------------------------------------------

/// Random orthogonal matrix: Gram-Schmidt applied to a square matrix of
/// standard normals.
pub fn random_orthogonal(rng: &mut Rng, dim: usize) -> Matrix {
    loop {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(dim);
        for _ in 0..dim {
            cols.push((0..dim).map(|_| rng.normal()).collect());
        }
        let mut ok = true;
        for k in 0..dim {
            let (done, rest) = cols.split_at_mut(k);
            let col = &mut rest[0];
            for prev in done.iter() {
                let proj: f64 = col.iter().zip(prev.iter()).map(|(x, y)| x * y).sum();
                for (x, y) in col.iter_mut().zip(prev.iter()) {
                    *x -= proj * y;
                }
            }
            let norm = vec_norm_sq(col).sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            for x in col.iter_mut() {
                *x /= norm;
            }
        }
        if !ok {
            continue;
        }
        let mut m = Matrix::zeros(dim);
        for (j, col) in cols.iter().enumerate() {
            for (i, &value) in col.iter().enumerate() {
                m.set(i, j, value);
            }
        }
        return m;
    }
}

/// Random covariance with eigenvalues drawn uniformly in
/// `[eig_floor, 1]` and a random orthogonal eigenbasis, then clamped into
/// the unit operator-norm ball. The result lies in the regular set for
/// `ζ = eig_floor^D`.
pub fn random_regular_cov(rng: &mut Rng, dim: usize, eig_floor: f64) -> SpdMatrix {
    assert!(eig_floor > 0.0 && eig_floor <= 1.0);
    let u = random_orthogonal(rng, dim);
    let eigs: Vec<f64> = (0..dim)
        .map(|_| eig_floor + (1.0 - eig_floor) * rng.uniform())
        .collect();
    let d = Matrix::diag(&eigs);
    let sigma = u.matmul(&d).matmul(&u.transpose()).symmetrized();
    let cov = SpdMatrix::new_symmetrized(sigma);
    // Conjugation roundoff can nudge the top eigenvalue past 1.
    let op = crate::spd::opnorm(&cov).expect("eig of constructed covariance");
    if op > 1.0 {
        cov.scale(1.0 / op).expect("positive scale")
    } else {
        cov
    }
}

/// Random centered measure in the regular set for `ζ = eig_floor^D`.
pub fn random_regular_measure(rng: &mut Rng, dim: usize, eig_floor: f64) -> GaussianMeasure {
    GaussianMeasure::centered(random_regular_cov(rng, dim, eig_floor))
}

/// Uniformly weighted distribution of `atoms` random regular measures.
pub fn random_regular_distribution(
    rng: &mut Rng,
    dim: usize,
    atoms: usize,
    eig_floor: f64,
) -> Result<BuresDistribution> {
    BuresDistribution::uniform(
        (0..atoms)
            .map(|_| random_regular_measure(rng, dim, eig_floor))
            .collect(),
    )
}
