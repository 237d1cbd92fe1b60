//! Gaussian measures under the 2-Wasserstein metric.
//!
//! Between Gaussians the optimal coupling is an explicit affine map
//!
//! ```text
//! T(x) = m₁ + Σ₀^{-1/2} (Σ₀^{1/2} Σ₁ Σ₀^{1/2})^{1/2} Σ₀^{-1/2} (x − m₀),
//! ```
//!
//! so the squared distance, the exponential and logarithmic maps, geodesics,
//! and generalized geodesics all have closed forms in terms of symmetric
//! matrix roots. This module materializes those maps.
//!
//! Means are carried through every formula even though the solvers treat
//! them separately: the matrix part acts on centered fluctuations, the
//! offset carries the mean displacement.

use crate::spd::{
    self, det_via_eigs, opnorm, sandwich_sqrt, spectral_roots, sym_eigvals, vec_add, vec_dot,
    vec_norm_sq, vec_scale, vec_sub, Matrix, SpdMatrix,
};
use crate::{Error, Result};

/// A Gaussian measure `γ_{m,Σ}` on `R^D`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: Vec<f64>,
    cov: SpdMatrix,
}

impl GaussianMeasure {
    pub fn new(mean: Vec<f64>, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch {
                left: mean.len(),
                right: cov.dim(),
            });
        }
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("mean has non-finite entries".into()));
        }
        Ok(GaussianMeasure { mean, cov })
    }

    /// Mean-zero Gaussian with the given covariance.
    pub fn centered(cov: SpdMatrix) -> Self {
        GaussianMeasure {
            mean: vec![0.0; cov.dim()],
            cov,
        }
    }

    /// `γ_{0, I_D}`.
    pub fn standard(dim: usize) -> Self {
        GaussianMeasure::centered(SpdMatrix::identity(dim))
    }

    pub fn dim(&self) -> usize {
        self.cov.dim()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    /// Pushforward under `x ↦ αx`: mean scales by `α`, covariance by `α²`.
    pub fn rescaled(&self, alpha: f64) -> Result<GaussianMeasure> {
        Ok(GaussianMeasure {
            mean: vec_scale(&self.mean, alpha),
            cov: self.cov.scale(alpha * alpha)?,
        })
    }

    /// Membership in the regular set `{‖Σ‖_op ≤ 1, det Σ ≥ ζ}` with a small
    /// numerical slack on both bounds.
    pub fn in_regular_set(&self, zeta: f64) -> bool {
        self.in_regular_set_with_slack(zeta, 1e-9)
    }

    pub fn in_regular_set_with_slack(&self, zeta: f64, slack: f64) -> bool {
        let op = match opnorm(&self.cov) {
            Ok(v) => v,
            Err(_) => return false,
        };
        let det = match det_via_eigs(&self.cov) {
            Ok(v) => v,
            Err(_) => return false,
        };
        op <= 1.0 + slack && det >= zeta - slack
    }
}

/// Optimal transport map between two Gaussians: `x ↦ Mx + v` with `M`
/// symmetric positive definite.
#[derive(Debug, Clone)]
pub struct TransportMap {
    matrix: SpdMatrix,
    offset: Vec<f64>,
}

impl TransportMap {
    pub fn matrix(&self) -> &SpdMatrix {
        &self.matrix
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        vec_add(&self.matrix.as_matrix().apply(x), &self.offset)
    }

    /// Covariance of the pushforward of `γ_{m,Σ}`: `M Σ M`.
    pub fn pushforward_cov(&self, cov: &SpdMatrix) -> SpdMatrix {
        let m = self.matrix.as_matrix();
        SpdMatrix::new_symmetrized(m.matmul(cov.as_matrix()).matmul(m))
    }
}

/// Tangent vector at a base Gaussian, represented as the affine displacement
/// field `x ↦ Vx + w` with `V` symmetric.
///
/// The logarithmic map of a target measure is such a field (`V = M − I`,
/// `w` the transport offset), and so is the barycenter-functional gradient.
#[derive(Debug, Clone)]
pub struct TangentMap {
    base: GaussianMeasure,
    sym: Matrix,
    offset: Vec<f64>,
}

impl TangentMap {
    pub fn new(base: GaussianMeasure, sym: Matrix, offset: Vec<f64>) -> Result<Self> {
        if sym.dim() != base.dim() || offset.len() != base.dim() {
            return Err(Error::DimensionMismatch {
                left: base.dim(),
                right: sym.dim(),
            });
        }
        Ok(TangentMap {
            sym: sym.symmetrized(),
            base,
            offset,
        })
    }

    pub fn zero(base: GaussianMeasure) -> Self {
        let dim = base.dim();
        TangentMap {
            base,
            sym: Matrix::zeros(dim),
            offset: vec![0.0; dim],
        }
    }

    pub fn base(&self) -> &GaussianMeasure {
        &self.base
    }

    pub fn sym(&self) -> &Matrix {
        &self.sym
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn scale(&self, factor: f64) -> TangentMap {
        TangentMap {
            base: self.base.clone(),
            sym: self.sym.scale(factor),
            offset: vec_scale(&self.offset, factor),
        }
    }

    /// Squared norm in `L²(base)`: `tr(Σ V²) + ‖V m + w‖²`.
    pub fn norm_sq(&self) -> f64 {
        let v2 = self.sym.matmul(&self.sym);
        let trace_term = v2.matmul(self.base.cov().as_matrix()).trace();
        let mean_term = vec_norm_sq(&vec_add(&self.sym.apply(self.base.mean()), &self.offset));
        (trace_term + mean_term).max(0.0)
    }

    /// Smallest eigenvalue of `I + V`; nonnegative means the vector can be
    /// exponentiated without leaving the manifold.
    pub fn exp_admissibility(&self) -> Result<f64> {
        let iv = Matrix::identity(self.sym.dim()).add(&self.sym);
        let eigs = sym_eigvals(&iv)?;
        Ok(*eigs.last().expect("nonempty"))
    }
}

/// Inner product of two tangent vectors in `L²(base)`:
/// `tr(U W Σ) + ⟨U m + u₀, W m + w₀⟩`.
pub fn tangent_inner(base: &GaussianMeasure, u: &TangentMap, w: &TangentMap) -> f64 {
    let trace_term = u
        .sym()
        .matmul(w.sym())
        .matmul(base.cov().as_matrix())
        .trace();
    let um = vec_add(&u.sym().apply(base.mean()), u.offset());
    let wm = vec_add(&w.sym().apply(base.mean()), w.offset());
    trace_term + vec_dot(&um, &wm)
}

/// Optimal transport map from `src` to `dst`.
///
/// Requires `src.cov` strictly positive definite.
pub fn transport_map(src: &GaussianMeasure, dst: &GaussianMeasure) -> Result<TransportMap> {
    check_dims(src, dst)?;
    let roots = spectral_roots(src.cov())?;
    let (sandwich_root, _) = sandwich_sqrt(&roots, dst.cov())?;
    let m = roots
        .inv_root
        .as_matrix()
        .matmul(sandwich_root.as_matrix())
        .matmul(roots.inv_root.as_matrix())
        .symmetrized();
    let offset = vec_sub(dst.mean(), &m.apply(src.mean()));
    Ok(TransportMap {
        matrix: SpdMatrix::new_symmetrized(m),
        offset,
    })
}

/// Squared 2-Wasserstein distance:
/// `‖m_a − m_b‖² + tr Σ_a + tr Σ_b − 2 tr (Σ_a^{1/2} Σ_b Σ_a^{1/2})^{1/2}`.
///
/// Positive semidefinite inputs suffice; no inversion is performed.
///
/// ```rust
/// use bures::geometry::{w2_distance_sq, GaussianMeasure};
/// use bures::SpdMatrix;
///
/// // Commuting case: distance accumulates (σ_a − σ_b)² per eigendirection.
/// let a = GaussianMeasure::standard(3);
/// let b = GaussianMeasure::centered(SpdMatrix::identity(3).scale(4.0)?);
/// assert!((w2_distance_sq(&a, &b)? - 3.0).abs() < 1e-12);
/// # Ok::<(), bures::Error>(())
/// ```
pub fn w2_distance_sq(a: &GaussianMeasure, b: &GaussianMeasure) -> Result<f64> {
    check_dims(a, b)?;
    let root_a = spd::sqrt_spd(a.cov())?;
    let inner = root_a
        .as_matrix()
        .matmul(b.cov().as_matrix())
        .matmul(root_a.as_matrix());
    let inner_eigs = sym_eigvals(&inner.symmetrized())?;
    let cross: f64 = inner_eigs.iter().map(|l| l.max(0.0).sqrt()).sum();
    let mean_part = vec_norm_sq(&vec_sub(a.mean(), b.mean()));
    Ok((mean_part + a.cov().trace() + b.cov().trace() - 2.0 * cross).max(0.0))
}

/// Logarithmic map `log_base(target) = T_{base→target} − id` as a tangent
/// vector at `base`.
pub fn log_map(base: &GaussianMeasure, target: &GaussianMeasure) -> Result<TangentMap> {
    let transport = transport_map(base, target)?;
    let sym = transport
        .matrix()
        .as_matrix()
        .sub(&Matrix::identity(base.dim()));
    Ok(TangentMap {
        base: base.clone(),
        sym,
        offset: transport.offset().to_vec(),
    })
}

/// Exponential map `exp_base(v) = (id + v)_# base`.
///
/// The pushforward of `γ_{m,Σ}` under `x ↦ (I+V)x + w` has mean
/// `(I+V)m + w` and covariance `(I+V) Σ (I+V)`. Fails when `I + V` has an
/// eigenvalue below the semidefiniteness tolerance.
pub fn exp_map(base: &GaussianMeasure, v: &TangentMap) -> Result<GaussianMeasure> {
    if v.sym().dim() != base.dim() {
        return Err(Error::DimensionMismatch {
            left: base.dim(),
            right: v.sym().dim(),
        });
    }
    let a = Matrix::identity(base.dim()).add(v.sym());
    let eigs = sym_eigvals(&a)?;
    let min_eig = *eigs.last().expect("nonempty");
    let tol = spd::psd_tol(eigs[0].abs());
    if min_eig < -tol {
        return Err(Error::ExpNotAdmissible { min_eig });
    }
    let cov = SpdMatrix::new_symmetrized(a.matmul(base.cov().as_matrix()).matmul(&a));
    let mean = vec_add(&a.apply(base.mean()), v.offset());
    Ok(GaussianMeasure { mean, cov })
}

/// Point at parameter `s ∈ [0, 1]` on the constant-speed geodesic from `a`
/// to `b` (displacement interpolation `((1−s) id + s T)_# a`).
pub fn geodesic_point(a: &GaussianMeasure, b: &GaussianMeasure, s: f64) -> Result<GaussianMeasure> {
    check_unit_interval(s)?;
    let transport = transport_map(a, b)?;
    let blend = Matrix::identity(a.dim())
        .scale(1.0 - s)
        .add(&transport.matrix().as_matrix().scale(s));
    let cov = SpdMatrix::new_symmetrized(blend.matmul(a.cov().as_matrix()).matmul(&blend));
    let mean = vec_add(&vec_scale(a.mean(), 1.0 - s), &vec_scale(b.mean(), s));
    Ok(GaussianMeasure { mean, cov })
}

/// Point at parameter `s` on the generalized geodesic with the given base,
/// `[(1−s) T_{base→m0} + s T_{base→m1}]_# base`.
pub fn generalized_geodesic_point(
    base: &GaussianMeasure,
    m0: &GaussianMeasure,
    m1: &GaussianMeasure,
    s: f64,
) -> Result<GaussianMeasure> {
    check_unit_interval(s)?;
    check_dims(base, m0)?;
    check_dims(base, m1)?;
    let t0 = transport_map(base, m0)?;
    let t1 = transport_map(base, m1)?;
    let blend = t0
        .matrix()
        .as_matrix()
        .scale(1.0 - s)
        .add(&t1.matrix().as_matrix().scale(s));
    let cov = SpdMatrix::new_symmetrized(blend.matmul(base.cov().as_matrix()).matmul(&blend));
    let mean = vec_add(&vec_scale(m0.mean(), 1.0 - s), &vec_scale(m1.mean(), s));
    Ok(GaussianMeasure { mean, cov })
}

fn check_dims(a: &GaussianMeasure, b: &GaussianMeasure) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

fn check_unit_interval(s: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidInput(format!(
            "geodesic parameter {s} outside [0, 1]"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Weighted collections of Gaussians
// ---------------------------------------------------------------------------

/// Finitely many weighted Gaussian atoms: the distribution the solvers consume.
#[derive(Debug, Clone)]
pub struct BuresDistribution {
    atoms: Vec<GaussianMeasure>,
    weights: Vec<f64>,
}

impl BuresDistribution {
    /// Weights must be positive and sum to 1 within `1e-12`; atoms must share
    /// a dimension.
    pub fn new(atoms: Vec<GaussianMeasure>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput(
                "distribution needs at least one atom".into(),
            ));
        }
        if atoms.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                left: atoms.len(),
                right: weights.len(),
            });
        }
        let dim = atoms[0].dim();
        for (i, atom) in atoms.iter().enumerate() {
            if atom.dim() != dim {
                return Err(Error::InvalidInput(format!(
                    "atom {i}: dimension {} differs from {}",
                    atom.dim(),
                    dim
                )));
            }
        }
        let mut sum = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "atom {i}: weight {w} not positive"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(BuresDistribution { atoms, weights })
    }

    pub fn uniform(atoms: Vec<GaussianMeasure>) -> Result<Self> {
        let n = atoms.len();
        if n == 0 {
            return Err(Error::InvalidInput(
                "distribution needs at least one atom".into(),
            ));
        }
        // Exact unit sum: the last weight absorbs the rounding.
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        let partial: f64 = weights[..n - 1].iter().sum();
        weights[n - 1] = 1.0 - partial;
        BuresDistribution::new(atoms, weights)
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    /// Always false: construction requires at least one atom.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn atom(&self, i: usize) -> &GaussianMeasure {
        &self.atoms[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn atoms(&self) -> &[GaussianMeasure] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &GaussianMeasure)> {
        self.weights.iter().copied().zip(self.atoms.iter())
    }

    /// The largest `ζ` for which every atom satisfies `det Σ ≥ ζ`: the
    /// minimum atom determinant (0 if any atom is singular).
    pub fn zeta(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| det_via_eigs(a.cov()).unwrap_or(0.0))
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks every atom against `‖Σ‖_op ≤ 1`, `det Σ ≥ ζ`.
    pub fn is_zeta_regular(&self, zeta: f64) -> bool {
        self.atoms.iter().all(|a| a.in_regular_set(zeta))
    }

    /// Index of the first atom violating regularity, with a description.
    pub fn regularity_violation(&self, zeta: f64) -> Option<(usize, String)> {
        for (i, atom) in self.atoms.iter().enumerate() {
            if !atom.in_regular_set(zeta) {
                let op = opnorm(atom.cov()).unwrap_or(f64::NAN);
                let det = det_via_eigs(atom.cov()).unwrap_or(f64::NAN);
                return Some((
                    i,
                    format!("atom {i}: opnorm {op:.6e}, det {det:.6e}, zeta {zeta:.6e}"),
                ));
            }
        }
        None
    }

    /// Pushforward of every atom under `x ↦ αx`.
    pub fn rescaled(&self, alpha: f64) -> Result<BuresDistribution> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| a.rescaled(alpha))
            .collect::<Result<Vec<_>>>()?;
        Ok(BuresDistribution {
            atoms,
            weights: self.weights.clone(),
        })
    }
}
