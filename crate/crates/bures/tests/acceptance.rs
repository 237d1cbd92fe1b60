//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Every tolerance is pinned here; nothing is calibrated at run time.

use std::time::Instant;

use bures::diagnostics::{
    check_integrated_pl, check_pl, check_smoothness, check_variance_inequality, nonconvexity_demo,
    random_regular_distribution, random_regular_measure, regularity_constants,
};
use bures::experiments::{fit_rate, sample_dataset, sample_recentred_in_band, ExperimentConfig};
use bures::geometry::{
    exp_map, geodesic_point, log_map, tangent_inner, transport_map, w2_distance_sq,
    BuresDistribution, GaussianMeasure,
};
use bures::rng::{derive_seed, Rng};
use bures::solver::{self, compensated_sum, gradient, objective};
use bures::spd::{sym_eigvals, Matrix, SpdMatrix};
use bures::StepSchedule;

fn gauss_1d(var: f64) -> GaussianMeasure {
    GaussianMeasure::centered(SpdMatrix::from_diag(&[var]).unwrap())
}

fn pass(criterion: usize, label: &str) {
    println!("[acceptance] criterion {criterion} ({label}): PASS");
}

// -------------------------------------------------------------------------
// 1. GD linear rate on recentred regular datasets
// -------------------------------------------------------------------------

#[test]
fn acceptance_1_gd_linear_rate() {
    let started = Instant::now();
    let datasets = 20usize;
    let cfg = ExperimentConfig {
        dim: 3,
        n: 50,
        sigma2: 0.001,
        base: GaussianMeasure::centered(SpdMatrix::from_diag(&[0.72; 3]).unwrap()),
        schedule: StepSchedule::constant(1.0).unwrap(),
        replicates: 1,
        seed: 0,
        recentre: true,
    };

    for d in 0..datasets {
        let mut dcfg = cfg.clone();
        dcfg.seed = derive_seed(20240, d as u64);
        // Eigenvalue floor 0.5 certifies zeta >= 0.125.
        let sampled = sample_recentred_in_band(&dcfg, 0.5, 200).unwrap();
        let q = &sampled.q;
        let zeta = q.zeta();
        assert!(
            zeta >= 0.125,
            "dataset {d}: zeta {zeta} below the certified floor"
        );

        let g_bar = objective(q, &dcfg.base).unwrap();
        let run = solver::gd(q, q.atom(0), 200, 1e-12, Some(&dcfg.base)).unwrap();
        assert!(run.converged, "dataset {d} did not converge");

        let rate = 1.0 - zeta * zeta / 4.0;
        let gap0 = run.trace.records()[0].objective.unwrap() - g_bar;
        assert!(gap0 > 0.0, "dataset {d}: zero initial gap");
        for record in run.trace.records() {
            let gap = record.objective.unwrap() - g_bar;
            let bound = rate.powi(record.iter as i32) * gap0 * (1.0 + 1e-6);
            assert!(
                gap <= bound,
                "dataset {d}, iter {}: gap {gap:e} above bound {bound:e}",
                record.iter
            );
            // Distance form of the same rate, through the quadratic growth
            // of the objective around the barycenter:
            // W2^2(b_T, bbar) <= (2/zeta) (1 - zeta^2/4)^T gap_0.
            let w2 = record.w2_sq_to_ref.unwrap();
            assert!(
                w2 <= 2.0 / zeta * bound,
                "dataset {d}, iter {}: W2^2 {w2:e} above the distance-rate bound",
                record.iter
            );
        }
    }

    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed < 10.0,
        "criterion 1 took {elapsed:.2} s, budget 10 s"
    );
    pass(1, "GD linear rate, 20 recentred regular datasets");
}

// -------------------------------------------------------------------------
// 2. GD one-step and scalar closed forms
// -------------------------------------------------------------------------

#[test]
fn acceptance_2_gd_closed_forms() {
    // Single atom: one exact step from any PD initialization.
    let atom = GaussianMeasure::centered(
        SpdMatrix::from_rows(&[
            vec![0.7, 0.2, 0.0],
            vec![0.2, 0.5, -0.1],
            vec![0.0, -0.1, 0.9],
        ])
        .unwrap(),
    );
    let q = BuresDistribution::uniform(vec![atom.clone()]).unwrap();
    let init = GaussianMeasure::centered(
        SpdMatrix::from_rows(&[
            vec![0.3, 0.0, 0.1],
            vec![0.0, 0.8, 0.0],
            vec![0.1, 0.0, 0.4],
        ])
        .unwrap(),
    );
    let run = solver::gd(&q, &init, 50, 1e-12, None).unwrap();
    assert_eq!(
        run.iterations, 1,
        "single-atom GD must land in one iteration"
    );
    assert!(w2_distance_sq(&run.final_measure, &atom).unwrap() <= 1e-10);

    // Scalar fixed point ((sqrt(1) + sqrt(4))/2)^2 = 2.25.
    let q = BuresDistribution::uniform(vec![gauss_1d(1.0), gauss_1d(4.0)]).unwrap();
    let run = solver::gd(&q, &gauss_1d(1.0), 50, 1e-12, None).unwrap();
    assert!(run.converged);
    assert!((run.final_measure.cov().get(0, 0) - 2.25).abs() <= 1e-10);

    pass(2, "one-step single atom + scalar fixed point");
}

// -------------------------------------------------------------------------
// 3. SGD statistical rate on the desk-scaled sampling setup
// -------------------------------------------------------------------------

/// Tangent draw of the experiment sampling law, independent of the library
/// path: symmetrized i.i.d. Gaussian entries, conditioned on `I + V` PD.
fn draw_admissible_tangent(rng: &mut Rng, dim: usize, sigma: f64) -> Matrix {
    loop {
        let mut a = Matrix::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                a.set(i, j, sigma * rng.normal());
            }
        }
        let v = a.symmetrized();
        let iv = Matrix::identity(dim).add(&v);
        if *sym_eigvals(&iv).unwrap().last().unwrap() > 0.0 {
            return v;
        }
    }
}

#[test]
fn acceptance_3_sgd_statistical_rate() {
    let started = Instant::now();
    let (dim, n, replicates, sigma2) = (3usize, 200usize, 20usize, 0.25f64);
    let schedule = StepSchedule::inverse_t(0.7).unwrap();

    // The sampling law is orthogonally invariant, so its barycenter is c·I
    // with sqrt(c) = 1 + E[tr V / 3 | admissible]; estimate the scalar by
    // direct Monte Carlo over the same tangent law.
    let mut mc = Rng::seed_from_u64(0x5ca1ab1e);
    let mc_draws = 1_000_000usize;
    let mut acc = 0.0;
    for _ in 0..mc_draws {
        let v = draw_admissible_tangent(&mut mc, dim, sigma2.sqrt());
        acc += v.trace() / dim as f64;
    }
    let delta = acc / mc_draws as f64;
    let c = (1.0 + delta) * (1.0 + delta);
    let reference = GaussianMeasure::centered(SpdMatrix::identity(dim).scale(c).unwrap());

    let cfg = ExperimentConfig {
        dim,
        n,
        sigma2,
        base: GaussianMeasure::standard(dim),
        schedule: schedule.clone(),
        replicates,
        seed: 0,
        recentre: false,
    };

    let mut curves: Vec<Vec<f64>> = Vec::with_capacity(replicates);
    let mut zeta_min = f64::INFINITY;
    let mut var_terms = Vec::with_capacity(replicates);
    for r in 0..replicates {
        let mut rep = cfg.clone();
        rep.seed = derive_seed(2024, r as u64);
        let sampled = sample_dataset(&rep).unwrap();
        zeta_min = zeta_min.min(sampled.q.zeta());
        var_terms.push(solver::variance(&sampled.q, &reference).unwrap());
        let init = sampled.q.atom(0).clone();
        let run = solver::sgd(
            &sampled.q.atoms()[1..],
            &init,
            &schedule,
            None,
            Some(&reference),
        )
        .unwrap();
        curves.push(run.trace.error_curve().unwrap());
    }

    let len = curves[0].len();
    assert_eq!(len, n);
    let mean: Vec<f64> = (0..len)
        .map(|t| {
            let vals: Vec<f64> = curves.iter().map(|c| c[t]).collect();
            compensated_sum(&vals) / replicates as f64
        })
        .collect();

    let fit = fit_rate(&mean, (len / 2)..len).unwrap();
    assert!(
        (-1.2..=-0.8).contains(&fit.slope),
        "log-log slope {} outside -1 +/- 0.2 (r^2 {})",
        fit.slope,
        fit.r_squared
    );

    // Rate-constant ceiling: E W2^2 after n steps is below 96 var(Q)/(n zeta^5).
    // The sampled atoms leave the unit operator-norm ball, so zeta is tiny
    // and this ceiling is loose by construction; it is asserted as stated.
    let var_q = compensated_sum(&var_terms) / replicates as f64;
    let zeta = zeta_min.min(1.0);
    assert!(zeta > 0.0);
    let ceiling = 96.0 * var_q / (n as f64 * zeta.powi(5));
    let final_error = *mean.last().unwrap();
    assert!(
        final_error <= ceiling,
        "final mean error {final_error} above the rate ceiling {ceiling}"
    );

    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed < 60.0,
        "criterion 3 took {elapsed:.2} s, budget 60 s"
    );
    println!(
        "[acceptance]   slope {:.3}, r^2 {:.3}, final mean error {:.4e}, reference scale {:.6}",
        fit.slope, fit.r_squared, final_error, c
    );
    pass(3, "SGD statistical rate, slope -1 +/- 0.2");
}

// -------------------------------------------------------------------------
// 4. Inequality certification suites
// -------------------------------------------------------------------------

#[test]
fn acceptance_4_inequality_certification() {
    let trials = 100usize;
    let dims = [2usize, 3, 4];
    let floors = [0.5f64, 0.25];
    let mut counts = [0usize; 4];

    for trial in 0..trials {
        let dim = dims[trial % dims.len()];
        let floor = floors[(trial / dims.len()) % floors.len()];
        let zeta = floor.powi(dim as i32);
        let mut rng = Rng::seed_from_u64(derive_seed(40400, trial as u64));

        let q = random_regular_distribution(&mut rng, dim, 5, floor).unwrap();
        let b = random_regular_measure(&mut rng, dim, floor);
        let b2 = random_regular_measure(&mut rng, dim, floor);
        let bbar = solver::gd(&q, solver::default_init(&q), 2000, 1e-18, None)
            .unwrap()
            .final_measure;
        let residual = solver::fixed_point_residual(&q, &bbar).unwrap();
        assert!(
            residual <= 1e-8,
            "trial {trial}: barycenter residual {residual:e}"
        );

        let reports = [
            check_pl(&q, &b, &bbar, zeta).unwrap(),
            check_variance_inequality(&q, &b, &bbar, zeta).unwrap(),
            check_smoothness(&q, &b, &b2).unwrap(),
            check_integrated_pl(&q, &b, &bbar, zeta, 33).unwrap(),
        ];
        for (k, report) in reports.iter().enumerate() {
            assert!(
                report.satisfied && report.margin >= -1e-8,
                "trial {trial} (dim {dim}, floor {floor}): {} failed with margin {:e}\n{}",
                report.name,
                report.margin,
                report.to_line()
            );
            counts[k] += 1;
        }
    }

    assert_eq!(counts, [trials; 4]);
    pass(
        4,
        "PL/variance/smoothness/integrated-PL, 100/100 trials each",
    );
}

// -------------------------------------------------------------------------
// 5. Non-convexity exhibit
// -------------------------------------------------------------------------

#[test]
fn acceptance_5_nonconvexity_exhibit() {
    let started = Instant::now();
    let demo = nonconvexity_demo(101).unwrap();
    assert!(
        demo.geodesic_violations > 0,
        "expected a midpoint-convexity violation along the matrix geodesic"
    );
    assert_eq!(
        demo.euclidean_violations, 0,
        "Euclidean curve must be convex"
    );
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "criterion 5 took {elapsed:.3} s, budget 1 s");
    pass(
        5,
        "squared distance non-convex along the geodesic, convex along the segment",
    );
}

// -------------------------------------------------------------------------
// 6. Geometry property corpus
// -------------------------------------------------------------------------

#[test]
fn acceptance_6_geometry_properties() {
    let instances = 200usize;
    let mut rng = Rng::seed_from_u64(60606);

    for i in 0..instances {
        let dim = 2 + (i % 5); // dimensions 2..=6
        let floor = 0.25;
        let a = random_regular_measure(&mut rng, dim, floor);
        let b = random_regular_measure(&mut rng, dim, floor);
        let nu = random_regular_measure(&mut rng, dim, floor);

        // Transport consistency: pushing the source covariance reproduces
        // the destination covariance.
        let t = transport_map(&a, &b).unwrap();
        let pushed = t.pushforward_cov(a.cov());
        let err = pushed.as_matrix().sub(b.cov().as_matrix()).max_abs_entry();
        assert!(
            err <= 1e-8,
            "instance {i}: transport consistency error {err:e}"
        );

        // Norm compatibility and log/exp round trip.
        let log = log_map(&a, &b).unwrap();
        let w2 = w2_distance_sq(&a, &b).unwrap();
        assert!(
            (log.norm_sq() - w2).abs() <= 1e-8,
            "instance {i}: log norm vs distance"
        );
        let back = exp_map(&a, &log).unwrap();
        assert!(
            w2_distance_sq(&back, &b).unwrap().sqrt() <= 1e-7,
            "instance {i}: exp(log) round trip"
        );

        // Constant-speed geodesics.
        let w = w2.sqrt();
        for s in [0.25, 0.5, 0.75] {
            let mid = geodesic_point(&a, &b, s).unwrap();
            let speed = w2_distance_sq(&a, &mid).unwrap().sqrt();
            assert!(
                (speed - s * w).abs() <= 1e-7,
                "instance {i}, s={s}: speed {speed} vs {}",
                s * w
            );
        }

        // Non-negative curvature comparison inequality.
        let w2_a_nu = w2_distance_sq(&a, &nu).unwrap();
        let w2_b_nu = w2_distance_sq(&b, &nu).unwrap();
        for s in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let mid = geodesic_point(&a, &b, s).unwrap();
            let lhs = w2_distance_sq(&mid, &nu).unwrap();
            let rhs = (1.0 - s) * w2_a_nu + s * w2_b_nu - s * (1.0 - s) * w2;
            assert!(
                lhs >= rhs - 1e-8,
                "instance {i}, s={s}: curvature {lhs} < {rhs}"
            );
        }

        // Transport-matrix eigenvalue bounds from the eigenvalue band
        // [0.25, 1]: kappa = 4.
        let (lo, hi) = regularity_constants(&a, &b).unwrap();
        assert!(
            lo >= 0.25 - 1e-9,
            "instance {i}: transport eig {lo} below 1/kappa"
        );
        assert!(
            hi <= 4.0 + 1e-9,
            "instance {i}: transport eig {hi} above kappa"
        );
    }

    pass(
        6,
        "transport/log-exp/geodesic/curvature/regularity, 200 instances",
    );
}

// -------------------------------------------------------------------------
// 7. Rescaling equivariance of computed barycenters
// -------------------------------------------------------------------------

#[test]
fn acceptance_7_rescaling_equivariance() {
    let mut rng = Rng::seed_from_u64(70707);
    for case in 0..5 {
        let dim = 2 + (case % 3);
        let q = random_regular_distribution(&mut rng, dim, 4, 0.4).unwrap();
        let bary = solver::gd(&q, solver::default_init(&q), 3000, 1e-20, None)
            .unwrap()
            .final_measure;
        for alpha in [0.5, 2.0] {
            let q_scaled = q.rescaled(alpha).unwrap();
            let bary_scaled = solver::gd(
                &q_scaled,
                solver::default_init(&q_scaled),
                3000,
                1e-20,
                None,
            )
            .unwrap()
            .final_measure;
            let expected = bary.rescaled(alpha).unwrap();
            let err = w2_distance_sq(&bary_scaled, &expected).unwrap();
            assert!(err <= 1e-10, "case {case}, alpha {alpha}: W2^2 {err:e}");
        }
    }
    pass(7, "barycenter(Q_alpha) = alpha-scaled barycenter(Q)");
}

// -------------------------------------------------------------------------
// 8. Gradient consistency along geodesics
// -------------------------------------------------------------------------

#[test]
fn acceptance_8_gradient_consistency() {
    let s = 1e-4;
    let mut rng = Rng::seed_from_u64(80808);
    for case in 0..50 {
        let dim = 2 + (case % 3);
        let q = random_regular_distribution(&mut rng, dim, 4, 0.3).unwrap();
        let b0 = random_regular_measure(&mut rng, dim, 0.3);
        let b1 = random_regular_measure(&mut rng, dim, 0.3);

        let grad = gradient(&q, &b0).unwrap();
        let log = log_map(&b0, &b1).unwrap();
        let inner = tangent_inner(&b0, &grad, &log);

        let bs = geodesic_point(&b0, &b1, s).unwrap();
        let fd = (objective(&q, &bs).unwrap() - objective(&q, &b0).unwrap()) / s;

        assert!(
            (fd - inner).abs() <= 10.0 * s,
            "case {case}: directional derivative {fd} vs inner product {inner} (err {:e})",
            (fd - inner).abs()
        );
    }
    pass(
        8,
        "finite-difference directional derivatives match the gradient",
    );
}

// -------------------------------------------------------------------------
// Qualitative report: averaging under poor conditioning (no rate asserted)
// -------------------------------------------------------------------------

#[test]
fn report_averaging_under_poor_conditioning() {
    // Desk-scale version of the ill-conditioned setup; the comparison is
    // reported, not asserted, since no rate is certified for the averaged
    // sequence.
    let mut cfg = bures::experiments::poorly_conditioned_config();
    cfg.n = 120;
    cfg.replicates = 3;
    cfg.seed = 9;

    let sgd = bures::experiments::run_replicated(&cfg, bures::experiments::Variant::Sgd).unwrap();
    let avg =
        bures::experiments::run_replicated(&cfg, bures::experiments::Variant::AveragedSgd).unwrap();
    let sgd_final = *sgd.mean_error.last().unwrap();
    let avg_final = *avg.mean_error.last().unwrap();
    println!(
        "[acceptance]   poor conditioning, final mean error: sgd {sgd_final:.4}, averaged {avg_final:.4} \
         (improvement factor {:.2}; reported only)",
        sgd_final / avg_final
    );
}
