//! Command-line front end: barycenter solvers, inequality diagnostics,
//! replicated experiments, and distances over JSON dataset files.
//!
//! Exit codes: 0 success/convergence, 1 validation or I/O error, 2 solver
//! finished without reaching the gradient tolerance, 3 regularity violation.
//! Stdout carries machine-readable output (JSON, CSV, report lines); stderr
//! carries human-readable notes.

use clap::{Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use bures::dataset::{
    measure_to_json, read_dataset, read_measure, write_curve_csv, write_measure, write_trace_csv,
};
use bures::diagnostics::{
    check_descent, check_integrated_pl, check_pl, check_smoothness, check_variance_inequality,
    convexity_probe_neglogdet, convexity_probe_opnorm, nonconvexity_demo, random_regular_measure,
    InequalityReport,
};
use bures::experiments::{self, ExperimentConfig, RateEstimate, Variant};
use bures::rng::{derive_seed, Rng};
use bures::solver::{self, default_init, SolverResult};
use bures::{BuresDistribution, Error, GaussianMeasure, StepSchedule};

#[derive(Parser)]
#[command(
    name = "bures",
    version,
    about = "Barycenters of Gaussian measures in the 2-Wasserstein geometry"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a barycenter solver on a dataset file.
    Barycenter {
        /// Solver variant.
        #[arg(value_enum)]
        solver: SolverKind,
        /// Dataset JSON file.
        #[arg(long)]
        input: PathBuf,
        /// Initial point: `atom:<i>` or `file:<path>` (default: heaviest atom).
        #[arg(long)]
        init: Option<String>,
        /// Stop when the squared gradient norm falls below this value.
        #[arg(long, default_value_t = solver::DEFAULT_GD_TOL)]
        tol: f64,
        /// Iteration cap (gd) or iteration count (sgd-replace).
        #[arg(long, default_value_t = solver::DEFAULT_GD_MAX_ITERS)]
        max_iters: usize,
        /// Step schedule: `paper_pl:c=<C>`, `exp:c=<c>`, `const:<eta>`, or
        /// `file:<path>` (default: paper_pl with C estimated as zeta^2/4).
        #[arg(long)]
        schedule: Option<String>,
        /// Seed for sgd-replace sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reference measure for the trace error column: a measure file or
        /// the token `fixed-point` (GD run to tolerance 1e-14 first).
        #[arg(long = "ref")]
        reference: Option<String>,
        /// Write the per-iteration trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the final measure here as a one-atom dataset (also printed
        /// to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify the convergence-theory inequalities on a dataset.
    Diagnose {
        /// Dataset JSON file.
        #[arg(long)]
        input: PathBuf,
        /// Evaluate the checks at this measure file instead of random points.
        #[arg(long)]
        point: Option<PathBuf>,
        /// Regularity level zeta (default: the smallest atom determinant).
        #[arg(long)]
        zeta: Option<f64>,
        /// Which inequality suite to run.
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        /// Random evaluation points per suite.
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Quadrature nodes for the integrated check.
        #[arg(long, default_value_t = 33)]
        quad_nodes: usize,
        /// Grid points for the convexity probes.
        #[arg(long, default_value_t = 17)]
        grid: usize,
        /// Emit the fixed 2x2 non-convexity table and verify the violation.
        #[arg(long)]
        demo_nonconvexity: bool,
    },
    /// Replicated synthetic experiment: sample datasets, run one solver
    /// variant, write mean error curves with 95% bands and a rate fit.
    Experiment {
        /// Experiment config JSON file.
        #[arg(long)]
        config: PathBuf,
        /// Solver variant: gd, sgd, sgd-replace, or avg-sgd.
        #[arg(long)]
        variant: String,
        /// Output directory for curve CSV and summary JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Squared and plain 2-Wasserstein distance between two measure files.
    Distance {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverKind {
    Gd,
    Sgd,
    #[value(name = "sgd-replace")]
    SgdReplace,
    #[value(name = "avg-sgd")]
    AvgSgd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Pl,
    Var,
    Smooth,
    Intpl,
    Convexity,
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NotRegular { .. } => ExitCode::from(3),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Barycenter {
            solver,
            input,
            init,
            tol,
            max_iters,
            schedule,
            seed,
            reference,
            trace,
            out,
        } => cmd_barycenter(
            solver, &input, init, tol, max_iters, schedule, seed, reference, trace, out,
        ),
        Command::Diagnose {
            input,
            point,
            zeta,
            suite,
            trials,
            seed,
            quad_nodes,
            grid,
            demo_nonconvexity,
        } => cmd_diagnose(
            &input,
            point,
            zeta,
            suite,
            trials,
            seed,
            quad_nodes,
            grid,
            demo_nonconvexity,
        ),
        Command::Experiment {
            config,
            variant,
            out,
        } => cmd_experiment(&config, &variant, &out),
        Command::Distance { a, b } => cmd_distance(&a, &b),
    }
}

// ---------------------------------------------------------------------------
// barycenter
// ---------------------------------------------------------------------------

fn parse_init(
    q: &BuresDistribution,
    spec: Option<&str>,
) -> Result<(GaussianMeasure, Option<usize>), Error> {
    match spec {
        None => {
            let init = default_init(q);
            let idx = q.atoms().iter().position(|a| std::ptr::eq(a, init));
            Ok((init.clone(), idx))
        }
        Some(s) => {
            if let Some(i) = s.strip_prefix("atom:") {
                let idx: usize = i
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad atom index in --init {s:?}")))?;
                if idx >= q.len() {
                    return Err(Error::InvalidInput(format!(
                        "--init atom:{idx} out of range (dataset has {} atoms)",
                        q.len()
                    )));
                }
                Ok((q.atom(idx).clone(), Some(idx)))
            } else if let Some(path) = s.strip_prefix("file:") {
                Ok((read_measure(Path::new(path))?, None))
            } else {
                Err(Error::InvalidInput(format!(
                    "--init must be atom:<i> or file:<path>, got {s:?}"
                )))
            }
        }
    }
}

fn resolve_reference(
    q: &BuresDistribution,
    spec: Option<&str>,
) -> Result<Option<GaussianMeasure>, Error> {
    match spec {
        None => Ok(None),
        Some("fixed-point") => {
            let run = solver::gd(q, default_init(q), 500, 1e-14, None)?;
            Ok(Some(run.final_measure))
        }
        Some(path) => Ok(Some(read_measure(Path::new(path))?)),
    }
}

fn resolve_schedule(q: &BuresDistribution, spec: Option<&str>) -> Result<StepSchedule, Error> {
    match spec {
        Some(s) => StepSchedule::parse_spec(s),
        None => {
            let zeta = q.zeta();
            let c = zeta * zeta / 4.0;
            if !c.is_finite() || c <= 0.0 {
                return Err(Error::InvalidSchedule(
                    "cannot estimate a PL constant from a dataset with a singular atom; pass \
                     --schedule explicitly"
                        .into(),
                ));
            }
            let schedule = StepSchedule::pl_driven(c.min(1.0))?;
            eprintln!(
                "note: using default schedule {schedule} (PL constant estimated as zeta^2/4)"
            );
            Ok(schedule)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_barycenter(
    solver_kind: SolverKind,
    input: &Path,
    init: Option<String>,
    tol: f64,
    max_iters: usize,
    schedule: Option<String>,
    seed: u64,
    reference: Option<String>,
    trace_path: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<ExitCode, Error> {
    let q = read_dataset(input)?;
    let (init_measure, init_idx) = parse_init(&q, init.as_deref())?;
    let reference = resolve_reference(&q, reference.as_deref())?;

    let result: SolverResult = match solver_kind {
        SolverKind::Gd => solver::gd(&q, &init_measure, max_iters, tol, reference.as_ref())?,
        SolverKind::SgdReplace => {
            let schedule = resolve_schedule(&q, schedule.as_deref())?;
            solver::sgd_with_replacement(
                &q,
                &init_measure,
                &schedule,
                max_iters,
                seed,
                true,
                reference.as_ref(),
            )?
        }
        SolverKind::Sgd | SolverKind::AvgSgd => {
            let schedule = resolve_schedule(&q, schedule.as_deref())?;
            // Stream = the atoms in file order, skipping the init atom when
            // the init came from the dataset itself.
            let stream: Vec<GaussianMeasure> = q
                .atoms()
                .iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != init_idx)
                .map(|(_, a)| a.clone())
                .collect();
            match solver_kind {
                SolverKind::Sgd => solver::sgd(
                    &stream,
                    &init_measure,
                    &schedule,
                    Some(&q),
                    reference.as_ref(),
                )?,
                _ => solver::averaged_sgd(
                    &stream,
                    &init_measure,
                    &schedule,
                    Some(&q),
                    reference.as_ref(),
                )?,
            }
        }
    };

    if let Some(path) = trace_path {
        let mut file = std::fs::File::create(&path)?;
        write_trace_csv(&mut file, &result.trace)?;
    }

    // Convergence for the stochastic variants is judged the same way as for
    // GD: final squared gradient norm against the tolerance.
    let final_gn = solver::grad_norm_sq(&q, &result.final_measure)?;
    let converged = match solver_kind {
        SolverKind::Gd => result.converged,
        _ => final_gn <= tol,
    };
    eprintln!(
        "{} iterations, grad_norm_sq {:e}, fixed-point residual {:e}",
        result.iterations,
        final_gn,
        solver::fixed_point_residual(&q, &result.final_measure)?
    );

    if let Some(path) = out {
        write_measure(&path, &result.final_measure)?;
    }
    println!("{}", measure_to_json(&result.final_measure));

    Ok(if converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn cmd_diagnose(
    input: &Path,
    point: Option<PathBuf>,
    zeta: Option<f64>,
    suite: Suite,
    trials: usize,
    seed: u64,
    quad_nodes: usize,
    grid: usize,
    demo_nonconvexity: bool,
) -> Result<ExitCode, Error> {
    let q = read_dataset(input)?;
    let zeta = zeta.unwrap_or_else(|| q.zeta());
    if let Some((idx, detail)) = q.regularity_violation(zeta) {
        return Err(Error::NotRegular {
            zeta,
            detail: format!("dataset atom {idx} outside the regular set ({detail})"),
        });
    }

    let dim = q.dim();
    let eig_floor = zeta.powf(1.0 / dim as f64).min(1.0);
    let bbar = solver::gd(&q, default_init(&q), 2000, 1e-18, None)?.final_measure;
    let residual = solver::fixed_point_residual(&q, &bbar)?;
    if residual > 1e-8 {
        eprintln!("warning: barycenter solve left residual {residual:e}");
    }

    let fixed_point = point.map(|p| read_measure(&p)).transpose()?;
    let mut reports: Vec<InequalityReport> = Vec::new();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();

    if demo_nonconvexity {
        let demo = nonconvexity_demo(101)?;
        writeln!(out, "s\tgeodesic_w2_sq\teuclidean_w2_sq")?;
        for row in &demo.rows {
            writeln!(
                out,
                "{}\t{}\t{}",
                row.s, row.geodesic_w2_sq, row.euclidean_w2_sq
            )?;
        }
        let found = demo.geodesic_violations > 0 && demo.euclidean_violations == 0;
        reports.push(InequalityReport {
            name: "nonconvexity_demo".into(),
            lhs: demo.worst_geodesic_margin,
            rhs: 0.0,
            margin: if found { 1.0 } else { -1.0 },
            satisfied: found,
            context: format!(
                "geodesic_violations={} euclidean_violations={}",
                demo.geodesic_violations, demo.euclidean_violations
            ),
        });
    }

    let runs = if fixed_point.is_some() {
        1
    } else {
        trials.max(1)
    };
    for trial in 0..runs {
        let mut rng = Rng::seed_from_u64(derive_seed(seed, trial as u64));
        let b = match &fixed_point {
            Some(m) => m.clone(),
            None => random_regular_measure(&mut rng, dim, eig_floor),
        };
        let b2 = random_regular_measure(&mut rng, dim, eig_floor);

        if matches!(suite, Suite::Pl | Suite::All) {
            reports.push(check_pl(&q, &b, &bbar, zeta)?);
        }
        if matches!(suite, Suite::Var | Suite::All) {
            reports.push(check_variance_inequality(&q, &b, &bbar, zeta)?);
        }
        if matches!(suite, Suite::Smooth | Suite::All) {
            reports.push(check_smoothness(&q, &b, &b2)?);
            reports.push(check_descent(&q, &b)?);
        }
        if matches!(suite, Suite::Intpl | Suite::All) {
            reports.push(check_integrated_pl(&q, &b, &bbar, zeta, quad_nodes)?);
        }
        if matches!(suite, Suite::Convexity | Suite::All) {
            let base = random_regular_measure(&mut rng, dim, eig_floor);
            let m0 = random_regular_measure(&mut rng, dim, eig_floor);
            let m1 = random_regular_measure(&mut rng, dim, eig_floor);
            reports.push(convexity_probe_opnorm(&base, &m0, &m1, grid)?);
            reports.push(convexity_probe_neglogdet(&base, &m0, &m1, grid)?);
        }
    }

    let mut all_ok = true;
    for report in &reports {
        writeln!(out, "{}", report.to_line())?;
        all_ok &= report.satisfied;
    }
    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

#[derive(serde::Serialize)]
struct ExperimentSummary {
    variant: String,
    replicates: usize,
    iterations: usize,
    final_mean_error: f64,
    rejection_rate: f64,
    outside_regular_ball: bool,
    slope: Option<f64>,
    fit: Option<RateEstimate>,
    fit_error: Option<String>,
}

fn cmd_experiment(config: &Path, variant: &str, out_dir: &Path) -> Result<ExitCode, Error> {
    let text = std::fs::read_to_string(config)?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", config.display())))?;
    let variant = Variant::from_str(variant)?;

    if cfg.outside_regular_ball() {
        eprintln!(
            "warning: base covariance lies outside the unit operator-norm ball; the regular-set \
             rate theory does not apply (rescale covariances by 1/opnorm to restore it)"
        );
    }

    let curves = experiments::run_replicated(&cfg, variant)?;
    std::fs::create_dir_all(out_dir)?;

    let curve_path = out_dir.join(format!("curve_{}.csv", variant.name()));
    let mut curve_file = std::fs::File::create(&curve_path)?;
    write_curve_csv(&mut curve_file, &curves)?;

    let len = curves.mean_error.len();
    let window = (len / 2).max(1)..len;
    let (fit, fit_error) = match experiments::fit_rate(&curves.mean_error, window) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let summary = ExperimentSummary {
        variant: variant.name().to_string(),
        replicates: curves.replicates,
        iterations: len,
        final_mean_error: *curves.mean_error.last().expect("nonempty curve"),
        rejection_rate: curves.rejection_rate,
        outside_regular_ball: curves.outside_regular_ball,
        slope: fit.as_ref().map(|f| f.slope),
        fit,
        fit_error,
    };
    let summary_text =
        serde_json::to_string_pretty(&summary).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(
        out_dir.join(format!("summary_{}.json", variant.name())),
        &summary_text,
    )?;
    println!("{summary_text}");
    eprintln!("curves: {}", curve_path.display());

    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// distance
// ---------------------------------------------------------------------------

fn cmd_distance(a: &Path, b: &Path) -> Result<ExitCode, Error> {
    let ma = read_measure(a)?;
    let mb = read_measure(b)?;
    let w2_sq = bures::geometry::w2_distance_sq(&ma, &mb)?;
    println!("w2_sq\t{w2_sq}");
    println!("w2\t{}", w2_sq.sqrt());
    Ok(ExitCode::SUCCESS)
}
