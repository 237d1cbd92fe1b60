//! File formats shared by the library and the CLI.
//!
//! Datasets are JSON with an explicit dimension and a list of weighted
//! atoms:
//!
//! ```json
//! {
//!   "dim": 2,
//!   "atoms": [
//!     { "weight": 0.5, "mean": [0.0, 0.0], "cov": [[1.0, 0.0], [0.0, 1.0]] },
//!     { "weight": 0.5, "mean": [0.0, 0.0], "cov": [[4.0, 0.0], [0.0, 4.0]] }
//!   ]
//! }
//! ```
//!
//! Floats are emitted in shortest-round-trip decimal form, so a written file
//! reloads to bit-identical values. Weights must sum to 1 within `1e-9` on
//! load and are renormalized to machine precision. Every covariance is
//! validated on load; failures name the offending atom and invariant.
//!
//! A single Gaussian measure travels as a one-atom dataset with weight 1.
//! Solver traces and experiment curves are CSV.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::experiments::ReplicatedCurves;
use crate::geometry::{BuresDistribution, GaussianMeasure};
use crate::solver::SolverTrace;
use crate::spd::SpdMatrix;
use crate::{Error, Result};

/// On-disk dataset shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetFile {
    pub dim: usize,
    pub atoms: Vec<AtomRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtomRecord {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl DatasetFile {
    pub fn from_distribution(q: &BuresDistribution) -> Self {
        DatasetFile {
            dim: q.dim(),
            atoms: q
                .iter()
                .map(|(weight, atom)| AtomRecord {
                    weight,
                    mean: atom.mean().to_vec(),
                    cov: atom.cov().as_matrix().to_rows(),
                })
                .collect(),
        }
    }

    pub fn from_measure(m: &GaussianMeasure) -> Self {
        DatasetFile {
            dim: m.dim(),
            atoms: vec![AtomRecord {
                weight: 1.0,
                mean: m.mean().to_vec(),
                cov: m.cov().as_matrix().to_rows(),
            }],
        }
    }

    /// Validates the records and builds the distribution. Weight sums within
    /// `1e-9` of one are renormalized exactly.
    pub fn into_distribution(self) -> Result<BuresDistribution> {
        if self.dim == 0 {
            return Err(Error::InvalidInput("dim must be at least 1".into()));
        }
        if self.atoms.is_empty() {
            return Err(Error::InvalidInput("dataset has no atoms".into()));
        }

        let mut weight_sum = 0.0;
        for (i, atom) in self.atoms.iter().enumerate() {
            if !(atom.weight.is_finite() && atom.weight > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "atom {i}: weight {} is not positive",
                    atom.weight
                )));
            }
            weight_sum += atom.weight;
        }
        if (weight_sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "weights sum to {weight_sum}, expected 1 within 1e-9"
            )));
        }

        let mut atoms = Vec::with_capacity(self.atoms.len());
        let mut weights = Vec::with_capacity(self.atoms.len());
        for (i, record) in self.atoms.into_iter().enumerate() {
            if record.mean.len() != self.dim {
                return Err(Error::InvalidInput(format!(
                    "atom {i}: mean has {} entries, expected {}",
                    record.mean.len(),
                    self.dim
                )));
            }
            if record.cov.len() != self.dim {
                return Err(Error::InvalidInput(format!(
                    "atom {i}: cov has {} rows, expected {}",
                    record.cov.len(),
                    self.dim
                )));
            }
            for (r, row) in record.cov.iter().enumerate() {
                if row.len() != self.dim {
                    return Err(Error::InvalidInput(format!(
                        "atom {i}: cov row {r} has {} entries, expected {}",
                        row.len(),
                        self.dim
                    )));
                }
            }
            let cov = SpdMatrix::from_rows(&record.cov)
                .map_err(|e| Error::InvalidInput(format!("atom {i}: {e}")))?;
            let measure = GaussianMeasure::new(record.mean, cov)
                .map_err(|e| Error::InvalidInput(format!("atom {i}: {e}")))?;
            atoms.push(measure);
            weights.push(record.weight / weight_sum);
        }
        BuresDistribution::new(atoms, weights)
    }
}

pub fn read_dataset(path: &Path) -> Result<BuresDistribution> {
    let text = std::fs::read_to_string(path)?;
    let file: DatasetFile = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    file.into_distribution()
}

pub fn write_dataset(path: &Path, q: &BuresDistribution) -> Result<()> {
    let file = DatasetFile::from_distribution(q);
    let text =
        serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(format!("serialize: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Reads a single Gaussian measure: a one-atom dataset file.
pub fn read_measure(path: &Path) -> Result<GaussianMeasure> {
    let q = read_dataset(path)?;
    if q.len() != 1 {
        return Err(Error::InvalidInput(format!(
            "{}: expected a single-atom measure file, found {} atoms",
            path.display(),
            q.len()
        )));
    }
    Ok(q.atom(0).clone())
}

pub fn write_measure(path: &Path, m: &GaussianMeasure) -> Result<()> {
    let file = DatasetFile::from_measure(m);
    let text =
        serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(format!("serialize: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Serializes a measure to the JSON text of a one-atom dataset.
pub fn measure_to_json(m: &GaussianMeasure) -> String {
    serde_json::to_string_pretty(&DatasetFile::from_measure(m)).expect("measure serializes")
}

/// Parses and validates a dataset from JSON text.
pub fn dataset_from_json(text: &str) -> Result<BuresDistribution> {
    let file: DatasetFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.into_distribution()
}

pub fn dataset_to_json(q: &BuresDistribution) -> String {
    serde_json::to_string_pretty(&DatasetFile::from_distribution(q)).expect("dataset serializes")
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Solver trace CSV: `iter,objective,grad_norm_sq,w2_sq_to_ref,step_size`.
/// Missing values are empty fields.
pub fn write_trace_csv(out: &mut dyn Write, trace: &SolverTrace) -> Result<()> {
    writeln!(out, "iter,objective,grad_norm_sq,w2_sq_to_ref,step_size")?;
    for r in trace.records() {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.iter,
            opt(r.objective),
            opt(r.grad_norm_sq),
            opt(r.w2_sq_to_ref),
            opt(r.step_size)
        )?;
    }
    Ok(())
}

/// Replicated-experiment curve CSV: `iter,mean_error,lo95,hi95`.
pub fn write_curve_csv(out: &mut dyn Write, curves: &ReplicatedCurves) -> Result<()> {
    writeln!(out, "iter,mean_error,lo95,hi95")?;
    for i in 0..curves.iters.len() {
        writeln!(
            out,
            "{},{},{},{}",
            curves.iters[i], curves.mean_error[i], curves.lo95[i], curves.hi95[i]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::Matrix;

    fn sample_q() -> BuresDistribution {
        BuresDistribution::new(
            vec![
                GaussianMeasure::new(
                    vec![0.25, -1.5],
                    SpdMatrix::from_rows(&[vec![0.8, 0.3], vec![0.3, 0.9]]).unwrap(),
                )
                .unwrap(),
                GaussianMeasure::new(
                    vec![1.0 / 3.0, 2.0f64.sqrt()],
                    SpdMatrix::from_rows(&[vec![0.5, -0.2], vec![-0.2, 0.7]]).unwrap(),
                )
                .unwrap(),
            ],
            vec![0.3, 0.7],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join("bures-dataset-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.json");

        let q = sample_q();
        write_dataset(&path, &q).unwrap();
        let back = read_dataset(&path).unwrap();

        assert_eq!(back.len(), q.len());
        for i in 0..q.len() {
            assert_eq!(back.weight(i).to_bits(), q.weight(i).to_bits());
            for (a, b) in back.atom(i).mean().iter().zip(q.atom(i).mean()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            assert_eq!(
                back.atom(i).cov().as_matrix().as_slice(),
                q.atom(i).cov().as_matrix().as_slice()
            );
        }
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn validation_names_offending_atom() {
        let file = DatasetFile {
            dim: 2,
            atoms: vec![
                AtomRecord {
                    weight: 0.5,
                    mean: vec![0.0, 0.0],
                    cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                },
                AtomRecord {
                    weight: 0.5,
                    mean: vec![0.0, 0.0],
                    cov: vec![vec![1.0, 0.5], vec![0.0, 1.0]], // asymmetric
                },
            ],
        };
        let err = file.into_distribution().unwrap_err().to_string();
        assert!(err.contains("atom 1"), "message was: {err}");
        assert!(err.contains("symmetric"), "message was: {err}");
    }

    #[test]
    fn weight_checks() {
        let mk = |w0: f64, w1: f64| DatasetFile {
            dim: 1,
            atoms: vec![
                AtomRecord {
                    weight: w0,
                    mean: vec![0.0],
                    cov: vec![vec![1.0]],
                },
                AtomRecord {
                    weight: w1,
                    mean: vec![0.0],
                    cov: vec![vec![2.0]],
                },
            ],
        };
        assert!(mk(0.5, 0.6).into_distribution().is_err());
        assert!(mk(-0.1, 1.1).into_distribution().is_err());
        // Sub-1e-9 drift is accepted and renormalized.
        let q = mk(0.5, 0.5 + 3e-10).into_distribution().unwrap();
        let total: f64 = q.weights().iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn dimension_checks_name_atoms() {
        let file = DatasetFile {
            dim: 2,
            atoms: vec![AtomRecord {
                weight: 1.0,
                mean: vec![0.0],
                cov: vec![vec![1.0]],
            }],
        };
        let err = file.into_distribution().unwrap_err().to_string();
        assert!(err.contains("atom 0"), "message was: {err}");
    }

    #[test]
    fn measure_files_require_single_atom() {
        let dir = std::env::temp_dir().join("bures-dataset-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("measure.json");
        write_dataset(&path, &sample_q()).unwrap();
        assert!(read_measure(&path).is_err());

        let m = GaussianMeasure::standard(3);
        write_measure(&path, &m).unwrap();
        let back = read_measure(&path).unwrap();
        assert_eq!(back.cov().as_matrix(), &Matrix::identity(3));
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn trace_csv_shape() {
        let q = BuresDistribution::uniform(vec![
            GaussianMeasure::centered(SpdMatrix::from_diag(&[1.0]).unwrap()),
            GaussianMeasure::centered(SpdMatrix::from_diag(&[4.0]).unwrap()),
        ])
        .unwrap();
        let out = crate::solver::gd(&q, q.atom(0), 20, 1e-12, Some(q.atom(0))).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &out.trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,objective,grad_norm_sq,w2_sq_to_ref,step_size"
        );
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,"));
        assert!(
            first.ends_with(','),
            "iteration 0 has no step size: {first}"
        );
    }
}
