//! Step-size schedules for the stochastic solvers.
//!
//! Two parametric families plus constants and explicit sequences:
//!
//! - `paper_pl:c=<C>`: the PL-driven rule
//!   `η_t = C (1 − √(1 − (2(t+k)+1) / (C² (t+k+1)²)))` with offset
//!   `k = 2/C² − 1`. The offset makes the square root well defined and keeps
//!   every step inside `(0, 1)`; the rule is chosen to solve
//!   `1 − 2Cη_t + η_t² = ((t+k)/(t+k+1))²`, which telescopes the error
//!   recursion into an `O(1/t)` rate.
//! - `exp:c=<c>`: the decay `η_t = 2 / (c (t + 2/c + 1))` used by the
//!   experiment harness.
//! - `const:<η>`: a fixed step in `(0, 1]`.
//! - `file:<path>`: an explicit sequence, one step per line.
//!
//! The string forms above are the schedule mini-grammar shared by the CLI
//! and experiment config files.

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum StepSchedule {
    /// PL-driven rule (grammar token `paper_pl`).
    PlDriven { c_pl: f64, k: f64 },
    /// `η_t = 2 / (c (t + 2/c + 1))` (grammar token `exp`).
    InverseT { c: f64 },
    /// Fixed step in `(0, 1]`.
    Constant { eta: f64 },
    /// Explicit finite sequence; exhausting it is an error.
    Custom { etas: Vec<f64> },
}

impl StepSchedule {
    /// PL-driven schedule with the canonical offset `k = 2/C² − 1`.
    pub fn pl_driven(c_pl: f64) -> Result<Self> {
        if !(c_pl > 0.0 && c_pl <= 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "c_pl must lie in (0, 1], got {c_pl}"
            )));
        }
        let k = 2.0 / (c_pl * c_pl) - 1.0;
        Ok(StepSchedule::PlDriven { c_pl, k })
    }

    /// PL-driven schedule with an explicit offset; requires
    /// `C²(k+1)² ≥ 2k+1` and `k ≥ 0` so the square root stays real.
    pub fn pl_driven_with_offset(c_pl: f64, k: f64) -> Result<Self> {
        if !(c_pl > 0.0 && c_pl <= 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "c_pl must lie in (0, 1], got {c_pl}"
            )));
        }
        if !k.is_finite() || k < 0.0 {
            return Err(Error::InvalidSchedule(format!(
                "offset k must be nonnegative, got {k}"
            )));
        }
        if c_pl * c_pl * (k + 1.0) * (k + 1.0) < 2.0 * k + 1.0 {
            return Err(Error::InvalidSchedule(format!(
                "offset violates C²(k+1)² ≥ 2k+1 (c_pl = {c_pl}, k = {k})"
            )));
        }
        Ok(StepSchedule::PlDriven { c_pl, k })
    }

    pub fn inverse_t(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "decay constant must be positive, got {c}"
            )));
        }
        Ok(StepSchedule::InverseT { c })
    }

    pub fn constant(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "constant step must lie in (0, 1], got {eta}"
            )));
        }
        Ok(StepSchedule::Constant { eta })
    }

    pub fn custom(etas: Vec<f64>) -> Result<Self> {
        if etas.is_empty() {
            return Err(Error::InvalidSchedule("custom schedule is empty".into()));
        }
        for (t, &eta) in etas.iter().enumerate() {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::InvalidSchedule(format!(
                    "custom step {t} is {eta}, outside (0, 1]"
                )));
            }
        }
        Ok(StepSchedule::Custom { etas })
    }

    /// Number of steps, when the schedule is a finite sequence.
    pub fn finite_len(&self) -> Option<usize> {
        match self {
            StepSchedule::Custom { etas } => Some(etas.len()),
            _ => None,
        }
    }

    /// Step size at iteration `t` (0-based).
    pub fn step_size(&self, t: usize) -> Result<f64> {
        match self {
            StepSchedule::PlDriven { c_pl, k } => {
                let tk = t as f64 + k;
                let arg = 1.0 - (2.0 * tk + 1.0) / (c_pl * c_pl * (tk + 1.0) * (tk + 1.0));
                if arg < 0.0 {
                    return Err(Error::InvalidSchedule(format!(
                        "square-root argument {arg} negative at t = {t}"
                    )));
                }
                Ok(c_pl * (1.0 - arg.sqrt()))
            }
            StepSchedule::InverseT { c } => Ok(2.0 / (c * (t as f64 + 2.0 / c + 1.0))),
            StepSchedule::Constant { eta } => Ok(*eta),
            StepSchedule::Custom { etas } => etas.get(t).copied().ok_or(Error::ScheduleExhausted {
                needed: t + 1,
                available: etas.len(),
            }),
        }
    }

    /// Parses the schedule mini-grammar; `file:<path>` reads one step per line.
    pub fn parse_spec(spec: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidSchedule(format!("{msg}: {spec:?}"));
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| bad("expected kind:args (paper_pl, exp, const, or file)"))?;
        match kind {
            "paper_pl" | "exp" => {
                let mut c = None;
                let mut k = None;
                for part in rest.split(',') {
                    let (key, value) = part
                        .split_once('=')
                        .ok_or_else(|| bad("expected key=value"))?;
                    let parsed: f64 = value
                        .parse()
                        .map_err(|_| bad("step parameter is not a number"))?;
                    match key {
                        "c" => c = Some(parsed),
                        "k" if kind == "paper_pl" => k = Some(parsed),
                        _ => return Err(bad("unknown schedule parameter")),
                    }
                }
                let c = c.ok_or_else(|| bad("missing c="))?;
                match (kind, k) {
                    ("paper_pl", None) => StepSchedule::pl_driven(c),
                    ("paper_pl", Some(k)) => StepSchedule::pl_driven_with_offset(c, k),
                    ("exp", _) => StepSchedule::inverse_t(c),
                    _ => unreachable!(),
                }
            }
            "const" => {
                let eta: f64 = rest
                    .parse()
                    .map_err(|_| bad("constant step is not a number"))?;
                StepSchedule::constant(eta)
            }
            "file" => {
                let text = std::fs::read_to_string(rest)?;
                let etas = text
                    .split_whitespace()
                    .map(|tok| {
                        tok.parse::<f64>().map_err(|_| {
                            Error::InvalidSchedule(format!("bad step value {tok:?} in {rest}"))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                StepSchedule::custom(etas)
            }
            _ => Err(bad("unknown schedule kind")),
        }
    }
}

impl fmt::Display for StepSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSchedule::PlDriven { c_pl, k } => {
                let canonical = 2.0 / (c_pl * c_pl) - 1.0;
                if (k - canonical).abs() <= 1e-12 * canonical.max(1.0) {
                    write!(f, "paper_pl:c={c_pl}")
                } else {
                    write!(f, "paper_pl:c={c_pl},k={k}")
                }
            }
            StepSchedule::InverseT { c } => write!(f, "exp:c={c}"),
            StepSchedule::Constant { eta } => write!(f, "const:{eta}"),
            StepSchedule::Custom { etas } => write!(f, "custom:{} steps", etas.len()),
        }
    }
}

impl FromStr for StepSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StepSchedule::parse_spec(s)
    }
}

impl Serialize for StepSchedule {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StepSchedule::Custom { etas } => etas.serialize(serializer),
            other => serializer.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for StepSchedule {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct SpecVisitor;

        impl<'de> Visitor<'de> for SpecVisitor {
            type Value = StepSchedule;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a schedule spec string or an array of step sizes")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<StepSchedule, E> {
                StepSchedule::parse_spec(v).map_err(E::custom)
            }

            fn visit_seq<A: de::SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<StepSchedule, A::Error> {
                let mut etas = Vec::new();
                while let Some(eta) = seq.next_element::<f64>()? {
                    etas.push(eta);
                }
                StepSchedule::custom(etas).map_err(de::Error::custom)
            }
        }

        deserializer.deserialize_any(SpecVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pl_driven_unit_constant_first_step() {
        // C = 1 gives k = 1 and η₀ = 1 − √(1 − 3/4) = 1/2.
        let s = StepSchedule::pl_driven(1.0).unwrap();
        assert!((s.step_size(0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn inverse_t_first_step() {
        let s = StepSchedule::inverse_t(0.7).unwrap();
        assert!((s.step_size(0).unwrap() - 2.0 / 2.7).abs() < 1e-15);
    }

    #[test]
    fn pl_driven_solves_contraction_identity() {
        for c in [0.1, 0.25, 0.5, 1.0] {
            let s = StepSchedule::pl_driven(c).unwrap();
            let k = match s {
                StepSchedule::PlDriven { k, .. } => k,
                _ => unreachable!(),
            };
            for t in 0..=10_000usize {
                let eta = s.step_size(t).unwrap();
                let lhs = 1.0 - 2.0 * c * eta + eta * eta;
                let tk = t as f64 + k;
                let rhs = (tk / (tk + 1.0)) * (tk / (tk + 1.0));
                assert!((lhs - rhs).abs() < 1e-12, "c={c} t={t}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn steps_stay_in_unit_interval() {
        for c in [0.1, 0.5, 1.0] {
            let s = StepSchedule::pl_driven(c).unwrap();
            for t in (0..=1_000_000usize).step_by(97) {
                let eta = s.step_size(t).unwrap();
                assert!(eta > 0.0 && eta < 1.0, "c={c} t={t} eta={eta}");
            }
            // Edges of the scan.
            for t in [0usize, 1, 2, 999_999, 1_000_000] {
                let eta = s.step_size(t).unwrap();
                assert!(eta > 0.0 && eta < 1.0);
            }
        }
        let e = StepSchedule::inverse_t(0.7).unwrap();
        for t in [0usize, 10, 1_000_000] {
            let eta = e.step_size(t).unwrap();
            assert!(eta > 0.0 && eta < 1.0);
        }
    }

    #[test]
    fn invalid_offsets_rejected() {
        // C²(k+1)² = 0.25 < 1 = 2k+1 at k = 0.
        assert!(matches!(
            StepSchedule::pl_driven_with_offset(0.5, 0.0),
            Err(Error::InvalidSchedule(_))
        ));
        assert!(StepSchedule::pl_driven(0.0).is_err());
        assert!(StepSchedule::pl_driven(1.5).is_err());
        assert!(StepSchedule::constant(0.0).is_err());
        assert!(StepSchedule::constant(1.5).is_err());
        assert!(StepSchedule::custom(vec![]).is_err());
        assert!(StepSchedule::custom(vec![0.5, 1.2]).is_err());
    }

    #[test]
    fn custom_schedules_exhaust() {
        let s = StepSchedule::custom(vec![0.5, 0.25]).unwrap();
        assert_eq!(s.finite_len(), Some(2));
        assert!((s.step_size(1).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(
            s.step_size(2),
            Err(Error::ScheduleExhausted {
                needed: 3,
                available: 2
            })
        ));
    }

    #[test]
    fn grammar_round_trips() {
        for spec in ["paper_pl:c=0.25", "exp:c=0.7", "const:0.1"] {
            let s = StepSchedule::parse_spec(spec).unwrap();
            assert_eq!(s.to_string(), spec);
            let again: StepSchedule = spec.parse().unwrap();
            assert_eq!(s, again);
        }
        assert!(StepSchedule::parse_spec("bogus:1").is_err());
        assert!(StepSchedule::parse_spec("paper_pl:c=abc").is_err());
        assert!(StepSchedule::parse_spec("0.5").is_err());
    }

    #[test]
    fn serde_string_and_array_forms() {
        let s: StepSchedule = serde_json::from_str("\"exp:c=0.7\"").unwrap();
        assert_eq!(s, StepSchedule::inverse_t(0.7).unwrap());

        let s: StepSchedule = serde_json::from_str("[0.5, 0.25, 0.125]").unwrap();
        assert_eq!(s, StepSchedule::custom(vec![0.5, 0.25, 0.125]).unwrap());

        let text = serde_json::to_string(&StepSchedule::constant(0.1).unwrap()).unwrap();
        assert_eq!(text, "\"const:0.1\"");
        let text = serde_json::to_string(&StepSchedule::custom(vec![0.5]).unwrap()).unwrap();
        assert_eq!(text, "[0.5]");
    }
}
