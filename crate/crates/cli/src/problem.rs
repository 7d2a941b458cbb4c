//! Resolves a problem name or case file into a solvable problem and start.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use szolp::oracle::{Problem, Smoothness, SmoothnessError, WithSmoothness};
use szolp::problems::{by_name, random_convex_qp, PROBLEM_NAMES};
use szolp_powerflow::{parse_case, CaseError, OpfProblem, CASE30};
use thiserror::Error;

/// Constants used for OPF problems when no override is given.
pub const OPF_LIPSCHITZ: f64 = 0.5;
pub const OPF_CURVATURE: f64 = 0.13;

/// Built-in names beyond the analytic registry.
pub const BUILTIN_NAMES: &[&str] = &["ieee30", "random-qp"];

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Named(String),
    CaseFile(PathBuf),
}

/// Constant overrides: uniform values and/or per-function vectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SmoothnessOverride {
    pub lipschitz: Option<f64>,
    pub curvature: Option<f64>,
    pub per_function: Option<(Vec<f64>, Vec<f64>)>,
}

impl SmoothnessOverride {
    pub fn is_empty(&self) -> bool {
        self.lipschitz.is_none() && self.curvature.is_none() && self.per_function.is_none()
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("unknown problem '{0}' (known: {1})")]
    UnknownProblem(String, String),
    #[error("cannot read case file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid case file {path}: {source}")]
    Case { path: PathBuf, source: CaseError },
    #[error("invalid smoothness constants: {0}")]
    Smoothness(#[from] SmoothnessError),
    #[error("cannot read smoothness file {path}: {reason}")]
    SmoothnessFile { path: PathBuf, reason: String },
}

pub struct LoadedProblem {
    pub name: String,
    pub problem: Box<dyn Problem>,
    pub start: Vec<f64>,
    pub optimum: Option<Vec<f64>>,
    /// Constraint names, when the problem has them.
    pub labels: Option<Vec<String>>,
}

pub fn known_names() -> String {
    PROBLEM_NAMES
        .iter()
        .chain(BUILTIN_NAMES)
        .copied()
        .collect::<Vec<_>>()
        .join(", ")
}

/// `seed` only affects `random-qp`.
pub fn load(source: &Source, overrides: &SmoothnessOverride, seed: u64) -> Result<LoadedProblem, LoadError> {
    match source {
        Source::Named(name) if name == "ieee30" => opf("ieee30", CASE30, Path::new("ieee30"), overrides),
        Source::Named(name) if name == "random-qp" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = rng.gen_range(1..=10);
            let m = rng.gen_range(1..=20);
            let (qp, start) = random_convex_qp(&mut rng, d, m);
            let problem = apply(Box::new(qp), overrides)?;
            Ok(LoadedProblem {
                name: format!("random-qp-{seed}"),
                problem,
                start,
                optimum: None,
                labels: None,
            })
        }
        Source::Named(name) => {
            let named = by_name(name).ok_or_else(|| LoadError::UnknownProblem(name.clone(), known_names()))?;
            Ok(LoadedProblem {
                name: named.name.to_string(),
                problem: apply(named.problem, overrides)?,
                start: named.start,
                optimum: named.optimum,
                labels: None,
            })
        }
        Source::CaseFile(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| LoadError::Read {
                path: path.clone(),
                source,
            })?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("case");
            opf(stem, &text, path, overrides)
        }
    }
}

fn opf(name: &str, text: &str, path: &Path, overrides: &SmoothnessOverride) -> Result<LoadedProblem, LoadError> {
    let case = parse_case(text).map_err(|source| LoadError::Case {
        path: path.to_path_buf(),
        source,
    })?;
    let problem = match &overrides.per_function {
        Some((l, m)) => {
            let smoothness = Smoothness::new(l.clone(), m.clone())?;
            let expected = szolp_powerflow::opf::constraint_labels(&case).len() + 1;
            if smoothness.len() != expected {
                return Err(SmoothnessError::Length {
                    expected,
                    got: smoothness.len(),
                }
                .into());
            }
            OpfProblem::with_smoothness(case, smoothness)
        }
        None => OpfProblem::new(
            case,
            overrides.lipschitz.unwrap_or(OPF_LIPSCHITZ),
            overrides.curvature.unwrap_or(OPF_CURVATURE),
        )?,
    };
    Ok(LoadedProblem {
        name: name.to_string(),
        start: problem.start(),
        labels: Some(problem.constraint_labels().to_vec()),
        problem: Box::new(problem),
        optimum: None,
    })
}

/// Replaces constants on an analytic problem. A lone uniform override keeps
/// the other constant per function.
fn apply(problem: Box<dyn Problem>, overrides: &SmoothnessOverride) -> Result<Box<dyn Problem>, LoadError> {
    if overrides.is_empty() {
        return Ok(problem);
    }
    let n = problem.num_constraints() + 1;
    let current = problem.smoothness();
    let (l, m) = match &overrides.per_function {
        Some((l, m)) => (l.clone(), m.clone()),
        None => (
            (0..n)
                .map(|i| overrides.lipschitz.unwrap_or_else(|| current.lipschitz(i)))
                .collect(),
            (0..n)
                .map(|i| overrides.curvature.unwrap_or_else(|| current.curvature(i)))
                .collect(),
        ),
    };
    let smoothness = Smoothness::new(l, m)?;
    Ok(Box::new(WithSmoothness::new(problem, smoothness)?))
}

/// Reads a CSV with header `lipschitz,curvature` and one row per function,
/// objective first.
pub fn read_smoothness_file(path: &Path) -> Result<(Vec<f64>, Vec<f64>), LoadError> {
    let fail = |reason: String| LoadError::SmoothnessFile {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| fail(e.to_string()))?;
    let (mut l, mut m) = (Vec::new(), Vec::new());
    for row in reader.deserialize::<(f64, f64)>() {
        let (li, mi) = row.map_err(|e| fail(e.to_string()))?;
        l.push(li);
        m.push(mi);
    }
    Ok((l, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_and_builtins_load() {
        for name in ["one-d", "qp-corner", "disk-linear", "ieee30", "random-qp"] {
            let p = load(&Source::Named(name.into()), &SmoothnessOverride::default(), 1).unwrap();
            assert_eq!(p.start.len(), p.problem.dimension());
        }
    }

    #[test]
    fn unknown_name_is_reported() {
        let err = load(&Source::Named("nope".into()), &SmoothnessOverride::default(), 0);
        assert!(matches!(err, Err(LoadError::UnknownProblem(..))));
    }

    #[test]
    fn uniform_override_replaces_one_constant() {
        let overrides = SmoothnessOverride {
            curvature: Some(3.0),
            ..Default::default()
        };
        let p = load(&Source::Named("qp-corner".into()), &overrides, 0).unwrap();
        let s = p.problem.smoothness();
        assert_eq!(s.curvatures(), &[3.0, 3.0, 3.0]);
        assert_eq!(s.lipschitz(0), 6.0);
    }

    #[test]
    fn ieee30_uses_default_constants() {
        let p = load(&Source::Named("ieee30".into()), &SmoothnessOverride::default(), 0).unwrap();
        let profile = p.problem.smoothness().profile();
        assert_eq!((profile.l_max, profile.m_max), (0.5, 0.13));
        assert_eq!(p.labels.unwrap().len(), 166);
    }

    #[test]
    fn missing_case_file_is_a_read_error() {
        let err = load(&Source::CaseFile("/nonexistent/case.m".into()), &SmoothnessOverride::default(), 0);
        assert!(matches!(err, Err(LoadError::Read { .. })));
    }
}
