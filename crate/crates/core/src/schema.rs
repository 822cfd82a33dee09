//! JSON problem files.
//!
//! ```json
//! {
//!   "p":  { "breakpoints": [0, 1], "values": [1] },
//!   "q":  { "density": { "breakpoints": [0, 1], "polys": [[0]] }, "atoms": [[0.5, -10]] },
//!   "r":  { "density": { "breakpoints": [0, 1], "polys": [[1]] } },
//!   "bc": { "theta0": 0, "theta1": 0 }
//! }
//! ```
//!
//! Polynomials are listed per piece in ascending powers of the local
//! coordinate `x - breakpoints[i]`. `atoms` is optional. Unknown fields are
//! rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{
    Atom, BoundaryAngles, DistributionalCoefficient, PiecewiseConstant, PiecewisePoly, Problem, ProblemError,
};

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("cannot parse problem file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid problem: {0}")]
    Invalid(#[from] ProblemError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub p: StepFile,
    pub q: CoefficientFile,
    pub r: CoefficientFile,
    pub bc: BcFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepFile {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityFile {
    pub breakpoints: Vec<f64>,
    pub polys: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientFile {
    pub density: DensityFile,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcFile {
    pub theta0: f64,
    pub theta1: f64,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn from_problem(problem: &Problem) -> Self {
        let coeff = |c: &DistributionalCoefficient| CoefficientFile {
            density: DensityFile { breakpoints: c.density.breakpoints.clone(), polys: c.density.polys.clone() },
            atoms: c.atoms.iter().map(|a| (a.location, a.weight)).collect(),
        };
        let bc = problem.bc();
        Self {
            p: StepFile { breakpoints: problem.p().breakpoints.clone(), values: problem.p().values.clone() },
            q: coeff(problem.q()),
            r: coeff(problem.r()),
            bc: BcFile { theta0: bc.theta0, theta1: bc.theta1 },
        }
    }
}

fn coefficient(c: &CoefficientFile) -> DistributionalCoefficient {
    DistributionalCoefficient {
        density: PiecewisePoly::new(c.density.breakpoints.clone(), c.density.polys.clone()),
        atoms: c.atoms.iter().map(|&(location, weight)| Atom { location, weight }).collect(),
    }
}

/// Validates raw file data into a normalized [`Problem`].
pub fn validate_problem(raw: &ProblemFile) -> Result<Problem, ProblemError> {
    Problem::new(
        PiecewiseConstant::new(raw.p.breakpoints.clone(), raw.p.values.clone()),
        coefficient(&raw.q),
        coefficient(&raw.r),
        BoundaryAngles::new(raw.bc.theta0, raw.bc.theta1),
    )
}

/// Parses and validates in one step.
pub fn parse_problem(text: &str) -> Result<Problem, SchemaError> {
    Ok(validate_problem(&ProblemFile::from_json(text)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DELTA: &str = r#"{
        "p": {"breakpoints": [0, 1], "values": [1]},
        "q": {"density": {"breakpoints": [0, 1], "polys": [[0]]}, "atoms": [[0.5, -10]]},
        "r": {"density": {"breakpoints": [0, 1], "polys": [[1]]}},
        "bc": {"theta0": 0, "theta1": 0}
    }"#;

    #[test]
    fn parses_point_mass_problem() {
        let p = parse_problem(DELTA).unwrap();
        assert_eq!(p.q().atoms, vec![Atom { location: 0.5, weight: -10.0 }]);
        assert!(p.r().atoms.is_empty());
        assert_eq!(p.bc(), BoundaryAngles::dirichlet());
    }

    #[test]
    fn rejects_unknown_fields() {
        let bad = DELTA.replace("\"theta1\": 0", "\"theta1\": 0, \"theta2\": 1");
        let err = parse_problem(&bad).unwrap_err().to_string();
        assert!(err.contains("theta2"), "{err}");
    }

    #[test]
    fn reports_offending_field() {
        let bad = DELTA.replace("\"values\": [1]", "\"values\": [-1]");
        assert!(matches!(parse_problem(&bad), Err(SchemaError::Invalid(ProblemError::NonPositiveP { .. }))));
        let bad = DELTA.replace("\"polys\": [[1]]", "\"polys\": [[0]]");
        assert!(matches!(parse_problem(&bad), Err(SchemaError::Invalid(ProblemError::ZeroWeight))));
    }

    #[test]
    fn validation_is_idempotent() {
        let p = parse_problem(DELTA).unwrap();
        let again = validate_problem(&ProblemFile::from_problem(&p)).unwrap();
        assert_eq!(p, again);
        let text = ProblemFile::from_problem(&p).to_json();
        assert_eq!(parse_problem(&text).unwrap(), p);
    }
}
