//! The fault → verdict matrix the validator is held to.

use std::collections::BTreeSet;

use serde::Deserialize;
use thiserror::Error;

use crate::engine::{AbortReason, IssueKind, Outcome, ValidationReport};
use crate::simulator::{Fault, FaultProfile};

/// The matrix shipped with the crate.
pub const MATRIX_TOML: &str = include_str!("../conformance/matrix.toml");

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixRow {
    pub name: String,
    pub faults: Vec<String>,
    pub outcome: String,
    #[serde(default)]
    pub abort: Option<String>,
    #[serde(default)]
    pub issues: Vec<String>,
    #[serde(default)]
    pub entailed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matrix {
    pub row: Vec<MatrixRow>,
}

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("matrix is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("row {row:?}: {message}")]
    BadRow { row: String, message: String },
}

impl Matrix {
    pub fn parse(text: &str) -> Result<Self, MatrixError> {
        let m: Matrix = toml::from_str(text)?;
        for row in &m.row {
            row.profile()?;
            row.expected_outcome()?;
            for code in row.issues.iter().chain(&row.entailed) {
                row.kind(code)?;
            }
        }
        Ok(m)
    }

    pub fn builtin() -> Self {
        Self::parse(MATRIX_TOML).expect("shipped matrix is valid")
    }
}

impl MatrixRow {
    fn bad(&self, message: String) -> MatrixError {
        MatrixError::BadRow {
            row: self.name.clone(),
            message,
        }
    }

    fn kind(&self, code: &str) -> Result<IssueKind, MatrixError> {
        IssueKind::from_code(code).ok_or_else(|| self.bad(format!("unknown issue kind {code:?}")))
    }

    pub fn profile(&self) -> Result<FaultProfile, MatrixError> {
        let faults = self
            .faults
            .iter()
            .map(|f| f.parse::<Fault>().map_err(|e| self.bad(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FaultProfile::from_faults(faults))
    }

    pub fn expected_outcome(&self) -> Result<Outcome, MatrixError> {
        let outcome = match (self.outcome.as_str(), self.abort.as_deref()) {
            ("aborted", Some(code)) => Outcome::Aborted(
                AbortReason::from_code(code)
                    .ok_or_else(|| self.bad(format!("unknown abort reason {code:?}")))?,
            ),
            ("failed", None) => Outcome::Failed,
            ("valid-excluding-exceptions", None) => Outcome::ValidExcludingExceptions,
            ("robustly-valid", None) => Outcome::RobustlyValid,
            (o, a) => return Err(self.bad(format!("bad outcome/abort pair {o:?}/{a:?}"))),
        };
        Ok(outcome)
    }

    /// `Ok` when the report shows exactly this row's verdict.
    pub fn check(&self, report: &ValidationReport) -> Result<(), String> {
        let expected = self.expected_outcome().map_err(|e| e.to_string())?;
        if report.outcome != expected {
            return Err(format!(
                "outcome {} but expected {expected}",
                report.outcome
            ));
        }
        let seen: BTreeSet<IssueKind> = report.issues.iter().map(|i| i.kind).collect();
        let required: BTreeSet<IssueKind> = self
            .issues
            .iter()
            .filter_map(|c| IssueKind::from_code(c))
            .collect();
        let allowed: BTreeSet<IssueKind> = self
            .entailed
            .iter()
            .filter_map(|c| IssueKind::from_code(c))
            .chain(required.iter().copied())
            .collect();
        if let Some(missing) = required.difference(&seen).next() {
            return Err(format!("missing issue {missing}"));
        }
        if let Some(extra) = seen.difference(&allowed).next() {
            return Err(format!("unexpected issue {extra}"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::engine::run_validation_with;
    use crate::model::validate_base_url;
    use crate::simulator::{InProcessTransport, Simulator};

    #[test]
    fn builtin_matrix_covers_every_fault() {
        let m = Matrix::builtin();
        for name in Fault::NAMES {
            assert!(
                m.row
                    .iter()
                    .any(|r| r.faults.iter().any(|f| f.split('=').next() == Some(name))),
                "{name}"
            );
        }
        assert!(m.row.iter().any(|r| r.faults.is_empty()));
    }

    #[test]
    fn matrix_holds_in_process() {
        let base = validate_base_url("http://sim.example.org/oai").unwrap();
        for row in Matrix::builtin().row {
            let sim = Arc::new(Simulator::with_profile(row.profile().unwrap()));
            let report = run_validation_with(&mut InProcessTransport::new(sim), &base, true);
            row.check(&report)
                .unwrap_or_else(|e| panic!("{}: {e}", row.name));
        }
    }

    #[test]
    fn bad_rows_rejected() {
        for text in [
            "[[row]]\nname='x'\nfaults=['nope']\noutcome='failed'",
            "[[row]]\nname='x'\nfaults=[]\noutcome='aborted'",
            "[[row]]\nname='x'\nfaults=[]\noutcome='failed'\nissues=['what']",
            "[[row]]\nname='x'\nfaults=[]\noutcome='failed'\nextra=1",
        ] {
            assert!(Matrix::parse(text).is_err(), "{text}");
        }
    }
}
