//! The registry of validated repositories, with tiered compliance levels.
//!
//! Stored as one pretty-printed JSON document, entries sorted by base URL,
//! rewritten atomically on every change.

use std::fmt::{self, Write as _};
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{ComplianceIssue, Outcome, ValidationReport};
use crate::model::{BaseUrl, UtcDatestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComplianceLevel {
    /// Valid requests work.
    Basic,
    /// Valid requests work and illegal ones get the right error codes.
    Robust,
    /// Robust, and a sample record was served as oai_dc.
    DublinCore,
}

impl ComplianceLevel {
    pub const ALL: [ComplianceLevel; 3] = [
        ComplianceLevel::Basic,
        ComplianceLevel::Robust,
        ComplianceLevel::DublinCore,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ComplianceLevel::Basic => "basic",
            ComplianceLevel::Robust => "robust",
            ComplianceLevel::DublinCore => "dublin-core",
        }
    }
}

impl fmt::Display for ComplianceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComplianceLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown compliance level {s:?} (basic, robust, dublin-core)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub base_url: BaseUrl,
    pub repository_name: String,
    pub admin_emails: Vec<String>,
    pub registered_at: UtcDatestamp,
    pub compliance_level: ComplianceLevel,
    /// Outcome of the report that justified the current level.
    pub outcome: Outcome,
    /// SHA-256 (first 16 hex digits) of that report's JSON rendering.
    pub report_digest: String,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("not eligible for {level} registration: {reason}")]
    NotEligible {
        level: ComplianceLevel,
        reason: String,
        blocking: Vec<ComplianceIssue>,
    },
    #[error("{base_url} is already registered at level {existing}; refusing to downgrade to {requested}")]
    DuplicateBaseUrl {
        base_url: BaseUrl,
        existing: ComplianceLevel,
        requested: ComplianceLevel,
    },
    #[error("registry file {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("registry file {path} is corrupt: {source}")]
    Corrupt {
        path: String,
        source: serde_json::Error,
    },
}

pub fn report_digest(report: &ValidationReport) -> String {
    let digest = Sha256::digest(report.to_json().as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Whether `report` supports registration at `level`.
pub fn check_eligibility(
    report: &ValidationReport,
    level: ComplianceLevel,
) -> Result<(), RegistryError> {
    let refuse = |reason: String, blocking: Vec<ComplianceIssue>| {
        Err(RegistryError::NotEligible {
            level,
            reason,
            blocking,
        })
    };
    let non_exception: Vec<ComplianceIssue> = report
        .issues
        .iter()
        .filter(|i| !i.kind.is_exception_handling())
        .cloned()
        .collect();
    match report.outcome {
        Outcome::Aborted(r) => {
            return refuse(format!("validation aborted ({})", r.label()), vec![])
        }
        Outcome::Failed => return refuse("valid requests did not pass".into(), non_exception),
        Outcome::ValidExcludingExceptions if level > ComplianceLevel::Basic => {
            return refuse(
                "illegal requests were not handled correctly".into(),
                report.issues.clone(),
            )
        }
        _ => {}
    }
    if level > ComplianceLevel::Basic && !report.exception_battery {
        return refuse("the illegal-request tests were skipped".into(), vec![]);
    }
    if level == ComplianceLevel::DublinCore && !report.has_oai_dc_record() {
        return refuse("no sample record was served as oai_dc".into(), vec![]);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Registry {
    entries: Vec<RegistryEntry>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A missing file is an empty registry.
    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Self::new()),
            Err(source) => {
                return Err(RegistryError::Io {
                    path: path.display().to_string(),
                    source,
                })
            }
        };
        let mut reg: Registry =
            serde_json::from_str(&text).map_err(|source| RegistryError::Corrupt {
                path: path.display().to_string(),
                source,
            })?;
        reg.entries
            .sort_by(|a, b| a.base_url.as_str().cmp(b.base_url.as_str()));
        Ok(reg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("registry serializes");
        s.push('\n');
        s
    }

    /// Write to a sibling temporary file and rename over `path`.
    pub fn save(&self, path: &Path) -> Result<(), RegistryError> {
        let io_err = |source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err)?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        fs::write(&tmp, self.to_json()).map_err(io_err)?;
        fs::rename(&tmp, path).map_err(io_err)
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn get(&self, base_url: &BaseUrl) -> Option<&RegistryEntry> {
        self.entries.iter().find(|e| e.base_url == *base_url)
    }

    /// Adds or upgrades the entry for the report's base URL. Registering again
    /// at the same level changes nothing; a lower level is refused.
    pub fn register(
        &mut self,
        report: &ValidationReport,
        level: ComplianceLevel,
        now: UtcDatestamp,
    ) -> Result<RegistryEntry, RegistryError> {
        check_eligibility(report, level)?;
        let info = report
            .identify
            .as_ref()
            .ok_or_else(|| RegistryError::NotEligible {
                level,
                reason: "the report has no Identify information".into(),
                blocking: vec![],
            })?;
        let pos = self
            .entries
            .binary_search_by(|e| e.base_url.as_str().cmp(report.base_url.as_str()));
        match pos {
            Ok(i) => {
                let existing = &mut self.entries[i];
                if level < existing.compliance_level {
                    return Err(RegistryError::DuplicateBaseUrl {
                        base_url: report.base_url.clone(),
                        existing: existing.compliance_level,
                        requested: level,
                    });
                }
                if level > existing.compliance_level {
                    existing.compliance_level = level;
                    existing.repository_name = info.repository_name.clone();
                    existing.admin_emails = info.admin_emails.clone();
                    existing.outcome = report.outcome;
                    existing.report_digest = report_digest(report);
                }
                Ok(existing.clone())
            }
            Err(i) => {
                let entry = RegistryEntry {
                    base_url: report.base_url.clone(),
                    repository_name: info.repository_name.clone(),
                    admin_emails: info.admin_emails.clone(),
                    registered_at: now,
                    compliance_level: level,
                    outcome: report.outcome,
                    report_digest: report_digest(report),
                };
                self.entries.insert(i, entry.clone());
                Ok(entry)
            }
        }
    }

    /// Aligned text table for `browse`.
    pub fn render_table(&self) -> String {
        let headers = ["BASE URL", "NAME", "LEVEL", "REGISTERED", "ADMIN"];
        let rows: Vec<[String; 5]> = self
            .entries
            .iter()
            .map(|e| {
                [
                    e.base_url.to_string(),
                    e.repository_name.clone(),
                    e.compliance_level.to_string(),
                    e.registered_at.to_string(),
                    e.admin_emails.join(", "),
                ]
            })
            .collect();
        let mut widths = headers.map(str::len);
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[&str]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&headers);
        for row in &rows {
            line(&row.each_ref().map(String::as_str));
        }
        let _ = writeln!(out, "{} repositories", rows.len());
        out
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::engine::run_validation_with;
    use crate::model::{parse_datestamp, validate_base_url};
    use crate::simulator::{Fault, FaultProfile, InProcessTransport, Simulator};

    fn report(faults: &[Fault]) -> ValidationReport {
        let sim = Arc::new(Simulator::with_profile(FaultProfile::from_faults(
            faults.iter().cloned(),
        )));
        let mut t = InProcessTransport::new(sim);
        run_validation_with(
            &mut t,
            &validate_base_url("http://sim.example.org/oai").unwrap(),
            true,
        )
    }

    fn now() -> UtcDatestamp {
        parse_datestamp("2024-05-06T07:08:09Z").unwrap()
    }

    #[test]
    fn gating_by_level() {
        let robust = report(&[]);
        let vee = report(&[Fault::IgnoreBadArgs]);
        let failed = report(&[Fault::EmptyWindow]);
        let aborted = report(&[Fault::BadAdminEmail]);
        assert_eq!(vee.outcome, Outcome::ValidExcludingExceptions);

        let mut reg = Registry::new();
        assert!(matches!(
            reg.register(&vee, ComplianceLevel::Robust, now()),
            Err(RegistryError::NotEligible { blocking, .. }) if blocking.len() == 5
        ));
        assert!(reg.register(&vee, ComplianceLevel::Basic, now()).is_ok());
        for level in ComplianceLevel::ALL {
            assert!(matches!(
                reg.clone().register(&failed, level, now()),
                Err(RegistryError::NotEligible { .. })
            ));
            assert!(matches!(
                reg.clone().register(&aborted, level, now()),
                Err(RegistryError::NotEligible { .. })
            ));
            assert!(reg.clone().register(&robust, level, now()).is_ok());
        }
    }

    #[test]
    fn idempotent_and_monotone() {
        let robust = report(&[]);
        let mut reg = Registry::new();
        let first = reg
            .register(&robust, ComplianceLevel::Robust, now())
            .unwrap();
        let snapshot = reg.to_json();
        let later = parse_datestamp("2025-01-01T00:00:00Z").unwrap();
        assert_eq!(
            reg.register(&robust, ComplianceLevel::Robust, later)
                .unwrap(),
            first
        );
        assert_eq!(reg.to_json(), snapshot);
        assert!(matches!(
            reg.register(&robust, ComplianceLevel::Basic, later),
            Err(RegistryError::DuplicateBaseUrl {
                existing: ComplianceLevel::Robust,
                ..
            })
        ));
        let up = reg
            .register(&robust, ComplianceLevel::DublinCore, later)
            .unwrap();
        assert_eq!(up.compliance_level, ComplianceLevel::DublinCore);
        assert_eq!(up.registered_at, first.registered_at);
        assert_eq!(reg.entries().len(), 1);
    }

    #[test]
    fn persistence_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/registry.json");
        assert_eq!(Registry::load(&path).unwrap(), Registry::new());
        let mut reg = Registry::new();
        reg.register(&report(&[]), ComplianceLevel::Robust, now())
            .unwrap();
        reg.save(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let loaded = Registry::load(&path).unwrap();
        assert_eq!(loaded, reg);
        loaded.save(&path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), bytes);
        assert!(loaded.render_table().contains("Simulated Repository"));
    }

    #[test]
    fn corrupt_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.json");
        fs::write(&path, "{not json").unwrap();
        assert!(matches!(
            Registry::load(&path),
            Err(RegistryError::Corrupt { .. })
        ));
    }

    #[test]
    fn level_names_parse() {
        for l in ComplianceLevel::ALL {
            assert_eq!(l.as_str().parse::<ComplianceLevel>().unwrap(), l);
        }
        assert!("gold".parse::<ComplianceLevel>().is_err());
    }
}
