//! The validation log and the aggregate tables built from it.
//!
//! The log is a JSON-lines file with one [`ValidationLogEntry`] per attempt.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{AbortReason, Outcome, ValidationReport};
use crate::model::IntakeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntakeClass {
    NoBaseUrl,
    NonsenseBaseUrl,
    Valid,
}

impl IntakeClass {
    pub const ALL: [IntakeClass; 3] = [
        IntakeClass::NoBaseUrl,
        IntakeClass::NonsenseBaseUrl,
        IntakeClass::Valid,
    ];

    pub fn label(self) -> &'static str {
        match self {
            IntakeClass::NoBaseUrl => "No base URL",
            IntakeClass::NonsenseBaseUrl => "Nonsense base URL",
            IntakeClass::Valid => "Valid base URL",
        }
    }
}

impl From<&IntakeError> for IntakeClass {
    fn from(e: &IntakeError) -> Self {
        match e {
            IntakeError::NoBaseUrl => IntakeClass::NoBaseUrl,
            IntakeError::NonsenseBaseUrl(_) => IntakeClass::NonsenseBaseUrl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationLogEntry {
    pub timestamp: DateTime<Utc>,
    /// The submission exactly as typed.
    pub base_url_text: String,
    pub intake_class: IntakeClass,
    /// Present iff `intake_class` is `Valid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(default)]
    pub issue_codes: Vec<String>,
}

impl ValidationLogEntry {
    pub fn rejected(raw: &str, error: &IntakeError, timestamp: DateTime<Utc>) -> Self {
        Self {
            timestamp,
            base_url_text: raw.to_string(),
            intake_class: error.into(),
            outcome: None,
            issue_codes: Vec::new(),
        }
    }

    pub fn validated(raw: &str, report: &ValidationReport, timestamp: DateTime<Utc>) -> Self {
        Self {
            timestamp,
            base_url_text: raw.to_string(),
            intake_class: IntakeClass::Valid,
            outcome: Some(report.outcome),
            issue_codes: report.issue_codes(),
        }
    }

    /// Convenience for synthetic logs.
    pub fn synthetic(
        base_url_text: &str,
        intake_class: IntakeClass,
        outcome: Option<Outcome>,
        issue_codes: &[&str],
    ) -> Self {
        Self {
            timestamp: DateTime::UNIX_EPOCH,
            base_url_text: base_url_text.to_string(),
            intake_class,
            outcome,
            issue_codes: issue_codes.iter().map(|c| c.to_string()).collect(),
        }
    }

    fn completed(&self) -> bool {
        matches!(self.outcome, Some(o) if o.abort_reason().is_none())
    }

    /// Repository key for grouping attempts.
    fn repository(&self) -> &str {
        self.base_url_text.trim()
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log file {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("log file {path}, line {line}: {source}")]
    BadLine {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
}

/// Append-only log file. Each entry is written with a single `write` on an
/// `O_APPEND` handle, so concurrent appenders never interleave lines.
#[derive(Debug, Clone)]
pub struct ValidationLog {
    path: PathBuf,
}

impl ValidationLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn io(&self, source: io::Error) -> LogError {
        LogError::Io {
            path: self.path.display().to_string(),
            source,
        }
    }

    pub fn append(&self, entry: &ValidationLogEntry) -> Result<(), LogError> {
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| self.io(e))?;
        }
        let mut line = serde_json::to_string(entry).expect("log entry serializes");
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| self.io(e))?;
        f.write_all(line.as_bytes()).map_err(|e| self.io(e))
    }

    /// All entries; a missing file is an empty log.
    pub fn read(&self) -> Result<Vec<ValidationLogEntry>, LogError> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(self.io(e)),
        };
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str(l).map_err(|source| LogError::BadLine {
                    path: self.path.display().to_string(),
                    line: n + 1,
                    source,
                })
            })
            .collect()
    }
}

/// `100·count/total` in tenths of a percent, rounded half up.
pub fn percent_tenths(count: u64, total: u64) -> u64 {
    if total == 0 {
        return 0;
    }
    (2000 * count + total) / (2 * total)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub label: String,
    pub count: u64,
    /// Percent of the breakdown total, in tenths.
    pub percent_tenths: u64,
}

impl BreakdownRow {
    pub fn percent(&self) -> String {
        format!("{}.{}", self.percent_tenths / 10, self.percent_tenths % 10)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Breakdown {
    pub rows: Vec<BreakdownRow>,
    pub total: u64,
}

impl Breakdown {
    pub fn from_counts<L: Into<String>>(
        counts: impl IntoIterator<Item = (L, u64)>,
        total: u64,
    ) -> Self {
        let rows = counts
            .into_iter()
            .map(|(label, count)| BreakdownRow {
                label: label.into(),
                count,
                percent_tenths: percent_tenths(count, total),
            })
            .collect();
        Self { rows, total }
    }

    pub fn percents(&self) -> Vec<String> {
        self.rows.iter().map(BreakdownRow::percent).collect()
    }

    pub fn render_text(&self, title: &str) -> String {
        let label_w = self
            .rows
            .iter()
            .map(|r| r.label.chars().count())
            .chain([5])
            .max()
            .unwrap_or(5);
        let count_w = self.total.to_string().len().max(5);
        let mut out = format!("{title}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "  {:<label_w$}  {:>count_w$}  {:>5}%",
                r.label,
                r.count,
                r.percent()
            );
        }
        let _ = writeln!(out, "  {:<label_w$}  {:>count_w$}", "Total", self.total);
        out
    }
}

pub fn breakdown_intake(log: &[ValidationLogEntry]) -> Breakdown {
    let count = |c: IntakeClass| log.iter().filter(|e| e.intake_class == c).count() as u64;
    if log.is_empty() {
        return Breakdown::default();
    }
    Breakdown::from_counts(
        IntakeClass::ALL.map(|c| (c.label(), count(c))),
        log.len() as u64,
    )
}

/// One row per abort reason, over the aborted validations.
pub fn breakdown_aborts(log: &[ValidationLogEntry]) -> Breakdown {
    let reasons: Vec<AbortReason> = log
        .iter()
        .filter_map(|e| e.outcome.and_then(Outcome::abort_reason))
        .collect();
    if reasons.is_empty() {
        return Breakdown::default();
    }
    let total = reasons.len() as u64;
    Breakdown::from_counts(
        AbortReason::ALL.map(|r| {
            (
                r.label(),
                reasons.iter().filter(|x| **x == r).count() as u64,
            )
        }),
        total,
    )
}

/// The `k` issue codes seen in most completed validations (each validation
/// counts a code once), ties broken alphabetically. The total is the number
/// of completed validations, so rows need not sum to it.
pub fn top_issues(log: &[ValidationLogEntry], k: usize) -> Breakdown {
    let completed: Vec<&ValidationLogEntry> = log.iter().filter(|e| e.completed()).collect();
    if completed.is_empty() {
        return Breakdown::default();
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for e in &completed {
        let mut codes: Vec<&str> = e.issue_codes.iter().map(String::as_str).collect();
        codes.sort_unstable();
        codes.dedup();
        for c in codes {
            *counts.entry(c).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.truncate(k);
    Breakdown::from_counts(ranked, completed.len() as u64)
}

/// Outcomes of validations that got past intake.
pub fn breakdown_outcomes(log: &[ValidationLogEntry]) -> Breakdown {
    let outcomes: Vec<Outcome> = log.iter().filter_map(|e| e.outcome).collect();
    if outcomes.is_empty() {
        return Breakdown::default();
    }
    let count = |f: fn(&Outcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as u64;
    Breakdown::from_counts(
        [
            ("Aborted", count(|o| matches!(o, Outcome::Aborted(_)))),
            ("Failed", count(|o| *o == Outcome::Failed)),
            (
                "Valid excluding exceptions",
                count(|o| *o == Outcome::ValidExcludingExceptions),
            ),
            ("Robustly valid", count(|o| *o == Outcome::RobustlyValid)),
        ],
        outcomes.len() as u64,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    /// Valid requests work; illegal-request handling is ignored.
    ExcludingExceptions,
    Robust,
}

impl Tier {
    pub fn reached(self, outcome: Outcome) -> bool {
        match self {
            Tier::ExcludingExceptions => outcome.valid_requests_work(),
            Tier::Robust => outcome == Outcome::RobustlyValid,
        }
    }
}

pub const CHRONIC_ATTEMPTS: u64 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AttemptsHistogram {
    /// Attempts up to and including the first success → repositories.
    pub buckets: BTreeMap<u64, u64>,
    pub never_succeeded: u64,
    /// Of `never_succeeded`, those with more than five attempts.
    pub never_succeeded_over_5: u64,
}

impl AttemptsHistogram {
    pub fn render_text(&self, title: &str) -> String {
        let mut out = format!("{title}\n");
        let max = self.buckets.values().copied().max().unwrap_or(0).max(1);
        for (attempts, repos) in &self.buckets {
            let bar = "#".repeat(((repos * 40).div_ceil(max)) as usize);
            let _ = writeln!(out, "  {attempts:>3} attempt(s)  {repos:>5}  {bar}");
        }
        let _ = writeln!(
            out,
            "  never succeeded  {:>5}  (more than {CHRONIC_ATTEMPTS} attempts: {})",
            self.never_succeeded, self.never_succeeded_over_5
        );
        out
    }
}

/// Per repository, counts attempts until the first success at `tier`;
/// attempts after that success are ignored. Tiers are counted independently.
pub fn attempts_histogram(log: &[ValidationLogEntry], tier: Tier) -> AttemptsHistogram {
    let mut entries: Vec<&ValidationLogEntry> =
        log.iter().filter(|e| e.outcome.is_some()).collect();
    entries.sort_by_key(|e| e.timestamp);
    let mut order: Vec<&str> = Vec::new();
    let mut per_repo: HashMap<&str, Vec<Outcome>> = HashMap::new();
    for e in entries {
        let key = e.repository();
        per_repo
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(e.outcome.expect("filtered"));
    }
    let mut h = AttemptsHistogram::default();
    for key in order {
        let outcomes = &per_repo[key];
        match outcomes.iter().position(|o| tier.reached(*o)) {
            Some(i) => *h.buckets.entry(i as u64 + 1).or_default() += 1,
            None => {
                h.never_succeeded += 1;
                if outcomes.len() as u64 > CHRONIC_ATTEMPTS {
                    h.never_succeeded_over_5 += 1;
                }
            }
        }
    }
    h
}

/// Everything `stats` prints, in one structured value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub intake: Breakdown,
    pub outcomes: Breakdown,
    pub aborts: Breakdown,
    pub top_issues: Breakdown,
    pub attempts_excluding_exceptions: AttemptsHistogram,
    pub attempts_robust: AttemptsHistogram,
}

impl StatsSummary {
    pub fn from_log(log: &[ValidationLogEntry], top: usize) -> Self {
        Self {
            intake: breakdown_intake(log),
            outcomes: breakdown_outcomes(log),
            aborts: breakdown_aborts(log),
            top_issues: top_issues(log, top),
            attempts_excluding_exceptions: attempts_histogram(log, Tier::ExcludingExceptions),
            attempts_robust: attempts_histogram(log, Tier::Robust),
        }
    }

    pub fn render_text(&self) -> String {
        [
            self.intake.render_text("Validation requests by intake"),
            self.outcomes.render_text("Outcomes of validations"),
            self.aborts.render_text("Aborted validations by reason"),
            self.top_issues
                .render_text("Most common issues in completed validations"),
            self.attempts_excluding_exceptions
                .render_text("Attempts until first success (valid excluding exceptions)"),
            self.attempts_robust
                .render_text("Attempts until first success (robust)"),
        ]
        .join("\n")
    }
}
