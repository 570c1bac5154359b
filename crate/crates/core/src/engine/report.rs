//! Outcome taxonomy and the validation report in its two renderings.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::analysis::Diagnostic;
use crate::model::{BaseUrl, IdentifyInfo, UtcDatestamp};
use crate::transport::{HttpExchange, RetryWait};

/// Why a validation stopped early.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbortReason {
    NoIdentifyResponse,
    IdentifyParseFailure,
    BadProtocolVersion,
    BadAdminEmail,
    OtherIdentifyError,
    ExcessiveRetryAfter,
    NoIdentifiersListed,
    NoDatestampInSampleRecord,
}

impl AbortReason {
    pub const ALL: [AbortReason; 8] = [
        AbortReason::NoIdentifyResponse,
        AbortReason::IdentifyParseFailure,
        AbortReason::BadProtocolVersion,
        AbortReason::BadAdminEmail,
        AbortReason::OtherIdentifyError,
        AbortReason::ExcessiveRetryAfter,
        AbortReason::NoIdentifiersListed,
        AbortReason::NoDatestampInSampleRecord,
    ];

    pub fn code(self) -> &'static str {
        match self {
            AbortReason::NoIdentifyResponse => "no-identify-response",
            AbortReason::IdentifyParseFailure => "identify-parse-failure",
            AbortReason::BadProtocolVersion => "bad-protocol-version",
            AbortReason::BadAdminEmail => "bad-admin-email",
            AbortReason::OtherIdentifyError => "other-identify-error",
            AbortReason::ExcessiveRetryAfter => "excessive-retry-after",
            AbortReason::NoIdentifiersListed => "no-identifiers-listed",
            AbortReason::NoDatestampInSampleRecord => "no-datestamp-in-sample-record",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AbortReason::NoIdentifyResponse => "No response to Identify",
            AbortReason::IdentifyParseFailure => "Failed to parse Identify response",
            AbortReason::BadProtocolVersion => "Bad protocol version number",
            AbortReason::BadAdminEmail => "Bad admin email address",
            AbortReason::OtherIdentifyError => "Other errors with Identify response",
            AbortReason::ExcessiveRetryAfter => "Excessive 503 Retry-After replies",
            AbortReason::NoIdentifiersListed => "No identifiers listed",
            AbortReason::NoDatestampInSampleRecord => "No datestamp in sample record",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.code() == code)
    }
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueKind {
    EnvelopeSchemaError,
    EmptyKnownDatestampWindow,
    SpuriousEmptyResumptionToken,
    MalformedInvalidIdResponse,
    GranularityMismatch,
    ExceptionHandlingError,
    OtherError,
}

impl IssueKind {
    pub const ALL: [IssueKind; 7] = [
        IssueKind::EnvelopeSchemaError,
        IssueKind::EmptyKnownDatestampWindow,
        IssueKind::SpuriousEmptyResumptionToken,
        IssueKind::MalformedInvalidIdResponse,
        IssueKind::GranularityMismatch,
        IssueKind::ExceptionHandlingError,
        IssueKind::OtherError,
    ];

    pub fn code(self) -> &'static str {
        match self {
            IssueKind::EnvelopeSchemaError => "envelope-schema-error",
            IssueKind::EmptyKnownDatestampWindow => "empty-known-datestamp-window",
            IssueKind::SpuriousEmptyResumptionToken => "spurious-empty-resumption-token",
            IssueKind::MalformedInvalidIdResponse => "malformed-invalid-id-response",
            IssueKind::GranularityMismatch => "granularity-mismatch",
            IssueKind::ExceptionHandlingError => "exception-handling-error",
            IssueKind::OtherError => "other-error",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            IssueKind::EnvelopeSchemaError => "Response does not match the OAI-PMH envelope schema",
            IssueKind::EmptyKnownDatestampWindow => {
                "Empty response when from and until set to a known datestamp"
            }
            IssueKind::SpuriousEmptyResumptionToken => {
                "Empty resumptionToken in response to request without resumptionToken"
            }
            IssueKind::MalformedInvalidIdResponse => {
                "Malformed response to GetRecord with identifier invalid\"id"
            }
            IssueKind::GranularityMismatch => {
                "Granularity of earliestDatestamp doesn't match granularity value"
            }
            IssueKind::ExceptionHandlingError => "Wrong response to an illegal request",
            IssueKind::OtherError => "Other error",
        }
    }

    pub fn hint(self) -> &'static str {
        match self {
            IssueKind::EnvelopeSchemaError => {
                "Responses must follow the OAI-PMH 2.0 schema exactly: root element, namespace, \
                 element order and the fixed error-code vocabulary. The transcript entry lists \
                 the offending element."
            }
            IssueKind::EmptyKnownDatestampWindow => {
                "A record must be returned when from and until both equal its own datestamp; \
                 the bounds are inclusive. Check the date comparison in the from/until filter \
                 and any time-zone conversion."
            }
            IssueKind::SpuriousEmptyResumptionToken => {
                "Only the last page of a list that was split by resumption carries an empty \
                 resumptionToken. A complete single-page response must omit the element."
            }
            IssueKind::MalformedInvalidIdResponse => {
                "The request element echoes the arguments; the quote in invalid\"id must be \
                 written as &quot; (or, since the argument is illegal, the attributes omitted)."
            }
            IssueKind::GranularityMismatch => {
                "earliestDatestamp must be written at the granularity declared in <granularity>."
            }
            IssueKind::ExceptionHandlingError => {
                "Illegal requests must be answered with the OAI-PMH error code the protocol \
                 prescribes; the transcript shows the request and the expected codes."
            }
            IssueKind::OtherError => "See the transcript entry for the request and the response.",
        }
    }

    /// Issues about illegal requests; the only ones compatible with
    /// `ValidExcludingExceptions`.
    pub fn is_exception_handling(self) -> bool {
        self == IssueKind::ExceptionHandlingError
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }
}

impl fmt::Display for IssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceIssue {
    pub kind: IssueKind,
    /// Probe that raised an exception-handling issue (`P1`…`P6`, `resumption`).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probe: Option<String>,
    pub detail: String,
    /// Indices into the report transcript.
    pub transcript: Vec<usize>,
}

impl ComplianceIssue {
    pub fn new(kind: IssueKind, detail: impl Into<String>, transcript: Vec<usize>) -> Self {
        Self {
            kind,
            probe: None,
            detail: detail.into(),
            transcript,
        }
    }

    pub fn exception(probe: &str, detail: impl Into<String>, transcript: Vec<usize>) -> Self {
        Self {
            probe: Some(probe.to_string()),
            ..Self::new(IssueKind::ExceptionHandlingError, detail, transcript)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "kebab-case")]
pub enum Outcome {
    Aborted(AbortReason),
    Failed,
    ValidExcludingExceptions,
    RobustlyValid,
}

impl Outcome {
    pub fn code(self) -> &'static str {
        match self {
            Outcome::Aborted(_) => "aborted",
            Outcome::Failed => "failed",
            Outcome::ValidExcludingExceptions => "valid-excluding-exceptions",
            Outcome::RobustlyValid => "robustly-valid",
        }
    }

    pub fn abort_reason(self) -> Option<AbortReason> {
        match self {
            Outcome::Aborted(r) => Some(r),
            _ => None,
        }
    }

    /// Passed every test that uses legal requests.
    pub fn valid_requests_work(self) -> bool {
        matches!(
            self,
            Outcome::ValidExcludingExceptions | Outcome::RobustlyValid
        )
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Aborted(r) => write!(f, "aborted ({r})"),
            other => f.write_str(other.code()),
        }
    }
}

/// Pure classification of a finished or aborted run.
pub fn classify(issues: &[ComplianceIssue], abort: Option<AbortReason>) -> Outcome {
    if let Some(reason) = abort {
        return Outcome::Aborted(reason);
    }
    if issues.is_empty() {
        Outcome::RobustlyValid
    } else if issues.iter().all(|i| i.kind.is_exception_handling()) {
        Outcome::ValidExcludingExceptions
    } else {
        Outcome::Failed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecordRef {
    pub identifier: String,
    pub datestamp: UtcDatestamp,
}

/// What came back over HTTP, without the body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeSummary {
    pub status_code: u16,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub content_type: Option<String>,
    pub elapsed_ms: u64,
    pub retries_performed: u32,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub waits: Vec<RetryWait>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub redirects: Vec<String>,
    pub body_bytes: usize,
    /// Leading part of the body, lossily decoded.
    pub body_excerpt: String,
}

const EXCERPT_CHARS: usize = 600;

impl From<&HttpExchange> for ExchangeSummary {
    fn from(x: &HttpExchange) -> Self {
        let text = String::from_utf8_lossy(&x.body);
        Self {
            status_code: x.status_code,
            content_type: x.content_type().map(str::to_string),
            elapsed_ms: x.elapsed.as_millis() as u64,
            retries_performed: x.retries_performed,
            waits: x.waits.clone(),
            redirects: x.redirects.clone(),
            body_bytes: x.body.len(),
            body_excerpt: text.chars().take(EXCERPT_CHARS).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    /// Test step: `identify`, `list-metadata-formats`, `list-sets`,
    /// `list-identifiers`, `window`, `get-record`, `resumption`, `P1`…`P6`.
    pub step: String,
    pub request_url: String,
    /// What a correct repository answers.
    pub expectation: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exchange: Option<ExchangeSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub transport_error: Option<String>,
    pub diagnostics: Vec<Diagnostic>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub base_url: BaseUrl,
    pub started_at: UtcDatestamp,
    pub outcome: Outcome,
    /// Findings that justified the abort, if any.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub abort_diagnostics: Vec<Diagnostic>,
    pub issues: Vec<ComplianceIssue>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub identify: Option<IdentifyInfo>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sample: Option<SampleRecordRef>,
    pub exception_battery: bool,
    pub transcript: Vec<TranscriptEntry>,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn issue_codes(&self) -> Vec<String> {
        self.issues
            .iter()
            .map(|i| i.kind.code().to_string())
            .collect()
    }

    /// A passing oai_dc GetRecord appears in the transcript.
    pub fn has_oai_dc_record(&self) -> bool {
        self.transcript
            .iter()
            .any(|t| t.step == "get-record" && t.passed)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let headline = match self.outcome {
            Outcome::RobustlyValid => {
                "ROBUSTLY VALID: all tests passed, including illegal-request handling".to_string()
            }
            Outcome::ValidExcludingExceptions => {
                "VALID EXCLUDING EXCEPTIONS: valid requests work, illegal requests are mishandled"
                    .to_string()
            }
            Outcome::Failed => format!(
                "FAILED: {} problem(s) with valid requests",
                self.issues
                    .iter()
                    .filter(|i| !i.kind.is_exception_handling())
                    .count()
            ),
            Outcome::Aborted(r) => format!("ABORTED: {}", r.label()),
        };
        let _ = writeln!(out, "Outcome: {headline}");
        let _ = writeln!(out, "Base URL: {}", self.base_url);
        let _ = writeln!(out, "Started: {}", self.started_at);
        if let Some(info) = &self.identify {
            let _ = writeln!(out, "Repository: {}", info.repository_name);
        }
        if !self.exception_battery {
            let _ = writeln!(out, "Illegal-request tests: skipped");
        }
        if !self.abort_diagnostics.is_empty() {
            let _ = writeln!(out, "\nWhy validation stopped:");
            for d in &self.abort_diagnostics {
                write_diagnostic(&mut out, d, "  ");
            }
        }
        if !self.issues.is_empty() {
            let _ = writeln!(out, "\nIssues:");
            for (n, issue) in self.issues.iter().enumerate() {
                let probe = issue
                    .probe
                    .as_deref()
                    .map(|p| format!(" {p}"))
                    .unwrap_or_default();
                let _ = writeln!(out, "  {}. [{}{probe}] {}", n + 1, issue.kind, issue.detail);
                let _ = writeln!(out, "     hint: {}", issue.kind.hint());
                if !issue.transcript.is_empty() {
                    let refs: Vec<String> = issue
                        .transcript
                        .iter()
                        .map(|i| format!("#{}", i + 1))
                        .collect();
                    let _ = writeln!(out, "     see transcript {}", refs.join(", "));
                }
            }
        }
        let _ = writeln!(out, "\nTranscript:");
        for (n, t) in self.transcript.iter().enumerate() {
            let verdict = if t.passed { "ok" } else { "FAIL" };
            let _ = writeln!(
                out,
                "  #{} {} [{verdict}] GET {}",
                n + 1,
                t.step,
                t.request_url
            );
            let _ = writeln!(out, "     expected: {}", t.expectation);
            match (&t.exchange, &t.transport_error) {
                (Some(x), _) => {
                    let _ = writeln!(
                        out,
                        "     HTTP {} ({} bytes, {} ms, {} retries)",
                        x.status_code, x.body_bytes, x.elapsed_ms, x.retries_performed
                    );
                }
                (None, Some(e)) => {
                    let _ = writeln!(out, "     no usable response: {e}");
                }
                (None, None) => {}
            }
            for d in &t.diagnostics {
                write_diagnostic(&mut out, d, "     ");
            }
        }
        out
    }
}

fn write_diagnostic(out: &mut String, d: &Diagnostic, indent: &str) {
    let _ = writeln!(out, "{indent}{d}");
    if let Some(h) = &d.hint {
        let _ = writeln!(out, "{indent}  hint: {h}");
    }
    if let Some(detail) = &d.detail {
        let _ = writeln!(out, "{indent}  parser: {detail}");
    }
}
