//! The validation sequence: Identify checks, envelope checks of the other
//! verbs, the sample-record tests and the illegal-request battery.

mod report;

use chrono::Utc;

pub use report::{
    classify, AbortReason, ComplianceIssue, ExchangeSummary, IssueKind, Outcome, SampleRecordRef,
    TranscriptEntry, ValidationReport,
};

use crate::analysis::{
    analyze_http, check_list_sets, codes, extract_headers, extract_identify,
    extract_metadata_formats, extract_record, Diagnostic, Envelope, HeaderList,
};
use crate::model::{
    validate_admin_email, BaseUrl, Granularity, IdentifyInfo, OaiErrorCode, UtcDatestamp, Verb,
    OAI_DC_PREFIX, PROTOCOL_VERSION,
};
use crate::transport::{
    build_request_url, HttpExchange, HttpTransport, RetryPolicy, Transport, TransportError,
};

/// The identifier sent by probe P1; the quote makes it illegal.
pub const INVALID_ID: &str = "invalid\"id";
pub const NONEXISTENT_PREFIX: &str = "nonexistent";
pub const BOGUS_VERB: &str = "NoSuchVerb";
pub const JUNK_TOKEN: &str = "junk";

/// One illegal request of the exception battery.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Probe {
    pub id: &'static str,
    pub verb: &'static str,
    pub args: Vec<(String, String)>,
    /// Any of these error codes is a correct answer.
    pub accepted: Vec<OaiErrorCode>,
}

fn pairs(args: &[(&str, &str)]) -> Vec<(String, String)> {
    args.iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// The battery for a given sample record, in execution order.
pub fn exception_probes(sample_identifier: &str, sample_deleted: bool) -> Vec<Probe> {
    use OaiErrorCode::*;
    vec![
        Probe {
            id: "P1",
            verb: "GetRecord",
            args: pairs(&[
                ("identifier", INVALID_ID),
                ("metadataPrefix", OAI_DC_PREFIX),
            ]),
            accepted: vec![BadArgument, IdDoesNotExist],
        },
        Probe {
            id: "P2",
            verb: BOGUS_VERB,
            args: vec![],
            accepted: vec![BadVerb],
        },
        Probe {
            id: "P3",
            verb: "GetRecord",
            args: vec![],
            accepted: vec![BadArgument],
        },
        Probe {
            id: "P4",
            verb: "ListIdentifiers",
            args: pairs(&[("resumptionToken", JUNK_TOKEN)]),
            accepted: vec![BadResumptionToken],
        },
        Probe {
            id: "P5",
            verb: "ListRecords",
            args: pairs(&[("metadataPrefix", NONEXISTENT_PREFIX)]),
            accepted: vec![CannotDisseminateFormat],
        },
        Probe {
            id: "P6",
            verb: "GetRecord",
            args: pairs(&[
                ("identifier", sample_identifier),
                ("metadataPrefix", NONEXISTENT_PREFIX),
            ]),
            accepted: if sample_deleted {
                vec![CannotDisseminateFormat, IdDoesNotExist]
            } else {
                vec![CannotDisseminateFormat]
            },
        },
    ]
}

/// Identify values that end a validation when wrong.
pub fn check_identify(info: &IdentifyInfo) -> Result<(), (AbortReason, Vec<Diagnostic>)> {
    if info.protocol_version != PROTOCOL_VERSION {
        return Err((
            AbortReason::BadProtocolVersion,
            vec![Diagnostic::fatal(
                codes::BAD_PROTOCOL_VERSION,
                format!(
                    "<protocolVersion> is {:?}, not \"2.0\".",
                    info.protocol_version
                ),
            )],
        ));
    }
    let bad: Vec<Diagnostic> = info
        .admin_emails
        .iter()
        .filter(|e| !validate_admin_email(e))
        .map(|e| {
            Diagnostic::fatal(
                codes::BAD_ADMIN_EMAIL,
                format!("<adminEmail> {e:?} is not an e-mail address."),
            )
        })
        .collect();
    if info.admin_emails.is_empty() {
        return Err((
            AbortReason::BadAdminEmail,
            vec![Diagnostic::fatal(
                codes::BAD_ADMIN_EMAIL,
                "No <adminEmail> is given.",
            )],
        ));
    }
    if !bad.is_empty() {
        return Err((AbortReason::BadAdminEmail, bad));
    }
    Ok(())
}

pub fn test_granularity_consistency(info: &IdentifyInfo) -> Vec<ComplianceIssue> {
    if info.earliest_datestamp.granularity() == info.granularity {
        return Vec::new();
    }
    vec![ComplianceIssue::new(
        IssueKind::GranularityMismatch,
        format!(
            "earliestDatestamp {} is not written as {}",
            info.earliest_datestamp,
            info.granularity.pattern()
        ),
        Vec::new(),
    )]
}

/// Runs the full sequence over HTTP.
pub fn run_validation(
    base: &BaseUrl,
    policy: RetryPolicy,
    include_exception_battery: bool,
) -> Result<ValidationReport, TransportError> {
    let mut transport = HttpTransport::new(policy)?;
    Ok(run_validation_with(
        &mut transport,
        base,
        include_exception_battery,
    ))
}

/// Runs the full sequence over any transport.
pub fn run_validation_with<T: Transport + ?Sized>(
    transport: &mut T,
    base: &BaseUrl,
    include_exception_battery: bool,
) -> ValidationReport {
    Validator::new(transport, base.clone(), include_exception_battery).run()
}

struct Abort {
    reason: AbortReason,
    diagnostics: Vec<Diagnostic>,
}

impl Abort {
    fn new(reason: AbortReason, diagnostics: Vec<Diagnostic>) -> Self {
        Self {
            reason,
            diagnostics,
        }
    }
}

type Step<T> = Result<T, Abort>;

struct Sample {
    r#ref: SampleRecordRef,
    deleted: bool,
}

struct Validator<'t, T: Transport + ?Sized> {
    transport: &'t mut T,
    base: BaseUrl,
    battery: bool,
    transcript: Vec<TranscriptEntry>,
    issues: Vec<ComplianceIssue>,
    identify: Option<IdentifyInfo>,
    sample: Option<SampleRecordRef>,
}

impl<'t, T: Transport + ?Sized> Validator<'t, T> {
    fn new(transport: &'t mut T, base: BaseUrl, battery: bool) -> Self {
        Self {
            transport,
            base,
            battery,
            transcript: Vec::new(),
            issues: Vec::new(),
            identify: None,
            sample: None,
        }
    }

    fn run(mut self) -> ValidationReport {
        let started_at = UtcDatestamp::second(Utc::now());
        let abort = self.sequence().err();
        let (reason, abort_diagnostics) = match abort {
            Some(a) => (Some(a.reason), a.diagnostics),
            None => (None, Vec::new()),
        };
        ValidationReport {
            base_url: self.base,
            started_at,
            outcome: classify(&self.issues, reason),
            abort_diagnostics,
            issues: self.issues,
            identify: self.identify,
            sample: self.sample,
            exception_battery: self.battery,
            transcript: self.transcript,
        }
    }

    fn sequence(&mut self) -> Step<()> {
        let info = self.identify_step()?;
        self.identify = Some(info.clone());
        self.formats_and_sets()?;
        let (list_idx, list, sample) = self.list_identifiers()?;
        self.sample = Some(sample.r#ref.clone());
        let window = self.window(&sample.r#ref, info.granularity)?;
        self.get_record(&sample)?;
        self.issues.extend(test_granularity_consistency(&info));
        self.resumption(list_idx, &list, window)?;
        if self.battery {
            for probe in exception_probes(&sample.r#ref.identifier, sample.deleted) {
                self.probe(&probe)?;
            }
        }
        Ok(())
    }

    // --- plumbing ---

    /// Sends one request and records it. `Ok(None)` means nothing usable came
    /// back; only an exhausted Retry-After budget aborts.
    fn request(
        &mut self,
        step: &str,
        verb: &str,
        args: &[(String, String)],
        expectation: &str,
    ) -> Step<(usize, Option<HttpExchange>)> {
        let idx = self.transcript.len();
        let mut entry = TranscriptEntry {
            step: step.to_string(),
            request_url: build_request_url(&self.base, verb, args),
            expectation: expectation.to_string(),
            exchange: None,
            transport_error: None,
            diagnostics: Vec::new(),
            passed: true,
        };
        let result = self.transport.fetch(&self.base, verb, args);
        let outcome = match result {
            Ok(x) => {
                entry.exchange = Some(ExchangeSummary::from(&x));
                if x.status_code != 200 {
                    entry.diagnostics.push(Diagnostic::warning(
                        codes::HTTP_STATUS,
                        format!("HTTP status {} instead of 200.", x.status_code),
                    ));
                }
                Ok(Some(x))
            }
            Err(e @ TransportError::ExcessiveRetryAfter { .. }) => {
                let d = Diagnostic::fatal(codes::EXCESSIVE_RETRY_AFTER, e.to_string());
                entry.transport_error = Some(e.to_string());
                entry.diagnostics.push(d.clone());
                entry.passed = false;
                Err(Abort::new(AbortReason::ExcessiveRetryAfter, vec![d]))
            }
            Err(e) => {
                entry.transport_error = Some(e.to_string());
                entry
                    .diagnostics
                    .push(Diagnostic::fatal(codes::NO_RESPONSE, e.to_string()));
                entry.passed = false;
                Ok(None)
            }
        };
        self.transcript.push(entry);
        outcome.map(|x| (idx, x))
    }

    fn fail(&mut self, idx: usize, diags: impl IntoIterator<Item = Diagnostic>) {
        let entry = &mut self.transcript[idx];
        entry.passed = false;
        entry.diagnostics.extend(diags);
    }

    fn blocking_diags(&self, idx: usize) -> Vec<Diagnostic> {
        self.transcript[idx]
            .diagnostics
            .iter()
            .filter(|d| d.is_blocking())
            .cloned()
            .collect()
    }

    fn analyze(
        &mut self,
        idx: usize,
        x: &HttpExchange,
        verb: Verb,
    ) -> Result<Envelope, Vec<Diagnostic>> {
        match analyze_http(&x.body, x.content_type(), verb) {
            Ok(env) => {
                self.transcript[idx]
                    .diagnostics
                    .extend(env.warnings.iter().cloned());
                Ok(env)
            }
            Err(diags) => {
                self.fail(idx, diags.iter().cloned());
                Err(diags)
            }
        }
    }

    fn issue(&mut self, kind: IssueKind, detail: impl Into<String>, idx: usize) {
        self.transcript[idx].passed = false;
        self.issues
            .push(ComplianceIssue::new(kind, detail, vec![idx]));
    }

    fn summarize(diags: &[Diagnostic]) -> String {
        diags
            .iter()
            .find(|d| d.is_blocking())
            .map(|d| d.message.clone())
            .unwrap_or_else(|| "see transcript".to_string())
    }

    // --- steps ---

    fn identify_step(&mut self) -> Step<IdentifyInfo> {
        let (idx, x) = self.request("identify", "Identify", &[], "an Identify response")?;
        let Some(x) = x else {
            return Err(Abort::new(
                AbortReason::NoIdentifyResponse,
                self.blocking_diags(idx),
            ));
        };
        let env = self
            .analyze(idx, &x, Verb::Identify)
            .map_err(|d| Abort::new(AbortReason::IdentifyParseFailure, d))?;
        if !env.errors().is_empty() {
            let codes_seen: Vec<&str> = env.errors().iter().map(|e| e.raw_code.as_str()).collect();
            let d = Diagnostic::fatal(
                codes::ERROR_RESPONSE,
                format!(
                    "Identify was answered with error(s): {}.",
                    codes_seen.join(", ")
                ),
            );
            self.fail(idx, [d.clone()]);
            return Err(Abort::new(AbortReason::OtherIdentifyError, vec![d]));
        }
        let info = match extract_identify(&env) {
            Ok(info) => info,
            Err(diags) => {
                self.fail(idx, diags.iter().cloned());
                return Err(Abort::new(AbortReason::OtherIdentifyError, diags));
            }
        };
        if let Err((reason, diags)) = check_identify(&info) {
            self.fail(idx, diags.iter().cloned());
            self.identify = Some(info);
            return Err(Abort::new(reason, diags));
        }
        Ok(info)
    }

    /// Error answers are acceptable here as long as the codes are legal ones.
    fn unknown_codes(&mut self, idx: usize, env: &Envelope) -> bool {
        let unknown: Vec<String> = env
            .unknown_error_codes()
            .iter()
            .map(|c| c.to_string())
            .collect();
        if unknown.is_empty() {
            return false;
        }
        let detail = format!(
            "error code(s) outside the protocol vocabulary: {}",
            unknown.join(", ")
        );
        self.fail(idx, [Diagnostic::error(codes::BAD_VALUE, detail.clone())]);
        self.issue(IssueKind::EnvelopeSchemaError, detail, idx);
        true
    }

    fn formats_and_sets(&mut self) -> Step<()> {
        let (idx, x) = self.request(
            "list-metadata-formats",
            "ListMetadataFormats",
            &[],
            "a ListMetadataFormats response including oai_dc",
        )?;
        match x {
            None => self.issue(
                IssueKind::OtherError,
                "no response to ListMetadataFormats",
                idx,
            ),
            Some(x) => match self.analyze(idx, &x, Verb::ListMetadataFormats) {
                Err(d) => self.issue(
                    IssueKind::EnvelopeSchemaError,
                    format!("ListMetadataFormats: {}", Self::summarize(&d)),
                    idx,
                ),
                Ok(env) if !env.errors().is_empty() => {
                    self.unknown_codes(idx, &env);
                }
                Ok(env) => match extract_metadata_formats(&env) {
                    Err(d) => {
                        self.fail(idx, d.iter().cloned());
                        self.issue(
                            IssueKind::EnvelopeSchemaError,
                            format!("ListMetadataFormats: {}", Self::summarize(&d)),
                            idx,
                        )
                    }
                    Ok(formats) if !formats.iter().any(|f| f.prefix == OAI_DC_PREFIX) => self
                        .issue(
                            IssueKind::OtherError,
                            "oai_dc is not among the metadata formats",
                            idx,
                        ),
                    Ok(_) => {}
                },
            },
        }

        let (idx, x) = self.request(
            "list-sets",
            "ListSets",
            &[],
            "a ListSets response, or noSetHierarchy",
        )?;
        match x {
            None => self.issue(IssueKind::OtherError, "no response to ListSets", idx),
            Some(x) => match self.analyze(idx, &x, Verb::ListSets) {
                Err(d) => self.issue(
                    IssueKind::EnvelopeSchemaError,
                    format!("ListSets: {}", Self::summarize(&d)),
                    idx,
                ),
                Ok(env) => {
                    if !self.unknown_codes(idx, &env) {
                        let d: Vec<Diagnostic> = check_list_sets(&env)
                            .into_iter()
                            .filter(Diagnostic::is_blocking)
                            .collect();
                        if !d.is_empty() {
                            let detail = format!("ListSets: {}", Self::summarize(&d));
                            self.fail(idx, d);
                            self.issue(IssueKind::EnvelopeSchemaError, detail, idx);
                        }
                    }
                }
            },
        }
        Ok(())
    }

    fn list_identifiers(&mut self) -> Step<(usize, HeaderList, Sample)> {
        let args = pairs(&[("metadataPrefix", OAI_DC_PREFIX)]);
        let (idx, x) = self.request(
            "list-identifiers",
            "ListIdentifiers",
            &args,
            "at least one header",
        )?;
        let no_ids = |this: &Self, extra: Vec<Diagnostic>| {
            let mut d = this.blocking_diags(idx);
            d.extend(extra);
            Abort::new(AbortReason::NoIdentifiersListed, d)
        };
        let Some(x) = x else {
            return Err(no_ids(self, vec![]));
        };
        let env = self
            .analyze(idx, &x, Verb::ListIdentifiers)
            .map_err(|d| Abort::new(AbortReason::NoIdentifiersListed, d))?;
        let list = match extract_headers(&env) {
            Ok(list) => list,
            Err(d) => {
                self.fail(idx, d.iter().cloned());
                return Err(no_ids(self, vec![]));
            }
        };
        if list.headers.is_empty() {
            let codes_seen: Vec<&str> = list.errors.iter().map(|e| e.raw_code.as_str()).collect();
            let msg = if codes_seen.is_empty() {
                "ListIdentifiers returned no headers.".to_string()
            } else {
                format!(
                    "ListIdentifiers returned error(s): {}.",
                    codes_seen.join(", ")
                )
            };
            let d = Diagnostic::fatal(codes::NO_IDENTIFIERS, msg);
            self.fail(idx, [d]);
            return Err(no_ids(self, vec![]));
        }
        let header = list
            .headers
            .iter()
            .find(|h| !h.deleted)
            .unwrap_or(&list.headers[0])
            .clone();
        let Some(datestamp) = header.datestamp else {
            let d = Diagnostic::fatal(
                codes::NO_SAMPLE_DATESTAMP,
                format!("The header for {} has no datestamp.", header.identifier),
            );
            self.fail(idx, [d.clone()]);
            return Err(Abort::new(AbortReason::NoDatestampInSampleRecord, vec![d]));
        };
        let sample = Sample {
            r#ref: SampleRecordRef {
                identifier: header.identifier,
                datestamp,
            },
            deleted: header.deleted,
        };
        Ok((idx, list, sample))
    }

    /// Returns the window response's transcript index and token, if any.
    fn window(
        &mut self,
        sample: &SampleRecordRef,
        granularity: Granularity,
    ) -> Step<Option<(usize, HeaderList)>> {
        let stamp = sample.datestamp.at_granularity(granularity).render();
        let args = pairs(&[
            ("metadataPrefix", OAI_DC_PREFIX),
            ("from", &stamp),
            ("until", &stamp),
        ]);
        let expectation = format!("a list containing {}", sample.identifier);
        let (idx, x) = self.request("window", "ListIdentifiers", &args, &expectation)?;
        let Some(x) = x else {
            self.issue(
                IssueKind::OtherError,
                "no response to the known-datestamp window request",
                idx,
            );
            return Ok(None);
        };
        let env = match self.analyze(idx, &x, Verb::ListIdentifiers) {
            Ok(env) => env,
            Err(d) => {
                self.issue(
                    IssueKind::EnvelopeSchemaError,
                    format!("window: {}", Self::summarize(&d)),
                    idx,
                );
                return Ok(None);
            }
        };
        let list = match extract_headers(&env) {
            Ok(list) => list,
            Err(d) => {
                let detail = format!("window: {}", Self::summarize(&d));
                self.fail(idx, d);
                self.issue(IssueKind::EnvelopeSchemaError, detail, idx);
                return Ok(None);
            }
        };
        if !list
            .headers
            .iter()
            .any(|h| h.identifier == sample.identifier)
        {
            let what = if list.headers.is_empty() {
                let codes_seen: Vec<&str> =
                    list.errors.iter().map(|e| e.raw_code.as_str()).collect();
                format!("an empty answer ({})", codes_seen.join(", "))
            } else {
                format!("{} header(s) without the sample", list.headers.len())
            };
            self.issue(
                IssueKind::EmptyKnownDatestampWindow,
                format!(
                    "from=until={stamp} gave {what}; {} should be listed",
                    sample.identifier
                ),
                idx,
            );
        }
        Ok(Some((idx, list)))
    }

    fn get_record(&mut self, sample: &Sample) -> Step<()> {
        let id = &sample.r#ref.identifier;
        let args = pairs(&[("identifier", id), ("metadataPrefix", OAI_DC_PREFIX)]);
        let (idx, x) = self.request(
            "get-record",
            "GetRecord",
            &args,
            "the sample record in oai_dc",
        )?;
        let Some(x) = x else {
            self.issue(
                IssueKind::OtherError,
                "no response to GetRecord for the sample",
                idx,
            );
            return Ok(());
        };
        let env = match self.analyze(idx, &x, Verb::GetRecord) {
            Ok(env) => env,
            Err(d) => {
                self.issue(
                    IssueKind::EnvelopeSchemaError,
                    format!("GetRecord: {}", Self::summarize(&d)),
                    idx,
                );
                return Ok(());
            }
        };
        if !env.errors().is_empty() {
            let codes_seen: Vec<&str> = env.errors().iter().map(|e| e.raw_code.as_str()).collect();
            let d = Diagnostic::error(
                codes::ERROR_RESPONSE,
                format!("GetRecord for {id} failed with {}.", codes_seen.join(", ")),
            );
            let detail = d.message.clone();
            self.fail(idx, [d]);
            if !self.unknown_codes(idx, &env) {
                self.issue(IssueKind::OtherError, detail, idx);
            }
            return Ok(());
        }
        match extract_record(&env) {
            Err(d) => {
                let detail = format!("GetRecord: {}", Self::summarize(&d));
                self.fail(idx, d);
                self.issue(IssueKind::EnvelopeSchemaError, detail, idx);
            }
            Ok(rec) if rec.header.identifier != *id => self.issue(
                IssueKind::OtherError,
                format!("GetRecord for {id} returned {}", rec.header.identifier),
                idx,
            ),
            Ok(rec) if !rec.header.deleted && !rec.oai_dc => self.issue(
                IssueKind::OtherError,
                format!("GetRecord for {id} has no oai_dc:dc metadata"),
                idx,
            ),
            Ok(_) => {}
        }
        Ok(())
    }

    fn resumption(
        &mut self,
        list_idx: usize,
        list: &HeaderList,
        window: Option<(usize, HeaderList)>,
    ) -> Step<()> {
        let mut spurious = Vec::new();
        for (idx, l) in [
            Some((list_idx, list)),
            window.as_ref().map(|(i, l)| (*i, l)),
        ]
        .into_iter()
        .flatten()
        {
            if l.token.as_ref().is_some_and(|t| t.is_empty()) {
                spurious.push(idx);
            }
        }
        if !spurious.is_empty() {
            for &idx in &spurious {
                self.transcript[idx].passed = false;
            }
            self.issues.push(ComplianceIssue::new(
                IssueKind::SpuriousEmptyResumptionToken,
                "a first-page list response carries an empty resumptionToken",
                spurious,
            ));
        }
        let Some(token) = list.token.as_ref().filter(|t| !t.is_empty()) else {
            return Ok(());
        };
        let args = pairs(&[("resumptionToken", &token.token)]);
        let (idx, x) = self.request(
            "resumption",
            "ListIdentifiers",
            &args,
            "the next page of the list",
        )?;
        let Some(x) = x else {
            self.issue(
                IssueKind::OtherError,
                "no response to the resumptionToken request",
                idx,
            );
            return Ok(());
        };
        let env = match self.analyze(idx, &x, Verb::ListIdentifiers) {
            Ok(env) => env,
            Err(d) => {
                self.issue(
                    IssueKind::EnvelopeSchemaError,
                    format!("continuation: {}", Self::summarize(&d)),
                    idx,
                );
                return Ok(());
            }
        };
        if env.has_error_code(OaiErrorCode::BadResumptionToken) {
            self.transcript[idx].passed = false;
            self.issues.push(ComplianceIssue::exception(
                "resumption",
                "the repository rejected its own resumptionToken as badResumptionToken",
                vec![idx],
            ));
            return Ok(());
        }
        if !env.errors().is_empty() {
            if !self.unknown_codes(idx, &env) {
                self.issue(
                    IssueKind::OtherError,
                    "the continuation request was answered with an error",
                    idx,
                );
            }
            return Ok(());
        }
        match extract_headers(&env) {
            Err(d) => {
                let detail = format!("continuation: {}", Self::summarize(&d));
                self.fail(idx, d);
                self.issue(IssueKind::EnvelopeSchemaError, detail, idx);
            }
            Ok(next) if next.headers.is_empty() => {
                self.issue(IssueKind::OtherError, "the continuation page is empty", idx)
            }
            Ok(_) => {}
        }
        Ok(())
    }

    fn probe(&mut self, probe: &Probe) -> Step<()> {
        let accepted: Vec<&str> = probe.accepted.iter().map(|c| c.as_str()).collect();
        let expectation = format!("error {}", accepted.join(" or "));
        let (idx, x) = self.request(probe.id, probe.verb, &probe.args, &expectation)?;
        let Some(x) = x else {
            self.transcript[idx].passed = false;
            self.issues.push(ComplianceIssue::exception(
                probe.id,
                "no response",
                vec![idx],
            ));
            return Ok(());
        };
        let verb = probe.verb.parse::<Verb>().unwrap_or(Verb::Identify);
        let env = match self.analyze(idx, &x, verb) {
            Ok(env) => env,
            Err(d) => {
                let quote = d.iter().any(|d| d.code == codes::UNESCAPED_QUOTE)
                    || String::from_utf8_lossy(&x.body).contains("\"invalid\"id\"");
                if probe.id == "P1" && quote {
                    self.issue(
                        IssueKind::MalformedInvalidIdResponse,
                        "the quote in invalid\"id is echoed unescaped, so the response is not XML",
                        idx,
                    );
                } else {
                    self.issues.push(ComplianceIssue::exception(
                        probe.id,
                        format!("malformed response: {}", Self::summarize(&d)),
                        vec![idx],
                    ));
                }
                return Ok(());
            }
        };
        if env.verb_payload().is_some() {
            let d = Diagnostic::error(
                codes::UNEXPECTED_PAYLOAD,
                format!("A normal response came back; expected {expectation}."),
            );
            self.fail(idx, [d]);
            self.issues.push(ComplianceIssue::exception(
                probe.id,
                format!("answered with a normal response instead of {expectation}"),
                vec![idx],
            ));
            return Ok(());
        }
        if !env
            .errors()
            .iter()
            .any(|e| e.code.is_some_and(|c| probe.accepted.contains(&c)))
        {
            let seen: Vec<&str> = env.errors().iter().map(|e| e.raw_code.as_str()).collect();
            let d = Diagnostic::error(
                codes::UNEXPECTED_ERROR_CODE,
                format!("Got {}; expected {expectation}.", seen.join(", ")),
            );
            self.fail(idx, [d]);
            self.issues.push(ComplianceIssue::exception(
                probe.id,
                format!("answered {} instead of {expectation}", seen.join(", ")),
                vec![idx],
            ));
        }
        Ok(())
    }
}
