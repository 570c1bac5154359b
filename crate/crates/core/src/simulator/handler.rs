//! The request → response function of the simulated repository.
//!
//! [`handle`] answers exactly as a compliant OAI-PMH 2.0 data provider would
//! and then bends the answer according to the [`FaultProfile`]. It is pure:
//! the list cursor travels inside the resumption token and the response date
//! is passed in.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::content::{RepoContent, SimRecord};
use super::fault::FaultProfile;
use crate::model::{
    parse_datestamp, Granularity, OaiErrorCode, UtcDatestamp, Verb, OAI_DC_NAMESPACE,
    OAI_DC_PREFIX, OAI_DC_SCHEMA, OAI_NAMESPACE, PROTOCOL_VERSION,
};

/// A parsed incoming request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimRequest {
    /// The URL the repository believes it lives at; echoed in responses.
    pub base_url: String,
    pub args: Vec<(String, String)>,
}

impl SimRequest {
    pub fn from_query(base_url: impl Into<String>, query: &str) -> Self {
        Self {
            base_url: base_url.into(),
            args: url::form_urlencoded::parse(query.as_bytes())
                .into_owned()
                .collect(),
        }
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.args
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl SimResponse {
    fn new(status: u16, content_type: &str, body: impl Into<Vec<u8>>) -> Self {
        Self {
            status,
            headers: vec![("Content-Type".to_string(), content_type.to_string())],
            body: body.into(),
        }
    }

    pub fn body_text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Respond(SimResponse),
    /// Keep the connection open and never answer.
    Stall,
}

impl Reply {
    pub fn response(&self) -> Option<&SimResponse> {
        match self {
            Reply::Respond(r) => Some(r),
            Reply::Stall => None,
        }
    }
}

pub const XML_CONTENT_TYPE: &str = "text/xml; charset=utf-8";
pub const STYLESHEET_PI: &str = "<?xml-stylesheet type=\"text/xsl\" href=\"/oai2.xsl\"?>";
/// Code substituted for every error code under `unknown_error_code`.
pub const BOGUS_ERROR_CODE: &str = "badRequest";

const HTML_500: &str =
    "<!DOCTYPE html>\n<html><head><title>500 Internal Server Error</title></head>\
<body><h1>Internal Server Error</h1><p>The server encountered an internal error and was unable to \
complete your request.</p></body></html>\n";

pub fn handle(
    request: &SimRequest,
    profile: &FaultProfile,
    content: &RepoContent,
    now: UtcDatestamp,
) -> Reply {
    if profile.no_response {
        return Reply::Stall;
    }
    if let Some(secs) = profile.infinite_503 {
        return Reply::Respond(service_unavailable(secs));
    }
    if profile.http_500_html_body {
        return Reply::Respond(SimResponse::new(500, "text/html; charset=utf-8", HTML_500));
    }
    let responder = Responder {
        request,
        profile,
        content,
    };
    let mut body = responder.respond(now);
    if profile.stylesheet_pi_invalid_body {
        body.insert_str(0, &format!("{STYLESHEET_PI}\n"));
    }
    Reply::Respond(SimResponse::new(200, XML_CONTENT_TYPE, body))
}

pub(super) fn service_unavailable(retry_after: u64) -> SimResponse {
    let mut r = SimResponse::new(
        503,
        "text/plain; charset=utf-8",
        "Service temporarily unavailable\n",
    );
    r.headers
        .push(("Retry-After".to_string(), retry_after.to_string()));
    r
}

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Identifiers must be URIs; these characters never appear in one.
fn identifier_syntax_ok(id: &str) -> bool {
    !id.is_empty()
        && !id
            .chars()
            .any(|c| c.is_whitespace() || c.is_control() || "\"<>\\^`{|}".contains(c))
}

type OaiErrors = Vec<(OaiErrorCode, String)>;

enum Answer {
    Payload { verb: Verb, xml: String },
    Errors(OaiErrors),
}

fn err(code: OaiErrorCode, message: impl Into<String>) -> Answer {
    Answer::Errors(vec![(code, message.into())])
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ListCursor {
    prefix: String,
    from: Option<UtcDatestamp>,
    until: Option<UtcDatestamp>,
    cursor: usize,
}

fn encode_token(c: &ListCursor, digest: &str) -> String {
    format!(
        "{}!{}!{}!{}!{}",
        c.cursor,
        c.prefix,
        c.from.map(|d| d.render()).unwrap_or_default(),
        c.until.map(|d| d.render()).unwrap_or_default(),
        digest
    )
}

fn decode_token(token: &str, digest: &str) -> Option<ListCursor> {
    let parts: Vec<&str> = token.split('!').collect();
    let [cursor, prefix, from, until, tag] = parts.as_slice() else {
        return None;
    };
    if *tag != digest {
        return None;
    }
    let bound = |s: &str| -> Option<Option<UtcDatestamp>> {
        if s.is_empty() {
            Some(None)
        } else {
            parse_datestamp(s).ok().map(Some)
        }
    };
    Some(ListCursor {
        prefix: prefix.to_string(),
        from: bound(from)?,
        until: bound(until)?,
        cursor: cursor.parse().ok()?,
    })
}

struct Responder<'a> {
    request: &'a SimRequest,
    profile: &'a FaultProfile,
    content: &'a RepoContent,
}

impl Responder<'_> {
    fn lenient(&self) -> bool {
        self.profile.ignore_bad_args
    }

    fn records(&self) -> &[SimRecord] {
        if self.profile.empty_repository {
            &[]
        } else {
            &self.content.records
        }
    }

    fn respond(&self, now: UtcDatestamp) -> String {
        let (verb, answer) = self.dispatch();
        let echo_allowed = match &answer {
            Answer::Payload { .. } => true,
            Answer::Errors(errors) => !errors
                .iter()
                .any(|(c, _)| matches!(c, OaiErrorCode::BadVerb | OaiErrorCode::BadArgument)),
        };
        let mut xml = String::with_capacity(2048);
        xml.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            xml,
            "<OAI-PMH xmlns=\"{OAI_NAMESPACE}\" xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" \
             xsi:schemaLocation=\"{OAI_NAMESPACE} http://www.openarchives.org/OAI/2.0/OAI-PMH.xsd\">"
        );
        let _ = writeln!(
            xml,
            "  <responseDate>{}</responseDate>",
            now.at_granularity(Granularity::Second)
        );
        xml.push_str("  <request");
        if self.profile.unescaped_invalid_id_echo {
            // Echo every argument verbatim, quotes and all.
            for (k, v) in &self.request.args {
                let _ = write!(xml, " {k}=\"{v}\"");
            }
        } else if echo_allowed {
            if let Some(v) = verb {
                let _ = write!(xml, " verb=\"{}\"", v.as_str());
            }
            for (k, v) in &self.request.args {
                if k != "verb" {
                    let _ = write!(xml, " {}=\"{}\"", escape(k), escape(v));
                }
            }
        }
        let _ = writeln!(xml, ">{}</request>", escape(&self.request.base_url));
        match answer {
            Answer::Payload { verb, xml: inner } => {
                let _ = writeln!(xml, "  <{verb}>\n{inner}  </{verb}>");
            }
            Answer::Errors(errors) => {
                for (code, message) in errors {
                    let code = if self.profile.unknown_error_code {
                        BOGUS_ERROR_CODE
                    } else {
                        code.as_str()
                    };
                    let _ = writeln!(xml, "  <error code=\"{code}\">{}</error>", escape(&message));
                }
            }
        }
        xml.push_str("</OAI-PMH>\n");
        xml
    }

    fn dispatch(&self) -> (Option<Verb>, Answer) {
        let verbs: Vec<&str> = self
            .request
            .args
            .iter()
            .filter(|(k, _)| k == "verb")
            .map(|(_, v)| v.as_str())
            .collect();
        let verb = match verbs.as_slice() {
            [one] => one.parse::<Verb>().ok(),
            _ => None,
        };
        let verb = match verb {
            Some(v) => v,
            None if self.lenient() => Verb::Identify,
            None => {
                let msg = match verbs.as_slice() {
                    [] => "The request has no verb argument.".to_string(),
                    [one] => format!("{one:?} is not a legal OAI-PMH verb."),
                    _ => "The verb argument is repeated.".to_string(),
                };
                return (None, err(OaiErrorCode::BadVerb, msg));
            }
        };
        if let Some(bad) = self.check_arguments(verb) {
            return (Some(verb), bad);
        }
        let answer = match verb {
            Verb::Identify => self.identify(),
            Verb::ListMetadataFormats => self.list_metadata_formats(),
            Verb::ListSets => self.list_sets(),
            Verb::ListIdentifiers | Verb::ListRecords => self.list(verb),
            Verb::GetRecord => self.get_record(),
        };
        (Some(verb), answer)
    }

    /// Illegal, repeated and missing arguments, and the exclusivity of
    /// resumptionToken.
    fn check_arguments(&self, verb: Verb) -> Option<Answer> {
        if self.lenient() {
            return None;
        }
        let (required, optional, exclusive): (&[&str], &[&str], Option<&str>) = match verb {
            Verb::Identify => (&[], &[], None),
            Verb::ListMetadataFormats => (&[], &["identifier"], None),
            Verb::ListSets => (&[], &[], Some("resumptionToken")),
            Verb::ListIdentifiers | Verb::ListRecords => (
                &["metadataPrefix"],
                &["from", "until", "set"],
                Some("resumptionToken"),
            ),
            Verb::GetRecord => (&["identifier", "metadataPrefix"], &[], None),
        };
        let keys: Vec<&str> = self
            .request
            .args
            .iter()
            .map(|(k, _)| k.as_str())
            .filter(|k| *k != "verb")
            .collect();
        for (i, k) in keys.iter().enumerate() {
            if keys[..i].contains(k) {
                return Some(err(
                    OaiErrorCode::BadArgument,
                    format!("The argument {k} is repeated."),
                ));
            }
            if !required.contains(k) && !optional.contains(k) && Some(*k) != exclusive {
                return Some(err(
                    OaiErrorCode::BadArgument,
                    format!("{k} is not a legal argument for {verb}."),
                ));
            }
        }
        if let Some(ex) = exclusive {
            if keys.contains(&ex) {
                if keys.len() > 1 {
                    return Some(err(
                        OaiErrorCode::BadArgument,
                        format!("{ex} is an exclusive argument."),
                    ));
                }
                return None;
            }
        }
        if let Some(missing) = required.iter().find(|r| !keys.contains(r)) {
            return Some(err(
                OaiErrorCode::BadArgument,
                format!("The required argument {missing} is missing."),
            ));
        }
        None
    }

    fn identify(&self) -> Answer {
        let c = self.content;
        let earliest = if self.profile.granularity_mismatch {
            match c.granularity {
                Granularity::Second => c.earliest_datestamp.at_granularity(Granularity::Day),
                Granularity::Day => c.earliest_datestamp.at_granularity(Granularity::Second),
            }
        } else {
            c.earliest_datestamp.at_granularity(c.granularity)
        };
        let version = self
            .profile
            .protocol_version_override
            .as_deref()
            .unwrap_or(PROTOCOL_VERSION);
        let email = if self.profile.bad_admin_email {
            "webmaster"
        } else {
            c.admin_email.as_str()
        };
        let deleted = if c.records.iter().any(|r| r.deleted) {
            "persistent"
        } else {
            "no"
        };
        let elements = [
            ("repositoryName", escape(&c.repository_name)),
            ("baseURL", escape(&self.request.base_url)),
            ("protocolVersion", escape(version)),
            ("adminEmail", escape(email)),
            ("earliestDatestamp", earliest.render()),
            ("deletedRecord", deleted.to_string()),
            ("granularity", c.granularity.pattern().to_string()),
        ];
        let mut xml = String::new();
        for (name, value) in elements {
            if self.profile.missing_identify_element.as_deref() == Some(name) {
                continue;
            }
            let close = if self.profile.malformed_identify_xml && name == "repositoryName" {
                "repositoryname"
            } else {
                name
            };
            let _ = writeln!(xml, "    <{name}>{value}</{close}>");
        }
        Answer::Payload {
            verb: Verb::Identify,
            xml,
        }
    }

    fn list_metadata_formats(&self) -> Answer {
        if let Some(id) = self.request.get("identifier") {
            if !self.records().iter().any(|r| r.identifier == id) {
                return err(OaiErrorCode::IdDoesNotExist, format!("No item {id}."));
            }
        }
        let xml = format!(
            "    <metadataFormat>\n      <metadataPrefix>{OAI_DC_PREFIX}</metadataPrefix>\n      \
             <schema>{OAI_DC_SCHEMA}</schema>\n      <metadataNamespace>{OAI_DC_NAMESPACE}</metadataNamespace>\n    \
             </metadataFormat>\n"
        );
        Answer::Payload {
            verb: Verb::ListMetadataFormats,
            xml,
        }
    }

    fn list_sets(&self) -> Answer {
        if self.request.get("resumptionToken").is_some() && !self.lenient() {
            return err(
                OaiErrorCode::BadResumptionToken,
                "This repository issues no set tokens.",
            );
        }
        err(
            OaiErrorCode::NoSetHierarchy,
            "This repository does not support sets.",
        )
    }

    fn header_xml(&self, r: &SimRecord, indent: &str) -> String {
        let status = if r.deleted { " status=\"deleted\"" } else { "" };
        let mut xml = format!(
            "{indent}<header{status}>\n{indent}  <identifier>{}</identifier>\n",
            escape(&r.identifier)
        );
        if !self.profile.strip_datestamps {
            let _ = writeln!(
                xml,
                "{indent}  <datestamp>{}</datestamp>",
                r.datestamp.at_granularity(self.content.granularity)
            );
        }
        let _ = writeln!(xml, "{indent}</header>");
        xml
    }

    fn record_xml(&self, r: &SimRecord, indent: &str) -> String {
        let inner = format!("{indent}  ");
        let mut xml = format!("{indent}<record>\n{}", self.header_xml(r, &inner));
        if !r.deleted {
            let _ = writeln!(
                xml,
                "{inner}<metadata>\n{inner}  <oai_dc:dc xmlns:oai_dc=\"{OAI_DC_NAMESPACE}\" \
                 xmlns:dc=\"http://purl.org/dc/elements/1.1/\" \
                 xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" \
                 xsi:schemaLocation=\"{OAI_DC_NAMESPACE} {OAI_DC_SCHEMA}\">\n\
                 {inner}    <dc:title>{}</dc:title>\n{inner}    <dc:identifier>{}</dc:identifier>\n\
                 {inner}  </oai_dc:dc>\n{inner}</metadata>",
                escape(&r.title),
                escape(&r.identifier)
            );
        }
        let _ = writeln!(xml, "{indent}</record>");
        xml
    }

    fn parse_bound(&self, name: &str) -> Result<Option<UtcDatestamp>, Answer> {
        let Some(raw) = self.request.get(name) else {
            return Ok(None);
        };
        match parse_datestamp(raw) {
            Ok(d)
                if d.granularity() == Granularity::Second
                    && self.content.granularity == Granularity::Day =>
            {
                if self.lenient() {
                    Ok(None)
                } else {
                    Err(err(
                        OaiErrorCode::BadArgument,
                        format!("{name} is finer than the repository granularity YYYY-MM-DD."),
                    ))
                }
            }
            Ok(d) => Ok(Some(d)),
            Err(_) if self.lenient() => Ok(None),
            Err(e) => Err(err(OaiErrorCode::BadArgument, format!("{name}: {e}"))),
        }
    }

    fn list(&self, verb: Verb) -> Answer {
        let digest = self.content.digest();
        let mut first_page = true;
        let cursor = if let Some(token) = self.request.get("resumptionToken") {
            match decode_token(token, &digest) {
                Some(c) => {
                    first_page = false;
                    c
                }
                None if self.lenient() => ListCursor {
                    prefix: OAI_DC_PREFIX.to_string(),
                    from: None,
                    until: None,
                    cursor: 0,
                },
                None => {
                    return err(
                        OaiErrorCode::BadResumptionToken,
                        format!("The resumptionToken {token:?} is invalid or has expired."),
                    )
                }
            }
        } else {
            let (from, until) = match (self.parse_bound("from"), self.parse_bound("until")) {
                (Ok(f), Ok(u)) => (f, u),
                (Err(e), _) | (_, Err(e)) => return e,
            };
            if let (Some(f), Some(u)) = (from, until) {
                if !self.lenient() {
                    if f.granularity() != u.granularity() {
                        return err(
                            OaiErrorCode::BadArgument,
                            "from and until have different granularities.",
                        );
                    }
                    if f > u {
                        return err(OaiErrorCode::BadArgument, "from is later than until.");
                    }
                }
            }
            ListCursor {
                prefix: self
                    .request
                    .get("metadataPrefix")
                    .unwrap_or(OAI_DC_PREFIX)
                    .to_string(),
                from,
                until,
                cursor: 0,
            }
        };
        if cursor.prefix != OAI_DC_PREFIX && !self.lenient() {
            return err(
                OaiErrorCode::CannotDisseminateFormat,
                format!("The metadata format {:?} is not supported.", cursor.prefix),
            );
        }
        if self.request.get("set").is_some() && !self.lenient() {
            return err(
                OaiErrorCode::NoSetHierarchy,
                "This repository does not support sets.",
            );
        }
        if self.profile.empty_window && (cursor.from.is_some() || cursor.until.is_some()) {
            return err(
                OaiErrorCode::NoRecordsMatch,
                "No records match the request.",
            );
        }
        let matching: Vec<&SimRecord> = self
            .records()
            .iter()
            .filter(|r| {
                let in_from = cursor
                    .from
                    .is_none_or(|f| r.datestamp.at_granularity(f.granularity()) >= f);
                let in_until = cursor
                    .until
                    .is_none_or(|u| r.datestamp.at_granularity(u.granularity()) <= u);
                in_from && in_until
            })
            .collect();
        if matching.is_empty() {
            return err(
                OaiErrorCode::NoRecordsMatch,
                "No records match the request.",
            );
        }
        if cursor.cursor >= matching.len() && !first_page {
            return err(
                OaiErrorCode::BadResumptionToken,
                "The resumptionToken points past the list.",
            );
        }
        let start = cursor.cursor.min(matching.len());
        let end = (start + self.content.page_size).min(matching.len());
        let mut xml = String::new();
        for r in &matching[start..end] {
            xml.push_str(&match verb {
                Verb::ListRecords => self.record_xml(r, "    "),
                _ => self.header_xml(r, "    "),
            });
        }
        let total = matching.len();
        if end < total {
            let next = ListCursor {
                cursor: end,
                ..cursor
            };
            let _ = writeln!(
                xml,
                "    <resumptionToken completeListSize=\"{total}\" cursor=\"{start}\">{}</resumptionToken>",
                escape(&encode_token(&next, &digest))
            );
        } else if !first_page {
            let _ = writeln!(
                xml,
                "    <resumptionToken completeListSize=\"{total}\" cursor=\"{start}\"/>"
            );
        } else if self.profile.spurious_empty_resumption_token {
            xml.push_str("    <resumptionToken></resumptionToken>\n");
        }
        Answer::Payload { verb, xml }
    }

    fn get_record(&self) -> Answer {
        let first = self
            .records()
            .first()
            .map(|r| r.identifier.as_str())
            .unwrap_or("");
        let id = self.request.get("identifier").unwrap_or(first);
        if !identifier_syntax_ok(id) && !self.lenient() {
            return err(
                OaiErrorCode::BadArgument,
                "The identifier is not a syntactically valid URI.",
            );
        }
        let Some(record) = self.records().iter().find(|r| r.identifier == id) else {
            return err(OaiErrorCode::IdDoesNotExist, format!("No item {id}."));
        };
        let prefix = self.request.get("metadataPrefix").unwrap_or(OAI_DC_PREFIX);
        if prefix != OAI_DC_PREFIX && !self.lenient() {
            return err(
                OaiErrorCode::CannotDisseminateFormat,
                format!("The metadata format {prefix:?} is not supported."),
            );
        }
        Answer::Payload {
            verb: Verb::GetRecord,
            xml: self.record_xml(record, "    "),
        }
    }
}

#[cfg(test)]
mod tests;
