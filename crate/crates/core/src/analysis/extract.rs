//! Typed extraction from verb payloads, with the per-verb element order and
//! cardinality rules of the OAI-PMH 2.0 schema.

use serde::{Deserialize, Serialize};

use super::diagnostics::{codes, Diagnostic};
use super::{Envelope, OaiError, Payload, XmlElement};
use crate::model::{
    parse_datestamp, validate_base_url, Granularity, IdentifyInfo, RecordHeader, ResumptionToken,
    OAI_DC_NAMESPACE,
};

struct Slot {
    name: &'static str,
    min: usize,
    max: Option<usize>,
}

const fn one(name: &'static str) -> Slot {
    Slot {
        name,
        min: 1,
        max: Some(1),
    }
}

const fn optional(name: &'static str) -> Slot {
    Slot {
        name,
        min: 0,
        max: Some(1),
    }
}

const fn any(name: &'static str) -> Slot {
    Slot {
        name,
        min: 0,
        max: None,
    }
}

const fn many(name: &'static str) -> Slot {
    Slot {
        name,
        min: 1,
        max: None,
    }
}

/// Order and cardinality check of the OAI-namespaced children of `parent`.
fn check_sequence(parent: &XmlElement, slots: &[Slot], diags: &mut Vec<Diagnostic>) {
    let mut counts = vec![0usize; slots.len()];
    let mut furthest = 0usize;
    for child in &parent.children {
        if !child.in_oai_namespace() {
            diags.push(
                Diagnostic::error(
                    codes::BAD_NAMESPACE,
                    format!(
                        "<{}> inside <{}> is not in the OAI-PMH namespace.",
                        child.name, parent.name
                    ),
                )
                .at_opt(Some(child.location)),
            );
            continue;
        }
        let Some(idx) = slots.iter().position(|s| s.name == child.name) else {
            diags.push(
                Diagnostic::error(
                    codes::UNEXPECTED_ELEMENT,
                    format!("<{}> is not allowed inside <{}>.", child.name, parent.name),
                )
                .at_opt(Some(child.location)),
            );
            continue;
        };
        if idx < furthest {
            diags.push(
                Diagnostic::error(
                    codes::ELEMENT_OUT_OF_ORDER,
                    format!(
                        "<{}> must come before <{}> inside <{}>.",
                        child.name, slots[furthest].name, parent.name
                    ),
                )
                .at_opt(Some(child.location)),
            );
        }
        furthest = furthest.max(idx);
        counts[idx] += 1;
    }
    for (slot, count) in slots.iter().zip(counts) {
        if count < slot.min {
            diags.push(
                Diagnostic::error(
                    codes::MISSING_ELEMENT,
                    format!(
                        "<{}> is missing the mandatory <{}> element.",
                        parent.name, slot.name
                    ),
                )
                .at_opt(Some(parent.location)),
            );
        }
        if slot.max.is_some_and(|max| count > max) {
            diags.push(
                Diagnostic::error(
                    codes::DUPLICATE_ELEMENT,
                    format!(
                        "<{}> may appear only once inside <{}>.",
                        slot.name, parent.name
                    ),
                )
                .at_opt(Some(parent.location)),
            );
        }
    }
}

fn error_response(env: &Envelope) -> Diagnostic {
    let codes_list: Vec<&str> = env.errors().iter().map(|e| e.raw_code.as_str()).collect();
    Diagnostic::error(
        codes::ERROR_RESPONSE,
        format!(
            "The repository answered with error code(s) {} instead of a result.",
            codes_list.join(", ")
        ),
    )
}

fn verb_payload<'a>(env: &'a Envelope, verb: &str) -> Result<&'a XmlElement, Vec<Diagnostic>> {
    match &env.payload {
        Payload::Verb(el) if el.name == verb => Ok(el),
        Payload::Verb(el) => Err(vec![Diagnostic::error(
            codes::WRONG_VERB_PAYLOAD,
            format!("Expected a <{verb}> payload, found <{}>.", el.name),
        )]),
        Payload::Errors(_) => Err(vec![error_response(env)]),
    }
}

fn finish<T>(value: T, diags: Vec<Diagnostic>) -> Result<T, Vec<Diagnostic>> {
    if diags.iter().any(Diagnostic::is_blocking) {
        Err(diags)
    } else {
        Ok(value)
    }
}

const IDENTIFY_SLOTS: [Slot; 9] = [
    one("repositoryName"),
    one("baseURL"),
    one("protocolVersion"),
    many("adminEmail"),
    one("earliestDatestamp"),
    one("deletedRecord"),
    one("granularity"),
    any("compression"),
    any("description"),
];

/// Pulls an [`IdentifyInfo`] out of an Identify envelope. Protocol version and
/// e-mail *values* are not judged here; that is the engine's job.
pub fn extract_identify(env: &Envelope) -> Result<IdentifyInfo, Vec<Diagnostic>> {
    let payload = verb_payload(env, "Identify")?;
    let mut diags = Vec::new();
    check_sequence(payload, &IDENTIFY_SLOTS, &mut diags);

    let text = |name: &str| payload.child(name).map(|el| el.trimmed_text().to_string());

    let base_url = text("baseURL").and_then(|raw| match validate_base_url(&raw) {
        Ok(url) => Some(url),
        Err(e) => {
            diags.push(Diagnostic::error(
                codes::BAD_VALUE,
                format!("<baseURL> {raw:?} is not usable: {e}."),
            ));
            None
        }
    });
    let granularity = text("granularity").and_then(|raw| {
        let g = Granularity::from_pattern(&raw);
        if g.is_none() {
            diags.push(
                Diagnostic::error(
                    codes::BAD_VALUE,
                    format!(
                        "<granularity> is {raw:?}; it must be YYYY-MM-DD or YYYY-MM-DDThh:mm:ssZ."
                    ),
                )
                .at_opt(payload.child("granularity").map(|e| e.location)),
            );
        }
        g
    });
    let earliest = text("earliestDatestamp").and_then(|raw| match parse_datestamp(&raw) {
        Ok(d) => Some(d),
        Err(e) => {
            diags.push(
                Diagnostic::error(
                    codes::BAD_DATESTAMP,
                    format!("<earliestDatestamp> is malformed: {e}."),
                )
                .at_opt(payload.child("earliestDatestamp").map(|e| e.location)),
            );
            None
        }
    });
    let deleted_record = text("deletedRecord");
    if let Some(d) = &deleted_record {
        if !matches!(d.as_str(), "no" | "persistent" | "transient") {
            diags.push(Diagnostic::error(
                codes::BAD_VALUE,
                format!("<deletedRecord> is {d:?}; it must be no, persistent or transient."),
            ));
        }
    }

    let info = (|| {
        Some(IdentifyInfo {
            repository_name: text("repositoryName")?,
            base_url: base_url?,
            protocol_version: text("protocolVersion")?,
            earliest_datestamp: earliest?,
            deleted_record: deleted_record?,
            granularity: granularity?,
            admin_emails: payload
                .children_named("adminEmail")
                .map(|e| e.trimmed_text().to_string())
                .collect(),
        })
    })();
    match info {
        Some(info) if !info.admin_emails.is_empty() => finish(info, diags),
        _ => {
            if !diags.iter().any(Diagnostic::is_blocking) {
                diags.push(Diagnostic::error(
                    codes::MISSING_ELEMENT,
                    "The Identify response is incomplete.",
                ));
            }
            Err(diags)
        }
    }
}

/// Headers of a list response (or of the records in it) in document order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HeaderList {
    pub headers: Vec<RecordHeader>,
    /// `None` when no resumptionToken element was present.
    pub token: Option<ResumptionToken>,
    /// Non-empty when the response was an error list instead of a payload.
    pub errors: Vec<OaiError>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub header: RecordHeader,
    pub has_metadata: bool,
    /// Metadata is an `oai_dc:dc` container.
    pub oai_dc: bool,
}

fn parse_header(el: &XmlElement, diags: &mut Vec<Diagnostic>) -> RecordHeader {
    check_sequence(
        el,
        &[one("identifier"), optional("datestamp"), any("setSpec")],
        diags,
    );
    let deleted = match el.attribute("status") {
        None => false,
        Some("deleted") => true,
        Some(other) => {
            diags.push(
                Diagnostic::error(
                    codes::BAD_VALUE,
                    format!("<header status={other:?}>; only \"deleted\" is allowed."),
                )
                .at_opt(Some(el.location)),
            );
            false
        }
    };
    let datestamp = el
        .child("datestamp")
        .and_then(|d| match parse_datestamp(d.trimmed_text()) {
            Ok(ts) => Some(ts),
            Err(e) => {
                diags.push(
                    Diagnostic::error(
                        codes::BAD_DATESTAMP,
                        format!("<datestamp> is malformed: {e}."),
                    )
                    .at_opt(Some(d.location)),
                );
                None
            }
        });
    RecordHeader {
        identifier: el
            .child("identifier")
            .map(|i| i.trimmed_text().to_string())
            .unwrap_or_default(),
        datestamp,
        set_specs: el
            .children_named("setSpec")
            .map(|s| s.trimmed_text().to_string())
            .collect(),
        deleted,
    }
}

fn parse_token(el: &XmlElement, diags: &mut Vec<Diagnostic>) -> ResumptionToken {
    let mut number = |attr: &str| {
        el.attribute(attr)
            .and_then(|v| match v.trim().parse::<u64>() {
                Ok(n) => Some(n),
                Err(_) => {
                    diags.push(
                        Diagnostic::error(
                            codes::BAD_VALUE,
                            format!("resumptionToken {attr}={v:?} is not a non-negative integer."),
                        )
                        .at_opt(Some(el.location)),
                    );
                    None
                }
            })
    };
    let complete_list_size = number("completeListSize");
    let cursor = number("cursor");
    ResumptionToken {
        token: el.trimmed_text().to_string(),
        complete_list_size,
        cursor,
    }
}

fn parse_record(el: &XmlElement, diags: &mut Vec<Diagnostic>) -> RecordSummary {
    check_sequence(
        el,
        &[one("header"), optional("metadata"), any("about")],
        diags,
    );
    let header = el
        .child("header")
        .map(|h| parse_header(h, diags))
        .unwrap_or(RecordHeader {
            identifier: String::new(),
            datestamp: None,
            set_specs: Vec::new(),
            deleted: false,
        });
    let metadata = el.child("metadata");
    if let Some(m) = metadata {
        if m.children.len() != 1 {
            diags.push(
                Diagnostic::error(
                    codes::UNEXPECTED_ELEMENT,
                    format!(
                        "<metadata> must hold exactly one element, found {}.",
                        m.children.len()
                    ),
                )
                .at_opt(Some(m.location)),
            );
        }
    }
    let oai_dc = metadata
        .and_then(|m| m.children.first())
        .is_some_and(|c| c.name == "dc" && c.namespace.as_deref() == Some(OAI_DC_NAMESPACE));
    RecordSummary {
        header,
        has_metadata: metadata.is_some(),
        oai_dc,
    }
}

/// Headers from a ListIdentifiers or ListRecords response. An error response
/// yields an empty list carrying the error codes.
pub fn extract_headers(env: &Envelope) -> Result<HeaderList, Vec<Diagnostic>> {
    let payload = match &env.payload {
        Payload::Errors(errors) => {
            return Ok(HeaderList {
                errors: errors.clone(),
                ..HeaderList::default()
            })
        }
        Payload::Verb(el) => el,
    };
    let mut diags = Vec::new();
    let headers = match payload.name.as_str() {
        "ListIdentifiers" => {
            check_sequence(
                payload,
                &[any("header"), optional("resumptionToken")],
                &mut diags,
            );
            payload
                .children_named("header")
                .map(|h| parse_header(h, &mut diags))
                .collect()
        }
        "ListRecords" => {
            check_sequence(
                payload,
                &[any("record"), optional("resumptionToken")],
                &mut diags,
            );
            payload
                .children_named("record")
                .map(|r| parse_record(r, &mut diags).header)
                .collect()
        }
        other => {
            return Err(vec![Diagnostic::error(
                codes::WRONG_VERB_PAYLOAD,
                format!("Expected a ListIdentifiers or ListRecords payload, found <{other}>."),
            )])
        }
    };
    let token = payload
        .child("resumptionToken")
        .map(|t| parse_token(t, &mut diags));
    finish(
        HeaderList {
            headers,
            token,
            errors: Vec::new(),
        },
        diags,
    )
}

/// The single record of a GetRecord response.
pub fn extract_record(env: &Envelope) -> Result<RecordSummary, Vec<Diagnostic>> {
    let payload = verb_payload(env, "GetRecord")?;
    let mut diags = Vec::new();
    check_sequence(payload, &[one("record")], &mut diags);
    let record = payload.child("record").map(|r| parse_record(r, &mut diags));
    match record {
        Some(r) => finish(r, diags),
        None => Err(diags),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataFormat {
    pub prefix: String,
    pub schema: String,
    pub namespace: String,
}

pub fn extract_metadata_formats(env: &Envelope) -> Result<Vec<MetadataFormat>, Vec<Diagnostic>> {
    let payload = verb_payload(env, "ListMetadataFormats")?;
    let mut diags = Vec::new();
    check_sequence(payload, &[many("metadataFormat")], &mut diags);
    let formats = payload
        .children_named("metadataFormat")
        .map(|f| {
            check_sequence(
                f,
                &[
                    one("metadataPrefix"),
                    one("schema"),
                    one("metadataNamespace"),
                ],
                &mut diags,
            );
            let text = |n: &str| {
                f.child(n)
                    .map(|e| e.trimmed_text().to_string())
                    .unwrap_or_default()
            };
            MetadataFormat {
                prefix: text("metadataPrefix"),
                schema: text("schema"),
                namespace: text("metadataNamespace"),
            }
        })
        .collect();
    finish(formats, diags)
}

/// Structural findings for a ListSets payload; an error response has none.
pub fn check_list_sets(env: &Envelope) -> Vec<Diagnostic> {
    let Payload::Verb(payload) = &env.payload else {
        return Vec::new();
    };
    if payload.name != "ListSets" {
        return vec![Diagnostic::error(
            codes::WRONG_VERB_PAYLOAD,
            format!("Expected a <ListSets> payload, found <{}>.", payload.name),
        )];
    }
    let mut diags = Vec::new();
    check_sequence(
        payload,
        &[many("set"), optional("resumptionToken")],
        &mut diags,
    );
    for set in payload.children_named("set") {
        check_sequence(
            set,
            &[one("setSpec"), one("setName"), any("setDescription")],
            &mut diags,
        );
    }
    if let Some(t) = payload.child("resumptionToken") {
        parse_token(t, &mut diags);
    }
    diags
}
