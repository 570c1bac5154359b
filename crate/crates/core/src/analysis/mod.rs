//! Well-formedness and envelope checks for OAI-PMH response bodies.
//!
//! Instead of a general schema processor, the analyzer checks the things the
//! OAI-PMH schema actually constrains in practice: the root element and its
//! namespace, the order and cardinality of `responseDate`, `request` and the
//! payload, and datestamp shapes. Payload-level checks live in [`extract`].

mod decode;
pub mod diagnostics;
pub mod extract;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use diagnostics::{codes, Diagnostic, Location, Severity};
pub use extract::{
    check_list_sets, extract_headers, extract_identify, extract_metadata_formats, extract_record,
    HeaderList, MetadataFormat, RecordSummary,
};

use crate::model::{parse_datestamp, Granularity, OaiErrorCode, UtcDatestamp, Verb, OAI_NAMESPACE};

const NODES_LIMIT: u32 = 2_000_000;

/// Owned copy of an element subtree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XmlElement {
    pub name: String,
    pub namespace: Option<String>,
    pub attributes: Vec<(String, String)>,
    /// Concatenated direct text children.
    pub text: String,
    pub children: Vec<XmlElement>,
    pub location: Location,
}

impl XmlElement {
    fn from_node(node: roxmltree::Node<'_, '_>) -> Self {
        let pos = node.document().text_pos_at(node.range().start);
        let mut text = String::new();
        let mut children = Vec::new();
        for child in node.children() {
            if child.is_element() {
                children.push(XmlElement::from_node(child));
            } else if child.is_text() {
                text.push_str(child.text().unwrap_or_default());
            }
        }
        Self {
            name: node.tag_name().name().to_string(),
            namespace: node.tag_name().namespace().map(str::to_string),
            attributes: node
                .attributes()
                .map(|a| (a.name().to_string(), a.value().to_string()))
                .collect(),
            text,
            children,
            location: Location {
                line: pos.row,
                column: pos.col,
            },
        }
    }

    pub fn attribute(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn in_oai_namespace(&self) -> bool {
        self.namespace.as_deref() == Some(OAI_NAMESPACE)
    }

    pub fn child(&self, name: &str) -> Option<&XmlElement> {
        self.children.iter().find(|c| c.name == name)
    }

    pub fn children_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a XmlElement> {
        self.children.iter().filter(move |c| c.name == name)
    }

    pub fn trimmed_text(&self) -> &str {
        self.text.trim()
    }
}

/// An `error` element of an OAI-PMH response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OaiError {
    /// The code exactly as sent; may be outside the protocol's vocabulary.
    pub raw_code: String,
    pub code: Option<OaiErrorCode>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestEcho {
    pub attributes: BTreeMap<String, String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Payload {
    Verb(XmlElement),
    Errors(Vec<OaiError>),
}

/// A structurally valid OAI-PMH response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub response_date: UtcDatestamp,
    pub request_echo: RequestEcho,
    pub payload: Payload,
    /// Non-blocking findings (charset disagreements and the like).
    pub warnings: Vec<Diagnostic>,
}

impl Envelope {
    pub fn errors(&self) -> &[OaiError] {
        match &self.payload {
            Payload::Errors(errors) => errors,
            Payload::Verb(_) => &[],
        }
    }

    pub fn verb_payload(&self) -> Option<&XmlElement> {
        match &self.payload {
            Payload::Verb(element) => Some(element),
            Payload::Errors(_) => None,
        }
    }

    pub fn has_error_code(&self, code: OaiErrorCode) -> bool {
        self.errors().iter().any(|e| e.code == Some(code))
    }

    /// Error codes that are not part of the OAI-PMH 2.0 vocabulary.
    pub fn unknown_error_codes(&self) -> Vec<&str> {
        self.errors()
            .iter()
            .filter(|e| e.code.is_none())
            .map(|e| e.raw_code.as_str())
            .collect()
    }
}

pub type Analysis = Result<Envelope, Vec<Diagnostic>>;

/// Checks a raw body against the OAI-PMH envelope for `expected_verb`.
pub fn analyze(body: &[u8], expected_verb: Verb) -> Analysis {
    analyze_http(body, None, expected_verb)
}

/// As [`analyze`], also comparing the Content-Type charset against the XML
/// declaration.
pub fn analyze_http(body: &[u8], content_type: Option<&str>, expected_verb: Verb) -> Analysis {
    let decoded = decode::decode_body(body, content_type)?;
    let mut warnings = decoded.warnings;
    let text = decoded.text.as_str();

    if let Some(diags) = precheck(text) {
        return Err(diags);
    }

    let options = roxmltree::ParsingOptions {
        allow_dtd: false,
        nodes_limit: NODES_LIMIT,
    };
    let doc = match roxmltree::Document::parse_with_options(text, options) {
        Ok(doc) => doc,
        Err(e) => return Err(vec![translate_parse_error(text, &e)]),
    };

    let mut diags = Vec::new();
    let envelope = check_envelope(doc.root_element(), expected_verb, &mut diags);
    match envelope {
        Some((response_date, request_echo, payload))
            if !diags.iter().any(Diagnostic::is_blocking) =>
        {
            warnings.extend(diags);
            Ok(Envelope {
                response_date,
                request_echo,
                payload,
                warnings,
            })
        }
        _ => {
            diags.extend(warnings);
            if diags.is_empty() {
                diags.push(Diagnostic::error(
                    codes::MALFORMED_XML,
                    "The OAI-PMH envelope is invalid.",
                ));
            }
            Err(diags)
        }
    }
}

fn looks_like_html(text: &str) -> bool {
    let head: String = text
        .trim_start()
        .chars()
        .take(64)
        .collect::<String>()
        .to_ascii_lowercase();
    head.starts_with("<!doctype html")
        || head.starts_with("<html")
        || head.starts_with("<head")
        || head.starts_with("<body")
}

fn html_title(text: &str) -> Option<String> {
    let lower = text.to_ascii_lowercase();
    let start = lower.find("<title>")? + "<title>".len();
    let end = start + lower[start..].find("</title>")?;
    let title = text.get(start..end)?.trim();
    (!title.is_empty()).then(|| title.to_string())
}

/// Catches bodies that are plainly not XML before the parser produces a less
/// helpful message about them.
fn precheck(text: &str) -> Option<Vec<Diagnostic>> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Some(vec![Diagnostic::fatal(
            codes::EMPTY_BODY,
            "The response body is empty.",
        )]);
    }
    if looks_like_html(text) {
        let title = html_title(text);
        let mut page = Diagnostic::error(
            codes::HTML_ERROR_PAGE,
            match &title {
                Some(t) => format!("The response is an HTML page titled \"{t}\"."),
                None => "The response is an HTML page.".to_string(),
            },
        );
        if let Some(t) = title {
            page = page.with_detail(t);
        }
        return Some(vec![
            Diagnostic::fatal(
                codes::NOT_XML,
                "The response is not XML; it looks like an HTML server error page.",
            )
            .at(1, 1),
            page,
        ]);
    }
    if !trimmed.starts_with('<') {
        let excerpt: String = trimmed.chars().take(60).collect();
        return Some(vec![Diagnostic::fatal(
            codes::NOT_XML,
            "The response is not XML: it does not start with '<'.",
        )
        .at(1, 1)
        .with_detail(format!("body starts with {excerpt:?}"))]);
    }
    None
}

fn char_offset(text: &str, pos: roxmltree::TextPos) -> Option<usize> {
    let line = text.split('\n').nth(pos.row.checked_sub(1)? as usize)?;
    let line_start = line.as_ptr() as usize - text.as_ptr() as usize;
    let col = pos.col.checked_sub(1)? as usize;
    let within = line.char_indices().nth(col).map_or(line.len(), |(i, _)| i);
    Some(line_start + within)
}

/// True when the parser stopped right after a quote that closed an attribute
/// value too early, as in `identifier="invalid"id"`.
fn is_premature_quote(text: &str, pos: roxmltree::TextPos) -> bool {
    let Some(offset) = char_offset(text, pos) else {
        return false;
    };
    let before = &text[..offset];
    let Some(quote) = before.chars().last().filter(|c| *c == '"' || *c == '\'') else {
        return false;
    };
    let after_ok = text[offset..]
        .chars()
        .next()
        .is_some_and(|c| !c.is_whitespace() && c != '>' && c != '/');
    // The stray quote must sit inside a start tag, after an `=` value opener.
    let tag_start = before.rfind('<');
    let tag_end = before.rfind('>');
    let in_tag = match (tag_start, tag_end) {
        (Some(s), Some(e)) => s > e,
        (Some(_), None) => true,
        _ => false,
    };
    after_ok && in_tag && before[..before.len() - quote.len_utf8()].contains('=')
}

fn translate_parse_error(text: &str, e: &roxmltree::Error) -> Diagnostic {
    use roxmltree::Error as E;
    let pos = e.pos();
    let raw = e.to_string();
    let has_stylesheet = text.contains("<?xml-stylesheet");
    let diag = match e {
        _ if has_stylesheet => Diagnostic::fatal(
            codes::STYLESHEET_PI,
            "The response includes stylesheet information and is not well-formed XML.",
        ),
        E::InvalidChar2(..) | E::InvalidChar(..) | E::InvalidName(..) | E::UnknownToken(..)
            if is_premature_quote(text, pos) =>
        {
            Diagnostic::fatal(
                codes::UNESCAPED_QUOTE,
                "An attribute value contains an unescaped double quote, so the attribute ends early.",
            )
        }
        E::UnknownEntityReference(name, _) => Diagnostic::fatal(
            codes::UNESCAPED_AMPERSAND,
            format!("The entity '&{name};' is not defined in XML."),
        ),
        E::MalformedEntityReference(_) => Diagnostic::fatal(
            codes::UNESCAPED_AMPERSAND,
            "A '&' is not followed by a valid entity or character reference.",
        ),
        E::InvalidAttributeValue(_) | E::InvalidChar(b'\'', b'<', _) | E::InvalidChar(b'"', b'<', _) => {
            Diagnostic::fatal(codes::UNESCAPED_LT, "An attribute value contains a raw '<'.")
        }
        E::UnexpectedCloseTag(expected, actual, _) => Diagnostic::fatal(
            codes::MISMATCHED_TAG,
            format!("Found closing tag </{actual}> while <{expected}> is still open."),
        ),
        E::UnclosedRootNode | E::UnexpectedEndOfStream => Diagnostic::fatal(
            codes::TRUNCATED,
            "The document ends before the root element is closed.",
        ),
        E::NoRootNode => Diagnostic::fatal(codes::NOT_XML, "The body contains no XML element."),
        E::UnexpectedDeclaration(_) => Diagnostic::fatal(
            codes::MISPLACED_DECLARATION,
            "The XML declaration is not at the very start of the body.",
        ),
        E::NonXmlChar(c, _) => Diagnostic::fatal(
            codes::INVALID_CHARACTER,
            format!("The character U+{:04X} is not allowed in XML.", *c as u32),
        ),
        E::DtdDetected => Diagnostic::fatal(codes::DTD_NOT_ALLOWED, "The response contains a DOCTYPE declaration."),
        E::DuplicatedAttribute(name, _) => Diagnostic::fatal(
            codes::DUPLICATE_ATTRIBUTE,
            format!("The attribute '{name}' appears twice on one element."),
        ),
        _ => Diagnostic::fatal(codes::MALFORMED_XML, "The response is not well-formed XML."),
    };
    let diag = diag.with_detail(raw);
    match e {
        E::NoRootNode
        | E::UnclosedRootNode
        | E::DtdDetected
        | E::UnexpectedEndOfStream
        | E::NodesLimitReached
        | E::AttributesLimitReached
        | E::NamespacesLimitReached => diag,
        _ => diag.at(pos.row, pos.col),
    }
}

const ENVELOPE_ORDER: [&str; 2] = ["responseDate", "request"];

fn check_envelope(
    root: roxmltree::Node<'_, '_>,
    expected_verb: Verb,
    diags: &mut Vec<Diagnostic>,
) -> Option<(UtcDatestamp, RequestEcho, Payload)> {
    let root = XmlElement::from_node(root);
    if root.name != "OAI-PMH" {
        diags.push(
            Diagnostic::error(
                codes::WRONG_ROOT,
                format!("The root element is <{}>, expected <OAI-PMH>.", root.name),
            )
            .at_opt(Some(root.location))
            .with_hint("Every OAI-PMH response must have <OAI-PMH> as its root element."),
        );
        return None;
    }
    if !root.in_oai_namespace() {
        diags.push(
            Diagnostic::error(
                codes::BAD_NAMESPACE,
                match &root.namespace {
                    Some(ns) => format!("<OAI-PMH> is in namespace {ns}, not {OAI_NAMESPACE}."),
                    None => format!("<OAI-PMH> has no namespace; expected {OAI_NAMESPACE}."),
                },
            )
            .at_opt(Some(root.location)),
        );
        return None;
    }
    if !root.trimmed_text().is_empty() {
        diags.push(
            Diagnostic::error(
                codes::UNEXPECTED_TEXT,
                "Stray text appears directly inside <OAI-PMH>.",
            )
            .at_opt(Some(root.location)),
        );
    }
    for child in &root.children {
        if !child.in_oai_namespace() {
            diags.push(
                Diagnostic::error(
                    codes::BAD_NAMESPACE,
                    format!("<{}> is not in the OAI-PMH namespace.", child.name),
                )
                .at_opt(Some(child.location)),
            );
        }
    }

    let mut children = root.children.into_iter().peekable();
    let mut header: [Option<XmlElement>; 2] = [None, None];
    for (slot, name) in ENVELOPE_ORDER.iter().enumerate() {
        if children.peek().is_some_and(|c| c.name == *name) {
            header[slot] = children.next();
        }
    }
    let rest: Vec<XmlElement> = children.collect();
    for (slot, name) in ENVELOPE_ORDER.iter().enumerate() {
        let stray: Vec<&XmlElement> = rest.iter().filter(|el| el.name == *name).collect();
        match (&header[slot], stray.first()) {
            (Some(_), Some(el)) => diags.push(
                Diagnostic::error(
                    codes::DUPLICATE_ELEMENT,
                    format!("<{name}> appears more than once."),
                )
                .at_opt(Some(el.location)),
            ),
            (None, Some(el)) => diags.push(
                Diagnostic::error(
                    codes::ELEMENT_OUT_OF_ORDER,
                    format!(
                        "<{name}> must come {} in <OAI-PMH>.",
                        if slot == 0 {
                            "first"
                        } else {
                            "second, right after <responseDate>"
                        }
                    ),
                )
                .at_opt(Some(el.location)),
            ),
            (None, None) => diags.push(
                Diagnostic::error(
                    codes::MISSING_ELEMENT,
                    format!("The envelope has no <{name}> element."),
                )
                .at_opt(Some(root.location)),
            ),
            (Some(_), None) => {}
        }
    }
    let [date_el, request_el] = header;

    let response_date = date_el.and_then(|el| match parse_datestamp(el.trimmed_text()) {
        Ok(d) if d.granularity() == Granularity::Second => Some(d),
        Ok(_) => {
            diags.push(
                Diagnostic::error(
                    codes::BAD_DATESTAMP,
                    "<responseDate> must be given to the second (YYYY-MM-DDThh:mm:ssZ).",
                )
                .at_opt(Some(el.location)),
            );
            None
        }
        Err(e) => {
            diags.push(
                Diagnostic::error(
                    codes::BAD_DATESTAMP,
                    format!("<responseDate> is malformed: {e}."),
                )
                .at_opt(Some(el.location)),
            );
            None
        }
    });

    let request_echo = request_el.map(|el| RequestEcho {
        attributes: el.attributes.iter().cloned().collect(),
        text: el.trimmed_text().to_string(),
    });

    let payload_elements: Vec<XmlElement> = rest
        .into_iter()
        .filter(|el| !ENVELOPE_ORDER.contains(&el.name.as_str()))
        .collect();
    let payload = classify_payload(payload_elements, expected_verb, diags);

    if let (Some(echo), Some(Payload::Verb(_))) = (&request_echo, &payload) {
        match echo.attributes.get("verb") {
            Some(v) if v == expected_verb.as_str() => {}
            other => diags.push(Diagnostic::warning(
                codes::REQUEST_ECHO,
                format!(
                    "The <request> element echoes verb {:?}, expected {:?}.",
                    other.map(String::as_str).unwrap_or(""),
                    expected_verb.as_str()
                ),
            )),
        }
    }

    Some((response_date?, request_echo?, payload?))
}

fn classify_payload(
    elements: Vec<XmlElement>,
    expected_verb: Verb,
    diags: &mut Vec<Diagnostic>,
) -> Option<Payload> {
    if elements.is_empty() {
        diags.push(Diagnostic::error(
            codes::MISSING_ELEMENT,
            format!(
                "The response has neither a <{expected_verb}> element nor any <error> element."
            ),
        ));
        return None;
    }
    if elements.iter().all(|e| e.name == "error") {
        let mut errors = Vec::new();
        for el in elements {
            let Some(raw_code) = el.attribute("code").map(str::to_string) else {
                diags.push(
                    Diagnostic::error(
                        codes::MISSING_ATTRIBUTE,
                        "An <error> element has no code attribute.",
                    )
                    .at_opt(Some(el.location)),
                );
                continue;
            };
            errors.push(OaiError {
                code: OaiErrorCode::from_code(&raw_code),
                raw_code,
                message: el.trimmed_text().to_string(),
            });
        }
        return Some(Payload::Errors(errors));
    }
    let mut iter = elements.into_iter();
    let first = iter.next()?;
    for extra in iter {
        diags.push(
            Diagnostic::error(
                codes::UNEXPECTED_ELEMENT,
                format!(
                    "Unexpected <{}> after the <{}> payload.",
                    extra.name, first.name
                ),
            )
            .at_opt(Some(extra.location)),
        );
    }
    if first.name == "error" {
        diags.push(
            Diagnostic::error(
                codes::UNEXPECTED_ELEMENT,
                "<error> elements are mixed with a verb payload.",
            )
            .at_opt(Some(first.location)),
        );
        return None;
    }
    if first.name != expected_verb.as_str() {
        diags.push(
            Diagnostic::error(
                codes::WRONG_VERB_PAYLOAD,
                format!(
                    "The payload is <{}>, expected <{expected_verb}>.",
                    first.name
                ),
            )
            .at_opt(Some(first.location)),
        );
        return None;
    }
    Some(Payload::Verb(first))
}

#[cfg(test)]
mod tests;
