use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Fatal,
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Fatal => "fatal",
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Location {
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

/// A finding about a response body, phrased for a repository administrator
/// rather than for an XML specialist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub location: Option<Location>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hint: Option<String>,
    /// Raw parser output, when the finding came from the XML parser.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<String>,
}

impl Diagnostic {
    /// Builds a diagnostic; catalog codes pick up their remediation hint here.
    pub fn new(severity: Severity, code: &str, message: impl Into<String>) -> Self {
        Self {
            severity,
            code: code.to_string(),
            message: message.into(),
            location: None,
            hint: catalog_hint(code).map(str::to_string),
            detail: None,
        }
    }

    pub fn fatal(code: &str, message: impl Into<String>) -> Self {
        Self::new(Severity::Fatal, code, message)
    }

    pub fn error(code: &str, message: impl Into<String>) -> Self {
        Self::new(Severity::Error, code, message)
    }

    pub fn warning(code: &str, message: impl Into<String>) -> Self {
        Self::new(Severity::Warning, code, message)
    }

    pub fn at(mut self, line: u32, column: u32) -> Self {
        self.location = Some(Location { line, column });
        self
    }

    pub fn at_opt(mut self, location: Option<Location>) -> Self {
        self.location = location;
        self
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    pub fn with_hint(mut self, hint: impl Into<String>) -> Self {
        self.hint = Some(hint.into());
        self
    }

    pub fn is_blocking(&self) -> bool {
        self.severity != Severity::Warning
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.severity, self.code, self.message)?;
        if let Some(loc) = self.location {
            write!(f, " ({loc})")?;
        }
        Ok(())
    }
}

pub mod codes {
    pub const NOT_XML: &str = "not-xml";
    pub const HTML_ERROR_PAGE: &str = "html-error-page";
    pub const UNESCAPED_QUOTE: &str = "unescaped-quote";
    pub const BAD_NAMESPACE: &str = "bad-namespace";
    pub const MISSING_ELEMENT: &str = "missing-element";
    pub const ELEMENT_OUT_OF_ORDER: &str = "element-out-of-order";
    pub const STYLESHEET_PI: &str = "stylesheet-pi-plus-invalid-content";
    pub const ENCODING_MISMATCH: &str = "character-encoding-mismatch";
    pub const EMPTY_BODY: &str = "empty-body";
    pub const UNESCAPED_AMPERSAND: &str = "unescaped-ampersand";
    pub const UNESCAPED_LT: &str = "unescaped-less-than";
    pub const MISMATCHED_TAG: &str = "mismatched-tag";
    pub const TRUNCATED: &str = "truncated-document";
    pub const MISPLACED_DECLARATION: &str = "misplaced-xml-declaration";
    pub const INVALID_CHARACTER: &str = "invalid-character";
    pub const DTD_NOT_ALLOWED: &str = "dtd-not-allowed";
    pub const DUPLICATE_ATTRIBUTE: &str = "duplicate-attribute";
    pub const UNSUPPORTED_ENCODING: &str = "unsupported-encoding";
    pub const MALFORMED_XML: &str = "malformed-xml";
    pub const WRONG_ROOT: &str = "wrong-root-element";
    pub const DUPLICATE_ELEMENT: &str = "duplicate-element";
    pub const UNEXPECTED_ELEMENT: &str = "unexpected-element";
    pub const UNEXPECTED_TEXT: &str = "unexpected-text";
    pub const WRONG_VERB_PAYLOAD: &str = "wrong-verb-payload";
    pub const BAD_DATESTAMP: &str = "bad-datestamp";
    pub const BAD_VALUE: &str = "bad-value";
    pub const MISSING_ATTRIBUTE: &str = "missing-attribute";
    pub const REQUEST_ECHO: &str = "request-echo-mismatch";
    pub const ERROR_RESPONSE: &str = "error-response";
    // Raised by the validation engine rather than the body analyzer.
    pub const NO_RESPONSE: &str = "no-response";
    pub const EXCESSIVE_RETRY_AFTER: &str = "excessive-retry-after";
    pub const HTTP_STATUS: &str = "http-status";
    pub const BAD_PROTOCOL_VERSION: &str = "bad-protocol-version";
    pub const BAD_ADMIN_EMAIL: &str = "bad-admin-email";
    pub const NO_IDENTIFIERS: &str = "no-identifiers";
    pub const NO_SAMPLE_DATESTAMP: &str = "no-sample-datestamp";
    pub const UNEXPECTED_PAYLOAD: &str = "unexpected-payload";
    pub const UNEXPECTED_ERROR_CODE: &str = "unexpected-error-code";
}

/// Remediation advice for the errors administrators hit most often.
pub fn catalog_hint(code: &str) -> Option<&'static str> {
    use codes::*;
    Some(match code {
        NOT_XML => "The server did not return XML at all. This is usually a web server or \
            application error page (a crash, a misconfigured handler, or a proxy message) \
            served in place of the OAI-PMH response; check the server error logs for the request.",
        HTML_ERROR_PAGE => "An HTML page came back instead of an OAI-PMH document. Look at \
            the server error log and make sure the OAI-PMH script is mapped to the baseURL.",
        UNESCAPED_QUOTE => "An attribute value contains a raw double quote. Escape '\"' as \
            '&quot;' when writing attribute values; for the request element it is also \
            acceptable to omit attributes whose values are illegal.",
        BAD_NAMESPACE => "The root element must be OAI-PMH in the namespace \
            http://www.openarchives.org/OAI/2.0/ (declare xmlns=\"http://www.openarchives.org/OAI/2.0/\").",
        MISSING_ELEMENT => "A mandatory element is absent. Compare the response with the \
            element list required for this verb by the OAI-PMH 2.0 schema.",
        ELEMENT_OUT_OF_ORDER => "The OAI-PMH schema fixes the order of child elements; \
            emit them in the order the schema lists them.",
        STYLESHEET_PI => "The response carries stylesheet information (an xml-stylesheet \
            processing instruction) but is not well-formed XML around it. The XML declaration \
            must come first, before any stylesheet instruction, and the rest of the body must \
            be plain XML; consider dropping the stylesheet from machine-facing responses.",
        ENCODING_MISMATCH => "The bytes of the body do not match the character encoding \
            that was declared. OAI-PMH responses must be UTF-8; re-encode the output or fix \
            the encoding declaration and the Content-Type charset.",
        EMPTY_BODY => "The server returned an empty body. Check that the OAI-PMH handler \
            writes its output and does not exit early.",
        UNESCAPED_AMPERSAND => "A bare '&' appears in text or an attribute. Escape it as \
            '&amp;'; HTML entities such as &nbsp; are not defined in XML.",
        UNESCAPED_LT => "A '<' appears inside an attribute value. Escape it as '&lt;'.",
        MISMATCHED_TAG => "A closing tag does not match the element that is open. Check \
            the named element for a typo or a missing end tag.",
        TRUNCATED => "The document ends before all elements are closed. The response may \
            have been cut off by a script error or timeout part-way through.",
        MISPLACED_DECLARATION => "The <?xml ...?> declaration must be the very first thing \
            in the body. Remove any whitespace, byte-order junk or output printed before it.",
        INVALID_CHARACTER => "The body contains a character that XML forbids (often a \
            control character copied from a database). Strip or replace it.",
        DTD_NOT_ALLOWED => "OAI-PMH responses must not carry a DOCTYPE; remove it.",
        UNSUPPORTED_ENCODING => "Use UTF-8 for OAI-PMH responses.",
        MALFORMED_XML => "The body is not well-formed XML. The location points at where \
            the parser gave up; the mistake is usually at or just before it.",
        NO_RESPONSE => "Nothing came back before the timeout. Check that the baseURL is \
            reachable from outside your network and that the OAI-PMH script answers promptly.",
        EXCESSIVE_RETRY_AFTER => "The server kept answering 503 with Retry-After. Brief \
            flow control is fine, but a repository must eventually answer; more than five \
            successive deferrals end the validation.",
        HTTP_STATUS => "OAI-PMH responses, including protocol errors, are sent with HTTP \
            status 200.",
        BAD_PROTOCOL_VERSION => "Only OAI-PMH 2.0 is supported; <protocolVersion> must be \
            exactly 2.0. Repositories still reporting 1.1 must be upgraded.",
        BAD_ADMIN_EMAIL => "Every <adminEmail> must be a plain address such as \
            oai-admin@example.org, without a display name or mailto: prefix.",
        NO_IDENTIFIERS => "ListIdentifiers with metadataPrefix=oai_dc returned no headers. \
            An empty repository cannot be validated; every item must be available as oai_dc.",
        NO_SAMPLE_DATESTAMP => "Every record header must carry a <datestamp>; incremental \
            harvesting depends on it.",
        UNEXPECTED_PAYLOAD => "This request is illegal and must be answered with an \
            OAI-PMH error element, not a normal response.",
        UNEXPECTED_ERROR_CODE => "The error code does not fit the request. Compare it with \
            the codes the protocol prescribes for this kind of illegal request.",
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_entries_carry_hints() {
        for code in [
            codes::NOT_XML,
            codes::HTML_ERROR_PAGE,
            codes::UNESCAPED_QUOTE,
            codes::BAD_NAMESPACE,
            codes::MISSING_ELEMENT,
            codes::ELEMENT_OUT_OF_ORDER,
            codes::STYLESHEET_PI,
            codes::ENCODING_MISMATCH,
        ] {
            let d = Diagnostic::fatal(code, "x");
            assert!(d.hint.as_deref().is_some_and(|h| !h.is_empty()), "{code}");
        }
        assert!(Diagnostic::error("bad-value", "x").hint.is_none());
    }
}
