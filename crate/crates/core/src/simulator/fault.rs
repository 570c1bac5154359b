use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One misbehaviour the simulator can inject.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Fault {
    /// Accept the connection and never answer.
    NoResponse,
    /// Every request gets 503 with this Retry-After (seconds).
    Infinite503(u64),
    /// The first `n` requests of the server's lifetime get 503, Retry-After: 1.
    N503ThenOk(u32),
    MalformedIdentifyXml,
    ProtocolVersionOverride(String),
    BadAdminEmail,
    MissingIdentifyElement(String),
    EmptyRepository,
    StripDatestamps,
    EmptyWindow,
    SpuriousEmptyResumptionToken,
    UnescapedInvalidIdEcho,
    IgnoreBadArgs,
    GranularityMismatch,
    Http500HtmlBody,
    StylesheetPiInvalidBody,
    UnknownErrorCode,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FaultParseError {
    #[error("unknown fault {0:?}")]
    Unknown(String),
    #[error("fault {0} needs a value ({0}=...)")]
    MissingValue(&'static str),
    #[error("fault {name} takes no value")]
    UnexpectedValue { name: &'static str },
    #[error("bad value {value:?} for fault {name}")]
    BadValue { name: &'static str, value: String },
}

impl Fault {
    pub const NAMES: [&'static str; 17] = [
        "no_response",
        "infinite_503",
        "n_503_then_ok",
        "malformed_identify_xml",
        "protocol_version_override",
        "bad_admin_email",
        "missing_identify_element",
        "empty_repository",
        "strip_datestamps",
        "empty_window",
        "spurious_empty_resumption_token",
        "unescaped_invalid_id_echo",
        "ignore_bad_args",
        "granularity_mismatch",
        "http_500_html_body",
        "stylesheet_pi_invalid_body",
        "unknown_error_code",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Fault::NoResponse => "no_response",
            Fault::Infinite503(_) => "infinite_503",
            Fault::N503ThenOk(_) => "n_503_then_ok",
            Fault::MalformedIdentifyXml => "malformed_identify_xml",
            Fault::ProtocolVersionOverride(_) => "protocol_version_override",
            Fault::BadAdminEmail => "bad_admin_email",
            Fault::MissingIdentifyElement(_) => "missing_identify_element",
            Fault::EmptyRepository => "empty_repository",
            Fault::StripDatestamps => "strip_datestamps",
            Fault::EmptyWindow => "empty_window",
            Fault::SpuriousEmptyResumptionToken => "spurious_empty_resumption_token",
            Fault::UnescapedInvalidIdEcho => "unescaped_invalid_id_echo",
            Fault::IgnoreBadArgs => "ignore_bad_args",
            Fault::GranularityMismatch => "granularity_mismatch",
            Fault::Http500HtmlBody => "http_500_html_body",
            Fault::StylesheetPiInvalidBody => "stylesheet_pi_invalid_body",
            Fault::UnknownErrorCode => "unknown_error_code",
        }
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fault::Infinite503(s) => write!(f, "infinite_503={s}"),
            Fault::N503ThenOk(n) => write!(f, "n_503_then_ok={n}"),
            Fault::ProtocolVersionOverride(v) => write!(f, "protocol_version_override={v}"),
            Fault::MissingIdentifyElement(e) => write!(f, "missing_identify_element={e}"),
            other => f.write_str(other.name()),
        }
    }
}

/// `name` or `name=value`, as used on the command line and in the
/// conformance matrix.
impl FromStr for Fault {
    type Err = FaultParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, value) = match s.split_once('=') {
            Some((n, v)) => (n.trim(), Some(v.trim())),
            None => (s.trim(), None),
        };
        let canonical = Fault::NAMES
            .iter()
            .copied()
            .find(|n| *n == name)
            .ok_or_else(|| FaultParseError::Unknown(name.to_string()))?;
        let need = || {
            value
                .filter(|v| !v.is_empty())
                .ok_or(FaultParseError::MissingValue(canonical))
        };
        let number = |v: &str| {
            v.parse::<u64>().map_err(|_| FaultParseError::BadValue {
                name: canonical,
                value: v.to_string(),
            })
        };
        let fault = match canonical {
            "infinite_503" => Fault::Infinite503(value.map(number).transpose()?.unwrap_or(1)),
            "n_503_then_ok" => {
                let n = number(need()?)?;
                Fault::N503ThenOk(u32::try_from(n).map_err(|_| FaultParseError::BadValue {
                    name: canonical,
                    value: n.to_string(),
                })?)
            }
            "protocol_version_override" => Fault::ProtocolVersionOverride(need()?.to_string()),
            "missing_identify_element" => Fault::MissingIdentifyElement(need()?.to_string()),
            flag => {
                if value.is_some() {
                    return Err(FaultParseError::UnexpectedValue { name: canonical });
                }
                match flag {
                    "no_response" => Fault::NoResponse,
                    "malformed_identify_xml" => Fault::MalformedIdentifyXml,
                    "bad_admin_email" => Fault::BadAdminEmail,
                    "empty_repository" => Fault::EmptyRepository,
                    "strip_datestamps" => Fault::StripDatestamps,
                    "empty_window" => Fault::EmptyWindow,
                    "spurious_empty_resumption_token" => Fault::SpuriousEmptyResumptionToken,
                    "unescaped_invalid_id_echo" => Fault::UnescapedInvalidIdEcho,
                    "ignore_bad_args" => Fault::IgnoreBadArgs,
                    "granularity_mismatch" => Fault::GranularityMismatch,
                    "http_500_html_body" => Fault::Http500HtmlBody,
                    "stylesheet_pi_invalid_body" => Fault::StylesheetPiInvalidBody,
                    _ => Fault::UnknownErrorCode,
                }
            }
        };
        Ok(fault)
    }
}

/// The set of faults a simulated repository exhibits. The default profile is
/// a fully compliant repository.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultProfile {
    pub no_response: bool,
    pub infinite_503: Option<u64>,
    pub n_503_then_ok: Option<u32>,
    pub malformed_identify_xml: bool,
    pub protocol_version_override: Option<String>,
    pub bad_admin_email: bool,
    pub missing_identify_element: Option<String>,
    pub empty_repository: bool,
    pub strip_datestamps: bool,
    pub empty_window: bool,
    pub spurious_empty_resumption_token: bool,
    pub unescaped_invalid_id_echo: bool,
    pub ignore_bad_args: bool,
    pub granularity_mismatch: bool,
    pub http_500_html_body: bool,
    pub stylesheet_pi_invalid_body: bool,
    pub unknown_error_code: bool,
}

/// Which faults mask which. A fault on the left makes the faults on the right
/// unobservable; every other pair is independent.
pub const CONFLICTS: &[(&str, &[&str])] = &[
    ("no_response", &["*"]),
    ("infinite_503", &["* except no_response"]),
    (
        "http_500_html_body",
        &["* except no_response, infinite_503, n_503_then_ok"],
    ),
    (
        "empty_repository",
        &[
            "strip_datestamps",
            "empty_window",
            "spurious_empty_resumption_token",
        ],
    ),
];

impl FaultProfile {
    pub fn clean() -> Self {
        Self::default()
    }

    pub fn from_faults<I: IntoIterator<Item = Fault>>(faults: I) -> Self {
        faults.into_iter().fold(Self::default(), Self::with)
    }

    pub fn with(mut self, fault: Fault) -> Self {
        match fault {
            Fault::NoResponse => self.no_response = true,
            Fault::Infinite503(s) => self.infinite_503 = Some(s),
            Fault::N503ThenOk(n) => self.n_503_then_ok = Some(n),
            Fault::MalformedIdentifyXml => self.malformed_identify_xml = true,
            Fault::ProtocolVersionOverride(v) => self.protocol_version_override = Some(v),
            Fault::BadAdminEmail => self.bad_admin_email = true,
            Fault::MissingIdentifyElement(e) => self.missing_identify_element = Some(e),
            Fault::EmptyRepository => self.empty_repository = true,
            Fault::StripDatestamps => self.strip_datestamps = true,
            Fault::EmptyWindow => self.empty_window = true,
            Fault::SpuriousEmptyResumptionToken => self.spurious_empty_resumption_token = true,
            Fault::UnescapedInvalidIdEcho => self.unescaped_invalid_id_echo = true,
            Fault::IgnoreBadArgs => self.ignore_bad_args = true,
            Fault::GranularityMismatch => self.granularity_mismatch = true,
            Fault::Http500HtmlBody => self.http_500_html_body = true,
            Fault::StylesheetPiInvalidBody => self.stylesheet_pi_invalid_body = true,
            Fault::UnknownErrorCode => self.unknown_error_code = true,
        }
        self
    }

    /// Active faults in canonical order.
    pub fn faults(&self) -> Vec<Fault> {
        let mut out = Vec::new();
        let mut push = |on: bool, f: Fault| {
            if on {
                out.push(f)
            }
        };
        push(self.no_response, Fault::NoResponse);
        if let Some(s) = self.infinite_503 {
            push(true, Fault::Infinite503(s));
        }
        if let Some(n) = self.n_503_then_ok {
            push(true, Fault::N503ThenOk(n));
        }
        push(self.malformed_identify_xml, Fault::MalformedIdentifyXml);
        if let Some(v) = &self.protocol_version_override {
            push(true, Fault::ProtocolVersionOverride(v.clone()));
        }
        push(self.bad_admin_email, Fault::BadAdminEmail);
        if let Some(e) = &self.missing_identify_element {
            push(true, Fault::MissingIdentifyElement(e.clone()));
        }
        push(self.empty_repository, Fault::EmptyRepository);
        push(self.strip_datestamps, Fault::StripDatestamps);
        push(self.empty_window, Fault::EmptyWindow);
        push(
            self.spurious_empty_resumption_token,
            Fault::SpuriousEmptyResumptionToken,
        );
        push(
            self.unescaped_invalid_id_echo,
            Fault::UnescapedInvalidIdEcho,
        );
        push(self.ignore_bad_args, Fault::IgnoreBadArgs);
        push(self.granularity_mismatch, Fault::GranularityMismatch);
        push(self.http_500_html_body, Fault::Http500HtmlBody);
        push(
            self.stylesheet_pi_invalid_body,
            Fault::StylesheetPiInvalidBody,
        );
        push(self.unknown_error_code, Fault::UnknownErrorCode);
        out
    }

    pub fn is_clean(&self) -> bool {
        self.faults().is_empty()
    }

    /// Active faults that have no observable effect because another active
    /// fault masks them (see [`CONFLICTS`]).
    pub fn shadowed(&self) -> Vec<Fault> {
        let faults = self.faults();
        faults
            .iter()
            .filter(|f| {
                let name = f.name();
                if self.no_response {
                    return name != "no_response";
                }
                if self.infinite_503.is_some() {
                    return name != "infinite_503";
                }
                if self.http_500_html_body {
                    return !matches!(name, "http_500_html_body" | "n_503_then_ok");
                }
                self.empty_repository
                    && matches!(
                        name,
                        "strip_datestamps" | "empty_window" | "spurious_empty_resumption_token"
                    )
            })
            .cloned()
            .collect()
    }
}

impl fmt::Display for FaultProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let faults = self.faults();
        if faults.is_empty() {
            return f.write_str("clean");
        }
        let names: Vec<String> = faults.iter().map(Fault::to_string).collect();
        f.write_str(&names.join(" "))
    }
}
