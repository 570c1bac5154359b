//! OAI-PMH 2.0 vocabulary shared by the validator, the simulator and the registry.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Namespace of the OAI-PMH envelope and every verb payload.
pub const OAI_NAMESPACE: &str = "http://www.openarchives.org/OAI/2.0/";
/// Namespace of the `oai_dc` metadata container.
pub const OAI_DC_NAMESPACE: &str = "http://www.openarchives.org/OAI/2.0/oai_dc/";
pub const OAI_DC_PREFIX: &str = "oai_dc";
pub const OAI_DC_SCHEMA: &str = "http://www.openarchives.org/OAI/2.0/oai_dc.xsd";
pub const PROTOCOL_VERSION: &str = "2.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verb {
    Identify,
    ListMetadataFormats,
    ListSets,
    ListIdentifiers,
    ListRecords,
    GetRecord,
}

impl Verb {
    pub const ALL: [Verb; 6] = [
        Verb::Identify,
        Verb::ListMetadataFormats,
        Verb::ListSets,
        Verb::ListIdentifiers,
        Verb::ListRecords,
        Verb::GetRecord,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Verb::Identify => "Identify",
            Verb::ListMetadataFormats => "ListMetadataFormats",
            Verb::ListSets => "ListSets",
            Verb::ListIdentifiers => "ListIdentifiers",
            Verb::ListRecords => "ListRecords",
            Verb::GetRecord => "GetRecord",
        }
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("illegal OAI-PMH verb {0:?}")]
pub struct IllegalVerb(pub String);

impl FromStr for Verb {
    type Err = IllegalVerb;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Verb::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| IllegalVerb(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OaiErrorCode {
    BadArgument,
    BadResumptionToken,
    BadVerb,
    CannotDisseminateFormat,
    IdDoesNotExist,
    NoRecordsMatch,
    NoMetadataFormats,
    NoSetHierarchy,
}

impl OaiErrorCode {
    pub const ALL: [OaiErrorCode; 8] = [
        OaiErrorCode::BadArgument,
        OaiErrorCode::BadResumptionToken,
        OaiErrorCode::BadVerb,
        OaiErrorCode::CannotDisseminateFormat,
        OaiErrorCode::IdDoesNotExist,
        OaiErrorCode::NoRecordsMatch,
        OaiErrorCode::NoMetadataFormats,
        OaiErrorCode::NoSetHierarchy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OaiErrorCode::BadArgument => "badArgument",
            OaiErrorCode::BadResumptionToken => "badResumptionToken",
            OaiErrorCode::BadVerb => "badVerb",
            OaiErrorCode::CannotDisseminateFormat => "cannotDisseminateFormat",
            OaiErrorCode::IdDoesNotExist => "idDoesNotExist",
            OaiErrorCode::NoRecordsMatch => "noRecordsMatch",
            OaiErrorCode::NoMetadataFormats => "noMetadataFormats",
            OaiErrorCode::NoSetHierarchy => "noSetHierarchy",
        }
    }

    /// Looks up a code string as it appears in an `error` element.
    pub fn from_code(code: &str) -> Option<Self> {
        OaiErrorCode::ALL.into_iter().find(|c| c.as_str() == code)
    }
}

impl fmt::Display for OaiErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for OaiErrorCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for OaiErrorCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        OaiErrorCode::from_code(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown OAI-PMH error code {s:?}")))
    }
}

/// Why a submitted baseURL was rejected before any request was made.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntakeError {
    #[error("No base URL")]
    NoBaseUrl,
    #[error("Nonsense base URL: {0}")]
    NonsenseBaseUrl(String),
}

/// An absolute http(s) URL that passed intake.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BaseUrl(String);

impl BaseUrl {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BaseUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for BaseUrl {
    type Err = IntakeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        validate_base_url(s)
    }
}

impl Serialize for BaseUrl {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for BaseUrl {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        validate_base_url(&s).map_err(serde::de::Error::custom)
    }
}

/// Intake triage of a submitted baseURL. Purely syntactic; never touches the network.
pub fn validate_base_url(text: &str) -> Result<BaseUrl, IntakeError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(IntakeError::NoBaseUrl);
    }
    if text.chars().any(char::is_whitespace) {
        return Err(IntakeError::NonsenseBaseUrl("contains whitespace".into()));
    }
    let url = url::Url::parse(text)
        .map_err(|e| IntakeError::NonsenseBaseUrl(format!("not an absolute URL ({e})")))?;
    match url.scheme() {
        "http" | "https" => {}
        other => {
            return Err(IntakeError::NonsenseBaseUrl(format!(
                "scheme {other:?} is not http or https"
            )))
        }
    }
    if url.host_str().is_none_or(str::is_empty) {
        return Err(IntakeError::NonsenseBaseUrl("missing host".into()));
    }
    if url.fragment().is_some() {
        return Err(IntakeError::NonsenseBaseUrl("contains a fragment".into()));
    }
    Ok(BaseUrl(text.to_string()))
}

const ATEXT_SPECIALS: &str = "!#$%&'*+-/=?^_`{|}~";

/// Minimal mailbox check for `adminEmail`: one `@`, a dot-atom local part and a
/// dotted hostname. URI schemes, display names and whitespace all fail.
pub fn validate_admin_email(text: &str) -> bool {
    let mut parts = text.split('@');
    let (Some(local), Some(domain), None) = (parts.next(), parts.next(), parts.next()) else {
        return false;
    };
    let local_ok = !local.is_empty()
        && local.split('.').all(|atom| {
            !atom.is_empty()
                && atom
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || ATEXT_SPECIALS.contains(c))
        });
    let labels: Vec<&str> = domain.split('.').collect();
    let domain_ok = labels.len() >= 2
        && labels.iter().all(|label| {
            !label.is_empty()
                && !label.starts_with('-')
                && !label.ends_with('-')
                && label.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
        });
    local_ok && domain_ok
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Granularity {
    /// `YYYY-MM-DD`
    Day,
    /// `YYYY-MM-DDThh:mm:ssZ`
    Second,
}

impl Granularity {
    /// The literal used in the Identify `granularity` element.
    pub fn pattern(self) -> &'static str {
        match self {
            Granularity::Day => "YYYY-MM-DD",
            Granularity::Second => "YYYY-MM-DDThh:mm:ssZ",
        }
    }

    pub fn from_pattern(text: &str) -> Option<Self> {
        match text {
            "YYYY-MM-DD" => Some(Granularity::Day),
            "YYYY-MM-DDThh:mm:ssZ" => Some(Granularity::Second),
            _ => None,
        }
    }

    pub fn text_len(self) -> usize {
        match self {
            Granularity::Day => 10,
            Granularity::Second => 20,
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.pattern())
    }
}

impl Serialize for Granularity {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.pattern())
    }
}

impl<'de> Deserialize<'de> for Granularity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Granularity::from_pattern(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown granularity {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed datestamp {text:?}: {reason}")]
pub struct MalformedDatestamp {
    pub text: String,
    pub reason: &'static str,
}

/// A UTC timestamp together with the granularity it was written at.
///
/// Ordering compares the instant first (Day values sit at midnight), then the
/// granularity, so it stays consistent with `Eq`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UtcDatestamp {
    value: DateTime<Utc>,
    granularity: Granularity,
}

impl UtcDatestamp {
    pub fn day(date: NaiveDate) -> Self {
        Self {
            value: Utc.from_utc_datetime(&date.and_time(NaiveTime::MIN)),
            granularity: Granularity::Day,
        }
    }

    /// Second-granularity stamp; sub-second precision is dropped.
    pub fn second(value: DateTime<Utc>) -> Self {
        let trimmed = Utc
            .timestamp_opt(value.timestamp(), 0)
            .single()
            .unwrap_or(value);
        Self {
            value: trimmed,
            granularity: Granularity::Second,
        }
    }

    pub fn value(&self) -> DateTime<Utc> {
        self.value
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    /// Re-expresses the stamp at `granularity`, truncating to the day or
    /// widening a day to midnight.
    pub fn at_granularity(&self, granularity: Granularity) -> Self {
        match granularity {
            Granularity::Day => Self::day(self.value.date_naive()),
            Granularity::Second => Self {
                value: self.value,
                granularity,
            },
        }
    }

    pub fn render(&self) -> String {
        match self.granularity {
            Granularity::Day => self.value.format("%Y-%m-%d").to_string(),
            Granularity::Second => self.value.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        }
    }
}

impl PartialOrd for UtcDatestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for UtcDatestamp {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .cmp(&other.value)
            .then(self.granularity.cmp(&other.granularity))
    }
}

impl fmt::Display for UtcDatestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl FromStr for UtcDatestamp {
    type Err = MalformedDatestamp;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_datestamp(s)
    }
}

impl Serialize for UtcDatestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for UtcDatestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_datestamp(&s).map_err(serde::de::Error::custom)
    }
}

fn digits(bytes: &[u8]) -> Option<u32> {
    if bytes.is_empty() || !bytes.iter().all(u8::is_ascii_digit) {
        return None;
    }
    Some(
        bytes
            .iter()
            .fold(0, |acc, b| acc * 10 + u32::from(b - b'0')),
    )
}

/// Parses either `YYYY-MM-DD` or `YYYY-MM-DDThh:mm:ssZ`, nothing looser.
pub fn parse_datestamp(text: &str) -> Result<UtcDatestamp, MalformedDatestamp> {
    let err = |reason| MalformedDatestamp {
        text: text.to_string(),
        reason,
    };
    let b = text.as_bytes();
    if b.len() != 10 && b.len() != 20 {
        return Err(err("length is neither 10 (day) nor 20 (second)"));
    }
    if b[4] != b'-' || b[7] != b'-' {
        return Err(err("date part must be YYYY-MM-DD"));
    }
    let (Some(year), Some(month), Some(day)) =
        (digits(&b[0..4]), digits(&b[5..7]), digits(&b[8..10]))
    else {
        return Err(err("date part must be YYYY-MM-DD"));
    };
    let date = NaiveDate::from_ymd_opt(year as i32, month, day)
        .ok_or_else(|| err("no such calendar date"))?;
    if b.len() == 10 {
        return Ok(UtcDatestamp::day(date));
    }
    if b[10] != b'T' {
        return Err(err("date and time must be separated by 'T'"));
    }
    if b[19] != b'Z' {
        return Err(err("time must end with 'Z'"));
    }
    if b[13] != b':' || b[16] != b':' {
        return Err(err("time part must be hh:mm:ss"));
    }
    let (Some(h), Some(m), Some(s)) = (digits(&b[11..13]), digits(&b[14..16]), digits(&b[17..19]))
    else {
        return Err(err("time part must be hh:mm:ss"));
    };
    let time = NaiveTime::from_hms_opt(h, m, s).ok_or_else(|| err("no such time of day"))?;
    Ok(UtcDatestamp::second(
        Utc.from_utc_datetime(&NaiveDateTime::new(date, time)),
    ))
}

/// The Identify response, as extracted from a structurally valid payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentifyInfo {
    pub repository_name: String,
    pub base_url: BaseUrl,
    pub protocol_version: String,
    pub earliest_datestamp: UtcDatestamp,
    pub deleted_record: String,
    pub granularity: Granularity,
    pub admin_emails: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub identifier: String,
    /// Absent datestamps are a protocol violation but must be representable.
    pub datestamp: Option<UtcDatestamp>,
    pub set_specs: Vec<String>,
    pub deleted: bool,
}

/// An empty `token` is a legal value (it closes a multi-page list) and is
/// distinct from the element being absent, which is modelled as `Option::None`
/// by callers.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResumptionToken {
    pub token: String,
    pub complete_list_size: Option<u64>,
    pub cursor: Option<u64>,
}

impl ResumptionToken {
    pub fn is_empty(&self) -> bool {
        self.token.is_empty()
    }
}
