//! HTTP GET binding with the successive-503 `Retry-After` discipline.

use std::time::{Duration, Instant, SystemTime};

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use ureq::ResponseExt;

use crate::model::BaseUrl;

/// Everything except RFC 3986 unreserved characters gets escaped.
const QUERY_VALUE: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'.')
    .remove(b'_')
    .remove(b'~');

pub const MAX_REDIRECTS: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// How many successive 503 + Retry-After replies are tolerated.
    pub max_successive_retry_after: u32,
    pub max_single_wait: Duration,
    pub overall_deadline: Duration,
    pub request_timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_successive_retry_after: 5,
            max_single_wait: Duration::from_secs(60),
            overall_deadline: Duration::from_secs(600),
            request_timeout: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn validate(&self) -> Result<(), TransportError> {
        if self.max_successive_retry_after == 0 {
            return Err(TransportError::InvalidPolicy(
                "max_successive_retry_after must be at least 1".into(),
            ));
        }
        if self.request_timeout.is_zero() || self.overall_deadline.is_zero() {
            return Err(TransportError::InvalidPolicy(
                "timeouts must be non-zero".into(),
            ));
        }
        Ok(())
    }
}

/// One honoured `Retry-After` wait.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryWait {
    pub header_value: String,
    pub requested: Duration,
    pub waited: Duration,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpExchange {
    pub request_url: String,
    pub status_code: u16,
    pub headers: Vec<(String, String)>,
    #[serde(skip)]
    pub body: Vec<u8>,
    pub elapsed: Duration,
    pub retries_performed: u32,
    pub waits: Vec<RetryWait>,
    /// Redirect hops followed, in order, excluding the original URL.
    pub redirects: Vec<String>,
}

impl HttpExchange {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn content_type(&self) -> Option<&str> {
        self.header("content-type")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("more than {limit} successive 503 Retry-After replies")]
    ExcessiveRetryAfter { limit: u32, waits: Vec<RetryWait> },
    #[error("no response from {url}: {reason}")]
    NoResponse { url: String, reason: String },
    #[error("invalid retry policy: {0}")]
    InvalidPolicy(String),
}

/// Anything that can carry one OAI-PMH request to a repository.
pub trait Transport {
    fn fetch(
        &mut self,
        base: &BaseUrl,
        verb: &str,
        args: &[(String, String)],
    ) -> Result<HttpExchange, TransportError>;
}

pub fn encode_component(text: &str) -> String {
    utf8_percent_encode(text, QUERY_VALUE).to_string()
}

/// `base?verb=..&k=v..`, every key and value escaped. A base that already
/// carries a query string is extended with `&`.
pub fn build_request_url(base: &BaseUrl, verb: &str, args: &[(String, String)]) -> String {
    let base = base.as_str();
    let mut url = String::with_capacity(base.len() + 64);
    url.push_str(base);
    match base.find('?') {
        None => url.push('?'),
        Some(_) if base.ends_with('?') || base.ends_with('&') => {}
        Some(_) => url.push('&'),
    }
    url.push_str("verb=");
    url.push_str(&encode_component(verb));
    for (k, v) in args {
        url.push('&');
        url.push_str(&encode_component(k));
        url.push('=');
        url.push_str(&encode_component(v));
    }
    url
}

/// Delay requested by a `Retry-After` value: delta-seconds or an HTTP-date.
/// Anything unparseable counts as one second.
pub fn parse_retry_after(value: &str, now: SystemTime) -> Duration {
    let value = value.trim();
    if let Ok(secs) = value.parse::<u64>() {
        return Duration::from_secs(secs);
    }
    match httpdate::parse_http_date(value) {
        Ok(when) => when.duration_since(now).unwrap_or(Duration::ZERO),
        Err(_) => Duration::from_secs(1),
    }
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    policy: RetryPolicy,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(policy: RetryPolicy) -> Result<Self, TransportError> {
        policy.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .max_redirects(MAX_REDIRECTS)
            .save_redirect_history(true)
            .timeout_global(Some(policy.request_timeout))
            .user_agent(concat!("oaival/", env!("CARGO_PKG_VERSION")))
            .build()
            .into();
        Ok(Self { policy, agent })
    }

    pub fn policy(&self) -> &RetryPolicy {
        &self.policy
    }

    fn get_once(&self, url: &str, timeout: Duration) -> Result<RawResponse, String> {
        let mut response = self
            .agent
            .get(url)
            .config()
            .timeout_global(Some(timeout))
            .build()
            .call()
            .map_err(|e| e.to_string())?;
        let redirects = response
            .get_redirect_history()
            .map(|hops| hops.iter().skip(1).map(|u| u.to_string()).collect())
            .unwrap_or_default();
        let status = response.status().as_u16();
        let headers = response
            .headers()
            .iter()
            .map(|(k, v)| {
                (
                    k.as_str().to_string(),
                    String::from_utf8_lossy(v.as_bytes()).into_owned(),
                )
            })
            .collect();
        let body = response
            .body_mut()
            .with_config()
            .limit(64 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| format!("failed reading body: {e}"))?;
        Ok(RawResponse {
            status,
            headers,
            body,
            redirects,
        })
    }
}

impl Transport for HttpTransport {
    fn fetch(
        &mut self,
        base: &BaseUrl,
        verb: &str,
        args: &[(String, String)],
    ) -> Result<HttpExchange, TransportError> {
        let url = build_request_url(base, verb, args);
        let policy = self.policy.clone();
        retry_loop(
            &policy,
            &url,
            |timeout| self.get_once(&url, timeout),
            std::thread::sleep,
        )
    }
}

/// One HTTP response before retry bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
    pub redirects: Vec<String>,
}

/// The successive-503 discipline, independent of how a single request is
/// carried. `attempt` receives the time budget left for that request;
/// `sleep` is called for every honoured wait.
pub fn retry_loop<A, S>(
    policy: &RetryPolicy,
    url: &str,
    mut attempt: A,
    mut sleep: S,
) -> Result<HttpExchange, TransportError>
where
    A: FnMut(Duration) -> Result<RawResponse, String>,
    S: FnMut(Duration),
{
    policy.validate()?;
    let start = Instant::now();
    let mut waits: Vec<RetryWait> = Vec::new();
    let no_response = |reason: String| TransportError::NoResponse {
        url: url.to_string(),
        reason,
    };
    loop {
        let remaining = policy
            .overall_deadline
            .checked_sub(start.elapsed())
            .filter(|d| !d.is_zero())
            .ok_or_else(|| no_response("overall deadline exceeded".into()))?;
        let response = attempt(remaining.min(policy.request_timeout)).map_err(no_response)?;
        let retry_after = response
            .headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case("retry-after"))
            .map(|(_, v)| v.clone());
        match (response.status, retry_after) {
            (503, Some(value)) => {
                if waits.len() as u32 >= policy.max_successive_retry_after {
                    return Err(TransportError::ExcessiveRetryAfter {
                        limit: policy.max_successive_retry_after,
                        waits,
                    });
                }
                let requested = parse_retry_after(&value, SystemTime::now());
                let clamped = requested > policy.max_single_wait;
                let wait = requested.min(policy.max_single_wait);
                if start.elapsed() + wait >= policy.overall_deadline {
                    return Err(no_response(format!(
                        "Retry-After of {}s would pass the overall deadline",
                        wait.as_secs()
                    )));
                }
                sleep(wait);
                waits.push(RetryWait {
                    header_value: value,
                    requested,
                    waited: wait,
                    clamped,
                });
            }
            _ => {
                return Ok(HttpExchange {
                    request_url: url.to_string(),
                    status_code: response.status,
                    headers: response.headers,
                    body: response.body,
                    elapsed: start.elapsed(),
                    retries_performed: waits.len() as u32,
                    waits,
                    redirects: response.redirects,
                })
            }
        }
    }
}
