//! A configurable OAI-PMH repository used as a test oracle for the engine.

mod content;
mod fault;
mod handler;
mod server;

use std::fs::File;
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use content::{ContentError, RepoContent, SimRecord};
pub use fault::{Fault, FaultParseError, FaultProfile, CONFLICTS};
pub use handler::{
    escape, handle, Reply, SimRequest, SimResponse, BOGUS_ERROR_CODE, STYLESHEET_PI,
    XML_CONTENT_TYPE,
};
pub use server::{serve, SimServer};

use crate::model::{BaseUrl, UtcDatestamp};
use crate::transport::{
    build_request_url, retry_loop, HttpExchange, RawResponse, RetryPolicy, Transport,
    TransportError,
};

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestLogEntry {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub query: String,
    /// `None` when the request was never answered.
    pub status: Option<u16>,
}

/// A repository instance: fault profile, content and per-lifetime state.
pub struct Simulator {
    profile: FaultProfile,
    content: RepoContent,
    clock: Clock,
    counter: AtomicU64,
    log: Mutex<Vec<RequestLogEntry>>,
    sink: Option<Mutex<File>>,
}

impl Simulator {
    pub fn new(profile: FaultProfile, content: RepoContent) -> Result<Self, ContentError> {
        content.validate()?;
        Ok(Self {
            profile,
            content,
            clock: Arc::new(Utc::now),
            counter: AtomicU64::new(0),
            log: Mutex::new(Vec::new()),
            sink: None,
        })
    }

    pub fn with_profile(profile: FaultProfile) -> Self {
        Self::new(profile, RepoContent::default()).expect("default content is valid")
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Also append each request log entry as a JSON line to `path`.
    pub fn with_log_file(mut self, path: &Path) -> std::io::Result<Self> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?;
        self.sink = Some(Mutex::new(file));
        Ok(self)
    }

    pub fn profile(&self) -> &FaultProfile {
        &self.profile
    }

    pub fn content(&self) -> &RepoContent {
        &self.content
    }

    /// Answer one request. `base_url` is what the repository reports as its
    /// own address; `query` is the raw query string.
    pub fn respond(&self, base_url: &str, query: &str) -> Reply {
        let seq = self.counter.fetch_add(1, Ordering::SeqCst);
        let at = (self.clock)();
        let p = &self.profile;
        let reply = match p.n_503_then_ok {
            Some(n) if !p.no_response && p.infinite_503.is_none() && seq < u64::from(n) => {
                Reply::Respond(handler::service_unavailable(1))
            }
            _ => handle(
                &SimRequest::from_query(base_url, query),
                p,
                &self.content,
                UtcDatestamp::second(at),
            ),
        };
        let entry = RequestLogEntry {
            seq,
            at,
            query: query.to_string(),
            status: reply.response().map(|r| r.status),
        };
        if let Some(sink) = &self.sink {
            if let (Ok(mut f), Ok(line)) = (sink.lock(), serde_json::to_string(&entry)) {
                let _ = writeln!(f, "{line}");
            }
        }
        self.log.lock().expect("log lock").push(entry);
        reply
    }

    pub fn request_log(&self) -> Vec<RequestLogEntry> {
        self.log.lock().expect("log lock").clone()
    }

    pub fn request_count(&self) -> u64 {
        self.counter.load(Ordering::SeqCst)
    }
}

/// Calls the simulator directly, without sockets. Retry-After waits are
/// accounted but not slept; a stalled request fails at once as a timeout.
pub struct InProcessTransport {
    simulator: Arc<Simulator>,
    policy: RetryPolicy,
}

impl InProcessTransport {
    pub fn new(simulator: Arc<Simulator>) -> Self {
        Self {
            simulator,
            policy: RetryPolicy::default(),
        }
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn simulator(&self) -> &Simulator {
        &self.simulator
    }
}

impl Transport for InProcessTransport {
    fn fetch(
        &mut self,
        base: &BaseUrl,
        verb: &str,
        args: &[(String, String)],
    ) -> Result<HttpExchange, TransportError> {
        let url = build_request_url(base, verb, args);
        let (base_part, query) = url.split_once('?').unwrap_or((&url, ""));
        let base_part = base_part.to_string();
        let query = query.to_string();
        let sim = Arc::clone(&self.simulator);
        retry_loop(
            &self.policy,
            &url,
            |_| match sim.respond(&base_part, &query) {
                Reply::Respond(r) => Ok(RawResponse {
                    status: r.status,
                    headers: r.headers,
                    body: r.body,
                    redirects: Vec::new(),
                }),
                Reply::Stall => Err("timed out waiting for a response".to_string()),
            },
            |_| {},
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_base_url;

    #[test]
    fn n_503_counts_over_server_lifetime() {
        let sim = Arc::new(Simulator::with_profile(
            FaultProfile::clean().with(Fault::N503ThenOk(3)),
        ));
        let mut t = InProcessTransport::new(Arc::clone(&sim));
        let base = validate_base_url("http://sim.example.org/oai").unwrap();
        let x = t.fetch(&base, "Identify", &[]).unwrap();
        assert_eq!(x.status_code, 200);
        assert_eq!(x.retries_performed, 3);
        let x = t.fetch(&base, "Identify", &[]).unwrap();
        assert_eq!(x.retries_performed, 0);
        let log = sim.request_log();
        assert_eq!(log.len(), 5);
        assert_eq!(log.iter().filter(|e| e.status == Some(503)).count(), 3);
    }

    #[test]
    fn stall_is_no_response() {
        let sim = Arc::new(Simulator::with_profile(
            FaultProfile::clean().with(Fault::NoResponse),
        ));
        let mut t = InProcessTransport::new(Arc::clone(&sim));
        let base = validate_base_url("http://sim.example.org/oai").unwrap();
        assert!(matches!(
            t.fetch(&base, "Identify", &[]),
            Err(TransportError::NoResponse { .. })
        ));
        assert_eq!(sim.request_log()[0].status, None);
    }

    #[test]
    fn infinite_503_is_excessive() {
        let sim = Arc::new(Simulator::with_profile(
            FaultProfile::clean().with(Fault::Infinite503(2)),
        ));
        let mut t = InProcessTransport::new(Arc::clone(&sim));
        let base = validate_base_url("http://sim.example.org/oai").unwrap();
        match t.fetch(&base, "Identify", &[]) {
            Err(TransportError::ExcessiveRetryAfter { limit: 5, waits }) => {
                assert_eq!(waits.len(), 5)
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(sim.request_count(), 6);
    }

    #[test]
    fn log_file_gets_json_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("requests.jsonl");
        let sim = Simulator::with_profile(FaultProfile::clean())
            .with_log_file(&path)
            .unwrap();
        sim.respond("http://x/oai", "verb=Identify");
        sim.respond("http://x/oai", "verb=Nope");
        let text = std::fs::read_to_string(&path).unwrap();
        let entries: Vec<RequestLogEntry> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[1].query, "verb=Nope");
    }
}
