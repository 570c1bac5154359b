//! Serves a [`Simulator`] over real HTTP.

use std::io;
use std::net::{SocketAddr, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use tiny_http::{Header, Response, Server};

use super::{Reply, RequestLogEntry, Simulator};

const WORKERS: usize = 4;
const POLL: Duration = Duration::from_millis(50);

pub struct SimServer {
    addr: SocketAddr,
    simulator: Arc<Simulator>,
    stop: Arc<AtomicBool>,
    server: Arc<Server>,
    workers: Vec<JoinHandle<()>>,
    /// Requests that are never answered; dropping them closes the connection.
    parked: Arc<Mutex<Vec<tiny_http::Request>>>,
}

/// Bind `addr` (port 0 picks a free port) and answer on worker threads until
/// [`SimServer::stop`] or drop.
pub fn serve(addr: impl ToSocketAddrs, simulator: Simulator) -> io::Result<SimServer> {
    let server = Server::http(addr).map_err(|e| io::Error::other(e.to_string()))?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| io::Error::other("not an IP listener"))?;
    let server = Arc::new(server);
    let simulator = Arc::new(simulator);
    let stop = Arc::new(AtomicBool::new(false));
    let parked = Arc::new(Mutex::new(Vec::new()));
    let base_url = format!("http://{addr}/oai");
    let workers = (0..WORKERS)
        .map(|_| {
            let server = Arc::clone(&server);
            let simulator = Arc::clone(&simulator);
            let stop = Arc::clone(&stop);
            let parked = Arc::clone(&parked);
            let base_url = base_url.clone();
            std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    let request = match server.recv_timeout(POLL) {
                        Ok(Some(r)) => r,
                        Ok(None) => continue,
                        Err(_) => break,
                    };
                    let query = request
                        .url()
                        .split_once('?')
                        .map(|(_, q)| q.to_string())
                        .unwrap_or_default();
                    match simulator.respond(&base_url, &query) {
                        Reply::Stall => parked.lock().expect("parked lock").push(request),
                        Reply::Respond(r) => {
                            let mut response =
                                Response::from_data(r.body).with_status_code(r.status);
                            for (k, v) in r.headers {
                                if let Ok(h) = Header::from_bytes(k.as_bytes(), v.as_bytes()) {
                                    response.add_header(h);
                                }
                            }
                            let _ = request.respond(response);
                        }
                    }
                }
            })
        })
        .collect();
    Ok(SimServer {
        addr,
        simulator,
        stop,
        server,
        workers,
        parked,
    })
}

impl SimServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}/oai", self.addr)
    }

    pub fn simulator(&self) -> &Simulator {
        &self.simulator
    }

    pub fn request_log(&self) -> Vec<RequestLogEntry> {
        self.simulator.request_log()
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    /// Block until the process is killed.
    pub fn wait(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
        self.parked.lock().expect("parked lock").clear();
    }
}

impl Drop for SimServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_base_url;
    use crate::simulator::{Fault, FaultProfile};
    use crate::transport::{HttpTransport, RetryPolicy, Transport, TransportError};

    #[test]
    fn serves_identify_over_http() {
        let server = serve(
            "127.0.0.1:0",
            Simulator::with_profile(FaultProfile::clean()),
        )
        .unwrap();
        let base = validate_base_url(&server.base_url()).unwrap();
        let mut t = HttpTransport::new(RetryPolicy::default()).unwrap();
        let x = t.fetch(&base, "Identify", &[]).unwrap();
        assert_eq!(x.status_code, 200);
        let body = String::from_utf8(x.body).unwrap();
        assert!(body.contains(&format!("<baseURL>{}</baseURL>", server.base_url())));
        assert_eq!(server.request_log().len(), 1);
        server.stop();
    }

    #[test]
    fn stalled_request_times_out() {
        let server = serve(
            "127.0.0.1:0",
            Simulator::with_profile(FaultProfile::clean().with(Fault::NoResponse)),
        )
        .unwrap();
        let base = validate_base_url(&server.base_url()).unwrap();
        let policy = RetryPolicy {
            request_timeout: Duration::from_millis(300),
            ..RetryPolicy::default()
        };
        let mut t = HttpTransport::new(policy).unwrap();
        let started = std::time::Instant::now();
        assert!(matches!(
            t.fetch(&base, "Identify", &[]),
            Err(TransportError::NoResponse { .. })
        ));
        assert!(started.elapsed() < Duration::from_secs(5));
    }
}
