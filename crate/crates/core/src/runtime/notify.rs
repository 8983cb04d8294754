//! Webhook delivery of fall alerts with retries and a failure journal.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::stream::FallAlert;

#[derive(Serialize)]
struct Payload<'a> {
    event: &'static str,
    timestamp: f64,
    probability: f64,
    window_index: u64,
    device_id: &'a str,
}

impl<'a> Payload<'a> {
    fn of(alert: &'a FallAlert) -> Self {
        Payload {
            event: "fall_detected",
            timestamp: alert.event_time,
            probability: alert.probability,
            window_index: alert.window_index,
            device_id: &alert.device_id,
        }
    }
}

/// The JSON body posted for an alert.
pub fn alert_payload(alert: &FallAlert) -> String {
    serde_json::to_string(&Payload::of(alert)).expect("payload serializes")
}

/// Something that can POST a JSON body and report the HTTP status.
pub trait Transport: Send {
    fn post(&mut self, url: &str, body: &str) -> Result<u16, String>;
}

/// Plain-HTTP transport.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(5))
    }
}

impl Transport for HttpTransport {
    fn post(&mut self, url: &str, body: &str) -> Result<u16, String> {
        self.agent
            .post(url)
            .header("content-type", "application/json")
            .send(body)
            .map(|r| r.status().as_u16())
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay after the first failure; doubles after each further failure.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryResult {
    pub attempts: u32,
    pub delivered: bool,
    pub status: Option<u16>,
    pub error: Option<String>,
}

#[derive(Serialize)]
struct JournalEntry<'a> {
    payload: Payload<'a>,
    endpoint: &'a str,
    attempts: u32,
    status: Option<u16>,
    error: Option<&'a str>,
}

pub struct Notifier {
    pub endpoint: String,
    pub policy: RetryPolicy,
    /// Append-only JSON-lines log of alerts that could not be delivered.
    pub journal: Option<PathBuf>,
    transport: Box<dyn Transport>,
}

impl Notifier {
    pub fn new(endpoint: impl Into<String>, transport: Box<dyn Transport>) -> Self {
        Self {
            endpoint: endpoint.into(),
            policy: RetryPolicy::default(),
            journal: None,
            transport,
        }
    }

    pub fn http(endpoint: impl Into<String>) -> Self {
        Self::new(endpoint, Box::new(HttpTransport::default()))
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_journal(mut self, path: impl Into<PathBuf>) -> Self {
        self.journal = Some(path.into());
        self
    }

    /// Posts the alert until a 2xx arrives or attempts run out. Failures are
    /// journaled; the caller never sees an error.
    pub fn notify(&mut self, alert: &FallAlert) -> DeliveryResult {
        let body = alert_payload(alert);
        let mut result = DeliveryResult {
            attempts: 0,
            delivered: false,
            status: None,
            error: None,
        };
        let mut delay = self.policy.base_delay;
        while result.attempts < self.policy.max_attempts.max(1) {
            if result.attempts > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            result.attempts += 1;
            match self.transport.post(&self.endpoint, &body) {
                Ok(status) => {
                    result.status = Some(status);
                    if (200..300).contains(&status) {
                        result.delivered = true;
                        result.error = None;
                        return result;
                    }
                    result.error = Some(format!("HTTP {status}"));
                }
                Err(e) => result.error = Some(e),
            }
            log::warn!(
                "alert {} delivery attempt {} failed: {}",
                alert.window_index,
                result.attempts,
                result.error.as_deref().unwrap_or("")
            );
        }
        self.write_journal(alert, &result);
        result
    }

    fn write_journal(&self, alert: &FallAlert, result: &DeliveryResult) {
        let Some(path) = &self.journal else {
            log::error!("undelivered alert (no journal configured): {}", alert_payload(alert));
            return;
        };
        let entry = JournalEntry {
            payload: Payload::of(alert),
            endpoint: &self.endpoint,
            attempts: result.attempts,
            status: result.status,
            error: result.error.as_deref(),
        };
        let line = serde_json::to_string(&entry).expect("journal entry serializes");
        let written = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .and_then(|mut f| writeln!(f, "{line}"));
        if let Err(e) = written {
            log::error!("cannot journal undelivered alert to {}: {e}; entry: {line}", path.display());
        }
    }
}

/// Minimal local HTTP receiver for tests and demos. Answers each request
/// with the next scripted status (the last one repeats) and records bodies.
pub struct TestReceiver {
    pub url: String,
    bodies: Arc<Mutex<Vec<String>>>,
    handle: Option<JoinHandle<()>>,
    addr: std::net::SocketAddr,
    stop: Arc<std::sync::atomic::AtomicBool>,
}

impl TestReceiver {
    pub fn start(statuses: Vec<u16>) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(std::sync::atomic::AtomicBool::new(false));
        let (b, s) = (bodies.clone(), stop.clone());
        let handle = std::thread::spawn(move || {
            let mut served = 0usize;
            for conn in listener.incoming() {
                if s.load(std::sync::atomic::Ordering::SeqCst) {
                    break;
                }
                let Ok(conn) = conn else { continue };
                let status = statuses
                    .get(served)
                    .or(statuses.last())
                    .copied()
                    .unwrap_or(200);
                served += 1;
                if let Ok(body) = serve(conn, status) {
                    b.lock().expect("receiver lock").push(body);
                }
            }
        });
        Ok(Self {
            url: format!("http://{addr}/alerts"),
            bodies,
            handle: Some(handle),
            addr,
            stop,
        })
    }

    /// Bodies received so far, in arrival order.
    pub fn bodies(&self) -> Vec<String> {
        self.bodies.lock().expect("receiver lock").clone()
    }
}

impl Drop for TestReceiver {
    fn drop(&mut self) {
        self.stop.store(true, std::sync::atomic::Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream, status: u16) -> std::io::Result<String> {
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut content_length = 0usize;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            break;
        }
        if let Some((k, v)) = trimmed.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; content_length];
    reader.read_exact(&mut body)?;
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} Scripted\r\ncontent-length: 0\r\nconnection: close\r\n\r\n"
    )?;
    stream.flush()?;
    Ok(String::from_utf8_lossy(&body).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scripted(Vec<Result<u16, String>>, usize);

    impl Transport for Scripted {
        fn post(&mut self, _url: &str, _body: &str) -> Result<u16, String> {
            let r = self.0[self.1.min(self.0.len() - 1)].clone();
            self.1 += 1;
            r
        }
    }

    fn alert() -> FallAlert {
        FallAlert {
            event_time: 12.5,
            probability: 0.875,
            window_index: 7,
            device_id: "dev-1".into(),
        }
    }

    fn fast() -> RetryPolicy {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(1),
        }
    }

    #[test]
    fn payload_keys_are_exact() {
        assert_eq!(
            alert_payload(&alert()),
            r#"{"event":"fall_detected","timestamp":12.5,"probability":0.875,"window_index":7,"device_id":"dev-1"}"#
        );
    }

    #[test]
    fn success_first_try() {
        let mut n = Notifier::new("x", Box::new(Scripted(vec![Ok(200)], 0))).with_policy(fast());
        let r = n.notify(&alert());
        assert_eq!((r.attempts, r.delivered, r.status), (1, true, Some(200)));
    }

    #[test]
    fn two_failures_then_success() {
        let script = vec![Err("refused".into()), Ok(503), Ok(204)];
        let mut n = Notifier::new("x", Box::new(Scripted(script, 0))).with_policy(fast());
        let r = n.notify(&alert());
        assert_eq!((r.attempts, r.delivered), (3, true));
    }

    #[test]
    fn permanent_failure_is_journaled() {
        let dir = tempfile::tempdir().unwrap();
        let journal = dir.path().join("undelivered.jsonl");
        let mut n = Notifier::new("x", Box::new(Scripted(vec![Ok(500)], 0)))
            .with_policy(fast())
            .with_journal(&journal);
        let r = n.notify(&alert());
        assert_eq!((r.attempts, r.delivered), (3, false));
        n.notify(&alert());
        let text = std::fs::read_to_string(&journal).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(v["payload"]["event"], "fall_detected");
        assert_eq!(v["attempts"], 3);
        assert!(lines[0].starts_with(&format!("{{\"payload\":{}", alert_payload(&alert()))));
    }

    #[test]
    fn backoff_doubles() {
        let policy = RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(40),
        };
        let mut n = Notifier::new("x", Box::new(Scripted(vec![Ok(500)], 0))).with_policy(policy);
        let start = std::time::Instant::now();
        n.notify(&alert());
        let elapsed = start.elapsed();
        assert!(elapsed >= Duration::from_millis(120), "{elapsed:?}");
    }

    #[test]
    fn http_round_trip_against_local_receiver() {
        let rx = TestReceiver::start(vec![500, 200]).unwrap();
        let mut n = Notifier::http(rx.url.clone()).with_policy(fast());
        let r = n.notify(&alert());
        assert_eq!((r.attempts, r.delivered, r.status), (2, true, Some(200)));
        let bodies = rx.bodies();
        assert_eq!(bodies.len(), 2);
        assert_eq!(bodies[1], alert_payload(&alert()));
    }

    #[test]
    fn unreachable_endpoint_fails_cleanly() {
        let port = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap().port()
        };
        let mut n = Notifier::http(format!("http://127.0.0.1:{port}/")).with_policy(fast());
        let r = n.notify(&alert());
        assert!(!r.delivered);
        assert_eq!(r.attempts, 3);
        assert!(r.error.is_some());
    }
}
