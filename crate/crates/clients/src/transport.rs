use std::io::Read;
use std::time::Duration;

use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Connect(String),
    Timeout,
}

/// One JSON POST. Implementations must be safe to call from many threads.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, auth: Option<&str>, body: &Value, timeout: Duration) -> Result<Response, TransportError>;
}

/// Blocking HTTP/1.1 transport.
#[derive(Debug, Default, Clone)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, auth: Option<&str>, body: &Value, timeout: Duration) -> Result<Response, TransportError> {
        let mut req = ureq::post(url).timeout(timeout).set("content-type", "application/json");
        if let Some(token) = auth {
            req = req.set("authorization", &format!("Bearer {token}"));
        }
        let resp = match req.send_string(&body.to_string()) {
            Ok(r) => r,
            Err(ureq::Error::Status(_, r)) => r,
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if is_timeout(&t) {
                    return Err(TransportError::Timeout);
                }
                return Err(TransportError::Connect(msg));
            }
        };
        let status = resp.status();
        let mut text = String::new();
        resp.into_reader()
            .take(64 * 1024 * 1024)
            .read_to_string(&mut text)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock => TransportError::Timeout,
                _ => TransportError::Connect(e.to_string()),
            })?;
        Ok(Response { status, body: text })
    }
}

fn is_timeout(t: &ureq::Transport) -> bool {
    use std::error::Error;
    let mut src = t.source();
    while let Some(e) = src {
        if let Some(io) = e.downcast_ref::<std::io::Error>() {
            if matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) {
                return true;
            }
        }
        src = e.source();
    }
    false
}
