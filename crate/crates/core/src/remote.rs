//! Minimal client for OpenAI-compatible HTTP endpoints.

use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

pub const ENV_API_BASE: &str = "CTXSQL_API_BASE";
pub const ENV_API_KEY: &str = "CTXSQL_API_KEY";
pub const ENV_MODEL: &str = "CTXSQL_MODEL";
pub const ENV_EMBEDDING_MODEL: &str = "CTXSQL_EMBEDDING_MODEL";
pub const DEFAULT_EMBEDDING_MODEL: &str = "text-embedding-ada-002";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RemoteError {
    #[error("rate limited (retry after {retry_after_secs:?} s)")]
    RateLimited { retry_after_secs: Option<u64> },
    #[error("authentication rejected with HTTP {status}")]
    Auth { status: u16 },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("missing configuration: {0}")]
    Config(String),
}

impl RemoteError {
    /// Seconds to wait before retrying, when the server said so.
    pub fn retry_after(&self) -> Option<Duration> {
        match self {
            RemoteError::RateLimited { retry_after_secs } => retry_after_secs.map(Duration::from_secs),
            _ => None,
        }
    }

    pub fn is_retryable(&self) -> bool {
        match self {
            RemoteError::RateLimited { .. } | RemoteError::Transport(_) => true,
            RemoteError::Http { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub api_base: String,
    pub api_key: String,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(api_base: impl Into<String>, api_key: impl Into<String>) -> Self {
        RemoteConfig {
            api_base: api_base.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            timeout: Duration::from_secs(120),
        }
    }

    pub fn from_env() -> Result<Self, RemoteError> {
        let base = std::env::var(ENV_API_BASE).map_err(|_| RemoteError::Config(ENV_API_BASE.into()))?;
        let key = std::env::var(ENV_API_KEY).map_err(|_| RemoteError::Config(ENV_API_KEY.into()))?;
        Ok(Self::new(base, key))
    }

    fn agent(&self) -> ureq::Agent {
        ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(self.timeout))
            .build()
            .into()
    }

    /// POST a JSON body to `{api_base}/{path}` and parse the JSON reply.
    pub fn post_json(&self, path: &str, body: &Value) -> Result<Value, RemoteError> {
        let url = format!("{}/{}", self.api_base, path.trim_start_matches('/'));
        let payload = serde_json::to_string(body).map_err(|e| RemoteError::Malformed(e.to_string()))?;
        let mut response = self
            .agent()
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(payload.as_str())
            .map_err(|e| RemoteError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let retry_after_secs = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok());
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| RemoteError::Transport(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| RemoteError::Malformed(e.to_string())),
            429 => Err(RemoteError::RateLimited { retry_after_secs }),
            401 | 403 => Err(RemoteError::Auth { status }),
            _ => Err(RemoteError::Http { status, body: text }),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    use super::*;

    /// One-shot HTTP server answering the next request with `status`,
    /// extra headers and `body`. Returns the base URL and a handle yielding
    /// the request body it received.
    pub(crate) fn serve_once(status: u16, headers: &str, body: &str) -> (String, thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let reply = format!(
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n{headers}\r\n{body}",
            body.len()
        );
        let handle = thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some((name, value)) = line.split_once(':') {
                    if name.eq_ignore_ascii_case("content-length") {
                        length = value.trim().parse().unwrap();
                    }
                }
            }
            let mut request = vec![0u8; length];
            reader.read_exact(&mut request).unwrap();
            reader.get_mut().write_all(reply.as_bytes()).unwrap();
            String::from_utf8(request).unwrap()
        });
        (format!("http://{addr}"), handle)
    }

    #[test]
    fn rate_limit_carries_retry_after() {
        let (base, handle) = serve_once(429, "Retry-After: 7\r\n", "{}");
        let err = RemoteConfig::new(base, "k").post_json("chat/completions", &Value::Null).unwrap_err();
        handle.join().unwrap();
        assert_eq!(err, RemoteError::RateLimited { retry_after_secs: Some(7) });
        assert_eq!(err.retry_after(), Some(Duration::from_secs(7)));
        assert!(err.is_retryable());
    }

    #[test]
    fn auth_and_server_errors() {
        let (base, handle) = serve_once(401, "", "{}");
        assert_eq!(RemoteConfig::new(base, "k").post_json("x", &Value::Null), Err(RemoteError::Auth { status: 401 }));
        handle.join().unwrap();
        let (base, handle) = serve_once(500, "", "boom");
        let err = RemoteConfig::new(base, "k").post_json("x", &Value::Null).unwrap_err();
        handle.join().unwrap();
        assert_eq!(err, RemoteError::Http { status: 500, body: "boom".into() });
    }

    #[test]
    fn unreachable_host_is_transport_error() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let err = RemoteConfig::new(format!("http://127.0.0.1:{port}"), "k").post_json("x", &Value::Null).unwrap_err();
        assert!(matches!(err, RemoteError::Transport(_)), "{err:?}");
    }
}
