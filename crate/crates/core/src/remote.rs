//! Blocking JSON-over-HTTP client shared by the remote reader, SR generator
//! and rewriter backends.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RemoteError {
    #[error("invalid endpoint {0:?}")]
    InvalidEndpoint(String),
    #[error("request to {url} failed: {message}")]
    Transport { url: String, message: String },
    #[error("{url} answered with status {status}")]
    Status { url: String, status: u16 },
    #[error("invalid response from {url}: {message}")]
    Decode { url: String, message: String },
}

#[derive(Clone)]
pub struct JsonClient {
    base: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for JsonClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JsonClient").field("base", &self.base).finish()
    }
}

impl JsonClient {
    /// `endpoint` must be an absolute `http://` or `https://` URL.
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, RemoteError> {
        let base = endpoint.trim_end_matches('/');
        let rest = base
            .strip_prefix("http://")
            .or_else(|| base.strip_prefix("https://"))
            .ok_or_else(|| RemoteError::InvalidEndpoint(endpoint.to_string()))?;
        if rest.is_empty() || rest.starts_with('/') || rest.contains(char::is_whitespace) {
            return Err(RemoteError::InvalidEndpoint(endpoint.to_string()));
        }
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Ok(Self { base: base.to_string(), agent })
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    pub fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, RemoteError> {
        let url = format!("{}{}", self.base, path);
        let response = self.agent.post(&url).send_json(body).map_err(|e| match e {
            ureq::Error::Status(status, _) => RemoteError::Status { url: url.clone(), status },
            ureq::Error::Transport(t) => RemoteError::Transport { url: url.clone(), message: t.to_string() },
        })?;
        response
            .into_json::<R>()
            .map_err(|e| RemoteError::Decode { url, message: e.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_validation() {
        assert!(JsonClient::new("http://localhost:8080/", DEFAULT_TIMEOUT).is_ok());
        assert_eq!(
            JsonClient::new("https://models.example/v1/", DEFAULT_TIMEOUT).unwrap().endpoint(),
            "https://models.example/v1"
        );
        assert!(JsonClient::new("localhost:8080", DEFAULT_TIMEOUT).is_err());
        assert!(JsonClient::new("http://", DEFAULT_TIMEOUT).is_err());
    }

    #[test]
    fn unreachable_host_is_a_transport_error() {
        let client = JsonClient::new("http://127.0.0.1:9", Duration::from_millis(500)).unwrap();
        let err = client.post::<_, serde_json::Value>("/predict", &serde_json::json!({})).unwrap_err();
        assert!(matches!(err, RemoteError::Transport { .. }));
    }
}
