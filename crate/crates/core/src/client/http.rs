use std::time::Duration;

use reqwest::blocking::Client as HttpClient;
use reqwest::StatusCode;

use super::wire::{ChatCompletion, ChatRequest, ChatResponse};
use super::{Transport, TransportError};

/// `POST {base_url}/chat/completions` with an optional bearer token.
pub struct HttpTransport {
    http: HttpClient,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, TransportError> {
        let http = HttpClient::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        Ok(HttpTransport {
            http,
            url: chat_url(base_url),
            api_key,
        })
    }
}

pub fn chat_url(base_url: &str) -> String {
    let base = base_url.trim_end_matches('/');
    if base.ends_with("/chat/completions") {
        base.to_string()
    } else {
        format!("{base}/chat/completions")
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatCompletion, TransportError> {
        let mut builder = self.http.post(&self.url).json(request);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        let status = response.status();
        if status != StatusCode::OK {
            let body = response.text().unwrap_or_default();
            return Err(TransportError::Status {
                code: status.as_u16(),
                body,
            });
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| TransportError::Decode(e.to_string()))?;
        parsed
            .into_completion()
            .ok_or_else(|| TransportError::Decode("response has no choices".into()))
    }
}
