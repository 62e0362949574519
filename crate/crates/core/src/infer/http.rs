//! Completions-style HTTP+JSON transport.
//!
//! Request: `POST {base_url}/completions` with
//! `{"model","prompt","temperature","max_tokens","stop"}`; reply `{"text"}`
//! (an OpenAI-style `choices[0].text` is also accepted). The chat adapter
//! posts to `{base_url}/chat/completions` with the prompt as one user
//! message and reads `choices[0].message.content`.

use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde_json::{Value, json};

use super::{Backend, CompletionRequest, InferError, Secret, WireFormat};

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    base_url: reqwest::Url,
    wire: WireFormat,
    credential: Option<Secret>,
    timeout: Duration,
}

impl HttpBackend {
    pub fn new(
        base_url: &str,
        wire: WireFormat,
        credential: Option<Secret>,
        timeout: Duration,
    ) -> Result<Self, InferError> {
        let mut base_url =
            reqwest::Url::parse(base_url).map_err(|e| InferError::Config(format!("base_url {base_url:?}: {e}")))?;
        if !base_url.path().ends_with('/') {
            base_url.set_path(&format!("{}/", base_url.path()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| InferError::Config(format!("http client: {e}")))?;
        Ok(HttpBackend { client, base_url, wire, credential, timeout })
    }

    fn endpoint(&self) -> reqwest::Url {
        let path = match self.wire {
            WireFormat::Completions => "completions",
            WireFormat::Chat => "chat/completions",
        };
        self.base_url.join(path).expect("relative path joins")
    }

    fn body(&self, req: &CompletionRequest) -> Value {
        match self.wire {
            WireFormat::Completions => serde_json::to_value(req).expect("request serializes"),
            WireFormat::Chat => json!({
                "model": req.model,
                "messages": [{"role": "user", "content": req.prompt}],
                "temperature": req.temperature,
                "max_tokens": req.max_tokens,
                "stop": req.stop,
            }),
        }
    }
}

/// Pulls the completion text out of a reply body.
pub fn extract_text(wire: WireFormat, body: &Value) -> Option<String> {
    let text = match wire {
        WireFormat::Completions => body.get("text").or_else(|| body.pointer("/choices/0/text")),
        WireFormat::Chat => body.pointer("/choices/0/message/content").or_else(|| body.get("text")),
    };
    text.and_then(Value::as_str).map(str::to_string)
}

impl Backend for HttpBackend {
    fn send(&self, req: &CompletionRequest, idempotency_key: Option<&str>) -> Result<String, InferError> {
        let mut builder = self.client.post(self.endpoint()).json(&self.body(req));
        if let Some(secret) = &self.credential {
            builder = builder.bearer_auth(secret.expose());
        }
        if let Some(key) = idempotency_key {
            builder = builder.header("Idempotency-Key", key);
        }
        let resp = builder.send().map_err(|e| {
            if e.is_timeout() {
                InferError::Transport(format!("timed out after {:?}", self.timeout))
            } else {
                InferError::Transport(format!("request failed: {}", e.without_url()))
            }
        })?;
        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(InferError::AuthFailure(format!("backend answered {status}")));
        }
        if !status.is_success() {
            return Err(InferError::Http { status: status.as_u16() });
        }
        let body: Value = resp
            .json()
            .map_err(|e| InferError::MalformedResponse(format!("reply is not JSON: {}", e.without_url())))?;
        extract_text(self.wire, &body).ok_or_else(|| InferError::MalformedResponse("reply has no completion text".into()))
    }

    fn probe(&self) -> Result<(), InferError> {
        let host = self.base_url.host_str().unwrap_or("localhost");
        let port = self.base_url.port_or_known_default().unwrap_or(80);
        let addrs = (host, port)
            .to_socket_addrs()
            .map_err(|e| InferError::Unreachable(format!("{host}:{port}: {e}")))?;
        let limit = self.timeout.min(Duration::from_secs(5));
        for addr in addrs {
            if TcpStream::connect_timeout(&addr, limit).is_ok() {
                return Ok(());
            }
        }
        Err(InferError::Unreachable(format!("{host}:{port}")))
    }
}
