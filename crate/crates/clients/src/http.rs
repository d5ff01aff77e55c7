//! Role clients speaking the JSON wire protocol:
//! request `{"role", "inputs", "params"}`, response `{"output", "error"}`.

use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use misalign_core::backend::{
    BackendError, BackendRole, DecodingParams, GroundingBackend, LlmBackend, NliBackend, VlmBackend,
};
use misalign_core::candidates::{TaggedToken, TaggerBackend, TaggerError};
use misalign_core::grounder::PixelBox;
use misalign_core::ImageRef;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::BackendConfig;
use crate::transport::{Transport, TransportError, UreqTransport};

/// Counting semaphore bounding requests in flight.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|p| p.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|p| p.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Deserialize)]
struct Envelope {
    #[serde(default)]
    output: Value,
    #[serde(default)]
    error: Option<WireError>,
}

#[derive(Debug, Deserialize)]
struct WireError {
    code: String,
    #[serde(default)]
    message: String,
}

fn from_wire(e: WireError) -> BackendError {
    match e.code.as_str() {
        "unavailable" => BackendError::Unavailable(e.message),
        "timeout" => BackendError::Timeout,
        "rate_limited" => BackendError::RateLimited,
        "no_detection" => BackendError::NoDetection,
        "invalid_request" => BackendError::InvalidRequest(e.message),
        other => BackendError::InvalidResponse(format!("{other}: {}", e.message)),
    }
}

/// Wire error code for a backend error; the inverse of the client-side mapping.
pub fn wire_code(e: &BackendError) -> &'static str {
    match e {
        BackendError::Unavailable(_) => "unavailable",
        BackendError::Timeout => "timeout",
        BackendError::RateLimited => "rate_limited",
        BackendError::NoDetection => "no_detection",
        BackendError::InvalidRequest(_) => "invalid_request",
        BackendError::InvalidResponse(_) => "invalid_response",
    }
}

/// Shared request machinery for one role: in-flight bound, retries with
/// exponential backoff on transient failures, response decoding.
pub struct HttpClient {
    cfg: BackendConfig,
    url: String,
    role_name: String,
    transport: Arc<dyn Transport>,
    gate: Gate,
    backoff: Duration,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient").field("role", &self.role_name).field("url", &self.url).finish()
    }
}

impl HttpClient {
    pub fn new(cfg: BackendConfig) -> Self {
        Self::with_transport(cfg, Arc::new(UreqTransport))
    }

    pub fn with_transport(cfg: BackendConfig, transport: Arc<dyn Transport>) -> Self {
        let url = cfg.resolved_endpoint();
        Self {
            gate: Gate::new(cfg.max_in_flight.max(1)),
            role_name: cfg.role.as_str().to_string(),
            url,
            cfg,
            transport,
            backoff: Duration::from_millis(100),
        }
    }

    /// Base delay before the first retry; doubles per attempt.
    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff = base;
        self
    }

    pub(crate) fn with_role_name(mut self, name: &str) -> Self {
        self.role_name = name.to_string();
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    pub fn call(&self, inputs: Value, params: Value) -> Result<Value, BackendError> {
        let body = json!({ "role": self.role_name, "inputs": inputs, "params": params });
        let mut attempt = 0u32;
        loop {
            let result = {
                let _permit = self.gate.acquire();
                self.once(&body)
            };
            match result {
                Err(e) if e.is_transient() && attempt < self.cfg.retries => {
                    tracing::debug!(role = %self.role_name, attempt, error = %e, "retrying");
                    thread::sleep(self.backoff.saturating_mul(1u32 << attempt.min(16)));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn once(&self, body: &Value) -> Result<Value, BackendError> {
        let timeout = Duration::from_millis(self.cfg.timeout_ms);
        let resp = self
            .transport
            .post_json(&self.url, self.cfg.auth_token.as_deref(), body, timeout)
            .map_err(|e| match e {
                TransportError::Timeout => BackendError::Timeout,
                TransportError::Connect(m) => BackendError::Unavailable(m),
            })?;
        match resp.status {
            429 => return Err(BackendError::RateLimited),
            408 | 504 => return Err(BackendError::Timeout),
            s if s >= 500 && !has_envelope_error(&resp.body) => {
                return Err(BackendError::Unavailable(format!("HTTP {s}")));
            }
            _ => {}
        }
        let env: Envelope = serde_json::from_str(&resp.body)
            .map_err(|e| BackendError::InvalidResponse(format!("HTTP {}: {e}", resp.status)))?;
        if let Some(err) = env.error {
            return Err(from_wire(err));
        }
        if !(200..300).contains(&resp.status) {
            return Err(BackendError::InvalidRequest(format!("HTTP {}", resp.status)));
        }
        Ok(env.output)
    }
}

fn has_envelope_error(body: &str) -> bool {
    serde_json::from_str::<Envelope>(body).is_ok_and(|e| e.error.is_some())
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value, BackendError> {
    v.get(key).ok_or_else(|| BackendError::InvalidResponse(format!("missing output.{key}")))
}

fn params_json(p: &DecodingParams) -> Value {
    serde_json::to_value(p).unwrap_or(Value::Null)
}

macro_rules! role_client {
    ($name:ident, $role:expr) => {
        #[derive(Debug)]
        pub struct $name(pub HttpClient);

        impl $name {
            pub fn new(cfg: BackendConfig) -> Self {
                Self(HttpClient::new(BackendConfig { role: $role, ..cfg }))
            }

            pub fn with_transport(cfg: BackendConfig, transport: Arc<dyn Transport>) -> Self {
                Self(HttpClient::with_transport(BackendConfig { role: $role, ..cfg }, transport))
            }
        }
    };
}

role_client!(HttpLlm, BackendRole::Llm);
role_client!(HttpNli, BackendRole::Nli);
role_client!(HttpGrounding, BackendRole::Grounding);
role_client!(HttpVlm, BackendRole::Vlm);

impl LlmBackend for HttpLlm {
    fn complete_chat(&self, prompt: &str, params: &DecodingParams) -> Result<String, BackendError> {
        if prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        let out = self.0.call(json!({ "prompt": prompt }), params_json(params))?;
        let text = out.as_str().or_else(|| out.get("text").and_then(Value::as_str));
        text.map(str::to_string)
            .ok_or_else(|| BackendError::InvalidResponse("output is not a string".into()))
    }
}

impl NliBackend for HttpNli {
    fn score_entailment(&self, premise: &str, hypothesis: &str) -> Result<f64, BackendError> {
        if premise.trim().is_empty() || hypothesis.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty premise or hypothesis".into()));
        }
        let out = self.0.call(json!({ "premise": premise, "hypothesis": hypothesis }), json!({}))?;
        let p = field(&out, "entailment")?
            .as_f64()
            .ok_or_else(|| BackendError::InvalidResponse("entailment is not a number".into()))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(BackendError::InvalidResponse(format!("entailment {p} outside [0, 1]")));
        }
        Ok(p)
    }
}

impl GroundingBackend for HttpGrounding {
    fn detect_grounded_boxes(&self, image: &ImageRef, label: &str) -> Result<Vec<PixelBox>, BackendError> {
        if label.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty label".into()));
        }
        let out = self.0.call(json!({ "image_uri": image.uri, "label": label }), json!({}))?;
        let boxes: Vec<PixelBox> = serde_json::from_value(field(&out, "boxes")?.clone())
            .map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
        if boxes.is_empty() {
            return Err(BackendError::NoDetection);
        }
        Ok(boxes)
    }
}

impl VlmBackend for HttpVlm {
    fn query_vlm(&self, image: &ImageRef, question: &str) -> Result<String, BackendError> {
        if question.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty question".into()));
        }
        let out = self.0.call(json!({ "image_uri": image.uri, "question": question }), json!({}))?;
        field(&out, "answer")?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::InvalidResponse("answer is not a string".into()))
    }
}

/// External part-of-speech tagger over the same protocol, role `"tagger"`:
/// inputs `{caption}`, output `{tokens: [{text, pos, char_start, char_end}]}`.
#[derive(Debug)]
pub struct HttpTagger(pub HttpClient);

impl HttpTagger {
    /// `cfg.role` is ignored; the endpoint comes from `cfg.endpoint_url` only.
    pub fn new(cfg: BackendConfig) -> Self {
        Self::with_transport(cfg, Arc::new(UreqTransport))
    }

    pub fn with_transport(cfg: BackendConfig, transport: Arc<dyn Transport>) -> Self {
        let mut c = HttpClient::with_transport(cfg.clone(), transport).with_role_name("tagger");
        c.url = cfg.endpoint_url;
        Self(c)
    }
}

impl TaggerBackend for HttpTagger {
    fn tag(&self, caption: &str) -> Result<Vec<TaggedToken>, TaggerError> {
        if caption.trim().is_empty() {
            return Err(TaggerError::EmptyCaption);
        }
        let out = self.0.call(json!({ "caption": caption }), json!({})).map_err(|e| match e {
            BackendError::InvalidResponse(m) => TaggerError::InvalidTokens(m),
            other => TaggerError::BackendUnavailable(other.to_string()),
        })?;
        let tokens: Vec<TaggedToken> = out
            .get("tokens")
            .cloned()
            .ok_or_else(|| TaggerError::InvalidTokens("missing output.tokens".into()))
            .and_then(|v| serde_json::from_value(v).map_err(|e| TaggerError::InvalidTokens(e.to_string())))?;
        for t in &tokens {
            if caption.get(t.char_start..t.char_end) != Some(t.text.as_str()) {
                return Err(TaggerError::InvalidTokens(format!("span {}..{} does not match {:?}", t.char_start, t.char_end, t.text)));
            }
        }
        Ok(tokens)
    }
}
