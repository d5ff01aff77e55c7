//! HTTP server exposing the mock backends over the wire protocol.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use misalign_core::backend::{BackendError, DecodingParams, GroundingBackend, LlmBackend, NliBackend, VlmBackend};
use misalign_core::candidates::{LexiconTagger, TaggerBackend};
use misalign_core::mock::{MockFixtures, MockGrounding, MockLlm, MockNli, MockVlm};
use misalign_core::{ImageKind, ImageRef};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::oneshot;

use crate::http::wire_code;

struct Mocks {
    llm: MockLlm,
    nli: MockNli,
    grounding: MockGrounding,
    vlm: MockVlm,
    tagger: LexiconTagger,
}

#[derive(Deserialize)]
struct Request {
    role: String,
    #[serde(default)]
    inputs: Value,
    #[serde(default)]
    params: Value,
}

fn text(inputs: &Value, key: &str) -> Result<String, BackendError> {
    inputs
        .get(key)
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::InvalidRequest(format!("inputs.{key} must be a string")))
}

fn image(inputs: &Value) -> Result<ImageRef, BackendError> {
    // Mock lookups key on the URI only; the extent is irrelevant here.
    ImageRef::new(text(inputs, "image_uri")?, 1, 1, ImageKind::Natural)
        .map_err(|e| BackendError::InvalidRequest(e.to_string()))
}

fn dispatch(m: &Mocks, req: &Request) -> Result<Value, BackendError> {
    let i = &req.inputs;
    match req.role.as_str() {
        "llm" => {
            let params: DecodingParams = serde_json::from_value(req.params.clone()).unwrap_or_default();
            Ok(Value::String(m.llm.complete_chat(&text(i, "prompt")?, &params)?))
        }
        "nli" => Ok(json!({ "entailment": m.nli.score_entailment(&text(i, "premise")?, &text(i, "hypothesis")?)? })),
        "grounding" => Ok(json!({ "boxes": m.grounding.detect_grounded_boxes(&image(i)?, &text(i, "label")?)? })),
        "vlm" => Ok(json!({ "answer": m.vlm.query_vlm(&image(i)?, &text(i, "question")?)? })),
        "tagger" => {
            let tokens = m.tagger.tag(&text(i, "caption")?).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
            Ok(json!({ "tokens": tokens }))
        }
        other => Err(BackendError::InvalidRequest(format!("unknown role {other:?}"))),
    }
}

async fn handle(State(m): State<Arc<Mocks>>, body: Result<Json<Request>, axum::extract::rejection::JsonRejection>) -> (StatusCode, Json<Value>) {
    let req = match body {
        Ok(Json(r)) => r,
        Err(e) => {
            return (
                StatusCode::BAD_REQUEST,
                Json(json!({ "output": null, "error": { "code": "invalid_request", "message": e.body_text() } })),
            )
        }
    };
    match dispatch(&m, &req) {
        Ok(output) => (StatusCode::OK, Json(json!({ "output": output, "error": null }))),
        Err(e) => {
            let status = match e {
                BackendError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
                _ => StatusCode::OK,
            };
            (status, Json(json!({ "output": null, "error": { "code": wire_code(&e), "message": e.to_string() } })))
        }
    }
}

/// Router answering `POST /` and `POST /{role}`; the role is read from the body.
pub fn mock_router(fixtures: &MockFixtures) -> Router {
    let mocks = Arc::new(Mocks {
        llm: MockLlm::new(fixtures),
        nli: MockNli::new(fixtures),
        grounding: MockGrounding::new(fixtures),
        vlm: MockVlm::new(fixtures),
        tagger: LexiconTagger::default(),
    });
    Router::new().route("/", post(handle)).route("/{role}", post(handle)).with_state(mocks)
}

/// A mock server running on a background thread. Dropping it shuts it down.
pub struct MockServer {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<()>>,
}

impl MockServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn spawn(fixtures: &MockFixtures, addr: SocketAddr) -> io::Result<Self> {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
        let listener = rt.block_on(tokio::net::TcpListener::bind(addr))?;
        let addr = listener.local_addr()?;
        let app = mock_router(fixtures);
        let (tx, rx) = oneshot::channel::<()>();
        let thread = thread::spawn(move || {
            rt.block_on(async move {
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async move {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(Self { addr, stop: Some(tx), thread: Some(thread) })
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
