use std::sync::Arc;
use std::thread;

use misalign_core::model::ReviewStatus;
use misalign_core::{make_norm_box, BenchmarkInstance, ImageKind, ImageRef, VisualAnnotation};
use misalign_review::{api, ReviewStore};
use serde_json::{json, Value};

struct Server {
    base: String,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<()>>,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.thread.take().unwrap().join().unwrap();
    }
}

fn duck() -> BenchmarkInstance {
    BenchmarkInstance {
        id: "duck".into(),
        image: ImageRef::new("openimages/duck.jpg", 1024, 768, ImageKind::Natural).unwrap(),
        caption: "A duck flying over a pond".into(),
        alignment_label: false,
        gt_feedback: Some("The duck is swimming, not flying".into()),
        gt_misalignment_in_text: Some("duck flying".into()),
        gt_visual: Some(VisualAnnotation::single(make_norm_box(339, 245, 581, 834).unwrap(), "duck swimming").unwrap()),
        review_status: ReviewStatus::Pending,
    }
}

fn start(dir: &std::path::Path, ui: Option<std::path::PathBuf>) -> Server {
    let mut other = duck();
    other.id = "other".into();
    let store = Arc::new(ReviewStore::open(vec![duck(), other], &dir.join("log.jsonl"), None).unwrap());
    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = thread::spawn(move || {
        rt.block_on(api::serve(listener, store, ui, async {
            let _ = rx.await;
        }))
        .unwrap();
    });
    Server { base, stop: Some(tx), thread: Some(thread) }
}

fn get(url: &str) -> (u16, Value) {
    match ureq::get(url).call() {
        Ok(r) => (r.status(), r.into_json().unwrap()),
        Err(ureq::Error::Status(s, r)) => (s, r.into_json().unwrap()),
        Err(e) => panic!("{e}"),
    }
}

fn post(url: &str, body: &str) -> (u16, Value) {
    match ureq::post(url).set("content-type", "application/json").send_string(body) {
        Ok(r) => (r.status(), r.into_json().unwrap()),
        Err(ureq::Error::Status(s, r)) => (s, r.into_json().unwrap()),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn review_flow_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let s = start(dir.path(), None);
    let (st, body) = get(&format!("{}/api/next?rater=a", s.base));
    assert_eq!(st, 200);
    assert_eq!(body["instance"]["id"], "duck");
    assert_eq!(body["instance"]["gt_visual"], json!([{ "box": [339, 245, 581, 834], "label": "duck swimming" }]));

    for r in ["a", "b", "c"] {
        let v = json!({ "instance_id": "duck", "rater_id": r, "feedback_ok": true, "text_ok": true, "visual_ok": true });
        let (st, agg) = post(&format!("{}/api/verdicts", s.base), &v.to_string());
        assert_eq!(st, 200);
        assert_eq!(agg["unanimous_all_yes"], r == "c");
    }
    let (_, next) = get(&format!("{}/api/next?rater=a", s.base));
    assert_eq!(next["instance"]["id"], "other");

    let (st, h) = get(&format!("{}/api/agreement?question=visual", s.base));
    assert_eq!(st, 200);
    assert_eq!(h["levels"], json!([0, 0, 0, 1]));
    assert_eq!(h["question"], "visual");

    let (_, e) = get(&format!("{}/api/export", s.base));
    assert_eq!((e["accepted"].clone(), e["total"].clone(), e["acceptance_rate"].clone()), (json!(1), json!(2), json!(0.5)));
    assert_eq!(e["instances"][0]["review_status"], "accepted");

    let (st, one) = get(&format!("{}/api/instances/duck", s.base));
    assert_eq!(st, 200);
    assert_eq!(one["aggregate"]["n_raters"], 3);
    assert_eq!(one["instance"]["caption"], "A duck flying over a pond");
}

#[test]
fn errors_are_json_with_codes() {
    let dir = tempfile::tempdir().unwrap();
    let s = start(dir.path(), None);
    let (st, b) = get(&format!("{}/api/instances/missing", s.base));
    assert_eq!((st, b["error"]["code"].as_str()), (404, Some("unknown_instance")));
    let (st, b) = get(&format!("{}/api/next", s.base));
    assert_eq!((st, b["error"]["code"].as_str()), (400, Some("bad_query")));
    let (st, b) = get(&format!("{}/api/next?rater=", s.base));
    assert_eq!((st, b["error"]["code"].as_str()), (403, Some("unknown_rater")));
    let (st, b) = get(&format!("{}/api/agreement?question=colour", s.base));
    assert_eq!((st, b["error"]["code"].as_str()), (400, Some("bad_query")));
    // All three answers are required.
    let partial = json!({ "instance_id": "duck", "rater_id": "a", "feedback_ok": true, "text_ok": true });
    let (st, b) = post(&format!("{}/api/verdicts", s.base), &partial.to_string());
    assert_eq!((st, b["error"]["code"].as_str()), (422, Some("invalid_verdict")));
    let (st, b) = post(&format!("{}/api/verdicts", s.base), "{");
    assert_eq!((st, b["error"]["code"].as_str()), (400, Some("invalid_verdict")));
    let unknown = json!({ "instance_id": "zzz", "rater_id": "a", "feedback_ok": true, "text_ok": true, "visual_ok": true });
    let (st, b) = post(&format!("{}/api/verdicts", s.base), &unknown.to_string());
    assert_eq!((st, b["error"]["code"].as_str()), (404, Some("unknown_instance")));
    let (st, b) = get(&format!("{}/api/nothing", s.base));
    assert_eq!((st, b["error"]["code"].as_str()), (404, Some("not_found")));
}

#[test]
fn ui_bundle_is_served_from_root() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<html>review</html>").unwrap();
    let s = start(dir.path(), Some(ui));
    let body = ureq::get(&format!("{}/", s.base)).call().unwrap().into_string().unwrap();
    assert_eq!(body, "<html>review</html>");
    let (st, _) = get(&format!("{}/api/export", s.base));
    assert_eq!(st, 200);
}
