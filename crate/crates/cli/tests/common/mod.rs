#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use misalign_core::model::{LabeledBox, NormBox};
use misalign_core::{BenchmarkInstance, ImageKind, ImageRef, ReviewStatus, VisualAnnotation};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_misalign"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn misalign")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// A server child process plus the base URL it announced on stdout.
pub struct Server {
    pub child: Child,
    pub url: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn spawn_server(args: &[&str]) -> Server {
    let mut child = bin()
        .args(args)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .expect("spawn misalign");
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
        .to_string();
    Server { child, url }
}

pub fn image(id: &str) -> ImageRef {
    ImageRef::new(format!("{id}.jpg"), 1024, 768, ImageKind::Natural).unwrap()
}

pub fn nb(x1: i64, y1: i64, x2: i64, y2: i64) -> NormBox {
    NormBox::new(x1, y1, x2, y2).unwrap()
}

/// `n` instances; every third one is aligned, the rest carry full ground truth.
pub fn instances(n: usize) -> Vec<BenchmarkInstance> {
    (0..n)
        .map(|i| {
            let aligned = i % 3 == 0;
            let k = i as i64;
            BenchmarkInstance {
                id: format!("i{i:03}"),
                image: image(&format!("i{i:03}")),
                caption: format!("A duck flying over pond number {i}"),
                alignment_label: aligned,
                gt_feedback: (!aligned).then(|| format!("The duck is swimming in pond {i}, not flying")),
                gt_misalignment_in_text: (!aligned).then(|| "duck flying".to_string()),
                gt_visual: (!aligned).then(|| {
                    VisualAnnotation::new(vec![LabeledBox { bbox: nb(100 + k, 200, 500 + k, 800), label: "duck swimming".into() }])
                        .unwrap()
                }),
                review_status: ReviewStatus::default(),
            }
        })
        .collect()
}
