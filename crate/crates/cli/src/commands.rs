use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use misalign_clients::{build_grounding, build_llm, build_nli, build_vlm, MockServer};
use misalign_core::backend::BackendRole;
use misalign_core::candidates::LexiconTagger;
use misalign_core::eval::{correlate, evaluate_model, Backends, EvalConfig, EvalMode, HumanAgreement, MetricReport, Question};
use misalign_core::grounder::ground_labels;
use misalign_core::jsonl::{parse_jsonl, read_jsonl, write_jsonl};
use misalign_core::mock::MockFixtures;
use misalign_core::validator::{heatmap_csv, score_record, sweep_thresholds, unit_grid, };
use misalign_core::{render_target, AlignedPair, BenchmarkInstance, ImageRef, TrainingRecord};
use misalign_review::ReviewStore;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::PipelineConfig;
use crate::manifest::{ingest, looks_like_manifest, parse_manifest};
use crate::pipeline::{run_pipeline, PipelineBackends, PipelineSettings};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURES: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "misalign", version, about = "Contradiction-caption generation and misalignment evaluation")]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a source manifest and write positive pairs.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate, validate and ground contradictions for positive pairs.
    Generate(GenerateArgs),
    /// Score `{id, original, contradiction, feedback}` lines with the NLI backend.
    Validate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retention heatmap over a grid of thresholds.
    Sweep {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Grid points per axis minus one; the grid is 0, 1/steps, ..., 1.
        #[arg(long, default_value_t = 20)]
        steps: u32,
    },
    /// Ground `{id, image, labels}` lines with the grounding backend.
    Ground {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        fail_threshold: f64,
    },
    /// Render training records as `{id, image, caption, target}` lines.
    ExportTrain {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Query the model under test on benchmark instances and score it.
    Evaluate(EvaluateArgs),
    /// Mean metric score per human agreement level.
    Correlate(CorrelateArgs),
    /// Serve the review API (and UI bundle) over a verdict log.
    ReviewServe(ReviewServeArgs),
    /// Serve fixture-driven mock backends over the wire protocol.
    ServeMocks {
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8090)]
        port: u16,
    },
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Positive pairs or a source manifest; defaults to `input` in the config.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub negatives_per_pair: Option<u32>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Exit with status 1 when the failed fraction exceeds this.
    #[arg(long, default_value_t = 0.5)]
    pub fail_threshold: f64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub instances: PathBuf,
    /// Report JSON; a CSV is written next to it unless `--csv` is given.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value = "end-to-end")]
    pub mode: EvalMode,
    #[arg(long)]
    pub label_aware: bool,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Metric report from `evaluate`.
    #[arg(long)]
    pub report: PathBuf,
    /// Report column: feedback_nli, text_nli, visual_f1 or binary_correct.
    #[arg(long, default_value = "feedback_nli")]
    pub metric: String,
    #[arg(long, default_value = "feedback")]
    pub question: Question,
    /// HumanAgreement JSONL; alternatively derive it from `--review-log`.
    #[arg(long, conflicts_with = "review_log")]
    pub agreements: Option<PathBuf>,
    #[arg(long, requires = "instances")]
    pub review_log: Option<PathBuf>,
    #[arg(long)]
    pub instances: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReviewServeArgs {
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long)]
    pub log: PathBuf,
    /// Comma-separated rater ids; any non-empty id is accepted when omitted.
    #[arg(long, value_delimiter = ',')]
    pub raters: Option<Vec<String>>,
    /// Directory holding the built UI bundle.
    #[arg(long)]
    pub ui: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

/// Failure classes mapped to exit statuses.
#[derive(Debug)]
enum CliError {
    Usage(anyhow::Error),
    Failed(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Usage(e)
    }
}

type CliResult = Result<(), CliError>;

fn failed(e: anyhow::Error) -> CliError {
    CliError::Failed(e)
}

pub fn run(cli: Cli) -> u8 {
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
        Err(CliError::Failed(e)) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURES
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> anyhow::Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => bail!("this command needs --config"),
    }
}

fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Ingest { manifest, out } => cmd_ingest(&cli.config, &manifest, &out),
        Command::Generate(a) => cmd_generate(&cli.config, a),
        Command::Validate { input, out } => cmd_validate(&cli.config, &input, &out),
        Command::Sweep { input, out, steps } => cmd_sweep(&input, &out, steps),
        Command::Ground { input, out, fail_threshold } => cmd_ground(&cli.config, &input, &out, fail_threshold),
        Command::ExportTrain { input, out } => cmd_export(&input, &out),
        Command::Evaluate(a) => cmd_evaluate(&cli.config, a),
        Command::Correlate(a) => cmd_correlate(a),
        Command::ReviewServe(a) => cmd_review_serve(a),
        Command::ServeMocks { fixtures, host, port } => cmd_serve_mocks(fixtures, &host, port),
    }
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_records<T: Serialize>(path: &Path, items: &[T]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_jsonl(path, items).with_context(|| format!("writing {}", path.display()))
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_pairs(cfg: &PipelineConfig, path: &Path) -> anyhow::Result<Vec<AlignedPair>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if looks_like_manifest(&text) {
        let m = parse_manifest(&text).with_context(|| format!("manifest {}", path.display()))?;
        let llm = match cfg.backend(BackendRole::Llm) {
            Ok(c) => Some(build_llm(&c, &cfg.base_dir)?),
            Err(_) => None,
        };
        Ok(ingest(m, &cfg.generator()?, llm.as_deref())?)
    } else {
        Ok(parse_jsonl(&text).with_context(|| format!("pairs {}", path.display()))?)
    }
}

fn cmd_ingest(config: &Option<PathBuf>, manifest: &Path, out: &Path) -> CliResult {
    let cfg = match config {
        Some(_) => load_config(config)?,
        None => PipelineConfig::default(),
    };
    let pairs = load_pairs(&cfg, manifest)?;
    write_records(out, &pairs)?;
    eprintln!("ingested {} pair(s)", pairs.len());
    Ok(())
}

fn cmd_generate(config: &Option<PathBuf>, a: GenerateArgs) -> CliResult {
    let cfg = load_config(config)?;
    let input = match (&a.input, &cfg.input) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => cfg.resolve(p),
        (None, None) => return Err(anyhow!("no --input given and no `input` in config").into()),
    };
    let pairs = load_pairs(&cfg, &input)?;
    let llm = build_llm(&cfg.backend(BackendRole::Llm)?, &cfg.base_dir).map_err(anyhow::Error::from)?;
    let nli = build_nli(&cfg.backend(BackendRole::Nli)?, &cfg.base_dir).map_err(anyhow::Error::from)?;
    let grounding = build_grounding(&cfg.backend(BackendRole::Grounding)?, &cfg.base_dir).map_err(anyhow::Error::from)?;
    let tagger = LexiconTagger::default();
    let settings = PipelineSettings {
        generator: cfg.generator()?,
        thresholds: cfg.thresholds,
        grounding: cfg.grounding,
        seed: a.seed.unwrap_or(cfg.sampling_seed),
        negatives_per_pair: a.negatives_per_pair.unwrap_or(cfg.generation.negatives_per_pair).max(1),
        workers: a.workers.unwrap_or(cfg.concurrency.workers).max(1),
        lexicon: tagger.lexicon().clone(),
    };
    let backends = PipelineBackends { llm: &*llm, nli: &*nli, grounding: &*grounding, tagger: &tagger };
    let (records, stats) = run_pipeline(&pairs, &settings, &backends).map_err(|e| anyhow!(e))?;
    write_records(&a.out, &records)?;
    write_text(&sidecar(&a.out, ".stats.json"), &(serde_json::to_string_pretty(&stats).map_err(anyhow::Error::from)? + "\n"))?;
    eprintln!("emitted {} of {} ({} failed)", stats.emitted, stats.input, stats.failures());
    if stats.input > 0 && stats.failures() as f64 / stats.input as f64 > a.fail_threshold {
        return Err(failed(anyhow!(
            "{} of {} attempts failed, above --fail-threshold {}",
            stats.failures(),
            stats.input,
            a.fail_threshold
        )));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ValidateInput {
    id: String,
    original: String,
    contradiction: String,
    feedback: String,
}

fn cmd_validate(config: &Option<PathBuf>, input: &Path, out: &Path) -> CliResult {
    let cfg = load_config(config)?;
    let nli = build_nli(&cfg.backend(BackendRole::Nli)?, &cfg.base_dir).map_err(anyhow::Error::from)?;
    let rows: Vec<ValidateInput> = read_jsonl(input).with_context(|| format!("reading {}", input.display()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.concurrency.workers).build().map_err(|e| anyhow!(e))?;
    use rayon::prelude::*;
    let results: Vec<Value> = pool.install(|| {
        rows.par_iter()
            .map(|r| match score_record(&r.original, &r.contradiction, &r.feedback, &*nli) {
                Ok(s) => json!({
                    "id": r.id,
                    "contradiction_score": s.contradiction_score,
                    "feedback_score": s.feedback_score,
                    "verdict": s.verdict(cfg.thresholds),
                }),
                Err(e) => json!({ "id": r.id, "error": e.to_string() }),
            })
            .collect()
    });
    let errors = results.iter().filter(|v| v.get("error").is_some()).count();
    write_records(out, &results)?;
    if errors > 0 {
        return Err(failed(anyhow!("{errors} of {} record(s) could not be scored", results.len())));
    }
    Ok(())
}

fn scores_of(v: &Value) -> Option<(f64, f64)> {
    let src = v.get("validation").unwrap_or(v);
    Some((src.get("contradiction_score")?.as_f64()?, src.get("feedback_score")?.as_f64()?))
}

fn cmd_sweep(input: &Path, out: &Path, steps: u32) -> CliResult {
    if steps == 0 {
        return Err(anyhow!("--steps must be at least 1").into());
    }
    let rows: Vec<Value> = read_jsonl(input).with_context(|| format!("reading {}", input.display()))?;
    let scored: Vec<(f64, f64)> = rows.iter().filter_map(scores_of).collect();
    let grid = unit_grid(steps);
    let m = sweep_thresholds(&scored, &grid, &grid).map_err(anyhow::Error::from)?;
    write_text(out, &heatmap_csv(&grid, &grid, &m))?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct GroundInput {
    id: String,
    image: ImageRef,
    #[serde(default)]
    labels: Vec<String>,
    #[serde(default)]
    label: Option<String>,
}

fn cmd_ground(config: &Option<PathBuf>, input: &Path, out: &Path, fail_threshold: f64) -> CliResult {
    let cfg = load_config(config)?;
    let g = build_grounding(&cfg.backend(BackendRole::Grounding)?, &cfg.base_dir).map_err(anyhow::Error::from)?;
    let rows: Vec<GroundInput> = read_jsonl(input).with_context(|| format!("reading {}", input.display()))?;
    let mut errors = 0usize;
    let results: Vec<Value> = rows
        .iter()
        .map(|r| {
            let mut labels = r.labels.clone();
            labels.extend(r.label.clone());
            match ground_labels(&labels, &r.image, &*g, cfg.grounding) {
                Ok(v) => json!({ "id": r.id, "visual": v }),
                Err(e) => {
                    errors += 1;
                    json!({ "id": r.id, "error": e.to_string() })
                }
            }
        })
        .collect();
    write_records(out, &results)?;
    if !rows.is_empty() && errors as f64 / rows.len() as f64 > fail_threshold {
        return Err(failed(anyhow!("{errors} of {} grounding request(s) failed", rows.len())));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrainExample<'a> {
    id: &'a str,
    image: &'a ImageRef,
    caption: &'a str,
    target: String,
}

fn cmd_export(input: &Path, out: &Path) -> CliResult {
    let recs: Vec<TrainingRecord> = read_jsonl(input).with_context(|| format!("reading {}", input.display()))?;
    let examples = recs
        .iter()
        .map(|r| {
            Ok(TrainExample {
                id: &r.id,
                image: &r.image,
                caption: &r.negative_caption,
                target: render_target(&r.feedback, &r.misalignment_in_text, &r.visual)
                    .with_context(|| format!("record {}", r.id))?,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    write_records(out, &examples)?;
    Ok(())
}

fn cmd_evaluate(config: &Option<PathBuf>, a: EvaluateArgs) -> CliResult {
    let cfg = load_config(config)?;
    let vlm = build_vlm(&cfg.backend(BackendRole::Vlm)?, &cfg.base_dir).map_err(anyhow::Error::from)?;
    let nli = build_nli(&cfg.backend(BackendRole::Nli)?, &cfg.base_dir).map_err(anyhow::Error::from)?;
    let grounding = match cfg.backend(BackendRole::Grounding) {
        Ok(c) => build_grounding(&c, &cfg.base_dir).map_err(anyhow::Error::from)?,
        Err(e) if a.mode == EvalMode::TwoStep => return Err(e.into()),
        Err(_) => Arc::new(misalign_core::mock::MockGrounding::default()),
    };
    let instances: Vec<BenchmarkInstance> =
        read_jsonl(&a.instances).with_context(|| format!("reading {}", a.instances.display()))?;
    for i in &instances {
        i.validate().with_context(|| format!("instance {}", i.id))?;
    }
    let eval_cfg = EvalConfig {
        mode: a.mode,
        queries: cfg.queries.clone(),
        iou_threshold: cfg.eval.iou_threshold,
        label_aware: a.label_aware || cfg.eval.label_aware,
        grounding: cfg.grounding,
    };
    let backends = Backends { vlm: &*vlm, nli: &*nli, grounding: &*grounding };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.concurrency.workers).build().map_err(|e| anyhow!(e))?;
    let result = pool.install(|| evaluate_model(&instances, &backends, &eval_cfg));
    let csv_path = a.csv.clone().unwrap_or_else(|| a.out.with_extension("csv"));
    match result {
        Ok(report) => {
            write_text(&a.out, &(serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)? + "\n"))?;
            write_text(&csv_path, &report.to_csv())?;
            Ok(())
        }
        Err(fail) => {
            let errors: Vec<Value> = fail.errors.iter().map(|(id, m)| json!({ "id": id, "error": m })).collect();
            let dump = json!({
                "per_instance": fail.partial.per_instance,
                "aggregate": fail.partial.aggregate,
                "errors": errors,
                "partial": true,
            });
            write_text(&a.out, &(serde_json::to_string_pretty(&dump).map_err(anyhow::Error::from)? + "\n"))?;
            write_text(&csv_path, &fail.partial.to_csv())?;
            Err(failed(anyhow!("evaluation incomplete: {fail}; partial report written to {}", a.out.display())))
        }
    }
}

fn metric_column(report: &MetricReport, metric: &str) -> anyhow::Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for r in &report.per_instance {
        let v = match metric {
            "feedback_nli" => r.feedback_nli,
            "text_nli" => r.text_nli,
            "visual_f1" => r.visual_f1,
            "binary_correct" => Some(if r.binary_correct { 1.0 } else { 0.0 }),
            other => bail!("unknown metric {other:?}; expected feedback_nli, text_nli, visual_f1 or binary_correct"),
        };
        if let Some(v) = v {
            out.insert(r.id.clone(), v);
        }
    }
    Ok(out)
}

fn cmd_correlate(a: CorrelateArgs) -> CliResult {
    let text = fs::read_to_string(&a.report).with_context(|| format!("reading {}", a.report.display()))?;
    let report: MetricReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", a.report.display()))?;
    let scores = metric_column(&report, &a.metric)?;
    let agreements: Vec<HumanAgreement> = match (&a.agreements, &a.review_log, &a.instances) {
        (Some(p), _, _) => read_jsonl(p).with_context(|| format!("reading {}", p.display()))?,
        (None, Some(log), Some(inst)) => {
            let instances: Vec<BenchmarkInstance> = read_jsonl(inst).with_context(|| format!("reading {}", inst.display()))?;
            ReviewStore::open(instances, log, None).map_err(anyhow::Error::from)?.agreements()
        }
        _ => return Err(anyhow!("give --agreements or --review-log with --instances").into()),
    };
    // Only instances that have a score for this metric take part.
    let agreements: Vec<HumanAgreement> = agreements.into_iter().filter(|h| scores.contains_key(&h.instance_id)).collect();
    let c = correlate(&agreements, a.question, &scores).map_err(anyhow::Error::from)?;
    write_text(&a.out, &c.to_csv())?;
    eprintln!("spearman {} ({})", c.spearman, if c.spearman_defined { "defined" } else { "undefined" });
    Ok(())
}

fn bind_addr(host: &str, port: u16) -> anyhow::Result<SocketAddr> {
    format!("{host}:{port}").parse().with_context(|| format!("bad address {host}:{port}"))
}

fn announce(addr: SocketAddr) {
    println!("listening on http://{addr}");
    let _ = std::io::stdout().flush();
}

fn cmd_review_serve(a: ReviewServeArgs) -> CliResult {
    let instances: Vec<BenchmarkInstance> =
        read_jsonl(&a.instances).with_context(|| format!("reading {}", a.instances.display()))?;
    let raters = a.raters.map(|v| v.into_iter().filter(|r| !r.is_empty()).collect::<BTreeSet<_>>());
    let store = Arc::new(ReviewStore::open(instances, &a.log, raters).map_err(anyhow::Error::from)?);
    let addr = bind_addr(&a.host, a.port)?;
    let rt = tokio::runtime::Runtime::new().map_err(anyhow::Error::from)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        announce(listener.local_addr().map_err(anyhow::Error::from)?);
        misalign_review::api::serve(listener, store, a.ui, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| failed(e.into()))
    })
}

fn cmd_serve_mocks(fixtures: Option<PathBuf>, host: &str, port: u16) -> CliResult {
    let fx = match fixtures {
        Some(p) => MockFixtures::load(&p).map_err(|m| anyhow!("{}: {m}", p.display()))?,
        None => MockFixtures::default(),
    };
    let server = MockServer::spawn(&fx, bind_addr(host, port)?).map_err(anyhow::Error::from)?;
    announce(server.addr);
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().map_err(anyhow::Error::from)?;
    rt.block_on(async {
        let _ = tokio::signal::ctrl_c().await;
    });
    drop(server);
    Ok(())
}
