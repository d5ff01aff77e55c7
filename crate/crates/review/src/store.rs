use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use misalign_core::eval::{HumanAgreement, Question};
use misalign_core::model::ReviewStatus;
use misalign_core::BenchmarkInstance;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Raters needed before an instance can be accepted.
pub const RATERS_PER_INSTANCE: usize = 3;

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("unknown rater {0:?}")]
    UnknownRater(String),
    #[error("unknown instance {0:?}")]
    UnknownInstance(String),
    #[error("invalid verdict: {0}")]
    InvalidVerdict(String),
    #[error("duplicate instance id {0:?}")]
    DuplicateInstance(String),
    #[error("verdict log {path}: line {line}: {message}")]
    CorruptLog { path: PathBuf, line: usize, message: String },
    #[error("verdict log {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// One rater's answers for one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewVerdict {
    pub instance_id: String,
    pub rater_id: String,
    pub feedback_ok: bool,
    pub text_ok: bool,
    pub visual_ok: bool,
    /// Milliseconds since the Unix epoch; filled in on submission when zero.
    #[serde(default)]
    pub submitted_at: u64,
}

impl ReviewVerdict {
    pub fn answer(&self, q: Question) -> bool {
        match q {
            Question::Feedback => self.feedback_ok,
            Question::Text => self.text_ok,
            Question::Visual => self.visual_ok,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct YesCounts {
    pub feedback: usize,
    pub text: usize,
    pub visual: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewAggregate {
    pub instance_id: String,
    pub n_raters: usize,
    pub yes_counts: YesCounts,
    pub unanimous_all_yes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Export {
    pub instances: Vec<BenchmarkInstance>,
    pub accepted: usize,
    pub total: usize,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub question: Question,
    /// Instance counts at 0, 1, 2 and 3 yes votes.
    pub levels: [usize; 4],
    pub complete: usize,
    /// Instances without exactly three verdicts, left out of `levels`.
    pub excluded_partial: usize,
}

pub fn aggregate(instance_id: &str, verdicts: &BTreeMap<String, ReviewVerdict>) -> ReviewAggregate {
    let mut yes = YesCounts::default();
    for v in verdicts.values() {
        yes.feedback += usize::from(v.feedback_ok);
        yes.text += usize::from(v.text_ok);
        yes.visual += usize::from(v.visual_ok);
    }
    let n = verdicts.len();
    ReviewAggregate {
        instance_id: instance_id.to_string(),
        n_raters: n,
        yes_counts: yes,
        unanimous_all_yes: n >= RATERS_PER_INSTANCE && yes.feedback == n && yes.text == n && yes.visual == n,
    }
}

struct State {
    /// Effective verdicts by instance index, keyed by rater.
    verdicts: Vec<BTreeMap<String, ReviewVerdict>>,
    log: File,
}

/// Instances under review plus the verdict log that backs them.
pub struct ReviewStore {
    instances: Vec<BenchmarkInstance>,
    index: HashMap<String, usize>,
    raters: Option<BTreeSet<String>>,
    log_path: PathBuf,
    state: Mutex<State>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl ReviewStore {
    /// Opens (or creates) the log and replays it. A torn final line, left by a
    /// crash mid-write, is dropped and truncated away. `raters = None` admits
    /// any non-empty rater id.
    pub fn open(
        instances: Vec<BenchmarkInstance>,
        log_path: &Path,
        raters: Option<BTreeSet<String>>,
    ) -> Result<Self, ReviewError> {
        let io_err = |source| ReviewError::Io { path: log_path.to_path_buf(), source };
        let mut index = HashMap::new();
        for (i, inst) in instances.iter().enumerate() {
            if index.insert(inst.id.clone(), i).is_some() {
                return Err(ReviewError::DuplicateInstance(inst.id.clone()));
            }
        }
        let text = match fs::read(log_path) {
            Ok(b) => String::from_utf8_lossy(&b).into_owned(),
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io_err(e)),
        };
        let mut verdicts = vec![BTreeMap::new(); instances.len()];
        let mut valid_len = 0usize;
        let mut offset = 0usize;
        let lines: Vec<&str> = text.split_inclusive('\n').collect();
        for (n, raw) in lines.iter().enumerate() {
            offset += raw.len();
            let line = raw.trim();
            let last = n + 1 == lines.len();
            if line.is_empty() {
                valid_len = offset;
                continue;
            }
            let v: ReviewVerdict = match serde_json::from_str(line) {
                Ok(v) => v,
                Err(_) if last && !raw.ends_with('\n') => {
                    tracing::warn!(path = %log_path.display(), "dropping torn final log line");
                    break;
                }
                Err(e) => {
                    return Err(ReviewError::CorruptLog { path: log_path.to_path_buf(), line: n + 1, message: e.to_string() })
                }
            };
            let Some(&i) = index.get(&v.instance_id) else {
                return Err(ReviewError::CorruptLog {
                    path: log_path.to_path_buf(),
                    line: n + 1,
                    message: format!("unknown instance {:?}", v.instance_id),
                });
            };
            verdicts[i].insert(v.rater_id.clone(), v);
            valid_len = offset;
        }
        if let Some(dir) = log_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err)?;
        }
        let log = OpenOptions::new().create(true).append(true).open(log_path).map_err(io_err)?;
        if valid_len < text.len() {
            log.set_len(valid_len as u64).map_err(io_err)?;
        } else if !text.is_empty() && !text.ends_with('\n') {
            (&log).write_all(b"\n").map_err(io_err)?;
        }
        Ok(Self {
            instances,
            index,
            raters,
            log_path: log_path.to_path_buf(),
            state: Mutex::new(State { verdicts, log }),
        })
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    pub fn instances(&self) -> &[BenchmarkInstance] {
        &self.instances
    }

    pub fn instance(&self, id: &str) -> Option<&BenchmarkInstance> {
        self.index.get(id).map(|&i| &self.instances[i])
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn check_rater(&self, rater: &str) -> Result<(), ReviewError> {
        let known = match &self.raters {
            Some(set) => set.contains(rater),
            None => !rater.trim().is_empty(),
        };
        if known {
            Ok(())
        } else {
            Err(ReviewError::UnknownRater(rater.to_string()))
        }
    }

    /// The unjudged instance with the fewest verdicts (first in input order
    /// on ties), among those still short of three raters.
    pub fn assign_next(&self, rater: &str) -> Result<Option<&BenchmarkInstance>, ReviewError> {
        self.check_rater(rater)?;
        let st = self.lock();
        let best = st
            .verdicts
            .iter()
            .enumerate()
            .filter(|(_, v)| v.len() < RATERS_PER_INSTANCE && !v.contains_key(rater))
            .min_by_key(|(i, v)| (v.len(), *i))
            .map(|(i, _)| &self.instances[i]);
        Ok(best)
    }

    /// Appends the verdict to the log (flushed to disk) and returns the new
    /// aggregate. A repeat from the same rater replaces the earlier one.
    pub fn submit_verdict(&self, mut v: ReviewVerdict) -> Result<ReviewAggregate, ReviewError> {
        self.check_rater(&v.rater_id)?;
        let &i = self.index.get(&v.instance_id).ok_or_else(|| ReviewError::UnknownInstance(v.instance_id.clone()))?;
        if v.submitted_at == 0 {
            v.submitted_at = now_ms();
        }
        let mut line = serde_json::to_string(&v).map_err(|e| ReviewError::InvalidVerdict(e.to_string()))?;
        line.push('\n');
        let mut st = self.lock();
        let io_err = |source| ReviewError::Io { path: self.log_path.clone(), source };
        st.log.write_all(line.as_bytes()).map_err(io_err)?;
        st.log.sync_data().map_err(io_err)?;
        st.verdicts[i].insert(v.rater_id.clone(), v);
        Ok(aggregate(&self.instances[i].id, &st.verdicts[i]))
    }

    pub fn aggregate_for(&self, id: &str) -> Result<ReviewAggregate, ReviewError> {
        let &i = self.index.get(id).ok_or_else(|| ReviewError::UnknownInstance(id.to_string()))?;
        Ok(aggregate(id, &self.lock().verdicts[i]))
    }

    /// Aggregates for every instance, in input order.
    pub fn aggregates(&self) -> Vec<ReviewAggregate> {
        let st = self.lock();
        self.instances.iter().zip(&st.verdicts).map(|(inst, v)| aggregate(&inst.id, v)).collect()
    }

    pub fn verdict_count(&self) -> usize {
        self.lock().verdicts.iter().map(BTreeMap::len).sum()
    }

    /// Unanimously approved instances, marked accepted.
    pub fn export_benchmark(&self) -> Export {
        let aggs = self.aggregates();
        let instances: Vec<BenchmarkInstance> = self
            .instances
            .iter()
            .zip(&aggs)
            .filter(|(_, a)| a.unanimous_all_yes)
            .map(|(inst, _)| BenchmarkInstance { review_status: ReviewStatus::Accepted, ..inst.clone() })
            .collect();
        let total = self.instances.len();
        let accepted = instances.len();
        let acceptance_rate = if total == 0 { 0.0 } else { accepted as f64 / total as f64 };
        Export { instances, accepted, total, acceptance_rate }
    }

    /// Every instance with its review status decided from the verdicts.
    pub fn statuses(&self) -> Vec<(String, ReviewStatus)> {
        self.aggregates()
            .into_iter()
            .map(|a| {
                let s = if a.unanimous_all_yes { ReviewStatus::Accepted } else { ReviewStatus::Rejected };
                (a.instance_id, s)
            })
            .collect()
    }

    pub fn agreement_histogram(&self, q: Question) -> Histogram {
        let st = self.lock();
        let mut h = Histogram { question: q, levels: [0; 4], complete: 0, excluded_partial: 0 };
        for v in &st.verdicts {
            if v.len() == RATERS_PER_INSTANCE {
                h.levels[v.values().filter(|x| x.answer(q)).count()] += 1;
                h.complete += 1;
            } else if !v.is_empty() {
                h.excluded_partial += 1;
            }
        }
        if h.complete == 0 {
            tracing::warn!(question = ?q, "no instance has exactly three verdicts");
        }
        h
    }

    /// Per-question yes counts for instances with exactly three verdicts.
    pub fn agreements(&self) -> Vec<HumanAgreement> {
        let st = self.lock();
        self.instances
            .iter()
            .zip(&st.verdicts)
            .filter(|(_, v)| v.len() == RATERS_PER_INSTANCE)
            .map(|(inst, v)| {
                let count = |q| v.values().filter(|x| x.answer(q)).count() as u8;
                HumanAgreement {
                    instance_id: inst.id.clone(),
                    feedback: count(Question::Feedback),
                    text: count(Question::Text),
                    visual: count(Question::Visual),
                }
            })
            .collect()
    }
}
