//! Line-oriented run traces (`seki-trace/1`).
//!
//! Every line is a JSON object `{"kind": ..., "data": {...}, "meta": {...}}`.
//! `kind` and `data` form the canonical part compared by replay; `meta` holds
//! wall-clock information and is ignored by comparisons. The first line is the
//! `config` record, followed by one `iteration` record per evaluated
//! architecture (iteration 0 is the initial architecture) and a closing
//! `final` record. See `docs/trace-format.md`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::evaluator::Fitness;
use crate::repository::{KnowledgeRepository, Phase, ScoredEntry};
use crate::space::{describe_space, parse_architecture};

use super::config::SearchConfig;

pub const TRACE_FORMAT: &str = "seki-trace/1";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace {path} unreadable: {reason}")]
    TraceUnreadable { path: String, reason: String },
    #[error("cannot write trace {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub config: SearchConfig,
    pub extension_mode: bool,
}

/// Which LLM call an event belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Strategy,
    Architecture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    /// The reply could not be used; the prompt was re-sent with a reminder.
    ParseRetry { stage: Stage, attempt: u32, error: String },
    /// Retries exhausted: a random architecture was substituted.
    FallbackRandom { attempts: u32, error: String },
    /// Retries exhausted for the strategy: a generic strategy was substituted.
    FallbackStrategy { attempts: u32 },
    /// An inspiration reply reproduced one of its exemplars.
    DuplicateOfExemplar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseOutcome {
    /// No model call involved (initial architecture, baselines).
    Direct,
    /// Parsed from the model's reply after `attempts` calls.
    Parsed { attempts: u32 },
    /// Replaced by a random architecture after `attempts` failed calls.
    Fallback { attempts: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub phase: Phase,
    /// Architectures the iteration started from (anchor or exemplars).
    pub inputs: Vec<String>,
    pub prompt_digests: Vec<String>,
    pub raw_responses: Vec<String>,
    pub strategy: Option<String>,
    pub outcome: ParseOutcome,
    pub arch: String,
    pub fitness: Fitness,
    pub was_duplicate: bool,
    pub best_so_far: f64,
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    pub best_arch: String,
    pub best_fitness: Fitness,
    pub best_iteration: u32,
    pub evaluations: u64,
    pub unique_architectures: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unix_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command_line: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace {
    pub header: TraceHeader,
    pub records: Vec<IterationRecord>,
    pub final_record: FinalRecord,
    pub header_meta: Meta,
    pub record_meta: Vec<Meta>,
    pub final_meta: Meta,
}

fn line(kind: &str, data: Value) -> Value {
    json!({ "kind": kind, "data": data })
}

impl SearchTrace {
    /// Canonical JSON of each line, in file order, with `meta` removed.
    pub fn canonical_values(&self) -> Vec<Value> {
        let mut out = Vec::with_capacity(self.records.len() + 2);
        out.push(line(
            "config",
            serde_json::to_value(&self.header).expect("header serializes"),
        ));
        for r in &self.records {
            out.push(line("iteration", serde_json::to_value(r).expect("record serializes")));
        }
        out.push(line(
            "final",
            serde_json::to_value(&self.final_record).expect("final serializes"),
        ));
        out
    }

    pub fn canonical_lines(&self) -> Vec<String> {
        self.canonical_values().iter().map(Value::to_string).collect()
    }

    /// Canonical trace as bytes; equal for runs with equal configuration.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut s = self.canonical_lines().join("\n");
        s.push('\n');
        s.into_bytes()
    }

    pub fn to_jsonl(&self) -> String {
        let blank = Meta::default();
        let metas = std::iter::once(&self.header_meta)
            .chain(
                self.record_meta
                    .iter()
                    .chain(std::iter::repeat(&blank))
                    .take(self.records.len()),
            )
            .chain(std::iter::once(&self.final_meta));
        let mut out = String::new();
        for (mut value, meta) in self.canonical_values().into_iter().zip(metas) {
            value["meta"] = serde_json::to_value(meta).expect("meta serializes");
            out.push_str(&value.to_string());
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), TraceError> {
        let err = |source| TraceError::Write {
            path: path.display().to_string(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(err)?);
        w.write_all(self.to_jsonl().as_bytes()).map_err(err)?;
        w.flush().map_err(err)
    }

    pub fn read(path: &Path) -> Result<Self, TraceError> {
        let unreadable = |reason: String| TraceError::TraceUnreadable {
            path: path.display().to_string(),
            reason,
        };
        let file = File::open(path).map_err(|e| unreadable(e.to_string()))?;
        let mut lines = Vec::new();
        for (i, l) in BufReader::new(file).lines().enumerate() {
            let l = l.map_err(|e| unreadable(e.to_string()))?;
            if l.trim().is_empty() {
                continue;
            }
            let v: Value = serde_json::from_str(&l).map_err(|e| unreadable(format!("line {}: {e}", i + 1)))?;
            lines.push((i + 1, v));
        }
        Self::from_values(lines).map_err(unreadable)
    }

    fn from_values(lines: Vec<(usize, Value)>) -> Result<Self, String> {
        fn part<T: for<'de> Deserialize<'de>>(line: usize, v: &Value, kind: &str) -> Result<(T, Meta), String> {
            if v["kind"] != kind {
                return Err(format!("line {line}: expected `{kind}` record, found {}", v["kind"]));
            }
            let data = serde_json::from_value(v["data"].clone()).map_err(|e| format!("line {line}: {e}"))?;
            let meta = match v.get("meta") {
                Some(m) => serde_json::from_value(m.clone()).map_err(|e| format!("line {line}: {e}"))?,
                None => Meta::default(),
            };
            Ok((data, meta))
        }
        if lines.len() < 2 {
            return Err("trace needs a config and a final record".into());
        }
        let (header, header_meta): (TraceHeader, Meta) = part(lines[0].0, &lines[0].1, "config")?;
        if header.format != TRACE_FORMAT {
            return Err(format!("unsupported trace format `{}`", header.format));
        }
        let (fl, fv) = &lines[lines.len() - 1];
        let (final_record, final_meta) = part(*fl, fv, "final")?;
        let mut records = Vec::new();
        let mut record_meta = Vec::new();
        for (l, v) in &lines[1..lines.len() - 1] {
            let (r, m) = part(*l, v, "iteration")?;
            records.push(r);
            record_meta.push(m);
        }
        Ok(Self {
            header,
            records,
            final_record,
            header_meta,
            record_meta,
            final_meta,
        })
    }

    /// Rebuilds the knowledge repository by re-inserting every record.
    pub fn rebuild_repository(&self) -> Result<KnowledgeRepository, String> {
        let space = describe_space(self.header.config.space);
        let mut repo = KnowledgeRepository::new();
        for r in &self.records {
            let arch = parse_architecture(space, &r.arch).map_err(|e| format!("iteration {}: {e}", r.iteration))?;
            repo.insert(ScoredEntry {
                arch,
                fitness: r.fitness.clone(),
                iteration: r.iteration,
                phase: r.phase,
            });
        }
        Ok(repo)
    }

    /// Records of iterations `1..=n` (everything but the initial architecture).
    pub fn iteration_records(&self) -> impl Iterator<Item = &IterationRecord> {
        self.records.iter().filter(|r| r.phase != Phase::Init)
    }
}
