//! Scoring oracles: tabular benchmark lookups and a seeded synthetic surrogate.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::mix64;
use crate::space::{
    describe_space, enumerate_space, parse_architecture, Architecture, SpaceDescriptor, SpaceError, SpaceId,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("architecture not in table: {0}")]
    ArchitectureNotInTable(String),
    #[error("space mismatch: oracle scores `{expected}`, got `{got}`")]
    SpaceMismatch { expected: SpaceId, got: SpaceId },
    #[error("search space `{0}` is not enumerable")]
    NotEnumerable(SpaceId),
    #[error("cannot read {path}: {source}")]
    FileError {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error at line {line}: {reason}")]
    SchemaError { line: usize, reason: String },
    #[error("invalid architecture key at line {line}: {reason}")]
    InvalidArchKey { line: usize, reason: SpaceError },
    #[error("unknown metric `{metric}`; table has [{available}]")]
    UnknownMetric { metric: String, available: String },
    #[error("invalid surrogate parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    pub fn phrase(self) -> &'static str {
        match self {
            Direction::Maximize => "higher is better",
            Direction::Minimize => "lower is better",
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "max" => Some(Direction::Maximize),
            "min" => Some(Direction::Minimize),
            _ => None,
        }
    }
}

/// A score normalised so that larger `oriented_value` is always better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fitness {
    pub oriented_value: f64,
    pub raw_metric: f64,
    pub metric_name: String,
    pub direction: Direction,
}

impl Fitness {
    pub fn new(raw_metric: f64, metric_name: impl Into<String>, direction: Direction) -> Self {
        let oriented_value = match direction {
            Direction::Maximize => raw_metric,
            Direction::Minimize => -raw_metric,
        };
        Self {
            oriented_value,
            raw_metric,
            metric_name: metric_name.into(),
            direction,
        }
    }
}

impl fmt::Display for Fitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.2} ({}, {})",
            self.raw_metric,
            self.metric_name,
            self.direction.phrase()
        )
    }
}

pub trait Oracle: Send + Sync {
    fn space_id(&self) -> SpaceId;

    fn evaluate(&self, arch: &Architecture) -> Result<Fitness, EvalError>;

    fn describe(&self) -> String;

    fn check_space(&self, arch: &Architecture) -> Result<(), EvalError> {
        if arch.space_id() == self.space_id() {
            Ok(())
        } else {
            Err(EvalError::SpaceMismatch {
                expected: self.space_id(),
                got: arch.space_id(),
            })
        }
    }
}

pub type EvaluatorHandle = Arc<dyn Oracle>;

pub fn evaluate(oracle: &dyn Oracle, arch: &Architecture) -> Result<Fitness, EvalError> {
    oracle.evaluate(arch)
}

/// Wraps an oracle and counts every `evaluate` call.
pub struct CountingOracle {
    inner: EvaluatorHandle,
    calls: AtomicU64,
}

impl CountingOracle {
    pub fn new(inner: EvaluatorHandle) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Oracle for CountingOracle {
    fn space_id(&self) -> SpaceId {
        self.inner.space_id()
    }

    fn evaluate(&self, arch: &Architecture) -> Result<Fitness, EvalError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.evaluate(arch)
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

// ---------------------------------------------------------------------------
// Surrogate

/// Tag of the surrogate weight stream. Bump when the derivation changes.
pub const SURROGATE_STREAM: &str = "seki-surrogate-v1";
pub const SURROGATE_METRIC: &str = "surrogate_score";

const KIND_UNARY: u64 = 1;
const KIND_PAIR: u64 = 2;

/// Counter-based uniform draw in `[0, 1)` keyed by `words`.
///
/// The state starts from the FNV-1a hash of [`SURROGATE_STREAM`] and absorbs
/// one key word at a time through the splitmix64 finaliser; the top 53 bits of
/// the result become the mantissa. No state is carried between draws, so a
/// weight depends only on its key.
pub fn keyed_uniform(words: &[u64]) -> f64 {
    let mut h = mix64(crate::rng::fnv1a(SURROGATE_STREAM.as_bytes()));
    for &w in words {
        h = mix64(h ^ w);
    }
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Synthetic additive-plus-pairwise objective over the decision variables of
/// a space:
///
/// `score = sum_s w[s][x_s] + beta * sum_{s < t} v[s, x_s, t, x_t]`
///
/// with every weight in `[0, 1)` drawn from [`keyed_uniform`] keyed by
/// `(space, seed, kind, s, x_s[, t, x_t])`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub space_id: SpaceId,
    pub seed: u64,
    pub beta: f64,
    cards: Vec<usize>,
    unary: Vec<Vec<f64>>,
    /// One table per `(s, t)` pair with `s < t`, row-major over `(x_s, x_t)`.
    pair: Vec<Vec<f64>>,
}

pub fn build_surrogate(space: &SpaceDescriptor, seed: u64, beta: f64) -> Result<SurrogateModel, EvalError> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(EvalError::InvalidParameter(format!(
            "beta must be finite and >= 0, got {beta}"
        )));
    }
    let code = space.space_id.code();
    let cards = space.decision_cardinalities();
    let unary = cards
        .iter()
        .enumerate()
        .map(|(s, &c)| {
            (0..c)
                .map(|x| keyed_uniform(&[code, seed, KIND_UNARY, s as u64, x as u64]))
                .collect()
        })
        .collect();
    let mut pair = Vec::new();
    for s in 0..cards.len() {
        for t in s + 1..cards.len() {
            let mut table = Vec::with_capacity(cards[s] * cards[t]);
            for xs in 0..cards[s] {
                for xt in 0..cards[t] {
                    table.push(keyed_uniform(&[
                        code, seed, KIND_PAIR, s as u64, xs as u64, t as u64, xt as u64,
                    ]));
                }
            }
            pair.push(table);
        }
    }
    Ok(SurrogateModel {
        space_id: space.space_id,
        seed,
        beta,
        cards,
        unary,
        pair,
    })
}

impl SurrogateModel {
    pub fn unary_weight(&self, slot: usize, value: usize) -> f64 {
        self.unary[slot][value]
    }

    /// `v[s, xs, t, xt]`; requires `s < t`.
    pub fn pair_weight(&self, s: usize, xs: usize, t: usize, xt: usize) -> f64 {
        assert!(s < t, "pair weights are indexed with s < t");
        let n = self.cards.len();
        // Pairs are laid out row by row: (0,1), (0,2), ..., (1,2), ...
        let idx = s * n - s * (s + 1) / 2 + (t - s - 1);
        self.pair[idx][xs * self.cards[t] + xt]
    }

    pub fn unary_table(&self) -> &[Vec<f64>] {
        &self.unary
    }

    pub fn pair_tables(&self) -> &[Vec<f64>] {
        &self.pair
    }

    pub fn score(&self, decisions: &[usize]) -> f64 {
        let unary: f64 = decisions.iter().enumerate().map(|(s, &x)| self.unary[s][x]).sum();
        if self.beta == 0.0 {
            return unary;
        }
        let mut pairs = 0.0;
        let mut idx = 0;
        for s in 0..decisions.len() {
            for t in s + 1..decisions.len() {
                pairs += self.pair[idx][decisions[s] * self.cards[t] + decisions[t]];
                idx += 1;
            }
        }
        unary + self.beta * pairs
    }
}

impl Oracle for SurrogateModel {
    fn space_id(&self) -> SpaceId {
        self.space_id
    }

    fn evaluate(&self, arch: &Architecture) -> Result<Fitness, EvalError> {
        self.check_space(arch)?;
        Ok(Fitness::new(
            self.score(&arch.decisions()),
            SURROGATE_METRIC,
            Direction::Maximize,
        ))
    }

    fn describe(&self) -> String {
        format!("surrogate({}, seed={}, beta={})", self.space_id, self.seed, self.beta)
    }
}

// ---------------------------------------------------------------------------
// Tabular benchmarks

pub const TABULAR_MAGIC: &str = "seki-tabular v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricColumn {
    pub name: String,
    pub direction: Direction,
}

/// Precomputed architecture -> metrics table.
#[derive(Debug, Clone)]
pub struct TabularBenchmark {
    pub space_id: SpaceId,
    pub columns: Vec<MetricColumn>,
    rows: HashMap<String, Vec<f64>>,
}

impl TabularBenchmark {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, metric: &str) -> Result<usize, EvalError> {
        self.columns
            .iter()
            .position(|c| c.name == metric)
            .ok_or_else(|| EvalError::UnknownMetric {
                metric: metric.to_string(),
                available: self
                    .columns
                    .iter()
                    .map(|c| c.name.as_str())
                    .collect::<Vec<_>>()
                    .join(", "),
            })
    }

    pub fn row(&self, canonical_text: &str) -> Option<&[f64]> {
        self.rows.get(canonical_text).map(Vec::as_slice)
    }

    /// Parses the line-oriented table format (see `docs/tabular-format.md`).
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| EvalError::SchemaError {
            line: 1,
            reason: "empty file".into(),
        })?;
        let (space_id, columns) = parse_header(header)?;
        let space = describe_space(space_id);
        let mut rows = HashMap::new();
        for (line, raw) in lines {
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let mut fields = raw.split('\t');
            let key = fields.next().unwrap_or_default();
            let arch = parse_architecture(space, key).map_err(|reason| EvalError::InvalidArchKey { line, reason })?;
            let values = fields
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| EvalError::SchemaError {
                            line,
                            reason: format!("bad metric value `{f}`"),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != columns.len() {
                return Err(EvalError::SchemaError {
                    line,
                    reason: format!("expected {} metric values, got {}", columns.len(), values.len()),
                });
            }
            if rows.insert(arch.canonical_text().to_string(), values).is_some() {
                return Err(EvalError::SchemaError {
                    line,
                    reason: format!("duplicate architecture {arch}"),
                });
            }
        }
        if rows.is_empty() {
            return Err(EvalError::SchemaError {
                line: 1,
                reason: "table has no rows".into(),
            });
        }
        Ok(Self {
            space_id,
            columns,
            rows,
        })
    }

    /// Writes the table back out in the same format, rows sorted by key.
    pub fn to_text(&self) -> String {
        let mut out = header_line(self.space_id, &self.columns);
        out.push('\n');
        let mut keys: Vec<&String> = self.rows.keys().collect();
        keys.sort();
        for k in keys {
            out.push_str(k);
            for v in &self.rows[k] {
                out.push('\t');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_rows(
        space_id: SpaceId,
        columns: Vec<MetricColumn>,
        rows: impl IntoIterator<Item = (Architecture, Vec<f64>)>,
    ) -> Self {
        let rows = rows
            .into_iter()
            .map(|(a, v)| (a.canonical_text().to_string(), v))
            .collect();
        Self {
            space_id,
            columns,
            rows,
        }
    }
}

pub fn header_line(space_id: SpaceId, columns: &[MetricColumn]) -> String {
    let metrics: Vec<String> = columns
        .iter()
        .map(|c| {
            let tag = match c.direction {
                Direction::Maximize => "max",
                Direction::Minimize => "min",
            };
            format!("{}:{tag}", c.name)
        })
        .collect();
    format!("# {TABULAR_MAGIC}; space={space_id}; metrics={}", metrics.join(","))
}

fn parse_header(header: &str) -> Result<(SpaceId, Vec<MetricColumn>), EvalError> {
    let schema = |reason: String| EvalError::SchemaError { line: 1, reason };
    let body = header
        .strip_prefix('#')
        .map(str::trim)
        .ok_or_else(|| schema(format!("header must start with `# {TABULAR_MAGIC}`")))?;
    let mut parts = body.split(';').map(str::trim);
    if parts.next() != Some(TABULAR_MAGIC) {
        return Err(schema(format!("header must start with `# {TABULAR_MAGIC}`")));
    }
    let mut space = None;
    let mut columns = None;
    for part in parts {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| schema(format!("bad header field `{part}`")))?;
        match k.trim() {
            "space" => space = Some(v.trim().parse::<SpaceId>().map_err(schema)?),
            "metrics" => {
                let cols = v
                    .split(',')
                    .map(|m| {
                        let (name, dir) = m
                            .trim()
                            .rsplit_once(':')
                            .ok_or_else(|| schema(format!("metric `{m}` lacks :max or :min")))?;
                        let direction =
                            Direction::from_tag(dir).ok_or_else(|| schema(format!("bad direction `{dir}`")))?;
                        if name.is_empty() {
                            return Err(schema("empty metric name".into()));
                        }
                        Ok(MetricColumn {
                            name: name.to_string(),
                            direction,
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                columns = Some(cols);
            }
            other => return Err(schema(format!("unknown header field `{other}`"))),
        }
    }
    let space = space.ok_or_else(|| schema("header lacks space=".into()))?;
    let columns = columns.ok_or_else(|| schema("header lacks metrics=".into()))?;
    Ok((space, columns))
}

pub fn load_tabular(path: &Path) -> Result<TabularBenchmark, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::FileError {
        path: path.to_path_buf(),
        source,
    })?;
    TabularBenchmark::parse(&text)
}

/// A tabular benchmark with one metric column selected as the search signal.
pub struct TabularOracle {
    bench: Arc<TabularBenchmark>,
    column: usize,
}

impl TabularOracle {
    pub fn new(bench: Arc<TabularBenchmark>, metric: &str) -> Result<Self, EvalError> {
        let column = bench.column_index(metric)?;
        Ok(Self { bench, column })
    }
}

impl Oracle for TabularOracle {
    fn space_id(&self) -> SpaceId {
        self.bench.space_id
    }

    fn evaluate(&self, arch: &Architecture) -> Result<Fitness, EvalError> {
        self.check_space(arch)?;
        let row = self
            .bench
            .row(arch.canonical_text())
            .ok_or_else(|| EvalError::ArchitectureNotInTable(arch.canonical_text().to_string()))?;
        let col = &self.bench.columns[self.column];
        Ok(Fitness::new(row[self.column], col.name.clone(), col.direction))
    }

    fn describe(&self) -> String {
        format!(
            "tabular({}, {} rows, metric={})",
            self.bench.space_id,
            self.bench.len(),
            self.bench.columns[self.column].name
        )
    }
}

// ---------------------------------------------------------------------------

/// Serializable recipe for an oracle, as stored in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EvaluatorSpec {
    Surrogate { seed: u64, beta: f64 },
    Tabular { path: String, metric: String },
}

impl EvaluatorSpec {
    pub fn build(&self, space_id: SpaceId) -> Result<EvaluatorHandle, EvalError> {
        match self {
            EvaluatorSpec::Surrogate { seed, beta } => {
                Ok(Arc::new(build_surrogate(describe_space(space_id), *seed, *beta)?))
            }
            EvaluatorSpec::Tabular { path, metric } => {
                let bench = load_tabular(Path::new(path))?;
                if bench.space_id != space_id {
                    return Err(EvalError::SpaceMismatch {
                        expected: space_id,
                        got: bench.space_id,
                    });
                }
                Ok(Arc::new(TabularOracle::new(Arc::new(bench), metric)?))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleBest {
    pub arch: Architecture,
    pub fitness: Fitness,
    pub scanned: u64,
}

/// Exhaustive argmax of oriented fitness; ties go to the lexicographically
/// smallest genes (the first one enumerated).
pub fn oracle_best(oracle: &dyn Oracle, space: &SpaceDescriptor) -> Result<OracleBest, EvalError> {
    if space.space_id != oracle.space_id() {
        return Err(EvalError::SpaceMismatch {
            expected: oracle.space_id(),
            got: space.space_id,
        });
    }
    let archs = enumerate_space(space).map_err(|_| EvalError::NotEnumerable(space.space_id))?;
    let mut best: Option<(Architecture, Fitness)> = None;
    let mut scanned = 0;
    for arch in archs {
        let f = oracle.evaluate(&arch)?;
        scanned += 1;
        if best.as_ref().is_none_or(|(_, b)| f.oriented_value > b.oriented_value) {
            best = Some((arch, f));
        }
    }
    let (arch, fitness) = best.expect("enumerable spaces are non-empty");
    Ok(OracleBest { arch, fitness, scanned })
}
