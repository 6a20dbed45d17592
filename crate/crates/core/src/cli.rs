//! Command-line front end.
//!
//! Evaluators and backends are chosen with a compact `kind:key=value,...`
//! grammar so one command line fully describes a run:
//!
//! ```text
//! --evaluator surrogate:seed=42,beta=0
//! --evaluator tabular:path=nb201.tsv,metric=cifar10/test
//! --llm mock:greedy
//! --llm mock:se=greedy,ki=majority
//! --llm http:url=http://localhost:8000/v1/chat/completions,model=qwen2.5-32b-instruct
//! ```
//!
//! Failures print one line, `error kind=<kind> message=<json string>`, on
//! stderr and exit nonzero.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::evaluator::{oracle_best, EvaluatorSpec};
use crate::llm::{LlmParams, LlmSpec, API_KEY_ENV};
use crate::orchestrator::{
    ablation_sweep, replay, report_from_paths, run, write_report_csv, write_sweep_csv, AnchorMode, Method, Ratio,
    SearchConfig, SearchError, SweepGrid, XiAxis,
};
use crate::space::{describe_space, SpaceId};

#[derive(Debug, Parser)]
#[command(name = "seki", version, about = "LLM-driven neural architecture search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a SEKI search and write its trace.
    Run(RunCmd),
    /// Run the random or mutation baseline and write its trace.
    Baseline(BaselineCmd),
    /// Print the exhaustive optimum of an enumerable space.
    Oracle(OracleCmd),
    /// Run a parameter grid and write one CSV row per cell.
    Sweep(SweepCmd),
    /// Re-execute a scripted run and compare it with its trace.
    Replay(ReplayCmd),
    /// Summarise traces into a CSV table.
    Report(ReportCmd),
}

/// A `--llm` selector: backend recipe plus an optional model name.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmChoice {
    pub spec: LlmSpec,
    pub model: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[arg(long, value_parser = parse_space)]
    pub space: SpaceId,
    #[arg(long, value_parser = parse_evaluator)]
    pub evaluator: EvaluatorSpec,
    #[arg(long, default_value_t = 50)]
    pub n: u32,
    #[arg(long, default_value_t = 35)]
    pub lambda: u32,
    /// Defaults to n - lambda.
    #[arg(long)]
    pub gamma: Option<u32>,
    #[arg(long, default_value_t = 16)]
    pub k: usize,
    #[arg(long, default_value_t = 8)]
    pub xi: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Task description shown to the model; defaults to the space's own.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub max_parse_retries: u32,
    #[arg(long, default_value = "chain", value_parser = parse_anchor)]
    pub anchor: AnchorMode,
    /// Directory with prompt_c.txt, prompt_d.txt and prompt_e.txt.
    #[arg(long)]
    pub templates: Option<String>,
    /// Defaults to 0 for mock backends and 0.7 otherwise.
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub backoff_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunCmd {
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, value_parser = parse_llm)]
    pub llm: LlmChoice,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineCmd {
    #[arg(long, value_parser = parse_baseline_method)]
    pub method: Method,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Unused by the baselines; recorded for completeness.
    #[arg(long, value_parser = parse_llm, default_value = "mock:random")]
    pub llm: LlmChoice,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleCmd {
    #[arg(long, value_parser = parse_space)]
    pub space: SpaceId,
    #[arg(long, value_parser = parse_evaluator)]
    pub evaluator: EvaluatorSpec,
}

#[derive(Debug, Args)]
pub struct SweepCmd {
    #[arg(long, value_parser = parse_method, default_value = "seki")]
    pub method: Method,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, value_parser = parse_llm)]
    pub llm: LlmChoice,
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    pub ks: Vec<usize>,
    #[arg(long, value_delimiter = ',', conflicts_with = "xi_ratios")]
    pub xis: Vec<usize>,
    /// xi as a fraction of k, e.g. `1,3/4,1/2,1/4`.
    #[arg(long, value_delimiter = ',')]
    pub xi_ratios: Vec<Ratio>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayCmd {
    pub trace: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportCmd {
    pub traces: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

// ---------------------------------------------------------------------------
// selector grammar

fn parse_space(s: &str) -> Result<SpaceId, String> {
    s.parse()
}

fn parse_anchor(s: &str) -> Result<AnchorMode, String> {
    match s {
        "chain" => Ok(AnchorMode::Chain),
        "best" => Ok(AnchorMode::Best),
        other => Err(format!("unknown anchor mode `{other}` (chain|best)")),
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "seki" => Ok(Method::Seki),
        "random" => Ok(Method::Random),
        "mutation" => Ok(Method::Mutation),
        other => Err(format!("unknown method `{other}` (seki|random|mutation)")),
    }
}

fn parse_baseline_method(s: &str) -> Result<Method, String> {
    match parse_method(s)? {
        Method::Seki => Err("baseline method must be random or mutation".into()),
        m => Ok(m),
    }
}

/// Splits `kind:key=value,...` into the kind and its options.
fn split_selector(s: &str) -> Result<(&str, BTreeMap<&str, &str>), String> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let mut opts = BTreeMap::new();
    for pair in rest.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = pair.split_once('=').unwrap_or((pair, ""));
        if opts.insert(k, v).is_some() {
            return Err(format!("option `{k}` given twice in `{s}`"));
        }
    }
    Ok((kind, opts))
}

fn take<'a>(opts: &mut BTreeMap<&str, &'a str>, key: &str) -> Option<&'a str> {
    opts.remove(key)
}

fn reject_rest(opts: &BTreeMap<&str, &str>, kind: &str) -> Result<(), String> {
    match opts.keys().next() {
        Some(k) => Err(format!("unknown option `{k}` for `{kind}`")),
        None => Ok(()),
    }
}

pub fn parse_evaluator(s: &str) -> Result<EvaluatorSpec, String> {
    let (kind, mut opts) = split_selector(s)?;
    let spec = match kind {
        "surrogate" => {
            let seed = take(&mut opts, "seed").unwrap_or("0");
            let beta = take(&mut opts, "beta").unwrap_or("0");
            EvaluatorSpec::Surrogate {
                seed: seed.parse().map_err(|_| format!("bad surrogate seed `{seed}`"))?,
                beta: beta.parse().map_err(|_| format!("bad surrogate beta `{beta}`"))?,
            }
        }
        "tabular" => EvaluatorSpec::Tabular {
            path: take(&mut opts, "path")
                .ok_or("tabular evaluator needs path=...")?
                .to_string(),
            metric: take(&mut opts, "metric")
                .ok_or("tabular evaluator needs metric=...")?
                .to_string(),
        },
        other => return Err(format!("unknown evaluator `{other}` (surrogate|tabular)")),
    };
    reject_rest(&opts, kind)?;
    Ok(spec)
}

pub fn parse_llm(s: &str) -> Result<LlmChoice, String> {
    let (kind, mut opts) = split_selector(s)?;
    let choice = match kind {
        "mock" => {
            // `mock:greedy` is shorthand for the same agent in both phases.
            let single = opts.iter().find(|(_, v)| v.is_empty()).map(|(k, _)| *k);
            let (se, ki) = match single {
                Some(name) => {
                    opts.remove(name);
                    (name, name)
                }
                None => (
                    take(&mut opts, "se").ok_or("mock backend needs an agent name or se=...,ki=...")?,
                    take(&mut opts, "ki").ok_or("mock backend needs ki=...")?,
                ),
            };
            LlmChoice {
                spec: LlmSpec::Scripted {
                    self_evolution: se.parse()?,
                    inspiration: ki.parse()?,
                },
                model: None,
            }
        }
        "http" => LlmChoice {
            spec: LlmSpec::Http {
                endpoint: take(&mut opts, "url").ok_or("http backend needs url=...")?.to_string(),
                api_key_env: take(&mut opts, "key_env").unwrap_or(API_KEY_ENV).to_string(),
            },
            model: take(&mut opts, "model").map(str::to_string),
        },
        other => return Err(format!("unknown backend `{other}` (mock|http)")),
    };
    reject_rest(&opts, kind)?;
    Ok(choice)
}

pub fn render_evaluator(spec: &EvaluatorSpec) -> String {
    match spec {
        EvaluatorSpec::Surrogate { seed, beta } => format!("surrogate:seed={seed},beta={beta}"),
        EvaluatorSpec::Tabular { path, metric } => format!("tabular:path={path},metric={metric}"),
    }
}

pub fn render_llm(spec: &LlmSpec, model: &str) -> String {
    match spec {
        LlmSpec::Scripted {
            self_evolution,
            inspiration,
        } => {
            format!("mock:se={self_evolution},ki={inspiration}")
        }
        LlmSpec::Http { endpoint, api_key_env } => format!("http:url={endpoint},key_env={api_key_env},model={model}"),
    }
}

// ---------------------------------------------------------------------------
// flags <-> config

impl SearchArgs {
    pub fn to_config(&self, method: Method, llm: &LlmChoice) -> SearchConfig {
        let mut config = SearchConfig::new(self.space, self.evaluator.clone(), llm.spec.clone());
        config.method = method;
        config.n = self.n;
        config.lambda = self.lambda;
        config.gamma = self.gamma.unwrap_or(self.n.saturating_sub(self.lambda));
        config.k = self.k;
        config.xi = self.xi;
        config.seed = self.seed;
        if let Some(task) = &self.task {
            config.task = task.clone();
        }
        config.max_parse_retries = self.max_parse_retries;
        config.anchor_mode = self.anchor;
        config.templates = self.templates.clone();
        let p = &mut config.llm_params;
        if let Some(m) = &llm.model {
            p.model_name = m.clone();
        }
        p.temperature = self.temperature.unwrap_or(p.temperature);
        p.max_tokens = self.max_tokens.unwrap_or(p.max_tokens);
        p.timeout_ms = self.timeout_ms.unwrap_or(p.timeout_ms);
        p.max_retries = self.max_retries.unwrap_or(p.max_retries);
        p.backoff_ms = self.backoff_ms.unwrap_or(p.backoff_ms);
        config
    }
}

/// Command line (without the program name) that reproduces `config`.
pub fn config_to_args(config: &SearchConfig) -> Vec<String> {
    let mut args: Vec<String> = match config.method {
        Method::Seki => vec!["run".into()],
        m => vec!["baseline".into(), "--method".into(), m.as_str().into()],
    };
    let LlmParams {
        model_name,
        temperature,
        max_tokens,
        timeout_ms,
        max_retries,
        backoff_ms,
    } = &config.llm_params;
    let mut flag = |name: &str, value: String| {
        args.push(format!("--{name}"));
        args.push(value);
    };
    flag("space", config.space.to_string());
    flag("evaluator", render_evaluator(&config.evaluator));
    flag("llm", render_llm(&config.llm, model_name));
    flag("n", config.n.to_string());
    flag("lambda", config.lambda.to_string());
    flag("gamma", config.gamma.to_string());
    flag("k", config.k.to_string());
    flag("xi", config.xi.to_string());
    flag("seed", config.seed.to_string());
    flag("task", config.task.clone());
    flag("max-parse-retries", config.max_parse_retries.to_string());
    flag(
        "anchor",
        match config.anchor_mode {
            AnchorMode::Chain => "chain".into(),
            AnchorMode::Best => "best".into(),
        },
    );
    if let Some(t) = &config.templates {
        flag("templates", t.clone());
    }
    flag("temperature", temperature.to_string());
    flag("max-tokens", max_tokens.to_string());
    flag("timeout-ms", timeout_ms.to_string());
    flag("max-retries", max_retries.to_string());
    flag("backoff-ms", backoff_ms.to_string());
    args
}

/// Parses a `run` or `baseline` command line back into its configuration.
pub fn config_from_args<I, S>(args: I) -> Result<SearchConfig, String>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let mut full: Vec<std::ffi::OsString> = vec!["seki".into()];
    full.extend(args.into_iter().map(Into::into));
    if !full.iter().any(|a| a == "--out") {
        full.push("--out".into());
        full.push("-".into());
    }
    let cli = Cli::try_parse_from(full).map_err(|e| first_line(&e.to_string()))?;
    match cli.command {
        Command::Run(c) => Ok(c.search.to_config(Method::Seki, &c.llm)),
        Command::Baseline(c) => Ok(c.search.to_config(c.method, &c.llm)),
        _ => Err("not a run or baseline command".into()),
    }
}

// ---------------------------------------------------------------------------
// execution

#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            exit_code: 1,
        }
    }

    /// The single-line form printed on stderr.
    pub fn line(&self) -> String {
        format!(
            "error kind={} message={}",
            self.kind,
            serde_json::Value::String(self.message.clone())
        )
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        let code = if matches!(e, SearchError::Config(_)) { 2 } else { 1 };
        Self {
            kind: e.kind(),
            message: e.to_string(),
            exit_code: code,
        }
    }
}

fn first_line(s: &str) -> String {
    s.lines()
        .next()
        .unwrap_or_default()
        .trim_start_matches("error: ")
        .to_string()
}

/// Writes through a sibling temporary file so a failed command never leaves a
/// truncated output behind.
fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::new("io", format!("{}: {e}", path.display()));
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn execute_search(config: SearchConfig, out: &Path, argv: &[String], stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut result = run(&config)?;
    result.trace.header_meta.command_line = Some(argv.to_vec());
    write_atomically(out, result.trace.to_jsonl().as_bytes())?;
    let f = &result.trace.final_record;
    let _ = writeln!(stdout, "best_architecture: {}", f.best_arch);
    let _ = writeln!(stdout, "best_fitness: {}", f.best_fitness);
    let _ = writeln!(stdout, "best_raw: {}", f.best_fitness.raw_metric);
    let _ = writeln!(stdout, "best_iteration: {}", f.best_iteration);
    let _ = writeln!(stdout, "evaluations: {}", f.evaluations);
    let _ = writeln!(stdout, "trace: {}", out.display());
    Ok(())
}

fn execute(cli: Cli, argv: &[String], stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Run(c) => execute_search(c.search.to_config(Method::Seki, &c.llm), &c.out, argv, stdout),
        Command::Baseline(c) => execute_search(c.search.to_config(c.method, &c.llm), &c.out, argv, stdout),
        Command::Oracle(c) => {
            let oracle = c
                .evaluator
                .build(c.space)
                .map_err(|e| CliError::new("oracle", e.to_string()))?;
            let best = oracle_best(oracle.as_ref(), describe_space(c.space))
                .map_err(|e| CliError::new("oracle", e.to_string()))?;
            let _ = writeln!(stdout, "best_architecture: {}", best.arch.canonical_text());
            let _ = writeln!(stdout, "best_fitness: {}", best.fitness);
            let _ = writeln!(stdout, "best_raw: {}", best.fitness.raw_metric);
            let _ = writeln!(stdout, "scanned: {}", best.scanned);
            Ok(())
        }
        Command::Sweep(c) => {
            let base = c.search.to_config(c.method, &c.llm);
            let grid = SweepGrid {
                lambdas: c.lambdas,
                ks: c.ks,
                xis: if c.xi_ratios.is_empty() {
                    XiAxis::Absolute(c.xis)
                } else {
                    XiAxis::RatioOfK(c.xi_ratios)
                },
                seeds: c.seeds,
            };
            let rows = ablation_sweep(&base, &grid);
            let mut buf = Vec::new();
            write_sweep_csv(&rows, &mut buf)?;
            write_atomically(&c.out, &buf)?;
            let ok = rows.iter().filter(|r| r.status == "ok").count();
            let _ = writeln!(stdout, "rows: {} ({ok} ok, {} not run)", rows.len(), rows.len() - ok);
            let _ = writeln!(stdout, "table: {}", c.out.display());
            Ok(())
        }
        Command::Replay(c) => {
            let report = replay(&c.trace)?;
            let _ = writeln!(
                stdout,
                "replay: {} records checked, 0 divergences",
                report.records_checked
            );
            Ok(())
        }
        Command::Report(c) => {
            let rows = report_from_paths(&c.traces)?;
            let mut buf = Vec::new();
            write_report_csv(&rows, &mut buf)?;
            write_atomically(&c.out, &buf)?;
            let _ = writeln!(stdout, "rows: {}", rows.len());
            let _ = writeln!(stdout, "table: {}", c.out.display());
            Ok(())
        }
    }
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn main_with(argv: Vec<String>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(stdout, "{e}");
            return 0;
        }
        Err(e) => {
            let err = CliError {
                kind: "usage",
                message: first_line(&e.to_string()),
                exit_code: 2,
            };
            let _ = writeln!(stderr, "{}", err.line());
            return err.exit_code;
        }
    };
    match execute(cli, &argv, stdout) {
        Ok(()) => 0,
        Err(err) => {
            let _ = writeln!(stderr, "{}", err.line());
            err.exit_code
        }
    }
}
