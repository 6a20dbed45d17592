use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;

use crate::evaluator::{CountingOracle, EvaluatorHandle, Fitness, Oracle};
use crate::llm::{HttpChatClient, LlmBackend, LlmSpec, ScriptedBackend};
use crate::prompt::{format_reminder, OptimizationStrategy, Prompt, PromptEngine};
use crate::repository::{sample_xi, KnowledgeRepository, Phase, ScoredEntry};
use crate::rng::{streams, SeededRng};
use crate::space::{
    describe_space, extract_architecture, neighbors, random_architecture, Architecture, SpaceDescriptor,
};

use super::config::{AnchorMode, Method, SearchConfig};
use super::trace::{
    FinalRecord, IterationRecord, Meta, ParseOutcome, SearchTrace, Stage, TraceEvent, TraceHeader, TRACE_FORMAT,
};
use super::SearchError;

const FALLBACK_STRATEGY: &str =
    "Identify the weakest operator choice of the architecture and replace it with one more likely to help.";

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Builds the oracle and backend named by `config`.
pub fn build_components(config: &SearchConfig) -> Result<(EvaluatorHandle, LlmBackend), SearchError> {
    let oracle = config.evaluator.build(config.space).map_err(SearchError::Setup)?;
    let backend = build_backend(config, oracle.clone())?;
    Ok((oracle, backend))
}

pub fn build_backend(config: &SearchConfig, oracle: EvaluatorHandle) -> Result<LlmBackend, SearchError> {
    Ok(match &config.llm {
        LlmSpec::Scripted {
            self_evolution,
            inspiration,
        } => LlmBackend::Scripted(ScriptedBackend::new(
            *self_evolution,
            *inspiration,
            describe_space(config.space),
            Some(oracle),
            SeededRng::substream(config.seed, streams::AGENT),
        )?),
        LlmSpec::Http { endpoint, api_key_env } => LlmBackend::HttpChat(HttpChatClient::new(endpoint, api_key_env)),
    })
}

/// Result of a run: the trace plus the live repository it describes.
pub struct SearchRun {
    pub trace: SearchTrace,
    pub repository: KnowledgeRepository,
}

/// Runs the method named in `config` with freshly built components.
pub fn run(config: &SearchConfig) -> Result<SearchRun, SearchError> {
    config.validate()?;
    let (oracle, backend) = build_components(config)?;
    run_with(config, oracle, backend)
}

pub fn run_seki(config: &SearchConfig) -> Result<SearchTrace, SearchError> {
    let config = SearchConfig {
        method: Method::Seki,
        ..config.clone()
    };
    run(&config).map(|r| r.trace)
}

pub fn run_random_baseline(config: &SearchConfig) -> Result<SearchTrace, SearchError> {
    let config = SearchConfig {
        method: Method::Random,
        ..config.clone()
    };
    run(&config).map(|r| r.trace)
}

pub fn run_mutation_baseline(config: &SearchConfig) -> Result<SearchTrace, SearchError> {
    let config = SearchConfig {
        method: Method::Mutation,
        ..config.clone()
    };
    run(&config).map(|r| r.trace)
}

/// Runs `config.method` against caller-supplied components.
pub fn run_with(config: &SearchConfig, oracle: EvaluatorHandle, backend: LlmBackend) -> Result<SearchRun, SearchError> {
    config.validate()?;
    if oracle.space_id() != config.space {
        return Err(SearchError::Config(format!(
            "oracle scores `{}` but the run searches `{}`",
            oracle.space_id(),
            config.space
        )));
    }
    let engine = config.prompt_engine()?;
    let mut search = Search::new(config, oracle, backend, engine);
    search.initialise()?;
    match config.method {
        Method::Seki => search.seki()?,
        Method::Random => search.random_baseline()?,
        Method::Mutation => search.mutation_baseline()?,
    }
    search.finish()
}

struct Search<'c> {
    config: &'c SearchConfig,
    space: &'static SpaceDescriptor,
    counter: Arc<CountingOracle>,
    backend: LlmBackend,
    engine: PromptEngine,
    repo: KnowledgeRepository,
    init_rng: SeededRng,
    xi_rng: SeededRng,
    fallback_rng: SeededRng,
    baseline_rng: SeededRng,
    records: Vec<IterationRecord>,
    record_meta: Vec<Meta>,
    started: Instant,
    started_unix: u64,
}

/// What one model exchange produced.
#[derive(Default)]
struct Exchange {
    digests: Vec<String>,
    responses: Vec<String>,
    events: Vec<TraceEvent>,
}

impl<'c> Search<'c> {
    fn new(config: &'c SearchConfig, oracle: EvaluatorHandle, backend: LlmBackend, engine: PromptEngine) -> Self {
        let seed = config.seed;
        Self {
            config,
            space: describe_space(config.space),
            counter: Arc::new(CountingOracle::new(oracle)),
            backend,
            engine,
            repo: KnowledgeRepository::new(),
            init_rng: SeededRng::substream(seed, streams::INIT),
            xi_rng: SeededRng::substream(seed, streams::XI_SAMPLING),
            fallback_rng: SeededRng::substream(seed, streams::FALLBACK),
            baseline_rng: SeededRng::substream(seed, streams::BASELINE),
            records: Vec::new(),
            record_meta: Vec::new(),
            started: Instant::now(),
            started_unix: unix_ms(),
        }
    }

    fn evaluate(&self, iteration: u32, arch: &Architecture) -> Result<Fitness, SearchError> {
        self.counter.evaluate(arch).map_err(|source| SearchError::Evaluation {
            iteration,
            arch: arch.canonical_text().to_string(),
            source,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        iteration: u32,
        phase: Phase,
        arch: Architecture,
        inputs: Vec<String>,
        strategy: Option<String>,
        outcome: ParseOutcome,
        exchange: Exchange,
    ) -> Result<(Architecture, Fitness), SearchError> {
        let fitness = self.evaluate(iteration, &arch)?;
        let receipt = self.repo.insert(ScoredEntry {
            arch: arch.clone(),
            fitness: fitness.clone(),
            iteration,
            phase,
        });
        let best_so_far = self.repo.best().expect("just inserted").fitness.oriented_value;
        self.records.push(IterationRecord {
            iteration,
            phase,
            inputs,
            prompt_digests: exchange.digests,
            raw_responses: exchange.responses,
            strategy,
            outcome,
            arch: arch.canonical_text().to_string(),
            fitness: fitness.clone(),
            was_duplicate: receipt.was_duplicate,
            best_so_far,
            events: exchange.events,
        });
        self.record_meta.push(Meta {
            elapsed_ms: Some(self.started.elapsed().as_millis() as u64),
            ..Meta::default()
        });
        Ok((arch, fitness))
    }

    fn initialise(&mut self) -> Result<(), SearchError> {
        let arch = random_architecture(self.space, &mut self.init_rng);
        self.record(
            0,
            Phase::Init,
            arch,
            Vec::new(),
            None,
            ParseOutcome::Direct,
            Exchange::default(),
        )?;
        Ok(())
    }

    fn call(&mut self, iteration: u32, prompt: &Prompt, ex: &mut Exchange) -> Result<String, SearchError> {
        ex.digests.push(prompt.content_digest.clone());
        let text = self
            .backend
            .complete(prompt, &self.config.llm_params)
            .map_err(|source| SearchError::Llm { iteration, source })?;
        ex.responses.push(text.clone());
        Ok(text)
    }

    /// Asks for an optimization strategy, re-asking on empty replies.
    fn ask_strategy(&mut self, iteration: u32, prompt: &Prompt, ex: &mut Exchange) -> Result<String, SearchError> {
        let mut current = prompt.clone();
        let attempts = self.config.max_parse_retries + 1;
        for attempt in 1..=attempts {
            let text = self.call(iteration, &current, ex)?;
            if !text.trim().is_empty() {
                return Ok(text);
            }
            ex.events.push(TraceEvent::ParseRetry {
                stage: Stage::Strategy,
                attempt,
                error: "empty reply".into(),
            });
            current =
                prompt.with_followup("Your previous reply was empty. Reply with a concrete optimization strategy.");
        }
        ex.events.push(TraceEvent::FallbackStrategy { attempts });
        Ok(FALLBACK_STRATEGY.to_string())
    }

    /// Asks for an architecture, re-asking with a format reminder on
    /// unparseable replies and falling back to a random draw.
    fn ask_architecture(
        &mut self,
        iteration: u32,
        prompt: &Prompt,
        ex: &mut Exchange,
    ) -> Result<(Architecture, ParseOutcome), SearchError> {
        let mut current = prompt.clone();
        let attempts = self.config.max_parse_retries + 1;
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            let text = self.call(iteration, &current, ex)?;
            match extract_architecture(self.space, &text) {
                Ok(arch) => return Ok((arch, ParseOutcome::Parsed { attempts: attempt })),
                Err(e) => {
                    last_error = e.to_string();
                    ex.events.push(TraceEvent::ParseRetry {
                        stage: Stage::Architecture,
                        attempt,
                        error: last_error.clone(),
                    });
                    current = prompt.with_followup(format_reminder(self.space, &last_error));
                }
            }
        }
        ex.events.push(TraceEvent::FallbackRandom {
            attempts,
            error: last_error,
        });
        let arch = random_architecture(self.space, &mut self.fallback_rng);
        Ok((arch, ParseOutcome::Fallback { attempts }))
    }

    fn seki(&mut self) -> Result<(), SearchError> {
        let cfg = self.config;
        let first = self.repo.records()[0].clone();
        let mut anchor = (first.arch, first.fitness);
        for i in 1..=cfg.lambda {
            let mut ex = Exchange::default();
            let prompt_c = self
                .engine
                .render_prompt_c(&cfg.task, self.space, &anchor.0, &anchor.1)?;
            let strategy_text = self.ask_strategy(i, &prompt_c, &mut ex)?;
            let strategy = OptimizationStrategy::new(strategy_text, i)?;
            let prompt_d = self.engine.render_prompt_d(&strategy, &anchor.0)?;
            let (arch, outcome) = self.ask_architecture(i, &prompt_d, &mut ex)?;
            let inputs = vec![anchor.0.canonical_text().to_string()];
            let produced = self.record(i, Phase::SelfEvolution, arch, inputs, Some(strategy.text), outcome, ex)?;
            anchor = match cfg.anchor_mode {
                AnchorMode::Chain => produced,
                AnchorMode::Best => {
                    let b = self.repo.best().expect("non-empty");
                    (b.arch, b.fitness)
                }
            };
        }
        for i in cfg.lambda + 1..=cfg.n {
            let mut ex = Exchange::default();
            let top = self.repo.top_k(cfg.k);
            let exemplars = sample_xi(&top, cfg.xi, &mut self.xi_rng).expect("repository is never empty here");
            let prompt_e = self.engine.render_prompt_e(&exemplars, &cfg.task, self.space)?;
            let (arch, outcome) = self.ask_architecture(i, &prompt_e, &mut ex)?;
            if exemplars.iter().any(|e| e.arch == arch) {
                ex.events.push(TraceEvent::DuplicateOfExemplar);
            }
            let inputs = exemplars.iter().map(|e| e.arch.canonical_text().to_string()).collect();
            self.record(i, Phase::KnowledgeInspiration, arch, inputs, None, outcome, ex)?;
        }
        Ok(())
    }

    fn random_baseline(&mut self) -> Result<(), SearchError> {
        for i in 1..=self.config.n {
            let arch = random_architecture(self.space, &mut self.baseline_rng);
            self.record(
                i,
                Phase::Baseline,
                arch,
                Vec::new(),
                None,
                ParseOutcome::Direct,
                Exchange::default(),
            )?;
        }
        Ok(())
    }

    /// (1+1) local search: propose a uniform random neighbor of the current
    /// architecture and move to it on strict improvement.
    fn mutation_baseline(&mut self) -> Result<(), SearchError> {
        let first = self.repo.records()[0].clone();
        let mut current = (first.arch, first.fitness);
        for i in 1..=self.config.n {
            let candidate = neighbors(&current.0)
                .choose(&mut self.baseline_rng)
                .cloned()
                .expect("every architecture has neighbors");
            let inputs = vec![current.0.canonical_text().to_string()];
            let (arch, fit) = self.record(
                i,
                Phase::Baseline,
                candidate,
                inputs,
                None,
                ParseOutcome::Direct,
                Exchange::default(),
            )?;
            if fit.oriented_value > current.1.oriented_value {
                current = (arch, fit);
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<SearchRun, SearchError> {
        let best = self.repo.best().expect("initial architecture is always recorded");
        let final_record = FinalRecord {
            best_arch: best.arch.canonical_text().to_string(),
            best_fitness: best.fitness,
            best_iteration: best.iteration,
            evaluations: self.counter.calls(),
            unique_architectures: self.repo.unique_len(),
        };
        let trace = SearchTrace {
            header: TraceHeader {
                format: TRACE_FORMAT.to_string(),
                config: self.config.clone(),
                extension_mode: self.config.extension_mode(),
            },
            records: self.records,
            final_record,
            header_meta: Meta {
                unix_ms: Some(self.started_unix),
                ..Meta::default()
            },
            record_meta: self.record_meta,
            final_meta: Meta {
                unix_ms: Some(unix_ms()),
                elapsed_ms: Some(self.started.elapsed().as_millis() as u64),
                ..Meta::default()
            },
        };
        Ok(SearchRun {
            trace,
            repository: self.repo,
        })
    }
}
