//! Language-model backends: a chat-completions HTTP client and deterministic
//! scripted agents that stand in for a model in tests and desk-scale runs.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::thread;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::evaluator::EvaluatorHandle;
use crate::prompt::{Prompt, Role, TemplateId};
use crate::rng::SeededRng;
use crate::space::{neighbors, parse_architecture, random_architecture, Architecture, SpaceDescriptor};

pub const API_KEY_ENV: &str = "SEKI_LLM_API_KEY";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned {status}: {body_excerpt}")]
    EndpointError { status: u16, body_excerpt: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("gave up after {attempts} attempts; last error: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("greedy_mutation agent needs an evaluator")]
    MissingEvaluator,
    #[error("scripted agent cannot read prompt: {0}")]
    UnreadablePrompt(String),
}

impl LlmError {
    fn is_retryable(&self) -> bool {
        match self {
            LlmError::Timeout | LlmError::Transport(_) => true,
            LlmError::EndpointError { status, .. } => matches!(status, 408 | 429 | 500..=599),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmParams {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// First backoff delay; doubles after every failed attempt.
    pub backoff_ms: u64,
}

impl Default for LlmParams {
    fn default() -> Self {
        Self {
            model_name: "qwen2.5-32b-instruct".into(),
            temperature: 0.7,
            max_tokens: 2048,
            timeout_ms: 120_000,
            max_retries: 3,
            backoff_ms: 1_000,
        }
    }
}

impl LlmParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be positive".into());
        }
        if self.timeout_ms == 0 {
            return Err("timeout must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    RandomValid,
    GreedyMutation,
    MajorityRecombination,
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::RandomValid => "random",
            AgentKind::GreedyMutation => "greedy",
            AgentKind::MajorityRecombination => "majority",
        })
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" | "random_valid" => Ok(AgentKind::RandomValid),
            "greedy" | "greedy_mutation" => Ok(AgentKind::GreedyMutation),
            "majority" | "majority_recombination" => Ok(AgentKind::MajorityRecombination),
            other => Err(format!("unknown scripted agent `{other}`")),
        }
    }
}

/// Serializable backend recipe, as stored in run configurations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LlmSpec {
    Http {
        endpoint: String,
        api_key_env: String,
    },
    /// `self_evolution` answers C/D prompts, `inspiration` answers E prompts.
    Scripted {
        self_evolution: AgentKind,
        inspiration: AgentKind,
    },
}

impl LlmSpec {
    pub fn is_replayable(&self) -> bool {
        matches!(self, LlmSpec::Scripted { .. })
    }
}

/// Any other chat model, e.g. a local runtime or a test double.
pub trait ChatModel: Send {
    fn complete(&mut self, prompt: &Prompt, params: &LlmParams) -> Result<String, LlmError>;
}

#[allow(clippy::large_enum_variant)]
pub enum LlmBackend {
    HttpChat(HttpChatClient),
    Scripted(ScriptedBackend),
    Custom(Box<dyn ChatModel>),
}

impl LlmBackend {
    pub fn complete(&mut self, prompt: &Prompt, params: &LlmParams) -> Result<String, LlmError> {
        match self {
            LlmBackend::HttpChat(c) => c.complete(prompt, params),
            LlmBackend::Scripted(s) => s.complete(prompt),
            LlmBackend::Custom(m) => m.complete(prompt, params),
        }
    }
}

pub fn complete(backend: &mut LlmBackend, prompt: &Prompt, params: &LlmParams) -> Result<String, LlmError> {
    backend.complete(prompt, params)
}

// ---------------------------------------------------------------------------
// HTTP

pub struct HttpChatClient {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpChatClient {
    /// Reads the bearer credential from `api_key_env`, if set.
    pub fn new(endpoint: impl Into<String>, api_key_env: &str) -> Self {
        let api_key = std::env::var(api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_key(endpoint, api_key)
    }

    pub fn with_key(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key,
            client: reqwest::blocking::Client::new(),
        }
    }

    pub fn request_body(prompt: &Prompt, params: &LlmParams) -> Value {
        let messages: Vec<Value> = prompt
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                };
                json!({ "role": role, "content": m.text })
            })
            .collect();
        json!({
            "model": params.model_name,
            "messages": messages,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        })
    }

    fn attempt(&self, body: &Value, params: &LlmParams) -> Result<String, LlmError> {
        let mut req = self
            .client
            .post(&self.endpoint)
            .timeout(Duration::from_millis(params.timeout_ms))
            .json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(classify)?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(classify)?;
        if !(200..300).contains(&status) {
            return Err(LlmError::EndpointError {
                status,
                body_excerpt: excerpt(&text),
            });
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| LlmError::MalformedResponse(format!("{e}: {}", excerpt(&text))))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::MalformedResponse(format!("no choices[0].message.content in {}", excerpt(&text))))
    }

    pub fn complete(&self, prompt: &Prompt, params: &LlmParams) -> Result<String, LlmError> {
        let body = Self::request_body(prompt, params);
        let mut delay = Duration::from_millis(params.backoff_ms);
        let mut attempt = 0;
        loop {
            match self.attempt(&body, params) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < params.max_retries => {
                    attempt += 1;
                    thread::sleep(delay);
                    delay = (delay * 2).min(Duration::from_secs(30));
                }
                Err(e) if e.is_retryable() && params.max_retries > 0 => {
                    return Err(LlmError::RetriesExhausted {
                        attempts: attempt + 1,
                        last: e.to_string(),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn classify(e: reqwest::Error) -> LlmError {
    if e.is_timeout() {
        LlmError::Timeout
    } else {
        LlmError::Transport(e.to_string())
    }
}

fn excerpt(text: &str) -> String {
    text.chars().take(200).collect()
}

// ---------------------------------------------------------------------------
// Scripted agents

/// Deterministic model stand-in. Answers C/D prompts with the self-evolution
/// agent and E prompts with the inspiration agent:
///
/// * `random_valid` emits a uniformly random valid architecture;
/// * `greedy_mutation` emits the best strictly improving single-slot neighbor
///   of the prompt's architecture (ties: lowest slot, then lowest value), or
///   the architecture itself at a local optimum;
/// * `majority_recombination` emits the per-slot majority over the prompt's
///   architectures (ties broken with the agent's rng).
pub struct ScriptedBackend {
    space: &'static SpaceDescriptor,
    evaluator: Option<EvaluatorHandle>,
    rng: SeededRng,
    self_evolution: AgentKind,
    inspiration: AgentKind,
}

pub fn make_scripted_agent(
    kind: AgentKind,
    space: &SpaceDescriptor,
    evaluator: Option<EvaluatorHandle>,
    rng: SeededRng,
) -> Result<LlmBackend, LlmError> {
    ScriptedBackend::new(kind, kind, space, evaluator, rng).map(LlmBackend::Scripted)
}

impl ScriptedBackend {
    pub fn new(
        self_evolution: AgentKind,
        inspiration: AgentKind,
        space: &SpaceDescriptor,
        evaluator: Option<EvaluatorHandle>,
        rng: SeededRng,
    ) -> Result<Self, LlmError> {
        let needs_eval = [self_evolution, inspiration].contains(&AgentKind::GreedyMutation);
        if needs_eval && evaluator.is_none() {
            return Err(LlmError::MissingEvaluator);
        }
        Ok(Self {
            space: crate::space::describe_space(space.space_id),
            evaluator,
            rng,
            self_evolution,
            inspiration,
        })
    }

    fn referenced(&self, prompt: &Prompt) -> Result<Vec<Architecture>, LlmError> {
        let archs = prompt
            .references
            .iter()
            .map(|t| parse_architecture(self.space, t).map_err(|e| LlmError::UnreadablePrompt(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if archs.is_empty() {
            return Err(LlmError::UnreadablePrompt("prompt references no architecture".into()));
        }
        Ok(archs)
    }

    fn score(&self, arch: &Architecture) -> Option<f64> {
        self.evaluator.as_ref()?.evaluate(arch).ok().map(|f| f.oriented_value)
    }

    /// Best strictly improving neighbor, if any.
    fn best_neighbor(&self, arch: &Architecture) -> Option<(Architecture, f64)> {
        let base = self.score(arch).unwrap_or(f64::NEG_INFINITY);
        let mut best: Option<(Architecture, f64)> = None;
        for n in neighbors(arch) {
            let Some(s) = self.score(&n) else { continue };
            let threshold = best.as_ref().map_or(base, |(_, b)| *b);
            if s > threshold {
                best = Some((n, s));
            }
        }
        best
    }

    fn greedy_step(&self, arch: &Architecture) -> Architecture {
        self.best_neighbor(arch).map_or_else(|| arch.clone(), |(n, _)| n)
    }

    fn majority(&mut self, archs: &[Architecture]) -> Architecture {
        let cards = self.space.decision_cardinalities();
        let columns: Vec<Vec<usize>> = archs.iter().map(Architecture::decisions).collect();
        let mut out = Vec::with_capacity(cards.len());
        for var in 0..cards.len() {
            let mut counts: HashMap<usize, usize> = HashMap::new();
            for c in &columns {
                *counts.entry(c[var]).or_default() += 1;
            }
            // DARTS: the second input of a node must differ from the first.
            if var >= self.space.slot_count && (var - self.space.slot_count) % 2 == 1 {
                let first = out[var - 1];
                counts.remove(&first);
                if counts.is_empty() {
                    let choices: Vec<usize> = (0..cards[var]).filter(|&v| v != first).collect();
                    out.push(
                        *choices
                            .choose(&mut self.rng)
                            .expect("every node has two candidate inputs"),
                    );
                    continue;
                }
            }
            let top = *counts.values().max().expect("at least one exemplar");
            let mut modal: Vec<usize> = counts.into_iter().filter(|&(_, c)| c == top).map(|(v, _)| v).collect();
            modal.sort_unstable();
            let pick = if modal.len() == 1 {
                modal[0]
            } else {
                modal[self.rng.gen_range(0..modal.len())]
            };
            out.push(pick);
        }
        Architecture::from_decisions(self.space, &out).expect("majority vote respects input distinctness")
    }

    fn strategy(&mut self, kind: AgentKind, arch: &Architecture) -> String {
        match kind {
            AgentKind::GreedyMutation => match self.best_neighbor(arch) {
                Some((n, score)) => {
                    let (var, old, new) = first_difference(arch, &n);
                    format!(
                        "Change {} from {} to {}; expected score {:.4}.",
                        self.describe_var(var),
                        self.describe_value(var, old),
                        self.describe_value(var, new),
                        score
                    )
                }
                None => "Keep every slot as it is: no single-slot change improves the score.".into(),
            },
            AgentKind::RandomValid => {
                let slot = self.rng.gen_range(0..self.space.slot_count);
                format!("Try a different operator on {}.", self.describe_var(slot))
            }
            AgentKind::MajorityRecombination => {
                "Keep the operators that recur across strong architectures on each slot.".into()
            }
        }
    }

    fn describe_var(&self, var: usize) -> String {
        if var < self.space.slot_count {
            format!("slot {var} ({})", self.space.topology[var])
        } else {
            format!("the input of slot {}", var - self.space.slot_count)
        }
    }

    fn describe_value(&self, var: usize, value: usize) -> String {
        if var < self.space.slot_count {
            self.space.operator_names[value].to_string()
        } else {
            format!("input {value}")
        }
    }

    pub fn complete(&mut self, prompt: &Prompt) -> Result<String, LlmError> {
        let archs = self.referenced(prompt)?;
        let kind = match prompt.template_id {
            TemplateId::C | TemplateId::D => self.self_evolution,
            TemplateId::E => self.inspiration,
        };
        if prompt.template_id == TemplateId::C {
            return Ok(self.strategy(kind, &archs[0]));
        }
        let proposal = match kind {
            AgentKind::RandomValid => random_architecture(self.space, &mut self.rng),
            AgentKind::GreedyMutation => {
                let anchor = if archs.len() == 1 {
                    archs[0].clone()
                } else {
                    archs
                        .iter()
                        .map(|a| (a, self.score(a).unwrap_or(f64::NEG_INFINITY)))
                        .fold(None::<(&Architecture, f64)>, |acc, (a, s)| match acc {
                            Some((_, b)) if b >= s => acc,
                            _ => Some((a, s)),
                        })
                        .map(|(a, _)| a.clone())
                        .expect("non-empty")
                };
                self.greedy_step(&anchor)
            }
            AgentKind::MajorityRecombination => self.majority(&archs),
        };
        Ok(format!("Proposed architecture:\n{}", proposal.canonical_text()))
    }
}

fn first_difference(a: &Architecture, b: &Architecture) -> (usize, usize, usize) {
    a.decisions()
        .into_iter()
        .zip(b.decisions())
        .enumerate()
        .find(|(_, (x, y))| x != y)
        .map(|(i, (x, y))| (i, x, y))
        .expect("neighbors differ in one slot")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::{build_surrogate, Direction, Fitness};
    use crate::prompt::{OptimizationStrategy, PromptEngine};
    use crate::repository::{Phase, ScoredEntry};
    use crate::space::{describe_space, extract_architecture, SpaceId};
    use std::sync::Arc;

    fn nas() -> &'static SpaceDescriptor {
        describe_space(SpaceId::Nas201)
    }

    fn entries(archs: &[Architecture]) -> Vec<ScoredEntry> {
        archs
            .iter()
            .enumerate()
            .map(|(i, a)| ScoredEntry {
                arch: a.clone(),
                fitness: Fitness::new(1.0, "m", Direction::Maximize),
                iteration: i as u32,
                phase: Phase::SelfEvolution,
            })
            .collect()
    }

    fn prompt_d(arch: &Architecture) -> Prompt {
        let s = OptimizationStrategy::new("anything", 1).unwrap();
        PromptEngine::default().render_prompt_d(&s, arch).unwrap()
    }

    #[test]
    fn greedy_requires_evaluator() {
        assert!(matches!(
            make_scripted_agent(AgentKind::GreedyMutation, nas(), None, SeededRng::new(0)),
            Err(LlmError::MissingEvaluator)
        ));
        assert!(make_scripted_agent(AgentKind::RandomValid, nas(), None, SeededRng::new(0)).is_ok());
    }

    #[test]
    fn random_agent_emits_valid_architecture() {
        let mut b = make_scripted_agent(AgentKind::RandomValid, nas(), None, SeededRng::new(0)).unwrap();
        let arch = random_architecture(nas(), &mut SeededRng::new(1));
        let out = b.complete(&prompt_d(&arch), &LlmParams::default()).unwrap();
        assert!(extract_architecture(nas(), &out).is_ok());
    }

    #[test]
    fn greedy_improves_until_local_optimum() {
        let eval: EvaluatorHandle = Arc::new(build_surrogate(nas(), 42, 0.0).unwrap());
        let mut b =
            make_scripted_agent(AgentKind::GreedyMutation, nas(), Some(eval.clone()), SeededRng::new(0)).unwrap();
        let mut arch = random_architecture(nas(), &mut SeededRng::new(11));
        for _ in 0..10 {
            let out = b.complete(&prompt_d(&arch), &LlmParams::default()).unwrap();
            let next = extract_architecture(nas(), &out).unwrap();
            let (f0, f1) = (eval.evaluate(&arch).unwrap(), eval.evaluate(&next).unwrap());
            assert!(next == arch || neighbors(&arch).contains(&next));
            assert!(f1.oriented_value >= f0.oriented_value);
            if next == arch {
                // local optimum: no neighbor is better
                assert!(neighbors(&arch)
                    .iter()
                    .all(|n| eval.evaluate(n).unwrap().oriented_value <= f0.oriented_value));
                return;
            }
            arch = next;
        }
        panic!("separable surrogate must reach its optimum within 6 steps");
    }

    #[test]
    fn greedy_strategy_names_a_slot() {
        let eval: EvaluatorHandle = Arc::new(build_surrogate(nas(), 42, 0.0).unwrap());
        let mut b =
            make_scripted_agent(AgentKind::GreedyMutation, nas(), Some(eval.clone()), SeededRng::new(0)).unwrap();
        let arch = Architecture::new(nas(), vec![0; 6], vec![]).unwrap();
        let fit = eval.evaluate(&arch).unwrap();
        let p = PromptEngine::default()
            .render_prompt_c("t", nas(), &arch, &fit)
            .unwrap();
        let out = b.complete(&p, &LlmParams::default()).unwrap();
        assert!(out.starts_with("Change slot "), "{out}");
    }

    #[test]
    fn majority_recombination() {
        let mut b = make_scripted_agent(AgentKind::MajorityRecombination, nas(), None, SeededRng::new(0)).unwrap();
        let engine = PromptEngine::default();
        let a = Architecture::new(nas(), vec![3, 1, 2, 4, 0, 1], vec![]).unwrap();
        let p = engine
            .render_prompt_e(&entries(&[a.clone(), a.clone(), a.clone()]), "t", nas())
            .unwrap();
        assert_eq!(
            extract_architecture(nas(), &b.complete(&p, &LlmParams::default()).unwrap()).unwrap(),
            a
        );

        let x = Architecture::new(nas(), vec![3, 0, 0, 0, 0, 0], vec![]).unwrap();
        let y = Architecture::new(nas(), vec![3, 1, 0, 0, 0, 0], vec![]).unwrap();
        let p = engine
            .render_prompt_e(&entries(&[x, y.clone(), y]), "t", nas())
            .unwrap();
        let out = extract_architecture(nas(), &b.complete(&p, &LlmParams::default()).unwrap()).unwrap();
        assert_eq!(&out.ops()[..2], &[3, 1]);
    }

    #[test]
    fn majority_keeps_darts_inputs_distinct() {
        let d = describe_space(SpaceId::Darts);
        let mut rng = SeededRng::new(8);
        let archs: Vec<Architecture> = (0..5).map(|_| random_architecture(d, &mut rng)).collect();
        let mut b = make_scripted_agent(AgentKind::MajorityRecombination, d, None, SeededRng::new(0)).unwrap();
        let p = PromptEngine::default()
            .render_prompt_e(&entries(&archs), "t", d)
            .unwrap();
        let out = b.complete(&p, &LlmParams::default()).unwrap();
        assert!(extract_architecture(d, &out).is_ok());
    }

    #[test]
    fn request_body_shape() {
        let arch = random_architecture(nas(), &mut SeededRng::new(1));
        let body = HttpChatClient::request_body(&prompt_d(&arch), &LlmParams::default());
        assert_eq!(body["model"], "qwen2.5-32b-instruct");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["role"], "user");
        assert_eq!(body["temperature"], 0.7);
        assert_eq!(body["max_tokens"], 2048);
    }

    #[test]
    fn params_validation() {
        assert!(LlmParams::default().validate().is_ok());
        assert!(LlmParams {
            temperature: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LlmParams {
            timeout_ms: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
