use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::evaluator::EvaluatorSpec;
use crate::llm::{AgentKind, LlmParams, LlmSpec};
use crate::prompt::PromptEngine;
use crate::space::{describe_space, SpaceId};

use super::SearchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Seki,
    Random,
    Mutation,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Seki => "seki",
            Method::Random => "random",
            Method::Mutation => "mutation",
        }
    }
}

/// Which architecture feeds the next self-evolution prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorMode {
    /// The previous iteration's architecture, whatever its score.
    Chain,
    /// The best architecture in the repository so far.
    Best,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub method: Method,
    pub space: SpaceId,
    pub n: u32,
    pub lambda: u32,
    pub gamma: u32,
    pub k: usize,
    pub xi: usize,
    pub seed: u64,
    pub llm: LlmSpec,
    pub llm_params: LlmParams,
    pub evaluator: EvaluatorSpec,
    pub task: String,
    pub max_parse_retries: u32,
    pub anchor_mode: AnchorMode,
    /// Directory holding custom prompt templates; bundled ones when `None`.
    pub templates: Option<String>,
}

impl SearchConfig {
    /// Defaults: 50 iterations split 35 / 15, top-16 repository, 8 exemplars.
    pub fn new(space: SpaceId, evaluator: EvaluatorSpec, llm: LlmSpec) -> Self {
        let llm_params = match llm {
            LlmSpec::Scripted { .. } => LlmParams {
                temperature: 0.0,
                ..LlmParams::default()
            },
            LlmSpec::Http { .. } => LlmParams::default(),
        };
        Self {
            method: Method::Seki,
            space,
            n: 50,
            lambda: 35,
            gamma: 15,
            k: 16,
            xi: 8,
            seed: 1,
            llm,
            llm_params,
            evaluator,
            task: describe_space(space).task_description.to_string(),
            max_parse_retries: 2,
            anchor_mode: AnchorMode::Chain,
            templates: None,
        }
    }

    pub fn scripted(space: SpaceId, evaluator: EvaluatorSpec, se: AgentKind, ki: AgentKind) -> Self {
        Self::new(
            space,
            evaluator,
            LlmSpec::Scripted {
                self_evolution: se,
                inspiration: ki,
            },
        )
    }

    /// Sets `lambda` and derives `gamma = n - lambda`.
    pub fn with_lambda(mut self, lambda: u32) -> Self {
        self.lambda = lambda;
        self.gamma = self.n.saturating_sub(lambda);
        self
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: String| Err(SearchError::Config(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.lambda + self.gamma != self.n {
            return bad(format!(
                "lambda + gamma must equal n ({} + {} != {})",
                self.lambda, self.gamma, self.n
            ));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.xi == 0 || self.xi > self.k {
            return bad(format!(
                "xi must satisfy 1 <= xi <= k (xi = {}, k = {})",
                self.xi, self.k
            ));
        }
        if let EvaluatorSpec::Surrogate { beta, .. } = self.evaluator {
            if !(beta >= 0.0 && beta.is_finite()) {
                return bad(format!("surrogate beta must be >= 0, got {beta}"));
            }
        }
        self.llm_params.validate().map_err(SearchError::Config)?;
        Ok(())
    }

    /// `xi == k`: every top-k entry is shown, outside the usual `xi < k` regime.
    pub fn extension_mode(&self) -> bool {
        self.xi == self.k
    }

    pub fn prompt_engine(&self) -> Result<PromptEngine, SearchError> {
        match &self.templates {
            Some(dir) => Ok(PromptEngine::from_dir(Path::new(dir))?),
            None => Ok(PromptEngine::default()),
        }
    }
}
