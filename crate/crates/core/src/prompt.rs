//! Prompt templates for the three LLM calls of a search:
//!
//! * `C` asks for an analysis of one architecture and an optimization strategy,
//! * `D` asks for the strategy to be applied, producing a new architecture,
//! * `E` shows scored exemplars and asks for a new architecture built from
//!   their shared design patterns.
//!
//! Template files are plain text with `{NAME}` placeholders. Text above the
//! first line consisting only of `---` becomes the system message; the rest is
//! the user message. Without a separator the whole file is the user message.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evaluator::Fitness;
use crate::repository::ScoredEntry;
use crate::space::{Architecture, SpaceDescriptor, SpaceError, SpaceId};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("space mismatch: expected `{expected}`, got `{got}`")]
    SpaceMismatch { expected: SpaceId, got: SpaceId },
    #[error("optimization strategy is empty")]
    EmptyStrategy,
    #[error("exemplar list is empty")]
    EmptyExemplarList,
    #[error("template {id}: {reason}")]
    Template { id: TemplateId, reason: String },
    #[error("cannot read template {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<SpaceError> for PromptError {
    fn from(e: SpaceError) -> Self {
        match e {
            SpaceError::SpaceMismatch { expected, got } => PromptError::SpaceMismatch { expected, got },
            other => unreachable!("only space checks reach prompt rendering: {other}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    C,
    D,
    E,
}

impl TemplateId {
    pub fn file_name(self) -> &'static str {
        match self {
            TemplateId::C => "prompt_c.txt",
            TemplateId::D => "prompt_d.txt",
            TemplateId::E => "prompt_e.txt",
        }
    }

    fn allowed(self) -> &'static [&'static str] {
        match self {
            TemplateId::C => &["TASK", "SPACE_DESC", "ARCH", "SCORE"],
            TemplateId::D => &["SPACE_DESC", "ARCH", "STRATEGY"],
            TemplateId::E => &["TASK", "SPACE_DESC", "EXEMPLARS"],
        }
    }

    fn required(self) -> &'static [&'static str] {
        match self {
            TemplateId::C => &["ARCH", "SCORE"],
            TemplateId::D => &["ARCH", "STRATEGY"],
            TemplateId::E => &["EXEMPLARS"],
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

/// A rendered, role-tagged message sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub template_id: TemplateId,
    pub messages: Vec<Message>,
    pub content_digest: String,
    /// Canonical texts of the architectures the prompt embeds, in order.
    pub references: Vec<String>,
}

impl Prompt {
    fn new(template_id: TemplateId, messages: Vec<Message>, references: Vec<String>) -> Self {
        let content_digest = digest(&messages);
        Self {
            template_id,
            messages,
            content_digest,
            references,
        }
    }

    /// Copy of this prompt with an extra user message appended.
    pub fn with_followup(&self, text: impl Into<String>) -> Self {
        let mut messages = self.messages.clone();
        messages.push(Message {
            role: Role::User,
            text: text.into(),
        });
        Self::new(self.template_id, messages, self.references.clone())
    }

    pub fn full_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn digest(messages: &[Message]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        h.update(match m.role {
            Role::System => b"system\0".as_slice(),
            Role::User => b"user\0".as_slice(),
        });
        h.update(m.text.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// Free-form improvement plan returned for a `C` prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizationStrategy {
    pub text: String,
    pub source_iteration: u32,
}

impl OptimizationStrategy {
    pub fn new(text: impl Into<String>, source_iteration: u32) -> Result<Self, PromptError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(PromptError::EmptyStrategy);
        }
        Ok(Self { text, source_iteration })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Template {
    system: Option<Vec<Piece>>,
    user: Vec<Piece>,
}

/// Splits `text` into literal runs and `{NAME}` placeholders. Braces that do
/// not enclose an upper-case identifier are literal.
fn tokenize(id: TemplateId, text: &str) -> Result<Vec<Piece>, PromptError> {
    let mut pieces = Vec::new();
    let mut literal = String::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_uppercase() || c == '_'))
            .unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with('}') {
            let name = &after[..name_len];
            let slot = id
                .allowed()
                .iter()
                .find(|n| **n == name)
                .ok_or_else(|| PromptError::Template {
                    id,
                    reason: format!("placeholder {{{name}}} is not available in this template"),
                })?;
            literal.push_str(&rest[..open]);
            if !literal.is_empty() {
                pieces.push(Piece::Text(std::mem::take(&mut literal)));
            }
            pieces.push(Piece::Slot(slot));
            rest = &after[name_len + 1..];
        } else {
            literal.push_str(&rest[..=open]);
            rest = after;
        }
    }
    literal.push_str(rest);
    if !literal.is_empty() {
        pieces.push(Piece::Text(literal));
    }
    Ok(pieces)
}

impl Template {
    fn parse(id: TemplateId, text: &str) -> Result<Self, PromptError> {
        let text = text.replace("\r\n", "\n");
        let (system, user) = match text.split_once("\n---\n") {
            Some((s, u)) => (Some(s.trim().to_string()), u.trim().to_string()),
            None => (None, text.trim().to_string()),
        };
        if user.is_empty() {
            return Err(PromptError::Template {
                id,
                reason: "user message is empty".into(),
            });
        }
        let system = system.map(|s| tokenize(id, &s)).transpose()?;
        let user = tokenize(id, &user)?;
        for name in id.required() {
            let present = system
                .iter()
                .flatten()
                .chain(user.iter())
                .any(|p| *p == Piece::Slot(name));
            if !present {
                return Err(PromptError::Template {
                    id,
                    reason: format!("required placeholder {{{name}}} missing"),
                });
            }
        }
        Ok(Self { system, user })
    }

    fn fill(pieces: &[Piece], value: &dyn Fn(&str) -> String) -> String {
        pieces
            .iter()
            .map(|p| match p {
                Piece::Text(t) => t.clone(),
                Piece::Slot(name) => value(name),
            })
            .collect()
    }

    fn render(&self, value: &dyn Fn(&str) -> String) -> Vec<Message> {
        let mut out = Vec::with_capacity(2);
        if let Some(sys) = &self.system {
            out.push(Message {
                role: Role::System,
                text: Self::fill(sys, value),
            });
        }
        out.push(Message {
            role: Role::User,
            text: Self::fill(&self.user, value),
        });
        out
    }
}

pub const DEFAULT_C: &str = include_str!("../templates/prompt_c.txt");
pub const DEFAULT_D: &str = include_str!("../templates/prompt_d.txt");
pub const DEFAULT_E: &str = include_str!("../templates/prompt_e.txt");

/// Renders a score with two decimals, its metric name and direction.
pub fn format_score(f: &Fitness) -> String {
    f.to_string()
}

#[derive(Debug, Clone)]
pub struct PromptEngine {
    c: Template,
    d: Template,
    e: Template,
}

impl Default for PromptEngine {
    fn default() -> Self {
        Self::from_texts(DEFAULT_C, DEFAULT_D, DEFAULT_E).expect("bundled templates are valid")
    }
}

impl PromptEngine {
    pub fn from_texts(c: &str, d: &str, e: &str) -> Result<Self, PromptError> {
        Ok(Self {
            c: Template::parse(TemplateId::C, c)?,
            d: Template::parse(TemplateId::D, d)?,
            e: Template::parse(TemplateId::E, e)?,
        })
    }

    /// Loads `prompt_c.txt`, `prompt_d.txt` and `prompt_e.txt` from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let read = |id: TemplateId| {
            let path = dir.join(id.file_name());
            fs::read_to_string(&path).map_err(|source| PromptError::Io { path, source })
        };
        Self::from_texts(&read(TemplateId::C)?, &read(TemplateId::D)?, &read(TemplateId::E)?)
    }

    pub fn render_prompt_c(
        &self,
        task: &str,
        space: &SpaceDescriptor,
        arch: &Architecture,
        score: &Fitness,
    ) -> Result<Prompt, PromptError> {
        arch.ensure_space(space.space_id)?;
        let space_desc = space.prompt_description();
        let score = format_score(score);
        let messages = self.c.render(&|name| match name {
            "TASK" => task.to_string(),
            "SPACE_DESC" => space_desc.clone(),
            "ARCH" => arch.canonical_text().to_string(),
            "SCORE" => score.clone(),
            _ => unreachable!(),
        });
        Ok(Prompt::new(
            TemplateId::C,
            messages,
            vec![arch.canonical_text().to_string()],
        ))
    }

    pub fn render_prompt_d(&self, strategy: &OptimizationStrategy, arch: &Architecture) -> Result<Prompt, PromptError> {
        if strategy.text.trim().is_empty() {
            return Err(PromptError::EmptyStrategy);
        }
        let space_desc = arch.descriptor().prompt_description();
        let messages = self.d.render(&|name| match name {
            "SPACE_DESC" => space_desc.clone(),
            "ARCH" => arch.canonical_text().to_string(),
            "STRATEGY" => strategy.text.trim().to_string(),
            _ => unreachable!(),
        });
        Ok(Prompt::new(
            TemplateId::D,
            messages,
            vec![arch.canonical_text().to_string()],
        ))
    }

    pub fn render_prompt_e(
        &self,
        exemplars: &[ScoredEntry],
        task: &str,
        space: &SpaceDescriptor,
    ) -> Result<Prompt, PromptError> {
        if exemplars.is_empty() {
            return Err(PromptError::EmptyExemplarList);
        }
        for e in exemplars {
            e.arch.ensure_space(space.space_id)?;
        }
        let listing = exemplars
            .iter()
            .enumerate()
            .map(|(i, e)| {
                format!(
                    "{}. {}\n   score: {}",
                    i + 1,
                    e.arch.canonical_text(),
                    format_score(&e.fitness)
                )
            })
            .collect::<Vec<_>>()
            .join("\n");
        let space_desc = space.prompt_description();
        let messages = self.e.render(&|name| match name {
            "TASK" => task.to_string(),
            "SPACE_DESC" => space_desc.clone(),
            "EXEMPLARS" => listing.clone(),
            _ => unreachable!(),
        });
        let references = exemplars.iter().map(|e| e.arch.canonical_text().to_string()).collect();
        Ok(Prompt::new(TemplateId::E, messages, references))
    }
}

/// Follow-up appended when a reply held no usable architecture.
pub fn format_reminder(space: &SpaceDescriptor, problem: &str) -> String {
    format!(
        "Your previous reply could not be used ({problem}). Reply again and end with exactly one architecture \
in the required encoding for search space `{}`, for example:\n{}",
        space.space_id,
        crate::space::render_architecture(&first_architecture(space)),
    )
}

fn first_architecture(space: &SpaceDescriptor) -> Architecture {
    let cards = space.decision_cardinalities();
    let mut decisions = vec![0usize; cards.len()];
    // DARTS input pairs must be distinct: use (0, 1) for every node.
    for (i, d) in decisions.iter_mut().enumerate().skip(space.slot_count) {
        *d = i % 2;
    }
    Architecture::from_decisions(space, &decisions).expect("first architecture is valid")
}
