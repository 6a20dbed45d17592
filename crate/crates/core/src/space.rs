//! Cell-based search spaces and the canonical architecture encoding.
//!
//! Two textual grammars are supported:
//!
//! * NAS-Bench-201 style strings for `nas201` and `trans101`, one `|op~pred|`
//!   segment per edge, grouped per target node and joined by `+`:
//!   `|nor_conv_3x3~0|+|none~0|skip_connect~1|+|avg_pool_3x3~0|nor_conv_1x1~1|skip_connect~2|`
//! * DARTS genotypes, a normal and a reduction cell with four nodes each, every
//!   node listing two `op@input` pairs:
//!   `normal=((sep_conv_3x3@0, skip_connect@1), ...) reduce=((max_pool_3x3@0, ...), ...)`
//!
//! `docs/architecture-grammar.md` is the reference for both.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;

pub const NAS201_OPS: [&str; 5] = ["none", "skip_connect", "nor_conv_1x1", "nor_conv_3x3", "avg_pool_3x3"];

pub const TRANS101_OPS: [&str; 4] = ["zero", "skip_connect", "conv_1x1", "conv_3x3"];

pub const DARTS_OPS: [&str; 8] = [
    "none",
    "max_pool_3x3",
    "avg_pool_3x3",
    "skip_connect",
    "sep_conv_3x3",
    "sep_conv_5x5",
    "dil_conv_3x3",
    "dil_conv_5x5",
];

/// Intermediate nodes per DARTS cell.
pub const DARTS_NODES: usize = 4;
/// `(op, input)` pairs per DARTS cell.
pub const DARTS_SLOTS_PER_CELL: usize = 2 * DARTS_NODES;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpaceError {
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("arity mismatch: expected {expected} slots, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("invalid input index {index} for node {node}")]
    InvalidInputIndex { node: usize, index: usize },
    #[error("malformed encoding: {0}")]
    MalformedEncoding(String),
    #[error("search space `{0}` is not enumerable")]
    NotEnumerable(SpaceId),
    #[error("no architecture found in text")]
    NoArchitectureFound,
    #[error("space mismatch: expected `{expected}`, got `{got}`")]
    SpaceMismatch { expected: SpaceId, got: SpaceId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceId {
    Nas201,
    Trans101,
    Darts,
}

impl SpaceId {
    pub const ALL: [SpaceId; 3] = [SpaceId::Nas201, SpaceId::Trans101, SpaceId::Darts];

    pub fn as_str(self) -> &'static str {
        match self {
            SpaceId::Nas201 => "nas201",
            SpaceId::Trans101 => "trans101",
            SpaceId::Darts => "darts",
        }
    }

    /// Stable numeric code used to key surrogate weight streams.
    pub fn code(self) -> u64 {
        match self {
            SpaceId::Nas201 => 1,
            SpaceId::Trans101 => 2,
            SpaceId::Darts => 3,
        }
    }
}

impl fmt::Display for SpaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpaceId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nas201" => Ok(SpaceId::Nas201),
            "trans101" => Ok(SpaceId::Trans101),
            "darts" => Ok(SpaceId::Darts),
            other => Err(format!("unknown search space `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Normal,
    Reduce,
}

/// What a single decision slot connects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SlotTopology {
    /// Operator on the edge `from -> to` of a 4-node DAG (node 0 is the cell input).
    Edge { from: usize, to: usize },
    /// One of the two incoming `(op, input)` pairs of a DARTS node. `node` is
    /// the node id (2..=5); valid inputs are `0..=node - 1`.
    NodeInput { cell: CellKind, node: usize },
}

impl fmt::Display for SlotTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotTopology::Edge { from, to } => write!(f, "edge {from}->{to}"),
            SlotTopology::NodeInput {
                cell: CellKind::Normal,
                node,
            } => write!(f, "normal cell, node {node}"),
            SlotTopology::NodeInput {
                cell: CellKind::Reduce,
                node,
            } => write!(f, "reduction cell, node {node}"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpaceDescriptor {
    pub space_id: SpaceId,
    pub operator_names: Vec<&'static str>,
    pub slot_count: usize,
    pub topology: Vec<SlotTopology>,
    pub enumerable: bool,
    pub task_description: &'static str,
}

/// Fixed descriptor for `space_id`.
pub fn describe_space(space_id: SpaceId) -> &'static SpaceDescriptor {
    static NAS201: OnceLock<SpaceDescriptor> = OnceLock::new();
    static TRANS101: OnceLock<SpaceDescriptor> = OnceLock::new();
    static DARTS: OnceLock<SpaceDescriptor> = OnceLock::new();
    match space_id {
        SpaceId::Nas201 => NAS201.get_or_init(|| SpaceDescriptor {
            space_id,
            operator_names: NAS201_OPS.to_vec(),
            slot_count: 6,
            topology: dag_edges(),
            enumerable: true,
            task_description: "Image classification on CIFAR-10 with a cell-based convolutional network.",
        }),
        SpaceId::Trans101 => TRANS101.get_or_init(|| SpaceDescriptor {
            space_id,
            operator_names: TRANS101_OPS.to_vec(),
            slot_count: 6,
            topology: dag_edges(),
            enumerable: true,
            task_description: "Object classification with a cell-based encoder shared across vision tasks.",
        }),
        SpaceId::Darts => DARTS.get_or_init(|| {
            let mut topology = Vec::with_capacity(2 * DARTS_SLOTS_PER_CELL);
            for cell in [CellKind::Normal, CellKind::Reduce] {
                for pos in 0..DARTS_NODES {
                    for _ in 0..2 {
                        topology.push(SlotTopology::NodeInput { cell, node: pos + 2 });
                    }
                }
            }
            SpaceDescriptor {
                space_id,
                operator_names: DARTS_OPS.to_vec(),
                slot_count: 2 * DARTS_SLOTS_PER_CELL,
                topology,
                enumerable: false,
                task_description: "Image classification on CIFAR-10 with stacked normal and reduction cells.",
            }
        }),
    }
}

fn dag_edges() -> Vec<SlotTopology> {
    let mut edges = Vec::with_capacity(6);
    for to in 1..4 {
        for from in 0..to {
            edges.push(SlotTopology::Edge { from, to });
        }
    }
    edges
}

impl SpaceDescriptor {
    pub fn op_count(&self) -> usize {
        self.operator_names.len()
    }

    /// Number of valid architectures, for enumerable spaces.
    pub fn size(&self) -> Option<u64> {
        self.enumerable
            .then(|| (self.op_count() as u64).pow(self.slot_count as u32))
    }

    pub fn op_index(&self, label: &str) -> Option<usize> {
        self.operator_names.iter().position(|o| *o == label)
    }

    fn op_index_or_err(&self, label: &str) -> Result<u8, SpaceError> {
        self.op_index(label)
            .map(|i| i as u8)
            .ok_or_else(|| SpaceError::UnknownOperator(label.to_string()))
    }

    fn is_darts(&self) -> bool {
        self.space_id == SpaceId::Darts
    }

    /// Cardinality of every decision variable: operator slots first, then
    /// (DARTS only) input slots.
    pub fn decision_cardinalities(&self) -> Vec<usize> {
        let mut out = vec![self.op_count(); self.slot_count];
        if self.is_darts() {
            out.extend((0..self.slot_count).map(|s| darts_node_of(s) + 2));
        }
        out
    }

    /// Human-readable summary of the space for prompts: operators, topology
    /// and the exact output grammar.
    pub fn prompt_description(&self) -> String {
        let ops = self.operator_names.join(", ");
        match self.space_id {
            SpaceId::Nas201 | SpaceId::Trans101 => format!(
                "Search space `{id}`: a cell is a DAG with 4 nodes (node 0 is the cell input, node 3 the output). \
Every edge i -> j with i < j carries exactly one operator from [{ops}], giving 6 edges in total.\n\
Encoding: for each target node j = 1, 2, 3 list its incoming edges as `|op~i|` in increasing i, \
and join the three groups with `+`, e.g.\n{example}",
                id = self.space_id,
                example = self.example_text(),
            ),
            SpaceId::Darts => format!(
                "Search space `darts`: a network stacks a normal cell and a reduction cell. Each cell has two input \
layers (0 and 1) and four sequential nodes (2, 3, 4, 5). Every node takes two distinct inputs, each from an \
input layer or an earlier node, and applies one operator from [{ops}] to each.\n\
Encoding: `normal=(...) reduce=(...)` where each cell lists its four nodes in order as `(op@input, op@input)`, e.g.\n{example}",
                example = self.example_text(),
            ),
        }
    }

    fn example_text(&self) -> String {
        let ops = vec![0u8; self.slot_count];
        let inputs = if self.is_darts() {
            darts_default_inputs()
        } else {
            Vec::new()
        };
        render(self.space_id, &ops, &inputs)
    }
}

fn darts_node_of(slot: usize) -> usize {
    (slot % DARTS_SLOTS_PER_CELL) / 2
}

fn darts_default_inputs() -> Vec<u8> {
    (0..2 * DARTS_SLOTS_PER_CELL).map(|s| (s % 2) as u8).collect()
}

/// A validated assignment of operators (and, for DARTS, inputs) to slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Architecture {
    space_id: SpaceId,
    ops: Vec<u8>,
    inputs: Vec<u8>,
    text: String,
}

impl Architecture {
    pub fn new(space: &SpaceDescriptor, ops: Vec<u8>, inputs: Vec<u8>) -> Result<Self, SpaceError> {
        if ops.len() != space.slot_count {
            return Err(SpaceError::ArityMismatch {
                expected: space.slot_count,
                got: ops.len(),
            });
        }
        if let Some(&bad) = ops.iter().find(|&&o| o as usize >= space.op_count()) {
            return Err(SpaceError::UnknownOperator(format!("#{bad}")));
        }
        if space.is_darts() {
            if inputs.len() != space.slot_count {
                return Err(SpaceError::ArityMismatch {
                    expected: space.slot_count,
                    got: inputs.len(),
                });
            }
            for (s, pair) in inputs.chunks(2).enumerate() {
                let node = (s % DARTS_NODES) + 2;
                for &i in pair {
                    if i as usize >= node {
                        return Err(SpaceError::InvalidInputIndex {
                            node,
                            index: i as usize,
                        });
                    }
                }
                if pair[0] == pair[1] {
                    return Err(SpaceError::InvalidInputIndex {
                        node,
                        index: pair[1] as usize,
                    });
                }
            }
        } else if !inputs.is_empty() {
            return Err(SpaceError::MalformedEncoding(format!(
                "space `{}` has no input slots",
                space.space_id
            )));
        }
        let text = render(space.space_id, &ops, &inputs);
        Ok(Self {
            space_id: space.space_id,
            ops,
            inputs,
            text,
        })
    }

    /// Builds from the flat decision vector (see [`SpaceDescriptor::decision_cardinalities`]).
    pub fn from_decisions(space: &SpaceDescriptor, decisions: &[usize]) -> Result<Self, SpaceError> {
        let expected = space.decision_cardinalities().len();
        if decisions.len() != expected {
            return Err(SpaceError::ArityMismatch {
                expected,
                got: decisions.len(),
            });
        }
        let to_u8 = |d: &usize| u8::try_from(*d).map_err(|_| SpaceError::UnknownOperator(format!("#{d}")));
        let ops = decisions[..space.slot_count]
            .iter()
            .map(to_u8)
            .collect::<Result<_, _>>()?;
        let inputs = decisions[space.slot_count..]
            .iter()
            .map(to_u8)
            .collect::<Result<_, _>>()?;
        Self::new(space, ops, inputs)
    }

    pub fn space_id(&self) -> SpaceId {
        self.space_id
    }

    pub fn descriptor(&self) -> &'static SpaceDescriptor {
        describe_space(self.space_id)
    }

    /// Operator index per slot.
    pub fn ops(&self) -> &[u8] {
        &self.ops
    }

    /// Input index per slot (DARTS only, empty otherwise).
    pub fn inputs(&self) -> &[u8] {
        &self.inputs
    }

    pub fn decisions(&self) -> Vec<usize> {
        self.ops.iter().chain(self.inputs.iter()).map(|&v| v as usize).collect()
    }

    pub fn canonical_text(&self) -> &str {
        &self.text
    }

    pub fn ensure_space(&self, expected: SpaceId) -> Result<(), SpaceError> {
        if self.space_id == expected {
            Ok(())
        } else {
            Err(SpaceError::SpaceMismatch {
                expected,
                got: self.space_id,
            })
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

fn render(space_id: SpaceId, ops: &[u8], inputs: &[u8]) -> String {
    let names = &describe_space(space_id).operator_names;
    match space_id {
        SpaceId::Nas201 | SpaceId::Trans101 => {
            let mut out = String::new();
            let mut slot = 0;
            for to in 1..4 {
                if to > 1 {
                    out.push('+');
                }
                out.push('|');
                for from in 0..to {
                    out.push_str(names[ops[slot] as usize]);
                    out.push('~');
                    out.push_str(&from.to_string());
                    out.push('|');
                    slot += 1;
                }
            }
            out
        }
        SpaceId::Darts => {
            let cell = |c: usize| {
                let nodes: Vec<String> = (0..DARTS_NODES)
                    .map(|n| {
                        let a = c * DARTS_SLOTS_PER_CELL + 2 * n;
                        format!(
                            "({}@{}, {}@{})",
                            names[ops[a] as usize],
                            inputs[a],
                            names[ops[a + 1] as usize],
                            inputs[a + 1]
                        )
                    })
                    .collect();
                format!("({})", nodes.join(", "))
            };
            format!("normal={} reduce={}", cell(0), cell(1))
        }
    }
}

pub fn render_architecture(arch: &Architecture) -> String {
    arch.text.clone()
}

pub fn parse_architecture(space: &SpaceDescriptor, text: &str) -> Result<Architecture, SpaceError> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err(SpaceError::MalformedEncoding("empty text".into()));
    }
    match space.space_id {
        SpaceId::Nas201 | SpaceId::Trans101 => parse_dag(space, &compact),
        SpaceId::Darts => parse_darts(space, &compact),
    }
}

fn is_label(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_index(s: &str) -> Result<usize, SpaceError> {
    if s.is_empty() || !s.chars().all(|c| c.is_ascii_digit()) {
        return Err(SpaceError::MalformedEncoding(format!("bad index `{s}`")));
    }
    s.parse()
        .map_err(|_| SpaceError::MalformedEncoding(format!("bad index `{s}`")))
}

fn parse_dag(space: &SpaceDescriptor, text: &str) -> Result<Architecture, SpaceError> {
    let mut groups: Vec<Vec<(&str, usize)>> = Vec::new();
    for group in text.split('+') {
        let parts: Vec<&str> = group.split('|').collect();
        if parts.len() < 3 || !parts[0].is_empty() || !parts[parts.len() - 1].is_empty() {
            return Err(SpaceError::MalformedEncoding(format!("bad node group `{group}`")));
        }
        let mut segs = Vec::new();
        for seg in &parts[1..parts.len() - 1] {
            let (op, pred) = seg
                .split_once('~')
                .ok_or_else(|| SpaceError::MalformedEncoding(format!("bad edge `{seg}`")))?;
            if !is_label(op) {
                return Err(SpaceError::MalformedEncoding(format!("bad operator `{op}`")));
            }
            segs.push((op, parse_index(pred)?));
        }
        groups.push(segs);
    }
    let total: usize = groups.iter().map(Vec::len).sum();
    if total != space.slot_count {
        return Err(SpaceError::ArityMismatch {
            expected: space.slot_count,
            got: total,
        });
    }
    if groups.len() != 3 || groups.iter().enumerate().any(|(j, g)| g.len() != j + 1) {
        return Err(SpaceError::MalformedEncoding(
            "expected node groups of 1, 2 and 3 edges".into(),
        ));
    }
    let mut ops = Vec::with_capacity(total);
    for (j, group) in groups.iter().enumerate() {
        for (i, (op, pred)) in group.iter().enumerate() {
            ops.push(space.op_index_or_err(op)?);
            if *pred != i {
                return Err(SpaceError::InvalidInputIndex {
                    node: j + 1,
                    index: *pred,
                });
            }
        }
    }
    Architecture::new(space, ops, Vec::new())
}

/// Minimal cursor over the whitespace-free DARTS encoding.
struct Cursor<'a> {
    rest: &'a str,
}

impl<'a> Cursor<'a> {
    fn eat(&mut self, token: &str) -> Result<(), SpaceError> {
        match self.rest.strip_prefix(token) {
            Some(r) => {
                self.rest = r;
                Ok(())
            }
            None => Err(SpaceError::MalformedEncoding(format!(
                "expected `{token}` at `{}`",
                self.rest.chars().take(16).collect::<String>()
            ))),
        }
    }

    fn peek(&self, token: &str) -> bool {
        self.rest.starts_with(token)
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        let end = self.rest.find(|c| !pred(c)).unwrap_or(self.rest.len());
        let (head, tail) = self.rest.split_at(end);
        self.rest = tail;
        head
    }
}

fn parse_darts_cell<'a>(cur: &mut Cursor<'a>) -> Result<Vec<Vec<(&'a str, usize)>>, SpaceError> {
    cur.eat("(")?;
    let mut nodes = Vec::new();
    loop {
        cur.eat("(")?;
        let mut items = Vec::new();
        loop {
            let op = cur.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
            if op.is_empty() {
                return Err(SpaceError::MalformedEncoding("missing operator".into()));
            }
            cur.eat("@")?;
            let idx = parse_index(cur.take_while(|c| c.is_ascii_digit()))?;
            items.push((op, idx));
            if cur.peek(",") {
                cur.eat(",")?;
            } else {
                break;
            }
        }
        cur.eat(")")?;
        nodes.push(items);
        if cur.peek(",") {
            cur.eat(",")?;
        } else {
            break;
        }
    }
    cur.eat(")")?;
    Ok(nodes)
}

fn parse_darts(space: &SpaceDescriptor, text: &str) -> Result<Architecture, SpaceError> {
    let mut cur = Cursor { rest: text };
    cur.eat("normal=")?;
    let normal = parse_darts_cell(&mut cur)?;
    cur.eat("reduce=")?;
    let reduce = parse_darts_cell(&mut cur)?;
    if !cur.rest.is_empty() {
        return Err(SpaceError::MalformedEncoding(format!("trailing text `{}`", cur.rest)));
    }
    let mut ops = Vec::with_capacity(space.slot_count);
    let mut inputs = Vec::with_capacity(space.slot_count);
    for cell in [normal, reduce] {
        let got: usize = cell.iter().map(Vec::len).sum();
        if got != DARTS_SLOTS_PER_CELL {
            return Err(SpaceError::ArityMismatch {
                expected: DARTS_SLOTS_PER_CELL,
                got,
            });
        }
        if cell.len() != DARTS_NODES || cell.iter().any(|n| n.len() != 2) {
            return Err(SpaceError::MalformedEncoding(
                "every node needs exactly two inputs".into(),
            ));
        }
        for (op, idx) in cell.into_iter().flatten() {
            ops.push(space.op_index_or_err(op)?);
            inputs.push(u8::try_from(idx).unwrap_or(u8::MAX));
        }
    }
    Architecture::new(space, ops, inputs)
}

/// Canonical form of any accepted encoding.
pub fn canonicalize(space: &SpaceDescriptor, text: &str) -> Result<String, SpaceError> {
    parse_architecture(space, text).map(|a| a.text)
}

pub fn random_architecture(space: &SpaceDescriptor, rng: &mut SeededRng) -> Architecture {
    let n = space.op_count();
    let ops: Vec<u8> = (0..space.slot_count).map(|_| rng.gen_range(0..n) as u8).collect();
    let mut inputs = Vec::new();
    if space.is_darts() {
        for s in (0..space.slot_count).step_by(2) {
            let card = darts_node_of(s) + 2;
            let first = rng.gen_range(0..card);
            let mut second = rng.gen_range(0..card - 1);
            if second >= first {
                second += 1;
            }
            inputs.push(first as u8);
            inputs.push(second as u8);
        }
    }
    Architecture::new(space, ops, inputs).expect("random draw is valid by construction")
}

/// Every valid architecture of an enumerable space, in lexicographic gene order.
pub fn enumerate_space(space: &SpaceDescriptor) -> Result<Enumeration, SpaceError> {
    if !space.enumerable {
        return Err(SpaceError::NotEnumerable(space.space_id));
    }
    Ok(Enumeration {
        space: space.clone(),
        next: Some(vec![0; space.slot_count]),
    })
}

pub struct Enumeration {
    space: SpaceDescriptor,
    next: Option<Vec<u8>>,
}

impl Iterator for Enumeration {
    type Item = Architecture;

    fn next(&mut self) -> Option<Architecture> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let n = self.space.op_count() as u8;
        let mut carried = true;
        for digit in succ.iter_mut().rev() {
            *digit += 1;
            if *digit < n {
                carried = false;
                break;
            }
            *digit = 0;
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(Architecture::new(&self.space, current, Vec::new()).expect("odometer state is valid"))
    }
}

/// All architectures one slot edit away from `arch`.
pub fn neighbors(arch: &Architecture) -> Vec<Architecture> {
    let space = arch.descriptor();
    let n = space.op_count() as u8;
    let mut out = Vec::new();
    for slot in 0..arch.ops.len() {
        for op in 0..n {
            if op != arch.ops[slot] {
                let mut ops = arch.ops.clone();
                ops[slot] = op;
                out.push(Architecture::new(space, ops, arch.inputs.clone()).expect("op edit stays valid"));
            }
        }
    }
    for slot in 0..arch.inputs.len() {
        let sibling = arch.inputs[slot ^ 1];
        let card = (darts_node_of(slot) + 2) as u8;
        for input in 0..card {
            if input != arch.inputs[slot] && input != sibling {
                let mut inputs = arch.inputs.clone();
                inputs[slot] = input;
                out.push(Architecture::new(space, arch.ops.clone(), inputs).expect("input edit stays valid"));
            }
        }
    }
    out
}

fn dag_block_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let group = r"\|[A-Za-z0-9_]+~\d+(?:\|[A-Za-z0-9_]+~\d+)*\|";
        Regex::new(&format!(r"{group}(?:\+{group})*")).expect("static regex")
    })
}

fn darts_block_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let item = r"[A-Za-z0-9_]+\s*@\s*\d+";
        let pair = format!(r"\(\s*{item}(?:\s*,\s*{item})*\s*\)");
        let cell = format!(r"\(\s*{pair}(?:\s*,\s*{pair})*\s*\)");
        Regex::new(&format!(r"normal\s*=\s*{cell}\s*reduce\s*=\s*{cell}")).expect("static regex")
    })
}

/// Every encoding-shaped block in `text`, in order of appearance.
pub fn find_encoded_blocks<'t>(space: &SpaceDescriptor, text: &'t str) -> Vec<&'t str> {
    let re = match space.space_id {
        SpaceId::Nas201 | SpaceId::Trans101 => dag_block_regex(),
        SpaceId::Darts => darts_block_regex(),
    };
    re.find_iter(text).map(|m| m.as_str()).collect()
}

/// Parses the last encoding-shaped block of free-form model output.
pub fn extract_architecture(space: &SpaceDescriptor, llm_text: &str) -> Result<Architecture, SpaceError> {
    let block = find_encoded_blocks(space, llm_text)
        .pop()
        .ok_or(SpaceError::NoArchitectureFound)?;
    parse_architecture(space, block)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = "|nor_conv_3x3~0|+|none~0|skip_connect~1|+|avg_pool_3x3~0|nor_conv_1x1~1|skip_connect~2|";

    fn nas() -> &'static SpaceDescriptor {
        describe_space(SpaceId::Nas201)
    }

    #[test]
    fn descriptors() {
        assert_eq!(nas().size(), Some(15_625));
        assert_eq!(nas().slot_count, 6);
        let t = describe_space(SpaceId::Trans101);
        assert_eq!((t.op_count(), t.slot_count, t.size()), (4, 6, Some(4_096)));
        let d = describe_space(SpaceId::Darts);
        assert_eq!(
            (d.op_count(), d.slot_count, d.enumerable, d.size()),
            (8, 16, false, None)
        );
    }

    #[test]
    fn parses_reference_string() {
        let a = parse_architecture(nas(), EXAMPLE).unwrap();
        assert_eq!(a.ops(), &[3, 0, 1, 4, 2, 1]);
        assert_eq!(a.canonical_text(), EXAMPLE);
    }

    #[test]
    fn parse_errors() {
        let bad_op = EXAMPLE.replace("nor_conv_1x1", "conv_9x9");
        assert_eq!(
            parse_architecture(nas(), &bad_op),
            Err(SpaceError::UnknownOperator("conv_9x9".into()))
        );
        let five = "|nor_conv_3x3~0|+|none~0|skip_connect~1|+|avg_pool_3x3~0|nor_conv_1x1~1|";
        assert_eq!(
            parse_architecture(nas(), five),
            Err(SpaceError::ArityMismatch { expected: 6, got: 5 })
        );
        let wrong_pred = EXAMPLE.replace("skip_connect~2", "skip_connect~0");
        assert_eq!(
            parse_architecture(nas(), &wrong_pred),
            Err(SpaceError::InvalidInputIndex { node: 3, index: 0 })
        );
        assert!(matches!(
            parse_architecture(nas(), "hello"),
            Err(SpaceError::MalformedEncoding(_))
        ));
        assert!(matches!(
            parse_architecture(nas(), ""),
            Err(SpaceError::MalformedEncoding(_))
        ));
        // Trans101 rejects NAS201 operator names.
        assert!(matches!(
            parse_architecture(describe_space(SpaceId::Trans101), EXAMPLE),
            Err(SpaceError::UnknownOperator(_))
        ));
    }

    #[test]
    fn renders_all_first_operator() {
        let a = Architecture::new(nas(), vec![0; 6], vec![]).unwrap();
        assert_eq!(a.canonical_text(), "|none~0|+|none~0|none~1|+|none~0|none~1|none~2|");
    }

    #[test]
    fn whitespace_is_not_significant() {
        let spaced = EXAMPLE.replace('+', " + ");
        assert_eq!(canonicalize(nas(), &spaced).unwrap(), EXAMPLE);
    }

    #[test]
    fn darts_round_trip_and_validation() {
        let d = describe_space(SpaceId::Darts);
        let text = "normal=((sep_conv_3x3@0, sep_conv_3x3@1), (skip_connect@0, sep_conv_3x3@1), \
(skip_connect@0, dil_conv_3x3@2), (sep_conv_5x5@3, max_pool_3x3@4)) \
reduce=((max_pool_3x3@0, max_pool_3x3@1), (skip_connect@2, max_pool_3x3@1), \
(max_pool_3x3@0, skip_connect@2), (skip_connect@2, avg_pool_3x3@0))";
        let a = parse_architecture(d, text).unwrap();
        assert_eq!(a.canonical_text(), text);
        assert_eq!(a.inputs()[7], 4);

        let dup = text.replace("(sep_conv_3x3@0, sep_conv_3x3@1)", "(sep_conv_3x3@0, sep_conv_3x3@0)");
        assert_eq!(
            parse_architecture(d, &dup),
            Err(SpaceError::InvalidInputIndex { node: 2, index: 0 })
        );
        let too_far = text.replace("(sep_conv_5x5@3, max_pool_3x3@4)", "(sep_conv_5x5@3, max_pool_3x3@5)");
        assert_eq!(
            parse_architecture(d, &too_far),
            Err(SpaceError::InvalidInputIndex { node: 5, index: 5 })
        );
        let three_nodes = "normal=((none@0, none@1), (none@0, none@1), (none@0, none@1)) reduce=((none@0, none@1))";
        assert_eq!(
            parse_architecture(d, three_nodes),
            Err(SpaceError::ArityMismatch { expected: 8, got: 6 })
        );
    }

    #[test]
    fn enumeration_order_and_errors() {
        let mut it = enumerate_space(nas()).unwrap();
        assert_eq!(it.next().unwrap().ops(), &[0, 0, 0, 0, 0, 0]);
        assert_eq!(it.next().unwrap().ops(), &[0, 0, 0, 0, 0, 1]);
        assert_eq!(enumerate_space(nas()).unwrap().last().unwrap().ops(), &[4; 6]);
        assert!(matches!(
            enumerate_space(describe_space(SpaceId::Darts)),
            Err(SpaceError::NotEnumerable(SpaceId::Darts))
        ));
    }

    #[test]
    fn neighbor_counts() {
        let a = parse_architecture(nas(), EXAMPLE).unwrap();
        assert_eq!(neighbors(&a).len(), 24);
        let t = describe_space(SpaceId::Trans101);
        assert_eq!(neighbors(&random_architecture(t, &mut SeededRng::new(3))).len(), 18);
        // DARTS: 16 * 7 op edits; input edits per node position p give 2 * p
        // alternatives (p + 2 choices minus current minus sibling), twice per cell.
        let d = describe_space(SpaceId::Darts);
        let arch = random_architecture(d, &mut SeededRng::new(3));
        assert_eq!(neighbors(&arch).len(), 16 * 7 + 2 * 2 * (0 + 1 + 2 + 3));
    }

    #[test]
    fn extraction() {
        let text = "Strategy: widen. Final: |none~0|+|skip_connect~0|none~1|+|none~0|none~1|nor_conv_3x3~2|";
        let a = extract_architecture(nas(), text).unwrap();
        assert_eq!(a.ops(), &[0, 1, 0, 0, 0, 3]);
        let two = format!("first {EXAMPLE} then {}", a.canonical_text());
        assert_eq!(extract_architecture(nas(), &two).unwrap(), a);
        assert_eq!(
            extract_architecture(nas(), "I recommend more convolutions."),
            Err(SpaceError::NoArchitectureFound)
        );
        let five = "answer: |nor_conv_3x3~0|+|none~0|skip_connect~1|+|avg_pool_3x3~0|nor_conv_1x1~1|";
        assert_eq!(
            extract_architecture(nas(), five),
            Err(SpaceError::ArityMismatch { expected: 6, got: 5 })
        );
    }

    #[test]
    fn random_golden_value() {
        let a = random_architecture(nas(), &mut SeededRng::new(0));
        let b = random_architecture(nas(), &mut SeededRng::new(0));
        assert_eq!(a, b);
        assert_eq!(a.canonical_text(), GOLDEN_SEED0);
    }

    const GOLDEN_SEED0: &str =
        "|nor_conv_3x3~0|+|nor_conv_1x1~0|nor_conv_3x3~1|+|none~0|avg_pool_3x3~1|avg_pool_3x3~2|";
}
