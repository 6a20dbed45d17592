use std::path::Path;

use serde_json::Value;

use super::search::run;
use super::trace::SearchTrace;
use super::SearchError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    /// Iteration records compared (initial architecture included).
    pub records_checked: usize,
}

/// Re-executes the run recorded at `trace_path` and checks every canonical
/// field of every line against the recording.
pub fn replay(trace_path: &Path) -> Result<ReplayReport, SearchError> {
    let recorded = SearchTrace::read(trace_path)?;
    replay_trace(&recorded)
}

pub fn replay_trace(recorded: &SearchTrace) -> Result<ReplayReport, SearchError> {
    let config = &recorded.header.config;
    if !config.llm.is_replayable() {
        return Err(SearchError::NotReplayable(
            "the run used a live HTTP model, whose replies cannot be regenerated".into(),
        ));
    }
    let fresh = run(config)?.trace;
    let ours = recorded.canonical_values();
    let theirs = fresh.canonical_values();
    // config line
    if let Some(field) = first_difference(&ours[0]["data"], &theirs[0]["data"]) {
        return Err(SearchError::DivergenceAt {
            iteration: None,
            field: format!("config.{field}"),
        });
    }
    for (r, (a, b)) in ours[1..].iter().zip(&theirs[1..]).enumerate() {
        if let Some(field) = first_difference(a, b) {
            let iteration = match a["kind"].as_str() {
                Some("iteration") => a["data"]["iteration"].as_u64().map(|i| i as u32),
                _ => None,
            };
            let field = if a["kind"] == b["kind"] { field } else { "kind".into() };
            return Err(SearchError::DivergenceAt {
                iteration: iteration.or(Some(r as u32)),
                field: if a["kind"] == "final" {
                    format!("final.{field}")
                } else {
                    field
                },
            });
        }
    }
    if ours.len() != theirs.len() {
        return Err(SearchError::DivergenceAt {
            iteration: Some(ours.len().min(theirs.len()).saturating_sub(2) as u32),
            field: "record_count".into(),
        });
    }
    Ok(ReplayReport {
        records_checked: recorded.records.len(),
    })
}

/// Dotted path of the first differing field, descending into `data`.
fn first_difference(a: &Value, b: &Value) -> Option<String> {
    if a == b {
        return None;
    }
    let data_a = a.get("data").unwrap_or(a);
    let data_b = b.get("data").unwrap_or(b);
    match (data_a, data_b) {
        (Value::Object(x), Value::Object(y)) => {
            for (k, va) in x {
                if y.get(k) != Some(va) {
                    return Some(k.clone());
                }
            }
            y.keys()
                .find(|k| !x.contains_key(*k))
                .cloned()
                .or_else(|| Some("kind".into()))
        }
        _ => Some("value".into()),
    }
}
