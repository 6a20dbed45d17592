//! Per-trace summary rows plus per-method mean and standard deviation.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::trace::SearchTrace;
use super::SearchError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    /// `run` or `aggregate`
    pub kind: String,
    pub method: String,
    pub trace: String,
    pub seed: Option<u64>,
    pub best_raw: Option<f64>,
    pub best_oriented: Option<f64>,
    pub best_iteration: Option<u32>,
    pub evaluations: Option<u64>,
    pub runs: Option<usize>,
    /// Mean of `best_raw` over the method's runs.
    pub mean: Option<f64>,
    /// Sample standard deviation (n - 1) of `best_raw`; 0 for a single run.
    pub std: Option<f64>,
}

/// Label used to group traces, e.g. `seki[greedy_mutation+majority_recombination]`.
pub fn method_label(trace: &SearchTrace) -> String {
    let c = &trace.header.config;
    match (&c.method, &c.llm) {
        (
            super::Method::Seki,
            crate::llm::LlmSpec::Scripted {
                self_evolution,
                inspiration,
            },
        ) => format!(
            "seki[{}+{}]",
            serde_json::to_value(self_evolution)
                .unwrap()
                .as_str()
                .unwrap_or_default(),
            serde_json::to_value(inspiration).unwrap().as_str().unwrap_or_default()
        ),
        (super::Method::Seki, crate::llm::LlmSpec::Http { .. }) => format!("seki[{}]", c.llm_params.model_name),
        (m, _) => m.as_str().to_string(),
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

pub fn build_report(traces: &[(String, SearchTrace)]) -> Result<Vec<ReportRow>, SearchError> {
    if traces.is_empty() {
        return Err(SearchError::Config("report needs at least one trace".into()));
    }
    let mut methods: Vec<String> = Vec::new();
    let mut rows = Vec::new();
    for (name, t) in traces {
        let label = method_label(t);
        if !methods.contains(&label) {
            methods.push(label.clone());
        }
        let f = &t.final_record;
        rows.push(ReportRow {
            kind: "run".into(),
            method: label,
            trace: name.clone(),
            seed: Some(t.header.config.seed),
            best_raw: Some(f.best_fitness.raw_metric),
            best_oriented: Some(f.best_fitness.oriented_value),
            best_iteration: Some(f.best_iteration),
            evaluations: Some(f.evaluations),
            runs: None,
            mean: None,
            std: None,
        });
    }
    for m in methods {
        let values: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == m)
            .filter_map(|r| r.best_raw)
            .collect();
        let (mean, std) = mean_std(&values);
        rows.push(ReportRow {
            kind: "aggregate".into(),
            method: m,
            trace: String::new(),
            seed: None,
            best_raw: None,
            best_oriented: None,
            best_iteration: None,
            evaluations: None,
            runs: Some(values.len()),
            mean: Some(mean),
            std: Some(std),
        });
    }
    Ok(rows)
}

pub fn report_from_paths(paths: &[impl AsRef<Path>]) -> Result<Vec<ReportRow>, SearchError> {
    let traces = paths
        .iter()
        .map(|p| {
            let p = p.as_ref();
            SearchTrace::read(p).map(|t| (p.display().to_string(), t))
        })
        .collect::<Result<Vec<_>, _>>()?;
    build_report(&traces)
}

pub fn write_report_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<(), SearchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| SearchError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| SearchError::Io(e.to_string()))
}
