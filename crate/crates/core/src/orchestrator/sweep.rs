//! Ablation sweeps over `lambda`, `k`, `xi` and the seed.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::config::SearchConfig;
use super::search::run;
use super::SearchError;

/// `xi` expressed as a fraction of `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub num: usize,
    pub den: usize,
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Ratio {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (num, den) = s.split_once('/').unwrap_or((s, "1"));
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad ratio `{s}`"));
        let r = Ratio {
            num: parse(num)?,
            den: parse(den)?,
        };
        if r.den == 0 || r.num == 0 {
            return Err(format!("bad ratio `{s}`"));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XiAxis {
    Absolute(Vec<usize>),
    RatioOfK(Vec<Ratio>),
}

/// Named parameter lists; an empty list means "the base configuration's value".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepGrid {
    pub lambdas: Vec<u32>,
    pub ks: Vec<usize>,
    pub xis: XiAxis,
    pub seeds: Vec<u64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            lambdas: Vec::new(),
            ks: Vec::new(),
            xis: XiAxis::Absolute(Vec::new()),
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum XiChoice {
    Base,
    Absolute(usize),
    Ratio(Ratio),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: u32,
    pub gamma: i64,
    pub k: usize,
    pub xi: usize,
    pub xi_ratio: String,
    pub seed: u64,
    pub status: String,
    pub best_oriented: Option<f64>,
    pub best_raw: Option<f64>,
    pub best_iteration: Option<u32>,
    pub evaluations: Option<u64>,
    pub note: String,
}

fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Runs the cross product of `grid` over `base`. Cells that violate a
/// configuration constraint become `skipped` rows; cells run in parallel and
/// rows come back in grid order (lambda, k, xi, seed; last varies fastest).
pub fn ablation_sweep(base: &SearchConfig, grid: &SweepGrid) -> Vec<SweepRow> {
    let lambdas = axis(&grid.lambdas, base.lambda);
    let ks = axis(&grid.ks, base.k);
    let xis: Vec<XiChoice> = match &grid.xis {
        XiAxis::Absolute(v) if v.is_empty() => vec![XiChoice::Base],
        XiAxis::Absolute(v) => v.iter().map(|&x| XiChoice::Absolute(x)).collect(),
        XiAxis::RatioOfK(v) if v.is_empty() => vec![XiChoice::Base],
        XiAxis::RatioOfK(v) => v.iter().map(|&r| XiChoice::Ratio(r)).collect(),
    };
    let seeds = axis(&grid.seeds, base.seed);

    let mut cells = Vec::new();
    for &lambda in &lambdas {
        for &k in &ks {
            for &xi in &xis {
                for &seed in &seeds {
                    cells.push((lambda, k, xi, seed));
                }
            }
        }
    }
    cells
        .into_par_iter()
        .map(|(lambda, k, xi, seed)| run_cell(base, lambda, k, xi, seed))
        .collect()
}

fn run_cell(base: &SearchConfig, lambda: u32, k: usize, xi: XiChoice, seed: u64) -> SweepRow {
    let (xi_value, xi_ratio, exact) = match xi {
        XiChoice::Base => (base.xi, String::new(), true),
        XiChoice::Absolute(x) => (x, String::new(), true),
        XiChoice::Ratio(r) => ((k * r.num) / r.den, r.to_string(), (k * r.num).is_multiple_of(r.den)),
    };
    let mut row = SweepRow {
        lambda,
        gamma: base.n as i64 - lambda as i64,
        k,
        xi: xi_value,
        xi_ratio,
        seed,
        status: "skipped".into(),
        best_oriented: None,
        best_raw: None,
        best_iteration: None,
        evaluations: None,
        note: String::new(),
    };
    if lambda > base.n {
        row.note = format!("lambda {lambda} exceeds n {}", base.n);
        return row;
    }
    if !exact {
        row.note = format!("xi = {} * k is not an integer for k = {k}", row.xi_ratio);
        return row;
    }
    let config = SearchConfig {
        k,
        xi: xi_value,
        seed,
        ..base.clone()
    }
    .with_lambda(lambda);
    if let Err(e) = config.validate() {
        row.note = e.to_string();
        return row;
    }
    match run(&config) {
        Ok(r) => {
            let f = &r.trace.final_record;
            row.status = "ok".into();
            row.best_oriented = Some(f.best_fitness.oriented_value);
            row.best_raw = Some(f.best_fitness.raw_metric);
            row.best_iteration = Some(f.best_iteration);
            row.evaluations = Some(f.evaluations);
            if config.extension_mode() {
                row.note = "xi = k".into();
            }
        }
        Err(e) => {
            row.status = "failed".into();
            row.note = e.to_string();
        }
    }
    row
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), SearchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| SearchError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| SearchError::Io(e.to_string()))
}
