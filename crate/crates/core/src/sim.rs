//! Trace-driven simulation: one engine per (policy, cache size) cell, sweeps
//! across cells, the user-grouping comparison and report rendering.

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotator::is_cacheable;
use crate::engine::{CacheEngine, EngineError, RequestOutcome};
use crate::keying::make_key;
use crate::model::{PolicyConfig, ToolCallRequest};
use crate::policy::PolicyKind;

pub const DEFAULT_FRACTIONS: [f64; 5] = [0.10, 0.20, 0.35, 0.50, 0.90];

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cell {policy}@{fraction}: {source}")]
    Cell {
        policy: PolicyKind,
        fraction: f64,
        #[source]
        source: EngineError,
    },
    #[error("request {seq}: {source}")]
    Request {
        seq: u64,
        #[source]
        source: EngineError,
    },
    #[error("unsupported report format `{0}` (expected json, csv or plot)")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub policies: Vec<PolicyKind>,
    pub cache_fractions: Vec<f64>,
    pub config: PolicyConfig,
    /// Echoed into the report.
    pub seed: Option<u64>,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
    /// Record wall-clock time per cell. Off by default so reports stay
    /// byte-identical across runs.
    pub timings: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            policies: PolicyKind::ALL.to_vec(),
            cache_fractions: DEFAULT_FRACTIONS.to_vec(),
            config: PolicyConfig::default(),
            seed: None,
            threads: None,
            timings: false,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.policies.is_empty() {
            return Err(SimError::Config("no policies selected".into()));
        }
        if let Some(f) = self.cache_fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(SimError::Config(format!("cache fraction {f} outside (0, 1]")));
        }
        if self.cache_fractions.is_empty() {
            return Err(SimError::Config("no cache fractions selected".into()));
        }
        self.config.validate().map_err(|e| SimError::Config(e.to_string()))
    }
}

/// Metrics of one (policy, cache size) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub policy: PolicyKind,
    pub cache_fraction: f64,
    pub capacity: usize,
    pub requests: u64,
    pub hits: u64,
    pub hit_ratio: f64,
    pub total_latency_ms: f64,
    pub total_cost: f64,
    pub total_bytes: u64,
    pub admissions: u64,
    pub evictions: u64,
    pub expirations: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub seed: Option<u64>,
    pub config: PolicyConfig,
    pub trace_requests: usize,
    pub unique_cacheable: usize,
    pub cells: Vec<CellMetrics>,
}

/// Distinct keys among requests the gate would let into the cache.
pub fn unique_cacheable_keys(requests: &[ToolCallRequest]) -> Result<usize, SimError> {
    let mut keys = HashSet::new();
    for r in requests {
        let a = r.annotation.as_ref().ok_or(SimError::Request {
            seq: r.seq,
            source: EngineError::MissingAnnotation { seq: r.seq },
        })?;
        if is_cacheable(a) {
            let k = make_key(&r.tool_name, &r.params).map_err(|e| SimError::Request {
                seq: r.seq,
                source: e.into(),
            })?;
            keys.insert(k);
        }
    }
    Ok(keys.len())
}

/// `max(1, ⌈fraction · unique⌉)`.
pub fn capacity_for(fraction: f64, unique_cacheable: usize) -> usize {
    ((fraction * unique_cacheable as f64).ceil() as usize).max(1)
}

/// Feeds `requests` through `engine` in order, returning every outcome.
pub fn replay(engine: &mut CacheEngine, requests: &[ToolCallRequest]) -> Result<Vec<RequestOutcome>, SimError> {
    requests
        .iter()
        .map(|r| engine.process(r).map_err(|e| SimError::Request { seq: r.seq, source: e }))
        .collect()
}

fn cell_from(engine: &CacheEngine, policy: PolicyKind, fraction: f64, runtime_ms: Option<f64>) -> CellMetrics {
    let s = engine.stats_snapshot();
    CellMetrics {
        policy,
        cache_fraction: fraction,
        capacity: engine.store().capacity(),
        requests: s.requests,
        hits: s.hits,
        hit_ratio: s.hit_ratio,
        total_latency_ms: s.total_latency_ms,
        total_cost: s.total_cost,
        total_bytes: s.total_bytes,
        admissions: s.admissions,
        evictions: s.evictions,
        expirations: s.expirations,
        runtime_ms,
    }
}

/// Runs one fresh engine over the whole trace.
pub fn run_cell(
    requests: &[ToolCallRequest],
    policy: PolicyKind,
    fraction: f64,
    capacity: usize,
    cfg: &PolicyConfig,
    timed: bool,
) -> Result<CellMetrics, SimError> {
    let started = Instant::now();
    let cell_err = |source| SimError::Cell {
        policy,
        fraction,
        source,
    };
    let cfg = cfg.clone().with_capacity(capacity);
    let mut engine = CacheEngine::with_kind(policy, &cfg).map_err(cell_err)?;
    for r in requests {
        engine.process(r).map_err(cell_err)?;
    }
    let runtime = timed.then(|| started.elapsed().as_secs_f64() * 1e3);
    Ok(cell_from(&engine, policy, fraction, runtime))
}

fn on_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T, SimError> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| SimError::Config(e.to_string()))?;
            Ok(pool.install(job))
        }
        None => Ok(job()),
    }
}

/// Every policy at every fraction. Cells run in parallel and are reported in
/// (policy, fraction) order.
pub fn run_sweep(requests: &[ToolCallRequest], spec: &SweepSpec) -> Result<SimulationReport, SimError> {
    spec.validate()?;
    let unique = unique_cacheable_keys(requests)?;
    let mut cells: Vec<(PolicyKind, f64)> = spec
        .policies
        .iter()
        .flat_map(|p| spec.cache_fractions.iter().map(move |f| (*p, *f)))
        .collect();
    cells.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    cells.dedup();
    let results = on_pool(spec.threads, || {
        cells
            .par_iter()
            .map(|&(p, f)| run_cell(requests, p, f, capacity_for(f, unique), &spec.config, spec.timings))
            .collect::<Result<Vec<_>, _>>()
    })??;
    Ok(SimulationReport {
        seed: spec.seed,
        config: spec.config.clone(),
        trace_requests: requests.len(),
        unique_cacheable: unique,
        cells: results,
    })
}

/// Hit ratio and mean latency with and without the user grouping level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingRow {
    pub fraction: f64,
    pub capacity: usize,
    pub with_user_hit_ratio: f64,
    pub with_user_mean_latency_ms: f64,
    pub without_user_hit_ratio: f64,
    pub without_user_mean_latency_ms: f64,
}

pub fn compare_grouping(
    requests: &[ToolCallRequest],
    fractions: &[f64],
    cfg: &PolicyConfig,
) -> Result<Vec<GroupingRow>, SimError> {
    let unique = unique_cacheable_keys(requests)?;
    let with_user = PolicyConfig {
        max_group_depth: 3,
        ..cfg.clone()
    };
    let without_user = PolicyConfig {
        max_group_depth: 2,
        ..cfg.clone()
    };
    fractions
        .par_iter()
        .map(|&f| {
            let cap = capacity_for(f, unique);
            let a = run_cell(requests, PolicyKind::Vaac, f, cap, &with_user, false)?;
            let b = run_cell(requests, PolicyKind::Vaac, f, cap, &without_user, false)?;
            let mean = |c: &CellMetrics| c.total_latency_ms / c.requests.max(1) as f64;
            Ok(GroupingRow {
                fraction: f,
                capacity: cap,
                with_user_hit_ratio: a.hit_ratio,
                with_user_mean_latency_ms: mean(&a),
                without_user_hit_ratio: b.hit_ratio,
                without_user_mean_latency_ms: mean(&b),
            })
        })
        .collect()
}

/// Per-policy series over cache fractions, for external plotting.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlotSeries {
    pub fraction: Vec<f64>,
    pub hit_ratio: Vec<f64>,
    pub total_latency_ms: Vec<f64>,
    pub total_cost: Vec<f64>,
    pub total_bytes: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Plot,
}

impl std::str::FromStr for ReportFormat {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "plot" => Ok(ReportFormat::Plot),
            _ => Err(SimError::UnsupportedFormat(s.to_string())),
        }
    }
}

impl SimulationReport {
    pub fn to_json(&self) -> Result<String, SimError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_csv(&self) -> Result<String, SimError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["policy", "fraction", "hit_ratio", "total_latency_ms", "total_cost", "total_bytes"])?;
        for c in &self.cells {
            w.write_record([
                c.policy.to_string(),
                c.cache_fraction.to_string(),
                c.hit_ratio.to_string(),
                c.total_latency_ms.to_string(),
                c.total_cost.to_string(),
                c.total_bytes.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| SimError::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn plot_data(&self) -> BTreeMap<PolicyKind, PlotSeries> {
        let mut out: BTreeMap<PolicyKind, PlotSeries> = BTreeMap::new();
        for c in &self.cells {
            let s = out.entry(c.policy).or_default();
            s.fraction.push(c.cache_fraction);
            s.hit_ratio.push(c.hit_ratio);
            s.total_latency_ms.push(c.total_latency_ms);
            s.total_cost.push(c.total_cost);
            s.total_bytes.push(c.total_bytes);
        }
        out
    }

    pub fn render(&self, format: ReportFormat) -> Result<String, SimError> {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Plot => {
                let mut s = serde_json::to_string_pretty(&self.plot_data())?;
                s.push('\n');
                Ok(s)
            }
        }
    }

    pub fn cell(&self, policy: PolicyKind, fraction: f64) -> Option<&CellMetrics> {
        self.cells
            .iter()
            .find(|c| c.policy == policy && c.cache_fraction == fraction)
    }
}
