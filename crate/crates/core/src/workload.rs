//! Synthetic tool-call workloads: a six-tool catalog, the population of
//! request templates it spans, and Zipf, hotspot, uniform and multi-user
//! request streams.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotator::{annotate_static, CategoryRule, ManifestEntry, ToolManifest, TtlClass};
use crate::model::{ParamValue, Params, RequestType, ToolCallRequest};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkloadError {
    #[error("cannot split {population} templates into {phases} hotspot phases")]
    InvalidPhasing { phases: usize, population: usize },
    #[error("invalid workload config: {0}")]
    InvalidConfig(String),
    #[error("the template population is empty")]
    EmptyPopulation,
}

/// One tool of the catalog with the ranges its ground truth is drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub request_type: RequestType,
    pub ttl_class: TtlClass,
    pub latency_range_ms: (f64, f64),
    pub cost_per_call: f64,
    pub size_range_bytes: (u64, u64),
    pub param_space: usize,
    pub secondary_param_space: usize,
    pub primary_param: String,
    pub secondary_param: String,
}

impl ToolSpec {
    #[allow(clippy::too_many_arguments)]
    fn new(
        name: &str,
        request_type: RequestType,
        ttl_class: TtlClass,
        latency_range_ms: (f64, f64),
        cost_per_call: f64,
        size_range_bytes: (u64, u64),
        params: (&str, &str),
    ) -> Self {
        Self {
            name: name.into(),
            request_type,
            ttl_class,
            latency_range_ms,
            cost_per_call,
            size_range_bytes,
            param_space: 4,
            secondary_param_space: 5,
            primary_param: params.0.into(),
            secondary_param: params.1.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ToolCatalog {
    pub tools: Vec<ToolSpec>,
}

impl ToolCatalog {
    /// Search, wiki lookup, route planning and weather with their usual
    /// latency and price, plus a messaging command and a slow calculator.
    /// Cost is in dollars per call.
    pub fn default_catalog() -> Self {
        use RequestType::{Command, Informational};
        use TtlClass::{Computational, Realtime, Static};
        Self {
            tools: vec![
                ToolSpec::new("search", Informational, Static, (700.0, 2000.0), 0.005, (4_096, 40_960), ("query", "page")),
                ToolSpec::new("wiki-fetch", Informational, Static, (200.0, 1000.0), 0.0, (8_192, 122_880), ("title", "section")),
                ToolSpec::new("map-planning", Informational, Computational, (50.0, 1000.0), 0.005, (2_048, 30_720), ("origin", "destination")),
                ToolSpec::new("weather", Informational, Realtime, (180.0, 220.0), 0.0016, (512, 4_096), ("location", "date")),
                ToolSpec::new("message", Command, TtlClass::Command, (100.0, 300.0), 0.001, (64, 256), ("recipient", "body")),
                ToolSpec::new("calc", Informational, Computational, (1000.0, 3000.0), 0.002, (64, 1_024), ("expression", "precision")),
            ],
        }
    }

    pub fn from_json(text: &str) -> Result<Self, WorkloadError> {
        let c: ToolCatalog = serde_json::from_str(text).map_err(|e| WorkloadError::InvalidConfig(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        for t in &self.tools {
            let (llo, lhi) = t.latency_range_ms;
            let (slo, shi) = t.size_range_bytes;
            if t.name.is_empty() || !(0.0 <= llo && llo <= lhi && lhi.is_finite()) || slo > shi {
                return Err(WorkloadError::InvalidConfig(format!("bad ranges for tool `{}`", t.name)));
            }
            if !(t.cost_per_call.is_finite() && t.cost_per_call >= 0.0) {
                return Err(WorkloadError::InvalidConfig(format!("bad cost for tool `{}`", t.name)));
            }
        }
        Ok(())
    }

    /// Static annotation rules matching the catalog.
    pub fn manifest(&self) -> ToolManifest {
        let mut m = ToolManifest::default();
        for t in &self.tools {
            m.insert(t.name.clone(), ManifestEntry::new(t.request_type, t.ttl_class, CategoryRule::FirstParam));
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionKind {
    Zipf,
    Hotspot,
    Uniform,
    Multiuser,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadConfig {
    pub distribution: DistributionKind,
    pub n_requests: usize,
    pub zipf_alpha: f64,
    pub n_phases: usize,
    /// Requests per hotspot phase; defaults to an even split.
    pub phase_length: Option<usize>,
    /// Share of in-hotspot samples within a phase.
    pub hotspot_share: f64,
    pub n_users: usize,
    pub user_overlap: f64,
    /// Templates per user; defaults to the largest size the population allows.
    pub interest_size: Option<usize>,
    /// Users' Zipf exponents are spread evenly over `alpha ± spread`.
    pub user_alpha_spread: f64,
    pub gap_seconds: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            distribution: DistributionKind::Zipf,
            n_requests: 1000,
            zipf_alpha: 1.1,
            n_phases: 2,
            phase_length: None,
            hotspot_share: 0.8,
            n_users: 10,
            user_overlap: 0.3,
            interest_size: None,
            user_alpha_spread: 0.6,
            gap_seconds: 1.0,
            jitter: 0.05,
            seed: 42,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::InvalidConfig(m.to_string()));
        if self.n_requests == 0 {
            return bad("n_requests must be at least 1");
        }
        if !(self.zipf_alpha.is_finite() && self.zipf_alpha > 0.0) {
            return bad("zipf_alpha must be positive");
        }
        if !(0.0..=1.0).contains(&self.user_overlap) || !(0.0..=1.0).contains(&self.hotspot_share) {
            return bad("user_overlap and hotspot_share must lie in [0, 1]");
        }
        if !(0.0..=0.05).contains(&self.jitter) {
            return bad("jitter must lie in [0, 0.05]");
        }
        if !(self.gap_seconds.is_finite() && self.gap_seconds >= 0.0) {
            return bad("gap_seconds must be non-negative");
        }
        if self.n_users == 0 {
            return bad("n_users must be at least 1");
        }
        Ok(())
    }
}

/// Independent random stream `stream` of `seed`.
fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const POPULATION_STREAM: u64 = 1;
const RANKING_STREAM: u64 = 2;
const SAMPLING_STREAM: u64 = 3;

fn sample_range(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Every (tool, primary, secondary) combination with ground truth drawn once
/// per template. Templates carry their annotation.
pub fn build_population(catalog: &ToolCatalog, cfg: &WorkloadConfig) -> Vec<ToolCallRequest> {
    let mut rng = rng_for(cfg.seed, POPULATION_STREAM);
    let manifest = catalog.manifest();
    let mut out = Vec::new();
    for t in &catalog.tools {
        for p in 0..t.param_space {
            for s in 0..t.secondary_param_space.max(1) {
                let mut params = Params::new();
                params.insert(t.primary_param.clone(), ParamValue::from(format!("{}-{p}", t.primary_param)));
                if t.secondary_param_space > 0 {
                    params.insert(t.secondary_param.clone(), ParamValue::from(s as i64));
                }
                let latency = sample_range(&mut rng, t.latency_range_ms.0, t.latency_range_ms.1);
                let (slo, shi) = t.size_range_bytes;
                let size = if shi > slo { rng.random_range(slo..=shi) } else { slo };
                let mut r = ToolCallRequest::new(0, "", t.name.clone(), params)
                    .with_measurements(latency, t.cost_per_call, size);
                r.gap_seconds = cfg.gap_seconds;
                let features = annotate_static(&r, &manifest).expect("catalog tools are in the manifest");
                out.push(r.with_annotation(features));
            }
        }
    }
    out
}

/// Zipf weights `k^-alpha` for ranks 1..=n.
fn zipf_index(n: usize, alpha: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|k| (k as f64).powf(-alpha))).expect("non-empty positive weights")
}

fn emit(template: &ToolCallRequest, seq: u64, user: String, jitter: f64, rng: &mut ChaCha8Rng) -> ToolCallRequest {
    let mut r = template.clone();
    r.seq = seq;
    r.user_id = user;
    if jitter > 0.0 {
        r.true_latency_ms *= 1.0 + rng.random_range(-jitter..=jitter);
    }
    r
}

fn user_name(u: usize) -> String {
    format!("user-{u}")
}

/// Requests whose rank-k template is drawn with probability ∝ k^-α over a
/// seeded ranking of the population. Users are assigned uniformly.
pub fn gen_zipf(pop: &[ToolCallRequest], cfg: &WorkloadConfig) -> Result<Vec<ToolCallRequest>, WorkloadError> {
    cfg.validate()?;
    if pop.is_empty() {
        return Err(WorkloadError::EmptyPopulation);
    }
    let mut ranking: Vec<usize> = (0..pop.len()).collect();
    ranking.shuffle(&mut rng_for(cfg.seed, RANKING_STREAM));
    let zipf = zipf_index(pop.len(), cfg.zipf_alpha);
    let mut rng = rng_for(cfg.seed, SAMPLING_STREAM);
    Ok((0..cfg.n_requests)
        .map(|i| {
            let t = &pop[ranking[zipf.sample(&mut rng)]];
            let user = user_name(rng.random_range(0..cfg.n_users));
            emit(t, i as u64 + 1, user, cfg.jitter, &mut rng)
        })
        .collect())
}

/// Phased locality: during each phase a share `hotspot_share` of requests is
/// Zipf-distributed over the active region, the rest uniform over the other
/// regions.
pub fn gen_hotspot(pop: &[ToolCallRequest], cfg: &WorkloadConfig) -> Result<Vec<ToolCallRequest>, WorkloadError> {
    cfg.validate()?;
    if cfg.n_phases == 0 || cfg.n_phases > pop.len() {
        return Err(WorkloadError::InvalidPhasing {
            phases: cfg.n_phases,
            population: pop.len(),
        });
    }
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.shuffle(&mut rng_for(cfg.seed, RANKING_STREAM));
    let base = pop.len() / cfg.n_phases;
    let extra = pop.len() % cfg.n_phases;
    let mut regions = Vec::with_capacity(cfg.n_phases);
    let mut start = 0;
    for p in 0..cfg.n_phases {
        let len = base + usize::from(p < extra);
        regions.push(order[start..start + len].to_vec());
        start += len;
    }
    let phase_length = cfg
        .phase_length
        .unwrap_or_else(|| cfg.n_requests.div_ceil(cfg.n_phases))
        .max(1);
    let zipfs: Vec<WeightedIndex<f64>> = regions.iter().map(|r| zipf_index(r.len(), cfg.zipf_alpha)).collect();
    let mut rng = rng_for(cfg.seed, SAMPLING_STREAM);
    Ok((0..cfg.n_requests)
        .map(|i| {
            let phase = (i / phase_length) % cfg.n_phases;
            let outside = pop.len() - regions[phase].len();
            let idx = if outside == 0 || rng.random::<f64>() < cfg.hotspot_share {
                regions[phase][zipfs[phase].sample(&mut rng)]
            } else {
                // Uniform over the other regions, taken in `order` with the
                // active region skipped.
                let mut j = rng.random_range(0..outside);
                let active_start: usize = regions[..phase].iter().map(Vec::len).sum();
                if j >= active_start {
                    j += regions[phase].len();
                }
                order[j]
            };
            let user = user_name(rng.random_range(0..cfg.n_users));
            emit(&pop[idx], i as u64 + 1, user, cfg.jitter, &mut rng)
        })
        .collect())
}

/// Independent uniform draws over the population.
pub fn gen_uniform(pop: &[ToolCallRequest], cfg: &WorkloadConfig) -> Result<Vec<ToolCallRequest>, WorkloadError> {
    cfg.validate()?;
    if pop.is_empty() {
        return Err(WorkloadError::EmptyPopulation);
    }
    let mut rng = rng_for(cfg.seed, SAMPLING_STREAM);
    Ok((0..cfg.n_requests)
        .map(|i| {
            let t = &pop[rng.random_range(0..pop.len())];
            let user = user_name(rng.random_range(0..cfg.n_users));
            emit(t, i as u64 + 1, user, cfg.jitter, &mut rng)
        })
        .collect())
}

/// Per-user interest sets: a shared block of `overlap · size` templates common
/// to every user plus a private block for each user.
pub fn interest_sets(pop_len: usize, cfg: &WorkloadConfig) -> Result<Vec<Vec<usize>>, WorkloadError> {
    let users = cfg.n_users;
    let overlap = cfg.user_overlap;
    let max_size = (pop_len as f64 / (overlap + users as f64 * (1.0 - overlap))).floor() as usize;
    let size = cfg.interest_size.unwrap_or(max_size).min(max_size.max(1));
    let shared = (overlap * size as f64).round() as usize;
    let private = size - shared;
    if size == 0 || shared + users * private > pop_len {
        return Err(WorkloadError::InvalidConfig(format!(
            "population of {pop_len} cannot hold {users} interest sets"
        )));
    }
    let mut order: Vec<usize> = (0..pop_len).collect();
    order.shuffle(&mut rng_for(cfg.seed, RANKING_STREAM));
    let common = &order[..shared];
    Ok((0..users)
        .map(|u| {
            let start = shared + u * private;
            let mut set: Vec<usize> = common.iter().chain(&order[start..start + private]).copied().collect();
            set.shuffle(&mut rng_for(cfg.seed, 100 + u as u64));
            set
        })
        .collect())
}

/// Zipf exponent of user `u`: evenly spread over `alpha ± spread`.
pub fn user_alpha(cfg: &WorkloadConfig, u: usize) -> f64 {
    if cfg.n_users < 2 {
        return cfg.zipf_alpha;
    }
    let t = u as f64 / (cfg.n_users - 1) as f64;
    (cfg.zipf_alpha + cfg.user_alpha_spread * (2.0 * t - 1.0)).max(0.0)
}

/// Users take turns; each samples its own Zipf ranking over its interest set.
pub fn gen_multiuser(pop: &[ToolCallRequest], cfg: &WorkloadConfig) -> Result<Vec<ToolCallRequest>, WorkloadError> {
    cfg.validate()?;
    if cfg.n_users < 2 {
        return Err(WorkloadError::InvalidConfig("multi-user workloads need at least 2 users".into()));
    }
    let sets = interest_sets(pop.len(), cfg)?;
    let zipfs: Vec<WeightedIndex<f64>> = sets
        .iter()
        .enumerate()
        .map(|(u, s)| zipf_index(s.len(), user_alpha(cfg, u)))
        .collect();
    let mut rng = rng_for(cfg.seed, SAMPLING_STREAM);
    Ok((0..cfg.n_requests)
        .map(|i| {
            let u = i % cfg.n_users;
            let t = &pop[sets[u][zipfs[u].sample(&mut rng)]];
            emit(t, i as u64 + 1, user_name(u), cfg.jitter, &mut rng)
        })
        .collect())
}

/// Population plus the stream selected by `cfg.distribution`.
pub fn generate(catalog: &ToolCatalog, cfg: &WorkloadConfig) -> Result<Vec<ToolCallRequest>, WorkloadError> {
    catalog.validate()?;
    let pop = build_population(catalog, cfg);
    match cfg.distribution {
        DistributionKind::Zipf => gen_zipf(&pop, cfg),
        DistributionKind::Hotspot => gen_hotspot(&pop, cfg),
        DistributionKind::Uniform => gen_uniform(&pop, cfg),
        DistributionKind::Multiuser => gen_multiuser(&pop, cfg),
    }
}
