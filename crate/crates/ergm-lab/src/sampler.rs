//! Glauber heat-bath chains over any model density, plus an exact enumeration
//! oracle for tiny vertex counts.
//!
//! One sweep visits N = n(n-1)/2 edge slots; each visit resamples one edge
//! from its conditional law sigmoid(delta log-weight), consuming exactly one
//! uniform (two under random scan: slot choice plus coin). Identical config
//! and seed therefore reproduce the sample stream bit for bit, and paired
//! runs that share a seed share their entire uniform stream (common random
//! numbers) as long as they use the same scan order and reference density.

use crate::graph::{edge_index_count, edge_indices, EdgeIndex, Graph};
use crate::model::{delta_log_weight, log_weight, ErgmSpec, ModelKind};
use crate::stats::{logsumexp, sigmoid};
use crate::testfn::HnTable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid chain config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error("enumeration supports n <= {max} (got n = {n})")]
    TooLargeToEnumerate { n: usize, max: usize },
    #[error("collector `{collector}` needs n >= {needs}, graph has n = {n}")]
    CollectorTooLarge {
        collector: String,
        needs: usize,
        n: usize,
    },
}

/// Edge visit order within one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scan {
    /// Fixed canonical edge order per sweep.
    Systematic,
    /// N uniformly random edge slots per sweep.
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainConfig {
    pub seed: u64,
    pub burn_in_sweeps: u64,
    pub sample_sweeps: u64,
    /// Sweeps between recorded samples (>= 1).
    pub thin: u64,
    pub scan: Scan,
}

impl ChainConfig {
    fn validate(&self) -> Result<(), SamplerError> {
        if self.thin == 0 {
            return Err(SamplerError::BadConfig("thin must be >= 1".into()));
        }
        Ok(())
    }
}

/// SplitMix64 step, the documented seed-derivation primitive.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a task seed from a master seed and a label path by folding each
/// label through SplitMix64. Experiments derive per-chain seeds as
/// derive_seed(master, [experiment id, n, chain index]); the model is
/// deliberately not part of the path so paired models share uniform streams.
pub fn derive_seed(master: u64, labels: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &label in labels {
        state = splitmix64(state ^ label.wrapping_mul(0xA24B_AED4_963E_E407));
    }
    state
}

/// One heat-bath update: set the bit at s with probability
/// sigmoid(delta log-weight), using the supplied uniform.
pub fn glauber_step(g: &mut Graph, model: &ModelKind, spec: &ErgmSpec, s: EdgeIndex, u: f64) {
    let p_on = sigmoid(delta_log_weight(model, spec, g, s));
    let (a, b) = (s.i() as usize - 1, s.j() as usize - 1);
    g.set_raw(a, b, u < p_on);
}

/// Named scalar graph statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statistic {
    Edges,
    TwoStars,
    Triangles,
    Rectangles,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [
        Statistic::Edges,
        Statistic::TwoStars,
        Statistic::Triangles,
        Statistic::Rectangles,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Edges => "E",
            Self::TwoStars => "V",
            Self::Triangles => "T",
            Self::Rectangles => "R",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "E" => Some(Self::Edges),
            "V" => Some(Self::TwoStars),
            "T" => Some(Self::Triangles),
            "R" => Some(Self::Rectangles),
            _ => None,
        }
    }

    pub fn min_n(&self) -> usize {
        match self {
            Self::Edges => 2,
            Self::TwoStars | Self::Triangles => 3,
            Self::Rectangles => 4,
        }
    }

    pub fn value(&self, g: &Graph) -> f64 {
        match self {
            Self::Edges => g.edge_count() as f64,
            Self::TwoStars => g.two_star_count() as f64,
            Self::Triangles => g.triangle_count() as f64,
            Self::Rectangles => g.rectangle_count() as f64,
        }
    }
}

/// What a chain records at each sample point.
#[derive(Clone)]
pub enum Collector {
    Count(Statistic),
    /// Full degree vector.
    Degrees,
    /// The degree-based truncated-square statistic, from a precomputed table.
    Hn(HnTable),
    /// Heat-bath conditional probabilities of the tracked edges
    /// (a Rao-Blackwellized estimator of the edge marginals).
    Marginals(Vec<EdgeIndex>),
    /// Mean |per-edge remainder difference| of one spec term over probe edges.
    RemainderAbsDelta {
        term: usize,
        p: f64,
        probes: Vec<EdgeIndex>,
    },
}

impl Collector {
    pub fn name(&self) -> String {
        match self {
            Self::Count(stat) => stat.name().to_string(),
            Self::Degrees => "degrees".into(),
            Self::Hn(_) => "hn".into(),
            Self::Marginals(_) => "marginals".into(),
            Self::RemainderAbsDelta { term, .. } => format!("abs_delta_r{term}"),
        }
    }

    fn validate(&self, n: usize, spec: &ErgmSpec) -> Result<(), SamplerError> {
        let fail = |needs: usize| SamplerError::CollectorTooLarge {
            collector: self.name(),
            needs,
            n,
        };
        match self {
            Self::Count(stat) => {
                if n < stat.min_n() {
                    return Err(fail(stat.min_n()));
                }
            }
            Self::Degrees => {}
            Self::Hn(table) => {
                if table.n() != n {
                    return Err(SamplerError::BadConfig(format!(
                        "hn table built for n = {}, chain has n = {n}",
                        table.n()
                    )));
                }
            }
            Self::Marginals(edges) => {
                for s in edges {
                    if s.j() as usize > n {
                        return Err(fail(s.j() as usize));
                    }
                }
            }
            Self::RemainderAbsDelta { term, probes, .. } => {
                if *term >= spec.terms().len() {
                    return Err(SamplerError::Model(crate::model::ModelError::BadTermIndex(
                        *term,
                    )));
                }
                for s in probes {
                    if s.j() as usize > n {
                        return Err(fail(s.j() as usize));
                    }
                }
            }
        }
        Ok(())
    }

    fn collect(&self, g: &Graph, model: &ModelKind, spec: &ErgmSpec) -> CollectedValue {
        match self {
            Self::Count(stat) => CollectedValue::Scalar(stat.value(g)),
            Self::Degrees => {
                CollectedValue::Vector(g.degrees().iter().map(|&d| d as f64).collect())
            }
            Self::Hn(table) => CollectedValue::Scalar(table.value(g)),
            Self::Marginals(edges) => CollectedValue::Vector(
                edges
                    .iter()
                    .map(|&s| sigmoid(delta_log_weight(model, spec, g, s)))
                    .collect(),
            ),
            Self::RemainderAbsDelta { term, p, probes } => {
                let mean = probes
                    .iter()
                    .map(|&s| crate::hoeffding::delta_remainder(spec, g, s, *p, *term).abs())
                    .sum::<f64>()
                    / probes.len().max(1) as f64;
                CollectedValue::Scalar(mean)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum CollectedValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl CollectedValue {
    pub fn scalar(&self) -> f64 {
        match self {
            Self::Scalar(x) => *x,
            Self::Vector(_) => panic!("expected scalar collector value"),
        }
    }

    pub fn vector(&self) -> &[f64] {
        match self {
            Self::Scalar(_) => panic!("expected vector collector value"),
            Self::Vector(v) => v,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainRecord {
    /// Sweep count after burn-in at which the record was taken.
    pub sweep: u64,
    pub values: Vec<CollectedValue>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainRun {
    pub collector_names: Vec<String>,
    pub records: Vec<ChainRecord>,
    /// Edge density used for the initial graph, when one was available.
    pub init_p: Option<f64>,
    /// Graph state after the last sweep.
    #[serde(skip)]
    pub final_graph: Graph,
}

impl ChainRun {
    /// Per-record scalar values of one collector.
    pub fn scalar_series(&self, name: &str) -> Vec<f64> {
        let idx = self
            .collector_names
            .iter()
            .position(|c| c == name)
            .unwrap_or_else(|| panic!("no collector named {name}"));
        self.records
            .iter()
            .map(|r| r.values[idx].scalar())
            .collect()
    }

    /// Per-record vector values of one collector, transposed to per-component
    /// series.
    pub fn vector_series(&self, name: &str) -> Vec<Vec<f64>> {
        let idx = self
            .collector_names
            .iter()
            .position(|c| c == name)
            .unwrap_or_else(|| panic!("no collector named {name}"));
        if self.records.is_empty() {
            return Vec::new();
        }
        let width = self.records[0].values[idx].vector().len();
        let mut series = vec![Vec::with_capacity(self.records.len()); width];
        for record in &self.records {
            for (k, &v) in record.values[idx].vector().iter().enumerate() {
                series[k].push(v);
            }
        }
        series
    }
}

/// Runs one Glauber chain and records collector outputs every `thin` sweeps.
///
/// The initial graph is an independent-edge draw at the model's reference
/// density (falling back to the spec's fixed point, then to the empty graph).
pub fn run_chain(
    model: &ModelKind,
    spec: &ErgmSpec,
    n: usize,
    cfg: &ChainConfig,
    collectors: &[Collector],
) -> Result<ChainRun, SamplerError> {
    cfg.validate()?;
    if matches!(model, ModelKind::Exact | ModelKind::SecondOrder { .. }) {
        spec.validate_for_graph(n)?;
    }
    for collector in collectors {
        collector.validate(n, spec)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init_p = model
        .p()
        .or_else(|| crate::fixed_point::solve_p(spec).ok().map(|r| r.p));
    let mut g = match init_p {
        Some(p) => Graph::gnp(n, p, &mut rng),
        None => Graph::empty(n),
    };
    let edges: Vec<EdgeIndex> = edge_indices(n).collect();
    let count = edges.len();

    let sweep = |g: &mut Graph, rng: &mut ChaCha8Rng| match cfg.scan {
        Scan::Systematic => {
            for &s in &edges {
                let u: f64 = rng.random();
                glauber_step(g, model, spec, s, u);
            }
        }
        Scan::Random => {
            for _ in 0..count {
                let s = edges[rng.random_range(0..count)];
                let u: f64 = rng.random();
                glauber_step(g, model, spec, s, u);
            }
        }
    };

    for _ in 0..cfg.burn_in_sweeps {
        sweep(&mut g, &mut rng);
    }
    let mut records = Vec::with_capacity((cfg.sample_sweeps / cfg.thin) as usize);
    for sweep_index in 1..=cfg.sample_sweeps {
        sweep(&mut g, &mut rng);
        if sweep_index % cfg.thin == 0 {
            records.push(ChainRecord {
                sweep: sweep_index,
                values: collectors
                    .iter()
                    .map(|c| c.collect(&g, model, spec))
                    .collect(),
            });
        }
    }
    Ok(ChainRun {
        collector_names: collectors.iter().map(|c| c.name()).collect(),
        records,
        init_p,
        final_graph: g,
    })
}

pub const ENUMERATION_DEFAULT_MAX_N: usize = 6;
pub const ENUMERATION_HARD_MAX_N: usize = 7;

/// Exact distribution of a model over all graphs on n vertices.
pub struct Enumeration {
    n: usize,
    log_probs: Vec<f64>,
    log_z: f64,
}

impl Enumeration {
    /// Builds the distribution; guarded at n <= 6 by default.
    pub fn build(model: &ModelKind, spec: &ErgmSpec, n: usize) -> Result<Self, SamplerError> {
        Self::build_with_cap(model, spec, n, ENUMERATION_DEFAULT_MAX_N)
    }

    /// Same with the hard cap n <= 7 (2^21 graphs).
    pub fn build_up_to_7(model: &ModelKind, spec: &ErgmSpec, n: usize) -> Result<Self, SamplerError> {
        Self::build_with_cap(model, spec, n, ENUMERATION_HARD_MAX_N)
    }

    fn build_with_cap(
        model: &ModelKind,
        spec: &ErgmSpec,
        n: usize,
        max: usize,
    ) -> Result<Self, SamplerError> {
        if n > max.min(ENUMERATION_HARD_MAX_N) {
            return Err(SamplerError::TooLargeToEnumerate {
                n,
                max: max.min(ENUMERATION_HARD_MAX_N),
            });
        }
        spec.validate_for_graph(n)?;
        let count = edge_index_count(n);
        let mut log_weights = Vec::with_capacity(1 << count);
        for index in 0..1u64 << count {
            let g = Graph::from_index(n, index);
            log_weights.push(log_weight(model, spec, &g)?);
        }
        let log_z = logsumexp(&log_weights);
        let log_probs = log_weights.iter().map(|w| w - log_z).collect();
        Ok(Self {
            n,
            log_probs,
            log_z,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// log Z relative to the model's unnormalized log-weights.
    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn prob(&self, graph_index: u64) -> f64 {
        self.log_probs[graph_index as usize].exp()
    }

    pub fn expect(&self, f: impl Fn(&Graph) -> f64) -> f64 {
        (0..self.log_probs.len() as u64)
            .map(|index| self.prob(index) * f(&Graph::from_index(self.n, index)))
            .sum()
    }

    /// Exact conditional probability that the edge s is present given the rest
    /// of the graph at `graph_index`.
    pub fn conditional(&self, graph_index: u64, s: EdgeIndex) -> f64 {
        let bit = 1u64 << s.linear_index(self.n);
        let with = self.prob(graph_index | bit);
        let without = self.prob(graph_index & !bit);
        with / (with + without)
    }
}

/// Exact log Z and expectations of named statistics.
#[derive(Debug, Clone, Serialize)]
pub struct EnumerationResult {
    pub log_z: f64,
    pub expectations: BTreeMap<String, f64>,
}

pub fn enumerate(
    model: &ModelKind,
    spec: &ErgmSpec,
    n: usize,
    statistics: &[Statistic],
) -> Result<EnumerationResult, SamplerError> {
    enumerate_with_cap(model, spec, n, statistics, ENUMERATION_DEFAULT_MAX_N)
}

pub fn enumerate_with_cap(
    model: &ModelKind,
    spec: &ErgmSpec,
    n: usize,
    statistics: &[Statistic],
    max_n: usize,
) -> Result<EnumerationResult, SamplerError> {
    for stat in statistics {
        if n < stat.min_n() {
            return Err(SamplerError::CollectorTooLarge {
                collector: stat.name().into(),
                needs: stat.min_n(),
                n,
            });
        }
    }
    let enumeration = Enumeration::build_with_cap(model, spec, n, max_n)?;
    let mut expectations = BTreeMap::new();
    for stat in statistics {
        expectations.insert(
            stat.name().to_string(),
            enumeration.expect(|g| stat.value(g)),
        );
    }
    Ok(EnumerationResult {
        log_z: enumeration.log_z(),
        expectations,
    })
}
