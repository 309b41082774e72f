//! Reproducible experiment drivers: sharpness, scaling, marginals,
//! decomposition checks and remainder boundedness, with CSV and JSON outputs.
//!
//! Every experiment is a pure function of its config: per-chain seeds are
//! derived from the master seed and the (experiment, n, chain) path, results
//! are merged in task order, and no timestamps enter the outputs, so reruns
//! reproduce every byte even under parallel execution. Model names are kept
//! out of the seed path on purpose: paired models ride the same uniform
//! streams (common random numbers), which cuts the variance of estimated
//! differences.

use crate::fixed_point::{solve_p, FixedPointError, FixedPointReport};
use crate::graph::{edge_index_count, EdgeIndex, Graph};
use crate::hoeffding::{full_decomposition, tilde_stats, Variant};
use crate::model::{ErgmSpec, ModelError, ModelKind, ModelName};
use crate::motif::{Motif, MotifError, NamedMotif};
use crate::sampler::{
    derive_seed, run_chain, ChainConfig, Collector, SamplerError, Scan,
};
use crate::stats::{mean, mean_and_se, ols_fit};
use crate::testfn::{
    expect_hn_under_er, sharpness_constants, HnTable, SharpnessParams, TestFnError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::PathBuf;
use thiserror::Error;

const TAG_SHARPNESS: u64 = 1;
const TAG_SCALING: u64 = 2;
const TAG_MARGINALS: u64 = 3;
const TAG_DECOMPOSITION: u64 = 4;
const TAG_REMAINDERS: u64 = 5;
/// Label mixed into edge-subset sampling, distinct from chain indices.
const LABEL_EDGE_SAMPLE: u64 = 0xED6E;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    TestFn(#[from] TestFnError),
    #[error(transparent)]
    Motif(#[from] MotifError),
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
    #[error("spec is outside the Dobrushin region (subcritical = {subcritical}, dobrushin = {dobrushin}, Phi'(1) = {phi_cap_prime_1:.6}); refusing to run")]
    OutsideDobrushin {
        subcritical: bool,
        dobrushin: bool,
        phi_cap_prime_1: f64,
    },
    #[error("config error: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Shared experiment configuration. Fields that an experiment does not use
/// are ignored; an empty `n_grid` or `models` picks that experiment's default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub spec: ErgmSpec,
    pub n_grid: Vec<usize>,
    pub master_seed: u64,
    /// Independent chains per grid point.
    pub chains: usize,
    pub sweeps: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub scan: Scan,
    pub models: Vec<ModelName>,
    pub m_trunc: f64,
    pub quadrature_nodes: usize,
    /// Tracked edges per grid point in the marginals experiment.
    pub marginal_edges: usize,
    /// Probe edges per record in the remainders experiment.
    pub probe_edges: usize,
    /// Spec term whose remainder is probed (default: last term).
    pub remainder_term: Option<usize>,
    /// Graph draws per grid point for Monte Carlo variance estimates.
    pub mc_samples: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            spec: ErgmSpec::rectangle(-0.08, 0.16).expect("default spec"),
            n_grid: Vec::new(),
            master_seed: 20240801,
            chains: 8,
            sweeps: 2000,
            burn_in: 200,
            thin: 1,
            scan: Scan::Systematic,
            models: Vec::new(),
            m_trunc: 200.0,
            quadrature_nodes: 64,
            marginal_edges: 16,
            probe_edges: 32,
            remainder_term: None,
            mc_samples: 20_000,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    fn grid_or(&self, default: &[usize]) -> Result<Vec<usize>, ExperimentError> {
        let grid = if self.n_grid.is_empty() {
            default.to_vec()
        } else {
            self.n_grid.clone()
        };
        if !grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(ExperimentError::BadConfig(
                "n grid must be strictly increasing".into(),
            ));
        }
        if self.chains == 0 || self.sweeps == 0 {
            return Err(ExperimentError::BadConfig(
                "chains and sweeps must be positive".into(),
            ));
        }
        Ok(grid)
    }

    fn chain_config(&self, seed: u64) -> ChainConfig {
        ChainConfig {
            seed,
            burn_in_sweeps: self.burn_in,
            sample_sweeps: self.sweeps,
            thin: self.thin,
            scan: self.scan,
        }
    }

    /// Reports miss their error-bar contract below 8 chains.
    fn stable(&self) -> bool {
        let stable = self.chains >= 8;
        if !stable {
            eprintln!(
                "warning: {} chains per point is below the 8-chain error-bar contract; report marked unstable",
                self.chains
            );
        }
        stable
    }
}

/// Point estimate with the standard error across independent chains.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    fn from_chain_means(means: &[f64]) -> Self {
        let (value, stderr) = mean_and_se(means);
        Self { value, stderr }
    }
}

/// One row of the fixed CSV schema shared by all experiments.
#[derive(Debug, Clone, Serialize)]
pub struct CsvRow {
    pub experiment: String,
    pub n: usize,
    pub model: String,
    pub stat: String,
    pub estimate: f64,
    pub stderr: f64,
    pub seed: u64,
    pub sweeps: u64,
}

impl CsvRow {
    fn new(
        experiment: &str,
        n: usize,
        model: &str,
        stat: &str,
        estimate: f64,
        stderr: f64,
        cfg: &ExperimentConfig,
    ) -> Self {
        Self {
            experiment: experiment.into(),
            n,
            model: model.into(),
            stat: stat.into(),
            estimate,
            stderr,
            seed: cfg.master_seed,
            sweeps: cfg.sweeps,
        }
    }
}

/// Writes `<experiment>.csv`, `manifest.json` (resolved config + version) and
/// `<experiment>_report.json` into the config's output directory, if any.
fn write_outputs<R: Serialize>(
    experiment: &str,
    cfg: &ExperimentConfig,
    rows: &[CsvRow],
    report: &R,
) -> Result<(), ExperimentError> {
    let Some(dir) = &cfg.out_dir else {
        return Ok(());
    };
    std::fs::create_dir_all(dir)?;
    let mut writer = csv::Writer::from_path(dir.join(format!("{experiment}.csv")))?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    let manifest = serde_json::json!({
        "experiment": experiment,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
    });
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    std::fs::write(
        dir.join(format!("{experiment}_report.json")),
        serde_json::to_string_pretty(&serde_json::to_value(report)?)?,
    )?;
    Ok(())
}

/// Refuses to run scaling-style experiments outside the verified region.
pub fn dobrushin_gate(spec: &ErgmSpec) -> Result<FixedPointReport, ExperimentError> {
    let report = solve_p(spec)?;
    if !(report.subcritical && report.dobrushin) {
        return Err(ExperimentError::OutsideDobrushin {
            subcritical: report.subcritical,
            dobrushin: report.dobrushin,
            phi_cap_prime_1: report.phi_cap_prime_1,
        });
    }
    Ok(report)
}

/// Log-log OLS slope; NaN when the grid has fewer than two points.
fn log_log_slope(ns: &[usize], values: &[f64]) -> f64 {
    if ns.len() < 2 {
        return f64::NAN;
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.max(1e-300).ln()).collect();
    ols_fit(&xs, &ys).0
}

/// Deterministic sample of distinct edges of an n-vertex graph.
pub fn sample_edges(n: usize, count: usize, seed: u64) -> Vec<EdgeIndex> {
    let total = edge_index_count(n);
    let take = count.min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: BTreeSet<usize> = BTreeSet::new();
    while chosen.len() < take {
        chosen.insert(rng.random_range(0..total));
    }
    chosen
        .into_iter()
        .map(|k| EdgeIndex::from_linear(k, n))
        .collect()
}

/// Chain means of one scalar collector over independent chains.
fn scalar_chain_means(
    model: &ModelKind,
    spec: &ErgmSpec,
    n: usize,
    cfg: &ExperimentConfig,
    tag: u64,
    collector: &Collector,
) -> Result<Vec<f64>, ExperimentError> {
    let name = collector.name();
    (0..cfg.chains)
        .into_par_iter()
        .map(|chain| {
            let seed = derive_seed(cfg.master_seed, &[tag, n as u64, chain as u64]);
            let run = run_chain(
                model,
                spec,
                n,
                &cfg.chain_config(seed),
                std::slice::from_ref(collector),
            )?;
            Ok(mean(&run.scalar_series(&name)))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Sharpness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SharpnessReport {
    pub fixed_point: FixedPointReport,
    pub beta1_tilde: f64,
    pub beta2_tilde: f64,
    pub a1_tilde: f64,
    /// 1 / a1~, the limit the tilted chains should approach.
    pub target: f64,
    /// 4p(1-p) + 2/beta2~, the independent-edge ceiling.
    pub er_bound: f64,
    pub n: usize,
    pub delta_norm_bound: f64,
    /// E h_n under independent edges, by quadrature (no sampling error).
    pub e_hn_z: f64,
    /// Chain estimate under the two-star rewrite.
    pub e_hn_y: Estimate,
    /// Chain estimate under the exact model, when requested via `models`.
    pub e_hn_x: Option<Estimate>,
    pub gap_y_z: Estimate,
    pub stable: bool,
}

pub fn experiment_sharpness(cfg: &ExperimentConfig) -> Result<SharpnessReport, ExperimentError> {
    let fixed_point = dobrushin_gate(&cfg.spec)?;
    let grid = cfg.grid_or(&[300])?;
    let n = grid[0];
    let rewrite = ModelKind::build(ModelName::TwoStar, &cfg.spec)?;
    let ModelKind::TwoStarRewrite {
        beta1_tilde,
        beta2_tilde,
    } = rewrite
    else {
        unreachable!("build(TwoStar) returns a rewrite")
    };
    let params = SharpnessParams::new(fixed_point.p, beta2_tilde, cfg.m_trunc, cfg.quadrature_nodes)?;
    let constants = sharpness_constants(fixed_point.p, beta2_tilde);
    let table = HnTable::build(n, &params)?;
    let e_hn_z = expect_hn_under_er(n, &params)?;
    let collector = Collector::Hn(table.clone());

    let y_means = scalar_chain_means(&rewrite, &cfg.spec, n, cfg, TAG_SHARPNESS, &collector)?;
    let e_hn_y = Estimate::from_chain_means(&y_means);
    let e_hn_x = if cfg.models.contains(&ModelName::Exact) {
        let means =
            scalar_chain_means(&ModelKind::Exact, &cfg.spec, n, cfg, TAG_SHARPNESS, &collector)?;
        Some(Estimate::from_chain_means(&means))
    } else {
        None
    };
    let report = SharpnessReport {
        fixed_point,
        beta1_tilde,
        beta2_tilde,
        a1_tilde: constants.a1_tilde,
        target: constants.target,
        er_bound: constants.er_bound,
        n,
        delta_norm_bound: table.bounded_diff_norm(),
        e_hn_z,
        gap_y_z: Estimate {
            value: e_hn_y.value - e_hn_z,
            stderr: e_hn_y.stderr,
        },
        e_hn_y,
        e_hn_x,
        stable: cfg.stable(),
    };

    let mut rows = vec![
        CsvRow::new("sharpness", n, "two-star", "e_hn", report.e_hn_y.value, report.e_hn_y.stderr, cfg),
        CsvRow::new("sharpness", n, "first", "e_hn_quadrature", e_hn_z, 0.0, cfg),
        CsvRow::new("sharpness", n, "two-star", "gap_y_z", report.gap_y_z.value, report.gap_y_z.stderr, cfg),
        CsvRow::new("sharpness", n, "", "target", report.target, 0.0, cfg),
        CsvRow::new("sharpness", n, "", "er_bound", report.er_bound, 0.0, cfg),
        CsvRow::new("sharpness", n, "", "delta_norm_bound", report.delta_norm_bound, 0.0, cfg),
    ];
    if let Some(x) = report.e_hn_x {
        rows.push(CsvRow::new("sharpness", n, "exact", "e_hn", x.value, x.stderr, cfg));
    }
    write_outputs("sharpness", cfg, &rows, &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Scaling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub delta_norm: f64,
    pub e_hn_z: f64,
    pub x: Estimate,
    pub y: Estimate,
    /// |E h(X) - E h(Z)| with Z by quadrature.
    pub d1: Estimate,
    /// |E h(X) - E h(Y)| from seed-paired chains.
    pub d2: Estimate,
    pub d1_normalized: f64,
    pub d2_normalized: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub fixed_point: FixedPointReport,
    pub model_x: ModelName,
    pub model_y: ModelName,
    pub rows: Vec<ScalingRow>,
    pub slope_d1: f64,
    pub slope_d2: f64,
    pub stable: bool,
}

pub fn experiment_scaling(cfg: &ExperimentConfig) -> Result<ScalingReport, ExperimentError> {
    let fixed_point = dobrushin_gate(&cfg.spec)?;
    let grid = cfg.grid_or(&[64, 128, 256])?;
    let (model_x_name, model_y_name) = match cfg.models.as_slice() {
        [] => (ModelName::Exact, ModelName::Second),
        [x] => (*x, ModelName::Second),
        [x, y, ..] => (*x, *y),
    };
    let model_x = ModelKind::build(model_x_name, &cfg.spec)?;
    let model_y = ModelKind::build(model_y_name, &cfg.spec)?;
    let rewrite = ModelKind::build(ModelName::TwoStar, &cfg.spec)?;
    let ModelKind::TwoStarRewrite { beta2_tilde, .. } = rewrite else {
        unreachable!()
    };
    let params = SharpnessParams::new(fixed_point.p, beta2_tilde, cfg.m_trunc, cfg.quadrature_nodes)?;

    let mut rows = Vec::new();
    for &n in &grid {
        let table = HnTable::build(n, &params)?;
        let delta_norm = table.bounded_diff_norm();
        let e_hn_z = expect_hn_under_er(n, &params)?;
        let collector = Collector::Hn(table);
        // Seed-paired chains: same uniform stream for both models.
        let pairs: Vec<(f64, f64)> = (0..cfg.chains)
            .into_par_iter()
            .map(|chain| -> Result<(f64, f64), ExperimentError> {
                let seed = derive_seed(cfg.master_seed, &[TAG_SCALING, n as u64, chain as u64]);
                let chain_cfg = cfg.chain_config(seed);
                let x_run = run_chain(&model_x, &cfg.spec, n, &chain_cfg, std::slice::from_ref(&collector))?;
                let y_run = run_chain(&model_y, &cfg.spec, n, &chain_cfg, std::slice::from_ref(&collector))?;
                Ok((mean(&x_run.scalar_series("hn")), mean(&y_run.scalar_series("hn"))))
            })
            .collect::<Result<_, _>>()?;
        let x_means: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y_means: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let diffs: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
        let x = Estimate::from_chain_means(&x_means);
        let y = Estimate::from_chain_means(&y_means);
        let (diff_mean, diff_se) = mean_and_se(&diffs);
        let d1 = Estimate {
            value: (x.value - e_hn_z).abs(),
            stderr: x.stderr,
        };
        let d2 = Estimate {
            value: diff_mean.abs(),
            stderr: diff_se,
        };
        rows.push(ScalingRow {
            n,
            delta_norm,
            e_hn_z,
            x,
            y,
            d1_normalized: d1.value / (delta_norm * (n as f64).powf(1.5)),
            d2_normalized: d2.value / (delta_norm * n as f64),
            d1,
            d2,
        });
    }

    let ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    let d1s: Vec<f64> = rows.iter().map(|r| r.d1.value).collect();
    let d2s: Vec<f64> = rows.iter().map(|r| r.d2.value).collect();
    let report = ScalingReport {
        fixed_point,
        model_x: model_x_name,
        model_y: model_y_name,
        slope_d1: log_log_slope(&ns, &d1s),
        slope_d2: log_log_slope(&ns, &d2s),
        rows,
        stable: cfg.stable(),
    };

    let mut csv_rows = Vec::new();
    for row in &report.rows {
        let x_name = model_x_name.as_str();
        let y_name = model_y_name.as_str();
        csv_rows.push(CsvRow::new("scaling", row.n, x_name, "e_hn", row.x.value, row.x.stderr, cfg));
        csv_rows.push(CsvRow::new("scaling", row.n, y_name, "e_hn", row.y.value, row.y.stderr, cfg));
        csv_rows.push(CsvRow::new("scaling", row.n, "first", "e_hn_quadrature", row.e_hn_z, 0.0, cfg));
        csv_rows.push(CsvRow::new("scaling", row.n, x_name, "d1", row.d1.value, row.d1.stderr, cfg));
        csv_rows.push(CsvRow::new("scaling", row.n, x_name, "d2", row.d2.value, row.d2.stderr, cfg));
        csv_rows.push(CsvRow::new("scaling", row.n, "", "delta_norm_bound", row.delta_norm, 0.0, cfg));
        csv_rows.push(CsvRow::new("scaling", row.n, x_name, "d1_normalized", row.d1_normalized, 0.0, cfg));
        csv_rows.push(CsvRow::new("scaling", row.n, x_name, "d2_normalized", row.d2_normalized, 0.0, cfg));
    }
    write_outputs("scaling", cfg, &csv_rows, &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Marginals
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MarginalRow {
    pub n: usize,
    pub tracked_edges: usize,
    pub max_abs_dev: f64,
    pub mean_abs_dev: f64,
    pub max_stderr: f64,
    pub n_times_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginalsReport {
    pub model: ModelName,
    pub p: f64,
    pub rows: Vec<MarginalRow>,
    pub slope_max: f64,
    pub stable: bool,
}

pub fn experiment_marginals(cfg: &ExperimentConfig) -> Result<MarginalsReport, ExperimentError> {
    let fixed_point = dobrushin_gate(&cfg.spec)?;
    let model_name = cfg.models.first().copied().unwrap_or(ModelName::TwoStar);
    if model_name == ModelName::Exact {
        return Err(ExperimentError::BadConfig(
            "marginal drift is a property of the approximating models; pick first, second or two-star".into(),
        ));
    }
    let model = ModelKind::build(model_name, &cfg.spec)?;
    let grid = cfg.grid_or(&[32, 64, 128, 256])?;
    let p = fixed_point.p;

    let mut rows = Vec::new();
    for &n in &grid {
        let edges = sample_edges(
            n,
            cfg.marginal_edges,
            derive_seed(cfg.master_seed, &[TAG_MARGINALS, n as u64, LABEL_EDGE_SAMPLE]),
        );
        let collector = Collector::Marginals(edges.clone());
        // chain x edge matrix of per-chain mean conditional probabilities
        let per_chain: Vec<Vec<f64>> = (0..cfg.chains)
            .into_par_iter()
            .map(|chain| -> Result<Vec<f64>, ExperimentError> {
                let seed = derive_seed(cfg.master_seed, &[TAG_MARGINALS, n as u64, chain as u64]);
                let run = run_chain(&model, &cfg.spec, n, &cfg.chain_config(seed), std::slice::from_ref(&collector))?;
                Ok(run.vector_series("marginals").iter().map(|s| mean(s)).collect())
            })
            .collect::<Result<_, _>>()?;
        let mut max_abs_dev = 0.0f64;
        let mut sum_abs_dev = 0.0f64;
        let mut max_stderr = 0.0f64;
        for edge_idx in 0..edges.len() {
            let chain_means: Vec<f64> = per_chain.iter().map(|c| c[edge_idx]).collect();
            let est = Estimate::from_chain_means(&chain_means);
            let dev = (est.value - p).abs();
            max_abs_dev = max_abs_dev.max(dev);
            sum_abs_dev += dev;
            max_stderr = max_stderr.max(est.stderr);
        }
        rows.push(MarginalRow {
            n,
            tracked_edges: edges.len(),
            max_abs_dev,
            mean_abs_dev: sum_abs_dev / edges.len() as f64,
            max_stderr,
            n_times_max: n as f64 * max_abs_dev,
        });
    }

    let ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    let maxes: Vec<f64> = rows.iter().map(|r| r.max_abs_dev).collect();
    let report = MarginalsReport {
        model: model_name,
        p,
        slope_max: log_log_slope(&ns, &maxes),
        rows,
        stable: cfg.stable(),
    };

    let mut csv_rows = Vec::new();
    for row in &report.rows {
        let m = model_name.as_str();
        csv_rows.push(CsvRow::new("marginals", row.n, m, "max_abs_dev", row.max_abs_dev, row.max_stderr, cfg));
        csv_rows.push(CsvRow::new("marginals", row.n, m, "mean_abs_dev", row.mean_abs_dev, row.max_stderr, cfg));
        csv_rows.push(CsvRow::new("marginals", row.n, m, "n_times_max", row.n_times_max, 0.0, cfg));
    }
    write_outputs("marginals", cfg, &csv_rows, &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Remainders
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct RemainderRow {
    pub n: usize,
    pub mean_abs_delta: Estimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct RemaindersReport {
    pub model: ModelName,
    pub term: usize,
    pub rows: Vec<RemainderRow>,
    /// Largest ratio between consecutive grid points.
    pub max_consecutive_ratio: f64,
    pub stable: bool,
}

pub fn experiment_remainders(cfg: &ExperimentConfig) -> Result<RemaindersReport, ExperimentError> {
    let fixed_point = dobrushin_gate(&cfg.spec)?;
    let model_name = cfg.models.first().copied().unwrap_or(ModelName::TwoStar);
    let model = ModelKind::build(model_name, &cfg.spec)?;
    let term = cfg
        .remainder_term
        .unwrap_or(cfg.spec.terms().len().saturating_sub(1));
    if term >= cfg.spec.terms().len() {
        return Err(ExperimentError::Model(ModelError::BadTermIndex(term)));
    }
    let grid = cfg.grid_or(&[32, 64, 128, 256])?;

    let mut rows = Vec::new();
    for &n in &grid {
        let probes = sample_edges(
            n,
            cfg.probe_edges,
            derive_seed(cfg.master_seed, &[TAG_REMAINDERS, n as u64, LABEL_EDGE_SAMPLE]),
        );
        let collector = Collector::RemainderAbsDelta {
            term,
            p: fixed_point.p,
            probes,
        };
        let means = scalar_chain_means(&model, &cfg.spec, n, cfg, TAG_REMAINDERS, &collector)?;
        rows.push(RemainderRow {
            n,
            mean_abs_delta: Estimate::from_chain_means(&means),
        });
    }
    let max_consecutive_ratio = rows
        .windows(2)
        .map(|w| w[1].mean_abs_delta.value / w[0].mean_abs_delta.value)
        .fold(0.0f64, f64::max);
    let report = RemaindersReport {
        model: model_name,
        term,
        rows,
        max_consecutive_ratio,
        stable: cfg.stable(),
    };

    let mut csv_rows = Vec::new();
    for row in &report.rows {
        csv_rows.push(CsvRow::new(
            "remainders",
            row.n,
            model_name.as_str(),
            &format!("abs_delta_r{term}"),
            row.mean_abs_delta.value,
            row.mean_abs_delta.stderr,
            cfg,
        ));
    }
    write_outputs("remainders", cfg, &csv_rows, &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Decomposition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct VarianceRow {
    pub n: usize,
    pub source: String,
    pub var_first_order: f64,
    pub var_second_order: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    pub identity_graphs_checked: usize,
    pub identity_max_residual: f64,
    pub orthogonality_pairs_checked: usize,
    pub orthogonality_max_abs_cov: f64,
    pub var_e_tilde_max_rel_err: f64,
    pub variance_rows: Vec<VarianceRow>,
}

/// First- and second-order rectangle remainders whose variances the report
/// compares: rectangle count minus its edge-level projection, and minus the
/// two-star level as well.
fn rectangle_order_remainders(g: &Graph, p: f64) -> (f64, f64) {
    let n = g.n() as f64;
    let ts = tilde_stats(g, p, Variant::Approximate);
    let rect = g.rectangle_count() as f64;
    let first = rect - n * n * p.powi(3) * ts.e_tilde;
    let second = first - n * p * p * ts.v_tilde;
    (first, second)
}

pub fn experiment_decomposition(cfg: &ExperimentConfig) -> Result<DecompositionReport, ExperimentError> {
    // Exhaustive reconstruction residuals on five vertices.
    let motifs = [
        Motif::named(NamedMotif::TwoStar),
        Motif::named(NamedMotif::Triangle),
        Motif::named(NamedMotif::Rectangle),
    ];
    let ps = [0.3, 0.5];
    let identity_max_residual = (0..1u64 << 10)
        .into_par_iter()
        .map(|index| {
            let g = Graph::from_index(5, index);
            let mut worst = 0.0f64;
            for p in ps {
                for motif in &motifs {
                    let d = full_decomposition(motif, &g, p).expect("small motif fits");
                    worst = worst.max(d.residual());
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);

    // Orthogonality of centered products over distinct edge subsets at n = 4.
    let n4 = 4usize;
    let p4 = 0.5f64;
    let total4 = edge_index_count(n4);
    let subsets: Vec<u64> = (1..1u64 << total4).collect();
    let weights: Vec<f64> = (0..1u64 << total4)
        .map(|index| {
            let e = Graph::from_index(n4, index).edge_count() as i32;
            p4.powi(e) * (1.0 - p4).powi(total4 as i32 - e)
        })
        .collect();
    // Precompute the centered product of every subset on every graph.
    let products: Vec<Vec<f64>> = subsets
        .iter()
        .map(|&mask| {
            (0..1u64 << total4)
                .map(|index| {
                    let mut product = 1.0;
                    for bit in 0..total4 {
                        if mask >> bit & 1 == 1 {
                            let z = (index >> bit & 1) as f64;
                            product *= z - p4;
                        }
                    }
                    product
                })
                .collect()
        })
        .collect();
    let orthogonality_max_abs_cov = (0..subsets.len())
        .into_par_iter()
        .map(|i| {
            let mut worst = 0.0f64;
            for j in i + 1..subsets.len() {
                let cov: f64 = (0..weights.len())
                    .map(|g| weights[g] * products[i][g] * products[j][g])
                    .sum();
                worst = worst.max(cov.abs());
            }
            worst
        })
        .reduce(|| 0.0, f64::max);

    // Var(E~) = N p (1 - p) exactly under enumeration.
    let mut var_e_tilde_max_rel_err = 0.0f64;
    for (n, p) in [(4usize, 0.5f64), (5, 0.3)] {
        let total = edge_index_count(n);
        let mut var = 0.0;
        for index in 0..1u64 << total {
            let g = Graph::from_index(n, index);
            let e = g.edge_count() as i32;
            let w = p.powi(e) * (1.0 - p).powi(total as i32 - e);
            let ts = tilde_stats(&g, p, Variant::Approximate);
            var += w * ts.e_tilde * ts.e_tilde;
        }
        let expect = total as f64 * p * (1.0 - p);
        var_e_tilde_max_rel_err = var_e_tilde_max_rel_err.max((var - expect).abs() / expect);
    }

    // Variance ordering of the rectangle remainders: exact at n = 5, 6 and
    // Monte Carlo on the configured grid.
    let p = solve_p(&cfg.spec)?.p;
    let mut variance_rows = Vec::new();
    for n in [5usize, 6] {
        let total = edge_index_count(n);
        let mut moments = [0.0f64; 4]; // E r1, E r1^2, E r2, E r2^2
        for index in 0..1u64 << total {
            let g = Graph::from_index(n, index);
            let e = g.edge_count() as i32;
            let w = p.powi(e) * (1.0 - p).powi(total as i32 - e);
            let (r1, r2) = rectangle_order_remainders(&g, p);
            moments[0] += w * r1;
            moments[1] += w * r1 * r1;
            moments[2] += w * r2;
            moments[3] += w * r2 * r2;
        }
        let var1 = moments[1] - moments[0] * moments[0];
        let var2 = moments[3] - moments[2] * moments[2];
        variance_rows.push(VarianceRow {
            n,
            source: "enumeration".into(),
            var_first_order: var1,
            var_second_order: var2,
            ratio: var2 / var1,
        });
    }
    let mc_grid = cfg.grid_or(&[16, 32, 64])?;
    for &n in &mc_grid {
        let seed = derive_seed(cfg.master_seed, &[TAG_DECOMPOSITION, n as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut first = Vec::with_capacity(cfg.mc_samples);
        let mut second = Vec::with_capacity(cfg.mc_samples);
        for _ in 0..cfg.mc_samples {
            let g = Graph::gnp(n, p, &mut rng);
            let (r1, r2) = rectangle_order_remainders(&g, p);
            first.push(r1);
            second.push(r2);
        }
        let var1 = crate::stats::sample_variance(&first);
        let var2 = crate::stats::sample_variance(&second);
        variance_rows.push(VarianceRow {
            n,
            source: "monte_carlo".into(),
            var_first_order: var1,
            var_second_order: var2,
            ratio: var2 / var1,
        });
    }

    let report = DecompositionReport {
        identity_graphs_checked: 1 << 10,
        identity_max_residual,
        orthogonality_pairs_checked: subsets.len() * (subsets.len() - 1) / 2,
        orthogonality_max_abs_cov,
        var_e_tilde_max_rel_err,
        variance_rows,
    };

    let mut csv_rows = vec![
        CsvRow::new("decomposition", 5, "", "identity_max_residual", report.identity_max_residual, 0.0, cfg),
        CsvRow::new("decomposition", 4, "", "orthogonality_max_abs_cov", report.orthogonality_max_abs_cov, 0.0, cfg),
        CsvRow::new("decomposition", 5, "", "var_e_tilde_max_rel_err", report.var_e_tilde_max_rel_err, 0.0, cfg),
    ];
    for row in &report.variance_rows {
        csv_rows.push(CsvRow::new("decomposition", row.n, &row.source, "var_ratio_second_over_first", row.ratio, 0.0, cfg));
    }
    write_outputs("decomposition", cfg, &csv_rows, &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ExperimentConfig {
        ExperimentConfig {
            chains: 3,
            sweeps: 40,
            burn_in: 10,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn edge_sampling_is_deterministic_and_distinct() {
        let a = sample_edges(20, 10, 7);
        let b = sample_edges(20, 10, 7);
        assert_eq!(a, b);
        let mut dedup = a.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 10);
        // Caps at the number of available edges.
        assert_eq!(sample_edges(4, 100, 1).len(), 6);
    }

    #[test]
    fn gate_refuses_outside_dobrushin() {
        let strong = ErgmSpec::rectangle(-0.08, 0.5).unwrap();
        match dobrushin_gate(&strong) {
            Err(ExperimentError::OutsideDobrushin { dobrushin, .. }) => assert!(!dobrushin),
            other => panic!("expected gate refusal, got {other:?}"),
        }
        assert!(dobrushin_gate(&ErgmSpec::rectangle(-0.08, 0.16).unwrap()).is_ok());
    }

    #[test]
    fn grid_validation() {
        let cfg = ExperimentConfig {
            n_grid: vec![32, 32],
            ..tiny_cfg()
        };
        assert!(matches!(
            cfg.grid_or(&[1]),
            Err(ExperimentError::BadConfig(_))
        ));
    }

    #[test]
    fn identical_models_give_exactly_zero_d2() {
        // Same seed + same model = identical uniform streams, so the paired
        // difference estimator returns exactly zero while d1 stays positive.
        let cfg = ExperimentConfig {
            n_grid: vec![8, 12],
            models: vec![ModelName::First, ModelName::First],
            ..tiny_cfg()
        };
        let report = experiment_scaling(&cfg).unwrap();
        for row in &report.rows {
            assert_eq!(row.d2.value, 0.0);
            assert_eq!(row.d2.stderr, 0.0);
            assert!(row.d1.value > 0.0 || row.x.value == row.e_hn_z);
        }
    }

    #[test]
    fn first_order_marginals_have_zero_deviation() {
        // The Rao-Blackwellized conditional under independent edges is the
        // constant p, so deviations vanish identically.
        let cfg = ExperimentConfig {
            n_grid: vec![8, 16],
            models: vec![ModelName::First],
            ..tiny_cfg()
        };
        let report = experiment_marginals(&cfg).unwrap();
        for row in &report.rows {
            assert!(row.max_abs_dev < 1e-13, "{}", row.max_abs_dev);
        }
    }

    #[test]
    fn marginals_rejects_exact_model() {
        let cfg = ExperimentConfig {
            models: vec![ModelName::Exact],
            ..tiny_cfg()
        };
        assert!(matches!(
            experiment_marginals(&cfg),
            Err(ExperimentError::BadConfig(_))
        ));
    }

    #[test]
    fn outputs_are_written_and_reproducible() {
        let dir = std::env::temp_dir().join(format!("ergm-lab-test-{}", std::process::id()));
        let cfg = ExperimentConfig {
            n_grid: vec![8],
            models: vec![ModelName::First],
            out_dir: Some(dir.clone()),
            ..tiny_cfg()
        };
        experiment_marginals(&cfg).unwrap();
        let csv_text = std::fs::read_to_string(dir.join("marginals.csv")).unwrap();
        assert!(csv_text.starts_with("experiment,n,model,stat,estimate,stderr,seed,sweeps"));
        let manifest = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
        assert!(manifest.contains("\"experiment\": \"marginals\""));
        // Rerun reproduces the bytes.
        experiment_marginals(&cfg).unwrap();
        assert_eq!(
            csv_text,
            std::fs::read_to_string(dir.join("marginals.csv")).unwrap()
        );
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn remainders_tiny_run() {
        let cfg = ExperimentConfig {
            n_grid: vec![8, 16],
            probe_edges: 8,
            ..tiny_cfg()
        };
        let report = experiment_remainders(&cfg).unwrap();
        assert_eq!(report.term, 1);
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            assert!(row.mean_abs_delta.value.is_finite());
            assert!(row.mean_abs_delta.value >= 0.0);
        }
    }
}
