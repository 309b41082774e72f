//! Command-line front end: fixed-point solving, chain sampling, exact
//! enumeration, decomposition dumps and the experiment drivers.

use clap::{Args, Parser, Subcommand};
use ergm_lab::experiments::{
    self, experiment_decomposition, experiment_marginals, experiment_remainders,
    experiment_scaling, experiment_sharpness, ExperimentConfig,
};
use ergm_lab::graph::Graph;
use ergm_lab::hoeffding::full_decomposition;
use ergm_lab::model::{validate_spec, ErgmSpec, ModelKind, ModelName};
use ergm_lab::motif::{Motif, NamedMotif};
use ergm_lab::sampler::{
    derive_seed, enumerate_with_cap, run_chain, ChainConfig, CollectedValue, Collector, Scan,
    Statistic, ENUMERATION_DEFAULT_MAX_N, ENUMERATION_HARD_MAX_N,
};
use ergm_lab::testfn::{HnTable, SharpnessParams};
use serde::Deserialize;
use std::error::Error;
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "ergm-lab",
    version,
    about = "Sampling laboratory for exponential random graph models and their low-order approximations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the fixed-point equation for a spec and classify the region
    SolveP(SolvePArgs),
    /// Run one Glauber chain and write recorded samples as CSV
    Sample(SampleArgs),
    /// Exact expectations by enumerating every graph (tiny n)
    Enumerate(EnumerateArgs),
    /// Orthogonal decomposition of a motif count on a given graph
    Decompose(DecomposeArgs),
    /// Multi-chain experiment drivers with CSV/JSON outputs
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

/// Default spec when none is given: edge weight -0.08 plus rectangle weight 0.16.
fn load_spec(path: &Option<PathBuf>) -> Result<ErgmSpec, Box<dyn Error>> {
    match path {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            Ok(serde_json::from_str(&text)?)
        }
        None => Ok(ErgmSpec::rectangle(-0.08, 0.16)?),
    }
}

#[derive(Args)]
struct SolvePArgs {
    /// Spec JSON file ({"terms":[{"motif":...,"beta":...},...]})
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exact")]
    model: ModelName,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    burn_in: u64,
    #[arg(long, default_value_t = 2000)]
    sweeps: u64,
    #[arg(long, default_value_t = 1)]
    thin: u64,
    #[arg(long, value_enum, default_value = "systematic")]
    scan: Scan,
    /// Comma-separated collectors: E,V,T,R,degrees,hn,marginals,rdelta
    #[arg(long, default_value = "E", value_delimiter = ',')]
    collect: Vec<String>,
    /// Truncation constant of the hn collector
    #[arg(long = "M", default_value_t = 200.0)]
    m_trunc: f64,
    #[arg(long, default_value_t = 64)]
    quad_nodes: usize,
    /// Tracked/probe edges for the marginals and rdelta collectors
    #[arg(long, default_value_t = 32)]
    tracked_edges: usize,
    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the final graph as an edge list
    #[arg(long)]
    dump_graph: Option<PathBuf>,
}

#[derive(Args)]
struct EnumerateArgs {
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exact")]
    model: ModelName,
    #[arg(long)]
    n: usize,
    /// Comma-separated statistics: E,V,T,R
    #[arg(long, default_value = "E,V,T,R", value_delimiter = ',')]
    stats: Vec<String>,
    /// Lift the default n <= 6 guard up to the hard cap of 7
    #[arg(long)]
    max_n7: bool,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Motif name (edge|two_star|triangle|rectangle) or inline JSON
    #[arg(long, default_value = "rectangle")]
    motif: String,
    /// Graph edge-list file (first line `n <count>`, then `i j` lines)
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    p: f64,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Compare chain estimates of the degree statistic against its
    /// independent-edge value and the tilted-model limit
    Sharpness(ExperimentArgs),
    /// First- versus second-order discrepancies across an n grid
    Scaling(ExperimentArgs),
    /// Drift of edge marginals away from the reference density
    Marginals(ExperimentArgs),
    /// Exhaustive decomposition identities and variance ordering
    Decomposition(ExperimentArgs),
    /// Boundedness of per-edge remainder differences along the n grid
    Remainders(ExperimentArgs),
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// JSON config file; fields present in it override the flags below
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    sweeps: Option<u64>,
    #[arg(long)]
    burn_in: Option<u64>,
    #[arg(long)]
    thin: Option<u64>,
    #[arg(long, value_enum)]
    scan: Option<Scan>,
    #[arg(long, value_delimiter = ',', value_enum)]
    models: Option<Vec<ModelName>>,
    #[arg(long = "M")]
    m_trunc: Option<f64>,
    #[arg(long)]
    quad_nodes: Option<usize>,
    #[arg(long)]
    marginal_edges: Option<usize>,
    #[arg(long)]
    probe_edges: Option<usize>,
    #[arg(long)]
    remainder_term: Option<usize>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Config-file fields, all optional; present fields win over flags.
#[derive(Deserialize, Default)]
#[serde(default)]
struct PartialConfig {
    spec: Option<ErgmSpec>,
    n_grid: Option<Vec<usize>>,
    master_seed: Option<u64>,
    chains: Option<usize>,
    sweeps: Option<u64>,
    burn_in: Option<u64>,
    thin: Option<u64>,
    scan: Option<Scan>,
    models: Option<Vec<ModelName>>,
    m_trunc: Option<f64>,
    quadrature_nodes: Option<usize>,
    marginal_edges: Option<usize>,
    probe_edges: Option<usize>,
    remainder_term: Option<usize>,
    mc_samples: Option<usize>,
    out_dir: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig, Box<dyn Error>> {
        let mut cfg = ExperimentConfig {
            spec: load_spec(&self.spec)?,
            ..ExperimentConfig::default()
        };
        macro_rules! flag {
            ($field:ident, $arg:expr) => {
                if let Some(v) = &$arg {
                    cfg.$field = v.clone();
                }
            };
        }
        flag!(n_grid, self.n_grid);
        flag!(master_seed, self.seed.map(|v| v));
        flag!(chains, self.chains);
        flag!(sweeps, self.sweeps);
        flag!(burn_in, self.burn_in);
        flag!(thin, self.thin);
        flag!(scan, self.scan);
        flag!(models, self.models);
        flag!(m_trunc, self.m_trunc);
        flag!(quadrature_nodes, self.quad_nodes);
        flag!(marginal_edges, self.marginal_edges);
        flag!(probe_edges, self.probe_edges);
        flag!(mc_samples, self.mc_samples);
        if self.remainder_term.is_some() {
            cfg.remainder_term = self.remainder_term;
        }
        if self.out_dir.is_some() {
            cfg.out_dir = self.out_dir.clone();
        }
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)?;
            let partial: PartialConfig = serde_json::from_str(&text)?;
            flag!(spec, partial.spec);
            flag!(n_grid, partial.n_grid);
            flag!(master_seed, partial.master_seed);
            flag!(chains, partial.chains);
            flag!(sweeps, partial.sweeps);
            flag!(burn_in, partial.burn_in);
            flag!(thin, partial.thin);
            flag!(scan, partial.scan);
            flag!(models, partial.models);
            flag!(m_trunc, partial.m_trunc);
            flag!(quadrature_nodes, partial.quadrature_nodes);
            flag!(marginal_edges, partial.marginal_edges);
            flag!(probe_edges, partial.probe_edges);
            flag!(mc_samples, partial.mc_samples);
            if partial.remainder_term.is_some() {
                cfg.remainder_term = partial.remainder_term;
            }
            if partial.out_dir.is_some() {
                cfg.out_dir = partial.out_dir;
            }
        }
        Ok(cfg)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Box<dyn Error>> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run_sample(args: &SampleArgs) -> Result<(), Box<dyn Error>> {
    let spec = load_spec(&args.spec)?;
    let model = ModelKind::build(args.model, &spec)?;
    let p = model
        .p()
        .or_else(|| ergm_lab::fixed_point::solve_p(&spec).ok().map(|r| r.p));
    let mut collectors: Vec<Collector> = Vec::new();
    for name in &args.collect {
        match name.as_str() {
            "degrees" => collectors.push(Collector::Degrees),
            "hn" => {
                let rewrite = ModelKind::two_star_rewrite_at(
                    &spec,
                    p.ok_or("hn collector needs a solvable spec")?,
                );
                let ModelKind::TwoStarRewrite { beta2_tilde, .. } = rewrite else {
                    unreachable!()
                };
                let params = SharpnessParams::new(
                    p.expect("checked above"),
                    beta2_tilde,
                    args.m_trunc,
                    args.quad_nodes,
                )?;
                collectors.push(Collector::Hn(HnTable::build(args.n, &params)?));
            }
            "marginals" => collectors.push(Collector::Marginals(experiments::sample_edges(
                args.n,
                args.tracked_edges,
                derive_seed(args.seed, &[0x6D61]),
            ))),
            "rdelta" => collectors.push(Collector::RemainderAbsDelta {
                term: spec.terms().len() - 1,
                p: p.ok_or("rdelta collector needs a solvable spec")?,
                probes: experiments::sample_edges(
                    args.n,
                    args.tracked_edges,
                    derive_seed(args.seed, &[0x7264]),
                ),
            }),
            other => match Statistic::parse(other) {
                Some(stat) => collectors.push(Collector::Count(stat)),
                None => return Err(format!("unknown collector `{other}`").into()),
            },
        }
    }
    let cfg = ChainConfig {
        seed: args.seed,
        burn_in_sweeps: args.burn_in,
        sample_sweeps: args.sweeps,
        thin: args.thin,
        scan: args.scan,
    };
    let run = run_chain(&model, &spec, args.n, &cfg, &collectors)?;

    let out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout()),
    };
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["sweep".to_string()];
    header.extend(run.collector_names.iter().cloned());
    writer.write_record(&header)?;
    for record in &run.records {
        let mut row = vec![record.sweep.to_string()];
        for value in &record.values {
            row.push(match value {
                CollectedValue::Scalar(x) => format!("{x}"),
                CollectedValue::Vector(v) => v
                    .iter()
                    .map(|x| format!("{x}"))
                    .collect::<Vec<_>>()
                    .join(" "),
            });
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    if let Some(path) = &args.dump_graph {
        std::fs::write(path, run.final_graph.write_edge_list())?;
    }
    Ok(())
}

fn run_enumerate(args: &EnumerateArgs) -> Result<(), Box<dyn Error>> {
    let spec = load_spec(&args.spec)?;
    let model = ModelKind::build(args.model, &spec)?;
    let stats: Vec<Statistic> = args
        .stats
        .iter()
        .map(|s| Statistic::parse(s).ok_or_else(|| format!("unknown statistic `{s}`")))
        .collect::<Result<_, _>>()?;
    let cap = if args.max_n7 {
        ENUMERATION_HARD_MAX_N
    } else {
        ENUMERATION_DEFAULT_MAX_N
    };
    print_json(&enumerate_with_cap(&model, &spec, args.n, &stats, cap)?)
}

fn run_decompose(args: &DecomposeArgs) -> Result<(), Box<dyn Error>> {
    let motif = if args.motif.trim_start().starts_with('{') {
        serde_json::from_str::<Motif>(&args.motif)?
    } else {
        Motif::named(NamedMotif::parse(&args.motif)?)
    };
    let text = std::fs::read_to_string(&args.graph)?;
    let graph = Graph::read_edge_list(&text)?;
    let decomposition = full_decomposition(&motif, &graph, args.p)?;
    let value = serde_json::json!({
        "motif": motif,
        "n": graph.n(),
        "p": args.p,
        "expected_hom": decomposition.expected_hom,
        "terms": decomposition.terms,
        "actual_hom": decomposition.actual_hom,
        "reconstructed": decomposition.reconstructed,
        "residual": decomposition.residual(),
    });
    print_json(&value)
}

fn main() -> Result<(), Box<dyn Error>> {
    match Cli::parse().command {
        Command::SolveP(args) => {
            let spec = load_spec(&args.spec)?;
            print_json(&validate_spec(&spec)?)
        }
        Command::Sample(args) => run_sample(&args),
        Command::Enumerate(args) => run_enumerate(&args),
        Command::Decompose(args) => run_decompose(&args),
        Command::Experiment(which) => match which {
            ExperimentCommand::Sharpness(args) => print_json(&experiment_sharpness(&args.resolve()?)?),
            ExperimentCommand::Scaling(args) => print_json(&experiment_scaling(&args.resolve()?)?),
            ExperimentCommand::Marginals(args) => print_json(&experiment_marginals(&args.resolve()?)?),
            ExperimentCommand::Decomposition(args) => {
                print_json(&experiment_decomposition(&args.resolve()?)?)
            }
            ExperimentCommand::Remainders(args) => {
                print_json(&experiment_remainders(&args.resolve()?)?)
            }
        },
    }
}
