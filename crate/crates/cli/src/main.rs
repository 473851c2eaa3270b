use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use seedsketch::engine::{Engine, QueryRequest, StopSpec};
use seedsketch::eval::{
    estimator_error_experiment, rank_correlation_experiment, recall_experiment, RecallConfig,
};
use seedsketch::expansion::{Method, StopKind};
use seedsketch::ingest::{generate_planted_partition, load_edge_list, write_edge_list, DirectionMode, PlantedConfig};
use seedsketch::lsh::BandingConfig;
use seedsketch::sketch::{build_signatures, save_store};
use seedsketch::{AccountId, HashFamily};
use seedsketch_cli::{server, write_csv};

#[derive(Parser)]
#[command(name = "seedsketch", version, about = "Minhash seed-set expansion over large follower graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a signature store from a tab-separated edge list.
    Build(BuildArgs),
    /// Expand a seed set against a signature store.
    Query(QueryArgs),
    /// Serve queries over HTTP.
    Serve(ServeArgs),
    /// Write a planted-partition edge list and its ground truth.
    Generate(GenerateArgs),
    /// Run an evaluation experiment.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// 0 uses every core, 1 runs sequentially.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Symmetrise edges between accounts.
    #[arg(long)]
    undirected: bool,
    #[arg(long, default_value_t = 1)]
    min_degree: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Ms,
    Ac,
}

#[derive(Clone, Copy, ValueEnum)]
enum StopKindArg {
    #[value(name = "fixed_count", alias = "fixed-count")]
    FixedCount,
    #[value(name = "coverage_threshold", alias = "coverage-threshold")]
    CoverageThreshold,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    store: PathBuf,
    /// Comma-separated account ids.
    #[arg(long, value_delimiter = ',', required = true)]
    seeds: Vec<u64>,
    #[arg(long, value_enum, default_value = "ms")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "fixed_count")]
    stop_kind: StopKindArg,
    #[arg(long, default_value_t = 100.0)]
    stop_value: f64,
    /// Also run community detection on the seeds and results.
    #[arg(long)]
    community: bool,
    #[arg(long, default_value_t = seedsketch::community::DEFAULT_EDGE_THRESHOLD)]
    edge_threshold: f64,
    /// Print the full response as JSON.
    #[arg(long)]
    json: bool,
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct PlantedArgs {
    #[arg(long, default_value_t = 3000)]
    accounts: usize,
    #[arg(long, default_value_t = 10)]
    communities: usize,
    #[arg(long, default_value_t = 30_000)]
    universe: u64,
    #[arg(long, default_value_t = 0.3)]
    p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    p_out: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl PlantedArgs {
    fn config(&self) -> PlantedConfig {
        PlantedConfig {
            n_accounts: self.accounts,
            n_communities: self.communities,
            universe: self.universe,
            p_in: self.p_in,
            p_out: self.p_out,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    planted: PlantedArgs,
    /// Edge list output.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth JSON output.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct OutputArgs {
    /// CSV output path; CSV goes to stdout when neither output is given.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON output path.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Mean |Ĵ − J| against the number of hashes.
    EstimatorError {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "10,20,50,100,200,500,1000")]
        k: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Spearman correlation of exact and estimated similarity rankings.
    RankCorrelation {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<u64>,
        #[arg(long, default_value_t = 100)]
        k_small: usize,
        #[arg(long, default_value_t = 1000)]
        k_large: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Recall of MS, AC and PageRank on a planted partition.
    Recall {
        #[command(flatten)]
        planted: PlantedArgs,
        #[arg(long, default_value_t = 1000)]
        k: usize,
        #[arg(long, default_value_t = 30)]
        seeds_per_community: usize,
        #[arg(long, default_value_t = 5)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Build(a) => build(a),
        Command::Query(a) => query(a),
        Command::Serve(a) => serve(a),
        Command::Generate(a) => generate(a),
        Command::Eval(e) => eval(e),
    }
}

fn build(a: BuildArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let mode = if a.undirected { DirectionMode::Undirected } else { DirectionMode::AsGiven };
    let dataset = load_edge_list(&a.edges, mode, a.min_degree)
        .with_context(|| format!("reading {}", a.edges.display()))?;
    let family = HashFamily::new(a.k, dataset.universe_size(), a.seed)?;
    let matrix = build_signatures(&dataset, &family, a.workers)?;
    save_store(&matrix, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("accounts: {}", dataset.len());
    println!("universe: {}", dataset.universe_size());
    println!("k: {}", a.k);
    println!("elapsed: {:.3}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn query(a: QueryArgs) -> anyhow::Result<()> {
    let engine = Engine::open(&a.store, a.workers).with_context(|| format!("opening {}", a.store.display()))?;
    let req = QueryRequest {
        seeds: a.seeds.into_iter().map(AccountId).collect(),
        method: match a.method {
            MethodArg::Ms => Method::Ms,
            MethodArg::Ac => Method::Ac,
        },
        stop: StopSpec {
            kind: match a.stop_kind {
                StopKindArg::FixedCount => StopKind::FixedCount,
                StopKindArg::CoverageThreshold => StopKind::CoverageThreshold,
            },
            value: a.stop_value,
        },
        community_detection: a.community,
        edge_threshold: a.edge_threshold,
    };
    let resp = engine.query(&req).map_err(|e| anyhow::anyhow!("{e}"))?;
    for w in &resp.warnings {
        eprintln!("warning: {w}");
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    if a.json {
        serde_json::to_writer_pretty(&mut out, &resp)?;
        writeln!(out)?;
        return Ok(());
    }
    writeln!(out, "rank\taccount\tdistance\tcoverage")?;
    for (i, (r, c)) in resp.ranked.iter().zip(&resp.coverage).enumerate() {
        writeln!(out, "{}\t{}\t{:.6}\t{:.1}", i + 1, r.account, r.distance, c)?;
    }
    if let Some(map) = &resp.community {
        let count = map.labels.iter().max().map_or(0, |m| m + 1);
        writeln!(out, "communities: {count} (modularity {:.4})", map.modularity)?;
    }
    Ok(())
}

fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let engine = Engine::open(&a.store, a.workers).with_context(|| format!("opening {}", a.store.display()))?;
    eprintln!("indexed {} accounts", engine.matrix().len());
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(server::serve(Arc::new(engine), &a.bind))
}

fn generate(a: GenerateArgs) -> anyhow::Result<()> {
    let p = generate_planted_partition(&a.planted.config())?;
    write_edge_list(&p.dataset, BufWriter::new(File::create(&a.out)?))?;
    if let Some(path) = &a.truth {
        write_json(&p.truth, path)?;
    }
    eprintln!("accounts: {}, universe: {}", p.dataset.len(), p.dataset.universe_size());
    Ok(())
}

fn eval(e: EvalCommand) -> anyhow::Result<()> {
    match e {
        EvalCommand::EstimatorError { edges, k, pairs, seed, workers, output } => {
            let ds = load_edge_list(&edges, DirectionMode::AsGiven, 1)?;
            let rows = estimator_error_experiment(&ds, &k, pairs, seed, workers)?;
            emit(&rows, &rows, &output)
        }
        EvalCommand::RankCorrelation { edges, targets, k_small, k_large, seed, output } => {
            let ds = load_edge_list(&edges, DirectionMode::AsGiven, 1)?;
            let mut rows = Vec::new();
            for t in targets {
                match rank_correlation_experiment(&ds, AccountId(t), k_small, k_large, seed) {
                    Ok(r) => rows.push(r),
                    Err(err) => eprintln!("skipping {t}: {err}"),
                }
            }
            if rows.is_empty() {
                bail!("no target had enough comparators");
            }
            emit(&rows, &rows, &output)
        }
        EvalCommand::Recall { planted, k, seeds_per_community, draws, workers, output } => {
            let mut cfg = RecallConfig::standard(planted.universe, planted.seed);
            cfg.planted = planted.config();
            cfg.k = k;
            cfg.seeds_per_community = seeds_per_community;
            cfg.draws = draws;
            cfg.workers = workers;
            cfg.banding = BandingConfig::for_k(k)?;
            let report = recall_experiment(&cfg)?;
            for s in &report.summary {
                eprintln!("{}: mean AUC {:.4} ± {:.4} over {} runs", s.method.name(), s.mean_auc, s.std_error, s.runs);
            }
            emit(&report.runs, &report, &output)
        }
    }
}

fn emit<R: Serialize, J: Serialize>(rows: &[R], json: &J, output: &OutputArgs) -> anyhow::Result<()> {
    if let Some(path) = &output.csv {
        write_csv(rows, BufWriter::new(File::create(path)?))?;
    }
    if let Some(path) = &output.json {
        write_json(json, path)?;
    }
    if output.csv.is_none() && output.json.is_none() {
        write_csv(rows, io::stdout().lock())?;
    }
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("writing {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
