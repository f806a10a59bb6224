//! `pimdse`: sample, map, simulate and search ReRAM recommender accelerators.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use pimdse_core::cost::TechParams;
use pimdse_core::design_space::{cardinality, sample_in, validate_in, DesignPoint, SpaceDescriptor, CONNECTION_CONVENTION};
use pimdse_core::evaluator::{ingest_external, unknown_point_ids};
use pimdse_core::json::to_canonical_pretty;
use pimdse_core::mapping::{map_model, MappedModel};
use pimdse_core::pipeline::{evaluate, load_trace, LookupModel};
use pimdse_core::search::{run_search_with, PopulationEntry, SearchConfig, SearchContext, SearchLog};

const MANIFEST: &str = "manifest.json";
const TOP_K: usize = 15;

#[derive(Parser)]
#[command(name = "pimdse", version, about = "Design-space exploration for ReRAM PIM recommender accelerators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect the design space.
    Space {
        #[command(subcommand)]
        action: SpaceCmd,
    },
    /// Map a design point onto crossbar tiles and print the mapped model.
    Map(PointArgs),
    /// Print cost and throughput reports for a design point.
    Simulate(SimulateArgs),
    /// Run the evolutionary search and write results to a directory.
    Search(SearchArgs),
    /// Print the bundled illustrative technology profile.
    Tech,
}

#[derive(Subcommand)]
enum SpaceCmd {
    /// Print the exact number of design points.
    Count {
        #[arg(long)]
        space: Option<PathBuf>,
        /// Also print the connection counting convention.
        #[arg(long)]
        convention: bool,
    },
    /// Print random design points, one JSON document per line.
    Sample {
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short = 'n', long = "count", default_value_t = 1)]
        n: usize,
    },
}

#[derive(Args)]
struct PointArgs {
    #[arg(long)]
    point: PathBuf,
    #[arg(long)]
    space: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    point: PointArgs,
    #[arg(long)]
    tech: Option<PathBuf>,
    /// Disable overlap of DP/FM vector programming with production.
    #[arg(long)]
    no_overlap: bool,
    /// Embedding trace, one query of comma-separated ids per line.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long = "search-config")]
    search_config: Option<PathBuf>,
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long)]
    tech: Option<PathBuf>,
    /// Overrides the seed in the search config.
    #[arg(long)]
    seed: Option<u64>,
    /// Threads for child evaluation.
    #[arg(long)]
    workers: Option<usize>,
    /// CSV of measured losses (`point_id,log_loss[,auc]`) overriding the surrogate.
    #[arg(long)]
    external: Option<PathBuf>,
    #[arg(long)]
    no_overlap: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Failure category mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    Parse,
    Validation,
}

#[derive(Debug)]
struct Categorized(Category, String);

impl fmt::Display for Categorized {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Categorized {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use pimdse_core::Error as E;
    for cause in err.chain() {
        if let Some(Categorized(c, _)) = cause.downcast_ref::<Categorized>() {
            return match c {
                Category::Parse => 2,
                Category::Validation => 3,
            };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Json(_) | E::Parse { .. } => 2,
                E::InvalidConfig(_)
                | E::InvalidPoint(_)
                | E::OutOfRange { .. }
                | E::ShapeMismatch(_)
                | E::CapacityExceeded(_)
                | E::UnplacedId(_) => 3,
                E::SearchAborted(_) | E::Io(_) => 4,
            };
        }
    }
    4
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Categorized(Category::Parse, format!("cannot read {}: {e}", path.display())).into())
}

fn load_space(path: Option<&Path>) -> Result<SpaceDescriptor> {
    match path {
        None => Ok(SpaceDescriptor::default()),
        Some(p) => SpaceDescriptor::from_json(&read_input(p)?).with_context(|| format!("space {}", p.display())),
    }
}

fn load_tech(path: Option<&Path>) -> Result<TechParams> {
    match path {
        None => Ok(TechParams::illustrative()),
        Some(p) => TechParams::from_json(&read_input(p)?).with_context(|| format!("tech {}", p.display())),
    }
}

fn load_point(args: &PointArgs) -> Result<(DesignPoint, MappedModel)> {
    let text = read_input(&args.point)?;
    let point = DesignPoint::from_json(&text).with_context(|| format!("point {}", args.point.display()))?;
    let space = load_space(args.space.as_deref())?;
    let report = validate_in(&space, &point);
    if !report.ok {
        bail!(Categorized(Category::Validation, format!("invalid design point: {}", report.violations.join("; "))));
    }
    let mm = map_model(&point)?;
    Ok((point, mm))
}

fn cmd_space(action: SpaceCmd) -> Result<()> {
    match action {
        SpaceCmd::Count { space, convention } => {
            let space = load_space(space.as_deref())?;
            println!("{}", cardinality(&space));
            if convention {
                println!("{CONNECTION_CONVENTION}");
            }
        }
        SpaceCmd::Sample { space, seed, n } => {
            let space = load_space(space.as_deref())?;
            for i in 0..n as u64 {
                println!("{}", sample_in(&space, seed.wrapping_add(i)).to_json()?);
            }
        }
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let (_, mm) = load_point(&args.point)?;
    let tech = load_tech(args.tech.as_deref())?;
    let lookup = match &args.trace {
        None => LookupModel::Ideal,
        Some(p) => {
            read_input(p)?;
            LookupModel::Trace { queries: load_trace(p)? }
        }
    };
    let (cost, throughput) = evaluate(&mm, &tech, &lookup, !args.no_overlap)?;
    println!("{}", to_canonical_pretty(&json!({ "cost": cost, "throughput": throughput }))?);
    Ok(())
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config_paths: BTreeMap<String, String>,
    seed: u64,
    tool_version: String,
    output_dir: String,
    artifacts: Vec<String>,
    status: String,
    wall_time_s: Option<f64>,
}

#[derive(Serialize)]
struct RankedEntry<'a> {
    rank: usize,
    point_id: &'a str,
    criterion: f64,
    loss: f64,
    metrics: [f64; 3],
    point: &'a DesignPoint,
}

fn write_results(out: &Path, log: &SearchLog, population: &[PopulationEntry]) -> Result<()> {
    let top: Vec<RankedEntry> = population
        .iter()
        .take(TOP_K)
        .enumerate()
        .map(|(i, e)| RankedEntry {
            rank: i + 1,
            point_id: &e.point.point_id,
            criterion: e.criterion,
            loss: e.loss,
            metrics: e.metrics,
            point: &e.point,
        })
        .collect();
    let write = |name: &str, body: String| fs::write(out.join(name), body).with_context(|| format!("writing {name}"));
    write("top15.json", to_canonical_pretty(&json!({ "manifest": MANIFEST, "entries": top }))? + "\n")?;
    write("search_log.json", to_canonical_pretty(&json!({ "manifest": MANIFEST, "log": log }))? + "\n")?;
    write("criterion.csv", format!("# manifest: {MANIFEST}\n{}", log.to_csv()?))?;
    Ok(())
}

fn cmd_search(args: SearchArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg = match &args.search_config {
        None => SearchConfig::default(),
        Some(p) => SearchConfig::from_json(&read_input(p)?).with_context(|| format!("search config {}", p.display()))?,
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.no_overlap {
        cfg.overlap = false;
    }
    let mut ctx = SearchContext::new(&cfg);
    ctx.space = load_space(args.space.as_deref())?;
    ctx.tech = load_tech(args.tech.as_deref())?;
    ctx.workers = args.workers;
    if let Some(p) = &args.external {
        read_input(p)?;
        ctx.evaluator.external = ingest_external(p)?.results;
    }

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut paths = BTreeMap::new();
    for (k, v) in [("search_config", &args.search_config), ("space", &args.space), ("tech", &args.tech), ("external", &args.external)] {
        if let Some(p) = v {
            paths.insert(k.to_string(), p.display().to_string());
        }
    }
    let mut manifest = RunManifest {
        command: std::env::args().collect::<Vec<_>>().join(" "),
        config_paths: paths,
        seed: cfg.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        output_dir: args.out.display().to_string(),
        artifacts: vec!["top15.json".into(), "search_log.json".into(), "criterion.csv".into()],
        status: "running".into(),
        wall_time_s: None,
    };
    let manifest_path = args.out.join(MANIFEST);
    fs::write(&manifest_path, to_canonical_pretty(&manifest)? + "\n")?;

    let out_dir = args.out.clone();
    let outcome = run_search_with(&cfg, &ctx, |log, pop| {
        write_results(&out_dir, log, pop).map_err(|e| pimdse_core::Error::Io(std::io::Error::other(e.to_string())))
    })?;
    write_results(&args.out, &outcome.log, &outcome.population)?;
    let ids: Vec<&str> = outcome.population.iter().map(|e| e.point.point_id.as_str()).collect();
    unknown_point_ids(&ctx.evaluator.external, ids);

    manifest.status = "complete".into();
    manifest.wall_time_s = Some(started.elapsed().as_secs_f64());
    fs::write(&manifest_path, to_canonical_pretty(&manifest)? + "\n")?;
    log::info!(
        "search finished: best criterion {} after {} generations",
        outcome.population[0].criterion,
        cfg.num_generations
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Space { action } => cmd_space(action),
        Command::Map(args) => {
            let (_, mm) = load_point(&args)?;
            println!("{}", mm.to_json()?);
            Ok(())
        }
        Command::Simulate(args) => cmd_simulate(args),
        Command::Search(args) => cmd_search(args),
        Command::Tech => {
            println!("{}", TechParams::illustrative().to_json()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PIMDSE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
