use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cachecast::collision::{avalanche_run, replay_trace};
use cachecast::harness::{
    dump_programs, records_to_csv, run_experiment, summarize, ExperimentConfig, Model, ResultRecord,
    Summary, Sweep, SweepParam,
};
use cachecast::model::{assign_caches, CacheAssignment, CacheScheme};
use cachecast::scenario::fixtures::{collision_example, COLLISION_EXAMPLE_GROUPS};
use cachecast::scenario::{build_collision_graph, generate_layout, Layout, LayoutParams};

#[derive(Parser)]
#[command(name = "cachecast", version, about = "Coded caching delivery simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a random layout and write it as JSON.
    Generate(GenerateArgs),
    /// Run the experiment described by a config file and write results CSV.
    Run(RunArgs),
    /// Run a config over a list of values of one parameter.
    Sweep(SweepArgs),
    /// Run the avalanche scheduler on one instance and write its trace.
    Trace(TraceArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Config whose [layout] section and capacities are used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    lambda_helpers: Option<f64>,
    #[arg(long)]
    lambda_users: Option<f64>,
    #[arg(long)]
    radius_m: Option<f64>,
    #[arg(long)]
    c_front: Option<f64>,
    #[arg(long)]
    c_access: Option<f64>,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct OutputArgs {
    /// Results CSV; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Per-(scheme, sweep value) summary as JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Routing solutions of topological schemes as JSON lines.
    #[arg(long)]
    routing_json: Option<PathBuf>,
    /// Write the routing LPs of the first instance in LP format to this directory.
    #[arg(long)]
    dump_lp: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    config: PathBuf,
    /// One of mu, L, c_ratio.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct TraceArgs {
    /// Layout JSON; every user must be inside some cell.
    #[arg(long, conflicts_with = "example", required_unless_present = "example")]
    layout: Option<PathBuf>,
    /// Use the built-in six-user example instance.
    #[arg(long)]
    example: bool,
    /// Cache group of every user, comma-separated; random when omitted.
    #[arg(long, value_delimiter = ',')]
    groups: Option<Vec<usize>>,
    /// Number of cache configurations L.
    #[arg(short = 'L', long = "num-groups")]
    num_groups: Option<usize>,
    /// Library replication t'.
    #[arg(short = 't', long)]
    replication: Option<usize>,
    /// Seed for the random cache assignment.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    file_bits: f64,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn generate(args: GenerateArgs) -> Result<()> {
    let mut params = match &args.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            cfg.layout_params(&cfg.point(cfg.sweep_values()[0]))
        }
        None => LayoutParams::default(),
    };
    if let Some(v) = args.lambda_helpers {
        params.lambda_helpers = v;
    }
    if let Some(v) = args.lambda_users {
        params.lambda_users = v;
    }
    if let Some(v) = args.radius_m {
        params.region_radius_m = v;
    }
    if let Some(v) = args.c_front {
        params.c_front_bps = v;
    }
    if let Some(v) = args.c_access {
        params.c_access_bps = v;
    }
    let layout = generate_layout(&params, args.seed);
    layout.validate()?;
    write_out(args.output.as_deref(), &(layout.to_json()? + "\n"))
}

fn print_summary(rows: &[Summary]) {
    eprintln!("{:<22} {:>8} {:>14} {:>12} {:>6} {:>8}", "scheme", "value", "mean_t", "stderr", "n", "flagged");
    for s in rows {
        eprintln!(
            "{:<22} {:>8} {:>14.6} {:>12.6} {:>6} {:>8}",
            s.scheme, s.sweep_value, s.mean, s.stderr, s.count, s.excluded
        );
    }
}

fn execute(cfg: &ExperimentConfig, out: &OutputArgs) -> Result<Vec<ResultRecord>> {
    if let Some(dir) = &out.dump_lp {
        let files = dump_programs(cfg, dir)?;
        log::info!("wrote {} LP files to {}", files.len(), dir.display());
    }
    let records = run_experiment(cfg)?;
    write_out(out.output.as_deref(), &records_to_csv(&records)?)?;
    let summary = summarize(&records);
    if let Some(path) = &out.summary {
        fs::write(path, serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    if let Some(path) = &out.routing_json {
        if cfg.model != Model::Topological {
            bail!("--routing-json applies to the topological model");
        }
        let lines: String = records
            .iter()
            .filter_map(|r| r.diagnostics.routing_json.as_ref())
            .map(|j| format!("{j}\n"))
            .collect();
        fs::write(path, lines)?;
    }
    print_summary(&summary);
    let flagged = records.iter().filter(|r| !r.flag.is_empty()).count();
    if flagged > 0 {
        log::warn!("{flagged} of {} rows flagged", records.len());
    }
    Ok(records)
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    execute(&cfg, &args.out)?;
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    cfg.sweep = Some(Sweep {
        param: args.param.parse::<SweepParam>()?,
        values: args.values,
    });
    cfg.validate()?;
    execute(&cfg, &args.out)?;
    Ok(())
}

fn trace(args: TraceArgs) -> Result<()> {
    let layout: Layout = if args.example {
        collision_example()
    } else {
        let path = args.layout.as_ref().expect("clap requires --layout without --example");
        Layout::from_json(&fs::read_to_string(path)?)?
    };
    let cg = build_collision_graph(&layout)?;
    let (groups, replication) = if args.example {
        (args.num_groups.unwrap_or(3), args.replication.unwrap_or(1))
    } else {
        (args.num_groups.unwrap_or(4), args.replication.unwrap_or(1))
    };
    let scheme = CacheScheme::new(groups, replication)?;
    let assignment = match (&args.groups, args.example) {
        (Some(g), _) => CacheAssignment::from_groups(g.clone(), groups)?,
        (None, true) => CacheAssignment::from_groups(COLLISION_EXAMPLE_GROUPS.to_vec(), groups)?,
        (None, false) => assign_caches(cg.users, groups, args.seed),
    };
    if assignment.users() != cg.users {
        bail!("{} group labels for {} users", assignment.users(), cg.users);
    }
    let outcome = avalanche_run(&cg, &assignment, &scheme, args.file_bits)?;
    let report = replay_trace(&outcome.trace, &cg, &assignment, &scheme);
    if !report.is_clean() {
        bail!("trace failed replay: {report:?}");
    }
    eprintln!(
        "slots {} t_slot {} t_seconds {}",
        outcome.slots, outcome.t_slot, outcome.t_seconds
    );
    write_out(args.output.as_deref(), &outcome.trace.to_jsonl()?)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Trace(a) => trace(a),
    }
}

