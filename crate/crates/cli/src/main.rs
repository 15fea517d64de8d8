use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use beepmis::experiment::{self, GraphSpec, RunConfig};
use beepmis::trace::TimeUnit;
use beepmis::verifier::{good_node_stats, verify};
use beepmis::{Graph, ProtocolParams, Trace, Verbosity};

/// Beep-model MIS simulator and verifier.
#[derive(Parser)]
#[command(name = "beepmis", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated graph as an edge list.
    Generate(GenerateArgs),
    /// Run a batch of seeded trials from a JSON config.
    Run(RunArgs),
    /// Check a recorded trace against its graph.
    Verify(VerifyArgs),
    /// Tabulate aggregate files from several runs.
    Summarize {
        /// `aggregate.json` files or result directories.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    ErdosRenyi,
    RandomRegular,
    SwatLine,
    RingLattice,
    Path,
    Cycle,
    Star,
    Complete,
    Empty,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Node count (leaf count for `star`).
    #[arg(short, long, default_value_t = 0)]
    n: usize,
    /// Edge probability for `erdos-renyi`.
    #[arg(short, long, default_value_t = 0.0)]
    p: f64,
    /// Degree for `random-regular`, neighbors per side for `ring-lattice`,
    /// the parameter of `swat-line`.
    #[arg(short, long, default_value_t = 0)]
    degree: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config field, e.g. `--set params.eps=0.1`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Result directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-trial traces.
    #[arg(long)]
    traces: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(short, long)]
    graph: PathBuf,
    #[arg(short, long)]
    trace: PathBuf,
    /// Protocol parameters (JSON), enabling budget and good-node checks.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Interval length override for the parameters.
    #[arg(long, requires = "params")]
    interval: Option<u64>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn generate(args: &GenerateArgs) -> Result<bool> {
    let spec = match args.kind {
        Kind::ErdosRenyi => GraphSpec::ErdosRenyi {
            n: args.n,
            p: args.p,
            seed: args.seed,
        },
        Kind::RandomRegular => GraphSpec::RandomRegular {
            n: args.n,
            degree: args.degree,
            seed: args.seed,
        },
        Kind::SwatLine => GraphSpec::SwatLine { delta: args.degree },
        Kind::RingLattice => GraphSpec::RingLattice {
            n: args.n,
            k: args.degree,
        },
        Kind::Path => GraphSpec::Path { n: args.n },
        Kind::Cycle => GraphSpec::Cycle { n: args.n },
        Kind::Star => GraphSpec::Star { leaves: args.n },
        Kind::Complete => GraphSpec::Complete { n: args.n },
        Kind::Empty => GraphSpec::Empty { n: args.n },
    };
    let text = spec.build(None)?.to_edge_list();
    match &args.output {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(true)
}

fn run(args: &RunArgs) -> Result<bool> {
    let mut overrides = args.overrides.clone();
    if let Some(t) = args.trials {
        overrides.push(format!("trials={t}"));
    }
    if let Some(s) = args.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(w) = args.workers {
        overrides.push(format!("workers={w}"));
    }
    if let Some(dir) = &args.out {
        overrides.push(format!("output.dir={}", serde_json::to_string(dir)?));
    }
    if args.traces {
        overrides.push("output.traces=true".into());
    }
    let config = RunConfig::from_json_with_overrides(&read(&args.config)?, &overrides)?;
    let batch = experiment::run_batch(&config)?;
    for f in &batch.aggregate.failed {
        eprintln!(
            "trial {} (seed {}) failed: {}",
            f.trial, f.trial_seed, f.error
        );
    }
    println!("{}", serde_json::to_string_pretty(&batch.aggregate)?);
    Ok(batch.aggregate.failed.is_empty() && batch.aggregate.trials_with_violation == 0)
}

fn verify_cmd(args: &VerifyArgs) -> Result<bool> {
    let g = Graph::parse_edge_list(&read(&args.graph)?)?;
    let trace = Trace::from_jsonl(&read(&args.trace)?)?;
    if trace.header.nodes != g.node_count() {
        bail!(
            "trace has {} nodes, graph has {}",
            trace.header.nodes,
            g.node_count()
        );
    }
    let params = match &args.params {
        Some(path) => {
            let mut p: ProtocolParams = serde_json::from_str(&read(path)?)
                .with_context(|| format!("parsing {}", path.display()))?;
            if let Some(i) = args.interval {
                p = p.with_interval(i);
            }
            if p.delta_bound == 0 {
                p.delta_bound = g.max_degree();
            }
            p.validate()?;
            Some(p)
        }
        None => None,
    };
    let (budget, bucket) = match (&params, trace.header.unit) {
        (Some(p), TimeUnit::Slot) => (p.slot_budget(), p.round_len()),
        (Some(p), TimeUnit::Round) => (p.local_rounds(), 1),
        (None, _) => (trace.header.slots_run, 1),
    };
    let report = verify(&g, &trace, budget, bucket)?;
    let good = match &params {
        Some(p)
            if trace.header.unit == TimeUnit::Slot
                && trace.header.verbosity != Verbosity::Decisions =>
        {
            Some(good_node_stats(&g, &trace, p)?)
        }
        _ => None,
    };
    let out = serde_json::json!({
        "clean": report.is_clean(),
        "violations": report.violation_count(),
        "report": report,
        "good_nodes": good,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(report.is_clean())
}

fn summarize(inputs: &[PathBuf], json: bool) -> Result<bool> {
    let rows = experiment::summarize(inputs)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        print!("{}", experiment::render_table(&rows));
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Summarize { inputs, json } => summarize(inputs, *json),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
