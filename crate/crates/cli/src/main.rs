use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use junction_cli::{compare, ExperimentPlan};
use junction_core::conflictgraph::Cug;
use junction_core::scheduler::{build_spanning_tree, mcc_exact, mcc_heuristic};
use junction_core::sim::{simulate, Pipeline, RunStatus, SimConfig, SimError};

/// Exit status for a collision.
const EXIT_COLLISION: u8 = 3;
/// Exit status for a deadlock or timeout in the proposed pipeline.
const EXIT_STUCK: u8 = 4;

#[derive(Parser)]
#[command(name = "junction", version, about = "Lane-change planning and clique-cover scheduling at a four-leg intersection")]
struct Cli {
    /// More progress output on stderr (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its event log and report.
    Run {
        /// Scenario config (TOML). Omitted fields take their defaults.
        config: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the algorithm pair, e.g. `fclc+mcc` or `greedy+constant-tl`.
        #[arg(long)]
        pipeline: Option<Pipeline>,
        /// Output directory for `events.csv` and `report.json`.
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// Skip the per-step event log.
        #[arg(long)]
        no_log: bool,
    },
    /// Sweep a plan over its axis and seeds and tabulate every algorithm.
    Compare {
        /// Experiment plan (TOML).
        plan: PathBuf,
        /// Directory for `summary.csv`, `reductions.csv` and `runs.csv`.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Replace the plan's seeds with `1..=N`.
        #[arg(long)]
        seeds: Option<u64>,
        /// Replace the plan's algorithms (comma separated, first is ours).
        #[arg(long, value_delimiter = ',')]
        algorithms: Option<Vec<Pipeline>>,
    },
    /// Minimum clique cover and passing order of a coexistence graph.
    Mcc {
        /// Adjacency list, one `node: neighbours...` line per node.
        graph: PathBuf,
        /// Use the exact solver (at most 16 nodes).
        #[arg(long)]
        exact: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, pipeline, out, no_log } => cmd_run(config.as_deref(), seed, pipeline, &out, no_log, cli.verbose),
        Command::Compare { plan, out, seeds, algorithms } => cmd_compare(&plan, out.as_deref(), seeds, algorithms, cli.verbose),
        Command::Mcc { graph, exact } => cmd_mcc(&graph, exact),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<SimConfig> {
    let Some(path) = path else {
        return Ok(SimConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    SimConfig::from_toml_str(&text).with_context(|| format!("config {}", path.display()))
}

fn cmd_run(
    config: Option<&Path>,
    seed: Option<u64>,
    pipeline: Option<Pipeline>,
    out: &Path,
    no_log: bool,
    verbose: u8,
) -> Result<ExitCode> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(p) = pipeline {
        cfg = cfg.with_pipeline(p);
    }
    cfg.validate()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    if verbose > 0 {
        eprintln!("running {} seed {} with {} vehicles at {} veh/h", cfg.pipeline(), cfg.seed, cfg.vehicles, cfg.volume);
    }

    let log_path = out.join("events.csv");
    let result = if no_log {
        simulate(&cfg, None)
    } else {
        let file = File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
        let mut w = BufWriter::new(file);
        let r = simulate(&cfg, Some(&mut w));
        w.flush()?;
        r
    };
    let run = match result {
        Ok(run) => run,
        Err(e @ SimError::Collision { .. }) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(EXIT_COLLISION));
        }
        Err(e) => return Err(e.into()),
    };

    let report_path = out.join("report.json");
    fs::write(&report_path, run.report.to_json()).with_context(|| format!("writing {}", report_path.display()))?;
    let r = &run.report;
    let fmt = |x: Option<f64>| x.map_or_else(|| "-".into(), |v| format!("{v:.2} s"));
    println!(
        "{} seed {}: {:?}, {}/{} crossed, t_evc {}, ATTD {}",
        r.pipeline,
        r.seed,
        r.status,
        r.crossed,
        r.vehicles,
        fmt(r.t_evc),
        fmt(r.t_attd)
    );
    if verbose > 0 {
        eprintln!("wrote {}", report_path.display());
        if !no_log {
            eprintln!("wrote {}", log_path.display());
        }
    }
    if r.status != RunStatus::Completed && cfg.pipeline() == Pipeline::PROPOSED {
        return Ok(ExitCode::from(EXIT_STUCK));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(
    path: &Path,
    out: Option<&Path>,
    seeds: Option<u64>,
    algorithms: Option<Vec<Pipeline>>,
    verbose: u8,
) -> Result<ExitCode> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut plan = ExperimentPlan::from_toml_str(&text).with_context(|| format!("plan {}", path.display()))?;
    if let Some(n) = seeds {
        plan.seeds = (1..=n).collect();
    }
    if let Some(a) = algorithms {
        plan.algorithms = a;
    }
    plan.validate()?;
    if verbose > 0 {
        eprintln!("{} runs over {} points", plan.runs(), plan.points.len());
    }
    let table = compare(&plan, |r| {
        if verbose > 1 {
            let status = r.failure().unwrap_or_else(|| "ok".into());
            eprintln!("  {} = {} seed {} {}: {status}", plan.axis, r.point, r.seed, r.algorithm);
        }
    });
    print!("{}", table.to_table());
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, body) in [
            ("summary.csv", table.summary_csv()),
            ("reductions.csv", table.reductions_csv()),
            ("runs.csv", table.runs_csv()),
        ] {
            let p = dir.join(name);
            fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
        }
    }
    // Failed members are already marked in the table; only a proposed-pipeline failure is an error.
    let proposed_failed = table
        .cells
        .iter()
        .any(|c| c.algorithm == Pipeline::PROPOSED && !c.failures.is_empty());
    Ok(if proposed_failed { ExitCode::from(EXIT_STUCK) } else { ExitCode::SUCCESS })
}

fn cmd_mcc(path: &Path, exact: bool) -> Result<ExitCode> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let g = Cug::parse_adjacency_text(&text).with_context(|| format!("graph {}", path.display()))?;
    if g.n() == 0 {
        bail!("graph {} has no nodes", path.display());
    }
    let cover = if exact { mcc_exact(&g)? } else { mcc_heuristic(&g) };
    let tree = build_spanning_tree(&cover, &g, &[]);
    println!("cover size: {}", cover.k());
    for c in &cover.cliques {
        let names: Vec<String> = c.iter().map(u32::to_string).collect();
        println!("  {{{}}}", names.join(", "));
    }
    println!("tree depth: {}", tree.depth());
    println!("vehicle parent depth");
    print!("{}", tree.to_parent_text());
    Ok(ExitCode::SUCCESS)
}
