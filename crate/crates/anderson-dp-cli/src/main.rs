//! Benchmark runner: generates a cohort of Garnet MDPs, runs the requested
//! algorithm/m grid, and writes deterministic CSV and SVG outputs.
//!
//! Exit codes: 0 on success, 1 if any run failed, 2 on configuration errors.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use anderson_dp::experiment::{
    aggregate, emit_aggregates_csv, emit_records_csv, run_experiment, ExperimentConfig,
};
use anderson_dp::garnet::{generate, GarnetSpec};
use anderson_dp::plot::emit_plots;
use anderson_dp::solvers::Algorithm;

#[derive(Parser, Debug)]
#[command(
    name = "anderson-dp",
    about = "Anderson-accelerated value iteration benchmark on Garnet MDPs",
    after_help = "The worker pool size can be capped with ANDERSON_DP_THREADS."
)]
struct Cli {
    /// Number of states per Garnet instance.
    #[arg(long, default_value_t = 100)]
    states: usize,

    /// Number of actions per Garnet instance.
    #[arg(long, default_value_t = 4)]
    actions: usize,

    /// Branching factor (successors per state-action pair).
    #[arg(long, default_value_t = 3)]
    branching: usize,

    /// Discount factor, strictly inside (0, 1).
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,

    /// Number of Garnet instances in the cohort.
    #[arg(long, default_value_t = 100)]
    num_mdps: usize,

    /// Iterations per run.
    #[arg(long, default_value_t = 250)]
    iters: usize,

    /// Memory parameter; repeatable, each occurrence an integer or an
    /// inclusive range like "0..9". 0 labels the unaccelerated runs.
    #[arg(long = "m", default_value = "0..9")]
    m_values: Vec<String>,

    /// Algorithm; repeatable: vi, avi, rvi, arvi. Defaults to all four.
    #[arg(long = "algo")]
    algorithms: Vec<String>,

    /// Seed of the first instance; instance i uses base-seed + i.
    #[arg(long, default_value_t = 0)]
    base_seed: u64,

    /// Relative Tikhonov regularization for the coefficient solve.
    #[arg(long, default_value_t = 1e-8)]
    lambda_rel: f64,

    /// Output directory; created if absent.
    #[arg(long = "out", default_value = "out")]
    output_dir: PathBuf,

    /// Serialize every generated MDP into the output directory.
    #[arg(long)]
    dump_mdps: bool,

    /// Skip SVG emission.
    #[arg(long)]
    no_plots: bool,
}

fn parse_m_values(raw: &[String]) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for item in raw {
        if let Some((lo, hi)) = item.split_once("..") {
            let lo: usize = lo.trim().parse().map_err(|_| format!("bad m range '{item}'"))?;
            let hi: usize = hi.trim().parse().map_err(|_| format!("bad m range '{item}'"))?;
            if lo > hi {
                return Err(format!("empty m range '{item}'"));
            }
            out.extend(lo..=hi);
        } else {
            out.push(item.trim().parse().map_err(|_| format!("bad m value '{item}'"))?);
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn parse_algorithms(raw: &[String]) -> Result<BTreeSet<Algorithm>, String> {
    if raw.is_empty() {
        return Ok([
            Algorithm::Vi,
            Algorithm::AndersonVi,
            Algorithm::RelativeVi,
            Algorithm::AndersonRelativeVi,
        ]
        .into_iter()
        .collect());
    }
    raw.iter()
        .map(|s| Algorithm::parse(s).map_err(|e| e.to_string()))
        .collect()
}

fn run(cli: &Cli) -> Result<bool, String> {
    let m_values = parse_m_values(&cli.m_values)?;
    let algorithms = parse_algorithms(&cli.algorithms)?;
    let config = ExperimentConfig {
        garnet: GarnetSpec {
            num_states: cli.states,
            num_actions: cli.actions,
            branching: cli.branching,
            gamma: cli.gamma,
            ..GarnetSpec::default()
        },
        num_mdps: cli.num_mdps,
        num_iters: cli.iters,
        m_values,
        algorithms,
        base_seed: cli.base_seed,
        lambda_rel: cli.lambda_rel,
    };
    config.validate().map_err(|e| e.to_string())?;

    std::fs::create_dir_all(&cli.output_dir)
        .map_err(|e| format!("cannot create {}: {e}", cli.output_dir.display()))?;

    if cli.dump_mdps {
        for i in 0..config.num_mdps {
            let seed = config.base_seed.wrapping_add(i as u64);
            let spec = GarnetSpec {
                seed,
                ..config.garnet.clone()
            };
            let mdp = generate(&spec).map_err(|e| e.to_string())?;
            let path = cli.output_dir.join(format!("mdp_{seed}.json"));
            std::fs::write(&path, mdp.to_json().map_err(|e| e.to_string())?)
                .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        }
    }

    let outcome = run_experiment(&config).map_err(|e| e.to_string())?;
    let records_path = cli.output_dir.join("records.csv");
    emit_records_csv(&outcome.records, &records_path).map_err(|e| e.to_string())?;
    let rows = aggregate(&outcome.records);
    let aggregates_path = cli.output_dir.join("aggregates.csv");
    emit_aggregates_csv(&rows, &aggregates_path).map_err(|e| e.to_string())?;
    if !cli.no_plots {
        let plots = emit_plots(&rows, &cli.output_dir).map_err(|e| e.to_string())?;
        println!("wrote {} plots", plots.len());
    }
    println!(
        "wrote {} records to {} ({} aggregate rows)",
        outcome.records.len(),
        records_path.display(),
        rows.len()
    );

    for failure in &outcome.failures {
        eprintln!(
            "failed run: seed={} algorithm={} m={}{}: {}",
            failure.mdp_seed,
            failure.algorithm.label(),
            failure.m,
            failure
                .iteration
                .map(|k| format!(" iteration={k}"))
                .unwrap_or_default(),
            failure.message
        );
    }
    Ok(outcome.failures.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
