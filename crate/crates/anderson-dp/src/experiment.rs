//! Benchmark harness: runs the algorithm/m grid over a cohort of Garnet
//! instances, computes both error metrics against the exact oracle, and
//! emits deterministic CSV.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::garnet::{generate, GarnetSpec};
use crate::mdp::{exact_policy_value, greedy_actions, optimal_value_oracle, Mdp, Policy, ValueFunction};
use crate::solvers::{
    anderson_relative_vi, anderson_vi, normalized_error, relative_value_iteration,
    value_iteration, Algorithm, RelativeViConfig, SolverTrace,
};

/// Anchor state for the relative family; fixed so results are
/// seed-independent.
pub const ANCHOR_STATE: usize = 0;

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "ANDERSON_DP_THREADS";

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Garnet template; the seed field is overridden per instance with
    /// base_seed + instance index.
    pub garnet: GarnetSpec,
    pub num_mdps: usize,
    pub num_iters: usize,
    /// Memory parameters; 0 labels the unaccelerated runs.
    pub m_values: Vec<usize>,
    pub algorithms: BTreeSet<Algorithm>,
    pub base_seed: u64,
    pub lambda_rel: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_mdps < 1 {
            return Err(Error::InvalidArgument("num_mdps must be at least 1".into()));
        }
        if self.num_iters < 1 {
            return Err(Error::InvalidArgument("num_iters must be at least 1".into()));
        }
        if self.m_values.is_empty() {
            return Err(Error::InvalidArgument("m_values must be nonempty".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidArgument("algorithms must be nonempty".into()));
        }
        if !(self.lambda_rel >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda_rel must be nonnegative, got {}",
                self.lambda_rel
            )));
        }
        Ok(())
    }

    /// The (algorithm, m) grid actually run: m = 0 maps to the plain
    /// solvers, m >= 1 to the accelerated ones.
    pub fn runs(&self) -> Vec<(Algorithm, usize)> {
        let mut ms: Vec<usize> = self.m_values.clone();
        ms.sort_unstable();
        ms.dedup();
        let mut out = Vec::new();
        for &algo in &self.algorithms {
            for &m in &ms {
                let matches = match algo {
                    Algorithm::Vi | Algorithm::RelativeVi => m == 0,
                    Algorithm::AndersonVi | Algorithm::AndersonRelativeVi => m >= 1,
                };
                if matches {
                    out.push((algo, m));
                }
            }
        }
        out
    }
}

/// One (instance, algorithm, m, iteration) measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub mdp_seed: u64,
    pub algorithm: Algorithm,
    pub m: usize,
    pub iteration: usize,
    pub norm_error: f64,
    pub greedy_error: f64,
}

/// A run that aborted; kept as data so the cohort stays accounted for.
#[derive(Debug, Clone)]
pub struct FailedRun {
    pub mdp_seed: u64,
    pub algorithm: Algorithm,
    pub m: usize,
    pub iteration: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    /// Sorted by (algorithm, m, mdp_seed, iteration).
    pub records: Vec<ExperimentRecord>,
    pub failures: Vec<FailedRun>,
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw.parse().map_err(|_| {
            Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got '{raw}'"))
        })?;
        if n == 0 {
            return Err(Error::InvalidArgument(format!(
                "{THREADS_ENV} must be a positive integer, got 0"
            )));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Numeric(format!("failed to build worker pool: {e}")))
}

/// Run the full grid. Every run starts from the null value function; the
/// oracle v_* is computed once per instance and shared by both metrics.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let runs = config.runs();
    if runs.is_empty() {
        return Err(Error::InvalidArgument(
            "algorithm/m grid is empty (m=0 pairs only with vi/rvi, m>=1 with avi/arvi)".into(),
        ));
    }

    let pool = thread_pool()?;
    let per_instance: Vec<Result<(Vec<ExperimentRecord>, Vec<FailedRun>)>> = pool.install(|| {
        (0..config.num_mdps)
            .into_par_iter()
            .map(|i| run_instance(config, &runs, i))
            .collect()
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for item in per_instance {
        let (mut recs, mut fails) = item?;
        records.append(&mut recs);
        failures.append(&mut fails);
    }
    records.sort_by_key(|r| (r.algorithm, r.m, r.mdp_seed, r.iteration));
    failures.sort_by_key(|f| (f.algorithm, f.m, f.mdp_seed));
    Ok(ExperimentOutcome { records, failures })
}

struct InstanceContext {
    mdp: Mdp,
    v_star: ValueFunction,
    /// v_* - v_*(s0) 1, the relative family's fixed point.
    v_star_shifted: ValueFunction,
    /// Greedy-policy values keyed by action vector; greedy policies repeat
    /// heavily across iterations once runs converge.
    policy_values: HashMap<Vec<usize>, f64>,
}

impl InstanceContext {
    /// greedy_policy_error with the per-instance cache.
    fn greedy_error(&mut self, v_k: &ValueFunction) -> Result<f64> {
        let actions = greedy_actions(&self.mdp, v_k)?;
        if let Some(&err) = self.policy_values.get(&actions) {
            return Ok(err);
        }
        let policy = Policy::deterministic(&actions, self.mdp.num_actions())?;
        let v_pi = exact_policy_value(&self.mdp, &policy)?;
        let err = normalized_error(&self.v_star, &v_pi)?;
        self.policy_values.insert(actions, err);
        Ok(err)
    }
}

fn run_instance(
    config: &ExperimentConfig,
    runs: &[(Algorithm, usize)],
    index: usize,
) -> Result<(Vec<ExperimentRecord>, Vec<FailedRun>)> {
    let seed = config.base_seed.wrapping_add(index as u64);
    let spec = GarnetSpec {
        seed,
        ..config.garnet.clone()
    };
    let mdp = generate(&spec)?;
    let (v_star, _) = optimal_value_oracle(&mdp)?;
    let v_star_shifted =
        ValueFunction(v_star.iter().map(|x| x - v_star[ANCHOR_STATE]).collect());
    let mut ctx = InstanceContext {
        mdp,
        v_star,
        v_star_shifted,
        policy_values: HashMap::new(),
    };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for &(algorithm, m) in runs {
        match run_one(config, &mut ctx, seed, algorithm, m) {
            Ok(mut recs) => records.append(&mut recs),
            Err(err) => failures.push(FailedRun {
                mdp_seed: seed,
                algorithm,
                m,
                iteration: match err {
                    Error::NonFiniteIterate { iteration } => Some(iteration),
                    _ => None,
                },
                message: err.to_string(),
            }),
        }
    }
    Ok((records, failures))
}

fn run_one(
    config: &ExperimentConfig,
    ctx: &mut InstanceContext,
    seed: u64,
    algorithm: Algorithm,
    m: usize,
) -> Result<Vec<ExperimentRecord>> {
    let v0 = ValueFunction::zeros(ctx.mdp.num_states());
    let rel = RelativeViConfig {
        anchor_state: ANCHOR_STATE,
    };
    let trace: SolverTrace = match algorithm {
        Algorithm::Vi => value_iteration(&ctx.mdp, &v0, config.num_iters)?,
        Algorithm::AndersonVi => {
            anderson_vi(&ctx.mdp, &v0, m, config.num_iters, config.lambda_rel)?
        }
        Algorithm::RelativeVi => {
            relative_value_iteration(&ctx.mdp, &v0, rel, config.num_iters)?
        }
        Algorithm::AndersonRelativeVi => {
            anderson_relative_vi(&ctx.mdp, &v0, rel, m, config.num_iters, config.lambda_rel)?
        }
    };

    let mut records = Vec::with_capacity(trace.iterates.len());
    for (iteration, v_k) in trace.iterates.iter().enumerate() {
        let norm_error = if algorithm.is_relative() {
            normalized_error(&ctx.v_star_shifted, v_k)?
        } else {
            normalized_error(&ctx.v_star, v_k)?
        };
        let greedy_error = ctx.greedy_error(v_k)?;
        records.push(ExperimentRecord {
            mdp_seed: seed,
            algorithm,
            m,
            iteration,
            norm_error,
            greedy_error,
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    NormError,
    GreedyError,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::NormError => "norm_error",
            Metric::GreedyError => "greedy_error",
        }
    }
}

/// Per-(algorithm, m, iteration, metric) cohort mean and population
/// standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub algorithm: Algorithm,
    pub m: usize,
    pub iteration: usize,
    pub metric: Metric,
    pub mean: f64,
    pub std: f64,
}

/// Per-group samples during aggregation: (mdp_seed, norm_error, greedy_error).
type GroupSamples = Vec<(u64, f64, f64)>;

/// Aggregate the cohort. Summation runs in ascending mdp_seed order; the
/// standard deviation is the population form (divide by N).
pub fn aggregate(records: &[ExperimentRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(Algorithm, usize, usize), GroupSamples> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.algorithm, r.m, r.iteration))
            .or_default()
            .push((r.mdp_seed, r.norm_error, r.greedy_error));
    }
    let mut rows = Vec::with_capacity(groups.len() * 2);
    for ((algorithm, m, iteration), mut values) in groups {
        values.sort_by_key(|&(seed, _, _)| seed);
        for metric in [Metric::NormError, Metric::GreedyError] {
            let xs: Vec<f64> = values
                .iter()
                .map(|&(_, norm, greedy)| match metric {
                    Metric::NormError => norm,
                    Metric::GreedyError => greedy,
                })
                .collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            rows.push(AggregateRow {
                algorithm,
                m,
                iteration,
                metric,
                mean,
                std: var.sqrt(),
            });
        }
    }
    rows
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// 17 significant digits; enough to round-trip any f64 exactly.
pub(crate) fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Raw per-record CSV: mdp_seed,algorithm,m,iteration,norm_error,greedy_error.
pub fn emit_records_csv(records: &[ExperimentRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "mdp_seed,algorithm,m,iteration,norm_error,greedy_error")
        .map_err(io_err(path))?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.mdp_seed,
            r.algorithm.label(),
            r.m,
            r.iteration,
            fmt_float(r.norm_error),
            fmt_float(r.greedy_error)
        )
        .map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Aggregate CSV: algorithm,m,iteration,metric,mean,std.
pub fn emit_aggregates_csv(rows: &[AggregateRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "algorithm,m,iteration,metric,mean,std").map_err(io_err(path))?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.algorithm.label(),
            r.m,
            r.iteration,
            r.metric.label(),
            fmt_float(r.mean),
            fmt_float(r.std)
        )
        .map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}
