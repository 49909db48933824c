//! Command-line harness around `rqnbm-core`: single solves, the oriented
//! bounding box benchmark, method comparison and trace replay.

pub mod config;
pub mod report;

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use rqnbm_core::geometry::Point;
use rqnbm_core::problems::{random_orthogonal_start, MaxQ, Obb, ObbInstance, Problem};
use rqnbm_core::solver::{run, RunResult, SolverConfig, Termination, UpdateMode};
use rqnbm_core::trace::{check_trace, read_trace, write_trace, CheckOutcome, IterationRecord, ReplayParams};

pub use config::{ProblemSpec, RunConfig};
pub use report::{BenchRow, RunReport};

/// Minimizers closer than this (Frobenius norm) count as the same solution.
pub const MATCH_TOLERANCE: f64 = 1e-3;

/// XORed into the run seed to seed the starting point, so the start is
/// independent of the generated instance.
pub const START_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

pub mod exit {
    pub const CONVERGED: i32 = 0;
    pub const FAILED: i32 = 1;
    pub const MAX_ITER: i32 = 2;
    pub const STALLED: i32 = 3;
    pub const USAGE: i32 = 64;
    pub const MALFORMED_TRACE: i32 = 65;
    pub const IO: i32 = 66;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
    #[error("{0}")]
    Io(String),
    #[error("solver: {0}")]
    Solver(#[from] rqnbm_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::MalformedTrace(_) => exit::MALFORMED_TRACE,
            CliError::Io(_) | CliError::Solver(_) => exit::IO,
        }
    }
}

pub fn termination_code(t: Termination) -> i32 {
    match t {
        Termination::Converged => exit::CONVERGED,
        Termination::MaxIter => exit::MAX_ITER,
        Termination::Stalled => exit::STALLED,
    }
}

pub fn start_seed(seed: u64) -> u64 {
    seed ^ START_SALT
}

/// A concrete problem with its starting point.
pub struct Instance {
    pub problem: Box<dyn Problem + Send>,
    pub start: Point,
    pub d: usize,
    pub k: Option<usize>,
}

impl Instance {
    pub fn build(spec: &ProblemSpec, seed: u64) -> Result<Self, CliError> {
        match spec {
            ProblemSpec::MaxQ { n } => {
                let p = MaxQ::new(*n);
                Ok(Instance { start: p.start(), problem: Box::new(p), d: *n, k: None })
            }
            ProblemSpec::Obb { d, k, points } => {
                let inst = match points {
                    Some(path) => {
                        let f = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                        ObbInstance::from_csv(BufReader::new(f))
                            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?
                    }
                    None => ObbInstance::generate(*d, *k, seed)?,
                };
                let (d, k) = (inst.d(), inst.k());
                Ok(Instance {
                    problem: Box::new(Obb::new(inst)),
                    start: random_orthogonal_start(d, start_seed(seed)),
                    d,
                    k: Some(k),
                })
            }
        }
    }

    pub fn solve(&self, cfg: SolverConfig) -> Result<RunResult, CliError> {
        Ok(run(self.problem.as_ref(), self.start.clone(), cfg)?)
    }

    pub fn report(&self, seed: u64, r: &RunResult, mode: UpdateMode) -> RunReport {
        RunReport::new(self.problem.description(), config::mode_name(mode), seed, self.d, self.k, r)
    }
}

pub fn save_trace(path: &Path, records: &[IterationRecord]) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    write_trace(f, records).map_err(|e| CliError::Io(e.to_string()))
}

/// Runs one solve, optionally writing the per-iteration trace.
pub fn cmd_solve(cfg: &RunConfig, trace: Option<&Path>) -> Result<(RunReport, RunResult), CliError> {
    let inst = Instance::build(&cfg.problem, cfg.seed)?;
    let result = inst.solve(cfg.solver.clone())?;
    if let Some(path) = trace {
        save_trace(path, &result.trace)?;
    }
    Ok((inst.report(cfg.seed, &result, cfg.solver.mode), result))
}

/// Both methods from the same start on one instance.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub seed: u64,
    pub full: RunReport,
    pub identity: RunReport,
    pub full_result: RunResult,
    pub identity_result: RunResult,
    pub distance: f64,
}

impl Comparison {
    pub fn matched(&self) -> bool {
        self.distance <= MATCH_TOLERANCE
    }
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<Comparison, CliError> {
    let inst = Instance::build(&cfg.problem, cfg.seed)?;
    let full_cfg = SolverConfig { mode: UpdateMode::Full, ..cfg.solver.clone() };
    let id_cfg = SolverConfig { mode: UpdateMode::Identity, ..cfg.solver.clone() };
    let full_result = inst.solve(full_cfg)?;
    let identity_result = inst.solve(id_cfg)?;
    let distance = (full_result.x.ambient() - identity_result.x.ambient()).norm();
    Ok(Comparison {
        seed: cfg.seed,
        full: inst.report(cfg.seed, &full_result, UpdateMode::Full),
        identity: inst.report(cfg.seed, &identity_result, UpdateMode::Identity),
        full_result,
        identity_result,
        distance,
    })
}

#[derive(Clone, Debug)]
pub struct BenchOutcome {
    pub runs: Vec<Comparison>,
}

impl BenchOutcome {
    pub fn matched(&self) -> impl Iterator<Item = &Comparison> {
        self.runs.iter().filter(|c| c.matched())
    }

    pub fn n_matched(&self) -> usize {
        self.matched().count()
    }

    /// Mean of `field` over matched seeds for the chosen method.
    pub fn matched_mean(&self, mode: UpdateMode, field: impl Fn(&RunReport) -> f64) -> f64 {
        let vals: Vec<f64> = self
            .matched()
            .map(|c| match mode {
                UpdateMode::Full => field(&c.full),
                UpdateMode::Identity => field(&c.identity),
            })
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    pub fn rows(&self) -> Vec<BenchRow> {
        let row = |seed: String, r: &RunReport, matched: String| BenchRow {
            seed,
            method: r.method.clone(),
            f_opt: r.f_opt,
            n_f: r.n_f as f64,
            n_iter: r.n_iter as f64,
            t_f: r.t_f,
            t_qp: r.t_qp,
            t_total: r.t_total,
            w_final: r.w_final,
            termination: format!("{:?}", r.termination).to_lowercase(),
            matched,
        };
        let mut rows = Vec::new();
        for c in &self.runs {
            rows.push(row(c.seed.to_string(), &c.full, c.matched().to_string()));
            rows.push(row(c.seed.to_string(), &c.identity, c.matched().to_string()));
        }
        for mode in [UpdateMode::Full, UpdateMode::Identity] {
            rows.push(BenchRow {
                seed: "mean".into(),
                method: config::mode_name(mode).into(),
                f_opt: self.matched_mean(mode, |r| r.f_opt),
                n_f: self.matched_mean(mode, |r| r.n_f as f64),
                n_iter: self.matched_mean(mode, |r| r.n_iter as f64),
                t_f: self.matched_mean(mode, |r| r.t_f),
                t_qp: self.matched_mean(mode, |r| r.t_qp),
                t_total: self.matched_mean(mode, |r| r.t_total),
                w_final: self.matched_mean(mode, |r| r.w_final),
                termination: String::new(),
                matched: self.n_matched().to_string(),
            });
        }
        rows
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        for r in self.rows() {
            w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Io(e.to_string()))
    }
}

/// Runs both methods for every seed, in a pool of `jobs` workers.
pub fn cmd_obb_bench(base: &RunConfig, seeds: &[u64], jobs: usize) -> Result<BenchOutcome, CliError> {
    if seeds.is_empty() {
        return Err(CliError::Usage("no seeds given".into()));
    }
    if !matches!(base.problem, ProblemSpec::Obb { .. }) {
        return Err(CliError::Usage("obb-bench needs problem = obb".into()));
    }
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| CliError::Io(e.to_string()))?;
    let runs = pool.install(|| {
        seeds.par_iter().map(|&seed| cmd_compare(&RunConfig { seed, ..base.clone() })).collect::<Result<Vec<_>, _>>()
    })?;
    Ok(BenchOutcome { runs })
}

/// Parses seed lists such as `0-9` or `1,4,7-8`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("invalid seed list {s:?}"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no seeds given".into()));
    }
    Ok(out)
}

pub fn load_trace(path: &Path) -> Result<Vec<IterationRecord>, CliError> {
    let f = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    read_trace(BufReader::new(f)).map_err(|e| CliError::MalformedTrace(e.to_string()))
}

pub fn cmd_trace_check(path: &Path, params: &ReplayParams) -> Result<(Vec<CheckOutcome>, usize), CliError> {
    let records = load_trace(path)?;
    Ok((check_trace(&records, params), records.len()))
}

pub fn format_checks(checks: &[CheckOutcome]) -> String {
    let mut s = String::new();
    for c in checks {
        let status = if c.passed() {
            "PASS".to_string()
        } else {
            format!("FAIL ({} violations, first at k = {})", c.violations, c.first_violation.unwrap_or(0))
        };
        s.push_str(&format!("{:<22} {status}\n", c.name));
    }
    s
}
