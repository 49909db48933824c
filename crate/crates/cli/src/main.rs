use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rqnbm_cli::config::{parse_mode, ProblemSpec, RunConfig};
use rqnbm_cli::{exit, CliError};

#[derive(Parser)]
#[command(name = "rqnbm", version, about = "Riemannian quasi-Newton bundle method")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solve and print a JSON report.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Per-iteration trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Oriented bounding box benchmark of both methods over several seeds.
    ObbBench {
        #[command(flatten)]
        run: RunArgs,
        /// Seed list such as `0-9` or `1,3,5`.
        #[arg(long, default_value = "0-9")]
        seeds: String,
        /// Point cloud CSV (`d,K` header) used for every seed.
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run both methods from the same start and compare minimizers.
    Compare {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Replay solver invariants from a trace CSV.
    TraceCheck {
        trace: PathBuf,
        /// Config supplying the parameters the trace was produced with.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// `maxq` or `obb`.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// `rqnbm` or `rqnbm-no`.
    #[arg(long)]
    mode: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        match self.problem.as_deref() {
            None => {}
            Some("maxq") if !matches!(cfg.problem, ProblemSpec::MaxQ { .. }) => {
                cfg.problem = ProblemSpec::MaxQ { n: 10 }
            }
            Some("obb") if !matches!(cfg.problem, ProblemSpec::Obb { .. }) => {
                cfg.problem = ProblemSpec::Obb { d: 3, k: 1000, points: None }
            }
            Some("maxq" | "obb") => {}
            Some(other) => return Err(CliError::Usage(format!("unknown problem {other:?}"))),
        }
        match &mut cfg.problem {
            ProblemSpec::MaxQ { n } => {
                if let Some(v) = self.n.or(self.d) {
                    *n = v;
                }
            }
            ProblemSpec::Obb { d, k, .. } => {
                if let Some(v) = self.d {
                    *d = v;
                }
                if let Some(v) = self.k {
                    *k = v;
                }
            }
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.eps {
            cfg.solver.eps = e;
        }
        if let Some(m) = self.max_iter {
            cfg.solver.max_iter = m;
        }
        if let Some(m) = &self.mode {
            cfg.solver.mode = parse_mode(m)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}

fn json(v: &impl serde::Serialize) -> Result<String, CliError> {
    serde_json::to_string(v).map_err(|e| CliError::Io(e.to_string()))
}

fn execute(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Solve { run, trace } => {
            let cfg = run.resolve()?;
            let (report, _) = rqnbm_cli::cmd_solve(&cfg, trace.as_deref())?;
            emit(run.out.as_deref(), &(json(&report)? + "\n"))?;
            Ok(rqnbm_cli::termination_code(report.termination))
        }
        Command::ObbBench { run, seeds, points, jobs } => {
            let mut cfg = run.resolve()?;
            let seeds = rqnbm_cli::parse_seeds(&seeds)?;
            match (&mut cfg.problem, points) {
                (ProblemSpec::Obb { points: p, .. }, Some(path)) => *p = Some(path),
                (ProblemSpec::Obb { .. }, None) => {}
                (ProblemSpec::MaxQ { .. }, points) => {
                    let (d, k) = (run.d.unwrap_or(3), run.k.unwrap_or(1000));
                    cfg.problem = ProblemSpec::Obb { d, k, points };
                    cfg.validate()?;
                }
            }
            let outcome = rqnbm_cli::cmd_obb_bench(&cfg, &seeds, jobs)?;
            let mut buf = Vec::new();
            outcome.write_csv(&mut buf)?;
            emit(run.out.as_deref(), &String::from_utf8_lossy(&buf))?;
            eprintln!("{} of {} seeds matched", outcome.n_matched(), seeds.len());
            Ok(if outcome.n_matched() > 0 { exit::CONVERGED } else { exit::FAILED })
        }
        Command::Compare { run } => {
            let cfg = run.resolve()?;
            let c = rqnbm_cli::cmd_compare(&cfg)?;
            emit(run.out.as_deref(), &format!("{}\n{}\n", json(&c.full)?, json(&c.identity)?))?;
            eprintln!(
                "distance between minimizers {:.3e}: {}",
                c.distance,
                if c.matched() { "same minimum" } else { "different minima" }
            );
            Ok(if c.matched() { exit::CONVERGED } else { exit::FAILED })
        }
        Command::TraceCheck { trace, config } => {
            let cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            let (checks, n) = rqnbm_cli::cmd_trace_check(&trace, &cfg.solver.replay_params())?;
            if n == 0 {
                eprintln!("warning: trace has no iterations; all checks pass vacuously");
            }
            print!("{}", rqnbm_cli::format_checks(&checks));
            Ok(if checks.iter().all(|c| c.passed()) { exit::CONVERGED } else { exit::FAILED })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
