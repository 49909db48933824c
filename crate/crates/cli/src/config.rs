//! Flat `key = value` run configuration.

use std::collections::HashSet;
use std::path::PathBuf;

use rqnbm_core::solver::{SolverConfig, UpdateMode};

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    MaxQ { n: usize },
    Obb { d: usize, k: usize, points: Option<PathBuf> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { problem: ProblemSpec::MaxQ { n: 10 }, seed: 0, solver: SolverConfig::default() }
    }
}

pub fn parse_mode(s: &str) -> Result<UpdateMode, CliError> {
    match s {
        "rqnbm" | "full" => Ok(UpdateMode::Full),
        "rqnbm-no" | "identity" => Ok(UpdateMode::Identity),
        _ => Err(CliError::Usage(format!("unknown mode {s:?} (expected rqnbm or rqnbm-no)"))),
    }
}

pub fn mode_name(m: UpdateMode) -> &'static str {
    match m {
        UpdateMode::Full => "rqnbm",
        UpdateMode::Identity => "rqnbm-no",
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Usage(format!("invalid value {v:?} for {key}")))
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unknown or repeated
    /// keys are rejected.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut problem = "maxq".to_string();
        let (mut n, mut d, mut k, mut points) = (10, 3, 1000, None);
        let mut seen = HashSet::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(a, b)| (a.trim(), b.trim()))
                .ok_or_else(|| CliError::Usage(format!("line {}: expected key = value", no + 1)))?;
            if !seen.insert(key.to_string()) {
                return Err(CliError::Usage(format!("line {}: duplicate key {key}", no + 1)));
            }
            let s = &mut cfg.solver;
            match key {
                "problem" => problem = value.to_string(),
                "n" => n = num(key, value)?,
                "d" => d = num(key, value)?,
                "K" => k = num(key, value)?,
                "points" => points = Some(PathBuf::from(value)),
                "seed" => cfg.seed = num(key, value)?,
                "eps" => s.eps = num(key, value)?,
                "max_iter" => s.max_iter = num(key, value)?,
                "mode" => s.mode = parse_mode(value)?,
                "diagnostic" => s.diagnostic = num(key, value)?,
                "rho" => s.rho = num(key, value)?,
                "Gamma" | "correction_limit" => s.correction_limit = num(key, value)?,
                "t_min" => s.t_min = num(key, value)?,
                "t_max" => s.t_max = num(key, value)?,
                "mu0" => s.mu0 = num(key, value)?,
                "D" | "length_bound" => s.length_bound = num(key, value)?,
                "theta_a" => s.ls.theta_a = num(key, value)?,
                "theta_l" => s.ls.theta_l = num(key, value)?,
                "theta_r" => s.ls.theta_r = num(key, value)?,
                "theta_t" => s.ls.theta_t = num(key, value)?,
                "gamma" => s.ls.gamma = num(key, value)?,
                "kappa" => s.ls.kappa = num(key, value)?,
                "nu" => s.ls.nu = num(key, value)?,
                "max_inner" => s.ls.max_inner = num(key, value)?,
                _ => return Err(CliError::Usage(format!("line {}: unknown key {key}", no + 1))),
            }
        }
        cfg.problem = match problem.as_str() {
            "maxq" => ProblemSpec::MaxQ { n },
            "obb" => ProblemSpec::Obb { d, k, points },
            other => return Err(CliError::Usage(format!("unknown problem {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match &self.problem {
            ProblemSpec::MaxQ { n } if *n == 0 => return Err(CliError::Usage("n must be positive".into())),
            ProblemSpec::Obb { d, k, points: None } if *d < 2 || *k < 2 => {
                return Err(CliError::Usage("obb needs d >= 2 and K >= 2".into()))
            }
            _ => {}
        }
        self.solver.validate().map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_when_empty() {
        assert_eq!(RunConfig::parse("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn parses_obb_and_overrides() {
        let cfg = RunConfig::parse("problem = obb\nd = 4 # dims\nK=50\nseed = 3\neps = 1e-6\nmode = rqnbm-no\nD = 2\n")
            .unwrap();
        assert_eq!(cfg.problem, ProblemSpec::Obb { d: 4, k: 50, points: None });
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.solver.eps, 1e-6);
        assert_eq!(cfg.solver.mode, UpdateMode::Identity);
        assert_eq!(cfg.solver.length_bound, 2.0);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in ["foo = 1", "eps", "eps = x", "rho = 2", "problem = lasso", "eps = 1\neps = 2", "mode = fast"] {
            assert!(matches!(RunConfig::parse(bad), Err(CliError::Usage(_))), "{bad}");
        }
    }
}
