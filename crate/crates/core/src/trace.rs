//! Per-iteration telemetry, its CSV form, and offline replay of the solver
//! invariants from a recorded trace.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linesearch::StepKind;

/// Columns every trace starts with; extra replay columns follow.
pub const TRACE_HEADER: [&str; 14] =
    ["k", "step", "f", "w", "tL", "tR", "alpha", "lam1", "lam2", "lam3", "update", "corrected", "scaled", "qp_value"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateKind {
    Sr1,
    Bfgs,
    None,
}

/// One outer iteration. Quantities indexed `k` are taken at the start of the
/// iteration; `f_next` is the objective at the next center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub step: StepKind,
    pub f: f64,
    pub w: f64,
    #[serde(rename = "tL")]
    pub t_l: f64,
    #[serde(rename = "tR")]
    pub t_r: f64,
    /// Locality measure of the new subgradient.
    pub alpha: f64,
    pub lam1: Option<f64>,
    pub lam2: Option<f64>,
    pub lam3: Option<f64>,
    pub update: UpdateKind,
    pub corrected: bool,
    pub scaled: bool,
    pub qp_value: Option<f64>,
    pub f_next: f64,
    pub d_norm: f64,
    /// `‖g̃_k‖²`.
    pub g_norm_sq: f64,
    /// `⟨g̃_k, H_k g̃_k⟩`.
    pub quad: f64,
    pub alpha_tilde: f64,
    /// `‖Ȟ_{k+1} g̃_{k+1}‖` after scaling; absent when the operator is fixed.
    pub hg_norm: Option<f64>,
    /// Cumulative oracle calls after this iteration.
    pub n_f: usize,
    pub wall_time: f64,
}

impl IterationRecord {
    pub fn lambda(&self) -> Option<[f64; 3]> {
        Some([self.lam1?, self.lam2?, self.lam3?])
    }

    /// Same record with timing zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        IterationRecord { wall_time: 0.0, ..self.clone() }
    }
}

pub fn write_trace<W: Write>(out: W, records: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        // serde only emits the header alongside the first record
        let mut header: Vec<&str> = TRACE_HEADER.to_vec();
        header.extend(["f_next", "d_norm", "g_norm_sq", "quad", "alpha_tilde", "hg_norm", "n_f", "wall_time"]);
        w.write_record(&header).map_err(|e| Error::Parse(e.to_string()))?;
    }
    for r in records {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<IterationRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let leading: Vec<&str> = headers.iter().take(TRACE_HEADER.len()).collect();
    if leading != TRACE_HEADER {
        return Err(Error::Parse(format!("unexpected trace header: {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    rdr.deserialize().enumerate().map(|(i, r)| r.map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))).collect()
}

/// Parameters the replay needs from the run configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplayParams {
    pub theta_l: f64,
    pub rho: f64,
    pub mu0: f64,
    pub length_bound: f64,
    pub gamma: f64,
    pub nu: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub violations: usize,
    /// Iteration index of the first violation.
    pub first_violation: Option<usize>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

type Check = (&'static str, fn(&IterationRecord, &ReplayParams) -> bool);

const CHECKS: [Check; 8] = [
    ("serious-step descent", |r, p| match r.step {
        StepKind::Serious => r.f_next <= r.f - p.theta_l * r.t_l * r.w,
        StepKind::Null => r.f_next == r.f,
    }),
    ("w identity", |r, _| (r.w - (r.quad + 2.0 * r.alpha_tilde)).abs() <= 1e-9 * r.w.abs().max(1.0)),
    ("w lower bound", |r, p| r.w >= p.rho * r.g_norm_sq - 1e-9),
    ("qp bound", |r, _| match r.step {
        StepKind::Null => r.qp_value.is_some_and(|q| q <= r.w + 1e-10),
        StepKind::Serious => true,
    }),
    ("step-length cap", |r, p| r.t_r * r.d_norm <= p.mu0),
    ("scaling bound", |r, p| r.hg_norm.is_none_or(|h| h <= p.length_bound + 1e-12)),
    ("locality lower bound", |r, p| match r.step {
        StepKind::Null => r.alpha >= p.gamma * (r.t_r * r.d_norm).powf(p.nu),
        StepKind::Serious => r.alpha == 0.0,
    }),
    ("simplex weights", |r, _| match (r.step, r.lambda()) {
        (StepKind::Null, Some(l)) => l.iter().all(|v| *v >= 0.0) && (l.iter().sum::<f64>() - 1.0).abs() <= 1e-10,
        (StepKind::Null, None) => false,
        (StepKind::Serious, _) => true,
    }),
];

/// Re-evaluates each invariant on every record.
pub fn check_trace(records: &[IterationRecord], params: &ReplayParams) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|(name, check)| {
            let failing: Vec<usize> = records.iter().filter(|r| !check(r, params)).map(|r| r.k).collect();
            CheckOutcome { name, violations: failing.len(), first_violation: failing.first().copied() }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ReplayParams {
        ReplayParams { theta_l: 0.01, rho: 0.1, mu0: 0.18, length_bound: 1.0, gamma: 0.15, nu: 2.0 }
    }

    fn serious() -> IterationRecord {
        IterationRecord {
            k: 1,
            step: StepKind::Serious,
            f: 1.0,
            w: 4.0,
            t_l: 0.09,
            t_r: 0.09,
            alpha: 0.0,
            lam1: None,
            lam2: None,
            lam3: None,
            update: UpdateKind::None,
            corrected: false,
            scaled: true,
            qp_value: None,
            f_next: 0.6724,
            d_norm: 2.0,
            g_norm_sq: 4.0,
            quad: 4.0,
            alpha_tilde: 0.0,
            hg_norm: Some(1.0),
            n_f: 2,
            wall_time: 1e-5,
        }
    }

    #[test]
    fn clean_record_passes() {
        assert!(check_trace(&[serious()], &params()).iter().all(|c| c.passed()));
    }

    #[test]
    fn corrupted_descent_fails() {
        let bad = IterationRecord { f_next: 1.5, ..serious() };
        let out = check_trace(&[bad], &params());
        let descent = out.iter().find(|c| c.name == "serious-step descent").unwrap();
        assert_eq!(descent.violations, 1);
        assert_eq!(descent.first_violation, Some(1));
    }

    #[test]
    fn empty_trace_vacuous() {
        assert!(check_trace(&[], &params()).iter().all(|c| c.passed()));
        let mut buf = Vec::new();
        write_trace(&mut buf, &[]).unwrap();
        assert!(read_trace(buf.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![serious(), IterationRecord { k: 2, wall_time: 0.25, ..serious() }];
        let mut buf = Vec::new();
        write_trace(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k,step,f,w,tL,tR,alpha,lam1,lam2,lam3,update,corrected,scaled,qp_value,"));
        assert_eq!(read_trace(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn bad_header_rejected() {
        assert!(matches!(read_trace("a,b\n1,2\n".as_bytes()), Err(Error::Parse(_))));
    }
}
