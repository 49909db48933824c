//! Run reports and benchmark rows.

use serde::{Deserialize, Serialize};

use rqnbm_core::solver::{RunResult, Termination};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub problem: String,
    pub method: String,
    pub seed: u64,
    pub d: usize,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub f_opt: f64,
    pub n_f: usize,
    pub n_iter: usize,
    pub n_serious: usize,
    pub n_null: usize,
    pub t_total: f64,
    pub t_qp: f64,
    pub t_f: f64,
    pub w_final: f64,
    pub termination: Termination,
}

impl RunReport {
    pub fn new(problem: String, method: &str, seed: u64, d: usize, k: Option<usize>, r: &RunResult) -> Self {
        RunReport {
            problem,
            method: method.to_string(),
            seed,
            d,
            k,
            f_opt: r.f_opt,
            n_f: r.n_f,
            n_iter: r.n_iter,
            n_serious: r.n_serious,
            n_null: r.n_null,
            t_total: r.t_total,
            t_qp: r.t_qp,
            t_f: r.t_f,
            w_final: r.w_final,
            termination: r.termination,
        }
    }
}

/// One line of the benchmark CSV; `seed` is `mean` on summary rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub seed: String,
    pub method: String,
    pub f_opt: f64,
    pub n_f: f64,
    pub n_iter: f64,
    pub t_f: f64,
    pub t_qp: f64,
    pub t_total: f64,
    pub w_final: f64,
    pub termination: String,
    /// Whether both methods reached the same minimizer on this seed; on
    /// summary rows, the number of matched seeds averaged over.
    pub matched: String,
}
