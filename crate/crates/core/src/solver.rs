//! The restricted-memory Riemannian quasi-Newton bundle method.
//!
//! Every iteration takes the direction `d = −H g̃`, runs the nonsmooth line
//! search, and then either
//! - (null step) keeps the center, aggregates the basic subgradient, the
//!   pulled-back trial subgradient and the current aggregate through a
//!   three-variable QP, and optionally applies an SR1 update; or
//! - (serious step) moves the center, resets the aggregate, transports `H`
//!   and optionally applies a BFGS update.
//!
//! The operator is then scaled so that `‖H g̃‖ ≤ D` and corrected with `ρ I`
//! whenever the predicted decrease `w` would fall below `ρ‖g̃‖²` (or, once
//! `Γ` corrections have happened, after every quasi-Newton update).

use std::time::Instant;

use nalgebra::{DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Manifold, Point, Tangent};
use crate::linesearch::{line_search, EvalStats, LineSearchParams, LineSearchResult, SearchSpec, StepKind};
use crate::operator::{QuasiNewtonVectors, SpdOperator, SR1_MIN_DENOMINATOR};
use crate::problems::Problem;
use crate::qp3::{solve_simplex_qp, Qp3Input};
use crate::trace::{IterationRecord, ReplayParams, UpdateKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateMode {
    /// SR1/BFGS updates with scaling and correction.
    Full,
    /// `H ≡ id` throughout (the no-update baseline).
    Identity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Correction parameter, in `(0, 1)`.
    pub rho: f64,
    /// Number of corrections after which every quasi-Newton update is corrected.
    pub correction_limit: usize,
    pub t_min: f64,
    pub t_max: f64,
    /// Bound on the trial step length, below the injectivity radius.
    pub mu0: f64,
    /// Length control `D`: bound on `‖H g̃‖` and on null-step brackets.
    pub length_bound: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub ls: LineSearchParams,
    /// Enables eigenvalue checks, secant residuals and the aggregation ledger.
    pub diagnostic: bool,
    pub mode: UpdateMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho: 0.1,
            correction_limit: 100,
            t_min: 2.22e-16,
            t_max: 1.0,
            mu0: 0.18,
            length_bound: 1.0,
            eps: 1e-5,
            max_iter: 20_000,
            ls: LineSearchParams::default(),
            diagnostic: false,
            mode: UpdateMode::Full,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if self.correction_limit < 1 {
            return bad("correction_limit must be at least 1");
        }
        if !(self.t_min > 0.0 && self.t_min < 1.0) {
            return bad("t_min must lie in (0, 1)");
        }
        if !(self.t_max >= 1.0) || !self.t_max.is_finite() {
            return bad("t_max must be at least 1");
        }
        if !(self.mu0 > 0.0) || !self.mu0.is_finite() {
            return bad("mu0 must be positive");
        }
        if !(self.length_bound > 0.0) || !self.length_bound.is_finite() {
            return bad("length_bound must be positive");
        }
        if !(self.eps >= 0.0) {
            return bad("eps must be nonnegative");
        }
        self.ls.validate()
    }

    pub fn replay_params(&self) -> ReplayParams {
        ReplayParams {
            theta_l: self.ls.theta_l,
            rho: self.rho,
            mu0: self.mu0,
            length_bound: self.length_bound,
            gamma: self.ls.gamma,
            nu: self.ls.nu,
        }
    }
}

/// State carried between iterations.
#[derive(Clone, Debug)]
pub struct BundleState {
    /// Stability center.
    pub x: Point,
    pub f_x: f64,
    /// Aggregate subgradient at `x`.
    pub g_tilde: Tangent,
    pub alpha_tilde: f64,
    pub w: f64,
    /// Subgradient at the center, from the iteration that created it.
    pub g_m: Tangent,
    pub h: SpdOperator,
    pub i_c: bool,
    pub i_u: bool,
    pub n_c: usize,
    pub k: usize,
    pub m: usize,
    last_null: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIter,
    Stalled,
}

/// Worst-case invariant residuals; populated in diagnostic mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    /// Smallest eigenvalue seen over every `H_k` and `Ȟ_{k+1}`.
    pub min_eigenvalue: f64,
    pub max_sr1_secant: f64,
    pub max_bfgs_secant: f64,
    /// `max(trace(Ȟ) − trace(H̃))` over SR1 updates.
    pub max_sr1_trace_increase: f64,
    /// `max(w̌ − (⟨g̃⁺, H̃ g̃⁺⟩ + 2α̃⁺))` over SR1 updates.
    pub max_sr1_w_excess: f64,
    pub max_ledger_g_residual: f64,
    pub max_ledger_alpha_residual: f64,
    pub sr1_updates: usize,
    pub bfgs_updates: usize,
    pub corrections: usize,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Diagnostics {
            min_eigenvalue: f64::INFINITY,
            max_sr1_secant: 0.0,
            max_bfgs_secant: 0.0,
            max_sr1_trace_increase: f64::NEG_INFINITY,
            max_sr1_w_excess: f64::NEG_INFINITY,
            max_ledger_g_residual: 0.0,
            max_ledger_alpha_residual: 0.0,
            sr1_updates: 0,
            bfgs_updates: 0,
            corrections: 0,
        }
    }
}

/// Explicit convex-combination weights behind `(g̃, α̃)` since the last
/// serious step.
#[derive(Clone, Debug)]
struct AggregationLedger {
    entries: Vec<(Tangent, f64)>,
    weights: Vec<f64>,
}

impl AggregationLedger {
    fn reset(g: &Tangent) -> Self {
        AggregationLedger { entries: vec![(g.clone(), 0.0)], weights: vec![1.0] }
    }

    fn aggregate(&mut self, lambda: [f64; 3], pulled: &Tangent, alpha: f64) {
        for w in &mut self.weights {
            *w *= lambda[2];
        }
        self.weights[0] += lambda[0];
        self.entries.push((pulled.clone(), alpha));
        self.weights.push(lambda[1]);
    }

    fn residuals(&self, g_tilde: &Tangent, alpha_tilde: f64) -> Result<(f64, f64)> {
        let terms: Vec<(f64, &Tangent)> = self.weights.iter().zip(&self.entries).map(|(w, (g, _))| (*w, g)).collect();
        let g = Tangent::combine(&terms)?;
        let a: f64 = self.weights.iter().zip(&self.entries).map(|(w, (_, a))| w * a).sum();
        Ok((g.sub(g_tilde)?.norm(), (a - alpha_tilde).abs()))
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub x: Point,
    pub f_opt: f64,
    pub w_final: f64,
    pub termination: Termination,
    pub trace: Vec<IterationRecord>,
    pub n_f: usize,
    pub n_iter: usize,
    pub n_serious: usize,
    pub n_null: usize,
    pub t_total: f64,
    pub t_qp: f64,
    pub t_f: f64,
    pub diagnostics: Diagnostics,
}

pub struct Solver<'a, P: Problem + ?Sized> {
    prob: &'a P,
    manifold: Manifold,
    cfg: SolverConfig,
    state: BundleState,
    stats: EvalStats,
    t_qp: f64,
    diagnostics: Diagnostics,
    ledger: Option<AggregationLedger>,
}

impl<'a, P: Problem + ?Sized> Solver<'a, P> {
    /// Evaluates the oracle at `x1` and sets `g̃₁ = g₁`, `α̃₁ = 0`, `H₁ = id`,
    /// `w₁ = ⟨g̃₁, H₁ g̃₁⟩`.
    pub fn new(prob: &'a P, x1: Point, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let manifold = prob.manifold();
        manifold.check_point(&x1)?;
        let mut stats = EvalStats::default();
        let ev = stats.evaluate(prob, &x1)?;
        let h = SpdOperator::identity(&x1, manifold.dim());
        let w = h.quad_form(&ev.subgradient, &ev.subgradient)?;
        let ledger = cfg.diagnostic.then(|| AggregationLedger::reset(&ev.subgradient));
        let state = BundleState {
            f_x: ev.value,
            g_tilde: ev.subgradient.clone(),
            alpha_tilde: 0.0,
            w,
            g_m: ev.subgradient,
            h,
            i_c: false,
            i_u: false,
            n_c: 0,
            k: 1,
            m: 1,
            last_null: false,
            x: x1,
        };
        Ok(Solver { prob, manifold, cfg, state, stats, t_qp: 0.0, diagnostics: Diagnostics::default(), ledger })
    }

    pub fn state(&self) -> &BundleState {
        &self.state
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn stats(&self) -> EvalStats {
        self.stats
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn is_converged(&self) -> bool {
        self.state.w <= self.cfg.eps
    }

    fn search(&mut self, d: &Tangent, t_init: f64) -> Result<LineSearchResult> {
        let spec = SearchSpec {
            x: &self.state.x,
            f_x: self.state.f_x,
            d,
            w: self.state.w,
            t_init,
            t_min: self.cfg.t_min,
            length_bound: self.cfg.length_bound,
        };
        line_search(self.prob, &self.manifold, &spec, &self.cfg.ls, &mut self.stats)
    }

    /// One outer iteration. Requires `w > eps`.
    pub fn step(&mut self) -> Result<IterationRecord> {
        if self.is_converged() {
            return Err(Error::Precondition("w is already below the stopping tolerance".into()));
        }
        let started = Instant::now();
        let cfg = self.cfg.clone();
        let full = cfg.mode == UpdateMode::Full;
        let n = self.manifold.dim();

        if cfg.diagnostic {
            self.track_eigenvalue(&self.state.h.clone());
        }
        let quad = self.state.h.quad_form(&self.state.g_tilde, &self.state.g_tilde)?;
        let d = self.state.h.apply(&self.state.g_tilde)?.scale(-1.0);
        let d_norm = d.norm();
        let mut t_init = if d_norm > 0.0 { (cfg.mu0 / d_norm).min(cfg.t_max) } else { cfg.t_max };
        while t_init * d_norm > cfg.mu0 {
            t_init = t_init.next_down();
        }

        let ls = match self.search(&d, t_init) {
            Err(Error::LineSearchStall { .. }) if self.state.last_null => self.search(&d, 0.5 * t_init)?,
            other => other?,
        };

        let st = &self.state;
        let transport = &ls.transport;
        let u = ls.g_y.sub(&transport.apply(&st.g_m)?)?;

        let mut lambda = None;
        let mut qp_value = None;
        let mut update = UpdateKind::None;
        let mut i_u = false;

        let (x_new, f_new, g_tilde_new, alpha_tilde_new, g_m_new, m_new, h_check) = match ls.outcome {
            StepKind::Serious => {
                let s = transport.apply(&d.scale(ls.t_r))?;
                let h_tilde = if full { st.h.transport(transport)? } else { SpdOperator::identity(&ls.y, n) };
                let mut h_check = h_tilde.clone();
                if full && u.dot(&s)? > cfg.rho {
                    h_check = h_tilde.bfgs_update(&s, &u, cfg.rho)?;
                    i_u = true;
                    update = UpdateKind::Bfgs;
                    if cfg.diagnostic {
                        let res = h_check.apply(&u)?.sub(&s)?.norm() / s.norm().max(1.0);
                        self.diagnostics.max_bfgs_secant = self.diagnostics.max_bfgs_secant.max(res);
                    }
                }
                (ls.y.clone(), ls.f_y, ls.g_y.clone(), 0.0, ls.g_y.clone(), st.k + 1, h_check)
            }
            StepKind::Null => {
                let u_tilde = transport.apply_inverse(&u)?;
                let s = d.scale(ls.t_r);
                let h = &st.h;
                let a = [&st.g_m, &ls.g_pulled, &st.g_tilde];
                let mut gram = Matrix3::zeros();
                for i in 0..3 {
                    for j in i..3 {
                        let q = h.quad_form(a[i], a[j])?;
                        gram[(i, j)] = q;
                        gram[(j, i)] = q;
                    }
                }
                let qp_start = Instant::now();
                let input = Qp3Input::aggregation(gram, ls.alpha, st.alpha_tilde)?;
                let sol = solve_simplex_qp(&input);
                self.t_qp += qp_start.elapsed().as_secs_f64();
                let l = sol.lambda;
                lambda = Some(l);
                qp_value = Some(sol.value);
                let g_tilde_new = Tangent::combine(&[(l[0], &st.g_m), (l[1], &ls.g_pulled), (l[2], &st.g_tilde)])?;
                let alpha_tilde_new = l[1] * ls.alpha + l[2] * st.alpha_tilde;

                let mut h_check = h.clone();
                if full {
                    let v = h.apply(&u_tilde)?.sub(&s)?;
                    if st.g_tilde.dot(&v)? < 0.0 {
                        let uv = u_tilde.dot(&v)?;
                        let safe = uv > SR1_MIN_DENOMINATOR;
                        let cond = safe
                            && cfg.rho * g_tilde_new.norm_squared() <= g_tilde_new.dot(&v)?.powi(2) / uv
                            && cfg.rho * n as f64 <= v.norm_squared() / uv;
                        if safe && (!st.i_c || cond) {
                            let qv = QuasiNewtonVectors { s: s.clone(), u: u_tilde.clone(), v };
                            h_check = h.sr1_update(&qv)?;
                            i_u = true;
                            update = UpdateKind::Sr1;
                            if cfg.diagnostic {
                                let res = h_check.apply(&u_tilde)?.sub(&s)?.norm() / s.norm().max(1.0);
                                let dg = &mut self.diagnostics;
                                dg.max_sr1_secant = dg.max_sr1_secant.max(res);
                                dg.max_sr1_trace_increase = dg.max_sr1_trace_increase.max(h_check.trace() - h.trace());
                            }
                        }
                    }
                }
                (st.x.clone(), st.f_x, g_tilde_new, alpha_tilde_new, st.g_m.clone(), st.m, h_check)
            }
        };

        let h_tilde_for_sr1 = (update == UpdateKind::Sr1).then(|| self.state.h.clone());
        let gn2 = g_tilde_new.norm_squared();
        let mut corrected = false;
        let mut scaled = false;
        let mut hg_norm = None;
        let (h_new, w_new) = if full {
            let (h_check, did_scale) = h_check.scale_to_bound(&g_tilde_new, cfg.length_bound)?;
            scaled = did_scale;
            hg_norm = Some(h_check.apply(&g_tilde_new)?.norm());
            if cfg.diagnostic {
                self.track_eigenvalue(&h_check);
            }
            let w_check = h_check.quad_form(&g_tilde_new, &g_tilde_new)? + 2.0 * alpha_tilde_new;
            if let Some(h_tilde) = h_tilde_for_sr1.filter(|_| cfg.diagnostic) {
                let bound = h_tilde.quad_form(&g_tilde_new, &g_tilde_new)? + 2.0 * alpha_tilde_new;
                let dg = &mut self.diagnostics;
                dg.max_sr1_w_excess = dg.max_sr1_w_excess.max(w_check - bound);
            }
            if w_check < cfg.rho * gn2 || (self.state.i_c && i_u) {
                corrected = true;
                (h_check.correct(cfg.rho), w_check + cfg.rho * gn2)
            } else {
                (h_check, w_check)
            }
        } else {
            let h = SpdOperator::identity(&x_new, n);
            let w = h.quad_form(&g_tilde_new, &g_tilde_new)? + 2.0 * alpha_tilde_new;
            (h, w)
        };

        if cfg.diagnostic {
            let ledger = self.ledger.get_or_insert_with(|| AggregationLedger::reset(&self.state.g_m));
            match (ls.outcome, lambda) {
                (StepKind::Null, Some(l)) => ledger.aggregate(l, &ls.g_pulled, ls.alpha),
                _ => *ledger = AggregationLedger::reset(&g_tilde_new),
            }
            let (rg, ra) = ledger.residuals(&g_tilde_new, alpha_tilde_new)?;
            let dg = &mut self.diagnostics;
            dg.max_ledger_g_residual = dg.max_ledger_g_residual.max(rg);
            dg.max_ledger_alpha_residual = dg.max_ledger_alpha_residual.max(ra);
            match update {
                UpdateKind::Sr1 => dg.sr1_updates += 1,
                UpdateKind::Bfgs => dg.bfgs_updates += 1,
                UpdateKind::None => {}
            }
        }
        if corrected {
            self.diagnostics.corrections += 1;
        }

        let st = &self.state;
        let record = IterationRecord {
            k: st.k,
            step: ls.outcome,
            f: st.f_x,
            w: st.w,
            t_l: ls.t_l,
            t_r: ls.t_r,
            alpha: ls.alpha,
            lam1: lambda.map(|l| l[0]),
            lam2: lambda.map(|l| l[1]),
            lam3: lambda.map(|l| l[2]),
            update,
            corrected,
            scaled,
            qp_value,
            f_next: f_new,
            d_norm,
            g_norm_sq: st.g_tilde.norm_squared(),
            quad,
            alpha_tilde: st.alpha_tilde,
            hg_norm,
            n_f: self.stats.n_f,
            wall_time: 0.0,
        };

        let n_c = st.n_c + usize::from(corrected);
        self.state = BundleState {
            x: x_new,
            f_x: f_new,
            g_tilde: g_tilde_new,
            alpha_tilde: alpha_tilde_new,
            w: w_new,
            g_m: g_m_new,
            h: h_new,
            i_c: st.i_c || n_c >= cfg.correction_limit,
            i_u,
            n_c,
            k: st.k + 1,
            m: m_new,
            last_null: ls.outcome == StepKind::Null,
        };
        Ok(IterationRecord { wall_time: started.elapsed().as_secs_f64(), ..record })
    }

    fn track_eigenvalue(&mut self, h: &SpdOperator) {
        let e = h.min_eigenvalue();
        self.diagnostics.min_eigenvalue = self.diagnostics.min_eigenvalue.min(e);
    }

    /// Iterates until `w ≤ eps`, the iteration cap, or a line-search stall.
    pub fn run(mut self) -> Result<RunResult> {
        let started = Instant::now();
        let mut trace = Vec::new();
        let termination = loop {
            if self.is_converged() {
                break Termination::Converged;
            }
            if trace.len() >= self.cfg.max_iter {
                break Termination::MaxIter;
            }
            match self.step() {
                Ok(rec) => trace.push(rec),
                Err(Error::LineSearchStall { .. }) => break Termination::Stalled,
                Err(e) => return Err(e),
            }
        };
        let n_serious = trace.iter().filter(|r| r.step == StepKind::Serious).count();
        Ok(RunResult {
            f_opt: self.state.f_x,
            w_final: self.state.w,
            termination,
            n_f: self.stats.n_f,
            n_iter: trace.len(),
            n_serious,
            n_null: trace.len() - n_serious,
            t_total: started.elapsed().as_secs_f64(),
            t_qp: self.t_qp,
            t_f: self.stats.t_f,
            diagnostics: self.diagnostics,
            x: self.state.x,
            trace,
        })
    }
}

/// Convenience wrapper: build a solver at `x1` and run it.
pub fn run<P: Problem + ?Sized>(prob: &P, x1: Point, cfg: SolverConfig) -> Result<RunResult> {
    Solver::new(prob, x1, cfg)?.run()
}

/// Euclidean starting point helper.
pub fn euclidean_point(v: &[f64]) -> Point {
    Point::from_vector(DVector::from_column_slice(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::MaxQ;

    #[test]
    fn init_quadratic() {
        // max of a single square is ‖x‖² in one dimension; use n = 2 with x = (1, 0)
        let prob = MaxQ::new(2);
        let s = Solver::new(&prob, euclidean_point(&[1.0, 0.0]), SolverConfig::default()).unwrap();
        assert_eq!(s.state().g_tilde.coords().as_slice(), &[2.0, 0.0]);
        assert_eq!(s.state().w, 4.0);
        assert_eq!(s.state().alpha_tilde, 0.0);
        assert_eq!((s.state().i_c, s.state().i_u, s.state().n_c, s.state().m), (false, false, 0, 1));
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let prob = MaxQ::new(3);
        let r = run(&prob, euclidean_point(&[0.0, 0.0, 0.0]), SolverConfig::default()).unwrap();
        assert_eq!(r.termination, Termination::Converged);
        assert_eq!(r.n_iter, 0);
        assert_eq!(r.n_f, 1);
    }

    #[test]
    fn first_quadratic_step() {
        let prob = MaxQ::new(2);
        let mut s = Solver::new(&prob, euclidean_point(&[1.0, 0.0]), SolverConfig::default()).unwrap();
        let rec = s.step().unwrap();
        assert_eq!(rec.step, StepKind::Serious);
        assert_eq!(rec.d_norm, 2.0);
        // t_I = min(1, μ0/2)
        assert!((rec.t_l - 0.09).abs() < 1e-15);
        assert!(rec.f_next < rec.f);
        assert!((s.state().x.as_slice()[0] - 0.82).abs() < 1e-12);
    }

    #[test]
    fn step_refuses_when_converged() {
        let prob = MaxQ::new(2);
        let cfg = SolverConfig { eps: 1e300, ..Default::default() };
        let mut s = Solver::new(&prob, euclidean_point(&[1.0, 1.0]), cfg).unwrap();
        assert!(s.step().is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        let prob = MaxQ::new(2);
        let cfg = SolverConfig { rho: 1.0, ..Default::default() };
        assert!(matches!(Solver::new(&prob, euclidean_point(&[1.0, 1.0]), cfg), Err(Error::InvalidConfig(_))));
    }
}
