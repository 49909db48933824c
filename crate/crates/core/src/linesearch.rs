//! Nonsmooth line search along the retraction curve `t ↦ R_x(t d)`.
//!
//! Each trial either moves the lower end of the bracket (sufficient decrease
//! with `θ_T`) or the upper end. The search returns as soon as the trial
//! gives a serious step (decrease with `θ_L`, step not too short) or a null
//! step (the pulled-back subgradient is a good enough cutting plane).

use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::{Manifold, Point, Tangent, TransportMap};
use crate::problems::Problem;

#[derive(Clone, Debug, PartialEq)]
pub struct LineSearchParams {
    pub theta_a: f64,
    pub theta_l: f64,
    pub theta_r: f64,
    pub theta_t: f64,
    /// Weight of the distance term in the locality measure.
    pub gamma: f64,
    /// Safeguard: next trial lies in `[t_A + κΔ, t_U − κΔ]`.
    pub kappa: f64,
    /// Exponent of the distance term in the locality measure.
    pub nu: f64,
    pub max_inner: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        LineSearchParams {
            theta_a: 0.01,
            theta_l: 0.01,
            theta_r: 0.45,
            theta_t: 0.02,
            gamma: 0.15,
            kappa: 0.25,
            nu: 2.0,
            max_inner: 60,
        }
    }
}

impl LineSearchParams {
    pub fn validate(&self) -> Result<()> {
        let p = self;
        let positive = [p.theta_a, p.theta_l, p.theta_r, p.theta_t, p.gamma];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig("line search thetas and gamma must be positive".into()));
        }
        if !(p.theta_t + p.theta_a < p.theta_r && p.theta_r < 0.5) {
            return Err(Error::InvalidConfig("need theta_t + theta_a < theta_r < 1/2".into()));
        }
        if !(p.theta_l < p.theta_t) {
            return Err(Error::InvalidConfig("need theta_l < theta_t".into()));
        }
        if !(p.kappa > 0.0 && p.kappa < 0.5) {
            return Err(Error::InvalidConfig("kappa must lie in (0, 1/2)".into()));
        }
        if !(p.nu >= 1.0) || !p.nu.is_finite() {
            return Err(Error::InvalidConfig("nu must be at least 1".into()));
        }
        if p.max_inner == 0 {
            return Err(Error::InvalidConfig("max_inner must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Serious,
    Null,
}

/// One inner trial, for bracket diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trial {
    pub t: f64,
    /// Bracket after processing this trial.
    pub t_a: f64,
    pub t_u: f64,
}

#[derive(Clone, Debug)]
pub struct LineSearchResult {
    pub t_l: f64,
    pub t_r: f64,
    pub delta: f64,
    /// Locality measure of the trial subgradient: `0` for serious steps, `δ` for null steps.
    pub alpha: f64,
    pub y: Point,
    pub f_y: f64,
    /// Subgradient at `y`, anchored at `y`.
    pub g_y: Tangent,
    /// `T̂_{x←y} g_y`, anchored at `x`.
    pub g_pulled: Tangent,
    /// Transport along `t_R d`.
    pub transport: TransportMap,
    pub outcome: StepKind,
    pub trials: Vec<Trial>,
}

/// Oracle call counter and timer shared across one run.
#[derive(Clone, Copy, Debug, Default)]
pub struct EvalStats {
    pub n_f: usize,
    pub t_f: f64,
}

impl EvalStats {
    pub fn evaluate<P: Problem + ?Sized>(&mut self, prob: &P, x: &Point) -> Result<crate::problems::Evaluation> {
        let start = Instant::now();
        let ev = prob.evaluate(x);
        self.t_f += start.elapsed().as_secs_f64();
        self.n_f += 1;
        let ev = ev?;
        if !ev.value.is_finite() || !ev.subgradient.is_finite() {
            return Err(Error::Oracle("non-finite value or subgradient".into()));
        }
        Ok(ev)
    }
}

/// Inputs that stay fixed across the trials of one search.
#[derive(Clone, Copy, Debug)]
pub struct SearchSpec<'a> {
    pub x: &'a Point,
    pub f_x: f64,
    pub d: &'a Tangent,
    /// Desired decrease `w_k > 0`.
    pub w: f64,
    pub t_init: f64,
    pub t_min: f64,
    /// Length control: null steps need `(t − t_A)‖d‖ < D`.
    pub length_bound: f64,
}

pub fn line_search<P: Problem + ?Sized>(
    prob: &P,
    manifold: &Manifold,
    spec: &SearchSpec<'_>,
    params: &LineSearchParams,
    stats: &mut EvalStats,
) -> Result<LineSearchResult> {
    let SearchSpec { x, f_x, d, w, t_init, t_min, length_bound } = *spec;
    if !(w > 0.0) {
        return Err(Error::Precondition(format!("line search needs w > 0, got {w:e}")));
    }
    if !(t_init > 0.0) || !t_init.is_finite() {
        return Err(Error::Precondition(format!("initial step {t_init:e} must be positive and finite")));
    }
    let d_norm = d.norm();
    let mut t_a = 0.0;
    let mut t_u = t_init;
    let mut t = t_init;
    let mut trials = Vec::new();

    for _ in 0..params.max_inner {
        let step = d.scale(t);
        let transport = manifold.transport(x, &step)?;
        let y = transport.target().clone();
        let ev = stats.evaluate(prob, &y)?;
        let f_y = ev.value;
        let g_pulled = transport.apply_hat(&ev.subgradient)?;
        let slope = g_pulled.dot(d)?;
        let delta = (f_x - f_y + t * slope).abs().max(params.gamma * (t * d_norm).powf(params.nu));

        if f_y <= f_x - params.theta_t * t * w {
            t_a = t;
        } else {
            t_u = t;
        }
        trials.push(Trial { t, t_a, t_u });

        if f_y <= f_x - params.theta_l * t * w && (t >= t_min || delta > params.theta_a * w) {
            return Ok(LineSearchResult {
                t_l: t,
                t_r: t,
                delta,
                alpha: 0.0,
                y,
                f_y,
                g_y: ev.subgradient,
                g_pulled,
                transport,
                outcome: StepKind::Serious,
                trials,
            });
        }
        if -delta + slope >= -params.theta_r * w && (t - t_a) * d_norm < length_bound {
            return Ok(LineSearchResult {
                t_l: 0.0,
                t_r: t,
                delta,
                alpha: delta,
                y,
                f_y,
                g_y: ev.subgradient,
                g_pulled,
                transport,
                outcome: StepKind::Null,
                trials,
            });
        }
        t = next_trial(f_x, w, t, f_y, t_a, t_u, params.kappa);
    }
    Err(Error::LineSearchStall { t_a, t_u, iterations: params.max_inner })
}

/// Minimizer of the quadratic through `(0, f_x)` with slope `−w` and `(t, f_t)`,
/// clipped into the safeguarded bracket; midpoint when undefined.
fn next_trial(f_x: f64, w: f64, t: f64, f_t: f64, t_a: f64, t_u: f64, kappa: f64) -> f64 {
    let width = t_u - t_a;
    let lo = t_a + kappa * width;
    let hi = t_u - kappa * width;
    let curv = (f_t - f_x + w * t) / (t * t);
    let cand = w / (2.0 * curv);
    if curv > 0.0 && cand.is_finite() {
        cand.clamp(lo, hi)
    } else {
        0.5 * (t_a + t_u)
    }
}
