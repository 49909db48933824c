use nalgebra::dvector;
use proptest::prelude::*;
use rqnbm_core::error::Result;
use rqnbm_core::geometry::{Manifold, Point, Tangent};
use rqnbm_core::linesearch::{line_search, EvalStats, LineSearchParams, SearchSpec, StepKind};
use rqnbm_core::problems::{Evaluation, Problem};

struct Abs;

impl Problem for Abs {
    fn manifold(&self) -> Manifold {
        Manifold::Euclidean(1)
    }
    fn evaluate(&self, x: &Point) -> Result<Evaluation> {
        let v = x.as_slice()[0];
        let g = if v >= 0.0 { 1.0 } else { -1.0 };
        Ok(Evaluation { value: v.abs(), subgradient: Tangent::new(x, dvector![g]), degenerate: false })
    }
    fn description(&self) -> String {
        "abs".into()
    }
}

/// Independent scalar transcription of the search on f = |x| in one dimension.
fn reference(x: f64, d: f64, w: f64, t_init: f64, p: &LineSearchParams) -> (StepKind, f64, f64, Vec<f64>) {
    let f = |v: f64| v.abs();
    let g = |v: f64| if v >= 0.0 { 1.0 } else { -1.0 };
    let (mut t_a, mut t_u, mut t) = (0.0, t_init, t_init);
    let mut ts = Vec::new();
    for _ in 0..p.max_inner {
        ts.push(t);
        let y = x + t * d;
        let delta = (f(x) - f(y) + t * g(y) * d).abs().max(p.gamma * (t * d.abs()).powf(p.nu));
        if f(y) <= f(x) - p.theta_t * t * w {
            t_a = t;
        } else {
            t_u = t;
        }
        if f(y) <= f(x) - p.theta_l * t * w && (t >= 2.22e-16 || delta > p.theta_a * w) {
            return (StepKind::Serious, t, 0.0, ts);
        }
        if -delta + g(y) * d >= -p.theta_r * w && (t - t_a) * d.abs() < 1.0 {
            return (StepKind::Null, t, delta, ts);
        }
        let width = t_u - t_a;
        let curv = (f(y) - f(x) + w * t) / (t * t);
        let cand = w / (2.0 * curv);
        t = if curv > 0.0 && cand.is_finite() {
            cand.clamp(t_a + p.kappa * width, t_u - p.kappa * width)
        } else {
            0.5 * (t_a + t_u)
        };
    }
    panic!("reference search stalled");
}

fn run(x0: f64, d0: f64, w: f64, t_init: f64) -> rqnbm_core::linesearch::LineSearchResult {
    let x = Point::from_vector(dvector![x0]);
    let d = Tangent::new(&x, dvector![d0]);
    let spec = SearchSpec { x: &x, f_x: x0.abs(), d: &d, w, t_init, t_min: 2.22e-16, length_bound: 1.0 };
    let mut stats = EvalStats::default();
    line_search(&Abs, &Manifold::Euclidean(1), &spec, &LineSearchParams::default(), &mut stats).unwrap()
}

#[test]
fn abs_from_one_matches_reference() {
    // g̃ = 1 and H = 2 give d = −2 and w = 2
    let p = LineSearchParams::default();
    let r = run(1.0, -2.0, 2.0, 0.09);
    let (kind, t, alpha, ts) = reference(1.0, -2.0, 2.0, 0.09, &p);
    assert_eq!(r.outcome, StepKind::Serious);
    assert_eq!(r.outcome, kind);
    assert_eq!(r.t_r, t);
    assert_eq!(r.alpha, alpha);
    assert_eq!(r.trials.iter().map(|tr| tr.t).collect::<Vec<_>>(), ts);
    assert!(r.f_y <= 1.0 - p.theta_l * r.t_l * 2.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn exit_conditions_and_bracket(x0 in -2.0f64..2.0, scale in 0.1f64..4.0, t_frac in 0.05f64..1.0) {
        prop_assume!(x0.abs() > 1e-3);
        let p = LineSearchParams::default();
        let g = x0.signum();
        let d0 = -scale * g;
        let w = scale;
        let t_init = t_frac * (0.18 / d0.abs()).min(1.0);
        let r = run(x0, d0, w, t_init);

        let (kind, t, alpha, ts) = reference(x0, d0, w, t_init, &p);
        prop_assert_eq!(r.outcome, kind);
        prop_assert_eq!(r.t_r, t);
        prop_assert_eq!(r.alpha, alpha);
        prop_assert_eq!(r.trials.iter().map(|tr| tr.t).collect::<Vec<_>>(), ts);

        let fx = x0.abs();
        let d_norm = d0.abs();
        prop_assert!(r.delta >= p.gamma * (r.t_r * d_norm).powf(p.nu));
        match r.outcome {
            StepKind::Serious => {
                prop_assert!(r.t_l == r.t_r && r.t_l > 0.0 && r.alpha == 0.0);
                prop_assert!(r.f_y <= fx - p.theta_l * r.t_l * w);
            }
            StepKind::Null => {
                prop_assert!(r.t_l == 0.0 && r.t_r > 0.0 && r.alpha == r.delta);
                let slope = r.g_pulled.coords()[0] * d0;
                prop_assert!(-r.delta + slope >= -p.theta_r * w);
            }
        }

        let mut prev = (0.0, t_init);
        for tr in &r.trials {
            prop_assert!(tr.t_a >= prev.0 && tr.t_u <= prev.1);
            prop_assert!(tr.t_a <= tr.t && tr.t <= tr.t_u);
            prev = (tr.t_a, tr.t_u);
        }
        for pair in r.trials.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let before = a.t_u - a.t_a;
            // bracket before the next trial is [a.t_a, a.t_u]; the following trial sits inside its safeguard
            prop_assert!(b.t >= a.t_a + p.kappa * before - 1e-15 && b.t <= a.t_u - p.kappa * before + 1e-15);
            prop_assert!(b.t_u - b.t_a <= (1.0 - p.kappa) * before + 1e-15);
        }
    }
}
