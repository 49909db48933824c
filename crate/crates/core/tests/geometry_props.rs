use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rqnbm_core::geometry::{Manifold, Point, Tangent};

const MANIFOLDS: [Manifold; 3] = [Manifold::Euclidean(10), Manifold::Sphere(10), Manifold::OrthogonalGroup(5)];

fn sample(m: Manifold, seed: u64, len: f64) -> (Point, Tangent, Tangent, Tangent) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = m.random_point(&mut rng);
    let dir = m.random_tangent(&x, len, &mut rng);
    let u = m.random_tangent(&x, 1.0, &mut rng);
    let v = m.random_tangent(&x, 2.0, &mut rng);
    (x, dir, u, v)
}

fn ambient_dist(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn isometry_locking_round_trip(seed in any::<u64>(), len in 1e-3f64..0.1, which in 0usize..3) {
        let m = MANIFOLDS[which];
        let (x, dir, u, v) = sample(m, seed, len);
        let t = m.transport(&x, &dir).unwrap();
        prop_assert!(t.beta() > 0.0);
        if let Manifold::Sphere(_) = m {
            prop_assert_eq!(t.beta(), 1.0);
        }

        let (tu, tv) = (t.apply(&u).unwrap(), t.apply(&v).unwrap());
        prop_assert!((tu.dot(&tv).unwrap() - u.dot(&v).unwrap()).abs() <= 1e-10);
        let n = m.dim();
        prop_assert!((t.matrix().tr_mul(t.matrix()) - DMatrix::<f64>::identity(n, n)).norm() <= 1e-10);

        let locked = t.apply(&dir).unwrap();
        let dr = m.diff_retract(&x, &dir).unwrap();
        prop_assert!(locked.sub(&dr.scale(t.beta())).unwrap().norm() <= 1e-6 * dir.norm().max(1.0));

        let back = t.apply_inverse(&tu).unwrap();
        prop_assert!(back.sub(&u).unwrap().norm() <= 1e-10);

        let y = m.retract(&x, &dir).unwrap();
        prop_assert_eq!(&y, t.target());
        let eta = m.inv_retract(&x, &y).unwrap();
        prop_assert!(eta.sub(&dir).unwrap().norm() <= 1e-8);
    }

    #[test]
    fn first_order_condition(seed in any::<u64>(), which in 0usize..3) {
        let m = MANIFOLDS[which];
        let (x, xi, _, _) = sample(m, seed, 1.0);
        let amb = m.to_ambient(&x, &xi).unwrap();
        for t in [1e-3, 1e-4] {
            let y = m.retract(&x, &xi.scale(t)).unwrap();
            let fd = (y.ambient() - x.ambient()) / t;
            prop_assert!(ambient_dist(&fd, &amb) <= 10.0 * t);
        }
    }

    #[test]
    fn points_stay_on_manifold(seed in any::<u64>(), len in 0.0f64..0.18, which in 0usize..3) {
        let m = MANIFOLDS[which];
        let (x, dir, _, _) = sample(m, seed, len);
        let y = m.retract(&x, &dir).unwrap();
        prop_assert!(m.check_point(&y).is_ok());
    }

    #[test]
    fn small_steps_have_unit_speed(seed in any::<u64>(), which in 0usize..3) {
        let m = MANIFOLDS[which];
        let (x, xi, _, _) = sample(m, seed, 1e-4);
        let dr = m.diff_retract(&x, &xi).unwrap();
        prop_assert!((dr.norm() / xi.norm() - 1.0).abs() <= 1e-3);
    }
}

#[test]
fn zero_step_is_bitwise_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for m in MANIFOLDS {
        let x = m.random_point(&mut rng);
        let y = m.retract(&x, &m.zero(&x)).unwrap();
        assert_eq!(y.ambient(), x.ambient());
        let t = m.transport(&x, &m.zero(&x)).unwrap();
        assert_eq!(t.beta(), 1.0);
        assert_eq!(t.matrix(), &DMatrix::identity(m.dim(), m.dim()));
        assert!(m.inv_retract(&x, &x).unwrap().is_zero());
    }
}

#[test]
fn sphere_quarter_turn_velocity() {
    let m = Manifold::Sphere(3);
    let x = Point::from_vector(nalgebra::dvector![1.0, 0.0, 0.0]);
    let amb = DMatrix::from_column_slice(3, 1, &[0.0, std::f64::consts::FRAC_PI_2, 0.0]);
    let xi = m.from_ambient(&x, &amb).unwrap();
    let y = m.retract(&x, &xi).unwrap();
    assert!((y.as_slice()[1] - 1.0).abs() < 1e-15);
    let dr = m.diff_retract(&x, &xi).unwrap();
    assert!((dr.norm() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    let vel = m.to_ambient(&y, &dr).unwrap();
    assert!((vel[(0, 0)] + std::f64::consts::FRAC_PI_2).abs() < 1e-12);
}
