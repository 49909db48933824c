//! Fixtures shared by the criterion benches.

use nalgebra::{Matrix3, Vector3};
use rqnbm_core::geometry::Point;
use rqnbm_core::problems::{random_orthogonal_start, Obb, ObbInstance};
use rqnbm_core::qp3::Qp3Input;

/// OBB instance with its seeded start.
pub fn obb_fixture(d: usize, k: usize, seed: u64) -> (Obb, Point) {
    let inst = ObbInstance::generate(d, k, seed).expect("valid benchmark size");
    (Obb::new(inst), random_orthogonal_start(d, seed ^ 0x9E37_79B9_7F4A_7C15))
}

/// Aggregation QPs with interior, edge and vertex minimizers.
pub fn qp_fixtures() -> Vec<Qp3Input> {
    let a = Matrix3::new(1.0, 0.2, -0.3, 0.0, 0.8, 0.1, 0.4, -0.5, 0.9);
    [Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.0, 0.3, 1.2), Vector3::new(0.0, 2.5, 3.0)]
        .into_iter()
        .map(|lin| Qp3Input::new(a.transpose() * a, lin).expect("PSD fixture"))
        .collect()
}
