//! Exact solver for `min λᵀGλ + linᵀλ` over the unit 2-simplex.
//!
//! `G` is positive semidefinite, so the objective is convex and the best of
//! the seven face-restricted stationary points (interior, three edges, three
//! vertices) is a global minimizer.

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3, Vector4};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Qp3Input {
    gram: Matrix3<f64>,
    lin: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Qp3Solution {
    pub lambda: [f64; 3],
    pub value: f64,
}

impl Qp3Input {
    /// Validates `gram` (symmetric, PSD up to round-off) and `lin ≥ 0`.
    pub fn new(gram: Matrix3<f64>, lin: Vector3<f64>) -> Result<Self> {
        if gram.iter().chain(lin.iter()).any(|v| !v.is_finite()) {
            return Err(Error::QpInput("non-finite entry".into()));
        }
        let scale = gram.amax().max(1.0);
        let asym = (gram - gram.transpose()).norm();
        if asym > 1e-10 * scale {
            return Err(Error::QpInput(format!("gram matrix asymmetric by {asym:e}")));
        }
        let gram = (gram + gram.transpose()) * 0.5;
        let min_eig = SymmetricEigen::new(gram).eigenvalues.min();
        if min_eig < -1e-9 * scale {
            return Err(Error::QpInput(format!("gram matrix indefinite (λ_min = {min_eig:e})")));
        }
        if lin.iter().any(|v| *v < 0.0) {
            return Err(Error::QpInput("linear term must be nonnegative".into()));
        }
        Ok(Qp3Input { gram, lin })
    }

    /// The aggregation subproblem: `lin = (0, 2α_new, 2α̃)`.
    pub fn aggregation(gram: Matrix3<f64>, alpha_new: f64, alpha_tilde: f64) -> Result<Self> {
        Self::new(gram, Vector3::new(0.0, 2.0 * alpha_new, 2.0 * alpha_tilde))
    }

    pub fn gram(&self) -> &Matrix3<f64> {
        &self.gram
    }

    pub fn lin(&self) -> &Vector3<f64> {
        &self.lin
    }

    /// `φ(λ) = λᵀGλ + linᵀλ`.
    pub fn objective(&self, lambda: &[f64; 3]) -> f64 {
        let l = Vector3::from_column_slice(lambda);
        l.dot(&(self.gram * l)) + self.lin.dot(&l)
    }
}

const EDGES: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// Global minimizer over the simplex. Ties go to the larger support, then to
/// the earlier face in the order interior, edges (01, 02, 12), vertices.
pub fn solve_simplex_qp(input: &Qp3Input) -> Qp3Solution {
    let g = &input.gram;
    let lin = &input.lin;
    let mut candidates: Vec<[f64; 3]> = Vec::with_capacity(7);

    if let Some(l) = interior(g, lin) {
        candidates.push(l);
    }
    for &(i, j) in &EDGES {
        // λ_i = τ, λ_j = 1 − τ
        let curv = 2.0 * (g[(i, i)] + g[(j, j)] - 2.0 * g[(i, j)]);
        let rhs = 2.0 * (g[(j, j)] - g[(i, j)]) - lin[i] + lin[j];
        if curv > 1e-14 * g.amax().max(1.0) {
            let tau = rhs / curv;
            if tau > 0.0 && tau < 1.0 {
                let mut l = [0.0; 3];
                l[i] = tau;
                l[j] = 1.0 - tau;
                candidates.push(l);
            }
        }
    }
    for i in 0..3 {
        let mut l = [0.0; 3];
        l[i] = 1.0;
        candidates.push(l);
    }

    let mut best = candidates[0];
    let mut best_val = input.objective(&best);
    for l in candidates.into_iter().skip(1) {
        let v = input.objective(&l);
        if v < best_val - 1e-14 * best_val.abs().max(1.0) {
            best = l;
            best_val = v;
        }
    }
    Qp3Solution { lambda: best, value: best_val }
}

fn interior(g: &Matrix3<f64>, lin: &Vector3<f64>) -> Option<[f64; 3]> {
    // [2G 1; 1ᵀ 0] [λ; −μ] = [−lin; 1]
    let mut k = Matrix4::zeros();
    for i in 0..3 {
        for j in 0..3 {
            k[(i, j)] = 2.0 * g[(i, j)];
        }
        k[(i, 3)] = 1.0;
        k[(3, i)] = 1.0;
    }
    let rhs = Vector4::new(-lin[0], -lin[1], -lin[2], 1.0);
    let lu = k.lu();
    let sol = lu.solve(&rhs)?;
    // reject nearly singular systems whose solution is noise
    let resid = (k * sol - rhs).norm();
    if !sol.iter().all(|v| v.is_finite()) || resid > 1e-10 * (1.0 + sol.norm()) {
        return None;
    }
    let l = [sol[0], sol[1], sol[2]];
    if l.iter().all(|v| *v > 0.0) {
        let s: f64 = l.iter().sum();
        Some([l[0] / s, l[1] / s, l[2] / s])
    } else {
        None
    }
}
