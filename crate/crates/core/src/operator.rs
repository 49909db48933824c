//! The symmetric positive definite operator `H_k` acting on a tangent space,
//! and its quasi-Newton updates.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::{Point, Tangent, TransportMap};

/// SR1 updates with `⟨ũ, v⟩` at or below this value are skipped.
pub const SR1_MIN_DENOMINATOR: f64 = 1e-14;

/// Dense symmetric operator on `T_x M`, in intrinsic coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdOperator {
    mat: DMatrix<f64>,
    anchor: u64,
}

/// Vectors feeding the SR1 update, all anchored at the new center.
#[derive(Clone, Debug)]
pub struct QuasiNewtonVectors {
    pub s: Tangent,
    pub u: Tangent,
    pub v: Tangent,
}

impl SpdOperator {
    pub fn identity(anchor: &Point, n: usize) -> Self {
        SpdOperator { mat: DMatrix::identity(n, n), anchor: anchor.id() }
    }

    /// Wraps a matrix; it must be square and symmetric to `1e-10` (Frobenius).
    pub fn from_matrix(anchor: &Point, mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch { expected: mat.nrows(), got: mat.ncols() });
        }
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("operator"));
        }
        if (&mat - mat.transpose()).norm() > 1e-10 {
            return Err(Error::Precondition("operator matrix is not symmetric".into()));
        }
        Ok(SpdOperator { mat, anchor: anchor.id() })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn anchor_id(&self) -> u64 {
        self.anchor
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    /// Smallest eigenvalue (diagnostics only).
    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.mat.clone()).eigenvalues.min()
    }

    fn check(&self, g: &Tangent) -> Result<()> {
        if g.anchor_id() != self.anchor {
            return Err(Error::AnchorMismatch);
        }
        if g.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: g.dim() });
        }
        Ok(())
    }

    /// `H g`.
    pub fn apply(&self, g: &Tangent) -> Result<Tangent> {
        self.check(g)?;
        Ok(Tangent::with_anchor_id(self.anchor, &self.mat * g.coords()))
    }

    /// `⟨a, H b⟩`.
    pub fn quad_form(&self, a: &Tangent, b: &Tangent) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        // symmetrised so that swapping a and b is bit-exact up to the final sum
        let hb = &self.mat * b.coords();
        let ha = &self.mat * a.coords();
        Ok(0.5 * (a.coords().dot(&hb) + b.coords().dot(&ha)))
    }

    /// Riemannian SR1: `H − v vᵀ / ⟨ũ, v⟩`.
    pub fn sr1_update(&self, qv: &QuasiNewtonVectors) -> Result<SpdOperator> {
        self.check(&qv.s)?;
        self.check(&qv.u)?;
        self.check(&qv.v)?;
        let denom = qv.u.dot(&qv.v)?;
        if !(denom > 0.0) {
            return Err(Error::Precondition(format!("SR1 denominator ⟨ũ, v⟩ = {denom:e} is not positive")));
        }
        let v = qv.v.coords();
        let mut mat = &self.mat - v * v.transpose() / denom;
        symmetrize(&mut mat);
        Ok(SpdOperator { mat, anchor: self.anchor })
    }

    /// Riemannian inverse BFGS:
    /// `H − s(Hu)ᵀ/⟨u,s⟩ − (Hu)sᵀ/⟨u,s⟩ + a ssᵀ/⟨u,s⟩²`, `a = ⟨u,Hu⟩ + ⟨u,s⟩`.
    pub fn bfgs_update(&self, s: &Tangent, u: &Tangent, rho: f64) -> Result<SpdOperator> {
        self.check(s)?;
        self.check(u)?;
        let us = u.dot(s)?;
        if !(us > rho) {
            return Err(Error::Precondition(format!("BFGS curvature ⟨u, s⟩ = {us:e} does not exceed {rho:e}")));
        }
        let sc = s.coords();
        let hu = &self.mat * u.coords();
        let a = u.coords().dot(&hu) + us;
        let mut mat =
            &self.mat - (sc * hu.transpose() + &hu * sc.transpose()) / us + sc * sc.transpose() * (a / (us * us));
        symmetrize(&mut mat);
        Ok(SpdOperator { mat, anchor: self.anchor })
    }

    /// `T ∘ H ∘ T⁻¹`, i.e. `M H Mᵀ` in coordinates.
    pub fn transport(&self, t: &TransportMap) -> Result<SpdOperator> {
        if t.source_id() != self.anchor {
            return Err(Error::AnchorMismatch);
        }
        let m = t.matrix();
        let mut mat = m * &self.mat * m.transpose();
        symmetrize(&mut mat);
        Ok(SpdOperator { mat, anchor: t.target().id() })
    }

    /// Scales `H` so that `‖H g‖ ≤ bound`; returns whether scaling happened.
    pub fn scale_to_bound(&self, g: &Tangent, bound: f64) -> Result<(SpdOperator, bool)> {
        if !(bound > 0.0) {
            return Err(Error::Precondition("length bound must be positive".into()));
        }
        let hg = self.apply(g)?.norm();
        if !hg.is_finite() {
            return Err(Error::NonFinite("H g"));
        }
        if hg > bound {
            let mat = &self.mat * (bound / hg);
            Ok((SpdOperator { mat, anchor: self.anchor }, true))
        } else {
            Ok((self.clone(), false))
        }
    }

    /// `H + ρ I`.
    pub fn correct(&self, rho: f64) -> SpdOperator {
        let mut mat = self.mat.clone();
        for i in 0..mat.nrows() {
            mat[(i, i)] += rho;
        }
        SpdOperator { mat, anchor: self.anchor }
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector, DVector};

    fn origin(n: usize) -> Point {
        Point::from_vector(DVector::zeros(n))
    }

    fn tv(x: &Point, v: DVector<f64>) -> Tangent {
        Tangent::new(x, v)
    }

    #[test]
    fn apply_identity_and_scaled() {
        let x = origin(3);
        let g = tv(&x, dvector![1.0, -2.0, 0.5]);
        assert_eq!(SpdOperator::identity(&x, 3).apply(&g).unwrap(), g);
        let h2 = SpdOperator::from_matrix(&x, DMatrix::identity(3, 3) * 2.0).unwrap();
        let e1 = tv(&x, dvector![1.0, 0.0, 0.0]);
        assert_eq!(h2.apply(&e1).unwrap().coords(), &dvector![2.0, 0.0, 0.0]);
    }

    #[test]
    fn quad_form_identity_is_dot() {
        let x = origin(2);
        let a = tv(&x, dvector![1.0, 2.0]);
        let b = tv(&x, dvector![3.0, -1.0]);
        assert_eq!(SpdOperator::identity(&x, 2).quad_form(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn sr1_hand_example() {
        let x = origin(2);
        let h = SpdOperator::identity(&x, 2);
        let u = tv(&x, dvector![1.0, 0.0]);
        let s = tv(&x, dvector![0.5, 0.0]);
        let v = h.apply(&u).unwrap().sub(&s).unwrap();
        assert_eq!(v.coords(), &dvector![0.5, 0.0]);
        let out = h.sr1_update(&QuasiNewtonVectors { s, u, v }).unwrap();
        assert!((out.matrix() - dmatrix![0.5, 0.0; 0.0, 1.0]).norm() < 1e-15);
    }

    #[test]
    fn sr1_rejects_nonpositive_denominator() {
        let x = origin(2);
        let h = SpdOperator::identity(&x, 2);
        let qv = QuasiNewtonVectors {
            s: tv(&x, dvector![2.0, 0.0]),
            u: tv(&x, dvector![1.0, 0.0]),
            v: tv(&x, dvector![-1.0, 0.0]),
        };
        assert!(matches!(h.sr1_update(&qv), Err(Error::Precondition(_))));
    }

    #[test]
    fn bfgs_hand_example() {
        let x = origin(2);
        let h = SpdOperator::identity(&x, 2);
        let u = tv(&x, dvector![1.0, 0.0]);
        let s = tv(&x, dvector![2.0, 0.0]);
        let out = h.bfgs_update(&s, &u, 0.1).unwrap();
        assert!((out.matrix() - dmatrix![2.0, 0.0; 0.0, 1.0]).norm() < 1e-15);
    }

    #[test]
    fn bfgs_with_s_equal_u_fixes_u() {
        let x = origin(3);
        let h = SpdOperator::identity(&x, 3);
        let u = tv(&x, dvector![0.3, -1.0, 2.0]);
        let out = h.bfgs_update(&u, &u, 0.1).unwrap();
        assert!((out.apply(&u).unwrap().coords() - u.coords()).norm() < 1e-14);
        assert!(matches!(h.bfgs_update(&u.scale(0.01), &u, 0.1), Err(Error::Precondition(_))));
    }

    #[test]
    fn scale_to_bound_cases() {
        let x = origin(2);
        let h = SpdOperator::identity(&x, 2);
        let g = tv(&x, dvector![6.0, 8.0]);
        let (scaled, did) = h.scale_to_bound(&g, 1.0).unwrap();
        assert!(did);
        assert!((scaled.matrix() - DMatrix::identity(2, 2) * 0.1).norm() < 1e-15);
        let (same, did) = h.scale_to_bound(&g, 10.0).unwrap();
        assert!(!did);
        assert_eq!(same, h);
    }

    #[test]
    fn correct_zero_matrix() {
        let x = origin(3);
        let z = SpdOperator::from_matrix(&x, DMatrix::zeros(3, 3)).unwrap();
        let c = z.correct(0.1);
        assert_eq!(c.matrix(), &(DMatrix::identity(3, 3) * 0.1));
        assert!((c.trace() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn anchor_mismatch() {
        let x = origin(2);
        let y = Point::from_vector(dvector![1.0, 0.0]);
        let h = SpdOperator::identity(&x, 2);
        assert_eq!(h.apply(&Tangent::zeros(&y, 2)), Err(Error::AnchorMismatch));
    }

    #[test]
    fn null_transport_is_noop() {
        let x = origin(3);
        let h = SpdOperator::from_matrix(&x, dmatrix![2.0, 0.5, 0.0; 0.5, 1.0, 0.1; 0.0, 0.1, 3.0]).unwrap();
        let t = TransportMap::identity(&x, 3);
        assert_eq!(h.transport(&t).unwrap(), h);
    }
}
