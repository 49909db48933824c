//! Manifolds, retractions and isometric vector transports.
//!
//! Tangent vectors are stored in intrinsic coordinates with respect to a
//! deterministic orthonormal basis of each tangent space, so the metric is
//! the Euclidean dot product of coordinate vectors and every transport is an
//! orthogonal coordinate matrix.
//!
//! Bases:
//! - `Euclidean(n)`: the standard basis.
//! - `Sphere(n)`: columns `1..n` of the Householder reflector that maps `e_0`
//!   onto `±x`.
//! - `OrthogonalGroup(d)`: `X (e_i e_jᵀ - e_j e_iᵀ) / √2` for `i < j`, in
//!   row-major pair order.

use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Step used by the central difference that differentiates the qf retraction.
pub const FD_STEP: f64 = 1e-6;

const SPHERE_TOL: f64 = 1e-12;
const ORTHO_TOL: f64 = 1e-10;
const INV_RETRACT_TOL: f64 = 1e-8;

/// A point on a manifold, stored in its ambient representation.
///
/// Vectors (Euclidean space, sphere) are `n × 1` matrices.
#[derive(Clone, Debug)]
pub struct Point {
    ambient: DMatrix<f64>,
    id: u64,
}

impl Point {
    pub fn new(ambient: DMatrix<f64>) -> Self {
        let id = fingerprint(&ambient);
        Point { ambient, id }
    }

    pub fn from_vector(v: DVector<f64>) -> Self {
        let n = v.len();
        Self::new(DMatrix::from_column_slice(n, 1, v.as_slice()))
    }

    pub fn ambient(&self) -> &DMatrix<f64> {
        &self.ambient
    }

    /// Ambient entries as a flat column-major slice.
    pub fn as_slice(&self) -> &[f64] {
        self.ambient.as_slice()
    }

    /// Identity used to pair tangent vectors with their base point.
    pub fn id(&self) -> u64 {
        self.id
    }
}

impl PartialEq for Point {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id && self.ambient == other.ambient
    }
}

fn fingerprint(m: &DMatrix<f64>) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    m.nrows().hash(&mut h);
    m.ncols().hash(&mut h);
    for v in m.iter() {
        // -0.0 and 0.0 denote the same point
        let v = if *v == 0.0 { 0.0 } else { *v };
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// A tangent vector in intrinsic coordinates, tagged with its base point.
#[derive(Clone, Debug, PartialEq)]
pub struct Tangent {
    coords: DVector<f64>,
    anchor: u64,
}

impl Tangent {
    pub fn new(anchor: &Point, coords: DVector<f64>) -> Self {
        Tangent { coords, anchor: anchor.id() }
    }

    pub(crate) fn with_anchor_id(anchor: u64, coords: DVector<f64>) -> Self {
        Tangent { coords, anchor }
    }

    pub fn zeros(anchor: &Point, n: usize) -> Self {
        Self::new(anchor, DVector::zeros(n))
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }

    pub fn anchor_id(&self) -> u64 {
        self.anchor
    }

    pub fn is_at(&self, x: &Point) -> bool {
        self.anchor == x.id()
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        self.coords.norm()
    }

    pub fn norm_squared(&self) -> f64 {
        self.coords.norm_squared()
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| *c == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }

    fn check_same(&self, other: &Tangent) -> Result<()> {
        if self.anchor != other.anchor {
            return Err(Error::AnchorMismatch);
        }
        if self.coords.len() != other.coords.len() {
            return Err(Error::DimensionMismatch { expected: self.coords.len(), got: other.coords.len() });
        }
        Ok(())
    }

    pub fn dot(&self, other: &Tangent) -> Result<f64> {
        self.check_same(other)?;
        Ok(self.coords.dot(&other.coords))
    }

    pub fn add(&self, other: &Tangent) -> Result<Tangent> {
        self.check_same(other)?;
        Ok(Tangent { coords: &self.coords + &other.coords, anchor: self.anchor })
    }

    pub fn sub(&self, other: &Tangent) -> Result<Tangent> {
        self.check_same(other)?;
        Ok(Tangent { coords: &self.coords - &other.coords, anchor: self.anchor })
    }

    pub fn scale(&self, a: f64) -> Tangent {
        Tangent { coords: &self.coords * a, anchor: self.anchor }
    }

    /// Linear combination `Σ wᵢ vᵢ` of vectors sharing one anchor.
    pub fn combine(terms: &[(f64, &Tangent)]) -> Result<Tangent> {
        let (_, first) = terms.first().ok_or_else(|| Error::Precondition("empty combination".into()))?;
        let mut acc = DVector::zeros(first.dim());
        for (w, v) in terms {
            first.check_same(v)?;
            acc.axpy(*w, &v.coords, 1.0);
        }
        Ok(Tangent { coords: acc, anchor: first.anchor })
    }
}

/// A vector transport `T_η : T_x M → T_{R_x(η)} M` in coordinates, together
/// with the locking factor `β_η = ‖η‖ / ‖DR_x(η)[η]‖`.
#[derive(Clone, Debug)]
pub struct TransportMap {
    matrix: DMatrix<f64>,
    beta: f64,
    source: u64,
    target: Point,
}

impl TransportMap {
    /// Identity transport on `T_x M`.
    pub fn identity(x: &Point, dim: usize) -> Self {
        TransportMap { matrix: DMatrix::identity(dim, dim), beta: 1.0, source: x.id(), target: x.clone() }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn source_id(&self) -> u64 {
        self.source
    }

    /// The point `R_x(η)` this map transports into.
    pub fn target(&self) -> &Point {
        &self.target
    }

    pub fn apply(&self, v: &Tangent) -> Result<Tangent> {
        if v.anchor != self.source {
            return Err(Error::AnchorMismatch);
        }
        Ok(Tangent { coords: &self.matrix * &v.coords, anchor: self.target.id() })
    }

    /// `T_η⁻¹`, the transpose of the coordinate matrix.
    pub fn apply_inverse(&self, v: &Tangent) -> Result<Tangent> {
        if v.anchor != self.target.id() {
            return Err(Error::AnchorMismatch);
        }
        Ok(Tangent { coords: self.matrix.tr_mul(&v.coords), anchor: self.source })
    }

    /// `T̂ = β⁻¹ T_η⁻¹`, used to pull trial-point subgradients back to the center.
    pub fn apply_hat(&self, v: &Tangent) -> Result<Tangent> {
        let mut out = self.apply_inverse(v)?;
        out.coords /= self.beta;
        Ok(out)
    }
}

/// The manifolds supported by the solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Manifold {
    /// `ℝⁿ`.
    Euclidean(usize),
    /// Unit sphere in `ℝⁿ`, with the exponential map and parallel translation.
    Sphere(usize),
    /// The `d × d` orthogonal group with the qf retraction.
    OrthogonalGroup(usize),
}

impl Manifold {
    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        match *self {
            Manifold::Euclidean(n) => n,
            Manifold::Sphere(n) => n.saturating_sub(1),
            Manifold::OrthogonalGroup(d) => d * d.saturating_sub(1) / 2,
        }
    }

    fn ambient_shape(&self) -> (usize, usize) {
        match *self {
            Manifold::Euclidean(n) | Manifold::Sphere(n) => (n, 1),
            Manifold::OrthogonalGroup(d) => (d, d),
        }
    }

    pub fn check_point(&self, x: &Point) -> Result<()> {
        let (r, c) = self.ambient_shape();
        let a = x.ambient();
        if a.nrows() != r || a.ncols() != c {
            return Err(Error::DimensionMismatch { expected: r * c, got: a.len() });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point"));
        }
        match *self {
            Manifold::Euclidean(_) => Ok(()),
            Manifold::Sphere(_) => {
                let dev = (a.norm() - 1.0).abs();
                if dev > SPHERE_TOL {
                    return Err(Error::NotOnManifold(format!("|‖x‖ - 1| = {dev:e}")));
                }
                Ok(())
            }
            Manifold::OrthogonalGroup(d) => {
                let dev = orthogonality_defect(a, d);
                if dev > ORTHO_TOL {
                    return Err(Error::NotOnManifold(format!("‖XᵀX - I‖ = {dev:e}")));
                }
                Ok(())
            }
        }
    }

    fn check_tangent(&self, x: &Point, v: &Tangent) -> Result<()> {
        if !v.is_at(x) {
            return Err(Error::AnchorMismatch);
        }
        if v.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.dim() });
        }
        if !v.is_finite() {
            return Err(Error::NonFinite("tangent vector"));
        }
        Ok(())
    }

    pub fn zero(&self, x: &Point) -> Tangent {
        Tangent::zeros(x, self.dim())
    }

    /// Maps intrinsic coordinates to the ambient representation.
    pub fn to_ambient(&self, x: &Point, v: &Tangent) -> Result<DMatrix<f64>> {
        self.check_tangent(x, v)?;
        let c = v.coords();
        Ok(match *self {
            Manifold::Euclidean(n) => DMatrix::from_column_slice(n, 1, c.as_slice()),
            Manifold::Sphere(n) => {
                let b = sphere_basis(x.ambient().column(0).into_owned());
                DMatrix::from_column_slice(n, 1, (b * c).as_slice())
            }
            Manifold::OrthogonalGroup(d) => x.ambient() * skew_from_coords(c, d),
        })
    }

    /// Orthogonal projection of an ambient vector onto `T_x M`, in coordinates.
    pub fn from_ambient(&self, x: &Point, a: &DMatrix<f64>) -> Result<Tangent> {
        let (r, cols) = self.ambient_shape();
        if a.nrows() != r || a.ncols() != cols {
            return Err(Error::DimensionMismatch { expected: r * cols, got: a.len() });
        }
        let coords = match *self {
            Manifold::Euclidean(_) => DVector::from_column_slice(a.as_slice()),
            Manifold::Sphere(_) => {
                let b = sphere_basis(x.ambient().column(0).into_owned());
                b.tr_mul(&a.column(0))
            }
            Manifold::OrthogonalGroup(d) => coords_from_matrix(&x.ambient().tr_mul(a), d),
        };
        Ok(Tangent::new(x, coords))
    }

    /// `R_x(η)`.
    pub fn retract(&self, x: &Point, eta: &Tangent) -> Result<Point> {
        self.check_tangent(x, eta)?;
        if eta.is_zero() {
            return Ok(x.clone());
        }
        match *self {
            Manifold::Euclidean(_) => {
                let v = x.ambient().column(0) + eta.coords();
                Ok(Point::from_vector(v))
            }
            Manifold::Sphere(_) => {
                let xv = x.ambient().column(0).into_owned();
                let amb = sphere_basis(xv.clone()) * eta.coords();
                let theta = amb.norm();
                let mut y = xv * theta.cos() + amb * (theta.sin() / theta);
                y /= y.norm();
                Ok(Point::from_vector(y))
            }
            Manifold::OrthogonalGroup(d) => {
                let m = x.ambient() + x.ambient() * skew_from_coords(eta.coords(), d);
                Ok(Point::new(qf(m)?))
            }
        }
    }

    /// `R_x⁻¹(y)`; valid while `y` is inside the injectivity region around `x`.
    pub fn inv_retract(&self, x: &Point, y: &Point) -> Result<Tangent> {
        self.check_point(x)?;
        self.check_point(y)?;
        if x == y {
            return Ok(self.zero(x));
        }
        match *self {
            Manifold::Euclidean(_) => {
                let v = y.ambient().column(0) - x.ambient().column(0);
                Ok(Tangent::new(x, v))
            }
            Manifold::Sphere(_) => {
                let xv = x.ambient().column(0);
                let yv = y.ambient().column(0);
                let c = xv.dot(&yv).clamp(-1.0, 1.0);
                let v = yv - xv * c;
                let vn = v.norm();
                let theta = vn.atan2(c);
                if theta > std::f64::consts::PI - 1e-6 {
                    return Err(Error::OutOfInjectivity { residual: std::f64::consts::PI - theta });
                }
                if vn == 0.0 {
                    return Ok(self.zero(x));
                }
                let amb = v * (theta / vn);
                let n = amb.len();
                self.from_ambient(x, &DMatrix::from_column_slice(n, 1, amb.as_slice()))
            }
            Manifold::OrthogonalGroup(d) => {
                let a = inverse_qf_factor(x.ambient(), y.ambient(), d)?;
                Ok(Tangent::new(x, coords_from_matrix(&a, d)))
            }
        }
    }

    /// `DR_x(ξ)[ξ] = d/dt R_x(tξ)|_{t=1}`, in coordinates at `R_x(ξ)`.
    pub fn diff_retract(&self, x: &Point, xi: &Tangent) -> Result<Tangent> {
        self.check_tangent(x, xi)?;
        let y = self.retract(x, xi)?;
        let out = match *self {
            Manifold::Euclidean(_) => Tangent::new(&y, xi.coords().clone()),
            Manifold::Sphere(_) => {
                if xi.is_zero() {
                    return Ok(self.zero(x));
                }
                let xv = x.ambient().column(0).into_owned();
                let amb = sphere_basis(xv.clone()) * xi.coords();
                let theta = amb.norm();
                let u = amb / theta;
                let vel = xv * (-theta * theta.sin()) + u * (theta * theta.cos());
                Tangent::new(&y, sphere_basis(y.ambient().column(0).into_owned()).tr_mul(&vel))
            }
            Manifold::OrthogonalGroup(_) => {
                let fwd = self.retract(x, &xi.scale(1.0 + FD_STEP))?;
                let bwd = self.retract(x, &xi.scale(1.0 - FD_STEP))?;
                let diff = (fwd.ambient() - bwd.ambient()) / (2.0 * FD_STEP);
                self.from_ambient(&y, &diff)?
            }
        };
        if !out.is_finite() {
            return Err(Error::NonFinite("differentiated retraction"));
        }
        Ok(out)
    }

    /// Isometric vector transport along `dir` satisfying the locking condition.
    pub fn transport(&self, x: &Point, dir: &Tangent) -> Result<TransportMap> {
        self.check_tangent(x, dir)?;
        let n = self.dim();
        if dir.is_zero() {
            return Ok(TransportMap::identity(x, n));
        }
        let y = self.retract(x, dir)?;
        match *self {
            Manifold::Euclidean(_) => {
                Ok(TransportMap { matrix: DMatrix::identity(n, n), beta: 1.0, source: x.id(), target: y })
            }
            Manifold::Sphere(_) => {
                let xv = x.ambient().column(0).into_owned();
                let yv = y.ambient().column(0).into_owned();
                let bx = sphere_basis(xv.clone());
                let by = sphere_basis(yv);
                let amb = &bx * dir.coords();
                let theta = amb.norm();
                let u = amb / theta;
                // parallel translation along the great circle
                let p = DMatrix::identity(xv.len(), xv.len()) + &u * u.transpose() * (theta.cos() - 1.0)
                    - &xv * u.transpose() * theta.sin();
                let matrix = by.tr_mul(&(p * bx));
                Ok(TransportMap { matrix, beta: 1.0, source: x.id(), target: y })
            }
            Manifold::OrthogonalGroup(_) => {
                let z = self.diff_retract(x, dir)?;
                let zn = z.norm();
                let dn = dir.norm();
                if !(zn > 1e-14 * dn) {
                    return Err(Error::DegenerateDirection);
                }
                let beta = dn / zn;
                let matrix = locking_rotation(dir.coords(), &(z.coords() * beta));
                Ok(TransportMap { matrix, beta, source: x.id(), target: y })
            }
        }
    }

    /// A random point: uniform on the sphere, Haar-like on `O(d)`, standard
    /// normal in Euclidean space.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match *self {
            Manifold::Euclidean(n) => Point::from_vector(DVector::from_fn(n, |_, _| rng.sample(StandardNormal))),
            Manifold::Sphere(n) => loop {
                let v: DVector<f64> = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
                let vn = v.norm();
                if vn > 1e-8 {
                    break Point::from_vector(v / vn);
                }
            },
            Manifold::OrthogonalGroup(d) => random_orthogonal(d, rng),
        }
    }

    /// A random tangent vector at `x` with the given norm.
    pub fn random_tangent<R: Rng + ?Sized>(&self, x: &Point, norm: f64, rng: &mut R) -> Tangent {
        let n = self.dim();
        loop {
            let v: DVector<f64> = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
            let vn = v.norm();
            if vn > 1e-8 {
                return Tangent::new(x, v * (norm / vn));
            }
        }
    }
}

/// Q factor of a standard-normal `d × d` draw, with positive diagonal on R.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Point {
    loop {
        let m = DMatrix::from_fn(d, d, |_, _| rng.sample(StandardNormal));
        if let Ok(q) = qf(m) {
            return Point::new(q);
        }
    }
}

/// `‖PᵀP − I‖_F`.
pub fn orthogonality_defect(p: &DMatrix<f64>, d: usize) -> f64 {
    (p.tr_mul(p) - DMatrix::<f64>::identity(d, d)).norm()
}

/// Q factor of the QR decomposition with the diagonal of R forced positive.
pub fn qf(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("qf input"));
    }
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..r.ncols().min(r.nrows()) {
        let rjj = r[(j, j)];
        if rjj.abs() <= 1e-13 * scale {
            return Err(Error::DegenerateStep);
        }
        if rjj < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// Solves `(XᵀY) R − I` skew with `R` upper triangular, returning `A = XᵀY R`.
fn inverse_qf_factor(x: &DMatrix<f64>, y: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    let m = x.tr_mul(y);
    let mut r = DMatrix::<f64>::zeros(d, d);
    let mut a = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let block = m.view((0, 0), (j + 1, j + 1)).into_owned();
        let mut rhs = DVector::<f64>::zeros(j + 1);
        for i in 0..j {
            rhs[i] = -a[(j, i)];
        }
        rhs[j] = 1.0;
        let sol = block.lu().solve(&rhs).ok_or(Error::OutOfInjectivity { residual: f64::INFINITY })?;
        if !(sol[j] > 0.0) {
            return Err(Error::OutOfInjectivity { residual: f64::INFINITY });
        }
        for i in 0..=j {
            r[(i, j)] = sol[i];
        }
        let col = m.columns(0, j + 1) * sol;
        a.set_column(j, &col);
    }
    let residual = (&a + a.transpose() - DMatrix::<f64>::identity(d, d) * 2.0).norm();
    if !(residual <= INV_RETRACT_TOL) {
        return Err(Error::OutOfInjectivity { residual });
    }
    Ok(a)
}

fn sphere_basis(x: DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let s = if x[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = x;
    v[0] += s;
    let vv = v.norm_squared();
    let h = DMatrix::identity(n, n) - &v * v.transpose() * (2.0 / vv);
    h.columns(1, n - 1).into_owned()
}

fn skew_from_coords(c: &DVector<f64>, d: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i + 1..d {
            let v = c[k] * std::f64::consts::FRAC_1_SQRT_2;
            omega[(i, j)] = v;
            omega[(j, i)] = -v;
            k += 1;
        }
    }
    omega
}

fn coords_from_matrix(a: &DMatrix<f64>, d: usize) -> DVector<f64> {
    let mut c = DVector::zeros(d * (d - 1) / 2);
    let mut k = 0;
    for i in 0..d {
        for j in i + 1..d {
            c[k] = (a[(i, j)] - a[(j, i)]) * std::f64::consts::FRAC_1_SQRT_2;
            k += 1;
        }
    }
    c
}

/// Orthogonal matrix, the identity off `span{a, b}`, mapping `a` onto `b`
/// (`‖a‖ = ‖b‖`), built from at most two Householder reflections.
fn locking_rotation(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let n = a.len();
    let a_hat = a / a.norm();
    let b_hat = b / b.norm();
    if (&a_hat - &b_hat).norm() <= f64::EPSILON {
        return DMatrix::identity(n, n);
    }
    let s1 = DMatrix::identity(n, n) - &a_hat * a_hat.transpose() * 2.0;
    let w = &a_hat + &b_hat;
    let ww = w.norm_squared();
    if ww < 1e-24 {
        return s1;
    }
    let s2 = DMatrix::identity(n, n) - &w * w.transpose() * (2.0 / ww);
    s2 * s1
}
