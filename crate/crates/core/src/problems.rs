//! Problem oracles returning a function value and one Riemannian Clarke
//! subgradient, plus instance generators.

use std::io::BufRead;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{self, Manifold, Point, Tangent};

/// Result of one oracle call.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: f64,
    pub subgradient: Tangent,
    /// Set when the oracle hit a degenerate configuration and reported a
    /// conventional value instead of a true subgradient.
    pub degenerate: bool,
}

/// Black-box model: the solver only sees `f(x)` and one subgradient at `x`.
///
/// Implementations must be safe for concurrent read-only evaluation.
pub trait Problem: Sync {
    fn manifold(&self) -> Manifold;

    fn evaluate(&self, x: &Point) -> Result<Evaluation>;

    fn description(&self) -> String;
}

/// `f(x) = max_i x_i²` on `ℝⁿ`.
#[derive(Clone, Debug)]
pub struct MaxQ {
    n: usize,
}

impl MaxQ {
    pub fn new(n: usize) -> Self {
        MaxQ { n }
    }

    pub fn start(&self) -> Point {
        Point::from_vector(DVector::from_element(self.n, 1.0))
    }
}

impl Problem for MaxQ {
    fn manifold(&self) -> Manifold {
        Manifold::Euclidean(self.n)
    }

    fn evaluate(&self, x: &Point) -> Result<Evaluation> {
        let v = x.as_slice();
        if v.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: v.len() });
        }
        let mut best = 0;
        for (i, xi) in v.iter().enumerate() {
            if xi * xi > v[best] * v[best] {
                best = i;
            }
        }
        let value = v[best] * v[best];
        if !value.is_finite() {
            return Err(Error::NonFinite("maxq value"));
        }
        let mut g = DVector::zeros(self.n);
        g[best] = 2.0 * v[best];
        Ok(Evaluation { value, subgradient: Tangent::new(x, g), degenerate: false })
    }

    fn description(&self) -> String {
        format!("maxq n={}", self.n)
    }
}

/// Point cloud for the oriented bounding box problem, one point per column.
#[derive(Clone, Debug, PartialEq)]
pub struct ObbInstance {
    points: DMatrix<f64>,
}

impl ObbInstance {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.nrows() < 2 {
            return Err(Error::Precondition("dimension must be at least 2".into()));
        }
        if points.ncols() < 2 {
            return Err(Error::Precondition("need at least two points".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point cloud"));
        }
        Ok(ObbInstance { points })
    }

    /// `E = 0.75 U` with `U` i.i.d. uniform on `[0, 1)` from ChaCha8 seeded by `seed`.
    pub fn generate(d: usize, k: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // fill column by column so the point order is stable under K changes
        let mut points = DMatrix::zeros(d, k);
        for j in 0..k {
            for i in 0..d {
                points[(i, j)] = 0.75 * rng.random::<f64>();
            }
        }
        Self::new(points)
    }

    /// Reads `d,K` on the first line, then `K` rows of `d` comma-separated floats.
    pub fn from_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok((i + 1, l))),
            Err(e) => Some(Err(Error::Parse(e.to_string()))),
        });
        let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty point file".into()))??;
        let dims: Vec<usize> = header
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("line 1: expected \"d,K\": {e}")))?;
        let [d, k] = dims[..] else {
            return Err(Error::Parse("line 1: expected \"d,K\"".into()));
        };
        let mut points = DMatrix::zeros(d, k);
        let mut j = 0;
        for line in lines {
            let (no, line) = line?;
            if j == k {
                return Err(Error::Parse(format!("line {no}: more than {k} points")));
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {no}: {e}")))?;
            if row.len() != d {
                return Err(Error::Parse(format!("line {no}: expected {d} values, got {}", row.len())));
            }
            points.set_column(j, &DVector::from_vec(row));
            j += 1;
        }
        if j != k {
            return Err(Error::Parse(format!("expected {k} points, got {j}")));
        }
        Self::new(points)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{}\n", self.d(), self.k());
        for col in self.points.column_iter() {
            let row: Vec<String> = col.iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn d(&self) -> usize {
        self.points.nrows()
    }

    pub fn k(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }
}

/// Minimum-volume oriented bounding box: `f(O) = ∏_i (max_j (OE)_ij − min_j (OE)_ij)`.
#[derive(Clone, Debug)]
pub struct Obb {
    instance: ObbInstance,
}

impl Obb {
    pub fn new(instance: ObbInstance) -> Self {
        Obb { instance }
    }

    pub fn instance(&self) -> &ObbInstance {
        &self.instance
    }

    /// Box volume only.
    pub fn volume(&self, o: &DMatrix<f64>) -> f64 {
        let p = o * self.instance.points();
        p.row_iter().map(|r| r.max() - r.min()).product()
    }
}

impl Problem for Obb {
    fn manifold(&self) -> Manifold {
        Manifold::OrthogonalGroup(self.instance.d())
    }

    fn evaluate(&self, x: &Point) -> Result<Evaluation> {
        let d = self.instance.d();
        let o = x.ambient();
        if o.nrows() != d || o.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d * d, got: o.len() });
        }
        let e = self.instance.points();
        let p = o * e;
        let mut ranges = Vec::with_capacity(d);
        let mut extremes = Vec::with_capacity(d);
        for row in p.row_iter() {
            // first index wins ties
            let (mut jmax, mut jmin) = (0, 0);
            for (j, v) in row.iter().enumerate() {
                if *v > row[jmax] {
                    jmax = j;
                }
                if *v < row[jmin] {
                    jmin = j;
                }
            }
            ranges.push(row[jmax] - row[jmin]);
            extremes.push((jmax, jmin));
        }
        let manifold = self.manifold();
        if ranges.contains(&0.0) {
            return Ok(Evaluation { value: 0.0, subgradient: manifold.zero(x), degenerate: true });
        }
        let value: f64 = ranges.iter().product();
        if !value.is_finite() {
            return Err(Error::NonFinite("box volume"));
        }
        let mut grad = DMatrix::zeros(d, d);
        for (i, &(jmax, jmin)) in extremes.iter().enumerate() {
            let others: f64 = ranges.iter().enumerate().filter(|(l, _)| *l != i).map(|(_, r)| r).product();
            let diff = e.column(jmax) - e.column(jmin);
            grad.set_row(i, &(diff.transpose() * others));
        }
        // projection onto T_O: the skew part of Oᵀ G in O's frame
        let subgradient = manifold.from_ambient(x, &grad)?;
        Ok(Evaluation { value, subgradient, degenerate: false })
    }

    fn description(&self) -> String {
        format!("obb d={} K={}", self.instance.d(), self.instance.k())
    }
}

/// Starting point for OBB runs: Q factor of a standard-normal matrix.
pub fn random_orthogonal_start(d: usize, seed: u64) -> Point {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    geometry::random_orthogonal(d, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn square() -> ObbInstance {
        ObbInstance::new(DMatrix::from_column_slice(2, 4, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0])).unwrap()
    }

    #[test]
    fn maxq_examples() {
        let p = MaxQ::new(2);
        let at = |v: DVector<f64>| p.evaluate(&Point::from_vector(v)).unwrap();
        let z = at(dvector![0.0, 0.0]);
        assert_eq!(z.value, 0.0);
        assert!(z.subgradient.is_zero());
        let a = at(dvector![1.0, -2.0]);
        assert_eq!(a.value, 4.0);
        assert_eq!(a.subgradient.coords(), &dvector![0.0, -4.0]);
        let b = at(dvector![2.0, -2.0]);
        assert_eq!(b.value, 4.0);
        assert_eq!(b.subgradient.coords(), &dvector![4.0, 0.0]);
    }

    #[test]
    fn unit_square_volumes() {
        let obb = Obb::new(square());
        let id = Point::new(DMatrix::identity(2, 2));
        assert_eq!(obb.evaluate(&id).unwrap().value, 1.0);
        let (s, c) = std::f64::consts::FRAC_PI_4.sin_cos();
        let rot = Point::new(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]));
        assert!((obb.evaluate(&rot).unwrap().value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cloud_flags() {
        let inst = ObbInstance::new(DMatrix::from_column_slice(2, 2, &[0.0, 0.0, 1.0, 0.0])).unwrap();
        let ev = Obb::new(inst).evaluate(&Point::new(DMatrix::identity(2, 2))).unwrap();
        assert!(ev.degenerate);
        assert_eq!(ev.value, 0.0);
        assert!(ev.subgradient.is_zero());
    }

    #[test]
    fn generator_range_and_determinism() {
        let a = ObbInstance::generate(3, 1000, 7).unwrap();
        let b = ObbInstance::generate(3, 1000, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.points().iter().all(|v| (0.0..0.75).contains(v)));
        let mean = a.points().mean();
        assert!((mean - 0.375).abs() < 0.01);
        assert_ne!(a, ObbInstance::generate(3, 1000, 8).unwrap());
    }

    #[test]
    fn orthogonal_start() {
        let a = random_orthogonal_start(4, 11);
        assert!(geometry::orthogonality_defect(a.ambient(), 4) <= 1e-10);
        assert_eq!(a, random_orthogonal_start(4, 11));
        let b = random_orthogonal_start(4, 12);
        assert!((a.ambient() - b.ambient()).norm() > 1e-6);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let inst = ObbInstance::generate(3, 5, 1).unwrap();
        let text = inst.to_csv();
        let back = ObbInstance::from_csv(text.as_bytes()).unwrap();
        assert_eq!(back, inst);
        assert!(ObbInstance::from_csv("3,2\n1,2,3\n".as_bytes()).is_err());
        assert!(ObbInstance::from_csv("2,2\n1,2\n3\n".as_bytes()).is_err());
        assert!(ObbInstance::from_csv("d,K\n".as_bytes()).is_err());
        assert!(ObbInstance::from_csv("".as_bytes()).is_err());
    }

    #[test]
    fn too_small_instances_rejected() {
        assert!(ObbInstance::new(DMatrix::zeros(2, 1)).is_err());
        assert!(ObbInstance::new(DMatrix::zeros(1, 5)).is_err());
    }
}
