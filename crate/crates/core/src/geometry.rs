//! Regularizers, Bregman divergences, mirror maps and norm pairs.
//!
//! Four feasible sets are supported, each with a closed-form mirror map:
//! the Euclidean ball, an axis-aligned box, the whole space (all three with
//! `h(x) = ½‖x‖²` and the ℓ2 norm), and the probability simplex with the
//! shifted negative entropy `h(x) = Σ x_k log x_k + log d`, paired with ℓ1 as
//! the primal norm and ℓ∞ as the dual norm.

use crate::error::{Error, Result};

/// Absolute tolerance used for feasibility checks.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// A primal point.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(pub Vec<f64>);

/// A dual vector (gradient or aggregated gradients).
#[derive(Debug, Clone, PartialEq)]
pub struct DualVector(pub Vec<f64>);

impl Point {
    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl DualVector {
    pub fn zeros(dim: usize) -> Self {
        DualVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self += other`, in place.
    pub fn add_assign(&mut self, other: &DualVector) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scaled(&self, c: f64) -> DualVector {
        DualVector(self.0.iter().map(|v| c * v).collect())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Which feasible set and regularizer pair is in use.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometryKind {
    EuclideanBall { radius: f64 },
    EuclideanBox { lower: Vec<f64>, upper: Vec<f64> },
    EntropicSimplex,
    EuclideanFree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub kind: GeometryKind,
    pub dim: usize,
}

impl Geometry {
    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 || !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Config(format!(
                "ball needs dim >= 1 and a finite radius > 0 (got dim={dim}, radius={radius})"
            )));
        }
        Ok(Geometry { kind: GeometryKind::EuclideanBall { radius }, dim })
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Config("box bounds must be non-empty and of equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::Config("box bounds must be finite with lower <= upper".into()));
        }
        let dim = lower.len();
        Ok(Geometry { kind: GeometryKind::EuclideanBox { lower, upper }, dim })
    }

    pub fn simplex(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("simplex needs dim >= 1".into()));
        }
        Ok(Geometry { kind: GeometryKind::EntropicSimplex, dim })
    }

    pub fn free(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("free geometry needs dim >= 1".into()));
        }
        Ok(Geometry { kind: GeometryKind::EuclideanFree, dim })
    }

    pub fn is_simplex(&self) -> bool {
        matches!(self.kind, GeometryKind::EntropicSimplex)
    }

    pub fn is_free(&self) -> bool {
        matches!(self.kind, GeometryKind::EuclideanFree)
    }

    pub fn is_feasible(&self, x: &Point) -> bool {
        if x.dim() != self.dim || x.0.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let tol = FEASIBILITY_TOL;
        match &self.kind {
            GeometryKind::EuclideanBall { radius } => norm2(&x.0) <= radius + tol,
            GeometryKind::EuclideanBox { lower, upper } => x
                .0
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol),
            GeometryKind::EntropicSimplex => {
                x.0.iter().all(|v| *v >= -tol) && (x.0.iter().sum::<f64>() - 1.0).abs() <= tol
            }
            GeometryKind::EuclideanFree => true,
        }
    }

    fn require_feasible(&self, x: &Point, what: &str) -> Result<()> {
        if self.is_feasible(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!("{what} {:?} is not feasible for {:?}", x.0, self.kind)))
        }
    }

    /// Shifted regularizer value, nonnegative on the feasible set.
    pub fn regularizer_value(&self, x: &Point) -> Result<f64> {
        self.require_feasible(x, "point")?;
        Ok(match self.kind {
            GeometryKind::EntropicSimplex => {
                let neg_entropy: f64 =
                    x.0.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum();
                neg_entropy + (self.dim as f64).ln()
            }
            _ => 0.5 * dot(&x.0, &x.0),
        })
    }

    /// `D_h(x, x') = h(x) − h(x') − ⟨∇h(x'), x − x'⟩`.
    pub fn bregman(&self, x: &Point, xp: &Point) -> Result<f64> {
        self.require_feasible(x, "point")?;
        self.require_feasible(xp, "reference point")?;
        Ok(match self.kind {
            GeometryKind::EntropicSimplex => {
                if xp.0.iter().any(|v| *v <= 0.0) {
                    return Err(Error::Domain(
                        "Bregman divergence needs an interior reference point on the simplex".into(),
                    ));
                }
                x.0.iter()
                    .zip(&xp.0)
                    .filter(|(a, _)| **a > 0.0)
                    .map(|(a, b)| a * (a / b).ln())
                    .sum()
            }
            _ => {
                let d = sub(&x.0, &xp.0);
                0.5 * dot(&d, &d)
            }
        })
    }

    /// `Π(y) = argmin_x ⟨−y, x⟩ + h(x)` over the feasible set.
    pub fn mirror_map(&self, y: &DualVector) -> Point {
        match &self.kind {
            GeometryKind::EuclideanFree => Point(y.0.clone()),
            GeometryKind::EuclideanBall { radius } => {
                let n = norm2(&y.0);
                if n <= *radius {
                    Point(y.0.clone())
                } else {
                    Point(y.0.iter().map(|v| radius * v / n).collect())
                }
            }
            GeometryKind::EuclideanBox { lower, upper } => Point(
                y.0.iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(v, (l, u))| v.clamp(*l, *u))
                    .collect(),
            ),
            GeometryKind::EntropicSimplex => {
                let m = y.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = y.0.iter().map(|v| (v - m).exp()).collect();
                let z: f64 = e.iter().sum();
                Point(e.into_iter().map(|v| v / z).collect())
            }
        }
    }

    pub fn dual_norm(&self, g: &DualVector) -> f64 {
        match self.kind {
            GeometryKind::EntropicSimplex => norm_inf(&g.0),
            _ => norm2(&g.0),
        }
    }

    pub fn primal_norm(&self, v: &[f64]) -> f64 {
        match self.kind {
            GeometryKind::EntropicSimplex => norm1(v),
            _ => norm2(v),
        }
    }

    /// The prior point `Π(0)`, minimizer of `h`.
    pub fn prior(&self) -> Point {
        self.mirror_map(&DualVector::zeros(self.dim))
    }

    /// Minimizer of `⟨c, x⟩` over the set, or `None` when the set is unbounded
    /// and `c ≠ 0`. Ties pick `Π(0)` (for `c = 0`), the smallest-index vertex on
    /// the simplex, and the lower bound on box coordinates with zero weight
    /// replaced by the clipped origin.
    pub fn linear_minimizer(&self, c: &DualVector) -> Option<Point> {
        if c.0.iter().all(|v| *v == 0.0) {
            return Some(self.prior());
        }
        match &self.kind {
            GeometryKind::EuclideanFree => None,
            GeometryKind::EuclideanBall { radius } => {
                let n = norm2(&c.0);
                Some(Point(c.0.iter().map(|v| -radius * v / n).collect()))
            }
            GeometryKind::EuclideanBox { lower, upper } => Some(Point(
                c.0.iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(v, (l, u))| {
                        if *v > 0.0 {
                            *l
                        } else if *v < 0.0 {
                            *u
                        } else {
                            0.0f64.clamp(*l, *u)
                        }
                    })
                    .collect(),
            )),
            GeometryKind::EntropicSimplex => {
                let mut best = 0;
                for (k, v) in c.0.iter().enumerate() {
                    if *v < c.0[best] {
                        best = k;
                    }
                }
                let mut x = vec![0.0; self.dim];
                x[best] = 1.0;
                Some(Point(x))
            }
        }
    }

    /// Euclidean projection onto the set (used by the projected-subgradient
    /// comparator fallback). Identical to the mirror map for the ℓ2 kinds.
    pub fn project(&self, y: &[f64]) -> Point {
        match self.kind {
            GeometryKind::EntropicSimplex => Point(project_simplex(y)),
            _ => self.mirror_map(&DualVector(y.to_vec())),
        }
    }

    /// Largest primal diameter, `None` when unbounded.
    pub fn diameter(&self) -> Option<f64> {
        match &self.kind {
            GeometryKind::EuclideanBall { radius } => Some(2.0 * radius),
            GeometryKind::EuclideanBox { lower, upper } => {
                Some(norm2(&sub(upper, lower)))
            }
            GeometryKind::EntropicSimplex => Some(2.0),
            GeometryKind::EuclideanFree => None,
        }
    }
}

/// Sort-based Euclidean projection onto the probability simplex.
fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, v) in u.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - 1.0) / (k as f64 + 1.0);
        if v - candidate > 0.0 {
            theta = candidate;
        }
    }
    y.iter().map(|v| (v - theta).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn regularizer_examples() {
        let s3 = Geometry::simplex(3).unwrap();
        let u = Point(vec![1.0 / 3.0; 3]);
        assert!(close(s3.regularizer_value(&u).unwrap(), 0.0, 1e-12));

        let b = Geometry::ball(2, 1.0).unwrap();
        assert!(close(b.regularizer_value(&Point(vec![0.6, 0.8])).unwrap(), 0.5, 1e-12));

        let s2 = Geometry::simplex(2).unwrap();
        let v = s2.regularizer_value(&Point(vec![1.0, 0.0])).unwrap();
        assert!(close(v, 2f64.ln(), 1e-12));
    }

    #[test]
    fn infeasible_point_is_a_domain_error() {
        let b = Geometry::ball(2, 1.0).unwrap();
        let err = b.regularizer_value(&Point(vec![3.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn bregman_examples() {
        let f = Geometry::free(2).unwrap();
        let x = Point(vec![1.0, 0.0]);
        assert_eq!(f.bregman(&x, &x).unwrap(), 0.0);
        assert!(close(f.bregman(&x, &Point(vec![0.0, 0.0])).unwrap(), 0.5, 1e-15));

        // 0.5 ln 2 + 0.5 ln(2/3), evaluated separately.
        let kl_oracle = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        let s2 = Geometry::simplex(2).unwrap();
        let kl = s2.bregman(&Point(vec![0.5, 0.5]), &Point(vec![0.25, 0.75])).unwrap();
        assert!(close(kl, kl_oracle, 1e-15));
        assert!(close(kl, 0.143841, 1e-6));

        let err = s2.bregman(&Point(vec![0.5, 0.5]), &Point(vec![1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn mirror_map_examples() {
        let s3 = Geometry::simplex(3).unwrap();
        let p = s3.mirror_map(&DualVector(vec![0.0; 3]));
        assert!(p.0.iter().all(|v| close(*v, 1.0 / 3.0, 1e-15)));

        let b = Geometry::ball(2, 1.0).unwrap();
        let p = b.mirror_map(&DualVector(vec![3.0, 4.0]));
        assert!(close(p.0[0], 0.6, 1e-15) && close(p.0[1], 0.8, 1e-15));

        let bx = Geometry::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(bx.mirror_map(&DualVector(vec![2.0, -1.0])).0, vec![1.0, 0.0]);
    }

    #[test]
    fn softmax_survives_large_inputs() {
        let s = Geometry::simplex(2).unwrap();
        let p = s.mirror_map(&DualVector(vec![1000.0, 999.0]));
        assert!(p.0.iter().all(|v| v.is_finite()));
        assert!(close(p.0[0] + p.0[1], 1.0, 1e-15));
    }

    #[test]
    fn dual_norm_examples() {
        let b = Geometry::ball(2, 1.0).unwrap();
        assert_eq!(b.dual_norm(&DualVector(vec![3.0, 4.0])), 5.0);
        let s = Geometry::simplex(3).unwrap();
        assert_eq!(s.dual_norm(&DualVector(vec![-2.0, 1.0, 0.5])), 2.0);
        assert_eq!(s.dual_norm(&DualVector(vec![0.0; 3])), 0.0);
    }

    #[test]
    fn linear_minimizers() {
        let b = Geometry::ball(2, 1.0).unwrap();
        let p = b.linear_minimizer(&DualVector(vec![3.0, 4.0])).unwrap();
        assert!(close(p.0[0], -0.6, 1e-15) && close(p.0[1], -0.8, 1e-15));
        let s = Geometry::simplex(3).unwrap();
        assert_eq!(s.linear_minimizer(&DualVector(vec![2.0, -1.0, 0.0])).unwrap().0, vec![0.0, 1.0, 0.0]);
        assert!(Geometry::free(1).unwrap().linear_minimizer(&DualVector(vec![1.0])).is_none());
    }

    #[test]
    fn simplex_projection_lands_on_simplex() {
        let p = project_simplex(&[0.3, 2.0, -1.0]);
        assert!(close(p.iter().sum::<f64>(), 1.0, 1e-12));
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
        let q = project_simplex(&[0.5, 0.5]);
        assert!(close(q[0], 0.5, 1e-15));
    }
}
