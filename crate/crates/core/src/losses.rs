//! Loss oracles: values, subgradients, vector fields and Lipschitz bounds.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{dot, norm2, DualVector, Geometry, GeometryKind, Point};

#[derive(Debug, Clone, PartialEq)]
pub enum Loss {
    /// `⟨g, x⟩`.
    Linear(DualVector),
    /// `scale · ½‖x − center‖²`.
    Quadratic { center: Vec<f64>, scale: f64 },
    /// An affine loss read from a table: `offset + ⟨gradient, x⟩`.
    Trace { offset: f64, gradient: DualVector },
}

impl Loss {
    pub fn scalar(g: f64) -> Loss {
        Loss::Linear(DualVector(vec![g]))
    }

    pub fn dim(&self) -> usize {
        match self {
            Loss::Linear(g) => g.dim(),
            Loss::Quadratic { center, .. } => center.len(),
            Loss::Trace { gradient, .. } => gradient.dim(),
        }
    }

    pub fn value(&self, x: &Point) -> f64 {
        match self {
            Loss::Linear(g) => dot(&g.0, &x.0),
            Loss::Quadratic { center, scale } => {
                let sq: f64 = x.0.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                0.5 * scale * sq
            }
            Loss::Trace { offset, gradient } => offset + dot(&gradient.0, &x.0),
        }
    }

    pub fn subgradient(&self, x: &Point) -> DualVector {
        match self {
            Loss::Linear(g) => g.clone(),
            Loss::Quadratic { center, scale } => {
                DualVector(x.0.iter().zip(center).map(|(a, c)| scale * (a - c)).collect())
            }
            Loss::Trace { gradient, .. } => gradient.clone(),
        }
    }

    /// True when the subgradient does not depend on the query point.
    pub fn is_linear(&self) -> bool {
        !matches!(self, Loss::Quadratic { .. })
    }

    /// Constant gradient of a linear or trace loss.
    pub fn constant_gradient(&self) -> Option<&DualVector> {
        match self {
            Loss::Linear(g) => Some(g),
            Loss::Trace { gradient, .. } => Some(gradient),
            Loss::Quadratic { .. } => None,
        }
    }

    /// Lipschitz constant of the gradient map in the ℓ2 norm.
    pub fn smoothness(&self) -> f64 {
        match self {
            Loss::Quadratic { scale, .. } => *scale,
            _ => 0.0,
        }
    }

    /// Exact supremum of the dual norm of the subgradient over the feasible
    /// set, or `None` when it is infinite.
    pub fn lipschitz_on(&self, geom: &Geometry) -> Option<f64> {
        match self {
            Loss::Linear(g) | Loss::Trace { gradient: g, .. } => Some(geom.dual_norm(g)),
            Loss::Quadratic { center, scale } => match &geom.kind {
                GeometryKind::EuclideanBall { radius } => Some(scale * (radius + norm2(center))),
                GeometryKind::EuclideanBox { lower, upper } => {
                    let far: Vec<f64> = center
                        .iter()
                        .zip(lower.iter().zip(upper))
                        .map(|(c, (l, u))| (l - c).abs().max((u - c).abs()))
                        .collect();
                    Some(scale * norm2(&far))
                }
                GeometryKind::EntropicSimplex => {
                    let far = center.iter().fold(0.0f64, |m, c| m.max(c.abs()).max((1.0 - c).abs()));
                    Some(scale * far)
                }
                GeometryKind::EuclideanFree => None,
            },
        }
    }
}

/// The full gradient map of a loss, used in the full-information optimistic mode.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub loss: Loss,
    pub lipschitz: f64,
}

impl VectorField {
    pub fn of(loss: Loss) -> Self {
        let lipschitz = loss.smoothness();
        VectorField { loss, lipschitz }
    }

    pub fn eval(&self, x: &Point) -> DualVector {
        self.loss.subgradient(x)
    }
}

/// An ordered loss sequence with a declared bound `G` on subgradient dual norms.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSequence {
    pub losses: Vec<Loss>,
    pub gbound: f64,
}

impl LossSequence {
    pub fn new(losses: Vec<Loss>, gbound: f64) -> Self {
        LossSequence { losses, gbound }
    }

    /// Declares `G` as the exact supremum over the feasible set.
    pub fn on_geometry(losses: Vec<Loss>, geom: &Geometry) -> Result<Self> {
        let mut g = 0.0f64;
        for (k, l) in losses.iter().enumerate() {
            if l.dim() != geom.dim {
                return Err(Error::Config(format!(
                    "loss {} has dimension {} but geometry has {}",
                    k + 1,
                    l.dim(),
                    geom.dim
                )));
            }
            match l.lipschitz_on(geom) {
                Some(v) => g = g.max(v),
                None => {
                    return Err(Error::Config(format!(
                        "loss {} has no finite Lipschitz bound on an unbounded set; declare gbound",
                        k + 1
                    )))
                }
            }
        }
        Ok(LossSequence { losses, gbound: g })
    }

    /// Scalar linear losses; `G = max |g_t|`.
    pub fn scalar(values: &[f64]) -> Self {
        let g = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        LossSequence { losses: values.iter().map(|v| Loss::scalar(*v)).collect(), gbound: g }
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn get(&self, t: usize) -> &Loss {
        &self.losses[t - 1]
    }

    /// Constant gradients of an all-linear sequence.
    pub fn linear_gradients(&self) -> Option<Vec<DualVector>> {
        self.losses.iter().map(|l| l.constant_gradient().cloned()).collect()
    }

    /// Checks an emitted subgradient against the declared bound.
    pub fn check_emitted(&self, t: usize, norm: f64) -> Result<()> {
        if norm > self.gbound + 1e-9 {
            return Err(Error::Validation(format!(
                "subgradient at t={t} has dual norm {norm} above declared G={}",
                self.gbound
            )));
        }
        Ok(())
    }

    /// Serializes as a trace table: `t offset g_1 … g_d`, one row per loss.
    pub fn to_trace(&self) -> Result<String> {
        let mut out = String::from("# t offset gradient...\n");
        for (k, l) in self.losses.iter().enumerate() {
            let (offset, g) = match l {
                Loss::Linear(g) => (0.0, g),
                Loss::Trace { offset, gradient } => (*offset, gradient),
                Loss::Quadratic { .. } => {
                    return Err(Error::Unsupported("quadratic losses have no trace form".into()))
                }
            };
            write!(out, "{} {}", k + 1, offset).unwrap();
            for v in &g.0 {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses the trace table written by [`LossSequence::to_trace`]. `G` is the
    /// largest dual norm present unless a larger one is declared later.
    pub fn from_trace(text: &str, geom: &Geometry) -> Result<Self> {
        let mut losses = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: &str| Error::Validation(format!("loss trace line {}: {msg}", lineno + 1));
            if fields.len() != geom.dim + 2 {
                return Err(bad(&format!("expected {} columns, found {}", geom.dim + 2, fields.len())));
            }
            let t: usize = fields[0].parse().map_err(|_| bad("time is not an integer"))?;
            if t != losses.len() + 1 {
                return Err(bad(&format!("expected time {}, found {t}", losses.len() + 1)));
            }
            let nums: Vec<f64> = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("non-numeric entry"))?;
            if nums.iter().any(|v| !v.is_finite()) {
                return Err(bad("non-finite entry"));
            }
            losses.push(Loss::Trace { offset: nums[0], gradient: DualVector(nums[1..].to_vec()) });
        }
        let gbound = losses.iter().map(|l| l.lipschitz_on(geom).unwrap_or(0.0)).fold(0.0, f64::max);
        Ok(LossSequence { losses, gbound })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_examples() {
        let l = Loss::Linear(DualVector(vec![1.0, -1.0]));
        assert_eq!(l.value(&Point(vec![0.5, 0.5])), 0.0);
        let q = Loss::Quadratic { center: vec![0.0, 0.0], scale: 1.0 };
        assert_eq!(q.value(&Point(vec![3.0, 4.0])), 12.5);
        assert_eq!(Loss::Linear(DualVector(vec![0.0, 0.0])).value(&Point(vec![7.0, -2.0])), 0.0);
    }

    #[test]
    fn subgradient_examples() {
        let g = DualVector(vec![0.3, -0.2]);
        assert_eq!(Loss::Linear(g.clone()).subgradient(&Point(vec![1.0, 1.0])), g);
        let q = Loss::Quadratic { center: vec![1.0, 2.0], scale: 3.0 };
        assert_eq!(q.subgradient(&Point(vec![1.0, 2.0])).0, vec![0.0, 0.0]);
    }

    #[test]
    fn quadratic_gradient_matches_central_difference() {
        let q = Loss::Quadratic { center: vec![1.0, 0.0], scale: 2.0 };
        let x = Point(vec![0.0, 0.0]);
        let h = 1e-6;
        let fd: Vec<f64> = (0..2)
            .map(|k| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp.0[k] += h;
                xm.0[k] -= h;
                (q.value(&xp) - q.value(&xm)) / (2.0 * h)
            })
            .collect();
        assert!((fd[0] + 2.0).abs() < 1e-4 && fd[1].abs() < 1e-4);
        let g = q.subgradient(&x);
        assert!((g.0[0] - fd[0]).abs() < 1e-4 && (g.0[1] - fd[1]).abs() < 1e-4);
        let field = VectorField::of(q);
        assert_eq!(field.eval(&x).0, vec![-2.0, 0.0]);
        assert_eq!(field.lipschitz, 2.0);
    }

    #[test]
    fn quadratic_on_ball_declares_exact_sup() {
        let geom = Geometry::ball(2, 1.0).unwrap();
        let q = Loss::Quadratic { center: vec![0.3, 0.4], scale: 2.0 };
        assert_eq!(q.lipschitz_on(&geom), Some(2.0 * 1.5));
        assert_eq!(q.lipschitz_on(&Geometry::free(2).unwrap()), None);
    }

    #[test]
    fn trace_round_trip() {
        let geom = Geometry::free(2).unwrap();
        let seq = LossSequence::new(
            vec![Loss::Linear(DualVector(vec![1.0, -0.5])), Loss::Trace { offset: 2.0, gradient: DualVector(vec![0.0, 3.0]) }],
            3.0,
        );
        let parsed = LossSequence::from_trace(&seq.to_trace().unwrap(), &geom).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed.get(2).value(&Point(vec![1.0, 1.0])), 5.0);
        assert_eq!(parsed.gbound, 3.0);
        assert!(LossSequence::from_trace("2 0 1 1\n", &geom).is_err());
    }
}
