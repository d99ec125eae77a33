//! Best fixed action in hindsight.

use crate::geometry::{dot, norm2, DualVector, Geometry, Point};
use crate::losses::{Loss, LossSequence};

/// Iterations of the projected-subgradient fallback.
pub const FALLBACK_ITERATIONS: usize = 10_000;

pub const TIE_NOTE: &str = "all comparators tie on linearized regret";

#[derive(Debug, Clone, PartialEq)]
pub struct Hindsight {
    pub point: Point,
    /// `Σ f_t(point)`.
    pub value: f64,
    /// Certified suboptimality gap; zero for closed forms, `None` when no
    /// certificate is available.
    pub gap: Option<f64>,
    pub method: &'static str,
    pub note: Option<String>,
}

/// `Σ f_t` as `½S‖x‖² − ⟨b, x⟩ + c₀`; every loss kind is affine or an
/// isotropic quadratic.
#[derive(Debug, Clone, PartialEq)]
struct Aggregate {
    s: f64,
    b: Vec<f64>,
    c0: f64,
}

impl Aggregate {
    fn of(losses: &[Loss], dim: usize) -> Self {
        let mut a = Aggregate { s: 0.0, b: vec![0.0; dim], c0: 0.0 };
        for l in losses {
            match l {
                Loss::Linear(g) => a.b.iter_mut().zip(&g.0).for_each(|(b, g)| *b -= g),
                Loss::Trace { offset, gradient } => {
                    a.c0 += offset;
                    a.b.iter_mut().zip(&gradient.0).for_each(|(b, g)| *b -= g);
                }
                Loss::Quadratic { center, scale } => {
                    a.s += scale;
                    a.b.iter_mut().zip(center).for_each(|(b, c)| *b += scale * c);
                    a.c0 += 0.5 * scale * dot(center, center);
                }
            }
        }
        a
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.s * dot(x, x) - dot(&self.b, x) + self.c0
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.b).map(|(x, b)| self.s * x - b).collect()
    }
}

/// Minimizer of `Σ f_t` over the feasible set.
///
/// Linear losses use the closed-form minimizer of `⟨Σg, ·⟩` (ball:
/// `−R·Σg/‖Σg‖`, simplex: smallest-index minimizing vertex, box: per-coordinate
/// extreme, `Σg = 0`: `Π(0)` with a note). Other losses use projected
/// subgradient descent with a Frank–Wolfe certificate on the gap. On an
/// unbounded set only strongly convex sums have a minimizer; it is returned
/// in closed form.
pub fn hindsight_comparator(losses: &LossSequence, geom: &Geometry) -> crate::Result<Hindsight> {
    let agg = Aggregate::of(&losses.losses, geom.dim);
    let finish = |point: Point, gap, method, note| {
        let value = losses.losses.iter().map(|l| l.value(&point)).sum();
        Hindsight { point, value, gap, method, note }
    };
    if agg.s == 0.0 {
        let c = DualVector(agg.b.iter().map(|b| -b).collect());
        let note = c.0.iter().all(|v| *v == 0.0).then(|| TIE_NOTE.to_string());
        return match geom.linear_minimizer(&c) {
            Some(p) => Ok(finish(p, Some(0.0), "closed_form", note)),
            None => Err(crate::Error::Config(
                "linear losses have no minimizer on an unbounded set; give a comparator point or radius".into(),
            )),
        };
    }
    if geom.is_free() {
        let p = agg.b.iter().map(|b| b / agg.s).collect();
        return Ok(finish(Point(p), Some(0.0), "closed_form", None));
    }
    let (p, gap) = projected_subgradient(&agg, geom, FALLBACK_ITERATIONS);
    Ok(finish(p, Some(gap), "projected_subgradient", None))
}

/// The hindsight minimizer over the ball of radius `radius` around `center`.
pub fn hindsight_in_ball(losses: &LossSequence, center: &Point, radius: f64) -> crate::Result<Hindsight> {
    let dim = center.dim();
    let ball = Geometry::ball(dim, radius)?;
    let shifted: Vec<Loss> = losses
        .losses
        .iter()
        .map(|l| match l {
            Loss::Quadratic { center: c, scale } => {
                Loss::Quadratic { center: c.iter().zip(&center.0).map(|(a, b)| a - b).collect(), scale: *scale }
            }
            other => other.clone(),
        })
        .collect();
    let inner = hindsight_comparator(&LossSequence::new(shifted, losses.gbound), &ball)?;
    let point = Point(inner.point.0.iter().zip(&center.0).map(|(a, b)| a + b).collect());
    let value = losses.losses.iter().map(|l| l.value(&point)).sum();
    Ok(Hindsight { point, value, ..inner })
}

fn projected_subgradient(agg: &Aggregate, geom: &Geometry, iters: usize) -> (Point, f64) {
    let diameter = geom.diameter().unwrap_or(1.0);
    let mut x = geom.prior();
    let mut best = (agg.value(&x.0), x.clone());
    let mut lower = f64::NEG_INFINITY;
    for k in 0..iters {
        let g = agg.gradient(&x.0);
        let fx = agg.value(&x.0);
        if fx < best.0 {
            best = (fx, x.clone());
        }
        if let Some(v) = geom.linear_minimizer(&DualVector(g.clone())) {
            let dir: Vec<f64> = v.0.iter().zip(&x.0).map(|(v, x)| v - x).collect();
            lower = lower.max(fx + dot(&g, &dir));
        }
        let gn = norm2(&g);
        if gn == 0.0 || best.0 - lower <= 0.0 {
            break;
        }
        let step = if agg.s > 0.0 { 1.0 / agg.s } else { diameter / (gn * ((k + 1) as f64).sqrt()) };
        let y: Vec<f64> = x.0.iter().zip(&g).map(|(x, g)| x - step * g).collect();
        x = geom.project(&y);
    }
    let fx = agg.value(&x.0);
    if fx < best.0 {
        best = (fx, x);
    }
    (best.1, (best.0 - lower).max(0.0))
}
