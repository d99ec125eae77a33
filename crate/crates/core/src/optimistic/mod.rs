//! Delayed optimistic dual averaging on an unconstrained Euclidean space.
//!
//! The base point `x_t = x_1 − η_t Σ_{s∈S_t} g_s` is never played. The agent
//! plays the extrapolated point `x_{t+½} = x_t − η̃_t ĝ_t`, where the guess `ĝ_t`
//! only uses feedback in `S_t`. Half-integer times are represented by the
//! pair (base, played) stored in each [`OptimisticStep`].

mod sequences;

pub use sequences::{
    gen_lb_seq_periods, gen_lb_seq_zero_one, gen_repeat_seq, lb_proof_length, sign_adversary, variation,
    AdversaryOutcome,
};

use std::collections::BTreeMap;

use crate::bounds::{BoundCheck, BoundId};
use crate::error::{Error, Result};
use crate::geometry::{dot, norm2, sub, DualVector, Point};
use crate::losses::LossSequence;
use crate::schedule::Timeline;

/// How the optimistic guess `ĝ_t` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuessPolicy {
    Zero,
    /// `g_{t−τ−1}` when it has been received, zero otherwise.
    LastUniform { tau: usize },
    /// The field of the most recent received stamp, evaluated at `x_t`.
    FieldGlobal,
    /// The field of the agent's own most recent received stamp, evaluated at `x_t`.
    FieldLocal,
}

impl GuessPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            GuessPolicy::Zero => "zero",
            GuessPolicy::LastUniform { .. } => "last_uniform",
            GuessPolicy::FieldGlobal => "field_global",
            GuessPolicy::FieldLocal => "field_local",
        }
    }
}

/// Learning-rate pair policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimisticRate {
    /// Constant `(η, η̃)`. With `strict`, `η̃ ≥ (2τ+1)η` is enforced for the
    /// measured delay bound `τ`.
    Pair { eta: f64, eta_tilde: f64, strict: bool },
    /// Constant `η` and `η̃_t = d_t η` with `d_t = |U_t| + |{s : t ∈ U_s}| + 1`.
    Relaxed { eta: f64 },
    /// AdaGrad-style pair driven by relayed field deviations.
    Adaptive { r: f64, g: f64, l: f64, tau: usize },
}

impl OptimisticRate {
    pub fn name(&self) -> &'static str {
        match self {
            OptimisticRate::Pair { .. } => "pair",
            OptimisticRate::Relaxed { .. } => "relaxed",
            OptimisticRate::Adaptive { .. } => "adaptive",
        }
    }
}

/// `(η, η̃) = (R/√((2τ+1)V̄), (2τ+1)η)`.
pub fn lr_pair_constant(r: f64, tau: usize, vbar: f64) -> Result<(f64, f64)> {
    if !(vbar > 0.0) {
        return Err(Error::Degenerate(format!("the variation bound must be positive, got {vbar}")));
    }
    let c = (2 * tau + 1) as f64;
    let eta = r / (c * vbar).sqrt();
    Ok((eta, c * eta))
}

/// The adaptive pair for a deviation sum `a = Σ_{s∈S_t}‖V_s(x_s) − V̂_s(x_s)‖²`.
pub fn lr_pair_adaptive(a: f64, r: f64, g: f64, l: f64, tau: usize) -> (f64, f64) {
    let c = 4.0 * tau as f64 + 1.0;
    let tau = tau as f64;
    let cap = 1.0 / (2f64.sqrt() * l);
    let eta_tilde = (r * c.sqrt() / (2.0 * (a + 4.0 * g * g * (tau + 1.0)).sqrt())).min(cap);
    let eta = (r / (2.0 * (c * (a + 4.0 * g * g * (3.0 * tau + 1.0))).sqrt())).min(cap / c);
    (eta, eta_tilde)
}

/// `(x_t, x_{t+½})` for a given dual sum and guess.
pub fn doda_step(x_start: &Point, sum: &DualVector, eta: f64, eta_tilde: f64, guess: &DualVector) -> (Point, Point) {
    let base: Vec<f64> = x_start.0.iter().zip(&sum.0).map(|(x, g)| x - eta * g).collect();
    let played: Vec<f64> = base.iter().zip(&guess.0).map(|(x, g)| x - eta_tilde * g).collect();
    (Point(base), Point(played))
}

#[derive(Debug, Clone, PartialEq)]
struct Feedback {
    agent: usize,
    grad: DualVector,
    deviation: f64,
}

/// Received feedback of one agent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimisticPool {
    items: BTreeMap<usize, Feedback>,
    /// Running sum, kept equal to the ascending-stamp sum.
    sum: Option<DualVector>,
}

impl OptimisticPool {
    fn insert(&mut self, stamp: usize, f: Feedback) {
        let appended = self.items.keys().next_back().is_none_or(|last| *last < stamp);
        match (&mut self.sum, appended) {
            (Some(acc), true) => acc.add_assign(&f.grad),
            _ => self.sum = None,
        }
        self.items.insert(stamp, f);
    }

    fn sum(&mut self, dim: usize) -> DualVector {
        if self.sum.is_none() {
            let mut acc = DualVector::zeros(dim);
            for f in self.items.values() {
                acc.add_assign(&f.grad);
            }
            self.sum = Some(acc);
        }
        self.sum.clone().unwrap_or_else(|| DualVector::zeros(dim))
    }

    fn deviation_sum(&self) -> f64 {
        self.items.values().map(|f| f.deviation).sum()
    }

    pub fn stamps(&self) -> Vec<usize> {
        self.items.keys().copied().collect()
    }
}

#[derive(Debug, Clone)]
pub struct OptimisticConfig<'a> {
    pub dim: usize,
    pub x_start: Point,
    pub losses: &'a LossSequence,
    pub timeline: &'a Timeline,
    pub guess: GuessPolicy,
    pub rate: OptimisticRate,
    pub comparator: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticStep {
    pub t: usize,
    pub agent: usize,
    pub base: Point,
    pub played: Point,
    pub guess: DualVector,
    pub grad: DualVector,
    pub eta: f64,
    pub eta_tilde: f64,
    pub loss: f64,
    pub comparator_loss: f64,
    /// `‖V_t(x_t) − ĝ_t‖²`: the deviation of the guess at the base point.
    pub deviation: f64,
    /// `‖V_t(x_t)‖`, `‖ĝ_t‖`.
    pub field_norm: f64,
    pub guess_norm: f64,
}

#[derive(Debug, Clone)]
pub struct OptimisticRun {
    pub steps: Vec<OptimisticStep>,
    /// `|S_t|` of every play.
    pub used_counts: Vec<usize>,
    pub regret: f64,
    pub x_start: Point,
    pub comparator: Point,
    pub rate: OptimisticRate,
    pub guess: GuessPolicy,
    /// Measured delay bound of the timeline.
    pub tau: usize,
    /// Largest smoothness constant among the losses.
    pub smoothness: f64,
    /// Whether in-order delivery was checked and holds (adaptive rates only).
    pub in_order: bool,
}

impl OptimisticRun {
    pub fn cumulative_regret(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.steps
            .iter()
            .map(|s| {
                acc += s.loss - s.comparator_loss;
                acc
            })
            .collect()
    }

    /// `Σ ‖g_t − ĝ_t‖² − ‖ĝ_t‖²` term by term.
    pub fn guess_terms(&self) -> Vec<f64> {
        self.steps
            .iter()
            .map(|s| {
                let e = norm2(&sub(&s.grad.0, &s.guess.0));
                e * e - s.guess_norm * s.guess_norm
            })
            .collect()
    }

    /// Steps where `‖g − ĝ‖² − ‖ĝ‖² ≤ 2‖V_t(x_t) − ĝ‖²` fails by more than `tol`.
    pub fn field_reduction_violations(&self, tol: f64) -> Vec<usize> {
        self.guess_terms()
            .iter()
            .zip(&self.steps)
            .filter(|(lhs, s)| **lhs > 2.0 * s.deviation + tol)
            .map(|(_, s)| s.t)
            .collect()
    }
}

/// Runs DODA on a single-active timeline; losses are indexed by time.
pub fn run_optimistic(cfg: &OptimisticConfig) -> Result<OptimisticRun> {
    let tl = cfg.timeline;
    let dim = cfg.dim;
    if !tl.is_single_active() {
        return Err(Error::Unsupported("the optimistic runner needs one active agent per time".into()));
    }
    let horizon = tl.horizon();
    if cfg.losses.len() != horizon {
        return Err(Error::Config(format!("{} losses for a horizon of {horizon}", cfg.losses.len())));
    }
    if cfg.x_start.dim() != dim || cfg.comparator.dim() != dim || cfg.losses.losses.iter().any(|l| l.dim() != dim) {
        return Err(Error::Config(format!("all points and losses must have dimension {dim}")));
    }
    let tau = tl.max_delay();
    let in_order = matches!(cfg.rate, OptimisticRate::Adaptive { .. }) && tl.satisfies_in_order(&tl.availability());
    match cfg.rate {
        OptimisticRate::Pair { eta, eta_tilde, strict } => {
            if !(eta > 0.0 && eta_tilde >= 0.0) {
                return Err(Error::Config("the rate pair needs eta > 0 and eta_tilde >= 0".into()));
            }
            if strict && eta_tilde < (2 * tau + 1) as f64 * eta * (1.0 - 1e-12) {
                return Err(Error::Config(format!(
                    "eta_tilde={eta_tilde} is below (2tau+1)*eta={} for the measured delay bound tau={tau}",
                    (2 * tau + 1) as f64 * eta
                )));
            }
        }
        OptimisticRate::Relaxed { eta } if !(eta > 0.0) => {
            return Err(Error::Config("the relaxed rate needs eta > 0".into()))
        }
        OptimisticRate::Adaptive { r, g, l, .. } => {
            if !(r > 0.0 && g > 0.0 && l > 0.0) {
                return Err(Error::Config("the adaptive pair needs R, G, L > 0".into()));
            }
            if !in_order {
                return Err(Error::Config("the adaptive pair needs in-order delivery".into()));
            }
        }
        _ => {}
    }
    let relaxed = match cfg.rate {
        OptimisticRate::Relaxed { .. } => tl.availability().relaxed_counts(),
        _ => Vec::new(),
    };

    let mut deliveries: Vec<Vec<(usize, usize)>> = vec![Vec::new(); horizon + 1];
    for agent in 0..tl.num_agents() {
        for s in 1..=horizon {
            let a = tl.arrival(agent, s);
            if a <= horizon {
                deliveries[a].push((agent, s));
            }
        }
    }
    let mut pools = vec![OptimisticPool::default(); tl.num_agents()];
    let mut produced: Vec<Feedback> = Vec::with_capacity(horizon);
    let mut steps = Vec::with_capacity(horizon);
    let mut used_counts = Vec::with_capacity(horizon);
    let mut regret = 0.0;

    for t in 1..=horizon {
        for &(agent, s) in &deliveries[t] {
            pools[agent].insert(s, produced[s - 1].clone());
        }
        let agent = tl.slot(t).agent;
        let sum = pools[agent].sum(dim);
        let pool = &pools[agent];
        let (eta, eta_tilde) = match cfg.rate {
            OptimisticRate::Pair { eta, eta_tilde, .. } => (eta, eta_tilde),
            OptimisticRate::Relaxed { eta } => (eta, relaxed[t - 1] as f64 * eta),
            OptimisticRate::Adaptive { r, g, l, tau } => lr_pair_adaptive(pool.deviation_sum(), r, g, l, tau),
        };
        let base: Vec<f64> = cfg.x_start.0.iter().zip(&sum.0).map(|(x, g)| x - eta * g).collect();
        let base = Point(base);
        let guess = match cfg.guess {
            GuessPolicy::Zero => DualVector::zeros(dim),
            GuessPolicy::LastUniform { tau } => match t.checked_sub(tau + 1) {
                Some(s) if s >= 1 => pool.items.get(&s).map_or_else(|| DualVector::zeros(dim), |f| f.grad.clone()),
                _ => DualVector::zeros(dim),
            },
            GuessPolicy::FieldGlobal => match pool.items.keys().next_back() {
                Some(s) => cfg.losses.get(*s).subgradient(&base),
                None => DualVector::zeros(dim),
            },
            GuessPolicy::FieldLocal => match pool.items.iter().rev().find(|(_, f)| f.agent == agent) {
                Some((s, _)) => cfg.losses.get(*s).subgradient(&base),
                None => DualVector::zeros(dim),
            },
        };
        let (_, played) = doda_step(&cfg.x_start, &sum, eta, eta_tilde, &guess);
        let loss = cfg.losses.get(t);
        let grad = loss.subgradient(&played);
        let field = loss.subgradient(&base);
        let dev = norm2(&sub(&field.0, &guess.0));
        let value = loss.value(&played);
        let comparator_loss = loss.value(&cfg.comparator);
        regret += value - comparator_loss;
        produced.push(Feedback { agent, grad: grad.clone(), deviation: dev * dev });
        used_counts.push(pool.items.len());
        steps.push(OptimisticStep {
            t,
            agent,
            base,
            guess_norm: norm2(&guess.0),
            field_norm: norm2(&field.0),
            played,
            guess,
            grad,
            eta,
            eta_tilde,
            loss: value,
            comparator_loss,
            deviation: dev * dev,
        });
    }
    let smoothness = cfg.losses.losses.iter().fold(0.0f64, |m, l| m.max(l.smoothness()));
    Ok(OptimisticRun {
        steps,
        used_counts,
        regret,
        x_start: cfg.x_start.clone(),
        comparator: cfg.comparator.clone(),
        rate: cfg.rate,
        guess: cfg.guess,
        tau,
        smoothness,
        in_order,
    })
}

fn not_applicable(id: BoundId, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("bound {id} does not apply to this run: {why}"))
}

fn check_scale_separation(id: BoundId, run: &OptimisticRun) -> Result<()> {
    let c = (2 * run.tau + 1) as f64;
    for w in run.steps.windows(2) {
        if w[1].eta > w[0].eta {
            return Err(not_applicable(id, format!("eta increases at t={}", w[1].t)));
        }
    }
    if let OptimisticRate::Relaxed { .. } = run.rate {
        return Ok(());
    }
    for s in &run.steps {
        if s.eta_tilde < c * s.eta * (1.0 - 1e-12) {
            return Err(not_applicable(id, format!("eta_tilde < (2tau+1)eta at t={}", s.t)));
        }
    }
    Ok(())
}

/// Evaluates one optimistic bound; `r` is the distance bound for the variation
/// and adaptive formulas, `g` the declared field bound.
pub fn optimistic_bound(run: &OptimisticRun, id: BoundId, r: f64, g: f64) -> Result<BoundCheck> {
    let dist = norm2(&sub(&run.comparator.0, &run.x_start.0));
    let last = run.steps.last().ok_or_else(|| Error::Internal("empty run".into()))?;
    let head = dist * dist / (2.0 * last.eta);
    match id {
        BoundId::Optimistic => {
            check_scale_separation(id, run)?;
            let terms = run.guess_terms();
            let tail: f64 = run.steps.iter().zip(&terms).map(|(s, e)| 0.5 * s.eta_tilde * e).sum();
            Ok(BoundCheck::new(id, run.regret, head + tail))
        }
        BoundId::OptimisticField => {
            check_scale_separation(id, run)?;
            let l = run.smoothness;
            if let Some(s) = run.steps.iter().find(|s| 2.0 * s.eta_tilde * s.eta_tilde * l * l > 1.0) {
                return Err(not_applicable(id, format!("2 eta_tilde^2 L^2 > 1 at t={}", s.t)));
            }
            if !matches!(run.guess, GuessPolicy::FieldGlobal | GuessPolicy::FieldLocal) {
                return Err(not_applicable(id, "needs a field guess"));
            }
            let tail: f64 = run.steps.iter().map(|s| s.eta_tilde * s.deviation).sum();
            Ok(BoundCheck::new(id, run.regret, head + tail))
        }
        BoundId::OptimisticVariation => {
            let OptimisticRate::Pair { eta, eta_tilde, .. } = run.rate else {
                return Err(not_applicable(id, "needs a constant rate pair"));
            };
            let GuessPolicy::LastUniform { tau } = run.guess else {
                return Err(not_applicable(id, "needs the last-uniform guess"));
            };
            if run.tau > tau {
                return Err(not_applicable(id, format!("measured delay {} exceeds tau={tau}", run.tau)));
            }
            if dist > r * (1.0 + 1e-12) {
                return Err(not_applicable(id, "the comparator is farther than R from the start"));
            }
            let c = (2 * tau + 1) as f64;
            if (eta_tilde - c * eta).abs() > 1e-12 * eta_tilde {
                return Err(not_applicable(id, "eta_tilde is not (2tau+1)eta"));
            }
            let gradients = run.steps.iter().map(|s| crate::losses::Loss::Linear(s.grad.clone())).collect();
            let v = variation(&LossSequence::new(gradients, 0.0), tau + 1)?;
            let vbar = r * r / (c * eta * eta);
            if vbar < v * (1.0 - 1e-12) {
                return Err(not_applicable(id, format!("the rate is tuned for V={vbar} below the variation {v}")));
            }
            Ok(BoundCheck::new(id, run.regret, r * (c * vbar).sqrt()))
        }
        BoundId::OptimisticAdaptive => {
            let OptimisticRate::Adaptive { r: rr, g: gg, l, tau } = run.rate else {
                return Err(not_applicable(id, "needs the adaptive rate pair"));
            };
            if run.tau > tau {
                return Err(not_applicable(id, format!("measured delay {} exceeds tau={tau}", run.tau)));
            }
            if dist > rr * (1.0 + 1e-12) {
                return Err(not_applicable(id, "the comparator is farther than R from the start"));
            }
            if run.smoothness > l * (1.0 + 1e-12) {
                return Err(not_applicable(id, "a field is not L-Lipschitz"));
            }
            let worst = run.steps.iter().fold(0.0f64, |m, s| m.max(s.field_norm).max(s.guess_norm));
            if worst > gg * (1.0 + 1e-12) {
                return Err(not_applicable(id, format!("observed field norm {worst} exceeds G={gg}")));
            }
            let _ = (r, g);
            let c = 4.0 * tau as f64 + 1.0;
            let v: f64 = run.steps.iter().map(|s| s.deviation).sum();
            let rhs = (2f64.sqrt() * rr * rr * l * c)
                .max(2.0 * rr * (c * (v + 4.0 * gg * gg * (3.0 * tau as f64 + 1.0))).sqrt());
            Ok(BoundCheck::new(id, run.regret, rhs).with_floor(1e-6))
        }
        _ => Err(not_applicable(id, "not an optimistic bound")),
    }
}

/// Linearized regret `Σ⟨g_t, x_{t+½} − p⟩` of a run.
pub fn linearized_regret(run: &OptimisticRun) -> f64 {
    run.steps.iter().map(|s| dot(&s.grad.0, &sub(&s.played.0, &run.comparator.0))).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::Loss;

    fn scalar_cfg<'a>(losses: &'a LossSequence, tl: &'a Timeline, guess: GuessPolicy, rate: OptimisticRate) -> OptimisticConfig<'a> {
        OptimisticConfig {
            dim: 1,
            x_start: Point(vec![0.0]),
            losses,
            timeline: tl,
            guess,
            rate,
            comparator: Point(vec![0.0]),
        }
    }

    #[test]
    fn hand_replay() {
        let losses = LossSequence::scalar(&[1.0, 1.0, 1.0]);
        let tl = Timeline::constant(3, 0);
        let run = run_optimistic(&scalar_cfg(
            &losses,
            &tl,
            GuessPolicy::LastUniform { tau: 0 },
            OptimisticRate::Pair { eta: 0.1, eta_tilde: 0.1, strict: true },
        ))
        .unwrap();
        assert_eq!(run.steps[0].base.0, vec![0.0]);
        assert_eq!(run.steps[0].played.0, vec![0.0]);
        assert_eq!(run.steps[1].base.0, vec![-0.1]);
        assert_eq!(run.steps[1].played.0, vec![-0.2]);
    }

    #[test]
    fn pair_formulas() {
        assert_eq!(lr_pair_constant(1.0, 0, 4.0).unwrap(), (0.5, 0.5));
        let (eta, et) = lr_pair_constant(1.0, 1, 34.0).unwrap();
        assert!((eta - 1.0 / 102f64.sqrt()).abs() < 1e-15);
        assert!((eta - 0.099015).abs() < 1e-6);
        assert_eq!(et, 3.0 * eta);
        assert!(matches!(lr_pair_constant(1.0, 1, 0.0), Err(Error::Degenerate(_))));
        let (_, et) = lr_pair_adaptive(0.0, 1.0, 1.0, 1e-9, 0);
        assert_eq!(et, 0.25);
        let (eta, et) = lr_pair_adaptive(0.0, 1.0, 1.0, 10.0, 0);
        assert_eq!(et, 1.0 / (2f64.sqrt() * 10.0));
        assert_eq!(eta, 1.0 / (2f64.sqrt() * 10.0));
        let (eta, et) = lr_pair_adaptive(3.0, 1.0, 1.0, 1e-9, 2);
        assert!(et / eta >= 9.0);
    }

    #[test]
    fn strict_mode_rejects_single_rate() {
        let losses = LossSequence::scalar(&[1.0; 6]);
        let tl = Timeline::constant(6, 1);
        let rate = OptimisticRate::Pair { eta: 0.1, eta_tilde: 0.1, strict: true };
        assert!(matches!(
            run_optimistic(&scalar_cfg(&losses, &tl, GuessPolicy::Zero, rate)),
            Err(Error::Config(_))
        ));
        let rate = OptimisticRate::Pair { eta: 0.1, eta_tilde: 0.1, strict: false };
        assert!(run_optimistic(&scalar_cfg(&losses, &tl, GuessPolicy::Zero, rate)).is_ok());
    }

    #[test]
    fn zero_guess_matches_dual_averaging() {
        let losses = LossSequence::scalar(&[1.0, -0.5, 0.25, 0.75, -1.0]);
        let tl = Timeline::constant(5, 1);
        let run = run_optimistic(&scalar_cfg(
            &losses,
            &tl,
            GuessPolicy::Zero,
            OptimisticRate::Pair { eta: 0.2, eta_tilde: 0.6, strict: true },
        ))
        .unwrap();
        let geom = crate::geometry::Geometry::free(1).unwrap();
        let dda = crate::dda::run_stream(&crate::dda::StreamConfig {
            geometry: &geom,
            losses: &losses,
            timeline: &tl,
            policy: crate::dda::RatePolicy::Constant { eta: 0.2 },
            usage: crate::dda::Usage::AllReceived,
            comparator: &Point(vec![0.0]),
        })
        .unwrap();
        for (a, b) in run.steps.iter().zip(&dda.steps) {
            assert_eq!(a.played, b.x);
        }
        assert_eq!(run.regret, dda.ledger.actual);
    }

    #[test]
    fn field_guesses_use_available_stamps_only() {
        let losses = LossSequence::new(
            (0..4).map(|k| Loss::Quadratic { center: vec![k as f64 * 0.1], scale: 1.0 }).collect(),
            10.0,
        );
        let tl = Timeline::constant(4, 1);
        let run = run_optimistic(&OptimisticConfig {
            dim: 1,
            x_start: Point(vec![0.0]),
            losses: &losses,
            timeline: &tl,
            guess: GuessPolicy::FieldGlobal,
            rate: OptimisticRate::Pair { eta: 0.1, eta_tilde: 0.3, strict: true },
            comparator: Point(vec![0.0]),
        })
        .unwrap();
        assert_eq!(run.steps[1].guess_norm, 0.0);
        // At t = 3 only stamp 1 is available: ĝ = x_3 − c_1.
        let s = &run.steps[2];
        assert!((s.guess.0[0] - (s.base.0[0] - 0.0)).abs() < 1e-15);
    }
}
