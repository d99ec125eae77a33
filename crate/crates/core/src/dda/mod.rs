//! Delayed dual averaging for one stream of predictions.
//!
//! At each time the active agent plays `x_t = Π(−η_t Σ_{s∈S_t} g_s)`, where
//! `S_t` holds the feedback it has received so far. The runner replays a
//! [`Timeline`] event by event: first every delivery due at `t`, then the play.
//! Dual sums are always accumulated in ascending stamp order, so the
//! prediction depends only on which gradients are used, not on the order in
//! which they arrived.

mod bounds;
mod rate;

pub use bounds::{stream_bound, tuned_constant_rate};
pub use rate::{LagTracker, RatePolicy, RateQuery, RateState};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{dot, sub, DualVector, Geometry, Point};
use crate::losses::LossSequence;
use crate::schedule::{Availability, Timeline, NEVER};

/// Quantities relayed alongside a gradient: `|S_s|` and `Σ_{r∈S_s}‖g_r‖*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordMeta {
    pub used_count: usize,
    pub used_norm_sum: f64,
}

/// One feedback item.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientRecord {
    pub stamp: usize,
    pub producer: usize,
    pub grad: DualVector,
    pub norm: f64,
    pub meta: Option<RecordMeta>,
}

/// Gradients received by one agent, keyed by stamp.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearnerPool {
    records: BTreeMap<usize, GradientRecord>,
}

impl LearnerPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, rec: GradientRecord) -> Result<()> {
        if self.records.contains_key(&rec.stamp) {
            return Err(Error::Internal(format!("feedback {} delivered twice", rec.stamp)));
        }
        self.records.insert(rec.stamp, rec);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, stamp: usize) -> Option<&GradientRecord> {
        self.records.get(&stamp)
    }

    pub fn stamps(&self) -> Vec<usize> {
        self.records.keys().copied().collect()
    }

    pub fn records(&self) -> impl Iterator<Item = &GradientRecord> {
        self.records.values()
    }

    /// `Σ_{s∈set} g_s`, summed in ascending stamp order.
    pub fn dual_sum(&self, set: &[usize], dim: usize) -> Result<DualVector> {
        let mut ordered = set.to_vec();
        ordered.sort_unstable();
        let mut acc = DualVector::zeros(dim);
        for s in ordered {
            let rec = self
                .records
                .get(&s)
                .ok_or_else(|| Error::Internal(format!("stamp {s} is used but not in the pool")))?;
            acc.add_assign(&rec.grad);
        }
        Ok(acc)
    }

    pub fn norm_sum(&self, set: &[usize]) -> f64 {
        set.iter().filter_map(|s| self.records.get(s)).map(|r| r.norm).sum()
    }
}

/// `Π(−η Σ_{s∈S} g_s)`.
pub fn dda_predict(pool: &LearnerPool, set: &[usize], eta: f64, geom: &Geometry) -> Result<Point> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Config(format!("learning rate must be positive and finite, got {eta}")));
    }
    let sum = pool.dual_sum(set, geom.dim)?;
    Ok(geom.mirror_map(&sum.scaled(-eta)))
}

/// Which received gradients an agent actually uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Usage {
    #[default]
    AllReceived,
    /// Hold back gradients until each used one was computed with fewer
    /// gradients than the current play.
    DeferByCount,
}

/// The largest `U ⊆ pool` with `|S_r| < |U|` for every `r ∈ U`.
pub fn deferred_usage(pool: &LearnerPool) -> Vec<usize> {
    let counts: Vec<usize> = pool.records().map(|r| r.meta.map_or(0, |m| m.used_count)).collect();
    let below = |m: usize| counts.iter().filter(|c| **c < m).count();
    let m = (0..=counts.len()).rev().find(|m| below(*m) >= *m).unwrap_or(0);
    pool.records()
        .filter(|r| r.meta.map_or(0, |m| m.used_count) < m)
        .map(|r| r.stamp)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretLedger {
    /// `Σ ℓ_t(x_t) − ℓ_t(p)`.
    pub actual: f64,
    /// `Σ ⟨g_t, x_t − p⟩`.
    pub linearized: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamStep {
    pub t: usize,
    pub stamp: usize,
    pub agent: usize,
    pub x: Point,
    pub loss: f64,
    pub comparator_loss: f64,
    pub grad: DualVector,
    pub norm: f64,
    pub eta: f64,
    pub lambda_hat: Option<f64>,
    pub rho: Option<i64>,
}

#[derive(Debug, Clone)]
pub struct StreamConfig<'a> {
    pub geometry: &'a Geometry,
    pub losses: &'a LossSequence,
    pub timeline: &'a Timeline,
    pub policy: RatePolicy,
    pub usage: Usage,
    pub comparator: &'a Point,
}

#[derive(Debug, Clone)]
pub struct StreamRun {
    pub steps: Vec<StreamStep>,
    /// The sets actually used at each play.
    pub availability: Availability,
    pub ledger: RegretLedger,
    pub policy: RatePolicy,
    pub comparator: Point,
    /// `h(p)` of the comparator.
    pub h_comparator: f64,
}

impl StreamRun {
    pub fn etas(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.eta).collect()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.norm).collect()
    }

    /// Cumulative actual regret after each step.
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

    /// Prediction after the horizon, once every gradient that ever reaches
    /// `agent` has been delivered: `Π(−η Σ g_s)` in ascending stamp order.
    pub fn final_prediction(&self, tl: &Timeline, agent: usize, eta: f64, geom: &Geometry) -> Point {
        let mut acc = DualVector::zeros(geom.dim);
        for step in &self.steps {
            if tl.arrival(agent, step.stamp) != NEVER {
                acc.add_assign(&step.grad);
            }
        }
        geom.mirror_map(&acc.scaled(-eta))
    }
}

fn check_compatibility(cfg: &StreamConfig, tl_avail: &Availability) -> Result<()> {
    let tl = cfg.timeline;
    if !tl.is_single_active() {
        return Err(Error::Config(
            "this timeline has several agents active at once; use the network runner".into(),
        ));
    }
    let defer = cfg.usage == Usage::DeferByCount;
    match cfg.policy {
        RatePolicy::AdaDelayO { .. } | RatePolicy::AdaDelayOPlus { .. } => {
            if defer {
                return Err(Error::Config(format!("{} cannot be combined with deferred usage", cfg.policy.name())));
            }
            if !tl_avail.is_time_monotone() {
                return Err(Error::Config(format!(
                    "{} needs feedback that is monotone in time",
                    cfg.policy.name()
                )));
            }
        }
        RatePolicy::AdaDelayDist { .. } => {
            if defer {
                return Err(Error::Config("adadelay_dist cannot be combined with deferred usage".into()));
            }
            if !tl.satisfies_in_order(tl_avail) {
                return Err(Error::Config(
                    "adadelay_dist needs in-order delivery: some agent receives a gradient before one it used"
                        .into(),
                ));
            }
        }
        RatePolicy::CardDecreasing { .. } if !defer => {
            if let Some((s, k)) = tl_avail.card_order_violation() {
                return Err(Error::Config(format!(
                    "card_decreasing: play {k} uses gradient {s} computed with at least as many gradients; \
                     enable deferred usage"
                )));
            }
        }
        _ => {}
    }
    Ok(())
}

/// Supplies learning rates to the replay engine.
pub trait RateSource {
    fn receive(&mut self, agent: usize, rec: &GradientRecord) -> Result<()>;
    /// Rate for the play with stamp `k` at time `t` by `agent`, using `used` gradients.
    fn query(&mut self, k: usize, t: usize, agent: usize, used: usize) -> Result<RateQuery>;
}

impl RateSource for RateState {
    fn receive(&mut self, agent: usize, rec: &GradientRecord) -> Result<()> {
        self.on_receive(agent, rec)
    }

    fn query(&mut self, _k: usize, t: usize, agent: usize, used: usize) -> Result<RateQuery> {
        RateState::query(self, t, agent, used)
    }
}

/// Output of the replay engine, one entry per stamp.
#[derive(Debug, Clone)]
pub struct Replay {
    pub steps: Vec<StreamStep>,
    pub availability: Availability,
    pub ledger: RegretLedger,
}

/// Event loop shared by every dual-averaging runner: at each time, deliver
/// everything due, then let every active agent play in stamp order.
/// `losses` is indexed by stamp.
pub fn replay(
    geom: &Geometry,
    losses: &LossSequence,
    tl: &Timeline,
    usage: Usage,
    comparator: &Point,
    rates: &mut dyn RateSource,
) -> Result<Replay> {
    let m = tl.num_slots();
    if losses.len() != m {
        return Err(Error::Config(format!("{} losses for {} plays", losses.len(), m)));
    }
    if comparator.dim() != geom.dim || !geom.is_feasible(comparator) {
        return Err(Error::Config("comparator is not a feasible point of the geometry".into()));
    }
    let horizon = tl.horizon();
    let mut deliveries: Vec<Vec<(usize, usize)>> = vec![Vec::new(); horizon + 1];
    for agent in 0..tl.num_agents() {
        for s in 1..=m {
            let a = tl.arrival(agent, s);
            if a <= horizon {
                deliveries[a].push((agent, s));
            }
        }
    }

    let mut pools = vec![LearnerPool::new(); tl.num_agents()];
    let mut records: Vec<GradientRecord> = Vec::with_capacity(m);
    let mut steps = Vec::with_capacity(m);
    let mut used_sets = Vec::with_capacity(m);
    let mut ledger = RegretLedger { actual: 0.0, linearized: 0.0 };

    for t in 1..=horizon {
        for &(agent, s) in &deliveries[t] {
            let rec = records[s - 1].clone();
            rates.receive(agent, &rec)?;
            pools[agent].insert(rec)?;
        }
        for k in tl.stamps_at(t) {
            let agent = tl.slot(k).agent;
            let pool = &pools[agent];
            let used = match usage {
                Usage::AllReceived => pool.stamps(),
                Usage::DeferByCount => deferred_usage(pool),
            };
            let q = rates.query(k, t, agent, used.len())?;
            let x = dda_predict(pool, &used, q.eta, geom)?;
            let loss = losses.get(k);
            let grad = loss.subgradient(&x);
            let norm = geom.dual_norm(&grad);
            losses.check_emitted(k, norm)?;
            let value = loss.value(&x);
            let comparator_loss = loss.value(comparator);
            ledger.actual += value - comparator_loss;
            ledger.linearized += dot(&grad.0, &sub(&x.0, &comparator.0));

            let meta = RecordMeta { used_count: used.len(), used_norm_sum: pool.norm_sum(&used) };
            records.push(GradientRecord { stamp: k, producer: agent, grad: grad.clone(), norm, meta: Some(meta) });
            steps.push(StreamStep {
                t,
                stamp: k,
                agent,
                x,
                loss: value,
                comparator_loss,
                grad,
                norm,
                eta: q.eta,
                lambda_hat: q.lambda_hat,
                rho: q.rho,
            });
            used_sets.push(used);
        }
    }
    let availability = Availability::new(tl.slots().to_vec(), used_sets, horizon, tl.has_lost_feedback());
    Ok(Replay { steps, availability, ledger })
}

/// Replays a single-active timeline with delayed dual averaging.
pub fn run_stream(cfg: &StreamConfig) -> Result<StreamRun> {
    let tl_avail = cfg.timeline.availability();
    check_compatibility(cfg, &tl_avail)?;
    let h_p = cfg.geometry.regularizer_value(cfg.comparator)?;
    let mut rates = RateState::new(cfg.policy.clone(), cfg.timeline.num_agents())?;
    let mut out = replay(cfg.geometry, cfg.losses, cfg.timeline, cfg.usage, cfg.comparator, &mut rates)?;
    if !cfg.policy.uses_lag() {
        for s in &mut out.steps {
            s.lambda_hat = None;
        }
    }
    Ok(StreamRun {
        steps: out.steps,
        availability: out.availability,
        ledger: out.ledger,
        policy: cfg.policy.clone(),
        comparator: cfg.comparator.clone(),
        h_comparator: h_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::Loss;

    fn pool_with(grads: &[(usize, Vec<f64>)]) -> LearnerPool {
        let mut p = LearnerPool::new();
        for (s, g) in grads {
            p.insert(GradientRecord { stamp: *s, producer: 0, grad: DualVector(g.clone()), norm: 0.0, meta: None })
                .unwrap();
        }
        p
    }

    #[test]
    fn predict_examples() {
        let free = Geometry::free(2).unwrap();
        let pool = pool_with(&[(1, vec![1.0, 0.0]), (2, vec![1.0, 0.0])]);
        assert_eq!(dda_predict(&pool, &[], 0.5, &free).unwrap().0, vec![0.0, 0.0]);
        assert_eq!(dda_predict(&pool, &[1, 2], 0.5, &free).unwrap().0, vec![-1.0, 0.0]);
        let ball = Geometry::ball(2, 1.0).unwrap();
        let oracle = ball.mirror_map(&DualVector(vec![-1.0, 0.0]));
        assert_eq!(dda_predict(&pool, &[1, 2], 0.5, &ball).unwrap(), oracle);
        let simplex = Geometry::simplex(3).unwrap();
        assert_eq!(dda_predict(&LearnerPool::new(), &[], 1.0, &simplex).unwrap(), simplex.prior());
        assert!(matches!(dda_predict(&pool, &[3], 0.5, &free), Err(Error::Internal(_))));
    }

    #[test]
    fn deferred_usage_picks_largest_consistent_set() {
        let mut p = LearnerPool::new();
        for (s, c) in [(1, 0), (2, 0), (3, 5)] {
            p.insert(GradientRecord {
                stamp: s,
                producer: 0,
                grad: DualVector(vec![0.0]),
                norm: 0.0,
                meta: Some(RecordMeta { used_count: c, used_norm_sum: 0.0 }),
            })
            .unwrap();
        }
        assert_eq!(deferred_usage(&p), vec![1, 2]);
    }

    #[test]
    fn undelayed_constant_rate_matches_plain_dual_averaging() {
        let geom = Geometry::free(1).unwrap();
        let g = [0.5, -1.0, 0.25, 1.0];
        let losses = LossSequence::scalar(&g);
        let tl = Timeline::constant(4, 0);
        let p = Point(vec![0.0]);
        let run = run_stream(&StreamConfig {
            geometry: &geom,
            losses: &losses,
            timeline: &tl,
            policy: RatePolicy::Constant { eta: 0.1 },
            usage: Usage::AllReceived,
            comparator: &p,
        })
        .unwrap();
        let mut sum = 0.0;
        for (t, step) in run.steps.iter().enumerate() {
            assert_eq!(step.x.0[0], -0.1 * sum);
            sum += g[t];
        }
    }

    #[test]
    fn incompatible_policy_rejected() {
        let geom = Geometry::ball(1, 1.0).unwrap();
        let losses = LossSequence::new(vec![Loss::scalar(1.0); 4], 1.0);
        // Two agents whose feedback crosses: availability is not monotone in time.
        let tl = Timeline::pooled_cyclic(2, 2, 4).unwrap();
        let p = Point(vec![0.0]);
        let cfg = StreamConfig {
            geometry: &geom,
            losses: &losses,
            timeline: &tl,
            policy: RatePolicy::AdaDelayO { r: 1.0, g: 1.0, tau: Some(3) },
            usage: Usage::AllReceived,
            comparator: &p,
        };
        assert!(matches!(run_stream(&cfg), Err(Error::Config(_))));
    }
}
