//! Decentralized delayed dual averaging over open networks.
//!
//! Several agents may play at the same time. Every play gets a flattened
//! stamp `μ(i, t) = M_{t−1} + i`, which is exactly the stamp used by
//! [`Timeline`], so the network replay reuses the single-stream engine.

use crate::bounds::{BoundCheck, BoundId};
use crate::dda::{replay, GradientRecord, RateQuery, RateSource, StreamStep, Usage};
use crate::error::{Error, Result};
use crate::geometry::{sub, Geometry, Point};
use crate::losses::LossSequence;
use crate::schedule::{faithful_by_key, is_faithful, Availability, Timeline};

/// `R / (G·N_rms·√((2τ+1)T))`.
pub fn lr_global_fixed(r: f64, g: f64, n_rms: f64, tau: usize, horizon: usize) -> f64 {
    r / (g * n_rms * ((2 * tau + 1) as f64 * horizon as f64).sqrt())
}

/// `R / (G√((5τ+3)(|S| + (τ+1)N_max)·N_max))`.
pub fn lr_global_card(r: f64, g: f64, tau: usize, n_max: usize, used: usize) -> f64 {
    let tau = tau as f64;
    let n_max = n_max as f64;
    r / (g * ((5.0 * tau + 3.0) * (used as f64 + (tau + 1.0) * n_max) * n_max).sqrt())
}

/// Active-count statistics of a timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkShape {
    pub horizon: usize,
    /// `M = Σ_t N_t`.
    pub plays: usize,
    pub n_max: usize,
    /// `√((1/T)Σ N_t²)`.
    pub n_rms: f64,
}

impl NetworkShape {
    pub fn of(tl: &Timeline) -> Self {
        let horizon = tl.horizon();
        let counts: Vec<usize> = (1..=horizon).map(|t| tl.active_count(t)).collect();
        let sq: f64 = counts.iter().map(|n| (n * n) as f64).sum();
        NetworkShape {
            horizon,
            plays: counts.iter().sum(),
            n_max: counts.iter().copied().max().unwrap_or(0),
            n_rms: (sq / horizon as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkRate {
    Constant { eta: f64 },
    /// The fixed rate tuned with `N_rms`, `τ` and `T`.
    Fixed { r: f64, g: f64, tau: usize },
    /// The cardinality rate computed by each agent from its own pool size.
    Card { r: f64, g: f64, tau: usize },
}

impl NetworkRate {
    pub fn name(&self) -> &'static str {
        match self {
            NetworkRate::Constant { .. } => "constant",
            NetworkRate::Fixed { .. } => "network_fixed",
            NetworkRate::Card { .. } => "network_card",
        }
    }

    pub fn tau(&self) -> Option<usize> {
        match self {
            NetworkRate::Constant { .. } => None,
            NetworkRate::Fixed { tau, .. } | NetworkRate::Card { tau, .. } => Some(*tau),
        }
    }
}

struct NetworkRates {
    rate: NetworkRate,
    shape: NetworkShape,
}

impl RateSource for NetworkRates {
    fn receive(&mut self, _agent: usize, _rec: &GradientRecord) -> Result<()> {
        Ok(())
    }

    fn query(&mut self, _k: usize, _t: usize, _agent: usize, used: usize) -> Result<RateQuery> {
        let eta = match self.rate {
            NetworkRate::Constant { eta } => eta,
            NetworkRate::Fixed { r, g, tau } => lr_global_fixed(r, g, self.shape.n_rms, tau, self.shape.horizon),
            NetworkRate::Card { r, g, tau } => lr_global_card(r, g, tau, self.shape.n_max, used),
        };
        Ok(RateQuery { eta, lambda_hat: None, rho: None })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkRegret {
    /// `Σ_t Σ_i f_t^i(x_t^i) − f_t^i(p)`.
    pub effective: f64,
    /// `Σ_t Σ_i f_t^i(x_t^{i*}) − f_t^i(p)`.
    pub collective: f64,
    /// `Σ_t Σ_i G‖x_t^i − x_t^{i*}‖`.
    pub discrepancy: f64,
}

#[derive(Debug, Clone)]
pub struct NetworkConfig<'a> {
    pub geometry: &'a Geometry,
    /// One loss per flattened stamp.
    pub losses: &'a LossSequence,
    pub timeline: &'a Timeline,
    pub rate: NetworkRate,
    pub usage: Usage,
    /// Position of the reference agent among the active agents of each slot.
    pub reference: usize,
    pub comparator: &'a Point,
}

#[derive(Debug, Clone)]
pub struct NetworkRun {
    pub steps: Vec<StreamStep>,
    pub availability: Availability,
    pub shape: NetworkShape,
    pub regret: NetworkRegret,
    pub rate: NetworkRate,
    pub reference: usize,
    pub h_comparator: f64,
    /// Declared Lipschitz constant used for the discrepancy term.
    pub gbound: f64,
}

impl NetworkRun {
    /// Cumulative effective regret after each play.
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
}

/// Effective, collective and discrepancy sums of a finished replay.
pub fn network_regrets(
    tl: &Timeline,
    steps: &[StreamStep],
    losses: &LossSequence,
    geom: &Geometry,
    comparator: &Point,
    reference: usize,
) -> Result<NetworkRegret> {
    let g = losses.gbound;
    let mut out = NetworkRegret { effective: 0.0, collective: 0.0, discrepancy: 0.0 };
    for t in 1..=tl.horizon() {
        let stamps = tl.stamps_at(t);
        let first = *stamps.start();
        if reference >= tl.active_count(t) {
            return Err(Error::Config(format!(
                "reference position {reference} but only {} agents are active at time {t}",
                tl.active_count(t)
            )));
        }
        let x_ref = &steps[first + reference - 1].x;
        for k in stamps {
            let step = &steps[k - 1];
            let f = losses.get(k);
            let fp = f.value(comparator);
            out.effective += step.loss - fp;
            out.collective += f.value(x_ref) - fp;
            out.discrepancy += g * geom.primal_norm(&sub(&step.x.0, &x_ref.0));
        }
    }
    Ok(out)
}

/// Replays an open-network timeline with decentralized delayed dual averaging.
pub fn run_network(cfg: &NetworkConfig) -> Result<NetworkRun> {
    let tl = cfg.timeline;
    if let NetworkRate::Card { .. } = cfg.rate {
        if cfg.usage == Usage::AllReceived {
            if let Some((s, k)) = tl.availability().card_order_violation() {
                return Err(Error::Config(format!(
                    "network_card: play {k} uses gradient {s} computed with at least as many gradients; \
                     enable deferred usage"
                )));
            }
        }
    }
    match cfg.rate {
        NetworkRate::Constant { eta } if !(eta > 0.0 && eta.is_finite()) => {
            return Err(Error::Config(format!("constant rate must be positive, got {eta}")))
        }
        NetworkRate::Fixed { r, g, .. } | NetworkRate::Card { r, g, .. } if !(r > 0.0 && g > 0.0) => {
            return Err(Error::Config("network rates need R > 0 and G > 0".into()))
        }
        _ => {}
    }
    let shape = NetworkShape::of(tl);
    let h_p = cfg.geometry.regularizer_value(cfg.comparator)?;
    let mut rates = NetworkRates { rate: cfg.rate.clone(), shape };
    let out = replay(cfg.geometry, cfg.losses, tl, cfg.usage, cfg.comparator, &mut rates)?;
    let regret = network_regrets(tl, &out.steps, cfg.losses, cfg.geometry, cfg.comparator, cfg.reference)?;
    Ok(NetworkRun {
        steps: out.steps,
        availability: out.availability,
        shape,
        regret,
        rate: cfg.rate.clone(),
        reference: cfg.reference,
        h_comparator: h_p,
        gbound: cfg.losses.gbound,
    })
}

fn not_applicable(id: BoundId, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("bound {id} does not apply to this run: {why}"))
}

/// Evaluates one network bound. `r` and `g` are the constants of the formula.
pub fn network_bound(run: &NetworkRun, id: BoundId, r: f64, g: f64) -> Result<BoundCheck> {
    let norms: Vec<f64> = run.steps.iter().map(|s| s.norm).collect();
    let measured_tau = run.availability.delay_stats(&norms).max_delay;
    let tau_of = |id: BoundId| -> Result<f64> {
        let tau = run.rate.tau().ok_or_else(|| not_applicable(id, "the rate has no delay bound"))?;
        if tau < measured_tau {
            return Err(not_applicable(id, format!("configured tau={tau} is below the measured delay {measured_tau}")));
        }
        Ok(tau as f64)
    };
    let sh = run.shape;
    match id {
        BoundId::CollectiveGap => Ok(BoundCheck::new(
            id,
            run.regret.collective,
            run.regret.effective + run.regret.discrepancy,
        )),
        BoundId::NetworkFixed => {
            if !matches!(run.rate, NetworkRate::Fixed { .. }) {
                return Err(not_applicable(id, "needs the fixed network rate"));
            }
            let tau = tau_of(id)?;
            let rhs = 2.0 * r * g * sh.n_rms * ((2.0 * tau + 1.0) * sh.horizon as f64).sqrt();
            Ok(BoundCheck::new(id, run.regret.collective, rhs))
        }
        BoundId::NetworkCard => {
            if !matches!(run.rate, NetworkRate::Card { .. }) {
                return Err(not_applicable(id, "needs the cardinality network rate"));
            }
            if let Some((s, k)) = run.availability.card_order_violation() {
                return Err(not_applicable(id, format!("play {k} uses gradient {s} with as many gradients")));
            }
            let tau = tau_of(id)?;
            let (m, n) = (sh.plays as f64, sh.n_max as f64);
            let c = 5.0 * tau + 3.0;
            let rhs = r * g * (c * (m * n + (tau + 1.0) * n * n)).sqrt() + r * g * (c * m * n).sqrt();
            Ok(BoundCheck::new(id, run.regret.collective, rhs))
        }
        BoundId::NetworkFlattened => {
            let avail = &run.availability;
            let etas: Vec<f64> = run.steps.iter().map(|s| s.eta).collect();
            let key: Vec<f64> = etas.iter().map(|e| -e).collect();
            let order = faithful_by_key(avail, &key);
            if !is_faithful(&order, avail) {
                return Err(Error::Internal("constructed order is not faithful".into()));
            }
            for w in order.windows(2) {
                if etas[w[1] - 1] > etas[w[0] - 1] {
                    return Err(not_applicable(id, "the rate is not non-increasing along any faithful order"));
                }
            }
            let mut seen = 0.0;
            let mut acc = 0.0;
            for &k in &order {
                let used: f64 = avail.set(k).iter().map(|s| norms[s - 1]).sum();
                let n = norms[k - 1];
                acc += 0.5 * etas[k - 1] * (n * n + 2.0 * n * (seen - used));
                seen += n;
            }
            let last = *order.last().ok_or_else(|| Error::Internal("empty run".into()))?;
            let rhs = run.h_comparator / etas[last - 1] + acc;
            Ok(BoundCheck::new(id, run.regret.effective, rhs))
        }
        _ => Err(not_applicable(id, "not a network bound")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dda::{run_stream, RatePolicy, StreamConfig};
    use crate::losses::Loss;

    #[test]
    fn rate_formulas() {
        assert_eq!(lr_global_fixed(1.0, 1.0, 1.0, 0, 4), 0.5);
        let v = lr_global_fixed(1.0, 2.0, 2f64.sqrt(), 1, 8);
        assert!((v - 1.0 / (2.0 * 2f64.sqrt() * 24f64.sqrt())).abs() < 1e-15);
        assert!((v - 0.072169).abs() < 1e-6);
        assert!((lr_global_card(1.0, 1.0, 0, 1, 0) - 0.577350).abs() < 1e-6);
        assert!((lr_global_card(1.0, 1.0, 1, 2, 4) - 1.0 / 128f64.sqrt()).abs() < 1e-15);
        assert!(lr_global_card(1.0, 1.0, 1, 2, 5) < lr_global_card(1.0, 1.0, 1, 2, 4));
    }

    #[test]
    fn single_active_network_matches_stream() {
        let geom = Geometry::ball(1, 1.0).unwrap();
        let losses = LossSequence::scalar(&[1.0, -0.5, 0.25, 1.0, -1.0, 0.5]);
        let tl = Timeline::constant(6, 2);
        let p = Point(vec![0.5]);
        let net = run_network(&NetworkConfig {
            geometry: &geom,
            losses: &losses,
            timeline: &tl,
            rate: NetworkRate::Constant { eta: 0.3 },
            usage: Usage::AllReceived,
            reference: 0,
            comparator: &p,
        })
        .unwrap();
        let stream = run_stream(&StreamConfig {
            geometry: &geom,
            losses: &losses,
            timeline: &tl,
            policy: RatePolicy::Constant { eta: 0.3 },
            usage: Usage::AllReceived,
            comparator: &p,
        })
        .unwrap();
        assert_eq!(net.steps, stream.steps);
        assert_eq!(net.regret.effective, stream.ledger.actual);
        assert_eq!(net.regret.collective, net.regret.effective);
        assert_eq!(net.regret.discrepancy, 0.0);
    }

    #[test]
    fn identical_pools_give_identical_points() {
        // Two agents active every step, each receiving everything one step later.
        let horizon = 4;
        let active = vec![vec![0, 1]; horizon];
        let arrivals: Vec<Vec<usize>> =
            (0..2).map(|_| (1..=2 * horizon).map(|k| k.div_ceil(2) + 1).collect()).collect();
        let tl = Timeline::from_parts(active, 2, arrivals).unwrap();
        let geom = Geometry::ball(2, 1.0).unwrap();
        let losses = LossSequence::new(
            (0..8).map(|k| Loss::Linear(crate::geometry::DualVector(vec![0.1 * k as f64, -0.2]))).collect(),
            1.0,
        );
        let p = Point(vec![0.0, 0.0]);
        let run = run_network(&NetworkConfig {
            geometry: &geom,
            losses: &losses,
            timeline: &tl,
            rate: NetworkRate::Fixed { r: 1.0, g: 1.0, tau: 0 },
            usage: Usage::AllReceived,
            reference: 0,
            comparator: &p,
        })
        .unwrap();
        for t in 0..horizon {
            assert_eq!(run.steps[2 * t].x, run.steps[2 * t + 1].x);
        }
        assert_eq!(run.regret.discrepancy, 0.0);
        let b = network_bound(&run, BoundId::NetworkFixed, 1.0, 1.0).unwrap();
        assert!(b.satisfied());
    }
}
