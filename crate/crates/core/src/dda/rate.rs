//! Learning-rate policies and the lag-estimate state machines behind them.

use super::GradientRecord;
use crate::error::{Error, Result};

/// How the learning rate is chosen at each query.
#[derive(Debug, Clone, PartialEq)]
pub enum RatePolicy {
    Constant { eta: f64 },
    /// `R / (G√(t(1+2τ)))`.
    Decreasing { r: f64, g: f64, tau: Option<usize> },
    /// `R / √(Λ̂_t + G²(2τ²+3τ+1))`.
    AdaDelayO { r: f64, g: f64, tau: Option<usize> },
    /// `min(η_{t−1}, R / √(Λ̂_t + G²ρ_t))`; needs no delay bound.
    AdaDelayOPlus { r: f64, g: f64 },
    /// `R / (G√((1+2τ)(|S_t|+τ+1)))`.
    CardDecreasing { r: f64, g: f64, tau: Option<usize> },
    /// `R / √(Λ̃_t + G²(2τ+1)²)`, computed by the active agent.
    AdaDelayDist { r: f64, g: f64, tau: Option<usize> },
}

impl RatePolicy {
    pub fn name(&self) -> &'static str {
        match self {
            RatePolicy::Constant { .. } => "constant",
            RatePolicy::Decreasing { .. } => "decreasing",
            RatePolicy::AdaDelayO { .. } => "adadelay_o",
            RatePolicy::AdaDelayOPlus { .. } => "adadelay_o_plus",
            RatePolicy::CardDecreasing { .. } => "card_decreasing",
            RatePolicy::AdaDelayDist { .. } => "adadelay_dist",
        }
    }

    /// The delay bound the policy was configured with.
    pub fn tau(&self) -> Option<usize> {
        match self {
            RatePolicy::Decreasing { tau, .. }
            | RatePolicy::AdaDelayO { tau, .. }
            | RatePolicy::CardDecreasing { tau, .. }
            | RatePolicy::AdaDelayDist { tau, .. } => *tau,
            _ => None,
        }
    }

    pub fn r_g(&self) -> Option<(f64, f64)> {
        match self {
            RatePolicy::Constant { .. } => None,
            RatePolicy::Decreasing { r, g, .. }
            | RatePolicy::AdaDelayO { r, g, .. }
            | RatePolicy::AdaDelayOPlus { r, g }
            | RatePolicy::CardDecreasing { r, g, .. }
            | RatePolicy::AdaDelayDist { r, g, .. } => Some((*r, *g)),
        }
    }

    /// Whether the policy relies on the lag proxy.
    pub fn uses_lag(&self) -> bool {
        matches!(
            self,
            RatePolicy::AdaDelayO { .. } | RatePolicy::AdaDelayOPlus { .. } | RatePolicy::AdaDelayDist { .. }
        )
    }

    fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{} needs {what} > 0, got {v}", self.name())))
            }
        };
        match self {
            RatePolicy::Constant { eta } => positive(*eta, "eta"),
            RatePolicy::AdaDelayOPlus { r, g } => {
                positive(*r, "R")?;
                positive(*g, "G")
            }
            RatePolicy::Decreasing { r, g, tau }
            | RatePolicy::AdaDelayO { r, g, tau }
            | RatePolicy::CardDecreasing { r, g, tau }
            | RatePolicy::AdaDelayDist { r, g, tau } => {
                positive(*r, "R")?;
                positive(*g, "G")?;
                if tau.is_none() {
                    return Err(Error::Config(format!("{} needs a delay bound tau", self.name())));
                }
                Ok(())
            }
        }
    }
}

/// Incremental `Λ̂` (or `Λ̃`) and `ρ` of one agent, updated on every delivery
/// and every play.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LagTracker {
    /// Lag proxy accumulated so far.
    pub lambda: f64,
    /// Residual count; meaningful for a single agent.
    pub rho: i64,
    pool_norm_sum: f64,
    pool_count: usize,
}

impl LagTracker {
    /// Adds `‖g_s‖² + 2‖g_s‖(Σ_pool‖g‖ − Σ_{S_s}‖g‖)` and removes
    /// `1 + 2(|pool| − |S_s|)` from `ρ`, then adds `s` to the pool.
    pub fn receive(&mut self, rec: &GradientRecord) -> Result<()> {
        let meta = rec.meta.ok_or_else(|| {
            Error::Protocol(format!("feedback {} arrived without its relayed metadata", rec.stamp))
        })?;
        let n = rec.norm;
        self.lambda += n * n + 2.0 * n * (self.pool_norm_sum - meta.used_norm_sum);
        self.rho -= 1 + 2 * (self.pool_count as i64 - meta.used_count as i64);
        self.pool_norm_sum += n;
        self.pool_count += 1;
        Ok(())
    }

    /// Adds `1 + 2((t − 1) − |S_t|)` to `ρ` for the play at time `t`.
    pub fn play(&mut self, t: usize, used: usize) {
        self.rho += 1 + 2 * ((t as i64 - 1) - used as i64);
    }
}

/// What a rate query reports besides `η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateQuery {
    pub eta: f64,
    pub lambda_hat: Option<f64>,
    pub rho: Option<i64>,
}

/// A policy together with its mutable accumulators.
#[derive(Debug, Clone)]
pub struct RateState {
    policy: RatePolicy,
    trackers: Vec<LagTracker>,
    last_eta: f64,
}

impl RateState {
    pub fn new(policy: RatePolicy, num_agents: usize) -> Result<Self> {
        policy.validate()?;
        Ok(RateState { policy, trackers: vec![LagTracker::default(); num_agents], last_eta: f64::INFINITY })
    }

    pub fn policy(&self) -> &RatePolicy {
        &self.policy
    }

    pub fn tracker(&self, agent: usize) -> &LagTracker {
        &self.trackers[agent]
    }

    pub fn on_receive(&mut self, agent: usize, rec: &GradientRecord) -> Result<()> {
        self.trackers[agent].receive(rec)
    }

    /// Rate for the play at time `t` by `agent`, which uses `used` gradients.
    pub fn query(&mut self, t: usize, agent: usize, used: usize) -> Result<RateQuery> {
        let tracker = &mut self.trackers[agent];
        tracker.play(t, used);
        let tau = self.policy.tau().unwrap_or(0) as f64;
        let q = match self.policy {
            RatePolicy::Constant { eta } => RateQuery { eta, lambda_hat: None, rho: None },
            RatePolicy::Decreasing { r, g, .. } => {
                RateQuery { eta: r / (g * (t as f64 * (1.0 + 2.0 * tau)).sqrt()), lambda_hat: None, rho: None }
            }
            RatePolicy::AdaDelayO { r, g, .. } => {
                let denom = tracker.lambda + g * g * (2.0 * tau * tau + 3.0 * tau + 1.0);
                RateQuery { eta: r / denom.sqrt(), lambda_hat: Some(tracker.lambda), rho: None }
            }
            RatePolicy::AdaDelayOPlus { r, g } => {
                let denom = tracker.lambda + g * g * tracker.rho as f64;
                if denom <= 0.0 {
                    return Err(Error::Internal(format!("non-positive lag majorant {denom} at t={t}")));
                }
                let eta = (r / denom.sqrt()).min(self.last_eta);
                RateQuery { eta, lambda_hat: Some(tracker.lambda), rho: Some(tracker.rho) }
            }
            RatePolicy::CardDecreasing { r, g, .. } => {
                let eta = r / (g * ((1.0 + 2.0 * tau) * (used as f64 + tau + 1.0)).sqrt());
                RateQuery { eta, lambda_hat: None, rho: None }
            }
            RatePolicy::AdaDelayDist { r, g, .. } => {
                let c = 2.0 * tau + 1.0;
                let eta = r / (tracker.lambda + g * g * c * c).sqrt();
                RateQuery { eta, lambda_hat: Some(tracker.lambda), rho: None }
            }
        };
        self.last_eta = self.last_eta.min(q.eta);
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dda::RecordMeta;
    use crate::geometry::DualVector;

    fn rec(stamp: usize, norm: f64, used_count: usize, used_norm_sum: f64) -> GradientRecord {
        GradientRecord {
            stamp,
            producer: 0,
            grad: DualVector(vec![norm]),
            norm,
            meta: Some(RecordMeta { used_count, used_norm_sum }),
        }
    }

    #[test]
    fn decreasing_formula() {
        let mut st = RateState::new(RatePolicy::Decreasing { r: 1.0, g: 1.0, tau: Some(0) }, 1).unwrap();
        assert_eq!(st.query(4, 0, 3).unwrap().eta, 0.5);
    }

    #[test]
    fn missing_tau_is_a_configuration_error() {
        for p in [
            RatePolicy::AdaDelayO { r: 1.0, g: 1.0, tau: None },
            RatePolicy::AdaDelayDist { r: 1.0, g: 1.0, tau: None },
        ] {
            assert!(matches!(RateState::new(p, 1), Err(Error::Config(_))));
        }
    }

    #[test]
    fn lag_updates() {
        let mut tr = LagTracker::default();
        tr.receive(&rec(1, 1.0, 0, 0.0)).unwrap();
        assert_eq!(tr.lambda, 1.0);

        // g_2 then g_1, S_1 = S_2 = ∅, unit norms.
        let mut tr = LagTracker::default();
        tr.receive(&rec(2, 1.0, 0, 0.0)).unwrap();
        tr.receive(&rec(1, 1.0, 0, 0.0)).unwrap();
        assert_eq!(tr.lambda, 4.0);

        let mut tr = LagTracker::default();
        let missing = GradientRecord { meta: None, ..rec(1, 1.0, 0, 0.0) };
        assert!(matches!(tr.receive(&missing), Err(Error::Protocol(_))));
    }

    #[test]
    fn adadelay_o_plus_small_instance() {
        // S_1 = S_2 = ∅, S_3 = {1}, unit norms: η = 1, 1/2, 1/√7.
        let mut st = RateState::new(RatePolicy::AdaDelayOPlus { r: 1.0, g: 1.0 }, 1).unwrap();
        let q1 = st.query(1, 0, 0).unwrap();
        let q2 = st.query(2, 0, 0).unwrap();
        st.on_receive(0, &rec(1, 1.0, 0, 0.0)).unwrap();
        let q3 = st.query(3, 0, 1).unwrap();
        assert_eq!((q1.rho, q2.rho, q3.rho), (Some(1), Some(4), Some(6)));
        assert_eq!((q1.eta, q2.eta), (1.0, 0.5));
        assert!((q3.eta - 1.0 / 7f64.sqrt()).abs() < 1e-15);
        assert!((q3.eta - 0.377964).abs() < 1e-6);
    }

    #[test]
    fn adadelay_o_plus_undelayed_is_inverse_sqrt_t() {
        let mut st = RateState::new(RatePolicy::AdaDelayOPlus { r: 1.0, g: 1.0 }, 1).unwrap();
        for t in 1..=20 {
            if t > 1 {
                st.on_receive(0, &rec(t - 1, 1.0, t - 2, (t - 2) as f64)).unwrap();
            }
            let q = st.query(t, 0, t - 1).unwrap();
            assert_eq!(q.rho, Some(1));
            assert!((q.eta - 1.0 / (t as f64).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn card_and_dist_formulas() {
        let mut st = RateState::new(RatePolicy::CardDecreasing { r: 1.0, g: 1.0, tau: Some(1) }, 1).unwrap();
        assert!((st.query(5, 0, 2).unwrap().eta - 1.0 / (3.0f64 * 4.0).sqrt()).abs() < 1e-15);
        let mut st = RateState::new(RatePolicy::AdaDelayDist { r: 2.0, g: 1.0, tau: Some(1) }, 2).unwrap();
        assert_eq!(st.query(1, 1, 0).unwrap().eta, 2.0 / 3.0);
    }
}
