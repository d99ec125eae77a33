//! Regret-bound checks shared by every runner.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Identifier of one closed-form regret bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundId {
    /// Generic delayed dual averaging bound for non-increasing rates.
    DelayedDa,
    /// The same bound along a faithful reordering of time.
    FaithfulOrder,
    /// `2RG√(T(1+2τ))` for the decreasing rate.
    Decreasing,
    /// `2R√(Λ̂_T + G²(2τ²+3τ+1))`.
    AdadelayO,
    /// `2R√(Λ_T + G²(2τ²+3τ+1))`.
    AdadelayOLag,
    /// `2R·max_t √(Λ̂_t + G²ρ_t)`.
    AdadelayOPlus,
    /// `2R·min(max_t √(Λ_t + G²ρ_t), G√(T + 2D_T))`.
    AdadelayOPlusLag,
    /// `2RG√((T+τ)(1+2τ))`.
    CardDecreasing,
    /// `2R·max_t √(Λ̃_t + G²(2τ+1)²)`.
    AdadelayDist,
    /// `2R√(Λ_T + G²(2τ+1)²)`.
    AdadelayDistLag,
    /// `2RG√((1+2O)T)` at the tuned constant rate.
    ConstUnavail,
    /// `(3/√2)·RG√(D_T + T)` at the tuned constant rate.
    ConstCumulative,
    /// `2R√Λ_T` at the tuned constant rate.
    ConstLag,
    /// Collective regret ≤ effective regret + discrepancy.
    CollectiveGap,
    /// `2RG·N_rms·√((2τ+1)T)` for the fixed network rate.
    NetworkFixed,
    /// Explicit-constant bound for the cardinality network rate.
    NetworkCard,
    /// Effective regret against the flattened single-stream bound.
    NetworkFlattened,
    /// Optimistic bound with the guess-error sum.
    Optimistic,
    /// Optimistic bound with vector-field deviations.
    OptimisticField,
    /// `R√((2τ+1)V)` for the variation-tuned constant pair.
    OptimisticVariation,
    /// Adaptive optimistic bound `max(√2R²L(4τ+1), 2R√((4τ+1)(V + 4G²(3τ+1))))`.
    OptimisticAdaptive,
}

impl BoundId {
    pub const ALL: [BoundId; 21] = [
        BoundId::DelayedDa,
        BoundId::FaithfulOrder,
        BoundId::Decreasing,
        BoundId::AdadelayO,
        BoundId::AdadelayOLag,
        BoundId::AdadelayOPlus,
        BoundId::AdadelayOPlusLag,
        BoundId::CardDecreasing,
        BoundId::AdadelayDist,
        BoundId::AdadelayDistLag,
        BoundId::ConstUnavail,
        BoundId::ConstCumulative,
        BoundId::ConstLag,
        BoundId::CollectiveGap,
        BoundId::NetworkFixed,
        BoundId::NetworkCard,
        BoundId::NetworkFlattened,
        BoundId::Optimistic,
        BoundId::OptimisticField,
        BoundId::OptimisticVariation,
        BoundId::OptimisticAdaptive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundId::DelayedDa => "delayed_da",
            BoundId::FaithfulOrder => "faithful_order",
            BoundId::Decreasing => "decreasing",
            BoundId::AdadelayO => "adadelay_o",
            BoundId::AdadelayOLag => "adadelay_o_lag",
            BoundId::AdadelayOPlus => "adadelay_o_plus",
            BoundId::AdadelayOPlusLag => "adadelay_o_plus_lag",
            BoundId::CardDecreasing => "card_decreasing",
            BoundId::AdadelayDist => "adadelay_dist",
            BoundId::AdadelayDistLag => "adadelay_dist_lag",
            BoundId::ConstUnavail => "const_unavail",
            BoundId::ConstCumulative => "const_cumulative",
            BoundId::ConstLag => "const_lag",
            BoundId::CollectiveGap => "collective_gap",
            BoundId::NetworkFixed => "network_fixed",
            BoundId::NetworkCard => "network_card",
            BoundId::NetworkFlattened => "network_flattened",
            BoundId::Optimistic => "optimistic",
            BoundId::OptimisticField => "optimistic_field",
            BoundId::OptimisticVariation => "optimistic_variation",
            BoundId::OptimisticAdaptive => "optimistic_adaptive",
        }
    }
}

impl fmt::Display for BoundId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        BoundId::ALL
            .iter()
            .copied()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown bound id `{s}`")))
    }
}

/// Default tolerance: `max(1e−9·|RHS|, 1e−9)`.
pub fn default_tolerance(rhs: f64) -> f64 {
    (1e-9 * rhs.abs()).max(1e-9)
}

/// One evaluated bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub id: BoundId,
    pub measured: f64,
    pub rhs: f64,
    pub tolerance: f64,
    /// Right-hand side evaluated at every prefix horizon, when meaningful.
    pub series: Option<Vec<f64>>,
}

impl BoundCheck {
    pub fn new(id: BoundId, measured: f64, rhs: f64) -> Self {
        BoundCheck { id, measured, rhs, tolerance: default_tolerance(rhs), series: None }
    }

    pub fn with_series(mut self, series: Vec<f64>) -> Self {
        self.series = Some(series);
        self
    }

    /// Raises the absolute tolerance floor.
    pub fn with_floor(mut self, floor: f64) -> Self {
        self.tolerance = self.tolerance.max(floor);
        self
    }

    pub fn satisfied(&self) -> bool {
        self.measured <= self.rhs + self.tolerance
    }

    pub fn slack(&self) -> f64 {
        self.rhs - self.measured
    }
}

/// Both sides of the "inverse square root of the sum" inequality
/// `Σ a_t/√(Σ_{s≤t} a_s) ≤ 2√(Σ a_t)`, for sequences with positive prefix sums.
pub fn inverse_sqrt_sum(a: &[f64]) -> (f64, f64) {
    let mut prefix = 0.0;
    let mut lhs = 0.0;
    for v in a {
        prefix += v;
        lhs += v / prefix.sqrt();
    }
    (lhs, 2.0 * prefix.sqrt())
}
