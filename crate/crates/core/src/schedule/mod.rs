//! Feedback timelines and the delay measures derived from them.
//!
//! A [`Timeline`] fixes who plays when and when each piece of feedback
//! reaches each agent. Predictions are indexed by *stamps* `1..=M`: in
//! single-active mode the stamp of time `t` is `t` itself, in multi-active
//! mode the `i`-th active agent at time `t` gets stamp `M_{t−1} + i`. Feedback
//! carries the stamp of the prediction that produced it.
//!
//! Feedback `k` produced at time `s` becomes usable by agent `i` at time
//! `arrival(i, k) ≥ s + 1`, or never ([`NEVER`]). The set available to the
//! agent of slot `k` is every stamp whose arrival time at that agent is at
//! most the slot's time, which makes per-agent availability non-decreasing
//! by construction.

mod availability;
mod trace;

pub use availability::{
    faithful_by_key, is_faithful, Availability, BacklogVariant, DelayStats, Pair,
};
pub use trace::{parse_latency_table, parse_network_trace, parse_trace, TraceRow};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rng::{stream, SimRng};

/// Arrival time of feedback that is never delivered.
pub const NEVER: usize = usize::MAX;

/// One prediction: the time it is made and the agent making it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub time: usize,
    pub agent: usize,
}

/// Intrinsic delay of each feedback before any network hop.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseDelay {
    Constant(usize),
    IidGeometric { p: f64, cap: Option<usize> },
}

/// How feedback travels between agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Relay {
    #[default]
    Direct,
    /// Producer to coordinator, then coordinator to everyone: two hops.
    Coordinator(usize),
}

/// Per-link latencies, keyed by `(producer, consumer)`. Missing links have latency 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatencyTable {
    pub entries: BTreeMap<(usize, usize), usize>,
}

impl LatencyTable {
    pub fn get(&self, from: usize, to: usize) -> usize {
        if from == to {
            0
        } else {
            self.entries.get(&(from, to)).copied().unwrap_or(0)
        }
    }

    fn max_agent(&self) -> Option<usize> {
        self.entries.keys().map(|(a, b)| (*a).max(*b)).max()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayModel {
    pub base: BaseDelay,
    pub latency: LatencyTable,
    pub relay: Relay,
}

impl DelayModel {
    pub fn constant(tau: usize) -> Self {
        DelayModel { base: BaseDelay::Constant(tau), latency: LatencyTable::default(), relay: Relay::Direct }
    }

    pub fn geometric(p: f64, cap: Option<usize>) -> Self {
        DelayModel {
            base: BaseDelay::IidGeometric { p, cap },
            latency: LatencyTable::default(),
            relay: Relay::Direct,
        }
    }

    fn hop(&self, producer: usize, consumer: usize) -> usize {
        if producer == consumer {
            return 0;
        }
        match self.relay {
            Relay::Direct => self.latency.get(producer, consumer),
            Relay::Coordinator(c) => self.latency.get(producer, c) + self.latency.get(c, consumer),
        }
    }
}

/// Which agents are active at each time.
#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    /// One agent, always active.
    Single,
    /// `n` agents queried in turn.
    Cyclic(usize),
    /// One of `n` agents drawn uniformly at each time.
    Random(usize),
    /// Explicit list of active agent ids per time (multi-active allowed).
    Explicit(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    horizon: usize,
    num_agents: usize,
    slots: Vec<Slot>,
    /// `offsets[t − 1] = M_{t−1}`, with `offsets[T] = M`.
    offsets: Vec<usize>,
    /// `arrivals[agent][k − 1]`.
    arrivals: Vec<Vec<usize>>,
}

impl Timeline {
    /// Assembles a timeline from active-agent lists and an arrival table.
    pub fn from_parts(
        active: Vec<Vec<usize>>,
        num_agents: usize,
        arrivals: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let horizon = active.len();
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        let mut slots = Vec::new();
        let mut offsets = vec![0];
        for (t0, agents) in active.iter().enumerate() {
            if agents.is_empty() {
                return Err(Error::Validation(format!("no active agent at time {}", t0 + 1)));
            }
            for (pos, a) in agents.iter().enumerate() {
                if *a >= num_agents {
                    return Err(Error::Validation(format!(
                        "agent {a} active at time {} but only {num_agents} agents exist",
                        t0 + 1
                    )));
                }
                if agents[..pos].contains(a) {
                    return Err(Error::Validation(format!("agent {a} listed twice at time {}", t0 + 1)));
                }
                slots.push(Slot { time: t0 + 1, agent: *a });
            }
            offsets.push(slots.len());
        }
        if arrivals.len() != num_agents || arrivals.iter().any(|row| row.len() != slots.len()) {
            return Err(Error::Internal("arrival table shape does not match slots".into()));
        }
        for (agent, row) in arrivals.iter().enumerate() {
            for (k0, a) in row.iter().enumerate() {
                if *a != NEVER && *a <= slots[k0].time {
                    return Err(Error::Validation(format!(
                        "feedback from time {} reaches agent {agent} at time {a}, before time {}",
                        slots[k0].time,
                        slots[k0].time + 1
                    )));
                }
            }
        }
        Ok(Timeline { horizon, num_agents, slots, offsets, arrivals })
    }

    /// Single agent whose feedback `s` arrives at `arrival[s − 1]`.
    pub fn single_agent(arrival: Vec<usize>) -> Result<Self> {
        let active = vec![vec![0]; arrival.len()];
        Timeline::from_parts(active, 1, vec![arrival])
    }

    /// Single agent, uniform delay `tau`.
    pub fn constant(horizon: usize, tau: usize) -> Self {
        Timeline::single_agent((1..=horizon).map(|s| s + tau + 1).collect())
            .expect("constant-delay timeline is valid")
    }

    /// `n` agents queried in turn; own feedback returns after one step, the
    /// rest is pooled at the end of every `cycles` full rounds.
    pub fn pooled_cyclic(n: usize, cycles: usize, horizon: usize) -> Result<Self> {
        if n == 0 || cycles == 0 {
            return Err(Error::Config("pooled cyclic timeline needs n >= 1 and cycles >= 1".into()));
        }
        let block = n * cycles;
        let active: Vec<Vec<usize>> = (0..horizon).map(|t0| vec![t0 % n]).collect();
        let mut arrivals = vec![vec![NEVER; horizon]; n];
        for s in 1..=horizon {
            let producer = (s - 1) % n;
            let pooled = ((s - 1) / block + 1) * block + 1;
            for (agent, row) in arrivals.iter_mut().enumerate() {
                row[s - 1] = if agent == producer { s + 1 } else { pooled.max(s + 1) };
            }
        }
        Timeline::from_parts(active, n, arrivals)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    /// Total number of predictions `M`.
    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, k: usize) -> Slot {
        self.slots[k - 1]
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    /// Number of active agents `N_t`.
    pub fn active_count(&self, t: usize) -> usize {
        self.offsets[t] - self.offsets[t - 1]
    }

    /// Stamp `μ(i, t) = M_{t−1} + i` of the `i`-th (1-based) active agent at `t`.
    pub fn stamp(&self, t: usize, i: usize) -> usize {
        debug_assert!(i >= 1 && i <= self.active_count(t));
        self.offsets[t - 1] + i
    }

    /// Stamps of the predictions made at time `t`.
    pub fn stamps_at(&self, t: usize) -> std::ops::RangeInclusive<usize> {
        self.offsets[t - 1] + 1..=self.offsets[t]
    }

    pub fn is_single_active(&self) -> bool {
        self.slots.len() == self.horizon
    }

    pub fn arrival(&self, agent: usize, k: usize) -> usize {
        self.arrivals[agent][k - 1]
    }

    /// Makes feedback `k` never arrive anywhere.
    pub fn drop_feedback(&mut self, k: usize) {
        for row in &mut self.arrivals {
            row[k - 1] = NEVER;
        }
    }

    /// True when some feedback never reaches an agent that acts after it was produced.
    pub fn has_lost_feedback(&self) -> bool {
        let mut last_active = vec![0usize; self.num_agents];
        for s in &self.slots {
            last_active[s.agent] = s.time;
        }
        (1..=self.num_slots()).any(|k| {
            let t = self.slot(k).time;
            (0..self.num_agents).any(|i| self.arrival(i, k) == NEVER && last_active[i] > t)
        })
    }

    /// `S_k`: stamps available to the agent of slot `k`.
    pub fn available_set(&self, k: usize) -> Vec<usize> {
        let Slot { time, agent } = self.slot(k);
        let row = &self.arrivals[agent];
        (1..k).filter(|j| row[j - 1] <= time).collect()
    }

    /// `U_k = {1, …, k − 1} \ S_k`.
    pub fn unavailable_set(&self, k: usize) -> Vec<usize> {
        let s = self.available_set(k);
        (1..k).filter(|j| s.binary_search(j).is_err()).collect()
    }

    /// Every available set of the run, with the lost-feedback flag.
    pub fn availability(&self) -> Availability {
        let sets = (1..=self.num_slots()).map(|k| self.available_set(k)).collect();
        Availability::new(self.slots.clone(), sets, self.horizon, self.has_lost_feedback())
    }

    /// `σ_i`: all stamps sorted by arrival time at agent `i`, ties by stamp.
    /// Feedback that never arrives comes last, by stamp.
    pub fn arrival_order(&self, agent: usize) -> Vec<usize> {
        let row = &self.arrivals[agent];
        let mut order: Vec<usize> = (1..=self.num_slots()).collect();
        order.sort_by_key(|k| (row[k - 1], *k));
        order
    }

    /// `pos[k − 1]`: zero-based position of stamp `k` in `σ_i`.
    pub fn arrival_positions(&self, agent: usize) -> Vec<usize> {
        let mut pos = vec![0; self.num_slots()];
        for (p, k) in self.arrival_order(agent).into_iter().enumerate() {
            pos[k - 1] = p;
        }
        pos
    }

    /// `S^rec_{i,s}`: stamps delivered to agent `i` strictly before `g_s`.
    pub fn received_before(&self, agent: usize, s: usize) -> Vec<usize> {
        let order = self.arrival_order(agent);
        let p = order.iter().position(|k| *k == s).expect("stamp in range");
        let mut out = order[..p].to_vec();
        out.sort_unstable();
        out
    }

    /// Maximum delay `τ` without materializing the available sets: the largest
    /// `t − t'` over plays at `t` missing feedback from an earlier time `t'`.
    /// Lost feedback gives `T − 1`.
    pub fn max_delay(&self) -> usize {
        if self.has_lost_feedback() {
            return self.horizon - 1;
        }
        let mut tau = 0;
        for i in 0..self.num_agents {
            // Stamps of earlier times not yet delivered to agent i, with removal times.
            let mut pending = std::collections::BTreeSet::new();
            let mut removals: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
            for t in 1..=self.horizon {
                if t > 1 {
                    for k in self.stamps_at(t - 1) {
                        let a = self.arrival(i, k);
                        if a > t - 1 {
                            pending.insert(k);
                            removals.entry(a).or_default().push(k);
                        }
                    }
                }
                if let Some(done) = removals.remove(&t) {
                    for k in done {
                        pending.remove(&k);
                    }
                }
                let plays_here = self.stamps_at(t).any(|k| self.slot(k).agent == i);
                if let (true, Some(&k)) = (plays_here, pending.iter().next()) {
                    tau = tau.max(t - self.slot(k).time);
                }
            }
        }
        tau
    }

    /// Assumption that every agent receives `g_k` only after everything in `S_k`,
    /// checked against the given used sets.
    pub fn satisfies_in_order(&self, avail: &Availability) -> bool {
        (0..self.num_agents).all(|i| {
            let pos = self.arrival_positions(i);
            (1..=self.num_slots()).all(|k| avail.set(k).iter().all(|s| pos[s - 1] < pos[k - 1]))
        })
    }
}

/// Generates a timeline from a delay model and activation pattern.
pub fn build_timeline(
    model: &DelayModel,
    activation: &Activation,
    horizon: usize,
    seed: u64,
) -> Result<Timeline> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    let mut root = SimRng::new(seed);
    let mut delay_rng = root.split(stream::DELAYS);
    let mut act_rng = root.split(stream::ACTIVATION);

    let active: Vec<Vec<usize>> = match activation {
        Activation::Single => vec![vec![0]; horizon],
        Activation::Cyclic(n) | Activation::Random(n) if *n == 0 => {
            return Err(Error::Config("activation needs at least one agent".into()))
        }
        Activation::Cyclic(n) => (0..horizon).map(|t0| vec![t0 % n]).collect(),
        Activation::Random(n) => (0..horizon).map(|_| vec![act_rng.below(*n as u64) as usize]).collect(),
        Activation::Explicit(lists) => {
            if lists.len() != horizon {
                return Err(Error::Config(format!(
                    "activation lists {} times but horizon is {horizon}",
                    lists.len()
                )));
            }
            lists.clone()
        }
    };
    let mut num_agents = active.iter().flatten().copied().max().unwrap_or(0) + 1;
    if let Activation::Cyclic(n) | Activation::Random(n) = activation {
        num_agents = num_agents.max(*n);
    }
    if let Some(m) = model.latency.max_agent() {
        num_agents = num_agents.max(m + 1);
    }
    if let Relay::Coordinator(c) = model.relay {
        num_agents = num_agents.max(c + 1);
    }
    if let BaseDelay::IidGeometric { p, .. } = model.base {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Config(format!("geometric delay needs 0 < p <= 1, got {p}")));
        }
    }

    let slots: Vec<Slot> = active
        .iter()
        .enumerate()
        .flat_map(|(t0, ag)| ag.iter().map(move |a| Slot { time: t0 + 1, agent: *a }))
        .collect();
    let mut arrivals = vec![vec![NEVER; slots.len()]; num_agents];
    for (k0, slot) in slots.iter().enumerate() {
        let base = match model.base {
            BaseDelay::Constant(tau) => tau,
            BaseDelay::IidGeometric { p, cap } => {
                delay_rng.geometric(p, cap.map(|c| c as u64)) as usize
            }
        };
        for (consumer, row) in arrivals.iter_mut().enumerate() {
            row[k0] = slot.time + 1 + base + model.hop(slot.agent, consumer);
        }
    }
    Timeline::from_parts(active, num_agents, arrivals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undelayed_sets() {
        let tl = build_timeline(&DelayModel::constant(0), &Activation::Single, 3, 0).unwrap();
        assert_eq!(tl.available_set(1), Vec::<usize>::new());
        assert_eq!(tl.available_set(2), vec![1]);
        assert_eq!(tl.available_set(3), vec![1, 2]);
    }

    #[test]
    fn constant_delay_sets() {
        let tl = Timeline::constant(5, 2);
        assert_eq!(tl.available_set(5), vec![1, 2]);
        assert_eq!(tl.unavailable_set(5), vec![3, 4]);
        let tl = Timeline::constant(4, 1);
        assert_eq!(tl.available_set(4), vec![1, 2]);
        assert_eq!(tl.unavailable_set(4), vec![3]);
        assert!(tl.available_set(1).is_empty() && tl.unavailable_set(1).is_empty());
    }

    #[test]
    fn simultaneous_arrivals_scan() {
        let tl = Timeline::single_agent(vec![3, 3, NEVER]).unwrap();
        assert_eq!(tl.available_set(3), vec![1, 2]);
    }

    #[test]
    fn geometric_timeline_is_reproducible() {
        let m = DelayModel::geometric(0.5, Some(3));
        let a = build_timeline(&m, &Activation::Single, 4, 7).unwrap();
        let b = build_timeline(&m, &Activation::Single, 4, 7).unwrap();
        assert_eq!(a, b);
        for k in 1..=4 {
            let d = a.arrival(0, k) - k - 1;
            assert!(d <= 3);
        }
    }

    #[test]
    fn early_arrival_rejected() {
        let err = Timeline::single_agent(vec![1, 3]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn arrival_order_and_received_before() {
        let tl = Timeline::constant(4, 0);
        assert_eq!(tl.arrival_order(0), vec![1, 2, 3, 4]);
        assert_eq!(tl.received_before(0, 3), vec![1, 2]);

        // g_2 arrives at 3, g_1 at 4.
        let tl = Timeline::single_agent(vec![4, 3, 5, 6]).unwrap();
        assert_eq!(&tl.arrival_order(0)[..2], &[2, 1]);
        assert!(tl.received_before(0, 1).contains(&2));

        let tl = Timeline::single_agent(vec![3, 3, 5]).unwrap();
        assert_eq!(tl.arrival_order(0), tl.clone().arrival_order(0));
        assert_eq!(&tl.arrival_order(0)[..2], &[1, 2]);
    }

    #[test]
    fn multi_active_stamps() {
        let act = Activation::Explicit(vec![vec![0, 1], vec![1], vec![0, 1, 2]]);
        let tl = build_timeline(&DelayModel::constant(0), &act, 3, 0).unwrap();
        assert_eq!(tl.num_slots(), 6);
        assert_eq!(tl.stamp(3, 2), 5);
        assert_eq!(tl.slot(5), Slot { time: 3, agent: 1 });
        // Everything from earlier times, nothing from the same time.
        assert_eq!(tl.available_set(5), vec![1, 2, 3]);
        assert_eq!(tl.unavailable_set(5), vec![4]);
    }

    #[test]
    fn coordinator_relay_adds_two_hops() {
        let mut lat = LatencyTable::default();
        lat.entries.insert((0, 2), 1);
        lat.entries.insert((2, 1), 2);
        let model = DelayModel { base: BaseDelay::Constant(0), latency: lat, relay: Relay::Coordinator(2) };
        let tl = build_timeline(&model, &Activation::Cyclic(2), 4, 0).unwrap();
        assert_eq!(tl.num_agents(), 3);
        assert_eq!(tl.arrival(0, 1), 2);
        assert_eq!(tl.arrival(1, 1), 2 + 3);
    }

    #[test]
    fn pooled_cyclic_arrivals() {
        let tl = Timeline::pooled_cyclic(2, 2, 8).unwrap();
        assert_eq!(tl.arrival(0, 1), 2);
        assert_eq!(tl.arrival(1, 1), 5);
        assert_eq!(tl.arrival(1, 4), 5);
        assert_eq!(tl.arrival(0, 5), 6);
        assert_eq!(tl.arrival(1, 5), 9);
    }

    #[test]
    fn lost_feedback_detected() {
        let mut tl = Timeline::constant(5, 0);
        assert!(!tl.has_lost_feedback());
        tl.drop_feedback(5);
        assert!(!tl.has_lost_feedback());
        tl.drop_feedback(2);
        assert!(tl.has_lost_feedback());
    }
}
