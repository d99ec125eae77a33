use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use super::{Slot, Timeline};
use crate::error::{Error, Result};

/// Unordered stamp pair stored as `(smaller, larger)`.
pub type Pair = (usize, usize);

fn pair(a: usize, b: usize) -> Pair {
    (a.min(b), a.max(b))
}

/// Which proxy set `backlog_pairs` builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BacklogVariant {
    /// Single agent with time-monotone feedback.
    Online,
    /// Distributed proxy seen by the active agent, under in-order delivery.
    Distributed,
}

/// The sets `S_k` actually used by a run, one per stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Availability {
    slots: Vec<Slot>,
    sets: Vec<Vec<usize>>,
    horizon: usize,
    lost: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayStats {
    /// `τ`, in units of time.
    pub max_delay: usize,
    /// `O = max |U_k|`.
    pub max_unavail: usize,
    /// `D_k = Σ_{j≤k} |U_j|` for `k = 1..=M`.
    pub cum_unavail: Vec<usize>,
    /// `Λ_k` for `k = 1..=M`.
    pub lag: Vec<f64>,
}

impl DelayStats {
    pub fn total_unavail(&self) -> usize {
        self.cum_unavail.last().copied().unwrap_or(0)
    }

    pub fn total_lag(&self) -> f64 {
        self.lag.last().copied().unwrap_or(0.0)
    }
}

impl Availability {
    /// Sets must be sorted and satisfy `S_k ⊆ {1, …, k − 1}`.
    pub fn new(slots: Vec<Slot>, sets: Vec<Vec<usize>>, horizon: usize, lost: bool) -> Self {
        debug_assert_eq!(slots.len(), sets.len());
        debug_assert!(sets
            .iter()
            .enumerate()
            .all(|(k0, s)| s.windows(2).all(|w| w[0] < w[1]) && s.last().is_none_or(|m| *m <= k0)));
        Availability { slots, sets, horizon, lost }
    }

    /// Single-agent sets without a timeline (used by tests and generators).
    pub fn single_agent(sets: Vec<Vec<usize>>) -> Self {
        let slots = (1..=sets.len()).map(|t| Slot { time: t, agent: 0 }).collect();
        let horizon = sets.len();
        Availability::new(slots, sets, horizon, false)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn has_lost_feedback(&self) -> bool {
        self.lost
    }

    pub fn slot(&self, k: usize) -> Slot {
        self.slots[k - 1]
    }

    pub fn set(&self, k: usize) -> &[usize] {
        &self.sets[k - 1]
    }

    pub fn contains(&self, k: usize, s: usize) -> bool {
        self.sets[k - 1].binary_search(&s).is_ok()
    }

    pub fn unavailable(&self, k: usize) -> Vec<usize> {
        (1..k).filter(|j| !self.contains(k, *j)).collect()
    }

    /// `S_k ⊆ S_{k+1}` for every `k`.
    pub fn is_time_monotone(&self) -> bool {
        self.sets.windows(2).all(|w| is_subset(&w[0], &w[1]))
    }

    /// Per-agent availability never shrinks.
    pub fn is_agent_monotone(&self) -> bool {
        let mut last: std::collections::HashMap<usize, usize> = Default::default();
        for (k0, slot) in self.slots.iter().enumerate() {
            if let Some(prev) = last.insert(slot.agent, k0) {
                if !is_subset(&self.sets[prev], &self.sets[k0]) {
                    return false;
                }
            }
        }
        true
    }

    /// Every used feedback was computed with strictly fewer gradients.
    pub fn satisfies_card_order(&self) -> bool {
        (1..=self.len()).all(|k| self.set(k).iter().all(|s| self.set(*s).len() < self.set(k).len()))
    }

    /// First violation of the cardinality ordering, if any.
    pub fn card_order_violation(&self) -> Option<(usize, usize)> {
        for k in 1..=self.len() {
            for s in self.set(k) {
                if self.set(*s).len() >= self.set(k).len() {
                    return Some((*s, k));
                }
            }
        }
        None
    }

    /// The four delay measures; `norms[k − 1] = ‖g_k‖*`.
    pub fn delay_stats(&self, norms: &[f64]) -> DelayStats {
        assert_eq!(norms.len(), self.len(), "one norm per stamp");
        let mut prefix = vec![0.0; self.len() + 1];
        for (k0, n) in norms.iter().enumerate() {
            prefix[k0 + 1] = prefix[k0] + n;
        }
        let mut max_delay = 0;
        let mut max_unavail = 0;
        let mut cum_unavail = Vec::with_capacity(self.len());
        let mut lag = Vec::with_capacity(self.len());
        let (mut d, mut l) = (0usize, 0.0f64);
        for k in 1..=self.len() {
            let t = self.slot(k).time;
            let set = self.set(k);
            let unavail = k - 1 - set.len();
            max_unavail = max_unavail.max(unavail);
            d += unavail;
            cum_unavail.push(d);

            let oldest_missing = (1..k)
                .filter(|j| self.slot(*j).time < t && !self.contains(k, *j))
                .map(|j| self.slot(j).time)
                .min();
            if let Some(m) = oldest_missing {
                max_delay = max_delay.max(t - m);
            }

            let used: f64 = set.iter().map(|s| norms[s - 1]).sum();
            let n = norms[k - 1];
            l += n * n + 2.0 * n * (prefix[k - 1] - used);
            lag.push(l);
        }
        if self.lost {
            max_delay = self.horizon - 1;
        }
        DelayStats { max_delay, max_unavail, cum_unavail, lag }
    }

    /// `B_k` (or its distributed counterpart) built from arrival orders.
    pub fn backlog_pairs(&self, tl: &Timeline, k: usize, variant: BacklogVariant) -> Result<BTreeSet<Pair>> {
        self.check_backlog_precondition(tl, variant)?;
        let pos = tl.arrival_positions(self.slot(k).agent);
        Ok(self.backlog_with_positions(&pos, k))
    }

    /// `B_k` for every `k`, checking the precondition once.
    pub fn backlog_all(&self, tl: &Timeline, variant: BacklogVariant) -> Result<Vec<BTreeSet<Pair>>> {
        self.check_backlog_precondition(tl, variant)?;
        let positions: Vec<Vec<usize>> = (0..tl.num_agents()).map(|i| tl.arrival_positions(i)).collect();
        Ok((1..=self.len())
            .map(|k| self.backlog_with_positions(&positions[self.slot(k).agent], k))
            .collect())
    }

    fn check_backlog_precondition(&self, tl: &Timeline, variant: BacklogVariant) -> Result<()> {
        match variant {
            BacklogVariant::Online if !self.is_time_monotone() => {
                Err(Error::Config("the online backlog needs time-monotone feedback".into()))
            }
            BacklogVariant::Distributed if !tl.satisfies_in_order(self) => {
                Err(Error::Config("the distributed backlog needs in-order delivery".into()))
            }
            _ => Ok(()),
        }
    }

    /// `{{s, r} : s ∈ S_k, r delivered before s, r ∉ S_s}`.
    fn backlog_with_positions(&self, pos: &[usize], k: usize) -> BTreeSet<Pair> {
        let mut out = BTreeSet::new();
        let set = self.set(k);
        for &s in set {
            for r in 1..=self.len() {
                if r != s && pos[r - 1] < pos[s - 1] && !self.contains(s, r) {
                    out.insert(pair(s, r));
                }
            }
        }
        out
    }

    /// `ρ_k = k + 2D_k − |S_k| − 2|B_k|` from scratch (single agent).
    pub fn rho(&self, tl: &Timeline, k: usize) -> Result<i64> {
        let b = self.backlog_pairs(tl, k, BacklogVariant::Online)?;
        let d: usize = (1..=k).map(|j| j - 1 - self.set(j).len()).sum();
        Ok(k as i64 + 2 * d as i64 - self.set(k).len() as i64 - 2 * b.len() as i64)
    }

    /// `d_k = |U_k| + |{j : k ∈ U_j}| + 1`.
    pub fn relaxed_counts(&self) -> Vec<usize> {
        let m = self.len();
        let mut out: Vec<usize> = (1..=m).map(|k| k - self.set(k).len()).collect();
        for j in 1..=m {
            for k in self.unavailable(j) {
                out[k - 1] += 1;
            }
        }
        out
    }
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|x| b.binary_search(x).is_ok())
}

/// True iff `perm` lists `1..=M` once each and every used stamp precedes its user.
pub fn is_faithful(perm: &[usize], avail: &Availability) -> bool {
    let m = avail.len();
    if perm.len() != m {
        return false;
    }
    let mut pos = vec![usize::MAX; m];
    for (p, k) in perm.iter().enumerate() {
        if *k == 0 || *k > m || pos[k - 1] != usize::MAX {
            return false;
        }
        pos[k - 1] = p;
    }
    (1..=m).all(|k| avail.set(k).iter().all(|s| pos[s - 1] < pos[k - 1]))
}

/// A faithful permutation that visits stamps in increasing `key` wherever the
/// dependency structure allows: repeatedly emit, among the stamps whose used
/// sets have all been emitted, the one with the smallest `(key, stamp)`.
pub fn faithful_by_key(avail: &Availability, key: &[f64]) -> Vec<usize> {
    #[derive(PartialEq)]
    struct Entry(f64, usize);
    impl Eq for Entry {}
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
        }
    }

    let m = avail.len();
    let mut pending: Vec<usize> = (1..=m).map(|k| avail.set(k).len()).collect();
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); m];
    for k in 1..=m {
        for s in avail.set(k) {
            users[s - 1].push(k);
        }
    }
    let mut heap = BinaryHeap::new();
    for k in 1..=m {
        if pending[k - 1] == 0 {
            heap.push(Reverse(Entry(key[k - 1], k)));
        }
    }
    let mut out = Vec::with_capacity(m);
    while let Some(Reverse(Entry(_, k))) = heap.pop() {
        out.push(k);
        for &u in &users[k - 1] {
            pending[u - 1] -= 1;
            if pending[u - 1] == 0 {
                heap.push(Reverse(Entry(key[u - 1], u)));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{Timeline, NEVER};

    #[test]
    fn stats_undelayed() {
        let av = Timeline::constant(5, 0).availability();
        let st = av.delay_stats(&[1.0; 5]);
        assert_eq!((st.max_delay, st.max_unavail, st.total_unavail()), (0, 0, 0));
        assert_eq!(st.total_lag(), 5.0);
    }

    #[test]
    fn stats_small_instance() {
        // S_2 = ∅, S_3 = {1}.
        let tl = Timeline::single_agent(vec![3, 4, 5]).unwrap();
        let av = tl.availability();
        assert_eq!(av.set(3), &[1]);
        let st = av.delay_stats(&[1.0; 3]);
        // Lag by enumeration: U_1 = ∅, U_2 = {1}, U_3 = {2}.
        let oracle = 1.0 + (1.0 + 2.0 * 1.0) + (1.0 + 2.0 * 1.0);
        assert_eq!(st.total_lag(), oracle);
        assert_eq!(st.total_lag(), 7.0);
        assert_eq!(st.total_unavail(), 2);
    }

    #[test]
    fn lost_feedback_reports_full_horizon() {
        let mut tl = Timeline::constant(6, 1);
        tl.drop_feedback(3);
        let st = tl.availability().delay_stats(&[1.0; 6]);
        assert_eq!(st.max_delay, 5);
    }

    #[test]
    fn backlog_out_of_order() {
        // Both arrive at time 3; the pair set does not depend on which is delivered first.
        let tl = Timeline::single_agent(vec![3, 3, NEVER]).unwrap();
        let av = tl.availability();
        let b = av.backlog_pairs(&tl, 3, BacklogVariant::Online).unwrap();
        assert_eq!(b, BTreeSet::from([(1, 2)]));
        let undelayed = Timeline::constant(6, 0);
        let av = undelayed.availability();
        for k in 1..=6 {
            assert!(av.backlog_pairs(&undelayed, k, BacklogVariant::Online).unwrap().is_empty());
        }
    }

    #[test]
    fn rho_examples() {
        let tl = Timeline::constant(6, 0);
        let av = tl.availability();
        for k in 1..=6 {
            assert_eq!(av.rho(&tl, k).unwrap(), 1);
        }
        let tl = Timeline::single_agent(vec![3, 4, 5]).unwrap();
        let av = tl.availability();
        assert_eq!(av.rho(&tl, 1).unwrap(), 1);
        assert_eq!(av.rho(&tl, 2).unwrap(), 4);
        assert_eq!(av.rho(&tl, 3).unwrap(), 6);
    }

    #[test]
    fn faithfulness() {
        let av = Timeline::constant(4, 0).availability();
        assert!(is_faithful(&[1, 2, 3, 4], &av));
        assert!(!is_faithful(&[2, 1, 3, 4], &av));
        assert!(!is_faithful(&[1, 1, 3, 4], &av));
        let key = [0.0, 5.0, 1.0, 2.0];
        let sigma = faithful_by_key(&av, &key);
        assert_eq!(sigma, vec![1, 2, 3, 4]);
        // Independent stamps reorder by key.
        let tl = Timeline::single_agent(vec![NEVER, NEVER, NEVER]).unwrap();
        let sigma = faithful_by_key(&tl.availability(), &[2.0, 1.0, 0.0]);
        assert_eq!(sigma, vec![3, 2, 1]);
    }

    #[test]
    fn relaxed_counts_sum() {
        let tl = Timeline::constant(7, 2);
        let av = tl.availability();
        let d = av.relaxed_counts();
        let st = av.delay_stats(&[1.0; 7]);
        assert_eq!(d.iter().sum::<usize>(), 2 * st.total_unavail() + 7);
    }
}
