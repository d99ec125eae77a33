use std::collections::BTreeSet;

use delay_da::bounds::inverse_sqrt_sum;
use delay_da::dda::{run_stream, RatePolicy, StreamConfig, Usage};
use delay_da::geometry::{norm2, sub, DualVector, Geometry, Point};
use delay_da::losses::{Loss, LossSequence};
use delay_da::optimistic::{lr_pair_adaptive, run_optimistic, GuessPolicy, OptimisticConfig, OptimisticRate};
use delay_da::schedule::{Availability, BacklogVariant, Timeline, NEVER};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn geometry(kind: u8, dim: usize) -> Geometry {
    match kind % 4 {
        0 => Geometry::ball(dim, 1.5).unwrap(),
        1 => Geometry::boxed(vec![-1.0; dim], vec![0.5; dim]).unwrap(),
        2 => Geometry::simplex(dim).unwrap(),
        _ => Geometry::free(dim).unwrap(),
    }
}

fn dual(v: &[f64]) -> DualVector {
    DualVector(v.to_vec())
}

/// Single-agent arrivals: each stamp arrives after `delay` steps, or never.
fn arrivals() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec((1usize..7, prop::bool::weighted(0.08)), 1..25).prop_map(|v| {
        v.iter().enumerate().map(|(k0, (d, lost))| if *lost { NEVER } else { k0 + 1 + d }).collect()
    })
}

fn bounded_arrivals() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..7, 1..25)
        .prop_map(|v| v.iter().enumerate().map(|(k0, d)| k0 + 1 + d).collect())
}

/// Several agents, one to three active per time, arrival delays per link.
fn network() -> impl Strategy<Value = Timeline> {
    (1usize..4, 1usize..12).prop_flat_map(|(n, horizon)| {
        let active = prop::collection::vec(prop::sample::subsequence((0..n).collect::<Vec<_>>(), 1..=n), horizon);
        (Just(n), active, prop::collection::vec(1usize..5, n * horizon * n))
    })
    .prop_map(|(n, active, delays)| {
        let slots: Vec<usize> = active.iter().enumerate().flat_map(|(t0, a)| a.iter().map(move |_| t0 + 1)).collect();
        let m = slots.len();
        let arrivals = (0..n)
            .map(|i| (0..m).map(|k0| slots[k0] + delays[(i * m + k0) % delays.len()]).collect())
            .collect();
        Timeline::from_parts(active, n, arrivals).unwrap()
    })
}

fn brute_backlog(avail: &Availability, k: usize) -> BTreeSet<(usize, usize)> {
    let set = avail.set(k);
    let mut out = BTreeSet::new();
    for (i, &s) in set.iter().enumerate() {
        for &r in &set[i + 1..] {
            if !avail.contains(r, s) && !avail.contains(s, r) {
                out.insert((s, r));
            }
        }
    }
    out
}

fn linear_losses(seed: &[f64], dim: usize) -> LossSequence {
    let losses = seed
        .chunks(dim)
        .map(|c| {
            let mut g = c.to_vec();
            g.resize(dim, 0.0);
            let n = norm2(&g).max(1.0);
            Loss::Linear(DualVector(g.iter().map(|v| v / n).collect()))
        })
        .collect();
    LossSequence::new(losses, 1.0)
}

fn adaptive_run(arr: &[usize], grads: &[f64], policy: RatePolicy) -> delay_da::dda::StreamRun {
    let tl = Timeline::single_agent(arr.to_vec()).unwrap();
    let geom = Geometry::ball(2, 1.0).unwrap();
    let mut g = grads.to_vec();
    g.resize(2 * arr.len(), 0.3);
    let losses = linear_losses(&g[..2 * arr.len()], 2);
    let p = Point(vec![0.0, 0.0]);
    run_stream(&StreamConfig {
        geometry: &geom,
        losses: &losses,
        timeline: &tl,
        policy,
        usage: Usage::AllReceived,
        comparator: &p,
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mirror_map_is_non_expansive(
        kind in 0u8..4,
        y in prop::collection::vec(-20.0f64..20.0, 4),
        yp in prop::collection::vec(-20.0f64..20.0, 4),
    ) {
        let geom = geometry(kind, 4);
        let (a, b) = (geom.mirror_map(&dual(&y)), geom.mirror_map(&dual(&yp)));
        let lhs = geom.primal_norm(&sub(&a.0, &b.0));
        let rhs = geom.dual_norm(&dual(&sub(&y, &yp)));
        prop_assert!(lhs <= rhs + TOL, "{lhs} > {rhs}");
    }

    #[test]
    fn bregman_dominates_half_squared_norm(
        kind in 0u8..4,
        y in prop::collection::vec(-5.0f64..5.0, 3),
        yp in prop::collection::vec(-5.0f64..5.0, 3),
    ) {
        let geom = geometry(kind, 3);
        let (x, xp) = (geom.mirror_map(&dual(&y)), geom.mirror_map(&dual(&yp)));
        let d = geom.bregman(&x, &xp).unwrap();
        let n = geom.primal_norm(&sub(&x.0, &xp.0));
        prop_assert!(d >= 0.5 * n * n - TOL, "{d} < {}", 0.5 * n * n);
        prop_assert!(geom.is_feasible(&x));
    }

    #[test]
    fn inverse_sqrt_sum_inequality(a in prop::collection::vec(1e-9f64..1e3, 1..100)) {
        let (lhs, rhs) = inverse_sqrt_sum(&a);
        prop_assert!(lhs <= rhs + TOL);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn available_sets_partition_the_past(arr in arrivals()) {
        let tl = Timeline::single_agent(arr).unwrap();
        for k in 1..=tl.num_slots() {
            let s = tl.available_set(k);
            let u = tl.unavailable_set(k);
            prop_assert_eq!(s.len() + u.len(), k - 1);
            prop_assert!(s.iter().chain(&u).all(|j| *j < k));
        }
        prop_assert!(tl.availability().is_time_monotone());
    }

    #[test]
    fn constant_delay_sets(horizon in 1usize..30, tau in 0usize..6) {
        let tl = Timeline::constant(horizon, tau);
        for t in 1..=horizon {
            let expected: Vec<usize> = (1..t.saturating_sub(tau)).collect();
            prop_assert_eq!(tl.available_set(t), expected);
        }
        prop_assert_eq!(tl.max_delay(), tau.min(horizon - 1));
    }

    #[test]
    fn max_delay_matches_stats(tl in network()) {
        let avail = tl.availability();
        let stats = avail.delay_stats(&vec![1.0; tl.num_slots()]);
        prop_assert_eq!(tl.max_delay(), stats.max_delay);
    }

    #[test]
    fn single_agent_delay_measures(arr in arrivals(), norms in prop::collection::vec(0.0f64..2.0, 25)) {
        let tl = Timeline::single_agent(arr).unwrap();
        let avail = tl.availability();
        let m = tl.num_slots();
        let stats = avail.delay_stats(&norms[..m]);
        prop_assert_eq!(tl.max_delay(), stats.max_delay);
        prop_assert!(stats.max_unavail <= stats.max_delay);
        prop_assert!(stats.total_unavail() <= stats.max_unavail * m);
        let relaxed: usize = avail.relaxed_counts().iter().sum();
        prop_assert_eq!(relaxed, 2 * stats.total_unavail() + m);
    }

    #[test]
    fn arrival_order_stays_within_the_delay(arr in bounded_arrivals()) {
        let tl = Timeline::single_agent(arr).unwrap();
        let tau = tl.max_delay() as i64;
        for (p, k) in tl.arrival_order(0).iter().enumerate() {
            prop_assert!((p as i64 + 1 - *k as i64).abs() <= tau, "stamp {k} at position {}", p + 1);
        }
    }

    #[test]
    fn online_backlog_matches_pair_characterization(arr in arrivals()) {
        let tl = Timeline::single_agent(arr).unwrap();
        let avail = tl.availability();
        let all = avail.backlog_all(&tl, BacklogVariant::Online).unwrap();
        for k in 1..=avail.len() {
            prop_assert_eq!(&all[k - 1], &brute_backlog(&avail, k), "k={}", k);
        }
    }

    #[test]
    fn distributed_backlog_matches_pair_characterization(tl in network()) {
        let avail = tl.availability();
        prop_assume!(tl.satisfies_in_order(&avail));
        let all = avail.backlog_all(&tl, BacklogVariant::Distributed).unwrap();
        for k in 1..=avail.len() {
            prop_assert_eq!(&all[k - 1], &brute_backlog(&avail, k), "k={}", k);
        }
    }

    #[test]
    fn incremental_rho_matches_scratch(arr in arrivals(), g in prop::collection::vec(-1.0f64..1.0, 50)) {
        let run = adaptive_run(&arr, &g, RatePolicy::AdaDelayOPlus { r: 1.0, g: 1.0 });
        let tl = Timeline::single_agent(arr).unwrap();
        for (k0, step) in run.steps.iter().enumerate() {
            prop_assert_eq!(step.rho, Some(run.availability.rho(&tl, k0 + 1).unwrap()));
        }
    }

    #[test]
    fn lag_proxy_below_lag(arr in arrivals(), g in prop::collection::vec(-1.0f64..1.0, 50)) {
        let run = adaptive_run(&arr, &g, RatePolicy::AdaDelayOPlus { r: 1.0, g: 1.0 });
        let stats = run.availability.delay_stats(&run.norms());
        for (k0, step) in run.steps.iter().enumerate() {
            let proxy = step.lambda_hat.unwrap();
            prop_assert!(proxy <= stats.lag[k0] + TOL, "step {}: {proxy} > {}", k0 + 1, stats.lag[k0]);
        }
        let etas = run.etas();
        prop_assert!(etas.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn adaptive_pair_recomputed_from_scratch(
        tau in 0usize..4,
        horizon in 2usize..40,
        centers in prop::collection::vec(-0.5f64..0.5, 80),
    ) {
        let losses = LossSequence::new(
            (0..horizon).map(|t| Loss::Quadratic { center: centers[2 * t..2 * t + 2].to_vec(), scale: 1.0 }).collect(),
            2.0,
        );
        let tl = Timeline::constant(horizon, tau);
        let (r, g, l) = (1.0, 2.0, 1.0);
        let run = run_optimistic(&OptimisticConfig {
            dim: 2,
            x_start: Point(vec![0.0, 0.0]),
            losses: &losses,
            timeline: &tl,
            guess: GuessPolicy::FieldGlobal,
            rate: OptimisticRate::Adaptive { r, g, l, tau },
            comparator: Point(vec![0.0, 0.0]),
        })
        .unwrap();
        for (t0, step) in run.steps.iter().enumerate() {
            let a: f64 = tl.available_set(t0 + 1).iter().map(|s| run.steps[s - 1].deviation).sum();
            let (eta, eta_tilde) = lr_pair_adaptive(a, r, g, l, tau);
            prop_assert!((step.eta - eta).abs() <= 1e-12 * eta);
            prop_assert!((step.eta_tilde - eta_tilde).abs() <= 1e-12 * eta_tilde);
            prop_assert!(step.eta_tilde >= step.eta);
        }
    }

    #[test]
    fn linearized_regret_dominates_actual(arr in arrivals(), c in prop::collection::vec(-1.0f64..1.0, 50)) {
        let tl = Timeline::single_agent(arr).unwrap();
        let m = tl.num_slots();
        let geom = Geometry::ball(2, 1.0).unwrap();
        let losses = LossSequence::new(
            (0..m).map(|k| Loss::Quadratic { center: vec![c[2 * k], c[2 * k + 1]], scale: 0.5 }).collect(),
            2.0,
        );
        let p = Point(vec![0.1, -0.2]);
        let run = run_stream(&StreamConfig {
            geometry: &geom,
            losses: &losses,
            timeline: &tl,
            policy: RatePolicy::Constant { eta: 0.3 },
            usage: Usage::AllReceived,
            comparator: &p,
        })
        .unwrap();
        prop_assert!(run.ledger.linearized >= run.ledger.actual - TOL);
    }
}
