//! Regret bounds evaluated on a finished single-stream run.

use super::{RatePolicy, StreamRun};
use crate::bounds::{BoundCheck, BoundId};
use crate::error::{Error, Result};
use crate::schedule::{faithful_by_key, is_faithful, Availability};

fn prefix_max(v: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    v.into_iter()
        .map(|x| {
            m = m.max(x);
            m
        })
        .collect()
}

fn not_applicable(id: BoundId, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("bound {id} does not apply to this run: {why}"))
}

/// Rate-independent part of the generic bound evaluated along `order`:
/// returns `h(p)/η_{last} + ½Σ η(‖g‖² + 2‖g‖Σ_{earlier \ S}‖g_s‖)` for every prefix.
fn generic_series(run: &StreamRun, avail: &Availability, order: &[usize]) -> Vec<f64> {
    let norms = run.norms();
    let etas = run.etas();
    let mut seen_sum = 0.0;
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(order.len());
    for &k in order {
        let used: f64 = avail.set(k).iter().map(|s| norms[s - 1]).sum();
        let n = norms[k - 1];
        acc += 0.5 * etas[k - 1] * (n * n + 2.0 * n * (seen_sum - used));
        seen_sum += n;
        out.push(run.h_comparator / etas[k - 1] + acc);
    }
    out
}

fn check_non_increasing(id: BoundId, etas: &[f64], order: &[usize]) -> Result<()> {
    for w in order.windows(2) {
        if etas[w[1] - 1] > etas[w[0] - 1] {
            return Err(not_applicable(id, format!("the rate increases from step {} to step {}", w[0], w[1])));
        }
    }
    Ok(())
}

fn policy_tau(id: BoundId, run: &StreamRun, measured: usize) -> Result<f64> {
    let tau = run.policy.tau().ok_or_else(|| not_applicable(id, "the policy has no delay bound"))?;
    if tau < measured {
        return Err(not_applicable(id, format!("configured tau={tau} is below the measured delay {measured}")));
    }
    Ok(tau as f64)
}

fn last(series: &[f64]) -> f64 {
    *series.last().unwrap_or(&0.0)
}

/// Evaluates one bound on a finished run. `r` and `g` are the constants of the
/// formula; the measured quantity is the actual regret against the run's comparator.
pub fn stream_bound(run: &StreamRun, id: BoundId, r: f64, g: f64) -> Result<BoundCheck> {
    let avail = &run.availability;
    let m = avail.len();
    let etas = run.etas();
    let stats = avail.delay_stats(&run.norms());
    let measured = run.ledger.actual;
    let time: Vec<usize> = (1..=m).collect();

    let is = |p: fn(&RatePolicy) -> bool| p(&run.policy);
    let series: Vec<f64> = match id {
        BoundId::DelayedDa => {
            check_non_increasing(id, &etas, &time)?;
            generic_series(run, avail, &time)
        }
        BoundId::FaithfulOrder => {
            let key: Vec<f64> = etas.iter().map(|e| -e).collect();
            let order = faithful_by_key(avail, &key);
            if !is_faithful(&order, avail) {
                return Err(Error::Internal("constructed order is not faithful".into()));
            }
            check_non_increasing(id, &etas, &order)?;
            let s = generic_series(run, avail, &order);
            return Ok(BoundCheck::new(id, measured, last(&s)));
        }
        BoundId::Decreasing => {
            if !is(|p| matches!(p, RatePolicy::Decreasing { .. })) {
                return Err(not_applicable(id, "needs the decreasing rate"));
            }
            let tau = policy_tau(id, run, stats.max_delay)?;
            time.iter().map(|t| 2.0 * r * g * (*t as f64 * (1.0 + 2.0 * tau)).sqrt()).collect()
        }
        BoundId::AdadelayO | BoundId::AdadelayOLag => {
            if !is(|p| matches!(p, RatePolicy::AdaDelayO { .. })) {
                return Err(not_applicable(id, "needs the adadelay_o rate"));
            }
            let tau = policy_tau(id, run, stats.max_delay)?;
            let extra = g * g * (2.0 * tau * tau + 3.0 * tau + 1.0);
            if id == BoundId::AdadelayO {
                run.steps.iter().map(|s| 2.0 * r * (s.lambda_hat.unwrap_or(0.0) + extra).sqrt()).collect()
            } else {
                stats.lag.iter().map(|l| 2.0 * r * (l + extra).sqrt()).collect()
            }
        }
        BoundId::AdadelayOPlus | BoundId::AdadelayOPlusLag => {
            if !is(|p| matches!(p, RatePolicy::AdaDelayOPlus { .. })) {
                return Err(not_applicable(id, "needs the adadelay_o_plus rate"));
            }
            if id == BoundId::AdadelayOPlus {
                let raw = run
                    .steps
                    .iter()
                    .map(|s| 2.0 * r * (s.lambda_hat.unwrap_or(0.0) + g * g * s.rho.unwrap_or(0) as f64).sqrt());
                let s = prefix_max(raw);
                return Ok(BoundCheck::new(id, measured, last(&s)).with_series(s).with_floor(1e-6));
            }
            let lag_part = prefix_max(
                (0..m).map(|k| 2.0 * r * (stats.lag[k] + g * g * run.steps[k].rho.unwrap_or(0) as f64).sqrt()),
            );
            (0..m)
                .map(|k| {
                    let cum = 2.0 * r * g * ((k + 1) as f64 + 2.0 * stats.cum_unavail[k] as f64).sqrt();
                    lag_part[k].min(cum)
                })
                .collect()
        }
        BoundId::CardDecreasing => {
            if !is(|p| matches!(p, RatePolicy::CardDecreasing { .. })) {
                return Err(not_applicable(id, "needs the card_decreasing rate"));
            }
            let tau = policy_tau(id, run, stats.max_delay)?;
            time.iter().map(|t| 2.0 * r * g * ((*t as f64 + tau) * (1.0 + 2.0 * tau)).sqrt()).collect()
        }
        BoundId::AdadelayDist | BoundId::AdadelayDistLag => {
            if !is(|p| matches!(p, RatePolicy::AdaDelayDist { .. })) {
                return Err(not_applicable(id, "needs the adadelay_dist rate"));
            }
            let tau = policy_tau(id, run, stats.max_delay)?;
            let c = g * g * (2.0 * tau + 1.0).powi(2);
            if id == BoundId::AdadelayDist {
                prefix_max(run.steps.iter().map(|s| 2.0 * r * (s.lambda_hat.unwrap_or(0.0) + c).sqrt()))
            } else {
                stats.lag.iter().map(|l| 2.0 * r * (l + c).sqrt()).collect()
            }
        }
        BoundId::ConstUnavail | BoundId::ConstCumulative | BoundId::ConstLag => {
            let RatePolicy::Constant { eta } = run.policy else {
                return Err(not_applicable(id, "needs a constant rate"));
            };
            let t = m as f64;
            let (tuned, rhs) = match id {
                BoundId::ConstUnavail => {
                    let o = stats.max_unavail as f64;
                    (r / (g * ((1.0 + 2.0 * o) * t).sqrt()), 2.0 * r * g * ((1.0 + 2.0 * o) * t).sqrt())
                }
                BoundId::ConstCumulative => {
                    let d = stats.total_unavail() as f64;
                    (r / (g * (t + 2.0 * d).sqrt()), 3.0 / 2f64.sqrt() * r * g * (d + t).sqrt())
                }
                _ => {
                    let l = stats.total_lag();
                    if !(l > 0.0) {
                        return Err(not_applicable(id, "the lag is zero"));
                    }
                    (r / l.sqrt(), 2.0 * r * l.sqrt())
                }
            };
            if (eta - tuned).abs() > 1e-12 * tuned.max(1.0) {
                return Err(not_applicable(id, format!("the rate {eta} is not the tuned rate {tuned}")));
            }
            return Ok(BoundCheck::new(id, measured, rhs));
        }
        _ => return Err(not_applicable(id, "not a single-stream bound")),
    };
    let rhs = last(&series);
    Ok(BoundCheck::new(id, measured, rhs).with_series(series))
}

/// The constant rate that tunes the given regime on a fixed feedback pattern.
pub fn tuned_constant_rate(id: BoundId, avail: &Availability, norms: &[f64], r: f64, g: f64) -> Result<f64> {
    let stats = avail.delay_stats(norms);
    let t = avail.len() as f64;
    match id {
        BoundId::ConstUnavail => Ok(r / (g * ((1.0 + 2.0 * stats.max_unavail as f64) * t).sqrt())),
        BoundId::ConstCumulative => Ok(r / (g * (t + 2.0 * stats.total_unavail() as f64).sqrt())),
        BoundId::ConstLag if stats.total_lag() > 0.0 => Ok(r / stats.total_lag().sqrt()),
        _ => Err(not_applicable(id, "no tuned constant rate")),
    }
}
