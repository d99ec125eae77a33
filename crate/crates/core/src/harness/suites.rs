//! Predefined experiment grids.
//!
//! Every member is an ordinary scenario built in code, so a failing member can
//! be dumped as a scenario file and rerun on its own.

use std::fmt::Write as _;
use std::path::Path;

use super::{run, scenario_from_file, RunReport, ScenarioFile};
use super::scenario::{
    ComparatorSection, DelaySection, GeometrySection, LossSection, NetworkSection, OptimisticSection, RateSection,
    RunSection,
};
use crate::bounds::inverse_sqrt_sum;
use crate::error::{Error, Result};
use crate::optimistic::{gen_lb_seq_periods, lb_proof_length, lr_pair_constant, variation};
use crate::rng::SimRng;

pub const SUITES: [&str; 4] = ["constant_rate_regimes", "optimistic_separation", "network_bounds", "adaptive_lemma"];

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub id: String,
    pub passed: bool,
    pub detail: String,
    /// The offending scenario, for failed entries.
    pub dump: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: String,
    pub entries: Vec<SuiteEntry>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn passed_count(&self) -> usize {
        self.entries.iter().filter(|e| e.passed).count()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            writeln!(out, "{} {} {}", if e.passed { "PASS" } else { "FAIL" }, e.id, e.detail).unwrap();
            if let Some(d) = &e.dump {
                for line in d.lines() {
                    writeln!(out, "    {line}").unwrap();
                }
            }
        }
        writeln!(
            out,
            "suite {}: {}/{} passed, {}",
            self.name,
            self.passed_count(),
            self.entries.len(),
            if self.passed() { "pass" } else { "fail" }
        )
        .unwrap();
        out
    }

    fn sorted(mut self) -> Self {
        self.entries.sort_by(|a, b| a.id.cmp(&b.id));
        self
    }
}

pub fn run_suite(name: &str) -> Result<SuiteReport> {
    let report = match name {
        "constant_rate_regimes" => constant_rate_regimes(),
        "optimistic_separation" => optimistic_separation()?,
        "network_bounds" => network_bounds(),
        "adaptive_lemma" => adaptive_lemma(1000),
        _ => {
            return Err(Error::Config(format!("unknown suite `{name}`; expected one of {}", SUITES.join(", "))))
        }
    };
    Ok(report.sorted())
}

fn base(name: String, algorithm: &str, horizon: Option<usize>, seed: u64, bounds: &[&str]) -> ScenarioFile {
    ScenarioFile {
        run: RunSection {
            name: Some(name),
            algorithm: algorithm.into(),
            horizon,
            seed: Some(seed),
            bound_checks: bounds.iter().map(|s| s.to_string()).collect(),
        },
        ..Default::default()
    }
}

/// Runs one scenario; returns the report or a failed entry carrying the dump.
pub fn run_member(file: &ScenarioFile) -> std::result::Result<RunReport, SuiteEntry> {
    let fail = |detail: String| SuiteEntry {
        id: file.run.name.clone().unwrap_or_default(),
        passed: false,
        detail,
        dump: Some(file.to_toml()),
    };
    let sc = scenario_from_file(file.clone(), Path::new(".")).map_err(|e| fail(e.to_string()))?;
    run(&sc).map_err(|e| fail(e.to_string()))
}

fn check_entries(file: &ScenarioFile, report: &RunReport) -> Vec<SuiteEntry> {
    report
        .checks
        .iter()
        .map(|c| SuiteEntry {
            id: format!("{}/{}", report.scenario, c.id),
            passed: c.satisfied(),
            detail: format!("measured={} rhs={} slack={}", c.measured, c.rhs, c.slack()),
            dump: (!c.satisfied()).then(|| file.to_toml()),
        })
        .collect()
}

/// Single-agent grid: `T = 200`, unit ball, linear losses with `G = 1`, IID
/// geometric delays capped at 10. No rate is set.
pub fn stream_grid(count: usize) -> Vec<ScenarioFile> {
    const P: [f64; 4] = [0.15, 0.3, 0.5, 0.8];
    (0..count)
        .map(|i| {
            let mut f = base(format!("grid{i:03}"), "dda", Some(200), i as u64, &[]);
            f.geometry = GeometrySection { kind: "ball".into(), dim: Some(2 + i % 3), radius: Some(1.0), ..Default::default() };
            f.losses = LossSection { kind: "random_linear".into(), gbound: Some(1.0), ..Default::default() };
            f.delays = Some(DelaySection {
                kind: "geometric".into(),
                p: Some(P[i % P.len()]),
                cap: Some(10),
                ..Default::default()
            });
            f
        })
        .collect()
}

/// The three constant-rate regimes on the single-agent grid, each at its tuned rate.
pub fn constant_rate_scenarios(count: usize) -> Vec<ScenarioFile> {
    let mut out = Vec::new();
    for f in stream_grid(count) {
        for (regime, bound) in [("unavail", "const_unavail"), ("cumulative", "const_cumulative"), ("lag", "const_lag")] {
            let mut g = f.clone();
            g.run.name = Some(format!("{}/{regime}", f.run.name.as_deref().unwrap_or("")));
            g.run.bound_checks = vec![bound.into()];
            g.rate = Some(RateSection { policy: Some("tuned".into()), regime: Some(regime.into()), ..Default::default() });
            out.push(g);
        }
    }
    out
}

fn run_grid(name: &str, files: Vec<ScenarioFile>) -> SuiteReport {
    let mut entries = Vec::new();
    for f in &files {
        match run_member(f) {
            Ok(report) => entries.extend(check_entries(f, &report)),
            Err(e) => entries.push(e),
        }
    }
    SuiteReport { name: name.into(), entries }
}

fn constant_rate_regimes() -> SuiteReport {
    run_grid("constant_rate_regimes", constant_rate_scenarios(100))
}

/// Open networks with `T = 100`, 1 to 4 active agents and delays capped at 0..=5,
/// each run once with the fixed rate and once with the deferred cardinality rate.
pub fn network_scenarios(count: usize) -> Vec<ScenarioFile> {
    let mut out = Vec::new();
    for i in 0..count {
        let mut f = base(String::new(), "ddda", Some(100), 1000 + i as u64, &[]);
        f.geometry = GeometrySection { kind: "ball".into(), dim: Some(2), radius: Some(1.0), ..Default::default() };
        f.losses = LossSection { kind: "random_linear".into(), gbound: Some(1.0), ..Default::default() };
        f.delays = Some(DelaySection {
            kind: "geometric".into(),
            p: Some(0.35),
            cap: Some(i % 6),
            ..Default::default()
        });
        f.network = Some(NetworkSection { activation: "open".into(), agents: Some(4), ..Default::default() });
        let mut fixed = f.clone();
        fixed.run.name = Some(format!("net{i:03}/fixed"));
        fixed.run.bound_checks = vec!["network_fixed".into(), "collective_gap".into()];
        fixed.rate = Some(RateSection { policy: Some("network_fixed".into()), ..Default::default() });
        let mut card = f;
        card.run.name = Some(format!("net{i:03}/card"));
        card.run.bound_checks = vec!["network_card".into(), "collective_gap".into()];
        card.rate =
            Some(RateSection { policy: Some("network_card".into()), usage: Some("defer".into()), ..Default::default() });
        out.push(fixed);
        out.push(card);
    }
    out
}

fn network_bounds() -> SuiteReport {
    run_grid("network_bounds", network_scenarios(50))
}

/// The paired instances for one `m`: the periods sequence against `p = 0`
/// and the zero-one sequence against `p = −1`, with `ℓ` the block length of
/// the impossibility argument and last-uniform guesses.
pub fn separation_pair(m: usize, tau: usize, rate: &RateSection, label: &str) -> [ScenarioFile; 2] {
    let ell = lb_proof_length(m, tau);
    let make = |kind: &str, p: f64, tag: &str| {
        let mut f = base(format!("sep/m{m}/{label}/{tag}"), "doda", None, 0, &[]);
        f.geometry = GeometrySection { kind: "free".into(), dim: Some(1), ..Default::default() };
        f.losses =
            LossSection { kind: kind.into(), m: Some(m), ell: Some(ell), tau: Some(tau), ..Default::default() };
        f.delays = Some(DelaySection { kind: "constant".into(), tau: Some(tau), ..Default::default() });
        f.rate = Some(rate.clone());
        f.optimistic = Some(OptimisticSection { guess: Some("last_uniform".into()), tau: Some(tau), x_start: None });
        f.comparator = Some(ComparatorSection { kind: "point".into(), point: Some(vec![p]), radius: None });
        f
    };
    [make("lb_periods", 0.0, "periods"), make("lb_zero_one", -1.0, "zero_one")]
}

fn optimistic_separation() -> Result<SuiteReport> {
    let tau = 1;
    let mut entries = Vec::new();
    for m in [3usize, 5, 9] {
        let v = variation(&gen_lb_seq_periods(m, lb_proof_length(m, tau), tau)?, tau + 1)?;
        let (eta, _) = lr_pair_constant(1.0, tau, v)?;
        let single = RateSection {
            policy: Some("pair".into()),
            eta: Some(eta),
            eta_tilde: Some(eta),
            ..Default::default()
        };
        let dual = RateSection {
            policy: Some("variation".into()),
            r: Some(1.0),
            tau: Some(tau),
            vbar: Some(v),
            ..Default::default()
        };
        let single_files = separation_pair(m, tau, &single, "single");
        let mut regrets = Vec::new();
        for f in &single_files {
            match run_member(f) {
                Ok(r) => regrets.push((r.totals.regret, r.horizon)),
                Err(e) => entries.push(e),
            }
        }
        if let [(r1, t), (r2, _)] = regrets[..] {
            let sum = r1 + r2;
            let half_sqrt_t = (t as f64).sqrt() / 2.0;
            let dump = || Some(single_files.iter().map(ScenarioFile::to_toml).collect::<Vec<_>>().join("\n"));
            entries.push(SuiteEntry {
                id: format!("sep/m{m}/single/variation"),
                passed: sum >= v / 2.0,
                detail: format!("R1+R2={sum} V/2={}", v / 2.0),
                dump: (sum < v / 2.0).then(dump).flatten(),
            });
            entries.push(SuiteEntry {
                id: format!("sep/m{m}/single/sqrt_horizon"),
                passed: sum >= half_sqrt_t,
                detail: format!("R1+R2={sum} sqrt(T)/2={half_sqrt_t}"),
                dump: (sum < half_sqrt_t).then(dump).flatten(),
            });
        }
        for mut f in separation_pair(m, tau, &dual, "dual") {
            f.run.bound_checks = vec!["optimistic_variation".into()];
            match run_member(&f) {
                Ok(r) => entries.extend(check_entries(&f, &r)),
                Err(e) => entries.push(e),
            }
        }
    }
    Ok(SuiteReport { name: "optimistic_separation".into(), entries })
}

/// Random positive sequences of varied length and scale, drawn from seed 0.
pub fn lemma_sequences(count: usize) -> Vec<Vec<f64>> {
    let mut rng = SimRng::new(0);
    (0..count)
        .map(|i| {
            let len = 1 + rng.below(200) as usize;
            (0..len)
                .map(|_| match i % 4 {
                    0 => rng.range(1e-3, 1.0),
                    1 => rng.uniform().powi(6) * 1e3 + 1e-12,
                    2 => rng.range(0.5, 2.0) * 10f64.powi(rng.below(13) as i32 - 6),
                    _ => {
                        if rng.bernoulli(0.9) {
                            1e-9
                        } else {
                            rng.range(1.0, 100.0)
                        }
                    }
                })
                .collect()
        })
        .collect()
}

fn adaptive_lemma(count: usize) -> SuiteReport {
    let mut entries = Vec::new();
    let mut ok = 0;
    for (i, a) in lemma_sequences(count).iter().enumerate() {
        let (lhs, rhs) = inverse_sqrt_sum(a);
        if lhs <= rhs + 1e-9 {
            ok += 1;
        } else {
            entries.push(SuiteEntry {
                id: format!("lemma/{i:04}"),
                passed: false,
                detail: format!("lhs={lhs} rhs={rhs}"),
                dump: Some(format!("{a:?}")),
            });
        }
    }
    entries.push(SuiteEntry {
        id: "lemma/all".into(),
        passed: ok == count,
        detail: format!("{ok}/{count} random sequences satisfy the inequality"),
        dump: None,
    });
    SuiteReport { name: "adaptive_lemma".into(), entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adaptive_lemma_suite_passes() {
        let r = run_suite("adaptive_lemma").unwrap();
        assert!(r.passed());
        assert!(r.render().contains("1000/1000"));
    }

    #[test]
    fn unknown_suite_rejected() {
        assert!(run_suite("nope").is_err());
    }

    #[test]
    fn grid_members_are_valid_scenarios() {
        for f in constant_rate_scenarios(2).iter().chain(&network_scenarios(2)) {
            scenario_from_file(f.clone(), Path::new(".")).unwrap();
        }
    }
}
