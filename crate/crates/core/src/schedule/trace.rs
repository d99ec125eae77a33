//! Text formats for recorded timelines.
//!
//! * Arrival trace: one row per delivery, `origin_time producer arrival_agent arrival_time`,
//!   where `arrival_time` may be `inf`. The active agents at time `t` are the
//!   producers listed with origin `t`, in ascending id order. Deliveries that
//!   are not listed never happen.
//! * Open-network trace: rows `t agent_id`, one per active agent.
//! * Latency table: rows `producer consumer delay`.
//!
//! Blank lines and lines starting with `#` are ignored everywhere.

use std::collections::{BTreeMap, BTreeSet};

use super::{LatencyTable, Timeline, NEVER};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRow {
    pub origin_time: usize,
    pub producer: usize,
    pub arrival_agent: usize,
    pub arrival_time: usize,
}

fn rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(n, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            None
        } else {
            Some((n + 1, line.split_whitespace().collect()))
        }
    })
}

fn int(field: &str, line: usize, name: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| Error::Validation(format!("line {line}: {name} `{field}` is not a non-negative integer")))
}

fn columns(fields: &[&str], line: usize, n: usize) -> Result<()> {
    if fields.len() != n {
        return Err(Error::Validation(format!("line {line}: expected {n} columns, found {}", fields.len())));
    }
    Ok(())
}

/// Parses an arrival trace into a timeline.
pub fn parse_trace(text: &str) -> Result<Timeline> {
    let mut parsed = Vec::new();
    for (line, f) in rows(text) {
        columns(&f, line, 4)?;
        let arrival_time = if f[3].eq_ignore_ascii_case("inf") { NEVER } else { int(f[3], line, "arrival_time")? };
        let row = TraceRow {
            origin_time: int(f[0], line, "origin_time")?,
            producer: int(f[1], line, "producer")?,
            arrival_agent: int(f[2], line, "arrival_agent")?,
            arrival_time,
        };
        if row.origin_time == 0 {
            return Err(Error::Validation(format!("line {line}: times start at 1")));
        }
        if row.arrival_time != NEVER && row.arrival_time <= row.origin_time {
            return Err(Error::Validation(format!(
                "line {line}: feedback from time {} cannot arrive at time {}",
                row.origin_time, row.arrival_time
            )));
        }
        parsed.push((line, row));
    }
    timeline_from_rows(&parsed)
}

fn timeline_from_rows(rows: &[(usize, TraceRow)]) -> Result<Timeline> {
    let horizon = rows.iter().map(|(_, r)| r.origin_time).max().ok_or_else(|| {
        Error::Validation("trace has no rows".into())
    })?;
    let mut producers: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); horizon];
    let mut num_agents = 0;
    for (_, r) in rows {
        producers[r.origin_time - 1].insert(r.producer);
        num_agents = num_agents.max(r.producer + 1).max(r.arrival_agent + 1);
    }
    if let Some(t0) = producers.iter().position(|p| p.is_empty()) {
        return Err(Error::Validation(format!("no feedback rows originate at time {}", t0 + 1)));
    }
    let active: Vec<Vec<usize>> = producers.iter().map(|p| p.iter().copied().collect()).collect();
    let mut stamp_of = BTreeMap::new();
    let mut k = 0;
    for (t0, agents) in active.iter().enumerate() {
        for a in agents {
            k += 1;
            stamp_of.insert((t0 + 1, *a), k);
        }
    }
    let mut arrivals = vec![vec![NEVER; k]; num_agents];
    let mut seen = BTreeSet::new();
    for (line, r) in rows {
        if !seen.insert((r.origin_time, r.producer, r.arrival_agent)) {
            return Err(Error::Validation(format!(
                "line {line}: duplicate delivery of ({}, {}) to agent {}",
                r.origin_time, r.producer, r.arrival_agent
            )));
        }
        arrivals[r.arrival_agent][stamp_of[&(r.origin_time, r.producer)] - 1] = r.arrival_time;
    }
    Timeline::from_parts(active, num_agents, arrivals)
}

impl Timeline {
    /// Serializes every finite or infinite delivery as an arrival trace.
    pub fn to_trace(&self) -> String {
        let mut out = String::from("# origin_time producer arrival_agent arrival_time\n");
        for k in 1..=self.num_slots() {
            let s = self.slot(k);
            for i in 0..self.num_agents() {
                let a = self.arrival(i, k);
                let a = if a == NEVER { "inf".to_string() } else { a.to_string() };
                out.push_str(&format!("{} {} {} {}\n", s.time, s.agent, i, a));
            }
        }
        out
    }
}

/// Parses an open-network trace into per-time active lists (ascending ids).
pub fn parse_network_trace(text: &str) -> Result<Vec<Vec<usize>>> {
    let mut by_time: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (line, f) in rows(text) {
        columns(&f, line, 2)?;
        let t = int(f[0], line, "t")?;
        let a = int(f[1], line, "agent_id")?;
        if t == 0 {
            return Err(Error::Validation(format!("line {line}: times start at 1")));
        }
        if !by_time.entry(t).or_default().insert(a) {
            return Err(Error::Validation(format!("line {line}: agent {a} listed twice at time {t}")));
        }
    }
    let horizon = by_time.keys().max().copied().ok_or_else(|| Error::Validation("network trace has no rows".into()))?;
    (1..=horizon)
        .map(|t| {
            by_time
                .get(&t)
                .map(|s| s.iter().copied().collect())
                .ok_or_else(|| Error::Validation(format!("no active agent at time {t}")))
        })
        .collect()
}

pub fn parse_latency_table(text: &str) -> Result<LatencyTable> {
    let mut table = LatencyTable::default();
    for (line, f) in rows(text) {
        columns(&f, line, 3)?;
        let key = (int(f[0], line, "producer")?, int(f[1], line, "consumer")?);
        let delay = int(f[2], line, "delay")?;
        if table.entries.insert(key, delay).is_some() {
            return Err(Error::Validation(format!("line {line}: duplicate link {key:?}")));
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trip() {
        let mut tl = Timeline::pooled_cyclic(2, 1, 6).unwrap();
        tl.drop_feedback(2);
        let parsed = parse_trace(&tl.to_trace()).unwrap();
        assert_eq!(parsed, tl);
    }

    #[test]
    fn trace_rejects_early_arrival_and_duplicates() {
        assert!(matches!(parse_trace("1 0 0 1\n"), Err(Error::Validation(_))));
        assert!(matches!(parse_trace("1 0 0 2\n1 0 0 3\n"), Err(Error::Validation(_))));
        assert!(matches!(parse_trace("2 0 0 3\n"), Err(Error::Validation(_))));
    }

    #[test]
    fn trace_missing_rows_never_arrive() {
        let tl = parse_trace("1 0 0 3\n2 0 0 inf\n3 0 0 4\n").unwrap();
        assert_eq!(tl.available_set(3), vec![1]);
        assert_eq!(tl.arrival(0, 2), NEVER);
    }

    #[test]
    fn network_trace_and_latency() {
        let act = parse_network_trace("# t agent\n1 3\n1 0\n2 1\n").unwrap();
        assert_eq!(act, vec![vec![0, 3], vec![1]]);
        assert!(parse_network_trace("2 0\n").is_err());
        let lat = parse_latency_table("0 1 2\n1 0 5\n").unwrap();
        assert_eq!(lat.get(0, 1), 2);
        assert_eq!(lat.get(1, 1), 0);
        assert!(parse_latency_table("0 1 2\n0 1 3\n").is_err());
    }
}
