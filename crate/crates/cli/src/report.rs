// SPDX-License-Identifier: Apache-2.0

//! Summary rows, overhead comparison and their text renderings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{self, Write};

use edgefed_core::metrics::{aggregate_rows, AggregateStats, TraceRow, SEGMENT_NAMES};
use edgefed_core::simkernel::ValidatorPolicy;
use edgefed_core::{Address, ConsensusConfig, ScenarioConfig, Variant};
use serde::Serialize;

use crate::Failure;

#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub consensus: Variant,
    pub n_systems: u32,
    pub n_rows: usize,
    pub n_incomplete: usize,
    pub stats: Option<AggregateStats>,
    /// Mean total minus the SOA mean total at the same N.
    pub overhead_s: Option<f64>,
}

impl SummaryRow {
    pub fn from_rows(consensus: Variant, n_systems: u32, rows: &[TraceRow]) -> Self {
        Self {
            consensus,
            n_systems,
            n_rows: rows.len(),
            n_incomplete: rows.iter().filter(|r| !r.complete()).count(),
            stats: aggregate_rows(rows).ok(),
            overhead_s: None,
        }
    }

    fn mean_total(&self) -> Option<f64> {
        self.stats.as_ref().map(|s| s.total.mean)
    }
}

pub fn attach_overheads(rows: &mut [SummaryRow]) {
    let soa: BTreeMap<u32, f64> = rows
        .iter()
        .filter(|r| r.consensus == Variant::Soa)
        .filter_map(|r| Some((r.n_systems, r.mean_total()?)))
        .collect();
    for r in rows.iter_mut().filter(|r| r.consensus != Variant::Soa) {
        r.overhead_s = match (r.mean_total(), soa.get(&r.n_systems)) {
            (Some(t), Some(base)) => Some(t - base),
            _ => None,
        };
    }
}

pub fn check_complete(rows: &[SummaryRow]) -> Result<(), Failure> {
    let empty: Vec<String> =
        rows.iter().filter(|r| r.stats.is_none()).map(|r| format!("{} n={}", r.consensus, r.n_systems)).collect();
    if empty.is_empty() {
        Ok(())
    } else {
        Err(Failure::Incomplete(format!("no complete federation in: {}", empty.join(", "))))
    }
}

fn opt(v: Option<f64>, width: usize) -> String {
    match v {
        Some(v) => format!("{v:>width$.3}"),
        None => format!("{:>width$}", "-"),
    }
}

pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:>4} {:>6} {:>6} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "variant", "n", "rows", "incmpl", "bidding", "winner", "info", "deploy", "confirm", "total", "var", "overhead"
    );
    for r in rows {
        let seg = |i: usize| r.stats.as_ref().map(|s| s.segments()[i].mean);
        let _ = writeln!(
            out,
            "{:<8} {:>4} {:>6} {:>6} {} {} {} {} {} {} {} {}",
            r.consensus.as_str(),
            r.n_systems,
            r.n_rows,
            r.n_incomplete,
            opt(seg(0), 9),
            opt(seg(1), 9),
            opt(seg(2), 9),
            opt(seg(3), 9),
            opt(seg(4), 9),
            opt(seg(5), 9),
            opt(r.stats.as_ref().map(|s| s.total.variance), 9),
            opt(r.overhead_s, 9),
        );
    }
    out
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// One line per (variant, N) with the mean of every segment.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut out: W) -> io::Result<()> {
    let means: Vec<String> = SEGMENT_NAMES.iter().map(|s| format!("mean_{s}")).collect();
    writeln!(
        out,
        "consensus,n_systems,n_rows,n_incomplete,{},var_total_s,min_total_s,max_total_s,overhead_s",
        means.join(",")
    )?;
    for r in rows {
        let s = r.stats.as_ref();
        let segs: Vec<String> = (0..6).map(|i| cell(s.map(|s| s.segments()[i].mean))).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.consensus,
            r.n_systems,
            r.n_rows,
            r.n_incomplete,
            segs.join(","),
            cell(s.map(|s| s.total.variance)),
            cell(s.map(|s| s.total.min)),
            cell(s.map(|s| s.total.max)),
            cell(r.overhead_s),
        )?;
    }
    out.flush()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub n_systems: u32,
    pub blockchain_total_s: f64,
    pub soa_total_s: f64,
    pub overhead_s: f64,
}

fn by_n(rows: &[TraceRow]) -> BTreeMap<u32, Vec<TraceRow>> {
    let mut out: BTreeMap<u32, Vec<TraceRow>> = BTreeMap::new();
    for r in rows {
        out.entry(r.n_systems).or_default().push(r.clone());
    }
    out
}

pub fn compare(chain: &[TraceRow], soa: &[TraceRow]) -> Result<Vec<CompareRow>, String> {
    let chain = by_n(chain);
    let soa = by_n(soa);
    let a: BTreeSet<u32> = chain.keys().copied().collect();
    let b: BTreeSet<u32> = soa.keys().copied().collect();
    if a != b || a.is_empty() {
        return Err(format!("mismatched scenarios: blockchain covers N {a:?}, SOA covers N {b:?}"));
    }
    chain
        .iter()
        .map(|(&n, rows)| {
            let mean = |rows: &[TraceRow], what: &str| {
                aggregate_rows(rows).map(|s| s.total.mean).map_err(|e| format!("{what} at N={n}: {e}"))
            };
            let c = mean(rows, "blockchain")?;
            let s = mean(&soa[&n], "SOA")?;
            Ok(CompareRow { n_systems: n, blockchain_total_s: c, soa_total_s: s, overhead_s: c - s })
        })
        .collect()
}

pub fn compare_table(rows: &[CompareRow]) -> String {
    let mut out = format!("{:>4} {:>12} {:>12} {:>12}\n", "n", "blockchain", "soa", "overhead");
    for r in rows {
        let _ = writeln!(
            out,
            "{:>4} {:>12.3} {:>12.3} {:>12.3}",
            r.n_systems, r.blockchain_total_s, r.soa_total_s, r.overhead_s
        );
    }
    out
}

pub fn config_warnings(cfg: &ScenarioConfig) -> Vec<String> {
    let Some(algorithm) = cfg.variant.consensus() else { return Vec::new() };
    let members = match cfg.validator_policy {
        ValidatorPolicy::ProvidersAndBootstrap => cfg.split.providers + 1,
        ValidatorPolicy::AllSystems => cfg.split.total() + 1,
    };
    let validators = (0..members).map(|i| Address::from_label(&format!("validator-{i}"))).collect();
    ConsensusConfig::new(algorithm, validators).warnings()
}

#[cfg(test)]
mod tests {
    use super::*;
    use edgefed_core::PhaseBreakdown;
    use edgefed_core::SimDuration;

    fn row(consensus: &str, n: u32, total_s: f64) -> TraceRow {
        let total = SimDuration::from_secs_f64(total_s).unwrap();
        TraceRow {
            scenario_id: "t".into(),
            consensus: consensus.into(),
            n_systems: n,
            run: 0,
            ann_id: Some(0),
            breakdown: Some(PhaseBreakdown { bidding: total, total, ..Default::default() }),
        }
    }

    #[test]
    fn overhead_is_difference_of_means() {
        let table = compare(&[row("clique", 2, 18.0)], &[row("soa", 2, 2.6)]).unwrap();
        assert_eq!(table.len(), 1);
        assert!((table[0].overhead_s - 15.4).abs() < 1e-9);
    }

    #[test]
    fn identical_inputs_have_zero_overhead() {
        let rows = [row("clique", 2, 18.0), row("clique", 10, 25.0)];
        let table = compare(&rows, &rows).unwrap();
        assert!(table.iter().all(|r| r.overhead_s == 0.0));
    }

    #[test]
    fn different_n_sets_rejected() {
        let err = compare(&[row("clique", 2, 18.0)], &[row("soa", 10, 2.6)]).unwrap_err();
        assert!(err.contains("mismatched"));
    }

    #[test]
    fn qbft_with_two_validators_warns() {
        let cfg = ScenarioConfig::default().with_variant(Variant::Qbft);
        assert_eq!(config_warnings(&cfg).len(), 1);
        assert!(config_warnings(&cfg.with_variant(Variant::Soa)).is_empty());
    }
}
