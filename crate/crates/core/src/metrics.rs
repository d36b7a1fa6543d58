// SPDX-License-Identifier: Apache-2.0

//! Federation traces, their phase decomposition, aggregation and export.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::contract::AnnId;
use crate::ledger::Address;
use crate::units::{SimDuration, SimTime};

/// Timeline of one federation. Every timestamp is optional so that
/// federations cut off by the scenario timeout still produce a trace.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FederationTrace {
    pub run: u32,
    pub ann_id: Option<AnnId>,
    pub consumer: Address,
    pub winner: Option<Address>,
    pub announce_submitted: Option<SimTime>,
    pub announce_finalized: Option<SimTime>,
    /// Final block in which the bid count first met the selection threshold.
    pub second_bid_finalized: Option<SimTime>,
    pub winner_finalized: Option<SimTime>,
    pub deployment_started: Option<SimTime>,
    pub confirm_finalized: Option<SimTime>,
    /// Consumer finished the overlay attach; the federation is up.
    pub established: Option<SimTime>,
    /// On-chain bookkeeping close; not part of the federation time.
    pub close_finalized: Option<SimTime>,
}

impl FederationTrace {
    pub fn is_complete(&self) -> bool {
        self.timeline().iter().all(Option::is_some)
    }

    fn timeline(&self) -> [Option<SimTime>; 7] {
        [
            self.announce_submitted,
            self.announce_finalized,
            self.second_bid_finalized,
            self.winner_finalized,
            self.deployment_started,
            self.confirm_finalized,
            self.established,
        ]
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseBreakdown {
    pub bidding: SimDuration,
    pub winner_selection: SimDuration,
    /// Winner final until deployment starts, provider queue wait included.
    pub info_exchange: SimDuration,
    pub deployment: SimDuration,
    pub confirmation: SimDuration,
    pub total: SimDuration,
}

impl PhaseBreakdown {
    /// Blockchain-specific part of the federation time.
    pub fn negotiation_overhead(&self) -> SimDuration {
        self.bidding + self.winner_selection + self.info_exchange + self.confirmation
    }

    pub fn segments(&self) -> [SimDuration; 6] {
        [self.bidding, self.winner_selection, self.info_exchange, self.deployment, self.confirmation, self.total]
    }
}

pub const SEGMENT_NAMES: [&str; 6] =
    ["bidding_s", "winner_selection_s", "info_exchange_s", "deployment_s", "confirmation_s", "total_s"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("trace is incomplete")]
    IncompleteTrace,
    #[error("trace timestamps decrease at position {0}")]
    NonMonotonic(usize),
    #[error("no complete traces to aggregate")]
    NoCompleteTraces,
}

pub fn decompose(trace: &FederationTrace) -> Result<PhaseBreakdown, MetricsError> {
    let t = trace.timeline();
    let t: Vec<SimTime> = t.iter().map(|x| x.ok_or(MetricsError::IncompleteTrace)).collect::<Result<_, _>>()?;
    for i in 1..t.len() {
        if t[i] < t[i - 1] {
            return Err(MetricsError::NonMonotonic(i));
        }
    }
    let [submitted, _, second_bid, winner, started, confirmed, established] = t[..] else {
        unreachable!("timeline has seven entries")
    };
    Ok(PhaseBreakdown {
        bidding: second_bid - submitted,
        winner_selection: winner - second_bid,
        info_exchange: started - winner,
        deployment: confirmed - started,
        confirmation: established - confirmed,
        total: established - submitted,
    })
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct SegmentStats {
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateStats {
    pub bidding: SegmentStats,
    pub winner_selection: SegmentStats,
    pub info_exchange: SegmentStats,
    pub deployment: SegmentStats,
    pub confirmation: SegmentStats,
    pub total: SegmentStats,
    pub n_samples: usize,
    pub n_incomplete: usize,
    pub variance_kind: &'static str,
}

impl AggregateStats {
    pub fn segments(&self) -> [&SegmentStats; 6] {
        [&self.bidding, &self.winner_selection, &self.info_exchange, &self.deployment, &self.confirmation, &self.total]
    }
}

fn stats(values: &[u64]) -> SegmentStats {
    // exact integer mean and variance over microseconds, converted once
    let n = values.len() as u128;
    let sum: u128 = values.iter().map(|&v| u128::from(v)).sum();
    let sum_sq: u128 = values.iter().map(|&v| u128::from(v) * u128::from(v)).sum();
    let var_num = n * sum_sq - sum * sum;
    let micros = 1e6_f64;
    SegmentStats {
        mean: sum as f64 / n as f64 / micros,
        variance: var_num as f64 / (n * n) as f64 / (micros * micros),
        min: *values.iter().min().expect("non-empty") as f64 / micros,
        max: *values.iter().max().expect("non-empty") as f64 / micros,
    }
}

/// Population statistics over complete breakdowns; `None` entries are counted as incomplete.
pub fn aggregate_breakdowns<I>(items: I) -> Result<AggregateStats, MetricsError>
where
    I: IntoIterator<Item = Option<PhaseBreakdown>>,
{
    let mut columns: [Vec<u64>; 6] = Default::default();
    let mut n_incomplete = 0;
    for item in items {
        match item {
            Some(b) => {
                for (col, seg) in columns.iter_mut().zip(b.segments()) {
                    col.push(seg.as_micros());
                }
            }
            None => n_incomplete += 1,
        }
    }
    if columns[0].is_empty() {
        return Err(MetricsError::NoCompleteTraces);
    }
    let n_samples = columns[0].len();
    let [b, w, i, d, c, t] = columns.map(|col| stats(&col));
    Ok(AggregateStats {
        bidding: b,
        winner_selection: w,
        info_exchange: i,
        deployment: d,
        confirmation: c,
        total: t,
        n_samples,
        n_incomplete,
        variance_kind: "population",
    })
}

pub fn aggregate(traces: &[FederationTrace]) -> Result<AggregateStats, MetricsError> {
    aggregate_breakdowns(traces.iter().map(|t| decompose(t).ok()))
}

/// One exported line: identifying columns plus the phase breakdown.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRow {
    pub scenario_id: String,
    pub consensus: String,
    pub n_systems: u32,
    pub run: u32,
    pub ann_id: Option<AnnId>,
    pub breakdown: Option<PhaseBreakdown>,
}

impl TraceRow {
    pub fn from_trace(scenario_id: &str, consensus: &str, n_systems: u32, trace: &FederationTrace) -> Self {
        Self {
            scenario_id: scenario_id.to_owned(),
            consensus: consensus.to_owned(),
            n_systems,
            run: trace.run,
            ann_id: trace.ann_id,
            breakdown: decompose(trace).ok(),
        }
    }

    pub fn complete(&self) -> bool {
        self.breakdown.is_some()
    }
}

pub fn aggregate_rows(rows: &[TraceRow]) -> Result<AggregateStats, MetricsError> {
    aggregate_breakdowns(rows.iter().map(|r| r.breakdown))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Jsonl,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Jsonl => "jsonl",
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed row {row}: {reason}")]
    Malformed { row: usize, reason: String },
}

pub const CSV_HEADER: [&str; 12] = [
    "scenario_id",
    "consensus",
    "n_systems",
    "run",
    "ann_id",
    "bidding_s",
    "winner_selection_s",
    "info_exchange_s",
    "deployment_s",
    "confirmation_s",
    "total_s",
    "complete",
];

/// Output file name for one scenario cell.
pub fn result_file_name(scenario_id: &str, consensus: &str, n_systems: u32, format: ExportFormat) -> String {
    format!("{scenario_id}_{consensus}_{n_systems}.{}", format.extension())
}

pub fn write_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let mut record = vec![
            r.scenario_id.clone(),
            r.consensus.clone(),
            r.n_systems.to_string(),
            r.run.to_string(),
            r.ann_id.map(|a| a.to_string()).unwrap_or_default(),
        ];
        match &r.breakdown {
            Some(b) => record.extend(b.segments().iter().map(|s| s.to_string())),
            None => record.extend(std::iter::repeat_n(String::new(), 6)),
        }
        record.push(r.complete().to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    scenario_id: String,
    consensus: String,
    n_systems: u32,
    run: u32,
    ann_id: Option<AnnId>,
    bidding_s: Option<f64>,
    winner_selection_s: Option<f64>,
    info_exchange_s: Option<f64>,
    deployment_s: Option<f64>,
    confirmation_s: Option<f64>,
    total_s: Option<f64>,
    complete: bool,
}

pub fn write_jsonl<W: Write>(rows: &[TraceRow], mut out: W) -> Result<(), ExportError> {
    for r in rows {
        let seg = |i: usize| r.breakdown.map(|b| b.segments()[i].as_secs_f64());
        let row = JsonRow {
            scenario_id: r.scenario_id.clone(),
            consensus: r.consensus.clone(),
            n_systems: r.n_systems,
            run: r.run,
            ann_id: r.ann_id,
            bidding_s: seg(0),
            winner_selection_s: seg(1),
            info_exchange_s: seg(2),
            deployment_s: seg(3),
            confirmation_s: seg(4),
            total_s: seg(5),
            complete: r.complete(),
        };
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn breakdown_from(
    row: usize,
    values: [Option<SimDuration>; 6],
    complete: bool,
) -> Result<Option<PhaseBreakdown>, ExportError> {
    if !complete {
        return Ok(None);
    }
    let [Some(bidding), Some(winner_selection), Some(info_exchange), Some(deployment), Some(confirmation), Some(total)] =
        values
    else {
        return Err(ExportError::Malformed { row, reason: "complete row with missing segment".into() });
    };
    Ok(Some(PhaseBreakdown { bidding, winner_selection, info_exchange, deployment, confirmation, total }))
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<TraceRow>, ExportError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(ExportError::Malformed { row: 0, reason: format!("unexpected header {headers:?}") });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let bad = |reason: String| ExportError::Malformed { row, reason };
        let parse_u32 = |s: &str| s.parse::<u32>().map_err(|e| bad(format!("{s:?}: {e}")));
        let ann_id = match &rec[4] {
            "" => None,
            s => Some(s.parse::<u64>().map_err(|e| bad(format!("ann_id {s:?}: {e}")))?),
        };
        let mut values = [None; 6];
        for (k, v) in values.iter_mut().enumerate() {
            let s = &rec[5 + k];
            if !s.is_empty() {
                *v = Some(s.parse::<SimDuration>().map_err(|e| bad(e.to_string()))?);
            }
        }
        let complete = match &rec[11] {
            "true" => true,
            "false" => false,
            s => return Err(bad(format!("complete {s:?}"))),
        };
        rows.push(TraceRow {
            scenario_id: rec[0].to_owned(),
            consensus: rec[1].to_owned(),
            n_systems: parse_u32(&rec[2])?,
            run: parse_u32(&rec[3])?,
            ann_id,
            breakdown: breakdown_from(row, values, complete)?,
        });
    }
    Ok(rows)
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<TraceRow>, ExportError> {
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let j: JsonRow = serde_json::from_str(&line)?;
        let values =
            [j.bidding_s, j.winner_selection_s, j.info_exchange_s, j.deployment_s, j.confirmation_s, j.total_s]
                .map(|v| v.and_then(SimDuration::from_secs_f64));
        rows.push(TraceRow {
            breakdown: breakdown_from(i + 1, values, j.complete)?,
            scenario_id: j.scenario_id,
            consensus: j.consensus,
            n_systems: j.n_systems,
            run: j.run,
            ann_id: j.ann_id,
        });
    }
    Ok(rows)
}
