//! Run summaries: reliability, goodput, normalized throughput and the
//! per-relay delivery series, plus CSV/JSON emission.
//!
//! Counting rules:
//! - A session's `sent` cohort is every packet created at or after warmup;
//!   `sent = received + dropped + in_flight` for the cohort.
//! - Goodput is payload bits delivered to the final destination inside
//!   `[warmup, end]`, divided by that interval. Headers, control frames,
//!   beacons and retransmissions never count.
//! - Channel airtime is reported separately and is not throughput.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::ValidatedScenario;
use crate::sim::{DropReason, EventTrace, Outcome};
use crate::time::SimTime;

/// One row of `summary.{csv,json}`: a session or the aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    /// Session index, or `aggregate`.
    pub flow: String,
    pub src: Option<u16>,
    pub dst: Option<u16>,
    pub sent: u64,
    pub received: u64,
    pub dropped: u64,
    pub dropped_queue_overflow: u64,
    pub dropped_retry_limit: u64,
    pub dropped_channel_loss: u64,
    pub in_flight: u64,
    /// Percent; `None` when nothing was sent.
    pub reliability_pct: Option<f64>,
    pub goodput_bps: f64,
    pub normalized_throughput: f64,
}

/// One row of `relay_series.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayPoint {
    /// Start of the bin.
    pub time_s: f64,
    /// Last-hop node id, or `total`.
    pub relay: String,
    pub raw_count: u64,
    pub raw_rate_pps: f64,
    /// Trailing moving average of `raw_count` over the window.
    pub smoothed_count: f64,
    pub smoothed_rate_pps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node: u16,
    pub forwarded: u64,
    pub data_frames: u64,
    pub control_frames: u64,
    pub beacons: u64,
    pub energy_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub data_rate_bps: f64,
    pub interval_s: f64,
    pub sessions: Vec<FlowSummary>,
    pub aggregate: FlowSummary,
    pub nodes: Vec<NodeSummary>,
    pub relay_series: Vec<RelayPoint>,
    /// Sum of all frame airtimes over the run length. Diagnostic only.
    pub channel_airtime_ratio: f64,
    pub data_airtime_ratio: f64,
    pub trace_digest: String,
}

impl MetricsReport {
    /// Session rows followed by the aggregate row.
    pub fn summary_rows(&self) -> Vec<FlowSummary> {
        let mut rows = self.sessions.clone();
        rows.push(self.aggregate.clone());
        rows
    }
}

#[derive(Default)]
struct Tally {
    sent: u64,
    received: u64,
    drops: [u64; 3],
    in_flight: u64,
    goodput_bits: u64,
}

impl Tally {
    fn add(&mut self, o: &Tally) {
        self.sent += o.sent;
        self.received += o.received;
        for (a, b) in self.drops.iter_mut().zip(o.drops) {
            *a += b;
        }
        self.in_flight += o.in_flight;
        self.goodput_bits += o.goodput_bits;
    }

    fn row(&self, flow: String, src: Option<u16>, dst: Option<u16>, interval_s: f64, rate_bps: f64) -> FlowSummary {
        let goodput = if interval_s > 0.0 { self.goodput_bits as f64 / interval_s } else { 0.0 };
        FlowSummary {
            flow,
            src,
            dst,
            sent: self.sent,
            received: self.received,
            dropped: self.drops.iter().sum(),
            dropped_queue_overflow: self.drops[0],
            dropped_retry_limit: self.drops[1],
            dropped_channel_loss: self.drops[2],
            in_flight: self.in_flight,
            reliability_pct: (self.sent > 0).then(|| 100.0 * self.received as f64 / self.sent as f64),
            goodput_bps: goodput,
            normalized_throughput: goodput / rate_bps,
        }
    }
}

fn drop_slot(r: DropReason) -> usize {
    DropReason::ALL.iter().position(|&x| x == r).expect("listed")
}

/// Builds the report for a finished run.
pub fn summarize(trace: &EventTrace, scenario: &ValidatedScenario) -> MetricsReport {
    let warmup = scenario.sim.warmup;
    let end = trace.end;
    let interval_s = end.saturating_sub(warmup).as_secs_f64();
    let rate_bps = scenario.radio.data_rate.bits_per_sec();

    let mut total = Tally::default();
    let mut sessions = Vec::with_capacity(scenario.sessions.len());
    for (s, fates) in scenario.sessions.iter().zip(&trace.packets) {
        let mut t = Tally::default();
        for f in fates {
            if let Outcome::Delivered { at, .. } = f.outcome {
                if at >= warmup && at <= end {
                    t.goodput_bits += f.payload_bytes as u64 * 8;
                }
            }
            if f.created_at < warmup {
                continue;
            }
            t.sent += 1;
            match f.outcome {
                Outcome::Pending => t.in_flight += 1,
                Outcome::Delivered { .. } => t.received += 1,
                Outcome::Dropped { reason, .. } => t.drops[drop_slot(reason)] += 1,
            }
        }
        total.add(&t);
        sessions.push(t.row(s.id.0.to_string(), Some(s.src.0), Some(s.dst.0), interval_s, rate_bps));
    }
    let aggregate = total.row("aggregate".into(), None, None, interval_s, rate_bps);

    let nodes = trace
        .nodes
        .iter()
        .map(|n| NodeSummary {
            node: n.id.0,
            forwarded: n.forwarded,
            data_frames: n.data_frames,
            control_frames: n.control_frames,
            beacons: n.beacons,
            energy_ratio: n.energy_ratio,
        })
        .collect();

    let run_s = end.as_secs_f64();
    MetricsReport {
        scenario: scenario.name.clone(),
        data_rate_bps: rate_bps,
        interval_s,
        sessions,
        aggregate,
        nodes,
        relay_series: relay_share_series(trace, scenario.sim.relay_bin, scenario.sim.relay_window),
        channel_airtime_ratio: if run_s > 0.0 { trace.airtime.as_secs_f64() / run_s } else { 0.0 },
        data_airtime_ratio: if run_s > 0.0 { trace.data_airtime.as_secs_f64() / run_s } else { 0.0 },
        trace_digest: format!("{:016x}", trace.digest),
    }
}

/// Deliveries at final destinations grouped by last hop, counted per `bin`
/// and smoothed with a trailing mean over `window` (fewer bins at the start
/// of the run). A `total` series sums all relays. Covers the whole run,
/// warmup included.
pub fn relay_share_series(trace: &EventTrace, bin: SimTime, window: SimTime) -> Vec<RelayPoint> {
    let bin_ns = bin.as_nanos().max(1);
    let n_bins = trace.end.as_nanos().div_ceil(bin_ns).max(1) as usize;
    let mut per_relay: std::collections::BTreeMap<u16, Vec<u64>> = Default::default();
    let mut total = vec![0u64; n_bins];
    for fates in &trace.packets {
        for f in fates {
            if let Outcome::Delivered { at, last_hop } = f.outcome {
                let b = ((at.as_nanos() / bin_ns) as usize).min(n_bins - 1);
                per_relay.entry(last_hop.0).or_insert_with(|| vec![0; n_bins])[b] += 1;
                total[b] += 1;
            }
        }
    }
    let k = ((window.as_nanos() as f64 / bin_ns as f64).round() as usize).max(1);
    let bin_s = bin.as_secs_f64();
    let mut out = Vec::with_capacity((per_relay.len() + 1) * n_bins);
    let series = per_relay.iter().map(|(id, v)| (id.to_string(), v)).chain(std::iter::once(("total".to_string(), &total)));
    for (name, counts) in series {
        let smoothed = trailing_mean(counts, k);
        for (i, (&raw, &sm)) in counts.iter().zip(&smoothed).enumerate() {
            out.push(RelayPoint {
                time_s: i as f64 * bin_s,
                relay: name.clone(),
                raw_count: raw,
                raw_rate_pps: raw as f64 / bin_s,
                smoothed_count: sm,
                smoothed_rate_pps: sm / bin_s,
            });
        }
    }
    out
}

/// Mean of the last `k` values up to and including each position.
pub fn trailing_mean(values: &[u64], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0u64;
    for i in 0..values.len() {
        sum += values[i];
        if i >= k {
            sum -= values[i - k];
        }
        out.push(sum as f64 / (i + 1).min(k) as f64);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Error)]
#[error("cannot write {path}: {source}")]
pub struct EmitError {
    pub path: PathBuf,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

fn emit_err(path: &Path) -> impl FnOnce(Box<dyn std::error::Error + Send + Sync>) -> EmitError + '_ {
    move |source| EmitError { path: path.to_path_buf(), source }
}

/// Writes a CSV with a header row taken from `T`'s fields.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), EmitError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| emit_err(path)(e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| emit_err(path)(e.into()))?;
    }
    w.flush().map_err(|e| emit_err(path)(e.into()))
}

/// Writes `summary.{csv,json}`, `relay_series.csv`, `nodes.csv` and
/// `trace_digest.txt` into `dir`, creating it if needed.
pub fn emit_report(report: &MetricsReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>, EmitError> {
    fs::create_dir_all(dir).map_err(|e| emit_err(dir)(e.into()))?;
    let mut written = Vec::new();
    let rows = report.summary_rows();
    let summary = match format {
        ReportFormat::Csv => {
            let p = dir.join("summary.csv");
            write_csv(&p, &rows)?;
            p
        }
        ReportFormat::Json => {
            let p = dir.join("summary.json");
            let text = serde_json::to_string_pretty(&rows).expect("rows serialize");
            fs::write(&p, text + "\n").map_err(|e| emit_err(&p)(e.into()))?;
            p
        }
    };
    written.push(summary);
    let p = dir.join("relay_series.csv");
    write_csv(&p, &report.relay_series)?;
    written.push(p);
    let p = dir.join("nodes.csv");
    write_csv(&p, &report.nodes)?;
    written.push(p);
    let p = dir.join("trace_digest.txt");
    fs::write(&p, format!("{}\n", report.trace_digest)).map_err(|e| emit_err(&p)(e.into()))?;
    written.push(p);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NodeId;
    use crate::scenario::load_scenario;
    use crate::sim::PacketFate;

    fn scenario(warmup: f64, rate: f64) -> ValidatedScenario {
        load_scenario(&format!(
            r#"{{"nodes": [{{"id": 0, "x": 0, "y": 0}}, {{"id": 1, "x": 10, "y": 0}}],
                "sessions": [{{"src": 0, "dst": 1, "rate_pps": 1}}],
                "radio": {{"data_rate_mbps": {rate}}},
                "sim": {{"duration_s": 100, "warmup_s": {warmup}}}}}"#
        ))
        .unwrap()
    }

    fn trace(fates: Vec<PacketFate>, end_s: u64) -> EventTrace {
        EventTrace {
            digest: 0xabc,
            record_count: 0,
            lines: None,
            packets: vec![fates],
            nodes: vec![],
            held_at_end: 0,
            airtime: SimTime::ZERO,
            data_airtime: SimTime::ZERO,
            end: SimTime::from_secs(end_s),
            events: 0,
        }
    }

    fn delivered(created_s: f64, at_s: f64, hop: u16) -> PacketFate {
        PacketFate {
            created_at: SimTime::from_secs_f64(created_s),
            payload_bytes: 1000,
            outcome: Outcome::Delivered { at: SimTime::from_secs_f64(at_s), last_hop: NodeId(hop) },
        }
    }

    #[test]
    fn reliability_matches_table_example() {
        let mut fates = Vec::new();
        for i in 0..10_000 {
            let outcome = if i < 9_808 {
                Outcome::Delivered { at: SimTime::from_secs(1), last_hop: NodeId(0) }
            } else {
                Outcome::Dropped { at: SimTime::from_secs(1), reason: DropReason::ChannelLoss }
            };
            fates.push(PacketFate { created_at: SimTime::ZERO, payload_bytes: 1000, outcome });
        }
        let r = summarize(&trace(fates, 100), &scenario(0.0, 2.0));
        assert!((r.aggregate.reliability_pct.unwrap() - 98.08).abs() < 1e-9);
        assert_eq!(r.aggregate.dropped_channel_loss, 192);
        assert_eq!(r.aggregate.sent, r.aggregate.received + r.aggregate.dropped + r.aggregate.in_flight);
    }

    #[test]
    fn nothing_sent_gives_null_reliability() {
        let r = summarize(&trace(vec![], 100), &scenario(0.0, 1.0));
        assert_eq!(r.aggregate.reliability_pct, None);
        assert_eq!(r.summary_rows().len(), 2);
    }

    #[test]
    fn goodput_definition() {
        // 100 packets/s of 1000 B for 100 s at 1 Mbps: 0.8 Mbps, normalized 0.8.
        let fates = (0..10_000).map(|i| delivered(i as f64 / 100.0, i as f64 / 100.0, 0)).collect();
        let r = summarize(&trace(fates, 100), &scenario(0.0, 1.0));
        assert!((r.aggregate.goodput_bps - 800_000.0).abs() < 1e-6);
        assert!((r.aggregate.normalized_throughput - 0.8).abs() < 1e-9);
    }

    #[test]
    fn warmup_excludes_early_packets() {
        let fates = vec![delivered(5.0, 6.0, 0), delivered(20.0, 21.0, 0), delivered(25.0, 40.0, 0)];
        let r = summarize(&trace(fates, 100), &scenario(30.0, 1.0));
        assert_eq!(r.aggregate.sent, 0);
        // Delivered inside the window counts toward goodput regardless of cohort.
        assert!((r.aggregate.goodput_bps - 8000.0 / 70.0).abs() < 1e-9);
    }

    #[test]
    fn trailing_mean_fixed_point_and_ramp() {
        assert_eq!(trailing_mean(&[7; 20], 6), vec![7.0; 20]);
        assert_eq!(trailing_mean(&[6, 0, 3], 2), vec![6.0, 3.0, 1.5]);
    }

    #[test]
    fn relay_series_groups_by_last_hop() {
        let fates = vec![delivered(0.0, 1.0, 2), delivered(0.0, 2.0, 3), delivered(0.0, 15.0, 2)];
        let s = relay_share_series(&trace(fates, 30), SimTime::from_secs(10), SimTime::from_secs(60));
        let names: Vec<_> = s.iter().map(|p| p.relay.as_str()).collect();
        assert_eq!(names, vec!["2", "2", "2", "3", "3", "3", "total", "total", "total"]);
        assert_eq!(s[0].raw_count, 1);
        assert_eq!(s[1].raw_count, 1);
        assert!((s[1].raw_rate_pps - 0.1).abs() < 1e-12);
        assert_eq!(s[6].raw_count, 2);
        assert!((s[7].smoothed_count - 1.5).abs() < 1e-12);
    }

    #[test]
    fn csv_and_json_carry_the_same_rows() {
        let dir = tempfile::tempdir().unwrap();
        let fates = vec![delivered(0.0, 1.0, 0), delivered(1.0, 2.0, 0)];
        let r = summarize(&trace(fates, 100), &scenario(0.0, 1.0));
        emit_report(&r, ReportFormat::Csv, dir.path()).unwrap();
        emit_report(&r, ReportFormat::Json, dir.path()).unwrap();
        let mut rd = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
        let from_csv: Vec<FlowSummary> = rd.deserialize().collect::<Result<_, _>>().unwrap();
        let from_json: Vec<FlowSummary> =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(from_csv, from_json);
        assert_eq!(from_csv, r.summary_rows());
        assert_eq!(fs::read_to_string(dir.path().join("trace_digest.txt")).unwrap(), "0000000000000abc\n");
    }

    #[test]
    fn unwritable_destination_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let r = summarize(&trace(vec![], 100), &scenario(0.0, 1.0));
        let e = emit_report(&r, ReportFormat::Csv, &blocker.join("out")).unwrap_err();
        assert!(e.to_string().contains("file"), "{e}");
    }
}
