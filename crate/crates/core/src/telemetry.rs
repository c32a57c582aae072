//! Metric computation: FCT percentiles, long-flow throughput, time-weighted
//! queue-length CDFs, the tail-packet opportunity fraction, convergence time,
//! and reordering.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::sim::SimTime;
use crate::topology::{FlowKey, PortId};
use crate::workload::FlowClass;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TelemetryError {
    #[error("empty sample set")]
    Empty,
    #[error("percentile must be in (0, 100], got {0}")]
    BadPercentile(f64),
    #[error("no completed long flows")]
    NoLongFlows,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FctSample {
    pub key: FlowKey,
    pub class: FlowClass,
    pub size: u64,
    pub fct: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueSample {
    pub port: PortId,
    pub time: SimTime,
    pub occupancy: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketTraceRecord {
    pub key: FlowKey,
    pub seq: u64,
    pub hops_marked: u8,
    pub delivered_at: SimTime,
}

/// Nearest-rank percentile: the value at rank `ceil(p/100 * n)`.
pub fn percentile(samples: &[f64], p: f64) -> Result<f64, TelemetryError> {
    if samples.is_empty() {
        return Err(TelemetryError::Empty);
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(TelemetryError::BadPercentile(p));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v[nearest_rank(v.len(), p) - 1])
}

fn nearest_rank(n: usize, p: f64) -> usize {
    ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n)
}

pub fn mean(samples: &[f64]) -> Result<f64, TelemetryError> {
    if samples.is_empty() {
        return Err(TelemetryError::Empty);
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Whether tail packets are counted individually or per flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OpportunityGranularity {
    #[default]
    Packet,
    Flow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Opportunity {
    pub fraction: f64,
    pub tail_packets: u64,
    pub tail_flows: usize,
    /// Fewer than 100 tail packets.
    pub low_confidence: bool,
}

/// Per-flow delivered-packet tallies used to compute the opportunity
/// fraction without keeping every trace record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlowMarkTally {
    pub packets: u64,
    pub multi_marked: u64,
}

/// Fraction of tail packets (packets of flows whose FCT exceeds the 95th
/// percentile) that were marked at two or more switches.
pub fn opportunity_fraction(
    traces: &[PacketTraceRecord],
    fcts: &[FctSample],
    granularity: OpportunityGranularity,
) -> Result<Opportunity, TelemetryError> {
    let mut tallies: HashMap<u64, FlowMarkTally> = HashMap::new();
    for t in traces {
        let e = tallies.entry(t.key.flow_id).or_default();
        e.packets += 1;
        if t.hops_marked >= 2 {
            e.multi_marked += 1;
        }
    }
    opportunity_from_tallies(&tallies, fcts, granularity)
}

pub fn opportunity_from_tallies(
    tallies: &HashMap<u64, FlowMarkTally>,
    fcts: &[FctSample],
    granularity: OpportunityGranularity,
) -> Result<Opportunity, TelemetryError> {
    let all: Vec<f64> = fcts.iter().map(|s| s.fct.as_nanos() as f64).collect();
    let p95 = percentile(&all, 95.0)?;
    let tail: HashSet<u64> = fcts
        .iter()
        .filter(|s| s.fct.as_nanos() as f64 > p95)
        .map(|s| s.key.flow_id)
        .collect();
    let mut packets = 0;
    let mut multi = 0;
    let mut flows_hit = 0;
    for id in &tail {
        if let Some(t) = tallies.get(id) {
            packets += t.packets;
            multi += t.multi_marked;
            if t.multi_marked > 0 {
                flows_hit += 1;
            }
        }
    }
    let fraction = match granularity {
        OpportunityGranularity::Packet if packets > 0 => multi as f64 / packets as f64,
        OpportunityGranularity::Flow if !tail.is_empty() => flows_hit as f64 / tail.len() as f64,
        _ => 0.0,
    };
    Ok(Opportunity {
        fraction,
        tail_packets: packets,
        tail_flows: tail.len(),
        low_confidence: packets < 100,
    })
}

/// Mean of `size * 8 / fct` over long flows, in bits per second.
pub fn long_flow_throughput(fcts: &[FctSample]) -> Result<f64, TelemetryError> {
    let rates: Vec<f64> = fcts
        .iter()
        .filter(|s| s.class == FlowClass::Long)
        .map(|s| s.size as f64 * 8.0 / s.fct.as_secs_f64())
        .collect();
    if rates.is_empty() {
        return Err(TelemetryError::NoLongFlows);
    }
    mean(&rates)
}

/// First index from which the series stays within `tol * fair_share` of
/// `fair_share` for at least `hold` consecutive samples; `None` if never.
pub fn convergence_time(series: &[f64], fair_share: f64, tol: f64, hold: usize) -> Option<usize> {
    let ok = |v: f64| (v - fair_share).abs() <= tol * fair_share;
    let hold = hold.max(1);
    (0..series.len()).find(|&i| i + hold <= series.len() && series[i..i + hold].iter().all(|v| ok(*v)))
}

/// Reordered over total data packets.
pub fn reordering_fraction(reordered: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        reordered as f64 / total as f64
    }
}

/// Empirical CDF of occupancy weighted by holding time.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueCdf {
    /// Ascending `(occupancy_bytes, cumulative_fraction)`.
    pub points: Vec<(u64, f64)>,
}

impl QueueCdf {
    /// Smallest occupancy whose cumulative weight reaches `p` percent.
    pub fn percentile(&self, p: f64) -> Result<u64, TelemetryError> {
        if self.points.is_empty() {
            return Err(TelemetryError::Empty);
        }
        if !(p > 0.0 && p <= 100.0) {
            return Err(TelemetryError::BadPercentile(p));
        }
        let target = p / 100.0 - 1e-12;
        Ok(self
            .points
            .iter()
            .find(|(_, c)| *c >= target)
            .map_or(self.points.last().unwrap().0, |(o, _)| *o))
    }

    pub fn at(&self, occupancy: u64) -> f64 {
        self.points
            .iter()
            .take_while(|(o, _)| *o <= occupancy)
            .last()
            .map_or(0.0, |(_, c)| *c)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("occupancy_bytes,cdf\n");
        for (o, c) in &self.points {
            s.push_str(&format!("{o},{c:.6}\n"));
        }
        s
    }
}

/// CDF from event-driven samples: each sample's occupancy holds until that
/// port's next sample, and the last one until `end`. Zero-duration holds
/// carry no weight; if all holds are zero, samples are weighted equally.
pub fn queue_cdf(samples: &[QueueSample], end: SimTime) -> Result<QueueCdf, TelemetryError> {
    if samples.is_empty() {
        return Err(TelemetryError::Empty);
    }
    let mut by_port: HashMap<PortId, Vec<&QueueSample>> = HashMap::new();
    for s in samples {
        by_port.entry(s.port).or_default().push(s);
    }
    let mut weights: Vec<(u64, u64)> = Vec::new();
    for list in by_port.values_mut() {
        list.sort_by_key(|s| s.time);
        for (i, s) in list.iter().enumerate() {
            let until = list.get(i + 1).map_or(end, |n| n.time);
            weights.push((s.occupancy, until.saturating_sub(s.time).as_nanos()));
        }
    }
    if weights.iter().all(|(_, w)| *w == 0) {
        for w in &mut weights {
            w.1 = 1;
        }
    }
    Ok(cdf_from_weights(weights))
}

fn cdf_from_weights(mut weights: Vec<(u64, u64)>) -> QueueCdf {
    weights.sort_by_key(|(o, _)| *o);
    let total: u128 = weights.iter().map(|(_, w)| *w as u128).sum();
    let mut points: Vec<(u64, f64)> = Vec::new();
    let mut acc: u128 = 0;
    for (o, w) in weights {
        acc += w as u128;
        let c = acc as f64 / total as f64;
        match points.last_mut() {
            Some(last) if last.0 == o => last.1 = c,
            _ => points.push((o, c)),
        }
    }
    QueueCdf { points }
}

/// Streaming equivalent of [`queue_cdf`] over many ports: a histogram of
/// occupancy weighted by holding time, in `bucket_bytes` buckets.
#[derive(Debug, Clone)]
pub struct QueueHistogram {
    bucket_bytes: u64,
    weights: Vec<u64>,
    ports: Vec<PortTrack>,
}

#[derive(Debug, Clone, Copy, Default)]
struct PortTrack {
    since: SimTime,
    occupancy: u64,
}

impl QueueHistogram {
    pub fn new(n_ports: usize, max_occupancy: u64, bucket_bytes: u64) -> Self {
        let bucket_bytes = bucket_bytes.max(1);
        QueueHistogram {
            bucket_bytes,
            weights: vec![0; (max_occupancy / bucket_bytes) as usize + 1],
            ports: vec![PortTrack::default(); n_ports],
        }
    }

    pub fn bucket_bytes(&self) -> u64 {
        self.bucket_bytes
    }

    /// Port `port` changed to `occupancy` at `now`.
    pub fn observe(&mut self, port: usize, now: SimTime, occupancy: u64) {
        let t = &mut self.ports[port];
        let held = now.saturating_sub(t.since).as_nanos();
        let b = ((t.occupancy / self.bucket_bytes) as usize).min(self.weights.len() - 1);
        self.weights[b] += held;
        t.since = now;
        t.occupancy = occupancy;
    }

    /// Credits every port's current occupancy up to `end`.
    pub fn flush(&mut self, end: SimTime) {
        for p in 0..self.ports.len() {
            let occ = self.ports[p].occupancy;
            self.observe(p, end, occ);
        }
    }

    pub fn cdf(&self) -> Result<QueueCdf, TelemetryError> {
        let w: Vec<(u64, u64)> = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0)
            .map(|(b, w)| (b as u64 * self.bucket_bytes, *w))
            .collect();
        if w.is_empty() {
            return Err(TelemetryError::Empty);
        }
        Ok(cdf_from_weights(w))
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::topology::NodeId;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn histogram_agrees_with_sample_cdf(
            steps in proptest::collection::vec((0usize..3, 1u64..50, 0u64..20), 1..200)
        ) {
            let ports: Vec<PortId> = (0..3).map(|p| PortId { node: NodeId::leaf(0), port: p }).collect();
            let mut hist = QueueHistogram::new(3, 20 * 1500, 1);
            let mut samples: Vec<QueueSample> = ports
                .iter()
                .map(|p| QueueSample { port: *p, time: SimTime::ZERO, occupancy: 0 })
                .collect();
            let mut now = 0;
            for (port, dt, pkts) in steps {
                now += dt;
                let occ = pkts * 1500;
                hist.observe(port, SimTime::from_nanos(now), occ);
                samples.push(QueueSample { port: ports[port], time: SimTime::from_nanos(now), occupancy: occ });
            }
            let end = SimTime::from_nanos(now + 7);
            hist.flush(end);
            let a = hist.cdf().unwrap();
            let b = queue_cdf(&samples, end).unwrap();
            prop_assert_eq!(a.points.len(), b.points.len());
            for (x, y) in a.points.iter().zip(&b.points) {
                prop_assert_eq!(x.0, y.0);
                prop_assert!((x.1 - y.1).abs() < 1e-9);
            }
        }
    }
}
