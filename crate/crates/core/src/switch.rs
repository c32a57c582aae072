//! Output-port queueing: bounded strict-priority FIFO queues, ECN marking on
//! enqueue, and the four scheduler modes.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::sim::SimTime;
use crate::topology::FlowKey;

pub const MTU: u32 = 1500;
/// Switch hops recorded per packet; leaf-spine paths use at most three.
pub const MAX_HOPS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchedulerMode {
    /// Plain DCTCP over a single FIFO (queue index 1 of two).
    DctcpFifo,
    /// CE-marked packets and ACKs go to the high-priority queue.
    Slytherin,
    /// Four-level MLFQ by bytes sent.
    Pias,
    /// Priority by known flow size.
    SjfIdeal,
}

impl SchedulerMode {
    pub const ALL: [SchedulerMode; 4] = [
        SchedulerMode::DctcpFifo,
        SchedulerMode::Slytherin,
        SchedulerMode::Pias,
        SchedulerMode::SjfIdeal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SchedulerMode::DctcpFifo => "dctcp",
            SchedulerMode::Slytherin => "slytherin",
            SchedulerMode::Pias => "pias",
            SchedulerMode::SjfIdeal => "sjf",
        }
    }

    pub fn default_queue_count(&self, sjf_queues: usize) -> usize {
        match self {
            SchedulerMode::DctcpFifo | SchedulerMode::Slytherin => 2,
            SchedulerMode::Pias => 4,
            SchedulerMode::SjfIdeal => sjf_queues,
        }
    }
}

impl fmt::Display for SchedulerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dctcp" | "dctcp_fifo" | "fifo" => Ok(SchedulerMode::DctcpFifo),
            "slytherin" => Ok(SchedulerMode::Slytherin),
            "pias" => Ok(SchedulerMode::Pias),
            "sjf" | "sjf_ideal" => Ok(SchedulerMode::SjfIdeal),
            other => Err(format!("unknown scheduler mode '{other}'")),
        }
    }
}

/// Per-hop record of which queue a packet used and whether it was marked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MarkLog {
    hops: u8,
    marked: u8,
    queues: [u8; MAX_HOPS],
}

impl MarkLog {
    pub fn record(&mut self, queue: usize, marked: bool) {
        let h = self.hops as usize;
        if h < MAX_HOPS {
            self.queues[h] = queue as u8;
            if marked {
                self.marked |= 1 << h;
            }
        }
        self.hops = self.hops.saturating_add(1);
    }

    pub fn hops(&self) -> usize {
        self.hops as usize
    }

    pub fn marked_hops(&self) -> usize {
        self.marked.count_ones() as usize
    }

    pub fn marked_at(&self, hop: usize) -> bool {
        hop < MAX_HOPS && self.marked & (1 << hop) != 0
    }

    pub fn queue_at(&self, hop: usize) -> Option<usize> {
        (hop < self.hops() && hop < MAX_HOPS).then(|| self.queues[hop] as usize)
    }

    /// First hop at which the packet was marked.
    pub fn first_mark(&self) -> Option<usize> {
        (self.marked != 0).then(|| self.marked.trailing_zeros() as usize)
    }
}

/// A packet on the wire. For ACKs `seq` carries the cumulative ACK number
/// and `key` is the reverse of the data direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub key: FlowKey,
    pub seq: u64,
    /// Transport payload bytes.
    pub payload: u32,
    /// Bytes on the wire.
    pub size: u32,
    pub is_ack: bool,
    pub ce: bool,
    pub ece_echo: bool,
    pub marks: MarkLog,
    /// PIAS level stamped by the sender.
    pub priority: Option<u8>,
    /// Flow size stamped by the sender (SJF).
    pub flow_size: Option<u64>,
    pub sent_at: SimTime,
    pub delivered_at: Option<SimTime>,
}

impl Packet {
    pub fn data(key: FlowKey, seq: u64, payload: u32, header: u32, sent_at: SimTime) -> Packet {
        Packet {
            key,
            seq,
            payload,
            size: payload + header,
            is_ack: false,
            ce: false,
            ece_echo: false,
            marks: MarkLog::default(),
            priority: None,
            flow_size: None,
            sent_at,
            delivered_at: None,
        }
    }

    pub fn ack(key: FlowKey, ack_no: u64, size: u32, ece_echo: bool, sent_at: SimTime) -> Packet {
        Packet {
            key,
            seq: ack_no,
            payload: 0,
            size,
            is_ack: true,
            ce: false,
            ece_echo,
            marks: MarkLog::default(),
            priority: None,
            flow_size: None,
            sent_at,
            delivered_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SwitchError {
    #[error("{mode} requires a sender-stamped {stamp}")]
    MissingStamp { mode: SchedulerMode, stamp: &'static str },
    #[error("mode {mode} needs at least {needed} queues, port has {have}")]
    TooFewQueues { mode: SchedulerMode, needed: usize, have: usize },
    #[error("ECN threshold {threshold} exceeds capacity {capacity}")]
    ThresholdAboveCapacity { threshold: u64, capacity: u64 },
    #[error("PIAS thresholds must be strictly increasing")]
    BadPiasThresholds,
}

/// Queue index for `packet` under `mode`; lower index is served first.
pub fn classify(mode: SchedulerMode, packet: &Packet, n_queues: usize) -> Result<usize, SwitchError> {
    match mode {
        SchedulerMode::DctcpFifo => Ok(1),
        SchedulerMode::Slytherin => Ok(if packet.ce || packet.is_ack { 0 } else { 1 }),
        SchedulerMode::Pias => {
            let level = packet.priority.ok_or(SwitchError::MissingStamp { mode, stamp: "priority level" })?;
            Ok((level as usize).min(n_queues - 1))
        }
        SchedulerMode::SjfIdeal => {
            let size = packet.flow_size.ok_or(SwitchError::MissingStamp { mode, stamp: "flow size" })?;
            Ok(sjf_band(size, n_queues))
        }
    }
}

/// MLFQ level: the number of demotion thresholds at or below `bytes_sent`.
pub fn pias_priority(bytes_sent: u64, thresholds: &[u64]) -> u8 {
    thresholds.iter().take_while(|t| **t <= bytes_sent).count() as u8
}

/// Smallest flow size that lands above band 0 is 8 KB; each band doubles.
const SJF_BASE_LOG2: u32 = 13;

/// Priority band on log2 of the flow size, clamped to `n_bands - 1`.
pub fn sjf_band(flow_size: u64, n_bands: usize) -> usize {
    let log2_ceil = if flow_size <= 1 { 0 } else { 64 - (flow_size - 1).leading_zeros() };
    (log2_ceil.saturating_sub(SJF_BASE_LOG2) as usize).min(n_bands.saturating_sub(1))
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnqueueOutcome {
    Accepted { queue: usize, marked: bool },
    Dropped(Packet),
}

/// Output port: strict-priority FIFO queues sharing one byte budget.
#[derive(Debug, Clone)]
pub struct PortQueueSet {
    mode: SchedulerMode,
    queues: Vec<VecDeque<Packet>>,
    queue_bytes: Vec<u64>,
    capacity: Option<u64>,
    ecn_threshold: Option<u64>,
    occupancy: u64,
    /// Switch ports mark and log hops; host NIC queues do neither.
    is_switch: bool,
}

impl PortQueueSet {
    /// Bounded switch port with ECN marking at `ecn_threshold` bytes.
    pub fn switch_port(
        mode: SchedulerMode,
        n_queues: usize,
        capacity: u64,
        ecn_threshold: u64,
    ) -> Result<Self, SwitchError> {
        if ecn_threshold > capacity {
            return Err(SwitchError::ThresholdAboveCapacity { threshold: ecn_threshold, capacity });
        }
        Self::new(mode, n_queues, Some(capacity), Some(ecn_threshold), true)
    }

    /// Unbounded, unmarked host send queue.
    pub fn host_port(mode: SchedulerMode, n_queues: usize) -> Result<Self, SwitchError> {
        Self::new(mode, n_queues, None, None, false)
    }

    fn new(
        mode: SchedulerMode,
        n_queues: usize,
        capacity: Option<u64>,
        ecn_threshold: Option<u64>,
        is_switch: bool,
    ) -> Result<Self, SwitchError> {
        let needed = match mode {
            SchedulerMode::DctcpFifo | SchedulerMode::Slytherin => 2,
            SchedulerMode::Pias => 4,
            SchedulerMode::SjfIdeal => 1,
        };
        if n_queues < needed {
            return Err(SwitchError::TooFewQueues { mode, needed, have: n_queues });
        }
        Ok(PortQueueSet {
            mode,
            queues: (0..n_queues).map(|_| VecDeque::new()).collect(),
            queue_bytes: vec![0; n_queues],
            capacity,
            ecn_threshold,
            occupancy: 0,
            is_switch,
        })
    }

    pub fn mode(&self) -> SchedulerMode {
        self.mode
    }

    pub fn occupancy(&self) -> u64 {
        self.occupancy
    }

    pub fn capacity(&self) -> Option<u64> {
        self.capacity
    }

    pub fn ecn_threshold(&self) -> Option<u64> {
        self.ecn_threshold
    }

    pub fn queue_count(&self) -> usize {
        self.queues.len()
    }

    pub fn queue_len(&self, q: usize) -> usize {
        self.queues[q].len()
    }

    pub fn queue_bytes(&self, q: usize) -> u64 {
        self.queue_bytes[q]
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy == 0 && self.queues.iter().all(|q| q.is_empty())
    }

    pub fn packets(&self) -> impl Iterator<Item = &Packet> {
        self.queues.iter().flat_map(|q| q.iter())
    }

    /// Tail-drops when the shared budget would overflow. Classification uses
    /// the CE bit as it arrived; marking then applies against the
    /// pre-enqueue port occupancy.
    pub fn enqueue(&mut self, mut packet: Packet) -> Result<EnqueueOutcome, SwitchError> {
        let size = packet.size as u64;
        if let Some(cap) = self.capacity {
            if self.occupancy + size > cap {
                return Ok(EnqueueOutcome::Dropped(packet));
            }
        }
        let queue = classify(self.mode, &packet, self.queues.len())?;
        let marked = self.ecn_threshold.is_some_and(|k| self.occupancy >= k);
        if marked {
            packet.ce = true;
        }
        if self.is_switch {
            packet.marks.record(queue, marked);
        }
        self.occupancy += size;
        self.queue_bytes[queue] += size;
        self.queues[queue].push_back(packet);
        Ok(EnqueueOutcome::Accepted { queue, marked })
    }

    /// Head of the lowest-index nonempty queue.
    pub fn dequeue(&mut self) -> Option<Packet> {
        self.dequeue_with_queue().map(|(_, p)| p)
    }

    pub fn dequeue_with_queue(&mut self) -> Option<(usize, Packet)> {
        let q = self.queues.iter().position(|q| !q.is_empty())?;
        let p = self.queues[q].pop_front()?;
        self.occupancy -= p.size as u64;
        self.queue_bytes[q] -= p.size as u64;
        Some((q, p))
    }
}

pub fn validate_pias_thresholds(t: &[u64]) -> Result<(), SwitchError> {
    if t.windows(2).all(|w| w[0] < w[1]) {
        Ok(())
    } else {
        Err(SwitchError::BadPiasThresholds)
    }
}
