//! DCTCP-style reliable transport: per-packet cumulative ACKs with ECN echo,
//! the marked-fraction estimator, proportional window cuts, fast retransmit
//! and exponential-backoff timeouts.

use std::collections::BTreeMap;

use crate::sim::SimTime;

#[derive(Debug, Clone, PartialEq)]
pub struct DctcpConfig {
    /// Payload bytes per segment.
    pub mss: u32,
    pub header_bytes: u32,
    pub ack_bytes: u32,
    /// Estimator gain.
    pub g: f64,
    pub alpha_init: f64,
    pub init_cwnd_mss: u32,
    pub min_rto: SimTime,
    pub max_rto: SimTime,
    pub dupack_threshold: u32,
    /// Receiver-advertised window; cwnd never grows past it.
    pub rwnd_bytes: u64,
}

impl Default for DctcpConfig {
    fn default() -> Self {
        DctcpConfig {
            mss: 1460,
            header_bytes: 40,
            ack_bytes: 40,
            g: 1.0 / 16.0,
            alpha_init: 1.0,
            init_cwnd_mss: 10,
            min_rto: SimTime::from_millis(10),
            max_rto: SimTime::from_millis(320),
            dupack_threshold: 3,
            rwnd_bytes: 131_072,
        }
    }
}

/// One EWMA step of the marked fraction.
pub fn alpha_update(alpha: f64, marked_fraction: f64, g: f64) -> f64 {
    ((1.0 - g) * alpha + g * marked_fraction).clamp(0.0, 1.0)
}

/// A segment the sender wants on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub seq: u64,
    pub len: u32,
    pub retransmit: bool,
    /// Highest byte offset sent before this segment, for MLFQ tagging.
    pub bytes_sent: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AckOutcome {
    pub newly_acked: u64,
    pub completed: bool,
    pub window_closed: bool,
    pub cut: bool,
    pub fast_retransmit: Option<Segment>,
}

/// Sender congestion state.
#[derive(Debug, Clone)]
pub struct DctcpState {
    pub cwnd: f64,
    pub ssthresh: f64,
    pub alpha: f64,
    pub g: f64,
    pub marked_bytes: u64,
    pub acked_bytes: u64,
    pub window_end_seq: u64,
    pub rto: SimTime,
    pub next_seq: u64,
    pub highest_acked: u64,
}

impl DctcpState {
    pub fn new(cfg: &DctcpConfig) -> Self {
        DctcpState {
            cwnd: cfg.init_cwnd_mss as f64 * cfg.mss as f64,
            ssthresh: f64::INFINITY,
            alpha: cfg.alpha_init.clamp(0.0, 1.0),
            g: cfg.g,
            marked_bytes: 0,
            acked_bytes: 0,
            window_end_seq: 0,
            rto: cfg.min_rto,
            next_seq: 0,
            highest_acked: 0,
        }
    }

    pub fn in_flight(&self) -> u64 {
        self.next_seq - self.highest_acked
    }

    /// Folds the window's marked fraction into alpha and, if anything was
    /// marked, cuts the window by alpha/2. Returns whether a cut happened.
    pub fn close_window(&mut self, mss: f64) -> bool {
        let f = if self.acked_bytes == 0 {
            0.0
        } else {
            self.marked_bytes as f64 / self.acked_bytes as f64
        };
        self.alpha = alpha_update(self.alpha, f, self.g);
        assert!((0.0..=1.0).contains(&self.alpha), "alpha out of range: {}", self.alpha);
        let cut = self.marked_bytes > 0;
        if cut {
            self.cwnd = (self.cwnd * (1.0 - self.alpha / 2.0)).max(mss);
            self.ssthresh = self.cwnd;
        }
        self.marked_bytes = 0;
        self.acked_bytes = 0;
        self.window_end_seq = self.next_seq;
        cut
    }
}

#[derive(Debug, Clone)]
pub struct DctcpSender {
    cfg: DctcpConfig,
    total: u64,
    pub state: DctcpState,
    high_water: u64,
    dupacks: u32,
    recover: Option<u64>,
    last_progress: SimTime,
    started: bool,
    pub timeouts: u32,
    pub fast_retransmits: u32,
    pub cuts: u32,
    pub sent_segments: u64,
    pub retransmitted_segments: u64,
}

impl DctcpSender {
    pub fn new(cfg: DctcpConfig, total_bytes: u64) -> Self {
        let state = DctcpState::new(&cfg);
        DctcpSender {
            cfg,
            total: total_bytes,
            state,
            high_water: 0,
            dupacks: 0,
            recover: None,
            last_progress: SimTime::ZERO,
            started: false,
            timeouts: 0,
            fast_retransmits: 0,
            cuts: 0,
            sent_segments: 0,
            retransmitted_segments: 0,
        }
    }

    pub fn config(&self) -> &DctcpConfig {
        &self.cfg
    }

    pub fn total_bytes(&self) -> u64 {
        self.total
    }

    pub fn is_complete(&self) -> bool {
        self.state.highest_acked >= self.total
    }

    pub fn start(&mut self, now: SimTime) {
        self.started = true;
        self.last_progress = now;
    }

    fn segment_at(&self, seq: u64) -> u32 {
        (self.total - seq).min(self.cfg.mss as u64) as u32
    }

    /// Next segment allowed by the window, if any.
    pub fn next_segment(&mut self, now: SimTime) -> Option<Segment> {
        if !self.started || self.state.next_seq >= self.total {
            return None;
        }
        let len = self.segment_at(self.state.next_seq);
        if (self.state.in_flight() + len as u64) as f64 > self.state.cwnd {
            return None;
        }
        if self.state.in_flight() == 0 {
            self.last_progress = now;
        }
        let seq = self.state.next_seq;
        let retransmit = seq < self.high_water;
        let seg = Segment { seq, len, retransmit, bytes_sent: self.high_water.max(seq) };
        self.state.next_seq += len as u64;
        self.high_water = self.high_water.max(self.state.next_seq);
        self.sent_segments += 1;
        if retransmit {
            self.retransmitted_segments += 1;
        }
        debug_assert!(self.state.in_flight() as f64 <= self.state.cwnd);
        Some(seg)
    }

    fn retransmit_head(&mut self) -> Segment {
        let seq = self.state.highest_acked;
        self.sent_segments += 1;
        self.retransmitted_segments += 1;
        Segment { seq, len: self.segment_at(seq), retransmit: true, bytes_sent: self.high_water }
    }

    pub fn on_ack(&mut self, now: SimTime, ack_no: u64, ece: bool) -> AckOutcome {
        let mut out = AckOutcome::default();
        let mss = self.cfg.mss as f64;
        if ack_no <= self.state.highest_acked {
            if ack_no == self.state.highest_acked && self.state.in_flight() > 0 {
                self.dupacks += 1;
                if self.dupacks == self.cfg.dupack_threshold && self.recover.is_none() {
                    self.recover = Some(self.state.next_seq);
                    self.state.ssthresh = (self.state.cwnd / 2.0).max(2.0 * mss);
                    self.state.cwnd = self.state.ssthresh;
                    self.fast_retransmits += 1;
                    out.fast_retransmit = Some(self.retransmit_head());
                }
            }
            return out;
        }
        // Go-back-N after a timeout can leave next_seq behind a cumulative
        // ACK covering buffered data.
        let ack_no = ack_no.min(self.total);
        let newly = ack_no - self.state.highest_acked;
        self.state.highest_acked = ack_no;
        if self.state.next_seq < ack_no {
            self.state.next_seq = ack_no;
        }
        self.dupacks = 0;
        self.state.rto = self.cfg.min_rto;
        self.last_progress = now;
        out.newly_acked = newly;

        self.state.acked_bytes += newly;
        if ece {
            self.state.marked_bytes += newly;
        }
        if self.state.cwnd < self.state.ssthresh {
            self.state.cwnd += newly as f64;
        } else {
            self.state.cwnd += mss * newly as f64 / self.state.cwnd;
        }
        self.state.cwnd = self.state.cwnd.min((self.cfg.rwnd_bytes as f64).max(mss));

        if let Some(r) = self.recover {
            if ack_no >= r {
                self.recover = None;
            } else if ack_no < self.total {
                out.fast_retransmit = Some(self.retransmit_head());
            }
        }

        if self.state.highest_acked >= self.state.window_end_seq {
            out.window_closed = true;
            out.cut = self.state.close_window(mss);
            if out.cut {
                self.cuts += 1;
            }
        }
        out.completed = self.is_complete();
        out
    }

    /// When the retransmission timer would fire, if armed.
    pub fn rto_deadline(&self) -> Option<SimTime> {
        (self.started && !self.is_complete() && self.state.in_flight() > 0)
            .then(|| self.last_progress + self.state.rto)
    }

    /// Handles an expired timer; returns false if the timer was stale.
    pub fn on_timeout(&mut self, now: SimTime) -> bool {
        match self.rto_deadline() {
            Some(d) if d <= now => {}
            _ => return false,
        }
        let mss = self.cfg.mss as f64;
        self.state.ssthresh = (self.state.cwnd / 2.0).max(2.0 * mss);
        self.state.cwnd = mss;
        self.state.next_seq = self.state.highest_acked;
        self.state.rto = SimTime::from_nanos((self.state.rto.as_nanos() * 2).min(self.cfg.max_rto.as_nanos()));
        self.recover = None;
        self.dupacks = 0;
        self.last_progress = now;
        self.timeouts += 1;
        true
    }
}

/// Receiver: cumulative ACKs, out-of-order buffering, reorder accounting.
#[derive(Debug, Clone, Default)]
pub struct DctcpReceiver {
    rcv_nxt: u64,
    /// start -> end of buffered out-of-order ranges
    ooo: BTreeMap<u64, u64>,
    max_seq_seen: Option<u64>,
    pub data_packets: u64,
    pub reordered_packets: u64,
}

impl DctcpReceiver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rcv_nxt(&self) -> u64 {
        self.rcv_nxt
    }

    /// Accepts a data segment and returns the cumulative ACK number.
    pub fn on_data(&mut self, seq: u64, len: u32) -> u64 {
        self.data_packets += 1;
        match self.max_seq_seen {
            Some(m) if seq < m => self.reordered_packets += 1,
            Some(m) => self.max_seq_seen = Some(m.max(seq)),
            None => self.max_seq_seen = Some(seq),
        }
        let end = seq + len as u64;
        if end > self.rcv_nxt {
            if seq <= self.rcv_nxt {
                self.rcv_nxt = end;
            } else {
                let e = self.ooo.entry(seq).or_insert(end);
                *e = (*e).max(end);
            }
            while let Some((&s, &e)) = self.ooo.first_key_value() {
                if s > self.rcv_nxt {
                    break;
                }
                self.ooo.pop_first();
                self.rcv_nxt = self.rcv_nxt.max(e);
            }
        }
        self.rcv_nxt
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn alpha_stays_in_unit_interval(
            a0 in 0.0f64..=1.0,
            g in 0.001f64..=1.0,
            windows in proptest::collection::vec((1u64..100_000, 0.0f64..=1.0), 1..200),
        ) {
            let cfg = DctcpConfig { alpha_init: a0, g, ..DctcpConfig::default() };
            let mut st = DctcpState::new(&cfg);
            for (acked, frac) in windows {
                st.acked_bytes = acked;
                st.marked_bytes = (acked as f64 * frac) as u64;
                st.close_window(1460.0);
                prop_assert!((0.0..=1.0).contains(&st.alpha));
                prop_assert!(st.cwnd >= 1460.0);
            }
        }

        #[test]
        fn receiver_acks_every_byte_once_all_arrive(
            order in Just((0u64..40).collect::<Vec<_>>()).prop_shuffle()
        ) {
            let mut r = DctcpReceiver::new();
            let mut last = 0;
            for i in &order {
                let a = r.on_data(i * 1460, 1460);
                prop_assert!(a >= last);
                last = a;
            }
            prop_assert_eq!(last, 40 * 1460);
        }
    }
}
