//! The packet-level network: hosts running DCTCP endpoints, switches with
//! [`PortQueueSet`] output ports, and store-and-forward links, driven by the
//! [`EventQueue`].

use thiserror::Error;

use crate::sim::{serialization_delay, EventQueue, RunSummary, SimTime, TraceDigest};
use crate::switch::{pias_priority, EnqueueOutcome, Packet, PortQueueSet, SchedulerMode, SwitchError};
use crate::telemetry::{FctSample, FlowMarkTally, PacketTraceRecord, QueueHistogram};
use crate::topology::{NodeId, NodeKind, Topology, TopologyError};
use crate::transport::{DctcpConfig, DctcpReceiver, DctcpSender, Segment};
use crate::workload::Flow;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub mode: SchedulerMode,
    pub capacity_bytes: u64,
    pub ecn_threshold_bytes: u64,
    pub pias_thresholds: Vec<u64>,
    pub sjf_queues: usize,
    pub transport: DctcpConfig,
    /// Keep a record per delivered data packet (memory heavy).
    pub record_traces: bool,
    /// Sample acknowledged bytes of `watched_flows` at this interval.
    pub sample_interval: Option<SimTime>,
    pub watched_flows: Vec<usize>,
    /// Stop sampling after this time.
    pub sample_until: SimTime,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            mode: SchedulerMode::DctcpFifo,
            capacity_bytes: 150_000,
            ecn_threshold_bytes: 37_500,
            pias_thresholds: vec![32_000, 128_000, 512_000],
            sjf_queues: 8,
            transport: DctcpConfig::default(),
            record_traces: false,
            sample_interval: None,
            watched_flows: Vec::new(),
            sample_until: SimTime::MAX,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Switch(#[from] SwitchError),
    #[error("flow {0} has zero size")]
    EmptyFlow(usize),
    #[error("flows must be sorted by arrival time")]
    Unsorted,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    FlowStart(u32),
    /// `packet` has fully arrived at dense node `node`.
    Arrival { node: u32, packet: Packet },
    /// The channel out of `(node, port)` finished serializing.
    LinkFree { node: u32, port: u16 },
    Timeout(u32),
    TelemetrySample,
    RunEnd,
}

/// Packet accounting for one flow (data and ACK packets together).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PacketCounts {
    pub injected: u64,
    pub delivered: u64,
    pub dropped: u64,
}

/// Switch drops by where they happened.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropBreakdown {
    /// Leaf ports facing hosts.
    pub leaf_down: u64,
    /// Leaf ports facing spines (or the peer leaf in a dumbbell).
    pub leaf_up: u64,
    pub spine: u64,
    pub acks: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InvariantViolations {
    /// Data packets that used the high-priority queue at their first switch
    /// in slytherin mode.
    pub first_hop_priority: u64,
    /// CE at delivery disagrees with the per-hop mark log.
    pub mark_soundness: u64,
    /// Packets that crossed more than four switches.
    pub hop_limit: u64,
    /// Completed flows faster than the unloaded bound.
    pub fct_lower_bound: u64,
}

struct Port {
    queue: PortQueueSet,
    busy: bool,
    /// Index into the switch queue histogram.
    hist: Option<usize>,
    bytes_sent: u64,
}

struct FlowState {
    flow: Flow,
    sender: DctcpSender,
    receiver: DctcpReceiver,
    timer_armed: bool,
    tally: FlowMarkTally,
    counts: PacketCounts,
    fct_floor: SimTime,
}

pub struct Network {
    topo: Topology,
    cfg: NetworkConfig,
    queue: EventQueue<Event>,
    ports: Vec<Vec<Port>>,
    flows: Vec<FlowState>,
    next_start: usize,
    completed: usize,
    hist: QueueHistogram,
    fcts: Vec<FctSample>,
    traces: Vec<PacketTraceRecord>,
    series: Vec<Vec<u64>>,
    violations: InvariantViolations,
    drops: u64,
    drop_sites: DropBreakdown,
    marks: u64,
    digest: TraceDigest,
    events: u64,
    bytes_delivered: u64,
}

impl Network {
    pub fn new(topo: Topology, cfg: NetworkConfig, flows: Vec<Flow>) -> Result<Self, EngineError> {
        if flows.windows(2).any(|w| w[0].arrive_at > w[1].arrive_at) {
            return Err(EngineError::Unsorted);
        }
        let nq = cfg.mode.default_queue_count(cfg.sjf_queues);
        let mut ports = Vec::with_capacity(topo.n_nodes());
        let mut n_switch_ports = 0;
        for d in 0..topo.n_nodes() {
            let node = topo.node_at(d);
            let mut list = Vec::new();
            for _ in topo.ports_dense(d) {
                let (queue, hist) = if node.is_switch() {
                    let q = PortQueueSet::switch_port(cfg.mode, nq, cfg.capacity_bytes, cfg.ecn_threshold_bytes)?;
                    n_switch_ports += 1;
                    (q, Some(n_switch_ports - 1))
                } else {
                    (PortQueueSet::host_port(cfg.mode, nq)?, None)
                };
                list.push(Port { queue, busy: false, hist, bytes_sent: 0 });
            }
            ports.push(list);
        }
        let mut states = Vec::with_capacity(flows.len());
        for (i, f) in flows.into_iter().enumerate() {
            if f.size == 0 {
                return Err(EngineError::EmptyFlow(i));
            }
            let wire = f.size + f.size.div_ceil(cfg.transport.mss as u64) * cfg.transport.header_bytes as u64;
            let fct_floor = serialization_delay(wire, topo.host_rate_bps()) + topo.unloaded_rtt(&f.key, cfg.transport.ack_bytes as u64)?;
            states.push(FlowState {
                sender: DctcpSender::new(cfg.transport.clone(), f.size),
                receiver: DctcpReceiver::new(),
                flow: f,
                timer_armed: false,
                tally: FlowMarkTally::default(),
                counts: PacketCounts::default(),
                fct_floor,
            });
        }
        let hist = QueueHistogram::new(n_switch_ports, cfg.capacity_bytes, 1);
        let series = vec![Vec::new(); cfg.watched_flows.len()];
        let mut net = Network {
            topo,
            cfg,
            queue: EventQueue::new(),
            ports,
            flows: states,
            next_start: 0,
            completed: 0,
            hist,
            fcts: Vec::new(),
            traces: Vec::new(),
            series,
            violations: InvariantViolations::default(),
            drops: 0,
            drop_sites: DropBreakdown::default(),
            marks: 0,
            digest: TraceDigest::default(),
            events: 0,
            bytes_delivered: 0,
        };
        net.schedule_next_start();
        if let Some(iv) = net.cfg.sample_interval {
            net.queue.schedule_in(iv, Event::TelemetrySample);
        }
        Ok(net)
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    pub fn completed(&self) -> usize {
        self.completed
    }

    pub fn all_complete(&self) -> bool {
        self.completed == self.flows.len()
    }

    pub fn schedule(&mut self, at: SimTime, ev: Event) -> Result<(), crate::sim::ScheduleError> {
        self.queue.schedule(at, ev).map(|_| ())
    }

    fn schedule_next_start(&mut self) {
        if let Some(f) = self.flows.get(self.next_start) {
            let at = f.flow.arrive_at.max(self.queue.now());
            let id = self.next_start as u32;
            self.queue.schedule(at, Event::FlowStart(id)).expect("not in the past");
            self.next_start += 1;
        }
    }

    /// Processes all events firing at or before `end`.
    pub fn run_until(&mut self, end: SimTime) -> RunSummary {
        let start_events = self.events;
        while let Some(ev) = self.queue.pop_until(end) {
            self.events += 1;
            self.absorb(ev.fire_at, &ev.payload);
            self.handle(ev.payload);
        }
        RunSummary {
            events: self.events - start_events,
            clock: self.queue.now().min(end),
        }
    }

    fn absorb(&mut self, at: SimTime, ev: &Event) {
        let d = &mut self.digest;
        let word = match ev {
            Event::FlowStart(f) => 1 | (*f as u64) << 8,
            Event::Arrival { node, packet } => {
                d.absorb(packet.key.flow_id ^ (packet.seq << 20) ^ ((packet.is_ack as u64) << 63));
                2 | (*node as u64) << 8
            }
            Event::LinkFree { node, port } => 3 | (*node as u64) << 8 | (*port as u64) << 40,
            Event::Timeout(f) => 4 | (*f as u64) << 8,
            // observation only; excluded from the trace
            Event::TelemetrySample => return,
            Event::RunEnd => 6,
        };
        d.absorb(at.as_nanos());
        d.absorb(word);
    }

    fn handle(&mut self, ev: Event) {
        match ev {
            Event::FlowStart(f) => {
                let f = f as usize;
                let now = self.now();
                self.flows[f].sender.start(now);
                self.schedule_next_start();
                self.pump(f);
            }
            Event::Arrival { node, packet } => self.on_arrival(node as usize, packet),
            Event::LinkFree { node, port } => {
                let p = &mut self.ports[node as usize][port as usize];
                p.busy = false;
                self.start_tx(node as usize, port as usize);
            }
            Event::Timeout(f) => self.on_timer(f as usize),
            Event::TelemetrySample => self.sample(),
            Event::RunEnd => {}
        }
    }

    fn sample(&mut self) {
        for (i, &f) in self.cfg.watched_flows.iter().enumerate() {
            let acked = self.flows.get(f).map_or(0, |s| s.sender.state.highest_acked);
            self.series[i].push(acked);
        }
        if let Some(iv) = self.cfg.sample_interval {
            let next = self.now() + iv;
            if next <= self.cfg.sample_until && !self.all_complete() {
                self.queue.schedule_in(iv, Event::TelemetrySample);
            }
        }
    }

    fn data_packet(&self, f: usize, seg: Segment) -> Packet {
        let st = &self.flows[f];
        let t = &self.cfg.transport;
        let mut p = Packet::data(st.flow.key, seg.seq, seg.len, t.header_bytes, self.now());
        p.priority = Some(pias_priority(seg.bytes_sent, &self.cfg.pias_thresholds));
        p.flow_size = Some(st.flow.size);
        p
    }

    /// Sends whatever the window allows and arms the timer.
    fn pump(&mut self, f: usize) {
        let now = self.now();
        while let Some(seg) = self.flows[f].sender.next_segment(now) {
            let p = self.data_packet(f, seg);
            self.inject(f, p);
        }
        self.arm_timer(f);
    }

    fn arm_timer(&mut self, f: usize) {
        let st = &mut self.flows[f];
        if st.timer_armed {
            return;
        }
        if let Some(deadline) = st.sender.rto_deadline() {
            st.timer_armed = true;
            let at = deadline.max(self.queue.now());
            self.queue.schedule(at, Event::Timeout(f as u32)).expect("not in the past");
        }
    }

    fn on_timer(&mut self, f: usize) {
        let now = self.now();
        self.flows[f].timer_armed = false;
        if self.flows[f].sender.on_timeout(now) {
            self.pump(f);
        } else {
            self.arm_timer(f);
        }
    }

    /// Hands a packet to the source host's NIC.
    fn inject(&mut self, f: usize, p: Packet) {
        self.flows[f].counts.injected += 1;
        let host = self.topo.dense(p.key.src);
        let port = &mut self.ports[host][0];
        match port.queue.enqueue(p).expect("stamped packet") {
            EnqueueOutcome::Accepted { .. } => {}
            EnqueueOutcome::Dropped(_) => unreachable!("host queues are unbounded"),
        }
        self.start_tx(host, 0);
    }

    fn start_tx(&mut self, node: usize, port: usize) {
        let p = &mut self.ports[node][port];
        if p.busy {
            return;
        }
        let Some(pkt) = p.queue.dequeue() else {
            return;
        };
        p.busy = true;
        p.bytes_sent += pkt.size as u64;
        let now = self.queue.now();
        if let Some(h) = p.hist {
            self.hist.observe(h, now, p.queue.occupancy());
        }
        let info = self.topo.ports_dense(node)[port];
        let ser = serialization_delay(pkt.size as u64, info.rate_bps);
        let peer = self.topo.dense(info.peer.node) as u32;
        self.queue.schedule_in(ser, Event::LinkFree { node: node as u32, port: port as u16 });
        self.queue.schedule_in(ser + info.propagation, Event::Arrival { node: peer, packet: pkt });
    }

    fn on_arrival(&mut self, node: usize, mut pkt: Packet) {
        let at = self.topo.node_at(node);
        if at.is_switch() {
            self.forward(node, at, pkt);
            return;
        }
        let now = self.now();
        pkt.delivered_at = Some(now);
        let f = pkt.key.flow_id as usize;
        self.flows[f].counts.delivered += 1;
        if pkt.marks.hops() > 4 {
            self.violations.hop_limit += 1;
        }
        if pkt.ce != (pkt.marks.marked_hops() > 0) {
            self.violations.mark_soundness += 1;
        }
        if pkt.is_ack {
            self.on_ack(f, pkt);
        } else {
            self.on_data(f, pkt);
        }
    }

    fn forward(&mut self, node: usize, at: NodeId, pkt: Packet) {
        let out = self.topo.ecmp_route(&pkt.key, at).expect("flow endpoints are valid hosts");
        let port = out.port as usize;
        let p = &mut self.ports[node][port];
        let f = pkt.key.flow_id as usize;
        match p.queue.enqueue(pkt).expect("stamped packet") {
            EnqueueOutcome::Accepted { marked, .. } => {
                if marked {
                    self.marks += 1;
                }
                if let Some(h) = p.hist {
                    self.hist.observe(h, self.queue.now(), p.queue.occupancy());
                }
                self.start_tx(node, port);
            }
            EnqueueOutcome::Dropped(d) => {
                self.drops += 1;
                let ds = &mut self.drop_sites;
                match at.kind {
                    NodeKind::Spine => ds.spine += 1,
                    _ if port < self.topo.hosts_per_leaf() as usize => ds.leaf_down += 1,
                    _ => ds.leaf_up += 1,
                }
                if d.is_ack {
                    ds.acks += 1;
                }
                self.flows[f].counts.dropped += 1;
            }
        }
    }

    fn on_data(&mut self, f: usize, pkt: Packet) {
        let now = self.now();
        if self.cfg.mode == SchedulerMode::Slytherin && pkt.marks.queue_at(0) == Some(0) {
            self.violations.first_hop_priority += 1;
        }
        let st = &mut self.flows[f];
        st.tally.packets += 1;
        if pkt.marks.marked_hops() >= 2 {
            st.tally.multi_marked += 1;
        }
        if self.cfg.record_traces {
            self.traces.push(PacketTraceRecord {
                key: pkt.key,
                seq: pkt.seq,
                hops_marked: pkt.marks.marked_hops() as u8,
                delivered_at: now,
            });
        }
        let before = st.receiver.rcv_nxt();
        let ack_no = st.receiver.on_data(pkt.seq, pkt.payload);
        self.bytes_delivered += ack_no - before;
        let mut ack = Packet::ack(pkt.key.reversed(), ack_no, self.cfg.transport.ack_bytes, pkt.ce, now);
        ack.priority = pkt.priority;
        ack.flow_size = pkt.flow_size;
        self.inject(f, ack);
    }

    fn on_ack(&mut self, f: usize, ack: Packet) {
        let now = self.now();
        let st = &mut self.flows[f];
        if st.flow.completed_at.is_some() {
            return;
        }
        let out = st.sender.on_ack(now, ack.seq, ack.ece_echo);
        if let Some(seg) = out.fast_retransmit {
            let p = self.data_packet(f, seg);
            self.inject(f, p);
        }
        if out.completed {
            let st = &mut self.flows[f];
            st.flow.completed_at = Some(now);
            let fct = now - st.flow.arrive_at;
            if fct < st.fct_floor {
                self.violations.fct_lower_bound += 1;
            }
            self.fcts.push(FctSample { key: st.flow.key, class: st.flow.class, size: st.flow.size, fct });
            self.completed += 1;
            return;
        }
        self.pump(f);
    }

    /// Packets currently inside the network: queued at any port or on a link.
    pub fn census(&self) -> Vec<u64> {
        let mut per_flow = vec![0u64; self.flows.len()];
        for node in &self.ports {
            for p in node {
                for pkt in p.queue.packets() {
                    per_flow[pkt.key.flow_id as usize] += 1;
                }
            }
        }
        for ev in self.queue.pending() {
            if let Event::Arrival { packet, .. } = ev {
                per_flow[packet.key.flow_id as usize] += 1;
            }
        }
        per_flow
    }

    pub fn packet_counts(&self) -> Vec<PacketCounts> {
        self.flows.iter().map(|s| s.counts).collect()
    }

    /// Finalizes telemetry at the current clock.
    pub fn finish(mut self) -> RunOutput {
        let end = self.now();
        self.hist.flush(end);
        let census = self.census();
        let counts = self.packet_counts();
        let mut timeouts = 0;
        let mut fast_retransmits = 0;
        let mut reordered = 0;
        let mut data_packets = 0;
        let mut alpha_in_range = true;
        let mut flow_reordered = Vec::with_capacity(self.flows.len());
        let mut tallies = Vec::with_capacity(self.flows.len());
        let mut flows = Vec::with_capacity(self.flows.len());
        for st in self.flows {
            timeouts += st.sender.timeouts as u64;
            fast_retransmits += st.sender.fast_retransmits as u64;
            reordered += st.receiver.reordered_packets;
            data_packets += st.receiver.data_packets;
            flow_reordered.push(st.receiver.reordered_packets);
            alpha_in_range &= (0.0..=1.0).contains(&st.sender.state.alpha);
            tallies.push(st.tally);
            flows.push(st.flow);
        }
        let mut switch_bytes_sent = 0;
        for (d, node) in self.ports.iter().enumerate() {
            if self.topo.node_at(d).is_switch() {
                switch_bytes_sent += node.iter().map(|p| p.bytes_sent).sum::<u64>();
            }
        }
        RunOutput {
            end,
            events: self.events,
            digest: self.digest.value(),
            flows,
            fcts: self.fcts,
            tallies,
            traces: self.traces,
            queue_hist: self.hist,
            series: self.series,
            violations: self.violations,
            counts,
            in_network: census,
            drops: self.drops,
            drop_sites: self.drop_sites,
            marks: self.marks,
            timeouts,
            fast_retransmits,
            reordered_packets: reordered,
            data_packets,
            flow_reordered,
            alpha_in_range,
            switch_bytes_sent,
            bytes_delivered: self.bytes_delivered,
        }
    }
}

/// Raw observations from one finished run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub end: SimTime,
    pub events: u64,
    pub digest: u64,
    pub flows: Vec<Flow>,
    pub fcts: Vec<FctSample>,
    pub tallies: Vec<FlowMarkTally>,
    pub traces: Vec<PacketTraceRecord>,
    pub queue_hist: QueueHistogram,
    pub series: Vec<Vec<u64>>,
    pub violations: InvariantViolations,
    pub counts: Vec<PacketCounts>,
    pub in_network: Vec<u64>,
    pub drops: u64,
    pub drop_sites: DropBreakdown,
    pub marks: u64,
    pub timeouts: u64,
    pub fast_retransmits: u64,
    pub reordered_packets: u64,
    pub data_packets: u64,
    pub flow_reordered: Vec<u64>,
    pub alpha_in_range: bool,
    pub switch_bytes_sent: u64,
    pub bytes_delivered: u64,
}

impl RunOutput {
    /// injected == delivered + dropped + in-network, for every flow.
    pub fn conservation_holds(&self) -> bool {
        self.counts
            .iter()
            .zip(&self.in_network)
            .all(|(c, n)| c.injected == c.delivered + c.dropped + n)
    }

    pub fn all_complete(&self) -> bool {
        self.flows.iter().all(|f| f.completed_at.is_some())
    }
}
