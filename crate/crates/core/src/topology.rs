//! Leaf-spine (and two-switch dumbbell) fabrics, link timing, and flow ECMP.

use std::fmt;

use thiserror::Error;

use crate::sim::{derive_seed, mix64, serialization_delay, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Host,
    Leaf,
    Spine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub kind: NodeKind,
    pub index: u32,
}

impl NodeId {
    pub const fn host(index: u32) -> Self {
        NodeId { kind: NodeKind::Host, index }
    }

    pub const fn leaf(index: u32) -> Self {
        NodeId { kind: NodeKind::Leaf, index }
    }

    pub const fn spine(index: u32) -> Self {
        NodeId { kind: NodeKind::Spine, index }
    }

    pub fn is_switch(&self) -> bool {
        self.kind != NodeKind::Host
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            NodeKind::Host => "h",
            NodeKind::Leaf => "leaf",
            NodeKind::Spine => "spine",
        };
        write!(f, "{k}{}", self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PortId {
    pub node: NodeId,
    pub port: u16,
}

/// Bidirectional link; each direction is an independent channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub a: PortId,
    pub b: PortId,
    pub rate_bps: u64,
    pub propagation: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlowKey {
    pub src: NodeId,
    pub dst: NodeId,
    pub flow_id: u64,
}

impl FlowKey {
    pub fn reversed(&self) -> FlowKey {
        FlowKey {
            src: self.dst,
            dst: self.src,
            flow_id: self.flow_id,
        }
    }

    fn hash_word(&self) -> u64 {
        let node = |n: NodeId| ((n.kind as u64) << 32) | n.index as u64;
        mix64(node(self.src) ^ mix64(node(self.dst) ^ mix64(self.flow_id)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("{0} must be at least 1")]
    ZeroCount(&'static str),
    #[error("link rate must be positive")]
    ZeroRate,
    #[error("no route for flow {src}->{dst} at {at}")]
    NoRoute { src: NodeId, dst: NodeId, at: NodeId },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// Outgoing side of one port.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortInfo {
    pub peer: PortId,
    pub rate_bps: u64,
    pub propagation: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FabricShape {
    LeafSpine,
    /// Two leaves wired back to back, no spines.
    Dumbbell,
}

#[derive(Debug, Clone)]
pub struct Topology {
    shape: FabricShape,
    n_leaf: u32,
    n_spine: u32,
    hosts_per_leaf: u32,
    host_rate_bps: u64,
    uplink_rate_bps: u64,
    propagation: SimTime,
    links: Vec<Link>,
    ports: Vec<Vec<PortInfo>>,
    ecmp_salts: Vec<u64>,
}

impl Topology {
    /// Every host attaches to one leaf, every leaf to every spine.
    pub fn build_leaf_spine(
        n_leaf: u32,
        n_spine: u32,
        hosts_per_leaf: u32,
        host_rate_bps: u64,
        uplink_rate_bps: u64,
        propagation: SimTime,
    ) -> Result<Topology, TopologyError> {
        if n_leaf == 0 {
            return Err(TopologyError::ZeroCount("n_leaf"));
        }
        if n_spine == 0 {
            return Err(TopologyError::ZeroCount("n_spine"));
        }
        Self::build(
            FabricShape::LeafSpine,
            n_leaf,
            n_spine,
            hosts_per_leaf,
            host_rate_bps,
            uplink_rate_bps,
            propagation,
        )
    }

    /// `hosts_per_side` hosts on each of two switches joined by one link of
    /// `bottleneck_rate_bps`.
    pub fn build_dumbbell(
        hosts_per_side: u32,
        host_rate_bps: u64,
        bottleneck_rate_bps: u64,
        propagation: SimTime,
    ) -> Result<Topology, TopologyError> {
        Self::build(
            FabricShape::Dumbbell,
            2,
            0,
            hosts_per_side,
            host_rate_bps,
            bottleneck_rate_bps,
            propagation,
        )
    }

    fn build(
        shape: FabricShape,
        n_leaf: u32,
        n_spine: u32,
        hosts_per_leaf: u32,
        host_rate_bps: u64,
        uplink_rate_bps: u64,
        propagation: SimTime,
    ) -> Result<Topology, TopologyError> {
        if hosts_per_leaf == 0 {
            return Err(TopologyError::ZeroCount("hosts_per_leaf"));
        }
        if host_rate_bps == 0 || uplink_rate_bps == 0 {
            return Err(TopologyError::ZeroRate);
        }
        let n_hosts = n_leaf * hosts_per_leaf;
        let n_nodes = (n_hosts + n_leaf + n_spine) as usize;
        let mut topo = Topology {
            shape,
            n_leaf,
            n_spine,
            hosts_per_leaf,
            host_rate_bps,
            uplink_rate_bps,
            propagation,
            links: Vec::new(),
            ports: vec![Vec::new(); n_nodes],
            ecmp_salts: Vec::new(),
        };
        for leaf in 0..n_leaf {
            for i in 0..hosts_per_leaf {
                let h = NodeId::host(leaf * hosts_per_leaf + i);
                topo.connect(h, NodeId::leaf(leaf), host_rate_bps);
            }
        }
        match shape {
            FabricShape::LeafSpine => {
                for leaf in 0..n_leaf {
                    for s in 0..n_spine {
                        topo.connect(NodeId::leaf(leaf), NodeId::spine(s), uplink_rate_bps);
                    }
                }
            }
            FabricShape::Dumbbell => {
                topo.connect(NodeId::leaf(0), NodeId::leaf(1), uplink_rate_bps);
            }
        }
        topo.set_ecmp_seed(0);
        Ok(topo)
    }

    fn connect(&mut self, a: NodeId, b: NodeId, rate_bps: u64) {
        let da = self.dense(a);
        let db = self.dense(b);
        let pa = PortId { node: a, port: self.ports[da].len() as u16 };
        let pb = PortId { node: b, port: self.ports[db].len() as u16 };
        self.ports[da].push(PortInfo { peer: pb, rate_bps, propagation: self.propagation });
        self.ports[db].push(PortInfo { peer: pa, rate_bps, propagation: self.propagation });
        self.links.push(Link { a: pa, b: pb, rate_bps, propagation: self.propagation });
    }

    /// Re-salts every switch's ECMP hash from the master seed.
    pub fn set_ecmp_seed(&mut self, master_seed: u64) {
        let n = self.n_leaf + self.n_spine;
        self.ecmp_salts = (0..n)
            .map(|i| derive_seed(master_seed, &format!("ecmp-{i}")))
            .collect();
    }

    pub fn shape(&self) -> FabricShape {
        self.shape
    }

    pub fn n_hosts(&self) -> u32 {
        self.n_leaf * self.hosts_per_leaf
    }

    pub fn n_leaf(&self) -> u32 {
        self.n_leaf
    }

    pub fn n_spine(&self) -> u32 {
        self.n_spine
    }

    pub fn hosts_per_leaf(&self) -> u32 {
        self.hosts_per_leaf
    }

    pub fn host_rate_bps(&self) -> u64 {
        self.host_rate_bps
    }

    pub fn uplink_rate_bps(&self) -> u64 {
        self.uplink_rate_bps
    }

    pub fn propagation(&self) -> SimTime {
        self.propagation
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn n_nodes(&self) -> usize {
        self.ports.len()
    }

    /// Downlink over uplink capacity at one leaf.
    pub fn oversubscription(&self) -> f64 {
        let up = match self.shape {
            FabricShape::LeafSpine => self.n_spine as f64 * self.uplink_rate_bps as f64,
            FabricShape::Dumbbell => self.uplink_rate_bps as f64,
        };
        self.hosts_per_leaf as f64 * self.host_rate_bps as f64 / up
    }

    /// Dense index: hosts, then leaves, then spines.
    pub fn dense(&self, n: NodeId) -> usize {
        match n.kind {
            NodeKind::Host => n.index as usize,
            NodeKind::Leaf => (self.n_hosts() + n.index) as usize,
            NodeKind::Spine => (self.n_hosts() + self.n_leaf + n.index) as usize,
        }
    }

    pub fn node_at(&self, dense: usize) -> NodeId {
        let d = dense as u32;
        let h = self.n_hosts();
        if d < h {
            NodeId::host(d)
        } else if d < h + self.n_leaf {
            NodeId::leaf(d - h)
        } else {
            NodeId::spine(d - h - self.n_leaf)
        }
    }

    pub fn contains(&self, n: NodeId) -> bool {
        match n.kind {
            NodeKind::Host => n.index < self.n_hosts(),
            NodeKind::Leaf => n.index < self.n_leaf,
            NodeKind::Spine => n.index < self.n_spine,
        }
    }

    pub fn ports(&self, node: NodeId) -> &[PortInfo] {
        &self.ports[self.dense(node)]
    }

    pub fn ports_dense(&self, dense: usize) -> &[PortInfo] {
        &self.ports[dense]
    }

    pub fn port(&self, p: PortId) -> &PortInfo {
        &self.ports[self.dense(p.node)][p.port as usize]
    }

    pub fn leaf_of(&self, host: NodeId) -> NodeId {
        NodeId::leaf(host.index / self.hosts_per_leaf)
    }

    pub fn hosts(&self) -> impl Iterator<Item = NodeId> {
        (0..self.n_hosts()).map(NodeId::host)
    }

    /// Output port at `at` for packets of `key`. All packets of a flow take
    /// one path; the uplink at a source leaf is picked by a salted hash.
    pub fn ecmp_route(&self, key: &FlowKey, at: NodeId) -> Result<PortId, TopologyError> {
        let no_route = || TopologyError::NoRoute { src: key.src, dst: key.dst, at };
        for n in [key.src, key.dst, at] {
            if !self.contains(n) {
                return Err(TopologyError::UnknownNode(n));
            }
        }
        if key.src.kind != NodeKind::Host || key.dst.kind != NodeKind::Host || key.src == key.dst {
            return Err(no_route());
        }
        let src_leaf = self.leaf_of(key.src);
        let dst_leaf = self.leaf_of(key.dst);
        let hpl = self.hosts_per_leaf;
        let port = match at.kind {
            NodeKind::Host if at == key.src => 0,
            NodeKind::Host => return Err(no_route()),
            NodeKind::Leaf if at == dst_leaf => (key.dst.index % hpl) as u16,
            NodeKind::Leaf if at == src_leaf => match self.shape {
                FabricShape::Dumbbell => hpl as u16,
                FabricShape::LeafSpine => {
                    let salt = self.ecmp_salts[at.index as usize];
                    let h = mix64(key.hash_word() ^ salt);
                    (hpl as u64 + h % self.n_spine as u64) as u16
                }
            },
            NodeKind::Leaf => return Err(no_route()),
            NodeKind::Spine if src_leaf != dst_leaf => dst_leaf.index as u16,
            NodeKind::Spine => return Err(no_route()),
        };
        Ok(PortId { node: at, port })
    }

    /// Node sequence from source host to destination host.
    pub fn path(&self, key: &FlowKey) -> Result<Vec<NodeId>, TopologyError> {
        let mut path = vec![key.src];
        let mut at = key.src;
        while at != key.dst {
            if path.len() > 8 {
                return Err(TopologyError::NoRoute { src: key.src, dst: key.dst, at });
            }
            let p = self.ecmp_route(key, at)?;
            at = self.port(p).peer.node;
            path.push(at);
        }
        Ok(path)
    }

    /// Unloaded round trip for a probe of `probe_bytes` in both directions.
    pub fn unloaded_rtt(&self, key: &FlowKey, probe_bytes: u64) -> Result<SimTime, TopologyError> {
        let mut total = SimTime::ZERO;
        for k in [*key, key.reversed()] {
            let path = self.path(&k)?;
            for w in path.windows(2) {
                let p = self.ecmp_route(&k, w[0])?;
                let info = self.port(p);
                total += serialization_delay(probe_bytes, info.rate_bps) + info.propagation;
            }
        }
        Ok(total)
    }
}

/// Per-link propagation giving an unloaded round trip of `rtt` for a probe of
/// `probe_bytes` across `hops_each_way` links at `rate_bps`.
pub fn propagation_for_rtt(rtt: SimTime, hops_each_way: u32, probe_bytes: u64, rate_bps: u64) -> SimTime {
    let traversals = 2 * hops_each_way as u64;
    let per_hop = rtt.as_nanos() / traversals;
    SimTime::from_nanos(per_hop.saturating_sub(serialization_delay(probe_bytes, rate_bps).as_nanos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const G10: u64 = 10_000_000_000;

    fn key(s: u32, d: u32, id: u64) -> FlowKey {
        FlowKey { src: NodeId::host(s), dst: NodeId::host(d), flow_id: id }
    }

    #[test]
    fn paper_scale_counts() {
        let t = Topology::build_leaf_spine(20, 10, 20, G10, G10, SimTime::ZERO).unwrap();
        assert_eq!(t.n_hosts(), 400);
        assert_eq!(t.oversubscription(), 2.0);
        assert_eq!(t.links().len(), 400 + 200);
        for l in 0..20 {
            assert_eq!(t.ports(NodeId::leaf(l)).len(), 30);
        }
    }

    #[test]
    fn desk_scale_oversubscription() {
        let t = Topology::build_leaf_spine(8, 4, 10, G10, G10, SimTime::ZERO).unwrap();
        assert_eq!(t.n_hosts(), 80);
        assert_eq!(t.oversubscription(), 2.5);
        let t = Topology::build_leaf_spine(8, 4, 8, G10, G10, SimTime::ZERO).unwrap();
        assert_eq!(t.n_hosts(), 64);
        assert_eq!(t.oversubscription(), 2.0);
    }

    #[test]
    fn minimal_fabric_same_leaf_path() {
        let t = Topology::build_leaf_spine(1, 1, 2, G10, G10, SimTime::ZERO).unwrap();
        assert_eq!(t.n_hosts(), 2);
        let path = t.path(&key(0, 1, 9)).unwrap();
        assert_eq!(path, vec![NodeId::host(0), NodeId::leaf(0), NodeId::host(1)]);
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(Topology::build_leaf_spine(0, 1, 1, G10, G10, SimTime::ZERO).is_err());
        assert!(Topology::build_leaf_spine(1, 0, 1, G10, G10, SimTime::ZERO).is_err());
        assert!(Topology::build_leaf_spine(1, 1, 0, G10, G10, SimTime::ZERO).is_err());
        assert_eq!(
            Topology::build_leaf_spine(1, 1, 1, 0, G10, SimTime::ZERO).unwrap_err(),
            TopologyError::ZeroRate
        );
    }

    #[test]
    fn route_is_deterministic() {
        let t = Topology::build_leaf_spine(8, 4, 10, G10, G10, SimTime::ZERO).unwrap();
        let k = key(3, 55, 1234);
        let first = t.ecmp_route(&k, NodeId::leaf(0)).unwrap();
        for _ in 0..1_000_000 {
            assert_eq!(t.ecmp_route(&k, NodeId::leaf(0)).unwrap(), first);
        }
    }

    #[test]
    fn same_leaf_goes_down_never_up() {
        let t = Topology::build_leaf_spine(8, 4, 10, G10, G10, SimTime::ZERO).unwrap();
        for id in 0..100 {
            let p = t.ecmp_route(&key(11, 17, id), NodeId::leaf(1)).unwrap();
            assert_eq!(p.port, 7);
            assert_eq!(t.port(p).peer.node, NodeId::host(17));
        }
    }

    #[test]
    fn uplink_hash_is_uniform() {
        let t = Topology::build_leaf_spine(8, 4, 10, G10, G10, SimTime::ZERO).unwrap();
        let mut rng = crate::sim::SimRng::new(5);
        let mut counts = [0u32; 4];
        let n = 100_000;
        for _ in 0..n {
            let src = rng.index(10) as u32;
            let dst = 10 + rng.index(70) as u32;
            let k = key(src, dst, rng.next_u64());
            let p = t.ecmp_route(&k, NodeId::leaf(0)).unwrap();
            counts[(p.port - 10) as usize] += 1;
        }
        for c in counts {
            let frac = c as f64 / n as f64;
            assert!((frac - 0.25).abs() <= 0.02, "uplink share {frac}");
        }
    }

    #[test]
    fn invalid_routes() {
        let t = Topology::build_leaf_spine(2, 2, 2, G10, G10, SimTime::ZERO).unwrap();
        assert!(t.ecmp_route(&key(0, 0, 1), NodeId::leaf(0)).is_err());
        assert!(t.ecmp_route(&key(0, 1, 1), NodeId::spine(0)).is_err());
        assert!(t.ecmp_route(&key(0, 9, 1), NodeId::leaf(0)).is_err());
        // leaf 1 is not on a path between hosts of leaf 0
        assert!(t.ecmp_route(&key(0, 1, 1), NodeId::leaf(1)).is_err());
    }

    #[test]
    fn paths_have_at_most_four_links_and_are_consistent() {
        let t = Topology::build_leaf_spine(8, 4, 10, G10, G10, SimTime::ZERO).unwrap();
        for s in 0..80 {
            for d in (0..80).step_by(7) {
                if s == d {
                    continue;
                }
                let k = key(s, d, (s * 100 + d) as u64);
                let p1 = t.path(&k).unwrap();
                assert!(p1.len() - 1 <= 4);
                assert_eq!(p1, t.path(&k).unwrap());
            }
        }
    }

    #[test]
    fn rtt_target_is_met() {
        let prop = propagation_for_rtt(SimTime::from_micros(80), 4, 40, G10);
        assert_eq!(prop, SimTime::from_nanos(10_000 - 32));
        let t = Topology::build_leaf_spine(8, 4, 10, G10, G10, prop).unwrap();
        let rtt = t.unloaded_rtt(&key(0, 79, 1), 40).unwrap();
        assert_eq!(rtt, SimTime::from_micros(80));
    }

    #[test]
    fn dumbbell_shape() {
        let t = Topology::build_dumbbell(2, G10, G10, SimTime::ZERO).unwrap();
        assert_eq!(t.n_hosts(), 4);
        let p = t.path(&key(0, 2, 1)).unwrap();
        assert_eq!(p, vec![NodeId::host(0), NodeId::leaf(0), NodeId::leaf(1), NodeId::host(2)]);
        let p = t.path(&key(1, 3, 1)).unwrap();
        assert_eq!(p[1..3], [NodeId::leaf(0), NodeId::leaf(1)]);
    }
}
