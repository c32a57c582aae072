//! Leaf-spine construction and flow-level ECMP.

use std::collections::BTreeMap;

use tailsim::sim::SimTime;
use tailsim::topology::{propagation_for_rtt, FlowKey, NodeId, Topology};

fn main() {
    let g10 = 10_000_000_000;
    let prop = propagation_for_rtt(SimTime::from_micros(80), 4, 40, g10);
    let mut topo = Topology::build_leaf_spine(8, 4, 10, g10, g10, prop).unwrap();
    topo.set_ecmp_seed(42);
    println!(
        "{} hosts, {} leaves, {} spines, oversubscription {}, link propagation {}",
        topo.n_hosts(),
        topo.n_leaf(),
        topo.n_spine(),
        topo.oversubscription(),
        prop
    );

    for (src, dst) in [(0, 1), (0, 79), (13, 42)] {
        let key = FlowKey { src: NodeId::host(src), dst: NodeId::host(dst), flow_id: 7 };
        let path: Vec<String> = topo.path(&key).unwrap().iter().map(|n| format!("{:?}{}", n.kind, n.index)).collect();
        println!("h{src} -> h{dst}: {} (unloaded RTT {})", path.join(" > "), topo.unloaded_rtt(&key, 40).unwrap());
    }

    let leaf = NodeId::leaf(0);
    let mut per_port: BTreeMap<u16, u32> = BTreeMap::new();
    for id in 0..10_000 {
        let key = FlowKey { src: NodeId::host(id % 10), dst: NodeId::host(10 + id % 70), flow_id: id as u64 };
        *per_port.entry(topo.ecmp_route(&key, leaf).unwrap().port).or_default() += 1;
    }
    println!("uplink share at leaf 0 over 10^4 flows: {per_port:?}");
}
