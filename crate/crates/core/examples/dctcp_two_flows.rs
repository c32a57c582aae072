//! Two long DCTCP flows into one receiver behind a single switch.
//!
//! Prints drops, marks and the queue tail for simultaneous and staggered starts.

use tailsim::sim::SimTime;
use tailsim::topology::{propagation_for_rtt, FlowKey, NodeId, Topology};
use tailsim::workload::{Flow, FlowClass};
use tailsim::{Network, NetworkConfig, SchedulerMode};

const G10: u64 = 10_000_000_000;

fn run(offset: SimTime, mode: SchedulerMode) {
    let prop = propagation_for_rtt(SimTime::from_micros(80), 2, 40, G10);
    let topo = Topology::build_leaf_spine(1, 1, 3, G10, G10, prop).expect("topology");
    let flow = |i: u64, at: SimTime| Flow {
        key: FlowKey { src: NodeId::host(i as u32), dst: NodeId::host(2), flow_id: i },
        size: 10_000_000,
        arrive_at: at,
        completed_at: None,
        class: FlowClass::Long,
    };
    let flows = vec![flow(0, SimTime::ZERO), flow(1, offset)];
    let cfg = NetworkConfig { mode, ..NetworkConfig::default() };
    let mut net = Network::new(topo, cfg, flows).expect("network");
    net.run_until(SimTime::from_millis(100));
    let out = net.finish();
    let q = out.queue_hist.cdf().expect("samples");
    println!(
        "{mode:<10} offset={:>8} drops={:<4} marks={:<6} timeouts={} q50={} q99={} done={}",
        offset.to_string(),
        out.drops,
        out.marks,
        out.timeouts,
        q.percentile(50.0).unwrap_or(0),
        q.percentile(99.0).unwrap_or(0),
        out.fcts.len()
    );
}

fn main() {
    for mode in [SchedulerMode::DctcpFifo, SchedulerMode::Slytherin] {
        for us in [0, 500, 5_000] {
            run(SimTime::from_micros(us), mode);
        }
    }
}
