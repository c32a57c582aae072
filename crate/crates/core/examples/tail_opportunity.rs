//! How often packets of the slowest flows were ECN-marked at two or more
//! switches, across load, on the FIFO baseline.

use tailsim::harness::{presets, parse_config, run_point};
use tailsim::telemetry::OpportunityGranularity;

fn main() {
    let mut cfg = parse_config(presets::preset("table1").unwrap()).unwrap();
    cfg.workload.duration = tailsim::SimTime::from_millis(20);
    println!("{:>5} {:>12} {:>12} {:>14}", "load", "per_packet", "per_flow", "tail_packets");
    for load in [0.4, 0.5, 0.6, 0.7, 0.8, 0.9] {
        cfg.workload.load = load;
        cfg.opportunity = OpportunityGranularity::Packet;
        let packet = run_point(&cfg, 1).unwrap();
        cfg.opportunity = OpportunityGranularity::Flow;
        let flow = run_point(&cfg, 1).unwrap();
        println!(
            "{load:>5} {:>12.4} {:>12.4} {:>14}",
            packet.metric("opportunity"),
            flow.metric("opportunity"),
            packet.metric("opportunity_tail_packets")
        );
    }
}
