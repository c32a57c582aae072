//! Out-of-order data arrivals caused by priority queueing.

use tailsim::harness::{parse_config, run_point};
use tailsim::SchedulerMode;

fn main() {
    println!("{:>5} {:<10} {:>11} {:>11} {:>10}", "load", "mode", "reordered", "of_packets", "fraction");
    for load in [0.4, 0.6, 0.8] {
        for mode in [SchedulerMode::DctcpFifo, SchedulerMode::Slytherin, SchedulerMode::Pias] {
            let text = format!(
                "[topology]\n[workload]\nload = {load}\nload_basis = fabric\nduration_ms = 20\n[switch]\nmode = {mode}\n"
            );
            let r = run_point(&parse_config(&text).unwrap(), 1).unwrap();
            println!(
                "{load:>5} {:<10} {:>11} {:>11} {:>10.5}",
                mode.name(),
                r.output.reordered_packets,
                r.output.data_packets,
                r.metric("reordering")
            );
        }
    }
}
