//! Holding-time weighted CDF of switch queue occupancy.

use tailsim::harness::{parse_config, run_point};
use tailsim::SchedulerMode;

fn main() {
    let grid = [0, 1_500, 15_000, 37_500, 75_000, 112_500, 150_000];
    print!("{:<10}", "mode");
    for g in grid {
        print!(" {:>9}", format!("<={g}"));
    }
    println!(" {:>9}", "p99");
    for mode in [SchedulerMode::DctcpFifo, SchedulerMode::Slytherin, SchedulerMode::Pias] {
        let text = format!("[topology]\n[workload]\nload = 0.6\nload_basis = fabric\nduration_ms = 20\n[switch]\nmode = {mode}\n");
        let r = run_point(&parse_config(&text).unwrap(), 1).unwrap();
        let cdf = r.queue_cdf.expect("switch ports were observed");
        print!("{:<10}", mode.name());
        for g in grid {
            print!(" {:>9.5}", cdf.at(g));
        }
        println!(" {:>9}", cdf.percentile(99.0).unwrap());
    }
}
