//! All four schedulers on the same workload and seeds.
//!
//! `cargo run --release --example scheduler_comparison -- [load]`

use tailsim::harness::{parse_config, run_point};
use tailsim::SchedulerMode;

fn main() {
    let load: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.6);
    println!("{:<10} {:>12} {:>12} {:>12} {:>12} {:>8}", "mode", "mean_us", "p99_us", "long_gbps", "q99_bytes", "drops");
    for mode in [SchedulerMode::DctcpFifo, SchedulerMode::Slytherin, SchedulerMode::Pias, SchedulerMode::SjfIdeal] {
        let text = format!(
            "[topology]\n[workload]\nload = {load}\nload_basis = fabric\nduration_ms = 20\n[switch]\nmode = {mode}\n"
        );
        let cfg = parse_config(&text).unwrap();
        let runs: Vec<_> = [1, 2].iter().map(|s| run_point(&cfg, *s).unwrap()).collect();
        let avg = |m: &str| runs.iter().map(|r| r.metric(m)).sum::<f64>() / runs.len() as f64;
        println!(
            "{:<10} {:>12.1} {:>12.1} {:>12.3} {:>12.0} {:>8.0}",
            mode.name(),
            avg("fct_short_mean_us"),
            avg("fct_short_p99_us"),
            avg("throughput_long_gbps"),
            avg("queue_p99_bytes"),
            avg("drops")
        );
    }
}
