//! Per-RTT goodput of a long flow after 20 competitors join on a dumbbell.

use tailsim::harness::{presets, parse_config, run_point};
use tailsim::SchedulerMode;

fn main() {
    let mut cfg = parse_config(presets::preset("fig6-convergence").unwrap()).unwrap();
    for mode in [SchedulerMode::DctcpFifo, SchedulerMode::Slytherin] {
        cfg.switch.mode = mode;
        let r = run_point(&cfg, 1).unwrap();
        let series: Vec<String> = r.throughput_series_bps.iter().map(|b| format!("{:.2}", b / 1e9)).collect();
        println!(
            "{:<10} fair share {:.3} Gb/s, converged after {} RTTs, drops {}",
            mode.name(),
            r.metric("fair_share_gbps"),
            r.metric("convergence_rtts"),
            r.metric("drops")
        );
        println!("  per-RTT Gb/s: {}", series.join(" "));
    }
}
