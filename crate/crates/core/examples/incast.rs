//! Synchronized fan-in bursts on top of background traffic.

use tailsim::harness::{presets, parse_config, run_point};
use tailsim::SchedulerMode;

fn main() {
    let mut cfg = parse_config(presets::preset("fig-incast").unwrap()).unwrap();
    cfg.workload.duration = tailsim::SimTime::from_millis(20);
    println!("{:>6} {:<10} {:>10} {:>10} {:>7} {:>8}", "degree", "mode", "mean_us", "p99_us", "drops", "timeouts");
    for degree in [24, 32, 40] {
        for mode in [SchedulerMode::DctcpFifo, SchedulerMode::Slytherin, SchedulerMode::Pias] {
            cfg.switch.mode = mode;
            cfg.workload.incast.as_mut().unwrap().degree = degree;
            let r = run_point(&cfg, 1).unwrap();
            println!(
                "{degree:>6} {:<10} {:>10.1} {:>10.1} {:>7} {:>8}",
                mode.name(),
                r.metric("fct_short_mean_us"),
                r.metric("fct_short_p99_us"),
                r.metric("drops"),
                r.metric("timeouts")
            );
        }
    }
}
