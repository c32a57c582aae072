//! ECN threshold as a fraction of the port buffer.

use tailsim::harness::{presets, parse_config, run_point};

fn main() {
    let mut cfg = parse_config(presets::preset("fig7-threshold").unwrap()).unwrap();
    cfg.workload.duration = tailsim::SimTime::from_millis(20);
    println!("{:>5} {:>6} {:>8} {:>10} {:>10} {:>7}", "load", "K", "K_bytes", "p99_us", "long_gbps", "drops");
    for load in [0.4, 0.8] {
        for frac in [0.125, 0.25, 0.375] {
            cfg.workload.load = load;
            cfg.switch.ecn_threshold_frac = frac;
            let r = run_point(&cfg, 1).unwrap();
            println!(
                "{load:>5} {frac:>6} {:>8} {:>10.1} {:>10.3} {:>7}",
                cfg.switch.ecn_threshold_bytes(),
                r.metric("fct_short_p99_us"),
                r.metric("throughput_long_gbps"),
                r.metric("drops")
            );
        }
    }
}
