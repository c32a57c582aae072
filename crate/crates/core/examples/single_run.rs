//! One seeded run of a small fabric, printing the headline metrics.
//!
//! `cargo run --release --example single_run -- [mode] [load] [seed] [hosts|fabric]`

use std::time::Instant;

use tailsim::harness::{parse_config, run_point, METRICS};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = args.first().map_or("slytherin", String::as_str);
    let load = args.get(1).map_or("0.6", String::as_str);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let basis = args.get(3).map_or("fabric", String::as_str);
    let text = format!("[topology]\n[workload]\nload = {load}\nload_basis = {basis}\n[switch]\nmode = {mode}\n");
    let cfg = parse_config(&text).expect("valid config");

    let started = Instant::now();
    let r = run_point(&cfg, seed).expect("run");
    println!("mode={mode} load={load} seed={seed} wall={:.2?}", started.elapsed());
    for m in METRICS {
        println!("  {m:<26} {:.4}", r.metric(m));
    }
    println!("  conservation               {}", r.output.conservation_holds());
    println!("  drop sites                 {:?}", r.output.drop_sites);
    println!("  violations                 {:?}", r.output.violations);
}
