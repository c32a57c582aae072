//! Runs a preset sweep twice under different schedulers and writes the
//! ratio table between them.

use std::path::PathBuf;

use tailsim::harness::{compare, execute, parse_config, presets, ExecuteOptions};
use tailsim::SchedulerMode;

fn main() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = parse_config(presets::preset("smoke").unwrap()).unwrap();
    cfg.sweep.mode.clear();
    let mut dirs: Vec<PathBuf> = Vec::new();
    for mode in [SchedulerMode::DctcpFifo, SchedulerMode::Slytherin] {
        cfg.switch.mode = mode;
        let dir = root.path().join(mode.name());
        let outcome = execute(&cfg, &dir, &ExecuteOptions { jobs: 2, sweep: true }).unwrap();
        println!("{}: {} runs in {}", mode.name(), outcome.rows.len(), dir.display());
        dirs.push(dir);
    }
    let table = compare(&dirs).unwrap();
    for load in ["0.3", "0.6"] {
        for metric in ["fct_short_p99_us", "fct_short_mean_us", "reordering"] {
            let row = table.find(&[load], metric).unwrap();
            println!("load {load} {metric:<18} dctcp {:>10.3} slytherin {:>10.3} ratio {:.3}", row.base, row.value, row.ratio());
        }
    }
}
