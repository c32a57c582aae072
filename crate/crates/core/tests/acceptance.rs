//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Directional criteria (1-9) are reported but only fail the process when
//! `TAILSIM_STRICT=1`; exact property criteria (10-15) always do.
//! `TAILSIM_SEEDS=1,2` overrides the seed list for quick runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tailsim::harness::{self, presets, ExecuteOptions, ExperimentConfig, RunResult};
use tailsim::sim::{fnv1a64, SimTime};
use tailsim::switch::{EnqueueOutcome, Packet, PortQueueSet, SchedulerMode};
use tailsim::telemetry::percentile;
use tailsim::topology::{FlowKey, NodeId};
use tailsim::transport::alpha_update;

const LOADS: [f64; 6] = [0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
const LOADS_TO_80: [f64; 5] = [0.4, 0.5, 0.6, 0.7, 0.8];
const DEGREES: [u32; 3] = [24, 32, 40];

struct Report {
    lines: Vec<(u32, bool, bool, String)>,
}

impl Report {
    fn record(&mut self, id: u32, exact: bool, pass: bool, text: String) {
        println!("[{}] {id:>2}. {text}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((id, exact, pass, text));
    }
}

fn seeds() -> Vec<u64> {
    std::env::var("TAILSIM_SEEDS")
        .ok()
        .map(|s| s.split(',').map(|v| v.trim().parse().expect("seed")).collect())
        .unwrap_or_else(|| vec![1, 2, 3, 4, 5])
}

fn preset(name: &str) -> ExperimentConfig {
    harness::parse_config(presets::preset(name).expect("preset")).expect("preset parses")
}

/// Key for cached results: (group, load, mode, extra).
type Key = (&'static str, u64, SchedulerMode, u64);

struct Runs {
    seeds: Vec<u64>,
    results: BTreeMap<Key, Vec<RunResult>>,
}

fn lkey(load: f64) -> u64 {
    (load * 1000.0).round() as u64
}

impl Runs {
    fn run(&mut self, key: Key, cfg: &ExperimentConfig) {
        let started = Instant::now();
        let rs: Vec<RunResult> = self.seeds.iter().map(|s| harness::run_point(cfg, *s).expect("run")).collect();
        eprintln!("  {:<10} load={:.1} {:<9} extra={:<4} {:>6.1?}", key.0, key.1 as f64 / 1000.0, key.2.name(), key.3, started.elapsed());
        self.results.insert(key, rs);
    }

    fn get(&self, key: Key) -> &[RunResult] {
        &self.results[&key]
    }

    /// Mean over seeds of a per-run metric.
    fn mean(&self, key: Key, metric: &str) -> f64 {
        let rs = self.get(key);
        rs.iter().map(|r| r.metric(metric)).sum::<f64>() / rs.len() as f64
    }

    fn all(&self) -> impl Iterator<Item = (&Key, &RunResult)> {
        self.results.iter().flat_map(|(k, rs)| rs.iter().map(move |r| (k, r)))
    }
}

fn fabric(load: f64, mode: SchedulerMode) -> ExperimentConfig {
    let mut cfg = preset("fig3");
    cfg.workload.load = load;
    cfg.switch.mode = mode;
    cfg
}

fn main() {
    let started = Instant::now();
    let mut report = Report { lines: Vec::new() };
    let mut runs = Runs { seeds: seeds(), results: BTreeMap::new() };
    eprintln!("seeds: {:?}", runs.seeds);

    for load in LOADS {
        for mode in [SchedulerMode::DctcpFifo, SchedulerMode::Slytherin, SchedulerMode::Pias] {
            runs.run(("grid", lkey(load), mode, 0), &fabric(load, mode));
        }
    }
    for degree in DEGREES {
        for mode in [SchedulerMode::Slytherin, SchedulerMode::Pias] {
            let mut cfg = preset("fig-incast");
            cfg.switch.mode = mode;
            cfg.workload.incast.as_mut().expect("incast preset").degree = degree;
            runs.run(("incast", lkey(cfg.workload.load), mode, degree as u64), &cfg);
        }
    }
    for frac in [0.125, 0.375] {
        let mut cfg = preset("fig7-threshold");
        cfg.workload.load = 0.8;
        cfg.switch.ecn_threshold_frac = frac;
        runs.run(("threshold", lkey(0.8), SchedulerMode::Slytherin, lkey(frac)), &cfg);
    }
    for mode in [SchedulerMode::DctcpFifo, SchedulerMode::Slytherin] {
        let mut cfg = preset("fig6-convergence");
        cfg.switch.mode = mode;
        runs.run(("converge", 0, mode, 0), &cfg);
    }

    let g = |load: f64, mode| ("grid", lkey(load), mode, 0u64);
    use SchedulerMode::{DctcpFifo as D, Pias as P, Slytherin as S};

    // 1. Opportunity trend under the FIFO baseline.
    let opp: Vec<f64> = LOADS.iter().map(|l| runs.mean(g(*l, D), "opportunity")).collect();
    let monotone = opp.windows(2).all(|w| w[1] >= w[0]);
    let pass = monotone && opp[0] < 0.10 && opp[4] > 0.25;
    report.record(
        1,
        false,
        pass,
        format!(
            "opportunity vs load {}: monotone={monotone}, 40%={:.3} (<0.10), 80%={:.3} (>0.25)",
            fmt_series(&opp),
            opp[0],
            opp[4]
        ),
    );

    // 2. Tail FCT.
    let reductions: Vec<f64> = LOADS_TO_80
        .iter()
        .map(|l| 1.0 - runs.mean(g(*l, S), "fct_short_p99_us") / runs.mean(g(*l, D), "fct_short_p99_us"))
        .collect();
    let mean_red = reductions.iter().sum::<f64>() / reductions.len() as f64;
    let beats_pias = LOADS_TO_80
        .iter()
        .filter(|l| runs.mean(g(**l, S), "fct_short_p99_us") <= runs.mean(g(**l, P), "fct_short_p99_us"))
        .count();
    report.record(
        2,
        false,
        mean_red >= 0.10 && beats_pias >= 4,
        format!(
            "p99 short FCT: mean reduction vs dctcp {:.1}% (>=10%), per load {}; <= pias at {beats_pias}/5 loads (>=4)",
            mean_red * 100.0,
            fmt_pct(&reductions)
        ),
    );

    // 3. Average FCT trade-off.
    let pias_wins = LOADS_TO_80
        .iter()
        .filter(|l| runs.mean(g(**l, P), "fct_short_mean_us") <= runs.mean(g(**l, S), "fct_short_mean_us"))
        .count();
    report.record(3, false, pias_wins >= 3, format!("pias mean short FCT <= slytherin at {pias_wins}/5 loads (>=3)"));

    // 4. Long-flow throughput.
    let gains: Vec<f64> = LOADS
        .iter()
        .map(|l| runs.mean(g(*l, S), "throughput_long_gbps") / runs.mean(g(*l, P), "throughput_long_gbps") - 1.0)
        .collect();
    let every = gains.iter().all(|x| *x >= 0.0);
    let avg = gains.iter().sum::<f64>() / gains.len() as f64;
    report.record(
        4,
        false,
        every && avg >= 0.10,
        format!(
            "long throughput slytherin vs pias per load {}: all >= 0: {every}, mean gain {:.1}% (>=10%)",
            fmt_pct(&gains),
            avg * 100.0
        ),
    );

    // 5. Queue length.
    let ratios: Vec<f64> = [0.4, 0.6]
        .iter()
        .map(|l| runs.mean(g(*l, S), "queue_p99_bytes") / runs.mean(g(*l, D), "queue_p99_bytes"))
        .collect();
    report.record(
        5,
        false,
        ratios.iter().all(|r| *r <= 0.7),
        format!("p99 queue slytherin/dctcp at 40% {:.3}, 60% {:.3} (<=0.7)", ratios[0], ratios[1]),
    );

    // 6. Convergence.
    let cd = runs.mean(("converge", 0, D, 0), "convergence_rtts");
    let cs = runs.mean(("converge", 0, S, 0), "convergence_rtts");
    report.record(
        6,
        false,
        cs < cd && (4.0..=8.0).contains(&cd),
        format!("convergence RTTs dctcp {cd} (6+-2), slytherin {cs} (< dctcp)"),
    );

    // 7. Incast.
    let inc_load = lkey(preset("fig-incast").workload.load);
    let inc: Vec<f64> = DEGREES
        .iter()
        .map(|d| {
            1.0 - runs.mean(("incast", inc_load, S, *d as u64), "fct_short_p99_us")
                / runs.mean(("incast", inc_load, P, *d as u64), "fct_short_p99_us")
        })
        .collect();
    let inc_avg = inc.iter().sum::<f64>() / inc.len() as f64;
    report.record(
        7,
        false,
        inc.iter().all(|x| *x >= 0.0) && inc_avg >= 0.10,
        format!("incast p99 reduction vs pias at degrees 24/32/40 {}, mean {:.1}% (>=10%)", fmt_pct(&inc), inc_avg * 100.0),
    );

    // 8. Threshold sensitivity at 80% load.
    let k = |frac: f64| if frac == 0.25 { g(0.8, S) } else { ("threshold", lkey(0.8), S, lkey(frac)) };
    let p99_lo = runs.mean(k(0.125), "fct_short_p99_us");
    let p99_mid = runs.mean(k(0.25), "fct_short_p99_us");
    let tp_mid = runs.mean(k(0.25), "throughput_long_gbps");
    let tp_hi = runs.mean(k(0.375), "throughput_long_gbps");
    report.record(
        8,
        false,
        p99_lo > p99_mid && tp_hi < tp_mid,
        format!(
            "80% load: p99 K=12.5% {p99_lo:.1} us vs K=25% {p99_mid:.1} us (greater); throughput K=37.5% {tp_hi:.3} vs K=25% {tp_mid:.3} Gb/s (lower)"
        ),
    );

    // 9. Reordering.
    let sly: Vec<f64> = LOADS.iter().map(|l| runs.mean(g(*l, S), "reordering")).collect();
    let sly_mean = sly.iter().sum::<f64>() / sly.len() as f64;
    let ratio: Vec<f64> = LOADS.iter().map(|l| runs.mean(g(*l, P), "reordering") / runs.mean(g(*l, S), "reordering")).collect();
    let high_ok = ratio[2..].iter().all(|r| *r > 1.0);
    report.record(
        9,
        false,
        sly_mean <= 0.02 && high_ok,
        format!(
            "slytherin reordering mean {:.2}% (<=2%); pias/slytherin ratio per load {} (>1 from 60%)",
            sly_mean * 100.0,
            fmt_series(&ratio)
        ),
    );

    // 10. Determinism through the CSV writer.
    let digests = determinism_digests();
    report.record(
        10,
        true,
        digests.windows(2).all(|w| w[0] == w[1]),
        format!("3 repeated runs, CSV digests {}", digests.iter().map(|d| format!("{d:016x}")).collect::<Vec<_>>().join(" ")),
    );

    // 11. Strict priority and per-queue FIFO.
    let (checked, problems) = dequeue_trace_invariants(100_000);
    report.record(11, true, problems.is_empty(), format!("{checked} dequeues over all modes, violations: {problems:?}"));

    // 12. Conservation and drain.
    let leaky = runs.all().filter(|(_, r)| !r.output.conservation_holds()).count();
    let fabric_runs: Vec<&RunResult> = runs.all().filter(|(k, _)| k.0 != "converge").map(|(_, r)| r).collect();
    let undrained = fabric_runs.iter().filter(|r| !r.output.all_complete()).count();
    report.record(
        12,
        true,
        leaky == 0 && undrained == 0,
        format!(
            "{} runs: conservation failures {leaky}; {} fabric runs, unfinished flows after drain in {undrained}",
            runs.all().count(),
            fabric_runs.len()
        ),
    );

    // 13. Percentile oracle, alpha table, alpha range in every run.
    let pct_bad = percentile_oracle(1000);
    let alpha_bad = alpha_table();
    let alpha_out = runs.all().filter(|(_, r)| !r.output.alpha_in_range).count();
    report.record(
        13,
        true,
        pct_bad == 0 && alpha_bad == 0 && alpha_out == 0,
        format!("percentile mismatches {pct_bad}/1000, alpha table mismatches {alpha_bad}/20, runs with alpha outside [0,1] {alpha_out}"),
    );

    // 14. First-hop neutrality.
    let sly_runs: Vec<&RunResult> = runs.all().filter(|(k, _)| k.2 == S).map(|(_, r)| r).collect();
    let first_hop: u64 = sly_runs.iter().map(|r| r.output.violations.first_hop_priority).sum();
    let soundness: u64 = runs.all().map(|(_, r)| r.output.violations.mark_soundness + r.output.violations.hop_limit).sum();
    report.record(
        14,
        true,
        first_hop == 0 && soundness == 0,
        format!(
            "{} slytherin runs: data packets in queue 0 at first hop {first_hop}; mark-log or hop-limit violations {soundness}",
            sly_runs.len()
        ),
    );

    // 15. FIFO fabric preserves order without drops.
    let (drops, reordered, data) = fifo_no_drop_run();
    report.record(
        15,
        true,
        drops == 0 && reordered == 0 && data > 0,
        format!("dctcp fifo with 10 MB buffers: drops {drops}, reordered {reordered} of {data} data packets"),
    );

    let passed = report.lines.iter().filter(|l| l.2).count();
    println!("{passed}/15 criteria passed in {:.0?}", started.elapsed());
    write_report(&report);

    let strict = std::env::var("TAILSIM_STRICT").is_ok_and(|v| v == "1");
    let fatal = report.lines.iter().any(|(_, exact, pass, _)| !pass && (*exact || strict));
    if fatal {
        std::process::exit(1);
    }
}

fn fmt_series(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", "))
}

fn fmt_pct(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| format!("{:.1}%", x * 100.0)).collect::<Vec<_>>().join(", "))
}

fn write_report(report: &Report) {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR"));
    let mut csv = String::from("criterion,kind,result,detail\n");
    for (id, exact, pass, text) in &report.lines {
        csv.push_str(&format!(
            "{id},{},{},\"{}\"\n",
            if *exact { "property" } else { "directional" },
            if *pass { "pass" } else { "fail" },
            text.replace('"', "'")
        ));
    }
    let _ = fs::write(dir.join("acceptance.csv"), csv);
}

/// Digest of every CSV byte written by three identical runs.
fn determinism_digests() -> Vec<u64> {
    let mut cfg = preset("smoke");
    cfg.seeds = vec![7];
    (0..3)
        .map(|_| {
            let dir = tempfile::tempdir().expect("tempdir");
            harness::execute(&cfg, dir.path(), &ExecuteOptions { jobs: 1, sweep: true }).expect("sweep");
            let mut files: Vec<_> = walk(dir.path());
            files.sort();
            let mut bytes = Vec::new();
            for f in files {
                bytes.extend(f.strip_prefix(dir.path()).unwrap().to_string_lossy().as_bytes());
                bytes.extend(fs::read(&f).expect("read"));
            }
            fnv1a64(&bytes)
        })
        .collect()
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).expect("dir").flatten() {
        let p = e.path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

/// Randomized enqueue/dequeue trace; returns (dequeues checked, problems).
fn dequeue_trace_invariants(n: usize) -> (usize, Vec<String>) {
    let mut problems = Vec::new();
    let mut checked = 0;
    let modes = [
        (SchedulerMode::DctcpFifo, 2),
        (SchedulerMode::Slytherin, 2),
        (SchedulerMode::Pias, 4),
        (SchedulerMode::SjfIdeal, 8),
    ];
    for (i, (mode, nq)) in modes.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed + i as u64);
        let cap = 150_000;
        let k = 37_500;
        let mut port = PortQueueSet::switch_port(mode, nq, cap, k).expect("port");
        let mut enq_order: Vec<Vec<u64>> = vec![Vec::new(); nq];
        let mut deq_order: Vec<Vec<u64>> = vec![Vec::new(); nq];
        let mut occupancy = 0u64;
        let mut id = 0u64;
        let per_mode = n / modes.len();
        while checked < per_mode * (i + 1) {
            if rng.random_bool(0.55) {
                let size = rng.random_range(64..=1500u32);
                let key = FlowKey { src: NodeId::host(0), dst: NodeId::host(1), flow_id: rng.random_range(0..50) };
                let mut p = Packet::data(key, id, size.saturating_sub(40), 40, SimTime::ZERO);
                p.size = size;
                p.is_ack = rng.random_bool(0.2);
                p.ce = rng.random_bool(0.1);
                p.priority = Some(rng.random_range(0..4));
                p.flow_size = Some(rng.random_range(1_000..4_000_000));
                let was_ce = p.ce;
                match port.enqueue(p).expect("stamped") {
                    EnqueueOutcome::Accepted { queue, marked } => {
                        if occupancy + size as u64 > cap {
                            problems.push(format!("{mode}: accepted past capacity"));
                        }
                        if marked != (occupancy >= k) && !was_ce {
                            problems.push(format!("{mode}: marking disagrees with occupancy {occupancy}"));
                        }
                        occupancy += size as u64;
                        enq_order[queue].push(id);
                    }
                    EnqueueOutcome::Dropped(_) => {
                        if occupancy + size as u64 <= cap {
                            problems.push(format!("{mode}: dropped with room"));
                        }
                    }
                }
                id += 1;
            } else {
                let lens: Vec<usize> = (0..nq).map(|q| port.queue_len(q)).collect();
                if let Some((q, p)) = port.dequeue_with_queue() {
                    checked += 1;
                    if lens[..q].iter().any(|l| *l > 0) {
                        problems.push(format!("{mode}: served queue {q} while a higher queue was backlogged"));
                    }
                    occupancy -= p.size as u64;
                    deq_order[q].push(p.seq);
                }
            }
            if port.occupancy() != occupancy {
                problems.push(format!("{mode}: occupancy drift"));
            }
            if problems.len() > 10 {
                return (checked, problems);
            }
        }
        for q in 0..nq {
            if enq_order[q][..deq_order[q].len()] != deq_order[q][..] {
                problems.push(format!("{mode}: queue {q} not FIFO"));
            }
        }
    }
    (checked, problems)
}

fn percentile_oracle(sets: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut bad = 0;
    for _ in 0..sets {
        let n = rng.random_range(1..400);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let p: f64 = rng.random_range(0.01..=100.0);
        let mut sorted = v.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = ((p / 100.0) * n as f64).ceil().max(1.0) as usize;
        if percentile(&v, p).expect("nonempty") != sorted[rank - 1] {
            bad += 1;
        }
    }
    bad
}

/// (alpha, F, g) cases checked against (1-g)*alpha + g*F worked by hand.
fn alpha_table() -> usize {
    let cases: [(f64, f64, f64, f64); 20] = [
        (0.5, 0.0, 0.0625, 0.46875),
        (0.0, 1.0, 0.0625, 0.0625),
        (1.0, 1.0, 0.0625, 1.0),
        (1.0, 0.0, 0.0625, 0.9375),
        (0.0, 0.0, 0.0625, 0.0),
        (0.25, 0.5, 0.0625, 0.265625),
        (0.75, 0.25, 0.0625, 0.71875),
        (0.5, 1.0, 0.0625, 0.53125),
        (0.5, 0.5, 0.0625, 0.5),
        (0.125, 0.0, 0.0625, 0.1171875),
        (0.5, 0.0, 0.5, 0.25),
        (0.5, 1.0, 0.5, 0.75),
        (0.0, 1.0, 1.0, 1.0),
        (1.0, 0.0, 1.0, 0.0),
        (0.3, 0.7, 0.0, 0.3),
        (0.2, 0.6, 0.25, 0.3),
        (0.8, 0.4, 0.25, 0.7),
        (0.0, 0.5, 0.125, 0.0625),
        (0.9, 0.1, 0.125, 0.8),
        (0.6, 0.2, 0.03125, 0.5875),
    ];
    cases
        .iter()
        .filter(|(a, f, g, want)| (alpha_update(*a, *f, *g) - want).abs() > 1e-12)
        .count()
}

/// Small fabric at moderate load with buffers far larger than any window.
fn fifo_no_drop_run() -> (u64, u64, u64) {
    let mut cfg = preset("fig3");
    cfg.switch.mode = SchedulerMode::DctcpFifo;
    cfg.switch.capacity_bytes = 10_000_000;
    cfg.workload.load = 0.6;
    cfg.workload.duration = SimTime::from_millis(20);
    let r = harness::run_point(&cfg, 3).expect("run");
    (r.output.drops, r.output.reordered_packets, r.output.data_packets)
}
