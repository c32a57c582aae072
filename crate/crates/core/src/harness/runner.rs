use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ExperimentConfig, Scenario};
use super::HarnessError;
use crate::engine::{Network, NetworkConfig, RunOutput};
use crate::sim::SimTime;
use crate::switch::SchedulerMode;
use crate::telemetry::{self, FlowMarkTally, QueueCdf};
use crate::topology::{propagation_for_rtt, FlowKey, NodeId, Topology};
use crate::workload::{generate_schedule, Flow, FlowClass};

/// Metric columns in output order; units are in the names.
pub const METRICS: [&str; 19] = [
    "flows",
    "completed",
    "fct_short_mean_us",
    "fct_short_p50_us",
    "fct_short_p99_us",
    "fct_long_mean_us",
    "throughput_long_gbps",
    "queue_p99_bytes",
    "opportunity",
    "opportunity_tail_packets",
    "reordering",
    "drops",
    "marks",
    "timeouts",
    "fast_retransmits",
    "convergence_rtts",
    "fair_share_gbps",
    "events",
    "end_us",
];

/// One sweep point: axis assignments plus the config they produce.
#[derive(Debug, Clone)]
pub struct RunPoint {
    pub axes: Vec<(&'static str, String)>,
    pub config: ExperimentConfig,
}

impl RunPoint {
    pub fn label(&self) -> String {
        if self.axes.is_empty() {
            return "base".into();
        }
        self.axes.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("_")
    }
}

/// Cartesian product of the sweep axes (or just the base point).
pub fn expand(cfg: &ExperimentConfig, sweep: bool) -> Vec<RunPoint> {
    let mut points = vec![RunPoint { axes: Vec::new(), config: cfg.clone() }];
    if !sweep {
        return points;
    }
    let s = &cfg.sweep;
    if !s.load.is_empty() {
        points = cross(points, &s.load, |c, v| c.workload.load = *v, |v| fmt_f(*v), "load");
    }
    if !s.mode.is_empty() {
        points = cross(points, &s.mode, |c, v| c.switch.mode = *v, |v| v.to_string(), "mode");
    }
    if !s.incast_degree.is_empty() {
        points = cross(
            points,
            &s.incast_degree,
            |c, v| {
                let mut ic = c.workload.incast.clone().unwrap_or(crate::workload::IncastConfig {
                    degree: *v,
                    period: SimTime::from_millis(1),
                    response_size: None,
                });
                ic.degree = *v;
                c.workload.incast = Some(ic);
            },
            |v| v.to_string(),
            "incast_degree",
        );
    }
    if !s.ecn_threshold_frac.is_empty() {
        points = cross(
            points,
            &s.ecn_threshold_frac,
            |c, v| c.switch.ecn_threshold_frac = *v,
            |v| fmt_f(*v),
            "ecn_threshold_frac",
        );
    }
    points
}

fn cross<T>(
    points: Vec<RunPoint>,
    values: &[T],
    apply: impl Fn(&mut ExperimentConfig, &T),
    show: impl Fn(&T) -> String,
    name: &'static str,
) -> Vec<RunPoint> {
    let mut out = Vec::with_capacity(points.len() * values.len());
    for p in points {
        for v in values {
            let mut q = p.clone();
            apply(&mut q.config, v);
            q.axes.push((name, show(v)));
            out.push(q);
        }
    }
    out
}

pub(crate) fn fmt_f(v: f64) -> String {
    let s = format!("{v}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

/// Metrics and tables from one seeded run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub metrics: BTreeMap<&'static str, f64>,
    pub fcts: Vec<telemetry::FctSample>,
    pub queue_cdf: Option<QueueCdf>,
    /// Per-interval goodput of the watched flow (convergence scenario).
    pub throughput_series_bps: Vec<f64>,
    pub digest: u64,
    pub output: RunOutput,
}

impl RunResult {
    pub fn metric(&self, name: &str) -> f64 {
        self.metrics.get(name).copied().unwrap_or(f64::NAN)
    }
}

pub fn network_config(cfg: &ExperimentConfig) -> NetworkConfig {
    NetworkConfig {
        mode: cfg.switch.mode,
        capacity_bytes: cfg.switch.capacity_bytes,
        ecn_threshold_bytes: cfg.switch.ecn_threshold_bytes(),
        pias_thresholds: cfg.switch.pias_thresholds.clone(),
        sjf_queues: cfg.switch.sjf_queues,
        transport: cfg.transport.clone(),
        ..NetworkConfig::default()
    }
}

pub fn build_fabric(cfg: &ExperimentConfig, seed: u64) -> Result<Topology, HarnessError> {
    let t = &cfg.topology;
    let prop = propagation_for_rtt(t.rtt, 4, cfg.transport.ack_bytes as u64, t.host_rate_bps);
    let mut topo = Topology::build_leaf_spine(t.n_leaf, t.n_spine, t.hosts_per_leaf, t.host_rate_bps, t.uplink_rate_bps, prop)?;
    topo.set_ecmp_seed(seed);
    Ok(topo)
}

/// Executes one seeded run of `cfg`.
pub fn run_point(cfg: &ExperimentConfig, seed: u64) -> Result<RunResult, HarnessError> {
    match cfg.scenario {
        Scenario::Fabric => run_fabric(cfg, seed),
        Scenario::Convergence => run_convergence(cfg, seed),
    }
}

fn run_fabric(cfg: &ExperimentConfig, seed: u64) -> Result<RunResult, HarnessError> {
    let topo = build_fabric(cfg, seed)?;
    let flows = generate_schedule(&cfg.workload, &topo, seed)?;
    let mut net = Network::new(topo, network_config(cfg), flows)?;
    net.run_until(cfg.workload.duration + cfg.drain_limit);
    let out = net.finish();
    Ok(summarize(cfg, seed, out, None))
}

fn run_convergence(cfg: &ExperimentConfig, seed: u64) -> Result<RunResult, HarnessError> {
    let t = &cfg.topology;
    let c = &cfg.convergence;
    let prop = propagation_for_rtt(t.rtt, 3, cfg.transport.ack_bytes as u64, t.host_rate_bps);
    let topo = Topology::build_dumbbell(2, t.host_rate_bps, t.uplink_rate_bps, prop)?;
    let start = SimTime::from_nanos(t.rtt.as_nanos() * c.start_after_rtts as u64);
    let end = start + SimTime::from_nanos(t.rtt.as_nanos() * c.measure_rtts as u64);
    // Large enough to outlast the measurement window.
    let size = (t.uplink_rate_bps / 8).max(1) * 10;
    let mut flows = vec![Flow {
        key: FlowKey { src: NodeId::host(0), dst: NodeId::host(2), flow_id: 0 },
        size,
        arrive_at: SimTime::ZERO,
        completed_at: None,
        class: FlowClass::Long,
    }];
    for i in 0..c.competitors {
        flows.push(Flow {
            key: FlowKey { src: NodeId::host(1), dst: NodeId::host(3), flow_id: 1 + i as u64 },
            size,
            arrive_at: start,
            completed_at: None,
            class: FlowClass::Long,
        });
    }
    let ncfg = NetworkConfig {
        sample_interval: Some(t.rtt),
        watched_flows: vec![0],
        sample_until: end,
        ..network_config(cfg)
    };
    let mut net = Network::new(topo, ncfg, flows)?;
    net.run_until(end);
    let out = net.finish();
    // Sample k is taken at (k+1) * rtt; deltas after `start` give per-RTT goodput.
    let acked = &out.series[0];
    let first = c.start_after_rtts as usize;
    let series: Vec<f64> = (first..acked.len())
        .map(|k| {
            let prev = if k == 0 { 0 } else { acked[k - 1] };
            (acked[k] - prev) as f64 * 8.0 / t.rtt.as_secs_f64()
        })
        .collect();
    let _ = seed;
    Ok(summarize(cfg, seed, out, Some(series)))
}

fn summarize(cfg: &ExperimentConfig, seed: u64, out: RunOutput, series: Option<Vec<f64>>) -> RunResult {
    let mut m: BTreeMap<&'static str, f64> = BTreeMap::new();
    let fcts = out.fcts.clone();
    let us = |s: &telemetry::FctSample| s.fct.as_nanos() as f64 / 1e3;
    let short: Vec<f64> = fcts.iter().filter(|s| s.class.is_short()).map(us).collect();
    let long: Vec<f64> = fcts.iter().filter(|s| s.class == FlowClass::Long).map(us).collect();
    m.insert("flows", out.flows.len() as f64);
    m.insert("completed", fcts.len() as f64);
    m.insert("fct_short_mean_us", telemetry::mean(&short).unwrap_or(f64::NAN));
    m.insert("fct_short_p50_us", telemetry::percentile(&short, 50.0).unwrap_or(f64::NAN));
    m.insert("fct_short_p99_us", telemetry::percentile(&short, 99.0).unwrap_or(f64::NAN));
    m.insert("fct_long_mean_us", telemetry::mean(&long).unwrap_or(f64::NAN));
    m.insert(
        "throughput_long_gbps",
        telemetry::long_flow_throughput(&fcts).map_or(f64::NAN, |b| b / 1e9),
    );
    let queue_cdf = out.queue_hist.cdf().ok();
    m.insert(
        "queue_p99_bytes",
        queue_cdf.as_ref().and_then(|c| c.percentile(99.0).ok()).map_or(f64::NAN, |v| v as f64),
    );
    let tallies: HashMap<u64, FlowMarkTally> = out
        .tallies
        .iter()
        .enumerate()
        .map(|(i, t)| (i as u64, *t))
        .collect();
    match telemetry::opportunity_from_tallies(&tallies, &fcts, cfg.opportunity) {
        Ok(o) => {
            m.insert("opportunity", o.fraction);
            m.insert("opportunity_tail_packets", o.tail_packets as f64);
        }
        Err(_) => {
            m.insert("opportunity", f64::NAN);
            m.insert("opportunity_tail_packets", 0.0);
        }
    }
    m.insert("reordering", telemetry::reordering_fraction(out.reordered_packets, out.data_packets));
    m.insert("drops", out.drops as f64);
    m.insert("marks", out.marks as f64);
    m.insert("timeouts", out.timeouts as f64);
    m.insert("fast_retransmits", out.fast_retransmits as f64);
    let series = series.unwrap_or_default();
    if cfg.scenario == Scenario::Convergence {
        let t = &cfg.topology;
        let goodput = cfg.transport.mss as f64 / (cfg.transport.mss + cfg.transport.header_bytes) as f64;
        let fair = t.uplink_rate_bps as f64 * goodput / (cfg.convergence.competitors as f64 + 1.0);
        let c = telemetry::convergence_time(&series, fair, cfg.convergence.tolerance, cfg.convergence.hold_rtts);
        m.insert("convergence_rtts", c.map_or(f64::INFINITY, |v| v as f64));
        m.insert("fair_share_gbps", fair / 1e9);
    } else {
        m.insert("convergence_rtts", f64::NAN);
        m.insert("fair_share_gbps", f64::NAN);
    }
    m.insert("events", out.events as f64);
    m.insert("end_us", out.end.as_nanos() as f64 / 1e3);
    RunResult {
        seed,
        metrics: m,
        fcts,
        queue_cdf,
        throughput_series_bps: series,
        digest: out.digest,
        output: out,
    }
}

fn metric_cell(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else if v.is_infinite() {
        "inf".into()
    } else if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.6}")
    }
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

fn mkdir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

/// Writes one run's tables into `dir`.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, point: &RunPoint, r: &RunResult) -> Result<(), HarnessError> {
    mkdir(dir)?;
    let mut metrics = String::from("metric,value\n");
    for name in METRICS {
        metrics.push_str(&format!("{name},{}\n", metric_cell(r.metric(name))));
    }
    write(&dir.join("metrics.csv"), &metrics)?;

    let mut fct = String::from("flow_id,class,size_bytes,fct_us\n");
    for s in &r.fcts {
        fct.push_str(&format!("{},{},{},{:.3}\n", s.key.flow_id, s.class, s.size, s.fct.as_nanos() as f64 / 1e3));
    }
    write(&dir.join("fct.csv"), &fct)?;

    if let Some(c) = &r.queue_cdf {
        write(&dir.join("queue_cdf.csv"), &c.to_csv())?;
    }
    if !r.throughput_series_bps.is_empty() {
        let mut s = String::from("rtt_index,throughput_gbps\n");
        for (i, v) in r.throughput_series_bps.iter().enumerate() {
            s.push_str(&format!("{i},{:.6}\n", v / 1e9));
        }
        write(&dir.join("throughput_per_rtt.csv"), &s)?;
    }
    let mut manifest = manifest_header(cfg);
    for (k, v) in &point.axes {
        manifest.push_str(&format!("axis.{k} = {v}\n"));
    }
    manifest.push_str(&format!("seed = {}\ntrace_digest = {:016x}\n", r.seed, r.digest));
    write(&dir.join("manifest.txt"), &manifest)
}

fn manifest_header(cfg: &ExperimentConfig) -> String {
    format!(
        "name = {}\ndescribes = {}\nconfig_digest = {:016x}\nversion = {} {}\n",
        cfg.name,
        cfg.describes,
        cfg.digest(),
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
    )
}

#[derive(Debug, Clone)]
pub struct ExecuteOptions {
    pub jobs: usize,
    pub sweep: bool,
}

impl Default for ExecuteOptions {
    fn default() -> Self {
        ExecuteOptions { jobs: 1, sweep: true }
    }
}

/// Completed sweep, keyed like `summary.csv`.
#[derive(Debug)]
pub struct SweepOutcome {
    pub axis_names: Vec<&'static str>,
    pub rows: Vec<(RunPoint, RunResult)>,
    pub out_dir: PathBuf,
}

/// Runs every point x seed, writing per-run directories plus `summary.csv`,
/// `aggregate.csv` and `manifest.txt` under `out_dir`.
pub fn execute(cfg: &ExperimentConfig, out_dir: &Path, opts: &ExecuteOptions) -> Result<SweepOutcome, HarnessError> {
    let points = expand(cfg, opts.sweep);
    let axis_names: Vec<&'static str> = points.first().map(|p| p.axes.iter().map(|a| a.0).collect()).unwrap_or_default();
    let jobs: Vec<(RunPoint, u64)> = points
        .iter()
        .flat_map(|p| cfg.seeds.iter().map(move |s| (p.clone(), *s)))
        .collect();
    mkdir(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Run(e.to_string()))?;
    let results: Vec<Result<(RunPoint, RunResult), HarnessError>> = pool.install(|| {
        jobs.into_par_iter()
            .map(|(p, seed)| {
                let r = run_point(&p.config, seed)?;
                let dir = out_dir.join("runs").join(format!("{}_seed={seed}", p.label()));
                write_run(&dir, &p.config, &p, &r)?;
                Ok((p, r))
            })
            .collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut summary = String::new();
    let header: Vec<String> = axis_names
        .iter()
        .map(|s| s.to_string())
        .chain(std::iter::once("seed".to_string()))
        .chain(METRICS.iter().map(|s| s.to_string()))
        .collect();
    summary.push_str(&header.join(","));
    summary.push('\n');
    for (p, r) in &rows {
        let mut cells: Vec<String> = p.axes.iter().map(|(_, v)| v.clone()).collect();
        cells.push(r.seed.to_string());
        cells.extend(METRICS.iter().map(|m| metric_cell(r.metric(m))));
        summary.push_str(&cells.join(","));
        summary.push('\n');
    }
    write(&out_dir.join("summary.csv"), &summary)?;
    write(&out_dir.join("aggregate.csv"), &aggregate_csv(&axis_names, &rows))?;

    let mut manifest = manifest_header(cfg);
    manifest.push_str(&format!(
        "seeds = {}\naxes = {}\npoints = {}\nruns = {}\n",
        cfg.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        axis_names.join(","),
        points.len(),
        rows.len()
    ));
    write(&out_dir.join("manifest.txt"), &manifest)?;
    Ok(SweepOutcome { axis_names, rows, out_dir: out_dir.to_path_buf() })
}

/// Mean, min and max across seeds for each axis point.
fn aggregate_csv(axis_names: &[&'static str], rows: &[(RunPoint, RunResult)]) -> String {
    let mut header: Vec<String> = axis_names.iter().map(|s| s.to_string()).collect();
    header.push("seeds".into());
    for m in METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_min"));
        header.push(format!("{m}_max"));
    }
    let mut out = header.join(",");
    out.push('\n');
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<&RunResult>> = HashMap::new();
    let mut labels: HashMap<String, Vec<String>> = HashMap::new();
    for (p, r) in rows {
        let key = p.label();
        if !groups.contains_key(&key) {
            order.push(key.clone());
            labels.insert(key.clone(), p.axes.iter().map(|(_, v)| v.clone()).collect());
        }
        groups.entry(key).or_default().push(r);
    }
    for key in order {
        let rs = &groups[&key];
        let mut cells = labels[&key].clone();
        cells.push(rs.len().to_string());
        for m in METRICS {
            let vals: Vec<f64> = rs.iter().map(|r| r.metric(m)).filter(|v| !v.is_nan()).collect();
            if vals.is_empty() {
                cells.extend(["NA".to_string(), "NA".to_string(), "NA".to_string()]);
            } else {
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                cells.extend([metric_cell(mean), metric_cell(min), metric_cell(max)]);
            }
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Modes compared throughout the bottom-line experiments.
pub const COMPARED_MODES: [SchedulerMode; 3] = [SchedulerMode::DctcpFifo, SchedulerMode::Slytherin, SchedulerMode::Pias];
