//! INI-style experiment files.
//!
//! ```ini
//! [experiment]
//! seeds = 1,2,3
//! [topology]
//! n_leaf = 8
//! [workload]
//! load = 0.6
//! [switch]
//! mode = slytherin
//! [sweep]
//! load = 0.4,0.6,0.8
//! mode = dctcp,slytherin,pias
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::sim::{fnv1a64, SimTime};
use crate::switch::{validate_pias_thresholds, SchedulerMode};
use crate::telemetry::OpportunityGranularity;
use crate::transport::DctcpConfig;
use crate::workload::{IncastConfig, WorkloadConfig};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        ConfigError { line, message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scenario {
    /// Leaf-spine fabric with the generated workload.
    #[default]
    Fabric,
    /// Dumbbell: one long flow, then competitors after a delay.
    Convergence,
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fabric" => Ok(Scenario::Fabric),
            "convergence" => Ok(Scenario::Convergence),
            o => Err(format!("unknown scenario '{o}'")),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Fabric => "fabric",
            Scenario::Convergence => "convergence",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

impl FromStr for Scale {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            o => Err(format!("unknown scale '{o}' (expected desk|paper)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyParams {
    pub n_leaf: u32,
    pub n_spine: u32,
    pub hosts_per_leaf: u32,
    pub host_rate_bps: u64,
    pub uplink_rate_bps: u64,
    pub rtt: SimTime,
}

impl Default for TopologyParams {
    fn default() -> Self {
        TopologyParams {
            n_leaf: 8,
            n_spine: 4,
            hosts_per_leaf: 10,
            host_rate_bps: 10_000_000_000,
            uplink_rate_bps: 10_000_000_000,
            rtt: SimTime::from_micros(80),
        }
    }
}

impl TopologyParams {
    pub fn apply_scale(&mut self, scale: Scale) {
        let (l, s, h) = match scale {
            Scale::Desk => (8, 4, 10),
            Scale::Paper => (20, 10, 20),
        };
        self.n_leaf = l;
        self.n_spine = s;
        self.hosts_per_leaf = h;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchParams {
    pub mode: SchedulerMode,
    pub capacity_bytes: u64,
    pub ecn_threshold_frac: f64,
    pub pias_thresholds: Vec<u64>,
    pub sjf_queues: usize,
}

impl Default for SwitchParams {
    fn default() -> Self {
        SwitchParams {
            mode: SchedulerMode::DctcpFifo,
            capacity_bytes: 150_000,
            ecn_threshold_frac: 0.25,
            pias_thresholds: vec![32_000, 128_000, 512_000],
            sjf_queues: 8,
        }
    }
}

impl SwitchParams {
    pub fn ecn_threshold_bytes(&self) -> u64 {
        (self.ecn_threshold_frac * self.capacity_bytes as f64).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceParams {
    pub competitors: u32,
    pub start_after_rtts: u32,
    pub measure_rtts: u32,
    pub tolerance: f64,
    pub hold_rtts: usize,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        ConvergenceParams { competitors: 20, start_after_rtts: 10, measure_rtts: 40, tolerance: 0.10, hold_rtts: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepAxes {
    pub load: Vec<f64>,
    pub mode: Vec<SchedulerMode>,
    pub incast_degree: Vec<u32>,
    pub ecn_threshold_frac: Vec<f64>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.load.is_empty() && self.mode.is_empty() && self.incast_degree.is_empty() && self.ecn_threshold_frac.is_empty()
    }

    /// Names of the axes with at least one value, in fixed order.
    pub fn names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if !self.load.is_empty() {
            v.push("load");
        }
        if !self.mode.is_empty() {
            v.push("mode");
        }
        if !self.incast_degree.is_empty() {
            v.push("incast_degree");
        }
        if !self.ecn_threshold_frac.is_empty() {
            v.push("ecn_threshold_frac");
        }
        v
    }

    pub fn point_count(&self) -> usize {
        [self.load.len(), self.mode.len(), self.incast_degree.len(), self.ecn_threshold_frac.len()]
            .iter()
            .map(|n| (*n).max(1))
            .product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    /// Human description recorded in the manifest.
    pub describes: String,
    pub scenario: Scenario,
    pub seeds: Vec<u64>,
    /// Extra simulated time after the last arrival for flows to finish.
    pub drain_limit: SimTime,
    pub topology: TopologyParams,
    pub workload: WorkloadConfig,
    pub switch: SwitchParams,
    pub transport: DctcpConfig,
    pub convergence: ConvergenceParams,
    pub opportunity: OpportunityGranularity,
    pub sweep: SweepAxes,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            describes: String::new(),
            scenario: Scenario::Fabric,
            seeds: vec![1, 2, 3, 4, 5],
            drain_limit: SimTime::from_millis(2_000),
            topology: TopologyParams::default(),
            workload: WorkloadConfig::default(),
            switch: SwitchParams::default(),
            transport: DctcpConfig::default(),
            convergence: ConvergenceParams::default(),
            opportunity: OpportunityGranularity::Packet,
            sweep: SweepAxes::default(),
        }
    }
}

impl ExperimentConfig {
    /// Stable digest of the semantic content.
    pub fn digest(&self) -> u64 {
        fnv1a64(format!("{self:?}").as_bytes())
    }
}

struct Entry {
    line: usize,
    value: String,
}

type Sections = BTreeMap<String, (usize, BTreeMap<String, Entry>)>;

fn tokenize(text: &str) -> Result<Sections, ConfigError> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::new(line_no, format!("malformed section header '{line}'")))?
                .trim()
                .to_string();
            if sections.contains_key(&name) {
                return Err(ConfigError::new(line_no, format!("duplicate section [{name}]")));
            }
            sections.insert(name.clone(), (line_no, BTreeMap::new()));
            current = Some(name);
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::new(line_no, format!("expected key = value, got '{line}'")))?;
        let Some(sec) = &current else {
            return Err(ConfigError::new(line_no, "key outside of any section"));
        };
        let key = k.trim().to_string();
        let map = &mut sections.get_mut(sec).unwrap().1;
        if map.contains_key(&key) {
            return Err(ConfigError::new(line_no, format!("duplicate key '{key}' in [{sec}]")));
        }
        map.insert(key, Entry { line: line_no, value: v.trim().to_string() });
    }
    Ok(sections)
}

/// Typed reader over one section; tracks which keys were consumed.
struct Section<'a> {
    name: &'a str,
    header_line: usize,
    entries: Option<&'a BTreeMap<String, Entry>>,
    used: Vec<&'a str>,
}

impl<'a> Section<'a> {
    fn get<T, F>(&mut self, key: &'a str, parse: F) -> Result<Option<T>, ConfigError>
    where
        F: FnOnce(&str) -> Result<T, String>,
    {
        self.used.push(key);
        match self.entries.and_then(|m| m.get(key)) {
            None => Ok(None),
            Some(e) => parse(&e.value)
                .map(Some)
                .map_err(|m| ConfigError::new(e.line, format!("[{}] {key}: {m}", self.name))),
        }
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.and_then(|m| m.get(key)).map_or(self.header_line, |e| e.line)
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some(m) = self.entries {
            for (k, e) in m {
                if !self.used.contains(&k.as_str()) {
                    return Err(ConfigError::new(e.line, format!("unknown key '{k}' in [{}]", self.name)));
                }
            }
        }
        Ok(())
    }
}

fn num<T: FromStr>(s: &str) -> Result<T, String> {
    s.parse::<T>().map_err(|_| format!("invalid number '{s}'"))
}

fn list<T, F: Fn(&str) -> Result<T, String>>(s: &str, f: F) -> Result<Vec<T>, String> {
    s.split(',').map(|x| x.trim()).filter(|x| !x.is_empty()).map(f).collect()
}

fn gbps(s: &str) -> Result<u64, String> {
    let v: f64 = num(s)?;
    if v <= 0.0 {
        return Err("rate must be positive".into());
    }
    Ok((v * 1e9).round() as u64)
}

fn kb(s: &str) -> Result<u64, String> {
    let v: f64 = num(s)?;
    if v < 0.0 {
        return Err("size must be nonnegative".into());
    }
    Ok((v * 1000.0).round() as u64)
}

fn micros(s: &str) -> Result<SimTime, String> {
    let v: f64 = num(s)?;
    if v < 0.0 {
        return Err("time must be nonnegative".into());
    }
    Ok(SimTime::from_secs_f64(v * 1e-6))
}

fn millis(s: &str) -> Result<SimTime, String> {
    let v: f64 = num(s)?;
    if v < 0.0 {
        return Err("time must be nonnegative".into());
    }
    Ok(SimTime::from_secs_f64(v * 1e-3))
}

fn load(s: &str) -> Result<f64, String> {
    let v: f64 = num(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err("load must be in (0,1)".into())
    }
}

fn frac(s: &str) -> Result<f64, String> {
    let v: f64 = num(s)?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err("fraction must be in (0,1]".into())
    }
}

fn positive<T: FromStr + PartialOrd + Default>(s: &str) -> Result<T, String> {
    let v: T = num(s)?;
    if v > T::default() {
        Ok(v)
    } else {
        Err("must be positive".into())
    }
}

fn mode(s: &str) -> Result<SchedulerMode, String> {
    s.parse()
}

const SECTIONS: [&str; 7] = ["experiment", "topology", "workload", "switch", "transport", "convergence", "sweep"];

/// Parses and validates an experiment file; absent keys take defaults.
/// `[topology]` must be present, `[workload]` must set `load` and `[switch]`
/// must set `mode`.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let sections = tokenize(text)?;
    for (name, (line, _)) in &sections {
        if !SECTIONS.contains(&name.as_str()) {
            return Err(ConfigError::new(*line, format!("unknown section [{name}]")));
        }
    }
    let last_line = text.lines().count().max(1);
    let section = |name: &'static str| {
        let s = sections.get(name);
        Section { name, header_line: s.map_or(last_line, |s| s.0), entries: s.map(|s| &s.1), used: Vec::new() }
    };
    for required in ["topology", "workload", "switch"] {
        if !sections.contains_key(required) {
            return Err(ConfigError::new(last_line, format!("missing required section [{required}]")));
        }
    }
    let mut cfg = ExperimentConfig::default();

    let mut s = section("experiment");
    if let Some(v) = s.get("name", |v| Ok(v.to_string()))? {
        cfg.name = v;
    }
    if let Some(v) = s.get("describes", |v| Ok(v.to_string()))? {
        cfg.describes = v;
    }
    if let Some(v) = s.get("scenario", |v| v.parse())? {
        cfg.scenario = v;
    }
    if let Some(v) = s.get("seeds", |v| list(v, num::<u64>))? {
        if v.is_empty() {
            return Err(ConfigError::new(s.line_of("seeds"), "at least one seed is required"));
        }
        cfg.seeds = v;
    }
    if let Some(v) = s.get("drain_ms", millis)? {
        cfg.drain_limit = v;
    }
    if let Some(v) = s.get("opportunity", |v| match v {
        "packet" => Ok(OpportunityGranularity::Packet),
        "flow" => Ok(OpportunityGranularity::Flow),
        o => Err(format!("expected packet|flow, got '{o}'")),
    })? {
        cfg.opportunity = v;
    }
    s.finish()?;

    let mut s = section("topology");
    let t = &mut cfg.topology;
    if let Some(v) = s.get("scale", |v| v.parse::<Scale>())? {
        t.apply_scale(v);
    }
    if let Some(v) = s.get("n_leaf", positive::<u32>)? {
        t.n_leaf = v;
    }
    if let Some(v) = s.get("n_spine", positive::<u32>)? {
        t.n_spine = v;
    }
    if let Some(v) = s.get("hosts_per_leaf", positive::<u32>)? {
        t.hosts_per_leaf = v;
    }
    if let Some(v) = s.get("host_rate_gbps", gbps)? {
        t.host_rate_bps = v;
    }
    if let Some(v) = s.get("uplink_rate_gbps", gbps)? {
        t.uplink_rate_bps = v;
    }
    if let Some(v) = s.get("rtt_us", micros)? {
        t.rtt = v;
    }
    s.finish()?;

    let mut s = section("workload");
    let w = &mut cfg.workload;
    match s.get("load", load)? {
        Some(v) => w.load = v,
        None => return Err(ConfigError::new(s.header_line, "[workload] load is required")),
    }
    if let Some(v) = s.get("load_basis", |v| v.parse::<crate::workload::LoadBasis>())? {
        w.load_basis = v;
    }
    if let Some(v) = s.get("short_min_kb", kb)? {
        w.short_min = v;
    }
    if let Some(v) = s.get("short_max_kb", kb)? {
        w.short_max = v;
    }
    if let Some(v) = s.get("long_size_kb", kb)? {
        w.long_size = v;
    }
    if let Some(v) = s.get("long_fraction", num::<f64>)? {
        w.long_fraction = v;
    }
    if let Some(v) = s.get("duration_ms", millis)? {
        w.duration = v;
    }
    let degree = s.get("incast_degree", num::<u32>)?;
    let period = s.get("incast_period_us", micros)?;
    let response = s.get("incast_response_kb", kb)?;
    if let Some(d) = degree {
        if d < 2 {
            return Err(ConfigError::new(s.line_of("incast_degree"), "incast degree must be >= 2"));
        }
        w.incast = Some(IncastConfig {
            degree: d,
            period: period.unwrap_or(SimTime::from_millis(1)),
            response_size: response,
        });
    }
    let wline = s.line_of("short_max_kb");
    s.finish()?;
    w.validate().map_err(|e| ConfigError::new(wline, e.to_string()))?;

    let mut s = section("switch");
    let sw = &mut cfg.switch;
    match s.get("mode", mode)? {
        Some(v) => sw.mode = v,
        None => return Err(ConfigError::new(s.header_line, "[switch] mode is required")),
    }
    if let Some(v) = s.get("capacity_kb", kb)? {
        if v == 0 {
            return Err(ConfigError::new(s.line_of("capacity_kb"), "capacity must be positive"));
        }
        sw.capacity_bytes = v;
    }
    if let Some(v) = s.get("ecn_threshold_frac", frac)? {
        sw.ecn_threshold_frac = v;
    }
    if let Some(v) = s.get("pias_thresholds_kb", |v| list(v, kb))? {
        if v.len() != 3 || validate_pias_thresholds(&v).is_err() {
            return Err(ConfigError::new(
                s.line_of("pias_thresholds_kb"),
                "pias_thresholds_kb needs three strictly increasing values",
            ));
        }
        sw.pias_thresholds = v;
    }
    if let Some(v) = s.get("sjf_queues", positive::<usize>)? {
        sw.sjf_queues = v;
    }
    s.finish()?;

    let mut s = section("transport");
    let tr = &mut cfg.transport;
    if let Some(v) = s.get("mss", positive::<u32>)? {
        if v + tr.header_bytes > crate::switch::MTU {
            return Err(ConfigError::new(s.line_of("mss"), "mss plus header exceeds the 1500 B MTU"));
        }
        tr.mss = v;
    }
    if let Some(v) = s.get("g", frac)? {
        tr.g = v;
    }
    if let Some(v) = s.get("alpha_init", |v| {
        let x: f64 = num(v)?;
        if (0.0..=1.0).contains(&x) { Ok(x) } else { Err("alpha_init must be in [0,1]".into()) }
    })? {
        tr.alpha_init = v;
    }
    if let Some(v) = s.get("init_cwnd_mss", positive::<u32>)? {
        tr.init_cwnd_mss = v;
    }
    if let Some(v) = s.get("min_rto_ms", millis)? {
        tr.min_rto = v;
    }
    if let Some(v) = s.get("max_rto_ms", millis)? {
        tr.max_rto = v;
    }
    if let Some(v) = s.get("dupack_threshold", positive::<u32>)? {
        tr.dupack_threshold = v;
    }
    if let Some(v) = s.get("rwnd_bytes", positive::<u64>)? {
        tr.rwnd_bytes = v;
    }
    if tr.max_rto < tr.min_rto {
        return Err(ConfigError::new(s.line_of("max_rto_ms"), "max_rto_ms must be >= min_rto_ms"));
    }
    s.finish()?;

    let mut s = section("convergence");
    let c = &mut cfg.convergence;
    if let Some(v) = s.get("competitors", positive::<u32>)? {
        c.competitors = v;
    }
    if let Some(v) = s.get("start_after_rtts", num::<u32>)? {
        c.start_after_rtts = v;
    }
    if let Some(v) = s.get("measure_rtts", positive::<u32>)? {
        c.measure_rtts = v;
    }
    if let Some(v) = s.get("tolerance", frac)? {
        c.tolerance = v;
    }
    if let Some(v) = s.get("hold_rtts", positive::<usize>)? {
        c.hold_rtts = v;
    }
    s.finish()?;

    let mut s = section("sweep");
    let sw = &mut cfg.sweep;
    if let Some(v) = s.get("load", |v| list(v, load))? {
        sw.load = v;
    }
    if let Some(v) = s.get("mode", |v| list(v, mode))? {
        sw.mode = v;
    }
    if let Some(v) = s.get("incast_degree", |v| {
        list(v, |x| {
            let d: u32 = num(x)?;
            if d >= 2 { Ok(d) } else { Err("incast degree must be >= 2".into()) }
        })
    })? {
        sw.incast_degree = v;
    }
    if let Some(v) = s.get("ecn_threshold_frac", |v| list(v, frac))? {
        sw.ecn_threshold_frac = v;
    }
    s.finish()?;

    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[topology]\n[workload]\nload = 0.6\n[switch]\nmode = slytherin\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.switch.mode, SchedulerMode::Slytherin);
        assert_eq!(c.workload.load, 0.6);
        assert_eq!(c.topology, TopologyParams::default());
        assert_eq!(c.switch.capacity_bytes, 150_000);
        assert_eq!(c.switch.ecn_threshold_bytes(), 37_500);
        assert_eq!(c.transport, DctcpConfig::default());
        assert_eq!(c.seeds.len(), 5);
        assert!(c.sweep.is_empty());
    }

    #[test]
    fn threshold_fraction_sets_k() {
        let c = parse_config(&format!("{MINIMAL}ecn_threshold_frac = 0.25\ncapacity_kb = 200\n")).unwrap();
        assert_eq!(c.switch.ecn_threshold_bytes(), 50_000);
        let c = parse_config(&format!("{MINIMAL}ecn_threshold_frac = 0.125\n")).unwrap();
        assert_eq!(c.switch.ecn_threshold_bytes(), 18_750);
    }

    #[test]
    fn bad_load_reports_line() {
        let e = parse_config("[topology]\n[workload]\nload = 1.5\n[switch]\nmode = pias\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("load must be in (0,1)"), "{e}");
    }

    #[test]
    fn unknown_key_and_section() {
        let e = parse_config(&format!("{MINIMAL}bogus = 1\n")).unwrap_err();
        assert_eq!(e.line, 6);
        assert!(e.message.contains("unknown key 'bogus'"));
        let e = parse_config(&format!("{MINIMAL}[extras]\n")).unwrap_err();
        assert_eq!(e.line, 6);
        assert!(e.message.contains("unknown section"));
    }

    #[test]
    fn missing_section_and_required_keys() {
        let e = parse_config("[workload]\nload = 0.5\n[switch]\nmode = pias\n").unwrap_err();
        assert!(e.message.contains("missing required section [topology]"));
        let e = parse_config("[topology]\n[workload]\n[switch]\nmode = pias\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_config("[topology]\n[workload]\nload=0.3\n[switch]\nmode = wfq\n").unwrap_err();
        assert_eq!(e.line, 5);
        assert!(e.message.contains("unknown scheduler mode"));
    }

    #[test]
    fn sweep_axes_and_counts() {
        let text = format!(
            "[experiment]\nseeds = 1, 2\n{MINIMAL}[sweep]\nload = 0.4,0.6,0.8\nmode = dctcp,slytherin\n"
        );
        let c = parse_config(&text).unwrap();
        assert_eq!(c.seeds, vec![1, 2]);
        assert_eq!(c.sweep.point_count(), 6);
        assert_eq!(c.sweep.names(), vec!["load", "mode"]);
    }

    #[test]
    fn scale_and_incast() {
        let text = "[topology]\nscale = paper\n[workload]\nload = 0.5\nincast_degree = 32\nincast_period_us = 500\n[switch]\nmode = pias\n";
        let c = parse_config(text).unwrap();
        assert_eq!((c.topology.n_leaf, c.topology.n_spine, c.topology.hosts_per_leaf), (20, 10, 20));
        let ic = c.workload.incast.unwrap();
        assert_eq!(ic.degree, 32);
        assert_eq!(ic.period, SimTime::from_micros(500));
    }

    #[test]
    fn comments_and_malformed_lines() {
        let text = "# comment\n[topology] ; trailing\nn_leaf = 4 # four\n[workload]\nload = 0.5\n[switch]\nmode = sjf\n";
        assert_eq!(parse_config(text).unwrap().topology.n_leaf, 4);
        let e = parse_config("[topology]\nnonsense\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_config("[topology]\nn_leaf = 0\n[workload]\nload=0.5\n[switch]\nmode=pias\n").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn digest_tracks_content() {
        let a = parse_config(MINIMAL).unwrap();
        let b = parse_config(&MINIMAL.replace("0.6", "0.7")).unwrap();
        assert_eq!(a.digest(), parse_config(MINIMAL).unwrap().digest());
        assert_ne!(a.digest(), b.digest());
    }
}
