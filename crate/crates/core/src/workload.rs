//! Web-search style traffic: Poisson arrivals, a short/long size mix, uniform
//! endpoints, and optional synchronized incast bursts.

use std::fmt;

use thiserror::Error;

use crate::sim::{SimRng, SimTime};
use crate::topology::{FlowKey, NodeId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlowClass {
    Short,
    Long,
    Incast,
}

impl FlowClass {
    pub fn name(&self) -> &'static str {
        match self {
            FlowClass::Short => "short",
            FlowClass::Long => "long",
            FlowClass::Incast => "incast",
        }
    }

    /// Short-flow metrics cover both background short flows and incast
    /// responses, which are drawn from the same size range.
    pub fn is_short(&self) -> bool {
        matches!(self, FlowClass::Short | FlowClass::Incast)
    }
}

impl fmt::Display for FlowClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub key: FlowKey,
    pub size: u64,
    pub arrive_at: SimTime,
    pub completed_at: Option<SimTime>,
    pub class: FlowClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncastConfig {
    pub degree: u32,
    pub period: SimTime,
    /// Fixed response size; `None` draws from the short range.
    pub response_size: Option<u64>,
}

/// What `load` is a fraction of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadBasis {
    /// Aggregate host-link capacity.
    #[default]
    Hosts,
    /// Aggregate host-link capacity, scaled down so that load 1.0 saturates
    /// the leaf uplinks under uniform inter-leaf traffic.
    Fabric,
}

impl std::str::FromStr for LoadBasis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hosts" => Ok(LoadBasis::Hosts),
            "fabric" => Ok(LoadBasis::Fabric),
            o => Err(format!("expected hosts|fabric, got '{o}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadConfig {
    /// Offered load as a fraction of the [`LoadBasis`] capacity.
    pub load: f64,
    pub load_basis: LoadBasis,
    pub short_min: u64,
    pub short_max: u64,
    pub long_size: u64,
    pub long_fraction: f64,
    pub duration: SimTime,
    pub incast: Option<IncastConfig>,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            load: 0.6,
            load_basis: LoadBasis::Hosts,
            short_min: 8_000,
            short_max: 32_000,
            long_size: 1_000_000,
            long_fraction: 0.30,
            duration: SimTime::from_millis(20),
            incast: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkloadError {
    #[error("load must be in (0,1), got {0}")]
    Load(f64),
    #[error("short size range must be ascending and nonzero: [{0}, {1}]")]
    ShortRange(u64, u64),
    #[error("long flow fraction must be in [0,1], got {0}")]
    LongFraction(f64),
    #[error("long flow size must be nonzero")]
    LongSize,
    #[error("incast degree {degree} invalid for {hosts} hosts (need 2 <= degree <= hosts-1)")]
    IncastDegree { degree: u32, hosts: u32 },
    #[error("incast period must be positive")]
    IncastPeriod,
    #[error("incast traffic alone ({incast_load:.3}) exceeds configured load {load}")]
    IncastExceedsLoad { incast_load: f64, load: f64 },
    #[error("topology needs at least two hosts")]
    TooFewHosts,
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if !(self.load > 0.0 && self.load < 1.0) {
            return Err(WorkloadError::Load(self.load));
        }
        if self.short_min == 0 || self.short_min > self.short_max {
            return Err(WorkloadError::ShortRange(self.short_min, self.short_max));
        }
        if !(0.0..=1.0).contains(&self.long_fraction) {
            return Err(WorkloadError::LongFraction(self.long_fraction));
        }
        if self.long_size == 0 {
            return Err(WorkloadError::LongSize);
        }
        if let Some(ic) = &self.incast {
            if ic.degree < 2 {
                return Err(WorkloadError::IncastDegree { degree: ic.degree, hosts: 0 });
            }
            if ic.period == SimTime::ZERO {
                return Err(WorkloadError::IncastPeriod);
            }
        }
        Ok(())
    }

    pub fn mean_short_size(&self) -> f64 {
        (self.short_min + self.short_max) as f64 / 2.0
    }

    pub fn mean_flow_size(&self) -> f64 {
        (1.0 - self.long_fraction) * self.mean_short_size() + self.long_fraction * self.long_size as f64
    }

    fn mean_response_size(&self, ic: &IncastConfig) -> f64 {
        ic.response_size.map_or(self.mean_short_size(), |s| s as f64)
    }

    /// Capacity in bits per second that `load` is measured against.
    pub fn reference_capacity_bps(&self, topo: &Topology) -> f64 {
        let hosts = topo.n_hosts() as f64 * topo.host_rate_bps() as f64;
        match self.load_basis {
            LoadBasis::Hosts => hosts,
            LoadBasis::Fabric => {
                let n = topo.n_hosts() as f64;
                let remote = (n - topo.hosts_per_leaf() as f64) / (n - 1.0);
                let core = topo.n_leaf() as f64 * topo.n_spine() as f64 * topo.uplink_rate_bps() as f64;
                if remote <= 0.0 {
                    hosts
                } else {
                    hosts * (core / (hosts * remote)).min(1.0)
                }
            }
        }
    }

    /// Incast bytes as a fraction of the reference capacity.
    pub fn incast_load(&self, topo: &Topology) -> f64 {
        match &self.incast {
            None => 0.0,
            Some(ic) => {
                let bps = ic.degree as f64 * self.mean_response_size(ic) * 8.0 / ic.period.as_secs_f64();
                bps / self.reference_capacity_bps(topo)
            }
        }
    }

    /// Fabric-wide background arrival rate in flows per second.
    pub fn arrival_rate(&self, topo: &Topology) -> f64 {
        let background = (self.load - self.incast_load(topo)).max(0.0);
        background * self.reference_capacity_bps(topo) / (8.0 * self.mean_flow_size())
    }

    fn draw_short(&self, rng: &mut SimRng) -> u64 {
        let v = rng
            .uniform(self.short_min as f64, self.short_max as f64 + 1.0)
            .expect("validated range");
        (v as u64).clamp(self.short_min, self.short_max)
    }
}

fn distinct_pair(n_hosts: u32, rng: &mut SimRng) -> (u32, u32) {
    let src = rng.index(n_hosts as usize) as u32;
    let mut dst = rng.index(n_hosts as usize - 1) as u32;
    if dst >= src {
        dst += 1;
    }
    (src, dst)
}

/// Background flows over `[0, duration)`, sorted by arrival.
pub fn generate(cfg: &WorkloadConfig, topo: &Topology, rng: &mut SimRng) -> Result<Vec<Flow>, WorkloadError> {
    cfg.validate()?;
    let n = topo.n_hosts();
    if n < 2 {
        return Err(WorkloadError::TooFewHosts);
    }
    let incast_load = cfg.incast_load(topo);
    if incast_load >= cfg.load {
        return Err(WorkloadError::IncastExceedsLoad { incast_load, load: cfg.load });
    }
    let rate = cfg.arrival_rate(topo);
    let mean_gap = 1.0 / rate;
    let mut flows = Vec::new();
    let mut t = 0.0;
    loop {
        t += rng.exponential(mean_gap).expect("positive mean");
        let at = SimTime::from_secs_f64(t);
        if at >= cfg.duration {
            break;
        }
        let long = rng.bernoulli(cfg.long_fraction);
        let (class, size) = if long {
            (FlowClass::Long, cfg.long_size)
        } else {
            (FlowClass::Short, cfg.draw_short(rng))
        };
        let (s, d) = distinct_pair(n, rng);
        flows.push(Flow {
            key: FlowKey { src: NodeId::host(s), dst: NodeId::host(d), flow_id: 0 },
            size,
            arrive_at: at,
            completed_at: None,
            class,
        });
    }
    Ok(flows)
}

/// Synchronized bursts: every `period`, `degree` distinct senders start one
/// short flow each to a single receiver.
pub fn generate_incast(cfg: &WorkloadConfig, topo: &Topology, rng: &mut SimRng) -> Result<Vec<Flow>, WorkloadError> {
    cfg.validate()?;
    let Some(ic) = &cfg.incast else {
        return Ok(Vec::new());
    };
    let n = topo.n_hosts();
    if ic.degree > n.saturating_sub(1) {
        return Err(WorkloadError::IncastDegree { degree: ic.degree, hosts: n });
    }
    let mut flows = Vec::new();
    // First burst half a period in, so bursts interleave with background.
    let mut at = SimTime::from_nanos(ic.period.as_nanos() / 2);
    while at < cfg.duration {
        let receiver = rng.index(n as usize) as u32;
        let mut candidates: Vec<u32> = (0..n).filter(|h| *h != receiver).collect();
        for i in 0..ic.degree as usize {
            let j = i + rng.index(candidates.len() - i);
            candidates.swap(i, j);
        }
        for &s in &candidates[..ic.degree as usize] {
            let size = ic.response_size.unwrap_or_else(|| cfg.draw_short(rng));
            flows.push(Flow {
                key: FlowKey { src: NodeId::host(s), dst: NodeId::host(receiver), flow_id: 0 },
                size,
                arrive_at: at,
                completed_at: None,
                class: FlowClass::Incast,
            });
        }
        at += ic.period;
    }
    Ok(flows)
}

/// Background plus incast, merged by arrival time with dense flow ids.
pub fn generate_schedule(cfg: &WorkloadConfig, topo: &Topology, master_seed: u64) -> Result<Vec<Flow>, WorkloadError> {
    let mut bg = generate(cfg, topo, &mut SimRng::stream(master_seed, "workload"))?;
    let ic = generate_incast(cfg, topo, &mut SimRng::stream(master_seed, "incast"))?;
    bg.extend(ic);
    // stable: equal arrivals keep background-before-incast, burst order intact
    bg.sort_by_key(|f| f.arrive_at);
    for (i, f) in bg.iter_mut().enumerate() {
        f.key.flow_id = i as u64;
    }
    Ok(bg)
}

/// `flow_id,src,dst,size,arrive_ns` rows.
pub fn schedule_csv(flows: &[Flow]) -> String {
    let mut out = String::from("flow_id,src,dst,class,size_bytes,arrive_ns\n");
    for f in flows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            f.key.flow_id,
            f.key.src.index,
            f.key.dst.index,
            f.class,
            f.size,
            f.arrive_at.as_nanos()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk() -> Topology {
        Topology::build_leaf_spine(8, 4, 10, 10_000_000_000, 10_000_000_000, SimTime::ZERO).unwrap()
    }

    #[test]
    fn mean_size_and_rate() {
        let cfg = WorkloadConfig::default();
        assert!((cfg.mean_flow_size() - 314_000.0).abs() < 1e-6);
        let rate = cfg.arrival_rate(&desk());
        // 0.6 * 10e9 * 80 / (8 * 314e3)
        assert!((rate - 191_082.8).abs() < 1.0, "{rate}");
    }

    #[test]
    fn fabric_basis_saturates_uplinks_at_full_load() {
        let topo = desk();
        let cfg = WorkloadConfig { load: 0.999_999, load_basis: LoadBasis::Fabric, ..Default::default() };
        // Inter-leaf bytes per second vs 8 leaves x 4 uplinks x 10 Gb/s.
        let remote = 70.0 / 79.0;
        let uplink_bps = cfg.arrival_rate(&topo) * cfg.mean_flow_size() * 8.0 * remote;
        assert!((uplink_bps / 320e9 - 1.0).abs() < 1e-5, "{uplink_bps}");
        let single = Topology::build_leaf_spine(1, 1, 4, 10_000_000_000, 10_000_000_000, SimTime::ZERO).unwrap();
        assert_eq!(cfg.reference_capacity_bps(&single), 40e9);
    }

    #[test]
    fn tiny_load_gives_empty_schedule() {
        let cfg = WorkloadConfig { load: 1e-9, duration: SimTime::from_millis(1), ..Default::default() };
        let flows = generate(&cfg, &desk(), &mut SimRng::new(1)).unwrap();
        assert!(flows.is_empty());
    }

    #[test]
    fn class_mix_and_sizes() {
        let cfg = WorkloadConfig { duration: SimTime::from_millis(600), ..Default::default() };
        let flows = generate(&cfg, &desk(), &mut SimRng::new(3)).unwrap();
        assert!(flows.len() > 100_000, "{}", flows.len());
        let long = flows.iter().filter(|f| f.class == FlowClass::Long).count();
        let frac = long as f64 / flows.len() as f64;
        assert!((frac - 0.30).abs() <= 0.01, "{frac}");
        for f in &flows {
            assert_ne!(f.key.src, f.key.dst);
            match f.class {
                FlowClass::Long => assert_eq!(f.size, 1_000_000),
                _ => assert!((8_000..=32_000).contains(&f.size)),
            }
        }
        assert!(flows.windows(2).all(|w| w[0].arrive_at <= w[1].arrive_at));
    }

    #[test]
    fn offered_load_matches_target() {
        let topo = desk();
        let cfg = WorkloadConfig { load: 0.5, duration: SimTime::from_millis(2_000), ..Default::default() };
        let flows = generate(&cfg, &topo, &mut SimRng::new(11)).unwrap();
        let bytes: u64 = flows.iter().map(|f| f.size).sum();
        let capacity = cfg.duration.as_secs_f64() * topo.n_hosts() as f64 * topo.host_rate_bps() as f64 / 8.0;
        let offered = bytes as f64 / capacity;
        assert!((offered - 0.5).abs() / 0.5 <= 0.02, "{offered}");
    }

    #[test]
    fn invalid_load() {
        let cfg = WorkloadConfig { load: 1.5, ..Default::default() };
        assert_eq!(cfg.validate(), Err(WorkloadError::Load(1.5)));
    }

    #[test]
    fn incast_bursts_are_synchronized() {
        let topo = desk();
        let cfg = WorkloadConfig {
            incast: Some(IncastConfig { degree: 32, period: SimTime::from_millis(1), response_size: None }),
            duration: SimTime::from_millis(5),
            ..Default::default()
        };
        let flows = generate_incast(&cfg, &topo, &mut SimRng::new(2)).unwrap();
        assert_eq!(flows.len(), 5 * 32);
        for burst in flows.chunks(32) {
            let at = burst[0].arrive_at;
            let rx = burst[0].key.dst;
            let mut senders: Vec<_> = burst.iter().map(|f| f.key.src).collect();
            senders.sort();
            senders.dedup();
            assert_eq!(senders.len(), 32);
            assert!(burst.iter().all(|f| f.arrive_at == at && f.key.dst == rx && f.key.src != rx));
        }
    }

    #[test]
    fn minimal_incast_and_bad_degree() {
        let topo = desk();
        let mut cfg = WorkloadConfig {
            incast: Some(IncastConfig { degree: 2, period: SimTime::from_millis(1), response_size: Some(16_000) }),
            duration: SimTime::from_millis(1),
            ..Default::default()
        };
        let flows = generate_incast(&cfg, &topo, &mut SimRng::new(2)).unwrap();
        assert_eq!(flows.len(), 2);
        cfg.incast.as_mut().unwrap().degree = 80;
        assert!(matches!(
            generate_incast(&cfg, &topo, &mut SimRng::new(2)),
            Err(WorkloadError::IncastDegree { .. })
        ));
    }

    #[test]
    fn incast_share_is_carved_out_of_load() {
        let topo = desk();
        let base = WorkloadConfig::default();
        let with = WorkloadConfig {
            incast: Some(IncastConfig { degree: 32, period: SimTime::from_millis(1), response_size: None }),
            ..Default::default()
        };
        assert!(with.arrival_rate(&topo) < base.arrival_rate(&topo));
        let total = with.arrival_rate(&topo) * with.mean_flow_size() * 8.0
            / (topo.n_hosts() as f64 * topo.host_rate_bps() as f64)
            + with.incast_load(&topo);
        assert!((total - 0.6).abs() < 1e-9);
    }

    #[test]
    fn schedule_is_deterministic() {
        let topo = desk();
        let cfg = WorkloadConfig::default();
        let a = generate_schedule(&cfg, &topo, 9).unwrap();
        let b = generate_schedule(&cfg, &topo, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().enumerate().all(|(i, f)| f.key.flow_id == i as u64));
        assert!(schedule_csv(&a).starts_with("flow_id,src,dst,class,size_bytes,arrive_ns\n"));
    }
}
