//! Packet-level discrete-event simulator of a leaf-spine datacenter fabric.
//!
//! Switch ports run one of four schedulers ([`switch::SchedulerMode`]):
//! a single FIFO with ECN marking, a two-queue mode that promotes
//! ECN-marked packets and ACKs to strict high priority, four-queue
//! least-attained-service demotion, and an ideal size-aware scheduler.
//! Hosts run a DCTCP-style transport.
//!
//! ```no_run
//! use tailsim::harness::{parse_config, run_point};
//!
//! let cfg = parse_config("[topology]\n[workload]\nload=0.5\n[switch]\nmode=slytherin\n").unwrap();
//! let result = run_point(&cfg, 1).unwrap();
//! println!("p99 short FCT: {:.1} us", result.metric("fct_short_p99_us"));
//! ```

pub mod engine;
pub mod harness;
pub mod sim;
pub mod switch;
pub mod telemetry;
pub mod topology;
pub mod transport;
pub mod workload;

pub use engine::{Network, NetworkConfig, RunOutput};
pub use sim::SimTime;
pub use switch::SchedulerMode;
