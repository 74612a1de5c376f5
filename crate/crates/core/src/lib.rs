//! Deterministic discrete-event simulation of IaaS cloud datacenters.
//!
//! Datacenters own hosts; hosts run VMs under a [`scheduling::VmScheduler`];
//! each VM runs cloudlets under a [`scheduling::CloudletScheduler`]. Brokers
//! act for users: they request VMs, dispatch cloudlets and collect the
//! results. A [`kernel::Kernel`] drives everything through a time-ordered
//! event queue, and [`scenario`] files describe whole experiments.

pub mod accounting;
pub mod broker;
pub mod cli;
pub mod infrastructure;
pub mod kernel;
pub mod oracle;
pub mod report;
pub mod scenario;
pub mod scheduling;
pub mod workload;

pub use kernel::{EntityId, Kernel, SimError, SimulationConfig};
pub use report::{render_csv, render_table, RunReport};
pub use scenario::{load_scenario, Scenario};
