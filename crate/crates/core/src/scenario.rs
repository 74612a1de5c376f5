//! JSON scenario files.
//!
//! A scenario describes the datacenters, the brokers with their VM and
//! cloudlet lists, and optionally the rows and debts a run is expected to
//! produce. See `docs/scenario-format.md` for the schema.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::broker::Broker;
use crate::infrastructure::{Datacenter, DatacenterCharacteristics, HostSpec, PeSpec};
use crate::kernel::{EntityId, Kernel, SimError, SimulationConfig};
use crate::report::RunReport;
use crate::scheduling::SchedulingPolicy;
use crate::workload::{CloudletId, CloudletSpec, CloudletStatus, UtilizationModel, VmId, VmSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {location}: {message}")]
    Invalid {
        path: PathBuf,
        location: String,
        message: String,
    },
}

fn default_one() -> u32 {
    1
}

fn default_broker_name() -> String {
    "Broker".into()
}

fn default_vmm() -> String {
    "Xen".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_one")]
    pub num_users: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_timestamp: Option<String>,
    #[serde(default)]
    pub trace: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            num_users: 1,
            start_timestamp: None,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostEntry {
    pub id: u32,
    pub pes: Vec<PeSpec>,
    pub ram: u64,
    pub bw: u64,
    pub storage: u64,
    #[serde(default)]
    pub vm_scheduler: SchedulingPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatacenterEntry {
    pub name: String,
    #[serde(default)]
    pub characteristics: DatacenterCharacteristics,
    pub hosts: Vec<HostEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VmEntry {
    pub id: VmId,
    pub mips: f64,
    #[serde(default = "default_one")]
    pub pes: u32,
    pub ram: u64,
    pub bw: u64,
    pub image_size: u64,
    #[serde(default = "default_vmm")]
    pub vmm: String,
    #[serde(default)]
    pub cloudlet_scheduler: SchedulingPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudletEntry {
    pub id: CloudletId,
    /// MI
    pub length: f64,
    #[serde(default = "default_one")]
    pub pes: u32,
    #[serde(default)]
    pub file_size: u64,
    #[serde(default)]
    pub output_size: u64,
    /// Applied to cpu, ram and bw alike.
    #[serde(default)]
    pub utilization: UtilizationModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vm: Option<VmId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrokerEntry {
    #[serde(default = "default_broker_name")]
    pub name: String,
    #[serde(default)]
    pub vms: Vec<VmEntry>,
    #[serde(default)]
    pub cloudlets: Vec<CloudletEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedRow {
    pub cloudlet_id: CloudletId,
    pub status: CloudletStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datacenter_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vm_id: Option<VmId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedDebt {
    pub datacenter: String,
    pub user_id: u32,
    pub debt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    #[serde(default)]
    pub rows: Vec<ExpectedRow>,
    #[serde(default)]
    pub debts: Vec<ExpectedDebt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub simulation: SimulationSection,
    pub datacenters: Vec<DatacenterEntry>,
    #[serde(default)]
    pub brokers: Vec<BrokerEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expectations: Option<Expectations>,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, path)
}

/// Parses and validates scenario JSON; `origin` is only used in error messages.
pub fn parse_scenario(text: &str, origin: &Path) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        path: origin.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    scenario
        .validate()
        .map_err(|(location, message)| ScenarioError::Invalid {
            path: origin.to_path_buf(),
            location,
            message,
        })?;
    Ok(scenario)
}

pub fn write_scenario(scenario: &Scenario) -> String {
    let mut text = serde_json::to_string_pretty(scenario).expect("scenario serializes");
    text.push('\n');
    text
}

type Invalid = (String, String);

fn check(ok: bool, location: impl FnOnce() -> String, message: &str) -> Result<(), Invalid> {
    if ok {
        Ok(())
    } else {
        Err((location(), message.to_string()))
    }
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl Scenario {
    /// Checks every capacity and cross-reference. Errors carry the JSON path
    /// of the offending value.
    pub fn validate(&self) -> Result<(), Invalid> {
        check(
            self.schema == SCHEMA_VERSION,
            || "schema".into(),
            "unsupported schema version (expected 1)",
        )?;
        check(
            self.simulation.num_users >= 1,
            || "simulation.num_users".into(),
            "must be at least 1",
        )?;
        check(
            !self.datacenters.is_empty(),
            || "datacenters".into(),
            "at least one datacenter is required",
        )?;

        let mut dc_names = BTreeSet::new();
        for (d, dc) in self.datacenters.iter().enumerate() {
            let at = |field: &str| format!("datacenters[{d}].{field}");
            check(
                dc_names.insert(&dc.name),
                || at("name"),
                "duplicate datacenter name",
            )?;
            check(
                !dc.hosts.is_empty(),
                || at("hosts"),
                "at least one host is required",
            )?;
            check(
                dc.characteristics.validate().is_ok(),
                || at("characteristics"),
                "cost rates must be non-negative",
            )?;
            let mut host_ids = BTreeSet::new();
            for (h, host) in dc.hosts.iter().enumerate() {
                let at = |field: &str| format!("datacenters[{d}].hosts[{h}].{field}");
                check(host_ids.insert(host.id), || at("id"), "duplicate host id")?;
                check(
                    !host.pes.is_empty(),
                    || at("pes"),
                    "at least one PE is required",
                )?;
                let mut pe_ids = BTreeSet::new();
                for (p, pe) in host.pes.iter().enumerate() {
                    check(
                        pe_ids.insert(pe.id),
                        || at(&format!("pes[{p}].id")),
                        "duplicate PE id",
                    )?;
                    check(
                        positive(pe.mips),
                        || at(&format!("pes[{p}].mips")),
                        "must be positive",
                    )?;
                }
                check(host.ram > 0, || at("ram"), "must be positive")?;
                check(host.bw > 0, || at("bw"), "must be positive")?;
                check(host.storage > 0, || at("storage"), "must be positive")?;
            }
        }

        let mut vm_ids = BTreeSet::new();
        let mut cloudlet_ids = BTreeSet::new();
        for (b, broker) in self.brokers.iter().enumerate() {
            let mut vm_pes = BTreeMap::new();
            for (v, vm) in broker.vms.iter().enumerate() {
                let at = |field: &str| format!("brokers[{b}].vms[{v}].{field}");
                check(vm_ids.insert(vm.id), || at("id"), "duplicate vm id")?;
                check(positive(vm.mips), || at("mips"), "must be positive")?;
                check(vm.pes >= 1, || at("pes"), "must be at least 1")?;
                check(vm.ram > 0, || at("ram"), "must be positive")?;
                check(vm.image_size > 0, || at("image_size"), "must be positive")?;
                vm_pes.insert(vm.id, vm.pes);
            }
            for (c, cloudlet) in broker.cloudlets.iter().enumerate() {
                let at = |field: &str| format!("brokers[{b}].cloudlets[{c}].{field}");
                check(
                    cloudlet_ids.insert(cloudlet.id),
                    || at("id"),
                    "duplicate cloudlet id",
                )?;
                check(
                    positive(cloudlet.length),
                    || at("length"),
                    "must be positive",
                )?;
                check(cloudlet.pes >= 1, || at("pes"), "must be at least 1")?;
                if let Some(vmid) = cloudlet.vm {
                    let pes = vm_pes.get(&vmid);
                    check(
                        pes.is_some(),
                        || at("vm"),
                        &format!("references unknown vm {vmid}"),
                    )?;
                    check(
                        pes.is_some_and(|&p| cloudlet.pes <= p),
                        || at("pes"),
                        "exceeds the PE count of the bound vm",
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn simulation_config(&self) -> SimulationConfig {
        SimulationConfig {
            num_users: self.simulation.num_users,
            start_timestamp: self.simulation.start_timestamp.clone(),
            trace: self.simulation.trace,
        }
    }

    pub fn datacenter_entities(&self) -> Result<Vec<Datacenter>, SimError> {
        self.datacenters
            .iter()
            .map(|dc| {
                let hosts = dc
                    .hosts
                    .iter()
                    .map(|h| HostSpec {
                        id: h.id,
                        pes: h.pes.clone(),
                        ram: h.ram,
                        bw: h.bw,
                        storage: h.storage,
                        vm_policy: h.vm_scheduler,
                    })
                    .collect();
                Ok(Datacenter::new(
                    dc.name.clone(),
                    dc.characteristics.clone(),
                    hosts,
                )?)
            })
            .collect()
    }

    /// VM specs of one broker, owned by `owner`.
    pub fn vm_specs(broker: &BrokerEntry, owner: EntityId) -> Vec<VmSpec> {
        broker
            .vms
            .iter()
            .map(|v| VmSpec {
                vmid: v.id,
                owner,
                mips: v.mips,
                pes: v.pes,
                ram: v.ram,
                bw: v.bw,
                image_size: v.image_size,
                vmm: v.vmm.clone(),
                cloudlet_policy: v.cloudlet_scheduler,
            })
            .collect()
    }

    pub fn cloudlet_specs(broker: &BrokerEntry, user: EntityId) -> Vec<CloudletSpec> {
        broker
            .cloudlets
            .iter()
            .map(|c| CloudletSpec {
                id: c.id,
                length: c.length,
                pes: c.pes,
                file_size: c.file_size,
                output_size: c.output_size,
                util_cpu: c.utilization,
                util_ram: c.utilization,
                util_bw: c.utilization,
                user,
                bound_vm: c.vm,
            })
            .collect()
    }

    /// Registers datacenters then brokers, in file order, and submits each
    /// broker's lists. Datacenters therefore get the lowest entity ids.
    pub fn build_kernel(&self) -> Result<Kernel, SimError> {
        let mut kernel = Kernel::init(self.simulation_config())?;
        for dc in self.datacenter_entities()? {
            kernel.register_entity(dc)?;
        }
        for entry in &self.brokers {
            let id = kernel.register_entity(Broker::new(entry.name.clone()))?;
            let broker = kernel.broker_mut(id)?;
            broker.submit_vm_list(Self::vm_specs(entry, id))?;
            broker.submit_cloudlet_list(Self::cloudlet_specs(entry, id))?;
        }
        Ok(kernel)
    }

    pub fn run(&self) -> Result<RunReport, SimError> {
        self.build_kernel()?.run()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema": 1,
        "datacenters": [{"name": "dc", "hosts": [{"id": 0, "pes": [{"id": 0, "mips": 1000}], "ram": 2048, "bw": 10000, "storage": 1000000}]}],
        "brokers": [{"vms": [{"id": 0, "mips": 1000, "ram": 512, "bw": 1000, "image_size": 10000}],
                     "cloudlets": [{"id": 0, "length": 400000, "vm": 0}]}]
    }"#;

    fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        parse_scenario(text, Path::new("test.json"))
    }

    #[test]
    fn defaults_are_applied() {
        let s = parse(MINIMAL).unwrap();
        assert_eq!(s.simulation, SimulationSection::default());
        assert_eq!(
            s.datacenters[0].hosts[0].vm_scheduler,
            SchedulingPolicy::TimeShared
        );
        assert_eq!(
            s.datacenters[0].characteristics,
            DatacenterCharacteristics::default()
        );
        let vm = &s.brokers[0].vms[0];
        assert_eq!(
            (vm.pes, vm.vmm.as_str(), vm.cloudlet_scheduler),
            (1, "Xen", SchedulingPolicy::TimeShared)
        );
        let c = &s.brokers[0].cloudlets[0];
        assert_eq!(
            (c.pes, c.utilization, c.vm),
            (1, UtilizationModel::Full, Some(0))
        );
        assert_eq!(s.brokers[0].name, "Broker");
    }

    #[test]
    fn dangling_binding_is_reported_with_its_path() {
        let text = MINIMAL.replace(r#""vm": 0"#, r#""vm": 9"#);
        match parse(&text) {
            Err(ScenarioError::Invalid {
                location, message, ..
            }) => {
                assert_eq!(location, "brokers[0].cloudlets[0].vm");
                assert!(message.contains("unknown vm 9"));
            }
            other => panic!("expected invalid scenario, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_parse_errors_with_line() {
        let text = MINIMAL.replace(r#""schema": 1,"#, "\"schema\": 1,\n\"colour\": 3,");
        match parse(&text) {
            Err(ScenarioError::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("colour"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_positive_capacities_are_rejected() {
        for (from, to, location) in [
            (
                r#""mips": 1000}"#,
                r#""mips": 0}"#,
                "datacenters[0].hosts[0].pes[0].mips",
            ),
            (
                r#""ram": 2048"#,
                r#""ram": 0"#,
                "datacenters[0].hosts[0].ram",
            ),
            (
                r#""length": 400000"#,
                r#""length": -1"#,
                "brokers[0].cloudlets[0].length",
            ),
            (
                r#""image_size": 10000"#,
                r#""image_size": 0"#,
                "brokers[0].vms[0].image_size",
            ),
            (r#""schema": 1"#, r#""schema": 2"#, "schema"),
        ] {
            let text = MINIMAL.replacen(from, to, 1);
            match parse(&text) {
                Err(ScenarioError::Invalid { location: got, .. }) => assert_eq!(got, location),
                other => panic!("{to}: expected invalid, got {other:?}"),
            }
        }
    }

    #[test]
    fn wide_cloudlet_on_narrow_bound_vm_is_rejected() {
        let text = MINIMAL.replace(r#""length": 400000"#, r#""length": 400000, "pes": 2"#);
        assert!(matches!(parse(&text), Err(ScenarioError::Invalid { .. })));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = MINIMAL.replace(
            r#"{"id": 0, "length": 400000, "vm": 0}"#,
            r#"{"id": 0, "length": 400000, "vm": 0}, {"id": 0, "length": 1}"#,
        );
        assert!(matches!(parse(&text), Err(ScenarioError::Invalid { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_scenario("/definitely/not/here.json"),
            Err(ScenarioError::Io { .. })
        ));
    }

    #[test]
    fn round_trip() {
        let s = parse(MINIMAL).unwrap();
        assert_eq!(parse(&write_scenario(&s)).unwrap(), s);
    }

    #[test]
    fn build_assigns_reference_ids() {
        let s = parse(MINIMAL).unwrap();
        let kernel = s.build_kernel().unwrap();
        assert_eq!(kernel.datacenters().next().unwrap().id(), EntityId(2));
        let broker = kernel.brokers().next().unwrap();
        assert_eq!(broker.id(), EntityId(3));
        assert_eq!(broker.vm_list()[0].owner, EntityId(3));
        assert_eq!(broker.cloudlet_list()[0].user, EntityId(3));
    }
}
