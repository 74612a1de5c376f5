#![allow(dead_code)]

use std::path::{Path, PathBuf};

use dcsim::infrastructure::{DatacenterCharacteristics, PeSpec};
use dcsim::scenario::{
    load_scenario, BrokerEntry, CloudletEntry, DatacenterEntry, HostEntry, Scenario,
    SimulationSection, VmEntry,
};
use dcsim::scheduling::SchedulingPolicy;
use dcsim::workload::UtilizationModel;

pub fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn paper_a_path() -> PathBuf {
    scenarios_dir().join("paper_a.json")
}

pub fn paper_b_path() -> PathBuf {
    scenarios_dir().join("paper_b.json")
}

/// Both reference scenarios followed by every file in `scenarios/corpus`, sorted.
pub fn corpus_paths() -> Vec<PathBuf> {
    let mut extra: Vec<PathBuf> = std::fs::read_dir(scenarios_dir().join("corpus"))
        .expect("corpus directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    extra.sort();
    let mut all = vec![paper_a_path(), paper_b_path()];
    all.extend(extra);
    all
}

pub fn corpus() -> Vec<(String, Scenario)> {
    corpus_paths()
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            (name, load_scenario(&p).expect("corpus scenario loads"))
        })
        .collect()
}

pub fn vm_entry(id: u32, mips: f64, pes: u32, policy: SchedulingPolicy) -> VmEntry {
    VmEntry {
        id,
        mips,
        pes,
        ram: 512,
        bw: 1000,
        image_size: 10_000,
        vmm: "Xen".into(),
        cloudlet_scheduler: policy,
    }
}

pub fn cloudlet_entry(id: u32, length: f64, pes: u32, vm: Option<u32>) -> CloudletEntry {
    CloudletEntry {
        id,
        length,
        pes,
        file_size: 300,
        output_size: 300,
        utilization: UtilizationModel::Full,
        vm,
    }
}

/// One datacenter with one host sized exactly for a single VM.
pub fn single_vm_scenario(
    policy: SchedulingPolicy,
    mips: f64,
    pes: u32,
    cloudlets: &[(f64, u32)],
) -> Scenario {
    Scenario {
        schema: 1,
        name: None,
        simulation: SimulationSection::default(),
        datacenters: vec![DatacenterEntry {
            name: "Datacenter_0".into(),
            characteristics: DatacenterCharacteristics::default(),
            hosts: vec![HostEntry {
                id: 0,
                pes: (0..pes).map(|i| PeSpec { id: i, mips }).collect(),
                ram: 4096,
                bw: 10_000,
                storage: 1_000_000,
                vm_scheduler: SchedulingPolicy::TimeShared,
            }],
        }],
        brokers: vec![BrokerEntry {
            name: "Broker".into(),
            vms: vec![vm_entry(0, mips, pes, policy)],
            cloudlets: cloudlets
                .iter()
                .enumerate()
                .map(|(i, &(len, p))| cloudlet_entry(i as u32, len, p, Some(0)))
                .collect(),
        }],
        expectations: None,
    }
}
