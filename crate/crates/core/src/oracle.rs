//! Fixed-timestep integrator used to cross-check the event-driven kernel.
//!
//! It replays the same placement and binding decisions, then steps every VM
//! forward by a constant `dt`, using the same rate functions as the cloudlet
//! schedulers but no event queue. Completions and queue promotions happen at
//! step boundaries, so a finish time is only known to within one step.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::kernel::{EntityId, SimError};
use crate::report::RunReport;
use crate::scenario::Scenario;
use crate::scheduling::{space_shared_rate, time_shared_rates, SchedulingPolicy};
use crate::workload::{CloudletId, CloudletStatus, VmId, VmSpec, COMPLETION_TOLERANCE_MI};

/// Gives up on a single VM after this many steps.
pub const MAX_STEPS: u64 = 200_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("vm {0} did not drain within {MAX_STEPS} steps")]
    Stalled(VmId),
    #[error(transparent)]
    Setup(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleTiming {
    pub vm: VmId,
    pub start: f64,
    pub finish: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleOutcome {
    pub finished: BTreeMap<CloudletId, OracleTiming>,
    pub failed: BTreeSet<CloudletId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub cloudlet_id: CloudletId,
    pub detail: String,
    pub delta: Option<f64>,
}

struct Job {
    id: CloudletId,
    pes: u32,
    remaining: f64,
    start: Option<f64>,
}

/// Steps one VM's cloudlets, all submitted at t=0 in `jobs` order, until every
/// one has finished.
fn integrate_vm(
    vm: &VmSpec,
    jobs: Vec<(CloudletId, f64, u32)>,
    dt: f64,
    out: &mut BTreeMap<CloudletId, OracleTiming>,
) -> Result<(), OracleError> {
    let mut waiting: VecDeque<Job> = jobs
        .into_iter()
        .map(|(id, length, pes)| Job {
            id,
            pes,
            remaining: length,
            start: None,
        })
        .collect();
    let mut running: Vec<Job> = Vec::new();
    let mut free = vm.pes;

    let admit = |waiting: &mut VecDeque<Job>, running: &mut Vec<Job>, free: &mut u32, t: f64| {
        while let Some(head) = waiting.front() {
            if vm.cloudlet_policy == SchedulingPolicy::SpaceShared && head.pes > *free {
                break;
            }
            let mut job = waiting.pop_front().expect("front exists");
            if vm.cloudlet_policy == SchedulingPolicy::SpaceShared {
                *free -= job.pes;
            }
            job.start = Some(t);
            running.push(job);
        }
    };

    admit(&mut waiting, &mut running, &mut free, 0.0);
    let mut step: u64 = 0;
    while !running.is_empty() || !waiting.is_empty() {
        step += 1;
        if step > MAX_STEPS {
            return Err(OracleError::Stalled(vm.vmid));
        }
        let t = step as f64 * dt;
        let rates: Vec<f64> = match vm.cloudlet_policy {
            SchedulingPolicy::TimeShared => {
                let demands: Vec<u32> = running.iter().map(|j| j.pes).collect();
                time_shared_rates(vm.mips, vm.pes, &demands)
            }
            SchedulingPolicy::SpaceShared => running
                .iter()
                .map(|j| space_shared_rate(vm.mips, j.pes))
                .collect(),
        };
        let mut finished = Vec::new();
        for (i, (job, rate)) in running.iter_mut().zip(&rates).enumerate() {
            job.remaining -= rate * dt;
            if job.remaining <= 1e-6 * rate * dt + COMPLETION_TOLERANCE_MI {
                finished.push(i);
            }
        }
        for &i in finished.iter().rev() {
            let job = running.remove(i);
            if vm.cloudlet_policy == SchedulingPolicy::SpaceShared {
                free += job.pes;
            }
            out.insert(
                job.id,
                OracleTiming {
                    vm: vm.vmid,
                    start: job.start.expect("running jobs have started"),
                    finish: t,
                },
            );
        }
        if !finished.is_empty() {
            admit(&mut waiting, &mut running, &mut free, t);
        }
    }
    Ok(())
}

/// Runs the fixed-step integration of a whole scenario.
pub fn integrate(scenario: &Scenario, dt: f64) -> Result<OracleOutcome, OracleError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(OracleError::InvalidStep(dt));
    }
    let mut datacenters = scenario.datacenter_entities()?;
    let first_broker = 2 + datacenters.len() as u32;

    // Placement: every VM tries datacenter 0 first, in broker then list
    // order; rejected ones retry the next datacenter in the same order.
    let vms: Vec<VmSpec> = scenario
        .brokers
        .iter()
        .enumerate()
        .flat_map(|(b, entry)| Scenario::vm_specs(entry, EntityId(first_broker + b as u32)))
        .collect();
    let mut created: BTreeMap<VmId, &VmSpec> = BTreeMap::new();
    let mut pending: Vec<&VmSpec> = vms.iter().collect();
    for dc in &mut datacenters {
        pending.retain(|vm| match dc.allocate_host_for_vm((*vm).clone()) {
            Ok(_) => {
                created.insert(vm.vmid, vm);
                false
            }
            Err(_) => true,
        });
    }

    let mut outcome = OracleOutcome::default();
    let mut per_vm: BTreeMap<VmId, Vec<(CloudletId, f64, u32)>> = BTreeMap::new();
    for entry in &scenario.brokers {
        let own: Vec<VmId> = entry
            .vms
            .iter()
            .map(|v| v.id)
            .filter(|id| created.contains_key(id))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut next = 0usize;
        for c in &entry.cloudlets {
            let target = match c.vm {
                Some(vmid) => own.contains(&vmid).then_some(vmid),
                None if own.is_empty() => None,
                None => {
                    next += 1;
                    Some(own[(next - 1) % own.len()])
                }
            };
            match target {
                Some(vmid) if c.pes <= created[&vmid].pes => {
                    per_vm
                        .entry(vmid)
                        .or_default()
                        .push((c.id, c.length, c.pes));
                }
                _ => {
                    outcome.failed.insert(c.id);
                }
            }
        }
    }

    for (vmid, jobs) in per_vm {
        integrate_vm(created[&vmid], jobs, dt, &mut outcome.finished)?;
    }
    Ok(outcome)
}

/// Every disagreement between a kernel report and the oracle larger than
/// `tolerance` seconds, or in outcome.
pub fn compare(report: &RunReport, oracle: &OracleOutcome, tolerance: f64) -> Vec<Divergence> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for row in &report.rows {
        seen.insert(row.cloudlet_id);
        let timing = oracle.finished.get(&row.cloudlet_id);
        match (row.status, timing, row.finish_time) {
            (CloudletStatus::Success, Some(t), Some(finish)) => {
                let delta = finish - t.finish;
                if delta.abs() > tolerance {
                    out.push(Divergence {
                        cloudlet_id: row.cloudlet_id,
                        detail: format!("finish {finish} vs oracle {}", t.finish),
                        delta: Some(delta),
                    });
                }
                if row.vm_id != Some(t.vm) {
                    out.push(Divergence {
                        cloudlet_id: row.cloudlet_id,
                        detail: format!("ran on vm {:?}, oracle used vm {}", row.vm_id, t.vm),
                        delta: None,
                    });
                }
            }
            (status, None, _)
                if status != CloudletStatus::Success
                    && oracle.failed.contains(&row.cloudlet_id) => {}
            (status, _, _) => out.push(Divergence {
                cloudlet_id: row.cloudlet_id,
                detail: format!(
                    "kernel says {status}, oracle says {}",
                    if timing.is_some() {
                        "SUCCESS"
                    } else {
                        "FAILED"
                    }
                ),
                delta: None,
            }),
        }
    }
    for id in oracle.finished.keys().chain(&oracle.failed) {
        if !seen.contains(id) {
            out.push(Divergence {
                cloudlet_id: *id,
                detail: "missing from the kernel report".into(),
                delta: None,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::EntityId;

    fn vm(policy: SchedulingPolicy, mips: f64, pes: u32) -> VmSpec {
        VmSpec {
            vmid: 0,
            owner: EntityId(3),
            mips,
            pes,
            ram: 1,
            bw: 1,
            image_size: 1,
            vmm: "Xen".into(),
            cloudlet_policy: policy,
        }
    }

    #[test]
    fn single_job_finishes_on_the_grid() {
        let mut out = BTreeMap::new();
        integrate_vm(
            &vm(SchedulingPolicy::TimeShared, 1000.0, 1),
            vec![(0, 400_000.0, 1)],
            0.01,
            &mut out,
        )
        .unwrap();
        assert!((out[&0].finish - 400.0).abs() <= 0.01);
    }

    #[test]
    fn time_shared_pair_shares_capacity() {
        let mut out = BTreeMap::new();
        let jobs = vec![(0, 1000.0, 1), (1, 3000.0, 1)];
        integrate_vm(
            &vm(SchedulingPolicy::TimeShared, 1000.0, 1),
            jobs,
            0.01,
            &mut out,
        )
        .unwrap();
        // 500 MIPS each until t=2, then the survivor alone: 2000 MI / 1000 = 2 more.
        assert!((out[&0].finish - 2.0).abs() <= 0.01);
        assert!((out[&1].finish - 4.0).abs() <= 0.01);
    }

    #[test]
    fn space_shared_queue_starts_at_predecessor_finish() {
        let mut out = BTreeMap::new();
        let jobs = vec![(0, 1000.0, 1), (1, 1000.0, 1)];
        integrate_vm(
            &vm(SchedulingPolicy::SpaceShared, 1000.0, 1),
            jobs,
            0.01,
            &mut out,
        )
        .unwrap();
        assert!((out[&0].finish - 1.0).abs() <= 0.01);
        assert_eq!(out[&1].start, out[&0].finish);
        assert!((out[&1].finish - 2.0).abs() <= 0.01);
    }
}
