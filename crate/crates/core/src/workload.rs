//! Virtual machine and cloudlet descriptions, plus the per-cloudlet
//! execution bookkeeping used by the cloudlet schedulers.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::EntityId;
use crate::scheduling::SchedulingPolicy;

pub type VmId = u32;
pub type CloudletId = u32;

/// Remaining work at or below this many MI counts as finished.
pub const COMPLETION_TOLERANCE_MI: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("vm {vmid}: {reason}")]
    InvalidVm { vmid: VmId, reason: &'static str },
    #[error("cloudlet {id}: {reason}")]
    InvalidCloudlet {
        id: CloudletId,
        reason: &'static str,
    },
    #[error("cloudlet {id}: cannot go from {from} to {to}")]
    IllegalTransition {
        id: CloudletId,
        from: CloudletStatus,
        to: CloudletStatus,
    },
    #[error("cloudlet {id}: negative elapsed time or rate")]
    NegativeProgress { id: CloudletId },
    #[error("cloudlet {id} has not finished")]
    NotFinished { id: CloudletId },
}

/// A virtual machine request as submitted by a broker.
#[derive(Debug, Clone, PartialEq)]
pub struct VmSpec {
    pub vmid: VmId,
    pub owner: EntityId,
    /// MIPS per virtual PE.
    pub mips: f64,
    pub pes: u32,
    /// MB
    pub ram: u64,
    pub bw: u64,
    /// MB of disk image; also the storage the VM takes on its host.
    pub image_size: u64,
    pub vmm: String,
    pub cloudlet_policy: SchedulingPolicy,
}

impl VmSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let fail = |reason| {
            Err(WorkloadError::InvalidVm {
                vmid: self.vmid,
                reason,
            })
        };
        if !(self.mips.is_finite() && self.mips > 0.0) {
            return fail("mips must be positive");
        }
        if self.pes == 0 {
            return fail("pes must be at least 1");
        }
        if self.ram == 0 {
            return fail("ram must be positive");
        }
        if self.image_size == 0 {
            return fail("image_size must be positive");
        }
        Ok(())
    }

    /// Total MIPS the VM asks of its host.
    pub fn total_mips(&self) -> f64 {
        self.mips * f64::from(self.pes)
    }
}

/// How much of a resource a cloudlet uses over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilizationModel {
    /// Always uses the whole resource.
    #[default]
    Full,
}

impl UtilizationModel {
    pub fn utilization(&self, _time: f64) -> f64 {
        match self {
            UtilizationModel::Full => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloudletSpec {
    pub id: CloudletId,
    /// Total work in million instructions.
    pub length: f64,
    pub pes: u32,
    pub file_size: u64,
    pub output_size: u64,
    pub util_cpu: UtilizationModel,
    pub util_ram: UtilizationModel,
    pub util_bw: UtilizationModel,
    pub user: EntityId,
    pub bound_vm: Option<VmId>,
}

impl CloudletSpec {
    /// A cloudlet with full utilization models and no input or output files.
    pub fn new(id: CloudletId, length: f64, pes: u32) -> Self {
        CloudletSpec {
            id,
            length,
            pes,
            file_size: 0,
            output_size: 0,
            util_cpu: UtilizationModel::Full,
            util_ram: UtilizationModel::Full,
            util_bw: UtilizationModel::Full,
            user: EntityId(0),
            bound_vm: None,
        }
    }

    pub fn bound_to(mut self, vmid: VmId) -> Self {
        self.bound_vm = Some(vmid);
        self
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let fail = |reason| {
            Err(WorkloadError::InvalidCloudlet {
                id: self.id,
                reason,
            })
        };
        if !(self.length.is_finite() && self.length > 0.0) {
            return fail("length must be positive");
        }
        if self.pes == 0 {
            return fail("pes must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CloudletStatus {
    Created,
    Queued,
    #[serde(rename = "INEXEC")]
    InExec,
    Success,
    Failed,
}

impl CloudletStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CloudletStatus::Created => "CREATED",
            CloudletStatus::Queued => "QUEUED",
            CloudletStatus::InExec => "INEXEC",
            CloudletStatus::Success => "SUCCESS",
            CloudletStatus::Failed => "FAILED",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, CloudletStatus::Success | CloudletStatus::Failed)
    }
}

impl fmt::Display for CloudletStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Execution record of one cloudlet.
///
/// Status only moves forward: `Created -> Queued -> InExec -> Success`, with
/// `Queued` optional. `Failed` is reachable from any non-terminal status.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudletState {
    pub spec: CloudletSpec,
    status: CloudletStatus,
    remaining: f64,
    start_time: Option<f64>,
    finish_time: Option<f64>,
    pub datacenter: Option<EntityId>,
    pub vm: Option<VmId>,
}

impl CloudletState {
    pub fn new(spec: CloudletSpec) -> Self {
        let remaining = spec.length;
        CloudletState {
            spec,
            status: CloudletStatus::Created,
            remaining,
            start_time: None,
            finish_time: None,
            datacenter: None,
            vm: None,
        }
    }

    pub fn id(&self) -> CloudletId {
        self.spec.id
    }

    pub fn status(&self) -> CloudletStatus {
        self.status
    }

    /// Work left, in MI.
    pub fn remaining(&self) -> f64 {
        self.remaining
    }

    pub fn start_time(&self) -> Option<f64> {
        self.start_time
    }

    pub fn finish_time(&self) -> Option<f64> {
        self.finish_time
    }

    fn transition(&mut self, to: CloudletStatus) -> Result<(), WorkloadError> {
        use CloudletStatus::*;
        let allowed = match (self.status, to) {
            (Created, Queued) | (Created, InExec) | (Queued, InExec) | (InExec, Success) => true,
            (from, Failed) => !from.is_terminal(),
            _ => false,
        };
        if !allowed {
            return Err(WorkloadError::IllegalTransition {
                id: self.spec.id,
                from: self.status,
                to,
            });
        }
        self.status = to;
        Ok(())
    }

    pub fn enqueue(&mut self) -> Result<(), WorkloadError> {
        self.transition(CloudletStatus::Queued)
    }

    pub fn start(&mut self, now: f64) -> Result<(), WorkloadError> {
        self.transition(CloudletStatus::InExec)?;
        self.start_time = Some(now);
        Ok(())
    }

    pub fn fail(&mut self) -> Result<(), WorkloadError> {
        self.transition(CloudletStatus::Failed)
    }

    /// Runs the cloudlet for `dt` seconds at `rate` MIPS, ending at clock `now`.
    ///
    /// Completes the cloudlet when the leftover work is within
    /// [`COMPLETION_TOLERANCE_MI`] or too small to move the clock at all.
    pub fn advance(&mut self, dt: f64, rate: f64, now: f64) -> Result<(), WorkloadError> {
        if self.status != CloudletStatus::InExec {
            return Err(WorkloadError::IllegalTransition {
                id: self.spec.id,
                from: self.status,
                to: CloudletStatus::InExec,
            });
        }
        if dt < 0.0 || rate < 0.0 {
            return Err(WorkloadError::NegativeProgress { id: self.spec.id });
        }
        self.remaining = (self.remaining - rate * dt).max(0.0);
        let negligible = rate > 0.0 && now + self.remaining / rate <= now;
        if self.remaining <= COMPLETION_TOLERANCE_MI || negligible {
            self.remaining = 0.0;
            self.finish_time = Some(now);
            self.transition(CloudletStatus::Success)?;
        }
        Ok(())
    }

    /// Wall time between start and finish of a successful cloudlet.
    pub fn execution_time(&self) -> Result<f64, WorkloadError> {
        match (self.status, self.start_time, self.finish_time) {
            (CloudletStatus::Success, Some(start), Some(finish)) => Ok(finish - start),
            _ => Err(WorkloadError::NotFinished { id: self.spec.id }),
        }
    }
}
