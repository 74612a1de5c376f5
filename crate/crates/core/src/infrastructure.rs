//! Datacenters, hosts and PEs, VM placement, and the datacenter entity's
//! event handling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::{vm_creation_debt, DebtLedger};
use crate::kernel::{Context, EntityId, Message, SimError, SimEvent};
use crate::scheduling::{CloudletScheduler, SchedulingError, SchedulingPolicy, VmScheduler};
use crate::workload::{CloudletSpec, CloudletState, VmId, VmSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfraError {
    #[error("host {host}: {reason}")]
    InvalidHost { host: u32, reason: &'static str },
    #[error("datacenter {0} has no hosts")]
    NoHosts(String),
    #[error("duplicate host id {0}")]
    DuplicateHost(u32),
    #[error("cost rates must be finite and non-negative")]
    InvalidRates,
    #[error("vm {0} is already placed in this datacenter")]
    AlreadyPlaced(VmId),
    #[error("no host can take vm {0}")]
    NoHostFits(VmId),
    #[error("vm {0} is not placed in this datacenter")]
    UnknownVm(VmId),
    #[error(transparent)]
    Scheduling(#[from] SchedulingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeSpec {
    pub id: u32,
    pub mips: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HostSpec {
    pub id: u32,
    pub pes: Vec<PeSpec>,
    pub ram: u64,
    pub bw: u64,
    pub storage: u64,
    pub vm_policy: SchedulingPolicy,
}

impl HostSpec {
    pub fn validate(&self) -> Result<(), InfraError> {
        let fail = |reason| {
            Err(InfraError::InvalidHost {
                host: self.id,
                reason,
            })
        };
        if self.pes.is_empty() {
            return fail("needs at least one PE");
        }
        if self
            .pes
            .iter()
            .any(|pe| !(pe.mips.is_finite() && pe.mips > 0.0))
        {
            return fail("PE mips must be positive");
        }
        if self.ram == 0 || self.bw == 0 || self.storage == 0 {
            return fail("ram, bw and storage must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatacenterCharacteristics {
    pub arch: String,
    pub os: String,
    pub vmm: String,
    /// Hours from UTC.
    pub timezone: f64,
    pub cost_per_sec: f64,
    /// Per MB of VM ram.
    pub cost_per_mem: f64,
    /// Per MB of VM image.
    pub cost_per_storage: f64,
    pub cost_per_bw: f64,
}

impl Default for DatacenterCharacteristics {
    fn default() -> Self {
        DatacenterCharacteristics {
            arch: "x86".into(),
            os: "Linux".into(),
            vmm: "Xen".into(),
            timezone: 10.0,
            cost_per_sec: 3.0,
            cost_per_mem: 0.05,
            cost_per_storage: 0.001,
            cost_per_bw: 0.0,
        }
    }
}

impl DatacenterCharacteristics {
    pub fn validate(&self) -> Result<(), InfraError> {
        let rates = [
            self.cost_per_sec,
            self.cost_per_mem,
            self.cost_per_storage,
            self.cost_per_bw,
        ];
        if rates.iter().all(|r| r.is_finite() && *r >= 0.0) {
            Ok(())
        } else {
            Err(InfraError::InvalidRates)
        }
    }
}

/// A VM running on a host, with its own cloudlet scheduler.
#[derive(Debug, Clone)]
pub struct GuestVm {
    pub spec: VmSpec,
    pub cloudlets: CloudletScheduler,
}

/// A host with live free-resource counters.
#[derive(Debug, Clone)]
pub struct Host {
    spec: HostSpec,
    free_ram: u64,
    free_bw: u64,
    free_storage: u64,
    vm_scheduler: VmScheduler,
    guests: BTreeMap<VmId, GuestVm>,
}

impl Host {
    pub fn new(spec: HostSpec) -> Self {
        let pe_mips = spec.pes.iter().map(|pe| pe.mips).collect();
        Host {
            free_ram: spec.ram,
            free_bw: spec.bw,
            free_storage: spec.storage,
            vm_scheduler: VmScheduler::new(spec.vm_policy, pe_mips),
            guests: BTreeMap::new(),
            spec,
        }
    }

    pub fn spec(&self) -> &HostSpec {
        &self.spec
    }

    pub fn free_ram(&self) -> u64 {
        self.free_ram
    }

    pub fn free_bw(&self) -> u64 {
        self.free_bw
    }

    pub fn free_storage(&self) -> u64 {
        self.free_storage
    }

    pub fn vm_scheduler(&self) -> &VmScheduler {
        &self.vm_scheduler
    }

    pub fn guests(&self) -> impl Iterator<Item = &GuestVm> {
        self.guests.values()
    }

    pub fn guest(&self, vmid: VmId) -> Option<&GuestVm> {
        self.guests.get(&vmid)
    }

    pub fn fits(&self, vm: &VmSpec) -> bool {
        self.free_ram >= vm.ram
            && self.free_bw >= vm.bw
            && self.free_storage >= vm.image_size
            && self.vm_scheduler.can_admit(vm)
    }

    fn place(&mut self, vm: VmSpec) -> Result<(), InfraError> {
        if !self.fits(&vm) {
            return Err(InfraError::NoHostFits(vm.vmid));
        }
        self.vm_scheduler.admit(&vm)?;
        self.free_ram -= vm.ram;
        self.free_bw -= vm.bw;
        self.free_storage -= vm.image_size;
        let cloudlets = CloudletScheduler::new(vm.cloudlet_policy, vm.mips, vm.pes);
        self.guests.insert(
            vm.vmid,
            GuestVm {
                spec: vm,
                cloudlets,
            },
        );
        Ok(())
    }

    fn remove(&mut self, vmid: VmId) -> Result<GuestVm, InfraError> {
        let guest = self
            .guests
            .remove(&vmid)
            .ok_or(InfraError::UnknownVm(vmid))?;
        self.vm_scheduler.release(vmid)?;
        self.free_ram += guest.spec.ram;
        self.free_bw += guest.spec.bw;
        self.free_storage += guest.spec.image_size;
        Ok(guest)
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        let id = self.spec.id;
        let (mut ram, mut bw, mut storage) = (0u64, 0u64, 0u64);
        for g in self.guests.values() {
            ram += g.spec.ram;
            bw += g.spec.bw;
            storage += g.spec.image_size;
            if self.vm_scheduler.grant(g.spec.vmid).is_none() {
                return Err(format!("host {id}: vm {} has no cpu grant", g.spec.vmid));
            }
            g.cloudlets
                .check_invariants()
                .map_err(|e| format!("host {id} vm {}: {e}", g.spec.vmid))?;
        }
        if self.free_ram > self.spec.ram || ram != self.spec.ram - self.free_ram {
            return Err(format!("host {id}: ram accounting is off"));
        }
        if self.free_bw > self.spec.bw || bw != self.spec.bw - self.free_bw {
            return Err(format!("host {id}: bw accounting is off"));
        }
        if self.free_storage > self.spec.storage || storage != self.spec.storage - self.free_storage
        {
            return Err(format!("host {id}: storage accounting is off"));
        }
        if self.vm_scheduler.grants().count() != self.guests.len() {
            return Err(format!("host {id}: cpu grants and guests disagree"));
        }
        self.vm_scheduler
            .check_invariants()
            .map_err(|e| format!("host {id}: {e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProcessingUpdate {
    pub completed: Vec<CloudletState>,
    pub next_event: Option<f64>,
}

/// A resource provider: hosts, their placements, and a debt ledger.
#[derive(Debug, Clone)]
pub struct Datacenter {
    id: EntityId,
    name: String,
    characteristics: DatacenterCharacteristics,
    hosts: Vec<Host>,
    placements: BTreeMap<VmId, usize>,
    ledger: DebtLedger,
    last_update: f64,
    pending_update: Option<f64>,
}

impl Datacenter {
    pub fn new(
        name: impl Into<String>,
        characteristics: DatacenterCharacteristics,
        hosts: Vec<HostSpec>,
    ) -> Result<Self, InfraError> {
        let name = name.into();
        if hosts.is_empty() {
            return Err(InfraError::NoHosts(name));
        }
        characteristics.validate()?;
        let mut seen = std::collections::BTreeSet::new();
        for h in &hosts {
            h.validate()?;
            if !seen.insert(h.id) {
                return Err(InfraError::DuplicateHost(h.id));
            }
        }
        Ok(Datacenter {
            id: EntityId::default(),
            name,
            characteristics,
            hosts: hosts.into_iter().map(Host::new).collect(),
            placements: BTreeMap::new(),
            ledger: DebtLedger::new(),
            last_update: 0.0,
            pending_update: None,
        })
    }

    pub fn id(&self) -> EntityId {
        self.id
    }

    pub(crate) fn set_id(&mut self, id: EntityId) {
        self.id = id;
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn characteristics(&self) -> &DatacenterCharacteristics {
        &self.characteristics
    }

    pub fn hosts(&self) -> &[Host] {
        &self.hosts
    }

    pub fn ledger(&self) -> &DebtLedger {
        &self.ledger
    }

    /// Host id the VM lives on, if placed here.
    pub fn host_of(&self, vmid: VmId) -> Option<u32> {
        self.placements.get(&vmid).map(|&i| self.hosts[i].spec.id)
    }

    pub fn guest(&self, vmid: VmId) -> Option<&GuestVm> {
        self.placements
            .get(&vmid)
            .and_then(|&i| self.hosts[i].guest(vmid))
    }

    fn guest_mut(&mut self, vmid: VmId) -> Option<&mut GuestVm> {
        let i = *self.placements.get(&vmid)?;
        self.hosts[i].guests.get_mut(&vmid)
    }

    /// First-fit placement over hosts in declaration order.
    pub fn allocate_host_for_vm(&mut self, vm: VmSpec) -> Result<u32, InfraError> {
        if self.placements.contains_key(&vm.vmid) {
            return Err(InfraError::AlreadyPlaced(vm.vmid));
        }
        let index = self
            .hosts
            .iter()
            .position(|h| h.fits(&vm))
            .ok_or(InfraError::NoHostFits(vm.vmid))?;
        let vmid = vm.vmid;
        self.hosts[index].place(vm)?;
        self.placements.insert(vmid, index);
        Ok(self.hosts[index].spec.id)
    }

    pub fn deallocate_vm(&mut self, vmid: VmId) -> Result<VmSpec, InfraError> {
        let index = *self
            .placements
            .get(&vmid)
            .ok_or(InfraError::UnknownVm(vmid))?;
        let guest = self.hosts[index].remove(vmid)?;
        self.placements.remove(&vmid);
        Ok(guest.spec)
    }

    /// Advances every running cloudlet to `now`.
    ///
    /// Returns the finished cloudlets and the earliest predicted completion
    /// strictly after `now`, if anything is still running.
    pub fn update_cloudlet_processing(&mut self, now: f64) -> Result<ProcessingUpdate, InfraError> {
        let now = now.max(self.last_update);
        let mut update = ProcessingUpdate::default();
        for host in &mut self.hosts {
            for guest in host.guests.values_mut() {
                let vm_update = guest.cloudlets.update_processing(now)?;
                update.completed.extend(vm_update.completed);
                update.next_event = match (update.next_event, vm_update.next_finish) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
            }
        }
        self.last_update = now;
        Ok(update)
    }

    /// Hands a cloudlet to a placed VM's scheduler. Processing must already
    /// be brought up to `now`.
    pub fn submit_cloudlet(
        &mut self,
        mut cloudlet: CloudletSpec,
        vmid: VmId,
        now: f64,
    ) -> Result<(), InfraError> {
        let guest = self.guest_mut(vmid).ok_or(InfraError::UnknownVm(vmid))?;
        cloudlet.bound_vm = Some(vmid);
        guest.cloudlets.submit(cloudlet, now)?;
        Ok(())
    }

    /// Cross-checks placements against host state.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (vmid, &index) in &self.placements {
            let hosted = self
                .hosts
                .iter()
                .filter(|h| h.guests.contains_key(vmid))
                .count();
            if hosted != 1 || !self.hosts[index].guests.contains_key(vmid) {
                return Err(format!(
                    "{}: vm {vmid} placement is inconsistent",
                    self.name
                ));
            }
        }
        let guests: usize = self.hosts.iter().map(|h| h.guests.len()).sum();
        if guests != self.placements.len() {
            return Err(format!("{}: unregistered guests on hosts", self.name));
        }
        for host in &self.hosts {
            host.check_invariants()
                .map_err(|e| format!("{}: {e}", self.name))?;
        }
        if self.ledger.iter().any(|(_, d)| d < 0.0) {
            return Err(format!("{}: negative debt", self.name));
        }
        Ok(())
    }

    fn send_completions(&self, completed: Vec<CloudletState>, ctx: &mut Context<'_>) {
        for mut c in completed {
            c.datacenter = Some(self.id);
            c.vm = c.vm.or(c.spec.bound_vm);
            let owner = c.spec.user;
            ctx.send(owner, Message::CloudletReturn(c));
        }
    }

    fn schedule_update(
        &mut self,
        next: Option<f64>,
        ctx: &mut Context<'_>,
    ) -> Result<(), SimError> {
        if let Some(t) = next {
            if self.pending_update.is_none_or(|p| t < p) {
                ctx.send_at(t, self.id, Message::VmUpdate)?;
                self.pending_update = Some(t);
            }
        }
        Ok(())
    }

    fn process(&mut self, ctx: &mut Context<'_>) -> Result<(), SimError> {
        let update = self.update_cloudlet_processing(ctx.now())?;
        self.send_completions(update.completed, ctx);
        Ok(())
    }

    pub(crate) fn handle(
        &mut self,
        event: &SimEvent,
        ctx: &mut Context<'_>,
    ) -> Result<(), SimError> {
        match &event.message {
            Message::VmCreate(vm) => {
                self.process(ctx)?;
                let created = match self.allocate_host_for_vm(vm.clone()) {
                    Ok(_) => {
                        self.ledger
                            .charge(vm.owner, vm_creation_debt(vm, &self.characteristics));
                        true
                    }
                    Err(InfraError::NoHostFits(_)) => false,
                    Err(e) => return Err(e.into()),
                };
                ctx.send(
                    event.src,
                    Message::VmCreateAck {
                        vmid: vm.vmid,
                        created,
                    },
                );
            }
            Message::CloudletSubmit { cloudlet, vmid } => {
                self.process(ctx)?;
                if let Err(e) = self.submit_cloudlet(cloudlet.clone(), *vmid, ctx.now()) {
                    match e {
                        InfraError::UnknownVm(_)
                        | InfraError::Scheduling(SchedulingError::TooManyPes { .. })
                        | InfraError::Scheduling(SchedulingError::DuplicateCloudlet(_)) => {
                            let mut failed = CloudletState::new(cloudlet.clone());
                            failed.vm = Some(*vmid);
                            failed.fail().expect("a fresh cloudlet can always fail");
                            self.send_completions(vec![failed], ctx);
                        }
                        other => return Err(other.into()),
                    }
                }
                // Zero-length step: picks up rate changes and instant completions.
                let update = self.update_cloudlet_processing(ctx.now())?;
                self.send_completions(update.completed, ctx);
                self.schedule_update(update.next_event, ctx)?;
            }
            Message::VmUpdate => {
                if self.pending_update == Some(ctx.now()) {
                    self.pending_update = None;
                }
                let update = self.update_cloudlet_processing(ctx.now())?;
                self.send_completions(update.completed, ctx);
                self.schedule_update(update.next_event, ctx)?;
            }
            Message::EndSimulation => {
                self.process(ctx)?;
                let owned: Vec<VmId> = self
                    .placements
                    .keys()
                    .copied()
                    .filter(|&vmid| self.guest(vmid).is_some_and(|g| g.spec.owner == event.src))
                    .collect();
                for vmid in owned {
                    self.deallocate_vm(vmid)?;
                }
            }
            Message::VmCreateAck { .. } | Message::CloudletReturn(_) => {}
        }
        Ok(())
    }
}
