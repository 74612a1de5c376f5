//! The user-side entity. A broker asks datacenters for its VMs, waits for
//! every creation ack, then dispatches its cloudlets and collects them back.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::kernel::{Context, EntityId, Message, SimError, SimEvent};
use crate::workload::{CloudletId, CloudletSpec, CloudletState, CloudletStatus, VmId, VmSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrokerError {
    #[error("vm id {0} submitted twice")]
    DuplicateVm(VmId),
    #[error("cloudlet id {0} submitted twice")]
    DuplicateCloudlet(CloudletId),
    #[error("lists cannot be submitted after the simulation has started")]
    AlreadyStarted,
    #[error("unexpected ack for vm {0}")]
    UnexpectedAck(VmId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BindError {
    /// The cloudlet names a VM that was never created.
    BoundVmUnavailable(VmId),
    NoVmsCreated,
}

#[derive(Debug, Clone)]
pub struct Broker {
    id: EntityId,
    name: String,
    vms: Vec<VmSpec>,
    cloudlets: Vec<CloudletSpec>,
    datacenters: Vec<EntityId>,
    /// Index into `datacenters` of the current creation attempt per VM.
    attempts: BTreeMap<VmId, usize>,
    vm_created: BTreeMap<VmId, EntityId>,
    vm_failed: BTreeSet<VmId>,
    pending_acks: usize,
    started: bool,
    dispatched: BTreeSet<CloudletId>,
    received: Vec<CloudletState>,
    undispatched: Vec<CloudletState>,
    round_robin: usize,
}

impl Broker {
    pub fn new(name: impl Into<String>) -> Self {
        Broker {
            id: EntityId::default(),
            name: name.into(),
            vms: Vec::new(),
            cloudlets: Vec::new(),
            datacenters: Vec::new(),
            attempts: BTreeMap::new(),
            vm_created: BTreeMap::new(),
            vm_failed: BTreeSet::new(),
            pending_acks: 0,
            started: false,
            dispatched: BTreeSet::new(),
            received: Vec::new(),
            undispatched: Vec::new(),
            round_robin: 0,
        }
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

    pub fn vm_list(&self) -> &[VmSpec] {
        &self.vms
    }

    pub fn cloudlet_list(&self) -> &[CloudletSpec] {
        &self.cloudlets
    }

    /// Datacenter each successfully created VM lives in.
    pub fn vm_created(&self) -> &BTreeMap<VmId, EntityId> {
        &self.vm_created
    }

    pub fn dispatched(&self) -> &BTreeSet<CloudletId> {
        &self.dispatched
    }

    pub fn received(&self) -> &[CloudletState] {
        &self.received
    }

    /// Stores the VMs, taking ownership of them on behalf of this broker.
    pub fn submit_vm_list(&mut self, vms: Vec<VmSpec>) -> Result<(), BrokerError> {
        if self.started {
            return Err(BrokerError::AlreadyStarted);
        }
        let mut ids: BTreeSet<VmId> = self.vms.iter().map(|v| v.vmid).collect();
        for vm in &vms {
            if !ids.insert(vm.vmid) {
                return Err(BrokerError::DuplicateVm(vm.vmid));
            }
        }
        let owner = self.id;
        self.vms
            .extend(vms.into_iter().map(|vm| VmSpec { owner, ..vm }));
        Ok(())
    }

    pub fn submit_cloudlet_list(
        &mut self,
        cloudlets: Vec<CloudletSpec>,
    ) -> Result<(), BrokerError> {
        if self.started {
            return Err(BrokerError::AlreadyStarted);
        }
        let mut ids: BTreeSet<CloudletId> = self.cloudlets.iter().map(|c| c.id).collect();
        for c in &cloudlets {
            if !ids.insert(c.id) {
                return Err(BrokerError::DuplicateCloudlet(c.id));
            }
        }
        let user = self.id;
        self.cloudlets
            .extend(cloudlets.into_iter().map(|c| CloudletSpec { user, ..c }));
        Ok(())
    }

    /// Picks the VM a cloudlet runs on: its explicit binding when that VM
    /// exists, otherwise the created VMs in id order, round-robin.
    pub fn bind_or_assign(&mut self, cloudlet: &CloudletSpec) -> Result<VmId, BindError> {
        if let Some(vmid) = cloudlet.bound_vm {
            return if self.vm_created.contains_key(&vmid) {
                Ok(vmid)
            } else {
                Err(BindError::BoundVmUnavailable(vmid))
            };
        }
        if self.vm_created.is_empty() {
            return Err(BindError::NoVmsCreated);
        }
        let index = self.round_robin % self.vm_created.len();
        self.round_robin += 1;
        Ok(*self
            .vm_created
            .keys()
            .nth(index)
            .expect("index within bounds"))
    }

    pub(crate) fn start(
        &mut self,
        datacenters: &[EntityId],
        ctx: &mut Context<'_>,
    ) -> Result<(), SimError> {
        self.started = true;
        self.datacenters = datacenters.to_vec();
        let first = self.datacenters[0];
        for vm in &self.vms {
            self.attempts.insert(vm.vmid, 0);
            ctx.send(first, Message::VmCreate(vm.clone()));
        }
        self.pending_acks = self.vms.len();
        if self.pending_acks == 0 {
            self.dispatch_cloudlets(ctx);
        }
        Ok(())
    }

    fn dispatch_cloudlets(&mut self, ctx: &mut Context<'_>) {
        let cloudlets = self.cloudlets.clone();
        for cloudlet in cloudlets {
            match self.bind_or_assign(&cloudlet) {
                Ok(vmid) => {
                    let vm_pes = self
                        .vms
                        .iter()
                        .find(|v| v.vmid == vmid)
                        .map_or(0, |v| v.pes);
                    if cloudlet.pes > vm_pes {
                        self.reject(cloudlet, Some(vmid));
                        continue;
                    }
                    let datacenter = self.vm_created[&vmid];
                    self.dispatched.insert(cloudlet.id);
                    ctx.send(datacenter, Message::CloudletSubmit { cloudlet, vmid });
                }
                Err(BindError::BoundVmUnavailable(vmid)) => self.reject(cloudlet, Some(vmid)),
                Err(BindError::NoVmsCreated) => self.reject(cloudlet, None),
            }
        }
        self.finish_if_done(ctx);
    }

    fn reject(&mut self, cloudlet: CloudletSpec, vmid: Option<VmId>) {
        let mut state = CloudletState::new(cloudlet);
        state.vm = vmid;
        state.fail().expect("a fresh cloudlet can always fail");
        self.undispatched.push(state);
    }

    /// Once every dispatched cloudlet is back, tells each datacenter hosting
    /// our VMs that we are done so it can release them.
    fn finish_if_done(&mut self, ctx: &mut Context<'_>) {
        if self.received.len() < self.dispatched.len() {
            return;
        }
        let used: BTreeSet<EntityId> = self.vm_created.values().copied().collect();
        for datacenter in used {
            ctx.send(datacenter, Message::EndSimulation);
        }
    }

    pub(crate) fn handle(
        &mut self,
        event: &SimEvent,
        ctx: &mut Context<'_>,
    ) -> Result<(), SimError> {
        match &event.message {
            Message::VmCreateAck { vmid, created } => {
                let attempt = *self
                    .attempts
                    .get(vmid)
                    .ok_or(BrokerError::UnexpectedAck(*vmid))?;
                if *created {
                    self.vm_created.insert(*vmid, event.src);
                } else if let Some(&next) = self.datacenters.get(attempt + 1) {
                    self.attempts.insert(*vmid, attempt + 1);
                    let vm = self.vms.iter().find(|v| v.vmid == *vmid).cloned();
                    ctx.send(next, Message::VmCreate(vm.expect("ack for a known vm")));
                    return Ok(());
                } else {
                    self.vm_failed.insert(*vmid);
                }
                self.pending_acks -= 1;
                if self.pending_acks == 0 {
                    self.dispatch_cloudlets(ctx);
                }
            }
            Message::CloudletReturn(state) => {
                self.received.push(state.clone());
                self.finish_if_done(ctx);
            }
            _ => {}
        }
        Ok(())
    }

    /// Every submitted cloudlet exactly once: finished ones ordered by
    /// finish time then id, followed by failures ordered by id.
    pub fn collect_results(&self) -> Vec<CloudletState> {
        let mut done: Vec<CloudletState> = self
            .received
            .iter()
            .filter(|c| c.status() == CloudletStatus::Success)
            .cloned()
            .collect();
        done.sort_by(|a, b| {
            a.finish_time()
                .unwrap_or(f64::INFINITY)
                .total_cmp(&b.finish_time().unwrap_or(f64::INFINITY))
                .then(a.id().cmp(&b.id()))
        });
        let mut failed: Vec<CloudletState> = self
            .received
            .iter()
            .filter(|c| c.status() != CloudletStatus::Success)
            .chain(&self.undispatched)
            .cloned()
            .collect();
        failed.sort_by_key(CloudletState::id);
        done.extend(failed);
        done
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduling::SchedulingPolicy;

    fn vm(vmid: VmId) -> VmSpec {
        VmSpec {
            vmid,
            owner: EntityId(0),
            mips: 1000.0,
            pes: 1,
            ram: 512,
            bw: 1000,
            image_size: 10_000,
            vmm: "Xen".into(),
            cloudlet_policy: SchedulingPolicy::TimeShared,
        }
    }

    fn broker() -> Broker {
        let mut b = Broker::new("Broker");
        b.set_id(EntityId(3));
        b
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut b = broker();
        assert_eq!(
            b.submit_vm_list(vec![vm(0), vm(0)]),
            Err(BrokerError::DuplicateVm(0))
        );
        b.submit_vm_list(vec![vm(0)]).unwrap();
        assert_eq!(
            b.submit_vm_list(vec![vm(0)]),
            Err(BrokerError::DuplicateVm(0))
        );
        assert_eq!(b.vm_list()[0].owner, EntityId(3));
        let c = CloudletSpec::new(0, 1.0, 1);
        assert_eq!(
            b.submit_cloudlet_list(vec![c.clone(), c]),
            Err(BrokerError::DuplicateCloudlet(0))
        );
        b.submit_cloudlet_list(vec![]).unwrap();
        assert!(b.cloudlet_list().is_empty());
    }

    #[test]
    fn binding_and_round_robin() {
        let mut b = broker();
        b.vm_created.insert(1, EntityId(2));
        b.vm_created.insert(0, EntityId(2));
        assert_eq!(
            b.bind_or_assign(&CloudletSpec::new(0, 1.0, 1).bound_to(0)),
            Ok(0)
        );
        assert_eq!(b.bind_or_assign(&CloudletSpec::new(1, 1.0, 1)), Ok(0));
        assert_eq!(b.bind_or_assign(&CloudletSpec::new(2, 1.0, 1)), Ok(1));
        assert_eq!(b.bind_or_assign(&CloudletSpec::new(3, 1.0, 1)), Ok(0));
        assert_eq!(
            b.bind_or_assign(&CloudletSpec::new(4, 1.0, 1).bound_to(9)),
            Err(BindError::BoundVmUnavailable(9))
        );
    }

    #[test]
    fn no_vms_means_no_assignment() {
        let mut b = broker();
        assert_eq!(
            b.bind_or_assign(&CloudletSpec::new(0, 1.0, 1)),
            Err(BindError::NoVmsCreated)
        );
    }

    #[test]
    fn empty_broker_collects_nothing() {
        assert!(broker().collect_results().is_empty());
    }
}
