//! Discrete-event engine: entity registry, virtual clock and future event
//! queue.
//!
//! Events are delivered in `(time, seq)` order, where `seq` is a global
//! insertion counter, so simultaneous events come out FIFO and every run of
//! the same scenario is reproducible.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::broker::{Broker, BrokerError};
use crate::infrastructure::{Datacenter, InfraError};
use crate::report::{DatacenterDebts, ReportRow, RunReport};
use crate::workload::{CloudletSpec, CloudletState, VmId, VmSpec};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct EntityId(pub u32);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Reserved for the simulation manager.
pub const SIMULATION_MANAGER: EntityId = EntityId(0);
/// Reserved for the information service that knows every datacenter.
pub const INFORMATION_SERVICE: EntityId = EntityId(1);
/// Id handed to the first user-registered entity.
pub const FIRST_USER_ENTITY: EntityId = EntityId(2);

#[derive(Debug, Error)]
pub enum SimError {
    #[error("num_users must be at least 1")]
    NoUsers,
    #[error("entities cannot be registered after the simulation has started")]
    AlreadyStarted,
    #[error("the simulation has already run")]
    AlreadyRun,
    #[error("at least one datacenter is required to run a simulation")]
    NoDatacenter,
    #[error("cannot schedule an event at t={time} when the clock is at t={now}")]
    PastEvent { time: f64, now: f64 },
    #[error("no entity with id {0}")]
    UnknownEntity(EntityId),
    #[error("entity {0} is not a broker")]
    NotABroker(EntityId),
    #[error("internal invariant violated after event #{seq} at t={time}: {detail}")]
    InvariantBreach { seq: u64, time: f64, detail: String },
    #[error(transparent)]
    Infrastructure(#[from] InfraError),
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error("trace output failed: {0}")]
    Trace(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub num_users: u32,
    /// Informational only; simulation time always starts at 0.
    pub start_timestamp: Option<String>,
    pub trace: bool,
}

impl SimulationConfig {
    pub fn new(num_users: u32) -> Self {
        SimulationConfig {
            num_users,
            start_timestamp: None,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventTag {
    VmCreate,
    VmCreateAck,
    CloudletSubmit,
    CloudletReturn,
    VmUpdate,
    EndSimulation,
}

impl fmt::Display for EventTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventTag::VmCreate => "VM_CREATE",
            EventTag::VmCreateAck => "VM_CREATE_ACK",
            EventTag::CloudletSubmit => "CLOUDLET_SUBMIT",
            EventTag::CloudletReturn => "CLOUDLET_RETURN",
            EventTag::VmUpdate => "VM_UPDATE",
            EventTag::EndSimulation => "END_SIMULATION",
        })
    }
}

/// An event's tag together with its payload.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    VmCreate(VmSpec),
    VmCreateAck { vmid: VmId, created: bool },
    CloudletSubmit { cloudlet: CloudletSpec, vmid: VmId },
    CloudletReturn(CloudletState),
    VmUpdate,
    EndSimulation,
}

impl Message {
    pub fn tag(&self) -> EventTag {
        match self {
            Message::VmCreate(_) => EventTag::VmCreate,
            Message::VmCreateAck { .. } => EventTag::VmCreateAck,
            Message::CloudletSubmit { .. } => EventTag::CloudletSubmit,
            Message::CloudletReturn(_) => EventTag::CloudletReturn,
            Message::VmUpdate => EventTag::VmUpdate,
            Message::EndSimulation => EventTag::EndSimulation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub seq: u64,
    pub src: EntityId,
    pub dst: EntityId,
    pub message: Message,
}

impl SimEvent {
    pub fn tag(&self) -> EventTag {
        self.message.tag()
    }
}

// Reversed so that `BinaryHeap` pops the earliest `(time, seq)` first.
struct Queued(SimEvent);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .time
            .total_cmp(&self.0.time)
            .then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}

/// Future event list ordered by `(time, seq)`.
#[derive(Default)]
pub struct EventQueue {
    heap: BinaryHeap<Queued>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Enqueues a message and returns the sequence number it was given.
    pub fn push(&mut self, time: f64, src: EntityId, dst: EntityId, message: Message) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Queued(SimEvent {
            time,
            seq,
            src,
            dst,
            message,
        }));
        seq
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop().map(|q| q.0)
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|q| q.0.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// What an entity sees while handling an event.
pub struct Context<'a> {
    now: f64,
    me: EntityId,
    queue: &'a mut EventQueue,
}

impl<'a> Context<'a> {
    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn me(&self) -> EntityId {
        self.me
    }

    /// Sends a message that arrives at the current time.
    pub fn send(&mut self, dst: EntityId, message: Message) {
        self.queue.push(self.now, self.me, dst, message);
    }

    pub fn send_at(&mut self, time: f64, dst: EntityId, message: Message) -> Result<(), SimError> {
        if time < self.now {
            return Err(SimError::PastEvent {
                time,
                now: self.now,
            });
        }
        self.queue.push(time, self.me, dst, message);
        Ok(())
    }
}

pub enum Entity {
    /// Kernel-owned placeholder occupying a reserved id.
    Internal(&'static str),
    Datacenter(Datacenter),
    Broker(Broker),
}

impl Entity {
    pub fn name(&self) -> &str {
        match self {
            Entity::Internal(name) => name,
            Entity::Datacenter(dc) => dc.name(),
            Entity::Broker(b) => b.name(),
        }
    }

    fn assign_id(&mut self, id: EntityId) {
        match self {
            Entity::Internal(_) => {}
            Entity::Datacenter(dc) => dc.set_id(id),
            Entity::Broker(b) => b.set_id(id),
        }
    }
}

impl From<Datacenter> for Entity {
    fn from(dc: Datacenter) -> Self {
        Entity::Datacenter(dc)
    }
}

impl From<Broker> for Entity {
    fn from(b: Broker) -> Self {
        Entity::Broker(b)
    }
}

type Observer<'o> = &'o mut dyn FnMut(&SimEvent, &Kernel);

pub struct Kernel {
    config: SimulationConfig,
    clock: f64,
    queue: EventQueue,
    entities: Vec<Entity>,
    started: bool,
    finished: bool,
    delivered: u64,
    trace: Option<Box<dyn Write + Send>>,
}

impl Kernel {
    pub fn init(config: SimulationConfig) -> Result<Kernel, SimError> {
        if config.num_users == 0 {
            return Err(SimError::NoUsers);
        }
        let trace: Option<Box<dyn Write + Send>> = if config.trace {
            Some(Box::new(std::io::stderr()))
        } else {
            None
        };
        Ok(Kernel {
            config,
            clock: 0.0,
            queue: EventQueue::new(),
            entities: vec![
                Entity::Internal("SimulationManager"),
                Entity::Internal("InformationService"),
            ],
            started: false,
            finished: false,
            delivered: 0,
            trace,
        })
    }

    /// Redirects the event trace, enabling it if the config did not.
    pub fn set_trace_sink(&mut self, sink: Box<dyn Write + Send>) {
        self.trace = Some(sink);
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn now(&self) -> f64 {
        self.clock
    }

    pub fn next_id(&self) -> EntityId {
        EntityId(self.entities.len() as u32)
    }

    pub fn delivered_events(&self) -> u64 {
        self.delivered
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    pub fn register_entity(&mut self, entity: impl Into<Entity>) -> Result<EntityId, SimError> {
        if self.started {
            return Err(SimError::AlreadyStarted);
        }
        let id = self.next_id();
        let mut entity = entity.into();
        entity.assign_id(id);
        self.entities.push(entity);
        Ok(id)
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities.get(id.0 as usize)
    }

    /// Mutable access to a broker, for submitting its VM and cloudlet lists.
    pub fn broker_mut(&mut self, id: EntityId) -> Result<&mut Broker, SimError> {
        if self.started {
            return Err(SimError::AlreadyStarted);
        }
        match self.entities.get_mut(id.0 as usize) {
            Some(Entity::Broker(b)) => Ok(b),
            Some(_) => Err(SimError::NotABroker(id)),
            None => Err(SimError::UnknownEntity(id)),
        }
    }

    pub fn datacenters(&self) -> impl Iterator<Item = &Datacenter> {
        self.entities.iter().filter_map(|e| match e {
            Entity::Datacenter(dc) => Some(dc),
            _ => None,
        })
    }

    pub fn brokers(&self) -> impl Iterator<Item = &Broker> {
        self.entities.iter().filter_map(|e| match e {
            Entity::Broker(b) => Some(b),
            _ => None,
        })
    }

    pub fn schedule(
        &mut self,
        time: f64,
        src: EntityId,
        dst: EntityId,
        message: Message,
    ) -> Result<u64, SimError> {
        if time.is_nan() || time < self.clock {
            return Err(SimError::PastEvent {
                time,
                now: self.clock,
            });
        }
        Ok(self.queue.push(time, src, dst, message))
    }

    pub fn run(&mut self) -> Result<RunReport, SimError> {
        self.run_observed(&mut |_, _| {})
    }

    /// Runs to completion, calling `observer` after each delivered event.
    pub fn run_observed(&mut self, observer: Observer<'_>) -> Result<RunReport, SimError> {
        if self.finished {
            return Err(SimError::AlreadyRun);
        }
        let datacenter_ids: Vec<EntityId> = self.datacenters().map(Datacenter::id).collect();
        if datacenter_ids.is_empty() {
            return Err(SimError::NoDatacenter);
        }
        self.started = true;

        for entity in &mut self.entities {
            if let Entity::Broker(broker) = entity {
                let mut ctx = Context {
                    now: self.clock,
                    me: broker.id(),
                    queue: &mut self.queue,
                };
                broker.start(&datacenter_ids, &mut ctx)?;
            }
        }

        while let Some(event) = self.queue.pop() {
            debug_assert!(event.time >= self.clock);
            self.clock = event.time;
            self.delivered += 1;
            if let Some(trace) = self.trace.as_mut() {
                writeln!(
                    trace,
                    "t={} {}->{} {}",
                    event.time,
                    event.src,
                    event.dst,
                    event.tag()
                )?;
            }
            let mut ctx = Context {
                now: self.clock,
                me: event.dst,
                queue: &mut self.queue,
            };
            match self.entities.get_mut(event.dst.0 as usize) {
                Some(Entity::Datacenter(dc)) => {
                    dc.handle(&event, &mut ctx)?;
                    dc.check_invariants()
                        .map_err(|detail| SimError::InvariantBreach {
                            seq: event.seq,
                            time: event.time,
                            detail,
                        })?;
                }
                Some(Entity::Broker(broker)) => broker.handle(&event, &mut ctx)?,
                Some(Entity::Internal(_)) | None => {
                    return Err(SimError::UnknownEntity(event.dst));
                }
            }
            observer(&event, self);
        }
        if let Some(trace) = self.trace.as_mut() {
            trace.flush()?;
        }
        self.finished = true;
        Ok(self.report())
    }

    fn report(&self) -> RunReport {
        let mut rows: Vec<ReportRow> = self
            .brokers()
            .flat_map(|b| b.collect_results())
            .map(|c| ReportRow::from_state(&c))
            .collect();
        rows.sort_by(ReportRow::report_order);
        let debts = self
            .datacenters()
            .map(|dc| DatacenterDebts {
                datacenter: dc.id(),
                name: dc.name().to_string(),
                ledger: dc.ledger().clone(),
            })
            .collect();
        RunReport {
            rows,
            debts,
            final_clock: self.clock,
            start_timestamp: self.config.start_timestamp.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infrastructure::{DatacenterCharacteristics, HostSpec, PeSpec};
    use crate::scheduling::SchedulingPolicy;

    fn datacenter(name: &str) -> Datacenter {
        let host = HostSpec {
            id: 0,
            pes: vec![PeSpec {
                id: 0,
                mips: 1000.0,
            }],
            ram: 2048,
            bw: 10_000,
            storage: 1_000_000,
            vm_policy: SchedulingPolicy::TimeShared,
        };
        Datacenter::new(name, DatacenterCharacteristics::default(), vec![host]).unwrap()
    }

    #[test]
    fn init_reserves_internal_ids() {
        let k = Kernel::init(SimulationConfig::new(1)).unwrap();
        assert_eq!(k.now(), 0.0);
        assert_eq!(k.next_id(), FIRST_USER_ENTITY);
        assert_eq!(k.pending_events(), 0);
        assert_eq!(
            k.entity(SIMULATION_MANAGER).unwrap().name(),
            "SimulationManager"
        );
        assert_eq!(
            k.entity(INFORMATION_SERVICE).unwrap().name(),
            "InformationService"
        );
    }

    #[test]
    fn init_rejects_zero_users() {
        assert!(matches!(
            Kernel::init(SimulationConfig::new(0)),
            Err(SimError::NoUsers)
        ));
    }

    #[test]
    fn registration_ids_are_sequential() {
        let mut k = Kernel::init(SimulationConfig::new(1)).unwrap();
        assert_eq!(
            k.register_entity(datacenter("Datacenter_0")).unwrap(),
            EntityId(2)
        );
        assert_eq!(
            k.register_entity(Broker::new("Broker")).unwrap(),
            EntityId(3)
        );
        assert_eq!(k.datacenters().next().unwrap().id(), EntityId(2));
        assert_eq!(k.brokers().next().unwrap().id(), EntityId(3));
    }

    #[test]
    fn registration_after_start_is_rejected() {
        let mut k = Kernel::init(SimulationConfig::new(1)).unwrap();
        k.register_entity(datacenter("dc")).unwrap();
        k.run().unwrap();
        assert!(matches!(
            k.register_entity(Broker::new("late")),
            Err(SimError::AlreadyStarted)
        ));
        assert!(matches!(k.run(), Err(SimError::AlreadyRun)));
    }

    #[test]
    fn run_without_datacenter_fails() {
        let mut k = Kernel::init(SimulationConfig::new(1)).unwrap();
        k.register_entity(Broker::new("Broker")).unwrap();
        assert!(matches!(k.run(), Err(SimError::NoDatacenter)));
    }

    #[test]
    fn empty_workload_runs_to_clock_zero() {
        let mut k = Kernel::init(SimulationConfig::new(1)).unwrap();
        k.register_entity(datacenter("dc")).unwrap();
        k.register_entity(Broker::new("Broker")).unwrap();
        let report = k.run().unwrap();
        assert!(report.rows.is_empty());
        assert_eq!(report.final_clock, 0.0);
    }

    #[test]
    fn queue_orders_by_time_then_insertion() {
        let mut q = EventQueue::new();
        let a = EntityId(2);
        q.push(5.0, a, a, Message::VmUpdate);
        q.push(1.0, a, a, Message::EndSimulation);
        q.push(1.0, a, a, Message::VmUpdate);
        q.push(0.0, a, a, Message::VmUpdate);
        let order: Vec<(f64, u64)> = std::iter::from_fn(|| q.pop())
            .map(|e| (e.time, e.seq))
            .collect();
        assert_eq!(order, vec![(0.0, 3), (1.0, 1), (1.0, 2), (5.0, 0)]);
    }

    #[test]
    fn scheduling_into_the_past_is_rejected() {
        let mut k = Kernel::init(SimulationConfig::new(1)).unwrap();
        let id = k.register_entity(datacenter("dc")).unwrap();
        assert!(k.schedule(0.0, id, id, Message::VmUpdate).is_ok());
        assert!(matches!(
            k.schedule(-1.0, id, id, Message::VmUpdate),
            Err(SimError::PastEvent { .. })
        ));
        assert!(k.schedule(f64::NAN, id, id, Message::VmUpdate).is_err());
    }

    #[test]
    fn context_rejects_past_sends() {
        let mut q = EventQueue::new();
        let mut ctx = Context {
            now: 10.0,
            me: EntityId(2),
            queue: &mut q,
        };
        assert!(ctx.send_at(9.0, EntityId(2), Message::VmUpdate).is_err());
        ctx.send_at(10.0, EntityId(2), Message::VmUpdate).unwrap();
        ctx.send(EntityId(3), Message::EndSimulation);
        assert_eq!(q.len(), 2);
        assert_eq!(q.peek_time(), Some(10.0));
    }

    #[test]
    fn events_to_internal_entities_are_errors() {
        let mut k = Kernel::init(SimulationConfig::new(1)).unwrap();
        let dc = k.register_entity(datacenter("dc")).unwrap();
        k.schedule(1.0, dc, SIMULATION_MANAGER, Message::EndSimulation)
            .unwrap();
        assert!(matches!(k.run(), Err(SimError::UnknownEntity(EntityId(0)))));
    }

    #[test]
    fn broker_mut_checks_kind() {
        let mut k = Kernel::init(SimulationConfig::new(1)).unwrap();
        let dc = k.register_entity(datacenter("dc")).unwrap();
        assert!(matches!(k.broker_mut(dc), Err(SimError::NotABroker(_))));
        assert!(matches!(
            k.broker_mut(EntityId(9)),
            Err(SimError::UnknownEntity(_))
        ));
    }
}
