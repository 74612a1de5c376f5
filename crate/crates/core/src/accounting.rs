//! Per-user debt owed to a datacenter.
//!
//! A user is charged once, when one of its VMs is created, for the VM's memory
//! and image storage. CPU time and bandwidth rates are carried in the
//! characteristics but do not contribute.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::infrastructure::DatacenterCharacteristics;
use crate::kernel::EntityId;
use crate::report::format_number;
use crate::workload::VmSpec;

/// Charge for creating `vm` at a datacenter with the given rates.
pub fn vm_creation_debt(vm: &VmSpec, rates: &DatacenterCharacteristics) -> f64 {
    rates.cost_per_mem * vm.ram as f64 + rates.cost_per_storage * vm.image_size as f64
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DebtLedger {
    entries: BTreeMap<EntityId, f64>,
}

impl DebtLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, user: EntityId, amount: f64) {
        *self.entries.entry(user).or_insert(0.0) += amount;
    }

    pub fn debt(&self, user: EntityId) -> Option<f64> {
        self.entries.get(&user).copied()
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Users in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (EntityId, f64)> + '_ {
        self.entries.iter().map(|(u, d)| (*u, *d))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The debt block printed for one datacenter at the end of a run.
pub fn print_debts(datacenter_name: &str, ledger: &DebtLedger) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "*****PowerDatacenter: {datacenter_name}*****");
    out.push_str("User id\tDebt\n");
    for (user, debt) in ledger.iter() {
        let _ = writeln!(out, "{user}\t{}", format_number(debt));
    }
    out
}
