//! Run results and their text renderings.

use std::cmp::Ordering;
use std::fmt::Write;

use crate::accounting::{print_debts, DebtLedger};
use crate::kernel::EntityId;
use crate::workload::{CloudletId, CloudletState, CloudletStatus, VmId};

pub const TABLE_BANNER: &str = "===== OUTPUT =====";
pub const TABLE_COLUMNS: [&str; 7] = [
    "Cloudlet ID",
    "STATUS",
    "Data center ID",
    "VM ID",
    "Time",
    "Start Time",
    "Finish Time",
];
pub const CSV_HEADER: &str = "cloudlet_id,status,datacenter_id,vm_id,time,start_time,finish_time";

const COLUMN_GAP: &str = "    ";

/// Formats with at most two decimals, dropping trailing zeros and a
/// trailing decimal point: `400.0 -> "400"`, `35.60 -> "35.6"`.
pub fn format_number(value: f64) -> String {
    let s = format!("{value:.2}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        &s
    };
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub cloudlet_id: CloudletId,
    pub status: CloudletStatus,
    pub datacenter_id: Option<EntityId>,
    pub vm_id: Option<VmId>,
    pub time: Option<f64>,
    pub start_time: Option<f64>,
    pub finish_time: Option<f64>,
}

impl ReportRow {
    pub fn from_state(state: &CloudletState) -> Self {
        ReportRow {
            cloudlet_id: state.id(),
            status: state.status(),
            datacenter_id: state.datacenter,
            vm_id: state.vm,
            time: state.execution_time().ok(),
            start_time: state.start_time(),
            finish_time: state.finish_time(),
        }
    }

    /// Finished rows by (finish time, id); rows without a finish time last, by id.
    pub fn report_order(a: &ReportRow, b: &ReportRow) -> Ordering {
        match (a.finish_time, b.finish_time) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        }
        .then(a.cloudlet_id.cmp(&b.cloudlet_id))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatacenterDebts {
    pub datacenter: EntityId,
    pub name: String,
    pub ledger: DebtLedger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
    pub debts: Vec<DatacenterDebts>,
    pub final_clock: f64,
    pub start_timestamp: Option<String>,
}

impl RunReport {
    pub fn row(&self, cloudlet_id: CloudletId) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.cloudlet_id == cloudlet_id)
    }

    pub fn total_debt(&self) -> f64 {
        self.debts.iter().map(|d| d.ledger.total()).sum()
    }
}

fn table_cell<T: ToString>(value: Option<T>) -> String {
    value.map_or_else(|| "-".to_string(), |v| v.to_string())
}

pub fn render_table(report: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(TABLE_BANNER);
    out.push('\n');
    out.push_str(&TABLE_COLUMNS.join(COLUMN_GAP));
    out.push('\n');
    for row in &report.rows {
        let cells = [
            row.cloudlet_id.to_string(),
            row.status.to_string(),
            table_cell(row.datacenter_id),
            table_cell(row.vm_id),
            table_cell(row.time.map(format_number)),
            table_cell(row.start_time.map(format_number)),
            table_cell(row.finish_time.map(format_number)),
        ];
        out.push_str(&cells.join(COLUMN_GAP));
        out.push('\n');
    }
    for dc in &report.debts {
        out.push_str(&print_debts(&dc.name, &dc.ledger));
    }
    out
}

fn csv_cell<T: ToString>(value: Option<T>) -> String {
    value.map_or_else(String::new, |v| v.to_string())
}

/// CSV with full-precision numbers; fields a failed row lacks are empty.
pub fn render_csv(report: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.cloudlet_id,
            row.status,
            csv_cell(row.datacenter_id),
            csv_cell(row.vm_id),
            csv_cell(row.time),
            csv_cell(row.start_time),
            csv_cell(row.finish_time),
        );
    }
    out
}

/// Collapses every run of whitespace, newlines included, to one space.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
