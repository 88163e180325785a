//! Byte-level audit of what reached the coordinator.

use std::collections::BTreeMap;

use fedmerdel_core::CategoricalDataset;
use serde_json::Value;

use crate::coordinator::InboundFrame;
use crate::message::MessageKind;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub frames: usize,
    pub bytes: usize,
    /// batch_summary frames per node.
    pub summaries_per_node: BTreeMap<String, usize>,
    /// Kinds other than batch_summary and entropy_reply.
    pub unexpected_kinds: Vec<MessageKind>,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn clean(&self) -> bool {
        self.violations.is_empty() && self.unexpected_kinds.is_empty()
    }
}

fn numeric_leaves(v: &Value, arrays: &mut Vec<usize>) -> usize {
    match v {
        Value::Number(_) => 1,
        Value::Array(xs) => {
            arrays.push(xs.len());
            xs.iter().map(|x| numeric_leaves(x, arrays)).sum()
        }
        Value::Object(m) => m.values().map(|x| numeric_leaves(x, arrays)).sum(),
        _ => 0,
    }
}

/// Flags any frame that contains a data row rendered as CSV or as a JSON
/// array, an array as long as some batch (a per-observation vector), or as
/// many numbers as the smallest batch has rows.
pub fn audit_inbound(frames: &[InboundFrame], batches: &[&CategoricalDataset]) -> AuditReport {
    let mut report = AuditReport::default();
    let min_rows = batches.iter().map(|d| d.n_rows()).min().unwrap_or(usize::MAX);
    let row_lens: Vec<usize> = batches.iter().map(|d| d.n_rows()).collect();
    let mut patterns: Vec<String> = Vec::new();
    for d in batches {
        for n in 0..d.n_rows() {
            let row: Vec<String> = d.row(n).iter().map(|v| v.to_string()).collect();
            patterns.push(row.join(","));
        }
    }
    patterns.sort();
    patterns.dedup();
    for f in frames {
        report.frames += 1;
        report.bytes += f.bytes.len();
        match f.kind {
            MessageKind::BatchSummary => *report.summaries_per_node.entry(f.node.clone()).or_default() += 1,
            MessageKind::EntropyReply => {}
            other => report.unexpected_kinds.push(other),
        }
        let text = String::from_utf8_lossy(&f.bytes);
        let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        for p in &patterns {
            if compact.contains(&format!("[{p}]")) || (p.len() > 8 && text.contains(p.as_str())) {
                report.violations.push(format!("{}: contains data row {p}", f.node));
                break;
            }
        }
        match serde_json::from_slice::<Value>(&f.bytes) {
            Ok(v) => {
                let mut arrays = Vec::new();
                let leaves = numeric_leaves(&v, &mut arrays);
                if leaves >= min_rows {
                    report
                        .violations
                        .push(format!("{}: {leaves} numbers, at least one per observation", f.node));
                }
                if let Some(len) = arrays.iter().find(|l| row_lens.contains(l)) {
                    report.violations.push(format!("{}: array of length {len} matches a batch size", f.node));
                }
            }
            Err(e) => report.violations.push(format!("{}: unparseable frame ({e})", f.node)),
        }
    }
    report
}
