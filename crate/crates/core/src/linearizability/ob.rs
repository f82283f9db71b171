//! Checks that real-time order between operations is backed by a chain of
//! causality in the run.

use std::collections::HashMap;

use serde::Serialize;

use super::{History, Operation};
use crate::causality::{Node, ObGraph};
use crate::runtime::{extract_history, Run, RunError};
use crate::tso::{OpCall, ProcId, Ret, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ObCheck {
    /// `X <_r Y`, Y isolated, different values: `X.s ⇝ Y.e`.
    RegisterChain,
    /// Update before scan: `U.s ⇝ S.e`.
    UpdateScanChain,
    /// Update before scan: the scan's entry is at least as recent as the update.
    UpdateScanTag,
    /// Scan before update: `S.s ⇝ U.e`.
    ScanUpdateChain,
    /// Scan before update: the scan's entry is older than the update.
    ScanUpdateTag,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ObViolation {
    pub check: ObCheck,
    pub first: usize,
    pub second: usize,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ObReport {
    /// Number of operation pairs the checks applied to.
    pub checked: usize,
    pub violations: Vec<ObViolation>,
}

impl ObReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// No other operation overlaps `op` in real time.
pub fn isolated(h: &History, op: &Operation) -> bool {
    h.ops
        .iter()
        .filter(|z| z.id != op.id)
        .all(|z| z.precedes(op) || op.precedes(z))
}

/// Rejects histories that write a value twice, or write `reserved`.
fn unique_values(h: &History, reserved: Option<Value>) -> Result<(), RunError> {
    let mut seen: HashMap<Value, usize> = HashMap::new();
    for o in &h.ops {
        let (OpCall::Write(v) | OpCall::Update(v)) = o.call else { continue };
        if Some(v) == reserved {
            return Err(RunError::MalformedHistory(format!(
                "operation {} writes the initial value {v}",
                o.id
            )));
        }
        if let Some(first) = seen.insert(v, o.id) {
            return Err(RunError::MalformedHistory(format!(
                "value {v} is written by operations {first} and {}",
                o.id
            )));
        }
    }
    Ok(())
}

/// For every pair `X <_r Y` of completed register operations with different
/// values and `Y` isolated, whether `X.s ⇝ Y.e`.
///
/// Fails on runs that write a value twice or write the initial value.
pub fn check_register_ob_necessity(r: &Run) -> Result<ObReport, RunError> {
    let h = extract_history(r)?;
    unique_values(&h, r.system.initial_values().first().copied())?;
    let graph = ObGraph::build(r);
    let mut report = ObReport::default();
    for x in h.complete() {
        for y in h.complete() {
            if !x.precedes(y) || !isolated(&h, y) {
                continue;
            }
            let (Some(a), Some(b)) = (x.value(), y.value()) else {
                continue;
            };
            if a == b {
                continue;
            }
            report.checked += 1;
            let (from, to) = (Node::process(x.proc, x.start), Node::process(y.proc, y.end.unwrap()));
            if !graph.ob(from, to) {
                report.violations.push(ObViolation {
                    check: ObCheck::RegisterChain,
                    first: x.id,
                    second: y.id,
                    detail: format!("no chain {from} ⇝ {to}"),
                });
            }
        }
    }
    Ok(report)
}

/// Update tag of a value: values are written once, so each identifies its update.
fn update_tags(h: &History) -> HashMap<Value, (ProcId, u32)> {
    h.ops
        .iter()
        .filter_map(|o| match (&o.call, o.update_seq) {
            (OpCall::Update(v), Some(k)) => Some((*v, (o.proc, k))),
            _ => None,
        })
        .collect()
}

/// Sequence number of the update a scan saw in component `proc`; 0 for ⊥.
/// `None` when the entry cannot be attributed to an update of `proc`.
fn seen_seq(tags: &HashMap<Value, (ProcId, u32)>, scan: &Operation, proc: ProcId) -> Option<u32> {
    let Some(Ret::Vector(vs)) = &scan.ret else { return None };
    match vs.get(proc.index())? {
        None => Some(0),
        Some(v) => match tags.get(v) {
            Some(&(p, k)) if p == proc => Some(k),
            _ => None,
        },
    }
}

/// Causality and tag-order facts every pair of an update and a scan ordered
/// in real time must satisfy.
///
/// Fails on runs that write a value twice.
pub fn check_snapshot_ob(r: &Run) -> Result<ObReport, RunError> {
    let h = extract_history(r)?;
    unique_values(&h, None)?;
    let graph = ObGraph::build(r);
    let tags = update_tags(&h);
    let mut report = ObReport::default();
    let updates: Vec<&Operation> = h.complete().filter(|o| matches!(o.call, OpCall::Update(_))).collect();
    let scans: Vec<&Operation> = h.complete().filter(|o| o.call == OpCall::Scan).collect();
    let fail = |check, first: &Operation, second: &Operation, detail: String| ObViolation {
        check,
        first: first.id,
        second: second.id,
        detail,
    };
    let mut violations = Vec::new();
    for u in &updates {
        let k = u.update_seq.unwrap_or(0);
        for s in &scans {
            if u.precedes(s) {
                report.checked += 1;
                let (from, to) = (Node::process(u.proc, u.start), Node::process(s.proc, s.end.unwrap()));
                if !graph.ob(from, to) {
                    violations.push(fail(ObCheck::UpdateScanChain, u, s, format!("no chain {from} ⇝ {to}")));
                }
                let seen = seen_seq(&tags, s, u.proc);
                if !seen.is_some_and(|q| q >= k) {
                    violations.push(fail(
                        ObCheck::UpdateScanTag,
                        u,
                        s,
                        format!("scan entry for {} has sequence {seen:?}, update has {k}", u.proc),
                    ));
                }
            }
            if s.precedes(u) {
                report.checked += 1;
                let (from, to) = (Node::process(s.proc, s.start), Node::process(u.proc, u.end.unwrap()));
                if !graph.ob(from, to) {
                    violations.push(fail(ObCheck::ScanUpdateChain, s, u, format!("no chain {from} ⇝ {to}")));
                }
                let seen = seen_seq(&tags, s, u.proc);
                if !seen.is_some_and(|q| q < k) {
                    violations.push(fail(
                        ObCheck::ScanUpdateTag,
                        s,
                        u,
                        format!("scan entry for {} has sequence {seen:?}, update has {k}", u.proc),
                    ));
                }
            }
        }
    }
    report.violations = violations;
    Ok(report)
}
