//! Independent checking of recorded runs.

use std::fmt;

use serde::Serialize;

use super::{joint_apply_unchecked, GlobalState, Protocol, Run};
use crate::tso::{conflicts, AgentId, Event, EventKind, StepError, Tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ViolationKind {
    /// The run does not start in the initial state.
    Initial,
    /// Structural problems: lengths, agent kinds, undeclared operands.
    Shape,
    /// A process action outside the protocol's candidates.
    Protocol,
    /// An action whose precondition fails at the start of its round.
    Enabledness,
    /// Two events of one round conflict.
    Conflict,
    /// A recorded event differs from what the action produces.
    Event,
    /// A recorded state differs from the one the round produces.
    State,
    /// Props out of FIFO order with respect to writes.
    Tag,
    /// An invocation delivered while an operation is pending.
    Invoke,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Round number (1-based), when the violation belongs to a round.
    pub round: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.round {
            Some(m) => write!(f, "round {m}: {:?}: {}", self.kind, self.detail),
            None => write!(f, "{:?}: {}", self.kind, self.detail),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    fn push(&mut self, kind: ViolationKind, round: Option<usize>, detail: String) {
        self.violations.push(Violation { kind, round, detail });
    }
}

/// Lists every way in which `r` fails to be a run (of `protocol`, when given).
pub fn validate_run(r: &Run, protocol: Option<&dyn Protocol>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let system = &r.system;
    let n = system.procs();
    if r.states.len() != r.rounds.len() + 1 {
        report.push(
            ViolationKind::Shape,
            None,
            format!("{} states for {} rounds", r.states.len(), r.rounds.len()),
        );
        return report;
    }
    if r.states[0] != GlobalState::initial(system) {
        report.push(ViolationKind::Initial, None, "state at time 0 is not initial".into());
    }
    for (t, round) in r.rounds.iter().enumerate() {
        let m = t + 1;
        let g = &r.states[t];
        let joint = &round.joint;
        if joint.procs.len() != n || joint.props.len() != n || round.events.len() != 2 * n {
            report.push(
                ViolationKind::Shape,
                Some(m),
                "joint action or event list has the wrong length".into(),
            );
            continue;
        }
        let mut malformed = false;
        for agent in AgentId::all(n) {
            let action = joint.action_of(agent);
            if action.is_null() {
                continue;
            }
            match g.tso.apply(system, agent, &action, 1) {
                Ok(_) => {}
                Err(StepError::NotEnabled { .. }) => report.push(
                    ViolationKind::Enabledness,
                    Some(m),
                    format!("{agent} performs {action:?} while it is disabled"),
                ),
                Err(e) => {
                    malformed = true;
                    report.push(ViolationKind::Shape, Some(m), format!("{agent}: {e}"));
                }
            }
            if let (AgentId::Process(p), Some(protocol)) = (agent, protocol) {
                if !protocol.permits(p, g.local(p), &action) {
                    report.push(
                        ViolationKind::Protocol,
                        Some(m),
                        format!("{p} performs {action:?}, not a candidate of {}", protocol.name()),
                    );
                }
            }
        }
        for inv in &joint.invokes {
            if inv.proc.0 == 0 || inv.proc.index() >= n {
                malformed = true;
                report.push(
                    ViolationKind::Shape,
                    Some(m),
                    format!("invoke for unknown {}", inv.proc),
                );
            } else if g.pending[inv.proc.index()].is_some() {
                report.push(
                    ViolationKind::Invoke,
                    Some(m),
                    format!("invoke delivered to {} while an operation is pending", inv.proc),
                );
            }
        }
        for a in 0..2 * n {
            for b in a + 1..2 * n {
                let first = Event {
                    agent: AgentId::from_index(a, n),
                    kind: round.events[a].clone(),
                };
                let second = Event {
                    agent: AgentId::from_index(b, n),
                    kind: round.events[b].clone(),
                };
                if conflicts(&first, &second) {
                    report.push(
                        ViolationKind::Conflict,
                        Some(m),
                        format!(
                            "{} {:?} conflicts with {} {:?}",
                            first.agent, first.kind, second.agent, second.kind
                        ),
                    );
                }
            }
        }
        if malformed {
            continue;
        }
        let (next, events) = joint_apply_unchecked(g, joint);
        for (k, (want, got)) in events.iter().zip(&round.events).enumerate() {
            if want != got {
                report.push(
                    ViolationKind::Event,
                    Some(m),
                    format!("{} recorded {got:?}, action yields {want:?}", AgentId::from_index(k, n)),
                );
            }
        }
        if next != r.states[m] {
            report.push(
                ViolationKind::State,
                Some(m),
                "recorded state differs from the round's result".into(),
            );
        }
    }
    check_fifo(r, &mut report);
    report
}

/// Each dispatcher must propagate its process's write tags in issue order.
fn check_fifo(r: &Run, report: &mut ValidationReport) {
    let n = r.procs();
    for k in 0..n {
        let mut writes: Vec<Tag> = Vec::new();
        let mut props = 0usize;
        for (t, round) in r.rounds.iter().enumerate() {
            if let Some(EventKind::Write { tag, .. }) = round.events.get(k) {
                writes.push(*tag);
            }
            if let Some(EventKind::Prop { tag, .. }) = round.events.get(n + k) {
                if writes.get(props) != Some(tag) {
                    report.push(
                        ViolationKind::Tag,
                        Some(t + 1),
                        format!("d{} propagates {tag}, expected {:?}", k + 1, writes.get(props)),
                    );
                }
                props += 1;
            }
        }
    }
}
