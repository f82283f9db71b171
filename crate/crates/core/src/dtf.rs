//! Delaying the future.
//!
//! Given a run `r`, a set of nodes `S` and a delay `Δ`, [`dtf_transform`]
//! builds a run in which every agent `b` behaves as in `r` up to its
//! threshold `m̂_b` (the first time of `b` outside the past-plus of `S`), idles
//! for `Δ` rounds, and then replays the rest of its actions. Round `m` of `r`
//! becomes round `shift(m, m̂_b, Δ)`.
//!
//! [`verify_dtf`] checks the result without reusing the transform's
//! bookkeeping, and [`check_appendix_claims`] checks the intermediate claims
//! of the construction.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::causality::{CausalityError, Node, ObGraph};
use crate::fixtures;
use crate::linearizability::Operation;
use crate::runtime::{extract_history, validate_run, JointAction, LocalRecord, Run, RunError, ViolationKind};
use crate::tso::{Action, AgentId, EventKind, ProcId, Provenance, Tag};

/// `t` if `t ≤ k`, otherwise `t + delta`.
pub fn shift(t: usize, k: usize, delta: usize) -> usize {
    if t <= k {
        t
    } else {
        t + delta
    }
}

/// The round of `r` that lands on round `mp` of the transformed run, if any.
fn source_round(mp: usize, k: usize, delta: usize, horizon: usize) -> Option<usize> {
    let m = if mp <= k {
        mp
    } else if mp > k + delta {
        mp - delta
    } else {
        return None;
    };
    (1..=horizon).contains(&m).then_some(m)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DtfError {
    #[error("every node of {agent} up to the horizon lies in the past of S; extend the run first")]
    HorizonExhausted { agent: AgentId },
    #[error("replay diverged in round {round} at {agent:?}: {detail}")]
    InternalReplayDivergence {
        round: usize,
        agent: Option<AgentId>,
        detail: String,
    },
    #[error(transparent)]
    Causality(#[from] CausalityError),
    #[error("operation contains a feedback loop through {0}")]
    FeedbackLoopPresent(Node),
    #[error("precondition violated: {0}")]
    PreconditionViolated(Precondition),
    #[error(transparent)]
    Run(#[from] RunError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Precondition {
    /// The operation has not returned.
    Incomplete,
    /// The tag is not written by the operation's process during the operation.
    TagNotWritten(Tag),
    /// The operation contains a fence.
    Fence,
    /// The operation contains an RMW.
    Rmw,
    /// The operation contains a feedback loop.
    Feedback(Node),
    /// The operation does not run solo.
    NotSolo,
    /// Another operation overlaps this one.
    NotIsolated,
    /// The operation does not occur in the run.
    UnknownOperation,
}

impl std::fmt::Display for Precondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Precondition::Incomplete => f.write_str("operation is incomplete"),
            Precondition::TagNotWritten(tag) => write!(f, "tag {tag} is not written during the operation"),
            Precondition::Fence => f.write_str("operation contains a fence"),
            Precondition::Rmw => f.write_str("operation contains an RMW"),
            Precondition::Feedback(node) => write!(f, "operation contains a feedback loop through {node}"),
            Precondition::NotSolo => f.write_str("operation does not run solo"),
            Precondition::NotIsolated => f.write_str("operation does not run in isolation"),
            Precondition::UnknownOperation => f.write_str("operation does not occur in the run"),
        }
    }
}

/// Thresholds of a transform instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ShiftParams {
    pub set: BTreeSet<Node>,
    pub delta: usize,
    /// `m̂_b` indexed by [`AgentId::index`].
    pub m_hat: Vec<usize>,
}

impl ShiftParams {
    pub fn compute(r: &Run, graph: &ObGraph, set: &BTreeSet<Node>, delta: usize) -> Result<Self, DtfError> {
        let _ = r;
        Ok(ShiftParams {
            set: set.clone(),
            delta,
            m_hat: graph.m_hat_all(set)?,
        })
    }

    pub fn m_hat_of(&self, agent: AgentId, procs: usize) -> usize {
        self.m_hat[agent.index(procs)]
    }

    /// Round of the transformed run carrying round `m` of agent `agent`.
    pub fn round(&self, agent: AgentId, procs: usize, m: usize) -> usize {
        shift(m, self.m_hat_of(agent, procs), self.delta)
    }

    /// Node of the transformed run performing the action of `node`.
    pub fn action_node(&self, node: Node, procs: usize) -> Node {
        Node::new(node.agent, self.round(node.agent, procs, node.time + 1) - 1)
    }
}

/// Delays every node outside the past-plus of `set` by `delta` rounds.
pub fn dtf_transform(r: &Run, set: &BTreeSet<Node>, delta: usize) -> Result<Run, DtfError> {
    let graph = ObGraph::build(r);
    let params = ShiftParams::compute(r, &graph, set, delta)?;
    if delta == 0 {
        return Ok(r.clone());
    }
    let n = r.procs();
    let horizon = r.horizon();
    if let Some(a) = params.m_hat.iter().position(|&m| m > horizon) {
        return Err(DtfError::HorizonExhausted {
            agent: AgentId::from_index(a, n),
        });
    }
    let mut out = Run::new(r.system.clone(), r.protocol.clone(), r.seed);
    for mp in 1..=horizon + delta {
        let g = out.final_state().clone();
        let mut joint = JointAction::idle(n);
        let divergence = |agent: AgentId, detail: String| DtfError::InternalReplayDivergence {
            round: mp,
            agent: Some(agent),
            detail,
        };
        for k in 0..n {
            let p = ProcId::from_index(k);
            let agent = AgentId::Process(p);
            let Some(m) = source_round(mp, params.m_hat[k], delta, horizon) else {
                continue;
            };
            let source = &r.rounds[m - 1].joint;
            let action = &source.procs[k];
            if !action.is_null() {
                if g.locals[k] != r.states[m - 1].locals[k] {
                    return Err(divergence(
                        agent,
                        format!("local state differs from time {} of the source", m - 1),
                    ));
                }
                if !g.tso.enabled(agent, action) {
                    return Err(divergence(agent, format!("{action:?} is not enabled")));
                }
                joint.procs[k] = action.clone();
            }
            if let Some(call) = source.invoke_for(p) {
                joint.invokes.push(crate::runtime::Invocation {
                    proc: p,
                    call: call.clone(),
                });
            }
        }
        for k in 0..n {
            let agent = AgentId::Dispatcher(ProcId::from_index(k));
            let Some(m) = source_round(mp, params.m_hat[n + k], delta, horizon) else {
                continue;
            };
            if r.rounds[m - 1].joint.props[k] {
                if g.tso.buffers[k].is_empty() {
                    return Err(divergence(agent, "buffer is empty".into()));
                }
                joint.props[k] = true;
            }
        }
        out.push(joint).map_err(|e| DtfError::InternalReplayDivergence {
            round: mp,
            agent: None,
            detail: e.to_string(),
        })?;
    }
    Ok(out)
}

/// Like [`dtf_transform`], padding `r` with idle rounds when some agent's
/// timeline lies entirely inside the past-plus of `set`.
pub fn dtf_transform_padded(r: &Run, set: &BTreeSet<Node>, delta: usize) -> Result<Run, DtfError> {
    match dtf_transform(r, set, delta) {
        Err(DtfError::HorizonExhausted { .. }) => dtf_transform(&r.pad(1), set, delta),
        other => other,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum DtfViolationKind {
    Horizon,
    /// Per-agent action sequences differ.
    ActionOrder,
    /// An action does not occur at its shifted round, or a gap round is not null.
    Timing,
    /// A read or prop observed a different tag.
    Tag,
    /// Local states do not match under the shift.
    LocalState,
    /// The transformed run is not a valid run.
    Validity,
    /// The transformed run contains conflicting events in one round.
    Conflict,
    /// The two runs are not locally equivalent.
    Equivalence,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DtfViolation {
    pub kind: DtfViolationKind,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DtfReport {
    pub violations: Vec<DtfViolation>,
}

impl DtfReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: DtfViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    fn push(&mut self, kind: DtfViolationKind, detail: String) {
        self.violations.push(DtfViolation { kind, detail });
    }
}

fn same_observation(a: &EventKind, b: &EventKind) -> bool {
    if a == b {
        return true;
    }
    let read = |e: &EventKind| match e {
        EventKind::ReadBuffer { var, value, tag } => Some((*var, *value, Provenance::Written(*tag))),
        EventKind::ReadMemory { var, value, source } => Some((*var, *value, *source)),
        _ => None,
    };
    matches!((read(a), read(b)), (Some(x), Some(y)) if x == y)
}

/// Checks that `rp` is the delayed version of `r` for `set` and `delta`.
pub fn verify_dtf(r: &Run, rp: &Run, set: &BTreeSet<Node>, delta: usize) -> DtfReport {
    let mut report = DtfReport::default();
    let n = r.procs();
    let horizon = r.horizon();
    if rp.procs() != n || rp.system != r.system {
        report.push(DtfViolationKind::Horizon, "runs are over different systems".into());
        return report;
    }
    let expected_horizon = if delta == 0 { horizon } else { horizon + delta };
    if rp.horizon() != expected_horizon {
        report.push(
            DtfViolationKind::Horizon,
            format!("horizon {} instead of {expected_horizon}", rp.horizon()),
        );
        return report;
    }
    let graph = ObGraph::build(r);
    let m_hat = match graph.m_hat_all(set) {
        Ok(m) => m,
        Err(e) => {
            report.push(DtfViolationKind::Horizon, e.to_string());
            return report;
        }
    };
    let past_plus = graph.past_plus(set).expect("nodes checked above");

    for agent in AgentId::all(n) {
        let a = agent.index(n);
        let acts = |run: &Run| -> Vec<(usize, Action)> {
            run.rounds
                .iter()
                .enumerate()
                .map(|(t, round)| (t + 1, round.joint.action_of(agent)))
                .filter(|(_, act)| !act.is_null())
                .collect()
        };
        let (left, right) = (acts(r), acts(rp));
        let seq = |v: &[(usize, Action)]| v.iter().map(|(_, a)| a.clone()).collect::<Vec<_>>();
        if seq(&left) != seq(&right) {
            report.push(
                DtfViolationKind::ActionOrder,
                format!("{agent} performs a different action sequence"),
            );
        }
        let mut image = BTreeSet::new();
        for (m, act) in &left {
            let mp = shift(*m, m_hat[a], delta);
            image.insert(mp);
            let got = rp.rounds.get(mp - 1).map(|round| round.joint.action_of(agent));
            if got.as_ref() != Some(act) {
                report.push(
                    DtfViolationKind::Timing,
                    format!("{agent}: {act:?} of round {m} not found in round {mp}"),
                );
                continue;
            }
            let (e, ep) = (&r.rounds[m - 1].events[a], &rp.rounds[mp - 1].events[a]);
            if !same_observation(e, ep) {
                report.push(
                    DtfViolationKind::Tag,
                    format!("{agent}: round {m} yields {e:?}, round {mp} yields {ep:?}"),
                );
            }
        }
        for (mp, act) in &right {
            if !image.contains(mp) {
                report.push(
                    DtfViolationKind::Timing,
                    format!("{agent} performs {act:?} in round {mp}, which has no counterpart"),
                );
            }
        }
        if let AgentId::Process(p) = agent {
            let invokes = |run: &Run| -> Vec<(usize, crate::tso::OpCall)> {
                run.rounds
                    .iter()
                    .enumerate()
                    .filter_map(|(t, round)| round.joint.invoke_for(p).map(|c| (t + 1, c.clone())))
                    .collect()
            };
            let shifted: Vec<_> = invokes(r)
                .into_iter()
                .map(|(m, c)| (shift(m, m_hat[a], delta), c))
                .collect();
            if shifted != invokes(rp) {
                report.push(
                    DtfViolationKind::Timing,
                    format!("invocations of {p} are not shifted consistently"),
                );
            }
            for m in 0..=horizon {
                let mp = shift(m, m_hat[a], delta);
                if r.local(p, m) != rp.local(p, mp) {
                    report.push(
                        DtfViolationKind::LocalState,
                        format!("{p}: state at {m} differs from state at {mp}"),
                    );
                }
                let node = Node::process(p, m);
                let tp = if past_plus.contains(&node) { m } else { m + delta };
                if tp <= rp.horizon() && r.local(p, m) != rp.local(p, tp) {
                    report.push(
                        DtfViolationKind::LocalState,
                        format!("{p}: state at {m} differs from state at {tp} (past-plus form)"),
                    );
                }
            }
        }
    }

    let protocol = fixtures::resolve_for(&rp.protocol, &rp.system);
    let validation = validate_run(rp, protocol.as_deref());
    for v in &validation.violations {
        let kind = if v.kind == ViolationKind::Conflict {
            DtfViolationKind::Conflict
        } else {
            DtfViolationKind::Validity
        };
        report.push(kind, v.to_string());
    }
    let eq = local_equivalence(r, rp);
    if !eq.equivalent {
        report.push(DtfViolationKind::Equivalence, format!("{:?}", eq.divergences.first()));
    }
    report
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub proc: ProcId,
    /// Index into the record list, or the length of a local state that appears in one run only.
    pub position: usize,
    pub left: Option<LocalRecord>,
    pub right: Option<LocalRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EquivalenceReport {
    pub equivalent: bool,
    pub divergences: Vec<Divergence>,
}

/// Whether every process passes through the same local states in both runs.
///
/// Reads are recorded by variable and value only, so a read served by the
/// buffer in one run and by memory in the other compares equal.
pub fn local_equivalence(r1: &Run, r2: &Run) -> EquivalenceReport {
    let mut divergences = Vec::new();
    let n = r1.procs().max(r2.procs());
    for k in 0..n {
        let p = ProcId::from_index(k);
        let records =
            |r: &Run| -> Vec<LocalRecord> { r.final_state().locals.get(k).map(|l| l.0.clone()).unwrap_or_default() };
        let (a, b) = (records(r1), records(r2));
        if let Some(pos) = (0..a.len().max(b.len())).find(|&i| a.get(i) != b.get(i)) {
            divergences.push(Divergence {
                proc: p,
                position: pos,
                left: a.get(pos).cloned(),
                right: b.get(pos).cloned(),
            });
            continue;
        }
        let lengths = |r: &Run| -> BTreeSet<usize> {
            r.states
                .iter()
                .filter_map(|g| g.locals.get(k).map(|l| l.len()))
                .collect()
        };
        let (la, lb) = (lengths(r1), lengths(r2));
        if let Some(&len) = la.symmetric_difference(&lb).next() {
            divergences.push(Divergence {
                proc: p,
                position: len,
                left: None,
                right: None,
            });
        }
    }
    EquivalenceReport {
        equivalent: divergences.is_empty(),
        divergences,
    }
}

/// Outcome of checking one intermediate claim of the construction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClaimCheck {
    pub name: &'static str,
    pub checked: usize,
    pub violations: Vec<String>,
}

impl ClaimCheck {
    fn new(name: &'static str) -> Self {
        ClaimCheck {
            name,
            checked: 0,
            violations: Vec::new(),
        }
    }

    fn assert(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.violations.push(detail());
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClaimsReport {
    /// Base edges keep their order after shifting.
    pub order: ClaimCheck,
    /// Shifted node times are nonnegative.
    pub nonnegative: ClaimCheck,
    /// Occurs-before is preserved in both directions, nodes mapped by `shift(t, m̂_b)`.
    pub ob_preservation: ClaimCheck,
    /// Same, nodes mapped to the node performing the same action.
    pub ob_preservation_action_nodes: ClaimCheck,
    /// A tag is propagated in round `m` iff it is propagated in the shifted round.
    pub propagation: ClaimCheck,
    /// Fences and RMWs find an empty buffer in the transformed run.
    pub sync_buffer: ClaimCheck,
    /// RMWs find their expected value in memory in the transformed run.
    pub rmw_memory: ClaimCheck,
    /// Reads observe the same tag.
    pub read_tags: ClaimCheck,
}

impl ClaimsReport {
    pub fn all(&self) -> [&ClaimCheck; 8] {
        [
            &self.order,
            &self.nonnegative,
            &self.ob_preservation,
            &self.ob_preservation_action_nodes,
            &self.propagation,
            &self.sync_buffer,
            &self.rmw_memory,
            &self.read_tags,
        ]
    }
}

/// Checks the construction's intermediate claims on a concrete instance.
pub fn check_appendix_claims(r: &Run, rp: &Run, set: &BTreeSet<Node>, delta: usize) -> Result<ClaimsReport, DtfError> {
    let n = r.procs();
    let horizon = r.horizon();
    let graph = ObGraph::build(r);
    let params = ShiftParams::compute(r, &graph, set, delta)?;
    let m_hat = |agent: AgentId| params.m_hat_of(agent, n);
    let mut report = ClaimsReport {
        order: ClaimCheck::new("order preservation"),
        nonnegative: ClaimCheck::new("non-negativity"),
        ob_preservation: ClaimCheck::new("ob preservation"),
        ob_preservation_action_nodes: ClaimCheck::new("ob preservation (action nodes)"),
        propagation: ClaimCheck::new("propagation correspondence"),
        sync_buffer: ClaimCheck::new("F/RMW empty buffer"),
        rmw_memory: ClaimCheck::new("RMW memory value"),
        read_tags: ClaimCheck::new("read-tag preservation"),
    };

    for e in graph.edges() {
        let a = shift(e.from.time + 1, m_hat(e.from.agent), delta);
        let b = shift(e.to.time + 1, m_hat(e.to.agent), delta);
        report
            .order
            .assert(a < b, || format!("{e}: shifted rounds {a} and {b}"));
    }
    for node in graph.nodes() {
        let s = shift(node.time + 1, m_hat(node.agent), delta) as i64 - 1;
        report.nonnegative.assert(s >= 0, || format!("{node} maps to {s}"));
    }

    let graph_p = ObGraph::build(rp);
    let literal = |node: Node| Node::new(node.agent, shift(node.time, m_hat(node.agent), delta));
    let action = |node: Node| params.action_node(node, n);
    for u in graph.nodes() {
        for v in graph.nodes() {
            let before = graph.ob(u, v);
            let (lu, lv) = (literal(u), literal(v));
            report.ob_preservation.assert(before == graph_p.ob(lu, lv), || {
                format!("{u} -> {v} is {before} in r, {lu} -> {lv} is {} in r'", !before)
            });
            let (au, av) = (action(u), action(v));
            report
                .ob_preservation_action_nodes
                .assert(before == graph_p.ob(au, av), || {
                    format!("{u} -> {v} is {before} in r, {au} -> {av} is {} in r'", !before)
                });
        }
    }

    let event_p = |agent: AgentId, round: usize| rp.rounds.get(round - 1).map(|rd| &rd.events[agent.index(n)]);
    for k in 0..n {
        let p = ProcId::from_index(k);
        let d = AgentId::Dispatcher(p);
        let mut image = BTreeMap::new();
        for m in 1..=horizon {
            let mp = shift(m, m_hat(d), delta);
            image.insert(mp, m);
            let here = match &r.rounds[m - 1].events[n + k] {
                EventKind::Prop { tag, .. } => Some(*tag),
                _ => None,
            };
            let there = match event_p(d, mp) {
                Some(EventKind::Prop { tag, .. }) => Some(*tag),
                _ => None,
            };
            report.propagation.assert(here == there, || {
                format!("{d}: round {m} props {here:?}, round {mp} props {there:?}")
            });
        }
        for (t, round) in rp.rounds.iter().enumerate() {
            if round.events[n + k].is_prop() {
                report.propagation.assert(image.contains_key(&(t + 1)), || {
                    format!("{d} props in round {} of r' with no source", t + 1)
                });
            }
        }

        let proc = AgentId::Process(p);
        for m in 1..=horizon {
            let mp = shift(m, m_hat(proc), delta);
            let before = &rp.states[mp - 1].tso;
            match &r.rounds[m - 1].events[k] {
                EventKind::Fence => {
                    report.sync_buffer.assert(before.buffer(p).is_empty(), || {
                        format!("{p}: buffer nonempty before round {mp}")
                    });
                }
                EventKind::Rmw { var, expected, .. } => {
                    report.sync_buffer.assert(before.buffer(p).is_empty(), || {
                        format!("{p}: buffer nonempty before round {mp}")
                    });
                    let v = before.cell(*var).value;
                    report.rmw_memory.assert(v == *expected, || {
                        format!("{p}: memory holds {v} before round {mp}, RMW expects {expected}")
                    });
                }
                e @ (EventKind::ReadBuffer { .. } | EventKind::ReadMemory { .. }) => {
                    let ep = event_p(proc, mp);
                    report
                        .read_tags
                        .assert(ep.is_some_and(|ep| same_observation(e, ep)), || {
                            format!("{p}: round {m} reads {e:?}, round {mp} yields {ep:?}")
                        });
                }
                _ => {}
            }
        }
    }
    Ok(report)
}

/// The outcome of a construction that moves an operation: the new run and
/// the operation's occurrence in it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Relocated {
    pub run: Run,
    pub op: Operation,
}

fn ordinal(r: &Run, op: &Operation) -> Result<usize, DtfError> {
    let history = extract_history(r)?;
    history
        .ops
        .iter()
        .filter(|o| o.proc == op.proc)
        .position(|o| o.start == op.start && o.call == op.call)
        .ok_or(DtfError::PreconditionViolated(Precondition::UnknownOperation))
}

fn find_by_ordinal(r: &Run, proc: ProcId, ordinal: usize) -> Result<Operation, DtfError> {
    extract_history(r)?
        .ops
        .into_iter()
        .filter(|o| o.proc == proc)
        .nth(ordinal)
        .ok_or(DtfError::PreconditionViolated(Precondition::UnknownOperation))
}

/// Whether only `i` and `d_i` act in rounds `start + 1 ..= end`.
pub fn runs_solo(r: &Run, op: &Operation) -> bool {
    let Some(end) = op.end else { return false };
    let n = r.procs();
    (op.start + 1..=end.min(r.horizon())).all(|m| {
        r.rounds[m - 1]
            .events
            .iter()
            .enumerate()
            .all(|(a, e)| e.is_null() || AgentId::from_index(a, n).proc() == op.proc)
    })
}

/// Builds a locally equivalent run in which `op` runs solo.
pub fn solo_transform(r: &Run, op: &Operation) -> Result<Relocated, DtfError> {
    let end = op.end.ok_or(DtfError::PreconditionViolated(Precondition::Incomplete))?;
    let ord = ordinal(r, op)?;
    let (i, t1, t2) = (op.proc, op.start, end);
    let graph = ObGraph::build(r);
    if let Some(node) = graph.feedback_loop(Node::process(i, t1), Node::process(i, t2))? {
        return Err(DtfError::FeedbackLoopPresent(node));
    }
    let n = r.procs();
    let mut seeds = BTreeSet::from([Node::process(i, t2)]);
    if t1 >= 1 {
        seeds.extend(AgentId::all(n).map(|b| Node::new(b, t1 - 1)));
    }
    let s1 = graph.past_plus(&seeds)?;
    let delta = t2 - t1 + 1;
    let first = dtf_transform_padded(r, &s1, delta)?;
    let s2: BTreeSet<Node> = s1
        .into_iter()
        .filter(|node| node.agent.proc() != i || node.time + 1 < t1)
        .collect();
    let second = dtf_transform_padded(&first, &s2, delta)?;
    let op = find_by_ordinal(&second, i, ord)?;
    Ok(Relocated { run: second, op })
}

/// Node times at which `agent` performs an event matching `pred` during `op`.
fn during(r: &Run, op: &Operation, end: usize, pred: impl Fn(&EventKind) -> bool) -> Option<usize> {
    (op.start..end).find(|&t| r.event(AgentId::Process(op.proc), t).is_some_and(&pred))
}

/// Builds a locally equivalent run in which the write `kappa` of `op` is not
/// propagated before `op` ends.
pub fn unpropagated_transform(r: &Run, op: &Operation, kappa: Tag) -> Result<Relocated, DtfError> {
    let end = op.end.ok_or(DtfError::PreconditionViolated(Precondition::Incomplete))?;
    let writes_kappa = |e: &EventKind| matches!(e, EventKind::Write { tag, .. } if *tag == kappa);
    if kappa.writer != op.proc || during(r, op, end, writes_kappa).is_none() {
        return Err(DtfError::PreconditionViolated(Precondition::TagNotWritten(kappa)));
    }
    if during(r, op, end, |e| matches!(e, EventKind::Fence)).is_some() {
        return Err(DtfError::PreconditionViolated(Precondition::Fence));
    }
    if during(r, op, end, |e| matches!(e, EventKind::Rmw { .. })).is_some() {
        return Err(DtfError::PreconditionViolated(Precondition::Rmw));
    }
    let graph = ObGraph::build(r);
    if let Some(node) = graph.feedback_loop(Node::process(op.proc, op.start), Node::process(op.proc, end))? {
        return Err(DtfError::PreconditionViolated(Precondition::Feedback(node)));
    }
    let solo = solo_transform(r, op)?;
    let ord = ordinal(&solo.run, &solo.op)?;
    let (ts, te) = (solo.op.start, solo.op.end.expect("solo transform keeps completion"));
    let mut set = BTreeSet::from([Node::process(op.proc, te)]);
    set.extend(AgentId::all(r.procs()).map(|b| Node::new(b, ts)));
    let run = dtf_transform_padded(&solo.run, &set, te - ts)?;
    let op = find_by_ordinal(&run, op.proc, ord)?;
    Ok(Relocated { run, op })
}

/// Node time at which the prop of `kappa` occurs, if it does.
pub fn prop_time(r: &Run, kappa: Tag) -> Option<usize> {
    let d = AgentId::Dispatcher(kappa.writer);
    (0..r.horizon()).find(|&t| matches!(r.event(d, t), Some(EventKind::Prop { tag, .. }) if *tag == kappa))
}
