//! Constructed runs showing that certain operations must synchronize.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::{isolated, Operation};
use crate::causality::{ij_only_classify, IjClassification, Node, ObGraph};
use crate::dtf::{dtf_transform_padded, runs_solo, DtfError, Precondition};
use crate::fixtures;
use crate::runtime::{extract_history, step, Choice, Invocation, JointAction, Protocol, RoundPlan, Run, RunError};
use crate::tso::{AgentId, EventKind, OpCall, ProcId, Value};

/// Rounds a follow-up operation may take before the fixture is declared
/// not obstruction-free.
pub const SEARCH_STEP_BOUND: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(Precondition),
    #[error("{proc} did not return within {bound} solo rounds")]
    FixtureDiverged { proc: ProcId, bound: usize },
    #[error("no process other than {0} is free to run the follow-up operation")]
    NoPartner(ProcId),
    #[error("no unused value left in the domain")]
    NoFreshValue,
    #[error("protocol `{0}` is not a known fixture")]
    UnknownProtocol(String),
    #[error("operation {0:?} is not supported here")]
    Unsupported(OpCall),
    #[error("write count must be positive")]
    ZeroWrites,
    #[error(transparent)]
    Dtf(#[from] DtfError),
    #[error(transparent)]
    Run(#[from] RunError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScenarioReport {
    /// The constructed run.
    pub run: Run,
    pub op: Operation,
    pub follow_up: Operation,
    /// Whether the follow-up operation performed a fence or an RMW.
    pub follow_up_syncs: bool,
    /// Whether `i`'s local states in the constructed run match `r` up to `X.e`.
    pub prefix_matches: bool,
    /// Whether `X.s ⇝ W.e` in the constructed run.
    pub ob_chain: bool,
    /// Case analysis of the chain, when it only visits `i`, `j` and their dispatchers.
    pub ij_cases: Option<IjClassification>,
}

/// Solo `X` (a read or a write) followed by a `Write(b)` at another process.
pub fn sync_necessity_register(r: &Run, x: &Operation) -> Result<ScenarioReport, ScenarioError> {
    match x.call {
        OpCall::Read | OpCall::Write(_) => sync_necessity(r, x, OpCall::Write),
        _ => Err(ScenarioError::Unsupported(x.call.clone())),
    }
}

/// Solo `update_i(v)` followed by `scan_j`, or solo `scan_i` followed by `update_j(b)`.
pub fn sync_necessity_snapshot(r: &Run, op: &Operation) -> Result<ScenarioReport, ScenarioError> {
    match op.call {
        OpCall::Update(_) => sync_necessity(r, op, |_| OpCall::Scan),
        OpCall::Scan => sync_necessity(r, op, OpCall::Update),
        _ => Err(ScenarioError::Unsupported(op.call.clone())),
    }
}

fn performs_sync(r: &Run, op: &Operation, end: usize) -> bool {
    (op.start..end).any(|t| r.event(AgentId::Process(op.proc), t).is_some_and(EventKind::is_sync))
}

fn fresh_value(r: &Run) -> Result<Value, ScenarioError> {
    let h = extract_history(r)?;
    let used = h
        .ops
        .iter()
        .filter_map(|o| match o.call {
            OpCall::Write(v) | OpCall::Update(v) => Some(v.0),
            _ => None,
        })
        .chain(r.system.initial_values().iter().map(|v| v.0))
        .max()
        .unwrap_or(0);
    let b = Value(used + 1);
    if r.system.contains_value(b) {
        Ok(b)
    } else {
        Err(ScenarioError::NoFreshValue)
    }
}

/// Steps `p` (and `d_p` whenever its buffer is nonempty) until `p` returns.
fn run_alone(
    protocol: &dyn Protocol,
    run: &mut Run,
    p: ProcId,
    mut prop: impl FnMut(&Run) -> bool,
) -> Result<usize, ScenarioError> {
    let n = run.procs();
    for _ in 0..SEARCH_STEP_BOUND {
        let mut plan = RoundPlan::idle(n);
        plan.procs[p.index()] = Choice::Candidate(0);
        plan.props[p.index()] = prop(run);
        step(protocol, run, &plan)?;
        if run.final_state().pending[p.index()].is_none() {
            return Ok(run.horizon());
        }
    }
    Err(ScenarioError::FixtureDiverged {
        proc: p,
        bound: SEARCH_STEP_BOUND,
    })
}

fn sync_necessity(r: &Run, x: &Operation, follow: impl Fn(Value) -> OpCall) -> Result<ScenarioReport, ScenarioError> {
    let pre = |p| Err(ScenarioError::PreconditionViolated(p));
    let Some(te) = x.end else {
        return pre(Precondition::Incomplete);
    };
    let i = x.proc;
    let events =
        |pred: fn(&EventKind) -> bool| (x.start..te).any(|t| r.event(AgentId::Process(i), t).is_some_and(pred));
    if events(|e| matches!(e, EventKind::Fence)) {
        return pre(Precondition::Fence);
    }
    if events(|e| matches!(e, EventKind::Rmw { .. })) {
        return pre(Precondition::Rmw);
    }
    if !runs_solo(r, x) {
        return pre(Precondition::NotSolo);
    }
    if !isolated(&extract_history(r)?, x) {
        return pre(Precondition::NotIsolated);
    }
    let protocol = fixtures::resolve_for(&r.protocol, &r.system)
        .ok_or_else(|| ScenarioError::UnknownProtocol(r.protocol.clone()))?;
    let n = r.procs();

    let mut set = BTreeSet::from([Node::process(i, te)]);
    set.extend(AgentId::all(n).map(|b| Node::new(b, x.start)));
    let delta = te - x.start + 2;
    let mut run = dtf_transform_padded(r, &set, delta)?.truncate(te);

    let j = (0..n)
        .map(ProcId::from_index)
        .find(|&p| p != i && run.final_state().pending[p.index()].is_none())
        .ok_or(ScenarioError::NoPartner(i))?;
    let call = follow(fresh_value(r)?);
    run.push(JointAction::idle(n))?;
    let mut invoke = JointAction::idle(n);
    invoke.invokes.push(Invocation { proc: j, call });
    run.push(invoke)?;
    run_alone(protocol.as_ref(), &mut run, j, |run| {
        !run.final_state().tso.buffers[j.index()].is_empty()
    })?;

    let h = extract_history(&run)?;
    let follow_up = h
        .ops
        .iter()
        .rev()
        .find(|o| o.proc == j)
        .cloned()
        .expect("follow-up was invoked");
    let we = follow_up.end.expect("follow-up returned");
    let op = h
        .ops
        .iter()
        .find(|o| o.proc == i && o.start == x.start)
        .cloned()
        .ok_or(ScenarioError::PreconditionViolated(Precondition::UnknownOperation))?;
    let prefix_matches = (0..=te).all(|t| run.local(i, t) == r.local(i, t));
    let graph = ObGraph::build(&run);
    let (a, b) = (Node::process(i, x.start), Node::process(j, we));
    let ob_chain = graph.ob(a, b);
    let ij_cases = ij_only_classify(&run, &graph, a, b, i, j).ok();
    Ok(ScenarioReport {
        follow_up_syncs: performs_sync(&run, &follow_up, we),
        run,
        op,
        follow_up,
        prefix_matches,
        ob_chain,
        ij_cases,
    })
}

/// Looks for a run of `protocol` with exactly `m` sequential writes, each of
/// which performs a fence or an RMW.
///
/// The first attempt alternates writers round-robin and propagates only when
/// the writer is blocked; later attempts pick writers and extra props at
/// random. `None` means nothing was found within `budget` attempts.
pub fn search_writemustsync(
    protocol: &dyn Protocol,
    m: usize,
    budget: usize,
    seed: u64,
) -> Result<Option<Run>, ScenarioError> {
    if m == 0 {
        return Err(ScenarioError::ZeroWrites);
    }
    let system = protocol.system();
    let n = system.procs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..budget {
        let mut run = Run::new(system.clone(), protocol.name(), Some(seed));
        for w in 0..m {
            let p = if attempt == 0 {
                ProcId::from_index(w % n)
            } else {
                ProcId::from_index(rng.gen_range(0..n))
            };
            let v = Value(w as i64 + 1);
            if !system.contains_value(v) {
                return Err(ScenarioError::NoFreshValue);
            }
            let mut invoke = JointAction::idle(n);
            invoke.invokes.push(Invocation {
                proc: p,
                call: OpCall::Write(v),
            });
            run.push(invoke)?;
            let extra = if attempt == 0 { 0.0 } else { 0.3 };
            run_alone(protocol, &mut run, p, |run| {
                let g = run.final_state();
                let buffered = !g.tso.buffers[p.index()].is_empty();
                let blocked = protocol
                    .candidates(p, g.local(p))
                    .first()
                    .is_some_and(|a| !g.tso.enabled(AgentId::Process(p), a));
                buffered && (blocked || rng.gen_bool(extra))
            })?;
        }
        let h = extract_history(&run)?;
        let all_sync = h
            .ops
            .iter()
            .all(|o| matches!(o.call, OpCall::Write(_)) && performs_sync(&run, o, o.end.unwrap_or(run.horizon())));
        if h.ops.len() == m && all_sync {
            return Ok(Some(run));
        }
    }
    Ok(None)
}
