//! Runs of protocols on the TSO machine.
//!
//! A round applies one [`JointAction`] to a [`GlobalState`]: every process
//! action first, then every dispatcher, then the environment's invocations.
//! Every scheduled action must be enabled in the state the round starts from.

mod schedule;
mod validate;

pub use schedule::{Choice, RandomScheduler, RandomSchedulerConfig, RoundPlan, Schedule, Scheduler};
pub use validate::{validate_run, ValidationReport, Violation, ViolationKind};

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::linearizability::{History, Operation};
use crate::tso::{
    conflicts, Action, AgentId, Event, EventKind, Internal, OpCall, ProcId, StepError, System, TsoState, Value, VarId,
};

/// What a process remembers about one of its own steps.
///
/// Reads carry no trace of whether they were served by the buffer or by memory.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum LocalRecord {
    Write(VarId, Value),
    Read(VarId, Value),
    Rmw(VarId, Value, Value),
    Fence,
    Internal(Internal),
    Invoke(OpCall),
}

impl LocalRecord {
    /// The record a process keeps for `event`, if any.
    pub fn of_event(event: &EventKind) -> Option<LocalRecord> {
        Some(match event {
            EventKind::Null | EventKind::Prop { .. } => return None,
            EventKind::Write { var, value, .. } => LocalRecord::Write(*var, *value),
            EventKind::ReadBuffer { var, value, .. } | EventKind::ReadMemory { var, value, .. } => {
                LocalRecord::Read(*var, *value)
            }
            EventKind::Rmw { var, expected, new, .. } => LocalRecord::Rmw(*var, *expected, *new),
            EventKind::Fence => LocalRecord::Fence,
            EventKind::Internal(internal) => LocalRecord::Internal(internal.clone()),
        })
    }
}

/// The ordered list of a process's records; empty initially.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct LocalState(pub Vec<LocalRecord>);

impl LocalState {
    pub fn records(&self) -> &[LocalRecord] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Records since the most recent invocation, or `None` when no operation is in progress.
    pub fn current_operation(&self) -> Option<(&OpCall, &[LocalRecord])> {
        let pos = self.0.iter().rposition(|r| matches!(r, LocalRecord::Invoke(_)))?;
        let after = &self.0[pos + 1..];
        if after
            .iter()
            .any(|r| matches!(r, LocalRecord::Internal(Internal::Return(_))))
        {
            return None;
        }
        match &self.0[pos] {
            LocalRecord::Invoke(call) => Some((call, after)),
            _ => unreachable!(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Invocation {
    pub proc: ProcId,
    pub call: OpCall,
}

/// One action per process, a prop-or-null choice per dispatcher, and the
/// environment's invocations (at most one per process).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct JointAction {
    pub procs: Vec<Action>,
    pub props: Vec<bool>,
    pub invokes: Vec<Invocation>,
}

impl JointAction {
    pub fn idle(procs: usize) -> Self {
        JointAction {
            procs: vec![Action::Null; procs],
            props: vec![false; procs],
            invokes: Vec::new(),
        }
    }

    pub fn action_of(&self, agent: AgentId) -> Action {
        match agent {
            AgentId::Process(p) => self.procs[p.index()].clone(),
            AgentId::Dispatcher(p) => {
                if self.props[p.index()] {
                    Action::Prop
                } else {
                    Action::Null
                }
            }
        }
    }

    pub fn is_idle(&self) -> bool {
        self.procs.iter().all(Action::is_null) && !self.props.iter().any(|&b| b) && self.invokes.is_empty()
    }

    pub fn invoke_for(&self, p: ProcId) -> Option<&OpCall> {
        self.invokes.iter().find(|inv| inv.proc == p).map(|inv| &inv.call)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct GlobalState {
    pub tso: TsoState,
    pub locals: Vec<LocalState>,
    /// Operation invoked at each process and not yet returned.
    pub pending: Vec<Option<OpCall>>,
    /// Writes and RMWs issued so far by each process.
    pub write_counters: Vec<u32>,
}

impl GlobalState {
    pub fn initial(system: &System) -> Self {
        let n = system.procs();
        GlobalState {
            tso: system.initial_state(),
            locals: vec![LocalState::default(); n],
            pending: vec![None; n],
            write_counters: vec![0; n],
        }
    }

    pub fn local(&self, p: ProcId) -> &LocalState {
        &self.locals[p.index()]
    }

    fn next_seq(&self, p: ProcId) -> u32 {
        self.write_counters[p.index()] + 1
    }

    fn record(&mut self, p: ProcId, event: &EventKind) {
        if event.consumes_seq() {
            self.write_counters[p.index()] += 1;
        }
        if let EventKind::Internal(Internal::Return(_)) = event {
            self.pending[p.index()] = None;
        }
        if let Some(record) = LocalRecord::of_event(event) {
            self.locals[p.index()].0.push(record);
        }
    }

    fn deliver(&mut self, inv: &Invocation) {
        self.pending[inv.proc.index()] = Some(inv.call.clone());
        self.locals[inv.proc.index()]
            .0
            .push(LocalRecord::Invoke(inv.call.clone()));
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JointError {
    #[error("conflicting events in one round: {first:?} and {second:?}")]
    Conflicting { first: Event, second: Event },
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("invoke delivered to {0} while an operation is pending")]
    DoubleInvoke(ProcId),
    #[error("joint action shape does not match {procs} processes")]
    Shape { procs: usize },
}

fn check_shape(system: &System, joint: &JointAction) -> Result<(), JointError> {
    let n = system.procs();
    let invokes_ok = joint.invokes.iter().all(|inv| inv.proc.0 >= 1 && inv.proc.index() < n)
        && joint
            .invokes
            .iter()
            .enumerate()
            .all(|(k, inv)| joint.invokes[..k].iter().all(|o| o.proc != inv.proc));
    if joint.procs.len() != n || joint.props.len() != n || !invokes_ok {
        return Err(JointError::Shape { procs: n });
    }
    Ok(())
}

/// Applies a joint action. Each action must be enabled in `g`, the state
/// the round starts from, and the produced events must be pairwise non-conflicting.
///
/// Returns the next state and one event per agent, indexed by [`AgentId::index`].
pub fn joint_apply(
    system: &System,
    g: &GlobalState,
    joint: &JointAction,
) -> Result<(GlobalState, Vec<EventKind>), JointError> {
    check_shape(system, joint)?;
    let n = system.procs();
    let mut next = g.clone();
    let mut events = Vec::with_capacity(2 * n);
    for agent in AgentId::all(n) {
        let action = joint.action_of(agent);
        if !action.is_null() && !g.tso.enabled(agent, &action) {
            // Surface operand and agent-kind errors ahead of plain disabledness.
            g.tso.apply(system, agent, &action, g.next_seq(agent.proc()))?;
            return Err(StepError::NotEnabled { agent, action }.into());
        }
        let kind = next
            .tso
            .apply_in_place(system, agent, &action, next.next_seq(agent.proc()))?;
        if agent.is_process() {
            next.record(agent.proc(), &kind);
        }
        events.push(kind);
    }
    for a in 0..events.len() {
        for b in a + 1..events.len() {
            let first = Event {
                agent: AgentId::from_index(a, n),
                kind: events[a].clone(),
            };
            let second = Event {
                agent: AgentId::from_index(b, n),
                kind: events[b].clone(),
            };
            if conflicts(&first, &second) {
                return Err(JointError::Conflicting { first, second });
            }
        }
    }
    for inv in &joint.invokes {
        if next.pending[inv.proc.index()].is_some() {
            return Err(JointError::DoubleInvoke(inv.proc));
        }
        next.deliver(inv);
    }
    Ok((next, events))
}

/// Applies a joint action without checking enabledness, conflicts or pending
/// operations. Disabled props degrade to null events. Operands must be declared.
pub fn joint_apply_unchecked(g: &GlobalState, joint: &JointAction) -> (GlobalState, Vec<EventKind>) {
    let n = g.locals.len();
    let mut next = g.clone();
    let mut events = Vec::with_capacity(2 * n);
    for agent in AgentId::all(n) {
        let action = joint.action_of(agent);
        let kind = next.tso.apply_unchecked(agent, &action, next.next_seq(agent.proc()));
        if agent.is_process() {
            next.record(agent.proc(), &kind);
        }
        events.push(kind);
    }
    for inv in &joint.invokes {
        next.deliver(inv);
    }
    (next, events)
}

/// A nonempty set of candidate actions for each process and local state.
///
/// `Null` is always permitted in addition to the candidates.
pub trait Protocol: Send + Sync {
    fn name(&self) -> &str;
    fn system(&self) -> &System;
    fn candidates(&self, proc: ProcId, local: &LocalState) -> Vec<Action>;

    /// Whether `action` is consistent with the protocol in `local`.
    fn permits(&self, proc: ProcId, local: &LocalState, action: &Action) -> bool {
        action.is_null() || self.candidates(proc, local).contains(action)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Round {
    pub joint: JointAction,
    /// One event per agent, indexed by [`AgentId::index`].
    pub events: Vec<EventKind>,
}

/// A finite run prefix: `states[t]` is the global state at time `t`, and
/// `rounds[t]` is round `t + 1`, which takes `states[t]` to `states[t + 1]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Run {
    pub system: System,
    pub protocol: String,
    pub seed: Option<u64>,
    pub states: Vec<GlobalState>,
    pub rounds: Vec<Round>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RunError {
    #[error("round {round}: {source}")]
    Joint { round: usize, source: JointError },
    #[error("round {round}: schedule is invalid: {reason}")]
    ScheduleInvalid { round: usize, reason: String },
    #[error("schedule covers {have} rounds, {need} requested")]
    ScheduleTooShort { have: usize, need: usize },
    #[error("malformed history: {0}")]
    MalformedHistory(String),
}

impl Run {
    /// A run of horizon 0.
    pub fn new(system: System, protocol: impl Into<String>, seed: Option<u64>) -> Self {
        let initial = GlobalState::initial(&system);
        Run {
            system,
            protocol: protocol.into(),
            seed,
            states: vec![initial],
            rounds: Vec::new(),
        }
    }

    /// Builds a run from joint actions without checking any precondition.
    /// Meant for hand-built (possibly invalid) runs that are then validated.
    pub fn assemble_unchecked(
        system: System,
        protocol: impl Into<String>,
        joints: impl IntoIterator<Item = JointAction>,
    ) -> Self {
        let mut run = Run::new(system, protocol, None);
        for joint in joints {
            let (next, events) = joint_apply_unchecked(run.final_state(), &joint);
            run.states.push(next);
            run.rounds.push(Round { joint, events });
        }
        run
    }

    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }

    pub fn procs(&self) -> usize {
        self.system.procs()
    }

    pub fn state(&self, t: usize) -> &GlobalState {
        &self.states[t]
    }

    pub fn final_state(&self) -> &GlobalState {
        self.states.last().expect("a run has an initial state")
    }

    pub fn local(&self, p: ProcId, t: usize) -> &LocalState {
        &self.states[t].locals[p.index()]
    }

    /// The event performed at node `⟨agent, t⟩`, i.e. in round `t + 1`.
    /// Nodes at the horizon have none.
    pub fn event(&self, agent: AgentId, t: usize) -> Option<&EventKind> {
        self.rounds.get(t).map(|round| &round.events[agent.index(self.procs())])
    }

    /// Appends a round, checking it with [`joint_apply`].
    pub fn push(&mut self, joint: JointAction) -> Result<(), RunError> {
        let round = self.horizon() + 1;
        let (next, events) = joint_apply(&self.system, self.final_state(), &joint)
            .map_err(|source| RunError::Joint { round, source })?;
        self.states.push(next);
        self.rounds.push(Round { joint, events });
        Ok(())
    }

    /// Appends `k` rounds in which nobody moves.
    pub fn pad(&self, k: usize) -> Run {
        let mut run = self.clone();
        for _ in 0..k {
            run.push(JointAction::idle(self.procs()))
                .expect("idle rounds are always valid");
        }
        run
    }

    /// The prefix up to time `t`.
    pub fn truncate(&self, t: usize) -> Run {
        let t = t.min(self.horizon());
        Run {
            system: self.system.clone(),
            protocol: self.protocol.clone(),
            seed: self.seed,
            states: self.states[..=t].to_vec(),
            rounds: self.rounds[..t].to_vec(),
        }
    }

    /// Whether any buffer is nonempty at the horizon.
    pub fn has_buffered_writes(&self) -> bool {
        !self.final_state().tso.buffers_empty()
    }
}

impl fmt::Display for Run {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::trace::emit(self))
    }
}

/// Runs `protocol` under an explicit schedule for `horizon` rounds.
///
/// Scheduled fences, RMWs and props that are disabled at the start of their
/// round become nulls, and so does an action whose event would conflict with
/// an event of an earlier agent in the same round.
pub fn execute(protocol: &dyn Protocol, schedule: &Schedule, horizon: usize) -> Result<Run, RunError> {
    if schedule.rounds.len() < horizon {
        return Err(RunError::ScheduleTooShort {
            have: schedule.rounds.len(),
            need: horizon,
        });
    }
    let mut run = Run::new(protocol.system().clone(), protocol.name(), schedule.seed);
    for plan in &schedule.rounds[..horizon] {
        step(protocol, &mut run, plan)?;
    }
    Ok(run)
}

/// Runs `protocol` for `horizon` rounds, asking `scheduler` for each round.
pub fn simulate(protocol: &dyn Protocol, scheduler: &mut dyn Scheduler, horizon: usize) -> Result<Run, RunError> {
    let mut run = Run::new(protocol.system().clone(), protocol.name(), scheduler.seed());
    for round in 1..=horizon {
        let plan = scheduler.plan(protocol, run.final_state(), round);
        step(protocol, &mut run, &plan)?;
    }
    Ok(run)
}

/// Resolves `plan` against the current state of `run` and appends the round.
pub fn step(protocol: &dyn Protocol, run: &mut Run, plan: &RoundPlan) -> Result<(), RunError> {
    let round = run.horizon() + 1;
    let joint =
        resolve(protocol, run.final_state(), plan).map_err(|reason| RunError::ScheduleInvalid { round, reason })?;
    run.push(joint)
}

/// Turns a plan into a joint action that [`joint_apply`] accepts.
pub fn resolve(protocol: &dyn Protocol, g: &GlobalState, plan: &RoundPlan) -> Result<JointAction, String> {
    let system = protocol.system();
    let n = system.procs();
    if plan.procs.len() != n || plan.props.len() != n {
        return Err(format!("plan shape does not match {n} processes"));
    }
    let mut procs = Vec::with_capacity(n);
    for (k, choice) in plan.procs.iter().enumerate() {
        let p = ProcId::from_index(k);
        let local = g.local(p);
        let action = match choice {
            Choice::Idle => Action::Null,
            Choice::Candidate(idx) => {
                let cands = protocol.candidates(p, local);
                cands
                    .get(*idx)
                    .cloned()
                    .ok_or_else(|| format!("{p} has {} candidates, index {idx} requested", cands.len()))?
            }
            Choice::Exact(action) => {
                if !protocol.permits(p, local, action) {
                    return Err(format!("{action:?} is not a candidate of {p} in its local state"));
                }
                action.clone()
            }
        };
        let agent = AgentId::Process(p);
        if !action.is_null() {
            // Reject malformed operands and agent kinds up front.
            let mut probe = g.tso.clone();
            match probe.apply_in_place(system, agent, &action, 1) {
                Err(StepError::NotEnabled { .. }) | Ok(_) => {}
                Err(e) => return Err(e.to_string()),
            }
        }
        procs.push(if g.tso.enabled(agent, &action) {
            action
        } else {
            Action::Null
        });
    }
    let props: Vec<bool> = plan
        .props
        .iter()
        .enumerate()
        .map(|(k, &want)| want && !g.tso.buffers[k].is_empty())
        .collect();
    let mut joint = JointAction {
        procs,
        props,
        invokes: plan.invokes.clone(),
    };
    drop_conflicts(g, &mut joint);
    Ok(joint)
}

/// Nulls out every action whose event conflicts with an earlier agent's event.
fn drop_conflicts(g: &GlobalState, joint: &mut JointAction) {
    let n = g.locals.len();
    let mut accepted: Vec<Event> = Vec::new();
    for agent in AgentId::all(n) {
        let action = joint.action_of(agent);
        if action.is_null() {
            continue;
        }
        let mut probe = g.tso.clone();
        let kind = probe.apply_unchecked(agent, &action, g.next_seq(agent.proc()));
        let event = Event { agent, kind };
        if accepted.iter().any(|e| conflicts(e, &event)) {
            match agent {
                AgentId::Process(p) => joint.procs[p.index()] = Action::Null,
                AgentId::Dispatcher(p) => joint.props[p.index()] = false,
            }
        } else {
            accepted.push(event);
        }
    }
}

/// Extends `r` with dispatcher props only, one per round, round-robin over
/// dispatchers with nonempty buffers, until every buffer is empty.
pub fn quiesce(r: &Run) -> Run {
    let mut run = r.clone();
    let n = run.procs();
    let mut next = 0usize;
    while run.has_buffered_writes() {
        let buffers = &run.final_state().tso.buffers;
        let k = (0..n)
            .map(|off| (next + off) % n)
            .find(|&k| !buffers[k].is_empty())
            .expect("some buffer is nonempty");
        let mut joint = JointAction::idle(n);
        joint.props[k] = true;
        run.push(joint).expect("a single prop on a nonempty buffer is valid");
        next = (k + 1) % n;
    }
    run
}

/// The operations of `r`, in order of invocation.
///
/// An operation invoked in round `t + 1` starts at time `t`; one whose return
/// is performed in round `t'` ends at time `t'`.
pub fn extract_history(r: &Run) -> Result<History, RunError> {
    let n = r.procs();
    let mut ops: Vec<Operation> = Vec::new();
    let mut open: Vec<Option<usize>> = vec![None; n];
    let mut updates = vec![0u32; n];
    for (t, round) in r.rounds.iter().enumerate() {
        let m = t + 1;
        for (k, slot) in open.iter_mut().enumerate() {
            if let EventKind::Internal(Internal::Return(ret)) = &round.events[k] {
                let p = ProcId::from_index(k);
                let id = slot.take().ok_or_else(|| {
                    RunError::MalformedHistory(format!("{p} returns in round {m} with no pending operation"))
                })?;
                ops[id].end = Some(m);
                ops[id].ret = Some(ret.clone());
            }
        }
        for inv in &round.joint.invokes {
            let k = inv.proc.index();
            if open[k].is_some() {
                return Err(RunError::MalformedHistory(format!(
                    "{} invoked in round {m} with an operation pending",
                    inv.proc
                )));
            }
            let update_seq = match inv.call {
                OpCall::Update(_) => {
                    updates[k] += 1;
                    Some(updates[k])
                }
                _ => None,
            };
            open[k] = Some(ops.len());
            ops.push(Operation {
                id: ops.len(),
                proc: inv.proc,
                call: inv.call.clone(),
                start: t,
                end: None,
                ret: None,
                update_seq,
            });
        }
    }
    Ok(History {
        ops,
        horizon: r.horizon(),
    })
}
