//! The single-step TSO machine.
//!
//! A [`TsoState`] is the pair of a shared memory and one FIFO store buffer per
//! process. Processes issue reads, writes, fences and read-modify-writes; each
//! process `i` has a dispatcher `d_i` whose only action propagates the oldest
//! buffered write of `i` to memory.
//!
//! Every value in memory remembers the write it came from (its [`Provenance`]),
//! so that reads from memory can report which write they observed.

use std::collections::VecDeque;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Process identifier, `1..=n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ProcId(pub u16);

impl ProcId {
    /// Zero-based position of this process.
    pub fn index(self) -> usize {
        debug_assert!(self.0 >= 1, "process ids are 1-based");
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Self {
        ProcId(index as u16 + 1)
    }
}

impl fmt::Display for ProcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Index of a declared shared variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct VarId(pub u16);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Value(pub i64);

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An agent is either a process or the dispatcher draining that process's buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum AgentId {
    Process(ProcId),
    Dispatcher(ProcId),
}

impl AgentId {
    /// The process this agent belongs to.
    pub fn proc(self) -> ProcId {
        match self {
            AgentId::Process(p) | AgentId::Dispatcher(p) => p,
        }
    }

    pub fn is_process(self) -> bool {
        matches!(self, AgentId::Process(_))
    }

    /// Dense index: processes occupy `0..n`, dispatchers `n..2n`.
    pub fn index(self, procs: usize) -> usize {
        match self {
            AgentId::Process(p) => p.index(),
            AgentId::Dispatcher(p) => procs + p.index(),
        }
    }

    pub fn from_index(index: usize, procs: usize) -> Self {
        if index < procs {
            AgentId::Process(ProcId::from_index(index))
        } else {
            AgentId::Dispatcher(ProcId::from_index(index - procs))
        }
    }

    /// All agents in canonical order: `p1..pn, d1..dn`.
    pub fn all(procs: usize) -> impl Iterator<Item = AgentId> {
        (0..2 * procs).map(move |i| AgentId::from_index(i, procs))
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentId::Process(p) => write!(f, "p{}", p.0),
            AgentId::Dispatcher(p) => write!(f, "d{}", p.0),
        }
    }
}

/// Identity of a write: the `seq`-th write issued by `writer`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Tag {
    pub writer: ProcId,
    pub seq: u32,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.writer, self.seq)
    }
}

/// Where a memory value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Provenance {
    Initial,
    Written(Tag),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Initial => f.write_str("init"),
            Provenance::Written(tag) => tag.fmt(f),
        }
    }
}

/// Operation invoked on an implemented object.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum OpCall {
    Read,
    Write(Value),
    Update(Value),
    Scan,
}

/// Response of an operation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Ret {
    Ack,
    Value(Value),
    /// A snapshot vector; `None` is the empty component.
    Vector(Vec<Option<Value>>),
}

/// Actions that only touch the performing process's local state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Internal {
    Return(Ret),
    Note(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Action {
    Read(VarId),
    Write(VarId, Value),
    Fence,
    Rmw {
        var: VarId,
        expected: Value,
        new: Value,
    },
    Null,
    Internal(Internal),
    /// Dispatchers only.
    Prop,
}

impl Action {
    pub fn is_null(&self) -> bool {
        matches!(self, Action::Null)
    }
}

/// What actually happened when an agent acted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum EventKind {
    Null,
    Write {
        var: VarId,
        value: Value,
        tag: Tag,
    },
    ReadBuffer {
        var: VarId,
        value: Value,
        tag: Tag,
    },
    ReadMemory {
        var: VarId,
        value: Value,
        source: Provenance,
    },
    Fence,
    /// `source` is the write the RMW overwrote; `tag` names the value it installs.
    Rmw {
        var: VarId,
        expected: Value,
        new: Value,
        source: Provenance,
        tag: Tag,
    },
    Prop {
        var: VarId,
        value: Value,
        tag: Tag,
    },
    Internal(Internal),
}

impl EventKind {
    pub fn is_null(&self) -> bool {
        matches!(self, EventKind::Null)
    }

    /// The variable this event accesses in memory, if it is a memory access.
    ///
    /// Writes and buffer reads never touch memory.
    pub fn memory_access_var(&self) -> Option<VarId> {
        match self {
            EventKind::Rmw { var, .. } | EventKind::Prop { var, .. } | EventKind::ReadMemory { var, .. } => Some(*var),
            _ => None,
        }
    }

    pub fn is_read_memory(&self) -> bool {
        matches!(self, EventKind::ReadMemory { .. })
    }

    pub fn is_prop(&self) -> bool {
        matches!(self, EventKind::Prop { .. })
    }

    pub fn is_sync(&self) -> bool {
        matches!(self, EventKind::Fence | EventKind::Rmw { .. })
    }

    /// Whether the event consumed a number from its process's write counter.
    pub fn consumes_seq(&self) -> bool {
        matches!(self, EventKind::Write { .. } | EventKind::Rmw { .. })
    }

    /// The provenance a read (or RMW) observed.
    pub fn read_source(&self) -> Option<Provenance> {
        match self {
            EventKind::ReadBuffer { tag, .. } => Some(Provenance::Written(*tag)),
            EventKind::ReadMemory { source, .. } | EventKind::Rmw { source, .. } => Some(*source),
            _ => None,
        }
    }

    /// Tag carried by writes, buffer reads, memory reads of a written value, and props.
    pub fn tag(&self) -> Option<Tag> {
        match self {
            EventKind::Write { tag, .. } | EventKind::ReadBuffer { tag, .. } | EventKind::Prop { tag, .. } => {
                Some(*tag)
            }
            EventKind::ReadMemory {
                source: Provenance::Written(tag),
                ..
            } => Some(*tag),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Event {
    pub agent: AgentId,
    pub kind: EventKind,
}

/// Memory access of the same variable by two events that may not share a round.
///
/// Two reads from memory never conflict, and neither does a prop by `d_i`
/// with a memory read by `i`.
pub fn conflicts(a: &Event, b: &Event) -> bool {
    let (Some(x), Some(y)) = (a.kind.memory_access_var(), b.kind.memory_access_var()) else {
        return false;
    };
    if x != y {
        return false;
    }
    if a.kind.is_read_memory() && b.kind.is_read_memory() {
        return false;
    }
    let own_prop_and_read = |p: &Event, q: &Event| {
        p.kind.is_prop()
            && q.kind.is_read_memory()
            && p.agent == AgentId::Dispatcher(q.agent.proc())
            && q.agent.is_process()
    };
    !(own_prop_and_read(a, b) || own_prop_and_read(b, a))
}

pub fn memory_access_var(event: &Event) -> Option<VarId> {
    event.kind.memory_access_var()
}

/// Declared universe of a scenario: processes, variables and the value domain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct System {
    procs: usize,
    vars: Vec<String>,
    min_value: i64,
    max_value: i64,
    initial: Vec<Value>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SystemError {
    #[error("a system needs at least one process")]
    NoProcesses,
    #[error("empty value domain {0}..={1}")]
    EmptyDomain(i64, i64),
    #[error("duplicate variable name `{0}`")]
    DuplicateVar(String),
    #[error("initial value {0} outside the value domain")]
    InitialOutOfDomain(Value),
}

impl System {
    /// All variables start at the smallest domain value.
    pub fn new<S: Into<String>>(
        procs: usize,
        vars: impl IntoIterator<Item = S>,
        values: std::ops::RangeInclusive<i64>,
    ) -> Result<Self, SystemError> {
        let vars: Vec<String> = vars.into_iter().map(Into::into).collect();
        let (min_value, max_value) = (*values.start(), *values.end());
        let initial = vec![Value(min_value); vars.len()];
        Self::with_initial(procs, vars, min_value..=max_value, initial)
    }

    pub fn with_initial(
        procs: usize,
        vars: Vec<String>,
        values: std::ops::RangeInclusive<i64>,
        initial: Vec<Value>,
    ) -> Result<Self, SystemError> {
        if procs == 0 {
            return Err(SystemError::NoProcesses);
        }
        let (min_value, max_value) = (*values.start(), *values.end());
        if min_value > max_value {
            return Err(SystemError::EmptyDomain(min_value, max_value));
        }
        for (k, name) in vars.iter().enumerate() {
            if vars[..k].contains(name) {
                return Err(SystemError::DuplicateVar(name.clone()));
            }
        }
        assert_eq!(initial.len(), vars.len(), "one initial value per variable");
        if let Some(v) = initial.iter().find(|v| v.0 < min_value || v.0 > max_value) {
            return Err(SystemError::InitialOutOfDomain(*v));
        }
        Ok(System {
            procs,
            vars,
            min_value,
            max_value,
            initial,
        })
    }

    pub fn procs(&self) -> usize {
        self.procs
    }

    pub fn agents(&self) -> usize {
        2 * self.procs
    }

    pub fn var_names(&self) -> &[String] {
        &self.vars
    }

    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v == name).map(|i| VarId(i as u16))
    }

    pub fn var_name(&self, var: VarId) -> &str {
        &self.vars[var.index()]
    }

    pub fn values(&self) -> std::ops::RangeInclusive<i64> {
        self.min_value..=self.max_value
    }

    pub fn initial_values(&self) -> &[Value] {
        &self.initial
    }

    pub fn contains_value(&self, v: Value) -> bool {
        (self.min_value..=self.max_value).contains(&v.0)
    }

    pub fn proc_ids(&self) -> impl Iterator<Item = ProcId> {
        (0..self.procs).map(ProcId::from_index)
    }

    pub fn initial_state(&self) -> TsoState {
        TsoState {
            memory: self
                .initial
                .iter()
                .map(|&value| MemoryCell {
                    value,
                    origin: Provenance::Initial,
                })
                .collect(),
            buffers: vec![VecDeque::new(); self.procs],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct BufferEntry {
    pub var: VarId,
    pub value: Value,
    pub tag: Tag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct MemoryCell {
    pub value: Value,
    pub origin: Provenance,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("{action:?} is not enabled for {agent}")]
    NotEnabled { agent: AgentId, action: Action },
    #[error("unknown variable index {0}")]
    UnknownVar(u16),
    #[error("value {0} outside the declared domain")]
    UnknownValue(Value),
    #[error("{agent} cannot perform {action:?}")]
    InvalidAction { agent: AgentId, action: Action },
}

/// Shared memory plus per-process store buffers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct TsoState {
    pub memory: Vec<MemoryCell>,
    pub buffers: Vec<VecDeque<BufferEntry>>,
}

impl TsoState {
    pub fn buffer(&self, p: ProcId) -> &VecDeque<BufferEntry> {
        &self.buffers[p.index()]
    }

    pub fn cell(&self, var: VarId) -> MemoryCell {
        self.memory[var.index()]
    }

    pub fn buffers_empty(&self) -> bool {
        self.buffers.iter().all(VecDeque::is_empty)
    }

    /// Latest buffered entry of `p` for `var`.
    fn latest_buffered(&self, p: ProcId, var: VarId) -> Option<&BufferEntry> {
        self.buffers[p.index()].iter().rev().find(|e| e.var == var)
    }

    fn check_operands(&self, system: &System, action: &Action) -> Result<(), StepError> {
        let check_var = |var: VarId| {
            if var.index() < system.var_count() {
                Ok(())
            } else {
                Err(StepError::UnknownVar(var.0))
            }
        };
        let check_value = |v: Value| {
            if system.contains_value(v) {
                Ok(())
            } else {
                Err(StepError::UnknownValue(v))
            }
        };
        match action {
            Action::Read(var) => check_var(*var),
            Action::Write(var, v) => {
                check_var(*var)?;
                check_value(*v)
            }
            Action::Rmw { var, expected, new } => {
                check_var(*var)?;
                check_value(*expected)?;
                check_value(*new)
            }
            _ => Ok(()),
        }
    }

    /// Whether `agent` may perform `action` in this state.
    ///
    /// Reads, writes, nulls and internal actions are always enabled; a fence
    /// needs an empty buffer, an RMW additionally needs the expected value in
    /// memory, and a prop needs a nonempty buffer. Actions of the wrong agent
    /// kind are never enabled.
    pub fn enabled(&self, agent: AgentId, action: &Action) -> bool {
        match (agent, action) {
            (AgentId::Dispatcher(p), Action::Prop) => !self.buffer(p).is_empty(),
            (AgentId::Dispatcher(_), Action::Null) => true,
            (AgentId::Dispatcher(_), _) => false,
            (AgentId::Process(_), Action::Prop) => false,
            (AgentId::Process(p), Action::Fence) => self.buffer(p).is_empty(),
            (AgentId::Process(p), Action::Rmw { var, expected, .. }) => {
                self.buffer(p).is_empty() && self.memory.get(var.index()).is_some_and(|c| c.value == *expected)
            }
            (AgentId::Process(_), _) => true,
        }
    }

    /// Pure single-step transition. `next_seq` is the sequence number a write
    /// or RMW by this agent's process would receive.
    pub fn apply(
        &self,
        system: &System,
        agent: AgentId,
        action: &Action,
        next_seq: u32,
    ) -> Result<(TsoState, Event), StepError> {
        let mut next = self.clone();
        let kind = next.apply_in_place(system, agent, action, next_seq)?;
        Ok((next, Event { agent, kind }))
    }

    /// In-place variant of [`TsoState::apply`].
    pub fn apply_in_place(
        &mut self,
        system: &System,
        agent: AgentId,
        action: &Action,
        next_seq: u32,
    ) -> Result<EventKind, StepError> {
        self.check_operands(system, action)?;
        let valid_kind = match action {
            Action::Prop => !agent.is_process(),
            Action::Null => true,
            _ => agent.is_process(),
        };
        if !valid_kind {
            return Err(StepError::InvalidAction {
                agent,
                action: action.clone(),
            });
        }
        if !self.enabled(agent, action) {
            return Err(StepError::NotEnabled {
                agent,
                action: action.clone(),
            });
        }
        Ok(self.apply_unchecked(agent, action, next_seq))
    }

    /// Applies an action without checking its precondition. A prop on an empty
    /// buffer degrades to a null event; everything else takes effect as if enabled.
    /// Used to materialise hand-built (possibly invalid) runs for validation.
    pub fn apply_unchecked(&mut self, agent: AgentId, action: &Action, next_seq: u32) -> EventKind {
        let p = agent.proc();
        match action {
            Action::Null => EventKind::Null,
            Action::Internal(internal) => EventKind::Internal(internal.clone()),
            Action::Fence => EventKind::Fence,
            Action::Write(var, value) => {
                let tag = Tag {
                    writer: p,
                    seq: next_seq,
                };
                self.buffers[p.index()].push_back(BufferEntry {
                    var: *var,
                    value: *value,
                    tag,
                });
                EventKind::Write {
                    var: *var,
                    value: *value,
                    tag,
                }
            }
            Action::Read(var) => match self.latest_buffered(p, *var) {
                Some(entry) => EventKind::ReadBuffer {
                    var: *var,
                    value: entry.value,
                    tag: entry.tag,
                },
                None => {
                    let cell = self.memory[var.index()];
                    EventKind::ReadMemory {
                        var: *var,
                        value: cell.value,
                        source: cell.origin,
                    }
                }
            },
            Action::Rmw { var, expected, new } => {
                let tag = Tag {
                    writer: p,
                    seq: next_seq,
                };
                let source = self.memory[var.index()].origin;
                self.memory[var.index()] = MemoryCell {
                    value: *new,
                    origin: Provenance::Written(tag),
                };
                EventKind::Rmw {
                    var: *var,
                    expected: *expected,
                    new: *new,
                    source,
                    tag,
                }
            }
            Action::Prop => match self.buffers[p.index()].pop_front() {
                Some(entry) => {
                    self.memory[entry.var.index()] = MemoryCell {
                        value: entry.value,
                        origin: Provenance::Written(entry.tag),
                    };
                    EventKind::Prop {
                        var: entry.var,
                        value: entry.value,
                        tag: entry.tag,
                    }
                }
                None => EventKind::Null,
            },
        }
    }
}
