//! Operation histories, sequential specifications and a linearizability checker.

mod ob;
mod scenario;

pub use ob::{check_register_ob_necessity, check_snapshot_ob, isolated, ObCheck, ObReport, ObViolation};
pub use scenario::{
    search_writemustsync, sync_necessity_register, sync_necessity_snapshot, ScenarioError, ScenarioReport,
    SEARCH_STEP_BOUND,
};

use std::collections::{BTreeSet, HashSet};
use std::hash::Hash;

use serde::Serialize;
use thiserror::Error;

use crate::tso::{OpCall, ProcId, Ret, Value};

/// Default bound on the number of complete operations the checker accepts.
pub const DEFAULT_BOUND: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Operation {
    /// Position in the history, in invocation order.
    pub id: usize,
    pub proc: ProcId,
    pub call: OpCall,
    /// Time of the state in which the invocation has not yet arrived.
    pub start: usize,
    /// Time of the state right after the return, if the operation completed.
    pub end: Option<usize>,
    pub ret: Option<Ret>,
    /// For updates, the per-process sequence number `k` of tag `⟨i,k⟩`.
    pub update_seq: Option<u32>,
}

impl Operation {
    pub fn is_complete(&self) -> bool {
        self.end.is_some()
    }

    /// Real-time order: `self` returns before `other` is invoked.
    pub fn precedes(&self, other: &Operation) -> bool {
        self.end.is_some_and(|e| e <= other.start)
    }

    /// The value written, or the value returned by a read.
    pub fn value(&self) -> Option<Value> {
        match (&self.call, &self.ret) {
            (OpCall::Write(v) | OpCall::Update(v), _) => Some(*v),
            (OpCall::Read, Some(Ret::Value(v))) => Some(*v),
            _ => None,
        }
    }

    /// Values this operation observed.
    fn observed(&self) -> Vec<Value> {
        match &self.ret {
            Some(Ret::Value(v)) => vec![*v],
            Some(Ret::Vector(vs)) => vs.iter().flatten().copied().collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct History {
    pub ops: Vec<Operation>,
    pub horizon: usize,
}

impl History {
    pub fn complete(&self) -> impl Iterator<Item = &Operation> {
        self.ops.iter().filter(|o| o.is_complete())
    }

    /// The operations with the given ids, renumbered in their original order.
    pub fn restrict(&self, ids: &BTreeSet<usize>) -> History {
        let ops = self
            .ops
            .iter()
            .filter(|o| ids.contains(&o.id))
            .enumerate()
            .map(|(k, o)| Operation { id: k, ..o.clone() })
            .collect();
        History {
            ops,
            horizon: self.horizon,
        }
    }
}

/// A sequential object. `ret = None` stands for a pending operation, which may
/// take effect with any response.
pub trait SequentialSpec {
    type State: Clone + Eq + Hash;

    fn initial(&self) -> Self::State;

    fn step(&self, state: &Self::State, proc: ProcId, call: &OpCall, ret: Option<&Ret>) -> Option<Self::State>;
}

/// A read/write register holding `initial` at first.
#[derive(Clone, Copy, Debug)]
pub struct RegisterSpec {
    pub initial: Value,
}

impl Default for RegisterSpec {
    fn default() -> Self {
        RegisterSpec { initial: Value(0) }
    }
}

impl SequentialSpec for RegisterSpec {
    type State = Value;

    fn initial(&self) -> Value {
        self.initial
    }

    fn step(&self, state: &Value, _proc: ProcId, call: &OpCall, ret: Option<&Ret>) -> Option<Value> {
        match call {
            OpCall::Read => match ret {
                None => Some(*state),
                Some(Ret::Value(v)) if v == state => Some(*state),
                Some(_) => None,
            },
            OpCall::Write(v) => matches!(ret, None | Some(Ret::Ack)).then_some(*v),
            _ => None,
        }
    }
}

/// A single-writer snapshot object with one component per process.
///
/// Component values are tracked with their update sequence numbers so that
/// a scan's vector determines exactly which update each entry came from.
#[derive(Clone, Copy, Debug)]
pub struct SnapshotSpec {
    pub procs: usize,
}

impl SequentialSpec for SnapshotSpec {
    type State = Vec<Option<Value>>;

    fn initial(&self) -> Self::State {
        vec![None; self.procs]
    }

    fn step(&self, state: &Self::State, proc: ProcId, call: &OpCall, ret: Option<&Ret>) -> Option<Self::State> {
        match call {
            OpCall::Update(v) => {
                if !matches!(ret, None | Some(Ret::Ack)) {
                    return None;
                }
                let mut next = state.clone();
                *next.get_mut(proc.index())? = Some(*v);
                Some(next)
            }
            OpCall::Scan => match ret {
                None => Some(state.clone()),
                Some(Ret::Vector(vs)) if vs == state => Some(state.clone()),
                Some(_) => None,
            },
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinError {
    #[error("history has {complete} complete operations, bound is {bound}")]
    BoundExceeded { complete: usize, bound: usize },
}

/// A legal sequential order, as operation ids. Pending operations that were
/// dropped do not appear.
pub type Linearization = Vec<usize>;

/// Searches for a linearization of `h`. `Ok(None)` means there is none.
pub fn check_linearizable<S: SequentialSpec>(
    h: &History,
    spec: &S,
    bound: usize,
) -> Result<Option<Linearization>, LinError> {
    let complete = h.complete().count();
    if complete > bound || h.ops.len() > 64 {
        return Err(LinError::BoundExceeded { complete, bound });
    }
    let n = h.ops.len();
    let preds: Vec<u64> = h
        .ops
        .iter()
        .map(|x| {
            h.ops
                .iter()
                .enumerate()
                .filter(|(_, y)| y.precedes(x))
                .fold(0u64, |m, (k, _)| m | (1 << k))
        })
        .collect();
    let required: u64 = h
        .ops
        .iter()
        .enumerate()
        .filter(|(_, o)| o.is_complete())
        .fold(0, |m, (k, _)| m | (1 << k));
    let mut search = Search {
        h,
        spec,
        preds,
        required,
        n,
        failed: HashSet::new(),
        order: Vec::new(),
    };
    let init = spec.initial();
    Ok(search
        .dfs(0, &init)
        .then(|| search.order.iter().map(|&k| h.ops[k].id).collect()))
}

struct Search<'a, S: SequentialSpec> {
    h: &'a History,
    spec: &'a S,
    preds: Vec<u64>,
    required: u64,
    n: usize,
    failed: HashSet<(u64, S::State)>,
    order: Vec<usize>,
}

impl<S: SequentialSpec> Search<'_, S> {
    fn dfs(&mut self, done: u64, state: &S::State) -> bool {
        if done & self.required == self.required {
            return true;
        }
        if self.failed.contains(&(done, state.clone())) {
            return false;
        }
        for k in 0..self.n {
            let bit = 1u64 << k;
            if done & bit != 0 || self.preds[k] & !done != 0 {
                continue;
            }
            let op = &self.h.ops[k];
            if let Some(next) = self.spec.step(state, op.proc, &op.call, op.ret.as_ref()) {
                self.order.push(k);
                if self.dfs(done | bit, &next) {
                    return true;
                }
                self.order.pop();
            }
        }
        self.failed.insert((done, state.clone()));
        false
    }
}

/// The smallest set of operations of `h` that is not linearizable on its own:
/// a pair of operations together with the operations that wrote the values
/// they observed. Falls back to the whole history when no pair suffices.
pub fn minimal_violation<S: SequentialSpec>(
    h: &History,
    spec: &S,
    bound: usize,
) -> Result<Option<Vec<usize>>, LinError> {
    if check_linearizable(h, spec, bound)?.is_some() {
        return Ok(None);
    }
    let writers_of = |o: &Operation| -> Vec<usize> {
        let seen = o.observed();
        h.ops
            .iter()
            .filter(|w| matches!(w.call, OpCall::Write(v) | OpCall::Update(v) if seen.contains(&v)))
            .map(|w| w.id)
            .collect()
    };
    let mut best: Option<BTreeSet<usize>> = None;
    for x in &h.ops {
        for y in h.ops.iter().filter(|y| y.id > x.id) {
            let mut ids = BTreeSet::from([x.id, y.id]);
            ids.extend(writers_of(x));
            ids.extend(writers_of(y));
            if best.as_ref().is_some_and(|b| b.len() <= ids.len()) {
                continue;
            }
            let sub = h.restrict(&ids);
            if check_linearizable(&sub, spec, bound)?.is_none() {
                best = Some(ids);
            }
        }
    }
    Ok(Some(match best {
        Some(ids) => ids.into_iter().collect(),
        None => h.ops.iter().map(|o| o.id).collect(),
    }))
}
