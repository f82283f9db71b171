//! Explicit and seeded schedules.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{GlobalState, Invocation, Protocol};
use crate::tso::{Action, AgentId, OpCall, ProcId, Value};

/// What a process is told to do in one round.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Choice {
    Idle,
    /// Index into the protocol's candidate list for the current local state.
    Candidate(usize),
    /// A specific action, which must be one of the candidates.
    Exact(Action),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct RoundPlan {
    pub procs: Vec<Choice>,
    pub props: Vec<bool>,
    pub invokes: Vec<Invocation>,
}

impl RoundPlan {
    pub fn idle(procs: usize) -> Self {
        RoundPlan {
            procs: vec![Choice::Idle; procs],
            props: vec![false; procs],
            invokes: Vec::new(),
        }
    }

    /// Every process takes its first candidate; no dispatcher moves.
    pub fn all_processes(procs: usize) -> Self {
        RoundPlan {
            procs: vec![Choice::Candidate(0); procs],
            ..RoundPlan::idle(procs)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Schedule {
    pub seed: Option<u64>,
    pub rounds: Vec<RoundPlan>,
}

impl Schedule {
    pub fn from_plans(seed: Option<u64>, rounds: Vec<RoundPlan>) -> Self {
        Schedule { seed, rounds }
    }
}

pub trait Scheduler {
    fn plan(&mut self, protocol: &dyn Protocol, g: &GlobalState, round: usize) -> RoundPlan;

    fn seed(&self) -> Option<u64> {
        None
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomSchedulerConfig {
    /// Probability that a process with an enabled non-null candidate moves.
    pub move_prob: f64,
    /// Probability that a dispatcher with a nonempty buffer propagates.
    pub prop_prob: f64,
    /// Probability that an idle process receives an invocation.
    pub invoke_prob: f64,
    /// Total number of invocations issued over the run.
    pub max_ops: usize,
    /// Operations drawn from when invoking; values are filled in fresh.
    pub op_mix: Vec<OpCall>,
}

impl Default for RandomSchedulerConfig {
    fn default() -> Self {
        RandomSchedulerConfig {
            move_prob: 0.7,
            prop_prob: 0.4,
            invoke_prob: 0.3,
            max_ops: 0,
            op_mix: Vec::new(),
        }
    }
}

/// Seeded scheduler picking uniformly among enabled candidates.
///
/// Written values are drawn from a per-run counter starting at the smallest
/// nonzero domain value, so no value is ever invoked twice.
pub struct RandomScheduler {
    seed: u64,
    rng: ChaCha8Rng,
    config: RandomSchedulerConfig,
    issued: usize,
    next_value: i64,
}

impl RandomScheduler {
    pub fn new(seed: u64, config: RandomSchedulerConfig) -> Self {
        RandomScheduler {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            config,
            issued: 0,
            next_value: 1,
        }
    }

    fn fresh_value(&mut self, max: i64) -> Option<Value> {
        (self.next_value <= max).then(|| {
            self.next_value += 1;
            Value(self.next_value - 1)
        })
    }
}

impl Scheduler for RandomScheduler {
    fn plan(&mut self, protocol: &dyn Protocol, g: &GlobalState, _round: usize) -> RoundPlan {
        let n = g.locals.len();
        let mut plan = RoundPlan::idle(n);
        for k in 0..n {
            let p = ProcId::from_index(k);
            let enabled: Vec<Action> = protocol
                .candidates(p, g.local(p))
                .into_iter()
                .filter(|a| !a.is_null() && g.tso.enabled(AgentId::Process(p), a))
                .collect();
            if !enabled.is_empty() && self.rng.gen_bool(self.config.move_prob) {
                plan.procs[k] = Choice::Exact(enabled.choose(&mut self.rng).unwrap().clone());
            }
            plan.props[k] = !g.tso.buffers[k].is_empty() && self.rng.gen_bool(self.config.prop_prob);
        }
        let max_value = *protocol.system().values().end();
        for k in 0..n {
            if self.issued >= self.config.max_ops || self.config.op_mix.is_empty() {
                break;
            }
            if g.pending[k].is_some() || !self.rng.gen_bool(self.config.invoke_prob) {
                continue;
            }
            let call = match self.config.op_mix.choose(&mut self.rng).unwrap() {
                OpCall::Write(_) => match self.fresh_value(max_value) {
                    Some(v) => OpCall::Write(v),
                    None => continue,
                },
                OpCall::Update(_) => match self.fresh_value(max_value) {
                    Some(v) => OpCall::Update(v),
                    None => continue,
                },
                other => other.clone(),
            };
            self.issued += 1;
            plan.invokes.push(Invocation {
                proc: ProcId::from_index(k),
                call,
            });
        }
        plan
    }

    fn seed(&self) -> Option<u64> {
        Some(self.seed)
    }
}
