//! Independent oracles and corpus generators shared by the integration tests.
//!
//! The oracles here rebuild relations from the recorded events alone and do
//! not call into the crate's causality or linearizability code.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tso_ob::causality::Node;
use tso_ob::fixtures;
use tso_ob::linearizability::{History, Operation};
use tso_ob::runtime::{
    simulate, step, Choice, Invocation, JointAction, RandomScheduler, RandomSchedulerConfig, RoundPlan, Run,
};
use tso_ob::tso::{Action, AgentId, EventKind, OpCall, ProcId, Ret, System, Value, VarId};

/// Node index used by the oracles: agent-major, time-minor.
pub fn idx(r: &Run, node: Node) -> usize {
    node.agent.index(r.procs()) * (r.horizon() + 1) + node.time
}

pub fn all_nodes(r: &Run) -> Vec<Node> {
    AgentId::all(r.procs())
        .flat_map(|b| (0..=r.horizon()).map(move |t| Node::new(b, t)))
        .collect()
}

fn access_var(e: &EventKind) -> Option<VarId> {
    match e {
        EventKind::ReadMemory { var, .. } | EventKind::Rmw { var, .. } | EventKind::Prop { var, .. } => Some(*var),
        _ => None,
    }
}

/// Base occurs-before edges, straight from the four clauses (with `t < t'`).
pub fn oracle_edges(r: &Run) -> Vec<(Node, Node)> {
    let nodes = all_nodes(r);
    let ev = |n: &Node| r.event(n.agent, n.time).cloned().unwrap_or(EventKind::Null);
    let mut out = Vec::new();
    for a in &nodes {
        for b in &nodes {
            if a.time >= b.time {
                continue;
            }
            let (ea, eb) = (ev(a), ev(b));
            let locality = a.agent == b.agent && b.time == a.time + 1;
            let buffer = match (a.agent, b.agent, &ea, &eb) {
                (
                    AgentId::Process(i),
                    AgentId::Dispatcher(d),
                    EventKind::Write { tag, .. } | EventKind::ReadBuffer { tag, .. },
                    EventKind::Prop { tag: pt, .. },
                ) => i == d && tag == pt,
                _ => false,
            };
            let same_var = match (access_var(&ea), access_var(&eb)) {
                (Some(x), Some(y)) if x == y => {
                    let both_rfm =
                        matches!(ea, EventKind::ReadMemory { .. }) && matches!(eb, EventKind::ReadMemory { .. });
                    let own_prop_rfm = matches!(
                        (a.agent, b.agent, &ea, &eb),
                        (AgentId::Dispatcher(d), AgentId::Process(i), EventKind::Prop { .. }, EventKind::ReadMemory { .. }) if d == i
                    );
                    !both_rfm && !own_prop_rfm
                }
                _ => false,
            };
            let prop_sync = matches!(
                (a.agent, b.agent, &ea, &eb),
                (AgentId::Dispatcher(d), AgentId::Process(i), EventKind::Prop { .. }, EventKind::Fence | EventKind::Rmw { .. }) if d == i
            );
            if locality || buffer || same_var || prop_sync {
                out.push((*a, *b));
            }
        }
    }
    out
}

/// Transitive closure of the oracle edges by Warshall's algorithm on bit rows.
pub struct Closure {
    pub size: usize,
    rows: Vec<Vec<u64>>,
}

impl Closure {
    pub fn build(r: &Run) -> Self {
        let size = 2 * r.procs() * (r.horizon() + 1);
        let words = size.div_ceil(64);
        let mut rows = vec![vec![0u64; words]; size];
        for (a, b) in oracle_edges(r) {
            let (u, v) = (idx(r, a), idx(r, b));
            rows[u][v / 64] |= 1 << (v % 64);
        }
        for k in 0..size {
            let row_k = rows[k].clone();
            for row in rows.iter_mut() {
                if row[k / 64] >> (k % 64) & 1 == 1 {
                    for (w, bits) in row.iter_mut().zip(&row_k) {
                        *w |= bits;
                    }
                }
            }
        }
        Closure { size, rows }
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.rows[u][v / 64] >> (v % 64) & 1 == 1
    }
}

/// Nodes that reach some member of `set` (the past), computed by scanning the closure.
pub fn oracle_past(r: &Run, c: &Closure, set: &BTreeSet<Node>) -> BTreeSet<Node> {
    all_nodes(r)
        .into_iter()
        .filter(|n| set.iter().any(|s| c.get(idx(r, *n), idx(r, *s))))
        .collect()
}

/// A seeded run of `free` or `random:SEED` over two variables and values `0..=2`.
pub fn fuzz_run(seed: u64) -> Run {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = rng.gen_range(2..=3);
    let horizon = rng.gen_range(1..=12);
    let system = System::new(n, ["x", "y"], 0..=2).unwrap();
    let name = if rng.gen_bool(0.5) {
        "free".to_string()
    } else {
        format!("random:{}", rng.gen::<u32>())
    };
    let protocol = fixtures::resolve_for(&name, &system).unwrap();
    let config = RandomSchedulerConfig {
        move_prob: rng.gen_range(0.4..0.9),
        prop_prob: rng.gen_range(0.2..0.7),
        ..RandomSchedulerConfig::default()
    };
    let mut scheduler = RandomScheduler::new(seed, config);
    simulate(protocol.as_ref(), &mut scheduler, horizon).unwrap()
}

/// A random set of 1 to 3 nodes of `r` and a delay in `0..=4`.
pub fn fuzz_instance(r: &Run, seed: u64) -> (BTreeSet<Node>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd71f);
    let nodes = all_nodes(r);
    let k = rng.gen_range(1..=3);
    let set = nodes.choose_multiple(&mut rng, k).copied().collect();
    (set, rng.gen_range(0..=4))
}

/// A seeded run of an operation fixture with up to `max_ops` invocations.
pub fn op_run(fixture: &str, procs: usize, seed: u64, horizon: usize, max_ops: usize) -> Run {
    let protocol = fixtures::build(fixture, procs).unwrap();
    let op_mix = match fixtures::object_of(fixture).unwrap() {
        fixtures::ObjectKind::Register => vec![OpCall::Read, OpCall::Write(Value(0))],
        fixtures::ObjectKind::Snapshot => vec![OpCall::Update(Value(0)), OpCall::Scan],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0b5);
    let config = RandomSchedulerConfig {
        move_prob: rng.gen_range(0.5..0.95),
        prop_prob: rng.gen_range(0.1..0.6),
        invoke_prob: rng.gen_range(0.2..0.6),
        max_ops,
        op_mix,
    };
    let mut scheduler = RandomScheduler::new(seed, config);
    simulate(protocol.as_ref(), &mut scheduler, horizon).unwrap()
}

/// Runs each call to completion, one at a time, with only the caller and its
/// dispatcher moving. The dispatcher propagates only when the caller is blocked.
pub fn sequential_run(fixture: &str, procs: usize, calls: &[(ProcId, OpCall)]) -> Run {
    let protocol = fixtures::build(fixture, procs).unwrap();
    let mut run = Run::new(protocol.system().clone(), protocol.name(), None);
    for (p, call) in calls {
        let mut invoke = JointAction::idle(procs);
        invoke.invokes.push(Invocation {
            proc: *p,
            call: call.clone(),
        });
        run.push(invoke).unwrap();
        for _ in 0..64 {
            let g = run.final_state();
            let next = protocol.candidates(*p, g.local(*p))[0].clone();
            let blocked = !g.tso.enabled(AgentId::Process(*p), &next);
            let mut plan = RoundPlan::idle(procs);
            plan.procs[p.index()] = Choice::Candidate(0);
            plan.props[p.index()] = blocked;
            step(protocol.as_ref(), &mut run, &plan).unwrap();
            if run.final_state().pending[p.index()].is_none() {
                break;
            }
        }
    }
    run
}

/// Sequential register semantics.
fn register_legal(order: &[&Operation]) -> bool {
    let mut value = Value(0);
    for o in order {
        match (&o.call, &o.ret) {
            (OpCall::Write(v), _) => value = *v,
            (OpCall::Read, Some(Ret::Value(v))) if *v != value => return false,
            _ => {}
        }
    }
    true
}

/// Sequential single-writer snapshot semantics.
fn snapshot_legal(order: &[&Operation], procs: usize) -> bool {
    let mut state: Vec<Option<Value>> = vec![None; procs];
    for o in order {
        match (&o.call, &o.ret) {
            (OpCall::Update(v), _) => state[o.proc.index()] = Some(*v),
            (OpCall::Scan, Some(Ret::Vector(vs))) if *vs != state => return false,
            _ => {}
        }
    }
    true
}

#[derive(Clone, Copy)]
pub enum Object {
    Register,
    Snapshot(usize),
}

fn permutations(items: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    if k == items.len() {
        return visit(items);
    }
    for i in k..items.len() {
        items.swap(k, i);
        if permutations(items, k + 1, visit) {
            return true;
        }
        items.swap(k, i);
    }
    false
}

/// Brute force: some subset of pending operations plus all complete ones,
/// in some order respecting real time, is legal.
pub fn permutation_oracle(h: &History, object: Object) -> bool {
    let complete: Vec<usize> = (0..h.ops.len()).filter(|&k| h.ops[k].end.is_some()).collect();
    let pending: Vec<usize> = (0..h.ops.len()).filter(|&k| h.ops[k].end.is_none()).collect();
    for mask in 0..(1u32 << pending.len()) {
        let mut chosen = complete.clone();
        chosen.extend(
            pending
                .iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, &k)| k),
        );
        let found = permutations(&mut chosen, 0, &mut |perm| {
            let respects = perm.iter().enumerate().all(|(a, &x)| {
                perm[a + 1..].iter().all(|&y| {
                    let (ox, oy) = (&h.ops[x], &h.ops[y]);
                    !oy.end.is_some_and(|e| e <= ox.start)
                })
            });
            if !respects {
                return false;
            }
            let order: Vec<&Operation> = perm.iter().map(|&k| &h.ops[k]).collect();
            match object {
                Object::Register => register_legal(&order),
                Object::Snapshot(n) => snapshot_legal(&order, n),
            }
        });
        if found {
            return true;
        }
    }
    false
}

/// Whether the action alphabet of the exhaustive corpus could be scheduled here.
pub fn exhaustive_moves(r: &Run) -> Vec<JointAction> {
    let n = r.procs();
    let x = VarId(0);
    let alphabet = [
        Action::Read(x),
        Action::Write(x, Value(1)),
        Action::Fence,
        Action::Rmw {
            var: x,
            expected: Value(0),
            new: Value(1),
        },
        Action::Rmw {
            var: x,
            expected: Value(1),
            new: Value(0),
        },
    ];
    let g = r.final_state();
    let mut out = Vec::new();
    for k in 0..n {
        for a in &alphabet {
            if g.tso.enabled(AgentId::Process(ProcId::from_index(k)), a) {
                let mut joint = JointAction::idle(n);
                joint.procs[k] = a.clone();
                out.push(joint);
            }
        }
        if !g.tso.buffers[k].is_empty() {
            let mut joint = JointAction::idle(n);
            joint.props[k] = true;
            out.push(joint);
        }
    }
    out
}

/// Whether some process reads an item from its buffer in the same round its
/// dispatcher propagates that item. No occurs-before edge joins the two nodes.
pub fn same_round_buffer_read(r: &Run) -> bool {
    (0..r.horizon()).any(|t| {
        (0..r.procs()).any(|k| {
            let p = ProcId::from_index(k);
            match (r.event(AgentId::Process(p), t), r.event(AgentId::Dispatcher(p), t)) {
                (Some(EventKind::ReadBuffer { tag, .. }), Some(EventKind::Prop { tag: pt, .. })) => tag == pt,
                _ => false,
            }
        })
    })
}
