//! The occurs-before relation over the nodes of a run.
//!
//! Node `⟨b, t⟩` stands for the action agent `b` performs in round `t + 1`.
//! Base edges come from four sources: successive nodes of one agent, a write
//! (or buffer read) and the prop of its tag, two memory accesses of one
//! variable, and a prop by `d_i` followed by a fence or RMW of `i`.
//! Occurs-before is the transitive closure of the base edges.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::Serialize;
use thiserror::Error;

use crate::runtime::Run;
use crate::tso::{AgentId, EventKind, ProcId, Tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Node {
    pub agent: AgentId,
    pub time: usize,
}

impl Node {
    pub fn new(agent: AgentId, time: usize) -> Self {
        Node { agent, time }
    }

    pub fn process(p: ProcId, time: usize) -> Self {
        Node::new(AgentId::Process(p), time)
    }

    pub fn dispatcher(p: ProcId, time: usize) -> Self {
        Node::new(AgentId::Dispatcher(p), time)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.agent, self.time)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum EdgeKind {
    Locality,
    BufferFlow,
    SameVarAccess,
    PropToSync,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ObEdge {
    pub from: Node,
    pub to: Node,
    pub kind: EdgeKind,
}

impl fmt::Display for ObEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {} [{:?}]", self.from, self.to, self.kind)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CausalityError {
    #[error("node {0} lies outside the run")]
    NodeOutOfRange(Node),
    #[error("no occurs-before chain from {from} to {to} within {i}, d{}, {j}, d{}", .i.0, .j.0)]
    NoIjOnlyChain { from: Node, to: Node, i: ProcId, j: ProcId },
    #[error("{0} is not a node of the expected process")]
    WrongAgent(Node),
}

/// All base edges of `r`, locality edges included.
pub fn base_edges(r: &Run) -> Vec<ObEdge> {
    let n = r.procs();
    let horizon = r.horizon();
    let mut edges = Vec::new();
    for agent in AgentId::all(n) {
        for t in 0..horizon {
            edges.push(ObEdge {
                from: Node::new(agent, t),
                to: Node::new(agent, t + 1),
                kind: EdgeKind::Locality,
            });
        }
    }

    let mut prop_of: BTreeMap<Tag, Node> = BTreeMap::new();
    let mut accesses: BTreeMap<u16, Vec<(Node, bool, bool)>> = BTreeMap::new();
    let mut props_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut syncs_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (t, round) in r.rounds.iter().enumerate() {
        for (k, event) in round.events.iter().enumerate() {
            let node = Node::new(AgentId::from_index(k, n), t);
            if let EventKind::Prop { tag, .. } = event {
                prop_of.insert(*tag, node);
                props_by[k - n].push(t);
            }
            if event.is_sync() {
                syncs_by[k].push(t);
            }
            if let Some(var) = event.memory_access_var() {
                accesses
                    .entry(var.0)
                    .or_default()
                    .push((node, event.is_read_memory(), event.is_prop()));
            }
        }
    }

    for (t, round) in r.rounds.iter().enumerate() {
        for k in 0..n {
            let tag = match &round.events[k] {
                EventKind::Write { tag, .. } | EventKind::ReadBuffer { tag, .. } => *tag,
                _ => continue,
            };
            let p = ProcId::from_index(k);
            if let Some(&to) = prop_of.get(&tag) {
                if to.agent == AgentId::Dispatcher(p) && to.time > t {
                    edges.push(ObEdge {
                        from: Node::process(p, t),
                        to,
                        kind: EdgeKind::BufferFlow,
                    });
                }
            }
        }
    }

    for list in accesses.values() {
        for (a, &(from, from_rfm, from_prop)) in list.iter().enumerate() {
            for &(to, to_rfm, _) in &list[a + 1..] {
                if from.time >= to.time || (from_rfm && to_rfm) {
                    continue;
                }
                let own_prop_then_read =
                    from_prop && to_rfm && from.agent == AgentId::Dispatcher(to.agent.proc()) && to.agent.is_process();
                if own_prop_then_read {
                    continue;
                }
                edges.push(ObEdge {
                    from,
                    to,
                    kind: EdgeKind::SameVarAccess,
                });
            }
        }
    }

    for k in 0..n {
        let p = ProcId::from_index(k);
        for &tp in &props_by[k] {
            for &ts in &syncs_by[k] {
                if tp < ts {
                    edges.push(ObEdge {
                        from: Node::dispatcher(p, tp),
                        to: Node::process(p, ts),
                        kind: EdgeKind::PropToSync,
                    });
                }
            }
        }
    }
    edges
}

/// The base edges of a run together with their transitive closure.
#[derive(Clone, Debug)]
pub struct ObGraph {
    procs: usize,
    horizon: usize,
    edges: Vec<ObEdge>,
    out: Vec<Vec<(usize, EdgeKind)>>,
    /// `reach[u]` holds every node strictly reachable from `u`.
    reach: Vec<FixedBitSet>,
}

/// Which cases of the {i,j}-only chain lemma hold, with one witness each.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IjClassification {
    pub cases: Vec<IjCase>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum IjCase {
    /// `⟨i,t⟩` is an RMW and `⟨j,t'⟩` is a fence, RMW or memory read.
    Rmw { t: usize, t_j: usize },
    /// `⟨i,t⟩` writes or reads its buffer, `⟨d_i,t'⟩` props, then `⟨j,t''⟩`
    /// is a memory read, fence or RMW.
    Buffered { t: usize, t_prop: usize, t_j: usize },
    /// `⟨i,t⟩` reads memory and `⟨j,t'⟩` is a fence or RMW.
    MemoryRead { t: usize, t_j: usize },
}

impl IjCase {
    pub fn number(&self) -> u8 {
        match self {
            IjCase::Rmw { .. } => 1,
            IjCase::Buffered { .. } => 2,
            IjCase::MemoryRead { .. } => 3,
        }
    }
}

impl ObGraph {
    pub fn build(r: &Run) -> Self {
        let procs = r.procs();
        let horizon = r.horizon();
        let edges = base_edges(r);
        let size = 2 * procs * (horizon + 1);
        let mut out: Vec<Vec<(usize, EdgeKind)>> = vec![Vec::new(); size];
        let index = |node: Node| node.agent.index(procs) * (horizon + 1) + node.time;
        for e in &edges {
            out[index(e.from)].push((index(e.to), e.kind));
        }
        let mut reach = vec![FixedBitSet::with_capacity(size); size];
        for t in (0..=horizon).rev() {
            for a in 0..2 * procs {
                let u = a * (horizon + 1) + t;
                let mut set = FixedBitSet::with_capacity(size);
                for &(v, _) in &out[u] {
                    set.insert(v);
                    set.union_with(&reach[v]);
                }
                reach[u] = set;
            }
        }
        ObGraph {
            procs,
            horizon,
            edges,
            out,
            reach,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn procs(&self) -> usize {
        self.procs
    }

    pub fn edges(&self) -> &[ObEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        2 * self.procs * (self.horizon + 1)
    }

    pub fn contains(&self, node: Node) -> bool {
        node.time <= self.horizon
            && match node.agent {
                AgentId::Process(p) | AgentId::Dispatcher(p) => p.0 >= 1 && p.index() < self.procs,
            }
    }

    pub fn index(&self, node: Node) -> usize {
        debug_assert!(self.contains(node));
        node.agent.index(self.procs) * (self.horizon + 1) + node.time
    }

    pub fn node(&self, index: usize) -> Node {
        Node::new(
            AgentId::from_index(index / (self.horizon + 1), self.procs),
            index % (self.horizon + 1),
        )
    }

    pub fn nodes(&self) -> impl Iterator<Item = Node> + '_ {
        (0..self.node_count()).map(|u| self.node(u))
    }

    fn check(&self, node: Node) -> Result<usize, CausalityError> {
        if self.contains(node) {
            Ok(self.index(node))
        } else {
            Err(CausalityError::NodeOutOfRange(node))
        }
    }

    /// Whether `a` occurs before `b`. Nodes outside the run relate to nothing.
    pub fn ob(&self, a: Node, b: Node) -> bool {
        self.contains(a) && self.contains(b) && self.reach[self.index(a)].contains(self.index(b))
    }

    /// A chain of base edges from `a` to `b`, if `a` occurs before `b`.
    pub fn query(&self, a: Node, b: Node) -> Option<Vec<ObEdge>> {
        if !self.ob(a, b) {
            return None;
        }
        let target = self.index(b);
        let mut u = self.index(a);
        let mut chain = Vec::new();
        while u != target {
            let &(v, kind) = self.out[u]
                .iter()
                .find(|&&(v, _)| v == target || self.reach[v].contains(target))
                .expect("reachability implies a next hop");
            chain.push(ObEdge {
                from: self.node(u),
                to: self.node(v),
                kind,
            });
            u = v;
        }
        Some(chain)
    }

    pub(crate) fn bits(&self, set: &BTreeSet<Node>) -> Result<FixedBitSet, CausalityError> {
        let mut bits = FixedBitSet::with_capacity(self.node_count());
        for &node in set {
            bits.insert(self.check(node)?);
        }
        Ok(bits)
    }

    pub(crate) fn past_plus_bits(&self, set: &FixedBitSet) -> FixedBitSet {
        let mut out = set.clone();
        for u in 0..self.node_count() {
            if !self.reach[u].is_disjoint(set) {
                out.insert(u);
            }
        }
        out
    }

    fn past_bits(&self, set: &FixedBitSet) -> FixedBitSet {
        let mut out = FixedBitSet::with_capacity(self.node_count());
        for u in 0..self.node_count() {
            if !self.reach[u].is_disjoint(set) {
                out.insert(u);
            }
        }
        out
    }

    fn to_set(&self, bits: &FixedBitSet) -> BTreeSet<Node> {
        bits.ones().map(|u| self.node(u)).collect()
    }

    /// Every node that occurs before some node of `set`.
    pub fn past(&self, set: &BTreeSet<Node>) -> Result<BTreeSet<Node>, CausalityError> {
        Ok(self.to_set(&self.past_bits(&self.bits(set)?)))
    }

    /// [`ObGraph::past`] together with `set` itself.
    pub fn past_plus(&self, set: &BTreeSet<Node>) -> Result<BTreeSet<Node>, CausalityError> {
        Ok(self.to_set(&self.past_plus_bits(&self.bits(set)?)))
    }

    /// First time of each agent outside the past-plus of `set`, indexed by
    /// [`AgentId::index`]. An agent whose whole timeline lies inside gets
    /// `horizon + 1`.
    pub fn m_hat_all(&self, set: &BTreeSet<Node>) -> Result<Vec<usize>, CausalityError> {
        let pp = self.past_plus_bits(&self.bits(set)?);
        Ok(self.m_hat_from_bits(&pp))
    }

    pub(crate) fn m_hat_from_bits(&self, pp: &FixedBitSet) -> Vec<usize> {
        (0..2 * self.procs)
            .map(|a| {
                (0..=self.horizon)
                    .find(|&t| !pp.contains(a * (self.horizon + 1) + t))
                    .unwrap_or(self.horizon + 1)
            })
            .collect()
    }

    pub fn m_hat(&self, set: &BTreeSet<Node>, agent: AgentId) -> Result<usize, CausalityError> {
        Ok(self.m_hat_all(set)?[agent.index(self.procs)])
    }

    /// A node of an agent other than `i` and `d_i` lying on a chain from `a` to `b`,
    /// where both are nodes of process `i`. Returns the earliest such node.
    pub fn feedback_loop(&self, a: Node, b: Node) -> Result<Option<Node>, CausalityError> {
        let (ua, ub) = (self.check(a)?, self.check(b)?);
        let i = match a.agent {
            AgentId::Process(i) if b.agent == a.agent => i,
            _ => return Err(CausalityError::WrongAgent(if a.agent.is_process() { b } else { a })),
        };
        let mut best: Option<Node> = None;
        for c in self.reach[ua].ones() {
            let node = self.node(c);
            if node.agent.proc() == i {
                continue;
            }
            if self.reach[c].contains(ub) && best.is_none_or(|bst| node.time < bst.time) {
                best = Some(node);
            }
        }
        Ok(best)
    }

    /// Whether some chain from `a` to `b` visits only nodes of agents in `agents`.
    pub fn restricted_chain(&self, a: Node, b: Node, agents: &[AgentId]) -> Option<Vec<ObEdge>> {
        if !self.contains(a) || !self.contains(b) || !agents.contains(&a.agent) || !agents.contains(&b.agent) {
            return None;
        }
        let (ua, ub) = (self.index(a), self.index(b));
        let mut parent: Vec<Option<(usize, EdgeKind)>> = vec![None; self.node_count()];
        let mut seen = FixedBitSet::with_capacity(self.node_count());
        seen.insert(ua);
        let mut queue = VecDeque::from([ua]);
        while let Some(u) = queue.pop_front() {
            for &(v, kind) in &self.out[u] {
                if seen.contains(v) || !agents.contains(&self.node(v).agent) {
                    continue;
                }
                seen.insert(v);
                parent[v] = Some((u, kind));
                queue.push_back(v);
            }
        }
        if !seen.contains(ub) || ua == ub {
            return None;
        }
        let mut chain = Vec::new();
        let mut v = ub;
        while let Some((u, kind)) = parent[v] {
            chain.push(ObEdge {
                from: self.node(u),
                to: self.node(v),
                kind,
            });
            v = u;
        }
        chain.reverse();
        Some(chain)
    }
}

/// Classifies an {i,j}-only chain from `a = ⟨i,t1⟩` to `b = ⟨j,t2⟩` by the
/// three cases of the lemma. The last witness may coincide with `t2`.
pub fn ij_only_classify(
    r: &Run,
    graph: &ObGraph,
    a: Node,
    b: Node,
    i: ProcId,
    j: ProcId,
) -> Result<IjClassification, CausalityError> {
    if a.agent != AgentId::Process(i) {
        return Err(CausalityError::WrongAgent(a));
    }
    if b.agent != AgentId::Process(j) || i == j {
        return Err(CausalityError::WrongAgent(b));
    }
    let agents = [
        AgentId::Process(i),
        AgentId::Dispatcher(i),
        AgentId::Process(j),
        AgentId::Dispatcher(j),
    ];
    if graph.restricted_chain(a, b, &agents).is_none() {
        return Err(CausalityError::NoIjOnlyChain { from: a, to: b, i, j });
    }
    let (t1, t2) = (a.time, b.time);
    let ev = |agent: AgentId, t: usize| r.event(agent, t).cloned().unwrap_or(EventKind::Null);
    let at_j =
        |from: usize, pred: &dyn Fn(&EventKind) -> bool| (from..=t2).find(|&t| pred(&ev(AgentId::Process(j), t)));
    let sync = |e: &EventKind| e.is_sync();
    let sync_or_rfm = |e: &EventKind| e.is_sync() || e.is_read_memory();

    let mut case1 = None;
    let mut case2 = None;
    let mut case3 = None;
    for t in t1..t2 {
        match ev(AgentId::Process(i), t) {
            EventKind::Rmw { .. } if case1.is_none() => {
                if let Some(t_j) = at_j(t + 1, &sync_or_rfm) {
                    case1 = Some(IjCase::Rmw { t, t_j });
                }
            }
            EventKind::Write { .. } | EventKind::ReadBuffer { .. } if case2.is_none() => {
                let found = (t + 1..t2).find_map(|tp| {
                    ev(AgentId::Dispatcher(i), tp)
                        .is_prop()
                        .then(|| at_j(tp + 1, &sync_or_rfm).map(|t_j| (tp, t_j)))
                        .flatten()
                });
                if let Some((t_prop, t_j)) = found {
                    case2 = Some(IjCase::Buffered { t, t_prop, t_j });
                }
            }
            EventKind::ReadMemory { .. } if case3.is_none() => {
                if let Some(t_j) = at_j(t + 1, &sync) {
                    case3 = Some(IjCase::MemoryRead { t, t_j });
                }
            }
            _ => {}
        }
    }
    Ok(IjClassification {
        cases: [case1, case2, case3].into_iter().flatten().collect(),
    })
}
