//! Protocols selectable by name.
//!
//! | name | behaviour |
//! |------|-----------|
//! | `sb` | store-buffering litmus test on two processes |
//! | `free` | every action over the system is a candidate |
//! | `random:SEED` | one or two pseudo-random candidates per local state |
//! | `register-fenced` | Write = W; F; return. Read = R; return |
//! | `register-unfenced` | Write = W; return. Read = R; return |
//! | `register-alt-fence` | like `register-fenced`, but only odd-numbered writes of a process fence |
//! | `snapshot-rmw` | Update = W; F; return. Scan = RMW on `s`, then double collect |
//! | `snapshot-scan-nofence` | fenced update, scan is a plain double collect |
//! | `snapshot-update-nofence` | Update = W; return. Scan as in `snapshot-rmw` |

use std::hash::{Hash, Hasher};

use thiserror::Error;

use crate::runtime::{LocalRecord, LocalState, Protocol};
use crate::tso::{Action, Internal, OpCall, ProcId, Ret, System, Value, VarId};

/// Largest value operation fixtures may write; values start at 1 and 0 is the default.
pub const OP_MAX_VALUE: i64 = 31;

pub const NAMES: &[&str] = &[
    "sb",
    "free",
    "random:SEED",
    "register-fenced",
    "register-unfenced",
    "register-alt-fence",
    "snapshot-rmw",
    "snapshot-scan-nofence",
    "snapshot-update-nofence",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FixtureError {
    #[error("unknown fixture `{0}`")]
    Unknown(String),
    #[error("fixture `{name}` does not support {procs} processes")]
    Procs { name: String, procs: usize },
}

/// The protocol called `name` on its default system with `procs` processes.
pub fn build(name: &str, procs: usize) -> Result<Box<dyn Protocol>, FixtureError> {
    let system = default_system(name, procs)?;
    resolve_for(name, &system).ok_or_else(|| FixtureError::Unknown(name.to_string()))
}

/// Like [`build`], discarding the reason for failure.
pub fn resolve(name: &str, procs: usize) -> Option<Box<dyn Protocol>> {
    build(name, procs).ok()
}

/// The default system of fixture `name`.
pub fn default_system(name: &str, procs: usize) -> Result<System, FixtureError> {
    let bad_procs = || FixtureError::Procs {
        name: name.to_string(),
        procs,
    };
    if procs == 0 {
        return Err(bad_procs());
    }
    let sys = |vars: Vec<String>, max: i64| System::new(procs, vars, 0..=max).map_err(|_| bad_procs());
    match name {
        "sb" if procs == 2 => sys(vec!["x".into(), "y".into()], 9),
        "sb" => Err(bad_procs()),
        "free" => sys(vec!["x".into(), "y".into()], 2),
        _ if parse_random(name).is_some() => sys(vec!["x".into(), "y".into()], 2),
        _ if OpKind::parse(name).is_some() => {
            let kind = OpKind::parse(name).unwrap();
            sys(kind.vars(procs), OP_MAX_VALUE)
        }
        _ => Err(FixtureError::Unknown(name.to_string())),
    }
}

/// The protocol called `name` over `system`, when that combination makes sense.
///
/// `free` and `random:SEED` accept any system; the operation fixtures need the
/// variables of their default system.
pub fn resolve_for(name: &str, system: &System) -> Option<Box<dyn Protocol>> {
    match name {
        "sb" => {
            let (x, y) = (system.var("x")?, system.var("y")?);
            if system.procs() != 2 || !system.contains_value(Value(1)) {
                return None;
            }
            Some(Box::new(Scripted::new(
                "sb",
                system.clone(),
                vec![
                    vec![Action::Write(x, Value(1)), Action::Read(y)],
                    vec![Action::Write(y, Value(1)), Action::Read(x)],
                ],
            )))
        }
        "free" => Some(Box::new(Free::new(system.clone()))),
        _ => {
            if let Some(seed) = parse_random(name) {
                return Some(Box::new(RandomProtocol::new(seed, system.clone())));
            }
            let kind = OpKind::parse(name)?;
            let vars = kind.vars(system.procs());
            let ids: Option<Vec<VarId>> = vars.iter().map(|v| system.var(v)).collect();
            Some(Box::new(OpFixture {
                name: name.to_string(),
                kind,
                system: system.clone(),
                vars: ids?,
            }))
        }
    }
}

fn parse_random(name: &str) -> Option<u64> {
    name.strip_prefix("random:")?.parse().ok()
}

/// Each process performs a fixed sequence of actions, then stays idle.
#[derive(Clone, Debug)]
pub struct Scripted {
    name: String,
    system: System,
    scripts: Vec<Vec<Action>>,
}

impl Scripted {
    pub fn new(name: impl Into<String>, system: System, scripts: Vec<Vec<Action>>) -> Self {
        Scripted {
            name: name.into(),
            system,
            scripts,
        }
    }
}

impl Protocol for Scripted {
    fn name(&self) -> &str {
        &self.name
    }

    fn system(&self) -> &System {
        &self.system
    }

    fn candidates(&self, proc: ProcId, local: &LocalState) -> Vec<Action> {
        let script = self.scripts.get(proc.index()).map(Vec::as_slice).unwrap_or(&[]);
        vec![script.get(local.len()).cloned().unwrap_or(Action::Null)]
    }
}

fn alphabet(system: &System) -> Vec<Action> {
    let vars: Vec<VarId> = (0..system.var_count()).map(|k| VarId(k as u16)).collect();
    let values: Vec<Value> = system.values().map(Value).collect();
    let mut out = Vec::new();
    for &x in &vars {
        out.push(Action::Read(x));
    }
    for &x in &vars {
        for &v in &values {
            out.push(Action::Write(x, v));
        }
    }
    out.push(Action::Fence);
    for &x in &vars {
        for &e in &values {
            for &v in &values {
                out.push(Action::Rmw {
                    var: x,
                    expected: e,
                    new: v,
                });
            }
        }
    }
    out
}

/// Every read, write, fence and RMW is always a candidate.
#[derive(Clone, Debug)]
pub struct Free {
    system: System,
    alphabet: Vec<Action>,
}

impl Free {
    pub fn new(system: System) -> Self {
        let alphabet = alphabet(&system);
        Free { system, alphabet }
    }
}

impl Protocol for Free {
    fn name(&self) -> &str {
        "free"
    }

    fn system(&self) -> &System {
        &self.system
    }

    fn candidates(&self, _proc: ProcId, _local: &LocalState) -> Vec<Action> {
        self.alphabet.clone()
    }

    fn permits(&self, _proc: ProcId, _local: &LocalState, action: &Action) -> bool {
        !matches!(action, Action::Prop | Action::Internal(_))
    }
}

/// FNV-1a, used to derive candidates from local states reproducibly.
struct Fnv(u64);

impl Hasher for Fnv {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100_0000_01b3);
        }
    }
}

/// A nondeterministic protocol whose candidates are a fixed pseudo-random
/// function of the seed, the process and its local state.
#[derive(Clone, Debug)]
pub struct RandomProtocol {
    name: String,
    seed: u64,
    system: System,
    alphabet: Vec<Action>,
}

impl RandomProtocol {
    pub fn new(seed: u64, system: System) -> Self {
        RandomProtocol {
            name: format!("random:{seed}"),
            seed,
            alphabet: alphabet(&system),
            system,
        }
    }
}

impl Protocol for RandomProtocol {
    fn name(&self) -> &str {
        &self.name
    }

    fn system(&self) -> &System {
        &self.system
    }

    fn candidates(&self, proc: ProcId, local: &LocalState) -> Vec<Action> {
        let mut h = Fnv(0xcbf2_9ce4_8422_2325);
        self.seed.hash(&mut h);
        proc.hash(&mut h);
        local.hash(&mut h);
        let x = h.finish();
        let len = self.alphabet.len() as u64;
        let first = self.alphabet[(x % len) as usize].clone();
        if (x >> 32) & 1 == 0 {
            return vec![first];
        }
        let second = self.alphabet[((x >> 33) % len) as usize].clone();
        if second == first {
            vec![first]
        } else {
            vec![first, second]
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum OpKind {
    RegisterFenced,
    RegisterUnfenced,
    RegisterAltFence,
    SnapshotRmw,
    SnapshotScanNoFence,
    SnapshotUpdateNoFence,
}

impl OpKind {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "register-fenced" => OpKind::RegisterFenced,
            "register-unfenced" => OpKind::RegisterUnfenced,
            "register-alt-fence" => OpKind::RegisterAltFence,
            "snapshot-rmw" => OpKind::SnapshotRmw,
            "snapshot-scan-nofence" => OpKind::SnapshotScanNoFence,
            "snapshot-update-nofence" => OpKind::SnapshotUpdateNoFence,
            _ => return None,
        })
    }

    fn is_register(self) -> bool {
        matches!(
            self,
            OpKind::RegisterFenced | OpKind::RegisterUnfenced | OpKind::RegisterAltFence
        )
    }

    fn vars(self, procs: usize) -> Vec<String> {
        if self.is_register() {
            vec!["x".into()]
        } else {
            (1..=procs).map(|k| format!("x{k}")).chain(["s".to_string()]).collect()
        }
    }
}

/// Operations the object supports: register or snapshot.
pub fn object_of(name: &str) -> Option<ObjectKind> {
    OpKind::parse(name).map(|k| {
        if k.is_register() {
            ObjectKind::Register
        } else {
            ObjectKind::Snapshot
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectKind {
    Register,
    Snapshot,
}

/// Register and snapshot implementations driven by invocations.
#[derive(Clone, Debug)]
struct OpFixture {
    name: String,
    kind: OpKind,
    system: System,
    /// Register: `[x]`. Snapshot: `[x1, .., xn, s]`.
    vars: Vec<VarId>,
}

fn ret(r: Ret) -> Action {
    Action::Internal(Internal::Return(r))
}

impl OpFixture {
    fn write_fences(&self, local: &LocalState) -> bool {
        match self.kind {
            OpKind::RegisterFenced | OpKind::SnapshotRmw | OpKind::SnapshotScanNoFence => true,
            OpKind::RegisterUnfenced | OpKind::SnapshotUpdateNoFence => false,
            OpKind::RegisterAltFence => {
                let writes = local
                    .records()
                    .iter()
                    .filter(|r| matches!(r, LocalRecord::Invoke(OpCall::Write(_))))
                    .count();
                writes % 2 == 1
            }
        }
    }

    fn write(&self, var: VarId, v: Value, done: &[LocalRecord], local: &LocalState) -> Action {
        match done {
            [] => Action::Write(var, v),
            [LocalRecord::Write(..)] if self.write_fences(local) => Action::Fence,
            _ => ret(Ret::Ack),
        }
    }

    fn scan(&self, done: &[LocalRecord]) -> Action {
        let n = self.system.procs();
        let s = self.vars[n];
        let reads = match (self.kind, done) {
            (OpKind::SnapshotScanNoFence, _) => done,
            (_, []) => {
                return Action::Rmw {
                    var: s,
                    expected: Value(0),
                    new: Value(0),
                }
            }
            (_, [_, rest @ ..]) => rest,
        };
        let values: Vec<Value> = reads
            .iter()
            .filter_map(|r| match r {
                LocalRecord::Read(_, v) => Some(*v),
                _ => None,
            })
            .collect();
        let c = values.len();
        if c >= 2 * n && c.is_multiple_of(n) && values[c - 2 * n..c - n] == values[c - n..] {
            let vector = values[c - n..].iter().map(|v| (v.0 != 0).then_some(*v)).collect();
            return ret(Ret::Vector(vector));
        }
        Action::Read(self.vars[c % n])
    }
}

impl Protocol for OpFixture {
    fn name(&self) -> &str {
        &self.name
    }

    fn system(&self) -> &System {
        &self.system
    }

    fn candidates(&self, proc: ProcId, local: &LocalState) -> Vec<Action> {
        let Some((call, done)) = local.current_operation() else {
            return vec![Action::Null];
        };
        let action = match (self.kind.is_register(), call) {
            (true, OpCall::Write(v)) => self.write(self.vars[0], *v, done, local),
            (true, OpCall::Read) => match done {
                [LocalRecord::Read(_, v)] => ret(Ret::Value(*v)),
                _ => Action::Read(self.vars[0]),
            },
            (false, OpCall::Update(v)) => self.write(self.vars[proc.index()], *v, done, local),
            (false, OpCall::Scan) => self.scan(done),
            // Operations the object does not support return at once.
            _ => ret(Ret::Ack),
        };
        vec![action]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalogue_resolves() {
        for name in NAMES {
            let name = name.replace("SEED", "7");
            let procs = if name == "sb" { 2 } else { 3 };
            let p = build(&name, procs).unwrap();
            assert_eq!(p.name(), name);
            assert!(resolve_for(&name, p.system()).is_some());
        }
        assert!(matches!(build("nope", 2), Err(FixtureError::Unknown(_))));
        assert!(matches!(build("sb", 3), Err(FixtureError::Procs { .. })));
    }

    #[test]
    fn idle_process_offers_null() {
        let p = build("register-fenced", 2).unwrap();
        assert_eq!(p.candidates(ProcId(1), &LocalState::default()), vec![Action::Null]);
    }

    #[test]
    fn fenced_write_steps() {
        let p = build("register-fenced", 2).unwrap();
        let x = VarId(0);
        let mut local = LocalState(vec![LocalRecord::Invoke(OpCall::Write(Value(4)))]);
        assert_eq!(p.candidates(ProcId(1), &local), vec![Action::Write(x, Value(4))]);
        local.0.push(LocalRecord::Write(x, Value(4)));
        assert_eq!(p.candidates(ProcId(1), &local), vec![Action::Fence]);
        local.0.push(LocalRecord::Fence);
        assert_eq!(p.candidates(ProcId(1), &local), vec![ret(Ret::Ack)]);
    }

    #[test]
    fn alt_fence_skips_even_writes() {
        let p = build("register-alt-fence", 1).unwrap();
        let x = VarId(0);
        let local = LocalState(vec![
            LocalRecord::Invoke(OpCall::Write(Value(1))),
            LocalRecord::Write(x, Value(1)),
            LocalRecord::Fence,
            LocalRecord::Internal(Internal::Return(Ret::Ack)),
            LocalRecord::Invoke(OpCall::Write(Value(2))),
            LocalRecord::Write(x, Value(2)),
        ]);
        assert_eq!(p.candidates(ProcId(1), &local), vec![ret(Ret::Ack)]);
    }

    #[test]
    fn double_collect_returns_on_match() {
        let p = build("snapshot-scan-nofence", 2).unwrap();
        let (x1, x2) = (VarId(0), VarId(1));
        let mut local = LocalState(vec![LocalRecord::Invoke(OpCall::Scan)]);
        let reads = [(x1, 3), (x2, 0), (x1, 3), (x2, 5), (x1, 3), (x2, 5)];
        let expect = [x1, x2, x1, x2, x1, x2];
        for (k, (var, v)) in reads.iter().enumerate() {
            assert_eq!(p.candidates(ProcId(1), &local), vec![Action::Read(expect[k])]);
            local.0.push(LocalRecord::Read(*var, Value(*v)));
        }
        assert_eq!(
            p.candidates(ProcId(1), &local),
            vec![ret(Ret::Vector(vec![Some(Value(3)), Some(Value(5))]))]
        );
    }

    #[test]
    fn random_protocol_is_reproducible() {
        let a = build("random:11", 2).unwrap();
        let b = build("random:11", 2).unwrap();
        let l = LocalState(vec![LocalRecord::Fence]);
        assert_eq!(a.candidates(ProcId(2), &l), b.candidates(ProcId(2), &l));
        assert!(!a.candidates(ProcId(2), &l).is_empty());
    }
}
