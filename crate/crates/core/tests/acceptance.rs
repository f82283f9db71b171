//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{
    all_nodes, exhaustive_moves, fuzz_instance, fuzz_run, idx, op_run, permutation_oracle, same_round_buffer_read,
    sequential_run, Closure, Object,
};
use tso_ob::causality::{ij_only_classify, Node, ObGraph};
use tso_ob::dtf::{
    check_appendix_claims, dtf_transform, local_equivalence, prop_time, runs_solo, solo_transform,
    unpropagated_transform, verify_dtf, DtfError,
};
use tso_ob::fixtures;
use tso_ob::linearizability::{
    check_linearizable, check_register_ob_necessity, check_snapshot_ob, sync_necessity_register,
    sync_necessity_snapshot, RegisterSpec, SnapshotSpec,
};
use tso_ob::runtime::{extract_history, validate_run, JointAction, Run};
use tso_ob::trace;
use tso_ob::tso::{Action, AgentId, EventKind, OpCall, ProcId, System, Value, VarId};

/// Fuzzed transform instances for criteria 1 and 2.
const DTF_INSTANCES: u64 = 1000;
/// Horizon of the exhaustive occurs-before enumeration.
const EXHAUSTIVE_HORIZON: usize = 6;
/// Horizon of the exhaustive enumeration with simultaneous moves.
const JOINT_HORIZON: usize = 3;
/// Horizon of the exhaustive {i,j}-only enumeration.
const IJ_HORIZON: usize = 5;
/// Minimum number of construction scenarios for criterion 4.
const MIN_SCENARIOS: usize = 300;
/// Runs drawn for the linearizability cross-check.
const LIN_RUNS: u64 = 200;
/// Largest history compared against the permutation oracle.
const ORACLE_OPS: usize = 6;
/// Seeds per fixture for the trace predicates and the unfenced foil.
const SEEDS: u64 = 200;
/// Bound on complete operations for the checker.
const LIN_BOUND: usize = 10;

/// Seed, run, set, delay and the transform's outcome.
type Instance = (u64, Run, BTreeSet<Node>, usize, Result<Run, DtfError>);

struct Outcome {
    pass: bool,
    summary: String,
    notes: Vec<String>,
}

fn report(id: usize, title: &str, started: Instant, outcome: &Outcome) {
    for note in &outcome.notes {
        println!("    {note}");
    }
    println!(
        "{} C{id} {title}: {} ({:.1}s)",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.summary,
        started.elapsed().as_secs_f64()
    );
}

/// An instance of criteria 1 and 2: a run, a set, a delay and the transform.
/// When the set covers an agent's whole timeline the run is padded by one round.
fn dtf_corpus() -> Vec<Instance> {
    (0..DTF_INSTANCES)
        .map(|seed| {
            let mut r = fuzz_run(seed);
            let (set, delta) = fuzz_instance(&r, seed);
            let mut out = dtf_transform(&r, &set, delta);
            if matches!(out, Err(DtfError::HorizonExhausted { .. })) {
                r = r.pad(1);
                out = dtf_transform(&r, &set, delta);
            }
            (seed, r, set, delta, out)
        })
        .collect()
}

fn c1(corpus: &[Instance]) -> Outcome {
    let mut failures = Vec::new();
    let mut same_round = 0usize;
    let mut by_kind: BTreeMap<String, usize> = BTreeMap::new();
    for (seed, r, set, delta, out) in corpus {
        match out {
            Ok(rp) => {
                let rep = verify_dtf(r, rp, set, *delta);
                for v in &rep.violations {
                    *by_kind.entry(format!("{:?}", v.kind)).or_default() += 1;
                }
                if !rep.is_empty() {
                    same_round += usize::from(same_round_buffer_read(r));
                    failures.push(format!("seed {seed}: {}", rep.violations[0].detail));
                }
            }
            Err(e) => {
                same_round += usize::from(same_round_buffer_read(r));
                *by_kind.entry("TransformError".into()).or_default() += 1;
                failures.push(format!("seed {seed}: {e}"));
            }
        }
    }
    let mut notes: Vec<String> = by_kind.iter().map(|(k, c)| format!("{k}: {c}")).collect();
    notes.push(format!(
        "failing instances with a buffer read and its propagation in one round: {same_round}/{}",
        failures.len()
    ));
    notes.extend(failures.iter().take(3).cloned());
    Outcome {
        pass: failures.is_empty(),
        summary: format!("{} instances, {} with violations", corpus.len(), failures.len()),
        notes,
    }
}

fn c2(corpus: &[Instance]) -> Outcome {
    let mut totals: BTreeMap<&'static str, (usize, usize, Option<String>)> = BTreeMap::new();
    let mut errors = 0;
    for (seed, r, set, delta, out) in corpus {
        let Ok(rp) = out else {
            errors += 1;
            continue;
        };
        match check_appendix_claims(r, rp, set, *delta) {
            Ok(claims) => {
                for c in claims.all() {
                    let e = totals.entry(c.name).or_default();
                    e.0 += c.checked;
                    e.1 += c.violations.len();
                    if e.2.is_none() {
                        e.2 = c.violations.first().map(|v| format!("seed {seed}: {v}"));
                    }
                }
            }
            Err(_) => errors += 1,
        }
    }
    let mut notes = Vec::new();
    let mut failed = Vec::new();
    for (name, (checked, violations, first)) in &totals {
        notes.push(format!("{name}: {checked} checked, {violations} violations"));
        if let Some(first) = first {
            notes.push(format!("  first: {first}"));
        }
        if *violations > 0 {
            failed.push(*name);
        }
    }
    Outcome {
        pass: failed.is_empty() && errors == 0,
        summary: if failed.is_empty() {
            format!("all claims hold, {errors} instances without a transform")
        } else {
            format!("claims violated: {}", failed.join(", "))
        },
        notes,
    }
}

/// Visits every run reachable with the given move generator, prefixes included.
fn enumerate(r: &Run, horizon: usize, moves: &dyn Fn(&Run) -> Vec<JointAction>, visit: &mut dyn FnMut(&Run)) {
    visit(r);
    if r.horizon() == horizon {
        return;
    }
    for joint in moves(r) {
        let mut next = r.clone();
        if next.push(joint).is_ok() {
            enumerate(&next, horizon, moves, visit);
        }
    }
}

/// Every combination of process actions and props that is enabled and conflict-free.
fn joint_moves(r: &Run) -> Vec<JointAction> {
    let singles = exhaustive_moves(r);
    let n = r.procs();
    let mut per_proc: Vec<Vec<Action>> = vec![vec![Action::Null]; n];
    let mut props: Vec<Vec<bool>> = vec![vec![false]; n];
    for j in &singles {
        for k in 0..n {
            if !j.procs[k].is_null() {
                per_proc[k].push(j.procs[k].clone());
            }
            if j.props[k] {
                props[k].push(true);
            }
        }
    }
    let mut out = vec![JointAction::idle(n)];
    for k in 0..n {
        out = out
            .into_iter()
            .flat_map(|j| {
                per_proc[k].iter().flat_map({
                    let props = props[k].clone();
                    move |a| {
                        let j = j.clone();
                        props.clone().into_iter().map(move |p| {
                            let mut j = j.clone();
                            j.procs[k] = a.clone();
                            j.props[k] = p;
                            j
                        })
                    }
                })
            })
            .collect();
    }
    out.retain(|j| !j.is_idle());
    out
}

fn check_ob_instance(r: &Run, mismatches: &mut usize, invariants: &mut usize, first: &mut Option<String>) {
    let graph = ObGraph::build(r);
    let oracle = Closure::build(r);
    let nodes = all_nodes(r);
    for &a in &nodes {
        for &b in &nodes {
            let got = graph.ob(a, b);
            if got != oracle.get(idx(r, a), idx(r, b)) {
                *mismatches += 1;
                first.get_or_insert_with(|| format!("{a} -> {b}: kernel {got}\n{}", trace::emit(r)));
            }
            if got && (a == b || graph.ob(b, a)) {
                *invariants += 1;
                first.get_or_insert_with(|| format!("{a} and {b} are not strictly ordered"));
            }
        }
    }
    for e in graph.edges() {
        let into_process_from_dispatcher = !e.from.agent.is_process() && e.to.agent.is_process();
        let lands_on_sync = r.event(e.to.agent, e.to.time).is_some_and(EventKind::is_sync);
        if e.from.time >= e.to.time
            || (into_process_from_dispatcher && e.from.agent.proc() == e.to.agent.proc() && !lands_on_sync)
        {
            *invariants += 1;
            first.get_or_insert_with(|| format!("edge {e:?} breaks the time or fence observation"));
        }
    }
}

fn c3() -> Outcome {
    let system = System::new(2, ["x"], 0..=1).unwrap();
    let root = Run::new(system, "free", None);
    let (mut runs, mut mismatches, mut invariants) = (0usize, 0usize, 0usize);
    let mut first = None;
    enumerate(&root, EXHAUSTIVE_HORIZON, &exhaustive_moves, &mut |r| {
        runs += 1;
        check_ob_instance(r, &mut mismatches, &mut invariants, &mut first);
    });
    let single = runs;
    enumerate(&root, JOINT_HORIZON, &joint_moves, &mut |r| {
        runs += 1;
        check_ob_instance(r, &mut mismatches, &mut invariants, &mut first);
    });
    Outcome {
        pass: mismatches == 0 && invariants == 0,
        summary: format!(
            "{runs} runs ({single} single-mover up to horizon {EXHAUSTIVE_HORIZON}, {} joint up to horizon {JOINT_HORIZON}), {mismatches} oracle mismatches, {invariants} invariant violations",
            runs - single
        ),
        notes: first.into_iter().collect(),
    }
}

/// {i,j}-only chains between process nodes with no case of the lemma.
fn unclassified(r: &Run) -> (usize, Option<String>) {
    let graph = ObGraph::build(r);
    let n = r.procs();
    let mut chains = 0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (pi, pj) = (ProcId::from_index(i), ProcId::from_index(j));
            for t1 in 0..=r.horizon() {
                for t2 in t1 + 1..=r.horizon() {
                    let (a, b) = (Node::process(pi, t1), Node::process(pj, t2));
                    let Ok(c) = ij_only_classify(r, &graph, a, b, pi, pj) else {
                        continue;
                    };
                    chains += 1;
                    if c.cases.is_empty() {
                        return (chains, Some(format!("{a} ⇝ {b} has no case\n{}", trace::emit(r))));
                    }
                }
            }
        }
    }
    (chains, None)
}

/// i: W(y)@0, RfM(x)@1; j: W(x)@0, W(y)@1; d_j props x@2, y@3; d_i props y@4; j: RfM(y)@5.
fn two_variable_chain() -> Run {
    let s = System::new(2, ["x", "y"], 0..=2).unwrap();
    let (x, y) = (VarId(0), VarId(1));
    let joint = |p1: Action, p2: Action, props: [bool; 2]| JointAction {
        procs: vec![p1, p2],
        props: props.to_vec(),
        invokes: vec![],
    };
    let mut r = Run::new(s, "free", None);
    for j in [
        joint(Action::Write(y, Value(1)), Action::Write(x, Value(1)), [false, false]),
        joint(Action::Read(x), Action::Write(y, Value(2)), [false, false]),
        joint(Action::Null, Action::Null, [false, true]),
        joint(Action::Null, Action::Null, [false, true]),
        joint(Action::Null, Action::Null, [true, false]),
        joint(Action::Null, Action::Read(y), [false, false]),
    ] {
        r.push(j).unwrap();
    }
    r
}

fn c4() -> Outcome {
    let mut notes = Vec::new();
    let mut failures: Vec<String> = Vec::new();

    let (mut solo_ok, mut solo_feedback) = (0usize, 0usize);
    for seed in 0..120u64 {
        let fixture = [
            "register-fenced",
            "register-unfenced",
            "snapshot-rmw",
            "snapshot-scan-nofence",
        ][seed as usize % 4];
        let r = op_run(fixture, 2 + (seed as usize / 4) % 2, seed, 24, 4);
        let h = extract_history(&r).unwrap();
        let graph = ObGraph::build(&r);
        for op in h.complete() {
            let loop_node = graph
                .feedback_loop(
                    Node::process(op.proc, op.start),
                    Node::process(op.proc, op.end.unwrap()),
                )
                .unwrap();
            if loop_node.is_some() {
                solo_feedback += 1;
                continue;
            }
            match solo_transform(&r, op) {
                Ok(m) => {
                    let valid = validate_run(&m.run, fixtures::resolve_for(&r.protocol, &r.system).as_deref());
                    if runs_solo(&m.run, &m.op) && local_equivalence(&r, &m.run).equivalent && valid.is_empty() {
                        solo_ok += 1;
                    } else {
                        failures.push(format!("solo {fixture} seed {seed} op {}: checks failed", op.id));
                    }
                }
                Err(e) => failures.push(format!("solo {fixture} seed {seed} op {}: {e}", op.id)),
            }
        }
    }
    notes.push(format!(
        "solo: {solo_ok} transformed, {solo_feedback} skipped with a feedback loop"
    ));

    let mut unprop_ok = 0usize;
    for seed in 0..120u64 {
        let fixture = ["register-unfenced", "snapshot-update-nofence"][seed as usize % 2];
        let r = op_run(fixture, 2 + (seed as usize / 2) % 2, seed, 24, 4);
        let h = extract_history(&r).unwrap();
        let graph = ObGraph::build(&r);
        for op in h.complete() {
            if !matches!(op.call, OpCall::Write(_) | OpCall::Update(_)) {
                continue;
            }
            let end = op.end.unwrap();
            let kappa = (op.start..end).find_map(|t| match r.event(AgentId::Process(op.proc), t) {
                Some(EventKind::Write { tag, .. }) => Some(*tag),
                _ => None,
            });
            let Some(kappa) = kappa else { continue };
            if graph
                .feedback_loop(Node::process(op.proc, op.start), Node::process(op.proc, end))
                .unwrap()
                .is_some()
            {
                continue;
            }
            match unpropagated_transform(&r, op, kappa) {
                Ok(m) => {
                    let te = m.op.end.unwrap();
                    if prop_time(&m.run, kappa).is_none_or(|t| t >= te) && local_equivalence(&r, &m.run).equivalent {
                        unprop_ok += 1;
                    } else {
                        failures.push(format!(
                            "unpropagated {fixture} seed {seed} op {}: κ propagated early",
                            op.id
                        ));
                    }
                }
                Err(e) => failures.push(format!("unpropagated {fixture} seed {seed} op {}: {e}", op.id)),
            }
        }
    }
    notes.push(format!("unpropagated: {unprop_ok} transformed"));

    let system = System::new(2, ["x"], 0..=1).unwrap();
    let (mut one_var_runs, mut one_var_chains) = (0usize, 0usize);
    let mut one_var_fail = None;
    enumerate(
        &Run::new(system, "free", None),
        IJ_HORIZON,
        &exhaustive_moves,
        &mut |r| {
            one_var_runs += 1;
            let (chains, fail) = unclassified(r);
            one_var_chains += chains;
            if one_var_fail.is_none() {
                one_var_fail = fail;
            }
        },
    );
    notes.push(format!(
        "ij-only, 1 variable exhaustive: {one_var_runs} runs, {one_var_chains} chains, {}",
        if one_var_fail.is_some() {
            "unclassified chain found"
        } else {
            "all classified"
        }
    ));
    failures.extend(one_var_fail);

    let (mut fuzz_chains, mut fuzz_unclassified) = (0usize, 0usize);
    let mut fuzz_first = None;
    for seed in 0..400 {
        let (chains, fail) = unclassified(&fuzz_run(seed));
        fuzz_chains += chains;
        if let Some(f) = fail {
            fuzz_unclassified += 1;
            fuzz_first.get_or_insert(format!("seed {seed}: {f}"));
        }
    }
    notes.push(format!(
        "ij-only, 2 variables fuzzed: {fuzz_chains} chains, {fuzz_unclassified} runs with an unclassified chain"
    ));
    failures.extend(fuzz_first);
    let (_, fixed) = unclassified(&two_variable_chain());
    notes.push(format!(
        "ij-only, 2 variables hand-built: {}",
        if fixed.is_some() {
            "unclassified chain p1@1 ⇝ p2@5"
        } else {
            "classified"
        }
    ));
    failures.extend(fixed);

    let scenarios = solo_ok + unprop_ok;
    if scenarios < MIN_SCENARIOS {
        failures.push(format!("only {scenarios} transform scenarios"));
    }
    if let Some(f) = failures.first() {
        notes.push(format!("first failure: {}", f.lines().next().unwrap_or("")));
    }
    Outcome {
        pass: failures.is_empty(),
        summary: format!("{scenarios} transform scenarios, {} failures", failures.len()),
        notes,
    }
}

fn c5() -> Outcome {
    let mut notes = Vec::new();
    let (mut compared, mut disagreements) = (0usize, 0usize);
    let mut first = None;
    for seed in 0..LIN_RUNS {
        let (fixture, object) = match seed % 4 {
            0 => ("register-fenced", Object::Register),
            1 => ("register-unfenced", Object::Register),
            2 => ("snapshot-rmw", Object::Snapshot(2)),
            _ => ("snapshot-update-nofence", Object::Snapshot(2)),
        };
        let r = op_run(fixture, 2, seed, 30, ORACLE_OPS);
        let h = extract_history(&r).unwrap();
        if h.ops.len() > ORACLE_OPS {
            continue;
        }
        compared += 1;
        let fast = match object {
            Object::Register => check_linearizable(&h, &RegisterSpec::default(), LIN_BOUND),
            Object::Snapshot(n) => check_linearizable(&h, &SnapshotSpec { procs: n }, LIN_BOUND),
        }
        .unwrap()
        .is_some();
        if fast != permutation_oracle(&h, object) {
            disagreements += 1;
            first.get_or_insert(format!("{fixture} seed {seed}: checker says {fast}"));
        }
    }
    notes.push(format!(
        "oracle cross-check: {compared} histories, {disagreements} disagreements"
    ));

    let mut fenced_bad = 0;
    let mut foil_bad = 0;
    for seed in 0..SEEDS {
        let fenced = extract_history(&op_run("register-fenced", 2 + seed as usize % 2, seed, 40, 8)).unwrap();
        if check_linearizable(&fenced, &RegisterSpec::default(), LIN_BOUND)
            .unwrap()
            .is_none()
        {
            fenced_bad += 1;
        }
        let foil = extract_history(&op_run("register-unfenced", 2 + seed as usize % 2, seed, 40, 8)).unwrap();
        if check_linearizable(&foil, &RegisterSpec::default(), LIN_BOUND)
            .unwrap()
            .is_none()
        {
            foil_bad += 1;
        }
    }
    notes.push(format!("register-fenced: {fenced_bad}/{SEEDS} non-linearizable"));
    notes.push(format!("register-unfenced: {foil_bad}/{SEEDS} non-linearizable"));
    notes.extend(first);
    Outcome {
        pass: disagreements == 0 && compared > 0 && fenced_bad == 0 && foil_bad > 0,
        summary: format!("{compared} histories cross-checked, fenced {fenced_bad} bad, foil {foil_bad} bad"),
        notes,
    }
}

fn c6() -> Outcome {
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    let (mut reg_pairs, mut snap_pairs) = (0usize, 0usize);
    for seed in 0..SEEDS {
        let n = 2 + seed as usize % 2;
        let r = op_run("register-fenced", n, seed, 40, 8);
        let rep = check_register_ob_necessity(&r).unwrap();
        reg_pairs += rep.checked;
        if !rep.is_empty() {
            failures.push(format!("register-fenced seed {seed}: {}", rep.violations[0].detail));
        }
        let r = op_run("snapshot-rmw", n, seed, 60, 6);
        let rep = check_snapshot_ob(&r).unwrap();
        snap_pairs += rep.checked;
        if !rep.is_empty() {
            failures.push(format!(
                "snapshot-rmw seed {seed}: {:?} {}",
                rep.violations[0].check, rep.violations[0].detail
            ));
        }
    }
    notes.push(format!(
        "register pairs checked: {reg_pairs}; snapshot pairs checked: {snap_pairs}"
    ));

    let mut scenarios = 0usize;
    let mut sync_failures = 0usize;
    let cases: [(&str, OpCall, bool); 3] = [
        ("register-fenced", OpCall::Read, true),
        ("snapshot-update-nofence", OpCall::Update(Value(0)), false),
        ("snapshot-scan-nofence", OpCall::Scan, false),
    ];
    for (fixture, x_call, register) in cases {
        for seed in 0..40u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..=3);
            let mut next = 1;
            let mut fresh = |call: &OpCall| match call {
                OpCall::Write(_) => {
                    next += 1;
                    OpCall::Write(Value(next - 1))
                }
                OpCall::Update(_) => {
                    next += 1;
                    OpCall::Update(Value(next - 1))
                }
                other => other.clone(),
            };
            let mix = if register {
                [OpCall::Read, OpCall::Write(Value(0))]
            } else {
                [OpCall::Scan, OpCall::Update(Value(0))]
            };
            let mut calls: Vec<(ProcId, OpCall)> = (0..rng.gen_range(0..4))
                .map(|_| {
                    let p = ProcId::from_index(rng.gen_range(0..n));
                    (p, fresh(&mix[rng.gen_range(0..2)]))
                })
                .collect();
            let i = ProcId::from_index(rng.gen_range(0..n));
            calls.push((i, fresh(&x_call)));
            let r = sequential_run(fixture, n, &calls);
            let h = extract_history(&r).unwrap();
            let x = h.ops.last().unwrap();
            let result = if register {
                sync_necessity_register(&r, x)
            } else {
                sync_necessity_snapshot(&r, x)
            };
            scenarios += 1;
            match result {
                Ok(rep) if rep.follow_up_syncs && rep.prefix_matches => {}
                Ok(rep) => {
                    sync_failures += 1;
                    failures.push(format!(
                        "{fixture} seed {seed}: follow-up syncs {}, prefix matches {}",
                        rep.follow_up_syncs, rep.prefix_matches
                    ));
                }
                Err(e) => {
                    sync_failures += 1;
                    failures.push(format!("{fixture} seed {seed}: {e}"));
                }
            }
        }
    }
    notes.push(format!("sync scenarios: {scenarios}, {sync_failures} failed"));
    notes.extend(failures.first().cloned());
    Outcome {
        pass: failures.is_empty(),
        summary: format!("{} seeds per fixture, {} failures", SEEDS, failures.len()),
        notes,
    }
}

fn c7() -> Outcome {
    let mut runs = 0usize;
    let mut failures = Vec::new();
    let mut corpus: Vec<Run> = Vec::new();
    for name in fixtures::NAMES {
        for seed in 0..25u64 {
            let name = name.replace("SEED", &seed.to_string());
            let n = if name == "sb" { 2 } else { 2 + seed as usize % 2 };
            let emit_one = || {
                let p = fixtures::build(&name, n).unwrap();
                let op_mix = match fixtures::object_of(&name) {
                    Some(fixtures::ObjectKind::Register) => vec![OpCall::Read, OpCall::Write(Value(0))],
                    Some(fixtures::ObjectKind::Snapshot) => vec![OpCall::Update(Value(0)), OpCall::Scan],
                    None => vec![],
                };
                let config = tso_ob::runtime::RandomSchedulerConfig {
                    max_ops: 6,
                    op_mix,
                    ..Default::default()
                };
                let mut s = tso_ob::runtime::RandomScheduler::new(seed, config);
                tso_ob::runtime::simulate(p.as_ref(), &mut s, 16).unwrap()
            };
            let (a, b) = (emit_one(), emit_one());
            if trace::emit(&a) != trace::emit(&b) {
                failures.push(format!("{name} seed {seed}: traces differ"));
            }
            corpus.push(a);
        }
    }
    for seed in 0..DTF_INSTANCES {
        corpus.push(fuzz_run(seed));
    }
    for r in &corpus {
        runs += 1;
        let text = trace::emit(r);
        match trace::parse(&text) {
            Ok(back) if back == *r && trace::emit(&back) == text => {}
            Ok(_) => failures.push(format!("{}: round trip changed the run", r.protocol)),
            Err(e) => failures.push(format!("{}: {e}", r.protocol)),
        }
    }
    Outcome {
        pass: failures.is_empty(),
        summary: format!("{runs} traces, {} failures", failures.len()),
        notes: failures.into_iter().take(3).collect(),
    }
}

fn main() {
    let mut all = true;
    let mut run = |id: usize, title: &str, f: &dyn Fn() -> Outcome| {
        let started = Instant::now();
        let outcome = f();
        report(id, title, started, &outcome);
        all &= outcome.pass;
    };
    let corpus = dtf_corpus();
    run(1, "delaying-the-future theorem on fuzzed instances", &|| c1(&corpus));
    run(2, "appendix claims on the same corpus", &|| c2(&corpus));
    run(3, "occurs-before kernel against a transitive-closure oracle", &c3);
    run(4, "solo, unpropagated and {i,j}-only constructions", &c4);
    run(5, "linearizability checker against a permutation oracle", &c5);
    run(6, "occurs-before necessity and synchronization scenarios", &c6);
    run(7, "determinism and trace round trip", &c7);
    if !all {
        std::process::exit(1);
    }
}
