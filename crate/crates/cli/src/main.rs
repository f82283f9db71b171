use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use tso_ob::causality::{Node, ObGraph};
use tso_ob::dtf::{dtf_transform, local_equivalence, runs_solo, solo_transform, verify_dtf};
use tso_ob::fixtures::{self, ObjectKind};
use tso_ob::linearizability::{
    check_linearizable, minimal_violation, sync_necessity_register, sync_necessity_snapshot, History, LinError,
    RegisterSpec, SequentialSpec, SnapshotSpec, DEFAULT_BOUND,
};
use tso_ob::runtime::{extract_history, quiesce, simulate, validate_run, RandomScheduler, RandomSchedulerConfig, Run};
use tso_ob::trace;
use tso_ob::tso::{AgentId, OpCall, ProcId, Value};

const OK: u8 = 0;
const VIOLATION: u8 = 1;
const USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "tso-ob", version, about = "Simulate and analyze runs of a TSO machine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a fixture under a seeded random schedule and write the trace.
    Simulate {
        #[arg(long)]
        fixture: String,
        #[arg(long, default_value_t = 2)]
        procs: usize,
        #[arg(long, default_value_t = 12)]
        rounds: usize,
        #[arg(long, env = "TSO_OB_SEED", default_value_t = 0)]
        seed: u64,
        /// Number of operations to invoke (operation fixtures only).
        #[arg(long, default_value_t = 4)]
        ops: usize,
        /// Append props until every buffer is empty.
        #[arg(long)]
        quiesce: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analyze a trace file.
    Analyze {
        trace: PathBuf,
        /// Print the report as JSON.
        #[arg(long, global = true)]
        json: bool,
        #[command(subcommand)]
        query: Query,
    },
}

#[derive(Subcommand)]
enum Query {
    /// Occurs-before query between two nodes, e.g. `p1@0` and `d2@3`.
    Ob {
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
    },
    /// Past and past-plus of a set of nodes.
    Past {
        #[arg(long, value_delimiter = ',')]
        nodes: Vec<String>,
    },
    /// Delay everything outside the past of the given nodes.
    Transform {
        #[arg(long, value_delimiter = ',')]
        nodes: Vec<String>,
        #[arg(long)]
        delta: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Make an operation run solo.
    Solo {
        #[arg(long)]
        op: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the history against a sequential specification.
    CheckLin {
        #[arg(long, value_enum)]
        spec: SpecKind,
        #[arg(long, default_value_t = DEFAULT_BOUND)]
        bound: usize,
    },
    /// Run the synchronization-necessity construction after an operation.
    Sync {
        #[arg(long)]
        op: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SpecKind {
    Register,
    Snapshot,
}

struct Failure(u8, String);

type Outcome = Result<u8, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure(USAGE, msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            fixture,
            procs,
            rounds,
            seed,
            ops,
            quiesce,
            out,
        } => cmd_simulate(&fixture, procs, rounds, seed, ops, quiesce, out),
        Command::Analyze { trace, json, query } => cmd_analyze(&trace, json, query),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn write_out(out: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_simulate(
    fixture: &str,
    procs: usize,
    rounds: usize,
    seed: u64,
    ops: usize,
    settle: bool,
    out: Option<PathBuf>,
) -> Outcome {
    let protocol = fixtures::build(fixture, procs).map_err(|e| usage(e.to_string()))?;
    let op_mix = match fixtures::object_of(fixture) {
        Some(ObjectKind::Register) => vec![OpCall::Read, OpCall::Write(Value(0))],
        Some(ObjectKind::Snapshot) => vec![OpCall::Update(Value(0)), OpCall::Scan],
        None => Vec::new(),
    };
    let config = RandomSchedulerConfig {
        max_ops: ops,
        op_mix,
        ..RandomSchedulerConfig::default()
    };
    let mut scheduler = RandomScheduler::new(seed, config);
    let mut run = simulate(protocol.as_ref(), &mut scheduler, rounds).map_err(|e| usage(e.to_string()))?;
    if settle {
        run = quiesce(&run);
    }
    let report = validate_run(&run, Some(protocol.as_ref()));
    for v in &report.violations {
        eprintln!("{v}");
    }
    write_out(out.as_ref(), &trace::emit(&run))?;
    Ok(if report.is_empty() { OK } else { VIOLATION })
}

fn parse_node(s: &str, procs: usize) -> Result<Node, Failure> {
    let bad = || usage(format!("invalid node `{s}`, expected e.g. p1@3 or d1@3"));
    let (agent, time) = s.trim().split_once('@').ok_or_else(bad)?;
    let time: usize = time.parse().map_err(|_| bad())?;
    let (kind, k) = agent.split_at(1);
    let k: u16 = k.parse().map_err(|_| bad())?;
    if k == 0 || k as usize > procs {
        return Err(usage(format!("node `{s}` names an unknown process")));
    }
    let agent = match kind {
        "p" => AgentId::Process(ProcId(k)),
        "d" => AgentId::Dispatcher(ProcId(k)),
        _ => return Err(bad()),
    };
    Ok(Node::new(agent, time))
}

fn parse_nodes(list: &[String], r: &Run) -> Result<BTreeSet<Node>, Failure> {
    let nodes = list
        .iter()
        .map(|s| parse_node(s, r.procs()))
        .collect::<Result<BTreeSet<_>, _>>()?;
    if let Some(n) = nodes.iter().find(|n| n.time > r.horizon()) {
        return Err(usage(format!("node {n} lies beyond the horizon {}", r.horizon())));
    }
    Ok(nodes)
}

fn load(path: &PathBuf) -> Result<Run, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let run = trace::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let protocol = fixtures::resolve_for(&run.protocol, &run.system);
    let report = validate_run(&run, protocol.as_deref());
    if let Some(v) = report.violations.first() {
        return Err(usage(format!("{}: not a valid run: {v}", path.display())));
    }
    Ok(run)
}

fn emit_report(as_json: bool, value: serde_json::Value, text: String) {
    if as_json {
        println!("{}", serde_json::to_string_pretty(&value).expect("reports serialize"));
    } else {
        print!("{text}");
    }
}

fn nodes_str(nodes: &BTreeSet<Node>) -> String {
    nodes.iter().map(Node::to_string).collect::<Vec<_>>().join(" ")
}

fn operation(h: &History, id: usize) -> Result<&tso_ob::linearizability::Operation, Failure> {
    h.ops
        .get(id)
        .ok_or_else(|| usage(format!("no operation {id}; the trace has {}", h.ops.len())))
}

fn cmd_analyze(path: &PathBuf, as_json: bool, query: Query) -> Outcome {
    let r = load(path)?;
    match query {
        Query::Ob { from, to } => {
            let (a, b) = (parse_node(&from, r.procs())?, parse_node(&to, r.procs())?);
            let graph = ObGraph::build(&r);
            if !graph.contains(a) || !graph.contains(b) {
                return Err(usage(format!("nodes must lie within the horizon {}", r.horizon())));
            }
            let chain = graph.query(a, b);
            let text = match &chain {
                Some(edges) => edges
                    .iter()
                    .map(|e| format!("{} -> {} [{:?}]\n", e.from, e.to, e.kind))
                    .collect(),
                None => "none\n".to_string(),
            };
            emit_report(as_json, json!({ "from": a, "to": b, "chain": chain }), text);
            Ok(OK)
        }
        Query::Past { nodes } => {
            let set = parse_nodes(&nodes, &r)?;
            let graph = ObGraph::build(&r);
            let past = graph.past(&set).map_err(|e| usage(e.to_string()))?;
            let plus = graph.past_plus(&set).map_err(|e| usage(e.to_string()))?;
            let m_hat = graph.m_hat_all(&set).map_err(|e| usage(e.to_string()))?;
            let thresholds: Vec<String> = AgentId::all(r.procs())
                .map(|b| format!("{b}={}", m_hat[b.index(r.procs())]))
                .collect();
            let text = format!(
                "past: {}\npast-plus: {}\nthresholds: {}\n",
                nodes_str(&past),
                nodes_str(&plus),
                thresholds.join(" ")
            );
            emit_report(
                as_json,
                json!({ "past": past, "past_plus": plus, "m_hat": m_hat }),
                text,
            );
            Ok(OK)
        }
        Query::Transform { nodes, delta, out } => {
            let set = parse_nodes(&nodes, &r)?;
            let rp = dtf_transform(&r, &set, delta).map_err(|e| Failure(VIOLATION, e.to_string()))?;
            let report = verify_dtf(&r, &rp, &set, delta);
            if let Some(path) = &out {
                write_out(Some(path), &trace::emit(&rp))?;
            }
            let mut text: String = report
                .violations
                .iter()
                .map(|v| format!("{:?}: {}\n", v.kind, v.detail))
                .collect();
            text.push_str(&format!("verify: {} violations\n", report.violations.len()));
            if out.is_none() && !as_json {
                text = trace::emit(&rp) + &text;
            }
            emit_report(as_json, json!({ "horizon": rp.horizon(), "report": report }), text);
            Ok(if report.is_empty() { OK } else { VIOLATION })
        }
        Query::Solo { op, out } => {
            let h = extract_history(&r).map_err(|e| usage(e.to_string()))?;
            let x = operation(&h, op)?;
            let moved = solo_transform(&r, x).map_err(|e| Failure(VIOLATION, e.to_string()))?;
            let solo = runs_solo(&moved.run, &moved.op);
            let eq = local_equivalence(&r, &moved.run);
            let valid = validate_run(&moved.run, fixtures::resolve_for(&r.protocol, &r.system).as_deref());
            if let Some(path) = &out {
                write_out(Some(path), &trace::emit(&moved.run))?;
            }
            let text = format!(
                "operation {op}: start {} end {:?}\nsolo: {solo}\nequivalent: {}\nvalid: {}\n",
                moved.op.start,
                moved.op.end,
                eq.equivalent,
                valid.is_empty()
            );
            emit_report(
                as_json,
                json!({ "op": moved.op, "solo": solo, "equivalent": eq.equivalent, "violations": valid.violations }),
                text,
            );
            Ok(if solo && eq.equivalent && valid.is_empty() {
                OK
            } else {
                VIOLATION
            })
        }
        Query::CheckLin { spec, bound } => {
            let h = extract_history(&r).map_err(|e| usage(e.to_string()))?;
            match spec {
                SpecKind::Register => check_lin(&h, &RegisterSpec::default(), bound, as_json),
                SpecKind::Snapshot => check_lin(&h, &SnapshotSpec { procs: r.procs() }, bound, as_json),
            }
        }
        Query::Sync { op, out } => {
            let h = extract_history(&r).map_err(|e| usage(e.to_string()))?;
            let x = operation(&h, op)?;
            let report = match x.call {
                OpCall::Read | OpCall::Write(_) => sync_necessity_register(&r, x),
                OpCall::Update(_) | OpCall::Scan => sync_necessity_snapshot(&r, x),
            }
            .map_err(|e| Failure(VIOLATION, e.to_string()))?;
            if let Some(path) = &out {
                write_out(Some(path), &trace::emit(&report.run))?;
            }
            let text = format!(
                "follow-up: {} {:?} start {} end {:?}\nfollow-up synchronizes: {}\nprefix matches: {}\nob chain: {}\n",
                report.follow_up.proc,
                report.follow_up.call,
                report.follow_up.start,
                report.follow_up.end,
                report.follow_up_syncs,
                report.prefix_matches,
                report.ob_chain
            );
            let ok = report.follow_up_syncs && report.prefix_matches;
            emit_report(
                as_json,
                json!({
                    "follow_up": report.follow_up,
                    "follow_up_syncs": report.follow_up_syncs,
                    "prefix_matches": report.prefix_matches,
                    "ob_chain": report.ob_chain,
                    "ij_cases": report.ij_cases,
                }),
                text,
            );
            Ok(if ok { OK } else { VIOLATION })
        }
    }
}

fn check_lin<S: SequentialSpec>(h: &History, spec: &S, bound: usize, as_json: bool) -> Outcome {
    let lin_err = |e: LinError| usage(e.to_string());
    match check_linearizable(h, spec, bound).map_err(lin_err)? {
        Some(order) => {
            let text = format!(
                "linearizable: {}\n",
                order.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
            );
            emit_report(as_json, json!({ "linearizable": true, "order": order }), text);
            Ok(OK)
        }
        None => {
            let ops = minimal_violation(h, spec, bound).map_err(lin_err)?.unwrap_or_default();
            let listed: String = ops
                .iter()
                .map(|&k| {
                    let o = &h.ops[k];
                    format!(
                        "  {k}: {} {:?} -> {:?} [{}, {:?}]\n",
                        o.proc, o.call, o.ret, o.start, o.end
                    )
                })
                .collect();
            let text = format!("NOT linearizable; minimal violating set:\n{listed}");
            emit_report(as_json, json!({ "linearizable": false, "violating": ops }), text);
            Ok(VIOLATION)
        }
    }
}
