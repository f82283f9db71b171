//! Line-oriented text format for runs.
//!
//! ```text
//! # tso-trace
//! version 1
//! procs 2
//! vars x y
//! values 0..=9
//! init x=0 y=0
//! protocol sb
//! seed none
//! horizon 2
//! round 1
//! p1 W(x,1) => W(x,1)#p1.1
//! env p2 invoke Read
//! round 2
//! d1 Prop => Prop(x,1)#p1.1
//! p2 R(x) => RfM(x,0)@init
//! final-memory x=1@p1.1 y=0@init
//! final-buffer p1 []
//! final-buffer p2 []
//! end
//! ```
//!
//! Each agent line shows the scheduled action and the recorded event; agents
//! without a line do nothing. `#` introduces a write tag and `@` the origin of
//! a value read from memory. Parsing replays every round and rejects traces
//! whose recorded events or final state disagree with the replay.

use std::fmt::Write as _;

use thiserror::Error;

use crate::runtime::{joint_apply, Invocation, JointAction, Run};
use crate::tso::{
    Action, AgentId, BufferEntry, EventKind, Internal, OpCall, ProcId, Provenance, Ret, System, Tag, Value, VarId,
};

pub const VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: replay failed: {message}")]
    Replay { line: usize, message: String },
    #[error("line {line}: recorded {recorded}, replay yields {replayed}")]
    Mismatch {
        line: usize,
        recorded: String,
        replayed: String,
    },
}

impl TraceError {
    pub fn line(&self) -> usize {
        match self {
            TraceError::Syntax { line, .. } | TraceError::Replay { line, .. } | TraceError::Mismatch { line, .. } => {
                *line
            }
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            ')' => out.push_str("\\)"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            ')' => ')',
            'n' => '\n',
            'r' => '\r',
            _ => return None,
        });
    }
    Some(out)
}

fn ret_str(r: &Ret) -> String {
    match r {
        Ret::Ack => "Ack".into(),
        Ret::Value(v) => v.to_string(),
        Ret::Vector(vs) => {
            let parts: Vec<String> = vs
                .iter()
                .map(|v| v.map_or_else(|| "_".to_string(), |v| v.to_string()))
                .collect();
            format!("[{}]", parts.join(","))
        }
    }
}

fn internal_str(i: &Internal) -> String {
    match i {
        Internal::Return(r) => format!("Ret({})", ret_str(r)),
        Internal::Note(s) => format!("Note({})", escape(s)),
    }
}

fn action_str(s: &System, a: &Action) -> String {
    match a {
        Action::Read(x) => format!("R({})", s.var_name(*x)),
        Action::Write(x, v) => format!("W({},{v})", s.var_name(*x)),
        Action::Fence => "F".into(),
        Action::Rmw { var, expected, new } => format!("RMW({},{expected},{new})", s.var_name(*var)),
        Action::Null => "-".into(),
        Action::Internal(i) => internal_str(i),
        Action::Prop => "Prop".into(),
    }
}

fn event_str(s: &System, e: &EventKind) -> String {
    match e {
        EventKind::Null => "-".into(),
        EventKind::Write { var, value, tag } => format!("W({},{value})#{tag}", s.var_name(*var)),
        EventKind::ReadBuffer { var, value, tag } => format!("RfB({},{value})#{tag}", s.var_name(*var)),
        EventKind::ReadMemory { var, value, source } => format!("RfM({},{value})@{source}", s.var_name(*var)),
        EventKind::Fence => "F".into(),
        EventKind::Rmw {
            var,
            expected,
            new,
            source,
            tag,
        } => format!("RMW({},{expected},{new})@{source}#{tag}", s.var_name(*var)),
        EventKind::Prop { var, value, tag } => format!("Prop({},{value})#{tag}", s.var_name(*var)),
        EventKind::Internal(i) => internal_str(i),
    }
}

fn call_str(c: &OpCall) -> String {
    match c {
        OpCall::Read => "Read".into(),
        OpCall::Write(v) => format!("Write({v})"),
        OpCall::Update(v) => format!("Update({v})"),
        OpCall::Scan => "Scan".into(),
    }
}

fn entry_str(s: &System, e: &BufferEntry) -> String {
    format!("W({},{})#{}", s.var_name(e.var), e.value, e.tag)
}

/// Renders `r` in the trace format. Equal runs render to identical bytes.
pub fn emit(r: &Run) -> String {
    let s = &r.system;
    let n = s.procs();
    let mut out = String::new();
    let _ = writeln!(out, "# tso-trace");
    let _ = writeln!(out, "version {VERSION}");
    let _ = writeln!(out, "procs {n}");
    let _ = writeln!(out, "vars {}", s.var_names().join(" "));
    let values = s.values();
    let _ = writeln!(out, "values {}..={}", values.start(), values.end());
    let init: Vec<String> = s
        .var_names()
        .iter()
        .zip(s.initial_values())
        .map(|(x, v)| format!("{x}={v}"))
        .collect();
    let _ = writeln!(out, "init {}", init.join(" "));
    let _ = writeln!(out, "protocol {}", r.protocol);
    match r.seed {
        Some(seed) => {
            let _ = writeln!(out, "seed {seed}");
        }
        None => {
            let _ = writeln!(out, "seed none");
        }
    }
    let _ = writeln!(out, "horizon {}", r.horizon());
    for (t, round) in r.rounds.iter().enumerate() {
        let _ = writeln!(out, "round {}", t + 1);
        for agent in AgentId::all(n) {
            let action = round.joint.action_of(agent);
            let event = &round.events[agent.index(n)];
            if action.is_null() && event.is_null() {
                continue;
            }
            let _ = writeln!(out, "{agent} {} => {}", action_str(s, &action), event_str(s, event));
        }
        for inv in &round.joint.invokes {
            let _ = writeln!(out, "env {} invoke {}", inv.proc, call_str(&inv.call));
        }
    }
    let tso = &r.final_state().tso;
    let memory: Vec<String> = tso
        .memory
        .iter()
        .enumerate()
        .map(|(k, cell)| format!("{}={}@{}", s.var_name(VarId(k as u16)), cell.value, cell.origin))
        .collect();
    let _ = writeln!(out, "final-memory {}", memory.join(" "));
    for p in s.proc_ids() {
        let entries: Vec<String> = tso.buffer(p).iter().map(|e| entry_str(s, e)).collect();
        let _ = writeln!(out, "final-buffer {p} [{}]", entries.join(" "));
    }
    let _ = writeln!(out, "end");
    out
}

struct Lines<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim_end()))
            .filter(|(k, l)| !l.is_empty() && (*k == 1 || !l.starts_with('#')))
            .collect();
        Lines { lines, pos: 0 }
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.lines.get(self.pos).copied()
    }

    fn last_line(&self) -> usize {
        self.lines.last().map_or(1, |(k, _)| *k)
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), TraceError> {
        let line = self.peek().ok_or_else(|| TraceError::Syntax {
            line: self.last_line(),
            message: format!("unexpected end of trace, expected {what}"),
        })?;
        self.pos += 1;
        Ok(line)
    }

    /// The remainder of the next line after `key `.
    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str), TraceError> {
        let (line, text) = self.next(key)?;
        match text.strip_prefix(key) {
            Some(rest) if rest.is_empty() => Ok((line, rest)),
            Some(rest) if rest.starts_with(' ') => Ok((line, &rest[1..])),
            _ => Err(syntax(line, format!("expected `{key}`, found `{text}`"))),
        }
    }
}

fn syntax(line: usize, message: impl Into<String>) -> TraceError {
    TraceError::Syntax {
        line,
        message: message.into(),
    }
}

fn num<T: std::str::FromStr>(line: usize, s: &str, what: &str) -> Result<T, TraceError> {
    s.trim()
        .parse()
        .map_err(|_| syntax(line, format!("invalid {what} `{s}`")))
}

/// Splits `NAME(inner)rest`, honouring escapes and brackets inside `inner`.
fn split_call(s: &str) -> Option<(&str, &str, &str)> {
    let open = s.find('(')?;
    let mut depth = 0usize;
    let mut escaped = false;
    for (k, c) in s[open..].char_indices() {
        let k = k + open;
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' => escaped = true,
            '(' | '[' => depth += 1,
            ']' => depth = depth.checked_sub(1)?,
            ')' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some((&s[..open], &s[open + 1..k], &s[k + 1..]));
                }
            }
            _ => {}
        }
    }
    None
}

struct Ctx<'a> {
    system: &'a System,
    line: usize,
}

impl Ctx<'_> {
    fn err(&self, message: impl Into<String>) -> TraceError {
        syntax(self.line, message)
    }

    fn var(&self, name: &str) -> Result<VarId, TraceError> {
        self.system
            .var(name.trim())
            .ok_or_else(|| self.err(format!("unknown variable `{name}`")))
    }

    fn value(&self, s: &str) -> Result<Value, TraceError> {
        num(self.line, s, "value").map(Value)
    }

    fn proc(&self, s: &str) -> Result<ProcId, TraceError> {
        let k: u16 = s
            .strip_prefix('p')
            .and_then(|k| k.parse().ok())
            .ok_or_else(|| self.err(format!("invalid process `{s}`")))?;
        if k == 0 || k as usize > self.system.procs() {
            return Err(self.err(format!("process `{s}` out of range")));
        }
        Ok(ProcId(k))
    }

    fn agent(&self, s: &str) -> Result<AgentId, TraceError> {
        match s.strip_prefix('d') {
            Some(rest) => Ok(AgentId::Dispatcher(self.proc(&format!("p{rest}"))?)),
            None => Ok(AgentId::Process(self.proc(s)?)),
        }
    }

    fn tag(&self, s: &str) -> Result<Tag, TraceError> {
        let (p, seq) = s
            .split_once('.')
            .ok_or_else(|| self.err(format!("invalid tag `{s}`")))?;
        Ok(Tag {
            writer: self.proc(p)?,
            seq: num(self.line, seq, "tag sequence")?,
        })
    }

    fn provenance(&self, s: &str) -> Result<Provenance, TraceError> {
        if s == "init" {
            Ok(Provenance::Initial)
        } else {
            self.tag(s).map(Provenance::Written)
        }
    }

    fn ret(&self, s: &str) -> Result<Ret, TraceError> {
        if s == "Ack" {
            return Ok(Ret::Ack);
        }
        if let Some(inner) = s.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            if inner.is_empty() {
                return Ok(Ret::Vector(Vec::new()));
            }
            let vs = inner
                .split(',')
                .map(|v| {
                    if v.trim() == "_" {
                        Ok(None)
                    } else {
                        self.value(v).map(Some)
                    }
                })
                .collect::<Result<_, _>>()?;
            return Ok(Ret::Vector(vs));
        }
        self.value(s).map(Ret::Value)
    }

    fn internal(&self, name: &str, inner: &str) -> Result<Option<Internal>, TraceError> {
        Ok(match name {
            "Ret" => Some(Internal::Return(self.ret(inner)?)),
            "Note" => Some(Internal::Note(
                unescape(inner).ok_or_else(|| self.err("invalid escape in note"))?,
            )),
            _ => None,
        })
    }

    fn action(&self, s: &str) -> Result<Action, TraceError> {
        match s {
            "-" => return Ok(Action::Null),
            "F" => return Ok(Action::Fence),
            "Prop" => return Ok(Action::Prop),
            _ => {}
        }
        let (name, inner, rest) = split_call(s).ok_or_else(|| self.err(format!("invalid action `{s}`")))?;
        if !rest.is_empty() {
            return Err(self.err(format!("trailing text after action `{s}`")));
        }
        if let Some(i) = self.internal(name, inner)? {
            return Ok(Action::Internal(i));
        }
        let args: Vec<&str> = inner.split(',').collect();
        match (name, args.as_slice()) {
            ("R", [x]) => Ok(Action::Read(self.var(x)?)),
            ("W", [x, v]) => Ok(Action::Write(self.var(x)?, self.value(v)?)),
            ("RMW", [x, e, v]) => Ok(Action::Rmw {
                var: self.var(x)?,
                expected: self.value(e)?,
                new: self.value(v)?,
            }),
            _ => Err(self.err(format!("invalid action `{s}`"))),
        }
    }

    fn event(&self, s: &str) -> Result<EventKind, TraceError> {
        match s {
            "-" => return Ok(EventKind::Null),
            "F" => return Ok(EventKind::Fence),
            _ => {}
        }
        let bad = || self.err(format!("invalid event `{s}`"));
        let (name, inner, rest) = split_call(s).ok_or_else(bad)?;
        if let Some(i) = self.internal(name, inner)? {
            return if rest.is_empty() {
                Ok(EventKind::Internal(i))
            } else {
                Err(bad())
            };
        }
        let args: Vec<&str> = inner.split(',').collect();
        let (source, tag) = match rest.strip_prefix('@') {
            Some(r) => match r.split_once('#') {
                Some((src, tag)) => (Some(src), Some(tag)),
                None => (Some(r), None),
            },
            None => (None, rest.strip_prefix('#')),
        };
        if source.is_none() && tag.is_none() {
            return Err(bad());
        }
        let source = source.map(|p| self.provenance(p)).transpose()?;
        let tag = tag.map(|t| self.tag(t)).transpose()?;
        Ok(match (name, args.as_slice(), source, tag) {
            ("W", [x, v], None, Some(tag)) => EventKind::Write {
                var: self.var(x)?,
                value: self.value(v)?,
                tag,
            },
            ("RfB", [x, v], None, Some(tag)) => EventKind::ReadBuffer {
                var: self.var(x)?,
                value: self.value(v)?,
                tag,
            },
            ("RfM", [x, v], Some(source), None) => EventKind::ReadMemory {
                var: self.var(x)?,
                value: self.value(v)?,
                source,
            },
            ("RMW", [x, e, v], Some(source), Some(tag)) => EventKind::Rmw {
                var: self.var(x)?,
                expected: self.value(e)?,
                new: self.value(v)?,
                source,
                tag,
            },
            ("Prop", [x, v], None, Some(tag)) => EventKind::Prop {
                var: self.var(x)?,
                value: self.value(v)?,
                tag,
            },
            _ => return Err(bad()),
        })
    }

    fn call(&self, s: &str) -> Result<OpCall, TraceError> {
        match s {
            "Read" => return Ok(OpCall::Read),
            "Scan" => return Ok(OpCall::Scan),
            _ => {}
        }
        match split_call(s) {
            Some(("Write", v, "")) => Ok(OpCall::Write(self.value(v)?)),
            Some(("Update", v, "")) => Ok(OpCall::Update(self.value(v)?)),
            _ => Err(self.err(format!("invalid operation `{s}`"))),
        }
    }
}

fn parse_header(lines: &mut Lines<'_>) -> Result<(System, String, Option<u64>, usize), TraceError> {
    let (line, first) = lines.next("header")?;
    if first != "# tso-trace" {
        return Err(syntax(line, "missing `# tso-trace` header"));
    }
    let (line, v) = lines.keyed("version")?;
    let version: u32 = num(line, v, "version")?;
    if version != VERSION {
        return Err(syntax(line, format!("unsupported version {version}")));
    }
    let (line, p) = lines.keyed("procs")?;
    let procs: usize = num(line, p, "process count")?;
    let (_, vars) = lines.keyed("vars")?;
    let vars: Vec<String> = vars.split_whitespace().map(str::to_string).collect();
    let (line, values) = lines.keyed("values")?;
    let (lo, hi) = values
        .split_once("..=")
        .ok_or_else(|| syntax(line, format!("invalid value range `{values}`")))?;
    let (lo, hi): (i64, i64) = (num(line, lo, "value")?, num(line, hi, "value")?);
    let (line, init) = lines.keyed("init")?;
    let mut initial = vec![None; vars.len()];
    for item in init.split_whitespace() {
        let (x, v) = item
            .split_once('=')
            .ok_or_else(|| syntax(line, format!("invalid initial value `{item}`")))?;
        let k = vars
            .iter()
            .position(|y| y == x)
            .ok_or_else(|| syntax(line, format!("unknown variable `{x}`")))?;
        initial[k] = Some(Value(num(line, v, "value")?));
    }
    let initial: Vec<Value> = initial
        .into_iter()
        .zip(&vars)
        .map(|(v, x)| v.ok_or_else(|| syntax(line, format!("no initial value for `{x}`"))))
        .collect::<Result<_, _>>()?;
    let system = System::with_initial(procs, vars, lo..=hi, initial).map_err(|e| syntax(line, e.to_string()))?;
    let (line, protocol) = lines.keyed("protocol")?;
    if protocol.is_empty() || protocol.contains(char::is_whitespace) {
        return Err(syntax(line, "invalid protocol name"));
    }
    let (line, seed) = lines.keyed("seed")?;
    let seed = if seed == "none" {
        None
    } else {
        Some(num(line, seed, "seed")?)
    };
    let (line, h) = lines.keyed("horizon")?;
    let horizon = num(line, h, "horizon")?;
    Ok((system, protocol.to_string(), seed, horizon))
}

/// Parses a trace and replays it, checking every recorded event and the final state.
pub fn parse(text: &str) -> Result<Run, TraceError> {
    let mut lines = Lines::new(text);
    let (system, protocol, seed, horizon) = parse_header(&mut lines)?;
    let n = system.procs();
    let mut run = Run::new(system.clone(), protocol, seed);
    while let Some((header, text)) = lines.peek() {
        let Some(m) = text.strip_prefix("round ") else { break };
        lines.pos += 1;
        let m: usize = num(header, m, "round number")?;
        if m != run.horizon() + 1 {
            return Err(syntax(
                header,
                format!("expected round {}, found {m}", run.horizon() + 1),
            ));
        }
        let mut joint = JointAction::idle(n);
        let mut recorded: Vec<Option<(usize, EventKind)>> = vec![None; 2 * n];
        while let Some((line, text)) = lines.peek() {
            if text.starts_with("round ") || text.starts_with("final-memory") {
                break;
            }
            lines.pos += 1;
            let ctx = Ctx { system: &system, line };
            if let Some(rest) = text.strip_prefix("env ") {
                let (p, call) = rest
                    .split_once(" invoke ")
                    .ok_or_else(|| ctx.err(format!("invalid invocation `{text}`")))?;
                joint.invokes.push(Invocation {
                    proc: ctx.proc(p)?,
                    call: ctx.call(call)?,
                });
                continue;
            }
            let (agent, rest) = text
                .split_once(' ')
                .ok_or_else(|| ctx.err(format!("invalid agent line `{text}`")))?;
            let agent = ctx.agent(agent)?;
            let (action, event) = rest
                .split_once(" => ")
                .ok_or_else(|| ctx.err(format!("expected `ACTION => EVENT`, found `{rest}`")))?;
            let action = ctx.action(action)?;
            let event = ctx.event(event)?;
            let slot = agent.index(n);
            if recorded[slot].is_some() {
                return Err(ctx.err(format!("second line for {agent} in round {m}")));
            }
            match agent {
                AgentId::Process(p) => joint.procs[p.index()] = action,
                AgentId::Dispatcher(p) => match action {
                    Action::Prop => joint.props[p.index()] = true,
                    Action::Null => {}
                    _ => return Err(ctx.err(format!("{agent} can only propagate"))),
                },
            }
            recorded[slot] = Some((line, event));
        }
        let (_, events) = joint_apply(&system, run.final_state(), &joint).map_err(|e| TraceError::Replay {
            line: header,
            message: e.to_string(),
        })?;
        for (k, replayed) in events.iter().enumerate() {
            let (line, rec) = recorded[k].clone().unwrap_or((header, EventKind::Null));
            if rec != *replayed {
                return Err(TraceError::Mismatch {
                    line,
                    recorded: event_str(&system, &rec),
                    replayed: event_str(&system, replayed),
                });
            }
        }
        run.push(joint).map_err(|e| TraceError::Replay {
            line: header,
            message: e.to_string(),
        })?;
    }
    let (line, memory) = lines.keyed("final-memory")?;
    if run.horizon() != horizon {
        return Err(syntax(
            line,
            format!("header declares horizon {horizon}, trace has {} rounds", run.horizon()),
        ));
    }
    let tso = &run.final_state().tso;
    let want: Vec<String> = tso
        .memory
        .iter()
        .enumerate()
        .map(|(k, cell)| format!("{}={}@{}", system.var_name(VarId(k as u16)), cell.value, cell.origin))
        .collect();
    let got: Vec<&str> = memory.split_whitespace().collect();
    if got != want {
        return Err(TraceError::Mismatch {
            line,
            recorded: memory.to_string(),
            replayed: want.join(" "),
        });
    }
    for p in system.proc_ids() {
        let (line, buffer) = lines.keyed("final-buffer")?;
        let entries: Vec<String> = tso.buffer(p).iter().map(|e| entry_str(&system, e)).collect();
        let want = format!("{p} [{}]", entries.join(" "));
        if buffer != want {
            return Err(TraceError::Mismatch {
                line,
                recorded: buffer.to_string(),
                replayed: want,
            });
        }
    }
    lines.keyed("end")?;
    if let Some((line, text)) = lines.peek() {
        return Err(syntax(line, format!("unexpected text after `end`: `{text}`")));
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::runtime::{execute, RoundPlan, Schedule};

    fn sb_run() -> Run {
        let p = fixtures::build("sb", 2).unwrap();
        let mut plans = vec![RoundPlan::all_processes(2); 2];
        plans.push(RoundPlan {
            props: vec![true, true],
            ..RoundPlan::idle(2)
        });
        execute(p.as_ref(), &Schedule::from_plans(Some(3), plans), 3).unwrap()
    }

    #[test]
    fn round_trip() {
        let run = sb_run();
        let text = emit(&run);
        assert_eq!(parse(&text).unwrap(), run);
        assert_eq!(emit(&parse(&text).unwrap()), text);
    }

    #[test]
    fn known_layout() {
        let text = emit(&sb_run());
        assert!(text.contains("round 1\np1 W(x,1) => W(x,1)#p1.1\np2 W(y,1) => W(y,1)#p2.1\n"));
        assert!(text.contains("p2 R(x) => RfM(x,0)@init\n"));
        assert!(text.contains("final-memory x=1@p1.1 y=1@p2.1\n"));
    }

    #[test]
    fn tampered_event_names_its_line() {
        let text = emit(&sb_run()).replace("RfM(x,0)@init", "RfM(x,1)@p1.1");
        let line = text.lines().position(|l| l.contains("RfM(x,1)@p1.1")).unwrap() + 1;
        match parse(&text) {
            Err(TraceError::Mismatch { line: l, .. }) => assert_eq!(l, line),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_names_its_line() {
        let text = emit(&sb_run()).replace("procs 2", "procs two");
        assert_eq!(parse(&text).unwrap_err().line(), 3);
    }

    #[test]
    fn notes_and_vectors_survive() {
        let s = System::new(1, ["x"], 0..=3).unwrap();
        let mut a = JointAction::idle(1);
        a.procs[0] = Action::Internal(Internal::Note("a) b\\c\nd".into()));
        let mut b = JointAction::idle(1);
        b.procs[0] = Action::Internal(Internal::Return(Ret::Vector(vec![Some(Value(1)), None])));
        let run = Run::assemble_unchecked(s, "free", [a, b]);
        assert_eq!(parse(&emit(&run)).unwrap(), run);
    }
}
