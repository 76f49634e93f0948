//! Step machines over rational streams: reads and emits are explicit actions
//! so that read counts are observable.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exactnum::Rational;
use crate::names::{Name, NameError, ReprTag};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    /// Request the next input value; the runner answers with `feed`.
    Read,
    Emit(Rational),
    Internal,
    /// Branch point with the given arity; the runner answers with `choose`.
    Guess(u32),
    Abort,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Fault {
    #[error("protocol violation: {line:?}")]
    Protocol { line: String },
    #[error("i/o failure talking to external machine: {0}")]
    Io(String),
    #[error("nondeterministic action {0:?} in a deterministic run")]
    Nondeterministic(String),
    #[error("machine misbehaved: {0}")]
    Invalid(String),
    #[error(transparent)]
    Name(#[from] NameError),
}

pub trait Machine: Send {
    fn step(&mut self) -> Result<Action, Fault>;
    fn feed(&mut self, q: Rational) -> Result<(), Fault>;
    fn choose(&mut self, _branch: u32) {}
    /// Independent copy of the current state, if the machine supports it.
    fn fork(&self) -> Option<Box<dyn Machine>> {
        None
    }
}

/// What a kernel needs next, given every input read so far.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Poll {
    /// At least this many inputs must be available.
    Need(u64),
    Emit(Rational),
    Work,
    Guess(u32),
    Abort,
}

/// A cloneable state machine polled against the inputs read so far. Polling is
/// repeated with a longer input buffer until the kernel stops asking.
pub trait Kernel: Send + Sync + Clone + 'static {
    fn poll(&mut self, inputs: &[Rational]) -> Result<Poll, Fault>;
    fn choose(&mut self, _branch: u32) {}
}

#[derive(Clone)]
pub struct KernelMachine<K> {
    kernel: K,
    inputs: Vec<Rational>,
    awaiting: bool,
}

impl<K: Kernel> KernelMachine<K> {
    pub fn new(kernel: K) -> Self {
        KernelMachine { kernel, inputs: Vec::new(), awaiting: false }
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }
}

impl<K: Kernel> Machine for KernelMachine<K> {
    fn step(&mut self) -> Result<Action, Fault> {
        if self.awaiting {
            return Err(Fault::Invalid("stepped while awaiting input".into()));
        }
        match self.kernel.poll(&self.inputs)? {
            Poll::Need(k) if k > self.inputs.len() as u64 => {
                self.awaiting = true;
                Ok(Action::Read)
            }
            Poll::Need(k) => Err(Fault::Invalid(format!(
                "kernel asked for {k} inputs but {} are available",
                self.inputs.len()
            ))),
            Poll::Emit(q) => Ok(Action::Emit(q)),
            Poll::Work => Ok(Action::Internal),
            Poll::Guess(a) => Ok(Action::Guess(a)),
            Poll::Abort => Ok(Action::Abort),
        }
    }

    fn feed(&mut self, q: Rational) -> Result<(), Fault> {
        if !self.awaiting {
            return Err(Fault::Invalid("fed without a pending read".into()));
        }
        self.awaiting = false;
        self.inputs.push(q);
        Ok(())
    }

    fn choose(&mut self, branch: u32) {
        self.kernel.choose(branch)
    }

    fn fork(&self) -> Option<Box<dyn Machine>> {
        Some(Box::new(self.clone()))
    }
}

type NeedFn = Arc<dyn Fn(u64) -> u64 + Send + Sync>;
type ValueFn = Arc<dyn Fn(&[Rational], u64) -> Rational + Send + Sync>;

/// Output `m` is a pure function of the first `need(m)` inputs.
#[derive(Clone)]
pub struct PrefixKernel {
    need: NeedFn,
    value: ValueFn,
    next: u64,
}

impl PrefixKernel {
    pub fn new(
        need: impl Fn(u64) -> u64 + Send + Sync + 'static,
        value: impl Fn(&[Rational], u64) -> Rational + Send + Sync + 'static,
    ) -> Self {
        PrefixKernel { need: Arc::new(need), value: Arc::new(value), next: 0 }
    }
}

impl Kernel for PrefixKernel {
    fn poll(&mut self, inputs: &[Rational]) -> Result<Poll, Fault> {
        let k = (self.need)(self.next);
        if k > inputs.len() as u64 {
            return Ok(Poll::Need(k));
        }
        let v = (self.value)(&inputs[..k as usize], self.next);
        self.next += 1;
        Ok(Poll::Emit(v))
    }
}

type Factory = Arc<dyn Fn() -> Result<Box<dyn Machine>, Fault> + Send + Sync>;

/// A named, tagged machine factory. Cheap to clone.
#[derive(Clone)]
pub struct Transformer {
    id: String,
    in_tag: ReprTag,
    out_tag: ReprTag,
    factory: Factory,
}

impl fmt::Debug for Transformer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Transformer({}: {} -> {})", self.id, self.in_tag, self.out_tag)
    }
}

impl Transformer {
    pub fn new(
        id: impl Into<String>,
        in_tag: ReprTag,
        out_tag: ReprTag,
        factory: impl Fn() -> Result<Box<dyn Machine>, Fault> + Send + Sync + 'static,
    ) -> Self {
        Transformer { id: id.into(), in_tag, out_tag, factory: Arc::new(factory) }
    }

    pub fn from_kernel<K: Kernel>(
        id: impl Into<String>,
        in_tag: ReprTag,
        out_tag: ReprTag,
        kernel: K,
    ) -> Self {
        Transformer::new(id, in_tag, out_tag, move || {
            Ok(Box::new(KernelMachine::new(kernel.clone())) as Box<dyn Machine>)
        })
    }

    /// `p_n = f(q_n, n)`.
    pub fn pointwise(
        id: impl Into<String>,
        in_tag: ReprTag,
        out_tag: ReprTag,
        f: impl Fn(&Rational, u64) -> Rational + Send + Sync + 'static,
    ) -> Self {
        let kernel = PrefixKernel::new(|m| m + 1, move |p, m| f(&p[m as usize], m));
        Transformer::from_kernel(id, in_tag, out_tag, kernel)
    }

    pub fn identity(tag: ReprTag) -> Self {
        Transformer::pointwise("identity", tag, tag, |q, _| q.clone())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn in_tag(&self) -> ReprTag {
        self.in_tag
    }

    pub fn out_tag(&self) -> ReprTag {
        self.out_tag
    }

    pub fn with_tags(mut self, in_tag: ReprTag, out_tag: ReprTag) -> Self {
        self.in_tag = in_tag;
        self.out_tag = out_tag;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn instantiate(&self) -> Result<Box<dyn Machine>, Fault> {
        (self.factory)()
    }

    /// Lazily computed output name; each output may take at most `per_emit`
    /// machine steps.
    pub fn apply(&self, input: &Name, per_emit: u64) -> Result<Name, Fault> {
        input.expect_tag(self.in_tag)?;
        let mut machine = self.instantiate()?;
        let input = input.clone();
        let mut reads = 0u64;
        Ok(Name::from_try_fn(self.out_tag, move |index| {
            for _ in 0..per_emit {
                match machine.step().map_err(|f| NameError::Producer(f.to_string()))? {
                    Action::Read => {
                        let q = input.get(reads)?;
                        reads += 1;
                        machine.feed(q).map_err(|f| NameError::Producer(f.to_string()))?;
                    }
                    Action::Emit(q) => return Ok(q),
                    Action::Internal => {}
                    Action::Guess(_) | Action::Abort => {
                        return Err(NameError::Producer("nondeterministic machine".into()))
                    }
                }
            }
            Err(NameError::Diverged { index, steps: per_emit })
        }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub max_steps: u64,
    pub max_emits: u64,
}

impl Budget {
    pub fn new(max_steps: u64, max_emits: u64) -> Self {
        Budget { max_steps, max_emits }
    }

    pub fn emits(max_emits: u64) -> Self {
        Budget { max_steps: u64::MAX, max_emits }
    }

    pub fn steps(max_steps: u64) -> Self {
        Budget { max_steps, max_emits: u64::MAX }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub emitted: Vec<Rational>,
    pub reads: u64,
    pub read_at_emit: Vec<u64>,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("input failed after {} reads: {error}", partial.reads)]
    Input { error: NameError, partial: Box<Trace> },
    #[error("machine fault after {} steps: {fault}", partial.steps)]
    Fault { fault: Fault, partial: Box<Trace> },
}

impl RunError {
    pub fn partial(&self) -> &Trace {
        match self {
            RunError::Input { partial, .. } | RunError::Fault { partial, .. } => partial,
        }
    }
}

/// Run a fresh instance of `t` on `input` until the budget is spent.
pub fn run(t: &Transformer, input: &Name, budget: Budget) -> Result<Trace, RunError> {
    let mut m = t
        .instantiate()
        .map_err(|fault| RunError::Fault { fault, partial: Box::default() })?;
    run_machine(m.as_mut(), input, budget)
}

pub fn run_machine(m: &mut dyn Machine, input: &Name, budget: Budget) -> Result<Trace, RunError> {
    let mut tr = Trace::default();
    while tr.steps < budget.max_steps && (tr.emitted.len() as u64) < budget.max_emits {
        let action = match m.step() {
            Ok(a) => a,
            Err(fault) => return Err(RunError::Fault { fault, partial: Box::new(tr) }),
        };
        tr.steps += 1;
        match action {
            Action::Read => {
                let q = match input.get(tr.reads) {
                    Ok(q) => q,
                    Err(error) => return Err(RunError::Input { error, partial: Box::new(tr) }),
                };
                tr.reads += 1;
                if let Err(fault) = m.feed(q) {
                    return Err(RunError::Fault { fault, partial: Box::new(tr) });
                }
            }
            Action::Emit(q) => {
                tr.emitted.push(q);
                tr.read_at_emit.push(tr.reads);
            }
            Action::Internal => {}
            other => {
                let fault = Fault::Nondeterministic(format!("{other:?}"));
                return Err(RunError::Fault { fault, partial: Box::new(tr) });
            }
        }
    }
    Ok(tr)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot compose {first} (out {out}) with {second} (in {inp})")]
pub struct ComposeError {
    pub first: String,
    pub out: ReprTag,
    pub second: String,
    pub inp: ReprTag,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Guesser {
    First,
    Second,
}

struct ComposeMachine {
    first: Box<dyn Machine>,
    second: Box<dyn Machine>,
    second_waiting: bool,
    guesser: Guesser,
}

impl Machine for ComposeMachine {
    fn step(&mut self) -> Result<Action, Fault> {
        if !self.second_waiting {
            return match self.second.step()? {
                Action::Read => {
                    self.second_waiting = true;
                    Ok(Action::Internal)
                }
                Action::Guess(a) => {
                    self.guesser = Guesser::Second;
                    Ok(Action::Guess(a))
                }
                other => Ok(other),
            };
        }
        match self.first.step()? {
            Action::Emit(q) => {
                self.second.feed(q)?;
                self.second_waiting = false;
                Ok(Action::Internal)
            }
            Action::Guess(a) => {
                self.guesser = Guesser::First;
                Ok(Action::Guess(a))
            }
            other => Ok(other),
        }
    }

    fn feed(&mut self, q: Rational) -> Result<(), Fault> {
        self.first.feed(q)
    }

    fn choose(&mut self, branch: u32) {
        match self.guesser {
            Guesser::First => self.first.choose(branch),
            Guesser::Second => self.second.choose(branch),
        }
    }

    fn fork(&self) -> Option<Box<dyn Machine>> {
        Some(Box::new(ComposeMachine {
            first: self.first.fork()?,
            second: self.second.fork()?,
            second_waiting: self.second_waiting,
            guesser: self.guesser,
        }))
    }
}

/// Demand-driven pipeline: `second` reads what `first` emits.
pub fn compose(first: &Transformer, second: &Transformer) -> Result<Transformer, ComposeError> {
    if first.out_tag != second.in_tag {
        return Err(ComposeError {
            first: first.id.clone(),
            out: first.out_tag,
            second: second.id.clone(),
            inp: second.in_tag,
        });
    }
    let (f, s) = (first.clone(), second.clone());
    Ok(Transformer::new(
        format!("({} ; {})", first.id, second.id),
        first.in_tag,
        second.out_tag,
        move || {
            Ok(Box::new(ComposeMachine {
                first: f.instantiate()?,
                second: s.instantiate()?,
                second_waiting: false,
                guesser: Guesser::First,
            }) as Box<dyn Machine>)
        },
    ))
}

/// Command line of an external machine speaking the wire protocol.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl ExternalCommand {
    /// Split on whitespace; no quoting.
    pub fn parse(line: &str) -> Option<ExternalCommand> {
        let mut parts = line.split_whitespace().map(str::to_string);
        let program = parts.next()?;
        Some(ExternalCommand { program, args: parts.collect() })
    }
}

impl fmt::Display for ExternalCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.program)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        Ok(())
    }
}

/// One line of the wire protocol as the machine sees it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WireLine {
    Read,
    Emit(Rational),
}

/// Parse a line written by an external machine (without its newline).
pub fn parse_wire_line(line: &str) -> Result<WireLine, Fault> {
    if line == "READ" {
        return Ok(WireLine::Read);
    }
    if let Some(rest) = line.strip_prefix("EMIT ") {
        if let Ok(q) = rest.parse() {
            return Ok(WireLine::Emit(q));
        }
    }
    Err(Fault::Protocol { line: line.to_string() })
}

struct ExternalMachine {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl ExternalMachine {
    fn spawn(cmd: &ExternalCommand) -> Result<Self, Fault> {
        let mut child = Command::new(&cmd.program)
            .args(&cmd.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Fault::Io(format!("spawn {}: {e}", cmd.program)))?;
        let stdin = child.stdin.take().ok_or_else(|| Fault::Io("no stdin".into()))?;
        let stdout = child.stdout.take().ok_or_else(|| Fault::Io("no stdout".into()))?;
        Ok(ExternalMachine { child, stdin, stdout: BufReader::new(stdout) })
    }
}

impl Machine for ExternalMachine {
    fn step(&mut self) -> Result<Action, Fault> {
        let mut line = String::new();
        let n = self.stdout.read_line(&mut line).map_err(|e| Fault::Io(e.to_string()))?;
        if n == 0 {
            return Err(Fault::Protocol { line: "<eof>".into() });
        }
        let Some(body) = line.strip_suffix('\n') else {
            return Err(Fault::Protocol { line });
        };
        match parse_wire_line(body)? {
            WireLine::Read => Ok(Action::Read),
            WireLine::Emit(q) => Ok(Action::Emit(q)),
        }
    }

    fn feed(&mut self, q: Rational) -> Result<(), Fault> {
        writeln!(self.stdin, "{q}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Fault::Protocol { line: format!("<write failed: {e}>") })
    }
}

impl Drop for ExternalMachine {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn external(cmd: ExternalCommand, in_tag: ReprTag, out_tag: ReprTag) -> Transformer {
    let id = format!("external:{cmd}");
    Transformer::new(id, in_tag, out_tag, move || {
        Ok(Box::new(ExternalMachine::spawn(&cmd)?) as Box<dyn Machine>)
    })
}

pub fn run_external(
    cmd: &ExternalCommand,
    input: &Name,
    budget: Budget,
) -> Result<Trace, RunError> {
    run(&external(cmd.clone(), input.tag(), input.tag()), input, budget)
}

/// Protocol transcript implied by a trace: `>` lines are written by the
/// machine, `<` lines by the harness.
pub fn transcript(trace: &Trace, inputs: &[Rational]) -> Vec<String> {
    let mut out = Vec::new();
    let mut read = 0u64;
    let emit_lines = |upto: u64, read: &mut u64, out: &mut Vec<String>| {
        while *read < upto {
            out.push("> READ".to_string());
            match inputs.get(*read as usize) {
                Some(q) => out.push(format!("< {q}")),
                None => out.push("< ?".to_string()),
            }
            *read += 1;
        }
    };
    for (q, &r) in trace.emitted.iter().zip(&trace.read_at_emit) {
        emit_lines(r, &mut read, &mut out);
        out.push(format!("> EMIT {q}"));
    }
    emit_lines(trace.reads, &mut read, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::names::{make_synthetic, Schedule, SyntheticSpec, Wobble};

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn dyadic_zero() -> Name {
        Name::from_fn(ReprTag::Fast(0), |n| Rational::pow2(-(n as i64)))
    }

    #[test]
    fn identity_trace() {
        let t = Transformer::identity(ReprTag::Fast(0));
        let tr = run(&t, &dyadic_zero(), Budget::emits(3)).unwrap();
        assert_eq!(tr.emitted, vec![r("1"), r("1/2"), r("1/4")]);
        assert_eq!(tr.read_at_emit, vec![1, 2, 3]);
        assert_eq!(tr.reads, 3);
        assert!(tr.steps >= tr.reads + tr.emitted.len() as u64);
    }

    #[test]
    fn runs_are_deterministic_and_prefix_monotone() {
        let t = Transformer::identity(ReprTag::Fast(0));
        let a = run(&t, &dyadic_zero(), Budget::steps(11)).unwrap();
        let b = run(&t, &dyadic_zero(), Budget::steps(11)).unwrap();
        assert_eq!(a, b);
        let c = run(&t, &dyadic_zero(), Budget::steps(40)).unwrap();
        assert_eq!(&c.emitted[..a.emitted.len()], &a.emitted[..]);
        assert_eq!(&c.read_at_emit[..a.read_at_emit.len()], &a.read_at_emit[..]);
    }

    #[test]
    fn compose_identity_is_identity() {
        let id = Transformer::identity(ReprTag::Fast(0));
        let c = compose(&id, &id).unwrap();
        let tr = run(&c, &dyadic_zero(), Budget::emits(5)).unwrap();
        assert_eq!(tr.emitted, run(&id, &dyadic_zero(), Budget::emits(5)).unwrap().emitted);
        assert_eq!(tr.reads, 5);
    }

    #[test]
    fn compose_is_associative_on_emits() {
        let a = Transformer::pointwise("inc", ReprTag::Fast(0), ReprTag::Fast(0), |q, _| q + Rational::one());
        let b = Transformer::pointwise("dbl", ReprTag::Fast(0), ReprTag::Fast(0), |q, _| q * Rational::from_int(2));
        let c = Transformer::pointwise("sq", ReprTag::Fast(0), ReprTag::Fast(0), |q, _| q * q);
        let left = compose(&compose(&a, &b).unwrap(), &c).unwrap();
        let right = compose(&a, &compose(&b, &c).unwrap()).unwrap();
        let l = run(&left, &dyadic_zero(), Budget::emits(8)).unwrap();
        let rr = run(&right, &dyadic_zero(), Budget::emits(8)).unwrap();
        assert_eq!(l.emitted, rr.emitted);
    }

    #[test]
    fn tag_mismatch_is_rejected() {
        let a = Transformer::identity(ReprTag::Lower(0)).with_tags(ReprTag::Lower(0), ReprTag::Upper(0));
        let b = Transformer::identity(ReprTag::Lower(0));
        assert!(compose(&a, &b).is_err());
    }

    #[test]
    fn input_failure_is_distinguished() {
        let t = Transformer::identity(ReprTag::Fast(0));
        let input = Name::finite(ReprTag::Fast(0), vec![r("1")]);
        match run(&t, &input, Budget::emits(3)) {
            Err(RunError::Input { error, partial }) => {
                assert_eq!(error, NameError::Exhausted { len: 1 });
                assert_eq!(partial.emitted, vec![r("1")]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn apply_produces_lazy_output() {
        let t = Transformer::pointwise("neg", ReprTag::Fast(0), ReprTag::Fast(0), |q, _| -q);
        let sched = Schedule { wobble: Wobble::Alternating, ..Schedule::default() };
        let x = make_synthetic(&SyntheticSpec::new(r("1/3"), ReprTag::Fast(0), sched)).unwrap();
        let y = t.apply(&x, 100).unwrap();
        for k in 0..10 {
            assert_eq!(y.get(k).unwrap(), -x.get(k).unwrap());
        }
    }

    #[test]
    fn wire_lines() {
        assert_eq!(parse_wire_line("READ").unwrap(), WireLine::Read);
        assert_eq!(parse_wire_line("EMIT -3/4").unwrap(), WireLine::Emit(r("-3/4")));
        assert!(parse_wire_line("EMIT").is_err());
        assert!(parse_wire_line("read").is_err());
        assert!(parse_wire_line("EMIT 1/0").is_err());
    }

    #[test]
    fn transcript_interleaves() {
        let tr = Trace {
            emitted: vec![r("0"), r("1")],
            reads: 2,
            read_at_emit: vec![0, 2],
            steps: 4,
        };
        let lines = transcript(&tr, &[r("1/2"), r("1/4")]);
        assert_eq!(lines, ["> EMIT 0/1", "> READ", "< 1/2", "> READ", "< 1/4", "> EMIT 1/1"]);
    }
}
