//! Prefix-swap adversaries against deterministic transformers, with
//! replayable certificates and an independent checker.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exactnum::{cantor_pair, cantor_unpair, Rational};
use crate::machine::{
    external, run, transcript, Action, Budget, ExternalCommand, Fault, Machine, PrefixKernel, Trace, Transformer,
};
use crate::names::{Name, NameError, ReprTag};

/// Functions a claimant may pretend to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Target {
    /// `0` for `x <= 0`, `1` otherwise.
    Heaviside,
    /// `1` for `x <= 0`, `0` otherwise.
    FlippedHeaviside,
    Square,
    /// `1` up to `0`, linear down to `0` at `1`, then `0`.
    Drop,
}

impl Target {
    pub const ALL: [Target; 4] = [Target::Heaviside, Target::FlippedHeaviside, Target::Square, Target::Drop];

    pub fn value(self, x: &Rational) -> Rational {
        let one = Rational::one();
        match self {
            Target::Heaviside if x.is_positive() => one,
            Target::Heaviside => Rational::zero(),
            Target::FlippedHeaviside if x.is_positive() => Rational::zero(),
            Target::FlippedHeaviside => one,
            Target::Square => x * x,
            Target::Drop if !x.is_positive() => one,
            Target::Drop if x >= &one => Rational::zero(),
            Target::Drop => one - x,
        }
    }

    /// A jump at `x`: `x_k = x + dir 2^-k` has `f(x_k) = far` for every `k`
    /// while `f(x) = at`.
    pub fn jump(self) -> Option<Jump> {
        let (at, far) = match self {
            Target::Heaviside => (Rational::zero(), Rational::one()),
            Target::FlippedHeaviside => (Rational::one(), Rational::zero()),
            Target::Square | Target::Drop => return None,
        };
        Some(Jump { x: Rational::zero(), dir: Rational::one(), at, far })
    }

    /// `a < b` with `f(a) > f(b)`.
    pub fn descent(self) -> Option<(Rational, Rational)> {
        match self {
            Target::Heaviside => None,
            Target::FlippedHeaviside | Target::Drop => Some((Rational::zero(), Rational::one())),
            Target::Square => Some((Rational::from_int(-1), Rational::zero())),
        }
    }

    pub fn parse(s: &str) -> Option<Target> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_uppercase().replace('-', "_"))).ok()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Jump {
    pub x: Rational,
    pub dir: Rational,
    pub at: Rational,
    pub far: Rational,
}

impl Jump {
    fn point(&self, k: u64) -> Rational {
        &self.x + &self.dir * Rational::pow2(-(k as i64))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    FastFast,
    FastLower,
    LowerLower,
    LimitLimit,
    LimitLower1,
    Lower1Lower1,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::FastFast,
        Variant::FastLower,
        Variant::LowerLower,
        Variant::LimitLimit,
        Variant::LimitLower1,
        Variant::Lower1Lower1,
    ];

    pub fn tags(self) -> (ReprTag, ReprTag) {
        use ReprTag::*;
        match self {
            Variant::FastFast => (Fast(0), Fast(0)),
            Variant::FastLower => (Fast(0), Lower(0)),
            Variant::LowerLower => (Lower(0), Lower(0)),
            Variant::LimitLimit => (Fast(1), Fast(1)),
            Variant::LimitLower1 => (Fast(1), Lower(1)),
            Variant::Lower1Lower1 => (Lower(1), Lower(1)),
        }
    }

    /// Built over several rounds rather than a single swap.
    pub fn is_omega(self) -> bool {
        matches!(self, Variant::LimitLimit | Variant::LimitLower1 | Variant::Lower1Lower1)
    }

    pub fn parse(s: &str) -> Option<Variant> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_uppercase().replace('-', "_"))).ok()
    }
}

/// How to obtain the transformer under attack.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformerRef {
    Registry(String),
    External { command: String, in_tag: ReprTag, out_tag: ReprTag },
}

impl TransformerRef {
    pub fn resolve(&self, registry: &dyn Fn(&str) -> Option<Transformer>) -> Result<Transformer, VerifyError> {
        match self {
            TransformerRef::Registry(id) => registry(id).ok_or_else(|| VerifyError::UnknownTransformer(id.clone())),
            TransformerRef::External { command, in_tag, out_tag } => {
                let cmd = ExternalCommand::parse(command)
                    .ok_or_else(|| VerifyError::Malformed(format!("bad command line {command:?}")))?;
                Ok(external(cmd, *in_tag, *out_tag))
            }
        }
    }

    fn is_external(&self) -> bool {
        matches!(self, TransformerRef::External { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimSpec {
    pub transformer: TransformerRef,
    pub in_tag: ReprTag,
    pub out_tag: ReprTag,
    pub target: Target,
    pub variant: Variant,
}

/// Generator of an input stream; also tells what real it denotes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSpec {
    /// `q_n = x + dir 2^-n`.
    Approach { x: Rational, dir: Rational },
    Constant { value: Rational },
    /// `head`, then `value` forever.
    Splice { head: Vec<Rational>, value: Rational },
    /// Block `k` fills indices `[ends[k-1], ends[k])`; `tail` afterwards.
    Blocks { ends: Vec<u64>, values: Vec<Rational>, tail: Rational },
    /// Double-indexed: entry `<i,j>` is `fill` if some rectangle `(ri, rj)` has
    /// `i <= ri` and `j > rj`, or if `closed` and `j` exceeds every `rj`;
    /// otherwise `base`.
    Rectangles { base: Rational, fill: Rational, rects: Vec<(u64, u64)>, closed: bool },
}

impl InputSpec {
    pub fn at(&self, n: u64) -> Rational {
        match self {
            InputSpec::Approach { x, dir } => x + dir * Rational::pow2(-(n as i64)),
            InputSpec::Constant { value } => value.clone(),
            InputSpec::Splice { head, value } => head.get(n as usize).unwrap_or(value).clone(),
            InputSpec::Blocks { ends, values, tail } => {
                ends.iter().zip(values).find(|(e, _)| n < **e).map(|(_, v)| v).unwrap_or(tail).clone()
            }
            InputSpec::Rectangles { base, fill, rects, closed } => {
                let (i, j) = cantor_unpair(n);
                let hit = rects.iter().any(|&(ri, rj)| i <= ri && j > rj)
                    || (*closed && rects.iter().all(|&(_, rj)| j > rj));
                if hit { fill } else { base }.clone()
            }
        }
    }

    pub fn prefix(&self, len: u64) -> Vec<Rational> {
        (0..len).map(|n| self.at(n)).collect()
    }

    pub fn name(&self, tag: ReprTag) -> Name {
        let spec = self.clone();
        Name::from_fn(tag, move |n| spec.at(n))
    }

    /// The real this stream names under `tag`, if its shape guarantees one.
    pub fn denotes(&self, tag: ReprTag) -> Option<Rational> {
        use ReprTag::*;
        match (self, tag) {
            (InputSpec::Approach { x, dir }, Fast(0) | Fast(1)) if dir.abs() <= Rational::one() => Some(x.clone()),
            (InputSpec::Constant { value }, Fast(_) | Lower(_) | Upper(_)) => Some(value.clone()),
            (InputSpec::Splice { head, value }, Fast(0)) => head
                .iter()
                .enumerate()
                .all(|(n, q)| (q - value).abs() <= Rational::pow2(-(n as i64)))
                .then(|| value.clone()),
            (InputSpec::Splice { head, value }, Lower(0)) => head.iter().all(|q| q <= value).then(|| value.clone()),
            (InputSpec::Splice { value, .. }, Fast(1) | Lower(1)) => Some(value.clone()),
            (InputSpec::Blocks { ends, values, tail }, Fast(1)) => {
                (ends.len() == values.len() && ends.windows(2).all(|w| w[0] <= w[1])).then(|| tail.clone())
            }
            (InputSpec::Rectangles { base, fill, rects, closed }, Lower(1)) if fill < base => {
                if *closed && !rects.is_empty() {
                    Some(fill.clone())
                } else {
                    Some(base.clone())
                }
            }
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

/// Exact rational terms over the recorded data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Lit(Rational),
    /// Output `index` of run `run`.
    Out { run: usize, index: usize },
    /// The real denoted by recorded input `input`.
    Denot { input: usize },
    /// Target function applied to a term.
    F(Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
    Pow2(i64),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pred {
    Cmp { op: CmpOp, lhs: Expr, rhs: Expr },
    All(Vec<Pred>),
    Any(Vec<Pred>),
    /// Recorded inputs `a` and `b` agree on their first `len` entries.
    Agree { a: usize, b: usize, len: u64 },
    /// Run `run` had read at most `max` inputs when it emitted `index`.
    ReadBefore { run: usize, index: usize, max: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedInput {
    pub label: String,
    pub generator: InputSpec,
    pub prefix: Vec<Rational>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedRun {
    pub input: usize,
    pub budget: Budget,
    pub trace: Trace,
    /// Wire-protocol lines, for external machines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub version: u32,
    pub claim: ClaimSpec,
    pub inputs: Vec<RecordedInput>,
    pub runs: Vec<RecordedRun>,
    pub violated: Pred,
    /// Committed wrong entries backing the violation.
    pub rounds: u64,
    pub summary: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum Outcome {
    Falsified { certificate: Box<Certificate> },
    /// The claimant never committed on a valid name within the step budget.
    NonProductive { round: u64, input: InputSpec, steps: u64 },
    /// Nothing to attack, or the claimant survived.
    Refuted { reason: String },
}

impl Outcome {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            Outcome::Falsified { certificate } => Some(certificate),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryBudget {
    pub steps_per_round: u64,
    pub rounds: u64,
}

impl Default for AdversaryBudget {
    fn default() -> Self {
        AdversaryBudget { steps_per_round: 100_000, rounds: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdversaryError {
    #[error("variant {variant:?} attacks {want_in} -> {want_out}, claim is {got_in} -> {got_out}")]
    TagMismatch { variant: Variant, want_in: ReprTag, want_out: ReprTag, got_in: ReprTag, got_out: ReprTag },
    #[error("at least one round is required")]
    NoRounds,
    #[error(transparent)]
    Fault(#[from] Fault),
    #[error(transparent)]
    Input(#[from] NameError),
}

struct Drive {
    trace: Trace,
    committed: Option<usize>,
}

/// Step `t` on `input` until `stop` accepts an emitted value or the steps run out.
fn drive(
    t: &Transformer,
    input: &InputSpec,
    max_steps: u64,
    mut stop: impl FnMut(usize, &Rational) -> bool,
) -> Result<Drive, AdversaryError> {
    let mut m: Box<dyn Machine> = t.instantiate()?;
    let mut trace = Trace::default();
    while trace.steps < max_steps {
        let action = m.step()?;
        trace.steps += 1;
        match action {
            Action::Read => {
                m.feed(input.at(trace.reads))?;
                trace.reads += 1;
            }
            Action::Emit(q) => {
                let idx = trace.emitted.len();
                let hit = stop(idx, &q);
                trace.emitted.push(q);
                trace.read_at_emit.push(trace.reads);
                if hit {
                    return Ok(Drive { trace, committed: Some(idx) });
                }
            }
            Action::Internal => {}
            other => return Err(Fault::Nondeterministic(format!("{other:?}")).into()),
        }
    }
    Ok(Drive { trace, committed: None })
}

/// Replay `t` on `input` up to `emits` outputs.
fn replay_run(t: &Transformer, input: &InputSpec, emits: usize, max_steps: u64) -> Result<Trace, AdversaryError> {
    let d = drive(t, input, max_steps, |i, _| i + 1 >= emits)?;
    Ok(d.trace)
}

struct Builder {
    claim: ClaimSpec,
    external: bool,
    inputs: Vec<RecordedInput>,
    runs: Vec<RecordedRun>,
}

impl Builder {
    fn input(&mut self, label: impl Into<String>, generator: InputSpec) -> usize {
        self.inputs.push(RecordedInput { label: label.into(), generator, prefix: Vec::new() });
        self.inputs.len() - 1
    }

    fn record(&mut self, input: usize, trace: Trace) -> usize {
        let rec = &mut self.inputs[input];
        if (rec.prefix.len() as u64) < trace.reads {
            rec.prefix = rec.generator.prefix(trace.reads);
        }
        let transcript = self.external.then(|| transcript(&trace, &rec.generator.prefix(trace.reads)));
        let budget = Budget::new(trace.steps, trace.emitted.len() as u64);
        self.runs.push(RecordedRun { input, budget, trace, transcript });
        self.runs.len() - 1
    }

    fn finish(self, violated: Pred, rounds: u64, summary: String) -> Outcome {
        Outcome::Falsified {
            certificate: Box::new(Certificate {
                version: 1,
                claim: self.claim,
                inputs: self.inputs,
                runs: self.runs,
                violated,
                rounds,
                summary,
            }),
        }
    }
}

fn lit(q: Rational) -> Expr {
    Expr::Lit(q)
}

fn out(run: usize, index: usize) -> Expr {
    Expr::Out { run, index }
}

fn f_of(input: usize) -> Expr {
    Expr::F(Box::new(Expr::Denot { input }))
}

fn dist(a: Expr, b: Expr) -> Expr {
    Expr::Abs(Box::new(Expr::Sub(Box::new(a), Box::new(b))))
}

fn cmp(op: CmpOp, lhs: Expr, rhs: Expr) -> Pred {
    Pred::Cmp { op, lhs, rhs }
}

/// `a + (b - a) * num / 3`
fn third(a: &Rational, b: &Rational, num: i64) -> Rational {
    a + (b - a) * Rational::new(num, 3)
}

/// Attack `t`, which claims to compute `claim.target` between `claim`'s tags.
pub fn attack(t: &Transformer, claim: &ClaimSpec, budget: &AdversaryBudget) -> Result<Outcome, AdversaryError> {
    let (want_in, want_out) = claim.variant.tags();
    if (claim.in_tag, claim.out_tag) != (want_in, want_out) || (t.in_tag(), t.out_tag()) != (want_in, want_out) {
        return Err(AdversaryError::TagMismatch {
            variant: claim.variant,
            want_in,
            want_out,
            got_in: t.in_tag(),
            got_out: t.out_tag(),
        });
    }
    if claim.variant.is_omega() && budget.rounds == 0 {
        return Err(AdversaryError::NoRounds);
    }
    let b = Builder {
        claim: claim.clone(),
        external: claim.transformer.is_external(),
        inputs: Vec::new(),
        runs: Vec::new(),
    };
    let f = claim.target;
    let no_witness = |what: &str| {
        Ok(Outcome::Refuted { reason: format!("{f:?} has no {what} witness, so there is nothing to attack") })
    };
    match claim.variant {
        Variant::FastFast => match f.jump() {
            Some(j) => adv_fast_fast(t, b, &j, budget),
            None => no_witness("discontinuity"),
        },
        Variant::FastLower => match f.jump().filter(|j| j.at > j.far) {
            Some(j) => adv_fast_lower(t, b, &j, budget),
            None => no_witness("lower semi-continuity"),
        },
        Variant::LowerLower => match f.descent() {
            Some((lo, hi)) => adv_lower_lower(t, b, &lo, &hi, budget),
            None => no_witness("monotonicity"),
        },
        Variant::LimitLimit | Variant::LimitLower1 => {
            let lower = claim.variant == Variant::LimitLower1;
            match f.jump().filter(|j| !lower || j.at > j.far) {
                Some(j) => adv_limit(t, b, &j, lower, budget),
                None => no_witness(if lower { "lower semi-continuity" } else { "discontinuity" }),
            }
        }
        Variant::Lower1Lower1 => match f.descent() {
            Some((lo, hi)) => adv_lower1(t, b, &lo, &hi, budget),
            None => no_witness("monotonicity"),
        },
    }
}

fn adv_fast_fast(t: &Transformer, mut b: Builder, j: &Jump, budget: &AdversaryBudget) -> Result<Outcome, AdversaryError> {
    // least M with |at - far| > 2^(1-M)
    let gap = (&j.at - &j.far).abs();
    let mut m = 0usize;
    while gap <= Rational::pow2(1 - m as i64) {
        m += 1;
    }
    let base = InputSpec::Approach { x: j.x.clone(), dir: j.dir.clone() };
    let d = drive(t, &base, budget.steps_per_round, |i, _| i == m)?;
    let Some(_) = d.committed else {
        return Ok(Outcome::NonProductive { round: 1, input: base, steps: d.trace.steps });
    };
    let p = d.trace.emitted[m].clone();
    let n = d.trace.read_at_emit[m];
    let i0 = b.input("witness", base.clone());
    let r0 = b.record(i0, d.trace);
    if (&p - &j.at).abs() > Rational::pow2(-(m as i64)) {
        let pred = cmp(CmpOp::Gt, dist(out(r0, m), f_of(i0)), Expr::Pow2(-(m as i64)));
        return Ok(b.finish(pred, 1, format!("output {m} is {p}, more than 2^-{m} from f(x) = {}", j.at)));
    }
    let swapped = InputSpec::Splice { head: base.prefix(n), value: j.point(n) };
    let d1 = drive(t, &swapped, budget.steps_per_round, |i, _| i == m)?;
    if d1.committed.is_none() {
        return Ok(Outcome::NonProductive { round: 2, input: swapped, steps: d1.trace.steps });
    }
    let i1 = b.input("swapped", swapped);
    let r1 = b.record(i1, d1.trace);
    let pred = Pred::All(vec![
        Pred::ReadBefore { run: r0, index: m, max: n },
        Pred::Agree { a: i0, b: i1, len: n },
        cmp(CmpOp::Gt, dist(out(r1, m), f_of(i1)), Expr::Pow2(-(m as i64))),
    ]);
    let summary = format!(
        "output {m} = {p} was committed after {n} reads; the input extends a fast name of {} where f = {}",
        j.point(n),
        j.far
    );
    Ok(b.finish(pred, 1, summary))
}

fn adv_fast_lower(t: &Transformer, mut b: Builder, j: &Jump, budget: &AdversaryBudget) -> Result<Outcome, AdversaryError> {
    let theta = third(&j.far, &j.at, 2);
    let base = InputSpec::Approach { x: j.x.clone(), dir: j.dir.clone() };
    let d = drive(t, &base, budget.steps_per_round, |_, q| q >= &theta)?;
    let Some(m) = d.committed else {
        return Ok(Outcome::NonProductive { round: 1, input: base, steps: d.trace.steps });
    };
    let n = d.trace.read_at_emit[m];
    let p = d.trace.emitted[m].clone();
    let i0 = b.input("witness", base.clone());
    let r0 = b.record(i0, d.trace);
    if p > j.at {
        let pred = cmp(CmpOp::Gt, out(r0, m), f_of(i0));
        return Ok(b.finish(pred, 1, format!("output {m} = {p} exceeds f(x) = {}", j.at)));
    }
    let swapped = InputSpec::Splice { head: base.prefix(n), value: j.point(n) };
    let d1 = replay_run(t, &swapped, m + 1, budget.steps_per_round)?;
    let i1 = b.input("swapped", swapped);
    let r1 = b.record(i1, d1);
    let pred = Pred::All(vec![
        Pred::ReadBefore { run: r0, index: m, max: n },
        Pred::Agree { a: i0, b: i1, len: n },
        cmp(CmpOp::Ge, out(r1, m), lit(theta.clone())),
        cmp(CmpOp::Gt, out(r1, m), f_of(i1)),
    ]);
    let summary = format!("output {m} = {p} >= {theta} persists on a fast name of {} where f = {}", j.point(n), j.far);
    Ok(b.finish(pred, 1, summary))
}

fn adv_lower_lower(
    t: &Transformer,
    mut b: Builder,
    lo: &Rational,
    hi: &Rational,
    budget: &AdversaryBudget,
) -> Result<Outcome, AdversaryError> {
    let (f_lo, f_hi) = (b.claim.target.value(lo), b.claim.target.value(hi));
    let theta = third(&f_hi, &f_lo, 2);
    let base = InputSpec::Constant { value: lo.clone() };
    let d = drive(t, &base, budget.steps_per_round, |_, q| q >= &theta)?;
    let Some(m) = d.committed else {
        return Ok(Outcome::NonProductive { round: 1, input: base, steps: d.trace.steps });
    };
    let n = d.trace.read_at_emit[m];
    let p = d.trace.emitted[m].clone();
    let i0 = b.input("witness", base.clone());
    let r0 = b.record(i0, d.trace);
    if p > f_lo {
        let pred = cmp(CmpOp::Gt, out(r0, m), f_of(i0));
        return Ok(b.finish(pred, 1, format!("output {m} = {p} exceeds f({lo}) = {f_lo}")));
    }
    let swapped = InputSpec::Splice { head: base.prefix(n), value: hi.clone() };
    let d1 = replay_run(t, &swapped, m + 1, budget.steps_per_round)?;
    let i1 = b.input("swapped", swapped);
    let r1 = b.record(i1, d1);
    let pred = Pred::All(vec![
        Pred::ReadBefore { run: r0, index: m, max: n },
        Pred::Agree { a: i0, b: i1, len: n },
        cmp(CmpOp::Gt, out(r1, m), f_of(i1)),
    ]);
    let summary = format!("output {m} = {p} stays after switching from {lo} to {hi} past {n} reads; f({hi}) = {f_hi}");
    Ok(b.finish(pred, 1, summary))
}

/// Rounds feed `x^(k) = x + dir 2^(1-k)` after the frontier of the previous
/// round and wait for a new committed output near `f(x^(k))`; in the lower
/// variant the output must sit in row `k`.
fn adv_limit(
    t: &Transformer,
    mut b: Builder,
    j: &Jump,
    lower: bool,
    budget: &AdversaryBudget,
) -> Result<Outcome, AdversaryError> {
    let gap = (&j.at - &j.far).abs();
    let theta = third(&j.far, &j.at, 1);
    let mut ends: Vec<u64> = Vec::new();
    let mut values: Vec<Rational> = Vec::new();
    let mut committed: Vec<usize> = Vec::new();
    for k in 1..=budget.rounds {
        let xk = &j.x + &j.dir * Rational::pow2(1 - k as i64);
        let spec = InputSpec::Blocks { ends: ends.clone(), values: values.clone(), tail: xk.clone() };
        let after = committed.last().map(|&m| m + 1).unwrap_or(0);
        let d = drive(t, &spec, budget.steps_per_round, |i, q| {
            if lower {
                cantor_unpair(i as u64).0 == k && q <= &theta
            } else {
                i >= after && (q - &j.far).abs() * Rational::from_int(3) <= gap
            }
        })?;
        let Some(m) = d.committed else {
            return Ok(Outcome::NonProductive { round: k, input: spec, steps: d.trace.steps });
        };
        let i = b.input(format!("round {k}"), spec);
        b.record(i, d.trace.clone());
        committed.push(m);
        ends.push(d.trace.read_at_emit[m].max(ends.last().copied().unwrap_or(0)));
        values.push(xk);
    }
    let limit = InputSpec::Blocks { ends, values, tail: j.x.clone() };
    let last = *committed.iter().max().expect("at least one round");
    let trace = replay_run(t, &limit, last + 1, u64::MAX)?;
    let il = b.input("limit", limit);
    let rl = b.record(il, trace);
    let mut preds: Vec<Pred> = committed
        .iter()
        .map(|&m| {
            if lower {
                cmp(CmpOp::Le, out(rl, m), lit(theta.clone()))
            } else {
                cmp(CmpOp::Ge, dist(out(rl, m), f_of(il)), lit(&gap * Rational::new(2, 3)))
            }
        })
        .collect();
    if lower {
        preds.push(cmp(CmpOp::Lt, lit(theta.clone()), f_of(il)));
    }
    let summary = format!(
        "{} committed outputs {:?} stay wrong on a prefix of a name of {} where f = {}",
        committed.len(),
        committed,
        j.x,
        j.at
    );
    Ok(b.finish(Pred::All(preds), committed.len() as u64, summary))
}

/// Rounds keep a name of `hi` while zeroing rows behind the read frontier
/// with `lo`; the closed-off limit names `lo`.
fn adv_lower1(
    t: &Transformer,
    mut b: Builder,
    lo: &Rational,
    hi: &Rational,
    budget: &AdversaryBudget,
) -> Result<Outcome, AdversaryError> {
    let (f_lo, f_hi) = (b.claim.target.value(lo), b.claim.target.value(hi));
    let theta = third(&f_hi, &f_lo, 1);
    let mut rects: Vec<(u64, u64)> = Vec::new();
    let mut committed = Vec::new();
    for k in 1..=budget.rounds {
        let spec = InputSpec::Rectangles { base: hi.clone(), fill: lo.clone(), rects: rects.clone(), closed: false };
        let d = drive(t, &spec, budget.steps_per_round, |i, q| cantor_unpair(i as u64).0 == k && q <= &theta)?;
        let Some(m) = d.committed else {
            return Ok(Outcome::NonProductive { round: k, input: spec, steps: d.trace.steps });
        };
        let reads = d.trace.read_at_emit[m];
        let (mut ri, mut rj) = rects.last().copied().unwrap_or((0, 0));
        for n in 0..reads {
            let (i, j) = cantor_unpair(n);
            ri = ri.max(i);
            rj = rj.max(j);
        }
        let i = b.input(format!("round {k}"), spec);
        b.record(i, d.trace);
        committed.push(m);
        rects.push((ri, rj));
    }
    let limit = InputSpec::Rectangles { base: hi.clone(), fill: lo.clone(), rects, closed: true };
    let last = *committed.iter().max().expect("at least one round");
    let trace = replay_run(t, &limit, last + 1, u64::MAX)?;
    let il = b.input("limit", limit);
    let rl = b.record(il, trace);
    let mut preds: Vec<Pred> = committed.iter().map(|&m| cmp(CmpOp::Le, out(rl, m), lit(theta.clone()))).collect();
    preds.push(cmp(CmpOp::Lt, lit(theta.clone()), f_of(il)));
    let summary = format!(
        "{} rows hold entries <= {theta} on a prefix of a name of {lo} where f = {f_lo}",
        committed.len()
    );
    Ok(b.finish(Pred::All(preds), committed.len() as u64, summary))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("transformer {0:?} is not known to this build")]
    UnknownTransformer(String),
    #[error("malformed certificate: {0}")]
    Malformed(String),
    #[error("claim tags do not match the variant or the transformer")]
    TagMismatch,
    #[error("input {0}: recorded prefix differs from its generator")]
    PrefixMismatch(usize),
    #[error("input {0}: generator does not denote a real under the claimed tag")]
    NotAName(usize),
    #[error("run {run}: replay differs from the recorded trace")]
    ReplayMismatch { run: usize },
    #[error("run {run}: replay failed: {error}")]
    ReplayFailed { run: usize, error: String },
    #[error("the recorded data does not satisfy the violated condition")]
    PredicateFalse,
}

struct Checker<'a> {
    cert: &'a Certificate,
}

impl Checker<'_> {
    fn expr(&self, e: &Expr) -> Result<Rational, VerifyError> {
        let bad = |what: String| VerifyError::Malformed(what);
        Ok(match e {
            Expr::Lit(q) => q.clone(),
            Expr::Out { run, index } => self
                .cert
                .runs
                .get(*run)
                .and_then(|r| r.trace.emitted.get(*index))
                .cloned()
                .ok_or_else(|| bad(format!("no output {index} in run {run}")))?,
            Expr::Denot { input } => {
                let rec = self.cert.inputs.get(*input).ok_or_else(|| bad(format!("no input {input}")))?;
                rec.generator.denotes(self.cert.claim.in_tag).ok_or(VerifyError::NotAName(*input))?
            }
            Expr::F(x) => self.cert.claim.target.value(&self.expr(x)?),
            Expr::Sub(a, b) => self.expr(a)? - self.expr(b)?,
            Expr::Abs(a) => self.expr(a)?.abs(),
            Expr::Pow2(k) => Rational::pow2(*k),
        })
    }

    fn pred(&self, p: &Pred) -> Result<bool, VerifyError> {
        Ok(match p {
            Pred::Cmp { op, lhs, rhs } => {
                let (a, b) = (self.expr(lhs)?, self.expr(rhs)?);
                match op {
                    CmpOp::Lt => a < b,
                    CmpOp::Le => a <= b,
                    CmpOp::Gt => a > b,
                    CmpOp::Ge => a >= b,
                    CmpOp::Eq => a == b,
                }
            }
            Pred::All(ps) => {
                for q in ps {
                    if !self.pred(q)? {
                        return Ok(false);
                    }
                }
                true
            }
            Pred::Any(ps) => {
                for q in ps {
                    if self.pred(q)? {
                        return Ok(true);
                    }
                }
                false
            }
            Pred::Agree { a, b, len } => {
                let (x, y) = match (self.cert.inputs.get(*a), self.cert.inputs.get(*b)) {
                    (Some(x), Some(y)) => (x, y),
                    _ => return Err(VerifyError::Malformed("agree refers to a missing input".into())),
                };
                (0..*len).all(|n| x.generator.at(n) == y.generator.at(n))
            }
            Pred::ReadBefore { run, index, max } => self
                .cert
                .runs
                .get(*run)
                .and_then(|r| r.trace.read_at_emit.get(*index))
                .is_some_and(|r| r <= max),
        })
    }
}

/// Replays every recorded run and evaluates the violated condition exactly.
pub fn verify(cert: &Certificate, registry: &dyn Fn(&str) -> Option<Transformer>) -> Result<(), VerifyError> {
    let t = cert.claim.transformer.resolve(registry)?;
    let tags = (cert.claim.in_tag, cert.claim.out_tag);
    if tags != cert.claim.variant.tags() || tags != (t.in_tag(), t.out_tag()) {
        return Err(VerifyError::TagMismatch);
    }
    for (i, rec) in cert.inputs.iter().enumerate() {
        if rec.generator.prefix(rec.prefix.len() as u64) != rec.prefix {
            return Err(VerifyError::PrefixMismatch(i));
        }
        if rec.generator.denotes(cert.claim.in_tag).is_none() {
            return Err(VerifyError::NotAName(i));
        }
    }
    for (k, r) in cert.runs.iter().enumerate() {
        let rec = cert.inputs.get(r.input).ok_or_else(|| VerifyError::Malformed(format!("run {k} has no input")))?;
        let name = Name::finite(cert.claim.in_tag, rec.prefix.clone());
        let trace = run(&t, &name, r.budget).map_err(|e| VerifyError::ReplayFailed { run: k, error: e.to_string() })?;
        if trace != r.trace {
            return Err(VerifyError::ReplayMismatch { run: k });
        }
        if let Some(lines) = &r.transcript {
            if *lines != transcript(&trace, &rec.prefix) {
                return Err(VerifyError::ReplayMismatch { run: k });
            }
        }
    }
    if (Checker { cert }).pred(&cert.violated)? {
        Ok(())
    } else {
        Err(VerifyError::PredicateFalse)
    }
}

/// Deliberately wrong claimants.
pub mod broken {
    use super::*;

    fn threshold(q: &Rational, hi_above: bool) -> Rational {
        let above = q > &Rational::pow2(-5);
        if above == hi_above {
            Rational::one()
        } else {
            Rational::zero()
        }
    }

    /// Heaviside decided from `q_5` against `2^-5`, claimed `Fast(0) -> Fast(0)`.
    pub fn threshold_heaviside() -> Transformer {
        let k = PrefixKernel::new(|_| 6, |p, _| threshold(&p[5], true));
        Transformer::from_kernel("broken/threshold_heaviside", ReprTag::Fast(0), ReprTag::Fast(0), k)
    }

    /// Flipped Heaviside decided the same way, claimed `Fast(0) -> Lower(0)`.
    pub fn threshold_flipped_lower() -> Transformer {
        let k = PrefixKernel::new(|_| 6, |p, _| threshold(&p[5], false));
        Transformer::from_kernel("broken/threshold_flipped_lower", ReprTag::Fast(0), ReprTag::Lower(0), k)
    }

    /// `p_n = 1 - q_n` as a supremum machine.
    pub fn sup_drop() -> Transformer {
        Transformer::pointwise("broken/sup_drop", ReprTag::Lower(0), ReprTag::Lower(0), |q, _| Rational::one() - q)
    }

    /// Decides the flipped Heaviside once from the first ten inputs.
    pub fn limit_decider() -> Transformer {
        let k = PrefixKernel::new(
            |_| 10,
            |p, _| if p[9].abs() <= Rational::pow2(-9) { Rational::one() } else { Rational::zero() },
        );
        Transformer::from_kernel("broken/limit_decider", ReprTag::Fast(1), ReprTag::Fast(1), k)
    }

    /// `p<i,j> = hbar(q_max(i,j))`.
    pub fn liminf_flipped() -> Transformer {
        let k = PrefixKernel::new(
            |m| {
                let (i, j) = cantor_unpair(m);
                i.max(j) + 1
            },
            |p, m| {
                let (i, j) = cantor_unpair(m);
                Target::FlippedHeaviside.value(&p[i.max(j) as usize])
            },
        );
        Transformer::from_kernel("broken/liminf_flipped", ReprTag::Fast(1), ReprTag::Lower(1), k)
    }

    /// Entrywise `1 - q` on double-indexed names.
    pub fn double_drop() -> Transformer {
        Transformer::pointwise("broken/double_drop", ReprTag::Lower(1), ReprTag::Lower(1), |q, _| Rational::one() - q)
    }

    /// The corpus with the attack each entry is meant to lose to.
    pub fn corpus() -> Vec<(Transformer, Target, Variant)> {
        vec![
            (threshold_heaviside(), Target::Heaviside, Variant::FastFast),
            (threshold_flipped_lower(), Target::FlippedHeaviside, Variant::FastLower),
            (sup_drop(), Target::Drop, Variant::LowerLower),
            (limit_decider(), Target::FlippedHeaviside, Variant::LimitLimit),
            (liminf_flipped(), Target::FlippedHeaviside, Variant::LimitLower1),
            (double_drop(), Target::Drop, Variant::Lower1Lower1),
        ]
    }
}

/// Index of row `i`, column `j` in a double-indexed stream.
pub fn entry(i: u64, j: u64) -> u64 {
    cantor_pair(i, j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifting::heaviside_lt;

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn claim(t: &Transformer, target: Target, variant: Variant) -> ClaimSpec {
        ClaimSpec {
            transformer: TransformerRef::Registry(t.id().to_string()),
            in_tag: t.in_tag(),
            out_tag: t.out_tag(),
            target,
            variant,
        }
    }

    fn lookup(id: &str) -> Option<Transformer> {
        broken::corpus().into_iter().map(|(t, _, _)| t).chain([heaviside_lt()]).find(|t| t.id() == id)
    }

    #[test]
    fn targets() {
        assert_eq!(Target::Heaviside.value(&r("0")), r("0"));
        assert_eq!(Target::FlippedHeaviside.value(&r("0")), r("1"));
        assert_eq!(Target::Drop.value(&r("1/4")), r("3/4"));
        assert_eq!(Target::parse("flipped-heaviside"), Some(Target::FlippedHeaviside));
        assert_eq!(Variant::parse("lower1_lower1"), Some(Variant::Lower1Lower1));
    }

    #[test]
    fn generators() {
        let b = InputSpec::Blocks { ends: vec![2, 5], values: vec![r("1"), r("1/2")], tail: r("0") };
        assert_eq!(b.prefix(7), vec![r("1"), r("1"), r("1/2"), r("1/2"), r("1/2"), r("0"), r("0")]);
        let s = InputSpec::Splice { head: vec![r("1"), r("1/2")], value: r("1/4") };
        assert_eq!(s.denotes(ReprTag::Fast(0)), Some(r("1/4")));
        let bad = InputSpec::Splice { head: vec![r("3")], value: r("0") };
        assert_eq!(bad.denotes(ReprTag::Fast(0)), None);
        let rect = InputSpec::Rectangles { base: r("1"), fill: r("0"), rects: vec![(1, 2)], closed: false };
        assert_eq!(rect.at(entry(1, 3)), r("0"));
        assert_eq!(rect.at(entry(1, 2)), r("1"));
        assert_eq!(rect.at(entry(2, 9)), r("1"));
        assert_eq!(rect.denotes(ReprTag::Lower(1)), Some(r("1")));
    }

    #[test]
    fn fast_fast_threshold_example() {
        let t = broken::threshold_heaviside();
        let out = attack(&t, &claim(&t, Target::Heaviside, Variant::FastFast), &AdversaryBudget::default()).unwrap();
        let cert = out.certificate().expect("falsified");
        assert_eq!(cert.inputs[1].generator, InputSpec::Splice {
            head: (0..6).map(|n| Rational::pow2(-n)).collect(),
            value: Rational::pow2(-6),
        });
        assert_eq!(cert.runs[1].trace.emitted[2], r("0"));
        verify(cert, &lookup).unwrap();
    }

    #[test]
    fn whole_corpus_falsified_and_verified() {
        for (t, target, variant) in broken::corpus() {
            let out = attack(&t, &claim(&t, target, variant), &AdversaryBudget::default()).unwrap();
            let cert = out.certificate().unwrap_or_else(|| panic!("{} survived: {out:?}", t.id()));
            verify(cert, &lookup).unwrap_or_else(|e| panic!("{}: {e}", t.id()));
            let json = serde_json::to_string(cert).unwrap();
            let back: Certificate = serde_json::from_str(&json).unwrap();
            assert_eq!(&back, cert);
        }
    }

    #[test]
    fn omega_rounds_commit_distinct_entries() {
        let t = broken::limit_decider();
        let budget = AdversaryBudget { rounds: 6, ..AdversaryBudget::default() };
        let out = attack(&t, &claim(&t, Target::FlippedHeaviside, Variant::LimitLimit), &budget).unwrap();
        let cert = out.certificate().unwrap();
        assert_eq!(cert.rounds, 6);
        let last = cert.runs.last().unwrap();
        assert!(last.trace.emitted.iter().all(|p| p <= &r("1/3")));
        let one = AdversaryBudget { rounds: 1, ..budget };
        assert_eq!(attack(&t, &claim(&t, Target::FlippedHeaviside, Variant::LimitLimit), &one).unwrap().certificate().unwrap().rounds, 1);
    }

    #[test]
    fn edited_certificate_fails() {
        let t = broken::sup_drop();
        let out = attack(&t, &claim(&t, Target::Drop, Variant::LowerLower), &AdversaryBudget::default()).unwrap();
        let mut cert = out.certificate().unwrap().clone();
        cert.runs[1].trace.emitted[0] = r("0");
        assert!(matches!(verify(&cert, &lookup), Err(VerifyError::ReplayMismatch { .. })));
        let mut cert2 = out.certificate().unwrap().clone();
        cert2.claim.transformer = TransformerRef::Registry("nope".into());
        assert_eq!(verify(&cert2, &lookup), Err(VerifyError::UnknownTransformer("nope".into())));
    }

    #[test]
    fn correct_machine_is_not_framed() {
        let t = heaviside_lt();
        let out = attack(&t, &claim(&t, Target::Heaviside, Variant::LowerLower), &AdversaryBudget::default()).unwrap();
        assert!(matches!(out, Outcome::Refuted { .. }));
        let budget = AdversaryBudget { steps_per_round: 2_000, rounds: 6 };
        let out = attack(&t, &claim(&t, Target::Drop, Variant::LowerLower), &budget).unwrap();
        assert!(matches!(out, Outcome::NonProductive { round: 1, .. }));
    }

    #[test]
    fn tag_mismatch() {
        let t = heaviside_lt();
        let c = claim(&t, Target::Heaviside, Variant::FastFast);
        assert!(matches!(attack(&t, &c, &AdversaryBudget::default()), Err(AdversaryError::TagMismatch { .. })));
    }
}
