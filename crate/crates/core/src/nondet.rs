//! Guess/abort machines, an exhaustive bounded simulator, and the
//! nondeterministic conversions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exactnum::{tuple, untuple, Rational};
use crate::machine::{Action, Fault, Kernel, Machine, Poll, Trace, Transformer};
use crate::names::{Name, ReprTag};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathStatus {
    /// Reached the requested number of emits without aborting.
    Alive,
    /// Aborted at this step.
    Aborted(u64),
    BudgetExhausted,
    /// The input ran out (finite prefix).
    InputExhausted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuessPath {
    pub choices: Vec<u32>,
    pub status: PathStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Survivor {
    pub path: GuessPath,
    pub trace: Trace,
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NondetResult {
    /// Paths alive at the budget, in lexicographic order of their choices.
    pub survivors: Vec<Survivor>,
    /// Leaves of the explored guess tree.
    pub explored: u64,
    pub aborted: u64,
    pub exhausted: u64,
    /// Exploration stopped early on `max_paths` or `max_survivors`.
    pub truncated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NondetBudget {
    /// Emits a path needs to count as alive.
    pub depth: u64,
    pub max_steps_per_path: u64,
    pub max_paths: u64,
    pub max_survivors: u64,
}

impl NondetBudget {
    pub fn new(depth: u64, max_steps_per_path: u64) -> Self {
        NondetBudget { depth, max_steps_per_path, max_paths: 1 << 20, max_survivors: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NondetError {
    #[error("machine cannot be forked at a guess")]
    NotForkable,
    #[error(transparent)]
    Fault(#[from] Fault),
}

struct Node {
    machine: Box<dyn Machine>,
    choices: Vec<u32>,
    trace: Trace,
}

/// Depth-first exploration of the guess tree with branch `0` first, so
/// survivors come out in lexicographic order of their choice lists.
pub fn simulate(t: &Transformer, input: &Name, budget: &NondetBudget) -> Result<NondetResult, NondetError> {
    let mut res = NondetResult::default();
    let mut stack = vec![Node { machine: t.instantiate()?, choices: Vec::new(), trace: Trace::default() }];
    while let Some(mut node) = stack.pop() {
        if res.explored >= budget.max_paths || res.survivors.len() as u64 >= budget.max_survivors {
            res.truncated = true;
            break;
        }
        let status = loop {
            if node.trace.emitted.len() as u64 >= budget.depth {
                break Some(PathStatus::Alive);
            }
            if node.trace.steps >= budget.max_steps_per_path {
                break Some(PathStatus::BudgetExhausted);
            }
            let action = node.machine.step()?;
            node.trace.steps += 1;
            match action {
                Action::Read => match input.get(node.trace.reads) {
                    Ok(q) => {
                        node.trace.reads += 1;
                        node.machine.feed(q)?;
                    }
                    Err(_) => break Some(PathStatus::InputExhausted),
                },
                Action::Emit(q) => {
                    node.trace.emitted.push(q);
                    node.trace.read_at_emit.push(node.trace.reads);
                }
                Action::Internal => {}
                Action::Abort => break Some(PathStatus::Aborted(node.trace.steps)),
                Action::Guess(arity) => {
                    for b in (0..arity).rev() {
                        let mut child = node.machine.fork().ok_or(NondetError::NotForkable)?;
                        child.choose(b);
                        let mut choices = node.choices.clone();
                        choices.push(b);
                        stack.push(Node { machine: child, choices, trace: node.trace.clone() });
                    }
                    break None;
                }
            }
        };
        let Some(status) = status else { continue };
        res.explored += 1;
        match status {
            PathStatus::Alive => res.survivors.push(Survivor {
                path: GuessPath { choices: node.choices, status },
                trace: node.trace,
            }),
            PathStatus::Aborted(_) => res.aborted += 1,
            PathStatus::BudgetExhausted | PathStatus::InputExhausted => res.exhausted += 1,
        }
    }
    Ok(res)
}

/// `|a - b| <= 2^(-l-1)`.
fn fast_pair(a: &Rational, b: &Rational, l: usize) -> bool {
    (a - b).abs() <= Rational::pow2(-(l as i64) - 1)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Ask,
    Waiting,
    Chosen(u32),
}

/// Guesses a subsequence of one row by binary "select this candidate" (0)
/// and "skip it" (1) choices; selected values must satisfy
/// `|p_k - p_l| <= 2^(-l-1)` against every earlier pick `l < k`.
#[derive(Clone)]
struct RowSearch {
    picks: Vec<Rational>,
    cursor: u64,
    phase: Phase,
}

enum RowStep {
    Poll(Poll),
    Picked(Rational),
}

impl RowSearch {
    fn new() -> Self {
        RowSearch { picks: Vec::new(), cursor: 0, phase: Phase::Ask }
    }

    /// `index` maps row positions to input positions.
    fn poll(&mut self, inputs: &[Rational], index: impl Fn(u64) -> u64) -> RowStep {
        match self.phase {
            Phase::Ask => {
                self.phase = Phase::Waiting;
                RowStep::Poll(Poll::Guess(2))
            }
            Phase::Waiting => RowStep::Poll(Poll::Guess(2)),
            Phase::Chosen(1) => {
                self.cursor += 1;
                self.phase = Phase::Ask;
                RowStep::Poll(Poll::Work)
            }
            Phase::Chosen(_) => {
                let g = index(self.cursor);
                let Some(q) = inputs.get(g as usize) else {
                    return RowStep::Poll(Poll::Need(g + 1));
                };
                if !self.picks.iter().enumerate().all(|(l, p)| fast_pair(q, p, l)) {
                    return RowStep::Poll(Poll::Abort);
                }
                self.picks.push(q.clone());
                self.cursor += 1;
                self.phase = Phase::Ask;
                RowStep::Picked(q.clone())
            }
        }
    }

    fn choose(&mut self, b: u32) {
        self.phase = Phase::Chosen(b);
    }
}

#[derive(Clone)]
struct FastSubsequence {
    row: RowSearch,
}

impl Kernel for FastSubsequence {
    fn poll(&mut self, inputs: &[Rational]) -> Result<Poll, Fault> {
        Ok(match self.row.poll(inputs, |j| j) {
            RowStep::Poll(p) => p,
            RowStep::Picked(q) => Poll::Emit(q),
        })
    }

    fn choose(&mut self, b: u32) {
        self.row.choose(b)
    }
}

/// `Fast(1) -> Fast(0)`.
pub fn nd_fast_subsequence() -> Transformer {
    Transformer::from_kernel(
        "nd_fast_subsequence",
        ReprTag::Fast(1),
        ReprTag::Fast(0),
        FastSubsequence { row: RowSearch::new() },
    )
}

/// Output `(n_1..n_d)` is the last pick of a depth `n_d + 1` search in the
/// input row `(n_1..n_d, .)`.
#[derive(Clone)]
struct LevelDown {
    d: usize,
    next: u64,
    row: RowSearch,
}

impl Kernel for LevelDown {
    fn poll(&mut self, inputs: &[Rational]) -> Result<Poll, Fault> {
        let prefix = untuple(self.next, self.d);
        let depth = prefix[self.d - 1] as usize + 1;
        let index = |j: u64| {
            let mut ix = prefix.clone();
            ix.push(j);
            tuple(&ix)
        };
        match self.row.poll(inputs, index) {
            RowStep::Poll(p) => Ok(p),
            RowStep::Picked(q) => {
                if self.row.picks.len() < depth {
                    return Ok(Poll::Work);
                }
                self.next += 1;
                self.row = RowSearch::new();
                Ok(Poll::Emit(q))
            }
        }
    }

    fn choose(&mut self, b: u32) {
        self.row.choose(b)
    }
}

/// `Fast(d+1) -> Fast(d)`.
pub fn nd_level_down(d: u32) -> Transformer {
    if d == 0 {
        return nd_fast_subsequence().with_tags(ReprTag::Fast(1), ReprTag::Fast(0));
    }
    Transformer::from_kernel(
        format!("nd_level_down({d})"),
        ReprTag::Fast(d + 1),
        ReprTag::Fast(d),
        LevelDown { d: d as usize, next: 0, row: RowSearch::new() },
    )
}

/// Binary digits of `x` in `(0, 2)` from a fast name. Digit `k` is guessed,
/// then inputs up to index `k + 4` are read and every digit so far is checked
/// against the certified enclosure of `x`; `x_k = 2^k x - B_k` with
/// `B_(k+1) = 2 (B_k + b_k)`.
#[derive(Clone)]
struct BinaryDigits {
    digits: Vec<u32>,
    offsets: Vec<Rational>,
    next_offset: Rational,
    chosen: Option<u32>,
    asked: bool,
    lo: Option<Rational>,
    hi: Option<Rational>,
    seen: usize,
}

impl BinaryDigits {
    fn new() -> Self {
        BinaryDigits {
            digits: Vec::new(),
            offsets: Vec::new(),
            next_offset: Rational::zero(),
            chosen: None,
            asked: false,
            lo: None,
            hi: None,
            seen: 0,
        }
    }

    fn absorb(&mut self, inputs: &[Rational]) {
        for (n, q) in inputs.iter().enumerate().skip(self.seen) {
            let e = Rational::pow2(-(n as i64));
            let (l, u) = (q - &e, q + &e);
            self.lo = Some(match self.lo.take() {
                Some(x) => x.max(l),
                None => l,
            });
            self.hi = Some(match self.hi.take() {
                Some(x) => x.min(u),
                None => u,
            });
        }
        self.seen = inputs.len();
    }

    fn violated(&self) -> bool {
        let (Some(lo), Some(hi)) = (&self.lo, &self.hi) else { return false };
        let one = Rational::one();
        self.digits.iter().zip(&self.offsets).enumerate().any(|(k, (b, off))| {
            let scale = Rational::pow2(k as i64);
            if *b == 0 {
                &scale * lo - off > one
            } else {
                &scale * hi - off < one
            }
        })
    }
}

impl Kernel for BinaryDigits {
    fn poll(&mut self, inputs: &[Rational]) -> Result<Poll, Fault> {
        let Some(b) = self.chosen else {
            self.asked = true;
            return Ok(Poll::Guess(2));
        };
        let k = self.digits.len() as u64;
        if (inputs.len() as u64) < k + 5 {
            return Ok(Poll::Need(k + 5));
        }
        self.absorb(inputs);
        self.digits.push(b);
        self.offsets.push(self.next_offset.clone());
        if self.violated() {
            return Ok(Poll::Abort);
        }
        self.next_offset = Rational::from_int(2) * (&self.next_offset + Rational::from_int(b as i64));
        self.chosen = None;
        self.asked = false;
        Ok(Poll::Emit(Rational::from_int(b as i64)))
    }

    fn choose(&mut self, b: u32) {
        if self.asked {
            self.chosen = Some(b);
        }
    }
}

/// `Fast(0) -> Binary`.
pub fn nd_binary() -> Transformer {
    Transformer::from_kernel("nd_binary", ReprTag::Fast(0), ReprTag::Binary, BinaryDigits::new())
}

pub type Predicate3 = Arc<dyn Fn(u64, u64, u64) -> bool + Send + Sync>;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Pi2Phase {
    Start,
    Branch,
    /// Claim membership: next `y` to witness.
    Forall(u64),
    /// Claim non-membership: counterexample `y` chosen, next `z` to refute.
    Exists(u64, u64),
    Verified(u32),
}

/// Decides `forall y exists z: P(x, y, z)` over `{0..bound}` for the integer
/// read as the first input. Branch 1 guesses a witness `z` for each `y`;
/// branch 0 guesses a `y` and checks that no `z` works. A branch that
/// verifies emits its bit forever.
#[derive(Clone)]
struct Pi2 {
    p: Predicate3,
    bound: u64,
    x: Option<u64>,
    phase: Pi2Phase,
    pending: Option<u32>,
}

impl Kernel for Pi2 {
    fn poll(&mut self, inputs: &[Rational]) -> Result<Poll, Fault> {
        let x = match self.x {
            Some(x) => x,
            None => {
                let Some(q) = inputs.first() else { return Ok(Poll::Need(1)) };
                let x = q
                    .to_u64()
                    .ok_or_else(|| Fault::Invalid(format!("expected a natural number, got {q}")))?;
                self.x = Some(x);
                x
            }
        };
        match self.phase {
            Pi2Phase::Start => {
                self.phase = Pi2Phase::Branch;
                Ok(Poll::Guess(2))
            }
            Pi2Phase::Branch => match self.pending.take() {
                Some(1) => {
                    self.phase = Pi2Phase::Forall(0);
                    Ok(Poll::Guess(self.bound as u32 + 1))
                }
                Some(_) => {
                    self.phase = Pi2Phase::Exists(u64::MAX, 0);
                    Ok(Poll::Guess(self.bound as u32 + 1))
                }
                None => Ok(Poll::Guess(2)),
            },
            Pi2Phase::Forall(y) => {
                let Some(z) = self.pending.take() else {
                    return Ok(Poll::Guess(self.bound as u32 + 1));
                };
                if !(self.p)(x, y, z as u64) {
                    return Ok(Poll::Abort);
                }
                if y == self.bound {
                    self.phase = Pi2Phase::Verified(1);
                    return Ok(Poll::Work);
                }
                self.phase = Pi2Phase::Forall(y + 1);
                Ok(Poll::Guess(self.bound as u32 + 1))
            }
            Pi2Phase::Exists(u64::MAX, _) => {
                let Some(y) = self.pending.take() else {
                    return Ok(Poll::Guess(self.bound as u32 + 1));
                };
                self.phase = Pi2Phase::Exists(y as u64, 0);
                Ok(Poll::Work)
            }
            Pi2Phase::Exists(y, z) => {
                if (self.p)(x, y, z) {
                    return Ok(Poll::Abort);
                }
                self.phase = if z == self.bound { Pi2Phase::Verified(0) } else { Pi2Phase::Exists(y, z + 1) };
                Ok(Poll::Work)
            }
            Pi2Phase::Verified(b) => Ok(Poll::Emit(Rational::from_int(b as i64))),
        }
    }

    fn choose(&mut self, b: u32) {
        self.pending = Some(b);
    }
}

/// Input: a constant name of a natural `x`; output: `1, 1, ...` or `0, 0, ...`.
pub fn nd_pi2_decide(p: Predicate3, universe_bound: u64) -> Transformer {
    Transformer::from_kernel(
        format!("nd_pi2_decide({universe_bound})"),
        ReprTag::Fast(0),
        ReprTag::Binary,
        Pi2 { p, bound: universe_bound, x: None, phase: Pi2Phase::Start, pending: None },
    )
}
