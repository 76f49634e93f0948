//! Function evaluation under weak representations: Heaviside evaluators,
//! pointwise and row-wise lifting, and apply operators for lower
//! semi-continuous functions given by enumerations.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::exactnum::{cantor_pair, cantor_unpair, rational_at, tuple, untuple, zigzag, Ext, Rational};
use crate::machine::{compose, Action, Budget, Fault, Kernel, Machine, Poll, PrefixKernel, Transformer};
use crate::names::{LazySeq, Name, NameError, ReprTag};
use crate::reductions::{liminf_to_lower1, lower1_to_liminf};

/// `h(x) = 0` for `x <= 0`, else `1`.
pub fn heaviside(q: &Rational) -> Rational {
    if q.is_positive() {
        Rational::one()
    } else {
        Rational::zero()
    }
}

pub fn heaviside_lt() -> Transformer {
    Transformer::pointwise("heaviside_lt", ReprTag::Lower(0), ReprTag::Lower(0), |q, _| heaviside(q))
}

/// Row-max normalize, then `p<i,j> = h(q~<i,j> - 2^-i)`.
pub fn heaviside_lt1() -> Transformer {
    let kernel = PrefixKernel::new(
        |m| m + 1,
        |p, m| {
            let (i, j) = cantor_unpair(m);
            let norm = (0..=i).map(|k| p[cantor_pair(k, j) as usize].clone()).max().expect("nonempty");
            heaviside(&(norm - Rational::pow2(-(i as i64))))
        },
    );
    Transformer::from_kernel("heaviside_lt1", ReprTag::Lower(1), ReprTag::Lower(1), kernel)
}

/// Rational evaluation of a continuous function to a requested precision.
pub trait RationalEvaluator: Send + Sync {
    /// Some `p` with `|p - f(q)| <= 2^-n`.
    fn eval(&self, q: &Rational, n: u64) -> Rational;
    fn label(&self) -> &str;
}

pub struct Square;

impl RationalEvaluator for Square {
    fn eval(&self, q: &Rational, _n: u64) -> Rational {
        q * q
    }
    fn label(&self) -> &str {
        "square"
    }
}

pub struct Identity;

impl RationalEvaluator for Identity {
    fn eval(&self, q: &Rational, _n: u64) -> Rational {
        q.clone()
    }
    fn label(&self) -> &str {
        "identity"
    }
}

/// `p_n = f.eval(q_n, n)`.
pub fn lift_pointwise(f: Arc<dyn RationalEvaluator>) -> Transformer {
    let id = format!("lift_pointwise({})", f.label());
    Transformer::pointwise(id, ReprTag::Fast(1), ReprTag::Fast(1), move |q, n| f.eval(q, n))
}

struct Row {
    machine: Box<dyn Machine>,
    outputs: Vec<Rational>,
    reads: u64,
    pending: Option<u64>,
}

/// Runs one copy of the inner machine per row, served from a shared buffer
/// of the (one-way) input.
struct RowwiseMachine {
    inner: Transformer,
    arity: usize,
    rows: Vec<Row>,
    buffer: Vec<Rational>,
    next: u64,
    awaiting: bool,
}

impl RowwiseMachine {
    fn global_index(&self, row: u64, local: u64) -> u64 {
        let mut ix = vec![row];
        ix.extend(untuple(local, self.arity - 1));
        tuple(&ix)
    }
}

impl Machine for RowwiseMachine {
    fn step(&mut self) -> Result<Action, Fault> {
        let ix = untuple(self.next, self.arity);
        let (i, local) = (ix[0], tuple(&ix[1..]));
        while self.rows.len() as u64 <= i {
            let machine = self.inner.instantiate()?;
            self.rows.push(Row { machine, outputs: Vec::new(), reads: 0, pending: None });
        }
        if let Some(q) = self.rows[i as usize].outputs.get(local as usize).cloned() {
            self.next += 1;
            return Ok(Action::Emit(q));
        }
        if let Some(g) = self.rows[i as usize].pending {
            if (self.buffer.len() as u64) <= g {
                self.awaiting = true;
                return Ok(Action::Read);
            }
            let q = self.buffer[g as usize].clone();
            let row = &mut self.rows[i as usize];
            row.pending = None;
            row.reads += 1;
            row.machine.feed(q)?;
            return Ok(Action::Internal);
        }
        match self.rows[i as usize].machine.step()? {
            Action::Read => {
                let g = self.global_index(i, self.rows[i as usize].reads);
                self.rows[i as usize].pending = Some(g);
            }
            Action::Emit(q) => self.rows[i as usize].outputs.push(q),
            Action::Internal => {}
            other => return Err(Fault::Nondeterministic(format!("{other:?}"))),
        }
        Ok(Action::Internal)
    }

    fn feed(&mut self, q: Rational) -> Result<(), Fault> {
        if !self.awaiting {
            return Err(Fault::Invalid("fed without a pending read".into()));
        }
        self.awaiting = false;
        self.buffer.push(q);
        Ok(())
    }

    fn fork(&self) -> Option<Box<dyn Machine>> {
        let mut rows = Vec::with_capacity(self.rows.len());
        for r in &self.rows {
            rows.push(Row {
                machine: r.machine.fork()?,
                outputs: r.outputs.clone(),
                reads: r.reads,
                pending: r.pending,
            });
        }
        Some(Box::new(RowwiseMachine {
            inner: self.inner.clone(),
            arity: self.arity,
            rows,
            buffer: self.buffer.clone(),
            next: self.next,
            awaiting: self.awaiting,
        }))
    }
}

/// Apply `t: Fast(d) -> Fast(d)` (with `d >= 1`) to every row of a
/// `Fast(d+1)` name. Output entries are produced in index order, so rows are
/// visited in the diagonal order of the tuple enumeration.
pub fn lift_rowwise(t: &Transformer) -> Result<Transformer, Fault> {
    let d = match (t.in_tag(), t.out_tag()) {
        (ReprTag::Fast(a), ReprTag::Fast(b)) if a == b && a >= 1 => a,
        (a, b) => {
            return Err(Fault::Invalid(format!("row-wise lifting needs Fast(d) -> Fast(d), d >= 1; got {a} -> {b}")))
        }
    };
    let inner = t.clone();
    let tag = ReprTag::Fast(d + 1);
    Ok(Transformer::new(format!("lift_rowwise({})", t.id()), tag, tag, move || {
        Ok(Box::new(RowwiseMachine {
            inner: inner.clone(),
            arity: d as usize + 1,
            rows: Vec::new(),
            buffer: Vec::new(),
            next: 0,
            awaiting: false,
        }) as Box<dyn Machine>)
    }))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LscTriple {
    pub a: Rational,
    pub b: Rational,
    pub c: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlscPair {
    pub a: Rational,
    pub c: Rational,
}

/// Enumeration of triples `(a, b, c)` with `c < min f[a, b]`.
#[derive(Clone)]
pub struct LscName(pub LazySeq<LscTriple>);

/// Enumeration of pairs `(a, c)` with `c < f(a)`.
#[derive(Clone)]
pub struct MlscName(pub LazySeq<MlscPair>);

impl LscName {
    pub fn get(&self, k: u64) -> Result<LscTriple, NameError> {
        self.0.get(k)
    }
}

impl MlscName {
    pub fn get(&self, k: u64) -> Result<MlscPair, NameError> {
        self.0.get(k)
    }
}

/// Lower semi-continuous test functions with closed-form minima on intervals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LscFunction {
    Heaviside,
    Identity,
    /// `1 - x` for `x < 0`, `0` on `[0, 1]`, `1` for `x > 1`.
    StepRamp,
    /// `clamp(ceil(x) - 1, 0, 3)`.
    Ladder,
}

impl LscFunction {
    pub fn value(self, x: &Rational) -> Rational {
        match self {
            LscFunction::Heaviside => heaviside(x),
            LscFunction::Identity => x.clone(),
            LscFunction::StepRamp => {
                if x.is_negative() {
                    Rational::one() - x
                } else if *x <= Rational::one() {
                    Rational::zero()
                } else {
                    Rational::one()
                }
            }
            LscFunction::Ladder => {
                let c = Rational::from(x.ceil()) - Rational::one();
                c.max(Rational::zero()).min(Rational::from_int(3))
            }
        }
    }

    /// `min f[a, b]` for `a <= b`.
    pub fn min_on(self, a: &Rational, b: &Rational) -> Rational {
        match self {
            LscFunction::Heaviside | LscFunction::Identity | LscFunction::Ladder => self.value(a),
            LscFunction::StepRamp => {
                if b.is_negative() {
                    Rational::one() - b
                } else if *a > Rational::one() {
                    Rational::one()
                } else {
                    Rational::zero()
                }
            }
        }
    }

    pub fn is_monotone(self) -> bool {
        !matches!(self, LscFunction::StepRamp)
    }

    /// Index `k = <<l, j>, r>` gives `[a, a + 2^-l]` with `a = zigzag(j) 2^(-l-1)`
    /// and `c = min f[a, b] - 2^-r`.
    pub fn lsc_name(self) -> LscName {
        LscName(LazySeq::from_fn(move |k| {
            let ix = untuple(k, 3);
            let (l, j, r) = (ix[0] as i64, ix[1], ix[2] as i64);
            let a = Rational::from_int(zigzag(j)) * Rational::pow2(-l - 1);
            let b = &a + Rational::pow2(-l);
            let c = self.min_on(&a, &b) - Rational::pow2(-r);
            LscTriple { a, b, c }
        }))
    }

    /// Index `k = <u, r>` gives `(rational_at(u), f(a) - 2^-r)`.
    pub fn mlsc_name(self) -> MlscName {
        MlscName(LazySeq::from_fn(move |k| {
            let (u, r) = cantor_unpair(k);
            let a = rational_at(u);
            let c = self.value(&a) - Rational::pow2(-(r as i64));
            MlscPair { a, c }
        }))
    }
}

fn name_err(e: NameError) -> Fault {
    Fault::Name(e)
}

/// Raw entries of the LSC apply formula at index `<k, l, n>`.
#[derive(Clone)]
pub struct LscFormula {
    fname: LscName,
    best: Vec<Rational>,
}

impl LscFormula {
    pub fn new(fname: LscName) -> Self {
        LscFormula { fname, best: Vec::new() }
    }

    /// `max { c_m : m <= k, [a_m, b_m] contains [a_k, b_k] }`.
    fn best_below(&mut self, k: u64) -> Result<Rational, NameError> {
        while self.best.len() as u64 <= k {
            let kk = self.best.len() as u64;
            let t = self.fname.get(kk)?;
            let mut best = t.c.clone();
            for m in 0..kk {
                let s = self.fname.get(m)?;
                if s.a <= t.a && t.b <= s.b && s.c > best {
                    best = s.c;
                }
            }
            self.best.push(best);
        }
        Ok(self.best[k as usize].clone())
    }

    pub fn entry(&mut self, k: u64, l: u64, q_n: &Rational) -> Result<Ext, NameError> {
        let t = self.fname.get(k)?;
        let inside = t.a < *q_n && *q_n < t.b;
        if inside && &t.b - &t.a == Rational::pow2(-(l as i64)) {
            Ok(Ext::Fin(self.best_below(k)?))
        } else {
            Ok(Ext::PosInf)
        }
    }
}

/// Raw entries of the MLSC apply formula at index `<k, n, l>`.
#[derive(Clone)]
pub struct MlscFormula {
    fname: MlscName,
    best: Vec<Rational>,
}

impl MlscFormula {
    pub fn new(fname: MlscName) -> Self {
        MlscFormula { fname, best: Vec::new() }
    }

    /// `max { c_m : m <= k, a_m >= a_k }`.
    fn best_below(&mut self, k: u64) -> Result<Rational, NameError> {
        while self.best.len() as u64 <= k {
            let kk = self.best.len() as u64;
            let t = self.fname.get(kk)?;
            let mut best = t.c.clone();
            for m in 0..kk {
                let s = self.fname.get(m)?;
                if s.a >= t.a && s.c > best {
                    best = s.c;
                }
            }
            self.best.push(best);
        }
        Ok(self.best[k as usize].clone())
    }

    pub fn entry(&mut self, k: u64, l: u64, q_n: &Rational) -> Result<Ext, NameError> {
        let t = self.fname.get(k)?;
        if t.a < *q_n && *q_n < &t.a + Rational::pow2(-(l as i64)) {
            Ok(Ext::Fin(self.best_below(k)?))
        } else {
            Ok(Ext::PosInf)
        }
    }
}

/// Which formula a raw kernel evaluates, with its index layout.
#[derive(Clone)]
enum Formula {
    /// Index `<k, l, n>`.
    Lsc(LscFormula),
    /// Index `<k, n, l>`.
    Mlsc(MlscFormula),
}

impl Formula {
    /// `(k, l, n)` of raw index `m`.
    fn split(&self, m: u64) -> (u64, u64, u64) {
        let ix = untuple(m, 3);
        match self {
            Formula::Lsc(_) => (ix[0], ix[1], ix[2]),
            Formula::Mlsc(_) => (ix[0], ix[2], ix[1]),
        }
    }

    fn entry(&mut self, k: u64, l: u64, q_n: &Rational) -> Result<Ext, NameError> {
        match self {
            Formula::Lsc(f) => f.entry(k, l, q_n),
            Formula::Mlsc(f) => f.entry(k, l, q_n),
        }
    }
}

/// Emits the formula's entries with `+inf` replaced by
/// `max {0, earlier outputs}`.
#[derive(Clone)]
struct PatchedKernel {
    formula: Formula,
    next: u64,
    running_max: Rational,
}

impl Kernel for PatchedKernel {
    fn poll(&mut self, inputs: &[Rational]) -> Result<Poll, Fault> {
        let (k, l, n) = self.formula.split(self.next);
        let Some(q) = inputs.get(n as usize) else {
            return Ok(Poll::Need(n + 1));
        };
        let out = match self.formula.entry(k, l, q).map_err(name_err)? {
            Ext::Fin(v) => v,
            _ => self.running_max.clone(),
        };
        if out > self.running_max {
            self.running_max = out.clone();
        }
        self.next += 1;
        Ok(Poll::Emit(out))
    }
}

/// Raw formula entries `0..count` for a given input stream.
fn raw_entries(mut formula: Formula, q: &Name, count: u64) -> Result<Vec<Ext>, NameError> {
    (0..count)
        .map(|m| {
            let (k, l, n) = formula.split(m);
            formula.entry(k, l, &q.get(n)?)
        })
        .collect()
}

pub fn lsc_raw_entries(fname: &LscName, input: &Name, count: u64) -> Result<Vec<Ext>, NameError> {
    raw_entries(Formula::Lsc(LscFormula::new(fname.clone())), input, count)
}

pub fn mlsc_raw_entries(fname: &MlscName, input: &Name, count: u64) -> Result<Vec<Ext>, NameError> {
    raw_entries(Formula::Mlsc(MlscFormula::new(fname.clone())), input, count)
}

/// `Fast(1) -> Liminf`: the patched LSC formula.
pub fn lsc_liminf(fname: &LscName) -> Transformer {
    let kernel = PatchedKernel {
        formula: Formula::Lsc(LscFormula::new(fname.clone())),
        next: 0,
        running_max: Rational::zero(),
    };
    Transformer::from_kernel("lsc_liminf", ReprTag::Fast(1), ReprTag::Liminf, kernel)
}

/// `Fast(1) -> Lower(1)`.
pub fn lsc_apply(fname: &LscName) -> Transformer {
    compose(&lsc_liminf(fname), &liminf_to_lower1(ReprTag::Liminf))
        .expect("tags line up")
        .with_id("lsc_apply")
}

/// `Liminf -> Liminf`: the patched MLSC formula.
pub fn mlsc_liminf(fname: &MlscName) -> Transformer {
    let kernel = PatchedKernel {
        formula: Formula::Mlsc(MlscFormula::new(fname.clone())),
        next: 0,
        running_max: Rational::zero(),
    };
    Transformer::from_kernel("mlsc_liminf", ReprTag::Liminf, ReprTag::Liminf, kernel)
}

/// `Lower(1) -> Lower(1)`: to a liminf name, through the formula, and back.
pub fn mlsc_apply(fname: &MlscName) -> Transformer {
    let head = compose(&lower1_to_liminf(), &mlsc_liminf(fname)).expect("tags line up");
    compose(&head, &liminf_to_lower1(ReprTag::Liminf))
        .expect("tags line up")
        .with_id("mlsc_apply")
}

/// `p_n = c_n` if `a_n <= q_n`, else no information. Uninformative entries
/// repeat the best value seen so far; output starts once the first
/// informative entry is known, and every earlier position repeats it.
#[derive(Clone)]
struct EvalSupKernel {
    fname: MlscName,
    next: u64,
    scanned: u64,
    best: Option<Rational>,
}

impl Kernel for EvalSupKernel {
    fn poll(&mut self, inputs: &[Rational]) -> Result<Poll, Fault> {
        while self.best.is_none() || self.scanned <= self.next {
            let Some(q) = inputs.get(self.scanned as usize) else {
                return Ok(Poll::Need(self.scanned + 1));
            };
            let pair = self.fname.get(self.scanned).map_err(name_err)?;
            if pair.a <= *q {
                self.best = Some(match self.best.take() {
                    Some(b) => b.max(pair.c),
                    None => pair.c,
                });
            }
            self.scanned += 1;
        }
        self.next += 1;
        Ok(Poll::Emit(self.best.clone().expect("set above")))
    }
}

pub fn mlsc_eval_sup(fname: &MlscName) -> Transformer {
    let kernel = EvalSupKernel { fname: fname.clone(), next: 0, scanned: 0, best: None };
    Transformer::from_kernel("mlsc_eval_sup", ReprTag::Lower(0), ReprTag::Lower(0), kernel)
}

struct Probe {
    a: Rational,
    machine: Box<dyn Machine>,
    outputs: Vec<Rational>,
    relaxed: Vec<u32>,
    confirmed: BTreeSet<Rational>,
    failed: bool,
}

/// Dove-tailed probing of a `Lower(0) -> Lower(0)` machine on constant names.
/// Round `s` opens a probe for `rational_at(s)`, then for every open probe in
/// order: performs one machine step, confirms every earlier output that a new
/// output strictly exceeds (as the pair `(a, c)`), and emits one relaxation
/// `(a, c - 2^-j)` for each observed output `c`.
struct Prober {
    t: Transformer,
    probes: Vec<Probe>,
    queue: VecDeque<MlscPair>,
}

impl Prober {
    fn round(&mut self) -> Result<(), NameError> {
        let u = self.probes.len() as u64;
        let machine = self.t.instantiate().map_err(|f| NameError::Producer(f.to_string()))?;
        self.probes.push(Probe {
            a: rational_at(u),
            machine,
            outputs: Vec::new(),
            relaxed: Vec::new(),
            confirmed: BTreeSet::new(),
            failed: false,
        });
        for p in &mut self.probes {
            if p.failed {
                continue;
            }
            match p.machine.step() {
                Ok(Action::Read) => {
                    if p.machine.feed(p.a.clone()).is_err() {
                        p.failed = true;
                    }
                }
                Ok(Action::Emit(c)) => {
                    for prev in &p.outputs {
                        if *prev < c && p.confirmed.insert(prev.clone()) {
                            self.queue.push_back(MlscPair { a: p.a.clone(), c: prev.clone() });
                        }
                    }
                    p.outputs.push(c);
                    p.relaxed.push(0);
                }
                Ok(Action::Internal) => {}
                Ok(_) | Err(_) => p.failed = true,
            }
            for (c, j) in p.outputs.iter().zip(p.relaxed.iter_mut()) {
                let c = c - Rational::pow2(-(*j as i64));
                self.queue.push_back(MlscPair { a: p.a.clone(), c });
                *j += 1;
            }
        }
        Ok(())
    }
}

pub fn mlsc_enumerate(t: &Transformer) -> Result<MlscName, Fault> {
    if t.in_tag() != ReprTag::Lower(0) || t.out_tag() != ReprTag::Lower(0) {
        return Err(NameError::TagMismatch { expected: ReprTag::Lower(0), found: t.in_tag() }.into());
    }
    let mut prober = Prober { t: t.clone(), probes: Vec::new(), queue: VecDeque::new() };
    Ok(MlscName(LazySeq::new(move |_| loop {
        if let Some(p) = prober.queue.pop_front() {
            return Ok(p);
        }
        prober.round()?;
    })))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Semidecision {
    Yes { index: u64, triple: LscTriple },
    Unknown,
}

/// Whether `f` exceeds `c` somewhere on `[a, b]`, searching the first
/// `budget` triples of the name.
pub fn exceeds_semidecide(
    fname: &LscName,
    a: &Rational,
    b: &Rational,
    c: &Rational,
    budget: u64,
) -> Result<Semidecision, NameError> {
    for k in 0..budget {
        let t = fname.get(k)?;
        if t.a <= *b && *a <= t.b && t.c >= *c {
            return Ok(Semidecision::Yes { index: k, triple: t });
        }
    }
    Ok(Semidecision::Unknown)
}

/// Convenience for tests and the CLI: run a transformer for `budget` and
/// return its emitted values.
pub fn emitted(t: &Transformer, input: &Name, emits: u64) -> Result<Vec<Rational>, Fault> {
    crate::machine::run(t, input, Budget::emits(emits))
        .map(|tr| tr.emitted)
        .map_err(|e| match e {
            crate::machine::RunError::Input { error, .. } => Fault::Name(error),
            crate::machine::RunError::Fault { fault, .. } => fault,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::names::{make_synthetic, Schedule, SyntheticSpec, Wobble};

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn lower0(x: &str) -> Name {
        Name::constant(ReprTag::Lower(0), r(x))
    }

    #[test]
    fn heaviside_lt_cases() {
        assert_eq!(emitted(&heaviside_lt(), &lower0("-1"), 4).unwrap(), vec![r("0"); 4]);
        let up = Name::from_fn(ReprTag::Lower(0), |n| Rational::one() - Rational::pow2(-(n as i64)));
        let out = emitted(&heaviside_lt(), &up, 4).unwrap();
        assert_eq!(out[0], r("0"));
        assert!(out[1..].iter().all(|v| *v == r("1")));
        let zero = Name::from_fn(ReprTag::Lower(0), |n| -Rational::pow2(-(n as i64)));
        assert!(emitted(&heaviside_lt(), &zero, 10).unwrap().iter().all(|v| v.is_zero()));
    }

    #[test]
    fn heaviside_lt1_constant_one() {
        let out = heaviside_lt1().apply(&Name::constant(ReprTag::Lower(1), r("1")), 100).unwrap();
        for i in 1..6 {
            for j in 0..6 {
                assert_eq!(out.get(cantor_pair(i, j)).unwrap(), r("1"));
            }
        }
        assert_eq!(out.get(cantor_pair(0, 3)).unwrap(), r("0"));
    }

    #[test]
    fn heaviside_lt1_at_zero_has_sup_inf_zero() {
        let sched = Schedule { settle: Some(5), ..Schedule::default() };
        let input = make_synthetic(&SyntheticSpec::new(r("0"), ReprTag::Lower(1), sched)).unwrap();
        let out = heaviside_lt1().apply(&input, 100).unwrap();
        for i in 0..10 {
            let inf = (0..=12u64).map(|j| out.get(cantor_pair(i, j)).unwrap()).min().unwrap();
            assert_eq!(inf, r("0"));
        }
    }

    #[test]
    fn lift_pointwise_square() {
        let q = Name::from_fn(ReprTag::Fast(1), |n| r("1/3") + Rational::pow2(-(n as i64)));
        let out = emitted(&lift_pointwise(Arc::new(Square)), &q, 12).unwrap();
        for (n, p) in out.iter().enumerate() {
            let qn = r("1/3") + Rational::pow2(-(n as i64));
            assert_eq!(*p, &qn * &qn);
            if n >= 6 {
                assert!((p - r("1/9")).abs() <= Rational::pow2(-4));
            }
        }
    }

    #[test]
    fn lift_rowwise_identity_preserves_entries() {
        let sched = Schedule { wobble: Wobble::Seeded, seed: 2, ..Schedule::default() };
        let input = make_synthetic(&SyntheticSpec::new(r("1/2"), ReprTag::Fast(2), sched)).unwrap();
        let t = lift_rowwise(&Transformer::identity(ReprTag::Fast(1))).unwrap();
        let out = emitted(&t, &input, 60).unwrap();
        assert_eq!(out, input.prefix(60).unwrap());
    }

    #[test]
    fn lift_rowwise_square_rows() {
        let sched = Schedule { wobble: Wobble::Above, settle: Some(6), ..Schedule::default() };
        let input = make_synthetic(&SyntheticSpec::new(r("1/2"), ReprTag::Fast(2), sched)).unwrap();
        let t = lift_rowwise(&lift_pointwise(Arc::new(Square))).unwrap();
        let out = t.apply(&input, 10_000).unwrap();
        for i in 0..8u64 {
            for j in 0..8u64 {
                let v = input.get(cantor_pair(i, j)).unwrap();
                assert_eq!(out.get(cantor_pair(i, j)).unwrap(), &v * &v);
            }
        }
        // Rows from the settling index on converge to 1/4.
        assert_eq!(out.get(cantor_pair(7, 9)).unwrap(), r("1/4"));
    }

    #[test]
    fn lsc_names_are_sound() {
        for f in [LscFunction::Heaviside, LscFunction::Identity, LscFunction::StepRamp, LscFunction::Ladder] {
            let name = f.lsc_name();
            for k in 0..300 {
                let t = name.get(k).unwrap();
                assert!(t.a < t.b);
                assert!(t.c < f.min_on(&t.a, &t.b));
            }
        }
    }

    #[test]
    fn lsc_entry_infinite_outside() {
        let name = LscFunction::Identity.lsc_name();
        let mut formula = LscFormula::new(name.clone());
        let t = name.get(0).unwrap();
        assert_eq!(formula.entry(0, 0, &(t.b.clone() + Rational::one())).unwrap(), Ext::PosInf);
    }

    #[test]
    fn exceeds_examples() {
        let h = LscFunction::Heaviside.lsc_name();
        assert!(matches!(
            exceeds_semidecide(&h, &r("1/2"), &r("1"), &r("1/2"), 5000).unwrap(),
            Semidecision::Yes { .. }
        ));
        assert!(matches!(
            exceeds_semidecide(&h, &r("-2"), &r("-1"), &r("-1/2"), 5000).unwrap(),
            Semidecision::Yes { .. }
        ));
        assert_eq!(
            exceeds_semidecide(&h, &r("-2"), &r("-1"), &r("0"), 5000).unwrap(),
            Semidecision::Unknown
        );
    }

    #[test]
    fn enumerate_heaviside() {
        let name = mlsc_enumerate(&heaviside_lt()).unwrap();
        let pairs: Vec<_> = (0..3000).map(|k| name.get(k).unwrap()).collect();
        assert!(pairs.iter().any(|p| p.a == r("1/2") && p.c > r("0") && p.c < r("1")));
        assert!(!pairs.iter().any(|p| p.a == r("-1") && p.c >= r("0")));
        for p in &pairs {
            assert!(p.c < heaviside(&p.a));
        }
    }

    #[test]
    fn enumerate_identity_as_sup() {
        let t = Transformer::pointwise("id_sup", ReprTag::Lower(0), ReprTag::Lower(0), |q, n| {
            q - Rational::new(1, n as i64 + 1)
        });
        let name = mlsc_enumerate(&t).unwrap();
        let pairs: Vec<_> = (0..3000).map(|k| name.get(k).unwrap()).collect();
        assert!(pairs.contains(&MlscPair { a: r("1"), c: r("1/2") }));
        assert!(pairs.iter().all(|p| p.c < p.a));
    }

    #[test]
    fn eval_sup_heaviside() {
        let f = LscFunction::Heaviside.mlsc_name();
        let out = emitted(&mlsc_eval_sup(&f), &lower0("1"), 400).unwrap();
        assert!(out.iter().all(|v| *v < r("1")));
        assert!(out.iter().max().unwrap() >= &(r("1") - Rational::pow2(-6)));
        let out = emitted(&mlsc_eval_sup(&f), &lower0("-1"), 400).unwrap();
        assert!(out.iter().all(|v| *v < r("0")));
        assert!(out.iter().max().unwrap() >= &(-Rational::pow2(-6)));
    }
}
