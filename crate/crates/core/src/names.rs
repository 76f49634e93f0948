//! Tagged lazy rational streams, synthetic generators with known limits, and
//! finite-prefix consistency checks.

use std::fmt;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exactnum::{tuple, untuple, Rational};

/// Which real a stream denotes, and how.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReprTag {
    /// Level 0: `|x - q_n| <= 2^-n`; level d: d nested limits.
    Fast(u32),
    /// Alternating sup/inf of depth `d + 1`, starting with sup.
    Lower(u32),
    /// Alternating inf/sup of depth `d + 1`, starting with inf.
    Upper(u32),
    /// Fast from some unknown index on.
    Hotz,
    /// Binary digits embedded as `0/1`, `1/1`; the first token is the integer digit.
    Binary,
    /// `x = liminf q`.
    Liminf,
    /// `x = liminf q` with `q_n < x` infinitely often.
    LiminfStrict,
    /// A `Lower(d)` name interleaved with an `Upper(d)` name of the same real
    /// (even positions lower, odd positions upper).
    Bracket(u32),
}

impl ReprTag {
    pub fn kind(&self) -> &'static str {
        match self {
            ReprTag::Fast(_) => "FAST",
            ReprTag::Lower(_) => "LOWER",
            ReprTag::Upper(_) => "UPPER",
            ReprTag::Hotz => "HOTZ",
            ReprTag::Binary => "BINARY",
            ReprTag::Liminf => "LIMINF",
            ReprTag::LiminfStrict => "LIMINF_STRICT",
            ReprTag::Bracket(_) => "BRACKET",
        }
    }

    pub fn level(&self) -> Option<u32> {
        match *self {
            ReprTag::Fast(d) | ReprTag::Lower(d) | ReprTag::Upper(d) | ReprTag::Bracket(d) => {
                Some(d)
            }
            _ => None,
        }
    }

    pub fn from_parts(kind: &str, level: Option<u32>) -> Result<ReprTag, NameError> {
        let need = |l: Option<u32>| l.ok_or_else(|| NameError::BadTag(format!("{kind} needs a level")));
        let none = |l: Option<u32>, t: ReprTag| match l {
            None => Ok(t),
            Some(_) => Err(NameError::BadTag(format!("{kind} carries no level"))),
        };
        match kind {
            "FAST" => Ok(ReprTag::Fast(need(level)?)),
            "LOWER" => Ok(ReprTag::Lower(need(level)?)),
            "UPPER" => Ok(ReprTag::Upper(need(level)?)),
            "BRACKET" => Ok(ReprTag::Bracket(need(level)?)),
            "HOTZ" => none(level, ReprTag::Hotz),
            "BINARY" => none(level, ReprTag::Binary),
            "LIMINF" => none(level, ReprTag::Liminf),
            "LIMINF_STRICT" => none(level, ReprTag::LiminfStrict),
            other => Err(NameError::BadTag(format!("unknown tag {other:?}"))),
        }
    }

    /// Number of indices the stream is tupled over.
    pub fn arity(&self) -> usize {
        match *self {
            ReprTag::Fast(d) => (d as usize).max(1),
            ReprTag::Lower(d) | ReprTag::Upper(d) | ReprTag::Bracket(d) => d as usize + 1,
            _ => 1,
        }
    }
}

impl fmt::Display for ReprTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.level() {
            Some(d) => write!(f, "{}({})", self.kind(), d),
            None => f.write_str(self.kind()),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TagRepr {
    tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    level: Option<u32>,
}

impl Serialize for ReprTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        TagRepr { tag: self.kind().to_string(), level: self.level() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ReprTag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<ReprTag, D::Error> {
        let t = TagRepr::deserialize(d)?;
        ReprTag::from_parts(&t.tag, t.level).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("finite name exhausted after {len} values")]
    Exhausted { len: u64 },
    #[error("producer made no progress on index {index} within {steps} steps")]
    Diverged { index: u64, steps: u64 },
    #[error("producer failed: {0}")]
    Producer(String),
    #[error("bad tag: {0}")]
    BadTag(String),
    #[error("unsupported synthetic schedule: {0}")]
    Unsupported(String),
    #[error("tag mismatch: expected {expected}, found {found}")]
    TagMismatch { expected: ReprTag, found: ReprTag },
}

type Producer<T> = Box<dyn FnMut(u64) -> Result<T, NameError> + Send>;

struct SeqState<T> {
    producer: Producer<T>,
    memo: Vec<T>,
    error: Option<NameError>,
}

/// A lazily materialized, memoized sequence. Values are produced strictly in
/// index order; reads from several threads see the same values.
pub struct LazySeq<T> {
    state: Arc<Mutex<SeqState<T>>>,
}

impl<T> Clone for LazySeq<T> {
    fn clone(&self) -> Self {
        LazySeq { state: Arc::clone(&self.state) }
    }
}

impl<T: Clone + Send + 'static> LazySeq<T> {
    pub fn new(producer: impl FnMut(u64) -> Result<T, NameError> + Send + 'static) -> Self {
        LazySeq {
            state: Arc::new(Mutex::new(SeqState {
                producer: Box::new(producer),
                memo: Vec::new(),
                error: None,
            })),
        }
    }

    pub fn from_fn(f: impl Fn(u64) -> T + Send + 'static) -> Self {
        LazySeq::new(move |n| Ok(f(n)))
    }

    pub fn finite(values: Vec<T>) -> Self {
        let len = values.len() as u64;
        LazySeq::new(move |n| {
            values.get(n as usize).cloned().ok_or(NameError::Exhausted { len })
        })
    }

    pub fn get(&self, n: u64) -> Result<T, NameError> {
        let mut st = self.state.lock().expect("sequence lock poisoned");
        while st.memo.len() as u64 <= n {
            if let Some(e) = &st.error {
                return Err(e.clone());
            }
            let idx = st.memo.len() as u64;
            match (st.producer)(idx) {
                Ok(v) => st.memo.push(v),
                Err(e) => {
                    st.error = Some(e.clone());
                    return Err(e);
                }
            }
        }
        Ok(st.memo[n as usize].clone())
    }

    pub fn prefix(&self, n: u64) -> Result<Vec<T>, NameError> {
        if n > 0 {
            self.get(n - 1)?;
        }
        let st = self.state.lock().expect("sequence lock poisoned");
        Ok(st.memo[..n as usize].to_vec())
    }

    /// Number of values materialized so far.
    pub fn materialized(&self) -> u64 {
        self.state.lock().expect("sequence lock poisoned").memo.len() as u64
    }
}

/// A real number name: a tagged lazy rational stream.
#[derive(Clone)]
pub struct Name {
    tag: ReprTag,
    seq: LazySeq<Rational>,
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Name")
            .field("tag", &self.tag)
            .field("materialized", &self.seq.materialized())
            .finish()
    }
}

impl Name {
    pub fn new(tag: ReprTag, seq: LazySeq<Rational>) -> Name {
        Name { tag, seq }
    }

    pub fn from_fn(tag: ReprTag, f: impl Fn(u64) -> Rational + Send + 'static) -> Name {
        Name::new(tag, LazySeq::from_fn(f))
    }

    pub fn from_try_fn(
        tag: ReprTag,
        f: impl FnMut(u64) -> Result<Rational, NameError> + Send + 'static,
    ) -> Name {
        Name::new(tag, LazySeq::new(f))
    }

    /// A finite prefix; reading past its end is an error.
    pub fn finite(tag: ReprTag, values: Vec<Rational>) -> Name {
        Name::new(tag, LazySeq::finite(values))
    }

    /// A finite prefix continued by repeating its last value.
    pub fn padded(tag: ReprTag, values: Vec<Rational>) -> Name {
        let last = values.last().cloned().unwrap_or_else(Rational::zero);
        Name::from_fn(tag, move |n| values.get(n as usize).cloned().unwrap_or_else(|| last.clone()))
    }

    /// A finite prefix followed by another name's values at the same positions.
    pub fn splice(tag: ReprTag, head: Vec<Rational>, tail: Name) -> Name {
        Name::from_try_fn(tag, move |n| match head.get(n as usize) {
            Some(v) => Ok(v.clone()),
            None => tail.get(n),
        })
    }

    pub fn constant(tag: ReprTag, v: Rational) -> Name {
        Name::from_fn(tag, move |_| v.clone())
    }

    pub fn tag(&self) -> ReprTag {
        self.tag
    }

    pub fn get(&self, n: u64) -> Result<Rational, NameError> {
        self.seq.get(n)
    }

    /// Entry at a tupled multi-index.
    pub fn at(&self, ix: &[u64]) -> Result<Rational, NameError> {
        self.get(tuple(ix))
    }

    pub fn prefix(&self, n: u64) -> Result<Vec<Rational>, NameError> {
        self.seq.prefix(n)
    }

    pub fn materialized(&self) -> u64 {
        self.seq.materialized()
    }

    /// Same stream under another tag; the memo is shared.
    pub fn retag(&self, tag: ReprTag) -> Name {
        Name { tag, seq: self.seq.clone() }
    }

    pub fn expect_tag(&self, expected: ReprTag) -> Result<(), NameError> {
        if self.tag == expected {
            Ok(())
        } else {
            Err(NameError::TagMismatch { expected, found: self.tag })
        }
    }

    /// Row `i` of a name tupled over `arity` indices, as a name tupled over
    /// `arity - 1` indices.
    pub fn row(&self, i: u64, arity: usize, tag: ReprTag) -> Name {
        assert!(arity >= 2, "rows need arity at least 2");
        let parent = self.clone();
        Name::from_try_fn(tag, move |m| {
            let mut ix = vec![i];
            ix.extend(untuple(m, arity - 1));
            parent.get(tuple(&ix))
        })
    }

    /// Interleave two names: even positions from `a`, odd from `b`.
    pub fn interleave(tag: ReprTag, a: Name, b: Name) -> Name {
        Name::from_try_fn(tag, move |n| if n % 2 == 0 { a.get(n / 2) } else { b.get(n / 2) })
    }
}

/// How the approximants approach the target before settling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wobble {
    /// Exactly the target everywhere after the junk.
    None,
    Below,
    Above,
    Alternating,
    /// A per-index pseudo-random offset in {-1, -1/2, 0, 1/2, 1} times the allowed error.
    Seeded,
}

/// Recorded perturbation plan for a synthetic name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    /// Length of the junk prefix (HOTZ and FAST d >= 1 only).
    #[serde(default)]
    pub junk: u32,
    /// Index from which values sit exactly on the target (rows/columns for
    /// double-indexed names). `None` means never.
    #[serde(default)]
    pub settle: Option<u64>,
    pub wobble: Wobble,
    #[serde(default)]
    pub seed: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { junk: 0, settle: None, wobble: Wobble::None, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub target: Rational,
    pub tag: ReprTag,
    #[serde(default)]
    pub schedule: Schedule,
}

impl SyntheticSpec {
    pub fn new(target: Rational, tag: ReprTag, schedule: Schedule) -> Self {
        SyntheticSpec { target, tag, schedule }
    }
}

/// Offset factor in [-1, 1] for index `n`.
fn wobble_factor(w: Wobble, seed: u64, n: u64) -> Rational {
    match w {
        Wobble::None => Rational::zero(),
        Wobble::Below => Rational::from_int(-1),
        Wobble::Above => Rational::one(),
        Wobble::Alternating => {
            if n % 2 == 0 {
                Rational::one()
            } else {
                Rational::from_int(-1)
            }
        }
        Wobble::Seeded => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
                seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ n,
            );
            Rational::new(rng.gen_range(-2i64..=2), 2)
        }
    }
}

/// Junk value number `k`: pairwise at least 2 apart and at least 1 away from
/// anything within 1 of the target.
pub fn junk_value(x: &Rational, k: u64) -> Rational {
    let mag = Rational::from_int(k as i64 + 2);
    if k % 2 == 0 {
        x + mag
    } else {
        x - mag
    }
}

fn settled(s: &Schedule, n: u64) -> bool {
    s.settle.is_some_and(|t| n >= t)
}

/// `x + w_n 2^-n`, exact after settling.
fn fast0_value(x: &Rational, s: &Schedule, n: u64) -> Rational {
    if settled(s, n) || s.wobble == Wobble::None {
        return x.clone();
    }
    x + wobble_factor(s.wobble, s.seed, n) * Rational::pow2(-(n as i64))
}

fn fast1_value(x: &Rational, s: &Schedule, n: u64) -> Rational {
    if n < s.junk as u64 {
        junk_value(x, n)
    } else {
        fast0_value(x, s, n)
    }
}

fn fast_value(x: &Rational, d: u32, s: &Schedule, n: u64) -> Rational {
    if d <= 1 {
        return fast1_value(x, s, n);
    }
    let ix = untuple(n, d as usize);
    let xi = fast0_value(x, s, ix[0]);
    fast_value(&xi, d - 1, s, tuple(&ix[1..]))
}

fn one_sided(x: &Rational, s: &Schedule, n: u64, sign: i64) -> Rational {
    if settled(s, n) || s.wobble == Wobble::None {
        return x.clone();
    }
    let w = wobble_factor(s.wobble, s.seed, n).abs();
    x + Rational::from_int(sign) * w * Rational::pow2(-(n as i64))
}

/// Double-indexed sup-inf (`sign = -1`) or inf-sup (`sign = 1`) name: row `i`
/// has extremum `x + sign 2^-i` until row `settle`, then `x`; entries of row
/// `i` approach that extremum from the other side until column `settle`.
fn level1_value(x: &Rational, s: &Schedule, n: u64, sign: i64) -> Rational {
    let (i, j) = crate::exactnum::cantor_unpair(n);
    let horizon = s.settle.unwrap_or(u64::MAX);
    let row_ext = if i >= horizon {
        x.clone()
    } else {
        x + Rational::from_int(sign) * Rational::pow2(-(i as i64))
    };
    if j >= horizon {
        row_ext
    } else {
        row_ext - Rational::from_int(sign) * Rational::pow2(-(j as i64))
    }
}

fn binary_digit(x: &Rational, n: u64) -> Rational {
    let scaled = x * &Rational::pow2(n as i64);
    let fl = scaled.floor();
    let bit = fl % 2;
    Rational::from(bit)
}

/// Build the synthetic name described by `spec`.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Name, NameError> {
    let x = spec.target.clone();
    let s = spec.schedule.clone();
    let tag = spec.tag;
    let unsupported = |why: &str| Err(NameError::Unsupported(format!("{tag}: {why}")));
    match tag {
        ReprTag::Fast(0) => {
            if s.junk > 0 {
                return unsupported("fast names admit no junk");
            }
            Ok(Name::from_fn(tag, move |n| fast0_value(&x, &s, n)))
        }
        ReprTag::Fast(d) => Ok(Name::from_fn(tag, move |n| fast_value(&x, d, &s, n))),
        ReprTag::Hotz => Ok(Name::from_fn(tag, move |n| fast1_value(&x, &s, n))),
        ReprTag::Lower(0) | ReprTag::Upper(0) => {
            let sign = if matches!(tag, ReprTag::Lower(_)) { -1 } else { 1 };
            let junk = s.junk as u64;
            Ok(Name::from_fn(tag, move |n| {
                if n < junk {
                    x.clone() + Rational::from_int(sign * (n as i64 + 2))
                } else {
                    one_sided(&x, &s, n, sign)
                }
            }))
        }
        ReprTag::Lower(1) => Ok(Name::from_fn(tag, move |n| level1_value(&x, &s, n, -1))),
        ReprTag::Upper(1) => Ok(Name::from_fn(tag, move |n| level1_value(&x, &s, n, 1))),
        ReprTag::Lower(_) | ReprTag::Upper(_) => unsupported("only levels 0 and 1"),
        ReprTag::Bracket(d) => {
            let lo = make_synthetic(&SyntheticSpec::new(x.clone(), ReprTag::Lower(d), s.clone()))?;
            let hi = make_synthetic(&SyntheticSpec::new(x, ReprTag::Upper(d), s))?;
            Ok(Name::interleave(tag, lo, hi))
        }
        ReprTag::Liminf | ReprTag::LiminfStrict => {
            let strict = tag == ReprTag::LiminfStrict;
            Ok(Name::from_fn(tag, move |n| {
                let m = n / 2;
                if n % 2 == 1 {
                    &x + Rational::one()
                } else if strict {
                    &x - Rational::pow2(-(m as i64))
                } else if settled(&s, m) {
                    x.clone()
                } else {
                    &x + Rational::pow2(-(m as i64))
                }
            }))
        }
        ReprTag::Binary => {
            if x.is_negative() || x >= Rational::from_int(2) {
                return unsupported("binary names need 0 <= x < 2");
            }
            Ok(Name::from_fn(tag, move |n| binary_digit(&x, n)))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Consistency {
    Consistent,
    ViolatedAt(u64, u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("tag {0} has no finite necessary condition")]
pub struct NotCheckable(pub ReprTag);

/// First index pair (lexicographic) violating the finite necessary condition
/// of `tag`. `hotz_n` is the hypothesized settling index for HOTZ names.
pub fn check_consistency(
    tag: ReprTag,
    prefix: &[Rational],
    hotz_n: Option<u64>,
) -> Result<Consistency, NotCheckable> {
    match tag {
        ReprTag::Fast(0) => {
            for k in 0..prefix.len() {
                for l in k + 1..prefix.len() {
                    let bound = Rational::pow2(-(k as i64)) + Rational::pow2(-(l as i64));
                    if (&prefix[k] - &prefix[l]).abs() > bound {
                        return Ok(Consistency::ViolatedAt(k as u64, l as u64));
                    }
                }
            }
            Ok(Consistency::Consistent)
        }
        ReprTag::Hotz => {
            let start = hotz_n.unwrap_or(0) as usize;
            for n in start..prefix.len() {
                let bound = Rational::pow2(1 - n as i64);
                for k in n + 1..prefix.len() {
                    if (&prefix[n] - &prefix[k]).abs() > bound {
                        return Ok(Consistency::ViolatedAt(n as u64, k as u64));
                    }
                }
            }
            Ok(Consistency::Consistent)
        }
        ReprTag::Binary => {
            for (k, v) in prefix.iter().enumerate() {
                if !(v.is_zero() || *v == Rational::one()) {
                    return Ok(Consistency::ViolatedAt(k as u64, k as u64));
                }
            }
            Ok(Consistency::Consistent)
        }
        other => Err(NotCheckable(other)),
    }
}
