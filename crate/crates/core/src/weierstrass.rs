//! Polynomial-sequence names of functions on `[0, 1]`, rigorous sup-norm
//! brackets, stabilizing streams, and the pulse construction.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exactnum::{cantor_pair, Rational};
use crate::lifting::RationalEvaluator;
use crate::machine::{Fault, Kernel, Poll, PrefixKernel, Transformer};
use crate::names::{LazySeq, NameError, ReprTag};

/// Coefficients lowest degree first, trailing zeros trimmed.
#[derive(Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<Rational>", into = "Vec<Rational>")]
pub struct RationalPolynomial {
    coeffs: Vec<Rational>,
}

impl From<Vec<Rational>> for RationalPolynomial {
    fn from(coeffs: Vec<Rational>) -> Self {
        RationalPolynomial::new(coeffs)
    }
}

impl From<RationalPolynomial> for Vec<Rational> {
    fn from(p: RationalPolynomial) -> Self {
        p.coeffs
    }
}

impl RationalPolynomial {
    pub fn new(mut coeffs: Vec<Rational>) -> Self {
        while coeffs.last().is_some_and(Rational::is_zero) {
            coeffs.pop();
        }
        RationalPolynomial { coeffs }
    }

    pub fn zero() -> Self {
        RationalPolynomial::default()
    }

    pub fn constant(c: Rational) -> Self {
        RationalPolynomial::new(vec![c])
    }

    /// `c X^k`
    pub fn monomial(c: Rational, k: usize) -> Self {
        let mut coeffs = vec![Rational::zero(); k];
        coeffs.push(c);
        RationalPolynomial::new(coeffs)
    }

    pub fn x() -> Self {
        RationalPolynomial::monomial(Rational::one(), 1)
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval(&self, x: &Rational) -> Rational {
        self.coeffs.iter().rev().fold(Rational::zero(), |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        RationalPolynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * Rational::from_int(i as i64))
                .collect(),
        )
    }

    /// `sum |c_i|`, which bounds `|P|` on `[0, 1]`.
    pub fn coefficient_sum(&self) -> Rational {
        self.coeffs.iter().fold(Rational::zero(), |acc, c| acc + c.abs())
    }

    /// Bernstein polynomial of degree `n` for `f` sampled at `k / n`.
    pub fn bernstein(n: usize, f: impl Fn(&Rational) -> Rational) -> Self {
        let binom = |n: usize, k: usize| -> BigInt {
            (0..k).fold(BigInt::from(1), |acc, i| acc * (n - i) / (i + 1))
        };
        let mut coeffs = vec![Rational::zero(); n + 1];
        for k in 0..=n {
            let fk = f(&Rational::new(k as i64, n.max(1) as i64)) * Rational::from(binom(n, k));
            if fk.is_zero() {
                continue;
            }
            for j in 0..=(n - k) {
                let term = &fk * Rational::from(binom(n - k, j));
                if j % 2 == 0 {
                    coeffs[k + j] = &coeffs[k + j] + term;
                } else {
                    coeffs[k + j] = &coeffs[k + j] - term;
                }
            }
        }
        RationalPolynomial::new(coeffs)
    }
}

impl fmt::Debug for RationalPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for RationalPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| match i {
                0 => format!("{c}"),
                1 => format!("{c}*X"),
                _ => format!("{c}*X^{i}"),
            })
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}

impl Add for &RationalPolynomial {
    type Output = RationalPolynomial;
    fn add(self, rhs: &RationalPolynomial) -> RationalPolynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let zero = Rational::zero();
        RationalPolynomial::new(
            (0..n)
                .map(|i| self.coeffs.get(i).unwrap_or(&zero) + rhs.coeffs.get(i).unwrap_or(&zero))
                .collect(),
        )
    }
}

impl Neg for &RationalPolynomial {
    type Output = RationalPolynomial;
    fn neg(self) -> RationalPolynomial {
        RationalPolynomial::new(self.coeffs.iter().map(|c| -c).collect())
    }
}

impl Sub for &RationalPolynomial {
    type Output = RationalPolynomial;
    fn sub(self, rhs: &RationalPolynomial) -> RationalPolynomial {
        self + &(-rhs)
    }
}

impl Mul for &RationalPolynomial {
    type Output = RationalPolynomial;
    fn mul(self, rhs: &RationalPolynomial) -> RationalPolynomial {
        if self.is_zero() || rhs.is_zero() {
            return RationalPolynomial::zero();
        }
        let mut coeffs = vec![Rational::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                coeffs[i + j] = &coeffs[i + j] + a * b;
            }
        }
        RationalPolynomial::new(coeffs)
    }
}

impl Mul<&Rational> for &RationalPolynomial {
    type Output = RationalPolynomial;
    fn mul(self, rhs: &Rational) -> RationalPolynomial {
        RationalPolynomial::new(self.coeffs.iter().map(|c| c * rhs).collect())
    }
}

/// Brackets `(lo, hi)` on `sup_{[0,1]} |P|` with `hi - lo <= 2^-k`.
///
/// `|P|` is evaluated on the dyadic grid of mesh `2^-g`, where `g` is the
/// least level with `L 2^(-g-1) <= 2^-k` and `L` is the coefficient-sum
/// bound on `|P'|`. Every coarser level also gives an upper bound; the
/// least one is kept, so brackets for larger `k` nest inside smaller ones.
pub fn sup_norm_bounds(p: &RationalPolynomial, k: u32) -> (Rational, Rational) {
    if p.is_zero() {
        return (Rational::zero(), Rational::zero());
    }
    let lip = p.derivative().coefficient_sum();
    let target = Rational::pow2(-(k as i64));
    let mut g: u32 = 0;
    while &lip * Rational::pow2(-(g as i64) - 1) > target {
        g += 1;
    }
    let points = 1u64 << g;
    let values: Vec<Rational> =
        (0..=points).map(|j| p.eval(&Rational::new(j as i64, points as i64)).abs()).collect();
    let mut hi: Option<Rational> = None;
    let mut lo = Rational::zero();
    for level in 0..=g {
        let stride = 1usize << (g - level);
        let m = values.iter().step_by(stride).fold(Rational::zero(), |acc, v| acc.max(v.clone()));
        let upper = &m + &lip * Rational::pow2(-(level as i64) - 1);
        hi = Some(match hi {
            Some(h) => h.min(upper),
            None => upper,
        });
        lo = m;
    }
    (lo, hi.expect("at least one level"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WeierLevel {
    /// `|f - P_n| <= 2^-n` on `[0, 1]`.
    Fast,
    /// `f` is the uniform limit of `Q_m`.
    Limit,
    /// `f` is the iterated uniform limit of `Q_<i,j>`.
    Double,
}

#[derive(Clone)]
pub struct WeierstrassName {
    pub level: WeierLevel,
    pub polys: LazySeq<RationalPolynomial>,
}

impl fmt::Debug for WeierstrassName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeierstrassName").field("level", &self.level).finish_non_exhaustive()
    }
}

impl WeierstrassName {
    pub fn new(level: WeierLevel, polys: LazySeq<RationalPolynomial>) -> Self {
        WeierstrassName { level, polys }
    }

    pub fn from_fn(level: WeierLevel, f: impl Fn(u64) -> RationalPolynomial + Send + 'static) -> Self {
        WeierstrassName::new(level, LazySeq::from_fn(f))
    }

    pub fn constant(level: WeierLevel, p: RationalPolynomial) -> Self {
        WeierstrassName::from_fn(level, move |_| p.clone())
    }

    pub fn get(&self, m: u64) -> Result<RationalPolynomial, NameError> {
        self.polys.get(m)
    }

    /// Entry `(i, j)` of a doubly indexed name.
    pub fn get2(&self, i: u64, j: u64) -> Result<RationalPolynomial, NameError> {
        self.polys.get(cantor_pair(i, j))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WeierError {
    #[error("expected a {expected:?} function name, got {got:?}")]
    Level { expected: WeierLevel, got: WeierLevel },
}

#[derive(Clone)]
struct WeierEval {
    polys: LazySeq<RationalPolynomial>,
    next: u64,
}

impl Kernel for WeierEval {
    fn poll(&mut self, inputs: &[Rational]) -> Result<Poll, Fault> {
        let Some(q) = inputs.get(self.next as usize) else {
            return Ok(Poll::Need(self.next + 1));
        };
        let p = self.polys.get(self.next)?;
        self.next += 1;
        Ok(Poll::Emit(p.eval(q)))
    }
}

/// `p_n = Q_n(q_n)`, `Fast(1) -> Fast(1)`. A fast function name is accepted
/// too, being in particular a limit name. Inputs outside `[0, 1]` carry no
/// guarantee.
pub fn weier_eval_prime(fname: &WeierstrassName) -> Result<Transformer, WeierError> {
    if fname.level == WeierLevel::Double {
        return Err(WeierError::Level { expected: WeierLevel::Limit, got: fname.level });
    }
    Ok(Transformer::from_kernel(
        "weier_eval_prime",
        ReprTag::Fast(1),
        ReprTag::Fast(1),
        WeierEval { polys: fname.polys.clone(), next: 0 },
    ))
}

/// Stage-by-stage values of a computation that eventually stops changing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stabilizing<T> {
    stages: Vec<T>,
}

impl<T: Clone + PartialEq> Stabilizing<T> {
    /// Value at `stage`; stages past the recorded horizon repeat the last one.
    pub fn read(&self, stage: u64) -> Option<T> {
        let i = (stage as usize).min(self.stages.len().checked_sub(1)?);
        Some(self.stages[i].clone())
    }

    pub fn stages(&self) -> &[T] {
        &self.stages
    }

    /// Stages at which the value differs from the previous stage.
    pub fn changes(&self) -> Vec<u64> {
        self.stages.windows(2).enumerate().filter(|(_, w)| w[0] != w[1]).map(|(i, _)| i as u64 + 1).collect()
    }

    /// First stage from which the recorded values are constant.
    pub fn settled_at(&self) -> u64 {
        self.changes().last().copied().unwrap_or(0)
    }

    pub fn last(&self) -> Option<T> {
        self.stages.last().cloned()
    }
}

pub fn limitlemma_wrap<T>(values: impl IntoIterator<Item = T>) -> Stabilizing<T> {
    Stabilizing { stages: values.into_iter().collect() }
}

pub fn limitlemma_read<T: Clone + PartialEq>(s: &Stabilizing<T>, stage: u64) -> Option<T> {
    s.read(stage)
}

/// A doubly indexed family `v(n, m)`, eventually constant in `m` for each `n`.
#[derive(Clone)]
pub struct StabilizingArray<T> {
    f: Arc<dyn Fn(u64, u64) -> T + Send + Sync>,
}

impl<T: Clone + PartialEq> StabilizingArray<T> {
    pub fn new(f: impl Fn(u64, u64) -> T + Send + Sync + 'static) -> Self {
        StabilizingArray { f: Arc::new(f) }
    }

    pub fn read(&self, n: u64, stage: u64) -> T {
        (self.f)(n, stage)
    }

    pub fn row(&self, n: u64, horizon: u64) -> Stabilizing<T> {
        limitlemma_wrap((0..=horizon).map(|m| (self.f)(n, m)))
    }
}

/// `||P|| <= 2^-n`, certified by brackets; ambiguous cases count as failures.
fn certified_within(p: &RationalPolynomial, n: u64) -> bool {
    if p.is_zero() {
        return true;
    }
    let bound = Rational::pow2(-(n as i64));
    let (_, hi) = sup_norm_bounds(p, n as u32 + 3);
    hi <= bound
}

/// Candidate `m` at each stage `s <= horizon`: the least `m <= s` such that
/// every pair `k, l` in `[m, s]` has `||Q(n,k) - Q(n,l)|| <= 2^-n`. The
/// candidate never decreases, so each pair is checked at most once.
pub fn fastsub_extract(q: &dyn Fn(u64, u64) -> RationalPolynomial, n: u64, horizon: u64) -> Stabilizing<u64> {
    let row: Vec<RationalPolynomial> = (0..=horizon).map(|m| q(n, m)).collect();
    let mut m = 0u64;
    let mut stages = Vec::with_capacity(row.len());
    for s in 0..=horizon {
        let newest = &row[s as usize];
        if let Some(bad) = (m..s).rev().find(|&k| !certified_within(&(newest - &row[k as usize]), n)) {
            m = bad + 1;
        }
        stages.push(m);
    }
    limitlemma_wrap(stages)
}

pub type Enumeration = Arc<dyn Fn(u64) -> u64 + Send + Sync>;

/// Hat on `[0, 1]` peaking at `1/2` with value `1`; zero elsewhere.
pub fn hat(t: &Rational) -> Rational {
    let half = Rational::new(1, 2);
    if t.is_negative() || t > &Rational::one() {
        return Rational::zero();
    }
    let two = Rational::from_int(2);
    if t <= &half {
        &two * t
    } else {
        two * (Rational::one() - t)
    }
}

/// `f(x) = sum_(m >= 1) 2^(-h(m)) hat(2^m x - 1)`; term `m` lives on
/// `[2^-m, 2^(1-m)]`, so a rational `x` meets at most one nonzero term.
#[derive(Clone)]
pub struct PulseFunction {
    h: Enumeration,
    depth: u64,
}

impl PulseFunction {
    pub fn new(h: Enumeration, depth: u64) -> Self {
        PulseFunction { h, depth }
    }

    pub fn depth(&self) -> u64 {
        self.depth
    }

    /// Sum of terms `1..=depth` at `x`.
    pub fn truncated(&self, x: &Rational, depth: u64) -> Rational {
        if !x.is_positive() || x > &Rational::one() {
            return Rational::zero();
        }
        let m = -x.floor_log2().expect("positive");
        if m < 1 || m as u64 > depth {
            return Rational::zero();
        }
        let a = Rational::pow2(-((self.h)(m as u64) as i64));
        a * hat(&(Rational::pow2(m) * x - Rational::one()))
    }

    /// Value of the truncation at the configured depth.
    pub fn value(&self, x: &Rational) -> Rational {
        self.truncated(x, self.depth)
    }
}

impl RationalEvaluator for PulseFunction {
    fn eval(&self, q: &Rational, _n: u64) -> Rational {
        self.truncated(q, u64::MAX)
    }

    fn label(&self) -> &str {
        "pulse"
    }
}

/// The evaluator and the diagonal `p_M = f_M(q_M)` transformer,
/// `Fast(1) -> Fast(1)`.
pub fn pulse_construct(h: Enumeration, depth: u64) -> (PulseFunction, Transformer) {
    let f = PulseFunction::new(h, depth);
    let g = f.clone();
    let t = Transformer::from_kernel(
        "pulse",
        ReprTag::Fast(1),
        ReprTag::Fast(1),
        PrefixKernel::new(|m| m + 1, move |qs, m| g.truncated(&qs[m as usize], m)),
    );
    (f, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::{run, Budget};
    use crate::names::Name;

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn poly(cs: &[&str]) -> RationalPolynomial {
        RationalPolynomial::new(cs.iter().map(|c| r(c)).collect())
    }

    #[test]
    fn trims_and_evaluates() {
        let p = poly(&["1", "0", "2", "0", "0"]);
        assert_eq!(p.degree(), Some(2));
        assert_eq!(p.eval(&r("1/2")), r("3/2"));
        assert_eq!(p.derivative(), poly(&["0", "4"]));
        assert!(poly(&["0", "0"]).is_zero());
    }

    #[test]
    fn json_round_trip() {
        let p = poly(&["-1/2", "0", "3"]);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"["-1/2","0/1","3/1"]"#);
        let back: RationalPolynomial = serde_json::from_str(r#"["1","2","0"]"#).unwrap();
        assert_eq!(back, poly(&["1", "2"]));
    }

    #[test]
    fn arithmetic() {
        let x = RationalPolynomial::x();
        let p = &(&x * &x) - &x;
        assert_eq!(p, poly(&["0", "-1", "1"]));
        assert_eq!(&p + &(-&p), RationalPolynomial::zero());
    }

    #[test]
    fn sup_norm_examples() {
        let p = poly(&["0", "-1", "1"]);
        let (lo, hi) = sup_norm_bounds(&p, 6);
        assert!(lo <= r("1/4") && r("1/4") <= hi && &hi - &lo <= Rational::pow2(-6));
        assert_eq!(sup_norm_bounds(&RationalPolynomial::zero(), 3), (r("0"), r("0")));
        let (lo, hi) = sup_norm_bounds(&RationalPolynomial::x(), 4);
        assert!(lo <= r("1") && r("1") <= hi && &hi - &lo <= Rational::pow2(-4));
    }

    #[test]
    fn brackets_nest() {
        let p = poly(&["1/3", "-2", "0", "5/2", "-1"]);
        for k in 0..6 {
            let (lo, hi) = sup_norm_bounds(&p, k);
            let (lo2, hi2) = sup_norm_bounds(&p, k + 4);
            assert!(lo <= lo2 && hi2 <= hi, "k={k}");
        }
    }

    #[test]
    fn bernstein_reproduces_linear() {
        let b = RationalPolynomial::bernstein(5, |x| Rational::from_int(2) * x + r("1/3"));
        assert_eq!(b, poly(&["1/3", "2"]));
    }

    #[test]
    fn eval_prime_squares() {
        let fname = WeierstrassName::constant(WeierLevel::Limit, poly(&["0", "0", "1"]));
        let t = weier_eval_prime(&fname).unwrap();
        let out = run(&t, &Name::constant(ReprTag::Fast(1), r("1/2")), Budget::emits(4)).unwrap();
        assert_eq!(out.emitted, vec![r("1/4"); 4]);
        let dbl = WeierstrassName::constant(WeierLevel::Double, RationalPolynomial::zero());
        assert!(weier_eval_prime(&dbl).is_err());
    }

    #[test]
    fn fastsub_constant_row() {
        let p = poly(&["1", "1"]);
        let s = fastsub_extract(&|_, _| p.clone(), 3, 10);
        assert_eq!(s.stages(), &[0; 11]);
    }

    #[test]
    fn fastsub_alternating_row() {
        let n = 3;
        let p = poly(&["1/5", "0", "1"]);
        let bump = &p + &(&RationalPolynomial::x() * &Rational::pow2(1 - n as i64));
        let row = move |_: u64, m: u64| if m < 5 && m % 2 == 0 { bump.clone() } else { p.clone() };
        let s = fastsub_extract(&row, n, 12);
        assert_eq!(s.last(), Some(5));
        assert_eq!(fastsub_extract(&row, n, 48).last(), Some(5));
    }

    #[test]
    fn stabilizing_reads() {
        let s = limitlemma_wrap(vec![0, 0, 1, 1, 1, 2]);
        assert_eq!(s.changes(), vec![2, 5]);
        assert_eq!(s.settled_at(), 5);
        assert_eq!(limitlemma_read(&s, 99), Some(2));
        assert!((0..5).all(|i| s.read(i) != s.read(5)));
        assert_eq!(limitlemma_wrap(vec![7; 4]).settled_at(), 0);
        let a = StabilizingArray::new(|n, m| m.min(n));
        assert_eq!(a.row(3, 8).settled_at(), 3);
    }

    #[test]
    fn pulse_examples() {
        let (f, _) = pulse_construct(Arc::new(|m| m), 12);
        assert_eq!(f.value(&r("3/4")), r("1/2"));
        assert_eq!(f.value(&r("3/8")), r("1/4"));
        assert_eq!(f.value(&r("0")), r("0"));
        assert_eq!(f.value(&r("-1/3")), r("0"));
        assert_eq!(f.value(&r("3/2")), r("0"));
        assert_eq!(f.value(&r("1/2")), r("0"));
    }

    #[test]
    fn pulse_transformer_diagonal() {
        let (_, t) = pulse_construct(Arc::new(|m| m + 1), 12);
        let out = run(&t, &Name::constant(ReprTag::Fast(1), r("3/4")), Budget::emits(3)).unwrap();
        assert_eq!(out.emitted, vec![r("0"), r("1/4"), r("1/4")]);
    }
}
