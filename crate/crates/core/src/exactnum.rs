//! Exact rationals, extended values with infinite sentinels, and the Cantor
//! pairing used for every multi-indexed stream.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseRationalError {
    #[error("empty rational literal")]
    Empty,
    #[error("malformed rational literal {0:?}")]
    Malformed(String),
    #[error("zero denominator in {0:?}")]
    ZeroDenominator(String),
}

/// Exact rational in canonical form: positive denominator, reduced.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rational(BigRational);

impl Rational {
    pub fn new(numer: impl Into<BigInt>, denom: impl Into<BigInt>) -> Rational {
        let d: BigInt = denom.into();
        assert!(!d.is_zero(), "zero denominator");
        Rational(BigRational::new(numer.into(), d))
    }

    pub fn from_int(v: i64) -> Rational {
        Rational(BigRational::from_integer(BigInt::from(v)))
    }

    pub fn zero() -> Rational {
        Rational(BigRational::zero())
    }

    pub fn one() -> Rational {
        Rational(BigRational::one())
    }

    /// `2^e` for any integer exponent.
    pub fn pow2(e: i64) -> Rational {
        let mag = BigInt::one() << e.unsigned_abs();
        if e >= 0 {
            Rational(BigRational::from_integer(mag))
        } else {
            Rational(BigRational::new(BigInt::one(), mag))
        }
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn abs(&self) -> Rational {
        Rational(self.0.abs())
    }

    pub fn min(self, other: Rational) -> Rational {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Rational) -> Rational {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn floor(&self) -> BigInt {
        self.0.floor().to_integer()
    }

    pub fn ceil(&self) -> BigInt {
        self.0.ceil().to_integer()
    }

    pub fn recip(&self) -> Rational {
        Rational(self.0.recip())
    }

    pub fn midpoint(&self, other: &Rational) -> Rational {
        (self + other) * Rational::new(1, 2)
    }

    /// Exponent `e` with `self == 2^e`, if `self` is a power of two.
    pub fn log2_exact(&self) -> Option<i64> {
        if !self.is_positive() {
            return None;
        }
        let n = self.numer();
        let d = self.denom();
        let is_pow2 = |v: &BigInt| v.is_positive() && (v & (v - BigInt::one())).is_zero();
        if d.is_one() && is_pow2(n) {
            Some(n.bits() as i64 - 1)
        } else if n.is_one() && is_pow2(d) {
            Some(-(d.bits() as i64 - 1))
        } else {
            None
        }
    }

    /// Largest `e` with `2^e <= self`; `None` for non-positive values.
    pub fn floor_log2(&self) -> Option<i64> {
        if !self.is_positive() {
            return None;
        }
        let guess = self.numer().bits() as i64 - self.denom().bits() as i64;
        let mut e = guess;
        while Rational::pow2(e) > *self {
            e -= 1;
        }
        while Rational::pow2(e + 1) <= *self {
            e += 1;
        }
        Some(e)
    }

    /// Largest multiple of `2^-n` that is `<= self`.
    pub fn floor_dyadic(&self, n: u32) -> Rational {
        let scaled = self * &Rational::pow2(n as i64);
        Rational(BigRational::from_integer(scaled.floor())) * Rational::pow2(-(n as i64))
    }

    pub fn to_f64_lossy(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn inner(&self) -> &BigRational {
        &self.0
    }

    /// Natural number value, if this is a non-negative integer that fits.
    pub fn to_u64(&self) -> Option<u64> {
        if self.is_integer() {
            self.numer().to_u64()
        } else {
            None
        }
    }
}

impl From<i64> for Rational {
    fn from(v: i64) -> Rational {
        Rational::from_int(v)
    }
}

impl From<BigInt> for Rational {
    fn from(v: BigInt) -> Rational {
        Rational(BigRational::from_integer(v))
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

fn parse_int(s: &str, whole: &str) -> Result<BigInt, ParseRationalError> {
    let digits = s.strip_prefix('-').unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseRationalError::Malformed(whole.to_string()));
    }
    s.parse::<BigInt>()
        .map_err(|_| ParseRationalError::Malformed(whole.to_string()))
}

impl FromStr for Rational {
    type Err = ParseRationalError;

    /// Accepts `p/q` with the sign on `p`, and plain integers `p`.
    fn from_str(s: &str) -> Result<Rational, ParseRationalError> {
        if s.is_empty() {
            return Err(ParseRationalError::Empty);
        }
        let (p, q) = match s.split_once('/') {
            Some((p, q)) => (p, Some(q)),
            None => (s, None),
        };
        let numer = parse_int(p, s)?;
        let denom = match q {
            Some(q) => {
                if q.starts_with('-') {
                    return Err(ParseRationalError::Malformed(s.to_string()));
                }
                parse_int(q, s)?
            }
            None => BigInt::one(),
        };
        if denom.is_zero() {
            return Err(ParseRationalError::ZeroDenominator(s.to_string()));
        }
        Ok(Rational(BigRational::new(numer, denom)))
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident) => {
        impl $tr<Rational> for Rational {
            type Output = Rational;
            fn $m(self, rhs: Rational) -> Rational {
                Rational(self.0.$m(rhs.0))
            }
        }
        impl<'a> $tr<&'a Rational> for Rational {
            type Output = Rational;
            fn $m(self, rhs: &'a Rational) -> Rational {
                Rational(self.0.$m(&rhs.0))
            }
        }
        impl<'a> $tr<Rational> for &'a Rational {
            type Output = Rational;
            fn $m(self, rhs: Rational) -> Rational {
                Rational((&self.0).$m(rhs.0))
            }
        }
        impl<'a, 'b> $tr<&'b Rational> for &'a Rational {
            type Output = Rational;
            fn $m(self, rhs: &'b Rational) -> Rational {
                Rational((&self.0).$m(&rhs.0))
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
binop!(Div, div);

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl<'a> Neg for &'a Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-&self.0)
    }
}

/// A rational extended by the two infinite sentinels used by formulas that
/// produce `+inf` or `-inf` entries.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Ext {
    NegInf,
    Fin(Rational),
    PosInf,
}

impl Ext {
    pub fn finite(&self) -> Option<&Rational> {
        match self {
            Ext::Fin(q) => Some(q),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Ext::Fin(_))
    }
}

impl PartialOrd for Ext {
    fn partial_cmp(&self, other: &Ext) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ext {
    fn cmp(&self, other: &Ext) -> Ordering {
        use Ext::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Ordering::Equal,
            (NegInf, _) | (_, PosInf) => Ordering::Less,
            (_, NegInf) | (PosInf, _) => Ordering::Greater,
            (Fin(a), Fin(b)) => a.cmp(b),
        }
    }
}

impl fmt::Display for Ext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ext::NegInf => f.write_str("-inf"),
            Ext::PosInf => f.write_str("+inf"),
            Ext::Fin(q) => q.fmt(f),
        }
    }
}

/// `(i+j)(i+j+1)/2 + j`.
///
/// Panics if the result does not fit in a `u64`.
pub fn cantor_pair(i: u64, j: u64) -> u64 {
    let s = i as u128 + j as u128;
    let v = s * (s + 1) / 2 + j as u128;
    u64::try_from(v).expect("pair index overflow")
}

pub fn cantor_unpair(n: u64) -> (u64, u64) {
    let n = n as u128;
    let w = ((8 * n + 1).isqrt() - 1) / 2;
    let t = w * (w + 1) / 2;
    let j = n - t;
    let i = w - j;
    (i as u64, j as u64)
}

/// Left-associated tuple `<<<i1,i2>,i3>,...>`; a 1-tuple is its entry.
pub fn tuple(ix: &[u64]) -> u64 {
    assert!(!ix.is_empty(), "empty tuple");
    ix[1..].iter().fold(ix[0], |acc, &k| cantor_pair(acc, k))
}

/// Inverse of [`tuple`] for arity `d >= 1`.
pub fn untuple(mut n: u64, d: usize) -> Vec<u64> {
    assert!(d >= 1, "arity must be positive");
    let mut out = vec![0; d];
    for slot in (1..d).rev() {
        let (a, b) = cantor_unpair(n);
        out[slot] = b;
        n = a;
    }
    out[0] = n;
    out
}

/// Stern's diatomic sequence.
fn fusc(mut n: u64) -> u64 {
    let (mut a, mut b) = (1u64, 0u64);
    while n > 0 {
        if n & 1 == 1 {
            b += a;
        } else {
            a += b;
        }
        n >>= 1;
    }
    b
}

/// A fixed enumeration of all of Q: `0, 1, -1, 1/2, -1/2, 2, -2, 1/3, ...`
/// (Calkin-Wilf order on the positives, each followed by its negation).
pub fn rational_at(k: u64) -> Rational {
    if k == 0 {
        return Rational::zero();
    }
    let m = k.div_ceil(2);
    let q = Rational::new(fusc(m), fusc(m + 1));
    if k % 2 == 0 {
        -q
    } else {
        q
    }
}

/// Zig-zag bijection N -> Z: `0, 1, -1, 2, -2, ...`
pub fn zigzag(k: u64) -> i64 {
    if k % 2 == 1 {
        k.div_ceil(2) as i64
    } else {
        -((k / 2) as i64)
    }
}

/// Euclidean gcd helper exposed for canonical-form checks.
pub fn is_canonical(q: &Rational) -> bool {
    q.denom().is_positive() && q.numer().gcd(q.denom()).is_one()
}
