//! Deterministic converters between representations.

use serde::{Deserialize, Serialize};

use crate::exactnum::{cantor_pair, cantor_unpair, Rational};
use crate::machine::{Fault, Kernel, Poll, PrefixKernel, Transformer};
use crate::names::{Name, NameError, ReprTag};

/// Running max of the lower half and running min of the upper half of a
/// `Bracket(0)` input; output `n` is the midpoint once the gap is below
/// `2^(1-n)`.
#[derive(Clone, Default)]
struct JoinKernel {
    seen: usize,
    lo: Option<Rational>,
    hi: Option<Rational>,
    next: u64,
}

impl Kernel for JoinKernel {
    fn poll(&mut self, inputs: &[Rational]) -> Result<Poll, Fault> {
        for (k, q) in inputs.iter().enumerate().skip(self.seen) {
            if k % 2 == 0 {
                self.lo = Some(match self.lo.take() {
                    Some(l) => l.max(q.clone()),
                    None => q.clone(),
                });
            } else {
                self.hi = Some(match self.hi.take() {
                    Some(h) => h.min(q.clone()),
                    None => q.clone(),
                });
            }
        }
        self.seen = inputs.len();
        if let (Some(lo), Some(hi)) = (&self.lo, &self.hi) {
            if hi - lo < Rational::pow2(1 - self.next as i64) {
                self.next += 1;
                return Ok(Poll::Emit(lo.midpoint(hi)));
            }
        }
        Ok(Poll::Need(inputs.len() as u64 + 1))
    }
}

/// `Bracket(0) -> Fast(0)`. Diverges when the two halves denote different reals.
pub fn join_lt_gt() -> Transformer {
    Transformer::from_kernel("join_lt_gt", ReprTag::Bracket(0), ReprTag::Fast(0), JoinKernel::default())
}

pub fn join_lt_gt_to_rho(lower: &Name, upper: &Name, per_emit: u64) -> Result<Name, Fault> {
    lower.expect_tag(ReprTag::Lower(0))?;
    upper.expect_tag(ReprTag::Upper(0))?;
    let both = Name::interleave(ReprTag::Bracket(0), lower.clone(), upper.clone());
    join_lt_gt().apply(&both, per_emit)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WeakenEdge {
    RhoToLt,
    RhoToGt,
    LtToRho1,
    Rho1ToLt1,
}

impl WeakenEdge {
    pub const ALL: [WeakenEdge; 4] =
        [WeakenEdge::RhoToLt, WeakenEdge::RhoToGt, WeakenEdge::LtToRho1, WeakenEdge::Rho1ToLt1];

    pub fn source(self) -> ReprTag {
        match self {
            WeakenEdge::RhoToLt | WeakenEdge::RhoToGt => ReprTag::Fast(0),
            WeakenEdge::LtToRho1 => ReprTag::Lower(0),
            WeakenEdge::Rho1ToLt1 => ReprTag::Fast(1),
        }
    }

    pub fn target(self) -> ReprTag {
        match self {
            WeakenEdge::RhoToLt => ReprTag::Lower(0),
            WeakenEdge::RhoToGt => ReprTag::Upper(0),
            WeakenEdge::LtToRho1 => ReprTag::Fast(1),
            WeakenEdge::Rho1ToLt1 => ReprTag::Lower(1),
        }
    }

    pub fn transformer(self) -> Transformer {
        let (src, dst) = (self.source(), self.target());
        match self {
            WeakenEdge::RhoToLt => Transformer::pointwise("rho_to_lt", src, dst, |q, n| {
                q - Rational::pow2(-(n as i64))
            }),
            WeakenEdge::RhoToGt => Transformer::pointwise("rho_to_gt", src, dst, |q, n| {
                q + Rational::pow2(-(n as i64))
            }),
            WeakenEdge::LtToRho1 => Transformer::from_kernel("lt_to_rho1", src, dst, RunningMax::default()),
            WeakenEdge::Rho1ToLt1 => {
                let kernel = PrefixKernel::new(
                    |m| {
                        let (i, j) = cantor_unpair(m);
                        i.max(j) + 1
                    },
                    |p, m| {
                        let (i, j) = cantor_unpair(m);
                        p[i.max(j) as usize].clone()
                    },
                );
                Transformer::from_kernel("rho1_to_lt1", src, dst, kernel)
            }
        }
    }
}

#[derive(Clone, Default)]
struct RunningMax {
    best: Option<Rational>,
    next: usize,
}

impl Kernel for RunningMax {
    fn poll(&mut self, inputs: &[Rational]) -> Result<Poll, Fault> {
        let Some(q) = inputs.get(self.next) else {
            return Ok(Poll::Need(self.next as u64 + 1));
        };
        let b = match self.best.take() {
            Some(b) => b.max(q.clone()),
            None => q.clone(),
        };
        self.best = Some(b.clone());
        self.next += 1;
        Ok(Poll::Emit(b))
    }
}

pub fn weaken(name: &Name, edge: WeakenEdge) -> Result<Name, Fault> {
    edge.transformer().apply(name, 1 << 20)
}

/// Row-max normalization of a double-indexed name:
/// `r<i,j> = max(q<0,j>, ..., q<i,j>)`.
pub fn row_max_normalize(tag: ReprTag) -> Transformer {
    let kernel = PrefixKernel::new(
        |m| m + 1,
        |p, m| {
            let (i, j) = cantor_unpair(m);
            (0..=i).map(|k| p[cantor_pair(k, j) as usize].clone()).max().expect("nonempty")
        },
    );
    Transformer::from_kernel("row_max_normalize", tag, tag, kernel)
}

/// `Liminf -> Lower(1)`: `r<i,j> = max over i' <= i of q_max(i',j)`, whose row
/// infima equal `inf_{j >= i} q_j`.
pub fn liminf_to_lower1(source: ReprTag) -> Transformer {
    let kernel = PrefixKernel::new(
        |m| {
            let (i, j) = cantor_unpair(m);
            i.max(j) + 1
        },
        |p, m| {
            let (i, j) = cantor_unpair(m);
            (0..=i).map(|k| p[k.max(j) as usize].clone()).max().expect("nonempty")
        },
    );
    Transformer::from_kernel("liminf_to_lower1", source, ReprTag::Lower(1), kernel)
}

/// Per-witness state of the hard direction.
#[derive(Clone)]
enum Witness {
    Live(Rational),
    Dead,
}

/// `Lower(1) -> Liminf`. Witness `e = <i,n>` carries the running row minimum of
/// row `i` rounded down to the grid `2^-n`, and dies once that minimum falls
/// below `-n`; each witness therefore changes finitely often. Stage `s` reads
/// all entries `<i,j>` with `i, j <= s` and emits the maximum over live
/// witnesses `e <= k_s`, where `k_s` is the least witness that changed at this
/// stage (or `s` if none did). With no live witness in range it emits `-s`.
#[derive(Clone, Default)]
struct LiminfKernel {
    stage: u64,
    row_min: Vec<Rational>,
    witnesses: Vec<Witness>,
}

impl LiminfKernel {
    fn witness_value(&self, e: u64) -> Witness {
        let (i, n) = cantor_unpair(e);
        let m = &self.row_min[i as usize];
        if *m < Rational::from_int(-(n as i64)) {
            Witness::Dead
        } else {
            Witness::Live(m.floor_dyadic(n as u32))
        }
    }
}

impl Kernel for LiminfKernel {
    fn poll(&mut self, inputs: &[Rational]) -> Result<Poll, Fault> {
        let s = self.stage;
        let need = cantor_pair(s, s) + 1;
        if (inputs.len() as u64) < need {
            return Ok(Poll::Need(need));
        }
        let at = |i: u64, j: u64| &inputs[cantor_pair(i, j) as usize];
        for i in 0..s {
            let v = at(i, s);
            if *v < self.row_min[i as usize] {
                self.row_min[i as usize] = v.clone();
            }
        }
        let new_row = (0..=s).map(|j| at(s, j).clone()).min().expect("nonempty");
        self.row_min.push(new_row);

        let mut least_changed = s;
        for e in 0..s {
            let now = self.witness_value(e);
            let changed = match (&self.witnesses[e as usize], &now) {
                (Witness::Live(a), Witness::Live(b)) => a != b,
                (Witness::Live(_), Witness::Dead) => true,
                (Witness::Dead, _) => false,
            };
            if matches!(self.witnesses[e as usize], Witness::Live(_)) {
                self.witnesses[e as usize] = now;
            }
            if changed && e < least_changed {
                least_changed = e;
            }
        }
        let fresh = self.witness_value(s);
        self.witnesses.push(fresh);

        let best = self.witnesses[..=least_changed as usize]
            .iter()
            .filter_map(|w| match w {
                Witness::Live(v) => Some(v),
                Witness::Dead => None,
            })
            .max()
            .cloned();
        self.stage += 1;
        Ok(Poll::Emit(best.unwrap_or_else(|| Rational::from_int(-(s as i64)))))
    }
}

pub fn lower1_to_liminf() -> Transformer {
    Transformer::from_kernel("lower1_to_liminf", ReprTag::Lower(1), ReprTag::Liminf, LiminfKernel::default())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiminfDirection {
    ToLower1,
    FromLower1,
}

pub fn liminf_normalize(name: &Name, direction: LiminfDirection, per_emit: u64) -> Result<Name, Fault> {
    match direction {
        LiminfDirection::ToLower1 => match name.tag() {
            ReprTag::Liminf | ReprTag::LiminfStrict => {
                liminf_to_lower1(name.tag()).apply(name, per_emit)
            }
            found => Err(NameError::TagMismatch { expected: ReprTag::Liminf, found }.into()),
        },
        LiminfDirection::FromLower1 => lower1_to_liminf().apply(name, per_emit),
    }
}

/// Closed rational interval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interval {
    pub lo: Rational,
    pub hi: Rational,
}

impl Interval {
    pub fn hull(a: &Rational, b: &Rational) -> Interval {
        Interval { lo: a.clone().min(b.clone()), hi: a.clone().max(b.clone()) }
    }

    pub fn width(&self) -> Rational {
        &self.hi - &self.lo
    }

    pub fn distance(&self, other: &Interval) -> Rational {
        let gap = (&self.lo - &other.hi).max(&other.lo - &self.hi);
        gap.max(Rational::zero())
    }

    pub fn midpoint(&self) -> Rational {
        self.lo.midpoint(&self.hi)
    }
}

/// `Bracket(1) -> Fast(1)`. At stage `s`, pair `e = <i,k> <= s` carries the
/// hull of the running row minimum `m_i` of the lower half and the running row
/// maximum `M_k` of the upper half. `pi_n` is the least pair whose hull has
/// width at most `2^-n`; the stage emits the midpoint of the hull of `pi_n`
/// for the largest `n <= s` such that `pi_0..pi_n` exist and each earlier hull
/// lies within `2^-n` of it.
#[derive(Clone, Default)]
struct JoinLevel1Kernel {
    stage: u64,
    row_min: Vec<Rational>,
    row_max: Vec<Rational>,
    last: Option<Rational>,
}

impl Kernel for JoinLevel1Kernel {
    fn poll(&mut self, inputs: &[Rational]) -> Result<Poll, Fault> {
        let s = self.stage;
        let need = 2 * cantor_pair(s, s) + 2;
        if (inputs.len() as u64) < need {
            return Ok(Poll::Need(need));
        }
        let lower = |i: u64, j: u64| &inputs[2 * cantor_pair(i, j) as usize];
        let upper = |i: u64, j: u64| &inputs[2 * cantor_pair(i, j) as usize + 1];
        for i in 0..s {
            let (a, b) = (lower(i, s), upper(i, s));
            if *a < self.row_min[i as usize] {
                self.row_min[i as usize] = a.clone();
            }
            if *b > self.row_max[i as usize] {
                self.row_max[i as usize] = b.clone();
            }
        }
        self.row_min.push((0..=s).map(|j| lower(s, j).clone()).min().expect("nonempty"));
        self.row_max.push((0..=s).map(|j| upper(s, j).clone()).max().expect("nonempty"));

        // pis[n] = hull of the least pair with width <= 2^-n.
        let mut pis: Vec<Interval> = Vec::new();
        for e in 0..=s {
            let (i, k) = cantor_unpair(e);
            let hull = Interval::hull(&self.row_min[i as usize], &self.row_max[k as usize]);
            let w = hull.width();
            let reach = if w.is_zero() {
                s
            } else {
                match w.recip().floor_log2() {
                    Some(l) if l >= 0 => (l as u64).min(s),
                    _ => continue,
                }
            };
            while (pis.len() as u64) <= reach {
                pis.push(hull.clone());
            }
        }
        let mut chosen = None;
        for n in 0..pis.len() {
            let tol = Rational::pow2(-(n as i64));
            if pis[..n].iter().all(|p| p.distance(&pis[n]) <= tol) {
                chosen = Some(n);
            }
        }
        let out = match chosen {
            Some(n) => pis[n].midpoint(),
            None => self.last.clone().unwrap_or_else(Rational::zero),
        };
        self.last = Some(out.clone());
        self.stage += 1;
        Ok(Poll::Emit(out))
    }
}

pub fn join_level1() -> Transformer {
    Transformer::from_kernel(
        "join_level1",
        ReprTag::Bracket(1),
        ReprTag::Fast(1),
        JoinLevel1Kernel::default(),
    )
}

pub fn join_level1_names(lower: &Name, upper: &Name, per_emit: u64) -> Result<Name, Fault> {
    lower.expect_tag(ReprTag::Lower(1))?;
    upper.expect_tag(ReprTag::Upper(1))?;
    let both = Name::interleave(ReprTag::Bracket(1), lower.clone(), upper.clone());
    join_level1().apply(&both, per_emit)
}

/// Sign flip: `Lower(d) <-> Upper(d)`; other tags map to themselves.
pub fn negate(tag: ReprTag) -> Transformer {
    let out = match tag {
        ReprTag::Lower(d) => ReprTag::Upper(d),
        ReprTag::Upper(d) => ReprTag::Lower(d),
        other => other,
    };
    Transformer::pointwise("negate", tag, out, |q, _| -q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::{compose, run, Budget};
    use crate::names::{make_synthetic, Schedule, SyntheticSpec, Wobble};

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn constant(tag: ReprTag, x: &str) -> Name {
        Name::constant(tag, r(x))
    }

    #[test]
    fn join_constant_halves() {
        let out = join_lt_gt_to_rho(&constant(ReprTag::Lower(0), "1/3"), &constant(ReprTag::Upper(0), "1/3"), 1000).unwrap();
        assert_eq!(out.prefix(6).unwrap(), vec![r("1/3"); 6]);
    }

    #[test]
    fn join_shrinking_halves_is_fast() {
        let x = r("1/3");
        let lo = { let x = x.clone(); Name::from_fn(ReprTag::Lower(0), move |n| &x - Rational::pow2(-(n as i64))) };
        let hi = { let x = x.clone(); Name::from_fn(ReprTag::Upper(0), move |n| &x + Rational::pow2(-(n as i64))) };
        let out = join_lt_gt_to_rho(&lo, &hi, 1000).unwrap();
        for (n, q) in out.prefix(20).unwrap().iter().enumerate() {
            assert!((q - &x).abs() <= Rational::pow2(-(n as i64)));
        }
    }

    #[test]
    fn join_inconsistent_stalls_after_first() {
        let both = Name::interleave(ReprTag::Bracket(0), constant(ReprTag::Lower(0), "0"), constant(ReprTag::Upper(0), "1"));
        let tr = run(&join_lt_gt(), &both, Budget::steps(5000)).unwrap();
        assert_eq!(tr.emitted, vec![r("1/2")]);
    }

    #[test]
    fn rho_to_lt_on_constant() {
        let out = weaken(&constant(ReprTag::Fast(0), "1/3"), WeakenEdge::RhoToLt).unwrap();
        assert_eq!(out.prefix(3).unwrap(), vec![r("-2/3"), r("-1/6"), r("1/12")]);
        assert_eq!(out.tag(), ReprTag::Lower(0));
    }

    #[test]
    fn lt_to_rho1_is_running_max() {
        let input = Name::padded(ReprTag::Lower(0), vec![r("0"), r("1/4"), r("1/8"), r("5/16")]);
        let out = weaken(&input, WeakenEdge::LtToRho1).unwrap();
        assert_eq!(out.prefix(6).unwrap(), vec![r("0"), r("1/4"), r("1/4"), r("5/16"), r("5/16"), r("5/16")]);
    }

    #[test]
    fn rho1_to_lt1_alternating() {
        let x = r("1/3");
        let q = { let x = x.clone(); Name::from_fn(ReprTag::Fast(1), move |n| {
            let s = if n % 2 == 0 { Rational::one() } else { Rational::from_int(-1) };
            &x + s * Rational::pow2(-(n as i64))
        }) };
        let out = weaken(&q, WeakenEdge::Rho1ToLt1).unwrap();
        // Row infima approach x from below; the sup over rows up to I is reached
        // in the limit only, so check the inequality and the approach rate.
        let (big_i, big_j) = (12u64, 40u64);
        let best = (0..=big_i)
            .map(|i| (0..=big_j).map(|j| out.get(cantor_pair(i, j)).unwrap()).min().unwrap())
            .max()
            .unwrap();
        assert!(best <= x);
        assert!(&x - &best <= Rational::pow2(-(big_i as i64)));
    }

    #[test]
    fn row_max_normalization_makes_row_infima_monotone() {
        let sched = Schedule { wobble: Wobble::Seeded, seed: 4, settle: Some(7), junk: 0 };
        let n = make_synthetic(&SyntheticSpec::new(r("2/9"), ReprTag::Lower(1), sched)).unwrap();
        let out = row_max_normalize(ReprTag::Lower(1)).apply(&n, 1000).unwrap();
        for big_j in [0u64, 3, 9] {
            let inf = |i: u64| (0..=big_j).map(|j| out.get(cantor_pair(i, j)).unwrap()).min().unwrap();
            for i in 0..8 {
                assert!(inf(i + 1) >= inf(i));
            }
        }
    }

    #[test]
    fn easy_liminf_of_alternating() {
        let q = Name::from_fn(ReprTag::Liminf, |n| Rational::from_int((n % 2) as i64));
        let out = liminf_normalize(&q, LiminfDirection::ToLower1, 1000).unwrap();
        let best = (0..=10u64)
            .map(|i| (0..=30u64).map(|j| out.get(cantor_pair(i, j)).unwrap()).min().unwrap())
            .max()
            .unwrap();
        assert_eq!(best, r("0"));
    }

    #[test]
    fn hard_liminf_of_synthetic_half() {
        let sched = Schedule { settle: Some(6), ..Schedule::default() };
        let x = r("1/2");
        let n = make_synthetic(&SyntheticSpec::new(x.clone(), ReprTag::Lower(1), sched)).unwrap();
        let out = liminf_normalize(&n, LiminfDirection::FromLower1, 1 << 22).unwrap();
        let p = out.prefix(200).unwrap();
        let eps = Rational::pow2(-8);
        let tail = &p[150..];
        assert!(tail.iter().all(|v| *v >= &x - &eps));
        assert!(tail.iter().filter(|v| **v <= &x + &eps).count() >= 8);
    }

    #[test]
    fn hard_liminf_survives_unbounded_rows() {
        // Row 0 has infimum -inf; rows i >= 1 have infimum 1 - 2^-i.
        let t = Name::from_fn(ReprTag::Lower(1), |m| {
            let (i, j) = cantor_unpair(m);
            if i == 0 {
                Rational::from_int(-(j as i64))
            } else {
                Rational::one() - Rational::pow2(-(i as i64)) + Rational::pow2(-(j as i64))
            }
        });
        let out = lower1_to_liminf().apply(&t, 1 << 22).unwrap();
        let p = out.prefix(160).unwrap();
        let tail = &p[120..];
        assert!(tail.iter().all(|v| *v <= Rational::one()));
        assert!(tail.iter().any(|v| *v >= r("7/8")));
    }

    #[test]
    fn join_level1_constant_rows() {
        let lo = constant(ReprTag::Lower(1), "1/3");
        let hi = constant(ReprTag::Upper(1), "1/3");
        let out = join_level1_names(&lo, &hi, 1 << 22).unwrap();
        let p = out.prefix(12).unwrap();
        assert!(p[4..].iter().all(|v| (v - r("1/3")).abs() <= Rational::pow2(-8)));
    }

    #[test]
    fn join_level1_inconsistent_does_not_crash() {
        let lo = constant(ReprTag::Lower(1), "0");
        let hi = constant(ReprTag::Upper(1), "1");
        let out = join_level1_names(&lo, &hi, 1 << 22).unwrap();
        assert_eq!(out.prefix(10).unwrap().len(), 10);
    }

    #[test]
    fn negate_breaks_lower_composition() {
        let h = Transformer::identity(ReprTag::Lower(0));
        assert!(compose(&negate(ReprTag::Lower(0)), &h).is_err());
        assert!(compose(&h, &negate(ReprTag::Lower(0))).is_ok());
    }

    #[test]
    fn rho_to_lt_then_lt_to_rho1_converges() {
        let x = r("1/3");
        let sched = Schedule { wobble: Wobble::Alternating, ..Schedule::default() };
        let input = make_synthetic(&SyntheticSpec::new(x.clone(), ReprTag::Fast(0), sched)).unwrap();
        let t = compose(&WeakenEdge::RhoToLt.transformer(), &WeakenEdge::LtToRho1.transformer()).unwrap();
        let tr = run(&t, &input, Budget::emits(24)).unwrap();
        // p_n = max_{k<=n} (q_k - 2^-k) lies in [x - 2^(1-n), x].
        for (n, p) in tr.emitted.iter().enumerate().skip(4) {
            assert!(*p <= x);
            assert!(&x - p <= Rational::pow2(1 - n as i64));
        }
    }
}
