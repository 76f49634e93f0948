//! Ultimately fast names: embeddings, the restart lift, and Heaviside by
//! conservative branching.

use serde::{Deserialize, Serialize};

use crate::exactnum::Rational;
use crate::machine::{Action, Fault, Machine, Transformer};
use crate::names::{Name, NameError, ReprTag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EmbedEdge {
    RhoToHotz,
    HotzToRho1,
}

/// Retag only.
pub fn embed(name: &Name, edge: EmbedEdge) -> Result<Name, NameError> {
    let (src, dst) = match edge {
        EmbedEdge::RhoToHotz => (ReprTag::Fast(0), ReprTag::Hotz),
        EmbedEdge::HotzToRho1 => (ReprTag::Hotz, ReprTag::Fast(1)),
    };
    name.expect_tag(src)?;
    Ok(name.retag(dst))
}

/// Current guess for the index from which the input is fast.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HotzHypothesis(pub u64);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Restart {
    /// Hypothesis after the restart.
    pub hypothesis: HotzHypothesis,
    /// The violating pair `(n, k)` that triggered it.
    pub violation: (u64, u64),
    /// Inputs consumed when it happened.
    pub reads: u64,
    /// Outputs already emitted; the new simulation discards this many.
    pub suppressed: u64,
}

/// Simulates a `Fast(0) -> Hotz` machine on the input shifted by the current
/// hypothesis `N`, watching `|q_n - q_k| <= 2^(1-n)` for `N <= n < k`.
pub struct RestartMachine {
    inner_t: Transformer,
    inner: Box<dyn Machine>,
    buffer: Vec<Rational>,
    hypothesis: u64,
    inner_reads: u64,
    suppress: u64,
    emitted: u64,
    awaiting: bool,
    log: Vec<Restart>,
}

impl RestartMachine {
    pub fn new(t: &Transformer) -> Result<Self, Fault> {
        Ok(RestartMachine {
            inner_t: t.clone(),
            inner: t.instantiate()?,
            buffer: Vec::new(),
            hypothesis: 0,
            inner_reads: 0,
            suppress: 0,
            emitted: 0,
            awaiting: false,
            log: Vec::new(),
        })
    }

    pub fn log(&self) -> &[Restart] {
        &self.log
    }

    pub fn hypothesis(&self) -> HotzHypothesis {
        HotzHypothesis(self.hypothesis)
    }

    /// Smallest `n >= N` with `|q_n - q_k| > 2^(1-n)` for the newest `k`.
    fn violation(&self) -> Option<(u64, u64)> {
        let k = self.buffer.len() - 1;
        let qk = &self.buffer[k];
        (self.hypothesis as usize..k)
            .find(|&n| (&self.buffer[n] - qk).abs() > Rational::pow2(1 - n as i64))
            .map(|n| (n as u64, k as u64))
    }

    fn restart(&mut self, violation: (u64, u64)) -> Result<(), Fault> {
        self.hypothesis += 1;
        self.inner = self.inner_t.instantiate()?;
        self.inner_reads = 0;
        self.suppress = self.emitted;
        self.log.push(Restart {
            hypothesis: HotzHypothesis(self.hypothesis),
            violation,
            reads: self.buffer.len() as u64,
            suppressed: self.emitted,
        });
        Ok(())
    }
}

impl Machine for RestartMachine {
    fn step(&mut self) -> Result<Action, Fault> {
        if self.awaiting {
            return Err(Fault::Invalid("stepped while awaiting input".into()));
        }
        match self.inner.step()? {
            Action::Read => {
                let abs = (self.hypothesis + self.inner_reads) as usize;
                if let Some(q) = self.buffer.get(abs).cloned() {
                    self.inner_reads += 1;
                    self.inner.feed(q)?;
                    Ok(Action::Internal)
                } else {
                    self.awaiting = true;
                    Ok(Action::Read)
                }
            }
            Action::Emit(q) => {
                if self.suppress > 0 {
                    self.suppress -= 1;
                    Ok(Action::Internal)
                } else {
                    self.emitted += 1;
                    Ok(Action::Emit(q))
                }
            }
            Action::Internal => Ok(Action::Internal),
            other => Err(Fault::Nondeterministic(format!("{other:?}"))),
        }
    }

    fn feed(&mut self, q: Rational) -> Result<(), Fault> {
        if !self.awaiting {
            return Err(Fault::Invalid("fed without a pending read".into()));
        }
        self.awaiting = false;
        self.buffer.push(q.clone());
        let mut restarted = false;
        while let Some(v) = self.violation() {
            self.restart(v)?;
            restarted = true;
        }
        if !restarted {
            self.inner_reads += 1;
            self.inner.feed(q)?;
        }
        Ok(())
    }

    fn fork(&self) -> Option<Box<dyn Machine>> {
        Some(Box::new(RestartMachine {
            inner_t: self.inner_t.clone(),
            inner: self.inner.fork()?,
            buffer: self.buffer.clone(),
            hypothesis: self.hypothesis,
            inner_reads: self.inner_reads,
            suppress: self.suppress,
            emitted: self.emitted,
            awaiting: self.awaiting,
            log: self.log.clone(),
        }))
    }
}

/// `Fast(0) -> Hotz` machine lifted to `Hotz -> Hotz`.
pub fn restart_lift(t: &Transformer) -> Result<Transformer, Fault> {
    if t.in_tag() != ReprTag::Fast(0) || t.out_tag() != ReprTag::Hotz {
        return Err(Fault::Invalid(format!(
            "restart lift needs Fast(0) -> Hotz, got {} -> {}",
            t.in_tag(),
            t.out_tag()
        )));
    }
    let inner = t.clone();
    Ok(Transformer::new(format!("restart_lift({})", t.id()), ReprTag::Hotz, ReprTag::Hotz, move || {
        Ok(Box::new(RestartMachine::new(&inner)?) as Box<dyn Machine>)
    }))
}

/// `p_n = 0` if `q_n <= 2^-n`, else `1`.
pub fn heaviside_hotz() -> Transformer {
    Transformer::pointwise("heaviside_hotz", ReprTag::Hotz, ReprTag::Hotz, |q, n| {
        if *q <= Rational::pow2(-(n as i64)) {
            Rational::zero()
        } else {
            Rational::one()
        }
    })
}

/// Squaring on fast names with a fast result: `p_n = q_(n+s)^2` where
/// `2^s >= 2(|q_0| + 1) + 1`.
#[derive(Clone, Default)]
struct SquareKernel {
    shift: Option<u64>,
    next: u64,
}

impl crate::machine::Kernel for SquareKernel {
    fn poll(&mut self, inputs: &[Rational]) -> Result<crate::machine::Poll, Fault> {
        use crate::machine::Poll;
        let shift = match self.shift {
            Some(s) => s,
            None => {
                let Some(q0) = inputs.first() else {
                    return Ok(Poll::Need(1));
                };
                let bound = Rational::from_int(2) * (q0.abs() + Rational::one()) + Rational::one();
                let mut s = 0u64;
                while Rational::pow2(s as i64) < bound {
                    s += 1;
                }
                self.shift = Some(s);
                s
            }
        };
        let idx = (self.next + shift) as usize;
        let Some(q) = inputs.get(idx) else {
            return Ok(Poll::Need(idx as u64 + 1));
        };
        self.next += 1;
        Ok(Poll::Emit(q * q))
    }
}

pub fn square_to_hotz() -> Transformer {
    Transformer::from_kernel("square_fast", ReprTag::Fast(0), ReprTag::Hotz, SquareKernel::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::{run, run_machine, Budget};
    use crate::names::{make_synthetic, Schedule, SyntheticSpec, Wobble};

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    #[test]
    fn embed_is_retag() {
        let x = Name::constant(ReprTag::Fast(0), r("1/3"));
        let h = embed(&x, EmbedEdge::RhoToHotz).unwrap();
        assert_eq!(h.tag(), ReprTag::Hotz);
        assert_eq!(h.prefix(5).unwrap(), x.prefix(5).unwrap());
        assert!(embed(&x, EmbedEdge::HotzToRho1).is_err());
        let back = embed(&h, EmbedEdge::HotzToRho1).unwrap();
        assert_eq!(back.prefix(5).unwrap(), x.prefix(5).unwrap());
    }

    #[test]
    fn no_restart_on_fast_input() {
        let x = Name::from_fn(ReprTag::Hotz, |n| r("1/3") + Rational::pow2(-(n as i64)));
        let mut m = RestartMachine::new(&square_to_hotz()).unwrap();
        let tr = run_machine(&mut m, &x, Budget::emits(10)).unwrap();
        assert!(m.log().is_empty());
        let direct = run(&square_to_hotz(), &x.retag(ReprTag::Fast(0)), Budget::emits(10)).unwrap();
        assert_eq!(tr.emitted, direct.emitted);
    }

    #[test]
    fn junk_triggers_restarts() {
        let x = r("1/3");
        let junk = [r("5"), r("-7")];
        let input = {
            let x = x.clone();
            Name::from_fn(ReprTag::Hotz, move |n| match n {
                0 | 1 => junk[n as usize].clone(),
                _ => &x + Rational::pow2(-(n as i64)),
            })
        };
        let mut m = RestartMachine::new(&square_to_hotz()).unwrap();
        let tr = run_machine(&mut m, &input, Budget::emits(30)).unwrap();
        let log = m.log();
        assert!(!log.is_empty() && log.len() <= 2);
        assert_eq!(m.hypothesis(), HotzHypothesis(2));
        let x2 = &x * &x;
        for (n, p) in tr.emitted.iter().enumerate().skip(log.last().unwrap().suppressed as usize) {
            assert!((p - &x2).abs() <= Rational::pow2(-(n as i64)));
        }
    }

    #[test]
    fn suppressed_outputs_are_discarded() {
        // Emits three values before the junk at index 5 shows up.
        let input = Name::from_fn(ReprTag::Hotz, |n| if n == 5 { r("9") } else { r("0") });
        let t = Transformer::pointwise("id", ReprTag::Fast(0), ReprTag::Hotz, |q, _| q.clone());
        let mut m = RestartMachine::new(&t).unwrap();
        let tr = run_machine(&mut m, &input, Budget::emits(12)).unwrap();
        let first = &m.log()[0];
        assert_eq!(first.suppressed, 5);
        assert_eq!(first.violation, (0, 5));
        assert_eq!(tr.emitted.len(), 12);
    }

    #[test]
    fn heaviside_hotz_cases() {
        let sched = Schedule { junk: 3, ..Schedule::default() };
        let z = make_synthetic(&SyntheticSpec::new(r("0"), ReprTag::Hotz, sched)).unwrap();
        let shifted = Name::from_try_fn(ReprTag::Hotz, move |n| {
            if n < 3 { z.get(n) } else { Ok(Rational::pow2(-(n as i64) - 1)) }
        });
        let out = run(&heaviside_hotz(), &shifted, Budget::emits(20)).unwrap().emitted;
        assert!(out[3..].iter().all(|v| v.is_zero()));
        let half = Name::constant(ReprTag::Hotz, r("1/2"));
        let out = run(&heaviside_hotz(), &half, Budget::emits(10)).unwrap().emitted;
        assert!(out[2..].iter().all(|v| *v == r("1")));
    }

    #[test]
    fn restart_lift_rejects_wrong_tags() {
        assert!(restart_lift(&heaviside_hotz()).is_err());
        assert!(restart_lift(&square_to_hotz()).is_ok());
    }

    #[test]
    fn composed_lifts_stay_valid() {
        let sched = Schedule { junk: 4, wobble: Wobble::Alternating, ..Schedule::default() };
        let x = r("3/4");
        let input = make_synthetic(&SyntheticSpec::new(x.clone(), ReprTag::Hotz, sched)).unwrap();
        let once = restart_lift(&square_to_hotz()).unwrap();
        let twice = crate::machine::compose(&once, &once).unwrap();
        let out = run(&twice, &input, Budget::emits(40)).unwrap().emitted;
        let x4 = &x * &x * &x * &x;
        for (n, p) in out.iter().enumerate().skip(30) {
            assert!((p - &x4).abs() <= Rational::pow2(-(n as i64)));
        }
    }
}
