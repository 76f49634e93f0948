use std::sync::Arc;

use rahier::hotz::{heaviside_hotz, restart_lift, square_to_hotz};
use rahier::lifting::{emitted, heaviside_lt, lift_pointwise, mlsc_enumerate, Square};
use rahier::machine::{compose, run, Budget};
use rahier::names::{make_synthetic, Name, ReprTag, Schedule, SyntheticSpec, Wobble};
use rahier::nondet::{nd_level_down, simulate, NondetBudget};
use rahier::weierstrass::{pulse_construct, RationalPolynomial, WeierLevel, WeierstrassName, weier_eval_prime};
use rahier::Rational;

fn r(s: &str) -> Rational {
    s.parse().unwrap()
}

#[test]
fn squaring_lifted_to_limit_names() {
    // Junk first, then exactly 1 from index 5.
    let input = Name::from_fn(ReprTag::Fast(1), |n| if n < 5 { Rational::from_int(7 - 3 * n as i64) } else { r("1") });
    let out = emitted(&lift_pointwise(Arc::new(Square)), &input, 20).unwrap();
    assert!(out[5..].iter().all(|p| *p == r("1")));
}

#[test]
fn heaviside_lt_cases() {
    let below_one = Name::from_fn(ReprTag::Lower(0), |n| Rational::one() - Rational::pow2(-(n as i64)));
    let out = emitted(&heaviside_lt(), &below_one, 10).unwrap();
    assert_eq!(out[0], r("0"));
    assert!(out[1..].iter().all(|p| *p == r("1")));
    let below_zero = Name::from_fn(ReprTag::Lower(0), |n| -Rational::pow2(-(n as i64)));
    assert!(emitted(&heaviside_lt(), &below_zero, 10).unwrap().iter().all(|p| p.is_zero()));
}

#[test]
fn enumerated_heaviside_pairs_stay_below_the_graph() {
    let name = mlsc_enumerate(&heaviside_lt()).unwrap();
    let mut saw_half = false;
    for k in 0..400 {
        let p = name.get(k).unwrap();
        let h = if p.a.is_positive() { r("1") } else { r("0") };
        assert!(p.c < h, "pair ({}, {})", p.a, p.c);
        saw_half |= p.a == r("1/2") && p.c > r("0");
    }
    assert!(saw_half);
}

#[test]
fn restart_lift_then_heaviside_on_hotz_names() {
    let x = r("3/5");
    let sched = Schedule { junk: 5, wobble: Wobble::Alternating, ..Schedule::default() };
    let input = make_synthetic(&SyntheticSpec::new(x, ReprTag::Hotz, sched)).unwrap();
    let t = compose(&restart_lift(&square_to_hotz()).unwrap(), &heaviside_hotz()).unwrap();
    let out = run(&t, &input, Budget::emits(40)).unwrap().emitted;
    // 9/25 > 2^-n from n = 2 on once the junk is behind.
    assert!(out[30..].iter().all(|p| *p == r("1")));
}

#[test]
fn level_down_then_evaluate_polynomial() {
    let x = r("1/4");
    let sched = Schedule { wobble: Wobble::Alternating, settle: Some(6), ..Schedule::default() };
    let input = make_synthetic(&SyntheticSpec::new(x.clone(), ReprTag::Fast(2), sched)).unwrap();
    let res = simulate(&nd_level_down(1), &input, &NondetBudget::new(5, 2000)).unwrap();
    assert!(!res.survivors.is_empty());
    let p = RationalPolynomial::new(vec![r("0"), r("0"), r("1")]);
    let eval = weier_eval_prime(&WeierstrassName::constant(WeierLevel::Limit, p)).unwrap();
    let limit = Name::finite(ReprTag::Fast(1), res.survivors[0].trace.emitted.clone());
    let out = run(&eval, &limit, Budget::emits(5)).unwrap().emitted;
    for (q, v) in res.survivors[0].trace.emitted.iter().zip(&out) {
        assert_eq!(*v, q * q);
    }
}

#[test]
fn pulse_values_by_hand() {
    // h(m) = m: the term on [2^-m, 2^(1-m)] peaks at 2^-m.
    let (f, t) = pulse_construct(Arc::new(|m| m), 8);
    for (x, want) in [("3/4", "1/2"), ("3/8", "1/4"), ("5/16", "1/8"), ("1/2", "0"), ("0", "0"), ("-1", "0"), ("2", "0")] {
        assert_eq!(f.value(&r(x)), r(want), "x={x}");
        let out = run(&t, &Name::constant(ReprTag::Fast(1), r(x)), Budget::emits(10)).unwrap().emitted;
        assert_eq!(out[9], r(want), "x={x}");
    }
}
