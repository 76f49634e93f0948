use proptest::prelude::*;

use rahier::formats::{
    parse_lsc_lines, parse_mlsc_lines, parse_name_file, parse_polynomial, parse_polynomial_lines, parse_rational_token,
    write_lsc_lines, write_mlsc_lines, write_name_file, FormatError, NameHeader,
};
use rahier::lifting::{LscTriple, MlscPair};
use rahier::machine::{parse_wire_line, WireLine};
use rahier::names::ReprTag;
use rahier::weierstrass::RationalPolynomial;
use rahier::Rational;

fn rational() -> impl Strategy<Value = Rational> {
    (any::<i64>(), 1i64..=i64::MAX).prop_map(|(p, q)| Rational::new(p, q))
}

fn tag() -> impl Strategy<Value = ReprTag> {
    prop_oneof![
        (0u32..4).prop_map(ReprTag::Fast),
        (0u32..3).prop_map(ReprTag::Lower),
        (0u32..3).prop_map(ReprTag::Upper),
        Just(ReprTag::Hotz),
        Just(ReprTag::Binary),
        Just(ReprTag::Liminf),
    ]
}

proptest! {
    #[test]
    fn rational_display_parses_back(q in rational()) {
        prop_assert_eq!(q.to_string().parse::<Rational>().unwrap(), q.clone());
        prop_assert_eq!(parse_rational_token(&serde_json::to_string(&q).unwrap()).unwrap(), q);
    }

    #[test]
    fn name_files_round_trip(t in tag(), values in prop::collection::vec(rational(), 0..20)) {
        let header = NameHeader::new(t);
        let text = write_name_file(&header, &values);
        let back = parse_name_file(&text).unwrap();
        prop_assert_eq!(back.header, header);
        prop_assert_eq!(back.values, values);
    }

    #[test]
    fn lsc_and_mlsc_lines_round_trip(v in prop::collection::vec((rational(), rational(), rational()), 0..10)) {
        let triples: Vec<LscTriple> = v.iter().cloned().map(|(a, b, c)| LscTriple { a, b, c }).collect();
        prop_assert_eq!(parse_lsc_lines(&write_lsc_lines(&triples)).unwrap(), triples);
        let pairs: Vec<MlscPair> = v.into_iter().map(|(a, _, c)| MlscPair { a, c }).collect();
        prop_assert_eq!(parse_mlsc_lines(&write_mlsc_lines(&pairs)).unwrap(), pairs);
    }

    #[test]
    fn polynomials_round_trip(coeffs in prop::collection::vec(rational(), 0..8)) {
        let p = RationalPolynomial::new(coeffs);
        let text = serde_json::to_string(&p).unwrap();
        prop_assert_eq!(parse_polynomial(&text).unwrap(), p.clone());
        let lines = format!("{text}\n{text}\n");
        prop_assert_eq!(parse_polynomial_lines(&lines).unwrap(), vec![p.clone(), p]);
    }

    #[test]
    fn parsers_never_panic(s in "\\PC{0,40}") {
        let _ = s.parse::<Rational>();
        let _ = parse_name_file(&s);
        let _ = parse_lsc_lines(&s);
        let _ = parse_mlsc_lines(&s);
        let _ = parse_polynomial(&s);
        let _ = parse_wire_line(&s);
    }
}

#[test]
fn errors_carry_line_numbers() {
    assert_eq!(parse_name_file(""), Err(FormatError::Empty));
    assert!(matches!(parse_name_file("{\"tag\":\"NOPE\"}\n"), Err(FormatError::Header(_))));
    let text = "{\"tag\":\"FAST\",\"level\":0}\n\"1/2\"\n\n1/0\n";
    assert!(matches!(parse_name_file(text), Err(FormatError::Line { line: 4, .. })));
    assert!(matches!(parse_lsc_lines("{\"a\":\"0\",\"b\":\"1\"}"), Err(FormatError::Line { line: 1, .. })));
}

#[test]
fn wire_lines() {
    assert_eq!(parse_wire_line("READ").unwrap(), WireLine::Read);
    assert_eq!(parse_wire_line("EMIT -3/6").unwrap(), WireLine::Emit(Rational::new(-1, 2)));
    assert!(parse_wire_line("EMIT").is_err());
    assert!(parse_wire_line("HELLO").is_err());
}
