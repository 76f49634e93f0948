//! Text formats: name files, LSC/MLSC enumerations, polynomial files.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exactnum::Rational;
use crate::lifting::{LscTriple, MlscPair};
use crate::names::ReprTag;
use crate::weierstrass::RationalPolynomial;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("empty file: a header line is required")]
    Empty,
    #[error("line 1: bad header: {0}")]
    Header(String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
}

/// First line of a name file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NameHeader {
    #[serde(flatten)]
    pub tag: ReprTag,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub params: serde_json::Value,
}

impl NameHeader {
    pub fn new(tag: ReprTag) -> Self {
        NameHeader { tag, params: serde_json::Value::Null }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NameFile {
    pub header: NameHeader,
    pub values: Vec<Rational>,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty())
}

/// A rational as a JSON string `"p/q"` or bare `p/q`.
pub fn parse_rational_token(s: &str) -> Result<Rational, String> {
    let s = s.trim();
    let raw = if s.starts_with('"') {
        serde_json::from_str::<String>(s).map_err(|e| e.to_string())?
    } else {
        s.to_string()
    };
    raw.parse::<Rational>().map_err(|e| format!("{raw:?}: {e}"))
}

pub fn parse_name_file(text: &str) -> Result<NameFile, FormatError> {
    let mut lines = content_lines(text);
    let (_, head) = lines.next().ok_or(FormatError::Empty)?;
    let header: NameHeader = serde_json::from_str(head).map_err(|e| FormatError::Header(e.to_string()))?;
    let values = lines
        .map(|(line, l)| parse_rational_token(l).map_err(|message| FormatError::Line { line, message }))
        .collect::<Result<_, _>>()?;
    Ok(NameFile { header, values })
}

pub fn write_name_file(header: &NameHeader, values: &[Rational]) -> String {
    let mut out = serde_json::to_string(header).expect("header serializes");
    out.push('\n');
    for v in values {
        out.push_str(&serde_json::to_string(v).expect("rational serializes"));
        out.push('\n');
    }
    out
}

fn parse_json_lines<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, FormatError> {
    content_lines(text)
        .map(|(line, l)| serde_json::from_str(l).map_err(|e| FormatError::Line { line, message: e.to_string() }))
        .collect()
}

fn write_json_lines<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|t| serde_json::to_string(t).expect("serializes") + "\n").collect()
}

/// One `{"a": .., "b": .., "c": ..}` object per line.
pub fn parse_lsc_lines(text: &str) -> Result<Vec<LscTriple>, FormatError> {
    parse_json_lines(text)
}

pub fn write_lsc_lines(items: &[LscTriple]) -> String {
    write_json_lines(items)
}

/// One `{"a": .., "c": ..}` object per line.
pub fn parse_mlsc_lines(text: &str) -> Result<Vec<MlscPair>, FormatError> {
    parse_json_lines(text)
}

pub fn write_mlsc_lines(items: &[MlscPair]) -> String {
    write_json_lines(items)
}

/// JSON list of coefficient strings, lowest degree first.
pub fn parse_polynomial(text: &str) -> Result<RationalPolynomial, FormatError> {
    serde_json::from_str(text.trim()).map_err(|e| FormatError::Line { line: 1, message: e.to_string() })
}

/// One polynomial per line.
pub fn parse_polynomial_lines(text: &str) -> Result<Vec<RationalPolynomial>, FormatError> {
    parse_json_lines(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    #[test]
    fn name_file_round_trip() {
        let text = "{\"tag\":\"FAST\",\"level\":0,\"params\":{\"x\":\"1/3\"}}\n\"1/3\"\n\n-1/2\n";
        let f = parse_name_file(text).unwrap();
        assert_eq!(f.header.tag, ReprTag::Fast(0));
        assert_eq!(f.values, vec![r("1/3"), r("-1/2")]);
        let out = write_name_file(&f.header, &f.values);
        assert_eq!(parse_name_file(&out).unwrap(), f);
        let plain = write_name_file(&NameHeader::new(ReprTag::Hotz), &[r("2")]);
        assert_eq!(plain, "{\"tag\":\"HOTZ\"}\n\"2/1\"\n");
    }

    #[test]
    fn name_file_errors() {
        assert_eq!(parse_name_file(""), Err(FormatError::Empty));
        assert!(matches!(parse_name_file("{\"tag\":\"NOPE\"}"), Err(FormatError::Header(_))));
        assert!(matches!(
            parse_name_file("{\"tag\":\"HOTZ\"}\n1/2\n1/0\n"),
            Err(FormatError::Line { line: 3, .. })
        ));
    }

    #[test]
    fn enumeration_lines() {
        let t = vec![LscTriple { a: r("0"), b: r("1/2"), c: r("-1") }];
        let s = write_lsc_lines(&t);
        assert_eq!(s, "{\"a\":\"0/1\",\"b\":\"1/2\",\"c\":\"-1/1\"}\n");
        assert_eq!(parse_lsc_lines(&s).unwrap(), t);
        let p = parse_mlsc_lines("{\"a\":\"1\",\"c\":\"0\"}\n").unwrap();
        assert_eq!(p, vec![MlscPair { a: r("1"), c: r("0") }]);
        assert!(parse_mlsc_lines("{\"a\":\"1\"}").is_err());
    }

    #[test]
    fn polynomials() {
        let p = parse_polynomial("[\"0\", \"-1\", \"1\"]").unwrap();
        assert_eq!(p.eval(&r("1/2")), r("-1/4"));
        assert!(parse_polynomial("[1, 2]").is_err());
    }
}
