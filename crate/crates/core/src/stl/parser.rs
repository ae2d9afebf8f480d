//! Recursive-descent parser for the textual STL syntax.
//!
//! ```text
//! formula  := conj ("|" conj)*
//! conj     := term ("&" term)*
//! term     := "True" | ident | "!" term
//!           | "F" interval "(" formula ")" | "G" interval "(" formula ")"
//!           | "(" formula ")" [ "U" interval "(" formula ")" ]
//! interval := "[" int "," int "]"
//! ```
//!
//! `F`, `G` and `U` are operators only when followed by `[`; otherwise they
//! are ordinary region labels (so `G[0,5](G)` is well formed). Disjunction is
//! expanded as `!(!a & !b)`.

use super::formula::{Formula, Interval};
use super::StlError;

/// Parses the full grammar, including disjunction.
pub fn parse(text: &str) -> Result<Formula, StlError> {
    Parser::new(text, true).parse_all()
}

/// Parses the conjunctive fragment; `|` is a syntax error.
pub fn parse_conjunctive(text: &str) -> Result<Formula, StlError> {
    Parser::new(text, false).parse_all()
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    allow_or: bool,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, allow_or: bool) -> Self {
        Self {
            src: text.as_bytes(),
            pos: 0,
            allow_or,
        }
    }

    fn parse_all(mut self) -> Result<Formula, StlError> {
        let f = self.formula()?;
        self.skip_ws();
        if self.pos < self.src.len() {
            return Err(self.error(format!(
                "unexpected trailing input `{}`",
                self.rest_snippet()
            )));
        }
        Ok(f)
    }

    fn error(&self, msg: impl Into<String>) -> StlError {
        StlError::Syntax {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn rest_snippet(&self) -> String {
        let end = (self.pos + 12).min(self.src.len());
        String::from_utf8_lossy(&self.src[self.pos..end]).into_owned()
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), StlError> {
        match self.peek() {
            Some(got) if got == c => {
                self.pos += 1;
                Ok(())
            }
            Some(got) => {
                Err(self.error(format!("expected `{}`, found `{}`", c as char, got as char)))
            }
            None => Err(self.error(format!("expected `{}`, found end of input", c as char))),
        }
    }

    fn formula(&mut self) -> Result<Formula, StlError> {
        let first = self.conj()?;
        if self.peek() != Some(b'|') {
            return Ok(first);
        }
        if !self.allow_or {
            return Err(self.error("disjunction is not supported in decomposable formulas"));
        }
        let mut negated = vec![Formula::not(first)];
        while self.peek() == Some(b'|') {
            self.pos += 1;
            negated.push(Formula::not(self.conj()?));
        }
        Ok(Formula::not(Formula::And(negated)))
    }

    fn conj(&mut self) -> Result<Formula, StlError> {
        let first = self.term()?;
        if self.peek() != Some(b'&') {
            return Ok(first);
        }
        let mut children = vec![first];
        while self.peek() == Some(b'&') {
            self.pos += 1;
            children.push(self.term()?);
        }
        Ok(Formula::And(children))
    }

    fn term(&mut self) -> Result<Formula, StlError> {
        match self.peek() {
            None => Err(self.error("expected a formula, found end of input")),
            Some(b'!') => {
                self.pos += 1;
                Ok(Formula::not(self.term()?))
            }
            Some(b'(') => {
                self.pos += 1;
                let left = self.formula()?;
                self.expect(b')')?;
                if self.peek() == Some(b'U') && self.next_non_ws_after(self.pos + 1) == Some(b'[') {
                    self.pos += 1;
                    let interval = self.interval()?;
                    self.expect(b'(')?;
                    let right = self.formula()?;
                    self.expect(b')')?;
                    return Ok(Formula::until(interval, left, right));
                }
                Ok(left)
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                let ident = self.ident();
                if self.next_non_ws_after(self.pos) == Some(b'[') {
                    return match ident.as_str() {
                        "F" => {
                            let i = self.interval()?;
                            Ok(Formula::eventually(i, self.parenthesized()?))
                        }
                        "G" => {
                            let i = self.interval()?;
                            Ok(Formula::always(i, self.parenthesized()?))
                        }
                        _ => Err(StlError::UnknownOperator {
                            pos: start,
                            op: ident,
                        }),
                    };
                }
                if ident == "True" {
                    Ok(Formula::True)
                } else {
                    Ok(Formula::Pred(ident))
                }
            }
            Some(c) => Err(self.error(format!("unexpected character `{}`", c as char))),
        }
    }

    fn parenthesized(&mut self) -> Result<Formula, StlError> {
        self.expect(b'(')?;
        let f = self.formula()?;
        self.expect(b')')?;
        Ok(f)
    }

    fn next_non_ws_after(&self, mut at: usize) -> Option<u8> {
        while at < self.src.len() && self.src[at].is_ascii_whitespace() {
            at += 1;
        }
        self.src.get(at).copied()
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn interval(&mut self) -> Result<Interval, StlError> {
        self.expect(b'[')?;
        let start = self.pos;
        let lo = self.int()?;
        self.expect(b',')?;
        let hi = self.int()?;
        self.expect(b']')?;
        Interval::new(lo, hi).map_err(|_| StlError::InvalidInterval {
            pos: Some(start),
            lo,
            hi,
        })
    }

    fn int(&mut self) -> Result<usize, StlError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected a non-negative integer"));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| StlError::Syntax {
                pos: start,
                msg: "integer out of range".into(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: usize, b: usize) -> Interval {
        Interval::new(a, b).unwrap()
    }

    #[test]
    fn single_eventually() {
        assert_eq!(
            parse("F[0,90](A)").unwrap(),
            Formula::eventually(iv(0, 90), Formula::pred("A"))
        );
    }

    #[test]
    fn nested_decomposition_example() {
        let f = parse("F[5,20](mu1 & G[2,6](mu2) & F[3,10](mu3)) & G[0,90](!mu0)").unwrap();
        let expected = Formula::and(vec![
            Formula::eventually(
                iv(5, 20),
                Formula::and(vec![
                    Formula::pred("mu1"),
                    Formula::always(iv(2, 6), Formula::pred("mu2")),
                    Formula::eventually(iv(3, 10), Formula::pred("mu3")),
                ]),
            ),
            Formula::always(iv(0, 90), Formula::not(Formula::pred("mu0"))),
        ]);
        assert_eq!(f, expected);
    }

    #[test]
    fn reversed_interval_is_rejected_with_position() {
        match parse("G[5,3](A)") {
            Err(StlError::InvalidInterval {
                pos: Some(2),
                lo: 5,
                hi: 3,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn operator_letters_double_as_labels() {
        let f = parse("F[80,90](G[0,5](G)) & U & F").unwrap();
        assert_eq!(
            f,
            Formula::and(vec![
                Formula::eventually(iv(80, 90), Formula::always(iv(0, 5), Formula::pred("G"))),
                Formula::pred("U"),
                Formula::pred("F"),
            ])
        );
    }

    #[test]
    fn until_and_whitespace() {
        let f = parse("  ( ! D1 )U [ 0 , 100 ]( K1 ) ").unwrap();
        assert_eq!(
            f,
            Formula::until(
                iv(0, 100),
                Formula::not(Formula::pred("D1")),
                Formula::pred("K1")
            )
        );
    }

    #[test]
    fn unknown_operator_and_syntax_errors() {
        assert!(matches!(
            parse("X[0,5](A)"),
            Err(StlError::UnknownOperator { pos: 0, .. })
        ));
        assert!(matches!(parse("F[0,5](A"), Err(StlError::Syntax { .. })));
        assert!(matches!(parse("A &"), Err(StlError::Syntax { .. })));
        assert!(matches!(parse("F[0,](A)"), Err(StlError::Syntax { .. })));
        assert!(matches!(parse("A B"), Err(StlError::Syntax { pos: 2, .. })));
    }

    #[test]
    fn disjunction_expands_via_de_morgan() {
        let f = parse("A | B").unwrap();
        assert_eq!(
            f,
            Formula::not(Formula::and(vec![
                Formula::not(Formula::pred("A")),
                Formula::not(Formula::pred("B"))
            ]))
        );
        assert!(matches!(
            parse_conjunctive("A | B"),
            Err(StlError::Syntax { pos: 2, .. })
        ));
    }
}
