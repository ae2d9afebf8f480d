use std::fmt;

use super::StlError;

/// Closed integer time window `[lo, hi]` in steps, relative to the evaluation time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Interval {
    lo: usize,
    hi: usize,
}

impl Interval {
    pub fn new(lo: usize, hi: usize) -> Result<Self, StlError> {
        if lo > hi {
            return Err(StlError::InvalidInterval { pos: None, lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

/// STL abstract syntax tree.
///
/// Predicates are referenced by region label; a negated predicate is
/// `Not(Pred(..))`. Disjunction has no node of its own and is expanded by the
/// parser into `!(!a & !b)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    Pred(String),
    Not(Box<Formula>),
    /// Conjunction of two or more children.
    And(Vec<Formula>),
    Eventually(Interval, Box<Formula>),
    Always(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn pred(label: impl Into<String>) -> Self {
        Formula::Pred(label.into())
    }

    pub fn not(child: Formula) -> Self {
        Formula::Not(Box::new(child))
    }

    pub fn and(children: Vec<Formula>) -> Self {
        Formula::And(children)
    }

    pub fn eventually(interval: Interval, child: Formula) -> Self {
        Formula::Eventually(interval, Box::new(child))
    }

    pub fn always(interval: Interval, child: Formula) -> Self {
        Formula::Always(interval, Box::new(child))
    }

    pub fn until(interval: Interval, left: Formula, right: Formula) -> Self {
        Formula::Until(interval, Box::new(left), Box::new(right))
    }

    /// Number of steps past the evaluation time the formula may look at.
    pub fn horizon(&self) -> usize {
        match self {
            Formula::True | Formula::Pred(_) => 0,
            Formula::Not(c) => c.horizon(),
            Formula::And(cs) => cs.iter().map(Formula::horizon).max().unwrap_or(0),
            Formula::Eventually(i, c) | Formula::Always(i, c) => i.hi + c.horizon(),
            Formula::Until(i, l, r) => i.hi + l.horizon().max(r.horizon()),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::Pred(_) => 0,
            Formula::Not(c) | Formula::Eventually(_, c) | Formula::Always(_, c) => 1 + c.depth(),
            Formula::And(cs) => 1 + cs.iter().map(Formula::depth).max().unwrap_or(0),
            Formula::Until(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    /// Region labels in first-occurrence order, without duplicates.
    pub fn labels(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_labels(&mut out);
        out
    }

    fn collect_labels<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Formula::True => {}
            Formula::Pred(l) => {
                if !out.contains(&l.as_str()) {
                    out.push(l);
                }
            }
            Formula::Not(c) | Formula::Eventually(_, c) | Formula::Always(_, c) => {
                c.collect_labels(out)
            }
            Formula::And(cs) => cs.iter().for_each(|c| c.collect_labels(out)),
            Formula::Until(_, l, r) => {
                l.collect_labels(out);
                r.collect_labels(out);
            }
        }
    }

    /// Pushes negation inward until it only sits directly above predicates.
    ///
    /// `F`/`G` dualize, double negation cancels. Negations over `True`, a
    /// conjunction or an until have no normal form in this AST and are
    /// rejected.
    pub fn normalize(&self) -> Result<Formula, StlError> {
        match self {
            Formula::True | Formula::Pred(_) => Ok(self.clone()),
            Formula::And(cs) => Ok(Formula::And(
                cs.iter()
                    .map(Formula::normalize)
                    .collect::<Result<_, _>>()?,
            )),
            Formula::Eventually(i, c) => Ok(Formula::eventually(*i, c.normalize()?)),
            Formula::Always(i, c) => Ok(Formula::always(*i, c.normalize()?)),
            Formula::Until(i, l, r) => Ok(Formula::until(*i, l.normalize()?, r.normalize()?)),
            Formula::Not(c) => match c.as_ref() {
                Formula::Pred(_) => Ok(self.clone()),
                Formula::Not(inner) => inner.normalize(),
                Formula::Eventually(i, inner) => Ok(Formula::always(
                    *i,
                    Formula::not((**inner).clone()).normalize()?,
                )),
                Formula::Always(i, inner) => Ok(Formula::eventually(
                    *i,
                    Formula::not((**inner).clone()).normalize()?,
                )),
                other => Err(StlError::NotNormalizable(format!("!{}", Term(other)))),
            },
        }
    }

    /// True when the formula is in negation normal form as produced by [`Formula::normalize`].
    pub fn is_normalized(&self) -> bool {
        match self {
            Formula::True | Formula::Pred(_) => true,
            Formula::Not(c) => matches!(c.as_ref(), Formula::Pred(_)),
            Formula::And(cs) => cs.iter().all(Formula::is_normalized),
            Formula::Eventually(_, c) | Formula::Always(_, c) => c.is_normalized(),
            Formula::Until(_, l, r) => l.is_normalized() && r.is_normalized(),
        }
    }
}

/// Formats a formula as a single grammar `term`, parenthesizing conjunctions.
struct Term<'a>(&'a Formula);

impl fmt::Display for Term<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Formula::And(_) => write!(f, "({})", self.0),
            other => write!(f, "{other}"),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("True"),
            Formula::Pred(l) => f.write_str(l),
            Formula::Not(c) => write!(f, "!{}", Term(c)),
            Formula::And(cs) => {
                for (k, c) in cs.iter().enumerate() {
                    if k > 0 {
                        f.write_str(" & ")?;
                    }
                    write!(f, "{}", Term(c))?;
                }
                Ok(())
            }
            Formula::Eventually(i, c) => write!(f, "F{i}({c})"),
            Formula::Always(i, c) => write!(f, "G{i}({c})"),
            Formula::Until(i, l, r) => write!(f, "({l}) U{i} ({r})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: usize, b: usize) -> Interval {
        Interval::new(a, b).unwrap()
    }

    #[test]
    fn formats_basic_shapes() {
        assert_eq!(
            Formula::eventually(iv(0, 90), Formula::pred("A")).to_string(),
            "F[0,90](A)"
        );
        assert_eq!(Formula::True.to_string(), "True");
        let until = Formula::until(
            iv(0, 100),
            Formula::not(Formula::pred("D1")),
            Formula::pred("K1"),
        );
        assert_eq!(until.to_string(), "(!D1) U[0,100] (K1)");
    }

    #[test]
    fn nested_conjunction_keeps_parentheses() {
        let f = Formula::and(vec![
            Formula::and(vec![Formula::pred("a"), Formula::pred("b")]),
            Formula::pred("c"),
        ]);
        assert_eq!(f.to_string(), "(a & b) & c");
    }

    #[test]
    fn normalize_dualizes_temporal_operators() {
        let f = Formula::not(Formula::eventually(
            iv(1, 3),
            Formula::always(iv(0, 2), Formula::pred("A")),
        ));
        let n = f.normalize().unwrap();
        assert_eq!(
            n,
            Formula::always(
                iv(1, 3),
                Formula::eventually(iv(0, 2), Formula::not(Formula::pred("A")))
            )
        );
        assert!(n.is_normalized());
        assert!(Formula::not(Formula::True).normalize().is_err());
        assert!(
            Formula::not(Formula::and(vec![Formula::pred("a"), Formula::pred("b")]))
                .normalize()
                .is_err()
        );
    }

    #[test]
    fn horizon_sums_nested_windows() {
        let f = Formula::and(vec![
            Formula::eventually(
                iv(5, 20),
                Formula::eventually(iv(3, 10), Formula::pred("a")),
            ),
            Formula::always(iv(0, 90), Formula::not(Formula::pred("b"))),
        ]);
        assert_eq!(f.horizon(), 90);
        assert_eq!(f.labels(), vec!["a", "b"]);
    }

    #[test]
    fn interval_rejects_reversed_bounds() {
        assert!(matches!(
            Interval::new(5, 3),
            Err(StlError::InvalidInterval { lo: 5, hi: 3, .. })
        ));
    }
}
