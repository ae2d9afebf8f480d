//! Flattening of STL formulas into timed subgoals and invariant constraints.
//!
//! Every `F[a,b]` or `U[a,b]` whose operand mentions a predicate introduces a
//! time variable with domain `[a,b]`; start and end times of the resulting
//! tasks are affine sums of a constant and some of those variables. A
//! [`TimeAssignment`] grounds them into a [`GroundedPlan`].

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stl::Formula;

/// Retry budget for rejection sampling of feasible assignments.
pub const MAX_SAMPLE_TRIES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecomposeError {
    #[error("unsupported formula structure: {0}")]
    Unsupported(String),
    #[error("assignment has {got} values but the task set declares {expected} time variables")]
    ArityMismatch { expected: usize, got: usize },
    #[error("time variable t{var} = {value} outside its domain [{lo},{hi}]")]
    OutOfDomain {
        var: usize,
        value: usize,
        lo: usize,
        hi: usize,
    },
    #[error("infeasible assignment: {0}")]
    Infeasible(String),
    #[error("no feasible time assignment found in {0} draws")]
    NoFeasibleAssignment(usize),
}

/// `offset + sum of the listed variables`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeExpr {
    pub offset: usize,
    /// Variable ids, sorted and distinct.
    pub vars: Vec<usize>,
}

impl TimeExpr {
    pub fn constant(offset: usize) -> Self {
        Self {
            offset,
            vars: Vec::new(),
        }
    }

    pub fn new(offset: usize, mut vars: Vec<usize>) -> Self {
        vars.sort_unstable();
        vars.dedup();
        Self { offset, vars }
    }

    pub fn shifted(&self, by: usize) -> Self {
        Self {
            offset: self.offset + by,
            vars: self.vars.clone(),
        }
    }

    pub fn with_var(&self, var: usize) -> Self {
        let mut vars = self.vars.clone();
        vars.push(var);
        Self::new(self.offset, vars)
    }

    pub fn is_constant(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn eval(&self, a: &TimeAssignment) -> usize {
        self.offset + self.vars.iter().map(|&v| a.0[v]).sum::<usize>()
    }
}

impl fmt::Display for TimeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.vars.iter().map(|v| format!("t{v}")).collect();
        if self.offset > 0 || parts.is_empty() {
            parts.push(self.offset.to_string());
        }
        f.write_str(&parts.join("+"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeVariable {
    pub id: usize,
    pub lo: usize,
    pub hi: usize,
}

impl TimeVariable {
    pub fn span(&self) -> usize {
        self.hi - self.lo
    }

    pub fn contains(&self, v: usize) -> bool {
        (self.lo..=self.hi).contains(&v)
    }

    pub fn midpoint(&self) -> usize {
        self.lo + self.span() / 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubgoalKind {
    Reach,
    Stay,
}

impl fmt::Display for SubgoalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubgoalKind::Reach => "Reach",
            SubgoalKind::Stay => "Stay",
        })
    }
}

/// Reach or stay inside region `label` over `[start, end]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Subgoal {
    pub label: String,
    pub kind: SubgoalKind,
    pub start: TimeExpr,
    pub end: TimeExpr,
}

/// Stay outside region `label` over `[start, end]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InvariantConstraint {
    pub label: String,
    pub start: TimeExpr,
    pub end: TimeExpr,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSet {
    pub subgoals: Vec<Subgoal>,
    pub invariants: Vec<InvariantConstraint>,
    pub variables: Vec<TimeVariable>,
}

/// Concrete value per time variable, indexed by variable id.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeAssignment(pub Vec<usize>);

impl TimeAssignment {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for TimeAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// A task with concrete integer window.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroundedTask {
    pub label: String,
    pub kind: SubgoalKind,
    pub start: usize,
    pub end: usize,
    /// Position of the task in the task set it came from.
    pub source: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroundedPlan {
    /// Sorted by start time; ties keep decomposition order.
    pub subgoals: Vec<GroundedTask>,
    /// In decomposition order.
    pub invariants: Vec<GroundedTask>,
    pub assignment: TimeAssignment,
}

impl GroundedPlan {
    pub fn num_subgoals(&self) -> usize {
        self.subgoals.len()
    }

    pub fn num_invariants(&self) -> usize {
        self.invariants.len()
    }
}

/// Top-down flattening of a conjunctive formula into tasks.
pub fn decompose(f: &Formula) -> Result<TaskSet, DecomposeError> {
    let normalized = f
        .normalize()
        .map_err(|e| DecomposeError::Unsupported(e.to_string()))?;
    let mut b = Builder::default();
    b.instant(&normalized, &TimeExpr::constant(0))?;
    Ok(TaskSet {
        subgoals: b.subgoals,
        invariants: b.invariants,
        variables: b.variables,
    })
}

#[derive(Default)]
struct Builder {
    subgoals: Vec<Subgoal>,
    invariants: Vec<InvariantConstraint>,
    variables: Vec<TimeVariable>,
}

fn has_predicate(f: &Formula) -> bool {
    !f.labels().is_empty()
}

impl Builder {
    fn fresh(&mut self, lo: usize, hi: usize) -> usize {
        let id = self.variables.len();
        self.variables.push(TimeVariable { id, lo, hi });
        id
    }

    fn literal(
        &mut self,
        f: &Formula,
        start: &TimeExpr,
        end: &TimeExpr,
    ) -> Result<bool, DecomposeError> {
        match f {
            Formula::Pred(label) => {
                let kind = if start == end {
                    SubgoalKind::Reach
                } else {
                    SubgoalKind::Stay
                };
                self.subgoals.push(Subgoal {
                    label: label.clone(),
                    kind,
                    start: start.clone(),
                    end: end.clone(),
                });
                Ok(true)
            }
            Formula::Not(inner) => match inner.as_ref() {
                Formula::Pred(label) => {
                    self.invariants.push(InvariantConstraint {
                        label: label.clone(),
                        start: start.clone(),
                        end: end.clone(),
                    });
                    Ok(true)
                }
                other => Err(DecomposeError::Unsupported(format!(
                    "negation over `{other}`"
                ))),
            },
            _ => Ok(false),
        }
    }

    /// `f` must hold at the single instant `at`.
    fn instant(&mut self, f: &Formula, at: &TimeExpr) -> Result<(), DecomposeError> {
        if self.literal(f, at, at)? {
            return Ok(());
        }
        match f {
            Formula::True => Ok(()),
            Formula::And(cs) => cs.iter().try_for_each(|c| self.instant(c, at)),
            Formula::Eventually(i, c) => {
                if !has_predicate(c) {
                    return Ok(());
                }
                let v = self.fresh(i.lo(), i.hi());
                self.instant(c, &at.with_var(v))
            }
            Formula::Always(i, c) => self.window(c, &at.shifted(i.lo()), &at.shifted(i.hi())),
            Formula::Until(i, l, r) => {
                if !has_predicate(l) && !has_predicate(r) {
                    return Ok(());
                }
                let v = self.fresh(i.lo(), i.hi());
                let reach = at.with_var(v);
                self.instant(r, &reach)?;
                self.window(l, at, &reach)
            }
            other => Err(DecomposeError::Unsupported(format!("`{other}`"))),
        }
    }

    /// `f` must hold at every instant of `[start, end]`.
    fn window(
        &mut self,
        f: &Formula,
        start: &TimeExpr,
        end: &TimeExpr,
    ) -> Result<(), DecomposeError> {
        if self.literal(f, start, end)? {
            return Ok(());
        }
        match f {
            Formula::True => Ok(()),
            Formula::And(cs) => cs.iter().try_for_each(|c| self.window(c, start, end)),
            Formula::Always(i, c) => self.window(c, &start.shifted(i.lo()), &end.shifted(i.hi())),
            Formula::Eventually(..) | Formula::Until(..) if !has_predicate(f) => Ok(()),
            Formula::Eventually(..) | Formula::Until(..) => Err(DecomposeError::Unsupported(
                format!("temporal choice `{f}` nested under an always window (G(F..) structure)"),
            )),
            other => Err(DecomposeError::Unsupported(format!("`{other}`"))),
        }
    }
}

impl TaskSet {
    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn domains(&self) -> &[TimeVariable] {
        &self.variables
    }

    pub fn check_assignment(&self, a: &TimeAssignment) -> Result<(), DecomposeError> {
        if a.len() != self.variables.len() {
            return Err(DecomposeError::ArityMismatch {
                expected: self.variables.len(),
                got: a.len(),
            });
        }
        for (v, &value) in self.variables.iter().zip(a.values()) {
            if !v.contains(value) {
                return Err(DecomposeError::OutOfDomain {
                    var: v.id,
                    value,
                    lo: v.lo,
                    hi: v.hi,
                });
            }
        }
        Ok(())
    }

    /// Evaluates every window under `a` and sorts the subgoals by start time.
    pub fn ground(
        &self,
        a: &TimeAssignment,
        horizon: usize,
    ) -> Result<GroundedPlan, DecomposeError> {
        self.check_assignment(a)?;
        let window = |what: &str, k: usize, label: &str, s: &TimeExpr, e: &TimeExpr| {
            let (start, end) = (s.eval(a), e.eval(a));
            if end < start {
                return Err(DecomposeError::Infeasible(format!(
                    "{what} {k} ({label}) ends at {end} before it starts at {start}"
                )));
            }
            if end > horizon {
                return Err(DecomposeError::Infeasible(format!(
                    "{what} {k} ({label}) window [{start},{end}] exceeds the horizon {horizon}"
                )));
            }
            Ok((start, end))
        };
        let mut subgoals = self
            .subgoals
            .iter()
            .enumerate()
            .map(|(k, g)| {
                let (start, end) = window("subgoal", k, &g.label, &g.start, &g.end)?;
                Ok(GroundedTask {
                    label: g.label.clone(),
                    kind: g.kind,
                    start,
                    end,
                    source: k,
                })
            })
            .collect::<Result<Vec<_>, DecomposeError>>()?;
        subgoals.sort_by_key(|g| g.start);
        let invariants = self
            .invariants
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let (start, end) = window("invariant", k, &c.label, &c.start, &c.end)?;
                Ok(GroundedTask {
                    label: c.label.clone(),
                    kind: SubgoalKind::Stay,
                    start,
                    end,
                    source: k,
                })
            })
            .collect::<Result<Vec<_>, DecomposeError>>()?;
        Ok(GroundedPlan {
            subgoals,
            invariants,
            assignment: a.clone(),
        })
    }

    pub fn is_feasible(&self, a: &TimeAssignment, horizon: usize) -> bool {
        self.ground(a, horizon).is_ok()
    }

    /// Independent uniform draws per variable, resampled until the
    /// assignment grounds within `horizon`.
    pub fn sample_uniform<R: Rng + ?Sized>(
        &self,
        horizon: usize,
        rng: &mut R,
    ) -> Result<TimeAssignment, DecomposeError> {
        for _ in 0..MAX_SAMPLE_TRIES {
            let a = TimeAssignment(
                self.variables
                    .iter()
                    .map(|v| rng.random_range(v.lo..=v.hi))
                    .collect(),
            );
            if self.is_feasible(&a, horizon) {
                return Ok(a);
            }
        }
        Err(DecomposeError::NoFeasibleAssignment(MAX_SAMPLE_TRIES))
    }

    /// Assignment with every variable at its domain midpoint.
    pub fn midpoint(&self) -> TimeAssignment {
        TimeAssignment(self.variables.iter().map(TimeVariable::midpoint).collect())
    }

    /// Aligned text table: task, predicate, start, end, then variable domains.
    pub fn table(&self) -> String {
        let rows = self.rows();
        let header = ["task", "predicate", "start", "end"];
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let fmt_row = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join(" | ")
                .trim_end()
                .to_string()
        };
        let mut out = String::new();
        out.push_str(&fmt_row(&header.map(String::from)));
        out.push('\n');
        out.push_str(
            &widths
                .iter()
                .map(|w| "-".repeat(*w))
                .collect::<Vec<_>>()
                .join("-+-"),
        );
        out.push('\n');
        for r in &rows {
            out.push_str(&fmt_row(r));
            out.push('\n');
        }
        if self.variables.is_empty() {
            out.push_str("time variables: none\n");
        } else {
            let doms: Vec<String> = self
                .variables
                .iter()
                .map(|v| format!("t{} in [{},{}]", v.id, v.lo, v.hi))
                .collect();
            out.push_str(&format!("time variables: {}\n", doms.join(", ")));
        }
        out
    }

    /// CSV with header `task,predicate,start,end`; variable domains follow as
    /// `domain,t<id>,lo,hi` rows.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("task,predicate,start,end\n");
        for r in self.rows() {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        for v in &self.variables {
            out.push_str(&format!("domain,t{},{},{}\n", v.id, v.lo, v.hi));
        }
        out
    }

    fn rows(&self) -> Vec<[String; 4]> {
        let mut rows = Vec::new();
        for (k, g) in self.subgoals.iter().enumerate() {
            rows.push([
                format!("Subgoal {} ({})", k + 1, g.kind),
                g.label.clone(),
                g.start.to_string(),
                g.end.to_string(),
            ]);
        }
        for (k, c) in self.invariants.iter().enumerate() {
            rows.push([
                format!("Invariant {}", k + 1),
                format!("!{}", c.label),
                c.start.to_string(),
                c.end.to_string(),
            ]);
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::stl::parse;

    fn fig2() -> TaskSet {
        decompose(&parse("F[5,20](mu1 & G[2,6](mu2) & F[3,10](mu3)) & G[0,90](!mu0)").unwrap())
            .unwrap()
    }

    #[test]
    fn nested_example_structure() {
        let ts = fig2();
        let tau = TimeExpr::new(0, vec![0]);
        assert_eq!(
            ts.subgoals,
            vec![
                Subgoal {
                    label: "mu1".into(),
                    kind: SubgoalKind::Reach,
                    start: tau.clone(),
                    end: tau.clone()
                },
                Subgoal {
                    label: "mu2".into(),
                    kind: SubgoalKind::Stay,
                    start: tau.shifted(2),
                    end: tau.shifted(6)
                },
                Subgoal {
                    label: "mu3".into(),
                    kind: SubgoalKind::Reach,
                    start: TimeExpr::new(0, vec![0, 1]),
                    end: TimeExpr::new(0, vec![0, 1])
                },
            ]
        );
        assert_eq!(
            ts.invariants,
            vec![InvariantConstraint {
                label: "mu0".into(),
                start: TimeExpr::constant(0),
                end: TimeExpr::constant(90)
            }]
        );
        assert_eq!(
            ts.variables,
            vec![
                TimeVariable {
                    id: 0,
                    lo: 5,
                    hi: 20
                },
                TimeVariable {
                    id: 1,
                    lo: 3,
                    hi: 10
                }
            ]
        );
    }

    #[test]
    fn always_over_predicate_is_a_fixed_stay() {
        let ts = decompose(&parse("G[10,20](A)").unwrap()).unwrap();
        assert_eq!(ts.variables.len(), 0);
        assert_eq!(ts.subgoals[0].kind, SubgoalKind::Stay);
        assert_eq!(
            (ts.subgoals[0].start.offset, ts.subgoals[0].end.offset),
            (10, 20)
        );
    }

    #[test]
    fn until_yields_reach_and_guarded_window() {
        let ts = decompose(&parse("(!D1) U[0,100] (K1)").unwrap()).unwrap();
        let tau = TimeExpr::new(0, vec![0]);
        assert_eq!(
            ts.subgoals,
            vec![Subgoal {
                label: "K1".into(),
                kind: SubgoalKind::Reach,
                start: tau.clone(),
                end: tau.clone()
            }]
        );
        assert_eq!(
            ts.invariants,
            vec![InvariantConstraint {
                label: "D1".into(),
                start: TimeExpr::constant(0),
                end: tau
            }]
        );
        assert_eq!(
            ts.variables,
            vec![TimeVariable {
                id: 0,
                lo: 0,
                hi: 100
            }]
        );
    }

    #[test]
    fn eventually_over_stay_shifts_window() {
        let ts = decompose(&parse("F[0,95](G[0,5](A))").unwrap()).unwrap();
        let g = &ts.subgoals[0];
        assert_eq!(g.kind, SubgoalKind::Stay);
        assert_eq!(
            (g.start.to_string(), g.end.to_string()),
            ("t0".to_string(), "t0+5".to_string())
        );
    }

    #[test]
    fn unsupported_structures() {
        for text in [
            "G[0,10](F[0,5](A))",
            "A | B",
            "!(A & B)",
            "(F[0,2](A)) U[0,5] (B)",
            "!True",
        ] {
            assert!(
                matches!(
                    decompose(&parse(text).unwrap()),
                    Err(DecomposeError::Unsupported(_))
                ),
                "{text}"
            );
        }
    }

    #[test]
    fn ground_evaluates_and_sorts() {
        let plan = fig2().ground(&TimeAssignment(vec![10, 5]), 100).unwrap();
        let windows: Vec<(usize, usize, usize)> = plan
            .subgoals
            .iter()
            .map(|g| (g.source, g.start, g.end))
            .collect();
        assert_eq!(windows, vec![(0, 10, 10), (1, 12, 16), (2, 15, 15)]);
        assert_eq!((plan.invariants[0].start, plan.invariants[0].end), (0, 90));
    }

    #[test]
    fn ground_sorts_out_of_order_subgoals_stably() {
        let ts = decompose(&parse("F[0,50](B) & F[0,50](A) & G[3,4](C)").unwrap()).unwrap();
        let plan = ts.ground(&TimeAssignment(vec![20, 3]), 100).unwrap();
        let order: Vec<&str> = plan.subgoals.iter().map(|g| g.label.as_str()).collect();
        assert_eq!(order, vec!["A", "C", "B"]);
    }

    #[test]
    fn ground_rejects_domain_and_horizon_violations() {
        let ts = fig2();
        assert!(matches!(
            ts.ground(&TimeAssignment(vec![4, 5]), 100),
            Err(DecomposeError::OutOfDomain { var: 0, .. })
        ));
        assert!(matches!(
            ts.ground(&TimeAssignment(vec![10]), 100),
            Err(DecomposeError::ArityMismatch { .. })
        ));
        let late = decompose(&parse("F[0,200](A)").unwrap()).unwrap();
        assert!(matches!(
            late.ground(&TimeAssignment(vec![105]), 100),
            Err(DecomposeError::Infeasible(_))
        ));
    }

    #[test]
    fn sample_uniform_trivial_domains() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ts = decompose(&parse("G[0,5](!A)").unwrap()).unwrap();
        assert_eq!(
            ts.sample_uniform(10, &mut rng).unwrap(),
            TimeAssignment::empty()
        );
        let single = decompose(&parse("F[5,5](A)").unwrap()).unwrap();
        for _ in 0..20 {
            assert_eq!(
                single.sample_uniform(10, &mut rng).unwrap(),
                TimeAssignment(vec![5])
            );
        }
        let impossible = decompose(&parse("F[50,60](A)").unwrap()).unwrap();
        assert!(matches!(
            impossible.sample_uniform(10, &mut rng),
            Err(DecomposeError::NoFeasibleAssignment(_))
        ));
    }

    #[test]
    fn table_lists_tasks_and_domains() {
        let t = fig2().table();
        assert!(t.lines().any(|l| l.starts_with("Subgoal 2 (Stay)  | mu2 ")));
        assert!(t.contains("t0+2"));
        assert!(t.contains("t0 in [5,20], t1 in [3,10]"));
        let csv = fig2().table_csv();
        assert!(csv.contains("Subgoal 3 (Reach),mu3,t0+t1,t0+t1"));
        assert!(csv.contains("Invariant 1,!mu0,0,90"));
    }
}
