//! Quantitative (robustness) semantics over discrete-time trajectories.
//!
//! Temporal windows `[t+a, t+b]` are clipped to `[0, T]`. A window that is
//! empty after clipping (`t + a > T`) leaves the value undefined, and asking
//! for an undefined value is an error.

use super::formula::Formula;
use super::region::Predicates;
use super::trajectory::Trajectory;
use super::StlError;

/// Robustness `rho(sigma, t, f)`.
pub fn robustness<P: Predicates + ?Sized>(
    traj: &Trajectory,
    t: usize,
    f: &Formula,
    preds: &P,
) -> Result<f64, StlError> {
    if t > traj.last_step() {
        return Err(StlError::TimeOutOfRange {
            t,
            last: traj.last_step(),
        });
    }
    robustness_signal(traj, f, preds)?[t].ok_or(StlError::EmptyWindow {
        t,
        horizon: traj.last_step(),
    })
}

/// `sigma |= f`, i.e. robustness at time 0 is non-negative.
pub fn satisfies<P: Predicates + ?Sized>(
    traj: &Trajectory,
    f: &Formula,
    preds: &P,
) -> Result<bool, StlError> {
    Ok(robustness(traj, 0, f, preds)? >= 0.0)
}

/// Robustness at every step; `None` where a clipped window is empty.
pub fn robustness_signal<P: Predicates + ?Sized>(
    traj: &Trajectory,
    f: &Formula,
    preds: &P,
) -> Result<Vec<Option<f64>>, StlError> {
    let n = traj.len();
    let last = traj.last_step();
    Ok(match f {
        Formula::True => vec![Some(1.0); n],
        Formula::Pred(label) => {
            let mut out = Vec::with_capacity(n);
            for x in traj.states() {
                out.push(Some(preds.value(label, x)?));
            }
            out
        }
        Formula::Not(c) => robustness_signal(traj, c, preds)?
            .into_iter()
            .map(|v| v.map(|r| -r))
            .collect(),
        Formula::And(cs) => {
            let mut acc = vec![Some(f64::INFINITY); n];
            for c in cs {
                let s = robustness_signal(traj, c, preds)?;
                for (a, v) in acc.iter_mut().zip(s) {
                    *a = match (*a, v) {
                        (Some(x), Some(y)) => Some(x.min(y)),
                        _ => None,
                    };
                }
            }
            acc
        }
        Formula::Eventually(i, c) => {
            let s = robustness_signal(traj, c, preds)?;
            window_fold(&s, i.lo(), i.hi(), last, f64::NEG_INFINITY, f64::max)
        }
        Formula::Always(i, c) => {
            let s = robustness_signal(traj, c, preds)?;
            window_fold(&s, i.lo(), i.hi(), last, f64::INFINITY, f64::min)
        }
        Formula::Until(i, l, r) => {
            let left = robustness_signal(traj, l, preds)?;
            let right = robustness_signal(traj, r, preds)?;
            (0..n)
                .map(|t| {
                    let lo = t + i.lo();
                    if lo > last {
                        return None;
                    }
                    let hi = (t + i.hi()).min(last);
                    let mut left_min = f64::INFINITY;
                    let mut best = f64::NEG_INFINITY;
                    for tp in t..=hi {
                        left_min = left_min.min(left[tp]?);
                        if tp >= lo {
                            best = best.max(right[tp]?.min(left_min));
                        }
                    }
                    Some(best)
                })
                .collect()
        }
    })
}

fn window_fold(
    s: &[Option<f64>],
    a: usize,
    b: usize,
    last: usize,
    init: f64,
    op: impl Fn(f64, f64) -> f64,
) -> Vec<Option<f64>> {
    (0..s.len())
        .map(|t| {
            let lo = t + a;
            if lo > last {
                return None;
            }
            let hi = (t + b).min(last);
            s[lo..=hi]
                .iter()
                .try_fold(init, |acc, v| v.map(|x| op(acc, x)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::formula::Interval;
    use super::super::parser::parse;
    use super::*;

    /// Predicate `p<i>` reads component `i` of the state.
    struct Components;

    impl Predicates for Components {
        fn value(&self, label: &str, state: &[f64]) -> Result<f64, StlError> {
            let i: usize = label[1..]
                .parse()
                .map_err(|_| StlError::UnknownPredicate(label.into()))?;
            state
                .get(i)
                .copied()
                .ok_or_else(|| StlError::UnknownPredicate(label.into()))
        }
    }

    fn signal(cols: &[&[f64]]) -> Trajectory {
        let n = cols[0].len();
        Trajectory::new(
            (0..n)
                .map(|t| cols.iter().map(|c| c[t]).collect())
                .collect(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn true_is_one() {
        let tr = signal(&[&[-3.0, 4.0]]);
        assert_eq!(
            robustness(&tr, 0, &Formula::True, &Components).unwrap(),
            1.0
        );
        assert_eq!(
            robustness(&tr, 1, &Formula::True, &Components).unwrap(),
            1.0
        );
    }

    #[test]
    fn eventually_takes_window_max() {
        let tr = signal(&[&[-1.0, 0.3, -0.2]]);
        let f = parse("F[0,2](p0)").unwrap();
        assert_eq!(robustness(&tr, 0, &f, &Components).unwrap(), 0.3);
    }

    #[test]
    fn until_worked_example() {
        // t'=0: min(-1, 1) = -1; t'=1: min(2, min(1,1)) = 1; t'=2: min(3, -1) = -1
        let tr = signal(&[&[1.0, 1.0, -1.0], &[-1.0, 2.0, 3.0]]);
        let f = parse("(p0) U[0,2] (p1)").unwrap();
        assert_eq!(robustness(&tr, 0, &f, &Components).unwrap(), 1.0);
    }

    #[test]
    fn satisfaction_threshold_is_inclusive() {
        let zero = signal(&[&[0.0]]);
        assert!(satisfies(&zero, &Formula::pred("p0"), &Components).unwrap());
        let tiny = signal(&[&[-1e-9]]);
        assert!(!satisfies(&tiny, &Formula::pred("p0"), &Components).unwrap());
    }

    #[test]
    fn windows_are_clipped_and_empty_windows_error() {
        let tr = signal(&[&[-1.0, -2.0, 5.0]]);
        let f = Formula::eventually(Interval::new(1, 10).unwrap(), Formula::pred("p0"));
        assert_eq!(robustness(&tr, 0, &f, &Components).unwrap(), 5.0);
        assert_eq!(
            robustness(&tr, 2, &f, &Components),
            Err(StlError::EmptyWindow { t: 2, horizon: 2 })
        );
        assert!(matches!(
            robustness(&tr, 3, &f, &Components),
            Err(StlError::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn negation_is_exact() {
        let tr = signal(&[&[0.25, -0.5, 0.125]]);
        let f = parse("G[0,2](p0)").unwrap();
        let r = robustness(&tr, 0, &f, &Components).unwrap();
        assert_eq!(
            robustness(&tr, 0, &Formula::not(f), &Components).unwrap(),
            -r
        );
    }
}
