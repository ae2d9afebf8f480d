//! Choosing time assignments: Metropolis–Hastings over the critic's
//! `exp(V)`, an elite buffer of high-robustness assignments, and the hybrid
//! per-epoch batch.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::{DecomposeError, TaskSet, TimeAssignment, TimeVariable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroundingError {
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error("critic returned a non-finite value {value} for {assignment}")]
    NonFiniteCritic {
        assignment: TimeAssignment,
        value: f64,
    },
    #[error("critic: {0}")]
    Critic(String),
    #[error("invalid sampler config: {0}")]
    Config(String),
}

/// Scores assignments for batch slots; `slots[i]` says whose initial state
/// `assignments[i]` is evaluated from.
pub trait Critic {
    fn score(
        &mut self,
        slots: &[usize],
        assignments: &[TimeAssignment],
    ) -> Result<Vec<f64>, GroundingError>;
}

impl<F> Critic for F
where
    F: FnMut(&[usize], &[TimeAssignment]) -> Result<Vec<f64>, GroundingError>,
{
    fn score(
        &mut self,
        slots: &[usize],
        assignments: &[TimeAssignment],
    ) -> Result<Vec<f64>, GroundingError> {
        self(slots, assignments)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub mcmc_steps: usize,
    pub warmup: usize,
    pub eta_uniform: f64,
    pub eta_mcmc: f64,
    pub eta_elite: f64,
    pub elite_capacity: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            mcmc_steps: 500,
            warmup: 200,
            eta_uniform: 0.5,
            eta_mcmc: 0.4,
            eta_elite: 0.1,
            elite_capacity: 512,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), GroundingError> {
        let r = [self.eta_uniform, self.eta_mcmc, self.eta_elite];
        if r.iter().any(|v| !(*v >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(GroundingError::Config(format!(
                "sampling ratios {r:?} must be non-negative and sum to 1"
            )));
        }
        if self.warmup >= self.mcmc_steps {
            return Err(GroundingError::Config(format!(
                "warm-up {} must be below the step count {}",
                self.warmup, self.mcmc_steps
            )));
        }
        if self.elite_capacity == 0 {
            return Err(GroundingError::Config(
                "elite capacity must be positive".into(),
            ));
        }
        Ok(())
    }

    /// `uniform/mcmc/elite` ratios, e.g. `0.5/0.4/0.1`, or `uniform` / `hybrid`.
    pub fn set_mix(&mut self, text: &str) -> Result<(), GroundingError> {
        let (u, m, e) = match text.trim() {
            "uniform" => (1.0, 0.0, 0.0),
            "hybrid" => (0.5, 0.4, 0.1),
            other => {
                let parts: Vec<f64> = other
                    .split(['/', ','])
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| GroundingError::Config(format!("sampling mix `{other}`: {e}")))?;
                match parts[..] {
                    [u, m, e] => (u, m, e),
                    _ => {
                        return Err(GroundingError::Config(format!(
                            "sampling mix `{other}` needs three ratios"
                        )))
                    }
                }
            }
        };
        self.eta_uniform = u;
        self.eta_mcmc = m;
        self.eta_elite = e;
        self.validate()
    }
}

/// Moves one uniformly chosen variable by ±1; a move leaving its domain
/// leaves the assignment unchanged.
pub fn propose<R: Rng + ?Sized>(
    t: &TimeAssignment,
    domains: &[TimeVariable],
    rng: &mut R,
) -> TimeAssignment {
    if domains.is_empty() {
        return t.clone();
    }
    let j = rng.random_range(0..domains.len());
    let up = rng.random_bool(0.5);
    let mut next = t.clone();
    let v = t.0[j];
    let d = &domains[j];
    if up && v < d.hi {
        next.0[j] = v + 1;
    } else if !up && v > d.lo {
        next.0[j] = v - 1;
    }
    next
}

/// `min(1, exp(q_new - q_cur))`.
pub fn acceptance_probability(q_cur: f64, q_new: f64) -> f64 {
    if q_new >= q_cur {
        1.0
    } else {
        (q_new - q_cur).exp()
    }
}

#[derive(Clone, Debug, Default)]
pub struct MhRun {
    /// Highest-critic post-warm-up sample of each chain.
    pub best: Vec<TimeAssignment>,
    pub best_values: Vec<f64>,
    /// Every post-warm-up state of every chain, when requested.
    pub pooled: Vec<TimeAssignment>,
    pub accepted: usize,
    pub proposed: usize,
}

fn checked(values: Vec<f64>, assignments: &[TimeAssignment]) -> Result<Vec<f64>, GroundingError> {
    if values.len() != assignments.len() {
        return Err(GroundingError::Critic(format!(
            "{} values for {} assignments",
            values.len(),
            assignments.len()
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(GroundingError::NonFiniteCritic {
            assignment: assignments[i].clone(),
            value: values[i],
        });
    }
    Ok(values)
}

/// One chain per slot, run in lockstep so each step is one critic call.
/// Chains start uniform over the feasible domain; proposals that do not
/// ground within `horizon` are rejected.
pub fn mh_chains<C: Critic + ?Sized, R: Rng + ?Sized>(
    critic: &mut C,
    taskset: &TaskSet,
    horizon: usize,
    slots: &[usize],
    steps: usize,
    warmup: usize,
    keep_pooled: bool,
    rng: &mut R,
) -> Result<MhRun, GroundingError> {
    let n = slots.len();
    let mut run = MhRun::default();
    if n == 0 {
        return Ok(run);
    }
    if taskset.num_variables() == 0 {
        run.best = vec![TimeAssignment::empty(); n];
        run.best_values = critic.score(slots, &run.best)?;
        return Ok(run);
    }
    let mut cur = (0..n)
        .map(|_| taskset.sample_uniform(horizon, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let mut q = checked(critic.score(slots, &cur)?, &cur)?;
    run.best = cur.clone();
    run.best_values = vec![f64::NEG_INFINITY; n];
    let domains = taskset.domains();
    for step in 0..steps {
        let mut idx = Vec::with_capacity(n);
        let mut props = Vec::with_capacity(n);
        for (c, t) in cur.iter().enumerate() {
            let p = propose(t, domains, rng);
            if p == *t {
                continue;
            }
            run.proposed += 1;
            if taskset.is_feasible(&p, horizon) {
                idx.push(c);
                props.push(p);
            }
        }
        if !props.is_empty() {
            let ps: Vec<usize> = idx.iter().map(|&c| slots[c]).collect();
            let qn = checked(critic.score(&ps, &props)?, &props)?;
            for ((c, p), qv) in idx.into_iter().zip(props).zip(qn) {
                let alpha = acceptance_probability(q[c], qv);
                if alpha >= 1.0 || rng.random::<f64>() < alpha {
                    cur[c] = p;
                    q[c] = qv;
                    run.accepted += 1;
                }
            }
        }
        if step >= warmup {
            for c in 0..n {
                if q[c] > run.best_values[c] {
                    run.best_values[c] = q[c];
                    run.best[c] = cur[c].clone();
                }
            }
            if keep_pooled {
                run.pooled.extend(cur.iter().cloned());
            }
        }
    }
    Ok(run)
}

/// One assignment per slot: the best post-warm-up sample of its chain.
pub fn mh_sample<C: Critic + ?Sized, R: Rng + ?Sized>(
    critic: &mut C,
    taskset: &TaskSet,
    horizon: usize,
    slots: &[usize],
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<TimeAssignment>, GroundingError> {
    Ok(mh_chains(
        critic,
        taskset,
        horizon,
        slots,
        cfg.mcmc_steps,
        cfg.warmup,
        false,
        rng,
    )?
    .best)
}

/// Top-K assignments by best observed robustness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EliteBuffer {
    capacity: usize,
    entries: Vec<(TimeAssignment, f64)>,
}

impl EliteBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted by robustness, highest first.
    pub fn entries(&self) -> &[(TimeAssignment, f64)] {
        &self.entries
    }

    /// Merges episodes, keeping each assignment's best score, then truncates.
    pub fn update(&mut self, episodes: &[(TimeAssignment, f64)]) {
        if episodes.is_empty() {
            return;
        }
        let mut best: BTreeMap<TimeAssignment, f64> = BTreeMap::new();
        for (a, s) in self.entries.iter().chain(episodes) {
            if s.is_nan() {
                continue;
            }
            let e = best.entry(a.clone()).or_insert(*s);
            if *s > *e {
                *e = *s;
            }
        }
        let mut all: Vec<(TimeAssignment, f64)> = best.into_iter().collect();
        // ties resolved by assignment order for determinism
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        all.truncate(self.capacity);
        self.entries = all;
    }
}

/// Which source produced each assignment of a composed batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Uniform,
    Mcmc,
    Elite,
}

/// Slot counts `(uniform, mcmc, elite)` for a batch of `n`: floors of the
/// uniform and MCMC shares, the remainder to the elite share when it is
/// enabled (else to uniform), and any elite shortfall back to uniform.
pub fn batch_counts(
    cfg: &SamplerConfig,
    n: usize,
    elite_available: usize,
) -> (usize, usize, usize) {
    let u = (cfg.eta_uniform * n as f64 + 1e-9).floor() as usize;
    let m = ((cfg.eta_mcmc * n as f64 + 1e-9).floor() as usize).min(n - u.min(n));
    let rest = n - u.min(n) - m;
    let e = if cfg.eta_elite > 0.0 && elite_available > 0 {
        rest
    } else {
        0
    };
    (n - m - e, m, e)
}

/// Builds the per-epoch batch: uniform slots first, then MCMC slots (chain
/// `c` scores from slot `u + c`), then elite draws from the buffer.
pub fn compose_batch<C: Critic + ?Sized, R: Rng + ?Sized>(
    taskset: &TaskSet,
    horizon: usize,
    buffer: &EliteBuffer,
    critic: &mut C,
    cfg: &SamplerConfig,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(TimeAssignment, Source)>, GroundingError> {
    if n == 0 {
        return Err(GroundingError::Config(
            "batch size must be at least 1".into(),
        ));
    }
    if taskset.num_variables() == 0 {
        taskset.ground(&TimeAssignment::empty(), horizon)?;
        return Ok(vec![(TimeAssignment::empty(), Source::Uniform); n]);
    }
    let (u, m, e) = batch_counts(cfg, n, buffer.len());
    let mut out = Vec::with_capacity(n);
    for _ in 0..u {
        out.push((taskset.sample_uniform(horizon, rng)?, Source::Uniform));
    }
    if m > 0 {
        let slots: Vec<usize> = (u..u + m).collect();
        for a in mh_sample(critic, taskset, horizon, &slots, cfg, rng)? {
            out.push((a, Source::Mcmc));
        }
    }
    for _ in 0..e {
        let (a, _) = buffer
            .entries()
            .choose(rng)
            .expect("elite share only when the buffer is non-empty");
        out.push((a.clone(), Source::Elite));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::decompose::decompose;
    use crate::stl::parse;

    fn two_vars(hi: usize) -> TaskSet {
        decompose(&parse(&format!("F[0,{hi}](A) & F[0,{hi}](B)")).unwrap()).unwrap()
    }

    #[test]
    fn proposals() {
        let ts = decompose(&parse("F[5,20](A)").unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lo = TimeAssignment(vec![5]);
        let mut moved_up = false;
        for _ in 0..100 {
            let p = propose(&lo, ts.domains(), &mut rng);
            assert!(p == lo || p.0 == vec![6]);
            moved_up |= p.0 == vec![6];
        }
        assert!(moved_up);
        let mid = TimeAssignment(vec![10]);
        for _ in 0..50 {
            let p = propose(&mid, ts.domains(), &mut rng);
            assert!(p.0 == vec![9] || p.0 == vec![11]);
        }
        let empty = decompose(&parse("G[0,5](A)").unwrap()).unwrap();
        assert_eq!(
            propose(&TimeAssignment::empty(), empty.domains(), &mut rng),
            TimeAssignment::empty()
        );
    }

    #[test]
    fn acceptance() {
        assert_eq!(acceptance_probability(1.3, 1.3), 1.0);
        assert!((acceptance_probability(0.0, -1.0) - 0.36787944117144233).abs() < 1e-15);
        // two-cell chain: a(0->1) e^V0 = a(1->0) e^V1
        let (v0, v1) = (0.4, -1.1);
        let a01 = 0.5 * acceptance_probability(v0, v1);
        let a10 = 0.5 * acceptance_probability(v1, v0);
        assert!((a01 * v0.exp() - a10 * v1.exp()).abs() < 1e-15);
    }

    #[test]
    fn elite_buffer_rules() {
        let a = |v: usize| TimeAssignment(vec![v]);
        let mut b = EliteBuffer::new(2);
        b.update(&[(a(1), 0.5), (a(2), 0.3), (a(3), 0.9)]);
        assert_eq!(b.entries(), &[(a(3), 0.9), (a(1), 0.5)]);
        let before = b.clone();
        b.update(&[(a(3), 0.1)]);
        assert_eq!(b, before);
        b.update(&[]);
        assert_eq!(b, before);
        b.update(&[(a(1), 2.0)]);
        assert_eq!(b.entries(), &[(a(1), 2.0), (a(3), 0.9)]);
    }

    #[test]
    fn batch_arithmetic() {
        let cfg = SamplerConfig::default();
        assert_eq!(batch_counts(&cfg, 512, 512), (256, 204, 52));
        assert_eq!(batch_counts(&cfg, 512, 0), (308, 204, 0));
        let uniform = SamplerConfig {
            eta_uniform: 1.0,
            eta_mcmc: 0.0,
            eta_elite: 0.0,
            ..cfg.clone()
        };
        assert_eq!(batch_counts(&uniform, 100, 10), (100, 0, 0));
        let no_elite = SamplerConfig {
            eta_uniform: 0.5,
            eta_mcmc: 0.5,
            eta_elite: 0.0,
            ..cfg
        };
        assert_eq!(batch_counts(&no_elite, 7, 10), (4, 3, 0));
    }

    #[test]
    fn composed_batches_have_exact_size() {
        let ts = two_vars(9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = SamplerConfig {
            mcmc_steps: 20,
            warmup: 5,
            ..Default::default()
        };
        let mut critic =
            |_: &[usize], a: &[TimeAssignment]| Ok(a.iter().map(|t| t.0[0] as f64 * 0.1).collect());
        let mut buffer = EliteBuffer::new(4);
        for n in [1, 2, 3, 10, 33] {
            let b = compose_batch(&ts, 100, &buffer, &mut critic, &cfg, n, &mut rng).unwrap();
            assert_eq!(b.len(), n);
            assert!(b.iter().all(|(_, s)| *s != Source::Elite));
        }
        buffer.update(&[(TimeAssignment(vec![1, 1]), 1.0)]);
        let b = compose_batch(&ts, 100, &buffer, &mut critic, &cfg, 20, &mut rng).unwrap();
        assert_eq!(b.len(), 20);
        assert_eq!(b.iter().filter(|(_, s)| *s == Source::Elite).count(), 2);
        assert!(b.iter().all(|(a, _)| ts.check_assignment(a).is_ok()));
    }

    #[test]
    fn chains_reject_infeasible_moves() {
        // A and then B within a horizon of 12: t0 + 5 <= 12
        let ts = decompose(&parse("F[0,10](A & F[5,5](B))").unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut critic =
            |_: &[usize], a: &[TimeAssignment]| Ok(a.iter().map(|t| t.0[0] as f64).collect());
        let run = mh_chains(&mut critic, &ts, 12, &[0, 1, 2, 3], 200, 50, true, &mut rng).unwrap();
        assert!(run.pooled.iter().all(|a| ts.is_feasible(a, 12)));
        assert!(run.best.iter().all(|a| a.0[0] <= 7));
        assert!(run.best.iter().any(|a| a.0[0] == 7));
    }

    #[test]
    fn non_finite_critic_is_an_error() {
        let ts = two_vars(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut critic = |_: &[usize], a: &[TimeAssignment]| Ok(vec![f64::NAN; a.len()]);
        let cfg = SamplerConfig {
            mcmc_steps: 5,
            warmup: 1,
            ..Default::default()
        };
        assert!(matches!(
            mh_sample(&mut critic, &ts, 10, &[0], &cfg, &mut rng),
            Err(GroundingError::NonFiniteCritic { .. })
        ));
    }

    #[test]
    fn mix_parsing() {
        let mut cfg = SamplerConfig::default();
        cfg.set_mix("uniform").unwrap();
        assert_eq!(
            (cfg.eta_uniform, cfg.eta_mcmc, cfg.eta_elite),
            (1.0, 0.0, 0.0)
        );
        cfg.set_mix("0.2/0.3/0.5").unwrap();
        assert_eq!(cfg.eta_elite, 0.5);
        assert!(cfg.set_mix("0.2/0.3").is_err());
        assert!(cfg.set_mix("0.5/0.5/0.5").is_err());
    }
}
