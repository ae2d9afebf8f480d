use ndarray::{Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{GaussianPolicy, LearnerError, Mlp};

/// An environment that runs one finite episode.
pub trait EpisodicEnv: Send {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    /// Appends the current observation to `out`.
    fn observe(&self, out: &mut Vec<f64>);
    /// Applies an action; returns `(reward, done)`.
    fn step(&mut self, action: &[f64]) -> Result<(f64, bool), LearnerError>;
    /// Task score of a finished episode (e.g. formula robustness).
    fn score(&self) -> Option<f64> {
        None
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeSummary {
    pub env: usize,
    /// First row of this episode in the batch.
    pub start: usize,
    pub len: usize,
    pub ret: f64,
    pub score: Option<f64>,
}

/// Steps of complete episodes, stored episode by episode.
#[derive(Clone, Debug)]
pub struct RolloutBatch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub logp: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub episodes: Vec<EpisodeSummary>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn mean_return(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.episodes.iter().map(|e| e.ret).sum::<f64>() / self.episodes.len() as f64
    }
}

#[derive(Default)]
struct Buffer {
    obs: Vec<f64>,
    actions: Vec<f64>,
    logp: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
}

/// `assignments[i % len]` for env `i`.
pub fn round_robin<T: Clone>(items: &[T], n: usize) -> Vec<T> {
    (0..n).map(|i| items[i % items.len()].clone()).collect()
}

const MAX_STEPS: usize = 1_000_000;

/// Runs every env to the end of its episode in lockstep: one batched policy
/// and critic pass per step over the still-running envs. `rngs[i]` drives
/// env `i`'s action noise, so results do not depend on thread count.
pub fn rollout<E: EpisodicEnv>(
    policy: &GaussianPolicy,
    critic: &Mlp,
    envs: &mut [E],
    rngs: &mut [ChaCha8Rng],
    deterministic: bool,
) -> Result<RolloutBatch, LearnerError> {
    assert_eq!(envs.len(), rngs.len(), "one rng per env");
    let n = envs.len();
    if n == 0 {
        return Err(LearnerError::Shape("rollout needs at least one env".into()));
    }
    let (obs_dim, act_dim) = (envs[0].obs_dim(), envs[0].act_dim());
    let mut bufs: Vec<Buffer> = (0..n).map(|_| Buffer::default()).collect();
    let mut running: Vec<usize> = (0..n).collect();
    let mut obs = Vec::with_capacity(n * obs_dim);
    let mut steps = 0;
    while !running.is_empty() {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(LearnerError::Shape("episodes did not terminate".into()));
        }
        obs.clear();
        for &i in &running {
            let before = obs.len();
            envs[i].observe(&mut obs);
            if obs.len() - before != obs_dim {
                return Err(LearnerError::Shape(format!(
                    "env {i} produced {} observation values",
                    obs.len() - before
                )));
            }
        }
        let view = ArrayView2::from_shape((running.len(), obs_dim), &obs).unwrap();
        let alive: Vec<bool> = (0..n).map(|i| running.binary_search(&i).is_ok()).collect();
        let mut active_rngs: Vec<&mut ChaCha8Rng> = rngs
            .iter_mut()
            .zip(&alive)
            .filter(|(_, &a)| a)
            .map(|(r, _)| r)
            .collect();
        let (actions, logps) = policy.act_batch(view, &mut active_rngs, deterministic)?;
        let values = critic.forward(view);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::NonFinite("critic value".into()));
        }

        let mut chosen: Vec<&mut E> = envs
            .iter_mut()
            .zip(&alive)
            .filter(|(_, &a)| a)
            .map(|(e, _)| e)
            .collect();
        let results: Vec<Result<(f64, bool), LearnerError>> = chosen
            .par_iter_mut()
            .enumerate()
            .map(|(row, env)| env.step(actions.row(row).as_slice().unwrap()))
            .collect();

        let mut still = Vec::with_capacity(running.len());
        for (row, (&i, res)) in running.iter().zip(results).enumerate() {
            let (reward, done) = res?;
            if !reward.is_finite() {
                return Err(LearnerError::NonFinite(format!("reward of env {i}")));
            }
            let b = &mut bufs[i];
            b.obs
                .extend_from_slice(&obs[row * obs_dim..(row + 1) * obs_dim]);
            b.actions.extend(actions.row(row).iter());
            b.logp.push(logps[row]);
            b.values.push(values[[row, 0]]);
            b.rewards.push(reward);
            b.dones.push(done);
            if !done {
                still.push(i);
            }
        }
        running = still;
    }

    let total: usize = bufs.iter().map(|b| b.rewards.len()).sum();
    let mut batch = RolloutBatch {
        obs: Array2::zeros((0, obs_dim)),
        actions: Array2::zeros((0, act_dim)),
        logp: Vec::with_capacity(total),
        rewards: Vec::with_capacity(total),
        values: Vec::with_capacity(total),
        dones: Vec::with_capacity(total),
        episodes: Vec::with_capacity(n),
    };
    let mut all_obs = Vec::with_capacity(total * obs_dim);
    let mut all_act = Vec::with_capacity(total * act_dim);
    for (i, b) in bufs.into_iter().enumerate() {
        let start = batch.rewards.len();
        batch.episodes.push(EpisodeSummary {
            env: i,
            start,
            len: b.rewards.len(),
            ret: b.rewards.iter().sum(),
            score: envs[i].score(),
        });
        all_obs.extend(b.obs);
        all_act.extend(b.actions);
        batch.logp.extend(b.logp);
        batch.rewards.extend(b.rewards);
        batch.values.extend(b.values);
        batch.dones.extend(b.dones);
    }
    batch.obs = Array2::from_shape_vec((total, obs_dim), all_obs).unwrap();
    batch.actions = Array2::from_shape_vec((total, act_dim), all_act).unwrap();
    Ok(batch)
}
