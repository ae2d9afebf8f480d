use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::{clip_grad_norm, AdamW};
use super::policy::log_prob;
use super::{GaussianPolicy, LearnerError, Mlp, RolloutBatch};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_grad_norm: f64,
    pub init_log_std: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatches: 8,
            entropy_coef: 0.01,
            lr: 3e-4,
            weight_decay: 0.1,
            max_grad_norm: 0.5,
            init_log_std: 0.0,
            normalize_advantages: true,
        }
    }
}

/// Generalized advantage estimates and returns for one run of consecutive
/// steps; `bootstrap` is the value after the last step (ignored if it is done).
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut running = 0.0;
    for t in (0..n).rev() {
        let mask = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * mask - values[t];
        running = delta + gamma * lambda * mask * running;
        adv[t] = running;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Flattened training samples for one update.
#[derive(Clone, Debug)]
pub struct PpoSamples {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub logp: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoSamples {
    pub fn from_batch(batch: &RolloutBatch, cfg: &PpoConfig) -> Self {
        let mut advantages = Vec::with_capacity(batch.len());
        let mut returns = Vec::with_capacity(batch.len());
        for ep in &batch.episodes {
            let r = ep.start..ep.start + ep.len;
            // episodes in a batch always run to completion
            let (a, g) = gae(
                &batch.rewards[r.clone()],
                &batch.values[r.clone()],
                &batch.dones[r],
                0.0,
                cfg.gamma,
                cfg.gae_lambda,
            );
            advantages.extend(a);
            returns.extend(g);
        }
        Self {
            obs: batch.obs.clone(),
            actions: batch.actions.clone(),
            logp: batch.logp.clone(),
            advantages,
            returns,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Clipped surrogate for one sample: `-min(r A, clip(r, 1-eps, 1+eps) A)`.
pub fn clipped_surrogate(ratio: f64, adv: f64, eps: f64) -> f64 {
    -(ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Mean squared value error (halved) and its gradient.
pub fn value_loss_grad(critic: &Mlp, obs: ArrayView2<'_, f64>, returns: &[f64]) -> (f64, Vec<f64>) {
    let m = obs.nrows() as f64;
    let (v, acts) = critic.forward_cached(obs);
    let mut dv = Array2::zeros((obs.nrows(), 1));
    let mut loss = 0.0;
    for i in 0..obs.nrows() {
        let e = v[[i, 0]] - returns[i];
        loss += 0.5 * e * e / m;
        dv[[i, 0]] = e / m;
    }
    let mut grad = vec![0.0; critic.num_params()];
    critic.backward(&acts, dv, &mut grad);
    (loss, grad)
}

/// Policy and critic with their own optimizers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub policy: GaussianPolicy,
    pub critic: Mlp,
    opt_policy: AdamW,
    opt_critic: AdamW,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        cfg: &PpoConfig,
        rng: &mut R,
    ) -> Self {
        let policy = GaussianPolicy::new(obs_dim, hidden, act_dim, cfg.init_log_std, rng);
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let critic = Mlp::new(&sizes, 1.0, rng);
        let np = policy.mean.num_params();
        let opt_policy = AdamW::new(np + act_dim, np, cfg.lr, cfg.weight_decay);
        let opt_critic = AdamW::new(
            critic.num_params(),
            critic.num_params(),
            cfg.lr,
            cfg.weight_decay,
        );
        Self {
            policy,
            critic,
            opt_policy,
            opt_critic,
        }
    }

    pub fn value(&self, obs: ArrayView2<'_, f64>) -> Result<Vec<f64>, LearnerError> {
        let v = self.critic.forward(obs);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(LearnerError::NonFinite("critic value".into()));
        }
        Ok(v.column(0).to_vec())
    }

    pub fn update<R: Rng + ?Sized>(
        &mut self,
        batch: &RolloutBatch,
        cfg: &PpoConfig,
        rng: &mut R,
    ) -> Result<UpdateStats, LearnerError> {
        self.update_samples(&PpoSamples::from_batch(batch, cfg), cfg, rng)
    }

    pub fn update_samples<R: Rng + ?Sized>(
        &mut self,
        s: &PpoSamples,
        cfg: &PpoConfig,
        rng: &mut R,
    ) -> Result<UpdateStats, LearnerError> {
        let n = s.obs.nrows();
        if n == 0 {
            return Err(LearnerError::Shape("empty batch".into()));
        }
        let mut adv = s.advantages.clone();
        if cfg.normalize_advantages && n > 1 {
            let mean = adv.iter().sum::<f64>() / n as f64;
            let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));
        }

        let act_dim = self.policy.act_dim();
        let np = self.policy.mean.num_params();
        let mb_size = n.div_ceil(cfg.minibatches.max(1));
        let mut order: Vec<usize> = (0..n).collect();
        let mut stats = UpdateStats::default();
        let mut count = 0usize;
        let mut flat = Vec::with_capacity(np + act_dim);
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            for idx in order.chunks(mb_size) {
                let m = idx.len() as f64;
                let obs = s.obs.select(Axis(0), idx);

                // policy
                let (mean, acts) = self.policy.mean.forward_cached(obs.view());
                let log_std = self.policy.log_std();
                let mut dmean = Array2::zeros((idx.len(), act_dim));
                let mut grad = vec![0.0; np + act_dim];
                let mut ploss = 0.0;
                for (row, &i) in idx.iter().enumerate() {
                    let mu = mean.row(row);
                    let a = s.actions.row(i);
                    let lp = log_prob(mu.as_slice().unwrap(), &log_std, a.as_slice().unwrap());
                    let ratio = (lp - s.logp[i]).exp();
                    let loss = clipped_surrogate(ratio, adv[i], cfg.clip);
                    ploss += loss / m;
                    stats.approx_kl += (s.logp[i] - lp) / m;
                    if (ratio - 1.0).abs() > cfg.clip {
                        stats.clip_fraction += 1.0 / m;
                    }
                    let d_lp =
                        if ratio * adv[i] <= ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * adv[i] {
                            -adv[i] * ratio / m
                        } else {
                            0.0
                        };
                    if d_lp != 0.0 {
                        for j in 0..act_dim {
                            let var = (2.0 * log_std[j]).exp();
                            let diff = a[j] - mu[j];
                            dmean[[row, j]] = d_lp * diff / var;
                            grad[np + j] += d_lp * (diff * diff / var - 1.0);
                        }
                    }
                }
                for g in &mut grad[np..] {
                    *g -= cfg.entropy_coef;
                }
                if !ploss.is_finite() {
                    return Err(LearnerError::NonFinite(format!("policy loss {ploss}")));
                }
                self.policy.mean.backward(&acts, dmean, &mut grad[..np]);
                clip_grad_norm(&mut grad, cfg.max_grad_norm);
                flat.clear();
                flat.extend_from_slice(&self.policy.mean.params);
                flat.extend_from_slice(&self.policy.log_std);
                self.opt_policy.step(&mut flat, &grad);
                self.policy.mean.params.copy_from_slice(&flat[..np]);
                for (ls, v) in self.policy.log_std.iter_mut().zip(&flat[np..]) {
                    *ls = v.clamp(super::LOG_STD_MIN, super::LOG_STD_MAX);
                }

                // critic
                let rets: Vec<f64> = idx.iter().map(|&i| s.returns[i]).collect();
                let (vloss, mut vgrad) = value_loss_grad(&self.critic, obs.view(), &rets);
                if !vloss.is_finite() {
                    return Err(LearnerError::NonFinite(format!("value loss {vloss}")));
                }
                clip_grad_norm(&mut vgrad, cfg.max_grad_norm);
                self.opt_critic.step(&mut self.critic.params, &vgrad);

                stats.policy_loss += ploss;
                stats.value_loss += vloss;
                count += 1;
            }
        }
        let c = count as f64;
        stats.policy_loss /= c;
        stats.value_loss /= c;
        stats.approx_kl /= c;
        stats.clip_fraction /= c;
        stats.entropy = self.policy.entropy();
        if self
            .policy
            .mean
            .params
            .iter()
            .chain(&self.critic.params)
            .any(|p| !p.is_finite())
        {
            return Err(LearnerError::NonFinite("parameters after update".into()));
        }
        Ok(stats)
    }
}
