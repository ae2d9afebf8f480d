use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Checkpoint, PolicyKind, RunConfig, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
use crate::decompose::TimeAssignment;
use crate::grounding::{compose_batch, Critic, EliteBuffer, GroundingError, Source};
use crate::learner::{
    initial_observation, obs_dim, rollout, Agent, Mlp, RolloutBatch, StateFields, TaskEnv,
};
use crate::mdp::Task;
use crate::{Error, Result};

/// Critic scores of assignments from per-slot initial states.
pub(crate) struct CriticScorer<'a> {
    pub critic: &'a Mlp,
    pub task: &'a Task,
    pub fields: StateFields,
    pub x0s: &'a [Vec<f64>],
}

impl CriticScorer<'_> {
    pub fn values(&self, slots: &[usize], assignments: &[TimeAssignment]) -> Vec<f64> {
        let dim = obs_dim(self.task, self.fields);
        let mut flat = Vec::with_capacity(slots.len() * dim);
        for (&s, a) in slots.iter().zip(assignments) {
            flat.extend(initial_observation(self.task, &self.x0s[s], a, self.fields));
        }
        let obs = Array2::from_shape_vec((slots.len(), dim), flat).expect("observation rows");
        self.critic.forward(obs.view()).column(0).to_vec()
    }
}

impl Critic for CriticScorer<'_> {
    fn score(
        &mut self,
        slots: &[usize],
        assignments: &[TimeAssignment],
    ) -> Result<Vec<f64>, GroundingError> {
        Ok(self.values(slots, assignments))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_return: f64,
    /// Share of episodes whose trajectory satisfies the formula.
    pub success_fraction: f64,
    pub mean_robustness: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub n_uniform: usize,
    pub n_mcmc: usize,
    pub n_elite: usize,
    pub elite_best: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
    pub elite: EliteBuffer,
}

fn dump_batch(batch: &RolloutBatch, path: &Path) -> std::io::Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "row,reward,value,logp,done")?;
    for i in 0..batch.len() {
        writeln!(
            f,
            "{i},{},{},{},{}",
            batch.rewards[i], batch.values[i], batch.logp[i], batch.dones[i]
        )?;
    }
    Ok(())
}

/// Hybrid-sampling PPO training. Each epoch composes a batch of time
/// assignments, rolls out one episode per assignment, updates the networks
/// and merges the episodes' robustness into the elite buffer. If an update
/// diverges and `dump_dir` is given, the offending batch is written there.
pub fn train(
    cfg: &RunConfig,
    task: &Task,
    dump_dir: Option<&Path>,
    on_epoch: &mut dyn FnMut(&EpochMetrics) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let horizon = task.horizon();
    let fields = cfg.state_fields;
    let n = cfg.n_envs;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut agent = Agent::new(
        obs_dim(task, fields),
        task.scene.env.control_dim(),
        &cfg.hidden,
        &cfg.ppo,
        &mut rng,
    );
    let mut elite = EliteBuffer::new(cfg.sampler.elite_capacity);
    let mut metrics = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let x0s: Vec<Vec<f64>> = (0..n)
            .map(|_| task.scene.env.sample_initial(&mut rng))
            .collect();
        let composed = {
            let mut scorer = CriticScorer {
                critic: &agent.critic,
                task,
                fields,
                x0s: &x0s,
            };
            compose_batch(
                &task.taskset,
                horizon,
                &elite,
                &mut scorer,
                &cfg.sampler,
                n,
                &mut rng,
            )?
        };
        let mut envs = composed
            .iter()
            .zip(&x0s)
            .map(|((a, _), x0)| {
                Ok(TaskEnv::new(
                    task,
                    task.plan(a)?,
                    &cfg.reward,
                    x0.clone(),
                    fields,
                )?)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rngs: Vec<ChaCha8Rng> = (0..n)
            .map(|_| ChaCha8Rng::seed_from_u64(rng.random()))
            .collect();
        let batch = rollout(&agent.policy, &agent.critic, &mut envs, &mut rngs, false)?;
        drop(envs);

        let stats = match agent.update(&batch, &cfg.ppo, &mut rng) {
            Ok(s) => s,
            Err(e) => {
                if let Some(dir) = dump_dir {
                    dump_batch(&batch, &dir.join("diverged_batch.csv"))?;
                }
                return Err(Error::Diverged {
                    epoch,
                    msg: e.to_string(),
                });
            }
        };

        let scores: Vec<(TimeAssignment, f64)> = batch
            .episodes
            .iter()
            .map(|e| {
                (
                    composed[e.env].0.clone(),
                    e.score.unwrap_or(f64::NEG_INFINITY),
                )
            })
            .collect();
        let robustness: Vec<f64> = scores.iter().map(|(_, s)| *s).collect();
        elite.update(&scores);
        let count = |s: Source| composed.iter().filter(|(_, src)| *src == s).count();
        let m = EpochMetrics {
            epoch,
            mean_return: batch.mean_return(),
            success_fraction: robustness.iter().filter(|&&r| r >= 0.0).count() as f64 / n as f64,
            mean_robustness: robustness.iter().sum::<f64>() / n as f64,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            approx_kl: stats.approx_kl,
            n_uniform: count(Source::Uniform),
            n_mcmc: count(Source::Mcmc),
            n_elite: count(Source::Elite),
            elite_best: elite.entries().first().map(|e| e.1),
        };
        on_epoch(&m)?;
        metrics.push(m);
    }

    let checkpoint = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        kind: PolicyKind::Tgpo,
        scene: task.scene.name.clone(),
        task_hash: task.scene.hash().to_string(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        fields,
        fixed_assignment: None,
        epochs: cfg.epochs,
        policy: agent.policy,
        critic: agent.critic,
    };
    Ok(TrainOutcome {
        checkpoint,
        metrics,
        elite,
    })
}

/// [`train`] writing `metrics.csv` (one row appended per epoch),
/// `checkpoint.json` and `elite.csv` into `out_dir`.
pub fn train_to_dir(cfg: &RunConfig, task: &Task, out_dir: &Path) -> Result<TrainOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let file = File::create(out_dir.join("metrics.csv"))?;
    let mut writer = csv::Writer::from_writer(file);
    let mut on_epoch = |m: &EpochMetrics| -> Result<()> {
        writer.serialize(m).map_err(|e| Error::Io(e.into()))?;
        writer.flush()?;
        Ok(())
    };
    let out = train(cfg, task, Some(out_dir), &mut on_epoch)?;
    out.checkpoint.save(out_dir.join("checkpoint.json"))?;
    let mut elite = String::from("rank,assignment,robustness\n");
    for (i, (a, s)) in out.elite.entries().iter().enumerate() {
        let vals: Vec<String> = a.values().iter().map(usize::to_string).collect();
        elite.push_str(&format!("{},{},{}\n", i + 1, vals.join(" "), s));
    }
    std::fs::write(out_dir.join("elite.csv"), elite)?;
    Ok(out)
}
