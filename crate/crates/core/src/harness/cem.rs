use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::rollout_robustness;
use super::{Checkpoint, PolicyKind, RunConfig, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
use crate::learner::{obs_dim, GaussianPolicy, Mlp, StateFields};
use crate::mdp::Task;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CemConfig {
    pub population: usize,
    pub elites: usize,
    pub init_std: f64,
    pub std_floor: f64,
    pub iterations: usize,
    pub hidden: Vec<usize>,
    /// Initial states each candidate is scored on (shared within an iteration).
    pub inits_per_candidate: usize,
    /// Use the domain midpoints as the fixed assignment instead of a uniform draw.
    pub midpoint_assignment: bool,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population: 512,
            elites: 32,
            init_std: 0.05,
            std_floor: 1e-3,
            iterations: 300,
            hidden: vec![32, 32],
            inits_per_candidate: 4,
            midpoint_assignment: true,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.elites < 2 || self.elites > self.population {
            return Err(Error::Config("cem needs 2 <= elites <= population".into()));
        }
        if self.iterations == 0
            || self.inits_per_candidate == 0
            || self.hidden.iter().any(|&h| h == 0)
        {
            return Err(Error::Config(
                "cem iterations, inits and hidden sizes must be positive".into(),
            ));
        }
        if !(self.init_std > 0.0 && self.std_floor >= 0.0) {
            return Err(Error::Config(
                "cem init_std must be positive and std_floor non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Mean and unbiased per-coordinate std of the elite parameter vectors
/// (before any floor is applied).
pub fn cem_update(elites: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let k = elites.len();
    assert!(k >= 2, "cem update needs at least two elites");
    // accumulate offsets from the first elite so identical elites give
    // exactly that vector and a zero spread
    let base = &elites[0];
    let mut shift = vec![0.0; base.len()];
    for e in elites {
        for ((m, x), b) in shift.iter_mut().zip(e).zip(base) {
            *m += x - b;
        }
    }
    shift.iter_mut().for_each(|m| *m /= k as f64);
    let mut var = vec![0.0; base.len()];
    for e in elites {
        for ((v, x), (b, m)) in var.iter_mut().zip(e).zip(base.iter().zip(&shift)) {
            *v += (x - b - m).powi(2);
        }
    }
    let mean = base.iter().zip(&shift).map(|(b, m)| b + m).collect();
    let std = var
        .into_iter()
        .map(|v| (v / (k - 1) as f64).sqrt())
        .collect();
    (mean, std)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CemIteration {
    pub iteration: usize,
    pub mean_fitness: f64,
    pub best_fitness: f64,
    /// Share of the elites' rollouts that satisfy the formula.
    pub elite_success: f64,
    pub mean_std: f64,
}

#[derive(Clone, Debug)]
pub struct CemOutcome {
    pub checkpoint: Checkpoint,
    pub iterations: Vec<CemIteration>,
}

const CEM_FIELDS: StateFields = StateFields {
    time: true,
    progress: false,
    flags: false,
    assignment: false,
};

/// Cross-entropy search over the weights of a deterministic policy that sees
/// the state and time only. The time plan is fixed up front; fitness is the
/// mean robustness over initial states shared by the whole population.
pub fn cem_train(
    cfg: &RunConfig,
    task: &Task,
    on_iter: &mut dyn FnMut(&CemIteration) -> Result<()>,
) -> Result<CemOutcome> {
    cfg.validate()?;
    let c = &cfg.cem;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fixed = if c.midpoint_assignment
        && task
            .taskset
            .is_feasible(&task.taskset.midpoint(), task.horizon())
    {
        task.taskset.midpoint()
    } else {
        task.taskset
            .sample_uniform(task.horizon(), &mut rng)
            .map_err(crate::grounding::GroundingError::from)?
    };
    let dim = obs_dim(task, CEM_FIELDS);
    let act = task.scene.env.control_dim();
    let template = GaussianPolicy::new(dim, &c.hidden, act, cfg.ppo.init_log_std, &mut rng);
    let mut ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        kind: PolicyKind::Cem,
        scene: task.scene.name.clone(),
        task_hash: task.scene.hash().to_string(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        fields: CEM_FIELDS,
        fixed_assignment: Some(fixed.clone()),
        epochs: c.iterations,
        critic: Mlp::new(&[dim, 1], 0.0, &mut rng),
        policy: template,
    };
    let mut mean = ckpt.policy.mean.params.clone();
    let mut std = vec![c.init_std; mean.len()];
    let mut log = Vec::with_capacity(c.iterations);

    for iteration in 1..=c.iterations {
        let x0s: Vec<Vec<f64>> = (0..c.inits_per_candidate)
            .map(|_| task.scene.env.sample_initial(&mut rng))
            .collect();
        let population: Vec<Vec<f64>> = (0..c.population)
            .map(|_| {
                mean.iter()
                    .zip(&std)
                    .map(|(m, s)| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + s * z
                    })
                    .collect::<Vec<f64>>()
            })
            .collect();
        let assignments = vec![fixed.clone(); x0s.len()];
        let scored: Vec<Result<Vec<f64>>> = population
            .par_iter()
            .map(|theta| {
                let mut cand = ckpt.clone();
                cand.policy.mean.params.clone_from(theta);
                rollout_robustness(&cand, task, &assignments, &x0s)
            })
            .collect();
        let scored = scored.into_iter().collect::<Result<Vec<_>>>()?;
        let fitness: Vec<f64> = scored
            .iter()
            .map(|r| r.iter().sum::<f64>() / r.len() as f64)
            .collect();
        let mut order: Vec<usize> = (0..c.population).collect();
        order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]));
        let elite_idx = &order[..c.elites];
        let elites: Vec<Vec<f64>> = elite_idx.iter().map(|&i| population[i].clone()).collect();
        let (m, s) = cem_update(&elites);
        mean = m;
        std = s.into_iter().map(|v| v.max(c.std_floor)).collect();
        let sat = elite_idx
            .iter()
            .flat_map(|&i| &scored[i])
            .filter(|&&r| r >= 0.0)
            .count();
        let it = CemIteration {
            iteration,
            mean_fitness: fitness.iter().sum::<f64>() / fitness.len() as f64,
            best_fitness: fitness[order[0]],
            elite_success: sat as f64 / (c.elites * x0s.len()) as f64,
            mean_std: std.iter().sum::<f64>() / std.len() as f64,
        };
        on_iter(&it)?;
        log.push(it);
    }
    ckpt.policy.mean.params = mean;
    Ok(CemOutcome {
        checkpoint: ckpt,
        iterations: log,
    })
}

/// [`cem_train`] writing `cem.csv` (one row per iteration) and
/// `checkpoint.json` into `out_dir`.
pub fn cem_to_dir(cfg: &RunConfig, task: &Task, out_dir: &Path) -> Result<CemOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let mut writer =
        csv::Writer::from_path(out_dir.join("cem.csv")).map_err(|e| Error::Io(e.into()))?;
    let mut on_iter = |it: &CemIteration| -> Result<()> {
        writer.serialize(it).map_err(|e| Error::Io(e.into()))?;
        writer.flush()?;
        Ok(())
    };
    let out = cem_train(cfg, task, &mut on_iter)?;
    out.checkpoint.save(out_dir.join("checkpoint.json"))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn update_formulas() {
        let e = vec![vec![1.0, 2.0], vec![3.0, 2.0], vec![5.0, 2.0]];
        let (m, s) = cem_update(&e);
        assert_eq!(m, vec![3.0, 2.0]);
        assert!((s[0] - 2.0).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
        let same = vec![vec![0.7; 4]; 32];
        assert_eq!(cem_update(&same).1, vec![0.0; 4]);
    }
}
