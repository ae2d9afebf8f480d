//! Training, evaluation, analysis exports and the CEM baseline.

mod cem;
mod eval;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decompose::TimeAssignment;
use crate::env::catalog;
use crate::grounding::SamplerConfig;
use crate::learner::{GaussianPolicy, Mlp, PpoConfig, StateFields};
use crate::mdp::{RewardConfig, Task};
use crate::{Error, Result};

pub use cem::{cem_to_dir, cem_train, cem_update, CemConfig, CemIteration, CemOutcome};
pub use eval::{
    correlate, evaluate, heatmap, monitor, read_trajectory, spearman, trace, Correlation,
    CorrelationRow, EvalReport, Heatmap, MonitorReport,
};
pub use train::{train, train_to_dir, EpochMetrics, TrainOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Small networks and batches that train in minutes on one core.
    Desk,
    /// The full-size settings.
    Full,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            other => Err(Error::Config(format!(
                "unknown profile `{other}` (desk | full)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub n_init: usize,
    /// Assignments screened per initial state.
    pub n_candidates: usize,
    /// Share of the candidates produced by MH chains (the rest uniform).
    pub mcmc_fraction: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_init: 256,
            n_candidates: 64,
            mcmc_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Catalog name or scene file path.
    pub scene: String,
    pub seed: u64,
    pub profile: Profile,
    pub epochs: usize,
    pub n_envs: usize,
    pub hidden: Vec<usize>,
    pub single_thread: bool,
    pub state_fields: StateFields,
    pub reward: RewardConfig,
    pub ppo: PpoConfig,
    pub sampler: SamplerConfig,
    pub eval: EvalConfig,
    pub cem: CemConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Desk)
    }
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let base = Self {
            scene: "linear-stl06".into(),
            seed: 0,
            profile,
            epochs: 300,
            n_envs: 128,
            hidden: vec![64, 64],
            single_thread: false,
            state_fields: StateFields::ALL,
            reward: RewardConfig::default(),
            ppo: PpoConfig::default(),
            sampler: SamplerConfig {
                mcmc_steps: 100,
                warmup: 40,
                ..SamplerConfig::default()
            },
            eval: EvalConfig::default(),
            cem: CemConfig::default(),
        };
        match profile {
            // fewer, smaller batches: step harder and start with less action
            // noise so the clamped controls still see exploration
            Profile::Desk => Self {
                ppo: PpoConfig {
                    lr: 1e-3,
                    init_log_std: -1.0,
                    ..PpoConfig::default()
                },
                ..base
            },
            Profile::Full => Self {
                epochs: 1000,
                n_envs: 512,
                hidden: vec![512, 512, 512],
                sampler: SamplerConfig::default(),
                eval: EvalConfig {
                    n_init: 512,
                    n_candidates: 512,
                    mcmc_fraction: 0.5,
                },
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.n_envs == 0 {
            return Err(Error::Config("n_envs must be at least 1".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        if self.ppo.epochs == 0 || self.ppo.minibatches == 0 {
            return Err(Error::Config(
                "ppo epochs and minibatches must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.eval.mcmc_fraction)
            || self.eval.n_init == 0
            || self.eval.n_candidates == 0
        {
            return Err(Error::Config(
                "eval needs n_init, n_candidates >= 1 and mcmc_fraction in [0, 1]".into(),
            ));
        }
        self.sampler.validate()?;
        self.cem.validate()?;
        Ok(())
    }

    /// Overlays the keys present in a TOML document onto this config.
    pub fn merge_toml(&mut self, text: &str) -> Result<()> {
        let overlay: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))?;
        let mut base = toml::Table::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        merge_tables(&mut base, overlay);
        *self = base
            .try_into()
            .map_err(|e| Error::Config(format!("config file: {e}")))?;
        Ok(())
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(
            serde_json::to_vec(self).expect("config serializes"),
        ))
    }

    pub fn load_task(&self) -> Result<Task> {
        Ok(Task::new(catalog::resolve(&self.scene)?)?)
    }
}

fn merge_tables(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Runs `f` on a one-thread pool when `single` is set, otherwise on the
/// global pool. Results are identical either way; this only pins the schedule.
pub fn with_threads<T: Send>(single: bool, f: impl FnOnce() -> T + Send) -> T {
    if single {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("thread pool")
            .install(f)
    } else {
        f()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Tgpo,
    Cem,
}

pub const CHECKPOINT_FORMAT: &str = "tgpo-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: PolicyKind,
    pub scene: String,
    pub task_hash: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub fields: StateFields,
    /// Assignment used by policies that do not condition on one.
    pub fixed_assignment: Option<TimeAssignment>,
    pub epochs: usize,
    pub policy: GaussianPolicy,
    pub critic: Mlp,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format {} v{}",
                c.format, c.version
            )));
        }
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the serialized checkpoint.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json()))
    }

    pub fn check_task(&self, task: &Task) -> Result<()> {
        if self.task_hash != task.scene.hash() {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained on scene `{}` ({}) but `{}` ({}) was given",
                self.scene,
                &self.task_hash[..12.min(self.task_hash.len())],
                task.scene.name,
                &task.scene.hash()[..12]
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate() {
        RunConfig::for_profile(Profile::Desk).validate().unwrap();
        RunConfig::for_profile(Profile::Full).validate().unwrap();
        assert_eq!(
            RunConfig::for_profile(Profile::Full).hidden,
            vec![512, 512, 512]
        );
    }

    #[test]
    fn toml_overlay_keeps_unmentioned_keys() {
        let mut c = RunConfig::default();
        c.merge_toml("epochs = 7\n[reward]\nlambda_inv = -1.5\n[sampler]\neta_uniform = 1.0\neta_mcmc = 0.0\neta_elite = 0.0\n")
            .unwrap();
        assert_eq!(c.epochs, 7);
        assert_eq!(c.reward.lambda_inv, -1.5);
        assert_eq!(c.reward.lambda_progress, 20.0);
        assert_eq!(c.n_envs, 128);
        c.validate().unwrap();
        assert!(c.merge_toml("epochs = \"many\"").is_err());
    }
}
