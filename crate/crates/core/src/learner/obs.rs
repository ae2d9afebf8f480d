use serde::{Deserialize, Serialize};

use super::{EpisodicEnv, LearnerError};
use crate::decompose::TimeAssignment;
use crate::mdp::{reset, AugmentedState, Episode, MdpError, Plan, RewardConfig, Task};

/// Which parts of the augmented state the networks see (the raw state is
/// always included).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateFields {
    /// `tau / T`.
    pub time: bool,
    /// `p / N_g` and `r / 2`.
    pub progress: bool,
    /// Invariant flags.
    pub flags: bool,
    /// Time assignment, each value scaled to `[0, 1]` over its domain.
    pub assignment: bool,
}

impl StateFields {
    pub const ALL: StateFields = StateFields {
        time: true,
        progress: true,
        flags: true,
        assignment: true,
    };

    /// `all`, or a comma-separated subset of `time,progress,flags,assignment`.
    pub fn parse(text: &str) -> Result<Self, String> {
        if text.trim() == "all" {
            return Ok(Self::ALL);
        }
        let mut f = StateFields {
            time: false,
            progress: false,
            flags: false,
            assignment: false,
        };
        for name in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "time" => f.time = true,
                "progress" => f.progress = true,
                "flags" => f.flags = true,
                "assignment" => f.assignment = true,
                other => return Err(format!("unknown state field `{other}`")),
            }
        }
        Ok(f)
    }
}

impl Default for StateFields {
    fn default() -> Self {
        Self::ALL
    }
}

pub fn obs_dim(task: &Task, fields: StateFields) -> usize {
    task.scene.env.state_dim()
        + usize::from(fields.time)
        + 2 * usize::from(fields.progress)
        + if fields.flags {
            task.num_invariants()
        } else {
            0
        }
        + if fields.assignment {
            task.taskset.num_variables()
        } else {
            0
        }
}

/// Appends the observation of `s` under assignment `a` to `out`.
pub fn observe(
    task: &Task,
    s: &AugmentedState,
    a: &TimeAssignment,
    fields: StateFields,
    out: &mut Vec<f64>,
) {
    task.scene.env.normalize_state(&s.x, out);
    if fields.time {
        out.push(s.tau as f64 / task.horizon() as f64);
    }
    if fields.progress {
        let n = task.num_subgoals();
        out.push(if n == 0 { 0.0 } else { s.p as f64 / n as f64 });
        out.push(s.r as f64 / 2.0);
    }
    if fields.flags {
        out.extend(s.chi.iter().map(|&c| if c { 1.0 } else { 0.0 }));
    }
    if fields.assignment {
        for (v, &t) in task.taskset.variables.iter().zip(a.values()) {
            out.push(if v.hi == v.lo {
                0.0
            } else {
                (t - v.lo) as f64 / (v.hi - v.lo) as f64
            });
        }
    }
}

/// Observation at step 0 for initial state `x0` under assignment `a`: the
/// critic input for scoring assignments. Assignments that do not ground skip
/// the step-0 checks, so the critic can still be queried everywhere.
pub fn initial_observation(
    task: &Task,
    x0: &[f64],
    a: &TimeAssignment,
    fields: StateFields,
) -> Vec<f64> {
    let s = task
        .plan(a)
        .and_then(|plan| reset(&plan, x0.to_vec()))
        .unwrap_or_else(|_| AugmentedState {
            x: x0.to_vec(),
            tau: 0,
            p_prev: 0,
            p: 0,
            r: 0,
            chi: vec![true; task.num_invariants()],
        });
    let mut out = Vec::with_capacity(obs_dim(task, fields));
    observe(task, &s, a, fields, &mut out);
    out
}

/// The augmented MDP as an [`EpisodicEnv`]: actions in `[-1, 1]^m` are
/// mapped onto the control box.
#[derive(Clone, Debug)]
pub struct TaskEnv<'a> {
    episode: Episode<'a>,
    fields: StateFields,
}

impl<'a> TaskEnv<'a> {
    pub fn new(
        task: &'a Task,
        plan: Plan,
        cfg: &'a RewardConfig,
        x0: Vec<f64>,
        fields: StateFields,
    ) -> Result<Self, MdpError> {
        Ok(Self {
            episode: Episode::new(task, plan, cfg, x0)?,
            fields,
        })
    }

    pub fn episode(&self) -> &Episode<'a> {
        &self.episode
    }
}

impl EpisodicEnv for TaskEnv<'_> {
    fn obs_dim(&self) -> usize {
        obs_dim(self.episode.task(), self.fields)
    }

    fn act_dim(&self) -> usize {
        self.episode.task().scene.env.control_dim()
    }

    fn observe(&self, out: &mut Vec<f64>) {
        let ep = &self.episode;
        observe(
            ep.task(),
            ep.state(),
            ep.plan().assignment(),
            self.fields,
            out,
        );
    }

    fn step(&mut self, action: &[f64]) -> Result<(f64, bool), LearnerError> {
        let u = self.episode.task().scene.env.control_from_action(action);
        let o = self.episode.step(&u)?;
        Ok((o.reward, o.done))
    }

    fn score(&self) -> Option<f64> {
        self.episode.robustness()
    }
}
