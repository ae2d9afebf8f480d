//! The augmented MDP: subgoal progress, the entry/exit certificate, invariant
//! flags and the dense stage-wise reward.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::{decompose, DecomposeError, GroundedPlan, TaskSet, TimeAssignment};
use crate::env::SceneSpec;
use crate::stl::{self, Region, StlError, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error("episode is over (step {0})")]
    Done(usize),
    #[error("state has dimension {got}, expected {expected}")]
    StateDim { expected: usize, got: usize },
    #[error("{0} invariant constraints exceed the 64 supported by the flag bitmask")]
    TooManyInvariants(usize),
    #[error("io: {0}")]
    Io(String),
}

/// A scene together with its decomposition.
#[derive(Clone, Debug)]
pub struct Task {
    pub scene: SceneSpec,
    pub taskset: TaskSet,
}

impl Task {
    pub fn new(scene: SceneSpec) -> Result<Self, MdpError> {
        let taskset = decompose(&scene.formula)?;
        if taskset.invariants.len() > 64 {
            return Err(MdpError::TooManyInvariants(taskset.invariants.len()));
        }
        Ok(Self { scene, taskset })
    }

    pub fn horizon(&self) -> usize {
        self.scene.env.horizon
    }

    pub fn num_subgoals(&self) -> usize {
        self.taskset.subgoals.len()
    }

    pub fn num_invariants(&self) -> usize {
        self.taskset.invariants.len()
    }

    /// Grounds `a` and resolves every task's region.
    pub fn plan(&self, a: &TimeAssignment) -> Result<Plan, MdpError> {
        let grounded = self.taskset.ground(a, self.horizon())?;
        let region = |label: &str| {
            self.scene
                .regions
                .get(label)
                .cloned()
                .ok_or_else(|| StlError::UnknownPredicate(label.to_string()))
        };
        let goals = grounded
            .subgoals
            .iter()
            .map(|g| region(&g.label))
            .collect::<Result<_, _>>()?;
        let obstacles = grounded
            .invariants
            .iter()
            .map(|c| region(&c.label))
            .collect::<Result<_, _>>()?;
        Ok(Plan {
            grounded,
            goals,
            obstacles,
        })
    }

    /// Robustness of the task formula over a full trajectory.
    pub fn robustness(&self, traj: &Trajectory) -> Result<f64, MdpError> {
        Ok(stl::robustness(
            traj,
            0,
            &self.scene.formula,
            &self.scene.regions,
        )?)
    }
}

/// A grounded plan with its regions looked up.
#[derive(Clone, Debug)]
pub struct Plan {
    pub grounded: GroundedPlan,
    /// Region of each grounded subgoal, in plan order.
    pub goals: Vec<Region>,
    /// Region of each invariant constraint.
    pub obstacles: Vec<Region>,
}

impl Plan {
    pub fn assignment(&self) -> &TimeAssignment {
        &self.grounded.assignment
    }

    pub fn num_subgoals(&self) -> usize {
        self.goals.len()
    }

    pub fn num_invariants(&self) -> usize {
        self.obstacles.len()
    }

    /// Predicate value of subgoal `k` (in sorted order) at `x`.
    pub fn goal_value(&self, k: usize, x: &[f64]) -> Result<f64, StlError> {
        self.goals[k].value(x)
    }

    pub fn obstacle_value(&self, k: usize, x: &[f64]) -> Result<f64, StlError> {
        self.obstacles[k].value(x)
    }
}

/// `(x, tau, p_prev, p, r, chi)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    pub x: Vec<f64>,
    pub tau: usize,
    pub p_prev: usize,
    pub p: usize,
    pub r: u8,
    /// One flag per invariant constraint; `true` while unviolated.
    pub chi: Vec<bool>,
}

impl AugmentedState {
    pub fn chi_bitmask(&self) -> u64 {
        self.chi
            .iter()
            .enumerate()
            .fold(0, |m, (k, &c)| if c { m | (1 << k) } else { m })
    }

    pub fn all_flags_set(&self) -> bool {
        self.chi.iter().all(|&c| c)
    }

    /// Every subgoal certified and no invariant violated.
    pub fn accomplished(&self, num_subgoals: usize) -> bool {
        self.p == num_subgoals && self.all_flags_set()
    }
}

/// Next certificate value for the active subgoal with window `[lo, hi]`.
pub fn certificate(r: u8, lo: usize, hi: usize, tau_next: usize, mu: f64) -> u8 {
    if r == 2 {
        0
    } else if lo != hi && tau_next == lo && mu >= 0.0 {
        1
    } else if (r == 1 || lo == hi) && tau_next == hi && mu >= 0.0 {
        2
    } else {
        r
    }
}

/// Applies the certificate and flag updates for the state reached at step
/// `tau_next`; shared by reset and transition.
fn advance(
    plan: &Plan,
    x: Vec<f64>,
    tau_next: usize,
    p: usize,
    r: u8,
    chi: &[bool],
) -> Result<AugmentedState, StlError> {
    let r_next = if p < plan.num_subgoals() {
        let g = &plan.grounded.subgoals[p];
        certificate(r, g.start, g.end, tau_next, plan.goal_value(p, &x)?)
    } else if r == 2 {
        0
    } else {
        r
    };
    let p_next = p + usize::from(r_next == 2);
    let mut chi_next = chi.to_vec();
    for (k, c) in plan.grounded.invariants.iter().enumerate() {
        if chi_next[k]
            && c.start <= tau_next
            && tau_next <= c.end
            && plan.obstacle_value(k, &x)? > 0.0
        {
            chi_next[k] = false;
        }
    }
    Ok(AugmentedState {
        x,
        tau: tau_next,
        p_prev: p,
        p: p_next,
        r: r_next,
        chi: chi_next,
    })
}

/// Initial augmented state, with the step-0 membership checks applied so a
/// subgoal or violation at step 0 registers.
pub fn reset(plan: &Plan, x0: Vec<f64>) -> Result<AugmentedState, MdpError> {
    let chi = vec![true; plan.num_invariants()];
    Ok(advance(plan, x0, 0, 0, 0, &chi)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventMode {
    /// Fires on the transition where the event first happens.
    Once,
    /// Fires on every step while the condition holds.
    Persistent,
}

/// Which reward terms are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub dist: bool,
    pub progress: bool,
    pub success: bool,
    pub inv: bool,
    pub robustness: bool,
}

impl RewardTerms {
    pub const ALL: RewardTerms = RewardTerms {
        dist: true,
        progress: true,
        success: true,
        inv: true,
        robustness: true,
    };
    pub const STL_ONLY: RewardTerms = RewardTerms {
        dist: false,
        progress: false,
        success: false,
        inv: false,
        robustness: true,
    };

    /// Comma-separated term names (`dist,progress,success,inv,stl`), or `all` / `stl-only`.
    pub fn parse(text: &str) -> Result<Self, String> {
        match text.trim() {
            "all" | "full" => return Ok(Self::ALL),
            "stl-only" | "stl" => return Ok(Self::STL_ONLY),
            _ => {}
        }
        let mut t = RewardTerms {
            dist: false,
            progress: false,
            success: false,
            inv: false,
            robustness: false,
        };
        for name in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "dist" => t.dist = true,
                "progress" => t.progress = true,
                "success" => t.success = true,
                "inv" => t.inv = true,
                "stl" | "robustness" => t.robustness = true,
                other => return Err(format!("unknown reward term `{other}`")),
            }
        }
        Ok(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub lambda_dist: f64,
    pub lambda_progress: f64,
    pub lambda_success: f64,
    pub lambda_inv: f64,
    /// Weight of the final-step robustness bonus.
    pub lambda_rho: f64,
    pub terms: RewardTerms,
    pub inv_penalty_mode: EventMode,
    pub success_mode: EventMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lambda_dist: 0.5,
            lambda_progress: 20.0,
            lambda_success: 20.0,
            lambda_inv: -3.0,
            lambda_rho: 1.0,
            terms: RewardTerms::ALL,
            inv_penalty_mode: EventMode::Once,
            success_mode: EventMode::Once,
        }
    }
}

/// Unweighted reward terms of one transition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub dist: f64,
    pub progress: f64,
    pub success: f64,
    pub inv: f64,
    /// Robustness of the whole trajectory; nonzero only on the final step.
    pub robustness: f64,
}

impl RewardBreakdown {
    pub fn total(&self, cfg: &RewardConfig) -> f64 {
        let t = &cfg.terms;
        let on = |b: bool, w: f64, v: f64| if b { w * v } else { 0.0 };
        on(t.dist, cfg.lambda_dist, self.dist)
            + on(t.progress, cfg.lambda_progress, self.progress)
            + on(t.success, cfg.lambda_success, self.success)
            + on(t.inv, cfg.lambda_inv, self.inv)
            + on(t.robustness, cfg.lambda_rho, self.robustness)
    }
}

/// Stage-wise reward of `prev -> next`, without the final robustness bonus.
pub fn reward_terms(
    prev: &AugmentedState,
    next: &AugmentedState,
    plan: &Plan,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown, StlError> {
    let n = plan.num_subgoals();
    let dist = if next.p < n {
        plan.goal_value(next.p, &next.x)?
    } else {
        0.0
    };
    let progress = if next.p_prev != next.p { 1.0 } else { 0.0 };
    let success = match cfg.success_mode {
        EventMode::Once => next.accomplished(n) && !prev.accomplished(n),
        EventMode::Persistent => next.accomplished(n),
    };
    let inv = match cfg.inv_penalty_mode {
        EventMode::Once => prev
            .chi
            .iter()
            .zip(&next.chi)
            .filter(|(&a, &b)| a && !b)
            .count(),
        EventMode::Persistent => next.chi.iter().filter(|&&c| !c).count(),
    };
    Ok(RewardBreakdown {
        dist,
        progress,
        success: if success { 1.0 } else { 0.0 },
        inv: inv as f64,
        robustness: 0.0,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: AugmentedState,
    pub reward: f64,
    pub breakdown: RewardBreakdown,
    pub done: bool,
}

/// One transition of the augmented MDP under control `u` (clamped to the
/// environment's bounds). The final-step robustness bonus needs the whole
/// trajectory and is added by [`Episode`].
pub fn transition(
    s: &AugmentedState,
    u: &[f64],
    plan: &Plan,
    task: &Task,
    cfg: &RewardConfig,
) -> Result<StepOutcome, MdpError> {
    let horizon = task.horizon();
    if s.tau >= horizon {
        return Err(MdpError::Done(s.tau));
    }
    let x = task.scene.env.step(&s.x, u);
    let next = advance(plan, x, s.tau + 1, s.p, s.r, &s.chi)?;
    let breakdown = reward_terms(s, &next, plan, cfg)?;
    let done = next.tau == horizon;
    Ok(StepOutcome {
        reward: breakdown.total(cfg),
        breakdown,
        done,
        state: next,
    })
}

/// A full episode: the augmented state, its trajectory and running totals.
#[derive(Clone, Debug)]
pub struct Episode<'a> {
    task: &'a Task,
    plan: Plan,
    cfg: &'a RewardConfig,
    state: AugmentedState,
    states: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    progress_events: usize,
    success_events: usize,
    robustness: Option<f64>,
}

impl<'a> Episode<'a> {
    pub fn new(
        task: &'a Task,
        plan: Plan,
        cfg: &'a RewardConfig,
        x0: Vec<f64>,
    ) -> Result<Self, MdpError> {
        let dim = task.scene.env.state_dim();
        if x0.len() != dim {
            return Err(MdpError::StateDim {
                expected: dim,
                got: x0.len(),
            });
        }
        let state = reset(&plan, x0)?;
        let mut states = Vec::with_capacity(task.horizon() + 1);
        states.push(state.x.clone());
        let progress_events = usize::from(state.p != state.p_prev);
        Ok(Self {
            task,
            plan,
            cfg,
            state,
            states,
            rewards: Vec::new(),
            progress_events,
            success_events: 0,
            robustness: None,
        })
    }

    pub fn state(&self) -> &AugmentedState {
        &self.state
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn task(&self) -> &Task {
        self.task
    }

    pub fn is_done(&self) -> bool {
        self.state.tau >= self.task.horizon()
    }

    pub fn step(&mut self, u: &[f64]) -> Result<StepOutcome, MdpError> {
        let mut out = transition(&self.state, u, &self.plan, self.task, self.cfg)?;
        self.states.push(out.state.x.clone());
        if out.done {
            let traj = Trajectory::new(std::mem::take(&mut self.states), self.task.scene.env.dt)?;
            let rho = self.task.robustness(&traj)?;
            self.states = traj.states().to_vec();
            self.robustness = Some(rho);
            out.breakdown.robustness = rho;
            out.reward = out.breakdown.total(self.cfg);
        }
        self.progress_events += usize::from(out.state.p != out.state.p_prev);
        self.success_events += usize::from(out.breakdown.success > 0.0);
        self.rewards.push(out.reward);
        self.state = out.state.clone();
        Ok(out)
    }

    /// Trajectory robustness, available once the episode is over.
    pub fn robustness(&self) -> Option<f64> {
        self.robustness
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Steps (including reset) on which a subgoal was completed.
    pub fn progress_events(&self) -> usize {
        self.progress_events
    }

    pub fn success_events(&self) -> usize {
        self.success_events
    }

    pub fn trajectory(&self) -> Result<Trajectory, StlError> {
        Trajectory::new(self.states.clone(), self.task.scene.env.dt)
    }
}

/// Per-step trace row for CSV export.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub x: Vec<f64>,
    pub p: usize,
    pub r: u8,
    pub chi: u64,
    pub reward: f64,
}

impl TraceRow {
    pub fn new(s: &AugmentedState, reward: f64) -> Self {
        Self {
            step: s.tau,
            x: s.x.clone(),
            p: s.p,
            r: s.r,
            chi: s.chi_bitmask(),
            reward,
        }
    }
}

/// Writes `t,x0..,p,r,chi_bitmask,reward` with `t` in seconds.
pub fn write_trace<W: Write>(rows: &[TraceRow], dt: f64, out: W) -> Result<(), MdpError> {
    let mut w = csv::Writer::from_writer(out);
    let dim = rows.first().map_or(0, |r| r.x.len());
    let mut header = vec!["t".to_string()];
    header.extend((0..dim).map(|i| format!("x{i}")));
    header.extend(["p", "r", "chi_bitmask", "reward"].map(String::from));
    let io = |e: csv::Error| MdpError::Io(e.to_string());
    w.write_record(&header).map_err(io)?;
    for row in rows {
        let mut rec = vec![(row.step as f64 * dt).to_string()];
        rec.extend(row.x.iter().map(f64::to_string));
        rec.extend([
            row.p.to_string(),
            row.r.to_string(),
            row.chi.to_string(),
            row.reward.to_string(),
        ]);
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| MdpError::Io(e.to_string()))
}
