use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::CriticScorer;
use super::{Checkpoint, EvalConfig, PolicyKind};
use crate::decompose::TimeAssignment;
use crate::env::SceneSpec;
use crate::grounding::{mh_chains, SamplerConfig};
use crate::learner::{observe, rollout, TaskEnv};
use crate::mdp::{Episode, Task, TraceRow};
use crate::stl::{self, Trajectory};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scene: String,
    pub initial_states: Vec<Vec<f64>>,
    pub success: Vec<bool>,
    pub robustness: Vec<f64>,
    pub assignments: Vec<TimeAssignment>,
    /// Critic value of the chosen assignment at the initial state.
    pub critic_values: Vec<f64>,
    pub success_rate: f64,
    pub wall_clock_s: f64,
}

impl EvalReport {
    pub fn mean_robustness(&self) -> f64 {
        self.robustness.iter().sum::<f64>() / self.robustness.len().max(1) as f64
    }

    /// `init,success,robustness,critic,assignment` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("init,success,robustness,critic,assignment\n");
        for i in 0..self.success.len() {
            s.push_str(&format!(
                "{i},{},{},{},{}\n",
                u8::from(self.success[i]),
                self.robustness[i],
                self.critic_values[i],
                join(self.assignments[i].values())
            ));
        }
        s
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

/// Deterministic rollouts of a checkpoint's policy, one per (assignment,
/// initial state) pair; returns each trajectory's robustness.
pub(crate) fn rollout_robustness(
    ckpt: &Checkpoint,
    task: &Task,
    assignments: &[TimeAssignment],
    x0s: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let reward = &ckpt.config.reward;
    let mut envs = assignments
        .iter()
        .zip(x0s)
        .map(|(a, x0)| {
            Ok(TaskEnv::new(
                task,
                task.plan(a)?,
                reward,
                x0.clone(),
                ckpt.fields,
            )?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rngs: Vec<ChaCha8Rng> = (0..envs.len())
        .map(|i| ChaCha8Rng::seed_from_u64(i as u64))
        .collect();
    let batch = rollout(&ckpt.policy, &ckpt.critic, &mut envs, &mut rngs, true)?;
    let mut out = vec![f64::NEG_INFINITY; envs.len()];
    for e in &batch.episodes {
        out[e.env] = e.score.unwrap_or(f64::NEG_INFINITY);
    }
    Ok(out)
}

/// One deterministic episode with per-step rows (the initial state first,
/// with reward 0) and the trajectory's robustness.
pub fn trace(
    ckpt: &Checkpoint,
    task: &Task,
    a: &TimeAssignment,
    x0: Vec<f64>,
) -> Result<(Vec<TraceRow>, f64)> {
    let mut ep = Episode::new(task, task.plan(a)?, &ckpt.config.reward, x0)?;
    let mut rows = vec![TraceRow::new(ep.state(), 0.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut obs = Vec::new();
    while !ep.is_done() {
        obs.clear();
        observe(task, ep.state(), a, ckpt.fields, &mut obs);
        let (action, _) = ckpt.policy.act(&obs, &mut rng, true)?;
        let u = task.scene.env.control_from_action(&action);
        let out = ep.step(&u)?;
        rows.push(TraceRow::new(&out.state, out.reward));
    }
    let rho = ep.robustness().expect("finished episode has a robustness");
    Ok((rows, rho))
}

/// Picks one assignment per initial state by critic value alone: MH chains
/// seeded at that state plus uniform draws, then the argmax.
fn select_assignments(
    ckpt: &Checkpoint,
    task: &Task,
    x0s: &[Vec<f64>],
    cfg: &EvalConfig,
    sampler: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<TimeAssignment>, Vec<f64>)> {
    let horizon = task.horizon();
    let mut scorer = CriticScorer {
        critic: &ckpt.critic,
        task,
        fields: ckpt.fields,
        x0s,
    };
    let n = x0s.len();
    let fixed = match (&ckpt.fixed_assignment, task.taskset.num_variables()) {
        (Some(a), _) => Some(a.clone()),
        (None, 0) => Some(TimeAssignment::empty()),
        _ => None,
    };
    if let Some(a) = fixed {
        let all = vec![a; n];
        let slots: Vec<usize> = (0..n).collect();
        let values = scorer.values(&slots, &all);
        return Ok((all, values));
    }

    let n_mcmc = (cfg.mcmc_fraction * cfg.n_candidates as f64).round() as usize;
    let n_uniform = cfg.n_candidates - n_mcmc.min(cfg.n_candidates);
    let mut best: Vec<Option<(TimeAssignment, f64)>> = vec![None; n];
    let offer =
        |i: usize, a: TimeAssignment, v: f64, best: &mut Vec<Option<(TimeAssignment, f64)>>| {
            if best[i].as_ref().is_none_or(|(_, b)| v > *b) {
                best[i] = Some((a, v));
            }
        };
    if n_mcmc > 0 {
        let slots: Vec<usize> = (0..n)
            .flat_map(|i| std::iter::repeat_n(i, n_mcmc))
            .collect();
        let run = mh_chains(
            &mut scorer,
            &task.taskset,
            horizon,
            &slots,
            sampler.mcmc_steps,
            sampler.warmup,
            false,
            rng,
        )?;
        for ((&i, a), v) in slots.iter().zip(run.best).zip(run.best_values) {
            offer(i, a, v, &mut best);
        }
    }
    if n_uniform > 0 {
        let slots: Vec<usize> = (0..n)
            .flat_map(|i| std::iter::repeat_n(i, n_uniform))
            .collect();
        let cands = slots
            .iter()
            .map(|_| task.taskset.sample_uniform(horizon, rng))
            .collect::<Result<Vec<_>, _>>()
            .map_err(crate::grounding::GroundingError::from)?;
        let values = scorer.values(&slots, &cands);
        for ((&i, a), v) in slots.iter().zip(cands).zip(values) {
            offer(i, a, v, &mut best);
        }
    }
    Ok(best
        .into_iter()
        .map(|b| b.expect("at least one candidate per initial state"))
        .unzip())
}

/// Success rate over `cfg.n_init` sampled initial states. Each state gets one
/// deterministic rollout under the assignment its critic rates highest; the
/// STL score is never used for selection.
pub fn evaluate(
    ckpt: &Checkpoint,
    task: &Task,
    cfg: &EvalConfig,
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<EvalReport> {
    ckpt.check_task(task)?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0s: Vec<Vec<f64>> = (0..cfg.n_init)
        .map(|_| task.scene.env.sample_initial(&mut rng))
        .collect();
    let (assignments, critic_values) =
        select_assignments(ckpt, task, &x0s, cfg, sampler, &mut rng)?;
    let robustness = rollout_robustness(ckpt, task, &assignments, &x0s)?;
    let success: Vec<bool> = robustness.iter().map(|&r| r >= 0.0).collect();
    let success_rate = success.iter().filter(|&&s| s).count() as f64 / success.len() as f64;
    Ok(EvalReport {
        scene: task.scene.name.clone(),
        initial_states: x0s,
        success,
        robustness,
        assignments,
        critic_values,
        success_rate,
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub var_i: usize,
    pub var_j: usize,
    pub x0: Vec<f64>,
    pub values_i: Vec<usize>,
    pub values_j: Vec<usize>,
    /// `grid[a][b]` is the critic value at `t_i = values_i[a]`, `t_j = values_j[b]`.
    pub grid: Vec<Vec<f64>>,
    pub feasible: Vec<Vec<bool>>,
}

impl Heatmap {
    /// Long format: `t_i,t_j,value,feasible`.
    pub fn to_csv(&self) -> String {
        let mut s = format!("t{},t{},value,feasible\n", self.var_i, self.var_j);
        for (a, ti) in self.values_i.iter().enumerate() {
            for (b, tj) in self.values_j.iter().enumerate() {
                s.push_str(&format!(
                    "{ti},{tj},{},{}\n",
                    self.grid[a][b],
                    u8::from(self.feasible[a][b])
                ));
            }
        }
        s
    }
}

/// Critic value over the full domains of variables `i` and `j` at one
/// sampled initial state, the other variables held at their midpoints.
pub fn heatmap(ckpt: &Checkpoint, task: &Task, i: usize, j: usize, seed: u64) -> Result<Heatmap> {
    ckpt.check_task(task)?;
    let nv = task.taskset.num_variables();
    if nv < 2 {
        return Err(Error::Config(format!(
            "heatmap needs two time variables, the task has {nv}"
        )));
    }
    if i == j || i >= nv || j >= nv {
        return Err(Error::Config(format!(
            "variables {i} and {j} must be distinct and below {nv}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = task.scene.env.sample_initial(&mut rng);
    let dom = task.taskset.domains();
    let values_i: Vec<usize> = (dom[i].lo..=dom[i].hi).collect();
    let values_j: Vec<usize> = (dom[j].lo..=dom[j].hi).collect();
    let base = task.taskset.midpoint();
    let mut cells = Vec::with_capacity(values_i.len() * values_j.len());
    for &ti in &values_i {
        for &tj in &values_j {
            let mut a = base.clone();
            a.0[i] = ti;
            a.0[j] = tj;
            cells.push(a);
        }
    }
    let x0s = [x0.clone()];
    let scorer = CriticScorer {
        critic: &ckpt.critic,
        task,
        fields: ckpt.fields,
        x0s: &x0s,
    };
    let values = scorer.values(&vec![0; cells.len()], &cells);
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!("critic produced {v}")));
    }
    let horizon = task.horizon();
    let w = values_j.len();
    let grid = values.chunks(w).map(<[f64]>::to_vec).collect();
    let feasible = cells
        .chunks(w)
        .map(|row| {
            row.iter()
                .map(|a| task.taskset.is_feasible(a, horizon))
                .collect()
        })
        .collect();
    Ok(Heatmap {
        var_i: i,
        var_j: j,
        x0,
        values_i,
        values_j,
        grid,
        feasible,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub critic: f64,
    pub robustness: f64,
    /// Success rate among the rows whose critic value is at least this one.
    pub success_rate_above: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Correlation {
    /// Sorted by critic value, descending.
    pub rows: Vec<CorrelationRow>,
    pub spearman: f64,
}

impl Correlation {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("critic,robustness,success_rate_above\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{}\n",
                r.critic, r.robustness, r.success_rate_above
            ));
        }
        s
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut end = k;
        while end + 1 < idx.len() && v[idx[end + 1]] == v[idx[k]] {
            end += 1;
        }
        let avg = (k + end) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=end] {
            r[i] = avg;
        }
        k = end + 1;
    }
    r
}

/// Spearman rank correlation (ties get average ranks). NaN when either
/// side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    cov / (va * vb).sqrt()
}

/// `n` random (initial state, assignment) pairs: the critic's value against
/// the robustness of a deterministic rollout.
pub fn correlate(ckpt: &Checkpoint, task: &Task, n: usize, seed: u64) -> Result<Correlation> {
    ckpt.check_task(task)?;
    if n == 0 {
        return Err(Error::Config("correlate needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = task.horizon();
    let mut x0s = Vec::with_capacity(n);
    let mut assignments = Vec::with_capacity(n);
    for _ in 0..n {
        x0s.push(task.scene.env.sample_initial(&mut rng));
        let a = match (&ckpt.fixed_assignment, ckpt.kind) {
            (Some(a), PolicyKind::Cem) => a.clone(),
            _ => task
                .taskset
                .sample_uniform(horizon, &mut rng)
                .map_err(crate::grounding::GroundingError::from)?,
        };
        assignments.push(a);
    }
    let slots: Vec<usize> = (0..n).collect();
    let critic = CriticScorer {
        critic: &ckpt.critic,
        task,
        fields: ckpt.fields,
        x0s: &x0s,
    }
    .values(&slots, &assignments);
    let robustness = rollout_robustness(ckpt, task, &assignments, &x0s)?;
    let spearman = spearman(&critic, &robustness);
    let mut pairs: Vec<(f64, f64)> = critic.into_iter().zip(robustness).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut hits = 0usize;
    let rows = pairs
        .into_iter()
        .enumerate()
        .map(|(k, (c, r))| {
            hits += usize::from(r >= 0.0);
            CorrelationRow {
                critic: c,
                robustness: r,
                success_rate_above: hits as f64 / (k + 1) as f64,
            }
        })
        .collect();
    Ok(Correlation { rows, spearman })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub robustness: f64,
    pub satisfied: bool,
}

impl std::fmt::Display for MonitorReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "rho = {} {}",
            self.robustness,
            if self.satisfied { "SAT" } else { "UNSAT" }
        )
    }
}

/// Robustness of a recorded trajectory against a scene's formula.
pub fn monitor(traj: &Trajectory, scene: &SceneSpec) -> Result<MonitorReport> {
    let dim = scene.env.state_dim();
    if traj.dim() != dim {
        return Err(Error::Config(format!(
            "trajectory has {} state columns, the scene expects {dim}",
            traj.dim()
        )));
    }
    let robustness = stl::robustness(traj, 0, &scene.formula, &scene.regions)
        .map_err(crate::mdp::MdpError::from)?;
    Ok(MonitorReport {
        robustness,
        satisfied: robustness >= 0.0,
    })
}

/// Reads a trajectory CSV with a header row. Columns named `x0`, `x1`, ...
/// are the state; without such columns every column is.
pub fn read_trajectory(text: &str, dt: f64) -> Result<Trajectory> {
    let bad = |msg: String| Error::Config(format!("trajectory csv: {msg}"));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let named: Vec<usize> = (0..header.len())
        .filter(|&i| {
            header[i]
                .strip_prefix('x')
                .is_some_and(|d| d.parse::<usize>().is_ok())
        })
        .collect();
    let cols = if named.is_empty() {
        (0..header.len()).collect()
    } else {
        named
    };
    let mut states = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let row = cols
            .iter()
            .map(|&c| {
                rec.get(c)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| bad(format!("row {}: column {c} is not a number", line + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        states.push(row);
    }
    Trajectory::new(states, dt).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_ranks() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 25.0, 100.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert!(spearman(&[1.0, 1.0], &[0.0, 2.0]).is_nan());
    }

    #[test]
    fn monitor_region_sitting() {
        let scene = SceneSpec::from_toml(
            "name = \"m\"\nstl = \"F[0,10](A)\"\n[env]\ndynamics = \"linear\"\nhorizon = 10\n\
             [[regions]]\nlabel = \"A\"\nshape = \"circle\"\ncenter = [0.0, 0.0]\nradius = 1.0\n",
        )
        .unwrap();
        let traj = Trajectory::new(vec![vec![0.0, 0.0]; 11], 0.1).unwrap();
        let r = monitor(&traj, &scene).unwrap();
        assert!(r.satisfied && (r.robustness - 1.0).abs() < 1e-12, "{r}");
        let never = SceneSpec::from_toml(&scene_with("G[0,10](!A)")).unwrap();
        assert!(!monitor(&traj, &never).unwrap().satisfied);
        let flat = Trajectory::new(vec![vec![0.0]; 11], 0.1).unwrap();
        assert!(monitor(&flat, &scene).is_err());
    }

    fn scene_with(stl: &str) -> String {
        format!(
            "name = \"m\"\nstl = \"{stl}\"\n[env]\ndynamics = \"linear\"\nhorizon = 10\n\
             [[regions]]\nlabel = \"A\"\nshape = \"circle\"\ncenter = [0.0, 0.0]\nradius = 1.0\n"
        )
    }
}
