use std::path::Path;

use tgpo::decompose::TimeAssignment;
use tgpo::harness::{
    self, cem_train, correlate, evaluate, heatmap, monitor, read_trajectory, spearman, trace,
    Checkpoint, PolicyKind, RunConfig,
};
use tgpo::mdp::{write_trace, Task};

/// Point mass that has to visit two nearby discs in order.
const TWO_STOPS: &str = r#"
name = "two-stops"
stl = "F[3,9](A) & F[11,19](B) & G[0,20](!C)"

[env]
dynamics = "linear"
dt = 0.2
horizon = 20
init_lower = [-0.3, -0.3]
init_upper = [0.3, 0.3]

[[regions]]
label = "A"
shape = "circle"
center = [1.0, 0.0]
radius = 0.5

[[regions]]
label = "B"
shape = "circle"
center = [1.0, 1.5]
radius = 0.5

[[regions]]
label = "C"
shape = "box"
lower = [-2.0, 3.0]
upper = [2.0, 4.0]
"#;

fn scene_file(dir: &Path) -> String {
    let path = dir.join("two-stops.toml");
    std::fs::write(&path, TWO_STOPS).unwrap();
    path.to_string_lossy().into_owned()
}

fn small_config(scene: String) -> RunConfig {
    let mut cfg = RunConfig {
        scene,
        seed: 7,
        epochs: 60,
        n_envs: 64,
        hidden: vec![32, 32],
        single_thread: true,
        ..RunConfig::default()
    };
    cfg.eval.n_init = 64;
    cfg.eval.n_candidates = 16;
    cfg.sampler.mcmc_steps = 20;
    cfg.sampler.warmup = 5;
    cfg
}

#[test]
fn point_mass_learns_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(scene_file(dir.path()));
    let task = cfg.load_task().unwrap();
    assert_eq!(task.taskset.num_variables(), 2);
    let out = harness::train_to_dir(&cfg, &task, dir.path()).unwrap();

    // metrics file has one row per epoch and learning moved the return up
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), cfg.epochs + 1);
    let first = &out.metrics[..5];
    let last = &out.metrics[out.metrics.len() - 5..];
    let avg =
        |m: &[harness::EpochMetrics]| m.iter().map(|e| e.mean_return).sum::<f64>() / m.len() as f64;
    assert!(avg(last) > avg(first), "{} -> {}", avg(first), avg(last));
    assert!(!out.elite.is_empty());

    let ckpt = Checkpoint::load(dir.path().join("checkpoint.json")).unwrap();
    assert_eq!(ckpt.kind, PolicyKind::Tgpo);
    assert_eq!(ckpt.digest(), out.checkpoint.digest());
    assert_eq!(
        Checkpoint::from_json(&ckpt.to_json()).unwrap().digest(),
        ckpt.digest()
    );

    let report = evaluate(&ckpt, &task, &cfg.eval, &cfg.sampler, 11).unwrap();
    assert_eq!(report.success.len(), cfg.eval.n_init);
    assert_eq!(report.to_csv().lines().count(), cfg.eval.n_init + 1);
    assert!(
        report.success_rate >= 0.8,
        "point mass success {}",
        report.success_rate
    );
    for a in &report.assignments {
        assert!(task.taskset.is_feasible(a, task.horizon()));
    }
    // same seed, same report
    let again = evaluate(&ckpt, &task, &cfg.eval, &cfg.sampler, 11).unwrap();
    assert_eq!(again.robustness, report.robustness);

    // a recorded trace re-monitors to the rollout's robustness
    let (rows, rho) = trace(
        &ckpt,
        &task,
        &report.assignments[0],
        report.initial_states[0].clone(),
    )
    .unwrap();
    assert_eq!(rows.len(), task.horizon() + 1);
    assert!((rho - report.robustness[0]).abs() < 1e-9);
    let mut buf = Vec::new();
    write_trace(&rows, task.scene.env.dt, &mut buf).unwrap();
    let traj = read_trajectory(std::str::from_utf8(&buf).unwrap(), task.scene.env.dt).unwrap();
    let m = monitor(&traj, &task.scene).unwrap();
    assert!(
        (m.robustness - rho).abs() < 1e-9,
        "{} vs {rho}",
        m.robustness
    );
    assert_eq!(m.satisfied, rho >= 0.0);

    let hm = heatmap(&ckpt, &task, 0, 1, 3).unwrap();
    let d = task.taskset.domains();
    assert_eq!(hm.values_i.len(), d[0].span() + 1);
    assert_eq!(hm.values_j.len(), d[1].span() + 1);
    assert_eq!(hm.grid.len(), hm.values_i.len());
    assert!(hm.grid.iter().all(|r| r.len() == hm.values_j.len()));
    assert_eq!(
        hm.to_csv().lines().count(),
        hm.values_i.len() * hm.values_j.len() + 1
    );
    assert!(heatmap(&ckpt, &task, 0, 5, 3).is_err());

    let corr = correlate(&ckpt, &task, 50, 4).unwrap();
    assert_eq!(corr.rows.len(), 50);
    assert!(corr.spearman.is_nan() || corr.spearman.abs() <= 1.0);
    assert_eq!(corr.to_csv().lines().count(), 51);
}

#[test]
fn checkpoint_refuses_another_task() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(scene_file(dir.path()));
    cfg.epochs = 1;
    cfg.n_envs = 8;
    let task = cfg.load_task().unwrap();
    let out = harness::train(&cfg, &task, None, &mut |_| Ok(())).unwrap();
    let other = Task::new(tgpo::env::catalog::load("linear-stl06").unwrap()).unwrap();
    assert!(evaluate(&out.checkpoint, &other, &cfg.eval, &cfg.sampler, 0).is_err());
    assert!(Checkpoint::from_json("{\"format\": \"something else\"}").is_err());
}

#[test]
fn cem_improves_fitness() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(scene_file(dir.path()));
    cfg.cem.population = 48;
    cfg.cem.elites = 8;
    cfg.cem.iterations = 12;
    cfg.cem.init_std = 0.3;
    let task = cfg.load_task().unwrap();
    let out = cem_train(&cfg, &task, &mut |_| Ok(())).unwrap();
    assert_eq!(out.iterations.len(), 12);
    assert_eq!(out.checkpoint.kind, PolicyKind::Cem);
    let fixed = out.checkpoint.fixed_assignment.clone().unwrap();
    assert_eq!(fixed, task.taskset.midpoint());
    // initial states are redrawn each iteration, so compare averages
    let avg = |its: &[harness::CemIteration]| {
        its.iter().map(|i| i.mean_fitness).sum::<f64>() / its.len() as f64
    };
    let (first, last) = (avg(&out.iterations[..3]), avg(&out.iterations[9..]));
    assert!(last > first, "{first} -> {last}");
    assert!(out.iterations[11].mean_std < out.iterations[0].mean_std);
    // the fixed plan is used whatever the evaluation config asks for
    let report = evaluate(&out.checkpoint, &task, &cfg.eval, &cfg.sampler, 1).unwrap();
    assert!(report.assignments.iter().all(|a| *a == fixed));
}

#[test]
fn config_overlay_and_validation() {
    let mut cfg = RunConfig::default();
    cfg.merge_toml("seed = 9\n[ppo]\nepochs = 3\n[eval]\nn_init = 10\n")
        .unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.ppo.epochs, 3);
    assert_eq!(cfg.eval.n_init, 10);
    // untouched keys keep their values
    assert_eq!(cfg.n_envs, RunConfig::default().n_envs);
    cfg.validate().unwrap();
    assert!(cfg.merge_toml("seed = \"nine\"").is_err());

    let mut bad = RunConfig::default();
    bad.eval.mcmc_fraction = 1.5;
    assert!(bad.validate().is_err());
    bad = RunConfig {
        n_envs: 0,
        ..RunConfig::default()
    };
    assert!(bad.validate().is_err());
    assert_ne!(RunConfig::default().hash(), cfg.hash());
}

#[test]
fn spearman_of_monotone_maps() {
    let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
    let b: Vec<f64> = a.iter().map(|x| x.powi(3) - 4.0).collect();
    let c: Vec<f64> = a.iter().map(|x| -x.exp()).collect();
    assert!((spearman(&a, &b) - 1.0).abs() < 1e-12);
    assert!((spearman(&a, &c) + 1.0).abs() < 1e-12);
    assert!(spearman(&a, &[1.0; 20]).is_nan());
    let _ = TimeAssignment::empty();
}
