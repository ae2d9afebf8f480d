use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tgpo::decompose::decompose;
use tgpo::env::catalog;
use tgpo::harness::{self, Checkpoint, Profile, RunConfig};
use tgpo::learner::StateFields;
use tgpo::mdp::{write_trace, EventMode, RewardTerms, Task};

#[derive(Parser)]
#[command(
    name = "tgpo",
    version,
    about = "Temporal-grounded policy optimization for STL tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and critic with hybrid time-variable sampling.
    Train(RunArgs),
    /// Train the cross-entropy-method baseline.
    Cem(RunArgs),
    /// Success rate of a checkpoint over sampled initial states.
    Eval(EvalArgs),
    /// Print the subgoal/invariant table of a scene or formula.
    Decompose(DecomposeArgs),
    /// Robustness of a trajectory CSV against a scene's formula.
    Monitor(MonitorArgs),
    /// Critic values over two time variables.
    Heatmap(HeatmapArgs),
    /// Critic value against rollout robustness on random assignments.
    Correlate(CorrelateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Catalog scene name or path to a scene TOML.
    #[arg(long)]
    scene: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// desk | full
    #[arg(long, default_value = "desk")]
    profile: String,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    n_envs: Option<usize>,
    /// Output directory (default: $TGPO_OUT_DIR or `runs`, then <command>-<scene>-s<seed>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `all`, `stl-only`, or a list from dist,progress,success,inv,stl.
    #[arg(long)]
    reward_terms: Option<String>,
    /// `all` or a list from time,progress,flags,assignment.
    #[arg(long)]
    state_fields: Option<String>,
    /// `hybrid`, `uniform`, or `u/m/e` ratios.
    #[arg(long)]
    sampling_mix: Option<String>,
    /// once | persistent
    #[arg(long)]
    inv_penalty_mode: Option<String>,
    #[arg(long)]
    single_thread: bool,
    /// TOML file whose keys override both defaults and flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Defaults to the checkpoint's scene.
    #[arg(long)]
    scene: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n_init: Option<usize>,
    #[arg(long)]
    n_candidates: Option<usize>,
    /// Also write step traces of the first N evaluation episodes.
    #[arg(long, default_value_t = 0)]
    traces: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    single_thread: bool,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long, conflicts_with = "formula")]
    scene: Option<String>,
    /// A formula given directly.
    #[arg(long)]
    formula: Option<String>,
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct MonitorArgs {
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    scene: String,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    scene: Option<String>,
    /// Two variable indices, e.g. `0,1`.
    #[arg(long, default_value = "0,1")]
    vars: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CorrelateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    scene: Option<String>,
    #[arg(long, default_value_t = 4096)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn out_root() -> PathBuf {
    std::env::var_os("TGPO_OUT_DIR").map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn scene_stem(scene: &str) -> String {
    Path::new(scene)
        .file_stem()
        .map_or_else(|| scene.to_string(), |s| s.to_string_lossy().into_owned())
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let profile: Profile = self.profile.parse()?;
        let mut cfg = RunConfig::for_profile(profile);
        if let Some(s) = &self.scene {
            cfg.scene.clone_from(s);
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
            cfg.cem.iterations = e;
        }
        if let Some(n) = self.n_envs {
            cfg.n_envs = n;
        }
        if let Some(t) = &self.reward_terms {
            cfg.reward.terms = RewardTerms::parse(t).map_err(anyhow::Error::msg)?;
        }
        if let Some(f) = &self.state_fields {
            cfg.state_fields = StateFields::parse(f).map_err(anyhow::Error::msg)?;
        }
        if let Some(m) = &self.sampling_mix {
            cfg.sampler.set_mix(m)?;
        }
        if let Some(m) = &self.inv_penalty_mode {
            cfg.reward.inv_penalty_mode = match m.as_str() {
                "once" => EventMode::Once,
                "persistent" => EventMode::Persistent,
                other => bail!("unknown penalty mode `{other}` (once | persistent)"),
            };
        }
        cfg.single_thread |= self.single_thread;
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            cfg.merge_toml(&text)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, cmd: &str, cfg: &RunConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            out_root().join(format!("{cmd}-{}-s{}", scene_stem(&cfg.scene), cfg.seed))
        })
    }
}

fn load_checkpoint(path: &Path, scene: Option<&str>) -> Result<(Checkpoint, Task)> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    let task = Task::new(catalog::resolve(scene.unwrap_or(&ckpt.config.scene))?)?;
    ckpt.check_task(&task)?;
    Ok((ckpt, task))
}

fn default_out(out: Option<PathBuf>, checkpoint: &Path, file: &str) -> PathBuf {
    out.unwrap_or_else(|| checkpoint.parent().unwrap_or(Path::new(".")).join(file))
}

fn run_train(args: RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let task = cfg.load_task()?;
    let dir = args.out_dir("train", &cfg);
    eprintln!(
        "training {} for {} epochs -> {}",
        task.scene.name,
        cfg.epochs,
        dir.display()
    );
    let out = harness::with_threads(cfg.single_thread, || {
        harness::train_to_dir(&cfg, &task, &dir)
    })?;
    if let Some(m) = out.metrics.last() {
        println!(
            "epoch {}: success {:.3}, mean robustness {:.4}, mean return {:.2}",
            m.epoch, m.success_fraction, m.mean_robustness, m.mean_return
        );
    }
    println!("checkpoint {}", dir.join("checkpoint.json").display());
    Ok(())
}

fn run_cem(args: RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let task = cfg.load_task()?;
    let dir = args.out_dir("cem", &cfg);
    let out = harness::with_threads(cfg.single_thread, || harness::cem_to_dir(&cfg, &task, &dir))?;
    if let Some(it) = out.iterations.last() {
        println!(
            "iteration {}: best fitness {:.4}, elite success {:.3}",
            it.iteration, it.best_fitness, it.elite_success
        );
    }
    println!("checkpoint {}", dir.join("checkpoint.json").display());
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let (ckpt, task) = load_checkpoint(&args.checkpoint, args.scene.as_deref())?;
    let mut cfg = ckpt.config.eval.clone();
    if let Some(n) = args.n_init {
        cfg.n_init = n;
    }
    if let Some(n) = args.n_candidates {
        cfg.n_candidates = n;
    }
    let sampler = ckpt.config.sampler.clone();
    let report = harness::with_threads(args.single_thread, || {
        harness::evaluate(&ckpt, &task, &cfg, &sampler, args.seed)
    })?;
    let path = default_out(args.out, &args.checkpoint, "eval.csv");
    std::fs::write(&path, report.to_csv())?;
    if args.traces > 0 {
        let dir = path.parent().unwrap_or(Path::new("."));
        let pairs = report.assignments.iter().zip(&report.initial_states);
        for (i, (a, x0)) in pairs.take(args.traces).enumerate() {
            let (rows, _) = harness::trace(&ckpt, &task, a, x0.clone())?;
            let file = std::fs::File::create(dir.join(format!("trace_{i}.csv")))?;
            write_trace(&rows, task.scene.env.dt, file)?;
        }
    }
    println!(
        "success rate {:.4} ({} / {}), mean robustness {:.4}, {:.1}s -> {}",
        report.success_rate,
        report.success.iter().filter(|&&s| s).count(),
        report.success.len(),
        report.mean_robustness(),
        report.wall_clock_s,
        path.display()
    );
    Ok(())
}

fn run_decompose(args: DecomposeArgs) -> Result<()> {
    let formula = match (&args.scene, &args.formula) {
        (_, Some(text)) => tgpo::stl::parse(text)?,
        (Some(scene), None) => catalog::resolve(scene)?.formula,
        (None, None) => bail!("give --scene or --formula"),
    };
    let ts = decompose(&formula)?;
    print!("{}", if args.csv { ts.table_csv() } else { ts.table() });
    Ok(())
}

fn run_monitor(args: MonitorArgs) -> Result<()> {
    let scene = catalog::resolve(&args.scene)?;
    let text = std::fs::read_to_string(&args.trajectory)
        .with_context(|| format!("reading {}", args.trajectory.display()))?;
    let traj = harness::read_trajectory(&text, scene.env.dt)?;
    println!("{}", harness::monitor(&traj, &scene)?);
    Ok(())
}

fn run_heatmap(args: HeatmapArgs) -> Result<()> {
    let (ckpt, task) = load_checkpoint(&args.checkpoint, args.scene.as_deref())?;
    let vars: Vec<usize> = args
        .vars
        .split(',')
        .map(|v| v.trim().parse())
        .collect::<Result<_, _>>()
        .context("--vars expects two indices like 0,1")?;
    let [i, j] = vars[..] else {
        bail!("--vars expects exactly two indices")
    };
    let map = harness::heatmap(&ckpt, &task, i, j, args.seed)?;
    let path = default_out(args.out, &args.checkpoint, "heatmap.csv");
    std::fs::write(&path, map.to_csv())?;
    println!(
        "{}x{} grid -> {}",
        map.values_i.len(),
        map.values_j.len(),
        path.display()
    );
    Ok(())
}

fn run_correlate(args: CorrelateArgs) -> Result<()> {
    let (ckpt, task) = load_checkpoint(&args.checkpoint, args.scene.as_deref())?;
    let c = harness::correlate(&ckpt, &task, args.samples, args.seed)?;
    let path = default_out(args.out, &args.checkpoint, "correlation.csv");
    std::fs::write(&path, c.to_csv())?;
    println!(
        "spearman {:.4} over {} samples -> {}",
        c.spearman,
        c.rows.len(),
        path.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(a) => run_train(a),
        Command::Cem(a) => run_cem(a),
        Command::Eval(a) => run_eval(a),
        Command::Decompose(a) => run_decompose(a),
        Command::Monitor(a) => run_monitor(a),
        Command::Heatmap(a) => run_heatmap(a),
        Command::Correlate(a) => run_correlate(a),
    }
}
