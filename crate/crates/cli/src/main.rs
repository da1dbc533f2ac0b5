use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use lhnav::metrics::{EpisodeResult, MetricReport, NeMode};
use lhnav::policy::{
    feature_dim, stable_learning_rate, train_alternating, EmbeddingOracle, LinearSoftmax, DEFAULT_SALT,
};
use lhnav::runner::{build_policy, collect_expert_data, replay_trajectory, run_suite, RunConfig, TrainingSet, Trajectory};
use lhnav::splitter::split_episode;
use lhnav::taskforge::{
    generate_via_llm, load_tasks, sample_task_with, save_tasks, LlmClientConfig, TaskOptions, TaskSpec, LLM_ENDPOINT_ENV,
};
use lhnav::world::gen::{generate_scene, SceneParams};
use lhnav::world::{RobotConfig, Scene};

#[derive(Parser)]
#[command(name = "lhnav", version, about = "Long-horizon multi-stage navigation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate procedural scenes, one JSON file each.
    GenScene {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of scenes, seeded `seed`, `seed+1`, ...
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Grid side length in cells.
        #[arg(long, default_value_t = 40)]
        size: usize,
        #[arg(long, default_value_t = 4)]
        regions: usize,
        /// Objects per region.
        #[arg(long, default_value_t = 5)]
        objects: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample multi-stage tasks for a set of scenes.
    GenTasks {
        /// Scene files or directories of them.
        #[arg(long, num_args = 1.., required = true)]
        scenes: Vec<PathBuf>,
        /// Tasks per scene.
        #[arg(long, default_value_t = 10)]
        count: u64,
        /// Move_to count, either `N` or `LO..HI`.
        #[arg(long, default_value = "2..4")]
        subtasks: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "spot")]
        robot: String,
        /// Chat-completion endpoint; template sampling is used when absent.
        #[arg(long, env = LLM_ENDPOINT_ENV)]
        llm_endpoint: Option<String>,
        #[arg(long, default_value_t = 60.0)]
        llm_timeout: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a policy over every task and write trajectories and metrics.
    Rollout {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Split recorded trajectories into step-by-step instructions (JSONL).
    Split {
        /// Directory of `<task id>.jsonl` files, or a rollout directory.
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        scenes: Vec<PathBuf>,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long, default_value = "spot")]
        robot: String,
        /// Drop the trailing forward segment.
        #[arg(long)]
        literal: bool,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute metrics from a `results.json` file.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        literal_ne: bool,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Print a stored `report.json`.
    Report {
        /// Report file or the rollout directory holding it.
        #[arg(long, default_value = ".")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Fit the memory policy backend on expert rollouts and build its store.
    Train {
        #[arg(long, num_args = 1.., required = true)]
        scenes: Vec<PathBuf>,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extra recorded trajectories used as the supervised set.
        #[arg(long)]
        trajectories: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        /// Step size; defaults to the largest provably stable one.
        #[arg(long)]
        lr: Option<f64>,
        /// Supervised epochs first, imitation epochs after.
        #[arg(long)]
        two_stage: bool,
        /// Directory for `weights.json` and `store.jsonl`.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    scenes: Vec<PathBuf>,
    #[arg(long)]
    tasks: Option<PathBuf>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Extra `key=value` overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenScene {
            seed,
            count,
            size,
            regions,
            objects,
            out,
        } => gen_scene(seed, count, size, regions, objects, &out),
        Command::GenTasks {
            scenes,
            count,
            subtasks,
            seed,
            robot,
            llm_endpoint,
            llm_timeout,
            out,
        } => {
            let opts = parse_range(&subtasks)?;
            let llm = llm_endpoint.map(|endpoint| LlmClientConfig {
                endpoint,
                timeout: llm_timeout,
                enabled: true,
                ..LlmClientConfig::default()
            });
            gen_tasks(&load_scenes(&scenes)?, count, &opts, seed, &robot_named(&robot)?, llm.as_ref(), &out)
        }
        Command::Rollout { run } => rollout(run),
        Command::Split {
            trajectories,
            scenes,
            tasks,
            robot,
            literal,
            out,
        } => split(&trajectories, &scenes, &tasks, &robot_named(&robot)?, literal, out.as_deref()),
        Command::Eval {
            results,
            literal_ne,
            format,
        } => {
            let results: Vec<EpisodeResult> = read_json(&results)?;
            let mode = if literal_ne { NeMode::Literal } else { NeMode::ForcedStop };
            print_report(&MetricReport::evaluate(&results, mode)?, format)
        }
        Command::Report { input, format } => {
            let path = if input.is_dir() { input.join("report.json") } else { input };
            let value: serde_json::Value = read_json(&path)?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&value)?),
                Format::Table => {
                    let metrics: MetricReport = serde_json::from_value(value["metrics"].clone())
                        .with_context(|| format!("{} has no metrics object", path.display()))?;
                    if let (Some(p), Some(h)) = (value["policy"].as_str(), value["config_hash"].as_str()) {
                        println!("policy {p}  config {h}");
                    }
                    print!("{}", metrics.to_table());
                }
            }
            Ok(())
        }
        Command::Train {
            scenes,
            tasks,
            config,
            trajectories,
            epochs,
            lr,
            two_stage,
            out,
        } => {
            let cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            train(&cfg, &scenes, &tasks, trajectories.as_deref(), epochs, lr, two_stage, &out)
        }
    }
}

fn gen_scene(seed: u64, count: u64, size: usize, regions: usize, objects: usize, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for s in seed..seed + count {
        let scene = generate_scene(&SceneParams {
            seed: s,
            size,
            regions,
            objects_per_region: objects,
            ..SceneParams::default()
        })?;
        let path = out.join(format!("{}.json", scene.id()));
        scene.save(&path)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn parse_range(text: &str) -> Result<TaskOptions> {
    let (lo, hi) = match text.split_once("..") {
        Some((a, b)) => (a.trim().parse()?, b.trim_start_matches('=').trim().parse()?),
        None => {
            let n = text.trim().parse()?;
            (n, n)
        }
    };
    ensure!(lo <= hi, "empty subtask range {text:?}");
    Ok(TaskOptions {
        min_move_to: lo,
        max_move_to: hi,
    })
}

fn gen_tasks(
    scenes: &[Scene],
    count: u64,
    opts: &TaskOptions,
    seed: u64,
    robot: &RobotConfig,
    llm: Option<&LlmClientConfig>,
    out: &Path,
) -> Result<()> {
    let mut tasks = Vec::new();
    for scene in scenes {
        for k in 0..count {
            let s = seed + k;
            let task = match llm {
                Some(cfg) => generate_via_llm(scene, robot, cfg, s)
                    .with_context(|| format!("generating task {k} for {}", scene.id()))?,
                None => sample_task_with(scene, robot, s, opts)?,
            };
            tasks.push(task);
        }
    }
    save_tasks(out, &tasks)?;
    eprintln!("wrote {} tasks to {}", tasks.len(), out.display());
    Ok(())
}

fn rollout(args: RunArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let flags: [(&str, Option<String>); 7] = [
        ("policy", args.policy),
        ("budget", args.budget.map(|v| v.to_string())),
        ("workers", args.workers.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("tasks", args.tasks.map(|p| p.display().to_string())),
        ("weights", args.weights.map(|p| p.display().to_string())),
        ("store", args.store.map(|p| p.display().to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    for kv in &args.sets {
        let (k, v) = kv.split_once('=').with_context(|| format!("expected KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(out) = args.out {
        cfg.output = Some(out);
    }
    cfg.validate()?;
    let scene_paths = if args.scenes.is_empty() {
        cfg.scenes.clone().into_iter().collect()
    } else {
        args.scenes
    };
    ensure!(!scene_paths.is_empty(), "no scenes given (use --scenes or `scenes =` in the config)");
    let tasks_path = cfg.tasks.clone().context("no tasks given (use --tasks or `tasks =` in the config)")?;
    let scenes = load_scenes(&scene_paths)?;
    let tasks = load_tasks(&tasks_path)?;
    let policy = build_policy(&cfg)?;
    let out = run_suite(&scenes, &tasks, policy.as_ref(), &cfg, cfg.output.as_deref())?;
    println!("policy {}  config {}", out.report.policy, out.report.config_hash);
    print!("{}", out.report.metrics.to_table());
    if let Some(dir) = &cfg.output {
        eprintln!("wrote {} trajectories under {}", out.episodes.len(), dir.display());
    }
    Ok(())
}

fn split(
    dir: &Path,
    scene_paths: &[PathBuf],
    tasks_path: &Path,
    robot: &RobotConfig,
    literal: bool,
    out: Option<&Path>,
) -> Result<()> {
    let scenes = load_scenes(scene_paths)?;
    let tasks = load_tasks(tasks_path)?;
    let mut lines = String::new();
    for traj in load_trajectories(dir)? {
        let (scene, task) = lookup(&scenes, &tasks, &traj.task_id)?;
        for sbs in split_episode(scene, task, &traj, robot, literal)? {
            lines.push_str(&serde_json::to_string(&sbs)?);
            lines.push('\n');
        }
    }
    match out {
        Some(p) => fs::write(p, lines).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(lines.as_bytes())?,
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train(
    cfg: &RunConfig,
    scene_paths: &[PathBuf],
    tasks_path: &Path,
    trajectories: Option<&Path>,
    epochs: usize,
    lr: Option<f64>,
    two_stage: bool,
    out: &Path,
) -> Result<()> {
    let scenes = load_scenes(scene_paths)?;
    let tasks = load_tasks(tasks_path)?;
    let oracle = EmbeddingOracle::new(cfg.embed_dim, DEFAULT_SALT)?;
    let imitation = collect_expert_data(&scenes, &tasks, cfg, &oracle)?;
    let mut supervised = TrainingSet::default();
    if let Some(dir) = trajectories {
        let robot = robot_named(&cfg.robot)?;
        for traj in load_trajectories(dir)? {
            let (scene, task) = lookup(&scenes, &tasks, &traj.task_id)?;
            replay_trajectory(scene, task, &traj, &robot, &oracle, cfg, &mut supervised)?;
        }
    }
    let all: Vec<_> = imitation.samples.iter().chain(&supervised.samples).cloned().collect();
    ensure!(!all.is_empty(), "no training samples");
    let lr = lr.unwrap_or_else(|| stable_learning_rate(&all));
    let mut backend = LinearSoftmax::zeros(feature_dim(cfg.embed_dim));
    let report = train_alternating(&mut backend, &imitation.samples, &supervised.samples, epochs, lr, two_stage)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    backend.save(&out.join("weights.json"))?;
    imitation.store.save_jsonl(&out.join("store.jsonl"))?;
    println!(
        "samples {}  epochs {epochs}  lr {lr:.3e}  loss {:.4} -> {:.4}",
        all.len(),
        report.losses[0],
        report.final_loss()
    );
    Ok(())
}

fn robot_named(name: &str) -> Result<RobotConfig> {
    RobotConfig::by_name(name).with_context(|| format!("unknown robot {name:?}"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn print_report(report: &MetricReport, format: Format) -> Result<()> {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(report)?),
        Format::Table => print!("{}", report.to_table()),
    }
    Ok(())
}

/// Files with `ext` under `path`, sorted; a plain file is returned as is.
fn expand(path: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("listing {}", path.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == ext));
    files.sort();
    Ok(files)
}

fn load_scenes(paths: &[PathBuf]) -> Result<Vec<Scene>> {
    let mut scenes = Vec::new();
    for p in paths {
        for file in expand(p, "json")? {
            scenes.push(Scene::load(&file).with_context(|| format!("loading scene {}", file.display()))?);
        }
    }
    ensure!(!scenes.is_empty(), "no scene files found");
    Ok(scenes)
}

fn load_trajectories(dir: &Path) -> Result<Vec<Trajectory>> {
    let nested = dir.join("trajectories");
    let dir = if nested.is_dir() { nested } else { dir.to_path_buf() };
    let files = expand(&dir, "jsonl")?;
    if files.is_empty() {
        bail!("no trajectory files under {}", dir.display());
    }
    files
        .iter()
        .map(|f| Trajectory::load(f).with_context(|| format!("loading {}", f.display())))
        .collect()
}

fn lookup<'a>(scenes: &'a [Scene], tasks: &'a [TaskSpec], task_id: &str) -> Result<(&'a Scene, &'a TaskSpec)> {
    let task = tasks
        .iter()
        .find(|t| t.id == task_id)
        .with_context(|| format!("trajectory {task_id} has no task"))?;
    let scene = scenes
        .iter()
        .find(|s| s.id() == task.scene_id)
        .with_context(|| format!("task {task_id} needs scene {}", task.scene_id))?;
    Ok((scene, task))
}
