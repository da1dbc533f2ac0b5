mod common;

use std::sync::Arc;

use lhnav::expert::{geodesic_distance, Expert};
use lhnav::memory::{DecisionVector, LongTermStore, PoolingMode, ShortTermMemory};
use lhnav::metrics::MetricReport;
use lhnav::policy::{
    feature_dim, memory_policy_step, stable_learning_rate, train_backend, Agent, BackendInput, EmbeddingOracle,
    ExpertPolicy, LinearSoftmax, MemoryPolicy, MemoryStepInput, Policy, PolicyBackend, PolicyError, RandomPolicy,
    StepContext,
};
use lhnav::runner::{
    collect_expert_data, run_episode, run_suite, RunConfig, SpanOutcome, Trajectory,
};
use lhnav::splitter::{split_episode, SegmentLabel};
use lhnav::taskforge::{SubtaskKind, TaskSpec};
use lhnav::world::{Action, RobotConfig, Scene};

fn expert() -> ExpertPolicy {
    ExpertPolicy {
        robot: RobotConfig::spot(),
    }
}

fn scene_of<'a>(scenes: &'a [Scene], task: &TaskSpec) -> &'a Scene {
    scenes.iter().find(|s| s.id() == task.scene_id).unwrap()
}

struct StopAgent;

impl Agent for StopAgent {
    fn act(&mut self, _ctx: &StepContext<'_>) -> Result<Action, PolicyError> {
        Ok(Action::Stop)
    }
}

struct StopPolicy;

impl Policy for StopPolicy {
    fn name(&self) -> &str {
        "stop"
    }

    fn agent<'a>(&'a self, _: &'a Scene, _: &TaskSpec, _: u64) -> Result<Box<dyn Agent + 'a>, PolicyError> {
        Ok(Box::new(StopAgent))
    }
}

#[test]
fn expert_episodes_are_consistent() {
    let scenes = common::scenes(3);
    let tasks = common::tasks(&scenes, 4);
    let cfg = RunConfig::default();
    for task in &tasks {
        let scene = scene_of(&scenes, task);
        let ep = run_episode(scene, task, &expert(), &cfg).unwrap();
        let traj = &ep.trajectory;
        traj.check().unwrap();
        assert!(ep.result.records.iter().all(|r| r.success && !r.truncated && r.ne <= 1.0));
        assert_eq!(ep.result.n(), task.move_to_count());
        let nav: Vec<_> = traj.spans.iter().filter(|s| s.kind == SubtaskKind::MoveTo).collect();
        let total: usize = ep.result.records.iter().map(|r| r.steps).sum();
        assert_eq!(total, traj.steps.len());
        for (span, rec) in nav.iter().zip(&ep.result.records) {
            assert_eq!(span.outcome, SpanOutcome::Stopped);
            assert_eq!(traj.steps[span.end_step - 1].action, Action::Stop);
            let obj = scene.object(&span.object).unwrap();
            let geo = geodesic_distance(scene, &span.start_state.position, &obj.position)
                .unwrap()
                .unwrap();
            assert_eq!(rec.gt, geo.max(scene.cell_size()));
            assert_eq!(span.gt, Some(rec.gt));
        }
        for span in traj.spans.iter().filter(|s| s.kind != SubtaskKind::MoveTo) {
            assert_eq!(span.outcome, SpanOutcome::Interacted { success: true }, "{}", task.id);
        }
        assert_eq!(ep.final_state.holding, None);
    }
}

#[test]
fn immediate_stop_scores_spawn_distance() {
    let scenes = common::scenes(3);
    let tasks = common::tasks(&scenes, 4);
    let cfg = RunConfig::default();
    for task in &tasks {
        let scene = scene_of(&scenes, task);
        let ep = run_episode(scene, task, &StopPolicy, &cfg).unwrap();
        let (_, first) = task.move_targets().next().unwrap();
        let want = geodesic_distance(scene, &task.start.position, &scene.object(first).unwrap().position)
            .unwrap()
            .unwrap();
        let r = &ep.result.records[0];
        assert!(!r.success);
        assert_eq!(r.ne, want);
        assert_eq!(r.steps, 1);
        assert!(ep.result.records.iter().all(|r| !r.truncated));
        // every later subtask still ran
        assert_eq!(ep.result.n(), task.move_to_count());
    }
}

#[test]
fn tiny_budget_truncates() {
    let scenes = common::scenes(2);
    let tasks = common::tasks(&scenes, 5);
    let cfg = RunConfig {
        budget: 10,
        ..RunConfig::default()
    };
    let out = run_suite(&scenes, &tasks, &RandomPolicy, &cfg, None).unwrap();
    let records: Vec<_> = out.episodes.iter().flat_map(|e| e.result.records.iter()).collect();
    assert!(records.iter().all(|r| r.steps <= 10));
    assert!(records.iter().any(|r| r.truncated));
    for r in &records {
        if r.truncated {
            assert_eq!(r.steps, 10);
            assert!(!r.success);
        } else {
            assert!(r.steps >= 1);
        }
    }
    assert_eq!(out.report.metrics.sr, 0.0);
    assert!(out.report.metrics.ne.unwrap() > 1.0);
}

#[test]
fn random_policy_is_reproducible() {
    let scenes = common::scenes(1);
    let tasks = common::tasks(&scenes, 3);
    let cfg = RunConfig {
        budget: 80,
        seed: 5,
        ..RunConfig::default()
    };
    for task in &tasks {
        let a = run_episode(&scenes[0], task, &RandomPolicy, &cfg).unwrap();
        let b = run_episode(&scenes[0], task, &RandomPolicy, &cfg).unwrap();
        assert_eq!(a, b);
        let other = run_episode(&scenes[0], task, &RandomPolicy, &RunConfig { seed: 6, ..cfg.clone() }).unwrap();
        assert_ne!(a.trajectory.steps, other.trajectory.steps);
    }
}

#[test]
fn trajectory_files_round_trip() {
    let scenes = common::scenes(2);
    let tasks = common::tasks(&scenes, 3);
    let dir = tempfile::tempdir().unwrap();
    for (policy, budget) in [(&expert() as &dyn Policy, 500), (&RandomPolicy, 40)] {
        let cfg = RunConfig {
            budget,
            ..RunConfig::default()
        };
        let out = run_suite(&scenes, &tasks, policy, &cfg, Some(dir.path())).unwrap();
        for ep in &out.episodes {
            let path = dir.path().join("trajectories").join(format!("{}.jsonl", ep.trajectory.task_id));
            let back = Trajectory::load(&path).unwrap();
            assert_eq!(back, ep.trajectory);
            assert_eq!(back.config_hash, cfg.hash());
        }
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(report["policy"], policy.name());
    }
}

#[test]
fn corrupt_trajectory_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    std::fs::write(&path, "{\"task_id\":\"x\",\"config_hash\":\"\",\"spans\":[]}\nnot json\n").unwrap();
    let err = Trajectory::load(&path).unwrap_err().to_string();
    assert!(err.contains(":2:"), "{err}");
}

#[test]
fn expert_suite_scores_one() {
    let scenes = common::scenes(2);
    let tasks = common::tasks(&scenes, 5);
    let m = run_suite(&scenes, &tasks, &expert(), &RunConfig::default(), None).unwrap().report.metrics;
    assert_eq!(m.episodes, 10);
    assert_eq!([m.sr, m.isr, m.csr, m.cgt, m.osr, m.tar], [1.0; 6]);
    assert!(m.spl > 0.5 && m.spl <= 1.0);
}

/// Backend that always emits one fixed one-hot decision.
struct OneHot(Action);

impl PolicyBackend for OneHot {
    fn decide(&self, _: &BackendInput<'_>) -> Result<(DecisionVector, f64), PolicyError> {
        Ok((DecisionVector::one_hot(self.0), 1.0))
    }
}

struct ExpertBackedAgent<'a> {
    expert: Expert<'a>,
    memory: ShortTermMemory,
    store: &'a LongTermStore,
    oracle: EmbeddingOracle,
}

impl Agent for ExpertBackedAgent<'_> {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Action, PolicyError> {
        let a = self.expert.next_action(ctx.state, ctx.target)?;
        let out = memory_policy_step(
            &MemoryStepInput {
                instruction: &ctx.task.instruction,
                observation: ctx.observation,
                target_category: &ctx.scene.object(ctx.target).unwrap().category,
                stage: ctx.stage,
            },
            &mut self.memory,
            self.store,
            &OneHot(a),
            &self.oracle,
            None,
        )?;
        Ok(out.action)
    }
}

struct ExpertBacked {
    store: LongTermStore,
}

impl Policy for ExpertBacked {
    fn name(&self) -> &str {
        "expert-backed"
    }

    fn agent<'a>(&'a self, scene: &'a Scene, _: &TaskSpec, _: u64) -> Result<Box<dyn Agent + 'a>, PolicyError> {
        let oracle = EmbeddingOracle::default();
        Ok(Box::new(ExpertBackedAgent {
            expert: Expert::new(scene, &RobotConfig::spot()),
            memory: ShortTermMemory::new(oracle.dim(), 8, PoolingMode::Pair)?,
            store: &self.store,
            oracle,
        }))
    }
}

#[test]
fn expert_backed_memory_step_solves_suite() {
    let scenes = common::scenes(2);
    let tasks = common::tasks(&scenes, 5);
    let policy = ExpertBacked {
        store: LongTermStore::default(),
    };
    let m = run_suite(&scenes, &tasks, &policy, &RunConfig::default(), None).unwrap().report.metrics;
    assert_eq!(m.sr, 1.0);
}

#[test]
fn training_pipeline_end_to_end() {
    let scenes = common::scenes(3);
    let tasks = common::tasks(&scenes, 4);
    let cfg = RunConfig::default();
    let oracle = EmbeddingOracle::default();
    let data = collect_expert_data(&scenes, &tasks, &cfg, &oracle).unwrap();
    assert!(data.samples.len() > 100);
    assert_eq!(data.store.len(), data.samples.len());
    assert!(data.samples.iter().all(|s| s.x.len() == feature_dim(oracle.dim())));

    let mut backend = LinearSoftmax::zeros(feature_dim(oracle.dim()));
    let report = train_backend(&mut backend, &data.samples, 30, stable_learning_rate(&data.samples)).unwrap();
    assert!(report.losses.windows(2).all(|w| w[1] <= w[0]));
    assert!(report.final_loss() < report.losses[0]);

    let store = Arc::new(data.store);
    let before = (*store).clone();
    let policy = MemoryPolicy::new(Arc::new(backend), store.clone(), oracle);
    let run_cfg = RunConfig {
        budget: 120,
        ..RunConfig::default()
    };
    let out = run_suite(&scenes, &tasks, &policy, &run_cfg, None).unwrap();
    assert_eq!(*store, before, "long-term store mutated during evaluation");
    let m = &out.report.metrics;
    for v in [m.sr, m.osr, m.spl, m.isr, m.csr, m.cgt, m.tar] {
        assert!((0.0..=1.0).contains(&v), "{m:?}");
    }
    let results = out.results();
    assert_eq!(MetricReport::evaluate(&results, run_cfg.ne_mode()).unwrap(), *m);
}

#[test]
fn split_expert_trajectories() {
    let scenes = common::scenes(3);
    let tasks = common::tasks(&scenes, 4);
    let robot = RobotConfig::spot();
    let mut produced = 0;
    for task in &tasks {
        let scene = scene_of(&scenes, task);
        let ep = run_episode(scene, task, &expert(), &RunConfig::default()).unwrap();
        let sbs = split_episode(scene, task, &ep.trajectory, &robot, false).unwrap();
        assert_eq!(sbs, split_episode(scene, task, &ep.trajectory, &robot, false).unwrap());
        for t in &sbs {
            produced += 1;
            assert_eq!(t.trajectory_id, task.id);
            let needle = format!("the {}", t.target);
            assert_eq!(t.instruction.matches(&needle).count(), 1, "{}", t.instruction);
            assert!(t.instruction.ends_with(&format!("{needle}.")), "{}", t.instruction);
            assert!(!t.steps.is_empty());
            let turns = t.steps.iter().filter(|s| s.action != SegmentLabel::MoveForward).count();
            assert!(turns <= t.steps.len());
        }
    }
    assert!(produced >= tasks.len());
}
