use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_episode, Episode, RunConfig, RunError};
use crate::metrics::{EpisodeResult, MetricReport};
use crate::policy::Policy;
use crate::taskforge::TaskSpec;
use crate::world::Scene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub policy: String,
    pub config_hash: String,
    pub metrics: MetricReport,
}

/// Everything a suite run produced, episodes sorted by task id.
#[derive(Debug, Clone)]
pub struct SuiteOutput {
    pub report: SuiteReport,
    pub episodes: Vec<Episode>,
}

impl SuiteOutput {
    pub fn results(&self) -> Vec<EpisodeResult> {
        self.episodes.iter().map(|e| e.result.clone()).collect()
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serialization cannot fail") + "\n"
}

fn write(path: &Path, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs one episode per task on `cfg.workers` threads and aggregates.
///
/// With `output` set, writes `trajectories/<task id>.jsonl`, `results.json`
/// and `report.json` below it.
pub fn run_suite(
    scenes: &[Scene],
    tasks: &[TaskSpec],
    policy: &dyn Policy,
    cfg: &RunConfig,
    output: Option<&Path>,
) -> Result<SuiteOutput, RunError> {
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(RunError::Config("task list is empty".into()));
    }
    let by_id: BTreeMap<&str, &Scene> = scenes.iter().map(|s| (s.id(), s)).collect();
    let mut seen = BTreeSet::new();
    for t in tasks {
        if !seen.insert(t.id.as_str()) {
            return Err(RunError::Config(format!("duplicate task id {:?}", t.id)));
        }
        if !by_id.contains_key(t.scene_id.as_str()) {
            return Err(RunError::Config(format!("task {} refers to missing scene {:?}", t.id, t.scene_id)));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| RunError::Config(e.to_string()))?;
    let mut episodes: Vec<Episode> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| run_episode(by_id[t.scene_id.as_str()], t, policy, cfg))
            .collect::<Result<_, _>>()
    })?;
    episodes.sort_by(|a, b| a.result.task_id.cmp(&b.result.task_id));
    let results: Vec<EpisodeResult> = episodes.iter().map(|e| e.result.clone()).collect();
    let report = SuiteReport {
        policy: policy.name().to_string(),
        config_hash: cfg.hash(),
        metrics: MetricReport::evaluate(&results, cfg.ne_mode())?,
    };
    if let Some(dir) = output {
        let traj_dir = dir.join("trajectories");
        std::fs::create_dir_all(&traj_dir).map_err(|source| RunError::Io {
            path: traj_dir.clone(),
            source,
        })?;
        for e in &episodes {
            e.trajectory.save(&traj_dir.join(format!("{}.jsonl", e.trajectory.task_id)))?;
        }
        write(&dir.join("results.json"), &pretty(&results))?;
        write(&dir.join("report.json"), &pretty(&report))?;
    }
    Ok(SuiteOutput { report, episodes })
}
