#![allow(dead_code)]

use lhnav::taskforge::{sample_task, TaskSpec};
use lhnav::world::gen::{generate_scene, SceneParams};
use lhnav::world::{RobotConfig, Scene};

pub fn scenes(n: u64) -> Vec<Scene> {
    (0..n)
        .map(|seed| generate_scene(&SceneParams { seed, ..SceneParams::default() }).expect("scene generation"))
        .collect()
}

/// `per_scene` sampled tasks for each scene, seeds disjoint across scenes.
pub fn tasks(scenes: &[Scene], per_scene: u64) -> Vec<TaskSpec> {
    let robot = RobotConfig::spot();
    scenes
        .iter()
        .enumerate()
        .flat_map(|(i, scene)| {
            let robot = robot.clone();
            (0..per_scene).map(move |k| sample_task(scene, &robot, 1000 * i as u64 + k).expect("task sampling"))
        })
        .collect()
}

/// Literal transcription of the window-scan splitting procedure over
/// symbols 'F', 'L', 'R'. Returns (label, start, end) with label in
/// {'F', 'L', 'R'}; spans are clamped to the trace.
pub fn reference_split(d: &[char], trailing: bool) -> Vec<(char, usize, usize)> {
    let n = d.len() as i64;
    let mut s: Vec<(i64, i64, char)> = Vec::new();
    for action in ['L', 'R'] {
        let mut i: i64 = 0;
        while i < n - 3 {
            let window = &d[i as usize..(i + 3) as usize];
            if window.iter().filter(|&&c| c == action).count() >= 2 {
                let index: Vec<i64> = window
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c == action)
                    .map(|(k, _)| i + k as i64)
                    .collect();
                s.push((index[0], *index.last().unwrap(), action));
                i = index.last().unwrap() + 1;
            } else {
                i += 1;
            }
        }
    }
    s.sort();
    let mut merge_s = Vec::new();
    if let Some(&(mut c_start, mut c_end, mut c_label)) = s.first() {
        for &(start, end, label) in &s[1..] {
            if start <= c_end + 3 && label == c_label {
                c_end = c_end.max(end);
            } else {
                merge_s.push((c_start, c_end, c_label));
                (c_start, c_end, c_label) = (start, end, label);
            }
        }
        merge_s.push((c_start, c_end, c_label));
    }
    let clamp = |a: i64, b: i64| (a.max(0) as usize, b.min(n - 1) as usize);
    let mut seg = Vec::new();
    let mut last_end: i64 = -1;
    for (start, end, act) in merge_s {
        if last_end + 2 < start {
            let (a, b) = clamp(last_end + 1, start - 1);
            seg.push(('F', a, b));
        }
        let (a, b) = clamp(start - 1, end + 1);
        seg.push((act, a, b));
        last_end = end;
    }
    if trailing && last_end + 1 < n {
        let (a, b) = clamp(last_end + 1, n - 1);
        seg.push(('F', a, b));
    }
    seg
}
