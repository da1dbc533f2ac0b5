//! Acceptance gate: nine criteria, one PASS/FAIL line each.
//!
//! Run with `cargo test -p lhnav-core --test acceptance -- --nocapture` to
//! see the report.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use lhnav::memory::{entropy_argmin, pool_candidates, retrieve_topk, PoolingMode, ShortTermMemory, StoreEntry};
use lhnav::metrics::{cgt, csr, isr, tar, task_sr, EpisodeResult, MetricReport, NeMode, SubtaskRecord};
use lhnav::policy::{stable_learning_rate, train_backend, ExpertPolicy, LinearSoftmax, RandomPolicy, Sample};
use lhnav::memory::DecisionVector;
use lhnav::runner::{run_suite, RunConfig};
use lhnav::splitter::{actions_from_symbols, split_trajectory, turn_records, SegmentLabel};
use lhnav::world::RobotConfig;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ep(id: &str, s: &[bool], gt: &[f64]) -> EpisodeResult {
    EpisodeResult {
        task_id: id.into(),
        records: s.iter().zip(gt).map(|(&x, &g)| SubtaskRecord::outcome(x, g)).collect(),
    }
}

fn criterion_1() -> Outcome {
    let r = [ep("a", &[true, false, true], &[4.0, 4.0, 2.0])];
    let (i, c, g) = (isr(&r).unwrap(), csr(&r).unwrap(), cgt(&r).unwrap());
    ensure((i - 2.0 / 3.0).abs() <= 1e-9, || format!("ISR {i}"))?;
    ensure((c - 4.0 / 9.0).abs() <= 1e-9, || format!("CSR {c}"))?;
    ensure((g - 7.0 / 15.0).abs() <= 1e-9, || format!("CGT {g}"))?;
    let perfect = [ep("p", &[true, true, true], &[4.0, 4.0, 2.0]), ep("q", &[true, true], &[1.0, 3.0])];
    let values = [task_sr(&perfect), isr(&perfect), csr(&perfect), cgt(&perfect)].map(Result::unwrap);
    ensure(values == [1.0; 4], || format!("perfect run gives {values:?}"))?;
    Ok(format!("ISR={i:.6} CSR={c:.6} CGT={g:.6}"))
}

fn criterion_2() -> Outcome {
    let v = tar(3.0, 5.0, 1.0).unwrap();
    ensure((v - 0.6).abs() <= 1e-9, || format!("tar(3,5,1) = {v}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in 0..1000 {
        // evenly spaced NE through 0..4 m, including the threshold itself
        let ne = k as f64 * 0.004;
        let gt = rng.random_range(0.25..20.0);
        let t = tar(ne, gt, 1.0).unwrap();
        ensure((t == 1.0) == (ne <= 1.0), || format!("ne={ne} gt={gt} tar={t}"))?;
    }
    Ok(format!("tar(3,5,1)={v}, 1000-point sweep consistent"))
}

fn to_symbols(actions: &[char]) -> String {
    actions.iter().collect()
}

fn label_char(l: SegmentLabel) -> char {
    match l {
        SegmentLabel::MoveForward => 'F',
        SegmentLabel::TurnLeft => 'L',
        SegmentLabel::TurnRight => 'R',
    }
}

fn split_matches(trace: &[char]) -> Result<(), String> {
    let actions = actions_from_symbols(&to_symbols(trace)).map_err(|e| e.to_string())?;
    for trailing in [true, false] {
        let got: Vec<(char, usize, usize)> = split_trajectory(&actions, !trailing)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|s| (label_char(s.label), s.start, s.end))
            .collect();
        let want = common::reference_split(trace, trailing);
        ensure(got == want, || format!("{} (trailing={trailing}): {got:?} != {want:?}", to_symbols(trace)))?;
    }
    Ok(())
}

fn criterion_3() -> Outcome {
    let alphabet = ['F', 'L', 'R'];
    let mut count = 0;
    for code in 0..3usize.pow(10) {
        let mut c = code;
        let trace: Vec<char> = (0..10)
            .map(|_| {
                let s = alphabet[c % 3];
                c /= 3;
                s
            })
            .collect();
        split_matches(&trace)?;
        count += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let len = rng.random_range(1..=200);
        // bias toward runs so merges and long turns are common
        let mut trace = Vec::with_capacity(len);
        while trace.len() < len {
            let s = alphabet[rng.random_range(0..3)];
            let run = rng.random_range(1..=4);
            trace.extend(std::iter::repeat_n(s, run.min(len - trace.len())));
        }
        split_matches(&trace)?;
        count += 1;
    }
    let recs: Vec<(usize, usize, char)> = turn_records(&actions_from_symbols("FFLLFFFRRF").unwrap())
        .iter()
        .map(|r| (r.start, r.end, label_char(r.label)))
        .collect();
    ensure(recs == vec![(2, 3, 'L'), (7, 8, 'R')], || format!("worked fixture records {recs:?}"))?;
    Ok(format!("{count} traces agree; fixture records {recs:?}"))
}

/// Entropy by the expanded form `ln S - (1/S) sum c ln c`.
fn oracle_entropy(c: &[f64]) -> f64 {
    let s: f64 = c.iter().sum();
    s.ln() - c.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>() / s
}

fn oracle_argmin(c: &[f64]) -> usize {
    let candidates: Vec<Vec<f64>> = (0..c.len() - 1)
        .map(|i| {
            let mut v = c.to_vec();
            let m = (v[i] + v[i + 1]) / 2.0;
            v.splice(i..i + 2, [m]);
            v
        })
        .collect();
    let h: Vec<f64> = candidates.iter().map(|v| oracle_entropy(v)).collect();
    let min = h.iter().copied().fold(f64::INFINITY, f64::min);
    h.iter().position(|&x| x <= min + 1e-12).unwrap()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ties = 0;
    for trial in 0..1000 {
        let n = rng.random_range(2..=32);
        // half the vectors on a coarse grid so equal candidates occur
        let coarse = trial % 2 == 0;
        let c: Vec<f64> = (0..n)
            .map(|_| {
                if coarse {
                    rng.random_range(1..=5) as f64 / 5.0
                } else {
                    rng.random_range(0.001..=1.0)
                }
            })
            .collect();
        let got = entropy_argmin(&pool_candidates(&c).unwrap()).unwrap();
        let want = oracle_argmin(&c);
        ensure(got == want, || format!("trial {trial}: {c:?} -> {got}, oracle {want}"))?;
        let cands = pool_candidates(&c).unwrap();
        let h: Vec<f64> = cands.iter().map(|v| oracle_entropy(v)).collect();
        let min = h.iter().copied().fold(f64::INFINITY, f64::min);
        if h.iter().filter(|&&x| x <= min + 1e-12).count() > 1 {
            ties += 1;
        }
    }
    let fixture = entropy_argmin(&pool_candidates(&[0.9, 0.9, 0.1, 0.9]).unwrap()).unwrap();
    ensure(fixture == 0, || format!("fixture selects {fixture}"))?;
    let (mut violations, mut updates) = (0, 0);
    for _ in 0..10_000 {
        let mode = if rng.random_bool(0.5) {
            PoolingMode::Pair
        } else {
            PoolingMode::Triple
        };
        let dim = rng.random_range(1..=16);
        let cap = rng.random_range(3..=32);
        let mut m = ShortTermMemory::new(dim, cap, mode).unwrap();
        for _ in 0..rng.random_range(1..=80) {
            let c = rng.random_range(0.01..=1.0);
            let h = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            m.forget_and_append(h, c).unwrap();
            updates += 1;
            if m.len() > cap || m.len() != m.confidences().len() {
                violations += 1;
            }
        }
    }
    ensure(violations == 0, || format!("{violations} capacity violations"))?;
    Ok(format!(
        "1000/1000 agree ({ties} with ties); fixture -> 0; 0 violations in 10^4 sequences ({updates} updates)"
    ))
}

fn oracle_topk(bucket: &[StoreEntry], v: &[f64], k: usize) -> Vec<(usize, f64)> {
    let cos = |a: &[f64]| {
        let (mut d, mut na, mut nb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(v) {
            d += x * y;
            na += x * x;
            nb += y * y;
        }
        d / (na.sqrt() * nb.sqrt())
    };
    let mut all: Vec<(usize, f64)> = bucket.iter().enumerate().map(|(i, e)| (i, cos(&e.obs))).collect();
    // stable sort keeps insertion order among equal similarities
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    all.truncate(k);
    all
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draw = |rng: &mut ChaCha8Rng, dim: usize| loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-2..=2) as f64).collect();
        if v.iter().any(|&x| x != 0.0) {
            return v;
        }
    };
    let mut compared = 0;
    for trial in 0..1000 {
        // small dimensions produce many exact similarity ties
        let dim = if trial % 2 == 0 { rng.random_range(1..=4) } else { rng.random_range(1..=64) };
        let m = rng.random_range(0..=1000);
        let mut bucket: Vec<StoreEntry> = Vec::with_capacity(m);
        for _ in 0..m {
            let obs = if !bucket.is_empty() && rng.random_bool(0.2) {
                bucket[rng.random_range(0..bucket.len())].obs.clone()
            } else {
                draw(&mut rng, dim)
            };
            bucket.push(StoreEntry { obs, act: [0.25; 4] });
        }
        let q = draw(&mut rng, dim);
        let k = rng.random_range(1..=16);
        let got: Vec<(usize, f64)> = retrieve_topk(&bucket, &q, k)
            .unwrap()
            .iter()
            .map(|r| (r.index, r.similarity))
            .collect();
        let want = oracle_topk(&bucket, &q, k);
        ensure(got == want, || format!("trial {trial}: {got:?} != {want:?}"))?;
        compared += got.len();
    }
    Ok(format!("1000/1000 stores agree ({compared} ranked entries)"))
}

fn criterion_6() -> Outcome {
    let scenes = common::scenes(10);
    let tasks = common::tasks(&scenes, 10);
    let cfg = RunConfig {
        workers: 4,
        ..RunConfig::default()
    };
    let expert = ExpertPolicy {
        robot: RobotConfig::spot(),
    };
    let e = run_suite(&scenes, &tasks, &expert, &cfg, None).map_err(|e| e.to_string())?.report.metrics;
    let ne = e.ne.unwrap_or(f64::INFINITY);
    ensure(
        e.episodes == 100 && [e.sr, e.isr, e.csr, e.cgt] == [1.0; 4] && ne <= 1.0,
        || format!("expert: {e:?}"),
    )?;
    let r = run_suite(&scenes, &tasks, &RandomPolicy, &cfg, None).map_err(|e| e.to_string())?.report.metrics;
    ensure(r.sr <= 0.02, || format!("random SR {}", r.sr))?;
    Ok(format!(
        "expert SR={} ISR={} CSR={} CGT={} NE={ne:.3}; random SR={} ISR={:.3}",
        e.sr, e.isr, e.csr, e.cgt, r.sr, r.isr
    ))
}

fn random_samples(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Sample> {
    (0..n)
        .map(|_| {
            let x = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
            Sample {
                x,
                target: DecisionVector(w).normalized().unwrap(),
            }
        })
        .collect()
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dim = 6;
    let data = random_samples(&mut rng, 24, dim);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for draw in 0..100 {
        let theta: Vec<f64> = (0..4 * (dim + 1)).map(|_| rng.random_range(-2.0..2.0)).collect();
        let model = LinearSoftmax::from_weights(dim, theta.clone()).unwrap();
        let g = model.gradient(&data).unwrap();
        let fd: Vec<f64> = (0..theta.len())
            .map(|j| {
                let mut plus = model.clone();
                plus.weights_mut()[j] += h;
                let mut minus = model.clone();
                minus.weights_mut()[j] -= h;
                (plus.loss(&data).unwrap() - minus.loss(&data).unwrap()) / (2.0 * h)
            })
            .collect();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) / norm(&g).max(norm(&fd)).max(1e-300);
        worst = worst.max(rel);
        ensure(rel <= 1e-5, || format!("draw {draw}: relative error {rel:e}"))?;
    }
    let mut model = LinearSoftmax::zeros(dim);
    let lr = stable_learning_rate(&data);
    let report = train_backend(&mut model, &data, 100, lr).map_err(|e| e.to_string())?;
    let bad = report.losses.windows(2).position(|w| w[1] > w[0]);
    ensure(bad.is_none(), || format!("loss rose at epoch {bad:?}: {:?}", report.losses))?;
    Ok(format!(
        "max relative error {worst:.2e}; loss {:.4} -> {:.4} over 100 epochs",
        report.losses[0],
        report.final_loss()
    ))
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir.join("trajectories"))
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let scenes = common::scenes(3);
    let tasks = common::tasks(&scenes, 6);
    let cfg = RunConfig {
        budget: 60,
        seed: 11,
        workers: 1,
        ..RunConfig::default()
    };
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str, tasks: &[lhnav::taskforge::TaskSpec], workers: usize| {
        let out = tmp.path().join(name);
        let cfg = RunConfig { workers, ..cfg.clone() };
        run_suite(&scenes, tasks, &RandomPolicy, &cfg, Some(&out)).map(|o| (out, o.report))
    };
    let (a, ra) = run("a", &tasks, 1).map_err(|e| e.to_string())?;
    let (b, rb) = run("b", &tasks, 1).map_err(|e| e.to_string())?;
    let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
    ensure(fa.len() == tasks.len() && fa == fb, || "trajectory files differ between identical runs".into())?;
    let mut shuffled = tasks.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(8));
    let (c, rc) = run("c", &shuffled, 4).map_err(|e| e.to_string())?;
    ensure(ra == rb && ra == rc, || format!("reports differ: {ra:?} / {rc:?}"))?;
    let read = |d: &Path| std::fs::read(d.join("report.json")).unwrap();
    ensure(read(&a) == read(&c), || "report.json differs across worker counts".into())?;
    ensure(dir_bytes(&c) == fa, || "trajectories differ across worker counts".into())?;
    let bytes: usize = fa.values().map(Vec::len).sum();
    Ok(format!("{} files ({bytes} bytes) identical; reports equal under 4 workers + shuffle", fa.len()))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut flips = 0;
    for trial in 0..1000 {
        let episodes: Vec<EpisodeResult> = (0..rng.random_range(1..=5))
            .map(|e| {
                let n = rng.random_range(1..=5);
                let s: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
                let gt: Vec<f64> = (0..n).map(|_| rng.random_range(0.25..15.0)).collect();
                ep(&format!("t{e}"), &s, &gt)
            })
            .collect();
        let score = |r: &[EpisodeResult]| [isr(r), csr(r), cgt(r), task_sr(r)].map(Result::unwrap);
        let base = score(&episodes);
        for e in 0..episodes.len() {
            for i in 0..episodes[e].records.len() {
                if episodes[e].records[i].success {
                    continue;
                }
                let mut flipped = episodes.clone();
                flipped[e].records[i] = SubtaskRecord::outcome(true, episodes[e].records[i].gt);
                let after = score(&flipped);
                flips += 1;
                ensure(after.iter().zip(&base).all(|(a, b)| a >= b), || {
                    format!("trial {trial} flip ({e},{i}): {base:?} -> {after:?}")
                })?;
            }
        }
        MetricReport::evaluate(&episodes, NeMode::ForcedStop).map_err(|e| e.to_string())?;
    }
    Ok(format!("{flips} single flips, none decreased ISR/CSR/CGT/SR"))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("metric exactness", criterion_1),
        ("TAR", criterion_2),
        ("splitter oracle", criterion_3),
        ("entropy forgetting oracle", criterion_4),
        ("retrieval oracle", criterion_5),
        ("expert and random baselines", criterion_6),
        ("gradient check", criterion_7),
        ("determinism", criterion_8),
        ("monotonicity", criterion_9),
    ];
    // the stderr handle bypasses libtest capture, so the lines always show
    let mut err = std::io::stderr();
    let mut failed = Vec::new();
    for (n, (name, f)) in criteria.iter().enumerate() {
        let start = std::time::Instant::now();
        let line = match f() {
            Ok(detail) => format!(
                "criterion {} {name}: PASS ({detail}) [{:.1}s]",
                n + 1,
                start.elapsed().as_secs_f64()
            ),
            Err(why) => {
                failed.push(n + 1);
                format!("criterion {} {name}: FAIL ({why})", n + 1)
            }
        };
        writeln!(err, "{line}").unwrap();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
