//! Acceptance suite: nine end-to-end criteria with pinned tolerances.
//!
//! Every test prints exactly one `criterion N: PASS/FAIL — detail` line
//! before asserting, so a failed run still reports the measured values.
//!
//! The heavy pipelines (datasets, training, evaluation) run once inside a
//! shared fixture; every test touches the fixture first so the work is
//! fully serialized and the timing criteria are measured on an otherwise
//! idle core.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use once_cell::sync::Lazy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;
use tempfile::TempDir;

use dap::afford::{make_schedule, q_sample, sample_affordance, CachedDenoiser, Denoiser, DenoiserConfig};
use dap::cli;
use dap::config::RunConfig;
use dap::corr::focal_loss;
use dap::env::{gen_scene, sample_demonstration, TaskKind};
use dap::geom::{apply_transform, PointCloud, RigidTransform, Vec3};
use dap::labeling::{label_affordance, label_correspondence, sample_demo_crop};
use dap::pose::arun_solve;
use dap::tensor::{grad_check, load_checkpoint, ParamStore, Tensor};

const SHELF_AFFORD_STEPS: usize = 18_000;
const SHELF_CORR_STEPS: usize = 6_000;
const CAP_STEPS: usize = 3_000;
const CABINET_AFFORD_STEPS: usize = 18_000;
const CABINET_CORR_STEPS: usize = 6_000;
const DETERMINISM_STEPS: usize = 1_000;

fn run_cli(args: &[&str]) -> i32 {
    let owned: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    cli::run(&owned)
}

fn must_run(args: &[&str]) {
    let code = run_cli(args);
    assert_eq!(code, 0, "cli {args:?} exited with {code}");
}

fn read_json(path: &Path) -> Value {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("read {path:?}: {e}"));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parse {path:?}: {e}"))
}

struct TaskRun {
    _dir: TempDir,
    out: PathBuf,
    gen: Duration,
    afford: Duration,
    corr: Duration,
    eval: Duration,
    report: Value,
}

fn run_task_pipeline(task: &str, afford_steps: usize, corr_steps: usize) -> TaskRun {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    let af = afford_steps.to_string();
    let co = corr_steps.to_string();

    let t0 = Instant::now();
    // enough demos per scene that nearly every scene demonstrates all slots
    must_run(&["gen-data", "--task", task, "--seed", "7", "--scenes", "40", "--demos", "10", "--out", o]);
    let gen = t0.elapsed();

    let t0 = Instant::now();
    must_run(&["train-afford", "--task", task, "--seed", "1", "--out", o, "--train.steps", &af]);
    let afford = t0.elapsed();

    let t0 = Instant::now();
    must_run(&["train-corr", "--task", task, "--seed", "2", "--out", o, "--train.steps", &co]);
    let corr = t0.elapsed();

    let t0 = Instant::now();
    must_run(&["eval", "--task", task, "--seed", "7", "--out", o, "--episodes", "50"]);
    let eval = t0.elapsed();

    let report = read_json(&out.join("reports/eval_dap.json"));
    TaskRun { _dir: dir, out, gen, afford, corr, eval, report }
}

struct ModeCoverage {
    dominant: Vec<usize>,
    single_slot: usize,
    samples: usize,
    duration: Duration,
}

/// 64 affordance fields on one held-out shelf scene: which slot dominates
/// each sample, and how many samples activate exactly one slot. Slots are
/// compared on their exclusive label regions (adjacent slots legitimately
/// share divider points, which would read as multi-slot even for a perfect
/// field). A slot survives the crop when at least a quarter of its exclusive
/// region scores positive; the dominant slot has the largest positive
/// overlap.
fn measure_mode_coverage(shelf: &TaskRun) -> ModeCoverage {
    let t0 = Instant::now();
    let (loaded, meta) = load_checkpoint(&shelf.out.join("checkpoints/afford.ckpt")).unwrap();
    let mut cfg = RunConfig::default();
    for (k, v) in &meta {
        let _ = cfg.set(k, v);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let den = Denoiser::init(&mut store, &cfg.denoiser, &mut rng).unwrap();
    for (name, t) in loaded.iter() {
        store.get(name).set_data(t.to_vec());
    }
    let sched = make_schedule(cfg.schedule.steps, cfg.schedule.beta_start, cfg.schedule.beta_end).unwrap();

    let scene = gen_scene(TaskKind::Shelf, 7 + 10_000).unwrap();
    let cached = CachedDenoiser::new(&den, &store, &scene.container).unwrap();
    let raw_sets: Vec<Vec<bool>> = scene
        .slot_poses
        .iter()
        .map(|pose| {
            let placed = apply_transform(&scene.object_template, pose);
            scene
                .container
                .positions
                .iter()
                .map(|p| placed.positions.iter().any(|q| p.dist(*q) <= cfg.label.eps_place))
                .collect()
        })
        .collect();
    let slot_sets: Vec<Vec<bool>> = (0..raw_sets.len())
        .map(|k| {
            (0..scene.container.len())
                .map(|i| {
                    raw_sets[k][i] && raw_sets.iter().enumerate().all(|(j, s)| j == k || !s[i])
                })
                .collect()
        })
        .collect();

    let samples = 64;
    let mut dominant = vec![0usize; scene.slot_count];
    let mut single_slot = 0usize;
    for s in 0..samples {
        let field = sample_affordance(&cached, &scene.container, &sched, s as u64, false).unwrap();
        let mut hits = 0usize;
        let mut overlaps = Vec::new();
        for set in &slot_sets {
            let total = set.iter().filter(|&&b| b).count();
            let pos = set.iter().zip(&field.clamped).filter(|(&b, &s)| b && s > 0.0).count();
            overlaps.push(pos);
            if pos >= (total / 4).max(1) {
                hits += 1;
            }
        }
        if hits == 1 {
            single_slot += 1;
        }
        let best = overlaps.iter().enumerate().max_by_key(|(_, &v)| v).map(|(i, _)| i).unwrap();
        dominant[best] += 1;
    }
    ModeCoverage { dominant, single_slot, samples, duration: t0.elapsed() }
}

/// Snapshot of every artifact byte under `out` keyed by relative path.
/// Training logs are skipped: they record wall-clock timings, which are the
/// one legitimately non-deterministic output. Checkpoints, datasets, and
/// evaluation reports must match bit for bit.
fn artifact_bytes(out: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    let mut stack = vec![out.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(out).unwrap().to_string_lossy().into_owned();
                if rel.ends_with(".log.jsonl") {
                    continue;
                }
                map.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    map
}

struct DeterminismRun {
    identical: bool,
    detail: String,
}

/// Two gen→train→eval runs with identical config and seeds, into the same
/// directory path (so embedded config paths match), compared byte-for-byte.
fn run_determinism_check() -> DeterminismRun {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    let steps = DETERMINISM_STEPS.to_string();
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        if out.exists() {
            fs::remove_dir_all(&out).unwrap();
        }
        must_run(&["gen-data", "--task", "shelf", "--seed", "3", "--scenes", "12", "--demos", "2", "--out", o]);
        must_run(&["train-afford", "--seed", "4", "--out", o, "--train.steps", &steps]);
        must_run(&["train-corr", "--seed", "5", "--out", o, "--train.steps", &steps]);
        must_run(&["eval", "--seed", "3", "--out", o, "--episodes", "3"]);
        snapshots.push(artifact_bytes(&out));
    }
    let (a, b) = (&snapshots[0], &snapshots[1]);
    if a.keys().collect::<Vec<_>>() != b.keys().collect::<Vec<_>>() {
        return DeterminismRun {
            identical: false,
            detail: format!("file sets differ: {:?} vs {:?}", a.keys(), b.keys()),
        };
    }
    for (name, bytes) in a {
        if b[name] != *bytes {
            return DeterminismRun { identical: false, detail: format!("{name} differs between runs") };
        }
    }
    DeterminismRun { identical: true, detail: format!("{} artifacts bitwise identical", a.len()) }
}

struct Pipelines {
    shelf: TaskRun,
    cabinet: TaskRun,
    cap_report: Value,
    cap_eval: Duration,
    coverage: ModeCoverage,
    determinism: DeterminismRun,
}

static PIPELINES: Lazy<Pipelines> = Lazy::new(|| {
    let shelf = run_task_pipeline("shelf", SHELF_AFFORD_STEPS, SHELF_CORR_STEPS);
    let coverage = measure_mode_coverage(&shelf);

    let o = shelf.out.to_str().unwrap().to_string();
    must_run(&["train-cap", "--seed", "1", "--out", &o, "--train.steps", &CAP_STEPS.to_string()]);
    let t0 = Instant::now();
    must_run(&["eval", "--seed", "7", "--out", &o, "--episodes", "50", "--mode", "cap"]);
    let cap_eval = t0.elapsed();
    let cap_report = read_json(&shelf.out.join("reports/eval_cap.json"));

    let cabinet = run_task_pipeline("cabinet", CABINET_AFFORD_STEPS, CABINET_CORR_STEPS);
    let determinism = run_determinism_check();

    Pipelines { shelf, cabinet, cap_report, cap_eval, coverage, determinism }
});

fn report_line(n: usize, pass: bool, detail: &str) -> bool {
    println!("criterion {n}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

// ---------------------------------------------------------------------------
// criterion 1: Arun oracle
// ---------------------------------------------------------------------------

fn random_rotation(rng: &mut ChaCha12Rng) -> RigidTransform {
    let axis = Vec3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let axis = if axis.norm() < 1e-6 { Vec3::new(1.0, 0.0, 0.0) } else { axis };
    RigidTransform::from_axis_angle(axis, rng.gen_range(-3.1..3.1))
}

fn frobenius(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += (a[i][j] - b[i][j]).powi(2);
        }
    }
    s.sqrt()
}

#[test]
fn criterion_1_arun_oracle() {
    // TEMP: fixture bypass
    let _ = &*PIPELINES;
    let t0 = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let mut max_rot = 0.0f64;
    let mut max_trans = 0.0f64;
    let mut max_noisy_trans = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(10..=200);
        let src: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut truth = random_rotation(&mut rng);
        truth.translation = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let dst: Vec<Vec3> = src.iter().map(|p| truth.apply(*p)).collect();
        let w = vec![1.0; n];

        let solved = arun_solve(&src, &dst, &w).unwrap();
        max_rot = max_rot.max(frobenius(&solved.rotation, &truth.rotation));
        max_trans = max_trans.max(solved.translation.dist(truth.translation));

        let noisy: Vec<Vec3> = dst
            .iter()
            .map(|p| {
                let dx: f64 = StandardNormal.sample(&mut rng);
                let dy: f64 = StandardNormal.sample(&mut rng);
                let dz: f64 = StandardNormal.sample(&mut rng);
                Vec3::new(p.x + 1e-3 * dx, p.y + 1e-3 * dy, p.z + 1e-3 * dz)
            })
            .collect();
        let solved = arun_solve(&src, &noisy, &w).unwrap();
        max_noisy_trans = max_noisy_trans.max(solved.translation.dist(truth.translation));
    }
    let elapsed = t0.elapsed();
    let pass = max_rot < 1e-9 && max_trans < 1e-9 && max_noisy_trans < 5e-3 && elapsed < Duration::from_secs(1);
    let ok = report_line(
        1,
        pass,
        &format!(
            "rot Frobenius {max_rot:.2e} (<1e-9), translation {max_trans:.2e} (<1e-9), noisy translation {max_noisy_trans:.2e} (<5e-3), {elapsed:.2?} (<1s)"
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// criterion 2: label-oracle equivalence
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_label_oracle_equivalence() {
    // TEMP: fixture bypass
    let _ = &*PIPELINES;
    let t0 = Instant::now();
    let cfg = RunConfig::default().label;
    let mut checked = 0usize;
    for d in 0..100u64 {
        let task = if d % 2 == 0 { TaskKind::Shelf } else { TaskKind::Cabinet };
        let scene = gen_scene(task, 40_000 + d).unwrap();
        let demo = sample_demonstration(&scene, d ^ 0x9E37);
        let placed = apply_transform(&demo.object, &demo.goal);

        let got = label_affordance(&demo, &cfg).unwrap();
        let want: Vec<f64> = demo
            .container
            .positions
            .iter()
            .map(|p| {
                let min = placed
                    .positions
                    .iter()
                    .map(|q| p.dist(*q))
                    .fold(f64::INFINITY, f64::min);
                if min < cfg.eps_place {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        assert_eq!(got, want, "affordance labels diverge on demo {d}");

        let crop = sample_demo_crop(&demo.container, &demo.object, &demo.goal, &cfg, d).unwrap();
        let got = label_correspondence(&crop, &demo.object, &demo.goal, &cfg).unwrap();
        let n_c = crop.len();
        let mut want = vec![0.0; demo.object.len() * n_c];
        for (i, v) in placed.positions.iter().enumerate() {
            for (j, w) in crop.positions.iter().enumerate() {
                if v.dist(*w) < cfg.eps_corr {
                    want[i * n_c + j] = 1.0;
                }
            }
        }
        assert_eq!(got, want, "correspondence labels diverge on demo {d}");
        checked += 1;
    }
    let elapsed = t0.elapsed();
    let pass = checked == 100 && elapsed < Duration::from_secs(30);
    let ok = report_line(2, pass, &format!("{checked}/100 demos bit-exact in {elapsed:.2?} (<30s)"));
    assert!(ok);
}

// ---------------------------------------------------------------------------
// criterion 3: gradient suite
// ---------------------------------------------------------------------------

/// Scalarize an op output by a fixed pseudo-random weighting so that
/// cancellation cannot mask per-element gradient errors.
fn weighted_sum(t: &Tensor, seed: u64) -> dap::error::Result<Tensor> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..t.numel()).map(|_| rng.gen_range(0.5..1.5)).collect();
    t.mul(&Tensor::from_vec(t.shape(), w))?.sum_all().into_result()
}

trait IntoResult {
    fn into_result(self) -> dap::error::Result<Tensor>;
}
impl IntoResult for Tensor {
    fn into_result(self) -> dap::error::Result<Tensor> {
        Ok(self)
    }
}

fn rand_param(shape: &[usize], rng: &mut ChaCha12Rng, lo: f64, hi: f64) -> Tensor {
    let data: Vec<f64> = (0..shape.iter().product::<usize>()).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::param(shape, data)
}

#[test]
fn criterion_3_gradient_suite() {
    // TEMP: fixture bypass
    let _ = &*PIPELINES;
    let t0 = Instant::now();
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    const SHAPES: usize = 20;
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    let mut worst: (f64, &'static str) = (0.0, "none");
    let mut ops_checked = 0usize;

    // every op gets SHAPES random-shape checks; `mk` builds the scalar probe
    let mut check = |name: &'static str,
                     rng: &mut ChaCha12Rng,
                     mk: &mut dyn FnMut(&mut ChaCha12Rng) -> (Tensor, Box<dyn Fn(&Tensor) -> dap::error::Result<Tensor>>)| {
        let mut op_worst = 0.0f64;
        for _ in 0..SHAPES {
            let (x, f) = mk(rng);
            let report = grad_check(|t| f(t), &x, H, TOL)
                .unwrap_or_else(|e| panic!("grad_check {name}: {e}"));
            op_worst = op_worst.max(report.max_rel_err);
            assert!(report.pass, "{name} failed grad check: rel err {:.3e}", report.max_rel_err);
        }
        if op_worst > worst.0 {
            worst = (op_worst, name);
        }
        ops_checked += 1;
    };

    let dims = |rng: &mut ChaCha12Rng| (rng.gen_range(2..6), rng.gen_range(2..6));

    check("add", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, -1.0, 1.0);
        let y = rand_param(&[r, c], rng, -1.0, 1.0);
        (x, Box::new(move |t| weighted_sum(&t.add(&y)?, 1)))
    });
    check("sub", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, -1.0, 1.0);
        let y = rand_param(&[r, c], rng, -1.0, 1.0);
        (x, Box::new(move |t| weighted_sum(&t.sub(&y)?, 2)))
    });
    check("mul", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, 0.5, 1.5);
        let y = rand_param(&[r, c], rng, 0.5, 1.5);
        (x, Box::new(move |t| weighted_sum(&t.mul(&y)?, 3)))
    });
    check("mul_scalar", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, -1.0, 1.0);
        let s = rng.gen_range(0.5..2.0);
        (x, Box::new(move |t| weighted_sum(&t.mul_scalar(s), 4)))
    });
    check("add_scalar", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, -1.0, 1.0);
        let s = rng.gen_range(-1.0..1.0);
        (x, Box::new(move |t| weighted_sum(&t.add_scalar(s), 5)))
    });
    check("matmul_lhs", &mut rng, &mut |rng| {
        let (r, k) = dims(rng);
        let c = rng.gen_range(2..6);
        let x = rand_param(&[r, k], rng, -1.0, 1.0);
        let y = rand_param(&[k, c], rng, -1.0, 1.0);
        (x, Box::new(move |t| weighted_sum(&t.matmul(&y)?, 6)))
    });
    check("matmul_rhs", &mut rng, &mut |rng| {
        let (r, k) = dims(rng);
        let c = rng.gen_range(2..6);
        let a = rand_param(&[r, k], rng, -1.0, 1.0);
        let x = rand_param(&[k, c], rng, -1.0, 1.0);
        (x, Box::new(move |t| weighted_sum(&a.matmul(t)?, 7)))
    });
    check("transpose", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, -1.0, 1.0);
        (x, Box::new(move |t| weighted_sum(&t.transpose()?, 8)))
    });
    check("concat_cols", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, -1.0, 1.0);
        let y = rand_param(&[r, rng.gen_range(2..5)], rng, -1.0, 1.0);
        (x, Box::new(move |t| weighted_sum(&Tensor::concat_cols(&[t, &y])?, 9)))
    });
    check("concat_rows", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, -1.0, 1.0);
        let y = rand_param(&[rng.gen_range(2..5), c], rng, -1.0, 1.0);
        (x, Box::new(move |t| weighted_sum(&Tensor::concat_rows(&[t, &y])?, 10)))
    });
    check("gather_rows", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, -1.0, 1.0);
        let idx: Vec<usize> = (0..rng.gen_range(2..7)).map(|_| rng.gen_range(0..r)).collect();
        (x, Box::new(move |t| weighted_sum(&t.gather_rows(&idx)?, 11)))
    });
    check("broadcast_rows", &mut rng, &mut |rng| {
        let c = rng.gen_range(2..6);
        let x = rand_param(&[1, c], rng, -1.0, 1.0);
        let n = rng.gen_range(2..7);
        (x, Box::new(move |t| weighted_sum(&t.broadcast_rows(n)?, 12)))
    });
    check("softmax_last", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, -2.0, 2.0);
        (x, Box::new(move |t| weighted_sum(&t.softmax_last()?, 13)))
    });
    check("layer_norm_last", &mut rng, &mut |rng| {
        let r = rng.gen_range(2..6);
        let c = rng.gen_range(3..7);
        let x = rand_param(&[r, c], rng, -2.0, 2.0);
        (x, Box::new(move |t| weighted_sum(&t.layer_norm_last()?, 14)))
    });
    check("silu", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, -2.0, 2.0);
        (x, Box::new(move |t| weighted_sum(&t.silu(), 15)))
    });
    check("tanh_t", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, -2.0, 2.0);
        (x, Box::new(move |t| weighted_sum(&t.tanh_t(), 16)))
    });
    check("sigmoid_t", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, -2.0, 2.0);
        (x, Box::new(move |t| weighted_sum(&t.sigmoid_t(), 17)))
    });
    check("ln_t", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, 0.3, 3.0);
        (x, Box::new(move |t| weighted_sum(&t.ln_t(), 18)))
    });
    check("pow_scalar", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, 0.3, 2.0);
        let p = rng.gen_range(1.5..3.0);
        (x, Box::new(move |t| weighted_sum(&t.pow_scalar(p), 19)))
    });
    check("clamp_t", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        // keep samples away from the clamp kinks so the numeric derivative
        // is well-defined
        let x = rand_param(&[r, c], rng, -0.8, 0.8);
        (x, Box::new(move |t| weighted_sum(&t.clamp_t(-1.0, 1.0), 20)))
    });
    check("sum_all", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, -1.0, 1.0);
        (x, Box::new(move |t| t.sum_all().into_result()))
    });
    check("mean_all", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, -1.0, 1.0);
        (x, Box::new(move |t| t.mean_all().into_result()))
    });
    check("row_max_pool", &mut rng, &mut |rng| {
        let r = rng.gen_range(4..8);
        let c = rng.gen_range(2..6);
        let x = rand_param(&[r, c], rng, -1.0, 1.0);
        let groups: Vec<Vec<usize>> = (0..rng.gen_range(2..4))
            .map(|_| {
                let n = rng.gen_range(1..4);
                (0..n).map(|_| rng.gen_range(0..r)).collect()
            })
            .collect();
        (x, Box::new(move |t| weighted_sum(&t.row_max_pool(&groups)?, 21)))
    });
    check("softmax_row_chunks", &mut rng, &mut |rng| {
        let chunk = rng.gen_range(2..4);
        let r = chunk * rng.gen_range(2..4);
        let c = rng.gen_range(2..5);
        let x = rand_param(&[r, c], rng, -2.0, 2.0);
        (x, Box::new(move |t| weighted_sum(&t.softmax_row_chunks(chunk)?, 22)))
    });
    check("sum_row_chunks", &mut rng, &mut |rng| {
        let chunk = rng.gen_range(2..4);
        let r = chunk * rng.gen_range(2..4);
        let c = rng.gen_range(2..5);
        let x = rand_param(&[r, c], rng, -1.0, 1.0);
        (x, Box::new(move |t| weighted_sum(&t.sum_row_chunks(chunk)?, 23)))
    });
    check("mse", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, -1.0, 1.0);
        let y = rand_param(&[r, c], rng, -1.0, 1.0);
        (x, Box::new(move |t| t.mse(&y)))
    });

    // focal loss (Eq. 9 stable form), gradient w.r.t. the predictions
    check("focal_loss", &mut rng, &mut |rng| {
        let (r, c) = dims(rng);
        let x = rand_param(&[r, c], rng, 0.1, 0.9);
        let labels: Vec<f64> = (0..r * c).map(|_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 }).collect();
        let y = Tensor::from_vec(&[r, c], labels);
        (x, Box::new(move |t| focal_loss(t, &y, 2.0)))
    });

    // DDPM loss (Eq. 6) through a miniature denoiser, gradient w.r.t. the
    // input token projection weights
    check("ddpm_loss", &mut rng, &mut |rng| {
        let cfg = DenoiserConfig {
            token_dim: 8,
            num_layers: 1,
            num_heads: 2,
            fourier_freqs: 2,
            encoder_k: 2,
            time_embed_dim: 8,
        };
        let mut store = ParamStore::new();
        let mut init_rng = ChaCha12Rng::seed_from_u64(rng.gen());
        let den = Denoiser::init(&mut store, &cfg, &mut init_rng).unwrap();
        let n = rng.gen_range(4..8);
        let container = random_cloud(n, rng);
        let s0: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let eps: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let t_step = rng.gen_range(1..=100);
        let sched = make_schedule(100, 1e-4, 0.02).unwrap();
        let x = store.get("den.tok.w").clone();
        (x, Box::new(move |_| den.ddpm_loss(&store, &s0, &container, t_step, &eps, &sched)))
    });

    let elapsed = t0.elapsed();
    let pass = elapsed < Duration::from_secs(120);
    let ok = report_line(
        3,
        pass,
        &format!(
            "{ops_checked} ops × {SHAPES} shapes at tol {TOL:.0e}, h={H:.0e}; worst rel err {:.2e} ({}); {elapsed:.2?} (<2min)",
            worst.0, worst.1
        ),
    );
    assert!(ok);
}

fn random_cloud(n: usize, rng: &mut ChaCha12Rng) -> PointCloud {
    let positions: Vec<Vec3> = (0..n)
        .map(|_| Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)))
        .collect();
    let normals: Vec<Vec3> = (0..n)
        .map(|_| {
            Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalized()
        })
        .collect();
    PointCloud::new(positions, normals)
}

// ---------------------------------------------------------------------------
// criterion 4: DDPM statistics
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_ddpm_statistics() {
    // TEMP: fixture bypass
    let _ = &*PIPELINES;
    let t0 = Instant::now();
    let sched = make_schedule(100, 1e-4, 0.02).unwrap();
    let s0 = [0.7];
    let n = 100_000usize;
    let mut rng = ChaCha12Rng::seed_from_u64(404);
    let mut detail = String::new();
    let mut pass = true;
    for &t in &[1usize, 50, 100] {
        let ab = sched.alpha_bar_at(t).unwrap();
        let want_mean = ab.sqrt() * s0[0];
        let want_var = 1.0 - ab;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let s_t = q_sample(&s0, t, &[eps], &sched).unwrap()[0];
            sum += s_t;
            sum_sq += s_t * s_t;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let mean_tol = 3.0 * want_var.sqrt() / (n as f64).sqrt();
        let mean_ok = (mean - want_mean).abs() < mean_tol;
        let var_ok = (var - want_var).abs() < 0.05 * want_var;
        pass &= mean_ok && var_ok;
        detail.push_str(&format!(
            "t={t}: |Δmean| {:.1e} (<{:.1e}), var {:.4} vs {:.4}; ",
            (mean - want_mean).abs(),
            mean_tol,
            var,
            want_var
        ));
    }
    let elapsed = t0.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    detail.push_str(&format!("{elapsed:.2?} (<1min)"));
    let ok = report_line(4, pass, &detail);
    assert!(ok);
}

// ---------------------------------------------------------------------------
// criterion 5: multi-modality coverage
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_multimodality_coverage() {
    let p = &*PIPELINES;
    let cov = &p.coverage;
    let budget = p.shelf.gen + p.shelf.afford + cov.duration;
    let min_dominant = cov.dominant.iter().copied().min().unwrap_or(0);
    let single_frac = cov.single_slot as f64 / cov.samples as f64;
    let pass = min_dominant >= 5 && single_frac >= 0.90 && budget < Duration::from_secs(15 * 60);
    let ok = report_line(
        5,
        pass,
        &format!(
            "dominant per slot {:?} (each ≥5), single-slot {}/{} ({:.0}% ≥90%), gen+train+sample {budget:.1?} (<15min)",
            cov.dominant, cov.single_slot, cov.samples, 100.0 * single_frac
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// criterion 6: end-to-end DAP success rates
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_end_to_end_dap() {
    let p = &*PIPELINES;
    let shelf_rate = p.shelf.report["success_rate"].as_f64().unwrap();
    let cabinet_rate = p.cabinet.report["success_rate"].as_f64().unwrap();
    let pass = shelf_rate >= 0.80 && cabinet_rate >= 0.70;
    let ok = report_line(
        6,
        pass,
        &format!("shelf {shelf_rate:.2} (≥0.80), cabinet {cabinet_rate:.2} (≥0.70), 50 episodes each, K=8"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// criterion 7: CAP ablation direction
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_cap_ablation() {
    let p = &*PIPELINES;
    let dap_rate = p.shelf.report["success_rate"].as_f64().unwrap();
    let cap_rate = p.cap_report["success_rate"].as_f64().unwrap();
    let multi_slot = p.cap_report["multi_slot_fraction"].as_f64().unwrap();
    let gap = dap_rate - cap_rate;
    let pass = gap >= 0.20 && multi_slot >= 0.80;
    let ok = report_line(
        7,
        pass,
        &format!(
            "DAP {dap_rate:.2} vs CAP {cap_rate:.2} (gap {gap:.2} ≥0.20), CAP multi-slot fraction {multi_slot:.2} (≥0.80), cap eval {:.1?}",
            p.cap_eval
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// criterion 8: determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_determinism() {
    let p = &*PIPELINES;
    let ok = report_line(8, p.determinism.identical, &p.determinism.detail);
    assert!(ok);
}

// ---------------------------------------------------------------------------
// criterion 9: pipeline budget
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_pipeline_budget() {
    let p = &*PIPELINES;
    let total = p.shelf.gen + p.shelf.afford + p.shelf.corr + p.shelf.eval;
    let pass = total <= Duration::from_secs(30 * 60);
    let ok = report_line(
        9,
        pass,
        &format!(
            "gen {:.1?} + train-afford {:.1?} + train-corr {:.1?} + eval {:.1?} = {total:.1?} (≤30min)",
            p.shelf.gen, p.shelf.afford, p.shelf.corr, p.shelf.eval
        ),
    );
    assert!(ok);
}
