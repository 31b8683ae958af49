//! Diagnostic: sample many affordance fields on a held-out scene and report
//! how often the positive crop covers exactly one slot, and which slot
//! dominates each sample.

use std::path::Path;

use dap::afford::{make_schedule, sample_affordance, CachedDenoiser, Denoiser};
use dap::config::RunConfig;
use dap::env::gen_scene;
use dap::geom::apply_transform;
use dap::tensor::{load_checkpoint, ParamStore};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let out = args.get(1).cloned().unwrap_or_else(|| "/tmp/full".into());
    let samples: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(64);

    let (loaded, meta) = load_checkpoint(Path::new(&format!("{out}/checkpoints/afford.ckpt"))).unwrap();
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
    let sched = make_schedule(100, 1e-4, 0.02).unwrap();

    let scene = gen_scene(cfg.task, 7 + 10_000).unwrap();
    let cached = CachedDenoiser::new(&den, &store, &scene.container).unwrap();

    // per-slot sets of container indices within eps_place of the placed object
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
    // exclusive regions: points positive for exactly one slot (shared
    // dividers are legitimately positive for two adjacent slots)
    let slot_sets: Vec<Vec<bool>> = (0..raw_sets.len())
        .map(|k| {
            (0..scene.container.len())
                .map(|i| raw_sets[k][i] && raw_sets.iter().enumerate().all(|(j, s)| j == k || !s[i]))
                .collect()
        })
        .collect();
    for (k, set) in slot_sets.iter().enumerate() {
        let raw = raw_sets[k].iter().filter(|&&b| b).count();
        let excl = set.iter().filter(|&&b| b).count();
        println!("slot {k}: {raw} labeled, {excl} exclusive");
    }

    let mut dominant = vec![0usize; scene.slot_count];
    let mut single = 0usize;
    for s in 0..samples {
        let field = sample_affordance(&cached, &scene.container, &sched, s as u64, false).unwrap();
        let scores = &field.clamped;
        // slot hit = at least 10% (min 1) of the slot's labeled points positive
        let mut hits = Vec::new();
        let mut overlaps = Vec::new();
        for set in &slot_sets {
            let total = set.iter().filter(|&&b| b).count();
            let pos = set
                .iter()
                .zip(scores)
                .filter(|(&b, &s)| b && s > 0.0)
                .count();
            overlaps.push(pos);
            if pos >= ((total / 4).max(1)) {
                hits.push(pos);
            }
        }
        if hits.len() == 1 {
            single += 1;
        }
        let best = overlaps
            .iter()
            .enumerate()
            .max_by_key(|(_, &v)| v)
            .map(|(i, _)| i)
            .unwrap();
        dominant[best] += 1;
        if s < 8 {
            let raw = &field.raw;
            let mut lo = 0;
            let mut mid = 0;
            let mut hi = 0;
            for &v in raw {
                if v < -0.5 { lo += 1 } else if v > 0.5 { hi += 1 } else { mid += 1 }
            }
            println!(
                "sample {s}: overlaps {overlaps:?}, hits {}, raw<-0.5 {lo}, mid {mid}, >0.5 {hi}, min {:.2} max {:.2}",
                hits.len(),
                raw.iter().cloned().fold(f64::INFINITY, f64::min),
                raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            );
        }
    }
    println!(
        "{samples} samples: dominant per slot {dominant:?}, single-slot {single}/{samples} ({:.0}%)",
        100.0 * single as f64 / samples as f64
    );
}
