//! Diagnostic: load trained checkpoints and break an evaluation run down into
//! candidate generation vs ranking quality.

use std::path::Path;

use dap::afford::{make_schedule, CachedDenoiser, Denoiser};
use dap::config::RunConfig;
use dap::corr::CorrModel;
use dap::env::{evaluate_placement, gen_scene, sample_demonstration};
use dap::pose::infer_storage_pose;
use dap::tensor::{load_checkpoint, ParamStore};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn load(store: &ParamStore, path: &str) {
    let (loaded, _) = load_checkpoint(Path::new(path)).unwrap();
    for (name, t) in loaded.iter() {
        store.get(name).set_data(t.to_vec());
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let out = args.get(1).cloned().unwrap_or_else(|| "/tmp/full".into());
    let margin: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.005);
    let episodes: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(15);

    let cfg = RunConfig::default();
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let mut den_store = ParamStore::new();
    let den = Denoiser::init(&mut den_store, &cfg.denoiser, &mut rng).unwrap();
    load(&den_store, &format!("{out}/checkpoints/afford.ckpt"));
    let mut corr_store = ParamStore::new();
    let corr = CorrModel::init(&mut corr_store, &cfg.corr, &mut rng).unwrap();
    load(&corr_store, &format!("{out}/checkpoints/corr.ckpt"));
    let sched = make_schedule(100, 1e-4, 0.02).unwrap();

    let mut best_ok = 0;
    let mut any_ok = 0;
    for e in 0..episodes {
        let scene_seed = 7 + 10_000 + e as u64;
        let scene = gen_scene(cfg.task, scene_seed).unwrap();
        let demo = sample_demonstration(&scene, scene_seed ^ 0xA5A5_A5A5);
        let cached = CachedDenoiser::new(&den, &den_store, &scene.container).unwrap();
        let result = infer_storage_pose(
            &cached, &corr, &corr_store, &scene.container, &demo.object,
            8, &sched, margin, scene_seed.wrapping_mul(131).wrapping_add(17),
        );
        let result = match result {
            Ok(r) => r,
            Err(err) => {
                println!("ep {e}: all candidates failed: {err}");
                continue;
            }
        };
        let evals: Vec<_> = result
            .ranked
            .iter()
            .map(|c| (evaluate_placement(&scene, &c.transform, &demo.object).unwrap(), c))
            .collect();
        let best = &evals[0];
        let n_succ = evals.iter().filter(|(ep, _)| ep.success).count();
        if best.0.success {
            best_ok += 1;
        }
        if n_succ > 0 {
            any_ok += 1;
        }
        let c = best.1.transform.apply(demo.object.centroid());
        let slot = scene
            .slot_poses
            .iter()
            .min_by(|a, b| a.translation.dist(c).partial_cmp(&b.translation.dist(c)).unwrap())
            .unwrap();
        println!(
            "ep {e}: best success={} (pos {:.3} rot {:.3} evcoll {} crop {} coll {} match {}), dt [{:+.3} {:+.3} {:+.3}], {}/{} candidates succeed",
            best.0.success, best.0.pos_error, best.0.rot_error, best.0.collision_points, best.1.crop_size, best.1.collision_count,
            best.1.match_count,
            c.x - slot.translation.x, c.y - slot.translation.y, c.z - slot.translation.z,
            n_succ, evals.len()
        );
    }
    println!("margin {margin}: ranked-best {best_ok}/{episodes}, any-candidate {any_ok}/{episodes}");
}
