//! Diagnostic: break DDPM behavior down by timestep. Reports ε-prediction
//! loss per t band, and compares reverse trajectories started from N(0,I)
//! against trajectories started on-manifold (q_sample of a real label
//! field) to separate model quality from prior mismatch.

use std::path::Path;

use dap::afford::{make_schedule, q_sample, reverse_step, CachedDenoiser, Denoiser, NoisePredictor};
use dap::config::RunConfig;
use dap::env::{exact_demonstration, gen_scene, TaskKind};
use dap::labeling::label_affordance;
use dap::tensor::{load_checkpoint, ParamStore};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "/tmp/full".into());
    let cfg = RunConfig::default();
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let den = Denoiser::init(&mut store, &cfg.denoiser, &mut rng).unwrap();
    let (loaded, _) = load_checkpoint(Path::new(&format!("{out}/checkpoints/afford.ckpt"))).unwrap();
    for (name, t) in loaded.iter() {
        store.get(name).set_data(t.to_vec());
    }
    let sched = make_schedule(100, 1e-4, 0.02).unwrap();

    let scene = gen_scene(TaskKind::Shelf, 7 + 10_000).unwrap();
    let n = scene.container.len();
    let cached = CachedDenoiser::new(&den, &store, &scene.container).unwrap();

    // ε loss by t band, averaged over slots and noise draws
    println!("-- eps loss by t --");
    for &t in &[1usize, 10, 30, 50, 70, 85, 95, 100] {
        let mut loss_sum = 0.0;
        let mut cases = 0;
        for slot in 0..scene.slot_count {
            let demo = exact_demonstration(&scene, slot);
            let s0 = label_affordance(&demo, &cfg.label).unwrap();
            for _ in 0..4 {
                let eps: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let s_t = q_sample(&s0, t, &eps, &sched).unwrap();
                let pv = cached.predict(&s_t, t, &scene.container).unwrap();
                let mse: f64 =
                    pv.iter().zip(&eps).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
                loss_sum += mse;
                cases += 1;
            }
        }
        println!("t={t:3}: eps mse {:.4}", loss_sum / cases as f64);
    }

    // reverse trajectories from on-manifold starts: noised true labels
    println!("-- reverse from q_sample(labels, T) --");
    let slot_sets: Vec<Vec<bool>> = (0..scene.slot_count)
        .map(|slot| {
            let demo = exact_demonstration(&scene, slot);
            label_affordance(&demo, &cfg.label)
                .unwrap()
                .iter()
                .map(|&v| v > 0.0)
                .collect()
        })
        .collect();
    let overlaps = |field: &[f64]| -> Vec<usize> {
        slot_sets
            .iter()
            .map(|set| set.iter().zip(field).filter(|(&b, &v)| b && v > 0.0).count())
            .collect()
    };
    for slot in 0..scene.slot_count {
        let demo = exact_demonstration(&scene, slot);
        let s0 = label_affordance(&demo, &cfg.label).unwrap();
        let eps: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut s = q_sample(&s0, 100, &eps, &sched).unwrap();
        for t in (1..=100).rev() {
            let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            s = reverse_step(&cached, &s, t, &scene.container, &z, &sched).unwrap();
        }
        println!("slot {slot}: recovered overlaps {:?}", overlaps(&s));
    }
}
