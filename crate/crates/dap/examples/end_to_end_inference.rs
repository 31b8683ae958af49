//! Minimal end-to-end run through the library API: generate data, train both
//! stages briefly, then infer a storage pose on a held-out scene and score it.
//! Uses a reduced budget; expect a rough but working pipeline.

use std::path::Path;

use dap::afford::{make_schedule, CachedDenoiser, Denoiser, DenoiserConfig};
use dap::config::RunConfig;
use dap::corr::{focal_loss, CorrConfig, CorrModel};
use dap::env::{evaluate_placement, gen_dataset, gen_scene, load_dataset, sample_demonstration};
use dap::pose::infer_storage_pose;
use dap::tensor::{adam_step, AdamState, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    let cfg = RunConfig::default();
    let dir = std::env::temp_dir().join("dap_end_to_end");
    std::fs::create_dir_all(&dir).unwrap();
    let dataset = dir.join("dataset.jsonl");

    let summary = gen_dataset(cfg.task, 12, 2, 7, &cfg.label, &dataset).unwrap();
    println!("dataset: {} records from {} scenes", summary.records, summary.scenes);
    let records = load_dataset(&dataset).unwrap();

    let sched = make_schedule(cfg.schedule.steps, cfg.schedule.beta_start, cfg.schedule.beta_end).unwrap();
    let den_cfg = DenoiserConfig { token_dim: 32, num_layers: 2, ..DenoiserConfig::default() };
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let mut den_store = ParamStore::new();
    let den = Denoiser::init(&mut den_store, &den_cfg, &mut rng).unwrap();
    let mut adam = AdamState::new(1e-3);
    for step in 0..800 {
        let r = &records[step % records.len()];
        let container = r.container.to_cloud();
        let t = rng.gen_range(1..=sched.steps);
        let eps: Vec<f64> = (0..container.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let loss = den.ddpm_loss(&den_store, &r.afford_labels, &container, t, &eps, &sched).unwrap();
        store_step(&den_store, &mut adam, &loss);
        if step % 200 == 0 {
            println!("afford step {step:4}  loss {:.4}", loss.item());
        }
    }

    let corr_cfg = CorrConfig { token_dim: 32, ..CorrConfig::default() };
    let mut corr_store = ParamStore::new();
    let corr = CorrModel::init(&mut corr_store, &corr_cfg, &mut rng).unwrap();
    let mut adam = AdamState::new(1e-3);
    for step in 0..800 {
        let r = &records[step % records.len()];
        let crop = r.crop.to_cloud();
        let object = r.object.to_cloud();
        let flat: Vec<f64> = r.corr_labels.iter().flat_map(|row| row.iter().map(|&v| v as f64)).collect();
        let label = Tensor::from_vec(&[object.len(), crop.len()], flat);
        let loss = focal_loss(&corr.forward(&corr_store, &crop, &object).unwrap(), &label, corr_cfg.gamma).unwrap();
        store_step(&corr_store, &mut adam, &loss);
        if step % 200 == 0 {
            println!("corr step {step:4}  loss {:.4}", loss.item());
        }
    }

    // held-out scene, disjoint seed range from the dataset
    let scene = gen_scene(cfg.task, 10_007).unwrap();
    let demo = sample_demonstration(&scene, 11);
    let cached = CachedDenoiser::new(&den, &den_store, &scene.container).unwrap();
    let result = infer_storage_pose(
        &cached, &corr, &corr_store, &scene.container, &demo.object,
        4, &sched, 0.0, 99,
    )
    .unwrap();
    let best = result.best();
    println!(
        "best candidate: {} matches, {} collisions ({} of {} candidates survived)",
        best.match_count,
        best.collision_count,
        result.ranked.len(),
        result.ranked.len() + result.failures.len()
    );
    let ep = evaluate_placement(&scene, &best.transform, &demo.object).unwrap();
    println!(
        "episode: success = {}, slot = {:?}, pos error = {:.4} m, rot error = {:.4} rad",
        ep.success, ep.matched_mode, ep.pos_error, ep.rot_error
    );
    let _ = Path::new(&dataset);
}

fn store_step(store: &ParamStore, adam: &mut AdamState, loss: &Tensor) {
    store.backward(loss).unwrap();
    adam_step(store, adam).unwrap();
}
