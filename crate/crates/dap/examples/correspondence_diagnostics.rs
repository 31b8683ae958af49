//! Diagnostic: row-argmax quality of the trained correspondence model on
//! training-distribution vs held-out demos.

use std::path::Path;

use dap::config::RunConfig;
use dap::corr::CorrModel;
use dap::env::{gen_scene, sample_demonstration};
use dap::geom::apply_transform;
use dap::labeling::{label_correspondence, sample_demo_crop};
use dap::tensor::{load_checkpoint, ParamStore};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let out = args.get(1).cloned().unwrap_or_else(|| "/tmp/full".into());
    let cfg = RunConfig::default();
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let corr = CorrModel::init(&mut store, &cfg.corr, &mut rng).unwrap();
    let (loaded, _) = load_checkpoint(Path::new(&format!("{out}/checkpoints/corr.ckpt"))).unwrap();
    for (name, t) in loaded.iter() {
        store.get(name).set_data(t.to_vec());
    }

    for (tag, base) in [("train-range", 7u64), ("held-out", 10_007u64)] {
        let mut rows = 0usize;
        let mut hits = 0usize;
        let mut confident = 0usize;
        let mut dist_sum = 0.0;
        for e in 0..12u64 {
            let scene = gen_scene(cfg.task, base + e).unwrap();
            let demo = sample_demonstration(&scene, base + 1 + e);
            let crop =
                sample_demo_crop(&demo.container, &demo.object, &demo.goal, &cfg.label, e).unwrap();
            let label = label_correspondence(&crop, &demo.object, &demo.goal, &cfg.label).unwrap();
            let placed = apply_transform(&demo.object, &demo.goal);
            let pred = corr.forward(&store, &crop, &demo.object).unwrap();
            let p = pred.to_vec();
            let n_c = crop.len();
            for i in 0..demo.object.len() {
                let row = &label[i * n_c..(i + 1) * n_c];
                if !row.iter().any(|&v| v > 0.5) {
                    continue;
                }
                rows += 1;
                let (j, pj) = p[i * n_c..(i + 1) * n_c]
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(j, &v)| (j, v))
                    .unwrap();
                if pj >= cfg.corr.match_threshold {
                    confident += 1;
                    if row[j] > 0.5 {
                        hits += 1;
                    }
                    dist_sum += placed.positions[i].dist(crop.positions[j]);
                }
            }
        }
        println!(
            "{tag}: {rows} contact rows, {confident} confident ({:.0}%), argmax-in-contact {:.0}% of confident, mean argmax dist {:.4}",
            100.0 * confident as f64 / rows as f64,
            100.0 * hits as f64 / confident.max(1) as f64,
            dist_sum / confident.max(1) as f64
        );
    }
}
