//! Overfit the correspondence model on a single synthetic contact pattern and
//! read back the matches it proposes.

use dap::corr::{extract_matches, focal_loss, CorrConfig, CorrModel};
use dap::geom::{PointCloud, Vec3};
use dap::tensor::{adam_step, AdamState, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn main() {
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    let container = PointCloud::new(
        (0..10)
            .map(|_| Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)))
            .collect(),
        vec![Vec3::new(0.0, 0.0, 1.0); 10],
    );
    // object points coincide with the first 5 container points -> the target
    // correspondence is the diagonal
    let object = PointCloud::new(container.positions[..5].to_vec(), vec![Vec3::new(0.0, 0.0, 1.0); 5]);
    let mut label = vec![0.0; 5 * 10];
    for i in 0..5 {
        label[i * 10 + i] = 1.0;
    }
    let label = Tensor::from_vec(&[5, 10], label);

    let cfg = CorrConfig { token_dim: 16, gva_groups: 4, gva_k: 4, encoder_k: 4, ..CorrConfig::default() };
    let mut store = ParamStore::new();
    let model = CorrModel::init(&mut store, &cfg, &mut rng).unwrap();
    let mut adam = AdamState::new(1e-2);
    for step in 0..400 {
        let pred = model.forward(&store, &container, &object).unwrap();
        let loss = focal_loss(&pred, &label, cfg.gamma).unwrap();
        store.backward(&loss).unwrap();
        adam_step(&store, &mut adam).unwrap();
        if step % 50 == 0 {
            println!("step {step:3}  focal loss {:.5}", loss.item());
        }
    }

    let pred = model.forward(&store, &container, &object).unwrap();
    let matches = extract_matches(&pred, &object, &container, &cfg).unwrap();
    println!("matches (object -> container, confidence):");
    for (i, j, w) in &matches.pairs {
        println!("  {i} -> {j}  ({w:.3})");
    }
}
