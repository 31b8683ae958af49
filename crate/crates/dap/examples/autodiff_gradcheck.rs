//! Exercise the reverse-mode autodiff core: build a small computation, run
//! backward, and compare gradients against central differences.

use dap::tensor::{grad_check, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn main() {
    // gradient of sum((x W)^2) w.r.t. W via backward
    let x = Tensor::from_vec(&[2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.75]);
    let w = Tensor::param(&[3, 2], vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6]);
    let y = x.matmul(&w).unwrap();
    let loss = y.mul(&y).unwrap().sum_all();
    loss.backward().unwrap();
    println!("loss = {:.6}", loss.item());
    println!("dloss/dW = {:?}", w.grad().unwrap());

    // the same check the test suite runs for every op, on a composite graph
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let data: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let probe = Tensor::param(&[4, 3], data);
    let mix = Tensor::from_vec(&[3, 3], (0..9).map(|i| 0.1 * (i as f64) - 0.35).collect());
    let report = grad_check(
        |t| {
            let h = t.silu().matmul(&mix)?.layer_norm_last()?;
            Ok(h.mul(&h)?.sum_all())
        },
        &probe,
        1e-5,
        1e-4,
    )
    .unwrap();
    println!(
        "central-difference check: max rel err {:.2e} -> {}",
        report.max_rel_err,
        if report.pass { "pass" } else { "FAIL" }
    );
}
