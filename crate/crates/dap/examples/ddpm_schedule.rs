//! Inspect the linear noise schedule and verify q_sample statistics by
//! Monte Carlo: at each t the noised field should have mean √ᾱ_t·S(0) and
//! variance 1−ᾱ_t.

use dap::afford::{make_schedule, q_sample};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    let sched = make_schedule(100, 1e-4, 0.02).unwrap();
    println!("T = {}", sched.steps);
    for t in [1usize, 25, 50, 75, 100] {
        println!(
            "t = {t:3}  beta = {:.6}  alpha_bar = {:.6}  sigma = {:.6}",
            sched.beta_at(t).unwrap(),
            sched.alpha_bar_at(t).unwrap(),
            sched.sigma_at(t).unwrap()
        );
    }

    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let s0 = [1.0, -1.0, 1.0, -1.0];
    let n_draws = 50_000;
    for t in [1usize, 50, 100] {
        let ab = sched.alpha_bar_at(t).unwrap();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n_draws {
            let eps: Vec<f64> = (0..s0.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let s_t = q_sample(&s0, t, &eps, &sched).unwrap();
            for (i, v) in s_t.iter().enumerate() {
                let centered = v - ab.sqrt() * s0[i];
                sum += centered;
                sum_sq += centered * centered;
            }
        }
        let n = (n_draws * s0.len()) as f64;
        let mean = sum / n;
        let var = sum_sq / n - mean * mean;
        println!(
            "t = {t:3}  empirical residual mean = {mean:+.5}  var = {var:.5}  expected var = {:.5}",
            1.0 - ab
        );
    }
}
