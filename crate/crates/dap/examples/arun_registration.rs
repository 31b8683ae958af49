//! Weighted rigid registration: recover a random pose from exact and noisy
//! point correspondences.

use dap::geom::{PointCloud, RigidTransform, Vec3};
use dap::pose::arun_solve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_cloud(rng: &mut ChaCha12Rng, n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|_| Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)))
        .collect()
}

fn main() {
    let mut rng = ChaCha12Rng::seed_from_u64(42);
    let src = random_cloud(&mut rng, 60);
    let mut truth = RigidTransform::from_axis_angle(Vec3::new(0.3, -0.5, 0.8), 1.2);
    truth.translation = Vec3::new(0.1, -0.2, 0.05);
    let pc = PointCloud::new(src.clone(), vec![Vec3::new(0.0, 0.0, 1.0); src.len()]);
    let dst: Vec<Vec3> = dap::geom::apply_transform(&pc, &truth).positions;
    let weights = vec![1.0; src.len()];

    let exact = arun_solve(&src, &dst, &weights).unwrap();
    println!("exact recovery:");
    println!("  translation error = {:.2e}", exact.translation.dist(truth.translation));

    let noisy: Vec<Vec3> = dst
        .iter()
        .map(|p| {
            let d = |rng: &mut ChaCha12Rng| {
                let z: f64 = StandardNormal.sample(rng);
                1e-3 * z
            };
            Vec3::new(p.x + d(&mut rng), p.y + d(&mut rng), p.z + d(&mut rng))
        })
        .collect();
    let fit = arun_solve(&src, &noisy, &weights).unwrap();
    println!("with 1 mm gaussian noise on dst:");
    println!("  translation error = {:.2e}", fit.translation.dist(truth.translation));

    let mut frob = 0.0;
    for r in 0..3 {
        for c in 0..3 {
            let d = fit.rotation[r][c] - truth.rotation[r][c];
            frob += d * d;
        }
    }
    println!("  rotation frobenius error = {:.2e}", frob.sqrt());
}
