//! Diagnostic: solve poses from ground-truth correspondence labels to bound
//! the error introduced by superpoint quantization and contact-gap bias,
//! independent of any learned model.
//!
//! Usage: `cargo run --release --example oracle_pose_check [shelf|cabinet]`

use dap::env::{evaluate_placement, exact_demonstration, gen_scene, TaskKind};
use dap::geom::apply_transform;
use dap::labeling::{label_correspondence, sample_demo_crop, LabelConfig};
use dap::pose::arun_solve;

fn main() {
    let task = match std::env::args().nth(1).as_deref() {
        Some("cabinet") => TaskKind::Cabinet,
        _ => TaskKind::Shelf,
    };
    let cfg = LabelConfig { eps_place: 0.06, eps_corr: 0.045, ..LabelConfig::default() };
    let n = 50;
    let mut successes = 0;
    let mut coll_fails = 0;
    let mut pos_sum = 0.0;
    let mut rot_sum = 0.0;
    let mut bias = [0.0f64; 3];
    for e in 0..n {
        let scene = gen_scene(task, 10_007 + e).unwrap();
        let demo = exact_demonstration(&scene, (e as usize) % scene.slot_count);
        let crop = sample_demo_crop(&demo.container, &demo.object, &demo.goal, &cfg, e).unwrap();
        let labels = label_correspondence(&crop, &demo.object, &demo.goal, &cfg).unwrap();
        let n_c = crop.len();
        let placed = apply_transform(&demo.object, &demo.goal);
        // row argmax; among tied contact columns pick the nearest, which is
        // what a confident trained predictor converges to
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for i in 0..demo.object.len() {
            let row = &labels[i * n_c..(i + 1) * n_c];
            let mut best: Option<(usize, f64)> = None;
            for (j, &v) in row.iter().enumerate() {
                if v > 0.5 {
                    let d = placed.positions[i].dist(crop.positions[j]);
                    if best.map_or(true, |(_, bd)| d < bd) {
                        best = Some((j, d));
                    }
                }
            }
            if let Some((j, _)) = best {
                src.push(demo.object.positions[i]);
                dst.push(crop.positions[j]);
            }
        }
        if src.len() < 3 {
            continue;
        }
        let w = vec![1.0; src.len()];
        let t = arun_solve(&src, &dst, &w).unwrap();
        let ep = evaluate_placement(&scene, &t, &demo.object).unwrap();
        pos_sum += ep.pos_error;
        rot_sum += ep.rot_error;
        bias[0] += t.translation.x - demo.goal.translation.x;
        bias[1] += t.translation.y - demo.goal.translation.y;
        bias[2] += t.translation.z - demo.goal.translation.z;
        if ep.success {
            successes += 1;
        } else if ep.collision_points > 0 {
            coll_fails += 1;
        }
    }
    println!(
        "{task:?}: {successes}/{n} ok ({coll_fails} collision fails), mean pos {:.4}, mean rot {:.4}, bias [{:+.4} {:+.4} {:+.4}]",
        pos_sum / n as f64,
        rot_sum / n as f64,
        bias[0] / n as f64,
        bias[1] / n as f64,
        bias[2] / n as f64,
    );
}
