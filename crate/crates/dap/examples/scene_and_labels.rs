//! Generate a procedural shelf scene, label a demonstration, and export the
//! scored container cloud as PLY for visual inspection.

use dap::env::{exact_demonstration, gen_scene, TaskKind};
use dap::labeling::{label_affordance, sample_demo_crop, LabelConfig};
use dap::ply::write_ply;

fn main() {
    let scene = gen_scene(TaskKind::Shelf, 7).unwrap();
    println!(
        "shelf scene: {} superpoints, {} slots, object template {} points",
        scene.container.len(),
        scene.slot_count,
        scene.object_template.len()
    );

    let cfg = LabelConfig { eps_place: 0.06, eps_corr: 0.045, ..LabelConfig::default() };
    for slot in 0..scene.slot_count {
        let demo = exact_demonstration(&scene, slot);
        let labels = label_affordance(&demo, &cfg).unwrap();
        let pos = labels.iter().filter(|&&v| v > 0.0).count();
        println!("slot {slot}: {pos} placeable container points");
    }

    let demo = exact_demonstration(&scene, 1);
    let labels = label_affordance(&demo, &cfg).unwrap();
    let mut scored = scene.container.clone();
    scored.scores = Some(labels);
    let out = std::env::temp_dir().join("dap_scene_labeled.ply");
    write_ply(&scored, &out).unwrap();
    println!("labeled container written to {}", out.display());

    let crop = sample_demo_crop(&demo.container, &demo.object, &demo.goal, &cfg, 3).unwrap();
    println!("demo-time crop around slot 1: {} points", crop.len());
}
