//! Procedural multi-modal storage scenes — a toy shelf with S slots and an
//! open-front cabinet with stacking surfaces — plus demonstration synthesis,
//! placement evaluation, and dataset generation.
//!
//! Scenes are built in a corner frame, surface-sampled, superpoint-clustered
//! per panel, then centered at the origin so every coordinate stays well
//! inside the unit box.

use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    apply_transform, superpoint_cluster, PointCloud, RigidTransform, Vec3,
};
use crate::labeling::{label_affordance, label_correspondence, sample_demo_crop, Demonstration, LabelConfig};
use crate::pose::collision_count;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Shelf,
    Cabinet,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<TaskKind> {
        match s {
            "shelf" => Ok(TaskKind::Shelf),
            "cabinet" => Ok(TaskKind::Cabinet),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::Shelf => "shelf",
            TaskKind::Cabinet => "cabinet",
        })
    }
}

/// Orientations considered equivalent when scoring a placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectSymmetry {
    None,
    /// Cuboid: 180° rotation about the object's vertical axis.
    Yaw180,
    /// Cylinder: any rotation about the vertical axis.
    YawContinuous,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tolerances {
    pub pos_tol: f64,
    pub rot_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { pos_tol: 0.02, rot_tol: 0.2 }
    }
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub kind: TaskKind,
    pub slot_count: usize,
    pub slot_poses: Vec<RigidTransform>,
    pub container: PointCloud,
    pub object_template: PointCloud,
    pub tolerances: Tolerances,
    pub symmetry: ObjectSymmetry,
    /// Surface samples drawn before superpoint clustering.
    pub raw_container_points: usize,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.slot_count < 2 || self.slot_poses.len() != self.slot_count {
            return Err(Error::Config("scene needs >= 2 slot poses".into()));
        }
        if self.raw_container_points < 400 {
            return Err(Error::Config(format!(
                "container undersampled: {} raw points",
                self.raw_container_points
            )));
        }
        for i in 0..self.slot_count {
            for j in i + 1..self.slot_count {
                let d = self.slot_poses[i].translation.dist(self.slot_poses[j].translation);
                if d <= 2.0 * self.tolerances.pos_tol {
                    return Err(Error::Config(format!(
                        "slots {i} and {j} only {d:.4} m apart"
                    )));
                }
            }
        }
        self.container.validate()?;
        self.object_template.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShelfParams {
    pub slot_count: usize,
    /// Mean gap between dividers (meters).
    pub slot_gap: f64,
    /// Uniform jitter applied to each gap.
    pub gap_jitter: f64,
    pub depth: f64,
    pub height: f64,
    /// Object rest height above the base.
    pub hover: f64,
    /// Surface sample density, points per square meter.
    pub density: f64,
    pub container_voxel: f64,
    pub object_voxel: f64,
}

impl Default for ShelfParams {
    fn default() -> Self {
        ShelfParams {
            slot_count: 4,
            slot_gap: 0.16,
            gap_jitter: 0.02,
            depth: 0.22,
            height: 0.24,
            hover: 0.016,
            density: 2500.0,
            container_voxel: 0.07,
            object_voxel: 0.04,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CabinetParams {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    /// Uniform jitter on the three dimensions.
    pub size_jitter: f64,
    pub positions_per_surface: usize,
    pub cylinder_radius: f64,
    pub cylinder_height: f64,
    pub hover: f64,
    pub density: f64,
    pub container_voxel: f64,
    pub object_voxel: f64,
}

impl Default for CabinetParams {
    fn default() -> Self {
        CabinetParams {
            width: 0.44,
            depth: 0.2,
            height: 0.44,
            size_jitter: 0.015,
            positions_per_surface: 2,
            cylinder_radius: 0.05,
            cylinder_height: 0.18,
            hover: 0.024,
            density: 2500.0,
            container_voxel: 0.055,
            object_voxel: 0.04,
        }
    }
}

/// Uniformly sample a rectangle spanned by `e1`, `e2` from `origin`, with a
/// fixed outward normal. At least 12 points per panel.
fn sample_rect(
    rng: &mut ChaCha12Rng,
    origin: Vec3,
    e1: Vec3,
    e2: Vec3,
    normal: Vec3,
    density: f64,
) -> PointCloud {
    let area = e1.norm() * e2.norm();
    let n = ((area * density).round() as usize).max(12);
    let mut positions = Vec::with_capacity(n);
    for _ in 0..n {
        let (a, b) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        positions.push(origin.add(e1.scale(a)).add(e2.scale(b)));
    }
    PointCloud::new(positions, vec![normal; n])
}

/// Cluster each panel separately and concatenate, so voxel averaging never
/// invents phantom points between panels.
fn cluster_parts(parts: &[PointCloud], voxel: f64) -> Result<(PointCloud, usize)> {
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut raw = 0;
    for part in parts {
        raw += part.len();
        let c = superpoint_cluster(part, voxel)?;
        positions.extend_from_slice(&c.positions);
        normals.extend_from_slice(&c.normals);
    }
    Ok((PointCloud::new(positions, normals), raw))
}

fn shift_cloud(pc: &PointCloud, offset: Vec3) -> PointCloud {
    PointCloud::new(
        pc.positions.iter().map(|p| p.add(offset)).collect(),
        pc.normals.clone(),
    )
}

/// Box surface point cloud centered at the origin (exactly: the centroid is
/// subtracted after clustering).
fn box_template(rng: &mut ChaCha12Rng, half: Vec3, density: f64, voxel: f64) -> Result<PointCloud> {
    let (hx, hy, hz) = (half.x, half.y, half.z);
    let faces = [
        // (origin, e1, e2, normal)
        (Vec3::new(-hx, -hy, hz), Vec3::new(2.0 * hx, 0.0, 0.0), Vec3::new(0.0, 2.0 * hy, 0.0), Vec3::new(0.0, 0.0, 1.0)),
        (Vec3::new(-hx, -hy, -hz), Vec3::new(2.0 * hx, 0.0, 0.0), Vec3::new(0.0, 2.0 * hy, 0.0), Vec3::new(0.0, 0.0, -1.0)),
        (Vec3::new(-hx, -hy, -hz), Vec3::new(0.0, 2.0 * hy, 0.0), Vec3::new(0.0, 0.0, 2.0 * hz), Vec3::new(-1.0, 0.0, 0.0)),
        (Vec3::new(hx, -hy, -hz), Vec3::new(0.0, 2.0 * hy, 0.0), Vec3::new(0.0, 0.0, 2.0 * hz), Vec3::new(1.0, 0.0, 0.0)),
        (Vec3::new(-hx, -hy, -hz), Vec3::new(2.0 * hx, 0.0, 0.0), Vec3::new(0.0, 0.0, 2.0 * hz), Vec3::new(0.0, -1.0, 0.0)),
        (Vec3::new(-hx, hy, -hz), Vec3::new(2.0 * hx, 0.0, 0.0), Vec3::new(0.0, 0.0, 2.0 * hz), Vec3::new(0.0, 1.0, 0.0)),
    ];
    let parts: Vec<PointCloud> = faces
        .iter()
        .map(|&(o, e1, e2, n)| sample_rect(rng, o, e1, e2, n, density))
        .collect();
    let (cloud, _) = cluster_parts(&parts, voxel)?;
    let c = cloud.centroid();
    Ok(shift_cloud(&cloud, c.scale(-1.0)))
}

/// Cylinder surface point cloud (side + caps) centered at the origin.
fn cylinder_template(rng: &mut ChaCha12Rng, radius: f64, height: f64, density: f64, voxel: f64) -> Result<PointCloud> {
    let hz = height / 2.0;
    let side_area = 2.0 * std::f64::consts::PI * radius * height;
    let cap_area = std::f64::consts::PI * radius * radius;
    let n_side = ((side_area * density).round() as usize).max(24);
    let n_cap = ((cap_area * density).round() as usize).max(12);
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    for _ in 0..n_side {
        let th = rng.gen_range(0.0..std::f64::consts::TAU);
        let z = rng.gen_range(-hz..hz);
        positions.push(Vec3::new(radius * th.cos(), radius * th.sin(), z));
        normals.push(Vec3::new(th.cos(), th.sin(), 0.0));
    }
    let side = PointCloud::new(positions, normals);
    let mut caps = Vec::new();
    for sign in [1.0f64, -1.0] {
        let mut positions = Vec::new();
        for _ in 0..n_cap {
            let th = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = radius * rng.gen_range(0.0f64..1.0).sqrt();
            positions.push(Vec3::new(r * th.cos(), r * th.sin(), sign * hz));
        }
        let n = positions.len();
        caps.push(PointCloud::new(positions, vec![Vec3::new(0.0, 0.0, sign); n]));
    }
    let (cloud, _) = cluster_parts(&[side, caps[0].clone(), caps[1].clone()], voxel)?;
    let c = cloud.centroid();
    Ok(shift_cloud(&cloud, c.scale(-1.0)))
}

pub fn gen_shelf_scene(rng_seed: u64, params: &ShelfParams) -> Result<SceneSpec> {
    if params.slot_count < 2 {
        return Err(Error::Config("shelf needs >= 2 slots".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let gaps: Vec<f64> = (0..params.slot_count)
        .map(|_| {
            if params.gap_jitter > 0.0 {
                params.slot_gap + rng.gen_range(-params.gap_jitter..params.gap_jitter)
            } else {
                params.slot_gap
            }
        })
        .collect();
    let min_gap = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    // side clearance of 0.021 m per face keeps contact pairs resolvable
    let obj_w = min_gap - 0.042;
    if obj_w < 0.02 {
        return Err(Error::Config(format!(
            "gap {min_gap:.3} m leaves no room for the object"
        )));
    }
    let mut xs = vec![0.0];
    for g in &gaps {
        xs.push(xs.last().unwrap() + g);
    }
    let (w, d, h) = (*xs.last().unwrap(), params.depth, params.height);

    let mut parts = Vec::new();
    // base and back panel
    parts.push(sample_rect(&mut rng, Vec3::ZERO, Vec3::new(w, 0.0, 0.0), Vec3::new(0.0, d, 0.0), Vec3::new(0.0, 0.0, 1.0), params.density));
    parts.push(sample_rect(&mut rng, Vec3::new(0.0, d, 0.0), Vec3::new(w, 0.0, 0.0), Vec3::new(0.0, 0.0, h), Vec3::new(0.0, -1.0, 0.0), params.density));
    // slot_count + 1 vertical dividers
    for &x in &xs {
        parts.push(sample_rect(&mut rng, Vec3::new(x, 0.0, 0.0), Vec3::new(0.0, d, 0.0), Vec3::new(0.0, 0.0, h), Vec3::new(1.0, 0.0, 0.0), params.density));
    }
    let (container, raw) = cluster_parts(&parts, params.container_voxel)?;
    let offset = Vec3::new(-w / 2.0, -d / 2.0, -h / 2.0);
    let container = shift_cloud(&container, offset);

    let obj_half = Vec3::new(obj_w / 2.0, 0.06, 0.10);
    let object = box_template(&mut rng, obj_half, 2.0 * params.density, params.object_voxel)?;

    let slot_z = params.hover + obj_half.z - h / 2.0;
    let slot_poses: Vec<RigidTransform> = (0..params.slot_count)
        .map(|i| {
            let cx = (xs[i] + xs[i + 1]) / 2.0 - w / 2.0;
            RigidTransform::from_translation(Vec3::new(cx, 0.0, slot_z))
        })
        .collect();

    let scene = SceneSpec {
        kind: TaskKind::Shelf,
        slot_count: params.slot_count,
        slot_poses,
        container,
        object_template: object,
        tolerances: Tolerances::default(),
        symmetry: ObjectSymmetry::Yaw180,
        raw_container_points: raw,
    };
    scene.validate()?;
    Ok(scene)
}

pub fn gen_cabinet_scene(rng_seed: u64, params: &CabinetParams) -> Result<SceneSpec> {
    if params.positions_per_surface < 1 {
        return Err(Error::Config("cabinet needs >= 1 position per surface".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let j = params.size_jitter;
    let jit = |rng: &mut ChaCha12Rng, v: f64| if j > 0.0 { v + rng.gen_range(-j..j) } else { v };
    let w = jit(&mut rng, params.width);
    let d = jit(&mut rng, params.depth);
    let h = jit(&mut rng, params.height);
    let shelf_z = h / 2.0;

    let dn = params.density;
    let parts = vec![
        // bottom, middle shelf, top
        sample_rect(&mut rng, Vec3::ZERO, Vec3::new(w, 0.0, 0.0), Vec3::new(0.0, d, 0.0), Vec3::new(0.0, 0.0, 1.0), dn),
        sample_rect(&mut rng, Vec3::new(0.0, 0.0, shelf_z), Vec3::new(w, 0.0, 0.0), Vec3::new(0.0, d, 0.0), Vec3::new(0.0, 0.0, 1.0), dn),
        sample_rect(&mut rng, Vec3::new(0.0, 0.0, h), Vec3::new(w, 0.0, 0.0), Vec3::new(0.0, d, 0.0), Vec3::new(0.0, 0.0, -1.0), dn),
        // side walls
        sample_rect(&mut rng, Vec3::ZERO, Vec3::new(0.0, d, 0.0), Vec3::new(0.0, 0.0, h), Vec3::new(1.0, 0.0, 0.0), dn),
        sample_rect(&mut rng, Vec3::new(w, 0.0, 0.0), Vec3::new(0.0, d, 0.0), Vec3::new(0.0, 0.0, h), Vec3::new(-1.0, 0.0, 0.0), dn),
        // back panel (front at y = 0 stays open)
        sample_rect(&mut rng, Vec3::new(0.0, d, 0.0), Vec3::new(w, 0.0, 0.0), Vec3::new(0.0, 0.0, h), Vec3::new(0.0, -1.0, 0.0), dn),
    ];
    let (container, raw) = cluster_parts(&parts, params.container_voxel)?;
    let offset = Vec3::new(-w / 2.0, -d / 2.0, -h / 2.0);
    let container = shift_cloud(&container, offset);

    let object = cylinder_template(
        &mut rng,
        params.cylinder_radius,
        params.cylinder_height,
        2.0 * params.density,
        params.object_voxel,
    )?;

    let k = params.positions_per_surface;
    // slots hug the side walls so wall contacts anchor the pose laterally
    // and vertically, like the shelf dividers do
    let x_max = w / 2.0 - params.cylinder_radius - 0.021;
    let mut slot_poses = Vec::new();
    for surface_z in [0.0, shelf_z] {
        for p in 0..k {
            let frac = if k == 1 { 0.0 } else { p as f64 / (k as f64 - 1.0) };
            let cx = -x_max + 2.0 * x_max * frac;
            let cz = surface_z + params.hover + params.cylinder_height / 2.0 - h / 2.0;
            slot_poses.push(RigidTransform::from_translation(Vec3::new(cx, 0.0, cz)));
        }
    }

    let scene = SceneSpec {
        kind: TaskKind::Cabinet,
        slot_count: slot_poses.len(),
        slot_poses,
        container,
        object_template: object,
        tolerances: Tolerances::default(),
        symmetry: ObjectSymmetry::YawContinuous,
        raw_container_points: raw,
    };
    scene.validate()?;
    Ok(scene)
}

/// Dispatch on task kind with default parameters.
pub fn gen_scene(kind: TaskKind, rng_seed: u64) -> Result<SceneSpec> {
    match kind {
        TaskKind::Shelf => gen_shelf_scene(rng_seed, &ShelfParams::default()),
        TaskKind::Cabinet => gen_cabinet_scene(rng_seed, &CabinetParams::default()),
    }
}

/// A demonstration placed exactly at a slot pose, object in its template
/// frame — the zero-jitter reference.
pub fn exact_demonstration(scene: &SceneSpec, slot: usize) -> Demonstration {
    Demonstration {
        container: scene.container.clone(),
        object: scene.object_template.clone(),
        goal: scene.slot_poses[slot],
        mode_id: Some(slot),
    }
}

/// Draw a demonstration: uniform slot choice, goal jittered by at most
/// pos_tol/2 in translation and rot_tol/2 in yaw, object cloud shifted to a
/// random initial position off to the side (the goal is stored in the world
/// frame of that shifted cloud).
pub fn sample_demonstration(scene: &SceneSpec, rng_seed: u64) -> Demonstration {
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let slot = rng.gen_range(0..scene.slot_count);
    let t_amp = scene.tolerances.pos_tol / 2.0 / 3f64.sqrt();
    let dt = Vec3::new(
        rng.gen_range(-t_amp..t_amp),
        rng.gen_range(-t_amp..t_amp),
        rng.gen_range(-t_amp..t_amp),
    );
    let r_amp = scene.tolerances.rot_tol / 2.0;
    let yaw = rng.gen_range(-r_amp..r_amp);

    let slot_pose = scene.slot_poses[slot];
    let place = RigidTransform {
        rotation: RigidTransform::from_yaw(yaw).rotation,
        translation: slot_pose.translation.add(dt),
    };

    // object observed at a random spot outside the container
    let init = RigidTransform::from_translation(Vec3::new(
        0.7 + rng.gen_range(-0.05..0.05),
        rng.gen_range(-0.1..0.1),
        rng.gen_range(0.0..0.08),
    ));
    let object = apply_transform(&scene.object_template, &init);
    let goal = crate::geom::compose(&place, &crate::geom::invert(&init));

    Demonstration {
        container: scene.container.clone(),
        object,
        goal,
        mode_id: Some(slot),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub matched_mode: Option<usize>,
    pub collision_points: usize,
    pub pos_error: f64,
    pub rot_error: f64,
}

fn rotation_error_mod_symmetry(
    predicted: &RigidTransform,
    slot: &RigidTransform,
    symmetry: ObjectSymmetry,
) -> f64 {
    match symmetry {
        ObjectSymmetry::None => predicted.rotation_angle_to(slot),
        ObjectSymmetry::Yaw180 => {
            let flipped = crate::geom::compose(slot, &RigidTransform::from_yaw(std::f64::consts::PI));
            predicted.rotation_angle_to(slot).min(predicted.rotation_angle_to(&flipped))
        }
        ObjectSymmetry::YawContinuous => {
            // only the vertical-axis tilt matters
            let zp = predicted.rotate(Vec3::new(0.0, 0.0, 1.0));
            let zs = slot.rotate(Vec3::new(0.0, 0.0, 1.0));
            zp.dot(zs).clamp(-1.0, 1.0).acos()
        }
    }
}

/// Score a placement. `predicted` must map `object` into the scene;
/// orientation comparison assumes `object` is in the template frame (compose
/// any known initial pose into `predicted` first).
pub fn evaluate_placement(scene: &SceneSpec, predicted: &RigidTransform, object: &PointCloud) -> Result<EpisodeResult> {
    let placed = apply_transform(object, predicted);
    let collisions = collision_count(&scene.container, &placed, 0.0)?;
    let centroid = predicted.apply(object.centroid());

    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, slot) in scene.slot_poses.iter().enumerate() {
        let d = centroid.dist(slot.translation);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    let rot_error = rotation_error_mod_symmetry(predicted, &scene.slot_poses[best], scene.symmetry);
    let success =
        best_d < scene.tolerances.pos_tol && rot_error < scene.tolerances.rot_tol && collisions == 0;
    Ok(EpisodeResult {
        success,
        matched_mode: success.then_some(best),
        collision_points: collisions,
        pos_error: best_d,
        rot_error,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CloudData {
    pub positions: Vec<[f64; 3]>,
    pub normals: Vec<[f64; 3]>,
}

impl CloudData {
    pub fn from_cloud(pc: &PointCloud) -> CloudData {
        CloudData {
            positions: pc.positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
            normals: pc.normals.iter().map(|n| [n.x, n.y, n.z]).collect(),
        }
    }

    pub fn to_cloud(&self) -> PointCloud {
        PointCloud::new(
            self.positions.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect(),
            self.normals.iter().map(|n| Vec3::new(n[0], n[1], n[2])).collect(),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformData {
    /// Row-major 3x3 rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl TransformData {
    pub fn from_transform(t: &RigidTransform) -> TransformData {
        let r = &t.rotation;
        TransformData {
            rotation: [
                r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }

    pub fn to_transform(&self) -> RigidTransform {
        let r = &self.rotation;
        RigidTransform {
            rotation: [
                [r[0], r[1], r[2]],
                [r[3], r[4], r[5]],
                [r[6], r[7], r[8]],
            ],
            translation: Vec3::new(self.translation[0], self.translation[1], self.translation[2]),
        }
    }
}

/// One training record: a demonstration with its precomputed labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub task: TaskKind,
    pub scene_seed: u64,
    pub demo_seed: u64,
    pub mode_id: usize,
    pub container: CloudData,
    pub object: CloudData,
    pub goal: TransformData,
    /// +1 / -1 per container point.
    pub afford_labels: Vec<f64>,
    /// The demo-time random crop around the goal region.
    pub crop: CloudData,
    /// Row-major N_O x N_C binary contact matrix over the crop.
    pub corr_labels: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub records: usize,
    pub scenes: usize,
    pub mean_positive_afford: f64,
    pub mean_positive_corr: f64,
}

fn build_record(
    kind: TaskKind,
    scene: &SceneSpec,
    scene_seed: u64,
    demo_seed: u64,
    cfg: &LabelConfig,
) -> Result<DatasetRecord> {
    let demo = sample_demonstration(scene, demo_seed);
    let afford = label_affordance(&demo, cfg)?;
    let crop = sample_demo_crop(&demo.container, &demo.object, &demo.goal, cfg, demo_seed ^ 0x9e3779b97f4a7c15)?;
    let corr = label_correspondence(&crop, &demo.object, &demo.goal, cfg)?;
    let n_c = crop.len();
    let corr_labels: Vec<Vec<u8>> = (0..demo.object.len())
        .map(|i| corr[i * n_c..(i + 1) * n_c].iter().map(|&v| v as u8).collect())
        .collect();
    Ok(DatasetRecord {
        task: kind,
        scene_seed,
        demo_seed,
        mode_id: demo.mode_id.unwrap(),
        container: CloudData::from_cloud(&demo.container),
        object: CloudData::from_cloud(&demo.object),
        goal: TransformData::from_transform(&demo.goal),
        afford_labels: afford,
        crop: CloudData::from_cloud(&crop),
        corr_labels,
    })
}

fn worker_count() -> usize {
    std::env::var("DAP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Generate `n_scenes x demos_per_scene` records as JSON lines, deterministic
/// in `rng_seed`. Scene generation fans out over `DAP_THREADS` workers; the
/// output order is independent of the worker count.
pub fn gen_dataset(
    kind: TaskKind,
    n_scenes: usize,
    demos_per_scene: usize,
    rng_seed: u64,
    cfg: &LabelConfig,
    out_path: &Path,
) -> Result<DatasetSummary> {
    cfg.validate()?;
    if n_scenes == 0 || demos_per_scene == 0 {
        return Err(Error::Config("dataset needs >= 1 scene and demo".into()));
    }
    let scene_records = |i: usize| -> Result<Vec<DatasetRecord>> {
        let scene_seed = rng_seed.wrapping_add(7919 * i as u64);
        let scene = gen_scene(kind, scene_seed)?;
        (0..demos_per_scene)
            .map(|j| {
                let demo_seed = scene_seed.wrapping_add(1 + j as u64);
                build_record(kind, &scene, scene_seed, demo_seed, cfg)
            })
            .collect()
    };

    let workers = worker_count().min(n_scenes);
    let mut all: Vec<Option<Vec<DatasetRecord>>> = vec![None; n_scenes];
    if workers <= 1 {
        for (i, slot) in all.iter_mut().enumerate() {
            *slot = Some(scene_records(i)?);
        }
    } else {
        let results: Vec<Result<(usize, Vec<DatasetRecord>)>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let scene_records = &scene_records;
                    s.spawn(move || {
                        let mut out = Vec::new();
                        let mut i = w;
                        while i < n_scenes {
                            out.push(scene_records(i).map(|r| (i, r)));
                            i += workers;
                        }
                        out
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
        });
        for r in results {
            let (i, recs) = r?;
            all[i] = Some(recs);
        }
    }

    let mut file = std::fs::File::create(out_path).map_err(|e| Error::io(out_path.display().to_string(), e))?;
    let mut records = 0usize;
    let mut pos_afford = 0usize;
    let mut pos_corr = 0usize;
    let mut afford_total = 0usize;
    let mut corr_total = 0usize;
    for recs in all.into_iter().flatten() {
        for rec in recs {
            let line = serde_json::to_string(&rec).map_err(|e| Error::Format(e.to_string()))?;
            writeln!(file, "{line}").map_err(|e| Error::io(out_path.display().to_string(), e))?;
            records += 1;
            pos_afford += rec.afford_labels.iter().filter(|&&v| v > 0.0).count();
            afford_total += rec.afford_labels.len();
            for row in &rec.corr_labels {
                pos_corr += row.iter().filter(|&&v| v == 1).count();
                corr_total += row.len();
            }
        }
    }
    Ok(DatasetSummary {
        records,
        scenes: n_scenes,
        mean_positive_afford: pos_afford as f64 / afford_total.max(1) as f64,
        mean_positive_corr: pos_corr as f64 / corr_total.max(1) as f64,
    })
}

/// Read a JSON-lines dataset back.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Format(format!("bad dataset line: {e}"))))
        .collect()
}
