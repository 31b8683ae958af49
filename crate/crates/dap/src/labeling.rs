//! Ground-truth label generation from demonstrations: per-point placeability
//! scores on the container, contact correspondence matrices, the random
//! bounding-box crop used when training correspondence, and the score-based
//! crop used at inference time.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::geom::{aabb_of, apply_transform, min_distances, Aabb, PointCloud, RigidTransform, Vec3};

/// One storage demonstration: container cloud, object cloud and the goal
/// world pose of the object. `mode_id` records which slot was demonstrated
/// and is only used for evaluation bookkeeping.
#[derive(Debug, Clone)]
pub struct Demonstration {
    pub container: PointCloud,
    pub object: PointCloud,
    pub goal: RigidTransform,
    pub mode_id: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LabelConfig {
    /// Distance below which a container point counts as placeable (meters).
    pub eps_place: f64,
    /// Distance below which an object/container pair counts as in contact (meters).
    pub eps_corr: f64,
    pub crop_scale_min: f64,
    pub crop_scale_max: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            eps_place: 0.04,
            eps_corr: 0.02,
            crop_scale_min: 1.1,
            crop_scale_max: 1.8,
        }
    }
}

impl LabelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_place > 0.0 && self.eps_corr > 0.0) {
            return Err(Error::Config("eps_place and eps_corr must be > 0".into()));
        }
        if !(1.0 <= self.crop_scale_min && self.crop_scale_min <= self.crop_scale_max) {
            return Err(Error::Config(
                "crop scales must satisfy 1 <= min <= max".into(),
            ));
        }
        Ok(())
    }
}

/// Per-container-point affordance labels: +1 where the transformed object
/// passes within `eps_place`, -1 elsewhere.
pub fn label_affordance(demo: &Demonstration, cfg: &LabelConfig) -> Result<Vec<f64>> {
    let placed = apply_transform(&demo.object, &demo.goal);
    let dists = min_distances(&demo.container, &placed)?;
    Ok(dists
        .iter()
        .map(|&d| if d < cfg.eps_place { 1.0 } else { -1.0 })
        .collect())
}

/// Binary contact matrix C with shape N_O x N_C (row-major), C[i][j] = 1 iff
/// the transformed object point i is within `eps_corr` of container point j.
pub fn label_correspondence(
    cropped_container: &PointCloud,
    object: &PointCloud,
    goal: &RigidTransform,
    cfg: &LabelConfig,
) -> Result<Vec<f64>> {
    if cropped_container.is_empty() || object.is_empty() {
        return Err(Error::Size("correspondence labels need nonempty clouds".into()));
    }
    let placed = apply_transform(object, goal);
    let n_c = cropped_container.len();
    let mut out = vec![0.0; object.len() * n_c];
    for (i, v) in placed.positions.iter().enumerate() {
        for (j, w) in cropped_container.positions.iter().enumerate() {
            if v.dist(*w) < cfg.eps_corr {
                out[i * n_c + j] = 1.0;
            }
        }
    }
    Ok(out)
}

/// Random bounding-box crop of the container around the demonstrated goal:
/// the goal object's Aabb with half-extents scaled per axis by a uniform
/// draw from [crop_scale_min, crop_scale_max].
pub fn sample_demo_crop(
    container: &PointCloud,
    object: &PointCloud,
    goal: &RigidTransform,
    cfg: &LabelConfig,
    rng_seed: u64,
) -> Result<PointCloud> {
    let placed = apply_transform(object, goal);
    let base = aabb_of(&placed, 0.0)?;
    let center = base.center();
    let half = base.half_extents();
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let mut grow = 1.0;
    for _ in 0..=5 {
        let s = Vec3::new(
            rng.gen_range(cfg.crop_scale_min..=cfg.crop_scale_max) * grow,
            rng.gen_range(cfg.crop_scale_min..=cfg.crop_scale_max) * grow,
            rng.gen_range(cfg.crop_scale_min..=cfg.crop_scale_max) * grow,
        );
        let h = Vec3::new(half.x * s.x, half.y * s.y, half.z * s.z);
        let bb = Aabb {
            min: center.sub(h),
            max: center.add(h),
        };
        let idx: Vec<usize> = container
            .positions
            .iter()
            .enumerate()
            .filter(|(_, p)| bb.contains(**p))
            .map(|(i, _)| i)
            .collect();
        if idx.len() >= 8 {
            return Ok(container.select(&idx));
        }
        grow *= 1.5;
    }
    Err(Error::DegenerateDemo(
        "crop never reached 8 container points after 5 enlargements".into(),
    ))
}

/// Keeps container points with score >= 0, preserving input order.
pub fn crop_by_scores(container: &PointCloud, scores: &[f64]) -> Result<PointCloud> {
    if scores.len() != container.len() {
        return Err(Error::Size(format!(
            "scores ({}) and container ({}) differ in length",
            scores.len(),
            container.len()
        )));
    }
    let idx: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= 0.0)
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        return Err(Error::EmptyCrop);
    }
    Ok(container.select(&idx))
}

/// Index view of `crop_by_scores`, for callers that need to map cropped
/// points back to the original container.
pub fn crop_indices(scores: &[f64]) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= 0.0)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::compose;

    fn toy_demo(seed: u64) -> Demonstration {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let container = grid_cloud(10, 10, 0.05);
        // two stacked layers so the object has 3-D extent
        let mut object = grid_cloud(3, 3, 0.05);
        let lifted: Vec<Vec3> = object
            .positions
            .iter()
            .map(|p| p.add(Vec3::new(0.0, 0.0, 0.06)))
            .collect();
        object.positions.extend(lifted);
        object.normals.extend(vec![Vec3::new(0.0, 0.0, 1.0); 9]);
        let goal = compose(
            &RigidTransform::from_translation(Vec3::new(
                rng.gen_range(0.05..0.3),
                rng.gen_range(0.05..0.3),
                0.0,
            )),
            &RigidTransform::from_yaw(rng.gen_range(-0.5..0.5)),
        );
        Demonstration {
            container,
            object,
            goal,
            mode_id: None,
        }
    }

    fn grid_cloud(nx: usize, ny: usize, step: f64) -> PointCloud {
        let mut positions = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                positions.push(Vec3::new(i as f64 * step, j as f64 * step, 0.0));
            }
        }
        let n = positions.len();
        PointCloud::new(positions, vec![Vec3::new(0.0, 0.0, 1.0); n])
    }

    #[test]
    fn far_object_labels_all_negative() {
        let mut demo = toy_demo(1);
        demo.goal = RigidTransform::from_translation(Vec3::new(10.0, 0.0, 0.0));
        let cfg = LabelConfig {
            eps_place: 0.01,
            ..Default::default()
        };
        let labels = label_affordance(&demo, &cfg).unwrap();
        assert!(labels.iter().all(|&s| s == -1.0));
    }

    #[test]
    fn huge_eps_labels_all_positive() {
        let demo = toy_demo(2);
        let cfg = LabelConfig {
            eps_place: 1e9,
            ..Default::default()
        };
        let labels = label_affordance(&demo, &cfg).unwrap();
        assert!(labels.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn affordance_matches_brute_force_oracle() {
        for seed in 0..5 {
            let demo = toy_demo(seed);
            let cfg = LabelConfig::default();
            let labels = label_affordance(&demo, &cfg).unwrap();
            let placed = apply_transform(&demo.object, &demo.goal);
            for (j, vj) in demo.container.positions.iter().enumerate() {
                let mind = placed
                    .positions
                    .iter()
                    .map(|v| v.dist(*vj))
                    .fold(f64::INFINITY, f64::min);
                let want = if mind < cfg.eps_place { 1.0 } else { -1.0 };
                assert_eq!(labels[j], want);
            }
        }
    }

    #[test]
    fn correspondence_far_object_all_zero() {
        let demo = toy_demo(3);
        let goal = RigidTransform::from_translation(Vec3::new(5.0, 0.0, 0.0));
        let cfg = LabelConfig::default();
        let c = label_correspondence(&demo.container, &demo.object, &goal, &cfg).unwrap();
        assert!(c.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn correspondence_coincident_point_single_one() {
        // container holds the exact image of object point 0 plus far points
        let object = PointCloud::new(
            vec![Vec3::new(0.1, 0.2, 0.0)],
            vec![Vec3::new(0.0, 0.0, 1.0)],
        );
        let container = PointCloud::new(
            vec![Vec3::new(0.1, 0.2, 0.0), Vec3::new(9.0, 9.0, 9.0)],
            vec![Vec3::new(0.0, 0.0, 1.0); 2],
        );
        let cfg = LabelConfig {
            eps_corr: 1e-9,
            ..Default::default()
        };
        let c =
            label_correspondence(&container, &object, &RigidTransform::identity(), &cfg).unwrap();
        assert_eq!(c, vec![1.0, 0.0]);
    }

    #[test]
    fn correspondence_matches_brute_force_oracle() {
        for seed in 0..5 {
            let demo = toy_demo(seed + 10);
            let cfg = LabelConfig::default();
            let c =
                label_correspondence(&demo.container, &demo.object, &demo.goal, &cfg).unwrap();
            let placed = apply_transform(&demo.object, &demo.goal);
            let n_c = demo.container.len();
            for (i, v) in placed.positions.iter().enumerate() {
                for (j, w) in demo.container.positions.iter().enumerate() {
                    let want = if v.dist(*w) < cfg.eps_corr { 1.0 } else { 0.0 };
                    assert_eq!(c[i * n_c + j], want);
                }
            }
        }
    }

    #[test]
    fn label_monotone_in_eps_and_row_column_consistent() {
        let demo = toy_demo(4);
        let small = LabelConfig {
            eps_place: 0.03,
            eps_corr: 0.03,
            ..Default::default()
        };
        let big = LabelConfig {
            eps_place: 0.08,
            eps_corr: 0.08,
            ..Default::default()
        };
        let ls = label_affordance(&demo, &small).unwrap();
        let lb = label_affordance(&demo, &big).unwrap();
        for (a, b) in ls.iter().zip(&lb) {
            assert!(!(a > b), "enlarging eps_place flipped +1 to -1");
        }
        // any contact-labeled column must be affordance-positive when eps_place >= eps_corr
        let c = label_correspondence(&demo.container, &demo.object, &demo.goal, &small).unwrap();
        let n_c = demo.container.len();
        for i in 0..demo.object.len() {
            for j in 0..n_c {
                if c[i * n_c + j] == 1.0 {
                    assert_eq!(ls[j], 1.0);
                }
            }
        }
    }

    #[test]
    fn demo_crop_exact_scale_matches_membership_oracle() {
        let mut demo = toy_demo(5);
        // axis-aligned goal so the exact box holds a full 3x3 patch (>= 8)
        demo.goal = RigidTransform::from_translation(Vec3::new(0.15, 0.05, 0.0));
        let cfg = LabelConfig {
            crop_scale_min: 1.0,
            crop_scale_max: 1.0,
            ..Default::default()
        };
        let crop = sample_demo_crop(&demo.container, &demo.object, &demo.goal, &cfg, 9).unwrap();
        let placed = apply_transform(&demo.object, &demo.goal);
        let bb = aabb_of(&placed, 0.0).unwrap();
        let expect: Vec<Vec3> = demo
            .container
            .positions
            .iter()
            .copied()
            .filter(|p| bb.contains(*p))
            .collect();
        assert_eq!(crop.positions, expect);
    }

    #[test]
    fn demo_crop_huge_scale_returns_everything_and_is_deterministic() {
        let demo = toy_demo(6);
        let cfg = LabelConfig {
            crop_scale_min: 1e3,
            crop_scale_max: 1e3,
            ..Default::default()
        };
        let crop = sample_demo_crop(&demo.container, &demo.object, &demo.goal, &cfg, 1).unwrap();
        assert_eq!(crop.len(), demo.container.len());

        let cfg = LabelConfig::default();
        let a = sample_demo_crop(&demo.container, &demo.object, &demo.goal, &cfg, 42).unwrap();
        let b = sample_demo_crop(&demo.container, &demo.object, &demo.goal, &cfg, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn crop_by_scores_cases() {
        let pc = grid_cloud(4, 1, 0.1);
        let all_pos = vec![1.0; 4];
        assert_eq!(crop_by_scores(&pc, &all_pos).unwrap(), pc);

        let all_neg = vec![-1.0; 4];
        assert!(matches!(crop_by_scores(&pc, &all_neg), Err(Error::EmptyCrop)));

        let alternating = vec![1.0, -1.0, 1.0, -1.0];
        let crop = crop_by_scores(&pc, &alternating).unwrap();
        assert_eq!(crop.positions, vec![pc.positions[0], pc.positions[2]]);
        // exact zero is kept
        assert_eq!(crop_by_scores(&pc, &[0.0, -1.0, -1.0, -1.0]).unwrap().len(), 1);
    }
}
