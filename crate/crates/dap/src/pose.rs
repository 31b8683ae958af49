//! Pose solving: weighted Arun least-squares alignment, collision counting,
//! candidate ranking, and the end-to-end K-candidate inference pipeline.

use nalgebra::Matrix3;

use crate::afford::{sample_affordance, NoisePredictor, NoiseSchedule};
use crate::corr::{extract_matches, CorrModel};
use crate::error::{Error, Result};
use crate::geom::{aabb_of, apply_transform, PointCloud, RigidTransform, Vec3};
use crate::labeling::crop_by_scores;
use crate::tensor::ParamStore;

/// One scored placement hypothesis.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub transform: RigidTransform,
    pub collision_count: usize,
    pub match_count: usize,
    pub crop_size: usize,
}

/// Weighted Arun/Kabsch: the rigid transform minimizing
/// Σ wᵢ ‖R·srcᵢ + t − dstᵢ‖², reflection-corrected so det(R) = +1.
pub fn arun_solve(src: &[Vec3], dst: &[Vec3], weights: &[f64]) -> Result<RigidTransform> {
    if src.len() != dst.len() || src.len() != weights.len() {
        return Err(Error::Size(format!(
            "arun_solve length mismatch: {} src, {} dst, {} weights",
            src.len(),
            dst.len(),
            weights.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::InsufficientMatches(src.len()));
    }
    if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::Config("arun_solve weights must be positive".into()));
    }
    let w_sum: f64 = weights.iter().sum();
    let mut c_s = Vec3::ZERO;
    let mut c_d = Vec3::ZERO;
    for ((s, d), &w) in src.iter().zip(dst).zip(weights) {
        c_s = c_s.add(s.scale(w));
        c_d = c_d.add(d.scale(w));
    }
    c_s = c_s.scale(1.0 / w_sum);
    c_d = c_d.scale(1.0 / w_sum);

    let mut h = Matrix3::<f64>::zeros();
    for ((s, d), &w) in src.iter().zip(dst).zip(weights) {
        let ps = s.sub(c_s);
        let pd = d.sub(c_d);
        let col_s = [ps.x, ps.y, ps.z];
        let col_d = [pd.x, pd.y, pd.z];
        for r in 0..3 {
            for c in 0..3 {
                h[(r, c)] += w * col_s[r] * col_d[c];
            }
        }
    }

    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    // rank(H) <= 1 means the pairing cannot pin down a rotation
    let scale = sv[0].max(1e-30);
    if sv[1] / scale < 1e-9 {
        return Err(Error::DegenerateGeometry(format!(
            "arun_solve cross-covariance has rank <= 1 (singular values {:?})",
            [sv[0], sv[1], sv[2]]
        )));
    }
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let v = v_t.transpose();
    let det = (v * u.transpose()).determinant();
    let d = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, det.signum()));
    let r = v * d * u.transpose();

    let mut rotation = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            rotation[i][j] = r[(i, j)];
        }
    }
    let t = RigidTransform { rotation, translation: Vec3::ZERO };
    let translation = c_d.sub(t.rotate(c_s));
    let out = RigidTransform { rotation, translation };
    out.validate()?;
    Ok(out)
}

/// Number of cropped-container points strictly inside the margin-inflated
/// bounding box of the placed object.
pub fn collision_count(cropped_container: &PointCloud, placed_object: &PointCloud, margin: f64) -> Result<usize> {
    let bb = aabb_of(placed_object, margin)?;
    Ok(cropped_container
        .positions
        .iter()
        .filter(|&&p| bb.contains_strict(p))
        .count())
}

/// Best first: ascending collision count, ties broken by larger match count,
/// then original order (stable).
pub fn rank_candidates(cands: Vec<Candidate>) -> Result<Vec<Candidate>> {
    if cands.is_empty() {
        return Err(Error::NoCandidates("rank_candidates got an empty list".into()));
    }
    let mut out = cands;
    out.sort_by(|a, b| {
        a.collision_count
            .cmp(&b.collision_count)
            .then(b.match_count.cmp(&a.match_count))
    });
    Ok(out)
}

/// Everything the two-stage pipeline produced for one query.
#[derive(Debug, Clone)]
pub struct InferenceResult {
    /// Ranked candidates, best first.
    pub ranked: Vec<Candidate>,
    /// (candidate index, failure description) for skipped candidates.
    pub failures: Vec<(usize, String)>,
}

impl InferenceResult {
    pub fn best(&self) -> &Candidate {
        &self.ranked[0]
    }
}

/// The full two-stage pipeline: K affordance samples, each cropped, matched
/// against the object, solved with Arun and scored by collision count.
/// Candidate k uses rng seed `rng_seed + k`.
#[allow(clippy::too_many_arguments)]
pub fn infer_storage_pose(
    afford_model: &impl NoisePredictor,
    corr_model: &CorrModel,
    corr_store: &ParamStore,
    container: &PointCloud,
    object: &PointCloud,
    k_candidates: usize,
    sched: &NoiseSchedule,
    collision_margin: f64,
    rng_seed: u64,
) -> Result<InferenceResult> {
    if k_candidates == 0 {
        return Err(Error::Config("need at least one candidate".into()));
    }
    let mut cands = Vec::new();
    let mut failures = Vec::new();
    for k in 0..k_candidates as u64 {
        match build_candidate(
            afford_model,
            corr_model,
            corr_store,
            container,
            object,
            sched,
            collision_margin,
            rng_seed.wrapping_add(k),
        ) {
            Ok(c) => cands.push(c),
            Err(e) => failures.push((k as usize, e.to_string())),
        }
    }
    if cands.is_empty() {
        let tags: Vec<String> = failures.iter().map(|(k, e)| format!("candidate {k}: {e}")).collect();
        return Err(Error::NoCandidates(tags.join("; ")));
    }
    Ok(InferenceResult { ranked: rank_candidates(cands)?, failures })
}

#[allow(clippy::too_many_arguments)]
fn build_candidate(
    afford_model: &impl NoisePredictor,
    corr_model: &CorrModel,
    corr_store: &ParamStore,
    container: &PointCloud,
    object: &PointCloud,
    sched: &NoiseSchedule,
    collision_margin: f64,
    seed: u64,
) -> Result<Candidate> {
    let sample = sample_affordance(afford_model, container, sched, seed, false)?;
    let crop = crop_by_scores(container, &sample.clamped)?;
    let pred = corr_model.forward(corr_store, &crop, object)?;
    let matches = extract_matches(&pred, object, &crop, &corr_model.cfg)?;
    let mut src = Vec::with_capacity(matches.pairs.len());
    let mut dst = Vec::with_capacity(matches.pairs.len());
    let mut w = Vec::with_capacity(matches.pairs.len());
    for &(i, j, wt) in &matches.pairs {
        src.push(object.positions[i]);
        dst.push(crop.positions[j]);
        w.push(wt);
    }
    let transform = arun_solve(&src, &dst, &w)?;
    let placed = apply_transform(object, &transform);
    let collisions = collision_count(&crop, &placed, collision_margin)?;
    Ok(Candidate {
        transform,
        collision_count: collisions,
        match_count: matches.pairs.len(),
        crop_size: crop.len(),
    })
}
