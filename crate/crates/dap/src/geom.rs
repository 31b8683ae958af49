//! Point clouds, rigid transforms and the exact spatial queries the rest of
//! the pipeline is built on: KNN, pairwise minimum distances, axis-aligned
//! bounding boxes and voxel superpoint clustering.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist(self, o: Vec3) -> f64 {
        self.sub(o).norm()
    }

    pub fn dist_sq(self, o: Vec3) -> f64 {
        let d = self.sub(o);
        d.dot(d)
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        self.scale(1.0 / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// A point cloud with unit normals and an optional per-point score channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub scores: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vec3>, normals: Vec<Vec3>) -> Self {
        PointCloud {
            positions,
            normals,
            scores: None,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Checks the type invariants: matching lengths, unit normals, finite coords.
    pub fn validate(&self) -> Result<()> {
        if self.positions.len() != self.normals.len() {
            return Err(Error::Size(format!(
                "positions ({}) and normals ({}) differ in length",
                self.positions.len(),
                self.normals.len()
            )));
        }
        if let Some(s) = &self.scores {
            if s.len() != self.positions.len() {
                return Err(Error::Size(format!(
                    "scores ({}) and positions ({}) differ in length",
                    s.len(),
                    self.positions.len()
                )));
            }
        }
        for p in &self.positions {
            if !p.is_finite() {
                return Err(Error::Size("non-finite position".into()));
            }
        }
        for n in &self.normals {
            if (n.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::Size(format!(
                    "normal norm {} deviates from 1 by more than 1e-6",
                    n.norm()
                )));
            }
        }
        Ok(())
    }

    pub fn centroid(&self) -> Vec3 {
        let mut c = Vec3::ZERO;
        for p in &self.positions {
            c = c.add(*p);
        }
        c.scale(1.0 / self.positions.len() as f64)
    }

    /// Returns the sub-cloud at the given indices (scores carried along).
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            normals: indices.iter().map(|&i| self.normals[i]).collect(),
            scores: self
                .scores
                .as_ref()
                .map(|s| indices.iter().map(|&i| s[i]).collect()),
        }
    }
}

/// A rotation + translation in SE(3). Rotation is row-major 3x3.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: Vec3::ZERO,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        RigidTransform {
            translation: t,
            ..Self::identity()
        }
    }

    /// Rotation about +z by `angle` radians.
    pub fn from_yaw(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        RigidTransform {
            rotation: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
            translation: Vec3::ZERO,
        }
    }

    /// Rotation by `angle` radians about a unit `axis` (Rodrigues).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let a = axis.normalized();
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        let (x, y, z) = (a.x, a.y, a.z);
        RigidTransform {
            rotation: [
                [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
                [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
                [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
            ],
            translation: Vec3::ZERO,
        }
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        self.rotate(v).add(self.translation)
    }

    /// Frobenius distance of R^T R from identity plus the determinant defect.
    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let mut frob = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let mut dot = 0.0;
                for k in 0..3 {
                    dot += r[k][i] * r[k][j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                frob += (dot - target) * (dot - target);
            }
        }
        if frob.sqrt() > 1e-9 {
            return Err(Error::DegenerateGeometry(format!(
                "rotation not orthonormal (|R^T R - I|_F = {:e})",
                frob.sqrt()
            )));
        }
        if (self.det() - 1.0).abs() > 1e-9 {
            return Err(Error::DegenerateGeometry(format!(
                "rotation determinant {} != +1",
                self.det()
            )));
        }
        Ok(())
    }

    pub fn det(&self) -> f64 {
        let r = &self.rotation;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }

    /// Geodesic rotation angle between the two rotations, in radians.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        // trace(Ra^T Rb) = 1 + 2 cos(theta)
        let a = &self.rotation;
        let b = &other.rotation;
        let mut trace = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                trace += a[j][i] * b[j][i];
            }
        }
        ((trace - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    /// Strict interior test (boundary points are outside).
    pub fn contains_strict(&self, p: Vec3) -> bool {
        p.x > self.min.x
            && p.x < self.max.x
            && p.y > self.min.y
            && p.y < self.max.y
            && p.z > self.min.z
            && p.z < self.max.z
    }

    /// Closed containment test (boundary points are inside).
    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn center(&self) -> Vec3 {
        self.min.add(self.max).scale(0.5)
    }

    pub fn half_extents(&self) -> Vec3 {
        self.max.sub(self.min).scale(0.5)
    }
}

/// v' = R v + t on positions, n' = R n on normals; scores are carried along.
pub fn apply_transform(pc: &PointCloud, t: &RigidTransform) -> PointCloud {
    PointCloud {
        positions: pc.positions.iter().map(|&p| t.apply(p)).collect(),
        normals: pc.normals.iter().map(|&n| t.rotate(n)).collect(),
        scores: pc.scores.clone(),
    }
}

/// compose(a, b) applies b first, then a.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    let mut rotation = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                rotation[i][j] += a.rotation[i][k] * b.rotation[k][j];
            }
        }
    }
    RigidTransform {
        rotation,
        translation: a.rotate(b.translation).add(a.translation),
    }
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    let mut rotation = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            rotation[i][j] = t.rotation[j][i];
        }
    }
    let inv = RigidTransform {
        rotation,
        translation: Vec3::ZERO,
    };
    RigidTransform {
        translation: inv.rotate(t.translation).scale(-1.0),
        ..inv
    }
}

/// Exact k-nearest-neighbour indices of each query point among `key` points,
/// sorted ascending by distance; ties broken by lower index.
pub fn knn_indices(query: &PointCloud, key: &PointCloud, k: usize) -> Result<Vec<Vec<usize>>> {
    if key.len() < k {
        return Err(Error::Size(format!(
            "knn requires at least k={} key points, got {}",
            k,
            key.len()
        )));
    }
    let mut out = Vec::with_capacity(query.len());
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(key.len());
    for q in &query.positions {
        dists.clear();
        dists.extend(
            key.positions
                .iter()
                .enumerate()
                .map(|(j, p)| (q.dist_sq(*p), j)),
        );
        // total order: distance first, index second
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        out.push(dists[..k].iter().map(|&(_, j)| j).collect());
    }
    Ok(out)
}

/// For each point of `a`, the Euclidean distance to the closest point of `b`.
pub fn min_distances(a: &PointCloud, b: &PointCloud) -> Result<Vec<f64>> {
    if b.is_empty() {
        return Err(Error::Size("min_distances against an empty cloud".into()));
    }
    Ok(a.positions
        .iter()
        .map(|p| {
            b.positions
                .iter()
                .map(|q| p.dist_sq(*q))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect())
}

pub fn aabb_of(pc: &PointCloud, margin: f64) -> Result<Aabb> {
    if pc.is_empty() {
        return Err(Error::Size("aabb of an empty cloud".into()));
    }
    let mut min = pc.positions[0];
    let mut max = pc.positions[0];
    for p in &pc.positions {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        min.z = min.z.min(p.z);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
        max.z = max.z.max(p.z);
    }
    let m = Vec3::new(margin, margin, margin);
    Ok(Aabb {
        min: min.sub(m),
        max: max.add(m),
    })
}

/// Voxel-grid superpoint clustering: one output point per nonempty voxel with
/// the mean position and the re-normalized mean normal of its members.
/// Output order is lexicographic by voxel key, so the result is deterministic.
pub fn superpoint_cluster(pc: &PointCloud, voxel_size: f64) -> Result<PointCloud> {
    if pc.is_empty() {
        return Err(Error::Size("superpoint_cluster on an empty cloud".into()));
    }
    if !(voxel_size.is_finite() && voxel_size > 0.0) {
        return Err(Error::Config(format!("invalid voxel size {voxel_size}")));
    }
    let key = |p: Vec3| -> (i64, i64, i64) {
        (
            (p.x / voxel_size).floor() as i64,
            (p.y / voxel_size).floor() as i64,
            (p.z / voxel_size).floor() as i64,
        )
    };
    let mut voxels: BTreeMap<(i64, i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in pc.positions.iter().enumerate() {
        voxels.entry(key(*p)).or_default().push(i);
    }
    let mut positions = Vec::with_capacity(voxels.len());
    let mut normals = Vec::with_capacity(voxels.len());
    for members in voxels.values() {
        let mut pos = Vec3::ZERO;
        let mut nrm = Vec3::ZERO;
        for &i in members {
            pos = pos.add(pc.positions[i]);
            nrm = nrm.add(pc.normals[i]);
        }
        pos = pos.scale(1.0 / members.len() as f64);
        let n = if nrm.norm() < 1e-8 {
            pc.normals[members[0]]
        } else {
            nrm.normalized()
        };
        positions.push(pos);
        normals.push(n);
    }
    Ok(PointCloud::new(positions, normals))
}
