//! ASCII PLY import/export for point clouds.
//!
//! Vertices carry `x y z nx ny nz` and, when the cloud has a score channel,
//! an extra `score` property.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{PointCloud, Vec3};

pub fn write_ply(pc: &PointCloud, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", pc.len()));
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    out.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    if pc.scores.is_some() {
        out.push_str("property double score\n");
    }
    out.push_str("end_header\n");
    for i in 0..pc.len() {
        let p = pc.positions[i];
        let n = pc.normals[i];
        out.push_str(&format!("{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z));
        if let Some(s) = &pc.scores {
            out.push_str(&format!(" {}", s[i]));
        }
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(out.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    let bad = |msg: &str| Error::Format(format!("{}: {}", path.display(), msg));

    if lines.next().map(str::trim) != Some("ply") {
        return Err(bad("missing 'ply' magic"));
    }
    if lines.next().map(str::trim) != Some("format ascii 1.0") {
        return Err(bad("only 'format ascii 1.0' is supported"));
    }
    let mut vertex_count = None;
    let mut props: Vec<String> = Vec::new();
    for line in lines.by_ref() {
        let line = line.trim();
        if line == "end_header" {
            break;
        }
        let mut it = line.split_whitespace();
        match it.next() {
            Some("element") => {
                if it.next() == Some("vertex") {
                    vertex_count = Some(
                        it.next()
                            .and_then(|s| s.parse::<usize>().ok())
                            .ok_or_else(|| bad("bad vertex count"))?,
                    );
                }
            }
            Some("property") => {
                let _ty = it.next();
                if let Some(name) = it.next() {
                    props.push(name.to_string());
                }
            }
            Some("comment") | None => {}
            _ => {}
        }
    }
    let n = vertex_count.ok_or_else(|| bad("no vertex element"))?;
    let required = ["x", "y", "z", "nx", "ny", "nz"];
    for r in required {
        if !props.iter().any(|p| p == r) {
            return Err(bad(&format!("missing property '{r}'")));
        }
    }
    let col = |name: &str| props.iter().position(|p| p == name).unwrap();
    let has_score = props.iter().any(|p| p == "score");

    let mut positions = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut scores = if has_score { Some(Vec::with_capacity(n)) } else { None };
    for _ in 0..n {
        let line = lines.next().ok_or_else(|| bad("truncated vertex data"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("non-numeric vertex value"))?;
        if vals.len() != props.len() {
            return Err(bad("vertex line has wrong field count"));
        }
        positions.push(Vec3::new(vals[col("x")], vals[col("y")], vals[col("z")]));
        normals.push(Vec3::new(vals[col("nx")], vals[col("ny")], vals[col("nz")]));
        if let Some(s) = &mut scores {
            s.push(vals[col("score")]);
        }
    }
    let mut pc = PointCloud::new(positions, normals);
    pc.scores = scores;
    Ok(pc)
}
