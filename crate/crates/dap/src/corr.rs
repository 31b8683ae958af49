//! Correspondence prediction between the cropped container region and the
//! object: KNN grouped vector attention (GVA) blocks over shared encoder
//! features, a scaled dot-product head, focal-loss training, and match
//! extraction for the pose solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{knn_indices, PointCloud, Vec3};
use crate::nn::{LayerNorm, Linear, PointEncoder};
use crate::tensor::{ParamStore, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrConfig {
    pub token_dim: usize,
    pub num_blocks: usize,
    pub gva_k: usize,
    pub gva_groups: usize,
    pub encoder_k: usize,
    pub gamma: f64,
    pub match_threshold: f64,
}

impl Default for CorrConfig {
    fn default() -> Self {
        CorrConfig {
            token_dim: 64,
            num_blocks: 2,
            gva_k: 8,
            gva_groups: 8,
            encoder_k: 8,
            gamma: 2.0,
            match_threshold: 0.5,
        }
    }
}

impl CorrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.token_dim == 0 || self.num_blocks == 0 || self.gva_k == 0 || self.gva_groups == 0 {
            return Err(Error::Config("corr dims must be positive".into()));
        }
        if self.token_dim % self.gva_groups != 0 {
            return Err(Error::Config(format!(
                "token_dim {} not divisible by gva_groups {}",
                self.token_dim, self.gva_groups
            )));
        }
        if self.gamma < 0.0 {
            return Err(Error::Config("gamma must be >= 0".into()));
        }
        if !(self.match_threshold > 0.0 && self.match_threshold < 1.0) {
            return Err(Error::Config("match_threshold must be in (0,1)".into()));
        }
        Ok(())
    }
}

/// One grouped-vector-attention unit, addressed by name prefix. Per query
/// point: gather its `gva_k` nearest key points, compute relation vectors
/// MLP(q − k + pos_mlp(Δpos)), collapse each to `gva_groups` logits, softmax
/// over the neighbours per group, apply the group weight to that group's
/// channel slice of the transformed key value, sum, residual-add, layer-norm.
#[derive(Debug, Clone)]
pub struct GvaUnit {
    pos1: Linear,
    pos2: Linear,
    rel1: Linear,
    rel2: Linear,
    group: Linear,
    value: Linear,
    norm: LayerNorm,
}

impl GvaUnit {
    pub fn init(store: &mut ParamStore, name: &str, cfg: &CorrConfig, rng: &mut impl rand::Rng) -> GvaUnit {
        let d = cfg.token_dim;
        GvaUnit {
            pos1: Linear::init(store, &format!("{name}.pos1"), 3, d, rng),
            pos2: Linear::init(store, &format!("{name}.pos2"), d, d, rng),
            rel1: Linear::init(store, &format!("{name}.rel1"), d, d, rng),
            rel2: Linear::init(store, &format!("{name}.rel2"), d, d, rng),
            group: Linear::init(store, &format!("{name}.group"), d, cfg.gva_groups, rng),
            value: Linear::init(store, &format!("{name}.value"), d, d, rng),
            norm: LayerNorm::init(store, &format!("{name}.norm"), d),
        }
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        cfg: &CorrConfig,
        query_tokens: &Tensor,
        key_tokens: &Tensor,
        query_positions: &[Vec3],
        key_positions: &[Vec3],
    ) -> Result<Tensor> {
        let (nq, d) = (query_tokens.shape()[0], query_tokens.shape()[1]);
        let nk = key_tokens.shape()[0];
        if key_tokens.shape()[1] != d {
            return Err(Error::Shape(
                format!("{:?}", query_tokens.shape()),
                format!("{:?}", key_tokens.shape()),
            ));
        }
        if nq != query_positions.len() || nk != key_positions.len() {
            return Err(Error::Size("token/position count mismatch".into()));
        }
        let k = cfg.gva_k;
        let dummy_n = |ps: &[Vec3]| vec![Vec3::new(0.0, 0.0, 1.0); ps.len()];
        let qc = PointCloud::new(query_positions.to_vec(), dummy_n(query_positions));
        let kc = PointCloud::new(key_positions.to_vec(), dummy_n(key_positions));
        let groups = knn_indices(&qc, &kc, k)?;

        let mut q_idx = Vec::with_capacity(nq * k);
        let mut k_idx = Vec::with_capacity(nq * k);
        let mut dpos = Vec::with_capacity(nq * k * 3);
        for (i, neigh) in groups.iter().enumerate() {
            for &j in neigh {
                q_idx.push(i);
                k_idx.push(j);
                let dp = query_positions[i].sub(key_positions[j]);
                dpos.extend_from_slice(&[dp.x, dp.y, dp.z]);
            }
        }
        let qg = query_tokens.gather_rows(&q_idx)?;
        let kg = key_tokens.gather_rows(&k_idx)?;
        let pe = self
            .pos2
            .forward(store, &self.pos1.forward(store, &Tensor::from_vec(&[nq * k, 3], dpos))?.silu())?;
        let rel_in = qg.sub(&kg)?.add(&pe)?;
        let rel = self.rel2.forward(store, &self.rel1.forward(store, &rel_in)?.silu())?;
        let logits = self.group.forward(store, &rel)?;
        let w = logits.softmax_row_chunks(k)?;

        // constant 0/1 block matrix expanding group weights to channels
        let g = cfg.gva_groups;
        let slice = d / g;
        let mut expand = vec![0.0; g * d];
        for gi in 0..g {
            for c in gi * slice..(gi + 1) * slice {
                expand[gi * d + c] = 1.0;
            }
        }
        let expand = Tensor::from_vec(&[g, d], expand);
        let vals = self.value.forward(store, &kg)?;
        let out = w.matmul(&expand)?.mul(&vals)?.sum_row_chunks(k)?;
        self.norm.forward(store, &query_tokens.add(&out)?)
    }
}

/// One correspondence block: object self-attention, object←container cross
/// attention, container←object cross attention.
#[derive(Debug, Clone)]
struct CorrBlock {
    self_obj: GvaUnit,
    cross_obj: GvaUnit,
    cross_con: GvaUnit,
}

/// The full correspondence model: shared point encoder plus `num_blocks`
/// GVA blocks and the scaled-dot-product sigmoid head.
#[derive(Debug, Clone)]
pub struct CorrModel {
    pub cfg: CorrConfig,
    encoder: PointEncoder,
    blocks: Vec<CorrBlock>,
}

impl CorrModel {
    pub fn init(store: &mut ParamStore, cfg: &CorrConfig, rng: &mut impl rand::Rng) -> Result<CorrModel> {
        cfg.validate()?;
        let d = cfg.token_dim;
        let encoder = PointEncoder::init(store, "corr.enc", cfg.encoder_k, d, d, rng);
        let blocks = (0..cfg.num_blocks)
            .map(|b| CorrBlock {
                self_obj: GvaUnit::init(store, &format!("corr.block{b}.self_obj"), cfg, rng),
                cross_obj: GvaUnit::init(store, &format!("corr.block{b}.cross_obj"), cfg, rng),
                cross_con: GvaUnit::init(store, &format!("corr.block{b}.cross_con"), cfg, rng),
            })
            .collect();
        Ok(CorrModel { cfg: cfg.clone(), encoder, blocks })
    }

    /// C_φ as an [N_O, N_C] tensor with entries in (0, 1). Both clouds are
    /// centered at their own centroid first so the prediction depends only on
    /// shape, not on where the crop sits in the scene.
    pub fn forward(&self, store: &ParamStore, cropped_container: &PointCloud, object: &PointCloud) -> Result<Tensor> {
        if cropped_container.is_empty() || object.is_empty() {
            return Err(Error::Size("corr_forward needs nonempty clouds".into()));
        }
        let center = |pc: &PointCloud| -> PointCloud {
            let c = pc.centroid();
            PointCloud::new(pc.positions.iter().map(|p| p.sub(c)).collect(), pc.normals.clone())
        };
        let con = center(cropped_container);
        let obj = center(object);
        let mut f_o = self.encoder.forward(store, &obj)?;
        let mut f_c = self.encoder.forward(store, &con)?;
        for b in &self.blocks {
            f_o = b.self_obj.forward(store, &self.cfg, &f_o, &f_o, &obj.positions, &obj.positions)?;
            f_o = b.cross_obj.forward(store, &self.cfg, &f_o, &f_c, &obj.positions, &con.positions)?;
            f_c = b.cross_con.forward(store, &self.cfg, &f_c, &f_o, &con.positions, &obj.positions)?;
        }
        let scale = 1.0 / (self.cfg.token_dim as f64).sqrt();
        Ok(f_o.matmul(&f_c.transpose()?)?.mul_scalar(scale).sigmoid_t())
    }
}

/// Two-sided binary focal loss, mean over all entries:
/// −[y(1−p)^γ log p + (1−y) p^γ log(1−p)], p clamped to [1e-7, 1−1e-7].
/// Equals binary cross-entropy at γ = 0.
pub fn focal_loss(pred: &Tensor, label: &Tensor, gamma: f64) -> Result<Tensor> {
    if pred.shape() != label.shape() {
        return Err(Error::Shape(
            format!("{:?}", pred.shape()),
            format!("{:?}", label.shape()),
        ));
    }
    if label.data().iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Config("focal labels must be in {0, 1}".into()));
    }
    let p = pred.clamp_t(1e-7, 1.0 - 1e-7);
    let one_minus_p = p.mul_scalar(-1.0).add_scalar(1.0);
    let one_minus_y = label.mul_scalar(-1.0).add_scalar(1.0);
    let pos = label.mul(&one_minus_p.pow_scalar(gamma))?.mul(&p.ln_t())?;
    let neg = one_minus_y.mul(&p.pow_scalar(gamma))?.mul(&one_minus_p.ln_t())?;
    Ok(pos.add(&neg)?.mul_scalar(-1.0).mean_all())
}

/// Row-argmax matches above threshold, the bridge from C_φ to the pose solver.
#[derive(Debug, Clone)]
pub struct MatchSet {
    /// (object index, container index, weight).
    pub pairs: Vec<(usize, usize, f64)>,
}

pub fn extract_matches(
    pred: &Tensor,
    object: &PointCloud,
    container: &PointCloud,
    cfg: &CorrConfig,
) -> Result<MatchSet> {
    let shape = pred.shape().to_vec();
    if shape != [object.len(), container.len()] {
        return Err(Error::Shape(
            format!("{:?}", [object.len(), container.len()]),
            format!("{shape:?}"),
        ));
    }
    let (n_o, n_c) = (shape[0], shape[1]);
    let v = pred.data();
    let mut pairs = Vec::new();
    for i in 0..n_o {
        let row = &v[i * n_c..(i + 1) * n_c];
        let mut best = 0usize;
        for j in 1..n_c {
            if row[j] > row[best] {
                best = j;
            }
        }
        if row[best] >= cfg.match_threshold {
            pairs.push((i, best, row[best]));
        }
    }
    if pairs.len() < 3 {
        return Err(Error::InsufficientMatches(pairs.len()));
    }
    Ok(MatchSet { pairs })
}
