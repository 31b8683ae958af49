//! Shared network building blocks: dense layers, the KNN point-feature
//! encoder, and the positional / time embeddings.

use rand::Rng;

use crate::error::Result;
use crate::geom::{knn_indices, PointCloud};
use crate::tensor::{ParamStore, Tensor};

/// A dense layer addressed by parameter-name prefix inside a `ParamStore`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub name: String,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Glorot-uniform weight, zero bias.
    pub fn init(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Linear {
        store.init_dense(&format!("{name}.w"), fan_in, fan_out, rng);
        store.init_zeros(&format!("{name}.b"), &[1, fan_out]);
        Linear { name: name.to_string(), fan_in, fan_out }
    }

    /// Zero weight and bias: the layer outputs exactly zero at init.
    pub fn init_zeroed(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Linear {
        store.init_zeros(&format!("{name}.w"), &[fan_in, fan_out]);
        store.init_zeros(&format!("{name}.b"), &[1, fan_out]);
        Linear { name: name.to_string(), fan_in, fan_out }
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let w = store.get(&format!("{}.w", self.name));
        let b = store.get(&format!("{}.b", self.name));
        let y = x.matmul(w)?;
        let n = y.shape()[0];
        y.add(&b.broadcast_rows(n)?)
    }
}

/// Affine layer-norm parameters (scale init 1, shift init 0).
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub name: String,
}

impl LayerNorm {
    pub fn init(store: &mut ParamStore, name: &str, dim: usize) -> LayerNorm {
        store.init_ones(&format!("{name}.g"), &[1, dim]);
        store.init_zeros(&format!("{name}.b"), &[1, dim]);
        LayerNorm { name: name.to_string() }
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let n = x.shape()[0];
        let g = store.get(&format!("{}.g", self.name)).broadcast_rows(n)?;
        let b = store.get(&format!("{}.b", self.name)).broadcast_rows(n)?;
        x.layer_norm_last()?.mul(&g)?.add(&b)
    }
}

/// Per-point feature encoder: a shared two-layer MLP on [position, normal],
/// max-pooled over each point's k nearest neighbours and concatenated with
/// the point's own features before a projection to `token_dim`.
#[derive(Debug, Clone)]
pub struct PointEncoder {
    pub k: usize,
    pub token_dim: usize,
    l1: Linear,
    l2: Linear,
    proj: Linear,
}

impl PointEncoder {
    pub fn init(store: &mut ParamStore, name: &str, k: usize, hidden: usize, token_dim: usize, rng: &mut impl Rng) -> PointEncoder {
        PointEncoder {
            k,
            token_dim,
            l1: Linear::init(store, &format!("{name}.l1"), 6, hidden, rng),
            l2: Linear::init(store, &format!("{name}.l2"), hidden, hidden, rng),
            proj: Linear::init(store, &format!("{name}.proj"), 2 * hidden, token_dim, rng),
        }
    }

    pub fn forward(&self, store: &ParamStore, pc: &PointCloud) -> Result<Tensor> {
        let n = pc.len();
        let mut rows = Vec::with_capacity(n * 6);
        for i in 0..n {
            let p = pc.positions[i];
            let m = pc.normals[i];
            rows.extend_from_slice(&[p.x, p.y, p.z, m.x, m.y, m.z]);
        }
        let x = Tensor::from_vec(&[n, 6], rows);
        let h = self.l2.forward(store, &self.l1.forward(store, &x)?.silu())?;
        let groups = knn_indices(pc, pc, self.k)?;
        let pooled = h.row_max_pool(&groups)?;
        self.proj.forward(store, &Tensor::concat_cols(&[&h, &pooled])?)
    }
}

/// Per-axis sin/cos embedding at octave frequencies: for axis value `a` and
/// octave k, [sin(2^k pi a), cos(2^k pi a)]; output dim 6 * num_freqs.
pub fn fourier_embed(positions: &[crate::geom::Vec3], num_freqs: usize) -> Tensor {
    let dim = 6 * num_freqs;
    let mut data = Vec::with_capacity(positions.len() * dim);
    for p in positions {
        for a in [p.x, p.y, p.z] {
            for k in 0..num_freqs {
                let w = (1u64 << k) as f64 * std::f64::consts::PI * a;
                data.push(w.sin());
                data.push(w.cos());
            }
        }
    }
    Tensor::from_vec(&[positions.len(), dim], data)
}

/// Standard sinusoidal embedding of a (possibly zero) timestep.
pub fn sinusoidal_time_embed(t: usize, dim: usize) -> Tensor {
    assert!(dim % 2 == 0);
    let half = dim / 2;
    let mut data = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        data[i] = (t as f64 * freq).sin();
        data[half + i] = (t as f64 * freq).cos();
    }
    Tensor::from_vec(&[1, dim], data)
}
