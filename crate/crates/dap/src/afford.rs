//! Diffusion-based affordance prediction: the noise schedule, forward and
//! reverse processes, the simplified DDPM training loss, the iterative
//! sampler, the Point-DiT denoiser, and the one-step classification (CAP)
//! ablation that shares the same backbone.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::PointCloud;
use crate::nn::{fourier_embed, sinusoidal_time_embed, Linear, PointEncoder};
use crate::tensor::{no_grad, ParamStore, Tensor};

/// Linear-β DDPM schedule with all derived per-step quantities.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    pub steps: usize,
    /// β_t, indexed by t−1 for t ∈ 1..=T.
    pub beta: Vec<f64>,
    /// α_t = 1 − β_t.
    pub alpha: Vec<f64>,
    /// ᾱ_t = Π_{s≤t} α_s.
    pub alpha_bar: Vec<f64>,
    /// σ_t = √β_t.
    pub sigma: Vec<f64>,
}

impl NoiseSchedule {
    fn idx(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps {
            return Err(Error::Config(format!("step {t} outside 1..={}", self.steps)));
        }
        Ok(t - 1)
    }

    pub fn beta_at(&self, t: usize) -> Result<f64> {
        Ok(self.beta[self.idx(t)?])
    }
    pub fn alpha_at(&self, t: usize) -> Result<f64> {
        Ok(self.alpha[self.idx(t)?])
    }
    pub fn alpha_bar_at(&self, t: usize) -> Result<f64> {
        Ok(self.alpha_bar[self.idx(t)?])
    }
    pub fn sigma_at(&self, t: usize) -> Result<f64> {
        Ok(self.sigma[self.idx(t)?])
    }
}

pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps < 1 {
        return Err(Error::Config("schedule needs at least one step".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Config(format!(
            "invalid beta range [{beta_start}, {beta_end}]"
        )));
    }
    let mut beta = Vec::with_capacity(steps);
    for i in 0..steps {
        let f = if steps == 1 { 0.0 } else { i as f64 / (steps - 1) as f64 };
        beta.push(beta_start + (beta_end - beta_start) * f);
    }
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(steps);
    let mut prod = 1.0;
    for &a in &alpha {
        prod *= a;
        alpha_bar.push(prod);
    }
    let sigma = beta.iter().map(|b| b.sqrt()).collect();
    Ok(NoiseSchedule { steps, beta, alpha, alpha_bar, sigma })
}

/// S(t) = √ᾱ_t · S(0) + √(1 − ᾱ_t) · ε, elementwise.
pub fn q_sample(s0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    if s0.len() != eps.len() {
        return Err(Error::Shape(format!("[{}]", s0.len()), format!("[{}]", eps.len())));
    }
    let ab = sched.alpha_bar_at(t)?;
    let (c0, ce) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(s0.iter().zip(eps).map(|(s, e)| c0 * s + ce * e).collect())
}

/// Anything that can stand in for ε_θ(S(t), t, P_C) during sampling: the
/// trained denoiser, or an analytic stub in tests.
pub trait NoisePredictor {
    fn predict(&self, s_t: &[f64], t: usize, container: &PointCloud) -> Result<Vec<f64>>;
}

/// One DDPM reverse step:
/// S(t−1) = (1/√α_t)(S(t) − ((1−α_t)/√(1−ᾱ_t)) ε_θ) + σ_t z, with z forced to
/// zero at t = 1.
pub fn reverse_step(
    model: &impl NoisePredictor,
    s_t: &[f64],
    t: usize,
    container: &PointCloud,
    z: &[f64],
    sched: &NoiseSchedule,
) -> Result<Vec<f64>> {
    if z.len() != s_t.len() {
        return Err(Error::Shape(format!("[{}]", s_t.len()), format!("[{}]", z.len())));
    }
    let eps = model.predict(s_t, t, container)?;
    if eps.len() != s_t.len() {
        return Err(Error::Shape(format!("[{}]", s_t.len()), format!("[{}]", eps.len())));
    }
    let a = sched.alpha_at(t)?;
    let ab = sched.alpha_bar_at(t)?;
    let sigma = if t > 1 { sched.sigma_at(t)? } else { 0.0 };
    let inv_sqrt_a = 1.0 / a.sqrt();
    let eps_coef = (1.0 - a) / (1.0 - ab).sqrt();
    Ok(s_t
        .iter()
        .zip(&eps)
        .zip(z)
        .map(|((s, e), zi)| inv_sqrt_a * (s - eps_coef * e) + sigma * zi)
        .collect())
}

/// Output of [`sample_affordance`]: the raw sampled S(0), the copy clamped to
/// [−1, 1] for downstream cropping, and the optional trajectory S(T)..S(0).
#[derive(Debug, Clone)]
pub struct AffordanceSample {
    pub raw: Vec<f64>,
    pub clamped: Vec<f64>,
    pub trajectory: Option<Vec<Vec<f64>>>,
}

pub fn sample_affordance(
    model: &impl NoisePredictor,
    container: &PointCloud,
    sched: &NoiseSchedule,
    rng_seed: u64,
    record_trajectory: bool,
) -> Result<AffordanceSample> {
    let n = container.len();
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let normal = |rng: &mut ChaCha12Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    };
    let mut s = normal(&mut rng, n);
    let mut traj = record_trajectory.then(|| vec![s.clone()]);
    for t in (1..=sched.steps).rev() {
        let z = if t > 1 { normal(&mut rng, n) } else { vec![0.0; n] };
        s = reverse_step(model, &s, t, container, &z, sched)?;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDivergence(format!("non-finite state at step {t}")));
        }
        if let Some(traj) = &mut traj {
            traj.push(s.clone());
        }
    }
    let clamped = s.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    Ok(AffordanceSample { raw: s, clamped, trajectory: traj })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub token_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub fourier_freqs: usize,
    pub encoder_k: usize,
    pub time_embed_dim: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            token_dim: 64,
            num_layers: 3,
            num_heads: 4,
            fourier_freqs: 6,
            encoder_k: 8,
            time_embed_dim: 64,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.token_dim == 0 || self.num_layers == 0 || self.num_heads == 0 {
            return Err(Error::Config("denoiser dims must be positive".into()));
        }
        if self.token_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "token_dim {} not divisible by num_heads {}",
                self.token_dim, self.num_heads
            )));
        }
        if self.fourier_freqs == 0 || self.encoder_k == 0 {
            return Err(Error::Config("fourier_freqs and encoder_k must be positive".into()));
        }
        if self.time_embed_dim % 2 != 0 {
            return Err(Error::Config("time_embed_dim must be even".into()));
        }
        Ok(())
    }
}

/// Full multi-head self-attention addressed by name prefix. No biases on the
/// projections; heads are concatenated and mixed by `wo`.
#[derive(Debug, Clone)]
struct SelfAttention {
    name: String,
    dim: usize,
    heads: usize,
}

impl SelfAttention {
    fn init(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut impl rand::Rng) -> SelfAttention {
        let hd = dim / heads;
        for h in 0..heads {
            store.init_dense(&format!("{name}.q{h}"), dim, hd, rng);
            store.init_dense(&format!("{name}.k{h}"), dim, hd, rng);
            store.init_dense(&format!("{name}.v{h}"), dim, hd, rng);
        }
        store.init_dense(&format!("{name}.o"), dim, dim, rng);
        SelfAttention { name: name.to_string(), dim, heads }
    }

    fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let hd = self.dim / self.heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let q = x.matmul(store.get(&format!("{}.q{h}", self.name)))?;
            let k = x.matmul(store.get(&format!("{}.k{h}", self.name)))?;
            let v = x.matmul(store.get(&format!("{}.v{h}", self.name)))?;
            let att = q.matmul(&k.transpose()?)?.mul_scalar(scale).softmax_last()?;
            outs.push(att.matmul(&v)?);
        }
        let refs: Vec<&Tensor> = outs.iter().collect();
        Tensor::concat_cols(&refs)?.matmul(store.get(&format!("{}.o", self.name)))
    }
}

/// One Point-DiT block: adaLN-zero modulation of attention and MLP sublayers,
/// conditioned on the time token.
#[derive(Debug, Clone)]
struct DitLayer {
    pos_proj: Linear,
    /// shift1, scale1, gate1, shift2, scale2, gate2 — all zero-init so the
    /// block is the identity at initialization.
    mods: Vec<Linear>,
    attn: SelfAttention,
    mlp1: Linear,
    mlp2: Linear,
}

impl DitLayer {
    fn init(store: &mut ParamStore, name: &str, cfg: &DenoiserConfig, rng: &mut impl rand::Rng) -> DitLayer {
        let d = cfg.token_dim;
        let mods = (0..6)
            .map(|i| Linear::init_zeroed(store, &format!("{name}.mod{i}"), d, d))
            .collect();
        DitLayer {
            pos_proj: Linear::init(store, &format!("{name}.pos"), 6 * cfg.fourier_freqs, d, rng),
            mods,
            attn: SelfAttention::init(store, &format!("{name}.attn"), d, cfg.num_heads, rng),
            mlp1: Linear::init(store, &format!("{name}.mlp1"), d, 2 * d, rng),
            mlp2: Linear::init(store, &format!("{name}.mlp2"), 2 * d, d, rng),
        }
    }

    /// `pos` is the raw fourier embedding [N, 6·freqs]; `cond` is the time
    /// token [1, D].
    fn forward(&self, store: &ParamStore, x: &Tensor, pos: &Tensor, cond: &Tensor) -> Result<Tensor> {
        let n = x.shape()[0];
        let x = x.add(&self.pos_proj.forward(store, pos)?)?;
        let c = cond.silu();
        let m = |i: usize| -> Result<Tensor> {
            self.mods[i].forward(store, &c)?.broadcast_rows(n)
        };
        let (sh1, sc1, g1) = (m(0)?, m(1)?, m(2)?);
        let (sh2, sc2, g2) = (m(3)?, m(4)?, m(5)?);
        let h = x.layer_norm_last()?.mul(&sc1.add_scalar(1.0))?.add(&sh1)?;
        let x = x.add(&self.attn.forward(store, &h)?.mul(&g1)?)?;
        let h = x.layer_norm_last()?.mul(&sc2.add_scalar(1.0))?.add(&sh2)?;
        let h = self.mlp2.forward(store, &self.mlp1.forward(store, &h)?.silu())?;
        x.add(&h.mul(&g2)?)
    }
}

/// The Point-DiT denoiser ε_θ(S(t), t, P_C).
#[derive(Debug, Clone)]
pub struct Denoiser {
    pub cfg: DenoiserConfig,
    encoder: PointEncoder,
    token_proj: Linear,
    time_l1: Linear,
    time_l2: Linear,
    layers: Vec<DitLayer>,
    head: Linear,
}

impl Denoiser {
    pub fn init(store: &mut ParamStore, cfg: &DenoiserConfig, rng: &mut impl rand::Rng) -> Result<Denoiser> {
        cfg.validate()?;
        let d = cfg.token_dim;
        Ok(Denoiser {
            cfg: cfg.clone(),
            encoder: PointEncoder::init(store, "den.enc", cfg.encoder_k, d, d, rng),
            token_proj: Linear::init(store, "den.tok", d + 1, d, rng),
            time_l1: Linear::init(store, "den.time1", cfg.time_embed_dim, d, rng),
            time_l2: Linear::init(store, "den.time2", d, d, rng),
            layers: (0..cfg.num_layers)
                .map(|l| DitLayer::init(store, &format!("den.layer{l}"), cfg, rng))
                .collect(),
            // zero-init head: the untrained denoiser predicts exactly 0
            head: Linear::init_zeroed(store, "den.head", d, 1),
        })
    }

    /// Encoder features for a container; constant across sampling steps, so
    /// callers on the inference path compute them once (see [`CachedDenoiser`]).
    pub fn encode(&self, store: &ParamStore, container: &PointCloud) -> Result<Tensor> {
        self.encoder.forward(store, container)
    }

    pub fn forward(&self, store: &ParamStore, s_t: &Tensor, t: usize, container: &PointCloud) -> Result<Tensor> {
        let feats = self.encode(store, container)?;
        let pos = fourier_embed(&container.positions, self.cfg.fourier_freqs);
        self.forward_parts(store, s_t, t, &feats, &pos)
    }

    /// Core forward over precomputed encoder features and raw positional
    /// embedding. `s_t` is [N, 1]; output is the ε prediction [N, 1].
    pub fn forward_parts(
        &self,
        store: &ParamStore,
        s_t: &Tensor,
        t: usize,
        feats: &Tensor,
        pos: &Tensor,
    ) -> Result<Tensor> {
        if s_t.shape() != [feats.shape()[0], 1] {
            return Err(Error::Shape(
                format!("{:?}", [feats.shape()[0], 1]),
                format!("{:?}", s_t.shape()),
            ));
        }
        let mut x = self.token_proj.forward(store, &Tensor::concat_cols(&[feats, s_t])?)?;
        let te = sinusoidal_time_embed(t, self.cfg.time_embed_dim);
        let cond = self.time_l2.forward(store, &self.time_l1.forward(store, &te)?.silu())?;
        for layer in &self.layers {
            x = layer.forward(store, &x, pos, &cond)?;
        }
        self.head.forward(store, &x.layer_norm_last()?)
    }

    /// Eq.-6 simplified loss: ‖ε − ε_θ(q_sample(S0, t, ε), t, P_C)‖² (mean).
    pub fn ddpm_loss(
        &self,
        store: &ParamStore,
        s0: &[f64],
        container: &PointCloud,
        t: usize,
        eps: &[f64],
        sched: &NoiseSchedule,
    ) -> Result<Tensor> {
        if s0.len() != container.len() {
            return Err(Error::Shape(
                format!("[{}]", container.len()),
                format!("[{}]", s0.len()),
            ));
        }
        let s_t = q_sample(s0, t, eps, sched)?;
        let n = s_t.len();
        let s_t = Tensor::from_vec(&[n, 1], s_t);
        let target = Tensor::from_vec(&[n, 1], eps.to_vec());
        self.forward(store, &s_t, t, container)?.mse(&target)
    }

    /// CAP ablation logits: one forward pass with t = 0 and a zeroed score
    /// channel.
    pub fn cap_logits(&self, store: &ParamStore, container: &PointCloud) -> Result<Tensor> {
        let s = Tensor::zeros(&[container.len(), 1]);
        self.forward(store, &s, 0, container)
    }

    /// Class-balanced binary cross-entropy of sigmoid(logits) against
    /// (label+1)/2. Positive and negative examples are reweighted to equal
    /// total mass (mean weight 1), so the loss is ln 2 at uniform zero logits
    /// regardless of class skew.
    pub fn cap_loss(&self, store: &ParamStore, labels: &[f64], container: &PointCloud) -> Result<Tensor> {
        let n = labels.len();
        if n != container.len() {
            return Err(Error::Shape(format!("[{}]", container.len()), format!("[{n}]")));
        }
        if labels.iter().any(|&l| l != 1.0 && l != -1.0) {
            return Err(Error::Config("cap labels must be in {-1, +1}".into()));
        }
        let n_pos = labels.iter().filter(|&&l| l > 0.0).count();
        let n_neg = n - n_pos;
        let (w_pos, w_neg) = if n_pos == 0 || n_neg == 0 {
            (1.0, 1.0)
        } else {
            (n as f64 / (2.0 * n_pos as f64), n as f64 / (2.0 * n_neg as f64))
        };
        let y: Vec<f64> = labels.iter().map(|l| (l + 1.0) / 2.0).collect();
        let w: Vec<f64> = labels.iter().map(|&l| if l > 0.0 { w_pos } else { w_neg }).collect();
        let y = Tensor::from_vec(&[n, 1], y);
        let w = Tensor::from_vec(&[n, 1], w);
        let p = self
            .cap_logits(store, container)?
            .sigmoid_t()
            .clamp_t(1e-7, 1.0 - 1e-7);
        // -[y ln p + (1-y) ln(1-p)], weighted
        let one_minus_y = y.mul_scalar(-1.0).add_scalar(1.0);
        let one_minus_p = p.mul_scalar(-1.0).add_scalar(1.0);
        let ll = y.mul(&p.ln_t())?.add(&one_minus_y.mul(&one_minus_p.ln_t())?)?;
        Ok(ll.mul(&w)?.mul_scalar(-1.0).mean_all())
    }

    /// One-step CAP prediction mapped back to the score convention: 2σ(z)−1.
    pub fn cap_predict(&self, store: &ParamStore, container: &PointCloud) -> Result<Vec<f64>> {
        no_grad(|| {
            let p = self.cap_logits(store, container)?.sigmoid_t();
            Ok(p.to_vec().iter().map(|v| 2.0 * v - 1.0).collect())
        })
    }
}

/// Inference-time wrapper: precomputes the encoder features and positional
/// embedding once per container and serves ε predictions under `no_grad`.
/// Sound because sampling never mutates parameters.
pub struct CachedDenoiser<'a> {
    den: &'a Denoiser,
    store: &'a ParamStore,
    feats: Tensor,
    pos: Tensor,
}

impl<'a> CachedDenoiser<'a> {
    pub fn new(den: &'a Denoiser, store: &'a ParamStore, container: &PointCloud) -> Result<CachedDenoiser<'a>> {
        let feats = no_grad(|| den.encode(store, container))?.detach();
        let pos = fourier_embed(&container.positions, den.cfg.fourier_freqs);
        Ok(CachedDenoiser { den, store, feats, pos })
    }
}

impl NoisePredictor for CachedDenoiser<'_> {
    fn predict(&self, s_t: &[f64], t: usize, _container: &PointCloud) -> Result<Vec<f64>> {
        no_grad(|| {
            let s = Tensor::from_vec(&[s_t.len(), 1], s_t.to_vec());
            Ok(self
                .den
                .forward_parts(self.store, &s, t, &self.feats, &self.pos)?
                .to_vec())
        })
    }
}
