//! Run configuration: every tunable in one place, loadable from a JSON file
//! of flat dotted keys and overridable by identically-named CLI flags.

use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use crate::afford::DenoiserConfig;
use crate::corr::CorrConfig;
use crate::env::TaskKind;
use crate::error::{Error, Result};
use crate::labeling::LabelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { steps: 100, beta_start: 1e-4, beta_end: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { steps: 3000, lr: 1e-3, eval_every: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferConfig {
    pub k_candidates: usize,
    pub collision_margin: f64,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig { k_candidates: 8, collision_margin: 0.005 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub scenes: usize,
    pub demos: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { scenes: 50, demos: 4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { episodes: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathsConfig {
    pub dataset: String,
    pub checkpoints: String,
    pub reports: String,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            dataset: "out/dataset.jsonl".into(),
            checkpoints: "out/checkpoints".into(),
            reports: "out/reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: TaskKind,
    pub seed: u64,
    pub label: LabelConfig,
    pub schedule: ScheduleConfig,
    pub denoiser: DenoiserConfig,
    pub corr: CorrConfig,
    pub train: TrainConfig,
    pub gen: GenConfig,
    pub eval: EvalConfig,
    pub infer: InferConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: TaskKind::Shelf,
            seed: 0,
            // Labeling radii are matched to the procedural scene scale: the
            // spacing of superpoints on the panels sets how wide the
            // "placeable" band must be to capture each slot.
            label: LabelConfig { eps_place: 0.06, eps_corr: 0.045, ..LabelConfig::default() },
            schedule: ScheduleConfig::default(),
            denoiser: DenoiserConfig::default(),
            corr: CorrConfig::default(),
            train: TrainConfig::default(),
            gen: GenConfig::default(),
            eval: EvalConfig::default(),
            infer: InferConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("bad value {v:?} for key {key:?}")))
}

impl RunConfig {
    /// Set one field by its flat dotted key, parsing the string value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "task" => self.task = value.parse()?,
            "seed" => self.seed = parse_num(key, value)?,
            "label.eps_place" => self.label.eps_place = parse_num(key, value)?,
            "label.eps_corr" => self.label.eps_corr = parse_num(key, value)?,
            "label.crop_scale_min" => self.label.crop_scale_min = parse_num(key, value)?,
            "label.crop_scale_max" => self.label.crop_scale_max = parse_num(key, value)?,
            "schedule.T" => self.schedule.steps = parse_num(key, value)?,
            "schedule.beta_start" => self.schedule.beta_start = parse_num(key, value)?,
            "schedule.beta_end" => self.schedule.beta_end = parse_num(key, value)?,
            "denoiser.token_dim" => self.denoiser.token_dim = parse_num(key, value)?,
            "denoiser.num_layers" => self.denoiser.num_layers = parse_num(key, value)?,
            "denoiser.num_heads" => self.denoiser.num_heads = parse_num(key, value)?,
            "denoiser.fourier_freqs" => self.denoiser.fourier_freqs = parse_num(key, value)?,
            "denoiser.encoder_k" => self.denoiser.encoder_k = parse_num(key, value)?,
            "denoiser.time_embed_dim" => self.denoiser.time_embed_dim = parse_num(key, value)?,
            "corr.token_dim" => self.corr.token_dim = parse_num(key, value)?,
            "corr.num_blocks" => self.corr.num_blocks = parse_num(key, value)?,
            "corr.gva_k" => self.corr.gva_k = parse_num(key, value)?,
            "corr.gva_groups" => self.corr.gva_groups = parse_num(key, value)?,
            "corr.encoder_k" => self.corr.encoder_k = parse_num(key, value)?,
            "corr.gamma" => self.corr.gamma = parse_num(key, value)?,
            "corr.match_threshold" => self.corr.match_threshold = parse_num(key, value)?,
            "train.steps" => self.train.steps = parse_num(key, value)?,
            "train.lr" => self.train.lr = parse_num(key, value)?,
            "train.eval_every" => self.train.eval_every = parse_num(key, value)?,
            "gen.scenes" => self.gen.scenes = parse_num(key, value)?,
            "gen.demos" => self.gen.demos = parse_num(key, value)?,
            "eval.episodes" => self.eval.episodes = parse_num(key, value)?,
            "infer.K" => self.infer.k_candidates = parse_num(key, value)?,
            "infer.collision_margin" => self.infer.collision_margin = parse_num(key, value)?,
            "paths.dataset" => self.paths.dataset = value.to_string(),
            "paths.checkpoints" => self.paths.checkpoints = value.to_string(),
            "paths.reports" => self.paths.reports = value.to_string(),
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Load and apply a JSON object of flat dotted keys on top of `self`.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Format(format!("{}: config must be a JSON object", path.display())))?;
        for (key, val) in obj {
            let s = match val {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.to_string(),
                Value::Bool(b) => b.to_string(),
                other => {
                    return Err(Error::Config(format!("unsupported value {other} for key {key:?}")))
                }
            };
            self.set(key, &s)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.label.validate()?;
        self.denoiser.validate()?;
        self.corr.validate()?;
        crate::afford::make_schedule(self.schedule.steps, self.schedule.beta_start, self.schedule.beta_end)?;
        if self.train.steps == 0 || self.train.eval_every == 0 {
            return Err(Error::Config("train.steps and train.eval_every must be positive".into()));
        }
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return Err(Error::Config("train.lr must be positive and finite".into()));
        }
        if self.gen.scenes == 0 || self.gen.demos == 0 || self.eval.episodes == 0 {
            return Err(Error::Config("gen.scenes, gen.demos, eval.episodes must be positive".into()));
        }
        if self.infer.k_candidates == 0 {
            return Err(Error::Config("infer.K must be positive".into()));
        }
        if !(self.infer.collision_margin >= 0.0) {
            return Err(Error::Config("infer.collision_margin must be >= 0".into()));
        }
        if self.paths.dataset.is_empty() || self.paths.checkpoints.is_empty() || self.paths.reports.is_empty() {
            return Err(Error::Config("paths must be nonempty".into()));
        }
        Ok(())
    }

    /// The effective configuration as a flat dotted-key JSON object, echoed
    /// into every report for provenance.
    pub fn to_flat_json(&self) -> Value {
        let mut m = Map::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_string(), v);
        };
        put("task", Value::String(self.task.to_string()));
        put("seed", self.seed.into());
        put("label.eps_place", json_f64(self.label.eps_place));
        put("label.eps_corr", json_f64(self.label.eps_corr));
        put("label.crop_scale_min", json_f64(self.label.crop_scale_min));
        put("label.crop_scale_max", json_f64(self.label.crop_scale_max));
        put("schedule.T", self.schedule.steps.into());
        put("schedule.beta_start", json_f64(self.schedule.beta_start));
        put("schedule.beta_end", json_f64(self.schedule.beta_end));
        put("denoiser.token_dim", self.denoiser.token_dim.into());
        put("denoiser.num_layers", self.denoiser.num_layers.into());
        put("denoiser.num_heads", self.denoiser.num_heads.into());
        put("denoiser.fourier_freqs", self.denoiser.fourier_freqs.into());
        put("denoiser.encoder_k", self.denoiser.encoder_k.into());
        put("denoiser.time_embed_dim", self.denoiser.time_embed_dim.into());
        put("corr.token_dim", self.corr.token_dim.into());
        put("corr.num_blocks", self.corr.num_blocks.into());
        put("corr.gva_k", self.corr.gva_k.into());
        put("corr.gva_groups", self.corr.gva_groups.into());
        put("corr.encoder_k", self.corr.encoder_k.into());
        put("corr.gamma", json_f64(self.corr.gamma));
        put("corr.match_threshold", json_f64(self.corr.match_threshold));
        put("train.steps", self.train.steps.into());
        put("train.lr", json_f64(self.train.lr));
        put("train.eval_every", self.train.eval_every.into());
        put("gen.scenes", self.gen.scenes.into());
        put("gen.demos", self.gen.demos.into());
        put("eval.episodes", self.eval.episodes.into());
        put("infer.K", self.infer.k_candidates.into());
        put("infer.collision_margin", json_f64(self.infer.collision_margin));
        put("paths.dataset", Value::String(self.paths.dataset.clone()));
        put("paths.checkpoints", Value::String(self.paths.checkpoints.clone()));
        put("paths.reports", Value::String(self.paths.reports.clone()));
        Value::Object(m)
    }
}

fn json_f64(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}
