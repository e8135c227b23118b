//! Flat `key = value` run configuration, layered defaults ← file ← overrides.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::BlobSpec;
use crate::error::{Error, Result};
use crate::models::MlpSpec;
use crate::trainer::TrainConfig;

/// Every recognized key, in the order they are written.
pub const KEYS: [&str; 31] = [
    "seed",
    "epochs",
    "batch_size",
    "learning_rate",
    "momentum",
    "weight_decay",
    "lr_decay_epochs",
    "lr_decay_factor",
    "temperature",
    "entropy_temperature",
    "diagnostic_temperature",
    "ce_weight",
    "kd_weight",
    "dkd_alpha",
    "dkd_beta",
    "weighting_mode",
    "loss_kind",
    "normalize_weights",
    "class_count",
    "dims",
    "samples_per_class",
    "spread",
    "center_scale",
    "teacher_hidden",
    "student_hidden",
    "study",
    "seeds",
    "data",
    "teacher",
    "out",
    "threads",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Blob generator settings; its seed is always `train.seed`.
    pub blobs: BlobSpec,
    pub teacher_hidden: Vec<usize>,
    pub student_hidden: Vec<usize>,
    pub study: String,
    /// Number of consecutive seeds, starting at `train.seed`, in a grid.
    pub seeds: usize,
    pub data: Option<PathBuf>,
    pub teacher: Option<PathBuf>,
    pub out: PathBuf,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let blobs = BlobSpec::default();
        RunConfig {
            train: TrainConfig::new(blobs.class_count),
            blobs,
            teacher_hidden: vec![256, 256],
            student_hidden: vec![32],
            study: "weighting".to_string(),
            seeds: 5,
            data: None,
            teacher: None,
            out: PathBuf::from("runs"),
            threads: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("invalid value {value:?} for {key}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn path_or_empty(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let t = &mut self.train;
        let d = &mut t.distill;
        match key {
            "seed" => {
                t.seed = parse(key, value)?;
                self.blobs.seed = t.seed;
            }
            "epochs" => t.epochs = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "momentum" => t.momentum = parse(key, value)?,
            "weight_decay" => t.weight_decay = parse(key, value)?,
            "lr_decay_epochs" => t.lr_decay_epochs = parse_list(key, value)?,
            "lr_decay_factor" => t.lr_decay_factor = parse(key, value)?,
            "temperature" => d.distill_temperature = parse(key, value)?,
            "entropy_temperature" => d.entropy_temperature = parse(key, value)?,
            "diagnostic_temperature" => d.diagnostic_temperature = parse(key, value)?,
            "ce_weight" => d.ce_weight = parse(key, value)?,
            "kd_weight" => d.kd_weight = parse(key, value)?,
            "dkd_alpha" => d.dkd_alpha = parse(key, value)?,
            "dkd_beta" => d.dkd_beta = parse(key, value)?,
            "weighting_mode" => d.weighting_mode = value.parse()?,
            "loss_kind" => t.loss_kind = value.parse()?,
            "normalize_weights" => d.normalize_weights = parse(key, value)?,
            "class_count" => {
                self.blobs.class_count = parse(key, value)?;
                d.class_count = self.blobs.class_count;
            }
            "dims" => self.blobs.dims = parse(key, value)?,
            "samples_per_class" => self.blobs.samples_per_class = parse(key, value)?,
            "spread" => self.blobs.spread = parse(key, value)?,
            "center_scale" => self.blobs.center_scale = parse(key, value)?,
            "teacher_hidden" => self.teacher_hidden = parse_list(key, value)?,
            "student_hidden" => self.student_hidden = parse_list(key, value)?,
            "study" => self.study = value.to_string(),
            "seeds" => self.seeds = parse(key, value)?,
            "data" => self.data = optional_path(value),
            "teacher" => self.teacher = optional_path(value),
            "out" => self.out = PathBuf::from(value),
            "threads" => self.threads = parse(key, value)?,
            _ => return Err(Error::config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        let t = &self.train;
        let d = &t.distill;
        Ok(match key {
            "seed" => t.seed.to_string(),
            "epochs" => t.epochs.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "learning_rate" => format!("{:?}", t.learning_rate),
            "momentum" => format!("{:?}", t.momentum),
            "weight_decay" => format!("{:?}", t.weight_decay),
            "lr_decay_epochs" => join(&t.lr_decay_epochs),
            "lr_decay_factor" => format!("{:?}", t.lr_decay_factor),
            "temperature" => format!("{:?}", d.distill_temperature),
            "entropy_temperature" => format!("{:?}", d.entropy_temperature),
            "diagnostic_temperature" => format!("{:?}", d.diagnostic_temperature),
            "ce_weight" => format!("{:?}", d.ce_weight),
            "kd_weight" => format!("{:?}", d.kd_weight),
            "dkd_alpha" => format!("{:?}", d.dkd_alpha),
            "dkd_beta" => format!("{:?}", d.dkd_beta),
            "weighting_mode" => d.weighting_mode.to_string(),
            "loss_kind" => t.loss_kind.to_string(),
            "normalize_weights" => d.normalize_weights.to_string(),
            "class_count" => self.blobs.class_count.to_string(),
            "dims" => self.blobs.dims.to_string(),
            "samples_per_class" => self.blobs.samples_per_class.to_string(),
            "spread" => format!("{:?}", self.blobs.spread),
            "center_scale" => format!("{:?}", self.blobs.center_scale),
            "teacher_hidden" => join(&self.teacher_hidden),
            "student_hidden" => join(&self.student_hidden),
            "study" => self.study.clone(),
            "seeds" => self.seeds.to_string(),
            "data" => path_or_empty(&self.data),
            "teacher" => path_or_empty(&self.teacher),
            "out" => self.out.display().to_string(),
            "threads" => self.threads.to_string(),
            _ => return Err(Error::config(format!("unknown configuration key {key:?}"))),
        })
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("{source}:{}: expected `key = value`", i + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::config(format!("{source}:{}: {}", i + 1, strip_prefix(&e))))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = self.get(key).expect("every listed key is readable");
            writeln!(out, "{key} = {value}").expect("write to string");
        }
        out
    }

    pub fn blob_spec(&self) -> BlobSpec {
        BlobSpec {
            seed: self.train.seed,
            ..self.blobs.clone()
        }
    }

    pub fn teacher_spec(&self, input_dim: usize, class_count: usize) -> Result<MlpSpec> {
        MlpSpec::new(input_dim, self.teacher_hidden.clone(), class_count)
    }

    pub fn student_spec(&self, input_dim: usize, class_count: usize) -> Result<MlpSpec> {
        MlpSpec::new(input_dim, self.student_hidden.clone(), class_count)
    }

    /// `seeds` consecutive seeds starting at `seed`.
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.train.seed + i).collect()
    }

    /// Adopts the class count and feature width of loaded data.
    pub fn adopt_data_shape(&mut self, class_count: usize, dims: usize) {
        self.blobs.class_count = class_count;
        self.blobs.dims = dims;
        self.train.distill.class_count = class_count;
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.blob_spec().validate()?;
        if self.threads == 0 {
            return Err(Error::config("threads must be at least 1"));
        }
        Ok(())
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}
