use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::LabelKind;
use crate::eval::Averaging;
use crate::models::BackboneKind;
use crate::tems::LengthPolicy;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Simpson,
    Mvsa,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Simpson => "simpson",
            DatasetKind::Mvsa => "mvsa",
        }
    }

    pub fn length_policy(self) -> LengthPolicy {
        match self {
            DatasetKind::Simpson => LengthPolicy::SIMPSON,
            DatasetKind::Mvsa => LengthPolicy::MVSA,
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "simpson" => Ok(DatasetKind::Simpson),
            "mvsa" | "mvsasingle" => Ok(DatasetKind::Mvsa),
            other => Err(Error::Config(format!("unknown dataset {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    Bilstm,
    Encoder,
    Vgg16,
    Vgg19,
    Resnet50,
    Vit,
}

impl ModelId {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Bilstm => "bilstm",
            ModelId::Encoder => "encoder",
            ModelId::Vgg16 => "vgg16",
            ModelId::Vgg19 => "vgg19",
            ModelId::Resnet50 => "resnet50",
            ModelId::Vit => "vit",
        }
    }

    pub fn is_text(self) -> bool {
        matches!(self, ModelId::Bilstm | ModelId::Encoder)
    }

    pub fn backbone(self) -> Option<BackboneKind> {
        match self {
            ModelId::Vgg16 => Some(BackboneKind::Vgg16),
            ModelId::Vgg19 => Some(BackboneKind::Vgg19),
            ModelId::Resnet50 => Some(BackboneKind::Resnet50),
            ModelId::Vit => Some(BackboneKind::Vit),
            _ => None,
        }
    }

    pub fn default_learning_rate(self) -> f64 {
        match self {
            ModelId::Bilstm => 1e-2,
            ModelId::Encoder => 6e-6,
            _ => 8e-4,
        }
    }
}

impl std::str::FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "bilstm" => Ok(ModelId::Bilstm),
            "encoder" | "bert" => Ok(ModelId::Encoder),
            "vgg16" => Ok(ModelId::Vgg16),
            "vgg19" => Ok(ModelId::Vgg19),
            "resnet50" => Ok(ModelId::Resnet50),
            "vit" => Ok(ModelId::Vit),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

/// Everything one experiment run depends on. Serialized as a flat TOML
/// table; every key has a default except `manifest`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: u8,
    pub dataset: DatasetKind,
    pub model: ModelId,
    pub seed: u64,
    pub deterministic: bool,

    pub manifest: PathBuf,
    /// Detection cache (JSONL); required by experiments 3 and 4.
    pub detections: Option<PathBuf>,
    /// Base directory for relative image paths; defaults to the manifest's.
    pub image_root: Option<PathBuf>,
    pub output_dir: PathBuf,

    /// Defaults to the dataset's length policy.
    pub text_max: Option<usize>,
    pub max_objects: Option<usize>,
    pub split_ratio: f64,
    pub min_count: usize,

    /// Defaults to the model's learning rate.
    pub learning_rate: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub averaging: Averaging,

    pub coco_threshold: f64,
    pub vg_threshold: f64,
    pub fixture_threshold: f64,

    /// GloVe-style table for the BiLSTM embedding layer.
    pub embeddings: Option<PathBuf>,
    pub embed_dim: usize,
    pub hidden_units: usize,
    pub head_hidden: usize,

    /// WordPiece vocabulary; when set, text is split into subwords and the
    /// vocabulary is fixed to this file.
    pub wordpiece_vocab: Option<PathBuf>,
    /// Directory of exported encoder tensors (`tensors.json` + blobs).
    pub encoder_weights: Option<PathBuf>,
    pub encoder_dim: usize,
    pub encoder_heads: usize,
    pub encoder_layers: usize,
    pub encoder_ffn: usize,

    /// Exported image features (JSONL keyed by sample id).
    pub image_features: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: 3,
            dataset: DatasetKind::Simpson,
            model: ModelId::Bilstm,
            seed: 42,
            deterministic: true,
            manifest: PathBuf::new(),
            detections: None,
            image_root: None,
            output_dir: PathBuf::from("runs"),
            text_max: None,
            max_objects: None,
            split_ratio: 0.8,
            min_count: 1,
            learning_rate: None,
            batch_size: 32,
            epochs: 10,
            dropout: 0.1,
            averaging: Averaging::Macro,
            coco_threshold: crate::detect::DEFAULT_COCO_THRESHOLD,
            vg_threshold: crate::detect::DEFAULT_VG_THRESHOLD,
            fixture_threshold: crate::detect::DEFAULT_FIXTURE_THRESHOLD,
            embeddings: None,
            embed_dim: 300,
            hidden_units: 32,
            head_hidden: 1024,
            wordpiece_vocab: None,
            encoder_weights: None,
            encoder_dim: 64,
            encoder_heads: 4,
            encoder_layers: 2,
            encoder_ffn: 128,
            image_features: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.manifest);
        fix(&mut self.output_dir);
        for p in [
            &mut self.detections,
            &mut self.image_root,
            &mut self.embeddings,
            &mut self.wordpiece_vocab,
            &mut self.encoder_weights,
            &mut self.image_features,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Sets one key from its textual form, as given on a command line.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut table = toml::Table::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let parsed = value
            .parse::<toml::Value>()
            .ok()
            .or_else(|| toml::from_str::<toml::Table>(&format!("v = {value}")).ok().and_then(|t| t.get("v").cloned()))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        // Paths and enum names are strings even when they look like numbers.
        let parsed = match (table.get(key), parsed) {
            (Some(toml::Value::String(_)), v) if !v.is_str() => toml::Value::String(value.to_string()),
            (_, v) => v,
        };
        table.insert(key.to_string(), parsed);
        let updated: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        *self = updated;
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<'a>(&mut self, overrides: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Threshold to prefer per detection source when the cache holds
    /// several.
    pub fn preferred_thresholds(&self) -> std::collections::BTreeMap<String, f64> {
        [
            (crate::detect::SOURCE_COCO, self.coco_threshold),
            (crate::detect::SOURCE_VG, self.vg_threshold),
            (crate::detect::SOURCE_FIXTURE, self.fixture_threshold),
        ]
        .into_iter()
        .map(|(s, t)| (s.to_string(), t))
        .collect()
    }

    pub fn length_policy(&self) -> Result<LengthPolicy> {
        let d = self.dataset.length_policy();
        LengthPolicy::new(self.text_max.unwrap_or(d.text_max), self.max_objects.unwrap_or(d.max_objects))
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or_else(|| self.model.default_learning_rate())
    }

    /// Label column each experiment trains and tests on.
    pub fn label_kind(&self) -> LabelKind {
        match self.experiment {
            1 => LabelKind::Image,
            2 => LabelKind::Text,
            _ => LabelKind::Joint,
        }
    }

    /// Short identifier, e.g. `exp3-simpson-bilstm-s42`.
    pub fn run_name(&self) -> String {
        format!("exp{}-{}-{}-s{}", self.experiment, self.dataset.as_str(), self.model.as_str(), self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.experiment) {
            return Err(Error::Config(format!("experiment must be 1-4, got {}", self.experiment)));
        }
        if self.experiment == 1 && self.model.is_text() {
            return Err(Error::Config(format!(
                "experiment 1 needs an image model, got {}",
                self.model.as_str()
            )));
        }
        if self.experiment > 1 && !self.model.is_text() {
            return Err(Error::Config(format!(
                "experiment {} needs a text model, got {}",
                self.experiment,
                self.model.as_str()
            )));
        }
        if self.experiment >= 3 && self.detections.is_none() {
            return Err(Error::Config(format!(
                "experiment {} needs a detection cache (key `detections`)",
                self.experiment
            )));
        }
        if self.manifest.as_os_str().is_empty() {
            return Err(Error::Config("no manifest given".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!("split_ratio {} outside (0, 1)", self.split_ratio)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        let lr = self.learning_rate();
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::Config(format!("learning rate {lr}")));
        }
        self.length_policy()?;
        Ok(())
    }
}
