use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::record::{persist, ResultRecord, SCHEMA_VERSION};
use super::{ExperimentConfig, ModelId, SeedSet};
use crate::corpus::{load_manifest, split_train_test, Dataset, LabelKind, ManifestFormat, Sample, Sentiment, SplitOptions};
use crate::detect::{load_image, single_object_subset, DetectionIndex};
use crate::eval::{compare_experiments, confusion, metrics, Pairing};
use crate::models::{
    load_params, load_params_matching, predict, save_params, train, AttentionScaling, BiLstmClassifier, BiLstmConfig,
    Classifier, EncoderClassifier, EncoderConfig, FeatureTableBackbone, HeadConfig, History, ImageClassifier,
    ImageExample, ProjectionBackbone, TensorEntry, TrainConfig, NUM_CLASSES,
};
use crate::tems::{
    build_tems, clean_text, encode_pad, load_embeddings, tokenize, EncodedSeq, TokenSeq, TokenizeScheme, Vocabulary,
    WordPiece,
};
use crate::{Error, Result};

/// Which part of the split to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

/// Train and test samples of one experiment, after label checks and any
/// subset filtering.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    pub detections: Option<DetectionIndex>,
}

impl PreparedData {
    pub fn part(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

fn label_requirement(kind: LabelKind) -> &'static str {
    match kind {
        LabelKind::Image => "image_label (experiment 1 trains on image labels)",
        LabelKind::Text => "text_label (experiment 2 trains on text labels)",
        LabelKind::Joint => "joint_label (experiments 3 and 4 train on joint labels)",
    }
}

/// Loads the manifest, checks the experiment's label column, splits once
/// per (dataset, seed) and applies the experiment's subset.
///
/// The split is drawn over the whole manifest before any filtering, so
/// every experiment on the same dataset and seed sees the same partition.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let seeds = SeedSet::from_master(cfg.seed);
    let all = load_manifest(&cfg.manifest, ManifestFormat::from_path(&cfg.manifest), cfg.dataset.as_str())?;
    let kind = cfg.label_kind();
    if let Some(s) = all.samples().iter().find(|s| s.label(kind).is_none()) {
        return Err(Error::MissingLabel {
            id: s.id.clone(),
            what: label_requirement(kind),
        });
    }
    let (mut train_part, mut test_part) = split_train_test(&all, SplitOptions::new(cfg.split_ratio, seeds.split))?;
    let detections = match (&cfg.detections, cfg.experiment >= 3) {
        (Some(path), true) => Some(DetectionIndex::load(path, &cfg.preferred_thresholds())?),
        _ => None,
    };
    if cfg.experiment == 4 {
        let idx = detections.as_ref().expect("validated");
        train_part = single_object_subset(&train_part, idx)?;
        test_part = single_object_subset(&test_part, idx)?;
        if train_part.is_empty() || test_part.is_empty() {
            return Err(Error::Degenerate(format!(
                "empty subset: {} train and {} test samples have exactly one {} object",
                train_part.len(),
                test_part.len(),
                idx.primary_source()
            )));
        }
    }
    if train_part.is_empty() || test_part.is_empty() {
        return Err(Error::Degenerate(format!(
            "split of {} samples left {} train / {} test",
            all.len(),
            train_part.len(),
            test_part.len()
        )));
    }
    Ok(PreparedData {
        train: train_part,
        test: test_part,
        detections,
    })
}

/// Token sequence a text model sees for one sample: the cleaned text for
/// experiment 2, the TEMS sequence for experiments 3 and 4.
fn text_tokens(cfg: &ExperimentConfig, s: &Sample, wp: Option<&WordPiece>, idx: Option<&DetectionIndex>) -> Result<TokenSeq> {
    let policy = cfg.length_policy()?;
    let scheme = match wp {
        Some(w) => TokenizeScheme::WordPiece(w),
        None => TokenizeScheme::Whitespace,
    };
    let toks = tokenize(&clean_text(&s.text), &scheme);
    if cfg.experiment == 2 {
        return Ok(toks.truncated(policy.text_max));
    }
    let idx = idx.ok_or_else(|| Error::Config("TEMS needs a detection cache".into()))?;
    let names = if cfg.experiment == 4 {
        idx.primary_names(&s.id)?
    } else {
        idx.merged_names(&s.id)?
    };
    let tems = build_tems(&toks, &names, &policy);
    match wp {
        None => Ok(tems.combined),
        Some(w) => {
            let spaced = tems.object_part.join(" ").replace('_', " ");
            let names = tokenize(&spaced, &TokenizeScheme::WordPiece(w));
            Ok(tems.text_part.concat(&names))
        }
    }
}

fn max_len(cfg: &ExperimentConfig) -> Result<usize> {
    let p = cfg.length_policy()?;
    Ok(if cfg.experiment == 2 { p.text_max } else { p.tems_max() })
}

fn wordpiece(cfg: &ExperimentConfig) -> Result<Option<WordPiece>> {
    cfg.wordpiece_vocab.as_deref().map(WordPiece::from_file).transpose()
}

fn token_seqs(cfg: &ExperimentConfig, d: &Dataset, idx: Option<&DetectionIndex>) -> Result<Vec<TokenSeq>> {
    let wp = wordpiece(cfg)?;
    d.samples().iter().map(|s| text_tokens(cfg, s, wp.as_ref(), idx)).collect()
}

fn image_root(cfg: &ExperimentConfig) -> PathBuf {
    cfg.image_root
        .clone()
        .or_else(|| cfg.manifest.parent().map(Path::to_path_buf))
        .unwrap_or_default()
}

fn image_examples(cfg: &ExperimentConfig, d: &Dataset, needs_pixels: bool) -> Result<Vec<ImageExample>> {
    let root = image_root(cfg);
    d.samples()
        .iter()
        .map(|s| {
            if !needs_pixels {
                return Ok(ImageExample::new(s.id.clone(), &RgbImage::new(1, 1)));
            }
            let rel = s
                .image_ref
                .as_deref()
                .ok_or_else(|| Error::Image(format!("sample {} has no image_path", s.id)))?;
            Ok(ImageExample::new(s.id.clone(), &load_image(&root.join(rel))?))
        })
        .collect()
}

fn labels(d: &Dataset, kind: LabelKind) -> Result<Vec<usize>> {
    d.samples()
        .iter()
        .map(|s| {
            s.label(kind).map(Sentiment::index).ok_or_else(|| Error::MissingLabel {
                id: s.id.clone(),
                what: label_requirement(kind),
            })
        })
        .collect()
}

/// One of the supported classifiers.
#[derive(Debug)]
pub enum AnyModel {
    Bilstm(BiLstmClassifier),
    Encoder(EncoderClassifier),
    Image(ImageClassifier),
}

impl AnyModel {
    pub fn params(&self) -> &crate::nn::ParamSet {
        match self {
            AnyModel::Bilstm(m) => m.params(),
            AnyModel::Encoder(m) => m.params(),
            AnyModel::Image(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> &mut crate::nn::ParamSet {
        match self {
            AnyModel::Bilstm(m) => m.params_mut(),
            AnyModel::Encoder(m) => m.params_mut(),
            AnyModel::Image(m) => m.params_mut(),
        }
    }
}

/// Model construction with the configured geometry and the init seed.
pub fn build_model(cfg: &ExperimentConfig, vocab: Option<&Vocabulary>) -> Result<AnyModel> {
    let seeds = SeedSet::from_master(cfg.seed);
    let vocab_size = || {
        vocab
            .map(Vocabulary::len)
            .ok_or_else(|| Error::Config("text model without a vocabulary".into()))
    };
    match cfg.model {
        ModelId::Bilstm => {
            let mc = BiLstmConfig {
                vocab_size: vocab_size()?,
                embed_dim: cfg.embed_dim,
                hidden_units: cfg.hidden_units,
                num_classes: NUM_CLASSES,
                dropout: cfg.dropout,
                train_embeddings: true,
            };
            let mut m = BiLstmClassifier::new(mc, seeds.init)?;
            if let (Some(path), Some(v)) = (&cfg.embeddings, vocab) {
                m.set_embeddings(load_embeddings(v, path, Some(cfg.embed_dim), seeds.init)?)?;
            }
            Ok(AnyModel::Bilstm(m))
        }
        ModelId::Encoder => {
            let ec = EncoderConfig {
                vocab_size: vocab_size()?,
                max_positions: cfg.length_policy()?.tems_max().max(max_len(cfg)?),
                model_dim: cfg.encoder_dim,
                heads: cfg.encoder_heads,
                ffn_dim: cfg.encoder_ffn,
                layers: cfg.encoder_layers,
                scaling: AttentionScaling::Scaled,
                layer_norm_eps: 1e-12,
            };
            let head = HeadConfig {
                hidden: cfg.head_hidden,
                activation: crate::models::Activation::Relu,
                dropout: cfg.dropout,
                num_classes: NUM_CLASSES,
            };
            let mut m = EncoderClassifier::new(ec, head, seeds.init)?;
            if let Some(dir) = &cfg.encoder_weights {
                let entries = read_tensor_list(&dir.join("tensors.json"))?;
                let n = load_params_matching(m.params_mut(), dir, &entries)?;
                log::info!("loaded {n} exported encoder tensors from {}", dir.display());
            }
            Ok(AnyModel::Encoder(m))
        }
        id => {
            let kind = id.backbone().expect("image model");
            let backbone: Box<dyn crate::models::Backbone> = match &cfg.image_features {
                Some(p) => Box::new(FeatureTableBackbone::load(kind, p)?),
                None => Box::new(ProjectionBackbone::new(kind, seeds.init)),
            };
            let head = HeadConfig {
                hidden: cfg.head_hidden,
                activation: kind.head_activation(),
                dropout: cfg.dropout,
                num_classes: NUM_CLASSES,
            };
            Ok(AnyModel::Image(ImageClassifier::new(backbone, head, seeds.init)?))
        }
    }
}

fn read_tensor_list(path: &Path) -> Result<Vec<TensorEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// A trained model together with what is needed to rebuild its inputs.
#[derive(Debug)]
pub struct TrainedModel {
    pub config: ExperimentConfig,
    pub model: AnyModel,
    pub vocab: Option<Vocabulary>,
    pub history: History,
    pub train_size: usize,
}

fn encode_all(seqs: &[TokenSeq], len: usize, vocab: &Vocabulary) -> Vec<EncodedSeq> {
    seqs.iter().map(|s| encode_pad(s, len, vocab)).collect()
}

/// Trains the configured model on the prepared training split.
pub fn train_model(cfg: &ExperimentConfig, data: &PreparedData) -> Result<TrainedModel> {
    let seeds = SeedSet::from_master(cfg.seed);
    let tc = TrainConfig {
        learning_rate: cfg.learning_rate(),
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        seed: seeds.shuffle,
        noise_seed: Some(seeds.augment),
    };
    let y = labels(&data.train, cfg.label_kind())?;
    let (mut model, vocab) = if cfg.model.is_text() {
        let seqs = token_seqs(cfg, &data.train, data.detections.as_ref())?;
        let vocab = match &cfg.wordpiece_vocab {
            Some(p) => Vocabulary::from_file(p)?,
            None => Vocabulary::build(&seqs, cfg.min_count),
        };
        let model = build_model(cfg, Some(&vocab))?;
        let x = encode_all(&seqs, max_len(cfg)?, &vocab);
        let mut model = model;
        let history = match &mut model {
            AnyModel::Bilstm(m) => train(m, &x, &y, &tc)?,
            AnyModel::Encoder(m) => train(m, &x, &y, &tc)?,
            AnyModel::Image(_) => unreachable!("text model"),
        };
        return Ok(TrainedModel {
            config: cfg.clone(),
            model,
            vocab: Some(vocab),
            history,
            train_size: y.len(),
        });
    } else {
        (build_model(cfg, None)?, None::<Vocabulary>)
    };
    let AnyModel::Image(m) = &mut model else { unreachable!("image model") };
    let x = image_examples(cfg, &data.train, m.backbone().uses_pixels())?;
    let history = train(m, &x, &y, &tc)?;
    Ok(TrainedModel {
        config: cfg.clone(),
        model,
        vocab,
        history,
        train_size: y.len(),
    })
}

/// Predicted class per sample of `d`.
pub fn predict_dataset(tm: &TrainedModel, d: &Dataset, idx: Option<&DetectionIndex>) -> Result<Vec<Sentiment>> {
    let cfg = &tm.config;
    let batch = cfg.batch_size.max(1);
    let preds = match &tm.model {
        AnyModel::Bilstm(_) | AnyModel::Encoder(_) => {
            let vocab = tm.vocab.as_ref().ok_or_else(|| Error::Config("text model without vocabulary".into()))?;
            let x = encode_all(&token_seqs(cfg, d, idx)?, max_len(cfg)?, vocab);
            match &tm.model {
                AnyModel::Bilstm(m) => predict(m, &x, batch)?,
                AnyModel::Encoder(m) => predict(m, &x, batch)?,
                AnyModel::Image(_) => unreachable!(),
            }
        }
        AnyModel::Image(m) => predict(m, &image_examples(cfg, d, m.backbone().uses_pixels())?, batch)?,
    };
    Ok(preds
        .into_iter()
        .map(|i| Sentiment::from_index(i).expect("three classes"))
        .collect())
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Evaluates a trained model on one part of the prepared data.
pub fn evaluate_model(tm: &TrainedModel, data: &PreparedData, split: Split, wall_clock_secs: f64) -> Result<ResultRecord> {
    let cfg = &tm.config;
    let d = data.part(split);
    let preds = predict_dataset(tm, d, data.detections.as_ref())?;
    let kind = cfg.label_kind();
    let golds: Vec<Sentiment> = labels(d, kind)?
        .into_iter()
        .map(|i| Sentiment::from_index(i).expect("valid"))
        .collect();
    let cm = confusion(&preds, &golds)?;
    let metric_set = metrics(&cm, cfg.averaging)?;

    let mut artifacts = BTreeMap::new();
    artifacts.insert("manifest".to_string(), sha256_file(&cfg.manifest)?);
    if let (Some(p), true) = (&cfg.detections, cfg.experiment >= 3) {
        artifacts.insert("detections".to_string(), sha256_file(p)?);
    }
    if let Some(v) = &tm.vocab {
        artifacts.insert("vocab".to_string(), v.id().to_string());
    }
    let mut h = Sha256::new();
    for (_, name, m) in tm.model.params().iter() {
        h.update(name.as_bytes());
        for v in m.iter() {
            h.update(v.to_le_bytes());
        }
    }
    artifacts.insert("parameters".to_string(), hex::encode(h.finalize()));

    let mut record = ResultRecord {
        schema_version: SCHEMA_VERSION,
        experiment: cfg.experiment,
        dataset: cfg.dataset.as_str().to_string(),
        model: cfg.model.as_str().to_string(),
        metrics: metric_set,
        wilcoxon: Vec::new(),
        confusion: cm,
        config: cfg.clone(),
        sample_ids: d.ids().into_iter().map(str::to_string).collect(),
        predictions: preds,
        golds,
        history: tm.history.clone(),
        train_size: tm.train_size,
        wall_clock_secs,
        artifacts,
    };
    record.wilcoxon = compare_experiments(std::slice::from_ref(&record), &Pairing::Auto)?.gold_tests;
    Ok(record)
}

/// Checkpoint directory layout: `manifest.json`, one `<tensor>.bin` per
/// parameter and, for text models, `vocab.txt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub schema_version: u32,
    pub kind: ModelId,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub tensors: Vec<TensorEntry>,
    pub vocab_file: Option<String>,
    pub history: History,
    pub train_size: usize,
}

pub fn save_checkpoint(tm: &TrainedModel, dir: &Path) -> Result<CheckpointManifest> {
    let tensors = save_params(tm.model.params(), dir)?;
    let vocab_file = match &tm.vocab {
        Some(v) => {
            v.save(&dir.join("vocab.txt"))?;
            Some("vocab.txt".to_string())
        }
        None => None,
    };
    let manifest = CheckpointManifest {
        schema_version: SCHEMA_VERSION,
        kind: tm.config.model,
        seed: tm.config.seed,
        config: tm.config.clone(),
        tensors,
        vocab_file,
        history: tm.history.clone(),
        train_size: tm.train_size,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<TrainedModel> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            expected: SCHEMA_VERSION,
            found,
        });
    }
    let manifest: CheckpointManifest = serde_json::from_value(value)?;
    let vocab = manifest
        .vocab_file
        .as_ref()
        .map(|f| Vocabulary::from_file(&dir.join(f)))
        .transpose()?;
    let mut cfg = manifest.config.clone();
    // Weights come from the checkpoint, not from the original sources.
    cfg.encoder_weights = None;
    cfg.embeddings = None;
    let mut model = build_model(&cfg, vocab.as_ref())?;
    load_params(model.params_mut(), dir, &manifest.tensors)?;
    Ok(TrainedModel {
        config: manifest.config,
        model,
        vocab,
        history: manifest.history,
        train_size: manifest.train_size,
    })
}

/// Directory a run writes to: `<output_dir>/<run name>`.
pub fn run_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join(cfg.run_name())
}

/// Prepare, train, evaluate on the test split, and write the checkpoint
/// and `record.json` under [`run_dir`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let start = Instant::now();
    let data = prepare_data(cfg)?;
    log::info!(
        "{}: {} train / {} test samples",
        cfg.run_name(),
        data.train.len(),
        data.test.len()
    );
    let tm = train_model(cfg, &data)?;
    let dir = run_dir(cfg);
    save_checkpoint(&tm, &dir.join("checkpoint"))?;
    let record = evaluate_model(&tm, &data, Split::Test, start.elapsed().as_secs_f64())?;
    persist(&record, &dir.join("record.json"))?;
    Ok(record)
}
