use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use image::imageops::{self, FilterType};
use image::RgbImage;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{reborrow, Activation, Classifier, ClassifierHead, HeadConfig};
use crate::nn::{Graph, Matrix, ParamSet, Var};
use crate::{Error, Result};

/// Side length images are resized to before the backbone.
pub const IMAGE_SIDE: u32 = 224;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    Vgg16,
    Vgg19,
    Resnet50,
    Vit,
}

impl BackboneKind {
    pub const ALL: [BackboneKind; 4] = [Self::Vgg16, Self::Vgg19, Self::Resnet50, Self::Vit];

    pub fn feature_dim(self) -> usize {
        match self {
            Self::Vgg16 | Self::Vgg19 => 4096,
            Self::Resnet50 => 2048,
            Self::Vit => 768,
        }
    }

    pub fn head_activation(self) -> Activation {
        match self {
            Self::Vit => Activation::Gelu,
            _ => Activation::Relu,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Vgg16 => "vgg16",
            Self::Vgg19 => "vgg19",
            Self::Resnet50 => "resnet50",
            Self::Vit => "vit",
        }
    }
}

impl std::str::FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "vgg16" => Ok(Self::Vgg16),
            "vgg19" => Ok(Self::Vgg19),
            "resnet50" => Ok(Self::Resnet50),
            "vit" => Ok(Self::Vit),
            other => Err(Error::InvalidArgument(format!("unknown image backbone {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Augmentation {
    Identity,
    FlipLeftRight,
    FlipTopBottom,
    Rotate90,
    Rotate180,
    Rotate270,
}

impl Augmentation {
    pub const ALL: [Augmentation; 6] = [
        Self::Identity,
        Self::FlipLeftRight,
        Self::FlipTopBottom,
        Self::Rotate90,
        Self::Rotate180,
        Self::Rotate270,
    ];

    pub fn sample(rng: &mut dyn RngCore) -> Self {
        Self::ALL[rng.random_range(0..Self::ALL.len())]
    }
}

pub fn apply_augmentation(img: &RgbImage, aug: Augmentation) -> RgbImage {
    match aug {
        Augmentation::Identity => img.clone(),
        Augmentation::FlipLeftRight => imageops::flip_horizontal(img),
        Augmentation::FlipTopBottom => imageops::flip_vertical(img),
        Augmentation::Rotate90 => imageops::rotate90(img),
        Augmentation::Rotate180 => imageops::rotate180(img),
        Augmentation::Rotate270 => imageops::rotate270(img),
    }
}

/// One augmentation drawn uniformly with `seed`, applied to a 224×224 image.
pub fn image_augment(img: &RgbImage, seed: u64) -> Result<RgbImage> {
    check_side(img)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(apply_augmentation(img, Augmentation::sample(&mut rng)))
}

fn check_side(img: &RgbImage) -> Result<()> {
    if img.dimensions() != (IMAGE_SIDE, IMAGE_SIDE) {
        return Err(Error::Image(format!(
            "expected {IMAGE_SIDE}x{IMAGE_SIDE} image, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

pub fn resize_for_backbone(img: &RgbImage) -> RgbImage {
    if img.dimensions() == (IMAGE_SIDE, IMAGE_SIDE) {
        img.clone()
    } else {
        imageops::resize(img, IMAGE_SIDE, IMAGE_SIDE, FilterType::Triangle)
    }
}

/// A frozen feature extractor.
pub trait Backbone: Send + Sync {
    fn kind(&self) -> BackboneKind;
    fn feature_dim(&self) -> usize;
    fn features(&self, sample_id: &str, img: &RgbImage) -> Result<Vec<f64>>;
    /// Whether `features` looks at the pixels (and so sees augmentation).
    fn uses_pixels(&self) -> bool {
        true
    }
}

/// 16×16 average-pooled RGB (768 values) followed by a fixed random
/// projection and ReLU. Deterministic in its seed; never trained.
#[derive(Clone, Debug)]
pub struct ProjectionBackbone {
    kind: BackboneKind,
    projection: Matrix,
}

const POOL_GRID: u32 = 16;

impl ProjectionBackbone {
    pub fn new(kind: BackboneKind, seed: u64) -> Self {
        let inputs = (POOL_GRID * POOL_GRID * 3) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = (3.0 / inputs as f64).sqrt();
        let projection = Matrix::from_shape_fn((inputs, kind.feature_dim()), |_| rng.random_range(-limit..limit));
        ProjectionBackbone { kind, projection }
    }

    pub fn projection(&self) -> &Matrix {
        &self.projection
    }
}

impl Backbone for ProjectionBackbone {
    fn kind(&self) -> BackboneKind {
        self.kind
    }

    fn feature_dim(&self) -> usize {
        self.projection.ncols()
    }

    fn features(&self, _sample_id: &str, img: &RgbImage) -> Result<Vec<f64>> {
        check_side(img)?;
        let cell = IMAGE_SIDE / POOL_GRID;
        let mut pooled = Matrix::zeros((1, self.projection.nrows()));
        for (x, y, px) in img.enumerate_pixels() {
            let cell_idx = ((y / cell) * POOL_GRID + x / cell) as usize;
            for ch in 0..3 {
                pooled[[0, cell_idx * 3 + ch]] += px.0[ch] as f64 / 255.0;
            }
        }
        let n = (cell * cell) as f64;
        pooled.mapv_inplace(|v| v / n - 0.5);
        Ok(pooled.dot(&self.projection).row(0).iter().map(|&v| v.max(0.0)).collect())
    }
}

/// Features exported ahead of time, one JSON object per line:
/// `{"sample_id": "...", "features": [...]}`.
#[derive(Clone, Debug)]
pub struct FeatureTableBackbone {
    kind: BackboneKind,
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
struct FeatureRow {
    sample_id: String,
    features: Vec<f64>,
}

impl FeatureTableBackbone {
    pub fn new(kind: BackboneKind, table: HashMap<String, Vec<f64>>) -> Result<Self> {
        let dim = table.values().next().map_or(kind.feature_dim(), Vec::len);
        if let Some((id, _)) = table.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::Shape(format!("feature row for {id} is not {dim}-dimensional")));
        }
        Ok(FeatureTableBackbone { kind, dim, table })
    }

    pub fn load(kind: BackboneKind, path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table = HashMap::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: FeatureRow = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
                row: i + 1,
                message: e.to_string(),
            })?;
            table.insert(row.sample_id, row.features);
        }
        Self::new(kind, table)
    }
}

impl Backbone for FeatureTableBackbone {
    fn kind(&self) -> BackboneKind {
        self.kind
    }

    fn feature_dim(&self) -> usize {
        self.dim
    }

    fn features(&self, sample_id: &str, _img: &RgbImage) -> Result<Vec<f64>> {
        self.table
            .get(sample_id)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("no exported features for sample {sample_id}")))
    }

    fn uses_pixels(&self) -> bool {
        false
    }
}

/// An image ready for the backbone.
#[derive(Clone, Debug)]
pub struct ImageExample {
    pub sample_id: String,
    pub image: RgbImage,
}

impl ImageExample {
    pub fn new(sample_id: impl Into<String>, image: &RgbImage) -> Self {
        ImageExample {
            sample_id: sample_id.into(),
            image: resize_for_backbone(image),
        }
    }
}

/// Frozen backbone plus a trainable classification head. Training draws a
/// random augmentation per image.
pub struct ImageClassifier {
    backbone: Box<dyn Backbone>,
    params: ParamSet,
    head: ClassifierHead,
    augment: bool,
}

impl std::fmt::Debug for ImageClassifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageClassifier")
            .field("backbone", &self.backbone.kind())
            .field("head", &self.head)
            .finish()
    }
}

impl ImageClassifier {
    pub fn new(backbone: Box<dyn Backbone>, head: HeadConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let head = ClassifierHead::register(&mut params, "head", backbone.feature_dim(), head, &mut rng)?;
        Ok(ImageClassifier {
            backbone,
            params,
            head,
            augment: true,
        })
    }

    pub fn set_augment(&mut self, on: bool) {
        self.augment = on;
    }

    pub fn backbone(&self) -> &dyn Backbone {
        self.backbone.as_ref()
    }

    pub fn head(&self) -> &ClassifierHead {
        &self.head
    }

    fn feature_matrix(&self, batch: &[&ImageExample], mut rng: Option<&mut dyn RngCore>) -> Result<Matrix> {
        let d = self.backbone.feature_dim();
        let mut x = Matrix::zeros((batch.len(), d));
        for (r, ex) in batch.iter().enumerate() {
            let f = match reborrow(&mut rng) {
                Some(rng) if self.augment && self.backbone.uses_pixels() => {
                    let img = apply_augmentation(&ex.image, Augmentation::sample(rng));
                    self.backbone.features(&ex.sample_id, &img)?
                }
                _ => self.backbone.features(&ex.sample_id, &ex.image)?,
            };
            if f.len() != d {
                return Err(Error::Shape(format!("backbone returned {} features, expected {d}", f.len())));
            }
            x.row_mut(r).assign(&ndarray::ArrayView1::from(&f));
        }
        Ok(x)
    }
}

impl Classifier for ImageClassifier {
    type Input = ImageExample;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn num_classes(&self) -> usize {
        self.head.config().num_classes
    }

    fn logits<'a>(
        &'a self,
        g: &mut Graph<'a>,
        batch: &[&ImageExample],
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        let x = self.feature_matrix(batch, reborrow(&mut rng))?;
        let x = g.input(x);
        self.head.forward(g, x, rng)
    }
}

/// Class probabilities for a batch of images, without augmentation or
/// dropout.
pub fn image_forward(model: &ImageClassifier, batch: &[ImageExample]) -> Result<Matrix> {
    let refs: Vec<&ImageExample> = batch.iter().collect();
    let mut g = Graph::new(model.params());
    let z = model.logits(&mut g, &refs, None)?;
    let p = g.softmax_rows(z);
    Ok(g.value(p).clone())
}
