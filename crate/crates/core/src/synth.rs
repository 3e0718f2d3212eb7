//! Synthetic labelled corpora for tests and desk runs.
//!
//! Each sample gets a short caption and a small grid image. The joint label
//! is drawn first; the image and text labels agree with it with probability
//! `agreement`. Captions carry words of the text label's polarity and the
//! image's lit grid cells take the colour of the image label (green,
//! red, blue for positive, negative, neutral), so the fixture detector turns
//! them into object names correlated with the image label.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_manifest, Dataset, ManifestFormat, Sample, Sentiment};
use crate::detect::{detect_dataset, CacheWriter, DetectSummary, FixtureDetector, DEFAULT_FIXTURE_THRESHOLD};
use crate::{Error, Result};

const POSITIVE: [&str; 10] = [
    "good", "great", "happy", "love", "beautiful", "wonderful", "best", "fun", "amazing", "nice",
];
const NEGATIVE: [&str; 10] = [
    "bad", "sad", "hate", "awful", "terrible", "worst", "angry", "ugly", "poor", "horrible",
];
const NEUTRAL: [&str; 10] = [
    "today", "city", "news", "photo", "people", "street", "meeting", "report", "weather", "table",
];
const FILLER: [&str; 12] = [
    "the", "a", "this", "of", "and", "in", "with", "at", "on", "my", "our", "is",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    pub samples: usize,
    pub seed: u64,
    pub image_side: u32,
    pub agreement: f64,
}

impl SynthOptions {
    pub fn new(samples: usize, seed: u64) -> Self {
        SynthOptions {
            samples,
            seed,
            image_side: 64,
            agreement: 0.8,
        }
    }
}

/// Paths of a generated corpus.
#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub dataset: Dataset,
    pub manifest: PathBuf,
    pub image_dir: PathBuf,
}

fn words(label: Sentiment) -> &'static [&'static str] {
    match label {
        Sentiment::Positive => &POSITIVE,
        Sentiment::Negative => &NEGATIVE,
        Sentiment::Neutral => &NEUTRAL,
    }
}

fn pick_label(rng: &mut ChaCha8Rng, anchor: Sentiment, agreement: f64) -> Sentiment {
    if rng.random::<f64>() < agreement {
        anchor
    } else {
        Sentiment::ALL[rng.random_range(0..3)]
    }
}

fn caption(rng: &mut ChaCha8Rng, label: Sentiment) -> String {
    let mut toks: Vec<String> = Vec::new();
    let n = rng.random_range(3..9);
    for i in 0..n {
        let w = if i % 2 == 0 || rng.random::<f64>() < 0.3 {
            words(label).choose(rng).expect("non-empty")
        } else {
            FILLER.choose(rng).expect("non-empty")
        };
        toks.push(w.to_string());
    }
    if rng.random::<f64>() < 0.2 {
        toks.push("#photo".into());
    }
    if rng.random::<f64>() < 0.1 {
        toks.insert(0, "@friend".into());
    }
    let mut s = toks.join(" ");
    if rng.random::<f64>() < 0.3 {
        s = s.to_uppercase();
    }
    s
}

fn grid_image(rng: &mut ChaCha8Rng, label: Sentiment, side: u32) -> RgbImage {
    let dominant = match label {
        Sentiment::Positive => 1,
        Sentiment::Negative => 0,
        Sentiment::Neutral => 2,
    };
    // Lit-cell count, weighted towards exactly one.
    let lit = *[0usize, 1, 1, 1, 2, 2, 3, 4, 5, 6].choose(rng).expect("non-empty");
    let mut cells: Vec<usize> = (0..16).collect();
    for i in 0..16 {
        let j = rng.random_range(i..16);
        cells.swap(i, j);
    }
    let cell = side / 4;
    let mut img = RgbImage::new(side, side);
    let mut paint = |c: usize, bright: f64, rng: &mut ChaCha8Rng| {
        let mut px = [0u8; 3];
        for (ch, v) in px.iter_mut().enumerate() {
            let level = if ch == dominant {
                bright
            } else {
                bright * rng.random_range(0.0..0.4)
            };
            *v = (level * 255.0).round() as u8;
        }
        let (cx, cy) = ((c % 4) as u32 * cell, (c / 4) as u32 * cell);
        for y in cy..cy + cell {
            for x in cx..cx + cell {
                img.put_pixel(x, y, Rgb(px));
            }
        }
    };
    for &c in &cells[..lit] {
        let b = rng.random_range(0.6..1.0);
        paint(c, b, rng);
    }
    // Dim cells stay below the detection threshold.
    for &c in &cells[lit..lit + rng.random_range(0..3)] {
        let b = rng.random_range(0.1..0.4);
        paint(c, b, rng);
    }
    img
}

/// Writes `images/*.png` and `manifest.csv` under `dir`.
pub fn write_synthetic_corpus(dir: &Path, opts: &SynthOptions) -> Result<SynthCorpus> {
    if opts.samples == 0 || opts.image_side < 4 || opts.image_side % 4 != 0 {
        return Err(Error::InvalidArgument(format!("bad synthetic corpus options {opts:?}")));
    }
    let image_dir = dir.join("images");
    std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut samples = Vec::with_capacity(opts.samples);
    for i in 0..opts.samples {
        let joint = Sentiment::ALL[rng.random_range(0..3)];
        let image_label = pick_label(&mut rng, joint, opts.agreement);
        let text_label = pick_label(&mut rng, joint, opts.agreement);
        let id = format!("s{i:05}");
        let rel = format!("images/{id}.png");
        let img = grid_image(&mut rng, image_label, opts.image_side);
        let path = dir.join(&rel);
        img.save(&path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        let mut s = Sample::new(id, caption(&mut rng, text_label));
        s.image_ref = Some(rel);
        s.image_label = Some(image_label);
        s.text_label = Some(text_label);
        s.joint_label = Some(joint);
        samples.push(s);
    }
    let dataset = Dataset::new("synthetic", samples)?;
    let manifest = dir.join("manifest.csv");
    write_manifest(&dataset, &manifest, ManifestFormat::Csv)?;
    Ok(SynthCorpus {
        dataset,
        manifest,
        image_dir,
    })
}

/// Runs the fixture detector over a generated corpus into `cache`.
pub fn detect_synthetic(corpus: &SynthCorpus, cache: &Path) -> Result<DetectSummary> {
    let root = corpus.manifest.parent().unwrap_or(Path::new("."));
    let mut writer = CacheWriter::open(cache)?;
    let mut detector = FixtureDetector::new(DEFAULT_FIXTURE_THRESHOLD);
    detect_dataset(&corpus.dataset, root, &mut detector, &mut writer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_manifest;
    use crate::detect::DetectionIndex;

    #[test]
    fn corpus_round_trips_and_detects() {
        let dir = tempfile::tempdir().unwrap();
        let c = write_synthetic_corpus(dir.path(), &SynthOptions::new(40, 1)).unwrap();
        let back = load_manifest(&c.manifest, ManifestFormat::Csv, "synthetic").unwrap();
        assert_eq!(back.samples(), c.dataset.samples());
        let cache = dir.path().join("det.jsonl");
        let s = detect_synthetic(&c, &cache).unwrap();
        assert_eq!(s.written, 40);
        assert_eq!(detect_synthetic(&c, &cache).unwrap().cached, 40);
        let idx = DetectionIndex::load(&cache, &Default::default()).unwrap();
        assert_eq!(idx.len(), 40);
        let singles = idx
            .sample_ids()
            .filter(|id| idx.get(id, "fixture").unwrap().len() == 1)
            .count();
        assert!(singles > 0 && singles < 40);
    }
}
