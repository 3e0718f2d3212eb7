use std::path::{Path, PathBuf};
use std::process::Command;

use image::RgbImage;
use serde::Deserialize;

use super::{Detection, Detections, SOURCE_COCO, SOURCE_FIXTURE, SOURCE_VG};
use crate::{Error, Result};

pub const DEFAULT_COCO_THRESHOLD: f64 = 0.7;
pub const DEFAULT_VG_THRESHOLD: f64 = 0.5;
pub const DEFAULT_FIXTURE_THRESHOLD: f64 = 0.5;

/// The 91-slot COCO category table used by DETR checkpoints; `N/A` marks
/// unused ids.
pub const COCO_CLASSES: [&str; 91] = [
    "N/A", "person", "bicycle", "car", "motorcycle", "airplane", "bus", "train", "truck", "boat",
    "traffic light", "fire hydrant", "N/A", "stop sign", "parking meter", "bench", "bird", "cat",
    "dog", "horse", "sheep", "cow", "elephant", "bear", "zebra", "giraffe", "N/A", "backpack",
    "umbrella", "N/A", "N/A", "handbag", "tie", "suitcase", "frisbee", "skis", "snowboard",
    "sports ball", "kite", "baseball bat", "baseball glove", "skateboard", "surfboard",
    "tennis racket", "bottle", "N/A", "wine glass", "cup", "fork", "knife", "spoon", "bowl",
    "banana", "apple", "sandwich", "orange", "broccoli", "carrot", "hot dog", "pizza", "donut",
    "cake", "chair", "couch", "potted plant", "bed", "N/A", "dining table", "N/A", "N/A",
    "toilet", "N/A", "tv", "laptop", "mouse", "remote", "keyboard", "cell phone", "microwave",
    "oven", "toaster", "sink", "refrigerator", "N/A", "book", "clock", "vase", "scissors",
    "teddy bear", "hair drier", "toothbrush",
];

/// Top Visual Genome object categories used by the VG detector.
pub const VG_LABEL_SPACE_SIZE: usize = 200;

/// The set of class names a detector may emit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelSpace {
    /// Closed vocabulary known to this crate.
    Closed(&'static [&'static str]),
    /// Only the size is known; names come from the external checkpoint.
    Open { size: usize },
}

impl LabelSpace {
    pub fn coco() -> Self {
        LabelSpace::Closed(&COCO_CLASSES)
    }

    pub fn size(&self) -> usize {
        match self {
            LabelSpace::Closed(names) => names.len(),
            LabelSpace::Open { size } => *size,
        }
    }

    pub fn allows(&self, name: &str) -> bool {
        match self {
            LabelSpace::Closed(names) => names.iter().any(|n| n.eq_ignore_ascii_case(name) && *n != "N/A"),
            LabelSpace::Open { .. } => true,
        }
    }
}

/// A pretrained object detector. One instance per worker.
pub trait Detector {
    fn id(&self) -> &str;
    fn threshold(&self) -> f64;
    fn label_space(&self) -> LabelSpace;
    /// Raw detector output, before thresholding.
    fn run(&mut self, image: &RgbImage) -> Result<Vec<Detection>>;
}

/// Decodes an image file into RGB8.
pub fn load_image(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    Ok(img.to_rgb8())
}

/// Runs `detector`, keeps detections at or above its threshold and sorts them
/// by descending confidence (stable, so ties keep detector order).
pub fn detect_objects(detector: &mut dyn Detector, sample_id: &str, image: &RgbImage) -> Result<Detections> {
    let id = detector.id().to_string();
    let wrap = |e: Error| match e {
        Error::Detector { .. } => e,
        other => Error::Detector {
            adapter: id.clone(),
            message: other.to_string(),
        },
    };
    let threshold = detector.threshold();
    let space = detector.label_space();
    let raw = detector.run(image).map_err(wrap)?;
    let mut kept = Vec::with_capacity(raw.len());
    for mut d in raw {
        d.validate().map_err(wrap)?;
        if !space.allows(&d.name) {
            return Err(wrap(Error::InvalidArgument(format!(
                "class {:?} outside the adapter label space",
                d.name
            ))));
        }
        if d.confidence >= threshold {
            d.name = d.name.to_lowercase();
            kept.push(d);
        }
    }
    kept.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    Ok(Detections::new(sample_id, id, kept))
}

/// Deterministic stand-in detector for tests and desk runs.
///
/// With a script it returns that script for every non-blank image. Without
/// one it reads the image as a 4×4 grid: each cell brighter than 0.05 (max
/// channel mean in `[0, 1]`) yields one COCO object whose class depends on
/// the cell position and dominant channel and whose confidence is the
/// brightness. All-black images yield nothing.
#[derive(Clone, Debug)]
pub struct FixtureDetector {
    threshold: f64,
    script: Option<Vec<Detection>>,
}

impl FixtureDetector {
    pub fn new(threshold: f64) -> Self {
        FixtureDetector {
            threshold,
            script: None,
        }
    }

    pub fn scripted(threshold: f64, script: Vec<Detection>) -> Self {
        FixtureDetector {
            threshold,
            script: Some(script),
        }
    }

    fn real_classes() -> impl Iterator<Item = &'static str> {
        COCO_CLASSES.iter().copied().filter(|c| *c != "N/A")
    }

    /// Class the grid rule assigns to a cell / dominant channel pair.
    pub fn grid_class(cell: usize, channel: usize) -> &'static str {
        let n = Self::real_classes().count();
        Self::real_classes().nth((cell * 3 + channel) % n).expect("index below count")
    }

    fn grid(&self, image: &RgbImage) -> Vec<Detection> {
        let (w, h) = image.dimensions();
        let (cw, ch, side) = if w >= 4 && h >= 4 { (w / 4, h / 4, 4) } else { (w, h, 1) };
        let mut out = Vec::new();
        for cy in 0..side {
            for cx in 0..side {
                let mut sum = [0f64; 3];
                for y in cy * ch..(cy + 1) * ch {
                    for x in cx * cw..(cx + 1) * cw {
                        let p = image.get_pixel(x, y);
                        for c in 0..3 {
                            sum[c] += p[c] as f64;
                        }
                    }
                }
                let n = (cw * ch).max(1) as f64 * 255.0;
                let means = sum.map(|s| s / n);
                let mut dominant = 0;
                for c in 1..3 {
                    if means[c] > means[dominant] {
                        dominant = c;
                    }
                }
                let brightness = means[dominant];
                if brightness < 0.05 {
                    continue;
                }
                let cell = (cy * side + cx) as usize;
                out.push(Detection::new(
                    Self::grid_class(cell, dominant),
                    brightness.min(1.0),
                    [(cx * cw) as f64, (cy * ch) as f64, cw as f64, ch as f64],
                ));
            }
        }
        out
    }
}

impl Detector for FixtureDetector {
    fn id(&self) -> &str {
        SOURCE_FIXTURE
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }

    fn label_space(&self) -> LabelSpace {
        match self.script {
            Some(_) => LabelSpace::Open { size: 0 },
            None => LabelSpace::coco(),
        }
    }

    fn run(&mut self, image: &RgbImage) -> Result<Vec<Detection>> {
        if image.pixels().all(|p| p.0 == [0, 0, 0]) {
            return Ok(Vec::new());
        }
        Ok(match &self.script {
            Some(s) => s.clone(),
            None => self.grid(image),
        })
    }
}

#[derive(Deserialize)]
struct ExternalDetection {
    name: String,
    confidence: f64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

/// Wraps an external executable (for instance a Python script around a DETR
/// or Faster R-CNN checkpoint).
///
/// The program is called as `program <image.png>` and must print a JSON
/// array of `{"name", "confidence", "box": [x, y, w, h]}` objects.
#[derive(Clone, Debug)]
pub struct ExternalDetector {
    id: String,
    program: PathBuf,
    threshold: f64,
    space: LabelSpace,
}

impl ExternalDetector {
    pub fn new(id: impl Into<String>, program: impl Into<PathBuf>, threshold: f64, space: LabelSpace) -> Self {
        ExternalDetector {
            id: id.into(),
            program: program.into(),
            threshold,
            space,
        }
    }

    /// Looks for `<cache_dir>/detectors/<adapter>`; `adapter` is `coco` or `vg`.
    pub fn from_cache_dir(cache_dir: &Path, adapter: &str, threshold: f64) -> Result<Self> {
        let space = match adapter {
            SOURCE_COCO => LabelSpace::coco(),
            SOURCE_VG => LabelSpace::Open {
                size: VG_LABEL_SPACE_SIZE,
            },
            other => {
                return Err(Error::InvalidArgument(format!("unknown detector adapter {other:?}")));
            }
        };
        let program = cache_dir.join("detectors").join(adapter);
        if !program.exists() {
            return Err(Error::Detector {
                adapter: adapter.to_string(),
                message: format!("adapter program {} not found", program.display()),
            });
        }
        Ok(ExternalDetector::new(adapter, program, threshold, space))
    }
}

impl Detector for ExternalDetector {
    fn id(&self) -> &str {
        &self.id
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }

    fn label_space(&self) -> LabelSpace {
        self.space
    }

    fn run(&mut self, image: &RgbImage) -> Result<Vec<Detection>> {
        let err = |message: String| Error::Detector {
            adapter: self.id.clone(),
            message,
        };
        let tmp = tempfile::Builder::new()
            .suffix(".png")
            .tempfile()
            .map_err(|e| err(e.to_string()))?;
        image
            .save_with_format(tmp.path(), image::ImageFormat::Png)
            .map_err(|e| err(e.to_string()))?;
        let output = Command::new(&self.program)
            .arg(tmp.path())
            .output()
            .map_err(|e| err(format!("failed to run {}: {e}", self.program.display())))?;
        if !output.status.success() {
            return Err(err(format!(
                "exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let parsed: Vec<ExternalDetection> =
            serde_json::from_slice(&output.stdout).map_err(|e| err(format!("bad output: {e}")))?;
        Ok(parsed
            .into_iter()
            .map(|d| Detection::new(d.name, d.confidence, d.bbox))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn coco_table_has_91_slots() {
        assert_eq!(COCO_CLASSES.len(), 91);
        assert_eq!(LabelSpace::coco().size(), 91);
        assert_eq!(COCO_CLASSES.iter().filter(|c| **c != "N/A").count(), 80);
    }

    #[test]
    fn threshold_filters_scripted_output() {
        let mut det = FixtureDetector::scripted(
            0.5,
            vec![Detection::new("dog", 0.4, [0.0; 4]), Detection::new("cat", 0.9, [0.0; 4])],
        );
        let img = RgbImage::from_pixel(8, 8, Rgb([10, 10, 10]));
        let out = detect_objects(&mut det, "s1", &img).unwrap();
        assert_eq!(out.names().collect::<Vec<_>>(), vec!["cat"]);
        assert_eq!(out.detections[0].confidence, 0.9);
        assert_eq!(out.source, "fixture");
    }

    #[test]
    fn blank_image_has_no_objects() {
        let mut det = FixtureDetector::new(0.0);
        let img = RgbImage::new(224, 224);
        assert!(detect_objects(&mut det, "s", &img).unwrap().is_empty());
    }

    #[test]
    fn sorted_by_confidence() {
        let mut img = RgbImage::new(8, 8);
        // Cell 0 dim red, cell 5 bright green.
        for y in 0..2 {
            for x in 0..2 {
                img.put_pixel(x, y, Rgb([153, 0, 0]));
                img.put_pixel(x + 2, y + 2, Rgb([0, 255, 0]));
            }
        }
        let mut det = FixtureDetector::new(0.5);
        let out = detect_objects(&mut det, "s", &img).unwrap();
        let names: Vec<&str> = out.names().collect();
        assert_eq!(names, vec![FixtureDetector::grid_class(5, 1), FixtureDetector::grid_class(0, 0)]);
        assert_eq!(out.detections[0].bbox, [2.0, 2.0, 2.0, 2.0]);
        assert!(out.detections[0].confidence > out.detections[1].confidence);
    }

    #[test]
    fn fixture_is_reproducible() {
        let img = RgbImage::from_fn(32, 32, |x, y| Rgb([(x * 8) as u8, (y * 8) as u8, ((x + y) * 4) as u8]));
        let a = detect_objects(&mut FixtureDetector::new(0.1), "s", &img).unwrap();
        let b = detect_objects(&mut FixtureDetector::new(0.1), "s", &img).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn rejects_invalid_confidence() {
        let mut det = FixtureDetector::scripted(0.5, vec![Detection::new("cat", 1.5, [0.0; 4])]);
        let img = RgbImage::from_pixel(4, 4, Rgb([1, 1, 1]));
        let err = detect_objects(&mut det, "s", &img).unwrap_err();
        assert!(matches!(err, Error::Detector { ref adapter, .. } if adapter == "fixture"));
    }

    #[cfg(unix)]
    #[test]
    fn external_program_protocol() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let detectors = dir.path().join("detectors");
        std::fs::create_dir(&detectors).unwrap();
        let script = detectors.join("coco");
        std::fs::write(
            &script,
            "#!/bin/sh\ntest -f \"$1\" || exit 3\necho '[{\"name\":\"Person\",\"confidence\":0.95,\"box\":[1,2,3,4]},{\"name\":\"dog\",\"confidence\":0.2,\"box\":[0,0,1,1]}]'\n",
        )
        .unwrap();
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
        let mut det = ExternalDetector::from_cache_dir(dir.path(), "coco", 0.7).unwrap();
        let img = RgbImage::from_pixel(4, 4, Rgb([1, 2, 3]));
        let out = detect_objects(&mut det, "s", &img).unwrap();
        assert_eq!(out.names().collect::<Vec<_>>(), vec!["person"]);
        assert_eq!(out.source, "coco");

        std::fs::write(&script, "#!/bin/sh\necho oops >&2\nexit 2\n").unwrap();
        let err = detect_objects(&mut det, "s", &img).unwrap_err();
        assert!(err.to_string().contains("coco"), "{err}");
    }

    #[test]
    fn missing_external_program() {
        let dir = tempfile::tempdir().unwrap();
        assert!(ExternalDetector::from_cache_dir(dir.path(), "vg", 0.5).is_err());
        assert!(ExternalDetector::from_cache_dir(dir.path(), "yolo", 0.5).is_err());
    }

    #[test]
    fn undecodable_image() {
        let f = tempfile::Builder::new().suffix(".png").tempfile().unwrap();
        std::fs::write(f.path(), b"not an image").unwrap();
        assert!(matches!(load_image(f.path()), Err(Error::Image(_))));
    }
}
