use std::path::Path;

use super::{detect_objects, load_image, CacheKey, CacheRecord, CacheWriter, Detections, Detector};
use crate::corpus::Dataset;
use crate::Result;

/// Counts from one pass of [`detect_dataset`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DetectSummary {
    pub written: usize,
    pub cached: usize,
    pub without_image: usize,
}

/// Runs `detector` over every sample image (paths relative to
/// `image_root`) and appends the results to the cache. Samples already
/// cached for this detector and threshold are skipped; samples without an
/// image get an empty record.
pub fn detect_dataset(
    d: &Dataset,
    image_root: &Path,
    detector: &mut dyn Detector,
    cache: &mut CacheWriter,
) -> Result<DetectSummary> {
    let mut summary = DetectSummary::default();
    let (source, threshold) = (detector.id().to_string(), detector.threshold());
    for s in d.samples() {
        if cache.contains(&CacheKey::new(&s.id, &source, threshold)) {
            summary.cached += 1;
            continue;
        }
        let dets = match &s.image_ref {
            Some(rel) => {
                let img = load_image(&image_root.join(rel))?;
                detect_objects(detector, &s.id, &img)?
            }
            None => {
                log::warn!("sample {} has no image; caching no objects", s.id);
                summary.without_image += 1;
                Detections::new(s.id.clone(), source.clone(), Vec::new())
            }
        };
        cache.append(&CacheRecord::from_detections(&dets, threshold))?;
        summary.written += 1;
    }
    cache.flush()?;
    Ok(summary)
}
