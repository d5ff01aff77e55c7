//! Pixel-space detections to labeled boxes on the 0..=1000 grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GroundingBackend};
use crate::model::{ImageRef, LabeledBox, ModelError, NormBox, VisualAnnotation, GRID_MAX};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroundError {
    #[error("empty grounding label")]
    EmptyLabel,
    #[error("pixel box {0:?} does not fit a {1}x{2} image")]
    InvalidBox(PixelBox, u32, u32),
    #[error("box collapses after normalization and cannot be expanded")]
    Degenerate,
    #[error("no detection for {0:?} at or above the confidence threshold")]
    NoDetection(String),
    #[error(transparent)]
    Backend(BackendError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A detection in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub confidence: f64,
}

impl PixelBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64, confidence: f64) -> Self {
        Self { x1, y1, x2, y2, confidence }
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        let (w, h) = (f64::from(width), f64::from(height));
        [self.x1, self.y1, self.x2, self.y2, self.confidence].iter().all(|v| v.is_finite())
            && 0.0 <= self.x1
            && self.x1 < self.x2
            && self.x2 <= w
            && 0.0 <= self.y1
            && self.y1 < self.y2
            && self.y2 <= h
            && (0.0..=1.0).contains(&self.confidence)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundingConfig {
    pub max_boxes: usize,
    pub min_conf: f64,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        Self { max_boxes: 1, min_conf: 0.35 }
    }
}

/// `floor(1000 * v / extent + 1/2)`, i.e. round half up.
fn scale(v: f64, extent: u32) -> i64 {
    let g = (f64::from(GRID_MAX) * v / f64::from(extent) + 0.5).floor() as i64;
    g.clamp(0, i64::from(GRID_MAX))
}

fn widen(lo: i64, hi: i64) -> Result<(i64, i64), GroundError> {
    if lo < hi {
        Ok((lo, hi))
    } else if hi < i64::from(GRID_MAX) {
        Ok((lo, hi + 1))
    } else {
        Err(GroundError::Degenerate)
    }
}

/// Maps a pixel box onto the normalized grid. A side that collapses under
/// rounding is widened by one unit at its far edge.
pub fn normalize_box(b: &PixelBox, img: &ImageRef) -> Result<NormBox, GroundError> {
    if !b.fits(img.width_px, img.height_px) {
        return Err(GroundError::InvalidBox(*b, img.width_px, img.height_px));
    }
    let (x1, x2) = widen(scale(b.x1, img.width_px), scale(b.x2, img.width_px))?;
    let (y1, y2) = widen(scale(b.y1, img.height_px), scale(b.y2, img.height_px))?;
    Ok(NormBox::new(x1, y1, x2, y2)?)
}

/// Grounds one label: filter by confidence, sort descending, truncate,
/// normalize. Every returned box carries `label`.
pub fn ground_label(
    label: &str,
    img: &ImageRef,
    backend: &dyn GroundingBackend,
    cfg: GroundingConfig,
) -> Result<VisualAnnotation, GroundError> {
    if label.trim().is_empty() {
        return Err(GroundError::EmptyLabel);
    }
    let mut boxes = match backend.detect_grounded_boxes(img, label) {
        Ok(b) => b,
        Err(BackendError::NoDetection) => return Err(GroundError::NoDetection(label.to_string())),
        Err(e) => return Err(GroundError::Backend(e)),
    };
    boxes.retain(|b| b.confidence >= cfg.min_conf);
    boxes.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    boxes.truncate(cfg.max_boxes);
    if boxes.is_empty() {
        return Err(GroundError::NoDetection(label.to_string()));
    }
    let labeled = boxes
        .iter()
        .map(|b| Ok(LabeledBox { bbox: normalize_box(b, img)?, label: label.to_string() }))
        .collect::<Result<Vec<_>, GroundError>>()?;
    Ok(VisualAnnotation::new(labeled)?)
}

/// Grounds each label separately and concatenates results in label order.
pub fn ground_labels<S: AsRef<str>>(
    labels: &[S],
    img: &ImageRef,
    backend: &dyn GroundingBackend,
    cfg: GroundingConfig,
) -> Result<VisualAnnotation, GroundError> {
    let parts = labels
        .iter()
        .map(|l| ground_label(l.as_ref(), img, backend, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VisualAnnotation::concat(parts)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ImageKind;
    use proptest::prelude::*;

    fn img(w: u32, h: u32) -> ImageRef {
        ImageRef::new("img.jpg", w, h, ImageKind::Natural).unwrap()
    }

    fn pb(x1: f64, y1: f64, x2: f64, y2: f64) -> PixelBox {
        PixelBox::new(x1, y1, x2, y2, 0.9)
    }

    #[test]
    fn full_frame() {
        let b = normalize_box(&pb(0.0, 0.0, 333.0, 777.0), &img(333, 777)).unwrap();
        assert_eq!(b.coords(), [0, 0, 1000, 1000]);
    }

    #[test]
    fn vga_quarter() {
        let b = normalize_box(&pb(64.0, 48.0, 320.0, 240.0), &img(640, 480)).unwrap();
        assert_eq!(b.coords(), [100, 100, 500, 500]);
    }

    #[test]
    fn rounds_half_up() {
        // 1000 * 1 / 2000 = 0.5 -> 1; 1000 * 3 / 2000 = 1.5 -> 2
        let b = normalize_box(&pb(1.0, 3.0, 3.0, 5.0), &img(2000, 2000)).unwrap();
        assert_eq!(b.coords(), [1, 2, 2, 3]);
    }

    #[test]
    fn collapsed_side_expands() {
        let b = normalize_box(&pb(100.0, 0.0, 100.2, 10.0), &img(1000, 1000)).unwrap();
        assert_eq!(b.coords(), [100, 0, 101, 10]);
    }

    #[test]
    fn collapse_at_right_edge_is_degenerate() {
        let r = normalize_box(&pb(999.6, 0.0, 1000.0, 10.0), &img(1000, 1000));
        assert_eq!(r, Err(GroundError::Degenerate));
        // a whole pixel at the edge still has a unit of width
        let b = normalize_box(&pb(999.0, 0.0, 1000.0, 10.0), &img(1000, 1000)).unwrap();
        assert_eq!(b.coords(), [999, 0, 1000, 10]);
    }

    #[test]
    fn rejects_box_outside_image() {
        assert!(matches!(
            normalize_box(&pb(0.0, 0.0, 700.0, 10.0), &img(640, 480)),
            Err(GroundError::InvalidBox(..))
        ));
    }

    struct Fixed(Vec<PixelBox>);

    impl GroundingBackend for Fixed {
        fn detect_grounded_boxes(&self, _: &ImageRef, _: &str) -> Result<Vec<PixelBox>, BackendError> {
            if self.0.is_empty() {
                Err(BackendError::NoDetection)
            } else {
                Ok(self.0.clone())
            }
        }
    }

    #[test]
    fn filters_sorts_truncates() {
        let backend = Fixed(vec![
            PixelBox::new(0.0, 0.0, 10.0, 10.0, 0.2),
            PixelBox::new(0.0, 0.0, 50.0, 50.0, 0.6),
            PixelBox::new(0.0, 0.0, 20.0, 20.0, 0.9),
        ]);
        let im = img(100, 100);
        let one = ground_label("dog", &im, &backend, GroundingConfig::default()).unwrap();
        assert_eq!(one.boxes()[0].bbox.coords(), [0, 0, 200, 200]);
        let cfg = GroundingConfig { max_boxes: 5, min_conf: 0.35 };
        let two = ground_label("dog", &im, &backend, cfg).unwrap();
        assert_eq!(two.len(), 2);
        assert!(two.boxes().iter().all(|b| b.label == "dog"));
        let none = ground_label("dog", &im, &backend, GroundingConfig { max_boxes: 1, min_conf: 0.95 });
        assert_eq!(none, Err(GroundError::NoDetection("dog".into())));
    }

    #[test]
    fn backend_miss_is_no_detection() {
        let r = ground_label("cat", &img(10, 10), &Fixed(vec![]), GroundingConfig::default());
        assert_eq!(r, Err(GroundError::NoDetection("cat".into())));
        assert_eq!(ground_label(" ", &img(10, 10), &Fixed(vec![]), GroundingConfig::default()), Err(GroundError::EmptyLabel));
    }

    proptest! {
        #[test]
        fn identity_on_grid_extent(x1 in 0u32..1000, y1 in 0u32..1000, dx in 1u32..1000, dy in 1u32..1000) {
            let (x2, y2) = ((x1 + dx).min(1000), (y1 + dy).min(1000));
            prop_assume!(x1 < x2 && y1 < y2);
            let b = pb(x1.into(), y1.into(), x2.into(), y2.into());
            let n = normalize_box(&b, &img(1000, 1000)).unwrap();
            prop_assert_eq!(n.coords(), [x1, y1, x2, y2]);
        }

        #[test]
        fn monotone_per_coordinate(w in 1u32..5000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(scale(lo * f64::from(w), w) <= scale(hi * f64::from(w), w));
        }

        #[test]
        fn always_valid_or_degenerate(
            w in 1u32..4000, h in 1u32..4000,
            fx in 0.0f64..1.0, fy in 0.0f64..1.0, fw in 0.0001f64..1.0, fh in 0.0001f64..1.0,
        ) {
            let (w_, h_) = (f64::from(w), f64::from(h));
            let x1 = fx * w_;
            let y1 = fy * h_;
            let x2 = (x1 + fw * w_).min(w_);
            let y2 = (y1 + fh * h_).min(h_);
            prop_assume!(x1 < x2 && y1 < y2);
            match normalize_box(&pb(x1, y1, x2, y2), &img(w, h)) {
                Ok(n) => prop_assert!(n.x1() < n.x2() && n.y1() < n.y2() && n.x2() <= 1000 && n.y2() <= 1000),
                Err(e) => prop_assert_eq!(e, GroundError::Degenerate),
            }
        }
    }
}
