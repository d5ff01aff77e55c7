//! Shared domain types and the training / benchmark record schemas.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::validator::ValidationScores;

/// Upper bound of the normalized box grid.
pub const GRID_MAX: u32 = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("box coordinate {0} outside [0, 1000]")]
    OutOfRange(i64),
    #[error("degenerate box [{x1}, {y1}, {x2}, {y2}]")]
    Degenerate { x1: i64, y1: i64, x2: i64, y2: i64 },
    #[error("image dimensions must be positive, got {0}x{1}")]
    BadImageSize(u32, u32),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("visual annotation needs at least one box")]
    NoBoxes,
    #[error("aligned benchmark instance {0} carries ground-truth misalignment fields")]
    AlignedWithFeedback(String),
    #[error("unknown misalignment type {0:?}")]
    UnknownType(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageKind {
    Natural,
    Synthetic,
}

/// Image provenance: referenced by URI, never decoded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawImageRef")]
pub struct ImageRef {
    pub uri: String,
    pub width_px: u32,
    pub height_px: u32,
    pub kind: ImageKind,
}

#[derive(Deserialize)]
struct RawImageRef {
    uri: String,
    width_px: u32,
    height_px: u32,
    kind: ImageKind,
}

impl TryFrom<RawImageRef> for ImageRef {
    type Error = ModelError;

    fn try_from(raw: RawImageRef) -> Result<Self, ModelError> {
        ImageRef::new(raw.uri, raw.width_px, raw.height_px, raw.kind)
    }
}

impl ImageRef {
    pub fn new(
        uri: impl Into<String>,
        width_px: u32,
        height_px: u32,
        kind: ImageKind,
    ) -> Result<Self, ModelError> {
        if width_px == 0 || height_px == 0 {
            return Err(ModelError::BadImageSize(width_px, height_px));
        }
        let uri = uri.into();
        if uri.trim().is_empty() {
            return Err(ModelError::Empty("image uri"));
        }
        Ok(Self { uri, width_px, height_px, kind })
    }
}

/// Image kind declared by each known source dataset. Unknown datasets accept
/// either kind.
pub fn declared_image_kind(dataset: &str) -> Option<ImageKind> {
    match dataset.to_ascii_lowercase().as_str() {
        "pickapic" | "imagereward" => Some(ImageKind::Synthetic),
        "coco" | "flickr30k" | "openimages" | "ade20k" => Some(ImageKind::Natural),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionProvenance {
    HumanAnnotated,
    ModelPredicted,
    NarrativeSummarized,
}

/// A positive image-caption pair entering the generation pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub id: String,
    pub image: ImageRef,
    pub caption: String,
    pub caption_provenance: CaptionProvenance,
    pub source_dataset: String,
}

impl AlignedPair {
    pub fn new(
        id: impl Into<String>,
        image: ImageRef,
        caption: impl Into<String>,
        caption_provenance: CaptionProvenance,
        source_dataset: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let caption = caption.into();
        if caption.trim().is_empty() {
            return Err(ModelError::Empty("caption"));
        }
        Ok(Self {
            id: id.into(),
            image,
            caption,
            caption_provenance,
            source_dataset: source_dataset.into(),
        })
    }
}

/// The four misalignment categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MisalignmentType {
    Object,
    Attribute,
    Action,
    Relation,
}

impl MisalignmentType {
    pub const ALL: [MisalignmentType; 4] = [
        MisalignmentType::Object,
        MisalignmentType::Attribute,
        MisalignmentType::Action,
        MisalignmentType::Relation,
    ];

    /// The label used inside prompts and in the LLM's `MISALIGNMENT TYPE:` line.
    pub fn prompt_label(self) -> &'static str {
        match self {
            MisalignmentType::Object => "Object/Noun",
            MisalignmentType::Attribute => "Attribute/Adjective",
            MisalignmentType::Action => "Action/Verb",
            MisalignmentType::Relation => "Relation",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MisalignmentType::Object => "object",
            MisalignmentType::Attribute => "attribute",
            MisalignmentType::Action => "action",
            MisalignmentType::Relation => "relation",
        }
    }
}

impl fmt::Display for MisalignmentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MisalignmentType {
    type Err = ModelError;

    /// Accepts `object`, `Object/Noun`, `noun`, `Relation.` and similar.
    fn from_str(s: &str) -> Result<Self, ModelError> {
        let head = s
            .split('/')
            .next()
            .unwrap_or("")
            .trim()
            .trim_end_matches('.')
            .to_ascii_lowercase();
        match head.as_str() {
            "object" | "noun" => Ok(MisalignmentType::Object),
            "attribute" | "adjective" => Ok(MisalignmentType::Attribute),
            "action" | "verb" => Ok(MisalignmentType::Action),
            "relation" | "spatial relation" => Ok(MisalignmentType::Relation),
            _ => Err(ModelError::UnknownType(s.to_string())),
        }
    }
}

/// Parsed LLM output for one contradiction generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub contradiction_caption: String,
    pub feedback: String,
    /// Content of the `(CAPTION: ...)` parenthetical.
    pub caption_cue: String,
    /// Content of the `(CONTRADICTION: ...)` parenthetical.
    pub contradiction_cue: String,
    pub misalignment_type: MisalignmentType,
    pub raw_llm_text: String,
}

/// Integer box on the 0..=1000 normalized grid. Always has positive area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i64; 4]", into = "[u32; 4]")]
pub struct NormBox {
    x1: u32,
    y1: u32,
    x2: u32,
    y2: u32,
}

impl NormBox {
    pub fn new(x1: i64, y1: i64, x2: i64, y2: i64) -> Result<Self, ModelError> {
        for v in [x1, y1, x2, y2] {
            if !(0..=GRID_MAX as i64).contains(&v) {
                return Err(ModelError::OutOfRange(v));
            }
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(ModelError::Degenerate { x1, y1, x2, y2 });
        }
        Ok(Self { x1: x1 as u32, y1: y1 as u32, x2: x2 as u32, y2: y2 as u32 })
    }

    pub fn x1(&self) -> u32 {
        self.x1
    }
    pub fn y1(&self) -> u32 {
        self.y1
    }
    pub fn x2(&self) -> u32 {
        self.x2
    }
    pub fn y2(&self) -> u32 {
        self.y2
    }

    pub fn coords(&self) -> [u32; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> u64 {
        u64::from(self.x2 - self.x1)
    }

    pub fn height(&self) -> u64 {
        u64::from(self.y2 - self.y1)
    }

    pub fn area(&self) -> u64 {
        self.width() * self.height()
    }
}

/// Validating constructor, see [`NormBox::new`].
pub fn make_norm_box(x1: i64, y1: i64, x2: i64, y2: i64) -> Result<NormBox, ModelError> {
    NormBox::new(x1, y1, x2, y2)
}

impl TryFrom<[i64; 4]> for NormBox {
    type Error = ModelError;

    fn try_from([x1, y1, x2, y2]: [i64; 4]) -> Result<Self, ModelError> {
        NormBox::new(x1, y1, x2, y2)
    }
}

impl From<NormBox> for [u32; 4] {
    fn from(b: NormBox) -> Self {
        b.coords()
    }
}

impl fmt::Display for NormBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x1, self.y1, self.x2, self.y2)
    }
}

/// One labeled box.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledBox {
    #[serde(rename = "box")]
    pub bbox: NormBox,
    pub label: String,
}

/// Ordered, non-empty list of labeled boxes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<LabeledBox>", into = "Vec<LabeledBox>")]
pub struct VisualAnnotation {
    boxes: Vec<LabeledBox>,
}

impl VisualAnnotation {
    pub fn new(boxes: Vec<LabeledBox>) -> Result<Self, ModelError> {
        if boxes.is_empty() {
            return Err(ModelError::NoBoxes);
        }
        if boxes.iter().any(|b| b.label.trim().is_empty()) {
            return Err(ModelError::Empty("box label"));
        }
        Ok(Self { boxes })
    }

    pub fn single(bbox: NormBox, label: impl Into<String>) -> Result<Self, ModelError> {
        Self::new(vec![LabeledBox { bbox, label: label.into() }])
    }

    pub fn boxes(&self) -> &[LabeledBox] {
        &self.boxes
    }

    pub fn norm_boxes(&self) -> Vec<NormBox> {
        self.boxes.iter().map(|b| b.bbox).collect()
    }

    /// Concatenates annotations in order.
    pub fn concat(parts: impl IntoIterator<Item = VisualAnnotation>) -> Result<Self, ModelError> {
        Self::new(parts.into_iter().flat_map(|p| p.boxes).collect())
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

impl TryFrom<Vec<LabeledBox>> for VisualAnnotation {
    type Error = ModelError;

    fn try_from(boxes: Vec<LabeledBox>) -> Result<Self, ModelError> {
        VisualAnnotation::new(boxes)
    }
}

impl From<VisualAnnotation> for Vec<LabeledBox> {
    fn from(v: VisualAnnotation) -> Self {
        v.boxes
    }
}

/// One row of the generated training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub id: String,
    pub source_dataset: String,
    pub image: ImageRef,
    pub positive_caption: String,
    pub negative_caption: String,
    pub misalignment_type: MisalignmentType,
    pub feedback: String,
    /// Contradiction-side cue: the offending phrase of the negative caption.
    pub misalignment_in_text: String,
    /// Boxes labeled with the caption-side cue (actual image content).
    pub visual: VisualAnnotation,
    pub validation: ValidationScores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatus {
    #[default]
    Pending,
    Accepted,
    Rejected,
}

/// One evaluation instance with optional ground-truth feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkInstance {
    pub id: String,
    pub image: ImageRef,
    pub caption: String,
    pub alignment_label: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_feedback: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_misalignment_in_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_visual: Option<VisualAnnotation>,
    #[serde(default)]
    pub review_status: ReviewStatus,
}

impl BenchmarkInstance {
    /// Aligned instances must not carry ground-truth misalignment fields.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.caption.trim().is_empty() {
            return Err(ModelError::Empty("caption"));
        }
        if self.alignment_label
            && (self.gt_feedback.is_some()
                || self.gt_misalignment_in_text.is_some()
                || self.gt_visual.is_some())
        {
            return Err(ModelError::AlignedWithFeedback(self.id.clone()));
        }
        Ok(())
    }
}

/// Whitespace-collapsed, lowercased form used for caption equality checks.
pub fn normalize_text(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches(['.', '!', '?'])
        .trim_end()
        .to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_frame_box() {
        let b = make_norm_box(0, 0, 1000, 1000).unwrap();
        assert_eq!(b.area(), 1_000_000);
    }

    #[test]
    fn open_images_box_is_valid() {
        let b = make_norm_box(339, 245, 581, 834).unwrap();
        assert_eq!(b.to_string(), "[339, 245, 581, 834]");
    }

    #[test]
    fn zero_width_is_degenerate() {
        assert!(matches!(make_norm_box(100, 100, 100, 500), Err(ModelError::Degenerate { .. })));
    }

    #[test]
    fn out_of_range_rejected() {
        assert_eq!(make_norm_box(-1, 0, 10, 10), Err(ModelError::OutOfRange(-1)));
        assert_eq!(make_norm_box(0, 0, 1001, 10), Err(ModelError::OutOfRange(1001)));
    }

    #[test]
    fn norm_box_json_is_array_and_validated() {
        let b = make_norm_box(1, 2, 3, 4).unwrap();
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1,2,3,4]");
        assert!(serde_json::from_str::<NormBox>("[5,5,5,9]").is_err());
    }

    #[test]
    fn misalignment_type_labels() {
        for t in MisalignmentType::ALL {
            assert_eq!(t.prompt_label().parse::<MisalignmentType>().unwrap(), t);
            assert_eq!(t.as_str().parse::<MisalignmentType>().unwrap(), t);
        }
        assert!("Color".parse::<MisalignmentType>().is_err());
        assert_eq!(serde_json::to_string(&MisalignmentType::Relation).unwrap(), "\"relation\"");
    }

    #[test]
    fn image_ref_rejects_zero_size() {
        assert!(ImageRef::new("a.jpg", 0, 10, ImageKind::Natural).is_err());
        let json = r#"{"uri":"a.jpg","width_px":0,"height_px":3,"kind":"natural"}"#;
        assert!(serde_json::from_str::<ImageRef>(json).is_err());
    }

    #[test]
    fn empty_annotation_rejected() {
        assert_eq!(VisualAnnotation::new(vec![]), Err(ModelError::NoBoxes));
        assert!(serde_json::from_str::<VisualAnnotation>("[]").is_err());
    }

    #[test]
    fn aligned_instance_without_feedback() {
        let img = ImageRef::new("x.png", 10, 10, ImageKind::Synthetic).unwrap();
        let mut inst = BenchmarkInstance {
            id: "i".into(),
            image: img,
            caption: "a cat".into(),
            alignment_label: true,
            gt_feedback: None,
            gt_misalignment_in_text: None,
            gt_visual: None,
            review_status: ReviewStatus::Pending,
        };
        assert!(inst.validate().is_ok());
        inst.gt_feedback = Some("no".into());
        assert!(inst.validate().is_err());
    }

    #[test]
    fn normalization_ignores_case_space_and_final_period() {
        assert_eq!(normalize_text("A  cat on a mat. "), normalize_text("a cat on a mat"));
    }
}
