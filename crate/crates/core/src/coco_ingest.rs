//! COCO-format ingestion: ground-truth annotation files and detector result
//! files, parsed into indexed in-memory sets.
//!
//! Only the fields the pipeline consumes are read; everything else in the
//! files is ignored, not rejected. Images are opaque integer identifiers
//! throughout; no decoding happens anywhere in this crate.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input file not found: {path}")]
    MissingFile { path: String },
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    MalformedJson {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("unknown category id {0}")]
    UnknownCategory(u32),
    #[error("detection {index} has score {score} outside [0, 1]")]
    ScoreOutOfRange { index: usize, score: f64 },
}

impl IngestError {
    fn malformed(err: &serde_json::Error) -> Self {
        IngestError::MalformedJson {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

/// Axis-aligned box in pixel units, COCO convention: `[x, y, width, height]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    /// Symmetric aspect ratio `min(w, h) / max(w, h)`, in [0, 1].
    ///
    /// Zero-area boxes are defined to have ratio 0.
    pub fn aspect_ratio(&self) -> f64 {
        let (short, long) = if self.w <= self.h {
            (self.w, self.h)
        } else {
            (self.h, self.w)
        };
        if long <= 0.0 {
            0.0
        } else {
            short / long
        }
    }
}

/// One ground-truth object instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub image_id: i64,
    pub category_id: u32,
    pub bbox: BBox,
}

/// One detector output box with its confidence score.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub image_id: i64,
    pub category_id: u32,
    pub bbox: BBox,
    pub score: f64,
}

/// The category vocabulary: unique ids mapped to unique lowercase names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryTable {
    entries: Vec<(u32, String)>,
    by_id: BTreeMap<u32, usize>,
}

impl CategoryTable {
    /// Build a table, normalizing names to lowercase + trimmed.
    ///
    /// Rejects duplicate ids and names that collide after normalization.
    pub fn new<I, S>(entries: I) -> Result<Self, IngestError>
    where
        I: IntoIterator<Item = (u32, S)>,
        S: Into<String>,
    {
        let mut table = CategoryTable {
            entries: Vec::new(),
            by_id: BTreeMap::new(),
        };
        let mut names = std::collections::BTreeSet::new();
        for (id, name) in entries {
            let name = name.into().trim().to_lowercase();
            if id == 0 {
                return Err(IngestError::SchemaViolation(format!(
                    "category id must be positive, got 0 for {name:?}"
                )));
            }
            if table.by_id.insert(id, table.entries.len()).is_some() {
                return Err(IngestError::SchemaViolation(format!(
                    "duplicate category id {id}"
                )));
            }
            if !names.insert(name.clone()) {
                return Err(IngestError::SchemaViolation(format!(
                    "duplicate category name {name:?} after normalization"
                )));
            }
            table.entries.push((id, name));
        }
        Ok(table)
    }

    /// The standard 80-category COCO detection vocabulary with its usual ids.
    pub fn coco80() -> Self {
        let names: [&str; 80] = [
            "person",
            "bicycle",
            "car",
            "motorcycle",
            "airplane",
            "bus",
            "train",
            "truck",
            "boat",
            "traffic light",
            "fire hydrant",
            "stop sign",
            "parking meter",
            "bench",
            "bird",
            "cat",
            "dog",
            "horse",
            "sheep",
            "cow",
            "elephant",
            "bear",
            "zebra",
            "giraffe",
            "backpack",
            "umbrella",
            "handbag",
            "tie",
            "suitcase",
            "frisbee",
            "skis",
            "snowboard",
            "sports ball",
            "kite",
            "baseball bat",
            "baseball glove",
            "skateboard",
            "surfboard",
            "tennis racket",
            "bottle",
            "wine glass",
            "cup",
            "fork",
            "knife",
            "spoon",
            "bowl",
            "banana",
            "apple",
            "sandwich",
            "orange",
            "broccoli",
            "carrot",
            "hot dog",
            "pizza",
            "donut",
            "cake",
            "chair",
            "couch",
            "potted plant",
            "bed",
            "dining table",
            "toilet",
            "tv",
            "laptop",
            "mouse",
            "remote",
            "keyboard",
            "cell phone",
            "microwave",
            "oven",
            "toaster",
            "sink",
            "refrigerator",
            "book",
            "clock",
            "vase",
            "scissors",
            "teddy bear",
            "hair drier",
            "toothbrush",
        ];
        // The official ids are 1..=90 with gaps.
        let ids: [u32; 80] = [
            1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25,
            27, 28, 31, 32, 33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 43, 44, 46, 47, 48, 49, 50,
            51, 52, 53, 54, 55, 56, 57, 58, 59, 60, 61, 62, 63, 64, 65, 67, 70, 72, 73, 74, 75,
            76, 77, 78, 79, 80, 81, 82, 84, 85, 86, 87, 88, 89, 90,
        ];
        CategoryTable::new(ids.into_iter().zip(names))
            .expect("built-in COCO vocabulary is well-formed")
    }

    /// Lowercase name for `id`.
    pub fn name(&self, id: u32) -> Result<&str, IngestError> {
        self.by_id
            .get(&id)
            .map(|&i| self.entries[i].1.as_str())
            .ok_or(IngestError::UnknownCategory(id))
    }

    pub fn contains(&self, id: u32) -> bool {
        self.by_id.contains_key(&id)
    }

    /// Reverse lookup by normalized name.
    pub fn id_by_name(&self, name: &str) -> Option<u32> {
        let name = name.trim().to_lowercase();
        self.entries
            .iter()
            .find(|(_, n)| *n == name)
            .map(|(id, _)| *id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &str)> {
        self.entries.iter().map(|(id, name)| (*id, name.as_str()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A record collection indexed by image id.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSet<R> {
    records: Vec<R>,
    index: BTreeMap<i64, Vec<usize>>,
}

pub type AnnotationSet = RecordSet<AnnotationRecord>;
pub type DetectionSet = RecordSet<DetectionRecord>;

impl<R> Default for RecordSet<R> {
    fn default() -> Self {
        RecordSet {
            records: Vec::new(),
            index: BTreeMap::new(),
        }
    }
}

impl<R> RecordSet<R> {
    pub fn records(&self) -> &[R] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Image ids present in the records, ascending.
    pub fn image_ids(&self) -> impl Iterator<Item = i64> + '_ {
        self.index.keys().copied()
    }

    /// Records belonging to one image, in file order.
    pub fn for_image(&self, image_id: i64) -> impl Iterator<Item = &R> {
        self.index
            .get(&image_id)
            .into_iter()
            .flatten()
            .map(|&i| &self.records[i])
    }
}

impl<R> FromIterator<R> for RecordSet<R>
where
    R: HasImageId,
{
    fn from_iter<T: IntoIterator<Item = R>>(iter: T) -> Self {
        let mut set = RecordSet::default();
        for record in iter {
            set.push(record);
        }
        set
    }
}

pub trait HasImageId {
    fn image_id(&self) -> i64;
}

impl HasImageId for AnnotationRecord {
    fn image_id(&self) -> i64 {
        self.image_id
    }
}

impl HasImageId for DetectionRecord {
    fn image_id(&self) -> i64 {
        self.image_id
    }
}

impl<R: HasImageId> RecordSet<R> {
    pub fn push(&mut self, record: R) {
        self.index
            .entry(record.image_id())
            .or_default()
            .push(self.records.len());
        self.records.push(record);
    }
}

/// A loaded annotation file: records, category vocabulary, and the file's
/// image id list (kept so serialization round-trips).
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationFile {
    pub annotations: AnnotationSet,
    pub categories: CategoryTable,
    pub image_ids: Vec<i64>,
}

impl fmt::Display for AnnotationFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} images, {} annotations, {} categories",
            self.image_ids.len(),
            self.annotations.len(),
            self.categories.len()
        )
    }
}

fn read_file(path: &Path) -> Result<String, IngestError> {
    if !path.exists() {
        return Err(IngestError::MissingFile {
            path: path.display().to_string(),
        });
    }
    std::fs::read_to_string(path).map_err(|e| IngestError::SchemaViolation(format!(
        "cannot read {}: {e}",
        path.display()
    )))
}

fn parse_json(text: &str) -> Result<Value, IngestError> {
    serde_json::from_str(text).map_err(|e| IngestError::malformed(&e))
}

// Field extraction helpers. Extraction is manual (rather than typed serde)
// so that missing keys, wrong types, and bad arities report as
// SchemaViolation with a path, distinct from JSON syntax errors.

fn get<'a>(obj: &'a Value, key: &str, at: &str) -> Result<&'a Value, IngestError> {
    obj.get(key)
        .ok_or_else(|| IngestError::SchemaViolation(format!("{at}: missing key {key:?}")))
}

fn as_array<'a>(value: &'a Value, at: &str) -> Result<&'a Vec<Value>, IngestError> {
    value
        .as_array()
        .ok_or_else(|| IngestError::SchemaViolation(format!("{at}: expected an array")))
}

fn as_i64(value: &Value, at: &str) -> Result<i64, IngestError> {
    value
        .as_i64()
        .ok_or_else(|| IngestError::SchemaViolation(format!("{at}: expected an integer")))
}

fn as_f64(value: &Value, at: &str) -> Result<f64, IngestError> {
    value
        .as_f64()
        .ok_or_else(|| IngestError::SchemaViolation(format!("{at}: expected a number")))
}

fn as_str<'a>(value: &'a Value, at: &str) -> Result<&'a str, IngestError> {
    value
        .as_str()
        .ok_or_else(|| IngestError::SchemaViolation(format!("{at}: expected a string")))
}

fn as_category_id(value: &Value, at: &str) -> Result<u32, IngestError> {
    let id = as_i64(value, at)?;
    u32::try_from(id).map_err(|_| {
        IngestError::SchemaViolation(format!("{at}: category id {id} is not a positive integer"))
    })
}

fn parse_bbox(value: &Value, at: &str) -> Result<BBox, IngestError> {
    let arr = as_array(value, at)?;
    if arr.len() != 4 {
        return Err(IngestError::SchemaViolation(format!(
            "{at}: bbox must have exactly 4 elements, got {}",
            arr.len()
        )));
    }
    let mut parts = [0.0f64; 4];
    for (i, v) in arr.iter().enumerate() {
        parts[i] = as_f64(v, &format!("{at}[{i}]"))?;
    }
    let bbox = BBox {
        x: parts[0],
        y: parts[1],
        w: parts[2],
        h: parts[3],
    };
    if bbox.w < 0.0 || bbox.h < 0.0 {
        return Err(IngestError::SchemaViolation(format!(
            "{at}: negative width or height"
        )));
    }
    Ok(bbox)
}

/// Load a COCO annotation file (`images` / `annotations` / `categories`).
pub fn load_annotations(path: &Path) -> Result<AnnotationFile, IngestError> {
    parse_annotations(&read_file(path)?)
}

/// Parse annotation JSON from memory; same contract as [`load_annotations`].
pub fn parse_annotations(text: &str) -> Result<AnnotationFile, IngestError> {
    let root = parse_json(text)?;

    let mut image_ids = Vec::new();
    for (i, image) in as_array(get(&root, "images", "top level")?, "\"images\"")?
        .iter()
        .enumerate()
    {
        let at = format!("images[{i}]");
        image_ids.push(as_i64(get(image, "id", &at)?, &format!("{at}.id"))?);
    }

    let mut entries = Vec::new();
    for (i, category) in as_array(get(&root, "categories", "top level")?, "\"categories\"")?
        .iter()
        .enumerate()
    {
        let at = format!("categories[{i}]");
        let id = as_category_id(get(category, "id", &at)?, &format!("{at}.id"))?;
        let name = as_str(get(category, "name", &at)?, &format!("{at}.name"))?;
        entries.push((id, name.to_string()));
    }
    let categories = CategoryTable::new(entries)?;

    let mut annotations = AnnotationSet::default();
    for (i, ann) in as_array(get(&root, "annotations", "top level")?, "\"annotations\"")?
        .iter()
        .enumerate()
    {
        let at = format!("annotations[{i}]");
        let category_id = as_category_id(get(ann, "category_id", &at)?, &format!("{at}.category_id"))?;
        if !categories.contains(category_id) {
            return Err(IngestError::UnknownCategory(category_id));
        }
        annotations.push(AnnotationRecord {
            image_id: as_i64(get(ann, "image_id", &at)?, &format!("{at}.image_id"))?,
            category_id,
            bbox: parse_bbox(get(ann, "bbox", &at)?, &format!("{at}.bbox"))?,
        });
    }

    Ok(AnnotationFile {
        annotations,
        categories,
        image_ids,
    })
}

/// Load a COCO detection results file: a JSON array of scored boxes.
///
/// Order is preserved. A result referencing a category id absent from
/// `categories` is a hard error: silently dropping it would corrupt the
/// downstream pseudo-label counts.
pub fn load_detections(path: &Path, categories: &CategoryTable) -> Result<DetectionSet, IngestError> {
    parse_detections(&read_file(path)?, categories)
}

/// Parse detection-results JSON from memory; same contract as
/// [`load_detections`].
pub fn parse_detections(text: &str, categories: &CategoryTable) -> Result<DetectionSet, IngestError> {
    let root = parse_json(text)?;
    let mut detections = DetectionSet::default();
    for (i, det) in as_array(&root, "top level")?.iter().enumerate() {
        let at = format!("detections[{i}]");
        let score = as_f64(get(det, "score", &at)?, &format!("{at}.score"))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(IngestError::ScoreOutOfRange { index: i, score });
        }
        let category_id = as_category_id(get(det, "category_id", &at)?, &format!("{at}.category_id"))?;
        if !categories.contains(category_id) {
            return Err(IngestError::UnknownCategory(category_id));
        }
        detections.push(DetectionRecord {
            image_id: as_i64(get(det, "image_id", &at)?, &format!("{at}.image_id"))?,
            category_id,
            bbox: parse_bbox(get(det, "bbox", &at)?, &format!("{at}.bbox"))?,
            score,
        });
    }
    Ok(detections)
}

/// Serialize an [`AnnotationFile`] back to COCO annotation JSON.
///
/// Emits only the consumed fields, in a stable order, so the output of
/// `serialize -> parse -> serialize` is byte-identical.
pub fn serialize_annotations(file: &AnnotationFile) -> String {
    let images: Vec<Value> = file
        .image_ids
        .iter()
        .map(|id| serde_json::json!({ "id": id }))
        .collect();
    let annotations: Vec<Value> = file
        .annotations
        .records()
        .iter()
        .map(|a| {
            serde_json::json!({
                "image_id": a.image_id,
                "category_id": a.category_id,
                "bbox": [a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h],
            })
        })
        .collect();
    let categories: Vec<Value> = file
        .categories
        .iter()
        .map(|(id, name)| serde_json::json!({ "id": id, "name": name }))
        .collect();
    let root = serde_json::json!({
        "images": images,
        "annotations": annotations,
        "categories": categories,
    });
    serde_json::to_string_pretty(&root).expect("annotation JSON serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL_COCO: &str = r#"{
        "info": {"description": "fixture"},
        "images": [{"id": 1, "file_name": "a.jpg"}, {"id": 2, "file_name": "b.jpg"}],
        "annotations": [
            {"image_id": 1, "category_id": 1, "bbox": [10.0, 20.0, 30.0, 40.0], "area": 1200.0},
            {"image_id": 1, "category_id": 2, "bbox": [0.0, 0.0, 5.0, 5.0]},
            {"image_id": 2, "category_id": 1, "bbox": [1.5, 2.5, 3.5, 4.5]}
        ],
        "categories": [{"id": 1, "name": "Bicycle "}, {"id": 2, "name": "cat"}]
    }"#;

    #[test]
    fn loads_minimal_fixture() {
        let file = parse_annotations(MINIMAL_COCO).unwrap();
        assert_eq!(file.annotations.len(), 3);
        assert_eq!(file.categories.len(), 2);
        assert_eq!(file.image_ids, vec![1, 2]);
        // names normalize to lowercase + trimmed
        assert_eq!(file.categories.name(1).unwrap(), "bicycle");
        assert_eq!(file.categories.name(2).unwrap(), "cat");
    }

    #[test]
    fn empty_annotations_array_is_fine() {
        let file = parse_annotations(
            r#"{"images": [], "annotations": [], "categories": []}"#,
        )
        .unwrap();
        assert_eq!(file.annotations.len(), 0);
        assert!(file.annotations.is_empty());
    }

    #[test]
    fn bbox_arity_is_checked() {
        let text = r#"{
            "images": [{"id": 1}],
            "annotations": [{"image_id": 1, "category_id": 1, "bbox": [1, 2, 3]}],
            "categories": [{"id": 1, "name": "cat"}]
        }"#;
        let err = parse_annotations(text).unwrap_err();
        assert!(
            matches!(&err, IngestError::SchemaViolation(m) if m.contains("4 elements")),
            "got {err}"
        );
    }

    #[test]
    fn missing_top_level_key_is_schema_violation() {
        let err = parse_annotations(r#"{"images": [], "annotations": []}"#).unwrap_err();
        assert!(matches!(&err, IngestError::SchemaViolation(m) if m.contains("categories")));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_annotations("{\n  \"images\": [,]\n}").unwrap_err();
        match err {
            IngestError::MalformedJson { line, .. } => assert_eq!(line, 2),
            other => panic!("expected MalformedJson, got {other}"),
        }
    }

    #[test]
    fn missing_file_is_reported() {
        let err = load_annotations(Path::new("/nonexistent/odac.json")).unwrap_err();
        assert!(matches!(err, IngestError::MissingFile { .. }));
    }

    #[test]
    fn annotation_with_unknown_category_is_rejected() {
        let text = r#"{
            "images": [{"id": 1}],
            "annotations": [{"image_id": 1, "category_id": 9, "bbox": [1, 2, 3, 4]}],
            "categories": [{"id": 1, "name": "cat"}]
        }"#;
        assert!(matches!(
            parse_annotations(text).unwrap_err(),
            IngestError::UnknownCategory(9)
        ));
    }

    fn fixture_categories() -> CategoryTable {
        CategoryTable::new([(1u32, "bicycle"), (2, "person")]).unwrap()
    }

    #[test]
    fn loads_detection_results() {
        let text = r#"[
            {"image_id": 7, "category_id": 1, "bbox": [0, 0, 10, 10], "score": 0.9},
            {"image_id": 7, "category_id": 1, "bbox": [5, 5, 10, 10], "score": 0.8},
            {"image_id": 7, "category_id": 2, "bbox": [1, 1, 4, 9], "score": 0.95},
            {"image_id": 8, "category_id": 2, "bbox": [2, 2, 4, 9], "score": 0.5},
            {"image_id": 9, "category_id": 1, "bbox": [3, 3, 7, 2], "score": 0.99}
        ]"#;
        let dets = parse_detections(text, &fixture_categories()).unwrap();
        assert_eq!(dets.len(), 5);
        // order preserved
        assert_eq!(dets.records()[1].score, 0.8);
        assert_eq!(dets.for_image(7).count(), 3);
    }

    #[test]
    fn empty_detection_array() {
        let dets = parse_detections("[]", &fixture_categories()).unwrap();
        assert_eq!(dets.len(), 0);
    }

    #[test]
    fn detection_score_out_of_range() {
        let text = r#"[{"image_id": 1, "category_id": 1, "bbox": [0, 0, 1, 1], "score": 1.3}]"#;
        let err = parse_detections(text, &fixture_categories()).unwrap_err();
        assert!(matches!(err, IngestError::ScoreOutOfRange { index: 0, .. }));
    }

    #[test]
    fn detection_unknown_category_is_hard_error() {
        let text = r#"[{"image_id": 1, "category_id": 42, "bbox": [0, 0, 1, 1], "score": 0.5}]"#;
        assert!(matches!(
            parse_detections(text, &fixture_categories()).unwrap_err(),
            IngestError::UnknownCategory(42)
        ));
    }

    #[test]
    fn every_loaded_detection_resolves_a_name() {
        let cats = fixture_categories();
        let text = r#"[
            {"image_id": 1, "category_id": 1, "bbox": [0, 0, 1, 1], "score": 0.5},
            {"image_id": 2, "category_id": 2, "bbox": [0, 0, 1, 1], "score": 0.6}
        ]"#;
        let dets = parse_detections(text, &cats).unwrap();
        for record in dets.records() {
            cats.name(record.category_id).unwrap();
        }
    }

    #[test]
    fn category_lookup() {
        let cats = CategoryTable::new([(1u32, "Bicycle ")]).unwrap();
        assert_eq!(cats.name(1).unwrap(), "bicycle");
        assert!(matches!(cats.name(2), Err(IngestError::UnknownCategory(2))));
        assert_eq!(cats.id_by_name("bicycle"), Some(1));
    }

    #[test]
    fn duplicate_ids_and_names_are_rejected() {
        assert!(CategoryTable::new([(1u32, "a"), (1, "b")]).is_err());
        assert!(CategoryTable::new([(1u32, "Cat"), (2, " cat ")]).is_err());
    }

    #[test]
    fn serialization_round_trips_record_list() {
        let loaded = parse_annotations(MINIMAL_COCO).unwrap();
        let serialized = serialize_annotations(&loaded);
        let reloaded = parse_annotations(&serialized).unwrap();
        assert_eq!(reloaded.annotations.records(), loaded.annotations.records());
        assert_eq!(reloaded.categories, loaded.categories);
        assert_eq!(reloaded.image_ids, loaded.image_ids);
        // and the serialized form is a fixed point
        assert_eq!(serialize_annotations(&reloaded), serialized);
    }

    #[test]
    fn coco80_is_well_formed() {
        let cats = CategoryTable::coco80();
        assert_eq!(cats.len(), 80);
        assert_eq!(cats.name(2).unwrap(), "bicycle");
        assert_eq!(cats.id_by_name("toothbrush"), Some(90));
    }
}
