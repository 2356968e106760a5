//! Detection filtering and pseudo-label counting.
//!
//! A pseudo label is the number of surviving detection boxes for one
//! `(image, category)` cell after confidence and aspect-ratio filtering.
//! The same counting contract applied to ground-truth annotations produces
//! the training-side count table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coco_ingest::{AnnotationSet, DetectionSet};

#[derive(Debug, Error, PartialEq)]
pub enum FilterConfigError {
    #[error("confidence_threshold {0} outside [0, 1]")]
    ConfidenceOutOfRange(f64),
    #[error("aspect_ratio_min {0} outside (0, 1]")]
    AspectRatioOutOfRange(f64),
}

/// Detection-filter knobs.
///
/// `aspect_ratio_min` bounds the symmetric ratio `min(w, h) / max(w, h)`;
/// the default only rejects extreme slivers. Threshold comparisons are
/// inclusive: a box exactly at a threshold survives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub confidence_threshold: f64,
    pub aspect_ratio_min: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            confidence_threshold: 0.85,
            aspect_ratio_min: 0.05,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterConfigError> {
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(FilterConfigError::ConfidenceOutOfRange(
                self.confidence_threshold,
            ));
        }
        if !(self.aspect_ratio_min > 0.0 && self.aspect_ratio_min <= 1.0) {
            return Err(FilterConfigError::AspectRatioOutOfRange(
                self.aspect_ratio_min,
            ));
        }
        Ok(())
    }
}

/// Per-(image, category) object counts.
///
/// Lookup is total: absent cells read as zero. Serializes as a flat array
/// of `{image_id, category_id, count}` entries sorted by key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<CountEntry>", from = "Vec<CountEntry>")]
pub struct PseudoLabelTable {
    counts: BTreeMap<(i64, u32), u32>,
}

/// One serialized table cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountEntry {
    pub image_id: i64,
    pub category_id: u32,
    pub count: u32,
}

impl From<PseudoLabelTable> for Vec<CountEntry> {
    fn from(table: PseudoLabelTable) -> Self {
        table
            .counts
            .into_iter()
            .map(|((image_id, category_id), count)| CountEntry {
                image_id,
                category_id,
                count,
            })
            .collect()
    }
}

impl From<Vec<CountEntry>> for PseudoLabelTable {
    fn from(entries: Vec<CountEntry>) -> Self {
        let mut table = PseudoLabelTable::default();
        for e in entries {
            table.add(e.image_id, e.category_id, e.count);
        }
        table
    }
}

impl PseudoLabelTable {
    pub fn new() -> PseudoLabelTable {
        PseudoLabelTable::default()
    }

    /// Count for one cell; zero when the cell is absent.
    pub fn count(&self, image_id: i64, category_id: u32) -> u32 {
        self.counts.get(&(image_id, category_id)).copied().unwrap_or(0)
    }

    pub fn add(&mut self, image_id: i64, category_id: u32, n: u32) {
        if n > 0 {
            *self.counts.entry((image_id, category_id)).or_insert(0) += n;
        }
    }

    /// Non-zero cells in ascending `(image_id, category_id)` order.
    pub fn entries(&self) -> impl Iterator<Item = (i64, u32, u32)> + '_ {
        self.counts.iter().map(|(&(i, c), &n)| (i, c, n))
    }

    /// Number of non-zero cells.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Sum of all counts.
    pub fn total(&self) -> u64 {
        self.counts.values().map(|&n| n as u64).sum()
    }

    /// Merge another table into this one, summing overlapping cells.
    pub fn merge(&mut self, other: &PseudoLabelTable) {
        for (i, c, n) in other.entries() {
            self.add(i, c, n);
        }
    }
}

/// Keep detections with `score >= confidence_threshold` and aspect ratio
/// `>= aspect_ratio_min`; order is preserved. Zero-area boxes have ratio 0
/// and never survive.
pub fn filter_detections(detections: &DetectionSet, config: &FilterConfig) -> DetectionSet {
    detections
        .records()
        .iter()
        .filter(|d| {
            d.score >= config.confidence_threshold
                && d.bbox.aspect_ratio() >= config.aspect_ratio_min
        })
        .cloned()
        .collect()
}

/// Count surviving detections per `(image, category)`.
///
/// Counting is by record: duplicate boxes count individually (deduplication
/// is the detector's job). The input is assumed already filtered.
pub fn count_pseudo_labels(detections: &DetectionSet) -> PseudoLabelTable {
    let mut table = PseudoLabelTable::default();
    for d in detections.records() {
        table.add(d.image_id, d.category_id, 1);
    }
    table
}

/// Count ground-truth annotations per `(image, category)`; same counting
/// contract as [`count_pseudo_labels`].
pub fn ground_truth_counts(annotations: &AnnotationSet) -> PseudoLabelTable {
    let mut table = PseudoLabelTable::default();
    for a in annotations.records() {
        table.add(a.image_id, a.category_id, 1);
    }
    table
}
