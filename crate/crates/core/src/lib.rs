//! Detection-assisted counting pipeline for visual question answering.
//!
//! The crate is organized around one data flow: COCO-format annotation and
//! detection files are loaded ([`coco_ingest`]), detections are filtered and
//! counted into per-image per-category pseudo labels ([`pseudo_label`]),
//! counting questions are parsed and re-rendered with reference answers
//! injected ([`question_grammar`], [`augment`]), fine-tuning corpora are
//! generated from ground truth ([`dataset_gen`]), and free-text answers from
//! a responder ([`responder`]) are normalized and scored ([`eval`]).
//!
//! All counts are plain non-negative integers keyed by `(image_id,
//! category_id)`; labels are encoded as English number words ([`numword`]).

pub mod augment;
pub mod coco_ingest;
pub mod dataset_gen;
pub mod eval;
pub mod jsonl;
pub mod numword;
pub mod pseudo_label;
pub mod question_grammar;
pub mod responder;

pub use coco_ingest::{AnnotationSet, CategoryTable, DetectionRecord, DetectionSet};
pub use eval::CanonicalAnswer;
pub use pseudo_label::{FilterConfig, PseudoLabelTable};
pub use question_grammar::{DeltaSign, PromptRecord, Question, QuestionKind};
