//! Answer normalization, exact-match accuracy, and the detection-assistance
//! by prompt-restructuring ablation matrix.
//!
//! Free-text replies are normalized to [`CanonicalAnswer`] with a token
//! scan: yes/no questions take the first "yes" or "no"/"not" token, digit
//! questions the first digit string or number-word phrase (configurable to
//! last). Unparseable replies score as wrong, never dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::augment::{self, TestQuestion};
use crate::coco_ingest::{AnnotationSet, CategoryTable, DetectionSet};
use crate::dataset_gen::{self, GenConfig};
use crate::numword;
use crate::pseudo_label::{self, FilterConfig, PseudoLabelTable};
use crate::question_grammar::{PromptRecord, QuestionKind};
use crate::responder::{respond_all, BlindOracle, ReferenceOracle, Responder, ResponderReply};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("records ({records}) and replies ({replies}) differ in length")]
    LengthMismatch { records: usize, replies: usize },
}

#[derive(Debug, Error)]
pub enum AblationError {
    #[error(transparent)]
    Gen(#[from] dataset_gen::GenError),
    #[error(transparent)]
    Augment(#[from] augment::AugmentError),
    #[error(transparent)]
    Respond(#[from] crate::responder::RespondError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// The canonical answer space: yes, no, a count in 0..=999, or unparseable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CanonicalAnswer {
    Yes,
    No,
    Count(u32),
    Unparseable,
}

impl CanonicalAnswer {
    /// Count constructor clamped to the number-word range.
    pub fn count(n: u32) -> CanonicalAnswer {
        CanonicalAnswer::Count(n.min(numword::MAX_SUPPORTED))
    }

    /// Canonical text form: "yes", "no", the count in words, or
    /// "unparseable".
    pub fn to_text(self) -> String {
        match self {
            CanonicalAnswer::Yes => "yes".to_string(),
            CanonicalAnswer::No => "no".to_string(),
            CanonicalAnswer::Count(n) => numword::to_words_saturating(n),
            CanonicalAnswer::Unparseable => "unparseable".to_string(),
        }
    }

    /// Strict whole-string parse of a canonical text form. Accepts digits
    /// or number words for counts; no scanning.
    pub fn from_text(text: &str) -> Option<CanonicalAnswer> {
        let t = text.trim().to_lowercase();
        match t.as_str() {
            "yes" => return Some(CanonicalAnswer::Yes),
            "no" => return Some(CanonicalAnswer::No),
            "unparseable" => return Some(CanonicalAnswer::Unparseable),
            _ => {}
        }
        if t.chars().all(|c| c.is_ascii_digit()) && !t.is_empty() {
            return t
                .parse::<u32>()
                .ok()
                .filter(|n| *n <= numword::MAX_SUPPORTED)
                .map(CanonicalAnswer::Count);
        }
        numword::from_words(&t).ok().map(CanonicalAnswer::Count)
    }
}

impl fmt::Display for CanonicalAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl Serialize for CanonicalAnswer {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_text())
    }
}

impl<'de> Deserialize<'de> for CanonicalAnswer {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        CanonicalAnswer::from_text(&text)
            .ok_or_else(|| serde::de::Error::custom(format!("not a canonical answer: {text:?}")))
    }
}

/// Which numeric mention of a reply decides the count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanDirection {
    #[default]
    First,
    Last,
}

/// Normalize a free-text reply for a question of the given kind, taking
/// the first numeric mention for digit kinds.
pub fn normalize_answer(text: &str, kind: QuestionKind) -> CanonicalAnswer {
    normalize_answer_with(text, kind, ScanDirection::First)
}

/// [`normalize_answer`] with an explicit scan direction for digit kinds.
pub fn normalize_answer_with(
    text: &str,
    kind: QuestionKind,
    scan: ScanDirection,
) -> CanonicalAnswer {
    let tokens = tokenize(text);
    if kind.is_digit() {
        let candidates = numeric_candidates(&tokens);
        let chosen = match scan {
            ScanDirection::First => candidates.first(),
            ScanDirection::Last => candidates.last(),
        };
        match chosen {
            Some((_, n)) => CanonicalAnswer::Count(*n),
            None => CanonicalAnswer::Unparseable,
        }
    } else {
        for token in &tokens {
            match token.as_str() {
                "yes" => return CanonicalAnswer::Yes,
                "no" | "not" => return CanonicalAnswer::No,
                _ => {}
            }
        }
        CanonicalAnswer::Unparseable
    }
}

fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    lowered
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// All numeric mentions as (token index, value), in token order.
fn numeric_candidates(tokens: &[String]) -> Vec<(usize, u32)> {
    let mut found = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let token = &tokens[i];
        if token.chars().all(|c| c.is_ascii_digit()) {
            if let Ok(n) = token.parse::<u32>() {
                if n <= numword::MAX_SUPPORTED {
                    found.push((i, n));
                }
            }
            i += 1;
            continue;
        }
        if numword::is_number_word(token) {
            let run_end = (i..tokens.len())
                .take_while(|j| numword::is_number_word(&tokens[*j]))
                .last()
                .map_or(i, |j| j + 1);
            // Longest parseable prefix of the run wins.
            let mut parsed = None;
            for k in (i + 1..=run_end).rev() {
                if let Ok(n) = numword::from_words(&tokens[i..k].join(" ")) {
                    parsed = Some((k, n));
                    break;
                }
            }
            if let Some((k, n)) = parsed {
                found.push((i, n));
                i = k;
                continue;
            }
            i = run_end.max(i + 1);
            continue;
        }
        i += 1;
    }
    found
}

/// Correct/total tally with its accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KindStats {
    pub correct: u64,
    pub total: u64,
    pub acc: f64,
}

impl KindStats {
    fn add(&mut self, correct: bool) {
        self.correct += correct as u64;
        self.total += 1;
        self.acc = self.correct as f64 / self.total as f64;
    }
}

/// One cell of the ablation matrix: detection assistance on/off, prompt
/// restructuring on/off.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct AblationCell {
    pub oda: bool,
    pub csp: bool,
}

impl fmt::Display for AblationCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |b: bool| if b { "on" } else { "off" };
        write!(f, "oda={},csp={}", mark(self.oda), mark(self.csp))
    }
}

/// Accuracy report: overall, per question kind, and for the merged
/// "yesno" and "digit" groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: KindStats,
    pub per_kind: BTreeMap<String, KindStats>,
    pub unparseable_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_echo: Option<AblationCell>,
}

impl EvalReport {
    pub fn overall_acc(&self) -> f64 {
        self.overall.acc
    }

    /// Stats for one of the merged groups ("yesno" or "digit") or a kind
    /// key; zeros when the group is absent.
    pub fn group(&self, key: &str) -> KindStats {
        self.per_kind.get(key).copied().unwrap_or_default()
    }

    /// Aligned plain-text rendering.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if let Some(cell) = self.config_echo {
            out.push_str(&format!("cell: {cell}\n"));
        }
        out.push_str(&format!(
            "{:<24} {:>8} {:>8} {:>8}\n",
            "group", "correct", "total", "acc"
        ));
        for (key, stats) in &self.per_kind {
            out.push_str(&format!(
                "{:<24} {:>8} {:>8} {:>8.4}\n",
                key, stats.correct, stats.total, stats.acc
            ));
        }
        out.push_str(&format!(
            "{:<24} {:>8} {:>8} {:>8.4}\n",
            "overall", self.overall.correct, self.overall.total, self.overall.acc
        ));
        out.push_str(&format!("unparseable: {}\n", self.unparseable_count));
        out
    }
}

fn group_key(kind: QuestionKind) -> &'static str {
    if kind.is_digit() {
        "digit"
    } else {
        "yesno"
    }
}

/// Score replies against the records' expected labels, position-aligned.
pub fn score(records: &[PromptRecord], replies: &[ResponderReply]) -> Result<EvalReport, EvalError> {
    if records.len() != replies.len() {
        return Err(EvalError::LengthMismatch {
            records: records.len(),
            replies: replies.len(),
        });
    }
    let mut overall = KindStats::default();
    let mut per_kind: BTreeMap<String, KindStats> = BTreeMap::new();
    let mut unparseable_count = 0;
    for (record, reply) in records.iter().zip(replies) {
        let kind = record.question.kind;
        let answer = normalize_answer(&reply.text, kind);
        if answer == CanonicalAnswer::Unparseable {
            unparseable_count += 1;
        }
        let correct = answer == record.expected;
        overall.add(correct);
        per_kind.entry(kind.name().to_string()).or_default().add(correct);
        per_kind.entry(group_key(kind).to_string()).or_default().add(correct);
    }
    Ok(EvalReport {
        overall,
        per_kind,
        unparseable_count,
        config_echo: None,
    })
}

/// Configuration for [`ablation_run`]: how to filter detections, how to
/// derive the question set from the annotations, and the blind baseline's
/// seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub filter: FilterConfig,
    pub gen: GenConfig,
    pub blind_seed: u64,
}

impl AblationConfig {
    pub fn new(gen: GenConfig) -> AblationConfig {
        AblationConfig {
            filter: FilterConfig::default(),
            blind_seed: gen.seed,
            gen,
        }
    }
}

/// One evaluated ablation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub cell: AblationCell,
    pub responder_id: String,
    pub report: EvalReport,
}

/// Accuracy difference of a cell relative to the (off, off) baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationDelta {
    pub cell: AblationCell,
    pub overall_delta: f64,
    pub digit_delta: f64,
    pub yesno_delta: f64,
}

/// Evaluated ablation matrix, cells in (oda, csp) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub cells: Vec<AblationOutcome>,
    pub deltas: Vec<AblationDelta>,
}

impl AblationTable {
    pub fn cell(&self, oda: bool, csp: bool) -> Option<&AblationOutcome> {
        self.cells
            .iter()
            .find(|c| c.cell == AblationCell { oda, csp })
    }

    /// Aligned plain-text rendering of the matrix.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<6} {:<6} {:>8} {:>10} {:>10} {:>12} {:<24}\n",
            "oda", "csp", "acc", "yesno_acc", "digit_acc", "unparseable", "responder"
        ));
        for outcome in &self.cells {
            let r = &outcome.report;
            out.push_str(&format!(
                "{:<6} {:<6} {:>8.4} {:>10.4} {:>10.4} {:>12} {:<24}\n",
                if outcome.cell.oda { "on" } else { "off" },
                if outcome.cell.csp { "on" } else { "off" },
                r.overall.acc,
                r.group("yesno").acc,
                r.group("digit").acc,
                r.unparseable_count,
                outcome.responder_id,
            ));
        }
        for delta in &self.deltas {
            out.push_str(&format!(
                "delta[{}] overall {:+.4}, digit {:+.4}, yesno {:+.4}\n",
                delta.cell, delta.overall_delta, delta.digit_delta, delta.yesno_delta
            ));
        }
        out
    }
}

/// Run the ablation matrix over a question set derived from the
/// annotations.
///
/// Per cell: detection assistance (oda) decides whether the reference
/// table comes from filtered detections or is empty (all references
/// zero); prompt restructuring (csp) decides whether prompts carry the
/// injected reference clause and are answered by the reference-following
/// oracle, or stay bare and are answered by the seeded blind baseline.
/// Expected labels always come from ground truth. Cells are evaluated in
/// (oda, csp) order and deltas are reported against the (off, off) cell
/// when present.
pub fn ablation_run(
    anns: &AnnotationSet,
    cats: &CategoryTable,
    detections: &DetectionSet,
    matrix: &BTreeSet<AblationCell>,
    cfg: &AblationConfig,
) -> Result<AblationTable, AblationError> {
    let dataset = dataset_gen::generate(anns, cats, &cfg.gen)?;
    let questions: Vec<TestQuestion> = dataset
        .records
        .iter()
        .map(|r| TestQuestion {
            question_id: r.question_id.clone(),
            image_id: r.image_id,
            text: r.question.source_text.clone(),
            gold: Some(r.expected),
        })
        .collect();

    let mut cells = Vec::new();
    for &cell in matrix {
        let table = if cell.oda {
            let kept = pseudo_label::filter_detections(detections, &cfg.filter);
            pseudo_label::count_pseudo_labels(&kept)
        } else {
            PseudoLabelTable::new()
        };
        let (records, responder): (Vec<PromptRecord>, Box<dyn Responder>) = if cell.csp {
            let records = augment::augment_test_set(&questions, &table, cats)?;
            (records, Box::new(ReferenceOracle::new(table, cats.clone())))
        } else {
            let records = augment::bare_records(&questions, cats)?;
            (records, Box::new(BlindOracle::new(cfg.blind_seed)))
        };
        let responder_id = responder.id().to_string();
        let replies = respond_all(responder.as_ref(), &records, 1)?;
        let mut report = score(&records, &replies)?;
        report.config_echo = Some(cell);
        cells.push(AblationOutcome {
            cell,
            responder_id,
            report,
        });
    }

    let baseline = cells
        .iter()
        .find(|c| c.cell == AblationCell { oda: false, csp: false })
        .map(|c| c.report.clone());
    let deltas = match baseline {
        Some(base) => cells
            .iter()
            .filter(|c| c.cell != (AblationCell { oda: false, csp: false }))
            .map(|c| AblationDelta {
                cell: c.cell,
                overall_delta: c.report.overall.acc - base.overall.acc,
                digit_delta: c.report.group("digit").acc - base.group("digit").acc,
                yesno_delta: c.report.group("yesno").acc - base.group("yesno").acc,
            })
            .collect(),
        None => Vec::new(),
    };

    Ok(AblationTable { cells, deltas })
}

/// The full four-cell matrix.
pub fn full_matrix() -> BTreeSet<AblationCell> {
    [(false, false), (false, true), (true, false), (true, true)]
        .into_iter()
        .map(|(oda, csp)| AblationCell { oda, csp })
        .collect()
}
