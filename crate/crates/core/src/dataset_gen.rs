//! Fine-tuning dataset generation: seeded sampling of (image, category)
//! pairs from ground-truth annotations, question synthesis across all four
//! families, and expected-label derivation.
//!
//! Generation is a pure function of (annotations, categories, config): a
//! single seeded RNG stream drives every draw, and all iteration orders
//! are sorted, so equal inputs yield byte-identical datasets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::coco_ingest::{AnnotationSet, CategoryTable};
use crate::eval::CanonicalAnswer;
use crate::pseudo_label;
use crate::question_grammar::{
    render_training_prompt, DeltaSign, PromptRecord, Question, QuestionKind, MAX_DELTA,
};

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("annotation set holds no usable (image, category) pairs")]
    EmptyAnnotationSet,
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
}

/// Yes/no-to-digit question ratio, written "A:B".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    num: u32,
    den: u32,
}

impl Ratio {
    /// A ratio in (0, 1]: `num ≥ 1`, `den ≥ num`.
    pub fn new(num: u32, den: u32) -> Result<Ratio, GenError> {
        if num == 0 || den == 0 || num > den {
            return Err(GenError::InvalidConfig(format!(
                "ratio {num}:{den} must satisfy 0 < A:B <= 1"
            )));
        }
        Ok(Ratio { num, den })
    }

    pub fn num(self) -> u32 {
        self.num
    }

    pub fn den(self) -> u32 {
        self.den
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Yes/no record count for a digit count: `max(1, round(ratio × n))`,
    /// rounding half up in integer arithmetic.
    pub fn yesno_count(self, digit_count: u64) -> u64 {
        let num = self.num as u64;
        let den = self.den as u64;
        ((2 * num * digit_count + den) / (2 * den)).max(1)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.num, self.den)
    }
}

impl FromStr for Ratio {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Ratio, GenError> {
        let bad = || GenError::InvalidConfig(format!("ratio {s:?} is not of the form A:B"));
        let (num, den) = s.trim().split_once(':').ok_or_else(bad)?;
        Ratio::new(
            num.trim().parse().map_err(|_| bad())?,
            den.trim().parse().map_err(|_| bad())?,
        )
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

fn default_ratio() -> Ratio {
    Ratio { num: 1, den: 100 }
}

fn default_delta_max() -> u32 {
    MAX_DELTA
}

fn default_counterfactual_fraction() -> f64 {
    0.5
}

fn default_zero_fraction() -> f64 {
    0.1
}

/// Generation parameters. `total_digit_questions` and `seed` are required;
/// the rest default to the standard configuration (ratio 1:100, deltas in
/// 0..=5, half the digit questions counterfactual, 10% zero-count pairs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub total_digit_questions: u32,
    #[serde(default = "default_ratio")]
    pub yesno_ratio: Ratio,
    #[serde(default = "default_delta_max")]
    pub delta_max: u32,
    pub seed: u64,
    #[serde(default = "default_counterfactual_fraction")]
    pub counterfactual_fraction: f64,
    #[serde(default = "default_zero_fraction")]
    pub zero_fraction: f64,
}

impl GenConfig {
    pub fn new(total_digit_questions: u32, seed: u64) -> GenConfig {
        GenConfig {
            total_digit_questions,
            yesno_ratio: default_ratio(),
            delta_max: default_delta_max(),
            seed,
            counterfactual_fraction: default_counterfactual_fraction(),
            zero_fraction: default_zero_fraction(),
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.total_digit_questions == 0 {
            return Err(GenError::InvalidConfig(
                "total_digit_questions must be positive".to_string(),
            ));
        }
        if self.delta_max > MAX_DELTA {
            return Err(GenError::InvalidConfig(format!(
                "delta_max {} exceeds the grammar bound {MAX_DELTA}",
                self.delta_max
            )));
        }
        for (name, value) in [
            ("counterfactual_fraction", self.counterfactual_fraction),
            ("zero_fraction", self.zero_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(GenError::InvalidConfig(format!(
                    "{name} {value} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Run manifest: config echo, per-kind record counts, and warnings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenManifest {
    pub config: GenConfig,
    pub seed: u64,
    pub counts: BTreeMap<String, u64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedDataset {
    pub records: Vec<PromptRecord>,
    pub manifest: GenManifest,
}

/// The expected canonical answer for a question given its base count
/// (ground-truth at training time, pseudo at test time).
///
/// Digit questions answer the count, with counterfactual arithmetic
/// clamped at zero. Plain yes/no asks about presence (yes iff ≥ 1);
/// removal yes/no removes one instance (yes iff ≥ 2).
pub fn expected_label(q: &Question, base_count: u32) -> CanonicalAnswer {
    match q.kind {
        QuestionKind::DigitPlain => CanonicalAnswer::count(base_count),
        QuestionKind::DigitCounterfactual => {
            let value = match q.delta_sign {
                DeltaSign::Add => base_count.saturating_add(q.delta),
                DeltaSign::Subtract => base_count.saturating_sub(q.delta),
            };
            CanonicalAnswer::count(value)
        }
        QuestionKind::YesNoPlain => {
            if base_count >= 1 {
                CanonicalAnswer::Yes
            } else {
                CanonicalAnswer::No
            }
        }
        QuestionKind::YesNoRemoval => {
            if base_count >= 2 {
                CanonicalAnswer::Yes
            } else {
                CanonicalAnswer::No
            }
        }
    }
}

/// One sampled (image, category, ground-truth count) target.
type Pair = (i64, u32, u32);

struct Sampler<'a> {
    positive: Vec<Pair>,
    image_ids: Vec<i64>,
    category_ids: Vec<u32>,
    gt: &'a pseudo_label::PseudoLabelTable,
    zero_fallbacks: u64,
}

impl<'a> Sampler<'a> {
    fn positive_with_replacement(&self, rng: &mut ChaCha8Rng) -> Pair {
        self.positive[rng.random_range(0..self.positive.len())]
    }

    /// Rejection-sample a pair the annotations do not cover; falls back to
    /// a positive pair when none is found in 1000 tries.
    fn zero_pair(&mut self, rng: &mut ChaCha8Rng) -> Pair {
        for _ in 0..1000 {
            let image_id = self.image_ids[rng.random_range(0..self.image_ids.len())];
            let category_id = self.category_ids[rng.random_range(0..self.category_ids.len())];
            if self.gt.count(image_id, category_id) == 0 {
                return (image_id, category_id, 0);
            }
        }
        self.zero_fallbacks += 1;
        self.positive_with_replacement(rng)
    }
}

/// Generate a fine-tuning dataset. Deterministic given the seed.
pub fn generate(
    anns: &AnnotationSet,
    cats: &CategoryTable,
    cfg: &GenConfig,
) -> Result<GeneratedDataset, GenError> {
    cfg.validate()?;
    let gt = pseudo_label::ground_truth_counts(anns);
    let positive: Vec<Pair> = gt
        .entries()
        .filter(|(_, category_id, _)| cats.contains(*category_id))
        .map(|(image_id, category_id, count)| (image_id, category_id, count))
        .collect();
    if positive.is_empty() {
        return Err(GenError::EmptyAnnotationSet);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut warnings = Vec::new();
    let mut sampler = Sampler {
        image_ids: anns.image_ids().collect(),
        category_ids: cats.iter().map(|(id, _)| id).collect(),
        positive,
        gt: &gt,
        zero_fallbacks: 0,
    };

    let n_digit = cfg.total_digit_questions as usize;
    let n_zero = (cfg.zero_fraction * n_digit as f64).round() as usize;
    let n_positive = n_digit - n_zero.min(n_digit);

    // Distinct positive pairs first, with replacement beyond the pool.
    if n_positive > sampler.positive.len() {
        warnings.push(format!(
            "only {} distinct (image, category) pairs for {} positive draws; sampling with replacement",
            sampler.positive.len(),
            n_positive
        ));
    }
    let mut order: Vec<usize> = (0..sampler.positive.len()).collect();
    order.shuffle(&mut rng);
    let mut targets: Vec<Pair> = Vec::with_capacity(n_digit);
    for i in 0..n_positive {
        match order.get(i) {
            Some(&idx) => targets.push(sampler.positive[idx]),
            None => targets.push(sampler.positive_with_replacement(&mut rng)),
        }
    }
    for _ in 0..n_digit - n_positive {
        let pair = sampler.zero_pair(&mut rng);
        targets.push(pair);
    }
    if sampler.zero_fallbacks > 0 {
        warnings.push(format!(
            "{} zero-count draws fell back to positive pairs (no uncovered pair found)",
            sampler.zero_fallbacks
        ));
    }
    targets.shuffle(&mut rng);

    let mut records = Vec::with_capacity(targets.len());
    for (image_id, category_id, count) in targets {
        let name = cats.name(category_id).expect("pair filtered against table");
        let question = if rng.random_bool(cfg.counterfactual_fraction) {
            let delta = rng.random_range(0..=cfg.delta_max);
            let sign = if rng.random_bool(0.5) {
                DeltaSign::Add
            } else {
                DeltaSign::Subtract
            };
            Question::digit_counterfactual(name, delta, sign)
        } else {
            Question::digit_plain(name)
        }
        .expect("category from table, delta within bound");
        push_record(&mut records, question, image_id, count, Some(count));
    }

    let n_yesno = cfg.yesno_ratio.yesno_count(n_digit as u64);
    for j in 0..n_yesno {
        let (image_id, category_id, count) = if rng.random_bool(cfg.zero_fraction) {
            sampler.zero_pair(&mut rng)
        } else {
            sampler.positive_with_replacement(&mut rng)
        };
        let name = cats.name(category_id).expect("pair filtered against table");
        let question = if j % 2 == 0 {
            Question::yesno_plain(name)
        } else {
            Question::yesno_removal(name)
        }
        .expect("category from table");
        push_record(&mut records, question, image_id, count, None);
    }

    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for record in &records {
        *counts.entry(record.question.kind.name().to_string()).or_default() += 1;
    }
    Ok(GeneratedDataset {
        records,
        manifest: GenManifest {
            config: cfg.clone(),
            seed: cfg.seed,
            counts,
            warnings,
        },
    })
}

fn push_record(
    records: &mut Vec<PromptRecord>,
    question: Question,
    image_id: i64,
    base_count: u32,
    reference: Option<u32>,
) {
    let prompt = render_training_prompt(&question, reference)
        .expect("reference present exactly for digit kinds");
    let expected = expected_label(&question, base_count);
    records.push(PromptRecord {
        question_id: format!("gen-{:06}", records.len()),
        prompt,
        image_id,
        expected,
        question,
        reference_count: reference,
        pseudo_derived: false,
    });
}

/// Ratio and composition report for a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub digit_count: u64,
    pub yesno_count: u64,
    pub per_kind: BTreeMap<String, u64>,
    pub delta_histogram: BTreeMap<u32, u64>,
    pub observed_ratio: Option<f64>,
    pub satisfied: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Check a dataset's composition against its own manifest.
pub fn validate_ratio(ds: &GeneratedDataset) -> RatioReport {
    let mut per_kind: BTreeMap<String, u64> = BTreeMap::new();
    let mut delta_histogram: BTreeMap<u32, u64> = BTreeMap::new();
    let mut digit_count = 0u64;
    let mut yesno_count = 0u64;
    for record in &ds.records {
        let kind = record.question.kind;
        *per_kind.entry(kind.name().to_string()).or_default() += 1;
        if kind.is_digit() {
            digit_count += 1;
        } else {
            yesno_count += 1;
        }
        if kind == QuestionKind::DigitCounterfactual {
            *delta_histogram.entry(record.question.delta).or_default() += 1;
        }
    }

    let cfg = &ds.manifest.config;
    let mut reason = None;
    if ds.records.is_empty() {
        reason = Some("empty".to_string());
    } else if digit_count != cfg.total_digit_questions as u64 {
        reason = Some(format!(
            "expected {} digit records, found {digit_count}",
            cfg.total_digit_questions
        ));
    } else if yesno_count != cfg.yesno_ratio.yesno_count(digit_count) {
        reason = Some(format!(
            "expected {} yes/no records for ratio {}, found {yesno_count}",
            cfg.yesno_ratio.yesno_count(digit_count),
            cfg.yesno_ratio
        ));
    } else if let Some(delta) = delta_histogram.keys().find(|d| **d > cfg.delta_max) {
        reason = Some(format!("delta {delta} exceeds delta_max {}", cfg.delta_max));
    }

    RatioReport {
        digit_count,
        yesno_count,
        per_kind,
        delta_histogram,
        observed_ratio: (digit_count > 0).then(|| yesno_count as f64 / digit_count as f64),
        satisfied: reason.is_none(),
        reason,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coco_ingest::AnnotationRecord;
    use crate::coco_ingest::BBox;

    /// Independent enumeration of the label rules, kept deliberately
    /// separate from expected_label's arithmetic: signed i64 math and
    /// explicit presence branches.
    fn label_oracle(kind: QuestionKind, sign: DeltaSign, delta: u32, base: u32) -> CanonicalAnswer {
        match kind {
            QuestionKind::YesNoPlain => {
                if base == 0 {
                    CanonicalAnswer::No
                } else {
                    CanonicalAnswer::Yes
                }
            }
            QuestionKind::YesNoRemoval => {
                if base as i64 - 1 >= 1 {
                    CanonicalAnswer::Yes
                } else {
                    CanonicalAnswer::No
                }
            }
            QuestionKind::DigitPlain => CanonicalAnswer::Count(base),
            QuestionKind::DigitCounterfactual => {
                let signed = match sign {
                    DeltaSign::Add => base as i64 + delta as i64,
                    DeltaSign::Subtract => base as i64 - delta as i64,
                };
                CanonicalAnswer::Count(signed.max(0) as u32)
            }
        }
    }

    fn question_for(kind: QuestionKind, sign: DeltaSign, delta: u32) -> Question {
        match kind {
            QuestionKind::YesNoPlain => Question::yesno_plain("cat"),
            QuestionKind::YesNoRemoval => Question::yesno_removal("cat"),
            QuestionKind::DigitPlain => Question::digit_plain("cat"),
            QuestionKind::DigitCounterfactual => {
                Question::digit_counterfactual("cat", delta, sign)
            }
        }
        .unwrap()
    }

    #[test]
    fn labels_match_enumeration_oracle() {
        for kind in QuestionKind::ALL {
            for sign in [DeltaSign::Add, DeltaSign::Subtract] {
                for delta in 0..=MAX_DELTA {
                    for base in 0..=20u32 {
                        let q = question_for(kind, sign, delta);
                        assert_eq!(
                            expected_label(&q, base),
                            label_oracle(kind, sign, delta, base),
                            "kind {kind:?} sign {sign:?} delta {delta} base {base}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn label_spot_checks() {
        let cf =
            Question::digit_counterfactual("cat", 2, DeltaSign::Add).unwrap();
        assert_eq!(expected_label(&cf, 3), CanonicalAnswer::Count(5));
        let sub = Question::digit_counterfactual("cat", 4, DeltaSign::Subtract).unwrap();
        assert_eq!(expected_label(&sub, 1), CanonicalAnswer::Count(0));
        let plain = Question::yesno_plain("cat").unwrap();
        assert_eq!(expected_label(&plain, 0), CanonicalAnswer::No);
        let removal = Question::yesno_removal("cat").unwrap();
        assert_eq!(expected_label(&removal, 1), CanonicalAnswer::No);
        assert_eq!(expected_label(&removal, 2), CanonicalAnswer::Yes);
    }

    fn bbox() -> BBox {
        BBox { x: 0.0, y: 0.0, w: 10.0, h: 10.0 }
    }

    // Category 4 is never annotated, so zero-count pairs always exist.
    fn small_anns() -> (AnnotationSet, CategoryTable) {
        let cats =
            CategoryTable::new([(1u32, "person"), (2, "bicycle"), (3, "cat"), (4, "dog")])
                .unwrap();
        let mut records = Vec::new();
        for image_id in 1..=8i64 {
            for category_id in 1..=3u32 {
                let copies = ((image_id as u32 + category_id) % 4) + 1;
                for _ in 0..copies {
                    records.push(AnnotationRecord {
                        image_id,
                        category_id,
                        bbox: bbox(),
                    });
                }
            }
        }
        (records.into_iter().collect(), cats)
    }

    #[test]
    fn ratio_one_to_hundred_yields_one_yesno() {
        let (anns, cats) = small_anns();
        let cfg = GenConfig::new(100, 7);
        let ds = generate(&anns, &cats, &cfg).unwrap();
        let digits = ds.records.iter().filter(|r| r.question.kind.is_digit()).count();
        let yesno = ds.records.len() - digits;
        assert_eq!(digits, 100);
        assert_eq!(yesno, 1);
        assert!(validate_ratio(&ds).satisfied);
    }

    #[test]
    fn ratio_one_to_one_matches_digit_count() {
        let (anns, cats) = small_anns();
        let mut cfg = GenConfig::new(10, 7);
        cfg.yesno_ratio = Ratio::new(1, 1).unwrap();
        let ds = generate(&anns, &cats, &cfg).unwrap();
        let yesno = ds.records.iter().filter(|r| !r.question.kind.is_digit()).count();
        assert_eq!(yesno, 10);
        assert!(validate_ratio(&ds).satisfied);
    }

    #[test]
    fn generation_is_deterministic() {
        let (anns, cats) = small_anns();
        let cfg = GenConfig::new(40, 99);
        let a = generate(&anns, &cats, &cfg).unwrap();
        let b = generate(&anns, &cats, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a.records).unwrap(),
            serde_json::to_string(&b.records).unwrap()
        );
        assert_eq!(a.manifest, b.manifest);
    }

    #[test]
    fn seeds_change_the_sample() {
        let (anns, cats) = small_anns();
        let a = generate(&anns, &cats, &GenConfig::new(40, 1)).unwrap();
        let b = generate(&anns, &cats, &GenConfig::new(40, 2)).unwrap();
        assert_ne!(
            serde_json::to_string(&a.records).unwrap(),
            serde_json::to_string(&b.records).unwrap()
        );
    }

    #[test]
    fn labels_rederive_from_ground_truth() {
        let (anns, cats) = small_anns();
        let ds = generate(&anns, &cats, &GenConfig::new(60, 3)).unwrap();
        let gt = pseudo_label::ground_truth_counts(&anns);
        for record in &ds.records {
            let category_id = cats.id_by_name(&record.question.category).unwrap();
            let base = gt.count(record.image_id, category_id);
            assert_eq!(record.expected, expected_label(&record.question, base));
            if record.question.kind.is_digit() {
                assert_eq!(record.reference_count, Some(base));
                assert!(record.prompt.contains("Reference answer:"));
            } else {
                assert_eq!(record.reference_count, None);
                assert!(!record.prompt.contains("Reference answer:"));
            }
        }
    }

    #[test]
    fn deltas_respect_the_bound() {
        let (anns, cats) = small_anns();
        let mut cfg = GenConfig::new(80, 11);
        cfg.delta_max = 3;
        let ds = generate(&anns, &cats, &cfg).unwrap();
        for record in &ds.records {
            assert!(record.question.delta <= 3);
        }
    }

    #[test]
    fn subtraction_clamps_at_zero() {
        let (anns, cats) = small_anns();
        let mut cfg = GenConfig::new(200, 5);
        cfg.counterfactual_fraction = 1.0;
        let ds = generate(&anns, &cats, &cfg).unwrap();
        let mut clamped = 0;
        for record in &ds.records {
            let q = &record.question;
            if q.kind != QuestionKind::DigitCounterfactual || q.delta_sign != DeltaSign::Subtract {
                continue;
            }
            let base = record.reference_count.unwrap() as i64;
            let want = (base - q.delta as i64).max(0) as u32;
            assert_eq!(record.expected, CanonicalAnswer::Count(want));
            if base < q.delta as i64 {
                clamped += 1;
            }
        }
        assert!(clamped > 0, "seed should produce at least one clamped case");
    }

    #[test]
    fn small_pools_warn_and_still_fill() {
        let cats = CategoryTable::new([(1u32, "person")]).unwrap();
        let anns: AnnotationSet = vec![AnnotationRecord {
            image_id: 1,
            category_id: 1,
            bbox: bbox(),
        }]
        .into_iter()
        .collect();
        let mut cfg = GenConfig::new(50, 2);
        cfg.zero_fraction = 0.0;
        let ds = generate(&anns, &cats, &cfg).unwrap();
        assert_eq!(
            ds.records.iter().filter(|r| r.question.kind.is_digit()).count(),
            50
        );
        assert!(ds
            .manifest
            .warnings
            .iter()
            .any(|w| w.contains("sampling with replacement")));
    }

    #[test]
    fn empty_annotations_are_rejected() {
        let cats = CategoryTable::new([(1u32, "person")]).unwrap();
        let anns: AnnotationSet = Vec::<AnnotationRecord>::new().into_iter().collect();
        assert_eq!(
            generate(&anns, &cats, &GenConfig::new(5, 0)).unwrap_err(),
            GenError::EmptyAnnotationSet
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let (anns, cats) = small_anns();
        let mut cfg = GenConfig::new(0, 0);
        assert!(matches!(
            generate(&anns, &cats, &cfg),
            Err(GenError::InvalidConfig(_))
        ));
        cfg = GenConfig::new(5, 0);
        cfg.delta_max = MAX_DELTA + 1;
        assert!(matches!(
            generate(&anns, &cats, &cfg),
            Err(GenError::InvalidConfig(_))
        ));
        cfg = GenConfig::new(5, 0);
        cfg.zero_fraction = 1.5;
        assert!(matches!(
            generate(&anns, &cats, &cfg),
            Err(GenError::InvalidConfig(_))
        ));
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!("1:100".parse::<Ratio>().unwrap(), default_ratio());
        assert_eq!(" 1 : 10 ".parse::<Ratio>().unwrap(), Ratio::new(1, 10).unwrap());
        assert!("0:5".parse::<Ratio>().is_err());
        assert!("3:2".parse::<Ratio>().is_err());
        assert!("5".parse::<Ratio>().is_err());
        assert!("a:b".parse::<Ratio>().is_err());
        assert_eq!(Ratio::new(1, 100).unwrap().to_string(), "1:100");
    }

    #[test]
    fn ratio_serde_uses_colon_form() {
        let json = serde_json::to_string(&default_ratio()).unwrap();
        assert_eq!(json, "\"1:100\"");
        let back: Ratio = serde_json::from_str("\"1:10\"").unwrap();
        assert_eq!(back, Ratio::new(1, 10).unwrap());
    }

    #[test]
    fn yesno_count_arithmetic() {
        let r = default_ratio();
        assert_eq!(r.yesno_count(100), 1);
        assert_eq!(r.yesno_count(198), 2);
        assert_eq!(r.yesno_count(1), 1);
        assert_eq!(Ratio::new(1, 1).unwrap().yesno_count(10), 10);
        assert_eq!(Ratio::new(1, 10).unwrap().yesno_count(100), 10);
        assert_eq!(Ratio::new(1, 10).unwrap().yesno_count(25), 3);
    }

    #[test]
    fn validate_ratio_flags_mismatch() {
        let (anns, cats) = small_anns();
        let mut ds = generate(&anns, &cats, &GenConfig::new(20, 4)).unwrap();
        let empty = GeneratedDataset {
            records: Vec::new(),
            manifest: ds.manifest.clone(),
        };
        let report = validate_ratio(&empty);
        assert!(!report.satisfied);
        assert_eq!(report.reason.as_deref(), Some("empty"));

        let extra = ds.records.iter().find(|r| !r.question.kind.is_digit()).unwrap().clone();
        ds.records.push(extra);
        assert!(!validate_ratio(&ds).satisfied);
    }

    #[test]
    fn question_ids_are_sequential_and_unique() {
        let (anns, cats) = small_anns();
        let ds = generate(&anns, &cats, &GenConfig::new(30, 8)).unwrap();
        for (i, record) in ds.records.iter().enumerate() {
            assert_eq!(record.question_id, format!("gen-{i:06}"));
        }
    }

    #[test]
    fn zero_fraction_produces_zero_count_targets() {
        let (anns, cats) = small_anns();
        let mut cfg = GenConfig::new(100, 13);
        cfg.zero_fraction = 0.2;
        let ds = generate(&anns, &cats, &cfg).unwrap();
        let zeros = ds
            .records
            .iter()
            .filter(|r| r.question.kind.is_digit() && r.reference_count == Some(0))
            .count();
        assert_eq!(zeros, 20);
    }
}
