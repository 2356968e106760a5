//! Shared synthetic corpus for the integration tests. Each test binary
//! compiles its own copy and uses a different slice of it.
#![allow(dead_code)]
//!
//! Sixty images over the full 80-name vocabulary, three categories per
//! image with one to four boxes each. Two detection sets derive from the
//! ground truth: `clean` copies every box at score 0.97, `noisy` drops
//! each box with probability 0.1 and adds 10% spurious boxes at score
//! 0.5. Everything is seeded, so every call reproduces the same corpus.

use odac_core::coco_ingest::{AnnotationRecord, BBox, DetectionRecord};
use odac_core::{
    AnnotationSet, CategoryTable, DeltaSign, DetectionSet, PromptRecord, Question, QuestionKind,
};
use rand::prelude::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, HashMap};

pub const CORPUS_SEED: u64 = 0x0dac;
pub const IMAGE_COUNT: i64 = 60;
pub const CLEAN_SCORE: f64 = 0.97;
pub const SPURIOUS_SCORE: f64 = 0.5;

pub struct Corpus {
    pub cats: CategoryTable,
    pub anns: AnnotationSet,
    pub clean: DetectionSet,
    pub noisy: DetectionSet,
}

fn random_bbox(rng: &mut ChaCha8Rng) -> BBox {
    BBox {
        x: rng.random_range(0.0..500.0),
        y: rng.random_range(0.0..350.0),
        w: rng.random_range(20.0..120.0),
        h: rng.random_range(20.0..120.0),
    }
}

pub fn corpus() -> Corpus {
    let cats = CategoryTable::coco80();
    let cat_ids: Vec<u32> = cats.iter().map(|(id, _)| id).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED);
    let mut anns = AnnotationSet::default();
    for image_id in 1..=IMAGE_COUNT {
        let mut chosen = BTreeSet::new();
        while chosen.len() < 3 {
            chosen.insert(*cat_ids.choose(&mut rng).unwrap());
        }
        for category_id in chosen {
            let boxes = rng.random_range(1..=4);
            for _ in 0..boxes {
                anns.push(AnnotationRecord {
                    image_id,
                    category_id,
                    bbox: random_bbox(&mut rng),
                });
            }
        }
    }

    let mut clean = DetectionSet::default();
    for rec in anns.records() {
        clean.push(DetectionRecord {
            image_id: rec.image_id,
            category_id: rec.category_id,
            bbox: rec.bbox.clone(),
            score: CLEAN_SCORE,
        });
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED ^ 1);
    let mut noisy = DetectionSet::default();
    for rec in anns.records() {
        if !noise_rng.random_bool(0.1) {
            noisy.push(DetectionRecord {
                image_id: rec.image_id,
                category_id: rec.category_id,
                bbox: rec.bbox.clone(),
                score: CLEAN_SCORE,
            });
        }
    }
    let spurious = anns.len() / 10;
    for _ in 0..spurious {
        noisy.push(DetectionRecord {
            image_id: noise_rng.random_range(1..=IMAGE_COUNT),
            category_id: *cat_ids.choose(&mut noise_rng).unwrap(),
            bbox: random_bbox(&mut noise_rng),
            score: SPURIOUS_SCORE,
        });
    }

    Corpus {
        cats,
        anns,
        clean,
        noisy,
    }
}

/// Build a question of any kind through its public constructor; the delta
/// and sign apply only to the counterfactual kind.
pub fn build_question(kind: QuestionKind, category: &str, delta: u32, sign: DeltaSign) -> Question {
    match kind {
        QuestionKind::YesNoPlain => Question::yesno_plain(category),
        QuestionKind::YesNoRemoval => Question::yesno_removal(category),
        QuestionKind::DigitPlain => Question::digit_plain(category),
        QuestionKind::DigitCounterfactual => Question::digit_counterfactual(category, delta, sign),
    }
    .unwrap()
}

fn count_map<I: Iterator<Item = (i64, u32)>>(pairs: I) -> HashMap<(i64, u32), i64> {
    let mut map = HashMap::new();
    for key in pairs {
        *map.entry(key).or_insert(0) += 1;
    }
    map
}

fn digit_value(kind: QuestionKind, sign: DeltaSign, delta: u32, base: i64) -> i64 {
    match kind {
        QuestionKind::DigitPlain => base,
        QuestionKind::DigitCounterfactual => match sign {
            DeltaSign::Add => base + i64::from(delta),
            DeltaSign::Subtract => (base - i64::from(delta)).max(0),
        },
        _ => panic!("not a digit kind"),
    }
}

/// Predict the reference-following responder's digit accuracy from flat
/// maps and integer arithmetic, without the pseudo-label or eval modules:
/// the reply repeats the question's arithmetic on the filtered detection
/// count, the gold label applies it to the ground-truth count, and a
/// record scores correct when the two values agree.
pub fn predict_reference_digit_stats(
    anns: &AnnotationSet,
    dets: &DetectionSet,
    cats: &CategoryTable,
    records: &[PromptRecord],
    score_min: f64,
    ratio_min: f64,
) -> (u64, u64) {
    let gt = count_map(anns.records().iter().map(|a| (a.image_id, a.category_id)));
    let kept = dets.records().iter().filter(|d| {
        let lo = d.bbox.w.min(d.bbox.h);
        let hi = d.bbox.w.max(d.bbox.h);
        let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
        d.score >= score_min && ratio >= ratio_min
    });
    let pseudo = count_map(kept.map(|d| (d.image_id, d.category_id)));

    let (mut correct, mut total) = (0u64, 0u64);
    for r in records {
        let q = &r.question;
        if !q.kind.is_digit() {
            continue;
        }
        total += 1;
        let key = (
            r.image_id,
            cats.id_by_name(&q.category).expect("known category"),
        );
        let gold = digit_value(q.kind, q.delta_sign, q.delta, *gt.get(&key).unwrap_or(&0));
        let replied = digit_value(q.kind, q.delta_sign, q.delta, *pseudo.get(&key).unwrap_or(&0));
        if gold == replied {
            correct += 1;
        }
    }
    (correct, total)
}
