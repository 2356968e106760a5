//! Test-time augmentation: join a test question file with a pseudo-label
//! table and emit reference-injected prompts with derived expected labels.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coco_ingest::CategoryTable;
use crate::dataset_gen::expected_label;
use crate::eval::CanonicalAnswer;
use crate::jsonl::{self, JsonlError};
use crate::pseudo_label::PseudoLabelTable;
use crate::question_grammar::{parse_question, render_test_prompt, GrammarError, PromptRecord};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("question {question_id}: {source}")]
    ParseFailure {
        question_id: String,
        #[source]
        source: GrammarError,
    },
    #[error("question {question_id}: category {category:?} is not in the category table")]
    UnknownCategory {
        question_id: String,
        category: String,
    },
    #[error("duplicate question_id {0:?}")]
    DuplicateQuestionId(String),
    #[error(transparent)]
    File(#[from] JsonlError),
}

/// One test-set question: free text plus its image and optional gold
/// answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestQuestion {
    pub question_id: String,
    pub image_id: i64,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<CanonicalAnswer>,
}

fn check_unique_ids(questions: &[TestQuestion]) -> Result<(), AugmentError> {
    let mut seen = BTreeSet::new();
    for q in questions {
        if !seen.insert(q.question_id.as_str()) {
            return Err(AugmentError::DuplicateQuestionId(q.question_id.clone()));
        }
    }
    Ok(())
}

/// Read a JSONL question file, enforcing question_id uniqueness.
pub fn read_questions(path: &Path) -> Result<Vec<TestQuestion>, AugmentError> {
    let questions = jsonl::read(path)?;
    check_unique_ids(&questions)?;
    Ok(questions)
}

fn classify(
    question: &TestQuestion,
    cats: &CategoryTable,
) -> Result<crate::question_grammar::Question, AugmentError> {
    parse_question(&question.text, cats).map_err(|e| match e {
        GrammarError::UnknownCategory(category) => AugmentError::UnknownCategory {
            question_id: question.question_id.clone(),
            category,
        },
        source => AugmentError::ParseFailure {
            question_id: question.question_id.clone(),
            source,
        },
    })
}

/// Inject pseudo-label references into a test question set.
///
/// Digit prompts gain a "Reference answer:" clause with the table's count
/// for (image, category); missing cells count as zero. Yes/no prompts pass
/// through unchanged. `expected` keeps the gold answer when present;
/// otherwise it is derived from the pseudo count and the record is marked
/// pseudo-derived.
pub fn augment_test_set(
    questions: &[TestQuestion],
    table: &PseudoLabelTable,
    cats: &CategoryTable,
) -> Result<Vec<PromptRecord>, AugmentError> {
    check_unique_ids(questions)?;
    let mut records = Vec::with_capacity(questions.len());
    for question in questions {
        let parsed = classify(question, cats)?;
        let category_id = cats
            .id_by_name(&parsed.category)
            .expect("parse_question resolved against this table");
        let count = table.count(question.image_id, category_id);
        let prompt = render_test_prompt(&parsed.source_text, &parsed, count);
        let (expected, pseudo_derived) = match question.gold {
            Some(gold) => (gold, false),
            None => (expected_label(&parsed, count), true),
        };
        let reference_count = parsed.kind.is_digit().then_some(count);
        records.push(PromptRecord {
            question_id: question.question_id.clone(),
            prompt,
            image_id: question.image_id,
            expected,
            question: parsed,
            reference_count,
            pseudo_derived,
        });
    }
    Ok(records)
}

/// Classify questions without injecting references: prompts stay bare.
///
/// Used for prompt-restructuring-off ablation cells. Questions lacking a
/// gold answer score as never-correct (expected Unparseable).
pub fn bare_records(
    questions: &[TestQuestion],
    cats: &CategoryTable,
) -> Result<Vec<PromptRecord>, AugmentError> {
    check_unique_ids(questions)?;
    let mut records = Vec::with_capacity(questions.len());
    for question in questions {
        let parsed = classify(question, cats)?;
        records.push(PromptRecord {
            question_id: question.question_id.clone(),
            prompt: parsed.source_text.clone(),
            image_id: question.image_id,
            expected: question.gold.unwrap_or(CanonicalAnswer::Unparseable),
            question: parsed,
            reference_count: None,
            pseudo_derived: false,
        });
    }
    Ok(records)
}
