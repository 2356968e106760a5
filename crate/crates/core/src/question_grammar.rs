//! Parsing and rendering of the four counting-question families.
//!
//! The families, with `<cat>` a category name, `<cats>` its plural, `<d>` a
//! small count in words, and `<ref>` a reference count in words:
//!
//! 1. yes/no plain: `Is there a <cat> in the image?`
//! 2. yes/no removal: `Would there be a <cat> in the image once the <cat>
//!    has been removed from the scene?`
//! 3. digit plain: `How many <cats> would there be in the image?`, rendered
//!    for training as `... image? Reference answer: <ref>.`
//! 4. digit counterfactual: `How many <cats> would there be in the image?
//!    Reference answer: <ref>. How many <cats> would there be in the image
//!    now that <d> more <cats> have been moved into the scene?` (addition)
//!    or `... now that <d> <cats> have been removed from the scene?`
//!    (subtraction).
//!
//! Template strings are compiled in and are part of the crate's contract.
//! Parsing is case-insensitive and whitespace-tolerant, accepts digits or
//! number words for `<d>`, accepts `picture`/`scene` where a rendered
//! template says `image`, accepts the addition variant `... if someone
//! added <d> more <cats> in the picture?`, and tolerates the misspelling
//! `how mant`. Rendering is deterministic and always canonical: word-form
//! numbers, `image`, `many`.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coco_ingest::CategoryTable;
use crate::eval::CanonicalAnswer;
use crate::numword;

/// Largest counterfactual delta the grammar admits.
pub const MAX_DELTA: u32 = 5;

#[derive(Debug, Error, PartialEq)]
pub enum GrammarError {
    #[error("text fits no question template: {0:?}")]
    UnrecognizedTemplate(String),
    #[error("category {0:?} is not in the category table")]
    UnknownCategory(String),
    #[error("counterfactual delta {0} outside 0..={MAX_DELTA}")]
    DeltaOutOfRange(u64),
    #[error("digit question rendered without a reference count")]
    MissingReference,
    #[error("yes/no question rendered with a reference count")]
    SpuriousReference,
}

/// The four question families.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    YesNoPlain,
    YesNoRemoval,
    DigitPlain,
    DigitCounterfactual,
}

impl QuestionKind {
    pub const ALL: [QuestionKind; 4] = [
        QuestionKind::YesNoPlain,
        QuestionKind::YesNoRemoval,
        QuestionKind::DigitPlain,
        QuestionKind::DigitCounterfactual,
    ];

    /// True for the two families answered with a count.
    pub fn is_digit(self) -> bool {
        matches!(self, QuestionKind::DigitPlain | QuestionKind::DigitCounterfactual)
    }

    /// Stable snake_case name, matching the serialized form.
    pub fn name(self) -> &'static str {
        match self {
            QuestionKind::YesNoPlain => "yes_no_plain",
            QuestionKind::YesNoRemoval => "yes_no_removal",
            QuestionKind::DigitPlain => "digit_plain",
            QuestionKind::DigitCounterfactual => "digit_counterfactual",
        }
    }
}

/// Direction of the counterfactual change.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum DeltaSign {
    Add,
    Subtract,
}

/// Structured parse of one question.
///
/// `delta` and `delta_sign` are meaningful only for
/// [`QuestionKind::DigitCounterfactual`]; other kinds carry `0` / `Add`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub kind: QuestionKind,
    pub category: String,
    pub delta: u32,
    #[serde(rename = "sign")]
    pub delta_sign: DeltaSign,
    /// The bare question text this value was parsed from (or the canonical
    /// bare rendering, for synthesized questions). Not serialized.
    #[serde(skip)]
    pub source_text: String,
}

impl Question {
    fn synthesize(
        kind: QuestionKind,
        category: &str,
        delta: u32,
        delta_sign: DeltaSign,
    ) -> Result<Question, GrammarError> {
        let category = category.trim().to_lowercase();
        if category.is_empty() {
            return Err(GrammarError::UnknownCategory(category));
        }
        if delta > MAX_DELTA {
            return Err(GrammarError::DeltaOutOfRange(delta as u64));
        }
        let mut q = Question {
            kind,
            category,
            delta,
            delta_sign,
            source_text: String::new(),
        };
        q.source_text = render_bare_question(&q);
        Ok(q)
    }

    pub fn yesno_plain(category: &str) -> Result<Question, GrammarError> {
        Question::synthesize(QuestionKind::YesNoPlain, category, 0, DeltaSign::Add)
    }

    pub fn yesno_removal(category: &str) -> Result<Question, GrammarError> {
        Question::synthesize(QuestionKind::YesNoRemoval, category, 0, DeltaSign::Add)
    }

    pub fn digit_plain(category: &str) -> Result<Question, GrammarError> {
        Question::synthesize(QuestionKind::DigitPlain, category, 0, DeltaSign::Add)
    }

    pub fn digit_counterfactual(
        category: &str,
        delta: u32,
        sign: DeltaSign,
    ) -> Result<Question, GrammarError> {
        Question::synthesize(QuestionKind::DigitCounterfactual, category, delta, sign)
    }
}

/// A fully rendered prompt with its image reference and expected answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub question_id: String,
    pub prompt: String,
    pub image_id: i64,
    pub expected: CanonicalAnswer,
    #[serde(flatten)]
    pub question: Question,
    /// The injected reference count (ZZZZ); present only when the prompt
    /// carries a `Reference answer:` clause.
    pub reference_count: Option<u32>,
    /// True when `expected` was derived from a pseudo label rather than a
    /// gold answer.
    #[serde(default)]
    pub pseudo_derived: bool,
}

/// Plural surface form used in the digit templates.
///
/// Appends `s`, with `es` after sibilant endings (s, x, z, ch, sh) and
/// `y -> ies` after a consonant.
pub fn pluralize(category: &str) -> String {
    let sibilant = ["s", "x", "z", "ch", "sh"]
        .iter()
        .any(|suffix| category.ends_with(suffix));
    if sibilant {
        return format!("{category}es");
    }
    if let Some(stem) = category.strip_suffix('y') {
        let before = stem.chars().last();
        if before.is_some_and(|c| !"aeiou".contains(c)) {
            return format!("{stem}ies");
        }
    }
    format!("{category}s")
}

fn article(category: &str) -> &'static str {
    match category.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn template(pattern: &str) -> Regex {
    // <DELTA> slot: a digit string or a (possibly hyphenated) number word.
    // A space-joined second word is not admitted: it would collide with
    // multi-word category names ("four sports" vs "sports balls").
    let delta = r"(?P<delta>\d+|[a-z]+(?:-[a-z]+)?)";
    Regex::new(&pattern.replace("<DELTA>", delta)).expect("template regex compiles")
}

static YESNO_PLAIN_RE: LazyLock<Regex> = LazyLock::new(|| {
    template(r"^is there an? (?P<cat>.+?) in the (?:image|picture|scene)\?$")
});
static YESNO_REMOVAL_RE: LazyLock<Regex> = LazyLock::new(|| {
    template(
        r"^would there be an? (?P<cat>.+?) in the (?:image|picture|scene) once the (?P<cat2>.+?) has been removed from the scene\?$",
    )
});
static DIGIT_PLAIN_RE: LazyLock<Regex> = LazyLock::new(|| {
    template(
        r"^how (?:many|mant) (?P<plur>.+?) (?:would there be|are there) in the (?:image|picture|scene)\?$",
    )
});
static CF_ADD_MOVED_RE: LazyLock<Regex> = LazyLock::new(|| {
    template(
        r"^how (?:many|mant) (?P<plur>.+?) would there be in the (?:image|picture|scene) now that <DELTA> more (?P<plur2>.+?) (?:have|has) been moved into the scene\?$",
    )
});
static CF_ADD_SOMEONE_RE: LazyLock<Regex> = LazyLock::new(|| {
    template(
        r"^how (?:many|mant) (?P<plur>.+?) would there be in the (?:image|picture|scene) if someone added <DELTA> more (?P<plur2>.+?) in the (?:image|picture|scene)\?$",
    )
});
static CF_SUB_RE: LazyLock<Regex> = LazyLock::new(|| {
    template(
        r"^how (?:many|mant) (?P<plur>.+?) would there be in the (?:image|picture|scene) now that <DELTA> (?P<plur2>.+?) (?:have|has) been removed from the scene\?$",
    )
});

static REF_CLAUSE_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)reference answer:\s*(?P<reference>[a-z0-9 -]+)\.\s*")
        .expect("reference clause regex compiles")
});

fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Resolve a singular category slot against the table.
fn resolve_singular(slot: &str, categories: &CategoryTable) -> Result<String, GrammarError> {
    categories
        .iter()
        .find(|(_, name)| *name == slot)
        .map(|(_, name)| name.to_string())
        .ok_or_else(|| GrammarError::UnknownCategory(slot.to_string()))
}

/// Resolve a plural category slot; also accepts the bare category name for
/// vocabularies whose entries are already plural-shaped ("skis").
fn resolve_plural(slot: &str, categories: &CategoryTable) -> Result<String, GrammarError> {
    for (_, name) in categories.iter() {
        if pluralize(name) == slot {
            return Ok(name.to_string());
        }
    }
    resolve_singular(slot, categories)
        .map_err(|_| GrammarError::UnknownCategory(slot.to_string()))
}

fn parse_delta(slot: &str) -> Result<u32, GrammarError> {
    let value = if slot.chars().all(|c| c.is_ascii_digit()) {
        slot.parse::<u64>()
            .map_err(|_| GrammarError::DeltaOutOfRange(u64::MAX))?
    } else {
        match numword::from_words(slot) {
            Ok(v) => v as u64,
            // A non-numeric word in the delta slot means the sentence does
            // not instantiate the family at all.
            Err(_) => return Err(GrammarError::UnrecognizedTemplate(slot.to_string())),
        }
    };
    if value > MAX_DELTA as u64 {
        return Err(GrammarError::DeltaOutOfRange(value));
    }
    Ok(value as u32)
}

/// Parse question text into a [`Question`].
///
/// Both category slots of a two-slot family must resolve to the same
/// category.
pub fn parse_question(text: &str, categories: &CategoryTable) -> Result<Question, GrammarError> {
    let source_text = normalize_whitespace(text);
    let lowered = source_text.to_lowercase();
    let unrecognized = || GrammarError::UnrecognizedTemplate(source_text.clone());

    let mut question = if let Some(caps) = CF_ADD_MOVED_RE.captures(&lowered) {
        let category = resolve_matching_plurals(&caps, categories)?;
        let delta = parse_delta(&caps["delta"])?;
        Question::digit_counterfactual(&category, delta, DeltaSign::Add)?
    } else if let Some(caps) = CF_ADD_SOMEONE_RE.captures(&lowered) {
        let category = resolve_matching_plurals(&caps, categories)?;
        let delta = parse_delta(&caps["delta"])?;
        Question::digit_counterfactual(&category, delta, DeltaSign::Add)?
    } else if let Some(caps) = CF_SUB_RE.captures(&lowered) {
        let category = resolve_matching_plurals(&caps, categories)?;
        let delta = parse_delta(&caps["delta"])?;
        Question::digit_counterfactual(&category, delta, DeltaSign::Subtract)?
    } else if let Some(caps) = DIGIT_PLAIN_RE.captures(&lowered) {
        let category = resolve_plural(&caps["plur"], categories)?;
        Question::digit_plain(&category)?
    } else if let Some(caps) = YESNO_REMOVAL_RE.captures(&lowered) {
        if caps["cat"] != caps["cat2"] {
            return Err(unrecognized());
        }
        let category = resolve_singular(&caps["cat"], categories)?;
        Question::yesno_removal(&category)?
    } else if let Some(caps) = YESNO_PLAIN_RE.captures(&lowered) {
        let category = resolve_singular(&caps["cat"], categories)?;
        Question::yesno_plain(&category)?
    } else {
        return Err(unrecognized());
    };

    question.source_text = source_text;
    Ok(question)
}

fn resolve_matching_plurals(
    caps: &regex::Captures<'_>,
    categories: &CategoryTable,
) -> Result<String, GrammarError> {
    if caps["plur"] != caps["plur2"] {
        return Err(GrammarError::UnrecognizedTemplate(caps[0].to_string()));
    }
    resolve_plural(&caps["plur"], categories)
}

/// The canonical referenceless surface form of a question.
pub fn render_bare_question(q: &Question) -> String {
    let cat = q.category.as_str();
    match q.kind {
        QuestionKind::YesNoPlain => {
            format!("Is there {} {} in the image?", article(cat), cat)
        }
        QuestionKind::YesNoRemoval => format!(
            "Would there be {} {} in the image once the {} has been removed from the scene?",
            article(cat),
            cat,
            cat
        ),
        QuestionKind::DigitPlain => {
            format!("How many {} would there be in the image?", pluralize(cat))
        }
        QuestionKind::DigitCounterfactual => {
            let plural = pluralize(cat);
            let delta = numword::to_words_saturating(q.delta);
            match q.delta_sign {
                DeltaSign::Add => format!(
                    "How many {plural} would there be in the image now that {delta} more {plural} have been moved into the scene?"
                ),
                DeltaSign::Subtract => format!(
                    "How many {plural} would there be in the image now that {delta} {plural} have been removed from the scene?"
                ),
            }
        }
    }
}

fn reference_clause(reference: u32) -> String {
    format!("Reference answer: {}.", numword::to_words_saturating(reference))
}

/// Render the training-time prompt for `q`.
///
/// Digit kinds require a reference count; yes/no kinds must not carry one.
pub fn render_training_prompt(q: &Question, reference: Option<u32>) -> Result<String, GrammarError> {
    match (q.kind.is_digit(), reference) {
        (true, None) => return Err(GrammarError::MissingReference),
        (false, Some(_)) => return Err(GrammarError::SpuriousReference),
        _ => {}
    }
    Ok(match q.kind {
        QuestionKind::YesNoPlain | QuestionKind::YesNoRemoval => render_bare_question(q),
        QuestionKind::DigitPlain => format!(
            "{} {}",
            render_bare_question(q),
            reference_clause(reference.expect("checked above"))
        ),
        QuestionKind::DigitCounterfactual => format!(
            "How many {} would there be in the image? {} {}",
            pluralize(&q.category),
            reference_clause(reference.expect("checked above")),
            render_bare_question(q)
        ),
    })
}

/// Render the test-time prompt: inject the pseudo-label reference ahead of
/// the original digit question; pass yes/no questions through unchanged.
pub fn render_test_prompt(original_text: &str, q: &Question, pseudo_count: u32) -> String {
    if q.kind.is_digit() {
        format!(
            "How many {} would there be in the image? {} {}",
            pluralize(&q.category),
            reference_clause(pseudo_count),
            original_text
        )
    } else {
        original_text.to_string()
    }
}

/// Remove the reference clause from a rendered prompt, returning the bare
/// question.
///
/// When the clause is followed by more text (the counterfactual and
/// test-time layouts), everything up to and including the clause is
/// dropped; when it ends the prompt (the plain digit layout), only the
/// clause is dropped. Text without a clause is returned whitespace-trimmed.
pub fn strip_reference(text: &str) -> String {
    if let Some(m) = REF_CLAUSE_RE.find(text) {
        let after = text[m.end()..].trim();
        if !after.is_empty() {
            return after.to_string();
        }
        return text[..m.start()].trim().to_string();
    }
    text.trim().to_string()
}

/// Extract the reference count from a rendered prompt, if it has one.
pub fn extract_reference(text: &str) -> Option<u32> {
    let caps = REF_CLAUSE_RE.captures(text)?;
    let slot = caps["reference"].trim().to_string();
    if slot.chars().all(|c| c.is_ascii_digit()) {
        slot.parse().ok()
    } else {
        numword::from_words(&slot).ok()
    }
}
