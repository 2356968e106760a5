//! Bidirectional conversion between non-negative integers and English
//! cardinal words.
//!
//! Rendering is canonical: lowercase, hyphenated compounds ("twenty-three"),
//! no "and" ("one hundred one"). Parsing is liberal: case-insensitive,
//! hyphens and spaces are interchangeable, and "and" is tolerated and
//! ignored. The supported range is 0..=999.

use thiserror::Error;

/// Largest integer this module renders or parses.
pub const MAX_SUPPORTED: u32 = 999;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NumWordError {
    #[error("number {0} is outside the supported range 0..={MAX_SUPPORTED}")]
    OutOfSupportedRange(i64),
    #[error("not a recognizable cardinal number phrase: {0:?}")]
    UnparseableNumberWord(String),
}

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen",
];

const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

/// Render `n` as a canonical English cardinal.
pub fn to_words(n: u32) -> Result<String, NumWordError> {
    if n > MAX_SUPPORTED {
        return Err(NumWordError::OutOfSupportedRange(n as i64));
    }
    Ok(render(n))
}

/// Render `n`, clamping values above [`MAX_SUPPORTED`] to its rendering.
pub fn to_words_saturating(n: u32) -> String {
    render(n.min(MAX_SUPPORTED))
}

fn render(n: u32) -> String {
    debug_assert!(n <= MAX_SUPPORTED);
    match n {
        0..=19 => ONES[n as usize].to_string(),
        20..=99 => {
            let tens = TENS[(n / 10) as usize];
            if n % 10 == 0 {
                tens.to_string()
            } else {
                format!("{}-{}", tens, ONES[(n % 10) as usize])
            }
        }
        _ => {
            let hundreds = format!("{} hundred", ONES[(n / 100) as usize]);
            if n % 100 == 0 {
                hundreds
            } else {
                format!("{} {}", hundreds, render(n % 100))
            }
        }
    }
}

/// Parse an English cardinal phrase back to its integer value.
///
/// Accepts the canonical renderings of [`to_words`] plus tolerated
/// variants: any casing, hyphens in place of spaces, and interspersed
/// "and" ("one hundred and one").
pub fn from_words(text: &str) -> Result<u32, NumWordError> {
    let unparseable = || NumWordError::UnparseableNumberWord(text.to_string());
    let lowered = text.to_lowercase().replace('-', " ");
    let tokens: Vec<&str> = lowered
        .split_whitespace()
        .filter(|t| *t != "and")
        .collect();
    if tokens.is_empty() {
        return Err(unparseable());
    }

    let (hundreds, tail) = if tokens.len() >= 2 && tokens[1] == "hundred" {
        match word_value(tokens[0]) {
            Some(d @ 1..=9) => (d * 100, &tokens[2..]),
            _ => return Err(unparseable()),
        }
    } else {
        (0, &tokens[..])
    };

    let rest = match *tail {
        [] if hundreds > 0 => 0,
        ["zero"] if hundreds == 0 => 0,
        [one] => match word_value(one) {
            Some(v @ 1..=99) => v,
            _ => return Err(unparseable()),
        },
        [tens, one] => match (word_value(tens), word_value(one)) {
            (Some(t), Some(o)) if t >= 20 && t % 10 == 0 && (1..=9).contains(&o) => t + o,
            _ => return Err(unparseable()),
        },
        _ => return Err(unparseable()),
    };
    Ok(hundreds + rest)
}

fn word_value(word: &str) -> Option<u32> {
    if let Some(i) = ONES.iter().position(|w| *w == word) {
        return Some(i as u32);
    }
    TENS.iter()
        .position(|w| *w == word && !w.is_empty())
        .map(|i| i as u32 * 10)
}

/// True if `word` can appear inside a cardinal phrase. Hyphenated
/// compounds ("forty-two") count when every part does.
///
/// Used by answer normalization to delimit number-word runs in free text.
pub fn is_number_word(word: &str) -> bool {
    let lowered = word.to_lowercase();
    !lowered.is_empty()
        && lowered.split('-').all(|part| {
            part == "hundred" || part == "and" || word_value(part).is_some()
        })
}
