//! Outcome and format rewards.
//!
//! Answers are pulled from `<answer>…</answer>` tags and/or `\boxed{…}`; the
//! last match wins. Numeric comparison understands integers, decimals,
//! `a/b` and `\frac{a}{b}`; anything else falls back to exact strings.

use std::f64::consts::PI;
use std::sync::LazyLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static ANSWER_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<answer>(.*?)</answer>").unwrap());
static FRAC: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\\d?frac\{\s*(-?[0-9.]+)\s*\}\{\s*(-?[0-9.]+)\s*\}$").unwrap());
static SLASH: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(-?[0-9.]+)\s*/\s*(-?[0-9.]+)$").unwrap());
static INTEGER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[+-]?[0-9]+$").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    NumericExact,
    StringExact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerFormat {
    pub answer_tag: bool,
    pub boxed: bool,
    pub comparison: Comparison,
}

impl Default for AnswerFormat {
    fn default() -> Self {
        Self {
            answer_tag: true,
            boxed: true,
            comparison: Comparison::NumericExact,
        }
    }
}

impl AnswerFormat {
    pub fn validate(&self) -> Result<()> {
        if !self.answer_tag && !self.boxed {
            return Err(Error::InvalidConfig("at least one answer pattern must be enabled".into()));
        }
        Ok(())
    }
}

/// Contents of every `\boxed{…}` with balanced braces, as (start, content).
fn boxed_spans(text: &str) -> Vec<(usize, &str)> {
    const OPEN: &str = "\\boxed{";
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(rel) = text[from..].find(OPEN) {
        let start = from + rel;
        let body = start + OPEN.len();
        let mut depth = 1usize;
        let mut end = None;
        for (i, c) in text[body..].char_indices() {
            match c {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(body + i);
                        break;
                    }
                }
                _ => {}
            }
        }
        match end {
            Some(e) => {
                out.push((start, &text[body..e]));
                from = e + 1;
            }
            None => break,
        }
    }
    out
}

pub fn extract_answer(text: &str, format: &AnswerFormat) -> Option<String> {
    let mut best: Option<(usize, &str)> = None;
    if format.answer_tag {
        if let Some(c) = ANSWER_TAG.captures_iter(text).last() {
            let m = c.get(1).unwrap();
            best = Some((m.start(), m.as_str()));
        }
    }
    if format.boxed {
        if let Some(&(start, body)) = boxed_spans(text).last() {
            // a box inside the last answer tag still wins: it starts later
            if best.is_none_or(|(s, _)| start >= s) {
                best = Some((start, body));
            }
        }
    }
    best.map(|(_, s)| s.trim().to_string())
}

fn parse_decimal(s: &str) -> Option<BigRational> {
    let s = s.trim();
    let (neg, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let mantissa: BigInt = format!("{int_part}{frac_part}").parse().ok()?;
    let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
    let value = BigRational::new(mantissa, scale);
    Some(if neg { -value } else { value })
}

/// Exact rational value of a simple numeric answer, if it is one.
pub fn parse_number(s: &str) -> Option<BigRational> {
    let cleaned: String = s
        .trim()
        .trim_matches('$')
        .chars()
        .filter(|c| *c != ',' && !c.is_whitespace())
        .collect();
    if let Some(c) = FRAC.captures(&cleaned).or_else(|| SLASH.captures(&cleaned)) {
        let (n, d) = (parse_decimal(&c[1])?, parse_decimal(&c[2])?);
        if d.is_zero() {
            return None;
        }
        return Some(n / d);
    }
    if let Some(inner) = cleaned.strip_prefix("-\\frac").or_else(|| cleaned.strip_prefix("-\\dfrac")) {
        return parse_number(&format!("\\frac{inner}")).map(|v| -v);
    }
    parse_decimal(&cleaned)
}

pub fn correctness_reward(extracted: Option<&str>, gold: &str, comparison: Comparison) -> f64 {
    let Some(answer) = extracted else {
        return 0.0;
    };
    let same = match comparison {
        Comparison::StringExact => answer.trim() == gold.trim(),
        Comparison::NumericExact => match (parse_number(answer), parse_number(gold)) {
            (Some(a), Some(b)) => a == b,
            _ => answer.trim() == gold.trim(),
        },
    };
    if same {
        1.0
    } else {
        0.0
    }
}

/// 1 when the extracted answer is a plain integer.
pub fn integer_reward(text: &str, format: &AnswerFormat) -> f64 {
    match extract_answer(text, format) {
        Some(a) if INTEGER.is_match(&a) => 1.0,
        _ => 0.0,
    }
}

/// Fraction of the `<think>` and `<answer>` tag pairs that appear exactly
/// once each, opening before closing.
pub fn xml_reward(text: &str) -> f64 {
    let pairs = [("<think>", "</think>"), ("<answer>", "</answer>")];
    let ok = pairs
        .iter()
        .filter(|(open, close)| {
            text.matches(open).count() == 1
                && text.matches(close).count() == 1
                && text.find(open) < text.find(close)
        })
        .count();
    ok as f64 / pairs.len() as f64
}

/// Length-shaped baseline reward. This is an approximation of cosine
/// length scheduling, not a reference implementation: correct answers decay
/// from 1.0 at length 0 to 0.5 at `max_len`; incorrect answers rise from
/// −1.0 to 0.0.
pub fn length_shaped_reward(token_count: usize, correct: bool, max_len: usize) -> Result<f64> {
    if max_len == 0 {
        return Err(Error::InvalidConfig("max_len must be > 0".into()));
    }
    if token_count > max_len {
        return Err(Error::LengthExceedsMax {
            len: token_count,
            max: max_len,
        });
    }
    let progress = token_count as f64 / max_len as f64;
    let schedule = (1.0 + (PI * progress).cos()) / 2.0;
    Ok(if correct { 0.5 + 0.5 * schedule } else { -schedule })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub correctness: f64,
    pub integer_format: f64,
    pub xml_format: f64,
    pub length_shaped: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            correctness: 1.0,
            integer_format: 0.0,
            xml_format: 0.0,
            length_shaped: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardVector {
    pub correctness: f64,
    pub integer_format: f64,
    pub xml_format: f64,
    pub length_shaped: f64,
    pub total_extrinsic: f64,
}

/// All extrinsic rewards for one response.
pub fn score_response(
    text: &str,
    gold: &str,
    format: &AnswerFormat,
    weights: &RewardWeights,
    token_count: usize,
    max_len: usize,
) -> Result<RewardVector> {
    let correctness = correctness_reward(extract_answer(text, format).as_deref(), gold, format.comparison);
    let integer_format = integer_reward(text, format);
    let xml_format = xml_reward(text);
    let length_shaped = length_shaped_reward(token_count.min(max_len), correctness == 1.0, max_len)?;
    let total_extrinsic = weights.correctness * correctness
        + weights.integer_format * integer_format
        + weights.xml_format * xml_format
        + weights.length_shaped * length_shaped;
    Ok(RewardVector {
        correctness,
        integer_format,
        xml_format,
        length_shaped,
        total_extrinsic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fmt() -> AnswerFormat {
        AnswerFormat::default()
    }

    #[test]
    fn extracts_tagged_answer() {
        assert_eq!(
            extract_answer("<think>x</think><answer>42</answer>", &fmt()).as_deref(),
            Some("42")
        );
        assert_eq!(extract_answer("blah blah", &fmt()), None);
    }

    #[test]
    fn extracts_nested_boxed() {
        let text = "so the area is \\boxed{\\frac{25}{2}}.";
        assert_eq!(extract_answer(text, &fmt()).as_deref(), Some("\\frac{25}{2}"));
    }

    #[test]
    fn last_match_wins() {
        let text = "<answer>1</answer> wait, recheck <answer> 2 </answer>";
        assert_eq!(extract_answer(text, &fmt()).as_deref(), Some("2"));
        let text = "<answer>7</answer> finally \\boxed{8}";
        assert_eq!(extract_answer(text, &fmt()).as_deref(), Some("8"));
        let only_tags = AnswerFormat {
            boxed: false,
            ..fmt()
        };
        assert_eq!(extract_answer(text, &only_tags).as_deref(), Some("7"));
    }

    #[test]
    fn unbalanced_box_is_ignored() {
        assert_eq!(extract_answer("\\boxed{3", &fmt()), None);
    }

    #[test]
    fn correctness_examples() {
        assert_eq!(correctness_reward(Some("42"), "42", Comparison::NumericExact), 1.0);
        assert_eq!(correctness_reward(None, "42", Comparison::NumericExact), 0.0);
        assert_eq!(correctness_reward(Some("42.0"), "42", Comparison::NumericExact), 1.0);
        assert_eq!(correctness_reward(Some("42.0"), "42", Comparison::StringExact), 0.0);
        assert_eq!(correctness_reward(Some("\\frac{25}{2}"), "12.5", Comparison::NumericExact), 1.0);
        assert_eq!(correctness_reward(Some("25/2"), "12.50", Comparison::NumericExact), 1.0);
        assert_eq!(correctness_reward(Some("1,000"), "1000", Comparison::NumericExact), 1.0);
        assert_eq!(correctness_reward(Some("x+1"), "x+1", Comparison::NumericExact), 1.0);
        assert_eq!(correctness_reward(Some("41"), "42", Comparison::NumericExact), 0.0);
    }

    #[test]
    fn parse_number_edge_cases() {
        assert_eq!(parse_number("007"), parse_number("7"));
        assert_eq!(parse_number("-\\frac{1}{2}"), parse_number("-0.5"));
        assert_eq!(parse_number("1/0"), None);
        assert_eq!(parse_number("."), None);
        assert_eq!(parse_number("abc"), None);
    }

    #[test]
    fn format_rewards() {
        let full = "<think>a</think><answer>7</answer>";
        assert_eq!(integer_reward(full, &fmt()), 1.0);
        assert_eq!(xml_reward(full), 1.0);
        assert_eq!(xml_reward("<answer>7</answer>"), 0.5);
        assert_eq!(integer_reward("<answer>x+1</answer>", &fmt()), 0.0);
        assert_eq!(xml_reward("<answer>1</answer><answer>2</answer>"), 0.0);
        assert_eq!(xml_reward("</think>a<think>"), 0.0);
    }

    #[test]
    fn format_rewards_ignore_outer_whitespace() {
        let a = "<think>a</think><answer>7</answer>";
        let b = "  \n<think>a</think>\n\n<answer>7</answer>  ";
        assert_eq!(xml_reward(a), xml_reward(b));
        assert_eq!(integer_reward(a, &fmt()), integer_reward(b, &fmt()));
    }

    #[test]
    fn length_shaped_endpoints() {
        assert_eq!(length_shaped_reward(0, true, 200).unwrap(), 1.0);
        assert!((length_shaped_reward(200, true, 200).unwrap() - 0.5).abs() < 1e-15);
        let mid = 0.5 + 0.5 * (1.0 + (PI * 0.5).cos()) / 2.0;
        assert!((length_shaped_reward(100, true, 200).unwrap() - mid).abs() < 1e-15);
        assert!((mid - 0.75).abs() < 1e-12);
        assert_eq!(length_shaped_reward(0, false, 200).unwrap(), -1.0);
        assert!(length_shaped_reward(200, false, 200).unwrap().abs() < 1e-15);
        assert!(matches!(
            length_shaped_reward(201, true, 200),
            Err(Error::LengthExceedsMax { len: 201, max: 200 })
        ));
    }

    #[test]
    fn length_shaped_is_monotone() {
        for correct in [true, false] {
            let vals: Vec<f64> = (0..=200).map(|t| length_shaped_reward(t, correct, 200).unwrap()).collect();
            for w in vals.windows(2) {
                if correct {
                    assert!(w[1] <= w[0]);
                } else {
                    assert!(w[1] >= w[0]);
                }
            }
        }
    }

    #[test]
    fn reward_vector_weights_components() {
        let w = RewardWeights {
            correctness: 1.0,
            integer_format: 0.5,
            xml_format: 0.25,
            length_shaped: 0.0,
        };
        let v = score_response("<think>a</think><answer>7</answer>", "7", &fmt(), &w, 10, 200).unwrap();
        assert_eq!(v.correctness, 1.0);
        assert_eq!(v.total_extrinsic, 1.0 + 0.5 + 0.25);
    }

    #[test]
    fn answer_format_needs_a_pattern() {
        let none = AnswerFormat {
            answer_tag: false,
            boxed: false,
            comparison: Comparison::StringExact,
        };
        assert!(none.validate().is_err());
    }
}
