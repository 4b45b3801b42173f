//! Prompt templates for summarization, sentiment rating and counterfactual
//! rewriting. Rendering is plain substitution, templates are kept verbatim
//! (including their original wording).

use crate::error::{CoreError, Result};

pub const TEMPLATE_VERSION: &str = "prompts-v1";

pub const CHUNK_TEMPLATE: &str = "You are given chunk {chunk_idx} of a {text_type} report. Your task is to generate a summary within {number_of_words} words.\n\
The content of chunk {chunk_idx} is as follows:\n\
{original_text}\n\
Please provide a concise summary, while keep the key variables:";

pub const FINAL_TEMPLATE: &str = "You are given {chunk_num} summaries of different chunks from a {text_type} report. Your task is to generate an overall summary within {number_of_words} words.\n\
The chunk summaries are as follows:\n\
{chunk_summaries}\n\
Please provide a comprehensive summary of the entire report, while keep the key variables:";

pub const SENTIMENT_TEMPLATE: &str = "Please analyze the sentiment of the following {text_type} summary and rate it on a scale from 0 to 10, where:\n\
0 = Extremely Negative; 1 = Strongly Negative; 2 = Very; Negative; 3 = Moderate Negative; 4 = Slightly Negative; 5 = Neutral; 6 = Slightly Positive; 7 = Moderate Positive; 8 = Very Positive; 9 = Strongly Positive; 10 = Extremely Positive\n\
{text_type} summary: {text}\n\
Output the sentiment analysis as:\n\
Sentiment rating: (0 to 10), Explanation:";

pub const COUNTERFACTUAL_TEMPLATE: &str = "The original text has been identified with a sentiment rating of {current_sentiment_rating} ({current_sentiment}).\n\
Your task is to generate a counterfactual version of the text that aligns with a sentiment rating of {target_sentiment_rating} ({target_sentiment}) by modifying the key facts and information to reflect the specified target sentiment score about the economy, while keep the overall format and the sentiment-neural content unchanged.\n\
Original text: {original_text}\n\
Counterfactual text with a sentiment rating of {target_sentiment_rating} ({target_sentiment}): ";

const LABELS: [&str; 11] = [
    "Extremely Negative",
    "Strongly Negative",
    "Very Negative",
    "Moderate Negative",
    "Slightly Negative",
    "Neutral",
    "Slightly Positive",
    "Moderate Positive",
    "Very Positive",
    "Strongly Positive",
    "Extremely Positive",
];

/// Label for a 0..=10 rating.
pub fn sentiment_label(rating: u8) -> Result<&'static str> {
    LABELS
        .get(rating as usize)
        .copied()
        .ok_or(CoreError::Range(rating as i64))
}

/// Substitutes `{name}` placeholders in one pass, so substituted values are
/// never re-scanned.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let value = after
            .find('}')
            .and_then(|close| vars.iter().find(|(k, _)| *k == &after[..close]).map(|(_, v)| (close, v)));
        match value {
            Some((close, v)) => {
                out.push_str(v);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn chunk_prompt(chunk_idx: usize, text_type: &str, words: usize, original: &str) -> String {
    render(
        CHUNK_TEMPLATE,
        &[
            ("chunk_idx", &chunk_idx.to_string()),
            ("text_type", text_type),
            ("number_of_words", &words.to_string()),
            ("original_text", original),
        ],
    )
}

/// Chunk summaries are listed one per line as `Chunk <i>: <summary>`.
pub fn final_prompt(text_type: &str, words: usize, summaries: &[String]) -> String {
    let listed = summaries
        .iter()
        .enumerate()
        .map(|(i, s)| format!("Chunk {}: {s}", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    render(
        FINAL_TEMPLATE,
        &[
            ("chunk_num", &summaries.len().to_string()),
            ("text_type", text_type),
            ("number_of_words", &words.to_string()),
            ("chunk_summaries", &listed),
        ],
    )
}

pub fn sentiment_prompt(text_type: &str, summary: &str) -> String {
    render(SENTIMENT_TEMPLATE, &[("text_type", text_type), ("text", summary)])
}

pub fn counterfactual_prompt(current: u8, target: u8, original: &str) -> Result<String> {
    Ok(render(
        COUNTERFACTUAL_TEMPLATE,
        &[
            ("current_sentiment_rating", &current.to_string()),
            ("current_sentiment", sentiment_label(current)?),
            ("target_sentiment_rating", &target.to_string()),
            ("target_sentiment", sentiment_label(target)?),
            ("original_text", original),
        ],
    ))
}
