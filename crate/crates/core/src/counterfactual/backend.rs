//! Text-generation backends: a deterministic offline stub and an HTTP
//! client with retries.

use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::lexicon;
use super::prompts::sentiment_label;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendIdentity {
    pub name: String,
    pub model: String,
}

pub trait TextGenBackend: Send + Sync {
    fn complete(&self, prompt: &str, max_output_words: usize, temperature: f64) -> Result<String>;
    fn identity(&self) -> BackendIdentity;
}

/// Offline backend that recognises the four prompt kinds and answers them
/// with simple deterministic rules:
///
/// * summaries are the first `max_output_words` words of the input;
/// * the rating is [`lexicon::rating`] of the summary;
/// * a counterfactual scales every number by `1 + 0.05·(target − current)`
///   and flips lexicon words toward the target polarity.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubBackend;

pub const STUB_MODEL: &str = "lexicon-v1";

fn between<'a>(s: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = s.find(start)? + start.len();
    let to = s[from..].rfind(end)? + from;
    Some(&s[from..to])
}

fn first_words(text: &str, n: usize) -> String {
    text.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z]+|\d+(?:,\d{3})*(?:\.\d+)?").unwrap())
}

fn scale_number(token: &str, factor: f64) -> String {
    let grouped = token.contains(',');
    let plain = token.replace(',', "");
    let decimals = plain.split_once('.').map_or(0, |(_, f)| f.len());
    let value: f64 = plain.parse().unwrap_or(0.0) * factor;
    let formatted = format!("{value:.decimals$}");
    if !grouped {
        return formatted;
    }
    let (int, frac) = match formatted.split_once('.') {
        Some((i, f)) => (i.to_string(), format!(".{f}")),
        None => (formatted.clone(), String::new()),
    };
    let mut with_commas = String::new();
    for (i, ch) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            with_commas.push(',');
        }
        with_commas.push(ch);
    }
    with_commas + &frac
}

fn match_case(template: &str, word: &str) -> String {
    if template.len() > 1 && template.chars().all(|c| c.is_ascii_uppercase()) {
        word.to_ascii_uppercase()
    } else if template.starts_with(|c: char| c.is_ascii_uppercase()) {
        let mut cs = word.chars();
        cs.next()
            .map(|f| f.to_ascii_uppercase().to_string() + cs.as_str())
            .unwrap_or_default()
    } else {
        word.to_string()
    }
}

/// The stub's counterfactual rewrite.
pub fn stub_rewrite(text: &str, current: u8, target: u8) -> String {
    let delta = target as i64 - current as i64;
    let factor = 1.0 + 0.05 * delta as f64;
    let flip_from = if delta > 0 {
        Some(lexicon::Polarity::Negative)
    } else if delta < 0 {
        Some(lexicon::Polarity::Positive)
    } else {
        None
    };
    token_regex()
        .replace_all(text, |caps: &regex::Captures<'_>| {
            let tok = &caps[0];
            if tok.starts_with(|c: char| c.is_ascii_digit()) {
                return scale_number(tok, factor);
            }
            match (lexicon::polarity(tok), lexicon::opposite(tok)) {
                (Some(p), Some(other)) if Some(p) == flip_from => match_case(tok, other),
                _ => tok.to_string(),
            }
        })
        .into_owned()
}

fn parse_rating_after(s: &str, marker: &str) -> Option<u8> {
    let from = s.find(marker)? + marker.len();
    let digits: String = s[from..].chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

impl TextGenBackend for StubBackend {
    fn complete(&self, prompt: &str, max_output_words: usize, _temperature: f64) -> Result<String> {
        let fail = |what: &str| CoreError::Generation {
            chunk: None,
            message: format!("stub backend could not parse {what} prompt"),
        };
        if prompt.starts_with("You are given chunk ") {
            let body = between(prompt, " is as follows:\n", "\nPlease provide a concise summary")
                .ok_or_else(|| fail("chunk"))?;
            return Ok(first_words(body, max_output_words));
        }
        if prompt.starts_with("You are given ") {
            let body = between(
                prompt,
                "The chunk summaries are as follows:\n",
                "\nPlease provide a comprehensive summary",
            )
            .ok_or_else(|| fail("final summary"))?;
            let stripped: Vec<&str> = body
                .lines()
                .map(|l| l.split_once(": ").map_or(l, |(_, rest)| rest))
                .collect();
            return Ok(first_words(&stripped.join(" "), max_output_words));
        }
        if prompt.starts_with("Please analyze the sentiment") {
            let body = between(prompt, " summary: ", "\nOutput the sentiment analysis as:")
                .ok_or_else(|| fail("sentiment"))?;
            let (score, pos, neg) = lexicon::score(body);
            let r = lexicon::rating(body);
            return Ok(format!(
                "Sentiment rating: {r}, Explanation: lexicon score {score} ({pos} positive, {neg} negative terms), {}.",
                sentiment_label(r)?
            ));
        }
        if prompt.starts_with("The original text has been identified") {
            let current = parse_rating_after(prompt, "with a sentiment rating of ")
                .ok_or_else(|| fail("counterfactual"))?;
            let target = parse_rating_after(prompt, "aligns with a sentiment rating of ")
                .ok_or_else(|| fail("counterfactual"))?;
            let body = between(
                prompt,
                "\nOriginal text: ",
                "\nCounterfactual text with a sentiment rating of ",
            )
            .ok_or_else(|| fail("counterfactual"))?;
            return Ok(stub_rewrite(body, current, target));
        }
        Err(fail("an unrecognised"))
    }

    fn identity(&self) -> BackendIdentity {
        BackendIdentity {
            name: "stub".into(),
            model: STUB_MODEL.into(),
        }
    }
}

/// Client for an HTTP completion endpoint taking
/// `{"prompt", "max_tokens", "temperature"}` and answering with either
/// `{"text": ...}`, `{"choices": [{"text": ...}]}` or a plain-text body.
pub struct HttpBackend {
    url: String,
    key: Option<String>,
    model: String,
    attempts: usize,
    backoff: Duration,
    client: reqwest::blocking::Client,
}

pub const URL_ENV: &str = "CF_BACKEND_URL";
pub const KEY_ENV: &str = "CF_BACKEND_KEY";

/// Output word budget to token budget.
const TOKENS_PER_WORD: f64 = 1.5;

impl HttpBackend {
    pub fn new(url: impl Into<String>, key: Option<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| CoreError::Config(format!("http client: {e}")))?;
        Ok(Self {
            url: url.into(),
            key,
            model: "remote".into(),
            attempts: 3,
            backoff: Duration::from_secs(1),
            client,
        })
    }

    pub fn from_env() -> Result<Self> {
        let url = std::env::var(URL_ENV)
            .map_err(|_| CoreError::Config(format!("{URL_ENV} is not set")))?;
        Self::new(url, std::env::var(KEY_ENV).ok())
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    /// Overrides the first retry delay (doubled on each further retry).
    pub fn with_backoff(mut self, first: Duration) -> Self {
        self.backoff = first;
        self
    }

    fn attempt(&self, prompt: &str, max_tokens: usize, temperature: f64) -> std::result::Result<String, String> {
        let mut req = self.client.post(&self.url).json(&serde_json::json!({
            "prompt": prompt,
            "max_tokens": max_tokens,
            "temperature": temperature,
        }));
        if let Some(k) = &self.key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        let body = resp.text().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("HTTP {status}: {}", first_words(&body, 30)));
        }
        Ok(extract_text(&body))
    }
}

fn extract_text(body: &str) -> String {
    match serde_json::from_str::<serde_json::Value>(body) {
        Ok(v) => v
            .get("text")
            .and_then(|t| t.as_str())
            .or_else(|| v.pointer("/choices/0/text").and_then(|t| t.as_str()))
            .map(str::to_string)
            .unwrap_or_else(|| body.to_string()),
        Err(_) => body.to_string(),
    }
}

impl TextGenBackend for HttpBackend {
    fn complete(&self, prompt: &str, max_output_words: usize, temperature: f64) -> Result<String> {
        let max_tokens = (max_output_words as f64 * TOKENS_PER_WORD).ceil() as usize;
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 0..self.attempts {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(prompt, max_tokens, temperature) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("backend attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(CoreError::Generation {
            chunk: None,
            message: format!("{} attempts failed, last: {last}", self.attempts),
        })
    }

    fn identity(&self) -> BackendIdentity {
        BackendIdentity {
            name: "http".into(),
            model: self.model.clone(),
        }
    }
}
