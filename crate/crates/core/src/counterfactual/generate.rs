use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::backend::{BackendIdentity, TextGenBackend};
use super::prompts::{
    chunk_prompt, counterfactual_prompt, final_prompt, sentiment_prompt, TEMPLATE_VERSION,
};
use crate::corpus::{EventScript, EventType};
use crate::error::{CoreError, Result};

pub const GENERATION_TEMPERATURE: f64 = 0.7;
pub const RATING_TEMPERATURE: f64 = 0.0;
const RATING_MAX_WORDS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend: BackendIdentity,
    pub template_version: String,
    pub original_sentiment: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterfactualRecord {
    pub parent_event_id: String,
    pub event_type: EventType,
    pub target_sentiment: u8,
    pub text: String,
    pub provenance: Provenance,
}

impl CounterfactualRecord {
    pub fn validate(&self) -> Result<()> {
        if self.target_sentiment > 10 {
            return Err(CoreError::Range(self.target_sentiment as i64));
        }
        if self.target_sentiment == self.provenance.original_sentiment {
            return Err(CoreError::Precondition(format!(
                "counterfactual of `{}` has the factual rating {}",
                self.parent_event_id, self.target_sentiment
            )));
        }
        if self.text.trim().is_empty() {
            return Err(CoreError::Generation {
                chunk: None,
                message: format!("empty counterfactual for `{}`", self.parent_event_id),
            });
        }
        Ok(())
    }
}

/// Word-count limits for the summarization pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryConfig {
    pub chunk_words: usize,
    pub summary_words: usize,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        Self {
            chunk_words: 500,
            summary_words: 200,
        }
    }
}

/// Splits `text` into pieces of `words` words each, keeping the original
/// spacing and line breaks inside each piece.
pub fn split_chunks(text: &str, words: usize) -> Vec<&str> {
    let starts: Vec<usize> = text
        .char_indices()
        .filter(|&(i, c)| {
            !c.is_whitespace() && (i == 0 || text[..i].ends_with(char::is_whitespace))
        })
        .map(|(i, _)| i)
        .collect();
    starts
        .chunks(words)
        .enumerate()
        .map(|(k, _)| {
            let from = starts[k * words];
            let to = starts.get((k + 1) * words).copied().unwrap_or(text.len());
            text[from..to].trim_end()
        })
        .collect()
}

pub fn chunk_and_summarize(
    script: &EventScript,
    cfg: SummaryConfig,
    backend: &dyn TextGenBackend,
) -> Result<String> {
    if cfg.chunk_words < 100 || cfg.summary_words < 50 {
        return Err(CoreError::Config(format!(
            "chunk words must be >= 100 and summary words >= 50, got {} and {}",
            cfg.chunk_words, cfg.summary_words
        )));
    }
    let kind = script.event_type.report_name();
    let chunks = split_chunks(&script.text, cfg.chunk_words);
    if chunks.is_empty() {
        return Err(CoreError::Input(format!("event `{}` has no words", script.id)));
    }
    let mut summaries = Vec::with_capacity(chunks.len());
    for (i, chunk) in chunks.iter().enumerate() {
        let prompt = chunk_prompt(i + 1, kind, cfg.summary_words, chunk);
        let out = backend
            .complete(&prompt, cfg.summary_words, GENERATION_TEMPERATURE)
            .map_err(|e| CoreError::Generation {
                chunk: Some(i + 1),
                message: e.to_string(),
            })?;
        summaries.push(out.trim().to_string());
    }
    if summaries.len() == 1 {
        return Ok(summaries.pop().unwrap_or_default());
    }
    let prompt = final_prompt(kind, cfg.summary_words, &summaries);
    let out = backend
        .complete(&prompt, cfg.summary_words, GENERATION_TEMPERATURE)
        .map_err(|e| CoreError::Generation {
            chunk: None,
            message: format!("final summary: {e}"),
        })?;
    Ok(out.trim().to_string())
}

/// Extracts `n` from `Sentiment rating: <n>`.
pub fn parse_rating(response: &str) -> Result<u8> {
    const MARKER: &str = "Sentiment rating:";
    let parse_err = || CoreError::Parse {
        raw: response.to_string(),
    };
    let from = response.find(MARKER).ok_or_else(parse_err)? + MARKER.len();
    let rest = response[from..].trim_start();
    let signed: String = rest
        .char_indices()
        .take_while(|&(i, c)| c.is_ascii_digit() || (i == 0 && c == '-'))
        .map(|(_, c)| c)
        .collect();
    let n: i64 = signed.parse().map_err(|_| parse_err())?;
    if !(0..=10).contains(&n) {
        return Err(CoreError::Range(n));
    }
    Ok(n as u8)
}

pub fn rate_sentiment(summary: &str, text_type: EventType, backend: &dyn TextGenBackend) -> Result<u8> {
    if summary.trim().is_empty() {
        return Err(CoreError::Input("empty summary".into()));
    }
    let prompt = sentiment_prompt(text_type.report_name(), summary);
    let response = backend.complete(&prompt, RATING_MAX_WORDS, RATING_TEMPERATURE)?;
    parse_rating(&response)
}

pub fn generate_counterfactual(
    parent: &EventScript,
    summary: &str,
    current: u8,
    target: u8,
    backend: &dyn TextGenBackend,
) -> Result<CounterfactualRecord> {
    if current > 10 || target > 10 {
        return Err(CoreError::Range(current.max(target) as i64));
    }
    if current == target {
        return Err(CoreError::Precondition(format!(
            "target rating {target} equals the current rating"
        )));
    }
    let prompt = counterfactual_prompt(current, target, summary)?;
    let budget = summary.split_whitespace().count() + 50;
    let text = backend.complete(&prompt, budget, GENERATION_TEMPERATURE)?;
    let text = text.trim().to_string();
    if text.is_empty() {
        return Err(CoreError::Generation {
            chunk: None,
            message: format!("empty output for `{}` at target {target}", parent.id),
        });
    }
    Ok(CounterfactualRecord {
        parent_event_id: parent.id.clone(),
        event_type: parent.event_type,
        target_sentiment: target,
        text,
        provenance: Provenance {
            backend: backend.identity(),
            template_version: TEMPLATE_VERSION.to_string(),
            original_sentiment: current,
        },
    })
}

/// All ratings except the factual one, ascending.
pub fn target_ratings(factual: u8) -> Vec<u8> {
    (0..=10).filter(|&t| t != factual).collect()
}

#[derive(Debug, Default)]
pub struct AugmentOutcome {
    pub records: Vec<CounterfactualRecord>,
    pub failures: Vec<(u8, CoreError)>,
}

/// One counterfactual per non-factual rating. The event's sentiment must be
/// known.
pub fn augment_event(
    script: &EventScript,
    summary: &str,
    backend: &dyn TextGenBackend,
) -> Result<AugmentOutcome> {
    let factual = script.sentiment.ok_or_else(|| {
        CoreError::Precondition(format!("event `{}` has no sentiment rating", script.id))
    })?;
    let mut out = AugmentOutcome::default();
    for target in target_ratings(factual) {
        match generate_counterfactual(script, summary, factual, target, backend) {
            Ok(r) => out.records.push(r),
            Err(e) => out.failures.push((target, e)),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub summary: SummaryConfig,
    /// Upper bound on concurrent backend requests.
    pub max_in_flight: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            summary: SummaryConfig::default(),
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Default)]
pub struct CorpusAugmentation {
    /// Input events with missing sentiment ratings filled in.
    pub events: Vec<EventScript>,
    /// Ordered by (parent id, target rating).
    pub records: Vec<CounterfactualRecord>,
    pub failures: Vec<(String, Option<u8>, String)>,
}

/// Summarizes, rates (when unrated) and rewrites every event. Work runs on
/// at most `max_in_flight` threads; output order does not depend on
/// scheduling.
pub fn augment_corpus(
    events: &[EventScript],
    backend: &dyn TextGenBackend,
    cfg: AugmentConfig,
) -> CorpusAugmentation {
    let workers = cfg.max_in_flight.max(1);

    // Stage 1: summary and rating per event.
    let stage1: Vec<usize> = (0..events.len()).collect();
    let summaries: BTreeMap<usize, Result<(String, u8)>> = run_bounded(stage1, workers, |&i| {
        let e = &events[i];
        let r = chunk_and_summarize(e, cfg.summary, backend).and_then(|s| {
            let rating = match e.sentiment {
                Some(r) => r,
                None => rate_sentiment(&s, e.event_type, backend)?,
            };
            Ok((s, rating))
        });
        (i, r)
    });

    let mut out = CorpusAugmentation {
        events: events.to_vec(),
        ..Default::default()
    };
    let mut stage2: Vec<(usize, u8)> = Vec::new();
    let mut summary_of = BTreeMap::new();
    for (i, r) in summaries {
        match r {
            Ok((s, rating)) => {
                out.events[i].sentiment = Some(rating);
                for t in target_ratings(rating) {
                    stage2.push((i, t));
                }
                summary_of.insert(i, s);
            }
            Err(e) => out.failures.push((events[i].id.clone(), None, e.to_string())),
        }
    }

    // Stage 2: one rewrite per (event, target).
    let rated = &out.events;
    let results: BTreeMap<(String, u8), Result<CounterfactualRecord>> =
        run_bounded(stage2, workers, |&(i, t)| {
            let e = &rated[i];
            let current = e.sentiment.unwrap_or_default();
            let r = generate_counterfactual(e, &summary_of[&i], current, t, backend);
            ((e.id.clone(), t), r)
        });
    for ((id, t), r) in results {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(e) => out.failures.push((id, Some(t), e.to_string())),
        }
    }
    out
}

fn run_bounded<J: Send, K: Ord + Send, V: Send>(
    jobs: Vec<J>,
    workers: usize,
    f: impl Fn(&J) -> (K, V) + Sync,
) -> BTreeMap<K, V> {
    let queue = Mutex::new(jobs.into_iter());
    let results = Mutex::new(BTreeMap::new());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let next = queue.lock().unwrap_or_else(|p| p.into_inner()).next();
                let Some(job) = next else { break };
                let (k, v) = f(&job);
                results.lock().unwrap_or_else(|p| p.into_inner()).insert(k, v);
            });
        }
    });
    results.into_inner().unwrap_or_else(|p| p.into_inner())
}
