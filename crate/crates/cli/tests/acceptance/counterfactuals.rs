//! Counterfactual sets against an all-pairs oracle, and prompt goldens.

use std::collections::BTreeSet;
use std::fs;

use chrono::{Duration, TimeZone, Utc};
use eventcast_core::corpus::{normalize_document, EventScript, EventType, RawFormat};
use eventcast_core::counterfactual::prompts::{chunk_prompt, counterfactual_prompt, final_prompt, sentiment_prompt};
use eventcast_core::counterfactual::{
    augment_event, lexicon_rating, sample_counterfactuals, split_chunks, CounterfactualRecord, Registry, StubBackend,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{fixtures, Outcome};

fn registry(rng: &mut ChaCha8Rng, n: usize) -> Vec<EventScript> {
    let base = Utc.with_ymd_and_hms(2000, 1, 3, 13, 30, 0).unwrap();
    (0..n)
        .map(|i| {
            let t = EventType::ALL[if i < 6 { i } else { rng.gen_range(0..6) }];
            // A coarse grid so equal distances and shared timestamps occur.
            let ts = base + Duration::days(rng.gen_range(0..120)) + Duration::hours(6 * rng.gen_range(0..2));
            let words = ["strong gains", "weak demand", "steady pace", "sharp decline"];
            EventScript {
                id: format!("ev{i:03}"),
                event_type: t,
                release_timestamp: ts,
                raw_format: RawFormat::Txt,
                text: format!("Output rose {}.{} percent with {}.", i % 7, i % 10, words[i % 4]),
                sentiment: None,
            }
        })
        .collect()
}

/// Nearest release of type `t` by an all-pairs scan, ties to the earlier
/// release, then to the smaller id.
fn oracle(parent: &EventScript, all: &[EventScript], t: EventType) -> String {
    all.iter()
        .filter(|c| c.event_type == t)
        .min_by_key(|c| {
            let d = (c.release_timestamp - parent.release_timestamp).num_seconds().abs();
            (d, c.release_timestamp, c.id.clone())
        })
        .map(|c| c.id.clone())
        .unwrap()
}

fn store(e: &EventScript) -> Vec<CounterfactualRecord> {
    let mut e = e.clone();
    e.sentiment = Some(lexicon_rating(&e.text));
    augment_event(&e, &e.text, &StubBackend).unwrap().records
}

pub fn sets() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut problems = Vec::new();
    let mut checked = 0;
    for _ in 0..3 {
        let events = registry(&mut rng, 200);
        let reg = Registry::new(&events);
        for e in &events {
            let records = store(e);
            let set = match sample_counterfactuals(e, &reg, &records, 10) {
                Ok(s) => s,
                Err(err) => {
                    problems.push(format!("{}: {err}", e.id));
                    continue;
                }
            };
            checked += 1;
            let targets: BTreeSet<u8> = set.identical.iter().map(|r| r.target_sentiment).collect();
            if set.identical.len() != 10
                || targets.len() != 10
                || set.identical.iter().any(|r| r.parent_event_id != e.id || r.event_type != e.event_type)
            {
                problems.push(format!("{}: identical set wrong", e.id));
            }
            let want: Vec<EventType> = EventType::ALL.into_iter().filter(|&t| t != e.event_type).collect();
            let types: Vec<EventType> = set.diverse.iter().map(|d| d.event_type).collect();
            if set.diverse.len() != 5 || types != want {
                problems.push(format!("{}: diverse types {types:?}", e.id));
                continue;
            }
            for d in &set.diverse {
                let expect = oracle(e, &events, d.event_type);
                if d.event_id != expect {
                    problems.push(format!("{}: {} picked {} not {expect}", e.id, d.event_type.as_str(), d.event_id));
                }
            }
        }
    }
    Outcome::check(
        problems.is_empty() && checked == 600,
        format!(
            "{checked} samples over three 200-event registries: 10 identical + 5 diverse each, diverse picks equal the all-pairs oracle{}",
            if problems.is_empty() { String::new() } else { format!("; {} problems: {}", problems.len(), problems[..problems.len().min(3)].join("; ")) }
        ),
    )
}

pub fn prompts() -> Outcome {
    let golden = |name: &str| fs::read_to_string(fixtures().join("golden").join(name)).unwrap();
    let blob = fs::read(fixtures().join("archive/CPIReport/2023-04-12.txt")).unwrap();
    let text = normalize_document(&blob, RawFormat::Txt).unwrap();
    let chunks = split_chunks(&text, 100);
    let summaries = vec![
        "Prices rose 0.1 percent.".to_string(),
        "Core prices rose 0.4 percent.".to_string(),
        "Real earnings declined.".to_string(),
    ];
    let rendered = [
        ("chunk summary", chunk_prompt(2, EventType::CpiReport.report_name(), 50, chunks[1]), "prompt_chunk2_cpi.txt"),
        ("final summary", final_prompt("CPI", 50, &summaries), "prompt_final_cpi.txt"),
        (
            "sentiment",
            sentiment_prompt(EventType::EmploymentSituation.report_name(), "Payrolls rose by 311,000 with strong gains."),
            "prompt_sentiment_es.txt",
        ),
        (
            "counterfactual",
            counterfactual_prompt(3, 8, "Energy prices fell 6.4 percent, a weak reading.").unwrap(),
            "prompt_counterfactual_3_8.txt",
        ),
    ];
    let differing: Vec<&str> = rendered.iter().filter(|(_, got, file)| *got != golden(file)).map(|(n, _, _)| *n).collect();
    Outcome::check(
        differing.is_empty(),
        if differing.is_empty() {
            "chunk, final, sentiment and counterfactual prompts equal their goldens byte for byte".to_string()
        } else {
            format!("differ from golden: {}", differing.join(", "))
        },
    )
}
