//! Fixed polarity lexicon used by the offline stub backend.
//!
//! Each pair is `(positive, negative)`. A text's score is the number of
//! positive words minus the number of negative words, matched
//! case-insensitively on alphabetic tokens.

pub const POLARITY_PAIRS: [(&str, &str); 20] = [
    ("strong", "weak"),
    ("strengthened", "weakened"),
    ("growth", "contraction"),
    ("gains", "losses"),
    ("gain", "loss"),
    ("robust", "fragile"),
    ("improved", "deteriorated"),
    ("improving", "deteriorating"),
    ("expanded", "contracted"),
    ("expansion", "recession"),
    ("solid", "soft"),
    ("increased", "decreased"),
    ("rose", "fell"),
    ("higher", "lower"),
    ("optimistic", "pessimistic"),
    ("confidence", "uncertainty"),
    ("stable", "volatile"),
    ("upbeat", "gloomy"),
    ("resilient", "sluggish"),
    ("accelerated", "slowed"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

pub fn polarity(word: &str) -> Option<Polarity> {
    let w = word.to_ascii_lowercase();
    POLARITY_PAIRS.iter().find_map(|(p, n)| {
        if *p == w {
            Some(Polarity::Positive)
        } else if *n == w {
            Some(Polarity::Negative)
        } else {
            None
        }
    })
}

/// The opposite-polarity partner of a lexicon word, lowercase.
pub fn opposite(word: &str) -> Option<&'static str> {
    let w = word.to_ascii_lowercase();
    POLARITY_PAIRS.iter().find_map(|(p, n)| {
        if *p == w {
            Some(*n)
        } else if *n == w {
            Some(*p)
        } else {
            None
        }
    })
}

/// Positive minus negative lexicon hits, with the two counts.
pub fn score(text: &str) -> (i64, usize, usize) {
    let mut pos = 0;
    let mut neg = 0;
    for token in text.split(|c: char| !c.is_ascii_alphabetic()) {
        match polarity(token) {
            Some(Polarity::Positive) => pos += 1,
            Some(Polarity::Negative) => neg += 1,
            None => {}
        }
    }
    (pos as i64 - neg as i64, pos, neg)
}

/// Stub rating: `5 + clamp(score, -5, 5)`.
pub fn rating(text: &str) -> u8 {
    (5 + score(text).0.clamp(-5, 5)) as u8
}
