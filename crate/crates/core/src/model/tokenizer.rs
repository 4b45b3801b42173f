//! Hashing word-piece tokenizer.
//!
//! Text is lowercased and split into alphabetic runs, single digits, and
//! single punctuation characters. Alphabetic runs longer than
//! [`PIECE_LEN`] characters are cut into pieces, continuation pieces
//! carrying a `##` prefix. Each piece maps to `fnv1a(piece) % vocab`.

pub const PIECE_LEN: usize = 8;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Splits text into word pieces, before hashing.
pub fn pieces(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut Vec<String>| {
        let chars: Vec<char> = word.chars().collect();
        for (i, chunk) in chars.chunks(PIECE_LEN).enumerate() {
            let s: String = chunk.iter().collect();
            out.push(if i == 0 { s } else { format!("##{s}") });
        }
        word.clear();
    };
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphabetic() {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            flush(&mut word, &mut out);
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !word.is_empty() {
        flush(&mut word, &mut out);
    }
    out
}

/// Token ids of the first `max_len` pieces.
pub fn tokenize(text: &str, vocab_size: usize, max_len: usize) -> Vec<usize> {
    pieces(text)
        .iter()
        .take(max_len)
        .map(|p| (fnv1a(p.as_bytes()) % vocab_size as u64) as usize)
        .collect()
}
