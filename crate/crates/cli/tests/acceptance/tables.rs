//! Table block golden and serialize/parse round trip.

use std::fs;

use eventcast_core::corpus::{parse_table, serialize_table, StructuredTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{fixtures, Outcome};

const ALPHABET: &[char] = &['a', 'Z', '7', ' ', '.', '|', '\\', '%', '-', '<', '>', '/', 'n'];

fn cell(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(0..=12);
    (0..n).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
}

pub fn criterion() -> Outcome {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let example = StructuredTable::new(s(&["Header 1", "Header 2", "Header 3"]), vec![s(&["Cell 1", "Cell 2", "Cell 3"])]).unwrap();
    let golden = fs::read_to_string(fixtures().join("golden/table_appendix.txt")).unwrap();
    let exact = serialize_table(&example).map(|b| b == golden).unwrap_or(false);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut broken = Vec::new();
    let mut escaped = 0;
    for case in 0..2000 {
        let cols = rng.gen_range(1..=5);
        let rows = rng.gen_range(0..=5);
        let table = StructuredTable {
            headers: (0..cols).map(|_| cell(&mut rng)).collect(),
            rows: (0..rows).map(|_| (0..cols).map(|_| cell(&mut rng)).collect()).collect(),
        };
        let block = match serialize_table(&table) {
            Ok(b) => b,
            Err(e) => {
                broken.push(format!("case {case}: {e}"));
                continue;
            }
        };
        if block.contains("\\|") || block.contains("\\\\") {
            escaped += 1;
        }
        match parse_table(&block) {
            Ok(back) if back == table => {}
            Ok(_) => broken.push(format!("case {case}: round trip changed the table")),
            Err(e) => broken.push(format!("case {case}: {e}")),
        }
    }
    Outcome::check(
        exact && broken.is_empty(),
        format!(
            "example block byte-exact: {exact}; 2000 random tables ({escaped} with escapes) round trip: {}",
            if broken.is_empty() { "all".to_string() } else { broken[..broken.len().min(3)].join("; ") }
        ),
    )
}
