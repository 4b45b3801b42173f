//! Window alignment against a linear scan, and the chronological split.

use chrono::{DateTime, Duration, TimeZone, Utc};
use eventcast_core::market::{align_at, split_dataset, AlignedSample, Bar, BarSeries, ChannelStats};
use eventcast_core::CoreError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

fn random_series(rng: &mut ChaCha8Rng, n: usize) -> BarSeries {
    let mut t = Utc.with_ymd_and_hms(2020, 1, 2, 14, 30, 0).unwrap();
    let mut price = 100.0;
    let mut bars = Vec::with_capacity(n);
    for _ in 0..n {
        let open = price;
        let close = (price + rng.gen_range(-1.0..1.0f64)).max(1.0);
        let high = open.max(close) + rng.gen_range(0.0..0.5);
        let low = (open.min(close) - rng.gen_range(0.0..0.5)).max(0.5);
        bars.push(Bar { timestamp: t, open, high, low, close });
        price = close;
        let step = if rng.gen_bool(0.05) { rng.gen_range(2..300) } else { 1 };
        t += Duration::seconds(300 * step);
    }
    BarSeries::new("SPX", bars).unwrap()
}

#[derive(Debug, PartialEq)]
enum Expect {
    Windows(Vec<Bar>, Vec<Bar>),
    BeforeFirst,
    ShortHistory,
    ShortFuture,
}

fn scan(series: &BarSeries, ts: DateTime<Utc>, tau: usize) -> Expect {
    let bars = series.bars();
    let mut anchor = None;
    for (i, b) in bars.iter().enumerate() {
        if b.timestamp <= ts {
            anchor = Some(i);
        }
    }
    let Some(a) = anchor else { return Expect::BeforeFirst };
    let pre: Vec<Bar> = (0..bars.len()).filter(|&j| j <= a && a - j < tau).map(|j| bars[j]).collect();
    let post: Vec<Bar> = (0..bars.len()).filter(|&j| j > a && j - a <= tau).map(|j| bars[j]).collect();
    if pre.len() < tau {
        Expect::ShortHistory
    } else if post.len() < tau {
        Expect::ShortFuture
    } else {
        Expect::Windows(pre, post)
    }
}

fn classify(got: eventcast_core::Result<AlignedSample>) -> Result<Expect, String> {
    match got {
        Ok(s) => Ok(Expect::Windows(s.pre, s.post)),
        Err(CoreError::Alignment(m)) if m.contains("precedes") => Ok(Expect::BeforeFirst),
        Err(CoreError::Alignment(m)) if m.contains("up to the anchor") => Ok(Expect::ShortHistory),
        Err(CoreError::Alignment(m)) if m.contains("after the anchor") => Ok(Expect::ShortFuture),
        Err(e) => Err(format!("{e}")),
    }
}

fn boundaries() -> Vec<String> {
    let mut problems = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let series = random_series(&mut rng, 100);
    let bars = series.bars();
    let tau = 10;
    let mut case = |name: &str, ts: DateTime<Utc>, tau: usize, want: &Expect| {
        match classify(align_at(&series, "e", ts, tau)) {
            Ok(got) if &got == want => {}
            Ok(got) => problems.push(format!("{name}: got {got:?}")),
            Err(e) => problems.push(format!("{name}: {e}")),
        }
    };
    case("before first bar", bars[0].timestamp - Duration::seconds(1), tau, &Expect::BeforeFirst);
    case("one bar short of history", bars[tau - 2].timestamp, tau, &Expect::ShortHistory);
    case("one bar short of future", bars[99 - tau + 1].timestamp, tau, &Expect::ShortFuture);
    case("after last bar", bars[99].timestamp + Duration::days(1), tau, &Expect::ShortFuture);
    let exact = scan(&series, bars[tau - 1].timestamp, tau);
    case("earliest valid anchor", bars[tau - 1].timestamp, tau, &exact);
    let between = bars[50].timestamp + Duration::seconds(1);
    case("between bars", between, tau, &scan(&series, between, tau));
    if !matches!(align_at(&series, "e", bars[50].timestamp, 0), Err(CoreError::Config(_))) {
        problems.push("tau 0 is not a config error".into());
    }
    problems
}

pub fn alignment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut windows, mut errors) = (0, 0);
    let mut mismatches = Vec::new();
    for case in 0..1000 {
        let n = rng.gen_range(20..400);
        let series = random_series(&mut rng, n);
        let first = series.bars()[0].timestamp;
        let span = (series.bars()[n - 1].timestamp - first).num_seconds();
        let ts = first + Duration::seconds(rng.gen_range(-3600..span + 3600));
        let tau = if rng.gen_bool(0.3) { [35, 70, 140][rng.gen_range(0..3)] } else { rng.gen_range(1..60) };
        let want = scan(&series, ts, tau);
        match classify(align_at(&series, "e", ts, tau)) {
            Ok(got) if got == want => {
                if matches!(got, Expect::Windows(..)) {
                    windows += 1
                } else {
                    errors += 1
                }
            }
            Ok(_) => mismatches.push(format!("case {case}")),
            Err(e) => mismatches.push(format!("case {case}: {e}")),
        }
    }
    mismatches.extend(boundaries());
    Outcome::check(
        mismatches.is_empty(),
        format!(
            "1000 instances ({windows} windows, {errors} documented errors) identical to the scan, 7 boundary cases{}",
            if mismatches.is_empty() { String::new() } else { format!("; mismatches: {}", mismatches.join(", ")) }
        ),
    )
}

fn sample_at(secs: i64, id: &str) -> AlignedSample {
    let bar = Bar { timestamp: Utc.timestamp_opt(1_600_000_200, 0).unwrap(), open: 1.0, high: 1.0, low: 1.0, close: 1.0 };
    AlignedSample {
        event_id: id.to_string(),
        asset_id: "SPX".into(),
        tau: 1,
        event_timestamp: Utc.timestamp_opt(1_600_000_000 + secs, 0).unwrap(),
        anchor_index: 0,
        pre: vec![bar],
        post: vec![bar],
        stats: [ChannelStats { mean: 1.0, std: 1.0 }; 4],
    }
}

pub fn split() -> Outcome {
    let mut problems = Vec::new();
    let ten = (0..10).rev().map(|i| sample_at(i * 60, &format!("e{i}"))).collect();
    match split_dataset(ten) {
        Ok(s) if s.sizes() == (6, 2, 2) => {}
        Ok(s) => problems.push(format!("N=10 gave {:?}", s.sizes())),
        Err(e) => problems.push(e.to_string()),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let n = rng.gen_range(5..200);
        let samples: Vec<AlignedSample> =
            (0..n).map(|i| sample_at(rng.gen_range(0..5_000), &format!("e{i}"))).collect();
        let s = split_dataset(samples).unwrap();
        let want = (n * 6 / 10, n * 2 / 10, n - n * 6 / 10 - n * 2 / 10);
        if s.sizes() != want {
            problems.push(format!("N={n} gave {:?}", s.sizes()));
        }
        let max_train = s.train.iter().map(|x| x.event_timestamp).max().unwrap();
        let min_test = s.test.iter().map(|x| x.event_timestamp).min().unwrap();
        let val_ok = s.validation.iter().all(|v| v.event_timestamp >= max_train && v.event_timestamp <= min_test);
        if max_train > min_test || !val_ok {
            problems.push(format!("N={n} not chronological"));
        }
    }
    Outcome::check(
        problems.is_empty(),
        if problems.is_empty() {
            "N=10 -> 6/2/2; 500 random N in [5, 200) follow the floor rule and stay chronological".to_string()
        } else {
            problems.join("; ")
        },
    )
}
