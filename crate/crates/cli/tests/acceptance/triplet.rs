//! Triplet loss against closed forms and an explicit loop.

use eventcast_core::model::{distance, triplet_loss, Distance};
use eventcast_numerics::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

const MARGIN: f64 = 1.0;

fn vector(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    Tensor::matrix(1, n, (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap()
}

/// Point at distance `r` from `t` along a random direction.
fn at_distance(rng: &mut ChaCha8Rng, t: &Tensor, r: f64) -> Tensor {
    let dir = vector(rng, t.len());
    let norm = dir.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    Tensor::matrix(1, t.len(), t.data().iter().zip(dir.data()).map(|(a, d)| a + r * d / norm).collect()).unwrap()
}

fn loop_oracle(gt: &Tensor, cfs: &[Tensor], t: &Tensor, kind: Distance) -> f64 {
    let d_gt = distance(gt, t, kind).unwrap();
    let mut total = 0.0;
    for cf in cfs {
        let gap = d_gt - distance(cf, t, kind).unwrap() + MARGIN;
        if gap > 0.0 {
            total += gap;
        }
    }
    total / cfs.len() as f64
}

pub fn criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut exact_ties = true;
    let mut worst_equal = 0.0f64;
    let mut worst_far = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for case in 0..500 {
        let n = rng.gen_range(1..=8);
        let k = rng.gen_range(1..=15);
        let t = vector(&mut rng, n);
        let r = rng.gen_range(0.1..4.0);
        let gt = at_distance(&mut rng, &t, r);

        // Copies of the ground truth tie exactly; points on the same sphere
        // tie up to rounding of their construction.
        let copies = vec![gt.clone(); k];
        for kind in [Distance::Euclidean, Distance::Cosine] {
            if triplet_loss(&gt, &copies, &t, MARGIN, kind).unwrap() != MARGIN {
                exact_ties = false;
            }
        }
        let sphere: Vec<Tensor> = (0..k).map(|_| at_distance(&mut rng, &t, r)).collect();
        let l = triplet_loss(&gt, &sphere, &t, MARGIN, Distance::Euclidean).unwrap();
        worst_equal = worst_equal.max((l - MARGIN).abs());

        let far: Vec<Tensor> = (0..k)
            .map(|_| {
                let extra = rng.gen_range(1e-6..2.0);
                at_distance(&mut rng, &t, r + MARGIN + extra)
            })
            .collect();
        let l = triplet_loss(&gt, &far, &t, MARGIN, Distance::Euclidean).unwrap();
        worst_far = worst_far.max(l.abs());

        let kind = if case % 2 == 0 { Distance::Euclidean } else { Distance::Cosine };
        let mixed: Vec<Tensor> = (0..k).map(|_| vector(&mut rng, n)).collect();
        let l = triplet_loss(&gt, &mixed, &t, MARGIN, kind).unwrap();
        worst_oracle = worst_oracle.max((l - loop_oracle(&gt, &mixed, &t, kind)).abs());
    }
    let pass = exact_ties && worst_equal < 1e-9 && worst_far == 0.0 && worst_oracle <= 1e-12;
    Outcome::check(
        pass,
        format!(
            "500 cases: loss == margin for tied copies: {exact_ties}, |loss - margin| on a shared sphere {worst_equal:.1e}, loss when all counterfactuals are margin farther {worst_far:.1e}, max |loss - loop| {worst_oracle:.1e} <= 1e-12"
        ),
    )
}
