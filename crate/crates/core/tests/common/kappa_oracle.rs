//! Weighted Fleiss' Kappa by direct enumeration of rating pairs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn w(a: usize, b: usize, k: usize) -> f64 {
    1.0 - (a as f64 - b as f64).abs() / (k as f64 - 1.0)
}

/// Expands each subject into individual ratings and averages the weight
/// over every ordered pair of distinct raters, and over every ordered pair
/// of pooled ratings for the chance term.
pub fn brute_kappa(k: usize, labels: &[Vec<usize>]) -> f64 {
    let mut observed = 0.0;
    for l in labels {
        let (mut sum, mut pairs) = (0.0, 0usize);
        for (i, a) in l.iter().enumerate() {
            for (j, b) in l.iter().enumerate() {
                if i != j {
                    sum += w(*a, *b, k);
                    pairs += 1;
                }
            }
        }
        observed += sum / pairs as f64;
    }
    observed /= labels.len() as f64;
    let pool: Vec<usize> = labels.iter().flatten().copied().collect();
    let mut expected = 0.0;
    for a in &pool {
        for b in &pool {
            expected += w(*a, *b, k);
        }
    }
    expected /= (pool.len() * pool.len()) as f64;
    (observed - expected) / (1.0 - expected)
}

pub fn random_labels(rng: &mut ChaCha8Rng, subjects: usize, raters: usize, k: usize) -> Vec<Vec<usize>> {
    (0..subjects).map(|_| (0..raters).map(|_| rng.gen_range(0..k)).collect()).collect()
}
