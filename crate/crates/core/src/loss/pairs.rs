use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Batches up to this size use every unordered pair.
pub const MAX_EXHAUSTIVE_ITEMS: usize = 512;

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Pairs `(i, j)` with `i < j`, sorted. All pairs for `n <= 512`; otherwise a
/// seeded uniform sample, without replacement, of `512 * 511 / 2` pairs.
pub fn select_pairs(n: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = pair_count(n);
    if n <= MAX_EXHAUSTIVE_ITEMS {
        let mut out = Vec::with_capacity(total);
        for i in 0..n {
            for j in i + 1..n {
                out.push((i, j));
            }
        }
        return out;
    }
    let budget = pair_count(MAX_EXHAUSTIVE_ITEMS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut linear = rand::seq::index::sample(&mut rng, total, budget).into_vec();
    linear.sort_unstable();
    linear.into_iter().map(|k| decode_pair(n, k)).collect()
}

/// Pairs preceding row `i` in the row-major upper triangle.
fn row_start(n: usize, i: usize) -> usize {
    i * (2 * n - i - 1) / 2
}

fn decode_pair(n: usize, k: usize) -> (usize, usize) {
    let (mut lo, mut hi) = (0, n - 1);
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if row_start(n, mid) <= k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let i = if row_start(n, hi) <= k { hi } else { lo };
    (i, i + 1 + (k - row_start(n, i)))
}

/// Pairwise (tree) summation in a fixed association order, so results do
/// not depend on how the terms were produced.
pub fn tree_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    tree_sum(&values[..mid]) + tree_sum(&values[mid..])
}
