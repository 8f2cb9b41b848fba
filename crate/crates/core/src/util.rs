//! Small numeric helpers shared across modules.

/// Pairwise (cascade) summation. Fixed reduction tree for a given length.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        acc
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Sum that does not depend on the order of `values`: the terms are sorted
/// before a pairwise reduction.
pub fn order_free_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    pairwise_sum(&sorted)
}

/// SplitMix64 output function applied to `state`.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `index` derived from a base seed. Distinct indices give
/// distinct seeds because the SplitMix64 finaliser is a bijection.
pub fn stream_seed(base: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base).wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Left-continuous empirical quantile (inverse of the right-continuous ECDF):
/// the `ceil(p * n)`-th order statistic, clamped to the sample range.
/// `sorted` must be ascending and nonempty.
pub fn type1_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    // Guard against products such as 0.05 * 100 landing one ulp above an integer.
    let rank = (p * n as f64 - 1e-9).ceil();
    let idx = if rank < 1.0 {
        0
    } else {
        (rank as usize - 1).min(n - 1)
    };
    sorted[idx]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 5050.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn order_free_sum_is_permutation_invariant() {
        let v = vec![1e16, 1.0, -1e16, 3.5, 1e-3, 7.25];
        let mut w = v.clone();
        w.reverse();
        w.swap(0, 3);
        assert_eq!(order_free_sum(&v).to_bits(), order_free_sum(&w).to_bits());
    }

    #[test]
    fn stream_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> =
            (0..10_000).map(|i| stream_seed(7, i)).collect();
        assert_eq!(seeds.len(), 10_000);
    }

    #[test]
    fn type1_quantile_order_statistics() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(type1_quantile(&v, 0.05), 5.0);
        assert_eq!(type1_quantile(&v, (1.0 - 0.9) / 2.0), 5.0);
        assert_eq!(type1_quantile(&v, 0.95), 95.0);
        assert_eq!(type1_quantile(&v, 0.0), 1.0);
        assert_eq!(type1_quantile(&v, 1.0), 100.0);
        assert_eq!(type1_quantile(&v, 0.051), 6.0);
    }
}
