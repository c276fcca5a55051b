/// Pairwise (cascade) summation with a fixed split: the result depends only on
/// the order of `values`, never on how they were produced.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        return values.iter().fold(0.0, |acc, v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Componentwise [`pairwise_sum`] over fixed-length arrays.
pub(crate) fn pairwise_sum_arrays<const N: usize>(values: &[[f64; N]]) -> [f64; N] {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        return values.iter().fold([0.0; N], |mut acc, v| {
            for i in 0..N {
                acc[i] += v[i];
            }
            acc
        });
    }
    let mid = values.len() / 2;
    let a = pairwise_sum_arrays(&values[..mid]);
    let b = pairwise_sum_arrays(&values[mid..]);
    std::array::from_fn(|i| a[i] + b[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_are_accurate_for_many_small_terms() {
        let n = 1 << 20;
        let values = vec![0.1; n];
        let naive: f64 = values.iter().sum();
        let exact = 0.1 * n as f64;
        assert!((pairwise_sum(&values) - exact).abs() < (naive - exact).abs());
        assert!((pairwise_sum(&values) - exact).abs() < 1e-9);
    }

    #[test]
    fn array_sum_matches_scalar_sum() {
        let values: Vec<[f64; 2]> = (0..100).map(|i| [i as f64 * 0.37, -(i as f64).sqrt()]).collect();
        let first: Vec<f64> = values.iter().map(|v| v[0]).collect();
        let second: Vec<f64> = values.iter().map(|v| v[1]).collect();
        let arr = pairwise_sum_arrays(&values);
        assert_eq!(arr[0], pairwise_sum(&first));
        assert_eq!(arr[1], pairwise_sum(&second));
    }
}
