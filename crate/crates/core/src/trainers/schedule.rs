//! Per-layer learning-rate factors for weighted DFA.

use crate::{Error, Result};

/// Factors `n * sqrt(j) / sum_{i=1..n} sqrt(i)` for layers `j = 1..n`, with
/// layer 1 on the input side. Their mean is 1, so the average learning rate
/// across layers stays at the base rate while early layers move slower.
pub fn wdfa_lr_factors(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("layer count must be at least 1".into()));
    }
    let total: f64 = (1..=n).map(|i| (i as f64).sqrt()).sum();
    Ok((1..=n)
        .map(|j| n as f64 * (j as f64).sqrt() / total)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_layer_is_unscaled() {
        assert_eq!(wdfa_lr_factors(1).unwrap(), vec![1.0]);
    }

    #[test]
    fn rejects_zero_layers() {
        assert!(wdfa_lr_factors(0).is_err());
    }

    #[test]
    fn four_layers() {
        let f = wdfa_lr_factors(4).unwrap();
        let expected = [0.65080, 0.92038, 1.12722, 1.30161];
        for (a, b) in f.iter().zip(expected) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
        assert!((f.iter().sum::<f64>() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn mean_one_and_increasing() {
        for n in 1..=16 {
            let f = wdfa_lr_factors(n).unwrap();
            let mean = f.iter().sum::<f64>() / n as f64;
            assert!((mean - 1.0).abs() < 1e-12, "n={n}: mean {mean}");
            assert!(f.windows(2).all(|w| w[0] < w[1]));
            let ratio = f[n - 1] / f[0];
            assert!((ratio - (n as f64).sqrt()).abs() < 1e-12);
        }
    }
}
