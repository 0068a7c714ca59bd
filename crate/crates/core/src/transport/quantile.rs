use crate::error::{Error, Result};

fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}

/// Squared 2-Wasserstein distance between two 1D empirical measures.
///
/// Equal sizes pair the sorted samples; unequal sizes integrate the squared
/// difference of the two piecewise-constant quantile functions.
pub fn w2sq_1d(xs: &[f64], ys: &[f64]) -> Result<f64> {
    Ok(w2sq_1d_grad(xs, ys)?.0)
}

/// [`w2sq_1d`] together with its gradient with respect to `ys`, taken with
/// the sorted pairing held fixed.
pub fn w2sq_1d_grad(xs: &[f64], ys: &[f64]) -> Result<(f64, Vec<f64>)> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ox = sorted_order(xs);
    let oy = sorted_order(ys);
    let mut grad = vec![0.0; ys.len()];
    let (n, m) = (xs.len(), ys.len());
    if n == m {
        let w = 1.0 / n as f64;
        let mut total = 0.0;
        for (&a, &b) in ox.iter().zip(&oy) {
            let diff = ys[b] - xs[a];
            total += diff * diff;
            grad[b] = 2.0 * w * diff;
        }
        return Ok((total * w, grad));
    }
    // Breakpoints k/n and l/m in units of 1/(n·m).
    let unit = 1.0 / (n as f64 * m as f64);
    let (mut i, mut j, mut at) = (0usize, 0usize, 0usize);
    let mut total = 0.0;
    while i < n && j < m {
        let next_x = (i + 1) * m;
        let next_y = (j + 1) * n;
        let end = next_x.min(next_y);
        let len = (end - at) as f64 * unit;
        let diff = ys[oy[j]] - xs[ox[i]];
        total += len * diff * diff;
        grad[oy[j]] += 2.0 * len * diff;
        at = end;
        if next_x == end {
            i += 1;
        }
        if next_y == end {
            j += 1;
        }
    }
    Ok((total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_instance() {
        assert_eq!(w2sq_1d(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(w2sq_1d(&[1.0, 0.0], &[2.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn single_points() {
        assert_eq!(w2sq_1d(&[1.5], &[-0.5]).unwrap(), 4.0);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(w2sq_1d(&[], &[1.0]), Err(Error::EmptyInput)));
    }

    #[test]
    fn unequal_counts_by_hand() {
        // Quantiles: x = 0 on [0, 1/2), 2 on [1/2, 1); y = 1 everywhere.
        assert!((w2sq_1d(&[0.0, 2.0], &[1.0]).unwrap() - 1.0).abs() < 1e-15);
        // x = {0, 3} vs y = {0, 0, 3}: segments [0,1/2): 0 vs 0, [1/2,2/3): 3 vs 0, [2/3,1): 3 vs 3.
        let v = w2sq_1d(&[0.0, 3.0], &[0.0, 0.0, 3.0]).unwrap();
        assert!((v - 9.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn replicated_samples_match_equal_count_form() {
        let xs = [0.3, -1.2, 2.5];
        let ys = [1.0, 0.1, -0.4, 0.8, 2.2, -2.0];
        let xs2: Vec<f64> = xs.iter().flat_map(|&v| [v, v]).collect();
        let a = w2sq_1d(&xs, &ys).unwrap();
        let b = w2sq_1d(&xs2, &ys).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let xs = [0.3, -1.2, 2.5, 0.9];
        let ys = [1.0, 0.1, -0.4, 0.8, 2.2];
        let (_, g) = w2sq_1d_grad(&xs, &ys).unwrap();
        let h = 1e-7;
        for k in 0..ys.len() {
            let mut p = ys;
            p[k] += h;
            let mut q = ys;
            q[k] -= h;
            let fd = (w2sq_1d(&xs, &p).unwrap() - w2sq_1d(&xs, &q).unwrap()) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7);
        }
    }

    proptest! {
        #[test]
        fn symmetric_scaled_and_order_free(
            xs in prop::collection::vec(-10.0f64..10.0, 1..40),
            shift in -3.0f64..3.0,
            scale in 0.1f64..5.0,
        ) {
            let ys: Vec<f64> = xs.iter().rev().map(|v| v * 0.7 + shift).collect();
            let d = w2sq_1d(&xs, &ys).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert!((d - w2sq_1d(&ys, &xs).unwrap()).abs() <= 1e-12 * (1.0 + d));
            let sx: Vec<f64> = xs.iter().map(|v| v * scale).collect();
            let sy: Vec<f64> = ys.iter().map(|v| v * scale).collect();
            let ds = w2sq_1d(&sx, &sy).unwrap();
            prop_assert!((ds - scale * scale * d).abs() <= 1e-10 * (1.0 + ds));
            let mut shuffled = ys.clone();
            shuffled.rotate_left(ys.len() / 2);
            prop_assert_eq!(w2sq_1d(&xs, &shuffled).unwrap(), d);
            prop_assert_eq!(w2sq_1d(&xs, &xs).unwrap(), 0.0);
        }
    }
}
