use std::f64::consts::TAU;

use super::emd::EmpiricalDist;
use super::quantile::w2sq_1d_grad;
use crate::error::{Error, Result};

fn angle_bin(p: &[f64], m: usize) -> usize {
    let mut theta = p[1].atan2(p[0]);
    if theta < 0.0 {
        theta += TAU;
    }
    ((theta / (TAU / m as f64)) as usize).min(m - 1)
}

/// Angle-binned W2² for planar clouds: points are grouped into `m` equal
/// angular sectors of `[0, 2π)` measured from `(1, 0)`, and the 1D W2² of
/// the radii in each sector is averaged with weights given by the `dst`
/// (predicted) sector counts.
///
/// A sector with no `dst` points has weight zero. A sector that holds `dst`
/// points but no `src` points carries no comparison and is skipped.
pub fn sliced_w2sq_weighted(src: &EmpiricalDist, dst: &EmpiricalDist, m: usize) -> Result<f64> {
    Ok(sliced_w2sq_weighted_grad(src, dst, m)?.0)
}

/// [`sliced_w2sq_weighted`] and its gradient with respect to the `dst`
/// points, with sector memberships and sorted pairings held fixed.
pub fn sliced_w2sq_weighted_grad(src: &EmpiricalDist, dst: &EmpiricalDist, m: usize) -> Result<(f64, Vec<f64>)> {
    if m == 0 {
        return Err(Error::invalid("sliced loss needs at least one bin"));
    }
    if src.dim() != 2 || dst.dim() != 2 {
        return Err(Error::DimMismatch {
            expected: 2,
            got: if src.dim() != 2 { src.dim() } else { dst.dim() },
        });
    }
    let mut src_r = vec![Vec::new(); m];
    for i in 0..src.len() {
        let p = src.point(i);
        src_r[angle_bin(p, m)].push(p[0].hypot(p[1]));
    }
    let mut dst_idx = vec![Vec::new(); m];
    for i in 0..dst.len() {
        dst_idx[angle_bin(dst.point(i), m)].push(i);
    }
    let total = dst.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; dst.points().len()];
    for k in 0..m {
        if dst_idx[k].is_empty() || src_r[k].is_empty() {
            continue;
        }
        let w = dst_idx[k].len() as f64 / total;
        let radii: Vec<f64> = dst_idx[k]
            .iter()
            .map(|&i| {
                let p = dst.point(i);
                p[0].hypot(p[1])
            })
            .collect();
        let (v, gr) = w2sq_1d_grad(&src_r[k], &radii)?;
        value += w * v;
        for (&i, (&r, g)) in dst_idx[k].iter().zip(radii.iter().zip(gr)) {
            if r > 0.0 {
                let p = dst.point(i);
                grad[2 * i] += w * g * p[0] / r;
                grad[2 * i + 1] += w * g * p[1] / r;
            }
        }
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::w2sq_1d;

    fn cloud(points: &[(f64, f64)]) -> EmpiricalDist {
        EmpiricalDist::new(points.iter().flat_map(|&(x, y)| [x, y]).collect(), 2).unwrap()
    }

    #[test]
    fn identical_clouds() {
        let a = cloud(&[(1.0, 0.5), (-0.3, 2.0), (0.0, -1.0)]);
        assert_eq!(sliced_w2sq_weighted(&a, &a, 8).unwrap(), 0.0);
    }

    #[test]
    fn one_bin_is_radius_w2() {
        let a = cloud(&[(1.0, 0.5), (-0.3, 2.0), (0.0, -1.0)]);
        let b = cloud(&[(2.0, 0.0), (0.3, 0.4), (-1.0, -1.0)]);
        let r = |c: &EmpiricalDist| (0..3).map(|i| c.point(i)[0].hypot(c.point(i)[1])).collect::<Vec<_>>();
        let expected = w2sq_1d(&r(&a), &r(&b)).unwrap();
        assert!((sliced_w2sq_weighted(&a, &b, 1).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn positive_axis_uses_first_bin_only() {
        let a = cloud(&[(1.0, 0.0), (3.0, 0.0)]);
        let b = cloud(&[(2.0, 0.0), (5.0, 0.0)]);
        let expected = w2sq_1d(&[1.0, 3.0], &[2.0, 5.0]).unwrap();
        assert_eq!(sliced_w2sq_weighted(&a, &b, 4).unwrap(), expected);
    }

    #[test]
    fn weights_follow_predicted_counts() {
        // dst: one point in sector 0, three in sector 1 (of 4).
        let a = cloud(&[(1.0, 0.1), (0.1, 1.0)]);
        let b = cloud(&[(2.0, 0.1), (0.1, 2.0), (0.1, 3.0), (0.2, 1.0)]);
        let r = |x: f64, y: f64| x.hypot(y);
        let s0 = w2sq_1d(&[r(1.0, 0.1)], &[r(2.0, 0.1)]).unwrap();
        let s1 = w2sq_1d(&[r(0.1, 1.0)], &[r(0.1, 2.0), r(0.1, 3.0), r(0.2, 1.0)]).unwrap();
        let v = sliced_w2sq_weighted(&a, &b, 4).unwrap();
        assert!((v - (0.25 * s0 + 0.75 * s1)).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let a = cloud(&[(1.0, 0.5), (-0.3, 2.0), (0.4, -1.0), (-1.0, -0.2)]);
        let pts = [(1.5, 0.2), (-0.5, 1.0), (0.3, -2.0), (-1.1, -0.6)];
        let b = cloud(&pts);
        let (_, g) = sliced_w2sq_weighted_grad(&a, &b, 4).unwrap();
        let h = 1e-7;
        for k in 0..8 {
            let mut p = b.points().to_vec();
            p[k] += h;
            let mut q = b.points().to_vec();
            q[k] -= h;
            let fp = sliced_w2sq_weighted(&a, &EmpiricalDist::new(p, 2).unwrap(), 4).unwrap();
            let fq = sliced_w2sq_weighted(&a, &EmpiricalDist::new(q, 2).unwrap(), 4).unwrap();
            assert!(((fp - fq) / (2.0 * h) - g[k]).abs() < 1e-6);
        }
    }
}
