use super::assignment::linear_assignment;
use crate::error::{Error, Result};

/// Uniformly weighted point cloud: `len` points in `ℝ^dim`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDist {
    points: Vec<f64>,
    dim: usize,
}

impl EmpiricalDist {
    pub fn new(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || points.is_empty() {
            return Err(Error::EmptyInput);
        }
        if points.len() % dim != 0 {
            return Err(Error::DimMismatch {
                expected: dim,
                got: points.len() % dim,
            });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("empirical distribution has non-finite points"));
        }
        Ok(Self { points, dim })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

/// Optimal matching between two equal-size uniform clouds.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingPlan {
    /// Source point `i` is sent to target point `perm[i]`.
    pub perm: Vec<usize>,
    /// `(1/M) Σ_i |x_i - y_{perm[i]}|²`.
    pub cost: f64,
}

impl CouplingPlan {
    /// Gradient of `cost` with respect to the target points, plan held fixed.
    pub fn grad_dst(&self, src: &EmpiricalDist, dst: &EmpiricalDist) -> Vec<f64> {
        let d = src.dim();
        let w = 2.0 / src.len() as f64;
        let mut grad = vec![0.0; dst.points().len()];
        for (i, &j) in self.perm.iter().enumerate() {
            for k in 0..d {
                grad[j * d + k] = w * (dst.point(j)[k] - src.point(i)[k]);
            }
        }
        grad
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exact squared-Euclidean earth mover's cost between equal-size clouds.
pub fn emd_sq(src: &EmpiricalDist, dst: &EmpiricalDist) -> Result<CouplingPlan> {
    if src.len() != dst.len() {
        return Err(Error::SizeMismatch {
            left: src.len(),
            right: dst.len(),
        });
    }
    if src.dim() != dst.dim() {
        return Err(Error::DimMismatch {
            expected: src.dim(),
            got: dst.dim(),
        });
    }
    let m = src.len();
    let mut cost = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            cost[i * m + j] = sq_dist(src.point(i), dst.point(j));
        }
    }
    plan_from_cost(m, &cost)
}

/// Optimal plan for a precomputed `m × m` cost matrix; the plan's cost is
/// the mean matched entry.
pub fn plan_from_cost(m: usize, cost: &[f64]) -> Result<CouplingPlan> {
    let perm = linear_assignment(m, cost)?;
    let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i * m + j]).sum();
    Ok(CouplingPlan {
        perm,
        cost: total / m as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::w2sq_1d;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn identical_clouds_cost_nothing() {
        let a = EmpiricalDist::new(vec![0.0, 1.0, 2.0, 3.0, -1.0, 5.0], 2).unwrap();
        let plan = emd_sq(&a, &a).unwrap();
        assert_eq!(plan.cost, 0.0);
        assert_eq!(plan.perm, vec![0, 1, 2]);
    }

    #[test]
    fn three_points_in_2d_match_brute_force() {
        let src = EmpiricalDist::new(vec![0.0, 0.0, 1.0, 2.0, -1.0, 0.5], 2).unwrap();
        let dst = EmpiricalDist::new(vec![2.0, 2.0, 0.1, -0.3, -2.0, 1.0], 2).unwrap();
        let best = permutations(3)
            .into_iter()
            .map(|p| (0..3).map(|i| sq_dist(src.point(i), dst.point(p[i]))).sum::<f64>() / 3.0)
            .fold(f64::INFINITY, f64::min);
        assert!((emd_sq(&src, &dst).unwrap().cost - best).abs() < 1e-14);
    }

    #[test]
    fn agrees_with_quantile_form_in_1d() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let m = rng.random_range(1..60);
            let xs: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
            let ys: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..5.0)).collect();
            let plan = emd_sq(
                &EmpiricalDist::new(xs.clone(), 1).unwrap(),
                &EmpiricalDist::new(ys.clone(), 1).unwrap(),
            )
            .unwrap();
            let q = w2sq_1d(&xs, &ys).unwrap();
            assert!((plan.cost - q).abs() <= 1e-10 * (1.0 + q));
        }
    }

    #[test]
    fn size_mismatch() {
        let a = EmpiricalDist::new(vec![0.0, 1.0], 1).unwrap();
        let b = EmpiricalDist::new(vec![0.0], 1).unwrap();
        assert!(matches!(emd_sq(&a, &b), Err(Error::SizeMismatch { .. })));
    }
}
