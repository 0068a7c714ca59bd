use crate::error::{Error, Result};
use crate::sde::{Ensemble, SdeModel};

fn check_dims(truth: &dyn SdeModel, fit: &dyn SdeModel, ens: &Ensemble) -> Result<()> {
    for got in [fit.dim_state(), ens.dim()] {
        if got != truth.dim_state() {
            return Err(Error::DimMismatch {
                expected: truth.dim_state(),
                got,
            });
        }
    }
    if fit.dim_noise() != truth.dim_noise() {
        return Err(Error::DimMismatch {
            expected: truth.dim_noise(),
            got: fit.dim_noise(),
        });
    }
    Ok(())
}

/// Root of the mean over grid points of per-point ratios `num_i / den_i`;
/// grid points whose denominator vanishes are left out.
fn mean_ratio(num: &[f64], den: &[f64], what: &'static str) -> Result<f64> {
    let mut total = 0.0;
    let mut used = 0usize;
    for (n, d) in num.iter().zip(den) {
        if *d > 0.0 {
            total += n / d;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::ZeroDenominator(what));
    }
    Ok((total / used as f64).sqrt())
}

/// Mean relative L² drift error along the ground-truth paths:
/// `(1/(N+1) Σ_i Σ_j |f - f̂|² / Σ_j |f|²)^{1/2}` over grid points `t_0..t_N`.
pub fn relative_err_f(truth: &dyn SdeModel, fit: &dyn SdeModel, ens: &Ensemble) -> Result<f64> {
    check_dims(truth, fit, ens)?;
    let d = ens.dim();
    let mut f = vec![0.0; d];
    let mut g = vec![0.0; d];
    let grid = ens.grid();
    let mut num = vec![0.0; grid.len()];
    let mut den = vec![0.0; grid.len()];
    for i in 0..grid.len() {
        let t = grid.point(i);
        for j in 0..ens.n_traj() {
            let x = ens.state(j, i);
            truth.drift(x, t, &mut f);
            fit.drift(x, t, &mut g);
            for a in 0..d {
                num[i] += (f[a] - g[a]).powi(2);
                den[i] += f[a] * f[a];
            }
        }
    }
    mean_ratio(&num, &den, "ground-truth drift vanishes on every grid point")
}

/// Diffusion counterpart of [`relative_err_f`]. In 1D it compares `|σ|`
/// with `|σ̂|`; otherwise `σσᵀ` with `σ̂σ̂ᵀ` in the Frobenius norm,
/// normalized by the ground truth.
pub fn relative_err_sigma(truth: &dyn SdeModel, fit: &dyn SdeModel, ens: &Ensemble) -> Result<f64> {
    check_dims(truth, fit, ens)?;
    let d = ens.dim();
    let s = truth.dim_noise();
    let mut a = vec![0.0; d * s];
    let mut b = vec![0.0; d * s];
    let mut aa = vec![0.0; d * d];
    let mut bb = vec![0.0; d * d];
    let grid = ens.grid();
    let mut num = vec![0.0; grid.len()];
    let mut den = vec![0.0; grid.len()];
    for i in 0..grid.len() {
        let t = grid.point(i);
        for j in 0..ens.n_traj() {
            let x = ens.state(j, i);
            truth.diffusion(x, t, &mut a);
            fit.diffusion(x, t, &mut b);
            if d == 1 && s == 1 {
                num[i] += (a[0].abs() - b[0].abs()).powi(2);
                den[i] += a[0] * a[0];
                continue;
            }
            outer(&a, d, s, &mut aa);
            outer(&b, d, s, &mut bb);
            for k in 0..d * d {
                num[i] += (aa[k] - bb[k]).powi(2);
                den[i] += aa[k] * aa[k];
            }
        }
    }
    mean_ratio(&num, &den, "ground-truth diffusion vanishes on every grid point")
}

fn outer(m: &[f64], d: usize, s: usize, out: &mut [f64]) {
    for r in 0..d {
        for c in 0..d {
            out[r * d + c] = (0..s).map(|k| m[r * s + k] * m[c * s + k]).sum();
        }
    }
}
