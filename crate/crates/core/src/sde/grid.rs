use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time mesh `0 = t_0 < t_1 < ... < t_N = T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_end: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::invalid(format!("final time must be positive, got {t_end}")));
        }
        if steps == 0 {
            return Err(Error::invalid("time grid needs at least one step"));
        }
        Ok(Self { t_end, steps })
    }

    /// Grid with step `dt`; `t_end / dt` must be an integer up to rounding.
    pub fn from_dt(t_end: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        let n = (t_end / dt).round();
        if n < 1.0 || ((n * dt - t_end).abs() > 1e-9 * t_end.max(1.0)) {
            return Err(Error::invalid(format!(
                "dt = {dt} does not divide the horizon {t_end}"
            )));
        }
        Self::new(t_end, n as usize)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Number of steps N; the grid has N + 1 points.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    /// `t_i = i * dt`, with the last point pinned to `T`.
    pub fn point(&self, i: usize) -> f64 {
        if i == self.steps {
            self.t_end
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.point(i)).collect()
    }

    /// Index stride that maps `coarse` onto this grid, if every coarse point
    /// is also a point of `self`.
    pub fn stride_to(&self, coarse: &TimeGrid) -> Result<usize> {
        if (self.t_end - coarse.t_end).abs() > 1e-12 * self.t_end.max(1.0) {
            return Err(Error::GridMismatch(format!(
                "horizons differ: {} vs {}",
                self.t_end, coarse.t_end
            )));
        }
        if self.steps % coarse.steps != 0 {
            return Err(Error::GridMismatch(format!(
                "coarse grid with {} steps is not a subset of a grid with {} steps",
                coarse.steps, self.steps
            )));
        }
        Ok(self.steps / coarse.steps)
    }

    pub(crate) fn check_same(&self, other: &TimeGrid) -> Result<()> {
        if self.steps != other.steps || (self.t_end - other.t_end).abs() > 1e-12 * self.t_end.max(1.0)
        {
            return Err(Error::GridMismatch(format!(
                "grids differ: T={} N={} vs T={} N={}",
                self.t_end, self.steps, other.t_end, other.steps
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_increase_and_hit_endpoints() {
        let g = TimeGrid::from_dt(2.0, 0.05).unwrap();
        assert_eq!(g.steps(), 40);
        let p = g.points();
        assert_eq!(p[0], 0.0);
        assert_eq!(*p.last().unwrap(), 2.0);
        assert!(p.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_bad_dt() {
        assert!(TimeGrid::from_dt(1.0, 0.3).is_err());
        assert!(TimeGrid::from_dt(1.0, 0.0).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn stride_requires_subset() {
        let fine = TimeGrid::new(1.0, 8).unwrap();
        assert_eq!(fine.stride_to(&TimeGrid::new(1.0, 2).unwrap()).unwrap(), 4);
        assert!(fine.stride_to(&TimeGrid::new(1.0, 3).unwrap()).is_err());
        assert!(fine.stride_to(&TimeGrid::new(2.0, 2).unwrap()).is_err());
    }
}
