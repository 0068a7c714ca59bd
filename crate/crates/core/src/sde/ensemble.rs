use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::sde::TimeGrid;

const MAGIC: &[u8; 8] = b"W2SDEENS";
const VERSION: u32 = 1;

/// `M` trajectories sampled on a shared [`TimeGrid`].
///
/// Storage is trajectory-major: state `k` of trajectory `j` at `t_i` is
/// `data[(j * (N + 1) + i) * d + k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    grid: TimeGrid,
    dim: usize,
    n_traj: usize,
    data: Vec<f64>,
    seed: u64,
    model_tag: String,
}

impl Ensemble {
    pub fn new(
        grid: TimeGrid,
        dim: usize,
        n_traj: usize,
        data: Vec<f64>,
        seed: u64,
        model_tag: impl Into<String>,
    ) -> Result<Self> {
        if n_traj == 0 {
            return Err(Error::invalid("ensemble needs at least one trajectory"));
        }
        if dim == 0 {
            return Err(Error::invalid("state dimension must be positive"));
        }
        let expected = n_traj * grid.len() * dim;
        if data.len() != expected {
            return Err(Error::DimMismatch {
                expected,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let per_traj = grid.len() * dim;
            return Err(Error::NonFinite {
                trajectory: pos / per_traj,
                step: (pos % per_traj) / dim,
            });
        }
        Ok(Self {
            grid,
            dim,
            n_traj,
            data,
            seed,
            model_tag: model_tag.into(),
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_traj(&self) -> usize {
        self.n_traj
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn model_tag(&self) -> &str {
        &self.model_tag
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn index(&self, traj: usize, step: usize) -> usize {
        (traj * self.grid.len() + step) * self.dim
    }

    pub fn state(&self, traj: usize, step: usize) -> &[f64] {
        let at = self.index(traj, step);
        &self.data[at..at + self.dim]
    }

    pub fn trajectory(&self, traj: usize) -> &[f64] {
        let per = self.grid.len() * self.dim;
        &self.data[traj * per..(traj + 1) * per]
    }

    /// All states at `t_step`, `M × d` row-major.
    pub fn marginal(&self, step: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_traj * self.dim);
        for j in 0..self.n_traj {
            out.extend_from_slice(self.state(j, step));
        }
        out
    }

    /// Coordinate `k` of every trajectory at `t_step`.
    pub fn marginal_coord(&self, step: usize, k: usize) -> Vec<f64> {
        (0..self.n_traj)
            .map(|j| self.data[self.index(j, step) + k])
            .collect()
    }

    pub fn initial_states(&self) -> Vec<f64> {
        self.marginal(0)
    }

    /// Sub-ensemble made of the listed trajectories, in order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.grid.len() * self.dim);
        for &j in indices {
            if j >= self.n_traj {
                return Err(Error::invalid(format!(
                    "trajectory index {j} out of range for {} trajectories",
                    self.n_traj
                )));
            }
            data.extend_from_slice(self.trajectory(j));
        }
        Self::new(
            self.grid.clone(),
            self.dim,
            indices.len(),
            data,
            self.seed,
            self.model_tag.clone(),
        )
    }

    /// Restriction to a coarser grid whose points are all on `self.grid`.
    ///
    /// As a piecewise-constant path the projected trajectory takes the value
    /// `X(t_i)` on `[t_i, t_{i+1})`, so only the coarse knots are kept.
    pub fn project_grid(&self, coarse: &TimeGrid) -> Result<Self> {
        let stride = self.grid.stride_to(coarse)?;
        let mut data = Vec::with_capacity(self.n_traj * coarse.len() * self.dim);
        for j in 0..self.n_traj {
            for i in 0..coarse.len() {
                data.extend_from_slice(self.state(j, i * stride));
            }
        }
        Self::new(
            coarse.clone(),
            self.dim,
            self.n_traj,
            data,
            self.seed,
            self.model_tag.clone(),
        )
    }

    /// Little-endian binary dump; [`Ensemble::read_binary`] restores it
    /// bit-for-bit.
    ///
    /// Layout: magic `W2SDEENS`, `u32` version, `u64` M, `u64` N, `u64` d,
    /// `f64` T, `u64` seed, `u32` tag length, tag bytes, then the
    /// `M·(N+1)·d` states as `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.n_traj as u64).to_le_bytes())?;
        w.write_all(&(self.grid.steps() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&self.grid.t_end().to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        let tag = self.model_tag.as_bytes();
        w.write_all(&(tag.len() as u32).to_le_bytes())?;
        w.write_all(tag)?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not an ensemble file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported ensemble version {version}")));
        }
        let n_traj = read_u64(&mut r)? as usize;
        let steps = read_u64(&mut r)? as usize;
        let dim = read_u64(&mut r)? as usize;
        let t_end = f64::from_le_bytes(read_array(&mut r)?);
        let seed = read_u64(&mut r)?;
        let tag_len = read_u32(&mut r)? as usize;
        let mut tag = vec![0u8; tag_len];
        r.read_exact(&mut tag)?;
        let tag = String::from_utf8(tag).map_err(|_| Error::Format("tag is not utf-8".into()))?;
        let grid = TimeGrid::new(t_end, steps)?;
        let count = n_traj
            .checked_mul(grid.len())
            .and_then(|v| v.checked_mul(dim))
            .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
        let mut bytes = vec![0u8; count * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(grid, dim, n_traj, data, seed, tag)
    }

    /// CSV with columns `traj_id,t,x_1..x_d`, one row per trajectory point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("traj_id,t");
        for k in 1..=self.dim {
            header.push_str(&format!(",x_{k}"));
        }
        writeln!(w, "{header}")?;
        let times = self.grid.points();
        for j in 0..self.n_traj {
            for (i, t) in times.iter().enumerate() {
                write!(w, "{j},{t}")?;
                for v in self.state(j, i) {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// Per-timestep sample mean and population variance of each coordinate.
    pub fn moments(&self) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
        let m = self.n_traj as f64;
        (0..self.grid.len())
            .map(|i| {
                let mut mean = vec![0.0; self.dim];
                let mut var = vec![0.0; self.dim];
                for j in 0..self.n_traj {
                    for (k, v) in self.state(j, i).iter().enumerate() {
                        mean[k] += v;
                    }
                }
                mean.iter_mut().for_each(|v| *v /= m);
                for j in 0..self.n_traj {
                    for (k, v) in self.state(j, i).iter().enumerate() {
                        var[k] += (v - mean[k]).powi(2);
                    }
                }
                var.iter_mut().for_each(|v| *v /= m);
                (self.grid.point(i), mean, var)
            })
            .collect()
    }
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> Ensemble {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        Ensemble::new(grid, 1, 2, vec![0.0, 0.5, 1.0, 2.0, 2.5, 3.0], 7, "toy").unwrap()
    }

    #[test]
    fn layout_accessors() {
        let e = toy();
        assert_eq!(e.state(1, 2), &[3.0]);
        assert_eq!(e.marginal(1), vec![0.5, 2.5]);
        assert_eq!(e.select(&[1]).unwrap().trajectory(0), &[2.0, 2.5, 3.0]);
    }

    #[test]
    fn rejects_non_finite() {
        let grid = TimeGrid::new(1.0, 1).unwrap();
        let err = Ensemble::new(grid, 1, 2, vec![0.0, 1.0, f64::NAN, 0.0], 0, "x").unwrap_err();
        assert!(matches!(err, Error::NonFinite { trajectory: 1, step: 0 }));
    }

    #[test]
    fn projection_identity() {
        let e = toy();
        assert_eq!(e.project_grid(e.grid()).unwrap(), e);
    }

    #[test]
    fn projection_drops_midpoint() {
        let e = toy();
        let coarse = TimeGrid::new(1.0, 1).unwrap();
        let p = e.project_grid(&coarse).unwrap();
        assert_eq!(p.data(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(p.project_grid(&coarse).unwrap(), p);
    }

    #[test]
    fn projection_rejects_foreign_grid() {
        let e = toy();
        let err = e.project_grid(&TimeGrid::new(1.0, 3).unwrap()).unwrap_err();
        assert!(matches!(err, Error::GridMismatch(_)));
    }

    #[test]
    fn csv_shape() {
        let mut out = Vec::new();
        toy().write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "traj_id,t,x_1");
        assert_eq!(lines.len(), 1 + 6);
        assert_eq!(lines[6], "1,1,3");
    }

    #[test]
    fn binary_rejects_garbage() {
        assert!(Ensemble::read_binary(&b"NOTANENSEMBLE..."[..]).is_err());
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(
            m in 1usize..5,
            n in 1usize..6,
            d in 1usize..3,
            seed in any::<u64>(),
            raw in proptest::collection::vec(-1e300f64..1e300, 60),
        ) {
            let grid = TimeGrid::new(1.7, n).unwrap();
            let len = m * (n + 1) * d;
            let data: Vec<f64> = raw.iter().cycle().take(len).copied().collect();
            let e = Ensemble::new(grid, d, m, data, seed, "prop").unwrap();
            let mut buf = Vec::new();
            e.write_binary(&mut buf).unwrap();
            let back = Ensemble::read_binary(&buf[..]).unwrap();
            prop_assert_eq!(back.grid().t_end().to_bits(), e.grid().t_end().to_bits());
            let same = back.data().iter().zip(e.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
            prop_assert_eq!(back, e);
        }
    }
}
