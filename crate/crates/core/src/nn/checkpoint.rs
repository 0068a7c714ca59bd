use std::io::{Read, Write};

use super::adamw::AdamState;
use super::mlp::{Activation, Mlp};
use super::neural::NeuralSde;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"W2SDECKP";
const VERSION: u32 = 1;

/// Trained networks plus optimizer state, enough to resume or evaluate.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: NeuralSde,
    pub drift_state: AdamState,
    pub diffusion_state: AdamState,
    pub epochs_completed: u64,
}

impl Checkpoint {
    pub fn fresh(model: NeuralSde) -> Self {
        let drift_state = AdamState::new(model.drift.param_count());
        let diffusion_state = AdamState::new(model.diffusion.param_count());
        Self {
            model,
            drift_state,
            diffusion_state,
            epochs_completed: 0,
        }
    }

    /// Layout: magic `W2SDECKP`, `u32` version, `u64` noise dim, `f64` time
    /// scale, drift net, diffusion net, both Adam states, `u64` epochs. A net
    /// is `u8` activation, `u32` depth, widths as `u64`, then its parameters;
    /// a state is `u64` step followed by the `m` and `v` vectors.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.model.diffusion.output_dim() as u64 / self.model.drift.output_dim() as u64).to_le_bytes());
        buf.extend_from_slice(&self.model.time_scale().to_le_bytes());
        for net in [&self.model.drift, &self.model.diffusion] {
            buf.push(net.activation().code());
            buf.extend_from_slice(&(net.widths().len() as u32).to_le_bytes());
            for w in net.widths() {
                buf.extend_from_slice(&(*w as u64).to_le_bytes());
            }
            push_f64s(&mut buf, net.params());
        }
        for state in [&self.drift_state, &self.diffusion_state] {
            buf.extend_from_slice(&state.step.to_le_bytes());
            push_f64s(&mut buf, &state.m);
            push_f64s(&mut buf, &state.v);
        }
        buf.extend_from_slice(&self.epochs_completed.to_le_bytes());
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let magic: [u8; 8] = read_array(&mut r)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let dim_noise = read_u64(&mut r)? as usize;
        let time_scale = f64::from_le_bytes(read_array(&mut r)?);
        let mut nets = Vec::with_capacity(2);
        for _ in 0..2 {
            let [code] = read_array::<_, 1>(&mut r)?;
            let act = Activation::from_code(code)
                .ok_or_else(|| Error::Format(format!("unknown activation code {code}")))?;
            let depth = u32::from_le_bytes(read_array(&mut r)?) as usize;
            if depth > 64 {
                return Err(Error::Format(format!("implausible depth {depth}")));
            }
            let widths = (0..depth)
                .map(|_| read_u64(&mut r).map(|v| v as usize))
                .collect::<Result<Vec<_>>>()?;
            let params = read_f64s(&mut r)?;
            nets.push(Mlp::from_params(&widths, act, params).map_err(|e| Error::Format(e.to_string()))?);
        }
        let diffusion = nets.pop().unwrap();
        let drift = nets.pop().unwrap();
        let model = NeuralSde::new(drift, diffusion, dim_noise, time_scale)?;
        let mut states = Vec::with_capacity(2);
        for n in [model.drift.param_count(), model.diffusion.param_count()] {
            let step = read_u64(&mut r)?;
            let m = read_f64s(&mut r)?;
            let v = read_f64s(&mut r)?;
            if m.len() != n || v.len() != n {
                return Err(Error::Format("optimizer state does not match network".into()));
            }
            states.push(AdamState { step, m, v });
        }
        let diffusion_state = states.pop().unwrap();
        let drift_state = states.pop().unwrap();
        let epochs_completed = read_u64(&mut r)?;
        Ok(Self {
            model,
            drift_state,
            diffusion_state,
            epochs_completed,
        })
    }
}

fn push_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let n = read_u64(r)? as usize;
    if n > 1 << 28 {
        return Err(Error::Format(format!("implausible vector length {n}")));
    }
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
