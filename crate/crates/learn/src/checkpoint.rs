//! Binary weight files: `SRLW` header, version, run metadata, then each
//! network's layer sizes and row-major little-endian `f64` parameters,
//! followed by the optimizer moments.

use std::path::Path;

use thiserror::Error;

use crate::config::TrainConfig;
use crate::nn::{Adam, Mlp};
use crate::policy::Policy;

const MAGIC: &[u8; 4] = b"SRLW";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("network `{net}` has layer sizes {found:?}, expected {expected:?}")]
    ShapeMismatch {
        net: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything needed to resume training or to branch with the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub policy: Policy,
    pub target_critic: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    /// Resolved run configuration, free-form text.
    pub meta: String,
}

impl Checkpoint {
    pub fn fresh(policy: Policy, cfg: &TrainConfig, meta: String) -> Self {
        Self {
            target_critic: policy.critic.clone(),
            actor_opt: Adam::new(policy.actor.num_params(), cfg.actor_lr),
            critic_opt: Adam::new(policy.critic.num_params(), cfg.critic_lr),
            policy,
            meta,
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_net(out: &mut Vec<u8>, net: &Mlp) {
    put_u32(out, net.sizes().len() as u32);
    for &s in net.sizes() {
        put_u32(out, s as u32);
    }
    put_f64s(out, net.params());
}

fn put_adam(out: &mut Vec<u8>, a: &Adam) {
    put_u64(out, a.t);
    put_f64s(out, &[a.lr, a.beta1, a.beta2, a.eps]);
    put_u64(out, a.m.len() as u64);
    put_f64s(out, &a.m);
    put_f64s(out, &a.v);
}

pub fn save(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_u64(&mut out, ck.meta.len() as u64);
    out.extend_from_slice(ck.meta.as_bytes());
    put_u32(&mut out, 3);
    for net in [&ck.policy.actor, &ck.policy.critic, &ck.target_critic] {
        put_net(&mut out, net);
    }
    put_adam(&mut out, &ck.actor_opt);
    put_adam(&mut out, &ck.critic_opt);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| CheckpointError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| CheckpointError::Corrupt("length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn net(&mut self, name: &'static str, expected: Option<&[usize]>) -> Result<Mlp, CheckpointError> {
        let layers = self.u32()? as usize;
        if layers > 64 {
            return Err(CheckpointError::Corrupt(format!("{layers} layers in `{name}`")));
        }
        let sizes = (0..layers)
            .map(|_| self.u32().map(|s| s as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(exp) = expected {
            if exp != sizes.as_slice() {
                return Err(CheckpointError::ShapeMismatch {
                    net: name,
                    expected: exp.to_vec(),
                    found: sizes,
                });
            }
        }
        let count: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let params = self.f64s(count)?;
        Mlp::from_parts(sizes, params).ok_or_else(|| CheckpointError::Corrupt(format!("bad shape for `{name}`")))
    }

    fn adam(&mut self, n_params: usize) -> Result<Adam, CheckpointError> {
        let t = self.u64()?;
        let h = self.f64s(4)?;
        let n = self.u64()? as usize;
        if n != n_params {
            return Err(CheckpointError::Corrupt(format!(
                "optimizer holds {n} moments for {n_params} parameters"
            )));
        }
        Ok(Adam {
            lr: h[0],
            beta1: h[1],
            beta2: h[2],
            eps: h[3],
            m: self.f64s(n)?,
            v: self.f64s(n)?,
            t,
        })
    }
}

/// Parses a checkpoint. With `expected_sizes`, every network must have that architecture.
pub fn load(bytes: &[u8], expected_sizes: Option<&[usize]>) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let meta_len = r.u64()? as usize;
    let meta = String::from_utf8(r.take(meta_len)?.to_vec())
        .map_err(|_| CheckpointError::Corrupt("metadata is not UTF-8".into()))?;
    let nets = r.u32()?;
    if nets != 3 {
        return Err(CheckpointError::Corrupt(format!("{nets} networks, expected 3")));
    }
    let actor = r.net("actor", expected_sizes)?;
    let critic = r.net("critic", expected_sizes)?;
    let target_critic = r.net("target_critic", Some(critic.sizes()))?;
    let actor_opt = r.adam(actor.num_params())?;
    let critic_opt = r.adam(critic.num_params())?;
    if r.pos != bytes.len() {
        return Err(CheckpointError::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint {
        policy: Policy { actor, critic },
        target_critic,
        actor_opt,
        critic_opt,
        meta,
    })
}

pub fn save_file(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<(), CheckpointError> {
    std::fs::write(path, save(ck))?;
    Ok(())
}

pub fn load_file(path: impl AsRef<Path>, expected_sizes: Option<&[usize]>) -> Result<Checkpoint, CheckpointError> {
    load(&std::fs::read(path)?, expected_sizes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use treebranch_core::features::FeatureMatrix;

    fn sample() -> Checkpoint {
        let cfg = TrainConfig::default();
        let mut ck = Checkpoint::fresh(Policy::new(&cfg, 3), &cfg, "seed=3\n".into());
        ck.actor_opt.t = 5;
        ck.actor_opt.m[0] = 0.125;
        ck
    }

    #[test]
    fn round_trip_is_lossless() {
        let ck = sample();
        let bytes = save(&ck);
        let back = load(&bytes, Some(&TrainConfig::default().layer_sizes())).unwrap();
        assert_eq!(back, ck);
        assert_eq!(save(&back), bytes);
        let fm = FeatureMatrix::from_rows(2, [vec![0.3; 18], vec![-0.7; 18]].concat());
        assert_eq!(back.policy.logits(&fm), ck.policy.logits(&fm));
        assert_eq!(back.policy.q_values(&fm), ck.policy.q_values(&fm));
    }

    #[test]
    fn shape_and_version_errors() {
        let bytes = save(&sample());
        assert!(matches!(
            load(&bytes, Some(&[18, 32, 32, 1])),
            Err(CheckpointError::ShapeMismatch { net: "actor", .. })
        ));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(load(&v2, None), Err(CheckpointError::VersionMismatch { found: 2, .. })));
        assert!(matches!(load(b"NOPE", None), Err(CheckpointError::BadMagic)));
        assert!(matches!(load(&bytes[..bytes.len() - 3], None), Err(CheckpointError::Corrupt(_))));
    }
}
