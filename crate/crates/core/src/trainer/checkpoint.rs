//! Binary checkpoint, little-endian:
//!
//! ```text
//! magic "MGCKPT\0\0" | u32 version | string kind | u64 step | string config
//! f64 best | u64 bad_epochs | u64 epoch
//! u32 store count, per store: string name, u32 blocks,
//!     per block: string name, u32 rank, rank × u32 dims, values f64
//! per optimiser (generator, discriminator): f64 lr, beta1, beta2, eps,
//!     u64 t, then m and v for every block in store order
//! ```
//!
//! Strings are a u32 length followed by UTF-8 bytes.

use std::path::Path;

use super::{Predictor, Schedule, Trainer};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::io_util::{put_f64s, put_string, write_atomic, ByteReader};
use crate::nets::MPoser;
use crate::rng::stream;
use crate::tensor::{AdamConfig, AdamState, ParamStore};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MGCKPT\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Generator,
    /// Identity features read back as parameters.
    Oracle,
    MeanPose,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Generator => "generator",
            ModelKind::Oracle => "oracle",
            ModelKind::MeanPose => "mean-pose",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [ModelKind::Generator, ModelKind::Oracle, ModelKind::MeanPose]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub trainer: Trainer,
}

fn put_store(out: &mut Vec<u8>, name: &str, store: &ParamStore) {
    put_string(out, name);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (n, t) in store.iter() {
        put_string(out, n);
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        put_f64s(out, t.data());
    }
}

fn read_store(r: &mut ByteReader, expected: &str, store: &mut ParamStore) -> Result<()> {
    let at = r.pos() as u64;
    let name = r.string("store name")?;
    if name != expected {
        return Err(Error::parse(at, format!("expected store {expected}, found {name}")));
    }
    let at = r.pos() as u64;
    let blocks = r.u32("block count")? as usize;
    if blocks != store.len() {
        return Err(Error::parse(
            at,
            format!("store {name} has {blocks} blocks, model has {}", store.len()),
        ));
    }
    for _ in 0..blocks {
        let at = r.pos() as u64;
        let block = r.string("block name")?;
        let rank = r.u32("rank")? as usize;
        if rank > 8 {
            return Err(Error::parse(at, format!("block {block} has rank {rank}")));
        }
        let dims: Vec<usize> = (0..rank).map(|_| r.u32("dim").map(|d| d as usize)).collect::<Result<_>>()?;
        let values = r.f64s(dims.iter().product(), "block values")?;
        store.load_values(&block, &dims, values).map_err(|e| Error::parse(at, e.to_string()))?;
    }
    Ok(())
}

fn put_adam(out: &mut Vec<u8>, s: &AdamState) {
    put_f64s(out, &[s.config.lr, s.config.beta1, s.config.beta2, s.config.epsilon]);
    out.extend_from_slice(&s.t.to_le_bytes());
    for (m, v) in s.m.iter().zip(&s.v) {
        put_f64s(out, m);
        put_f64s(out, v);
    }
}

fn read_adam(r: &mut ByteReader, store: &ParamStore) -> Result<AdamState> {
    let c = r.f64s(4, "optimiser settings")?;
    let config = AdamConfig {
        lr: c[0],
        beta1: c[1],
        beta2: c[2],
        epsilon: c[3],
    };
    let mut s = AdamState::new(config, store);
    s.t = r.u64("optimiser step")?;
    for i in 0..s.m.len() {
        let n = s.m[i].len();
        s.m[i] = r.f64s(n, "first moment")?;
        s.v[i] = r.f64s(n, "second moment")?;
    }
    Ok(s)
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let t = &self.trainer;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_string(&mut out, self.kind.name());
        out.extend_from_slice(&t.step.to_le_bytes());
        put_string(&mut out, &t.config.to_text());
        put_f64s(&mut out, &[t.schedule.best]);
        out.extend_from_slice(&t.schedule.bad_epochs.to_le_bytes());
        out.extend_from_slice(&t.schedule.epoch.to_le_bytes());
        let count: u32 = if t.mposer.is_some() { 3 } else { 2 };
        out.extend_from_slice(&count.to_le_bytes());
        put_store(&mut out, "generator", &t.generator.store);
        put_store(&mut out, "discriminator", &t.discriminator.store);
        if let Some(m) = &t.mposer {
            put_store(&mut out, "mposer", &m.store);
        }
        put_adam(&mut out, &t.gen_opt);
        put_adam(&mut out, &t.disc_opt);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::parse(0, "bad magic; not a checkpoint"));
        }
        let at = r.pos() as u64;
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::parse(at, format!("unsupported checkpoint version {version}")));
        }
        let at = r.pos() as u64;
        let kind = r.string("model kind")?;
        let kind = ModelKind::parse(&kind).ok_or_else(|| Error::parse(at, format!("unknown model kind {kind}")))?;
        let step = r.u64("step")?;
        let at = r.pos() as u64;
        let config = Config::parse(&r.string("config")?).map_err(|e| Error::parse(at, e.to_string()))?;
        let best = r.f64("schedule")?;
        let bad_epochs = r.u64("schedule")?;
        let epoch = r.u64("schedule")?;
        let at = r.pos() as u64;
        let count = r.u32("store count")?;
        if !(count == 2 || count == 3) {
            return Err(Error::parse(at, format!("store count {count}")));
        }
        let mposer = (count == 3).then(|| MPoser::new(config.mposer.clone(), &mut stream(config.seed, "init.mposer", 0)));
        let mut trainer = Trainer::new(config, mposer)?;
        read_store(&mut r, "generator", &mut trainer.generator.store)?;
        read_store(&mut r, "discriminator", &mut trainer.discriminator.store)?;
        if let Some(m) = trainer.mposer.as_mut() {
            read_store(&mut r, "mposer", &mut m.store)?;
        }
        trainer.gen_opt = read_adam(&mut r, &trainer.generator.store)?;
        trainer.disc_opt = read_adam(&mut r, &trainer.discriminator.store)?;
        if r.remaining() != 0 {
            return Err(Error::parse(r.pos() as u64, "trailing bytes after checkpoint"));
        }
        trainer.step = step;
        trainer.schedule = Schedule {
            best,
            bad_epochs,
            epoch,
        };
        Ok(Checkpoint { kind, trainer })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }

    pub fn predictor(&self) -> Predictor<'_> {
        match self.kind {
            ModelKind::Generator => self.trainer.predictor(),
            ModelKind::Oracle => Predictor::Oracle {
                provider: &self.trainer.provider,
            },
            ModelKind::MeanPose => Predictor::MeanPose {
                joints: self.trainer.config.generator.joints,
            },
        }
    }
}
