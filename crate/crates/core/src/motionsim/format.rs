//! Little-endian sequence file:
//!
//! ```text
//! magic "MOTNSEQ\0" | u32 version | u32 T | u32 J | u8 has_cam | u8 label
//! f64 fps | u64 seed | u32 n + n bytes provenance (UTF-8)
//! T rows of 3J + 10 (+ 3 with camera) f64
//! ```

use std::path::Path;

use super::{Label, MotionSequence};
use crate::body::{BodyParams, NUM_BETAS};
use crate::error::{Error, Result};
use crate::io_util::{put_string, write_atomic, ByteReader};

pub const MAGIC: &[u8; 8] = b"MOTNSEQ\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_motion(seq: &MotionSequence) -> Result<Vec<u8>> {
    seq.validate()?;
    let j = seq.num_joints();
    let mut out = Vec::with_capacity(64 + seq.len() * (3 * j + 13) * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
    out.extend_from_slice(&(j as u32).to_le_bytes());
    out.push(seq.has_cam as u8);
    out.push(seq.label.code());
    out.extend_from_slice(&seq.fps.to_le_bytes());
    out.extend_from_slice(&seq.seed.to_le_bytes());
    put_string(&mut out, &seq.provenance);
    for f in &seq.frames {
        if !seq.has_cam && f.cam != [1.0, 0.0, 0.0] {
            return Err(Error::Validation("camera values on a sequence flagged camera-free".into()));
        }
        let row = f.theta.iter().chain(&f.beta).chain(if seq.has_cam { &f.cam[..] } else { &[] });
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_motion(bytes: &[u8]) -> Result<MotionSequence> {
    let mut r = ByteReader::new(bytes);
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::parse(0, "bad magic; not a motion file"));
    }
    let at = r.pos() as u64;
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::parse(at, format!("unsupported version {version}")));
    }
    let t = r.u32("frame count")? as usize;
    let j = r.u32("joint count")? as usize;
    let at = r.pos() as u64;
    let has_cam = match r.u8("camera flag")? {
        0 => false,
        1 => true,
        other => return Err(Error::parse(at, format!("camera flag {other}"))),
    };
    let at = r.pos() as u64;
    let label = r.u8("label")?;
    let label = Label::from_code(label).ok_or_else(|| Error::parse(at, format!("unknown label {label}")))?;
    let fps = r.f64("fps")?;
    let seed = r.u64("seed")?;
    let provenance = r.string("provenance")?;
    if t == 0 {
        return Err(Error::Validation("motion file declares zero frames".into()));
    }
    if j == 0 {
        return Err(Error::Validation("motion file declares zero joints".into()));
    }
    let width = 3 * j + NUM_BETAS + if has_cam { 3 } else { 0 };
    let need = t.checked_mul(width).and_then(|x| x.checked_mul(8));
    if need.is_none_or(|need| need > r.remaining()) {
        return Err(Error::parse(
            r.pos() as u64,
            format!("truncated payload: {t} frames of {width} values do not fit in {} bytes", r.remaining()),
        ));
    }
    let mut frames = Vec::with_capacity(t);
    for _ in 0..t {
        let row: Vec<f64> = (0..width).map(|_| r.f64("frame")).collect::<Result<_>>()?;
        let theta = row[..3 * j].to_vec();
        let beta = row[3 * j..3 * j + NUM_BETAS].try_into().unwrap();
        let cam = if has_cam {
            row[3 * j + NUM_BETAS..].try_into().unwrap()
        } else {
            [1.0, 0.0, 0.0]
        };
        frames.push(BodyParams { theta, beta, cam });
    }
    if r.remaining() != 0 {
        return Err(Error::parse(r.pos() as u64, "trailing bytes after payload"));
    }
    let seq = MotionSequence {
        frames,
        fps,
        label,
        has_cam,
        seed,
        provenance,
    };
    seq.validate()?;
    Ok(seq)
}

pub fn save_motion(seq: &MotionSequence, path: &Path) -> Result<()> {
    let bytes = write_motion(seq)?;
    write_atomic(path, &bytes)
}

pub fn load_motion(path: &Path) -> Result<MotionSequence> {
    read_motion(&std::fs::read(path)?)
}
