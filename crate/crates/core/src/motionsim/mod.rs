//! Synthetic motion corpus: smooth sinusoidal joint-space motion, fake
//! corruptions and a binary sequence format.

mod corpus;
mod format;

pub use corpus::{Corpus, CorpusConfig, CorpusEntry, Split, MANIFEST_NAME};
pub use format::{load_motion, read_motion, save_motion, write_motion, FORMAT_VERSION, MAGIC};

use std::f64::consts::{PI, TAU};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Normal, StandardNormal};

use crate::body::{BodyParams, DEFAULT_JOINTS, NUM_BETAS};
use crate::error::{Error, Result};
use crate::rng::stream;

/// Joints whose rotation is limited to the spine range by default.
pub const SPINE_JOINTS: [usize; 5] = [3, 6, 9, 12, 15];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Real,
    Fake,
    Generated,
}

impl Label {
    pub fn code(self) -> u8 {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
            Label::Generated => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Label::Real),
            1 => Some(Label::Fake),
            2 => Some(Label::Generated),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
            Label::Generated => "generated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Label::Real, Label::Fake, Label::Generated].into_iter().find(|l| l.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub frames: Vec<BodyParams>,
    pub fps: f64,
    pub label: Label,
    /// Whether the frames carry meaningful camera parameters.
    pub has_cam: bool,
    pub seed: u64,
    pub provenance: String,
}

impl MotionSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn num_joints(&self) -> usize {
        self.frames.first().map_or(0, BodyParams::num_joints)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Validation("motion sequence has no frames".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Validation(format!("fps must be positive, got {}", self.fps)));
        }
        let j = self.num_joints();
        for (t, f) in self.frames.iter().enumerate() {
            f.validate()?;
            if f.num_joints() != j {
                return Err(Error::Validation(format!("frame {t} has {} joints, expected {j}", f.num_joints())));
            }
            for k in 0..j {
                let w = f.joint(k);
                let angle = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
                if angle > PI + 1e-12 {
                    return Err(Error::Validation(format!("frame {t} joint {k} rotates by {angle} > π")));
                }
            }
        }
        Ok(())
    }

    /// Per-frame [θ, β, cam] rows.
    pub fn param_rows(&self) -> Vec<Vec<f64>> {
        self.frames.iter().map(BodyParams::to_vec).collect()
    }

    /// Per-frame [θ, β] rows, the discriminator's view of a motion.
    pub fn motion_rows(&self) -> Vec<Vec<f64>> {
        self.frames
            .iter()
            .map(|f| {
                let mut r = f.theta.clone();
                r.extend_from_slice(&f.beta);
                r
            })
            .collect()
    }
}

/// Distribution of smooth sequences: each joint-angle component is a sum of
/// up to three sinusoids whose amplitudes sum to at most that joint's bound.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionFamily {
    pub name: String,
    pub joints: usize,
    /// Per-joint bound on each axis-angle component (radians).
    pub bounds: Vec<f64>,
    pub freq_min: f64,
    pub freq_max: f64,
    pub max_components: usize,
    pub beta_sigma: f64,
    pub scale_range: (f64, f64),
    pub translation_bound: f64,
    pub fps: f64,
}

impl MotionFamily {
    pub fn sinusoid() -> Self {
        let bounds = (0..DEFAULT_JOINTS)
            .map(|j| match j {
                0 => PI / 4.0,
                _ if SPINE_JOINTS.contains(&j) => PI / 6.0,
                _ => PI / 2.0,
            })
            .collect();
        MotionFamily {
            name: "sinusoid".into(),
            joints: DEFAULT_JOINTS,
            bounds,
            freq_min: 0.02,
            freq_max: 0.08,
            max_components: 3,
            beta_sigma: 1.0,
            scale_range: (0.8, 1.2),
            translation_bound: 0.1,
            fps: 30.0,
        }
    }

    /// Zero amplitudes: the rest pose held for every frame.
    pub fn still() -> Self {
        let mut f = MotionFamily::sinusoid();
        f.name = "still".into();
        f.bounds.iter_mut().for_each(|b| *b = 0.0);
        f
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "sinusoid" => Ok(MotionFamily::sinusoid()),
            "still" => Ok(MotionFamily::still()),
            other => Err(Error::Validation(format!("unknown motion family {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.len() != self.joints {
            return Err(Error::mismatch("family bounds", self.joints, self.bounds.len()));
        }
        if self.bounds.iter().any(|b| !(0.0..=PI / 3f64.sqrt()).contains(b)) {
            return Err(Error::Validation("joint bounds must lie in [0, π/√3]".into()));
        }
        if !(0.0 < self.freq_min && self.freq_min <= self.freq_max) || self.max_components == 0 {
            return Err(Error::Validation("bad frequency range or component count".into()));
        }
        Ok(())
    }
}

/// Samples a smooth sequence of `frames` frames; deterministic in `seed`.
pub fn gen_real_motion(family: &MotionFamily, frames: usize, seed: u64) -> Result<MotionSequence> {
    family.validate()?;
    if frames == 0 {
        return Err(Error::Validation("sequence length must be at least 1".into()));
    }
    let mut rng = stream(seed, "motion", 0);
    let j = family.joints;
    let mut theta = vec![vec![0.0; 3 * j]; frames];
    for k in 0..3 * j {
        let bound = family.bounds[k / 3];
        let n = rng.gen_range(1..=family.max_components);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let budget = bound * rng.gen_range(0.5..1.0);
        for &r in &raw {
            let amp = budget * r / total;
            let freq = rng.gen_range(family.freq_min..=family.freq_max);
            let phase = rng.gen_range(0.0..TAU);
            for (t, row) in theta.iter_mut().enumerate() {
                row[k] += amp * (TAU * freq * t as f64 + phase).sin();
            }
        }
    }
    let normal = Normal::new(0.0, family.beta_sigma.max(0.0)).map_err(|e| Error::Validation(e.to_string()))?;
    let beta: [f64; NUM_BETAS] = std::array::from_fn(|_| rng.sample(normal));
    let (lo, hi) = family.scale_range;
    let tb = family.translation_bound;
    let cam = [
        rng.gen_range(lo..=hi),
        rng.gen_range(-tb..=tb),
        rng.gen_range(-tb..=tb),
    ];
    let frames = theta
        .into_iter()
        .map(|theta| BodyParams { theta, beta, cam })
        .collect();
    let seq = MotionSequence {
        frames,
        fps: family.fps,
        label: Label::Real,
        has_cam: true,
        seed,
        provenance: format!("family={} seed={seed}", family.name),
    };
    seq.validate()?;
    Ok(seq)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Corruption {
    /// Independent N(0, σ²) noise on every angle of every frame.
    IidNoise(f64),
    FrameShuffle,
    /// Every frame replaced by the first.
    FrameFreeze,
}

impl Corruption {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "shuffle" | "frame_shuffle" => Ok(Corruption::FrameShuffle),
            "freeze" | "frame_freeze" => Ok(Corruption::FrameFreeze),
            _ => {
                let sigma = s
                    .strip_prefix("iid_noise(")
                    .or_else(|| s.strip_prefix("noise("))
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::Validation(format!("unknown corruption mode {s:?}")))?;
                Ok(Corruption::IidNoise(sigma))
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            Corruption::IidNoise(s) => format!("iid_noise({s})"),
            Corruption::FrameShuffle => "frame_shuffle".into(),
            Corruption::FrameFreeze => "frame_freeze".into(),
        }
    }
}

/// Axis-angle vectors longer than π are scaled back to π.
fn clamp_angles(theta: &mut [f64]) {
    for w in theta.chunks_exact_mut(3) {
        let n = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        if n > PI {
            w.iter_mut().for_each(|x| *x *= PI / n);
        }
    }
}

/// A fake version of `seq`, labelled [`Label::Fake`].
pub fn corrupt_motion(seq: &MotionSequence, mode: Corruption, seed: u64) -> Result<MotionSequence> {
    seq.validate()?;
    let mut rng = stream(seed, "corrupt", 0);
    let mut frames = seq.frames.clone();
    match mode {
        Corruption::IidNoise(sigma) => {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::Validation(format!("noise sigma must be >= 0, got {sigma}")));
            }
            if sigma > 0.0 {
                for f in &mut frames {
                    for x in &mut f.theta {
                        let e: f64 = rng.sample(StandardNormal);
                        *x += sigma * e;
                    }
                }
            }
        }
        Corruption::FrameShuffle => frames.shuffle(&mut rng),
        Corruption::FrameFreeze => {
            let first = frames[0].clone();
            frames.iter_mut().for_each(|f| *f = first.clone());
        }
    }
    frames.iter_mut().for_each(|f| clamp_angles(&mut f.theta));
    Ok(MotionSequence {
        frames,
        fps: seq.fps,
        label: Label::Fake,
        has_cam: seq.has_cam,
        seed,
        provenance: format!("{} corrupted={}", seq.provenance, mode.name()),
    })
}
