use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::body::{forward_kinematics, project_weak_perspective, regress_joints, BodyTemplate, IDENTITY, NUM_BETAS};
use crate::error::{Error, Result};
use crate::metrics::Point;
use crate::motionsim::MotionSequence;
use crate::nets::FeatureProvider;
use crate::rng::{derive_seed, stream};
use crate::tensor::Tensor;

/// A sequence with everything a training step needs precomputed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub seed: u64,
    pub frames: usize,
    /// T×85 ground-truth parameters.
    pub params: Vec<Vec<f64>>,
    /// T×F features (fixed per sequence, like cached image features).
    pub features: Tensor,
    /// T rows of 3J regressed joint coordinates.
    pub joints: Vec<Vec<f64>>,
    /// T rows of 2J keypoints, label noise included.
    pub keypoints: Vec<Vec<f64>>,
    /// Whether 3D joints and body parameters may be used as labels.
    pub labelled: bool,
}

/// Per-frame point sets of a sequence.
pub type Frames = Vec<Vec<Point>>;

/// Regressed joints and skinned vertices for every frame.
pub fn posed_frames(seq: &MotionSequence, tmpl: &BodyTemplate) -> Result<(Frames, Frames)> {
    let j = tmpl.num_joints();
    let mut joints = Vec::with_capacity(seq.len());
    let mut verts = Vec::with_capacity(seq.len());
    for f in &seq.frames {
        let posed = forward_kinematics(f, tmpl)?;
        joints.push(regress_joints(&posed.vertices, &tmpl.joint_regressor, j)?);
        verts.push(posed.vertices);
    }
    Ok((joints, verts))
}

pub fn prepare(
    seq: &MotionSequence,
    tmpl: &BodyTemplate,
    provider: &FeatureProvider,
    label_3d_fraction: f64,
    noise_2d: f64,
    root_seed: u64,
) -> Result<Prepared> {
    let params = seq.param_rows();
    let features = provider.features(&params, derive_seed(seq.seed, "features", 0))?;
    let (joints, _) = posed_frames(seq, tmpl)?;
    let mut rng = stream(seq.seed, "keypoint-noise", 0);
    let keypoints = joints
        .iter()
        .zip(&seq.frames)
        .map(|(js, f)| {
            project_weak_perspective(js, &f.cam, &IDENTITY)
                .into_iter()
                .flatten()
                .map(|x| x + noise_2d * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let mut lrng = stream(root_seed, "labels", seq.seed);
    Ok(Prepared {
        seed: seq.seed,
        frames: seq.len(),
        params,
        features,
        joints: joints.iter().map(|js| js.iter().flatten().copied().collect()).collect(),
        keypoints,
        labelled: lrng.gen::<f64>() < label_3d_fraction,
    })
}

/// Stacked tensors for B sequences (rows sequence-major).
#[derive(Debug, Clone)]
pub struct Batch {
    pub size: usize,
    pub frames: usize,
    pub features: Tensor,
    pub theta: Tensor,
    pub beta: Tensor,
    pub joints: Tensor,
    pub keypoints: Tensor,
    pub visibility: Tensor,
    /// [θ, β] rows, the discriminator's input layout.
    pub motion: Tensor,
    /// Indices (within the batch) of sequences with 3D labels.
    pub labelled: Vec<usize>,
}

pub fn stack(items: &[&Prepared], joints: usize) -> Result<Batch> {
    let first = items.first().ok_or_else(|| Error::Validation("empty batch".into()))?;
    let t = first.frames;
    if items.iter().any(|p| p.frames != t) {
        return Err(Error::Validation("batch sequences differ in length".into()));
    }
    let b = items.len();
    let n = b * t;
    let pose = 3 * joints;
    let rows = |f: &dyn Fn(&Prepared) -> Vec<f64>| -> Vec<f64> { items.iter().flat_map(|p| f(p)).collect() };
    let features = rows(&|p| p.features.data().to_vec());
    let theta = rows(&|p| p.params.iter().flat_map(|r| r[..pose].to_vec()).collect());
    let motion = rows(&|p| p.params.iter().flat_map(|r| r[..pose + NUM_BETAS].to_vec()).collect());
    let beta: Vec<f64> = items.iter().flat_map(|p| p.params[0][pose..pose + NUM_BETAS].to_vec()).collect();
    let jts = rows(&|p| p.joints.concat());
    let kps = rows(&|p| p.keypoints.concat());
    let f = first.features.shape()[1];
    Ok(Batch {
        size: b,
        frames: t,
        features: Tensor::new(&[n, f], features)?,
        theta: Tensor::new(&[n, pose], theta)?,
        beta: Tensor::new(&[b, NUM_BETAS], beta)?,
        joints: Tensor::new(&[n, 3 * joints], jts)?,
        keypoints: Tensor::new(&[n, 2 * joints], kps)?,
        visibility: Tensor::filled(&[n, joints], 1.0),
        motion: Tensor::new(&[n, pose + NUM_BETAS], motion)?,
        labelled: (0..b).filter(|&i| items[i].labelled).collect(),
    })
}

/// `count` distinct indices in 0..len (all of them, shuffled, if fewer).
pub fn sample_indices<R: Rng>(rng: &mut R, len: usize, count: usize) -> Vec<usize> {
    sample(rng, len, count.min(len)).into_vec()
}

/// Rows of a sequence-major tensor that belong to the given sequences.
pub fn frame_rows(seqs: &[usize], frames: usize) -> Vec<usize> {
    seqs.iter().flat_map(|&s| (s * frames)..(s + 1) * frames).collect()
}
