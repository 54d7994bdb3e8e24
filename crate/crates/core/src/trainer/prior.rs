use super::data::sample_indices;
use crate::error::{Error, Result};
use crate::motionsim::MotionSequence;
use crate::nets::{kl_divergence, MPoser, MPoserConfig};
use crate::rng::stream;
use crate::tensor::{AdamConfig, AdamState, Graph, Tensor};

/// Weight of the KL term against the summed squared reconstruction error.
pub const KL_WEIGHT: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct MPoserRun {
    pub model: MPoser,
    /// (step, held-out mean squared reconstruction error).
    pub curve: Vec<(usize, f64)>,
}

fn poses(seqs: &[&MotionSequence], joints: usize) -> Result<Tensor> {
    let t = seqs.first().map_or(0, |s| s.len());
    if seqs.iter().any(|s| s.len() != t) {
        return Err(Error::Validation("sequences differ in length".into()));
    }
    let data: Vec<f64> = seqs.iter().flat_map(|s| s.frames.iter().flat_map(|f| f.theta.clone())).collect();
    Tensor::new(&[seqs.len() * t, 3 * joints], data)
}

/// Mean squared per-coordinate error of decode(μ(encode(x))) on `seqs`.
pub fn reconstruction_error(model: &MPoser, seqs: &[&MotionSequence]) -> Result<f64> {
    let j = model.config.pose_dim / 3;
    let x = poses(seqs, j)?;
    let mut g = Graph::new();
    let p = model.store.bind_frozen(&mut g);
    let xv = g.constant(x.clone());
    let post = model.encode(&mut g, &p, xv, seqs.len())?;
    let rec = model.decode(&mut g, &p, post.mu, seqs.len())?;
    let r = g.value(rec).data();
    Ok(r.iter().zip(x.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / r.len() as f64)
}

/// Same measure for the predictor that always outputs the training-set mean pose.
pub fn mean_pose_baseline(train: &[&MotionSequence], heldout: &[&MotionSequence]) -> Result<f64> {
    let width = train
        .first()
        .map(|s| s.frames[0].theta.len())
        .ok_or_else(|| Error::Validation("empty training set".into()))?;
    let mut mean = vec![0.0; width];
    let mut count = 0.0;
    for f in train.iter().flat_map(|s| &s.frames) {
        mean.iter_mut().zip(&f.theta).for_each(|(m, x)| *m += x);
        count += 1.0;
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut err = 0.0;
    let mut n = 0.0;
    for f in heldout.iter().flat_map(|s| &s.frames) {
        err += f.theta.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>();
        n += width as f64;
    }
    Ok(err / n)
}

/// Trains the sequential VAE on reconstruction + KL to a standard normal.
pub fn train_mposer(
    config: &MPoserConfig,
    train: &[&MotionSequence],
    heldout: &[&MotionSequence],
    steps: usize,
    batch: usize,
    lr: f64,
    seed: u64,
) -> Result<MPoserRun> {
    if train.is_empty() {
        return Err(Error::Validation("motion prior needs a nonempty corpus".into()));
    }
    let mut model = MPoser::new(config.clone(), &mut stream(seed, "init.mposer", 0));
    let mut opt = AdamState::new(AdamConfig::with_lr(lr), &model.store);
    let j = config.pose_dim / 3;
    let every = (steps / 10).max(1);
    let mut curve = Vec::new();
    for step in 0..steps {
        let idx = sample_indices(&mut stream(seed, "mposer.batch", step as u64), train.len(), batch);
        let seqs: Vec<&MotionSequence> = idx.iter().map(|&i| train[i]).collect();
        let x = poses(&seqs, j)?;
        let mut g = Graph::new();
        let p = model.store.bind(&mut g);
        let xv = g.constant(x);
        let post = model.encode(&mut g, &p, xv, seqs.len())?;
        let z = model.sample(&mut g, &post, &mut stream(seed, "mposer.eps", step as u64))?;
        let rec = model.decode(&mut g, &p, z, seqs.len())?;
        let diff = g.sub(rec, xv)?;
        let sq = g.square(diff);
        let sse = g.sum(sq);
        let sse = g.scale(sse, 1.0 / seqs.len() as f64);
        let kl = kl_divergence(&mut g, &post, seqs.len())?;
        let kl = g.scale(kl, KL_WEIGHT);
        let loss = g.add(sse, kl)?;
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Numeric(format!("motion prior loss {value} at step {step}")));
        }
        let grads = g.backward(loss)?;
        model.store.zero_grad();
        model.store.accumulate(&p, &grads)?;
        opt.step(&mut model.store)?;
        if !heldout.is_empty() && ((step + 1) % every == 0 || step + 1 == steps) {
            curve.push((step + 1, reconstruction_error(&model, heldout)?));
        }
    }
    Ok(MPoserRun { model, curve })
}
