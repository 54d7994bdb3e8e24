use super::data::sample_indices;
use crate::error::{Error, Result};
use crate::motionsim::{corrupt_motion, Corruption, MotionSequence};
use crate::nets::{Discriminator, DiscriminatorConfig};
use crate::objectives::loss_discriminator;
use crate::rng::{derive_seed, stream, Rng};
use crate::tensor::{AdamConfig, AdamState, Graph, Tensor};

/// Discriminator trained alone to separate real motions from corruptions.
#[derive(Debug, Clone)]
pub struct DiscTask {
    pub config: DiscriminatorConfig,
    pub corruption: Corruption,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

fn motion_tensor(seqs: &[&MotionSequence]) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = seqs.iter().flat_map(|s| s.motion_rows()).collect();
    Tensor::from_rows(&rows)
}

fn fakes(seqs: &[&MotionSequence], mode: Corruption, seed: u64, salt: u64) -> Result<Vec<MotionSequence>> {
    seqs.iter()
        .enumerate()
        .map(|(i, s)| corrupt_motion(s, mode, derive_seed(seed ^ s.seed, "fake", salt.wrapping_mul(1 << 20) + i as u64)))
        .collect()
}

pub fn train_discriminator(task: &DiscTask, train: &[&MotionSequence]) -> Result<(Discriminator, Vec<f64>)> {
    if train.is_empty() {
        return Err(Error::Validation("no training motions".into()));
    }
    let mut d = Discriminator::new(task.config.clone(), &mut stream(task.seed, "init.discriminator", 0));
    let mut opt = AdamState::new(AdamConfig::with_lr(task.lr), &d.store);
    let mut losses = Vec::with_capacity(task.steps);
    for step in 0..task.steps as u64 {
        let ri = sample_indices(&mut stream(task.seed, "disc.real", step), train.len(), task.batch);
        let fi = sample_indices(&mut stream(task.seed, "disc.fake", step), train.len(), task.batch);
        let reals: Vec<&MotionSequence> = ri.iter().map(|&i| train[i]).collect();
        let base: Vec<&MotionSequence> = fi.iter().map(|&i| train[i]).collect();
        let fake = fakes(&base, task.corruption, task.seed, step + 1)?;
        let fake: Vec<&MotionSequence> = fake.iter().collect();
        let mut rng: Rng = stream(task.seed, "dropout", step);

        let mut g = Graph::new();
        let p = d.store.bind(&mut g);
        let rv = g.constant(motion_tensor(&reals)?);
        let fv = g.constant(motion_tensor(&fake)?);
        let dr = d.forward(&mut g, &p, rv, reals.len(), Some(&mut rng))?;
        let df = d.forward(&mut g, &p, fv, fake.len(), Some(&mut rng))?;
        let loss = loss_discriminator(&mut g, dr.prob, df.prob)?;
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Numeric(format!("discriminator loss {value} at step {step}")));
        }
        let grads = g.backward(loss)?;
        d.store.zero_grad();
        d.store.accumulate(&p, &grads)?;
        opt.step(&mut d.store)?;
        losses.push(value);
    }
    Ok((d, losses))
}

/// Fraction of held-out reals scored > 0.5 and their corruptions scored
/// < 0.5, in percent.
pub fn discriminator_accuracy(
    d: &Discriminator,
    heldout: &[&MotionSequence],
    corruption: Corruption,
    seed: u64,
) -> Result<f64> {
    let fake = fakes(heldout, corruption, seed, 0)?;
    let fake: Vec<&MotionSequence> = fake.iter().collect();
    let mut correct = 0usize;
    let mut total = 0usize;
    for (set, is_real) in [(heldout, true), (&fake[..], false)] {
        for chunk in set.chunks(64) {
            let mut g = Graph::new();
            let p = d.store.bind_frozen(&mut g);
            let x = g.constant(motion_tensor(chunk)?);
            let out = d.forward::<Rng>(&mut g, &p, x, chunk.len(), None)?;
            for &prob in g.value(out.prob).data() {
                correct += usize::from((prob > 0.5) == is_real);
                total += 1;
            }
        }
    }
    Ok(100.0 * correct as f64 / total.max(1) as f64)
}
