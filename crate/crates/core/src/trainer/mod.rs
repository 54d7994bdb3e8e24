//! Alternating generator / discriminator training, motion-prior training,
//! evaluation, ablations and checkpoints.

mod ablation;
mod checkpoint;
mod data;
mod disc_task;
mod eval;
mod prior;

pub use ablation::{pooling_ablation, pooling_csv, regularizer_ablation, AblationRow, PoolingRow, PoolingVariant, RegularizerAblation};
pub use checkpoint::{Checkpoint, ModelKind, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use data::{frame_rows, posed_frames, prepare, sample_indices, stack, Batch, Prepared};
pub use disc_task::{discriminator_accuracy, train_discriminator, DiscTask};
pub use eval::{evaluate, evaluate_sequences, Predictor};
pub use prior::{mean_pose_baseline, reconstruction_error, train_mposer, MPoserRun};

use std::sync::Arc;

use crate::body::{forward_kinematics_op, project_op, regressor_matrix, BodyTemplate, IDENTITY};
use crate::config::{Config, Mode};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::motionsim::{Corpus, Split};
use crate::nets::{Discriminator, FeatureProvider, Generator, MPoser};
use crate::objectives::{
    loss_2d, loss_3d, loss_adv_generator, loss_discriminator, loss_mposer_prior, loss_smpl, total_generator_loss,
    Available, LossParts,
};
use crate::rng::{derive_seed, stream};
use crate::tensor::{AdamConfig, AdamState, Axis, Graph, Tensor, Var};

/// One line of the step log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub loss_g: f64,
    pub loss_d: f64,
    pub d_real: f64,
    pub d_fake: f64,
}

impl StepReport {
    pub const HEADER: &'static str = "step L_G L_DM d_real d_fake";

    pub fn line(&self) -> String {
        format!(
            "{} {:?} {:?} {:?} {:?}",
            self.step, self.loss_g, self.loss_d, self.d_real, self.d_fake
        )
    }
}

/// Halve-on-plateau state for both learning rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub best: f64,
    pub bad_epochs: u64,
    pub epoch: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            best: f64::INFINITY,
            bad_epochs: 0,
            epoch: 0,
        }
    }
}

pub fn feature_provider(config: &Config) -> FeatureProvider {
    match config.features.kind.as_str() {
        "identity" => FeatureProvider::Identity {
            dim: config.features.dim,
        },
        _ => FeatureProvider::affine(
            config.generator.output_dim(),
            config.features.dim,
            config.features.noise,
            derive_seed(config.seed, "features.map", 0),
        ),
    }
}

pub fn build_template(config: &Config) -> Result<BodyTemplate> {
    BodyTemplate::generate(config.vertices, derive_seed(config.seed, "template", 0))
}

/// All models and optimiser state of one run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: Config,
    pub template: Arc<BodyTemplate>,
    pub provider: FeatureProvider,
    pub generator: Generator,
    pub gen_opt: AdamState,
    pub discriminator: Discriminator,
    pub disc_opt: AdamState,
    pub mposer: Option<MPoser>,
    pub step: u64,
    pub schedule: Schedule,
    regressor: Tensor,
}

impl Trainer {
    /// Fresh models. In prior mode `mposer` must be a trained prior.
    pub fn new(config: Config, mposer: Option<MPoser>) -> Result<Self> {
        config.validate()?;
        if config.train.mode == Mode::MPoser && mposer.is_none() {
            return Err(Error::Config("mposer mode needs a trained motion prior".into()));
        }
        let template = Arc::new(build_template(&config)?);
        let provider = feature_provider(&config);
        let generator = Generator::new(config.generator.clone(), &mut stream(config.seed, "init.generator", 0));
        let discriminator = Discriminator::new(
            config.discriminator.clone(),
            &mut stream(config.seed, "init.discriminator", 0),
        );
        let gen_opt = AdamState::new(AdamConfig::with_lr(config.train.gen_lr), &generator.store);
        let disc_opt = AdamState::new(AdamConfig::with_lr(config.train.disc_lr), &discriminator.store);
        let regressor = regressor_matrix(&template);
        Ok(Trainer {
            config,
            template,
            provider,
            generator,
            gen_opt,
            discriminator,
            disc_opt,
            mposer,
            step: 0,
            schedule: Schedule::default(),
            regressor,
        })
    }

    pub fn prepare_all(&self, corpus: &Corpus, split: Split) -> Result<Vec<Prepared>> {
        let t = &self.config.train;
        corpus
            .split(split)
            .into_iter()
            .map(|s| prepare(s, &self.template, &self.provider, t.label_3d_fraction, t.noise_2d, self.config.seed))
            .collect()
    }

    fn check_data(&self, data: &[Prepared]) -> Result<()> {
        let first = data.first().ok_or_else(|| Error::Validation("training split is empty".into()))?;
        let f = first.features.shape()[1];
        if f != self.config.generator.feature_dim {
            return Err(Error::mismatch("feature_dim", self.config.generator.feature_dim, f));
        }
        if first.params[0].len() != self.config.generator.output_dim() {
            return Err(Error::mismatch("parameter width", self.config.generator.output_dim(), first.params[0].len()));
        }
        Ok(())
    }

    /// Batch for step `step`: sequences for the generator, and an
    /// independent draw of real motions for the discriminator.
    pub fn batches(&self, data: &[Prepared], step: u64) -> Result<(Batch, Batch)> {
        let b = self.config.train.batch;
        let j = self.config.generator.joints;
        let idx = sample_indices(&mut stream(self.config.seed, "batch", step), data.len(), b);
        let real = sample_indices(&mut stream(self.config.seed, "batch.real", step), data.len(), b);
        let pick = |ix: &[usize]| ix.iter().map(|&i| &data[i]).collect::<Vec<_>>();
        Ok((stack(&pick(&idx), j)?, stack(&pick(&real), j)?))
    }

    /// One generator update, then (GAN mode) one discriminator update on
    /// detached generator outputs.
    pub fn train_step(&mut self, batch: &Batch, real: &Batch) -> Result<StepReport> {
        let cfg = &self.config;
        let w = cfg.train.weights;
        let j = cfg.generator.joints;
        let v = self.template.num_vertices();
        let bsz = batch.size;
        let batch_seed = derive_seed(cfg.seed, "batch", self.step);
        let mode = cfg.train.mode;
        let mut drop_rng = stream(cfg.seed, "dropout", self.step);

        let mut g = Graph::new();
        let pg = self.generator.store.bind(&mut g);
        let feats = g.constant(batch.features.clone());
        let out = self.generator.forward(&mut g, &pg, feats, bsz)?;
        let posed = forward_kinematics_op(&mut g, out.rotmats, out.beta_tiled, &self.template)?;
        let verts = g.slice(posed, Axis::Cols, 3 * j, 3 * v)?;
        let wreg = g.constant(self.regressor.clone());
        let joints = g.matmul(verts, wreg)?;
        let kp = project_op(&mut g, joints, out.cam, IDENTITY)?;

        let kp_gt = g.constant(batch.keypoints.clone());
        let mut parts = LossParts {
            l2d: Some(loss_2d(&mut g, kp, kp_gt, &batch.visibility, bsz)?),
            ..LossParts::default()
        };
        if !batch.labelled.is_empty() {
            let nl = batch.labelled.len();
            let rows = frame_rows(&batch.labelled, batch.frames);
            let jp = g.gather_rows(joints, &rows)?;
            let jg = g.constant(gather(&batch.joints, &rows)?);
            parts.l3d = Some(loss_3d(&mut g, jp, jg, nl)?);
            let tp = g.gather_rows(out.theta, &rows)?;
            let tg = g.constant(gather(&batch.theta, &rows)?);
            let bp = g.gather_rows(out.beta, &batch.labelled)?;
            let bg = g.constant(gather(&batch.beta, &batch.labelled)?);
            parts.smpl = Some(loss_smpl(&mut g, tp, tg, bp, bg, &w)?);
        }
        let mut d_fake_g = None;
        match mode {
            Mode::Gan => {
                let pd = self.discriminator.store.bind_frozen(&mut g);
                let motion = g.concat(&[out.theta, out.beta_tiled], Axis::Cols)?;
                let d = self
                    .discriminator
                    .forward(&mut g, &pd, motion, bsz, Some(&mut drop_rng))?;
                d_fake_g = Some(d.prob);
                parts.adv = Some(loss_adv_generator(&mut g, d.prob)?);
            }
            Mode::MPoser => {
                let prior = self.mposer.as_ref().expect("checked in new");
                let pm = prior.store.bind_frozen(&mut g);
                let post = prior.encode(&mut g, &pm, out.theta, bsz)?;
                parts.mposer = Some(loss_mposer_prior(&mut g, post.mu, bsz)?);
            }
            Mode::Baseline => {}
        }
        let available = Available {
            d3: parts.l3d.is_some(),
            d2: true,
            smpl: parts.smpl.is_some(),
            adv: mode == Mode::Gan,
            mposer: mode == Mode::MPoser,
        };
        let total = total_generator_loss(&mut g, &parts, &w, available)?;
        let loss_g = g.scalar(total);
        if !loss_g.is_finite() {
            return Err(Error::Numeric(format!(
                "generator loss {loss_g} at step {} (batch seed {batch_seed:#018x})",
                self.step
            )));
        }
        let grads = g.backward(total)?;
        self.generator.store.zero_grad();
        self.generator.store.accumulate(&pg, &grads)?;
        self.gen_opt.step(&mut self.generator.store)?;

        let mut report = StepReport {
            step: self.step,
            loss_g,
            loss_d: 0.0,
            d_real: 0.0,
            d_fake: d_fake_g.map_or(0.0, |d| mean(g.value(d).data())),
        };
        if mode == Mode::Gan {
            let fake = detached_motion(&g, out.theta, out.beta_tiled)?;
            drop(g);
            let (ld, dr, df) = self.discriminator_update(&real.motion, real.size, &fake, bsz, &mut drop_rng)?;
            if !ld.is_finite() {
                return Err(Error::Numeric(format!(
                    "discriminator loss {ld} at step {} (batch seed {batch_seed:#018x})",
                    self.step
                )));
            }
            report.loss_d = ld;
            report.d_real = dr;
            report.d_fake = df;
        }
        self.step += 1;
        Ok(report)
    }

    fn discriminator_update(
        &mut self,
        real: &Tensor,
        real_batch: usize,
        fake: &Tensor,
        fake_batch: usize,
        rng: &mut crate::rng::Rng,
    ) -> Result<(f64, f64, f64)> {
        let mut g = Graph::new();
        let pd = self.discriminator.store.bind(&mut g);
        let rv = g.constant(real.clone());
        let fv = g.constant(fake.clone());
        let dr = self.discriminator.forward(&mut g, &pd, rv, real_batch, Some(&mut *rng))?;
        let df = self.discriminator.forward(&mut g, &pd, fv, fake_batch, Some(&mut *rng))?;
        let loss = loss_discriminator(&mut g, dr.prob, df.prob)?;
        let value = g.scalar(loss);
        let grads = g.backward(loss)?;
        self.discriminator.store.zero_grad();
        self.discriminator.store.accumulate(&pd, &grads)?;
        self.disc_opt.step(&mut self.discriminator.store)?;
        Ok((value, mean(g.value(dr.prob).data()), mean(g.value(df.prob).data())))
    }

    pub fn steps_per_epoch(&self, train_len: usize) -> u64 {
        let t = &self.config.train;
        if t.steps_per_epoch > 0 {
            t.steps_per_epoch as u64
        } else {
            (train_len / t.batch).max(1) as u64
        }
    }

    /// Held-out score driving the LR schedule.
    pub fn heldout_mpjpe(&self, heldout: &[&crate::motionsim::MotionSequence]) -> Result<f64> {
        let n = self.config.train.eval_subset.min(heldout.len());
        if n == 0 {
            return Ok(f64::NAN);
        }
        let (report, _) = evaluate_sequences(&self.predictor(), &heldout[..n], &self.template, self.config.train.pck_threshold)?;
        Ok(report.mpjpe)
    }

    pub fn predictor(&self) -> Predictor<'_> {
        Predictor::Generator {
            generator: &self.generator,
            provider: &self.provider,
        }
    }

    /// Runs epochs until `config.train.epochs` or `max_steps` total steps,
    /// calling `on_step` for every step and `on_epoch` after each epoch.
    pub fn train(
        &mut self,
        corpus: &Corpus,
        max_steps: Option<u64>,
        mut on_step: impl FnMut(&StepReport) -> Result<()>,
        mut on_epoch: impl FnMut(&Trainer) -> Result<()>,
    ) -> Result<()> {
        let data = self.prepare_all(corpus, Split::Train)?;
        self.check_data(&data)?;
        let heldout = corpus.split(Split::Eval);
        let per_epoch = self.steps_per_epoch(data.len());
        let total = per_epoch * self.config.train.epochs as u64;
        let total = max_steps.map_or(total, |m| m.min(total));
        while self.step < total {
            let (batch, real) = self.batches(&data, self.step)?;
            let report = self.train_step(&batch, &real)?;
            on_step(&report)?;
            if self.step.is_multiple_of(per_epoch) {
                self.end_epoch(&heldout)?;
                on_epoch(self)?;
            }
        }
        Ok(())
    }

    fn end_epoch(&mut self, heldout: &[&crate::motionsim::MotionSequence]) -> Result<()> {
        self.schedule.epoch += 1;
        let score = self.heldout_mpjpe(heldout)?;
        if !score.is_finite() {
            return Ok(());
        }
        if score < self.schedule.best {
            self.schedule.best = score;
            self.schedule.bad_epochs = 0;
        } else {
            self.schedule.bad_epochs += 1;
            if self.schedule.bad_epochs >= self.config.train.patience as u64 {
                self.gen_opt.config.lr *= 0.5;
                self.disc_opt.config.lr *= 0.5;
                self.schedule.bad_epochs = 0;
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, corpus: &Corpus) -> Result<MetricsReport> {
        evaluate(&self.predictor(), corpus, &self.template, self.config.train.pck_threshold)
    }
}

fn gather(t: &Tensor, rows: &[usize]) -> Result<Tensor> {
    let c = t.shape()[1];
    let data = rows.iter().flat_map(|&r| t.row(r).to_vec()).collect();
    Tensor::new(&[rows.len(), c], data)
}

fn detached_motion(g: &Graph, theta: Var, beta: Var) -> Result<Tensor> {
    let t = g.value(theta);
    let b = g.value(beta);
    let (n, tc) = (t.shape()[0], t.shape()[1]);
    let bc = b.shape()[1];
    let mut data = Vec::with_capacity(n * (tc + bc));
    for i in 0..n {
        data.extend_from_slice(t.row(i));
        data.extend_from_slice(b.row(i));
    }
    Tensor::new(&[n, tc + bc], data)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}
