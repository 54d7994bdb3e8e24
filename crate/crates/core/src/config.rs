//! Run configuration: flat `key = value` lines grouped under `[section]`
//! headers. `#` starts a comment. Every key has a default, and unknown keys
//! are rejected so typos surface.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::motionsim::CorpusConfig;
use crate::nets::{DiscriminatorConfig, GeneratorConfig, MPoserConfig, Pooling};
use crate::objectives::LossWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Generator with supervised losses only.
    Baseline,
    /// Generator plus the frozen motion-prior penalty.
    MPoser,
    /// Generator trained against the motion discriminator.
    Gan,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::MPoser => "mposer",
            Mode::Gan => "gan",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "mposer" => Ok(Mode::MPoser),
            "gan" => Ok(Mode::Gan),
            _ => Err(Error::Config(format!("unknown mode {s:?} (baseline, mposer, gan)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub batch: usize,
    pub epochs: usize,
    /// 0 means one pass over the training split per epoch.
    pub steps_per_epoch: usize,
    pub gen_lr: f64,
    pub disc_lr: f64,
    pub weights: LossWeights,
    /// Fraction of training sequences that carry 3D joint and body-parameter
    /// labels; the rest only have 2D keypoints.
    pub label_3d_fraction: f64,
    /// Std-dev of the noise added to 2D keypoint labels.
    pub noise_2d: f64,
    pub patience: usize,
    /// Held-out sequences scored after each epoch for the LR schedule.
    pub eval_subset: usize,
    pub mposer_steps: usize,
    pub mposer_lr: f64,
    pub pck_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Gan,
            batch: 32,
            epochs: 30,
            steps_per_epoch: 0,
            gen_lr: 1e-3,
            disc_lr: 3e-3,
            weights: LossWeights::default(),
            label_3d_fraction: 1.0,
            noise_2d: 0.0,
            patience: 5,
            eval_subset: 32,
            mposer_steps: 300,
            mposer_lr: 1e-3,
            pck_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    /// `affine` or `identity`.
    pub kind: String,
    pub dim: usize,
    pub noise: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            kind: "affine".into(),
            dim: 128,
            noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub vertices: usize,
    pub corpus: CorpusConfig,
    pub corpus_dir: PathBuf,
    pub features: FeatureConfig,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub mposer: MPoserConfig,
    pub train: TrainConfig,
    pub out: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            vertices: crate::body::DEFAULT_VERTICES,
            corpus: CorpusConfig::default(),
            corpus_dir: PathBuf::from("corpus"),
            features: FeatureConfig::default(),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            mposer: MPoserConfig::default(),
            train: TrainConfig::default(),
            out: PathBuf::from("runs/default"),
        }
    }
}

type Table = BTreeMap<String, (usize, String)>;

fn parse_table(text: &str) -> Result<Table> {
    let mut table = Table::new();
    let mut section = String::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
        let key = if section.is_empty() {
            k.trim().to_string()
        } else {
            format!("{section}.{}", k.trim())
        };
        if table.insert(key.clone(), (no + 1, v.trim().to_string())).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {key}", no + 1)));
        }
    }
    Ok(table)
}

struct Reader {
    table: Table,
}

impl Reader {
    fn take<T: std::str::FromStr>(&mut self, key: &str, target: &mut T) -> Result<()> {
        if let Some((line, v)) = self.table.remove(key) {
            *target = v
                .parse()
                .map_err(|_| Error::Config(format!("line {line}: bad value {v:?} for {key}")))?;
        }
        Ok(())
    }

    fn take_with<T>(&mut self, key: &str, target: &mut T, f: impl Fn(&str) -> Result<T>) -> Result<()> {
        if let Some((line, v)) = self.table.remove(key) {
            *target = f(&v).map_err(|e| Error::Config(format!("line {line}: {key}: {e}")))?;
        }
        Ok(())
    }
}

fn parse_pooling(s: &str) -> Result<Pooling> {
    match s {
        "attention" => Ok(Pooling::Attention),
        "concat" | "static" => Ok(Pooling::Static),
        _ => Err(Error::Config(format!("unknown pooling {s:?} (attention, concat)"))),
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Config::default();
        let mut r = Reader {
            table: parse_table(text)?,
        };
        r.take("seed", &mut c.seed)?;
        r.take("vertices", &mut c.vertices)?;
        r.take("out", &mut c.out)?;

        r.take("corpus.dir", &mut c.corpus_dir)?;
        r.take("corpus.train", &mut c.corpus.train)?;
        r.take("corpus.eval", &mut c.corpus.eval)?;
        r.take("corpus.frames", &mut c.corpus.frames)?;
        r.take("corpus.family", &mut c.corpus.family)?;

        r.take("features.kind", &mut c.features.kind)?;
        r.take("features.dim", &mut c.features.dim)?;
        r.take("features.noise", &mut c.features.noise)?;

        let g = &mut c.generator;
        r.take("generator.hidden", &mut g.hidden)?;
        r.take("generator.layers", &mut g.layers)?;
        r.take("generator.bidirectional", &mut g.bidirectional)?;
        r.take("generator.regressor_hidden", &mut g.regressor_hidden)?;
        r.take("generator.iterations", &mut g.iterations)?;

        let d = &mut c.discriminator;
        r.take("discriminator.hidden", &mut d.hidden)?;
        r.take("discriminator.layers", &mut d.layers)?;
        r.take_with("discriminator.pooling", &mut d.pooling, parse_pooling)?;
        r.take("discriminator.attn_layers", &mut d.attn_layers)?;
        r.take("discriminator.attn_size", &mut d.attn_size)?;
        r.take("discriminator.dropout", &mut d.dropout)?;
        r.take("discriminator.velocity", &mut d.velocity)?;

        r.take("mposer.hidden", &mut c.mposer.hidden)?;
        r.take("mposer.layers", &mut c.mposer.layers)?;

        let t = &mut c.train;
        r.take_with("train.mode", &mut t.mode, Mode::parse)?;
        r.take("train.batch", &mut t.batch)?;
        r.take("train.epochs", &mut t.epochs)?;
        r.take("train.steps_per_epoch", &mut t.steps_per_epoch)?;
        r.take("train.gen_lr", &mut t.gen_lr)?;
        r.take("train.disc_lr", &mut t.disc_lr)?;
        r.take("train.lambda_2d", &mut t.weights.lambda_2d)?;
        r.take("train.lambda_3d", &mut t.weights.lambda_3d)?;
        r.take("train.lambda_beta", &mut t.weights.lambda_beta)?;
        r.take("train.lambda_theta", &mut t.weights.lambda_theta)?;
        r.take("train.lambda_adv", &mut t.weights.lambda_adv)?;
        r.take("train.lambda_mposer", &mut t.weights.lambda_mposer)?;
        r.take("train.label_3d_fraction", &mut t.label_3d_fraction)?;
        r.take("train.noise_2d", &mut t.noise_2d)?;
        r.take("train.patience", &mut t.patience)?;
        r.take("train.eval_subset", &mut t.eval_subset)?;
        r.take("train.mposer_steps", &mut t.mposer_steps)?;
        r.take("train.mposer_lr", &mut t.mposer_lr)?;
        r.take("train.pck_threshold", &mut t.pck_threshold)?;

        if let Some((key, (line, _))) = r.table.into_iter().next() {
            return Err(Error::Config(format!("line {line}: unknown key {key}")));
        }
        c.sync();
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    /// Propagates shared sizes into the per-network configs.
    pub fn sync(&mut self) {
        self.corpus.seed = self.seed;
        self.generator.feature_dim = self.features.dim;
        self.discriminator.input_dim = 3 * self.generator.joints + crate::body::NUM_BETAS;
        self.mposer.pose_dim = 3 * self.generator.joints;
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        if !(t.gen_lr > 0.0 && t.disc_lr > 0.0 && t.mposer_lr > 0.0) {
            return Err(Error::Config("learning rates must be > 0".into()));
        }
        if t.batch == 0 || self.corpus.frames == 0 {
            return Err(Error::Config("batch and frames must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&t.label_3d_fraction) {
            return Err(Error::Config("label_3d_fraction must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.discriminator.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if self.generator.hidden == 0 || self.discriminator.hidden == 0 || self.mposer.hidden == 0 {
            return Err(Error::Config("hidden sizes must be >= 1".into()));
        }
        match self.features.kind.as_str() {
            "affine" => {}
            "identity" if self.features.dim == self.generator.output_dim() => {}
            "identity" => {
                return Err(Error::Config(format!(
                    "identity features need dim = {}",
                    self.generator.output_dim()
                )))
            }
            other => return Err(Error::Config(format!("unknown feature kind {other:?}"))),
        }
        t.weights.validate()
    }

    /// Canonical text form; `Config::parse(&c.to_text())` returns `c`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let g = &self.generator;
        let d = &self.discriminator;
        let t = &self.train;
        let w = &t.weights;
        let _ = write!(
            s,
            "seed = {}\nvertices = {}\nout = {}\n\n\
             [corpus]\ndir = {}\ntrain = {}\neval = {}\nframes = {}\nfamily = {}\n\n\
             [features]\nkind = {}\ndim = {}\nnoise = {:?}\n\n\
             [generator]\nhidden = {}\nlayers = {}\nbidirectional = {}\nregressor_hidden = {}\niterations = {}\n\n\
             [discriminator]\nhidden = {}\nlayers = {}\npooling = {}\nattn_layers = {}\nattn_size = {}\ndropout = {:?}\nvelocity = {}\n\n\
             [mposer]\nhidden = {}\nlayers = {}\n\n\
             [train]\nmode = {}\nbatch = {}\nepochs = {}\nsteps_per_epoch = {}\ngen_lr = {:?}\ndisc_lr = {:?}\n\
             lambda_2d = {:?}\nlambda_3d = {:?}\nlambda_beta = {:?}\nlambda_theta = {:?}\nlambda_adv = {:?}\nlambda_mposer = {:?}\n\
             label_3d_fraction = {:?}\nnoise_2d = {:?}\npatience = {}\neval_subset = {}\nmposer_steps = {}\nmposer_lr = {:?}\npck_threshold = {:?}\n",
            self.seed,
            self.vertices,
            self.out.display(),
            self.corpus_dir.display(),
            self.corpus.train,
            self.corpus.eval,
            self.corpus.frames,
            self.corpus.family,
            self.features.kind,
            self.features.dim,
            self.features.noise,
            g.hidden,
            g.layers,
            g.bidirectional,
            g.regressor_hidden,
            g.iterations,
            d.hidden,
            d.layers,
            d.pooling.name(),
            d.attn_layers,
            d.attn_size,
            d.dropout,
            d.velocity,
            self.mposer.hidden,
            self.mposer.layers,
            t.mode.name(),
            t.batch,
            t.epochs,
            t.steps_per_epoch,
            t.gen_lr,
            t.disc_lr,
            w.lambda_2d,
            w.lambda_3d,
            w.lambda_beta,
            w.lambda_theta,
            w.lambda_adv,
            w.lambda_mposer,
            t.label_3d_fraction,
            t.noise_2d,
            t.patience,
            t.eval_subset,
            t.mposer_steps,
            t.mposer_lr,
            t.pck_threshold,
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        let mut c2 = Config::parse(&c.to_text()).unwrap();
        c2.sync();
        let mut c1 = c.clone();
        c1.sync();
        assert_eq!(c1, c2);
    }

    #[test]
    fn sections_and_errors() {
        let c = Config::parse("seed = 9\n[train]\nmode = baseline # comment\nbatch = 4\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.train.mode, Mode::Baseline);
        assert_eq!(c.train.batch, 4);
        assert!(matches!(Config::parse("[train]\nbatchh = 4"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("[train]\nmode = both"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("seed 4"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("[train]\ngen_lr = 0"), Err(Error::Config(_))));
    }
}
