use super::{discriminator_accuracy, mean_pose_baseline, train_discriminator, train_mposer, DiscTask, Trainer};
use crate::config::{Config, Mode};
use crate::error::Result;
use crate::metrics::{MetricsReport, REPORT_FIELDS};
use crate::motionsim::{Corpus, Corruption, Split};
use crate::nets::{DiscriminatorConfig, Pooling};
use crate::rng::derive_seed;

/// One trained configuration of the regularizer comparison.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub mode: Mode,
    pub report: MetricsReport,
    /// Loss log lines for this run.
    pub log: Vec<String>,
}

/// Regularizer comparison: the same corpus, seed and step budget trained
/// without a motion regularizer, with the motion prior and with the
/// discriminator. Also returns the prior's held-out reconstruction error
/// and the mean-pose baseline it is compared against.
#[derive(Debug, Clone)]
pub struct RegularizerAblation {
    pub rows: Vec<AblationRow>,
    pub prior_error: f64,
    pub mean_pose_error: f64,
}

pub fn regularizer_ablation(config: &Config, corpus: &Corpus, max_steps: Option<u64>) -> Result<RegularizerAblation> {
    let train = corpus.split(Split::Train);
    let heldout = corpus.split(Split::Eval);
    let t = &config.train;
    let prior = train_mposer(
        &config.mposer,
        &train,
        &heldout,
        t.mposer_steps,
        t.batch,
        t.mposer_lr,
        derive_seed(config.seed, "mposer", 0),
    )?;
    let prior_error = prior.curve.last().map_or(f64::NAN, |c| c.1);
    let mean_pose_error = mean_pose_baseline(&train, &heldout)?;
    let mut rows = Vec::new();
    for mode in [Mode::Baseline, Mode::MPoser, Mode::Gan] {
        let mut cfg = config.clone();
        cfg.train.mode = mode;
        let mposer = (mode == Mode::MPoser).then(|| prior.model.clone());
        let mut trainer = Trainer::new(cfg, mposer)?;
        let mut log = Vec::new();
        trainer.train(
            corpus,
            max_steps,
            |r| {
                log.push(r.line());
                Ok(())
            },
            |_| Ok(()),
        )?;
        rows.push(AblationRow {
            mode,
            report: trainer.evaluate(corpus)?,
            log,
        });
    }
    Ok(RegularizerAblation {
        rows,
        prior_error,
        mean_pose_error,
    })
}

impl RegularizerAblation {
    pub fn row(&self, mode: Mode) -> Option<&MetricsReport> {
        self.rows.iter().find(|r| r.mode == mode).map(|r| &r.report)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("mode,{}\n", REPORT_FIELDS.join(","));
        for r in &self.rows {
            s += &format!("{},{}\n", r.mode.name(), r.report.to_csv_row());
        }
        s
    }
}

/// A discriminator variant in the pooling comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolingVariant {
    pub pooling: Pooling,
    pub attn_layers: usize,
    pub attn_size: usize,
}

impl PoolingVariant {
    pub fn standard() -> Vec<PoolingVariant> {
        vec![
            PoolingVariant {
                pooling: Pooling::Static,
                attn_layers: 0,
                attn_size: 0,
            },
            PoolingVariant {
                pooling: Pooling::Attention,
                attn_layers: 2,
                attn_size: 64,
            },
            PoolingVariant {
                pooling: Pooling::Attention,
                attn_layers: 3,
                attn_size: 64,
            },
        ]
    }

    pub fn label(&self) -> String {
        match self.pooling {
            Pooling::Static => "concat".into(),
            Pooling::Attention => format!("attention-{}x{}", self.attn_layers, self.attn_size),
        }
    }

    pub fn apply(&self, base: &DiscriminatorConfig) -> DiscriminatorConfig {
        let mut c = base.clone();
        c.pooling = self.pooling;
        if self.pooling == Pooling::Attention {
            c.attn_layers = self.attn_layers;
            c.attn_size = self.attn_size;
        }
        c
    }
}

#[derive(Debug, Clone)]
pub struct PoolingRow {
    pub label: String,
    /// Held-out accuracy in percent, one entry per seed.
    pub accuracy: Vec<f64>,
}

impl PoolingRow {
    pub fn mean(&self) -> f64 {
        self.accuracy.iter().sum::<f64>() / self.accuracy.len().max(1) as f64
    }
}

/// Trains every variant on the same real/corrupted task for each seed and
/// scores it on the held-out split.
pub fn pooling_ablation(
    config: &Config,
    corpus: &Corpus,
    variants: &[PoolingVariant],
    corruption: Corruption,
    steps: usize,
    seeds: &[u64],
) -> Result<Vec<PoolingRow>> {
    let train = corpus.split(Split::Train);
    let heldout = corpus.split(Split::Eval);
    let mut rows: Vec<PoolingRow> = variants
        .iter()
        .map(|v| PoolingRow {
            label: v.label(),
            accuracy: Vec::new(),
        })
        .collect();
    for &seed in seeds {
        for (v, row) in variants.iter().zip(rows.iter_mut()) {
            let task = DiscTask {
                config: v.apply(&config.discriminator),
                corruption,
                steps,
                batch: config.train.batch,
                lr: config.train.disc_lr,
                seed,
            };
            let (d, _) = train_discriminator(&task, &train)?;
            row.accuracy.push(discriminator_accuracy(&d, &heldout, corruption, derive_seed(seed, "heldout", 0))?);
        }
    }
    Ok(rows)
}

pub fn pooling_csv(rows: &[PoolingRow]) -> String {
    let mut s = String::from("pooling,mean_accuracy,per_seed\n");
    for r in rows {
        let per: Vec<String> = r.accuracy.iter().map(|a| format!("{a:?}")).collect();
        s += &format!("{},{:?},{}\n", r.label, r.mean(), per.join(" "));
    }
    s
}
