use super::data::posed_frames;
use crate::body::{BodyParams, BodyTemplate};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::motionsim::{Corpus, MotionSequence, Split};
use crate::nets::{mean_params, FeatureProvider, Generator};
use crate::rng::derive_seed;
use crate::tensor::{Graph, Tensor};

/// Anything that maps a sequence's evidence to per-frame parameters.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    Generator {
        generator: &'a Generator,
        provider: &'a FeatureProvider,
    },
    /// Θ̄ for every frame.
    MeanPose { joints: usize },
    /// Reads parameters straight off identity features.
    Oracle { provider: &'a FeatureProvider },
}

impl Predictor<'_> {
    pub fn predict(&self, seqs: &[&MotionSequence]) -> Result<Vec<Vec<BodyParams>>> {
        match *self {
            Predictor::MeanPose { joints } => {
                let m = mean_params(joints);
                let mut p = BodyParams::rest(joints);
                p.beta.copy_from_slice(&m[6 * joints..6 * joints + 10]);
                p.cam.copy_from_slice(&m[6 * joints + 10..]);
                Ok(seqs.iter().map(|s| vec![p.clone(); s.len()]).collect())
            }
            Predictor::Oracle { provider } => {
                let FeatureProvider::Identity { .. } = provider else {
                    return Err(Error::Config("the oracle predictor needs identity features".into()));
                };
                seqs.iter()
                    .map(|s| {
                        let f = provider.features(&s.param_rows(), eval_noise_seed(s))?;
                        let j = s.num_joints();
                        (0..s.len()).map(|t| BodyParams::from_slice(f.row(t), j)).collect()
                    })
                    .collect()
            }
            Predictor::Generator { generator, provider } => {
                let mut out = Vec::with_capacity(seqs.len());
                // Chunks keep the graph small; sequences are independent.
                for chunk in seqs.chunks(64) {
                    let t = chunk[0].len();
                    if chunk.iter().any(|s| s.len() != t) {
                        return Err(Error::Validation("evaluation sequences differ in length".into()));
                    }
                    let mut data = Vec::new();
                    for s in chunk {
                        let f = provider.features(&s.param_rows(), eval_noise_seed(s))?;
                        data.extend_from_slice(f.data());
                    }
                    let fdim = provider.output_dim();
                    if fdim != generator.config.feature_dim {
                        return Err(Error::mismatch("feature_dim", generator.config.feature_dim, fdim));
                    }
                    let mut g = Graph::new();
                    let p = generator.store.bind_frozen(&mut g);
                    let x = g.constant(Tensor::new(&[chunk.len() * t, fdim], data)?);
                    let res = generator.forward(&mut g, &p, x, chunk.len())?;
                    let params = g.value(res.params);
                    let j = generator.config.joints;
                    for b in 0..chunk.len() {
                        out.push(
                            (0..t)
                                .map(|i| BodyParams::from_slice(params.row(b * t + i), j))
                                .collect::<Result<Vec<_>>>()?,
                        );
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Feature noise for evaluation depends only on the sequence.
fn eval_noise_seed(s: &MotionSequence) -> u64 {
    derive_seed(s.seed, "features", 0)
}

/// Per-sequence reports and their mean.
pub fn evaluate_sequences(
    predictor: &Predictor,
    seqs: &[&MotionSequence],
    tmpl: &BodyTemplate,
    pck_threshold: f64,
) -> Result<(MetricsReport, Vec<MetricsReport>)> {
    if let Some(s) = seqs.iter().find(|s| s.num_joints() != tmpl.num_joints()) {
        return Err(Error::mismatch("joints", tmpl.num_joints(), s.num_joints()));
    }
    let preds = predictor.predict(seqs)?;
    let mut reports = Vec::with_capacity(seqs.len());
    for (s, p) in seqs.iter().zip(preds) {
        if p.len() != s.len() {
            return Err(Error::mismatch("frames", s.len(), p.len()));
        }
        let (gj, gv) = posed_frames(s, tmpl)?;
        let pseq = MotionSequence {
            frames: p,
            ..(*s).clone()
        };
        let (pj, pv) = posed_frames(&pseq, tmpl)?;
        reports.push(MetricsReport::for_sequence(&pj, &gj, &pv, &gv, pck_threshold, 0)?);
    }
    Ok((MetricsReport::aggregate(&reports)?, reports))
}

/// Scores the held-out split of `corpus`.
pub fn evaluate(predictor: &Predictor, corpus: &Corpus, tmpl: &BodyTemplate, pck_threshold: f64) -> Result<MetricsReport> {
    let seqs = corpus.split(Split::Eval);
    evaluate_sequences(predictor, &seqs, tmpl, pck_threshold).map(|(r, _)| r)
}
