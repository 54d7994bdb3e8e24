use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::tensor::Tensor;

/// Stand-in for per-frame image evidence, computed from ground-truth
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureProvider {
    /// f = Θ A + b + σ ε, with A, b drawn once from `seed` and ε fresh per
    /// sequence.
    Affine {
        input_dim: usize,
        output_dim: usize,
        noise: f64,
        seed: u64,
        matrix: Vec<f64>,
        bias: Vec<f64>,
    },
    /// f = Θ exactly.
    Identity { dim: usize },
}

impl FeatureProvider {
    pub fn affine(input_dim: usize, output_dim: usize, noise: f64, seed: u64) -> Self {
        let mut rng = stream(seed, "features", 0);
        let bound = (3.0 / input_dim as f64).sqrt();
        let matrix = (0..input_dim * output_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let bias = (0..output_dim).map(|_| rng.gen_range(-0.1..0.1)).collect();
        FeatureProvider::Affine {
            input_dim,
            output_dim,
            noise,
            seed,
            matrix,
            bias,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            FeatureProvider::Affine { output_dim, .. } => *output_dim,
            FeatureProvider::Identity { dim } => *dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            FeatureProvider::Affine { input_dim, .. } => *input_dim,
            FeatureProvider::Identity { dim } => *dim,
        }
    }

    /// Features for T frames given as rows of `params` (T×input_dim).
    /// `noise_seed` picks the noise draw; it does not change A or b.
    pub fn features(&self, params: &[Vec<f64>], noise_seed: u64) -> Result<Tensor> {
        let d = self.input_dim();
        if let Some(row) = params.iter().find(|r| r.len() != d) {
            return Err(Error::mismatch("feature input width", d, row.len()));
        }
        match self {
            FeatureProvider::Identity { .. } => Tensor::from_rows(params),
            FeatureProvider::Affine {
                output_dim,
                noise,
                matrix,
                bias,
                ..
            } => {
                let f = *output_dim;
                let mut rng = stream(noise_seed, "feature-noise", 0);
                let mut out = Vec::with_capacity(params.len() * f);
                for row in params {
                    for j in 0..f {
                        let lin: f64 = row.iter().enumerate().map(|(i, x)| x * matrix[i * f + j]).sum();
                        let eps: f64 = rng.sample(StandardNormal);
                        out.push(lin + bias[j] + noise * eps);
                    }
                }
                Tensor::new(&[params.len(), f], out)
            }
        }
    }
}
