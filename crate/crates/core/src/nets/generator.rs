use rand::Rng;

use super::layers::{from_steps, to_steps, Gru, Linear};
use crate::body::{rot6d_to_rotmat_op, rotmat_to_axis_angle_op, rotmat_to_rot6d, IDENTITY, NUM_BETAS};
use crate::error::{Error, Result};
use crate::tensor::{Axis, Bindings, Graph, ParamStore, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub joints: usize,
    pub feature_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub bidirectional: bool,
    pub regressor_hidden: usize,
    pub iterations: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            joints: 24,
            feature_dim: 32,
            hidden: 64,
            layers: 2,
            bidirectional: true,
            regressor_hidden: 64,
            iterations: 3,
        }
    }
}

impl GeneratorConfig {
    /// Width of the regressor's state: 6D rotations, shape, camera.
    pub fn internal_dim(&self) -> usize {
        6 * self.joints + NUM_BETAS + 3
    }

    /// Width of the external per-frame parameter vector (85 for 24 joints).
    pub fn output_dim(&self) -> usize {
        3 * self.joints + NUM_BETAS + 3
    }
}

/// Temporal encoder followed by an iterative-feedback regressor.
#[derive(Debug, Clone)]
pub struct Generator {
    pub config: GeneratorConfig,
    pub store: ParamStore,
    gru: Gru,
    proj: Linear,
    fc1: Linear,
    fc2: Linear,
    out: Linear,
    mean: Vec<f64>,
}

/// Generator outputs for a batch of B sequences of T frames. Row-indexed
/// tensors have N = B·T rows ordered sequence-major.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorOutput {
    pub batch: usize,
    pub steps: usize,
    pub internal: Var,
    pub rotmats: Var,
    pub theta: Var,
    pub beta_frames: Var,
    /// B×10, per-frame shapes averaged over time.
    pub beta: Var,
    /// N×10, the pooled shape repeated for every frame.
    pub beta_tiled: Var,
    pub cam: Var,
    /// N×85: [θ, pooled β, cam].
    pub params: Var,
}

/// Θ̄ in the regressor's 6D layout: rest rotations, zero shape, unit scale.
pub fn mean_params(joints: usize) -> Vec<f64> {
    let mut m: Vec<f64> = (0..joints).flat_map(|_| rotmat_to_rot6d(&IDENTITY)).collect();
    m.extend([0.0; NUM_BETAS]);
    m.extend([1.0, 0.0, 0.0]);
    m
}

impl Generator {
    pub fn new<R: Rng>(config: GeneratorConfig, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let gru = Gru::new(
            &mut store,
            "gen.gru",
            config.feature_dim,
            config.hidden,
            config.layers,
            config.bidirectional,
            rng,
        );
        let proj = Linear::new(&mut store, "gen.proj", gru.output_size(), config.feature_dim, rng);
        let d = config.internal_dim();
        let rh = config.regressor_hidden;
        let fc1 = Linear::new(&mut store, "gen.reg.fc1", config.feature_dim + d, rh, rng);
        let fc2 = Linear::new(&mut store, "gen.reg.fc2", rh, rh, rng);
        let out = Linear::new(&mut store, "gen.reg.out", rh, d, rng);
        // Small residuals at start keep the first predictions near Θ̄.
        out.rescale(&mut store, 0.01);
        let mean = mean_params(config.joints);
        Generator {
            config,
            store,
            gru,
            proj,
            fc1,
            fc2,
            out,
            mean,
        }
    }

    /// Zeroes the regressor's output layer so every prediction equals Θ̄.
    pub fn zero_output_layer(&mut self) {
        self.out.rescale(&mut self.store, 0.0);
    }

    /// `features` is N×F, sequence-major over `batch` sequences.
    pub fn forward(&self, g: &mut Graph, p: &Bindings, features: Var, batch: usize) -> Result<GeneratorOutput> {
        let c = &self.config;
        let (n, f) = g
            .value(features)
            .dims2()
            .ok_or_else(|| Error::dim("generator", "features must be 2-D"))?;
        if batch == 0 || n == 0 || n % batch != 0 {
            return Err(Error::dim("generator", format!("{n} rows cannot split into {batch} sequences")));
        }
        if f != c.feature_dim {
            return Err(Error::dim(
                "generator",
                format!("feature width {f}, expected {}", c.feature_dim),
            ));
        }
        let steps = n / batch;
        let seq = to_steps(g, features, batch, steps)?;
        let hs = self.gru.forward(g, p, &seq)?;
        let hs = from_steps(g, &hs)?;
        let latent = self.proj.forward(g, p, hs)?;
        let latent = g.add(latent, features)?;

        let d = c.internal_dim();
        let mean_rows: Vec<f64> = (0..n).flat_map(|_| self.mean.iter().copied()).collect();
        let mut state = g.constant(Tensor::new(&[n, d], mean_rows)?);
        for _ in 0..c.iterations {
            let x = g.concat(&[latent, state], Axis::Cols)?;
            let x = self.fc1.forward(g, p, x)?;
            let x = g.tanh(x);
            let x = self.fc2.forward(g, p, x)?;
            let x = g.tanh(x);
            let delta = self.out.forward(g, p, x)?;
            state = g.add(state, delta)?;
        }
        decode(g, state, c.joints, batch, steps)
    }
}

/// Maps the regressor's 6D state to rotations, axis-angle and pooled shape.
pub fn decode(g: &mut Graph, internal: Var, joints: usize, batch: usize, steps: usize) -> Result<GeneratorOutput> {
    let n = batch * steps;
    let r6 = g.slice(internal, Axis::Cols, 0, 6 * joints)?;
    let rotmats = rot6d_to_rotmat_op(g, r6)?;
    let theta = rotmat_to_axis_angle_op(g, rotmats)?;
    let beta_frames = g.slice(internal, Axis::Cols, 6 * joints, NUM_BETAS)?;
    let cam = g.slice(internal, Axis::Cols, 6 * joints + NUM_BETAS, 3)?;

    let mut pool = vec![0.0; batch * n];
    for b in 0..batch {
        for t in 0..steps {
            pool[b * n + b * steps + t] = 1.0 / steps as f64;
        }
    }
    let pool = g.constant(Tensor::new(&[batch, n], pool)?);
    let beta = g.matmul(pool, beta_frames)?;
    let rows: Vec<usize> = (0..n).map(|i| i / steps).collect();
    let beta_tiled = g.gather_rows(beta, &rows)?;
    let params = g.concat(&[theta, beta_tiled, cam], Axis::Cols)?;
    Ok(GeneratorOutput {
        batch,
        steps,
        internal,
        rotmats,
        theta,
        beta_frames,
        beta,
        beta_tiled,
        cam,
        params,
    })
}
