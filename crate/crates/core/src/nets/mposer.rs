use rand::Rng;
use rand_distr::StandardNormal;

use super::layers::{from_steps, to_steps, Gru, Linear};
use crate::error::{Error, Result};
use crate::tensor::{Axis, Bindings, Graph, ParamStore, Tensor, Var};

pub const LATENT_DIM: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct MPoserConfig {
    pub pose_dim: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl Default for MPoserConfig {
    fn default() -> Self {
        MPoserConfig {
            pose_dim: 72,
            hidden: 64,
            layers: 1,
        }
    }
}

/// Sequential VAE over pose sequences with a 32-dim latent per step.
/// Decoding runs a GRU over the latent sequence, one output per step.
#[derive(Debug, Clone)]
pub struct MPoser {
    pub config: MPoserConfig,
    pub store: ParamStore,
    enc: Gru,
    enc_head: Linear,
    dec: Gru,
    dec_head: Linear,
}

#[derive(Debug, Clone, Copy)]
pub struct Posterior {
    /// N×32 each, sequence-major.
    pub mu: Var,
    pub logsigma: Var,
}

impl MPoser {
    pub fn new<R: Rng>(config: MPoserConfig, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let h = config.hidden;
        let enc = Gru::new(&mut store, "mposer.enc", config.pose_dim, h, config.layers, false, rng);
        let enc_head = Linear::new(&mut store, "mposer.enc.head", h, 2 * LATENT_DIM, rng);
        let dec = Gru::new(&mut store, "mposer.dec", LATENT_DIM, h, config.layers, false, rng);
        let dec_head = Linear::new(&mut store, "mposer.dec.head", h, config.pose_dim, rng);
        MPoser {
            config,
            store,
            enc,
            enc_head,
            dec,
            dec_head,
        }
    }

    pub fn encode(&self, g: &mut Graph, p: &Bindings, poses: Var, batch: usize) -> Result<Posterior> {
        let steps = self.steps(g, poses, batch, self.config.pose_dim, "mposer_encode")?;
        let seq = to_steps(g, poses, batch, steps)?;
        let hs = self.enc.forward(g, p, &seq)?;
        let hs = from_steps(g, &hs)?;
        let stats = self.enc_head.forward(g, p, hs)?;
        Ok(Posterior {
            mu: g.slice(stats, Axis::Cols, 0, LATENT_DIM)?,
            logsigma: g.slice(stats, Axis::Cols, LATENT_DIM, LATENT_DIM)?,
        })
    }

    pub fn decode(&self, g: &mut Graph, p: &Bindings, z: Var, batch: usize) -> Result<Var> {
        let steps = self.steps(g, z, batch, LATENT_DIM, "mposer_decode")?;
        let seq = to_steps(g, z, batch, steps)?;
        let hs = self.dec.forward(g, p, &seq)?;
        let hs = from_steps(g, &hs)?;
        self.dec_head.forward(g, p, hs)
    }

    /// z = μ + σ ⊙ ε with ε ~ N(0, I).
    pub fn sample<R: Rng>(&self, g: &mut Graph, post: &Posterior, rng: &mut R) -> Result<Var> {
        let shape = g.value(post.mu).shape().to_vec();
        let eps: Vec<f64> = (0..g.value(post.mu).len()).map(|_| rng.sample(StandardNormal)).collect();
        let eps = g.constant(Tensor::new(&shape, eps)?);
        let sigma = g.exp(post.logsigma);
        let noise = g.mul(sigma, eps)?;
        g.add(post.mu, noise)
    }

    fn steps(&self, g: &Graph, x: Var, batch: usize, width: usize, op: &'static str) -> Result<usize> {
        match g.value(x).dims2() {
            Some((n, f)) if batch > 0 && n > 0 && n % batch == 0 && f == width => Ok(n / batch),
            other => Err(Error::dim(op, format!("input {other:?}, {batch} sequences of width {width}"))),
        }
    }
}

/// KL(N(μ, σ²) ‖ N(0, I)) summed over latent entries, averaged over `batch`.
pub fn kl_divergence(g: &mut Graph, post: &Posterior, batch: usize) -> Result<Var> {
    let mu2 = g.square(post.mu);
    let two_ls = g.scale(post.logsigma, 2.0);
    let var = g.exp(two_ls);
    let a = g.add(mu2, var)?;
    let a = g.sub(a, two_ls)?;
    let a = g.add_scalar(a, -1.0);
    let s = g.sum(a);
    Ok(g.scale(s, 0.5 / batch as f64))
}
