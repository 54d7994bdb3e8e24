use rand::Rng;

use super::layers::{to_steps, Gru, Linear};
use crate::error::{Error, Result};
use crate::tensor::{Axis, Bindings, Graph, ParamStore, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    /// Softmax-weighted sum of hidden states.
    Attention,
    /// Mean and max over time, concatenated.
    Static,
}

impl Pooling {
    pub fn name(self) -> &'static str {
        match self {
            Pooling::Attention => "attention",
            Pooling::Static => "concat",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub pooling: Pooling,
    pub attn_layers: usize,
    pub attn_size: usize,
    pub dropout: f64,
    /// Feed each frame's difference from the previous frame alongside it.
    pub velocity: bool,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            input_dim: 82,
            hidden: 64,
            layers: 2,
            pooling: Pooling::Attention,
            attn_layers: 2,
            attn_size: 64,
            dropout: 0.1,
            velocity: true,
        }
    }
}

/// Scores a motion (pose and shape per frame) as real with probability in (0, 1).
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub config: DiscriminatorConfig,
    pub store: ParamStore,
    gru: Gru,
    attn: Vec<Linear>,
    head: Linear,
}

/// Per-batch attention weights, T×B (column b sums to 1).
#[derive(Debug, Clone, Copy)]
pub struct DiscriminatorOutput {
    pub prob: Var,
    pub weights: Option<Var>,
}

impl Discriminator {
    pub fn new<R: Rng>(config: DiscriminatorConfig, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let h = config.hidden;
        let width = if config.velocity { 2 * config.input_dim } else { config.input_dim };
        let gru = Gru::new(&mut store, "disc.gru", width, h, config.layers, false, rng);
        let mut attn = Vec::new();
        let pooled = match config.pooling {
            Pooling::Attention => {
                let mut width = h;
                for l in 0..config.attn_layers {
                    attn.push(Linear::new(&mut store, &format!("disc.attn.l{l}"), width, config.attn_size, rng));
                    width = config.attn_size;
                }
                attn.push(Linear::new(&mut store, "disc.attn.score", width, 1, rng));
                h
            }
            Pooling::Static => 2 * h,
        };
        let head = Linear::new(&mut store, "disc.head", pooled, 1, rng);
        Discriminator {
            config,
            store,
            gru,
            attn,
            head,
        }
    }

    /// Zeroes the final affine layer; the output is then exactly 0.5.
    pub fn zero_head(&mut self) {
        self.head.rescale(&mut self.store, 0.0);
    }

    /// `motion` is N×input_dim, sequence-major. `dropout_rng` enables
    /// training-mode dropout inside the attention MLP.
    pub fn forward<R: Rng>(
        &self,
        g: &mut Graph,
        p: &Bindings,
        motion: Var,
        batch: usize,
        dropout_rng: Option<&mut R>,
    ) -> Result<DiscriminatorOutput> {
        let (n, f) = g
            .value(motion)
            .dims2()
            .ok_or_else(|| Error::dim("discriminator", "motion must be 2-D"))?;
        if batch == 0 || n == 0 || n % batch != 0 || f != self.config.input_dim {
            return Err(Error::dim(
                "discriminator",
                format!("{n}x{f} motion for {batch} sequences of width {}", self.config.input_dim),
            ));
        }
        let steps = n / batch;
        let input = if self.config.velocity {
            with_velocity(g, motion, batch, steps)?
        } else {
            motion
        };
        let seq = to_steps(g, input, batch, steps)?;
        let hs = self.gru.forward(g, p, &seq)?;
        let (pooled, weights) = match self.config.pooling {
            Pooling::Attention => {
                let (r, w) = self.attention_pool(g, p, &hs, dropout_rng)?;
                (r, Some(w))
            }
            Pooling::Static => (static_pool(g, &hs)?, None),
        };
        let logit = self.head.forward(g, p, pooled)?;
        Ok(DiscriminatorOutput {
            prob: g.sigmoid(logit),
            weights,
        })
    }

    fn attention_pool<R: Rng>(
        &self,
        g: &mut Graph,
        p: &Bindings,
        hs: &[Var],
        mut rng: Option<&mut R>,
    ) -> Result<(Var, Var)> {
        let steps = hs.len();
        let batch = g.value(hs[0]).shape()[0];
        let stacked = g.concat(hs, Axis::Rows)?;
        let mut x = stacked;
        let (score, hidden) = self.attn.split_last().expect("score layer");
        for layer in hidden {
            x = layer.forward(g, p, x)?;
            x = g.tanh(x);
            if let Some(rng) = rng.as_deref_mut() {
                x = dropout(g, x, self.config.dropout, rng)?;
            }
        }
        let logits = score.forward(g, p, x)?;
        let logits = g.reshape(logits, &[steps, batch])?;
        weighted_sum(g, hs, logits)
    }
}

/// [x_t, x_t − x_{t−1}] per row of a sequence-major N×F input; the first
/// frame of each sequence gets a zero difference.
pub fn with_velocity(g: &mut Graph, x: Var, batch: usize, steps: usize) -> Result<Var> {
    let prev: Vec<usize> = (0..batch)
        .flat_map(|b| (0..steps).map(move |t| b * steps + t.saturating_sub(1)))
        .collect();
    let shifted = g.gather_rows(x, &prev)?;
    let diff = g.sub(x, shifted)?;
    g.concat(&[x, diff], Axis::Cols)
}

/// Softmax over time of per-step logits (T×B), then Σ_t a_t h_t.
pub fn weighted_sum(g: &mut Graph, hs: &[Var], logits: Var) -> Result<(Var, Var)> {
    let steps = hs.len();
    let batch = g.value(hs[0]).shape()[0];
    let weights = g.softmax(logits, Axis::Rows)?;
    let mut acc: Option<Var> = None;
    for (t, &h) in hs.iter().enumerate() {
        let row = g.slice(weights, Axis::Rows, t, 1)?;
        let col = g.reshape(row, &[batch, 1])?;
        let term = g.scale_rows(h, col)?;
        acc = Some(match acc {
            None => term,
            Some(a) => g.add(a, term)?,
        });
    }
    debug_assert_eq!(g.value(weights).shape(), &[steps, batch]);
    Ok((acc.expect("at least one step"), weights))
}

/// [mean_t h_t, max_t h_t], B×2H.
pub fn static_pool(g: &mut Graph, hs: &[Var]) -> Result<Var> {
    let first = *hs.first().ok_or_else(|| Error::dim("static_pool", "empty sequence"))?;
    let mut sum = first;
    let mut max = first;
    for &h in &hs[1..] {
        sum = g.add(sum, h)?;
        max = g.maximum(max, h)?;
    }
    let mean = g.scale(sum, 1.0 / hs.len() as f64);
    g.concat(&[mean, max], Axis::Cols)
}

/// Inverted dropout with a fresh mask from `rng`.
fn dropout<R: Rng>(g: &mut Graph, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
    if rate <= 0.0 {
        return Ok(x);
    }
    let shape = g.value(x).shape().to_vec();
    let keep = 1.0 - rate;
    let mask: Vec<f64> = (0..g.value(x).len())
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    let mask = g.constant(Tensor::new(&shape, mask)?);
    g.mul(x, mask)
}
