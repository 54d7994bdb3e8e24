use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Axis, Bindings, Graph, ParamId, ParamStore, Tensor, Var};

/// Affine layer `x W + b`, W in×out, initialised U(±1/√in).
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Linear {
            w: store.add_uniform(format!("{name}.w"), &[input, output], bound, rng),
            b: store.add_uniform(format!("{name}.b"), &[1, output], bound, rng),
            input,
            output,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bindings, x: Var) -> Result<Var> {
        let y = g.matmul(x, p.var(self.w))?;
        g.add_row(y, p.var(self.b))
    }

    /// Multiplies the initial weights and bias by `factor`.
    pub fn rescale(&self, store: &mut ParamStore, factor: f64) {
        for id in [self.w, self.b] {
            store.get_mut(id).data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// One GRU layer in one direction. Gates are fused column-wise as
/// [reset | update | candidate].
#[derive(Debug, Clone)]
pub struct GruCell {
    pub wx: ParamId,
    pub wh: ParamId,
    pub bx: ParamId,
    pub bh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        GruCell {
            wx: store.add_uniform(format!("{name}.wx"), &[input, 3 * hidden], bound, rng),
            wh: store.add_uniform(format!("{name}.wh"), &[hidden, 3 * hidden], bound, rng),
            bx: store.add_uniform(format!("{name}.bx"), &[1, 3 * hidden], bound, rng),
            bh: store.add_uniform(format!("{name}.bh"), &[1, 3 * hidden], bound, rng),
            input,
            hidden,
        }
    }

    /// r = σ(x Wr + h Ur + b), z = σ(x Wz + h Uz + b),
    /// n = tanh(x Wn + bn + r ⊙ (h Un + b'n)), h' = n + z ⊙ (h − n).
    pub fn step(&self, g: &mut Graph, p: &Bindings, x: Var, h: Var) -> Result<Var> {
        let hd = self.hidden;
        let xs = g.matmul(x, p.var(self.wx))?;
        let xs = g.add_row(xs, p.var(self.bx))?;
        let hs = g.matmul(h, p.var(self.wh))?;
        let hs = g.add_row(hs, p.var(self.bh))?;
        let xrz = g.slice(xs, Axis::Cols, 0, 2 * hd)?;
        let hrz = g.slice(hs, Axis::Cols, 0, 2 * hd)?;
        let rz = g.add(xrz, hrz)?;
        let rz = g.sigmoid(rz);
        let r = g.slice(rz, Axis::Cols, 0, hd)?;
        let z = g.slice(rz, Axis::Cols, hd, hd)?;
        let xn = g.slice(xs, Axis::Cols, 2 * hd, hd)?;
        let hn = g.slice(hs, Axis::Cols, 2 * hd, hd)?;
        let gated = g.mul(r, hn)?;
        let n = g.add(xn, gated)?;
        let n = g.tanh(n);
        let diff = g.sub(h, n)?;
        let zd = g.mul(z, diff)?;
        g.add(n, zd)
    }

    /// Runs the cell over a sequence of B×in steps from a zero state.
    pub fn run(&self, g: &mut Graph, p: &Bindings, seq: &[Var], reverse: bool) -> Result<Vec<Var>> {
        let b = self.check(g, seq)?;
        let mut h = g.constant(Tensor::zeros(&[b, self.hidden]));
        let mut out = vec![h; seq.len()];
        let order: Vec<usize> = if reverse {
            (0..seq.len()).rev().collect()
        } else {
            (0..seq.len()).collect()
        };
        for t in order {
            h = self.step(g, p, seq[t], h)?;
            out[t] = h;
        }
        Ok(out)
    }

    fn check(&self, g: &Graph, seq: &[Var]) -> Result<usize> {
        let first = seq.first().ok_or_else(|| Error::dim("gru", "empty sequence"))?;
        let (b, f) = g
            .value(*first)
            .dims2()
            .ok_or_else(|| Error::dim("gru", "steps must be 2-D"))?;
        if f != self.input {
            return Err(Error::dim("gru", format!("step width {f}, cell expects {}", self.input)));
        }
        Ok(b)
    }
}

/// Stacked GRU, optionally bidirectional (directions concatenated per layer).
#[derive(Debug, Clone)]
pub struct Gru {
    pub layers: Vec<Vec<GruCell>>,
    pub input: usize,
    pub hidden: usize,
    pub bidirectional: bool,
}

impl Gru {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        num_layers: usize,
        bidirectional: bool,
        rng: &mut R,
    ) -> Self {
        let dirs = if bidirectional { 2 } else { 1 };
        let layers = (0..num_layers.max(1))
            .map(|l| {
                let inp = if l == 0 { input } else { dirs * hidden };
                (0..dirs)
                    .map(|d| GruCell::new(store, &format!("{name}.l{l}.d{d}"), inp, hidden, rng))
                    .collect()
            })
            .collect();
        Gru {
            layers,
            input,
            hidden,
            bidirectional,
        }
    }

    pub fn output_size(&self) -> usize {
        if self.bidirectional {
            2 * self.hidden
        } else {
            self.hidden
        }
    }

    /// Per-step hidden states of the top layer, each B×output_size.
    pub fn forward(&self, g: &mut Graph, p: &Bindings, seq: &[Var]) -> Result<Vec<Var>> {
        let mut cur = seq.to_vec();
        for layer in &self.layers {
            let fwd = layer[0].run(g, p, &cur, false)?;
            cur = match layer.get(1) {
                None => fwd,
                Some(back) => {
                    let bwd = back.run(g, p, &cur, true)?;
                    fwd.iter()
                        .zip(&bwd)
                        .map(|(&a, &b)| g.concat(&[a, b], Axis::Cols))
                        .collect::<Result<_>>()?
                }
            };
        }
        Ok(cur)
    }
}

/// Splits a B·T×F tensor stored sequence-major (row b·T + t) into T steps of B×F.
pub fn to_steps(g: &mut Graph, x: Var, batch: usize, steps: usize) -> Result<Vec<Var>> {
    (0..steps)
        .map(|t| {
            let rows: Vec<usize> = (0..batch).map(|b| b * steps + t).collect();
            g.gather_rows(x, &rows)
        })
        .collect()
}

/// Inverse of [`to_steps`]: T steps of B×F back to B·T×F, sequence-major.
pub fn from_steps(g: &mut Graph, steps: &[Var]) -> Result<Var> {
    let t = steps.len();
    let stacked = g.concat(steps, Axis::Rows)?;
    let b = g.value(stacked).shape()[0] / t.max(1);
    let rows: Vec<usize> = (0..b).flat_map(|bi| (0..t).map(move |ti| ti * b + bi)).collect();
    g.gather_rows(stacked, &rows)
}
