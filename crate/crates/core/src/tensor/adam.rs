use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment buffers, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let (m, v) = store
            .iter()
            .map(|(_, t)| (vec![0.0; t.len()], vec![0.0; t.len()]))
            .unzip();
        AdamState { config, t: 0, m, v }
    }

    /// One bias-corrected update of every parameter from its grad buffer.
    /// Parameters without a gradient are treated as having a zero gradient.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        let tensors = store.tensors_mut();
        if tensors.len() != self.m.len() {
            return Err(Error::dim(
                "adam_step",
                format!("{} parameters vs {} moment buffers", tensors.len(), self.m.len()),
            ));
        }
        self.t += 1;
        for (i, p) in tensors.iter_mut().enumerate() {
            let g = p.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.len()]);
            adam_update(p, &g, &mut self.m[i], &mut self.v[i], self.t, &self.config)?;
        }
        Ok(())
    }
}

fn adam_update(
    p: &mut Tensor,
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    c: &AdamConfig,
) -> Result<()> {
    if g.len() != p.len() || m.len() != p.len() || v.len() != p.len() {
        return Err(Error::dim(
            "adam_step",
            format!(
                "param {:?}, grad {}, m {}, v {}",
                p.shape(),
                g.len(),
                m.len(),
                v.len()
            ),
        ));
    }
    let bc1 = 1.0 - c.beta1.powi(t as i32);
    let bc2 = 1.0 - c.beta2.powi(t as i32);
    for (k, w) in p.data_mut().iter_mut().enumerate() {
        m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
        v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
        let mhat = m[k] / bc1;
        let vhat = v[k] / bc2;
        *w -= c.lr * mhat / (vhat.sqrt() + c.epsilon);
    }
    Ok(())
}

/// Single-tensor Adam update; `state.m`/`state.v` must hold exactly one buffer.
pub fn adam_step(param: &mut Tensor, grad: &[f64], state: &mut AdamState) -> Result<()> {
    if state.m.len() != 1 || state.v.len() != 1 {
        return Err(Error::dim("adam_step", "state must hold a single moment buffer"));
    }
    state.t += 1;
    adam_update(param, grad, &mut state.m[0], &mut state.v[0], state.t, &state.config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(lr: f64, w: f64) -> (Tensor, AdamState) {
        let p = Tensor::scalar(w);
        let state = AdamState {
            config: AdamConfig::with_lr(lr),
            t: 0,
            m: vec![vec![0.0]],
            v: vec![vec![0.0]],
        };
        (p, state)
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = g, v̂ = g², so the update is lr·g/(|g|+ε) ≈ lr.
        let (mut p, mut s) = single(0.1, 1.0);
        adam_step(&mut p, &[1.0], &mut s).unwrap();
        assert!((p.data()[0] - 0.9).abs() < 1e-8);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_gradient_leaves_weight() {
        let (mut p, mut s) = single(0.1, 1.0);
        adam_step(&mut p, &[0.0], &mut s).unwrap();
        assert_eq!(p.data()[0], 1.0);
    }

    #[test]
    fn deterministic() {
        let (mut p1, mut s1) = single(0.1, 0.3);
        let (mut p2, mut s2) = single(0.1, 0.3);
        for g in [0.5, -0.2] {
            adam_step(&mut p1, &[g], &mut s1).unwrap();
            adam_step(&mut p2, &[g], &mut s2).unwrap();
        }
        assert_eq!(p1.data()[0].to_bits(), p2.data()[0].to_bits());
        assert_eq!(s1, s2);
    }

    #[test]
    fn shape_mismatch() {
        let (mut p, mut s) = single(0.1, 1.0);
        assert!(matches!(
            adam_step(&mut p, &[1.0, 2.0], &mut s),
            Err(Error::Dimension { .. })
        ));
    }
}
