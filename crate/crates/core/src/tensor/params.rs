use std::collections::HashMap;

use rand::Rng;

use super::{Gradients, Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named learnable tensors. Models keep `ParamId`s and bind the whole store
/// into a fresh [`Graph`] for every forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

/// Graph leaves for every parameter of one store, valid for one graph.
#[derive(Debug, Clone)]
pub struct Bindings {
    vars: Vec<Var>,
}

impl Bindings {
    /// Bindings over caller-made leaves, one per store parameter in order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bindings { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name {name}"
        );
        self.index.insert(name.clone(), self.tensors.len());
        self.names.push(name);
        self.tensors.push(tensor.with_grad());
        ParamId(self.tensors.len() - 1)
    }

    /// Uniform(-bound, bound) initialisation.
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        bound: f64,
        rng: &mut R,
    ) -> ParamId {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.add(name, Tensor::new(shape, data).expect("shape matches"))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Values without gradient buffers, in store order.
    pub fn values(&self) -> Vec<Tensor> {
        self.tensors.iter().map(strip).collect()
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Binds every parameter as a trainable leaf.
    pub fn bind(&self, g: &mut Graph) -> Bindings {
        Bindings {
            vars: self.tensors.iter().map(|t| g.param(strip(t))).collect(),
        }
    }

    /// Binds every parameter as a constant; no gradient flows into them.
    pub fn bind_frozen(&self, g: &mut Graph) -> Bindings {
        Bindings {
            vars: self.tensors.iter().map(|t| g.constant(strip(t))).collect(),
        }
    }

    /// Adds the sweep's gradients into each parameter's grad buffer.
    pub fn accumulate(&mut self, bindings: &Bindings, grads: &Gradients) -> Result<()> {
        for (t, &v) in self.tensors.iter_mut().zip(&bindings.vars) {
            if let Some(g) = grads.get(v) {
                t.accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Overwrites values by name; shapes must match exactly.
    pub fn load_values(&mut self, name: &str, shape: &[usize], data: Vec<f64>) -> Result<()> {
        let idx = *self
            .index
            .get(name)
            .ok_or_else(|| Error::Validation(format!("unknown parameter {name}")))?;
        let t = &mut self.tensors[idx];
        if t.shape() != shape {
            return Err(Error::mismatch(
                format!("shape of {name}"),
                format!("{:?}", t.shape()),
                format!("{:?}", shape),
            ));
        }
        t.data_mut().copy_from_slice(&data);
        Ok(())
    }

    /// Order-sensitive digest of all values (bit patterns), for isolation checks.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (name, t) in self.iter() {
            for b in name.bytes() {
                h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
            }
            for v in t.data() {
                h = (h ^ v.to_bits()).wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

fn strip(t: &Tensor) -> Tensor {
    Tensor::new(t.shape(), t.data().to_vec()).expect("valid tensor")
}
