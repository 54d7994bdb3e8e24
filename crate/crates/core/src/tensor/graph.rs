use std::fmt;

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reduction / concatenation axis of a 2-D tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Along the row index (numpy `axis=0`): r×c reduces to 1×c.
    Rows,
    /// Along the column index (numpy `axis=1`): r×c reduces to r×1.
    Cols,
}

/// An op whose forward value is computed by the caller and whose local
/// vector-Jacobian product is supplied here.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;

    /// Returns one gradient buffer per input (`None` for inputs that get no
    /// contribution).
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>>;
}

// Inputs to `exp` are clamped to this magnitude so the output stays finite.
const EXP_CLAMP: f64 = 80.0;

enum Op {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Maximum(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    AddRow(Var, Var),
    ScaleRows(Var, Var),
    Concat(Vec<Var>, Axis),
    Slice {
        x: Var,
        axis: Axis,
        start: usize,
        len: usize,
    },
    Reshape(Var),
    Transpose(Var),
    Gather {
        x: Var,
        rows: Vec<usize>,
    },
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Square(Var),
    Softmax(Var, Axis),
    Mean(Var, Axis),
    Max {
        x: Var,
        arg: Vec<usize>,
    },
    Sum(Var),
    L2Norm(Var),
    RowNorm(Var),
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Matmul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Maximum(..) => "maximum",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::AddRow(..) => "add_row",
            Op::ScaleRows(..) => "scale_rows",
            Op::Concat(..) => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape(..) => "reshape",
            Op::Transpose(..) => "transpose",
            Op::Gather { .. } => "gather_rows",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Exp(..) => "exp",
            Op::Square(..) => "square",
            Op::Softmax(..) => "softmax",
            Op::Mean(..) => "mean",
            Op::Max { .. } => "max",
            Op::Sum(..) => "sum",
            Op::L2Norm(..) => "l2norm",
            Op::RowNorm(..) => "row_norm",
            Op::Custom { op, .. } => op.name(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Dynamic computation graph. Nodes are stored in creation order, which is
/// a valid topological order because an op can only consume existing nodes.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    fault: Option<String>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("nodes", &self.nodes.len())
            .field("fault", &self.fault)
            .finish()
    }
}

/// Gradients of one backward sweep, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, or zeros of length `len` when `v` received none.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }
}

fn dims(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    t.dims2()
        .ok_or_else(|| Error::dim(op, format!("expected a 2-D tensor, got {:?}", t.shape())))
}

pub(crate) fn matmul_raw(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// Graph whose backward pass deliberately corrupts the local derivative
    /// of the named op. Used to prove the gradient checker catches faults.
    pub fn with_fault(op_name: &str) -> Self {
        Graph {
            nodes: Vec::new(),
            fault: Some(op_name.to_string()),
        }
    }

    pub fn fault(&self) -> Option<&str> {
        self.fault.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Leaf that participates in gradients iff `t.requires_grad`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let needs_grad = t.requires_grad;
        self.push(t, Op::Leaf, needs_grad)
    }

    pub fn param(&mut self, mut t: Tensor) -> Var {
        t.requires_grad = true;
        self.leaf(t)
    }

    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.requires_grad = false;
        self.leaf(t)
    }

    fn push(&mut self, mut value: Tensor, op: Op, needs_grad: bool) -> Var {
        value.zero_grad();
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    fn d2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        dims(&self.nodes[v.0].value, op)
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let src = &self.nodes[x.0].value;
        let data: Vec<f64> = src.data().iter().map(|&v| f(v)).collect();
        let shape = src.shape().to_vec();
        let ng = self.any_grad(&[x]);
        self.push(Tensor::new(&shape, data).expect("same shape"), op, ng)
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        let (sa, sb) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
        if sa != sb {
            return Err(Error::dim(op, format!("{:?} vs {:?}", sa, sb)));
        }
        Ok(())
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        op: Op,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        self.same_shape(a, b, name)?;
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        let data: Vec<f64> = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = va.shape().to_vec();
        let ng = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(&shape, data)?, op, ng))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.d2(a, "matmul")?;
        let (k2, n) = self.d2(b, "matmul")?;
        if k != k2 {
            return Err(Error::dim("matmul", format!("{}x{} times {}x{}", m, k, k2, n)));
        }
        let out = matmul_raw(
            self.nodes[a.0].value.data(),
            m,
            k,
            self.nodes[b.0].value.data(),
            n,
        );
        let ng = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::Matmul(a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    /// Elementwise maximum; ties route the gradient to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Maximum(a, b), "maximum", f64::max)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Scale(x, c), |v| v * c)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::AddScalar(x), |v| v + c)
    }

    /// `x` (r×c) plus the row vector `row` (1×c) added to every row.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (r, c) = self.d2(x, "add_row")?;
        let (one, c2) = self.d2(row, "add_row")?;
        if one != 1 || c != c2 {
            return Err(Error::dim("add_row", format!("{}x{} plus {}x{}", r, c, one, c2)));
        }
        let xv = self.nodes[x.0].value.data();
        let rv = self.nodes[row.0].value.data();
        let data: Vec<f64> = xv.iter().enumerate().map(|(i, v)| v + rv[i % c]).collect();
        let ng = self.any_grad(&[x, row]);
        Ok(self.push(Tensor::new(&[r, c], data)?, Op::AddRow(x, row), ng))
    }

    /// `x` (r×c) with row i multiplied by `w[i]` (w is r×1).
    pub fn scale_rows(&mut self, x: Var, w: Var) -> Result<Var> {
        let (r, c) = self.d2(x, "scale_rows")?;
        let (r2, one) = self.d2(w, "scale_rows")?;
        if one != 1 || r != r2 {
            return Err(Error::dim("scale_rows", format!("{}x{} by {}x{}", r, c, r2, one)));
        }
        let xv = self.nodes[x.0].value.data();
        let wv = self.nodes[w.0].value.data();
        let data: Vec<f64> = xv.iter().enumerate().map(|(i, v)| v * wv[i / c]).collect();
        let ng = self.any_grad(&[x, w]);
        Ok(self.push(Tensor::new(&[r, c], data)?, Op::ScaleRows(x, w), ng))
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::dim("concat", "no inputs"));
        }
        let shapes: Vec<(usize, usize)> = parts
            .iter()
            .map(|&p| self.d2(p, "concat"))
            .collect::<Result<_>>()?;
        let (out_shape, data) = match axis {
            Axis::Rows => {
                let c = shapes[0].1;
                if shapes.iter().any(|s| s.1 != c) {
                    return Err(Error::dim("concat", format!("column counts differ: {:?}", shapes)));
                }
                let r: usize = shapes.iter().map(|s| s.0).sum();
                let mut data = Vec::with_capacity(r * c);
                for &p in parts {
                    data.extend_from_slice(self.nodes[p.0].value.data());
                }
                ([r, c], data)
            }
            Axis::Cols => {
                let r = shapes[0].0;
                if shapes.iter().any(|s| s.0 != r) {
                    return Err(Error::dim("concat", format!("row counts differ: {:?}", shapes)));
                }
                let c: usize = shapes.iter().map(|s| s.1).sum();
                let mut data = Vec::with_capacity(r * c);
                for i in 0..r {
                    for (&p, s) in parts.iter().zip(&shapes) {
                        data.extend_from_slice(&self.nodes[p.0].value.data()[i * s.1..(i + 1) * s.1]);
                    }
                }
                ([r, c], data)
            }
        };
        let ng = self.any_grad(parts);
        Ok(self.push(Tensor::new(&out_shape, data)?, Op::Concat(parts.to_vec(), axis), ng))
    }

    pub fn slice(&mut self, x: Var, axis: Axis, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.d2(x, "slice")?;
        let src = self.nodes[x.0].value.data();
        let (shape, data) = match axis {
            Axis::Rows => {
                if start + len > r {
                    return Err(Error::dim("slice", format!("rows {}..{} of {}x{}", start, start + len, r, c)));
                }
                ([len, c], src[start * c..(start + len) * c].to_vec())
            }
            Axis::Cols => {
                if start + len > c {
                    return Err(Error::dim("slice", format!("cols {}..{} of {}x{}", start, start + len, r, c)));
                }
                let mut data = Vec::with_capacity(r * len);
                for i in 0..r {
                    data.extend_from_slice(&src[i * c + start..i * c + start + len]);
                }
                ([r, len], data)
            }
        };
        let ng = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(&shape, data)?, Op::Slice { x, axis, start, len }, ng))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.nodes[x.0].value.reshape(shape)?;
        let ng = self.any_grad(&[x]);
        Ok(self.push(t, Op::Reshape(x), ng))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.d2(x, "transpose")?;
        let src = self.nodes[x.0].value.data();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let ng = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(&[c, r], data)?, Op::Transpose(x), ng))
    }

    /// Output row i is input row `rows[i]`; rows may repeat.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let (r, c) = self.d2(x, "gather_rows")?;
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::dim("gather_rows", format!("row {} of {}x{}", bad, r, c)));
        }
        let src = self.nodes[x.0].value.data();
        let mut data = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            data.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let ng = self.any_grad(&[x]);
        Ok(self.push(
            Tensor::new(&[rows.len(), c], data)?,
            Op::Gather {
                x,
                rows: rows.to_vec(),
            },
            ng,
        ))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp(x), |v| v.clamp(-EXP_CLAMP, EXP_CLAMP).exp())
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    pub fn softmax(&mut self, x: Var, axis: Axis) -> Result<Var> {
        let (r, c) = self.d2(x, "softmax")?;
        let src = self.nodes[x.0].value.data();
        let mut out = vec![0.0; r * c];
        let (groups, glen, stride, gstep) = match axis {
            Axis::Cols => (r, c, 1, c),
            Axis::Rows => (c, r, c, 1),
        };
        for g in 0..groups {
            let base = g * gstep;
            let idx = |k: usize| base + k * stride;
            let m = (0..glen).map(|k| src[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for k in 0..glen {
                let e = (src[idx(k)] - m).exp();
                out[idx(k)] = e;
                s += e;
            }
            for k in 0..glen {
                out[idx(k)] /= s;
            }
        }
        let ng = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(&[r, c], out)?, Op::Softmax(x, axis), ng))
    }

    pub fn mean(&mut self, x: Var, axis: Axis) -> Result<Var> {
        let (r, c) = self.d2(x, "mean")?;
        if r == 0 || c == 0 {
            return Err(Error::dim("mean", "empty tensor"));
        }
        let src = self.nodes[x.0].value.data();
        let (shape, data) = match axis {
            Axis::Rows => {
                let mut out = vec![0.0; c];
                for i in 0..r {
                    for j in 0..c {
                        out[j] += src[i * c + j];
                    }
                }
                out.iter_mut().for_each(|v| *v /= r as f64);
                ([1, c], out)
            }
            Axis::Cols => {
                let out = (0..r)
                    .map(|i| src[i * c..(i + 1) * c].iter().sum::<f64>() / c as f64)
                    .collect();
                ([r, 1], out)
            }
        };
        let ng = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(&shape, data)?, Op::Mean(x, axis), ng))
    }

    /// Maximum along an axis; the gradient goes to the first maximal entry.
    pub fn max(&mut self, x: Var, axis: Axis) -> Result<Var> {
        let (r, c) = self.d2(x, "max")?;
        if r == 0 || c == 0 {
            return Err(Error::dim("max", "empty tensor"));
        }
        let src = self.nodes[x.0].value.data();
        let (shape, arg): ([usize; 2], Vec<usize>) = match axis {
            Axis::Rows => {
                let arg = (0..c)
                    .map(|j| {
                        (0..r)
                            .map(|i| i * c + j)
                            .fold(j, |best, k| if src[k] > src[best] { k } else { best })
                    })
                    .collect();
                ([1, c], arg)
            }
            Axis::Cols => {
                let arg = (0..r)
                    .map(|i| {
                        (i * c..(i + 1) * c).fold(i * c, |best, k| if src[k] > src[best] { k } else { best })
                    })
                    .collect();
                ([r, 1], arg)
            }
        };
        let data = arg.iter().map(|&k| src[k]).collect();
        let ng = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(&shape, data)?, Op::Max { x, arg }, ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.data().iter().sum();
        let ng = self.any_grad(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    /// Euclidean norm of all entries, as a 1×1 tensor.
    pub fn l2norm(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let ng = self.any_grad(&[x]);
        self.push(Tensor::scalar(s), Op::L2Norm(x), ng)
    }

    /// Per-row Euclidean norm, r×c to r×1.
    pub fn row_norm(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.d2(x, "row_norm")?;
        let src = self.nodes[x.0].value.data();
        let data = (0..r)
            .map(|i| src[i * c..(i + 1) * c].iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let ng = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(&[r, 1], data)?, Op::RowNorm(x), ng))
    }

    /// Records an op whose forward value was computed by the caller.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, op: Box<dyn CustomOp>) -> Var {
        let ng = self.any_grad(inputs);
        self.push(
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            ng,
        )
    }

    /// Reverse sweep from a scalar output. Every node reachable from
    /// `output` that requires grad receives d(output)/d(node).
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out_node = self
            .nodes
            .get(output.0)
            .ok_or_else(|| Error::Contract(format!("unknown node {}", output.0)))?;
        if out_node.value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar output, got shape {:?}",
                out_node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let scale = match &self.fault {
                Some(name) if name == node.op.name() => 1.5,
                _ => 1.0,
            };
            let contributions = self.local_backward(node, &g);
            grads[i] = Some(g);
            for (v, mut c) in contributions {
                if !self.nodes[v.0].needs_grad {
                    continue;
                }
                if scale != 1.0 {
                    c.iter_mut().for_each(|x| *x *= scale);
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(c),
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn val(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn local_backward(&self, node: &Node, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let y = node.value.data();
        match &node.op {
            Op::Leaf => vec![],
            Op::Matmul(a, b) => {
                let (m, k) = self.nodes[a.0].value.dims2().unwrap();
                let (_, n) = self.nodes[b.0].value.dims2().unwrap();
                let (av, bv) = (self.val(*a), self.val(*b));
                let mut out = Vec::with_capacity(2);
                if self.nodes[a.0].needs_grad {
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            da[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    out.push((*a, da));
                }
                if self.nodes[b.0].needs_grad {
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av_ip = av[i * k + p];
                            if av_ip == 0.0 {
                                continue;
                            }
                            for (d, gv) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += av_ip * gv;
                            }
                        }
                    }
                    out.push((*b, db));
                }
                out
            }
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Sub(a, b) => vec![(*a, g.to_vec()), (*b, g.iter().map(|v| -v).collect())],
            Op::Mul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                vec![
                    (*a, g.iter().zip(bv).map(|(g, b)| g * b).collect()),
                    (*b, g.iter().zip(av).map(|(g, a)| g * a).collect()),
                ]
            }
            Op::Maximum(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                let mut da = vec![0.0; g.len()];
                let mut db = vec![0.0; g.len()];
                for i in 0..g.len() {
                    if av[i] >= bv[i] {
                        da[i] = g[i];
                    } else {
                        db[i] = g[i];
                    }
                }
                vec![(*a, da), (*b, db)]
            }
            Op::Scale(x, c) => vec![(*x, g.iter().map(|v| v * c).collect())],
            Op::AddScalar(x) | Op::Reshape(x) => vec![(*x, g.to_vec())],
            Op::AddRow(x, row) => {
                let c = self.nodes[row.0].value.len();
                let mut dr = vec![0.0; c];
                for (i, gv) in g.iter().enumerate() {
                    dr[i % c] += gv;
                }
                vec![(*x, g.to_vec()), (*row, dr)]
            }
            Op::ScaleRows(x, w) => {
                let (r, c) = self.nodes[x.0].value.dims2().unwrap();
                let (xv, wv) = (self.val(*x), self.val(*w));
                let dx = g.iter().enumerate().map(|(i, gv)| gv * wv[i / c]).collect();
                let dw = (0..r)
                    .map(|i| (0..c).map(|j| g[i * c + j] * xv[i * c + j]).sum())
                    .collect();
                vec![(*x, dx), (*w, dw)]
            }
            Op::Concat(parts, axis) => {
                let (_, total_c) = node.value.dims2().unwrap();
                let mut out = Vec::with_capacity(parts.len());
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = self.nodes[p.0].value.dims2().unwrap();
                    let d = match axis {
                        Axis::Rows => {
                            let d = g[offset * pc..(offset + pr) * pc].to_vec();
                            offset += pr;
                            d
                        }
                        Axis::Cols => {
                            let mut d = Vec::with_capacity(pr * pc);
                            for i in 0..pr {
                                d.extend_from_slice(&g[i * total_c + offset..i * total_c + offset + pc]);
                            }
                            offset += pc;
                            d
                        }
                    };
                    out.push((p, d));
                }
                out
            }
            Op::Slice { x, axis, start, len } => {
                let (r, c) = self.nodes[x.0].value.dims2().unwrap();
                let mut dx = vec![0.0; r * c];
                match axis {
                    Axis::Rows => dx[start * c..(start + len) * c].copy_from_slice(g),
                    Axis::Cols => {
                        for i in 0..r {
                            dx[i * c + start..i * c + start + len].copy_from_slice(&g[i * len..(i + 1) * len]);
                        }
                    }
                }
                vec![(*x, dx)]
            }
            Op::Transpose(x) => {
                let (r, c) = self.nodes[x.0].value.dims2().unwrap();
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        dx[i * c + j] = g[j * r + i];
                    }
                }
                vec![(*x, dx)]
            }
            Op::Gather { x, rows } => {
                let (r, c) = self.nodes[x.0].value.dims2().unwrap();
                let mut dx = vec![0.0; r * c];
                for (o, &i) in rows.iter().enumerate() {
                    for j in 0..c {
                        dx[i * c + j] += g[o * c + j];
                    }
                }
                vec![(*x, dx)]
            }
            Op::Tanh(x) => vec![(*x, g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect())],
            Op::Sigmoid(x) => vec![(*x, g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect())],
            Op::Exp(x) => {
                let xv = self.val(*x);
                vec![(
                    *x,
                    g.iter()
                        .zip(y)
                        .zip(xv)
                        .map(|((g, y), xv)| if xv.abs() > EXP_CLAMP { 0.0 } else { g * y })
                        .collect(),
                )]
            }
            Op::Square(x) => {
                let xv = self.val(*x);
                vec![(*x, g.iter().zip(xv).map(|(g, x)| 2.0 * g * x).collect())]
            }
            Op::Softmax(x, axis) => {
                let (r, c) = node.value.dims2().unwrap();
                let (groups, glen, stride, gstep) = match axis {
                    Axis::Cols => (r, c, 1, c),
                    Axis::Rows => (c, r, c, 1),
                };
                let mut dx = vec![0.0; r * c];
                for gi in 0..groups {
                    let base = gi * gstep;
                    let dot: f64 = (0..glen).map(|k| g[base + k * stride] * y[base + k * stride]).sum();
                    for k in 0..glen {
                        let idx = base + k * stride;
                        dx[idx] = y[idx] * (g[idx] - dot);
                    }
                }
                vec![(*x, dx)]
            }
            Op::Mean(x, axis) => {
                let (r, c) = self.nodes[x.0].value.dims2().unwrap();
                let dx = (0..r * c)
                    .map(|k| match axis {
                        Axis::Rows => g[k % c] / r as f64,
                        Axis::Cols => g[k / c] / c as f64,
                    })
                    .collect();
                vec![(*x, dx)]
            }
            Op::Max { x, arg, .. } => {
                let mut dx = vec![0.0; self.nodes[x.0].value.len()];
                for (o, &k) in arg.iter().enumerate() {
                    dx[k] += g[o];
                }
                vec![(*x, dx)]
            }
            Op::Sum(x) => vec![(*x, vec![g[0]; self.nodes[x.0].value.len()])],
            Op::L2Norm(x) => {
                let n = y[0];
                let xv = self.val(*x);
                let dx = if n > 0.0 {
                    xv.iter().map(|v| g[0] * v / n).collect()
                } else {
                    vec![0.0; xv.len()]
                };
                vec![(*x, dx)]
            }
            Op::RowNorm(x) => {
                let (_, c) = self.nodes[x.0].value.dims2().unwrap();
                let xv = self.val(*x);
                let dx = xv
                    .iter()
                    .enumerate()
                    .map(|(k, v)| {
                        let n = y[k / c];
                        if n > 0.0 {
                            g[k / c] * v / n
                        } else {
                            0.0
                        }
                    })
                    .collect();
                vec![(*x, dx)]
            }
            Op::Custom { inputs, op } => {
                let ins: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
                op.backward(&ins, &node.value, g)
                    .into_iter()
                    .zip(inputs)
                    .filter_map(|(d, &v)| d.map(|d| (v, d)))
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_of_uniform_logits_is_uniform() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::row_vector(&[0.0, 0.0, 0.0]));
        let s = g.softmax(x, Axis::Cols).unwrap();
        for &v in g.value(s).data() {
            assert!(close(v, 1.0 / 3.0, 1e-15));
        }
    }

    #[test]
    fn tanh_at_origin() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(0.0));
        let y = g.tanh(x);
        assert_eq!(g.scalar(y), 0.0);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[1.0]);
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let i = g.constant(Tensor::eye(3));
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let av = g.constant(a.clone());
        let p = g.matmul(i, av).unwrap();
        assert_eq!(g.value(p).data(), a.data());
    }

    #[test]
    fn matmul_shape_error_names_op() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("2x3"), "{err}");
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::row_vector(&[1.0, 2.0]));
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn constant_output_has_zero_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::row_vector(&[1.0, 2.0]));
        let c = g.constant(Tensor::scalar(3.0));
        let grads = g.backward(c).unwrap();
        assert_eq!(grads.get_or_zeros(x, 2), vec![0.0, 0.0]);
    }

    #[test]
    fn sigmoid_slope_at_zero() {
        let mut g = Graph::new();
        let w = g.param(Tensor::scalar(0.0));
        let s = g.sigmoid(w);
        let grads = g.backward(s).unwrap();
        assert!(close(grads.get(w).unwrap()[0], 0.25, 1e-15));
    }

    #[test]
    fn non_scalar_backward_is_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::row_vector(&[1.0, 2.0]));
        let y = g.tanh(x);
        assert!(matches!(g.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn exp_stays_finite() {
        let mut g = Graph::new();
        let x = g.param(Tensor::row_vector(&[1e6, -1e6]));
        let y = g.exp(x);
        assert!(g.value(y).is_finite());
    }

    #[test]
    fn max_routes_gradient_to_argmax() {
        let mut g = Graph::new();
        let x = g.param(Tensor::from_rows(&[vec![1.0, 5.0], vec![3.0, 2.0]]).unwrap());
        let m = g.max(x, Axis::Rows).unwrap();
        assert_eq!(g.value(m).data(), &[3.0, 5.0]);
        let s = g.sum(m);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[0.0, 1.0, 1.0, 0.0]);
    }
}
