//! Rotation representations: axis-angle (Rodrigues), the continuous 6D
//! encoding (first two matrix columns) and 3×3 matrices stored row-major.
//!
//! Each conversion also exists as a graph op acting row-wise on N×(k·J)
//! tensors, with its vector-Jacobian product written out by hand.

use crate::error::{Error, Result};
use crate::tensor::{CustomOp, Graph, Tensor, Var};

/// Row-major 3×3 matrix.
pub type Mat3 = [f64; 9];

pub const IDENTITY: Mat3 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

/// Norm below which a 6D column counts as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-8;

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            c[i * 3 + j] = (0..3).map(|k| a[i * 3 + k] * b[k * 3 + j]).sum();
        }
    }
    c
}

pub fn mat_t(a: &Mat3) -> Mat3 {
    [a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]]
}

pub fn mat_vec(a: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    [
        a[0] * v[0] + a[1] * v[1] + a[2] * v[2],
        a[3] * v[0] + a[4] * v[1] + a[5] * v[2],
        a[6] * v[0] + a[7] * v[1] + a[8] * v[2],
    ]
}

pub fn det(a: &Mat3) -> f64 {
    a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
        + a[2] * (a[3] * a[7] - a[4] * a[6])
}

/// max |RᵀR − I| over entries.
pub fn orthonormality_error(r: &Mat3) -> f64 {
    let rtr = mat_mul(&mat_t(r), r);
    rtr.iter()
        .zip(IDENTITY.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn skew(w: &[f64; 3]) -> Mat3 {
    [0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0]
}

// Coefficients of R = I + a·K + b·K² and their scaled derivatives
// a' = (da/dθ)/θ, b' = (db/dθ)/θ.
fn rodrigues_coeffs(theta: f64) -> (f64, f64, f64, f64) {
    let t2 = theta * theta;
    let (a, b) = if theta < 1e-4 {
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0)
    } else {
        let h = (theta / 2.0).sin();
        (theta.sin() / theta, 2.0 * h * h / t2)
    };
    let (da, db) = if theta < 1e-2 {
        (
            -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0,
            -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        (
            (theta * c - s) / (t2 * theta),
            (theta * s - 2.0 * (1.0 - c)) / (t2 * t2),
        )
    };
    (a, b, da, db)
}

/// Rodrigues formula; the zero rotation is handled by its series limit.
pub fn axis_angle_to_rotmat(w: &[f64; 3]) -> Mat3 {
    let theta = norm(w);
    let (a, b, _, _) = rodrigues_coeffs(theta);
    let k = skew(w);
    let k2 = mat_mul(&k, &k);
    let mut r = IDENTITY;
    for i in 0..9 {
        r[i] += a * k[i] + b * k2[i];
    }
    r
}

/// ∂R/∂ω_i for i = 0..3.
fn axis_angle_jacobian(w: &[f64; 3]) -> [Mat3; 3] {
    let theta = norm(w);
    let (a, b, da, db) = rodrigues_coeffs(theta);
    let k = skew(w);
    let k2 = mat_mul(&k, &k);
    let mut out = [[0.0; 9]; 3];
    for (i, d) in out.iter_mut().enumerate() {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        let ei = skew(&e);
        let ek = mat_mul(&ei, &k);
        let ke = mat_mul(&k, &ei);
        for m in 0..9 {
            d[m] = a * ei[m] + b * (ek[m] + ke[m]) + w[i] * (da * k[m] + db * k2[m]);
        }
    }
    out
}

/// Gram-Schmidt on the two 3-vectors `r[0..3]`, `r[3..6]` (the first two
/// columns), third column by cross product.
pub fn rot6d_to_rotmat(r: &[f64; 6]) -> Result<Mat3> {
    Ok(rot6d_frame(r)?.matrix())
}

struct Rot6dFrame {
    a2: [f64; 3],
    b1: [f64; 3],
    b2: [f64; 3],
    b3: [f64; 3],
    n1: f64,
    nu: f64,
    s: f64,
}

impl Rot6dFrame {
    fn matrix(&self) -> Mat3 {
        let mut m = [0.0; 9];
        for r in 0..3 {
            m[r * 3] = self.b1[r];
            m[r * 3 + 1] = self.b2[r];
            m[r * 3 + 2] = self.b3[r];
        }
        m
    }

    /// Gradient w.r.t. the 6 inputs given the gradient w.r.t. the matrix.
    fn vjp(&self, g: &[f64]) -> [f64; 6] {
        let col = |c: usize| [g[c], g[3 + c], g[6 + c]];
        let (mut gb1, mut gb2, gb3) = (col(0), col(1), col(2));
        let c1 = cross(&self.b2, &gb3);
        let c2 = cross(&gb3, &self.b1);
        for k in 0..3 {
            gb1[k] += c1[k];
            gb2[k] += c2[k];
        }
        let p2 = dot(&self.b2, &gb2);
        let gu: [f64; 3] = std::array::from_fn(|k| (gb2[k] - self.b2[k] * p2) / self.nu);
        let b1gu = dot(&self.b1, &gu);
        let ga2: [f64; 3] = std::array::from_fn(|k| gu[k] - self.b1[k] * b1gu);
        for k in 0..3 {
            gb1[k] += -self.s * gu[k] - b1gu * self.a2[k];
        }
        let p1 = dot(&self.b1, &gb1);
        let ga1: [f64; 3] = std::array::from_fn(|k| (gb1[k] - self.b1[k] * p1) / self.n1);
        [ga1[0], ga1[1], ga1[2], ga2[0], ga2[1], ga2[2]]
    }
}

fn rot6d_frame(r: &[f64; 6]) -> Result<Rot6dFrame> {
    let a1 = [r[0], r[1], r[2]];
    let a2 = [r[3], r[4], r[5]];
    let n1 = norm(&a1);
    if n1.is_nan() || n1 < DEGENERATE_NORM {
        return Err(Error::Degenerate(format!("6D first column has norm {n1:e}")));
    }
    let b1 = a1.map(|v| v / n1);
    let s = dot(&b1, &a2);
    let u: [f64; 3] = std::array::from_fn(|k| a2[k] - s * b1[k]);
    let nu = norm(&u);
    if nu.is_nan() || nu < DEGENERATE_NORM {
        return Err(Error::Degenerate(format!(
            "6D second column is parallel to the first (residual {nu:e})"
        )));
    }
    let b2 = u.map(|v| v / nu);
    let b3 = cross(&b1, &b2);
    Ok(Rot6dFrame {
        a2,
        b1,
        b2,
        b3,
        n1,
        nu,
        s,
    })
}

/// First two columns, flattened column after column.
pub fn rotmat_to_rot6d(m: &Mat3) -> [f64; 6] {
    [m[0], m[3], m[6], m[1], m[4], m[7]]
}

/// Rotation angle below which the log map switches to its series form.
const LOG_SERIES: f64 = 1e-3;

/// Inverse Rodrigues (matrix logarithm), angle in [0, π].
pub fn rotmat_to_axis_angle(m: &Mat3) -> [f64; 3] {
    let c = ((m[0] + m[4] + m[8] - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = c.acos();
    let v = [m[7] - m[5], m[2] - m[6], m[3] - m[1]];
    if theta < LOG_SERIES {
        let f = 0.5 + theta * theta / 12.0;
        return v.map(|x| x * f);
    }
    if std::f64::consts::PI - theta < 1e-6 {
        // Near a half turn: axis from the symmetric part (R + I)/2 = n nᵀ.
        let diag = [m[0], m[4], m[8]];
        let i = (0..3).fold(0, |b, k| if diag[k] > diag[b] { k } else { b });
        let mut n = [0.0; 3];
        n[i] = ((diag[i] + 1.0) / 2.0).max(0.0).sqrt();
        for k in 0..3 {
            if k != i {
                n[k] = (m[i * 3 + k] + m[k * 3 + i]) / (4.0 * n[i]);
            }
        }
        let nn = norm(&n);
        let sign = if dot(&n, &v) < 0.0 { -1.0 } else { 1.0 };
        return n.map(|x| sign * theta * x / nn);
    }
    let f = theta / (2.0 * theta.sin());
    v.map(|x| x * f)
}

fn log_map_vjp(m: &[f64], g: &[f64]) -> [f64; 9] {
    let c_raw = (m[0] + m[4] + m[8] - 1.0) / 2.0;
    let c = c_raw.clamp(-1.0, 1.0);
    let theta = c.acos();
    let v = [m[7] - m[5], m[2] - m[6], m[3] - m[1]];
    let (f, dfdc) = if theta < LOG_SERIES {
        let t2 = theta * theta;
        (0.5 + t2 / 12.0, -(1.0 / 6.0 + t2 / 15.0))
    } else {
        let s = theta.sin().max(1e-12);
        (
            theta / (2.0 * s),
            -(s - theta * theta.cos()) / (2.0 * s * s * s),
        )
    };
    let gv = [g[0] * f, g[1] * f, g[2] * f];
    let gf = g[0] * v[0] + g[1] * v[1] + g[2] * v[2];
    let gc = if c_raw.abs() >= 1.0 && theta >= LOG_SERIES {
        0.0
    } else {
        gf * dfdc
    };
    let mut out = [0.0; 9];
    out[0] += gc / 2.0;
    out[4] += gc / 2.0;
    out[8] += gc / 2.0;
    out[7] += gv[0];
    out[5] -= gv[0];
    out[2] += gv[1];
    out[6] -= gv[1];
    out[3] += gv[2];
    out[1] -= gv[2];
    out
}

fn rows_of(t: &Tensor, group: usize, op: &'static str) -> Result<usize> {
    let (r, c) = t
        .dims2()
        .ok_or_else(|| Error::dim(op, format!("expected 2-D input, got {:?}", t.shape())))?;
    if c % group != 0 {
        return Err(Error::dim(op, format!("width {c} is not a multiple of {group}")));
    }
    Ok(r * c / group)
}

struct AxisAngleOp;

impl CustomOp for AxisAngleOp {
    fn name(&self) -> &'static str {
        "axis_angle_to_rotmat"
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        let x = inputs[0].data();
        let mut dx = vec![0.0; x.len()];
        for (k, w) in x.chunks_exact(3).enumerate() {
            let jac = axis_angle_jacobian(&[w[0], w[1], w[2]]);
            let gk = &g[k * 9..(k + 1) * 9];
            for i in 0..3 {
                dx[k * 3 + i] = jac[i].iter().zip(gk).map(|(a, b)| a * b).sum();
            }
        }
        vec![Some(dx)]
    }
}

/// N×3k axis-angle rows to N×9k row-major matrices.
pub fn axis_angle_to_rotmat_op(g: &mut Graph, x: Var) -> Result<Var> {
    let t = g.value(x);
    rows_of(t, 3, "axis_angle_to_rotmat")?;
    let n = t.dims2().unwrap().0;
    let data: Vec<f64> = t
        .data()
        .chunks_exact(3)
        .flat_map(|w| axis_angle_to_rotmat(&[w[0], w[1], w[2]]))
        .collect();
    let cols = data.len() / n.max(1);
    let out = Tensor::new(&[n, cols], data)?;
    Ok(g.custom(&[x], out, Box::new(AxisAngleOp)))
}

struct Rot6dOp {
    frames: Vec<Rot6dFrame>,
}

impl CustomOp for Rot6dOp {
    fn name(&self) -> &'static str {
        "rot6d_to_rotmat"
    }

    fn backward(&self, _inputs: &[&Tensor], _out: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        let dx = self
            .frames
            .iter()
            .enumerate()
            .flat_map(|(k, f)| f.vjp(&g[k * 9..(k + 1) * 9]))
            .collect();
        vec![Some(dx)]
    }
}

/// N×6k rows to N×9k matrices; errors on any degenerate 6D block.
pub fn rot6d_to_rotmat_op(g: &mut Graph, x: Var) -> Result<Var> {
    let t = g.value(x);
    rows_of(t, 6, "rot6d_to_rotmat")?;
    let n = t.dims2().unwrap().0;
    let frames: Vec<Rot6dFrame> = t
        .data()
        .chunks_exact(6)
        .map(|r| rot6d_frame(&[r[0], r[1], r[2], r[3], r[4], r[5]]))
        .collect::<Result<_>>()?;
    let data: Vec<f64> = frames.iter().flat_map(Rot6dFrame::matrix).collect();
    let cols = data.len() / n.max(1);
    let out = Tensor::new(&[n, cols], data)?;
    Ok(g.custom(&[x], out, Box::new(Rot6dOp { frames })))
}

struct LogMapOp;

impl CustomOp for LogMapOp {
    fn name(&self) -> &'static str {
        "rotmat_to_axis_angle"
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        let dx = inputs[0]
            .data()
            .chunks_exact(9)
            .enumerate()
            .flat_map(|(k, m)| log_map_vjp(m, &g[k * 3..(k + 1) * 3]))
            .collect();
        vec![Some(dx)]
    }
}

/// N×9k matrices to N×3k axis-angle. The derivative is singular at a half
/// turn; there it is truncated to stay finite.
pub fn rotmat_to_axis_angle_op(g: &mut Graph, x: Var) -> Result<Var> {
    let t = g.value(x);
    rows_of(t, 9, "rotmat_to_axis_angle")?;
    let n = t.dims2().unwrap().0;
    let data: Vec<f64> = t
        .data()
        .chunks_exact(9)
        .flat_map(|m| {
            let m: Mat3 = m.try_into().expect("chunk of 9");
            rotmat_to_axis_angle(&m)
        })
        .collect();
    let cols = data.len() / n.max(1);
    let out = Tensor::new(&[n, cols], data)?;
    Ok(g.custom(&[x], out, Box::new(LogMapOp)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_rotation_is_identity() {
        assert_eq!(axis_angle_to_rotmat(&[0.0; 3]), IDENTITY);
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = axis_angle_to_rotmat(&[0.0, 0.0, FRAC_PI_2]);
        let v = mat_vec(&r, &[1.0, 0.0, 0.0]);
        assert!((v[0]).abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15 && v[2].abs() < 1e-15);
    }

    #[test]
    fn six_d_identity_inputs() {
        assert_eq!(rot6d_to_rotmat(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap(), IDENTITY);
        let r = rot6d_to_rotmat(&[2.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(r.iter().zip(IDENTITY.iter()).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(rotmat_to_rot6d(&IDENTITY), [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn six_d_degenerate_inputs_error() {
        assert!(matches!(
            rot6d_to_rotmat(&[0.0; 6]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            rot6d_to_rotmat(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn log_map_inverts_rodrigues() {
        for w in [[0.3, -0.2, 0.9], [1e-7, 0.0, -2e-7], [0.0, 3.1, 0.0], [2.0, 1.0, -0.5]] {
            let back = rotmat_to_axis_angle(&axis_angle_to_rotmat(&w));
            for k in 0..3 {
                assert!((back[k] - w[k]).abs() < 1e-9, "{w:?} -> {back:?}");
            }
        }
    }

    #[test]
    fn near_half_turn_log_map() {
        let w = [0.0, 0.0, std::f64::consts::PI - 1e-9];
        let back = rotmat_to_axis_angle(&axis_angle_to_rotmat(&w));
        assert!((back[2].abs() - w[2]).abs() < 1e-6, "{back:?}");
    }

    #[test]
    fn graph_ops_pass_grad_check() {
        let aa = Tensor::from_rows(&[vec![0.3, -0.5, 0.2, 1e-5, 0.0, 2e-5], vec![1.2, 0.4, -0.8, 0.0, 0.0, 0.0]])
            .unwrap();
        let err = grad_check(
            |g, x| {
                let r = axis_angle_to_rotmat_op(g, x)?;
                let s = g.square(r);
                let w = g.constant(Tensor::new(&[12, 1], (0..12).map(|i| 0.1 * i as f64 - 0.4).collect())?);
                let flat = g.reshape(s, &[1, 36])?;
                let part = g.slice(flat, crate::tensor::Axis::Cols, 0, 12)?;
                let y = g.matmul(part, w)?;
                let r2 = g.sum(r);
                let y = g.add(y, r2)?;
                Ok(g.sum(y))
            },
            &aa,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");

        let r6 = Tensor::row_vector(&[1.1, 0.2, -0.3, 0.4, 0.9, 0.1]);
        let err = grad_check(
            |g, x| {
                let r = rot6d_to_rotmat_op(g, x)?;
                let w = g.constant(Tensor::new(&[9, 1], (0..9).map(|i| (i as f64).sin()).collect())?);
                let y = g.matmul(r, w)?;
                Ok(g.sum(y))
            },
            &r6,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");

        let err = grad_check(
            |g, x| {
                let r = axis_angle_to_rotmat_op(g, x)?;
                let w = rotmat_to_axis_angle_op(g, r)?;
                let sq = g.square(w);
                Ok(g.sum(sq))
            },
            &Tensor::row_vector(&[0.4, -1.1, 0.7, 1e-4, 2e-4, -1e-4]),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }
}
