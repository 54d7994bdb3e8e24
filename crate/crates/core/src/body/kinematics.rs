use std::sync::Arc;

use super::rotation::{axis_angle_to_rotmat, mat_mul, mat_t, mat_vec, Mat3, IDENTITY};
use super::template::{regress, BodyTemplate, NUM_BETAS};
use crate::error::{Error, Result};
use crate::tensor::{CustomOp, Graph, Tensor, Var};

/// Per-frame body parameters: axis-angle pose (root first), shape and
/// weak-perspective camera (s, tx, ty).
#[derive(Debug, Clone, PartialEq)]
pub struct BodyParams {
    pub theta: Vec<f64>,
    pub beta: [f64; NUM_BETAS],
    pub cam: [f64; 3],
}

impl BodyParams {
    /// Rest pose, zero shape, unit scale camera.
    pub fn rest(num_joints: usize) -> Self {
        BodyParams {
            theta: vec![0.0; 3 * num_joints],
            beta: [0.0; NUM_BETAS],
            cam: [1.0, 0.0, 0.0],
        }
    }

    pub fn num_joints(&self) -> usize {
        self.theta.len() / 3
    }

    pub fn dim(&self) -> usize {
        self.theta.len() + NUM_BETAS + 3
    }

    pub fn joint(&self, j: usize) -> [f64; 3] {
        [self.theta[3 * j], self.theta[3 * j + 1], self.theta[3 * j + 2]]
    }

    /// [θ, β, cam] flattened (85 values for 24 joints).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.theta.clone();
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(&self.cam);
        v
    }

    pub fn from_slice(values: &[f64], num_joints: usize) -> Result<Self> {
        let n = 3 * num_joints;
        if values.len() != n + NUM_BETAS + 3 {
            return Err(Error::dim(
                "body_params",
                format!("expected {} values, got {}", n + NUM_BETAS + 3, values.len()),
            ));
        }
        let p = BodyParams {
            theta: values[..n].to_vec(),
            beta: values[n..n + NUM_BETAS].try_into().unwrap(),
            cam: values[n + NUM_BETAS..].try_into().unwrap(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta.len().is_multiple_of(3) {
            return Err(Error::dim("body_params", format!("theta length {}", self.theta.len())));
        }
        if !self.to_vec().iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("body parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Posed body: kinematic-chain joint positions and skinned vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct PosedBody {
    pub joints: Vec<[f64; 3]>,
    pub vertices: Vec<[f64; 3]>,
}

// Intermediates of one frame, kept for the backward pass.
struct FrameFk {
    shaped_vertices: Vec<[f64; 3]>,
    shaped_joints: Vec<[f64; 3]>,
    global_rot: Vec<Mat3>,
    global_pos: Vec<[f64; 3]>,
    posed_vertices: Vec<[f64; 3]>,
}

fn fk_frame(rots: &[Mat3], beta: &[f64], tmpl: &BodyTemplate) -> FrameFk {
    let j = tmpl.num_joints();
    let shaped_vertices: Vec<[f64; 3]> = tmpl
        .rest_vertices
        .iter()
        .enumerate()
        .map(|(v, p)| {
            std::array::from_fn(|d| {
                let row = &tmpl.shape_basis[(3 * v + d) * NUM_BETAS..(3 * v + d + 1) * NUM_BETAS];
                p[d] + row.iter().zip(beta).map(|(b, x)| b * x).sum::<f64>()
            })
        })
        .collect();
    let shaped_joints = regress(&tmpl.joint_regressor, &shaped_vertices);

    let mut global_rot = vec![IDENTITY; j];
    let mut global_pos = vec![[0.0; 3]; j];
    for k in 0..j {
        match tmpl.parents[k] {
            None => {
                global_rot[k] = rots[k];
                global_pos[k] = shaped_joints[k];
            }
            Some(p) => {
                global_rot[k] = mat_mul(&global_rot[p], &rots[k]);
                let bone = sub3(&shaped_joints[k], &shaped_joints[p]);
                let r = mat_vec(&global_rot[p], &bone);
                global_pos[k] = add3(&r, &global_pos[p]);
            }
        }
    }

    let posed_vertices = shaped_vertices
        .iter()
        .enumerate()
        .map(|(v, sv)| {
            let mut out = [0.0; 3];
            for k in 0..j {
                let w = tmpl.skin_weights[v * j + k];
                if w == 0.0 {
                    continue;
                }
                let local = sub3(sv, &shaped_joints[k]);
                let moved = add3(&mat_vec(&global_rot[k], &local), &global_pos[k]);
                for d in 0..3 {
                    out[d] += w * moved[d];
                }
            }
            out
        })
        .collect();

    FrameFk {
        shaped_vertices,
        shaped_joints,
        global_rot,
        global_pos,
        posed_vertices,
    }
}

/// Gradients w.r.t. (local rotations, beta) given gradients of the chain
/// joint positions and posed vertices.
fn fk_frame_vjp(
    f: &FrameFk,
    rots: &[Mat3],
    tmpl: &BodyTemplate,
    g_joints: &[f64],
    g_verts: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let j = tmpl.num_joints();
    let nv = tmpl.num_vertices();
    let mut d_a = vec![[0.0; 9]; j];
    let mut d_t: Vec<[f64; 3]> = (0..j).map(|k| [g_joints[3 * k], g_joints[3 * k + 1], g_joints[3 * k + 2]]).collect();
    let mut d_sv = vec![[0.0; 3]; nv];
    let mut d_sj = vec![[0.0; 3]; j];

    // Skinning.
    for v in 0..nv {
        let gv = [g_verts[3 * v], g_verts[3 * v + 1], g_verts[3 * v + 2]];
        if gv == [0.0; 3] {
            continue;
        }
        for k in 0..j {
            let w = tmpl.skin_weights[v * j + k];
            if w == 0.0 {
                continue;
            }
            let local = sub3(&f.shaped_vertices[v], &f.shaped_joints[k]);
            for r in 0..3 {
                for c in 0..3 {
                    d_a[k][r * 3 + c] += w * gv[r] * local[c];
                }
                d_t[k][r] += w * gv[r];
            }
            let back = mat_vec(&mat_t(&f.global_rot[k]), &gv);
            for d in 0..3 {
                d_sv[v][d] += w * back[d];
                d_sj[k][d] -= w * back[d];
            }
        }
    }

    // Kinematic chain, children before parents.
    let mut d_rot = vec![[0.0; 9]; j];
    for k in (0..j).rev() {
        match tmpl.parents[k] {
            None => {
                d_rot[k] = d_a[k];
                for d in 0..3 {
                    d_sj[k][d] += d_t[k][d];
                }
            }
            Some(p) => {
                // A_k = A_p R_k
                let dak = d_a[k];
                let via_child = mat_mul(&dak, &mat_t(&rots[k]));
                d_rot[k] = mat_mul(&mat_t(&f.global_rot[p]), &dak);
                // t_k = A_p (j_k − j_p) + t_p
                let bone = sub3(&f.shaped_joints[k], &f.shaped_joints[p]);
                let dtk = d_t[k];
                let dbone = mat_vec(&mat_t(&f.global_rot[p]), &dtk);
                for r in 0..3 {
                    for c in 0..3 {
                        d_a[p][r * 3 + c] += via_child[r * 3 + c] + dtk[r] * bone[c];
                    }
                    d_t[p][r] += dtk[r];
                    d_sj[k][r] += dbone[r];
                    d_sj[p][r] -= dbone[r];
                }
            }
        }
    }

    // Shaped joints come from the regressor applied to shaped vertices.
    for k in 0..j {
        for v in 0..nv {
            let w = tmpl.joint_regressor[k * nv + v];
            for d in 0..3 {
                d_sv[v][d] += w * d_sj[k][d];
            }
        }
    }
    let mut d_beta = vec![0.0; NUM_BETAS];
    for v in 0..nv {
        for d in 0..3 {
            let row = &tmpl.shape_basis[(3 * v + d) * NUM_BETAS..(3 * v + d + 1) * NUM_BETAS];
            for (db, b) in d_beta.iter_mut().zip(row) {
                *db += b * d_sv[v][d];
            }
        }
    }
    (d_rot.into_iter().flatten().collect(), d_beta)
}

/// Shapes the template by β, chains per-joint rotations root to leaf and
/// poses the vertices by linear blend skinning.
pub fn forward_kinematics(params: &BodyParams, tmpl: &BodyTemplate) -> Result<PosedBody> {
    params.validate()?;
    if params.num_joints() != tmpl.num_joints() {
        return Err(Error::mismatch(
            "joint count",
            tmpl.num_joints(),
            params.num_joints(),
        ));
    }
    let rots: Vec<Mat3> = (0..tmpl.num_joints())
        .map(|k| axis_angle_to_rotmat(&params.joint(k)))
        .collect();
    Ok(pose_from_rotmats(&rots, &params.beta, tmpl))
}

pub fn pose_from_rotmats(rots: &[Mat3], beta: &[f64], tmpl: &BodyTemplate) -> PosedBody {
    let f = fk_frame(rots, beta, tmpl);
    PosedBody {
        joints: f.global_pos,
        vertices: f.posed_vertices,
    }
}

/// X̂ = W · vertices.
pub fn regress_joints(vertices: &[[f64; 3]], w: &[f64], num_joints: usize) -> Result<Vec<[f64; 3]>> {
    if w.len() != num_joints * vertices.len() {
        return Err(Error::dim(
            "regress_joints",
            format!(
                "regressor has {} entries, expected {}x{}",
                w.len(),
                num_joints,
                vertices.len()
            ),
        ));
    }
    Ok(regress(w, vertices))
}

/// x = s · Π(R X) + t, Π dropping depth.
pub fn project_weak_perspective(points: &[[f64; 3]], cam: &[f64; 3], r_global: &Mat3) -> Vec<[f64; 2]> {
    points
        .iter()
        .map(|p| {
            let q = mat_vec(r_global, p);
            [cam[0] * q[0] + cam[1], cam[0] * q[1] + cam[2]]
        })
        .collect()
}

struct SkinningOp {
    tmpl: Arc<BodyTemplate>,
    frames: Vec<FrameFk>,
    rots: Vec<Vec<Mat3>>,
}

impl CustomOp for SkinningOp {
    fn name(&self) -> &'static str {
        "forward_kinematics"
    }

    fn backward(&self, _inputs: &[&Tensor], _out: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        let j = self.tmpl.num_joints();
        let v = self.tmpl.num_vertices();
        let width = 3 * (j + v);
        let mut d_rot = Vec::with_capacity(self.frames.len() * 9 * j);
        let mut d_beta = Vec::with_capacity(self.frames.len() * NUM_BETAS);
        for (n, f) in self.frames.iter().enumerate() {
            let row = &g[n * width..(n + 1) * width];
            let (dr, db) = fk_frame_vjp(f, &self.rots[n], &self.tmpl, &row[..3 * j], &row[3 * j..]);
            d_rot.extend(dr);
            d_beta.extend(db);
        }
        vec![Some(d_rot), Some(d_beta)]
    }
}

/// Graph form of forward kinematics.
///
/// `rotmats` is N×9J (local rotations, row-major), `betas` N×10. Output is
/// N×3(J+V): chain joint positions followed by skinned vertices.
pub fn forward_kinematics_op(g: &mut Graph, rotmats: Var, betas: Var, tmpl: &Arc<BodyTemplate>) -> Result<Var> {
    let j = tmpl.num_joints();
    let v = tmpl.num_vertices();
    let (n, rc) = g
        .value(rotmats)
        .dims2()
        .ok_or_else(|| Error::dim("forward_kinematics", "rotations must be 2-D"))?;
    let (nb, bc) = g
        .value(betas)
        .dims2()
        .ok_or_else(|| Error::dim("forward_kinematics", "betas must be 2-D"))?;
    if rc != 9 * j || nb != n || bc != NUM_BETAS {
        return Err(Error::dim(
            "forward_kinematics",
            format!("rotations {n}x{rc}, betas {nb}x{bc}, template J={j}"),
        ));
    }
    let rdata = g.value(rotmats).data().to_vec();
    let bdata = g.value(betas).data().to_vec();
    let mut out = Vec::with_capacity(n * 3 * (j + v));
    let mut frames = Vec::with_capacity(n);
    let mut rots = Vec::with_capacity(n);
    for i in 0..n {
        let r: Vec<Mat3> = rdata[i * 9 * j..(i + 1) * 9 * j]
            .chunks_exact(9)
            .map(|c| c.try_into().unwrap())
            .collect();
        let f = fk_frame(&r, &bdata[i * NUM_BETAS..(i + 1) * NUM_BETAS], tmpl);
        out.extend(f.global_pos.iter().flatten());
        out.extend(f.posed_vertices.iter().flatten());
        frames.push(f);
        rots.push(r);
    }
    let out = Tensor::new(&[n, 3 * (j + v)], out)?;
    Ok(g.custom(
        &[rotmats, betas],
        out,
        Box::new(SkinningOp {
            tmpl: Arc::clone(tmpl),
            frames,
            rots,
        }),
    ))
}

/// Constant (3V)×(3J) matrix so that `vertices_row · M` = regressed joints
/// for N×3V vertex rows.
pub fn regressor_matrix(tmpl: &BodyTemplate) -> Tensor {
    let j = tmpl.num_joints();
    let v = tmpl.num_vertices();
    let mut m = Tensor::zeros(&[3 * v, 3 * j]);
    let data = m.data_mut();
    for k in 0..j {
        for vi in 0..v {
            let w = tmpl.joint_regressor[k * v + vi];
            for d in 0..3 {
                data[(3 * vi + d) * 3 * j + 3 * k + d] = w;
            }
        }
    }
    m
}

struct ProjectionOp {
    r: Mat3,
    rotated: Vec<f64>,
}

impl CustomOp for ProjectionOp {
    fn name(&self) -> &'static str {
        "project_weak_perspective"
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (n, c3) = inputs[0].dims2().unwrap();
        let j = c3 / 3;
        let cam = inputs[1].data();
        let rt = mat_t(&self.r);
        let mut dx = vec![0.0; n * c3];
        let mut dcam = vec![0.0; n * 3];
        for i in 0..n {
            let s = cam[i * 3];
            for k in 0..j {
                let gx = g[i * 2 * j + 2 * k];
                let gy = g[i * 2 * j + 2 * k + 1];
                let back = mat_vec(&rt, &[s * gx, s * gy, 0.0]);
                dx[i * c3 + 3 * k..i * c3 + 3 * k + 3].copy_from_slice(&back);
                let q = &self.rotated[i * c3 + 3 * k..i * c3 + 3 * k + 3];
                dcam[i * 3] += gx * q[0] + gy * q[1];
                dcam[i * 3 + 1] += gx;
                dcam[i * 3 + 2] += gy;
            }
        }
        vec![Some(dx), Some(dcam)]
    }
}

/// Graph form: points N×3J, cameras N×3 → N×2J.
pub fn project_op(g: &mut Graph, points: Var, cams: Var, r_global: Mat3) -> Result<Var> {
    let (n, c3) = g
        .value(points)
        .dims2()
        .ok_or_else(|| Error::dim("project_weak_perspective", "points must be 2-D"))?;
    let cam_dims = g.value(cams).dims2();
    if c3 % 3 != 0 || cam_dims != Some((n, 3)) {
        return Err(Error::dim(
            "project_weak_perspective",
            format!("points {n}x{c3}, cameras {cam_dims:?}"),
        ));
    }
    let j = c3 / 3;
    let pts = g.value(points).data();
    let cam = g.value(cams).data();
    let mut rotated = Vec::with_capacity(n * c3);
    let mut out = Vec::with_capacity(n * 2 * j);
    for i in 0..n {
        for k in 0..j {
            let p = &pts[i * c3 + 3 * k..i * c3 + 3 * k + 3];
            let q = mat_vec(&r_global, &[p[0], p[1], p[2]]);
            rotated.extend_from_slice(&q);
            out.push(cam[i * 3] * q[0] + cam[i * 3 + 1]);
            out.push(cam[i * 3] * q[1] + cam[i * 3 + 2]);
        }
    }
    let out = Tensor::new(&[n, 2 * j], out)?;
    Ok(g.custom(&[points, cams], out, Box::new(ProjectionOp { r: r_global, rotated })))
}

fn sub3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        let x = [[1.0, 2.0, 3.0]];
        assert_eq!(project_weak_perspective(&x, &[1.0, 0.0, 0.0], &IDENTITY), vec![[1.0, 2.0]]);
        assert_eq!(project_weak_perspective(&x, &[2.0, 1.0, 1.0], &IDENTITY), vec![[3.0, 5.0]]);
        let pts = [[1.0, 2.0, 3.0], [-4.0, 0.5, 9.0]];
        for p in project_weak_perspective(&pts, &[0.0, 0.7, -0.2], &IDENTITY) {
            assert_eq!(p, [0.7, -0.2]);
        }
    }

    #[test]
    fn regressor_selects_and_averages() {
        let verts = [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]];
        let sel = [0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(regress_joints(&verts, &sel, 2).unwrap(), vec![verts[1], verts[2]]);
        let third = 1.0 / 3.0;
        let mean = regress_joints(&verts, &[third; 3], 1).unwrap();
        for (m, e) in mean[0].iter().zip([1.0 / 3.0, 2.0 / 3.0, 1.0]) {
            assert!((m - e).abs() < 1e-15);
        }
        assert!(regress_joints(&verts, &[1.0; 4], 2).is_err());
    }

    #[test]
    fn rest_pose_returns_template() {
        let t = BodyTemplate::standard();
        let posed = forward_kinematics(&BodyParams::rest(24), &t).unwrap();
        for (a, b) in posed.joints.iter().zip(&t.rest_joints) {
            for d in 0..3 {
                assert!((a[d] - b[d]).abs() < 1e-12);
            }
        }
        for (a, b) in posed.vertices.iter().zip(&t.rest_vertices) {
            for d in 0..3 {
                assert!((a[d] - b[d]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fk_op_passes_grad_check() {
        use crate::body::rotation::axis_angle_to_rotmat_op;
        use crate::tensor::grad_check_many;
        let t = Arc::new(BodyTemplate::generate(30, 5).unwrap());
        let theta: Vec<f64> = (0..72).map(|i| 0.3 * ((i as f64) * 0.7).sin()).collect();
        let beta: Vec<f64> = (0..10).map(|i| 0.5 * ((i as f64) * 1.3).cos()).collect();
        let weights: Vec<f64> = (0..3 * (24 + 30)).map(|i| ((i as f64) * 0.37).sin()).collect();
        let err = grad_check_many(
            |g, v| {
                let r = axis_angle_to_rotmat_op(g, v[0])?;
                let out = forward_kinematics_op(g, r, v[1], &t)?;
                let w = g.constant(Tensor::new(&[weights.len(), 1], weights.clone())?);
                let y = g.matmul(out, w)?;
                let sq = g.square(y);
                Ok(g.sum(sq))
            },
            &[Tensor::row_vector(&theta), Tensor::row_vector(&beta)],
            1e-5,
            None,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn projection_op_passes_grad_check() {
        use crate::tensor::grad_check_many;
        let r = axis_angle_to_rotmat(&[0.2, -0.4, 0.1]);
        let err = grad_check_many(
            |g, v| {
                let x = project_op(g, v[0], v[1], r)?;
                let sq = g.square(x);
                Ok(g.sum(sq))
            },
            &[
                Tensor::new(&[2, 6], vec![0.1, 0.2, 0.3, -0.5, 0.4, 1.0, 0.7, -0.1, 0.0, 0.3, 0.3, -0.2]).unwrap(),
                Tensor::new(&[2, 3], vec![0.9, 0.1, -0.2, 1.2, 0.0, 0.05]).unwrap(),
            ],
            1e-5,
            None,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }
}
