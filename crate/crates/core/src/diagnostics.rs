//! Gradient checks of every differentiable op and network path at tiny
//! sizes, against central finite differences.

use std::sync::Arc;

use rand::Rng as _;

use crate::body::{
    axis_angle_to_rotmat_op, forward_kinematics_op, project_op, regressor_matrix, rot6d_to_rotmat_op,
    rotmat_to_axis_angle_op, BodyTemplate, IDENTITY, NUM_BETAS,
};
use crate::error::Result;
use crate::nets::{
    kl_divergence, to_steps, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, Gru, Linear, MPoser,
    MPoserConfig, Pooling,
};
use crate::objectives::{
    loss_2d, loss_3d, loss_adv_generator, loss_discriminator, loss_mposer_prior, loss_smpl, LossWeights,
};
use crate::rng::{stream, Rng};
use crate::tensor::{grad_check_many, Axis, Bindings, Graph, ParamStore, Tensor, Var};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
const EPS: f64 = 1e-6;

/// Worst relative error of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct GradResult {
    pub component: String,
    pub worst: f64,
}

impl GradResult {
    pub fn passed(&self) -> bool {
        self.worst <= GRADCHECK_TOLERANCE
    }
}

fn uniform(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("shape matches data")
}

/// Σ y ⊙ W for a fixed random W, so every output coordinate gets a
/// distinct weight in the scalar being checked.
fn probe(g: &mut Graph, y: Var) -> Result<Var> {
    let shape = g.value(y).shape().to_vec();
    let w = uniform(&mut stream(17, "probe", shape.iter().product::<usize>() as u64), &shape, -1.0, 1.0);
    let w = g.constant(w);
    let m = g.mul(y, w)?;
    Ok(g.sum(m))
}

struct Suite {
    fault: Option<String>,
    results: Vec<GradResult>,
}

impl Suite {
    fn check<F>(&mut self, name: &str, points: &[Tensor], f: F) -> Result<()>
    where
        F: Fn(&mut Graph, &[Var]) -> Result<Var>,
    {
        let worst = grad_check_many(f, points, EPS, self.fault.as_deref())?;
        self.results.push(GradResult {
            component: name.to_string(),
            worst,
        });
        Ok(())
    }

    /// Checks a network loss with respect to all parameters and the inputs.
    fn check_net<F>(&mut self, name: &str, store: &ParamStore, inputs: &[Tensor], f: F) -> Result<()>
    where
        F: Fn(&mut Graph, &Bindings, &[Var]) -> Result<Var>,
    {
        let mut points = store.values();
        let np = points.len();
        points.extend_from_slice(inputs);
        self.check(name, &points, |g, vars| {
            let p = Bindings::from_vars(vars[..np].to_vec());
            f(g, &p, &vars[np..])
        })
    }
}

fn elementwise(s: &mut Suite, rng: &mut Rng) -> Result<()> {
    let a = uniform(rng, &[3, 4], -1.0, 1.0);
    let b = uniform(rng, &[3, 4], -1.0, 1.0);
    let pair = [a.clone(), b.clone()];
    s.check("add", &pair, |g, v| {
        let y = g.add(v[0], v[1])?;
        probe(g, y)
    })?;
    s.check("sub", &pair, |g, v| {
        let y = g.sub(v[0], v[1])?;
        probe(g, y)
    })?;
    s.check("mul", &pair, |g, v| {
        let y = g.mul(v[0], v[1])?;
        probe(g, y)
    })?;
    s.check("maximum", &pair, |g, v| {
        let y = g.maximum(v[0], v[1])?;
        probe(g, y)
    })?;
    let one = [a.clone()];
    s.check("scale", &one, |g, v| {
        let y = g.scale(v[0], -2.5);
        probe(g, y)
    })?;
    s.check("add_scalar", &one, |g, v| {
        let y = g.add_scalar(v[0], 0.7);
        probe(g, y)
    })?;
    s.check("tanh", &one, |g, v| {
        let y = g.tanh(v[0]);
        probe(g, y)
    })?;
    s.check("sigmoid", &one, |g, v| {
        let y = g.sigmoid(v[0]);
        probe(g, y)
    })?;
    s.check("exp", &one, |g, v| {
        let y = g.exp(v[0]);
        probe(g, y)
    })?;
    s.check("square", &one, |g, v| {
        let y = g.square(v[0]);
        probe(g, y)
    })?;
    s.check("sum", &one, |g, v| {
        let y = g.sum(v[0]);
        probe(g, y)
    })?;
    s.check("l2norm", &one, |g, v| {
        let y = g.l2norm(v[0]);
        probe(g, y)
    })?;
    s.check("row_norm", &one, |g, v| {
        let y = g.row_norm(v[0])?;
        probe(g, y)
    })?;
    Ok(())
}

fn structural(s: &mut Suite, rng: &mut Rng) -> Result<()> {
    let a = uniform(rng, &[3, 4], -1.0, 1.0);
    let b = uniform(rng, &[4, 2], -1.0, 1.0);
    let row = uniform(rng, &[1, 4], -1.0, 1.0);
    let col = uniform(rng, &[3, 1], -1.0, 1.0);
    let c = uniform(rng, &[2, 4], -1.0, 1.0);
    let d = uniform(rng, &[3, 2], -1.0, 1.0);
    s.check("matmul", &[a.clone(), b], |g, v| {
        let y = g.matmul(v[0], v[1])?;
        probe(g, y)
    })?;
    s.check("add_row", &[a.clone(), row], |g, v| {
        let y = g.add_row(v[0], v[1])?;
        probe(g, y)
    })?;
    s.check("scale_rows", &[a.clone(), col], |g, v| {
        let y = g.scale_rows(v[0], v[1])?;
        probe(g, y)
    })?;
    s.check("concat_rows", &[a.clone(), c], |g, v| {
        let y = g.concat(&[v[0], v[1]], Axis::Rows)?;
        probe(g, y)
    })?;
    s.check("concat_cols", &[a.clone(), d], |g, v| {
        let y = g.concat(&[v[0], v[1]], Axis::Cols)?;
        probe(g, y)
    })?;
    let one = [a];
    s.check("slice_rows", &one, |g, v| {
        let y = g.slice(v[0], Axis::Rows, 1, 2)?;
        probe(g, y)
    })?;
    s.check("slice_cols", &one, |g, v| {
        let y = g.slice(v[0], Axis::Cols, 1, 2)?;
        probe(g, y)
    })?;
    s.check("reshape", &one, |g, v| {
        let y = g.reshape(v[0], &[2, 6])?;
        probe(g, y)
    })?;
    s.check("transpose", &one, |g, v| {
        let y = g.transpose(v[0])?;
        probe(g, y)
    })?;
    s.check("gather_rows", &one, |g, v| {
        let y = g.gather_rows(v[0], &[2, 0, 2, 1])?;
        probe(g, y)
    })?;
    for axis in [Axis::Rows, Axis::Cols] {
        let tag = if axis == Axis::Rows { "rows" } else { "cols" };
        s.check(&format!("softmax_{tag}"), &one, |g, v| {
            let y = g.softmax(v[0], axis)?;
            probe(g, y)
        })?;
        s.check(&format!("mean_{tag}"), &one, |g, v| {
            let y = g.mean(v[0], axis)?;
            probe(g, y)
        })?;
        s.check(&format!("max_{tag}"), &one, |g, v| {
            let y = g.max(v[0], axis)?;
            probe(g, y)
        })?;
    }
    Ok(())
}

fn geometry(s: &mut Suite, rng: &mut Rng) -> Result<()> {
    let aa = uniform(rng, &[2, 9], -1.5, 1.5);
    s.check("axis_angle_to_rotmat", std::slice::from_ref(&aa), |g, v| {
        let y = axis_angle_to_rotmat_op(g, v[0])?;
        probe(g, y)
    })?;
    let r6 = uniform(rng, &[2, 12], -1.0, 1.0);
    s.check("rot6d_to_rotmat", &[r6], |g, v| {
        let y = rot6d_to_rotmat_op(g, v[0])?;
        probe(g, y)
    })?;
    s.check("rotmat_to_axis_angle", &[aa], |g, v| {
        let r = axis_angle_to_rotmat_op(g, v[0])?;
        let y = rotmat_to_axis_angle_op(g, r)?;
        probe(g, y)
    })?;

    let tmpl = Arc::new(BodyTemplate::generate(16, 5)?);
    let j = tmpl.num_joints();
    let theta = uniform(rng, &[1, 3 * j], -0.8, 0.8);
    let beta = uniform(rng, &[1, NUM_BETAS], -1.0, 1.0);
    s.check("forward_kinematics", &[theta.clone(), beta.clone()], |g, v| {
        let r = axis_angle_to_rotmat_op(g, v[0])?;
        let y = forward_kinematics_op(g, r, v[1], &tmpl)?;
        probe(g, y)
    })?;
    let pts = uniform(rng, &[2, 3 * j], -1.0, 1.0);
    let cams = uniform(rng, &[2, 3], 0.5, 1.5);
    s.check("projection", &[pts, cams], |g, v| {
        let y = project_op(g, v[0], v[1], IDENTITY)?;
        probe(g, y)
    })?;
    let wreg = regressor_matrix(&tmpl);
    let kp = uniform(rng, &[1, 2 * j], -1.0, 1.0);
    let vis = Tensor::filled(&[1, j], 1.0);
    let cam = uniform(rng, &[1, 3], 0.5, 1.5);
    s.check("body_pipeline", &[theta, beta, cam], |g, v| {
        let r = axis_angle_to_rotmat_op(g, v[0])?;
        let posed = forward_kinematics_op(g, r, v[1], &tmpl)?;
        let verts = g.slice(posed, Axis::Cols, 3 * j, 3 * tmpl.num_vertices())?;
        let w = g.constant(wreg.clone());
        let joints = g.matmul(verts, w)?;
        let proj = project_op(g, joints, v[2], IDENTITY)?;
        let gt = g.constant(kp.clone());
        loss_2d(g, proj, gt, &vis, 1)
    })?;
    Ok(())
}

fn losses(s: &mut Suite, rng: &mut Rng) -> Result<()> {
    let w = LossWeights::default();
    let (b, t, j) = (2, 3, 4);
    let n = b * t;
    let p3 = uniform(rng, &[n, 3 * j], -1.0, 1.0);
    let g3 = uniform(rng, &[n, 3 * j], -1.0, 1.0);
    s.check("loss_3d", &[p3, g3], |g, v| loss_3d(g, v[0], v[1], b))?;
    let p2 = uniform(rng, &[n, 2 * j], -1.0, 1.0);
    let g2 = uniform(rng, &[n, 2 * j], -1.0, 1.0);
    let vis = Tensor::new(&[n, j], (0..n * j).map(|i| (i % 3 != 0) as u8 as f64).collect())?;
    s.check("loss_2d", &[p2, g2], |g, v| loss_2d(g, v[0], v[1], &vis, b))?;
    let pts = [
        uniform(rng, &[n, 72], -1.0, 1.0),
        uniform(rng, &[n, 72], -1.0, 1.0),
        uniform(rng, &[b, 10], -1.0, 1.0),
        uniform(rng, &[b, 10], -1.0, 1.0),
    ];
    s.check("loss_smpl", &pts, |g, v| loss_smpl(g, v[0], v[1], v[2], v[3], &w))?;
    let df = uniform(rng, &[b, 1], 0.1, 0.9);
    let dr = uniform(rng, &[b, 1], 0.1, 0.9);
    s.check("loss_adv_generator", std::slice::from_ref(&df), |g, v| loss_adv_generator(g, v[0]))?;
    s.check("loss_discriminator", &[dr, df], |g, v| loss_discriminator(g, v[0], v[1]))?;
    let z = uniform(rng, &[n, 32], -1.0, 1.0);
    s.check("loss_mposer_prior", &[z], |g, v| loss_mposer_prior(g, v[0], b))?;
    Ok(())
}

fn networks(s: &mut Suite, rng: &mut Rng) -> Result<()> {
    let (b, t) = (2, 3);
    let n = b * t;

    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, "lin", 3, 2, rng);
    let x = uniform(rng, &[n, 3], -1.0, 1.0);
    s.check_net("linear", &store, std::slice::from_ref(&x), |g, p, v| {
        let y = lin.forward(g, p, v[0])?;
        probe(g, y)
    })?;

    let mut store = ParamStore::new();
    let gru = Gru::new(&mut store, "gru", 3, 2, 2, true, rng);
    s.check_net("gru", &store, std::slice::from_ref(&x), |g, p, v| {
        let seq = to_steps(g, v[0], b, t)?;
        let hs = gru.forward(g, p, &seq)?;
        let all = g.concat(&hs, Axis::Rows)?;
        probe(g, all)
    })?;

    let gen_cfg = GeneratorConfig {
        joints: 24,
        feature_dim: 3,
        hidden: 3,
        layers: 1,
        bidirectional: true,
        regressor_hidden: 3,
        iterations: 2,
    };
    let generator = Generator::new(gen_cfg, rng);
    s.check_net("generator", &generator.store, std::slice::from_ref(&x), |g, p, v| {
        let out = generator.forward(g, p, v[0], b)?;
        probe(g, out.params)
    })?;

    let tmpl = Arc::new(BodyTemplate::generate(16, 5)?);
    let j = tmpl.num_joints();
    let wreg = regressor_matrix(&tmpl);
    let kp = uniform(rng, &[n, 2 * j], -1.0, 1.0);
    let vis = Tensor::filled(&[n, j], 1.0);
    s.check_net("generator_body_pipeline", &generator.store, &[x], |g, p, v| {
        let out = generator.forward(g, p, v[0], b)?;
        let posed = forward_kinematics_op(g, out.rotmats, out.beta_tiled, &tmpl)?;
        let verts = g.slice(posed, Axis::Cols, 3 * j, 3 * tmpl.num_vertices())?;
        let w = g.constant(wreg.clone());
        let joints = g.matmul(verts, w)?;
        let proj = project_op(g, joints, out.cam, IDENTITY)?;
        let gt = g.constant(kp.clone());
        loss_2d(g, proj, gt, &vis, b)
    })?;

    let motion = uniform(rng, &[n, 5], -1.0, 1.0);
    for (pooling, name) in [(Pooling::Attention, "discriminator_attention"), (Pooling::Static, "discriminator_concat")] {
        let cfg = DiscriminatorConfig {
            input_dim: 5,
            hidden: 3,
            layers: 2,
            pooling,
            attn_layers: 2,
            attn_size: 3,
            dropout: 0.1,
            velocity: true,
        };
        let d = Discriminator::new(cfg, rng);
        s.check_net(name, &d.store, std::slice::from_ref(&motion), |g, p, v| {
            let mut drop: Rng = stream(3, "gradcheck.dropout", 0);
            let out = d.forward(g, p, v[0], b, Some(&mut drop))?;
            probe(g, out.prob)
        })?;
    }

    let cfg = MPoserConfig {
        pose_dim: 6,
        hidden: 3,
        layers: 1,
    };
    let m = MPoser::new(cfg, rng);
    let poses = uniform(rng, &[n, 6], -1.0, 1.0);
    s.check_net("mposer", &m.store, &[poses], |g, p, v| {
        let post = m.encode(g, p, v[0], b)?;
        let z = m.sample(g, &post, &mut stream(4, "gradcheck.eps", 0))?;
        let rec = m.decode(g, p, z, b)?;
        let diff = g.sub(rec, v[0])?;
        let sq = g.square(diff);
        let sse = g.sum(sq);
        let kl = kl_divergence(g, &post, b)?;
        g.add(sse, kl)
    })?;
    Ok(())
}

/// Runs every check. With `fault` naming an op, that op's backward is
/// scaled so the affected components should fail.
pub fn gradcheck_suite(fault: Option<&str>) -> Result<Vec<GradResult>> {
    let mut s = Suite {
        fault: fault.map(str::to_string),
        results: Vec::new(),
    };
    let mut rng = stream(2024, "gradcheck", 0);
    elementwise(&mut s, &mut rng)?;
    structural(&mut s, &mut rng)?;
    geometry(&mut s, &mut rng)?;
    losses(&mut s, &mut rng)?;
    networks(&mut s, &mut rng)?;
    Ok(s.results)
}
