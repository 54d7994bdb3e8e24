//! Training losses. Per-sequence terms are summed over frames and averaged
//! over the batch; adversarial terms take one probability per sequence.

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_2d: f64,
    pub lambda_3d: f64,
    pub lambda_beta: f64,
    pub lambda_theta: f64,
    pub lambda_adv: f64,
    /// Weight of the latent-norm prior used in place of the discriminator.
    pub lambda_mposer: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_2d: 300.0,
            lambda_3d: 300.0,
            lambda_beta: 0.06,
            lambda_theta: 60.0,
            lambda_adv: 2.0,
            lambda_mposer: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_2d,
            self.lambda_3d,
            self.lambda_beta,
            self.lambda_theta,
            self.lambda_adv,
            self.lambda_mposer,
        ];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("loss weights must be finite and >= 0: {all:?}")))
        }
    }
}

fn same_shape(g: &Graph, a: Var, b: Var, op: &'static str) -> Result<(usize, usize)> {
    let sa = g.value(a).dims2();
    let sb = g.value(b).dims2();
    match (sa, sb) {
        (Some(x), Some(y)) if x == y => Ok(x),
        _ => Err(Error::dim(op, format!("{:?} vs {:?}", g.value(a).shape(), g.value(b).shape()))),
    }
}

fn batch_mean(g: &mut Graph, total: Var, batch: usize) -> Result<Var> {
    if batch == 0 {
        return Err(Error::dim("loss", "batch of zero sequences"));
    }
    Ok(g.scale(total, 1.0 / batch as f64))
}

/// Σ_t ‖X_t − X̂_t‖ per sequence, averaged over `batch`. Rows are frames
/// with the joints of that frame stacked (N×3J).
pub fn loss_3d(g: &mut Graph, pred: Var, gt: Var, batch: usize) -> Result<Var> {
    same_shape(g, pred, gt, "loss_3d")?;
    let d = g.sub(pred, gt)?;
    let norms = g.row_norm(d)?;
    let s = g.sum(norms);
    batch_mean(g, s, batch)
}

/// As [`loss_3d`] in 2D (N×2J), with joints where `vis` (N×J) is 0 removed
/// from the residual.
pub fn loss_2d(g: &mut Graph, pred: Var, gt: Var, vis: &Tensor, batch: usize) -> Result<Var> {
    let (n, c) = same_shape(g, pred, gt, "loss_2d")?;
    if vis.dims2() != Some((n, c / 2)) || c % 2 != 0 {
        return Err(Error::dim(
            "loss_2d",
            format!("keypoints {n}x{c}, visibility {:?}", vis.shape()),
        ));
    }
    let mask: Vec<f64> = vis.data().iter().flat_map(|&v| [v, v]).collect();
    let mask = g.constant(Tensor::new(&[n, c], mask)?);
    let d = g.sub(pred, gt)?;
    let d = g.mul(d, mask)?;
    let norms = g.row_norm(d)?;
    let s = g.sum(norms);
    batch_mean(g, s, batch)
}

/// λ_β ‖β − β̂‖ + λ_θ Σ_t ‖θ_t − θ̂_t‖ per sequence, averaged over the batch.
/// θ is N×72 per frame, β is B×10 per sequence.
pub fn loss_smpl(
    g: &mut Graph,
    theta_pred: Var,
    theta_gt: Var,
    beta_pred: Var,
    beta_gt: Var,
    w: &LossWeights,
) -> Result<Var> {
    same_shape(g, theta_pred, theta_gt, "loss_smpl")?;
    let (batch, _) = same_shape(g, beta_pred, beta_gt, "loss_smpl")?;
    let dt = g.sub(theta_pred, theta_gt)?;
    let nt = g.row_norm(dt)?;
    let st = g.sum(nt);
    let db = g.sub(beta_pred, beta_gt)?;
    let nb = g.row_norm(db)?;
    let sb = g.sum(nb);
    let st = g.scale(st, w.lambda_theta);
    let sb = g.scale(sb, w.lambda_beta);
    let s = g.add(st, sb)?;
    batch_mean(g, s, batch)
}

fn check_probabilities(g: &Graph, d: Var, op: &'static str) -> Result<usize> {
    let t = g.value(d);
    if let Some(bad) = t.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Range(format!("{op}: probability {bad} outside [0, 1]")));
    }
    if t.is_empty() {
        return Err(Error::dim(op, "empty batch"));
    }
    Ok(t.len())
}

fn mean_squared_offset(g: &mut Graph, d: Var, target: f64, count: usize) -> Var {
    let off = g.add_scalar(d, -target);
    let sq = g.square(off);
    let s = g.sum(sq);
    g.scale(s, 1.0 / count as f64)
}

/// Mean over the batch of (D(Θ̂) − 1)².
pub fn loss_adv_generator(g: &mut Graph, d_fake: Var) -> Result<Var> {
    let n = check_probabilities(g, d_fake, "loss_adv_generator")?;
    Ok(mean_squared_offset(g, d_fake, 1.0, n))
}

/// Mean of (D(real) − 1)² plus mean of D(fake)².
pub fn loss_discriminator(g: &mut Graph, d_real: Var, d_fake: Var) -> Result<Var> {
    let nr = check_probabilities(g, d_real, "loss_discriminator")?;
    let nf = check_probabilities(g, d_fake, "loss_discriminator")?;
    let real = mean_squared_offset(g, d_real, 1.0, nr);
    let fake = mean_squared_offset(g, d_fake, 0.0, nf);
    g.add(real, fake)
}

/// ‖z‖ over each sequence's stacked latents (N×32, sequence-major),
/// averaged over the batch.
pub fn loss_mposer_prior(g: &mut Graph, z: Var, batch: usize) -> Result<Var> {
    let (n, c) = g
        .value(z)
        .dims2()
        .ok_or_else(|| Error::dim("loss_mposer_prior", "latents must be 2-D"))?;
    if batch == 0 || n % batch != 0 {
        return Err(Error::dim("loss_mposer_prior", format!("{n} rows for {batch} sequences")));
    }
    let per_seq = g.reshape(z, &[batch, n / batch * c])?;
    let norms = g.row_norm(per_seq)?;
    let s = g.sum(norms);
    batch_mean(g, s, batch)
}

/// Already-built loss terms; `None` means not computed for this batch.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossParts {
    pub l3d: Option<Var>,
    pub l2d: Option<Var>,
    /// Already carries λ_β and λ_θ.
    pub smpl: Option<Var>,
    pub adv: Option<Var>,
    pub mposer: Option<Var>,
}

/// Which supervision exists for the batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Available {
    pub d3: bool,
    pub d2: bool,
    pub smpl: bool,
    pub adv: bool,
    pub mposer: bool,
}

impl Available {
    pub fn all() -> Self {
        Available {
            d3: true,
            d2: true,
            smpl: true,
            adv: true,
            mposer: true,
        }
    }

    pub fn none() -> Self {
        Available {
            d3: false,
            d2: false,
            smpl: false,
            adv: false,
            mposer: false,
        }
    }
}

/// λ-weighted sum of the available terms. Masked terms are left out of the
/// graph, so they contribute neither value nor gradient.
pub fn total_generator_loss(g: &mut Graph, parts: &LossParts, w: &LossWeights, available: Available) -> Result<Var> {
    let terms = [
        (parts.l3d, available.d3, w.lambda_3d),
        (parts.l2d, available.d2, w.lambda_2d),
        (parts.smpl, available.smpl, 1.0),
        (parts.adv, available.adv, w.lambda_adv),
        (parts.mposer, available.mposer, w.lambda_mposer),
    ];
    let mut total: Option<Var> = None;
    for (term, on, lambda) in terms {
        let Some(v) = term.filter(|_| on) else { continue };
        let v = g.scale(v, lambda);
        total = Some(match total {
            None => v,
            Some(t) => g.add(t, v)?,
        });
    }
    Ok(total.unwrap_or_else(|| g.constant(Tensor::scalar(0.0))))
}
