use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Max over coordinates of |analytic − central difference| / max(1, |analytic|)
/// for a scalar function of one tensor.
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    grad_check_many(|g, vars| f(g, vars[0]), std::slice::from_ref(point), eps, None)
}

/// Multi-input variant. `fault` names an op whose derivative the analytic
/// pass corrupts; `None` for a normal check.
pub fn grad_check_many<F>(f: F, points: &[Tensor], eps: f64, fault: Option<&str>) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Contract(format!("grad_check eps must be > 0, got {eps}")));
    }
    let mut g = match fault {
        Some(name) => Graph::with_fault(name),
        None => Graph::new(),
    };
    let vars: Vec<Var> = points.iter().map(|p| g.param(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let eval = |pts: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = pts.iter().map(|p| g.constant(p.clone())).collect();
        let out = f(&mut g, &vars)?;
        let v = g.scalar(out);
        if !v.is_finite() {
            return Err(Error::Evaluation(format!("function returned {v} at a perturbed point")));
        }
        Ok(v)
    };

    let mut worst: f64 = 0.0;
    let mut pts = points.to_vec();
    for (i, p) in points.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[i], p.len());
        for k in 0..p.len() {
            let orig = p.data()[k];
            pts[i].data_mut()[k] = orig + eps;
            let plus = eval(&pts)?;
            pts[i].data_mut()[k] = orig - eps;
            let minus = eval(&pts)?;
            pts[i].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = (analytic[k] - numeric).abs() / analytic[k].abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
