//! Pose and mesh error measures on plain point arrays.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

/// Relative size below which the second singular value of a centred cloud
/// marks it as degenerate (collinear or coincident).
const DEGENERATE_RATIO: f64 = 1e-10;

fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn check_pair(pred: &[Point], gt: &[Point], op: &'static str) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::dim(op, format!("{} predicted vs {} ground-truth points", pred.len(), gt.len())));
    }
    if pred.is_empty() {
        return Err(Error::dim(op, "no points"));
    }
    Ok(())
}

fn mean_distance(pred: &[Point], gt: &[Point]) -> f64 {
    pred.iter().zip(gt).map(|(p, q)| dist(p, q)).sum::<f64>() / pred.len() as f64
}

/// Mean joint distance after moving the predicted pelvis onto the
/// ground-truth pelvis.
pub fn mpjpe(pred: &[Point], gt: &[Point], pelvis: usize) -> Result<f64> {
    check_pair(pred, gt, "mpjpe")?;
    if pelvis >= pred.len() {
        return Err(Error::dim("mpjpe", format!("pelvis index {pelvis} of {} joints", pred.len())));
    }
    let shift: Point = std::array::from_fn(|d| gt[pelvis][d] - pred[pelvis][d]);
    let moved: Vec<Point> = pred
        .iter()
        .map(|p| std::array::from_fn(|d| p[d] + shift[d]))
        .collect();
    Ok(mean_distance(&moved, gt))
}

/// Similarity transform (s, R, t) minimising Σ‖s R p_i + t − q_i‖², with
/// det R = +1.
#[derive(Debug, Clone, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn apply(&self, p: &Point) -> Point {
        let v = self.rotation * Vector3::from(*p) * self.scale + self.translation;
        [v.x, v.y, v.z]
    }
}

/// Closed-form alignment of `src` onto `dst` (Umeyama).
pub fn procrustes(src: &[Point], dst: &[Point]) -> Result<Similarity> {
    check_pair(src, dst, "procrustes")?;
    let n = src.len() as f64;
    let centroid = |pts: &[Point]| pts.iter().fold(Vector3::zeros(), |a, p| a + Vector3::from(*p)) / n;
    let mu_s = centroid(src);
    let mu_d = centroid(dst);
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    let mut var_d = 0.0;
    for (p, q) in src.iter().zip(dst) {
        let a = Vector3::from(*p) - mu_s;
        let b = Vector3::from(*q) - mu_d;
        cov += b * a.transpose();
        var_s += a.norm_squared();
        var_d += b.norm_squared();
    }
    let spread = |var: f64, pts: &[Point], mu: &Vector3<f64>| {
        let mut m = Matrix3::zeros();
        for p in pts {
            let a = Vector3::from(*p) - mu;
            m += a * a.transpose();
        }
        let sv = m.symmetric_eigenvalues();
        let mut s = [sv[0], sv[1], sv[2]];
        s.sort_by(|a, b| b.total_cmp(a));
        var > 0.0 && s[1] > DEGENERATE_RATIO * s[0].max(f64::MIN_POSITIVE)
    };
    if !spread(var_s, src, &mu_s) || !spread(var_d, dst, &mu_d) {
        return Err(Error::Degenerate("point cloud is rank-deficient; alignment is not unique".into()));
    }
    let svd = cov.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut sign = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    // `svd` sorts singular values in decreasing order, so a reflection is
    // removed by flipping the weakest axis.
    let rotation = u * sign * v_t;
    let trace: f64 = (0..3).map(|i| svd.singular_values[i] * sign[(i, i)]).sum();
    let scale = trace / var_s;
    let translation = mu_d - rotation * mu_s * scale;
    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}

/// Mean joint distance after optimal similarity alignment of `pred` onto `gt`.
pub fn pa_mpjpe(pred: &[Point], gt: &[Point]) -> Result<f64> {
    check_pair(pred, gt, "pa_mpjpe")?;
    if pred.len() < 3 {
        return Err(Error::dim("pa_mpjpe", format!("need at least 3 joints, got {}", pred.len())));
    }
    let t = procrustes(pred, gt)?;
    let aligned: Vec<Point> = pred.iter().map(|p| t.apply(p)).collect();
    Ok(mean_distance(&aligned, gt))
}

/// Mean vertex distance, no alignment.
pub fn pve(pred: &[Point], gt: &[Point]) -> Result<f64> {
    check_pair(pred, gt, "pve")?;
    Ok(mean_distance(pred, gt))
}

/// Percentage of joints with distance ≤ `threshold`.
pub fn pck(pred: &[Point], gt: &[Point], threshold: f64) -> Result<f64> {
    check_pair(pred, gt, "pck")?;
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::Range(format!("pck threshold must be >= 0, got {threshold}")));
    }
    let hits = pred.iter().zip(gt).filter(|(p, q)| dist(p, q) <= threshold).count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

/// Mean over interior frames and joints of ‖a_pred − a_gt‖ with
/// a_t = x_{t+1} − 2x_t + x_{t−1}; times fps² when given.
pub fn accel_error(pred: &[Vec<Point>], gt: &[Vec<Point>], fps: Option<f64>) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::dim("accel_error", format!("{} vs {} frames", pred.len(), gt.len())));
    }
    if pred.len() < 3 {
        return Err(Error::Validation(format!(
            "accel_error needs at least 3 frames, got {}",
            pred.len()
        )));
    }
    let j = pred[0].len();
    if pred.iter().chain(gt).any(|f| f.len() != j) || j == 0 {
        return Err(Error::dim("accel_error", "frames disagree in joint count"));
    }
    let mut total = 0.0;
    for t in 1..pred.len() - 1 {
        for k in 0..j {
            let acc = |s: &[Vec<Point>], d: usize| s[t + 1][k][d] - 2.0 * s[t][k][d] + s[t - 1][k][d];
            let e: Point = std::array::from_fn(|d| acc(pred, d) - acc(gt, d));
            total += (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
        }
    }
    let mean = total / ((pred.len() - 2) * j) as f64;
    Ok(fps.map_or(mean, |f| mean * f * f))
}

/// One evaluation row: length errors in template units, pck in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub pve: f64,
    pub pck: f64,
    pub pck_threshold: f64,
    pub accel_err: f64,
    pub frames: usize,
    pub joints: usize,
}

pub const REPORT_FIELDS: [&str; 8] = [
    "mpjpe",
    "pa_mpjpe",
    "pve",
    "pck",
    "pck_threshold",
    "accel_err",
    "frames",
    "joints",
];

impl MetricsReport {
    /// Per-frame MPJPE, PA-MPJPE, PVE and PCK averaged over frames;
    /// acceleration error over the whole sequence (0 when T < 3).
    pub fn for_sequence(
        pred_joints: &[Vec<Point>],
        gt_joints: &[Vec<Point>],
        pred_vertices: &[Vec<Point>],
        gt_vertices: &[Vec<Point>],
        pck_threshold: f64,
        pelvis: usize,
    ) -> Result<Self> {
        let t = pred_joints.len();
        if t == 0 || gt_joints.len() != t || pred_vertices.len() != t || gt_vertices.len() != t {
            return Err(Error::dim("metrics", "sequences disagree in frame count"));
        }
        let (mut m, mut pa, mut v, mut p) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..t {
            m += mpjpe(&pred_joints[i], &gt_joints[i], pelvis)?;
            pa += pa_mpjpe(&pred_joints[i], &gt_joints[i])?;
            v += pve(&pred_vertices[i], &gt_vertices[i])?;
            p += pck(&pred_joints[i], &gt_joints[i], pck_threshold)?;
        }
        let n = t as f64;
        let accel_err = if t >= 3 {
            accel_error(pred_joints, gt_joints, None)?
        } else {
            0.0
        };
        Ok(MetricsReport {
            mpjpe: m / n,
            pa_mpjpe: pa / n,
            pve: v / n,
            pck: p / n,
            pck_threshold,
            accel_err,
            frames: t,
            joints: gt_joints[0].len(),
        })
    }

    /// Mean of the per-sequence values; `frames` is the total.
    pub fn aggregate(reports: &[MetricsReport]) -> Result<Self> {
        let first = reports.first().ok_or_else(|| Error::Validation("no reports to aggregate".into()))?;
        let n = reports.len() as f64;
        let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Ok(MetricsReport {
            mpjpe: mean(|r| r.mpjpe),
            pa_mpjpe: mean(|r| r.pa_mpjpe),
            pve: mean(|r| r.pve),
            pck: mean(|r| r.pck),
            pck_threshold: first.pck_threshold,
            accel_err: mean(|r| r.accel_err),
            frames: reports.iter().map(|r| r.frames).sum(),
            joints: first.joints,
        })
    }

    fn values(&self) -> [String; 8] {
        [
            format!("{:?}", self.mpjpe),
            format!("{:?}", self.pa_mpjpe),
            format!("{:?}", self.pve),
            format!("{:?}", self.pck),
            format!("{:?}", self.pck_threshold),
            format!("{:?}", self.accel_err),
            self.frames.to_string(),
            self.joints.to_string(),
        ]
    }

    /// `key = value` lines in the fixed field order.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in REPORT_FIELDS.iter().zip(self.values()) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn csv_header() -> String {
        REPORT_FIELDS.join(",")
    }

    pub fn to_csv_row(&self) -> String {
        self.values().join(",")
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut vals = std::collections::HashMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Validation(format!("bad report line {line:?}")))?;
            vals.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<&String> {
            vals.get(k).ok_or_else(|| Error::Validation(format!("report lacks {k}")))
        };
        let f = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| Error::Validation(format!("bad value for {k}")))
        };
        let u = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Validation(format!("bad value for {k}")))
        };
        Ok(MetricsReport {
            mpjpe: f("mpjpe")?,
            pa_mpjpe: f("pa_mpjpe")?,
            pve: f("pve")?,
            pck: f("pck")?,
            pck_threshold: f("pck_threshold")?,
            accel_err: f("accel_err")?,
            frames: u("frames")?,
            joints: u("joints")?,
        })
    }
}
