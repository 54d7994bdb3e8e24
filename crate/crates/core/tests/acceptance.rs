//! Acceptance harness: one PASS/FAIL line per criterion. Runs as a plain
//! binary (no libtest harness) so the lines always reach stdout.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use motiongan::body::{
    axis_angle_to_rotmat, rot6d_to_rotmat, rotmat_to_rot6d, Mat3,
};
use motiongan::config::{Config, Mode};
use motiongan::diagnostics::gradcheck_suite;
use motiongan::metrics::{accel_error, mpjpe, pa_mpjpe, pck, procrustes, pve, Point};
use motiongan::motionsim::{read_motion, write_motion, Corpus, CorpusConfig, Corruption, Split};
use motiongan::objectives::{
    loss_2d, loss_3d, loss_adv_generator, loss_discriminator, loss_mposer_prior, loss_smpl,
    total_generator_loss, Available, LossParts, LossWeights,
};
use motiongan::tensor::{Graph, Tensor};
use motiongan::trainer::{
    discriminator_accuracy, mean_pose_baseline, pooling_ablation, regularizer_ablation, train_discriminator,
    train_mposer, Checkpoint, DiscTask, ModelKind, PoolingVariant, Trainer,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---- oracles ---------------------------------------------------------------

/// Rotation matrix of the unit quaternion for axis-angle `w`.
fn quaternion_rotmat(w: &[f64; 3]) -> Mat3 {
    let angle = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    let (qw, qx, qy, qz) = if angle == 0.0 {
        (1.0, 0.0, 0.0, 0.0)
    } else {
        let s = (angle / 2.0).sin() / angle;
        ((angle / 2.0).cos(), w[0] * s, w[1] * s, w[2] * s)
    };
    [
        1.0 - 2.0 * (qy * qy + qz * qz),
        2.0 * (qx * qy - qz * qw),
        2.0 * (qx * qz + qy * qw),
        2.0 * (qx * qy + qz * qw),
        1.0 - 2.0 * (qx * qx + qz * qz),
        2.0 * (qy * qz - qx * qw),
        2.0 * (qx * qz - qy * qw),
        2.0 * (qy * qz + qx * qw),
        1.0 - 2.0 * (qx * qx + qy * qy),
    ]
}

fn det3(a: &Mat3) -> f64 {
    a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) + a[2] * (a[3] * a[7] - a[4] * a[6])
}

/// Largest entry of |RᵀR − I|.
fn gram_error(a: &Mat3) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| a[k * 3 + i] * a[k * 3 + j]).sum();
            worst = worst.max((dot - f64::from(u8::from(i == j))).abs());
        }
    }
    worst
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_axis_angle(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).sqrt();
    let angle = rng.gen_range(0.0..PI);
    [angle * r * phi.cos(), angle * r * phi.sin(), angle * z]
}

fn rotate(r: &Mat3, p: &Point) -> Point {
    [
        r[0] * p[0] + r[1] * p[1] + r[2] * p[2],
        r[3] * p[0] + r[4] * p[1] + r[5] * p[2],
        r[6] * p[0] + r[7] * p[1] + r[8] * p[2],
    ]
}

fn euler_zyx(a: f64, b: f64, c: f64) -> Mat3 {
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let (sc, cc) = c.sin_cos();
    [
        ca * cb,
        ca * sb * sc - sa * cc,
        ca * sb * cc + sa * sc,
        sa * cb,
        sa * sb * sc + ca * cc,
        sa * sb * cc - ca * sc,
        -sb,
        cb * sc,
        cb * cc,
    ]
}

fn centroid(ps: &[Point]) -> Point {
    let n = ps.len() as f64;
    let mut c = [0.0; 3];
    for p in ps {
        for k in 0..3 {
            c[k] += p[k] / n;
        }
    }
    c
}

fn centered(ps: &[Point]) -> Vec<Point> {
    let c = centroid(ps);
    ps.iter().map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]]).collect()
}

/// Least-squares residual of aligning `src` onto `dst` with rotation `r`
/// fixed and closed-form scale and translation.
fn ls_residual(r: &Mat3, src: &[Point], dst: &[Point]) -> f64 {
    let xs: Vec<Point> = src.iter().map(|p| rotate(r, p)).collect();
    let dot: f64 = xs.iter().zip(dst).map(|(x, y)| x[0] * y[0] + x[1] * y[1] + x[2] * y[2]).sum();
    let nx: f64 = xs.iter().map(|x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sum();
    let s = (dot / nx).max(0.0);
    xs.iter()
        .zip(dst)
        .map(|(x, y)| (0..3).map(|k| (s * x[k] - y[k]).powi(2)).sum::<f64>())
        .sum()
}

/// Brute-force search over a ZYX Euler grid with step `h`; returns the best
/// least-squares residual.
fn grid_oracle(src: &[Point], dst: &[Point], h: f64) -> f64 {
    let (xs, ys) = (centered(src), centered(dst));
    let na = (2.0 * PI / h).round() as usize;
    let nb = (PI / h).round() as usize;
    let mut best = f64::INFINITY;
    for i in 0..na {
        let a = -PI + i as f64 * h;
        for j in 0..=nb {
            let b = -PI / 2.0 + j as f64 * h;
            for k in 0..na {
                let c = -PI + k as f64 * h;
                best = best.min(ls_residual(&euler_zyx(a, b, c), &xs, &ys));
            }
        }
    }
    best
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point> {
    (0..n)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect()
}

// ---- criteria --------------------------------------------------------------

fn c1_gradients() -> Outcome {
    let t0 = Instant::now();
    let results = gradcheck_suite(None).expect("gradient suite runs");
    let elapsed = t0.elapsed();
    let worst = results.iter().max_by(|a, b| a.worst.total_cmp(&b.worst)).expect("nonempty");
    let failing: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.component.as_str()).collect();
    let faulted = gradcheck_suite(Some("tanh")).expect("suite runs with a fault");
    let caught = faulted.iter().any(|r| r.component == "tanh" && !r.passed());
    let pass = failing.is_empty() && caught && elapsed <= Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "{} components, worst {} = {:.2e} (tol 1e-4), failing {:?}, injected tanh fault caught: {caught}, {:.1}s",
            results.len(),
            worst.component,
            worst.worst,
            failing,
            elapsed.as_secs_f64()
        ),
    )
}

fn c2_rotations() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut quat, mut trip6, mut ortho) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let w = random_axis_angle(&mut rng);
        let r = axis_angle_to_rotmat(&w);
        quat = quat.max(max_abs_diff(&r, &quaternion_rotmat(&w)));
        let back = rot6d_to_rotmat(&rotmat_to_rot6d(&r)).expect("valid 6D");
        trip6 = trip6.max(max_abs_diff(&r, &back));
        let raw: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let m = rot6d_to_rotmat(&raw).expect("nondegenerate 6D");
        let again = rot6d_to_rotmat(&rotmat_to_rot6d(&m)).expect("valid 6D");
        trip6 = trip6.max(max_abs_diff(&m, &again));
        for x in [&r, &back, &m, &again] {
            ortho = ortho.max(gram_error(x)).max((det3(x) - 1.0).abs());
        }
    }
    outcome(
        quat <= 1e-12 && trip6 <= 1e-12 && ortho <= 1e-9,
        format!("quaternion oracle {quat:.1e} (tol 1e-12), 6D round trip {trip6:.1e} (tol 1e-12), orthonormal/det {ortho:.1e} (tol 1e-9)"),
    )
}

fn c3_procrustes() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_sim = 0.0f64;
    for _ in 0..1000 {
        let gt = random_cloud(&mut rng, 24);
        let r = axis_angle_to_rotmat(&random_axis_angle(&mut rng));
        let s = rng.gen_range(0.3..3.0);
        let t: Point = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let pred: Vec<Point> = gt
            .iter()
            .map(|p| {
                let q = rotate(&r, p);
                [s * q[0] + t[0], s * q[1] + t[1], s * q[2] + t[2]]
            })
            .collect();
        worst_sim = worst_sim.max(pa_mpjpe(&pred, &gt).expect("nondegenerate"));
    }

    // Euler grid step 3°: any rotation lies within 1.5 h of a grid point, so
    // each aligned point moves at most s · 1.5 h · |x| and the residual by
    // at most the matching first-order amount.
    let h = 3f64.to_radians();
    let mut worst_gap = 0.0f64;
    let mut below = 0usize;
    for _ in 0..100 {
        let src = random_cloud(&mut rng, 4);
        let dst = random_cloud(&mut rng, 4);
        let sim = procrustes(&src, &dst).expect("nondegenerate");
        let aligned: Vec<Point> = src.iter().map(|p| sim.apply(p)).collect();
        let best: f64 = aligned
            .iter()
            .zip(&dst)
            .map(|(a, b)| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>())
            .sum();
        let oracle = grid_oracle(&src, &dst, h);
        let radius = centered(&src)
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
            .fold(0.0, f64::max);
        let step = sim.scale * 1.5 * h * radius;
        let tol = 2.0 * best.sqrt() * 2.0 * step + 4.0 * step * step;
        if oracle < best - 1e-9 {
            below += 1;
        }
        worst_gap = worst_gap.max((oracle - best) / tol.max(1e-12));
    }
    outcome(
        worst_sim <= 1e-9 && below == 0 && worst_gap <= 1.0,
        format!(
            "similarity clouds worst pa_mpjpe {worst_sim:.1e} (tol 1e-9); grid oracle: {below} of 100 beat closed form, worst gap {worst_gap:.3} of grid tolerance"
        ),
    )
}

fn scalar(g: &mut Graph, values: &[f64], rows: usize) -> motiongan::tensor::Var {
    let cols = values.len() / rows;
    g.constant(Tensor::new(&[rows, cols], values.to_vec()).expect("shape"))
}

fn c4_goldens() -> Outcome {
    let mut checks: Vec<(&str, f64, f64)> = Vec::new();
    let w = LossWeights::default();
    checks.push(("lambda_2d", w.lambda_2d, 300.0));
    checks.push(("lambda_3d", w.lambda_3d, 300.0));
    checks.push(("lambda_beta", w.lambda_beta, 0.06));
    checks.push(("lambda_theta", w.lambda_theta, 60.0));
    checks.push(("lambda_adv", w.lambda_adv, 2.0));

    let mut g = Graph::new();
    let p = scalar(&mut g, &[3.0, 4.0, 0.0], 1);
    let z = scalar(&mut g, &[0.0, 0.0, 0.0], 1);
    let l = loss_3d(&mut g, p, z, 1).unwrap();
    checks.push(("loss_3d (3,4,0)", g.scalar(l), 5.0));

    let p = scalar(&mut g, &[0.0, 2.0], 1);
    let z = scalar(&mut g, &[0.0, 0.0], 1);
    let l = loss_2d(&mut g, p, z, &Tensor::filled(&[1, 1], 1.0), 1).unwrap();
    checks.push(("loss_2d (0,2)", g.scalar(l), 2.0));

    let th = g.constant(Tensor::zeros(&[1, 72]));
    let mut b1 = vec![0.0; 10];
    b1[0] = 1.0;
    let bp = scalar(&mut g, &b1, 1);
    let bg = g.constant(Tensor::zeros(&[1, 10]));
    let l = loss_smpl(&mut g, th, th, bp, bg, &w).unwrap();
    checks.push(("loss_smpl beta", g.scalar(l), 0.06));

    let mut tp = vec![0.0; 144];
    tp[0] = 1.0;
    tp[72 + 5] = 1.0;
    let tpv = scalar(&mut g, &tp, 2);
    let tg = g.constant(Tensor::zeros(&[2, 72]));
    let bz = g.constant(Tensor::zeros(&[1, 10]));
    let l = loss_smpl(&mut g, tpv, tg, bz, bz, &w).unwrap();
    checks.push(("loss_smpl theta 2 frames", g.scalar(l), 120.0));

    let d = scalar(&mut g, &[0.5], 1);
    let l = loss_adv_generator(&mut g, d).unwrap();
    checks.push(("loss_adv d=0.5", g.scalar(l), 0.25));
    let d0 = scalar(&mut g, &[0.0], 1);
    let d1 = scalar(&mut g, &[1.0], 1);
    let l = loss_discriminator(&mut g, d0, d1).unwrap();
    checks.push(("loss_disc 0/1", g.scalar(l), 2.0));
    let l = loss_discriminator(&mut g, d, d).unwrap();
    checks.push(("loss_disc 0.5/0.5", g.scalar(l), 0.5));

    let mut zz = vec![0.0; 32];
    zz[0] = 3.0;
    zz[1] = 4.0;
    let zv = scalar(&mut g, &zz, 1);
    let l = loss_mposer_prior(&mut g, zv, 1).unwrap();
    checks.push(("loss_mposer (3,4,0..)", g.scalar(l), 5.0));

    let adv = g.constant(Tensor::scalar(0.25));
    let parts = LossParts {
        adv: Some(adv),
        ..LossParts::default()
    };
    let avail = Available {
        adv: true,
        ..Available::none()
    };
    let l = total_generator_loss(&mut g, &parts, &w, avail).unwrap();
    checks.push(("total only adv", g.scalar(l), 0.5));

    let origin = [0.0, 0.0, 0.0];
    checks.push(("mpjpe J=2", mpjpe(&[origin, [0.0, 3.0, 4.0]], &[origin, origin], 0).unwrap(), 2.5));
    checks.push(("pve shift", pve(&[[1.0, 0.0, 0.0]; 4], &[origin; 4]).unwrap(), 1.0));
    checks.push(("pve half", pve(&[[2.0, 0.0, 0.0], origin], &[origin, origin]).unwrap(), 1.0));
    checks.push((
        "pck {1,3} thr 2",
        pck(&[[1.0, 0.0, 0.0], [3.0, 0.0, 0.0]], &[origin, origin], 2.0).unwrap(),
        50.0,
    ));
    let gt: Vec<Vec<Point>> = vec![vec![origin]; 4];
    let pred: Vec<Vec<Point>> = [0.0, 1.0, 4.0, 9.0].iter().map(|&x| vec![[x, 0.0, 0.0]]).collect();
    checks.push(("accel t^2", accel_error(&pred, &gt, None).unwrap(), 2.0));

    let worst = checks.iter().map(|(_, got, want)| (got - want).abs()).fold(0.0, f64::max);
    let bad: Vec<&str> = checks.iter().filter(|(_, a, b)| (a - b).abs() > 1e-12).map(|c| c.0).collect();
    outcome(
        bad.is_empty(),
        format!("{} golden values, worst deviation {worst:.1e} (tol 1e-12), failing {bad:?}", checks.len()),
    )
}

fn default_corpus() -> Corpus {
    Corpus::generate(&CorpusConfig::default()).expect("default corpus")
}

fn c5_discriminator(corpus: &Corpus) -> Outcome {
    let cfg = Config::default();
    let t0 = Instant::now();
    let task = DiscTask {
        config: cfg.discriminator.clone(),
        corruption: Corruption::IidNoise(0.1),
        steps: 500,
        batch: cfg.train.batch,
        lr: cfg.train.disc_lr,
        seed: 5,
    };
    let (d, _) = train_discriminator(&task, &corpus.split(Split::Train)).expect("training runs");
    let acc = discriminator_accuracy(&d, &corpus.split(Split::Eval), task.corruption, 55).expect("scoring runs");
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        acc >= 95.0 && secs <= 300.0,
        format!("held-out accuracy {acc:.2}% after 500 steps (need >= 95), {secs:.0}s (budget 300s)"),
    )
}

/// Desk-scale configuration for the regularizer comparison.
fn table2_config() -> Config {
    let mut cfg = Config::default();
    cfg.seed = 6;
    cfg.sync();
    cfg
}

fn c6_regularizers(corpus: &Corpus) -> Outcome {
    let cfg = table2_config();
    let t0 = Instant::now();
    let r = regularizer_ablation(&cfg, corpus, Some(TABLE2_STEPS)).expect("ablation runs");
    let secs = t0.elapsed().as_secs_f64();
    let base = r.row(Mode::Baseline).unwrap();
    let prior = r.row(Mode::MPoser).unwrap();
    let gan = r.row(Mode::Gan).unwrap();
    let between = |x: f64, a: f64, b: f64| x >= a.min(b) - 1e-12 && x <= a.max(b) + 1e-12;
    let accel_ok = gan.accel_err <= 0.9 * base.accel_err;
    let mpjpe_ok = gan.mpjpe <= base.mpjpe;
    let prior_ok = between(prior.accel_err, gan.accel_err, base.accel_err) && between(prior.mpjpe, gan.mpjpe, base.mpjpe);
    outcome(
        accel_ok && mpjpe_ok && prior_ok && secs <= 1200.0,
        format!(
            "accel G {:.5} / G+MPoser {:.5} / G+D_M {:.5} (ratio {:.3}, need <= 0.9); mpjpe {:.5} / {:.5} / {:.5}; MPoser between: {prior_ok}; {secs:.0}s",
            base.accel_err,
            prior.accel_err,
            gan.accel_err,
            gan.accel_err / base.accel_err,
            base.mpjpe,
            prior.mpjpe,
            gan.mpjpe
        ),
    )
}

const TABLE2_STEPS: u64 = 300;
const TABLE3_STEPS: usize = 300;

fn c7_pooling(corpus: &Corpus) -> Outcome {
    let cfg = Config::default();
    let variants: Vec<PoolingVariant> = PoolingVariant::standard().into_iter().take(2).collect();
    let rows = pooling_ablation(&cfg, corpus, &variants, Corruption::FrameShuffle, TABLE3_STEPS, &[0, 1, 2])
        .expect("pooling ablation runs");
    let (concat, attn) = (&rows[0], &rows[1]);
    outcome(
        attn.mean() >= concat.mean() - 1.0,
        format!(
            "shuffle task over seeds 0,1,2: {} {:?} mean {:.2}%, {} {:?} mean {:.2}% (need attention >= concat - 1)",
            concat.label,
            concat.accuracy,
            concat.mean(),
            attn.label,
            attn.accuracy,
            attn.mean()
        ),
    )
}

fn c8_prior(corpus: &Corpus) -> Outcome {
    let cfg = Config::default();
    let train = corpus.split(Split::Train);
    let heldout = corpus.split(Split::Eval);
    let t = &cfg.train;
    let run = train_mposer(&cfg.mposer, &train, &heldout, t.mposer_steps, t.batch, t.mposer_lr, 8).expect("prior trains");
    let err = run.curve.last().expect("curve").1;
    let base = mean_pose_baseline(&train, &heldout).expect("baseline");
    outcome(
        err < base,
        format!("held-out reconstruction MSE {err:.5} vs constant mean pose {base:.5}"),
    )
}

fn small_config() -> Config {
    let mut cfg = Config::default();
    cfg.corpus.train = 24;
    cfg.corpus.eval = 6;
    cfg.corpus.frames = 8;
    cfg.generator.hidden = 8;
    cfg.generator.regressor_hidden = 8;
    cfg.discriminator.hidden = 8;
    cfg.discriminator.attn_size = 8;
    cfg.train.batch = 4;
    cfg.train.steps_per_epoch = 3;
    cfg.train.epochs = 2;
    cfg.train.eval_subset = 4;
    cfg.seed = 9;
    cfg.sync();
    cfg
}

fn c9_determinism() -> Outcome {
    let cfg = small_config();
    let a = Corpus::generate(&cfg.corpus).unwrap();
    let b = Corpus::generate(&cfg.corpus).unwrap();
    let bytes = |c: &Corpus| -> Vec<u8> { c.sequences.iter().flat_map(|s| write_motion(s).unwrap()).collect() };
    let corpus_same = a.manifest() == b.manifest() && bytes(&a) == bytes(&b);
    let regen = Corpus::from_manifest(&a.manifest()).unwrap();
    let manifest_same = bytes(&regen) == bytes(&a);

    let run = |c: &Config| -> (Vec<String>, String, Trainer) {
        let mut t = Trainer::new(c.clone(), None).unwrap();
        let mut log = Vec::new();
        t.train(
            &a,
            None,
            |r| {
                log.push(r.line());
                Ok(())
            },
            |_| Ok(()),
        )
        .unwrap();
        let report = t.evaluate(&a).unwrap().to_kv();
        (log, report, t)
    };
    let (log1, rep1, t1) = run(&cfg);
    let (log2, rep2, _) = run(&cfg);
    let logs_same = log1 == log2 && rep1 == rep2;

    let motion_exact = a.sequences.iter().all(|s| {
        let back = read_motion(&write_motion(s).unwrap()).unwrap();
        back == *s && write_motion(&back).unwrap() == write_motion(s).unwrap()
    });
    let ckpt = Checkpoint {
        kind: ModelKind::Generator,
        trainer: t1,
    };
    let raw = ckpt.to_bytes();
    let restored = Checkpoint::from_bytes(&raw).unwrap();
    let ckpt_exact = restored.to_bytes() == raw
        && restored.trainer.generator.store.values() == ckpt.trainer.generator.store.values()
        && restored.trainer.discriminator.store.values() == ckpt.trainer.discriminator.store.values()
        && restored.trainer.gen_opt.m == ckpt.trainer.gen_opt.m
        && restored.trainer.gen_opt.v == ckpt.trainer.gen_opt.v;

    // Interrupt mid-epoch, round-trip through bytes, continue.
    let mut first = Trainer::new(cfg.clone(), None).unwrap();
    let mut resumed_log = Vec::new();
    let half = (log1.len() / 2 + 1) as u64;
    first
        .train(
            &a,
            Some(half),
            |r| {
                resumed_log.push(r.line());
                Ok(())
            },
            |_| Ok(()),
        )
        .unwrap();
    let bytes = Checkpoint {
        kind: ModelKind::Generator,
        trainer: first,
    }
    .to_bytes();
    let mut second = Checkpoint::from_bytes(&bytes).unwrap().trainer;
    second
        .train(
            &a,
            None,
            |r| {
                resumed_log.push(r.line());
                Ok(())
            },
            |_| Ok(()),
        )
        .unwrap();
    let resume_same = resumed_log == log1 && second.evaluate(&a).unwrap().to_kv() == rep1;

    let pass = corpus_same && manifest_same && logs_same && motion_exact && ckpt_exact && resume_same;
    outcome(
        pass,
        format!(
            "corpora identical {corpus_same}, manifest regenerates {manifest_same}, loss logs + reports identical {logs_same} ({} steps), motion round trip exact {motion_exact}, checkpoint round trip exact {ckpt_exact}, resume matches uninterrupted run {resume_same}",
            log1.len()
        ),
    )
}

fn main() -> ExitCode {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut corpus: Option<Corpus> = None;
    let mut results = Vec::new();
    let criteria: [(&str, &str); 9] = [
        ("1", "gradient integrity"),
        ("2", "rotation oracles"),
        ("3", "procrustes oracle"),
        ("4", "loss/metric golden values"),
        ("5", "discriminator sanity"),
        ("6", "regularizer trend"),
        ("7", "pooling trend"),
        ("8", "motion prior value"),
        ("9", "determinism and persistence"),
    ];
    for (id, name) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f) && f != id) {
            continue;
        }
        let t0 = Instant::now();
        if matches!(id, "5" | "6" | "7" | "8") && corpus.is_none() {
            corpus = Some(default_corpus());
        }
        let corpus_ref = || corpus.as_ref().expect("corpus generated");
        let o = match id {
            "1" => c1_gradients(),
            "2" => c2_rotations(),
            "3" => c3_procrustes(),
            "4" => c4_goldens(),
            "5" => c5_discriminator(corpus_ref()),
            "6" => c6_regularizers(corpus_ref()),
            "7" => c7_pooling(corpus_ref()),
            "8" => c8_prior(corpus_ref()),
            _ => c9_determinism(),
        };
        println!(
            "{} criterion {id} ({name}): {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t0.elapsed().as_secs_f64()
        );
        results.push(o.pass);
    }
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
