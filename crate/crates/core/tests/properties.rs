use proptest::prelude::*;

use motiongan::body::{axis_angle_to_rotmat, rot6d_to_rotmat, rotmat_to_axis_angle, rotmat_to_rot6d, Mat3};
use motiongan::config::Config;
use motiongan::metrics::{accel_error, mpjpe, pa_mpjpe, pck, Point};
use motiongan::motionsim::{corrupt_motion, gen_real_motion, read_motion, write_motion, Corruption, MotionFamily};

fn point() -> impl Strategy<Value = Point> {
    prop::array::uniform3(-2.0..2.0f64)
}

fn cloud(n: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec(point(), n)
}

fn rotate(r: &Mat3, p: &Point) -> Point {
    std::array::from_fn(|i| r[3 * i] * p[0] + r[3 * i + 1] * p[1] + r[3 * i + 2] * p[2])
}

fn gram_error(r: &Mat3) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[3 * k + i] * r[3 * k + j]).sum();
            worst = worst.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rodrigues_is_a_rotation(w in prop::array::uniform3(-6.0..6.0f64)) {
        let r = axis_angle_to_rotmat(&w);
        prop_assert!(gram_error(&r) < 1e-12);
    }

    #[test]
    fn log_map_inverts_rodrigues(w in prop::array::uniform3(-1.7..1.7f64)) {
        let n = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        prop_assume!(n < 3.0);
        let back = rotmat_to_axis_angle(&axis_angle_to_rotmat(&w));
        for k in 0..3 {
            prop_assert!((back[k] - w[k]).abs() < 1e-9, "{:?} -> {:?}", w, back);
        }
    }

    #[test]
    fn rot6d_projection_is_idempotent(x in prop::array::uniform6(-1.0..1.0f64)) {
        let Ok(r) = rot6d_to_rotmat(&x) else { return Ok(()); };
        prop_assert!(gram_error(&r) < 1e-12);
        let again = rot6d_to_rotmat(&rotmat_to_rot6d(&r)).unwrap();
        for k in 0..9 {
            prop_assert!((again[k] - r[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn mpjpe_ignores_translation_and_is_symmetric(
        (pred, gt) in (1usize..10).prop_flat_map(|n| (cloud(n), cloud(n))),
        t in point(),
    ) {
        let moved: Vec<Point> = pred.iter().map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]]).collect();
        let a = mpjpe(&pred, &gt, 0).unwrap();
        prop_assert!((mpjpe(&moved, &gt, 0).unwrap() - a).abs() < 1e-12);
        prop_assert!((mpjpe(&gt, &pred, 0).unwrap() - a).abs() < 1e-12);
    }

    #[test]
    fn pa_mpjpe_ignores_a_similarity_on_the_prediction(
        (pred, gt) in (4usize..12).prop_flat_map(|n| (cloud(n), cloud(n))),
        w in prop::array::uniform3(-3.0..3.0f64),
        s in 0.2..5.0f64,
        t in point(),
    ) {
        let Ok(base) = pa_mpjpe(&pred, &gt) else { return Ok(()); };
        let r = axis_angle_to_rotmat(&w);
        let moved: Vec<Point> = pred
            .iter()
            .map(|p| {
                let q = rotate(&r, p);
                [s * q[0] + t[0], s * q[1] + t[1], s * q[2] + t[2]]
            })
            .collect();
        prop_assert!((pa_mpjpe(&moved, &gt).unwrap() - base).abs() < 1e-9);
    }

    #[test]
    fn pck_is_a_monotone_percentage(
        (pred, gt) in (1usize..10).prop_flat_map(|n| (cloud(n), cloud(n))),
        a in 0.0..3.0f64,
        b in 0.0..3.0f64,
    ) {
        let (lo, hi) = (a.min(b), a.max(b));
        let (pl, ph) = (pck(&pred, &gt, lo).unwrap(), pck(&pred, &gt, hi).unwrap());
        prop_assert!((0.0..=100.0).contains(&pl) && pl <= ph && ph <= 100.0);
    }

    #[test]
    fn accel_error_ignores_constant_velocity_drift(
        gt in prop::collection::vec(cloud(3), 3..8),
        offset in point(),
        velocity in point(),
    ) {
        let pred: Vec<Vec<Point>> = gt
            .iter()
            .enumerate()
            .map(|(t, f)| {
                f.iter()
                    .map(|p| std::array::from_fn(|k| p[k] + offset[k] + t as f64 * velocity[k]))
                    .collect()
            })
            .collect();
        prop_assert!(accel_error(&pred, &gt, None).unwrap() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn motion_files_round_trip_and_reject_truncation(seed in any::<u64>(), frames in 1usize..6, cut in 0.0..1.0f64) {
        let seq = gen_real_motion(&MotionFamily::sinusoid(), frames, seed).unwrap();
        let bytes = write_motion(&seq).unwrap();
        prop_assert_eq!(&read_motion(&bytes).unwrap(), &seq);
        let at = ((bytes.len() as f64) * cut) as usize;
        prop_assert!(read_motion(&bytes[..at.min(bytes.len() - 1)]).is_err());
    }

    #[test]
    fn corruptions_keep_shape_and_content(seed in any::<u64>(), frames in 2usize..8) {
        let seq = gen_real_motion(&MotionFamily::sinusoid(), frames, seed).unwrap();
        let key = |f: &motiongan::body::BodyParams| f.to_vec().iter().map(|x| x.to_bits()).collect::<Vec<u64>>();

        let shuffled = corrupt_motion(&seq, Corruption::FrameShuffle, seed ^ 1).unwrap();
        let mut a: Vec<_> = seq.frames.iter().map(key).collect();
        let mut b: Vec<_> = shuffled.frames.iter().map(key).collect();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);

        let frozen = corrupt_motion(&seq, Corruption::FrameFreeze, seed).unwrap();
        prop_assert!(frozen.frames.iter().all(|f| *f == seq.frames[0]));

        let noisy = corrupt_motion(&seq, Corruption::IidNoise(0.1), seed).unwrap();
        prop_assert_eq!(noisy.len(), seq.len());
        for (n, s) in noisy.frames.iter().zip(&seq.frames) {
            prop_assert_eq!(n.beta, s.beta);
            prop_assert!(n.theta.chunks(3).all(|w| (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt() <= std::f64::consts::PI + 1e-12));
        }
    }

    #[test]
    fn config_text_round_trips(seed in any::<u64>(), batch in 1usize..64, hidden in 1usize..128, adv in 0.0..1e4f64) {
        let mut cfg = Config::default();
        cfg.seed = seed;
        cfg.train.batch = batch;
        cfg.generator.hidden = hidden;
        cfg.train.weights.lambda_adv = adv;
        cfg.sync();
        let back = Config::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
