use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use motiongan::body::{axis_angle_to_rotmat, forward_kinematics, BodyParams, BodyTemplate};
use motiongan::config::Config;
use motiongan::metrics::{mpjpe, pa_mpjpe};
use motiongan::motionsim::Corpus;
use motiongan::trainer::{Checkpoint, ModelKind, Trainer};
use motiongan_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::os::raw::c_char; 256];
    let n = unsafe { mg_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let s = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned();
    assert!(n >= s.len());
    s
}

fn small_config() -> Config {
    let mut cfg = Config::default();
    cfg.corpus.train = 12;
    cfg.corpus.eval = 4;
    cfg.corpus.frames = 6;
    cfg.generator.hidden = 6;
    cfg.generator.regressor_hidden = 6;
    cfg.discriminator.hidden = 6;
    cfg.discriminator.attn_size = 6;
    cfg.train.batch = 3;
    cfg.train.steps_per_epoch = 2;
    cfg.train.epochs = 1;
    cfg.train.eval_subset = 2;
    cfg.seed = 4;
    cfg.sync();
    cfg
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/motiongan.h")).unwrap();
    for name in [
        "mg_last_error_message",
        "mg_version",
        "mg_template_default",
        "mg_template_load",
        "mg_template_free",
        "mg_forward_kinematics",
        "mg_axis_angle_to_rotmat",
        "mg_mpjpe",
        "mg_pa_mpjpe",
        "mg_checkpoint_load",
        "mg_checkpoint_evaluate",
        "mg_checkpoint_free",
        "MG_STATUS_NULL_POINTER",
        "typedef struct MgTemplate MgTemplate",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"motiongan.h\"\nint main(void) { MgReport r; MgStatus s = MG_STATUS_OK; (void)r; return (int)s; }\n",
    )
    .unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-fsyntax-only")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(mg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn forward_kinematics_matches_library() {
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { mg_template_default(&mut t) }, MgStatus::Ok);
    let (j, v) = unsafe { (mg_template_num_joints(t), mg_template_num_vertices(t)) };
    let tmpl = BodyTemplate::standard();
    assert_eq!((j, v), (tmpl.num_joints(), tmpl.num_vertices()));

    let theta: Vec<f64> = (0..3 * j).map(|i| 0.3 * ((i as f64) * 0.7).sin()).collect();
    let beta: Vec<f64> = (0..10).map(|i| 0.1 * i as f64 - 0.4).collect();
    let mut joints = vec![0.0; 3 * j];
    let mut verts = vec![0.0; 3 * v];
    let s = unsafe { mg_forward_kinematics(t, theta.as_ptr(), beta.as_ptr(), joints.as_mut_ptr(), verts.as_mut_ptr()) };
    assert_eq!(s, MgStatus::Ok);

    let mut params = BodyParams::rest(j);
    params.theta = theta;
    params.beta.copy_from_slice(&beta);
    let posed = forward_kinematics(&params, &tmpl).unwrap();
    let want_j: Vec<f64> = posed.joints.iter().flatten().copied().collect();
    let want_v: Vec<f64> = posed.vertices.iter().flatten().copied().collect();
    assert_eq!(joints, want_j);
    assert_eq!(verts, want_v);
    unsafe { mg_template_free(t) };
}

#[test]
fn template_load_round_trip_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.txt");
    let tmpl = BodyTemplate::generate(20, 7).unwrap();
    tmpl.save(&path).unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { mg_template_load(c.as_ptr(), &mut t) }, MgStatus::Ok);
    assert_eq!(unsafe { mg_template_num_vertices(t) }, 20);
    unsafe { mg_template_free(t) };

    let missing = CString::new(dir.path().join("nope.txt").to_str().unwrap()).unwrap();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { mg_template_load(missing.as_ptr(), &mut t) }, MgStatus::Io);
    assert!(t.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn rotation_and_metrics() {
    let w = [0.2, -0.5, 0.9];
    let mut r = [0.0; 9];
    assert_eq!(unsafe { mg_axis_angle_to_rotmat(w.as_ptr(), r.as_mut_ptr()) }, MgStatus::Ok);
    assert_eq!(r, axis_angle_to_rotmat(&w));

    let gt = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let pred = [[0.1, 0.0, 0.0], [1.0, 0.3, 0.0], [0.0, 1.0, -0.2], [0.5, 0.0, 1.0]];
    let (fp, fg): (Vec<f64>, Vec<f64>) = (pred.concat(), gt.concat());
    let mut out = 0.0;
    assert_eq!(unsafe { mg_mpjpe(fp.as_ptr(), fg.as_ptr(), 4, 0, &mut out) }, MgStatus::Ok);
    assert_eq!(out, mpjpe(&pred, &gt, 0).unwrap());
    assert_eq!(unsafe { mg_pa_mpjpe(fp.as_ptr(), fg.as_ptr(), 4, &mut out) }, MgStatus::Ok);
    assert_eq!(out, pa_mpjpe(&pred, &gt).unwrap());

    assert_eq!(unsafe { mg_mpjpe(fp.as_ptr(), fg.as_ptr(), 4, 9, &mut out) }, MgStatus::Dimension);
    let flat = [0.0; 12];
    assert_eq!(unsafe { mg_pa_mpjpe(flat.as_ptr(), fg.as_ptr(), 4, &mut out) }, MgStatus::Degenerate);
}

#[test]
fn null_pointers_are_reported() {
    let mut out = [0.0; 9];
    assert_eq!(unsafe { mg_axis_angle_to_rotmat(ptr::null(), out.as_mut_ptr()) }, MgStatus::NullPointer);
    assert!(last_error().contains('w'));
    assert_eq!(unsafe { mg_template_default(ptr::null_mut()) }, MgStatus::NullPointer);
    let mut report = MgReport {
        mpjpe: 0.0,
        pa_mpjpe: 0.0,
        pve: 0.0,
        pck: 0.0,
        pck_threshold: 0.0,
        accel_err: 0.0,
        frames: 0,
        joints: 0,
    };
    assert_eq!(unsafe { mg_checkpoint_evaluate(ptr::null(), ptr::null(), &mut report) }, MgStatus::NullPointer);
    assert_eq!(unsafe { mg_checkpoint_step(ptr::null()) }, 0);
    unsafe {
        mg_template_free(ptr::null_mut());
        mg_checkpoint_free(ptr::null_mut());
    }
}

#[test]
fn error_message_truncates() {
    let w = [0.0; 3];
    assert_eq!(unsafe { mg_axis_angle_to_rotmat(w.as_ptr(), ptr::null_mut()) }, MgStatus::NullPointer);
    let mut buf = [0 as std::os::raw::c_char; 5];
    let n = unsafe { mg_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 4);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_bytes().len(), 4);
}

fn eval_via_ffi(path: &Path, corpus_dir: Option<&Path>) -> (MgStatus, MgReport, u64) {
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { mg_checkpoint_load(c.as_ptr(), &mut h) }, MgStatus::Ok);
    let dir = corpus_dir.map(|d| CString::new(d.to_str().unwrap()).unwrap());
    let mut report = MgReport {
        mpjpe: f64::NAN,
        pa_mpjpe: f64::NAN,
        pve: f64::NAN,
        pck: f64::NAN,
        pck_threshold: f64::NAN,
        accel_err: f64::NAN,
        frames: 0,
        joints: 0,
    };
    let s = unsafe { mg_checkpoint_evaluate(h, dir.as_ref().map_or(ptr::null(), |d| d.as_ptr()), &mut report) };
    let step = unsafe { mg_checkpoint_step(h) };
    unsafe { mg_checkpoint_free(h) };
    (s, report, step)
}

#[test]
fn checkpoint_evaluation_matches_library() {
    let cfg = small_config();
    let corpus = Corpus::generate(&cfg.corpus).unwrap();
    let mut trainer = Trainer::new(cfg, None).unwrap();
    trainer.train(&corpus, None, |_| Ok(()), |_| Ok(())).unwrap();
    let want = trainer.evaluate(&corpus).unwrap();
    let step = trainer.step;

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkpoint.bin");
    Checkpoint {
        kind: ModelKind::Generator,
        trainer,
    }
    .save(&path)
    .unwrap();
    let corpus_dir = dir.path().join("corpus");
    corpus.save(&corpus_dir).unwrap();

    for source in [None, Some(corpus_dir.as_path())] {
        let (s, got, got_step) = eval_via_ffi(&path, source);
        assert_eq!(s, MgStatus::Ok, "{}", last_error());
        assert_eq!(got_step, step);
        assert_eq!(got.mpjpe, want.mpjpe);
        assert_eq!(got.pa_mpjpe, want.pa_mpjpe);
        assert_eq!(got.accel_err, want.accel_err);
        assert_eq!(got.frames as usize, want.frames);
    }

    let (s, _, _) = eval_via_ffi(&path, Some(&dir.path().join("missing")));
    assert_eq!(s, MgStatus::Io);
}

#[test]
fn oracle_checkpoint_scores_zero() {
    let mut cfg = small_config();
    cfg.features.kind = "identity".into();
    cfg.features.noise = 0.0;
    cfg.features.dim = 3 * 24 + 10 + 3;
    cfg.sync();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("oracle.bin");
    Checkpoint {
        kind: ModelKind::Oracle,
        trainer: Trainer::new(cfg, None).unwrap(),
    }
    .save(&path)
    .unwrap();
    let (s, r, _) = eval_via_ffi(&path, None);
    assert_eq!(s, MgStatus::Ok, "{}", last_error());
    assert!(r.mpjpe.abs() < 1e-12 && r.accel_err.abs() < 1e-12, "{} {}", r.mpjpe, r.accel_err);
}

#[test]
fn corrupt_checkpoint_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.bin");
    std::fs::write(&path, b"not a checkpoint").unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { mg_checkpoint_load(c.as_ptr(), &mut h) }, MgStatus::Parse);
    assert!(h.is_null());
}
