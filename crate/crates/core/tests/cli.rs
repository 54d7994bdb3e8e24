use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.cfg")
}

fn motiongan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_motiongan")).args(args).output().expect("binary runs")
}

fn run_in(out: &Path, args: &[&str]) -> Output {
    let cfg = smoke_config();
    let mut all = vec!["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    all.extend_from_slice(args);
    motiongan(&all)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key)?.trim_start().strip_prefix('=').map(|v| v.trim().parse().unwrap()))
        .unwrap_or_else(|| panic!("{key} missing from {text}"))
}

#[test]
fn smoke_training_finishes_quickly_with_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let o = run_in(dir.path(), &["train"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(t0.elapsed() < Duration::from_secs(60));
    for f in ["checkpoint.bin", "loss_log.txt", "report.txt", "report.csv", "run_manifest.txt"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let log = fs::read_to_string(dir.path().join("loss_log.txt")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "step L_G L_DM d_real d_fake");
    assert_eq!(lines.len(), 51);
    for l in &lines[1..] {
        let cols: Vec<f64> = l.split_whitespace().map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols.len(), 5);
        assert!(cols.iter().all(|c| c.is_finite()));
    }
    let manifest = fs::read_to_string(dir.path().join("run_manifest.txt")).unwrap();
    assert!(manifest.contains("command = train"));
    assert!(manifest.contains("checkpoint = "));
}

const OUTPUTS: [&str; 3] = ["loss_log.txt", "report.txt", "checkpoint.bin"];

/// Runs `args` in a fresh `out` (the checkpoint records the output path, so
/// compared runs share one) and returns the produced files.
fn outputs_of(out: &Path, runs: &[&[&str]]) -> Vec<Vec<u8>> {
    if out.exists() {
        fs::remove_dir_all(out).unwrap();
    }
    for args in runs {
        let o = run_in(out, args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    OUTPUTS.iter().map(|f| fs::read(out.join(f)).unwrap()).collect()
}

#[test]
fn same_seed_same_outputs_different_seed_differs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let a = outputs_of(&out, &[&["--seed", "3", "train", "--max-steps", "12"]]);
    let b = outputs_of(&out, &[&["--seed", "3", "train", "--max-steps", "12"]]);
    let c = outputs_of(&out, &[&["--seed", "4", "train", "--max-steps", "12"]]);
    for (i, f) in OUTPUTS.iter().enumerate() {
        assert_eq!(a[i], b[i], "{f}");
    }
    assert_ne!(a[0], c[0]);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let ckpt = out.join("checkpoint.bin");
    let whole = outputs_of(&out, &[&["train", "--max-steps", "25"]]);
    let split = outputs_of(
        &out,
        &[
            &["train", "--max-steps", "13"],
            &["train", "--resume", ckpt.to_str().unwrap(), "--max-steps", "25"],
        ],
    );
    for (i, f) in OUTPUTS.iter().enumerate() {
        assert_eq!(whole[i], split[i], "{f}");
    }
}

#[test]
fn gen_data_then_train_and_eval_from_disk() {
    let root = tempfile::tempdir().unwrap();
    let corpus = root.path().join("corpus");
    let run = root.path().join("run");
    let o = run_in(&corpus, &["gen-data"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(corpus.join("manifest.txt").exists());

    let o = run_in(&run, &["train", "--mode", "baseline", "--corpus", corpus.to_str().unwrap(), "--max-steps", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let trained = fs::read_to_string(run.join("report.txt")).unwrap();

    let eval_dir = root.path().join("eval");
    let ckpt = run.join("checkpoint.bin");
    let o = run_in(
        &eval_dir,
        &["eval", "--checkpoint", ckpt.to_str().unwrap(), "--corpus", corpus.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(eval_dir.join("report.txt")).unwrap(), trained);
    assert_eq!(String::from_utf8_lossy(&o.stdout), trained);
}

#[test]
fn oracle_checkpoint_evaluates_to_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("oracle.cfg");
    let base = fs::read_to_string(smoke_config()).unwrap();
    fs::write(&cfg, format!("{base}\n[features]\nkind = identity\ndim = 85\nnoise = 0.0\n")).unwrap();
    let out = dir.path().join("run");
    let args = ["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let o = motiongan(&[&args[..], &["train", "--oracle"]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ckpt = out.join("checkpoint.bin");
    let o = motiongan(&[&args[..], &["eval", "--checkpoint", ckpt.to_str().unwrap()]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = String::from_utf8_lossy(&o.stdout);
    assert!(report_value(&report, "mpjpe").abs() < 1e-12);
    assert!(report_value(&report, "accel_err").abs() < 1e-12);
    assert_eq!(report_value(&report, "pck"), 100.0);
}

#[test]
fn oracle_needs_identity_features() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["train", "--oracle"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("identity"));
}

#[test]
fn gradcheck_passes_and_catches_a_fault() {
    let o = motiongan(&["gradcheck"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.lines().skip(1).all(|l| l.ends_with("ok")), "{table}");

    let o = motiongan(&["gradcheck", "--inject-fault", "matmul"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("matmul"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&motiongan(&["--help"])), 0);
    assert_eq!(code(&motiongan(&["--version"])), 0);
    assert_eq!(code(&motiongan(&["frobnicate"])), 1);
    assert_eq!(code(&motiongan(&["train", "--max-steps", "many"])), 1);
    assert_eq!(code(&motiongan(&["--config", "/nonexistent/x.cfg", "gen-data"])), 1);

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "[train]\nbatch = 0\n").unwrap();
    assert_eq!(code(&motiongan(&["--config", bad.to_str().unwrap(), "--out", out, "gen-data"])), 1);
    fs::write(&bad, "[train]\nbatch = four\n").unwrap();
    assert_eq!(code(&motiongan(&["--config", bad.to_str().unwrap(), "--out", out, "gen-data"])), 1);
    fs::write(&bad, "[train]\nmode = gan\nlambda_adv = -1\n").unwrap();
    assert_eq!(code(&motiongan(&["--config", bad.to_str().unwrap(), "--out", out, "gen-data"])), 1);

    let o = run_in(dir.path(), &["train", "--mode", "sideways"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));

    let missing = dir.path().join("missing.bin");
    let o = run_in(dir.path(), &["eval", "--checkpoint", missing.to_str().unwrap()]);
    assert_eq!(code(&o), 2);

    let junk = dir.path().join("junk.bin");
    fs::write(&junk, b"MGCKPT\0\0garbage").unwrap();
    let o = run_in(dir.path(), &["eval", "--checkpoint", junk.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).starts_with("error:"));

    let o = run_in(dir.path(), &["ablate", "--which", "sideways"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn small_ablation_writes_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["ablate", "--max-steps", "4", "--disc-steps", "4", "--seeds", "0,1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let reg = fs::read_to_string(dir.path().join("ablation_regularizer.csv")).unwrap();
    let rows: Vec<&str> = reg.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("mode,mpjpe"));
    assert!(rows[1].starts_with("baseline,") && rows[2].starts_with("mposer,") && rows[3].starts_with("gan,"));
    let pool = fs::read_to_string(dir.path().join("ablation_pooling.csv")).unwrap();
    assert_eq!(pool.lines().count(), 4);
    for label in ["concat", "attention-2x64", "attention-3x64"] {
        assert!(pool.contains(label), "{pool}");
    }
}
