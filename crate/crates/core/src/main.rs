use std::cell::RefCell;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use motiongan::config::{Config, Mode};
use motiongan::diagnostics::{gradcheck_suite, GRADCHECK_TOLERANCE};
use motiongan::io_util::write_atomic;
use motiongan::metrics::MetricsReport;
use motiongan::motionsim::{Corpus, Corruption, Split, MANIFEST_NAME};
use motiongan::run::RunManifest;
use motiongan::trainer::{
    pooling_ablation, pooling_csv, regularizer_ablation, train_mposer, Checkpoint, ModelKind, PoolingVariant,
    StepReport, Trainer,
};
use motiongan::{Error, Result};

const CHECKPOINT_FILE: &str = "checkpoint.bin";
const LOG_FILE: &str = "loss_log.txt";

#[derive(Parser)]
#[command(name = "motiongan", version, about = "Temporal body regression with a motion discriminator")]
struct Cli {
    /// Config file (`key = value` lines with `[section]` headers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic motion corpus into the output directory.
    GenData,
    /// Train the generator (and discriminator or motion prior).
    Train {
        /// baseline, mposer or gan.
        #[arg(long)]
        mode: Option<String>,
        /// Corpus directory; defaults to the config's corpus_dir, else generated.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<u64>,
        /// Write an oracle checkpoint (identity features) without training.
        #[arg(long)]
        oracle: bool,
    },
    /// Evaluate a checkpoint on a corpus's eval split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Check every gradient against central finite differences.
    Gradcheck {
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Regularizer and discriminator-pooling comparisons.
    Ablate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Generator steps per regularizer configuration.
        #[arg(long)]
        max_steps: Option<u64>,
        /// regularizer, pooling or all.
        #[arg(long, default_value = "all")]
        which: String,
        /// Discriminator steps per pooling variant.
        #[arg(long, default_value_t = 500)]
        disc_steps: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) => 3,
        Error::Config(_) => 1,
        _ => 2,
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) if !p.exists() => return Err(Error::Config(format!("config file {} not found", p.display()))),
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    cfg.sync();
    cfg.validate()?;
    Ok(cfg)
}

fn load_corpus(cfg: &Config, dir: Option<&Path>) -> Result<Corpus> {
    match dir {
        Some(d) => Corpus::load(d),
        None if cfg.corpus_dir.join(MANIFEST_NAME).exists() => Corpus::load(&cfg.corpus_dir),
        None => Corpus::generate(&cfg.corpus),
    }
}

fn write_report(dir: &Path, report: &MetricsReport, manifest: &mut RunManifest) -> Result<()> {
    let txt = dir.join("report.txt");
    let csv = dir.join("report.csv");
    write_atomic(&txt, report.to_kv().as_bytes())?;
    write_atomic(&csv, format!("{}\n{}\n", MetricsReport::csv_header(), report.to_csv_row()).as_bytes())?;
    manifest.artifact("report", txt);
    manifest.artifact("report_csv", csv);
    Ok(())
}

fn gen_data(cfg: &Config, started: Instant) -> Result<()> {
    let corpus = Corpus::generate(&cfg.corpus)?;
    fs::create_dir_all(&cfg.out)?;
    corpus.save(&cfg.out)?;
    let mut m = RunManifest::new("gen-data", cfg.to_text(), cfg.seed, cfg.corpus.seed);
    m.artifact("corpus_manifest", cfg.out.join(MANIFEST_NAME));
    m.wall_clock_secs = started.elapsed().as_secs_f64();
    m.save(&cfg.out)?;
    println!(
        "wrote {} train + {} eval sequences to {}",
        corpus.split(Split::Train).len(),
        corpus.split(Split::Eval).len(),
        cfg.out.display()
    );
    Ok(())
}

/// Log lines from an earlier run, cut back to the resumed step.
fn prior_log(path: &Path, step: u64) -> Result<Vec<String>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    Ok(fs::read_to_string(path)?
        .lines()
        .skip(1)
        .filter(|l| l.split_whitespace().next().and_then(|s| s.parse::<u64>().ok()).is_some_and(|s| s < step))
        .map(str::to_string)
        .collect())
}

fn save_log(path: &Path, lines: &[String]) -> Result<()> {
    let mut s = String::from(StepReport::HEADER);
    s.push('\n');
    for l in lines {
        s.push_str(l);
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

fn train(
    mut cfg: Config,
    mode: Option<&str>,
    corpus_dir: Option<&Path>,
    resume: Option<&Path>,
    max_steps: Option<u64>,
    oracle: bool,
    started: Instant,
) -> Result<()> {
    if let Some(m) = mode {
        cfg.train.mode = Mode::parse(m)?;
    }
    let out = cfg.out.clone();
    fs::create_dir_all(&out)?;
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let mut manifest = RunManifest::new("train", String::new(), cfg.seed, cfg.corpus.seed);

    if oracle {
        if cfg.features.kind != "identity" {
            return Err(Error::Config("an oracle checkpoint needs features.kind = identity".into()));
        }
        cfg.train.mode = Mode::Baseline;
        manifest.config = cfg.to_text();
        let ckpt = Checkpoint {
            kind: ModelKind::Oracle,
            trainer: Trainer::new(cfg, None)?,
        };
        ckpt.save(&ckpt_path)?;
        manifest.artifact("checkpoint", &ckpt_path);
        manifest.wall_clock_secs = started.elapsed().as_secs_f64();
        manifest.save(&out)?;
        println!("wrote oracle checkpoint {}", ckpt_path.display());
        return Ok(());
    }

    let mut trainer = match resume {
        Some(p) => {
            let ckpt = Checkpoint::load(p)?;
            if ckpt.kind != ModelKind::Generator {
                return Err(Error::Validation(format!("cannot resume a {} checkpoint", ckpt.kind.name())));
            }
            ckpt.trainer
        }
        None => fresh_trainer(&cfg, corpus_dir, &out, &mut manifest)?,
    };
    let corpus = load_corpus(&trainer.config, corpus_dir)?;
    if corpus.frames == 0 || corpus.split(Split::Train).is_empty() {
        return Err(Error::Validation("corpus has no training sequences".into()));
    }
    manifest.config = trainer.config.to_text();
    let log_path = out.join(LOG_FILE);
    let log = RefCell::new(if resume.is_some() {
        prior_log(&log_path, trainer.step)?
    } else {
        Vec::new()
    });
    trainer.train(
        &corpus,
        max_steps,
        |r| {
            log.borrow_mut().push(r.line());
            Ok(())
        },
        |t| {
            save_log(&log_path, &log.borrow())?;
            Checkpoint {
                kind: ModelKind::Generator,
                trainer: t.clone(),
            }
            .save(&ckpt_path)
        },
    )?;
    save_log(&log_path, &log.borrow())?;
    Checkpoint {
        kind: ModelKind::Generator,
        trainer: trainer.clone(),
    }
    .save(&ckpt_path)?;
    let report = trainer.evaluate(&corpus)?;
    manifest.artifact("checkpoint", &ckpt_path);
    manifest.artifact("loss_log", &log_path);
    write_report(&out, &report, &mut manifest)?;
    manifest.wall_clock_secs = started.elapsed().as_secs_f64();
    manifest.save(&out)?;
    println!("trained {} steps ({} mode)", trainer.step, trainer.config.train.mode.name());
    print!("{}", report.to_kv());
    Ok(())
}

fn fresh_trainer(cfg: &Config, corpus_dir: Option<&Path>, out: &Path, manifest: &mut RunManifest) -> Result<Trainer> {
    let prior = if cfg.train.mode == Mode::MPoser {
        let corpus = load_corpus(cfg, corpus_dir)?;
        let t = &cfg.train;
        let run = train_mposer(
            &cfg.mposer,
            &corpus.split(Split::Train),
            &corpus.split(Split::Eval),
            t.mposer_steps,
            t.batch,
            t.mposer_lr,
            motiongan::rng::derive_seed(cfg.seed, "mposer", 0),
        )?;
        let curve: String = run.curve.iter().map(|(s, e)| format!("{s} {e:?}\n")).collect();
        let path = out.join("mposer_curve.txt");
        write_atomic(&path, format!("step heldout_error\n{curve}").as_bytes())?;
        manifest.artifact("mposer_curve", path);
        Some(run.model)
    } else {
        None
    };
    Trainer::new(cfg.clone(), prior)
}

fn eval(cfg: &Config, checkpoint: &Path, corpus_dir: Option<&Path>, started: Instant) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let corpus = load_corpus(&ckpt.trainer.config, corpus_dir)?;
    let t = &ckpt.trainer;
    let report = motiongan::trainer::evaluate(&ckpt.predictor(), &corpus, &t.template, t.config.train.pck_threshold)?;
    fs::create_dir_all(&cfg.out)?;
    let mut manifest = RunManifest::new("eval", t.config.to_text(), t.config.seed, t.config.corpus.seed);
    write_report(&cfg.out, &report, &mut manifest)?;
    manifest.artifact("checkpoint", checkpoint);
    manifest.wall_clock_secs = started.elapsed().as_secs_f64();
    manifest.save(&cfg.out)?;
    print!("{}", report.to_kv());
    Ok(())
}

fn gradcheck(fault: Option<&str>) -> Result<()> {
    let results = gradcheck_suite(fault)?;
    println!("{:<28} {:>12}  status", "component", "worst_rel_err");
    for r in &results {
        let status = if r.passed() { "ok" } else { "FAIL" };
        println!("{:<28} {:>12.3e}  {status}", r.component, r.worst);
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.component.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "gradient check above {GRADCHECK_TOLERANCE:e} in: {}",
            failed.join(", ")
        )))
    }
}

fn ablate(
    cfg: &Config,
    corpus_dir: Option<&Path>,
    max_steps: Option<u64>,
    which: &str,
    disc_steps: usize,
    seeds: &[u64],
    started: Instant,
) -> Result<()> {
    let (reg, pool) = match which {
        "all" => (true, true),
        "regularizer" => (true, false),
        "pooling" => (false, true),
        other => return Err(Error::Config(format!("unknown ablation {other:?}"))),
    };
    let corpus = load_corpus(cfg, corpus_dir)?;
    fs::create_dir_all(&cfg.out)?;
    let mut manifest = RunManifest::new("ablate", cfg.to_text(), cfg.seed, cfg.corpus.seed);
    if reg {
        let r = regularizer_ablation(cfg, &corpus, max_steps)?;
        let path = cfg.out.join("ablation_regularizer.csv");
        write_atomic(&path, r.to_csv().as_bytes())?;
        manifest.artifact("ablation_regularizer", path);
        print!("{}", r.to_csv());
        println!("mposer_heldout_error {:?} mean_pose_error {:?}", r.prior_error, r.mean_pose_error);
    }
    if pool {
        let rows = pooling_ablation(
            cfg,
            &corpus,
            &PoolingVariant::standard(),
            Corruption::FrameShuffle,
            disc_steps,
            seeds,
        )?;
        let path = cfg.out.join("ablation_pooling.csv");
        write_atomic(&path, pooling_csv(&rows).as_bytes())?;
        manifest.artifact("ablation_pooling", path);
        print!("{}", pooling_csv(&rows));
    }
    manifest.wall_clock_secs = started.elapsed().as_secs_f64();
    manifest.save(&cfg.out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    if let Command::Gradcheck { inject_fault } = &cli.command {
        return gradcheck(inject_fault.as_deref());
    }
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::GenData => gen_data(&cfg, started),
        Command::Train {
            mode,
            corpus,
            resume,
            max_steps,
            oracle,
        } => train(
            cfg,
            mode.as_deref(),
            corpus.as_deref(),
            resume.as_deref(),
            *max_steps,
            *oracle,
            started,
        ),
        Command::Eval { checkpoint, corpus } => eval(&cfg, checkpoint, corpus.as_deref(), started),
        Command::Ablate {
            corpus,
            max_steps,
            which,
            disc_steps,
            seeds,
        } => ablate(&cfg, corpus.as_deref(), *max_steps, which, *disc_steps, seeds, started),
        Command::Gradcheck { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
