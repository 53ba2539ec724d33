mod plots;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bitespeed::bites::BiteSource;
use bitespeed::datamodel::{
    load_recording, read_bites_csv, read_episodes_csv, save_recording, write_bites_csv, write_episodes_csv,
    write_minute_csv, Recording, PROCESSED_RATE_HZ,
};
use bitespeed::episodes::{detect_episodes, episode_speed, minute_speed};
use bitespeed::model::{train_with_observer, Checkpoint, Predictor};
use bitespeed::pipeline::{
    build_training_set, crossval, evaluate_fold, oracle_run, write_probs_csv, write_report, Dataset, DayAnalysis,
    DayArtifacts, Failure, Fold, HandsMode, Provenance, RunConfig, Source,
};
use bitespeed::preprocess::{downsample, downsample_labels};
use bitespeed::synth::{compact_suite, default_benchmark_suite, generate};
use bitespeed::BiteSet;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(
    name = "bitespeed",
    version,
    about = "Bite detection and eating speed from dual-wrist IMU data"
)]
struct Cli {
    /// Run configuration in TOML; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    hands: Option<HandsMode>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Recording directories, or directories containing them.
    data: Vec<PathBuf>,
    /// Add the built-in synthetic benchmark suite.
    #[arg(long)]
    synth_suite: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Suite {
    Default,
    Compact,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate recording directories and write a manifest.
    Ingest(DataArgs),
    /// Write synthetic recordings in the canonical layout.
    Synth {
        #[arg(long, value_enum, default_value = "default")]
        suite: Suite,
        /// Participants in the compact suite.
        #[arg(long, default_value_t = 7)]
        participants: usize,
    },
    /// Downsample one recording to the processing rate.
    Preprocess { recording: PathBuf },
    /// Train one model on every participant of the dataset.
    Train(DataArgs),
    /// Per-frame class probabilities for one recording.
    Predict {
        #[arg(long)]
        model: PathBuf,
        recording: PathBuf,
    },
    /// Bites for one recording.
    Detect {
        #[arg(long)]
        model: PathBuf,
        recording: PathBuf,
    },
    /// Eating episodes from a bites file.
    Episodes { bites: PathBuf },
    /// Episode and minute-level speed from bites and episodes files.
    Speed {
        bites: PathBuf,
        episodes: PathBuf,
        /// Length of the minute track; defaults to the last bite's end.
        #[arg(long)]
        span_s: Option<f64>,
    },
    /// Score a trained model, or the annotations themselves, on a dataset.
    Evaluate {
        #[arg(long, conflicts_with = "oracle", required_unless_present = "oracle")]
        model: Option<PathBuf>,
        #[arg(long)]
        oracle: bool,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Participant-level cross-validation.
    Crossval(DataArgs),
    /// Figures for a finished run directory.
    Report { run: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Synth { .. } => "synth",
            Command::Preprocess { .. } => "preprocess",
            Command::Train(_) => "train",
            Command::Predict { .. } => "predict",
            Command::Detect { .. } => "detect",
            Command::Episodes { .. } => "episodes",
            Command::Speed { .. } => "speed",
            Command::Evaluate { .. } => "evaluate",
            Command::Crossval(_) => "crossval",
            Command::Report { .. } => "report",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let summary =
                json!({ "status": "error", "command": null, "error": e.kind().to_string(), "causes": [e.to_string()] });
            eprintln!("{summary}");
            return ExitCode::from(2);
        }
    };
    let command = cli.command.name();
    match run(cli) {
        Ok(summary) => {
            let mut summary = summary;
            summary["status"] = json!("ok");
            summary["command"] = json!(command);
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let summary = json!({
                "status": "error",
                "command": command,
                "error": e.to_string(),
                "causes": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            eprintln!("{summary}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(h) = cli.hands {
        cfg.hands = h;
    }
    if let Some(k) = cli.folds {
        cfg.folds = k;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dataset(cfg: &mut RunConfig, args: &DataArgs) -> Result<Dataset> {
    if !args.data.is_empty() {
        cfg.dataset = args.data.clone();
    }
    cfg.synth_suite |= args.synth_suite;
    Ok(Dataset::from_config(cfg)?)
}

fn run(cli: Cli) -> Result<Value> {
    let mut cfg = load_config(&cli)?;
    let out = cfg.out_dir.clone();
    match &cli.command {
        Command::Ingest(args) => ingest(&mut cfg, args, &out),
        Command::Synth { suite, participants } => synth(*suite, *participants, cfg.seed, &out),
        Command::Preprocess { recording } => preprocess(recording, &out),
        Command::Train(args) => train(&mut cfg, args, &out),
        Command::Predict { model, recording } => predict(model, recording, cfg.hands, &out),
        Command::Detect { model, recording } => detect(model, recording, &cfg, &out),
        Command::Episodes { bites } => episodes(bites, &cfg, &out),
        Command::Speed {
            bites,
            episodes,
            span_s,
        } => speed(bites, episodes, *span_s, &cfg, &out),
        Command::Evaluate { model, oracle, data } => evaluate(&mut cfg, model.as_deref(), *oracle, data, &out),
        Command::Crossval(args) => run_crossval(&mut cfg, args, &out),
        Command::Report { run } => report(run),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn ingest(cfg: &mut RunConfig, args: &DataArgs, out: &Path) -> Result<Value> {
    let ds = dataset(cfg, args)?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for entry in ds.entries() {
        match entry.load() {
            Ok(rec) => rows.push(json!({
                "participant_id": entry.participant_id,
                "day_id": entry.day_id,
                "path": match &entry.source {
                    Source::Dir(d) => d.display().to_string(),
                    Source::Synth(_) => "synthetic".into(),
                },
                "sample_rate_hz": rec.right.sample_rate_hz(),
                "duration_s": rec.span_s(),
                "dominant_hand": rec.dominant_hand.map(|h| h.as_str()),
                "annotated": rec.labels_right.is_some(),
                "episodes_annotated": rec.episodes_gt.is_some(),
            })),
            Err(e) => failures.push(Failure {
                recording: entry.key(),
                error: e.to_string(),
            }),
        }
    }
    create_dir(out)?;
    let manifest = json!({
        "dataset_sha256": ds.content_hash()?,
        "participants": ds.participants(),
        "recordings": rows,
        "failures": failures,
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(json!({
        "recordings": ds.len(),
        "participants": ds.participants().len(),
        "failures": failures.len(),
        "manifest": out.join("manifest.json"),
    }))
}

fn synth(suite: Suite, participants: usize, seed: u64, out: &Path) -> Result<Value> {
    let specs = match suite {
        Suite::Default => default_benchmark_suite(),
        Suite::Compact => compact_suite(participants, seed),
    };
    let mut written = Vec::new();
    for spec in &specs {
        let day = generate(spec)?;
        let dir = out.join(&spec.participant_id).join(&spec.day_id);
        save_recording(&day.recording, &dir)?;
        written.push(dir);
    }
    Ok(json!({ "recordings": written }))
}

fn preprocess(dir: &Path, out: &Path) -> Result<Value> {
    let rec = load_recording(dir)?;
    let right = downsample(&rec.right, PROCESSED_RATE_HZ)?;
    let left = downsample(&rec.left, PROCESSED_RATE_HZ)?;
    let mut down = Recording::new(rec.participant_id.clone(), rec.day_id.clone(), right, left)?;
    if let (Some(lr), Some(ll)) = (&rec.labels_right, &rec.labels_left) {
        down = down.with_labels(
            downsample_labels(lr, PROCESSED_RATE_HZ)?,
            downsample_labels(ll, PROCESSED_RATE_HZ)?,
        )?;
    }
    if let Some(eps) = rec.episodes_gt {
        down = down.with_episodes(eps);
    }
    if let Some(h) = rec.dominant_hand {
        down = down.with_dominant_hand(h);
    }
    let path = save_recording(&down, out)?;
    Ok(json!({ "recording": path, "frames": down.right.len(), "sample_rate_hz": PROCESSED_RATE_HZ }))
}

fn train(cfg: &mut RunConfig, args: &DataArgs, out: &Path) -> Result<Value> {
    let ds = dataset(cfg, args)?;
    let fold = Fold {
        index: 0,
        train: ds.participants(),
        test: Vec::new(),
    };
    let set = build_training_set(&ds, &fold, cfg)?;
    let mut observer = |s: &bitespeed::model::EpochStats| {
        let f1 = s.val_f1.map_or("-".to_string(), |v| format!("{v:.4}"));
        eprintln!(
            "epoch {:>3}  loss {:.5}  ce {:.5}  val_f1 {f1}",
            s.epoch, s.train_loss, s.train_ce
        );
    };
    let ckpt = train_with_observer(&set.train, &set.val, &cfg.seeded_model(), &set.norm, &mut observer)?;
    create_dir(out)?;
    let path = out.join("model.ckpt");
    ckpt.save(&path)?;
    write_json(&out.join("history.json"), &ckpt.meta)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    Ok(json!({
        "model": path,
        "train_windows": set.train.len(),
        "val_windows": set.val.len(),
        "epochs_run": ckpt.meta.epochs_run,
        "best_epoch": ckpt.meta.best_epoch,
        "failures": set.failures,
    }))
}

fn predict(model: &Path, dir: &Path, hands: HandsMode, out: &Path) -> Result<Value> {
    let rec = load_recording(dir)?;
    let predictor = Predictor::new(&Checkpoint::load(model)?)?;
    let active = bitespeed::pipeline::active_hands(&rec, hands)?;
    let (right, left) = predictor.predict(&rec)?;
    let mut written = Vec::new();
    for (hand, probs) in [(bitespeed::Hand::Right, right), (bitespeed::Hand::Left, left)] {
        if active.contains(&hand) {
            let path = out.join(format!("probs_{hand}.csv"));
            write_probs_csv(&path, &probs)?;
            written.push(path);
        }
    }
    Ok(json!({ "files": written }))
}

fn detect(model: &Path, dir: &Path, cfg: &RunConfig, out: &Path) -> Result<Value> {
    let rec = load_recording(dir)?;
    let predictor = Predictor::new(&Checkpoint::load(model)?)?;
    let (day, _) = DayAnalysis::from_predictor(&rec, &predictor, cfg.hands, &cfg.episodes)?;
    create_dir(out)?;
    let path = out.join("bites.csv");
    write_bites_csv(&path, day.bites.bites())?;
    Ok(json!({ "bites": day.bites.len(), "file": path }))
}

fn read_bite_set(path: &Path) -> Result<BiteSet> {
    Ok(BiteSet::new(read_bites_csv(path)?, BiteSource::Prediction))
}

fn episodes(bites: &Path, cfg: &RunConfig, out: &Path) -> Result<Value> {
    let bites = read_bite_set(bites)?;
    let found = detect_episodes(&bites, &cfg.episodes);
    create_dir(out)?;
    let path = out.join("episodes.csv");
    write_episodes_csv(&path, found.episodes())?;
    Ok(json!({ "episodes": found.len(), "file": path }))
}

fn speed(bites: &Path, episodes: &Path, span_s: Option<f64>, cfg: &RunConfig, out: &Path) -> Result<Value> {
    let bites = read_bite_set(bites)?;
    let eps = episode_speed(&bites, &read_episodes_csv(episodes)?, cfg.episodes.eating_only_speed)?;
    let span = match span_s {
        Some(s) if s.is_finite() && s >= 0.0 => s,
        Some(s) => bail!("span must be a non-negative number of seconds, got {s}"),
        None => bites.bites().iter().map(|b| b.t_r).fold(0.0, f64::max),
    };
    let minutes = minute_speed(&bites, span);
    create_dir(out)?;
    write_episodes_csv(&out.join("episodes.csv"), &eps)?;
    write_minute_csv(&out.join("minutes.csv"), &minutes)?;
    let speeds: Vec<Option<f64>> = eps.iter().map(|e| e.speed_bites_per_min).collect();
    Ok(json!({ "speeds_bpm": speeds, "minutes": minutes.len() }))
}

fn evaluate(cfg: &mut RunConfig, model: Option<&Path>, oracle: bool, args: &DataArgs, out: &Path) -> Result<Value> {
    let ds = dataset(cfg, args)?;
    let (report, failures) = if oracle {
        let outcome = oracle_run(cfg, &ds, Some(out))?;
        let failures: Vec<Failure> = outcome.failures().cloned().collect();
        (outcome.report, failures)
    } else {
        let model = model.expect("clap requires --model without --oracle");
        let ckpt = Checkpoint::load(model)?;
        let fold = Fold {
            index: 0,
            train: Vec::new(),
            test: ds.participants(),
        };
        let (acc, failures) = evaluate_fold(&ds, &fold, &ckpt, cfg, Some(out))?;
        let report = Provenance::new(cfg, &ds)?
            .stamp(acc.finish()?)
            .with_provenance("model", model.display().to_string());
        write_report(out, &report)?;
        (report, failures)
    };
    finish_run(cfg, out, &report, &failures)
}

fn run_crossval(cfg: &mut RunConfig, args: &DataArgs, out: &Path) -> Result<Value> {
    let ds = dataset(cfg, args)?;
    let outcome = crossval(cfg, &ds, Some(out))?;
    let failures: Vec<Failure> = outcome.failures().cloned().collect();
    let mut summary = finish_run(cfg, out, &outcome.report, &failures)?;
    summary["folds"] = json!(outcome
        .folds
        .iter()
        .map(|f| json!({ "fold": f.fold.index, "test": f.fold.test, "eating_f1_0.1": eating_f1(&f.report) }))
        .collect::<Vec<_>>());
    Ok(summary)
}

fn eating_f1(report: &bitespeed::EvalReport) -> Option<f64> {
    report.segment(bitespeed::BiteClass::Eating, 0.1).map(|r| r.f1)
}

/// Config, failures and figures shared by every evaluated run.
fn finish_run(cfg: &RunConfig, out: &Path, report: &bitespeed::EvalReport, failures: &[Failure]) -> Result<Value> {
    create_dir(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    write_json(&out.join("failures.json"), &failures)?;
    let days = DayArtifacts::collect(out)?;
    let plots = plots::render_all(&out.join("plots"), &days)?;
    Ok(json!({
        "out": out,
        "recordings": days.len(),
        "failures": failures.len(),
        "plots": plots.len(),
        "eating_f1_0.1": eating_f1(report),
        "episode_f1": report.episode_f1,
        "mape": report.mape,
        "pcc": report.pcc,
    }))
}

fn report(run: &Path) -> Result<Value> {
    let report = bitespeed::pipeline::read_report(&run.join("report.json"))?;
    let days = DayArtifacts::collect(run)?;
    let plots = plots::render_all(&run.join("plots"), &days)?;
    Ok(json!({ "recordings": days.len(), "plots": plots, "eating_f1_0.1": eating_f1(&report), "mape": report.mape }))
}
