//! `paxray` — batch jobs over the chest X-ray classification stack.
//!
//! Exit codes are stable: 0 success, 2 configuration/spec/validation
//! errors, 3 dataset or file errors, 4 numeric failures (non-finite loss).
//! Stdout carries data; stderr carries context and a machine-readable
//! `status=...` line.

mod report;

use clap::{Args, Parser, Subcommand};
use paxray_core::arch::count_params;
use paxray_core::augment::{load_image, random_transform, resize_to, save_png};
use paxray_core::config::{ArchChoice, RunConfig};
use paxray_core::data::load_dataset;
use paxray_core::error::Error;
use paxray_core::metrics::{summary_csv, summary_json};
use paxray_core::model::build;
use paxray_core::rng::Rng;
use paxray_core::synth::synth_dataset;
use paxray_core::trainer::{cross_validate, evaluate_model, load_split, train_one_fold};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Parser)]
#[command(name = "paxray", version, about = "3-class chest X-ray classification stack")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Overrides {
    /// Override the configured epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured batch size.
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic 3-class dataset.
    Synth {
        /// Output dataset root.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        per_class: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one model on the whole dataset and write a run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run directory name (default: run-<unix time>).
        #[arg(long)]
        name: Option<String>,
        /// Overwrite an existing run directory.
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Stratified k-fold cross-validation; writes summary.csv/json.
    Crossval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        force: bool,
        /// Run folds on worker threads (results are identical).
        #[arg(long)]
        parallel_folds: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate a checkpoint on a dataset; prints an EvalResult as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Channel statistics JSON from the training run; fitted on the
        /// evaluation data itself when omitted.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Per-layer parameter table for an architecture.
    Params {
        /// vgg16, vgg19, mini-vgg, or spec:<path>.
        arch: String,
        /// Input size as HxW.
        #[arg(long, default_value = "182x182")]
        input: String,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 0.3)]
        dropout: f64,
        /// Print the difference against a claimed total.
        #[arg(long)]
        compare: Option<u64>,
    },
    /// Write N augmented variants of an image for visual inspection.
    AugmentPreview {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run config supplying the augmentation ranges (defaults apply
        /// when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Render result tables for one or more completed runs.
    Report {
        /// Run directories containing summary.json.
        runs: Vec<PathBuf>,
        /// Also write a plot-ready per-metric CSV.
        #[arg(long)]
        plot_csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => {
            eprintln!("status=ok");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e}");
            eprintln!("status=error code={code}");
            ExitCode::from(code)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Spec(_) | Error::Domain(_) | Error::Dimension(_)
        | Error::State(_) => 2,
        Error::Dataset(_) | Error::Input { .. } | Error::Io(_) => 3,
        Error::Numeric(_) => 4,
    }
}

fn dispatch(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Synth {
            out,
            per_class,
            size,
            seed,
        } => {
            let ds = synth_dataset(&out, per_class, size, seed)?;
            println!(
                "wrote {} images ({} per class) under {}",
                ds.len(),
                per_class,
                out.display()
            );
            Ok(())
        }
        Command::Train {
            config,
            name,
            force,
            overrides,
        } => cmd_train(&config, name, force, overrides),
        Command::Crossval {
            config,
            name,
            force,
            parallel_folds,
            overrides,
        } => cmd_crossval(&config, name, force, parallel_folds, overrides),
        Command::Eval {
            checkpoint,
            config,
            data,
            stats,
        } => cmd_eval(&checkpoint, &config, &data, stats.as_deref()),
        Command::Params {
            arch,
            input,
            classes,
            dropout,
            compare,
        } => cmd_params(&arch, &input, classes, dropout, compare),
        Command::AugmentPreview {
            image,
            out,
            count,
            seed,
            config,
        } => cmd_augment_preview(&image, &out, count, seed, config.as_deref()),
        Command::Report { runs, plot_csv } => report::cmd_report(&runs, plot_csv.as_deref()),
    }
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(e) = overrides.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if let Some(b) = overrides.batch_size {
        cfg.batch_size = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Creates the run directory, refusing to reuse a non-empty one without
/// `--force`.
fn create_run_dir(cfg: &RunConfig, name: Option<String>, force: bool) -> Result<PathBuf, Error> {
    let name = name.unwrap_or_else(|| {
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        format!("run-{ts}")
    });
    let dir = cfg.out_dir.join(name);
    if dir.exists() {
        let occupied = std::fs::read_dir(&dir)?.next().is_some();
        if occupied && !force {
            return Err(Error::Config(format!(
                "run directory {} already exists; pass --force to overwrite",
                dir.display()
            )));
        }
        if occupied {
            std::fs::remove_dir_all(&dir)?;
        }
    }
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.snapshot"), cfg.to_text())?;
    Ok(dir)
}

fn write_losses_csv(path: &Path, losses: &[f64]) -> Result<(), Error> {
    let mut csv = String::from("epoch,loss\n");
    for (i, loss) in losses.iter().enumerate() {
        csv.push_str(&format!("{i},{loss}\n"));
    }
    std::fs::write(path, csv)?;
    Ok(())
}

fn cmd_train(
    config: &Path,
    name: Option<String>,
    force: bool,
    overrides: Overrides,
) -> Result<(), Error> {
    let cfg = load_config(config, &overrides)?;
    let ds = load_dataset(&cfg.data_root)?;
    let dir = create_run_dir(&cfg, name, force)?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let train = load_split(&ds, &all, cfg.input_side)?;
    let outcome = train_one_fold(&train, &cfg, 0)?;
    let mut model = outcome.model;

    std::fs::write(
        dir.join("checkpoint.bin"),
        model.checkpoint_bytes()?,
    )?;
    write_losses_csv(&dir.join("losses.csv"), &outcome.epoch_losses)?;
    std::fs::write(
        dir.join("stats.json"),
        serde_json::to_string_pretty(&outcome.stats).expect("stats serialize"),
    )?;
    let base = Rng::new(cfg.seed, "run");
    let eval = evaluate_model(&mut model, &train, &outcome.stats, cfg.batch_size, &base)?;
    std::fs::write(
        dir.join("eval.json"),
        serde_json::to_string_pretty(&eval).expect("eval serialize"),
    )?;
    println!(
        "trained on {} images; accuracy {:.3}; artifacts in {}",
        train.len(),
        eval.accuracy,
        dir.display()
    );
    Ok(())
}

fn cmd_crossval(
    config: &Path,
    name: Option<String>,
    force: bool,
    parallel: bool,
    overrides: Overrides,
) -> Result<(), Error> {
    let cfg = load_config(config, &overrides)?;
    let ds = load_dataset(&cfg.data_root)?;
    let dir = create_run_dir(&cfg, name, force)?;
    let outcome = cross_validate(&ds, &cfg, parallel)?;
    for fold in &outcome.folds {
        let fdir = dir.join(format!("fold{}", fold.fold));
        std::fs::create_dir_all(&fdir)?;
        std::fs::write(fdir.join("checkpoint.bin"), &fold.checkpoint)?;
        write_losses_csv(&fdir.join("losses.csv"), &fold.epoch_losses)?;
        std::fs::write(
            fdir.join("stats.json"),
            serde_json::to_string_pretty(&fold.stats).expect("stats serialize"),
        )?;
    }
    std::fs::write(dir.join("summary.csv"), summary_csv(&outcome.summary))?;
    std::fs::write(dir.join("summary.json"), summary_json(&outcome.summary))?;
    print!("{}", summary_csv(&outcome.summary));
    eprintln!("artifacts in {}", dir.display());
    Ok(())
}

fn cmd_eval(
    checkpoint: &Path,
    config: &Path,
    data: &Path,
    stats_path: Option<&Path>,
) -> Result<(), Error> {
    let cfg = RunConfig::from_file(config)?;
    let spec = cfg.architecture()?;
    let mut model = build(&spec, &Rng::new(cfg.seed, "run").derive("fold0/init"))?;
    let bytes = std::fs::read(checkpoint).map_err(|e| Error::Input {
        path: checkpoint.to_path_buf(),
        reason: e.to_string(),
    })?;
    model.load_checkpoint(&mut &bytes[..])?;

    let ds = load_dataset(data)?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let set = load_split(&ds, &all, cfg.input_side)?;
    let stats = match stats_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Input {
                path: p.to_path_buf(),
                reason: e.to_string(),
            })?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("bad stats file: {e}")))?
        }
        None => {
            eprintln!("note: no --stats given; fitting channel statistics on the evaluation data");
            paxray_core::augment::fit_stats(
                &set.iter().map(|li| li.image.clone()).collect::<Vec<_>>(),
            )?
        }
    };
    let base = Rng::new(cfg.seed, "run");
    let eval = evaluate_model(&mut model, &set, &stats, cfg.batch_size, &base)?;
    println!("{}", serde_json::to_string_pretty(&eval).expect("eval serialize"));
    Ok(())
}

/// Thousands separator for parameter counts.
fn group_digits(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn cmd_params(
    arch: &str,
    input: &str,
    classes: usize,
    dropout: f64,
    compare: Option<u64>,
) -> Result<(), Error> {
    let (h, w) = input
        .split_once('x')
        .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
        .ok_or_else(|| Error::Config(format!("bad --input '{input}', expected HxW")))?;
    let choice = ArchChoice::parse(arch)?;
    let spec = match &choice {
        ArchChoice::Vgg16 => paxray_core::arch::vgg16_spec(classes, dropout, (h, w, 3)),
        ArchChoice::Vgg19 => paxray_core::arch::vgg19_spec(classes, dropout, (h, w, 3)),
        ArchChoice::MiniVgg => paxray_core::arch::mini_vgg_spec(classes, dropout, (h, w, 3)),
        ArchChoice::SpecFile(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Input {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            paxray_core::arch::ArchitectureSpec::parse(&text)?
        }
    };
    let ((trainable, buffers), rows) = count_params(&spec)?;
    println!("{:<14} {:>14} {:>13} {:>9}", "layer", "output shape", "params", "buffers");
    for row in &rows {
        let shape = row
            .output_shape
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("x");
        println!(
            "{:<14} {:>14} {:>13} {:>9}",
            row.name,
            shape,
            group_digits(row.trainable as u64),
            group_digits(row.buffers as u64)
        );
    }
    println!("total trainable:     {}", group_digits(trainable as u64));
    println!("running buffers:     {}", group_digits(buffers as u64));
    let grand = (trainable + buffers) as u64;
    println!("grand total:         {}", group_digits(grand));
    if let Some(claimed) = compare {
        let diff = grand as i128 - claimed as i128;
        println!("claimed total:       {}", group_digits(claimed));
        println!(
            "difference:          {}{}",
            if diff >= 0 { "+" } else { "-" },
            group_digits(diff.unsigned_abs() as u64)
        );
    }
    Ok(())
}

fn cmd_augment_preview(
    image: &Path,
    out: &Path,
    count: usize,
    seed: u64,
    config: Option<&Path>,
) -> Result<(), Error> {
    let cfg = match config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    cfg.augment.validate()?;
    let decoded = load_image(image)?;
    let resized = resize_to(&decoded, cfg.input_side, cfg.input_side);
    std::fs::create_dir_all(out)?;
    save_png(&resized, &out.join("original.png"))?;
    let base = Rng::new(seed, "preview");
    for i in 0..count {
        let mut rng = base.derive(&format!("img{i}"));
        let transformed = random_transform(&resized, &cfg.augment, &mut rng)?;
        save_png(&transformed, &out.join(format!("augmented_{i:02}.png")))?;
    }
    println!("wrote {count} transformed images to {}", out.display());
    Ok(())
}
