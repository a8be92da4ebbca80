use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pianofinger_core::decode::decode_parts;
use pianofinger_core::gradcheck;
use pianofinger_core::metrics::{aggregate, evaluate_part, gold_report};
use pianofinger_core::numcore::OpKind;
use pianofinger_core::pig::{
    fill_fingers, load_corpus, parse_pig_input, parts_from_records, serialize_records, LoadReport, Manifest,
};
use pianofinger_core::train::{fit, LAST_CHECKPOINT};
use pianofinger_core::{
    Checkpoint, Config, DecodeMode, Finger, HandPart, MetricsReport, Model, ModelKind, ParamStore, Split, Trainer,
};

#[derive(Parser)]
#[command(name = "pianofinger", version, about = "Piano fingering prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a dataset directory and print per-split counts.
    Ingest {
        dir: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Train a model; writes the log and checkpoints into --out.
    Train {
        dir: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Extra `key=value` config overrides, applied after --config.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from the last checkpoint in --out.
        #[arg(long)]
        resume: bool,
    },
    /// Fill the finger column of a PIG file.
    Predict {
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        decoding: Decoding,
    },
    /// Score predictions (a directory of PIG files, or a checkpoint) against gold.
    Eval {
        gold: PathBuf,
        #[command(flatten)]
        data: SplitArgs,
        #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        decoding: Decoding,
        #[arg(long)]
        per_piece: bool,
        /// Also write the table as tab-separated values.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fluency counts of the gold annotations themselves.
    Goldstats {
        gold: PathBuf,
        #[command(flatten)]
        data: SplitArgs,
        #[arg(long)]
        per_piece: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every model kind's gradients.
    Gradcheck {
        /// Only check the model kind named in this config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_kind)]
        model: Option<ModelKind>,
        /// Scale the backward pass of one op, e.g. `lstm_cell:1.5`.
        #[arg(long, hide = true, value_parser = parse_fault)]
        inject_fault: Option<(OpKind, f64)>,
    },
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
}

#[derive(Args)]
struct Decoding {
    /// Beam width; defaults to the checkpoint's configuration.
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long, value_parser = parse_decode)]
    decode: Option<DecodeMode>,
    /// Seed for sampled decoding.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_split(s: &str) -> Result<Split, String> {
    Split::parse(s).ok_or_else(|| format!("unknown split `{s}` (train, val, test)"))
}

fn parse_decode(s: &str) -> Result<DecodeMode, String> {
    DecodeMode::parse(s).ok_or_else(|| format!("unknown decode mode `{s}` (greedy, beam, sample)"))
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    ModelKind::parse(s).ok_or_else(|| format!("unknown model `{s}`"))
}

fn parse_fault(s: &str) -> Result<(OpKind, f64), String> {
    let (name, scale) = s.split_once(':').unwrap_or((s, "1.5"));
    let op = match name {
        "affine" => OpKind::Affine,
        "lstm_cell" => OpKind::LstmCell,
        "concat" => OpKind::Concat,
        "relu" => OpKind::Relu,
        "log_softmax" => OpKind::LogSoftmax,
        "row" => OpKind::Row,
        _ => return Err(format!("unknown op `{name}`")),
    };
    let scale = scale.parse().map_err(|_| format!("bad scale `{scale}`"))?;
    Ok((op, scale))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest { dir, manifest } => ingest(&dir, manifest.as_deref()),
        Command::Train {
            dir,
            manifest,
            config,
            seed,
            overrides,
            out,
            resume,
        } => {
            let mut cfg = match &config {
                Some(path) => Config::load(path).with_context(|| format!("reading {}", path.display()))?,
                None => Config::desk(),
            };
            for kv in &overrides {
                let (k, v) = kv.split_once('=').with_context(|| format!("expected KEY=VALUE, got `{kv}`"))?;
                cfg.set(k.trim(), v.trim()).map_err(anyhow::Error::msg)?;
            }
            if let Some(seed) = seed {
                cfg.train.seed = seed;
            }
            cfg.validate()?;
            train(&dir, manifest.as_deref(), cfg, &out, resume)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Predict {
            input,
            checkpoint,
            out,
            decoding,
        } => {
            predict(&input, &checkpoint, &out, &decoding)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            gold,
            data,
            checkpoint,
            predictions,
            decoding,
            per_piece,
            out,
        } => {
            let parts = load_split(&gold, &data)?;
            let (label, preds) = match (&checkpoint, &predictions) {
                (Some(ckpt), _) => (file_label(ckpt), decode_with_checkpoint(ckpt, &parts, &decoding)?),
                (None, Some(dir)) => (file_label(dir), load_predictions(dir, &parts)?),
                (None, None) => bail!("give --checkpoint or --predictions"),
            };
            let reports = parts
                .iter()
                .zip(&preds)
                .map(|(part, p)| evaluate_part(part, p).with_context(|| part.source_id.clone()))
                .collect::<Result<Vec<_>>>()?;
            report(&label, &parts, &reports, per_piece, out.as_deref(), true)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Goldstats {
            gold,
            data,
            per_piece,
            out,
        } => {
            let parts = load_split(&gold, &data)?;
            let reports = parts
                .iter()
                .map(|part| gold_report(part).with_context(|| part.source_id.clone()))
                .collect::<Result<Vec<_>>>()?;
            report("gold", &parts, &reports, per_piece, out.as_deref(), false)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck {
            config,
            model,
            inject_fault,
        } => {
            let kind = match (model, &config) {
                (Some(k), _) => Some(k),
                (None, Some(path)) => Some(Config::load(path)?.model.kind),
                (None, None) => None,
            };
            let report = match kind {
                Some(k) => gradcheck::GradcheckReport {
                    groups: gradcheck::check_kind(k, inject_fault)?,
                },
                None => gradcheck::check_all(inject_fault)?,
            };
            print!("{}", report.render());
            println!(
                "worst relative error {:.3e} (tolerance {:.0e}): {}",
                report.worst(),
                gradcheck::TOLERANCE,
                if report.passed() { "PASS" } else { "FAIL" }
            );
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_manifest(path: Option<&Path>) -> Result<Option<Manifest>> {
    path.map(|p| Manifest::load(p).with_context(|| format!("reading manifest {}", p.display())))
        .transpose()
}

fn print_diagnostics(report: &LoadReport) {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for e in &report.errors {
        eprintln!("error: {e}");
    }
}

fn load_split(dir: &Path, args: &SplitArgs) -> Result<Vec<HandPart>> {
    let manifest = load_manifest(args.manifest.as_deref())?;
    let report = load_corpus(dir, manifest.as_ref(), args.split)?;
    print_diagnostics(&report);
    Ok(report.into_corpus()?.parts)
}

fn ingest(dir: &Path, manifest: Option<&Path>) -> Result<ExitCode> {
    let manifest = load_manifest(manifest)?;
    let splits: &[Split] = match manifest {
        Some(_) => &[Split::Train, Split::Validation, Split::Test],
        None => &[Split::Train],
    };
    println!("split       pieces  files  parts  examples   notes");
    let mut failed = false;
    let mut total_parts = 0;
    for &split in splits {
        let report = load_corpus(dir, manifest.as_ref(), split)?;
        print_diagnostics(&report);
        failed |= !report.errors.is_empty();
        let c = &report.corpus;
        total_parts += c.parts.len();
        let name = if manifest.is_some() { split.name() } else { "all" };
        println!(
            "{name:<10} {:>7} {:>6} {:>6} {:>9} {:>7}",
            report.pieces,
            report.files,
            c.parts.len(),
            c.n_examples(),
            c.n_notes()
        );
    }
    if total_parts == 0 {
        eprintln!("error: no annotated parts found in {}", dir.display());
        failed = true;
    }
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn train(dir: &Path, manifest: Option<&Path>, config: Config, out: &Path, resume: bool) -> Result<()> {
    let manifest = load_manifest(manifest)?;
    let report = load_corpus(dir, manifest.as_ref(), Split::Train)?;
    print_diagnostics(&report);
    let train_parts = report.into_corpus()?.parts;
    let val_parts = match &manifest {
        Some(m) => {
            let report = load_corpus(dir, Some(m), Split::Validation)?;
            print_diagnostics(&report);
            if report.corpus.parts.is_empty() && report.errors.is_empty() {
                eprintln!("warning: empty validation split; no best-model checkpoints will be written");
                Vec::new()
            } else {
                report.into_corpus()?.parts
            }
        }
        None => {
            eprintln!("warning: no validation split without a manifest; no best-model checkpoints will be written");
            Vec::new()
        }
    };

    let last = out.join(LAST_CHECKPOINT);
    let mut trainer = if resume && last.exists() {
        let ckpt = Checkpoint::load(&last)?;
        eprintln!("resuming from {} at epoch {}", last.display(), ckpt.epoch);
        Trainer::resume(config, ckpt)?
    } else {
        if resume {
            eprintln!("warning: {} not found; starting fresh", last.display());
        }
        Trainer::new(config)?
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.txt"), trainer.config.to_text())?;
    eprintln!(
        "training {} on {} parts ({} examples), validating on {}",
        trainer.config.model.kind,
        train_parts.len(),
        train_parts.iter().map(|p| p.annotations.len()).sum::<usize>(),
        val_parts.len()
    );
    fit(&mut trainer, &train_parts, &val_parts, out, |r| {
        let val = match (r.val_m_gen, r.val_fourgram) {
            (Some(m), Some(f)) => format!(
                "  val M_gen {m:.2}  4-gram {f:.2}  hop {}  smear {}",
                r.val_hop.unwrap_or(0),
                r.val_smear.unwrap_or(0)
            ),
            _ => String::new(),
        };
        eprintln!("epoch {:>4}  ce {:.4}  rl {:+.4}{val}", r.epoch, r.ce_loss, r.rl_loss);
    })?;
    Ok(())
}

fn model_and_decoding(ckpt: &Path, decoding: &Decoding) -> Result<(Config, Model, ParamStore)> {
    let checkpoint = Checkpoint::load(ckpt).with_context(|| format!("reading {}", ckpt.display()))?;
    let (mut config, model, store) = checkpoint.model()?;
    if let Some(mode) = decoding.decode {
        config.decode = mode;
    }
    if let Some(width) = decoding.beam {
        if width == 0 {
            bail!("--beam must be at least 1");
        }
        config.beam_width = width;
    }
    Ok((config, model, store))
}

fn decode_with_checkpoint(ckpt: &Path, parts: &[HandPart], decoding: &Decoding) -> Result<Vec<Vec<Finger>>> {
    let (config, model, store) = model_and_decoding(ckpt, decoding)?;
    Ok(decode_parts(&model, &store, parts, config.decode, config.beam_width, decoding.seed)?)
}

fn predict(input: &Path, ckpt: &Path, out: &Path, decoding: &Decoding) -> Result<()> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let records = parse_pig_input(&text).with_context(|| input.display().to_string())?;
    if records.is_empty() {
        bail!("{} has no notes", input.display());
    }
    let parts = parts_from_records(&file_label(input), "input", &records)?;
    let preds = decode_with_checkpoint(ckpt, &parts, decoding)?;
    let filled = fill_fingers(&records, &parts, &preds)?;
    fs::write(out, serialize_records(&filled)).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("wrote {} fingered notes to {}", filled.len(), out.display());
    Ok(())
}

/// Predictions for each gold part, read from PIG files named like the gold
/// files. The notes must match exactly.
fn load_predictions(dir: &Path, gold: &[HandPart]) -> Result<Vec<Vec<Finger>>> {
    let report = load_corpus(dir, None, Split::Test)?;
    for e in &report.errors {
        eprintln!("error: {e}");
    }
    if !report.errors.is_empty() {
        bail!("{} prediction file(s) failed to load", report.errors.len());
    }
    let predicted = report.corpus.parts;
    if predicted.is_empty() {
        bail!("no predictions found in {}", dir.display());
    }
    gold.iter()
        .map(|g| {
            let p = predicted
                .iter()
                .find(|p| p.source_id == g.source_id)
                .with_context(|| format!("no prediction for {}", g.source_id))?;
            let aligned = p.notes.len() == g.notes.len()
                && p.notes
                    .iter()
                    .zip(&g.notes)
                    .all(|(a, b)| a.pitch == b.pitch && a.onset == b.onset && a.offset == b.offset);
            if !aligned {
                bail!(
                    "{}: predicted notes do not match the gold notes ({} vs {})",
                    g.source_id,
                    p.notes.len(),
                    g.notes.len()
                );
            }
            Ok(p.annotations[0].clone())
        })
        .collect()
}

fn report(
    label: &str,
    parts: &[HandPart],
    reports: &[MetricsReport],
    per_piece: bool,
    out: Option<&Path>,
    confusion: bool,
) -> Result<()> {
    let total = aggregate(reports)?;
    let mut rows: Vec<(&str, &MetricsReport)> = Vec::new();
    if per_piece {
        rows.extend(parts.iter().map(|p| p.source_id.as_str()).zip(reports));
    }
    rows.push((label, &total));
    print!("{}", MetricsReport::aligned(&rows));
    println!("{} parts, {} notes", total.n_parts, total.n_notes);
    if confusion {
        println!();
        print!("{}", total.confusion_table());
    }
    if let Some(path) = out {
        let mut text = String::new();
        for (i, (name, r)) in rows.iter().enumerate() {
            let table = r.delimited(name, '\t');
            text.push_str(if i == 0 { &table } else { table.lines().nth(1).unwrap_or("") });
            if i > 0 {
                text.push('\n');
            }
        }
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
