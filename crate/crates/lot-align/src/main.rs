//! Command-line front end. All logic lives in the library; this binary
//! parses arguments, dispatches, and maps errors to exit codes
//! (0 success, 1 validation error, 2 runtime failure).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};

use lot_align::error::{Error, Result};
use lot_align::gw::{feature_plan, labeled_gw, Direction, GwConfig};
use lot_align::harness::{
    emit_report, emit_run_info, evaluate_checkpoint, run_protocol, train_single_fold, worker_cap,
    ExperimentConfig, Protocol, ReportFormat, SyntheticSpec,
};
use lot_align::io;
use lot_align::ot::SinkhornConfig;
use lot_align::proto::{match_distribution, soft_prototypes, EmbeddingBatch, Modality};

#[derive(Parser)]
#[command(
    name = "lot-align",
    version,
    about = "Label-constrained optimal transport alignment and asymmetric fusion experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (matrix files + label file).
    Synth {
        /// Generator spec (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the class-wise plans, feature plan, and prototypes for
    /// embedding files.
    Align {
        /// Fundus embedding matrix file.
        #[arg(long = "embeds-f")]
        embeds_f: PathBuf,
        /// OCT embedding matrix file.
        #[arg(long = "embeds-o")]
        embeds_o: PathBuf,
        /// Label file (one integer per line).
        #[arg(long)]
        labels: PathBuf,
        /// Entropy regularization (relative to the normalized cost).
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on fold 0 of the configured experiment; write a checkpoint.
    Train {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on its held-out fold under a protocol.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// complete | inter_missing | proportional_missing
        #[arg(long)]
        protocol: String,
        /// Missing ratio (proportional_missing only).
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a proportional-missing ratio sweep; emit report + SVG.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated ratio grid, overriding the config.
        #[arg(long)]
        ratios: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let progress = |msg: &str| {
        if !cli.quiet {
            eprintln!("{msg}");
        }
    };
    match &cli.command {
        Command::Synth { config, out } => {
            let mut spec: SyntheticSpec = serde_json::from_str(&std::fs::read_to_string(config)?)
                .map_err(|e| Error::InvalidConfig(format!("spec parse: {e}")))?;
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let dataset = lot_align::harness::synth_dataset(&spec)?;
            dataset.save(out)?;
            progress(&format!(
                "wrote {} samples ({} classes) to {}",
                dataset.len(),
                dataset.num_classes(),
                out.display()
            ));
            Ok(())
        }
        Command::Align {
            embeds_f,
            embeds_o,
            labels,
            eps,
            out,
        } => cmd_align(embeds_f, embeds_o, labels, *eps, out, &progress),
        Command::Train { config, out } => {
            let config = load_config(config, cli.seed)?;
            let trained = train_single_fold(&config, 0)?;
            std::fs::create_dir_all(out)?;
            let ckpt = out.join("model.ckpt");
            io::save_checkpoint(
                &ckpt,
                &trained.model,
                config.seed,
                0,
                Some(serde_json::to_value(&config)?),
            )?;
            std::fs::write(
                out.join("train_log.json"),
                serde_json::to_string_pretty(&trained.records)?,
            )?;
            progress(&format!(
                "trained {} steps (final loss {:.6}); checkpoint at {}",
                trained.records.len(),
                trained
                    .records
                    .last()
                    .map(|r| r.components.total)
                    .unwrap_or(f64::NAN),
                ckpt.display()
            ));
            Ok(())
        }
        Command::Eval {
            checkpoint,
            protocol,
            ratio,
            out,
        } => {
            let protocol = Protocol::parse(protocol)?;
            let (model, header) = io::load_checkpoint(checkpoint)?;
            let experiment = header.experiment.ok_or_else(|| {
                Error::InvalidConfig(
                    "checkpoint carries no experiment config; cannot rebuild the split".into(),
                )
            })?;
            let config: ExperimentConfig = serde_json::from_value(experiment)
                .map_err(|e| Error::InvalidConfig(format!("checkpoint config: {e}")))?;
            let report = evaluate_checkpoint(&model, &config, header.fold, protocol, *ratio)?;
            let written = emit_report(&report, &[ReportFormat::Json, ReportFormat::Csv], out)?;
            emit_run_info(&report, worker_cap(), out)?;
            progress(&format!("wrote {} report files to {}", written.len(), out.display()));
            Ok(())
        }
        Command::Sweep { config, ratios, out } => {
            let mut config = load_config(config, cli.seed)?;
            if config.protocol != Protocol::ProportionalMissing {
                return Err(Error::InvalidConfig(
                    "sweep requires a proportional_missing config".into(),
                ));
            }
            if let Some(list) = ratios {
                let grid: Vec<f64> = list
                    .split(',')
                    .map(|tok| {
                        tok.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::InvalidConfig(format!("bad ratio {tok:?}")))
                    })
                    .collect::<Result<_>>()?;
                config.ratio = None;
                config.ratios = Some(grid);
            }
            config.validate()?;
            progress(&format!(
                "sweeping {} ratios x {} folds (workers capped at {})",
                config.ratios.as_ref().map(Vec::len).unwrap_or(1),
                config.folds,
                worker_cap()
            ));
            let report = run_protocol(&config)?;
            let written = emit_report(
                &report,
                &[ReportFormat::Json, ReportFormat::Csv, ReportFormat::Svg],
                out,
            )?;
            emit_run_info(&report, worker_cap(), out)?;
            progress(&format!(
                "wrote {} files to {} in {:.1}s",
                written.len() + 1,
                out.display(),
                report.runtime_seconds
            ));
            Ok(())
        }
    }
}

fn load_config(path: &Path, seed_override: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    Ok(config)
}

fn cmd_align(
    embeds_f: &Path,
    embeds_o: &Path,
    labels: &Path,
    eps: f64,
    out: &Path,
    progress: &dyn Fn(&str),
) -> Result<()> {
    let e_f = io::read_matrix(embeds_f)?;
    let e_o = io::read_matrix(embeds_o)?;
    let y = io::read_labels(labels)?;
    let batch = EmbeddingBatch::new(e_f.clone(), e_o.clone(), y)?;
    let gw = GwConfig {
        epsilon: eps,
        inner: SinkhornConfig {
            epsilon: eps,
            ..SinkhornConfig::default()
        },
        ..GwConfig::default()
    };

    std::fs::create_dir_all(out)?;
    let t_fo = labeled_gw(&batch, Direction::FundusToOct, &gw)?;
    io::save_plan(&out.join("t_c_fo.txt"), &t_fo)?;
    let t_of = t_fo.transposed();
    io::save_plan(&out.join("t_c_of.txt"), &t_of)?;

    let t_v = feature_plan(&batch, &t_of, &gw)?;
    io::save_feature_plan(&out.join("t_v.txt"), &t_v, &io::pair_digest(&e_f, &e_o)?)?;

    let p_fo = match_distribution(&t_fo)?;
    let proto_o = soft_prototypes(&p_fo, &e_o, Modality::Oct)?;
    io::write_matrix(&out.join("proto_o.txt"), proto_o.matrix())?;
    let p_of = match_distribution(&t_of)?;
    let proto_f = soft_prototypes(&p_of, &e_f, Modality::Fundus)?;
    io::write_matrix(&out.join("proto_f.txt"), proto_f.matrix())?;

    progress(&format!(
        "aligned {} samples (residual {:.2e}, converged: {}); wrote plans and prototypes to {}",
        batch.len(),
        t_fo.info().residual,
        t_fo.info().converged,
        out.display()
    ));
    Ok(())
}

// keep the derive in sync with --help output in tests
#[allow(dead_code)]
fn debug_assert_cli() {
    Cli::command().debug_assert();
}
