use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

/// Closed-form PixelHop++ feature learning with a least-squares classifier.
#[derive(Parser)]
#[command(name = "sslhop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on labeled images and write it to --out.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// IDX image file, or a directory of per-class PGM folders.
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the predicted class and scores of every image.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        images: PathBuf,
    },
    /// Predict, then print accuracy and the confusion matrix.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Print a model's configuration and channel tree.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
    /// Write the feature vectors of images to an SSLFEA01 file.
    Extract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn configure_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("SSLHOP_THREADS") {
        let n: usize = raw
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("SSLHOP_THREADS must be a positive integer, got `{raw}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match cli.command {
        Command::Train {
            config,
            images,
            labels,
            out: model,
        } => {
            eprintln!("sslhop {}", env!("CARGO_PKG_VERSION"));
            sslhop_cli::train(&config, &images, labels.as_deref(), &model, &mut out)?
        }
        Command::Predict { model, images } => sslhop_cli::predict(&model, &images, &mut out)?,
        Command::Evaluate {
            model,
            images,
            labels,
        } => sslhop_cli::evaluate(&model, &images, labels.as_deref(), &mut out)?,
        Command::Inspect { model } => sslhop_cli::inspect(&model, &mut out)?,
        Command::Extract {
            model,
            images,
            out: features,
        } => sslhop_cli::extract(&model, &images, &features)?,
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
