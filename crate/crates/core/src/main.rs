use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mgbvq::cli;

#[derive(Parser)]
#[command(name = "mgbvq", version, about = "Multi-grid vector quantization image codec")]
struct Args {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "MGBVQ_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model on every image in a directory.
    Train {
        corpus: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Encode a PPM/PGM/PNG image.
    Encode {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Decode a stream, optionally stopping at a coarser grid.
    Decode {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        max_grid: Option<u8>,
    },
    /// Print the bit allocation of a stream.
    Stats {
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Rate-distortion sweep over test images.
    Bench {
        test_dir: PathBuf,
        /// One or more models; each yields one RD point per image.
        #[arg(long, required = true, num_args = 1..)]
        model: Vec<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Leave timing columns empty so the CSV is reproducible.
        #[arg(long)]
        no_timing: bool,
    },
}

fn run(args: Args) -> mgbvq::Result<()> {
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    match args.cmd {
        Cmd::Train {
            corpus,
            config,
            model,
            seed,
        } => {
            let report = cli::cmd_train(&corpus, &config, &model, seed)?;
            for c in &report.cells {
                println!(
                    "C_{},{}: {} codewords, {} blocks, distortion {:.3}",
                    c.grid, c.exp, c.codewords, c.blocks, c.distortion
                );
            }
            println!("model written to {}", model.display());
        }
        Cmd::Encode { input, output, model } => {
            let s = cli::cmd_encode(&model, &input, &output)?;
            println!("{} bytes, {:.4} bpp, {:.2} dB", s.bytes, s.bpp, s.psnr);
        }
        Cmd::Decode {
            input,
            output,
            model,
            max_grid,
        } => {
            let img = cli::cmd_decode(&model, &input, &output, max_grid)?;
            println!("wrote {0}x{0} image to {1}", img.side(), output.display());
        }
        Cmd::Stats { input, model } => {
            print!("{}", cli::cmd_stats(&model, &input)?.to_table());
        }
        Cmd::Bench {
            test_dir,
            model,
            csv,
            no_timing,
        } => {
            let report = cli::cmd_bench(&model, &test_dir, csv.as_deref(), !no_timing)?;
            print!("{}", report.summary());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
