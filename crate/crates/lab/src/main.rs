use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dpl_lab::commands::{self, CorruptArgs, DenoiseArgs, EvalArgs, GenArgs, TrainArgs};
use dpl_lab::config::BenchConfig;
use dpl_lab::error::LabResult;

#[derive(Parser)]
#[command(name = "dpl", version, about = "Dual-path denoising lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic phantoms.
    Gen {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        ellipses: usize,
        #[arg(long, default_value_t = 0.05)]
        texture: f64,
    },
    /// Corrupt clean images with seeded noise.
    Corrupt {
        #[arg(long)]
        noise: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Noise parameter override, e.g. `var=0.01`.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        /// Keep values outside [0, 1].
        #[arg(long)]
        no_clip: bool,
    },
    /// Run a classical filter over images.
    Denoise {
        #[arg(long)]
        algo: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
    },
    /// Train the dual-path model or the U-Net baseline.
    Train {
        #[arg(long, default_value = "dpl")]
        model: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 200)]
        iters: usize,
        #[arg(long, default_value_t = 4)]
        batch: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = 16)]
        base: usize,
        #[arg(long, default_value_t = 50)]
        val_every: usize,
    },
    /// Score pairs (optionally through a trained model) into a metrics CSV.
    Eval {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run every configured (noise, algorithm) cell.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn key_values(raw: &[String]) -> LabResult<Vec<(String, String)>> {
    raw.iter().map(|s| commands::parse_key_value(s)).collect()
}

fn run(cmd: Command) -> LabResult<()> {
    match cmd {
        Command::Gen { count, size, seed, out, ellipses, texture } => {
            let recs = commands::cmd_gen(&GenArgs { count, size, seed, out, ellipses, texture })?;
            println!("generated {} phantoms", recs.len());
        }
        Command::Corrupt { noise, seed, input, out, params, no_clip } => {
            let params = key_values(&params)?;
            let recs = commands::cmd_corrupt(&CorruptArgs { noise, seed, input, out, params, clip: !no_clip })?;
            println!("corrupted {} images", recs.len());
        }
        Command::Denoise { algo, input, out, sigma, params } => {
            let params = key_values(&params)?;
            let o = commands::cmd_denoise(&DenoiseArgs { algo, input, out, sigma, params })?;
            let total: f64 = o.timings.iter().map(|t| t.seconds).sum();
            println!("denoised {} images in {:.3} s", o.outputs.len(), total);
        }
        Command::Train { model, data, iters, batch, lr, seed, out, depth, base, val_every } => {
            let s = commands::cmd_train(&TrainArgs {
                model,
                data,
                out,
                iters,
                batch,
                lr,
                seed,
                depth,
                base,
                val_every,
            })?;
            if let Some(l) = s.final_loss {
                println!("final loss l_o={:.6} (l_n={:.6} l_c={:.6} l_f={:.6})", l.l_o, l.l_n, l.l_c, l.l_f);
            }
            for r in s.validation.aggregates() {
                println!("{:>8} {:>9} psnr {:.3} dB ssim {:.4}", r.algorithm, r.noise, r.psnr_db, r.ssim);
            }
            println!("best iteration {}, checkpoint {}", s.best_iteration, s.checkpoint.display());
        }
        Command::Eval { pairs, csv, model } => {
            let report = commands::cmd_eval(&EvalArgs { pairs, csv, model })?;
            for r in report.aggregates() {
                println!("{:>10} {:>9} psnr {:.3} dB ssim {:.4}", r.algorithm, r.noise, r.psnr_db, r.ssim);
            }
        }
        Command::Bench { config, out, seed } => {
            let mut cfg = BenchConfig::from_file(&config)?;
            if let Some(out) = out {
                cfg.out = out;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let outcome = commands::cmd_bench(&cfg)?;
            print!("{}", commands::bench_table(&outcome, |p, _| format!("{p:.3}")));
            for (m, n, c) in &outcome.cells {
                if let commands::Cell::Failed(why) = c {
                    eprintln!("cell {m}/{n} failed: {why}");
                }
            }
            outcome.status()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
