use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use guilget::commands::{cmd_eval, cmd_generate, cmd_synth, cmd_train};
use guilget::server;
use guilget_core::metrics::GroupBy;
use guilget_core::model::{GenerateOptions, Model};

#[derive(Parser)]
#[command(
    name = "guilget",
    version,
    about = "Generate GUI layouts from arrangement graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sample layouts for a graph; writes layout_{i}.json and layout_{i}.svg.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        ag: PathBuf,
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long, default_value_t = 0.0)]
        temperature: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Score generated layouts on a dataset's test split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// none, category or complexity.
        #[arg(long, default_value = "none")]
        group_by: GroupBy,
        #[arg(long, default_value_t = 0.5)]
        temperature: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic dataset directory.
    Synth {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API (and optionally a static UI).
    Serve {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config } => {
            cmd_train(&config)?;
        }
        Command::Generate {
            ckpt,
            ag,
            samples,
            temperature,
            seed,
            out,
        } => {
            let opts = GenerateOptions {
                samples,
                temperature,
                seed,
            };
            for p in cmd_generate(&ckpt, &ag, &opts, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Eval {
            ckpt,
            data,
            group_by,
            temperature,
            seed,
        } => {
            print!("{}", cmd_eval(&ckpt, &data, group_by, temperature, seed)?);
        }
        Command::Synth { samples, seed, out } => {
            let n = cmd_synth(samples, seed, &out)?;
            println!("wrote {n} screens to {}", out.display());
        }
        Command::Serve {
            ckpt,
            port,
            static_dir,
        } => {
            let model = Model::load(&ckpt)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(model, port, static_dir))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
