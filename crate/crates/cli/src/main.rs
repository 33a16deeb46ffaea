use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emocouple::synth::SynthSpec;
use emocouple_cli::pipeline::{self, SynthRequest};
use emocouple_cli::{report, Config, Failure, Layout};

#[derive(Parser)]
#[command(name = "emocouple", version, about = "Speech-to-motion coupling analysis")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Session config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-session parallelism; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Base seed for synthetic generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Print failures as one JSON object on stderr.
    #[arg(long, global = true)]
    error_json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Speech features and PCA models per session.
    Features,
    /// Activeness tracks and aligned session tables.
    Align,
    /// Activeness summaries per emotion and speech condition.
    Activeness,
    /// Affine speech-to-motion maps and the coupling report.
    Map,
    /// Repeated-measures ANOVA on the activeness summaries.
    Stats,
    /// Heatmap grids and SVG renderings.
    Report,
    /// Every analysis stage in order.
    Run,
    /// Write a synthetic corpus and a config that analyzes it.
    Synth {
        /// Synthetic spec (JSON); default is an eight-region corpus.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        sessions: usize,
        /// Session length in seconds, overriding the spec.
        #[arg(long)]
        duration: Option<f64>,
    },
}

fn load_config(global: &Global) -> Result<Config, Failure> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| Failure::validation("--config is required for this command"))?;
    Config::load(path)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let g = &cli.global;
    let layout = Layout::new(&g.out_dir);
    if let Command::Synth { spec, sessions, duration } = &cli.command {
        let spec = match spec {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::validation(format!("{}: {e}", p.display())))?;
                Some(
                    serde_json::from_str::<SynthSpec>(&text)
                        .map_err(|e| Failure::validation(format!("{}: {e}", p.display())))?,
                )
            }
            None => None,
        };
        let path = pipeline::synth(
            &SynthRequest {
                spec,
                sessions: *sessions,
                duration_s: *duration,
                seed: g.seed,
            },
            &layout,
        )?;
        println!("{}", path.display());
        return Ok(());
    }
    let config = load_config(g)?;
    match cli.command {
        Command::Features => pipeline::features(&config, &layout),
        Command::Align => pipeline::align(&config, &layout),
        Command::Activeness => pipeline::activeness(&config, &layout),
        Command::Map => pipeline::map(&config, &layout),
        Command::Stats => pipeline::stats(&config, &layout),
        Command::Report => report::report(&config, &layout),
        Command::Run => {
            pipeline::features(&config, &layout)?;
            pipeline::align(&config, &layout)?;
            pipeline::activeness(&config, &layout)?;
            pipeline::map(&config, &layout)?;
            pipeline::stats(&config, &layout)?;
            report::report(&config, &layout)
        }
        Command::Synth { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.global.jobs).build();
    let result = match pool {
        Ok(pool) => pool.install(|| execute(&cli)),
        Err(e) => Err(Failure::validation(format!("thread pool: {e}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if cli.global.error_json {
                eprintln!("{}", f.to_json());
            } else {
                eprintln!("error: {f}");
            }
            ExitCode::from(f.code() as u8)
        }
    }
}
