use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hqam_mimo::cli::{self, bench, BenchConfig, CliError, RunManifest};

#[derive(Parser)]
#[command(
    name = "hqam-mimo",
    version,
    about = "MIMO link simulator for hierarchical QAM receivers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an Eb/N0 sweep and write the result table as CSV.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// One of fig2, fig3, fig4, fig5.
        #[arg(long)]
        preset: Option<String>,
        /// Series within the preset (defaults to the first one).
        #[arg(long)]
        series: Option<String>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Eb/N0 list `a,b,c` or range `start:step:stop` in dB.
        #[arg(long)]
        ebn0: Option<String>,
        #[arg(long)]
        max_frames: Option<u64>,
    },
    /// Compare per-vector cost of joint ML and the two-stage receiver.
    Bench {
        /// Transmit antenna counts, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        nt: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        vectors: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the resolved configuration in config-file form.
    ShowConfig {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        series: Option<String>,
    },
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            config,
            preset,
            series,
            out,
            seed,
            workers,
            ebn0,
            max_frames,
        } => cli::run(&RunManifest {
            config,
            preset,
            series,
            out,
            seed,
            workers,
            ebn0_db: ebn0,
            max_frames,
        }),
        Command::Bench { nt, vectors, seed } => {
            let rows = bench::bench_detectors(&BenchConfig {
                nts: nt,
                vectors,
                seed,
                ..Default::default()
            })
            .map_err(|e| CliError::Config(e.to_string()))?;
            print!("{}", bench::format_report(&rows));
            Ok(())
        }
        Command::ShowConfig {
            config,
            preset,
            series,
        } => {
            let cfg = RunManifest {
                config,
                preset,
                series,
                ..Default::default()
            }
            .resolve()?;
            print!("{}", cli::config_to_text(&cfg));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let args = match Cli::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(args.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
