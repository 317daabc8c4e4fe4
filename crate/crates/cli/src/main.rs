use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};

mod commands;
mod error;
mod tables;

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "isac", version, about = "Simulate, image and detect targets in OFDM sensing frames")]
struct Cli {
    /// Overrides the scenario seed. Accepted by every subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Cfar,
    Ml,
    Lr,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize one received frame from a scenario file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute range-velocity maps of a frame through a DCF bank.
    Rvmap {
        frame: PathBuf,
        /// Comma-separated normalized Doppler offsets; defaults to the three-filter bank.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        dcf: Option<Vec<f64>>,
        /// Defaults to `<frame>.rv.bin`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Design transmit and receive beamformers and print a JSON report.
    Beamform {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detect targets in a frame and write them as CSV.
    Detect {
        frame: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Cfar)]
        method: Method,
        #[arg(long, default_value_t = 1e-3)]
        pfa: f64,
        #[arg(long, default_value_t = 2)]
        guard: usize,
        #[arg(long, default_value_t = 8)]
        train: usize,
        /// DCF offset of the map searched by CFAR.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        dcf: f64,
        /// Confidence container for `--method lr`.
        #[arg(long)]
        conf: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        /// Maximum number of refined detections (`lr`) or search rounds (`ml`).
        #[arg(long, default_value_t = 10)]
        pmax: usize,
        /// Matching tolerance in cells for the summary against stored truth.
        #[arg(long, default_value_t = 1)]
        tol: usize,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a training dataset of RV maps with ground-truth channels.
    ExportDataset {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        dcf: Option<Vec<f64>>,
    },
    /// Score an exported dataset (ROC) or detection files (RMSE) as CSV.
    #[command(group(ArgGroup::new("mode").required(true).args(["roc", "rmse"])))]
    Eval {
        /// Dataset directory holding a manifest.
        #[arg(long)]
        roc: Option<PathBuf>,
        /// Score channel name; defaults to the zero-offset map.
        #[arg(long, requires = "roc")]
        channel: Option<String>,
        /// Directory of `<frame_id>.conf.bin` confidence maps to score instead.
        #[arg(long, requires = "roc")]
        conf_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 64, requires = "roc")]
        points: usize,
        #[arg(long, default_value_t = 1)]
        tol: usize,
        /// Detection CSV files written by `detect`.
        #[arg(long, num_args = 1.., requires = "truth")]
        rmse: Vec<PathBuf>,
        /// Frame containers holding the truth, one per detection file.
        #[arg(long, num_args = 1..)]
        truth: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render one channel of a container as a dB-scaled grayscale PNG and CSV grid.
    Plot {
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the PNG path with a `.csv` extension.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = -40.0, allow_hyphen_values = true)]
        dbfloor: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 1,
                _ => 2,
            })
        }
    }
}
