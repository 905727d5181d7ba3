use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use polariton::config::Scenario;
use polariton::field_stats::{snapshots_to_csv, FockFrame};
use polariton::runner::{
    anharmonicity_sweep, build_model, oracle_check, run_scenario, spectrum_report, table2_report, ORACLE_BASIS,
    ORACLE_WINDOW_FS,
};

#[derive(Parser)]
#[command(name = "polariton", version, about = "Cavity field statistics of a vibration under frequency modulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its time series
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Record both the instantaneous and the static Fock frame
        #[arg(long)]
        both_frames: bool,
    },
    /// The eight modulation cases, computed against the reference values
    Table2 {
        #[arg(long, default_value = "out/table2")]
        out: PathBuf,
    },
    /// Ground and polariton energies from the grid and the dense oracle
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated coupling ratios (default: the config's lambda_g)
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
    },
    /// VA, VB and VC with both dipoles and both modulation signs
    SweepAnharmonicity {
        #[arg(long, default_value = "out/sweep")]
        out: PathBuf,
    },
    /// Grid eigenstates and short-time dynamics against the dense oracle
    OracleCheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Rebuild the statistics CSV from ψ snapshot files, in the given order
    Snapshots {
        #[arg(long)]
        config: PathBuf,
        /// Fock frame (default: the config's)
        #[arg(long)]
        frame: Option<FockFrame>,
        /// Output CSV (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn load(path: &Path) -> Result<Scenario> {
    Scenario::from_file(path).with_context(|| format!("reading {}", path.display()))
}

/// Runs the command; `Ok(false)` means a health gate failed.
fn execute(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Run { config, out, both_frames } => {
            let s = load(&config)?;
            let frames = if both_frames { vec![FockFrame::Instantaneous, FockFrame::Static] } else { vec![s.frame] };
            let outcome = run_scenario(&s, &frames, Some(&out))?;
            print!("{}", outcome.summary_text());
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            Ok(outcome.passed())
        }
        Command::Table2 { out } => {
            let report = table2_report(&Scenario::default(), Some(&out))?;
            print!("{}", report.render());
            Ok(report.healthy())
        }
        Command::Spectrum { config, lambda } => {
            let s = load(&config)?;
            let lambdas = if lambda.is_empty() { vec![s.lambda_g] } else { lambda };
            let report = spectrum_report(&s, &lambdas, ORACLE_BASIS)?;
            print!("{}", report.render());
            Ok(true)
        }
        Command::SweepAnharmonicity { out } => {
            let report = anharmonicity_sweep(&Scenario::default(), Some(&out))?;
            print!("{}", report.render());
            Ok(report.healthy())
        }
        Command::OracleCheck { config } => {
            let check = oracle_check(&load(&config)?, ORACLE_BASIS, ORACLE_WINDOW_FS)?;
            print!("{}", check.render());
            Ok(check.passes())
        }
        Command::Snapshots { config, frame, out, files } => {
            let s = load(&config)?;
            let (model, _) = build_model(&s)?;
            let readers = files
                .iter()
                .map(|p| File::open(p).map(BufReader::new).with_context(|| format!("opening {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let frame = frame.unwrap_or(s.frame);
            let rows = match &out {
                Some(p) => {
                    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                        fs::create_dir_all(dir)?;
                    }
                    let mut w = BufWriter::new(File::create(p)?);
                    let rows = snapshots_to_csv(readers, &model.modulation, frame, s.n_max, &mut w)?;
                    w.flush()?;
                    rows
                }
                None => snapshots_to_csv(readers, &model.modulation, frame, s.n_max, io::stdout().lock())?,
            };
            if rows.is_empty() {
                bail!("no snapshots read");
            }
            Ok(rows.iter().all(|r| r.is_healthy()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("health gate failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
