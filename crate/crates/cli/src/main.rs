//! `qmean`: run verifications, estimators, demos and figure exports.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage or input error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qmean::applications::DistPair;
use qmean::experiments::{
    self, bernoulli_detect_rows, distinguish_rows, estimate_rows, grover_rows, maintask_rows, pair_at_distance,
    quantile_rows, success_fraction, verify_instance, Check, CsvRow,
};
use qmean::maintask::{Route, Verdict};
use qmean::reductions::{QuantileMode, ReductionConfig};
use qmean::spectral::ket_one_distribution;
use qmean::{Error, PhasedGroverUnitary, RandVar};

#[derive(Parser)]
#[command(name = "qmean", version, about = "Quantum mean estimation simulator")]
struct Cli {
    /// Master seed; trial k uses stream k of this seed.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 200)]
    trials: u64,
    /// Instance JSON file ({"weights": [...], "values": [...]}) or a built-in
    /// name: fig-aa, fig-eigs, heavy-tail, bernoulli-P, grover-N, grover0-N,
    /// uniform-K, NAME+SHIFT.
    #[arg(long, global = true)]
    instance: Option<String>,
    /// Write rows here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Qpe,
    Elementary,
    Eleven,
}

impl From<Mode> for Route {
    fn from(m: Mode) -> Route {
        match m {
            Mode::Qpe => Route::Qpe,
            Mode::Elementary => Route::Elementary,
            Mode::Eleven => Route::Eleven,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum QuantileArg {
    Simulated,
    Oracle,
}

impl From<QuantileArg> for QuantileMode {
    fn from(q: QuantileArg) -> QuantileMode {
        match q {
            QuantileArg::Simulated => QuantileMode::Simulated,
            QuantileArg::Oracle => QuantileMode::Oracle,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Figure {
    /// Coefficients of U^t|1> and their barycenter.
    Trajectory,
    /// Mean height of the rotated lines and its roots.
    Eigenscan,
    /// Eigenphase distribution of |1>.
    Theta,
}

#[derive(Subcommand)]
enum Command {
    /// Check the spectral identities on built-in instances and --instance.
    Verify,
    /// Estimate the mean to sigma/n over many trials.
    Estimate {
        #[arg(long)]
        n: u64,
        #[arg(long, value_enum, default_value_t = QuantileArg::Simulated)]
        quantile: QuantileArg,
        #[arg(long, value_enum, default_value_t = Mode::Qpe)]
        mode: Mode,
    },
    /// Run the Main Task distinguisher.
    Maintask {
        #[arg(long)]
        eps: f64,
        #[arg(long, value_enum, default_value_t = Mode::Qpe)]
        mode: Mode,
    },
    /// Quantile cap B with Pr[|y| >= B] >= 1/n^2.
    Quantile {
        #[arg(long)]
        n: u64,
        #[arg(long, value_enum, default_value_t = QuantileArg::Simulated)]
        quantile: QuantileArg,
    },
    /// Distinguish two distributions via the Hellinger variable.
    Distinguish {
        /// Comma-separated weights of q.
        #[arg(long, requires = "r", conflicts_with = "hellinger")]
        q: Option<String>,
        /// Comma-separated weights of r.
        #[arg(long)]
        r: Option<String>,
        /// Use the two-point pair at this Hellinger distance instead.
        #[arg(long)]
        hellinger: Option<f64>,
        /// Also run the classical median-of-means baseline.
        #[arg(long)]
        classical: bool,
    },
    /// Grover detection over N items, quantum and classical.
    Grover {
        #[arg(long, default_value_t = 1024)]
        items: u64,
        #[arg(long, value_enum, default_value_t = Mode::Qpe)]
        mode: Mode,
        /// Use Bernoulli 1/N instead of the Grover variable.
        #[arg(long)]
        bernoulli: bool,
    },
    /// Export figure data as CSV.
    Figures {
        #[arg(long, value_enum, default_value_t = Figure::Trajectory)]
        kind: Figure,
        #[arg(long, default_value_t = 8)]
        steps: usize,
    },
}

enum Failure {
    Usage(String),
    Check,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn load_instance(name: &str) -> Result<RandVar, Failure> {
    let path = Path::new(name);
    if path.is_file() {
        let text = fs::read_to_string(path)?;
        return RandVar::from_json(&text).map_err(|e| Failure::Usage(format!("{name}: {e}")));
    }
    experiments::instance(name).map_err(|e| Failure::Usage(format!("{name}: {e}")))
}

fn instance_or(cli: &Cli, default: &str) -> Result<(String, RandVar), Failure> {
    let name = cli.instance.clone().unwrap_or_else(|| default.to_string());
    let rv = load_instance(&name)?;
    Ok((name, rv))
}

fn sink(cli: &Cli) -> Result<Box<dyn Write>, Failure> {
    Ok(match &cli.out {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

fn emit<T: CsvRow + Serialize>(cli: &Cli, rows: &[T]) -> Result<(), Failure> {
    let mut out = sink(cli)?;
    match cli.format {
        Format::Csv => experiments::write_csv(rows, &mut out)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, rows).map_err(|e| Failure::Usage(e.to_string()))?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn emit_text(cli: &Cli, text: &str) -> Result<(), Failure> {
    let mut out = sink(cli)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn parse_weights(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|w| w.trim().parse::<f64>().map_err(|_| Failure::Usage(format!("bad weight {w:?}"))))
        .collect()
}

fn fraction(rows: usize, hits: usize) -> f64 {
    hits as f64 / rows.max(1) as f64
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Verify => {
            let mut checks: Vec<Check> = experiments::verify_builtin(cli.seed)?;
            if let Some(name) = &cli.instance {
                checks.extend(verify_instance(name, &load_instance(name)?, cli.seed)?);
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            match cli.format {
                Format::Json => emit_text(
                    cli,
                    &(serde_json::to_string_pretty(&checks).map_err(|e| Failure::Usage(e.to_string()))? + "\n"),
                )?,
                Format::Csv => {
                    let mut text = String::from("status,check,detail\n");
                    for c in &checks {
                        text.push_str(&format!("{},{},{}\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail));
                    }
                    emit_text(cli, &text)?;
                }
            }
            eprintln!("{} of {} checks passed", checks.len() - failed, checks.len());
            if failed > 0 {
                return Err(Failure::Check);
            }
        }
        Command::Estimate { n, quantile, mode } => {
            if *n == 0 {
                return Err(Failure::Usage("--n must be positive".into()));
            }
            let (name, rv) = instance_or(cli, "fig-aa")?;
            let cfg = ReductionConfig { route: (*mode).into(), quantile: (*quantile).into(), ..ReductionConfig::default() };
            let rows = estimate_rows(&rv, *n, &cfg, cli.trials, cli.seed)?;
            emit(cli, &rows)?;
            eprintln!("{name}: success fraction {:.3} over {} trials", success_fraction(&rows), rows.len());
        }
        Command::Maintask { eps, mode } => {
            let (name, rv) = instance_or(cli, "fig-aa")?;
            let rows = maintask_rows(&rv, *eps, (*mode).into(), cli.trials, cli.seed)?;
            emit(cli, &rows)?;
            let small = rows.iter().filter(|r| r.verdict == Verdict::Small).count();
            eprintln!("{name}: small {:.3}, large {:.3}", fraction(rows.len(), small), fraction(rows.len(), rows.len() - small));
        }
        Command::Quantile { n, quantile } => {
            if *n < qmean::reductions::N0 {
                return Err(Failure::Usage(format!("--n must be at least {}", qmean::reductions::N0)));
            }
            let (name, rv) = instance_or(cli, "heavy-tail")?;
            let rows = quantile_rows(&rv, *n, (*quantile).into(), cli.trials, cli.seed)?;
            emit(cli, &rows)?;
            let valid = rows.iter().filter(|r| r.valid).count();
            eprintln!("{name}: both tail conditions hold on {:.3} of runs", fraction(rows.len(), valid));
        }
        Command::Distinguish { q, r, hellinger, classical } => {
            let pair = match (q, r, hellinger) {
                (Some(q), Some(r), None) => DistPair::new(&parse_weights(q)?, &parse_weights(r)?)?,
                (None, None, Some(h)) if *h > 0.0 && *h <= 2f64.sqrt() => pair_at_distance(*h)?,
                _ => return Err(Failure::Usage("give --q and --r, or --hellinger in (0, sqrt 2]".into())),
            };
            let rows = distinguish_rows(&pair, cli.trials, cli.seed, *classical)?;
            emit(cli, &rows)?;
            for method in ["quantum", "classical"] {
                let mine: Vec<_> = rows.iter().filter(|x| x.method == method).collect();
                if !mine.is_empty() {
                    let ok = mine.iter().filter(|x| x.truth == x.verdict).count();
                    eprintln!("{method}: correct {:.3} at H = {:.4}", fraction(mine.len(), ok), pair.hellinger());
                }
            }
        }
        Command::Grover { items, mode, bernoulli } => {
            let rows = if *bernoulli {
                bernoulli_detect_rows(*items, cli.trials, cli.seed)?
            } else {
                grover_rows(*items, (*mode).into(), cli.trials, cli.seed)?
            };
            emit(cli, &rows)?;
            for method in ["quantum", "classical"] {
                let mine: Vec<_> = rows.iter().filter(|x| x.method == method).collect();
                let ok = mine.iter().filter(|x| x.truth == x.found).count();
                eprintln!("{method}: correct {:.3}", fraction(mine.len(), ok));
            }
        }
        Command::Figures { kind, steps } => {
            if cli.format == Format::Json {
                return Err(Failure::Usage("figures are exported as CSV only".into()));
            }
            let default = match kind {
                Figure::Eigenscan => "fig-eigs",
                _ => "fig-aa",
            };
            let (_, rv) = instance_or(cli, default)?;
            let text = match kind {
                Figure::Trajectory => experiments::trajectory_csv(&rv, *steps)?,
                Figure::Eigenscan => experiments::eigenscan_csv(&rv, steps.max(&1) * 64)?,
                Figure::Theta => {
                    let mut buf = Vec::new();
                    ket_one_distribution(&PhasedGroverUnitary::new(&rv)?)?.write_csv(&mut buf)?;
                    String::from_utf8(buf).expect("ascii csv")
                }
            };
            emit_text(cli, &text)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
