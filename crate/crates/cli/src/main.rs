use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use secest_core::decoder::{correctability_report, CorrectabilityReport, DEFAULT_SUPPORT_EPS};
use secest_core::lti::{rows_of, SystemFile};
use secest_core::scenario::{design_controller, emit_outputs, run_scenario, DesignSummary};
use secest_core::{EstimatorMode, LtiSystem, ScenarioConfig};

#[derive(Parser, Debug)]
#[command(
    name = "secest",
    version,
    about = "Secure state estimation under sparse sensor attacks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario and write the time series, summary and attack-error grids.
    Run {
        config: PathBuf,
        /// Derive all random streams from this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides `out_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Estimator modes to run (kf, se, kf_se); repeat or comma-separate.
        #[arg(long, value_delimiter = ',')]
        mode: Vec<EstimatorMode>,
    },
    /// Print the eigenvector-support correctability report of a system file.
    Analyze {
        system: PathBuf,
        /// Also print the certified window for this many attacked sensors.
        #[arg(long)]
        q: Option<usize>,
    },
    /// Design a support-aware state feedback and save the gain and closed loop.
    Design {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    /// Bad input: unreadable or invalid config, malformed system file.
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
    fn validation(e: impl std::fmt::Display) -> Self {
        Failure::Validation(e.to_string())
    }
}

const DEFAULT_OUT: &str = "out";

fn load_config(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, Failure> {
    let mut config = ScenarioConfig::from_file(path).map_err(Failure::validation)?;
    if let Some(seed) = seed {
        config = config.with_seed(seed);
    }
    config.validate().map_err(Failure::validation)?;
    Ok(config)
}

fn out_dir(flag: Option<PathBuf>, config: &ScenarioConfig) -> PathBuf {
    flag.or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn run(
    config: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    modes: Vec<EstimatorMode>,
) -> Result<(), Failure> {
    let mut config = load_config(&config, seed)?;
    if !modes.is_empty() {
        config.modes = modes;
        config.validate().map_err(Failure::validation)?;
    }
    let dir = out_dir(out, &config);
    let report = run_scenario(&config).map_err(Failure::runtime)?;
    let files = emit_outputs(&report, &dir).map_err(Failure::runtime)?;
    let summary = report.summary();
    println!(
        "scenario {:?}, sensors {:?}, horizon {}",
        summary.scenario, summary.selection, summary.horizon
    );
    for m in &summary.metrics {
        println!(
            "  {:<6} state RMSE {:.6}  path error {:.6}  decoded {}  decoder failures {}",
            m.mode.to_string(),
            m.state_rmse,
            m.path_error,
            m.decoded_steps,
            m.decoder_failures
        );
    }
    println!("wrote {}", files.summary.display());
    Ok(())
}

fn print_report(report: &CorrectabilityReport) {
    let eig: Vec<String> = report
        .eigenvalues
        .iter()
        .map(|l| {
            if l.im == 0.0 {
                format!("{:.6}", l.re)
            } else {
                format!("{:.6}{:+.6}i", l.re, l.im)
            }
        })
        .collect();
    println!("n = {}, p = {}", report.n, report.p);
    println!("eigenvalues: {}", eig.join(", "));
    println!("supports: {:?}", report.supports);
    println!("s_min = {}", report.s_min);
    println!("q_max = {}", report.q_max);
    match report.t_star {
        Some(t) => println!("T* = {t}"),
        None => println!("T* = none"),
    }
    let c = report.conditions;
    println!(
        "conditions: distinct real positive eigenvalues {}, C full row rank {}, observable {}",
        c.distinct_real_positive_eigenvalues, c.c_full_rank, c.observable
    );
    if report.is_advisory() {
        println!("advisory: hypotheses not met, q_max is not certified");
    }
}

fn analyze(path: PathBuf, q: Option<usize>) -> Result<(), Failure> {
    let sys = LtiSystem::from_file(&path).map_err(Failure::validation)?;
    let report = correctability_report(&sys, DEFAULT_SUPPORT_EPS);
    print_report(&report);
    if let Some(q) = q {
        match report.min_window_length(q) {
            Ok(t) => println!("window for q = {q}: T = {t}"),
            Err(e) => println!("window for q = {q}: {e}"),
        }
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct GainFile {
    selection: Vec<usize>,
    #[serde(rename = "G")]
    g: Vec<Vec<f64>>,
    design: DesignSummary,
}

fn design(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let config = load_config(&config, seed)?;
    let dir = out_dir(out, &config);
    let setup = design_controller(&config).map_err(Failure::runtime)?;
    let d = &setup.design;
    std::fs::create_dir_all(&dir)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;

    let gain = GainFile {
        selection: setup.selection.indices().to_vec(),
        g: rows_of(&d.g),
        design: DesignSummary::new(d),
    };
    let gain_path = dir.join("gain.json");
    write(
        &gain_path,
        &serde_json::to_string_pretty(&gain).map_err(Failure::runtime)?,
    )?;

    let closed = LtiSystem::new(d.a_cl.clone(), setup.model.b.clone(), setup.selection.c())
        .map_err(Failure::runtime)?;
    let system_path = dir.join("closed_loop.toml");
    write(
        &system_path,
        &toml::to_string(&SystemFile::from_system(&closed)).map_err(Failure::runtime)?,
    )?;

    println!(
        "{:?} design after {} tries, spectral radius {:.6}",
        d.kind,
        d.tries,
        d.spectral_radius()
    );
    print_report(&d.report);
    println!(
        "wrote {} and {}",
        gain_path.display(),
        system_path.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            mode,
        } => run(config, seed, out, mode),
        Command::Analyze { system, q } => analyze(system, q),
        Command::Design { config, seed, out } => design(config, seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
