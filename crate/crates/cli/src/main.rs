//! Configuration-driven front end: generate candidates, run a design
//! strategy, run the benchmark harness, or export results to plot-ready
//! files. All output is deterministic for a fixed (config, seed) pair when
//! the mock simulator is selected.

use clap::{Parser, Subcommand, ValueEnum};
use patchforge::geometry::{decode, generate_candidate, generation_bounds, DesignRecord};
use patchforge::objectives::classifier_score;
use patchforge::pipeline::{
    benchmark, candidate_seed, iteration_log_csv, run_variable_fidelity, PipelineError, RunConfig,
    RunResult,
};
use patchforge::simulator::external::{to_touchstone, AdapterConfig, ExternalSimulator};
use patchforge::{Fidelity, MockSimulator, Response, Simulator};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "patchforge", version, about = "Planar antenna synthesis toolkit")]
struct Cli {
    /// Run configuration file (TOML, mirrors the library RunConfig).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = "patchforge-out")]
    out: PathBuf,
    /// Override the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Simulation backend.
    #[arg(long, global = true, value_enum, default_value_t = SimChoice::Mock)]
    simulator: SimChoice,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SimChoice {
    Mock,
    External,
}

#[derive(Subcommand)]
enum Command {
    /// Generate candidate designs and their low-fidelity classifier scores.
    Generate {
        /// Number of candidates; defaults to the configured n_candidates.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run the configured design strategy end to end.
    Optimize,
    /// Run the six-method benchmark and write its table as CSV.
    Benchmark,
    /// Convert a result file to a polygon CSV and a Touchstone response.
    Export {
        /// RunResult JSON produced by `optimize`; defaults to
        /// `<out>/result.json`.
        #[arg(long)]
        result: Option<PathBuf>,
    },
}

/// TOML document: RunConfig fields at the top level plus an optional
/// `[external]` table holding the solver adapter settings.
#[derive(Deserialize)]
struct FileConfig {
    #[serde(flatten)]
    run: RunConfig,
    external: Option<AdapterConfig>,
}

enum CliError {
    /// Bad configuration: exit code 2, message names the offending field.
    Config(String),
    /// Runtime failure: exit code 1.
    Run(String),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config { .. } => CliError::Config(e.to_string()),
            other => CliError::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(format!("i/o error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<FileConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("missing required flag `--config`".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut file: FileConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(seed) = cli.seed {
        file.run.seed = seed;
    }
    if let Some(workers) = cli.workers {
        file.run.parallel_workers = workers;
    }
    file.run.validate()?;
    if cli.simulator == SimChoice::External && file.external.is_none() {
        return Err(CliError::Config(
            "configuration error at `external`: `--simulator external` needs an [external] table"
                .into(),
        ));
    }
    Ok(file)
}

fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    let file = load_config(cli)?;
    fs::create_dir_all(&cli.out)?;
    let sim: Box<dyn Simulator> = match cli.simulator {
        SimChoice::Mock => Box::new(MockSimulator::default()),
        SimChoice::External => Box::new(ExternalSimulator::new(
            file.external.clone().expect("validated above"),
        )),
    };
    match &cli.command {
        Command::Generate { n } => cmd_generate(&file.run, sim.as_ref(), *n, &cli.out),
        Command::Optimize => cmd_optimize(&file.run, sim.as_ref(), &cli.out),
        Command::Benchmark => cmd_benchmark(&file.run, sim.as_ref(), &cli.out),
        Command::Export { result } => {
            let path = result
                .clone()
                .unwrap_or_else(|| cli.out.join("result.json"));
            cmd_export(&path, &cli.out)
        }
    }
}

#[derive(Serialize)]
struct CandidateRow {
    index: usize,
    design: Option<DesignRecord>,
    /// Low-fidelity in-band classifier score, dB; absent when generation or
    /// simulation failed for this seed.
    score: Option<f64>,
}

fn cmd_generate(
    cfg: &RunConfig,
    sim: &dyn Simulator,
    n: Option<usize>,
    out: &Path,
) -> Result<ExitCode, CliError> {
    let n = n.unwrap_or(cfg.n_candidates);
    let gen_bounds = generation_bounds(cfg.l, cfg.c_low, cfg.c_high);
    let sweep = cfg.narrow_sweep();
    let mut rows = Vec::with_capacity(n);
    for index in 0..n {
        let seed = candidate_seed(cfg.seed, index);
        let (design, score) = match generate_candidate(cfg.l, seed, &gen_bounds) {
            Ok(x) => {
                let score = sim
                    .simulate(&x, &sweep, Fidelity::Low)
                    .ok()
                    .and_then(|r| classifier_score(&r, &cfg.band).ok());
                (Some(DesignRecord::from(&x)), score)
            }
            Err(_) => (None, None),
        };
        rows.push(CandidateRow {
            index,
            design,
            score,
        });
    }
    let path = out.join("candidates.json");
    fs::write(&path, serde_json::to_string_pretty(&rows).expect("serializable"))?;
    println!("wrote {} candidates to {}", rows.len(), path.display());
    Ok(ExitCode::SUCCESS)
}

fn response_csv(r: &Response) -> String {
    let mut out = String::from("freq_ghz,s11_db\n");
    for (f, s) in r.freqs.iter().zip(&r.levels) {
        out.push_str(&format!("{f:.6},{s:.6}\n"));
    }
    out
}

fn cmd_optimize(
    cfg: &RunConfig,
    sim: &dyn Simulator,
    out: &Path,
) -> Result<ExitCode, CliError> {
    let result = run_variable_fidelity(cfg, sim)?;
    fs::write(
        out.join("result.json"),
        serde_json::to_string_pretty(&result).expect("serializable"),
    )?;
    let low_rate = sim.ledger().t_low / sim.ledger().t_high;
    fs::write(
        out.join("low_tr.csv"),
        iteration_log_csv(&result.low_tr_log, low_rate),
    )?;
    if !result.low_tr_stage2_log.is_empty() {
        fs::write(
            out.join("low_tr_stage2.csv"),
            iteration_log_csv(&result.low_tr_stage2_log, low_rate),
        )?;
    }
    fs::write(
        out.join("high_tr.csv"),
        iteration_log_csv(&result.high_tr_log, 1.0),
    )?;
    fs::write(out.join("response_x0.csv"), response_csv(&result.response_x0))?;
    fs::write(
        out.join("response_x_c_star.csv"),
        response_csv(&result.response_x_c_star),
    )?;
    fs::write(
        out.join("response_x_f_star.csv"),
        response_csv(&result.response_x_f_star),
    )?;
    let mut overlay = String::from("kind,freq_ghz,level_db\n");
    let fs_final = &result.features_x_f_star;
    for (kind, points) in [
        ("minimum", &fs_final.minima),
        ("maximum", &fs_final.maxima),
        ("crossing", &fs_final.crossings),
    ] {
        for p in points {
            overlay.push_str(&format!("{kind},{:.6},{:.6}\n", p.freq, p.level));
        }
    }
    fs::write(out.join("features_x_f_star.csv"), overlay)?;
    println!(
        "in-band max {:.2} dB, cost {:.1} R_f-eq, spec {}",
        result.in_band_max_db,
        result.cost.total_equivalent,
        if result.spec_met { "met" } else { "violated" }
    );
    Ok(if result.spec_met {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_benchmark(
    cfg: &RunConfig,
    sim: &dyn Simulator,
    out: &Path,
) -> Result<ExitCode, CliError> {
    let table = benchmark(cfg, sim)?;
    let path = out.join("benchmark.csv");
    fs::write(&path, table.to_csv())?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_export(result_path: &Path, out: &Path) -> Result<ExitCode, CliError> {
    let text = fs::read_to_string(result_path)
        .map_err(|e| CliError::Run(format!("cannot read {}: {e}", result_path.display())))?;
    let result: RunResult = serde_json::from_str(&text)
        .map_err(|e| CliError::Run(format!("{}: {e}", result_path.display())))?;
    let patch = decode(&result.x_f_star).map_err(|e| CliError::Run(e.to_string()))?;
    let mut poly = String::from("x_mm,y_mm\n");
    for v in &patch.vertices {
        poly.push_str(&format!("{:.6},{:.6}\n", v[0], v[1]));
    }
    fs::write(out.join("patch_x_f_star.csv"), poly)?;
    fs::write(
        out.join("response_x_f_star.s1p"),
        to_touchstone(&result.response_x_f_star),
    )?;
    println!("wrote polygon CSV and Touchstone response to {}", out.display());
    Ok(ExitCode::SUCCESS)
}
