mod config;
mod manifest;
mod run;

use clap::{Args, Parser, Subcommand};
use config::{parse_run_config, Command, RunConfig};
use manifest::{Manifest, MANIFEST_FILE};
use run::{Failure, Outputs};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const DEFAULT_OUTPUT: &str = "convexlab-out";

#[derive(Parser)]
#[command(name = "convexlab", version, about = "Dispersion experiments on the Friedlander model of a convex domain")]
struct Cli {
    #[command(subcommand)]
    action: Action,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads; overrides `workers` in the config.
    #[arg(long, global = true, env = "CONVEXLAB_WORKERS")]
    workers: Option<usize>,
    /// Progress on stderr.
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Action {
    /// Run the command named in a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-run a manifest and compare every CSV artifact cell by cell.
    Replay { manifest: PathBuf },
    #[command(flatten)]
    Named(Named),
}

#[derive(Subcommand)]
enum Named {
    /// Airy zeros and the phase L.
    AiryCheck(ConfigArg),
    /// Airy-Poisson summation identity.
    PoissonCheck(ConfigArg),
    /// Green function on a grid.
    GreenEval(ConfigArg),
    /// Eigenmode sum against reflection sum.
    CrossValidate(ConfigArg),
    /// Sup-norm decay sweep.
    DispersionSweep(ConfigArg),
    /// Swallowtail saturation of the decay bound.
    Saturation(ConfigArg),
    /// Transverse block bounds.
    Transverse(ConfigArg),
    /// Growth of the Airy mode sums.
    AirySums(ConfigArg),
    /// Strichartz loss per data family.
    StrichartzProbe(ConfigArg),
    /// Cubic NLS on the periodized domain.
    NlsRun(ConfigArg),
    /// Affine envelope of log Sobolev norms from an NLS series.
    GrowthReport(ConfigArg),
}

#[derive(Args)]
struct ConfigArg {
    /// Run config (JSON); the command's defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Named {
    fn split(&self) -> (Command, Option<&Path>) {
        let (c, a) = match self {
            Named::AiryCheck(a) => (Command::AiryCheck, a),
            Named::PoissonCheck(a) => (Command::PoissonCheck, a),
            Named::GreenEval(a) => (Command::GreenEval, a),
            Named::CrossValidate(a) => (Command::CrossValidate, a),
            Named::DispersionSweep(a) => (Command::DispersionSweep, a),
            Named::Saturation(a) => (Command::Saturation, a),
            Named::Transverse(a) => (Command::Transverse, a),
            Named::AirySums(a) => (Command::AirySums, a),
            Named::StrichartzProbe(a) => (Command::StrichartzProbe, a),
            Named::NlsRun(a) => (Command::NlsRun, a),
            Named::GrowthReport(a) => (Command::GrowthReport, a),
        };
        (c, a.config.as_deref())
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    parse_run_config(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    if workers == Some(0) {
        return Err(Failure::Config("workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(workers.unwrap_or(0)).build().map_err(|e| Failure::Config(format!("worker pool: {e}")))
}

/// Runs `cfg` into `dir`, returning the manifest it wrote.
fn run_into(cfg: &RunConfig, dir: &Path, workers: Option<usize>, verbose: bool) -> Result<Manifest, Failure> {
    let workers = workers.or(cfg.workers);
    let pool = pool(workers)?;
    let mut out = Outputs::new(dir)?;
    let start = Instant::now();
    let outcome = pool.install(|| run::execute(cfg, &mut out, verbose))?;
    let wall = start.elapsed().as_secs_f64();
    let resolved = RunConfig { command: cfg.command, params: Some(outcome.params.clone()), output_dir: None, seed: cfg.seed, workers: cfg.workers };
    let all_pass = outcome.claims.iter().all(|c| c.verdict == convexlab::harness::Verdict::Pass);
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: manifest::config_hash(&resolved),
        config: resolved,
        workers: pool.current_num_threads(),
        wall_time_s: wall,
        tolerances: manifest::tolerances(&outcome.params),
        inputs: outcome.inputs.into_iter().map(|(path, sha256)| manifest::Artifact { path, sha256 }).collect(),
        artifacts: manifest::hash_artifacts(dir, &out.files)?,
        verdicts: outcome.claims,
        exit_code: if all_pass { 0 } else { 1 },
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
    Ok(manifest)
}

fn run(cfg: RunConfig, g: &Global) -> Result<u8, Failure> {
    let dir = g.output.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    let m = run_into(&cfg, &dir, g.workers, g.verbose)?;
    for c in &m.verdicts {
        println!("{}", c.line());
    }
    if g.verbose {
        eprintln!("{} finished in {:.2} s; manifest {}", cfg.command.name(), m.wall_time_s, dir.join(MANIFEST_FILE).display());
    }
    Ok(m.exit_code)
}

fn replay(path: &Path, g: &Global) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: not a manifest: {e}", path.display())))?;
    if manifest::config_hash(&m.config) != m.config_hash {
        return Err(Failure::Config("replay refused: manifest hash mismatch (the config was edited after the run)".into()));
    }
    let original = path.parent().unwrap_or(Path::new("."));
    let scratch = tempfile::tempdir()?;
    let again = run_into(&m.config, scratch.path(), Some(m.workers), g.verbose)?;
    let mut compared = 0;
    for a in m.artifacts.iter().filter(|a| a.path.ends_with(".csv")) {
        if !again.artifacts.iter().any(|b| b.path == a.path) {
            println!("MISMATCH {}: not produced on replay", a.path);
            return Ok(1);
        }
        let before = std::fs::read(original.join(&a.path))?;
        let after = std::fs::read(scratch.path().join(&a.path))?;
        match manifest::first_csv_difference(&before, &after).map_err(|e| Failure::Numeric(format!("{}: {e}", a.path)))? {
            Some(diff) => {
                println!("MISMATCH {}: {diff}", a.path);
                return Ok(1);
            }
            None => compared += 1,
        }
    }
    println!("PASS replay: {compared} CSV artifacts identical");
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.action {
        Action::Run { config } => load_config(config).and_then(|c| run(c, &cli.global)),
        Action::Replay { manifest } => replay(manifest, &cli.global),
        Action::Named(named) => {
            let (command, path) = named.split();
            let cfg = match path {
                Some(p) => load_config(p).and_then(|c| {
                    if c.command == command {
                        Ok(c)
                    } else {
                        Err(Failure::Config(format!("config field `command`: {} does not match the subcommand {}", c.command.name(), command.name())))
                    }
                }),
                None => Ok(RunConfig { command, params: None, output_dir: None, seed: 0, workers: None }),
            };
            cfg.and_then(|c| run(c, &cli.global))
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
