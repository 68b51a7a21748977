use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Parser;

use streamforge::pipeline::{LlmKind, Run, RunConfig, SolverKind, Stage, StageOutcome};

const MODELS_ENV: &str = "STREAMFORGE_MODELS";

#[derive(Parser, Debug)]
#[command(name = "streamforge", version, about = "Streamliner synthesis from enumerated solutions")]
struct Args {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Stage to run, or `all`.
    #[arg(long, default_value = "all")]
    stage: String,
    /// Problem id under the models directory, or a path to a problem.toml.
    #[arg(long)]
    problem: Option<String>,
    /// LLM backend: live, replay or stub.
    #[arg(long)]
    llm: Option<LlmKind>,
    /// Solver backend: builtin or external.
    #[arg(long, value_parser = parse_solver)]
    solver: Option<SolverKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_solver(s: &str) -> Result<SolverKind, String> {
    match s {
        "builtin" => Ok(SolverKind::Builtin),
        "external" => Ok(SolverKind::External),
        _ => Err(format!("unknown solver `{s}` (builtin, external)")),
    }
}

fn models_dirs() -> Vec<PathBuf> {
    let mut dirs = vec![PathBuf::from("models")];
    if let Ok(d) = std::env::var(MODELS_ENV) {
        dirs.insert(0, PathBuf::from(d));
    }
    dirs.push(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models"));
    dirs
}

fn resolve_problem(p: &str) -> Result<PathBuf> {
    let direct = PathBuf::from(p);
    if direct.is_file() {
        return Ok(direct);
    }
    if direct.join("problem.toml").is_file() {
        return Ok(direct.join("problem.toml"));
    }
    for d in models_dirs() {
        let candidate = d.join(p).join("problem.toml");
        if candidate.is_file() {
            return Ok(candidate);
        }
    }
    bail!("no problem `{p}`: not a file and not found under models/ or ${MODELS_ENV}")
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let mut config = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &args.problem {
        config.problem = resolve_problem(p)?;
        if args.config.is_none() && args.out.is_none() {
            config.out = PathBuf::from("runs").join(p.replace(['/', '\\'], "_"));
        }
    }
    if let Some(l) = args.llm {
        config.llm.backend = l;
    }
    if let Some(s) = args.solver {
        config.solver.backend = s;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(o) = args.out {
        config.out = o;
    }
    let stages: Vec<Stage> = match args.stage.as_str() {
        "all" => Stage::ALL.to_vec(),
        s => vec![s.parse().map_err(anyhow::Error::msg)?],
    };

    let run = Run::open(config).context("opening run")?;
    for stage in stages {
        let outcome = run.run_stage(stage).with_context(|| format!("stage `{stage}`"))?;
        let word = match outcome {
            StageOutcome::Ran => "done",
            StageOutcome::Skipped => "up to date",
        };
        println!("{stage}: {word}");
        if let Some(m) = run.manifest(stage) {
            println!("{}", serde_json::to_string_pretty(&m.summary)?);
        }
    }
    println!("run directory: {}", run.dir.display());
    Ok(())
}
