use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;

use prophic::abstraction::Mode;
use prophic::driver::{self, EngineConfig, Verdict};
use prophic::prover::Engine;
use prophic::vmt;
use prophic::TermStore;

/// Safety checking for transition systems over arrays.
#[derive(Parser, Debug)]
#[command(name = "prophic", version)]
struct Cli {
    /// Input system in VMT format.
    file: PathBuf,
    /// `kind` (BMC and k-induction), `bmc`, or a path to an external engine.
    #[arg(long, default_value = "kind")]
    engine: String,
    /// SMT solver executable (default: $PROPHIC_SOLVER or z3).
    #[arg(long)]
    solver: Option<String>,
    /// Weak array abstraction (default).
    #[arg(long, conflicts_with = "strong")]
    weak: bool,
    /// Strong array abstraction with native equality.
    #[arg(long)]
    strong: bool,
    #[arg(long, default_value_t = 25)]
    max_k: u32,
    /// Refinement rounds across all bounds.
    #[arg(long, default_value_t = 50)]
    max_refinements: u32,
    /// Index of the property to check.
    #[arg(long, default_value_t = 0)]
    property: u32,
    /// Write the invariant or counterexample here.
    #[arg(long)]
    witness: Option<PathBuf>,
    /// Write run statistics as JSON here.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Magnitude above which integer literals are abstracted.
    #[arg(long, default_value_t = 10)]
    value_threshold: u64,
    #[arg(long)]
    no_value_abstraction: bool,
    #[arg(long)]
    no_assume_prestate: bool,
    #[arg(long)]
    no_proph_reduction: bool,
    #[arg(long)]
    no_unsatcore_reduction: bool,
    #[arg(long)]
    no_axiom_reduction: bool,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    timeout: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: &Cli) -> Result<u8, String> {
    let text = std::fs::read_to_string(&cli.file).map_err(|e| format!("{}: {e}", cli.file.display()))?;
    let mut store = TermStore::new();
    let problem = vmt::parse_vmt(&mut store, &text).map_err(|e| format!("{}: {e}", cli.file.display()))?;
    let prop = problem
        .property(cli.property)
        .ok_or_else(|| format!("no property with index {}", cli.property))?;
    let engine = match cli.engine.as_str() {
        "kind" => Engine::KInduction,
        "bmc" => Engine::BmcOnly,
        path => Engine::External(path.into()),
    };
    let timeout = match cli.timeout {
        Some(s) if !(s.is_finite() && s > 0.0) => return Err(format!("invalid timeout {s}")),
        Some(s) => Some(Duration::from_secs_f64(s)),
        None => None,
    };
    let cfg = EngineConfig {
        mode: if cli.strong { Mode::Strong } else { Mode::Weak },
        engine,
        max_k: cli.max_k,
        max_refinements: cli.max_refinements,
        value_threshold: (!cli.no_value_abstraction).then_some(cli.value_threshold),
        assume_prestate: !cli.no_assume_prestate,
        prophecy_reduction: !cli.no_proph_reduction,
        unsat_core_reduction: !cli.no_unsatcore_reduction,
        axiom_reduction: !cli.no_axiom_reduction,
        solver: cli.solver.clone(),
        timeout,
        ..EngineConfig::default()
    };
    let res = driver::run(&cfg, &mut store, &problem.system, prop).map_err(|e| e.to_string())?;
    match &res.verdict {
        Verdict::Safe(_) => println!("safe"),
        Verdict::Unsafe { bound, .. } => println!("unsafe {bound}"),
        Verdict::Unknown(reason) => println!("unknown ({reason})"),
    }
    if let Some(path) = &cli.witness {
        if let Some(w) = driver::emit_witness(&store, &res.verdict) {
            std::fs::write(path, w).map_err(|e| format!("{}: {e}", path.display()))?;
        }
    }
    if let Some(path) = &cli.stats {
        let json = serde_json::to_string_pretty(&res.stats).map_err(|e| e.to_string())?;
        std::fs::write(path, json).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(res.verdict.exit_code() as u8)
}
