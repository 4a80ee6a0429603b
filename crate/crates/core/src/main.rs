use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use laptop_dr::experiment::commands::{self, resolve_options};
use laptop_dr::experiment::ExperimentError;

#[derive(Parser)]
#[command(name = "laptop-dr", version, about = "Simulated demand response for laptop fleets")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run on a simulated clock (run-experiment always does).
    #[arg(long, global = true)]
    virtual_clock: bool,
    /// JSON file with defaults for the verb's options.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Fit a power model from a metrics log.
    Fit(FitArgs),
    /// Score a model artifact on a metrics log.
    Eval(EvalArgs),
    /// Rank every term subset by adjusted R² and BIC.
    SubsetSearch(SubsetArgs),
    /// k-fold held-out MSE.
    CrossValidate(CvArgs),
    /// Serve the publish/subscribe bus over TCP.
    Bus(BusArgs),
    /// Run the coordinator and its HTTP API.
    Coordinator(CoordinatorArgs),
    /// Run one simulated laptop.
    Agent(AgentArgs),
    /// Run a scenario under a virtual clock and write the reports.
    RunExperiment(ExperimentArgs),
}

#[derive(Args, Serialize)]
struct FitArgs {
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    os: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    split: Option<f64>,
    /// Comma-separated term names.
    #[arg(long, value_delimiter = ',')]
    terms: Option<Vec<String>>,
    /// Bus address to publish the model to.
    #[arg(long)]
    publish: Option<String>,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SubsetArgs {
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    os: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, value_delimiter = ',')]
    terms: Option<Vec<String>>,
    #[arg(long)]
    max_size: Option<usize>,
}

#[derive(Args, Serialize)]
struct CvArgs {
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    os: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    terms: Option<Vec<String>>,
}

#[derive(Args, Serialize)]
struct BusArgs {
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    sync: bool,
}

#[derive(Args, Serialize)]
struct CoordinatorArgs {
    #[arg(long)]
    bus: Option<String>,
    #[arg(long)]
    http: Option<String>,
}

#[derive(Args, Serialize)]
struct AgentArgs {
    #[arg(long)]
    bus: Option<String>,
}

#[derive(Args, Serialize)]
struct ExperimentArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn flags<T: Serialize>(args: &T, seed: Option<u64>) -> Value {
    let mut v = serde_json::to_value(args).expect("flags serialize");
    if let (Value::Object(m), Some(s)) = (&mut v, seed) {
        m.insert("seed".into(), json!(s));
    }
    v
}

fn park_forever() -> ! {
    loop {
        std::thread::park();
    }
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    let cfg = cli.config.as_deref();
    let live_only = |verb: &str| {
        if cli.virtual_clock {
            Err(ExperimentError::Usage(format!("--virtual-clock does not apply to `{verb}`")))
        } else {
            Ok(())
        }
    };
    match &cli.verb {
        Verb::Fit(a) => print!("{}", commands::cmd_fit(&resolve_options(cfg, flags(a, cli.seed))?)?),
        Verb::Eval(a) => print!("{}", commands::cmd_eval(&resolve_options(cfg, flags(a, None))?)?),
        Verb::SubsetSearch(a) => {
            print!("{}", commands::cmd_subset_search(&resolve_options(cfg, flags(a, None))?)?)
        }
        Verb::CrossValidate(a) => {
            print!("{}", commands::cmd_cross_validate(&resolve_options(cfg, flags(a, cli.seed))?)?)
        }
        Verb::Bus(a) => {
            live_only("bus")?;
            let server = commands::cmd_bus(&resolve_options(cfg, flags(a, None))?)?;
            println!("bus listening on {}", server.local_addr());
            server.join();
        }
        Verb::Coordinator(a) => {
            live_only("coordinator")?;
            let (_service, http) = commands::cmd_coordinator(&resolve_options(cfg, flags(a, None))?)?;
            println!("coordinator http on {}", http.local_addr());
            http.join();
        }
        Verb::Agent(a) => {
            live_only("agent")?;
            let o: commands::AgentOptions = resolve_options(cfg, flags(a, cli.seed))?;
            let _runner = commands::cmd_agent(&o)?;
            println!("agent {} running against {}", o.agent.agent_id, o.bus);
            park_forever();
        }
        Verb::RunExperiment(a) => {
            print!("{}", commands::cmd_run_experiment(&resolve_options(cfg, flags(a, cli.seed))?)?)
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
