//! The binary's verbs as library calls.
//!
//! Every verb takes an options struct that deserializes from JSON, so a
//! `--config` file and command-line flags resolve to the same thing: flags
//! override keys of the file (see [`resolve_options`]).

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::harness::run_experiment;
use super::report::render_table;
use super::scenario::{Scenario, ScenarioAgent};
use super::ExperimentError;
use crate::agent::{spawn_agent, AgentNode, AgentRunner};
use crate::bus::{Bus, BusHandle, BusServer, RemoteBus};
use crate::clock::{Clock, SystemClock};
use crate::coordinator::http::HttpServer;
use crate::coordinator::{Coordinator, CoordinatorConfig, CoordinatorService, SupplyPolicy};
use crate::messages::topics;
use crate::power_model::{
    best_subset_search, cross_validate, evaluate, fit_pipeline, ingest_metrics_log, EvalReport, FeatureSpec, LogKind,
    MetricsSample, ModelError, Os, PowerMode, PowerModel, Term,
};

/// Merges command-line values over an optional JSON config file and
/// deserializes the result. `null` flag values leave the file untouched.
pub fn resolve_options<T: DeserializeOwned>(config: Option<&Path>, flags: Value) -> Result<T, ExperimentError> {
    let mut merged = match config {
        Some(p) => match serde_json::from_reader(BufReader::new(File::open(p)?))? {
            Value::Object(m) => m,
            _ => return Err(ExperimentError::Usage(format!("{} must hold a JSON object", p.display()))),
        },
        None => Map::new(),
    };
    if let Value::Object(f) = flags {
        for (k, v) in f {
            if !v.is_null() && v != Value::Bool(false) {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| ExperimentError::Usage(e.to_string()))
}

fn read_log(path: &Path) -> Result<Vec<MetricsSample>, ExperimentError> {
    let report = ingest_metrics_log(BufReader::new(File::open(path)?), LogKind::Training)?;
    if report.skipped > 0 {
        eprintln!("{}: skipped {} malformed rows", path.display(), report.skipped);
    }
    Ok(report.samples)
}

fn spec_for(os: Os, mode: PowerMode, terms: &Option<Vec<String>>) -> Result<FeatureSpec, ExperimentError> {
    match terms {
        None => Ok(FeatureSpec::builtin(os, mode)),
        Some(names) => {
            let terms = names.iter().map(|n| n.parse::<Term>()).collect::<Result<Vec<_>, _>>()?;
            Ok(FeatureSpec::new(os, mode, terms)?)
        }
    }
}

fn default_split() -> f64 {
    crate::power_model::TRAIN_FRACTION
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    pub log: PathBuf,
    pub os: Os,
    pub mode: PowerMode,
    pub out: PathBuf,
    #[serde(default = "default_split")]
    pub split: f64,
    #[serde(default)]
    pub seed: u64,
    /// Term names; the builtin set for the OS and mode when absent.
    #[serde(default)]
    pub terms: Option<Vec<String>>,
    /// Bus address to publish the fitted model to.
    #[serde(default)]
    pub publish: Option<String>,
}

/// ingest → filter → split → fit → evaluate; writes the model artifact.
pub fn cmd_fit(o: &FitOptions) -> Result<String, ExperimentError> {
    let samples = read_log(&o.log)?;
    let spec = spec_for(o.os, o.mode, &o.terms)?;
    let out = fit_pipeline(samples, &spec, o.split, o.seed)?;
    fs::write(&o.out, out.model.to_json())?;
    if let Some(addr) = &o.publish {
        RemoteBus::connect(addr.as_str())?.publish_json(&topics::model(o.os, o.mode), &out.model)?;
    }
    Ok(format!(
        "{}\n{}\n# n_train {}, outliers removed {}, model written to {}\n",
        EvalReport::table_header(),
        out.report.table_row(o.os.as_str(), o.mode.as_str()),
        out.n_train,
        out.outliers_removed,
        o.out.display()
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOptions {
    pub model: PathBuf,
    pub log: PathBuf,
}

pub fn cmd_eval(o: &EvalOptions) -> Result<String, ExperimentError> {
    let model = PowerModel::from_json(&fs::read_to_string(&o.model)?)?;
    let samples = read_log(&o.log)?;
    let report = evaluate(&model, &samples)?;
    Ok(format!(
        "{}\n{}\n",
        EvalReport::table_header(),
        report.table_row(model.spec.os.as_str(), model.spec.mode.as_str())
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsetOptions {
    pub log: PathBuf,
    pub os: Os,
    pub mode: PowerMode,
    /// Candidate terms; the builtin set when absent.
    #[serde(default)]
    pub terms: Option<Vec<String>>,
    /// Largest subset size; every candidate when absent.
    #[serde(default)]
    pub max_size: Option<usize>,
}

pub fn cmd_subset_search(o: &SubsetOptions) -> Result<String, ExperimentError> {
    let samples = read_log(&o.log)?;
    let candidates: Vec<Term> = match &o.terms {
        Some(names) => names.iter().map(|n| n.parse::<Term>()).collect::<Result<_, ModelError>>()?,
        None => FeatureSpec::builtin(o.os, o.mode).terms().to_vec(),
    };
    let max = o.max_size.unwrap_or(candidates.len());
    Ok(best_subset_search(&samples, &candidates, max)?.render())
}

fn default_folds() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossValidateOptions {
    pub log: PathBuf,
    pub os: Os,
    pub mode: PowerMode,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub terms: Option<Vec<String>>,
}

pub fn cmd_cross_validate(o: &CrossValidateOptions) -> Result<String, ExperimentError> {
    let samples = read_log(&o.log)?;
    let spec = spec_for(o.os, o.mode, &o.terms)?;
    let mses = cross_validate(&samples, &spec, o.folds, o.seed)?;
    let mut s = String::from("fold  mse_w2\n");
    for (i, m) in mses.iter().enumerate() {
        s += &format!("{:>4}  {m:.4}\n", i + 1);
    }
    let mean = mses.iter().sum::<f64>() / mses.len() as f64;
    s += &format!("mean  {mean:.4}\n");
    Ok(s)
}

fn default_bus_addr() -> String {
    "127.0.0.1:7400".into()
}

fn default_http_addr() -> String {
    "127.0.0.1:7401".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BusOptions {
    #[serde(default = "default_bus_addr")]
    pub listen: String,
    /// Append-only log; the bus is memory-only without one.
    #[serde(default)]
    pub log: Option<PathBuf>,
    /// fsync every append before acknowledging it.
    #[serde(default)]
    pub sync: bool,
}

pub fn cmd_bus(o: &BusOptions) -> Result<BusServer, ExperimentError> {
    let bus = match &o.log {
        Some(p) => Bus::open(p, o.sync)?,
        None => Bus::in_memory(Arc::new(SystemClock)),
    };
    Ok(BusServer::bind(o.listen.as_str(), bus)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoordinatorOptions {
    #[serde(default = "default_bus_addr")]
    pub bus: String,
    #[serde(default = "default_http_addr")]
    pub http: String,
    #[serde(default = "default_window")]
    pub contribution_window_min: u32,
    #[serde(default)]
    pub supply: Option<SupplyPolicy>,
}

fn default_window() -> u32 {
    crate::coordinator::CONTRIBUTION_WINDOW_MIN
}

pub fn cmd_coordinator(o: &CoordinatorOptions) -> Result<(CoordinatorService, HttpServer), ExperimentError> {
    let bus: Arc<dyn BusHandle> = Arc::new(RemoteBus::connect(o.bus.as_str())?);
    let core = Coordinator::new(CoordinatorConfig {
        contribution_window_min: o.contribution_window_min,
        supply: o.supply.clone(),
    });
    let service = CoordinatorService::start(core, bus, Arc::new(SystemClock));
    let http = HttpServer::bind(o.http.as_str(), service.handle())?;
    Ok((service, http))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentOptions {
    #[serde(default = "default_bus_addr")]
    pub bus: String,
    pub agent: ScenarioAgent,
    #[serde(default)]
    pub seed: u64,
}

pub fn cmd_agent(o: &AgentOptions) -> Result<AgentRunner, ExperimentError> {
    let bus: Arc<dyn BusHandle> = Arc::new(RemoteBus::connect(o.bus.as_str())?);
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let node = AgentNode::new(o.agent.config(o.seed), clock.now_ms())?;
    Ok(spawn_agent(node, bus, clock))
}

fn default_out() -> PathBuf {
    PathBuf::from("experiment-out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunExperimentOptions {
    /// Scenario JSON; the built-in three-laptop scenario when absent.
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Overrides the scenario's seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ExperimentError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Scenario(vec![format!("{}: {e}", path.display())]))
}

pub fn cmd_run_experiment(o: &RunExperimentOptions) -> Result<String, ExperimentError> {
    let mut sc = match &o.scenario {
        Some(p) => load_scenario(p)?,
        None => Scenario::three_laptops(o.seed.unwrap_or(0)),
    };
    if let Some(seed) = o.seed {
        sc.seed = seed;
    }
    let out = run_experiment(&sc)?;
    out.write(&o.out)?;
    Ok(format!("{}outputs written to {}\n", render_table(&out.report), o.out.display()))
}
