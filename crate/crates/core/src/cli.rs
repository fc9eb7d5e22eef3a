//! Config-driven command layer: `scenarios`, `solve`, `sweep`,
//! `export-mps`, `report`.
//!
//! A TOML config names the case, forecasts, scenario settings, costs,
//! solver, and sweep grid; flags override environment variables
//! (`SDED_SEED`, `SDED_SOLVER`, `SDED_OUT`), which override the config.
//! Exit codes: 0 success, 1 config error, 2 unreadable/invalid input
//! data, 3 solve failure.

use crate::experiments::{
    self, compute_savings, run_sweep, PenetrationConfig, ScenarioConfig, SweepResult, SweepSpec,
};
use crate::formulation::{
    build_extensive_form, extract_solution, solve_model, verify_solution, CostParams,
    DispatchSolution, SolverChoice,
};
use crate::grid::{apply_wind_conversion, attach_storage, load_case, GridCase};
use crate::milp::{write_mps, BnbOptions, MipStatus};
use crate::scenarios::{
    load_percentile_forecasts, scenario_csv, Coupling, PercentileForecast, ScenarioSet, SeriesKind,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct CliError {
    pub exit_code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError {
        exit_code: 1,
        message: msg.into(),
    }
}

fn input_err(msg: impl Into<String>) -> CliError {
    CliError {
        exit_code: 2,
        message: msg.into(),
    }
}

fn solve_err(msg: impl Into<String>) -> CliError {
    CliError {
        exit_code: 3,
        message: msg.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: CaseConfig,
    pub forecasts: ForecastConfig,
    #[serde(default)]
    pub storage: StorageConfig,
    pub scenarios: ScenariosSection,
    #[serde(default)]
    pub costs: CostParams,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub convert_generator_ids: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    pub load: PathBuf,
    pub wind: PathBuf,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageConfig {
    #[serde(default)]
    pub buses: Vec<usize>,
    #[serde(default)]
    pub rating_mw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenariosSection {
    pub count: usize,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub renormalize: bool,
    #[serde(default = "default_coupling")]
    pub coupling: Coupling,
}

fn default_sigma() -> f64 {
    0.10
}

fn default_seed() -> u64 {
    42
}

fn default_coupling() -> Coupling {
    Coupling::Rank
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_solver")]
    pub choice: String,
    #[serde(default = "default_rel_gap")]
    pub rel_gap: f64,
    #[serde(default = "default_node_limit")]
    pub node_limit: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            choice: default_solver(),
            rel_gap: default_rel_gap(),
            node_limit: default_node_limit(),
        }
    }
}

fn default_solver() -> String {
    "internal-fastpath".to_string()
}

fn default_rel_gap() -> f64 {
    1e-6
}

fn default_node_limit() -> usize {
    200_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub bess_sizes_mw: Vec<f64>,
    pub configs: Vec<PenetrationConfig>,
}

/// Flag/env overrides on top of the parsed config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub solver: Option<String>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    /// Environment values fill any override the flags left unset.
    pub fn with_env(mut self) -> Self {
        if self.seed.is_none() {
            if let Ok(s) = std::env::var("SDED_SEED") {
                self.seed = s.parse().ok();
            }
        }
        if self.solver.is_none() {
            if let Ok(s) = std::env::var("SDED_SOLVER") {
                self.solver = Some(s);
            }
        }
        if self.out.is_none() {
            if let Ok(s) = std::env::var("SDED_OUT") {
                self.out = Some(PathBuf::from(s));
            }
        }
        self
    }
}

pub fn load_config(path: impl AsRef<Path>, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
    let mut config: RunConfig =
        toml::from_str(&text).map_err(|e| config_err(format!("bad config: {e}")))?;
    if let Some(seed) = overrides.seed {
        config.scenarios.seed = seed;
    }
    if let Some(solver) = &overrides.solver {
        config.solver.choice = solver.clone();
    }
    if let Some(out) = &overrides.out {
        config.output.dir = out.clone();
    }
    config
        .costs
        .validate()
        .map_err(|e| config_err(e.to_string()))?;
    if config.scenarios.count < 1 {
        return Err(config_err("scenarios.count must be at least 1"));
    }
    if config.scenarios.noise_sigma < 0.0 {
        return Err(config_err("scenarios.noise_sigma must be nonnegative"));
    }
    parse_solver_choice(&config.solver.choice)?;
    Ok(config)
}

pub fn parse_solver_choice(s: &str) -> Result<SolverChoice, CliError> {
    match s {
        "internal" => Ok(SolverChoice::Internal),
        "internal-fastpath" => Ok(SolverChoice::InternalFastpath),
        other => match other.strip_prefix("external:") {
            Some(cmd) if !cmd.trim().is_empty() => Ok(SolverChoice::External(cmd.to_string())),
            _ => Err(config_err(format!(
                "unknown solver {other:?}; expected internal, internal-fastpath, or external:<cmd>"
            ))),
        },
    }
}

fn bnb_options(config: &RunConfig) -> BnbOptions {
    BnbOptions {
        rel_gap: config.solver.rel_gap,
        node_limit: config.solver.node_limit,
        ..Default::default()
    }
}

pub struct Inputs {
    pub case: GridCase,
    pub load_fc: PercentileForecast,
    pub wind_fc: PercentileForecast,
}

/// Load case and forecasts, applying the config's wind conversion and
/// storage attachments.
pub fn load_inputs(config: &RunConfig) -> Result<Inputs, CliError> {
    let base = load_case(&config.case.path).map_err(|e| input_err(e.to_string()))?;
    let converted = apply_wind_conversion(&base, &config.case.convert_generator_ids)
        .map_err(|e| input_err(e.to_string()))?;
    let specs = experiments::storage_specs(&config.storage.buses, config.storage.rating_mw);
    let case = attach_storage(&converted, &specs).map_err(|e| input_err(e.to_string()))?;
    let load_fc = load_percentile_forecasts(&config.forecasts.load, SeriesKind::Load)
        .map_err(|e| input_err(e.to_string()))?;
    let wind_fc = load_percentile_forecasts(&config.forecasts.wind, SeriesKind::Wind)
        .map_err(|e| input_err(e.to_string()))?;
    Ok(Inputs {
        case,
        load_fc,
        wind_fc,
    })
}

fn scenario_config(config: &RunConfig) -> ScenarioConfig {
    ScenarioConfig {
        count: config.scenarios.count,
        coupling: config.scenarios.coupling,
        noise_sigma: config.scenarios.noise_sigma,
        seed: config.scenarios.seed,
        renormalize: config.scenarios.renormalize,
    }
}

fn build_scenarios(config: &RunConfig, inputs: &Inputs) -> Result<ScenarioSet, CliError> {
    experiments::scenarios_for_case(
        &inputs.case,
        &inputs.load_fc,
        &inputs.wind_fc,
        &scenario_config(config),
    )
    .map_err(|e| input_err(e.to_string()))
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| input_err(format!("cannot create {}: {e}", dir.display())))
}

fn write_out(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| input_err(format!("cannot write {}: {e}", path.display())))
}

/// FNV-1a over file bytes, reported in the manifests.
fn checksum_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| input_err(format!("cannot read {}: {e}", path.display())))?;
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    Ok(format!("{hash:016x}"))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    case: String,
    case_checksum: String,
    load_forecast_checksum: String,
    wind_forecast_checksum: String,
    seed: u64,
    scenario_count: usize,
    coupling: Coupling,
    noise_sigma: f64,
    renormalize: bool,
    solver: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_vars: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_rows: Option<usize>,
}

fn manifest(
    config: &RunConfig,
    command: &str,
    solve_meta: Option<(f64, usize, usize, usize)>,
) -> Result<String, CliError> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        case: config.case.path.display().to_string(),
        case_checksum: checksum_file(&config.case.path)?,
        load_forecast_checksum: checksum_file(&config.forecasts.load)?,
        wind_forecast_checksum: checksum_file(&config.forecasts.wind)?,
        seed: config.scenarios.seed,
        scenario_count: config.scenarios.count,
        coupling: config.scenarios.coupling,
        noise_sigma: config.scenarios.noise_sigma,
        renormalize: config.scenarios.renormalize,
        solver: config.solver.choice.clone(),
        gap: solve_meta.map(|(g, _, _, _)| g),
        nodes: solve_meta.map(|(_, n, _, _)| n),
        model_vars: solve_meta.map(|(_, _, v, _)| v),
        model_rows: solve_meta.map(|(_, _, _, r)| r),
    };
    serde_json::to_string_pretty(&m).map_err(|e| input_err(e.to_string()))
}

/// `scenarios`: write the scenario CSV and a manifest.
pub fn cmd_scenarios(config: &RunConfig) -> Result<(), CliError> {
    let inputs = load_inputs(config)?;
    let scen = build_scenarios(config, &inputs)?;
    let dir = &config.output.dir;
    ensure_out_dir(dir)?;
    write_out(
        &dir.join("scenarios.csv"),
        &scenario_csv(&scen, &inputs.case),
    )?;
    write_out(
        &dir.join("manifest.json"),
        &manifest(config, "scenarios", None)?,
    )?;
    println!(
        "wrote {} scenarios x {} steps to {}",
        scen.n_scenarios(),
        scen.horizon(),
        dir.join("scenarios.csv").display()
    );
    Ok(())
}

fn solve_once(
    config: &RunConfig,
    case: &GridCase,
    scen: &ScenarioSet,
) -> Result<(DispatchSolution, f64, usize, usize, usize), CliError> {
    let costs = &config.costs;
    let (model, index) =
        build_extensive_form(case, scen, costs).map_err(|e| input_err(e.to_string()))?;
    let choice = parse_solver_choice(&config.solver.choice)?;
    let raw = solve_model(&model, &index, &choice, &bnb_options(config))
        .map_err(|e| solve_err(e.to_string()))?;
    if raw.status != MipStatus::Optimal {
        return Err(solve_err(format!("solver returned {:?}", raw.status)));
    }
    let sol =
        extract_solution(&raw, &index, case, scen, costs).map_err(|e| solve_err(e.to_string()))?;
    let report = verify_solution(&sol, case, scen, costs);
    if !report.passes() {
        return Err(solve_err(format!(
            "constraint replay failed, max residual {:.3e}",
            report.max_residual()
        )));
    }
    Ok((sol, raw.gap, raw.nodes, model.n_vars(), model.n_rows()))
}

/// `solve`: one dispatch run; writes dispatch.csv, costs.json,
/// solution.json, manifest.json.
pub fn cmd_solve(config: &RunConfig) -> Result<(), CliError> {
    let inputs = load_inputs(config)?;
    let scen = build_scenarios(config, &inputs)?;
    let (sol, gap, nodes, n_vars, n_rows) = solve_once(config, &inputs.case, &scen)?;
    let dir = &config.output.dir;
    ensure_out_dir(dir)?;
    write_out(&dir.join("dispatch.csv"), &experiments::dispatch_csv(&sol))?;
    write_out(
        &dir.join("costs.json"),
        &serde_json::to_string_pretty(&sol.costs).map_err(|e| solve_err(e.to_string()))?,
    )?;
    write_out(
        &dir.join("solution.json"),
        &serde_json::to_string_pretty(&sol).map_err(|e| solve_err(e.to_string()))?,
    )?;
    write_out(
        &dir.join("manifest.json"),
        &manifest(config, "solve", Some((gap, nodes, n_vars, n_rows)))?,
    )?;
    println!(
        "total cost {:.2} $ (generation {:.2}, battery {:.2}, curtailment {:.2}, recourse {:.2})",
        sol.costs.total,
        sol.costs.generation,
        sol.costs.battery,
        sol.costs.curtailment,
        sol.costs.expected_recourse
    );
    Ok(())
}

fn sweep_spec(config: &RunConfig) -> Result<SweepSpec, CliError> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| config_err("config has no [sweep] section"))?;
    if sweep.configs.is_empty() {
        return Err(config_err("sweep.configs must not be empty"));
    }
    Ok(SweepSpec {
        penetration_configs: sweep.configs.clone(),
        bess_sizes_mw: sweep.bess_sizes_mw.clone(),
        bess_buses: config.storage.buses.clone(),
        scenario: scenario_config(config),
        costs: config.costs.clone(),
        solver: parse_solver_choice(&config.solver.choice)?,
        solve_opts: bnb_options(config),
    })
}

/// `sweep`: the (penetration x BESS size) study; writes sweep.csv, the
/// curve CSVs, dispatch.csv for the narrative cell, and a manifest.
pub fn cmd_sweep(config: &RunConfig) -> Result<SweepResult, CliError> {
    let inputs = load_inputs(config)?;
    let spec = sweep_spec(config)?;
    let base = load_case(&config.case.path).map_err(|e| input_err(e.to_string()))?;
    let result = run_sweep(&spec, &base, &inputs.load_fc, &inputs.wind_fc);

    // narrative dispatch: first config at the smallest nonzero size
    let narrative = spec
        .bess_sizes_mw
        .iter()
        .copied()
        .find(|&s| s > 0.0)
        .or(spec.bess_sizes_mw.first().copied());
    let dispatch = match narrative {
        Some(size) => {
            let converted =
                apply_wind_conversion(&base, &spec.penetration_configs[0].convert_generator_ids)
                    .map_err(|e| input_err(e.to_string()))?;
            let with_storage = attach_storage(
                &converted,
                &experiments::storage_specs(&spec.bess_buses, size),
            )
            .map_err(|e| input_err(e.to_string()))?;
            let scen = experiments::scenarios_for_case(
                &with_storage,
                &inputs.load_fc,
                &inputs.wind_fc,
                &spec.scenario,
            )
            .map_err(|e| input_err(e.to_string()))?;
            Some(solve_once(config, &with_storage, &scen)?.0)
        }
        None => None,
    };

    let dir = &config.output.dir;
    experiments::emit_report(&result, dispatch.as_ref(), dir)
        .map_err(|e| solve_err(e.to_string()))?;
    write_out(
        &dir.join("manifest.json"),
        &manifest(config, "sweep", None)?,
    )?;

    let failed = result
        .cells
        .iter()
        .filter(|c| c.status != experiments::CellStatus::Ok)
        .count();
    println!(
        "sweep finished: {} cells ({} failed), outputs in {}",
        result.cells.len(),
        failed,
        dir.display()
    );
    if failed > 0 {
        return Err(solve_err(format!("{failed} sweep cells failed")));
    }
    Ok(result)
}

/// `export-mps`: build the model and write `model.mps` (and a name
/// mangling table when needed).
pub fn cmd_export_mps(config: &RunConfig) -> Result<(), CliError> {
    let inputs = load_inputs(config)?;
    let scen = build_scenarios(config, &inputs)?;
    let (model, _) = build_extensive_form(&inputs.case, &scen, &config.costs)
        .map_err(|e| input_err(e.to_string()))?;
    let dir = &config.output.dir;
    ensure_out_dir(dir)?;
    let path = dir.join("model.mps");
    let doc = write_mps(&model, &path).map_err(|e| input_err(e.to_string()))?;
    write_out(
        &dir.join("manifest.json"),
        &manifest(config, "export-mps", None)?,
    )?;
    println!(
        "wrote {} ({} columns, {} rows{})",
        path.display(),
        model.n_vars(),
        model.n_rows(),
        if doc.names_table.is_some() {
            ", names table alongside"
        } else {
            ""
        }
    );
    Ok(())
}

/// `report`: recompute the savings and curtailment curves from a saved
/// sweep.csv and print the savings table.
pub fn cmd_report(config: &RunConfig) -> Result<(), CliError> {
    let dir = &config.output.dir;
    let path = dir.join("sweep.csv");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| input_err(format!("cannot read {}: {e}", path.display())))?;
    let result = experiments::parse_sweep_csv(&text).map_err(|e| input_err(e.to_string()))?;
    let savings = compute_savings(&result).map_err(|e| input_err(e.to_string()))?;
    write_out(
        &dir.join("curtailment_curve.csv"),
        &experiments::curtailment_curve_csv(&result),
    )?;
    write_out(
        &dir.join("savings_curve.csv"),
        &experiments::savings_curve_csv(&savings),
    )?;
    println!("config,bess_size_mw,cost,savings_abs,savings_pct");
    for row in &savings {
        println!(
            "{},{},{},{},{}",
            row.config,
            experiments::fmt6(row.bess_size_mw),
            experiments::fmt6(row.cost),
            experiments::fmt6(row.savings_abs),
            experiments::fmt6(row.savings_pct)
        );
    }
    Ok(())
}
