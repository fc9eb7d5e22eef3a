//! Sensitivity studies: expected cost and wind curtailment over a grid
//! of (wind-penetration config, BESS size), plus the per-timestep
//! dispatch summary and plot-ready CSV outputs.
//!
//! Every sweep cell shares the same scenario seed so that differences
//! between cells isolate the swept variables. Cells are independent and
//! run in parallel; results are keyed by cell coordinates, so worker
//! count cannot change the output.

use crate::formulation::{
    build_extensive_form, extract_solution, verify_solution, CostParams, DispatchSolution,
    SolverChoice,
};
use crate::grid::{
    apply_wind_conversion, attach_storage, penetration_level, GridCase, StorageSpec,
};
use crate::milp::BnbOptions;
use crate::scenarios::{
    build_scenario_paths, disaggregate_to_buses, Coupling, DisaggregateOptions, PercentileForecast,
    ScenarioSet,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("no size-0 baseline cell for config {0}")]
    MissingBaseline(String),
    #[error("io error writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse sweep csv: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenetrationConfig {
    pub label: String,
    /// Conventional generators converted to wind for this config.
    pub convert_generator_ids: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub count: usize,
    pub coupling: Coupling,
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub renormalize: bool,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub penetration_configs: Vec<PenetrationConfig>,
    pub bess_sizes_mw: Vec<f64>,
    pub bess_buses: Vec<usize>,
    pub scenario: ScenarioConfig,
    pub costs: CostParams,
    pub solver: SolverChoice,
    pub solve_opts: BnbOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub config: String,
    pub penetration: f64,
    pub bess_size_mw: f64,
    pub status: CellStatus,
    pub expected_cost: f64,
    /// Probability-weighted scenario wind curtailment, MWh.
    pub expected_wind_curtailment_mwh: f64,
    pub first_stage_wind_curtailment_mwh: f64,
    pub gap: f64,
    pub nodes: usize,
    /// Wall time, kept out of the CSVs so outputs stay byte-identical
    /// across runs.
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(&self, config: &str, size: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.config == config && c.bess_size_mw == size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavingsRow {
    pub config: String,
    pub bess_size_mw: f64,
    pub cost: f64,
    pub savings_abs: f64,
    pub savings_pct: f64,
}

/// Savings of each cell relative to its config's size-0 baseline.
pub fn compute_savings(result: &SweepResult) -> Result<Vec<SavingsRow>, SweepError> {
    let mut out = Vec::new();
    let mut configs: Vec<&str> = Vec::new();
    for cell in &result.cells {
        if !configs.contains(&cell.config.as_str()) {
            configs.push(&cell.config);
        }
    }
    for config in configs {
        let baseline = result
            .cells
            .iter()
            .find(|c| c.config == config && c.bess_size_mw == 0.0 && c.status == CellStatus::Ok)
            .ok_or_else(|| SweepError::MissingBaseline(config.to_string()))?;
        for cell in result.cells.iter().filter(|c| c.config == config) {
            if cell.status != CellStatus::Ok {
                continue;
            }
            let savings_abs = baseline.expected_cost - cell.expected_cost;
            let savings_pct = savings_abs / baseline.expected_cost * 100.0;
            out.push(SavingsRow {
                config: cell.config.clone(),
                bess_size_mw: cell.bess_size_mw,
                cost: cell.expected_cost,
                savings_abs,
                savings_pct,
            });
        }
    }
    Ok(out)
}

/// Bus-level scenario set for one penetration config (shared by every
/// BESS size within it).
pub fn scenarios_for_case(
    case: &GridCase,
    load_fc: &PercentileForecast,
    wind_fc: &PercentileForecast,
    cfg: &ScenarioConfig,
) -> Result<ScenarioSet, crate::scenarios::ScenarioError> {
    let sys = build_scenario_paths(load_fc, wind_fc, cfg.count, cfg.coupling)?;
    Ok(disaggregate_to_buses(
        &sys,
        case,
        &DisaggregateOptions {
            noise_sigma: cfg.noise_sigma,
            seed: cfg.seed,
            renormalize: cfg.renormalize,
        },
    ))
}

/// Storage specs for one sweep size (size 0 means no units).
pub fn storage_specs(bess_buses: &[usize], size_mw: f64) -> Vec<StorageSpec> {
    if size_mw <= 0.0 {
        return Vec::new();
    }
    bess_buses
        .iter()
        .enumerate()
        .map(|(i, &bus)| StorageSpec::new(i, bus, size_mw))
        .collect()
}

/// Solve one sweep cell; failures are reported in the cell status so a
/// sweep never aborts.
fn run_cell(
    spec: &SweepSpec,
    converted: &GridCase,
    scen: &ScenarioSet,
    config: &PenetrationConfig,
    size: f64,
) -> SweepCell {
    let started = std::time::Instant::now();
    let mut cell = SweepCell {
        config: config.label.clone(),
        penetration: penetration_level(converted),
        bess_size_mw: size,
        status: CellStatus::Ok,
        expected_cost: f64::NAN,
        expected_wind_curtailment_mwh: f64::NAN,
        first_stage_wind_curtailment_mwh: f64::NAN,
        gap: f64::NAN,
        nodes: 0,
        wall_seconds: 0.0,
    };

    let fail = |cell: &mut SweepCell, msg: String| {
        cell.status = CellStatus::Failed(msg);
        cell.wall_seconds = started.elapsed().as_secs_f64();
    };

    let case = match attach_storage(converted, &storage_specs(&spec.bess_buses, size)) {
        Ok(c) => c,
        Err(e) => {
            fail(&mut cell, e.to_string());
            return cell;
        }
    };
    let built = match build_extensive_form(&case, scen, &spec.costs) {
        Ok(b) => b,
        Err(e) => {
            fail(&mut cell, e.to_string());
            return cell;
        }
    };
    let (model, index) = built;
    let raw = match crate::formulation::solve_model(&model, &index, &spec.solver, &spec.solve_opts)
    {
        Ok(r) => r,
        Err(e) => {
            fail(&mut cell, e.to_string());
            return cell;
        }
    };
    if raw.status != crate::milp::MipStatus::Optimal {
        fail(&mut cell, format!("solver returned {:?}", raw.status));
        return cell;
    }
    let sol = match extract_solution(&raw, &index, &case, scen, &spec.costs) {
        Ok(s) => s,
        Err(e) => {
            fail(&mut cell, e.to_string());
            return cell;
        }
    };
    let report = verify_solution(&sol, &case, scen, &spec.costs);
    if !report.passes() {
        fail(
            &mut cell,
            format!(
                "constraint replay failed, max residual {}",
                report.max_residual()
            ),
        );
        return cell;
    }

    cell.expected_cost = raw.objective;
    cell.expected_wind_curtailment_mwh =
        sol.expected_scenario_wind_curtailment_mwh(spec.costs.dt_hours);
    cell.first_stage_wind_curtailment_mwh =
        sol.first_stage_wind_curtailment_mwh(spec.costs.dt_hours);
    cell.gap = raw.gap;
    cell.nodes = raw.nodes;
    cell.wall_seconds = started.elapsed().as_secs_f64();
    cell
}

/// Run the full (config × size) grid. Scenario generation is shared per
/// config; all cells share the spec's seed.
pub fn run_sweep(
    spec: &SweepSpec,
    base_case: &GridCase,
    load_fc: &PercentileForecast,
    wind_fc: &PercentileForecast,
) -> SweepResult {
    // per-config case conversion + scenarios, serial (cheap)
    let mut prepared: Vec<(usize, GridCase, ScenarioSet)> = Vec::new();
    let mut failed_configs: Vec<(usize, String)> = Vec::new();
    for (ci, config) in spec.penetration_configs.iter().enumerate() {
        match apply_wind_conversion(base_case, &config.convert_generator_ids) {
            Ok(converted) => {
                match scenarios_for_case(&converted, load_fc, wind_fc, &spec.scenario) {
                    Ok(scen) => prepared.push((ci, converted, scen)),
                    Err(e) => failed_configs.push((ci, e.to_string())),
                }
            }
            Err(e) => failed_configs.push((ci, e.to_string())),
        }
    }

    let mut jobs: Vec<(usize, usize)> = Vec::new();
    for (idx, _) in prepared.iter().enumerate() {
        for (si, _) in spec.bess_sizes_mw.iter().enumerate() {
            jobs.push((idx, si));
        }
    }

    let mut cells: Vec<((usize, usize), SweepCell)> = jobs
        .par_iter()
        .map(|&(pi, si)| {
            let (ci, converted, scen) = &prepared[pi];
            let config = &spec.penetration_configs[*ci];
            let size = spec.bess_sizes_mw[si];
            ((*ci, si), run_cell(spec, converted, scen, config, size))
        })
        .collect();

    for (ci, err) in failed_configs {
        for (si, &size) in spec.bess_sizes_mw.iter().enumerate() {
            cells.push((
                (ci, si),
                SweepCell {
                    config: spec.penetration_configs[ci].label.clone(),
                    penetration: f64::NAN,
                    bess_size_mw: size,
                    status: CellStatus::Failed(err.clone()),
                    expected_cost: f64::NAN,
                    expected_wind_curtailment_mwh: f64::NAN,
                    first_stage_wind_curtailment_mwh: f64::NAN,
                    gap: f64::NAN,
                    nodes: 0,
                    wall_seconds: 0.0,
                },
            ));
        }
    }

    cells.sort_by_key(|&(key, _)| key);
    SweepResult {
        cells: cells.into_iter().map(|(_, c)| c).collect(),
    }
}

/// Format with 6 significant digits (CSV contract).
pub fn fmt6(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).clamp(0, 17) as usize;
    let s = format!("{v:.decimals$}");
    // strip trailing zeros after the decimal point
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn parse_status(s: &str) -> CellStatus {
    if s == "ok" {
        CellStatus::Ok
    } else {
        CellStatus::Failed(s.trim_start_matches("failed:").to_string())
    }
}

fn status_str(c: &CellStatus) -> String {
    match c {
        CellStatus::Ok => "ok".to_string(),
        CellStatus::Failed(msg) => format!("failed:{}", msg.replace(',', ";")),
    }
}

pub const SWEEP_CSV_HEADER: &str = "config,penetration,bess_size_mw,status,expected_cost,expected_wind_curtailment_mwh,first_stage_wind_curtailment_mwh,gap,nodes";

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for c in &result.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            c.config,
            fmt6(c.penetration),
            fmt6(c.bess_size_mw),
            status_str(&c.status),
            fmt6(c.expected_cost),
            fmt6(c.expected_wind_curtailment_mwh),
            fmt6(c.first_stage_wind_curtailment_mwh),
            fmt6(c.gap),
            c.nodes,
        ));
    }
    out
}

/// Re-parse `sweep.csv` (wall times are not in the CSV and come back as
/// zero).
pub fn parse_sweep_csv(text: &str) -> Result<SweepResult, SweepError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| SweepError::Parse("empty".into()))?;
    if header != SWEEP_CSV_HEADER {
        return Err(SweepError::Parse(format!("bad header {header:?}")));
    }
    let mut cells = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(SweepError::Parse(format!(
                "row {} has {} fields",
                n + 2,
                f.len()
            )));
        }
        let num = |s: &str| -> Result<f64, SweepError> {
            s.parse()
                .map_err(|_| SweepError::Parse(format!("bad number {s} on row {}", n + 2)))
        };
        cells.push(SweepCell {
            config: f[0].to_string(),
            penetration: num(f[1])?,
            bess_size_mw: num(f[2])?,
            status: parse_status(f[3]),
            expected_cost: num(f[4])?,
            expected_wind_curtailment_mwh: num(f[5])?,
            first_stage_wind_curtailment_mwh: num(f[6])?,
            gap: num(f[7])?,
            nodes: f[8]
                .parse()
                .map_err(|_| SweepError::Parse(format!("bad node count on row {}", n + 2)))?,
            wall_seconds: 0.0,
        });
    }
    Ok(SweepResult { cells })
}

/// Per-timestep dispatch summary columns (system totals, MW): demand,
/// conventional generation dispatch, available wind, battery dispatch
/// (negative = charging), wind curtailment.
pub fn dispatch_csv(sol: &DispatchSolution) -> String {
    let mut out = String::from("t,demand_mw,cgd_mw,wg_mw,bd_mw,wc_mw\n");
    for t in 0..sol.horizon {
        let demand: f64 = sol.forecast_demand_mw[t];
        let cgd: f64 =
            sol.generation[t].iter().sum::<f64>() - sol.gen_curtail[t].iter().sum::<f64>();
        let wg: f64 = sol.forecast_wind_mw[t];
        let bd = sol.battery_dispatch_mw(t);
        let wc = sol.wind_curtail_mw(t);
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t + 1,
            fmt6(demand),
            fmt6(cgd),
            fmt6(wg),
            fmt6(bd),
            fmt6(wc)
        ));
    }
    out
}

pub fn curtailment_curve_csv(result: &SweepResult) -> String {
    let mut out = String::from("config,penetration,bess_size_mw,expected_wind_curtailment_mwh\n");
    for c in &result.cells {
        if c.status != CellStatus::Ok {
            continue;
        }
        out.push_str(&format!(
            "{},{},{},{}\n",
            c.config,
            fmt6(c.penetration),
            fmt6(c.bess_size_mw),
            fmt6(c.expected_wind_curtailment_mwh)
        ));
    }
    out
}

pub fn savings_curve_csv(rows: &[SavingsRow]) -> String {
    let mut out = String::from("config,bess_size_mw,cost,savings_abs,savings_pct\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.config,
            fmt6(r.bess_size_mw),
            fmt6(r.cost),
            fmt6(r.savings_abs),
            fmt6(r.savings_pct)
        ));
    }
    out
}

/// Write sweep.csv, dispatch.csv, curtailment_curve.csv and
/// savings_curve.csv under `dir`; returns the written paths.
pub fn emit_report(
    result: &SweepResult,
    dispatch: Option<&DispatchSolution>,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, SweepError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| SweepError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let write = |name: &str, text: String| -> Result<PathBuf, SweepError> {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|source| SweepError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(path)
    };
    let mut written = Vec::new();
    written.push(write("sweep.csv", sweep_csv(result))?);
    if let Some(sol) = dispatch {
        written.push(write("dispatch.csv", dispatch_csv(sol))?);
    }
    written.push(write(
        "curtailment_curve.csv",
        curtailment_curve_csv(result),
    )?);
    let savings = compute_savings(result).unwrap_or_default();
    written.push(write("savings_curve.csv", savings_curve_csv(&savings))?);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(config: &str, size: f64, cost: f64) -> SweepCell {
        SweepCell {
            config: config.to_string(),
            penetration: 0.2,
            bess_size_mw: size,
            status: CellStatus::Ok,
            expected_cost: cost,
            expected_wind_curtailment_mwh: 1.0,
            first_stage_wind_curtailment_mwh: 0.5,
            gap: 0.0,
            nodes: 1,
            wall_seconds: 0.1,
        }
    }

    #[test]
    fn savings_reproduce_reported_pair() {
        let result = SweepResult {
            cells: vec![cell("20pct", 0.0, 191836.0), cell("20pct", 60.0, 176906.0)],
        };
        let rows = compute_savings(&result).unwrap();
        let sixty = rows.iter().find(|r| r.bess_size_mw == 60.0).unwrap();
        assert!((sixty.savings_abs - 14930.0).abs() < 1e-9);
        assert!((sixty.savings_pct - 7.78).abs() < 0.01);
        let zero = rows.iter().find(|r| r.bess_size_mw == 0.0).unwrap();
        assert_eq!(zero.savings_abs, 0.0);
        assert_eq!(zero.savings_pct, 0.0);
    }

    #[test]
    fn savings_pct_is_scale_invariant() {
        let base = SweepResult {
            cells: vec![cell("a", 0.0, 200000.0), cell("a", 40.0, 150000.0)],
        };
        let doubled = SweepResult {
            cells: vec![cell("a", 0.0, 400000.0), cell("a", 40.0, 300000.0)],
        };
        let r1 = compute_savings(&base).unwrap();
        let r2 = compute_savings(&doubled).unwrap();
        for (a, b) in r1.iter().zip(&r2) {
            assert!((a.savings_pct - b.savings_pct).abs() < 1e-12);
        }
        assert!((r1[1].savings_pct - 25.0).abs() < 1e-12);
    }

    #[test]
    fn missing_baseline_is_an_error() {
        let result = SweepResult {
            cells: vec![cell("a", 20.0, 100.0)],
        };
        assert!(matches!(
            compute_savings(&result),
            Err(SweepError::MissingBaseline(_))
        ));
    }

    #[test]
    fn sweep_csv_round_trip() {
        let mut failed = cell("b", 20.0, f64::NAN);
        failed.status = CellStatus::Failed("solver exploded".into());
        failed.expected_cost = f64::NAN;
        let result = SweepResult {
            cells: vec![cell("a", 0.0, 191836.0), cell("a", 20.0, 185798.4), failed],
        };
        let text = sweep_csv(&result);
        let parsed = parse_sweep_csv(&text).unwrap();
        assert_eq!(parsed.cells.len(), 3);
        for (orig, back) in result.cells.iter().zip(&parsed.cells) {
            assert_eq!(orig.config, back.config);
            assert_eq!(orig.bess_size_mw, back.bess_size_mw);
            if orig.status == CellStatus::Ok {
                assert_eq!(orig.status, back.status);
                // values survive at 6 significant digits
                assert!(
                    (orig.expected_cost - back.expected_cost).abs()
                        <= 1e-5 * orig.expected_cost.abs().max(1.0)
                );
            }
        }
        // byte determinism of the formatter
        assert_eq!(text, sweep_csv(&result));
    }

    #[test]
    fn empty_sweep_emits_headers_only() {
        let result = SweepResult { cells: vec![] };
        assert_eq!(sweep_csv(&result).lines().count(), 1);
        assert_eq!(curtailment_curve_csv(&result).lines().count(), 1);
    }

    #[test]
    fn expected_recourse_aggregation() {
        // probability-weighted recourse: 0.5*100 + 0.5*200 = 150
        let probs = [0.5, 0.5];
        let costs = [100.0, 200.0];
        let expected: f64 = probs.iter().zip(&costs).map(|(p, c)| p * c).sum();
        assert_eq!(expected, 150.0);
    }

    #[test]
    fn fmt6_keeps_six_significant_digits() {
        assert_eq!(fmt6(191836.25), "191836");
        assert_eq!(fmt6(0.123456789), "0.123457");
        assert_eq!(fmt6(-7.781234), "-7.78123");
        assert_eq!(fmt6(0.0), "0");
        assert_eq!(fmt6(20.0), "20");
    }
}
