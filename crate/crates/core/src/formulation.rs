//! Two-stage dispatch formulation: extensive-form MILP construction,
//! solution extraction, and independent constraint replay.
//!
//! The first stage dispatches generators and batteries against the
//! forecast (DC network, ramping, piecewise-linearized quadratic costs,
//! big-M battery logic). The second stage instantiates, per scenario,
//! regulation around the first-stage setpoints, an independent battery
//! redispatch from the initial SOC, curtailments, and a scenario copy of
//! the network, with the expectation realized as a probability-weighted
//! sum in the single objective. Variable and row ordering is fixed
//! (stage, kind, entity, timestep, scenario) so model construction is
//! deterministic.

use crate::grid::{Generator, GridCase};
use crate::milp::{
    branch_and_bound, solve_complementarity_fastpath, solve_external, BnbOptions, MilpError,
    MilpModel, MipSolution, Sense,
};
use crate::scenarios::ScenarioSet;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Residual threshold for accepting a replayed solution (MW, radians,
/// or SOC fraction depending on the family).
pub const VERIFY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FormulationError {
    #[error("scenario set does not match case: {0}")]
    DimensionMismatch(String),
    #[error("scenario horizon is empty")]
    EmptyHorizon,
    #[error("solution vector has {got} values, model has {want}")]
    IndexMismatch { got: usize, want: usize },
    #[error("invalid cost parameters: {0}")]
    InvalidCosts(String),
    #[error(transparent)]
    Solver(#[from] MilpError),
}

/// Cost and horizon parameters; defaults mirror the bundled study
/// configuration (curtailment 100/3000/400 $/MWh, battery 10 $/MWh each
/// way, regulation at 1.5x the linear generation cost, 15-minute
/// intervals, 8-piece cost linearization).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostParams {
    pub c_wind_curtail: f64,
    pub c_load_curtail: f64,
    pub c_gen_curtail: f64,
    pub c_charge: f64,
    pub c_discharge: f64,
    /// Applied to each generator's linear cost to price regulation
    /// up/down.
    pub regulation_multiplier: f64,
    pub dt_hours: f64,
    pub pwl_segments: usize,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            c_wind_curtail: 100.0,
            c_load_curtail: 3000.0,
            c_gen_curtail: 400.0,
            c_charge: 10.0,
            c_discharge: 10.0,
            regulation_multiplier: 1.5,
            dt_hours: 0.25,
            pwl_segments: 8,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), FormulationError> {
        let nonneg = [
            ("c_wind_curtail", self.c_wind_curtail),
            ("c_load_curtail", self.c_load_curtail),
            ("c_gen_curtail", self.c_gen_curtail),
            ("c_charge", self.c_charge),
            ("c_discharge", self.c_discharge),
            ("regulation_multiplier", self.regulation_multiplier),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) {
                return Err(FormulationError::InvalidCosts(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        if !(self.dt_hours > 0.0) {
            return Err(FormulationError::InvalidCosts(format!(
                "dt_hours must be positive, got {}",
                self.dt_hours
            )));
        }
        if self.pwl_segments < 1 {
            return Err(FormulationError::InvalidCosts(
                "pwl_segments must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Ramp limit over one interval, MW.
    pub fn ramp_limit(&self, gen: &Generator) -> f64 {
        gen.ramp_mw_per_min * self.dt_hours * 60.0
    }

    pub fn regulation_price(&self, gen: &Generator) -> f64 {
        self.regulation_multiplier * gen.cost_b
    }
}

/// Quadratic generation cost at one point, $/h.
pub fn quadratic_cost(gen: &Generator, x: f64) -> f64 {
    gen.cost_a * x * x + gen.cost_b * x + gen.cost_c
}

/// Secant slopes/intercepts of the convex quadratic cost over
/// [p_min, p_max]: the epigraph of their max is the piecewise-linear
/// cost, exact at breakpoints and above the quadratic in between.
pub fn pwl_secants(gen: &Generator, segments: usize) -> Vec<(f64, f64)> {
    let (lo, hi) = (gen.p_min_mw, gen.p_max_mw);
    if hi - lo <= 0.0 {
        return vec![(0.0, quadratic_cost(gen, lo))];
    }
    let width = (hi - lo) / segments as f64;
    (0..segments)
        .map(|k| {
            let x0 = lo + k as f64 * width;
            let x1 = lo + (k + 1) as f64 * width;
            let slope = gen.cost_a * (x0 + x1) + gen.cost_b;
            let intercept = quadratic_cost(gen, x0) - slope * x0;
            (slope, intercept)
        })
        .collect()
}

/// Piecewise-linear cost value (max over secants), $/h.
pub fn pwl_cost(gen: &Generator, segments: usize, x: f64) -> f64 {
    pwl_secants(gen, segments)
        .iter()
        .map(|(s, i)| s * x + i)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Semantic identity of every MILP column. Entities are positions into
/// the case vectors (not external ids); `s` indexes scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKey {
    Gen { g: usize, t: usize },
    GenCurt { g: usize, t: usize },
    CostEpi { g: usize, t: usize },
    WindCurt { w: usize, t: usize },
    LoadCurt { i: usize, t: usize },
    Charge { b: usize, t: usize },
    Discharge { b: usize, t: usize },
    ChargeMode { b: usize, t: usize },
    DischargeMode { b: usize, t: usize },
    Soc { b: usize, t: usize },
    Angle { i: usize, t: usize },
    Flow { l: usize, t: usize },
    RegUp { g: usize, t: usize, s: usize },
    RegDown { g: usize, t: usize, s: usize },
    SGenCurt { g: usize, t: usize, s: usize },
    SWindCurt { w: usize, t: usize, s: usize },
    SLoadCurt { i: usize, t: usize, s: usize },
    SCharge { b: usize, t: usize, s: usize },
    SDischarge { b: usize, t: usize, s: usize },
    SChargeMode { b: usize, t: usize, s: usize },
    SDischargeMode { b: usize, t: usize, s: usize },
    SSoc { b: usize, t: usize, s: usize },
    SAngle { i: usize, t: usize, s: usize },
    SFlow { l: usize, t: usize, s: usize },
}

/// Paired column indices, e.g. (charge, discharge) or their binaries.
pub type ColumnPairs = Vec<(usize, usize)>;

/// Bidirectional map between [`VarKey`] and MILP column index.
#[derive(Debug, Clone, Default)]
pub struct VarIndex {
    keys: Vec<VarKey>,
    map: HashMap<VarKey, usize>,
}

impl VarIndex {
    fn push(&mut self, key: VarKey) -> usize {
        let idx = self.keys.len();
        self.keys.push(key);
        let prev = self.map.insert(key, idx);
        debug_assert!(prev.is_none(), "duplicate variable key {key:?}");
        idx
    }

    pub fn col(&self, key: VarKey) -> usize {
        *self
            .map
            .get(&key)
            .unwrap_or_else(|| panic!("variable {key:?} is not in the model"))
    }

    pub fn try_col(&self, key: VarKey) -> Option<usize> {
        self.map.get(&key).copied()
    }

    pub fn key(&self, col: usize) -> VarKey {
        self.keys[col]
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// (charge, discharge) power column pairs and their (mode-charge,
    /// mode-discharge) binaries, across both stages; the fast path
    /// checks the former and branches the latter.
    pub fn complementarity_pairs(&self) -> (ColumnPairs, ColumnPairs) {
        let mut powers = Vec::new();
        let mut modes = Vec::new();
        for (idx, key) in self.keys.iter().enumerate() {
            match *key {
                VarKey::Charge { b, t } => {
                    powers.push((idx, self.col(VarKey::Discharge { b, t })));
                    modes.push((
                        self.col(VarKey::ChargeMode { b, t }),
                        self.col(VarKey::DischargeMode { b, t }),
                    ));
                }
                VarKey::SCharge { b, t, s } => {
                    powers.push((idx, self.col(VarKey::SDischarge { b, t, s })));
                    modes.push((
                        self.col(VarKey::SChargeMode { b, t, s }),
                        self.col(VarKey::SDischargeMode { b, t, s }),
                    ));
                }
                _ => {}
            }
        }
        (powers, modes)
    }
}

fn check_dimensions(case: &GridCase, scen: &ScenarioSet) -> Result<(), FormulationError> {
    if scen.horizon() == 0 {
        return Err(FormulationError::EmptyHorizon);
    }
    let t = scen.horizon();
    if scen
        .forecast_load
        .iter()
        .any(|r| r.len() != case.buses.len())
    {
        return Err(FormulationError::DimensionMismatch(format!(
            "forecast load width != {} buses",
            case.buses.len()
        )));
    }
    if scen
        .forecast_wind
        .iter()
        .any(|r| r.len() != case.wind_plants.len())
    {
        return Err(FormulationError::DimensionMismatch(format!(
            "forecast wind width != {} plants",
            case.wind_plants.len()
        )));
    }
    if scen.load.len() != scen.probs.len() || scen.wind.len() != scen.probs.len() {
        return Err(FormulationError::DimensionMismatch(
            "scenario count differs between probs and values".into(),
        ));
    }
    for (s, (l, w)) in scen.load.iter().zip(&scen.wind).enumerate() {
        if l.len() != t || w.len() != t {
            return Err(FormulationError::DimensionMismatch(format!(
                "scenario {s} horizon differs from forecast"
            )));
        }
        if l.iter().any(|r| r.len() != case.buses.len())
            || w.iter().any(|r| r.len() != case.wind_plants.len())
        {
            return Err(FormulationError::DimensionMismatch(format!(
                "scenario {s} entity dimensions differ from case"
            )));
        }
    }
    Ok(())
}

/// Assemble the extensive-form MILP.
pub fn build_extensive_form(
    case: &GridCase,
    scen: &ScenarioSet,
    costs: &CostParams,
) -> Result<(MilpModel, VarIndex), FormulationError> {
    costs.validate()?;
    check_dimensions(case, scen)?;

    let horizon = scen.horizon();
    let n_scen = scen.n_scenarios();
    let dt = costs.dt_hours;
    let ref_bus = case.reference_bus();

    let mut model = MilpModel::new();
    let mut index = VarIndex::default();

    // --- first-stage variables ---
    for (g, gen) in case.generators.iter().enumerate() {
        for t in 0..horizon {
            let j = model.add_var(format!("xg_{g}_{t}"), gen.p_min_mw, gen.p_max_mw, 0.0);
            let key = index.push(VarKey::Gen { g, t });
            debug_assert_eq!(j, key);
        }
    }
    for (g, gen) in case.generators.iter().enumerate() {
        for t in 0..horizon {
            let j = model.add_var(
                format!("xgc_{g}_{t}"),
                0.0,
                gen.p_max_mw,
                dt * costs.c_gen_curtail,
            );
            let key = index.push(VarKey::GenCurt { g, t });
            debug_assert_eq!(j, key);
        }
    }
    for (g, _) in case.generators.iter().enumerate() {
        for t in 0..horizon {
            let j = model.add_var(
                format!("cost_{g}_{t}"),
                f64::NEG_INFINITY,
                f64::INFINITY,
                dt,
            );
            let key = index.push(VarKey::CostEpi { g, t });
            debug_assert_eq!(j, key);
        }
    }
    for (w, _) in case.wind_plants.iter().enumerate() {
        for t in 0..horizon {
            let j = model.add_var(
                format!("uc_{w}_{t}"),
                0.0,
                scen.forecast_wind[t][w],
                dt * costs.c_wind_curtail,
            );
            let key = index.push(VarKey::WindCurt { w, t });
            debug_assert_eq!(j, key);
        }
    }
    for (i, _) in case.buses.iter().enumerate() {
        for t in 0..horizon {
            let j = model.add_var(
                format!("dc_{i}_{t}"),
                0.0,
                scen.forecast_load[t][i],
                dt * costs.c_load_curtail,
            );
            let key = index.push(VarKey::LoadCurt { i, t });
            debug_assert_eq!(j, key);
        }
    }
    for (b, sto) in case.storage_units.iter().enumerate() {
        for t in 0..horizon {
            let j = model.add_var(
                format!("ch_{b}_{t}"),
                0.0,
                sto.rating_mw,
                dt * costs.c_charge,
            );
            let key = index.push(VarKey::Charge { b, t });
            debug_assert_eq!(j, key);
        }
    }
    for (b, sto) in case.storage_units.iter().enumerate() {
        for t in 0..horizon {
            let j = model.add_var(
                format!("dis_{b}_{t}"),
                0.0,
                sto.rating_mw,
                dt * costs.c_discharge,
            );
            let key = index.push(VarKey::Discharge { b, t });
            debug_assert_eq!(j, key);
        }
    }
    for (b, _) in case.storage_units.iter().enumerate() {
        for t in 0..horizon {
            let j = model.add_binary(format!("gch_{b}_{t}"));
            let key = index.push(VarKey::ChargeMode { b, t });
            debug_assert_eq!(j, key);
        }
    }
    for (b, _) in case.storage_units.iter().enumerate() {
        for t in 0..horizon {
            let j = model.add_binary(format!("gdis_{b}_{t}"));
            let key = index.push(VarKey::DischargeMode { b, t });
            debug_assert_eq!(j, key);
        }
    }
    for (b, sto) in case.storage_units.iter().enumerate() {
        for t in 0..horizon {
            let j = model.add_var(format!("soc_{b}_{t}"), sto.soc_min, sto.soc_max, 0.0);
            let key = index.push(VarKey::Soc { b, t });
            debug_assert_eq!(j, key);
        }
    }
    for (i, _) in case.buses.iter().enumerate() {
        for t in 0..horizon {
            let (lo, hi) = if i == ref_bus {
                (0.0, 0.0)
            } else {
                (f64::NEG_INFINITY, f64::INFINITY)
            };
            let j = model.add_var(format!("th_{i}_{t}"), lo, hi, 0.0);
            let key = index.push(VarKey::Angle { i, t });
            debug_assert_eq!(j, key);
        }
    }
    for (l, line) in case.lines.iter().enumerate() {
        for t in 0..horizon {
            let j = model.add_var(format!("p_{l}_{t}"), -line.limit_mw, line.limit_mw, 0.0);
            let key = index.push(VarKey::Flow { l, t });
            debug_assert_eq!(j, key);
        }
    }

    // --- second-stage variables ---
    for (g, gen) in case.generators.iter().enumerate() {
        if !gen.provides_regulation {
            continue;
        }
        for t in 0..horizon {
            for s in 0..n_scen {
                let price = dt * scen.probs[s] * costs.regulation_price(gen);
                let j = model.add_var(format!("rup_{g}_{t}_{s}"), 0.0, gen.p_max_mw, price);
                let key = index.push(VarKey::RegUp { g, t, s });
                debug_assert_eq!(j, key);
            }
        }
    }
    for (g, gen) in case.generators.iter().enumerate() {
        if !gen.provides_regulation {
            continue;
        }
        for t in 0..horizon {
            for s in 0..n_scen {
                let price = dt * scen.probs[s] * costs.regulation_price(gen);
                let j = model.add_var(format!("rdn_{g}_{t}_{s}"), 0.0, gen.p_max_mw, price);
                let key = index.push(VarKey::RegDown { g, t, s });
                debug_assert_eq!(j, key);
            }
        }
    }
    for (g, gen) in case.generators.iter().enumerate() {
        if gen.provides_regulation {
            continue;
        }
        for t in 0..horizon {
            for s in 0..n_scen {
                let j = model.add_var(
                    format!("sgc_{g}_{t}_{s}"),
                    0.0,
                    gen.p_max_mw,
                    dt * scen.probs[s] * costs.c_gen_curtail,
                );
                let key = index.push(VarKey::SGenCurt { g, t, s });
                debug_assert_eq!(j, key);
            }
        }
    }
    for (w, _) in case.wind_plants.iter().enumerate() {
        for t in 0..horizon {
            for s in 0..n_scen {
                let j = model.add_var(
                    format!("suc_{w}_{t}_{s}"),
                    0.0,
                    scen.wind[s][t][w],
                    dt * scen.probs[s] * costs.c_wind_curtail,
                );
                let key = index.push(VarKey::SWindCurt { w, t, s });
                debug_assert_eq!(j, key);
            }
        }
    }
    for (i, _) in case.buses.iter().enumerate() {
        for t in 0..horizon {
            for s in 0..n_scen {
                let j = model.add_var(
                    format!("sdc_{i}_{t}_{s}"),
                    0.0,
                    scen.load[s][t][i],
                    dt * scen.probs[s] * costs.c_load_curtail,
                );
                let key = index.push(VarKey::SLoadCurt { i, t, s });
                debug_assert_eq!(j, key);
            }
        }
    }
    for (b, sto) in case.storage_units.iter().enumerate() {
        for t in 0..horizon {
            for s in 0..n_scen {
                let j = model.add_var(
                    format!("sch_{b}_{t}_{s}"),
                    0.0,
                    sto.rating_mw,
                    dt * scen.probs[s] * costs.c_charge,
                );
                let key = index.push(VarKey::SCharge { b, t, s });
                debug_assert_eq!(j, key);
            }
        }
    }
    for (b, sto) in case.storage_units.iter().enumerate() {
        for t in 0..horizon {
            for s in 0..n_scen {
                let j = model.add_var(
                    format!("sdis_{b}_{t}_{s}"),
                    0.0,
                    sto.rating_mw,
                    dt * scen.probs[s] * costs.c_discharge,
                );
                let key = index.push(VarKey::SDischarge { b, t, s });
                debug_assert_eq!(j, key);
            }
        }
    }
    for (b, _) in case.storage_units.iter().enumerate() {
        for t in 0..horizon {
            for s in 0..n_scen {
                let j = model.add_binary(format!("sgch_{b}_{t}_{s}"));
                let key = index.push(VarKey::SChargeMode { b, t, s });
                debug_assert_eq!(j, key);
            }
        }
    }
    for (b, _) in case.storage_units.iter().enumerate() {
        for t in 0..horizon {
            for s in 0..n_scen {
                let j = model.add_binary(format!("sgdis_{b}_{t}_{s}"));
                let key = index.push(VarKey::SDischargeMode { b, t, s });
                debug_assert_eq!(j, key);
            }
        }
    }
    for (b, sto) in case.storage_units.iter().enumerate() {
        for t in 0..horizon {
            for s in 0..n_scen {
                let j = model.add_var(format!("ssoc_{b}_{t}_{s}"), sto.soc_min, sto.soc_max, 0.0);
                let key = index.push(VarKey::SSoc { b, t, s });
                debug_assert_eq!(j, key);
            }
        }
    }
    for (i, _) in case.buses.iter().enumerate() {
        for t in 0..horizon {
            for s in 0..n_scen {
                let (lo, hi) = if i == ref_bus {
                    (0.0, 0.0)
                } else {
                    (f64::NEG_INFINITY, f64::INFINITY)
                };
                let j = model.add_var(format!("sth_{i}_{t}_{s}"), lo, hi, 0.0);
                let key = index.push(VarKey::SAngle { i, t, s });
                debug_assert_eq!(j, key);
            }
        }
    }
    for (l, line) in case.lines.iter().enumerate() {
        for t in 0..horizon {
            for s in 0..n_scen {
                let j = model.add_var(
                    format!("sp_{l}_{t}_{s}"),
                    -line.limit_mw,
                    line.limit_mw,
                    0.0,
                );
                let key = index.push(VarKey::SFlow { l, t, s });
                debug_assert_eq!(j, key);
            }
        }
    }

    // adjacency: generators/wind/storage per bus position
    let bus_pos = case.bus_index();
    let gens_at: Vec<Vec<usize>> = adjacency(
        case.buses.len(),
        case.generators.iter().map(|g| bus_pos[&g.bus]),
    );
    let wind_at: Vec<Vec<usize>> = adjacency(
        case.buses.len(),
        case.wind_plants.iter().map(|w| bus_pos[&w.bus]),
    );
    let sto_at: Vec<Vec<usize>> = adjacency(
        case.buses.len(),
        case.storage_units.iter().map(|s| bus_pos[&s.bus]),
    );
    let lines_in: Vec<Vec<usize>> = adjacency(
        case.buses.len(),
        case.lines.iter().map(|l| bus_pos[&l.to_bus]),
    );
    let lines_out: Vec<Vec<usize>> = adjacency(
        case.buses.len(),
        case.lines.iter().map(|l| bus_pos[&l.from_bus]),
    );

    // --- first-stage rows ---
    for (i, _) in case.buses.iter().enumerate() {
        for t in 0..horizon {
            let mut coeffs: Vec<(usize, f64)> = Vec::new();
            for &g in &gens_at[i] {
                coeffs.push((index.col(VarKey::Gen { g, t }), 1.0));
                coeffs.push((index.col(VarKey::GenCurt { g, t }), -1.0));
            }
            let mut rhs = scen.forecast_load[t][i];
            for &w in &wind_at[i] {
                coeffs.push((index.col(VarKey::WindCurt { w, t }), -1.0));
                rhs -= scen.forecast_wind[t][w];
            }
            for &b in &sto_at[i] {
                coeffs.push((index.col(VarKey::Discharge { b, t }), 1.0));
                coeffs.push((index.col(VarKey::Charge { b, t }), -1.0));
            }
            for &l in &lines_in[i] {
                coeffs.push((index.col(VarKey::Flow { l, t }), 1.0));
            }
            for &l in &lines_out[i] {
                coeffs.push((index.col(VarKey::Flow { l, t }), -1.0));
            }
            coeffs.push((index.col(VarKey::LoadCurt { i, t }), 1.0));
            model.add_row(format!("bal_{i}_{t}"), Sense::Eq, rhs, coeffs);
        }
    }
    for (l, line) in case.lines.iter().enumerate() {
        let b_mw = case.base_mva * line.susceptance_pu;
        let (fi, ti) = (bus_pos[&line.from_bus], bus_pos[&line.to_bus]);
        for t in 0..horizon {
            model.add_row(
                format!("pdef_{l}_{t}"),
                Sense::Eq,
                -b_mw * line.phase_shift_rad,
                vec![
                    (index.col(VarKey::Flow { l, t }), 1.0),
                    (index.col(VarKey::Angle { i: fi, t }), -b_mw),
                    (index.col(VarKey::Angle { i: ti, t }), b_mw),
                ],
            );
        }
    }
    for (l, line) in case.lines.iter().enumerate() {
        let (fi, ti) = (bus_pos[&line.from_bus], bus_pos[&line.to_bus]);
        let (lo, hi) = line.angle_diff_bounds_rad;
        for t in 0..horizon {
            let coeffs = vec![
                (index.col(VarKey::Angle { i: fi, t }), 1.0),
                (index.col(VarKey::Angle { i: ti, t }), -1.0),
            ];
            model.add_row(format!("angu_{l}_{t}"), Sense::Le, hi, coeffs.clone());
            model.add_row(format!("angl_{l}_{t}"), Sense::Ge, lo, coeffs);
        }
    }
    for (g, gen) in case.generators.iter().enumerate() {
        let ramp = costs.ramp_limit(gen);
        for t in 1..horizon {
            let coeffs = vec![
                (index.col(VarKey::Gen { g, t }), 1.0),
                (index.col(VarKey::Gen { g, t: t - 1 }), -1.0),
            ];
            model.add_row(format!("rampu_{g}_{t}"), Sense::Le, ramp, coeffs.clone());
            model.add_row(format!("rampl_{g}_{t}"), Sense::Ge, -ramp, coeffs);
        }
    }
    for (g, _) in case.generators.iter().enumerate() {
        for t in 0..horizon {
            model.add_row(
                format!("gcc_{g}_{t}"),
                Sense::Le,
                0.0,
                vec![
                    (index.col(VarKey::GenCurt { g, t }), 1.0),
                    (index.col(VarKey::Gen { g, t }), -1.0),
                ],
            );
        }
    }
    for (g, gen) in case.generators.iter().enumerate() {
        let secants = pwl_secants(gen, costs.pwl_segments);
        for t in 0..horizon {
            for (k, &(slope, intercept)) in secants.iter().enumerate() {
                model.add_row(
                    format!("pwl_{g}_{t}_{k}"),
                    Sense::Ge,
                    intercept,
                    vec![
                        (index.col(VarKey::CostEpi { g, t }), 1.0),
                        (index.col(VarKey::Gen { g, t }), -slope),
                    ],
                );
            }
        }
    }
    for (b, sto) in case.storage_units.iter().enumerate() {
        let ch_coef = sto.eta_ch * dt / sto.energy_cap_mwh;
        let dis_coef = dt / (sto.eta_dis * sto.energy_cap_mwh);
        for t in 0..horizon {
            model.add_row(
                format!("chcap_{b}_{t}"),
                Sense::Le,
                0.0,
                vec![
                    (index.col(VarKey::Charge { b, t }), 1.0),
                    (index.col(VarKey::ChargeMode { b, t }), -sto.rating_mw),
                ],
            );
            model.add_row(
                format!("discap_{b}_{t}"),
                Sense::Le,
                0.0,
                vec![
                    (index.col(VarKey::Discharge { b, t }), 1.0),
                    (index.col(VarKey::DischargeMode { b, t }), -sto.rating_mw),
                ],
            );
            model.add_row(
                format!("cmpl_{b}_{t}"),
                Sense::Le,
                1.0,
                vec![
                    (index.col(VarKey::ChargeMode { b, t }), 1.0),
                    (index.col(VarKey::DischargeMode { b, t }), 1.0),
                ],
            );
            let mut coeffs = vec![
                (index.col(VarKey::Soc { b, t }), 1.0),
                (index.col(VarKey::Charge { b, t }), -ch_coef),
                (index.col(VarKey::Discharge { b, t }), dis_coef),
            ];
            let rhs = if t == 0 {
                sto.soc_init
            } else {
                coeffs.push((index.col(VarKey::Soc { b, t: t - 1 }), -1.0));
                0.0
            };
            model.add_row(format!("socr_{b}_{t}"), Sense::Eq, rhs, coeffs);
        }
    }

    // --- second-stage rows ---
    for s in 0..n_scen {
        for (i, _) in case.buses.iter().enumerate() {
            for t in 0..horizon {
                let mut coeffs: Vec<(usize, f64)> = Vec::new();
                for &g in &gens_at[i] {
                    coeffs.push((index.col(VarKey::Gen { g, t }), 1.0));
                    if case.generators[g].provides_regulation {
                        coeffs.push((index.col(VarKey::RegUp { g, t, s }), 1.0));
                        coeffs.push((index.col(VarKey::RegDown { g, t, s }), -1.0));
                    } else {
                        coeffs.push((index.col(VarKey::SGenCurt { g, t, s }), -1.0));
                    }
                }
                let mut rhs = scen.load[s][t][i];
                for &w in &wind_at[i] {
                    coeffs.push((index.col(VarKey::SWindCurt { w, t, s }), -1.0));
                    rhs -= scen.wind[s][t][w];
                }
                for &b in &sto_at[i] {
                    coeffs.push((index.col(VarKey::SDischarge { b, t, s }), 1.0));
                    coeffs.push((index.col(VarKey::SCharge { b, t, s }), -1.0));
                }
                for &l in &lines_in[i] {
                    coeffs.push((index.col(VarKey::SFlow { l, t, s }), 1.0));
                }
                for &l in &lines_out[i] {
                    coeffs.push((index.col(VarKey::SFlow { l, t, s }), -1.0));
                }
                coeffs.push((index.col(VarKey::SLoadCurt { i, t, s }), 1.0));
                model.add_row(format!("sbal_{i}_{t}_{s}"), Sense::Eq, rhs, coeffs);
            }
        }
        for (g, gen) in case.generators.iter().enumerate() {
            if !gen.provides_regulation {
                continue;
            }
            let ramp = costs.ramp_limit(gen);
            for t in 0..horizon {
                model.add_row(
                    format!("rupcap_{g}_{t}_{s}"),
                    Sense::Le,
                    gen.p_max_mw,
                    vec![
                        (index.col(VarKey::Gen { g, t }), 1.0),
                        (index.col(VarKey::RegUp { g, t, s }), 1.0),
                    ],
                );
                model.add_row(
                    format!("rdncap_{g}_{t}_{s}"),
                    Sense::Ge,
                    gen.p_min_mw,
                    vec![
                        (index.col(VarKey::Gen { g, t }), 1.0),
                        (index.col(VarKey::RegDown { g, t, s }), -1.0),
                    ],
                );
                if t >= 1 {
                    let coeffs = vec![
                        (index.col(VarKey::Gen { g, t }), 1.0),
                        (index.col(VarKey::RegUp { g, t, s }), 1.0),
                        (index.col(VarKey::RegDown { g, t, s }), -1.0),
                        (index.col(VarKey::Gen { g, t: t - 1 }), -1.0),
                        (index.col(VarKey::RegUp { g, t: t - 1, s }), -1.0),
                        (index.col(VarKey::RegDown { g, t: t - 1, s }), 1.0),
                    ];
                    model.add_row(
                        format!("srampu_{g}_{t}_{s}"),
                        Sense::Le,
                        ramp,
                        coeffs.clone(),
                    );
                    model.add_row(format!("srampl_{g}_{t}_{s}"), Sense::Ge, -ramp, coeffs);
                }
            }
        }
        for (l, line) in case.lines.iter().enumerate() {
            let b_mw = case.base_mva * line.susceptance_pu;
            let (fi, ti) = (bus_pos[&line.from_bus], bus_pos[&line.to_bus]);
            let (lo, hi) = line.angle_diff_bounds_rad;
            for t in 0..horizon {
                model.add_row(
                    format!("spdef_{l}_{t}_{s}"),
                    Sense::Eq,
                    -b_mw * line.phase_shift_rad,
                    vec![
                        (index.col(VarKey::SFlow { l, t, s }), 1.0),
                        (index.col(VarKey::SAngle { i: fi, t, s }), -b_mw),
                        (index.col(VarKey::SAngle { i: ti, t, s }), b_mw),
                    ],
                );
                let coeffs = vec![
                    (index.col(VarKey::SAngle { i: fi, t, s }), 1.0),
                    (index.col(VarKey::SAngle { i: ti, t, s }), -1.0),
                ];
                model.add_row(format!("sangu_{l}_{t}_{s}"), Sense::Le, hi, coeffs.clone());
                model.add_row(format!("sangl_{l}_{t}_{s}"), Sense::Ge, lo, coeffs);
            }
        }
        for (b, sto) in case.storage_units.iter().enumerate() {
            let ch_coef = sto.eta_ch * dt / sto.energy_cap_mwh;
            let dis_coef = dt / (sto.eta_dis * sto.energy_cap_mwh);
            for t in 0..horizon {
                model.add_row(
                    format!("schcap_{b}_{t}_{s}"),
                    Sense::Le,
                    0.0,
                    vec![
                        (index.col(VarKey::SCharge { b, t, s }), 1.0),
                        (index.col(VarKey::SChargeMode { b, t, s }), -sto.rating_mw),
                    ],
                );
                model.add_row(
                    format!("sdiscap_{b}_{t}_{s}"),
                    Sense::Le,
                    0.0,
                    vec![
                        (index.col(VarKey::SDischarge { b, t, s }), 1.0),
                        (
                            index.col(VarKey::SDischargeMode { b, t, s }),
                            -sto.rating_mw,
                        ),
                    ],
                );
                model.add_row(
                    format!("scmpl_{b}_{t}_{s}"),
                    Sense::Le,
                    1.0,
                    vec![
                        (index.col(VarKey::SChargeMode { b, t, s }), 1.0),
                        (index.col(VarKey::SDischargeMode { b, t, s }), 1.0),
                    ],
                );
                let mut coeffs = vec![
                    (index.col(VarKey::SSoc { b, t, s }), 1.0),
                    (index.col(VarKey::SCharge { b, t, s }), -ch_coef),
                    (index.col(VarKey::SDischarge { b, t, s }), dis_coef),
                ];
                let rhs = if t == 0 {
                    sto.soc_init
                } else {
                    coeffs.push((index.col(VarKey::SSoc { b, t: t - 1, s }), -1.0));
                    0.0
                };
                model.add_row(format!("ssocr_{b}_{t}_{s}"), Sense::Eq, rhs, coeffs);
            }
        }
    }

    Ok((model, index))
}

fn adjacency(n: usize, positions: impl Iterator<Item = usize>) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); n];
    for (idx, pos) in positions.enumerate() {
        out[pos].push(idx);
    }
    out
}

/// Solver backend selection for a built model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "command")]
pub enum SolverChoice {
    /// Branch-and-bound over all mode binaries.
    Internal,
    /// LP relaxation accepted when charge/discharge complementarity
    /// holds, branch-and-bound fallback otherwise.
    InternalFastpath,
    /// `cmd <model.mps> <solution.out>` subprocess.
    External(String),
}

pub fn solve_model(
    model: &MilpModel,
    index: &VarIndex,
    choice: &SolverChoice,
    opts: &BnbOptions,
) -> Result<MipSolution, MilpError> {
    match choice {
        SolverChoice::Internal => branch_and_bound(model, opts),
        SolverChoice::InternalFastpath => {
            let (powers, modes) = index.complementarity_pairs();
            solve_complementarity_fastpath(model, &powers, &modes, opts)
        }
        SolverChoice::External(cmd) => solve_external(model, cmd),
    }
}

/// First-stage trajectories, per-scenario recourse, and the cost
/// breakdown. All powers MW, SOC as fractions; battery dispatch is
/// reported as discharge minus charge (negative means net charging).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub horizon: usize,
    pub generation: Vec<Vec<f64>>,
    pub gen_curtail: Vec<Vec<f64>>,
    pub wind_curtail: Vec<Vec<f64>>,
    pub load_curtail: Vec<Vec<f64>>,
    pub charge: Vec<Vec<f64>>,
    pub discharge: Vec<Vec<f64>>,
    pub soc: Vec<Vec<f64>>,
    pub angles: Vec<Vec<f64>>,
    pub flows: Vec<Vec<f64>>,
    /// System totals of the forecast the first stage dispatched against.
    pub forecast_demand_mw: Vec<f64>,
    pub forecast_wind_mw: Vec<f64>,
    pub scenarios: Vec<ScenarioDispatch>,
    pub costs: CostBreakdown,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioDispatch {
    pub prob: f64,
    pub reg_up: Vec<Vec<f64>>,
    pub reg_down: Vec<Vec<f64>>,
    pub gen_curtail: Vec<Vec<f64>>,
    pub wind_curtail: Vec<Vec<f64>>,
    pub load_curtail: Vec<Vec<f64>>,
    pub charge: Vec<Vec<f64>>,
    pub discharge: Vec<Vec<f64>>,
    pub soc: Vec<Vec<f64>>,
    pub angles: Vec<Vec<f64>>,
    pub flows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub generation: f64,
    pub battery: f64,
    pub curtailment: f64,
    pub expected_recourse: f64,
    pub total: f64,
}

impl DispatchSolution {
    /// Net battery output at t, discharge minus charge (MW).
    pub fn battery_dispatch_mw(&self, t: usize) -> f64 {
        self.discharge[t].iter().sum::<f64>() - self.charge[t].iter().sum::<f64>()
    }

    /// First-stage wind curtailment total at t (MW).
    pub fn wind_curtail_mw(&self, t: usize) -> f64 {
        self.wind_curtail[t].iter().sum()
    }

    /// Probability-weighted scenario wind curtailment energy (MWh).
    pub fn expected_scenario_wind_curtailment_mwh(&self, dt_hours: f64) -> f64 {
        self.scenarios
            .iter()
            .map(|sc| {
                sc.prob
                    * sc.wind_curtail
                        .iter()
                        .map(|row| row.iter().sum::<f64>())
                        .sum::<f64>()
                    * dt_hours
            })
            .sum()
    }

    /// First-stage wind curtailment energy (MWh).
    pub fn first_stage_wind_curtailment_mwh(&self, dt_hours: f64) -> f64 {
        self.wind_curtail
            .iter()
            .map(|row| row.iter().sum::<f64>())
            .sum::<f64>()
            * dt_hours
    }
}

pub fn extract_solution(
    raw: &MipSolution,
    index: &VarIndex,
    case: &GridCase,
    scen: &ScenarioSet,
    costs: &CostParams,
) -> Result<DispatchSolution, FormulationError> {
    if raw.x.len() != index.len() {
        return Err(FormulationError::IndexMismatch {
            got: raw.x.len(),
            want: index.len(),
        });
    }
    let horizon = scen.horizon();
    let n_scen = scen.n_scenarios();
    let dt = costs.dt_hours;
    let v = |key: VarKey| raw.x[index.col(key)];

    let grid2 = |n: usize, f: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
        (0..horizon)
            .map(|t| (0..n).map(|e| f(e, t)).collect())
            .collect()
    };

    let generation = grid2(case.generators.len(), &|g, t| v(VarKey::Gen { g, t }));
    let gen_curtail = grid2(case.generators.len(), &|g, t| v(VarKey::GenCurt { g, t }));
    let wind_curtail = grid2(case.wind_plants.len(), &|w, t| v(VarKey::WindCurt { w, t }));
    let load_curtail = grid2(case.buses.len(), &|i, t| v(VarKey::LoadCurt { i, t }));
    let charge = grid2(case.storage_units.len(), &|b, t| v(VarKey::Charge { b, t }));
    let discharge = grid2(case.storage_units.len(), &|b, t| {
        v(VarKey::Discharge { b, t })
    });
    let soc = grid2(case.storage_units.len(), &|b, t| v(VarKey::Soc { b, t }));
    let angles = grid2(case.buses.len(), &|i, t| v(VarKey::Angle { i, t }));
    let flows = grid2(case.lines.len(), &|l, t| v(VarKey::Flow { l, t }));

    let mut scenarios = Vec::with_capacity(n_scen);
    for s in 0..n_scen {
        let reg = |g: usize, t: usize, up: bool| {
            if case.generators[g].provides_regulation {
                if up {
                    v(VarKey::RegUp { g, t, s })
                } else {
                    v(VarKey::RegDown { g, t, s })
                }
            } else {
                0.0
            }
        };
        scenarios.push(ScenarioDispatch {
            prob: scen.probs[s],
            reg_up: grid2(case.generators.len(), &|g, t| reg(g, t, true)),
            reg_down: grid2(case.generators.len(), &|g, t| reg(g, t, false)),
            gen_curtail: grid2(case.generators.len(), &|g, t| {
                if case.generators[g].provides_regulation {
                    0.0
                } else {
                    v(VarKey::SGenCurt { g, t, s })
                }
            }),
            wind_curtail: grid2(case.wind_plants.len(), &|w, t| {
                v(VarKey::SWindCurt { w, t, s })
            }),
            load_curtail: grid2(case.buses.len(), &|i, t| v(VarKey::SLoadCurt { i, t, s })),
            charge: grid2(case.storage_units.len(), &|b, t| {
                v(VarKey::SCharge { b, t, s })
            }),
            discharge: grid2(case.storage_units.len(), &|b, t| {
                v(VarKey::SDischarge { b, t, s })
            }),
            soc: grid2(case.storage_units.len(), &|b, t| {
                v(VarKey::SSoc { b, t, s })
            }),
            angles: grid2(case.buses.len(), &|i, t| v(VarKey::SAngle { i, t, s })),
            flows: grid2(case.lines.len(), &|l, t| v(VarKey::SFlow { l, t, s })),
        });
    }

    // cost accounting from the extracted trajectories
    let mut generation_cost = 0.0;
    for t in 0..horizon {
        for (g, _) in case.generators.iter().enumerate() {
            generation_cost += dt * v(VarKey::CostEpi { g, t });
        }
    }
    let mut battery_cost = 0.0;
    let mut curtail_cost = 0.0;
    for t in 0..horizon {
        for (ch, dis) in charge[t].iter().zip(&discharge[t]) {
            battery_cost += dt * (costs.c_charge * ch + costs.c_discharge * dis);
        }
        for xc in &gen_curtail[t] {
            curtail_cost += dt * costs.c_gen_curtail * xc;
        }
        for uc in &wind_curtail[t] {
            curtail_cost += dt * costs.c_wind_curtail * uc;
        }
        for lc in &load_curtail[t] {
            curtail_cost += dt * costs.c_load_curtail * lc;
        }
    }
    let mut recourse = 0.0;
    for sc in &scenarios {
        let mut q = 0.0;
        for t in 0..horizon {
            for (g, gen) in case.generators.iter().enumerate() {
                let r = costs.regulation_price(gen);
                q += dt * r * (sc.reg_up[t][g] + sc.reg_down[t][g]);
                q += dt * costs.c_gen_curtail * sc.gen_curtail[t][g];
            }
            for w in 0..case.wind_plants.len() {
                q += dt * costs.c_wind_curtail * sc.wind_curtail[t][w];
            }
            for i in 0..case.buses.len() {
                q += dt * costs.c_load_curtail * sc.load_curtail[t][i];
            }
            for b in 0..case.storage_units.len() {
                q += dt
                    * (costs.c_charge * sc.charge[t][b] + costs.c_discharge * sc.discharge[t][b]);
            }
        }
        recourse += sc.prob * q;
    }

    let costs_out = CostBreakdown {
        generation: generation_cost,
        battery: battery_cost,
        curtailment: curtail_cost,
        expected_recourse: recourse,
        total: generation_cost + battery_cost + curtail_cost + recourse,
    };

    let forecast_demand_mw = scen
        .forecast_load
        .iter()
        .map(|row| row.iter().sum())
        .collect();
    let forecast_wind_mw = scen
        .forecast_wind
        .iter()
        .map(|row| row.iter().sum())
        .collect();

    Ok(DispatchSolution {
        horizon,
        generation,
        gen_curtail,
        wind_curtail,
        load_curtail,
        charge,
        discharge,
        soc,
        angles,
        flows,
        forecast_demand_mw,
        forecast_wind_mw,
        scenarios,
        costs: costs_out,
    })
}

#[derive(Debug, Clone)]
pub struct FamilyResidual {
    pub family: &'static str,
    pub max_residual: f64,
    /// Human-readable locator of the worst violation.
    pub worst: String,
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub families: Vec<FamilyResidual>,
}

impl VerificationReport {
    pub fn passes(&self) -> bool {
        self.families.iter().all(|f| f.max_residual <= VERIFY_TOL)
    }

    pub fn max_residual(&self) -> f64 {
        self.families
            .iter()
            .map(|f| f.max_residual)
            .fold(0.0, f64::max)
    }

    pub fn family(&self, name: &str) -> Option<&FamilyResidual> {
        self.families.iter().find(|f| f.family == name)
    }
}

struct FamilyAcc {
    family: &'static str,
    max_residual: f64,
    worst: String,
}

impl FamilyAcc {
    fn new(family: &'static str) -> Self {
        Self {
            family,
            max_residual: 0.0,
            worst: String::new(),
        }
    }

    fn hit(&mut self, residual: f64, locate: impl Fn() -> String) {
        if residual > self.max_residual {
            self.max_residual = residual;
            self.worst = locate();
        }
    }

    fn into_residual(self) -> FamilyResidual {
        FamilyResidual {
            family: self.family,
            max_residual: self.max_residual,
            worst: self.worst,
        }
    }
}

/// Replay every constraint family directly from the case, scenario set,
/// and cost parameters; independent of the MILP construction path.
/// Residuals are MW for power families, radians for angles, and SOC
/// fraction for the SOC recursion/bounds.
pub fn verify_solution(
    sol: &DispatchSolution,
    case: &GridCase,
    scen: &ScenarioSet,
    costs: &CostParams,
) -> VerificationReport {
    let horizon = sol.horizon;
    let dt = costs.dt_hours;
    let bus_pos = case.bus_index();
    let ref_bus = case.reference_bus();

    let mut bal1 = FamilyAcc::new("balance_first");
    let mut pdef1 = FamilyAcc::new("flow_def_first");
    let mut plim1 = FamilyAcc::new("flow_limit_first");
    let mut ang1 = FamilyAcc::new("angle_diff_first");
    let mut ramp1 = FamilyAcc::new("ramp_first");
    let mut gb1 = FamilyAcc::new("gen_bounds_first");
    let mut gcb1 = FamilyAcc::new("gen_curtail_bound_first");
    let mut wcb1 = FamilyAcc::new("wind_curtail_bound_first");
    let mut lcb1 = FamilyAcc::new("load_curtail_bound_first");
    let mut chl1 = FamilyAcc::new("charge_limit_first");
    let mut dsl1 = FamilyAcc::new("discharge_limit_first");
    let mut cmp1 = FamilyAcc::new("complementarity_first");
    let mut socr1 = FamilyAcc::new("soc_recursion_first");
    let mut socb1 = FamilyAcc::new("soc_bounds_first");

    let mut bal2 = FamilyAcc::new("balance_scenario");
    let mut rup2 = FamilyAcc::new("reg_up_headroom");
    let mut rdn2 = FamilyAcc::new("reg_down_headroom");
    let mut rnn2 = FamilyAcc::new("reg_nonneg");
    let mut rramp2 = FamilyAcc::new("reg_ramp");
    let mut pdef2 = FamilyAcc::new("flow_def_scenario");
    let mut plim2 = FamilyAcc::new("flow_limit_scenario");
    let mut ang2 = FamilyAcc::new("angle_diff_scenario");
    let mut gcb2 = FamilyAcc::new("gen_curtail_bound_scenario");
    let mut wcb2 = FamilyAcc::new("wind_curtail_bound_scenario");
    let mut lcb2 = FamilyAcc::new("load_curtail_bound_scenario");
    let mut chl2 = FamilyAcc::new("charge_limit_scenario");
    let mut dsl2 = FamilyAcc::new("discharge_limit_scenario");
    let mut cmp2 = FamilyAcc::new("complementarity_scenario");
    let mut socr2 = FamilyAcc::new("soc_recursion_scenario");
    let mut socb2 = FamilyAcc::new("soc_bounds_scenario");

    let gens_at = adjacency(
        case.buses.len(),
        case.generators.iter().map(|g| bus_pos[&g.bus]),
    );
    let wind_at = adjacency(
        case.buses.len(),
        case.wind_plants.iter().map(|w| bus_pos[&w.bus]),
    );
    let sto_at = adjacency(
        case.buses.len(),
        case.storage_units.iter().map(|s| bus_pos[&s.bus]),
    );
    let lines_in = adjacency(
        case.buses.len(),
        case.lines.iter().map(|l| bus_pos[&l.to_bus]),
    );
    let lines_out = adjacency(
        case.buses.len(),
        case.lines.iter().map(|l| bus_pos[&l.from_bus]),
    );

    // first stage
    for t in 0..horizon {
        for (i, _) in case.buses.iter().enumerate() {
            let mut lhs = 0.0;
            for &g in &gens_at[i] {
                lhs += sol.generation[t][g] - sol.gen_curtail[t][g];
            }
            for &w in &wind_at[i] {
                lhs += scen.forecast_wind[t][w] - sol.wind_curtail[t][w];
            }
            for &b in &sto_at[i] {
                lhs += sol.discharge[t][b] - sol.charge[t][b];
            }
            for &l in &lines_in[i] {
                lhs += sol.flows[t][l];
            }
            for &l in &lines_out[i] {
                lhs -= sol.flows[t][l];
            }
            let rhs = scen.forecast_load[t][i] - sol.load_curtail[t][i];
            bal1.hit((lhs - rhs).abs(), || format!("bus {i} t {t}"));
        }
        for (l, line) in case.lines.iter().enumerate() {
            let (fi, ti) = (bus_pos[&line.from_bus], bus_pos[&line.to_bus]);
            let model_flow = case.base_mva
                * line.susceptance_pu
                * (sol.angles[t][fi] - sol.angles[t][ti] - line.phase_shift_rad);
            pdef1.hit((sol.flows[t][l] - model_flow).abs(), || {
                format!("line {l} t {t}")
            });
            plim1.hit(sol.flows[t][l].abs() - line.limit_mw, || {
                format!("line {l} t {t}")
            });
            let diff = sol.angles[t][fi] - sol.angles[t][ti];
            let (lo, hi) = line.angle_diff_bounds_rad;
            ang1.hit((diff - hi).max(lo - diff), || format!("line {l} t {t}"));
        }
        ang1.hit(sol.angles[t][ref_bus].abs(), || {
            format!("reference bus t {t}")
        });
        for (g, gen) in case.generators.iter().enumerate() {
            let x = sol.generation[t][g];
            gb1.hit((x - gen.p_max_mw).max(gen.p_min_mw - x), || {
                format!("gen {g} t {t}")
            });
            let xc = sol.gen_curtail[t][g];
            gcb1.hit((xc - x).max(-xc), || format!("gen {g} t {t}"));
            if t >= 1 {
                let ramp = costs.ramp_limit(gen);
                let step = x - sol.generation[t - 1][g];
                ramp1.hit((step - ramp).max(-ramp - step), || format!("gen {g} t {t}"));
            }
        }
        for (w, _) in case.wind_plants.iter().enumerate() {
            let u = sol.wind_curtail[t][w];
            wcb1.hit((u - scen.forecast_wind[t][w]).max(-u), || {
                format!("plant {w} t {t}")
            });
        }
        for (i, _) in case.buses.iter().enumerate() {
            let d = sol.load_curtail[t][i];
            lcb1.hit((d - scen.forecast_load[t][i]).max(-d), || {
                format!("bus {i} t {t}")
            });
        }
        for (b, sto) in case.storage_units.iter().enumerate() {
            let (ch, dis) = (sol.charge[t][b], sol.discharge[t][b]);
            chl1.hit((ch - sto.rating_mw).max(-ch), || format!("unit {b} t {t}"));
            dsl1.hit((dis - sto.rating_mw).max(-dis), || {
                format!("unit {b} t {t}")
            });
            cmp1.hit(ch.min(dis), || format!("unit {b} t {t}"));
            let prev = if t == 0 {
                sto.soc_init
            } else {
                sol.soc[t - 1][b]
            };
            let expect = prev + (sto.eta_ch * ch - dis / sto.eta_dis) * dt / sto.energy_cap_mwh;
            socr1.hit((sol.soc[t][b] - expect).abs(), || format!("unit {b} t {t}"));
            socb1.hit(
                (sol.soc[t][b] - sto.soc_max).max(sto.soc_min - sol.soc[t][b]),
                || format!("unit {b} t {t}"),
            );
        }
    }

    // second stage
    for (s, sc) in sol.scenarios.iter().enumerate() {
        for t in 0..horizon {
            for (i, _) in case.buses.iter().enumerate() {
                let mut lhs = 0.0;
                for &g in &gens_at[i] {
                    if case.generators[g].provides_regulation {
                        lhs += sol.generation[t][g] + sc.reg_up[t][g] - sc.reg_down[t][g];
                    } else {
                        lhs += sol.generation[t][g] - sc.gen_curtail[t][g];
                    }
                }
                for &w in &wind_at[i] {
                    lhs += scen.wind[s][t][w] - sc.wind_curtail[t][w];
                }
                for &b in &sto_at[i] {
                    lhs += sc.discharge[t][b] - sc.charge[t][b];
                }
                for &l in &lines_in[i] {
                    lhs += sc.flows[t][l];
                }
                for &l in &lines_out[i] {
                    lhs -= sc.flows[t][l];
                }
                let rhs = scen.load[s][t][i] - sc.load_curtail[t][i];
                bal2.hit((lhs - rhs).abs(), || format!("bus {i} t {t} scenario {s}"));
            }
            for (g, gen) in case.generators.iter().enumerate() {
                if !gen.provides_regulation {
                    let u = sc.gen_curtail[t][g];
                    gcb2.hit((u - sol.generation[t][g]).max(-u), || {
                        format!("gen {g} t {t} scenario {s}")
                    });
                    continue;
                }
                let (up, dn) = (sc.reg_up[t][g], sc.reg_down[t][g]);
                rnn2.hit((-up).max(-dn), || format!("gen {g} t {t} scenario {s}"));
                rup2.hit(sol.generation[t][g] + up - gen.p_max_mw, || {
                    format!("gen {g} t {t} scenario {s}")
                });
                rdn2.hit(gen.p_min_mw - (sol.generation[t][g] - dn), || {
                    format!("gen {g} t {t} scenario {s}")
                });
                if t >= 1 {
                    let ramp = costs.ramp_limit(gen);
                    let now = sol.generation[t][g] + up - dn;
                    let before =
                        sol.generation[t - 1][g] + sc.reg_up[t - 1][g] - sc.reg_down[t - 1][g];
                    let step = now - before;
                    rramp2.hit((step - ramp).max(-ramp - step), || {
                        format!("gen {g} t {t} scenario {s}")
                    });
                }
            }
            for (l, line) in case.lines.iter().enumerate() {
                let (fi, ti) = (bus_pos[&line.from_bus], bus_pos[&line.to_bus]);
                let model_flow = case.base_mva
                    * line.susceptance_pu
                    * (sc.angles[t][fi] - sc.angles[t][ti] - line.phase_shift_rad);
                pdef2.hit((sc.flows[t][l] - model_flow).abs(), || {
                    format!("line {l} t {t} scenario {s}")
                });
                plim2.hit(sc.flows[t][l].abs() - line.limit_mw, || {
                    format!("line {l} t {t} scenario {s}")
                });
                let diff = sc.angles[t][fi] - sc.angles[t][ti];
                let (lo, hi) = line.angle_diff_bounds_rad;
                ang2.hit((diff - hi).max(lo - diff), || {
                    format!("line {l} t {t} scenario {s}")
                });
            }
            ang2.hit(sc.angles[t][ref_bus].abs(), || {
                format!("reference bus t {t} scenario {s}")
            });
            for (w, _) in case.wind_plants.iter().enumerate() {
                let u = sc.wind_curtail[t][w];
                wcb2.hit((u - scen.wind[s][t][w]).max(-u), || {
                    format!("plant {w} t {t} scenario {s}")
                });
            }
            for (i, _) in case.buses.iter().enumerate() {
                let d = sc.load_curtail[t][i];
                lcb2.hit((d - scen.load[s][t][i]).max(-d), || {
                    format!("bus {i} t {t} scenario {s}")
                });
            }
            for (b, sto) in case.storage_units.iter().enumerate() {
                let (ch, dis) = (sc.charge[t][b], sc.discharge[t][b]);
                chl2.hit((ch - sto.rating_mw).max(-ch), || {
                    format!("unit {b} t {t} scenario {s}")
                });
                dsl2.hit((dis - sto.rating_mw).max(-dis), || {
                    format!("unit {b} t {t} scenario {s}")
                });
                cmp2.hit(ch.min(dis), || format!("unit {b} t {t} scenario {s}"));
                let prev = if t == 0 {
                    sto.soc_init
                } else {
                    sc.soc[t - 1][b]
                };
                let expect = prev + (sto.eta_ch * ch - dis / sto.eta_dis) * dt / sto.energy_cap_mwh;
                socr2.hit((sc.soc[t][b] - expect).abs(), || {
                    format!("unit {b} t {t} scenario {s}")
                });
                socb2.hit(
                    (sc.soc[t][b] - sto.soc_max).max(sto.soc_min - sc.soc[t][b]),
                    || format!("unit {b} t {t} scenario {s}"),
                );
            }
        }
    }

    VerificationReport {
        families: vec![
            bal1.into_residual(),
            pdef1.into_residual(),
            plim1.into_residual(),
            ang1.into_residual(),
            ramp1.into_residual(),
            gb1.into_residual(),
            gcb1.into_residual(),
            wcb1.into_residual(),
            lcb1.into_residual(),
            chl1.into_residual(),
            dsl1.into_residual(),
            cmp1.into_residual(),
            socr1.into_residual(),
            socb1.into_residual(),
            bal2.into_residual(),
            rup2.into_residual(),
            rdn2.into_residual(),
            rnn2.into_residual(),
            rramp2.into_residual(),
            pdef2.into_residual(),
            plim2.into_residual(),
            ang2.into_residual(),
            gcb2.into_residual(),
            wcb2.into_residual(),
            lcb2.into_residual(),
            chl2.into_residual(),
            dsl2.into_residual(),
            cmp2.into_residual(),
            socr2.into_residual(),
            socb2.into_residual(),
        ],
    }
}

/// A degenerate scenario set that copies the forecast: used for pure
/// first-stage (deterministic) dispatch studies and tests.
pub fn forecast_only_scenarios(scen: &ScenarioSet) -> ScenarioSet {
    ScenarioSet {
        probs: Vec::new(),
        load: Vec::new(),
        wind: Vec::new(),
        forecast_load: scen.forecast_load.clone(),
        forecast_wind: scen.forecast_wind.clone(),
        seed: scen.seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bus, Line, StorageUnit, WindPlant};
    use crate::milp::MipStatus;

    fn gen(id: usize, bus: usize, p_max: f64, a: f64, b: f64, c: f64, ramp: f64) -> Generator {
        Generator {
            id,
            bus,
            p_max_mw: p_max,
            p_min_mw: 0.0,
            cost_a: a,
            cost_b: b,
            cost_c: c,
            ramp_mw_per_min: ramp,
            provides_regulation: true,
        }
    }

    fn single_bus_case() -> GridCase {
        GridCase {
            base_mva: 100.0,
            buses: vec![Bus {
                id: 1,
                demand_mw: 50.0,
                is_reference: true,
            }],
            lines: vec![],
            generators: vec![gen(1, 1, 100.0, 0.01, 20.0, 5.0, 10.0)],
            wind_plants: vec![],
            storage_units: vec![],
        }
    }

    fn flat_scenarios(case: &GridCase, horizon: usize, k: usize, level: f64) -> ScenarioSet {
        let loads: Vec<f64> = case.buses.iter().map(|b| b.demand_mw * level).collect();
        let winds: Vec<f64> = case
            .wind_plants
            .iter()
            .map(|w| w.capacity_mw * level.min(1.0))
            .collect();
        ScenarioSet {
            probs: vec![1.0 / k.max(1) as f64; k],
            load: vec![vec![loads.clone(); horizon]; k],
            wind: vec![vec![winds.clone(); horizon]; k],
            forecast_load: vec![loads; horizon],
            forecast_wind: vec![winds; horizon],
            seed: 0,
        }
    }

    #[test]
    fn ramp_limit_from_table_rate() {
        let g = gen(1, 1, 1040.0, 0.00048, 16.19, 1000.0, 6.2);
        let costs = CostParams::default();
        assert!((costs.ramp_limit(&g) - 93.0).abs() < 1e-12);
    }

    #[test]
    fn pwl_matches_quadratic_at_breakpoints_and_dominates_between() {
        let g = gen(1, 1, 1040.0, 0.00048, 16.19, 1000.0, 6.2);
        let segments = 8;
        let width = 1040.0 / segments as f64;
        for k in 0..=segments {
            let x = k as f64 * width;
            let exact = quadratic_cost(&g, x);
            let pwl = pwl_cost(&g, segments, x);
            assert!(
                (pwl - exact).abs() < 1e-9 * exact.max(1.0),
                "breakpoint {x}: {pwl} vs {exact}"
            );
        }
        for k in 0..segments {
            let x = (k as f64 + 0.5) * width;
            let exact = quadratic_cost(&g, x);
            let pwl = pwl_cost(&g, segments, x);
            assert!(pwl >= exact - 1e-9, "midpoint {x}: {pwl} vs {exact}");
        }
    }

    #[test]
    fn pwl_interval_cost_converges() {
        // one 15-minute interval at 400 MW
        let g = gen(1, 1, 1040.0, 0.00048, 16.19, 1000.0, 6.2);
        let exact = 0.25 * quadratic_cost(&g, 400.0);
        assert!((exact - 1888.2).abs() < 1e-9);
        let pwl = 0.25 * pwl_cost(&g, 32, 400.0);
        assert!(pwl >= exact - 1e-9);
        assert!((pwl - exact) / exact < 0.001, "{pwl} vs {exact}");
    }

    #[test]
    fn binary_count_matches_battery_scenario_grid() {
        let mut case = single_bus_case();
        case.storage_units = vec![
            StorageUnit {
                id: 0,
                bus: 1,
                rating_mw: 20.0,
                energy_cap_mwh: 80.0,
                eta_ch: 0.95,
                eta_dis: 0.95,
                soc_min: 0.1,
                soc_max: 0.9,
                soc_init: 0.5,
            },
            StorageUnit {
                id: 1,
                bus: 1,
                rating_mw: 20.0,
                energy_cap_mwh: 80.0,
                eta_ch: 0.95,
                eta_dis: 0.95,
                soc_min: 0.1,
                soc_max: 0.9,
                soc_init: 0.5,
            },
        ];
        let horizon = 8;
        let k = 50;
        let scen = flat_scenarios(&case, horizon, k, 1.0);
        let (model, _) = build_extensive_form(&case, &scen, &CostParams::default()).unwrap();
        // |B| * |T| * 2 * (1 + K)
        assert_eq!(model.binary_indices().len(), 2 * 8 * 2 * (1 + 50));
    }

    #[test]
    fn zero_scenarios_build_pure_first_stage() {
        let case = single_bus_case();
        let scen = flat_scenarios(&case, 3, 0, 1.0);
        let (model, index) = build_extensive_form(&case, &scen, &CostParams::default()).unwrap();
        assert!(index.try_col(VarKey::RegUp { g: 0, t: 0, s: 0 }).is_none());
        let sol = branch_and_bound(&model, &BnbOptions::default()).unwrap();
        assert_eq!(sol.status, MipStatus::Optimal);
        let dispatch =
            extract_solution(&sol, &index, &case, &scen, &CostParams::default()).unwrap();
        for t in 0..3 {
            assert!((dispatch.generation[t][0] - 50.0).abs() < 1e-7);
        }
    }

    #[test]
    fn empty_horizon_is_rejected() {
        let case = single_bus_case();
        let scen = flat_scenarios(&case, 0, 0, 1.0);
        assert!(matches!(
            build_extensive_form(&case, &scen, &CostParams::default()),
            Err(FormulationError::EmptyHorizon)
        ));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let case = single_bus_case();
        let mut scen = flat_scenarios(&case, 2, 1, 1.0);
        scen.load[0][1] = vec![1.0, 2.0]; // two buses' worth on a 1-bus case
        assert!(matches!(
            build_extensive_form(&case, &scen, &CostParams::default()),
            Err(FormulationError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn forecast_scenario_dispatch_needs_no_recourse() {
        let case = single_bus_case();
        let scen = flat_scenarios(&case, 2, 1, 1.0);
        let costs = CostParams::default();
        let (model, index) = build_extensive_form(&case, &scen, &costs).unwrap();
        let raw = branch_and_bound(&model, &BnbOptions::default()).unwrap();
        assert_eq!(raw.status, MipStatus::Optimal);
        let sol = extract_solution(&raw, &index, &case, &scen, &costs).unwrap();
        for t in 0..2 {
            assert!((sol.generation[t][0] - 50.0).abs() < 1e-7);
            assert!(sol.wind_curtail[t].iter().all(|&u| u.abs() < 1e-9));
            assert!(sol.load_curtail[t].iter().all(|&d| d.abs() < 1e-9));
            assert!(sol.scenarios[0].reg_up[t][0].abs() < 1e-7);
            assert!(sol.scenarios[0].reg_down[t][0].abs() < 1e-7);
        }
        // objective = dt * pwl(50) * 2 periods
        let expect = 2.0 * 0.25 * pwl_cost(&case.generators[0], costs.pwl_segments, 50.0);
        assert!((raw.objective - expect).abs() < 1e-6 * expect);
        // accounting identity
        assert!(
            (sol.costs.total - raw.objective).abs() <= 1e-6 * raw.objective.abs().max(1.0),
            "{} vs {}",
            sol.costs.total,
            raw.objective
        );
        let report = verify_solution(&sol, &case, &scen, &costs);
        assert!(report.passes(), "{:#?}", report.families);
        assert_eq!(report.families.len(), 30);
    }

    fn storage_case() -> (GridCase, ScenarioSet) {
        // two buses, cheap slow generator + expensive fast one, battery
        let case = GridCase {
            base_mva: 100.0,
            buses: vec![
                Bus {
                    id: 1,
                    demand_mw: 80.0,
                    is_reference: true,
                },
                Bus {
                    id: 2,
                    demand_mw: 40.0,
                    is_reference: false,
                },
            ],
            lines: vec![Line {
                from_bus: 1,
                to_bus: 2,
                susceptance_pu: 20.0,
                limit_mw: 300.0,
                angle_diff_bounds_rad: (-0.6, 0.6),
                phase_shift_rad: 0.0,
            }],
            generators: vec![
                gen(1, 1, 150.0, 0.002, 18.0, 10.0, 1.0),
                gen(2, 2, 100.0, 0.004, 45.0, 5.0, 2.0),
            ],
            wind_plants: vec![WindPlant {
                id: 0,
                bus: 2,
                capacity_mw: 60.0,
                converted_from: None,
            }],
            storage_units: vec![StorageUnit {
                id: 0,
                bus: 2,
                rating_mw: 15.0,
                energy_cap_mwh: 60.0,
                eta_ch: 0.95,
                eta_dis: 0.95,
                soc_min: 0.1,
                soc_max: 0.9,
                soc_init: 0.5,
            }],
        };
        let scen = flat_scenarios(&case, 2, 2, 1.0);
        (case, scen)
    }

    #[test]
    fn fastpath_matches_branch_and_bound() {
        let (case, mut scen) = storage_case();
        // make scenarios differ from the forecast so recourse moves
        for s in 0..2 {
            for t in 0..2 {
                for v in scen.load[s][t].iter_mut() {
                    *v *= if s == 0 { 0.95 } else { 1.05 };
                }
            }
        }
        let costs = CostParams::default();
        let (model, index) = build_extensive_form(&case, &scen, &costs).unwrap();
        let opts = BnbOptions::default();
        let fast = solve_model(&model, &index, &SolverChoice::InternalFastpath, &opts).unwrap();
        let exact = solve_model(&model, &index, &SolverChoice::Internal, &opts).unwrap();
        assert_eq!(fast.status, MipStatus::Optimal);
        assert!(
            (fast.objective - exact.objective).abs() <= 1e-6 * exact.objective.abs().max(1.0),
            "{} vs {}",
            fast.objective,
            exact.objective
        );
        let sol = extract_solution(&fast, &index, &case, &scen, &costs).unwrap();
        let report = verify_solution(&sol, &case, &scen, &costs);
        assert!(report.passes(), "{:#?}", report.families);
    }

    #[test]
    fn soc_recursion_oracle_values() {
        // eta 1.0: 0.5 + 20 * 0.25 / 80 = 0.5625
        let sto = StorageUnit {
            id: 0,
            bus: 1,
            rating_mw: 20.0,
            energy_cap_mwh: 80.0,
            eta_ch: 1.0,
            eta_dis: 1.0,
            soc_min: 0.0,
            soc_max: 1.0,
            soc_init: 0.5,
        };
        let next = sto.soc_init + (sto.eta_ch * 20.0 - 0.0 / sto.eta_dis) * 0.25 / 80.0;
        assert!((next - 0.5625).abs() < 1e-12);
        let next_eta = sto.soc_init + (0.95 * 20.0) * 0.25 / 80.0;
        assert!((next_eta - 0.559375).abs() < 1e-12);
    }

    #[test]
    fn verify_flags_soc_and_complementarity_violations() {
        let (case, scen) = storage_case();
        let costs = CostParams::default();
        let (model, index) = build_extensive_form(&case, &scen, &costs).unwrap();
        let raw = solve_model(
            &model,
            &index,
            &SolverChoice::InternalFastpath,
            &BnbOptions::default(),
        )
        .unwrap();
        let mut sol = extract_solution(&raw, &index, &case, &scen, &costs).unwrap();
        assert!(verify_solution(&sol, &case, &scen, &costs).passes());

        // break the SOC recursion by one MWh equivalent
        let good_soc = sol.soc[0][0];
        sol.soc[0][0] = good_soc + 1.0 / case.storage_units[0].energy_cap_mwh;
        let report = verify_solution(&sol, &case, &scen, &costs);
        let fam = report.family("soc_recursion_first").unwrap();
        assert!(
            (fam.max_residual - 1.0 / case.storage_units[0].energy_cap_mwh).abs() < 1e-9
                || fam.max_residual >= 1.0 / case.storage_units[0].energy_cap_mwh - 1e-9
        );
        sol.soc[0][0] = good_soc;

        // simultaneous charge and discharge at 5 MW
        sol.charge[0][0] = 5.0;
        sol.discharge[0][0] = 5.0;
        let report = verify_solution(&sol, &case, &scen, &costs);
        assert!(report.family("complementarity_first").unwrap().max_residual >= 5.0 - 1e-9);
        assert!(!report.passes());
    }

    #[test]
    fn dc_flow_definition_replay() {
        // B = 10 pu on 100 MVA, angle gap 0.05 rad, shift 0: 50 MW flow
        let case = GridCase {
            base_mva: 100.0,
            buses: vec![
                Bus {
                    id: 1,
                    demand_mw: 0.0,
                    is_reference: true,
                },
                Bus {
                    id: 2,
                    demand_mw: 50.0,
                    is_reference: false,
                },
            ],
            lines: vec![Line {
                from_bus: 1,
                to_bus: 2,
                susceptance_pu: 10.0,
                limit_mw: 100.0,
                angle_diff_bounds_rad: (-0.6, 0.6),
                phase_shift_rad: 0.0,
            }],
            generators: vec![gen(1, 1, 100.0, 0.0, 10.0, 0.0, 10.0)],
            wind_plants: vec![],
            storage_units: vec![],
        };
        let scen = flat_scenarios(&case, 1, 0, 1.0);
        let costs = CostParams::default();
        let (model, index) = build_extensive_form(&case, &scen, &costs).unwrap();
        let raw = branch_and_bound(&model, &BnbOptions::default()).unwrap();
        let sol = extract_solution(&raw, &index, &case, &scen, &costs).unwrap();
        // flow must equal base * B * angle difference = 50 MW
        assert!((sol.flows[0][0] - 50.0).abs() < 1e-6);
        let diff = sol.angles[0][0] - sol.angles[0][1];
        assert!((100.0 * 10.0 * diff - 50.0).abs() < 1e-6);
        assert!(verify_solution(&sol, &case, &scen, &costs).passes());
    }
}
