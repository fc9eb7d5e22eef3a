//! Power-system case: buses, lines, generators, wind plants, storage.
//!
//! A [`GridCase`] is immutable once validated; the transformation
//! operations ([`apply_wind_conversion`], [`attach_storage`]) return new
//! cases. Case files are JSON with schema tag `sded-case/1`; powers are
//! MW, energies MWh, angles radians. Per-unit conversion happens only
//! inside the DC-flow constraint assembly via `base_mva`.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::path::Path;
use thiserror::Error;

pub const CASE_SCHEMA: &str = "sded-case/1";

/// Default angle-difference bounds when a line does not specify them.
pub const DEFAULT_ANGLE_BOUND_RAD: f64 = 0.6;
/// Default charge/discharge efficiency for storage units.
pub const DEFAULT_EFFICIENCY: f64 = 0.95;
/// Storage duration (hours) used when a spec omits the energy capacity.
pub const DEFAULT_STORAGE_DURATION_H: f64 = 4.0;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("failed to read case file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse case file: {0}")]
    Parse(String),
    #[error("case validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error("unknown generator id {0}")]
    UnknownGenerator(usize),
    #[error("unknown bus id {0}")]
    UnknownBus(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Bus {
    pub id: usize,
    /// Nominal load at this bus, MW.
    pub demand_mw: f64,
    #[serde(default)]
    pub is_reference: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Line {
    pub from_bus: usize,
    pub to_bus: usize,
    /// Series susceptance, per unit on `base_mva`.
    pub susceptance_pu: f64,
    /// Thermal limit, MW.
    pub limit_mw: f64,
    /// (lo, hi) bounds on the angle difference across the line, radians.
    #[serde(default = "default_angle_bounds")]
    pub angle_diff_bounds_rad: (f64, f64),
    #[serde(default)]
    pub phase_shift_rad: f64,
}

fn default_angle_bounds() -> (f64, f64) {
    (-DEFAULT_ANGLE_BOUND_RAD, DEFAULT_ANGLE_BOUND_RAD)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    pub p_max_mw: f64,
    #[serde(default)]
    pub p_min_mw: f64,
    /// Quadratic cost coefficient, $/MW²h.
    pub cost_a: f64,
    /// Linear cost coefficient, $/MWh.
    pub cost_b: f64,
    /// Constant cost, $/h.
    pub cost_c: f64,
    pub ramp_mw_per_min: f64,
    #[serde(default = "default_true")]
    pub provides_regulation: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WindPlant {
    pub id: usize,
    pub bus: usize,
    pub capacity_mw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converted_from: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StorageUnit {
    pub id: usize,
    pub bus: usize,
    /// Charge and discharge power rating, MW.
    pub rating_mw: f64,
    pub energy_cap_mwh: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    /// SOC bounds and initial level as fractions of `energy_cap_mwh`.
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_init: f64,
}

/// Storage parameters as they appear in case files and sweep specs.
/// Omitted fields take the documented defaults (4-hour duration,
/// 0.95 efficiencies, SOC in [0.1, 0.9] starting at 0.5).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StorageSpec {
    pub id: usize,
    pub bus: usize,
    pub rating_mw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_cap_mwh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_ch: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_dis: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soc_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soc_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soc_init: Option<f64>,
}

impl StorageSpec {
    pub fn new(id: usize, bus: usize, rating_mw: f64) -> Self {
        Self {
            id,
            bus,
            rating_mw,
            energy_cap_mwh: None,
            eta_ch: None,
            eta_dis: None,
            soc_min: None,
            soc_max: None,
            soc_init: None,
        }
    }

    pub fn materialize(&self) -> StorageUnit {
        StorageUnit {
            id: self.id,
            bus: self.bus,
            rating_mw: self.rating_mw,
            energy_cap_mwh: self
                .energy_cap_mwh
                .unwrap_or(DEFAULT_STORAGE_DURATION_H * self.rating_mw),
            eta_ch: self.eta_ch.unwrap_or(DEFAULT_EFFICIENCY),
            eta_dis: self.eta_dis.unwrap_or(DEFAULT_EFFICIENCY),
            soc_min: self.soc_min.unwrap_or(0.1),
            soc_max: self.soc_max.unwrap_or(0.9),
            soc_init: self.soc_init.unwrap_or(0.5),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub wind_plants: Vec<WindPlant>,
    pub storage_units: Vec<StorageUnit>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CaseFile {
    schema: String,
    base_mva: f64,
    buses: Vec<Bus>,
    lines: Vec<Line>,
    generators: Vec<Generator>,
    #[serde(default)]
    wind_plants: Vec<WindPlant>,
    #[serde(default)]
    storage: Vec<StorageSpec>,
}

impl GridCase {
    /// Index of the reference (slack) bus in `buses`.
    pub fn reference_bus(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.is_reference)
            .expect("validated case has a reference bus")
    }

    pub fn total_demand_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.demand_mw).sum()
    }

    pub fn total_conventional_capacity_mw(&self) -> f64 {
        self.generators.iter().map(|g| g.p_max_mw).sum()
    }

    pub fn total_wind_capacity_mw(&self) -> f64 {
        self.wind_plants.iter().map(|w| w.capacity_mw).sum()
    }

    /// Map bus id -> position in `buses`.
    pub fn bus_index(&self) -> HashMap<usize, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect()
    }

    /// Collect every invariant violation; empty means the case is valid.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.base_mva > 0.0) {
            errs.push(format!("base_mva must be positive, got {}", self.base_mva));
        }

        let mut seen = HashSet::new();
        for b in &self.buses {
            if !seen.insert(b.id) {
                errs.push(format!("duplicate bus id {}", b.id));
            }
            if b.demand_mw < 0.0 {
                errs.push(format!("bus {} has negative demand {}", b.id, b.demand_mw));
            }
        }
        let n_ref = self.buses.iter().filter(|b| b.is_reference).count();
        if n_ref != 1 {
            errs.push(format!("expected exactly one reference bus, found {n_ref}"));
        }
        let bus_ids: HashSet<usize> = self.buses.iter().map(|b| b.id).collect();

        for (i, l) in self.lines.iter().enumerate() {
            if l.from_bus == l.to_bus {
                errs.push(format!("line {i} connects bus {} to itself", l.from_bus));
            }
            for end in [l.from_bus, l.to_bus] {
                if !bus_ids.contains(&end) {
                    errs.push(format!("line {i} references unknown bus {end}"));
                }
            }
            if !(l.limit_mw > 0.0) {
                errs.push(format!("line {i} has nonpositive limit {}", l.limit_mw));
            }
            let (lo, hi) = l.angle_diff_bounds_rad;
            if !(lo <= 0.0 && 0.0 <= hi) {
                errs.push(format!(
                    "line {i} angle bounds ({lo}, {hi}) must straddle zero"
                ));
            }
        }

        let mut gen_ids = HashSet::new();
        for g in &self.generators {
            if !gen_ids.insert(g.id) {
                errs.push(format!("duplicate generator id {}", g.id));
            }
            if !bus_ids.contains(&g.bus) {
                errs.push(format!(
                    "generator {} references unknown bus {}",
                    g.id, g.bus
                ));
            }
            if !(0.0 <= g.p_min_mw && g.p_min_mw <= g.p_max_mw) {
                errs.push(format!(
                    "generator {} limits violate 0 <= p_min <= p_max ({} / {})",
                    g.id, g.p_min_mw, g.p_max_mw
                ));
            }
            if g.cost_a < 0.0 {
                errs.push(format!(
                    "generator {} has negative quadratic cost {}",
                    g.id, g.cost_a
                ));
            }
            if !(g.ramp_mw_per_min > 0.0) {
                errs.push(format!(
                    "generator {} has nonpositive ramp rate {}",
                    g.id, g.ramp_mw_per_min
                ));
            }
        }

        let mut wind_ids = HashSet::new();
        for w in &self.wind_plants {
            if !wind_ids.insert(w.id) {
                errs.push(format!("duplicate wind plant id {}", w.id));
            }
            if !bus_ids.contains(&w.bus) {
                errs.push(format!(
                    "wind plant {} references unknown bus {}",
                    w.id, w.bus
                ));
            }
            if !(w.capacity_mw > 0.0) {
                errs.push(format!(
                    "wind plant {} has nonpositive capacity {}",
                    w.id, w.capacity_mw
                ));
            }
        }

        let mut sto_ids = HashSet::new();
        for s in &self.storage_units {
            if !sto_ids.insert(s.id) {
                errs.push(format!("duplicate storage id {}", s.id));
            }
            if !bus_ids.contains(&s.bus) {
                errs.push(format!("storage {} references unknown bus {}", s.id, s.bus));
            }
            if !(s.rating_mw > 0.0) {
                errs.push(format!("storage {} has nonpositive rating", s.id));
            }
            if !(s.energy_cap_mwh > 0.0) {
                errs.push(format!("storage {} has nonpositive energy capacity", s.id));
            }
            for (name, eta) in [("eta_ch", s.eta_ch), ("eta_dis", s.eta_dis)] {
                if !(eta > 0.0 && eta <= 1.0) {
                    errs.push(format!("storage {} {name} {eta} outside (0, 1]", s.id));
                }
            }
            if !(0.0 <= s.soc_min
                && s.soc_min <= s.soc_init
                && s.soc_init <= s.soc_max
                && s.soc_max <= 1.0)
            {
                errs.push(format!(
                    "storage {} SOC ordering violated: 0 <= {} <= {} <= {} <= 1",
                    s.id, s.soc_min, s.soc_init, s.soc_max
                ));
            }
        }

        if !self.is_connected() {
            errs.push("network is not a single connected island".to_string());
        }
        errs
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(GridError::Validation(errs))
        }
    }

    /// Breadth-first search over the undirected line graph.
    fn is_connected(&self) -> bool {
        if self.buses.is_empty() {
            return false;
        }
        if self.buses.len() == 1 {
            return true;
        }
        let idx = self.bus_index();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.buses.len()];
        for l in &self.lines {
            let (Some(&a), Some(&b)) = (idx.get(&l.from_bus), idx.get(&l.to_bus)) else {
                continue;
            };
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.buses.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.iter().all(|&s| s)
    }
}

/// Load a case file and validate it. Validation failures list every
/// violation, not just the first.
pub fn load_case(path: impl AsRef<Path>) -> Result<GridCase, GridError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GridError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_case(&text)
}

pub fn parse_case(text: &str) -> Result<GridCase, GridError> {
    let file: CaseFile = serde_json::from_str(text).map_err(|e| GridError::Parse(e.to_string()))?;
    if file.schema != CASE_SCHEMA {
        return Err(GridError::Parse(format!(
            "unsupported schema {:?}, expected {:?}",
            file.schema, CASE_SCHEMA
        )));
    }
    let case = GridCase {
        base_mva: file.base_mva,
        buses: file.buses,
        lines: file.lines,
        generators: file.generators,
        wind_plants: file.wind_plants,
        storage_units: file.storage.iter().map(StorageSpec::materialize).collect(),
    };
    case.validate()?;
    Ok(case)
}

/// Serialize a case back to the `sded-case/1` JSON layout.
pub fn save_case(case: &GridCase, path: impl AsRef<Path>) -> Result<(), GridError> {
    let text = case_to_string(case);
    std::fs::write(path.as_ref(), text).map_err(|source| GridError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

pub fn case_to_string(case: &GridCase) -> String {
    let file = CaseFile {
        schema: CASE_SCHEMA.to_string(),
        base_mva: case.base_mva,
        buses: case.buses.clone(),
        lines: case.lines.clone(),
        generators: case.generators.clone(),
        wind_plants: case.wind_plants.clone(),
        storage: case
            .storage_units
            .iter()
            .map(|s| StorageSpec {
                id: s.id,
                bus: s.bus,
                rating_mw: s.rating_mw,
                energy_cap_mwh: Some(s.energy_cap_mwh),
                eta_ch: Some(s.eta_ch),
                eta_dis: Some(s.eta_dis),
                soc_min: Some(s.soc_min),
                soc_max: Some(s.soc_max),
                soc_init: Some(s.soc_init),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("case serialization cannot fail")
}

/// Replace the named conventional generators with wind plants of equal
/// capacity at the same buses. Cost and ramp data of converted units are
/// discarded.
pub fn apply_wind_conversion(
    case: &GridCase,
    generator_ids: &[usize],
) -> Result<GridCase, GridError> {
    let mut out = case.clone();
    let next_wind_id = out.wind_plants.iter().map(|w| w.id + 1).max().unwrap_or(0);
    for (offset, &gid) in generator_ids.iter().enumerate() {
        let pos = out
            .generators
            .iter()
            .position(|g| g.id == gid)
            .ok_or(GridError::UnknownGenerator(gid))?;
        let gen = out.generators.remove(pos);
        out.wind_plants.push(WindPlant {
            id: next_wind_id + offset,
            bus: gen.bus,
            capacity_mw: gen.p_max_mw,
            converted_from: Some(gid),
        });
    }
    Ok(out)
}

/// Append storage units to the case. Energy capacity defaults to the
/// 4-hour duration when a spec leaves it unset.
pub fn attach_storage(case: &GridCase, specs: &[StorageSpec]) -> Result<GridCase, GridError> {
    let bus_ids: HashSet<usize> = case.buses.iter().map(|b| b.id).collect();
    let mut out = case.clone();
    for spec in specs {
        if !bus_ids.contains(&spec.bus) {
            return Err(GridError::UnknownBus(spec.bus));
        }
        out.storage_units.push(spec.materialize());
    }
    Ok(out)
}

/// Installed wind capacity divided by total (conventional + wind)
/// generation capacity.
pub fn penetration_level(case: &GridCase) -> f64 {
    let wind = case.total_wind_capacity_mw();
    let conv = case.total_conventional_capacity_mw();
    if wind + conv == 0.0 {
        0.0
    } else {
        wind / (wind + conv)
    }
}
