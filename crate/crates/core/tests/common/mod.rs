//! Shared fixtures and generators for the integration suites.

#![allow(dead_code)]

use sded::formulation::{build_extensive_form, CostParams, VarIndex};
use sded::grid::{Bus, Generator, GridCase, Line, StorageUnit, WindPlant};
use sded::milp::MilpModel;
use sded::scenarios::ScenarioSet;
use std::path::PathBuf;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .ancestors()
        .nth(2)
        .unwrap()
        .to_path_buf()
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn gen(id: usize, bus: usize, p_max: f64, a: f64, b: f64, c: f64, ramp: f64) -> Generator {
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

pub fn storage(id: usize, bus: usize, rating: f64) -> StorageUnit {
    StorageUnit {
        id,
        bus,
        rating_mw: rating,
        energy_cap_mwh: 4.0 * rating,
        eta_ch: 0.95,
        eta_dis: 0.95,
        soc_min: 0.1,
        soc_max: 0.9,
        soc_init: 0.5,
    }
}

/// Scenario set with explicit system-level paths, uniform across buses.
pub fn scenario_set(
    case: &GridCase,
    forecast_load_mult: &[f64],
    forecast_wind_mult: &[f64],
    scenario_levels: &[(f64, f64)], // (load level, wind level) per scenario
) -> ScenarioSet {
    let horizon = forecast_load_mult.len();
    let k = scenario_levels.len();
    let bus_loads =
        |mult: f64| -> Vec<f64> { case.buses.iter().map(|b| b.demand_mw * mult).collect() };
    let plant_wind = |mult: f64| -> Vec<f64> {
        case.wind_plants
            .iter()
            .map(|w| (w.capacity_mw * mult).clamp(0.0, w.capacity_mw))
            .collect()
    };
    ScenarioSet {
        probs: vec![1.0 / k.max(1) as f64; k],
        load: scenario_levels
            .iter()
            .map(|&(ll, _)| {
                (0..horizon)
                    .map(|t| bus_loads(forecast_load_mult[t] * ll))
                    .collect()
            })
            .collect(),
        wind: scenario_levels
            .iter()
            .map(|&(_, wl)| {
                (0..horizon)
                    .map(|t| plant_wind(forecast_wind_mult[t] * wl))
                    .collect()
            })
            .collect(),
        forecast_load: (0..horizon)
            .map(|t| bus_loads(forecast_load_mult[t]))
            .collect(),
        forecast_wind: (0..horizon)
            .map(|t| plant_wind(forecast_wind_mult[t]))
            .collect(),
        seed: 0,
    }
}

/// Small randomized dispatch instance with at most 12 mode binaries:
/// 1-2 buses, 1-2 generators, one battery, short horizon, 0-2
/// scenarios. Deterministic in `seed`.
pub fn random_small_instance(seed: u64) -> (GridCase, ScenarioSet, CostParams) {
    // splitmix64 stream
    let mut state = seed.wrapping_add(0x9E3779B97F4A7C15);
    let mut next = move || {
        state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    };
    let mut uniform = move |lo: f64, hi: f64| lo + (hi - lo) * (next() as f64 / u64::MAX as f64);

    let two_bus = uniform(0.0, 1.0) < 0.5;
    let horizon = if uniform(0.0, 1.0) < 0.5 { 1 } else { 2 };
    // binaries = 2 * horizon * (1 + k) <= 12
    let k = match (horizon, uniform(0.0, 1.0)) {
        (1, u) if u < 0.34 => 0,
        (1, u) if u < 0.67 => 1,
        (1, _) => 2,
        (_, u) if u < 0.34 => 0,
        (_, u) if u < 0.67 => 1,
        _ => 2,
    };

    let demand1 = uniform(40.0, 120.0);
    let demand2 = if two_bus { uniform(10.0, 60.0) } else { 0.0 };
    let mut buses = vec![Bus {
        id: 1,
        demand_mw: demand1,
        is_reference: true,
    }];
    let mut lines = Vec::new();
    if two_bus {
        buses.push(Bus {
            id: 2,
            demand_mw: demand2,
            is_reference: false,
        });
        lines.push(Line {
            from_bus: 1,
            to_bus: 2,
            susceptance_pu: uniform(5.0, 30.0),
            limit_mw: uniform(80.0, 200.0),
            angle_diff_bounds_rad: (-0.6, 0.6),
            phase_shift_rad: 0.0,
        });
    }
    let total_demand = demand1 + demand2;
    let mut generators = vec![gen(
        1,
        1,
        total_demand * uniform(1.1, 1.8),
        uniform(0.0, 0.01),
        uniform(15.0, 30.0),
        uniform(0.0, 50.0),
        uniform(1.0, 6.0),
    )];
    if uniform(0.0, 1.0) < 0.5 {
        generators.push(gen(
            2,
            if two_bus { 2 } else { 1 },
            total_demand * uniform(0.4, 0.9),
            uniform(0.0, 0.02),
            uniform(30.0, 60.0),
            uniform(0.0, 30.0),
            uniform(1.0, 4.0),
        ));
    }
    let wind_plants = if uniform(0.0, 1.0) < 0.6 {
        vec![WindPlant {
            id: 0,
            bus: if two_bus { 2 } else { 1 },
            capacity_mw: total_demand * uniform(0.2, 0.5),
            converted_from: None,
        }]
    } else {
        Vec::new()
    };
    let case = GridCase {
        base_mva: 100.0,
        buses,
        lines,
        generators,
        wind_plants,
        storage_units: vec![storage(0, 1, uniform(5.0, 25.0))],
    };

    let load_mult: Vec<f64> = (0..horizon).map(|_| uniform(0.8, 1.1)).collect();
    let wind_mult: Vec<f64> = (0..horizon).map(|_| uniform(0.3, 1.0)).collect();
    let levels: Vec<(f64, f64)> = (0..k)
        .map(|_| (uniform(0.9, 1.1), uniform(0.7, 1.2)))
        .collect();
    let scen = scenario_set(&case, &load_mult, &wind_mult, &levels);

    let costs = CostParams {
        pwl_segments: 3,
        ..CostParams::default()
    };
    (case, scen, costs)
}

pub fn build_random_model(seed: u64) -> (MilpModel, VarIndex, GridCase, ScenarioSet, CostParams) {
    let (case, scen, costs) = random_small_instance(seed);
    let (model, index) = build_extensive_form(&case, &scen, &costs).unwrap();
    assert!(
        model.binary_indices().len() <= 12,
        "seed {seed} too many binaries"
    );
    (model, index, case, scen, costs)
}
