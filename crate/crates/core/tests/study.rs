//! Fixture-level checks of the bundled study inputs and the dispatch
//! narrative (demand drop forces simultaneous wind curtailment and
//! battery charging in the same interval).

mod common;

use common::fixture;
use sded::experiments::{scenarios_for_case, ScenarioConfig};
use sded::formulation::{
    build_extensive_form, extract_solution, solve_model, verify_solution, CostParams, SolverChoice,
};
use sded::grid::{
    apply_wind_conversion, attach_storage, load_case, penetration_level, StorageSpec,
};
use sded::milp::{BnbOptions, MipStatus};
use sded::scenarios::{load_percentile_forecasts, Coupling, SeriesKind};

#[test]
fn ieee39_fixture_matches_reference_shape() {
    let case = load_case(fixture("ieee39.case.json")).unwrap();
    assert_eq!(case.buses.len(), 39);
    assert_eq!(case.lines.len(), 46);
    assert_eq!(case.generators.len(), 10);
    assert!((case.total_demand_mw() - 6254.2).abs() < 0.1);
    assert_eq!(case.total_conventional_capacity_mw(), 7367.0);
}

#[test]
fn penetration_configs_match_reported_levels() {
    let case = load_case(fixture("ieee39.case.json")).unwrap();
    // converting G3 alone is the "10%" configuration
    let ten = apply_wind_conversion(&case, &[3]).unwrap();
    assert!((penetration_level(&ten) - 725.0 / 7367.0).abs() < 1e-12);
    assert!((penetration_level(&ten) - 0.0984).abs() < 5e-4);
    // G3 + G6 is the default "20%" configuration
    let twenty = apply_wind_conversion(&case, &[3, 6]).unwrap();
    assert!((penetration_level(&twenty) - 0.1917).abs() < 5e-5);
    assert_eq!(twenty.wind_plants.len(), 2);
    // G3, G4, G6, G9 is the "40%" configuration
    let forty = apply_wind_conversion(&case, &[3, 4, 6, 9]).unwrap();
    assert_eq!(forty.wind_plants.len(), 4);
    assert!((penetration_level(&forty) - 0.3976).abs() < 5e-4);
    // capacity is conserved by every conversion
    for converted in [&ten, &twenty, &forty] {
        assert!(
            (converted.total_conventional_capacity_mw() + converted.total_wind_capacity_mw()
                - 7367.0)
                .abs()
                < 1e-9
        );
    }
}

#[test]
fn bundled_forecasts_have_the_study_horizon() {
    let load_fc =
        load_percentile_forecasts(fixture("forecasts/load.csv"), SeriesKind::Load).unwrap();
    let wind_fc =
        load_percentile_forecasts(fixture("forecasts/wind.csv"), SeriesKind::Wind).unwrap();
    // 2 hours at 15-minute steps
    assert_eq!(load_fc.horizon(), 8);
    assert_eq!(wind_fc.horizon(), 8);
    let p50_mean: f64 = load_fc.p50_path().iter().sum::<f64>() / 8.0;
    assert!((p50_mean - 1.0).abs() < 1e-12);
}

#[test]
fn drop_interval_charges_battery_while_curtailing() {
    // 20% penetration with one 20 MW unit at each of buses 21 and 28:
    // the engineered demand drop exceeds the fleet's ramp-down, so the
    // same interval shows positive wind curtailment and a negative
    // (charging) battery dispatch.
    let base = load_case(fixture("ieee39.case.json")).unwrap();
    let converted = apply_wind_conversion(&base, &[3, 6]).unwrap();
    let case = attach_storage(
        &converted,
        &[StorageSpec::new(0, 21, 20.0), StorageSpec::new(1, 28, 20.0)],
    )
    .unwrap();
    let load_fc =
        load_percentile_forecasts(fixture("forecasts/load.csv"), SeriesKind::Load).unwrap();
    let wind_fc =
        load_percentile_forecasts(fixture("forecasts/wind.csv"), SeriesKind::Wind).unwrap();
    let scen = scenarios_for_case(
        &case,
        &load_fc,
        &wind_fc,
        &ScenarioConfig {
            count: 3,
            coupling: Coupling::Rank,
            noise_sigma: 0.10,
            seed: 42,
            renormalize: true,
        },
    )
    .unwrap();
    let costs = CostParams::default();
    let (model, index) = build_extensive_form(&case, &scen, &costs).unwrap();
    let raw = solve_model(
        &model,
        &index,
        &SolverChoice::InternalFastpath,
        &BnbOptions::default(),
    )
    .unwrap();
    assert_eq!(raw.status, MipStatus::Optimal);
    let sol = extract_solution(&raw, &index, &case, &scen, &costs).unwrap();
    assert!(verify_solution(&sol, &case, &scen, &costs).passes());

    let narrative = (0..sol.horizon)
        .find(|&t| sol.wind_curtail_mw(t) > 1.0 && sol.battery_dispatch_mw(t) < -1.0);
    assert!(
        narrative.is_some(),
        "no interval with curtailment and charging; bd/wc per t: {:?}",
        (0..sol.horizon)
            .map(|t| (sol.battery_dispatch_mw(t), sol.wind_curtail_mw(t)))
            .collect::<Vec<_>>()
    );
    // index covers the model bijectively
    assert_eq!(index.len(), model.n_vars());
    for col in (0..index.len()).step_by(97) {
        assert_eq!(index.col(index.key(col)), col);
    }
}
