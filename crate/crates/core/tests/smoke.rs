//! Manual full-pipeline smoke runs (ignored by default; used to gauge
//! solve times and magnitudes on the bundled fixtures).

use sded::formulation::{
    build_extensive_form, extract_solution, solve_model, verify_solution, CostParams, SolverChoice,
};
use sded::grid::{
    apply_wind_conversion, attach_storage, load_case, penetration_level, StorageSpec,
};
use sded::milp::BnbOptions;
use sded::scenarios::{
    build_scenario_paths, disaggregate_to_buses, load_percentile_forecasts, Coupling,
    DisaggregateOptions, SeriesKind,
};

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
#[ignore]
fn ieee39_single_cell_smoke() {
    let case = load_case(fixture("ieee39.case.json")).unwrap();
    assert!((case.total_demand_mw() - 6254.23).abs() < 0.01);
    let case20 = apply_wind_conversion(&case, &[3, 6]).unwrap();
    println!("penetration: {:.4}", penetration_level(&case20));

    let load_fc =
        load_percentile_forecasts(fixture("forecasts/load.csv"), SeriesKind::Load).unwrap();
    let wind_fc =
        load_percentile_forecasts(fixture("forecasts/wind.csv"), SeriesKind::Wind).unwrap();
    let k = 5;
    let sys = build_scenario_paths(&load_fc, &wind_fc, k, Coupling::Rank).unwrap();
    println!(
        "load levels t=0: {:?}",
        (0..k).map(|s| sys.load_path[s][0]).collect::<Vec<_>>()
    );
    println!(
        "wind levels t=0: {:?}",
        (0..k).map(|s| sys.wind_path[s][0]).collect::<Vec<_>>()
    );

    for size in [0.0_f64, 60.0] {
        let case_b = if size > 0.0 {
            attach_storage(
                &case20,
                &[StorageSpec::new(0, 21, size), StorageSpec::new(1, 28, size)],
            )
            .unwrap()
        } else {
            case20.clone()
        };
        let scen = disaggregate_to_buses(
            &sys,
            &case_b,
            &DisaggregateOptions {
                noise_sigma: 0.10,
                seed: 42,
                renormalize: true,
            },
        );
        let costs = CostParams::default();
        let t0 = std::time::Instant::now();
        let (model, index) = build_extensive_form(&case_b, &scen, &costs).unwrap();
        println!(
            "size {size}: model {} vars ({} binaries) x {} rows, built in {:?}",
            model.n_vars(),
            model.binary_indices().len(),
            model.n_rows(),
            t0.elapsed()
        );
        let t1 = std::time::Instant::now();
        let raw = solve_model(
            &model,
            &index,
            &SolverChoice::InternalFastpath,
            &BnbOptions::default(),
        )
        .unwrap();
        println!(
            "size {size}: solved status {:?} objective {:.1} in {:?} ({} nodes)",
            raw.status,
            raw.objective,
            t1.elapsed(),
            raw.nodes
        );
        let sol = extract_solution(&raw, &index, &case_b, &scen, &costs).unwrap();
        let report = verify_solution(&sol, &case_b, &scen, &costs);
        println!(
            "size {size}: verify max residual {:.3e} (passes: {})",
            report.max_residual(),
            report.passes()
        );
        println!(
            "size {size}: first-stage WC {:.2} MWh, scenario WC {:.2} MWh, breakdown {:?}",
            sol.first_stage_wind_curtailment_mwh(costs.dt_hours),
            sol.expected_scenario_wind_curtailment_mwh(costs.dt_hours),
            sol.costs
        );
        for t in 0..sol.horizon {
            println!(
                "  t{}: demand {:.1} cgd {:.1} wg {:.1} bd {:.1} wc {:.1}",
                t + 1,
                sol.forecast_demand_mw[t],
                sol.generation[t].iter().sum::<f64>() - sol.gen_curtail[t].iter().sum::<f64>(),
                sol.forecast_wind_mw[t],
                sol.battery_dispatch_mw(t),
                sol.wind_curtail_mw(t)
            );
        }
    }
}
