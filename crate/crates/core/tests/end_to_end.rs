//! Whole-loop scenarios on small fixtures.

use pyrogrid::fixtures::micro_feeder;
use pyrogrid::landscape::{FuelClass, Landscape};
use pyrogrid::power::TripCause;
use pyrogrid::scenario::{calm_weather, run_scenario, ExogenousIgnition, RunConfig, ScenarioInputs};
use pyrogrid::state::ComponentId;

/// 200 x 200 cells of 30 m, nonburnable except a grass square of
/// `(2 * half + 1)^2` cells centred on `(x, y)`.
fn patch_landscape(x: f64, y: f64, half: i64) -> Landscape {
    let mut land = Landscape::uniform(200, 200, 30.0, FuelClass::Nonburnable);
    let c = land.cell_at([x, y]).unwrap();
    let (col, row) = land.col_row(c);
    for dr in -half..=half {
        for dc in -half..=half {
            let idx = land.index((col as i64 + dc) as usize, (row as i64 + dr) as usize);
            land.fuel[idx] = FuelClass::Grass;
        }
    }
    land
}

fn micro_inputs(ignitions: Vec<ExogenousIgnition>, land: Landscape) -> ScenarioInputs {
    let mut run = RunConfig::new(24.0);
    run.ignitions = ignitions;
    run.wind_failures = false;
    run.crews = 1;
    ScenarioInputs::new(run, micro_feeder(), land, calm_weather(24.0, 30.0).unwrap())
}

#[test]
fn null_scenario_stays_at_full_service() {
    let inputs = micro_inputs(vec![], patch_landscape(3000.0, 3500.0, 2));
    let r = run_scenario(&inputs, 1).unwrap();
    assert!(r.curve.samples.iter().all(|s| s.1 == 1.0));
    assert!(r.trace.is_empty());
    assert_eq!(r.fire.burned_cells, 0);
    assert!(r.perimeters.is_empty());
}

#[test]
fn fire_far_from_assets_burns_out_harmlessly() {
    let land = patch_landscape(500.0, 500.0, 3);
    let inputs = micro_inputs(
        vec![ExogenousIgnition {
            x: 500.0,
            y: 500.0,
            t_min: 0.0,
        }],
        land,
    );
    let r = run_scenario(&inputs, 1).unwrap();
    assert!(r.curve.samples.iter().all(|s| s.1 == 1.0));
    assert!(r.trace.is_empty());
    assert_eq!(r.fire.burned_cells, 49);
    assert!(r.fire.contained_at_h.is_some());
    assert!(r.repairs.is_empty());
}

/// Hand trace on the 5-bus fixture. The ignition sits under section 3 (bus 3 to
/// bus 4), so the binary response fails it in step 0. Buses 4 and 5 lose their
/// only path to the bulk generator and both loads drop: performance 0. The grass
/// patch spans +-75 m, far from the poles 500 m away, so nothing else is
/// exposed. Once the patch burns out the 12 h line repair is queued for the
/// single crew starting at the containment time; at the first step at or after
/// it finishes, service returns to 1.0.
#[test]
fn feeder_fire_fails_section_then_repair_restores() {
    let land = patch_landscape(3000.0, 3500.0, 2);
    let inputs = micro_inputs(
        vec![ExogenousIgnition {
            x: 3000.0,
            y: 3500.0,
            t_min: 0.0,
        }],
        land,
    );
    let r = run_scenario(&inputs, 7).unwrap();

    assert_eq!(r.trace.events.len(), 1);
    let ev = &r.trace.events[0];
    assert_eq!(
        (ev.step, ev.component, ev.cause),
        (0, ComponentId::Branch(3), TripCause::FireDamage)
    );
    assert_eq!(r.curve.samples[0].1, 0.0);

    let contained = r.fire.contained_at_h.expect("patch burns out");
    assert_eq!(r.repairs.len(), 1);
    let task = &r.repairs[0];
    assert_eq!(task.component, ComponentId::Branch(3));
    assert_eq!((task.start, task.finish), (contained, contained + 12.0));

    for &(t, p) in &r.curve.samples {
        let want = if t < task.finish { 0.0 } else { 1.0 };
        assert_eq!(p, want, "t = {t}");
    }
    assert_eq!(r.curve.metrics.robustness, 0.0);
    assert_eq!(r.curve.phases.recovered, Some(task.finish));
    assert!((r.curve.metrics.lost_performance_hours - task.finish).abs() < 1e-12);
    assert_eq!(r.fire.burned_cells, 25);
    assert!(r.ignitions.iter().all(|i| i.t_min == 0.0));
}

#[test]
fn fire_response_off_leaves_service_untouched() {
    let land = patch_landscape(3000.0, 3500.0, 2);
    let mut inputs = micro_inputs(
        vec![ExogenousIgnition {
            x: 3000.0,
            y: 3500.0,
            t_min: 0.0,
        }],
        land,
    );
    inputs.run.responses = pyrogrid::exposure::ResponseSelection::all(pyrogrid::exposure::ResponseModel::Off);
    let r = run_scenario(&inputs, 7).unwrap();
    assert!(r.curve.samples.iter().all(|s| s.1 == 1.0));
    assert!(r.trace.is_empty());
    assert_eq!(r.fire.burned_cells, 25);
}
