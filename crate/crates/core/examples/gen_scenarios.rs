//! Regenerates the bundled scenario set.
//!
//! ```text
//! cargo run --release --example gen_scenarios -- scenarios
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;

use pyrogrid::landscape::{synthetic_landscape, SyntheticLandscape, WeatherSample, WeatherSeries};
use pyrogrid::mitigation::overhead_dx_branches;
use pyrogrid::network::{build_testbed, Criticality, TestbedConfig};

const STEP_MIN: f64 = 30.0;

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn series(hours: usize, at: impl Fn(f64) -> WeatherSample) -> Result<WeatherSeries> {
    let n = hours * 2;
    let samples = (0..n).map(|i| at(i as f64 * STEP_MIN / 60.0)).collect();
    Ok(WeatherSeries::new(STEP_MIN, samples)?)
}

fn sample(wind: f64, dir: f64, rh: f64, temp: f64) -> WeatherSample {
    WeatherSample {
        wind_speed: wind,
        wind_direction: dir,
        relative_humidity: rh,
        temperature: temp,
        precipitation: 0.0,
    }
}

/// A dry north-easterly event: light wind, then 18 h of red-flag gusts, then a lull.
/// Wind only rises above 6 m/s while humidity is below 15 %.
fn high_wind() -> Result<WeatherSeries> {
    series(48, |h| match h {
        h if h < 12.0 => sample(5.0, 45.0, 28.0, 27.0),
        h if h < 30.0 => sample(22.0 + 3.0 * ((h - 12.0) / 3.0).sin(), 45.0, 9.0, 33.0),
        _ => sample(4.0, 45.0, 32.0, 26.0),
    })
}

/// Three dry days with a southerly afternoon breeze pushing fire toward the town.
fn fire_weather() -> Result<WeatherSeries> {
    series(72, |h| {
        let diurnal = (std::f64::consts::TAU * (h - 9.0) / 24.0).sin();
        sample(6.0 + 3.0 * diurnal, 200.0, 22.0 - 8.0 * diurnal, 28.0 + 6.0 * diurnal)
    })
}

fn main() -> Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "scenarios".into()));
    for sub in ["", "landscape", "weather", "policies", "plans"] {
        std::fs::create_dir_all(out.join(sub))?;
    }

    let testbed = TestbedConfig::default();
    write_json(&out.join("testbed.json"), &serde_json::to_value(&testbed)?)?;
    let net = build_testbed(&testbed)?;
    net.save(&out.join("net.json"))?;

    // The core reaches below the lowest Tx bus so transmission spans sit over nonburnable ground.
    let land = synthetic_landscape(&SyntheticLandscape {
        urban_core_fraction: 0.40,
        ..SyntheticLandscape::default()
    });
    land.write_dir(&out.join("landscape"))?;

    let calm = WeatherSeries::constant(WeatherSample::calm(), 7 * 48, STEP_MIN)?;
    write(&out.join("weather/calm_7d.csv"), &calm.to_csv()?)?;
    write(&out.join("weather/high_wind_48h.csv"), &high_wind()?.to_csv()?)?;
    write(&out.join("weather/fire_72h.csv"), &fire_weather()?.to_csv()?)?;

    let zone = overhead_dx_branches(&net);
    let poles: Vec<u32> = net.poles.iter().map(|p| p.id).collect();
    let psps = json!({ "wind_speed_min": 15.0, "humidity_max": 15.0 });
    write_json(&out.join("policies/none.json"), &json!({}))?;
    write_json(
        &out.join("policies/psps.json"),
        &json!({ "psps": { "thresholds": psps, "zone": zone } }),
    )?;
    write_json(
        &out.join("policies/psps_islanding.json"),
        &json!({ "psps": { "thresholds": psps, "zone": zone }, "islanding": { "feeders": [1] } }),
    )?;
    write_json(
        &out.join("policies/auto_shutoff.json"),
        &json!({ "auto_shutoff": { "trigger_distance": 300.0, "trigger_wind": 18.0 } }),
    )?;

    write_json(
        &out.join("plans/harden_feeder.json"),
        &json!({ "hardened_branches": zone, "hardened_poles": poles }),
    )?;
    let critical: Vec<_> = net
        .loads
        .iter()
        .filter(|l| l.criticality == Criticality::Critical)
        .filter(|l| net.buses[net.bus_index(l.bus).unwrap()].feeder.is_some())
        .map(|l| json!({ "bus": l.bus, "p_max": (l.demand * 1.5 * 100.0).round() / 100.0 }))
        .collect();
    write_json(
        &out.join("plans/der_microgrid.json"),
        &json!({ "der_additions": critical }),
    )?;

    let base = |weather: &str, hours: f64| {
        json!({
            "network": "net.json",
            "landscape": "landscape",
            "weather": weather,
            "horizon_hours": hours,
            "timestep_minutes": STEP_MIN,
            "seed": 1,
        })
    };
    let with = |mut v: serde_json::Value, extra: serde_json::Value| {
        for (k, x) in extra.as_object().unwrap() {
            v[k] = x.clone();
        }
        v
    };

    write_json(&out.join("null.json"), &base("weather/calm_7d.csv", 168.0))?;
    let ignition = json!([{ "x": 3000.0, "y": 1500.0, "t_min": 60.0 }]);
    write_json(
        &out.join("wildfire.json"),
        &with(
            base("weather/fire_72h.csv", 72.0),
            json!({ "ignitions": ignition, "ensemble_size": 20,
                    "spotting": { "probability": 0.002, "reference_wind": 10.0, "mean_distance": 300.0 } }),
        ),
    )?;
    write_json(
        &out.join("wildfire_mitigated.json"),
        &with(
            base("weather/fire_72h.csv", 72.0),
            json!({ "ignitions": ignition, "ensemble_size": 20,
                    "plan": "plans/der_microgrid.json", "policy": "policies/psps_islanding.json",
                    "spotting": { "probability": 0.002, "reference_wind": 10.0, "mean_distance": 300.0 } }),
        ),
    )?;
    write_json(
        &out.join("high_wind.json"),
        &with(
            base("weather/high_wind_48h.csv", 48.0),
            json!({ "ensemble_size": 50, "policy": "policies/none.json" }),
        ),
    )?;
    write_json(
        &out.join("high_wind_psps.json"),
        &with(
            base("weather/high_wind_48h.csv", 48.0),
            json!({ "ensemble_size": 50, "policy": "policies/psps.json" }),
        ),
    )?;
    write_json(
        &out.join("high_wind_hardened.json"),
        &with(
            base("weather/high_wind_48h.csv", 48.0),
            json!({ "ensemble_size": 50, "policy": "policies/none.json", "plan": "plans/harden_feeder.json",
                    "responses": { "tx_line": "fragility", "dx_line": "fragility", "pole": "fragility" } }),
        ),
    )?;
    println!("wrote scenarios to {}", out.display());
    Ok(())
}
