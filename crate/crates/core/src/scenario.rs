//! Scenario configuration, the per-step co-simulation loop, ensembles and
//! output files.
//!
//! Within a step the order is: repairs that finished, mitigation switching,
//! wind failures and grid ignitions, fire spread, fire damage and automatic
//! shutoff, then the overload cascade and the performance sample. Once no cell
//! is burning, failed equipment is queued for repair.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::{
    compute_exposure, effective_rating, evaluate_fire_damage, wind_failure_and_ignition, DamageTables, ExposureIndex,
    ExposureTracker, ResponseSelection,
};
use crate::fire::{
    apply_ignitions, arrival_csv, perimeter_feature, spot_ignitions, spread_step, FireState, Ignition, IgnitionSource,
    SpottingParams,
};
use crate::landscape::{
    load_landscape, load_landscape_dir, weather_at, FuelParams, Landscape, MoistureTable, WeatherSeries,
};
use crate::mitigation::{apply_plan, auto_shutoff, form_islands, psps_decision, MitigationPlan, OperationalPolicy};
use crate::network::GridNetwork;
use crate::power::{
    apply_solution, branch_records, bus_records, cascade, dc_power_flow, performance, BranchRecord, BusRecord,
    CascadeTrace, TripCause,
};
use crate::restoration::{
    build_curve_from, re_energize, schedule_repairs_onto, CommunityMetrics, RepairDurations, RepairTask,
    ResilienceCurve,
};
use crate::rng::SeedRoot;
use crate::state::{ComponentId, ComponentState, Damage};

/// Exogenous ignition in world coordinates (m), applied at the step containing `t_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExogenousIgnition {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub t_min: f64,
}

fn default_timestep() -> f64 {
    30.0
}
fn default_one() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_p_ignition() -> f64 {
    0.1
}
fn default_crews() -> usize {
    2
}

/// Everything about a run that is not an input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub horizon_hours: f64,
    #[serde(default = "default_timestep")]
    pub timestep_minutes: f64,
    #[serde(default)]
    pub ignitions: Vec<ExogenousIgnition>,
    #[serde(default)]
    pub responses: ResponseSelection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_one")]
    pub ensemble_size: usize,
    /// Exposure buffer (m); two cells when absent.
    #[serde(default)]
    pub exposure_buffer_m: Option<f64>,
    /// Wind-induced failures and the ignitions they cause.
    #[serde(default = "default_true")]
    pub wind_failures: bool,
    /// Chance that a wind failure of an energized asset ignites the ground below.
    #[serde(default = "default_p_ignition")]
    pub ignition_probability: f64,
    #[serde(default)]
    pub spotting: SpottingParams,
    #[serde(default = "default_crews")]
    pub crews: usize,
    #[serde(default)]
    pub repair_durations: RepairDurations,
    /// Write per-step bus and branch tables.
    #[serde(default = "default_true")]
    pub power_dumps: bool,
}

impl RunConfig {
    pub fn new(horizon_hours: f64) -> Self {
        RunConfig {
            horizon_hours,
            timestep_minutes: default_timestep(),
            ignitions: Vec::new(),
            responses: ResponseSelection::default(),
            seed: 0,
            ensemble_size: 1,
            exposure_buffer_m: None,
            wind_failures: true,
            ignition_probability: default_p_ignition(),
            spotting: SpottingParams::default(),
            crews: default_crews(),
            repair_durations: RepairDurations::default(),
            power_dumps: true,
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon_hours * 60.0 / self.timestep_minutes).round() as usize
    }
}

/// Scenario file: input paths (relative to the file) plus the run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub network: PathBuf,
    /// Directory holding `fuel.asc` (and optional slope/elevation grids), or a fuel grid file.
    pub landscape: PathBuf,
    pub weather: PathBuf,
    #[serde(default)]
    pub fuels: Option<PathBuf>,
    #[serde(default)]
    pub moisture: Option<PathBuf>,
    #[serde(default)]
    pub fragility: Option<PathBuf>,
    #[serde(default)]
    pub thermal: Option<PathBuf>,
    #[serde(default)]
    pub plan: Option<PathBuf>,
    #[serde(default)]
    pub policy: Option<PathBuf>,
    #[serde(flatten)]
    pub run: RunConfig,
}

impl Scenario {
    /// Reads a scenario and resolves its paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s: Scenario = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut s.network);
        fix(&mut s.landscape);
        fix(&mut s.weather);
        for p in [
            &mut s.fuels,
            &mut s.moisture,
            &mut s.fragility,
            &mut s.thermal,
            &mut s.plan,
            &mut s.policy,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        Ok(s)
    }
}

/// Loaded and validated inputs, shared read-only by every run of an ensemble.
#[derive(Debug, Clone)]
pub struct ScenarioInputs {
    pub run: RunConfig,
    /// Network with the mitigation plan already applied.
    pub net: GridNetwork,
    pub land: Landscape,
    pub weather: WeatherSeries,
    pub fuels: FuelParams,
    pub tables: DamageTables,
    pub policy: OperationalPolicy,
}

impl ScenarioInputs {
    /// Inputs with bundled fuel and damage parameters and no policy.
    pub fn new(run: RunConfig, net: GridNetwork, land: Landscape, weather: WeatherSeries) -> Self {
        ScenarioInputs {
            run,
            net,
            land,
            weather,
            fuels: FuelParams::default(),
            tables: DamageTables::default(),
            policy: OperationalPolicy::default(),
        }
    }

    pub fn with_policy(mut self, policy: OperationalPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn load(s: &Scenario) -> Result<Self> {
        let mut net = GridNetwork::load(&s.network)?;
        if let Some(p) = &s.plan {
            net = apply_plan(&net, &MitigationPlan::load(p)?)?;
        }
        let land = if s.landscape.is_dir() {
            load_landscape_dir(&s.landscape)?
        } else {
            load_landscape(&s.landscape, None, None)?
        };
        let weather = WeatherSeries::load(&s.weather)?;
        let fuels = FuelParams::load(s.fuels.as_deref(), s.moisture.as_deref())?;
        let tables = DamageTables::load(s.fragility.as_deref(), s.thermal.as_deref())?;
        let policy = match &s.policy {
            Some(p) => OperationalPolicy::load(p)?,
            None => OperationalPolicy::default(),
        };
        let inputs = ScenarioInputs {
            run: s.run.clone(),
            net,
            land,
            weather,
            fuels,
            tables,
            policy,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        if !(r.horizon_hours > 0.0 && r.timestep_minutes > 0.0) {
            return Err(Error::config("horizon and timestep must be positive"));
        }
        let steps = r.horizon_hours * 60.0 / r.timestep_minutes;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::config("timestep must divide the horizon evenly"));
        }
        if self.weather.horizon() + 1e-9 < r.horizon_hours * 60.0 {
            return Err(Error::BeyondHorizon {
                t: r.horizon_hours * 60.0,
                horizon: self.weather.horizon(),
            });
        }
        if r.ensemble_size == 0 {
            return Err(Error::config("ensemble_size must be at least 1"));
        }
        if r.crews == 0 {
            return Err(Error::config("at least one repair crew is required"));
        }
        if !(0.0..=1.0).contains(&r.ignition_probability) {
            return Err(Error::config("ignition_probability must lie in [0, 1]"));
        }
        if let Some(b) = r.exposure_buffer_m {
            if !(b >= 0.0) {
                return Err(Error::config("exposure buffer must be >= 0"));
            }
        }
        r.repair_durations.validate()?;
        r.responses.validate(&self.tables)?;
        self.policy.validate(&self.net)?;
        self.land.check_covers(&self.net)?;
        for ig in &r.ignitions {
            if self.land.cell_at([ig.x, ig.y]).is_none() {
                return Err(Error::OutsideLandscape(format!("ignition at ({}, {})", ig.x, ig.y)));
            }
            if !(ig.t_min >= 0.0) {
                return Err(Error::config("ignition times must be >= 0"));
            }
        }
        if self.net.loads.iter().map(|l| l.weight() * l.demand).sum::<f64>() <= 0.0 {
            return Err(Error::config("network needs a positive total demand"));
        }
        Ok(())
    }

    pub fn buffer_m(&self) -> f64 {
        self.run.exposure_buffer_m.unwrap_or(2.0 * self.land.cell_size)
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgnitionRecord {
    pub t_min: f64,
    pub cell: usize,
    pub x: f64,
    pub y: f64,
    pub source: IgnitionSource,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FireSummary {
    pub burned_cells: usize,
    pub burned_area_ha: f64,
    /// kW/m
    pub max_intensity: f64,
    /// First step end (h) with no burning cells after an ignition.
    pub contained_at_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerimeterSnapshot {
    pub step: usize,
    pub feature: geojson::Feature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub seed: u64,
    pub curve: ResilienceCurve,
    pub community: CommunityMetrics,
    pub trace: CascadeTrace,
    pub ignitions: Vec<IgnitionRecord>,
    pub repairs: Vec<RepairTask>,
    pub fire: FireSummary,
    pub perimeters: Vec<PerimeterSnapshot>,
    pub arrival_csv: String,
    pub bus_records: Vec<BusRecord>,
    pub branch_records: Vec<BranchRecord>,
}

impl RunReport {
    pub fn grid_ignitions(&self) -> usize {
        self.ignitions
            .iter()
            .filter(|i| matches!(i.source, IgnitionSource::GridInduced(_)))
            .count()
    }

    pub fn metrics(&self) -> RunMetrics {
        RunMetrics {
            seed: self.seed,
            robustness: self.curve.metrics.robustness,
            rapidity: self.curve.metrics.rapidity,
            lost_performance_hours: self.curve.metrics.lost_performance_hours,
            energy_not_served_mwh: self.community.energy_not_served,
            weighted_energy_not_served_mwh: self.community.weighted_energy_not_served,
            critical_outage_hours: self.community.total_critical_outage_hours(),
            customer_interruption_hours: self.community.customer_interruption_hours,
            grid_ignitions: self.grid_ignitions(),
            burned_area_ha: self.fire.burned_area_ha,
            outages: self.trace.len(),
        }
    }
}

/// Scalar summary of one run, the unit of ensemble aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub robustness: f64,
    pub rapidity: Option<f64>,
    pub lost_performance_hours: f64,
    pub energy_not_served_mwh: f64,
    pub weighted_energy_not_served_mwh: f64,
    pub critical_outage_hours: f64,
    pub customer_interruption_hours: f64,
    pub grid_ignitions: usize,
    pub burned_area_ha: f64,
    pub outages: usize,
}

// ---------------------------------------------------------------------------
// Simulation loop
// ---------------------------------------------------------------------------

fn failed_components(net: &GridNetwork, state: &ComponentState) -> Vec<ComponentId> {
    let branches = state
        .branches
        .iter()
        .enumerate()
        .filter(|(_, b)| b.damage == Damage::Failed)
        .map(|(bi, _)| ComponentId::Branch(net.branches[bi].id));
    let poles = state
        .poles
        .iter()
        .enumerate()
        .filter(|(_, p)| p.damage == Damage::Failed)
        .map(|(pi, _)| ComponentId::Pole(net.poles[pi].id));
    branches.chain(poles).collect()
}

fn fail(net: &GridNetwork, state: &mut ComponentState, id: ComponentId) -> Result<()> {
    match id {
        ComponentId::Branch(b) => state.fail_branch(net.branch_index(b)?),
        ComponentId::Pole(p) => state.fail_pole(net.pole_index(p)?),
    }
    Ok(())
}

/// Applies switching and DER commitment, then refreshes energization without tripping.
fn switch_and_energize(
    inputs: &ScenarioInputs,
    state: &mut ComponentState,
    open: &BTreeSet<u32>,
    step: usize,
    t: f64,
    trace: &mut CascadeTrace,
) -> Result<()> {
    let net = &inputs.net;
    for (bi, br) in net.branches.iter().enumerate() {
        let off = open.contains(&br.id);
        if off && !state.branches[bi].switched_off && state.branches[bi].damage != Damage::Failed {
            trace.push(step, t, ComponentId::Branch(br.id), TripCause::Mitigation);
        }
        state.branches[bi].switched_off = off;
    }
    form_islands(net, state, &inputs.policy);
    let sol = dc_power_flow(net, state)?;
    apply_solution(net, state, &sol);
    Ok(())
}

/// Runs one scenario realization with the given seed.
pub fn run_scenario(inputs: &ScenarioInputs, seed: u64) -> Result<RunReport> {
    let net = &inputs.net;
    let land = &inputs.land;
    let run = &inputs.run;
    let dt = run.timestep_minutes;
    let dt_h = dt / 60.0;
    let steps = run.steps();
    let root = SeedRoot(seed);

    let index = ExposureIndex::new(net, land, inputs.buffer_m(), inputs.policy.trigger_radius())?;
    let mut tracker = ExposureTracker::new();
    let mut state = ComponentState::new(net);
    let mut fire = FireState::new(land, 0.0);
    let mut trace = CascadeTrace::default();
    let mut community = CommunityMetrics::new(net);
    let mut samples = Vec::with_capacity(steps);
    let mut ignition_log = Vec::new();
    let mut perimeters = Vec::new();
    let mut bus_rows = Vec::new();
    let mut branch_rows = Vec::new();
    let mut repairs: Vec<RepairTask> = Vec::new();
    let mut completed = 0usize;
    let mut scheduled: BTreeSet<ComponentId> = BTreeSet::new();
    let mut crew_free = vec![0.0; run.crews];
    let mut latched: BTreeSet<u32> = BTreeSet::new();
    let mut ever_ignited = false;
    let mut contained_at = None;
    let mut last_affected = 0usize;

    let pre_event = {
        let mut intact = ComponentState::new(net);
        form_islands(net, &mut intact, &inputs.policy);
        performance(net, &dc_power_flow(net, &intact)?)?
    };

    for step in 0..steps {
        let t = step as f64 * dt;
        let t_h = t / 60.0;
        let mut body = |state: &mut ComponentState, fire: &mut FireState, trace: &mut CascadeTrace| -> Result<f64> {
            let weather = weather_at(&inputs.weather, t)?;

            // Repairs finished by now.
            let mut done = Vec::new();
            while completed < repairs.len() {
                let next = repairs
                    .iter()
                    .enumerate()
                    .skip(completed)
                    .min_by(|a, b| a.1.finish.total_cmp(&b.1.finish).then(a.0.cmp(&b.0)))
                    .map(|(i, _)| i)
                    .unwrap();
                if repairs[next].finish > t_h + 1e-9 {
                    break;
                }
                repairs.swap(completed, next);
                done.push(repairs[completed].clone());
                completed += 1;
            }
            if !done.is_empty() {
                re_energize(net, state, &done, t_h)?;
                for task in &done {
                    scheduled.remove(&task.component);
                }
            }

            // Mitigation.
            let mut open = psps_decision(&inputs.policy, &weather);
            open.extend(latched.iter().copied());
            switch_and_energize(inputs, state, &open, step, t, trace)?;

            // Grid to fire.
            let mut new_ignitions: Vec<Ignition> = Vec::new();
            if run.wind_failures {
                let out = wind_failure_and_ignition(
                    net,
                    &weather,
                    land,
                    state,
                    &inputs.tables,
                    run.ignition_probability,
                    root,
                    step as u64,
                    t,
                )?;
                for id in out.failures {
                    fail(net, state, id)?;
                    trace.push(step, t, id, TripCause::WindDamage);
                }
                new_ignitions.extend(out.ignitions);
            }
            for ig in &run.ignitions {
                if ig.t_min >= t && ig.t_min < t + dt {
                    let cell = land.cell_at([ig.x, ig.y]).expect("validated");
                    new_ignitions.push(Ignition {
                        cell,
                        time: t,
                        source: IgnitionSource::Exogenous,
                    });
                }
            }
            new_ignitions.extend(spot_ignitions(fire, land, &weather, &run.spotting, root, step as u64));

            // Fire spread.
            if !new_ignitions.is_empty() || fire.has_burning() {
                let outcome = apply_ignitions(fire, land, &inputs.fuels, &weather, &new_ignitions, t);
                for ig in &outcome.applied {
                    let [x, y] = land.cell_center(ig.cell);
                    ignition_log.push(IgnitionRecord {
                        t_min: ig.time,
                        cell: ig.cell,
                        x,
                        y,
                        source: ig.source,
                    });
                }
                ever_ignited |= !outcome.applied.is_empty();
                *fire = spread_step(&outcome.state, land, &inputs.fuels, &weather, dt);
            } else {
                fire.time = t + dt;
            }

            // Fire to grid.
            let exposures = compute_exposure(&index, fire, t, dt, &mut tracker);
            let events = evaluate_fire_damage(
                net,
                state,
                &exposures,
                &run.responses,
                &inputs.tables,
                &weather,
                root,
                step as u64,
                dt,
            )?;
            for ev in events {
                if ev.damage == Damage::Failed {
                    trace.push(step, t, ev.component, TripCause::FireDamage);
                }
            }
            let triggered = auto_shutoff(net, &inputs.policy, &exposures, &weather);
            if !triggered.is_subset(&latched) {
                latched.extend(triggered);
                open.extend(latched.iter().copied());
                for (bi, br) in net.branches.iter().enumerate() {
                    if open.contains(&br.id) && !state.branches[bi].switched_off {
                        if state.branches[bi].damage != Damage::Failed {
                            trace.push(step, t, ComponentId::Branch(br.id), TripCause::Mitigation);
                        }
                        state.branches[bi].switched_off = true;
                    }
                }
            }

            // Power system.
            form_islands(net, state, &inputs.policy);
            let ratings: Vec<f64> = (0..net.branches.len())
                .map(|bi| effective_rating(net, state, &inputs.tables, bi))
                .collect();
            let result = cascade(net, state, &ratings, step, t, trace)?;
            let perf = performance(net, &result.solution)?;
            community.record(net, &result.solution, dt_h);
            if run.power_dumps {
                bus_rows.extend(bus_records(net, &result.solution, t));
                branch_rows.extend(branch_records(net, state, &result.solution, &ratings, t));
            }

            // Perimeter when the affected set changed.
            let affected = fire.affected_count();
            if affected != last_affected {
                perimeters.push(PerimeterSnapshot {
                    step,
                    feature: perimeter_feature(fire, land),
                });
                last_affected = affected;
            }

            // Containment and repair scheduling.
            if !fire.has_burning() {
                if ever_ignited && contained_at.is_none() {
                    contained_at = Some(t_h + dt_h);
                    latched.clear();
                    for b in state.branches.iter_mut() {
                        b.tripped = false;
                    }
                }
                let pending: Vec<ComponentId> = failed_components(net, state)
                    .into_iter()
                    .filter(|c| !scheduled.contains(c))
                    .collect();
                if !pending.is_empty() {
                    for f in crew_free.iter_mut() {
                        *f = f64::max(*f, t_h + dt_h);
                    }
                    let tasks = schedule_repairs_onto(net, state, &pending, &mut crew_free, &run.repair_durations)?;
                    scheduled.extend(tasks.iter().map(|t| t.component));
                    repairs.extend(tasks);
                }
            }
            Ok(perf)
        };
        let perf = body(&mut state, &mut fire, &mut trace).map_err(|e| Error::Step {
            step,
            t_min: t,
            source: Box::new(e),
        })?;
        samples.push((t_h, perf));
    }

    let curve = build_curve_from(&samples, run.horizon_hours, pre_event)?;
    let burned = fire.affected_count();
    let mut repairs_sorted = repairs;
    repairs_sorted.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.crew.cmp(&b.crew)));
    Ok(RunReport {
        seed,
        curve,
        community,
        trace,
        ignitions: ignition_log,
        repairs: repairs_sorted,
        fire: FireSummary {
            burned_cells: burned,
            burned_area_ha: burned as f64 * land.cell_size * land.cell_size / 10_000.0,
            max_intensity: fire.max_intensity(),
            contained_at_h: contained_at,
        },
        perimeters,
        arrival_csv: arrival_csv(&fire, land),
        bus_records: bus_rows,
        branch_records: branch_rows,
    })
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
    pub max: f64,
}

impl Stats {
    /// Summary statistics; quantiles by linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Stats {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v[0],
            p10: q(0.1),
            p50: q(0.5),
            p90: q(0.9),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAggregate {
    pub runs: usize,
    pub failed_runs: usize,
    pub robustness: Option<Stats>,
    pub rapidity: Option<Stats>,
    pub lost_performance_hours: Option<Stats>,
    pub energy_not_served_mwh: Option<Stats>,
    pub weighted_energy_not_served_mwh: Option<Stats>,
    pub critical_outage_hours: Option<Stats>,
    pub customer_interruption_hours: Option<Stats>,
    pub grid_ignitions: Option<Stats>,
    pub burned_area_ha: Option<Stats>,
}

impl EnsembleAggregate {
    pub fn from_metrics(metrics: &[RunMetrics], failed_runs: usize) -> Self {
        let col = |f: &dyn Fn(&RunMetrics) -> Option<f64>| Stats::of(&metrics.iter().filter_map(f).collect::<Vec<_>>());
        EnsembleAggregate {
            runs: metrics.len(),
            failed_runs,
            robustness: col(&|m| Some(m.robustness)),
            rapidity: col(&|m| m.rapidity),
            lost_performance_hours: col(&|m| Some(m.lost_performance_hours)),
            energy_not_served_mwh: col(&|m| Some(m.energy_not_served_mwh)),
            weighted_energy_not_served_mwh: col(&|m| Some(m.weighted_energy_not_served_mwh)),
            critical_outage_hours: col(&|m| Some(m.critical_outage_hours)),
            customer_interruption_hours: col(&|m| Some(m.customer_interruption_hours)),
            grid_ignitions: col(&|m| Some(m.grid_ignitions as f64)),
            burned_area_ha: col(&|m| Some(m.burned_area_ha)),
        }
    }
}

#[derive(Debug)]
pub struct EnsembleReport {
    /// Successful runs in seed order.
    pub reports: Vec<RunReport>,
    /// Seeds whose run failed, with the error.
    pub failures: Vec<(u64, Error)>,
    pub aggregate: EnsembleAggregate,
}

/// Runs seeds `seed .. seed + runs` in parallel; results come back in seed order.
pub fn run_ensemble(inputs: &ScenarioInputs, runs: usize) -> Result<EnsembleReport> {
    if runs == 0 {
        return Err(Error::config("ensemble needs at least one run"));
    }
    let base = inputs.run.seed;
    let results: Vec<(u64, Result<RunReport>)> = (0..runs as u64)
        .into_par_iter()
        .map(|k| {
            let seed = base.wrapping_add(k);
            (seed, run_scenario(inputs, seed))
        })
        .collect();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(rep) => reports.push(rep),
            Err(e) => failures.push((seed, e)),
        }
    }
    if reports.is_empty() {
        return Err(failures.into_iter().next().unwrap().1);
    }
    let metrics: Vec<RunMetrics> = reports.iter().map(RunReport::metrics).collect();
    let aggregate = EnsembleAggregate::from_metrics(&metrics, failures.len());
    Ok(EnsembleReport {
        reports,
        failures,
        aggregate,
    })
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_string<T: Serialize>(rows: &[T], header: &[&str]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn component_fields(c: ComponentId) -> (&'static str, u32) {
    match c {
        ComponentId::Branch(id) => ("branch", id),
        ComponentId::Pole(id) => ("pole", id),
    }
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    seed: u64,
    horizon_hours: f64,
    phases: &'a crate::restoration::Phases,
    curve: &'a crate::restoration::CurveMetrics,
    community: &'a CommunityMetrics,
    fire: &'a FireSummary,
    grid_ignitions: usize,
    exogenous_ignitions: usize,
    spot_ignitions: usize,
    outages: usize,
    overload_trips: usize,
    repairs: usize,
}

/// Writes the report files into `dir` (created if needed).
///
/// Files: `curve.csv`, `metrics.json`, `repairs.csv`, `cascade.csv`,
/// `ignitions.csv`, `arrival.csv`, `perimeters/step_NNNN.geojson` and, when
/// recorded, `power_buses.csv` and `power_branches.csv`.
pub fn write_outputs(report: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut curve = String::from("t_hours,performance\n");
    for (t, p) in &report.curve.samples {
        let _ = writeln!(curve, "{t},{p}");
    }
    write(&dir.join("curve.csv"), curve)?;

    let count = |f: fn(&IgnitionSource) -> bool| report.ignitions.iter().filter(|i| f(&i.source)).count();
    let metrics = MetricsFile {
        seed: report.seed,
        horizon_hours: report.curve.horizon,
        phases: &report.curve.phases,
        curve: &report.curve.metrics,
        community: &report.community,
        fire: &report.fire,
        grid_ignitions: report.grid_ignitions(),
        exogenous_ignitions: count(|s| *s == IgnitionSource::Exogenous),
        spot_ignitions: count(|s| *s == IgnitionSource::Spotting),
        outages: report.trace.len(),
        overload_trips: report.trace.count(TripCause::Overload),
        repairs: report.repairs.len(),
    };
    write(
        &dir.join("metrics.json"),
        serde_json::to_string_pretty(&metrics)? + "\n",
    )?;

    let mut repairs = String::from("component,id,crew,start_h,finish_h\n");
    for r in &report.repairs {
        let (kind, id) = component_fields(r.component);
        let _ = writeln!(repairs, "{kind},{id},{},{},{}", r.crew, r.start, r.finish);
    }
    write(&dir.join("repairs.csv"), repairs)?;

    let mut cascade = String::from("step,t_min,component,id,cause\n");
    for e in &report.trace.events {
        let (kind, id) = component_fields(e.component);
        let _ = writeln!(cascade, "{},{},{kind},{id},{}", e.step, e.t, e.cause.as_str());
    }
    write(&dir.join("cascade.csv"), cascade)?;

    let mut ign = String::from("t_min,cell,x,y,source,component\n");
    for i in &report.ignitions {
        let (source, comp) = match i.source {
            IgnitionSource::Exogenous => ("exogenous", String::new()),
            IgnitionSource::Spotting => ("spotting", String::new()),
            IgnitionSource::GridInduced(c) => ("grid_induced", c.to_string()),
        };
        let _ = writeln!(ign, "{},{},{},{},{source},{comp}", i.t_min, i.cell, i.x, i.y);
    }
    write(&dir.join("ignitions.csv"), ign)?;
    write(&dir.join("arrival.csv"), &report.arrival_csv)?;

    let pdir = dir.join("perimeters");
    if pdir.exists() {
        std::fs::remove_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
    }
    std::fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
    for p in &report.perimeters {
        let fc = geojson::FeatureCollection {
            bbox: None,
            features: vec![p.feature.clone()],
            foreign_members: None,
        };
        write(&pdir.join(format!("step_{:04}.geojson", p.step)), fc.to_string() + "\n")?;
    }

    if !report.bus_records.is_empty() {
        write(
            &dir.join("power_buses.csv"),
            csv_string(&report.bus_records, &["t", "island", "bus", "served_mw", "shed_mw"])?,
        )?;
        write(
            &dir.join("power_branches.csv"),
            csv_string(
                &report.branch_records,
                &["t", "branch", "flow_mw", "rating_mw", "status"],
            )?,
        )?;
    }
    Ok(())
}

/// Writes every run under `dir/seed_<n>/` plus `aggregate.json` and `runs.csv`.
pub fn write_ensemble_outputs(ens: &EnsembleReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in &ens.reports {
        write_outputs(r, &dir.join(format!("seed_{}", r.seed)))?;
    }
    write(
        &dir.join("aggregate.json"),
        serde_json::to_string_pretty(&ens.aggregate)? + "\n",
    )?;
    let metrics: Vec<RunMetrics> = ens.reports.iter().map(RunReport::metrics).collect();
    let mut runs = String::from(
        "seed,robustness,rapidity,lost_performance_hours,energy_not_served_mwh,weighted_energy_not_served_mwh,critical_outage_hours,customer_interruption_hours,grid_ignitions,burned_area_ha,outages\n",
    );
    for m in &metrics {
        let _ = writeln!(
            runs,
            "{},{},{},{},{},{},{},{},{},{},{}",
            m.seed,
            m.robustness,
            m.rapidity.map(|r| r.to_string()).unwrap_or_default(),
            m.lost_performance_hours,
            m.energy_not_served_mwh,
            m.weighted_energy_not_served_mwh,
            m.critical_outage_hours,
            m.customer_interruption_hours,
            m.grid_ignitions,
            m.burned_area_ha,
            m.outages
        );
    }
    write(&dir.join("runs.csv"), runs)?;
    if !ens.failures.is_empty() {
        let mut f = String::from("seed,error\n");
        for (seed, e) in &ens.failures {
            let _ = writeln!(f, "{seed},\"{}\"", e.to_string().replace('"', "'"));
        }
        write(&dir.join("failures.csv"), f)?;
    }
    Ok(())
}

/// Calm, humid weather of the given length, useful for null scenarios.
pub fn calm_weather(horizon_hours: f64, timestep_minutes: f64) -> Result<WeatherSeries> {
    let steps = (horizon_hours * 60.0 / timestep_minutes).round() as usize;
    WeatherSeries::constant(crate::landscape::WeatherSample::calm(), steps.max(1), timestep_minutes)
}

/// Moisture table that keeps fuels fully dry, for deterministic test fires.
pub fn dry_fuels() -> FuelParams {
    FuelParams::default().with_moisture(MoistureTable::constant(1.0).expect("1.0 is a valid factor"))
}
