//! Fire exposure of grid assets and the damage models that consume it.
//!
//! Three fire response families are available per component class: binary
//! (any exposure fails the asset), a steady-state conductor heat balance, and
//! lognormal fragility curves. Wind-driven failures and the ignitions they can
//! cause are evaluated here as well.

use std::collections::HashMap;
use std::path::Path;

use libm::erfc;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fire::{FireState, Ignition, IgnitionSource};
use crate::landscape::{Landscape, WeatherSample};
use crate::network::{point_segment_distance, BranchKind, GridNetwork, Level};
use crate::rng::SeedRoot;
use crate::state::{ComponentId, ComponentState, Damage};

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

fn point_rect_distance(p: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> f64 {
    let dx = (lo[0] - p[0]).max(0.0).max(p[0] - hi[0]);
    let dy = (lo[1] - p[1]).max(0.0).max(p[1] - hi[1]);
    dx.hypot(dy)
}

/// Liang-Barsky clip test.
fn segment_hits_rect(a: [f64; 2], b: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> bool {
    let d = [b[0] - a[0], b[1] - a[1]];
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for axis in 0..2 {
        for (p, q) in [(-d[axis], a[axis] - lo[axis]), (d[axis], hi[axis] - a[axis])] {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
    }
    t0 <= t1
}

/// Distance between a segment and an axis-aligned rectangle (0 when they meet).
pub fn segment_rect_distance(a: [f64; 2], b: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> f64 {
    if segment_hits_rect(a, b, lo, hi) {
        return 0.0;
    }
    let corners = [lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]];
    corners
        .iter()
        .map(|&c| point_segment_distance(c, a, b))
        .chain([point_rect_distance(a, lo, hi), point_rect_distance(b, lo, hi)])
        .fold(f64::INFINITY, f64::min)
}

fn polyline_rect_distance(line: &[[f64; 2]], lo: [f64; 2], hi: [f64; 2]) -> f64 {
    line.windows(2)
        .map(|w| segment_rect_distance(w[0], w[1], lo, hi))
        .fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------------------
// Exposure
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureRecord {
    pub component: ComponentId,
    /// kW/m, over burning cells within the buffer.
    pub max_intensity: f64,
    /// m
    pub max_flame_length: f64,
    /// First time any buffered cell burned, min.
    pub exposure_start: Option<f64>,
    /// Accumulated minutes with burning cells in the buffer.
    pub exposure_duration: f64,
    /// Distance to the nearest burning cell inside the search radius, else infinite.
    pub distance_to_front: f64,
}

impl ExposureRecord {
    fn empty(component: ComponentId) -> Self {
        ExposureRecord {
            component,
            max_intensity: 0.0,
            max_flame_length: 0.0,
            exposure_start: None,
            exposure_duration: 0.0,
            distance_to_front: f64::INFINITY,
        }
    }

    pub fn is_exposed(&self) -> bool {
        self.max_intensity > 0.0
    }
}

/// Precomputed cell footprints of every exposed asset.
///
/// Overhead branches and poles are indexed; underground lines and transformers
/// carry no footprint and always report zero exposure.
#[derive(Debug, Clone)]
pub struct ExposureIndex {
    pub buffer_m: f64,
    pub search_radius_m: f64,
    components: Vec<ComponentId>,
    /// cell -> (component slot, distance m)
    by_cell: Vec<(usize, Vec<(usize, f64)>)>,
}

impl ExposureIndex {
    pub fn new(net: &GridNetwork, land: &Landscape, buffer_m: f64, search_radius_m: f64) -> Result<Self> {
        if !(buffer_m >= 0.0) {
            return Err(Error::config("exposure buffer must be >= 0"));
        }
        let radius = search_radius_m.max(buffer_m);
        let mut components = Vec::new();
        let mut cells: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();

        let mut add = |id: ComponentId, line: &[[f64; 2]], exposed: bool| -> Result<()> {
            if let Some(p) = line.iter().find(|p| !land.contains(**p)) {
                return Err(Error::OutsideLandscape(format!("{id} at ({}, {})", p[0], p[1])));
            }
            let slot = components.len();
            components.push(id);
            if !exposed {
                return Ok(());
            }
            let (lo, hi) = line
                .iter()
                .fold(([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]), |(lo, hi), p| {
                    ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
                });
            let cs = land.cell_size;
            let col = |x: f64| ((x - land.origin[0]) / cs).floor().max(0.0) as usize;
            let row_from_bottom = |y: f64| ((y - land.origin[1]) / cs).floor().max(0.0) as usize;
            let c0 = col(lo[0] - radius);
            let c1 = col(hi[0] + radius).min(land.ncols - 1);
            let b0 = row_from_bottom(lo[1] - radius);
            let b1 = row_from_bottom(hi[1] + radius).min(land.nrows - 1);
            for rb in b0..=b1 {
                for c in c0..=c1 {
                    let idx = land.index(c, land.nrows - 1 - rb);
                    let (rlo, rhi) = land.cell_rect(idx);
                    let d = if line.len() == 1 {
                        point_rect_distance(line[0], rlo, rhi)
                    } else {
                        polyline_rect_distance(line, rlo, rhi)
                    };
                    if d <= radius {
                        cells.entry(idx).or_default().push((slot, d));
                    }
                }
            }
            Ok(())
        };

        for br in &net.branches {
            add(ComponentId::Branch(br.id), &br.geometry, br.is_overhead())?;
        }
        for p in &net.poles {
            add(ComponentId::Pole(p.id), &[p.location], true)?;
        }
        let mut by_cell: Vec<_> = cells.into_iter().collect();
        by_cell.sort_unstable_by_key(|(c, _)| *c);
        Ok(ExposureIndex {
            buffer_m,
            search_radius_m: radius,
            components,
            by_cell,
        })
    }

    pub fn components(&self) -> &[ComponentId] {
        &self.components
    }

    /// Cells within the buffer of `id`.
    pub fn footprint(&self, id: ComponentId) -> Vec<usize> {
        let Some(slot) = self.components.iter().position(|&c| c == id) else {
            return Vec::new();
        };
        self.by_cell
            .iter()
            .filter(|(_, hits)| hits.iter().any(|&(s, d)| s == slot && d <= self.buffer_m))
            .map(|(c, _)| *c)
            .collect()
    }
}

/// Running exposure start times and durations across steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExposureTracker {
    start: HashMap<ComponentId, f64>,
    duration: HashMap<ComponentId, f64>,
}

impl ExposureTracker {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Exposure of every indexed component to cells burning during `[t, t + dt)`.
pub fn compute_exposure(
    index: &ExposureIndex,
    fire: &FireState,
    t: f64,
    dt: f64,
    tracker: &mut ExposureTracker,
) -> Vec<ExposureRecord> {
    let t1 = t + dt;
    let mut recs: Vec<ExposureRecord> = index.components.iter().map(|&c| ExposureRecord::empty(c)).collect();
    let mut window = vec![(f64::INFINITY, f64::NEG_INFINITY); recs.len()];

    for (cell, hits) in &index.by_cell {
        let cf = &fire.cells[*cell];
        if !cf.burning_during(t, t1) {
            continue;
        }
        for &(slot, d) in hits {
            let r = &mut recs[slot];
            r.distance_to_front = r.distance_to_front.min(d);
            if d <= index.buffer_m {
                r.max_intensity = r.max_intensity.max(cf.intensity);
                r.max_flame_length = r.max_flame_length.max(cf.flame_length);
                let w = &mut window[slot];
                w.0 = w.0.min(cf.arrival);
                w.1 = w.1.max(cf.burnout);
            }
        }
    }

    for (r, (first, last)) in recs.iter_mut().zip(window) {
        let overlap = (last.min(t1) - first.max(t)).max(0.0);
        if first.is_finite() {
            tracker.start.entry(r.component).or_insert(first.max(t));
            *tracker.duration.entry(r.component).or_insert(0.0) += overlap;
        }
        r.exposure_start = tracker.start.get(&r.component).copied();
        r.exposure_duration = tracker.duration.get(&r.component).copied().unwrap_or(0.0);
    }
    recs
}

/// One-shot exposure query with a fresh tracker.
pub fn compute_exposure_once(
    net: &GridNetwork,
    land: &Landscape,
    fire: &FireState,
    t: f64,
    dt: f64,
    buffer_m: f64,
) -> Result<Vec<ExposureRecord>> {
    let index = ExposureIndex::new(net, land, buffer_m, buffer_m)?;
    Ok(compute_exposure(&index, fire, t, dt, &mut ExposureTracker::new()))
}

// ---------------------------------------------------------------------------
// Response models
// ---------------------------------------------------------------------------

/// Any exposure fails the asset.
pub fn binary_response(exposure: &ExposureRecord) -> Damage {
    if exposure.is_exposed() {
        Damage::Failed
    } else {
        Damage::Intact
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    /// °C at full loading.
    pub k_load: f64,
    /// °C per unit incident flux.
    pub k_fire: f64,
    /// Flux per unit intensity at 1 m.
    pub kappa: f64,
    pub t_derate: f64,
    pub t_fail: f64,
    pub derate_factor: f64,
}

impl ThermalParams {
    fn validate(&self) -> Result<()> {
        if !(self.k_load >= 0.0
            && self.k_fire >= 0.0
            && self.kappa >= 0.0
            && self.t_derate < self.t_fail
            && self.derate_factor > 0.0
            && self.derate_factor <= 1.0)
        {
            return Err(Error::config(
                "thermal parameters need non-negative gains, T_derate < T_fail and derate_factor in (0, 1]",
            ));
        }
        Ok(())
    }
}

/// Incident flux proxy `kappa * I / max(d, 1)^2`.
pub fn fire_flux(params: &ThermalParams, exposure: &ExposureRecord) -> f64 {
    if !exposure.is_exposed() {
        return 0.0;
    }
    let d = exposure.distance_to_front.max(1.0);
    params.kappa * exposure.max_intensity / (d * d)
}

/// Steady-state conductor temperature for one step and the damage it implies.
pub fn thermal_response(
    params: &ThermalParams,
    rating: f64,
    exposure: &ExposureRecord,
    ambient_temp: f64,
    loading: f64,
    dt: f64,
) -> Result<(f64, Damage)> {
    if !(rating > 0.0) {
        return Err(Error::config("thermal response needs a positive rating"));
    }
    assert!(dt > 0.0, "thermal_response needs dt > 0");
    let ratio = loading / rating;
    let temp = ambient_temp + params.k_load * ratio * ratio + params.k_fire * fire_flux(params, exposure);
    let damage = if temp > params.t_fail {
        Damage::Failed
    } else if temp > params.t_derate {
        Damage::Derated
    } else {
        Damage::Intact
    };
    Ok((temp, damage))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityMeasure {
    FlameLength,
    FirelineIntensity,
    WindGust,
}

impl IntensityMeasure {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "flame_length" => Some(Self::FlameLength),
            "fireline_intensity" => Some(Self::FirelineIntensity),
            "wind_gust" => Some(Self::WindGust),
            _ => None,
        }
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    let tail = 0.5 * erfc(z.abs() / std::f64::consts::SQRT_2);
    if z >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FragilityCurve {
    pub measure: IntensityMeasure,
    /// Median capacity in units of the measure.
    pub theta: f64,
    /// Log-standard deviation.
    pub beta: f64,
}

impl FragilityCurve {
    pub fn new(measure: IntensityMeasure, theta: f64, beta: f64) -> Result<Self> {
        if !(theta > 0.0 && beta > 0.0) {
            return Err(Error::config("fragility curve needs theta > 0 and beta > 0"));
        }
        Ok(FragilityCurve { measure, theta, beta })
    }

    /// `Phi(ln(x / theta) / beta)`, 0 for `x <= 0`.
    pub fn probability(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        std_normal_cdf((x / self.theta).ln() / self.beta)
    }
}

/// Value of `measure` for an exposure record under the current wind.
pub fn measure_value(exposure: &ExposureRecord, measure: IntensityMeasure, wind_speed: f64) -> f64 {
    match measure {
        IntensityMeasure::FlameLength => exposure.max_flame_length,
        IntensityMeasure::FirelineIntensity => exposure.max_intensity,
        IntensityMeasure::WindGust => {
            if exposure.is_exposed() {
                wind_speed
            } else {
                0.0
            }
        }
    }
}

/// Draws failure from a fragility curve; `multiplier` scales the probability.
pub fn fragility_response<R: Rng + ?Sized>(
    exposure: &ExposureRecord,
    curve: &FragilityCurve,
    wind_speed: f64,
    multiplier: f64,
    rng: &mut R,
) -> Damage {
    let p = (curve.probability(measure_value(exposure, curve.measure, wind_speed)) * multiplier).min(1.0);
    let u: f64 = rng.gen();
    if u < p {
        Damage::Failed
    } else {
        Damage::Intact
    }
}

// ---------------------------------------------------------------------------
// Parameter tables
// ---------------------------------------------------------------------------

const FRAGILITY_CSV: &str = include_str!("../data/fragility.csv");
const THERMAL_CSV: &str = include_str!("../data/thermal.csv");

#[derive(Deserialize)]
struct FragilityRow {
    class: String,
    measure: String,
    theta: f64,
    beta: f64,
}

#[derive(Deserialize)]
#[allow(non_snake_case)]
struct ThermalRow {
    class: String,
    k_load: f64,
    k_fire: f64,
    kappa: f64,
    T_derate: f64,
    T_fail: f64,
    derate_factor: f64,
}

fn rows<T: for<'de> Deserialize<'de>>(text: &str, path: &str) -> Result<Vec<T>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Parse {
                path: path.into(),
                line: i + 2,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Fragility curves and thermal constants keyed by component class
/// (`tx_line`, `dx_line`, `pole_wood`, `pole_steel`, `pole_composite`).
#[derive(Debug, Clone, PartialEq)]
pub struct DamageTables {
    pub fragility: HashMap<(String, IntensityMeasure), FragilityCurve>,
    pub thermal: HashMap<String, ThermalParams>,
}

impl DamageTables {
    pub fn parse(fragility_csv: &str, thermal_csv: &str) -> Result<Self> {
        let mut fragility = HashMap::new();
        for (i, r) in rows::<FragilityRow>(fragility_csv, "fragility")?
            .into_iter()
            .enumerate()
        {
            let measure = IntensityMeasure::parse(&r.measure).ok_or_else(|| Error::Parse {
                path: "fragility".into(),
                line: i + 2,
                msg: format!("unknown measure {}", r.measure),
            })?;
            fragility.insert((r.class, measure), FragilityCurve::new(measure, r.theta, r.beta)?);
        }
        let mut thermal = HashMap::new();
        for r in rows::<ThermalRow>(thermal_csv, "thermal")? {
            let p = ThermalParams {
                k_load: r.k_load,
                k_fire: r.k_fire,
                kappa: r.kappa,
                t_derate: r.T_derate,
                t_fail: r.T_fail,
                derate_factor: r.derate_factor,
            };
            p.validate()?;
            thermal.insert(r.class, p);
        }
        Ok(DamageTables { fragility, thermal })
    }

    pub fn load(fragility: Option<&Path>, thermal: Option<&Path>) -> Result<Self> {
        let read = |p: Option<&Path>, default: &str| -> Result<String> {
            match p {
                Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e)),
                None => Ok(default.to_string()),
            }
        };
        Self::parse(&read(fragility, FRAGILITY_CSV)?, &read(thermal, THERMAL_CSV)?)
    }

    /// Fire fragility curve (flame length or intensity) for a class.
    pub fn fire_curve(&self, class: &str) -> Option<&FragilityCurve> {
        self.fragility
            .get(&(class.to_string(), IntensityMeasure::FlameLength))
            .or_else(|| {
                self.fragility
                    .get(&(class.to_string(), IntensityMeasure::FirelineIntensity))
            })
    }

    pub fn wind_curve(&self, class: &str) -> Option<&FragilityCurve> {
        self.fragility.get(&(class.to_string(), IntensityMeasure::WindGust))
    }
}

impl Default for DamageTables {
    fn default() -> Self {
        Self::parse(FRAGILITY_CSV, THERMAL_CSV).expect("bundled damage tables are valid")
    }
}

/// Class name of a component used to look up damage parameters.
pub fn component_class(net: &GridNetwork, id: ComponentId) -> Result<&'static str> {
    match id {
        ComponentId::Branch(b) => {
            let bi = net.branch_index(b)?;
            let (f, t) = net.branch_ends(bi);
            let tx = net.buses[f].level == Level::Tx && net.buses[t].level == Level::Tx;
            Ok(match net.branches[bi].kind {
                BranchKind::Transformer => "transformer",
                _ if tx => "tx_line",
                _ => "dx_line",
            })
        }
        ComponentId::Pole(p) => Ok(net.poles[net.pole_index(p)?].material.class_name()),
    }
}

// ---------------------------------------------------------------------------
// Response selection and evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseModel {
    Off,
    #[default]
    Binary,
    Thermal,
    Fragility,
}

/// Fire response family per component class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResponseSelection {
    #[serde(default)]
    pub tx_line: ResponseModel,
    #[serde(default)]
    pub dx_line: ResponseModel,
    #[serde(default)]
    pub pole: ResponseModel,
}

impl ResponseSelection {
    pub fn all(model: ResponseModel) -> Self {
        ResponseSelection {
            tx_line: model,
            dx_line: model,
            pole: model,
        }
    }

    pub fn for_class(&self, class: &str) -> ResponseModel {
        match class {
            "tx_line" => self.tx_line,
            "dx_line" => self.dx_line,
            c if c.starts_with("pole") => self.pole,
            _ => ResponseModel::Off,
        }
    }

    pub fn validate(&self, tables: &DamageTables) -> Result<()> {
        if self.pole == ResponseModel::Thermal {
            return Err(Error::config("the thermal response applies to lines only"));
        }
        for (class, model) in [("tx_line", self.tx_line), ("dx_line", self.dx_line)] {
            if model == ResponseModel::Thermal && !tables.thermal.contains_key(class) {
                return Err(Error::config(format!("no thermal parameters for {class}")));
            }
            if model == ResponseModel::Fragility && tables.fire_curve(class).is_none() {
                return Err(Error::config(format!("no fire fragility curve for {class}")));
            }
        }
        if self.pole == ResponseModel::Fragility {
            for class in ["pole_wood", "pole_steel", "pole_composite"] {
                if tables.fire_curve(class).is_none() {
                    return Err(Error::config(format!("no fire fragility curve for {class}")));
                }
            }
        }
        Ok(())
    }
}

fn hardening_multiplier(net: &GridNetwork, id: ComponentId) -> f64 {
    match id {
        ComponentId::Branch(b) => net
            .branch_index(b)
            .map(|i| net.branches[i].hardening_level.multiplier())
            .unwrap_or(1.0),
        ComponentId::Pole(p) => net
            .pole_index(p)
            .map(|i| net.poles[i].hardening_level.multiplier())
            .unwrap_or(1.0),
    }
}

fn vegetation_multiplier(net: &GridNetwork, id: ComponentId) -> f64 {
    match id {
        ComponentId::Branch(b) => net
            .branch_index(b)
            .map(|i| net.branches[i].vegetation_density)
            .unwrap_or(1.0),
        ComponentId::Pole(p) => net
            .pole_index(p)
            .map(|pi| {
                net.pole_branches(pi)
                    .iter()
                    .map(|&bi| net.branches[bi].vegetation_density)
                    .fold(f64::NAN, f64::max)
            })
            .ok()
            .filter(|v| v.is_finite())
            .unwrap_or(1.0),
    }
}

/// Damage change produced by one step of fire exposure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamageEvent {
    pub component: ComponentId,
    pub damage: Damage,
    pub model: ResponseModel,
}

/// Applies the selected response model to each exposure record, mutating `state`.
///
/// Returns the components whose damage changed. Failed assets stay failed until
/// repaired; derating clears once the conductor cools below `T_derate`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_fire_damage(
    net: &GridNetwork,
    state: &mut ComponentState,
    exposures: &[ExposureRecord],
    selection: &ResponseSelection,
    tables: &DamageTables,
    weather: &WeatherSample,
    root: SeedRoot,
    step: u64,
    dt: f64,
) -> Result<Vec<DamageEvent>> {
    let mut events = Vec::new();
    for rec in exposures {
        let class = component_class(net, rec.component)?;
        let model = selection.for_class(class);
        let current = state.damage_of(net, rec.component).unwrap_or(Damage::Intact);
        if current == Damage::Failed || model == ResponseModel::Off {
            continue;
        }
        let new = match model {
            ResponseModel::Off => unreachable!(),
            ResponseModel::Binary => binary_response(rec),
            ResponseModel::Fragility => {
                let curve = tables
                    .fire_curve(class)
                    .ok_or_else(|| Error::config(format!("no fire fragility curve for {class}")))?;
                let mut rng = root.stream("fire_fragility", rec.component.stream_key(), step);
                fragility_response(
                    rec,
                    curve,
                    weather.wind_speed,
                    hardening_multiplier(net, rec.component),
                    &mut rng,
                )
            }
            ResponseModel::Thermal => {
                let ComponentId::Branch(b) = rec.component else {
                    return Err(Error::config("the thermal response applies to lines only"));
                };
                let params = tables
                    .thermal
                    .get(class)
                    .ok_or_else(|| Error::config(format!("no thermal parameters for {class}")))?;
                let bi = net.branch_index(b)?;
                let (temp, damage) = thermal_response(
                    params,
                    net.branches[bi].thermal_rating,
                    rec,
                    weather.temperature,
                    state.branches[bi].loading,
                    dt,
                )?;
                state.branches[bi].conductor_temp = temp;
                damage
            }
        };
        if new != current {
            match rec.component {
                ComponentId::Branch(b) => {
                    let bi = net.branch_index(b)?;
                    if new == Damage::Failed {
                        state.fail_branch(bi);
                    } else {
                        state.branches[bi].damage = new;
                    }
                }
                ComponentId::Pole(p) => {
                    let pi = net.pole_index(p)?;
                    if new == Damage::Failed {
                        state.fail_pole(pi);
                    } else {
                        state.poles[pi].damage = new;
                    }
                }
            }
            events.push(DamageEvent {
                component: rec.component,
                damage: new,
                model,
            });
        }
    }
    Ok(events)
}

/// Effective thermal rating of branch `bi` given its damage.
pub fn effective_rating(net: &GridNetwork, state: &ComponentState, tables: &DamageTables, bi: usize) -> f64 {
    let base = net.branches[bi].thermal_rating;
    if state.branches[bi].damage != Damage::Derated {
        return base;
    }
    let class = component_class(net, ComponentId::Branch(net.branches[bi].id)).unwrap_or("dx_line");
    let factor = tables.thermal.get(class).map(|p| p.derate_factor).unwrap_or(0.5);
    base * factor
}

// ---------------------------------------------------------------------------
// Wind failures and grid-caused ignitions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WindOutcome {
    pub failures: Vec<ComponentId>,
    pub ignitions: Vec<Ignition>,
}

/// Wind-failure probability of a component, including hardening and vegetation.
pub fn wind_failure_probability(
    net: &GridNetwork,
    tables: &DamageTables,
    id: ComponentId,
    wind_speed: f64,
) -> Result<f64> {
    let class = component_class(net, id)?;
    let Some(curve) = tables.wind_curve(class) else {
        return Ok(0.0);
    };
    let p = curve.probability(wind_speed) * hardening_multiplier(net, id) * vegetation_multiplier(net, id);
    Ok(p.clamp(0.0, 1.0))
}

fn point_along(line: &[[f64; 2]], frac: f64) -> [f64; 2] {
    let lens: Vec<f64> = line
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .collect();
    let total: f64 = lens.iter().sum();
    let mut target = frac * total;
    for (w, len) in line.windows(2).zip(&lens) {
        if target <= *len && *len > 0.0 {
            let s = target / len;
            return [w[0][0] + s * (w[1][0] - w[0][0]), w[0][1] + s * (w[1][1] - w[0][1])];
        }
        target -= len;
    }
    line[line.len() - 1]
}

/// Wind-induced failures of overhead assets and the ignitions they start.
///
/// Every intact overhead line and pole draws from its own `("wind", component, step)`
/// stream. A failure of an energized asset ignites the cell under a random point
/// of the asset with probability `p_ignition` when that cell is burnable;
/// de-energized assets can fail but never ignite.
#[allow(clippy::too_many_arguments)]
pub fn wind_failure_and_ignition(
    net: &GridNetwork,
    weather: &WeatherSample,
    land: &Landscape,
    state: &ComponentState,
    tables: &DamageTables,
    p_ignition: f64,
    root: SeedRoot,
    step: u64,
    t: f64,
) -> Result<WindOutcome> {
    let mut out = WindOutcome::default();
    let mut candidates: Vec<(ComponentId, Vec<[f64; 2]>, bool)> = Vec::new();
    for (bi, br) in net.branches.iter().enumerate() {
        if br.is_overhead() && state.branches[bi].damage != Damage::Failed {
            candidates.push((
                ComponentId::Branch(br.id),
                br.geometry.clone(),
                state.branches[bi].energized,
            ));
        }
    }
    for (pi, p) in net.poles.iter().enumerate() {
        if state.poles[pi].damage != Damage::Failed {
            candidates.push((ComponentId::Pole(p.id), vec![p.location], state.poles[pi].energized));
        }
    }
    for (id, geom, energized) in candidates {
        let p = wind_failure_probability(net, tables, id, weather.wind_speed)?;
        let mut rng = root.stream("wind", id.stream_key(), step);
        let (u_fail, u_ign, u_pos): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
        if u_fail >= p {
            continue;
        }
        out.failures.push(id);
        if !energized || u_ign >= p_ignition {
            continue;
        }
        let at = point_along(&geom, u_pos);
        if let Some(cell) = land.cell_at(at) {
            if land.is_burnable(cell) {
                out.ignitions.push(Ignition {
                    cell,
                    time: t,
                    source: IgnitionSource::GridInduced(id),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fire::{BurnStatus, CellFire};
    use crate::landscape::FuelClass;
    use crate::network::{build_testbed, Hardening, TestbedConfig};
    use proptest::prelude::*;

    fn record(intensity: f64, flame: f64, distance: f64) -> ExposureRecord {
        ExposureRecord {
            component: ComponentId::Branch(1),
            max_intensity: intensity,
            max_flame_length: flame,
            exposure_start: None,
            exposure_duration: 0.0,
            distance_to_front: distance,
        }
    }

    fn burning(intensity: f64) -> CellFire {
        CellFire {
            status: BurnStatus::Burning,
            arrival: 0.0,
            intensity,
            flame_length: crate::fire::flame_length(intensity),
            burnout: 1e9,
        }
    }

    fn testbed() -> (GridNetwork, Landscape) {
        let net = build_testbed(&TestbedConfig::default()).unwrap();
        (net, Landscape::uniform(200, 200, 30.0, FuelClass::Grass))
    }

    #[test]
    fn segment_rect_geometry() {
        let (lo, hi) = ([0.0, 0.0], [1.0, 1.0]);
        assert_eq!(segment_rect_distance([-1.0, 0.5], [2.0, 0.5], lo, hi), 0.0);
        assert!((segment_rect_distance([2.0, 0.0], [2.0, 1.0], lo, hi) - 1.0).abs() < 1e-12);
        assert!((segment_rect_distance([2.0, 2.0], [3.0, 3.0], lo, hi) - 2f64.sqrt()).abs() < 1e-12);
        // A diagonal that misses the corner.
        assert!(segment_rect_distance([1.5, 0.0], [3.0, 1.5], lo, hi) > 0.3);
    }

    #[test]
    fn no_burning_cells_means_zero_exposure() {
        let (net, land) = testbed();
        let fire = FireState::new(&land, 0.0);
        let recs = compute_exposure_once(&net, &land, &fire, 0.0, 30.0, 60.0).unwrap();
        assert_eq!(recs.len(), net.branches.len() + net.poles.len());
        assert!(recs
            .iter()
            .all(|r| r.max_intensity == 0.0 && r.distance_to_front.is_infinite()));
    }

    #[test]
    fn line_crossing_burning_cells_takes_max() {
        let (net, land) = testbed();
        let bi = net.branch_index(205).unwrap();
        let geom = net.branches[bi].geometry.clone();
        let mid = [(geom[0][0] + geom[1][0]) / 2.0, (geom[0][1] + geom[1][1]) / 2.0];
        let c1 = land.cell_at(mid).unwrap();
        let mut fire = FireState::new(&land, 0.0);
        fire.cells[c1] = burning(500.0);
        fire.active_front.insert(c1);
        let recs = compute_exposure_once(&net, &land, &fire, 0.0, 30.0, 0.0).unwrap();
        let r = recs.iter().find(|r| r.component == ComponentId::Branch(205)).unwrap();
        assert_eq!(r.max_intensity, 500.0);
        assert_eq!(r.distance_to_front, 0.0);

        let c2 = land.cell_at(geom[0]).unwrap();
        fire.cells[c1] = burning(200.0);
        fire.cells[c2] = burning(800.0);
        fire.active_front.insert(c2);
        let recs = compute_exposure_once(&net, &land, &fire, 0.0, 30.0, 0.0).unwrap();
        let r = recs.iter().find(|r| r.component == ComponentId::Branch(205)).unwrap();
        assert_eq!(r.max_intensity, 800.0);
        assert_eq!(binary_response(r), Damage::Failed);
    }

    #[test]
    fn underground_lines_are_never_exposed() {
        let net = build_testbed(&TestbedConfig {
            underground_sections: vec![5],
            ..Default::default()
        })
        .unwrap();
        let land = Landscape::uniform(200, 200, 30.0, FuelClass::Grass);
        let mut fire = FireState::new(&land, 0.0);
        for i in 0..land.len() {
            fire.cells[i] = burning(900.0);
        }
        let recs = compute_exposure_once(&net, &land, &fire, 0.0, 30.0, 60.0).unwrap();
        let r = recs.iter().find(|r| r.component == ComponentId::Branch(205)).unwrap();
        assert_eq!(binary_response(r), Damage::Intact);
    }

    #[test]
    fn component_outside_landscape_is_an_error() {
        let (net, _) = testbed();
        let small = Landscape::uniform(50, 50, 30.0, FuelClass::Grass);
        assert!(matches!(
            ExposureIndex::new(&net, &small, 60.0, 60.0),
            Err(Error::OutsideLandscape(_))
        ));
    }

    #[test]
    fn exposure_duration_accumulates() {
        let (net, land) = testbed();
        let pole = net.poles[3].clone();
        let cell = land.cell_at(pole.location).unwrap();
        let index = ExposureIndex::new(&net, &land, 0.0, 0.0).unwrap();
        let mut fire = FireState::new(&land, 0.0);
        fire.cells[cell] = CellFire {
            burnout: 50.0,
            arrival: 10.0,
            ..burning(300.0)
        };
        let mut tracker = ExposureTracker::new();
        let find = |recs: &[ExposureRecord]| {
            recs.iter()
                .find(|r| r.component == ComponentId::Pole(pole.id))
                .cloned()
                .unwrap()
        };
        let r1 = find(&compute_exposure(&index, &fire, 0.0, 30.0, &mut tracker));
        assert_eq!((r1.exposure_start, r1.exposure_duration), (Some(10.0), 20.0));
        let r2 = find(&compute_exposure(&index, &fire, 30.0, 30.0, &mut tracker));
        assert_eq!((r2.exposure_start, r2.exposure_duration), (Some(10.0), 40.0));
        let r3 = find(&compute_exposure(&index, &fire, 60.0, 30.0, &mut tracker));
        assert_eq!(r3.max_intensity, 0.0);
        assert_eq!(r3.exposure_duration, 40.0);
    }

    #[test]
    fn binary_examples() {
        assert_eq!(binary_response(&record(0.0, 0.0, f64::INFINITY)), Damage::Intact);
        assert_eq!(binary_response(&record(0.1, 0.0, 0.0)), Damage::Failed);
    }

    fn thermal_fixture() -> ThermalParams {
        ThermalParams {
            k_load: 20.0,
            k_fire: 1.0,
            kappa: 1.0,
            t_derate: 75.0,
            t_fail: 95.0,
            derate_factor: 0.5,
        }
    }

    #[test]
    fn thermal_examples() {
        let p = thermal_fixture();
        let (t, d) = thermal_response(&p, 10.0, &record(0.0, 0.0, f64::INFINITY), 30.0, 0.0, 30.0).unwrap();
        assert_eq!((t, d), (30.0, Damage::Intact));

        // k_fire * q = 40 at d = 0 with kappa = 1: I = 40. Loading = rating adds k_load.
        let (t, d) = thermal_response(&p, 10.0, &record(40.0, 1.0, 0.0), 30.0, 10.0, 30.0).unwrap();
        assert_eq!(t, 30.0 + 20.0 * 1.0 + 40.0);
        assert_eq!(d, Damage::Derated);

        let (_, d) = thermal_response(&p, 10.0, &record(65.01, 1.0, 0.0), 30.0, 0.0, 30.0).unwrap();
        assert_eq!(d, Damage::Failed);
        let (_, d) = thermal_response(&p, 10.0, &record(65.0, 1.0, 0.0), 30.0, 0.0, 30.0).unwrap();
        assert_eq!(d, Damage::Derated);

        assert!(thermal_response(&p, 0.0, &record(0.0, 0.0, 0.0), 30.0, 0.0, 30.0).is_err());
    }

    #[test]
    fn thermal_flux_falls_with_distance() {
        let p = thermal_fixture();
        let near = fire_flux(&p, &record(400.0, 1.0, 0.5));
        let far = fire_flux(&p, &record(400.0, 1.0, 20.0));
        assert_eq!(near, 400.0);
        assert_eq!(far, 1.0);
    }

    #[test]
    fn fragility_examples() {
        let c = FragilityCurve::new(IntensityMeasure::FlameLength, 2.0, 0.5).unwrap();
        assert!((c.probability(2.0) - 0.5).abs() < 1e-15);
        assert_eq!(c.probability(0.0), 0.0);
        let mut rng = SeedRoot(3).stream("t", 0, 0);
        for _ in 0..100 {
            assert_eq!(
                fragility_response(&record(0.0, 0.0, f64::INFINITY), &c, 0.0, 1.0, &mut rng),
                Damage::Intact
            );
        }
        assert!(FragilityCurve::new(IntensityMeasure::FlameLength, 0.0, 0.5).is_err());
        assert!(FragilityCurve::new(IntensityMeasure::FlameLength, 1.0, 0.0).is_err());
    }

    #[test]
    fn normal_cdf_reference_points() {
        // Phi(1) and Phi(-2) from standard tables.
        let v = std_normal_cdf(1.0);
        assert!((v - 0.841_344_746_068_542_9).abs() < 1e-12, "{v}");
        assert!((std_normal_cdf(-2.0) - 0.022_750_131_948_179_2).abs() < 1e-12);
    }

    #[test]
    fn binary_matches_step_fragility() {
        let step = FragilityCurve::new(IntensityMeasure::FirelineIntensity, 1e-300, 1e-3).unwrap();
        let mut rng = SeedRoot(9).stream("t", 0, 0);
        for x in [0.0, 1e-6, 0.1, 5.0, 300.0, 9000.0] {
            let r = record(x, crate::fire::flame_length(x), 0.0);
            assert_eq!(fragility_response(&r, &step, 0.0, 1.0, &mut rng), binary_response(&r));
        }
    }

    #[test]
    fn bundled_tables_cover_all_classes() {
        let t = DamageTables::default();
        for class in ["tx_line", "dx_line", "pole_wood", "pole_steel", "pole_composite"] {
            assert!(t.fire_curve(class).is_some(), "{class}");
            assert!(t.wind_curve(class).is_some(), "{class}");
        }
        assert_eq!(t.thermal["dx_line"].t_fail, 95.0);
        ResponseSelection::all(ResponseModel::Fragility).validate(&t).unwrap();
        assert!(ResponseSelection::all(ResponseModel::Thermal).validate(&t).is_err());
    }

    #[test]
    fn calm_wind_causes_nothing() {
        let (net, land) = testbed();
        let state = ComponentState::new(&net);
        let w = WeatherSample::calm();
        let out = wind_failure_and_ignition(
            &net,
            &w,
            &land,
            &state,
            &DamageTables::default(),
            1.0,
            SeedRoot(1),
            0,
            0.0,
        )
        .unwrap();
        assert!(out.failures.is_empty() && out.ignitions.is_empty());
    }

    #[test]
    fn de_energized_failures_never_ignite() {
        let (net, land) = testbed();
        let mut state = ComponentState::new(&net);
        for b in state.branches.iter_mut() {
            b.energized = false;
        }
        for p in state.poles.iter_mut() {
            p.energized = false;
        }
        let storm = WeatherSample {
            wind_speed: 60.0,
            ..WeatherSample::calm()
        };
        let out = wind_failure_and_ignition(
            &net,
            &storm,
            &land,
            &state,
            &DamageTables::default(),
            1.0,
            SeedRoot(1),
            0,
            0.0,
        )
        .unwrap();
        assert!(!out.failures.is_empty());
        assert!(out.ignitions.is_empty());

        let live = ComponentState::new(&net);
        let out = wind_failure_and_ignition(
            &net,
            &storm,
            &land,
            &live,
            &DamageTables::default(),
            1.0,
            SeedRoot(1),
            0,
            0.0,
        )
        .unwrap();
        assert!(!out.ignitions.is_empty());
    }

    #[test]
    fn hardening_halves_wind_probability() {
        let (net, _) = testbed();
        let tables = DamageTables::default();
        let hardened = net
            .with_changes(|d| {
                d.branches.iter_mut().find(|b| b.id == 7).unwrap().hardening_level = Hardening::Hardened;
                Ok(())
            })
            .unwrap();
        for u in [10.0, 30.0, 45.0, 80.0] {
            let base = wind_failure_probability(&net, &tables, ComponentId::Branch(7), u).unwrap();
            let hard = wind_failure_probability(&hardened, &tables, ComponentId::Branch(7), u).unwrap();
            assert!(hard < base);
            assert!((hard - 0.5 * base).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn fragility_monotone_in_x(theta in 0.1..50.0f64, beta in 0.05..2.0f64,
                                   x in 0.0..100.0f64, dx in 0.0..100.0f64) {
            let c = FragilityCurve::new(IntensityMeasure::FlameLength, theta, beta).unwrap();
            prop_assert!(c.probability(x + dx) >= c.probability(x));
            prop_assert!((c.probability(theta) - 0.5).abs() < 1e-12);
        }

        #[test]
        fn fragility_decreasing_in_theta(theta in 0.1..50.0f64, dt in 0.0..50.0f64,
                                         beta in 0.05..2.0f64, x in 0.01..100.0f64) {
            let a = FragilityCurve::new(IntensityMeasure::FlameLength, theta, beta).unwrap();
            let b = FragilityCurve::new(IntensityMeasure::FlameLength, theta + dt, beta).unwrap();
            prop_assert!(b.probability(x) <= a.probability(x));
        }
    }
}
