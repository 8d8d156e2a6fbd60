//! Semi-empirical fire spread on the landscape raster.
//!
//! Spread is a minimum-travel-time cellular scheme over the 8-neighborhood:
//! inside a step, ignitions are processed in arrival order with a priority
//! queue, so a step can advance the front by many cells. Rate of spread uses a
//! Rothermel-style wind/slope multiplier and Byram's intensity relations.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fmt::Write as _;

use geojson::{Feature, Geometry, JsonObject, Value};
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::landscape::{FuelClass, FuelModel, FuelParams, Landscape, WeatherSample};
use crate::rng::SeedRoot;
use crate::state::ComponentId;

/// Rothermel slope coefficient applied to rise/run squared.
pub const SLOPE_COEFF: f64 = 5.275;

/// `(dcol, drow)` offsets of the 16-cell stencil: the 8 neighbors plus knight
/// moves, which keep a calm fire within a few percent of a circle.
const NEIGHBORS: [(i64, i64); 16] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (-1, -2),
    (1, -2),
    (-2, -1),
    (2, -1),
    (-2, 1),
    (2, 1),
    (-1, 2),
    (1, 2),
];

/// The two cells a knight move passes over; both must be burnable.
fn knight_crossings(c: i64, r: i64, dc: i64, dr: i64) -> [(i64, i64); 2] {
    if dc.abs() == 2 {
        [(c + dc / 2, r), (c + dc / 2, r + dr)]
    } else {
        [(c, r + dr / 2), (c + dc, r + dr / 2)]
    }
}

/// Wind multiplier `c * U^b`.
pub fn wind_factor(model: &FuelModel, wind_speed: f64) -> f64 {
    if wind_speed <= 0.0 {
        0.0
    } else {
        model.wind_c * wind_speed.powf(model.wind_b)
    }
}

pub fn slope_factor(slope: f64) -> f64 {
    SLOPE_COEFF * slope * slope
}

/// Head-fire rate of spread (m/min): `R0 * m * (1 + phi_w + phi_s)`.
pub fn rate_of_spread(model: &FuelModel, moisture_damping: f64, slope: f64, wind_speed: f64) -> f64 {
    model.base_ros * moisture_damping * (1.0 + wind_factor(model, wind_speed) + slope_factor(slope))
}

/// Rate of spread for a landscape cell under the given weather.
pub fn cell_ros(land: &Landscape, fuels: &FuelParams, idx: usize, weather: &WeatherSample) -> f64 {
    let class = land.fuel_at(idx);
    if class == FuelClass::Nonburnable {
        return 0.0;
    }
    let m = fuels.moisture.damping(weather.relative_humidity);
    rate_of_spread(fuels.model(class), m, land.slope[idx], weather.wind_speed)
}

/// Byram fireline intensity (kW/m) and flame length (m) for spread rate `ros` (m/min).
pub fn byram_outputs(model: &FuelModel, ros: f64) -> (f64, f64) {
    if ros <= 0.0 {
        return (0.0, 0.0);
    }
    let intensity = model.heat_per_area * ros / 60.0;
    (intensity, flame_length(intensity))
}

pub fn flame_length(intensity: f64) -> f64 {
    if intensity <= 0.0 {
        0.0
    } else {
        0.0775 * intensity.powf(0.46)
    }
}

/// Length-to-breadth ratio of the wind-driven fire ellipse.
pub fn length_to_breadth(wind_speed: f64) -> f64 {
    (1.0 + 0.25 * wind_speed.max(0.0)).min(4.0)
}

/// Fraction of head-fire spread rate along a heading `angle_deg` away from downwind.
///
/// Equals 1 downwind and `(1 - e) / (1 + e)` upwind, with eccentricity `e` from
/// [`length_to_breadth`].
pub fn wind_alignment(angle_deg: f64, wind_speed: f64) -> f64 {
    let lb = length_to_breadth(wind_speed);
    let e = (1.0 - 1.0 / (lb * lb)).sqrt();
    (1.0 + e * angle_deg.to_radians().cos()) / (1.0 + e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurnStatus {
    Unburned,
    Burning,
    Burned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellFire {
    pub status: BurnStatus,
    /// min; infinite while unburned.
    pub arrival: f64,
    /// kW/m
    pub intensity: f64,
    /// m
    pub flame_length: f64,
    /// Time the cell stops flaming, min.
    pub burnout: f64,
}

impl CellFire {
    const UNBURNED: CellFire = CellFire {
        status: BurnStatus::Unburned,
        arrival: f64::INFINITY,
        intensity: 0.0,
        flame_length: 0.0,
        burnout: f64::INFINITY,
    };

    /// Flaming at some instant of `[t0, t1)`.
    pub fn burning_during(&self, t0: f64, t1: f64) -> bool {
        self.status != BurnStatus::Unburned && self.arrival < t1 && self.burnout > t0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "component")]
pub enum IgnitionSource {
    Exogenous,
    GridInduced(ComponentId),
    Spotting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ignition {
    pub cell: usize,
    /// min
    pub time: f64,
    pub source: IgnitionSource,
}

/// Burn state of every cell at `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct FireState {
    /// min
    pub time: f64,
    pub cells: Vec<CellFire>,
    /// Cells currently burning.
    pub active_front: BTreeSet<usize>,
}

impl FireState {
    pub fn new(land: &Landscape, time: f64) -> Self {
        FireState {
            time,
            cells: vec![CellFire::UNBURNED; land.len()],
            active_front: BTreeSet::new(),
        }
    }

    pub fn has_burning(&self) -> bool {
        !self.active_front.is_empty()
    }

    pub fn status(&self, idx: usize) -> BurnStatus {
        self.cells[idx].status
    }

    /// Cells that are burning or burned.
    pub fn affected_count(&self) -> usize {
        self.cells.iter().filter(|c| c.status != BurnStatus::Unburned).count()
    }

    pub fn burned_count(&self) -> usize {
        self.cells.iter().filter(|c| c.status == BurnStatus::Burned).count()
    }

    pub fn max_intensity(&self) -> f64 {
        self.cells.iter().map(|c| c.intensity).fold(0.0, f64::max)
    }

    /// Puts out every burning cell at `t` (e.g. under heavy rain).
    pub fn extinguish(&mut self, t: f64) {
        for &i in &self.active_front {
            let c = &mut self.cells[i];
            c.status = BurnStatus::Burned;
            c.burnout = c.burnout.min(t).max(c.arrival);
        }
        self.active_front.clear();
    }
}

/// Result of [`apply_ignitions`].
#[derive(Debug, Clone, PartialEq)]
pub struct IgnitionOutcome {
    pub state: FireState,
    pub applied: Vec<Ignition>,
    /// Ignitions on nonburnable cells, dropped.
    pub suppressed: Vec<Ignition>,
}

/// Sets each burnable, unburned ignition cell burning with arrival `t`.
///
/// Cells that already burn keep their earlier arrival; nonburnable cells are
/// reported as suppressed.
pub fn apply_ignitions(
    state: &FireState,
    land: &Landscape,
    fuels: &FuelParams,
    weather: &WeatherSample,
    ignitions: &[Ignition],
    t: f64,
) -> IgnitionOutcome {
    let mut next = state.clone();
    let mut applied = Vec::new();
    let mut suppressed = Vec::new();
    for ig in ignitions {
        if ig.cell >= land.len() || !land.is_burnable(ig.cell) {
            suppressed.push(*ig);
            continue;
        }
        if next.cells[ig.cell].status != BurnStatus::Unburned {
            continue;
        }
        let model = fuels.model(land.fuel_at(ig.cell));
        let (intensity, flame) = byram_outputs(model, cell_ros(land, fuels, ig.cell, weather));
        next.cells[ig.cell] = CellFire {
            status: BurnStatus::Burning,
            arrival: t,
            intensity,
            flame_length: flame,
            burnout: t + model.residence_time,
        };
        next.active_front.insert(ig.cell);
        applied.push(Ignition { time: t, ..*ig });
    }
    IgnitionOutcome {
        state: next,
        applied,
        suppressed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    time: f64,
    cell: usize,
    /// Directional spread rate into the cell, m/min.
    ros: f64,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.cell.cmp(&other.cell))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Compass bearing of the step `(dcol, drow)`; rows increase southward.
fn bearing(dc: i64, dr: i64) -> f64 {
    (dc as f64).atan2(-(dr as f64)).to_degrees().rem_euclid(360.0)
}

/// Advances the fire from `state.time` to `state.time + dt` under constant weather.
///
/// A burning cell sends the fire to an unburned burnable stencil cell with travel
/// time `d/2 / (R_src g) + d/2 / (R_dst g)`, where `d` is the center distance and
/// `g` the wind alignment of the heading. The crossing only counts if the fire
/// leaves the source cell before it burns out. Cells burn out after their fuel's
/// residence time.
pub fn spread_step(
    state: &FireState,
    land: &Landscape,
    fuels: &FuelParams,
    weather: &WeatherSample,
    dt: f64,
) -> FireState {
    assert!(dt > 0.0, "spread_step needs dt > 0");
    let t0 = state.time;
    let t1 = t0 + dt;
    let mut next = state.clone();
    next.time = t1;
    if state.active_front.is_empty() {
        return next;
    }

    let downwind = weather.downwind_bearing();
    let mut ros_cache: HashMap<usize, f64> = HashMap::new();
    let mut ros_of = |idx: usize| {
        *ros_cache
            .entry(idx)
            .or_insert_with(|| cell_ros(land, fuels, idx, weather))
    };
    let mut best: HashMap<usize, f64> = HashMap::new();
    let mut heap: BinaryHeap<Reverse<Candidate>> = BinaryHeap::new();

    let relax = |src: usize,
                 next: &FireState,
                 ros_of: &mut dyn FnMut(usize) -> f64,
                 best: &mut HashMap<usize, f64>,
                 heap: &mut BinaryHeap<Reverse<Candidate>>| {
        let src_cell = next.cells[src];
        let r_src = ros_of(src);
        if r_src <= 0.0 {
            return;
        }
        let (c, r) = land.col_row(src);
        for (dc, dr) in NEIGHBORS {
            let (nc, nr) = (c as i64 + dc, r as i64 + dr);
            if nc < 0 || nr < 0 || nc >= land.ncols as i64 || nr >= land.nrows as i64 {
                continue;
            }
            let dst = land.index(nc as usize, nr as usize);
            if next.cells[dst].status != BurnStatus::Unburned || !land.is_burnable(dst) {
                continue;
            }
            if dc.abs() + dr.abs() == 3
                && knight_crossings(c as i64, r as i64, dc, dr)
                    .iter()
                    .any(|&(xc, xr)| !land.is_burnable(land.index(xc as usize, xr as usize)))
            {
                continue;
            }
            let r_dst = ros_of(dst);
            if r_dst <= 0.0 {
                continue;
            }
            let g = wind_alignment(bearing(dc, dr) - downwind, weather.wind_speed);
            let half = land.cell_size * ((dc * dc + dr * dr) as f64).sqrt() / 2.0;
            let leave = src_cell.arrival + half / (r_src * g);
            if leave > src_cell.burnout {
                continue;
            }
            let time = (leave + half / (r_dst * g)).max(t0);
            if time > t1 {
                continue;
            }
            if best.get(&dst).is_some_and(|&b| b <= time) {
                continue;
            }
            best.insert(dst, time);
            heap.push(Reverse(Candidate {
                time,
                cell: dst,
                ros: r_dst * g,
            }));
        }
    };

    let sources: Vec<usize> = state.active_front.iter().copied().collect();
    for src in sources {
        relax(src, &next, &mut ros_of, &mut best, &mut heap);
    }
    while let Some(Reverse(cand)) = heap.pop() {
        if next.cells[cand.cell].status != BurnStatus::Unburned {
            continue;
        }
        if best.get(&cand.cell).is_some_and(|&b| b < cand.time) {
            continue;
        }
        let model = fuels.model(land.fuel_at(cand.cell));
        let (intensity, flame) = byram_outputs(model, cand.ros);
        next.cells[cand.cell] = CellFire {
            status: BurnStatus::Burning,
            arrival: cand.time,
            intensity,
            flame_length: flame,
            burnout: cand.time + model.residence_time,
        };
        next.active_front.insert(cand.cell);
        relax(cand.cell, &next, &mut ros_of, &mut best, &mut heap);
    }

    let done: Vec<usize> = next
        .active_front
        .iter()
        .copied()
        .filter(|&i| next.cells[i].burnout <= t1)
        .collect();
    for i in done {
        next.cells[i].status = BurnStatus::Burned;
        next.active_front.remove(&i);
    }
    next
}

/// Firebrand parameters. `probability == 0` disables spotting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpottingParams {
    /// Per burning cell per step at the reference wind speed.
    pub probability: f64,
    /// m/s
    pub reference_wind: f64,
    /// m
    pub mean_distance: f64,
}

impl Default for SpottingParams {
    fn default() -> Self {
        SpottingParams {
            probability: 0.0,
            reference_wind: 10.0,
            mean_distance: 300.0,
        }
    }
}

/// Long-range ignitions from the burning cells of `state`.
///
/// Each burning cell launches a firebrand with probability
/// `p * U / U_ref` (clamped to 1); it lands downwind at an exponentially
/// distributed distance and ignites the landing cell at `state.time` if it is
/// burnable and unburned.
pub fn spot_ignitions(
    state: &FireState,
    land: &Landscape,
    weather: &WeatherSample,
    params: &SpottingParams,
    root: SeedRoot,
    step: u64,
) -> Vec<Ignition> {
    if params.probability <= 0.0 || weather.wind_speed <= 0.0 || params.reference_wind <= 0.0 {
        return Vec::new();
    }
    let p = (params.probability * weather.wind_speed / params.reference_wind).min(1.0);
    let exp = Exp::new(1.0 / params.mean_distance.max(f64::MIN_POSITIVE)).expect("positive rate");
    let heading = weather.downwind_bearing().to_radians();
    let mut out = Vec::new();
    let mut landed = BTreeSet::new();
    for &cell in &state.active_front {
        let mut rng = root.stream("spotting", cell as u64, step);
        if rng.gen::<f64>() >= p {
            continue;
        }
        let d = exp.sample(&mut rng);
        let c = land.cell_center(cell);
        let target = [c[0] + d * heading.sin(), c[1] + d * heading.cos()];
        if let Some(dst) = land.cell_at(target) {
            if land.is_burnable(dst) && state.cells[dst].status == BurnStatus::Unburned && landed.insert(dst) {
                out.push(Ignition {
                    cell: dst,
                    time: state.time,
                    source: IgnitionSource::Spotting,
                });
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Perimeter export
// ---------------------------------------------------------------------------

type Vertex = (i64, i64);

fn ring_area(ring: &[Vertex]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            (a.0 * b.1 - b.0 * a.1) as f64
        })
        .sum::<f64>()
        / 2.0
}

fn point_in_ring(p: (f64, f64), ring: &[Vertex]) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (ring[i].0 as f64, ring[i].1 as f64);
        let (xj, yj) = (ring[j].0 as f64, ring[j].1 as f64);
        if (yi > p.1) != (yj > p.1) && p.0 < (xj - xi) * (p.1 - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn turn_rank(din: Vertex, dout: Vertex) -> u8 {
    // Left turn first, then straight, then right.
    let cross = din.0 * dout.1 - din.1 * dout.0;
    match cross.signum() {
        1 => 0,
        0 => 1,
        _ => 2,
    }
}

/// Boundary rings of the filled cells in lattice coordinates (x right, y up).
/// Outer rings are counter-clockwise, holes clockwise.
fn trace_rings(land: &Landscape, filled: &[bool]) -> Vec<Vec<Vertex>> {
    let (nc, nr) = (land.ncols as i64, land.nrows as i64);
    let is = |c: i64, r: i64| c >= 0 && r >= 0 && c < nc && r < nr && filled[(r * nc + c) as usize];
    let mut out_edges: HashMap<Vertex, Vec<Vertex>> = HashMap::new();
    let mut push = |a: Vertex, b: Vertex| out_edges.entry(a).or_default().push(b);
    for r in 0..nr {
        for c in 0..nc {
            if !is(c, r) {
                continue;
            }
            let y0 = nr - r - 1;
            if !is(c, r + 1) {
                push((c, y0), (c + 1, y0));
            }
            if !is(c + 1, r) {
                push((c + 1, y0), (c + 1, y0 + 1));
            }
            if !is(c, r - 1) {
                push((c + 1, y0 + 1), (c, y0 + 1));
            }
            if !is(c - 1, r) {
                push((c, y0 + 1), (c, y0));
            }
        }
    }
    let mut starts: Vec<Vertex> = out_edges.keys().copied().collect();
    starts.sort_unstable();
    let mut rings = Vec::new();
    for s in starts {
        while let Some(first) = out_edges.get_mut(&s).and_then(|v| v.pop()) {
            let mut ring = vec![s];
            let mut prev = s;
            let mut cur = first;
            while cur != s {
                ring.push(cur);
                let din = (cur.0 - prev.0, cur.1 - prev.1);
                let outs = out_edges.get_mut(&cur).expect("closed boundary");
                let k = (0..outs.len())
                    .min_by_key(|&k| turn_rank(din, (outs[k].0 - cur.0, outs[k].1 - cur.1)))
                    .expect("boundary continues");
                let nxt = outs.swap_remove(k);
                prev = cur;
                cur = nxt;
            }
            // Drop collinear vertices.
            let n = ring.len();
            let simplified: Vec<Vertex> = (0..n)
                .filter(|&i| {
                    let (a, b, c) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
                    (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0) != 0
                })
                .map(|i| ring[i])
                .collect();
            rings.push(simplified);
        }
    }
    rings
}

/// Dissolved burning + burned area as a GeoJSON feature with a MultiPolygon geometry.
pub fn perimeter_feature(state: &FireState, land: &Landscape) -> Feature {
    let filled: Vec<bool> = state.cells.iter().map(|c| c.status != BurnStatus::Unburned).collect();
    let rings = trace_rings(land, &filled);
    let (outers, holes): (Vec<_>, Vec<_>) = rings.into_iter().partition(|r| ring_area(r) > 0.0);
    let mut polygons: Vec<Vec<Vec<Vertex>>> = outers.iter().map(|o| vec![o.clone()]).collect();
    for hole in holes {
        // A point just inside the filled side of the hole's first edge.
        let (a, b) = (hole[0], hole[1]);
        let (dx, dy) = ((b.0 - a.0) as f64, (b.1 - a.1) as f64);
        let len = dx.hypot(dy);
        let probe = (
            (a.0 as f64 + b.0 as f64) / 2.0 - 0.25 * dy / len,
            (a.1 as f64 + b.1 as f64) / 2.0 + 0.25 * dx / len,
        );
        let owner = outers
            .iter()
            .enumerate()
            .filter(|(_, o)| point_in_ring(probe, o))
            .min_by(|(_, a), (_, b)| ring_area(a).total_cmp(&ring_area(b)))
            .map(|(k, _)| k);
        if let Some(k) = owner {
            polygons[k].push(hole);
        }
    }
    let cs = land.cell_size;
    let to_world = |v: &Vertex| vec![land.origin[0] + v.0 as f64 * cs, land.origin[1] + v.1 as f64 * cs];
    let coords: Vec<Vec<Vec<Vec<f64>>>> = polygons
        .iter()
        .map(|poly| {
            poly.iter()
                .map(|ring| {
                    let mut pts: Vec<Vec<f64>> = ring.iter().map(to_world).collect();
                    pts.push(to_world(&ring[0]));
                    pts
                })
                .collect()
        })
        .collect();
    let mut props = JsonObject::new();
    props.insert("t_min".into(), state.time.into());
    props.insert("burning_cells".into(), state.active_front.len().into());
    props.insert("burned_cells".into(), state.burned_count().into());
    Feature {
        bbox: None,
        geometry: Some(Geometry::new(Value::MultiPolygon(coords))),
        id: None,
        properties: Some(props),
        foreign_members: None,
    }
}

/// Per-cell arrival table for every ignited cell, ordered by cell index.
pub fn arrival_csv(state: &FireState, land: &Landscape) -> String {
    let mut out = String::from("col,row,x,y,status,arrival_min,intensity_kw_m,flame_length_m\n");
    for (i, c) in state.cells.iter().enumerate() {
        if c.status == BurnStatus::Unburned {
            continue;
        }
        let (col, row) = land.col_row(i);
        let [x, y] = land.cell_center(i);
        let status = match c.status {
            BurnStatus::Burning => "burning",
            _ => "burned",
        };
        let _ = writeln!(
            out,
            "{col},{row},{x},{y},{status},{},{},{}",
            c.arrival, c.intensity, c.flame_length
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::MoistureTable;

    fn grass_params() -> FuelParams {
        FuelParams::default().with_moisture(MoistureTable::constant(1.0).unwrap())
    }

    fn grass() -> FuelModel {
        *FuelParams::default().model(FuelClass::Grass)
    }

    fn calm() -> WeatherSample {
        WeatherSample {
            wind_speed: 0.0,
            ..WeatherSample::calm()
        }
    }

    fn ignite(land: &Landscape, cell: usize, w: &WeatherSample) -> FireState {
        let s = FireState::new(land, 0.0);
        let ig = Ignition {
            cell,
            time: 0.0,
            source: IgnitionSource::Exogenous,
        };
        apply_ignitions(&s, land, &grass_params(), w, &[ig], 0.0).state
    }

    #[test]
    fn ros_collapses_to_base_without_wind_or_slope() {
        let g = grass();
        assert_eq!(rate_of_spread(&g, 1.0, 0.0, 0.0), g.base_ros);
        let nb = *FuelParams::default().model(FuelClass::Nonburnable);
        assert_eq!(rate_of_spread(&nb, 1.0, 0.3, 25.0), 0.0);
    }

    #[test]
    fn ros_reference_value() {
        let model = FuelModel {
            base_ros: 5.0,
            wind_c: 0.4,
            wind_b: 1.2,
            heat_per_area: 1.0,
            residence_time: 1.0,
        };
        // Independent evaluation: 10^1.2 = exp(1.2 ln 10).
        let expected = 5.0 * (1.0 + 0.4 * (1.2 * 10f64.ln()).exp());
        let r = rate_of_spread(&model, 1.0, 0.0, 10.0);
        assert!((r - expected).abs() < 1e-12);
        assert!((r - 36.7).abs() < 0.05);
    }

    #[test]
    fn byram_examples() {
        assert_eq!(byram_outputs(&grass(), 0.0), (0.0, 0.0));
        assert!((flame_length(1000.0) - 1.86).abs() < 0.005);
        let (i1, l1) = byram_outputs(&grass(), 4.0);
        let (i2, l2) = byram_outputs(&grass(), 8.0);
        assert!((i2 / i1 - 2.0).abs() < 1e-12);
        assert!((l2 / l1 - 2f64.powf(0.46)).abs() < 1e-12);
    }

    #[test]
    fn alignment_bounds() {
        assert_eq!(wind_alignment(0.0, 0.0), 1.0);
        assert_eq!(wind_alignment(137.0, 0.0), 1.0);
        assert!((wind_alignment(0.0, 12.0) - 1.0).abs() < 1e-12);
        assert!(wind_alignment(180.0, 12.0) < wind_alignment(90.0, 12.0));
        assert_eq!(length_to_breadth(40.0), 4.0);
    }

    #[test]
    fn no_burning_cells_is_a_fixed_point() {
        let land = Landscape::uniform(10, 10, 30.0, FuelClass::Grass);
        let s = FireState::new(&land, 60.0);
        let next = spread_step(&s, &land, &grass_params(), &calm(), 30.0);
        assert_eq!(next.cells, s.cells);
        assert_eq!(next.time, 90.0);
    }

    #[test]
    fn ignition_examples() {
        let mut land = Landscape::uniform(5, 5, 30.0, FuelClass::Grass);
        land.fuel[3] = FuelClass::Nonburnable;
        let s = FireState::new(&land, 0.0);
        let igs = [
            Ignition {
                cell: 7,
                time: 60.0,
                source: IgnitionSource::Exogenous,
            },
            Ignition {
                cell: 3,
                time: 60.0,
                source: IgnitionSource::Exogenous,
            },
        ];
        let out = apply_ignitions(&s, &land, &grass_params(), &calm(), &igs, 60.0);
        assert_eq!(out.state.cells[7].status, BurnStatus::Burning);
        assert_eq!(out.state.cells[7].arrival, 60.0);
        assert_eq!(out.suppressed.len(), 1);
        assert_eq!(out.state.cells[3].status, BurnStatus::Unburned);

        let again = apply_ignitions(&out.state, &land, &grass_params(), &calm(), &igs[..1], 90.0);
        assert_eq!(again.state.cells[7].arrival, 60.0);
        assert!(again.applied.is_empty());
    }

    #[test]
    fn nonburnable_barrier_stops_fire() {
        let mut land = Landscape::uniform(9, 9, 30.0, FuelClass::Grass);
        for r in 0..9 {
            let i = land.index(5, r);
            land.fuel[i] = FuelClass::Nonburnable;
        }
        let mut s = ignite(&land, land.index(1, 4), &calm());
        for _ in 0..10 {
            s = spread_step(&s, &land, &grass_params(), &calm(), 30.0);
        }
        for r in 0..9 {
            for c in 5..9 {
                assert_eq!(s.cells[land.index(c, r)].status, BurnStatus::Unburned);
            }
        }
        assert!(!s.has_burning());
        assert_eq!(s.affected_count(), 45);
    }

    #[test]
    fn orthogonal_and_diagonal_arrivals() {
        let land = Landscape::uniform(5, 5, 30.0, FuelClass::Grass);
        let s = ignite(&land, land.index(2, 2), &calm());
        let s = spread_step(&s, &land, &grass_params(), &calm(), 30.0);
        // Grass R0 = 5 m/min, 30 m cells.
        assert!((s.cells[land.index(3, 2)].arrival - 6.0).abs() < 1e-9);
        assert!((s.cells[land.index(3, 3)].arrival - 6.0 * std::f64::consts::SQRT_2).abs() < 1e-9);
        assert!((s.cells[land.index(4, 2)].arrival - 12.0).abs() < 1e-9);
        assert!((s.cells[land.index(4, 3)].arrival - 6.0 * 5f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn knight_moves_do_not_jump_diagonal_breaks() {
        let mut land = Landscape::uniform(6, 6, 30.0, FuelClass::Grass);
        for (c, r) in [(3, 0), (3, 1), (3, 2), (3, 3), (3, 4), (3, 5)] {
            let i = land.index(c, r);
            land.fuel[i] = FuelClass::Nonburnable;
        }
        let mut s = ignite(&land, land.index(2, 2), &calm());
        for _ in 0..6 {
            s = spread_step(&s, &land, &grass_params(), &calm(), 30.0);
        }
        assert!((0..6).all(|r| s.cells[land.index(4, r)].status == BurnStatus::Unburned));
    }

    #[test]
    fn wet_fuel_cannot_cross_cells_before_burnout() {
        let land = Landscape::uniform(5, 5, 30.0, FuelClass::Grass);
        let params = FuelParams::default().with_moisture(MoistureTable::constant(0.05).unwrap());
        let s0 = FireState::new(&land, 0.0);
        let ig = Ignition {
            cell: 12,
            time: 0.0,
            source: IgnitionSource::Exogenous,
        };
        let s = apply_ignitions(&s0, &land, &params, &calm(), &[ig], 0.0).state;
        let s = spread_step(&s, &land, &params, &calm(), 30.0);
        assert_eq!(s.affected_count(), 1);
        assert!(!s.has_burning());
    }

    #[test]
    fn spotting_off_by_default_and_downwind_when_on() {
        let land = Landscape::uniform(60, 60, 30.0, FuelClass::Grass);
        let wind = WeatherSample {
            wind_speed: 15.0,
            wind_direction: 270.0,
            ..WeatherSample::calm()
        };
        let s = ignite(&land, land.index(10, 30), &wind);
        assert!(spot_ignitions(&s, &land, &wind, &SpottingParams::default(), SeedRoot(1), 0).is_empty());
        let params = SpottingParams {
            probability: 1.0,
            reference_wind: 10.0,
            mean_distance: 300.0,
        };
        let spots = spot_ignitions(&s, &land, &wind, &params, SeedRoot(1), 0);
        assert_eq!(spots.len(), 1);
        let (c, r) = land.col_row(spots[0].cell);
        assert!(c >= 10 && r == 30, "west wind carries brands east: {c},{r}");
    }

    #[test]
    fn perimeter_of_block_with_hole() {
        let land = Landscape::uniform(5, 5, 10.0, FuelClass::Grass);
        let mut s = FireState::new(&land, 0.0);
        for r in 1..4 {
            for c in 1..4 {
                if (c, r) != (2, 2) {
                    s.cells[land.index(c, r)].status = BurnStatus::Burned;
                }
            }
        }
        let f = perimeter_feature(&s, &land);
        let Some(Geometry {
            value: Value::MultiPolygon(polys),
            ..
        }) = f.geometry
        else {
            panic!("expected multipolygon");
        };
        assert_eq!(polys.len(), 1);
        assert_eq!(polys[0].len(), 2);
        assert_eq!(polys[0][0].len(), 5);
        assert_eq!(polys[0][0][0], vec![10.0, 10.0]);
    }

    #[test]
    fn perimeter_keeps_diagonal_cells_apart() {
        let land = Landscape::uniform(4, 4, 1.0, FuelClass::Grass);
        let mut s = FireState::new(&land, 0.0);
        s.cells[land.index(1, 1)].status = BurnStatus::Burning;
        s.cells[land.index(2, 2)].status = BurnStatus::Burning;
        let f = perimeter_feature(&s, &land);
        let Some(Geometry {
            value: Value::MultiPolygon(polys),
            ..
        }) = f.geometry
        else {
            panic!("expected multipolygon");
        };
        assert_eq!(polys.len(), 2);
        assert!(polys.iter().all(|p| p.len() == 1 && p[0].len() == 5));
    }

    #[test]
    fn arrival_table_lists_ignited_cells() {
        let land = Landscape::uniform(3, 3, 30.0, FuelClass::Grass);
        let s = ignite(&land, 4, &calm());
        let csv = arrival_csv(&s, &land);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("1,1,45,45,burning,0,"));
    }
}
