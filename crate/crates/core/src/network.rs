//! Coupled transmission + distribution network model.
//!
//! A [`GridNetwork`] is immutable once built. Per-run mutable status lives in
//! [`crate::state::ComponentState`], indexed by the positions of buses,
//! branches, poles and generators in the network's vectors.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::ComponentState;

pub type BusId = u32;
pub type BranchId = u32;
pub type PoleId = u32;

pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance (m) for geometric coincidence checks.
const GEOM_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Tx,
    Dx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub level: Level,
    pub coordinates: [f64; 2],
    /// kV
    pub nominal_voltage: f64,
    /// Feeder number for distribution buses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feeder: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    LineOverhead,
    LineUnderground,
    Transformer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hardening {
    #[default]
    Standard,
    Hardened,
}

impl Hardening {
    /// Multiplier applied to failure probabilities.
    pub fn multiplier(self) -> f64 {
        match self {
            Hardening::Standard => 1.0,
            Hardening::Hardened => 0.5,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: BranchId,
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub kind: BranchKind,
    pub geometry: Vec<[f64; 2]>,
    /// Per-unit on the system base.
    pub reactance: f64,
    /// MW
    pub thermal_rating: f64,
    /// Poles carrying this span (overhead distribution lines only).
    #[serde(default)]
    pub spans: Vec<PoleId>,
    #[serde(default)]
    pub hardening_level: Hardening,
    /// Multiplier on wind-failure probability from nearby vegetation.
    #[serde(default = "one")]
    pub vegetation_density: f64,
    #[serde(default)]
    pub switchable: bool,
}

impl Branch {
    pub fn is_overhead(&self) -> bool {
        self.kind == BranchKind::LineOverhead
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoleMaterial {
    Wood,
    Steel,
    Composite,
}

impl PoleMaterial {
    pub fn class_name(self) -> &'static str {
        match self {
            PoleMaterial::Wood => "pole_wood",
            PoleMaterial::Steel => "pole_steel",
            PoleMaterial::Composite => "pole_composite",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    pub id: PoleId,
    pub location: [f64; 2],
    pub material: PoleMaterial,
    pub supported_branches: Vec<BranchId>,
    #[serde(default)]
    pub hardening_level: Hardening,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    Bulk,
    Der,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: u32,
    pub bus: BusId,
    pub p_max: f64,
    pub p_min: f64,
    pub kind: GenKind,
    /// $/MWh, used only for merit ordering.
    pub marginal_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Critical,
    Standard,
}

impl Criticality {
    pub fn weight(self) -> f64 {
        match self {
            Criticality::Critical => 10.0,
            Criticality::Standard => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub id: u32,
    pub bus: BusId,
    /// MW
    pub demand: f64,
    pub criticality: Criticality,
    pub customers: u32,
}

impl Load {
    pub fn weight(&self) -> f64 {
        self.criticality.weight()
    }
}

/// Serialized form of a network, before validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkData {
    pub schema_version: u32,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub poles: Vec<Pole>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
}

#[derive(Debug, Clone, Default)]
struct NetIndex {
    bus: HashMap<BusId, usize>,
    branch: HashMap<BranchId, usize>,
    pole: HashMap<PoleId, usize>,
    generator: HashMap<u32, usize>,
    load: HashMap<u32, usize>,
    /// Per bus: (branch index, other bus index).
    adjacency: Vec<Vec<(usize, usize)>>,
    branch_ends: Vec<(usize, usize)>,
    branch_poles: Vec<Vec<usize>>,
    pole_branches: Vec<Vec<usize>>,
    gens_at_bus: Vec<Vec<usize>>,
    loads_at_bus: Vec<Vec<usize>>,
}

/// Validated coupled Tx & Dx network with its adjacency index.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "NetworkData")]
pub struct GridNetwork {
    pub schema_version: u32,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub poles: Vec<Pole>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
    #[serde(skip)]
    index: NetIndex,
}

impl PartialEq for GridNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.schema_version == other.schema_version
            && self.buses == other.buses
            && self.branches == other.branches
            && self.poles == other.poles
            && self.generators == other.generators
            && self.loads == other.loads
    }
}

impl TryFrom<NetworkData> for GridNetwork {
    type Error = Error;

    fn try_from(data: NetworkData) -> Result<Self> {
        GridNetwork::new(data)
    }
}

fn unique_index<T>(items: &[T], kind: &'static str, id: impl Fn(&T) -> u32) -> Result<HashMap<u32, usize>> {
    let mut map = HashMap::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        if map.insert(id(item), i).is_some() {
            return Err(Error::config(format!("duplicate {kind} id {}", id(item))));
        }
    }
    Ok(map)
}

fn near(a: [f64; 2], b: [f64; 2]) -> bool {
    (a[0] - b[0]).hypot(a[1] - b[1]) <= GEOM_TOL
}

/// Distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    (p[0] - (a[0] + t * dx)).hypot(p[1] - (a[1] + t * dy))
}

fn on_polyline(p: [f64; 2], line: &[[f64; 2]]) -> bool {
    line.windows(2)
        .any(|w| point_segment_distance(p, w[0], w[1]) <= GEOM_TOL)
}

impl GridNetwork {
    /// Validates `data` and builds the adjacency index.
    pub fn new(data: NetworkData) -> Result<Self> {
        if data.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                data.schema_version
            )));
        }
        let NetworkData {
            schema_version,
            buses,
            branches,
            poles,
            generators,
            loads,
        } = data;

        let bus = unique_index(&buses, "bus", |b| b.id)?;
        let branch = unique_index(&branches, "branch", |b| b.id)?;
        let pole = unique_index(&poles, "pole", |p| p.id)?;
        let generator = unique_index(&generators, "generator", |g| g.id)?;
        let load = unique_index(&loads, "load", |l| l.id)?;

        let bus_idx = |id: BusId| bus.get(&id).copied().ok_or(Error::UnknownId { kind: "bus", id });

        let mut adjacency = vec![Vec::new(); buses.len()];
        let mut branch_ends = Vec::with_capacity(branches.len());
        let mut branch_poles = Vec::with_capacity(branches.len());
        let mut pole_branches = vec![Vec::new(); poles.len()];

        for (bi, br) in branches.iter().enumerate() {
            let f = bus_idx(br.from_bus)?;
            let t = bus_idx(br.to_bus)?;
            if f == t {
                return Err(Error::config(format!("branch {} is a self-loop", br.id)));
            }
            if !(br.thermal_rating > 0.0) {
                return Err(Error::config(format!("branch {} thermal_rating must be > 0", br.id)));
            }
            if !(br.reactance >= 0.0 && br.reactance.is_finite()) {
                return Err(Error::config(format!(
                    "branch {} reactance must be finite and >= 0",
                    br.id
                )));
            }
            if !(br.vegetation_density >= 0.0) {
                return Err(Error::config(format!(
                    "branch {} vegetation_density must be >= 0",
                    br.id
                )));
            }
            let (first, last) = match (br.geometry.first(), br.geometry.last()) {
                (Some(a), Some(b)) if br.geometry.len() >= 2 => (*a, *b),
                _ => {
                    return Err(Error::config(format!(
                        "branch {} geometry needs at least two points",
                        br.id
                    )))
                }
            };
            if !near(first, buses[f].coordinates) || !near(last, buses[t].coordinates) {
                return Err(Error::config(format!(
                    "branch {} geometry endpoints do not match its bus coordinates",
                    br.id
                )));
            }
            let levels = (buses[f].level, buses[t].level);
            match br.kind {
                BranchKind::Transformer => {
                    if !matches!(levels, (Level::Tx, Level::Dx) | (Level::Dx, Level::Tx)) {
                        return Err(Error::config(format!(
                            "transformer {} must connect a Tx bus to a Dx bus",
                            br.id
                        )));
                    }
                }
                BranchKind::LineUnderground => {
                    if !br.spans.is_empty() {
                        return Err(Error::config(format!(
                            "underground line {} cannot have pole spans",
                            br.id
                        )));
                    }
                }
                BranchKind::LineOverhead => {
                    if levels == (Level::Dx, Level::Dx) && br.spans.is_empty() {
                        return Err(Error::config(format!(
                            "overhead distribution line {} has no poles",
                            br.id
                        )));
                    }
                }
            }
            let mut bp = Vec::with_capacity(br.spans.len());
            for &pid in &br.spans {
                let pi = *pole.get(&pid).ok_or(Error::UnknownId { kind: "pole", id: pid })?;
                if !poles[pi].supported_branches.contains(&br.id) {
                    return Err(Error::config(format!(
                        "pole {pid} does not list branch {} as supported",
                        br.id
                    )));
                }
                bp.push(pi);
            }
            adjacency[f].push((bi, t));
            adjacency[t].push((bi, f));
            branch_ends.push((f, t));
            branch_poles.push(bp);
        }

        for (pi, p) in poles.iter().enumerate() {
            for &bid in &p.supported_branches {
                let bi = *branch.get(&bid).ok_or(Error::UnknownId {
                    kind: "branch",
                    id: bid,
                })?;
                if !on_polyline(p.location, &branches[bi].geometry) {
                    return Err(Error::config(format!(
                        "pole {} is not on the polyline of branch {bid}",
                        p.id
                    )));
                }
                if !branches[bi].spans.contains(&p.id) {
                    return Err(Error::config(format!(
                        "branch {bid} does not reference supporting pole {}",
                        p.id
                    )));
                }
                pole_branches[pi].push(bi);
            }
        }

        let mut gens_at_bus = vec![Vec::new(); buses.len()];
        for (gi, g) in generators.iter().enumerate() {
            let b = bus_idx(g.bus)?;
            if !(0.0 <= g.p_min && g.p_min <= g.p_max) {
                return Err(Error::config(format!("generator {} needs 0 <= p_min <= p_max", g.id)));
            }
            if g.kind == GenKind::Der && buses[b].level != Level::Dx {
                return Err(Error::config(format!("DER generator {} must attach to a Dx bus", g.id)));
            }
            gens_at_bus[b].push(gi);
        }
        if !generators.iter().any(|g| g.kind == GenKind::Bulk) {
            return Err(Error::config("network needs at least one bulk generator"));
        }

        let mut loads_at_bus = vec![Vec::new(); buses.len()];
        for (li, l) in loads.iter().enumerate() {
            let b = bus_idx(l.bus)?;
            if !(l.demand >= 0.0) {
                return Err(Error::config(format!("load {} demand must be >= 0", l.id)));
            }
            loads_at_bus[b].push(li);
        }

        Ok(GridNetwork {
            schema_version,
            buses,
            branches,
            poles,
            generators,
            loads,
            index: NetIndex {
                bus,
                branch,
                pole,
                generator,
                load,
                adjacency,
                branch_ends,
                branch_poles,
                pole_branches,
                gens_at_bus,
                loads_at_bus,
            },
        })
    }

    pub fn to_data(&self) -> NetworkData {
        NetworkData {
            schema_version: self.schema_version,
            buses: self.buses.clone(),
            branches: self.branches.clone(),
            poles: self.poles.clone(),
            generators: self.generators.clone(),
            loads: self.loads.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn bus_index(&self, id: BusId) -> Result<usize> {
        self.index
            .bus
            .get(&id)
            .copied()
            .ok_or(Error::UnknownId { kind: "bus", id })
    }

    pub fn branch_index(&self, id: BranchId) -> Result<usize> {
        self.index
            .branch
            .get(&id)
            .copied()
            .ok_or(Error::UnknownId { kind: "branch", id })
    }

    pub fn pole_index(&self, id: PoleId) -> Result<usize> {
        self.index
            .pole
            .get(&id)
            .copied()
            .ok_or(Error::UnknownId { kind: "pole", id })
    }

    pub fn generator_index(&self, id: u32) -> Result<usize> {
        self.index
            .generator
            .get(&id)
            .copied()
            .ok_or(Error::UnknownId { kind: "generator", id })
    }

    pub fn load_index(&self, id: u32) -> Result<usize> {
        self.index
            .load
            .get(&id)
            .copied()
            .ok_or(Error::UnknownId { kind: "load", id })
    }

    /// Bus indices at each end of branch `bi`.
    pub fn branch_ends(&self, bi: usize) -> (usize, usize) {
        self.index.branch_ends[bi]
    }

    /// `(branch index, neighbor bus index)` pairs incident to bus `b`.
    pub fn adjacent(&self, b: usize) -> &[(usize, usize)] {
        &self.index.adjacency[b]
    }

    pub fn branch_poles(&self, bi: usize) -> &[usize] {
        &self.index.branch_poles[bi]
    }

    pub fn pole_branches(&self, pi: usize) -> &[usize] {
        &self.index.pole_branches[pi]
    }

    pub fn generators_at(&self, b: usize) -> &[usize] {
        &self.index.gens_at_bus[b]
    }

    pub fn loads_at(&self, b: usize) -> &[usize] {
        &self.index.loads_at_bus[b]
    }

    /// Transformer branches feeding each feeder, keyed by feeder number.
    pub fn feeder_heads(&self) -> Vec<(u32, usize)> {
        let mut heads: Vec<(u32, usize)> = self
            .branches
            .iter()
            .enumerate()
            .filter(|(_, br)| br.kind == BranchKind::Transformer)
            .filter_map(|(bi, _)| {
                let (f, t) = self.branch_ends(bi);
                self.buses[f].feeder.or(self.buses[t].feeder).map(|fd| (fd, bi))
            })
            .collect();
        heads.sort_unstable();
        heads
    }

    /// Axis-aligned bounding box `(min, max)` of all coordinates in the network.
    pub fn extent(&self) -> ([f64; 2], [f64; 2]) {
        let pts = self
            .buses
            .iter()
            .map(|b| b.coordinates)
            .chain(self.branches.iter().flat_map(|b| b.geometry.iter().copied()))
            .chain(self.poles.iter().map(|p| p.location));
        pts.fold(([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]), |(lo, hi), p| {
            ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
        })
    }

    /// Rebuilds a validated copy after editing the serialized form.
    pub(crate) fn with_changes(&self, f: impl FnOnce(&mut NetworkData) -> Result<()>) -> Result<Self> {
        let mut data = self.to_data();
        f(&mut data)?;
        GridNetwork::new(data)
    }
}

// ---------------------------------------------------------------------------
// Topology queries
// ---------------------------------------------------------------------------

/// Connected components of the bus graph over closed branches.
///
/// Each island is sorted by bus id and islands are ordered by their smallest id.
pub fn islands(net: &GridNetwork, state: &ComponentState) -> Vec<Vec<BusId>> {
    island_indices(net, state)
        .into_iter()
        .map(|isl| isl.into_iter().map(|b| net.buses[b].id).collect())
        .collect()
}

/// Like [`islands`], but yields bus indices (each island sorted by bus id).
pub fn island_indices(net: &GridNetwork, state: &ComponentState) -> Vec<Vec<usize>> {
    let n = net.buses.len();
    let mut uf = UnionFind::<usize>::new(n);
    for bi in 0..net.branches.len() {
        if state.branch_closed(net, bi) {
            let (f, t) = net.branch_ends(bi);
            uf.union(f, t);
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for b in 0..n {
        groups.entry(uf.find(b)).or_default().push(b);
    }
    let mut out: Vec<Vec<usize>> = groups
        .into_values()
        .map(|mut g| {
            g.sort_by_key(|&b| net.buses[b].id);
            g
        })
        .collect();
    out.sort_by_key(|g| net.buses[g[0]].id);
    out
}

/// Island label per bus index, labels following [`island_indices`] order.
pub fn island_labels(net: &GridNetwork, state: &ComponentState) -> (Vec<usize>, Vec<Vec<usize>>) {
    let isl = island_indices(net, state);
    let mut label = vec![0; net.buses.len()];
    for (k, members) in isl.iter().enumerate() {
        for &b in members {
            label[b] = k;
        }
    }
    (label, isl)
}

/// True iff `bus` shares an island with an in-service generator with `p_max > 0`.
pub fn energization_path_exists(net: &GridNetwork, state: &ComponentState, bus: BusId) -> Result<bool> {
    let start = net.bus_index(bus)?;
    let mut seen = vec![false; net.buses.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(b) = stack.pop() {
        let sourced = net
            .generators_at(b)
            .iter()
            .any(|&gi| state.generators[gi].in_service && net.generators[gi].p_max > 0.0);
        if sourced {
            return Ok(true);
        }
        for &(bi, other) in net.adjacent(b) {
            if !seen[other] && state.branch_closed(net, bi) {
                seen[other] = true;
                stack.push(other);
            }
        }
    }
    Ok(false)
}

// ---------------------------------------------------------------------------
// Bundled testbed
// ---------------------------------------------------------------------------

const TX_BUSES: &str = include_str!("../data/tx14_buses.csv");
const TX_BRANCHES: &str = include_str!("../data/tx14_branches.csv");
const TX_GENERATORS: &str = include_str!("../data/tx14_generators.csv");
const TX_LOADS: &str = include_str!("../data/tx14_loads.csv");
const FEEDER: &str = include_str!("../data/feeder33.csv");
const TESTBED_META: &str = include_str!("../data/testbed.json");

fn default_extent() -> [f64; 2] {
    [6000.0, 6000.0]
}

fn default_span() -> f64 {
    150.0
}

fn default_material() -> PoleMaterial {
    PoleMaterial::Wood
}

/// Options for [`build_testbed`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestbedConfig {
    /// Number of distribution feeders to couple to the transmission grid.
    pub feeders: usize,
    /// Landscape width and height in meters; the layout lies inside `[0, w] x [0, h]`.
    #[serde(default = "default_extent")]
    pub extent_m: [f64; 2],
    /// Tx buses hosting feeders, in feeder order. Defaults to the bundled order.
    #[serde(default)]
    pub attach_buses: Option<Vec<BusId>>,
    #[serde(default = "default_span")]
    pub span_length_m: f64,
    #[serde(default = "default_material")]
    pub pole_material: PoleMaterial,
    /// Feeder section numbers (1-based) built as underground cable.
    #[serde(default)]
    pub underground_sections: Vec<u32>,
}

impl Default for TestbedConfig {
    fn default() -> Self {
        TestbedConfig {
            feeders: 1,
            extent_m: default_extent(),
            attach_buses: None,
            span_length_m: default_span(),
            pole_material: default_material(),
            underground_sections: Vec::new(),
        }
    }
}

#[derive(Deserialize)]
struct TestbedMeta {
    base_mva: f64,
    dx_base_kv: f64,
    dx_section_rating_mw: f64,
    transformer_x_pu: f64,
    transformer_rating_mw: f64,
    attach_order: Vec<BusId>,
    tx_region: Region,
}

#[derive(Deserialize)]
struct Region {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

#[derive(Deserialize)]
struct TxBusRow {
    bus: BusId,
    u: f64,
    v: f64,
    kv: f64,
}

#[derive(Deserialize)]
struct TxBranchRow {
    id: BranchId,
    from: BusId,
    to: BusId,
    x_pu: f64,
    rating_mw: f64,
}

#[derive(Deserialize)]
struct TxGenRow {
    id: u32,
    bus: BusId,
    p_min: f64,
    p_max: f64,
    cost: f64,
}

#[derive(Deserialize)]
struct TxLoadRow {
    bus: BusId,
    mw: f64,
    customers: u32,
    critical: u8,
}

#[derive(Deserialize)]
struct FeederRow {
    section: u32,
    from: u32,
    to: u32,
    #[allow(dead_code)]
    r_ohm: f64,
    x_ohm: f64,
    to_kw: f64,
    customers: u32,
    critical: u8,
}

fn read_table<T: for<'de> Deserialize<'de>>(name: &str, text: &str) -> Result<Vec<T>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Parse {
                path: format!("bundled:{name}"),
                line: i + 2,
                msg: e.to_string(),
            })
        })
        .collect()
}

fn criticality(flag: u8) -> Criticality {
    if flag != 0 {
        Criticality::Critical
    } else {
        Criticality::Standard
    }
}

/// Grid position `(depth, column)` of each feeder node in a tidy radial layout.
///
/// The first child of a node continues its column; each further child opens a
/// new column to the right.
fn feeder_layout(rows: &[FeederRow]) -> HashMap<u32, (u32, u32)> {
    let mut children: HashMap<u32, Vec<u32>> = HashMap::new();
    for r in rows {
        children.entry(r.from).or_default().push(r.to);
    }
    let mut pos = HashMap::new();
    let mut next_col = 1;
    let mut stack = vec![(1u32, 0u32, 0u32)];
    while let Some((node, depth, col)) = stack.pop() {
        pos.insert(node, (depth, col));
        let kids = children.get(&node).cloned().unwrap_or_default();
        // Assign columns in order, then push in reverse so the trunk is laid out first.
        let mut placed = Vec::with_capacity(kids.len());
        for (k, child) in kids.iter().enumerate() {
            let c = if k == 0 {
                col
            } else {
                let c = next_col;
                next_col += 1;
                c
            };
            placed.push((*child, depth + 1, c));
        }
        stack.extend(placed.into_iter().rev());
    }
    pos
}

/// Bus id of node `node` on feeder `feeder` (1-based).
pub fn feeder_bus_id(feeder: u32, node: u32) -> BusId {
    100 * (feeder + 1) + node
}

/// Assembles the bundled 14-bus transmission grid coupled to `config.feeders`
/// radial 33-node distribution feeders.
pub fn build_testbed(config: &TestbedConfig) -> Result<GridNetwork> {
    if config.feeders == 0 {
        return Err(Error::config("testbed needs at least one feeder"));
    }
    let [width, height] = config.extent_m;
    if !(width > 0.0 && height > 0.0 && config.span_length_m > 0.0) {
        return Err(Error::config("extent and span length must be positive"));
    }
    let meta: TestbedMeta = serde_json::from_str(TESTBED_META)?;
    let tx_buses: Vec<TxBusRow> = read_table("tx14_buses.csv", TX_BUSES)?;
    let tx_branches: Vec<TxBranchRow> = read_table("tx14_branches.csv", TX_BRANCHES)?;
    let tx_gens: Vec<TxGenRow> = read_table("tx14_generators.csv", TX_GENERATORS)?;
    let tx_loads: Vec<TxLoadRow> = read_table("tx14_loads.csv", TX_LOADS)?;
    let feeder: Vec<FeederRow> = read_table("feeder33.csv", FEEDER)?;

    let load_buses: BTreeSet<BusId> = tx_loads.iter().map(|l| l.bus).collect();
    let attach = config.attach_buses.clone().unwrap_or_else(|| meta.attach_order.clone());
    if config.feeders > attach.len() {
        return Err(Error::config(format!(
            "{} feeders requested but only {} Tx attachment buses are available",
            config.feeders,
            attach.len()
        )));
    }
    let attach = &attach[..config.feeders];
    let distinct: BTreeSet<_> = attach.iter().collect();
    if distinct.len() != attach.len() {
        return Err(Error::config("feeder attachment buses must be distinct"));
    }
    for b in attach {
        if !load_buses.contains(b) {
            return Err(Error::config(format!(
                "bus {b} is not a Tx load bus and cannot host a feeder"
            )));
        }
    }

    let r = &meta.tx_region;
    let place = |u: f64, v: f64| {
        [
            width * (r.x_min + u * (r.x_max - r.x_min)),
            height * (r.y_min + v * (r.y_max - r.y_min)),
        ]
    };

    let mut buses = Vec::new();
    let mut coords: HashMap<BusId, [f64; 2]> = HashMap::new();
    for row in &tx_buses {
        let c = place(row.u, row.v);
        coords.insert(row.bus, c);
        buses.push(Bus {
            id: row.bus,
            level: Level::Tx,
            coordinates: c,
            nominal_voltage: row.kv,
            feeder: None,
        });
    }

    let straight = |a: BusId, b: BusId, coords: &HashMap<BusId, [f64; 2]>| vec![coords[&a], coords[&b]];

    let mut branches: Vec<Branch> = tx_branches
        .iter()
        .map(|row| Branch {
            id: row.id,
            from_bus: row.from,
            to_bus: row.to,
            kind: BranchKind::LineOverhead,
            geometry: straight(row.from, row.to, &coords),
            reactance: row.x_pu,
            thermal_rating: row.rating_mw,
            spans: Vec::new(),
            hardening_level: Hardening::Standard,
            vegetation_density: 1.0,
            switchable: true,
        })
        .collect();

    let mut generators: Vec<Generator> = tx_gens
        .iter()
        .map(|g| Generator {
            id: g.id,
            bus: g.bus,
            p_max: g.p_max,
            p_min: g.p_min,
            kind: GenKind::Bulk,
            marginal_cost: g.cost,
        })
        .collect();
    generators.sort_by_key(|g| g.id);

    let mut loads: Vec<Load> = tx_loads
        .iter()
        .map(|l| Load {
            id: l.bus,
            bus: l.bus,
            demand: l.mw,
            criticality: criticality(l.critical),
            customers: l.customers,
        })
        .collect();

    let z_base = meta.dx_base_kv * meta.dx_base_kv / meta.base_mva;
    let layout = feeder_layout(&feeder);
    let span = config.span_length_m;
    let mut poles: Vec<Pole> = Vec::new();

    for (k, &tx_bus) in attach.iter().enumerate() {
        let fd = k as u32 + 1;
        let anchor = coords[&tx_bus];
        let mut nodes: Vec<u32> = layout.keys().copied().collect();
        nodes.sort_unstable();
        for &node in &nodes {
            let (depth, col) = layout[&node];
            let c = [anchor[0] + span * col as f64, anchor[1] - span * (depth + 1) as f64];
            if !(0.0..=width).contains(&c[0]) || !(0.0..=height).contains(&c[1]) {
                return Err(Error::config(format!(
                    "feeder {fd} does not fit inside the {width} x {height} m extent"
                )));
            }
            let id = feeder_bus_id(fd, node);
            coords.insert(id, c);
            buses.push(Bus {
                id,
                level: Level::Dx,
                coordinates: c,
                nominal_voltage: meta.dx_base_kv,
                feeder: Some(fd),
            });
        }

        let head = feeder_bus_id(fd, 1);
        branches.push(Branch {
            id: 100 * (fd + 1),
            from_bus: tx_bus,
            to_bus: head,
            kind: BranchKind::Transformer,
            geometry: straight(tx_bus, head, &coords),
            reactance: meta.transformer_x_pu,
            thermal_rating: meta.transformer_rating_mw,
            spans: Vec::new(),
            hardening_level: Hardening::Standard,
            vegetation_density: 1.0,
            switchable: true,
        });

        // One pole per node; each overhead section is carried by the poles at its ends.
        let mut pole_support: HashMap<u32, Vec<BranchId>> = HashMap::new();
        for row in &feeder {
            let from = feeder_bus_id(fd, row.from);
            let to = feeder_bus_id(fd, row.to);
            let id = 100 * (fd + 1) + row.section;
            let underground = config.underground_sections.contains(&row.section);
            let spans = if underground {
                Vec::new()
            } else {
                pole_support.entry(from).or_default().push(id);
                pole_support.entry(to).or_default().push(id);
                vec![from, to]
            };
            branches.push(Branch {
                id,
                from_bus: from,
                to_bus: to,
                kind: if underground {
                    BranchKind::LineUnderground
                } else {
                    BranchKind::LineOverhead
                },
                geometry: straight(from, to, &coords),
                reactance: row.x_ohm / z_base,
                thermal_rating: meta.dx_section_rating_mw,
                spans,
                hardening_level: Hardening::Standard,
                vegetation_density: 1.0,
                switchable: false,
            });
            loads.push(Load {
                id: to,
                bus: to,
                demand: row.to_kw / 1000.0,
                criticality: criticality(row.critical),
                customers: row.customers,
            });
        }
        let mut pole_ids: Vec<u32> = pole_support.keys().copied().collect();
        pole_ids.sort_unstable();
        for pid in pole_ids {
            let mut supported = pole_support.remove(&pid).unwrap_or_default();
            supported.sort_unstable();
            poles.push(Pole {
                id: pid,
                location: coords[&pid],
                material: config.pole_material,
                supported_branches: supported,
                hardening_level: Hardening::Standard,
            });
        }
    }

    GridNetwork::new(NetworkData {
        schema_version: SCHEMA_VERSION,
        buses,
        branches,
        poles,
        generators,
        loads,
    })
}
