//! Raster fuel/terrain landscape, fuel parameters and the weather series.
//!
//! Grids use the ESRI ASCII layout: row 0 is the northern edge and the origin
//! is the lower-left corner of the lower-left cell.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::GridNetwork;
use crate::rng::SeedRoot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FuelClass {
    Nonburnable,
    Grass,
    Shrub,
    Timber,
    UrbanWui,
}

impl FuelClass {
    pub const ALL: [FuelClass; 5] = [
        FuelClass::Nonburnable,
        FuelClass::Grass,
        FuelClass::Shrub,
        FuelClass::Timber,
        FuelClass::UrbanWui,
    ];

    pub fn code(self) -> i64 {
        match self {
            FuelClass::Nonburnable => 0,
            FuelClass::Grass => 1,
            FuelClass::Shrub => 2,
            FuelClass::Timber => 3,
            FuelClass::UrbanWui => 4,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            FuelClass::Nonburnable => "nonburnable",
            FuelClass::Grass => "grass",
            FuelClass::Shrub => "shrub",
            FuelClass::Timber => "timber",
            FuelClass::UrbanWui => "urban_wui",
        }
    }

    pub fn is_burnable(self) -> bool {
        self != FuelClass::Nonburnable
    }
}

/// NODATA cells in a fuel grid map to nonburnable.
const NODATA_DEFAULT: f64 = -9999.0;

/// One parsed ESRI ASCII grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AsciiGrid {
    pub ncols: usize,
    pub nrows: usize,
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub nodata: f64,
    pub values: Vec<f64>,
}

impl AsciiGrid {
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.to_string(),
            line,
            msg,
        };
        let mut header: HashMap<String, f64> = HashMap::new();
        let mut lines = text.lines().enumerate().peekable();
        while let Some((i, line)) = lines.peek().copied() {
            let mut parts = line.split_whitespace();
            let Some(key) = parts.next() else {
                lines.next();
                continue;
            };
            if !key.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                break;
            }
            let value = parts
                .next()
                .ok_or_else(|| perr(i + 1, format!("header key {key} has no value")))?
                .parse::<f64>()
                .map_err(|e| perr(i + 1, format!("bad header value for {key}: {e}")))?;
            header.insert(key.to_ascii_lowercase(), value);
            lines.next();
        }
        let get = |k: &str| {
            header
                .get(k)
                .copied()
                .ok_or_else(|| perr(1, format!("missing header key {k}")))
        };
        let ncols = get("ncols")? as usize;
        let nrows = get("nrows")? as usize;
        let cell_size = get("cellsize")?;
        if !(cell_size > 0.0) || ncols == 0 || nrows == 0 {
            return Err(perr(1, "ncols, nrows and cellsize must be positive".into()));
        }
        let origin = match (header.get("xllcorner"), header.get("yllcorner")) {
            (Some(&x), Some(&y)) => [x, y],
            _ => match (header.get("xllcenter"), header.get("yllcenter")) {
                (Some(&x), Some(&y)) => [x - cell_size / 2.0, y - cell_size / 2.0],
                _ => [0.0, 0.0],
            },
        };
        let nodata = header.get("nodata_value").copied().unwrap_or(NODATA_DEFAULT);
        let mut values = Vec::with_capacity(ncols * nrows);
        for (i, line) in lines {
            for tok in line.split_whitespace() {
                values.push(
                    tok.parse::<f64>()
                        .map_err(|e| perr(i + 1, format!("bad value {tok:?}: {e}")))?,
                );
            }
        }
        if values.len() != ncols * nrows {
            return Err(Error::DimensionMismatch(format!(
                "{path}: header declares {ncols}x{nrows} = {} cells but {} values follow",
                ncols * nrows,
                values.len()
            )));
        }
        Ok(AsciiGrid {
            ncols,
            nrows,
            origin,
            cell_size,
            nodata,
            values,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self, integer: bool) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ncols {}", self.ncols);
        let _ = writeln!(out, "nrows {}", self.nrows);
        let _ = writeln!(out, "xllcorner {}", self.origin[0]);
        let _ = writeln!(out, "yllcorner {}", self.origin[1]);
        let _ = writeln!(out, "cellsize {}", self.cell_size);
        let _ = writeln!(out, "NODATA_value {}", self.nodata);
        for row in self.values.chunks(self.ncols) {
            let line: Vec<String> = row
                .iter()
                .map(|v| {
                    if integer {
                        format!("{}", *v as i64)
                    } else {
                        format!("{v:.4}")
                    }
                })
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    fn same_frame(&self, other: &AsciiGrid) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && self.cell_size == other.cell_size
            && self.origin == other.origin
    }
}

/// Rasterized fuel and terrain.
#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    pub cell_size: f64,
    pub ncols: usize,
    pub nrows: usize,
    /// Lower-left corner in the landscape frame (m).
    pub origin: [f64; 2],
    pub fuel: Vec<FuelClass>,
    /// Rise over run.
    pub slope: Vec<f64>,
    /// m
    pub elevation: Vec<f64>,
}

impl Landscape {
    pub fn uniform(ncols: usize, nrows: usize, cell_size: f64, fuel: FuelClass) -> Self {
        let n = ncols * nrows;
        Landscape {
            cell_size,
            ncols,
            nrows,
            origin: [0.0, 0.0],
            fuel: vec![fuel; n],
            slope: vec![0.0; n],
            elevation: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.ncols + col
    }

    pub fn col_row(&self, idx: usize) -> (usize, usize) {
        (idx % self.ncols, idx / self.ncols)
    }

    pub fn width_m(&self) -> f64 {
        self.ncols as f64 * self.cell_size
    }

    pub fn height_m(&self) -> f64 {
        self.nrows as f64 * self.cell_size
    }

    /// Cell containing the point, if inside the grid.
    pub fn cell_at(&self, p: [f64; 2]) -> Option<usize> {
        let fx = (p[0] - self.origin[0]) / self.cell_size;
        let fy = (p[1] - self.origin[1]) / self.cell_size;
        if !(fx >= 0.0 && fy >= 0.0 && fx <= self.ncols as f64 && fy <= self.nrows as f64) {
            return None;
        }
        // Points on the far boundary belong to the last cell.
        let col = (fx.floor() as usize).min(self.ncols - 1);
        let from_bottom = (fy.floor() as usize).min(self.nrows - 1);
        Some(self.index(col, self.nrows - 1 - from_bottom))
    }

    /// `(min, max)` corners of a cell.
    pub fn cell_rect(&self, idx: usize) -> ([f64; 2], [f64; 2]) {
        let (col, row) = self.col_row(idx);
        let x0 = self.origin[0] + col as f64 * self.cell_size;
        let y0 = self.origin[1] + (self.nrows - 1 - row) as f64 * self.cell_size;
        ([x0, y0], [x0 + self.cell_size, y0 + self.cell_size])
    }

    pub fn cell_center(&self, idx: usize) -> [f64; 2] {
        let (lo, hi) = self.cell_rect(idx);
        [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.cell_at(p).is_some()
    }

    pub fn fuel_at(&self, idx: usize) -> FuelClass {
        self.fuel.get(idx).copied().unwrap_or(FuelClass::Nonburnable)
    }

    pub fn is_burnable(&self, idx: usize) -> bool {
        self.fuel_at(idx).is_burnable()
    }

    pub fn burnable_count(&self) -> usize {
        self.fuel.iter().filter(|f| f.is_burnable()).count()
    }

    /// Fails with a dimension mismatch when any network coordinate is off the grid.
    pub fn check_covers(&self, net: &GridNetwork) -> Result<()> {
        let (lo, hi) = net.extent();
        if !self.contains(lo) || !self.contains(hi) {
            return Err(Error::DimensionMismatch(format!(
                "landscape [{}, {}] x [{}, {}] does not cover network extent [{}, {}] x [{}, {}]",
                self.origin[0],
                self.origin[0] + self.width_m(),
                self.origin[1],
                self.origin[1] + self.height_m(),
                lo[0],
                hi[0],
                lo[1],
                hi[1]
            )));
        }
        Ok(())
    }

    /// Builds a landscape from a fuel grid plus optional slope/elevation grids in the same frame.
    pub fn from_grids(fuel: &AsciiGrid, slope: Option<&AsciiGrid>, elevation: Option<&AsciiGrid>) -> Result<Self> {
        let mut fuels = Vec::with_capacity(fuel.values.len());
        for (i, &v) in fuel.values.iter().enumerate() {
            let class = if v == fuel.nodata {
                FuelClass::Nonburnable
            } else {
                FuelClass::from_code(v as i64)
                    .filter(|_| v.fract() == 0.0)
                    .ok_or(Error::UnknownFuelCode {
                        code: v as i64,
                        row: i / fuel.ncols,
                        col: i % fuel.ncols,
                    })?
            };
            fuels.push(class);
        }
        let parallel = |g: Option<&AsciiGrid>, name: &str| -> Result<Vec<f64>> {
            match g {
                None => Ok(vec![0.0; fuel.values.len()]),
                Some(g) if g.same_frame(fuel) => {
                    Ok(g.values.iter().map(|&v| if v == g.nodata { 0.0 } else { v }).collect())
                }
                Some(g) => Err(Error::DimensionMismatch(format!(
                    "{name} grid is {}x{} @ {} but fuel grid is {}x{} @ {}",
                    g.ncols, g.nrows, g.cell_size, fuel.ncols, fuel.nrows, fuel.cell_size
                ))),
            }
        };
        let slope = parallel(slope, "slope")?;
        if slope.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::config("slope values must be finite and >= 0"));
        }
        Ok(Landscape {
            cell_size: fuel.cell_size,
            ncols: fuel.ncols,
            nrows: fuel.nrows,
            origin: fuel.origin,
            fuel: fuels,
            slope,
            elevation: parallel(elevation, "elevation")?,
        })
    }

    pub fn fuel_grid(&self) -> AsciiGrid {
        self.grid_of(self.fuel.iter().map(|f| f.code() as f64).collect())
    }

    pub fn slope_grid(&self) -> AsciiGrid {
        self.grid_of(self.slope.clone())
    }

    pub fn elevation_grid(&self) -> AsciiGrid {
        self.grid_of(self.elevation.clone())
    }

    fn grid_of(&self, values: Vec<f64>) -> AsciiGrid {
        AsciiGrid {
            ncols: self.ncols,
            nrows: self.nrows,
            origin: self.origin,
            cell_size: self.cell_size,
            nodata: NODATA_DEFAULT,
            values,
        }
    }

    /// Writes `fuel.asc`, `slope.asc` and `elevation.asc` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, grid, int) in [
            ("fuel.asc", self.fuel_grid(), true),
            ("slope.asc", self.slope_grid(), false),
            ("elevation.asc", self.elevation_grid(), false),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, grid.to_text(int)).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Reads a fuel grid and its optional parallel slope/elevation grids.
pub fn load_landscape(fuel_path: &Path, slope_path: Option<&Path>, elevation_path: Option<&Path>) -> Result<Landscape> {
    let fuel = AsciiGrid::read(fuel_path)?;
    let slope = slope_path.map(AsciiGrid::read).transpose()?;
    let elevation = elevation_path.map(AsciiGrid::read).transpose()?;
    Landscape::from_grids(&fuel, slope.as_ref(), elevation.as_ref())
}

/// Reads `fuel.asc` and, when present, `slope.asc` / `elevation.asc` from `dir`.
pub fn load_landscape_dir(dir: &Path) -> Result<Landscape> {
    let opt = |name: &str| {
        let p = dir.join(name);
        p.exists().then_some(p)
    };
    load_landscape(
        &dir.join("fuel.asc"),
        opt("slope.asc").as_deref(),
        opt("elevation.asc").as_deref(),
    )
}

/// Parameters for a synthetic wildland-urban landscape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLandscape {
    pub width_m: f64,
    pub height_m: f64,
    pub cell_size: f64,
    /// Fraction of the height (from the top) occupied by the nonburnable urban core.
    pub urban_core_fraction: f64,
    /// Width of the urban_wui band below the core, m.
    pub wui_band_m: f64,
    pub seed: u64,
}

impl Default for SyntheticLandscape {
    fn default() -> Self {
        SyntheticLandscape {
            width_m: 6000.0,
            height_m: 6000.0,
            cell_size: 30.0,
            urban_core_fraction: 0.38,
            wui_band_m: 240.0,
            seed: 7,
        }
    }
}

/// Smooth value noise in [0, 1] on a lattice of spacing `scale` cells.
fn value_noise(root: SeedRoot, salt: u64, ncols: usize, nrows: usize, scale: f64) -> Vec<f64> {
    let lc = (ncols as f64 / scale).ceil() as usize + 2;
    let lr = (nrows as f64 / scale).ceil() as usize + 2;
    let mut rng = root.stream("landscape", salt, 0);
    let lattice: Vec<f64> = (0..lc * lr).map(|_| rng.gen::<f64>()).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(ncols * nrows);
    for r in 0..nrows {
        for c in 0..ncols {
            let (x, y) = (c as f64 / scale, r as f64 / scale);
            let (i, j) = (x.floor() as usize, y.floor() as usize);
            let (tx, ty) = (smooth(x.fract()), smooth(y.fract()));
            let at = |ii: usize, jj: usize| lattice[jj * lc + ii];
            let top = at(i, j) * (1.0 - tx) + at(i + 1, j) * tx;
            let bottom = at(i, j + 1) * (1.0 - tx) + at(i + 1, j + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// Deterministic WUI landscape: a nonburnable urban core along the top edge,
/// an urban_wui band below it, and wildland (grass with shrub and timber patches)
/// over rolling terrain further out.
pub fn synthetic_landscape(cfg: &SyntheticLandscape) -> Landscape {
    let ncols = (cfg.width_m / cfg.cell_size).round() as usize;
    let nrows = (cfg.height_m / cfg.cell_size).round() as usize;
    let root = SeedRoot(cfg.seed);
    let patches = value_noise(root, 1, ncols, nrows, 25.0);
    let relief = value_noise(root, 2, ncols, nrows, 40.0);
    let core_rows = (nrows as f64 * cfg.urban_core_fraction).round() as usize;
    let band_rows = (cfg.wui_band_m / cfg.cell_size).round() as usize;

    let mut land = Landscape::uniform(ncols, nrows, cfg.cell_size, FuelClass::Grass);
    for r in 0..nrows {
        for c in 0..ncols {
            let i = land.index(c, r);
            land.fuel[i] = if r < core_rows {
                FuelClass::Nonburnable
            } else if r < core_rows + band_rows {
                FuelClass::UrbanWui
            } else {
                match patches[i] {
                    p if p > 0.72 => FuelClass::Timber,
                    p if p > 0.58 => FuelClass::Shrub,
                    _ => FuelClass::Grass,
                }
            };
            land.elevation[i] = 300.0 + 250.0 * relief[i] * (r as f64 / nrows as f64);
        }
    }
    for r in 0..nrows {
        for c in 0..ncols {
            let e = |cc: usize, rr: usize| land.elevation[land.index(cc, rr)];
            let (cl, cr) = (c.saturating_sub(1), (c + 1).min(ncols - 1));
            let (ru, rd) = (r.saturating_sub(1), (r + 1).min(nrows - 1));
            let dzdx = (e(cr, r) - e(cl, r)) / ((cr - cl).max(1) as f64 * cfg.cell_size);
            let dzdy = (e(c, rd) - e(c, ru)) / ((rd - ru).max(1) as f64 * cfg.cell_size);
            let i = land.index(c, r);
            land.slope[i] = dzdx.hypot(dzdy);
        }
    }
    land
}

// ---------------------------------------------------------------------------
// Fuel parameters
// ---------------------------------------------------------------------------

/// Spread and energy coefficients of one fuel class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuelModel {
    /// No-wind, no-slope rate of spread, m/min.
    pub base_ros: f64,
    pub wind_c: f64,
    pub wind_b: f64,
    /// Heat release per unit area, kJ/m².
    pub heat_per_area: f64,
    /// Flaming duration, min.
    pub residence_time: f64,
}

const FUELS_CSV: &str = include_str!("../data/fuels.csv");
const MOISTURE_CSV: &str = include_str!("../data/moisture.csv");

#[derive(Deserialize)]
struct FuelRow {
    fuel: String,
    code: i64,
    r0_m_min: f64,
    wind_c: f64,
    wind_b: f64,
    heat_per_area_kj_m2: f64,
    residence_min: f64,
}

#[derive(Deserialize)]
struct MoistureRow {
    rh_pct: f64,
    factor: f64,
}

/// Relative-humidity damping lookup, linearly interpolated between rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoistureTable {
    points: Vec<(f64, f64)>,
}

impl MoistureTable {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.is_empty() {
            return Err(Error::config("moisture table is empty"));
        }
        if points.iter().any(|&(_, m)| !(m > 0.0 && m <= 1.0)) {
            return Err(Error::config("moisture damping factors must lie in (0, 1]"));
        }
        Ok(MoistureTable { points })
    }

    /// Constant damping, mainly for tests.
    pub fn constant(m: f64) -> Result<Self> {
        Self::new(vec![(0.0, m)])
    }

    pub fn damping(&self, rh: f64) -> f64 {
        let pts = &self.points;
        if rh <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if rh <= x1 {
                return y0 + (y1 - y0) * (rh - x0) / (x1 - x0);
            }
        }
        pts[pts.len() - 1].1
    }
}

/// Per-class fuel models plus the humidity damping table.
#[derive(Debug, Clone, PartialEq)]
pub struct FuelParams {
    models: HashMap<FuelClass, FuelModel>,
    pub moisture: MoistureTable,
}

fn read_csv_rows<T: for<'de> Deserialize<'de>>(text: &str, path: &str) -> Result<Vec<T>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Parse {
                path: path.to_string(),
                line: i + 2,
                msg: e.to_string(),
            })
        })
        .collect()
}

impl FuelParams {
    pub fn new(models: HashMap<FuelClass, FuelModel>, moisture: MoistureTable) -> Result<Self> {
        for class in FuelClass::ALL {
            let m = models
                .get(&class)
                .ok_or_else(|| Error::config(format!("fuel table has no entry for {}", class.name())))?;
            if !(m.base_ros >= 0.0 && m.heat_per_area >= 0.0 && m.residence_time >= 0.0) {
                return Err(Error::config(format!("fuel {} has negative parameters", class.name())));
            }
            if class == FuelClass::Nonburnable && m.base_ros != 0.0 {
                return Err(Error::config("nonburnable fuel must have zero base ROS"));
            }
        }
        Ok(FuelParams { models, moisture })
    }

    pub fn parse(fuels_csv: &str, moisture_csv: &str, path: &str) -> Result<Self> {
        let mut models = HashMap::new();
        for row in read_csv_rows::<FuelRow>(fuels_csv, path)? {
            let class = FuelClass::from_code(row.code).ok_or(Error::UnknownFuelCode {
                code: row.code,
                row: 0,
                col: 0,
            })?;
            if class.name() != row.fuel {
                return Err(Error::config(format!(
                    "fuel code {} is {}, not {}",
                    row.code,
                    class.name(),
                    row.fuel
                )));
            }
            models.insert(
                class,
                FuelModel {
                    base_ros: row.r0_m_min,
                    wind_c: row.wind_c,
                    wind_b: row.wind_b,
                    heat_per_area: row.heat_per_area_kj_m2,
                    residence_time: row.residence_min,
                },
            );
        }
        let moisture = read_csv_rows::<MoistureRow>(moisture_csv, "moisture")?
            .into_iter()
            .map(|r| (r.rh_pct, r.factor))
            .collect();
        Self::new(models, MoistureTable::new(moisture)?)
    }

    /// Reads fuel and moisture tables, falling back to the bundled ones.
    pub fn load(fuels: Option<&Path>, moisture: Option<&Path>) -> Result<Self> {
        let (f, name) = match fuels {
            Some(p) => (
                std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
                p.display().to_string(),
            ),
            None => (FUELS_CSV.to_string(), "bundled:fuels.csv".to_string()),
        };
        let m = match moisture {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => MOISTURE_CSV.to_string(),
        };
        Self::parse(&f, &m, &name)
    }

    pub fn model(&self, class: FuelClass) -> &FuelModel {
        &self.models[&class]
    }

    pub fn with_model(mut self, class: FuelClass, model: FuelModel) -> Self {
        self.models.insert(class, model);
        self
    }

    pub fn with_moisture(mut self, moisture: MoistureTable) -> Self {
        self.moisture = moisture;
        self
    }
}

impl Default for FuelParams {
    fn default() -> Self {
        Self::parse(FUELS_CSV, MOISTURE_CSV, "bundled:fuels.csv").expect("bundled fuel table is valid")
    }
}

// ---------------------------------------------------------------------------
// Weather
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherSample {
    /// m/s
    pub wind_speed: f64,
    /// Direction the wind blows from, degrees clockwise from north.
    pub wind_direction: f64,
    /// %
    pub relative_humidity: f64,
    /// °C
    pub temperature: f64,
    /// mm over the step
    pub precipitation: f64,
}

impl WeatherSample {
    pub fn calm() -> Self {
        WeatherSample {
            wind_speed: 0.0,
            wind_direction: 0.0,
            relative_humidity: 40.0,
            temperature: 25.0,
            precipitation: 0.0,
        }
    }

    /// Compass bearing the wind blows toward.
    pub fn downwind_bearing(&self) -> f64 {
        (self.wind_direction + 180.0).rem_euclid(360.0)
    }

    fn validate(&self) -> Result<()> {
        if !(self.wind_speed >= 0.0 && self.wind_speed.is_finite()) {
            return Err(Error::config("wind_speed must be finite and >= 0"));
        }
        if !(0.0..=100.0).contains(&self.relative_humidity) {
            return Err(Error::config("relative humidity must lie in [0, 100]"));
        }
        if !(self.wind_direction.is_finite() && self.temperature.is_finite() && self.precipitation >= 0.0) {
            return Err(Error::config("weather values must be finite"));
        }
        Ok(())
    }
}

/// Fixed-step weather with zero-order hold between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    /// min
    pub timestep: f64,
    pub samples: Vec<WeatherSample>,
}

#[derive(Debug, Deserialize, Serialize)]
struct WeatherRow {
    t_min: f64,
    wind_ms: f64,
    dir_deg: f64,
    rh_pct: f64,
    temp_c: f64,
    precip_mm: f64,
}

impl WeatherSeries {
    pub fn new(timestep: f64, samples: Vec<WeatherSample>) -> Result<Self> {
        if !(timestep > 0.0) || samples.is_empty() {
            return Err(Error::config("weather needs a positive timestep and samples"));
        }
        samples.iter().try_for_each(WeatherSample::validate)?;
        Ok(WeatherSeries { timestep, samples })
    }

    pub fn constant(sample: WeatherSample, steps: usize, timestep: f64) -> Result<Self> {
        Self::new(timestep, vec![sample; steps])
    }

    /// End of the last step, min.
    pub fn horizon(&self) -> f64 {
        self.samples.len() as f64 * self.timestep
    }

    pub fn parse_csv(text: &str, path: &str) -> Result<Self> {
        let rows: Vec<WeatherRow> = read_csv_rows(text, path)?;
        if rows.len() < 2 {
            let step = 30.0;
            if rows.first().is_some_and(|r| r.t_min != 0.0) {
                return Err(Error::Parse {
                    path: path.into(),
                    line: 2,
                    msg: "first row must be at t_min = 0".into(),
                });
            }
            let samples = rows.iter().map(WeatherRow::sample).collect();
            return Self::new(step, samples);
        }
        let step = rows[1].t_min - rows[0].t_min;
        for (i, r) in rows.iter().enumerate() {
            let expect = i as f64 * step;
            if (r.t_min - expect).abs() > 1e-9 {
                return Err(Error::Parse {
                    path: path.into(),
                    line: i + 2,
                    msg: format!("t_min {} breaks the fixed {step}-min cadence from 0", r.t_min),
                });
            }
        }
        Self::new(step, rows.iter().map(WeatherRow::sample).collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for (i, s) in self.samples.iter().enumerate() {
            w.serialize(WeatherRow {
                t_min: i as f64 * self.timestep,
                wind_ms: s.wind_speed,
                dir_deg: s.wind_direction,
                rh_pct: s.relative_humidity,
                temp_c: s.temperature,
                precip_mm: s.precipitation,
            })?;
        }
        let bytes = w.into_inner().map_err(|e| Error::config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

impl WeatherRow {
    fn sample(&self) -> WeatherSample {
        WeatherSample {
            wind_speed: self.wind_ms,
            wind_direction: self.dir_deg,
            relative_humidity: self.rh_pct,
            temperature: self.temp_c,
            precipitation: self.precip_mm,
        }
    }
}

/// Sample of the step containing `t` (min). `t == horizon` returns the last sample.
pub fn weather_at(series: &WeatherSeries, t: f64) -> Result<WeatherSample> {
    let horizon = series.horizon();
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::BeyondHorizon { t, horizon });
    }
    let idx = ((t / series.timestep).floor() as usize).min(series.samples.len() - 1);
    Ok(series.samples[idx])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedFlagThresholds {
    /// m/s
    pub wind_speed_min: f64,
    /// %
    pub humidity_max: f64,
}

/// Both wind and humidity thresholds met (inclusive).
pub fn red_flag(sample: &WeatherSample, thresholds: &RedFlagThresholds) -> bool {
    sample.wind_speed >= thresholds.wind_speed_min && sample.relative_humidity <= thresholds.humidity_max
}
