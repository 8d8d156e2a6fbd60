//! Small hand-built networks for examples and tests.
//!
//! [`NetBuilder`] assembles straight-line branches between buses and adds a
//! pole at each end of an overhead distribution line, reusing the pole (keyed
//! by bus id) when several sections meet at one bus.

use crate::error::Result;
use crate::network::{
    Branch, BranchKind, Bus, BusId, Criticality, GenKind, Generator, GridNetwork, Hardening, Level, Load, NetworkData,
    Pole, PoleMaterial, SCHEMA_VERSION,
};

#[derive(Debug, Clone)]
pub struct NetBuilder {
    data: NetworkData,
}

impl Default for NetBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl NetBuilder {
    pub fn new() -> Self {
        NetBuilder {
            data: NetworkData {
                schema_version: SCHEMA_VERSION,
                buses: Vec::new(),
                branches: Vec::new(),
                poles: Vec::new(),
                generators: Vec::new(),
                loads: Vec::new(),
            },
        }
    }

    fn bus(mut self, id: BusId, xy: [f64; 2], level: Level, feeder: Option<u32>) -> Self {
        self.data.buses.push(Bus {
            id,
            level,
            coordinates: xy,
            nominal_voltage: if level == Level::Tx { 138.0 } else { 12.66 },
            feeder,
        });
        self
    }

    pub fn tx_bus(self, id: BusId, xy: [f64; 2]) -> Self {
        self.bus(id, xy, Level::Tx, None)
    }

    pub fn dx_bus(self, id: BusId, xy: [f64; 2], feeder: u32) -> Self {
        self.bus(id, xy, Level::Dx, Some(feeder))
    }

    fn coords(&self, id: BusId) -> [f64; 2] {
        self.data
            .buses
            .iter()
            .find(|b| b.id == id)
            .unwrap_or_else(|| panic!("bus {id} must be added before branches touching it"))
            .coordinates
    }

    fn branch(mut self, id: u32, from: BusId, to: BusId, kind: BranchKind, x: f64, rating: f64) -> Self {
        let geometry = vec![self.coords(from), self.coords(to)];
        self.data.branches.push(Branch {
            id,
            from_bus: from,
            to_bus: to,
            kind,
            geometry,
            reactance: x,
            thermal_rating: rating,
            spans: Vec::new(),
            hardening_level: Hardening::Standard,
            vegetation_density: 1.0,
            switchable: kind != BranchKind::Transformer,
        });
        self
    }

    /// Overhead line without poles (transmission).
    pub fn line(self, id: u32, from: BusId, to: BusId, x: f64, rating: f64) -> Self {
        self.branch(id, from, to, BranchKind::LineOverhead, x, rating)
    }

    pub fn underground(self, id: u32, from: BusId, to: BusId, x: f64, rating: f64) -> Self {
        self.branch(id, from, to, BranchKind::LineUnderground, x, rating)
    }

    pub fn transformer(self, id: u32, tx: BusId, dx: BusId, x: f64, rating: f64) -> Self {
        self.branch(id, tx, dx, BranchKind::Transformer, x, rating)
    }

    /// Overhead distribution section carried by wood poles at both ends.
    pub fn dx_line(mut self, id: u32, from: BusId, to: BusId, x: f64, rating: f64) -> Self {
        for bus in [from, to] {
            let location = self.coords(bus);
            match self.data.poles.iter_mut().find(|p| p.id == bus) {
                Some(p) => p.supported_branches.push(id),
                None => self.data.poles.push(Pole {
                    id: bus,
                    location,
                    material: PoleMaterial::Wood,
                    supported_branches: vec![id],
                    hardening_level: Hardening::Standard,
                }),
            }
        }
        let mut b = self.branch(id, from, to, BranchKind::LineOverhead, x, rating);
        b.data.branches.last_mut().unwrap().spans = vec![from, to];
        b
    }

    fn generator(mut self, id: u32, bus: BusId, p_max: f64, cost: f64, kind: GenKind) -> Self {
        self.data.generators.push(Generator {
            id,
            bus,
            p_max,
            p_min: 0.0,
            kind,
            marginal_cost: cost,
        });
        self
    }

    pub fn bulk(self, id: u32, bus: BusId, p_max: f64, cost: f64) -> Self {
        self.generator(id, bus, p_max, cost, GenKind::Bulk)
    }

    pub fn der(self, id: u32, bus: BusId, p_max: f64) -> Self {
        self.generator(id, bus, p_max, 0.0, GenKind::Der)
    }

    pub fn load(mut self, id: u32, bus: BusId, mw: f64, critical: bool) -> Self {
        self.data.loads.push(Load {
            id,
            bus,
            demand: mw,
            criticality: if critical {
                Criticality::Critical
            } else {
                Criticality::Standard
            },
            customers: (mw * 100.0).round() as u32,
        });
        self
    }

    /// Mutable access for anything the shortcuts above do not cover.
    pub fn data_mut(&mut self) -> &mut NetworkData {
        &mut self.data
    }

    pub fn build(self) -> Result<GridNetwork> {
        GridNetwork::new(self.data)
    }
}

/// Generator at bus 1, 100 MW load at bus 2, one line.
pub fn two_bus() -> GridNetwork {
    NetBuilder::new()
        .tx_bus(1, [1000.0, 1000.0])
        .tx_bus(2, [2000.0, 1000.0])
        .line(1, 1, 2, 0.1, 500.0)
        .bulk(1, 1, 200.0, 10.0)
        .load(2, 2, 100.0, false)
        .build()
        .expect("two-bus fixture is valid")
}

/// Equal-reactance triangle with 90 MW generated at bus 1 and consumed at bus 3.
///
/// Branches: 1 is 1-2, 2 is 2-3, 3 is 1-3.
pub fn triangle() -> GridNetwork {
    NetBuilder::new()
        .tx_bus(1, [1000.0, 1000.0])
        .tx_bus(2, [2000.0, 2000.0])
        .tx_bus(3, [3000.0, 1000.0])
        .line(1, 1, 2, 0.1, 500.0)
        .line(2, 2, 3, 0.1, 500.0)
        .line(3, 1, 3, 0.1, 500.0)
        .bulk(1, 1, 200.0, 10.0)
        .load(3, 3, 90.0, false)
        .build()
        .expect("triangle fixture is valid")
}

/// Two parallel 60 MW lines feeding a 100 MW load.
pub fn parallel_lines() -> GridNetwork {
    let mut b = NetBuilder::new()
        .tx_bus(1, [1000.0, 1000.0])
        .tx_bus(2, [2000.0, 1000.0])
        .line(1, 1, 2, 0.1, 60.0)
        .line(2, 1, 2, 0.1, 60.0)
        .bulk(1, 1, 200.0, 10.0)
        .load(2, 2, 100.0, false);
    // Offset the second circuit so the two lines do not coincide.
    let second = &mut b.data_mut().branches[1];
    second.geometry = vec![[1000.0, 1000.0], [1500.0, 1100.0], [2000.0, 1000.0]];
    b.build().expect("parallel-lines fixture is valid")
}

/// Five-bus Tx/Dx system.
///
/// Tx buses 1 and 2 (bulk generator at 1) joined by line 1; transformer 2
/// feeds Dx bus 3; overhead sections 3 (3-4) and 4 (4-5) run south along
/// x = 3000 m. Bus 4 carries a 0.5 MW critical load and bus 5 a 1.0 MW
/// standard load. Feeder number 1.
pub fn micro_feeder() -> GridNetwork {
    micro_feeder_builder().build().expect("micro feeder is valid")
}

pub fn micro_feeder_builder() -> NetBuilder {
    NetBuilder::new()
        .tx_bus(1, [3000.0, 5500.0])
        .tx_bus(2, [3000.0, 4500.0])
        .dx_bus(3, [3000.0, 4000.0], 1)
        .dx_bus(4, [3000.0, 3000.0], 1)
        .dx_bus(5, [3000.0, 2000.0], 1)
        .line(1, 1, 2, 0.05, 50.0)
        .transformer(2, 2, 3, 0.08, 10.0)
        .dx_line(3, 3, 4, 0.02, 8.0)
        .dx_line(4, 4, 5, 0.02, 8.0)
        .bulk(1, 1, 20.0, 10.0)
        .load(4, 4, 0.5, true)
        .load(5, 5, 1.0, false)
}
