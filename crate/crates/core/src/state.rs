//! Per-run status of every network component.

use serde::{Deserialize, Serialize};

use crate::network::{BusId, GridNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Damage {
    #[default]
    Intact,
    Derated,
    Failed,
}

/// Identifies an exposed or repairable asset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentId {
    Branch(u32),
    Pole(u32),
}

impl ComponentId {
    /// Stable numeric key for random substreams.
    pub fn stream_key(self) -> u64 {
        match self {
            ComponentId::Branch(id) => id as u64,
            ComponentId::Pole(id) => (1u64 << 32) | id as u64,
        }
    }
}

impl std::fmt::Display for ComponentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ComponentId::Branch(id) => write!(f, "branch:{id}"),
            ComponentId::Pole(id) => write!(f, "pole:{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchStatus {
    pub damage: Damage,
    /// Opened by overload protection.
    pub tripped: bool,
    /// Opened by an operational policy (PSPS, automatic shutoff).
    pub switched_off: bool,
    pub energized: bool,
    /// °C
    pub conductor_temp: f64,
    /// |flow| from the latest power-flow solution, MW.
    pub loading: f64,
}

impl BranchStatus {
    /// Not failed and not tripped.
    pub fn in_service(&self) -> bool {
        self.damage != Damage::Failed && !self.tripped
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleStatus {
    pub damage: Damage,
    pub energized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenStatus {
    pub in_service: bool,
    /// Cleared by the islanding rule when a DER may not serve its island.
    pub committed: bool,
}

/// Availability and damage state of every component, index-aligned with the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentState {
    pub branches: Vec<BranchStatus>,
    pub poles: Vec<PoleStatus>,
    pub generators: Vec<GenStatus>,
    pub bus_energized: Vec<bool>,
}

/// Ambient conductor temperature used before any weather is applied.
pub const DEFAULT_CONDUCTOR_TEMP: f64 = 25.0;

impl ComponentState {
    /// Everything intact, closed and energized.
    pub fn new(net: &GridNetwork) -> Self {
        ComponentState {
            branches: vec![
                BranchStatus {
                    damage: Damage::Intact,
                    tripped: false,
                    switched_off: false,
                    energized: true,
                    conductor_temp: DEFAULT_CONDUCTOR_TEMP,
                    loading: 0.0,
                };
                net.branches.len()
            ],
            poles: vec![
                PoleStatus {
                    damage: Damage::Intact,
                    energized: true,
                };
                net.poles.len()
            ],
            generators: vec![
                GenStatus {
                    in_service: true,
                    committed: true,
                };
                net.generators.len()
            ],
            bus_energized: vec![true; net.buses.len()],
        }
    }

    /// Branch conducts: in service, not switched off, and no supporting pole failed.
    pub fn branch_closed(&self, net: &GridNetwork, bi: usize) -> bool {
        let b = &self.branches[bi];
        b.in_service()
            && !b.switched_off
            && net
                .branch_poles(bi)
                .iter()
                .all(|&pi| self.poles[pi].damage != Damage::Failed)
    }

    pub fn fail_branch(&mut self, bi: usize) {
        self.branches[bi].damage = Damage::Failed;
        self.branches[bi].energized = false;
    }

    pub fn fail_pole(&mut self, pi: usize) {
        self.poles[pi].damage = Damage::Failed;
        self.poles[pi].energized = false;
    }

    pub fn damage_of(&self, net: &GridNetwork, id: ComponentId) -> Option<Damage> {
        match id {
            ComponentId::Branch(b) => net.branch_index(b).ok().map(|i| self.branches[i].damage),
            ComponentId::Pole(p) => net.pole_index(p).ok().map(|i| self.poles[i].damage),
        }
    }

    pub fn is_energized(&self, net: &GridNetwork, id: ComponentId) -> bool {
        match id {
            ComponentId::Branch(b) => net.branch_index(b).map(|i| self.branches[i].energized).unwrap_or(false),
            ComponentId::Pole(p) => net.pole_index(p).map(|i| self.poles[i].energized).unwrap_or(false),
        }
    }

    /// Generator may inject power.
    pub fn generator_available(&self, gi: usize) -> bool {
        let g = &self.generators[gi];
        g.in_service && g.committed
    }

    /// Recomputes branch and pole energization from the bus flags.
    pub fn refresh_equipment_energization(&mut self, net: &GridNetwork) {
        for bi in 0..net.branches.len() {
            let (f, t) = net.branch_ends(bi);
            let closed = self.branch_closed(net, bi);
            self.branches[bi].energized = closed && (self.bus_energized[f] || self.bus_energized[t]);
        }
        for pi in 0..net.poles.len() {
            let live = self.poles[pi].damage != Damage::Failed
                && net.pole_branches(pi).iter().any(|&bi| self.branches[bi].energized);
            self.poles[pi].energized = live;
        }
    }

    pub fn energized_buses(&self, net: &GridNetwork) -> Vec<BusId> {
        net.buses
            .iter()
            .zip(&self.bus_energized)
            .filter(|(_, &e)| e)
            .map(|(b, _)| b.id)
            .collect()
    }
}
