//! Planning actions (hardening, vegetation management, DER placement) and
//! operational policies (PSPS, local automatic shutoff, microgrid islanding).

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::ExposureRecord;
use crate::landscape::{red_flag, RedFlagThresholds, WeatherSample};
use crate::network::{island_indices, BusId, Criticality, GenKind, Generator, GridNetwork, Hardening, Level};
use crate::state::{ComponentId, ComponentState};

/// Multiplier applied to the vegetation density of managed branches.
pub const VEGETATION_MANAGED_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerAddition {
    pub bus: BusId,
    /// MW
    pub p_max: f64,
}

/// Pre-event investments. Every listed item counts as one action against `budget`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationPlan {
    #[serde(default)]
    pub hardened_branches: Vec<u32>,
    #[serde(default)]
    pub hardened_poles: Vec<u32>,
    #[serde(default)]
    pub vegetation_managed: Vec<u32>,
    #[serde(default)]
    pub der_additions: Vec<DerAddition>,
    #[serde(default)]
    pub budget: Option<usize>,
}

impl MitigationPlan {
    pub fn actions(&self) -> usize {
        self.hardened_branches.len()
            + self.hardened_poles.len()
            + self.vegetation_managed.len()
            + self.der_additions.len()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Returns a modified copy of `net` with the plan applied.
pub fn apply_plan(net: &GridNetwork, plan: &MitigationPlan) -> Result<GridNetwork> {
    if let Some(budget) = plan.budget {
        if plan.actions() > budget {
            return Err(Error::BudgetExceeded {
                used: plan.actions(),
                budget,
            });
        }
    }
    for &b in plan.hardened_branches.iter().chain(&plan.vegetation_managed) {
        net.branch_index(b)?;
    }
    for &p in &plan.hardened_poles {
        net.pole_index(p)?;
    }
    for d in &plan.der_additions {
        let bi = net.bus_index(d.bus)?;
        if net.buses[bi].level != Level::Dx {
            return Err(Error::config(format!("DER at bus {} must be on a Dx bus", d.bus)));
        }
        if !(d.p_max > 0.0 && d.p_max.is_finite()) {
            return Err(Error::config(format!("DER at bus {} needs p_max > 0", d.bus)));
        }
    }
    if plan.actions() == 0 {
        return Ok(net.clone());
    }
    net.with_changes(|data| {
        for br in data.branches.iter_mut() {
            if plan.hardened_branches.contains(&br.id) {
                br.hardening_level = Hardening::Hardened;
            }
            if plan.vegetation_managed.contains(&br.id) {
                br.vegetation_density *= VEGETATION_MANAGED_FACTOR;
            }
        }
        for p in data.poles.iter_mut() {
            if plan.hardened_poles.contains(&p.id) {
                p.hardening_level = Hardening::Hardened;
            }
        }
        let first_id = data.generators.iter().map(|g| g.id).max().unwrap_or(0) + 1;
        for (id, d) in (first_id..).zip(&plan.der_additions) {
            data.generators.push(Generator {
                id,
                bus: d.bus,
                p_max: d.p_max,
                p_min: 0.0,
                kind: GenKind::Der,
                marginal_cost: 0.0,
            });
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PspsPolicy {
    pub thresholds: RedFlagThresholds,
    /// Branch ids de-energized under red-flag conditions.
    pub zone: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoShutoffPolicy {
    /// m
    pub trigger_distance: f64,
    /// m/s
    pub trigger_wind: f64,
    /// Branches with a local trigger; all overhead lines when absent.
    #[serde(default)]
    pub branches: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IslandingPolicy {
    /// Feeders allowed to run as DER-supplied microgrids.
    #[serde(default)]
    pub feeders: Vec<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperationalPolicy {
    #[serde(default)]
    pub psps: Option<PspsPolicy>,
    #[serde(default)]
    pub auto_shutoff: Option<AutoShutoffPolicy>,
    #[serde(default)]
    pub islanding: IslandingPolicy,
}

impl OperationalPolicy {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self, net: &GridNetwork) -> Result<()> {
        if let Some(p) = &self.psps {
            let t = &p.thresholds;
            if !(t.wind_speed_min.is_finite() && t.humidity_max.is_finite()) {
                return Err(Error::config("PSPS thresholds must be finite"));
            }
            for &b in &p.zone {
                net.branch_index(b)?;
            }
        }
        if let Some(a) = &self.auto_shutoff {
            if !(a.trigger_distance >= 0.0 && a.trigger_distance.is_finite() && a.trigger_wind.is_finite()) {
                return Err(Error::config(
                    "automatic shutoff triggers must be finite, distance >= 0",
                ));
            }
            for &b in a.branches.iter().flatten() {
                net.branch_index(b)?;
            }
        }
        let known: BTreeSet<u32> = net.buses.iter().filter_map(|b| b.feeder).collect();
        for f in &self.islanding.feeders {
            if !known.contains(f) {
                return Err(Error::config(format!("islanding policy names unknown feeder {f}")));
            }
        }
        Ok(())
    }

    /// Search radius the exposure index needs for the shutoff trigger.
    pub fn trigger_radius(&self) -> f64 {
        self.auto_shutoff.as_ref().map_or(0.0, |a| a.trigger_distance)
    }
}

/// Every overhead branch whose ends are both distribution buses.
pub fn overhead_dx_branches(net: &GridNetwork) -> Vec<u32> {
    (0..net.branches.len())
        .filter(|&bi| {
            let (f, t) = net.branch_ends(bi);
            net.branches[bi].is_overhead() && net.buses[f].level == Level::Dx && net.buses[t].level == Level::Dx
        })
        .map(|bi| net.branches[bi].id)
        .collect()
}

/// Zone branches to de-energize: the whole zone under red-flag weather, else none.
pub fn psps_decision(policy: &OperationalPolicy, weather: &WeatherSample) -> BTreeSet<u32> {
    match &policy.psps {
        Some(p) if red_flag(weather, &p.thresholds) => p.zone.iter().copied().collect(),
        _ => BTreeSet::new(),
    }
}

/// Branches whose local trigger fires: exposed, fire front within the trigger
/// distance, or wind at or above the trigger speed.
pub fn auto_shutoff(
    net: &GridNetwork,
    policy: &OperationalPolicy,
    exposures: &[ExposureRecord],
    weather: &WeatherSample,
) -> BTreeSet<u32> {
    let Some(a) = &policy.auto_shutoff else {
        return BTreeSet::new();
    };
    let in_scope = |id: u32| match &a.branches {
        Some(list) => list.contains(&id),
        None => net
            .branch_index(id)
            .map(|bi| net.branches[bi].is_overhead())
            .unwrap_or(false),
    };
    let windy = weather.wind_speed >= a.trigger_wind;
    exposures
        .iter()
        .filter_map(|r| match r.component {
            ComponentId::Branch(id) if in_scope(id) => Some((id, r)),
            _ => None,
        })
        .filter(|(_, r)| windy || r.is_exposed() || r.distance_to_front <= a.trigger_distance)
        .map(|(id, _)| id)
        .collect()
}

/// Sets DER commitment for the current topology.
///
/// A DER is committed when its island also holds available bulk generation, or
/// when the island lies entirely on islanding-permitted feeders and its DER
/// capacity covers the island's critical demand. Otherwise anti-islanding
/// protection keeps it offline. Returns the feeders running as microgrids.
pub fn form_islands(net: &GridNetwork, state: &mut ComponentState, policy: &OperationalPolicy) -> BTreeSet<u32> {
    let mut microgrids = BTreeSet::new();
    for island in island_indices(net, state) {
        let ders: Vec<usize> = island
            .iter()
            .flat_map(|&b| net.generators_at(b).iter().copied())
            .filter(|&gi| net.generators[gi].kind == GenKind::Der)
            .collect();
        if ders.is_empty() {
            continue;
        }
        let bulk = island.iter().any(|&b| {
            net.generators_at(b)
                .iter()
                .any(|&gi| net.generators[gi].kind == GenKind::Bulk && state.generators[gi].in_service)
        });
        let commit = if bulk {
            true
        } else {
            let permitted = island.iter().all(|&b| {
                net.buses[b]
                    .feeder
                    .is_some_and(|f| policy.islanding.feeders.contains(&f))
            });
            let capacity: f64 = ders
                .iter()
                .filter(|&&gi| state.generators[gi].in_service)
                .map(|&gi| net.generators[gi].p_max)
                .sum();
            let critical: f64 = island
                .iter()
                .flat_map(|&b| net.loads_at(b).iter())
                .filter(|&&li| net.loads[li].criticality == Criticality::Critical)
                .map(|&li| net.loads[li].demand)
                .sum();
            let ok = permitted && capacity > 0.0 && capacity >= critical;
            if ok {
                microgrids.extend(island.iter().filter_map(|&b| net.buses[b].feeder));
            }
            ok
        };
        for gi in ders {
            state.generators[gi].committed = commit;
        }
    }
    microgrids
}
