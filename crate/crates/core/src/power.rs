//! DC power flow with islanding, priority load shedding and overload cascades.
//!
//! Flows are solved in MW directly: with injections in MW and reactances in
//! per unit the angles come out scaled by the system base, which cancels in
//! the branch flow `(theta_f - theta_t) / x`.

use nalgebra::{DMatrix, DVector};
use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{island_labels, BusId, GridNetwork};
use crate::state::{ComponentId, ComponentState, Damage};

/// Overload tolerance in MW (1e-9 per unit on a 100 MVA base).
pub const FLOW_TOL_MW: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandSolution {
    /// Sorted bus ids.
    pub buses: Vec<BusId>,
    /// Angle reference; `None` when the island has no committed generation.
    pub slack: Option<BusId>,
    pub energized: bool,
    /// MW
    pub demand: f64,
    pub served: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSolution {
    pub islands: Vec<IslandSolution>,
    /// Island number per bus index.
    pub bus_island: Vec<usize>,
    /// MW per generator index.
    pub dispatch: Vec<f64>,
    /// Generators left committed after the minimum-output check.
    pub committed: Vec<bool>,
    /// MW per load index.
    pub served: Vec<f64>,
    pub shed: Vec<f64>,
    /// MW per branch index, positive from `from_bus` to `to_bus`; 0 when open.
    pub flows: Vec<f64>,
}

/// Splits `supply` over demands, serving higher weights first and sharing
/// pro-rata within the weight class where supply runs out.
pub fn priority_allocation(demands: &[f64], weights: &[f64], supply: f64) -> Vec<f64> {
    assert_eq!(demands.len(), weights.len());
    let mut served = vec![0.0; demands.len()];
    let mut classes: Vec<f64> = weights.to_vec();
    classes.sort_by(|a, b| b.total_cmp(a));
    classes.dedup();
    let mut remaining = supply.max(0.0);
    for w in classes {
        let members: Vec<usize> = (0..demands.len()).filter(|&i| weights[i] == w).collect();
        let total: f64 = members.iter().map(|&i| demands[i]).sum();
        if total <= remaining {
            for &i in &members {
                served[i] = demands[i];
            }
            remaining -= total;
        } else {
            if total > 0.0 {
                let frac = remaining / total;
                for &i in &members {
                    served[i] = demands[i] * frac;
                }
            }
            remaining = 0.0;
        }
    }
    served
}

/// DC power flow over every island of closed branches.
pub fn dc_power_flow(net: &GridNetwork, state: &ComponentState) -> Result<PowerSolution> {
    let (label, members) = island_labels(net, state);
    let mut sol = PowerSolution {
        islands: Vec::with_capacity(members.len()),
        bus_island: label.clone(),
        dispatch: vec![0.0; net.generators.len()],
        committed: vec![false; net.generators.len()],
        served: vec![0.0; net.loads.len()],
        shed: net.loads.iter().map(|l| l.demand).collect(),
        flows: vec![0.0; net.branches.len()],
    };
    let mut injection = vec![0.0; net.buses.len()];

    for island in &members {
        let loads: Vec<usize> = island.iter().flat_map(|&b| net.loads_at(b).iter().copied()).collect();
        let demand: f64 = loads.iter().map(|&li| net.loads[li].demand).sum();

        let mut gens: Vec<usize> = island
            .iter()
            .flat_map(|&b| net.generators_at(b).iter().copied())
            .filter(|&gi| state.generator_available(gi) && net.generators[gi].p_max > 0.0)
            .collect();
        let merit = |gi: &usize| (net.generators[*gi].marginal_cost, net.generators[*gi].id);
        gens.sort_by(|a, b| merit(a).partial_cmp(&merit(b)).unwrap());
        // Units whose minimum output exceeds the island demand go offline,
        // most expensive first.
        while gens.iter().map(|&gi| net.generators[gi].p_min).sum::<f64>() > demand {
            gens.pop();
        }
        let capacity: f64 = gens.iter().map(|&gi| net.generators[gi].p_max).sum();
        let supply = demand.min(capacity);

        let energized = !gens.is_empty();
        let slack = gens
            .iter()
            .copied()
            .max_by(|&a, &b| {
                let (ga, gb) = (&net.generators[a], &net.generators[b]);
                ga.p_max.total_cmp(&gb.p_max).then(gb.id.cmp(&ga.id))
            })
            .map(|gi| net.generators[gi].bus);

        let served = if energized {
            let demands: Vec<f64> = loads.iter().map(|&li| net.loads[li].demand).collect();
            let weights: Vec<f64> = loads.iter().map(|&li| net.loads[li].weight()).collect();
            priority_allocation(&demands, &weights, supply)
        } else {
            vec![0.0; loads.len()]
        };
        let served_total: f64 = served.iter().sum();
        for (&li, s) in loads.iter().zip(&served) {
            sol.served[li] = *s;
            sol.shed[li] = net.loads[li].demand - s;
            injection[net.bus_index(net.loads[li].bus)?] -= s;
        }

        let mut remaining = served_total - gens.iter().map(|&gi| net.generators[gi].p_min).sum::<f64>();
        for &gi in &gens {
            let g = &net.generators[gi];
            let extra = remaining.clamp(0.0, g.p_max - g.p_min);
            remaining -= extra;
            sol.dispatch[gi] = g.p_min + extra;
            sol.committed[gi] = true;
            injection[net.bus_index(g.bus)?] += sol.dispatch[gi];
        }

        if energized {
            let slack_idx = net.bus_index(slack.unwrap())?;
            solve_island_flows(net, state, island, slack_idx, &injection, &mut sol.flows)?;
        }
        sol.islands.push(IslandSolution {
            buses: island.iter().map(|&b| net.buses[b].id).collect(),
            slack,
            energized,
            demand,
            served: served_total,
        });
    }
    Ok(sol)
}

/// Solves `B' theta = P` for one island and writes branch flows.
///
/// Zero-reactance branches are contracted into super-nodes; their flows follow
/// from node balance over the tree they form.
fn solve_island_flows(
    net: &GridNetwork,
    state: &ComponentState,
    island: &[usize],
    slack: usize,
    injection: &[f64],
    flows: &mut [f64],
) -> Result<()> {
    let n = island.len();
    if n == 1 {
        return Ok(());
    }
    let mut local = vec![usize::MAX; net.buses.len()];
    for (k, &b) in island.iter().enumerate() {
        local[b] = k;
    }
    let mut branches: Vec<usize> = island
        .iter()
        .flat_map(|&b| net.adjacent(b).iter().map(|&(bi, _)| bi))
        .filter(|&bi| state.branch_closed(net, bi))
        .collect();
    branches.sort_unstable();
    branches.dedup();

    let singular = || Error::SingularIsland {
        bus: net.buses[island[0]].id,
    };
    let mut uf = UnionFind::<usize>::new(n);
    let mut zero_x = Vec::new();
    for &bi in &branches {
        if net.branches[bi].reactance == 0.0 {
            let (f, t) = net.branch_ends(bi);
            if !uf.union(local[f], local[t]) {
                return Err(singular());
            }
            zero_x.push(bi);
        }
    }
    // Super-node numbering with the slack's super-node removed from the system.
    let slack_root = uf.find(local[slack]);
    let mut node = vec![usize::MAX; n];
    let mut count = 0;
    for k in 0..n {
        let r = uf.find(k);
        if r != slack_root && node[r] == usize::MAX {
            node[r] = count;
            count += 1;
        }
    }
    let node_of = |bus: usize| -> Option<usize> {
        let r = uf.find(local[bus]);
        (r != slack_root).then(|| node[r])
    };

    let mut theta_of = vec![0.0; n];
    if count > 0 {
        let mut b = DMatrix::<f64>::zeros(count, count);
        let mut p = DVector::<f64>::zeros(count);
        for &bus in island {
            if let Some(i) = node_of(bus) {
                p[i] += injection[bus];
            }
        }
        for &bi in &branches {
            let x = net.branches[bi].reactance;
            if x == 0.0 {
                continue;
            }
            let (f, t) = net.branch_ends(bi);
            let (nf, nt) = (node_of(f), node_of(t));
            if uf.find(local[f]) == uf.find(local[t]) {
                continue;
            }
            let y = 1.0 / x;
            if let Some(i) = nf {
                b[(i, i)] += y;
            }
            if let Some(j) = nt {
                b[(j, j)] += y;
            }
            if let (Some(i), Some(j)) = (nf, nt) {
                b[(i, j)] -= y;
                b[(j, i)] -= y;
            }
        }
        let theta = b.cholesky().ok_or_else(singular)?.solve(&p);
        for &bus in island {
            if let Some(i) = node_of(bus) {
                theta_of[local[bus]] = theta[i];
            }
        }
    }

    let mut excess: Vec<f64> = island.iter().map(|&b| injection[b]).collect();
    for &bi in &branches {
        let x = net.branches[bi].reactance;
        if x == 0.0 {
            continue;
        }
        let (f, t) = net.branch_ends(bi);
        let flow = (theta_of[local[f]] - theta_of[local[t]]) / x;
        flows[bi] = flow;
        excess[local[f]] -= flow;
        excess[local[t]] += flow;
    }
    if !zero_x.is_empty() {
        tree_flows(net, &zero_x, &local, &mut excess, flows);
    }
    Ok(())
}

/// Flows on a forest of zero-reactance branches from the residual node excess.
fn tree_flows(net: &GridNetwork, edges: &[usize], local: &[usize], excess: &mut [f64], flows: &mut [f64]) {
    // Repeatedly peel leaves: a leaf's excess must leave through its only edge.
    let mut degree = vec![0usize; excess.len()];
    for &bi in edges {
        let (f, t) = net.branch_ends(bi);
        degree[local[f]] += 1;
        degree[local[t]] += 1;
    }
    let mut done = vec![false; net.branches.len()];
    let mut progress = true;
    while progress {
        progress = false;
        for &bi in edges {
            if done[bi] {
                continue;
            }
            let (f, t) = net.branch_ends(bi);
            let (lf, lt) = (local[f], local[t]);
            let (leaf, other, sign) = if degree[lf] == 1 {
                (lf, lt, 1.0)
            } else if degree[lt] == 1 {
                (lt, lf, -1.0)
            } else {
                continue;
            };
            flows[bi] = sign * excess[leaf];
            excess[other] += excess[leaf];
            excess[leaf] = 0.0;
            degree[lf] -= 1;
            degree[lt] -= 1;
            done[bi] = true;
            progress = true;
        }
    }
}

/// Copies a solution into the component state: bus and equipment energization
/// and branch loading.
pub fn apply_solution(net: &GridNetwork, state: &mut ComponentState, sol: &PowerSolution) {
    for (b, &isl) in sol.bus_island.iter().enumerate() {
        state.bus_energized[b] = sol.islands[isl].energized;
    }
    for (bi, f) in sol.flows.iter().enumerate() {
        state.branches[bi].loading = f.abs();
    }
    state.refresh_equipment_energization(net);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripCause {
    FireDamage,
    WindDamage,
    Overload,
    Mitigation,
}

impl TripCause {
    pub fn as_str(self) -> &'static str {
        match self {
            TripCause::FireDamage => "fire_damage",
            TripCause::WindDamage => "wind_damage",
            TripCause::Overload => "overload",
            TripCause::Mitigation => "mitigation",
        }
    }

    /// Exogenous causes sort before endogenous ones within a step.
    pub fn is_exogenous(self) -> bool {
        self != TripCause::Overload
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: usize,
    /// min
    pub t: f64,
    pub component: ComponentId,
    pub cause: TripCause,
}

/// Ordered record of component outages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CascadeTrace {
    pub events: Vec<TraceEvent>,
}

impl CascadeTrace {
    pub fn push(&mut self, step: usize, t: f64, component: ComponentId, cause: TripCause) {
        self.events.push(TraceEvent {
            step,
            t,
            component,
            cause,
        });
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn count(&self, cause: TripCause) -> usize {
        self.events.iter().filter(|e| e.cause == cause).count()
    }
}

/// Outcome of one cascade run.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeResult {
    pub solution: PowerSolution,
    /// Power-flow solves performed.
    pub iterations: usize,
}

/// Solves, trips every overloaded branch at once, and repeats to a fixed point.
///
/// `ratings` are effective MW ratings per branch index. Tripped branches are
/// recorded as overloads and the final solution is copied into `state`.
pub fn cascade(
    net: &GridNetwork,
    state: &mut ComponentState,
    ratings: &[f64],
    step: usize,
    t: f64,
    trace: &mut CascadeTrace,
) -> Result<CascadeResult> {
    let mut iterations = 0;
    loop {
        let sol = dc_power_flow(net, state)?;
        iterations += 1;
        let over: Vec<usize> = (0..net.branches.len())
            .filter(|&bi| state.branch_closed(net, bi) && sol.flows[bi].abs() - ratings[bi] > FLOW_TOL_MW)
            .collect();
        if over.is_empty() {
            apply_solution(net, state, &sol);
            return Ok(CascadeResult {
                solution: sol,
                iterations,
            });
        }
        for bi in over {
            state.branches[bi].tripped = true;
            trace.push(step, t, ComponentId::Branch(net.branches[bi].id), TripCause::Overload);
        }
    }
}

/// Weighted served fraction `sum(w * served) / sum(w * demand)`.
pub fn performance(net: &GridNetwork, sol: &PowerSolution) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (li, l) in net.loads.iter().enumerate() {
        num += l.weight() * sol.served[li];
        den += l.weight() * l.demand;
    }
    if !(den > 0.0) {
        return Err(Error::config("performance needs a positive total weighted demand"));
    }
    Ok((num / den).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    pub t: f64,
    pub island: usize,
    pub bus: BusId,
    pub served_mw: f64,
    pub shed_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub t: f64,
    pub branch: u32,
    pub flow_mw: f64,
    pub rating_mw: f64,
    pub status: &'static str,
}

/// Per-bus served and shed MW at time `t` (minutes).
pub fn bus_records(net: &GridNetwork, sol: &PowerSolution, t: f64) -> Vec<BusRecord> {
    (0..net.buses.len())
        .map(|b| {
            let loads = net.loads_at(b);
            BusRecord {
                t,
                island: sol.bus_island[b],
                bus: net.buses[b].id,
                served_mw: loads.iter().map(|&li| sol.served[li]).sum(),
                shed_mw: loads.iter().map(|&li| sol.shed[li]).sum(),
            }
        })
        .collect()
}

/// Per-branch flow and status at time `t` (minutes).
pub fn branch_records(
    net: &GridNetwork,
    state: &ComponentState,
    sol: &PowerSolution,
    ratings: &[f64],
    t: f64,
) -> Vec<BranchRecord> {
    (0..net.branches.len())
        .map(|bi| {
            let s = &state.branches[bi];
            let status = if s.damage == Damage::Failed {
                "failed"
            } else if s.tripped {
                "tripped"
            } else if s.switched_off {
                "switched_off"
            } else if !state.branch_closed(net, bi) {
                "open"
            } else if s.damage == Damage::Derated {
                "derated"
            } else {
                "closed"
            };
            BranchRecord {
                t,
                branch: net.branches[bi].id,
                flow_mw: sol.flows[bi],
                rating_mw: ratings[bi],
                status,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, NetBuilder};
    use crate::network::{build_testbed, TestbedConfig};
    use proptest::prelude::*;

    fn ratings(net: &GridNetwork) -> Vec<f64> {
        net.branches.iter().map(|b| b.thermal_rating).collect()
    }

    #[test]
    fn two_bus_single_path() {
        let net = fixtures::two_bus();
        let sol = dc_power_flow(&net, &ComponentState::new(&net)).unwrap();
        assert_eq!(sol.flows[0], 100.0);
        assert_eq!(sol.served, vec![100.0]);
        assert_eq!(sol.dispatch, vec![100.0]);
        assert_eq!(sol.islands[0].slack, Some(1));
    }

    #[test]
    fn triangle_matches_hand_solution() {
        // Reduced system with bus 1 as reference, y = 1/x = 10:
        // [20 -10; -10 20] [t2; t3] = [0; -90]  =>  t2 = -3, t3 = -6.
        let (t2, t3) = (-3.0, -6.0);
        let y = 10.0;
        let expected = [(0.0 - t2) * y, (t2 - t3) * y, (0.0 - t3) * y];
        let net = fixtures::triangle();
        let sol = dc_power_flow(&net, &ComponentState::new(&net)).unwrap();
        for (got, want) in sol.flows.iter().zip(expected) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!((sol.flows[2] - 60.0).abs() < 1e-9);
        assert!((sol.flows[0] - 30.0).abs() < 1e-9);
    }

    #[test]
    fn shedding_drops_lowest_weight_first() {
        let net = NetBuilder::new()
            .tx_bus(1, [0.0, 0.0])
            .tx_bus(2, [100.0, 0.0])
            .line(1, 1, 2, 0.1, 1000.0)
            .bulk(1, 1, 100.0, 1.0)
            .load(1, 2, 30.0, true)
            .load(2, 2, 90.0, false)
            .build()
            .unwrap();
        let sol = dc_power_flow(&net, &ComponentState::new(&net)).unwrap();
        assert_eq!(sol.served, vec![30.0, 70.0]);
        assert_eq!(sol.shed, vec![0.0, 20.0]);
    }

    #[test]
    fn pro_rata_within_class() {
        let s = priority_allocation(&[10.0, 30.0, 5.0], &[1.0, 1.0, 10.0], 25.0);
        assert_eq!(s, vec![5.0, 15.0, 5.0]);
    }

    #[test]
    fn island_without_generation_serves_nothing() {
        let net = fixtures::micro_feeder();
        let mut st = ComponentState::new(&net);
        st.branches[1].tripped = true;
        let sol = dc_power_flow(&net, &st).unwrap();
        assert_eq!(sol.served, vec![0.0, 0.0]);
        assert_eq!(sol.islands.len(), 2);
        assert!(!sol.islands[1].energized);
    }

    #[test]
    fn p_min_decommits_expensive_units() {
        let mut b = NetBuilder::new()
            .tx_bus(1, [0.0, 0.0])
            .tx_bus(2, [100.0, 0.0])
            .line(1, 1, 2, 0.1, 1000.0)
            .bulk(1, 1, 100.0, 1.0)
            .bulk(2, 2, 100.0, 5.0)
            .load(1, 2, 50.0, false);
        b.data_mut().generators[1].p_min = 40.0;
        b.data_mut().generators[0].p_min = 20.0;
        let net = b.build().unwrap();
        let sol = dc_power_flow(&net, &ComponentState::new(&net)).unwrap();
        assert_eq!(sol.committed, vec![true, false]);
        assert_eq!(sol.dispatch, vec![50.0, 0.0]);
    }

    #[test]
    fn zero_reactance_tree_and_loop() {
        let net = NetBuilder::new()
            .tx_bus(1, [0.0, 0.0])
            .tx_bus(2, [100.0, 0.0])
            .tx_bus(3, [200.0, 0.0])
            .line(1, 1, 2, 0.0, 1000.0)
            .line(2, 2, 3, 0.1, 1000.0)
            .bulk(1, 1, 100.0, 1.0)
            .load(2, 2, 10.0, false)
            .load(3, 3, 20.0, false)
            .build()
            .unwrap();
        let sol = dc_power_flow(&net, &ComponentState::new(&net)).unwrap();
        assert!((sol.flows[0] - 30.0).abs() < 1e-9);
        assert!((sol.flows[1] - 20.0).abs() < 1e-9);

        let looped = NetBuilder::new()
            .tx_bus(1, [0.0, 0.0])
            .tx_bus(2, [100.0, 0.0])
            .tx_bus(3, [200.0, 100.0])
            .line(1, 1, 2, 0.0, 1000.0)
            .line(2, 2, 3, 0.0, 1000.0)
            .line(3, 1, 3, 0.0, 1000.0)
            .bulk(1, 1, 100.0, 1.0)
            .load(3, 3, 20.0, false)
            .build()
            .unwrap();
        let err = dc_power_flow(&looped, &ComponentState::new(&looped)).unwrap_err();
        assert!(matches!(err, Error::SingularIsland { bus: 1 }));
        assert!(err.is_validation());
    }

    #[test]
    fn cascade_without_overloads_runs_once() {
        let net = fixtures::two_bus();
        let mut st = ComponentState::new(&net);
        let mut trace = CascadeTrace::default();
        let r = cascade(&net, &mut st, &ratings(&net), 0, 0.0, &mut trace).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(trace.is_empty());
    }

    #[test]
    fn parallel_line_cascade() {
        let net = fixtures::parallel_lines();
        let mut st = ComponentState::new(&net);
        let sol = dc_power_flow(&net, &st).unwrap();
        assert!((sol.flows[0] - 50.0).abs() < 1e-9 && (sol.flows[1] - 50.0).abs() < 1e-9);

        st.fail_branch(0);
        let mut trace = CascadeTrace::default();
        let r = cascade(&net, &mut st, &ratings(&net), 3, 90.0, &mut trace).unwrap();
        // Iteration 1: survivor carries 100 > 60 and trips. Iteration 2: no path.
        assert_eq!(r.iterations, 2);
        assert_eq!(trace.events.len(), 1);
        assert_eq!(trace.events[0].component, ComponentId::Branch(2));
        assert_eq!(trace.events[0].cause, TripCause::Overload);
        assert_eq!(r.solution.served, vec![0.0]);
        assert!(!st.bus_energized[1]);
    }

    #[test]
    fn everything_tripped_serves_nothing() {
        let net = build_testbed(&TestbedConfig::default()).unwrap();
        let mut st = ComponentState::new(&net);
        for bi in 0..net.branches.len() {
            st.fail_branch(bi);
        }
        let mut trace = CascadeTrace::default();
        let r = cascade(&net, &mut st, &ratings(&net), 0, 0.0, &mut trace).unwrap();
        assert!(trace.is_empty());
        let perf = performance(&net, &r.solution).unwrap();
        // Only loads sharing a bus with a generator can be served.
        assert!(perf < 0.5);
    }

    #[test]
    fn performance_examples() {
        let net = NetBuilder::new()
            .tx_bus(1, [0.0, 0.0])
            .tx_bus(2, [100.0, 0.0])
            .line(1, 1, 2, 0.1, 1000.0)
            .bulk(1, 1, 200.0, 1.0)
            .load(1, 2, 30.0, true)
            .load(2, 2, 90.0, false)
            .build()
            .unwrap();
        let mut sol = dc_power_flow(&net, &ComponentState::new(&net)).unwrap();
        assert_eq!(performance(&net, &sol).unwrap(), 1.0);
        sol.served = vec![30.0, 0.0];
        assert!((performance(&net, &sol).unwrap() - 300.0 / 390.0).abs() < 1e-15);
        sol.served = vec![0.0, 0.0];
        assert_eq!(performance(&net, &sol).unwrap(), 0.0);

        let empty = NetBuilder::new()
            .tx_bus(1, [0.0, 0.0])
            .bulk(1, 1, 1.0, 1.0)
            .build()
            .unwrap();
        let s = dc_power_flow(&empty, &ComponentState::new(&empty)).unwrap();
        assert!(performance(&empty, &s).is_err());
    }

    #[test]
    fn testbed_base_case_is_feasible() {
        let net = build_testbed(&TestbedConfig::default()).unwrap();
        let mut st = ComponentState::new(&net);
        let mut trace = CascadeTrace::default();
        let r = cascade(&net, &mut st, &ratings(&net), 0, 0.0, &mut trace).unwrap();
        assert!(trace.is_empty(), "{:?}", trace.events);
        assert_eq!(performance(&net, &r.solution).unwrap(), 1.0);
    }

    fn check_balance(net: &GridNetwork, st: &ComponentState, sol: &PowerSolution) {
        for isl in &sol.islands {
            let gen: f64 = net
                .generators
                .iter()
                .enumerate()
                .filter(|(_, g)| isl.buses.contains(&g.bus))
                .map(|(gi, _)| sol.dispatch[gi])
                .sum();
            assert!((gen - isl.served).abs() < 1e-7);
        }
        let mut node = vec![0.0; net.buses.len()];
        for (gi, g) in net.generators.iter().enumerate() {
            node[net.bus_index(g.bus).unwrap()] += sol.dispatch[gi];
        }
        for (li, l) in net.loads.iter().enumerate() {
            node[net.bus_index(l.bus).unwrap()] -= sol.served[li];
        }
        for bi in 0..net.branches.len() {
            if !st.branch_closed(net, bi) {
                assert_eq!(sol.flows[bi], 0.0);
            }
            let (f, t) = net.branch_ends(bi);
            node[f] -= sol.flows[bi];
            node[t] += sol.flows[bi];
        }
        for r in node {
            assert!(r.abs() < 1e-6, "Kirchhoff residual {r}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn kirchhoff_on_random_outages(mask in proptest::collection::vec(0u8..6, 54)) {
            let net = build_testbed(&TestbedConfig::default()).unwrap();
            let mut st = ComponentState::new(&net);
            for (bi, m) in mask.iter().enumerate().take(net.branches.len()) {
                if *m == 0 {
                    st.fail_branch(bi);
                }
            }
            let sol = dc_power_flow(&net, &st).unwrap();
            check_balance(&net, &st, &sol);
            for (li, l) in net.loads.iter().enumerate() {
                prop_assert!(sol.served[li] >= 0.0 && sol.served[li] <= l.demand + 1e-12);
            }
        }

        #[test]
        fn allocation_respects_priority(d in proptest::collection::vec(0.0..50.0f64, 1..6),
                                        crit in proptest::collection::vec(any::<bool>(), 6),
                                        supply in 0.0..200.0f64) {
            let w: Vec<f64> = (0..d.len()).map(|i| if crit[i] { 10.0 } else { 1.0 }).collect();
            let s = priority_allocation(&d, &w, supply);
            let total: f64 = s.iter().sum();
            prop_assert!((total - supply.min(d.iter().sum())).abs() < 1e-9);
            let std_served: f64 = (0..d.len()).filter(|&i| w[i] == 1.0).map(|i| s[i]).sum();
            if std_served > 1e-12 {
                for i in 0..d.len() {
                    if w[i] == 10.0 {
                        prop_assert!((s[i] - d[i]).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
