//! Repair scheduling, phased re-energization and resilience metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::component_class;
use crate::network::{island_indices, Criticality, GridNetwork};
use crate::power::PowerSolution;
use crate::state::{ComponentId, ComponentState, Damage};

/// Repair time in hours per component class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepairDurations {
    pub pole: f64,
    pub dx_line: f64,
    pub tx_line: f64,
    pub transformer: f64,
}

impl Default for RepairDurations {
    fn default() -> Self {
        RepairDurations {
            pole: 8.0,
            dx_line: 12.0,
            tx_line: 48.0,
            transformer: 72.0,
        }
    }
}

impl RepairDurations {
    pub fn validate(&self) -> Result<()> {
        if [self.pole, self.dx_line, self.tx_line, self.transformer]
            .iter()
            .all(|d| *d > 0.0 && d.is_finite())
        {
            Ok(())
        } else {
            Err(Error::config("repair durations must be positive"))
        }
    }

    pub fn for_component(&self, net: &GridNetwork, id: ComponentId) -> Result<f64> {
        Ok(match component_class(net, id)? {
            "tx_line" => self.tx_line,
            "dx_line" => self.dx_line,
            "transformer" => self.transformer,
            _ => self.pole,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairTask {
    pub component: ComponentId,
    /// h
    pub duration: f64,
    pub crew: usize,
    /// h
    pub start: f64,
    pub finish: f64,
    /// Weighted MW re-energized per repair hour when repaired alone.
    pub benefit_rate: f64,
}

/// Buses connected to an available generator.
fn sourced_buses(net: &GridNetwork, state: &ComponentState) -> Vec<bool> {
    let mut live = vec![false; net.buses.len()];
    for island in island_indices(net, state) {
        let sourced = island.iter().any(|&b| {
            net.generators_at(b)
                .iter()
                .any(|&gi| state.generator_available(gi) && net.generators[gi].p_max > 0.0)
        });
        if sourced {
            for b in island {
                live[b] = true;
            }
        }
    }
    live
}

fn weighted_sourced_demand(net: &GridNetwork, state: &ComponentState) -> f64 {
    let live = sourced_buses(net, state);
    net.loads
        .iter()
        .filter(|l| live[net.bus_index(l.bus).unwrap()])
        .map(|l| l.weight() * l.demand)
        .sum()
}

fn restore(net: &GridNetwork, state: &mut ComponentState, id: ComponentId) -> Result<()> {
    match id {
        ComponentId::Branch(b) => {
            let bi = net.branch_index(b)?;
            let s = &mut state.branches[bi];
            s.damage = Damage::Intact;
            s.tripped = false;
            s.conductor_temp = crate::state::DEFAULT_CONDUCTOR_TEMP;
        }
        ComponentId::Pole(p) => {
            let pi = net.pole_index(p)?;
            state.poles[pi].damage = Damage::Intact;
        }
    }
    Ok(())
}

/// Greedy list schedule for the damaged components.
///
/// Tasks are ordered by weighted demand re-energized per repair hour when the
/// component is repaired alone (descending, ties by component id), and each
/// task goes to the crew that frees up first. Times are hours from `start`.
/// Overload trips are treated as cleared, since they reclose with any repair.
pub fn schedule_repairs(
    net: &GridNetwork,
    state: &ComponentState,
    damaged: &[ComponentId],
    crews: usize,
    durations: &RepairDurations,
    start: f64,
) -> Result<Vec<RepairTask>> {
    if crews == 0 {
        return Err(Error::config("at least one repair crew is required"));
    }
    schedule_repairs_onto(net, state, damaged, &mut vec![start; crews], durations)
}

/// [`schedule_repairs`] for crews that become free at the given times (h);
/// `free_at` is advanced past the new work.
pub fn schedule_repairs_onto(
    net: &GridNetwork,
    state: &ComponentState,
    damaged: &[ComponentId],
    free_at: &mut [f64],
    durations: &RepairDurations,
) -> Result<Vec<RepairTask>> {
    let crews = free_at.len();
    if crews == 0 {
        return Err(Error::config("at least one repair crew is required"));
    }
    let mut base = state.clone();
    for b in base.branches.iter_mut() {
        b.tripped = false;
    }
    let before = weighted_sourced_demand(net, &base);

    let unique: BTreeSet<ComponentId> = damaged.iter().copied().collect();
    let mut ranked = Vec::with_capacity(unique.len());
    for id in unique {
        let duration = durations.for_component(net, id)?;
        let mut trial = base.clone();
        restore(net, &mut trial, id)?;
        let gain = (weighted_sourced_demand(net, &trial) - before).max(0.0);
        ranked.push((gain / duration, id, duration));
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    Ok(ranked
        .into_iter()
        .map(|(rate, id, duration)| {
            let crew = (0..crews)
                .min_by(|&a, &b| free_at[a].total_cmp(&free_at[b]).then(a.cmp(&b)))
                .unwrap();
            let begin = free_at[crew];
            free_at[crew] = begin + duration;
            RepairTask {
                component: id,
                duration,
                crew,
                start: begin,
                finish: begin + duration,
                benefit_rate: rate,
            }
        })
        .collect())
}

/// Returns repaired components to service and re-derives energization.
///
/// Every completed task restores its component and recloses overload-tripped
/// branches. A bus is energized only when it shares an island with an
/// available generator.
pub fn re_energize(net: &GridNetwork, state: &mut ComponentState, completed: &[RepairTask], t: f64) -> Result<()> {
    let mut any = false;
    for task in completed {
        if task.finish > t {
            return Err(Error::config(format!(
                "repair of {} finishes at {} h, after {t} h",
                task.component, task.finish
            )));
        }
        restore(net, state, task.component)?;
        any = true;
    }
    if any {
        for b in state.branches.iter_mut() {
            b.tripped = false;
        }
    }
    state.bus_energized = sourced_buses(net, state);
    state.refresh_equipment_energization(net);
    Ok(())
}

// ---------------------------------------------------------------------------
// Resilience curve
// ---------------------------------------------------------------------------

/// Tolerance for comparing performance levels.
const PERF_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Phases {
    /// First drop below the pre-event level (h).
    pub impact: Option<f64>,
    /// First time at the minimum.
    pub degraded: Option<f64>,
    /// End of the minimum plateau.
    pub restoration: Option<f64>,
    /// Return to the pre-event level after the minimum.
    pub recovered: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetrics {
    pub pre_event_performance: f64,
    /// Minimum performance.
    pub robustness: f64,
    /// `(1 - robustness)` per hour from reaching the minimum to recovery.
    pub rapidity: Option<f64>,
    /// Integral of `1 - performance` over the horizon (performance-hours).
    pub lost_performance_hours: f64,
}

/// Step-function performance history with its phases and metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceCurve {
    /// (t h, performance) held until the next sample.
    pub samples: Vec<(f64, f64)>,
    pub horizon: f64,
    pub phases: Phases,
    pub metrics: CurveMetrics,
}

/// Builds the curve from step samples covering `[0, horizon]` hours, taking
/// the first sample as the pre-event level.
pub fn build_curve(samples: &[(f64, f64)], horizon: f64) -> Result<ResilienceCurve> {
    let Some(&(_, pre)) = samples.first() else {
        return Err(Error::config("resilience curve needs at least one sample"));
    };
    build_curve_from(samples, horizon, pre)
}

/// Like [`build_curve`] with an explicit pre-event performance, for histories
/// whose first step is already disrupted.
pub fn build_curve_from(samples: &[(f64, f64)], horizon: f64, pre: f64) -> Result<ResilienceCurve> {
    let Some(&(t0, _)) = samples.first() else {
        return Err(Error::config("resilience curve needs at least one sample"));
    };
    if t0 != 0.0 {
        return Err(Error::config("resilience curve samples must start at t = 0"));
    }
    for w in samples.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::config("resilience curve sample times must increase"));
        }
    }
    let last = samples[samples.len() - 1].0;
    if !(horizon >= last) {
        return Err(Error::config("resilience curve samples extend past the horizon"));
    }
    if samples.iter().any(|s| !(0.0..=1.0).contains(&s.1)) {
        return Err(Error::config("performance samples must lie in [0, 1]"));
    }

    // Integrate over runs of equal performance so refining a step function
    // leaves the result bit-identical.
    let mut runs: Vec<(f64, f64)> = Vec::new();
    for &(t, p) in samples {
        if runs.last().is_none_or(|r| r.1 != p) {
            runs.push((t, p));
        }
    }
    let end = |i: usize| runs.get(i + 1).map_or(horizon, |s| s.0);
    let lost: f64 = (0..runs.len()).map(|i| (1.0 - runs[i].1) * (end(i) - runs[i].0)).sum();
    let robustness = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);

    let mut phases = Phases::default();
    if robustness < pre - PERF_TOL {
        let i_impact = samples.iter().position(|s| s.1 < pre - PERF_TOL).unwrap();
        let i_min = samples.iter().position(|s| s.1 <= robustness + PERF_TOL).unwrap();
        phases.impact = Some(samples[i_impact].0);
        phases.degraded = Some(samples[i_min].0);
        let i_rest = (i_min..samples.len()).find(|&i| samples[i].1 > robustness + PERF_TOL);
        phases.restoration = Some(i_rest.map_or(horizon, |i| samples[i].0));
        phases.recovered = i_rest
            .and_then(|r| (r..samples.len()).find(|&i| samples[i].1 >= pre - PERF_TOL))
            .map(|i| samples[i].0);
    }
    let rapidity = match (phases.degraded, phases.recovered) {
        (Some(d), Some(r)) if r > d => Some((1.0 - robustness) / (r - d)),
        _ => None,
    };
    Ok(ResilienceCurve {
        samples: samples.to_vec(),
        horizon,
        phases,
        metrics: CurveMetrics {
            pre_event_performance: pre,
            robustness,
            rapidity,
            lost_performance_hours: lost,
        },
    })
}

// ---------------------------------------------------------------------------
// Community metrics
// ---------------------------------------------------------------------------

/// Service-loss proxies accumulated per step. Partial service counts
/// proportionally: a load at 40 % shed contributes 0.4 of the step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommunityMetrics {
    /// MWh
    pub energy_not_served: f64,
    /// Criticality-weighted MWh.
    pub weighted_energy_not_served: f64,
    /// Outage hours per critical load id.
    pub critical_outage_hours: Vec<(u32, f64)>,
    pub customer_interruption_hours: f64,
}

impl CommunityMetrics {
    pub fn new(net: &GridNetwork) -> Self {
        CommunityMetrics {
            critical_outage_hours: net
                .loads
                .iter()
                .filter(|l| l.criticality == Criticality::Critical)
                .map(|l| (l.id, 0.0))
                .collect(),
            ..Default::default()
        }
    }

    /// Adds one step of `dt` hours at the given solution.
    pub fn record(&mut self, net: &GridNetwork, sol: &PowerSolution, dt: f64) {
        let mut crit = self.critical_outage_hours.iter_mut();
        for (li, l) in net.loads.iter().enumerate() {
            let shed = sol.shed[li].max(0.0);
            let frac = if l.demand > 0.0 { shed / l.demand } else { 0.0 };
            self.energy_not_served += shed * dt;
            self.weighted_energy_not_served += l.weight() * shed * dt;
            self.customer_interruption_hours += l.customers as f64 * frac * dt;
            if l.criticality == Criticality::Critical {
                crit.next().unwrap().1 += frac * dt;
            }
        }
    }

    pub fn total_critical_outage_hours(&self) -> f64 {
        self.critical_outage_hours.iter().map(|c| c.1).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::network::{build_testbed, TestbedConfig};
    use crate::power::dc_power_flow;

    fn task_order(tasks: &[RepairTask]) -> Vec<ComponentId> {
        tasks.iter().map(|t| t.component).collect()
    }

    #[test]
    fn no_damage_no_schedule() {
        let net = fixtures::micro_feeder();
        let st = ComponentState::new(&net);
        assert!(schedule_repairs(&net, &st, &[], 2, &RepairDurations::default(), 0.0)
            .unwrap()
            .is_empty());
        assert!(schedule_repairs(&net, &st, &[], 0, &RepairDurations::default(), 0.0).is_err());
    }

    #[test]
    fn single_crew_runs_sequentially() {
        // Pole 5 (8 h) and section 4 (12 h) both only feed bus 5, so neither
        // restores anything alone: equal zero benefit, ordered by id.
        let net = fixtures::micro_feeder();
        let mut st = ComponentState::new(&net);
        st.fail_branch(net.branch_index(4).unwrap());
        st.fail_pole(net.pole_index(5).unwrap());
        let tasks = schedule_repairs(
            &net,
            &st,
            &[ComponentId::Pole(5), ComponentId::Branch(4)],
            1,
            &RepairDurations::default(),
            0.0,
        )
        .unwrap();
        assert_eq!(task_order(&tasks), vec![ComponentId::Branch(4), ComponentId::Pole(5)]);
        let finishes: Vec<f64> = tasks.iter().map(|t| t.finish).collect();
        assert_eq!(finishes, vec![12.0, 20.0]);

        let pole_first = RepairDurations {
            pole: 8.0,
            dx_line: 12.0,
            ..RepairDurations::default()
        };
        let both_poles = schedule_repairs(
            &net,
            &st,
            &[ComponentId::Pole(5), ComponentId::Pole(3)],
            1,
            &pole_first,
            0.0,
        )
        .unwrap();
        let finishes: Vec<f64> = both_poles.iter().map(|t| t.finish).collect();
        assert_eq!(finishes, vec![8.0, 16.0]);
    }

    #[test]
    fn higher_benefit_goes_first() {
        // Section 3 feeds the critical load at bus 4 (weight 10, 0.5 MW) and
        // section 4 the standard load at bus 5 (weight 1, 1.0 MW). Both 12 h.
        // Benefit rates: section 3 unlocks 10*0.5 = 5 (bus 5 stays dark behind
        // section 4), section 4 unlocks 0 alone. Hand ranking: 3 then 4.
        let net = fixtures::micro_feeder();
        let mut st = ComponentState::new(&net);
        st.fail_branch(net.branch_index(3).unwrap());
        st.fail_branch(net.branch_index(4).unwrap());
        let tasks = schedule_repairs(
            &net,
            &st,
            &[ComponentId::Branch(4), ComponentId::Branch(3)],
            1,
            &RepairDurations::default(),
            0.0,
        )
        .unwrap();
        assert_eq!(task_order(&tasks), vec![ComponentId::Branch(3), ComponentId::Branch(4)]);
        assert!((tasks[0].benefit_rate - 5.0 / 12.0).abs() < 1e-12);

        // A cheap-but-unimportant task does not jump ahead of a long important one.
        let d = RepairDurations {
            dx_line: 1.0,
            transformer: 72.0,
            ..RepairDurations::default()
        };
        let mut st = ComponentState::new(&net);
        st.fail_branch(net.branch_index(2).unwrap());
        let tasks = schedule_repairs(&net, &st, &[ComponentId::Branch(2)], 1, &d, 0.0).unwrap();
        assert!(tasks[0].benefit_rate > 0.0);
    }

    #[test]
    fn crews_share_work() {
        let net = build_testbed(&TestbedConfig::default()).unwrap();
        let mut st = ComponentState::new(&net);
        let ids: Vec<ComponentId> = [205, 206, 207, 208].iter().map(|&b| ComponentId::Branch(b)).collect();
        for id in &ids {
            if let ComponentId::Branch(b) = id {
                st.fail_branch(net.branch_index(*b).unwrap());
            }
        }
        let one = schedule_repairs(&net, &st, &ids, 1, &RepairDurations::default(), 5.0).unwrap();
        let two = schedule_repairs(&net, &st, &ids, 2, &RepairDurations::default(), 5.0).unwrap();
        let makespan = |t: &[RepairTask]| t.iter().map(|x| x.finish).fold(0.0, f64::max);
        assert_eq!(makespan(&one), 5.0 + 48.0);
        assert_eq!(makespan(&two), 5.0 + 24.0);
        for t in &two {
            assert_eq!(t.finish, t.start + t.duration);
        }
    }

    #[test]
    fn repaired_branch_without_source_stays_dark() {
        let net = fixtures::micro_feeder();
        let mut st = ComponentState::new(&net);
        st.fail_branch(net.branch_index(2).unwrap());
        st.fail_branch(net.branch_index(3).unwrap());
        let task = RepairTask {
            component: ComponentId::Branch(3),
            duration: 12.0,
            crew: 0,
            start: 0.0,
            finish: 12.0,
            benefit_rate: 0.0,
        };
        re_energize(&net, &mut st, std::slice::from_ref(&task), 12.0).unwrap();
        let bi = net.branch_index(3).unwrap();
        assert!(st.branches[bi].in_service());
        assert!(!st.branches[bi].energized);
        assert!(re_energize(&net, &mut st, &[task], 11.0).is_err());
    }

    #[test]
    fn transformer_repair_restores_feeder() {
        let net = build_testbed(&TestbedConfig::default()).unwrap();
        let (_, head) = net.feeder_heads()[0];
        let mut st = ComponentState::new(&net);
        st.fail_branch(head);
        re_energize(&net, &mut st, &[], 0.0).unwrap();
        assert!(net
            .buses
            .iter()
            .zip(&st.bus_energized)
            .filter(|(b, _)| b.feeder.is_some())
            .all(|(_, e)| !e));
        let task = RepairTask {
            component: ComponentId::Branch(net.branches[head].id),
            duration: 72.0,
            crew: 0,
            start: 0.0,
            finish: 72.0,
            benefit_rate: 0.0,
        };
        re_energize(&net, &mut st, &[task], 72.0).unwrap();
        assert!(st.bus_energized.iter().all(|e| *e));
    }

    #[test]
    fn completion_order_does_not_matter() {
        let net = build_testbed(&TestbedConfig::default()).unwrap();
        let ids = [
            ComponentId::Branch(203),
            ComponentId::Pole(210),
            ComponentId::Branch(220),
        ];
        let mut damaged = ComponentState::new(&net);
        damaged.fail_branch(net.branch_index(203).unwrap());
        damaged.fail_pole(net.pole_index(210).unwrap());
        damaged.fail_branch(net.branch_index(220).unwrap());
        let tasks = schedule_repairs(&net, &damaged, &ids, 1, &RepairDurations::default(), 0.0).unwrap();
        let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut finals = Vec::new();
        for o in orders {
            let mut st = damaged.clone();
            for &i in &o {
                re_energize(&net, &mut st, &[tasks[i].clone()], 100.0).unwrap();
            }
            finals.push(st);
        }
        assert!(finals.windows(2).all(|w| w[0] == w[1]));
        assert!(finals[0].bus_energized.iter().all(|e| *e));
    }

    #[test]
    fn constant_curve() {
        let c = build_curve(&[(0.0, 1.0), (0.5, 1.0)], 24.0).unwrap();
        assert_eq!(c.metrics.robustness, 1.0);
        assert_eq!(c.metrics.lost_performance_hours, 0.0);
        assert_eq!(c.phases, Phases::default());
        assert_eq!(c.metrics.rapidity, None);
    }

    #[test]
    fn rectangle_drop() {
        let samples: Vec<(f64, f64)> = (0..60)
            .map(|i| {
                let t = i as f64 * 0.5;
                (t, if (10.0..20.0).contains(&t) { 0.6 } else { 1.0 })
            })
            .collect();
        let c = build_curve(&samples, 30.0).unwrap();
        assert_eq!(c.metrics.robustness, 0.6);
        assert!((c.metrics.lost_performance_hours - 4.0).abs() < 1e-12);
        assert_eq!(c.phases.impact, Some(10.0));
        assert_eq!(c.phases.restoration, Some(20.0));
        assert_eq!(c.phases.recovered, Some(20.0));
        assert!((c.metrics.rapidity.unwrap() - 0.04).abs() < 1e-12);

        // Refinement invariance.
        let coarse = build_curve(&[(0.0, 1.0), (10.0, 0.6), (20.0, 1.0)], 30.0).unwrap();
        assert_eq!(coarse.metrics, c.metrics);
    }

    #[test]
    fn stepped_recovery_matches_trapezoid_within_one_step() {
        // Drop to 0.6 at 10 h, then linear recovery 20 h -> 30 h in 1 h steps.
        let dt = 1.0;
        let mut samples = vec![(0.0, 1.0)];
        let mut t = 10.0;
        while t < 40.0 {
            let p = if t < 20.0 {
                0.6
            } else if t < 30.0 {
                0.6 + 0.4 * (t - 20.0) / 10.0
            } else {
                1.0
            };
            samples.push((t, p));
            t += dt;
        }
        let c = build_curve(&samples, 40.0).unwrap();
        let trapezoid = 0.4 * 10.0 + 0.4 * 10.0 / 2.0;
        // A left-hold step function overshoots a linear ramp by half a step of slope.
        assert!((c.metrics.lost_performance_hours - trapezoid).abs() <= 0.4 * dt / 2.0 + 1e-12);
        assert_eq!(c.phases.recovered, Some(30.0));
    }

    #[test]
    fn curve_errors() {
        assert!(build_curve(&[], 1.0).is_err());
        assert!(build_curve(&[(1.0, 1.0)], 2.0).is_err());
        assert!(build_curve(&[(0.0, 1.0), (0.0, 0.5)], 2.0).is_err());
        assert!(build_curve(&[(0.0, 1.5)], 2.0).is_err());
    }

    #[test]
    fn community_metrics_accumulate() {
        let net = fixtures::micro_feeder();
        let mut st = ComponentState::new(&net);
        let mut m = CommunityMetrics::new(&net);
        m.record(&net, &dc_power_flow(&net, &st).unwrap(), 0.5);
        assert_eq!(m.energy_not_served, 0.0);
        st.fail_branch(net.branch_index(2).unwrap());
        m.record(&net, &dc_power_flow(&net, &st).unwrap(), 0.5);
        assert!((m.energy_not_served - 0.75).abs() < 1e-12);
        assert!((m.weighted_energy_not_served - (10.0 * 0.5 + 1.0) * 0.5).abs() < 1e-12);
        assert_eq!(m.critical_outage_hours, vec![(4, 0.5)]);
        assert!((m.customer_interruption_hours - 150.0 * 0.5).abs() < 1e-9);
    }
}
