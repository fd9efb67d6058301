use crate::domain::{DemandMatrix, FleetState, RebalancingPlan};
use crate::rebalancer::plan_to_targets;
use crate::simulator::project;

/// Shortage-driven transport heuristic.
///
/// Projects the fleet over the predicted horizon, then repeatedly moves one
/// vehicle from the region with the most idle vehicles to the region with the
/// largest projected shortage. A move is kept only if it strictly lowers total
/// projected shortage; when the top sink does not help, the next one is tried.
/// Stops when no sink improves or no idle vehicle is left.
pub fn greedy_rebalance(state: &FleetState, predicted: &[DemandMatrix]) -> RebalancingPlan {
    let n = state.len();
    let mut fleet = state.counts().to_vec();
    let mut proj = project(state, predicted);

    while proj.total_shortage() > 0 {
        let Some(source) = argmax(&proj.idle) else {
            break;
        };
        let mut sinks: Vec<usize> = (0..n).filter(|&i| i != source && proj.shortage[i] > 0).collect();
        sinks.sort_by(|&a, &b| proj.shortage[b].cmp(&proj.shortage[a]).then(a.cmp(&b)));

        let mut improved = false;
        for sink in sinks {
            let mut trial = fleet.clone();
            trial[source] -= 1;
            trial[sink] += 1;
            let next = project(&FleetState::new(trial.clone()), predicted);
            if next.total_shortage() < proj.total_shortage() {
                fleet = trial;
                proj = next;
                improved = true;
                break;
            }
        }
        if !improved {
            break;
        }
    }
    plan_to_targets(state, &fleet).expect("greedy moves preserve the fleet total")
}

/// Index of the largest positive entry, lower index on ties.
fn argmax(values: &[u64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v > 0 && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}
