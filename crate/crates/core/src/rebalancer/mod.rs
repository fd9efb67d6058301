//! Baseline rebalancing policies producing the initial plan from fleet state
//! and predicted demand.

mod ga;
mod greedy;

pub use ga::{ga_rebalance, GaConfig, GaOutcome, GeneticSearch};
pub use greedy::greedy_rebalance;

use serde::{Deserialize, Serialize};

use crate::apportion::largest_remainder;
use crate::domain::{DemandMatrix, FleetState, RebalancingPlan};
use crate::error::{Error, Result};

/// A rebalancing policy. Implementations must return plans that pass
/// `validate_plan` against `state`.
pub trait RebalancingPolicy: Sync {
    fn plan(&self, state: &FleetState, predicted: &[DemandMatrix]) -> RebalancingPlan;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RebalancerKind {
    Null,
    Sdsm,
    /// Shortage-driven local search; stands in for a learned scheduler.
    Greedy,
    Ga,
}

impl RebalancerKind {
    pub fn label(self) -> &'static str {
        match self {
            RebalancerKind::Null => "null",
            RebalancerKind::Sdsm => "sdsm",
            RebalancerKind::Greedy => "greedy",
            RebalancerKind::Ga => "ga",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rebalancer {
    pub kind: RebalancerKind,
    #[serde(default)]
    pub ga: GaConfig,
}

impl Rebalancer {
    pub fn new(kind: RebalancerKind) -> Self {
        Self {
            kind,
            ga: GaConfig::default(),
        }
    }

    pub fn with_ga(ga: GaConfig) -> Self {
        Self {
            kind: RebalancerKind::Ga,
            ga,
        }
    }
}

impl RebalancingPolicy for Rebalancer {
    fn plan(&self, state: &FleetState, predicted: &[DemandMatrix]) -> RebalancingPlan {
        rebalance(self, state, predicted)
    }
}

pub fn rebalance(rebalancer: &Rebalancer, state: &FleetState, predicted: &[DemandMatrix]) -> RebalancingPlan {
    match rebalancer.kind {
        RebalancerKind::Null => RebalancingPlan::zeros(state.len()),
        RebalancerKind::Sdsm => {
            let targets = sdsm_targets(state, predicted);
            plan_to_targets(state, &targets).expect("sdsm targets preserve the fleet total")
        }
        RebalancerKind::Greedy => greedy_rebalance(state, predicted),
        RebalancerKind::Ga => ga_rebalance(state, predicted, &rebalancer.ga).plan,
    }
}

/// Outbound demand per region summed over the whole horizon.
pub(crate) fn horizon_outbound(n: usize, predicted: &[DemandMatrix]) -> Vec<u64> {
    (0..n)
        .map(|i| predicted.iter().map(|m| m.outbound(i)).sum())
        .collect()
}

/// Demand-supply matching: distribute the fleet proportionally to predicted
/// outbound demand. Without any predicted demand the current state is kept.
pub fn sdsm_targets(state: &FleetState, predicted: &[DemandMatrix]) -> Vec<u64> {
    let demand = horizon_outbound(state.len(), predicted);
    if demand.iter().all(|&d| d == 0) {
        return state.counts().to_vec();
    }
    largest_remainder(state.total(), &demand)
}

/// Moves vehicles so that the fleet ends exactly at `targets`.
///
/// Deficit regions are filled in order of deficit size (largest first, lower
/// index on ties), each drawing from surplus regions in the same order.
pub fn plan_to_targets(state: &FleetState, targets: &[u64]) -> Result<RebalancingPlan> {
    let n = state.len();
    if targets.len() != n {
        return Err(Error::Structure(format!("{} targets for {n} regions", targets.len())));
    }
    let target_total: u64 = targets.iter().sum();
    if target_total != state.total() {
        return Err(Error::Structure(format!(
            "targets sum to {target_total} but the fleet holds {}",
            state.total()
        )));
    }
    let ordered = |gap: Vec<(usize, u64)>| {
        let mut gap: Vec<_> = gap.into_iter().filter(|&(_, g)| g > 0).collect();
        gap.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        gap
    };
    let mut surplus = ordered((0..n).map(|i| (i, state.get(i).saturating_sub(targets[i]))).collect());
    let deficits = ordered((0..n).map(|i| (i, targets[i].saturating_sub(state.get(i)))).collect());

    let mut plan = RebalancingPlan::zeros(n);
    let mut cursor = 0;
    for (sink, mut need) in deficits {
        while need > 0 {
            let (source, avail) = &mut surplus[cursor];
            let take = need.min(*avail);
            plan.add(*source, sink, take as i64);
            *avail -= take;
            need -= take;
            if *avail == 0 {
                cursor += 1;
            }
        }
    }
    Ok(plan)
}
