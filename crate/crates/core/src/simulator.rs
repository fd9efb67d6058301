//! Slot-by-slot environment: applies plans, serves OD demand, moves vehicles
//! with completed trips, and keeps the books.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptation::{adapt, AdaptInput, AdaptationLoop, AdaptationTranscript};
use crate::apportion::largest_remainder;
use crate::domain::{apply_plan, validate_plan, DemandMatrix, ExperimentConfig, FleetState, RebalancingPlan, TimeSlot};
use crate::error::{Error, Result};
use crate::ingest::{DemandSeries, DemandStats, Predictor, PredictorMode};
use crate::rebalancer::RebalancingPolicy;
use crate::scenario::{EmergentScenario, ScenarioSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    /// Supply at the start of the slot, after any rebalancing.
    pub fleet_before: FleetState,
    pub demand: DemandMatrix,
    pub satisfied: DemandMatrix,
    pub unsatisfied: DemandMatrix,
    pub fleet_after: FleetState,
}

/// Serves one slot of demand.
///
/// Each origin serves everything when supply covers its outbound demand;
/// otherwise exactly its supply is split across destinations by largest
/// remainder (lower destination index wins ties). Served trips arrive at their
/// destination for the next slot. Unserved requests are dropped.
pub fn fulfill_slot(fleet: &FleetState, demand: &DemandMatrix) -> SlotOutcome {
    let n = fleet.len();
    assert_eq!(demand.n(), n, "demand matrix does not match fleet size");
    let mut satisfied = DemandMatrix::zeros(n);
    let mut unsatisfied = DemandMatrix::zeros(n);
    let mut after = fleet.clone();
    for i in 0..n {
        let row = demand.row(i);
        let served = serve_origin(fleet.get(i), row);
        for (j, (&want, &got)) in row.iter().zip(&served).enumerate() {
            satisfied.set(i, j, got);
            unsatisfied.set(i, j, want - got);
        }
        let out: u64 = served.iter().sum();
        after.counts_mut()[i] -= out;
        for (j, &got) in served.iter().enumerate() {
            after.counts_mut()[j] += got;
        }
    }
    SlotOutcome {
        fleet_before: fleet.clone(),
        demand: demand.clone(),
        satisfied,
        unsatisfied,
        fleet_after: after,
    }
}

fn serve_origin(supply: u64, row: &[u64]) -> Vec<u64> {
    let want: u64 = row.iter().sum();
    if want <= supply {
        row.to_vec()
    } else {
        largest_remainder(supply, row)
    }
}

/// Open-loop projection of a fleet over predicted demand.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonProjection {
    pub satisfied: u64,
    /// Unserved outbound requests per origin.
    pub shortage: Vec<u64>,
    /// Vehicles per region that are never needed during the horizon:
    /// `min_t (stock - served)`. Removing one of them at the start leaves
    /// the projection unchanged.
    pub idle: Vec<u64>,
    /// Σ_t start-of-slot stock per region.
    pub supply: Vec<u64>,
    /// Σ_t outbound requests per region.
    pub demand: Vec<u64>,
}

impl HorizonProjection {
    pub fn total_shortage(&self) -> u64 {
        self.shortage.iter().sum()
    }
}

pub fn project(fleet: &FleetState, predicted: &[DemandMatrix]) -> HorizonProjection {
    let n = fleet.len();
    let mut stock = fleet.counts().to_vec();
    let mut proj = HorizonProjection {
        satisfied: 0,
        shortage: vec![0; n],
        idle: stock.clone(),
        supply: vec![0; n],
        demand: vec![0; n],
    };
    let mut arrivals = vec![0u64; n];
    for demand in predicted {
        arrivals.iter_mut().for_each(|a| *a = 0);
        for i in 0..n {
            let row = demand.row(i);
            let want: u64 = row.iter().sum();
            let served = serve_origin(stock[i], row);
            let out: u64 = served.iter().sum();
            proj.satisfied += out;
            proj.shortage[i] += want - out;
            proj.supply[i] += stock[i];
            proj.demand[i] += want;
            proj.idle[i] = proj.idle[i].min(stock[i] - out);
            for (j, got) in served.into_iter().enumerate() {
                arrivals[j] += got;
            }
            stock[i] -= out;
        }
        for (s, a) in stock.iter_mut().zip(&arrivals) {
            *s += a;
        }
    }
    proj
}

/// Hashes of what an episode observed, for checking that paired arms saw the same world.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub demand_hash: String,
    pub scenario_hash: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpisodeResult {
    pub slots: Vec<SlotOutcome>,
    pub total_satisfied: u64,
    pub total_demand: u64,
    pub revenue: f64,
    pub moves_executed: u64,
    pub vehicles_removed: u64,
    /// `(episode slot, applied plan)` at every decision point.
    pub plans: Vec<(usize, RebalancingPlan)>,
    pub scenarios: Vec<EmergentScenario>,
    pub transcripts: Vec<AdaptationTranscript>,
    pub trace: EpisodeTrace,
}

/// Everything an episode needs besides the policies.
#[derive(Debug, Clone)]
pub struct EpisodeSetup<'a> {
    pub cfg: &'a ExperimentConfig,
    /// Full series; days before `start_day` form the training window.
    pub series: &'a DemandSeries,
    pub start_day: u32,
    pub slots: usize,
    pub predictor: PredictorMode,
    pub initial: FleetState,
    pub schedule: ScenarioSchedule,
}

/// Runs one episode. At every rebalancing boundary the policy proposes a plan
/// over predicted demand; when an adaptation loop is attached and an emergent
/// scenario is active, the loop may replace it. Each slot then serves the
/// realized (possibly perturbed) demand.
pub fn run_episode(
    setup: &EpisodeSetup<'_>,
    rebalancer: &dyn RebalancingPolicy,
    adapter: Option<&AdaptationLoop<'_>>,
) -> Result<EpisodeResult> {
    let cfg = setup.cfg;
    let series = setup.series;
    let n = setup.initial.len();
    if series.n != n {
        return Err(Error::Structure(format!(
            "series has {} regions, fleet has {n}",
            series.n
        )));
    }
    let spd = cfg.slots_per_day;
    let start = TimeSlot { day: setup.start_day, slot: 0 }.index(spd);
    if start + setup.slots > series.len() {
        return Err(Error::Structure(format!(
            "series ends at slot {} but the episode needs {}",
            series.len(),
            start + setup.slots
        )));
    }
    let predictor = Predictor::fit(series, setup.start_day, setup.predictor)?;
    let stats = match adapter {
        Some(_) if setup.start_day > 0 => DemandStats::from_matrices(&series.matrices[..start])?,
        _ => DemandStats::zeros(n),
    };

    let mut cursor = setup.schedule.cursor();
    let mut active: Vec<ActiveScenario> = Vec::new();
    let mut fleet = setup.initial.clone();
    let mut result = EpisodeResult {
        slots: Vec::with_capacity(setup.slots),
        total_satisfied: 0,
        total_demand: 0,
        revenue: 0.0,
        moves_executed: 0,
        vehicles_removed: 0,
        plans: Vec::new(),
        scenarios: Vec::new(),
        transcripts: Vec::new(),
        trace: EpisodeTrace {
            demand_hash: String::new(),
            scenario_hash: String::new(),
        },
    };
    let mut demand_hasher = Sha256::new();
    let mut scenario_hasher = Sha256::new();

    for t in 0..setup.slots {
        let g = start + t;
        for entry in cursor.take(t)? {
            let seed = setup.schedule.entry_seed(cfg.rng_seed, entry);
            let (scenario, new_fleet) = entry.spec.instantiate(&fleet, seed, setup.schedule.templates())?;
            if let Some(f) = new_fleet {
                result.vehicles_removed += fleet.total() - f.total();
                fleet = f;
            }
            // Hash the draw (slot, seed, parameters), not its fleet-dependent realization.
            scenario_hasher.update(format!("{t}:{seed}:{:?};", entry.spec).as_bytes());
            let until = entry.spec.duration().map_or(setup.slots, |d| (t + d).min(setup.slots));
            result.scenarios.push(scenario.clone());
            active.push(ActiveScenario {
                from: t,
                until,
                scenario,
            });
        }
        active.retain(|a| a.until > t);

        if g % cfg.rebalance_period as usize == 0 {
            // Forecasts never see scenarios; only the adaptation loop learns of them.
            let predicted = predictor.predict(g, cfg.horizon);
            let initial_plan = rebalancer.plan(&fleet, &predicted);
            let violations = validate_plan(&fleet, &initial_plan, fleet.total());
            if !violations.is_empty() {
                return Err(Error::InvalidPlan(violations));
            }
            let plan = match adapter {
                Some(lp) if !active.is_empty() => {
                    let scenarios: Vec<EmergentScenario> = active.iter().map(|a| a.scenario.clone()).collect();
                    let input = AdaptInput {
                        state: &fleet,
                        predicted: &predicted,
                        stats: &stats,
                        initial: Some(&initial_plan),
                        scenarios: &scenarios,
                        system_time: TimeSlot::from_index(g, spd).clock(spd),
                        constraints: &lp.constraints,
                    };
                    let transcript = adapt(&input, lp.adapter, lp.max_iterations)?;
                    let plan = transcript.final_plan().clone();
                    result.transcripts.push(transcript);
                    plan
                }
                _ => initial_plan,
            };
            fleet = apply_plan(&fleet, &plan)?;
            result.moves_executed += plan.vehicles_moved();
            result.plans.push((t, plan));
        }

        let mut realized = series.matrices[g].clone();
        for a in &active {
            if a.from <= t {
                a.scenario.perturb_demand(&mut realized);
            }
        }
        for v in realized.entries() {
            demand_hasher.update(v.to_le_bytes());
        }
        let outcome = fulfill_slot(&fleet, &realized);
        result.total_satisfied += outcome.satisfied.total();
        result.total_demand += realized.total();
        fleet = outcome.fleet_after.clone();
        result.slots.push(outcome);
    }

    result.revenue =
        cfg.fare_per_trip * result.total_satisfied as f64 - cfg.move_cost * result.moves_executed as f64;
    result.trace = EpisodeTrace {
        demand_hash: hex::encode(demand_hasher.finalize()),
        scenario_hash: hex::encode(scenario_hasher.finalize()),
    };
    Ok(result)
}

struct ActiveScenario {
    from: usize,
    until: usize,
    scenario: EmergentScenario,
}
