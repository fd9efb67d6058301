//! Offline adapters: deterministic stand-ins for a language model.

use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AdaptInput, AdapterRequest, LanguageModel, TransportError};
use crate::domain::{apply_plan, DemandMatrix, FleetState, RebalancingPlan};
use crate::error::{Error, Result};
use crate::metrics::{demand_supply_ratios, equity_variance, gini, satisfaction_from, theil};
use crate::rebalancer::plan_to_targets;
use crate::scenario::{scale_demand, DemandDelta, Direction, GoalDescriptor, GoalMetric};
use crate::simulator::{project, HorizonProjection};

fn plan_json(plan: &RebalancingPlan) -> String {
    serde_json::to_string(&plan.to_record()).expect("plans serialize")
}

fn fenced(plan: &RebalancingPlan) -> String {
    format!("Proposed plan:\n```json\n{}\n```", plan_json(plan))
}

fn initial_or_zero(input: &AdaptInput<'_>) -> RebalancingPlan {
    input
        .initial
        .cloned()
        .unwrap_or_else(|| RebalancingPlan::zeros(input.state.len()))
}

/// Returns the initial plan unchanged (the zero plan in planning mode).
#[derive(Debug, Clone, Copy, Default)]
pub struct Echo;

impl LanguageModel for Echo {
    fn name(&self) -> &str {
        "echo"
    }

    fn complete(&self, request: &AdapterRequest<'_>) -> Result<String, TransportError> {
        Ok(fenced(&initial_or_zero(request.input)))
    }
}

/// Always proposes a plan that ships more vehicles than a region holds.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysInvalid;

impl LanguageModel for AlwaysInvalid {
    fn name(&self) -> &str {
        "always_invalid"
    }

    fn complete(&self, request: &AdapterRequest<'_>) -> Result<String, TransportError> {
        Ok(corrupt_overdraw(request.input).unwrap_or_else(|| malformed(request.input)))
    }
}

fn corrupt_overdraw(input: &AdaptInput<'_>) -> Option<String> {
    let n = input.state.len();
    if n < 2 {
        return None;
    }
    let counts = input.state.counts();
    let src = (0..n).max_by_key(|&i| (counts[i], std::cmp::Reverse(i)))?;
    let mut plan = initial_or_zero(input);
    let extra = counts[src] as i64 + 1 - plan.outflow(src).max(0);
    plan.add(src, (src + 1) % n, extra.max(1));
    Some(fenced(&plan))
}

fn malformed(input: &AdaptInput<'_>) -> String {
    let mut text = plan_json(&initial_or_zero(input));
    text.truncate(text.len().saturating_sub(2));
    format!("Here is the plan: {text}")
}

/// Wraps another adapter and corrupts each answer with probability `p`,
/// either as an overdraw or as malformed text. The draw is seeded from
/// `seed` and the prompt, so it does not depend on call order.
pub struct Faulty {
    inner: Box<dyn LanguageModel>,
    p: f64,
    seed: u64,
}

impl Faulty {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        Self::wrapping(Box::new(Echo), p, seed)
    }

    pub fn wrapping(inner: Box<dyn LanguageModel>, p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("fault probability must lie in [0, 1], got {p}")));
        }
        Ok(Self { inner, p, seed })
    }
}

impl LanguageModel for Faulty {
    fn name(&self) -> &str {
        "faulty"
    }

    fn complete(&self, request: &AdapterRequest<'_>) -> Result<String, TransportError> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        // Reflection prompts repeat once outputs cycle; the iteration keeps draws independent.
        h.update((request.iteration as u64).to_le_bytes());
        h.update(request.prompt.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        if rng.random_bool(self.p) {
            if rng.random_bool(0.5) {
                if let Some(text) = corrupt_overdraw(request.input) {
                    return Ok(text);
                }
            }
            return Ok(malformed(request.input));
        }
        self.inner.complete(request)
    }
}

/// Replays a fixed sequence of replies; the last one repeats once exhausted.
pub struct Scripted {
    replies: Vec<Result<String, TransportError>>,
    next: Mutex<usize>,
}

impl Scripted {
    pub fn new(replies: Vec<Result<String, TransportError>>) -> Self {
        assert!(!replies.is_empty(), "scripted adapter needs at least one reply");
        Self {
            replies,
            next: Mutex::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        *self.next.lock().unwrap()
    }
}

impl LanguageModel for Scripted {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, _: &AdapterRequest<'_>) -> Result<String, TransportError> {
        let mut next = self.next.lock().unwrap();
        let reply = self.replies[(*next).min(self.replies.len() - 1)].clone();
        *next += 1;
        reply
    }
}

/// Deterministic oracle adapter. Starting from the fleet the initial plan
/// would produce, it moves one vehicle at a time to improve a projection of
/// its own view of demand:
///
/// - disclosed surges are applied at their stated ratio;
/// - undisclosed surges are guessed from history as max/avg of the affected
///   regions (capped at 2x), or 1.5x without history;
/// - under a goal scenario the objective blends satisfaction with the goal
///   metric by the goal's weight.
///
/// A step is taken only when it strictly improves the objective, so a plan
/// that is already locally optimal for the view is returned unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct ShortageRepair;

impl LanguageModel for ShortageRepair {
    fn name(&self) -> &str {
        "shortage_repair"
    }

    fn complete(&self, request: &AdapterRequest<'_>) -> Result<String, TransportError> {
        Ok(fenced(&self.repair(request.input)))
    }
}

struct Objective<'a> {
    view: &'a [DemandMatrix],
    goal: Option<(GoalDescriptor, f64)>,
}

impl Objective<'_> {
    fn goal_value(goal: &GoalDescriptor, proj: &HorizonProjection) -> f64 {
        match goal.metric {
            GoalMetric::EquityVariance => equity_variance(&proj.supply, &proj.demand),
            GoalMetric::Gini => gini(&demand_supply_ratios(&proj.supply, &proj.demand)),
            GoalMetric::Theil => theil(&demand_supply_ratios(&proj.supply, &proj.demand)),
        }
    }

    fn score(&self, proj: &HorizonProjection) -> f64 {
        // Average per-region rate, the metric episodes are scored on.
        let served: Vec<u64> = proj.demand.iter().zip(&proj.shortage).map(|(d, s)| d - s).collect();
        let sat = satisfaction_from(&served, &proj.demand).avg;
        match &self.goal {
            None => sat,
            Some((goal, scale)) => {
                let v = Self::goal_value(goal, proj) / scale;
                let g = match goal.direction {
                    Direction::Maximize => v,
                    Direction::Minimize => -v,
                };
                (1.0 - goal.weight) * sat + goal.weight * g
            }
        }
    }
}

impl ShortageRepair {
    fn view(input: &AdaptInput<'_>) -> Vec<DemandMatrix> {
        let mut view = input.predicted.to_vec();
        for sc in input.scenarios {
            let Some(delta) = &sc.demand_delta else { continue };
            if sc.magnitude_disclosed {
                view.iter_mut().for_each(|m| scale_demand(m, delta));
                continue;
            }
            let n = input.state.len();
            for i in (0..n).filter(|&i| delta.affects(i)) {
                let guess = input
                    .stats
                    .regions
                    .get(i)
                    .filter(|r| r.avg > 0.0)
                    .map_or(0.5, |r| (r.max as f64 / r.avg).clamp(1.0, 2.0) - 1.0);
                let one = DemandDelta {
                    ratio: guess,
                    regions: Some(vec![i]),
                };
                view.iter_mut().for_each(|m| scale_demand(m, &one));
            }
        }
        view
    }

    pub fn repair(&self, input: &AdaptInput<'_>) -> RebalancingPlan {
        let state = input.state;
        let n = state.len();
        let start = input
            .initial
            .and_then(|p| apply_plan(state, p).ok())
            .unwrap_or_else(|| state.clone());
        let view = Self::view(input);
        let goal = input.scenarios.iter().find_map(|s| s.constraint);
        let start_proj = project(&start, &view);
        let goal = goal.map(|g| {
            let v = Objective::goal_value(&g, &start_proj).abs();
            (g, if v > 1e-9 { v } else { 1.0 })
        });
        let objective = Objective {
            view: &view,
            goal,
        };

        let mut targets = start.into_counts();
        let mut score = objective.score(&start_proj);
        for _ in 0..state.total() {
            let mut best: Option<(f64, Vec<u64>)> = None;
            for a in (0..n).filter(|&a| targets[a] > 0) {
                for b in (0..n).filter(|&b| b != a) {
                    let mut trial = targets.clone();
                    trial[a] -= 1;
                    trial[b] += 1;
                    let p = project(&FleetState::new(trial.clone()), objective.view);
                    let s = objective.score(&p);
                    if s > score + 1e-12 && best.as_ref().is_none_or(|(bs, _)| s > *bs) {
                        best = Some((s, trial));
                    }
                }
            }
            let Some((s, t)) = best else { break };
            score = s;
            targets = t;
        }
        plan_to_targets(state, &targets).expect("repair keeps the fleet total")
    }
}

/// Named offline adapters, as selected in experiment specs and on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "name", deny_unknown_fields)]
pub enum MockSpec {
    Echo,
    ShortageRepair,
    Faulty {
        p: f64,
        #[serde(default)]
        seed: u64,
    },
    AlwaysInvalid,
}

impl MockSpec {
    /// Parses `echo`, `shortage_repair`, `always_invalid` or `faulty:P[:SEED]`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut parts = text.split(':');
        let spec = match parts.next().unwrap_or_default() {
            "echo" => MockSpec::Echo,
            "shortage_repair" => MockSpec::ShortageRepair,
            "always_invalid" => MockSpec::AlwaysInvalid,
            "faulty" => {
                let p = parts
                    .next()
                    .ok_or_else(|| Error::Config("faulty needs a probability, e.g. faulty:0.85".into()))?;
                let p: f64 = p.parse().map_err(|_| Error::Config(format!("bad probability `{p}`")))?;
                let seed = match parts.next() {
                    Some(s) => s.parse().map_err(|_| Error::Config(format!("bad seed `{s}`")))?,
                    None => 0,
                };
                MockSpec::Faulty { p, seed }
            }
            other => return Err(Error::Config(format!("unknown mock adapter `{other}`"))),
        };
        if parts.next().is_some() {
            return Err(Error::Config(format!("trailing fields in adapter `{text}`")));
        }
        Ok(spec)
    }

    /// Builds the adapter; `salt` is mixed into seeded mocks so repetitions differ.
    pub fn build(&self, salt: u64) -> Result<Box<dyn LanguageModel>> {
        Ok(match self {
            MockSpec::Echo => Box::new(Echo),
            MockSpec::ShortageRepair => Box::new(ShortageRepair),
            MockSpec::Faulty { p, seed } => Box::new(Faulty::new(*p, seed.wrapping_add(salt))?),
            MockSpec::AlwaysInvalid => Box::new(AlwaysInvalid),
        })
    }
}

pub fn mock_adapter(name: &str) -> Result<Box<dyn LanguageModel>> {
    MockSpec::parse(name)?.build(0)
}
