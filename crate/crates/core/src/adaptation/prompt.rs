use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::AdaptInput;
use crate::domain::{DemandMatrix, FleetState, PlanConstraint, PlanRecord, PlanViolation, RebalancingPlan};
use crate::error::Result;
use crate::ingest::DemandStats;
use crate::scenario::EmergentScenario;

/// Section headings in render order. The initial strategy is omitted in
/// planning mode.
pub const SECTION_TITLES: [&str; 7] = [
    "Background",
    "System Status",
    "Initial Rebalancing Strategy",
    "Emergent Situation",
    "Instruction",
    "Constraint",
    "Output Format",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptBundle {
    pub background: String,
    pub system_status: String,
    pub initial_strategy: Option<String>,
    pub emergent_situation: String,
    pub instruction: String,
    pub constraint: String,
    pub output_schema: String,
}

impl PromptBundle {
    /// `(title, body)` pairs in render order.
    pub fn sections(&self) -> Vec<(&'static str, &str)> {
        let mut out = vec![
            (SECTION_TITLES[0], self.background.as_str()),
            (SECTION_TITLES[1], self.system_status.as_str()),
        ];
        if let Some(initial) = &self.initial_strategy {
            out.push((SECTION_TITLES[2], initial.as_str()));
        }
        out.extend([
            (SECTION_TITLES[3], self.emergent_situation.as_str()),
            (SECTION_TITLES[4], self.instruction.as_str()),
            (SECTION_TITLES[5], self.constraint.as_str()),
            (SECTION_TITLES[6], self.output_schema.as_str()),
        ]);
        out
    }

    pub fn render(&self) -> String {
        self.sections()
            .into_iter()
            .map(|(title, body)| format!("## {title}\n{body}"))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

pub fn build_prompt(input: &AdaptInput<'_>) -> PromptBundle {
    let n = input.state.len();
    let horizon = input.predicted.len();

    let background = format!(
        "You are the operations agent of a shared micromobility service. The city is split into {n} regions, \
         numbered 0 to {last}. Riders pick up a vehicle in one region and drop it off in another; a request that \
         finds no vehicle in its origin region is lost. Between trips the operator can relocate idle vehicles \
         between regions. The operator wants to maximize net revenue: fares from served trips minus the cost of \
         each relocated vehicle.",
        last = n.saturating_sub(1)
    );

    let mut status = String::new();
    let _ = writeln!(status, "- System time: {}", input.system_time);
    let _ = writeln!(
        status,
        "- Current vehicle distribution (entry i = vehicles in Region i): {}",
        render_fleet(input.state)
    );
    let _ = writeln!(status, "- Predicted demand over the next {horizon} slots (origin → destination: trips):");
    status.push_str(&render_predicted(input.predicted));
    let _ = writeln!(status, "- Historical trips per slot for each region:");
    status.push_str(&render_stats(input.stats));

    let initial_strategy = input.initial.map(render_plan);

    let emergent_situation = if input.scenarios.is_empty() {
        "No emergent situation is reported.".to_string()
    } else {
        input
            .scenarios
            .iter()
            .map(|s| s.narrative.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    };

    let instruction = String::from(
        "Your task is to decide how the fleet should be rebalanced under the emergent situation above, using the vehicle distribution, the demand \
         forecast and the historical statistics. Work through these steps before answering:\n\
         1. Decide which regions need more vehicles and which regions can spare them, given both the emergent \
         situation and the operator's revenue goal.\n\
         2. Weigh revenue against any requirement the emergent situation imposes. If that requirement is a \
         different goal, estimate how well it is met before and after your change.\n\
         3. Explain why each move is worth making."
    );

    let mut constraint = String::from(
        "- The total number of vehicles in the city after your plan must equal the total before it.\n\
         - A region cannot send out more vehicles than it currently holds.\n\
         - Every count must be a non-negative whole number and every region id must be valid.",
    );
    for c in input.constraints {
        constraint.push('\n');
        constraint.push_str(&match c {
            PlanConstraint::MaxMoves { limit } => format!("- Relocate at most {limit} vehicles in total."),
            PlanConstraint::NoOutflow { region } => format!("- Region {region} must not send any vehicles out."),
        });
    }

    let output_schema = "Answer with the complete plan as one JSON object inside a fenced block, for example:\n\
         ```json\n\
         {\"moves\": [{\"from\": 4, \"to\": 1, \"count\": 2}, {\"from\": 6, \"to\": 3, \"count\": 3}]}\n\
         ```\n\
         Use {\"moves\": []} if no vehicle should move."
        .to_string();

    PromptBundle {
        background,
        system_status: status.trim_end().to_string(),
        initial_strategy,
        emergent_situation,
        instruction,
        constraint,
        output_schema,
    }
}

fn render_fleet(state: &FleetState) -> String {
    let parts: Vec<String> = state.counts().iter().map(u64::to_string).collect();
    format!("[{}]", parts.join(", "))
}

fn render_predicted(predicted: &[DemandMatrix]) -> String {
    let Some(first) = predicted.first() else {
        return "  (no forecast)\n".into();
    };
    let mut sum = DemandMatrix::zeros(first.n());
    for m in predicted {
        sum.accumulate(m);
    }
    let mut out = String::new();
    for i in 0..sum.n() {
        for j in 0..sum.n() {
            let k = sum.get(i, j);
            if k > 0 {
                let _ = writeln!(out, "  Region {i} → {j}: {k}");
            }
        }
    }
    if out.is_empty() {
        out.push_str("  (no trips expected)\n");
    }
    out
}

fn render_stats(stats: &DemandStats) -> String {
    let mut out = String::new();
    for (i, r) in stats.regions.iter().enumerate() {
        let _ = writeln!(
            out,
            "  Region {i} = {{avg: {:.2}, std: {:.2}, min: {}, max: {}}}",
            r.avg, r.std, r.min, r.max
        );
    }
    out
}

fn render_plan(plan: &RebalancingPlan) -> String {
    let moves = plan.to_moves();
    if moves.is_empty() {
        return "Keep every vehicle where it is (no moves).".into();
    }
    moves
        .iter()
        .map(|m| {
            let noun = if m.count == 1 { "vehicle" } else { "vehicles" };
            format!("Move {} {noun} from Region {} to {}", m.count, m.from, m.to)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Text appended to the prompt after a rejected answer.
pub fn reflection_addendum(previous: &str, violations: &[PlanViolation]) -> String {
    let mut out = String::from("## Reflection\nYour previous answer was:\n<<<\n");
    out.push_str(previous);
    out.push_str("\n>>>\nIt was rejected because:\n");
    for v in violations {
        let _ = writeln!(out, "- {v}");
    }
    out.push_str(
        "Check your next answer against each criterion:\n\
         1. Dimensional validity: valid region ids, non-negative whole counts, and the required JSON format.\n\
         2. Conservation: no region sends more than it holds and the city-wide total is unchanged.\n\
         3. Task satisfaction: the plan still addresses the emergent situation and the operator's goal.\n\
         Reply with the corrected complete plan.",
    );
    out
}

/// Self-contained prompt inputs, for dry runs from a JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptFixture {
    #[serde(default = "midnight")]
    pub system_time: String,
    pub state: FleetState,
    pub predicted: Vec<DemandMatrix>,
    #[serde(default)]
    pub stats: Option<DemandStats>,
    #[serde(default)]
    pub initial: Option<PlanRecord>,
    #[serde(default)]
    pub scenarios: Vec<EmergentScenario>,
    #[serde(default)]
    pub constraints: Vec<PlanConstraint>,
}

fn midnight() -> String {
    "00:00".into()
}

impl PromptFixture {
    pub fn bundle(&self) -> Result<PromptBundle> {
        let n = self.state.len();
        let initial = self.initial.clone().map(|r| r.into_plan(n)).transpose()?;
        let stats = self.stats.clone().unwrap_or_else(|| DemandStats::zeros(n));
        let input = AdaptInput {
            state: &self.state,
            predicted: &self.predicted,
            stats: &stats,
            initial: initial.as_ref(),
            scenarios: &self.scenarios,
            system_time: self.system_time.clone(),
            constraints: &self.constraints,
        };
        Ok(build_prompt(&input))
    }
}
