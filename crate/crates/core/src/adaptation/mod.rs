//! Plan adaptation: prompt construction, a narrow language-model interface,
//! response parsing, and the bounded self-reflection loop with fallback.

pub mod llm;
pub mod mock;
mod parse;
mod prompt;

pub use llm::{llm_adapter, LlmAdapter, LlmAdapterConfig};
pub use mock::{mock_adapter, AlwaysInvalid, Echo, Faulty, MockSpec, Scripted, ShortageRepair};
pub use parse::{parse_response, AdapterResponse};
pub use prompt::{build_prompt, reflection_addendum, PromptBundle, PromptFixture, SECTION_TITLES};

use serde::Serialize;
use thiserror::Error;

use crate::domain::{validate_plan_with, DemandMatrix, FleetState, PlanConstraint, PlanViolation, RebalancingPlan, ViolationKind};
use crate::error::{Error, Result};
use crate::ingest::DemandStats;
use crate::scenario::EmergentScenario;

/// Default reflection depth.
pub const DEFAULT_MAX_ITERATIONS: usize = 10;

/// Failure to obtain any text from the model.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("unexpected response body: {0}")]
    Body(String),
}

/// Everything the adaptation loop knows at a decision point.
#[derive(Debug, Clone)]
pub struct AdaptInput<'a> {
    pub state: &'a FleetState,
    pub predicted: &'a [DemandMatrix],
    pub stats: &'a DemandStats,
    /// Baseline plan; `None` runs the loop in pure planning mode.
    pub initial: Option<&'a RebalancingPlan>,
    pub scenarios: &'a [EmergentScenario],
    /// Wall-clock label shown in the prompt, e.g. "08:00".
    pub system_time: String,
    pub constraints: &'a [PlanConstraint],
}

/// One call to a model. Live adapters only read `prompt`; offline mocks may
/// also inspect the structured context the prompt was rendered from.
pub struct AdapterRequest<'a> {
    pub prompt: &'a str,
    /// 1-based iteration within the current loop.
    pub iteration: usize,
    pub input: &'a AdaptInput<'a>,
}

/// Prompt text in, raw text out.
pub trait LanguageModel: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &AdapterRequest<'_>) -> Result<String, TransportError>;
}

/// An adapter plus loop settings, attached to an episode.
pub struct AdaptationLoop<'a> {
    pub adapter: &'a dyn LanguageModel,
    pub max_iterations: usize,
    pub constraints: Vec<PlanConstraint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Full prompt on the first iteration, the reflection addendum afterwards.
    pub prompt_delta: String,
    /// `None` when the transport failed and no text came back.
    pub response: Option<AdapterResponse>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transport_error: Option<String>,
    pub violations: Vec<PlanViolation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "plan")]
pub enum AdaptOutcome {
    Adapted(RebalancingPlan),
    /// Initial plan, or the zero plan in planning mode.
    FellBack(RebalancingPlan),
}

#[derive(Debug, Clone, Serialize)]
pub struct AdaptationTranscript {
    pub adapter: String,
    pub system_time: String,
    pub iterations: Vec<IterationRecord>,
    pub outcome: AdaptOutcome,
    pub iterations_used: usize,
}

impl AdaptationTranscript {
    pub fn final_plan(&self) -> &RebalancingPlan {
        match &self.outcome {
            AdaptOutcome::Adapted(p) | AdaptOutcome::FellBack(p) => p,
        }
    }

    pub fn adapted(&self) -> bool {
        matches!(self.outcome, AdaptOutcome::Adapted(_))
    }
}

/// Runs the self-reflection loop.
///
/// Each iteration sends the prompt (for k > 1 extended by the previous
/// response and its violations), parses the reply and validates it against
/// the current fleet. The first fully valid plan is adopted. A transport
/// failure counts as a failed iteration. When the budget runs out the initial
/// plan is returned, or the zero plan when there is no valid initial plan.
pub fn adapt(input: &AdaptInput<'_>, adapter: &dyn LanguageModel, max_iterations: usize) -> Result<AdaptationTranscript> {
    if max_iterations == 0 {
        return Err(Error::Config("max_iterations must be at least 1".into()));
    }
    let n = input.state.len();
    let total = input.state.total();
    let bundle = build_prompt(input);
    let base = bundle.render();
    let mut prompt = base.clone();
    let mut delta = base.clone();
    let mut iterations = Vec::with_capacity(max_iterations);

    for k in 1..=max_iterations {
        let request = AdapterRequest {
            prompt: &prompt,
            iteration: k,
            input,
        };
        let reply = adapter.complete(&request);
        // After a transport failure the same prompt is resent, so the next delta is empty.
        let prompt_delta = std::mem::take(&mut delta);
        let (record, plan) = match reply {
            Err(e) => (
                IterationRecord {
                    iteration: k,
                    prompt_delta,
                    response: None,
                    transport_error: Some(e.to_string()),
                    violations: Vec::new(),
                },
                None,
            ),
            Ok(raw) => {
                let response = parse_response(&raw, n);
                let violations = match (&response.parsed_plan, &response.parse_error) {
                    (Some(plan), _) => validate_plan_with(input.state, plan, total, input.constraints),
                    (None, err) => vec![PlanViolation {
                        kind: ViolationKind::MalformedShape,
                        detail: err.clone().unwrap_or_else(|| "unparseable response".into()),
                        location: None,
                    }],
                };
                let plan = if violations.is_empty() {
                    response.parsed_plan.clone()
                } else {
                    let addendum = reflection_addendum(&raw, &violations);
                    prompt = format!("{base}\n\n{addendum}");
                    delta = addendum;
                    None
                };
                (
                    IterationRecord {
                        iteration: k,
                        prompt_delta,
                        response: Some(response),
                        transport_error: None,
                        violations,
                    },
                    plan,
                )
            }
        };
        iterations.push(record);
        if let Some(plan) = plan {
            return Ok(AdaptationTranscript {
                adapter: adapter.name().to_string(),
                system_time: input.system_time.clone(),
                iterations_used: k,
                iterations,
                outcome: AdaptOutcome::Adapted(plan),
            });
        }
    }

    // An initial plan that is itself invalid is never returned.
    let fallback = input
        .initial
        .filter(|p| validate_plan_with(input.state, p, total, input.constraints).is_empty())
        .cloned()
        .unwrap_or_else(|| RebalancingPlan::zeros(n));
    Ok(AdaptationTranscript {
        adapter: adapter.name().to_string(),
        system_time: input.system_time.clone(),
        iterations_used: max_iterations,
        iterations,
        outcome: AdaptOutcome::FellBack(fallback),
    })
}
