use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::{plan_from_moves, Move, RebalancingPlan};

/// A model reply and what could be made of it. Exactly one of `parsed_plan`
/// and `parse_error` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AdapterResponse {
    pub raw_text: String,
    pub parsed_plan: Option<RebalancingPlan>,
    pub parse_error: Option<String>,
    /// Non-fatal remarks, e.g. dropped self-moves.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Deserialize)]
struct WireMove {
    from: i64,
    to: i64,
    count: i64,
}

#[derive(Deserialize)]
struct WirePlan {
    moves: Vec<WireMove>,
}

/// Extracts the first JSON object in `raw` that has the move-list shape and
/// checks it structurally (indices below `n`, non-negative counts).
pub fn parse_response(raw: &str, n: usize) -> AdapterResponse {
    let mut response = AdapterResponse {
        raw_text: raw.to_string(),
        parsed_plan: None,
        parse_error: None,
        notes: Vec::new(),
    };
    match extract(raw) {
        Ok((offset, plan)) => match check(&plan, n) {
            Ok((moves, notes)) => {
                response.notes = notes;
                response.parsed_plan = Some(plan_from_moves(&moves, n).expect("indices checked"));
            }
            Err(msg) => response.parse_error = Some(format!("plan block at byte {offset}: {msg}")),
        },
        Err(msg) => response.parse_error = Some(msg),
    }
    response
}

fn extract(raw: &str) -> Result<(usize, WirePlan), String> {
    let mut first_problem: Option<String> = None;
    for (offset, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[offset..]).into_iter::<Value>();
        let value = match stream.next() {
            Some(Ok(v)) => v,
            Some(Err(e)) => {
                if raw[offset..].trim_start_matches('{').trim_start().starts_with("\"moves\"") {
                    first_problem.get_or_insert(format!("malformed JSON at byte {offset}: {e}"));
                }
                continue;
            }
            None => continue,
        };
        if value.get("moves").is_none() {
            continue;
        }
        match serde_json::from_value::<WirePlan>(value) {
            Ok(plan) => return Ok((offset, plan)),
            Err(e) => {
                first_problem.get_or_insert(format!("move list at byte {offset} does not match the schema: {e}"));
            }
        }
    }
    Err(first_problem.unwrap_or_else(|| match raw.find('{') {
        Some(at) => format!("no object with a \"moves\" list found (first object at byte {at})"),
        None => "no JSON object found in the response".to_string(),
    }))
}

fn check(plan: &WirePlan, n: usize) -> Result<(Vec<Move>, Vec<String>), String> {
    let mut moves = Vec::with_capacity(plan.moves.len());
    let mut notes = Vec::new();
    for (k, m) in plan.moves.iter().enumerate() {
        for idx in [m.from, m.to] {
            if idx < 0 || idx as u64 >= n as u64 {
                return Err(format!("move {k} names region index {idx}, valid range is 0..{n}"));
            }
        }
        if m.count < 0 {
            return Err(format!("move {k} has negative count {}", m.count));
        }
        if m.from == m.to {
            notes.push(format!("dropped self-move {k} (region {}, count {})", m.from, m.count));
            continue;
        }
        moves.push(Move::new(m.from as usize, m.to as usize, m.count));
    }
    Ok((moves, notes))
}
