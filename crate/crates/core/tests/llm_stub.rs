mod common;

use std::time::Duration;

use common::{serve, Reply};
use rebalance_core::adaptation::{adapt, AdaptInput, LanguageModel, LlmAdapter, LlmAdapterConfig, TransportError};
use rebalance_core::domain::{DemandMatrix, FleetState, RebalancingPlan};
use rebalance_core::ingest::DemandStats;

fn adapter(endpoint: &str, timeout_secs: f64, max_retries: u32) -> LlmAdapter {
    let cfg = LlmAdapterConfig {
        endpoint: endpoint.into(),
        model: "stub-model".into(),
        timeout_secs,
        max_retries,
        backoff_ms: 5,
        ..Default::default()
    };
    LlmAdapter::with_credential(cfg, "test-key".into()).unwrap()
}

struct World {
    state: FleetState,
    predicted: Vec<DemandMatrix>,
    stats: DemandStats,
    initial: RebalancingPlan,
}

fn world() -> World {
    let mut m = DemandMatrix::zeros(3);
    m.set(1, 2, 4);
    let mut initial = RebalancingPlan::zeros(3);
    initial.add(0, 1, 3);
    World {
        state: FleetState::new(vec![6, 1, 2]),
        predicted: vec![m],
        stats: DemandStats::zeros(3),
        initial,
    }
}

fn input(w: &World) -> AdaptInput<'_> {
    AdaptInput {
        state: &w.state,
        predicted: &w.predicted,
        stats: &w.stats,
        initial: Some(&w.initial),
        scenarios: &[],
        system_time: "07:00".into(),
        constraints: &[],
    }
}

const PLAN: &str = "Here you go:\n```json\n{\"moves\": [{\"from\": 0, \"to\": 2, \"count\": 2}]}\n```";

#[test]
fn extracts_plan_from_stub_reply() {
    let w = world();
    let stub = serve(vec![Reply::Content(PLAN.into())]);
    let t = adapt(&input(&w), &adapter(&stub.endpoint, 5.0, 0), 3).unwrap();
    assert!(t.adapted());
    assert_eq!(t.final_plan().get(0, 2), 2);
    assert_eq!(t.adapter, "stub-model");

    let body: serde_json::Value = serde_json::from_str(&stub.requests.lock().unwrap()[0]).unwrap();
    assert_eq!(body["model"], "stub-model");
    assert_eq!(body["messages"][0]["role"], "user");
    assert!(body["messages"][0]["content"].as_str().unwrap().contains("## System Status"));
}

#[test]
fn retries_server_error_then_succeeds() {
    let w = world();
    let stub = serve(vec![Reply::Status(500), Reply::Content(PLAN.into())]);
    let t = adapt(&input(&w), &adapter(&stub.endpoint, 5.0, 2), 3).unwrap();
    assert!(t.adapted());
    assert_eq!(t.iterations_used, 1);
    assert_eq!(stub.requests.lock().unwrap().len(), 2);
}

#[test]
fn client_error_is_not_retried() {
    let w = world();
    let stub = serve(vec![Reply::Status(401)]);
    let a = adapter(&stub.endpoint, 5.0, 3);
    let req = rebalance_core::adaptation::AdapterRequest {
        prompt: "hello",
        iteration: 1,
        input: &input(&w),
    };
    match a.complete(&req) {
        Err(TransportError::Status { status: 401, .. }) => {}
        other => panic!("expected 401, got {other:?}"),
    }
    assert_eq!(stub.requests.lock().unwrap().len(), 1);
}

#[test]
fn timeout_is_recorded_and_falls_back() {
    let w = world();
    let stub = serve(vec![Reply::Stall(Duration::from_secs(2))]);
    let t = adapt(&input(&w), &adapter(&stub.endpoint, 0.3, 0), 1).unwrap();
    assert!(!t.adapted());
    assert!(t.iterations[0].transport_error.is_some());
    assert_eq!(t.final_plan(), &w.initial);
}
