//! Shared vocabulary: regions, slots, fleet state, demand, plans, and plan validity.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionId(pub usize);

impl RegionId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Region {}", self.0)
    }
}

/// A slot within a day. Ordering is `(day, slot)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeSlot {
    pub day: u32,
    pub slot: u32,
}

impl TimeSlot {
    pub fn new(day: u32, slot: u32, slots_per_day: u32) -> Result<Self> {
        if slot >= slots_per_day {
            return Err(Error::Structure(format!(
                "slot {slot} out of range for {slots_per_day} slots per day"
            )));
        }
        Ok(Self { day, slot })
    }

    pub fn from_index(index: usize, slots_per_day: u32) -> Self {
        let spd = slots_per_day as usize;
        Self {
            day: (index / spd) as u32,
            slot: (index % spd) as u32,
        }
    }

    pub fn index(self, slots_per_day: u32) -> usize {
        self.day as usize * slots_per_day as usize + self.slot as usize
    }

    /// Wall-clock start of the slot rendered as `HH:MM`.
    pub fn clock(self, slots_per_day: u32) -> String {
        let minutes = self.slot as u64 * 24 * 60 / slots_per_day as u64;
        format!("{:02}:{:02}", minutes / 60, minutes % 60)
    }
}

/// Available vehicles per region.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FleetState {
    counts: Vec<u64>,
}

impl FleetState {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn zeros(n: usize) -> Self {
        Self { counts: vec![0; n] }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, region: usize) -> u64 {
        self.counts[region]
    }

    pub(crate) fn counts_mut(&mut self) -> &mut [u64] {
        &mut self.counts
    }

    pub fn into_counts(self) -> Vec<u64> {
        self.counts
    }
}

impl From<Vec<u64>> for FleetState {
    fn from(counts: Vec<u64>) -> Self {
        Self::new(counts)
    }
}

/// Origin-destination trip counts for one slot, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u64>>", into = "Vec<Vec<u64>>")]
pub struct DemandMatrix {
    n: usize,
    od: Vec<u64>,
}

impl DemandMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, od: vec![0; n * n] }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let n = rows.len();
        let mut od = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::Structure(format!(
                    "demand row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            od.extend(row);
        }
        Ok(Self { n, od })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, from: usize, to: usize) -> u64 {
        self.od[from * self.n + to]
    }

    pub fn set(&mut self, from: usize, to: usize, count: u64) {
        self.od[from * self.n + to] = count;
    }

    pub fn add(&mut self, from: usize, to: usize, count: u64) {
        self.od[from * self.n + to] += count;
    }

    pub fn row(&self, from: usize) -> &[u64] {
        &self.od[from * self.n..(from + 1) * self.n]
    }

    pub fn outbound(&self, from: usize) -> u64 {
        self.row(from).iter().sum()
    }

    pub fn inbound(&self, to: usize) -> u64 {
        (0..self.n).map(|i| self.get(i, to)).sum()
    }

    pub fn total(&self) -> u64 {
        self.od.iter().sum()
    }

    pub fn entries(&self) -> &[u64] {
        &self.od
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [u64] {
        &mut self.od
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.od.chunks(self.n.max(1)).map(<[u64]>::to_vec).collect()
    }

    /// Element-wise sum; both matrices must share `n`.
    pub fn accumulate(&mut self, other: &DemandMatrix) {
        assert_eq!(self.n, other.n, "demand matrices differ in size");
        for (a, b) in self.od.iter_mut().zip(&other.od) {
            *a += b;
        }
    }
}

impl TryFrom<Vec<Vec<u64>>> for DemandMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<u64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<DemandMatrix> for Vec<Vec<u64>> {
    fn from(m: DemandMatrix) -> Self {
        if m.n == 0 {
            return Vec::new();
        }
        m.to_rows()
    }
}

/// One relocation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub from: usize,
    pub to: usize,
    pub count: i64,
}

impl Move {
    pub fn new(from: usize, to: usize, count: i64) -> Self {
        Self { from, to, count }
    }
}

/// Inter-region move matrix. Entries are signed so that malformed input can be
/// represented and reported by [`validate_plan`]; the diagonal is always zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RebalancingPlan {
    n: usize,
    moves: Vec<i64>,
}

impl RebalancingPlan {
    pub fn zeros(n: usize) -> Self {
        Self { n, moves: vec![0; n * n] }
    }

    pub fn from_rows(rows: Vec<Vec<i64>>) -> Result<Self> {
        let n = rows.len();
        let mut moves = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::Structure(format!(
                    "plan row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            moves.extend(row);
        }
        for i in 0..n {
            moves[i * n + i] = 0;
        }
        Ok(Self { n, moves })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, from: usize, to: usize) -> i64 {
        self.moves[from * self.n + to]
    }

    /// Adds `count` to the `from -> to` entry. Self-moves are ignored.
    pub fn add(&mut self, from: usize, to: usize, count: i64) {
        if from != to {
            self.moves[from * self.n + to] += count;
        }
    }

    pub fn outflow(&self, from: usize) -> i64 {
        self.moves[from * self.n..(from + 1) * self.n].iter().sum()
    }

    pub fn inflow(&self, to: usize) -> i64 {
        (0..self.n).map(|i| self.get(i, to)).sum()
    }

    /// Number of vehicles relocated (sum of positive entries).
    pub fn vehicles_moved(&self) -> u64 {
        self.moves.iter().filter(|&&c| c > 0).map(|&c| c as u64).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.moves.iter().all(|&c| c == 0)
    }

    /// Non-zero entries in row-major order.
    pub fn to_moves(&self) -> Vec<Move> {
        let mut out = Vec::new();
        for from in 0..self.n {
            for to in 0..self.n {
                let count = self.get(from, to);
                if count != 0 {
                    out.push(Move { from, to, count });
                }
            }
        }
        out
    }

    pub fn to_record(&self) -> PlanRecord {
        PlanRecord {
            moves: self.to_moves(),
        }
    }
}

/// Wire form of a plan: `{"moves":[{"from":0,"to":1,"count":2}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlanRecord {
    pub moves: Vec<Move>,
}

impl PlanRecord {
    pub fn into_plan(self, n: usize) -> Result<RebalancingPlan> {
        plan_from_moves(&self.moves, n)
    }
}

impl Serialize for RebalancingPlan {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(serializer)
    }
}

/// Builds a plan from a move list. Duplicate pairs accumulate, self-moves are dropped.
pub fn plan_from_moves(moves: &[Move], n: usize) -> Result<RebalancingPlan> {
    let mut plan = RebalancingPlan::zeros(n);
    for (index, m) in moves.iter().enumerate() {
        if m.from >= n || m.to >= n {
            return Err(Error::MoveOutOfRange {
                index,
                from: m.from,
                to: m.to,
                count: m.count,
                n,
            });
        }
        plan.add(m.from, m.to, m.count);
    }
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    MalformedShape,
    NegativeEntry,
    SourceOverdraw,
    ConservationBreak,
    ConstraintBreach,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanViolation {
    pub kind: ViolationKind,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<(usize, usize)>,
}

impl PlanViolation {
    fn new(kind: ViolationKind, detail: String, location: Option<(usize, usize)>) -> Self {
        debug_assert!(!detail.is_empty());
        Self {
            kind,
            detail,
            location,
        }
    }
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}] {}", self.kind, self.detail)
    }
}

/// Extra operational limits checked on top of the structural rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum PlanConstraint {
    /// Cap on the number of vehicles relocated in one decision.
    MaxMoves { limit: u64 },
    /// Region must not ship vehicles out.
    NoOutflow { region: usize },
}

/// Checks a plan against a fleet state. All violations are reported, in a
/// stable order: shape, negative entries, overdraws, conservation.
pub fn validate_plan(state: &FleetState, plan: &RebalancingPlan, total_before: u64) -> Vec<PlanViolation> {
    validate_plan_with(state, plan, total_before, &[])
}

pub fn validate_plan_with(
    state: &FleetState,
    plan: &RebalancingPlan,
    total_before: u64,
    constraints: &[PlanConstraint],
) -> Vec<PlanViolation> {
    let n = state.len();
    let mut violations = Vec::new();
    if plan.n() != n {
        violations.push(PlanViolation::new(
            ViolationKind::MalformedShape,
            format!("plan is {0}x{0} but the city has {n} regions", plan.n()),
            None,
        ));
        if state.total() != total_before {
            violations.push(conservation_break(state.total(), total_before));
        }
        return violations;
    }

    for from in 0..n {
        for to in 0..n {
            let c = plan.get(from, to);
            if c < 0 {
                violations.push(PlanViolation::new(
                    ViolationKind::NegativeEntry,
                    format!("move {from} -> {to} has negative count {c}"),
                    Some((from, to)),
                ));
            }
        }
    }

    for from in 0..n {
        let available = state.get(from) as i128;
        let mut shipped: i128 = 0;
        let mut first_excess = None;
        for to in 0..n {
            let c = plan.get(from, to);
            if c > 0 {
                shipped += c as i128;
                if shipped > available && first_excess.is_none() {
                    first_excess = Some(to);
                }
            }
        }
        if let Some(to) = first_excess {
            violations.push(PlanViolation::new(
                ViolationKind::SourceOverdraw,
                format!("region {from} ships {shipped} vehicles but only holds {available}"),
                Some((from, to)),
            ));
        }
    }

    let after: i128 = (0..n)
        .map(|j| state.get(j) as i128 - plan.outflow(j) as i128 + plan.inflow(j) as i128)
        .sum();
    if after != total_before as i128 {
        violations.push(conservation_break_signed(after, total_before));
    }

    for constraint in constraints {
        match *constraint {
            PlanConstraint::MaxMoves { limit } => {
                let moved = plan.vehicles_moved();
                if moved > limit {
                    violations.push(PlanViolation::new(
                        ViolationKind::ConstraintBreach,
                        format!("plan relocates {moved} vehicles, limit is {limit}"),
                        None,
                    ));
                }
            }
            PlanConstraint::NoOutflow { region } => {
                if region < n {
                    if let Some(to) = (0..n).find(|&to| plan.get(region, to) > 0) {
                        violations.push(PlanViolation::new(
                            ViolationKind::ConstraintBreach,
                            format!("region {region} must not ship vehicles out"),
                            Some((region, to)),
                        ));
                    }
                }
            }
        }
    }
    violations
}

fn conservation_break(after: u64, before: u64) -> PlanViolation {
    conservation_break_signed(after as i128, before)
}

fn conservation_break_signed(after: i128, before: u64) -> PlanViolation {
    PlanViolation::new(
        ViolationKind::ConservationBreak,
        format!("fleet total after the plan is {after}, expected {before}"),
        None,
    )
}

/// Applies a plan, refusing anything `validate_plan` rejects.
pub fn apply_plan(state: &FleetState, plan: &RebalancingPlan) -> Result<FleetState> {
    let violations = validate_plan(state, plan, state.total());
    if !violations.is_empty() {
        return Err(Error::InvalidPlan(violations));
    }
    let counts = (0..state.len())
        .map(|j| (state.get(j) as i64 - plan.outflow(j) + plan.inflow(j)) as u64)
        .collect();
    Ok(FleetState::new(counts))
}

/// Run parameters shared by every module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_regions: usize,
    pub slots_per_day: u32,
    /// Slots between rebalancing decisions.
    pub rebalance_period: u32,
    /// Slots of predicted demand handed to policies. No published value; one period by default.
    pub horizon: usize,
    pub fare_per_trip: f64,
    pub move_cost: f64,
    pub rng_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_regions: 77,
            slots_per_day: 24,
            rebalance_period: 12,
            horizon: 12,
            fare_per_trip: 1.0,
            move_cost: 0.1,
            rng_seed: 42,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_regions == 0 {
            return bad("n_regions must be at least 1".into());
        }
        if self.slots_per_day == 0 || self.rebalance_period == 0 {
            return bad("slots_per_day and rebalance_period must be positive".into());
        }
        if self.slots_per_day % self.rebalance_period != 0 {
            return bad(format!(
                "rebalance_period {} does not divide slots_per_day {}",
                self.rebalance_period, self.slots_per_day
            ));
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.fare_per_trip >= 0.0) || !(self.move_cost >= 0.0) {
            return bad("fare_per_trip and move_cost must be non-negative".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plan(n: usize, moves: &[(usize, usize, i64)]) -> RebalancingPlan {
        let moves: Vec<Move> = moves.iter().map(|&(f, t, c)| Move::new(f, t, c)).collect();
        plan_from_moves(&moves, n).unwrap()
    }

    #[test]
    fn apply_single_move() {
        let s = FleetState::new(vec![12, 5, 8]);
        let out = apply_plan(&s, &plan(3, &[(0, 1, 2)])).unwrap();
        assert_eq!(out.counts(), &[10, 7, 8]);
    }

    #[test]
    fn apply_zero_plan_is_identity() {
        let s = FleetState::new(vec![12, 5, 8]);
        assert_eq!(apply_plan(&s, &RebalancingPlan::zeros(3)).unwrap(), s);
    }

    #[test]
    fn apply_cycle() {
        let s = FleetState::new(vec![3, 3, 3]);
        let p = plan(3, &[(0, 1, 1), (1, 2, 1), (2, 0, 1)]);
        assert_eq!(apply_plan(&s, &p).unwrap().counts(), &[3, 3, 3]);
    }

    #[test]
    fn apply_rejects_overdraw() {
        let s = FleetState::new(vec![3, 5]);
        let err = apply_plan(&s, &plan(2, &[(0, 1, 5)])).unwrap_err();
        assert!(matches!(err, Error::InvalidPlan(ref v) if v[0].kind == ViolationKind::SourceOverdraw));
    }

    #[test]
    fn validate_feasible() {
        let s = FleetState::new(vec![12, 5]);
        assert!(validate_plan(&s, &plan(2, &[(0, 1, 2)]), 17).is_empty());
    }

    #[test]
    fn validate_overdraw_location() {
        let s = FleetState::new(vec![3, 5]);
        let v = validate_plan(&s, &plan(2, &[(0, 1, 5)]), 8);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::SourceOverdraw);
        assert_eq!(v[0].location, Some((0, 1)));
    }

    #[test]
    fn validate_negative_entry() {
        let s = FleetState::new(vec![3, 5]);
        let p = RebalancingPlan::from_rows(vec![vec![0, -1], vec![0, 0]]).unwrap();
        let v = validate_plan(&s, &p, 8);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::NegativeEntry);
        assert_eq!(v[0].location, Some((0, 1)));
    }

    #[test]
    fn validate_reports_every_violation() {
        let s = FleetState::new(vec![1, 1, 1]);
        let p = RebalancingPlan::from_rows(vec![vec![0, 4, 0], vec![-2, 0, 0], vec![0, 3, 0]]).unwrap();
        let kinds: Vec<_> = validate_plan(&s, &p, 5).into_iter().map(|v| v.kind).collect();
        assert_eq!(
            kinds,
            vec![
                ViolationKind::NegativeEntry,
                ViolationKind::SourceOverdraw,
                ViolationKind::SourceOverdraw,
                ViolationKind::ConservationBreak,
            ]
        );
    }

    #[test]
    fn validate_shape_mismatch() {
        let s = FleetState::new(vec![1, 1, 1]);
        let v = validate_plan(&s, &RebalancingPlan::zeros(2), 3);
        assert_eq!(v[0].kind, ViolationKind::MalformedShape);
    }

    #[test]
    fn constraints_are_reported_as_breaches() {
        let s = FleetState::new(vec![5, 5]);
        let p = plan(2, &[(0, 1, 3)]);
        let v = validate_plan_with(
            &s,
            &p,
            10,
            &[PlanConstraint::MaxMoves { limit: 2 }, PlanConstraint::NoOutflow { region: 0 }],
        );
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|v| v.kind == ViolationKind::ConstraintBreach));
    }

    #[test]
    fn plan_from_moves_examples() {
        let p = plan(6, &[(4, 1, 2)]);
        assert_eq!(p.get(4, 1), 2);
        assert_eq!(p.vehicles_moved(), 2);
        assert_eq!(plan(2, &[(0, 1, 2), (0, 1, 3)]).get(0, 1), 5);
        assert!(plan(2, &[(1, 1, 7)]).is_zero());
    }

    #[test]
    fn plan_from_moves_rejects_out_of_range() {
        let err = plan_from_moves(&[Move::new(0, 9, 1)], 3).unwrap_err();
        assert!(err.to_string().contains('9'), "{err}");
    }

    #[test]
    fn diagonal_is_normalized() {
        let p = RebalancingPlan::from_rows(vec![vec![4, 1], vec![0, 9]]).unwrap();
        assert_eq!(p.get(0, 0), 0);
        assert_eq!(p.get(1, 1), 0);
    }

    #[test]
    fn plan_record_json() {
        let p = plan(3, &[(0, 1, 2)]);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"moves":[{"from":0,"to":1,"count":2}]}"#);
        let back: PlanRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_plan(3).unwrap(), p);
    }

    #[test]
    fn time_slot_order_and_clock() {
        let a = TimeSlot::new(0, 23, 24).unwrap();
        let b = TimeSlot::new(1, 0, 24).unwrap();
        assert!(a < b);
        assert_eq!(TimeSlot::from_index(b.index(24), 24), b);
        assert_eq!(TimeSlot::new(0, 12, 24).unwrap().clock(24), "12:00");
        assert!(TimeSlot::new(0, 24, 24).is_err());
    }

    #[test]
    fn config_defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
        let cfg = ExperimentConfig {
            rebalance_period: 7,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    fn feasible_instance() -> impl Strategy<Value = (FleetState, RebalancingPlan)> {
        (2usize..6)
            .prop_flat_map(|n| (proptest::collection::vec(0u64..20, n), Just(n)))
            .prop_flat_map(|(counts, n)| {
                let rows = counts
                    .iter()
                    .map(|&c| proptest::collection::vec(0u64..=c, n))
                    .collect::<Vec<_>>();
                (Just(counts), rows)
            })
            .prop_map(|(counts, rows)| {
                let n = counts.len();
                let mut plan = RebalancingPlan::zeros(n);
                for (i, row) in rows.iter().enumerate() {
                    // scale a row of independent draws down so the source never overdraws
                    let mut budget = counts[i];
                    for (j, &want) in row.iter().enumerate() {
                        if i == j {
                            continue;
                        }
                        let take = want.min(budget);
                        plan.add(i, j, take as i64);
                        budget -= take;
                    }
                }
                (FleetState::new(counts), plan)
            })
    }

    proptest! {
        #[test]
        fn feasible_plans_conserve_and_stay_non_negative((state, plan) in feasible_instance()) {
            prop_assert!(validate_plan(&state, &plan, state.total()).is_empty());
            let after = apply_plan(&state, &plan).unwrap();
            prop_assert_eq!(after.total(), state.total());
        }

        #[test]
        fn validation_is_deterministic((state, plan) in feasible_instance(), bump in 0i64..30) {
            let mut p = plan.clone();
            p.add(0, 1, bump);
            prop_assert_eq!(validate_plan(&state, &p, state.total()), validate_plan(&state, &p, state.total()));
        }

        #[test]
        fn move_list_round_trip((_, plan) in feasible_instance()) {
            let again = plan_from_moves(&plan.to_moves(), plan.n()).unwrap();
            prop_assert_eq!(&again, &plan);
            prop_assert_eq!(plan_from_moves(&again.to_moves(), again.n()).unwrap(), again);
        }
    }
}
