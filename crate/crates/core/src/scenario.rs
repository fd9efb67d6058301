//! Emergent scenarios: demand surges, supply losses, and regulator goals,
//! each with a natural-language rendering, plus scripted schedules.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::apportion::round_half_up;
use crate::domain::{DemandMatrix, FleetState};
use crate::error::{Error, Result};
use crate::ingest::DemandSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    RisingDemand,
    ShrinkingSupply,
    DynamicGoal,
}

impl ScenarioKind {
    pub fn label(self) -> &'static str {
        match self {
            ScenarioKind::RisingDemand => "rising_demand",
            ScenarioKind::ShrinkingSupply => "shrinking_supply",
            ScenarioKind::DynamicGoal => "dynamic_goal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalMetric {
    EquityVariance,
    Gini,
    Theil,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalDescriptor {
    pub metric: GoalMetric,
    pub direction: Direction,
    /// Weight of the goal against revenue, in `[0, 1]`.
    pub weight: f64,
}

impl GoalDescriptor {
    /// The natural direction: the negated equity variance is maximized,
    /// Gini and Theil are minimized.
    pub fn new(metric: GoalMetric, weight: f64) -> Self {
        let direction = match metric {
            GoalMetric::EquityVariance => Direction::Maximize,
            GoalMetric::Gini | GoalMetric::Theil => Direction::Minimize,
        };
        Self {
            metric,
            direction,
            weight,
        }
    }
}

/// Scaling of outbound demand for a set of origins (`None` = every region).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandDelta {
    pub ratio: f64,
    pub regions: Option<Vec<usize>>,
}

impl DemandDelta {
    pub fn affects(&self, region: usize) -> bool {
        self.regions.as_ref().is_none_or(|r| r.contains(&region))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmergentScenario {
    pub kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand_delta: Option<DemandDelta>,
    /// Vehicles removed per region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supply_delta: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<GoalDescriptor>,
    pub magnitude_disclosed: bool,
    pub narrative: String,
    pub seed: u64,
}

impl EmergentScenario {
    /// Applies this scenario's demand change (if any) to one slot's matrix.
    pub fn perturb_demand(&self, m: &mut DemandMatrix) {
        if let Some(delta) = &self.demand_delta {
            scale_demand(m, delta);
        }
    }
}

/// Scales affected origin rows by `1 + ratio`, rounding each entry half-up.
pub fn scale_demand(m: &mut DemandMatrix, delta: &DemandDelta) {
    let factor = 1.0 + delta.ratio;
    let n = m.n();
    for i in (0..n).filter(|&i| delta.affects(i)) {
        for j in 0..n {
            let v = m.get(i, j);
            m.set(i, j, round_half_up(v as f64 * factor));
        }
    }
}

/// Phrasings for undisclosed surges, one per line with a `{region}` placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NarrativeTemplates {
    latent: Vec<String>,
}

const DEFAULT_LATENT_TEMPLATES: &str = include_str!("../data/latent_surge_templates.txt");

impl Default for NarrativeTemplates {
    fn default() -> Self {
        Self::parse(DEFAULT_LATENT_TEMPLATES).expect("bundled templates are valid")
    }
}

impl NarrativeTemplates {
    pub fn parse(text: &str) -> Result<Self> {
        let latent: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect();
        if latent.is_empty() {
            return Err(Error::Config("template file has no phrasings".into()));
        }
        if let Some(bad) = latent.iter().find(|l| !l.contains("{region}")) {
            return Err(Error::Config(format!("template lacks {{region}}: {bad}")));
        }
        if let Some(bad) = latent.iter().find(|l| l.contains('%') || l.chars().any(|c| c.is_ascii_digit())) {
            return Err(Error::Config(format!("latent template must not carry numbers: {bad}")));
        }
        Ok(Self { latent })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    fn latent(&self, rng: &mut ChaCha8Rng, region: &str) -> String {
        let template = &self.latent[rng.random_range(0..self.latent.len())];
        template.replace("{region}", region)
    }
}

fn percent(ratio: f64) -> String {
    let pct = (ratio * 100.0 * 100.0).round() / 100.0;
    format!("{pct}%")
}

fn check_regions(regions: Option<&[usize]>, n: usize) -> Result<()> {
    if let Some(bad) = regions.and_then(|r| r.iter().find(|&&r| r >= n)) {
        return Err(Error::Config(format!("scenario names region {bad}, city has {n}")));
    }
    Ok(())
}

fn rising_demand_scenario(
    n: usize,
    ratio: f64,
    regions: Option<Vec<usize>>,
    disclosed: bool,
    seed: u64,
    templates: &NarrativeTemplates,
) -> Result<EmergentScenario> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::Config(format!("rising ratio must be positive, got {ratio}")));
    }
    check_regions(regions.as_deref(), n)?;
    let narrative = if disclosed {
        match &regions {
            Some(rs) => {
                let parts: Vec<String> = rs.iter().map(|r| format!("Region {r}: +{}", percent(ratio))).collect();
                format!(
                    "Demand surge alert: trip requests departing the following regions are expected to rise above \
                     normal levels ({}). This increase is not yet reflected in the predicted demand above.",
                    parts.join(", ")
                )
            }
            None => format!(
                "Demand surge alert: trip requests departing every region are expected to rise by {} above normal \
                 levels. This increase is not yet reflected in the predicted demand above.",
                percent(ratio)
            ),
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &regions {
            Some(rs) => rs
                .iter()
                .map(|&r| templates.latent(&mut rng, &format!("Region {r}")))
                .collect::<Vec<_>>()
                .join(" "),
            None => templates.latent(&mut rng, "several parts of the city"),
        }
    };
    Ok(EmergentScenario {
        kind: ScenarioKind::RisingDemand,
        demand_delta: Some(DemandDelta { ratio, regions }),
        supply_delta: None,
        constraint: None,
        magnitude_disclosed: disclosed,
        narrative,
        seed,
    })
}

/// Scales the whole series and describes the surge. Undisclosed surges are
/// described only qualitatively.
pub fn rising_demand(
    series: &DemandSeries,
    ratio: f64,
    regions: Option<Vec<usize>>,
    disclosed: bool,
    seed: u64,
) -> Result<(DemandSeries, EmergentScenario)> {
    let scenario = rising_demand_scenario(series.n, ratio, regions, disclosed, seed, &NarrativeTemplates::default())?;
    let mut scaled = series.clone();
    for m in &mut scaled.matrices {
        scenario.perturb_demand(m);
    }
    Ok((scaled, scenario))
}

/// Removes `round(fraction * total)` vehicles drawn uniformly over all
/// stationed vehicles. For a fixed seed and fleet, a larger fraction removes
/// a superset of the vehicles a smaller one removes.
pub fn shrinking_supply(state: &FleetState, fraction: f64, seed: u64) -> Result<(FleetState, EmergentScenario)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("shrink fraction must lie in (0, 1), got {fraction}")));
    }
    let total = state.total();
    let k = round_half_up(fraction * total as f64).min(total) as usize;
    let mut vehicles: Vec<usize> = state
        .counts()
        .iter()
        .enumerate()
        .flat_map(|(r, &c)| std::iter::repeat_n(r, c as usize))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vehicles.shuffle(&mut rng);
    let mut removed = vec![0u64; state.len()];
    for &r in &vehicles[..k] {
        removed[r] += 1;
    }
    let after = FleetState::new(state.counts().iter().zip(&removed).map(|(c, r)| c - r).collect());

    let affected: Vec<String> = removed
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(r, &c)| format!("{c} vehicle{} in Region {r}", if c == 1 { "" } else { "s" }))
        .collect();
    let narrative = if affected.is_empty() {
        "Maintenance report: no vehicles are currently out of service.".to_string()
    } else {
        format!(
            "Maintenance report: {} are under maintenance and cannot serve trips or be relocated.",
            affected.join(", ")
        )
    };
    let scenario = EmergentScenario {
        kind: ScenarioKind::ShrinkingSupply,
        demand_delta: None,
        supply_delta: Some(removed),
        constraint: None,
        magnitude_disclosed: true,
        narrative,
        seed,
    };
    Ok((after, scenario))
}

/// A regulator goal phrased for the prompt.
pub fn dynamic_goal(goal: GoalDescriptor) -> EmergentScenario {
    let measure = match goal.metric {
        GoalMetric::EquityVariance => {
            "keep every region's demand-supply ratio as close as possible to the city-wide demand-supply ratio \
             (equity is the negated sum of squared deviations, so higher is better)"
        }
        GoalMetric::Gini => {
            "reduce inequality of the regional demand-supply ratio as measured by the Gini coefficient \
             (lower is better)"
        }
        GoalMetric::Theil => {
            "reduce inequality of the regional demand-supply ratio as measured by the Theil index \
             (lower is better)"
        }
    };
    let narrative = format!(
        "The city regulator requests improved vehicle deployment equity across all regions: {measure}. \
         Treat this goal as {} of the objective, with operator revenue making up the rest.",
        percent(goal.weight)
    );
    EmergentScenario {
        kind: ScenarioKind::DynamicGoal,
        demand_delta: None,
        supply_delta: None,
        constraint: Some(goal),
        magnitude_disclosed: true,
        narrative,
        seed: 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RisingParams {
    ratio: f64,
    #[serde(default)]
    regions: Option<Vec<usize>>,
    #[serde(default)]
    duration: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShrinkParams {
    fraction: f64,
    #[serde(default)]
    duration: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalParams {
    metric: GoalMetric,
    #[serde(default)]
    direction: Option<Direction>,
    #[serde(default = "default_weight")]
    weight: f64,
    #[serde(default)]
    duration: Option<usize>,
}

fn default_weight() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

/// One line of a scenario script file: `{slot, kind, params, disclosed}`.
/// `slot` counts from the first slot of the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub slot: usize,
    pub kind: ScenarioKind,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default = "default_true")]
    pub disclosed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Typed scenario parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSpec {
    RisingDemand {
        ratio: f64,
        regions: Option<Vec<usize>>,
        duration: Option<usize>,
        disclosed: bool,
    },
    ShrinkingSupply {
        fraction: f64,
        duration: Option<usize>,
    },
    DynamicGoal {
        goal: GoalDescriptor,
        duration: Option<usize>,
    },
}

impl ScenarioSpec {
    fn from_entry(entry: &ScriptEntry) -> Result<Self> {
        let params = if entry.params.is_null() {
            serde_json::Value::Object(Default::default())
        } else {
            entry.params.clone()
        };
        let bad = |e: serde_json::Error| Error::Schedule(format!("slot {} {}: {e}", entry.slot, entry.kind.label()));
        let spec = match entry.kind {
            ScenarioKind::RisingDemand => {
                let p: RisingParams = serde_json::from_value(params).map_err(bad)?;
                if !(p.ratio > 0.0) {
                    return Err(Error::Schedule(format!("slot {}: rising ratio must be positive", entry.slot)));
                }
                ScenarioSpec::RisingDemand {
                    ratio: p.ratio,
                    regions: p.regions,
                    duration: p.duration,
                    disclosed: entry.disclosed,
                }
            }
            ScenarioKind::ShrinkingSupply => {
                let p: ShrinkParams = serde_json::from_value(params).map_err(bad)?;
                if !(p.fraction > 0.0 && p.fraction < 1.0) {
                    return Err(Error::Schedule(format!("slot {}: shrink fraction must lie in (0, 1)", entry.slot)));
                }
                ScenarioSpec::ShrinkingSupply {
                    fraction: p.fraction,
                    duration: p.duration,
                }
            }
            ScenarioKind::DynamicGoal => {
                let p: GoalParams = serde_json::from_value(params).map_err(bad)?;
                if !(0.0..=1.0).contains(&p.weight) {
                    return Err(Error::Schedule(format!("slot {}: goal weight must lie in [0, 1]", entry.slot)));
                }
                let mut goal = GoalDescriptor::new(p.metric, p.weight);
                if let Some(d) = p.direction {
                    goal.direction = d;
                }
                ScenarioSpec::DynamicGoal {
                    goal,
                    duration: p.duration,
                }
            }
        };
        Ok(spec)
    }

    pub fn kind(&self) -> ScenarioKind {
        match self {
            ScenarioSpec::RisingDemand { .. } => ScenarioKind::RisingDemand,
            ScenarioSpec::ShrinkingSupply { .. } => ScenarioKind::ShrinkingSupply,
            ScenarioSpec::DynamicGoal { .. } => ScenarioKind::DynamicGoal,
        }
    }

    /// Active slots after injection; `None` lasts to the end of the episode.
    pub fn duration(&self) -> Option<usize> {
        match self {
            ScenarioSpec::RisingDemand { duration, .. }
            | ScenarioSpec::ShrinkingSupply { duration, .. }
            | ScenarioSpec::DynamicGoal { duration, .. } => *duration,
        }
    }

    /// Materializes the scenario against the current fleet. Returns the new
    /// fleet when supply changes.
    pub fn instantiate(
        &self,
        fleet: &FleetState,
        seed: u64,
        templates: &NarrativeTemplates,
    ) -> Result<(EmergentScenario, Option<FleetState>)> {
        match self {
            ScenarioSpec::RisingDemand {
                ratio,
                regions,
                disclosed,
                ..
            } => Ok((
                rising_demand_scenario(fleet.len(), *ratio, regions.clone(), *disclosed, seed, templates)?,
                None,
            )),
            ScenarioSpec::ShrinkingSupply { fraction, .. } => {
                let (after, scenario) = shrinking_supply(fleet, *fraction, seed)?;
                Ok((scenario, Some(after)))
            }
            ScenarioSpec::DynamicGoal { goal, .. } => Ok((dynamic_goal(*goal), None)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledScenario {
    pub slot: usize,
    pub spec: ScenarioSpec,
    pub seed: Option<u64>,
    index: usize,
}

/// Validated, immutable scenario script.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioSchedule {
    entries: Vec<ScriptEntry>,
    scheduled: Vec<ScheduledScenario>,
    templates: NarrativeTemplates,
}

/// Builds a schedule. Slots must be non-decreasing and no slot may carry two
/// scenarios of the same kind.
pub fn scenario_script(entries: Vec<ScriptEntry>) -> Result<ScenarioSchedule> {
    let mut scheduled = Vec::with_capacity(entries.len());
    for (index, entry) in entries.iter().enumerate() {
        if let Some(prev) = entries[..index].last() {
            if entry.slot < prev.slot {
                return Err(Error::Schedule(format!(
                    "entry {index} at slot {} comes after slot {}",
                    entry.slot, prev.slot
                )));
            }
        }
        if entries[..index].iter().any(|e| e.slot == entry.slot && e.kind == entry.kind) {
            return Err(Error::Schedule(format!(
                "two {} scenarios at slot {}",
                entry.kind.label(),
                entry.slot
            )));
        }
        scheduled.push(ScheduledScenario {
            slot: entry.slot,
            spec: ScenarioSpec::from_entry(entry)?,
            seed: entry.seed,
            index,
        });
    }
    Ok(ScenarioSchedule {
        entries,
        scheduled,
        templates: NarrativeTemplates::default(),
    })
}

impl ScenarioSchedule {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        scenario_script(serde_json::from_str(&text)?)
    }

    pub fn with_templates(mut self, templates: NarrativeTemplates) -> Self {
        self.templates = templates;
        self
    }

    pub fn templates(&self) -> &NarrativeTemplates {
        &self.templates
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    pub fn scheduled(&self) -> &[ScheduledScenario] {
        &self.scheduled
    }

    /// Concatenates another script; re-adding an entry already present is rejected.
    pub fn extend(&self, other: &ScenarioSchedule) -> Result<ScenarioSchedule> {
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().cloned());
        entries.sort_by_key(|e| e.slot);
        Ok(scenario_script(entries)?.with_templates(self.templates.clone()))
    }

    /// Overrides the magnitude (ratio or fraction) of every entry of `kind`.
    pub fn with_level(&self, kind: ScenarioKind, level: f64) -> Result<ScenarioSchedule> {
        let field = match kind {
            ScenarioKind::RisingDemand => "ratio",
            ScenarioKind::ShrinkingSupply => "fraction",
            ScenarioKind::DynamicGoal => "weight",
        };
        let mut entries = self.entries.clone();
        for e in entries.iter_mut().filter(|e| e.kind == kind) {
            if !e.params.is_object() {
                e.params = serde_json::Value::Object(Default::default());
            }
            e.params[field] = serde_json::json!(level);
        }
        Ok(scenario_script(entries)?.with_templates(self.templates.clone()))
    }

    /// Seed for an entry: its explicit seed, else one mixed from the run seed and its position.
    pub fn entry_seed(&self, base: u64, entry: &ScheduledScenario) -> u64 {
        entry.seed.unwrap_or_else(|| splitmix(base ^ splitmix(entry.index as u64 + 1)))
    }

    pub fn cursor(&self) -> ScheduleCursor<'_> {
        ScheduleCursor {
            schedule: self,
            applied: vec![false; self.scheduled.len()],
        }
    }
}

/// Tracks which entries have been injected during one episode.
pub struct ScheduleCursor<'a> {
    schedule: &'a ScenarioSchedule,
    applied: Vec<bool>,
}

impl<'a> ScheduleCursor<'a> {
    /// Entries due at `slot`. Asking for a slot whose entries were already
    /// injected is an error rather than a second application.
    pub fn take(&mut self, slot: usize) -> Result<Vec<&'a ScheduledScenario>> {
        let mut due = Vec::new();
        for (i, s) in self.schedule.scheduled.iter().enumerate().filter(|(_, s)| s.slot == slot) {
            if self.applied[i] {
                return Err(Error::Schedule(format!("scenarios at slot {slot} were already injected")));
            }
            self.applied[i] = true;
            due.push(s);
        }
        Ok(due)
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn series_with(v: u64) -> DemandSeries {
        let mut s = DemandSeries::zeros(3, 24, 2);
        s.matrices[0].set(0, 1, v);
        s.matrices[1].set(2, 0, 7);
        s
    }

    #[test]
    fn rising_scales_half_up() {
        let (scaled, sc) = rising_demand(&series_with(10), 0.5, None, true, 1).unwrap();
        assert_eq!(scaled.matrices[0].get(0, 1), 15);
        // 7 * 1.5 = 10.5 -> 11
        assert_eq!(scaled.matrices[1].get(2, 0), 11);
        assert!(sc.narrative.contains("50%"));
        let (scaled, _) = rising_demand(&series_with(0), 0.2, None, true, 1).unwrap();
        assert_eq!(scaled.matrices[0].get(0, 1), 0);
    }

    #[test]
    fn rising_sum_within_rounding() {
        let s = crate::ingest::generate_synthetic(4, 10, 24, 2.0, 4).unwrap();
        for ratio in [0.2, 0.5, 0.8, 1.0, 0.33] {
            let (scaled, _) = rising_demand(&s, ratio, None, true, 0).unwrap();
            for (a, b) in s.matrices.iter().zip(&scaled.matrices) {
                let expect = a.total() as f64 * (1.0 + ratio);
                let entries = (a.n() * a.n()) as f64;
                assert!((b.total() as f64 - expect).abs() <= 0.5 * entries + 1e-9);
            }
        }
    }

    #[test]
    fn rising_restricted_regions() {
        let (scaled, sc) = rising_demand(&series_with(10), 1.0, Some(vec![2]), true, 1).unwrap();
        assert_eq!(scaled.matrices[0].get(0, 1), 10);
        assert_eq!(scaled.matrices[1].get(2, 0), 14);
        assert!(sc.narrative.contains("Region 2: +100%"), "{}", sc.narrative);
        assert!(rising_demand(&series_with(1), 1.0, Some(vec![5]), true, 1).is_err());
    }

    #[test]
    fn latent_surge_has_no_magnitude() {
        let (_, sc) = rising_demand(&series_with(10), 0.5, Some(vec![1, 2]), false, 3).unwrap();
        assert!(!sc.narrative.contains('%'));
        assert!(!sc.narrative.contains("0.5"));
        assert!(sc.narrative.contains("Region 1"));
        assert!(!sc.magnitude_disclosed);
    }

    #[test]
    fn shrink_examples() {
        let state = FleetState::new(vec![25; 4]);
        let (after, sc) = shrinking_supply(&state, 0.10, 5).unwrap();
        assert_eq!(after.total(), 90);
        assert_eq!(sc.supply_delta.as_ref().unwrap().iter().sum::<u64>(), 10);
        assert!(sc.narrative.contains("maintenance"));

        let (after, _) = shrinking_supply(&FleetState::new(vec![20]), 0.10, 5).unwrap();
        assert_eq!(after.counts(), &[18]);

        let (a, _) = shrinking_supply(&state, 0.15, 77).unwrap();
        let (b, _) = shrinking_supply(&state, 0.15, 77).unwrap();
        assert_eq!(a, b);
        assert!(shrinking_supply(&state, 1.0, 1).is_err());
        assert!(shrinking_supply(&state, 0.0, 1).is_err());
    }

    #[test]
    fn shrink_removals_are_nested() {
        let state = FleetState::new(vec![9, 0, 14, 3, 7]);
        let mut prev = state.clone();
        for f in [0.05, 0.10, 0.15, 0.20] {
            let (after, _) = shrinking_supply(&state, f, 12).unwrap();
            assert!(after.counts().iter().zip(prev.counts()).all(|(a, p)| a <= p));
            prev = after;
        }
    }

    #[test]
    fn goal_narratives() {
        let eq = dynamic_goal(GoalDescriptor::new(GoalMetric::EquityVariance, 0.5));
        assert!(eq.narrative.contains("equity") && eq.narrative.contains("demand-supply ratio"));
        assert!(eq.demand_delta.is_none() && eq.supply_delta.is_none());
        assert!(dynamic_goal(GoalDescriptor::new(GoalMetric::Gini, 0.5)).narrative.contains("Gini coefficient"));
        assert!(dynamic_goal(GoalDescriptor::new(GoalMetric::Theil, 0.5)).narrative.contains("Theil index"));
    }

    fn entry(slot: usize, kind: ScenarioKind, params: serde_json::Value) -> ScriptEntry {
        ScriptEntry {
            slot,
            kind,
            params,
            disclosed: true,
            seed: None,
        }
    }

    #[test]
    fn script_validation() {
        assert!(scenario_script(vec![]).unwrap().is_empty());
        let ok = scenario_script(vec![
            entry(0, ScenarioKind::ShrinkingSupply, json!({"fraction": 0.1})),
            entry(0, ScenarioKind::RisingDemand, json!({"ratio": 0.5})),
            entry(12, ScenarioKind::DynamicGoal, json!({"metric": "gini"})),
        ])
        .unwrap();
        assert_eq!(ok.scheduled().len(), 3);

        let dup = scenario_script(vec![
            entry(3, ScenarioKind::RisingDemand, json!({"ratio": 0.5})),
            entry(3, ScenarioKind::RisingDemand, json!({"ratio": 0.2})),
        ]);
        assert!(matches!(dup, Err(Error::Schedule(_))));
        assert!(ok.extend(&ok).is_err());

        let backwards = scenario_script(vec![
            entry(5, ScenarioKind::RisingDemand, json!({"ratio": 0.5})),
            entry(3, ScenarioKind::DynamicGoal, json!({"metric": "theil"})),
        ]);
        assert!(backwards.is_err());
        assert!(scenario_script(vec![entry(0, ScenarioKind::RisingDemand, json!({}))]).is_err());
    }

    #[test]
    fn script_file_format() {
        let text = r#"[{"slot": 0, "kind": "rising_demand", "params": {"ratio": 0.5, "regions": [1]}, "disclosed": false}]"#;
        let entries: Vec<ScriptEntry> = serde_json::from_str(text).unwrap();
        let s = scenario_script(entries).unwrap();
        assert_eq!(
            s.scheduled()[0].spec,
            ScenarioSpec::RisingDemand {
                ratio: 0.5,
                regions: Some(vec![1]),
                duration: None,
                disclosed: false
            }
        );
    }

    #[test]
    fn cursor_injects_once() {
        let s = scenario_script(vec![entry(2, ScenarioKind::RisingDemand, json!({"ratio": 0.5}))]).unwrap();
        let mut c = s.cursor();
        assert!(c.take(0).unwrap().is_empty());
        assert_eq!(c.take(2).unwrap().len(), 1);
        assert!(c.take(2).is_err());
    }

    #[test]
    fn with_level_overrides_magnitude() {
        let s = scenario_script(vec![entry(0, ScenarioKind::ShrinkingSupply, json!({"fraction": 0.1}))]).unwrap();
        let s2 = s.with_level(ScenarioKind::ShrinkingSupply, 0.2).unwrap();
        assert!(matches!(s2.scheduled()[0].spec, ScenarioSpec::ShrinkingSupply { fraction, .. } if fraction == 0.2));
    }

    #[test]
    fn templates_reject_numbers() {
        assert!(NarrativeTemplates::parse("Crowd of 500 in {region}").is_err());
        assert!(NarrativeTemplates::parse("No placeholder").is_err());
        assert!(NarrativeTemplates::parse("# only comments\n").is_err());
        NarrativeTemplates::default();
    }
}
