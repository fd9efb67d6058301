//! Evaluation metrics: satisfaction, demand-supply equity, Gini, Theil.

use serde::{Deserialize, Serialize};

use crate::simulator::EpisodeResult;

/// Relative substitute for zero entries in the Theil index.
pub const THEIL_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Satisfaction {
    /// Unweighted mean over regions with demand.
    pub avg: f64,
    /// `None` for regions without demand.
    pub per_region: Vec<Option<f64>>,
    /// Set when nothing was demanded anywhere; `avg` is then 1.0.
    pub no_demand: bool,
}

/// Per-origin satisfaction from served and requested trip counts.
pub fn satisfaction_from(served: &[u64], demand: &[u64]) -> Satisfaction {
    let per_region: Vec<Option<f64>> = served
        .iter()
        .zip(demand)
        .map(|(&s, &d)| (d > 0).then(|| s as f64 / d as f64))
        .collect();
    let rated: Vec<f64> = per_region.iter().flatten().copied().collect();
    if rated.is_empty() {
        return Satisfaction {
            avg: 1.0,
            per_region,
            no_demand: true,
        };
    }
    Satisfaction {
        avg: rated.iter().sum::<f64>() / rated.len() as f64,
        per_region,
        no_demand: false,
    }
}

pub fn satisfaction_rate(result: &EpisodeResult) -> Satisfaction {
    let n = result.slots.first().map_or(0, |s| s.demand.n());
    let mut served = vec![0u64; n];
    let mut demand = vec![0u64; n];
    for slot in &result.slots {
        for i in 0..n {
            served[i] += slot.satisfied.outbound(i);
            demand[i] += slot.demand.outbound(i);
        }
    }
    satisfaction_from(&served, &demand)
}

/// Episode supply (Σ_t start-of-slot fleet) and demand (Σ_t outbound) per region.
pub fn episode_supply_demand(result: &EpisodeResult) -> (Vec<u64>, Vec<u64>) {
    let n = result.slots.first().map_or(0, |s| s.demand.n());
    let mut supply = vec![0u64; n];
    let mut demand = vec![0u64; n];
    for slot in &result.slots {
        for i in 0..n {
            supply[i] += slot.fleet_before.get(i);
            demand[i] += slot.demand.outbound(i);
        }
    }
    (supply, demand)
}

/// `r_i = d_i / max(s_i, 1)`.
pub fn demand_supply_ratios(supply: &[u64], demand: &[u64]) -> Vec<f64> {
    supply
        .iter()
        .zip(demand)
        .map(|(&s, &d)| d as f64 / s.max(1) as f64)
        .collect()
}

/// `-Σ_i (r_i - R)²` with `R` the city-wide demand over supply. Higher is better.
pub fn equity_variance(supply: &[u64], demand: &[u64]) -> f64 {
    let s: u64 = supply.iter().sum();
    let d: u64 = demand.iter().sum();
    let city = d as f64 / s.max(1) as f64;
    -demand_supply_ratios(supply, demand)
        .iter()
        .map(|r| (r - city).powi(2))
        .sum::<f64>()
}

/// Gini coefficient via the sorted-rank form. All-zero or empty input gives 0.
pub fn gini(values: &[f64]) -> f64 {
    let n = values.len();
    let total: f64 = values.iter().sum();
    if n == 0 || total <= 0.0 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - n as f64 - 1.0) * x)
        .sum();
    let mean = total / n as f64;
    weighted / (n as f64 * n as f64 * mean)
}

/// Theil index and whether zero entries had to be substituted.
pub fn theil_flagged(values: &[f64]) -> (f64, bool) {
    let n = values.len();
    let total: f64 = values.iter().sum();
    if n == 0 || total <= 0.0 {
        return (0.0, !values.is_empty());
    }
    let mean = total / n as f64;
    let mut substituted = false;
    let t = values
        .iter()
        .map(|&x| {
            let x = if x > 0.0 {
                x
            } else {
                substituted = true;
                THEIL_EPSILON * mean
            };
            let q = x / mean;
            q * q.ln()
        })
        .sum::<f64>()
        / n as f64;
    (t, substituted)
}

pub fn theil(values: &[f64]) -> f64 {
    theil_flagged(values).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub avg_satisfaction: f64,
    pub per_region_satisfaction: Vec<Option<f64>>,
    pub equity: f64,
    pub gini: f64,
    pub theil: f64,
    pub revenue: f64,
    pub total_satisfied: u64,
    pub total_demand: u64,
    pub vehicles_moved: u64,
    /// Degenerate cases hit while computing the report.
    pub flags: Vec<String>,
}

impl MetricsReport {
    pub fn from_episode(result: &EpisodeResult) -> Self {
        let sat = satisfaction_rate(result);
        let (supply, demand) = episode_supply_demand(result);
        let ratios = demand_supply_ratios(&supply, &demand);
        let (theil, theil_sub) = theil_flagged(&ratios);
        let mut flags = Vec::new();
        if sat.no_demand {
            flags.push("no_demand".to_string());
        }
        if ratios.iter().all(|&r| r == 0.0) {
            flags.push("gini_all_zero".to_string());
        }
        if theil_sub {
            flags.push("theil_zero_substituted".to_string());
        }
        Self {
            avg_satisfaction: sat.avg,
            per_region_satisfaction: sat.per_region,
            equity: equity_variance(&supply, &demand),
            gini: gini(&ratios),
            theil,
            revenue: result.revenue,
            total_satisfied: result.total_satisfied,
            total_demand: result.total_demand,
            vehicles_moved: result.moves_executed,
            flags,
        }
    }

    /// Named scalar metrics, in a fixed order.
    pub fn scalars(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("avg_satisfaction", self.avg_satisfaction),
            ("equity", self.equity),
            ("gini", self.gini),
            ("theil", self.theil),
            ("revenue", self.revenue),
            ("total_satisfied", self.total_satisfied as f64),
            ("total_demand", self.total_demand as f64),
            ("vehicles_moved", self.vehicles_moved as f64),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise_gini(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let mut s = 0.0;
        for a in x {
            for b in x {
                s += (a - b).abs();
            }
        }
        s / (2.0 * n * n * mean)
    }

    #[test]
    fn satisfaction_examples() {
        assert_eq!(satisfaction_from(&[4, 2], &[4, 2]).avg, 1.0);
        assert_eq!(satisfaction_from(&[0, 0], &[3, 1]).avg, 0.0);
        let s = satisfaction_from(&[2, 1, 0], &[2, 2, 0]);
        assert_eq!(s.avg, 0.75);
        assert_eq!(s.per_region[2], None);
        let none = satisfaction_from(&[0, 0], &[0, 0]);
        assert!(none.no_demand && none.avg == 1.0);
    }

    #[test]
    fn equity_examples() {
        assert_eq!(equity_variance(&[2, 4], &[1, 2]), 0.0);
        // r = [2, 0], R = 2/2 = 1
        assert_eq!(equity_variance(&[1, 1], &[2, 0]), -2.0);
        let a = equity_variance(&[3, 5, 2], &[6, 1, 4]);
        let b = equity_variance(&[9, 15, 6], &[18, 3, 12]);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[3.0; 5]), 0.0);
        assert!((gini(&[1.0, 2.0, 3.0, 4.0]) - 0.25).abs() < 1e-12);
        assert!((gini(&[0.0, 0.0, 0.0, 7.0]) - 0.75).abs() < 1e-12);
        assert_eq!(gini(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn theil_examples() {
        assert_eq!(theil(&[2.0; 4]), 0.0);
        // direct evaluation for [1,1,1,5]: mean 2
        let direct = (3.0 * 0.5 * 0.5f64.ln() + 2.5 * 2.5f64.ln()) / 4.0;
        assert!((theil(&[1.0, 1.0, 1.0, 5.0]) - direct).abs() < 1e-12);
        let (_, flagged) = theil_flagged(&[0.0, 1.0, 2.0]);
        assert!(flagged);
    }

    #[test]
    fn gini_and_theil_rank_alike_on_growing_spread() {
        let mut last = (0.0, 0.0);
        for k in 2..30 {
            let mut x = vec![1.0; 5];
            x[4] = k as f64;
            let now = (gini(&x), theil(&x));
            assert!(now.0 > last.0 && now.1 > last.1);
            last = now;
        }
    }

    proptest! {
        #[test]
        fn gini_matches_pairwise(x in proptest::collection::vec(0.0f64..100.0, 1..12)) {
            prop_assume!(x.iter().sum::<f64>() > 0.0);
            prop_assert!((gini(&x) - pairwise_gini(&x)).abs() < 1e-9);
        }

        #[test]
        fn gini_bounds_and_invariances(x in proptest::collection::vec(0.0f64..100.0, 1..12), c in 0.1f64..50.0) {
            prop_assume!(x.iter().sum::<f64>() > 0.0);
            let n = x.len() as f64;
            let g = gini(&x);
            prop_assert!(g >= -1e-12 && g <= (n - 1.0) / n + 1e-12);
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            prop_assert!((gini(&scaled) - g).abs() < 1e-9);
            let mut rev = x.clone();
            rev.reverse();
            prop_assert!((gini(&rev) - g).abs() < 1e-9);
        }

        #[test]
        fn theil_nonnegative_and_invariant(x in proptest::collection::vec(0.01f64..100.0, 1..12), c in 0.1f64..50.0) {
            let t = theil(&x);
            prop_assert!(t >= -1e-12);
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            prop_assert!((theil(&scaled) - t).abs() < 1e-9);
            let mut rev = x.clone();
            rev.reverse();
            prop_assert!((theil(&rev) - t).abs() < 1e-9);
        }

        #[test]
        fn equity_nonpositive_and_homogeneous(
            sd in proptest::collection::vec((1u64..50, 0u64..50), 1..8),
            c in 1u64..6,
        ) {
            let (s, d): (Vec<u64>, Vec<u64>) = sd.into_iter().unzip();
            let e = equity_variance(&s, &d);
            prop_assert!(e <= 0.0);
            let s2: Vec<u64> = s.iter().map(|v| v * c).collect();
            let d2: Vec<u64> = d.iter().map(|v| v * c).collect();
            prop_assert!((equity_variance(&s2, &d2) - e).abs() < 1e-9 * (1.0 + e.abs()));
        }
    }
}
