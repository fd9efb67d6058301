use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{apply_plan, DemandMatrix, FleetState, RebalancingPlan};
use crate::error::{Error, Result};
use crate::rebalancer::{plan_to_targets, sdsm_targets};
use crate::simulator::project;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    /// Per-region probability of shifting one vehicle to a random other region.
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub elite_count: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 50,
            generations: 100,
            mutation_rate: 0.1,
            crossover_rate: 0.9,
            elite_count: 2,
            seed: 7,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::Config("GA population must hold at least 2 individuals".into()));
        }
        if self.elite_count >= self.population_size {
            return Err(Error::Config("GA elite_count must be below population_size".into()));
        }
        for (name, rate) in [("mutation_rate", self.mutation_rate), ("crossover_rate", self.crossover_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("GA {name} must lie in [0, 1], got {rate}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub plan: RebalancingPlan,
    pub targets: Vec<u64>,
    pub fitness: f64,
    /// Best fitness seen so far, recorded after the initial population and after each generation.
    pub history: Vec<f64>,
}

type Fitness<'a> = dyn Fn(&RebalancingPlan) -> f64 + Sync + 'a;

/// Genetic search over target distributions (integer compositions of the
/// fleet total). Plans are derived from targets with `plan_to_targets`, so
/// every individual is feasible.
pub struct GeneticSearch<'a> {
    state: &'a FleetState,
    cfg: &'a GaConfig,
    fitness: &'a Fitness<'a>,
}

impl<'a> GeneticSearch<'a> {
    pub fn new(state: &'a FleetState, cfg: &'a GaConfig, fitness: &'a Fitness<'a>) -> Self {
        Self { state, cfg, fitness }
    }

    fn plan_for(&self, targets: &[u64]) -> RebalancingPlan {
        plan_to_targets(self.state, targets).expect("individuals keep the fleet total")
    }

    fn evaluate(&self, population: &[Vec<u64>]) -> Vec<f64> {
        population
            .par_iter()
            .map(|targets| (self.fitness)(&self.plan_for(targets)))
            .collect()
    }

    /// Default seeding: the current distribution, the demand-proportional
    /// distribution, and random perturbations of the current one.
    pub fn seed_population(&self, predicted: &[DemandMatrix], rng: &mut ChaCha8Rng) -> Vec<Vec<u64>> {
        let current = self.state.counts().to_vec();
        let mut population = vec![current.clone(), sdsm_targets(self.state, predicted)];
        let total = self.state.total();
        while population.len() < self.cfg.population_size {
            let mut individual = current.clone();
            let shifts = rng.random_range(1..=(total / 4).max(1));
            for _ in 0..shifts {
                shift_one(&mut individual, rng);
            }
            population.push(individual);
        }
        population.truncate(self.cfg.population_size);
        population
    }

    pub fn run(&self, mut population: Vec<Vec<u64>>, rng: &mut ChaCha8Rng) -> GaOutcome {
        let total = self.state.total();
        let mut scores = self.evaluate(&population);
        let first = best_index(&scores);
        let mut best = (population[first].clone(), scores[first]);
        let mut history = vec![best.1];

        for _ in 0..self.cfg.generations {
            let mut ranked: Vec<usize> = (0..population.len()).collect();
            ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

            let mut next: Vec<Vec<u64>> = ranked
                .iter()
                .take(self.cfg.elite_count)
                .map(|&i| population[i].clone())
                .collect();
            while next.len() < population.len() {
                let a = tournament(&scores, rng);
                let b = tournament(&scores, rng);
                let mut child = if self.state.len() > 1 && rng.random_bool(self.cfg.crossover_rate) {
                    crossover(&population[a], &population[b], total, rng)
                } else {
                    population[a].clone()
                };
                mutate(&mut child, self.cfg.mutation_rate, rng);
                next.push(child);
            }
            population = next;
            scores = self.evaluate(&population);
            let i = best_index(&scores);
            if scores[i] > best.1 {
                best = (population[i].clone(), scores[i]);
            }
            history.push(best.1);
        }

        GaOutcome {
            plan: self.plan_for(&best.0),
            targets: best.0,
            fitness: best.1,
            history,
        }
    }
}

/// GA with the default fitness: trips served over the predicted horizon.
pub fn ga_rebalance(state: &FleetState, predicted: &[DemandMatrix], cfg: &GaConfig) -> GaOutcome {
    let fitness = |plan: &RebalancingPlan| match apply_plan(state, plan) {
        Ok(after) => project(&after, predicted).satisfied as f64,
        Err(_) => f64::NEG_INFINITY,
    };
    let search = GeneticSearch::new(state, cfg, &fitness);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let population = search.seed_population(predicted, &mut rng);
    search.run(population, &mut rng)
}

fn best_index(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

fn tournament(scores: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let mut pick = rng.random_range(0..scores.len());
    for _ in 1..3 {
        let other = rng.random_range(0..scores.len());
        if scores[other] > scores[pick] || (scores[other] == scores[pick] && other < pick) {
            pick = other;
        }
    }
    pick
}

/// One-point crossover followed by repair back to the fleet total.
fn crossover(a: &[u64], b: &[u64], total: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let cut = rng.random_range(1..a.len());
    let mut child: Vec<u64> = a[..cut].iter().chain(&b[cut..]).copied().collect();
    let mut sum: u64 = child.iter().sum();
    while sum > total {
        let i = rng.random_range(0..child.len());
        if child[i] > 0 {
            child[i] -= 1;
            sum -= 1;
        }
    }
    while sum < total {
        let i = rng.random_range(0..child.len());
        child[i] += 1;
        sum += 1;
    }
    child
}

fn mutate(individual: &mut [u64], rate: f64, rng: &mut ChaCha8Rng) {
    if individual.len() < 2 || rate == 0.0 {
        return;
    }
    for i in 0..individual.len() {
        if individual[i] > 0 && rng.random_bool(rate) {
            let mut j = rng.random_range(0..individual.len() - 1);
            if j >= i {
                j += 1;
            }
            individual[i] -= 1;
            individual[j] += 1;
        }
    }
}

fn shift_one(individual: &mut [u64], rng: &mut ChaCha8Rng) {
    if individual.len() < 2 {
        return;
    }
    let from = rng.random_range(0..individual.len());
    if individual[from] == 0 {
        return;
    }
    let mut to = rng.random_range(0..individual.len() - 1);
    if to >= from {
        to += 1;
    }
    individual[from] -= 1;
    individual[to] += 1;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::generate_synthetic;

    #[test]
    fn closed_population_returns_zero_plan() {
        let state = FleetState::new(vec![3, 1, 2]);
        let cfg = GaConfig {
            population_size: 6,
            generations: 1,
            mutation_rate: 0.0,
            ..Default::default()
        };
        let fitness = |_: &RebalancingPlan| 1.0;
        let search = GeneticSearch::new(&state, &cfg, &fitness);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = search.run(vec![state.counts().to_vec(); 6], &mut rng);
        assert!(out.plan.is_zero());
    }

    #[test]
    fn best_fitness_never_decreases() {
        let series = generate_synthetic(5, 12, 24, 1.0, 9).unwrap();
        let state = FleetState::new(vec![20, 0, 0, 0, 5]);
        let cfg = GaConfig {
            generations: 30,
            ..Default::default()
        };
        let out = ga_rebalance(&state, &series.matrices, &cfg);
        assert!(out.history.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(*out.history.last().unwrap(), out.fitness);
    }

    #[test]
    fn deterministic_for_seed() {
        let series = generate_synthetic(4, 12, 24, 1.0, 2).unwrap();
        let state = FleetState::new(vec![6, 6, 0, 3]);
        let cfg = GaConfig {
            generations: 20,
            ..Default::default()
        };
        let a = ga_rebalance(&state, &series.matrices, &cfg);
        let b = ga_rebalance(&state, &series.matrices, &cfg);
        assert_eq!(a.plan, b.plan);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn never_worse_than_sdsm_on_predicted_demand() {
        for seed in 0..20 {
            let series = generate_synthetic(4, 12, 24, 1.2, seed).unwrap();
            let state = FleetState::new(vec![8, 2, 0, 6]);
            let cfg = GaConfig {
                seed,
                generations: 30,
                ..Default::default()
            };
            let ga = ga_rebalance(&state, &series.matrices, &cfg);
            let sdsm = plan_to_targets(&state, &sdsm_targets(&state, &series.matrices)).unwrap();
            let sdsm_fit = project(&apply_plan(&state, &sdsm).unwrap(), &series.matrices).satisfied as f64;
            assert!(ga.fitness >= sdsm_fit, "seed {seed}: {} < {sdsm_fit}", ga.fitness);
        }
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig::default().validate().is_ok());
        let bad = GaConfig {
            elite_count: 50,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = GaConfig {
            mutation_rate: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
