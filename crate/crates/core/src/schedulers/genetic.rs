//! Single-step genetic-algorithm baseline.
//!
//! A chromosome holds one host index per pending task. Fitness is the reward
//! of a one-interval probe of the full chromosome. The operator set and sizes
//! are our own choices; they are exposed as parameters.

use serde::{Deserialize, Serialize};

use crate::rng::SeedStream;
use crate::sim::{Assignment, Decision};

use super::{ScheduleContext, ScheduleError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneticParams {
    pub population: u32,
    pub generations: u32,
    pub tournament: u32,
    /// Per-gene probability of taking the second parent's gene.
    pub crossover_rate: f64,
    pub mutation_rate: f64,
}

impl Default for GeneticParams {
    fn default() -> Self {
        Self {
            population: 20,
            generations: 10,
            tournament: 3,
            crossover_rate: 0.5,
            mutation_rate: 0.1,
        }
    }
}

impl GeneticParams {
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if self.population < 1 {
            out.push(("population".into(), "must be >= 1".into()));
        }
        if self.tournament < 1 {
            out.push(("tournament".into(), "must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            out.push(("crossover_rate".into(), "out of [0,1]".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            out.push(("mutation_rate".into(), "out of [0,1]".into()));
        }
        out
    }
}

struct Individual {
    genes: Vec<usize>,
    fitness: f64,
}

pub fn ga_schedule(
    ctx: &ScheduleContext<'_>,
    params: &GeneticParams,
    rng: &mut SeedStream,
) -> Result<Assignment, ScheduleError> {
    let hosts = ctx.hosts();
    let tasks = ctx.pending;
    let decode = |genes: &[usize]| -> Vec<Decision> {
        tasks.iter().zip(genes).map(|(&t, &g)| Decision::new(t, hosts[g])).collect()
    };
    let evaluate = |genes: Vec<usize>| -> Result<Individual, ScheduleError> {
        let (_, r) = ctx.probe(&decode(&genes))?;
        let fitness = ctx.objective.q(&r.indicators(), r.window_tasks);
        Ok(Individual { genes, fitness })
    };

    let mut population = Vec::with_capacity(params.population as usize);
    for _ in 0..params.population.max(1) {
        let genes = tasks.iter().map(|_| rng.index(hosts.len())).collect();
        population.push(evaluate(genes)?);
    }
    let mut best = fittest(&population).genes.clone();
    let mut best_fitness = fittest(&population).fitness;

    for _ in 0..params.generations {
        let mut next = Vec::with_capacity(population.len());
        // Elitism: the current best survives unchanged.
        next.push(Individual {
            genes: best.clone(),
            fitness: best_fitness,
        });
        while next.len() < population.len() {
            let a = tournament(&population, params.tournament, rng);
            let b = tournament(&population, params.tournament, rng);
            let genes: Vec<usize> = a
                .genes
                .iter()
                .zip(&b.genes)
                .map(|(&ga, &gb)| {
                    let g = if rng.chance(params.crossover_rate) { gb } else { ga };
                    if rng.chance(params.mutation_rate) {
                        rng.index(hosts.len())
                    } else {
                        g
                    }
                })
                .collect();
            next.push(evaluate(genes)?);
        }
        population = next;
        let top = fittest(&population);
        if top.fitness > best_fitness {
            best = top.genes.clone();
            best_fitness = top.fitness;
        }
    }
    Ok(decode(&best).into_iter().collect())
}

/// First individual with the highest fitness.
fn fittest(pop: &[Individual]) -> &Individual {
    let mut best = &pop[0];
    for ind in &pop[1..] {
        if ind.fitness > best.fitness {
            best = ind;
        }
    }
    best
}

fn tournament<'p>(pop: &'p [Individual], size: u32, rng: &mut SeedStream) -> &'p Individual {
    let mut best = &pop[rng.index(pop.len())];
    for _ in 1..size {
        let c = &pop[rng.index(pop.len())];
        if c.fitness > best.fitness {
            best = c;
        }
    }
    best
}
