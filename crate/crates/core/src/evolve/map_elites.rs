use rand::seq::index;
use rand::Rng;

use super::{Candidate, RunConfig, RunContext, RunError, RunOutput, SearchStrategy, Session};
use crate::archive::{Archive, Individual};
use crate::grammar::{mutate, random_genotype, Grammar};

/// MAP-Elites over prompt genotypes.
///
/// Each iteration evaluates the whole population and offers every
/// individual to the archive. The next population is `mut_rate` of the
/// current one, picked without replacement and mutated, topped up with
/// elites drawn uniformly (with replacement) from the archive.
pub struct MapElites;

impl MapElites {
    pub const NAME: &'static str = "map-elites";
}

impl SearchStrategy for MapElites {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn run(&self, ctx: &RunContext<'_>) -> Result<RunOutput, RunError> {
        let mut session = Session::new(ctx)?;
        let cfg = session.config().clone();
        let mut rng = session.init_rng();
        let mut candidates: Vec<Candidate> = (0..cfg.population_size)
            .map(|_| Candidate {
                genotype: random_genotype(ctx.grammar, &mut rng, cfg.max_shots),
                parent: None,
            })
            .collect();

        for iteration in 1..=cfg.num_iterations {
            let population = session.evaluate(iteration, candidates)?;
            if iteration == cfg.num_iterations {
                break;
            }
            let mut rng = session.generation_rng(iteration);
            candidates = next_generation(&population, &session.archive, &cfg, session.grammar(), &mut rng)?;
        }
        Ok(session.finish(Self::NAME))
    }
}

/// Builds the next population from the evaluated `population` and the
/// archive: `offspring_count()` mutated members followed by elite draws.
pub fn next_generation<R: Rng + ?Sized>(
    population: &[Individual],
    archive: &Archive,
    cfg: &RunConfig,
    grammar: &Grammar,
    rng: &mut R,
) -> Result<Vec<Candidate>, RunError> {
    let offspring = cfg.offspring_count().min(population.len());
    let mut next = Vec::with_capacity(cfg.population_size);
    for i in index::sample(rng, population.len(), offspring) {
        let parent = &population[i];
        let genotype = mutate(&parent.genotype, cfg.mut_chance, rng, grammar, cfg.max_shots)
            .map_err(|e| RunError::Config(format!("population holds an invalid genotype: {e}")))?;
        next.push(Candidate {
            genotype,
            parent: Some(parent.id),
        });
    }

    let elites = archive.elites();
    while next.len() < cfg.population_size {
        if elites.is_empty() {
            // Only reachable before anything was archived.
            next.push(Candidate {
                genotype: random_genotype(grammar, rng, cfg.max_shots),
                parent: None,
            });
            continue;
        }
        let elite = &elites[rng.gen_range(0..elites.len())];
        next.push(Candidate {
            genotype: elite.genotype.clone(),
            parent: Some(elite.id),
        });
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::Provenance;
    use crate::phenotype::{BinConfig, Phenotype};
    use crate::seed;

    fn population(n: usize) -> (Vec<Individual>, Archive) {
        let grammar = Grammar::prompt_default();
        let mut rng = seed::stream(1, &[]);
        let mut archive = Archive::new(BinConfig::default());
        let pop: Vec<Individual> = (0..n as u64)
            .map(|id| Individual {
                id,
                genotype: random_genotype(&grammar, &mut rng, 10),
                phenotype: Phenotype {
                    shots: id as usize % 7,
                    word_count: 10,
                    depth: id as usize % 5,
                    has_context: false,
                },
                fitness: 0.5,
                eval_count: 50,
                type_token_ratio: 1.0,
                provenance: Provenance {
                    iteration: 1,
                    parent: None,
                },
            })
            .collect();
        for ind in &pop {
            archive.try_insert(ind.clone(), 1);
        }
        (pop, archive)
    }

    #[test]
    fn forty_percent_of_fifty() {
        let (pop, archive) = population(50);
        let cfg = RunConfig {
            mut_chance: 0.0,
            ..RunConfig::default()
        };
        let next = next_generation(&pop, &archive, &cfg, &Grammar::prompt_default(), &mut seed::stream(2, &[])).unwrap();
        assert_eq!(next.len(), 50);
        // With mut_chance 0 offspring are copies of their parents.
        for c in &next[..20] {
            let parent = &pop[c.parent.unwrap() as usize];
            assert_eq!(c.genotype, parent.genotype);
        }
        let elite_ids: Vec<u64> = archive.elites().iter().map(|e| e.id).collect();
        assert!(next[20..].iter().all(|c| elite_ids.contains(&c.parent.unwrap())));
        let mut offspring_parents: Vec<u64> = next[..20].iter().map(|c| c.parent.unwrap()).collect();
        offspring_parents.sort_unstable();
        offspring_parents.dedup();
        assert_eq!(offspring_parents.len(), 20, "selection is without replacement");
    }

    #[test]
    fn rate_zero_draws_only_from_archive() {
        let (pop, archive) = population(50);
        let cfg = RunConfig {
            mut_rate: 0.0,
            ..RunConfig::default()
        };
        let next = next_generation(&pop, &archive, &cfg, &Grammar::prompt_default(), &mut seed::stream(3, &[])).unwrap();
        let elites = archive.elites();
        assert_eq!(next.len(), 50);
        assert!(next.iter().all(|c| elites.iter().any(|e| Some(e.id) == c.parent && e.genotype == c.genotype)));
    }

    #[test]
    fn rate_one_is_all_offspring() {
        let (pop, archive) = population(50);
        let cfg = RunConfig {
            mut_rate: 1.0,
            ..RunConfig::default()
        };
        let next = next_generation(&pop, &archive, &cfg, &Grammar::prompt_default(), &mut seed::stream(4, &[])).unwrap();
        let mut parents: Vec<u64> = next.iter().map(|c| c.parent.unwrap()).collect();
        parents.sort_unstable();
        assert_eq!(parents, (0..50).collect::<Vec<_>>());
    }
}
