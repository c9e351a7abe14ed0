use super::{Candidate, RunContext, RunError, RunOutput, SearchStrategy, Session};
use crate::grammar::random_genotype;

/// Baseline: `population_size * num_iterations` independent random
/// genotypes, offered to an archive in batches of `population_size` so the
/// log lines up with MAP-Elites iterations.
pub struct RandomSearch;

impl RandomSearch {
    pub const NAME: &'static str = "random";
}

impl SearchStrategy for RandomSearch {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn run(&self, ctx: &RunContext<'_>) -> Result<RunOutput, RunError> {
        let mut session = Session::new(ctx)?;
        let cfg = session.config().clone();
        let mut rng = session.init_rng();
        for iteration in 1..=cfg.num_iterations {
            let batch = (0..cfg.population_size)
                .map(|_| Candidate {
                    genotype: random_genotype(ctx.grammar, &mut rng, cfg.max_shots),
                    parent: None,
                })
                .collect();
            session.evaluate(iteration, batch)?;
        }
        Ok(session.finish(Self::NAME))
    }
}
