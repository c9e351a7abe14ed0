use rand::Rng;

use super::expand::{example_count, replay, ValidationError};
use super::{Choice, Genotype, Grammar, Symbol};

/// Upper bound on example slots when none is configured.
pub const DEFAULT_MAX_SHOTS: usize = 10;

/// Draws a genotype by picking a production uniformly at every expansion
/// step. Productions that would push the example count past
/// `max(1, max_shots)` are excluded, which is what terminates the `N`
/// recursion. When every production exceeds the cap, the one needing the
/// fewest examples is taken.
pub fn random_genotype<R: Rng + ?Sized>(grammar: &Grammar, rng: &mut R, max_shots: usize) -> Genotype {
    let cap = max_shots.max(1);
    let start = Symbol::Nonterminal(grammar.start_symbol().to_string());
    let mut stack: Vec<&Symbol> = vec![&start];
    let mut pending = grammar.symbol_min_examples(&start);
    let mut count = 0usize;
    let mut choices = Vec::new();

    while let Some(sym) = stack.pop() {
        pending -= grammar.symbol_min_examples(sym);
        match sym {
            Symbol::Text(t) => count += example_count(t),
            Symbol::Nonterminal(name) => {
                let productions = grammar.productions(name).expect("grammar is closed");
                let costs: Vec<usize> = productions
                    .iter()
                    .map(|p| grammar.production_min_examples(p))
                    .collect();
                let mut allowed: Vec<usize> = (0..productions.len())
                    .filter(|&i| count + pending + costs[i] <= cap)
                    .collect();
                if allowed.is_empty() {
                    let cheapest = *costs.iter().min().expect("non-empty rule");
                    allowed = (0..productions.len()).filter(|&i| costs[i] == cheapest).collect();
                }
                let rule = allowed[rng.gen_range(0..allowed.len())];
                choices.push(Choice::new(name.as_str(), rule));
                pending += costs[rule];
                stack.extend(productions[rule].iter().rev());
            }
        }
    }

    let example_seeds = (0..count).map(|_| rng.gen()).collect();
    Genotype::new(choices, example_seeds)
}

/// Applies per-locus mutation with probability `mut_chance` each:
///
/// * every context / thought choice (a nonterminal whose productions are all
///   plain terminals) is redrawn uniformly;
/// * the shot count is redrawn uniformly from `0..=max_shots` and the shots
///   subtree is re-derived to produce exactly that many examples;
/// * every example seed is redrawn.
///
/// Loci that are not selected are copied unchanged.
pub fn mutate<R: Rng + ?Sized>(
    genotype: &Genotype,
    mut_chance: f64,
    rng: &mut R,
    grammar: &Grammar,
    max_shots: usize,
) -> Result<Genotype, ValidationError> {
    super::validate(genotype, grammar)?;
    let ends = replay(grammar, &genotype.choices)?.ends;
    let shots_span = grammar.shots_symbol().and_then(|s| {
        genotype
            .choices
            .iter()
            .position(|c| c.nonterminal == s)
            .map(|p| (p, ends[p]))
    });
    let in_shots = |p: usize| shots_span.is_some_and(|(a, b)| (a..b).contains(&p));

    let mut choices = genotype.choices.clone();
    for (p, choice) in choices.iter_mut().enumerate() {
        if in_shots(p) {
            continue;
        }
        let productions = grammar.productions(&choice.nonterminal).expect("validated");
        if is_leaf_choice(productions) && rng.gen_bool(mut_chance) {
            choice.rule = rng.gen_range(0..productions.len());
        }
    }

    if let Some((start, end)) = shots_span {
        if rng.gen_bool(mut_chance) {
            let name = choices[start].nonterminal.clone();
            let table = ExactCounts::new(grammar, max_shots);
            let feasible: Vec<usize> = (0..=max_shots).filter(|&k| table.nonterminal(&name)[k]).collect();
            if !feasible.is_empty() {
                let k = feasible[rng.gen_range(0..feasible.len())];
                let mut subtree = Vec::new();
                table.derive(&name, k, rng, &mut subtree);
                choices.splice(start..end, subtree);
            }
        }
    }

    let slots: usize = replay(grammar, &choices)?
        .texts
        .iter()
        .map(|t| example_count(t))
        .sum();
    let mut example_seeds = genotype.example_seeds.clone();
    example_seeds.truncate(slots);
    while example_seeds.len() < slots {
        example_seeds.push(rng.gen());
    }
    for seed in &mut example_seeds {
        if rng.gen_bool(mut_chance) {
            *seed = rng.gen();
        }
    }
    Ok(Genotype::new(choices, example_seeds))
}

fn is_leaf_choice(productions: &[Vec<Symbol>]) -> bool {
    productions.len() > 1
        && productions
            .iter()
            .flatten()
            .all(|s| matches!(s, Symbol::Text(t) if example_count(t) == 0))
}

/// Which exact example counts `0..=max` each nonterminal can derive.
struct ExactCounts<'g> {
    grammar: &'g Grammar,
    max: usize,
    table: Vec<Vec<bool>>,
}

impl<'g> ExactCounts<'g> {
    fn new(grammar: &'g Grammar, max: usize) -> Self {
        let mut this = ExactCounts {
            grammar,
            max,
            table: vec![vec![false; max + 1]; grammar.rules().len()],
        };
        loop {
            let mut changed = false;
            for (i, rule) in grammar.rules().iter().enumerate() {
                for prod in &rule.productions {
                    let reach = this.sequence(prod);
                    for (k, &r) in reach.iter().enumerate() {
                        if r && !this.table[i][k] {
                            this.table[i][k] = true;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return this;
            }
        }
    }

    fn nonterminal(&self, name: &str) -> &[bool] {
        &self.table[self.grammar.rule_index(name).expect("known nonterminal")]
    }

    fn symbol(&self, sym: &Symbol) -> Vec<bool> {
        match sym {
            Symbol::Nonterminal(n) => self.nonterminal(n).to_vec(),
            Symbol::Text(t) => {
                let mut v = vec![false; self.max + 1];
                if let Some(slot) = v.get_mut(example_count(t)) {
                    *slot = true;
                }
                v
            }
        }
    }

    /// Counts reachable by concatenating `symbols`.
    fn sequence(&self, symbols: &[Symbol]) -> Vec<bool> {
        let mut reach = vec![false; self.max + 1];
        reach[0] = true;
        for sym in symbols {
            let own = self.symbol(sym);
            let mut next = vec![false; self.max + 1];
            for a in (0..=self.max).filter(|&a| reach[a]) {
                for b in (0..=self.max - a).filter(|&b| own[b]) {
                    next[a + b] = true;
                }
            }
            reach = next;
        }
        reach
    }

    /// Emits choices deriving `name` with exactly `k` examples, picking
    /// uniformly among feasible productions and count splits.
    fn derive<R: Rng + ?Sized>(&self, name: &str, k: usize, rng: &mut R, out: &mut Vec<Choice>) {
        let productions = self.grammar.productions(name).expect("known nonterminal");
        let feasible: Vec<usize> = (0..productions.len())
            .filter(|&i| self.sequence(&productions[i])[k])
            .collect();
        let rule = feasible[rng.gen_range(0..feasible.len())];
        out.push(Choice::new(name, rule));

        let production = &productions[rule];
        let mut remaining = k;
        for (i, sym) in production.iter().enumerate() {
            let rest = self.sequence(&production[i + 1..]);
            let own = self.symbol(sym);
            let options: Vec<usize> = (0..=remaining)
                .filter(|&j| own[j] && rest[remaining - j])
                .collect();
            let j = options[rng.gen_range(0..options.len())];
            if let Symbol::Nonterminal(child) = sym {
                self.derive(child, j, rng, out);
            }
            remaining -= j;
        }
    }
}
