//! Prompt grammar: production rules, genotype encoding, depth-first
//! expansion into prompt templates, and the variation operators.
//!
//! A genotype is the ordered list of `(nonterminal, rule index)` choices
//! made while expanding the start symbol depth-first, left to right. Terminal
//! text may carry two kinds of placeholders: generic `((c3))` / `((t7))`
//! tokens resolved from [`GenericTables`], and task-specific `[[example]]`,
//! `[[task entry]]`, `[[LLM instruction]]` and `[[task request]]` slots that
//! stay open in the [`PromptTemplate`] until a task fills them.

mod expand;
mod genotype;
mod sample;
mod tables;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expand::{
    expand, validate, ExpandError, Piece, PromptTemplate, Structure, TaskSlot, ValidationError,
    ValidationReason,
};
pub use genotype::{Choice, Genotype};
pub use sample::{mutate, random_genotype, DEFAULT_MAX_SHOTS};
pub use tables::{GenericTables, TablesError, TABLE_LEN};

/// One element of a production's right-hand side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symbol {
    Nonterminal(String),
    /// Terminal text, possibly containing placeholders.
    Text(String),
}

impl Symbol {
    fn nt(name: &str) -> Self {
        Symbol::Nonterminal(name.to_string())
    }

    fn text(text: &str) -> Self {
        Symbol::Text(text.to_string())
    }
}

pub type Production = Vec<Symbol>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub nonterminal: String,
    pub productions: Vec<Production>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("start symbol `{0}` has no productions")]
    MissingStart(String),
    #[error("nonterminal `{0}` is defined more than once")]
    DuplicateNonterminal(String),
    #[error("nonterminal `{0}` has no productions")]
    EmptyRule(String),
    #[error("nonterminal `{referenced}` used in a production of `{owner}` is not defined")]
    Undefined { owner: String, referenced: String },
    #[error("nonterminal `{0}` can never derive a finite string")]
    NonTerminating(String),
    #[error("shots symbol `{0}` is not a nonterminal")]
    UnknownShotsSymbol(String),
    #[error("malformed placeholder in `{0}`")]
    MalformedPlaceholder(String),
    #[error("grammar JSON: {0}")]
    Json(String),
}

/// Serialized form of a [`Grammar`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GrammarDoc {
    start_symbol: String,
    rules: Vec<RuleSet>,
    #[serde(default)]
    shots_symbol: Option<String>,
}

/// A context-free prompt grammar.
///
/// `shots_symbol` names the nonterminal whose subtree decides how many
/// `[[example]]` slots a prompt has; the shot-count mutation re-derives it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GrammarDoc", into = "GrammarDoc")]
pub struct Grammar {
    start_symbol: String,
    rules: Vec<RuleSet>,
    shots_symbol: Option<String>,
    index: BTreeMap<String, usize>,
    /// Minimum number of example slots each nonterminal can derive.
    min_examples: Vec<usize>,
}

impl TryFrom<GrammarDoc> for Grammar {
    type Error = GrammarError;

    fn try_from(doc: GrammarDoc) -> Result<Self, Self::Error> {
        Grammar::new(doc.start_symbol, doc.rules, doc.shots_symbol)
    }
}

impl From<Grammar> for GrammarDoc {
    fn from(g: Grammar) -> Self {
        GrammarDoc {
            start_symbol: g.start_symbol,
            rules: g.rules,
            shots_symbol: g.shots_symbol,
        }
    }
}

impl Default for Grammar {
    fn default() -> Self {
        Grammar::prompt_default()
    }
}

impl Grammar {
    pub fn new(
        start_symbol: String,
        rules: Vec<RuleSet>,
        shots_symbol: Option<String>,
    ) -> Result<Self, GrammarError> {
        let mut index = BTreeMap::new();
        for (i, rule) in rules.iter().enumerate() {
            if index.insert(rule.nonterminal.clone(), i).is_some() {
                return Err(GrammarError::DuplicateNonterminal(rule.nonterminal.clone()));
            }
            if rule.productions.is_empty() {
                return Err(GrammarError::EmptyRule(rule.nonterminal.clone()));
            }
        }
        if !index.contains_key(&start_symbol) {
            return Err(GrammarError::MissingStart(start_symbol));
        }
        if let Some(s) = &shots_symbol {
            if !index.contains_key(s) {
                return Err(GrammarError::UnknownShotsSymbol(s.clone()));
            }
        }
        for rule in &rules {
            for sym in rule.productions.iter().flatten() {
                match sym {
                    Symbol::Nonterminal(name) if !index.contains_key(name) => {
                        return Err(GrammarError::Undefined {
                            owner: rule.nonterminal.clone(),
                            referenced: name.clone(),
                        });
                    }
                    Symbol::Text(text) => {
                        expand::parse_text(text)
                            .map_err(|_| GrammarError::MalformedPlaceholder(text.clone()))?;
                    }
                    _ => {}
                }
            }
        }

        let mut grammar = Grammar {
            start_symbol,
            rules,
            shots_symbol,
            index,
            min_examples: Vec::new(),
        };
        grammar.min_examples = grammar.compute_min_examples();
        if let Some(i) = grammar.min_examples.iter().position(|&m| m == usize::MAX) {
            return Err(GrammarError::NonTerminating(grammar.rules[i].nonterminal.clone()));
        }
        Ok(grammar)
    }

    /// The default prompt grammar.
    ///
    /// ```text
    /// P -> S T E I | S E I | C S T E I | C S E I
    /// S -> R X | R
    /// X -> "Consider this example: [[example]]"
    ///    | "Consider these examples: [[example]]," N
    /// N -> "[[example]]" | "[[example]]" N
    /// E -> "[[task entry]]"   I -> "[[LLM instruction]]"   R -> "[[task request]]"
    /// C -> "((c1))" | ... | "((c10))"
    /// T -> "((t1))" | ... | "((t10))"
    /// ```
    pub fn prompt_default() -> Self {
        use Symbol as Sy;
        let nt = Sy::nt;
        let text = Sy::text;
        let rule = |name: &str, productions: Vec<Production>| RuleSet {
            nonterminal: name.to_string(),
            productions,
        };
        let table = |prefix: char| -> Vec<Production> {
            (1..=TABLE_LEN)
                .map(|i| vec![Symbol::Text(format!("(({prefix}{i}))"))])
                .collect()
        };
        let rules = vec![
            rule(
                "P",
                vec![
                    vec![nt("S"), nt("T"), nt("E"), nt("I")],
                    vec![nt("S"), nt("E"), nt("I")],
                    vec![nt("C"), nt("S"), nt("T"), nt("E"), nt("I")],
                    vec![nt("C"), nt("S"), nt("E"), nt("I")],
                ],
            ),
            rule("S", vec![vec![nt("R"), nt("X")], vec![nt("R")]]),
            rule(
                "X",
                vec![
                    vec![text("Consider this example: [[example]]")],
                    vec![text("Consider these examples: [[example]],"), nt("N")],
                ],
            ),
            rule(
                "N",
                vec![vec![text("[[example]]")], vec![text("[[example]]"), nt("N")]],
            ),
            rule("E", vec![vec![text("[[task entry]]")]]),
            rule("I", vec![vec![text("[[LLM instruction]]")]]),
            rule("R", vec![vec![text("[[task request]]")]]),
            rule("C", table('c')),
            rule("T", table('t')),
        ];
        Grammar::new("P".into(), rules, Some("S".into())).expect("default grammar is well formed")
    }

    pub fn from_json(json: &str) -> Result<Self, GrammarError> {
        serde_json::from_str(json).map_err(|e| GrammarError::Json(e.to_string()))
    }

    pub fn start_symbol(&self) -> &str {
        &self.start_symbol
    }

    pub fn shots_symbol(&self) -> Option<&str> {
        self.shots_symbol.as_deref()
    }

    pub fn rules(&self) -> &[RuleSet] {
        &self.rules
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    pub fn productions(&self, nonterminal: &str) -> Option<&[Production]> {
        self.index
            .get(nonterminal)
            .map(|&i| self.rules[i].productions.as_slice())
    }

    fn rule_index(&self, nonterminal: &str) -> Option<usize> {
        self.index.get(nonterminal).copied()
    }

    /// Nonterminals that can reach themselves through their own productions.
    pub fn recursive_nonterminals(&self) -> Vec<&str> {
        self.rules
            .iter()
            .filter(|r| self.reaches(&r.nonterminal, &r.nonterminal))
            .map(|r| r.nonterminal.as_str())
            .collect()
    }

    fn reaches(&self, from: &str, target: &str) -> bool {
        let mut seen = vec![false; self.rules.len()];
        let mut stack = vec![from];
        while let Some(cur) = stack.pop() {
            for sym in self.productions(cur).into_iter().flatten().flatten() {
                if let Symbol::Nonterminal(next) = sym {
                    if next == target {
                        return true;
                    }
                    let i = self.index[next];
                    if !seen[i] {
                        seen[i] = true;
                        stack.push(next);
                    }
                }
            }
        }
        false
    }

    fn symbol_min_examples(&self, sym: &Symbol) -> usize {
        match sym {
            Symbol::Nonterminal(n) => self.min_examples[self.index[n]],
            Symbol::Text(t) => expand::example_count(t),
        }
    }

    fn production_min_examples(&self, production: &[Symbol]) -> usize {
        production
            .iter()
            .map(|s| self.symbol_min_examples(s))
            .fold(0usize, usize::saturating_add)
    }

    fn compute_min_examples(&self) -> Vec<usize> {
        let mut min = vec![usize::MAX; self.rules.len()];
        loop {
            let mut changed = false;
            for (i, rule) in self.rules.iter().enumerate() {
                for prod in &rule.productions {
                    let cost = prod
                        .iter()
                        .map(|s| match s {
                            Symbol::Nonterminal(n) => min[self.index[n]],
                            Symbol::Text(t) => expand::example_count(t),
                        })
                        .fold(0usize, usize::saturating_add);
                    if cost < min[i] {
                        min[i] = cost;
                        changed = true;
                    }
                }
            }
            if !changed {
                return min;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grammar_shape() {
        let g = Grammar::prompt_default();
        assert_eq!(g.start_symbol(), "P");
        let names: Vec<_> = g.nonterminals().collect();
        assert_eq!(names, ["C", "E", "I", "N", "P", "R", "S", "T", "X"]);
        assert_eq!(g.productions("P").unwrap().len(), 4);
        assert_eq!(g.productions("S").unwrap().len(), 2);
        assert_eq!(g.productions("C").unwrap().len(), 10);
        assert_eq!(g.productions("T").unwrap().len(), 10);
        assert_eq!(g.recursive_nonterminals(), ["N"]);
    }

    #[test]
    fn min_examples_of_default() {
        let g = Grammar::prompt_default();
        let min = |n: &str| g.min_examples[g.rule_index(n).unwrap()];
        assert_eq!(min("P"), 0);
        assert_eq!(min("S"), 0);
        assert_eq!(min("X"), 1);
        assert_eq!(min("N"), 1);
    }

    #[test]
    fn json_round_trip() {
        let g = Grammar::prompt_default();
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(Grammar::from_json(&json).unwrap(), g);
    }

    #[test]
    fn rejects_undefined_nonterminal() {
        let rules = vec![RuleSet {
            nonterminal: "P".into(),
            productions: vec![vec![Symbol::nt("Q")]],
        }];
        let err = Grammar::new("P".into(), rules, None).unwrap_err();
        assert_eq!(
            err,
            GrammarError::Undefined {
                owner: "P".into(),
                referenced: "Q".into()
            }
        );
    }

    #[test]
    fn rejects_non_terminating_rule() {
        let rules = vec![RuleSet {
            nonterminal: "P".into(),
            productions: vec![vec![Symbol::text("a"), Symbol::nt("P")]],
        }];
        assert_eq!(
            Grammar::new("P".into(), rules, None).unwrap_err(),
            GrammarError::NonTerminating("P".into())
        );
    }

    #[test]
    fn rejects_missing_start() {
        assert_eq!(
            Grammar::new("P".into(), vec![], None).unwrap_err(),
            GrammarError::MissingStart("P".into())
        );
    }
}
