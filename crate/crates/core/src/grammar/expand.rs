use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Choice, GenericTables, Genotype, Grammar, Symbol};

/// Task-specific slot left open in a [`PromptTemplate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSlot {
    /// The `n`-th `[[example]]` slot, counted from zero in derivation order.
    Example(usize),
    TaskEntry,
    Instruction,
    TaskRequest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Piece {
    Text(String),
    Slot(TaskSlot),
}

/// Structural summary of a derivation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Structure {
    pub shots: usize,
    /// Requested reasoning steps; 0 when no thought entry was chosen.
    pub depth: usize,
    pub has_context: bool,
}

/// A fully expanded derivation. Each fragment is one terminal of the
/// derivation; fragments are joined with newlines when rendered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub fragments: Vec<Vec<Piece>>,
    pub structure: Structure,
}

impl PromptTemplate {
    pub fn slots(&self) -> impl Iterator<Item = TaskSlot> + '_ {
        self.fragments.iter().flatten().filter_map(|p| match p {
            Piece::Slot(s) => Some(*s),
            Piece::Text(_) => None,
        })
    }

    pub fn example_slots(&self) -> usize {
        self.slots()
            .filter(|s| matches!(s, TaskSlot::Example(_)))
            .count()
    }
}

impl fmt::Display for PromptTemplate {
    /// Renders with task-specific placeholders left in `[[...]]` form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, fragment) in self.fragments.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            for piece in fragment {
                match piece {
                    Piece::Text(t) => f.write_str(t)?,
                    Piece::Slot(TaskSlot::Example(_)) => f.write_str("[[example]]")?,
                    Piece::Slot(TaskSlot::TaskEntry) => f.write_str("[[task entry]]")?,
                    Piece::Slot(TaskSlot::Instruction) => f.write_str("[[LLM instruction]]")?,
                    Piece::Slot(TaskSlot::TaskRequest) => f.write_str("[[task request]]")?,
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RawPiece<'a> {
    Literal(&'a str),
    Task(TaskName),
    Context(usize),
    Thought(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TaskName {
    Example,
    TaskEntry,
    Instruction,
    TaskRequest,
}

/// Splits terminal text into literals and placeholders.
pub(crate) fn parse_text(text: &str) -> Result<Vec<RawPiece<'_>>, ()> {
    let mut out = Vec::new();
    let mut rest = text;
    loop {
        let next = [rest.find("[["), rest.find("((")]
            .into_iter()
            .flatten()
            .min();
        let Some(start) = next else {
            if !rest.is_empty() {
                out.push(RawPiece::Literal(rest));
            }
            return Ok(out);
        };
        if start > 0 {
            out.push(RawPiece::Literal(&rest[..start]));
        }
        let square = rest[start..].starts_with("[[");
        let close = if square { "]]" } else { "))" };
        let body_start = start + 2;
        let end = rest[body_start..].find(close).ok_or(())? + body_start;
        let body = &rest[body_start..end];
        out.push(if square {
            RawPiece::Task(match body {
                "example" => TaskName::Example,
                "task entry" => TaskName::TaskEntry,
                "LLM instruction" => TaskName::Instruction,
                "task request" => TaskName::TaskRequest,
                _ => return Err(()),
            })
        } else {
            let mut chars = body.chars();
            let kind = chars.next().ok_or(())?;
            let n: usize = chars.as_str().parse().map_err(|_| ())?;
            match kind {
                'c' => RawPiece::Context(n),
                't' => RawPiece::Thought(n),
                _ => return Err(()),
            }
        });
        rest = &rest[end + 2..];
    }
}

pub(crate) fn example_count(text: &str) -> usize {
    parse_text(text)
        .map(|pieces| {
            pieces
                .iter()
                .filter(|p| matches!(p, RawPiece::Task(TaskName::Example)))
                .count()
        })
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ValidationReason {
    /// The derivation needed another choice but the genotype ended.
    ChoiceUnderflow,
    /// Choices remain after the derivation completed.
    ChoiceOverflow { extra: usize },
    IndexOutOfRange { index: usize, available: usize },
    /// The choice names a different nonterminal than the one being expanded.
    NonterminalMismatch { found: String },
    ExampleSeedCount { expected: usize, found: usize },
}

/// Structured validation failure: where replay stopped and why.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("invalid genotype at choice {position} ({nonterminal}): {reason:?}")]
pub struct ValidationError {
    pub position: usize,
    pub nonterminal: String,
    pub reason: ValidationReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExpandError {
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("generic placeholder (({kind}{index})) has no table entry")]
    GenericOutOfRange { kind: char, index: usize },
}

/// Result of replaying a choice list against a grammar.
pub(crate) struct Replay<'g> {
    /// For each choice, one past the index of the last choice in its subtree.
    pub ends: Vec<usize>,
    /// Terminal texts in derivation order.
    pub texts: Vec<&'g str>,
}

enum Frame<'g> {
    Nonterminal(&'g str),
    Text(&'g str),
    Close(usize),
}

pub(crate) fn replay<'g>(
    grammar: &'g Grammar,
    choices: &[Choice],
) -> Result<Replay<'g>, ValidationError> {
    let mut ends = vec![0; choices.len()];
    let mut texts = Vec::new();
    let mut pos = 0;
    let mut stack = vec![Frame::Nonterminal(grammar.start_symbol())];

    while let Some(frame) = stack.pop() {
        match frame {
            Frame::Text(t) => texts.push(t),
            Frame::Close(at) => ends[at] = pos,
            Frame::Nonterminal(name) => {
                let fail = |reason| ValidationError {
                    position: pos,
                    nonterminal: name.to_string(),
                    reason,
                };
                let choice = choices
                    .get(pos)
                    .ok_or_else(|| fail(ValidationReason::ChoiceUnderflow))?;
                if choice.nonterminal != name {
                    return Err(fail(ValidationReason::NonterminalMismatch {
                        found: choice.nonterminal.clone(),
                    }));
                }
                let productions = grammar.productions(name).expect("grammar is closed");
                let production = productions.get(choice.rule).ok_or_else(|| {
                    fail(ValidationReason::IndexOutOfRange {
                        index: choice.rule,
                        available: productions.len(),
                    })
                })?;
                stack.push(Frame::Close(pos));
                pos += 1;
                for sym in production.iter().rev() {
                    stack.push(match sym {
                        Symbol::Nonterminal(n) => Frame::Nonterminal(n),
                        Symbol::Text(t) => Frame::Text(t),
                    });
                }
            }
        }
    }

    if pos < choices.len() {
        return Err(ValidationError {
            position: pos,
            nonterminal: choices[pos].nonterminal.clone(),
            reason: ValidationReason::ChoiceOverflow {
                extra: choices.len() - pos,
            },
        });
    }
    Ok(Replay { ends, texts })
}

/// Checks that depth-first replay consumes exactly the genotype's choices,
/// every index is in range, and there is one seed per example slot.
pub fn validate(genotype: &Genotype, grammar: &Grammar) -> Result<(), ValidationError> {
    checked_replay(genotype, grammar).map(|_| ())
}

fn checked_replay<'g>(
    genotype: &Genotype,
    grammar: &'g Grammar,
) -> Result<Replay<'g>, ValidationError> {
    let replay = replay(grammar, &genotype.choices)?;
    let examples: usize = replay.texts.iter().map(|t| example_count(t)).sum();
    if examples != genotype.example_seeds.len() {
        return Err(ValidationError {
            position: genotype.choices.len(),
            nonterminal: grammar.start_symbol().to_string(),
            reason: ValidationReason::ExampleSeedCount {
                expected: examples,
                found: genotype.example_seeds.len(),
            },
        });
    }
    Ok(replay)
}

/// Expands a genotype depth-first into a prompt template, resolving generic
/// placeholders from `tables`.
pub fn expand(
    genotype: &Genotype,
    grammar: &Grammar,
    tables: &GenericTables,
) -> Result<PromptTemplate, ExpandError> {
    let replay = checked_replay(genotype, grammar)?;

    let mut structure = Structure::default();
    let mut fragments = Vec::with_capacity(replay.texts.len());
    for text in replay.texts {
        let mut pieces = Vec::new();
        let push_text = |pieces: &mut Vec<Piece>, s: &str| match pieces.last_mut() {
            Some(Piece::Text(prev)) => prev.push_str(s),
            _ => pieces.push(Piece::Text(s.to_string())),
        };
        // Grammar construction already rejected malformed text.
        for raw in parse_text(text).expect("grammar text is well formed") {
            match raw {
                RawPiece::Literal(s) => push_text(&mut pieces, s),
                RawPiece::Context(n) => {
                    let s = tables
                        .context(n)
                        .ok_or(ExpandError::GenericOutOfRange { kind: 'c', index: n })?;
                    structure.has_context = true;
                    push_text(&mut pieces, s);
                }
                RawPiece::Thought(n) => {
                    let s = tables
                        .thought(n)
                        .ok_or(ExpandError::GenericOutOfRange { kind: 't', index: n })?;
                    structure.depth = structure.depth.max(n);
                    push_text(&mut pieces, s);
                }
                RawPiece::Task(name) => pieces.push(Piece::Slot(match name {
                    TaskName::Example => {
                        structure.shots += 1;
                        TaskSlot::Example(structure.shots - 1)
                    }
                    TaskName::TaskEntry => TaskSlot::TaskEntry,
                    TaskName::Instruction => TaskSlot::Instruction,
                    TaskName::TaskRequest => TaskSlot::TaskRequest,
                })),
            }
        }
        fragments.push(pieces);
    }
    Ok(PromptTemplate {
        fragments,
        structure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geno(s: &str, seeds: usize) -> Genotype {
        let mut g: Genotype = s.parse().unwrap();
        g.example_seeds = (0..seeds as u64).collect();
        g
    }

    fn setup() -> (Grammar, GenericTables) {
        (Grammar::prompt_default(), GenericTables::default())
    }

    #[test]
    fn worked_genotype_expands_in_order() {
        let (g, t) = setup();
        let tpl = expand(&geno("[P2, C6, S0, R0, X0, T3, E0, I0]", 1), &g, &t).unwrap();
        assert_eq!(
            tpl.structure,
            Structure {
                shots: 1,
                depth: 4,
                has_context: true
            }
        );
        assert_eq!(tpl.fragments.len(), 6);
        assert_eq!(tpl.fragments[0], vec![Piece::Text(t.context(7).unwrap().into())]);
        assert_eq!(tpl.fragments[1], vec![Piece::Slot(TaskSlot::TaskRequest)]);
        assert_eq!(
            tpl.fragments[2],
            vec![
                Piece::Text("Consider this example: ".into()),
                Piece::Slot(TaskSlot::Example(0))
            ]
        );
        assert_eq!(tpl.fragments[3], vec![Piece::Text(t.thought(4).unwrap().into())]);
        assert_eq!(tpl.fragments[4], vec![Piece::Slot(TaskSlot::TaskEntry)]);
        assert_eq!(tpl.fragments[5], vec![Piece::Slot(TaskSlot::Instruction)]);
    }

    #[test]
    fn minimal_zero_shot() {
        let (g, t) = setup();
        let tpl = expand(&geno("[P1, S1, R0, E0, I0]", 0), &g, &t).unwrap();
        assert_eq!(tpl.structure, Structure::default());
        assert_eq!(tpl.to_string(), "[[task request]]\n[[task entry]]\n[[LLM instruction]]");
    }

    #[test]
    fn multi_example_form() {
        let (g, t) = setup();
        let tpl = expand(&geno("[P0, S0, R0, X1, N0, T0, E0, I0]", 2), &g, &t).unwrap();
        assert_eq!(tpl.structure.shots, 2);
        assert_eq!(tpl.structure.depth, 1);
        assert_eq!(tpl.example_slots(), 2);
    }

    #[test]
    fn underflow_reports_missing_nonterminal() {
        let (g, _) = setup();
        let err = validate(&geno("[P1, S1, R0, E0]", 0), &g).unwrap_err();
        assert_eq!(err.position, 4);
        assert_eq!(err.nonterminal, "I");
        assert_eq!(err.reason, ValidationReason::ChoiceUnderflow);
    }

    #[test]
    fn overflow_reports_leftover() {
        let (g, _) = setup();
        let err = validate(&geno("[P1, S1, R0, E0, I0, I0]", 0), &g).unwrap_err();
        assert_eq!(err.position, 5);
        assert_eq!(err.reason, ValidationReason::ChoiceOverflow { extra: 1 });
    }

    #[test]
    fn index_out_of_range() {
        let (g, _) = setup();
        let err = validate(&geno("[P9, S1, R0, E0, I0]", 0), &g).unwrap_err();
        assert_eq!(err.position, 0);
        assert_eq!(
            err.reason,
            ValidationReason::IndexOutOfRange {
                index: 9,
                available: 4
            }
        );
    }

    #[test]
    fn mismatched_nonterminal() {
        let (g, _) = setup();
        let err = validate(&geno("[P1, R0, S1, E0, I0]", 0), &g).unwrap_err();
        assert_eq!(err.position, 1);
        assert_eq!(err.nonterminal, "S");
    }

    #[test]
    fn seed_count_must_match_slots() {
        let (g, _) = setup();
        let err = validate(&geno("[P1, S0, R0, X0, E0, I0]", 0), &g).unwrap_err();
        assert_eq!(
            err.reason,
            ValidationReason::ExampleSeedCount {
                expected: 1,
                found: 0
            }
        );
    }

    #[test]
    fn subtree_ends() {
        let (g, _) = setup();
        let r = replay(&g, &geno("[P0, S0, R0, X1, N1, N0, T0, E0, I0]", 3).choices).unwrap();
        // S spans S0..N0 inclusive.
        assert_eq!(r.ends[1], 6);
        assert_eq!(r.ends[0], 9);
        assert_eq!(r.ends[4], 6);
    }

    #[test]
    fn parse_text_pieces() {
        let p = parse_text("a [[example]] b ((c3))").unwrap();
        assert_eq!(
            p,
            vec![
                RawPiece::Literal("a "),
                RawPiece::Task(TaskName::Example),
                RawPiece::Literal(" b "),
                RawPiece::Context(3)
            ]
        );
        assert!(parse_text("[[oops").is_err());
        assert!(parse_text("[[unknown]]").is_err());
        assert!(parse_text("((x1))").is_err());
    }
}
