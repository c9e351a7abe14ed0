use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A single expansion decision: which production of `nonterminal` was used.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(String, usize)", into = "(String, usize)")]
pub struct Choice {
    pub nonterminal: String,
    pub rule: usize,
}

impl Choice {
    pub fn new(nonterminal: impl Into<String>, rule: usize) -> Self {
        Choice {
            nonterminal: nonterminal.into(),
            rule,
        }
    }
}

impl From<(String, usize)> for Choice {
    fn from((nonterminal, rule): (String, usize)) -> Self {
        Choice { nonterminal, rule }
    }
}

impl From<Choice> for (String, usize) {
    fn from(c: Choice) -> Self {
        (c.nonterminal, c.rule)
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.nonterminal, self.rule)
    }
}

/// Ordered production choices in depth-first expansion order, plus one seed
/// per `[[example]]` slot so the examples shown to the model are fixed for
/// a given genotype.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Genotype {
    pub choices: Vec<Choice>,
    #[serde(default)]
    pub example_seeds: Vec<u64>,
}

impl Genotype {
    pub fn new(choices: Vec<Choice>, example_seeds: Vec<u64>) -> Self {
        Genotype {
            choices,
            example_seeds,
        }
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }
}

impl fmt::Display for Genotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, c) in self.choices.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse choice `{0}`; expected a name followed by a rule index, e.g. `P2`")]
pub struct ParseChoiceError(String);

impl FromStr for Choice {
    type Err = ParseChoiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let split = s
            .char_indices()
            .rev()
            .take_while(|(_, c)| c.is_ascii_digit())
            .last()
            .map(|(i, _)| i)
            .ok_or_else(|| ParseChoiceError(s.to_string()))?;
        if split == 0 {
            return Err(ParseChoiceError(s.to_string()));
        }
        let rule = s[split..]
            .parse()
            .map_err(|_| ParseChoiceError(s.to_string()))?;
        Ok(Choice::new(&s[..split], rule))
    }
}

impl FromStr for Genotype {
    type Err = ParseChoiceError;

    /// Parses the compact form `[P2, C6, S0, R0, X0, T3, E0, I0]`. Example
    /// seeds are left empty; callers attach them separately.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
        let choices = inner
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()?;
        Ok(Genotype::new(choices, Vec::new()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let g: Genotype = "[P2, C6, S0, R0, X0, T3, E0, I0]".parse().unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g.choices[1], Choice::new("C", 6));
        assert_eq!(g.to_string(), "[P2, C6, S0, R0, X0, T3, E0, I0]");
    }

    #[test]
    fn parse_multi_digit() {
        assert_eq!("T10".parse::<Choice>().unwrap(), Choice::new("T", 10));
        assert!("12".parse::<Choice>().is_err());
        assert!("P".parse::<Choice>().is_err());
    }

    #[test]
    fn serde_as_pairs() {
        let g = Genotype::new(vec![Choice::new("P", 1)], vec![7]);
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(json, r#"{"choices":[["P",1]],"example_seeds":[7]}"#);
        assert_eq!(serde_json::from_str::<Genotype>(&json).unwrap(), g);
    }
}
