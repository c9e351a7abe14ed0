use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("output `{output}` is consistent with several choices: {candidates:?}")]
    AmbiguousOutput {
        output: String,
        candidates: Vec<String>,
    },
}

/// Lowercase, trim, and strip surrounding punctuation.
pub fn normalize(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_lowercase()
}

/// `prefix` is a prefix of `text` ending on a word boundary.
fn word_prefix(text: &str, prefix: &str) -> bool {
    text.starts_with(prefix)
        && text[prefix.len()..]
            .chars()
            .next()
            .is_none_or(|c| !c.is_alphanumeric())
}

/// Decides whether a (possibly truncated) model output answers `target`.
///
/// Both sides are normalized. An exact match wins. Otherwise, when
/// `choices` are given, the output is resolved to the single choice that
/// either starts with the output (a cut-off answer such as `inva`) or that
/// the output starts with at a word boundary (`no, because`). Several such
/// choices is an error; the caller counts it as unmatched.
pub fn match_answer(raw_output: &str, target: &str, choices: Option<&[String]>) -> Result<bool, MatchError> {
    let out = normalize(raw_output);
    if out.is_empty() {
        return Ok(false);
    }
    let target = normalize(target);
    if out == target {
        return Ok(true);
    }
    let Some(choices) = choices else {
        return Ok(false);
    };
    let normalized: Vec<String> = choices.iter().map(|c| normalize(c)).collect();
    if normalized.iter().any(|c| *c == out) {
        return Ok(false);
    }
    let candidates: Vec<&String> = normalized
        .iter()
        .filter(|c| !c.is_empty() && (c.starts_with(&out) || word_prefix(&out, c)))
        .collect();
    match candidates.as_slice() {
        [] => Ok(false),
        [only] => Ok(**only == target),
        many => Err(MatchError::AmbiguousOutput {
            output: out.clone(),
            candidates: many.iter().map(|s| s.to_string()).collect(),
        }),
    }
}
