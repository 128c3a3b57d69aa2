use std::collections::BTreeSet;

use locc_core::{Bipartition, PartySystem};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CutParseError {
    #[error("cut must have the form \"1,2|3\"")]
    Malformed,
    #[error("'{0}' is not a party number")]
    BadToken(String),
    #[error("party {party} out of range 1..={parties}")]
    OutOfRange { party: usize, parties: usize },
    #[error("party {0} appears on both sides")]
    Overlap(usize),
    #[error("party {0} listed twice")]
    Duplicate(usize),
    #[error("both sides must be nonempty")]
    EmptySide,
    #[error("party {0} is on neither side")]
    Missing(usize),
}

fn side(text: &str, parties: usize) -> Result<Vec<usize>, CutParseError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(CutParseError::EmptySide);
    }
    let mut seen = BTreeSet::new();
    for token in text.split(',') {
        let token = token.trim();
        let party: usize = token.parse().map_err(|_| CutParseError::BadToken(token.to_string()))?;
        if party == 0 || party > parties {
            return Err(CutParseError::OutOfRange { party, parties });
        }
        if !seen.insert(party) {
            return Err(CutParseError::Duplicate(party));
        }
    }
    Ok(seen.into_iter().map(|p| p - 1).collect())
}

/// Parses `"1,2|3"` (1-based party numbers) into a cut of `system`.
pub fn parse_cut(spec: &str, system: &PartySystem) -> Result<Bipartition, CutParseError> {
    let m = system.num_parties();
    let (a, b) = spec.split_once('|').ok_or(CutParseError::Malformed)?;
    if b.contains('|') {
        return Err(CutParseError::Malformed);
    }
    let a = side(a, m)?;
    let b = side(b, m)?;
    if let Some(p) = a.iter().find(|p| b.contains(p)) {
        return Err(CutParseError::Overlap(p + 1));
    }
    if let Some(p) = (0..m).find(|p| !a.contains(p) && !b.contains(p)) {
        return Err(CutParseError::Missing(p + 1));
    }
    Bipartition::new(&a, m).map_err(|_| CutParseError::EmptySide)
}

/// `{P1}|{P2,P3}` using the system's labels.
pub fn format_cut(cut: &Bipartition, system: &PartySystem) -> String {
    let names = |s: &[usize]| s.iter().map(|&i| system.label(i)).collect::<Vec<_>>().join(",");
    format!("{{{}}}|{{{}}}", names(cut.side_a()), names(cut.side_b()))
}
