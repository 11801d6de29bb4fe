//! Parsing accuracy and inter-rater agreement.

mod corpus;
mod kappa;

pub use corpus::{evaluate_corpus, CorpusReport, RuleScore};
pub use kappa::{weighted_fleiss_kappa, VoteMatrix};

use crate::dsl::{diff_scenarios_with, ElementCatalog, MatchVector, ScenarioRep, Subcomponent};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("no applicable slots: the fraction is undefined")]
    DivisionUndefined,
    #[error("expected agreement is 1: kappa is undefined for this matrix")]
    DegenerateMatrix,
    #[error("invalid vote matrix: {0}")]
    InvalidMatrix(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Share of matching slots between `pred` and `gold`.
pub fn rule_parsing_accuracy(pred: &ScenarioRep, gold: &ScenarioRep) -> f64 {
    let catalog = ElementCatalog::builtin();
    accuracy_of(&diff_scenarios_with(pred, gold, &catalog))
}

pub fn accuracy_of(m: &MatchVector) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.matched() as f64 / m.len() as f64
}

/// Share of `sub`'s slots matching across all pairs. Pairs without such a
/// slot do not count.
pub fn component_parsing_accuracy(pairs: &[(ScenarioRep, ScenarioRep)], sub: Subcomponent) -> Result<f64, MetricsError> {
    let catalog = ElementCatalog::builtin();
    let vectors: Vec<MatchVector> = pairs.iter().map(|(p, g)| diff_scenarios_with(p, g, &catalog)).collect();
    component_accuracy_of(&vectors, sub)
}

pub fn component_accuracy_of(vectors: &[MatchVector], sub: Subcomponent) -> Result<f64, MetricsError> {
    let (mut hit, mut total) = (0usize, 0usize);
    for m in vectors {
        for (slot, ok) in &m.slots {
            if slot.subcomponent() == sub {
                total += 1;
                hit += usize::from(*ok);
            }
        }
    }
    if total == 0 {
        return Err(MetricsError::DivisionUndefined);
    }
    Ok(hit as f64 / total as f64)
}
