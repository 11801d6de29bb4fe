use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{accuracy_of, component_accuracy_of, MetricsError};
use crate::dsl::{diff_scenarios_with, parse_scenario_text, ElementCatalog, MatchVector, Slot, Subcomponent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleScore {
    pub rule: String,
    pub accuracy: f64,
    pub matched: usize,
    pub slots: usize,
    /// Set when the predicted document is missing or does not parse.
    pub error: Option<String>,
    pub mismatched: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub rules: Vec<RuleScore>,
    /// Keyed by subcomponent key; `None` when no rule has that slot.
    pub components: BTreeMap<String, Option<f64>>,
    pub mean_rule_accuracy: f64,
}

fn read(path: &Path) -> Result<String, MetricsError> {
    std::fs::read_to_string(path).map_err(|e| MetricsError::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Scores every gold document against the predicted document of the same
/// file name. A missing or unparsable prediction scores 0 on every slot.
pub fn evaluate_corpus(pred_dir: &Path, gold_dir: &Path, catalog: &ElementCatalog) -> Result<CorpusReport, MetricsError> {
    let io = |p: &Path, e: std::io::Error| MetricsError::Io { path: p.display().to_string(), message: e.to_string() };
    let mut names: Vec<String> = std::fs::read_dir(gold_dir)
        .map_err(|e| io(gold_dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| !n.starts_with('.'))
        .collect();
    names.sort();

    let mut rules = Vec::new();
    let mut vectors = Vec::new();
    for name in names {
        let gold_text = read(&gold_dir.join(&name))?;
        let gold = parse_scenario_text(&gold_text)
            .map_err(|e| MetricsError::Io { path: gold_dir.join(&name).display().to_string(), message: e.to_string() })?;
        let pred_path = pred_dir.join(&name);
        let pred = std::fs::read_to_string(&pred_path)
            .map_err(|e| e.to_string())
            .and_then(|t| parse_scenario_text(&t).map_err(|e| e.to_string()));
        let (m, error) = match pred {
            Ok(p) => (diff_scenarios_with(&p, &gold, catalog), None),
            Err(e) => {
                let slots = Slot::all(gold.npc_actors.len()).into_iter().map(|s| (s, false)).collect();
                (MatchVector { slots }, Some(e))
            }
        };
        rules.push(RuleScore {
            rule: name,
            accuracy: accuracy_of(&m),
            matched: m.matched(),
            slots: m.len(),
            error,
            mismatched: m.mismatches().map(|s| s.to_string()).collect(),
        });
        vectors.push(m);
    }
    let components = Subcomponent::ALL.iter().map(|&c| (c.key().to_string(), component_accuracy_of(&vectors, c).ok())).collect();
    let mean_rule_accuracy =
        if rules.is_empty() { 0.0 } else { rules.iter().map(|r| r.accuracy).sum::<f64>() / rules.len() as f64 };
    Ok(CorpusReport { rules, components, mean_rule_accuracy })
}
