use serde::{Deserialize, Serialize};

use super::{ElementCatalog, ScenarioRep, Slot, Subcomponent, TokenPath, NONE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenStatus {
    /// Token found in the catalog (after alias folding).
    Catalog,
    /// Token not in the catalog. A warning, not an error.
    Novel,
    /// The `none` sentinel or an empty list.
    Sentinel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationEntry {
    pub path: TokenPath,
    pub subcomponent: Subcomponent,
    pub token: String,
    pub status: TokenStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub entries: Vec<ValidationEntry>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn novel(&self) -> impl Iterator<Item = &ValidationEntry> {
        self.entries.iter().filter(|e| e.status == TokenStatus::Novel)
    }

    pub fn status_of(&self, path: TokenPath) -> Option<TokenStatus> {
        self.entries.iter().find(|e| e.path == path).map(|e| e.status)
    }
}

/// Classifies every token of `rep` against `catalog`.
pub fn validate_scenario(rep: &ScenarioRep, catalog: &ElementCatalog) -> ValidationReport {
    let mut report = ValidationReport::default();
    for slot in Slot::all(rep.npc_actors.len()) {
        let sub = slot.subcomponent();
        let tokens = rep.slot_tokens(slot);
        if slot.is_list() && tokens.is_empty() {
            report.entries.push(ValidationEntry {
                path: TokenPath { slot, index: None },
                subcomponent: sub,
                token: NONE.to_string(),
                status: TokenStatus::Sentinel,
            });
            continue;
        }
        for (i, tok) in tokens.into_iter().enumerate() {
            let status = if tok == NONE {
                TokenStatus::Sentinel
            } else if catalog.contains(sub, tok) {
                TokenStatus::Catalog
            } else {
                TokenStatus::Novel
            };
            let index = slot.is_list().then_some(i);
            report.entries.push(ValidationEntry {
                path: TokenPath { slot, index },
                subcomponent: sub,
                token: tok.to_string(),
                status,
            });
        }
    }
    if rep.oracle.is_empty() {
        report.warnings.push("both oracle lists are empty; the scenario has nothing to check".into());
    }
    let novel: Vec<String> = report.novel().map(|e| format!("novel element `{}` at {}", e.token, e.path)).collect();
    report.warnings.extend(novel);
    report
}
