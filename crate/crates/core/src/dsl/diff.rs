use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{normalize_token, ActorSlot, ElementCatalog, ScenarioRep, Slot};

/// Per-slot equality of a predicted representation against a gold one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchVector {
    pub slots: Vec<(Slot, bool)>,
}

impl MatchVector {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn matched(&self) -> usize {
        self.slots.iter().filter(|(_, ok)| *ok).count()
    }

    pub fn all_true(&self) -> bool {
        self.slots.iter().all(|(_, ok)| *ok)
    }

    pub fn mismatches(&self) -> impl Iterator<Item = Slot> + '_ {
        self.slots.iter().filter(|(_, ok)| !ok).map(|(s, _)| *s)
    }
}

/// Compares two representations slot by slot. NPCs pair by list position;
/// list-valued slots compare as sets.
pub fn diff_scenarios(pred: &ScenarioRep, gold: &ScenarioRep) -> MatchVector {
    diff_impl(pred, gold, &|t| normalize_token(t))
}

/// Like [`diff_scenarios`], additionally folding tokens through the catalog's alias table.
pub fn diff_scenarios_with(pred: &ScenarioRep, gold: &ScenarioRep, catalog: &ElementCatalog) -> MatchVector {
    diff_impl(pred, gold, &|t| catalog.normalize(t))
}

fn diff_impl(pred: &ScenarioRep, gold: &ScenarioRep, norm: &dyn Fn(&str) -> String) -> MatchVector {
    let npcs = pred.npc_actors.len().max(gold.npc_actors.len());
    let slots = Slot::all(npcs)
        .into_iter()
        .map(|slot| {
            if let Slot::Actor(ActorSlot::Npc(i), _) = slot {
                if i >= pred.npc_actors.len() || i >= gold.npc_actors.len() {
                    return (slot, false);
                }
            }
            let ok = if slot.is_list() {
                let a: BTreeSet<String> = pred.slot_tokens(slot).into_iter().map(norm).collect();
                let b: BTreeSet<String> = gold.slot_tokens(slot).into_iter().map(norm).collect();
                a == b
            } else {
                let a: Vec<String> = pred.slot_tokens(slot).into_iter().map(norm).collect();
                let b: Vec<String> = gold.slot_tokens(slot).into_iter().map(norm).collect();
                a == b
            };
            (slot, ok)
        })
        .collect();
    MatchVector { slots }
}
