use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dsl::{serialize_scenario, ElementCatalog, ScenarioRep, Subcomponent, UnknownSubcomponent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptMessage {
    pub role: Role,
    pub content: String,
}

impl PromptMessage {
    /// Panics on empty content; every template here produces text.
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        let content = content.into();
        assert!(!content.trim().is_empty(), "prompt message content must be non-empty");
        PromptMessage { role, content }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

pub const ROLE_SETTING: &str = "You are a test expert for autonomous driving systems. Your task is to generate specific test scenario representations from given traffic rules.";

pub const VALIDATION_QUESTION: &str = "Are the elements in the generated scenario description consistent with the input traffic rule? If not, correct the inconsistencies and output the revised scenario representation.";

pub const REASK: &str = "Output only the scenario representation document.";

pub const KEEP_PHRASE: &str = "keep your output element";

/// Grammar summary shown to the model.
pub const DSL_DEFINITION: &str = "\
A scenario representation is an indented key/value document (2 spaces per level).
Scalars are single elements, lists are written inline as [a, b], and `none`
marks an element the rule does not specify.

environment:
  weather: <weather>
  time: <time>
road_network:
  road_type: <road type>
  road_marker: <road marker>
  traffic_signs: [<traffic sign>, ...]
actors:
  ego:
    type: <type>
    behavior: <behavior>
    position:
      reference: <position reference>
      relation: <position relation>
  npc_actors:
    - type: <type>
      behavior: <behavior>
      position:
        reference: <position reference>
        relation: <position relation>
oracle:
  longitudinal: [<longitudinal oracle>, ...]
  lateral: [<lateral oracle>, ...]

Write `npc_actors: []` when the rule involves no other actor. A position
reference is `ego vehicle`, a road type, a road marker or a traffic sign; the
ego vehicle never references itself.";

fn element_lists(catalog: &ElementCatalog) -> String {
    let mut out = String::new();
    for sub in Subcomponent::ALL {
        let tokens = catalog.candidates(sub);
        let list = if tokens.is_empty() { "(none)".to_string() } else { tokens.join(", ") };
        let _ = writeln!(out, "- {}: {}", sub.display_name(), list);
    }
    out.trim_end().to_string()
}

fn fenced(doc: &str) -> String {
    format!("```\n{}```", doc)
}

/// Stage 1: role setting, then one user message with the grammar, the
/// element lists, the worked example and the rule.
pub fn build_extraction_prompt(rule: &str, catalog: &ElementCatalog, example: &(String, ScenarioRep)) -> Vec<PromptMessage> {
    let (example_rule, example_rep) = example;
    let body = format!(
        "Below is the definition of a domain-specific language to represent test scenarios for autonomous driving systems:\n\
         {dsl}\n\n\
         Below are the lists of commonly used elements for each subcomponent. When creating the scenario representation, consider the following elements first for each subcomponent. If no element can describe the close meaning, create a new element by yourself.\n\
         {lists}\n\n\
         Below is an example of an input traffic rule and the corresponding scenario representation:\n\
         Traffic rule: {example_rule}\n\
         Scenario representation:\n{example_doc}\n\n\
         Based on the above descriptions and examples, convert the following traffic rule to corresponding scenario representation:\n\
         {rule}",
        dsl = DSL_DEFINITION,
        lists = element_lists(catalog),
        example_rule = example_rule.trim(),
        example_doc = fenced(&serialize_scenario(example_rep)),
        rule = rule.trim(),
    );
    vec![PromptMessage::system(ROLE_SETTING), PromptMessage::user(body)]
}

/// Stage 2: a single follow-up turn appended to the running conversation.
pub fn build_validation_prompt(draft: &ScenarioRep) -> Vec<PromptMessage> {
    let body = format!(
        "{VALIDATION_QUESTION}\nOutput the full scenario representation document, revised or not.\n\nGenerated scenario representation:\n{}",
        fenced(&serialize_scenario(draft))
    );
    vec![PromptMessage::user(body)]
}

/// Stage 3 for one element; lists only the candidates of `subcomponent`.
pub fn build_alignment_prompt(
    token: &str,
    subcomponent: &str,
    catalog: &ElementCatalog,
) -> Result<Vec<PromptMessage>, UnknownSubcomponent> {
    let sub: Subcomponent = subcomponent.parse()?;
    let list = catalog.candidates(sub);
    let list = if list.is_empty() { "(none)".to_string() } else { list.join("\n") };
    let body = format!(
        "For each element {token} of the subcomponent {name}, find out an element with the closest meaning to your output element from the following element list. If all elements in the element list do not express a similar meaning as your output element, keep your output element as the answer.\n{list}\n\nAnswer with the chosen element only.",
        name = sub.display_name(),
    );
    Ok(vec![PromptMessage::system(ROLE_SETTING), PromptMessage::user(body)])
}
