//! Three-stage chat-completion pipeline from rule text to a
//! catalog-aligned scenario document: extraction, validation, alignment.

mod backend;
mod prompts;

#[cfg(feature = "http")]
pub use backend::UreqTransport;
pub use backend::{
    fixture_path, transcript_hash, BackendError, ChatBackend, HttpBackend, HttpConfig, RecordingBackend, ReplayBackend,
    ScriptedBackend, Transport, API_KEY_ENV,
};
pub use prompts::{
    build_alignment_prompt, build_extraction_prompt, build_validation_prompt, PromptMessage, Role, DSL_DEFINITION, KEEP_PHRASE,
    REASK, ROLE_SETTING, VALIDATION_QUESTION,
};

use serde::{Deserialize, Serialize};

use crate::dsl::{normalize_token, parse_scenario_text, validate_scenario, DslError, ElementCatalog, ScenarioRep, TokenPath};

pub const DEFAULT_ALIGN_THRESHOLD: f64 = 0.75;

/// The built-in one-shot example pair.
pub fn default_example() -> (String, ScenarioRep) {
    let rule = include_str!("../../data/example_rule.txt").trim().to_string();
    let rep = parse_scenario_text(include_str!("../../data/example.dsl")).expect("built-in example parses");
    (rule, rep)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{stage}: no scenario document in the response after {attempts} attempts: {last_error}")]
    ExtractionUnparseable { stage: Stage, attempts: usize, last_error: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Extraction,
    Validation,
    Alignment,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Extraction => "extraction",
            Stage::Validation => "validation",
            Stage::Alignment => "alignment",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParseOptions {
    /// Follow-up requests when a response holds no parsable document.
    pub max_reasks: usize,
    /// Align novel tokens by string similarity instead of asking the backend.
    pub local_alignment: Option<f64>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { max_reasks: 2, local_alignment: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub path: TokenPath,
    pub subcomponent: String,
    pub original: String,
    pub aligned: String,
    /// True when the token stayed outside the catalog.
    pub novel: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub stage: Stage,
    pub message: PromptMessage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseSession {
    pub rule_text: String,
    pub backend_id: String,
    pub draft_rep: Option<ScenarioRep>,
    pub validated_rep: Option<ScenarioRep>,
    pub aligned_rep: Option<ScenarioRep>,
    pub alignments: Vec<Alignment>,
    pub transcript: Vec<TranscriptEntry>,
    pub completions: usize,
}

impl ParseSession {
    pub fn succeeded(&self) -> bool {
        self.aligned_rep.is_some()
    }
}

fn fenced_blocks(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                Some(lines) => out.push(lines.join("\n") + "\n"),
                None => current = Some(Vec::new()),
            }
        } else if let Some(lines) = current.as_mut() {
            lines.push(line);
        }
    }
    out
}

const TOP_KEYS: [&str; 4] = ["environment:", "road_network:", "actors:", "oracle:"];

/// Runs of top-level document keys and their indented bodies.
fn bare_blocks(text: &str) -> Vec<String> {
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::new();
    for (i, l) in lines.iter().enumerate() {
        if !l.starts_with("environment:") {
            continue;
        }
        let mut end = i + 1;
        while end < lines.len() {
            let l = lines[end];
            let body = l.starts_with(' ') || l.trim().is_empty() || TOP_KEYS.iter().any(|k| l.starts_with(k));
            if !body {
                break;
            }
            end += 1;
        }
        out.push(lines[i..end].join("\n") + "\n");
    }
    out
}

/// The longest fenced or bare block of `text` that parses as a document.
pub fn extract_document(text: &str) -> Result<ScenarioRep, DslError> {
    let mut candidates = fenced_blocks(text);
    candidates.extend(bare_blocks(text));
    candidates.push(text.to_string());
    let mut best: Option<(usize, ScenarioRep)> = None;
    let mut first_err = None;
    for c in candidates {
        match parse_scenario_text(&c) {
            Ok(rep) => {
                if best.as_ref().is_none_or(|(len, _)| c.len() > *len) {
                    best = Some((c.len(), rep));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.map(|(_, r)| r).ok_or_else(|| first_err.unwrap_or(DslError::MissingField("environment".into())))
}

/// Similarity in [0, 1]: one minus the edit distance over the longer length.
pub fn similarity(a: &str, b: &str) -> f64 {
    strsim::normalized_levenshtein(a, b)
}

/// Best candidate by [`similarity`] at or above `threshold`, earliest on ties;
/// otherwise `token` itself.
pub fn align_token_locally(token: &str, candidates: &[String], threshold: f64) -> String {
    let norm = normalize_token(token);
    let mut best: Option<(&String, f64)> = None;
    for c in candidates {
        let s = similarity(&norm, c);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    match best {
        Some((c, s)) if s >= threshold => c.clone(),
        _ => token.to_string(),
    }
}

/// Reads a stage-3 reply: a catalog token, or the original when the reply
/// asks to keep it or names nothing from the list.
pub fn interpret_alignment(reply: &str, original: &str, candidates: &[String], catalog: &ElementCatalog) -> String {
    let lower = reply.to_lowercase();
    if lower.contains(KEEP_PHRASE) {
        return original.to_string();
    }
    let first = reply
        .lines()
        .map(|l| l.trim().trim_matches(|c: char| c == '`' || c == '"' || c == '\'' || c == '*' || c == '.'))
        .find(|l| !l.is_empty() && !l.starts_with("```"))
        .unwrap_or("");
    let first = first.split_once(':').map_or(first, |(head, tail)| if head.len() < 20 { tail } else { first });
    let direct = catalog.normalize(first);
    if candidates.contains(&direct) {
        return direct;
    }
    let padded = format!(" {} ", normalize_token(&lower));
    let mut hits: Vec<&String> = candidates.iter().filter(|c| padded.contains(&format!(" {c} "))).collect();
    hits.sort_by_key(|c| std::cmp::Reverse(c.len()));
    match hits.as_slice() {
        [only] => (*only).clone(),
        [a, b, ..] if a.len() > b.len() => (*a).clone(),
        _ => original.to_string(),
    }
}

struct Conversation<'a> {
    backend: &'a dyn ChatBackend,
    session: ParseSession,
}

impl Conversation<'_> {
    fn record(&mut self, stage: Stage, msgs: &[PromptMessage]) {
        self.session.transcript.extend(msgs.iter().map(|m| TranscriptEntry { stage, message: m.clone() }));
    }

    fn ask(&mut self, request: &[PromptMessage]) -> Result<String, ParseError> {
        self.session.completions += 1;
        let reply = self.backend.complete(request)?;
        Ok(reply)
    }

    /// Sends `chat` (already including the new user turn) and re-asks until
    /// a document parses. Returns the document and the grown chat.
    fn ask_for_document(
        &mut self,
        stage: Stage,
        mut chat: Vec<PromptMessage>,
        new_turns: usize,
        max_reasks: usize,
    ) -> Result<(ScenarioRep, Vec<PromptMessage>), ParseError> {
        self.record(stage, &chat[chat.len() - new_turns..]);
        let mut attempts = 0;
        loop {
            attempts += 1;
            let reply = self.ask(&chat)?;
            let msg = PromptMessage { role: Role::Assistant, content: reply.clone() };
            self.record(stage, std::slice::from_ref(&msg));
            chat.push(msg);
            match extract_document(&reply) {
                Ok(rep) => return Ok((rep, chat)),
                Err(e) if attempts > max_reasks => {
                    return Err(ParseError::ExtractionUnparseable { stage, attempts, last_error: e.to_string() })
                }
                Err(_) => {
                    let re = PromptMessage::user(REASK);
                    self.record(stage, std::slice::from_ref(&re));
                    chat.push(re);
                }
            }
        }
    }
}

/// Runs all three stages. On an extraction failure the error carries the stage;
/// [`parse_rule_session`] also returns the partial session.
pub fn parse_rule(
    rule: &str,
    backend: &dyn ChatBackend,
    catalog: &ElementCatalog,
    example: &(String, ScenarioRep),
    options: &ParseOptions,
) -> Result<ParseSession, ParseError> {
    let (session, result) = parse_rule_session(rule, backend, catalog, example, options);
    result.map(|_| session)
}

/// Like [`parse_rule`], but always hands back the session for inspection.
pub fn parse_rule_session(
    rule: &str,
    backend: &dyn ChatBackend,
    catalog: &ElementCatalog,
    example: &(String, ScenarioRep),
    options: &ParseOptions,
) -> (ParseSession, Result<(), ParseError>) {
    let mut conv = Conversation {
        backend,
        session: ParseSession {
            rule_text: rule.trim().to_string(),
            backend_id: backend.id(),
            draft_rep: None,
            validated_rep: None,
            aligned_rep: None,
            alignments: Vec::new(),
            transcript: Vec::new(),
            completions: 0,
        },
    };
    let result = run_stages(&mut conv, rule, catalog, example, options);
    (conv.session, result)
}

fn run_stages(
    conv: &mut Conversation,
    rule: &str,
    catalog: &ElementCatalog,
    example: &(String, ScenarioRep),
    options: &ParseOptions,
) -> Result<(), ParseError> {
    let chat = build_extraction_prompt(rule, catalog, example);
    let n = chat.len();
    let (draft, mut chat) = conv.ask_for_document(Stage::Extraction, chat, n, options.max_reasks)?;
    conv.session.draft_rep = Some(draft.clone());

    let follow = build_validation_prompt(&draft);
    let n = follow.len();
    chat.extend(follow);
    let (validated, _) = conv.ask_for_document(Stage::Validation, chat, n, options.max_reasks)?;
    conv.session.validated_rep = Some(validated.clone());

    let mut aligned = validated.clone();
    let report = validate_scenario(&validated, catalog);
    for entry in report.novel() {
        let candidates = catalog.candidates(entry.subcomponent);
        let choice = match options.local_alignment {
            Some(th) => align_token_locally(&entry.token, &candidates, th),
            None => {
                let prompt =
                    build_alignment_prompt(&entry.token, entry.subcomponent.key(), catalog).expect("validated subcomponent key");
                conv.record(Stage::Alignment, &prompt);
                let reply = conv.ask(&prompt)?;
                conv.record(Stage::Alignment, &[PromptMessage { role: Role::Assistant, content: reply.clone() }]);
                interpret_alignment(&reply, &entry.token, &candidates, catalog)
            }
        };
        let novel = !catalog.contains(entry.subcomponent, &choice);
        aligned.set_token(entry.path, &choice);
        conv.session.alignments.push(Alignment {
            path: entry.path,
            subcomponent: entry.subcomponent.key().to_string(),
            original: entry.token.clone(),
            aligned: choice,
            novel,
        });
    }
    // Re-parse so the stored result is exactly what a reader of the document gets.
    let text = crate::dsl::serialize_scenario(&aligned);
    let aligned = parse_scenario_text(&text).map_err(|e| ParseError::ExtractionUnparseable {
        stage: Stage::Alignment,
        attempts: 1,
        last_error: e.to_string(),
    })?;
    conv.session.aligned_rep = Some(aligned);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cands(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn local_alignment_cases() {
        let signs = cands(&["yield sign", "stop sign", "speed limit sign"]);
        assert_eq!(align_token_locally("stop signs", &signs, 0.75), "stop sign");
        assert_eq!(align_token_locally("zorp", &signs, 0.75), "zorp");
        // "ab" is one edit from both "aa" and "bb".
        assert_eq!(align_token_locally("ab", &cands(&["bb", "aa"]), 0.5), "bb");
    }

    #[test]
    fn extract_prefers_fenced_document() {
        let doc = crate::dsl::serialize_scenario(&default_example().1);
        let reply = format!("Here you go:\n\n```yaml\n{doc}```\nHope this helps.");
        assert_eq!(extract_document(&reply).unwrap(), default_example().1);
        let bare = format!("Sure.\n{doc}\nThat is all.");
        assert_eq!(extract_document(&bare).unwrap(), default_example().1);
        assert!(extract_document("I cannot do that.").is_err());
    }

    #[test]
    fn alignment_reply_reading() {
        let catalog = ElementCatalog::builtin();
        let behaviors = catalog.candidates(crate::dsl::Subcomponent::Behavior);
        assert_eq!(interpret_alignment("go forward", "go straight", &behaviors, &catalog), "go forward");
        assert_eq!(interpret_alignment("Answer: `go forward`.", "go straight", &behaviors, &catalog), "go forward");
        assert_eq!(
            interpret_alignment("The closest element is \"go forward\".", "go straight", &behaviors, &catalog),
            "go forward"
        );
        let signs = catalog.candidates(crate::dsl::Subcomponent::TrafficSign);
        assert_eq!(
            interpret_alignment("None match, so keep your output element: flashing beacon", "flashing beacon", &signs, &catalog),
            "flashing beacon"
        );
    }
}
