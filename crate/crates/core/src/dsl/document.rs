//! Surface grammar for scenario documents: an indentation-based key/value
//! format (a strict subset of YAML) with inline `[a, b]` lists, `- ` block
//! sequences for NPC actors and `#` comments.

use std::fmt::Write as _;

use super::{
    dedup_in_place, normalize_token, Actor, ActorKind, Environment, Oracle, RoadNetwork, ScenarioRep, EGO_VEHICLE, NONE,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DslError {
    #[error("line {line}: expected {expected}")]
    Syntax { line: usize, expected: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("ego position reference must not be `ego vehicle`")]
    EgoReferencesItself,
}

impl DslError {
    fn syntax(line: usize, expected: impl Into<String>) -> Self {
        DslError::Syntax { line, expected: expected.into() }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Scalar(String, usize),
    List(Vec<String>, usize),
    Map(Vec<(String, Node, usize)>, usize),
    Seq(Vec<Node>, usize),
}

impl Node {
    fn line(&self) -> usize {
        match self {
            Node::Scalar(_, l) | Node::List(_, l) | Node::Map(_, l) | Node::Seq(_, l) => *l,
        }
    }
}

#[derive(Debug, Clone)]
struct Line<'a> {
    no: usize,
    indent: usize,
    /// Set for the synthetic line produced by splitting `- key: value`.
    item_start: bool,
    text: &'a str,
}

fn lex(text: &str) -> Result<Vec<Line<'_>>, DslError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let content = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let content = content.trim_end();
        if content.trim().is_empty() {
            continue;
        }
        if content.starts_with('\t') || content[..content.len() - content.trim_start().len()].contains('\t') {
            return Err(DslError::syntax(no, "spaces for indentation, found a tab"));
        }
        let indent = content.len() - content.trim_start().len();
        if indent % 2 != 0 {
            return Err(DslError::syntax(no, "indentation in multiples of 2 spaces"));
        }
        let body = content.trim_start();
        if let Some(rest) = body.strip_prefix("- ").or_else(|| (body == "-").then_some("")) {
            let rest = rest.trim_start();
            if rest.is_empty() {
                return Err(DslError::syntax(no, "a `key: value` pair after `- `"));
            }
            out.push(Line { no, indent: indent + 2, item_start: true, text: rest });
        } else {
            out.push(Line { no, indent, item_start: false, text: body });
        }
    }
    Ok(out)
}

struct TreeParser<'a> {
    lines: Vec<Line<'a>>,
    pos: usize,
}

impl<'a> TreeParser<'a> {
    fn peek(&self) -> Option<&Line<'a>> {
        self.lines.get(self.pos)
    }

    fn parse_block(&mut self, indent: usize) -> Result<Node, DslError> {
        match self.peek() {
            Some(l) if l.item_start && l.indent == indent + 2 => self.parse_seq(indent),
            _ => self.parse_map(indent, false),
        }
    }

    fn parse_seq(&mut self, indent: usize) -> Result<Node, DslError> {
        let start = self.peek().map_or(0, |l| l.no);
        let mut items = Vec::new();
        while let Some(l) = self.peek() {
            if !(l.item_start && l.indent == indent + 2) {
                break;
            }
            items.push(self.parse_map(indent + 2, true)?);
        }
        Ok(Node::Seq(items, start))
    }

    fn parse_map(&mut self, indent: usize, first_is_item: bool) -> Result<Node, DslError> {
        let start = self.peek().map_or(0, |l| l.no);
        let mut entries: Vec<(String, Node, usize)> = Vec::new();
        let mut first = true;
        while let Some(l) = self.peek().cloned() {
            if l.indent < indent {
                break;
            }
            if l.indent > indent {
                return Err(DslError::syntax(l.no, format!("a key at indentation {indent}")));
            }
            if l.item_start && !(first && first_is_item) {
                break;
            }
            first = false;
            self.pos += 1;
            let Some((key, rest)) = l.text.split_once(':') else {
                return Err(DslError::syntax(l.no, "`key: value`"));
            };
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(DslError::syntax(l.no, "a key made of letters, digits and `_`"));
            }
            if entries.iter().any(|(k, _, _)| k == key) {
                return Err(DslError::syntax(l.no, format!("key `{key}` at most once")));
            }
            let rest = rest.trim();
            let node = if rest.is_empty() {
                match self.peek() {
                    Some(n) if n.indent > indent => self.parse_block(indent + 2)?,
                    _ => return Err(DslError::syntax(l.no, format!("a value or nested block for `{key}`"))),
                }
            } else if let Some(inner) = rest.strip_prefix('[') {
                let Some(inner) = inner.strip_suffix(']') else {
                    return Err(DslError::syntax(l.no, "`]` closing the inline list"));
                };
                let items: Vec<String> =
                    if inner.trim().is_empty() { Vec::new() } else { inner.split(',').map(|s| s.trim().to_string()).collect() };
                if items.iter().any(String::is_empty) {
                    return Err(DslError::syntax(l.no, "a token between list separators"));
                }
                Node::List(items, l.no)
            } else {
                Node::Scalar(rest.to_string(), l.no)
            };
            entries.push((key.to_string(), node, l.no));
        }
        Ok(Node::Map(entries, start))
    }
}

/// Closed-key view over a map node.
struct Fields<'n> {
    path: String,
    entries: &'n [(String, Node, usize)],
}

impl<'n> Fields<'n> {
    fn new(node: &'n Node, path: &str, allowed: &[&str]) -> Result<Self, DslError> {
        let Node::Map(entries, _) = node else {
            return Err(DslError::syntax(node.line(), format!("a nested block for `{path}`")));
        };
        for (k, _, line) in entries {
            if !allowed.contains(&k.as_str()) {
                return Err(DslError::UnknownKey { key: k.clone(), line: *line });
            }
        }
        Ok(Self { path: path.to_string(), entries })
    }

    fn child_path(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn get(&self, key: &str) -> Result<&'n Node, DslError> {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, n, _)| n)
            .ok_or_else(|| DslError::MissingField(self.child_path(key)))
    }

    fn token(&self, key: &str) -> Result<String, DslError> {
        match self.get(key)? {
            Node::Scalar(s, line) => {
                let t = normalize_token(s);
                if t.is_empty() {
                    Err(DslError::syntax(*line, format!("a token for `{}`", self.child_path(key))))
                } else {
                    Ok(t)
                }
            }
            other => Err(DslError::syntax(other.line(), format!("a single token for `{}`", self.child_path(key)))),
        }
    }

    fn token_list(&self, key: &str) -> Result<Vec<String>, DslError> {
        let raw: Vec<String> = match self.get(key)? {
            Node::List(items, _) => items.clone(),
            Node::Scalar(s, _) => vec![s.clone()],
            other => return Err(DslError::syntax(other.line(), format!("an inline list for `{}`", self.child_path(key)))),
        };
        let mut out = Vec::new();
        for r in raw {
            let t = normalize_token(&r);
            if t.is_empty() || t == NONE {
                continue;
            }
            out.push(t);
        }
        dedup_in_place(&mut out);
        Ok(out)
    }
}

fn parse_actor(node: &Node, path: &str, kind: ActorKind) -> Result<Actor, DslError> {
    let f = Fields::new(node, path, &["type", "behavior", "position"])?;
    let pos = Fields::new(f.get("position")?, &f.child_path("position"), &["reference", "relation"])?;
    Ok(Actor {
        kind,
        actor_type: f.token("type")?,
        behavior: f.token("behavior")?,
        position_reference: pos.token("reference")?,
        position_relation: pos.token("relation")?,
    })
}

/// Parses a scenario document into a [`ScenarioRep`].
pub fn parse_scenario_text(text: &str) -> Result<ScenarioRep, DslError> {
    let lines = lex(text)?;
    let mut tp = TreeParser { lines, pos: 0 };
    let root = tp.parse_map(0, false)?;
    if let Some(l) = tp.peek() {
        return Err(DslError::syntax(l.no, "a top-level key"));
    }
    let top = Fields::new(&root, "", &["environment", "road_network", "actors", "oracle"])?;

    let env = Fields::new(top.get("environment")?, "environment", &["weather", "time"])?;
    let environment = Environment { weather: env.token("weather")?, time: env.token("time")? };

    let road = Fields::new(top.get("road_network")?, "road_network", &["road_type", "road_marker", "traffic_signs"])?;
    let road_network = RoadNetwork {
        road_type: road.token("road_type")?,
        road_marker: road.token("road_marker")?,
        traffic_signs: road.token_list("traffic_signs")?,
    };

    let actors = Fields::new(top.get("actors")?, "actors", &["ego", "npc_actors"])?;
    let ego = parse_actor(actors.get("ego")?, "actors.ego", ActorKind::Ego)?;
    if ego.position_reference == EGO_VEHICLE {
        return Err(DslError::EgoReferencesItself);
    }
    let npc_actors = match actors.get("npc_actors")? {
        Node::Seq(items, _) => items
            .iter()
            .enumerate()
            .map(|(i, n)| parse_actor(n, &format!("actors.npc_actors[{i}]"), ActorKind::Npc))
            .collect::<Result<Vec<_>, _>>()?,
        Node::List(items, _) if items.is_empty() => Vec::new(),
        Node::Scalar(s, _) if normalize_token(s) == NONE => Vec::new(),
        other => return Err(DslError::syntax(other.line(), "`[]` or a `- ` sequence for `actors.npc_actors`")),
    };

    let oracle = Fields::new(top.get("oracle")?, "oracle", &["longitudinal", "lateral"])?;
    let oracle = Oracle { longitudinal: oracle.token_list("longitudinal")?, lateral: oracle.token_list("lateral")? };

    Ok(ScenarioRep { environment, road_network, ego, npc_actors, oracle })
}

fn inline_list(items: &[String]) -> String {
    format!("[{}]", items.join(", "))
}

fn write_actor(out: &mut String, a: &Actor, indent: usize, item: bool) {
    let pad = " ".repeat(indent);
    let first = if item { format!("{}- ", " ".repeat(indent - 2)) } else { pad.clone() };
    let _ = writeln!(out, "{first}type: {}", a.actor_type);
    let _ = writeln!(out, "{pad}behavior: {}", a.behavior);
    let _ = writeln!(out, "{pad}position:");
    let _ = writeln!(out, "{pad}  reference: {}", a.position_reference);
    let _ = writeln!(out, "{pad}  relation: {}", a.position_relation);
}

/// Canonical serialization: fixed key order, 2-space indentation.
pub fn serialize_scenario(rep: &ScenarioRep) -> String {
    let mut out = String::new();
    out.push_str("environment:\n");
    let _ = writeln!(out, "  weather: {}", rep.environment.weather);
    let _ = writeln!(out, "  time: {}", rep.environment.time);
    out.push_str("road_network:\n");
    let _ = writeln!(out, "  road_type: {}", rep.road_network.road_type);
    let _ = writeln!(out, "  road_marker: {}", rep.road_network.road_marker);
    let _ = writeln!(out, "  traffic_signs: {}", inline_list(&rep.road_network.traffic_signs));
    out.push_str("actors:\n");
    out.push_str("  ego:\n");
    write_actor(&mut out, &rep.ego, 4, false);
    if rep.npc_actors.is_empty() {
        out.push_str("  npc_actors: []\n");
    } else {
        out.push_str("  npc_actors:\n");
        for npc in &rep.npc_actors {
            write_actor(&mut out, npc, 6, true);
        }
    }
    out.push_str("oracle:\n");
    let _ = writeln!(out, "  longitudinal: {}", inline_list(&rep.oracle.longitudinal));
    let _ = writeln!(out, "  lateral: {}", inline_list(&rep.oracle.lateral));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
environment:
  weather: sunny
  time: daytime
road_network:
  road_type: none
  road_marker: none
  traffic_signs: []
actors:
  ego:
    type: car
    behavior: none
    position:
      reference: none
      relation: none
  npc_actors: []
oracle:
  longitudinal: []
  lateral: []
";

    #[test]
    fn minimal_sentinel_document() {
        let rep = parse_scenario_text(MINIMAL).unwrap();
        assert_eq!(rep.environment.weather, "sunny");
        assert!(rep.npc_actors.is_empty());
        assert!(rep.oracle.is_empty());
        assert_eq!(serialize_scenario(&rep), MINIMAL);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let doc = MINIMAL.replace("  weather: sunny", "  wether: sunny");
        match parse_scenario_text(&doc) {
            Err(DslError::UnknownKey { key, line }) => {
                assert_eq!(key, "wether");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_reports_path() {
        let doc = MINIMAL.replace("      relation: none\n", "");
        assert_eq!(parse_scenario_text(&doc), Err(DslError::MissingField("actors.ego.position.relation".into())));
    }

    #[test]
    fn comments_case_and_whitespace_are_normalized() {
        let doc = MINIMAL
            .replace("weather: sunny", "weather: Sunny   # it is nice")
            .replace("traffic_signs: []", "traffic_signs: [Stop  Sign, stop sign, none]");
        let rep = parse_scenario_text(&doc).unwrap();
        assert_eq!(rep.environment.weather, "sunny");
        assert_eq!(rep.road_network.traffic_signs, vec!["stop sign".to_string()]);
    }

    #[test]
    fn ego_cannot_reference_itself() {
        let doc = MINIMAL.replace("reference: none", "reference: ego vehicle");
        assert_eq!(parse_scenario_text(&doc), Err(DslError::EgoReferencesItself));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let doc = MINIMAL.replace("  time: daytime", "   time: daytime");
        assert!(matches!(parse_scenario_text(&doc), Err(DslError::Syntax { line: 3, .. })));
        let doc = MINIMAL.replace("traffic_signs: []", "traffic_signs: [stop sign");
        assert!(matches!(parse_scenario_text(&doc), Err(DslError::Syntax { line: 7, .. })));
        let doc = MINIMAL.replace("  time: daytime", "\ttime: daytime");
        assert!(matches!(parse_scenario_text(&doc), Err(DslError::Syntax { line: 3, .. })));
    }

    #[test]
    fn npc_sequence_preserves_order() {
        let doc = MINIMAL.replace(
            "  npc_actors: []\n",
            "  npc_actors:\n    - type: truck\n      behavior: static\n      position:\n        reference: ego vehicle\n        relation: front\n    - type: car\n      behavior: go forward\n      position:\n        reference: intersection\n        relation: opposite\n",
        );
        let rep = parse_scenario_text(&doc).unwrap();
        assert_eq!(rep.npc_actors.len(), 2);
        assert_eq!(rep.npc_actors[0].actor_type, "truck");
        assert_eq!(rep.npc_actors[1].position_relation, "opposite");
        assert_eq!(serialize_scenario(&rep), doc);
    }
}
