use std::collections::BTreeMap;
use std::path::Path;

use super::{Subcomponent, EGO_VEHICLE};

const DEFAULT_CATALOG: &str = include_str!("../../data/catalog.txt");

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("reading catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Lowercases, replaces underscores, strips punctuation other than hyphens
/// and collapses whitespace.
pub fn normalize_token(raw: &str) -> String {
    let cleaned: String = raw
        .chars()
        .map(|c| if c == '_' { ' ' } else { c })
        .filter(|c| c.is_alphanumeric() || c.is_whitespace() || *c == '-')
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Per-subcomponent element lists plus the alias table.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ElementCatalog {
    sections: BTreeMap<Subcomponent, Vec<String>>,
    aliases: BTreeMap<String, String>,
}

impl ElementCatalog {
    /// The catalog shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_CATALOG).expect("bundled catalog is valid")
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| CatalogError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut cat = ElementCatalog::default();
        for s in Subcomponent::ALL {
            cat.sections.insert(s, Vec::new());
        }
        let mut current: Option<Subcomponent> = None;
        let mut in_aliases = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| CatalogError::Parse { line: line_no, message };
            if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                if header.trim() == "aliases" {
                    in_aliases = true;
                    current = None;
                } else {
                    in_aliases = false;
                    current = Some(header.parse().map_err(|e| err(format!("{e}")))?);
                }
                continue;
            }
            if let Some((alias, canonical)) = line.split_once("->") {
                let alias = normalize_token(alias);
                let canonical = normalize_token(canonical);
                if alias.is_empty() || canonical.is_empty() {
                    return Err(err("empty alias or canonical token".into()));
                }
                cat.aliases.insert(alias, canonical);
                continue;
            }
            if in_aliases {
                return Err(err(format!("expected `alias -> canonical`, found `{line}`")));
            }
            let Some(section) = current else {
                return Err(err(format!("token `{line}` outside of a section")));
            };
            if normalize_token(line) != line {
                return Err(err(format!("token `{line}` is not in normalized lowercase form")));
            }
            let list = cat.sections.get_mut(&section).expect("all sections present");
            if list.iter().any(|t| t == line) {
                return Err(err(format!("duplicate token `{line}` in [{section}]")));
            }
            list.push(line.to_string());
        }
        Ok(cat)
    }

    pub fn tokens(&self, sub: Subcomponent) -> &[String] {
        self.sections.get(&sub).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Tokens a slot of this subcomponent may legitimately hold. Position
    /// references may also name road types, road markers and traffic signs.
    pub fn candidates(&self, sub: Subcomponent) -> Vec<String> {
        if sub != Subcomponent::PositionReference {
            return self.tokens(sub).to_vec();
        }
        let mut out: Vec<String> = Vec::new();
        let sources =
            [Subcomponent::PositionReference, Subcomponent::RoadType, Subcomponent::RoadMarker, Subcomponent::TrafficSign];
        for t in sources.iter().flat_map(|s| self.tokens(*s)) {
            if !out.contains(t) {
                out.push(t.clone());
            }
        }
        if !out.iter().any(|t| t == EGO_VEHICLE) {
            out.insert(0, EGO_VEHICLE.to_string());
        }
        out
    }

    pub fn contains(&self, sub: Subcomponent, token: &str) -> bool {
        let token = self.canonical(token);
        self.candidates(sub).contains(&token)
    }

    /// Folds an already-normalized token through the alias table.
    pub fn canonical(&self, token: &str) -> String {
        self.aliases.get(token).cloned().unwrap_or_else(|| token.to_string())
    }

    /// Full normalization: [`normalize_token`] then alias folding.
    pub fn normalize(&self, raw: &str) -> String {
        self.canonical(&normalize_token(raw))
    }

    pub fn aliases(&self) -> &BTreeMap<String, String> {
        &self.aliases
    }
}
