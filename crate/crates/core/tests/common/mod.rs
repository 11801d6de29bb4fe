#![allow(dead_code)]

use std::path::{Path, PathBuf};

use target_core::dsl::{parse_scenario_text, ScenarioRep};
use target_core::map::{build_routes, load_map, RouteGraph};

pub const MAPS: [&str; 3] = ["cross4", "straight", "tjunction"];

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn graph(name: &str) -> RouteGraph {
    build_routes(&load_map(&root().join("fixtures/maps").join(format!("{name}.map.json"))).unwrap())
}

pub fn parse(text: &str) -> ScenarioRep {
    parse_scenario_text(text).unwrap()
}

/// Parses a document given relative to the workspace root.
pub fn doc(rel: &str) -> ScenarioRep {
    parse(&std::fs::read_to_string(root().join(rel)).unwrap())
}

fn dsl_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "dsl"))
        .collect();
    v.sort();
    v
}

/// Every fixture document: gold parses, monitor scenarios and hand-authored reps.
pub fn fixture_docs() -> Vec<(String, ScenarioRep)> {
    ["fixtures/gold", "fixtures/monitor", "fixtures/reps"]
        .iter()
        .flat_map(|d| dsl_files(&root().join(d)))
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            (name, parse(&std::fs::read_to_string(&p).unwrap()))
        })
        .collect()
}

pub mod kappa_oracle;
pub mod random_rep;
pub mod route_oracle;
