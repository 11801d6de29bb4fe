use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use target_core::monitor::Thresholds;
use target_core::rule_parser::HttpConfig;
use target_core::scenario::GeneratorConfig;

pub const CONFIG_ENV: &str = "TARGET_CONFIG";

/// Settings shared by all subcommands, read from one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub catalog: Option<PathBuf>,
    pub maps: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub time_limit: f64,
    pub backend: HttpConfig,
    pub generator: GeneratorConfig,
    pub thresholds: Thresholds,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            catalog: None,
            maps: None,
            out_dir: None,
            seed: 0,
            time_limit: 60.0,
            backend: HttpConfig::default(),
            generator: GeneratorConfig::default(),
            thresholds: Thresholds::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.catalog, &mut cfg.maps, &mut cfg.out_dir] {
            if let Some(rel) = p.as_mut() {
                if rel.is_relative() {
                    *rel = base.join(&*rel);
                }
            }
        }
        for p in [&cfg.catalog, &cfg.maps].into_iter().flatten() {
            if !p.exists() {
                bail!("config {}: path {} does not exist", path.display(), p.display());
            }
        }
        cfg.generator.seed = cfg.seed;
        cfg.generator.time_limit = cfg.time_limit;
        Ok(cfg)
    }
}
