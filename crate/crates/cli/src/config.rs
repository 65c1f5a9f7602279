//! The declarative run configuration: one TOML file with a section per
//! component, every field optional.

use std::fs;
use std::path::Path;

use pinet_core::synth::{GenConfig, NoiseConfig};
use pinet_core::{ModelConfig, OrderMode, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub eps: f64,
    pub samples: usize,
    pub seeds: Vec<u64>,
    pub threshold: f64,
    /// Persons in the end-to-end scene.
    pub persons: usize,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            samples: 200,
            seeds: vec![1, 2, 3],
            threshold: 1e-5,
            persons: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub orders: Vec<OrderMode>,
    pub attention: Vec<bool>,
    pub bidirectional: Vec<bool>,
    pub gru_layers: Vec<usize>,
    /// Training seeds shared by every cell; cell metrics are the median.
    pub seeds: Vec<u64>,
    /// Evaluate on at most this many test scenes (0: all).
    pub max_test_scenes: usize,
}

impl Default for AblateSection {
    fn default() -> Self {
        Self {
            orders: vec![OrderMode::Intuitive, OrderMode::Reverse, OrderMode::Random],
            attention: vec![true, false],
            bidirectional: vec![true, false],
            gru_layers: vec![2, 3, 4],
            seeds: vec![0],
            max_test_scenes: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub gen: GenConfig,
    pub noise: NoiseConfig,
    pub gradcheck: GradcheckSection,
    pub ablate: AblateSection,
}

impl RunConfig {
    /// Reads `path` (defaults when absent) and applies `section.field=value`
    /// overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        let name = path.unwrap_or(Path::new("<defaults>"));
        let cfg = Self::parse(&text, name)?;
        if overrides.is_empty() {
            return Ok(cfg);
        }
        let mut table: toml::Table = toml::from_str(&text).expect("parsed above");
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Table::try_into(table).map_err(|e| CliError::Config(format!("--set: {}", e.message())))
    }

    pub fn parse(text: &str, path: &Path) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| {
            let (line, col) = e.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
            CliError::Config(format!("{}:{line}:{col}: {}", path.display(), e.message()))
        })
    }

    pub fn apply_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.gen.seed = seed;
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.gen.validate()?;
        self.noise.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes the resolved configuration to `path`.
    pub fn archive(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_toml()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> CliResult<()> {
    let bad = |msg: &str| CliError::Config(format!("--set {spec:?}: {msg}"));
    let (key, raw) = spec.split_once('=').ok_or_else(|| bad("expected KEY=VALUE"))?;
    let (section, field) = key.trim().split_once('.').ok_or_else(|| bad("expected section.field"))?;
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let sub = entry.as_table_mut().ok_or_else(|| bad("section is not a table"))?;
    sub.insert(field.to_string(), value);
    Ok(())
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, col)
}
