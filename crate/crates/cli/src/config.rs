use std::path::{Path, PathBuf};

use bbhazard::basis::TermSpec;
use bbhazard::data::CsvSchema;
use bbhazard::sim::SimConfig;
use bbhazard::EngineConfig;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Everything a run reads from the config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Output directory (simulate, fit) or file (predict).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub sim: SimConfig,
    pub engine: EngineConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
    /// Model terms; when empty, a baseline plus one term per covariate.
    pub terms: Vec<TermSpec>,
    pub predict: PredictConfig,
}

/// Person-level input file and its column roles.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default = "default_id")]
    pub id: String,
    #[serde(default = "default_time")]
    pub time: String,
    #[serde(default = "default_event")]
    pub event: String,
    /// Covariate columns; every other column when empty.
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Number of intervals `k`; defaults to the largest observed time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u32>,
    /// Censor records observed beyond `horizon` at `horizon` instead of
    /// rejecting them.
    #[serde(default)]
    pub truncate: bool,
}

fn default_id() -> String {
    "id".into()
}
fn default_time() -> String {
    "time".into()
}
fn default_event() -> String {
    "event".into()
}

impl DataConfig {
    pub fn at(path: PathBuf) -> Self {
        Self {
            path,
            id: default_id(),
            time: default_time(),
            event: default_event(),
            covariates: Vec::new(),
            categorical: Vec::new(),
            horizon: None,
            truncate: false,
        }
    }

    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            id: self.id.clone(),
            time: self.time.clone(),
            event: self.event.clone(),
            covariates: self.covariates.clone(),
            categorical: self.categorical.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Mode {
    Hazard,
    #[default]
    Survival,
    MarginalSurvival,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    pub mode: Mode,
    /// CSV of covariate values, one query per row (hazard, survival).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query: Option<PathBuf>,
    /// Covariate varied by `marginal_survival`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vary: Option<String>,
    /// Explicit grid of a continuous `vary`.
    pub grid: Vec<f64>,
    /// Levels of a categorical `vary`; all levels when empty.
    pub levels: Vec<String>,
    /// Grid size over the training range when `grid` is empty.
    pub grid_points: usize,
    /// Intervals to report; `1..=k` when empty.
    pub times: Vec<u32>,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            model: None,
            mode: Mode::default(),
            query: None,
            vary: None,
            grid: Vec::new(),
            levels: Vec::new(),
            grid_points: 50,
            times: Vec::new(),
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table, Failure> {
    text.parse::<toml::Table>().map_err(|e| {
        let line = e.span().map(|s| text[..s.start].lines().count().max(1));
        let at = line.map(|l| format!(" (line {l})")).unwrap_or_default();
        Failure::config(format!("{origin}{at}: {}", one_line(e.message())))
    })
}

/// Parse the value of a `--set key=value` override: any TOML value, or a
/// bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Set the dotted `key` in `table`, creating intermediate tables.
pub fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), Failure> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.trim().is_empty()) {
        return Err(Failure::config(format!("malformed key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.trim().to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Failure::config(format!("`{key}`: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].trim().to_string(), value);
    Ok(())
}

/// Read the config file (if any), apply `key=value` overrides in order and
/// deserialize. Errors name the offending field.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, Failure> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::config(format!("cannot read config {}: {e}", p.display())))?;
            parse_table(&text, &p.display().to_string())?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Failure::config(format!("override `{o}` is not of the form key=value")))?;
        set_key(&mut table, k.trim(), parse_value(v.trim()))?;
    }
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let field = e.path().to_string();
        Failure::config(format!("{field}: {}", one_line(&e.inner().to_string())))
    })
}
