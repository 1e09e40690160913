use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Covariate, CovariateKind, CovariateSchema, IndividualRecord};
use crate::error::{Error, Result};

/// Column roles of a person-level CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    #[serde(default = "default_id")]
    pub id: String,
    #[serde(default = "default_time")]
    pub time: String,
    #[serde(default = "default_event")]
    pub event: String,
    pub covariates: Vec<String>,
    /// Subset of `covariates` read as categorical.
    #[serde(default)]
    pub categorical: Vec<String>,
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

impl CsvSchema {
    pub fn new<I, N>(covariates: I) -> Self
    where
        I: IntoIterator<Item = N>,
        N: Into<String>,
    {
        Self {
            id: default_id(),
            time: default_time(),
            event: default_event(),
            covariates: covariates.into_iter().map(Into::into).collect(),
            categorical: Vec::new(),
        }
    }
}

const MISSING: &[&str] = &["", "NA", "NaN", "nan", "null", "."];

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<(CovariateSchema, Vec<IndividualRecord>)> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

/// Parse person-level records. Row numbers in errors are 1-based data rows
/// (the header is not counted).
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<(CovariateSchema, Vec<IndividualRecord>)> {
    for c in &schema.categorical {
        if !schema.covariates.contains(c) {
            return Err(Error::Config(format!(
                "categorical column `{c}` is not listed as a covariate"
            )));
        }
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = col(&schema.id)?;
    let time_col = col(&schema.time)?;
    let event_col = col(&schema.event)?;
    let cov_cols = schema
        .covariates
        .iter()
        .map(|c| col(c))
        .collect::<Result<Vec<_>>>()?;
    let is_cat: Vec<bool> = schema
        .covariates
        .iter()
        .map(|c| schema.categorical.contains(c))
        .collect();

    let cell_err = |row: usize, column: &str, message: String| Error::Cell {
        row,
        column: column.to_string(),
        message,
    };

    // Raw pass; categorical levels are resolved once all values are seen.
    let mut raw: Vec<(String, u32, u8, Vec<RawValue>)> = Vec::new();
    let mut level_sets: Vec<BTreeSet<String>> = vec![BTreeSet::new(); cov_cols.len()];
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec?;
        let get = |c: usize, name: &str| -> Result<&str> {
            let v = rec.get(c).map(str::trim).unwrap_or("");
            if MISSING.contains(&v) {
                Err(cell_err(row, name, "missing value".into()))
            } else {
                Ok(v)
            }
        };
        let id = get(id_col, &schema.id)?.to_string();
        let time_s = get(time_col, &schema.time)?;
        let time: u32 = time_s
            .parse()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| cell_err(row, &schema.time, format!("`{time_s}` is not a positive integer")))?;
        let event_s = get(event_col, &schema.event)?;
        let event = match event_s {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(cell_err(row, &schema.event, format!("`{other}` is not 0 or 1")));
            }
        };
        let mut values = Vec::with_capacity(cov_cols.len());
        for (j, (&c, name)) in cov_cols.iter().zip(&schema.covariates).enumerate() {
            let v = get(c, name)?;
            if is_cat[j] {
                level_sets[j].insert(v.to_string());
                values.push(RawValue::Level(v.to_string()));
            } else {
                let x: f64 = v
                    .parse()
                    .ok()
                    .filter(|x: &f64| x.is_finite())
                    .ok_or_else(|| cell_err(row, name, format!("`{v}` is not a finite number")))?;
                values.push(RawValue::Num(x));
            }
        }
        raw.push((id, time, event, values));
    }

    let levels: Vec<Vec<String>> = level_sets.into_iter().map(|s| s.into_iter().collect()).collect();
    let kinds = is_cat
        .iter()
        .zip(&levels)
        .map(|(&cat, lv)| {
            if cat {
                CovariateKind::Categorical { levels: lv.clone() }
            } else {
                CovariateKind::Continuous
            }
        })
        .collect();
    let cov_schema = CovariateSchema {
        names: schema.covariates.clone(),
        kinds,
    };
    let records = raw
        .into_iter()
        .map(|(id, time, event, values)| {
            let covariates = values
                .into_iter()
                .enumerate()
                .map(|(j, v)| match v {
                    RawValue::Num(x) => Covariate::Num(x),
                    RawValue::Level(s) => {
                        Covariate::Level(levels[j].binary_search(&s).expect("level collected") as u32)
                    }
                })
                .collect();
            IndividualRecord {
                id,
                time,
                event,
                covariates,
            }
        })
        .collect();
    Ok((cov_schema, records))
}

enum RawValue {
    Num(f64),
    Level(String),
}

/// Write person-level records with columns `id,time,event,<covariates>`.
/// Numbers use the shortest representation that parses back exactly.
pub fn write_csv<W: Write>(out: W, schema: &CovariateSchema, records: &[IndividualRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![default_id(), default_time(), default_event()];
    header.extend(schema.names.iter().cloned());
    w.write_record(&header)?;
    for rec in records {
        let mut row = vec![rec.id.clone(), rec.time.to_string(), rec.event.to_string()];
        for (v, kind) in rec.covariates.iter().zip(&schema.kinds) {
            row.push(match (v, kind) {
                (Covariate::Num(x), _) => x.to_string(),
                (Covariate::Level(l), CovariateKind::Categorical { levels }) => levels
                    .get(*l as usize)
                    .cloned()
                    .ok_or_else(|| Error::Validation(format!("record {}: level {l} out of range", rec.id)))?,
                (Covariate::Level(l), CovariateKind::Continuous) => l.to_string(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
