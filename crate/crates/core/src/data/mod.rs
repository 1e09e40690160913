//! Person-level survival records and their person-period expansion.

mod batch;
mod csv;

use std::collections::HashSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::batch::{sample_batch, Batch, BatchSampler};
pub use self::csv::{load_csv, read_csv, write_csv, CsvSchema};

/// One covariate value. Categorical values index into the level set of the
/// corresponding [`CovariateKind::Categorical`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Covariate {
    Num(f64),
    Level(u32),
}

impl Covariate {
    pub fn as_num(self) -> Option<f64> {
        match self {
            Covariate::Num(x) => Some(x),
            Covariate::Level(_) => None,
        }
    }

    pub fn as_level(self) -> Option<u32> {
        match self {
            Covariate::Level(l) => Some(l),
            Covariate::Num(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum CovariateKind {
    Continuous,
    Categorical { levels: Vec<String> },
}

/// Names and kinds of the covariate columns, shared by every record.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CovariateSchema {
    pub names: Vec<String>,
    pub kinds: Vec<CovariateKind>,
}

impl CovariateSchema {
    pub fn continuous<I, N>(names: I) -> Self
    where
        I: IntoIterator<Item = N>,
        N: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let kinds = vec![CovariateKind::Continuous; names.len()];
        Self { names, kinds }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::Config(format!("unknown covariate `{name}`")))
    }
}

/// One subject: observed interval, event indicator and time-invariant
/// covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualRecord {
    pub id: String,
    /// Observed interval `min(T, C, k)`, 1-based.
    pub time: u32,
    /// 1 if the event was observed in interval `time`, 0 if censored.
    pub event: u8,
    pub covariates: Vec<Covariate>,
}

impl IndividualRecord {
    pub fn new(id: impl Into<String>, time: u32, event: u8, covariates: Vec<Covariate>) -> Self {
        Self {
            id: id.into(),
            time,
            event,
            covariates,
        }
    }
}

/// Censor every record observed beyond the horizon at the horizon.
pub fn truncate_to_horizon(records: &mut [IndividualRecord], horizon: u32) {
    for r in records.iter_mut() {
        if r.time > horizon {
            r.time = horizon;
            r.event = 0;
        }
    }
}

/// One person-period row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersonPeriodRow<'a> {
    pub id: &'a str,
    pub t: u32,
    pub y: u8,
    pub covariates: &'a [Covariate],
}

/// Person-period expansion of a set of records.
///
/// Row storage is columnar; covariates are kept once per individual since
/// they are constant within an individual's block.
#[derive(Debug, Clone)]
pub struct AugmentedDataset {
    schema: CovariateSchema,
    horizon: u32,
    ids: Vec<String>,
    covariates: Vec<Covariate>,
    /// `offsets[i]..offsets[i + 1]` is the row block of individual `i`.
    offsets: Vec<usize>,
    row_individual: Vec<u32>,
    row_time: Vec<u32>,
    y: Vec<u8>,
}

/// Expand person-level records into one binary row per individual and
/// at-risk interval.
pub fn augment(
    records: &[IndividualRecord],
    schema: &CovariateSchema,
    horizon: u32,
) -> Result<AugmentedDataset> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    let p = schema.len();
    let total: usize = records.iter().map(|r| r.time as usize).sum();
    let mut seen = HashSet::with_capacity(records.len());
    let mut out = AugmentedDataset {
        schema: schema.clone(),
        horizon,
        ids: Vec::with_capacity(records.len()),
        covariates: Vec::with_capacity(records.len() * p),
        offsets: Vec::with_capacity(records.len() + 1),
        row_individual: Vec::with_capacity(total),
        row_time: Vec::with_capacity(total),
        y: Vec::with_capacity(total),
    };
    out.offsets.push(0);
    for (i, rec) in records.iter().enumerate() {
        validate_record(rec, schema)?;
        if rec.time > horizon {
            return Err(Error::Horizon {
                id: rec.id.clone(),
                time: rec.time,
                horizon,
            });
        }
        if !seen.insert(rec.id.as_str()) {
            return Err(Error::Validation(format!(
                "duplicate id `{}`; time-varying covariates are not supported",
                rec.id
            )));
        }
        let ind = u32::try_from(i).map_err(|_| Error::Validation("too many individuals".into()))?;
        for t in 1..=rec.time {
            out.row_individual.push(ind);
            out.row_time.push(t);
            out.y.push(u8::from(rec.event == 1 && t == rec.time));
        }
        out.offsets.push(out.y.len());
        out.ids.push(rec.id.clone());
        out.covariates.extend_from_slice(&rec.covariates);
    }
    Ok(out)
}

fn validate_record(rec: &IndividualRecord, schema: &CovariateSchema) -> Result<()> {
    if rec.time < 1 {
        return Err(Error::Validation(format!(
            "record {}: observed time must be >= 1",
            rec.id
        )));
    }
    if rec.event > 1 {
        return Err(Error::Validation(format!(
            "record {}: event indicator must be 0 or 1, got {}",
            rec.id, rec.event
        )));
    }
    if rec.covariates.len() != schema.len() {
        return Err(Error::Validation(format!(
            "record {}: expected {} covariates, got {}",
            rec.id,
            schema.len(),
            rec.covariates.len()
        )));
    }
    for ((value, kind), name) in rec.covariates.iter().zip(&schema.kinds).zip(&schema.names) {
        let ok = match (value, kind) {
            (Covariate::Num(x), CovariateKind::Continuous) => x.is_finite(),
            (Covariate::Level(l), CovariateKind::Categorical { levels }) => (*l as usize) < levels.len(),
            _ => false,
        };
        if !ok {
            return Err(Error::Validation(format!(
                "record {}: invalid value {value:?} for covariate `{name}`",
                rec.id
            )));
        }
    }
    Ok(())
}

impl AugmentedDataset {
    pub fn schema(&self) -> &CovariateSchema {
        &self.schema
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn n_individuals(&self) -> usize {
        self.ids.len()
    }

    /// Total person-period rows `N`.
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn block(&self, individual: usize) -> Range<usize> {
        self.offsets[individual]..self.offsets[individual + 1]
    }

    pub fn block_len(&self, individual: usize) -> usize {
        self.offsets[individual + 1] - self.offsets[individual]
    }

    pub fn max_block_len(&self) -> usize {
        (0..self.n_individuals())
            .map(|i| self.block_len(i))
            .max()
            .unwrap_or(0)
    }

    /// Largest observed interval, i.e. the number of distinct time keys.
    pub fn max_time(&self) -> u32 {
        self.max_block_len() as u32
    }

    pub fn id(&self, individual: usize) -> &str {
        &self.ids[individual]
    }

    pub fn covariates_of(&self, individual: usize) -> &[Covariate] {
        let p = self.schema.len();
        &self.covariates[individual * p..(individual + 1) * p]
    }

    pub fn covariate(&self, individual: usize, column: usize) -> Covariate {
        self.covariates[individual * self.schema.len() + column]
    }

    pub fn row_individual(&self, row: usize) -> usize {
        self.row_individual[row] as usize
    }

    pub fn row_time(&self, row: usize) -> u32 {
        self.row_time[row]
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn row(&self, row: usize) -> PersonPeriodRow<'_> {
        let i = self.row_individual(row);
        PersonPeriodRow {
            id: &self.ids[i],
            t: self.row_time[row],
            y: self.y[row],
            covariates: self.covariates_of(i),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = PersonPeriodRow<'_>> + '_ {
        (0..self.n_rows()).map(move |r| self.row(r))
    }

    pub fn event_count(&self) -> usize {
        self.y.iter().filter(|&&y| y == 1).count()
    }

    /// Per-time row counts, index `t - 1`.
    pub fn rows_per_time(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.max_time() as usize];
        for &t in &self.row_time {
            counts[t as usize - 1] += 1;
        }
        counts
    }

    /// Recover the person-level records (max `t` and event flag per block).
    pub fn collapse(&self) -> Vec<IndividualRecord> {
        (0..self.n_individuals())
            .map(|i| {
                let block = self.block(i);
                let event = u8::from(self.y[block.clone()].contains(&1));
                let time = block.map(|r| self.row_time[r]).max().unwrap_or(0);
                IndividualRecord {
                    id: self.ids[i].clone(),
                    time,
                    event,
                    covariates: self.covariates_of(i).to_vec(),
                }
            })
            .collect()
    }
}
