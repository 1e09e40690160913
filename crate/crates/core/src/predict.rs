//! Fitted model artifact and hazard / survival prediction.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::basis::{Design, TermBasis};
use crate::data::{AugmentedDataset, Covariate, CovariateKind, CovariateSchema};
use crate::engine::{EngineConfig, FitReport};
use crate::error::{Error, Result};
use crate::model::{inverse_link, ModelState};
use crate::scalar::Scalar;

pub const MODEL_VERSION: u32 = 1;

/// Everything needed to evaluate a fitted model at new covariate values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct FittedModel<S> {
    pub version: u32,
    pub horizon: u32,
    pub schema: CovariateSchema,
    /// Person-level mean (continuous) or mode (categorical) of each column.
    pub reference: Vec<Covariate>,
    /// Person-level `(min, max)` of each continuous column.
    pub ranges: Vec<Option<(f64, f64)>>,
    pub terms: Vec<TermBasis<S>>,
    pub selected: Vec<bool>,
    pub beta: Vec<Array1<S>>,
    pub tau: Vec<Vec<S>>,
    pub seed: u64,
    pub config: EngineConfig,
}

/// One row of a marginal survival table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalPoint<S> {
    pub value: f64,
    pub t: u32,
    pub survival: S,
}

impl<S: Scalar> FittedModel<S> {
    pub fn new(design: &Design<S>, data: &AugmentedDataset, state: &ModelState<S>, report: &FitReport<S>) -> Self {
        let schema = data.schema().clone();
        let n = data.n_individuals();
        let mut reference = Vec::with_capacity(schema.len());
        let mut ranges = Vec::with_capacity(schema.len());
        for (c, kind) in schema.kinds.iter().enumerate() {
            match kind {
                CovariateKind::Continuous => {
                    let vals: Vec<f64> = (0..n).filter_map(|i| data.covariate(i, c).as_num()).collect();
                    let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
                    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    reference.push(Covariate::Num(mean));
                    ranges.push(Some((lo, hi)));
                }
                CovariateKind::Categorical { levels } => {
                    let mut counts = vec![0usize; levels.len()];
                    for i in 0..n {
                        if let Some(l) = data.covariate(i, c).as_level() {
                            counts[l as usize] += 1;
                        }
                    }
                    // first maximum: the smallest level wins ties
                    let mode = counts
                        .iter()
                        .enumerate()
                        .fold((0, 0), |best, (l, &k)| if k > best.1 { (l, k) } else { best })
                        .0;
                    reference.push(Covariate::Level(mode as u32));
                    ranges.push(None);
                }
            }
        }
        Self {
            version: MODEL_VERSION,
            horizon: data.horizon(),
            schema,
            reference,
            ranges,
            terms: design.blocks.iter().map(|b| b.basis.clone()).collect(),
            selected: report.selected.clone(),
            beta: state.beta.clone(),
            tau: state.tau.clone(),
            seed: report.seed,
            config: report.config.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("version").and_then(|v| v.as_u64());
        match found {
            Some(v) if v == u64::from(MODEL_VERSION) => {}
            other => {
                return Err(Error::Version {
                    found: other.map_or_else(|| "missing".to_string(), |v| v.to_string()),
                    expected: MODEL_VERSION,
                })
            }
        }
        let model: Self = serde_json::from_value(value)?;
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<()> {
        let n = self.terms.len();
        if self.beta.len() != n || self.tau.len() != n || self.selected.len() != n {
            return Err(Error::Validation("model terms, coefficients and selection differ in length".into()));
        }
        if self.reference.len() != self.schema.len() || self.ranges.len() != self.schema.len() {
            return Err(Error::Validation("model reference values do not match its schema".into()));
        }
        for (term, beta) in self.terms.iter().zip(&self.beta) {
            if term.dim() != beta.len() {
                return Err(Error::Validation(format!(
                    "term `{}` expects {} coefficients, model has {}",
                    term.spec.name,
                    term.dim(),
                    beta.len()
                )));
            }
        }
        Ok(())
    }

    /// Reference covariates with the named entries overridden.
    pub fn covariates(&self, values: &HashMap<String, Covariate>) -> Result<Vec<Covariate>> {
        let mut covs = self.reference.clone();
        for (name, &v) in values {
            let c = self.schema.require(name)?;
            covs[c] = self.check_value(c, v)?;
        }
        Ok(covs)
    }

    /// Parse a textual value of column `name` (a number or a level label).
    pub fn parse_value(&self, name: &str, text: &str) -> Result<Covariate> {
        let c = self.schema.require(name)?;
        match &self.schema.kinds[c] {
            CovariateKind::Continuous => text
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Covariate::Num)
                .ok_or_else(|| Error::Validation(format!("covariate `{name}`: `{text}` is not a finite number"))),
            CovariateKind::Categorical { levels } => levels
                .iter()
                .position(|l| l == text.trim())
                .map(|l| Covariate::Level(l as u32))
                .ok_or_else(|| Error::Validation(format!("covariate `{name}`: unknown level `{text}`"))),
        }
    }

    fn check_value(&self, c: usize, v: Covariate) -> Result<Covariate> {
        let ok = match (&self.schema.kinds[c], v) {
            (CovariateKind::Continuous, Covariate::Num(x)) => x.is_finite(),
            (CovariateKind::Categorical { levels }, Covariate::Level(l)) => (l as usize) < levels.len(),
            _ => false,
        };
        if ok {
            Ok(v)
        } else {
            Err(Error::Validation(format!(
                "invalid value {v:?} for covariate `{}`",
                self.schema.names[c]
            )))
        }
    }

    fn check_t(&self, t: u32) -> Result<()> {
        if t == 0 || t > self.horizon {
            return Err(Error::Domain(format!("t = {t} outside 1..={}", self.horizon)));
        }
        Ok(())
    }

    /// Predictor at interval `t` (assumed valid).
    fn eta_unchecked(&self, t: u32, covs: &[Covariate]) -> S {
        self.terms
            .iter()
            .zip(&self.beta)
            .map(|(term, beta)| term.eval(t, covs).dot(beta))
            .sum()
    }

    pub fn eta(&self, t: u32, covs: &[Covariate]) -> Result<S> {
        self.check_t(t)?;
        Ok(self.eta_unchecked(t, covs))
    }

    pub fn hazard_at(&self, t: u32, covs: &[Covariate]) -> Result<S> {
        Ok(inverse_link(self.eta(t, covs)?))
    }

    /// `λ(t | x)` for `t = 1..=k`.
    pub fn hazard(&self, covs: &[Covariate]) -> Vec<S> {
        (1..=self.horizon)
            .map(|t| inverse_link(self.eta_unchecked(t, covs)))
            .collect()
    }

    /// `S(t | x)` for `t = 0..=k`; `S(0) = 1`.
    pub fn survival_curve(&self, covs: &[Covariate]) -> Vec<S> {
        let mut out = Vec::with_capacity(self.horizon as usize + 1);
        let mut s = S::one();
        out.push(s);
        for h in self.hazard(covs) {
            s *= S::one() - h;
            out.push(s);
        }
        out
    }

    /// `S(t | x)` at the requested intervals (`0..=k`).
    pub fn survival(&self, covs: &[Covariate], times: &[u32]) -> Result<Vec<S>> {
        if let Some(&t) = times.iter().find(|&&t| t > self.horizon) {
            return Err(Error::Domain(format!("t = {t} outside 0..={}", self.horizon)));
        }
        let curve = self.survival_curve(covs);
        Ok(times.iter().map(|&t| curve[t as usize]).collect())
    }

    /// Equidistant grid over the training range of a continuous covariate.
    pub fn grid(&self, name: &str, points: usize) -> Result<Vec<f64>> {
        let c = self.schema.require(name)?;
        let (lo, hi) = self.ranges[c]
            .ok_or_else(|| Error::Validation(format!("covariate `{name}` is categorical; give its levels")))?;
        Ok(match points {
            0 => Vec::new(),
            1 => vec![0.5 * (lo + hi)],
            _ => (0..points)
                .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
                .collect(),
        })
    }

    /// Survival as one covariate varies over `grid` with every other
    /// covariate held at its person-level mean or mode. Categorical grid
    /// values are level indices.
    pub fn marginal_survival(&self, name: &str, grid: &[f64], times: &[u32]) -> Result<Vec<MarginalPoint<S>>> {
        let c = self.schema.require(name)?;
        let mut out = Vec::with_capacity(grid.len() * times.len());
        for &value in grid {
            let v = match self.schema.kinds[c] {
                CovariateKind::Continuous => Covariate::Num(value),
                CovariateKind::Categorical { .. } => {
                    if value < 0.0 || value.fract() != 0.0 {
                        return Err(Error::Validation(format!("`{value}` is not a level index of `{name}`")));
                    }
                    Covariate::Level(value as u32)
                }
            };
            let mut covs = self.reference.clone();
            covs[c] = self.check_value(c, v)?;
            for (&t, s) in times.iter().zip(self.survival(&covs, times)?) {
                out.push(MarginalPoint { value, t, survival: s });
            }
        }
        Ok(out)
    }
}
