//! Design matrices and quadratic penalties for the additive model terms.
//!
//! Covariates are time-invariant, so the design of a covariate term is stored
//! once per individual and the baseline design once per time interval. A
//! person-period row looks its design row up by key.

pub mod bspline;
mod center;
pub mod penalty;
pub mod tensor;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::{AugmentedDataset, Covariate, CovariateKind, CovariateSchema};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use self::bspline::{bspline_basis, BSplineBasis};
pub use self::center::{center_block, Centering};
pub use self::penalty::{difference_matrix, difference_penalty};
pub use self::tensor::{row_kronecker, tensor_penalties, tensor_product, TensorParts};

pub const DEFAULT_BASIS_DIM: usize = 10;
pub const DEFAULT_TENSOR_MARGIN_DIM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    /// Smooth function of the interval index; carries the model intercept.
    BaselineSmooth,
    UnivariateSmooth,
    BivariateSmooth,
    Linear,
    Categorical,
    /// Constant column without penalty.
    Intercept,
}

impl TermKind {
    pub fn is_smooth(self) -> bool {
        matches!(
            self,
            TermKind::BaselineSmooth | TermKind::UnivariateSmooth | TermKind::BivariateSmooth
        )
    }

    fn n_columns(self) -> usize {
        match self {
            TermKind::BaselineSmooth | TermKind::Intercept => 0,
            TermKind::BivariateSmooth => 2,
            _ => 1,
        }
    }
}

fn default_degree() -> usize {
    3
}
fn default_order() -> usize {
    2
}

/// Declaration of one additive model term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSpec {
    pub name: String,
    pub kind: TermKind,
    #[serde(default)]
    pub columns: Vec<String>,
    /// Basis functions (per margin for bivariate smooths).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_dim: Option<usize>,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_order")]
    pub penalty_order: usize,
}

impl TermSpec {
    fn with(name: impl Into<String>, kind: TermKind, columns: Vec<String>) -> Self {
        Self {
            name: name.into(),
            kind,
            columns,
            basis_dim: None,
            degree: default_degree(),
            penalty_order: default_order(),
        }
    }

    pub fn baseline(name: impl Into<String>) -> Self {
        Self::with(name, TermKind::BaselineSmooth, vec![])
    }

    pub fn smooth(name: impl Into<String>, column: impl Into<String>) -> Self {
        Self::with(name, TermKind::UnivariateSmooth, vec![column.into()])
    }

    pub fn tensor(name: impl Into<String>, x: impl Into<String>, y: impl Into<String>) -> Self {
        Self::with(name, TermKind::BivariateSmooth, vec![x.into(), y.into()])
    }

    pub fn linear(name: impl Into<String>, column: impl Into<String>) -> Self {
        Self::with(name, TermKind::Linear, vec![column.into()])
    }

    pub fn categorical(name: impl Into<String>, column: impl Into<String>) -> Self {
        Self::with(name, TermKind::Categorical, vec![column.into()])
    }

    pub fn intercept(name: impl Into<String>) -> Self {
        Self::with(name, TermKind::Intercept, vec![])
    }

    pub fn with_basis_dim(mut self, d: usize) -> Self {
        self.basis_dim = Some(d);
        self
    }

    pub fn with_degree(mut self, degree: usize) -> Self {
        self.degree = degree;
        self
    }

    pub fn with_penalty_order(mut self, q: usize) -> Self {
        self.penalty_order = q;
        self
    }

    pub fn basis_dim(&self) -> usize {
        self.basis_dim.unwrap_or(match self.kind {
            TermKind::BivariateSmooth => DEFAULT_TENSOR_MARGIN_DIM,
            _ => DEFAULT_BASIS_DIM,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.len() != self.kind.n_columns() {
            return Err(Error::Config(format!(
                "term `{}` ({:?}) needs {} input column(s), got {}",
                self.name,
                self.kind,
                self.kind.n_columns(),
                self.columns.len()
            )));
        }
        if self.kind.is_smooth() {
            let d = self.basis_dim();
            if self.penalty_order == 0 || d < self.penalty_order + self.degree {
                return Err(Error::Config(format!(
                    "term `{}`: basis dimension {d} must be at least penalty order + degree = {}",
                    self.name,
                    self.penalty_order + self.degree
                )));
            }
        }
        Ok(())
    }
}

/// How a term's rows are shared across person-period rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyKind {
    Constant,
    Time,
    Individual,
}

/// Recipe for the uncentered basis of a term, sufficient to evaluate it at
/// new covariate values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Recipe {
    Intercept,
    Time { basis: BSplineBasis },
    Spline { column: usize, basis: BSplineBasis },
    Tensor { columns: [usize; 2], x: BSplineBasis, y: BSplineBasis },
    Linear { column: usize },
    /// Treatment coding; level 0 is the reference.
    Categorical { column: usize, levels: usize },
}

impl Recipe {
    pub fn raw_dim(&self) -> usize {
        match self {
            Recipe::Intercept | Recipe::Linear { .. } => 1,
            Recipe::Time { basis } | Recipe::Spline { basis, .. } => basis.n_basis,
            Recipe::Tensor { x, y, .. } => x.n_basis * y.n_basis,
            Recipe::Categorical { levels, .. } => levels - 1,
        }
    }

    pub fn key(&self) -> KeyKind {
        match self {
            Recipe::Intercept => KeyKind::Constant,
            Recipe::Time { .. } => KeyKind::Time,
            _ => KeyKind::Individual,
        }
    }

    fn num(covs: &[Covariate], column: usize) -> f64 {
        covs[column].as_num().expect("continuous covariate")
    }

    /// Uncentered basis row at interval `t` for covariates `covs`.
    pub fn raw_row(&self, t: u32, covs: &[Covariate], out: &mut [f64]) {
        match self {
            Recipe::Intercept => out[0] = 1.0,
            Recipe::Time { basis } => basis.eval_into(f64::from(t), out),
            Recipe::Spline { column, basis } => basis.eval_into(Self::num(covs, *column), out),
            Recipe::Tensor { columns, x, y } => {
                let mut rx = vec![0.0; x.n_basis];
                let mut ry = vec![0.0; y.n_basis];
                x.eval_into(Self::num(covs, columns[0]), &mut rx);
                y.eval_into(Self::num(covs, columns[1]), &mut ry);
                for (a, &va) in rx.iter().enumerate() {
                    for (b, &vb) in ry.iter().enumerate() {
                        out[a * y.n_basis + b] = va * vb;
                    }
                }
            }
            Recipe::Linear { column } => out[0] = Self::num(covs, *column),
            Recipe::Categorical { column, .. } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                let level = covs[*column].as_level().expect("categorical covariate") as usize;
                if level > 0 {
                    out[level - 1] = 1.0;
                }
            }
        }
    }
}

/// Everything needed to evaluate a fitted term at new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TermBasis<S> {
    pub spec: TermSpec,
    pub recipe: Recipe,
    pub centering: Centering<S>,
    /// Penalty components in the (centered) coefficient space; empty for
    /// unpenalized terms.
    pub penalties: Vec<Array2<S>>,
}

impl<S: Scalar> TermBasis<S> {
    pub fn dim(&self) -> usize {
        self.centering.dim(self.recipe.raw_dim())
    }

    pub fn is_penalized(&self) -> bool {
        !self.penalties.is_empty()
    }

    pub fn eval(&self, t: u32, covs: &[Covariate]) -> Array1<S> {
        let mut raw = vec![0.0; self.recipe.raw_dim()];
        self.recipe.raw_row(t, covs, &mut raw);
        let raw = Array1::from_iter(raw.into_iter().map(S::lit));
        self.centering.apply_row(raw.view())
    }

    /// Penalty matrix `Σ_c τ_c K_c`.
    pub fn penalty(&self, tau: &[S]) -> Array2<S> {
        let d = self.dim();
        let mut p = Array2::zeros((d, d));
        for (k, &t) in self.penalties.iter().zip(tau) {
            p.scaled_add(t, k);
        }
        p
    }
}

/// Design of one term on a training dataset.
#[derive(Debug, Clone)]
pub struct DesignBlock<S> {
    pub basis: TermBasis<S>,
    pub key: KeyKind,
    /// One row per key (individual, interval, or a single constant row).
    pub matrix: Array2<S>,
    /// Number of person-period rows sharing each key.
    pub key_weights: Vec<S>,
}

impl<S: Scalar> DesignBlock<S> {
    pub fn name(&self) -> &str {
        &self.basis.spec.name
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn n_keys(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_penalties(&self) -> usize {
        self.basis.penalties.len()
    }

    #[inline]
    pub fn key_of(&self, data: &AugmentedDataset, row: usize) -> usize {
        match self.key {
            KeyKind::Constant => 0,
            KeyKind::Time => data.row_time(row) as usize - 1,
            KeyKind::Individual => data.row_individual(row),
        }
    }

    pub fn key_row(&self, key: usize) -> ArrayView1<'_, S> {
        self.matrix.row(key)
    }

    /// Materialized `X_j` on the given person-period rows.
    pub fn dense(&self, data: &AugmentedDataset, rows: &[usize]) -> Array2<S> {
        let mut out = Array2::zeros((rows.len(), self.dim()));
        for (mut o, &r) in out.rows_mut().into_iter().zip(rows) {
            o.assign(&self.matrix.row(self.key_of(data, r)));
        }
        out
    }

    /// Column sums over the person-period rows.
    pub fn column_sums(&self) -> Array1<S> {
        let mut s = Array1::zeros(self.dim());
        for (row, &w) in self.matrix.rows().into_iter().zip(&self.key_weights) {
            s.scaled_add(w, &row);
        }
        s
    }
}

/// All term designs of a model on one training dataset.
#[derive(Debug, Clone)]
pub struct Design<S> {
    pub blocks: Vec<DesignBlock<S>>,
}

impl<S: Scalar> Design<S> {
    /// Build and center every term. Covariate terms are centered to sum to
    /// zero over the person-period rows; the baseline (or intercept) term is
    /// left uncentered and carries the global level.
    pub fn build(specs: &[TermSpec], data: &AugmentedDataset) -> Result<Self> {
        let mut names = std::collections::HashSet::new();
        let mut n_level_terms = 0;
        for s in specs {
            s.validate()?;
            if !names.insert(s.name.as_str()) {
                return Err(Error::Config(format!("duplicate term name `{}`", s.name)));
            }
            if matches!(s.kind, TermKind::BaselineSmooth | TermKind::Intercept) {
                n_level_terms += 1;
            }
        }
        if n_level_terms > 1 {
            return Err(Error::Config(
                "at most one baseline or intercept term may be declared".into(),
            ));
        }
        let blocks = specs
            .iter()
            .map(|s| {
                let block = build_block(s, data)?;
                Ok(match s.kind {
                    TermKind::BaselineSmooth | TermKind::Intercept => block,
                    _ => center_block(&block),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { blocks })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name() == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.blocks.iter().map(|b| b.name().to_string()).collect()
    }
}

fn column_index(schema: &CovariateSchema, spec: &TermSpec, k: usize, categorical: bool) -> Result<usize> {
    let name = &spec.columns[k];
    let idx = schema.index_of(name).ok_or_else(|| {
        Error::Config(format!("term `{}` references unknown column `{name}`", spec.name))
    })?;
    let is_cat = matches!(schema.kinds[idx], CovariateKind::Categorical { .. });
    if is_cat != categorical {
        return Err(Error::Config(format!(
            "term `{}`: column `{name}` must be {}",
            spec.name,
            if categorical { "categorical" } else { "continuous" }
        )));
    }
    Ok(idx)
}

fn individual_values(data: &AugmentedDataset, column: usize) -> Vec<f64> {
    (0..data.n_individuals())
        .map(|i| data.covariate(i, column).as_num().expect("continuous covariate"))
        .collect()
}

/// Uncentered design block for one term.
fn build_block<S: Scalar>(spec: &TermSpec, data: &AugmentedDataset) -> Result<DesignBlock<S>> {
    let schema = data.schema();
    let d = spec.basis_dim();
    let (recipe, penalties) = match spec.kind {
        TermKind::Intercept => (Recipe::Intercept, vec![]),
        TermKind::BaselineSmooth => {
            let times: Vec<f64> = (1..=data.max_time()).map(f64::from).collect();
            let basis = BSplineBasis::from_data(&times, d, spec.degree)?;
            (Recipe::Time { basis }, vec![difference_penalty(d, spec.penalty_order)?])
        }
        TermKind::UnivariateSmooth => {
            let column = column_index(schema, spec, 0, false)?;
            let basis = BSplineBasis::from_data(&individual_values(data, column), d, spec.degree)?;
            (Recipe::Spline { column, basis }, vec![difference_penalty(d, spec.penalty_order)?])
        }
        TermKind::BivariateSmooth => {
            let cx = column_index(schema, spec, 0, false)?;
            let cy = column_index(schema, spec, 1, false)?;
            let x = BSplineBasis::from_data(&individual_values(data, cx), d, spec.degree)?;
            let y = BSplineBasis::from_data(&individual_values(data, cy), d, spec.degree)?;
            let k = difference_penalty(d, spec.penalty_order)?;
            let pens = tensor_penalties(&k, &k);
            (Recipe::Tensor { columns: [cx, cy], x, y }, pens.into())
        }
        TermKind::Linear => {
            let column = column_index(schema, spec, 0, false)?;
            (Recipe::Linear { column }, vec![])
        }
        TermKind::Categorical => {
            let column = column_index(schema, spec, 0, true)?;
            let levels = match &schema.kinds[column] {
                CovariateKind::Categorical { levels } => levels.len(),
                CovariateKind::Continuous => unreachable!(),
            };
            if levels < 2 {
                return Err(Error::Degenerate(format!(
                    "categorical term `{}` needs at least two levels",
                    spec.name
                )));
            }
            (Recipe::Categorical { column, levels }, vec![])
        }
    };
    let key = recipe.key();
    let dim = recipe.raw_dim();
    let (n_keys, weights): (usize, Vec<S>) = match key {
        KeyKind::Constant => (1, vec![S::from_usize_lossy(data.n_rows())]),
        KeyKind::Time => {
            let w = data.rows_per_time();
            (w.len(), w.into_iter().map(S::from_usize_lossy).collect())
        }
        KeyKind::Individual => (
            data.n_individuals(),
            (0..data.n_individuals())
                .map(|i| S::from_usize_lossy(data.block_len(i)))
                .collect(),
        ),
    };
    let mut matrix = Array2::zeros((n_keys, dim));
    let mut raw = vec![0.0; dim];
    for (k, mut row) in matrix.rows_mut().into_iter().enumerate() {
        match key {
            KeyKind::Constant => recipe.raw_row(1, &[], &mut raw),
            KeyKind::Time => recipe.raw_row(k as u32 + 1, &[], &mut raw),
            KeyKind::Individual => recipe.raw_row(1, data.covariates_of(k), &mut raw),
        }
        for (o, &v) in row.iter_mut().zip(&raw) {
            *o = S::lit(v);
        }
    }
    Ok(DesignBlock {
        basis: TermBasis {
            spec: spec.clone(),
            recipe,
            centering: Centering::None,
            penalties,
        },
        key,
        matrix,
        key_weights: weights,
    })
}
