//! Simulated survival data from a known additive hazard, and the metrics
//! used to compare fitted effects with the truth.

mod study;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Covariate, CovariateSchema, IndividualRecord};
use crate::error::{Error, Result};

pub use self::study::{
    replication_data, replication_seed, run_replication, run_study, term_specs, EffectCurve, ReplicationResult,
    StudyReport, Summary,
};

pub const N_COVARIATES: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Individuals per replication.
    pub n: usize,
    /// Horizon `k`.
    pub horizon: u32,
    /// Baseline level `a`.
    pub a: f64,
    /// Standard deviation the informative effects are scaled to.
    pub sd: f64,
    /// Add the bivariate effect of `(lon, lat)`.
    pub spatial: bool,
    pub seed: u64,
    pub replications: usize,
    /// Basis dimension of the baseline and univariate smooth terms.
    pub basis_dim: usize,
    /// Basis dimension per margin of the spatial tensor term.
    pub tensor_margin_dim: usize,
    /// Points of the effect evaluation grid per covariate.
    pub grid_points: usize,
    /// Points per axis of the spatial evaluation grid.
    pub spatial_grid_points: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 5000,
            horizon: 20,
            a: -3.0,
            sd: 1.0,
            spatial: false,
            seed: 1,
            replications: 1,
            basis_dim: 20,
            tensor_margin_dim: 5,
            grid_points: 200,
            spatial_grid_points: 50,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 10 {
            return bad(format!("n = {} must be at least 10", self.n));
        }
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if !(self.sd > 0.0 && self.sd.is_finite()) {
            return bad(format!("sd = {} must be positive", self.sd));
        }
        if ![-2.0, -3.0, -4.0].contains(&self.a) {
            return bad(format!("a = {} must be one of -2, -3, -4", self.a));
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.grid_points < 2 || self.spatial_grid_points < 2 {
            return bad("evaluation grids need at least 2 points".into());
        }
        Ok(())
    }

    pub fn schema(&self) -> CovariateSchema {
        let mut names: Vec<String> = (1..=N_COVARIATES).map(|j| format!("x{j}")).collect();
        if self.spatial {
            names.push("lon".into());
            names.push("lat".into());
        }
        CovariateSchema::continuous(names)
    }
}

/// Design interval of covariate `x_j` (1-based).
pub fn covariate_range(j: usize) -> (f64, f64) {
    if j == 4 {
        (0.0, 1.0)
    } else {
        (-3.0, 3.0)
    }
}

pub const SPATIAL_RANGE: (f64, f64) = (-3.0, 3.0);

/// `n` equidistant points on `[lo, hi]`, endpoints included.
pub fn equidistant(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Covariate table, one row per individual: `x_1..x_9` and, in the spatial
/// setting, `lon, lat`. Each column is an equidistant grid, permuted
/// independently of the others.
pub fn gen_covariates<R: Rng + ?Sized>(n: usize, spatial: bool, rng: &mut R) -> Vec<Vec<f64>> {
    let mut columns: Vec<Vec<f64>> = (1..=N_COVARIATES)
        .map(|j| {
            let (lo, hi) = covariate_range(j);
            equidistant(lo, hi, n)
        })
        .collect();
    if spatial {
        for _ in 0..2 {
            columns.push(equidistant(SPATIAL_RANGE.0, SPATIAL_RANGE.1, n));
        }
    }
    for c in &mut columns {
        c.shuffle(rng);
    }
    (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect()
}

fn raw_effect(j: usize, x: f64) -> f64 {
    match j {
        1 => 0.5 * x,
        2 => 1.5 * x.sin(),
        3 => x * x / 6.0 - 1.5,
        4 => (2.0 * (4.0 * x - 2.0)).sin() + 2.0 * (-256.0 * (x - 0.5).powi(2)).exp(),
        _ => 0.0,
    }
}

/// Standard deviation (divisor: count) of the distinct values. Values closer than a
/// relative `1e-9` count as equal, so that mirror-image design points of a
/// symmetric effect collapse regardless of rounding.
fn sd_unique(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|b, a| (*b - *a).abs() <= 1e-9 * (1.0 + a.abs()));
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// The data-generating effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub a: f64,
    /// Multiplier applied to `f_1..f_9` (1 for the null effects).
    pub scale: [f64; N_COVARIATES],
    pub spatial: bool,
}

impl TrueModel {
    /// Scale `f_1..f_4` so that the standard deviation of their distinct
    /// values at the `n` design points equals `sd`.
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let mut scale = [1.0; N_COVARIATES];
        for j in 1..=4 {
            let (lo, hi) = covariate_range(j);
            let vals: Vec<f64> = equidistant(lo, hi, config.n).into_iter().map(|x| raw_effect(j, x)).collect();
            let s = sd_unique(&vals);
            if !(s > 0.0) {
                return Err(Error::Degenerate(format!("effect f{j} is constant on the design points")));
            }
            scale[j - 1] = config.sd / s;
        }
        Ok(Self {
            a: config.a,
            scale,
            spatial: config.spatial,
        })
    }

    /// Baseline `a - ½ log t`.
    pub fn baseline(&self, t: f64) -> f64 {
        self.a - 0.5 * t.ln()
    }

    /// Effect `f_j(x)`, `j` in `1..=9`.
    pub fn effect(&self, j: usize, x: f64) -> f64 {
        self.scale[j - 1] * raw_effect(j, x)
    }

    pub fn spatial_effect(&self, lon: f64, lat: f64) -> f64 {
        2.5 * lon.sin() * (0.5 * lat).sin() - 0.3
    }

    /// Time-invariant part of the predictor for one covariate row.
    pub fn covariate_effect(&self, x: &[f64]) -> f64 {
        let mut eta: f64 = (1..=N_COVARIATES).map(|j| self.effect(j, x[j - 1])).sum();
        if self.spatial {
            eta += self.spatial_effect(x[N_COVARIATES], x[N_COVARIATES + 1]);
        }
        eta
    }

    pub fn hazard(&self, t: u32, x: &[f64]) -> f64 {
        let eta = self.baseline(f64::from(t)) + self.covariate_effect(x);
        1.0 / (1.0 + (-eta).exp())
    }
}

/// Draw event histories with hazard `hazard(t, i)` for individual `i`:
/// per interval, `y = 1` iff a uniform draw falls at or below the hazard;
/// censoring time `C ~ U{1..k}`; the record keeps `min(T, C, k)` and
/// `δ = [T ≤ min(C, k)]`.
pub fn gen_events_with<R, H>(covariates: &[Vec<f64>], horizon: u32, rng: &mut R, hazard: H) -> Vec<IndividualRecord>
where
    R: Rng + ?Sized,
    H: Fn(u32, usize) -> f64,
{
    covariates
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let c = rng.random_range(1..=horizon);
            let mut time = c;
            let mut event = 0;
            for t in 1..=c {
                let u: f64 = rng.random();
                if u <= hazard(t, i) {
                    time = t;
                    event = 1;
                    break;
                }
            }
            let covs = x.iter().map(|&v| Covariate::Num(v)).collect();
            IndividualRecord::new((i + 1).to_string(), time, event, covs)
        })
        .collect()
}

pub fn gen_events<R: Rng + ?Sized>(
    covariates: &[Vec<f64>],
    model: &TrueModel,
    horizon: u32,
    rng: &mut R,
) -> Vec<IndividualRecord> {
    let shift: Vec<f64> = covariates.iter().map(|x| model.covariate_effect(x)).collect();
    gen_events_with(covariates, horizon, rng, |t, i| {
        let eta = model.baseline(f64::from(t)) + shift[i];
        1.0 / (1.0 + (-eta).exp())
    })
}

fn centered(v: &[f64]) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len().max(1) as f64;
    v.iter().map(|x| x - m).collect()
}

/// Mean squared difference of two effect curves on a common grid, after
/// centering each.
pub fn mse_effect(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(Error::Dimension(format!(
            "effect curves of length {} and {}",
            truth.len(),
            estimate.len()
        )));
    }
    let (a, b) = (centered(truth), centered(estimate));
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}

/// Fraction of replications in which each term was selected.
pub fn selection_frequency(selected: &[Vec<bool>]) -> Result<Vec<f64>> {
    let Some(first) = selected.first() else {
        return Err(Error::Validation("selection frequency needs at least one replication".into()));
    };
    let mut counts = vec![0usize; first.len()];
    for s in selected {
        if s.len() != counts.len() {
            return Err(Error::Dimension("replications differ in their number of terms".into()));
        }
        for (c, &b) in counts.iter_mut().zip(s) {
            *c += usize::from(b);
        }
    }
    Ok(counts.iter().map(|&c| c as f64 / selected.len() as f64).collect())
}
