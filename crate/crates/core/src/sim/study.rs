use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    covariate_range, equidistant, gen_covariates, gen_events, mse_effect, selection_frequency, SimConfig, TrueModel,
    N_COVARIATES, SPATIAL_RANGE,
};
use crate::basis::{Design, TermSpec};
use crate::data::{augment, Covariate, IndividualRecord};
use crate::engine::{fit, EngineConfig};
use crate::error::{Error, Result};
use crate::model::ModelState;

const DATA_STREAM: u64 = 2;

/// Seed of replication `r`, a function of the master seed and `r` only.
pub fn replication_seed(master: u64, r: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(r as u64);
    rng.next_u64()
}

/// Term names of the simulation model: `f0` (baseline), `f1..f9`, `fspa`.
pub fn term_specs(config: &SimConfig) -> Vec<TermSpec> {
    let mut specs = vec![TermSpec::baseline("f0").with_basis_dim(config.basis_dim)];
    for j in 1..=N_COVARIATES {
        specs.push(TermSpec::smooth(format!("f{j}"), format!("x{j}")).with_basis_dim(config.basis_dim));
    }
    if config.spatial {
        specs.push(TermSpec::tensor("fspa", "lon", "lat").with_basis_dim(config.tensor_margin_dim));
    }
    specs
}

/// True and estimated effect of one term on its evaluation grid. For the
/// spatial term, `x` and `y` are the grid coordinates; otherwise `y` is
/// empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectCurve {
    pub term: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub seed: u64,
    pub error: Option<String>,
    pub n_rows: usize,
    /// Fraction of individuals with an observed event.
    pub event_fraction: f64,
    pub selected: Vec<bool>,
    /// Centered MSE per term.
    pub mse: Vec<f64>,
    pub update_frequencies: Vec<f64>,
    /// Final smoothing parameters per term.
    pub tau: Vec<Vec<f64>>,
    pub fit_secs: f64,
    #[serde(skip)]
    pub curves: Vec<EffectCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: q(0.5),
            q10: q(0.1),
            q90: q(0.9),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub sim: SimConfig,
    pub engine: EngineConfig,
    pub terms: Vec<String>,
    pub replications: Vec<ReplicationResult>,
    pub failures: usize,
    /// Over successful replications.
    pub selection_frequency: Vec<f64>,
    pub mse: Vec<Option<Summary>>,
    pub event_fraction: Option<Summary>,
    pub rows: Option<Summary>,
    pub total_secs: f64,
}

fn curves(config: &SimConfig, truth: &TrueModel, design: &Design<f64>, state: &ModelState<f64>) -> Vec<EffectCurve> {
    let n_cov = config.schema().len();
    let term_value = |j: usize, t: u32, covs: &[Covariate]| design.blocks[j].basis.eval(t, covs).dot(&state.beta[j]);
    let mut out = Vec::with_capacity(design.len());

    let times: Vec<f64> = (1..=config.horizon).map(f64::from).collect();
    let zero = vec![Covariate::Num(0.0); n_cov];
    out.push(EffectCurve {
        term: "f0".into(),
        truth: times.iter().map(|&t| truth.baseline(t)).collect(),
        estimate: (1..=config.horizon).map(|t| term_value(0, t, &zero)).collect(),
        x: times,
        y: Vec::new(),
    });
    for j in 1..=N_COVARIATES {
        let (lo, hi) = covariate_range(j);
        let x = equidistant(lo, hi, config.grid_points);
        let estimate = x
            .iter()
            .map(|&v| {
                let mut covs = zero.clone();
                covs[j - 1] = Covariate::Num(v);
                term_value(j, 1, &covs)
            })
            .collect();
        out.push(EffectCurve {
            term: format!("f{j}"),
            truth: x.iter().map(|&v| truth.effect(j, v)).collect(),
            estimate,
            x,
            y: Vec::new(),
        });
    }
    if config.spatial {
        let axis = equidistant(SPATIAL_RANGE.0, SPATIAL_RANGE.1, config.spatial_grid_points);
        let mut c = EffectCurve {
            term: "fspa".into(),
            x: Vec::new(),
            y: Vec::new(),
            truth: Vec::new(),
            estimate: Vec::new(),
        };
        for &lon in &axis {
            for &lat in &axis {
                let mut covs = zero.clone();
                covs[N_COVARIATES] = Covariate::Num(lon);
                covs[N_COVARIATES + 1] = Covariate::Num(lat);
                c.x.push(lon);
                c.y.push(lat);
                c.truth.push(truth.spatial_effect(lon, lat));
                c.estimate.push(term_value(N_COVARIATES + 1, 1, &covs));
            }
        }
        out.push(c);
    }
    out
}

/// Simulate, fit and score replication `r`. Failures are recorded in the
/// result rather than returned.
pub fn run_replication(config: &SimConfig, engine: &EngineConfig, r: usize) -> ReplicationResult {
    let seed = replication_seed(config.seed, r);
    let n_terms = term_specs(config).len();
    let mut res = ReplicationResult {
        replication: r,
        seed,
        error: None,
        n_rows: 0,
        event_fraction: f64::NAN,
        selected: vec![false; n_terms],
        mse: vec![f64::NAN; n_terms],
        update_frequencies: vec![0.0; n_terms],
        tau: Vec::new(),
        fit_secs: 0.0,
        curves: Vec::new(),
    };
    if let Err(e) = replication_body(config, engine, seed, &mut res) {
        res.error = Some(e.to_string());
    }
    res
}

/// Person-level data of replication `r`, as fitted by [`run_replication`].
pub fn replication_data(config: &SimConfig, r: usize) -> Result<Vec<IndividualRecord>> {
    config.validate()?;
    data_of(config, &TrueModel::new(config)?, replication_seed(config.seed, r))
}

fn data_of(config: &SimConfig, truth: &TrueModel, seed: u64) -> Result<Vec<IndividualRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DATA_STREAM);
    let x = gen_covariates(config.n, config.spatial, &mut rng);
    Ok(gen_events(&x, truth, config.horizon, &mut rng))
}

fn replication_body(config: &SimConfig, engine: &EngineConfig, seed: u64, res: &mut ReplicationResult) -> Result<()> {
    let truth = TrueModel::new(config)?;
    let records = data_of(config, &truth, seed)?;
    res.event_fraction = records.iter().filter(|r| r.event == 1).count() as f64 / records.len() as f64;
    let data = augment(&records, &config.schema(), config.horizon)?;
    res.n_rows = data.n_rows();

    let design = Design::<f64>::build(&term_specs(config), &data)?;
    let engine = EngineConfig {
        seed,
        ..engine.clone()
    };
    let start = Instant::now();
    let (state, report) = fit(&design, &data, &engine)?;
    res.fit_secs = start.elapsed().as_secs_f64();
    res.selected = report.selected.clone();
    res.update_frequencies = report.boosting.update_frequencies.clone();
    res.tau = state.tau.clone();
    res.curves = curves(config, &truth, &design, &state);
    res.mse = res
        .curves
        .iter()
        .map(|c| mse_effect(&c.truth, &c.estimate))
        .collect::<Result<_>>()?;
    Ok(())
}

/// Run every replication (in parallel) and aggregate.
pub fn run_study(config: &SimConfig, engine: &EngineConfig) -> Result<StudyReport> {
    config.validate()?;
    engine.validate()?;
    let start = Instant::now();
    let terms: Vec<String> = term_specs(config).into_iter().map(|s| s.name).collect();
    let replications: Vec<ReplicationResult> = (0..config.replications)
        .into_par_iter()
        .map(|r| run_replication(config, engine, r))
        .collect();
    let ok: Vec<&ReplicationResult> = replications.iter().filter(|r| r.error.is_none()).collect();
    let selection = if ok.is_empty() {
        vec![0.0; terms.len()]
    } else {
        selection_frequency(&ok.iter().map(|r| r.selected.clone()).collect::<Vec<_>>())?
    };
    let mse = (0..terms.len())
        .map(|j| Summary::of(&ok.iter().map(|r| r.mse[j]).collect::<Vec<_>>()))
        .collect();
    Ok(StudyReport {
        sim: config.clone(),
        engine: engine.clone(),
        terms,
        failures: replications.len() - ok.len(),
        selection_frequency: selection,
        mse,
        event_fraction: Summary::of(&ok.iter().map(|r| r.event_fraction).collect::<Vec<_>>()),
        rows: Summary::of(&ok.iter().map(|r| r.n_rows as f64).collect::<Vec<_>>()),
        replications,
        total_secs: start.elapsed().as_secs_f64(),
    })
}

impl StudyReport {
    /// Write `replications.csv`, `study_summary.json` and one
    /// `effects_<term>.csv` per term into `dir`. The CSV files depend on the
    /// configuration only, not on timings.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;

        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("replications.csv"))?));
        let mut header = vec![
            "replication".to_string(),
            "seed".into(),
            "error".into(),
            "n_rows".into(),
            "event_fraction".into(),
        ];
        header.extend(self.terms.iter().map(|t| format!("selected_{t}")));
        header.extend(self.terms.iter().map(|t| format!("mse_{t}")));
        w.write_record(&header)?;
        for r in &self.replications {
            let mut rec = vec![
                r.replication.to_string(),
                r.seed.to_string(),
                r.error.clone().unwrap_or_default(),
                r.n_rows.to_string(),
                r.event_fraction.to_string(),
            ];
            rec.extend(r.selected.iter().map(|&s| u8::from(s).to_string()));
            rec.extend(r.mse.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;

        fs::write(dir.join("study_summary.json"), serde_json::to_string_pretty(self)?)?;

        for (j, term) in self.terms.iter().enumerate() {
            let path = dir.join(format!("effects_{term}.csv"));
            let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
            let spatial = term == "fspa";
            let x_name = if j == 0 { "t" } else if spatial { "lon" } else { "x" };
            let mut header = vec!["replication", x_name];
            if spatial {
                header.push("lat");
            }
            header.extend(["true", "estimate"]);
            w.write_record(&header)?;
            for r in &self.replications {
                let Some(c) = r.curves.iter().find(|c| &c.term == term) else { continue };
                for i in 0..c.x.len() {
                    let mut rec = vec![r.replication.to_string(), c.x[i].to_string()];
                    if spatial {
                        rec.push(c.y[i].to_string());
                    }
                    rec.push(c.truth[i].to_string());
                    rec.push(c.estimate[i].to_string());
                    w.write_record(&rec)?;
                }
            }
            w.flush()?;
        }
        Ok(())
    }

    /// Replications that completed.
    pub fn successful(&self) -> impl Iterator<Item = &ReplicationResult> {
        self.replications.iter().filter(|r| r.error.is_none())
    }

    pub fn term_index(&self, name: &str) -> Result<usize> {
        self.terms
            .iter()
            .position(|t| t == name)
            .ok_or_else(|| Error::Config(format!("unknown term `{name}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replication_seeds_are_independent_of_order() {
        let s: Vec<u64> = (0..5).map(|r| replication_seed(11, r)).collect();
        assert_eq!(replication_seed(11, 3), s[3]);
        let mut d = s.clone();
        d.dedup();
        assert_eq!(d.len(), 5);
    }

    #[test]
    fn quantiles() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!(s.median, 3.0);
        assert_eq!(s.mean, 3.0);
        assert!((s.q10 - 1.4).abs() < 1e-12);
        assert!(Summary::of(&[]).is_none());
    }
}
