use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use bbhazard::basis::TermSpec;
use bbhazard::data::{augment, load_csv, truncate_to_horizon, write_csv, Covariate, CovariateKind, CovariateSchema};
use bbhazard::sim::{replication_data, run_study};
use bbhazard::{Design, FitReport, FittedModel};
use serde::Serialize;
use serde_json::Value;

use crate::config::{DataConfig, Mode, RunConfig};
use crate::Failure;

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Failure::config(format!("out: cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> Failure + '_ {
    move |e| Failure::runtime(format!("{}: {e}", path.display()))
}

pub fn simulate(cfg: &RunConfig, write_data: bool) -> Result<(), Failure> {
    cfg.sim.validate().map_err(|e| Failure::from(e).context("sim"))?;
    cfg.engine.validate().map_err(|e| Failure::from(e).context("engine"))?;
    let dir = out_dir(cfg)?;
    eprintln!(
        "simulating {} replication(s), n = {}, spatial = {}",
        cfg.sim.replications, cfg.sim.n, cfg.sim.spatial
    );
    let report = run_study(&cfg.sim, &cfg.engine)?;
    report.write(&dir)?;
    if write_data {
        let schema = cfg.sim.schema();
        for r in 0..cfg.sim.replications {
            let path = dir.join(format!("data_{r}.csv"));
            let records = replication_data(&cfg.sim, r)?;
            write_csv(BufWriter::new(File::create(&path).map_err(io_err(&path))?), &schema, &records)?;
        }
    }
    for r in report.replications.iter().filter(|r| r.error.is_some()) {
        eprintln!("replication {} failed: {}", r.replication, r.error.as_deref().unwrap_or(""));
    }
    eprintln!("wrote study reports to {} ({:.1} s)", dir.display(), report.total_secs);
    if report.failures == report.replications.len() {
        return Err(Failure::runtime("every replication failed"));
    }
    Ok(())
}

/// A baseline plus one smooth (continuous) or categorical term per column.
fn default_terms(schema: &CovariateSchema) -> Vec<TermSpec> {
    let mut terms = vec![TermSpec::baseline("baseline")];
    for (name, kind) in schema.names.iter().zip(&schema.kinds) {
        terms.push(match kind {
            CovariateKind::Continuous => TermSpec::smooth(name.clone(), name.clone()),
            CovariateKind::Categorical { .. } => TermSpec::categorical(name.clone(), name.clone()),
        });
    }
    terms
}

fn csv_header(path: &Path) -> Result<Vec<String>, Failure> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Failure::config(format!("data: {}: {e}", path.display())))?;
    let h = rdr
        .headers()
        .map_err(|e| Failure::config(format!("data: {}: {e}", path.display())))?;
    Ok(h.iter().map(|s| s.trim().to_string()).collect())
}

#[derive(Serialize)]
struct DataSummary {
    path: PathBuf,
    individuals: usize,
    rows: usize,
    events: usize,
    horizon: u32,
}

#[derive(Serialize)]
struct Selection<'a> {
    term: &'a str,
    selected: bool,
    update_frequency: f64,
}

#[derive(Serialize)]
struct FitOutput<'a> {
    config: &'a RunConfig,
    data: DataSummary,
    selection: Vec<Selection<'a>>,
    report: &'a FitReport,
}

pub fn fit(mut cfg: RunConfig, data_path: Option<PathBuf>, trajectories: bool) -> Result<(), Failure> {
    let mut data_cfg = match (cfg.data.take(), data_path) {
        (Some(mut d), Some(p)) => {
            d.path = p;
            d
        }
        (Some(d), None) => d,
        (None, Some(p)) => DataConfig::at(p),
        (None, None) => return Err(Failure::config("data.path: no input CSV given (use --data or a [data] section)")),
    };
    if !data_cfg.path.is_file() {
        return Err(Failure::config(format!("data.path: {} is not a file", data_cfg.path.display())));
    }
    if data_cfg.covariates.is_empty() {
        let roles = [&data_cfg.id, &data_cfg.time, &data_cfg.event];
        data_cfg.covariates = csv_header(&data_cfg.path)?
            .into_iter()
            .filter(|c| !roles.contains(&c))
            .collect();
    }
    cfg.data = Some(data_cfg.clone());
    cfg.engine.validate().map_err(|e| Failure::from(e).context("engine"))?;
    let dir = out_dir(&cfg)?;

    let (schema, mut records) = load_csv(&data_cfg.path, &data_cfg.schema()).map_err(|e| Failure::from(e).context("data"))?;
    if records.is_empty() {
        return Err(Failure::config("data: the input has no records"));
    }
    let horizon = data_cfg
        .horizon
        .unwrap_or_else(|| records.iter().map(|r| r.time).max().unwrap_or(1));
    if data_cfg.truncate {
        truncate_to_horizon(&mut records, horizon);
    }
    let data = augment(&records, &schema, horizon).map_err(|e| Failure::from(e).context("data"))?;
    if cfg.terms.is_empty() {
        cfg.terms = default_terms(&schema);
    }
    for t in &cfg.terms {
        t.validate().map_err(|e| Failure::from(e).context("terms"))?;
    }
    let design = Design::build(&cfg.terms, &data).map_err(|e| Failure::from(e).context("terms"))?;
    eprintln!(
        "fitting {} terms on {} individuals ({} rows, horizon {})",
        design.len(),
        data.n_individuals(),
        data.n_rows(),
        horizon
    );

    let (state, report) = bbhazard::engine::fit(&design, &data, &cfg.engine)?;
    let model = FittedModel::new(&design, &data, &state, &report);
    model.save(dir.join("model.json"))?;

    let selection = report
        .terms
        .iter()
        .enumerate()
        .map(|(j, term)| Selection {
            term,
            selected: report.selected[j],
            update_frequency: report.boosting.update_frequencies.get(j).copied().unwrap_or(0.0),
        })
        .collect();
    let out = FitOutput {
        config: &cfg,
        data: DataSummary {
            path: data_cfg.path.clone(),
            individuals: data.n_individuals(),
            rows: data.n_rows(),
            events: data.event_count(),
            horizon,
        },
        selection,
        report: &report,
    };
    let text = serde_json::to_string_pretty(&out).map_err(|e| Failure::runtime(e.to_string()))?;
    let path = dir.join("fit_report.json");
    fs::write(&path, text).map_err(io_err(&path))?;
    if trajectories {
        let path = dir.join("trajectories.csv");
        report.write_trajectories_csv(BufWriter::new(File::create(&path).map_err(io_err(&path))?))?;
    }
    eprintln!("selected: {}", report.selected_names().join(", "));
    eprintln!("wrote model.json and fit_report.json to {}", dir.display());
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Failure::config(format!("out: {}: {e}", parent.display())))?;
            }
            Box::new(BufWriter::new(
                File::create(p).map_err(|e| Failure::config(format!("out: {}: {e}", p.display())))?,
            ))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn csv_failure(e: csv::Error) -> Failure {
    Failure::runtime(e.to_string())
}

/// Covariate queries read from a CSV: a label per row plus the named
/// values. An `id` column, if present, labels the rows.
struct Query {
    columns: Vec<String>,
    rows: Vec<(String, Vec<String>)>,
}

fn read_query(model: &FittedModel, path: &Path) -> Result<Query, Failure> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Failure::config(format!("predict.query: {e}")))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Failure::config(format!("predict.query: {e}")))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let id_col = header.iter().position(|h| h == "id");
    for (c, h) in header.iter().enumerate() {
        if Some(c) != id_col && model.schema.index_of(h).is_none() {
            return Err(Failure::config(format!("predict.query: unknown covariate `{h}`")));
        }
    }
    let columns: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(c, _)| Some(c) != id_col)
        .map(|(_, h)| h.clone())
        .collect();
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Failure::config(format!("predict.query: {e}")))?;
        let label = id_col
            .and_then(|c| rec.get(c))
            .map(|s| s.trim().to_string())
            .unwrap_or_else(|| (k + 1).to_string());
        let values = (0..header.len())
            .filter(|&c| Some(c) != id_col)
            .map(|c| rec.get(c).unwrap_or("").trim().to_string())
            .collect();
        rows.push((label, values));
    }
    Ok(Query { columns, rows })
}

pub fn predict(cfg: &RunConfig) -> Result<(), Failure> {
    let p = &cfg.predict;
    let path = p
        .model
        .as_ref()
        .ok_or_else(|| Failure::config("predict.model: no model file given (use --model)"))?;
    if !path.is_file() {
        return Err(Failure::config(format!("predict.model: {} is not a file", path.display())));
    }
    let model = FittedModel::load(path).map_err(|e| Failure::from(e).context("predict.model"))?;
    let times: Vec<u32> = if p.times.is_empty() {
        (1..=model.horizon).collect()
    } else {
        p.times.clone()
    };
    for &t in &times {
        let lo = u32::from(p.mode == Mode::Hazard);
        if t < lo || t > model.horizon {
            return Err(Failure::config(format!(
                "predict.times: t = {t} outside {lo}..={}",
                model.horizon
            )));
        }
    }
    let mut w = csv::Writer::from_writer(output(cfg.out.as_deref())?);

    match p.mode {
        Mode::Hazard | Mode::Survival => {
            let query = match &p.query {
                Some(q) => read_query(&model, q)?,
                None => Query {
                    columns: Vec::new(),
                    rows: vec![("reference".into(), Vec::new())],
                },
            };
            let value_name = if p.mode == Mode::Hazard { "hazard" } else { "survival" };
            let mut header = vec!["query".to_string()];
            header.extend(query.columns.iter().cloned());
            header.extend(["t".to_string(), value_name.to_string()]);
            w.write_record(&header).map_err(csv_failure)?;
            for (k, (label, values)) in query.rows.iter().enumerate() {
                let mut given = HashMap::new();
                for (name, text) in query.columns.iter().zip(values) {
                    let v = model
                        .parse_value(name, text)
                        .map_err(|e| Failure::from(e).context(&format!("predict.query row {}", k + 1)))?;
                    given.insert(name.clone(), v);
                }
                let covs = model.covariates(&given)?;
                let out: Vec<f64> = match p.mode {
                    Mode::Hazard => times
                        .iter()
                        .map(|&t| model.hazard_at(t, &covs))
                        .collect::<bbhazard::Result<_>>()?,
                    _ => model.survival(&covs, &times)?,
                };
                for (&t, v) in times.iter().zip(out) {
                    let mut rec = vec![label.clone()];
                    rec.extend(values.iter().cloned());
                    rec.extend([t.to_string(), v.to_string()]);
                    w.write_record(&rec).map_err(csv_failure)?;
                }
            }
        }
        Mode::MarginalSurvival => {
            let name = p
                .vary
                .as_deref()
                .ok_or_else(|| Failure::config("predict.vary: marginal_survival needs a covariate (use --vary)"))?;
            let c = model.schema.require(name).map_err(|e| Failure::from(e).context("predict.vary"))?;
            let (grid, labels): (Vec<f64>, Vec<String>) = match &model.schema.kinds[c] {
                CovariateKind::Continuous => {
                    let g = if p.grid.is_empty() {
                        model.grid(name, p.grid_points)?
                    } else {
                        p.grid.clone()
                    };
                    let labels = g.iter().map(|x| x.to_string()).collect();
                    (g, labels)
                }
                CovariateKind::Categorical { levels } => {
                    let chosen = if p.levels.is_empty() { levels.clone() } else { p.levels.clone() };
                    let mut g = Vec::with_capacity(chosen.len());
                    for l in &chosen {
                        match model.parse_value(name, l).map_err(|e| Failure::from(e).context("predict.levels"))? {
                            Covariate::Level(i) => g.push(f64::from(i)),
                            Covariate::Num(_) => unreachable!("categorical column parsed as number"),
                        }
                    }
                    (g, chosen)
                }
            };
            w.write_record([name, "t", "survival"]).map_err(csv_failure)?;
            let points = model.marginal_survival(name, &grid, &times)?;
            for (pt, label) in points.iter().zip(labels.iter().flat_map(|l| std::iter::repeat_n(l, times.len()))) {
                w.write_record([label.clone(), pt.t.to_string(), pt.survival.to_string()])
                    .map_err(csv_failure)?;
            }
        }
    }
    w.flush().map_err(|e| Failure::runtime(e.to_string()))?;
    Ok(())
}

fn read_report(path: &Path) -> Result<Value, Failure> {
    let file = if path.is_dir() {
        ["fit_report.json", "study_summary.json"]
            .iter()
            .map(|f| path.join(f))
            .find(|p| p.is_file())
            .ok_or_else(|| Failure::config(format!("{}: no fit_report.json or study_summary.json", path.display())))?
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).map_err(|e| Failure::config(format!("{}: {e}", file.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", file.display())))
}

fn num(v: &Value) -> String {
    v.as_f64().map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

pub fn report(path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let doc = read_report(path)?;
    let mut w = output(out)?;
    let io = |e: io::Error| Failure::runtime(e.to_string());
    if let Some(selection) = doc.get("selection").and_then(Value::as_array) {
        let r = &doc["report"];
        let b = &r["boosting"];
        writeln!(
            w,
            "fit: {} individuals, {} rows, horizon {}",
            doc["data"]["individuals"], doc["data"]["rows"], doc["data"]["horizon"]
        )
        .map_err(io)?;
        writeln!(
            w,
            "boosting iterations: {} (early stop: {}), refit iterations: {}",
            b["iterations_run"], b["early_stopped"], r["config"]["refit_iterations"]
        )
        .map_err(io)?;
        writeln!(w, "{:<16} {:>8} {:>10} {:>14}", "term", "selected", "frequency", "contribution").map_err(io)?;
        for (j, s) in selection.iter().enumerate() {
            writeln!(
                w,
                "{:<16} {:>8} {:>10} {:>14}",
                s["term"].as_str().unwrap_or("?"),
                if s["selected"].as_bool() == Some(true) { "yes" } else { "no" },
                num(&s["update_frequency"]),
                num(&b["contributions"][j])
            )
            .map_err(io)?;
        }
    } else if let Some(terms) = doc.get("terms").and_then(Value::as_array) {
        let reps = doc["replications"].as_array().map_or(0, Vec::len);
        writeln!(
            w,
            "study: {} replication(s), {} failed, n = {}, spatial = {}",
            reps, doc["failures"], doc["sim"]["n"], doc["sim"]["spatial"]
        )
        .map_err(io)?;
        writeln!(
            w,
            "event fraction (median): {}",
            num(&doc["event_fraction"]["median"])
        )
        .map_err(io)?;
        writeln!(w, "{:<8} {:>10} {:>12} {:>12}", "term", "selected", "mse median", "mse q90").map_err(io)?;
        for (j, t) in terms.iter().enumerate() {
            let mse = &doc["mse"][j];
            writeln!(
                w,
                "{:<8} {:>10} {:>12} {:>12}",
                t.as_str().unwrap_or("?"),
                num(&doc["selection_frequency"][j]),
                num(&mse["median"]),
                num(&mse["q90"])
            )
            .map_err(io)?;
        }
    } else {
        return Err(Failure::config(format!("{}: not a fit or study report", path.display())));
    }
    w.flush().map_err(io)?;
    Ok(())
}
