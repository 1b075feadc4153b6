//! Scenario configuration, end-to-end pipeline, sweeps and artifacts.

mod config;
mod pipeline;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

pub use config::{
    ChannelSection, Config, GridSection, NodeEntry, NodesSection, PositionGrid, RoomSection, RtiSection, RunSection,
    SweepSection, SweepVariable, TargetsSection, TuneSection,
};
pub use pipeline::{localize, process_position, run_positions, scenes_of, PositionOutcome, PreparedLink, PreparedScene};

use crate::error::{Error, Result};
use crate::geometry::write_pathways_csv;
use crate::locate::{summarize, write_cdf_csv, write_results_csv, ErrorSummary};

/// Outcome of one scenario run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcomes: Vec<PositionOutcome>,
    /// Error of every target over all positions, in position order.
    pub errors: Vec<f64>,
    pub summary: Option<ErrorSummary>,
}

impl RunResult {
    fn new(outcomes: Vec<PositionOutcome>) -> Self {
        let errors: Vec<f64> = outcomes.iter().flat_map(|o| o.errors().iter().copied()).collect();
        let summary = if errors.is_empty() { None } else { Some(summarize(&errors)) };
        Self { outcomes, errors, summary }
    }

    pub fn median(&self) -> f64 {
        self.summary.as_ref().map(|s| s.median).unwrap_or(f64::NAN)
    }

    pub fn mean(&self) -> f64 {
        self.summary.as_ref().map(|s| s.mean).unwrap_or(f64::NAN)
    }

    /// Fraction of errors strictly below `bound`.
    pub fn fraction_below(&self, bound: f64) -> f64 {
        if self.errors.is_empty() {
            return f64::NAN;
        }
        self.errors.iter().filter(|&&e| e < bound).count() as f64 / self.errors.len() as f64
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_artifacts(prepared: &PreparedScene, result: &RunResult, out: &Path) -> Result<()> {
    let cfg = &prepared.config;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;
    write_pathways_csv(create(&out.join("pathways.csv"))?, &prepared.all_pathways())?;
    let weights = prepared.weights(cfg.rti.gamma)?;
    let mut w = create(&out.join("weights.txt"))?;
    weights.w.write_triplets(&mut w)?;
    w.flush()?;

    let rows: Vec<_> = result
        .outcomes
        .iter()
        .filter_map(|o| o.result.clone().map(|r| (o.index, r)))
        .collect();
    write_results_csv(create(&out.join("results.csv"))?, &rows)?;
    let cdf = result.summary.as_ref().map(|s| s.cdf.clone()).unwrap_or_default();
    write_cdf_csv(create(&out.join("cdf.csv"))?, &cdf)?;

    let mut dy = csv::Writer::from_writer(create(&out.join("delta_y.csv"))?);
    dy.write_record(["position", "link", "path_index", "order", "delta_y_db"])?;
    for o in &result.outcomes {
        for ((k, ord), v) in o.rss.keys.iter().zip(&o.rss.orders).zip(&o.rss.values) {
            dy.write_record([o.index.to_string(), k.link.to_string(), k.path.to_string(), ord.to_string(), v.to_string()])?;
        }
    }
    dy.flush()?;

    let mut notes = csv::Writer::from_writer(create(&out.join("notes.csv"))?);
    notes.write_record(["position", "note"])?;
    for o in &result.outcomes {
        if let Some(n) = &o.note {
            notes.write_record([o.index.to_string(), n.clone()])?;
        }
        for d in &o.rss.dropped {
            notes.write_record([
                o.index.to_string(),
                format!("link {} path {} dropped: degenerate baseline power {:e}", d.key.link, d.key.path, d.baseline_power),
            ])?;
        }
    }
    notes.flush()?;

    if cfg.run.write_images {
        let dir = out.join("images");
        fs::create_dir_all(&dir)?;
        for o in &result.outcomes {
            if let Some(img) = &o.image {
                let mut f = create(&dir.join(format!("position_{:03}.pgm", o.index)))?;
                img.write_pgm(&mut f)?;
                f.flush()?;
            }
        }
    }
    Ok(())
}

/// Runs every target position of a scenario; writes artifacts when
/// `out` is given.
pub fn run_scenario(config: &Config, out: Option<&Path>) -> Result<RunResult> {
    let prepared = PreparedScene::new(config, config.run.seed)?;
    let outcomes = run_positions(&prepared, &scenes_of(config)?)?;
    let result = RunResult::new(outcomes);
    if let Some(dir) = out {
        write_artifacts(&prepared, &result, dir)?;
    }
    Ok(result)
}

/// Runs the scenario once per sweep value. Each value gets its own
/// subdirectory; `sweep_cdf.csv` and `sweep_summary.csv` combine them.
pub fn run_sweep(config: &Config, sweep: &SweepSection, out: Option<&Path>) -> Result<Vec<(usize, RunResult)>> {
    if sweep.values.is_empty() {
        return Err(Error::Config("sweep has no values".into()));
    }
    let mut results = Vec::with_capacity(sweep.values.len());
    for &value in &sweep.values {
        let cfg = config.with_sweep_value(sweep.variable, value);
        cfg.validate()?;
        let sub = out.map(|o| o.join(format!("{}_{value}", variable_name(sweep.variable))));
        results.push((value, run_scenario(&cfg, sub.as_deref())?));
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.toml"), config.to_toml_string()?)?;
        let name = variable_name(sweep.variable);
        let mut cdf = csv::Writer::from_writer(create(&dir.join("sweep_cdf.csv"))?);
        cdf.write_record([name, "error_m", "cumulative_fraction"])?;
        let mut summary = csv::Writer::from_writer(create(&dir.join("sweep_summary.csv"))?);
        summary.write_record([name, "positions", "mean_m", "median_m", "fraction_below_1m"])?;
        for (value, r) in &results {
            if let Some(s) = &r.summary {
                for (e, f) in &s.cdf {
                    cdf.write_record([value.to_string(), e.to_string(), f.to_string()])?;
                }
            }
            summary.write_record([
                value.to_string(),
                r.errors.len().to_string(),
                r.mean().to_string(),
                r.median().to_string(),
                r.fraction_below(1.0).to_string(),
            ])?;
        }
        cdf.flush()?;
        summary.flush()?;
    }
    Ok(results)
}

pub fn variable_name(v: SweepVariable) -> &'static str {
    match v {
        SweepVariable::NumNodes => "num_nodes",
        SweepVariable::NumElements => "num_elements",
        SweepVariable::MaxOrder => "max_order",
    }
}
