//! Experiment registry. Each experiment builds a [`Trace`], and its verdicts
//! are a pure function of that trace and the config, so `lab check` can
//! recompute them from the files on disk.

use std::path::Path;

use anyhow::{bail, ensure, Result};
use polab::actor::IterationRecord;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::report::{Summary, Verdict};
use crate::svg::Plot;
use crate::trace::{Cell, Trace};

mod duality;
mod figure1;
mod gaussian;
mod hardness;
mod matching;
mod pspi;
mod suites;
mod template;

pub struct ExperimentSpec {
    pub id: &'static str,
    pub about: &'static str,
    /// Options the experiment reads besides `--seed` and `--wallclock`.
    pub options: &'static str,
    pub defaults: fn(&mut ExperimentConfig),
    pub run: fn(&ExperimentConfig) -> Result<Trace>,
    pub judge: fn(&Trace, &ExperimentConfig) -> Result<Vec<Verdict>>,
    pub plot: fn(&Trace, &ExperimentConfig) -> Result<Plot>,
}

static REGISTRY: [ExperimentSpec; 11] = [
    hardness::HARDNESS,
    hardness::NOBIAS,
    duality::DUALITY,
    matching::COMPATIBLE,
    pspi::PSPI_BOUND,
    figure1::FIGURE1,
    suites::IDENTITIES,
    matching::MEAN_MATCHING,
    suites::SGD,
    gaussian::GAUSSIAN,
    template::TEMPLATE,
];

pub fn registry() -> &'static [ExperimentSpec] {
    &REGISTRY
}

pub fn find(id: &str) -> Result<&'static ExperimentSpec> {
    match REGISTRY.iter().find(|e| e.id == id) {
        Some(e) => Ok(e),
        None => bail!("unknown experiment `{id}`; `lab list` shows the available ones"),
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub config: ExperimentConfig,
    pub trace: Trace,
    pub verdicts: Vec<Verdict>,
    pub svg: String,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn failed(&self) -> Vec<&Verdict> {
        self.verdicts.iter().filter(|v| !v.pass).collect()
    }

    pub fn verdict(&self, metric: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.metric == metric)
    }

    pub fn summary(&self) -> Summary {
        Summary::new(&self.config, self.trace.len(), &self.verdicts)
    }

    /// Writes `trace.csv`, `summary.json` and `plot.svg` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.trace.write(&dir.join("trace.csv"))?;
        self.summary().write(&dir.join("summary.json"))?;
        std::fs::write(dir.join("plot.svg"), &self.svg)?;
        Ok(())
    }
}

pub fn run(config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    let spec = find(&config.experiment)?;
    let trace = (spec.run)(config)?;
    ensure!(!trace.is_empty(), "{} produced an empty trace", spec.id);
    let verdicts = (spec.judge)(&trace, config)?;
    let svg = (spec.plot)(&trace, config)?.to_svg();
    Ok(Outcome {
        config: config.clone(),
        trace,
        verdicts,
        svg,
    })
}

/// Result of re-evaluating an output directory.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub verdicts: Vec<Verdict>,
    /// Metrics whose recorded entry disagrees with the recomputed one.
    pub mismatches: Vec<String>,
}

pub fn check(dir: &Path) -> Result<CheckReport> {
    let recorded = Summary::read(&dir.join("summary.json"))?;
    let trace = Trace::read(&dir.join("trace.csv"))?;
    let spec = find(&recorded.experiment)?;
    let verdicts = (spec.judge)(&trace, &recorded.config)?;
    let fresh = Summary::new(&recorded.config, trace.len(), &verdicts);
    let mut mismatches: Vec<String> = fresh
        .metrics
        .iter()
        .filter(|(name, entry)| recorded.metrics.get(*name) != Some(entry))
        .map(|(name, _)| name.clone())
        .collect();
    mismatches.extend(recorded.metrics.keys().filter(|k| !fresh.metrics.contains_key(*k)).cloned());
    if recorded.rows != fresh.rows {
        mismatches.push(format!("rows ({} recorded, {} in trace)", recorded.rows, fresh.rows));
    }
    Ok(CheckReport { verdicts, mismatches })
}

pub(crate) fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub(crate) fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::NEG_INFINITY, |m, x| if x.is_nan() || m.is_nan() { f64::NAN } else { m.max(x) })
}

pub(crate) fn min_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::INFINITY, |m, x| if x.is_nan() || m.is_nan() { f64::NAN } else { m.min(x) })
}

/// Per-iteration columns shared by every iterative experiment.
pub(crate) const ITER_COLUMNS: [&str; 7] = ["k", "J_pi_k", "regret_term", "err_k", "loss_v", "eta", "wallclock_us"];

pub(crate) fn iter_columns(before: &[&'static str], after: &[&'static str]) -> Vec<&'static str> {
    let mut cols = vec!["method"];
    cols.extend_from_slice(before);
    cols.extend_from_slice(&ITER_COLUMNS);
    cols.extend_from_slice(after);
    cols
}

pub(crate) fn iter_row(
    method: &str,
    before: Vec<Cell>,
    rec: &IterationRecord<f64>,
    wallclock: bool,
    after: Vec<Cell>,
) -> Vec<Cell> {
    let mut row = vec![Cell::from(method)];
    row.extend(before);
    row.extend([
        rec.k.into(),
        rec.j_pi.into(),
        rec.regret_term.into(),
        rec.err.into(),
        rec.loss_v.into(),
        rec.eta.into(),
        Cell::from(if wallclock { rec.wallclock_us } else { 0 }),
    ]);
    row.extend(after);
    row
}

/// `(k, column)` points of the rows in `idx`.
pub(crate) fn series_points(trace: &Trace, idx: &[usize], column: &str) -> Result<Vec<(f64, f64)>> {
    idx.iter().map(|&i| Ok((trace.num(i, "k")?, trace.num(i, column)?))).collect()
}
