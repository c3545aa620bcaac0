//! Experiment suites: a TOML document expanded into a grid of runs.
//!
//! ```toml
//! alpha = 0.1
//! seeds = [0, 1, 2]
//!
//! [forecaster]
//! kind = "ar"
//!
//! [[datasets]]
//! name = "changepoint"
//! source = { kind = "changepoint" }
//!
//! [[methods]]
//! kind = "eci"
//! etas = [1.0, 0.5, 0.1, 0.05]
//! ```
//!
//! Each `[[methods]]` table takes the [`MethodSpec`] fields plus an optional
//! `etas` list. Without `etas` or `eta`, the method's standard grid
//! ([`default_eta_grid`]) is swept.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibrators::{CalibratorKind, MethodSpec};
use crate::error::{Error, Result};
use crate::forecasters::ForecasterConfig;
use crate::par::{self, Execution};
use crate::runner::{
    calibrate, coverage_metrics, online_start, write_trace_file, DataSource, IntervalMode,
    RunConfig,
};

/// Learning rates swept for each method when a suite gives none.
pub fn default_eta_grid(kind: CalibratorKind) -> &'static [f64] {
    match kind {
        CalibratorKind::Aci => &[0.1, 0.05, 0.01, 0.005],
        CalibratorKind::Ogd => &[10.0, 5.0, 1.0, 0.5, 0.1, 0.05, 0.01, 0.005],
        CalibratorKind::SfOgd => &[1000.0, 500.0, 100.0, 50.0, 10.0, 5.0, 1.0, 0.5, 0.1, 0.05],
        CalibratorKind::DecayOgd => &[2000.0, 1000.0, 200.0, 100.0, 20.0, 10.0, 2.0, 1.0, 0.2, 0.1],
        _ => &[1.0, 0.5, 0.1, 0.05],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub source: DataSource,
}

/// One `[[methods]]` table: shared hyperparameters and the rates to sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodGrid {
    pub spec: MethodSpec,
    pub etas: Vec<f64>,
}

impl<'de> Deserialize<'de> for MethodGrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let mut table = toml::Table::deserialize(d)?;
        let etas = table.remove("etas");
        let has_eta = table.contains_key("eta");
        let mut spec = MethodSpec::deserialize(table).map_err(D::Error::custom)?;
        let etas = match (etas, has_eta) {
            (Some(_), true) => return Err(D::Error::custom("give either `eta` or `etas`, not both")),
            (Some(v), false) => Vec::<f64>::deserialize(v).map_err(D::Error::custom)?,
            (None, true) => vec![spec.eta],
            (None, false) => default_eta_grid(spec.kind).to_vec(),
        };
        if let Some(&first) = etas.first() {
            spec.eta = first;
        }
        Ok(Self { spec, etas })
    }
}

impl Serialize for MethodGrid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        let mut table = toml::Table::try_from(&self.spec).map_err(S::Error::custom)?;
        table.remove("eta");
        table.insert(
            "etas".into(),
            toml::Value::Array(self.etas.iter().map(|&e| toml::Value::Float(e)).collect()),
        );
        table.serialize(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSuite {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train_fraction: f64,
    #[serde(default = "default_rolling_window")]
    pub rolling_window: usize,
    #[serde(default)]
    pub mode: IntervalMode,
    #[serde(default)]
    pub forecaster: ForecasterConfig,
    pub datasets: Vec<DatasetEntry>,
    pub methods: Vec<MethodGrid>,
    /// Default output directory; the command line may override it.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_alpha() -> f64 {
    0.1
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_rolling_window() -> usize {
    50
}

/// Identifies one expanded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunKey {
    pub method: CalibratorKind,
    pub dataset: String,
    pub eta: f64,
    pub seed: u64,
}

impl RunKey {
    fn sort_key(&self) -> (CalibratorKind, &str, u64, u64) {
        (self.method, &self.dataset, self.eta.to_bits(), self.seed)
    }

    /// File stem for this run's trace.
    pub fn file_stem(&self) -> String {
        format!("{}__{}__eta{}__seed{}", self.method.key(), self.dataset, self.eta, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct PlannedRun {
    pub key: RunKey,
    pub config: RunConfig,
}

impl ExperimentSuite {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Cartesian product of methods × rates × datasets × seeds, sorted by key.
    pub fn expand(&self) -> Result<Vec<PlannedRun>> {
        let mut runs = Vec::new();
        for m in &self.methods {
            for &eta in &m.etas {
                for d in &self.datasets {
                    for &seed in &self.seeds {
                        let method = MethodSpec {
                            eta,
                            ..m.spec.clone()
                        };
                        let config = RunConfig {
                            alpha: self.alpha,
                            method,
                            forecaster: self.forecaster.clone(),
                            data: d.source.clone(),
                            train_fraction: self.train_fraction,
                            rolling_window: self.rolling_window,
                            seed,
                            mode: self.mode,
                        };
                        config.validate()?;
                        runs.push(PlannedRun {
                            key: RunKey {
                                method: m.spec.kind,
                                dataset: d.name.clone(),
                                eta,
                                seed,
                            },
                            config,
                        });
                    }
                }
            }
        }
        if runs.is_empty() {
            return Err(Error::EmptySuite(
                "no runs: methods, rates, datasets and seeds must all be non-empty".into(),
            ));
        }
        runs.sort_by(|a, b| a.key.sort_key().cmp(&b.key.sort_key()));
        if let Some(w) = runs.windows(2).find(|w| w[0].key.sort_key() == w[1].key.sort_key()) {
            return Err(Error::Config(format!("duplicate run {}", w[0].key.file_stem())));
        }
        Ok(runs)
    }
}

/// One summary record per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub dataset: String,
    pub seed: u64,
    pub eta: f64,
    pub alpha: f64,
    pub coverage_pct: f64,
    pub avg_width: f64,
    pub median_width: f64,
    pub long_run_gap: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub runs: Vec<RunSummary>,
    pub failures: Vec<RunFailure>,
}

/// Best rate per (method, dataset), averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRow {
    pub method: String,
    pub dataset: String,
    pub eta: f64,
    pub coverage_pct: f64,
    pub avg_width: f64,
    pub median_width: f64,
    pub seeds: usize,
}

/// Forecasts shared by every method on one (dataset, seed) pair.
struct Prepared {
    y: Vec<f64>,
    yhat: Vec<f64>,
    start: usize,
}

fn prepare(config: &RunConfig) -> Result<Prepared> {
    let y = config.data.load(config.seed)?;
    let start = online_start(y.len(), &config.forecaster, config.train_fraction);
    if start >= y.len() {
        return Err(Error::InsufficientHistory {
            needed: start + 1,
            have: y.len(),
        });
    }
    if let Some(t) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteObservation { step: t });
    }
    let yhat = crate::runner::forecast_series(&y, &config.forecaster, start)?;
    Ok(Prepared { y, yhat, start })
}

/// Runs every planned run. Traces go to `trace_dir` when given. Failed runs
/// are reported in the outcome and do not stop the others.
pub fn run_suite(suite: &ExperimentSuite, trace_dir: Option<&Path>, exec: Execution) -> Result<SuiteOutcome> {
    let runs = suite.expand()?;
    if let Some(dir) = trace_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    // forecasts depend only on the data and forecaster, not on the method
    let mut groups: BTreeMap<(String, u64), &RunConfig> = BTreeMap::new();
    for r in &runs {
        groups.entry((r.key.dataset.clone(), r.key.seed)).or_insert(&r.config);
    }
    let group_keys: Vec<(String, u64)> = groups.keys().cloned().collect();
    let prepared = par::map(exec, &group_keys, |k| prepare(groups[k]));
    let prepared: BTreeMap<_, _> = group_keys.into_iter().zip(prepared).collect();

    let results = par::map(exec, &runs, |run| -> Result<RunSummary> {
        let p = prepared[&(run.key.dataset.clone(), run.key.seed)]
            .as_ref()
            .map_err(|e| Error::Config(e.to_string()))?;
        let c = &run.config;
        let trace = calibrate(&p.y, &p.yhat, p.start, &c.method, c.alpha, c.mode)?;
        if let Some(dir) = trace_dir {
            write_trace_file(&trace, &dir.join(format!("{}.csv", run.key.file_stem())))?;
        }
        let m = coverage_metrics(&trace, c.rolling_window)?;
        Ok(RunSummary {
            method: run.key.method.key().to_string(),
            dataset: run.key.dataset.clone(),
            seed: run.key.seed,
            eta: run.key.eta,
            alpha: c.alpha,
            coverage_pct: 100.0 * m.coverage,
            avg_width: m.avg_width,
            median_width: m.median_width,
            long_run_gap: m.long_run_gap,
            steps: trace.len(),
        })
    });

    let mut outcome = SuiteOutcome::default();
    for (run, res) in runs.iter().zip(results) {
        match res {
            Ok(s) => outcome.runs.push(s),
            Err(e) => {
                log::error!("run {} failed: {e}", run.key.file_stem());
                outcome.failures.push(RunFailure {
                    run: run.key.file_stem(),
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(outcome)
}

/// Picks, per (method, dataset), the rate whose seed-averaged coverage is
/// closest to `1 - α`, breaking ties by smaller average width.
pub fn best_per_method(runs: &[RunSummary]) -> Vec<BestRow> {
    let mut groups: BTreeMap<(String, String, u64), Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        groups
            .entry((r.method.clone(), r.dataset.clone(), r.eta.to_bits()))
            .or_default()
            .push(r);
    }
    let mut best: BTreeMap<(String, String), BestRow> = BTreeMap::new();
    for ((method, dataset, _), rs) in groups {
        let n = rs.len() as f64;
        let row = BestRow {
            method: method.clone(),
            dataset: dataset.clone(),
            eta: rs[0].eta,
            coverage_pct: rs.iter().map(|r| r.coverage_pct).sum::<f64>() / n,
            avg_width: rs.iter().map(|r| r.avg_width).sum::<f64>() / n,
            median_width: rs.iter().map(|r| r.median_width).sum::<f64>() / n,
            seeds: rs.len(),
        };
        let target = 100.0 * (1.0 - rs[0].alpha);
        let score = |b: &BestRow| ((b.coverage_pct - target).abs(), b.avg_width);
        let slot = best.entry((method, dataset));
        match slot {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(row);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let (g_new, w_new) = score(&row);
                let (g_old, w_old) = score(o.get());
                let better = g_new < g_old || (g_new == g_old && w_new < w_old);
                if better {
                    o.insert(row);
                }
            }
        }
    }
    best.into_values().collect()
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    runs: &'a [RunSummary],
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    failures: &'a [RunFailure],
}

/// `[[runs]]` records, plus `[[failures]]` if any run failed.
pub fn summary_toml(outcome: &SuiteOutcome) -> Result<String> {
    toml::to_string(&SummaryDoc {
        runs: &outcome.runs,
        failures: &outcome.failures,
    })
    .map_err(|e| Error::Config(e.to_string()))
}

fn fmt_num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:?}")
    }
}

pub fn write_best_csv(rows: &[BestRow], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["method", "dataset", "eta", "coverage_pct", "avg_width", "median_width", "seeds"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.dataset.clone(),
            fmt_num(r.eta),
            fmt_num(r.coverage_pct),
            fmt_num(r.avg_width),
            fmt_num(r.median_width),
            r.seeds.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes `summary.toml` and, when some method swept several rates,
/// `best_per_method.csv` into `dir`.
pub fn write_outputs(outcome: &SuiteOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let summary = dir.join("summary.toml");
    std::fs::write(&summary, summary_toml(outcome)?).map_err(|e| Error::io(&summary, e))?;
    written.push(summary);

    let rates: BTreeSet<(String, u64)> = outcome
        .runs
        .iter()
        .map(|r| (r.method.clone(), r.eta.to_bits()))
        .collect();
    let methods: BTreeSet<&str> = outcome.runs.iter().map(|r| r.method.as_str()).collect();
    if rates.len() > methods.len() {
        let best = dir.join("best_per_method.csv");
        write_best_csv(&best_per_method(&outcome.runs), &best)?;
        written.push(best);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SUITE: &str = r#"
alpha = 0.1
seeds = [0, 1]

[[datasets]]
name = "cp"
source = { kind = "changepoint" }

[[methods]]
kind = "eci"
etas = [0.1, 0.05]
c = 1.0

[[methods]]
kind = "ogd"
eta = 0.5

[[methods]]
kind = "aci"
"#;

    #[test]
    fn expands_cartesian_grid() {
        let s = ExperimentSuite::from_toml(SUITE).unwrap();
        let runs = s.expand().unwrap();
        assert_eq!(runs.len(), (2 + 1 + 4) * 2);
        assert_eq!(runs[0].key.method, CalibratorKind::Ogd);
        assert!(runs.iter().any(|r| r.key.method == CalibratorKind::Aci && r.key.eta == 0.005));
    }

    #[test]
    fn rejects_unknown_keys_and_eta_conflicts() {
        let bad = SUITE.replace("c = 1.0", "cc = 1.0");
        assert!(ExperimentSuite::from_toml(&bad).is_err());
        let bad = SUITE.replace("eta = 0.5", "eta = 0.5\netas = [1.0]");
        assert!(ExperimentSuite::from_toml(&bad).is_err());
    }

    #[test]
    fn empty_suite() {
        let mut s = ExperimentSuite::from_toml(SUITE).unwrap();
        s.seeds.clear();
        assert!(matches!(s.expand(), Err(Error::EmptySuite(_))));
    }

    #[test]
    fn duplicate_runs_rejected() {
        let text = SUITE.replace("etas = [0.1, 0.05]", "etas = [0.1, 0.1]");
        let s = ExperimentSuite::from_toml(&text).unwrap();
        assert!(matches!(s.expand(), Err(Error::Config(_))));
    }

    #[test]
    fn round_trips_through_toml() {
        let s = ExperimentSuite::from_toml(SUITE).unwrap();
        let back = ExperimentSuite::from_toml(&s.to_toml().unwrap()).unwrap();
        assert_eq!(s, back);
    }

    fn summary(method: &str, eta: f64, cov: f64, width: f64) -> RunSummary {
        RunSummary {
            method: method.into(),
            dataset: "d".into(),
            seed: 0,
            eta,
            alpha: 0.1,
            coverage_pct: cov,
            avg_width: width,
            median_width: width,
            long_run_gap: 0.0,
            steps: 10,
        }
    }

    #[test]
    fn best_rate_selection() {
        let rows = [
            summary("eci", 1.0, 88.0, 5.0),
            summary("eci", 0.5, 91.0, 6.0),
            summary("eci", 0.1, 89.0, 4.0),
        ];
        let best = best_per_method(&rows);
        assert_eq!(best.len(), 1);
        assert_eq!(best[0].eta, 0.1);
    }

    #[test]
    fn summary_keeps_infinities() {
        let out = SuiteOutcome {
            runs: vec![summary("aci", 0.1, 90.0, f64::INFINITY)],
            failures: vec![],
        };
        let text = summary_toml(&out).unwrap();
        assert!(text.contains("avg_width = inf"), "{text}");
    }
}
