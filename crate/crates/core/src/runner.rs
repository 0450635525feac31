//! End-to-end runs: load or generate data, fit, score, evaluate, write.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use half::f16;
use serde::{Deserialize, Serialize};

use crate::data::{generate_data, load_csv, write_scores, Dataset};
use crate::detectors::{labels_for, Algorithm, DetectorModel, Hyperparams};
use crate::error::{Error, Result};
use crate::exec::{ExecConfig, Executor};
use crate::metrics::roc_auc;
use crate::quantize::QuantReport;
use crate::scalar::{Precision, Scalar};
use crate::tensor::{cast, DenseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        label_column: Option<String>,
    },
    Synthetic {
        n_train: usize,
        n_test: usize,
        d: usize,
        contamination: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algo: Algorithm,
    pub params: Hyperparams,
    pub source: DataSource,
    /// Storage and evaluation precision of the detector.
    pub precision: Precision,
    pub exec: ExecConfig,
    /// Where to write `index,score` rows.
    pub scores_path: Option<PathBuf>,
    /// Where to write the JSON summary.
    pub summary_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(algo: Algorithm, source: DataSource) -> Self {
        Self {
            algo,
            params: Hyperparams::default(),
            source,
            precision: Precision::P64,
            exec: ExecConfig::default(),
            scores_path: None,
            summary_path: None,
        }
    }
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load: f64,
    pub fit: f64,
    pub score: f64,
    pub evaluate: f64,
    pub write: f64,
    pub total: f64,
}

impl Timings {
    pub fn phase_sum(&self) -> f64 {
        self.load + self.fit + self.score + self.evaluate + self.write
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algo: Algorithm,
    pub hyperparams: Hyperparams,
    pub k: Option<usize>,
    pub precision: Precision,
    pub workers: usize,
    pub budget_bytes: u64,
    pub dataset: String,
    pub n_train: usize,
    pub n_test: usize,
    pub d: usize,
    pub threshold: f64,
    pub flagged: usize,
    pub timings: Timings,
    /// Fit and scoring tallies merged.
    pub quant: Option<QuantReport>,
    pub per_worker_peak_bytes: Vec<u64>,
    pub scores_path: Option<PathBuf>,
    pub auc_train: Option<f64>,
    pub auc_test: Option<f64>,
    /// Test scores when a test split exists, training scores otherwise.
    #[serde(skip)]
    pub scores: Vec<f64>,
}

impl RunSummary {
    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |a| format!("{a:.6}"));
        let _ = writeln!(s, "algo = {}", self.algo);
        if let Some(k) = self.k {
            let _ = writeln!(s, "k = {k}");
        }
        let _ = writeln!(s, "bins = {}", self.hyperparams.bins);
        let _ = writeln!(s, "contamination = {}", self.hyperparams.contamination);
        let _ = writeln!(
            s,
            "quantize = {}",
            self.hyperparams.quantize.map_or("off", |p| p.name())
        );
        let _ = writeln!(s, "precision = {}", self.precision);
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "memory_budget_bytes = {}", self.budget_bytes);
        let _ = writeln!(s, "dataset = {}", self.dataset);
        let _ = writeln!(s, "n_train = {}", self.n_train);
        let _ = writeln!(s, "n_test = {}", self.n_test);
        let _ = writeln!(s, "d = {}", self.d);
        let _ = writeln!(s, "threshold = {}", self.threshold);
        let _ = writeln!(s, "flagged = {}", self.flagged);
        let t = &self.timings;
        let _ = writeln!(
            s,
            "time_s = total {:.4} (load {:.4}, fit {:.4}, score {:.4}, evaluate {:.4}, write {:.4})",
            t.total, t.load, t.fit, t.score, t.evaluate, t.write
        );
        match &self.quant {
            Some(q) => {
                let _ = writeln!(
                    s,
                    "quant = {} entries, {} verified at {}, {} recomputed, bound {:.3e}, margin {:.3e}",
                    q.total_entries, q.verified_low, q.low_precision, q.recomputed_full, q.bound_used.bound, q.margin
                );
            }
            None => {
                let _ = writeln!(s, "quant = off");
            }
        }
        let peaks: Vec<String> = self.per_worker_peak_bytes.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "peak_bytes_per_worker = [{}]", peaks.join(", "));
        if let Some(p) = &self.scores_path {
            let _ = writeln!(s, "scores = {}", p.display());
        }
        let _ = writeln!(s, "auc_train = {}", opt(self.auc_train));
        let _ = writeln!(s, "auc_test = {}", opt(self.auc_test));
        s
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}

struct Fitted {
    train_scores: Vec<f64>,
    test_scores: Option<Vec<f64>>,
    threshold: f64,
    quant: Option<QuantReport>,
    fit_s: f64,
    score_s: f64,
}

fn fit_and_score<T: Scalar>(
    algo: Algorithm,
    params: &Hyperparams,
    train: &DenseMatrix<f64>,
    test: Option<&DenseMatrix<f64>>,
    exec: &Executor,
) -> Result<Fitted> {
    let t0 = Instant::now();
    let xt: DenseMatrix<T> = cast(train);
    let model = DetectorModel::fit(algo, &xt, params, exec)?;
    let fit_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let mut quant = model.fit_report().copied();
    let test_scores = match test {
        Some(x) => {
            let scored = model.score(&cast::<f64, T>(x), exec)?;
            quant = match (quant, scored.quant) {
                (Some(a), Some(b)) => Some(a.merge(&b)),
                (a, b) => a.or(b),
            };
            Some(scored.scores)
        }
        None => None,
    };
    Ok(Fitted {
        train_scores: model.decision_scores().to_vec(),
        test_scores,
        threshold: model.threshold(),
        quant,
        fit_s,
        score_s: t1.elapsed().as_secs_f64(),
    })
}

/// Fit on the training split, score the test split if there is one,
/// evaluate against labels when present and write the requested files.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    let start = Instant::now();
    let mut timings = Timings::default();

    let t = Instant::now();
    let (train, test): (Dataset, Option<Dataset>) = match &config.source {
        DataSource::Csv { path, label_column } => (load_csv(path, label_column.as_deref())?, None),
        DataSource::Synthetic {
            n_train,
            n_test,
            d,
            contamination,
            seed,
        } => {
            let (tr, te) = generate_data(*n_train, *n_test, *d, *contamination, *seed)?;
            (tr, (te.n() > 0).then_some(te))
        }
    };
    timings.load = t.elapsed().as_secs_f64();

    let exec = Executor::new(config.exec.clone())?;
    let test_x = test.as_ref().map(|t| &t.x);
    let f = match config.precision {
        Precision::P64 => fit_and_score::<f64>(config.algo, &config.params, &train.x, test_x, &exec)?,
        Precision::P32 => fit_and_score::<f32>(config.algo, &config.params, &train.x, test_x, &exec)?,
        Precision::P16 => fit_and_score::<f16>(config.algo, &config.params, &train.x, test_x, &exec)?,
    };
    timings.fit = f.fit_s;
    timings.score = f.score_s;

    let t = Instant::now();
    let auc = |scores: &[f64], ds: &Dataset| -> Result<Option<f64>> {
        match &ds.labels {
            Some(l) if l.contains(&0) && l.contains(&1) => roc_auc(scores, l).map(Some),
            _ => Ok(None),
        }
    };
    let auc_train = auc(&f.train_scores, &train)?;
    let auc_test = match (&test, &f.test_scores) {
        (Some(ds), Some(s)) => auc(s, ds)?,
        _ => None,
    };
    let scores = f.test_scores.unwrap_or(f.train_scores);
    let flagged = labels_for(&scores, f.threshold).iter().filter(|&&v| v == 1).count();
    timings.evaluate = t.elapsed().as_secs_f64();

    let t = Instant::now();
    if let Some(p) = &config.scores_path {
        write_scores(p, &scores)?;
    }
    let mut summary = RunSummary {
        algo: config.algo,
        hyperparams: config.params.clone(),
        k: config.algo.uses_neighbors().then(|| config.params.k_for(config.algo)),
        precision: config.precision,
        workers: exec.workers(),
        budget_bytes: config.exec.budget_bytes,
        dataset: train.name.clone(),
        n_train: train.n(),
        n_test: test.as_ref().map_or(0, Dataset::n),
        d: train.d(),
        threshold: f.threshold,
        flagged,
        timings: Timings::default(),
        quant: f.quant,
        per_worker_peak_bytes: exec.stats().per_worker_peak_bytes,
        scores_path: config.scores_path.clone(),
        auc_train,
        auc_test,
        scores,
    };
    timings.write = t.elapsed().as_secs_f64();
    timings.total = start.elapsed().as_secs_f64();
    summary.timings = timings;
    if let Some(p) = &config.summary_path {
        std::fs::write(p, summary.to_json()?)?;
    }
    Ok(summary)
}
