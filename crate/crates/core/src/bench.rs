//! Benchmark suites over (algorithm × n × d × workers × precision) cells.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::detectors::{Algorithm, Hyperparams};
use crate::error::{Error, Result};
use crate::exec::ExecConfig;
use crate::runner::{run, DataSource, RunConfig, RunSummary};
use crate::scalar::Precision;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSuite {
    pub algos: Vec<Algorithm>,
    pub ns: Vec<usize>,
    pub ds: Vec<usize>,
    pub workers: Vec<usize>,
    pub precisions: Vec<Precision>,
    pub params: Hyperparams,
    pub contamination: f64,
    pub seed: u64,
    pub budget_bytes: u64,
    pub batch_size: Option<usize>,
    /// Each cell runs this many times; the fastest fit is reported.
    pub repeats: usize,
}

impl Default for BenchSuite {
    fn default() -> Self {
        Self {
            algos: vec![Algorithm::Knn, Algorithm::Hbos],
            ns: vec![10_000, 20_000, 40_000],
            ds: vec![10],
            workers: vec![1],
            precisions: vec![Precision::P64],
            params: Hyperparams::default(),
            contamination: 0.05,
            seed: 0,
            budget_bytes: ExecConfig::default().budget_bytes,
            batch_size: None,
            repeats: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchCell {
    pub algo: Algorithm,
    pub n: usize,
    pub d: usize,
    pub workers: usize,
    pub precision: Precision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub cell: BenchCell,
    /// Fastest fit time over the repeats, in seconds.
    pub fit_seconds: Option<f64>,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchSuite {
    pub fn cells(&self) -> Vec<BenchCell> {
        let mut out = Vec::new();
        for &algo in &self.algos {
            for &d in &self.ds {
                for &workers in &self.workers {
                    for &precision in &self.precisions {
                        for &n in &self.ns {
                            out.push(BenchCell {
                                algo,
                                n,
                                d,
                                workers,
                                precision,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    fn config(&self, cell: BenchCell) -> RunConfig {
        RunConfig {
            algo: cell.algo,
            params: self.params.clone(),
            source: DataSource::Synthetic {
                n_train: cell.n,
                n_test: 0,
                d: cell.d,
                contamination: self.contamination,
                seed: self.seed,
            },
            precision: cell.precision,
            exec: ExecConfig {
                workers: cell.workers,
                budget_bytes: self.budget_bytes,
                batch_size: self.batch_size,
                ..ExecConfig::default()
            },
            scores_path: None,
            summary_path: None,
        }
    }
}

/// Run every cell. A failing cell is recorded and the suite continues.
pub fn bench(suite: &BenchSuite) -> BenchReport {
    let rows = suite
        .cells()
        .into_iter()
        .map(|cell| {
            let cfg = suite.config(cell);
            let mut best: Option<RunSummary> = None;
            for _ in 0..suite.repeats.max(1) {
                match run(&cfg) {
                    Ok(s) => {
                        if best.as_ref().is_none_or(|b| s.timings.fit < b.timings.fit) {
                            best = Some(s);
                        }
                    }
                    Err(e) => {
                        return BenchRow {
                            cell,
                            fit_seconds: None,
                            summary: None,
                            error: Some(e.to_string()),
                        }
                    }
                }
            }
            BenchRow {
                cell,
                fit_seconds: best.as_ref().map(|s| s.timings.fit),
                summary: best,
                error: None,
            }
        })
        .collect();
    BenchReport { rows }
}

impl BenchReport {
    fn find(&self, algo: Algorithm, n: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.cell.algo == algo && r.cell.n == n)
    }

    pub fn fit_seconds(&self, algo: Algorithm, n: usize) -> Option<f64> {
        self.find(algo, n).and_then(|r| r.fit_seconds)
    }

    /// Fit time at `n_hi` over fit time at `n_lo` for the first matching cells.
    pub fn ratio(&self, algo: Algorithm, n_hi: usize, n_lo: usize) -> Option<f64> {
        Some(self.fit_seconds(algo, n_hi)? / self.fit_seconds(algo, n_lo)?)
    }

    /// One line per (algo, d, workers, precision) group: fit time at each n
    /// and its ratio to the smallest n.
    pub fn scaling_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<6} {:>4} {:>3} {:<4} {:>9} {:>11} {:>8}",
            "algo", "d", "W", "prec", "n", "fit_s", "ratio"
        );
        let mut base: Option<(BenchCell, f64)> = None;
        for r in &self.rows {
            let c = r.cell;
            let same_group = base.is_some_and(|(b, _)| {
                (b.algo, b.d, b.workers, b.precision) == (c.algo, c.d, c.workers, c.precision)
            });
            match r.fit_seconds {
                Some(t) => {
                    if !same_group {
                        base = Some((c, t));
                    }
                    let ratio = t / base.map_or(t, |(_, b)| b);
                    let _ = writeln!(
                        s,
                        "{:<6} {:>4} {:>3} {:<4} {:>9} {:>11.4} {:>8.2}",
                        c.algo.name(),
                        c.d,
                        c.workers,
                        c.precision.name(),
                        c.n,
                        t,
                        ratio
                    );
                }
                None => {
                    if !same_group {
                        base = None;
                    }
                    let _ = writeln!(
                        s,
                        "{:<6} {:>4} {:>3} {:<4} {:>9} error: {}",
                        c.algo.name(),
                        c.d,
                        c.workers,
                        c.precision.name(),
                        c.n,
                        r.error.as_deref().unwrap_or("?")
                    );
                }
            }
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}
