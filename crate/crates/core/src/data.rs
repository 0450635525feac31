//! Datasets: synthetic generation, CSV loading and score files.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// Half-width of the cube outliers are drawn from.
pub const OUTLIER_RANGE: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DenseMatrix<f64>,
    /// 1 marks an outlier.
    pub labels: Option<Vec<u8>>,
    pub name: String,
}

impl Dataset {
    pub fn new(x: DenseMatrix<f64>, labels: Option<Vec<u8>>, name: impl Into<String>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != x.n() {
                return Err(Error::DimensionMismatch(format!("{} labels for {} rows", l.len(), x.n())));
            }
            if let Some(bad) = l.iter().find(|&&v| v > 1) {
                return Err(Error::InvalidParameter(format!("label {bad} is not 0 or 1")));
            }
        }
        Ok(Self {
            x,
            labels,
            name: name.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.x.n()
    }

    pub fn d(&self) -> usize {
        self.x.d()
    }

    pub fn outliers(&self) -> usize {
        self.labels.as_ref().map_or(0, |l| l.iter().filter(|&&v| v == 1).count())
    }
}

/// Gaussian inliers and uniform outliers on `[−6, 6]^d`, with exactly
/// `⌊c·n⌋` outliers per split. Inliers come first. Both splits are drawn
/// from one seeded stream, train before test.
pub fn generate_data(n_train: usize, n_test: usize, d: usize, contamination: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(contamination > 0.0 && contamination < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "contamination {contamination} must lie in (0, 0.5)"
        )));
    }
    if d == 0 {
        return Err(Error::InvalidParameter("d must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = |n: usize, name: &str| {
        let n_out = (contamination * n as f64).floor() as usize;
        let n_in = n - n_out;
        let mut vals = Vec::with_capacity(n * d);
        for _ in 0..n_in * d {
            vals.push(rng.sample::<f64, _>(StandardNormal));
        }
        for _ in 0..n_out * d {
            vals.push(rng.random_range(-OUTLIER_RANGE..OUTLIER_RANGE));
        }
        let mut labels = vec![0u8; n_in];
        labels.resize(n, 1);
        Dataset::new(DenseMatrix::from_vec(n, d, vals)?, Some(labels), name)
    };
    let train = split(n_train, "synthetic-train")?;
    let test = split(n_test, "synthetic-test")?;
    Ok((train, test))
}

/// Read a numeric CSV with a header row. Error locations are 1-based file
/// line and column.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let width = headers.len();
    let label_idx = match label_column {
        Some(name) => Some(headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            row: 1,
            col: 0,
            msg: format!("label column '{name}' not found in header"),
        })?),
        None => None,
    };
    let d = width - usize::from(label_idx.is_some());
    let mut vals = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(n + 2, |p| p.line() as usize);
        if rec.len() != width {
            return Err(Error::Parse {
                row: line,
                col: rec.len().min(width) + 1,
                msg: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                col: j + 1,
                msg: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    col: j + 1,
                    msg: format!("'{cell}' is not finite"),
                });
            }
            if Some(j) == label_idx {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Parse {
                        row: line,
                        col: j + 1,
                        msg: format!("label '{cell}' is not 0 or 1"),
                    });
                }
                labels.push(v as u8);
            } else {
                vals.push(v);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty(format!("{} has no data rows", path.display())));
    }
    let name = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    Dataset::new(DenseMatrix::from_vec(n, d, vals)?, label_idx.map(|_| labels), name)
}

/// Write features as `x0..x{d-1}` plus a `label` column when labels exist.
pub fn write_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..ds.d()).map(|j| format!("x{j}")).collect();
    if ds.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = ds.x.row(i).iter().map(f64::to_string).collect();
        if let Some(l) = &ds.labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Write `index,score` rows. Scores use the shortest decimal that parses
/// back to the same `f64`.
pub fn write_scores(path: impl AsRef<Path>, scores: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "score"])?;
    for (i, s) in scores.iter().enumerate() {
        w.write_record([i.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(out.len() + 2, |p| p.line() as usize);
        let idx: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
            row: line,
            col: 1,
            msg: "bad index".into(),
        })?;
        if idx != out.len() {
            return Err(Error::Parse {
                row: line,
                col: 1,
                msg: format!("expected index {}, found {idx}", out.len()),
            });
        }
        let s: f64 = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
            row: line,
            col: 2,
            msg: "bad score".into(),
        })?;
        out.push(s);
    }
    Ok(out)
}
