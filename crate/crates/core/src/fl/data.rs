//! Client datasets: synthetic Gaussian blobs and CSV ingestion.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::rng_for;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Shard {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Shard {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn push(&mut self, x: Vec<f64>, y: usize) {
        self.features.push(x);
        self.labels.push(y);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub dim: usize,
    pub classes: usize,
    /// One shard per client, in client-id order.
    pub shards: Vec<Shard>,
    pub test: Shard,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid data parameter: {0}")]
    Parameter(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: label {label} outside [0, {classes})")]
    Schema { line: u64, label: i64, classes: usize },
}

/// Parameters of the synthetic blob task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_client: usize,
    pub clients: usize,
    pub test_count: usize,
    /// Per-coordinate distance between class means, in noise standard deviations.
    pub separation: f64,
    /// Probability that a sample is drawn from the client's home class
    /// instead of a uniform class; 0 gives an IID split.
    pub heterogeneity: f64,
}

/// Gaussian blobs with unit noise around class means at `±separation/2`
/// per coordinate; the first two classes sit at opposite corners.
pub fn gen_synthetic_data(spec: &SyntheticSpec, seed: u64) -> Result<Dataset, DataError> {
    if spec.dim < 2 || spec.classes < 2 {
        return Err(DataError::Parameter(format!(
            "need dim >= 2 and classes >= 2, got dim {} and {} classes",
            spec.dim, spec.classes
        )));
    }
    if spec.per_client == 0 || spec.clients == 0 {
        return Err(DataError::Parameter(
            "per-client count and client count must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.heterogeneity) {
        return Err(DataError::Parameter(format!(
            "heterogeneity must lie in [0, 1], got {}",
            spec.heterogeneity
        )));
    }
    let mut rng = rng_for(seed, "synthetic-means", &[]);
    let half = spec.separation / 2.0;
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
    let first: Vec<f64> = (0..spec.dim).map(|_| if rng.random() { half } else { -half }).collect();
    means.push(first.iter().map(|v| -v).collect());
    means.push(first);
    for _ in 2..spec.classes {
        means.push((0..spec.dim).map(|_| if rng.random() { half } else { -half }).collect());
    }
    let sample = |rng: &mut rand_chacha::ChaCha20Rng, y: usize| -> Vec<f64> {
        means[y]
            .iter()
            .map(|m| {
                let e: f64 = StandardNormal.sample(rng);
                m + e
            })
            .collect()
    };
    let mut shards = Vec::with_capacity(spec.clients);
    for c in 0..spec.clients {
        let mut rng = rng_for(seed, "synthetic-client", &[c as u64]);
        let mut shard = Shard::default();
        for _ in 0..spec.per_client {
            let y = if rng.random::<f64>() < spec.heterogeneity {
                c % spec.classes
            } else {
                rng.random_range(0..spec.classes)
            };
            let x = sample(&mut rng, y);
            shard.push(x, y);
        }
        shards.push(shard);
    }
    let mut rng = rng_for(seed, "synthetic-test", &[]);
    let mut test = Shard::default();
    for i in 0..spec.test_count {
        let y = i % spec.classes;
        let x = sample(&mut rng, y);
        test.push(x, y);
    }
    Ok(Dataset {
        dim: spec.dim,
        classes: spec.classes,
        shards,
        test,
    })
}

/// Layout of a CSV dataset: feature columns followed by an integer label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub has_header: bool,
    pub classes: usize,
    /// Fraction of rows held out for testing (taken after shuffling).
    pub test_fraction: f64,
}

/// Reads `path`, min-max normalizes each feature to `[0, 1]`, and splits the
/// rows IID across `clients` shards after a seeded shuffle.
pub fn ingest_csv_dataset(
    path: &Path,
    schema: &CsvSchema,
    clients: usize,
    seed: u64,
) -> Result<Dataset, DataError> {
    if clients == 0 {
        return Err(DataError::Parameter("client count must be positive".into()));
    }
    if !(0.0..1.0).contains(&schema.test_fraction) {
        return Err(DataError::Parameter(format!(
            "test fraction must lie in [0, 1), got {}",
            schema.test_fraction
        )));
    }
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(true)
        .from_reader(file);
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::new();
    let mut width: Option<usize> = None;
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() < 2 {
            return Err(DataError::Parse {
                line,
                message: "need at least one feature column and a label".into(),
            });
        }
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(DataError::Parse {
                line,
                message: format!("expected {} columns, found {}", width.unwrap_or(0), record.len()),
            });
        }
        let mut values = Vec::with_capacity(record.len() - 1);
        for cell in record.iter().take(record.len() - 1) {
            let v: f64 = cell.trim().parse().map_err(|_| DataError::Parse {
                line,
                message: format!("non-numeric cell {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(DataError::Parse {
                    line,
                    message: format!("non-finite cell {cell:?}"),
                });
            }
            values.push(v);
        }
        let raw_label = record[record.len() - 1].trim();
        let label: i64 = raw_label.parse().map_err(|_| DataError::Parse {
            line,
            message: format!("non-integer label {raw_label:?}"),
        })?;
        if label < 0 || label as usize >= schema.classes {
            return Err(DataError::Schema {
                line,
                label,
                classes: schema.classes,
            });
        }
        rows.push((values, label as usize));
    }
    let dim = width.map_or(0, |w| w - 1);
    if rows.is_empty() {
        return Err(DataError::Parameter(format!("{} has no data rows", path.display())));
    }
    for k in 0..dim {
        let (lo, hi) = rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.0[k]), hi.max(r.0[k])));
        for r in rows.iter_mut() {
            r.0[k] = if hi > lo { (r.0[k] - lo) / (hi - lo) } else { 0.0 };
        }
    }
    rows.shuffle(&mut rng_for(seed, "csv-split", &[]));
    let n_test = (schema.test_fraction * rows.len() as f64).round() as usize;
    let mut test = Shard::default();
    let mut shards = vec![Shard::default(); clients];
    for (i, (x, y)) in rows.into_iter().enumerate() {
        if i < n_test {
            test.push(x, y);
        } else {
            shards[(i - n_test) % clients].push(x, y);
        }
    }
    Ok(Dataset {
        dim,
        classes: schema.classes,
        shards,
        test,
    })
}
