//! Dataset model, ingestion, normalization and the prefix-task view.

mod csv_io;
mod synthetic;
pub mod tasks;
mod ucr;

pub use csv_io::{load_csv, write_csv, CsvSchema};
pub use synthetic::{generate_synthetic_drift, ArSegment, DriftSpec};
pub use tasks::{make_prefix_tasks, task_similarity, PrefixTaskSequence, TaskOrder};
pub use ucr::load_ucr_tsv;

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{CctsError, Result};
use crate::rng::Rng;

/// One labeled, possibly irregularly sampled multivariate series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesRecord {
    pub id: String,
    pub timestamps: Vec<f64>,
    /// `len × d`, one row per observation.
    pub values: Array2<f64>,
    /// Class observed at the final timestamp.
    pub label: usize,
}

impl TimeSeriesRecord {
    pub fn new(
        id: impl Into<String>,
        timestamps: Vec<f64>,
        values: Array2<f64>,
        label: usize,
    ) -> Result<Self> {
        let record = Self {
            id: id.into(),
            timestamps,
            values,
            label,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.values.ncols()
    }

    /// First `len` observations, carrying the series label.
    pub fn prefix(&self, len: usize) -> Sample<'_> {
        let len = len.min(self.len());
        Sample {
            timestamps: &self.timestamps[..len],
            values: self.values.slice(s![..len, ..]),
            label: self.label,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.timestamps.is_empty() {
            return Err(CctsError::Validation(format!(
                "series '{}' is empty",
                self.id
            )));
        }
        if self.values.nrows() != self.timestamps.len() {
            return Err(CctsError::Validation(format!(
                "series '{}': {} value rows for {} timestamps",
                self.id,
                self.values.nrows(),
                self.timestamps.len()
            )));
        }
        if self.timestamps.iter().any(|t| !t.is_finite()) {
            return Err(CctsError::Validation(format!(
                "series '{}' has a non-finite timestamp",
                self.id
            )));
        }
        if self.timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CctsError::Validation(format!(
                "series '{}': timestamps are not strictly increasing",
                self.id
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(CctsError::Validation(format!(
                "series '{}' has non-finite values",
                self.id
            )));
        }
        Ok(())
    }
}

/// Borrowed prefix of a record: the unit the model consumes.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub timestamps: &'a [f64],
    pub values: ArrayView2<'a, f64>,
    pub label: usize,
}

impl Sample<'_> {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Identity,
    ZScore {
        mean: Vec<f64>,
        std: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<TimeSeriesRecord>,
    pub feature_names: Vec<String>,
    pub class_count: usize,
    pub normalization: Normalization,
}

impl Dataset {
    pub fn new(
        records: Vec<TimeSeriesRecord>,
        feature_names: Vec<String>,
        class_count: usize,
    ) -> Result<Self> {
        if class_count < 2 {
            return Err(CctsError::Validation(format!(
                "class_count must be at least 2, got {class_count}"
            )));
        }
        let d = feature_names.len();
        for record in &records {
            record.validate()?;
            if record.feature_count() != d {
                return Err(CctsError::Validation(format!(
                    "series '{}' has {} features, expected {d}",
                    record.id,
                    record.feature_count()
                )));
            }
            if record.label >= class_count {
                return Err(CctsError::Validation(format!(
                    "series '{}' label {} outside {class_count} classes",
                    record.id, record.label
                )));
            }
        }
        Ok(Self {
            records,
            feature_names,
            class_count,
            normalization: Normalization::Identity,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    pub fn min_length(&self) -> usize {
        self.records
            .iter()
            .map(TimeSeriesRecord::len)
            .min()
            .unwrap_or(0)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }
}

/// Z-score every feature with statistics fit on `fit_indices` only.
///
/// Zero-variance features map to zero. Statistics pool every observation of
/// every fit record (population variance).
pub fn normalize(dataset: &Dataset, fit_indices: &[usize]) -> Result<Dataset> {
    if fit_indices.is_empty() {
        return Err(CctsError::arg("normalize: fit set is empty"));
    }
    let d = dataset.feature_count();
    let mut count = 0usize;
    let mut sum = vec![0.0; d];
    for &idx in fit_indices {
        let record = dataset
            .records
            .get(idx)
            .ok_or_else(|| CctsError::arg(format!("normalize: fit index {idx} out of range")))?;
        for row in record.values.rows() {
            for (acc, v) in sum.iter_mut().zip(row) {
                *acc += v;
            }
            count += 1;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0; d];
    for &idx in fit_indices {
        for row in dataset.records[idx].values.rows() {
            for ((acc, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
    }
    let std: Vec<f64> = sq.iter().map(|s| (s / count as f64).sqrt()).collect();

    let mut out = dataset.clone();
    for record in &mut out.records {
        for mut row in record.values.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if is_degenerate(std[j], mean[j]) {
                    0.0
                } else {
                    (*v - mean[j]) / std[j]
                };
            }
        }
    }
    out.normalization = Normalization::ZScore { mean, std };
    Ok(out)
}

fn is_degenerate(std: f64, mean: f64) -> bool {
    std <= 1e-12 * mean.abs().max(1.0)
}

/// Disjoint index sets over a dataset's records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub validation: Vec<usize>,
}

impl Splits {
    /// Shuffled 6:2:2 train/test/validation split.
    pub fn shuffled(n: usize, rng: &mut Rng) -> Result<Self> {
        Self::by_ratio(n, [6, 2, 2], rng)
    }

    pub fn by_ratio(n: usize, ratio: [usize; 3], rng: &mut Rng) -> Result<Self> {
        let total: usize = ratio.iter().sum();
        if total == 0 || n < 3 {
            return Err(CctsError::arg(format!(
                "cannot split {n} records with ratio {ratio:?}"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let n_train = (n * ratio[0]).div_ceil(total).clamp(1, n - 2);
        let n_test = ((n * ratio[1]) / total).clamp(1, n - n_train - 1);
        Ok(Self {
            train: order[..n_train].to_vec(),
            test: order[n_train..n_train + n_test].to_vec(),
            validation: order[n_train + n_test..].to_vec(),
        })
    }

    /// Fold `fold` of a `folds`-way cross-validation: one fold is the test
    /// set, the next one validation, the rest training.
    pub fn cross_validation(n: usize, folds: usize, fold: usize, rng: &mut Rng) -> Result<Self> {
        if folds < 3 || fold >= folds || n < folds {
            return Err(CctsError::arg(format!(
                "invalid fold {fold} of {folds} over {n} records"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let fold_of = |pos: usize| pos * folds / n;
        let val_fold = (fold + 1) % folds;
        let mut splits = Self {
            train: Vec::new(),
            test: Vec::new(),
            validation: Vec::new(),
        };
        for (pos, idx) in order.into_iter().enumerate() {
            match fold_of(pos) {
                f if f == fold => splits.test.push(idx),
                f if f == val_fold => splits.validation.push(idx),
                _ => splits.train.push(idx),
            }
        }
        Ok(splits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn record(id: &str, values: Array2<f64>, label: usize) -> TimeSeriesRecord {
        let ts = (0..values.nrows()).map(|i| i as f64).collect();
        TimeSeriesRecord::new(id, ts, values, label).unwrap()
    }

    fn two_feature_dataset() -> Dataset {
        Dataset::new(
            vec![
                record("a", array![[0.0, 5.0], [2.0, 5.0]], 0),
                record("b", array![[10.0, 5.0], [30.0, 5.0]], 1),
            ],
            vec!["x".into(), "c".into()],
            2,
        )
        .unwrap()
    }

    #[test]
    fn normalize_maps_zero_two_to_unit_and_constants_to_zero() {
        let ds = two_feature_dataset();
        let out = normalize(&ds, &[0]).unwrap();
        assert_eq!(out.records[0].values.column(0).to_vec(), vec![-1.0, 1.0]);
        assert!(out
            .records
            .iter()
            .all(|r| r.values.column(1).iter().all(|&v| v == 0.0)));
        // Held-out record uses the fit statistics (mean 1, std 1).
        assert_eq!(out.records[1].values.column(0).to_vec(), vec![9.0, 29.0]);
    }

    #[test]
    fn second_normalization_is_identity() {
        let ds = two_feature_dataset();
        let once = normalize(&ds, &[0, 1]).unwrap();
        let twice = normalize(&once, &[0, 1]).unwrap();
        if let Normalization::ZScore { mean, std } = &twice.normalization {
            assert!(mean[0].abs() < 1e-12 && (std[0] - 1.0).abs() < 1e-12);
        }
        for (a, b) in once.records.iter().zip(&twice.records) {
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalize_rejects_empty_fit_set() {
        assert!(matches!(
            normalize(&two_feature_dataset(), &[]),
            Err(CctsError::Argument(_))
        ));
    }

    #[test]
    fn normalization_ignores_held_out_records() {
        let ds = two_feature_dataset();
        let mut altered = ds.clone();
        altered.records[1].values.fill(1e6);
        let a = normalize(&ds, &[0]).unwrap();
        let b = normalize(&altered, &[0]).unwrap();
        assert_eq!(a.normalization, b.normalization);
    }

    #[test]
    fn record_rejects_duplicate_timestamps() {
        let err =
            TimeSeriesRecord::new("s", vec![0.0, 1.0, 1.0], Array2::zeros((3, 1)), 0).unwrap_err();
        assert!(err.to_string().contains("'s'"));
    }

    #[test]
    fn splits_are_disjoint_and_cover() {
        let mut rng = crate::rng::substream(3, "split");
        let s = Splits::shuffled(50, &mut rng).unwrap();
        assert_eq!(
            (s.train.len(), s.test.len(), s.validation.len()),
            (30, 10, 10)
        );
        let mut all: Vec<usize> = s
            .train
            .iter()
            .chain(&s.test)
            .chain(&s.validation)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());

        for fold in 0..5 {
            let cv =
                Splits::cross_validation(50, 5, fold, &mut crate::rng::substream(3, "cv")).unwrap();
            assert_eq!(cv.test.len() + cv.validation.len() + cv.train.len(), 50);
            assert_eq!(cv.test.len(), 10);
        }
    }
}
