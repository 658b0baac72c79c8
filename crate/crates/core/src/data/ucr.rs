//! Reader for the UCR archive's tab-separated layout: one univariate series
//! per line, class label first.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;

use super::{Dataset, TimeSeriesRecord};
use crate::error::{CctsError, Result};

/// Loads and concatenates UCR files (typically `_TRAIN.tsv` and `_TEST.tsv`).
/// Raw labels are mapped to `0..K` in ascending numeric order; timestamps are
/// the observation indices. Trailing NaN padding of variable-length series is
/// dropped.
pub fn load_ucr_tsv(paths: &[impl AsRef<Path>]) -> Result<Dataset> {
    let mut rows: Vec<(String, f64, Vec<f64>)> = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CctsError::io(path, e))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("ucr");
        for (line_no, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let mut fields = line.split(['\t', ',']).map(str::trim);
            let bad = |f: &str| {
                CctsError::Validation(format!(
                    "{}:{}: bad field '{f}'",
                    path.display(),
                    line_no + 1
                ))
            };
            let label_field = fields.next().unwrap_or("");
            let label: f64 = label_field.parse().map_err(|_| bad(label_field))?;
            let mut values = fields
                .map(|f| {
                    if f.eq_ignore_ascii_case("nan") {
                        Ok(f64::NAN)
                    } else {
                        f.parse().map_err(|_| bad(f))
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            while values.last().is_some_and(|v| v.is_nan()) {
                values.pop();
            }
            rows.push((format!("{stem}-{line_no}"), label, values));
        }
    }
    let mut classes: BTreeMap<i64, usize> = BTreeMap::new();
    for (_, label, _) in &rows {
        classes.entry(label.round() as i64).or_insert(0);
    }
    for (i, v) in classes.values_mut().enumerate() {
        *v = i;
    }
    let records = rows
        .into_iter()
        .map(|(id, label, values)| {
            let len = values.len();
            let ts = (0..len).map(|i| i as f64).collect();
            let values = Array2::from_shape_vec((len, 1), values).expect("single column");
            TimeSeriesRecord::new(id, ts, values, classes[&(label.round() as i64)])
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(records, vec!["value".into()], classes.len().max(2))
}
