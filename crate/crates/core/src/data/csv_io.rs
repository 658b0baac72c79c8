use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Dataset, TimeSeriesRecord};
use crate::error::{CctsError, Result};

/// Column mapping for the long-format CSV (`series_id,time,<features...>,label`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub id_column: String,
    pub time_column: String,
    pub label_column: String,
    /// Feature columns in order; `None` takes every other column.
    pub feature_columns: Option<Vec<String>>,
    /// Defaults to `max(label) + 1` (at least 2).
    pub class_count: Option<usize>,
    /// Fill missing values by interpolation / carry-forward instead of rejecting.
    pub impute: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            id_column: "series_id".into(),
            time_column: "time".into(),
            label_column: "label".into(),
            feature_columns: None,
            class_count: None,
            impute: true,
        }
    }
}

struct Row {
    time: f64,
    values: Vec<f64>,
    label: usize,
}

fn parse_value(field: &str) -> Option<f64> {
    let field = field.trim();
    if field.is_empty() || field.eq_ignore_ascii_case("nan") || field.eq_ignore_ascii_case("na") {
        return Some(f64::NAN);
    }
    field.parse().ok()
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CctsError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CctsError::Schema(format!("missing column '{name}' in {}", path.display()))
        })
    };
    let id_col = find(&schema.id_column)?;
    let time_col = find(&schema.time_column)?;
    let label_col = find(&schema.label_column)?;
    let feature_names: Vec<String> = match &schema.feature_columns {
        Some(cols) => cols.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| ![id_col, time_col, label_col].contains(i))
            .map(|(_, h)| h.to_string())
            .collect(),
    };
    if feature_names.is_empty() {
        return Err(CctsError::Schema("no feature columns".into()));
    }
    let feature_cols = feature_names
        .iter()
        .map(|n| find(n))
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Row>> = HashMap::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let at = |col: usize| rec.get(col).unwrap_or("");
        let id = at(id_col).to_string();
        let time: f64 = at(time_col).parse().map_err(|_| {
            CctsError::Validation(format!("row {}: bad time '{}'", line + 2, at(time_col)))
        })?;
        let label: usize = at(label_col).parse().map_err(|_| {
            CctsError::Validation(format!("row {}: bad label '{}'", line + 2, at(label_col)))
        })?;
        let values = feature_cols
            .iter()
            .map(|&c| {
                parse_value(at(c)).ok_or_else(|| {
                    CctsError::Validation(format!("row {}: bad value '{}'", line + 2, at(c)))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        groups
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push(Row {
                time,
                values,
                label,
            });
    }

    let d = feature_names.len();
    let mut records = Vec::with_capacity(order.len());
    for id in order {
        let mut rows = groups.remove(&id).unwrap_or_default();
        rows.sort_by(|a, b| a.time.total_cmp(&b.time));
        if rows.windows(2).any(|w| w[1].time <= w[0].time) {
            return Err(CctsError::Validation(format!(
                "series '{id}': duplicate or non-monotone timestamps"
            )));
        }
        let label = rows.last().map(|r| r.label).unwrap_or(0);
        let timestamps: Vec<f64> = rows.iter().map(|r| r.time).collect();
        let mut values = Array2::from_shape_vec(
            (rows.len(), d),
            rows.into_iter().flat_map(|r| r.values).collect(),
        )
        .expect("row widths are fixed by the schema");
        for (j, name) in feature_names.iter().enumerate() {
            let mut column: Vec<f64> = values.column(j).to_vec();
            if column.iter().any(|v| v.is_nan()) {
                if !schema.impute {
                    return Err(CctsError::Validation(format!(
                        "series '{id}': missing value in feature '{}' (imputation disabled)",
                        name
                    )));
                }
                impute(&timestamps, &mut column).map_err(|msg| {
                    CctsError::Validation(format!(
                        "series '{id}', feature '{}': {msg}",
                        feature_names[j]
                    ))
                })?;
                values.column_mut(j).assign(&ndarray::Array1::from(column));
            }
        }
        records.push(TimeSeriesRecord::new(id, timestamps, values, label)?);
    }

    let class_count = schema.class_count.unwrap_or_else(|| {
        records
            .iter()
            .map(|r| r.label + 1)
            .max()
            .unwrap_or(2)
            .max(2)
    });
    Dataset::new(records, feature_names, class_count)
}

/// Linear interpolation in time between observed neighbours, carry-forward
/// after the last observation. A gap before the first observation has
/// nothing to carry and is rejected.
fn impute(times: &[f64], column: &mut [f64]) -> std::result::Result<(), &'static str> {
    let observed: Vec<usize> = (0..column.len()).filter(|&i| !column[i].is_nan()).collect();
    let first = *observed.first().ok_or("no observed values")?;
    if first > 0 {
        return Err("missing values before the first observation");
    }
    for pair in observed.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for k in a + 1..b {
            let w = (times[k] - times[a]) / (times[b] - times[a]);
            column[k] = column[a] + w * (column[b] - column[a]);
        }
    }
    let last = *observed.last().expect("non-empty");
    let carried = column[last];
    for v in &mut column[last + 1..] {
        *v = carried;
    }
    Ok(())
}

/// Writes the dataset in the long CSV format read by [`load_csv`].
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CctsError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    let mut header = vec!["series_id".to_string(), "time".to_string()];
    header.extend(dataset.feature_names.iter().cloned());
    header.push("label".into());
    writer.write_record(&header)?;
    for record in &dataset.records {
        for (t, row) in record.timestamps.iter().zip(record.values.rows()) {
            let mut fields = vec![record.id.clone(), t.to_string()];
            fields.extend(row.iter().map(f64::to_string));
            fields.push(record.label.to_string());
            writer.write_record(&fields)?;
        }
    }
    writer.flush().map_err(|e| CctsError::io(path, e))?;
    Ok(())
}
