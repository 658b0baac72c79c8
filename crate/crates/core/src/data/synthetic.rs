//! Piecewise AR(1) series whose class-conditional means drift across stages.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, TimeSeriesRecord};
use crate::error::{CctsError, Result};
use crate::rng::substream;

/// AR(1) dynamics of one (class, stage) cell:
/// `x_m = mean + coefficient * (x_{m-1} - mean) + noise * eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArSegment {
    pub mean: Vec<f64>,
    #[serde(default)]
    pub coefficient: f64,
    #[serde(default)]
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub class_count: usize,
    pub series_count: usize,
    pub length: usize,
    pub feature_count: usize,
    /// Inclusive 1-based end index of each stage; the last must equal `length`.
    pub stage_ends: Vec<usize>,
    /// `segments[class][stage]`.
    pub segments: Vec<Vec<ArSegment>>,
    /// Gaps between consecutive timestamps are uniform in `[gap_min, gap_max]`.
    pub gap_min: f64,
    pub gap_max: f64,
}

impl DriftSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(CctsError::Spec(m));
        if self.class_count < 2 {
            return err(format!(
                "class_count must be >= 2, got {}",
                self.class_count
            ));
        }
        if self.series_count == 0 || self.length == 0 || self.feature_count == 0 {
            return err("series_count, length and feature_count must be positive".into());
        }
        let covers = !self.stage_ends.is_empty()
            && self.stage_ends[0] >= 1
            && self.stage_ends.windows(2).all(|w| w[0] < w[1])
            && self.stage_ends.last() == Some(&self.length);
        if !covers {
            return err(format!(
                "stage boundaries {:?} do not cover 1..{}",
                self.stage_ends, self.length
            ));
        }
        if self.segments.len() != self.class_count {
            return err(format!("expected {} classes of segments", self.class_count));
        }
        for (c, stages) in self.segments.iter().enumerate() {
            if stages.len() != self.stage_ends.len() {
                return err(format!(
                    "class {c}: expected {} stage segments",
                    self.stage_ends.len()
                ));
            }
            for (s, seg) in stages.iter().enumerate() {
                if seg.mean.len() != self.feature_count {
                    return err(format!(
                        "class {c} stage {s}: mean has {} entries",
                        seg.mean.len()
                    ));
                }
                if !(seg.noise >= 0.0)
                    || !seg.coefficient.is_finite()
                    || seg.mean.iter().any(|m| !m.is_finite())
                {
                    return err(format!("class {c} stage {s}: invalid AR parameters"));
                }
            }
        }
        if !(self.gap_min > 0.0) || !(self.gap_max >= self.gap_min) || !self.gap_max.is_finite() {
            return err(format!(
                "invalid gap range [{}, {}]",
                self.gap_min, self.gap_max
            ));
        }
        Ok(())
    }

    fn stage_of(&self, m: usize) -> usize {
        self.stage_ends
            .iter()
            .position(|&end| m < end)
            .expect("validated coverage")
    }
}

/// Deterministic in `(spec, seed)`. Labels cycle through the classes so the
/// dataset is balanced.
pub fn generate_synthetic_drift(spec: &DriftSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = substream(seed, "synthetic-drift");
    let d = spec.feature_count;
    let mut records = Vec::with_capacity(spec.series_count);
    for n in 0..spec.series_count {
        let label = n % spec.class_count;
        let mut timestamps = Vec::with_capacity(spec.length);
        let mut values = Array2::zeros((spec.length, d));
        let mut t = 0.0;
        for m in 0..spec.length {
            if m > 0 {
                t += if spec.gap_max > spec.gap_min {
                    rng.random_range(spec.gap_min..=spec.gap_max)
                } else {
                    spec.gap_min
                };
            }
            timestamps.push(t);
            let seg = &spec.segments[label][spec.stage_of(m)];
            for j in 0..d {
                let eps: f64 = rng.sample(StandardNormal);
                let prev = if m == 0 {
                    seg.mean[j]
                } else {
                    values[[m - 1, j]]
                };
                values[[m, j]] =
                    seg.mean[j] + seg.coefficient * (prev - seg.mean[j]) + seg.noise * eps;
            }
        }
        records.push(TimeSeriesRecord::new(
            format!("syn-{n:05}"),
            timestamps,
            values,
            label,
        )?);
    }
    let names = (0..d).map(|j| format!("feature_{j}")).collect();
    Dataset::new(records, names, spec.class_count)
}
