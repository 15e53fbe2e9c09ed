//! Fixed-length per-sequence statistics of smoothed displacement fields, their CSV
//! form, and a baseline classifier.
//!
//! For each descriptor `i` with kernel `k_i(p) = exp(-gamma |p - D_i|^2)`, over all
//! valid points of all fields:
//! - `mean_r`: `sum k_i r / sum k_i`
//! - `max_r`: `max k_i r`
//! - `peak_frac`: index of the field with the largest kernel-weighted mean magnitude,
//!   divided by `T - 1` (0 for a single field)
//! - `circ_mean`, `circ_var`: circular mean and `1 - R` of the angles, weighted by `k_i r`
//!
//! followed by the unweighted global mean and max of `r`. Magnitudes and angles are
//! recomputed from the Cartesian smoothed fields.

pub mod classify;

use std::io::{Read, Write};

use thiserror::Error;

use crate::flow::DisplacementField;
use crate::smoothing::{wrap_angle, MuscleDescriptorSet};

pub use classify::{
    cross_validate, stratified_folds, ClassifyError, CrossValidation, SoftmaxConfig, SoftmaxModel,
};

pub const FEATURE_VERSION: u32 = 1;
pub const STATS_PER_DESCRIPTOR: [&str; 5] = ["mean_r", "max_r", "peak_frac", "circ_mean", "circ_var"];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("a sequence needs at least one field")]
    EmptySequence,
    #[error("field {0} has a different point count")]
    LengthMismatch(usize),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("features csv line {line}: {detail}")]
    Schema { line: u64, detail: String },
}

/// Column names in order: five per descriptor, then the two global statistics.
pub fn feature_names(descriptors: &MuscleDescriptorSet) -> Vec<String> {
    let mut names: Vec<String> = descriptors
        .descriptors()
        .iter()
        .flat_map(|d| STATS_PER_DESCRIPTOR.iter().map(move |s| format!("{}_{s}", d.name)))
        .collect();
    names.push("global_mean_r".into());
    names.push("global_max_r".into());
    names
}

/// `5 m + 2` statistics in [`feature_names`] order.
pub fn extract_features(
    fields: &[DisplacementField],
    descriptors: &MuscleDescriptorSet,
) -> Result<Vec<f64>, FeatureError> {
    let first = fields.first().ok_or(FeatureError::EmptySequence)?;
    let n = first.len();
    if let Some(i) = fields.iter().position(|f| f.len() != n) {
        return Err(FeatureError::LengthMismatch(i));
    }
    let points = &first.points;
    let t_count = fields.len();
    let mut out = Vec::with_capacity(5 * descriptors.len() + 2);

    for i in 0..descriptors.len() {
        let kernel: Vec<f64> = points.iter().map(|p| descriptors.kernel(i, p)).collect();
        let (mut wsum, mut rsum, mut max_r) = (0.0, 0.0, 0.0f64);
        let (mut c, mut s, mut w_angle) = (0.0, 0.0, 0.0);
        let mut best = (0usize, f64::NEG_INFINITY);
        for (t, f) in fields.iter().enumerate() {
            let (mut fw, mut fr) = (0.0, 0.0);
            for j in 0..n {
                if !f.valid[j] {
                    continue;
                }
                let d = f.displacements[j];
                let r = d.norm();
                let k = kernel[j];
                fw += k;
                fr += k * r;
                max_r = max_r.max(k * r);
                c += k * d.x;
                s += k * d.y;
                w_angle += k * r;
            }
            wsum += fw;
            rsum += fr;
            let mean_t = if fw > 0.0 { fr / fw } else { 0.0 };
            if mean_t > best.1 {
                best = (t, mean_t);
            }
        }
        out.push(if wsum > 0.0 { rsum / wsum } else { 0.0 });
        out.push(max_r);
        out.push(if t_count > 1 { best.0 as f64 / (t_count - 1) as f64 } else { 0.0 });
        if w_angle > 0.0 {
            let resultant = c.hypot(s) / w_angle;
            out.push(wrap_angle(s.atan2(c)));
            out.push((1.0 - resultant).max(0.0));
        } else {
            out.push(0.0);
            out.push(0.0);
        }
    }

    let (mut total, mut count, mut max_r) = (0.0, 0usize, 0.0f64);
    for f in fields {
        for (d, &ok) in f.displacements.iter().zip(&f.valid) {
            if ok {
                let r = d.norm();
                total += r;
                count += 1;
                max_r = max_r.max(r);
            }
        }
    }
    out.push(if count > 0 { total / count as f64 } else { 0.0 });
    out.push(max_r);
    Ok(out)
}

/// One `features.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub sequence: String,
    pub values: Vec<f64>,
    pub label: Option<String>,
}

/// Header `sequence,<names>,label`, preceded by `# ` comment lines.
pub fn write_features_csv<W: Write>(
    mut out: W,
    names: &[String],
    rows: &[FeatureRow],
    comments: &[String],
) -> Result<(), FeatureError> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["sequence".to_string()];
    header.extend(names.iter().cloned());
    header.push("label".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.sequence.clone()];
        rec.extend(r.values.iter().map(|v| v.to_string()));
        rec.push(r.label.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Returns the statistic names and rows; an empty label cell reads as `None`.
pub fn read_features_csv<R: Read>(input: R) -> Result<(Vec<String>, Vec<FeatureRow>), FeatureError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = r.headers()?.clone();
    let cols = header.len();
    if cols < 2 || &header[0] != "sequence" || &header[cols - 1] != "label" {
        return Err(FeatureError::Schema {
            line: 1,
            detail: "header must start with `sequence` and end with `label`".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(1).take(cols - 2).map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let values = (1..cols - 1)
            .map(|i| {
                rec[i].parse::<f64>().map_err(|_| FeatureError::Schema {
                    line,
                    detail: format!("bad value `{}` in column {}", &rec[i], &header[i]),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let label = &rec[cols - 1];
        rows.push(FeatureRow {
            sequence: rec[0].to_string(),
            values,
            label: (!label.is_empty()).then(|| label.to_string()),
        });
    }
    Ok((names, rows))
}
