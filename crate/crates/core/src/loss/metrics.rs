use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::kernels::{circular_hue_distance, cosine_with_grad};
use super::types::LossError;
use crate::schema::{HsvSummary, VadVector};

fn check_lists(left: usize, right: usize) -> Result<(), LossError> {
    if left != right {
        return Err(LossError::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(LossError::EmptyInput);
    }
    Ok(())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-dimension absolute VAD errors on the 1-9 scale.
pub fn vad_errors(pred: &VadVector, target: &VadVector) -> [f64; 3] {
    let (p, t) = (pred.as_array(), target.as_array());
    [0, 1, 2].map(|k| (p[k] - t[k]).abs())
}

/// Per-channel absolute color errors: circular hue on `[0, 1)` (so at most
/// 0.5), saturation and value on `[0, 1]`.
pub fn color_errors(pred: &HsvSummary, target: &HsvSummary) -> [f64; 3] {
    [
        circular_hue_distance(pred.hue / 360.0, target.hue / 360.0),
        (pred.saturation - target.saturation).abs() / 100.0,
        (pred.value - target.value).abs() / 100.0,
    ]
}

fn mae3<T>(pred: &[T], target: &[T], errors: fn(&T, &T) -> [f64; 3]) -> Result<(f64, f64, f64), LossError> {
    check_lists(pred.len(), target.len())?;
    let mut sums = [0.0; 3];
    for (p, t) in pred.iter().zip(target) {
        for (s, e) in sums.iter_mut().zip(errors(p, t)) {
            *s += e;
        }
    }
    let n = pred.len() as f64;
    Ok((sums[0] / n, sums[1] / n, sums[2] / n))
}

/// Mean absolute valence, arousal and dominance errors.
pub fn vad_mae(pred: &[VadVector], target: &[VadVector]) -> Result<(f64, f64, f64), LossError> {
    mae3(pred, target, vad_errors)
}

/// Mean absolute hue (circular), saturation and value errors, all on unit
/// scales.
pub fn color_mae(pred: &[HsvSummary], target: &[HsvSummary]) -> Result<(f64, f64, f64), LossError> {
    mae3(pred, target, color_errors)
}

/// `100 * max(cos(image, text), 0)`.
pub fn clip_score(image_embedding: &[f64], text_embedding: &[f64]) -> Result<f64, LossError> {
    if image_embedding.len() != text_embedding.len() {
        return Err(LossError::DimensionMismatch {
            expected: image_embedding.len(),
            found: text_embedding.len(),
        });
    }
    for (i, v) in [image_embedding, text_embedding].into_iter().enumerate() {
        if v.is_empty() {
            return Err(LossError::EmptyInput);
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(LossError::NonFinite(i));
        }
        if v.iter().all(|x| *x == 0.0) {
            return Err(LossError::ZeroVector(i));
        }
    }
    Ok(100.0 * cosine_with_grad(image_embedding, text_embedding).0.max(0.0))
}

pub const METRIC_CLIP: &str = "CLIPScore";
pub const METRIC_VAD: [&str; 3] = ["VAD MAE (V)", "VAD MAE (A)", "VAD MAE (D)"];
pub const METRIC_COLOR: [&str; 2] = ["Color MAE (H)", "Color MAE (S)"];

/// Summary of one metric for one method over `n` samples. `std` is the
/// population standard deviation of the per-sample values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MetricRow {
    pub fn from_values(method: &str, metric: &str, values: &[f64]) -> Self {
        let m = mean(values);
        let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64;
        MetricRow {
            method: method.to_string(),
            metric: metric.to_string(),
            mean: m,
            std: var.sqrt(),
            n: values.len(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn extend(&mut self, other: MetricReport) {
        self.rows.extend(other.rows);
    }

    pub fn get(&self, method: &str, metric: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.method == method && r.metric == metric)
    }

    /// One line per (method, metric): `method metric mean std n`, tab separated.
    pub fn write_tsv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "method\tmetric\tmean\tstd\tn")?;
        for r in &self.rows {
            writeln!(out, "{}\t{}\t{:.6}\t{:.6}\t{}", r.method, r.metric, r.mean, r.std, r.n)?;
        }
        Ok(())
    }

    /// Metrics as rows, methods as columns, cells `mean ± std`.
    pub fn render_table(&self) -> String {
        let mut methods: Vec<&str> = Vec::new();
        let mut metrics: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
            if !metrics.contains(&r.metric.as_str()) {
                metrics.push(&r.metric);
            }
        }
        let mut grid: Vec<Vec<String>> = vec![std::iter::once("Metric".to_string())
            .chain(methods.iter().map(|m| m.to_string()))
            .collect()];
        for metric in &metrics {
            let mut line = vec![metric.to_string()];
            for method in &methods {
                line.push(match self.get(method, metric) {
                    Some(r) => format!("{:.4} ± {:.4}", r.mean, r.std),
                    None => "-".to_string(),
                });
            }
            grid.push(line);
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|c| grid.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in grid.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
                .collect();
            let _ = writeln!(out, "| {} |", cells.join(" | "));
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                let _ = writeln!(out, "|-{}-|", rule.join("-|-"));
            }
        }
        out
    }
}

/// One generated (or reference) sample: VAD on the 1-9 scale, hue in
/// degrees, saturation and value in 0-100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub id: String,
    pub valence: f64,
    pub arousal: f64,
    pub dominance: f64,
    pub hue: f64,
    pub saturation: f64,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_similarity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_embedding: Option<Vec<f64>>,
}

impl EvalSample {
    pub fn vad(&self) -> VadVector {
        VadVector::new(self.valence, self.arousal, self.dominance)
    }

    pub fn hsv(&self) -> HsvSummary {
        HsvSummary {
            hue: self.hue,
            saturation: self.saturation,
            value: self.value,
        }
    }

    fn clip(&self) -> Result<Option<f64>, LossError> {
        if let Some(s) = self.clip_similarity {
            return Ok(Some(s));
        }
        match (&self.image_embedding, &self.text_embedding) {
            (Some(i), Some(t)) => clip_score(i, t).map(Some),
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFile {
    pub method: String,
    pub samples: Vec<EvalSample>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("duplicate sample id {0:?} in {1} file")]
    DuplicateId(String, &'static str),
    #[error("prediction {0:?} has no target")]
    MissingTarget(String),
    #[error("sample {id:?} has {field} = {value} outside its range")]
    OutOfRange { id: String, field: &'static str, value: f64 },
    #[error("sample {id:?}: {source}")]
    Sample { id: String, source: LossError },
    #[error(transparent)]
    Loss(#[from] LossError),
}

fn index_by_id<'a>(samples: &'a [EvalSample], side: &'static str) -> Result<BTreeMap<&'a str, &'a EvalSample>, EvalError> {
    let mut map = BTreeMap::new();
    for s in samples {
        if map.insert(s.id.as_str(), s).is_some() {
            return Err(EvalError::DuplicateId(s.id.clone(), side));
        }
    }
    Ok(map)
}

fn check_sample(s: &EvalSample) -> Result<(), EvalError> {
    let fields = [
        ("valence", s.valence, 1.0, 9.0),
        ("arousal", s.arousal, 1.0, 9.0),
        ("dominance", s.dominance, 1.0, 9.0),
        ("hue", s.hue, 0.0, 360.0),
        ("saturation", s.saturation, 0.0, 100.0),
        ("value", s.value, 0.0, 100.0),
    ];
    for (field, value, lo, hi) in fields {
        if !(lo..=hi).contains(&value) {
            return Err(EvalError::OutOfRange {
                id: s.id.clone(),
                field,
                value,
            });
        }
    }
    Ok(())
}

/// Scores every prediction against the target with the same id. The
/// CLIPScore row comes from the predictions' `clip_similarity` or embedding
/// pair and is omitted when no prediction carries either.
pub fn evaluate(pred: &EvalFile, target: &EvalFile) -> Result<MetricReport, EvalError> {
    index_by_id(&pred.samples, "prediction")?;
    let targets = index_by_id(&target.samples, "target")?;
    if pred.samples.is_empty() {
        return Err(LossError::EmptyInput.into());
    }
    let mut vad: [Vec<f64>; 3] = Default::default();
    let mut color: [Vec<f64>; 2] = Default::default();
    let mut clip = Vec::new();
    for p in &pred.samples {
        let t = targets
            .get(p.id.as_str())
            .ok_or_else(|| EvalError::MissingTarget(p.id.clone()))?;
        check_sample(p)?;
        check_sample(t)?;
        for (series, e) in vad.iter_mut().zip(vad_errors(&p.vad(), &t.vad())) {
            series.push(e);
        }
        for (series, e) in color.iter_mut().zip(color_errors(&p.hsv(), &t.hsv())) {
            series.push(e);
        }
        if let Some(c) = p.clip().map_err(|source| EvalError::Sample {
            id: p.id.clone(),
            source,
        })? {
            clip.push(c);
        }
    }
    let method = pred.method.as_str();
    let mut rows = Vec::new();
    if !clip.is_empty() {
        rows.push(MetricRow::from_values(method, METRIC_CLIP, &clip));
    }
    for (name, values) in METRIC_VAD.iter().zip(&vad) {
        rows.push(MetricRow::from_values(method, name, values));
    }
    for (name, values) in METRIC_COLOR.iter().zip(&color) {
        rows.push(MetricRow::from_values(method, name, values));
    }
    Ok(MetricReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hsv(hue: f64, saturation: f64, value: f64) -> HsvSummary {
        HsvSummary { hue, saturation, value }
    }

    #[test]
    fn vad_endpoints() {
        let lo = vec![VadVector::new(1.0, 1.0, 1.0); 3];
        let hi = vec![VadVector::new(9.0, 9.0, 9.0); 3];
        assert_eq!(vad_mae(&lo, &lo).unwrap(), (0.0, 0.0, 0.0));
        assert_eq!(vad_mae(&lo, &hi).unwrap(), (8.0, 8.0, 8.0));
        assert_eq!(vad_mae(&lo, &hi[..2]), Err(LossError::LengthMismatch { left: 3, right: 2 }));
        assert_eq!(vad_mae(&[], &[]), Err(LossError::EmptyInput));
    }

    #[test]
    fn hue_wraps() {
        let (h, s, v) = color_mae(&[hsv(359.0, 50.0, 50.0)], &[hsv(1.0, 50.0, 50.0)]).unwrap();
        assert!((h - 2.0 / 360.0).abs() < 1e-12);
        assert_eq!((s, v), (0.0, 0.0));
    }

    #[test]
    fn population_std() {
        let row = MetricRow::from_values("m", "x", &[1.0, 3.0]);
        assert_eq!((row.mean, row.std, row.n), (2.0, 1.0, 2));
    }

    #[test]
    fn clip_score_range() {
        assert!((clip_score(&[1.0, 0.0], &[2.0, 0.0]).unwrap() - 100.0).abs() < 1e-12);
        assert_eq!(clip_score(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(clip_score(&[0.0, 0.0], &[1.0, 0.0]), Err(LossError::ZeroVector(0)));
    }
}
