//! Affective-space analytics: per-model VAD aggregation, emotion resolution,
//! 2-D density grids over VAD planes and per-emotion summaries.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circular::CircularMean;
use crate::schema::{AnnotationRecord, ColorProportion, EmotionLabel, ModelVad, VadVector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AffectError {
    #[error("no model scores to aggregate")]
    NoModels,
    #[error("no model reports {0}")]
    MissingDimension(&'static str),
    #[error("weights of models reporting {0} sum to zero")]
    ZeroWeight(&'static str),
    #[error("weight for model {model} is negative or not finite: {weight}")]
    InvalidWeight { model: String, weight: f64 },
    #[error("neither model labels nor a human label were supplied")]
    NoSources,
    #[error("density grid needs at least 2 bins per axis, got {0}")]
    TooFewBins(usize),
    #[error("smoothing sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
}

/// Per-model aggregation weights; models without an explicit entry use
/// `default_weight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregationWeights {
    pub default_weight: f64,
    #[serde(default)]
    pub per_model: BTreeMap<String, f64>,
}

impl Default for AggregationWeights {
    fn default() -> Self {
        Self::equal()
    }
}

impl AggregationWeights {
    pub fn equal() -> Self {
        AggregationWeights {
            default_weight: 1.0,
            per_model: BTreeMap::new(),
        }
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        AggregationWeights {
            default_weight: 1.0,
            per_model: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn weight(&self, model: &str) -> f64 {
        self.per_model.get(model).copied().unwrap_or(self.default_weight)
    }
}

/// Per-dimension weighted mean over the models that report each dimension.
pub fn aggregate_vad(
    per_model: &BTreeMap<String, ModelVad>,
    weights: &AggregationWeights,
) -> Result<VadVector, AffectError> {
    if per_model.is_empty() {
        return Err(AffectError::NoModels);
    }
    let mut sums = [0.0; 3];
    let mut totals = [0.0; 3];
    for (model, vad) in per_model {
        let w = weights.weight(model);
        if !(w.is_finite() && w >= 0.0) {
            return Err(AffectError::InvalidWeight {
                model: model.clone(),
                weight: w,
            });
        }
        let dims = [Some(vad.valence), Some(vad.arousal), vad.dominance];
        for (k, value) in dims.into_iter().enumerate() {
            if let Some(x) = value {
                sums[k] += w * x;
                totals[k] += w;
            }
        }
    }
    const NAMES: [&str; 3] = ["valence", "arousal", "dominance"];
    let inputs_in_range = per_model.values().all(|v| {
        [Some(v.valence), Some(v.arousal), v.dominance]
            .into_iter()
            .flatten()
            .all(|x| (VadVector::MIN..=VadVector::MAX).contains(&x))
    });
    let mut out = [0.0; 3];
    for k in 0..3 {
        let reported = per_model.values().any(|v| k < 2 || v.dominance.is_some());
        if !reported {
            return Err(AffectError::MissingDimension(NAMES[k]));
        }
        if totals[k] <= 0.0 {
            return Err(AffectError::ZeroWeight(NAMES[k]));
        }
        let mean = sums[k] / totals[k];
        debug_assert!(
            !inputs_in_range || (VadVector::MIN - 1e-9..=VadVector::MAX + 1e-9).contains(&mean),
            "weighted mean of in-range scores left the scale"
        );
        out[k] = mean.clamp(VadVector::MIN, VadVector::MAX);
    }
    Ok(VadVector::new(out[0], out[1], out[2]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Human,
    ModelConsensus,
    Disputed,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Human => "human",
            Provenance::ModelConsensus => "model-consensus",
            Provenance::Disputed => "disputed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ResolvedEmotion {
    pub label: EmotionLabel,
    pub provenance: Provenance,
}

pub fn resolve_emotion(
    per_model: &BTreeMap<String, EmotionLabel>,
    human_override: Option<EmotionLabel>,
) -> Result<ResolvedEmotion, AffectError> {
    if let Some(label) = human_override {
        return Ok(ResolvedEmotion {
            label,
            provenance: Provenance::Human,
        });
    }
    let mut labels = per_model.values();
    let first = *labels.next().ok_or(AffectError::NoSources)?;
    if labels.all(|l| *l == first) {
        Ok(ResolvedEmotion {
            label: first,
            provenance: Provenance::ModelConsensus,
        })
    } else {
        Ok(ResolvedEmotion {
            label: EmotionLabel::Unknown,
            provenance: Provenance::Disputed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Plane {
    VA,
    VD,
    AD,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::VA, Plane::VD, Plane::AD];

    pub fn as_str(self) -> &'static str {
        match self {
            Plane::VA => "VA",
            Plane::VD => "VD",
            Plane::AD => "AD",
        }
    }

    /// `(x, y)` coordinates of a point on this plane.
    pub fn project(self, p: &VadVector) -> (f64, f64) {
        match self {
            Plane::VA => (p.valence, p.arousal),
            Plane::VD => (p.valence, p.dominance),
            Plane::AD => (p.arousal, p.dominance),
        }
    }
}

impl std::str::FromStr for Plane {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "VA" => Ok(Plane::VA),
            "VD" => Ok(Plane::VD),
            "AD" => Ok(Plane::AD),
            other => Err(format!("unknown plane {other:?}; expected VA, VD or AD")),
        }
    }
}

/// Normalised 2-D histogram over a VAD plane. `cells` is row-major with
/// row index along the plane's second axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub plane: Plane,
    pub bins_x: usize,
    pub bins_y: usize,
    pub extent: [f64; 4],
    pub method: String,
    pub smoothing_sigma: Option<f64>,
    pub count: usize,
    pub empty: bool,
    pub cells: Vec<f64>,
}

pub const DEFAULT_DENSITY_BINS: usize = 64;
pub const DEFAULT_SMOOTHING_SIGMA: f64 = 1.0;

/// Bin of `x` on `[1, 9]` split into `bins` equal cells; the upper edge
/// belongs to the last cell and out-of-scale values clamp to the border.
pub fn bin_index(x: f64, bins: usize) -> usize {
    let t = (x - VadVector::MIN) / (VadVector::MAX - VadVector::MIN);
    let i = (t * bins as f64).floor();
    if i.is_nan() || i < 0.0 {
        0
    } else {
        (i as usize).min(bins - 1)
    }
}

pub fn density_map(
    points: &[VadVector],
    plane: Plane,
    bins: usize,
    smoothing_sigma: Option<f64>,
) -> Result<DensityGrid, AffectError> {
    if bins < 2 {
        return Err(AffectError::TooFewBins(bins));
    }
    if let Some(s) = smoothing_sigma {
        if !(s.is_finite() && s > 0.0) {
            return Err(AffectError::InvalidSigma(s));
        }
    }
    let mut counts = vec![0.0; bins * bins];
    for p in points {
        let (x, y) = plane.project(p);
        counts[bin_index(y, bins) * bins + bin_index(x, bins)] += 1.0;
    }
    let mut grid = DensityGrid {
        plane,
        bins_x: bins,
        bins_y: bins,
        extent: [VadVector::MIN, VadVector::MAX, VadVector::MIN, VadVector::MAX],
        method: if smoothing_sigma.is_some() {
            "gaussian-smoothed-histogram".into()
        } else {
            "histogram".into()
        },
        smoothing_sigma,
        count: points.len(),
        empty: points.is_empty(),
        cells: counts,
    };
    if grid.empty {
        return Ok(grid);
    }
    if let Some(sigma) = smoothing_sigma {
        grid.cells = smooth(&grid.cells, bins, bins, sigma);
    }
    let total: f64 = grid.cells.iter().sum();
    for c in grid.cells.iter_mut() {
        *c /= total;
    }
    Ok(grid)
}

fn smooth(cells: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut acc = 0.0;
                for (k, kw) in kernel.iter().enumerate() {
                    let off = k as i64 - radius;
                    let (sx, sy) = if horizontal { (x + off, y) } else { (x, y + off) };
                    // mass falling outside the extent is dropped, then
                    // recovered by the final renormalisation
                    if sx >= 0 && sy >= 0 && sx < w as i64 && sy < h as i64 {
                        acc += kw * src[sy as usize * w + sx as usize];
                    }
                }
                out[y as usize * w + x as usize] = acc;
            }
        }
        out
    };
    let tmp = pass(cells, true);
    pass(&tmp, false)
}

impl DensityGrid {
    pub fn cell(&self, x: usize, y: usize) -> f64 {
        self.cells[y * self.bins_x + x]
    }

    /// `(x, y)` of the largest cell; first in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, c) in self.cells.iter().enumerate() {
            if *c > self.cells[best] {
                best = i;
            }
        }
        (best % self.bins_x, best / self.bins_x)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid serialises")
    }

    /// Renders the grid as a PNG heatmap, `scale` pixels per cell, with the
    /// second axis increasing upwards.
    pub fn write_heatmap_png(&self, path: &Path, scale: u32) -> Result<(), image::ImageError> {
        let scale = scale.max(1);
        let max = self.cells.iter().copied().fold(0.0, f64::max);
        let (w, h) = (self.bins_x as u32 * scale, self.bins_y as u32 * scale);
        let img = image::RgbImage::from_fn(w, h, |px, py| {
            let cx = (px / scale) as usize;
            let cy = self.bins_y - 1 - (py / scale) as usize;
            let t = if max > 0.0 { self.cell(cx, cy) / max } else { 0.0 };
            image::Rgb(heat_color(t))
        });
        img.save_with_format(path, image::ImageFormat::Png)
    }
}

/// Dark blue through teal and yellow for `t` in `[0, 1]`.
fn heat_color(t: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 4] = [
        [20.0, 16.0, 68.0],
        [38.0, 130.0, 142.0],
        [110.0, 206.0, 88.0],
        [253.0, 231.0, 37.0],
    ];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (STOPS[i][c] + f * (STOPS[i + 1][c] - STOPS[i][c])).round() as u8;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmotionSummary {
    pub count: usize,
    /// Circular mean hue in degrees over records with nonzero saturation.
    pub hue_mean: Option<f64>,
    /// Circular standard deviation of hue in degrees.
    pub hue_std: Option<f64>,
    pub saturation_mean: f64,
    pub saturation_std: f64,
    pub value_mean: f64,
    pub value_std: f64,
    pub vad_mean: Option<VadVector>,
    pub vad_count: usize,
    pub color_proportion_mean: ColorProportion,
}

/// One summary per emotion present, keyed in label order.
pub fn per_emotion_summary(records: &[AnnotationRecord]) -> BTreeMap<EmotionLabel, EmotionSummary> {
    let mut groups: BTreeMap<EmotionLabel, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.emotion).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(label, group)| (label, summarize(&group)))
        .collect()
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn summarize(group: &[&AnnotationRecord]) -> EmotionSummary {
    let mut hue = CircularMean::new();
    for r in group {
        if r.average_color.saturation > 0.0 {
            hue.push(r.average_color.hue, 1.0);
        }
    }
    let (saturation_mean, saturation_std) = mean_std(group.iter().map(|r| r.average_color.saturation));
    let (value_mean, value_std) = mean_std(group.iter().map(|r| r.average_color.value));
    let vads: Vec<VadVector> = group.iter().filter_map(|r| r.effective_vad()).collect();
    let vad_mean = if vads.is_empty() {
        None
    } else {
        let n = vads.len() as f64;
        Some(VadVector::new(
            vads.iter().map(|v| v.valence).sum::<f64>() / n,
            vads.iter().map(|v| v.arousal).sum::<f64>() / n,
            vads.iter().map(|v| v.dominance).sum::<f64>() / n,
        ))
    };
    let mut color = ColorProportion::default();
    for r in group {
        for (k, slot) in color.0.iter_mut().enumerate() {
            *slot += r.color_proportion.0[k];
        }
    }
    for slot in color.0.iter_mut() {
        *slot /= group.len() as f64;
    }
    EmotionSummary {
        count: group.len(),
        hue_mean: hue.mean_degrees(),
        hue_std: hue.std_degrees(),
        saturation_mean,
        saturation_std,
        value_mean,
        value_std,
        vad_mean,
        vad_count: vads.len(),
        color_proportion_mean: color,
    }
}

/// Flat tab-separated table, one row per emotion.
pub fn write_summary_table<W: Write>(
    out: &mut W,
    summaries: &BTreeMap<EmotionLabel, EmotionSummary>,
) -> std::io::Result<()> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "NA".into());
    write!(out, "emotion\tcount\thue_mean\thue_std\tsat_mean\tsat_std\tval_mean\tval_std\tvalence\tarousal\tdominance")?;
    for c in crate::schema::ColorName::ALL {
        write!(out, "\t{c}")?;
    }
    writeln!(out)?;
    for (label, s) in summaries {
        write!(
            out,
            "{label}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}",
            s.count,
            opt(s.hue_mean),
            opt(s.hue_std),
            s.saturation_mean,
            s.saturation_std,
            s.value_mean,
            s.value_std,
            opt(s.vad_mean.map(|v| v.valence)),
            opt(s.vad_mean.map(|v| v.arousal)),
            opt(s.vad_mean.map(|v| v.dominance)),
        )?;
        for (_, v) in s.color_proportion_mean.iter() {
            write!(out, "\t{v:.6}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn models(entries: &[(&str, ModelVad)]) -> BTreeMap<String, ModelVad> {
        entries.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn identical_models_aggregate_to_themselves() {
        let m = models(&[("a", ModelVad::full(8.0, 7.0, 7.0)), ("b", ModelVad::full(8.0, 7.0, 7.0))]);
        assert_eq!(aggregate_vad(&m, &AggregationWeights::equal()).unwrap(), VadVector::new(8.0, 7.0, 7.0));
    }

    #[test]
    fn weighted_means() {
        let m = models(&[("a", ModelVad::full(8.0, 5.0, 5.0)), ("b", ModelVad::full(6.0, 5.0, 5.0))]);
        let w = AggregationWeights::from_pairs([("a", 0.5), ("b", 0.5)]);
        assert_eq!(aggregate_vad(&m, &w).unwrap().valence, 7.0);

        let m = models(&[
            ("a", ModelVad::full(3.0, 1.0, 1.0)),
            ("b", ModelVad::full(6.0, 1.0, 1.0)),
            ("c", ModelVad::full(9.0, 1.0, 1.0)),
        ]);
        let w = AggregationWeights::from_pairs([("a", 1.0), ("b", 2.0), ("c", 3.0)]);
        // (3 + 12 + 27) / 6
        assert!((aggregate_vad(&m, &w).unwrap().valence - 7.0).abs() < 1e-12);
    }

    #[test]
    fn absent_dominance_is_skipped() {
        let mut partial = ModelVad::full(4.0, 4.0, 0.0);
        partial.dominance = None;
        let m = models(&[("a", partial), ("b", ModelVad::full(6.0, 6.0, 3.0))]);
        let v = aggregate_vad(&m, &AggregationWeights::equal()).unwrap();
        assert_eq!(v, VadVector::new(5.0, 5.0, 3.0));
        let only = models(&[("a", partial)]);
        assert_eq!(
            aggregate_vad(&only, &AggregationWeights::equal()),
            Err(AffectError::MissingDimension("dominance"))
        );
        assert_eq!(aggregate_vad(&BTreeMap::new(), &AggregationWeights::equal()), Err(AffectError::NoModels));
    }

    #[test]
    fn emotion_resolution() {
        use EmotionLabel::*;
        let agree: BTreeMap<String, EmotionLabel> = [("a".into(), Awe), ("b".into(), Awe)].into();
        assert_eq!(
            resolve_emotion(&agree, None).unwrap(),
            ResolvedEmotion { label: Awe, provenance: Provenance::ModelConsensus }
        );
        let split: BTreeMap<String, EmotionLabel> = [("a".into(), Fear), ("b".into(), Sadness)].into();
        assert_eq!(resolve_emotion(&split, Some(Sadness)).unwrap().provenance, Provenance::Human);
        assert_eq!(
            resolve_emotion(&split, None).unwrap(),
            ResolvedEmotion { label: Unknown, provenance: Provenance::Disputed }
        );
        assert_eq!(resolve_emotion(&BTreeMap::new(), None), Err(AffectError::NoSources));
    }

    #[test]
    fn single_point_density() {
        let p = VadVector::new(3.1, 7.7, 5.0);
        let g = density_map(&[p], Plane::VA, 16, Some(1.0)).unwrap();
        assert!((g.cells.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(g.argmax(), (bin_index(3.1, 16), bin_index(7.7, 16)));
        let e = density_map(&[], Plane::AD, 8, None).unwrap();
        assert!(e.empty && e.cells.iter().all(|c| *c == 0.0));
        assert_eq!(density_map(&[p], Plane::VA, 1, None), Err(AffectError::TooFewBins(1)));
    }

    #[test]
    fn bin_edges() {
        assert_eq!(bin_index(1.0, 64), 0);
        assert_eq!(bin_index(9.0, 64), 63);
        assert_eq!(bin_index(5.0, 2), 1);
        assert_eq!(bin_index(0.0, 4), 0);
    }

    #[test]
    fn heatmap_writes_png() {
        let dir = tempfile::tempdir().unwrap();
        let pts = [VadVector::new(2.0, 2.0, 2.0), VadVector::new(8.0, 8.0, 8.0)];
        let g = density_map(&pts, Plane::VD, 8, Some(1.0)).unwrap();
        let path = dir.path().join("va.png");
        g.write_heatmap_png(&path, 4).unwrap();
        let img = image::open(&path).unwrap();
        assert_eq!((img.width(), img.height()), (32, 32));
        let back: DensityGrid = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(back, g);
    }
}
