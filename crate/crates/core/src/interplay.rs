//! Affective-perceptual interplay: Pearson correlations between VAD and
//! perceptual descriptors, and achromatic/chromatic color composition per
//! emotion.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::schema::{AnnotationRecord, ColorName, EmotionLabel};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "error", rename_all = "kebab-case")]
pub enum StatsError {
    #[error("series lengths differ: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("correlation undefined: need at least two points and a non-constant series")]
    DegenerateInput,
    #[error("series {series} has zero variance")]
    ZeroVariance { series: &'static str },
}

/// Sample Pearson correlation coefficient.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch { x: x.len(), y: y.len() });
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::DegenerateInput);
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    match (sxx > 0.0, syy > 0.0) {
        (false, false) => Err(StatsError::DegenerateInput),
        (false, true) => Err(StatsError::ZeroVariance { series: "x" }),
        (true, false) => Err(StatsError::ZeroVariance { series: "y" }),
        (true, true) => Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)),
    }
}

pub const AFFECT_ROWS: [&str; 3] = ["valence", "arousal", "dominance"];
pub const PERCEPTUAL_COLUMNS: [&str; 7] = [
    "hue_cos",
    "hue_sin",
    "saturation",
    "value",
    "curvilinearity",
    "complexity_entropy",
    "complexity_edge_density",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum CorrelationCell {
    Value { r: f64 },
    Undefined(StatsError),
}

impl CorrelationCell {
    pub fn value(&self) -> Option<f64> {
        match self {
            CorrelationCell::Value { r } => Some(*r),
            CorrelationCell::Undefined(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub rows: Vec<&'static str>,
    pub columns: Vec<&'static str>,
    /// Number of records with a usable VAD.
    pub n: usize,
    pub cells: Vec<Vec<CorrelationCell>>,
}

impl CorrelationMatrix {
    pub fn get(&self, row: &str, column: &str) -> Option<&CorrelationCell> {
        let i = self.rows.iter().position(|r| *r == row)?;
        let j = self.columns.iter().position(|c| *c == column)?;
        Some(&self.cells[i][j])
    }

    pub fn write_tsv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "affect\t{}", self.columns.join("\t"))?;
        for (name, row) in self.rows.iter().zip(&self.cells) {
            write!(out, "{name}")?;
            for cell in row {
                match cell {
                    CorrelationCell::Value { r } => write!(out, "\t{r:.6}")?,
                    CorrelationCell::Undefined(StatsError::ZeroVariance { series }) => {
                        write!(out, "\tzero-variance:{}", if *series == "x" { "affect" } else { "perceptual" })?
                    }
                    CorrelationCell::Undefined(_) => write!(out, "\tundefined")?,
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn perceptual_channels(r: &AnnotationRecord) -> [f64; 7] {
    let h = r.average_color.hue.to_radians();
    [
        h.cos(),
        h.sin(),
        r.average_color.saturation,
        r.average_color.value,
        r.structural.curvilinearity,
        r.structural.complexity_entropy,
        r.structural.complexity_edge_density,
    ]
}

/// Pearson r for every (affect dimension, perceptual channel) pair over the
/// records that carry a VAD. Hue enters as its cosine and sine.
pub fn correlation_matrix(records: &[AnnotationRecord]) -> CorrelationMatrix {
    let mut affect: [Vec<f64>; 3] = Default::default();
    let mut perceptual: [Vec<f64>; 7] = Default::default();
    for r in records {
        let Some(vad) = r.effective_vad() else { continue };
        for (series, v) in affect.iter_mut().zip(vad.as_array()) {
            series.push(v);
        }
        for (series, v) in perceptual.iter_mut().zip(perceptual_channels(r)) {
            series.push(v);
        }
    }
    let cells = affect
        .iter()
        .map(|a| {
            perceptual
                .iter()
                .map(|p| match pearson_r(a, p) {
                    Ok(r) => CorrelationCell::Value { r },
                    Err(e) => CorrelationCell::Undefined(e),
                })
                .collect()
        })
        .collect();
    CorrelationMatrix {
        rows: AFFECT_ROWS.to_vec(),
        columns: PERCEPTUAL_COLUMNS.to_vec(),
        n: affect[0].len(),
        cells,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Composition {
    pub count: usize,
    pub achromatic: f64,
    pub chromatic: f64,
    /// Records with nonzero chromatic mass; hue shares average over these.
    pub chromatic_count: usize,
    pub hue_shares: BTreeMap<&'static str, f64>,
}

/// Per-emotion mean achromatic (black, white, gray) and chromatic mass, and
/// the mean distribution over the eight chromatic colors.
pub fn composition_by_emotion(records: &[AnnotationRecord]) -> BTreeMap<EmotionLabel, Composition> {
    struct Acc {
        count: usize,
        achromatic: f64,
        chromatic: f64,
        chromatic_count: usize,
        hues: [f64; 8],
    }
    let mut acc: BTreeMap<EmotionLabel, Acc> = BTreeMap::new();
    for r in records {
        let total = r.color_proportion.sum();
        if total.is_nan() || total <= 0.0 {
            continue;
        }
        let achromatic: f64 = r
            .color_proportion
            .iter()
            .filter(|(c, _)| c.is_achromatic())
            .map(|(_, v)| v)
            .sum();
        let chromatic = total - achromatic;
        let a = acc.entry(r.emotion).or_insert(Acc {
            count: 0,
            achromatic: 0.0,
            chromatic: 0.0,
            chromatic_count: 0,
            hues: [0.0; 8],
        });
        a.count += 1;
        a.achromatic += achromatic / total;
        a.chromatic += 1.0 - achromatic / total;
        if chromatic > 0.0 {
            a.chromatic_count += 1;
            for (slot, c) in a.hues.iter_mut().zip(ColorName::CHROMATIC) {
                *slot += r.color_proportion.get(c) / chromatic;
            }
        }
    }
    acc.into_iter()
        .map(|(label, a)| {
            let hue_shares = ColorName::CHROMATIC
                .iter()
                .zip(a.hues)
                .map(|(c, v)| {
                    let share = if a.chromatic_count > 0 { v / a.chromatic_count as f64 } else { 0.0 };
                    (c.as_str(), share)
                })
                .collect();
            (
                label,
                Composition {
                    count: a.count,
                    achromatic: a.achromatic / a.count as f64,
                    chromatic: a.chromatic / a.count as f64,
                    chromatic_count: a.chromatic_count,
                    hue_shares,
                },
            )
        })
        .collect()
}

pub fn write_composition_tsv<W: Write>(
    out: &mut W,
    table: &BTreeMap<EmotionLabel, Composition>,
) -> std::io::Result<()> {
    write!(out, "emotion\tcount\tachromatic\tchromatic")?;
    for c in ColorName::CHROMATIC {
        write!(out, "\t{c}")?;
    }
    writeln!(out)?;
    for (label, c) in table {
        write!(out, "{label}\t{}\t{:.6}\t{:.6}", c.count, c.achromatic, c.chromatic)?;
        for name in ColorName::CHROMATIC {
            write!(out, "\t{:.6}", c.hue_shares[name.as_str()])?;
        }
        writeln!(out)?;
    }
    Ok(())
}
