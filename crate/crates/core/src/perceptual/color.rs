use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::image::PixelImage;
use crate::circular::{wrap_degrees, CircularMean};
use crate::schema::{ColorName, ColorProportion, HsvSummary};

/// D65 reference white, Y normalised to 1.
const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];
const LAB_EPSILON: f64 = 216.0 / 24389.0;
const LAB_KAPPA: f64 = 24389.0 / 27.0;

fn srgb_decode(channel: u8) -> f64 {
    let c = channel as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_lut() -> &'static [f64; 256] {
    static LUT: OnceLock<[f64; 256]> = OnceLock::new();
    LUT.get_or_init(|| {
        let mut lut = [0.0; 256];
        for (i, slot) in lut.iter_mut().enumerate() {
            *slot = srgb_decode(i as u8);
        }
        lut
    })
}

fn lab_f(t: f64) -> f64 {
    if t > LAB_EPSILON {
        t.cbrt()
    } else {
        (LAB_KAPPA * t + 16.0) / 116.0
    }
}

/// sRGB (8 bits per channel) to CIE 1976 L*a*b* under D65.
pub fn srgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lut = linear_lut();
    let [r, g, b] = rgb.map(|c| lut[c as usize]);
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let fx = lab_f(x / WHITE_D65[0]);
    let fy = lab_f(y / WHITE_D65[1]);
    let fz = lab_f(z / WHITE_D65[2]);
    let l = (116.0 * fy - 16.0).clamp(0.0, 100.0);
    [l, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceColor {
    pub name: ColorName,
    pub lab: [f64; 3],
}

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("reference table must list each of the 11 colors exactly once: {0}")]
    Names(String),
    #[error("reference colors {0} and {1} share the same Lab coordinates")]
    Duplicate(ColorName, ColorName),
    #[error("entry `{0}` needs exactly one of `rgb` or `lab`")]
    Spec(String),
    #[error("Lab coordinates of {0} are not finite or L is outside [0, 100]")]
    Range(ColorName),
}

/// Eleven named anchors in Lab space. Nearest-anchor ties resolve to the
/// earlier entry, so entry order is significant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceColorTable {
    entries: Vec<ReferenceColor>,
}

/// Canonical sRGB anchors used by [`ReferenceColorTable::default`].
pub const DEFAULT_ANCHORS: [(ColorName, [u8; 3]); 11] = [
    (ColorName::Black, [0, 0, 0]),
    (ColorName::White, [255, 255, 255]),
    (ColorName::Gray, [128, 128, 128]),
    (ColorName::Red, [255, 0, 0]),
    (ColorName::Orange, [255, 165, 0]),
    (ColorName::Yellow, [255, 255, 0]),
    (ColorName::Green, [0, 128, 0]),
    (ColorName::Blue, [0, 0, 255]),
    (ColorName::Purple, [128, 0, 128]),
    (ColorName::Pink, [255, 192, 203]),
    (ColorName::Brown, [150, 75, 0]),
];

impl Default for ReferenceColorTable {
    fn default() -> Self {
        let entries = DEFAULT_ANCHORS
            .iter()
            .map(|(name, rgb)| ReferenceColor {
                name: *name,
                lab: srgb_to_lab(*rgb),
            })
            .collect();
        ReferenceColorTable { entries }
    }
}

/// A table entry as written in a config file: a color name plus either an
/// sRGB triple or Lab coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceColorSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgb: Option<[u8; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lab: Option<[f64; 3]>,
}

impl ReferenceColorTable {
    pub fn new(entries: Vec<ReferenceColor>) -> Result<Self, TableError> {
        if entries.len() != 11 {
            return Err(TableError::Names(format!("got {} entries", entries.len())));
        }
        let mut seen = [false; 11];
        for e in &entries {
            if seen[e.name.index()] {
                return Err(TableError::Names(format!("`{}` listed twice", e.name)));
            }
            seen[e.name.index()] = true;
            if e.lab.iter().any(|v| !v.is_finite()) || !(0.0..=100.0).contains(&e.lab[0]) {
                return Err(TableError::Range(e.name));
            }
        }
        for (i, a) in entries.iter().enumerate() {
            for b in &entries[i + 1..] {
                if a.lab == b.lab {
                    return Err(TableError::Duplicate(a.name, b.name));
                }
            }
        }
        Ok(ReferenceColorTable { entries })
    }

    pub fn from_specs(specs: &[ReferenceColorSpec]) -> Result<Self, TableError> {
        let entries = specs
            .iter()
            .map(|s| {
                let name = ColorName::ALL
                    .into_iter()
                    .find(|c| c.as_str().eq_ignore_ascii_case(s.name.trim()))
                    .ok_or_else(|| TableError::Names(format!("unknown color `{}`", s.name)))?;
                let lab = match (s.rgb, s.lab) {
                    (Some(rgb), None) => srgb_to_lab(rgb),
                    (None, Some(lab)) => lab,
                    _ => return Err(TableError::Spec(s.name.clone())),
                };
                Ok(ReferenceColor { name, lab })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(entries)
    }

    pub fn entries(&self) -> &[ReferenceColor] {
        &self.entries
    }

    /// Index into [`entries`](Self::entries) of the nearest anchor.
    pub fn nearest(&self, lab: [f64; 3]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, e) in self.entries.iter().enumerate() {
            let d = (lab[0] - e.lab[0]).powi(2) + (lab[1] - e.lab[1]).powi(2) + (lab[2] - e.lab[2]).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// SHA-256 over the exact table contents, recorded in run manifests.
    pub fn fingerprint(&self) -> String {
        let mut canonical = String::new();
        for e in &self.entries {
            canonical.push_str(&format!("{}:{:?},{:?},{:?}\n", e.name, e.lab[0], e.lab[1], e.lab[2]));
        }
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// Assigns each pixel to its nearest reference color in Lab space and
/// returns the per-color pixel fractions.
pub fn color_proportions(image: &PixelImage, table: &ReferenceColorTable) -> ColorProportion {
    let counts = color_counts(image.pixels(), table);
    let total = image.len() as f64;
    let mut out = ColorProportion::default();
    for (entry, count) in table.entries().iter().zip(counts) {
        out.set(entry.name, count as f64 / total);
    }
    out
}

/// Per-entry pixel counts, in table order.
pub fn color_counts(pixels: &[[u8; 3]], table: &ReferenceColorTable) -> Vec<u64> {
    let mut counts = vec![0u64; table.entries().len()];
    let mut last: Option<([u8; 3], usize)> = None;
    for &p in pixels {
        // runs of identical pixels are common in flat regions
        let idx = match last {
            Some((rgb, idx)) if rgb == p => idx,
            _ => {
                let idx = table.nearest(srgb_to_lab(p));
                last = Some((p, idx));
                idx
            }
        };
        counts[idx] += 1;
    }
    counts
}

/// RGB to (hue degrees in `[0, 360)`, saturation `[0, 1]`, value `[0, 1]`).
pub fn rgb_to_hsv(rgb: [u8; 3]) -> (f64, f64, f64) {
    let [r, g, b] = rgb.map(|c| c as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let value = max;
    let saturation = if max > 0.0 { delta / max } else { 0.0 };
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (wrap_degrees(hue), saturation, value)
}

/// Global HSV statistics: arithmetic mean saturation and value on a 0-100
/// scale, and the saturation-weighted circular mean hue over chromatic
/// pixels (0 when the image is fully achromatic).
pub fn hsv_summary(image: &PixelImage) -> HsvSummary {
    let mut sat_sum = 0.0;
    let mut val_sum = 0.0;
    let mut hue = CircularMean::new();
    for &p in image.pixels() {
        let (h, s, v) = rgb_to_hsv(p);
        sat_sum += s;
        val_sum += v;
        if s > 0.0 {
            hue.push(h, s);
        }
    }
    let n = image.len() as f64;
    HsvSummary {
        hue: hue.mean_degrees().unwrap_or(0.0),
        saturation: (100.0 * sat_sum / n).clamp(0.0, 100.0),
        value: (100.0 * val_sum / n).clamp(0.0, 100.0),
    }
}
