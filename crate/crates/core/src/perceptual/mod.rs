//! Per-image perceptual descriptors: 11-color Lab proportions, global HSV,
//! Canny-based curvilinearity and histogram/edge complexity.

mod color;
mod edges;
mod image;
mod structure;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use color::{
    color_counts, color_proportions, hsv_summary, rgb_to_hsv, srgb_to_lab, ReferenceColor,
    ReferenceColorSpec, ReferenceColorTable, TableError, DEFAULT_ANCHORS,
};
pub use edges::{canny_edges, fold_orientation, gaussian_blur, sobel, EdgeMap};
pub use image::{luma_f64, luma_u8, ImageError, PixelImage};
pub use structure::{acute_deviation, complexity, curvilinearity, gray_histogram};

use crate::schema::{ColorProportion, HsvSummary, StructuralFeatures};

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionConfig {
    pub canny_gaussian_sigma: f64,
    pub canny_low_ratio: f64,
    pub canny_high_ratio: f64,
    pub histogram_bins: usize,
    pub reference_table: ReferenceColorTable,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            canny_gaussian_sigma: 1.4,
            canny_low_ratio: 0.1,
            canny_high_ratio: 0.3,
            histogram_bins: 256,
            reference_table: ReferenceColorTable::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("canny_gaussian_sigma must be a positive finite number, got {0}")]
    Sigma(f64),
    #[error("canny ratios must satisfy 0 < low < high < 1, got low={low} high={high}")]
    Ratios { low: f64, high: f64 },
    #[error("histogram_bins must be in 2..=256, got {0}")]
    Bins(usize),
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.canny_gaussian_sigma.is_finite() && self.canny_gaussian_sigma > 0.0) {
            return Err(ConfigError::Sigma(self.canny_gaussian_sigma));
        }
        let (low, high) = (self.canny_low_ratio, self.canny_high_ratio);
        if !(low > 0.0 && low < high && high < 1.0) {
            return Err(ConfigError::Ratios { low, high });
        }
        if !(2..=256).contains(&self.histogram_bins) {
            return Err(ConfigError::Bins(self.histogram_bins));
        }
        Ok(())
    }

    pub fn manifest(&self) -> ExtractionManifest {
        ExtractionManifest {
            canny_gaussian_sigma: self.canny_gaussian_sigma,
            canny_low_ratio: self.canny_low_ratio,
            canny_high_ratio: self.canny_high_ratio,
            histogram_bins: self.histogram_bins,
            grayscale: "bt601".into(),
            color_assignment: "nearest-lab-euclidean".into(),
            hue_mean: "circular-saturation-weighted".into(),
            reference_table_sha256: self.reference_table.fingerprint(),
            reference_table: self.reference_table.entries().to_vec(),
        }
    }
}

/// Parameters of an extraction run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionManifest {
    pub canny_gaussian_sigma: f64,
    pub canny_low_ratio: f64,
    pub canny_high_ratio: f64,
    pub histogram_bins: usize,
    pub grayscale: String,
    pub color_assignment: String,
    pub hue_mean: String,
    pub reference_table_sha256: String,
    pub reference_table: Vec<ReferenceColor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerceptualFeatures {
    pub color_proportion: ColorProportion,
    pub average_color: HsvSummary,
    pub structural: StructuralFeatures,
}

pub fn extract_all(image: &PixelImage, config: &ExtractionConfig) -> PerceptualFeatures {
    let edges = canny_edges(image, config);
    let (entropy, density) = complexity(image, &edges, config.histogram_bins);
    PerceptualFeatures {
        color_proportion: color_proportions(image, &config.reference_table),
        average_color: hsv_summary(image),
        structural: StructuralFeatures {
            curvilinearity: curvilinearity(&edges),
            complexity_entropy: entropy,
            complexity_edge_density: density,
        },
    }
}

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("failed to build worker pool: {0}")]
    Pool(String),
}

/// Decodes and extracts every path on a pool of `workers` threads. Results
/// are returned in input order whatever the scheduling.
pub fn extract_batch(
    paths: &[PathBuf],
    config: &ExtractionConfig,
    workers: usize,
) -> Result<Vec<Result<PerceptualFeatures, ImageError>>, BatchError> {
    map_parallel(paths, workers, |p: &PathBuf| {
        PixelImage::open(Path::new(p)).map(|img| extract_all(&img, config))
    })
}

/// Order-preserving parallel map on a dedicated pool.
pub fn map_parallel<T, R, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>, BatchError>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| BatchError::Pool(e.to_string()))?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}
