//! TOML run configuration.
//!
//! Every section and key is optional; missing keys take their defaults.
//! Command-line flags are applied on top of the parsed file by the caller,
//! giving flags > file > defaults. The resolved value is serialised into
//! every output manifest.
//!
//! ```toml
//! [run]
//! workers = 8
//! seed = 7
//!
//! [extract]
//! canny_gaussian_sigma = 1.4
//! reference_table = [{ name = "red", rgb = [255, 0, 0] }, ...]
//!
//! [curation]
//! sharpness = { percentile = 5.0 }
//! aesthetic = { absolute = 4.5 }
//! clip_similarity = "disabled"
//!
//! [stats]
//! density_bins = 64
//! smoothing_sigma = 1.0
//!
//! [loss]
//! supcon_temperature = 0.07
//!
//! [review]
//! lease_minutes = 15
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::{AggregationWeights, DEFAULT_DENSITY_BINS, DEFAULT_SMOOTHING_SIGMA};
use crate::curation::{PolicySpec, Threshold, DEFAULT_COSINE_THRESHOLD, DEFAULT_HAMMING_THRESHOLD};
use crate::loss::LossWeights;
use crate::perceptual::{ExtractionConfig, ReferenceColorSpec, ReferenceColorTable};
use crate::review::QueueConfig;

#[derive(Debug, Error)]
pub enum ConfigLoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub extract: ExtractSection,
    pub curation: CurationSection,
    pub stats: StatsSection,
    pub loss: LossWeights,
    pub review: QueueConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractSection {
    pub canny_gaussian_sigma: f64,
    pub canny_low_ratio: f64,
    pub canny_high_ratio: f64,
    pub histogram_bins: usize,
    /// Replaces the built-in eleven-color anchor table.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_table: Option<Vec<ReferenceColorSpec>>,
}

impl Default for ExtractSection {
    fn default() -> Self {
        let d = ExtractionConfig::default();
        ExtractSection {
            canny_gaussian_sigma: d.canny_gaussian_sigma,
            canny_low_ratio: d.canny_low_ratio,
            canny_high_ratio: d.canny_high_ratio,
            histogram_bins: d.histogram_bins,
            reference_table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationSection {
    pub hamming_threshold: u32,
    pub cosine_threshold: f64,
    pub sharpness: Threshold,
    pub aesthetic: Threshold,
    pub clip_similarity: Threshold,
    pub strict_missing: bool,
}

impl Default for CurationSection {
    fn default() -> Self {
        let p = PolicySpec::default();
        CurationSection {
            hamming_threshold: DEFAULT_HAMMING_THRESHOLD,
            cosine_threshold: DEFAULT_COSINE_THRESHOLD,
            sharpness: p.sharpness,
            aesthetic: p.aesthetic,
            clip_similarity: p.clip_similarity,
            strict_missing: p.strict_missing,
        }
    }
}

impl CurationSection {
    pub fn policy(&self) -> PolicySpec {
        PolicySpec {
            sharpness: self.sharpness,
            aesthetic: self.aesthetic,
            clip_similarity: self.clip_similarity,
            strict_missing: self.strict_missing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    pub density_bins: usize,
    /// Gaussian smoothing in bin units; absent means raw histograms.
    pub smoothing_sigma: Option<f64>,
    pub aggregation: AggregationWeights,
}

impl Default for StatsSection {
    fn default() -> Self {
        StatsSection {
            density_bins: DEFAULT_DENSITY_BINS,
            smoothing_sigma: Some(DEFAULT_SMOOTHING_SIGMA),
            aggregation: AggregationWeights::equal(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigLoadError> {
        let config: Config = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigLoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigLoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigLoadError> {
        self.extraction()?;
        self.loss.validate().map_err(|e| ConfigLoadError::Invalid(e.to_string()))?;
        if self.stats.density_bins < 2 {
            return Err(ConfigLoadError::Invalid("stats.density_bins must be at least 2".into()));
        }
        if let Some(s) = self.stats.smoothing_sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(ConfigLoadError::Invalid("stats.smoothing_sigma must be positive".into()));
            }
        }
        if !(self.curation.cosine_threshold.is_finite() && (-1.0..=1.0).contains(&self.curation.cosine_threshold)) {
            return Err(ConfigLoadError::Invalid("curation.cosine_threshold must lie in [-1, 1]".into()));
        }
        if self.review.lease_minutes <= 0 || self.review.max_rounds == 0 {
            return Err(ConfigLoadError::Invalid(
                "review.lease_minutes and review.max_rounds must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn extraction(&self) -> Result<ExtractionConfig, ConfigLoadError> {
        let e = &self.extract;
        let reference_table = match &e.reference_table {
            Some(specs) => {
                ReferenceColorTable::from_specs(specs).map_err(|err| ConfigLoadError::Invalid(err.to_string()))?
            }
            None => ReferenceColorTable::default(),
        };
        let config = ExtractionConfig {
            canny_gaussian_sigma: e.canny_gaussian_sigma,
            canny_low_ratio: e.canny_low_ratio,
            canny_high_ratio: e.canny_high_ratio,
            histogram_bins: e.histogram_bins,
            reference_table,
        };
        config.validate().map_err(|err| ConfigLoadError::Invalid(err.to_string()))?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn sections_override_defaults() {
        let c = Config::from_toml(
            r#"
            [run]
            seed = 9
            [curation]
            sharpness = { absolute = 12.5 }
            clip_similarity = { percentile = 10.0 }
            [loss]
            supcon_temperature = 0.2
            [review]
            max_rounds = 3
            "#,
        )
        .unwrap();
        assert_eq!(c.run.seed, 9);
        assert_eq!(c.curation.sharpness, Threshold::Absolute(12.5));
        assert_eq!(c.curation.aesthetic, PolicySpec::default().aesthetic);
        assert_eq!(c.curation.clip_similarity, Threshold::Percentile(10.0));
        assert_eq!(c.loss.supcon_temperature, 0.2);
        assert_eq!(c.loss.top_k, LossWeights::default().top_k);
        assert_eq!(c.review.max_rounds, 3);
        assert_eq!(c.review.lease_minutes, 15);
    }

    #[test]
    fn reference_table_override() {
        let names = [
            "black", "white", "gray", "red", "orange", "yellow", "green", "blue", "purple", "pink", "brown",
        ];
        let mut text = String::from("[extract]\nreference_table = [\n");
        for (i, n) in names.iter().enumerate() {
            text.push_str(&format!("  {{ name = \"{n}\", rgb = [{}, {}, {}] }},\n", i * 20, 255 - i * 20, i * 3));
        }
        text.push_str("]\n");
        let c = Config::from_toml(&text).unwrap();
        let table = c.extraction().unwrap().reference_table;
        assert_ne!(table.fingerprint(), ReferenceColorTable::default().fingerprint());
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        assert!(Config::from_toml("[extract]\ncanny_low_ratio = 0.5\ncanny_high_ratio = 0.4").is_err());
        assert!(Config::from_toml("[run]\nthreads = 3").is_err());
        assert!(Config::from_toml("[loss]\nw_vad = 0.0").is_err());
        assert!(Config::from_toml("[review]\nlease_minutes = 0").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = Config::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(Config::from_toml(&text).unwrap(), c);
    }
}
