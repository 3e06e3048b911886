use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

/// Discrete emotion vocabulary: eight core emotions plus `neutral` and `unknown`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EmotionLabel {
    Amusement,
    Anger,
    Awe,
    Contentment,
    Disgust,
    Excitement,
    Fear,
    Sadness,
    Neutral,
    Unknown,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 10] = [
        EmotionLabel::Amusement,
        EmotionLabel::Anger,
        EmotionLabel::Awe,
        EmotionLabel::Contentment,
        EmotionLabel::Disgust,
        EmotionLabel::Excitement,
        EmotionLabel::Fear,
        EmotionLabel::Sadness,
        EmotionLabel::Neutral,
        EmotionLabel::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionLabel::Amusement => "amusement",
            EmotionLabel::Anger => "anger",
            EmotionLabel::Awe => "awe",
            EmotionLabel::Contentment => "contentment",
            EmotionLabel::Disgust => "disgust",
            EmotionLabel::Excitement => "excitement",
            EmotionLabel::Fear => "fear",
            EmotionLabel::Sadness => "sadness",
            EmotionLabel::Neutral => "neutral",
            EmotionLabel::Unknown => "unknown",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown emotion label `{0}`")]
pub struct UnknownEmotion(pub String);

impl FromStr for EmotionLabel {
    type Err = UnknownEmotion;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lowered = s.trim().to_ascii_lowercase();
        EmotionLabel::ALL
            .iter()
            .copied()
            .find(|label| label.as_str() == lowered)
            .ok_or_else(|| UnknownEmotion(s.to_string()))
    }
}

impl Serialize for EmotionLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for EmotionLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// The eleven reference color categories, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ColorName {
    Black,
    White,
    Gray,
    Red,
    Orange,
    Yellow,
    Green,
    Blue,
    Purple,
    Pink,
    Brown,
}

impl ColorName {
    pub const ALL: [ColorName; 11] = [
        ColorName::Black,
        ColorName::White,
        ColorName::Gray,
        ColorName::Red,
        ColorName::Orange,
        ColorName::Yellow,
        ColorName::Green,
        ColorName::Blue,
        ColorName::Purple,
        ColorName::Pink,
        ColorName::Brown,
    ];

    /// The eight chromatic categories, in canonical order.
    pub const CHROMATIC: [ColorName; 8] = [
        ColorName::Red,
        ColorName::Orange,
        ColorName::Yellow,
        ColorName::Green,
        ColorName::Blue,
        ColorName::Purple,
        ColorName::Pink,
        ColorName::Brown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ColorName::Black => "Black",
            ColorName::White => "White",
            ColorName::Gray => "Gray",
            ColorName::Red => "Red",
            ColorName::Orange => "Orange",
            ColorName::Yellow => "Yellow",
            ColorName::Green => "Green",
            ColorName::Blue => "Blue",
            ColorName::Purple => "Purple",
            ColorName::Pink => "Pink",
            ColorName::Brown => "Brown",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_achromatic(self) -> bool {
        matches!(self, ColorName::Black | ColorName::White | ColorName::Gray)
    }

    pub fn from_name(name: &str) -> Option<ColorName> {
        ColorName::ALL.iter().copied().find(|c| c.as_str() == name)
    }
}

impl fmt::Display for ColorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fraction of pixels assigned to each of the eleven reference colors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ColorProportion(pub [f64; 11]);

impl ColorProportion {
    pub fn only(color: ColorName) -> Self {
        let mut values = [0.0; 11];
        values[color.index()] = 1.0;
        ColorProportion(values)
    }

    pub fn get(&self, color: ColorName) -> f64 {
        self.0[color.index()]
    }

    pub fn set(&mut self, color: ColorName, value: f64) {
        self.0[color.index()] = value;
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ColorName, f64)> + '_ {
        ColorName::ALL.iter().map(move |c| (*c, self.0[c.index()]))
    }

    /// Rounds to `decimals` places with the largest-remainder method so the
    /// rounded values still sum to exactly one unit of the input total.
    ///
    /// Used when writing freshly extracted proportions, which sum to one, so
    /// that the two-decimal file values also sum to 1.00.
    pub fn rounded_preserving_sum(&self, decimals: u32) -> ColorProportion {
        let scale = 10f64.powi(decimals as i32);
        let total_units = (self.sum() * scale).round() as i64;
        let scaled: Vec<f64> = self.0.iter().map(|v| v * scale).collect();
        let mut units: Vec<i64> = scaled.iter().map(|v| v.floor() as i64).collect();
        let mut remaining = total_units - units.iter().sum::<i64>();
        let mut order: Vec<usize> = (0..11).collect();
        // stable sort keeps canonical color order for equal remainders
        order.sort_by(|&a, &b| {
            let ra = scaled[a] - scaled[a].floor();
            let rb = scaled[b] - scaled[b].floor();
            rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
        });
        for &idx in order.iter().cycle().take(11 * 2) {
            if remaining <= 0 {
                break;
            }
            units[idx] += 1;
            remaining -= 1;
        }
        let mut out = [0.0; 11];
        for (slot, u) in out.iter_mut().zip(units) {
            *slot = u as f64 / scale;
        }
        ColorProportion(out)
    }
}

impl Serialize for ColorProportion {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(11))?;
        for (name, value) in self.iter() {
            map.serialize_entry(name.as_str(), &value)?;
        }
        map.end()
    }
}

/// Global hue (degrees, circular), saturation and value (both 0-100).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HsvSummary {
    pub hue: f64,
    pub saturation: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StructuralFeatures {
    pub curvilinearity: f64,
    pub complexity_entropy: f64,
    pub complexity_edge_density: f64,
}

/// A point on the 1-9 valence/arousal/dominance rating scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadVector {
    pub valence: f64,
    pub arousal: f64,
    pub dominance: f64,
}

impl VadVector {
    pub const MIN: f64 = 1.0;
    pub const MAX: f64 = 9.0;

    pub fn new(valence: f64, arousal: f64, dominance: f64) -> Self {
        VadVector {
            valence,
            arousal,
            dominance,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.valence, self.arousal, self.dominance]
    }

    pub fn in_range(&self) -> bool {
        self.as_array()
            .iter()
            .all(|x| (Self::MIN..=Self::MAX).contains(x))
    }

    /// Maps each component from `[1, 9]` to `[0, 1]`.
    pub fn normalized(&self) -> [f64; 3] {
        self.as_array().map(|x| (x - 1.0) / 8.0)
    }
}

/// One model's VAD output. Some models in the released files omit dominance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelVad {
    pub valence: f64,
    pub arousal: f64,
    pub dominance: Option<f64>,
}

impl ModelVad {
    pub fn full(valence: f64, arousal: f64, dominance: f64) -> Self {
        ModelVad {
            valence,
            arousal,
            dominance: Some(dominance),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        }
    }

    pub fn parse(raw: &str) -> Option<Gender> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "male" => Some(Gender::Male),
            "female" => Some(Gender::Female),
            "unknown" => Some(Gender::Unknown),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PersonRecord {
    pub gender: Option<Gender>,
    /// Age-group label from the JRDB-Social taxonomy.
    pub age_group: Option<String>,
    pub expression: Option<EmotionLabel>,
    pub interaction: Option<String>,
    pub extra: BTreeMap<String, Value>,
}

/// One image's full annotation.
///
/// `stem` is not stored in the JSON file; it is the shared filename stem of
/// the image/annotation pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub stem: String,
    pub scene: String,
    pub emotion: EmotionLabel,
    pub per_model_vad: BTreeMap<String, ModelVad>,
    pub per_model_emotion: BTreeMap<String, EmotionLabel>,
    pub aggregated_vad: Option<VadVector>,
    pub color_proportion: ColorProportion,
    pub average_color: HsvSummary,
    pub structural: StructuralFeatures,
    pub people_count: u64,
    pub persons: Vec<PersonRecord>,
    pub objects: BTreeMap<String, u64>,
    pub descriptions: BTreeMap<String, String>,
    pub clip_similarity: Option<f64>,
    pub aesthetic_score: Option<f64>,
    pub liqe_score: Option<f64>,
    /// Fields this version does not interpret, kept for round-tripping.
    pub extra: BTreeMap<String, Value>,
}

impl AnnotationRecord {
    /// VAD used for analytics: the stored aggregate when present, otherwise
    /// the equal-weight aggregate over per-model scores.
    pub fn effective_vad(&self) -> Option<VadVector> {
        if let Some(v) = self.aggregated_vad {
            return Some(v);
        }
        crate::affect::aggregate_vad(&self.per_model_vad, &crate::affect::AggregationWeights::equal()).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emotion_parse_is_case_insensitive() {
        assert_eq!("Awe".parse::<EmotionLabel>().unwrap(), EmotionLabel::Awe);
        assert_eq!(" NEUTRAL ".parse::<EmotionLabel>().unwrap(), EmotionLabel::Neutral);
        assert!("joy".parse::<EmotionLabel>().is_err());
        assert_eq!(EmotionLabel::Sadness.to_string(), "sadness");
    }

    #[test]
    fn largest_remainder_rounding_sums_to_one() {
        let third = 1.0 / 3.0;
        let mut p = ColorProportion::default();
        p.set(ColorName::Red, third);
        p.set(ColorName::Blue, third);
        p.set(ColorName::Green, third);
        let r = p.rounded_preserving_sum(2);
        assert!((r.sum() - 1.0).abs() < 1e-12);
        assert_eq!(r.get(ColorName::Red), 0.34);
        assert_eq!(r.get(ColorName::Green), 0.33);
    }

    #[test]
    fn vad_normalization() {
        let v = VadVector::new(1.0, 5.0, 9.0);
        assert_eq!(v.normalized(), [0.0, 0.5, 1.0]);
        assert!(v.in_range());
        assert!(!VadVector::new(0.5, 5.0, 5.0).in_range());
    }
}
