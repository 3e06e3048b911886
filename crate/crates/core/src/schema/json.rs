//! Reading and writing the per-image annotation JSON.
//!
//! Per-model outputs are stored in the file as flat suffixed keys
//! (`valence_<model>`, `arousal_<model>`, `dominance_<model>`,
//! `emotion_<model>`, `description_<source>`) and folded into maps keyed by
//! the suffix.

use std::collections::BTreeMap;

use serde_json::{Map, Number, Value};

use super::error::{SchemaError, Violation};
use super::types::*;

/// Decimal places used when writing perceptual features and scores.
pub const FEATURE_DECIMALS: u32 = 4;
/// Decimal places used when writing color proportions.
pub const PROPORTION_DECIMALS: u32 = 2;
/// Sum tolerance for stored (two-decimal) color proportions.
pub const PROPORTION_SUM_TOLERANCE: f64 = 0.02;

const MODEL_PREFIXES: [&str; 4] = ["valence_", "arousal_", "dominance_", "emotion_"];
const DESCRIPTION_PREFIX: &str = "description_";

/// Parses an annotation file body. The returned record has an empty stem;
/// use [`parse_record_for`] when the stem is known.
pub fn parse_record(raw: &[u8]) -> Result<AnnotationRecord, SchemaError> {
    parse_record_for("", raw)
}

pub fn parse_record_for(stem: &str, raw: &[u8]) -> Result<AnnotationRecord, SchemaError> {
    let text = std::str::from_utf8(raw)
        .map_err(|e| SchemaError::MalformedSyntax(format!("not UTF-8: {e}")))?;
    let value: Value =
        serde_json::from_str(text).map_err(|e| SchemaError::MalformedSyntax(e.to_string()))?;
    let record = record_from_value(stem, value)?;
    record.validate()?;
    Ok(record)
}

/// Serializes a record into the canonical, byte-stable file layout.
pub fn serialize_record(record: &AnnotationRecord) -> Result<Vec<u8>, SchemaError> {
    record.validate()?;
    let value = record_to_value(record)?;
    let mut out = serde_json::to_vec_pretty(&value).expect("in-memory JSON serialization");
    out.push(b'\n');
    Ok(out)
}

fn violation(field: &str, reason: Violation) -> SchemaError {
    SchemaError::SchemaViolation {
        field: field.to_string(),
        model: None,
        reason,
    }
}

fn model_violation(field: &str, model: &str, reason: Violation) -> SchemaError {
    SchemaError::SchemaViolation {
        field: field.to_string(),
        model: Some(model.to_string()),
        reason,
    }
}

fn value_type(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn as_f64(field: &str, v: &Value) -> Result<f64, SchemaError> {
    v.as_f64().ok_or_else(|| {
        violation(
            field,
            Violation::WrongType {
                expected: "number",
                found: value_type(v),
            },
        )
    })
}

fn as_str<'a>(field: &str, v: &'a Value) -> Result<&'a str, SchemaError> {
    v.as_str().ok_or_else(|| {
        violation(
            field,
            Violation::WrongType {
                expected: "string",
                found: value_type(v),
            },
        )
    })
}

fn as_count(field: &str, v: &Value) -> Result<u64, SchemaError> {
    if let Some(n) = v.as_u64() {
        return Ok(n);
    }
    // integral floats such as 3.0 are accepted
    match v.as_f64() {
        Some(x) if x >= 0.0 && x.fract() == 0.0 && x < 9.0e15 => Ok(x as u64),
        Some(x) => Err(violation(field, Violation::NotACount(x))),
        None => Err(violation(
            field,
            Violation::WrongType {
                expected: "non-negative integer",
                found: value_type(v),
            },
        )),
    }
}

fn parse_emotion(field: &str, v: &Value) -> Result<EmotionLabel, SchemaError> {
    let raw = as_str(field, v)?;
    raw.parse()
        .map_err(|_| violation(field, Violation::UnknownEmotion(raw.to_string())))
}

#[derive(Default)]
struct PartialModelVad {
    valence: Option<f64>,
    arousal: Option<f64>,
    dominance: Option<f64>,
}

fn record_from_value(stem: &str, value: Value) -> Result<AnnotationRecord, SchemaError> {
    let Value::Object(map) = value else {
        return Err(violation(
            "<root>",
            Violation::WrongType {
                expected: "object",
                found: value_type(&value),
            },
        ));
    };

    let mut scene = None;
    let mut emotion = None;
    let mut color_proportion = None;
    let mut average_color = None;
    let mut people_count = None;
    let mut persons = None;
    let mut objects = None;
    let mut curvilinearity = None;
    let mut entropy = None;
    let mut edge_density = None;
    let mut clip_similarity = None;
    let mut aesthetic_score = None;
    let mut liqe_score = None;
    let mut agg: [Option<f64>; 3] = [None; 3];
    let mut model_vad: BTreeMap<String, PartialModelVad> = BTreeMap::new();
    let mut per_model_emotion = BTreeMap::new();
    let mut descriptions = BTreeMap::new();
    let mut extra = BTreeMap::new();

    for (key, v) in map {
        // null is treated as an absent field
        if v.is_null() {
            continue;
        }
        match key.as_str() {
            "scene" => scene = Some(as_str(&key, &v)?.to_string()),
            "emotion" => emotion = Some(parse_emotion(&key, &v)?),
            "color_proportion" => color_proportion = Some(parse_colors(&v)?),
            "average_color" => average_color = Some(parse_hsv(&v)?),
            "people_count" => people_count = Some(as_count(&key, &v)?),
            "persons" => persons = Some(parse_persons(&v)?),
            "objects" => objects = Some(parse_objects(&v)?),
            "curvilinearity" => curvilinearity = Some(as_f64(&key, &v)?),
            "complexity_entropy" => entropy = Some(as_f64(&key, &v)?),
            "complexity_edge_density" => edge_density = Some(as_f64(&key, &v)?),
            "clip_similarity" => clip_similarity = Some(as_f64(&key, &v)?),
            "aesthetic_score" => aesthetic_score = Some(as_f64(&key, &v)?),
            "liqe_score" => liqe_score = Some(as_f64(&key, &v)?),
            "valence" => agg[0] = Some(as_f64(&key, &v)?),
            "arousal" => agg[1] = Some(as_f64(&key, &v)?),
            "dominance" => agg[2] = Some(as_f64(&key, &v)?),
            _ => {
                if let Some(source) = key.strip_prefix(DESCRIPTION_PREFIX) {
                    if source.is_empty() {
                        return Err(violation("description", Violation::EmptyModelId));
                    }
                    descriptions.insert(source.to_string(), as_str(&key, &v)?.to_string());
                } else if let Some((prefix, model)) = split_model_key(&key) {
                    let field = prefix.trim_end_matches('_');
                    if model.is_empty() {
                        return Err(violation(field, Violation::EmptyModelId));
                    }
                    if field == "emotion" {
                        let raw = v.as_str().ok_or_else(|| {
                            model_violation(
                                field,
                                model,
                                Violation::WrongType {
                                    expected: "string",
                                    found: value_type(&v),
                                },
                            )
                        })?;
                        let label = raw.parse().map_err(|_| {
                            model_violation(field, model, Violation::UnknownEmotion(raw.to_string()))
                        })?;
                        per_model_emotion.insert(model.to_string(), label);
                    } else {
                        let score = v.as_f64().ok_or_else(|| {
                            model_violation(
                                field,
                                model,
                                Violation::WrongType {
                                    expected: "number",
                                    found: value_type(&v),
                                },
                            )
                        })?;
                        let slot = model_vad.entry(model.to_string()).or_default();
                        match field {
                            "valence" => slot.valence = Some(score),
                            "arousal" => slot.arousal = Some(score),
                            _ => slot.dominance = Some(score),
                        }
                    }
                } else {
                    extra.insert(key, v);
                }
            }
        }
    }

    let mut per_model_vad = BTreeMap::new();
    for (model, partial) in model_vad {
        let valence = partial
            .valence
            .ok_or_else(|| model_violation("valence", &model, Violation::Missing))?;
        let arousal = partial
            .arousal
            .ok_or_else(|| model_violation("arousal", &model, Violation::Missing))?;
        per_model_vad.insert(
            model,
            ModelVad {
                valence,
                arousal,
                dominance: partial.dominance,
            },
        );
    }

    let aggregated_vad = match agg {
        [None, None, None] => None,
        [Some(v), Some(a), Some(d)] => Some(VadVector::new(v, a, d)),
        _ => {
            let missing = ["valence", "arousal", "dominance"]
                .iter()
                .zip(agg)
                .find(|(_, x)| x.is_none())
                .map(|(n, _)| *n)
                .unwrap_or("valence");
            return Err(violation(missing, Violation::Missing));
        }
    };

    let require = |name: &str, present: bool| -> Result<(), SchemaError> {
        if present {
            Ok(())
        } else {
            Err(violation(name, Violation::Missing))
        }
    };
    require("scene", scene.is_some())?;
    require("emotion", emotion.is_some())?;
    require("color_proportion", color_proportion.is_some())?;
    require("average_color", average_color.is_some())?;
    require("people_count", people_count.is_some())?;
    require("curvilinearity", curvilinearity.is_some())?;
    require("complexity_entropy", entropy.is_some())?;
    require("complexity_edge_density", edge_density.is_some())?;

    Ok(AnnotationRecord {
        stem: stem.to_string(),
        scene: scene.unwrap(),
        emotion: emotion.unwrap(),
        per_model_vad,
        per_model_emotion,
        aggregated_vad,
        color_proportion: color_proportion.unwrap(),
        average_color: average_color.unwrap(),
        structural: StructuralFeatures {
            curvilinearity: curvilinearity.unwrap(),
            complexity_entropy: entropy.unwrap(),
            complexity_edge_density: edge_density.unwrap(),
        },
        people_count: people_count.unwrap(),
        persons: persons.unwrap_or_default(),
        objects: objects.unwrap_or_default(),
        descriptions,
        clip_similarity,
        aesthetic_score,
        liqe_score,
        extra,
    })
}

fn split_model_key(key: &str) -> Option<(&'static str, &str)> {
    MODEL_PREFIXES
        .iter()
        .find_map(|p| key.strip_prefix(p).map(|rest| (*p, rest)))
}

fn parse_colors(v: &Value) -> Result<ColorProportion, SchemaError> {
    let field = "color_proportion";
    let Value::Object(map) = v else {
        return Err(violation(
            field,
            Violation::WrongType {
                expected: "object",
                found: value_type(v),
            },
        ));
    };
    let mut out = ColorProportion::default();
    let mut seen = [false; 11];
    for (key, value) in map {
        let color = ColorName::from_name(key)
            .ok_or_else(|| violation(field, Violation::ColorKeys(format!("unexpected key `{key}`"))))?;
        out.set(color, as_f64(field, value)?);
        seen[color.index()] = true;
    }
    if let Some(missing) = ColorName::ALL.iter().find(|c| !seen[c.index()]) {
        return Err(violation(
            field,
            Violation::ColorKeys(format!("missing key `{missing}`")),
        ));
    }
    Ok(out)
}

fn parse_hsv(v: &Value) -> Result<HsvSummary, SchemaError> {
    let field = "average_color";
    let Value::Object(map) = v else {
        return Err(violation(
            field,
            Violation::WrongType {
                expected: "object",
                found: value_type(v),
            },
        ));
    };
    let get = |name: &str| -> Result<f64, SchemaError> {
        let full = format!("average_color.{name}");
        match map.get(name) {
            Some(x) => as_f64(&full, x),
            None => Err(violation(&full, Violation::Missing)),
        }
    };
    Ok(HsvSummary {
        hue: get("hue")?,
        saturation: get("saturation")?,
        value: get("value")?,
    })
}

fn parse_persons(v: &Value) -> Result<Vec<PersonRecord>, SchemaError> {
    let Value::Array(items) = v else {
        return Err(violation(
            "persons",
            Violation::WrongType {
                expected: "array",
                found: value_type(v),
            },
        ));
    };
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let field = format!("persons[{i}]");
        let Value::Object(map) = item else {
            return Err(violation(
                &field,
                Violation::WrongType {
                    expected: "object",
                    found: value_type(item),
                },
            ));
        };
        let mut person = PersonRecord::default();
        for (key, value) in map {
            if value.is_null() {
                continue;
            }
            let sub = format!("{field}.{key}");
            match key.as_str() {
                "gender" => {
                    let raw = as_str(&sub, value)?;
                    person.gender = Some(
                        Gender::parse(raw)
                            .ok_or_else(|| violation(&sub, Violation::UnknownGender(raw.to_string())))?,
                    );
                }
                "age_group" => person.age_group = Some(as_str(&sub, value)?.to_string()),
                "expression" => person.expression = Some(parse_emotion(&sub, value)?),
                "interaction" => person.interaction = Some(as_str(&sub, value)?.to_string()),
                _ => {
                    person.extra.insert(key.clone(), value.clone());
                }
            }
        }
        out.push(person);
    }
    Ok(out)
}

fn parse_objects(v: &Value) -> Result<BTreeMap<String, u64>, SchemaError> {
    let Value::Object(map) = v else {
        return Err(violation(
            "objects",
            Violation::WrongType {
                expected: "object",
                found: value_type(v),
            },
        ));
    };
    map.iter()
        .map(|(k, count)| Ok((k.clone(), as_count(&format!("objects.{k}"), count)?)))
        .collect()
}

/// Rounds to the serialization grid: `decimals` places, integral values kept
/// as integers.
pub fn round_to(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let r = (x * scale).round() / scale;
    if r == 0.0 {
        0.0 // drop negative zero
    } else {
        r
    }
}

fn number(field: &str, x: f64, decimals: u32) -> Result<Value, SchemaError> {
    if !x.is_finite() {
        return Err(SchemaError::NonFinite(field.to_string()));
    }
    let r = round_to(x, decimals);
    if r.fract() == 0.0 && r.abs() < 9.0e15 {
        Ok(Value::Number(Number::from(r as i64)))
    } else {
        Number::from_f64(r)
            .map(Value::Number)
            .ok_or_else(|| SchemaError::NonFinite(field.to_string()))
    }
}

fn record_to_value(r: &AnnotationRecord) -> Result<Value, SchemaError> {
    let f = FEATURE_DECIMALS;
    let mut m = Map::new();
    if let Some(x) = r.clip_similarity {
        m.insert("clip_similarity".into(), number("clip_similarity", x, f)?);
    }
    m.insert("scene".into(), Value::String(r.scene.clone()));
    m.insert("emotion".into(), Value::String(r.emotion.as_str().into()));
    for (source, text) in &r.descriptions {
        m.insert(format!("{DESCRIPTION_PREFIX}{source}"), Value::String(text.clone()));
    }
    let mut colors = Map::new();
    for (color, x) in r.color_proportion.iter() {
        colors.insert(
            color.as_str().into(),
            number("color_proportion", x, PROPORTION_DECIMALS)?,
        );
    }
    m.insert("color_proportion".into(), Value::Object(colors));
    let mut hsv = Map::new();
    let mut hue = round_to(r.average_color.hue, f);
    if hue >= 360.0 {
        hue = 0.0;
    }
    hsv.insert("hue".into(), number("average_color.hue", hue, f)?);
    hsv.insert(
        "saturation".into(),
        number("average_color.saturation", r.average_color.saturation, f)?,
    );
    hsv.insert("value".into(), number("average_color.value", r.average_color.value, f)?);
    m.insert("average_color".into(), Value::Object(hsv));
    m.insert("people_count".into(), Value::Number(r.people_count.into()));
    m.insert(
        "persons".into(),
        Value::Array(r.persons.iter().map(person_to_value).collect()),
    );
    let objects: Map<String, Value> = r
        .objects
        .iter()
        .map(|(k, n)| (k.clone(), Value::Number((*n).into())))
        .collect();
    m.insert("objects".into(), Value::Object(objects));
    m.insert(
        "curvilinearity".into(),
        number("curvilinearity", r.structural.curvilinearity, f)?,
    );
    m.insert(
        "complexity_entropy".into(),
        number("complexity_entropy", r.structural.complexity_entropy, f)?,
    );
    m.insert(
        "complexity_edge_density".into(),
        number("complexity_edge_density", r.structural.complexity_edge_density, f)?,
    );
    if let Some(x) = r.aesthetic_score {
        m.insert("aesthetic_score".into(), number("aesthetic_score", x, f)?);
    }
    if let Some(x) = r.liqe_score {
        m.insert("liqe_score".into(), number("liqe_score", x, f)?);
    }
    if let Some(v) = r.aggregated_vad {
        m.insert("valence".into(), number("valence", v.valence, f)?);
        m.insert("arousal".into(), number("arousal", v.arousal, f)?);
        m.insert("dominance".into(), number("dominance", v.dominance, f)?);
    }
    let models: std::collections::BTreeSet<&String> = r
        .per_model_vad
        .keys()
        .chain(r.per_model_emotion.keys())
        .collect();
    for model in models {
        if let Some(vad) = r.per_model_vad.get(model) {
            m.insert(format!("valence_{model}"), number("valence", vad.valence, f)?);
            m.insert(format!("arousal_{model}"), number("arousal", vad.arousal, f)?);
            if let Some(d) = vad.dominance {
                m.insert(format!("dominance_{model}"), number("dominance", d, f)?);
            }
        }
        if let Some(label) = r.per_model_emotion.get(model) {
            m.insert(format!("emotion_{model}"), Value::String(label.as_str().into()));
        }
    }
    for (k, v) in &r.extra {
        m.insert(k.clone(), v.clone());
    }
    Ok(Value::Object(m))
}

fn person_to_value(p: &PersonRecord) -> Value {
    let mut m = Map::new();
    if let Some(g) = p.gender {
        m.insert("gender".into(), Value::String(g.as_str().into()));
    }
    if let Some(a) = &p.age_group {
        m.insert("age_group".into(), Value::String(a.clone()));
    }
    if let Some(e) = p.expression {
        m.insert("expression".into(), Value::String(e.as_str().into()));
    }
    if let Some(i) = &p.interaction {
        m.insert("interaction".into(), Value::String(i.clone()));
    }
    for (k, v) in &p.extra {
        m.insert(k.clone(), v.clone());
    }
    Value::Object(m)
}

impl AnnotationRecord {
    /// Checks every range and consistency invariant.
    pub fn validate(&self) -> Result<(), SchemaError> {
        fn finite(field: &str, x: f64) -> Result<(), SchemaError> {
            if x.is_finite() {
                Ok(())
            } else {
                Err(SchemaError::NonFinite(field.to_string()))
            }
        }
        fn range(field: &str, x: f64, min: f64, max: f64) -> Result<(), SchemaError> {
            finite(field, x)?;
            if x < min || x > max {
                return Err(violation(field, Violation::OutOfRange { value: x, min, max }));
            }
            Ok(())
        }
        fn score(field: &str, model: &str, x: f64) -> Result<(), SchemaError> {
            if !x.is_finite() {
                return Err(SchemaError::NonFinite(format!("{field}_{model}")));
            }
            if !(VadVector::MIN..=VadVector::MAX).contains(&x) {
                return Err(model_violation(
                    field,
                    model,
                    Violation::OutOfRange {
                        value: x,
                        min: VadVector::MIN,
                        max: VadVector::MAX,
                    },
                ));
            }
            if x.fract() != 0.0 {
                return Err(model_violation(field, model, Violation::NotInteger(x)));
            }
            Ok(())
        }

        if self.scene.trim().is_empty() {
            return Err(violation("scene", Violation::Empty));
        }
        for (model, vad) in &self.per_model_vad {
            if model.is_empty() {
                return Err(violation("valence", Violation::EmptyModelId));
            }
            score("valence", model, vad.valence)?;
            score("arousal", model, vad.arousal)?;
            if let Some(d) = vad.dominance {
                score("dominance", model, d)?;
            }
        }
        if let Some(v) = self.aggregated_vad {
            range("valence", v.valence, 1.0, 9.0)?;
            range("arousal", v.arousal, 1.0, 9.0)?;
            range("dominance", v.dominance, 1.0, 9.0)?;
        }
        for (color, x) in self.color_proportion.iter() {
            range(&format!("color_proportion.{color}"), x, 0.0, 1.0)?;
        }
        let sum = self.color_proportion.sum();
        if (sum - 1.0).abs() > PROPORTION_SUM_TOLERANCE {
            return Err(violation("color_proportion", Violation::ColorSum(sum)));
        }
        let hsv = &self.average_color;
        finite("average_color.hue", hsv.hue)?;
        if !(0.0..360.0).contains(&hsv.hue) {
            return Err(violation(
                "average_color.hue",
                Violation::OutOfRange {
                    value: hsv.hue,
                    min: 0.0,
                    max: 360.0,
                },
            ));
        }
        range("average_color.saturation", hsv.saturation, 0.0, 100.0)?;
        range("average_color.value", hsv.value, 0.0, 100.0)?;
        let s = &self.structural;
        range("curvilinearity", s.curvilinearity, 0.0, 1.0)?;
        range("complexity_entropy", s.complexity_entropy, 0.0, 1.0)?;
        range("complexity_edge_density", s.complexity_edge_density, 0.0, 1.0)?;
        if self.people_count > 0 && self.persons.len() as u64 != self.people_count {
            return Err(violation(
                "persons",
                Violation::Inconsistent(format!(
                    "people_count is {} but {} persons are listed",
                    self.people_count,
                    self.persons.len()
                )),
            ));
        }
        if let Some(x) = self.clip_similarity {
            range("clip_similarity", x, -1.0, 1.0)?;
        }
        if let Some(x) = self.aesthetic_score {
            finite("aesthetic_score", x)?;
        }
        if let Some(x) = self.liqe_score {
            finite("liqe_score", x)?;
        }
        Ok(())
    }

    /// Additional checks for records leaving the review stage: per-model
    /// VAD and emotion outputs must be present.
    pub fn validate_finalized(&self) -> Result<(), SchemaError> {
        self.validate()?;
        if self.per_model_vad.is_empty() {
            return Err(violation("valence", Violation::Missing));
        }
        if self.per_model_emotion.is_empty() {
            return Err(violation("emotion", Violation::Inconsistent("no per-model emotion outputs".into())));
        }
        Ok(())
    }

    /// Snaps every numeric field onto the grid used by [`serialize_record`],
    /// so that `parse(serialize(r)) == r.quantized()` for any valid `r`.
    pub fn quantized(&self) -> AnnotationRecord {
        let f = FEATURE_DECIMALS;
        let mut out = self.clone();
        for x in out.color_proportion.0.iter_mut() {
            *x = round_to(*x, PROPORTION_DECIMALS);
        }
        let hsv = &mut out.average_color;
        hsv.hue = round_to(hsv.hue, f);
        if hsv.hue >= 360.0 {
            hsv.hue = 0.0;
        }
        hsv.saturation = round_to(hsv.saturation, f);
        hsv.value = round_to(hsv.value, f);
        let s = &mut out.structural;
        s.curvilinearity = round_to(s.curvilinearity, f);
        s.complexity_entropy = round_to(s.complexity_entropy, f);
        s.complexity_edge_density = round_to(s.complexity_edge_density, f);
        for x in [
            &mut out.clip_similarity,
            &mut out.aesthetic_score,
            &mut out.liqe_score,
        ]
        .into_iter()
        .flatten()
        {
            *x = round_to(*x, f);
        }
        if let Some(v) = out.aggregated_vad.as_mut() {
            v.valence = round_to(v.valence, f);
            v.arousal = round_to(v.arousal, f);
            v.dominance = round_to(v.dominance, f);
        }
        for vad in out.per_model_vad.values_mut() {
            vad.valence = round_to(vad.valence, f);
            vad.arousal = round_to(vad.arousal, f);
            vad.dominance = vad.dominance.map(|d| round_to(d, f));
        }
        out
    }
}
