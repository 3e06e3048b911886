//! Deterministic synthetic images and annotation records, for tests,
//! fixtures and demos.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::perceptual::PixelImage;
use crate::schema::{
    AnnotationRecord, ColorName, ColorProportion, EmotionLabel, Gender, HsvSummary, ModelVad, PersonRecord,
    StructuralFeatures, VadVector,
};

/// Number of distinct image patterns produced by [`synthetic_image`].
pub const PATTERNS: u64 = 6;

fn rgb(rng: &mut ChaCha8Rng) -> [u8; 3] {
    [rng.gen(), rng.gen(), rng.gen()]
}

/// A small image whose pattern (noise, rectangles, rings, gradient,
/// stripes, noisy checkerboard) is `seed % PATTERNS` and whose size and
/// colors follow from `seed`.
pub fn synthetic_image(seed: u64) -> PixelImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.gen_range(12..48u32);
    let h = rng.gen_range(12..48u32);
    match seed % PATTERNS {
        0 => {
            let pixels = (0..w * h).map(|_| rgb(&mut rng)).collect();
            PixelImage::new(w, h, pixels).expect("sized buffer")
        }
        1 => {
            let background = rgb(&mut rng);
            let rects: Vec<(u32, u32, u32, u32, [u8; 3])> = (0..rng.gen_range(1..6))
                .map(|_| {
                    let x0 = rng.gen_range(0..w);
                    let y0 = rng.gen_range(0..h);
                    (x0, y0, rng.gen_range(x0..=w), rng.gen_range(y0..=h), rgb(&mut rng))
                })
                .collect();
            PixelImage::from_fn(w, h, |x, y| {
                rects
                    .iter()
                    .rev()
                    .find(|r| x >= r.0 && x < r.2 && y >= r.1 && y < r.3)
                    .map_or(background, |r| r.4)
            })
        }
        2 => {
            let (a, b) = (rgb(&mut rng), rgb(&mut rng));
            let cx = rng.gen_range(0.0..w as f64);
            let cy = rng.gen_range(0.0..h as f64);
            let period = rng.gen_range(3.0..10.0);
            PixelImage::from_fn(w, h, |x, y| {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if ((d / period) as u64).is_multiple_of(2) {
                    a
                } else {
                    b
                }
            })
        }
        3 => {
            let (a, b) = (rgb(&mut rng), rgb(&mut rng));
            let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let (c, s) = (angle.cos(), angle.sin());
            let span = (w + h) as f64;
            PixelImage::from_fn(w, h, |x, y| {
                let t = ((x as f64 * c + y as f64 * s) / span + 0.5).clamp(0.0, 1.0);
                [0, 1, 2].map(|k| (a[k] as f64 + (b[k] as f64 - a[k] as f64) * t).round() as u8)
            })
        }
        4 => {
            let (a, b) = (rgb(&mut rng), rgb(&mut rng));
            let period = rng.gen_range(2..8u32);
            let slope = rng.gen_range(0..3u32);
            PixelImage::from_fn(w, h, |x, y| if ((x + slope * y) / period) % 2 == 0 { a } else { b })
        }
        _ => {
            let (a, b) = (rgb(&mut rng), rgb(&mut rng));
            let cell = rng.gen_range(2..7u32);
            let noise: Vec<i16> = (0..w * h).map(|_| rng.gen_range(-12..=12)).collect();
            PixelImage::from_fn(w, h, |x, y| {
                let base = if (x / cell + y / cell) % 2 == 0 { a } else { b };
                let n = noise[(y * w + x) as usize];
                base.map(|c| (c as i16 + n).clamp(0, 255) as u8)
            })
        }
    }
}

const MODELS: [&str; 3] = ["internvl3_8B", "qwen2.5_vl_7b_instruct", "llava_1.6"];
const SCENES: [&str; 5] = ["beach", "forest", "street", "kitchen", "stadium"];

fn core_emotion(rng: &mut ChaCha8Rng) -> EmotionLabel {
    EmotionLabel::ALL[rng.gen_range(0..8)]
}

fn score(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(1..=9) as f64
}

/// A random record that passes validation, exercising optional fields,
/// persons, objects, descriptions and unknown keys.
pub fn synthetic_record(seed: u64) -> AnnotationRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let emotion = core_emotion(&mut rng);
    let mut per_model_vad = BTreeMap::new();
    let mut per_model_emotion = BTreeMap::new();
    for model in MODELS.iter().take(rng.gen_range(0..=3)) {
        let dominance = if rng.gen_bool(0.7) { Some(score(&mut rng)) } else { None };
        per_model_vad.insert(
            model.to_string(),
            ModelVad {
                valence: score(&mut rng),
                arousal: score(&mut rng),
                dominance,
            },
        );
        let label = if rng.gen_bool(0.7) { emotion } else { core_emotion(&mut rng) };
        per_model_emotion.insert(model.to_string(), label);
    }
    let mut raw = [0.0; 11];
    for x in raw.iter_mut() {
        if rng.gen_bool(0.6) {
            *x = rng.gen_range(0.0..1.0);
        }
    }
    raw[rng.gen_range(0..11)] += 0.5;
    let total: f64 = raw.iter().sum();
    let mut proportions = ColorProportion::default();
    for (c, x) in ColorName::ALL.iter().zip(raw) {
        proportions.set(*c, x / total);
    }
    let people = rng.gen_range(0..3u64);
    let persons = (0..people)
        .map(|i| PersonRecord {
            gender: Some([Gender::Male, Gender::Female, Gender::Unknown][rng.gen_range(0..3)]),
            age_group: Some(["child", "adult", "elderly"][rng.gen_range(0..3)].to_string()),
            expression: if rng.gen_bool(0.5) { Some(core_emotion(&mut rng)) } else { None },
            interaction: if i == 0 { Some("walking".into()) } else { None },
            extra: BTreeMap::new(),
        })
        .collect();
    let mut objects = BTreeMap::new();
    for name in ["tree", "car", "dog", "umbrella"] {
        if rng.gen_bool(0.4) {
            objects.insert(name.to_string(), rng.gen_range(1..5u64));
        }
    }
    let mut descriptions = BTreeMap::new();
    if rng.gen_bool(0.5) {
        descriptions.insert("InternVL3-8B".to_string(), format!("A synthetic scene number {seed}."));
    }
    let mut extra = BTreeMap::new();
    if rng.gen_bool(0.2) {
        extra.insert("source_batch".to_string(), serde_json::json!(seed % 7));
    }
    AnnotationRecord {
        stem: format!("img_{seed:05}"),
        scene: SCENES[rng.gen_range(0..SCENES.len())].to_string(),
        emotion,
        per_model_vad,
        per_model_emotion,
        aggregated_vad: if rng.gen_bool(0.3) {
            Some(VadVector::new(
                rng.gen_range(1.0..9.0),
                rng.gen_range(1.0..9.0),
                rng.gen_range(1.0..9.0),
            ))
        } else {
            None
        },
        color_proportion: proportions.rounded_preserving_sum(crate::schema::PROPORTION_DECIMALS),
        average_color: HsvSummary {
            hue: rng.gen_range(0.0..360.0),
            saturation: rng.gen_range(0.0..=100.0),
            value: rng.gen_range(0.0..=100.0),
        },
        structural: StructuralFeatures {
            curvilinearity: rng.gen_range(0.0..=1.0),
            complexity_entropy: rng.gen_range(0.0..=1.0),
            complexity_edge_density: rng.gen_range(0.0..=1.0),
        },
        people_count: people,
        persons,
        objects,
        descriptions,
        clip_similarity: if rng.gen_bool(0.8) { Some(rng.gen_range(-0.2..0.5)) } else { None },
        aesthetic_score: if rng.gen_bool(0.8) { Some(rng.gen_range(1.0..9.0)) } else { None },
        liqe_score: if rng.gen_bool(0.5) { Some(rng.gen_range(1.0..5.0)) } else { None },
        extra,
    }
}
