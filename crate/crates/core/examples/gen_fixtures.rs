//! Writes the deterministic fixture corpus used by the CLI tests:
//! `<out>/<scene>/<stem>.{png,jpg,json}` plus a matching evaluation pair.
//!
//! cargo run -p dualspace-core --example gen_fixtures -- fixtures

use std::fs;
use std::path::Path;

use dualspace_core::loss::{EvalFile, EvalSample};
use dualspace_core::perceptual::{extract_all, ExtractionConfig, PixelImage};
use dualspace_core::schema::{serialize_record, PROPORTION_DECIMALS};
use dualspace_core::synth::{synthetic_image, synthetic_record};

const SCENES: [&str; 4] = ["beach", "forest", "market", "night_street"];
const IMAGES: u64 = 32;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "fixtures".into());
    let out = Path::new(&out);
    let corpus = out.join("corpus");
    if corpus.exists() {
        fs::remove_dir_all(&corpus)?;
    }
    let config = ExtractionConfig::default();
    let mut samples = Vec::new();
    for seed in 0..IMAGES {
        let scene = SCENES[(seed % SCENES.len() as u64) as usize];
        let dir = corpus.join(scene);
        fs::create_dir_all(&dir)?;
        let mut record = synthetic_record(1000 + seed);
        record.scene = scene.to_string();
        record.stem = format!("img_{seed:03}");
        let ext = if seed % 5 == 4 { "jpg" } else { "png" };
        let image_path = dir.join(format!("{}.{ext}", record.stem));
        synthetic_image(seed).to_rgb_image().save(&image_path)?;
        let image = PixelImage::open(&image_path)?;
        let f = extract_all(&image, &config);
        record.color_proportion = f.color_proportion.rounded_preserving_sum(PROPORTION_DECIMALS);
        record.average_color = f.average_color;
        record.structural = f.structural;
        let record = record.quantized();
        fs::write(dir.join(format!("{}.json", record.stem)), serialize_record(&record)?)?;
        if let Some(vad) = record.effective_vad() {
            let hsv = record.average_color;
            samples.push(EvalSample {
                id: record.stem.clone(),
                valence: vad.valence,
                arousal: vad.arousal,
                dominance: vad.dominance,
                hue: hsv.hue,
                saturation: hsv.saturation,
                value: hsv.value,
                clip_similarity: None,
                image_embedding: None,
                text_embedding: None,
            });
        }
    }
    let target = EvalFile {
        method: "reference".into(),
        samples,
    };
    fs::write(out.join("eval_target.json"), serde_json::to_string_pretty(&target)? + "\n")?;
    println!("wrote {IMAGES} images and {} evaluation samples under {}", target.samples.len(), out.display());
    Ok(())
}
