// With `acceptance_runner` set these are plain functions called by the acceptance target.

use dualspace_core::loss::*;
use dualspace_core::HsvSummary;

const EXACT: f64 = 1e-12;

#[cfg_attr(not(acceptance_runner), test)]
fn hue_distance_identities() {
    for i in 0..=100 {
        let a = i as f64 / 100.0;
        for j in 0..=100 {
            let b = j as f64 / 100.0;
            let d = circular_hue_distance(a, b);
            assert_eq!(d, circular_hue_distance(b, a));
            assert!((0.0..=0.5).contains(&d));
            assert!((circular_hue_distance((a + 0.37) % 1.0, (b + 0.37) % 1.0) - d).abs() < EXACT);
        }
    }
    assert!((circular_hue_distance(0.95, 0.05) - 0.1).abs() < EXACT);
    assert!((circular_hue_distance(0.0, 1.0)).abs() < EXACT);
    assert_eq!(circular_hue_distance(0.25, 0.75), 0.5);
    let wrap = color_errors(
        &HsvSummary { hue: 350.0, saturation: 0.0, value: 0.0 },
        &HsvSummary { hue: 10.0, saturation: 0.0, value: 0.0 },
    );
    assert!((wrap[0] - 20.0 / 360.0).abs() < EXACT);
}

#[cfg_attr(not(acceptance_runner), test)]
fn vad_mae_endpoints() {
    let low = vec![dualspace_core::VadVector::new(1.0, 1.0, 1.0); 3];
    let high = vec![dualspace_core::VadVector::new(9.0, 9.0, 9.0); 3];
    assert_eq!(vad_mae(&low, &low).unwrap(), (0.0, 0.0, 0.0));
    assert_eq!(vad_mae(&low, &high).unwrap(), (8.0, 8.0, 8.0));
    assert_eq!(vad_mae(&high, &low).unwrap(), (8.0, 8.0, 8.0));
}

fn sample(id: usize, vad: [f64; 3], hsv: [f64; 3]) -> EvalSample {
    EvalSample {
        id: format!("s{id:02}"),
        valence: vad[0],
        arousal: vad[1],
        dominance: vad[2],
        hue: hsv[0],
        saturation: hsv[1],
        value: hsv[2],
        clip_similarity: None,
        image_embedding: None,
        text_embedding: None,
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg_attr(not(acceptance_runner), test)]
fn twenty_sample_report() {
    let mut pred = Vec::new();
    let mut target = Vec::new();
    let mut clip = Vec::new();
    let mut expected: [Vec<f64>; 5] = Default::default();
    for i in 0..20 {
        let f = i as f64;
        let t_vad = [1.0 + (f * 0.4) % 8.0, 9.0 - (f * 0.35) % 8.0, 2.0 + (f * 0.3) % 7.0];
        let p_vad = [t_vad[0] + if i % 2 == 0 { 0.5 } else { -0.25 }, t_vad[1] - 0.125 * (i % 4) as f64, t_vad[2]];
        let t_hsv = [(f * 47.0) % 360.0, (f * 5.0) % 100.0, 50.0];
        let ds = if i < 10 { 0.0 } else { (5.0 - 0.5 * f).max(-t_hsv[1]) };
        let p_hsv = [(t_hsv[0] + 10.0 * f + 180.0) % 360.0, t_hsv[1] + ds, 50.0];
        for k in 0..3 {
            expected[k].push((p_vad[k] - t_vad[k]).abs());
        }
        let dh = ((p_hsv[0] - t_hsv[0]).abs() / 360.0).min(1.0 - (p_hsv[0] - t_hsv[0]).abs() / 360.0);
        expected[3].push(dh);
        expected[4].push((p_hsv[1] - t_hsv[1]).abs() / 100.0);
        let mut p = sample(i, p_vad, p_hsv);
        let cos = ((i % 7) as f64 - 2.0) / 10.0;
        p.image_embedding = Some(vec![1.0, 0.0]);
        p.text_embedding = Some(vec![cos, (1.0 - cos * cos).sqrt()]);
        clip.push(100.0 * cos.max(0.0));
        pred.push(p);
        target.push(sample(i, t_vad, t_hsv));
    }
    let report = evaluate(
        &EvalFile { method: "ours".into(), samples: pred },
        &EvalFile { method: "ref".into(), samples: target },
    )
    .unwrap();
    let names = [METRIC_VAD[0], METRIC_VAD[1], METRIC_VAD[2], METRIC_COLOR[0], METRIC_COLOR[1]];
    for (name, values) in names.iter().zip(&expected) {
        let row = report.get("ours", name).unwrap();
        let (m, s) = mean_std(values);
        assert_eq!(row.n, 20);
        assert!((row.mean - m).abs() < EXACT, "{name}: {} vs {m}", row.mean);
        assert!((row.std - s).abs() < EXACT, "{name}: {} vs {s}", row.std);
    }
    let row = report.get("ours", METRIC_CLIP).unwrap();
    let (m, s) = mean_std(&clip);
    assert!((row.mean - m).abs() < EXACT && (row.std - s).abs() < EXACT);

    let table = report.render_table();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 2 + 6);
    assert!(lines[0].contains("Metric") && lines[0].contains("ours"));
    for name in names.iter().chain([&METRIC_CLIP]) {
        let line = lines.iter().find(|l| l.contains(name)).unwrap();
        assert!(line.contains(" ± "), "{line}");
    }
    let mut tsv = Vec::new();
    report.write_tsv(&mut tsv).unwrap();
    assert_eq!(String::from_utf8(tsv).unwrap().lines().next(), Some("method\tmetric\tmean\tstd\tn"));
}

#[cfg(acceptance_runner)]
pub fn run_all() {
    hue_distance_identities();
    vad_mae_endpoints();
    twenty_sample_report();
}
