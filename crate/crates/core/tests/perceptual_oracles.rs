// With `acceptance_runner` set these are plain functions called by the acceptance target.

use std::f64::consts::{FRAC_PI_2, PI};

use dualspace_core::perceptual::*;
use dualspace_core::synth::synthetic_image;
use dualspace_core::ColorName;

const IMAGES: u64 = 60;
const TOL: f64 = 1e-9;

fn lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = |c: u8| {
        let v = c as f64 / 255.0;
        if v <= 0.04045 {
            v / 12.92
        } else {
            ((v + 0.055) / 1.055).powf(2.4)
        }
    };
    let (r, g, b) = (lin(rgb[0]), lin(rgb[1]), lin(rgb[2]));
    let xyz = [
        (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047,
        0.2126729 * r + 0.7151522 * g + 0.0721750 * b,
        (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883,
    ];
    let f = |t: f64| {
        if t > 216.0 / 24389.0 {
            t.cbrt()
        } else {
            (24389.0 / 27.0 * t + 16.0) / 116.0
        }
    };
    let (fx, fy, fz) = (f(xyz[0]), f(xyz[1]), f(xyz[2]));
    [(116.0 * fy - 16.0).clamp(0.0, 100.0), 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn proportions_oracle(img: &PixelImage, table: &ReferenceColorTable) -> [f64; 11] {
    let mut counts = [0usize; 11];
    for y in 0..img.height() {
        for x in 0..img.width() {
            let p = lab(img.get(x, y));
            let mut best = (f64::INFINITY, ColorName::Black);
            for e in table.entries() {
                let d: f64 = (0..3).map(|k| (p[k] - e.lab[k]).powi(2)).sum();
                if d < best.0 {
                    best = (d, e.name);
                }
            }
            counts[best.1.index()] += 1;
        }
    }
    counts.map(|c| c as f64 / img.len() as f64)
}

fn entropy_oracle(img: &PixelImage, bins: usize) -> f64 {
    let mut hist = vec![0usize; bins];
    for y in 0..img.height() {
        for x in 0..img.width() {
            let [r, g, b] = img.get(x, y).map(u64::from);
            let level = (2 * (299 * r + 587 * g + 114 * b) + 1000) / 2000;
            hist[level as usize * bins / 256] += 1;
        }
    }
    let n = img.len() as f64;
    let h: f64 = hist.iter().filter(|c| **c > 0).map(|&c| -(c as f64 / n) * (c as f64 / n).log2()).sum();
    h / (bins as f64).log2()
}

fn curvilinearity_oracle(edges: &EdgeMap) -> f64 {
    let mut pixels = Vec::new();
    for y in 0..edges.height() {
        for x in 0..edges.width() {
            if edges.is_edge(x, y) {
                pixels.push((x as i64, y as i64, edges.orientation(x, y)));
            }
        }
    }
    let (mut sum, mut pairs) = (0.0, 0usize);
    for (i, a) in pixels.iter().enumerate() {
        for b in &pixels[i + 1..] {
            if (a.0 - b.0).abs().max((a.1 - b.1).abs()) == 1 {
                let d = (a.2 - b.2).abs() % PI;
                sum += d.min(PI - d);
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        0.0
    } else {
        sum / pairs as f64 / FRAC_PI_2
    }
}

#[cfg_attr(not(acceptance_runner), test)]
fn features_match_brute_force_oracles() {
    let config = ExtractionConfig::default();
    let mut with_edges = 0;
    for seed in 0..IMAGES {
        let img = synthetic_image(seed);
        let props = color_proportions(&img, &config.reference_table);
        let oracle = proportions_oracle(&img, &config.reference_table);
        for c in ColorName::ALL {
            assert!((props.get(c) - oracle[c.index()]).abs() < TOL, "seed {seed} color {c}");
        }
        let edges = canny_edges(&img, &config);
        for bins in [256, 16] {
            let (entropy, density) = complexity(&img, &edges, bins);
            assert!((entropy - entropy_oracle(&img, bins)).abs() < TOL, "seed {seed} bins {bins}");
            let count = (0..img.height())
                .flat_map(|y| (0..img.width()).map(move |x| (x, y)))
                .filter(|&(x, y)| edges.is_edge(x, y))
                .count();
            assert!((density - count as f64 / img.len() as f64).abs() < TOL, "seed {seed}");
        }
        let curv = curvilinearity(&edges);
        assert!((curv - curvilinearity_oracle(&edges)).abs() < TOL, "seed {seed}");
        if edges.edge_count() > 0 {
            with_edges += 1;
        }
    }
    assert!(with_edges >= 40);
}

#[cfg_attr(not(acceptance_runner), test)]
fn extraction_is_independent_of_worker_count() {
    let config = ExtractionConfig::default();
    let images: Vec<PixelImage> = (0..24).map(synthetic_image).collect();
    let one = map_parallel(&images, 1, |img| extract_all(img, &config)).unwrap();
    let many = map_parallel(&images, 8, |img| extract_all(img, &config)).unwrap();
    assert_eq!(one, many);
}

#[cfg(acceptance_runner)]
pub fn run_all() {
    features_match_brute_force_oracles();
    extraction_is_independent_of_worker_count();
}
