use std::f64::consts::{FRAC_PI_2, PI};

use super::edges::EdgeMap;
use super::image::PixelImage;

/// Acute angle between two undirected orientations in `[0, pi)`; result in
/// `[0, pi/2]`.
pub fn acute_deviation(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(PI);
    d.min(PI - d)
}

/// Mean acute orientation deviation over all unordered pairs of 8-adjacent
/// edge pixels, normalised by `pi/2`. Zero when no adjacent pairs exist.
pub fn curvilinearity(edges: &EdgeMap) -> f64 {
    let (w, h) = (edges.width() as i64, edges.height() as i64);
    let e = edges.edges();
    let o = edges.orientations();
    let mut sum = 0.0;
    let mut pairs = 0u64;
    // forward half of the 8-neighbourhood visits each unordered pair once
    const FORWARD: [(i64, i64); 4] = [(1, 0), (-1, 1), (0, 1), (1, 1)];
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            if !e[i] {
                continue;
            }
            for (dx, dy) in FORWARD {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || nx >= w || ny >= h {
                    continue;
                }
                let j = (ny * w + nx) as usize;
                if e[j] {
                    sum += acute_deviation(o[i], o[j]);
                    pairs += 1;
                }
            }
        }
    }
    if pairs == 0 {
        0.0
    } else {
        (sum / pairs as f64 / FRAC_PI_2).clamp(0.0, 1.0)
    }
}

/// Normalised Shannon entropy of the grayscale histogram and the fraction
/// of edge pixels.
pub fn complexity(image: &PixelImage, edges: &EdgeMap, bins: usize) -> (f64, f64) {
    let hist = gray_histogram(image, bins);
    let total = image.len() as f64;
    let entropy = histogram_entropy_bits(&hist, total);
    let max_bits = (bins as f64).log2();
    let normalised = if max_bits > 0.0 {
        (entropy / max_bits).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let density = edges.edge_count() as f64 / total;
    (normalised, density)
}

/// Histogram of 8-bit BT.601 luma levels folded into `bins` equal-width bins.
pub fn gray_histogram(image: &PixelImage, bins: usize) -> Vec<u64> {
    assert!((1..=256).contains(&bins), "histogram bins must be in 1..=256");
    let mut hist = vec![0u64; bins];
    for level in image.luma_levels() {
        hist[level as usize * bins / 256] += 1;
    }
    hist
}

fn histogram_entropy_bits(hist: &[u64], total: f64) -> f64 {
    let mut h = 0.0;
    for &count in hist {
        if count > 0 {
            let p = count as f64 / total;
            h -= p * p.log2();
        }
    }
    h.max(0.0)
}
