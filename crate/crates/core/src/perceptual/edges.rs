use std::collections::VecDeque;
use std::f64::consts::PI;

use super::image::PixelImage;
use super::ExtractionConfig;

/// Binary edge map plus the gradient orientation (radians, `[0, pi)`) of
/// every pixel. Orientation is only meaningful where `is_edge` holds.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    width: u32,
    height: u32,
    edges: Vec<bool>,
    orientation: Vec<f64>,
}

impl EdgeMap {
    pub fn new(width: u32, height: u32, edges: Vec<bool>, orientation: Vec<f64>) -> Self {
        assert_eq!(edges.len(), width as usize * height as usize);
        assert_eq!(orientation.len(), edges.len());
        EdgeMap {
            width,
            height,
            edges,
            orientation,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn edges(&self) -> &[bool] {
        &self.edges
    }

    pub fn orientations(&self) -> &[f64] {
        &self.orientation
    }

    pub fn is_edge(&self, x: u32, y: u32) -> bool {
        self.edges[y as usize * self.width as usize + x as usize]
    }

    pub fn orientation(&self, x: u32, y: u32) -> f64 {
        self.orientation[y as usize * self.width as usize + x as usize]
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|e| **e).count()
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Separable Gaussian blur of a single-channel plane with replicated borders.
pub fn gaussian_blur(plane: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    assert_eq!(plane.len(), width * height);
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;

    let mut horizontal = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                acc += w * row[clamp(x as i64 + k as i64 - radius, width)];
            }
            horizontal[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                acc += w * horizontal[clamp(y as i64 + k as i64 - radius, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Sobel gradients `(gx, gy)` with replicated borders; `y` grows downwards.
pub fn sobel(plane: &[f64], width: usize, height: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |x: i64, y: i64| {
        let xc = x.clamp(0, width as i64 - 1) as usize;
        let yc = y.clamp(0, height as i64 - 1) as usize;
        plane[yc * width + xc]
    };
    let mut gx = vec![0.0; plane.len()];
    let mut gy = vec![0.0; plane.len()];
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            let i = y as usize * width + x as usize;
            gx[i] = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            gy[i] = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        }
    }
    (gx, gy)
}

/// Folds a gradient direction onto `[0, pi)`.
pub fn fold_orientation(gx: f64, gy: f64) -> f64 {
    let t = gy.atan2(gx).rem_euclid(PI);
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// Canny edge detector: BT.601 grayscale, Gaussian smoothing, Sobel
/// gradients, non-maximum suppression and double-threshold hysteresis with
/// thresholds expressed as fractions of the maximum gradient magnitude.
pub fn canny_edges(image: &PixelImage, config: &ExtractionConfig) -> EdgeMap {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let blurred = gaussian_blur(&image.luma(), w, h, config.canny_gaussian_sigma);
    let (gx, gy) = sobel(&blurred, w, h);
    let magnitude: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let orientation: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| fold_orientation(*a, *b)).collect();

    let max = magnitude.iter().copied().fold(0.0, f64::max);
    let mut edges = vec![false; w * h];
    if max <= 0.0 {
        return EdgeMap::new(w as u32, h as u32, edges, orientation);
    }

    let mag_at = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            0.0
        } else {
            magnitude[y as usize * w + x as usize]
        }
    };
    let mut thin = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = y as usize * w + x as usize;
            let m = magnitude[i];
            if m <= 0.0 {
                continue;
            }
            let deg = orientation[i].to_degrees();
            // step along the gradient direction
            let (dx, dy) = if !(22.5..157.5).contains(&deg) {
                (1, 0)
            } else if deg < 67.5 {
                (1, 1)
            } else if deg < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let behind = mag_at(x - dx, y - dy);
            let ahead = mag_at(x + dx, y + dy);
            // asymmetric comparison keeps one pixel on two-pixel plateaus
            if m > behind && m >= ahead {
                thin[i] = m;
            }
        }
    }

    let high = config.canny_high_ratio * max;
    let low = config.canny_low_ratio * max;
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m > 0.0 && m >= high {
            edges[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if (dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edges[j] && thin[j] > 0.0 && thin[j] >= low {
                    edges[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    EdgeMap::new(w as u32, h as u32, edges, orientation)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_edges() {
        let img = PixelImage::filled(16, 12, [77, 140, 3]);
        assert_eq!(canny_edges(&img, &ExtractionConfig::default()).edge_count(), 0);
    }

    #[test]
    fn single_pixel_has_no_edges() {
        let img = PixelImage::filled(1, 1, [255, 0, 0]);
        assert_eq!(canny_edges(&img, &ExtractionConfig::default()).edge_count(), 0);
    }

    #[test]
    fn vertical_step_gives_one_vertical_line() {
        let img = PixelImage::from_fn(32, 20, |x, _| if x < 16 { [0, 0, 0] } else { [255, 255, 255] });
        let map = canny_edges(&img, &ExtractionConfig::default());
        let columns: std::collections::BTreeSet<u32> = (0..20)
            .flat_map(|y| (0..32).map(move |x| (x, y)))
            .filter(|&(x, y)| map.is_edge(x, y))
            .map(|(x, _)| x)
            .collect();
        assert_eq!(columns.len(), 1, "{columns:?}");
        let col = *columns.iter().next().unwrap();
        assert!(col == 15 || col == 16);
        for y in 0..20 {
            assert!(map.is_edge(col, y));
            let t = map.orientation(col, y);
            // analytic gradient of a vertical step is horizontal
            assert!(t.min(PI - t) < 1e-3, "orientation {t}");
        }
    }

    #[test]
    fn blur_preserves_constant_planes() {
        let plane = vec![3.5; 30];
        let out = gaussian_blur(&plane, 6, 5, 1.4);
        assert!(out.iter().all(|v| (v - 3.5).abs() < 1e-12));
        let (gx, gy) = sobel(&out, 6, 5);
        assert!(gx.iter().chain(&gy).all(|v| *v == 0.0));
    }

    #[test]
    fn orientation_folding() {
        assert_eq!(fold_orientation(1.0, 0.0), 0.0);
        assert_eq!(fold_orientation(-1.0, 0.0), 0.0);
        assert!((fold_orientation(0.0, 1.0) - PI / 2.0).abs() < 1e-12);
        assert!((fold_orientation(0.0, -1.0) - PI / 2.0).abs() < 1e-12);
    }
}
