//! Corpus curation: Laplacian-variance sharpness, threshold filtering on
//! ingested quality scores, and near-duplicate detection by difference hash
//! or supplied embeddings.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perceptual::PixelImage;
use crate::schema::AnnotationRecord;

pub const HASH_ALGORITHM: &str = "dhash-9x8-area-bt601";
pub const DEFAULT_HAMMING_THRESHOLD: u32 = 8;
pub const DEFAULT_COSINE_THRESHOLD: f64 = 0.98;
pub const DEFAULT_DROP_PERCENTILE: f64 = 5.0;
pub const SCORE_MISSING: &str = "score-missing";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurationError {
    #[error("image is {width}x{height}; sharpness needs at least 3x3")]
    DegenerateImage { width: u32, height: u32 },
    #[error("hamming threshold {0} is outside 0..=64")]
    ThresholdOutOfRange(u32),
    #[error("threshold for {0} is not finite")]
    NonFiniteThreshold(&'static str),
    #[error("percentile {0} is outside [0, 100]")]
    PercentileOutOfRange(f64),
    #[error("id {0:?} appears more than once")]
    DuplicateId(String),
    #[error("embedding file line {line}: {message}")]
    EmbeddingFormat { line: usize, message: String },
}

/// Variance of the 3x3 Laplacian response over the interior of the BT.601
/// grayscale image.
pub fn sharpness_score(image: &PixelImage) -> Result<f64, CurationError> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if w < 3 || h < 3 {
        return Err(CurationError::DegenerateImage {
            width: image.width(),
            height: image.height(),
        });
    }
    let g = image.luma();
    let mut responses = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let c = y * w + x;
            responses.push(g[c - w] + g[c + w] + g[c - 1] + g[c + 1] - 4.0 * g[c]);
        }
    }
    let n = responses.len() as f64;
    let mean = responses.iter().sum::<f64>() / n;
    let var = responses.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok(var)
}

/// Area sums of an 8-bit plane over an `out_w` x `out_h` grid of equal
/// cells. Coordinates are scaled by the output size so every overlap is an
/// integer; each cell covers exactly `w * h` scaled units of area, so the
/// sums compare exactly as area-weighted means would.
pub fn area_sums(plane: &[u8], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<u64> {
    // source pixel i spans [i * out, (i + 1) * out); output cell o spans [o * n, (o + 1) * n)
    let spans = |n: usize, out: usize| -> Vec<Vec<(usize, u64)>> {
        (0..out)
            .map(|o| {
                let (lo, hi) = (o * n, (o + 1) * n);
                (lo / out..hi.div_ceil(out).min(n))
                    .filter_map(|i| {
                        let overlap = hi.min((i + 1) * out).saturating_sub(lo.max(i * out));
                        (overlap > 0).then_some((i, overlap as u64))
                    })
                    .collect()
            })
            .collect()
    };
    let xs = spans(w, out_w);
    let ys = spans(h, out_h);
    let mut out = Vec::with_capacity(out_w * out_h);
    for ycover in &ys {
        for xcover in &xs {
            let mut acc = 0u64;
            for &(y, wy) in ycover {
                for &(x, wx) in xcover {
                    acc += wy * wx * plane[y * w + x] as u64;
                }
            }
            out.push(acc);
        }
    }
    out
}

/// 64-bit difference hash: 9x8 area-averaged BT.601 levels, bit
/// `8 * row + col` set when a cell is darker than its right neighbour.
pub fn perceptual_hash(image: &PixelImage) -> u64 {
    let small = area_sums(
        &image.luma_levels(),
        image.width() as usize,
        image.height() as usize,
        9,
        8,
    );
    let mut hash = 0u64;
    for row in 0..8 {
        for col in 0..8 {
            if small[row * 9 + col] < small[row * 9 + col + 1] {
                hash |= 1 << (row * 8 + col);
            }
        }
    }
    hash
}

pub fn hamming(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateCluster {
    pub representative_stem: String,
    /// All members including the representative, sorted.
    pub member_stems: Vec<String>,
    /// Largest Hamming distance from the representative to any member.
    pub hash_distance_max: u32,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index as root keeps results independent of pair order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn sorted_unique_ids<T>(items: &[(String, T)]) -> Result<Vec<&(String, T)>, CurationError> {
    let mut sorted: Vec<&(String, T)> = items.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    for pair in sorted.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(CurationError::DuplicateId(pair[0].0.clone()));
        }
    }
    Ok(sorted)
}

/// Groups items into single-linkage components of the graph whose edges
/// join pairs accepted by `linked`. Components of size one are dropped.
fn single_linkage<T>(items: &[&(String, T)], linked: impl Fn(&T, &T) -> bool) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(items.len());
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            if linked(&items[i].1, &items[j].1) {
                uf.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..items.len() {
        let root = uf.find(i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().filter(|g| g.len() > 1).collect()
}

/// Single-linkage clustering under `hamming <= threshold`. Output is sorted
/// by representative (the lexicographically smallest member).
pub fn dedup(hashes: &[(String, u64)], threshold: u32) -> Result<Vec<DuplicateCluster>, CurationError> {
    if threshold > 64 {
        return Err(CurationError::ThresholdOutOfRange(threshold));
    }
    let sorted = sorted_unique_ids(hashes)?;
    let groups = single_linkage(&sorted, |a, b| hamming(*a, *b) <= threshold);
    Ok(groups
        .into_iter()
        .map(|g| {
            let rep = sorted[g[0]];
            DuplicateCluster {
                representative_stem: rep.0.clone(),
                member_stems: g.iter().map(|&i| sorted[i].0.clone()).collect(),
                hash_distance_max: g.iter().map(|&i| hamming(rep.1, sorted[i].1)).max().unwrap_or(0),
            }
        })
        .collect())
}

/// Writes `representative<TAB>member<TAB>hamming` for every non-representative
/// member.
pub fn write_duplicate_list<W: Write>(
    out: &mut W,
    clusters: &[DuplicateCluster],
    hashes: &[(String, u64)],
) -> std::io::Result<()> {
    let lookup: BTreeMap<&str, u64> = hashes.iter().map(|(s, h)| (s.as_str(), *h)).collect();
    for c in clusters {
        let rep = lookup[c.representative_stem.as_str()];
        for m in c.member_stems.iter().filter(|m| **m != c.representative_stem) {
            writeln!(out, "{}\t{}\t{}", c.representative_stem, m, hamming(rep, lookup[m.as_str()]))?;
        }
    }
    Ok(())
}

/// Parses a text embedding file: a `dim <D>` header, then one
/// `<id> <v1> ... <vD>` line per item. Blank lines and `#` comments are
/// ignored. Vectors are returned unit-normalised.
pub fn parse_embeddings(text: &str) -> Result<Vec<(String, Vec<f64>)>, CurationError> {
    let err = |line: usize, message: String| CurationError::EmbeddingFormat { line, message };
    let mut dim = None;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let Some(d) = dim else {
            match (fields.next(), fields.next(), fields.next()) {
                (Some("dim"), Some(n), None) => {
                    let n: usize = n.parse().map_err(|_| err(line_no, format!("bad dimension {n:?}")))?;
                    if n == 0 {
                        return Err(err(line_no, "dimension must be positive".into()));
                    }
                    dim = Some(n);
                    continue;
                }
                _ => return Err(err(line_no, "expected header `dim <D>`".into())),
            }
        };
        let id = fields.next().expect("nonempty line has a first field").to_string();
        let values = fields
            .map(|f| f.parse::<f64>().map_err(|_| err(line_no, format!("bad number {f:?}"))))
            .collect::<Result<Vec<f64>, _>>()?;
        if values.len() != d {
            return Err(err(line_no, format!("expected {d} values, found {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(err(line_no, "non-finite value".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(err(line_no, format!("zero vector for {id}")));
        }
        out.push((id, values.into_iter().map(|v| v / norm).collect()));
    }
    if dim.is_none() {
        return Err(err(0, "missing `dim <D>` header".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingCluster {
    pub representative_stem: String,
    pub member_stems: Vec<String>,
    /// Smallest cosine similarity between the representative and a member.
    pub min_cosine_to_representative: f64,
}

fn cosine_unit(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Single-linkage clustering of unit vectors under `cosine >= threshold`.
pub fn embedding_duplicates(
    embeddings: &[(String, Vec<f64>)],
    threshold: f64,
) -> Result<Vec<EmbeddingCluster>, CurationError> {
    if !threshold.is_finite() {
        return Err(CurationError::NonFiniteThreshold("cosine"));
    }
    let sorted = sorted_unique_ids(embeddings)?;
    let groups = single_linkage(&sorted, |a, b| cosine_unit(a, b) >= threshold);
    Ok(groups
        .into_iter()
        .map(|g| {
            let rep = sorted[g[0]];
            EmbeddingCluster {
                representative_stem: rep.0.clone(),
                member_stems: g.iter().map(|&i| sorted[i].0.clone()).collect(),
                min_cosine_to_representative: g[1..]
                    .iter()
                    .map(|&i| cosine_unit(&rep.1, &sorted[i].1))
                    .fold(f64::INFINITY, f64::min),
            }
        })
        .collect())
}

/// A threshold either fixed or taken as a percentile of the corpus values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Disabled,
    Absolute(f64),
    Percentile(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub sharpness: Threshold,
    pub aesthetic: Threshold,
    pub clip_similarity: Threshold,
    /// Drop records whose score is missing for an active threshold.
    pub strict_missing: bool,
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec {
            sharpness: Threshold::Percentile(DEFAULT_DROP_PERCENTILE),
            aesthetic: Threshold::Percentile(DEFAULT_DROP_PERCENTILE),
            clip_similarity: Threshold::Disabled,
            strict_missing: false,
        }
    }
}

/// Absolute thresholds; `None` disables a check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityPolicy {
    pub min_sharpness: Option<f64>,
    pub min_aesthetic: Option<f64>,
    pub min_clip_similarity: Option<f64>,
    pub strict_missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityInput {
    pub stem: String,
    pub sharpness: f64,
    pub aesthetic_score: Option<f64>,
    pub clip_similarity: Option<f64>,
}

impl QualityInput {
    pub fn from_record(record: &AnnotationRecord, sharpness: f64) -> Self {
        QualityInput {
            stem: record.stem.clone(),
            sharpness,
            aesthetic_score: record.aesthetic_score,
            clip_similarity: record.clip_similarity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Keep,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub stem: String,
    pub sharpness: f64,
    pub aesthetic_score: Option<f64>,
    pub clip_similarity: Option<f64>,
    pub verdict: Verdict,
    pub drop_reasons: Vec<String>,
}

/// Linear-interpolation percentile (`p` in `[0, 100]`) of finite values.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Some(v[lo] + (rank - lo as f64) * (v[hi] - v[lo]))
}

/// Turns percentile thresholds into absolute ones using the full corpus, so
/// that later filtering of any subset is a fixed per-record test.
pub fn resolve_policy(spec: &PolicySpec, corpus: &[QualityInput]) -> Result<QualityPolicy, CurationError> {
    let resolve = |t: Threshold, name: &'static str, values: Vec<f64>| -> Result<Option<f64>, CurationError> {
        match t {
            Threshold::Disabled => Ok(None),
            Threshold::Absolute(x) if x.is_finite() => Ok(Some(x)),
            Threshold::Absolute(_) => Err(CurationError::NonFiniteThreshold(name)),
            Threshold::Percentile(p) if (0.0..=100.0).contains(&p) => Ok(percentile(&values, p)),
            Threshold::Percentile(p) => Err(CurationError::PercentileOutOfRange(p)),
        }
    };
    Ok(QualityPolicy {
        min_sharpness: resolve(spec.sharpness, "sharpness", corpus.iter().map(|q| q.sharpness).collect())?,
        min_aesthetic: resolve(
            spec.aesthetic,
            "aesthetic_score",
            corpus.iter().filter_map(|q| q.aesthetic_score).collect(),
        )?,
        min_clip_similarity: resolve(
            spec.clip_similarity,
            "clip_similarity",
            corpus.iter().filter_map(|q| q.clip_similarity).collect(),
        )?,
        strict_missing: spec.strict_missing,
    })
}

pub fn evaluate_quality(input: &QualityInput, policy: &QualityPolicy) -> QualityReport {
    let mut reasons = Vec::new();
    let mut missing = false;
    if let Some(min) = policy.min_sharpness {
        if input.sharpness.is_nan() || input.sharpness < min {
            reasons.push("sharpness".to_string());
        }
    }
    for (name, value, min) in [
        ("aesthetic_score", input.aesthetic_score, policy.min_aesthetic),
        ("clip_similarity", input.clip_similarity, policy.min_clip_similarity),
    ] {
        let Some(min) = min else { continue };
        match value {
            Some(v) if v >= min => {}
            Some(_) => reasons.push(name.to_string()),
            None => missing = true,
        }
    }
    if missing && policy.strict_missing {
        reasons.push(SCORE_MISSING.to_string());
    }
    QualityReport {
        stem: input.stem.clone(),
        sharpness: input.sharpness,
        aesthetic_score: input.aesthetic_score,
        clip_similarity: input.clip_similarity,
        verdict: if reasons.is_empty() { Verdict::Keep } else { Verdict::Drop },
        drop_reasons: reasons,
    }
}

/// One report per input, in input order.
pub fn filter_corpus(inputs: &[QualityInput], policy: &QualityPolicy) -> Result<Vec<QualityReport>, CurationError> {
    for (name, t) in [
        ("sharpness", policy.min_sharpness),
        ("aesthetic_score", policy.min_aesthetic),
        ("clip_similarity", policy.min_clip_similarity),
    ] {
        if t.is_some_and(|x| !x.is_finite()) {
            return Err(CurationError::NonFiniteThreshold(name));
        }
    }
    Ok(inputs.iter().map(|q| evaluate_quality(q, policy)).collect())
}

/// Stems that appear in any cluster except as its representative.
pub fn redundant_members(clusters: &[DuplicateCluster]) -> BTreeSet<String> {
    clusters
        .iter()
        .flat_map(|c| c.member_stems.iter().filter(move |m| **m != c.representative_stem).cloned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perceptual::gaussian_blur;
    use proptest::prelude::*;

    fn naive_laplacian_variance(img: &PixelImage) -> f64 {
        let (w, h) = (img.width() as i64, img.height() as i64);
        let k = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]];
        let mut vals = Vec::new();
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let mut acc = 0.0;
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let p = img.get((x + dx) as u32, (y + dy) as u32);
                        let g = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
                        acc += k[(dy + 1) as usize][(dx + 1) as usize] * g;
                    }
                }
                vals.push(acc);
            }
        }
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
    }

    fn checkerboard(n: u32) -> PixelImage {
        PixelImage::from_fn(n, n, |x, y| if (x + y) % 2 == 0 { [0; 3] } else { [255; 3] })
    }

    #[test]
    fn sharpness_cases() {
        assert_eq!(sharpness_score(&PixelImage::filled(8, 8, [90, 20, 200])).unwrap(), 0.0);
        assert!(matches!(
            sharpness_score(&PixelImage::filled(2, 9, [0; 3])),
            Err(CurationError::DegenerateImage { .. })
        ));
        let board = checkerboard(32);
        let blurred_plane = gaussian_blur(&board.luma(), 32, 32, 2.0);
        let blurred = PixelImage::from_fn(32, 32, |x, y| {
            let v = blurred_plane[(y * 32 + x) as usize].round() as u8;
            [v, v, v]
        });
        assert!(sharpness_score(&board).unwrap() > sharpness_score(&blurred).unwrap());
    }

    #[test]
    fn sharpness_matches_convolution_oracle() {
        let img = PixelImage::from_fn(23, 17, |x, y| [(x * 11 + y * 3) as u8, (x * y) as u8, (y * 29) as u8]);
        let a = sharpness_score(&img).unwrap();
        let b = naive_laplacian_variance(&img);
        assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{a} vs {b}");
    }

    #[test]
    fn hash_basics() {
        let img = PixelImage::from_fn(40, 30, |x, y| [(x * 6) as u8, (y * 8) as u8, 100]);
        assert_eq!(perceptual_hash(&img), perceptual_hash(&img.clone()));
        let white = perceptual_hash(&PixelImage::filled(16, 16, [255; 3]));
        let black = perceptual_hash(&PixelImage::filled(16, 16, [0; 3]));
        assert_eq!(hamming(white, black), 0);
        // horizontal ramp brightens rightwards: every bit set
        let ramp = PixelImage::from_fn(90, 8, |x, _| [x as u8 * 2; 3]);
        assert_eq!(perceptual_hash(&ramp), u64::MAX);
    }

    #[test]
    fn hash_ignores_halved_brightness() {
        let img = PixelImage::from_fn(37, 29, |x, y| [((x * 13 + y * 7) % 128) as u8 * 2; 3]);
        let halved = PixelImage::from_fn(37, 29, |x, y| img.get(x, y).map(|c| c / 2));
        assert_eq!(perceptual_hash(&img), perceptual_hash(&halved));
    }

    #[test]
    fn area_sums_cover_the_plane() {
        let plane: Vec<u8> = (0..35).collect();
        let out = area_sums(&plane, 7, 5, 3, 2);
        // each source pixel contributes out_w * out_h scaled units in total
        let total_in: u64 = plane.iter().map(|v| *v as u64 * 6).sum();
        assert_eq!(out.iter().sum::<u64>(), total_in);
        // upsampling a single pixel gives equal cells
        assert!(area_sums(&[4], 1, 1, 9, 8).iter().all(|v| *v == 4));
        // two pixels of two units each per cell
        assert_eq!(area_sums(&[1, 1, 3, 3], 4, 1, 2, 1), vec![4, 12]);
    }

    #[test]
    fn dedup_examples() {
        let distinct: Vec<(String, u64)> = (0..5).map(|i| (format!("s{i}"), 1u64 << i)).collect();
        assert!(dedup(&distinct, 0).unwrap().is_empty());
        let twins = vec![("b".to_string(), 42u64), ("a".to_string(), 42u64)];
        let c = dedup(&twins, 0).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].representative_stem, "a");
        assert_eq!(c[0].member_stems, vec!["a", "b"]);
        assert_eq!(dedup(&twins, 65), Err(CurationError::ThresholdOutOfRange(65)));
        let mut out = Vec::new();
        write_duplicate_list(&mut out, &c, &twins).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "a\tb\t0\n");
    }

    #[test]
    fn single_linkage_chains() {
        // a-b and b-c are within 1 bit, a-c is 2 bits apart
        let hashes = vec![("a".to_string(), 0b00u64), ("b".into(), 0b01), ("c".into(), 0b11)];
        let c = dedup(&hashes, 1).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].member_stems.len(), 3);
        assert_eq!(c[0].hash_distance_max, 2);
    }

    fn brute_force_clusters(hashes: &[(String, u64)], t: u32) -> BTreeSet<BTreeSet<String>> {
        let n = hashes.len();
        let mut comp: Vec<usize> = (0..n).collect();
        // repeated relaxation until no label changes
        loop {
            let mut changed = false;
            for i in 0..n {
                for j in 0..n {
                    if hamming(hashes[i].1, hashes[j].1) <= t && comp[j] < comp[i] {
                        comp[i] = comp[j];
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut groups: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
        for i in 0..n {
            groups.entry(comp[i]).or_default().insert(hashes[i].0.clone());
        }
        groups.into_values().filter(|g| g.len() > 1).collect()
    }

    proptest! {
        #[test]
        fn dedup_matches_pairwise_oracle(seeds in proptest::collection::vec(any::<u64>(), 50), flips in proptest::collection::vec(0u32..64, 50)) {
            // cluster-prone hashes: a few bases with sparse bit flips
            let hashes: Vec<(String, u64)> = seeds.iter().zip(&flips).enumerate()
                .map(|(i, (s, f))| (format!("img{i:03}"), (s % 4).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (1u64 << f) ^ ((s >> 8) & (s >> 16) & (s >> 24) & 0xFF)))
                .collect();
            let got: BTreeSet<BTreeSet<String>> = dedup(&hashes, 8).unwrap().into_iter()
                .map(|c| c.member_stems.into_iter().collect()).collect();
            prop_assert_eq!(got, brute_force_clusters(&hashes, 8));
        }

        #[test]
        fn dedup_is_permutation_invariant(hashes in proptest::collection::vec(any::<u16>(), 2..30), rot in 0usize..30) {
            let items: Vec<(String, u64)> = hashes.iter().enumerate().map(|(i, h)| (format!("k{i}"), *h as u64)).collect();
            let mut shuffled = items.clone();
            let r = rot % shuffled.len();
            shuffled.rotate_left(r);
            shuffled.reverse();
            prop_assert_eq!(dedup(&items, 3).unwrap(), dedup(&shuffled, 3).unwrap());
        }

        #[test]
        fn filtering_is_idempotent(values in proptest::collection::vec((0.0f64..100.0, proptest::option::of(0.0f64..10.0), proptest::option::of(-1.0f64..1.0)), 1..40), strict in any::<bool>()) {
            let inputs: Vec<QualityInput> = values.iter().enumerate().map(|(i, (s, a, c))| QualityInput {
                stem: format!("r{i}"), sharpness: *s, aesthetic_score: *a, clip_similarity: *c,
            }).collect();
            let spec = PolicySpec { clip_similarity: Threshold::Percentile(10.0), strict_missing: strict, ..PolicySpec::default() };
            let policy = resolve_policy(&spec, &inputs).unwrap();
            let reports = filter_corpus(&inputs, &policy).unwrap();
            let kept: Vec<QualityInput> = inputs.iter().zip(&reports)
                .filter(|(_, r)| r.verdict == Verdict::Keep).map(|(q, _)| q.clone()).collect();
            let again = filter_corpus(&kept, &policy).unwrap();
            prop_assert!(again.iter().all(|r| r.verdict == Verdict::Keep));
            for r in &reports {
                prop_assert_eq!(r.verdict == Verdict::Drop, !r.drop_reasons.is_empty());
            }
        }
    }

    fn policy(s: f64, a: f64, c: f64) -> QualityPolicy {
        QualityPolicy {
            min_sharpness: Some(s),
            min_aesthetic: Some(a),
            min_clip_similarity: Some(c),
            strict_missing: false,
        }
    }

    #[test]
    fn filter_examples() {
        let good = QualityInput {
            stem: "g".into(),
            sharpness: 50.0,
            aesthetic_score: Some(6.0),
            clip_similarity: Some(0.3),
        };
        let p = policy(10.0, 5.0, 0.2);
        let r = &filter_corpus(std::slice::from_ref(&good), &p).unwrap()[0];
        assert_eq!((r.verdict, r.drop_reasons.len()), (Verdict::Keep, 0));

        let low_clip = QualityInput {
            clip_similarity: Some(0.1),
            ..good.clone()
        };
        let r = &filter_corpus(&[low_clip], &p).unwrap()[0];
        assert_eq!(r.verdict, Verdict::Drop);
        assert_eq!(r.drop_reasons, vec!["clip_similarity"]);

        let missing = QualityInput {
            aesthetic_score: None,
            ..good
        };
        assert_eq!(evaluate_quality(&missing, &p).verdict, Verdict::Keep);
        let strict = QualityPolicy {
            strict_missing: true,
            ..p
        };
        assert_eq!(evaluate_quality(&missing, &strict).drop_reasons, vec![SCORE_MISSING]);
        let bad = QualityPolicy {
            min_sharpness: Some(f64::NAN),
            ..p
        };
        assert!(filter_corpus(&[], &bad).is_err());
    }

    #[test]
    fn percentile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&v, 50.0), Some(3.0));
        assert_eq!(percentile(&v, 100.0), Some(5.0));
        assert_eq!(percentile(&v, 5.0), Some(1.2));
        assert_eq!(percentile(&[], 5.0), None);
    }

    #[test]
    fn embedding_file_and_clusters() {
        let text = "# unit test\ndim 3\na 1 0 0\nb 0.999 0.01 0\nc 0 1 0\n";
        let e = parse_embeddings(text).unwrap();
        assert_eq!(e.len(), 3);
        assert!((e[1].1.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        let c = embedding_duplicates(&e, DEFAULT_COSINE_THRESHOLD).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].member_stems, vec!["a", "b"]);
        assert!(parse_embeddings("a 1 2\n").is_err());
        assert!(parse_embeddings("dim 2\na 1 2 3\n").is_err());
        assert!(parse_embeddings("dim 2\na 0 0\n").is_err());
    }
}
