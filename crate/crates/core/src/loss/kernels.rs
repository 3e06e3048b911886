use rayon::prelude::*;

use super::pairs::{select_pairs, tree_sum};
use super::types::*;

/// Pair lists longer than this are evaluated on the rayon pool.
const PARALLEL_PAIR_THRESHOLD: usize = 4096;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_vector(v: &[f64], index: usize) -> Result<(), LossError> {
    if v.is_empty() {
        return Err(LossError::EmptyInput);
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(LossError::NonFinite(index));
    }
    Ok(())
}

fn check_same_dim(a: &[f64], b: &[f64]) -> Result<(), LossError> {
    if a.len() != b.len() {
        return Err(LossError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// Validates a batch of equal-dimension finite vectors; returns the dimension.
fn check_batch<D: AsRef<[f64]>>(items: &[D]) -> Result<usize, LossError> {
    let first = items.first().ok_or(LossError::EmptyInput)?.as_ref().len();
    for (i, item) in items.iter().enumerate() {
        let v = item.as_ref();
        check_vector(v, i)?;
        if v.len() != first {
            return Err(LossError::DimensionMismatch {
                expected: first,
                found: v.len(),
            });
        }
    }
    Ok(first)
}

fn check_nonzero<D: AsRef<[f64]>>(items: &[D]) -> Result<(), LossError> {
    for (i, item) in items.iter().enumerate() {
        if norm(item.as_ref()) == 0.0 {
            return Err(LossError::ZeroVector(i));
        }
    }
    Ok(())
}

fn check_pairs(pairs: &[(usize, usize)], n: usize) -> Result<(), LossError> {
    if pairs.is_empty() {
        return Err(LossError::EmptyInput);
    }
    for &(i, j) in pairs {
        if i >= j || j >= n {
            return Err(LossError::InvalidPair(i, j));
        }
    }
    Ok(())
}

fn check_lengths(left: usize, right: usize) -> Result<(), LossError> {
    if left != right {
        return Err(LossError::LengthMismatch { left, right });
    }
    Ok(())
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x / n).collect()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Cosine similarity and its gradient with respect to `a`. Both vectors
/// must be nonzero.
pub fn cosine_with_grad(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let (na, nb) = (norm(a), norm(b));
    let cos = dot(a, b) / (na * nb);
    let grad = a
        .iter()
        .zip(b)
        .map(|(ai, bi)| bi / (na * nb) - cos * ai / (na * na))
        .collect();
    (cos, grad)
}

/// Projects `g` onto the tangent space at `v / |v|` and scales by `1 / |v|`:
/// the chain rule through vector normalisation.
fn through_normalisation(g: &[f64], v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    let z: Vec<f64> = v.iter().map(|x| x / n).collect();
    let gz = dot(g, &z);
    g.iter().zip(&z).map(|(gi, zi)| (gi - gz * zi) / n).collect()
}

/// Packs normalised VAD `u` and color target `c` into `[-1, 1]^6` via
/// `x -> 2 w x - 1` per block.
pub fn pack_supervision(
    u: [f64; 3],
    c: &ColorTarget,
    w_vad: f64,
    w_col: f64,
) -> Result<SupervisionVector, LossError> {
    for (name, value) in [("w_vad", w_vad), ("w_col", w_col)] {
        if !(value > 0.0 && value <= 1.0) {
            return Err(LossError::WeightOutOfRange { name, value });
        }
    }
    for value in u {
        if !(0.0..=1.0).contains(&value) {
            return Err(LossError::InputOutOfRange { name: "u", value });
        }
    }
    c.validate()?;
    let mut s = [0.0; 6];
    for k in 0..3 {
        s[k] = 2.0 * w_vad * u[k] - 1.0;
    }
    for (k, x) in [c.h, c.s, c.v].into_iter().enumerate() {
        s[3 + k] = 2.0 * w_col * x - 1.0;
    }
    Ok(SupervisionVector::from_array(s))
}

/// `min(|h1 - h2|, 1 - |h1 - h2|)` on the unit hue circle.
pub fn circular_hue_distance(h1: f64, h2: f64) -> f64 {
    circular_hue_distance_grad(h1, h2).0
}

/// Distance and its derivative with respect to `h1` (the derivative with
/// respect to `h2` is the negation).
pub fn circular_hue_distance_grad(h1: f64, h2: f64) -> (f64, f64) {
    let raw = h1.rem_euclid(1.0) - h2.rem_euclid(1.0);
    let a = raw.abs();
    if a <= 0.5 {
        (a, sign(raw))
    } else {
        (1.0 - a, -sign(raw))
    }
}

/// Saturation-gated hue error plus squared saturation and value errors.
pub fn perceptual_loss(pred: &ColorTarget, target: &ColorTarget, w: &LossWeights) -> f64 {
    perceptual_loss_grad(pred, target, w).0
}

/// Loss with gradients with respect to `pred` and `target` as `[h, s, v]`.
pub fn perceptual_loss_grad(pred: &ColorTarget, target: &ColorTarget, w: &LossWeights) -> (f64, [f64; 3], [f64; 3]) {
    let (dh, ddh) = circular_hue_distance_grad(pred.h, target.h);
    let g = ((target.s + pred.s) / 2.0).max(0.0).sqrt();
    let hue_sq = (2.0 * dh).powi(2);
    let ds = pred.s - target.s;
    let dv = pred.v - target.v;
    let value = w.w_h * g * hue_sq + w.w_s * ds * ds + w.w_v * dv * dv;

    let d_hue = w.w_h * g * 8.0 * dh * ddh;
    let d_gate = if g > 0.0 { w.w_h * hue_sq / (4.0 * g) } else { 0.0 };
    let grad_pred = [d_hue, d_gate + 2.0 * w.w_s * ds, 2.0 * w.w_v * dv];
    let grad_target = [-d_hue, d_gate - 2.0 * w.w_s * ds, -2.0 * w.w_v * dv];
    (value, grad_pred, grad_target)
}

/// `[m - |pred - base|_1]_+`.
pub fn effect_hinge(pred: &[f64], base: &[f64], m: f64) -> Result<f64, LossError> {
    Ok(effect_hinge_grad(pred, base, m)?.0)
}

/// Hinge value and its subgradient with respect to `pred`.
pub fn effect_hinge_grad(pred: &[f64], base: &[f64], m: f64) -> Result<(f64, Vec<f64>), LossError> {
    check_same_dim(pred, base)?;
    if !(m.is_finite() && m >= 0.0) {
        return Err(LossError::WeightOutOfRange { name: "m", value: m });
    }
    let l1: f64 = pred.iter().zip(base).map(|(a, b)| (a - b).abs()).sum();
    let slack = m - l1;
    if slack > 0.0 {
        Ok((slack, pred.iter().zip(base).map(|(a, b)| -sign(a - b)).collect()))
    } else {
        Ok((0.0, vec![0.0; pred.len()]))
    }
}

/// `1 - cos(e1, e2)`.
pub fn embedding_consistency(e1: &[f64], e2: &[f64]) -> Result<f64, LossError> {
    Ok(embedding_consistency_grad(e1, e2)?.0)
}

/// Value and gradient with respect to `e1`.
pub fn embedding_consistency_grad(e1: &[f64], e2: &[f64]) -> Result<(f64, Vec<f64>), LossError> {
    check_same_dim(e1, e2)?;
    check_vector(e1, 0)?;
    check_vector(e2, 1)?;
    check_nonzero(&[e1, e2])?;
    let (cos, g) = cosine_with_grad(e1, e2);
    Ok(((1.0 - cos).clamp(0.0, 2.0), g.into_iter().map(|x| -x).collect()))
}

/// `|eps_hat - eps|_2^2`.
pub fn diffusion_loss(eps_hat: &[f64], eps: &[f64]) -> Result<f64, LossError> {
    Ok(diffusion_loss_grad(eps_hat, eps)?.0)
}

pub fn diffusion_loss_grad(eps_hat: &[f64], eps: &[f64]) -> Result<(f64, Vec<f64>), LossError> {
    check_same_dim(eps_hat, eps)?;
    let diff: Vec<f64> = eps_hat.iter().zip(eps).map(|(a, b)| a - b).collect();
    Ok((dot(&diff, &diff), diff.iter().map(|d| 2.0 * d).collect()))
}

/// `0.5 x^2 / beta` for `|x| <= beta`, else `|x| - 0.5 beta`.
pub fn smooth_l1(x: f64, beta: f64) -> f64 {
    if x.abs() <= beta {
        0.5 * x * x / beta
    } else {
        x.abs() - 0.5 * beta
    }
}

pub fn smooth_l1_derivative(x: f64, beta: f64) -> f64 {
    if x.abs() <= beta {
        x / beta
    } else {
        sign(x)
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn map_pairs<F>(pairs: &[(usize, usize)], f: F) -> Vec<f64>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    if pairs.len() > PARALLEL_PAIR_THRESHOLD {
        pairs.par_iter().map(|&(i, j)| f(i, j)).collect()
    } else {
        pairs.iter().map(|&(i, j)| f(i, j)).collect()
    }
}

fn check_pairwise_inputs<D: AsRef<[f64]>, S: AsRef<[f64]>>(
    deltas: &[D],
    supervisions: &[S],
    beta: f64,
    pairs: &[(usize, usize)],
) -> Result<(), LossError> {
    check_lengths(deltas.len(), supervisions.len())?;
    if deltas.len() < 2 {
        return Err(LossError::TooFewItems {
            needed: 2,
            got: deltas.len(),
        });
    }
    check_batch(deltas)?;
    check_batch(supervisions)?;
    if !(beta.is_finite() && beta > 0.0) {
        return Err(LossError::WeightOutOfRange {
            name: "smoothl1_beta",
            value: beta,
        });
    }
    check_pairs(pairs, deltas.len())
}

/// Mean SmoothL1 between delta-space and supervision-space Euclidean
/// distances over `pairs` (see [`select_pairs`]).
pub fn pairwise_alignment<D, S>(
    deltas: &[D],
    supervisions: &[S],
    beta: f64,
    pairs: &[(usize, usize)],
) -> Result<f64, LossError>
where
    D: AsRef<[f64]> + Sync,
    S: AsRef<[f64]> + Sync,
{
    check_pairwise_inputs(deltas, supervisions, beta, pairs)?;
    let terms = map_pairs(pairs, |i, j| {
        let dd = distance(deltas[i].as_ref(), deltas[j].as_ref());
        let ds = distance(supervisions[i].as_ref(), supervisions[j].as_ref());
        smooth_l1(dd - ds, beta)
    });
    Ok(tree_sum(&terms) / pairs.len() as f64)
}

/// [`pairwise_alignment`] over every pair (or the seeded sample above 512
/// items).
pub fn pairwise_alignment_all<D, S>(deltas: &[D], supervisions: &[S], beta: f64, seed: u64) -> Result<f64, LossError>
where
    D: AsRef<[f64]> + Sync,
    S: AsRef<[f64]> + Sync,
{
    pairwise_alignment(deltas, supervisions, beta, &select_pairs(deltas.len(), seed))
}

/// Value and gradient with respect to every delta. Coincident deltas
/// contribute a zero subgradient.
pub fn pairwise_alignment_grad<D, S>(
    deltas: &[D],
    supervisions: &[S],
    beta: f64,
    pairs: &[(usize, usize)],
) -> Result<(f64, Vec<Vec<f64>>), LossError>
where
    D: AsRef<[f64]> + Sync,
    S: AsRef<[f64]> + Sync,
{
    let value = pairwise_alignment(deltas, supervisions, beta, pairs)?;
    let dim = deltas[0].as_ref().len();
    let mut grads = vec![vec![0.0; dim]; deltas.len()];
    let scale = 1.0 / pairs.len() as f64;
    for &(i, j) in pairs {
        let (a, b) = (deltas[i].as_ref(), deltas[j].as_ref());
        let dd = distance(a, b);
        if dd == 0.0 {
            continue;
        }
        let ds = distance(supervisions[i].as_ref(), supervisions[j].as_ref());
        let g = scale * smooth_l1_derivative(dd - ds, beta) / dd;
        for k in 0..dim {
            let step = g * (a[k] - b[k]);
            grads[i][k] += step;
            grads[j][k] -= step;
        }
    }
    Ok((value, grads))
}

fn project_supervision(s: &[f64], dim: usize, projection: Option<&LinearMap>) -> Result<Vec<f64>, LossError> {
    match projection {
        Some(p) => {
            let out = p.apply(s)?;
            if out.len() != dim {
                return Err(LossError::DimensionMismatch {
                    expected: dim,
                    found: out.len(),
                });
            }
            Ok(out)
        }
        None => {
            let mut out = vec![0.0; dim];
            for (slot, x) in out.iter_mut().zip(s) {
                *slot = *x;
            }
            Ok(out)
        }
    }
}

/// `1 - cos(delta, f(s))`, with `f` the supplied projection or, by
/// default, zero-padding / truncation of `s` to the delta dimension.
pub fn directional_alignment(delta: &[f64], s: &[f64], projection: Option<&LinearMap>) -> Result<f64, LossError> {
    Ok(directional_alignment_grad(delta, s, projection)?.0)
}

/// Value and gradient with respect to `delta`.
pub fn directional_alignment_grad(
    delta: &[f64],
    s: &[f64],
    projection: Option<&LinearMap>,
) -> Result<(f64, Vec<f64>), LossError> {
    check_vector(delta, 0)?;
    check_vector(s, 1)?;
    let f = project_supervision(s, delta.len(), projection)?;
    check_nonzero(&[delta, &f[..]])?;
    let (cos, g) = cosine_with_grad(delta, &f);
    Ok(((1.0 - cos).clamp(0.0, 2.0), g.into_iter().map(|x| -x).collect()))
}

fn check_mask(mask: &[Vec<bool>], n: usize) -> Result<(), LossError> {
    if mask.len() != n {
        return Err(LossError::InvalidMask(format!("{} rows for {n} items", mask.len())));
    }
    for (i, row) in mask.iter().enumerate() {
        if row.len() != n {
            return Err(LossError::InvalidMask(format!("row {i} has {} columns", row.len())));
        }
        if row[i] {
            return Err(LossError::InvalidMask(format!("diagonal entry {i} is set")));
        }
        for (j, other) in mask.iter().enumerate().take(i) {
            if row[j] != other[i] {
                return Err(LossError::InvalidMask(format!("entries ({i},{j}) and ({j},{i}) differ")));
            }
        }
    }
    Ok(())
}

/// Builds the positive mask for samples sharing an emotion or a scene.
pub fn shared_label_mask<E: PartialEq, S: PartialEq>(emotions: &[E], scenes: &[S]) -> Vec<Vec<bool>> {
    let n = emotions.len().min(scenes.len());
    (0..n)
        .map(|i| (0..n).map(|j| i != j && (emotions[i] == emotions[j] || scenes[i] == scenes[j])).collect())
        .collect()
}

/// Supervised contrastive loss over cosine similarities at `temperature`,
/// averaged over anchors that have at least one positive.
pub fn supervised_contrast<D: AsRef<[f64]>>(deltas: &[D], mask: &[Vec<bool>], temperature: f64) -> Result<f64, LossError> {
    Ok(supervised_contrast_grad(deltas, mask, temperature)?.0)
}

pub fn supervised_contrast_grad<D: AsRef<[f64]>>(
    deltas: &[D],
    mask: &[Vec<bool>],
    temperature: f64,
) -> Result<(f64, Vec<Vec<f64>>), LossError> {
    let n = deltas.len();
    if n < 2 {
        return Err(LossError::TooFewItems { needed: 2, got: n });
    }
    let dim = check_batch(deltas)?;
    check_nonzero(deltas)?;
    check_mask(mask, n)?;
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(LossError::WeightOutOfRange {
            name: "supcon_temperature",
            value: temperature,
        });
    }
    let z: Vec<Vec<f64>> = deltas.iter().map(|d| unit(d.as_ref())).collect();
    let anchors: Vec<usize> = (0..n).filter(|&i| mask[i].iter().any(|m| *m)).collect();
    if anchors.is_empty() {
        return Err(LossError::AllAnchorsSkipped);
    }
    let inv_anchors = 1.0 / anchors.len() as f64;
    let mut per_anchor = Vec::with_capacity(anchors.len());
    let mut grad_z = vec![vec![0.0; dim]; n];
    for &i in &anchors {
        let sims: Vec<f64> = (0..n).map(|a| dot(&z[i], &z[a]) / temperature).collect();
        let max = (0..n).filter(|&a| a != i).map(|a| sims[a]).fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = (0..n).filter(|&a| a != i).map(|a| (sims[a] - max).exp()).sum();
        let log_z = max + denom.ln();
        let positives: Vec<usize> = (0..n).filter(|&a| mask[i][a]).collect();
        let inv_pos = 1.0 / positives.len() as f64;
        let mean_pos: f64 = positives.iter().map(|&p| sims[p]).sum::<f64>() * inv_pos;
        per_anchor.push(log_z - mean_pos);
        for a in (0..n).filter(|&a| a != i) {
            let softmax = (sims[a] - log_z).exp();
            let target = if mask[i][a] { inv_pos } else { 0.0 };
            let c = inv_anchors * (softmax - target) / temperature;
            for k in 0..dim {
                grad_z[i][k] += c * z[a][k];
                grad_z[a][k] += c * z[i][k];
            }
        }
    }
    let value = tree_sum(&per_anchor) * inv_anchors;
    let grads = grad_z
        .iter()
        .zip(deltas)
        .map(|(g, d)| through_normalisation(g, d.as_ref()))
        .collect();
    Ok((value, grads))
}

fn vad_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    distance(a, b) / 3f64.sqrt()
}

struct GeometrySets {
    far: Vec<usize>,
    near: Vec<usize>,
    same: Vec<usize>,
}

/// Positions in `pairs` of the top-k far pairs, top-k near pairs and
/// almost-identical pairs under `du`; ties keep pair order.
fn geometry_sets(du: &[f64], top_k: usize, eps_same: f64) -> GeometrySets {
    let mut order: Vec<usize> = (0..du.len()).collect();
    order.sort_by(|&a, &b| du[b].total_cmp(&du[a]));
    let far = order.iter().copied().take(top_k).collect();
    order.sort_by(|&a, &b| du[a].total_cmp(&du[b]));
    let near = order.iter().copied().take(top_k).collect();
    let same = (0..du.len()).filter(|&p| du[p] <= eps_same).collect();
    GeometrySets { far, near, same }
}

/// VAD-geometry terms on `pairs`: alignment MSE between cosine and VAD
/// distances, push on far pairs, pull on near pairs, and the same-VAD term.
pub fn vad_geometry<D: AsRef<[f64]>>(
    deltas: &[D],
    us: &[[f64; 3]],
    weights: &LossWeights,
    pairs: &[(usize, usize)],
) -> Result<VadGeometry, LossError> {
    Ok(vad_geometry_grad(deltas, us, weights, pairs)?.0)
}

/// Geometry terms, the weighted affect objective
/// `alpha align + beta push + gamma pull + eta same`, and its gradient with
/// respect to every delta.
pub fn vad_geometry_grad<D: AsRef<[f64]>>(
    deltas: &[D],
    us: &[[f64; 3]],
    w: &LossWeights,
    pairs: &[(usize, usize)],
) -> Result<(VadGeometry, f64, Vec<Vec<f64>>), LossError> {
    check_lengths(deltas.len(), us.len())?;
    if deltas.len() < 2 {
        return Err(LossError::TooFewItems {
            needed: 2,
            got: deltas.len(),
        });
    }
    let dim = check_batch(deltas)?;
    check_nonzero(deltas)?;
    for u in us {
        for &value in u {
            if !(0.0..=1.0).contains(&value) {
                return Err(LossError::InputOutOfRange { name: "u", value });
            }
        }
    }
    check_pairs(pairs, deltas.len())?;
    let z: Vec<Vec<f64>> = deltas.iter().map(|d| unit(d.as_ref())).collect();
    let d_delta: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| ((1.0 - dot(&z[i], &z[j])) / 2.0).clamp(0.0, 1.0))
        .collect();
    let d_u: Vec<f64> = pairs.iter().map(|&(i, j)| vad_distance(&us[i], &us[j])).collect();
    let sets = geometry_sets(&d_u, w.top_k, w.eps_same);

    let sq: Vec<f64> = d_delta.iter().zip(&d_u).map(|(a, b)| (a - b).powi(2)).collect();
    let align = tree_sum(&sq) / pairs.len() as f64;
    let mean_over = |idx: &[usize], f: &dyn Fn(usize) -> f64| -> f64 {
        if idx.is_empty() {
            0.0
        } else {
            tree_sum(&idx.iter().map(|&p| f(p)).collect::<Vec<_>>()) / idx.len() as f64
        }
    };
    let push = mean_over(&sets.far, &|p| (w.m_far - d_delta[p]).max(0.0));
    let pull = mean_over(&sets.near, &|p| (d_delta[p] - w.m_near).max(0.0));
    let same = mean_over(&sets.same, &|p| d_delta[p].powi(2));
    let geometry = VadGeometry { align, push, pull, same };
    let objective = w.alpha * align + w.beta * push + w.gamma * pull + w.eta * same;

    // dL / d(d_delta) per pair
    let mut g_pair: Vec<f64> = d_delta
        .iter()
        .zip(&d_u)
        .map(|(a, b)| w.alpha * 2.0 * (a - b) / pairs.len() as f64)
        .collect();
    for &p in &sets.far {
        if w.m_far - d_delta[p] > 0.0 {
            g_pair[p] -= w.beta / sets.far.len() as f64;
        }
    }
    for &p in &sets.near {
        if d_delta[p] - w.m_near > 0.0 {
            g_pair[p] += w.gamma / sets.near.len() as f64;
        }
    }
    for &p in &sets.same {
        g_pair[p] += w.eta * 2.0 * d_delta[p] / sets.same.len() as f64;
    }
    let mut grad_z = vec![vec![0.0; dim]; deltas.len()];
    for (p, &(i, j)) in pairs.iter().enumerate() {
        // d_delta = (1 - z_i . z_j) / 2
        for k in 0..dim {
            grad_z[i][k] -= 0.5 * g_pair[p] * z[j][k];
            grad_z[j][k] -= 0.5 * g_pair[p] * z[i][k];
        }
    }
    let grads = grad_z
        .iter()
        .zip(deltas)
        .map(|(g, d)| through_normalisation(g, d.as_ref()))
        .collect();
    Ok((geometry, objective, grads))
}

/// `(|delta|_2 - r0)^2`.
pub fn magnitude_reg(delta: &[f64], r0: f64) -> Result<f64, LossError> {
    Ok(magnitude_reg_grad(delta, r0)?.0)
}

/// Value and gradient; the zero vector gets a zero subgradient.
pub fn magnitude_reg_grad(delta: &[f64], r0: f64) -> Result<(f64, Vec<f64>), LossError> {
    check_vector(delta, 0)?;
    if !(r0.is_finite() && r0 >= 0.0) {
        return Err(LossError::WeightOutOfRange { name: "r0", value: r0 });
    }
    let n = norm(delta);
    let value = (n - r0).powi(2);
    let grad = if n > 0.0 {
        delta.iter().map(|x| 2.0 * (n - r0) * x / n).collect()
    } else {
        vec![0.0; delta.len()]
    };
    Ok((value, grad))
}

/// MSE between `cos(a, b)` and `cos(I(a), I(b))` over supplied pairs and
/// their injected images.
pub fn injector_preservation<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    pairs: &[(A, A)],
    injected: &[(B, B)],
) -> Result<f64, LossError> {
    check_lengths(pairs.len(), injected.len())?;
    if pairs.is_empty() {
        return Err(LossError::EmptyInput);
    }
    let mut terms = Vec::with_capacity(pairs.len());
    for (k, ((a, b), (ia, ib))) in pairs.iter().zip(injected).enumerate() {
        let (a, b, ia, ib) = (a.as_ref(), b.as_ref(), ia.as_ref(), ib.as_ref());
        check_same_dim(a, b)?;
        check_same_dim(ia, ib)?;
        for (offset, v) in [a, b, ia, ib].into_iter().enumerate() {
            if norm(v) == 0.0 {
                return Err(LossError::ZeroVector(4 * k + offset));
            }
        }
        terms.push((cosine_with_grad(a, b).0 - cosine_with_grad(ia, ib).0).powi(2));
    }
    Ok(tree_sum(&terms) / pairs.len() as f64)
}

/// [`injector_preservation`] for a fixed linear injector, with gradients
/// with respect to both members of every pair.
#[allow(clippy::type_complexity)]
pub fn injector_preservation_linear_grad<A: AsRef<[f64]>>(
    pairs: &[(A, A)],
    injector: &LinearMap,
) -> Result<(f64, Vec<(Vec<f64>, Vec<f64>)>), LossError> {
    let injected = pairs
        .iter()
        .map(|(a, b)| Ok((injector.apply(a.as_ref())?, injector.apply(b.as_ref())?)))
        .collect::<Result<Vec<_>, LossError>>()?;
    let value = injector_preservation(pairs, &injected)?;
    let scale = 2.0 / pairs.len() as f64;
    let grads = pairs
        .iter()
        .zip(&injected)
        .map(|((a, b), (ia, ib))| {
            let (a, b) = (a.as_ref(), b.as_ref());
            let (c0, ga) = cosine_with_grad(a, b);
            let (_, gb) = cosine_with_grad(b, a);
            let (c1, gia) = cosine_with_grad(ia, ib);
            let (_, gib) = cosine_with_grad(ib, ia);
            let diff = scale * (c0 - c1);
            let back_a = injector.apply_transpose(&gia);
            let back_b = injector.apply_transpose(&gib);
            (
                ga.iter().zip(&back_a).map(|(x, y)| diff * (x - y)).collect(),
                gb.iter().zip(&back_b).map(|(x, y)| diff * (x - y)).collect(),
            )
        })
        .collect();
    Ok((value, grads))
}

/// Weighted grouping of every term into the generation, alignment, affect,
/// perceptual and regularisation objectives, and their sum.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<LossBreakdown, LossError> {
    for (name, value) in c.named() {
        if !value.is_finite() {
            return Err(LossError::NonFiniteComponent(name));
        }
    }
    let gen = c.diff + w.lambda_img * c.img + w.lambda_eff * c.effect;
    let align = w.lambda_pair * c.pair + w.lambda_dir * c.dir + w.lambda_con * c.supcon;
    let aff = w.alpha * c.vad_align + w.beta * c.push + w.gamma * c.pull + w.eta * c.same;
    let perc = c.perc;
    let reg = w.lambda_mag * c.mag + w.lambda_inj * c.inj;
    Ok(LossBreakdown {
        gen,
        align,
        aff,
        perc,
        reg,
        total: gen + align + aff + perc + reg,
        components: *c,
    })
}

/// Everything needed to evaluate the full objective on one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBatch {
    pub eps_hat: Vec<f64>,
    pub eps: Vec<f64>,
    pub eps_base: Vec<f64>,
    pub image_embedding: Vec<f64>,
    pub reference_embedding: Vec<f64>,
    pub deltas: Vec<Vec<f64>>,
    pub supervisions: Vec<SupervisionVector>,
    pub us: Vec<[f64; 3]>,
    pub mask: Vec<Vec<bool>>,
    pub pred_color: ColorTarget,
    pub target_color: ColorTarget,
    pub injector: LinearMap,
    pub projection: Option<LinearMap>,
}

/// Evaluates every term of a batch. Per-sample terms (direction, magnitude)
/// are averaged over the batch; `inj` uses every selected pair.
pub fn evaluate_components(batch: &LossBatch, w: &LossWeights, seed: u64) -> Result<LossComponents, LossError> {
    w.validate()?;
    let n = batch.deltas.len();
    let pairs = select_pairs(n, seed);
    let mut dir = Vec::with_capacity(n);
    let mut mag = Vec::with_capacity(n);
    for (d, s) in batch.deltas.iter().zip(&batch.supervisions) {
        dir.push(directional_alignment(d, s.as_ref(), batch.projection.as_ref())?);
        mag.push(magnitude_reg(d, w.r0)?);
    }
    let geometry = vad_geometry(&batch.deltas, &batch.us, w, &pairs)?;
    let delta_pairs: Vec<(&[f64], &[f64])> = pairs
        .iter()
        .map(|&(i, j)| (batch.deltas[i].as_slice(), batch.deltas[j].as_slice()))
        .collect();
    Ok(LossComponents {
        diff: diffusion_loss(&batch.eps_hat, &batch.eps)?,
        img: embedding_consistency(&batch.image_embedding, &batch.reference_embedding)?,
        effect: effect_hinge(&batch.eps_hat, &batch.eps_base, w.m)?,
        pair: pairwise_alignment(&batch.deltas, &batch.supervisions, w.smoothl1_beta, &pairs)?,
        dir: tree_sum(&dir) / n as f64,
        supcon: supervised_contrast(&batch.deltas, &batch.mask, w.supcon_temperature)?,
        vad_align: geometry.align,
        push: geometry.push,
        pull: geometry.pull,
        same: geometry.same,
        perc: perceptual_loss(&batch.pred_color, &batch.target_color, w),
        mag: tree_sum(&mag) / n as f64,
        inj: injector_preservation_linear_grad(&delta_pairs, &batch.injector)?.0,
    })
}
