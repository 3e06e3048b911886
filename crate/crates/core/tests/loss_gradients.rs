// With `acceptance_runner` set these are plain functions called by the acceptance target.

use dualspace_core::loss::gradcheck::{central_difference, gradients_agree, max_relative_error, ATOL, RTOL, STEP};
use dualspace_core::loss::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POINTS: usize = 100;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn vector(r: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect()
}

fn assert_grad(label: &str, analytic: &[f64], numeric: &[f64]) {
    assert!(
        gradients_agree(analytic, numeric, RTOL, ATOL),
        "{label}: max relative error {:.3e}\nanalytic {analytic:?}\nnumeric  {numeric:?}",
        max_relative_error(analytic, numeric, ATOL)
    );
}

fn flatten(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}

fn unflatten(flat: &[f64], dim: usize) -> Vec<Vec<f64>> {
    flat.chunks(dim).map(<[f64]>::to_vec).collect()
}

/// Runs `attempt` with fresh seeds until `POINTS` points were accepted.
fn at_points(mut attempt: impl FnMut(&mut ChaCha8Rng) -> bool) {
    let mut r = rng(0x5eed);
    let mut accepted = 0;
    let mut tries = 0;
    while accepted < POINTS {
        tries += 1;
        assert!(tries < 100 * POINTS, "too many rejected points");
        if attempt(&mut r) {
            accepted += 1;
        }
    }
}

#[cfg_attr(not(acceptance_runner), test)]
fn hue_distance_gradient() {
    at_points(|r| {
        let (a, b) = (r.gen_range(0.0..1.0), r.gen_range(0.0..1.0));
        let d = circular_hue_distance(a, b);
        if !(1e-3..=0.5 - 1e-3).contains(&d) {
            return false;
        }
        let (_, g) = circular_hue_distance_grad(a, b);
        let numeric = central_difference(|x| circular_hue_distance(x[0], b), &[a], STEP);
        assert_grad("hue", &[g], &numeric);
        true
    });
}

#[cfg_attr(not(acceptance_runner), test)]
fn perceptual_gradient() {
    let w = LossWeights {
        w_h: 1.3,
        w_s: 0.7,
        w_v: 0.4,
        ..Default::default()
    };
    at_points(|r| {
        let p = [r.gen_range(0.0..1.0), r.gen_range(0.05..1.0), r.gen_range(0.0..1.0)];
        let t = [r.gen_range(0.0..1.0), r.gen_range(0.05..1.0), r.gen_range(0.0..1.0)];
        let d = circular_hue_distance(p[0], t[0]);
        if !(1e-3..=0.5 - 1e-3).contains(&d) || p[0] < 1e-4 || t[0] < 1e-4 {
            return false;
        }
        let c = |v: &[f64]| ColorTarget::new(v[0], v[1], v[2]);
        let (_, gp, gt) = perceptual_loss_grad(&c(&p), &c(&t), &w);
        let np = central_difference(|x| perceptual_loss(&c(x), &c(&t), &w), &p, STEP);
        let nt = central_difference(|x| perceptual_loss(&c(&p), &c(x), &w), &t, STEP);
        assert_grad("perceptual/pred", &gp, &np);
        assert_grad("perceptual/target", &gt, &nt);
        true
    });
}

#[cfg_attr(not(acceptance_runner), test)]
fn hinge_gradient() {
    at_points(|r| {
        let pred = vector(r, 5);
        let base = vector(r, 5);
        let m = r.gen_range(0.0..5.0);
        let l1: f64 = pred.iter().zip(&base).map(|(a, b)| (a - b).abs()).sum();
        let min_gap = pred.iter().zip(&base).map(|(a, b)| (a - b).abs()).fold(f64::INFINITY, f64::min);
        if (m - l1).abs() < 1e-3 || min_gap < 1e-3 {
            return false;
        }
        let (_, g) = effect_hinge_grad(&pred, &base, m).unwrap();
        let n = central_difference(|x| effect_hinge(x, &base, m).unwrap(), &pred, STEP);
        assert_grad("effect", &g, &n);
        true
    });
}

#[cfg_attr(not(acceptance_runner), test)]
fn embedding_and_diffusion_gradients() {
    at_points(|r| {
        let a = vector(r, 6);
        let b = vector(r, 6);
        let (_, g) = embedding_consistency_grad(&a, &b).unwrap();
        let n = central_difference(|x| embedding_consistency(x, &b).unwrap(), &a, STEP);
        assert_grad("img", &g, &n);
        let (_, g) = diffusion_loss_grad(&a, &b).unwrap();
        let n = central_difference(|x| diffusion_loss(x, &b).unwrap(), &a, STEP);
        assert_grad("diff", &g, &n);
        true
    });
}

#[cfg_attr(not(acceptance_runner), test)]
fn smooth_l1_gradient() {
    at_points(|r| {
        let x: f64 = r.gen_range(-3.0..3.0);
        let beta = r.gen_range(0.2..2.0);
        if (x.abs() - beta).abs() < 1e-3 {
            return false;
        }
        let n = central_difference(|v| smooth_l1(v[0], beta), &[x], STEP);
        assert_grad("smoothl1", &[smooth_l1_derivative(x, beta)], &n);
        true
    });
}

#[cfg_attr(not(acceptance_runner), test)]
fn pairwise_gradient() {
    at_points(|r| {
        let n_items = 5;
        let dim = 4;
        let deltas: Vec<Vec<f64>> = (0..n_items).map(|_| vector(r, dim)).collect();
        let sups: Vec<Vec<f64>> = (0..n_items).map(|_| vector(r, 6)).collect();
        let beta = r.gen_range(0.1..1.0);
        let pairs = select_pairs(n_items, 0);
        for &(i, j) in &pairs {
            let dd: f64 = deltas[i].iter().zip(&deltas[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let ds: f64 = sups[i].iter().zip(&sups[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if ((dd - ds).abs() - beta).abs() < 1e-3 {
                return false;
            }
        }
        let (_, g) = pairwise_alignment_grad(&deltas, &sups, beta, &pairs).unwrap();
        let n = central_difference(
            |x| pairwise_alignment(&unflatten(x, dim), &sups, beta, &pairs).unwrap(),
            &flatten(&deltas),
            STEP,
        );
        assert_grad("pair", &flatten(&g), &n);
        true
    });
}

#[cfg_attr(not(acceptance_runner), test)]
fn directional_gradient() {
    at_points(|r| {
        let delta = vector(r, 8);
        let s = vector(r, 6);
        let (_, g) = directional_alignment_grad(&delta, &s, None).unwrap();
        let n = central_difference(|x| directional_alignment(x, &s, None).unwrap(), &delta, STEP);
        assert_grad("dir/pad", &g, &n);
        let proj = LinearMap::new(8, 6, vector(r, 48)).unwrap();
        let (_, g) = directional_alignment_grad(&delta, &s, Some(&proj)).unwrap();
        let n = central_difference(|x| directional_alignment(x, &s, Some(&proj)).unwrap(), &delta, STEP);
        assert_grad("dir/proj", &g, &n);
        true
    });
}

#[allow(clippy::needless_range_loop)]
fn random_mask(r: &mut ChaCha8Rng, n: usize) -> Vec<Vec<bool>> {
    let mut mask = vec![vec![false; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let b = r.gen_bool(0.4);
            mask[i][j] = b;
            mask[j][i] = b;
        }
    }
    mask
}

#[cfg_attr(not(acceptance_runner), test)]
fn supcon_gradient() {
    at_points(|r| {
        let n_items = 6;
        let dim = 4;
        let deltas: Vec<Vec<f64>> = (0..n_items).map(|_| vector(r, dim)).collect();
        let mask = random_mask(r, n_items);
        let tau = r.gen_range(0.2..1.0);
        let (_, g) = match supervised_contrast_grad(&deltas, &mask, tau) {
            Ok(v) => v,
            Err(LossError::AllAnchorsSkipped) => return false,
            Err(e) => panic!("{e}"),
        };
        let n = central_difference(
            |x| supervised_contrast(&unflatten(x, dim), &mask, tau).unwrap(),
            &flatten(&deltas),
            STEP,
        );
        assert_grad("supcon", &flatten(&g), &n);
        true
    });
}

#[cfg_attr(not(acceptance_runner), test)]
fn geometry_gradient() {
    let w = LossWeights {
        alpha: 0.8,
        beta: 1.1,
        gamma: 0.9,
        eta: 1.4,
        top_k: 3,
        m_far: 0.6,
        m_near: 0.2,
        ..Default::default()
    };
    at_points(|r| {
        let n_items = 6;
        let dim = 3;
        let deltas: Vec<Vec<f64>> = (0..n_items).map(|_| vector(r, dim)).collect();
        let mut us: Vec<[f64; 3]> = (0..n_items)
            .map(|_| [r.gen_range(0.0..1.0), r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)])
            .collect();
        us[1] = us[0];
        let pairs = select_pairs(n_items, 0);
        let eval = |x: &[f64]| vad_geometry_grad(&unflatten(x, dim), &us, &w, &pairs).unwrap().1;
        // reject points sitting on a hinge
        for &(i, j) in &pairs {
            let cos: f64 = {
                let (a, b) = (&deltas[i], &deltas[j]);
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                dot / (na * nb)
            };
            let dd = (1.0 - cos) / 2.0;
            if (dd - w.m_far).abs() < 1e-3 || (dd - w.m_near).abs() < 1e-3 {
                return false;
            }
        }
        let (geometry, _, g) = vad_geometry_grad(&deltas, &us, &w, &pairs).unwrap();
        assert!(geometry.same >= 0.0);
        let n = central_difference(eval, &flatten(&deltas), STEP);
        assert_grad("aff", &flatten(&g), &n);
        true
    });
}

#[cfg_attr(not(acceptance_runner), test)]
fn magnitude_gradient() {
    at_points(|r| {
        let delta = vector(r, 5);
        let r0 = r.gen_range(0.0..2.0);
        let (_, g) = magnitude_reg_grad(&delta, r0).unwrap();
        let n = central_difference(|x| magnitude_reg(x, r0).unwrap(), &delta, STEP);
        assert_grad("mag", &g, &n);
        true
    });
}

#[cfg_attr(not(acceptance_runner), test)]
fn injector_gradient() {
    at_points(|r| {
        let dim = 4;
        let k = 3;
        let map = LinearMap::new(5, dim, vector(r, 5 * dim)).unwrap();
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..k).map(|_| (vector(r, dim), vector(r, dim))).collect();
        let flat: Vec<f64> = pairs.iter().flat_map(|(a, b)| a.iter().chain(b).copied()).collect();
        let rebuild = |x: &[f64]| -> Vec<(Vec<f64>, Vec<f64>)> {
            x.chunks(2 * dim).map(|c| (c[..dim].to_vec(), c[dim..].to_vec())).collect()
        };
        let (_, g) = injector_preservation_linear_grad(&pairs, &map).unwrap();
        let analytic: Vec<f64> = g.iter().flat_map(|(a, b)| a.iter().chain(b).copied()).collect();
        let n = central_difference(|x| injector_preservation_linear_grad(&rebuild(x), &map).unwrap().0, &flat, STEP);
        assert_grad("inj", &analytic, &n);
        true
    });
}

#[cfg_attr(not(acceptance_runner), test)]
fn total_is_linear_in_components() {
    let w = LossWeights {
        lambda_img: 0.3,
        lambda_eff: 0.5,
        lambda_pair: 2.0,
        lambda_dir: 0.25,
        lambda_con: 0.1,
        lambda_mag: 0.01,
        lambda_inj: 4.0,
        alpha: 0.5,
        beta: 0.7,
        gamma: 0.9,
        eta: 1.1,
        ..Default::default()
    };
    at_points(|r| {
        let x = vector(r, 13);
        let build = |v: &[f64]| LossComponents {
            diff: v[0],
            img: v[1],
            effect: v[2],
            pair: v[3],
            dir: v[4],
            supcon: v[5],
            vad_align: v[6],
            push: v[7],
            pull: v[8],
            same: v[9],
            perc: v[10],
            mag: v[11],
            inj: v[12],
        };
        let analytic = [
            1.0, w.lambda_img, w.lambda_eff, w.lambda_pair, w.lambda_dir, w.lambda_con, w.alpha, w.beta, w.gamma,
            w.eta, 1.0, w.lambda_mag, w.lambda_inj,
        ];
        let n = central_difference(|v| total_loss(&build(v), &w).unwrap().total, &x, STEP);
        assert_grad("total", &analytic, &n);
        true
    });
}

#[cfg(acceptance_runner)]
pub fn run_all() {
    hue_distance_gradient();
    perceptual_gradient();
    hinge_gradient();
    embedding_and_diffusion_gradients();
    smooth_l1_gradient();
    pairwise_gradient();
    directional_gradient();
    supcon_gradient();
    geometry_gradient();
    magnitude_gradient();
    injector_gradient();
    total_is_linear_in_components();
}
