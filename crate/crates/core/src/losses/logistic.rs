//! Synthetic two-firm logistic-regression loss pair.
//!
//! Each firm holds a binary Gaussian-cluster dataset with complementary class
//! skew: the low firm sees fraction `skew` of class 0, the high firm fraction
//! `1 - skew`. Per-firm loss is the mean logistic loss divided by a fixed
//! normalizer chosen so values on the reachable region stay in [0,1]. The
//! clusters overlap substantially, which keeps the pooled problem
//! non-separable and every minimizer finite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{advance_steps, LossKindImpl, LossModel, ModelParams, Owner};
use crate::error::{Error, Result};
use crate::vecops;

const CLUSTER_SHIFT: f64 = 0.8;
const CLUSTER_SPREAD: f64 = 1.6;

#[derive(Debug, Clone)]
pub(crate) struct LogisticPair {
    z_l: Vec<Vec<f64>>,
    y_l: Vec<f64>,
    z_h: Vec<Vec<f64>>,
    y_h: Vec<f64>,
    pub(crate) normalizer: f64,
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn raw_loss(z: &[Vec<f64>], y: &[f64], x: &[f64]) -> f64 {
    let sum: f64 = z
        .iter()
        .zip(y)
        .map(|(zi, yi)| softplus(-yi * vecops::dot(zi, x)))
        .sum();
    sum / y.len() as f64
}

fn raw_grad(z: &[Vec<f64>], y: &[f64], x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    for (zi, yi) in z.iter().zip(y) {
        let margin = yi * vecops::dot(zi, x);
        let s = 1.0 / (1.0 + margin.exp()); // sigma(-margin)
        for (gk, zk) in g.iter_mut().zip(zi) {
            *gk -= yi * s * zk;
        }
    }
    g.iter_mut().for_each(|v| *v /= y.len() as f64);
    g
}

impl LogisticPair {
    pub(crate) fn eval(&self, x: &[f64], owner: Owner) -> f64 {
        let (z, y) = self.data(owner);
        raw_loss(z, y, x) / self.normalizer
    }

    pub(crate) fn grad(&self, x: &[f64], owner: Owner) -> Vec<f64> {
        let (z, y) = self.data(owner);
        let mut g = raw_grad(z, y, x);
        g.iter_mut().for_each(|v| *v /= self.normalizer);
        g
    }

    fn data(&self, owner: Owner) -> (&[Vec<f64>], &[f64]) {
        match owner {
            Owner::Low => (&self.z_l, &self.y_l),
            Owner::High => (&self.z_h, &self.y_h),
        }
    }
}

/// Damped Newton minimizer for the pooled logistic loss. Returns `None` when
/// the iterates diverge, which happens exactly when the data is separable.
fn newton_fit(z: &[Vec<f64>], y: &[f64], dim: usize) -> Option<Vec<f64>> {
    let mut x = vec![0.0; dim];
    for _ in 0..120 {
        let g = raw_grad(z, y, &x);
        if vecops::norm(&g) < 1e-12 {
            return Some(x);
        }
        // Hessian = mean sigma (1 - sigma) z z'
        let mut h = vec![vec![0.0; dim]; dim];
        for (zi, yi) in z.iter().zip(y) {
            let margin = yi * vecops::dot(zi, &x);
            let s = 1.0 / (1.0 + margin.exp());
            let w = s * (1.0 - s);
            for a in 0..dim {
                for b in a..dim {
                    h[a][b] += w * zi[a] * zi[b];
                }
            }
        }
        let n = y.len() as f64;
        for a in 0..dim {
            for b in a..dim {
                h[a][b] /= n;
                h[b][a] = h[a][b];
            }
            h[a][a] += 1e-12;
        }
        let dir = vecops::solve_spd(&h, &g)?;
        let f0 = raw_loss(z, y, &x);
        let mut t = 1.0;
        while t > 1e-10 && raw_loss(z, y, &vecops::step(&x, t, &dir)) > f0 {
            t *= 0.5;
        }
        x = vecops::step(&x, t, &dir);
        if vecops::norm(&x) > 100.0 {
            return None;
        }
    }
    Some(x)
}

/// Builds a seeded two-firm logistic instance with complementary class skews.
pub fn make_synthetic_logistic(
    n_per_firm: usize,
    dim: usize,
    skew: f64,
    seed: u64,
) -> Result<LossModel> {
    make_synthetic_logistic_with(n_per_firm, dim, skew, seed, super::DEFAULT_ADVANCE_STEPS)
}

/// As [`make_synthetic_logistic`] with an explicit head-start step count.
pub fn make_synthetic_logistic_with(
    n_per_firm: usize,
    dim: usize,
    skew: f64,
    seed: u64,
    advance: usize,
) -> Result<LossModel> {
    if n_per_firm < 10 {
        return Err(Error::InvalidTarget("n_per_firm must be at least 10".into()));
    }
    if dim == 0 {
        return Err(Error::InvalidTarget("dim must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&skew) {
        return Err(Error::InvalidTarget(format!("skew must lie in [0,1], got {skew}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // retry generation only when a draw happens to be linearly separable
    for _attempt in 0..10 {
        let mut w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = vecops::norm(&w);
        if norm < 1e-9 {
            continue;
        }
        w.iter_mut().for_each(|v| *v /= norm);

        let mut draw = |frac0: f64| -> (Vec<Vec<f64>>, Vec<f64>) {
            let n0 = (frac0 * n_per_firm as f64).round() as usize;
            let mut zs = Vec::with_capacity(n_per_firm);
            let mut ys = Vec::with_capacity(n_per_firm);
            for i in 0..n_per_firm {
                let class1 = i >= n0;
                let sign = if class1 { 1.0 } else { -1.0 };
                let z: Vec<f64> = w
                    .iter()
                    .map(|wi| sign * CLUSTER_SHIFT * wi + CLUSTER_SPREAD * gauss(&mut rng))
                    .collect();
                zs.push(z);
                ys.push(sign);
            }
            (zs, ys)
        };
        let (z_l, y_l) = draw(skew);
        let (z_h, y_h) = draw(1.0 - skew);

        let x_l_own = match newton_fit(&z_l, &y_l, dim) {
            Some(x) => x,
            None => continue,
        };
        let x_h_own = match newton_fit(&z_h, &y_h, dim) {
            Some(x) => x,
            None => continue,
        };
        let pooled_z: Vec<Vec<f64>> = z_l.iter().chain(&z_h).cloned().collect();
        let pooled_y: Vec<f64> = y_l.iter().chain(&y_h).copied().collect();
        let x_star = match newton_fit(&pooled_z, &pooled_y, dim) {
            Some(x) => x,
            None => continue,
        };

        let raw_avg = |x: &[f64]| 0.5 * (raw_loss(&z_l, &y_l, x) + raw_loss(&z_h, &y_h, x));
        // any monotone-descent trajectory starting from either initial point
        // keeps per-firm raw losses below twice the starting average
        let start_max = raw_avg(&x_l_own).max(raw_avg(&x_h_own));
        let normalizer = (2.1 * start_max).max(1.0);
        let raw_optimum_value = raw_avg(&x_star);
        let max_norm_sq = pooled_z.iter().map(|z| vecops::norm_sq(z)).fold(0.0, f64::max);
        let smoothness_l = max_norm_sq / (4.0 * normalizer);

        let pair = LogisticPair {
            z_l,
            y_l,
            z_h,
            y_h,
            normalizer,
        };
        let pair_for_adv = pair.clone();
        let avg_grad = move |x: &[f64]| -> Vec<f64> {
            let gl = pair_for_adv.grad(x, Owner::Low);
            let gh = pair_for_adv.grad(x, Owner::High);
            gl.iter().zip(&gh).map(|(a, b)| 0.5 * (a + b)).collect()
        };
        let x_h0 = advance_steps(avg_grad, x_h_own, 1.0 / smoothness_l, advance);

        let optimum_value = raw_optimum_value / normalizer;
        return LossModel::new(
            LossKindImpl::Logistic(pair),
            smoothness_l,
            ModelParams(x_star),
            optimum_value,
            ModelParams(x_l_own),
            ModelParams(x_h0),
        );
    }
    Err(Error::InvalidTarget(
        "could not draw a non-separable logistic instance".into(),
    ))
}

/// Box-Muller standard normal.
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
