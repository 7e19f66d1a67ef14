//! Convex, smooth two-firm loss models with exact gradients and known optima.
//!
//! Each model carries a pair of per-firm losses on a shared parameter space.
//! The training objective is their average; a model's quality is one minus
//! its average loss, so the best attainable quality is `1 - optimum_value`.
//! Generators produce complementary instances: each firm's own data pulls the
//! minimizer away from the shared optimum, so neither firm can reach maximum
//! quality alone.
//!
//! Starting points follow the saturation convention: the low firm starts at
//! the minimizer of its own loss, the high firm at the minimizer of its own
//! loss advanced a few gradient steps on the average objective, which is what
//! gives it the initial quality lead.

mod logistic;
mod quadratic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecops;

pub use logistic::{make_synthetic_logistic, make_synthetic_logistic_with};
pub use quadratic::{make_complementary_quadratics, make_complementary_quadratics_with};

/// Default number of head-start steps for the high firm's starting point.
pub const DEFAULT_ADVANCE_STEPS: usize = 5;

/// Point in model-parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams(pub Vec<f64>);

impl ModelParams {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ModelParams {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    Low,
    High,
}

/// A pluggable pair of convex `L`-smooth per-firm losses.
#[derive(Debug, Clone)]
pub struct LossModel {
    kind: LossKindImpl,
    smoothness_l: f64,
    optimum: ModelParams,
    optimum_value: f64,
    initial_low: ModelParams,
    initial_high: ModelParams,
}

#[derive(Debug, Clone)]
enum LossKindImpl {
    Quadratic(quadratic::QuadraticPair),
    Logistic(logistic::LogisticPair),
}

impl LossModel {
    fn new(
        kind: LossKindImpl,
        smoothness_l: f64,
        optimum: ModelParams,
        optimum_value: f64,
        initial_low: ModelParams,
        initial_high: ModelParams,
    ) -> Result<Self> {
        let model = Self {
            kind,
            smoothness_l,
            optimum,
            optimum_value,
            initial_low,
            initial_high,
        };
        let q_l0 = model.quality(&model.initial_low);
        let q_h0 = model.quality(&model.initial_high);
        if !(q_l0 < q_h0) {
            return Err(Error::InvalidTarget(format!(
                "initial qualities not ordered: q_l0={q_l0}, q_h0={q_h0}"
            )));
        }
        Ok(model)
    }

    /// Per-firm loss at `x`; values stay in [0,1] on the trainer's reachable
    /// region by construction (asserted during runs, not clamped).
    pub fn eval_owner(&self, x: &ModelParams, owner: Owner) -> f64 {
        match &self.kind {
            LossKindImpl::Quadratic(q) => q.eval(x.as_slice(), owner),
            LossKindImpl::Logistic(l) => l.eval(x.as_slice(), owner),
        }
    }

    pub fn grad_owner(&self, x: &ModelParams, owner: Owner) -> Vec<f64> {
        match &self.kind {
            LossKindImpl::Quadratic(q) => q.grad(x.as_slice(), owner),
            LossKindImpl::Logistic(l) => l.grad(x.as_slice(), owner),
        }
    }

    /// Average loss `(f(x;l) + f(x;h)) / 2` and its gradient.
    pub fn avg_loss_and_grad(&self, x: &ModelParams) -> (f64, Vec<f64>) {
        let f_l = self.eval_owner(x, Owner::Low);
        let f_h = self.eval_owner(x, Owner::High);
        let g_l = self.grad_owner(x, Owner::Low);
        let g_h = self.grad_owner(x, Owner::High);
        let grad = g_l
            .iter()
            .zip(&g_h)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        (0.5 * (f_l + f_h), grad)
    }

    pub fn avg_loss(&self, x: &ModelParams) -> f64 {
        0.5 * (self.eval_owner(x, Owner::Low) + self.eval_owner(x, Owner::High))
    }

    /// Model quality `q(x) = 1 - f(x)`.
    pub fn quality(&self, x: &ModelParams) -> f64 {
        1.0 - self.avg_loss(x)
    }

    /// Gradient Lipschitz constant of both per-firm losses (and hence of the
    /// average); `1/L` is the safe descent step.
    pub fn smoothness_l(&self) -> f64 {
        self.smoothness_l
    }

    /// Minimizer of the average objective.
    pub fn optimum(&self) -> &ModelParams {
        &self.optimum
    }

    pub fn optimum_value(&self) -> f64 {
        self.optimum_value
    }

    /// Best attainable quality, `1 - optimum_value`.
    pub fn max_quality(&self) -> f64 {
        1.0 - self.optimum_value
    }

    pub fn initial_low(&self) -> &ModelParams {
        &self.initial_low
    }

    pub fn initial_high(&self) -> &ModelParams {
        &self.initial_high
    }

    pub fn dim(&self) -> usize {
        self.optimum.dim()
    }
}

/// Plain gradient-descent head start used by the generators.
pub(crate) fn advance_steps(
    grad: impl Fn(&[f64]) -> Vec<f64>,
    start: Vec<f64>,
    step: f64,
    k: usize,
) -> Vec<f64> {
    let mut x = start;
    for _ in 0..k {
        let g = grad(&x);
        x = vecops::step(&x, step, &g);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn models() -> Vec<LossModel> {
        vec![
            make_complementary_quadratics(4, 0.55, 0.55, 7).unwrap(),
            make_complementary_quadratics(2, 0.55, 0.5, 3).unwrap(),
            make_synthetic_logistic(120, 3, 0.25, 1).unwrap(),
        ]
    }

    fn random_point(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> ModelParams {
        ModelParams((0..dim).map(|_| rng.gen_range(-scale..scale)).collect())
    }

    #[test]
    fn average_at_optimum_is_optimum_value_with_zero_grad() {
        for m in models() {
            let (f, g) = m.avg_loss_and_grad(m.optimum());
            assert_abs_diff_eq!(f, m.optimum_value(), epsilon = 1e-9);
            assert!(vecops::norm(&g) < 1e-6, "grad norm {}", vecops::norm(&g));
        }
    }

    #[test]
    fn quadratic_pair_hand_example() {
        // f(x;i) = 0.05 ||x - c_i||^2 + 0.05 with c_l = (1,0), c_h = (-1,0):
        // the average at the origin is 0.1.
        let q = quadratic::QuadraticPair {
            lambda: vec![0.1, 0.1],
            beta: 1.0,
            c_l: vec![1.0, 0.0],
            c_h: vec![-1.0, 0.0],
            m_l: 0.05,
            m_h: 0.05,
        };
        let at_origin = 0.5 * (q.eval(&[0.0, 0.0], Owner::Low) + q.eval(&[0.0, 0.0], Owner::High));
        assert_abs_diff_eq!(at_origin, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-5;
        for m in models() {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..10 {
                let x = random_point(&mut rng, m.dim(), 1.5);
                let (_, g) = m.avg_loss_and_grad(&x);
                for i in 0..m.dim() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp.0[i] += h;
                    xm.0[i] -= h;
                    let fd = (m.avg_loss(&xp) - m.avg_loss(&xm)) / (2.0 * h);
                    assert_abs_diff_eq!(g[i], fd, epsilon = 1e-5);
                }
            }
        }
    }

    #[test]
    fn losses_are_convex_along_random_segments() {
        for m in models() {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..50 {
                let x = random_point(&mut rng, m.dim(), 2.0);
                let y = random_point(&mut rng, m.dim(), 2.0);
                let lam: f64 = rng.gen_range(0.0..1.0);
                for owner in [Owner::Low, Owner::High] {
                    let mid = ModelParams(
                        x.0.iter()
                            .zip(&y.0)
                            .map(|(a, b)| lam * a + (1.0 - lam) * b)
                            .collect(),
                    );
                    let lhs = m.eval_owner(&mid, owner);
                    let rhs = lam * m.eval_owner(&x, owner) + (1.0 - lam) * m.eval_owner(&y, owner);
                    assert!(lhs <= rhs + 1e-9, "convexity violated: {lhs} > {rhs}");
                }
            }
        }
    }

    #[test]
    fn gradients_are_l_lipschitz() {
        for m in models() {
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            for _ in 0..100 {
                let x = random_point(&mut rng, m.dim(), 2.0);
                let y = random_point(&mut rng, m.dim(), 2.0);
                for owner in [Owner::Low, Owner::High] {
                    let gx = m.grad_owner(&x, owner);
                    let gy = m.grad_owner(&y, owner);
                    let lhs = vecops::norm(&vecops::sub(&gx, &gy));
                    let rhs = m.smoothness_l() * vecops::norm(&vecops::sub(&x.0, &y.0));
                    assert!(lhs <= rhs + 1e-9, "smoothness violated: {lhs} > {rhs}");
                }
            }
        }
    }

    #[test]
    fn quadratic_generator_contracts() {
        let m = make_complementary_quadratics(4, 0.95, 0.02, 1).unwrap();
        assert_abs_diff_eq!(m.optimum_value(), 0.05, epsilon = 1e-15);

        // zero asymmetry: both per-firm minima coincide
        let m = make_complementary_quadratics(3, 0.6, 0.0, 2).unwrap();
        let pair = match &m.kind {
            LossKindImpl::Quadratic(q) => q,
            _ => unreachable!(),
        };
        assert_abs_diff_eq!(pair.m_l, pair.m_h, epsilon = 1e-15);

        // determinism in the seed
        let a = make_complementary_quadratics(5, 0.55, 0.55, 9).unwrap();
        let b = make_complementary_quadratics(5, 0.55, 0.55, 9).unwrap();
        let c = make_complementary_quadratics(5, 0.55, 0.55, 10).unwrap();
        assert_eq!(a.initial_high(), b.initial_high());
        assert_eq!(a.optimum(), b.optimum());
        assert_ne!(a.optimum(), c.optimum());
    }

    #[test]
    fn quadratic_generator_rejects_impossible_targets() {
        // asymmetry larger than twice the available offset budget
        assert!(make_complementary_quadratics(4, 0.95, 0.6, 1).is_err());
    }

    #[test]
    fn quadratic_asymmetry_splits_per_firm_minima() {
        let m = make_complementary_quadratics(4, 0.55, 0.3, 4).unwrap();
        let at_low_center = m.eval_owner(m.initial_low(), Owner::Low);
        // per-firm minima differ by the requested asymmetry: m_l - m_h = 0.3
        let quad = match &m.kind {
            LossKindImpl::Quadratic(q) => q.clone(),
            _ => unreachable!(),
        };
        assert_abs_diff_eq!(at_low_center, quad.m_l, epsilon = 1e-15);
        assert_abs_diff_eq!(quad.m_l - quad.m_h, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn logistic_loss_at_origin_is_log2_over_normalizer() {
        let m = make_synthetic_logistic(120, 3, 0.25, 1).unwrap();
        let z = match &m.kind {
            LossKindImpl::Logistic(l) => l.normalizer,
            _ => unreachable!(),
        };
        let origin = ModelParams(vec![0.0; 3]);
        for owner in [Owner::Low, Owner::High] {
            assert_abs_diff_eq!(
                m.eval_owner(&origin, owner),
                std::f64::consts::LN_2 / z,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn logistic_balanced_skew_is_symmetric_in_distribution() {
        // With skew = 0.5 the two firms' datasets are exchangeable; pooled
        // per-firm losses at a common point agree within sampling noise.
        let m = make_synthetic_logistic(400, 3, 0.5, 3).unwrap();
        let x = ModelParams(vec![0.2, -0.1, 0.05]);
        let a = m.eval_owner(&x, Owner::Low);
        let b = m.eval_owner(&x, Owner::High);
        assert!((a - b).abs() < 0.05, "|{a} - {b}| too large");
    }

    #[test]
    fn logistic_determinism() {
        let a = make_synthetic_logistic(80, 2, 0.3, 12).unwrap();
        let b = make_synthetic_logistic(80, 2, 0.3, 12).unwrap();
        assert_eq!(a.initial_high(), b.initial_high());
        assert_eq!(a.optimum_value(), b.optimum_value());
    }

    #[test]
    fn initial_qualities_are_ordered() {
        for m in models() {
            assert!(m.quality(m.initial_low()) < m.quality(m.initial_high()));
            assert!(m.quality(m.initial_high()) <= m.max_quality() + 1e-12);
        }
    }
}
