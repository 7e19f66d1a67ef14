//! Complementary quadratic loss pair.
//!
//! `f(x;i) = 1/2 (x - c_i)' A_i (x - c_i) + m_i` with symmetrically placed
//! centers and proportional curvatures `A_l = beta * A_h`, `A_h = diag(lambda)`.
//! The proportional form keeps every derived quantity in closed form: the
//! average objective's minimizer sits on the segment between the centers at
//! weight `beta/(1+beta)`, and its quadratic excess there is
//! `s_h * beta/(1+beta)` where `s_h = (c_l - c_h)' A_h (c_l - c_h) / 4`.
//!
//! The offsets `m_i` are solved so the average objective's minimum hits the
//! requested value exactly and the per-firm minima differ by `asymmetry`.
//! The center separation is drawn per seed and then capped so every per-firm
//! loss stays inside [0,1] at both starting points, which bounds the whole
//! reachable region of a monotone-descent run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{advance_steps, LossKindImpl, LossModel, ModelParams, Owner, DEFAULT_ADVANCE_STEPS};
use crate::error::{Error, Result};
use crate::vecops;

#[derive(Debug, Clone)]
pub(crate) struct QuadraticPair {
    /// Diagonal of the high firm's curvature `A_h`.
    pub(crate) lambda: Vec<f64>,
    /// `A_l = beta * A_h`.
    pub(crate) beta: f64,
    pub(crate) c_l: Vec<f64>,
    pub(crate) c_h: Vec<f64>,
    pub(crate) m_l: f64,
    pub(crate) m_h: f64,
}

impl QuadraticPair {
    pub(crate) fn eval(&self, x: &[f64], owner: Owner) -> f64 {
        let (c, scale, offset) = match owner {
            Owner::Low => (&self.c_l, self.beta, self.m_l),
            Owner::High => (&self.c_h, 1.0, self.m_h),
        };
        let quad: f64 = x
            .iter()
            .zip(c.iter().zip(&self.lambda))
            .map(|(xi, (ci, li))| li * (xi - ci) * (xi - ci))
            .sum();
        0.5 * scale * quad + offset
    }

    pub(crate) fn grad(&self, x: &[f64], owner: Owner) -> Vec<f64> {
        let (c, scale) = match owner {
            Owner::Low => (&self.c_l, self.beta),
            Owner::High => (&self.c_h, 1.0),
        };
        x.iter()
            .zip(c.iter().zip(&self.lambda))
            .map(|(xi, (ci, li))| scale * li * (xi - ci))
            .collect()
    }
}

/// Builds a seeded two-firm quadratic instance whose average objective
/// bottoms out at `1 - target_q_h_max` exactly and whose per-firm minima
/// differ by `asymmetry`.
pub fn make_complementary_quadratics(
    dim: usize,
    target_q_h_max: f64,
    asymmetry: f64,
    seed: u64,
) -> Result<LossModel> {
    make_complementary_quadratics_with(dim, target_q_h_max, asymmetry, seed, DEFAULT_ADVANCE_STEPS)
}

/// As [`make_complementary_quadratics`] with an explicit head-start step
/// count for the high firm.
pub fn make_complementary_quadratics_with(
    dim: usize,
    target_q_h_max: f64,
    asymmetry: f64,
    seed: u64,
    advance: usize,
) -> Result<LossModel> {
    if dim == 0 {
        return Err(Error::InvalidTarget("dim must be at least 1".into()));
    }
    if !(target_q_h_max > 0.0 && target_q_h_max < 1.0) {
        return Err(Error::InvalidTarget(format!(
            "target_q_h_max must lie in (0,1), got {target_q_h_max}"
        )));
    }
    if asymmetry < 0.0 {
        return Err(Error::InvalidTarget("asymmetry must be non-negative".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta: f64 = rng.gen_range(0.28..0.40);
    let separation_frac: f64 = rng.gen_range(0.25..0.65);
    let lambda: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.1..0.3)).collect();
    let mut u: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let un = vecops::norm(&u);
    if un < 1e-9 {
        u = std::iter::once(1.0).chain(std::iter::repeat(0.0)).take(dim).collect();
    } else {
        u.iter_mut().for_each(|v| *v /= un);
    }

    let v_target = 1.0 - target_q_h_max;
    const MARGIN: f64 = 0.98;
    // cap the low firm's quadratic excess s_h so that the offsets stay
    // non-negative and both cross-firm losses stay below `MARGIN` at the
    // centers
    let cap_offsets = (v_target - asymmetry / 2.0) * (1.0 + beta) / beta;
    let cap_range = (MARGIN - v_target + asymmetry / 2.0) / (2.0 - beta / (1.0 + beta));
    if cap_offsets <= 0.0 {
        return Err(Error::InvalidTarget(format!(
            "asymmetry {asymmetry} leaves no offset budget for target {target_q_h_max}"
        )));
    }
    if cap_range <= 0.0 {
        return Err(Error::InvalidTarget(format!(
            "target {target_q_h_max} forces losses above 1 at the centers"
        )));
    }
    let s_h = (separation_frac * (1.0 + beta) * target_q_h_max)
        .min(cap_offsets)
        .min(cap_range);

    let u_ah_u: f64 = u.iter().zip(&lambda).map(|(ui, li)| li * ui * ui).sum();
    let radius = (s_h / u_ah_u).sqrt();
    let c_l: Vec<f64> = u.iter().map(|ui| radius * ui).collect();
    let c_h: Vec<f64> = u.iter().map(|ui| -radius * ui).collect();

    let g_star = s_h * beta / (1.0 + beta);
    let m_bar = v_target - g_star;
    let m_l = m_bar + asymmetry / 2.0;
    let m_h = m_bar - asymmetry / 2.0;
    if m_h < 0.0 || m_l > 1.0 {
        return Err(Error::InvalidTarget(format!(
            "offsets out of range: m_l={m_l}, m_h={m_h}"
        )));
    }

    let pair = QuadraticPair {
        lambda: lambda.clone(),
        beta,
        c_l: c_l.clone(),
        c_h: c_h.clone(),
        m_l,
        m_h,
    };
    // cross-firm losses at the centers bound the reachable region
    if pair.eval(&c_l, Owner::High) > 1.0 || pair.eval(&c_h, Owner::Low) > 1.0 {
        return Err(Error::InvalidTarget(
            "cross-firm loss exceeds 1 at a center".into(),
        ));
    }

    // the declared constant must cover both per-firm losses, and the high
    // firm's curvature dominates; the average objective is then L-smooth too
    let smoothness_l = lambda.iter().cloned().fold(f64::MIN, f64::max);
    let w = beta / (1.0 + beta);
    let optimum: Vec<f64> = c_h
        .iter()
        .zip(&c_l)
        .map(|(ch, cl)| ch + w * (cl - ch))
        .collect();

    // Damped head start: full 1/L steps would collapse the high firm's
    // remaining headroom on a well-conditioned quadratic.
    let pair_for_adv = pair.clone();
    let avg_grad = move |x: &[f64]| -> Vec<f64> {
        let gl = pair_for_adv.grad(x, Owner::Low);
        let gh = pair_for_adv.grad(x, Owner::High);
        gl.iter().zip(&gh).map(|(a, b)| 0.5 * (a + b)).collect()
    };
    let x_h0 = advance_steps(avg_grad, c_h.clone(), 0.1 / smoothness_l, advance);

    LossModel::new(
        LossKindImpl::Quadratic(pair),
        smoothness_l,
        ModelParams(optimum),
        v_target,
        ModelParams(c_l),
        ModelParams(x_h0),
    )
}
