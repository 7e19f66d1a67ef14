//! The four collaboration schemes as deterministic state machines.
//!
//! All schemes run full-batch gradient descent on the shared average
//! objective; they differ in who gets to step and how far:
//!
//! * `complete`: both firms descend at step `1/L`; qualities equalize and the
//!   equilibrium collapses, driving both revenues to zero.
//! * `one-sided-low`: only the high firm descends (it receives the low firm's
//!   information); both revenues are non-decreasing.
//! * `one-sided-high`: only the low firm descends; it eventually overtakes
//!   the frozen high firm, whose revenue drops on the way.
//! * `defection-free`: the high firm paces its quality growth by the uniform
//!   cap `tilde_b`, the low firm tops up each round to the revenue-preserving
//!   cap `hat_q_l` (never past the Nash ratio), and neither revenue ever
//!   decreases while the pair converges to the bargaining solution.
//!
//! The cap function `B(a, b)` gives the largest post-update quality ratio
//! that keeps both revenue-preservation quadratics non-positive; `tilde_b` is
//! the largest uniform per-round growth factor for the high firm under which
//! the low firm can keep pace toward the Nash ratio.

use serde::{Deserialize, Serialize};

use crate::bargaining::NashSolution;
use crate::error::{Error, Result};
use crate::losses::{LossModel, ModelParams, Owner};
use crate::market::{Market, QualityPair};
use crate::vecops;

/// Default grid step over the quality ratio in [`compute_tilde_b`].
pub const DEFAULT_RHO_GRID_STEP: f64 = 0.01;
/// Default search ceiling for the per-ratio growth bound.
pub const DEFAULT_B_SEARCH_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Complete,
    OneSidedHigh,
    OneSidedLow,
    DefectionFree,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Scheme::Complete => "complete",
            Scheme::OneSidedHigh => "one-sided-high",
            Scheme::OneSidedLow => "one-sided-low",
            Scheme::DefectionFree => "defection-free",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(Scheme::Complete),
            "one-sided-high" => Ok(Scheme::OneSidedHigh),
            "one-sided-low" => Ok(Scheme::OneSidedLow),
            "defection-free" => Ok(Scheme::DefectionFree),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Mutable per-round state of a run.
#[derive(Debug, Clone)]
pub struct TrainingState {
    pub round: usize,
    pub x_l: ModelParams,
    pub x_h: ModelParams,
    /// Qualities of the average objective at `x_l`, `x_h`; recomputed from
    /// the loss model every round, never carried stale.
    pub q: QualityPair,
    pub rho: f64,
}

impl TrainingState {
    /// Starting state from the model's saturation initial points.
    pub fn initial(model: &LossModel) -> Result<Self> {
        let x_l = model.initial_low().clone();
        let x_h = model.initial_high().clone();
        let q = QualityPair::new(model.quality(&x_l), model.quality(&x_h))?;
        Ok(Self {
            round: 0,
            x_l,
            x_h,
            rho: q.ratio(),
            q,
        })
    }
}

/// One row of a run trace: per-firm qualities, equilibrium quantities, the
/// bargaining objective, the learning rates spent, and defection flags.
///
/// Fields are by firm identity, not by market role: if the low firm's model
/// overtakes the high firm's, `q_l > q_h` and the market quantities come from
/// pricing with the roles relabeled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub q_l: f64,
    pub q_h: f64,
    pub rho: f64,
    pub p_l: f64,
    pub p_h: f64,
    pub u_l: f64,
    pub u_h: f64,
    pub nash_value: f64,
    /// Sum of the low firm's accepted inner-loop step sizes this round.
    pub alpha_l: f64,
    pub alpha_h: f64,
    pub defected_l: bool,
    pub defected_h: bool,
}

/// Configuration of a scheme run.
#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub rounds: usize,
    /// Uniform growth cap on the high quality; must exceed 1.
    pub tilde_b: f64,
    /// Precomputed bargaining target (carries the disagreement point).
    pub nash: NashSolution,
    pub tolerance: f64,
    /// Cap on inner low-firm steps per round; prevents livelock when
    /// gradients vanish.
    pub max_inner: usize,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, rounds: usize, tilde_b: f64, nash: NashSolution) -> Self {
        Self {
            scheme,
            rounds,
            tilde_b,
            nash,
            tolerance: 1e-9,
            max_inner: 100,
        }
    }
}

/// Cap function `B(a, b) = 4 - (4-a)^2 / (2(1-a)) * (b - sqrt(b^2 - 12(1-a)b/(4-a)^2))`.
///
/// `B(a, 1) = a` (no high-side improvement allows no low-side improvement)
/// and `B(a, b) >= a` for all `b >= 1`.
pub fn bound_b(a: f64, b: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&a) || b < 1.0 - 1e-12 || !b.is_finite() {
        return Err(Error::CapDomain { a, b });
    }
    let c = 12.0 * (1.0 - a) / (4.0 - a).powi(2);
    let disc = b * b - c * b;
    if disc < 0.0 {
        if disc > -1e-12 {
            return Ok(4.0 - (4.0 - a).powi(2) / (2.0 * (1.0 - a)) * b);
        }
        return Err(Error::NegativeDiscriminant(disc));
    }
    Ok(4.0 - (4.0 - a).powi(2) / (2.0 * (1.0 - a)) * (b - disc.sqrt()))
}

/// Right-most roots of the two revenue-preservation quadratics for a step
/// `q_h_prev -> q_h_new`: `root_high` keeps the high firm whole, `root_low`
/// the low firm. `root_high <= root_low` throughout the valid domain, so the
/// binding cap is always `root_high`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdRoots {
    pub root_high: f64,
    pub root_low: f64,
}

pub fn threshold_roots(q_prev: QualityPair, q_h_new: f64) -> Result<ThresholdRoots> {
    let (ql0, qh0) = (q_prev.q_l(), q_prev.q_h());
    if !(ql0 < qh0) || q_h_new < qh0 - 1e-12 {
        return Err(Error::InvariantViolation {
            round: None,
            what: format!(
                "threshold_roots needs q_l < q_h <= q_h_new, got ({ql0}, {qh0}) -> {q_h_new}"
            ),
        });
    }
    let rho = ql0 / qh0;
    let four_rho = 4.0 - rho;

    // high-firm quadratic, written exactly as in the revenue-preservation proof
    let t = q_h_new * q_h_new / qh0;
    let disc_h = q_h_new.powi(4) / (qh0 * qh0)
        - 12.0 * (1.0 - rho) / (four_rho * four_rho) * q_h_new.powi(3) / qh0;
    let disc_h = clamp_discriminant(disc_h, t * t)?;
    let root_high = 4.0 * q_h_new - four_rho * four_rho / (2.0 * (1.0 - rho)) * (t - disc_h.sqrt());

    // low-firm quadratic
    let disc_l = four_rho * four_rho * q_h_new * q_h_new
        - 48.0 * rho * (1.0 - rho) * qh0 * q_h_new;
    let disc_l = clamp_discriminant(disc_l, (four_rho * q_h_new).powi(2))?;
    let num = 8.0 * (1.0 - rho) * rho * qh0 + four_rho * four_rho * q_h_new + four_rho * disc_l.sqrt();
    let den = 2.0 * ((1.0 - rho) * rho * qh0 + four_rho * four_rho * q_h_new);
    let root_low = q_h_new * num / den;

    Ok(ThresholdRoots { root_high, root_low })
}

fn clamp_discriminant(disc: f64, scale: f64) -> Result<f64> {
    if disc >= 0.0 {
        Ok(disc)
    } else if disc > -1e-12 * scale.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::NegativeDiscriminant(disc))
    }
}

/// Largest low quality that preserves both firms' revenues after the high
/// firm's step: `hat_q_l = B(rho_prev, q_h_new / q_h_prev) * q_h_new`.
/// Algebraically identical to [`threshold_roots`]'s `root_high`.
pub fn hat_q_l(q_prev: QualityPair, q_h_new: f64) -> Result<f64> {
    let b = q_h_new / q_prev.q_h();
    let hat = bound_b(q_prev.ratio(), b)? * q_h_new;
    debug_assert!(
        threshold_roots(q_prev, q_h_new)
            .map(|r| (r.root_high - hat).abs() < 1e-9)
            .unwrap_or(true),
        "cap disagrees with revenue-preservation root"
    );
    Ok(hat)
}

/// Low-firm step size: by convexity, a step of
/// `min((hat_q - q_l_now) / ||grad||^2, 1)` cannot push the quality past
/// `hat_q`. Returns 0 when there is no headroom or no gradient.
pub fn alpha_low(hat_q: f64, q_l_now: f64, grad_norm_sq: f64) -> f64 {
    if grad_norm_sq <= 0.0 || hat_q <= q_l_now {
        return 0.0;
    }
    ((hat_q - q_l_now) / grad_norm_sq).min(1.0)
}

/// High-firm step size: `min((tilde_b - 1) q_h_now / ||grad||^2, 1/L)`; the
/// first term paces quality growth below `tilde_b`, the second is the safe
/// descent step. With a vanished gradient the step is a no-op and `1/L` is
/// returned.
pub fn alpha_high(q_h_now: f64, grad_norm_sq: f64, smoothness_l: f64, tilde_b: f64) -> f64 {
    if grad_norm_sq <= 0.0 {
        return 1.0 / smoothness_l;
    }
    ((tilde_b - 1.0) * q_h_now / grad_norm_sq).min(1.0 / smoothness_l)
}

/// Result of [`compute_tilde_b`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TildeB {
    pub tilde_b: f64,
    pub argmin_rho: f64,
}

/// For each ratio `rho` on a grid, finds the largest growth factor
/// `b_rho >= 1` at which `(4 - 5 rho) log10 b` is still a lower bound on
/// `B(rho, b) - rho`, then returns the minimum over the grid. Ratios whose
/// bound never crosses are capped at `b_search_max`.
pub fn compute_tilde_b(rho_grid_step: f64, b_search_max: f64) -> TildeB {
    assert!(rho_grid_step > 0.0 && rho_grid_step < 1.0);
    assert!(b_search_max > 1.0);

    let margin = |rho: f64, b: f64| -> f64 {
        let cap = bound_b(rho, b).expect("cap defined for rho in [0,1), b >= 1");
        cap - rho - (4.0 - 5.0 * rho) * b.log10()
    };

    let mut best = TildeB {
        tilde_b: b_search_max,
        argmin_rho: 0.0,
    };
    let steps = (1.0 / rho_grid_step).ceil() as usize;
    for i in 0..steps {
        let rho = i as f64 * rho_grid_step;
        if rho >= 1.0 - 1e-9 {
            break;
        }
        // scan for the first sign change, then bisect
        let scan = 1e-3;
        let mut lo = 1.0;
        let mut b_rho = b_search_max;
        let mut b = 1.0 + scan;
        while b <= b_search_max {
            if margin(rho, b) < 0.0 {
                let mut hi = b;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if margin(rho, mid) >= 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                b_rho = 0.5 * (lo + hi);
                break;
            }
            lo = b;
            b += scan;
        }
        if b_rho < best.tilde_b {
            best = TildeB {
                tilde_b: b_rho,
                argmin_rho: rho,
            };
        }
    }
    best
}

/// Per-firm market quantities with roles relabeled by current quality order:
/// market formulas require ordered qualities, so when the low firm's model
/// overtakes, it is priced in the high role while keeping its identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirmOutcome {
    pub p_l: f64,
    pub p_h: f64,
    pub u_l: f64,
    pub u_h: f64,
}

pub fn firm_outcome(market: &Market, q_low_firm: f64, q_high_firm: f64) -> Result<FirmOutcome> {
    let (pair, swapped) = QualityPair::ordered(q_low_firm, q_high_firm)?;
    let out = market.equilibrium_outcome(pair);
    Ok(if swapped {
        FirmOutcome {
            p_l: out.prices.p_h,
            p_h: out.prices.p_l,
            u_l: out.utility_h,
            u_h: out.utility_l,
        }
    } else {
        FirmOutcome {
            p_l: out.prices.p_l,
            p_h: out.prices.p_h,
            u_l: out.utility_l,
            u_h: out.utility_h,
        }
    })
}

/// Runs a scheme for `cfg.rounds` rounds and returns the per-round records
/// (index 0 is the initial state).
///
/// Fails with [`Error::DefectionDetected`] if a revenue drop occurs under
/// `defection-free` or `one-sided-low` (both are proven defection-free, so a
/// firing flag indicates an implementation bug), and with
/// [`Error::InvariantViolation`] if pacing, the low-quality cap, or the
/// high-firm descent bound is breached.
pub fn run_scheme(
    cfg: &SchemeConfig,
    model: &LossModel,
    initial: TrainingState,
) -> Result<Vec<RoundRecord>> {
    let market = Market::default();
    let d = cfg.nash.disagreement;
    let l_smooth = model.smoothness_l();
    let q_h_max = model.max_quality();

    let mut x_l = initial.x_l;
    let mut x_h = initial.x_h;
    let mut q_l = model.quality(&x_l);
    let mut q_h = model.quality(&x_h);
    let mut sum_alpha_h = 0.0;

    check_loss_range(model, &x_l, 0, cfg.tolerance)?;
    check_loss_range(model, &x_h, 0, cfg.tolerance)?;

    let mut records = Vec::with_capacity(cfg.rounds + 1);
    let push_record = |records: &mut Vec<RoundRecord>,
                       round: usize,
                       q_l: f64,
                       q_h: f64,
                       alpha_l: f64,
                       alpha_h: f64|
     -> Result<()> {
        let out = firm_outcome(&market, q_l, q_h)?;
        let (prev_u_l, prev_u_h) = records
            .last()
            .map(|r: &RoundRecord| (r.u_l, r.u_h))
            .unwrap_or((out.u_l, out.u_h));
        records.push(RoundRecord {
            round,
            q_l,
            q_h,
            rho: if q_h > 0.0 { q_l / q_h } else { 1.0 },
            p_l: out.p_l,
            p_h: out.p_h,
            u_l: out.u_l,
            u_h: out.u_h,
            nash_value: (out.u_l - d.u_l0()) * (out.u_h - d.u_h0()),
            alpha_l,
            alpha_h,
            defected_l: out.u_l < prev_u_l - 1e-9,
            defected_h: out.u_h < prev_u_h - 1e-9,
        });
        Ok(())
    };
    push_record(&mut records, 0, q_l, q_h, 0.0, 0.0)?;

    for t in 1..=cfg.rounds {
        let q_l_prev = q_l;
        let q_h_prev = q_h;
        let mut alpha_l_spent = 0.0;
        let mut alpha_h_used = 0.0;

        // high-quality model update
        if matches!(
            cfg.scheme,
            Scheme::Complete | Scheme::OneSidedLow | Scheme::DefectionFree
        ) {
            let (_, g_h) = model.avg_loss_and_grad(&x_h);
            let gn2 = vecops::norm_sq(&g_h);
            let a_h = match cfg.scheme {
                Scheme::DefectionFree => alpha_high(q_h_prev, gn2, l_smooth, cfg.tilde_b),
                _ => 1.0 / l_smooth,
            };
            x_h = ModelParams(vecops::step(x_h.as_slice(), a_h, &g_h));
            check_loss_range(model, &x_h, t, cfg.tolerance)?;
            q_h = model.quality(&x_h);
            alpha_h_used = a_h;
            sum_alpha_h += a_h;
            if cfg.scheme == Scheme::DefectionFree && q_h_prev > 0.0 {
                let growth = q_h / q_h_prev;
                if growth > cfg.tilde_b + 1e-9 {
                    return Err(Error::InvariantViolation {
                        round: Some(t),
                        what: format!("pacing breached: q_h growth {growth} > tilde_b {}", cfg.tilde_b),
                    });
                }
            }
        }

        // low-quality model update
        match cfg.scheme {
            Scheme::Complete | Scheme::OneSidedHigh => {
                let (_, g_l) = model.avg_loss_and_grad(&x_l);
                x_l = ModelParams(vecops::step(x_l.as_slice(), 1.0 / l_smooth, &g_l));
                check_loss_range(model, &x_l, t, cfg.tolerance)?;
                q_l = model.quality(&x_l);
                alpha_l_spent = 1.0 / l_smooth;
            }
            Scheme::OneSidedLow => {}
            Scheme::DefectionFree => {
                // gate on the post-high-update state: stop once the low firm
                // reaches its bargaining quality or the ratio passes rho*
                let gate = q_l_prev < cfg.nash.q_l_star && q_l_prev / q_h <= cfg.nash.rho_star;
                if gate {
                    let rho_prev = q_l_prev / q_h_prev;
                    let q_hat = if rho_prev >= 1.0 - 1e-12 {
                        // equal qualities have zero revenues; any improvement
                        // preserves them (continuous limit of the cap)
                        q_h
                    } else {
                        hat_q_l(QualityPair::new(q_l_prev, q_h_prev)?, q_h)?
                    };
                    // never step past the Nash ratio, else the gate would
                    // overshoot and the ratio could not be maintained
                    let target = q_hat.min(cfg.nash.rho_star * q_h);
                    (x_l, alpha_l_spent) =
                        low_inner_loop(model, x_l, target, cfg.max_inner, t, cfg.tolerance)?;
                    q_l = model.quality(&x_l);
                    if q_l > q_hat + 1e-9 {
                        return Err(Error::InvariantViolation {
                            round: Some(t),
                            what: format!("low cap breached: q_l {q_l} > hat {q_hat}"),
                        });
                    }
                }
            }
        }

        push_record(&mut records, t, q_l, q_h, alpha_l_spent, alpha_h_used)?;

        if matches!(cfg.scheme, Scheme::DefectionFree | Scheme::OneSidedLow) {
            let rec = records.last().unwrap();
            if rec.defected_l || rec.defected_h {
                let firm = if rec.defected_l { "low" } else { "high" };
                return Err(Error::DefectionDetected {
                    round: t,
                    firm,
                    records: Box::new(records),
                });
            }
        }
    }

    // descent bound on the high firm's quality gap, whenever it trained
    if sum_alpha_h > 0.0 {
        let dist_sq = vecops::norm_sq(&vecops::sub(
            model.initial_high().as_slice(),
            model.optimum().as_slice(),
        ));
        let bound = 2.0 * dist_sq / sum_alpha_h;
        let gap = q_h_max - q_h;
        if gap > bound + 1e-9 {
            return Err(Error::InvariantViolation {
                round: Some(cfg.rounds),
                what: format!("high-firm quality gap {gap} exceeds descent bound {bound}"),
            });
        }
    }

    Ok(records)
}

/// Takes gradient steps on the low firm's model until its quality reaches
/// `target` (within float slack) or progress stalls. A candidate step is
/// halved (up to 30 times) whenever it would overshoot the cap or decrease
/// quality; convexity makes overshoot impossible in exact arithmetic, so the
/// halvings only absorb rounding.
fn low_inner_loop(
    model: &LossModel,
    mut x_l: ModelParams,
    target: f64,
    max_inner: usize,
    round: usize,
    tolerance: f64,
) -> Result<(ModelParams, f64)> {
    const REACHED: f64 = 1e-13;
    let cap_slack = 1e-12;
    let mut spent = 0.0;
    for _ in 0..max_inner {
        let (f_l, g_l) = model.avg_loss_and_grad(&x_l);
        let q_now = 1.0 - f_l;
        if q_now + REACHED >= target {
            break;
        }
        let mut a = alpha_low(target, q_now, vecops::norm_sq(&g_l));
        if a <= 0.0 {
            break;
        }
        let mut accepted = false;
        for _ in 0..=30 {
            let x_try = ModelParams(vecops::step(x_l.as_slice(), a, &g_l));
            let q_try = model.quality(&x_try);
            if q_try <= target + cap_slack && q_try >= q_now - cap_slack {
                x_l = x_try;
                spent += a;
                accepted = true;
                break;
            }
            a *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    check_loss_range(model, &x_l, round, tolerance)?;
    Ok((x_l, spent))
}

/// Losses feed qualities, so every visited iterate must keep both per-firm
/// losses inside [0,1]; asserted, never clamped, to preserve smoothness.
fn check_loss_range(model: &LossModel, x: &ModelParams, round: usize, tol: f64) -> Result<()> {
    for owner in [Owner::Low, Owner::High] {
        let v = model.eval_owner(x, owner);
        if !((-tol..=1.0 + tol).contains(&v)) {
            return Err(Error::LossOutOfRange { round, value: v });
        }
    }
    Ok(())
}
