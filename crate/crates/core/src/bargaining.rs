//! Nash bargaining over the quality pair.
//!
//! The bargaining problem maximizes the product of both firms' revenue
//! improvements over a disagreement point, subject to neither revenue
//! falling below its disagreement value. Since both revenues increase in
//! `q_h`, the solution always sits at the maximum attainable high quality;
//! what remains is a one-dimensional search over `q_l`. Both revenues are
//! degree-1 homogeneous in the qualities, so the search is normalized to
//! `q_h = 1`, where the stationarity condition reduces to a cubic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Market, QualityPair};

/// Default golden-section tolerance for [`solve_nash`].
pub const DEFAULT_GOLDEN_TOL: f64 = 1e-10;
/// Default grid step for [`nash_grid_oracle`].
pub const DEFAULT_GRID_STEP: f64 = 1e-5;

/// Fallback point of a failed negotiation: the current qualities and the
/// equilibrium revenues they already guarantee each firm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisagreementPoint {
    q0: QualityPair,
    u_l0: f64,
    u_h0: f64,
}

impl DisagreementPoint {
    /// The disagreement utilities are always recomputed from the qualities,
    /// never supplied by the caller.
    pub fn from_qualities(market: &Market, q0: QualityPair) -> Self {
        let out = market.equilibrium_outcome(q0);
        Self {
            q0,
            u_l0: out.utility_l,
            u_h0: out.utility_h,
        }
    }

    pub fn q0(&self) -> QualityPair {
        self.q0
    }

    pub fn u_l0(&self) -> f64 {
        self.u_l0
    }

    pub fn u_h0(&self) -> f64 {
        self.u_h0
    }
}

/// Solution of the bargaining problem for a given disagreement point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NashSolution {
    pub q_l_star: f64,
    pub q_h_star: f64,
    /// `q_l_star / q_h_star`.
    pub rho_star: f64,
    pub objective_value: f64,
    pub disagreement: DisagreementPoint,
}

/// Bargaining objective `(U_l(q) - u_l0) * (U_h(q) - u_h0)`. May be negative
/// off the feasible set.
pub fn nash_objective(market: &Market, q: QualityPair, d: &DisagreementPoint) -> f64 {
    let out = market.equilibrium_outcome(q);
    (out.utility_l - d.u_l0) * (out.utility_h - d.u_h0)
}

/// Coefficients (descending powers) and ascending real roots of the cubic
/// whose zeros are the stationary points of the normalized objective.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryCubic {
    pub coefficients: [f64; 4],
    pub roots: Vec<f64>,
}

/// Stationarity cubic of `q_l -> N(q_l, 1)` for disagreement utilities
/// `(u_h0 * rho_0 / 4, u_h0)`, i.e. an equilibrium disagreement point
/// normalized to `q_h = 1`.
pub fn stationary_cubic(u_h0: f64, rho_0: f64) -> StationaryCubic {
    let coefficients = [
        7.0 * u_h0 + u_h0 * rho_0 + 4.0,
        -60.0 * u_h0 - 6.0 * u_h0 * rho_0 + 32.0,
        144.0 * u_h0 - 52.0,
        -64.0 * u_h0 + 32.0 * u_h0 * rho_0 + 16.0,
    ];
    StationaryCubic {
        coefficients,
        roots: real_cubic_roots(coefficients),
    }
}

/// Real roots of `c[0] x^3 + c[1] x^2 + c[2] x + c[3] = 0`, ascending.
fn real_cubic_roots(c: [f64; 4]) -> Vec<f64> {
    let [a, b, cc, d] = c;
    let mut roots = if a.abs() < 1e-14 {
        real_quadratic_roots(b, cc, d)
    } else {
        // depressed cubic t^3 + p t + q with x = t - b/(3a)
        let shift = b / (3.0 * a);
        let p = cc / a - b * b / (3.0 * a * a);
        let q = 2.0 * b.powi(3) / (27.0 * a.powi(3)) - b * cc / (3.0 * a * a) + d / a;
        let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
        let mut ts = Vec::new();
        if disc > 1e-18 {
            let s = disc.sqrt();
            ts.push((-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt());
        } else if p.abs() < 1e-18 && q.abs() < 1e-18 {
            ts.push(0.0);
        } else {
            // three real roots (trigonometric form)
            let m = 2.0 * (-p / 3.0).sqrt();
            let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
            let theta = arg.acos() / 3.0;
            for k in 0..3 {
                ts.push(m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos());
            }
        }
        ts.into_iter().map(|t| t - shift).collect()
    };
    // Newton polish; the closed forms lose digits when roots are clustered.
    let eval = |x: f64| ((a * x + b) * x + cc) * x + d;
    let deriv = |x: f64| (3.0 * a * x + 2.0 * b) * x + cc;
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let dv = deriv(*r);
            if dv.abs() > 1e-300 {
                *r -= eval(*r) / dv;
            }
        }
    }
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    roots.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    roots
}

fn real_quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() < 1e-14 {
        if b.abs() < 1e-14 {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let s = disc.sqrt();
    // numerically stable split
    let q = -0.5 * (b + b.signum() * s);
    let mut out = vec![q / a];
    if q.abs() > 1e-300 {
        out.push(c / q);
    } else {
        out.push(0.0);
    }
    out
}

/// Normalized revenues at `q_h = 1`.
fn u_l_norm(y: f64) -> f64 {
    y * (1.0 - y) / (4.0 - y).powi(2)
}

fn u_h_norm(y: f64) -> f64 {
    4.0 * (1.0 - y) / (4.0 - y).powi(2)
}

/// Largest `y` in `[lo, hi]` with `f(y) >= level`, for `f` monotone
/// decreasing on the interval (bisection).
fn last_above(f: impl Fn(f64) -> f64, level: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Smallest `y` in `[lo, hi]` with `f(y) >= level`, for `f` monotone
/// increasing on the interval.
fn first_above(f: impl Fn(f64) -> f64, level: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Feasible interval of normalized low qualities: both constraints
/// `U_l(y,1) >= u_l0'` and `U_h(y,1) >= u_h0'` hold exactly on an interval
/// because `U_h` is decreasing and `U_l` is unimodal with peak at `y = 4/7`.
fn feasible_interval(u_l0: f64, u_h0: f64) -> Result<(f64, f64)> {
    const SLACK: f64 = 1e-13;
    let infeasible = || Error::InfeasibleDisagreement { u_l0, u_h0 };

    let hi_h = if u_h0 <= 0.0 {
        1.0
    } else if u_h0 > u_h_norm(0.0) + SLACK {
        return Err(infeasible());
    } else {
        last_above(u_h_norm, u_h0 - SLACK, 0.0, 1.0)
    };

    let peak = 4.0 / 7.0;
    let (lo, hi_l) = if u_l0 <= 0.0 {
        (0.0, 1.0)
    } else if u_l0 > u_l_norm(peak) + SLACK {
        return Err(infeasible());
    } else {
        (
            first_above(u_l_norm, u_l0 - SLACK, 0.0, peak),
            last_above(u_l_norm, u_l0 - SLACK, peak, 1.0),
        )
    };

    let (a, b) = (lo, hi_h.min(hi_l));
    if a > b + 1e-9 {
        return Err(infeasible());
    }
    Ok((a, a.max(b)))
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.6180339887498949;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}

/// Solves the bargaining problem for the attainable maximum high quality.
///
/// `q_h_star` is pinned to `q_h_max`; `q_l_star` maximizes the objective over
/// the feasible interval. The search normalizes to `q_h = 1` through
/// homogeneity, runs a golden-section pass, and cross-checks the stationary
/// cubic's admissible roots plus the interval endpoints, keeping whichever
/// candidate scores highest.
pub fn solve_nash(
    market: &Market,
    d: &DisagreementPoint,
    q_h_max: f64,
    golden_tol: f64,
) -> Result<NashSolution> {
    if !(q_h_max > 0.0 && q_h_max <= 1.0) {
        return Err(Error::Config(format!("q_h_max must lie in (0,1], got {q_h_max}")));
    }
    if d.q0.q_h() > q_h_max + market.eps() {
        return Err(Error::Config(format!(
            "disagreement q_h {} exceeds q_h_max {q_h_max}",
            d.q0.q_h()
        )));
    }
    // normalize by homogeneity: U_i(y q, q) = q U_i(y, 1)
    let ul0 = d.u_l0 / q_h_max;
    let uh0 = d.u_h0 / q_h_max;
    let objective = |y: f64| (u_l_norm(y) - ul0) * (u_h_norm(y) - uh0);

    let (a, b) = feasible_interval(ul0, uh0)?;
    let mut candidates = vec![a, b, golden_max(objective, a, b, golden_tol)];
    // stationary points: admissible cubic roots are the ones in (0, 4/7],
    // where U_l still increases in q_l
    let rho_0 = d.q0.ratio();
    for root in stationary_cubic(uh0, rho_0).roots {
        if root > 0.0 && root <= 4.0 / 7.0 + 1e-12 && root >= a - 1e-12 && root <= b + 1e-12 {
            candidates.push(root.clamp(a, b));
        }
    }
    let y_star = candidates
        .into_iter()
        .max_by(|x, y| objective(*x).partial_cmp(&objective(*y)).unwrap())
        .unwrap();

    let q_l_star = y_star * q_h_max;
    let q = QualityPair::new(q_l_star.clamp(0.0, q_h_max), q_h_max)?;
    Ok(NashSolution {
        q_l_star: q.q_l(),
        q_h_star: q_h_max,
        rho_star: y_star,
        objective_value: nash_objective(market, q, d),
        disagreement: *d,
    })
}

/// Brute-force verifier for [`solve_nash`]: evaluates the objective on the
/// grid `{0, step, 2 step, ..., q_h_max}` at `q_h = q_h_max`, filters by
/// feasibility, and returns the argmax. Falls back to the unconstrained
/// argmax if no grid point is feasible.
pub fn nash_grid_oracle(
    market: &Market,
    d: &DisagreementPoint,
    q_h_max: f64,
    step: f64,
) -> NashSolution {
    assert!(step > 0.0, "grid step must be positive");
    let n = (q_h_max / step).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
    if *grid.last().unwrap() < q_h_max {
        grid.push(q_h_max);
    }

    let mut best: Option<(f64, f64)> = None;
    let mut best_any: Option<(f64, f64)> = None;
    for ql in grid {
        let q = QualityPair::new(ql.min(q_h_max), q_h_max).unwrap();
        let out = market.equilibrium_outcome(q);
        let value = (out.utility_l - d.u_l0) * (out.utility_h - d.u_h0);
        let feasible = out.utility_l >= d.u_l0 - 1e-12 && out.utility_h >= d.u_h0 - 1e-12;
        if best_any.map_or(true, |(v, _)| value > v) {
            best_any = Some((value, ql));
        }
        if feasible && best.map_or(true, |(v, _)| value > v) {
            best = Some((value, ql));
        }
    }
    let (objective_value, q_l_star) = best.or(best_any).unwrap();
    NashSolution {
        q_l_star,
        q_h_star: q_h_max,
        rho_star: q_l_star / q_h_max,
        objective_value,
        disagreement: *d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn d_from(ql: f64, qh: f64) -> DisagreementPoint {
        DisagreementPoint::from_qualities(&Market::default(), QualityPair::new(ql, qh).unwrap())
    }

    #[test]
    fn disagreement_recomputes_utilities() {
        let d = d_from(0.3, 0.6);
        assert_abs_diff_eq!(d.u_l0(), 0.054 / 4.41, epsilon = 1e-15);
        assert_abs_diff_eq!(d.u_h0(), 0.432 / 4.41, epsilon = 1e-15);
    }

    #[test]
    fn nash_objective_examples() {
        let m = Market::default();
        let d = d_from(0.3, 0.6);
        // vanishes at the disagreement point
        assert_eq!(nash_objective(&m, d.q0(), &d), 0.0);

        // zero-utility disagreement: objective is the plain revenue product
        let d0 = d_from(0.6, 0.6);
        let q = QualityPair::new(0.4244, 1.0).unwrap();
        assert_abs_diff_eq!(
            nash_objective(&m, q, &d0),
            3.440972665424931e-3,
            epsilon = 1e-12
        );

        let q = QualityPair::new(0.3, 0.7).unwrap();
        assert_abs_diff_eq!(nash_objective(&m, q, &d), 3.284237967513536e-5, epsilon = 1e-12);
    }

    #[test]
    fn stationary_cubic_zero_disagreement() {
        let c = stationary_cubic(0.0, 0.0);
        assert_eq!(c.coefficients, [4.0, 32.0, -52.0, 16.0]);
        // the admissible root is (sqrt(97) - 9) / 2
        let expect = (97.0f64.sqrt() - 9.0) / 2.0;
        let hit = c
            .roots
            .iter()
            .any(|r| (r - expect).abs() < 1e-10 && *r > 0.0 && *r < 4.0 / 7.0);
        assert!(hit, "roots {:?} missing {expect}", c.roots);
    }

    #[test]
    fn cubic_roots_are_roots() {
        for &(u, r0) in &[(0.0, 0.0), (0.0979591836734694, 0.5), (0.17, 0.4), (0.05, 0.9)] {
            let c = stationary_cubic(u, r0);
            let [a, b, cc, d] = c.coefficients;
            assert!(!c.roots.is_empty());
            for r in &c.roots {
                let v = ((a * r + b) * r + cc) * r + d;
                assert!(v.abs() < 1e-9, "cubic({r}) = {v} for u={u}, rho0={r0}");
            }
            assert!(c.roots.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn cubic_root_matches_grid_argmax() {
        // disagreement ((0.3, 0.6)) normalized to q_h = 1
        let m = Market::default();
        let d = d_from(0.3, 0.6);
        let c = stationary_cubic(d.u_h0(), 0.5);
        let admissible: Vec<_> = c
            .roots
            .iter()
            .copied()
            .filter(|r| *r > 0.0 && *r < 4.0 / 7.0)
            .collect();
        assert_eq!(admissible.len(), 1);
        let oracle = nash_grid_oracle(&m, &d, 1.0, 1e-5);
        assert_abs_diff_eq!(admissible[0], oracle.q_l_star, epsilon = 1e-4);
    }

    #[test]
    fn solve_nash_zero_disagreement() {
        let m = Market::default();
        let d = d_from(0.6, 0.6);
        let sol = solve_nash(&m, &d, 1.0, DEFAULT_GOLDEN_TOL).unwrap();
        assert_eq!(sol.q_h_star, 1.0);
        assert_abs_diff_eq!(sol.q_l_star, (97.0f64.sqrt() - 9.0) / 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.rho_star, sol.q_l_star / sol.q_h_star, epsilon = 1e-12);
        let oracle = nash_grid_oracle(&m, &d, 1.0, 1e-5);
        assert_abs_diff_eq!(sol.q_l_star, oracle.q_l_star, epsilon = 2e-5);
    }

    #[test]
    fn solve_nash_pinned_at_boundary() {
        // d = ((0, 1), 0, 0.25): any q_l > 0 would cut the high firm's revenue
        let m = Market::default();
        let d = d_from(0.0, 1.0);
        let sol = solve_nash(&m, &d, 1.0, DEFAULT_GOLDEN_TOL).unwrap();
        assert!(sol.q_l_star.abs() < 1e-9);
        assert!(sol.objective_value.abs() < 1e-12);
    }

    #[test]
    fn solve_nash_scales_with_homogeneity() {
        let m = Market::default();
        let d = d_from(0.3, 0.6);
        let sol = solve_nash(&m, &d, 0.9, DEFAULT_GOLDEN_TOL).unwrap();
        for &c in &[0.3, 0.7] {
            let dc = d_from(0.3 * c, 0.6 * c);
            let sc = solve_nash(&m, &dc, 0.9 * c, DEFAULT_GOLDEN_TOL).unwrap();
            assert_abs_diff_eq!(sc.q_l_star, c * sol.q_l_star, epsilon = 1e-8);
            assert_abs_diff_eq!(sc.rho_star, sol.rho_star, epsilon = 1e-8);
        }
    }

    #[test]
    fn solve_nash_respects_feasibility() {
        let m = Market::default();
        for &(ql, qh, qmax) in &[(0.3, 0.6, 1.0), (0.2, 0.5, 0.8), (0.45, 0.5, 0.55)] {
            let d = d_from(ql, qh);
            let sol = solve_nash(&m, &d, qmax, DEFAULT_GOLDEN_TOL).unwrap();
            let out = m.equilibrium_outcome(QualityPair::new(sol.q_l_star, sol.q_h_star).unwrap());
            assert!(out.utility_l >= d.u_l0() - 1e-9);
            assert!(out.utility_h >= d.u_h0() - 1e-9);
        }
    }

    #[test]
    fn grid_oracle_degenerate_step_returns_endpoint() {
        let m = Market::default();
        let d = d_from(0.6, 0.6);
        let sol = nash_grid_oracle(&m, &d, 1.0, 1.5);
        assert!(sol.q_l_star == 0.0 || sol.q_l_star == 1.0);
    }
}
