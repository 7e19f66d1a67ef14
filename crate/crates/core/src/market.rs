//! Closed-form duopoly market for vertically differentiated models.
//!
//! Consumers of type `theta` (uniform on [0,1]) value a model of quality `q`
//! at `theta * q`. Given qualities `0 <= q_l <= q_h <= 1`, the firms set
//! revenue-maximizing prices, which pins down demands and revenues in closed
//! form. All quantities here are exact rational functions of the qualities;
//! the configurable tolerance only absorbs float rounding and decides when a
//! pair counts as degenerate (`q_l == q_h`), where undercutting collapses both
//! prices to zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered pair of model qualities, `0 <= q_l <= q_h <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityPair {
    q_l: f64,
    q_h: f64,
}

impl QualityPair {
    pub fn new(q_l: f64, q_h: f64) -> Result<Self> {
        let reason = if !(q_l.is_finite() && q_h.is_finite()) {
            Some("qualities must be finite")
        } else if q_l < 0.0 || q_h > 1.0 {
            Some("qualities must lie in [0,1]")
        } else if q_l > q_h {
            Some("q_l must not exceed q_h")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(Error::InvalidQuality { q_l, q_h, reason }),
            None => Ok(Self { q_l, q_h }),
        }
    }

    /// Builds the pair from unordered qualities, relabeling if needed.
    /// Returns the pair plus whether the arguments were swapped.
    pub fn ordered(a: f64, b: f64) -> Result<(Self, bool)> {
        if a <= b {
            Ok((Self::new(a, b)?, false))
        } else {
            Ok((Self::new(b, a)?, true))
        }
    }

    pub fn q_l(&self) -> f64 {
        self.q_l
    }

    pub fn q_h(&self) -> f64 {
        self.q_h
    }

    /// Quality ratio `q_l / q_h`, or 1 when both qualities are zero.
    pub fn ratio(&self) -> f64 {
        if self.q_h > 0.0 {
            self.q_l / self.q_h
        } else {
            1.0
        }
    }
}

/// Prices posted by the two firms, `0 <= p_l <= p_h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceQuote {
    pub p_l: f64,
    pub p_h: f64,
}

impl PriceQuote {
    pub fn new(p_l: f64, p_h: f64) -> Result<Self> {
        if p_l >= 0.0 && p_l <= p_h {
            Ok(Self { p_l, p_h })
        } else {
            Err(Error::InvalidPrices { p_l, p_h })
        }
    }
}

/// Equilibrium prices, demands, and revenues at a quality pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketOutcome {
    pub prices: PriceQuote,
    pub demand_l: f64,
    pub demand_h: f64,
    pub utility_l: f64,
    pub utility_h: f64,
}

/// Partial derivatives of the equilibrium revenues with respect to qualities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityGradients {
    pub d_uh_d_qh: f64,
    pub d_ul_d_qh: f64,
    pub d_ul_d_ql: f64,
    pub d_uh_d_ql: f64,
}

/// Consumer surplus `theta * q - p` from buying a model of quality `q` at
/// price `p`; buying nothing yields 0, which the caller compares against.
pub fn consumer_utility(theta: f64, q: f64, p: f64) -> f64 {
    theta * q - p
}

/// Market evaluator with a single comparison tolerance.
#[derive(Debug, Clone, Copy)]
pub struct Market {
    eps: f64,
}

impl Default for Market {
    fn default() -> Self {
        Self { eps: 1e-12 }
    }
}

impl Market {
    pub fn new(eps: f64) -> Self {
        Self { eps }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn is_degenerate(&self, q: QualityPair) -> bool {
        q.q_h() - q.q_l() <= self.eps
    }

    /// Demands induced by arbitrary (not necessarily equilibrium) prices:
    /// `D_l = (p_h - p_l)/(q_h - q_l) - p_l/q_l`, `D_h = 1 - (p_h - p_l)/(q_h - q_l)`,
    /// clamped so each lies in [0,1] and the pair sums to at most 1.
    ///
    /// Requires `q_l > eps` and `q_h - q_l > eps`; for the degenerate pair use
    /// [`Market::equilibrium_outcome`], which handles it by convention.
    pub fn demands(&self, q: QualityPair, prices: &PriceQuote) -> Result<(f64, f64)> {
        if q.q_l() <= self.eps || self.is_degenerate(q) {
            return Err(Error::DegenerateQualities {
                q_l: q.q_l(),
                q_h: q.q_h(),
            });
        }
        let marginal = (prices.p_h - prices.p_l) / (q.q_h() - q.q_l());
        let demand_h = (1.0 - marginal).clamp(0.0, 1.0);
        let demand_l = (marginal - prices.p_l / q.q_l()).clamp(0.0, 1.0 - demand_h);
        Ok((demand_l, demand_h))
    }

    /// Revenue-maximizing prices: `p_l* = q_l(q_h - q_l)/(4q_h - q_l)`,
    /// `p_h* = 2q_h(q_h - q_l)/(4q_h - q_l)`. Equal qualities collapse to
    /// `(0, 0)` via mutual undercutting.
    pub fn equilibrium_prices(&self, q: QualityPair) -> PriceQuote {
        if self.is_degenerate(q) {
            return PriceQuote { p_l: 0.0, p_h: 0.0 };
        }
        let spread = q.q_h() - q.q_l();
        let denom = 4.0 * q.q_h() - q.q_l();
        PriceQuote {
            p_l: q.q_l() * spread / denom,
            p_h: 2.0 * q.q_h() * spread / denom,
        }
    }

    /// Full equilibrium outcome. Demands use the closed forms
    /// `D_l* = q_h/(4q_h - q_l)`, `D_h* = 2q_h/(4q_h - q_l)`, which stay finite
    /// at `q_l = 0` where the raw demand formula does not. The degenerate pair
    /// returns prices and revenues of zero with the `(0, 1)` demand split.
    pub fn equilibrium_outcome(&self, q: QualityPair) -> MarketOutcome {
        if self.is_degenerate(q) {
            return MarketOutcome {
                prices: PriceQuote { p_l: 0.0, p_h: 0.0 },
                demand_l: 0.0,
                demand_h: 1.0,
                utility_l: 0.0,
                utility_h: 0.0,
            };
        }
        let prices = self.equilibrium_prices(q);
        let spread = q.q_h() - q.q_l();
        let denom = 4.0 * q.q_h() - q.q_l();
        MarketOutcome {
            prices,
            demand_l: q.q_h() / denom,
            demand_h: 2.0 * q.q_h() / denom,
            utility_l: q.q_l() * q.q_h() * spread / (denom * denom),
            utility_h: 4.0 * q.q_h() * q.q_h() * spread / (denom * denom),
        }
    }

    /// Closed-form partials of the equilibrium revenues. For `q_l < q_h`:
    /// `U_h` increases in `q_h`, decreases in `q_l`; `U_l` increases in `q_h`,
    /// and increases in `q_l` exactly while `q_l <= 4q_h/7`.
    pub fn utility_gradients(&self, q: QualityPair) -> UtilityGradients {
        let (ql, qh) = (q.q_l(), q.q_h());
        let d3 = (4.0 * qh - ql).powi(3);
        UtilityGradients {
            d_uh_d_qh: 4.0 * qh * (4.0 * qh * qh - 3.0 * qh * ql + 2.0 * ql * ql) / d3,
            d_ul_d_qh: ql * ql * (2.0 * qh + ql) / d3,
            d_ul_d_ql: qh * qh * (4.0 * qh - 7.0 * ql) / d3,
            d_uh_d_ql: -4.0 * qh * qh * (2.0 * qh + ql) / d3,
        }
    }
}
