//! Replay audit: recomputes every guaranteed quantity of a trace from the
//! recorded qualities and verifies the scheme's promises round by round.

use super::trace::Trace;
use crate::bargaining::{solve_nash, DisagreementPoint};
use crate::error::Result;
use crate::losses::LossModel;
use crate::market::{Market, QualityPair};
use crate::trainer::{firm_outcome, hat_q_l, Scheme};

#[derive(Debug, Clone)]
pub struct AuditCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub failing_round: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub checks: Vec<AuditCheck>,
    /// Rounds at which each firm's revenue dropped (informational; only a
    /// failure under schemes that promise no defections).
    pub defection_rounds_l: Vec<usize>,
    pub defection_rounds_h: Vec<usize>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| !c.passed)
    }
}

struct Auditor {
    checks: Vec<AuditCheck>,
}

impl Auditor {
    fn record(&mut self, name: &'static str, failure: Option<(usize, String)>) {
        match failure {
            None => self.checks.push(AuditCheck {
                name,
                passed: true,
                detail: "ok".into(),
                failing_round: None,
            }),
            Some((round, detail)) => self.checks.push(AuditCheck {
                name,
                passed: false,
                detail,
                failing_round: Some(round),
            }),
        }
    }
}

/// Audits a trace against the scheme's guarantees. The loss model must be the
/// one the trace was produced with (rebuild it from the config echo); it
/// supplies the attainable maximum quality for the bargaining target.
pub fn audit_trace(trace: &Trace, model: &LossModel) -> Result<AuditReport> {
    let market = Market::default();
    let tol = trace.config.tolerance;
    let recs = &trace.records;
    let mut a = Auditor { checks: Vec::new() };

    // structure
    a.record(
        "structure",
        trace
            .check_structure()
            .err()
            .map(|e| (0, e.to_string())),
    );

    // role-wise price ordering: the better model always costs at least as much
    let mut fail = None;
    for r in recs {
        let ordered = if r.q_l <= r.q_h {
            r.p_l <= r.p_h + tol
        } else {
            r.p_h <= r.p_l + tol
        };
        if !ordered {
            fail = Some((r.round, format!("prices ({}, {}) out of order", r.p_l, r.p_h)));
            break;
        }
    }
    a.record("price-order", fail);

    // consistency: equilibrium quantities and the bargaining objective follow
    // from the recorded qualities
    let q0 = QualityPair::ordered(recs[0].q_l, recs[0].q_h)?.0;
    let d = DisagreementPoint::from_qualities(&market, q0);
    let mut fail = None;
    for r in recs {
        let out = firm_outcome(&market, r.q_l, r.q_h)?;
        let nash_value = (out.u_l - d.u_l0()) * (out.u_h - d.u_h0());
        let mismatch = [
            (out.p_l, r.p_l, "p_l"),
            (out.p_h, r.p_h, "p_h"),
            (out.u_l, r.u_l, "u_l"),
            (out.u_h, r.u_h, "u_h"),
            (nash_value, r.nash_value, "nash_value"),
        ]
        .into_iter()
        .find(|(exp, got, _)| (exp - got).abs() > 1e-9);
        if let Some((exp, got, field)) = mismatch {
            fail = Some((r.round, format!("{field} recorded {got}, recomputed {exp}")));
            break;
        }
    }
    a.record("consistency", fail);

    // defection flags match the recorded revenue deltas
    let mut defection_rounds_l = Vec::new();
    let mut defection_rounds_h = Vec::new();
    let mut fail = None;
    for w in recs.windows(2) {
        let dropped_l = w[1].u_l < w[0].u_l - tol;
        let dropped_h = w[1].u_h < w[0].u_h - tol;
        if dropped_l {
            defection_rounds_l.push(w[1].round);
        }
        if dropped_h {
            defection_rounds_h.push(w[1].round);
        }
        if fail.is_none() && (w[1].defected_l != dropped_l || w[1].defected_h != dropped_h) {
            fail = Some((w[1].round, "flags disagree with revenue deltas".to_string()));
        }
    }
    a.record("defection-flags", fail);

    // schemes that promise no defections must show none
    if matches!(trace.config.scheme, Scheme::DefectionFree | Scheme::OneSidedLow) {
        let first = defection_rounds_l
            .first()
            .into_iter()
            .chain(defection_rounds_h.first())
            .min()
            .copied();
        a.record(
            "no-defection",
            first.map(|r| (r, "revenue dropped under a defection-free scheme".into())),
        );
    }

    if trace.config.scheme == Scheme::DefectionFree {
        audit_defection_free(&mut a, trace, model, &market)?;
    }

    Ok(AuditReport {
        checks: a.checks,
        defection_rounds_l,
        defection_rounds_h,
    })
}

fn audit_defection_free(
    a: &mut Auditor,
    trace: &Trace,
    model: &LossModel,
    market: &Market,
) -> Result<()> {
    let recs = &trace.records;
    let tilde_b = trace.config.effective_tilde_b();

    // pacing of the high firm's quality growth
    let mut fail = None;
    for w in recs.windows(2) {
        if w[0].q_h > 0.0 && w[1].q_h / w[0].q_h > tilde_b + 1e-9 {
            fail = Some((w[1].round, format!("growth {} exceeds {tilde_b}", w[1].q_h / w[0].q_h)));
            break;
        }
    }
    a.record("pacing", fail);

    // the low firm never exceeds the revenue-preserving cap
    let mut fail = None;
    for w in recs.windows(2) {
        if w[0].q_l < w[0].q_h {
            let prev = QualityPair::new(w[0].q_l, w[0].q_h)?;
            let hat = hat_q_l(prev, w[1].q_h.max(w[0].q_h))?;
            if w[1].q_l > hat + 1e-9 {
                fail = Some((w[1].round, format!("q_l {} above cap {hat}", w[1].q_l)));
                break;
            }
        }
    }
    a.record("low-cap", fail);

    let q0 = QualityPair::ordered(recs[0].q_l, recs[0].q_h)?.0;
    let d = DisagreementPoint::from_qualities(market, q0);
    let nash = solve_nash(market, &d, model.max_quality(), trace.config.golden_tol)?;

    // ratio climbs monotonically toward rho* and stays put once there
    let mut fail = None;
    let mut entered_band = false;
    for w in recs.windows(2) {
        if entered_band || (w[0].q_l >= w[0].q_h) {
            // after reaching the target band the ratio must not drift
            if entered_band && (w[1].rho - nash.rho_star).abs() > 1e-8 {
                fail = Some((w[1].round, format!("ratio {} left the target band", w[1].rho)));
                break;
            }
            continue;
        }
        if (w[1].rho - nash.rho_star).abs() <= 1e-9 {
            entered_band = true;
            continue;
        }
        if w[1].rho < nash.rho_star - 1e-9 && w[0].rho < nash.rho_star - 1e-9 {
            if w[1].rho < w[0].rho - 1e-9 {
                fail = Some((w[1].round, format!("ratio fell {} -> {}", w[0].rho, w[1].rho)));
                break;
            }
        }
    }
    a.record("ratio-monotone", fail);

    // terminal ratio bound, only meaningful when the low firm starts at or
    // below its bargaining quality
    if recs[0].q_l <= nash.q_l_star {
        let last = recs.last().unwrap();
        let eps = (nash.q_h_star - last.q_h).max(0.0);
        let bound = if eps < nash.q_h_star {
            (4.0 - 5.0 * nash.rho_star) * (nash.q_h_star / (nash.q_h_star - eps)).log10()
        } else {
            f64::INFINITY
        };
        // the analytic bound absorbs constants; 0.02 floors it once the run
        // has fully converged and the bound collapses to zero
        let allowed = bound.max(0.02);
        let err = (last.rho - nash.rho_star).abs();
        a.record(
            "terminal-ratio-bound",
            (err > allowed).then(|| {
                (
                    last.round,
                    format!("|rho_T - rho*| = {err} exceeds max(0.02, {bound})"),
                )
            }),
        );
    }

    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::RunConfig;

    fn run_default(scheme: Scheme, rounds: usize) -> (Trace, LossModel) {
        let cfg = RunConfig {
            scheme,
            rounds,
            ..RunConfig::default()
        };
        let trace = cfg.execute().unwrap();
        let model = cfg.build_model().unwrap();
        (trace, model)
    }

    #[test]
    fn clean_defection_free_trace_passes() {
        let (trace, model) = run_default(Scheme::DefectionFree, 200);
        let report = audit_trace(&trace, &model).unwrap();
        assert!(report.passed(), "failed: {:?}", report.first_failure());
        assert!(report.defection_rounds_l.is_empty());
        assert!(report.defection_rounds_h.is_empty());
    }

    #[test]
    fn perturbed_utility_fails_defection_check() {
        let (mut trace, model) = run_default(Scheme::DefectionFree, 50);
        trace.records[20].u_l -= 0.01;
        let report = audit_trace(&trace, &model).unwrap();
        assert!(!report.passed());
        let failed: Vec<_> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect();
        assert!(failed.contains(&"no-defection"), "failed checks: {failed:?}");
        let check = report
            .checks
            .iter()
            .find(|c| c.name == "no-defection")
            .unwrap();
        assert_eq!(check.failing_round, Some(20));
    }

    #[test]
    fn one_sided_high_reports_high_firm_drops_without_failing() {
        let (trace, model) = run_default(Scheme::OneSidedHigh, 400);
        let report = audit_trace(&trace, &model).unwrap();
        assert!(report.passed(), "failed: {:?}", report.first_failure());
        assert!(!report.defection_rounds_h.is_empty());
    }
}
