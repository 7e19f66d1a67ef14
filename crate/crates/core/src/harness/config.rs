//! Run configuration and the execution entry point.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::trace::{Summary, Trace};
use crate::bargaining::{solve_nash, DisagreementPoint, DEFAULT_GOLDEN_TOL, DEFAULT_GRID_STEP};
use crate::error::{Error, Result};
use crate::losses::{
    make_complementary_quadratics_with, make_synthetic_logistic_with, LossModel,
    DEFAULT_ADVANCE_STEPS,
};
use crate::market::Market;
use crate::trainer::{
    compute_tilde_b, run_scheme, Scheme, SchemeConfig, TrainingState, DEFAULT_B_SEARCH_MAX,
    DEFAULT_RHO_GRID_STEP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Quadratic,
    Logistic,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(LossKind::Quadratic),
            "logistic" => Ok(LossKind::Logistic),
            other => Err(Error::Config(format!("unknown loss kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceFormat {
    Csv,
    Json,
}

impl std::str::FromStr for TraceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TraceFormat::Csv),
            "json" => Ok(TraceFormat::Json),
            other => Err(Error::Config(format!("unknown trace format '{other}'"))),
        }
    }
}

/// Full description of one run. A TOML config file mirrors these fields;
/// command-line flags override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub loss: LossKind,
    pub dim: usize,
    pub rounds: usize,
    pub seed: u64,
    /// Best attainable quality of the generated instance, `1 - optimum_value`.
    pub qhmax: f64,
    pub out: Option<String>,
    pub format: TraceFormat,

    // instance knobs
    /// Gap between the per-firm loss minima (quadratic instances).
    pub asymmetry: f64,
    /// Class-0 fraction seen by the low firm (logistic instances).
    pub skew: f64,
    pub n_per_firm: usize,
    pub advance_steps: usize,

    // tolerance overrides
    pub tolerance: f64,
    pub golden_tol: f64,
    pub grid_step: f64,
    pub max_inner: usize,
    /// Growth cap override; computed from the ratio bound when absent.
    pub tilde_b: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::DefectionFree,
            loss: LossKind::Quadratic,
            dim: 4,
            rounds: 500,
            seed: 7,
            qhmax: 0.55,
            out: None,
            format: TraceFormat::Csv,
            asymmetry: 0.55,
            skew: 0.25,
            n_per_firm: 120,
            advance_steps: DEFAULT_ADVANCE_STEPS,
            tolerance: 1e-9,
            golden_tol: DEFAULT_GOLDEN_TOL,
            grid_step: DEFAULT_GRID_STEP,
            max_inner: 100,
            tilde_b: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(s).map_err(|e| Error::Config(format!("bad config file: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.dim < 1 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        if !(self.qhmax > 0.0 && self.qhmax < 1.0) {
            return Err(Error::Config(format!(
                "qhmax must lie in (0,1), got {}",
                self.qhmax
            )));
        }
        if let Some(b) = self.tilde_b {
            if b <= 1.0 {
                return Err(Error::Config(format!("tilde_b must exceed 1, got {b}")));
            }
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<LossModel> {
        match self.loss {
            LossKind::Quadratic => make_complementary_quadratics_with(
                self.dim,
                self.qhmax,
                self.asymmetry,
                self.seed,
                self.advance_steps,
            ),
            LossKind::Logistic => make_synthetic_logistic_with(
                self.n_per_firm,
                self.dim,
                self.skew,
                self.seed,
                self.advance_steps,
            ),
        }
    }

    /// Effective growth cap: the override if present, otherwise the computed
    /// ratio bound.
    pub fn effective_tilde_b(&self) -> f64 {
        self.tilde_b
            .unwrap_or_else(|| compute_tilde_b(DEFAULT_RHO_GRID_STEP, DEFAULT_B_SEARCH_MAX).tilde_b)
    }

    /// Builds the loss model, solves the bargaining target, runs the scheme,
    /// and wraps everything into a trace.
    pub fn execute(&self) -> Result<Trace> {
        self.validate()?;
        let started = Instant::now();
        let model = self.build_model()?;
        let market = Market::default();
        let initial = TrainingState::initial(&model)?;
        let d = DisagreementPoint::from_qualities(&market, initial.q);
        let nash = solve_nash(&market, &d, model.max_quality(), self.golden_tol)?;

        let mut cfg = SchemeConfig::new(self.scheme, self.rounds, self.effective_tilde_b(), nash);
        cfg.tolerance = self.tolerance;
        cfg.max_inner = self.max_inner;

        let records = run_scheme(&cfg, &model, initial)?;
        let last = records.last().expect("at least the initial record");
        let summary = Summary {
            nash_gap: nash.objective_value - last.nash_value,
            defections_l: records.iter().filter(|r| r.defected_l).count() as u32,
            defections_h: records.iter().filter(|r| r.defected_h).count() as u32,
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        Ok(Trace {
            config: self.clone(),
            records,
            summary,
        })
    }
}
