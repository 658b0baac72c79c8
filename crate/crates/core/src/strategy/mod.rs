//! The restricted-update training strategy.
//!
//! The limitation mechanism adds a Fisher-weighted quadratic anchor to the
//! loss; the promotion mechanism replaces the gradient step with a
//! recursive-gradient Frank-Wolfe step over an L2 ball. Past-task gradients
//! optionally constrain the update direction to non-negative inner products.

mod estimator;
mod fisher;
mod frank_wolfe;
mod gem;
mod step;

pub use estimator::{schedule, EstimatorState};
pub use fisher::{
    estimate_fisher_diag, network_fisher, regularized_loss_and_grad, FisherDiag, TaskAnchor,
};
pub use frank_wolfe::{fw_step, linear_minimizer};
pub use gem::{gem_project, GradientMemory};
pub use step::{ru_step, RuState, StepDiagnostics};

use serde::{Deserialize, Serialize};

use crate::error::{CctsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionTarget {
    /// Project the recursive estimate before the linear minimization.
    #[default]
    Estimate,
    /// Project the Frank-Wolfe direction `v - θ` (as a descent direction).
    Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuConfig {
    /// Penalty strength λ.
    pub lambda: f64,
    /// Exponent `a` of `ρ_t = η_t = 1/(t+1)^a`.
    pub schedule_exponent: f64,
    /// Forces ρ for every step instead of the schedule.
    pub fixed_rho: Option<f64>,
    /// Radius of the constraint ball around the initial parameters;
    /// `None` means `10·√(param count)`.
    pub radius: Option<f64>,
    /// Multiplier on η for gradient steps (promotion off).
    pub learning_rate: f64,
    /// Most past-task reference gradients kept.
    pub gem_memory: usize,
    /// Samples per task used for its reference gradient.
    pub gem_snapshot: usize,
    /// Samples per task used for the Fisher diagonal.
    pub fisher_samples: usize,
    pub limitation: bool,
    pub promotion: bool,
    pub projection: bool,
    pub projection_target: ProjectionTarget,
}

impl Default for RuConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            schedule_exponent: 1.0,
            fixed_rho: None,
            radius: None,
            learning_rate: 1.0,
            gem_memory: 16,
            gem_snapshot: 256,
            fisher_samples: 256,
            limitation: true,
            promotion: true,
            projection: true,
            projection_target: ProjectionTarget::Estimate,
        }
    }
}

impl RuConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(CctsError::arg(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.schedule_exponent > 0.0 && self.schedule_exponent <= 1.0) {
            return Err(CctsError::arg(format!(
                "schedule_exponent must lie in (0, 1], got {}",
                self.schedule_exponent
            )));
        }
        if let Some(rho) = self.fixed_rho {
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(CctsError::arg(format!(
                    "fixed_rho must lie in (0, 1], got {rho}"
                )));
            }
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(CctsError::arg(format!("radius must be positive, got {r}")));
            }
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(CctsError::arg(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.fisher_samples == 0 || self.gem_snapshot == 0 {
            return Err(CctsError::arg(
                "fisher_samples and gem_snapshot must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Limitation + promotion + projection.
    #[default]
    Ru,
    LmOnly,
    /// Promotion + projection, λ = 0.
    PmOnly,
    /// Scheduled SGD on the raw loss.
    Plain,
    /// Mechanism toggles taken from the config as written.
    Custom,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Ru => "ru",
            StrategyKind::LmOnly => "lm_only",
            StrategyKind::PmOnly => "pm_only",
            StrategyKind::Plain => "plain",
            StrategyKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyChoice {
    pub kind: StrategyKind,
    #[serde(flatten)]
    pub config: RuConfig,
}

impl StrategyChoice {
    pub fn new(kind: StrategyKind, config: RuConfig) -> Self {
        Self { kind, config }
    }

    /// The config with the mechanism toggles this strategy implies.
    pub fn resolved(&self) -> RuConfig {
        let mut c = self.config.clone();
        let (lm, pm, gem) = match self.kind {
            StrategyKind::Ru => (true, true, true),
            StrategyKind::LmOnly => (true, false, false),
            StrategyKind::PmOnly => (false, true, true),
            StrategyKind::Plain => (false, false, false),
            StrategyKind::Custom => return c,
        };
        c.limitation = lm;
        c.promotion = pm;
        c.projection = gem;
        if !lm {
            c.lambda = 0.0;
        }
        c
    }
}
