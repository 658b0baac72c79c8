use serde::{Deserialize, Serialize};

use super::{
    fw_step, gem_project, linear_minimizer, regularized_loss_and_grad, schedule, EstimatorState,
    GradientMemory, ProjectionTarget, RuConfig, TaskAnchor,
};
use crate::data::Sample;
use crate::error::{CctsError, Result};
use crate::model::Network;

/// Strategy state owned by one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RuState {
    pub estimator: EstimatorState,
    pub memory: GradientMemory,
    pub anchors: Vec<TaskAnchor>,
    /// Center of the constraint ball: the initial parameters.
    pub center: Vec<f64>,
    pub radius: f64,
}

impl RuState {
    pub fn new(initial: &Network, config: &RuConfig) -> Self {
        let center = initial.to_flat();
        let radius = config
            .radius
            .unwrap_or_else(|| 10.0 * (center.len() as f64).sqrt());
        Self {
            estimator: EstimatorState::default(),
            memory: GradientMemory::new(config.gem_memory),
            anchors: Vec::new(),
            center,
            radius,
        }
    }

    /// Loss plus one Fisher penalty per completed task.
    fn objective(
        &self,
        loss: f64,
        grad: Vec<f64>,
        theta: &[f64],
        config: &RuConfig,
    ) -> Result<(f64, Vec<f64>)> {
        if !config.limitation || config.lambda == 0.0 {
            return Ok((loss, grad));
        }
        let mut acc = (loss, grad);
        for anchor in &self.anchors {
            acc = regularized_loss_and_grad(
                acc.0,
                &acc.1,
                theta,
                &anchor.params,
                &anchor.fisher,
                config.lambda,
            )?;
        }
        Ok(acc)
    }

    fn objective_at(
        &self,
        network: &Network,
        theta: &[f64],
        batch: &[Sample<'_>],
        config: &RuConfig,
    ) -> Result<(f64, Vec<f64>)> {
        let (loss, grad) = network.loss_and_grad(batch)?;
        self.objective(loss, grad, theta, config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub loss: f64,
    pub objective: f64,
    pub rho: f64,
    pub eta: f64,
    pub estimate_norm: f64,
    /// Mean over parameters of the gradient used for the update.
    pub gradient_mean: f64,
    /// Cosine between the update gradient and each stored task gradient.
    pub memory_cosines: Vec<f64>,
    /// Distance of the new parameters from the ball center.
    pub displacement: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / denom
}

/// One restricted-update step on `batch`: penalized objective, recursive
/// estimate, optional projection, then a Frank-Wolfe step (promotion on) or
/// a scheduled gradient step (promotion off).
pub fn ru_step(
    network: &mut Network,
    batch: &[Sample<'_>],
    state: &mut RuState,
    config: &RuConfig,
) -> Result<StepDiagnostics> {
    let theta = network.to_flat();
    let step = state.estimator.step;
    let (scheduled_rho, eta) = schedule(step, config.schedule_exponent);
    let rho = config.fixed_rho.unwrap_or(scheduled_rho);

    let (loss, grad) = network.loss_and_grad(batch)?;
    if !loss.is_finite() {
        return Err(CctsError::Numeric {
            step,
            what: "loss".into(),
        });
    }
    let (objective, grad) = state.objective(loss, grad, &theta, config)?;

    let mut update = if config.promotion {
        let previous = if state.estimator.needs_previous_gradient(rho) {
            let prev_theta = state.estimator.previous_params.clone().expect("checked");
            let prev_net = Network::from_flat(&network.config, &prev_theta)?;
            Some(state.objective_at(&prev_net, &prev_theta, batch, config)?.1)
        } else {
            None
        };
        let estimate = state
            .estimator
            .update(&grad, previous.as_deref(), rho)?
            .to_vec();
        state.estimator.previous_params = Some(theta.clone());
        estimate
    } else {
        state.estimator.step += 1;
        grad
    };
    let estimate_norm = norm(&update);

    if config.projection && config.projection_target == ProjectionTarget::Estimate {
        update = gem_project(&update, &state.memory)?;
    }

    let next = if config.promotion {
        match (config.projection, config.projection_target) {
            (true, ProjectionTarget::Direction) => {
                let v = linear_minimizer(&update, &state.center, state.radius)?;
                let descent: Vec<f64> = theta.iter().zip(&v).map(|(t, v)| t - v).collect();
                update = gem_project(&descent, &state.memory)?;
                theta
                    .iter()
                    .zip(&update)
                    .map(|(t, g)| t - eta * g)
                    .collect()
            }
            _ => fw_step(&theta, &update, eta, &state.center, state.radius)?,
        }
    } else {
        let lr = eta * config.learning_rate;
        theta
            .iter()
            .zip(&update)
            .map(|(t, g)| t - lr * g)
            .collect::<Vec<f64>>()
    };
    if next.iter().any(|v| !v.is_finite()) {
        return Err(CctsError::Numeric {
            step,
            what: "parameters".into(),
        });
    }
    network.set_flat(&next)?;

    let displacement = norm(
        &next
            .iter()
            .zip(&state.center)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    Ok(StepDiagnostics {
        step,
        loss,
        objective,
        rho,
        eta,
        estimate_norm,
        gradient_mean: update.iter().sum::<f64>() / update.len().max(1) as f64,
        memory_cosines: state
            .memory
            .gradients()
            .map(|g| cosine(&update, g))
            .collect(),
        displacement,
    })
}
