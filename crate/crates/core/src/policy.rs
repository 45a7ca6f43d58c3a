//! Control rules mapping the DM's information state to a control.

use std::sync::Arc;

use crate::dp::AlphaVectorSet;
use crate::error::{Error, Result};
use crate::grid::InformationState;
use crate::model::SystemModel;

/// A total rule `(σ, k) ↦ u`.
#[derive(Debug, Clone)]
pub enum ControlPolicy {
    /// The same control at every stage.
    Constant(f64),
    /// A fixed control sequence `u_0 … u_{K−1}`.
    OpenLoop(Vec<f64>),
    /// Argmin of the one-step lookahead over a solved value function, ties to
    /// the lowest control index.
    BestResponse(Arc<AlphaVectorSet>),
}

impl ControlPolicy {
    pub fn best_response(alphas: AlphaVectorSet) -> Self {
        ControlPolicy::BestResponse(Arc::new(alphas))
    }

    pub fn control(&self, model: &SystemModel, sigma: &InformationState, k: usize) -> Result<f64> {
        match self {
            ControlPolicy::Constant(u) => Ok(*u),
            ControlPolicy::OpenLoop(us) => us.get(k).copied().ok_or_else(|| {
                Error::InvalidArgument(format!("open-loop policy has no control for stage {k}"))
            }),
            ControlPolicy::BestResponse(alphas) => {
                let idx = alphas.best_action(sigma, k)?;
                Ok(model.controls(k)[idx])
            }
        }
    }

    pub fn alphas(&self) -> Option<&AlphaVectorSet> {
        match self {
            ControlPolicy::BestResponse(a) => Some(a),
            _ => None,
        }
    }
}
