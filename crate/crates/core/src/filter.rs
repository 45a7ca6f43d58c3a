//! Information-state recursion and the two representations of the DM's cost.
//!
//! The update is the linear operator
//! `σ'(z) = ∫ ψ(z − b(ξ,u)) · exp(μL(ξ,u)) · Ψ(ξ,y) · σ(ξ) dξ`,
//! evaluated at every state node by trapezoid quadrature over ξ. Under an
//! effort the ratio `Ψ` is replaced by `φ(y − h(ξ)) / φ°_k(y)`.
//! Information states are never renormalized.

use serde::{Deserialize, Serialize};

use crate::effort::GaslightEffort;
use crate::error::{Error, Result};
use crate::grid::{pairing, GridDensity, InformationState};
use crate::model::{self, Kernel, SamplingMode, SystemModel};
use crate::policy::ControlPolicy;
use crate::stats::{run_trials, Estimate};

/// Applies the kernel with observation weights `num_i / denom`.
fn apply(model: &SystemModel, kernel: &Kernel, sigma: &InformationState, num: &[f64], denom: f64) -> InformationState {
    let sg = model.state_grid();
    let n = sg.len();
    let mut out = vec![0.0; n];
    for (i, (&s, &nu)) in sigma.values().iter().zip(num).enumerate() {
        if s == 0.0 {
            continue;
        }
        let src = sg.weight(i) * kernel.risk[i] * nu / denom * s;
        if src == 0.0 {
            continue;
        }
        let row = &kernel.density[i * n..(i + 1) * n];
        for (o, g) in out.iter_mut().zip(row) {
            *o += src * g;
        }
    }
    InformationState::from_raw(*sg, out)
}

fn check_state(model: &SystemModel, sigma: &InformationState) -> Result<()> {
    if sigma.grid() != model.state_grid() {
        return Err(Error::IncompatibleGrids);
    }
    Ok(())
}

/// Nominal update `Σ*(u, y)σ`.
pub fn info_state_update(model: &SystemModel, sigma: &InformationState, u: f64, y: f64) -> Result<InformationState> {
    check_state(model, sigma)?;
    let denom = model.obs_noise().at(y);
    if !(denom > 0.0) {
        return Err(Error::DegenerateReferenceDensity { y });
    }
    let kernel = model.kernel(u)?;
    Ok(apply(model, &kernel, sigma, &model.obs_likelihoods(y), denom))
}

/// Gaslit update `Σ°_k(u, y)σ` with `Ψ° = φ(y − h(ξ)) / φ°_k(y)`.
pub fn gaslit_update(
    model: &SystemModel,
    sigma: &InformationState,
    u: f64,
    y: f64,
    effort_density: &GridDensity,
) -> Result<InformationState> {
    check_state(model, sigma)?;
    if effort_density.grid() != model.obs_grid() {
        return Err(Error::IncompatibleGrids);
    }
    let denom = effort_density.at(y);
    if !(denom > 0.0) {
        return Err(Error::DegenerateEffortDensity { y });
    }
    let kernel = model.kernel(u)?;
    Ok(apply(model, &kernel, sigma, &model.obs_likelihoods(y), denom))
}

/// The information-state process σ_0..σ_K for given inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRun {
    pub states: Vec<InformationState>,
    pub effort_used: Option<GaslightEffort>,
    pub controls: Vec<f64>,
    pub observations: Vec<f64>,
}

impl FilterRun {
    pub fn last(&self) -> &InformationState {
        self.states.last().expect("σ_0 is always present")
    }
}

/// `σ_0 = ρ` (or ρ° under an effort that sets one), `σ_k = update(σ_{k−1}, u_{k−1}, y_k)`.
pub fn run_filter(
    model: &SystemModel,
    controls: &[f64],
    observations: &[f64],
    effort: Option<&GaslightEffort>,
) -> Result<FilterRun> {
    if controls.len() != observations.len() {
        return Err(Error::InvalidArgument(format!(
            "{} controls but {} observations",
            controls.len(),
            observations.len()
        )));
    }
    if controls.len() > model.horizon() {
        return Err(Error::InvalidArgument("more inputs than the horizon".into()));
    }
    let sigma0 = match effort.and_then(|e| e.prior()) {
        Some(p) => InformationState::from(p),
        None => InformationState::from(model.prior()),
    };
    let mut states = vec![sigma0];
    for (k, (&u, &y)) in controls.iter().zip(observations).enumerate() {
        let prev = states.last().unwrap();
        let next = match effort {
            Some(e) => gaslit_update(model, prev, u, y, e.stage(k + 1))?,
            None => info_state_update(model, prev, u, y)?,
        };
        states.push(next);
    }
    Ok(FilterRun {
        states,
        effort_used: effort.cloned(),
        controls: controls.to_vec(),
        observations: observations.to_vec(),
    })
}

/// `∫ σ_K(z) exp(μΦ(z)) dz`.
pub fn terminal_functional(model: &SystemModel, sigma: &InformationState) -> Result<f64> {
    check_state(model, sigma)?;
    Ok(pairing(model.state_grid(), sigma.values(), &model.terminal_weights()))
}

/// Monte Carlo estimate of `E†[∫ σ_K exp(μΦ)]`, observations drawn i.i.d. from φ
/// and controls generated online from the (possibly gaslit) filter.
pub fn cost_info_state(
    model: &SystemModel,
    policy: &ControlPolicy,
    effort: Option<&GaslightEffort>,
    n_trials: usize,
    seed: u64,
) -> Result<Estimate> {
    if n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
    }
    let weights = model.terminal_weights();
    let samples = run_trials(n_trials, seed, |_, rng| {
        let r = model::rollout(model, policy, effort, SamplingMode::Reference, rng, None)?;
        let last = r.info_states.last().unwrap();
        Ok(pairing(model.state_grid(), last.values(), &weights))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(Estimate::from_samples(&samples))
}

/// Monte Carlo estimate of `E[exp(μ(Σ L + Φ))]` over nominal trajectories.
pub fn cost_direct(model: &SystemModel, policy: &ControlPolicy, n_trials: usize, seed: u64) -> Result<Estimate> {
    if n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
    }
    let samples = run_trials(n_trials, seed, |_, rng| {
        let r = model::rollout(model, policy, None, SamplingMode::Nominal, rng, None)?;
        Ok(model::pathwise_cost(model, &r.trajectory))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(Estimate::from_samples(&samples))
}
