//! The controlled system `x_{k+1} = b(x_k, u_k) + w_k`, `y_{k+1} = h(x_k) + v_k`
//! discretized on compact grids, together with its costs and noise channels.
//!
//! States live on the nodes of the state grid. The process noise density ψ is
//! evaluated at `z − b(ξ, u)` by interpolation and renormalized over the
//! destination nodes, which turns the dynamics into a Markov chain on grid
//! nodes whose information-state filter is exact. Observation noise is taken
//! periodic over the observation interval: `y = wrap(h(x) + v)`, so the
//! conditional density `φ(wrap(y − h(x)))` integrates to one over 𝒴 for
//! every state.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::effort::GaslightEffort;
use crate::error::{Error, Result};
use crate::filter;
use crate::grid::{Grid, GridDensity, InformationState};
use crate::policy::ControlPolicy;

/// Linear dynamics `b(x, u) = a·x + b·u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dynamics {
    Linear { a: f64, b: f64 },
}

impl Dynamics {
    pub fn eval(&self, x: f64, u: f64) -> f64 {
        match *self {
            Dynamics::Linear { a, b } => a * x + b * u,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservationMap {
    Identity,
    Zero,
    Affine { slope: f64, offset: f64 },
}

impl ObservationMap {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ObservationMap::Identity => x,
            ObservationMap::Zero => 0.0,
            ObservationMap::Affine { slope, offset } => slope * x + offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RunningCost {
    Zero,
    Quadratic { state_weight: f64, control_weight: f64 },
}

impl RunningCost {
    pub fn eval(&self, x: f64, u: f64) -> f64 {
        match *self {
            RunningCost::Zero => 0.0,
            RunningCost::Quadratic {
                state_weight,
                control_weight,
            } => state_weight * x * x + control_weight * u * u,
        }
    }
}

/// Terminal costs, used both for the DM (Φ) and the gaslighter (Γ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalCost {
    Zero,
    Quadratic { weight: f64, center: f64 },
    /// `−depth · exp(−((x − center)/width)²)`: a well that rewards reaching `center`.
    TargetWell { center: f64, depth: f64, width: f64 },
}

impl TerminalCost {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TerminalCost::Zero => 0.0,
            TerminalCost::Quadratic { weight, center } => weight * (x - center) * (x - center),
            TerminalCost::TargetWell {
                center,
                depth,
                width,
            } => {
                let r = (x - center) / width;
                -depth * (-r * r).exp()
            }
        }
    }
}

/// Shapes for noise densities and priors; truncated to the target grid and
/// renormalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseFamily {
    TruncatedNormal { loc: f64, scale: f64 },
    Uniform,
}

impl NoiseFamily {
    pub fn density(&self, grid: Grid) -> Result<GridDensity> {
        match *self {
            NoiseFamily::TruncatedNormal { loc, scale } => {
                if !(scale > 0.0) {
                    return Err(Error::InvalidModel(format!("scale must be positive, got {scale}")));
                }
                GridDensity::from_fn(grid, |x| {
                    let r = (x - loc) / scale;
                    (-0.5 * r * r).exp()
                })
            }
            NoiseFamily::Uniform => Ok(GridDensity::uniform(grid)),
        }
    }
}

/// Process noise: a density on the symmetric increment grid `[−half_width, half_width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessNoise {
    pub half_width: f64,
    pub n_points: usize,
    pub family: NoiseFamily,
}

/// Declarative description of a [`SystemModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub state_grid: Grid,
    pub obs_grid: Grid,
    pub horizon: usize,
    /// One control list shared by all stages, or one list per stage.
    pub controls: Vec<Vec<f64>>,
    pub dynamics: Dynamics,
    pub observation: ObservationMap,
    pub running_cost: RunningCost,
    pub terminal_cost: TerminalCost,
    pub gaslighter_cost: TerminalCost,
    pub process_noise: ProcessNoise,
    pub observation_noise: NoiseFamily,
    pub prior: NoiseFamily,
    pub mu: f64,
}

/// Discretized transition for one control value.
#[derive(Debug, Clone)]
pub(crate) struct Kernel {
    pub control: f64,
    /// `G[i·n + j] = ψ(z_j − b(ξ_i, u)) / N_i`: transition density from node `i`.
    pub density: Vec<f64>,
    /// `exp(μ L(ξ_i, u))`.
    pub risk: Vec<f64>,
    /// Cumulative transition probabilities `Σ_{m≤j} w_m G[i, m]`, row-major.
    cdf: Vec<f64>,
    /// Rows whose noise support leaves the state grid and is truncated.
    pub clamped: Vec<bool>,
}

/// The controlled system of the game.
#[derive(Debug, Clone)]
pub struct SystemModel {
    spec: ModelSpec,
    controls: Vec<Vec<f64>>,
    process_noise: GridDensity,
    obs_noise: GridDensity,
    prior: GridDensity,
    prior_cdf: Vec<f64>,
    kernels: Arc<Vec<Kernel>>,
}

impl SystemModel {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        if !(spec.mu > 0.0) || !spec.mu.is_finite() {
            return Err(Error::InvalidModel(format!("mu must be positive, got {}", spec.mu)));
        }
        let k = spec.horizon;
        let controls = match spec.controls.len() {
            _ if k == 0 => Vec::new(),
            1 => vec![spec.controls[0].clone(); k],
            n if n == k => spec.controls.clone(),
            n => {
                return Err(Error::InvalidModel(format!(
                    "controls: expected 1 or {k} lists, got {n}"
                )))
            }
        };
        for (stage, set) in controls.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::InvalidModel(format!("control set of stage {stage} is empty")));
            }
            if set.iter().any(|u| !u.is_finite()) {
                return Err(Error::InvalidModel(format!("control set of stage {stage} is not finite")));
            }
        }
        let pn = spec.process_noise;
        if !(pn.half_width > 0.0) {
            return Err(Error::InvalidModel("process noise half_width must be positive".into()));
        }
        let inc_grid = Grid::new(-pn.half_width, pn.half_width, pn.n_points)?;
        let process_noise = pn.family.density(inc_grid)?;
        let obs_noise = spec.observation_noise.density(spec.obs_grid)?;
        if obs_noise.min() <= 0.0 {
            return Err(Error::InvalidModel(
                "observation noise density must be strictly positive on the observation grid".into(),
            ));
        }
        let prior = spec.prior.density(spec.state_grid)?;
        let sg = spec.state_grid;
        let mut prior_cdf = Vec::with_capacity(sg.len());
        let mut acc = 0.0;
        for i in 0..sg.len() {
            acc += sg.weight(i) * prior.values()[i];
            prior_cdf.push(acc);
        }

        let mut model = SystemModel {
            spec,
            controls,
            process_noise,
            obs_noise,
            prior,
            prior_cdf,
            kernels: Arc::new(Vec::new()),
        };
        let mut distinct: Vec<f64> = Vec::new();
        for set in &model.controls {
            for &u in set {
                if !distinct.iter().any(|v| v.to_bits() == u.to_bits()) {
                    distinct.push(u);
                }
            }
        }
        let kernels = distinct
            .into_iter()
            .map(|u| model.build_kernel(u))
            .collect::<Result<Vec<_>>>()?;
        model.kernels = Arc::new(kernels);
        Ok(model)
    }

    fn build_kernel(&self, u: f64) -> Result<Kernel> {
        let sg = self.spec.state_grid;
        let n = sg.len();
        let hw = self.spec.process_noise.half_width;
        let tol = 1e-12 * sg.length();
        let mut density = vec![0.0; n * n];
        let mut cdf = vec![0.0; n * n];
        let mut risk = Vec::with_capacity(n);
        let mut clamped = Vec::with_capacity(n);
        for i in 0..n {
            let xi = sg.node(i);
            let mean = self.spec.dynamics.eval(xi, u);
            clamped.push(mean - hw < sg.lower() - tol || mean + hw > sg.upper() + tol);
            let row = &mut density[i * n..(i + 1) * n];
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = self.process_noise.at_or_zero(sg.node(j) - mean);
            }
            let mass: f64 = row.iter().enumerate().map(|(j, g)| sg.weight(j) * g).sum();
            if !(mass > 0.0) {
                return Err(Error::DegenerateKernel { x: xi });
            }
            let mut acc = 0.0;
            for j in 0..n {
                row[j] /= mass;
                acc += sg.weight(j) * row[j];
                cdf[i * n + j] = acc;
            }
            risk.push((self.spec.mu * self.spec.running_cost.eval(xi, u)).exp());
        }
        Ok(Kernel {
            control: u,
            density,
            risk,
            cdf,
            clamped,
        })
    }

    pub(crate) fn kernel(&self, u: f64) -> Result<std::borrow::Cow<'_, Kernel>> {
        match self.kernels.iter().find(|k| k.control.to_bits() == u.to_bits()) {
            Some(k) => Ok(std::borrow::Cow::Borrowed(k)),
            None => Ok(std::borrow::Cow::Owned(self.build_kernel(u)?)),
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn state_grid(&self) -> &Grid {
        &self.spec.state_grid
    }

    pub fn obs_grid(&self) -> &Grid {
        &self.spec.obs_grid
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon
    }

    pub fn mu(&self) -> f64 {
        self.spec.mu
    }

    /// Control set used at stage `k` (`0 ≤ k < K`).
    pub fn controls(&self, k: usize) -> &[f64] {
        &self.controls[k]
    }

    pub fn process_noise(&self) -> &GridDensity {
        &self.process_noise
    }

    /// Nominal observation density φ.
    pub fn obs_noise(&self) -> &GridDensity {
        &self.obs_noise
    }

    /// Initial density ρ.
    pub fn prior(&self) -> &GridDensity {
        &self.prior
    }

    pub fn dynamics(&self, x: f64, u: f64) -> f64 {
        self.spec.dynamics.eval(x, u)
    }

    pub fn observe(&self, x: f64) -> f64 {
        self.spec.observation.eval(x)
    }

    pub fn running_cost(&self, x: f64, u: f64) -> f64 {
        self.spec.running_cost.eval(x, u)
    }

    pub fn terminal_cost(&self, x: f64) -> f64 {
        self.spec.terminal_cost.eval(x)
    }

    pub fn gaslighter_cost(&self, x: f64) -> f64 {
        self.spec.gaslighter_cost.eval(x)
    }

    /// `exp(μΦ(z_j))` at every state node.
    pub fn terminal_weights(&self) -> Vec<f64> {
        self.state_grid()
            .nodes()
            .map(|z| (self.mu() * self.terminal_cost(z)).exp())
            .collect()
    }

    /// `exp(μΓ(z_j))` at every state node.
    pub fn gaslighter_weights(&self) -> Vec<f64> {
        self.state_grid()
            .nodes()
            .map(|z| (self.mu() * self.gaslighter_cost(z)).exp())
            .collect()
    }

    /// Conditional observation density `φ(wrap(y − h(x)))`.
    pub fn obs_likelihood(&self, x: f64, y: f64) -> f64 {
        self.obs_noise.at_wrapped(y - self.observe(x))
    }

    /// `φ(wrap(y − h(ξ_i)))` at every state node.
    pub fn obs_likelihoods(&self, y: f64) -> Vec<f64> {
        self.state_grid()
            .nodes()
            .map(|xi| self.obs_likelihood(xi, y))
            .collect()
    }

    /// `Ψ(x, y) = φ(y − h(x)) / φ(y)`.
    pub fn psi(&self, x: f64, y: f64) -> Result<f64> {
        let denom = self.obs_noise.at(y);
        if !(denom > 0.0) {
            return Err(Error::DegenerateReferenceDensity { y });
        }
        Ok(self.obs_likelihood(x, y) / denom)
    }

    /// Number of kernel rows (over all controls) whose noise support is truncated.
    pub fn clamped_rows(&self) -> usize {
        self.kernels
            .iter()
            .map(|k| k.clamped.iter().filter(|c| **c).count())
            .sum()
    }

    fn sample_prior(&self, u: f64) -> usize {
        let target = u * self.prior_cdf.last().copied().unwrap_or(1.0);
        self.prior_cdf
            .iter()
            .position(|&c| c >= target)
            .unwrap_or(self.prior_cdf.len() - 1)
    }
}

impl Kernel {
    fn sample(&self, from: usize, n: usize, u: f64) -> usize {
        let row = &self.cdf[from * n..(from + 1) * n];
        let target = u * row[n - 1];
        row.iter().position(|&c| c >= target).unwrap_or(n - 1)
    }
}

/// How observations are generated during simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// `y_{k+1} = h(x_k) + v_k`, `v_k ~ φ`.
    Nominal,
    /// `y_k ~ φ°_k` i.i.d., independent of the state.
    Gaslit,
    /// `y_k ~ φ` i.i.d., the reference measure.
    Reference,
}

/// A simulated path. States are grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<f64>,
    pub observations: Vec<f64>,
    pub controls: Vec<f64>,
    pub mode: SamplingMode,
    pub seed: u64,
    /// `‖σ_k‖₁` of the DM's online information state, `k = 0..K`.
    pub info_mass: Vec<f64>,
    /// Transitions whose process-noise support was truncated by the grid.
    pub clamp_events: usize,
}

/// A trajectory together with the filter states and node indices.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub trajectory: Trajectory,
    pub info_states: Vec<InformationState>,
    pub state_nodes: Vec<usize>,
}

/// Where a rollout begins.
#[derive(Debug, Clone)]
pub struct RolloutStart {
    pub stage: usize,
    pub state_node: usize,
    pub info_state: InformationState,
}

/// Simulates one trajectory; deterministic given `seed`.
pub fn simulate(
    model: &SystemModel,
    policy: &ControlPolicy,
    effort: Option<&GaslightEffort>,
    mode: SamplingMode,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = crate::stats::trial_rng(seed, 0);
    let mut r = rollout(model, policy, effort, mode, &mut rng, None)?;
    r.trajectory.seed = seed;
    Ok(r.trajectory)
}

/// Runs the system forward with online filtering.
///
/// The DM's filter uses the gaslit operator whenever `effort` is present and
/// the nominal operator otherwise. Each stage consumes exactly two uniforms
/// (observation, then transition) in every mode, so modes driven by the same
/// RNG stream share their draws.
pub fn rollout<R: Rng + ?Sized>(
    model: &SystemModel,
    policy: &ControlPolicy,
    effort: Option<&GaslightEffort>,
    mode: SamplingMode,
    rng: &mut R,
    start: Option<RolloutStart>,
) -> Result<Rollout> {
    if mode == SamplingMode::Gaslit && effort.is_none() {
        return Err(Error::MissingEffort);
    }
    let sg = *model.state_grid();
    let n = sg.len();
    let big_k = model.horizon();
    let (k0, mut node, mut sigma) = match start {
        Some(s) => (s.stage, s.state_node, s.info_state),
        None => {
            let u0: f64 = rng.gen();
            let sigma0 = match effort.and_then(|e| e.prior()) {
                Some(p) => InformationState::from(p),
                None => InformationState::from(model.prior()),
            };
            (0, model.sample_prior(u0), sigma0)
        }
    };
    let steps = big_k.saturating_sub(k0);
    let mut states = Vec::with_capacity(steps + 1);
    let mut nodes = Vec::with_capacity(steps + 1);
    let mut observations = Vec::with_capacity(steps);
    let mut controls = Vec::with_capacity(steps);
    let mut info_mass = Vec::with_capacity(steps + 1);
    let mut info_states = Vec::with_capacity(steps + 1);
    let mut clamp_events = 0;
    states.push(sg.node(node));
    nodes.push(node);
    info_mass.push(sigma.mass());
    info_states.push(sigma.clone());

    for k in k0..big_k {
        let u = policy.control(model, &sigma, k)?;
        let uy: f64 = rng.gen();
        let ux: f64 = rng.gen();
        let x = sg.node(node);
        let y = match mode {
            SamplingMode::Nominal => {
                let v = model.obs_noise().quantile(uy);
                model.obs_grid().wrap(model.observe(x) + v)
            }
            SamplingMode::Reference => model.obs_noise().quantile(uy),
            SamplingMode::Gaslit => effort.expect("checked above").stage(k + 1).quantile(uy),
        };
        let kernel = model.kernel(u)?;
        if kernel.clamped[node] {
            clamp_events += 1;
        }
        node = kernel.sample(node, n, ux);
        sigma = match effort {
            Some(e) => filter::gaslit_update(model, &sigma, u, y, e.stage(k + 1))?,
            None => filter::info_state_update(model, &sigma, u, y)?,
        };
        controls.push(u);
        observations.push(y);
        states.push(sg.node(node));
        nodes.push(node);
        info_mass.push(sigma.mass());
        info_states.push(sigma.clone());
    }
    Ok(Rollout {
        trajectory: Trajectory {
            states,
            observations,
            controls,
            mode,
            seed: 0,
            info_mass,
            clamp_events,
        },
        info_states,
        state_nodes: nodes,
    })
}

/// `exp(μ(Σ L(x_i, u_i) + Φ(x_K)))`.
pub fn pathwise_cost(model: &SystemModel, traj: &Trajectory) -> f64 {
    let running: f64 = traj
        .controls
        .iter()
        .zip(&traj.states)
        .map(|(&u, &x)| model.running_cost(x, u))
        .sum();
    let terminal = model.terminal_cost(*traj.states.last().expect("trajectory has x_0"));
    (model.mu() * (running + terminal)).exp()
}

/// `Z_k = Π_{i=1..k} Ψ(x_{i−1}, y_i)`; `Z_0 = 1`.
pub fn likelihood_ratio(model: &SystemModel, traj: &Trajectory, k: usize) -> Result<f64> {
    if k > traj.observations.len() {
        return Err(Error::InvalidArgument(format!(
            "stage {k} beyond trajectory length {}",
            traj.observations.len()
        )));
    }
    let mut z = 1.0;
    for i in 1..=k {
        z *= model.psi(traj.states[i - 1], traj.observations[i - 1])?;
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    #[test]
    fn rejects_nonpositive_mu_and_empty_controls() {
        let mut spec = scenarios::canonical();
        spec.mu = 0.0;
        assert!(matches!(SystemModel::new(spec), Err(Error::InvalidModel(_))));
        let mut spec = scenarios::canonical();
        spec.controls = vec![vec![]];
        assert!(matches!(SystemModel::new(spec), Err(Error::InvalidModel(_))));
        let mut spec = scenarios::canonical();
        spec.controls = vec![vec![0.0], vec![0.0]];
        assert!(SystemModel::new(spec).is_err());
    }

    #[test]
    fn kernel_rows_conserve_mass() {
        let m = SystemModel::new(scenarios::canonical()).unwrap();
        let sg = *m.state_grid();
        let k = m.kernel(0.5).unwrap();
        for i in 0..sg.len() {
            let mass: f64 = (0..sg.len()).map(|j| sg.weight(j) * k.density[i * sg.len() + j]).sum();
            assert!((mass - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn canonical_scenario_never_clamps() {
        let m = SystemModel::new(scenarios::canonical()).unwrap();
        assert_eq!(m.clamped_rows(), 0);
    }

    #[test]
    fn pathwise_cost_direct_substitution() {
        let mut spec = scenarios::tiny();
        spec.horizon = 1;
        spec.running_cost = RunningCost::Quadratic {
            state_weight: 0.0,
            control_weight: 1.0,
        };
        spec.terminal_cost = TerminalCost::Quadratic {
            weight: 1.0,
            center: 0.0,
        };
        spec.mu = 0.5;
        let m = SystemModel::new(spec).unwrap();
        let traj = Trajectory {
            states: vec![0.0, 2.0],
            observations: vec![0.5],
            controls: vec![1.0],
            mode: SamplingMode::Nominal,
            seed: 0,
            info_mass: vec![1.0, 1.0],
            clamp_events: 0,
        };
        assert!((pathwise_cost(&m, &traj) - 2.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn zero_costs_give_unit_pathwise_cost() {
        let mut spec = scenarios::canonical();
        spec.running_cost = RunningCost::Zero;
        spec.terminal_cost = TerminalCost::Zero;
        let m = SystemModel::new(spec).unwrap();
        let t = simulate(&m, &ControlPolicy::Constant(0.5), None, SamplingMode::Nominal, 9).unwrap();
        assert_eq!(pathwise_cost(&m, &t), 1.0);
    }

    #[test]
    fn likelihood_ratio_trivial_cases() {
        let mut spec = scenarios::canonical();
        spec.observation = ObservationMap::Zero;
        let m = SystemModel::new(spec).unwrap();
        let t = simulate(&m, &ControlPolicy::Constant(0.0), None, SamplingMode::Nominal, 4).unwrap();
        assert_eq!(likelihood_ratio(&m, &t, 0).unwrap(), 1.0);
        assert!((likelihood_ratio(&m, &t, 3).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn likelihood_ratio_matches_hand_product() {
        let m = SystemModel::new(scenarios::canonical()).unwrap();
        let t = simulate(&m, &ControlPolicy::Constant(0.0), None, SamplingMode::Nominal, 17).unwrap();
        let phi = m.obs_noise();
        let (a, b) = match m.spec().observation {
            ObservationMap::Affine { slope, offset } => (slope, offset),
            _ => unreachable!(),
        };
        let mut oracle = 1.0;
        for i in 1..=3 {
            let x = t.states[i - 1];
            let y = t.observations[i - 1];
            let mut arg = y - (a * x + b);
            while arg < 0.0 {
                arg += 1.0;
            }
            while arg >= 1.0 {
                arg -= 1.0;
            }
            oracle *= phi.at(arg) / phi.at(y);
        }
        assert!((likelihood_ratio(&m, &t, 3).unwrap() - oracle).abs() < 1e-12 * oracle);
    }

    #[test]
    fn gaslit_requires_effort() {
        let m = SystemModel::new(scenarios::canonical()).unwrap();
        assert_eq!(
            simulate(&m, &ControlPolicy::Constant(0.0), None, SamplingMode::Gaslit, 1),
            Err(Error::MissingEffort)
        );
    }

    #[test]
    fn identity_dynamics_with_narrow_noise_stays_put() {
        let mut spec = scenarios::canonical();
        spec.horizon = 1;
        spec.dynamics = Dynamics::Linear { a: 1.0, b: 0.0 };
        let h = spec.state_grid.spacing();
        spec.process_noise = ProcessNoise {
            half_width: 0.5 * h,
            n_points: 3,
            family: NoiseFamily::TruncatedNormal { loc: 0.0, scale: 0.01 * h },
        };
        let m = SystemModel::new(spec).unwrap();
        for seed in 0..50 {
            let t = simulate(&m, &ControlPolicy::Constant(0.0), None, SamplingMode::Nominal, seed).unwrap();
            assert!((t.states[1] - t.states[0]).abs() <= h);
        }
    }

    #[test]
    fn simulate_is_deterministic() {
        let m = SystemModel::new(scenarios::canonical()).unwrap();
        let p = ControlPolicy::OpenLoop(vec![0.5, -0.5, 0.0]);
        let a = simulate(&m, &p, None, SamplingMode::Nominal, 123).unwrap();
        let b = simulate(&m, &p, None, SamplingMode::Nominal, 123).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.states.len(), 4);
        assert_eq!(a.observations.len(), 3);
        assert!(a.observations.iter().all(|y| m.obs_grid().contains(*y)));
    }
}
