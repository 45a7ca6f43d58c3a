//! Constants and deviation bounds between nominal and gaslit information
//! states, and between the DM's costs under the two filters.
//!
//! Per-step bounds:
//! - same observation, two states: `d(Σσ̄, Σσ̂) ≤ c·d(σ̄, σ̂)/φ(y)`;
//! - same state, two operators: `d(Σ°σ, Σσ) ≤ c·ζ·|1/φ°(y) − 1/φ(y)|`.
//!
//! Chaining them gives `d̃_k = c·d̃_{k−1}/φ(y_k) + c·ζ·Y_k(y_k)`, a bound on
//! `d(σ°_k, σ_k)` for any control sequence.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::effort::GaslightEffort;
use crate::error::{Error, Result};
use crate::filter;
use crate::grid::{l1_distance, pairing, GridDensity, InformationState};
use crate::model::{self, SamplingMode, SystemModel};
use crate::policy::ControlPolicy;
use crate::stats::{run_trials, Estimate};

/// Absolute slack below which a bound check counts as satisfied.
pub const BOUND_SLACK: f64 = 1e-9;

/// How ζ, the cap on information-state mass, is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ZetaMode {
    /// `max(1, φ̂·l/φ_floor)^K · max(‖ρ‖₁, ‖ρ°‖₁)`, where `φ_floor` is the
    /// smallest value of φ and of every effort density considered.
    Analytic,
    /// Twice the largest `‖σ_k‖₁` seen in reference-mode rollouts.
    Empirical { n_trials: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessConstants {
    pub phi_hat: f64,
    pub phi_min: f64,
    /// `max exp(μL)` over state nodes and controls.
    pub l: f64,
    /// `φ̂·l`.
    pub c: f64,
    pub zeta: f64,
    pub e_phi: f64,
    pub e_gamma: f64,
    pub vol_y: f64,
    /// Largest `d(ρ°, ρ)` over the efforts considered.
    pub d0: f64,
    pub zeta_mode: ZetaMode,
}

/// Constants for `model` and a family of efforts (the family fixes the
/// density floor in the analytic ζ and the prior gap `d₀`).
pub fn compute_constants(
    model: &SystemModel,
    efforts: &[GaslightEffort],
    mode: ZetaMode,
) -> Result<RobustnessConstants> {
    let phi = model.obs_noise();
    let phi_hat = phi.max();
    let phi_min = phi.min();
    let mu = model.mu();
    let mut l = f64::NEG_INFINITY;
    for k in 0..model.horizon() {
        for &u in model.controls(k) {
            for x in model.state_grid().nodes() {
                l = l.max((mu * model.running_cost(x, u)).exp());
            }
        }
    }
    if !l.is_finite() {
        l = 1.0;
    }
    let e_phi = model.terminal_weights().into_iter().fold(f64::NEG_INFINITY, f64::max);
    let e_gamma = model.gaslighter_weights().into_iter().fold(f64::NEG_INFINITY, f64::max);
    let rho = InformationState::from(model.prior());
    let mut d0: f64 = 0.0;
    let mut prior_mass = rho.mass();
    let mut floor = phi_min;
    for e in efforts {
        if let Some(p) = e.prior() {
            let p = InformationState::from(p);
            d0 = d0.max(l1_distance(&p, &rho)?);
            prior_mass = prior_mass.max(p.mass());
        }
        for d in e.stages() {
            floor = floor.min(d.min());
        }
    }
    if !(floor > 0.0) {
        return Err(Error::DegenerateEffortDensity { y: f64::NAN });
    }
    let c = phi_hat * l;
    let zeta = match mode {
        ZetaMode::Analytic => (c / floor).max(1.0).powi(model.horizon() as i32) * prior_mass,
        ZetaMode::Empirical { n_trials, seed } => {
            let observed = max_observed_mass(model, efforts, n_trials, seed)?;
            2.0 * observed.max(prior_mass)
        }
    };
    Ok(RobustnessConstants {
        phi_hat,
        phi_min,
        l,
        c,
        zeta,
        e_phi,
        e_gamma,
        vol_y: model.obs_grid().length(),
        d0,
        zeta_mode: mode,
    })
}

/// Open-loop policy that cycles through the control sets with the trial index.
fn cycling_policy(model: &SystemModel, i: usize) -> ControlPolicy {
    ControlPolicy::OpenLoop(
        (0..model.horizon())
            .map(|k| {
                let set = model.controls(k);
                set[(i / set.len().pow(k as u32).max(1)) % set.len()]
            })
            .collect(),
    )
}

/// Largest `‖σ_k‖₁` over reference-mode rollouts, with the nominal filter and
/// with each effort's filter.
pub fn max_observed_mass(
    model: &SystemModel,
    efforts: &[GaslightEffort],
    n_trials: usize,
    seed: u64,
) -> Result<f64> {
    let mut filters: Vec<Option<&GaslightEffort>> = vec![None];
    filters.extend(efforts.iter().map(Some));
    let maxima = run_trials(n_trials, seed, |i, rng| -> Result<f64> {
        let policy = cycling_policy(model, i);
        let e = filters[i % filters.len()];
        let r = model::rollout(model, &policy, e, SamplingMode::Reference, rng, None)?;
        Ok(r.trajectory.info_mass.iter().copied().fold(0.0, f64::max))
    });
    maxima
        .into_iter()
        .try_fold(0.0f64, |acc, m| m.map(|m| acc.max(m)))
}

/// `(actual, bound)` for one instance of a bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub actual: f64,
    pub bound: f64,
}

impl BoundCheck {
    pub fn slack(&self) -> f64 {
        self.bound - self.actual
    }

    pub fn holds(&self) -> bool {
        self.actual <= self.bound + BOUND_SLACK
    }
}

fn positive_at(d: &GridDensity, y: f64, reference: bool) -> Result<f64> {
    let v = d.at(y);
    if v > 0.0 {
        Ok(v)
    } else if reference {
        Err(Error::DegenerateReferenceDensity { y })
    } else {
        Err(Error::DegenerateEffortDensity { y })
    }
}

/// `c·d/φ(y)`.
pub fn lemma1_bound(constants: &RobustnessConstants, phi: &GridDensity, y: f64, distance: f64) -> Result<f64> {
    Ok(constants.c * distance / positive_at(phi, y, true)?)
}

/// Distance of the nominal updates of two states against [`lemma1_bound`].
pub fn lemma1_check(
    model: &SystemModel,
    constants: &RobustnessConstants,
    a: &InformationState,
    b: &InformationState,
    u: f64,
    y: f64,
) -> Result<BoundCheck> {
    let ua = filter::info_state_update(model, a, u, y)?;
    let ub = filter::info_state_update(model, b, u, y)?;
    Ok(BoundCheck {
        actual: l1_distance(&ua, &ub)?,
        bound: lemma1_bound(constants, model.obs_noise(), y, l1_distance(a, b)?)?,
    })
}

/// `Y(y) = |1/φ°(y) − 1/φ(y)|`.
pub fn ratio_gap(phi: &GridDensity, effort_density: &GridDensity, y: f64) -> Result<f64> {
    let p = positive_at(phi, y, true)?;
    let q = positive_at(effort_density, y, false)?;
    Ok((1.0 / q - 1.0 / p).abs())
}

/// `c·ζ·|1/φ°(y) − 1/φ(y)|`.
pub fn lemma2_bound(
    constants: &RobustnessConstants,
    phi: &GridDensity,
    y: f64,
    effort_density: &GridDensity,
) -> Result<f64> {
    Ok(constants.c * constants.zeta * ratio_gap(phi, effort_density, y)?)
}

/// Distance between the gaslit and nominal updates of the same state, which
/// must satisfy `‖σ‖₁ ≤ ζ`.
pub fn lemma2_check(
    model: &SystemModel,
    constants: &RobustnessConstants,
    sigma: &InformationState,
    u: f64,
    y: f64,
    effort_density: &GridDensity,
) -> Result<BoundCheck> {
    if sigma.mass() > constants.zeta * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "state mass {} exceeds zeta {}",
            sigma.mass(),
            constants.zeta
        )));
    }
    let nominal = filter::info_state_update(model, sigma, u, y)?;
    let gaslit = filter::gaslit_update(model, sigma, u, y, effort_density)?;
    Ok(BoundCheck {
        actual: l1_distance(&gaslit, &nominal)?,
        bound: lemma2_bound(constants, model.obs_noise(), y, effort_density)?,
    })
}

/// `d̃_1..d̃_k` by recursion and in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Bound {
    pub recursion: Vec<f64>,
    pub closed_form: Vec<f64>,
}

impl Theorem1Bound {
    /// Largest relative disagreement between the two forms.
    pub fn max_relative_gap(&self) -> f64 {
        self.recursion
            .iter()
            .zip(&self.closed_form)
            .map(|(a, b)| {
                let scale = a.abs().max(b.abs());
                if scale == 0.0 {
                    0.0
                } else {
                    (a - b).abs() / scale
                }
            })
            .fold(0.0, f64::max)
    }
}

/// `d(ρ°, ρ)` for one effort.
pub fn prior_gap(model: &SystemModel, effort: &GaslightEffort) -> Result<f64> {
    match effort.prior() {
        Some(p) => l1_distance(&InformationState::from(p), &InformationState::from(model.prior())),
        None => Ok(0.0),
    }
}

/// Bound sequence on `d(σ°_k, σ_k)` along `observations`, from `d₀`.
pub fn theorem1_bound(
    constants: &RobustnessConstants,
    phi: &GridDensity,
    observations: &[f64],
    effort: &GaslightEffort,
    d0: f64,
) -> Result<Theorem1Bound> {
    if observations.len() > effort.horizon() {
        return Err(Error::InvalidArgument("more observations than effort stages".into()));
    }
    let c = constants.c;
    let cz = c * constants.zeta;
    let phis = observations
        .iter()
        .map(|&y| positive_at(phi, y, true))
        .collect::<Result<Vec<f64>>>()?;
    let gaps = observations
        .iter()
        .enumerate()
        .map(|(i, &y)| ratio_gap(phi, effort.stage(i + 1), y))
        .collect::<Result<Vec<f64>>>()?;

    let mut recursion = Vec::with_capacity(observations.len());
    let mut d = d0;
    for (p, g) in phis.iter().zip(&gaps) {
        d = c * d / p + cz * g;
        recursion.push(d);
    }

    let closed_form = (1..=observations.len())
        .map(|k| {
            let tail = |from: usize| -> f64 { phis[from..k].iter().product() };
            let mut total = c.powi(k as i32) * d0 / tail(0);
            for j in 1..=k {
                total += c.powi((k - j + 1) as i32) * constants.zeta * gaps[j - 1] / tail(j);
            }
            total
        })
        .collect();
    Ok(Theorem1Bound { recursion, closed_form })
}

/// Forward run with the gaslit filter driving the controls, and the nominal
/// filter fed the same controls and observations.
#[derive(Debug, Clone)]
pub struct PairedRun {
    pub observations: Vec<f64>,
    pub controls: Vec<f64>,
    pub gaslit: Vec<InformationState>,
    pub nominal: Vec<InformationState>,
}

/// Reference-mode observations, controls from `policy` applied to σ°.
pub fn paired_run<R: Rng + ?Sized>(
    model: &SystemModel,
    effort: &GaslightEffort,
    policy: &ControlPolicy,
    rng: &mut R,
) -> Result<PairedRun> {
    let r = model::rollout(model, policy, Some(effort), SamplingMode::Reference, rng, None)?;
    let t = r.trajectory;
    let nominal = filter::run_filter(model, &t.controls, &t.observations, None)?;
    Ok(PairedRun {
        observations: t.observations,
        controls: t.controls,
        gaslit: r.info_states,
        nominal: nominal.states,
    })
}

/// One row of a bound report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub check: String,
    pub trial: usize,
    pub stage: usize,
    pub actual: f64,
    pub bound: f64,
    pub slack: f64,
}

impl BoundRecord {
    pub fn new(check: &str, trial: usize, stage: usize, c: BoundCheck) -> Self {
        BoundRecord {
            check: check.to_string(),
            trial,
            stage,
            actual: c.actual,
            bound: c.bound,
            slack: c.slack(),
        }
    }

    pub fn holds(&self) -> bool {
        self.actual <= self.bound + BOUND_SLACK
    }
}

/// Per-check violation count and slack statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub check: String,
    pub instances: usize,
    pub violations: usize,
    pub min_slack: f64,
    pub mean_slack: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub records: Vec<BoundRecord>,
}

impl BoundReport {
    pub fn extend(&mut self, records: Vec<BoundRecord>) {
        self.records.extend(records);
    }

    pub fn violations(&self) -> usize {
        self.records.iter().filter(|r| !r.holds()).count()
    }

    /// Summaries in order of first appearance of each check.
    pub fn summaries(&self) -> Vec<BoundSummary> {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.records {
            if !names.contains(&r.check.as_str()) {
                names.push(&r.check);
            }
        }
        names
            .into_iter()
            .map(|name| {
                let rows: Vec<&BoundRecord> = self.records.iter().filter(|r| r.check == name).collect();
                let slacks: Vec<f64> = rows.iter().map(|r| r.slack).collect();
                BoundSummary {
                    check: name.to_string(),
                    instances: rows.len(),
                    violations: rows.iter().filter(|r| !r.holds()).count(),
                    min_slack: slacks.iter().copied().fold(f64::INFINITY, f64::min),
                    mean_slack: crate::stats::pairwise_sum(&slacks) / slacks.len().max(1) as f64,
                }
            })
            .collect()
    }
}

/// A random nonnegative state: smooth, spiky or a point mass, with mass in `(0, cap]`.
pub fn random_state<R: Rng + ?Sized>(model: &SystemModel, cap: f64, rng: &mut R) -> InformationState {
    let g = *model.state_grid();
    let n = g.len();
    let values: Vec<f64> = match rng.gen_range(0..3) {
        0 => (0..n).map(|_| rng.gen::<f64>()).collect(),
        1 => (0..n).map(|_| rng.gen::<f64>().powi(8)).collect(),
        _ => {
            let mut v = vec![0.0; n];
            v[rng.gen_range(0..n)] = 1.0;
            v
        }
    };
    let s = InformationState::new(g, values).expect("random values are nonnegative");
    let mass = s.mass();
    let target = cap * rng.gen_range(0.01..=1.0);
    if mass > 0.0 {
        s.scaled(target / mass)
    } else {
        s
    }
}

fn random_control<R: Rng + ?Sized>(model: &SystemModel, rng: &mut R) -> (usize, f64) {
    let k = rng.gen_range(0..model.horizon().max(1));
    let set = if model.horizon() == 0 { &[0.0][..] } else { model.controls(k) };
    (k, set[rng.gen_range(0..set.len())])
}

fn random_obs<R: Rng + ?Sized>(model: &SystemModel, rng: &mut R) -> f64 {
    let g = model.obs_grid();
    rng.gen_range(g.lower()..=g.upper())
}

/// Random Lemma-1 instances; the pair of states is drawn independently.
pub fn lemma1_harness(
    model: &SystemModel,
    constants: &RobustnessConstants,
    n: usize,
    seed: u64,
) -> Result<Vec<BoundRecord>> {
    run_trials(n, seed, |i, rng| {
        let a = random_state(model, constants.zeta, rng);
        let b = random_state(model, constants.zeta, rng);
        let (_, u) = random_control(model, rng);
        let y = random_obs(model, rng);
        Ok(BoundRecord::new("lemma1", i, 0, lemma1_check(model, constants, &a, &b, u, y)?))
    })
    .into_iter()
    .collect()
}

/// Random Lemma-2 instances over the stages of the given efforts.
pub fn lemma2_harness(
    model: &SystemModel,
    constants: &RobustnessConstants,
    efforts: &[GaslightEffort],
    n: usize,
    seed: u64,
) -> Result<Vec<BoundRecord>> {
    if efforts.is_empty() || model.horizon() == 0 {
        return Ok(Vec::new());
    }
    run_trials(n, seed, |i, rng| {
        let sigma = random_state(model, constants.zeta, rng);
        let (k, u) = random_control(model, rng);
        let y = random_obs(model, rng);
        let e = &efforts[rng.gen_range(0..efforts.len())];
        let check = lemma2_check(model, constants, &sigma, u, y, e.stage(k + 1))?;
        Ok(BoundRecord::new("lemma2", i, k + 1, check))
    })
    .into_iter()
    .collect()
}

/// Filter deviation `d(σ°_k, σ_k)` against `d̃_k` along paired runs; trial `i`
/// uses effort `i mod |efforts|`.
pub fn theorem1_harness(
    model: &SystemModel,
    constants: &RobustnessConstants,
    efforts: &[GaslightEffort],
    policy: &ControlPolicy,
    n: usize,
    seed: u64,
) -> Result<Vec<BoundRecord>> {
    if efforts.is_empty() {
        return Ok(Vec::new());
    }
    let per_trial = run_trials(n, seed, |i, rng| -> Result<Vec<BoundRecord>> {
        let e = &efforts[i % efforts.len()];
        let run = paired_run(model, e, policy, rng)?;
        let d0 = prior_gap(model, e)?;
        let bound = theorem1_bound(constants, model.obs_noise(), &run.observations, e, d0)?;
        (1..run.gaslit.len())
            .map(|k| {
                let actual = l1_distance(&run.gaslit[k], &run.nominal[k])?;
                Ok(BoundRecord::new(
                    "theorem1",
                    i,
                    k,
                    BoundCheck {
                        actual,
                        bound: bound.recursion[k - 1],
                    },
                ))
            })
            .collect()
    });
    let mut out = Vec::new();
    for r in per_trial {
        out.extend(r?);
    }
    Ok(out)
}

/// Monte Carlo comparison of `𝒥° − 𝒥` against `e_Φ·E†[d̃_K]` on shared draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Result {
    /// `𝒥° − 𝒥`, paired per trial.
    pub lhs: Estimate,
    /// `e_Φ·d̃_K`.
    pub rhs: Estimate,
    /// `e_Φ·d(σ°_K, σ_K)`, the intermediate quantity.
    pub middle: Estimate,
    /// Per-trial `rhs − lhs`.
    pub gap: Estimate,
    pub holds: bool,
}

pub fn theorem2_check(
    model: &SystemModel,
    constants: &RobustnessConstants,
    effort: &GaslightEffort,
    policy: &ControlPolicy,
    n_trials: usize,
    seed: u64,
) -> Result<Theorem2Result> {
    if n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
    }
    let weights = model.terminal_weights();
    let d0 = prior_gap(model, effort)?;
    let samples = run_trials(n_trials, seed, |_, rng| -> Result<(f64, f64, f64)> {
        let run = paired_run(model, effort, policy, rng)?;
        let g = run.gaslit.last().unwrap();
        let n = run.nominal.last().unwrap();
        let sg = model.state_grid();
        let lhs = pairing(sg, g.values(), &weights) - pairing(sg, n.values(), &weights);
        let bound = theorem1_bound(constants, model.obs_noise(), &run.observations, effort, d0)?;
        let d_tilde = bound.recursion.last().copied().unwrap_or(d0);
        Ok((lhs, constants.e_phi * d_tilde, constants.e_phi * l1_distance(g, n)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let lhs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let rhs: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let middle: Vec<f64> = samples.iter().map(|s| s.2).collect();
    let gap: Vec<f64> = samples.iter().map(|s| s.1 - s.0).collect();
    let gap = Estimate::from_samples(&gap);
    Ok(Theorem2Result {
        lhs: Estimate::from_samples(&lhs),
        rhs: Estimate::from_samples(&rhs),
        middle: Estimate::from_samples(&middle),
        holds: gap.mean >= -4.0 * gap.std_error - BOUND_SLACK,
        gap,
    })
}

/// Variants of the expected-deviation bound on the DM's cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem3Form {
    /// `e_Φ(c^K d₀ + s Σ_{i=1}^{K−1} c^i)`.
    Stated,
    /// `e_Φ((c·vol_Y)^K d₀ + s Σ_{i=1}^{K−1} c^i)`.
    VolumeCorrected,
    /// `e_Φ((c·vol_Y)^K d₀ + s Σ_{i=0}^{K−1} (c·vol_Y)^i)`: the value obtained
    /// by taking the expectation of the recursion for `d̃` stage by stage.
    Sound,
}

pub fn theorem3_bound(constants: &RobustnessConstants, s: f64, horizon: usize, form: Theorem3Form) -> f64 {
    let c = constants.c;
    let cv = c * constants.vol_y;
    let k = horizon as i32;
    let inner = match form {
        Theorem3Form::Stated => c.powi(k) * constants.d0 + s * (1..horizon).map(|i| c.powi(i as i32)).sum::<f64>(),
        Theorem3Form::VolumeCorrected => {
            cv.powi(k) * constants.d0 + s * (1..horizon).map(|i| c.powi(i as i32)).sum::<f64>()
        }
        Theorem3Form::Sound => cv.powi(k) * constants.d0 + s * (0..horizon).map(|i| cv.powi(i as i32)).sum::<f64>(),
    };
    constants.e_phi * inner
}
