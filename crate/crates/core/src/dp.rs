//! The DM's dynamic program over information states.
//!
//! `Z(σ, K) = ⟨σ, exp(μΦ)⟩` and `Z(σ, k) = min_u E†[Z(Σ(u, y)σ, k+1)]`, with
//! the expectation over `y ~ φ` replaced by a fixed quadrature on the
//! observation grid. Because the update is linear and nonnegative, every
//! `Z(·, k)` is a minimum of linear functionals (α-vectors). With an effort
//! the gaslit update replaces the nominal one, which gives the DM's value `V`
//! and its best response.
//!
//! The one-step backup of a stage-(k+1) vector `α` through control `u` and
//! observation node `y_n` is `(A α)(ξ_i) = π_n · e^{μL(ξ_i,u)} · φ(y_n − h(ξ_i)) / d(y_n) · Σ_j P(i,j) α_j`
//! where `d` is φ (nominal) or `φ°_{k+1}` (gaslit) and `P(i,j) = w_j G(i,j)`.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effort::GaslightEffort;
use crate::error::{Error, Result};
use crate::filter;
use crate::grid::{pairing, Grid, InformationState};
use crate::model::SystemModel;

pub const DEFAULT_ALPHA_CAP: usize = 20_000;
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-9;
/// Largest policy tree the brute-force oracle will walk.
pub const ENUMERATION_CAP: u128 = 1_000_000;

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpOptions {
    pub obs_nodes: usize,
    pub alpha_cap: usize,
    pub tie_tolerance: f64,
}

impl Default for DpOptions {
    fn default() -> Self {
        DpOptions {
            obs_nodes: 5,
            alpha_cap: DEFAULT_ALPHA_CAP,
            tie_tolerance: DEFAULT_TIE_TOLERANCE,
        }
    }
}

impl DpOptions {
    pub fn with_nodes(obs_nodes: usize) -> Self {
        DpOptions {
            obs_nodes,
            ..DpOptions::default()
        }
    }
}

/// Observation nodes `y_n` and weights `π_n ∝ ω_n φ(y_n)` summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ObsQuadrature {
    pub fn new(model: &SystemModel, n_nodes: usize) -> Result<Self> {
        if n_nodes < 1 {
            return Err(Error::InvalidArgument("observation quadrature needs at least one node".into()));
        }
        let g = model.obs_grid();
        let (nodes, raw): (Vec<f64>, Vec<f64>) = if n_nodes == 1 {
            (vec![0.5 * (g.lower() + g.upper())], vec![1.0])
        } else {
            let q = Grid::new(g.lower(), g.upper(), n_nodes)?;
            (q.nodes().collect(), q.weights())
        };
        let phi = model.obs_noise();
        let unnorm: Vec<f64> = nodes.iter().zip(&raw).map(|(y, w)| w * phi.at(*y)).collect();
        let total: f64 = unnorm.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateReferenceDensity { y: nodes[0] });
        }
        Ok(ObsQuadrature {
            nodes,
            weights: unnorm.iter().map(|w| w / total).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// One linear functional with the index of the control it prescribes first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaVector {
    /// Index into the stage's control set; `None` for the terminal vector.
    pub action: Option<usize>,
    pub values: Vec<f64>,
}

/// Vector counts before and after pointwise-domination pruning.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneStats {
    /// Cross-sum size without any pruning (saturating).
    pub generated: u128,
    pub kept: usize,
}

/// Backed-up vectors `A_{u, y_n} α` for every control `u` and node `n`.
type Backups = Vec<Vec<Vec<Vec<f64>>>>;

#[derive(Debug, Clone)]
struct Stage {
    explicit: Option<Vec<AlphaVector>>,
    backups: Option<Backups>,
    stats: PruneStats,
}

/// Solved value function for stages `0..=K`.
#[derive(Debug, Clone)]
pub struct AlphaVectorSet {
    grid: Grid,
    controls: Vec<Vec<f64>>,
    quadrature: ObsQuadrature,
    gaslit: bool,
    tie_tolerance: f64,
    stages: Vec<Stage>,
    /// Decision at the first state queried at stage 0 (the prior, in practice).
    stage0_decision: OnceLock<(Vec<f64>, usize)>,
}

/// Removes vectors dominated pointwise by another one (for a minimum over
/// nonnegative states). Among equal vectors the first is kept.
pub fn prune(vectors: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let keep: Vec<bool> = (0..vectors.len())
        .into_par_iter()
        .map(|i| {
            let vi = &vectors[i];
            !vectors.iter().enumerate().any(|(j, vj)| {
                if j == i {
                    return false;
                }
                let mut strict = false;
                for (a, b) in vj.iter().zip(vi) {
                    if a > b {
                        return false;
                    }
                    if a < b {
                        strict = true;
                    }
                }
                strict || j < i
            })
        })
        .collect();
    vectors
        .into_iter()
        .zip(keep)
        .filter_map(|(v, k)| k.then_some(v))
        .collect()
}

fn adjoint(model: &SystemModel, u: f64, y: f64, scale: f64, alpha: &[f64]) -> Result<Vec<f64>> {
    let kernel = model.kernel(u)?;
    let sg = model.state_grid();
    let n = sg.len();
    let w = sg.weights();
    let lik = model.obs_likelihoods(y);
    Ok((0..n)
        .map(|i| {
            let row = &kernel.density[i * n..(i + 1) * n];
            let expect: f64 = row.iter().zip(&w).zip(alpha).map(|((g, wj), a)| g * wj * a).sum();
            scale * kernel.risk[i] * lik[i] * expect
        })
        .collect())
}

/// `π_n / d(y_n)` for every node, where `d` is the stage's denominator density.
fn node_scales(
    model: &SystemModel,
    quad: &ObsQuadrature,
    effort: Option<&GaslightEffort>,
    stage: usize,
) -> Result<Vec<f64>> {
    quad.nodes
        .iter()
        .zip(&quad.weights)
        .map(|(&y, &p)| {
            let d = match effort {
                Some(e) => {
                    let d = e.stage(stage).at(y);
                    if !(d > 0.0) {
                        return Err(Error::DegenerateEffortDensity { y });
                    }
                    d
                }
                None => {
                    let d = model.obs_noise().at(y);
                    if !(d > 0.0) {
                        return Err(Error::DegenerateReferenceDensity { y });
                    }
                    d
                }
            };
            Ok(p / d)
        })
        .collect()
}

fn check_effort(model: &SystemModel, effort: Option<&GaslightEffort>) -> Result<()> {
    if let Some(e) = effort {
        if e.horizon() != model.horizon() {
            return Err(Error::InvalidArgument(format!(
                "effort has {} stages, horizon is {}",
                e.horizon(),
                model.horizon()
            )));
        }
    }
    Ok(())
}

/// Pruned cross-sum `⊕_n lists[n]`, or the offending size once an intermediate set would
/// exceed `cap`.
fn cross_sum(lists: &[Vec<Vec<f64>>], cap: usize) -> std::result::Result<Vec<Vec<f64>>, usize> {
    let mut acc: Vec<Vec<f64>> = vec![vec![0.0; lists[0][0].len()]];
    for list in lists {
        let needed = acc.len().saturating_mul(list.len());
        if needed > cap {
            return Err(needed);
        }
        let sums: Vec<Vec<f64>> = acc
            .iter()
            .flat_map(|a| list.iter().map(move |b| a.iter().zip(b).map(|(x, y)| x + y).collect()))
            .collect();
        acc = prune(sums);
    }
    Ok(acc)
}

/// Exact (up to observation quadrature) solution of the DM's dynamic program,
/// with the gaslit operator when `effort` is given.
pub fn backward_induction(
    model: &SystemModel,
    effort: Option<&GaslightEffort>,
    options: &DpOptions,
) -> Result<AlphaVectorSet> {
    check_effort(model, effort)?;
    let quad = ObsQuadrature::new(model, options.obs_nodes)?;
    let big_k = model.horizon();
    let terminal = model.terminal_weights();
    let mut stages: Vec<Option<Stage>> = vec![None; big_k + 1];
    stages[big_k] = Some(Stage {
        explicit: Some(vec![AlphaVector {
            action: None,
            values: terminal.clone(),
        }]),
        backups: None,
        stats: PruneStats { generated: 1, kept: 1 },
    });
    let mut next: Vec<Vec<f64>> = vec![terminal];
    for k in (0..big_k).rev() {
        let scales = node_scales(model, &quad, effort, k + 1)?;
        let controls = model.controls(k);
        let backups: Backups = controls
            .iter()
            .map(|&u| {
                quad.nodes
                    .iter()
                    .zip(&scales)
                    .map(|(&y, &s)| {
                        let list = next
                            .par_iter()
                            .map(|a| adjoint(model, u, y, s, a))
                            .collect::<Result<Vec<_>>>()?;
                        Ok(prune(list))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let generated = (controls.len() as u128).saturating_mul((next.len() as u128).saturating_pow(quad.len() as u32));

        let mut explicit: Option<Vec<AlphaVector>> = Some(Vec::new());
        for (ui, per_u) in backups.iter().enumerate() {
            match cross_sum(per_u, options.alpha_cap) {
                Ok(set) => {
                    if let Some(ex) = explicit.as_mut() {
                        ex.extend(set.into_iter().map(|values| AlphaVector {
                            action: Some(ui),
                            values,
                        }));
                        if ex.len() > options.alpha_cap && k > 0 {
                            return Err(Error::AlphaBudgetExceeded {
                                stage: k,
                                needed: ex.len(),
                                cap: options.alpha_cap,
                            });
                        }
                    }
                }
                Err(needed) => {
                    if k > 0 {
                        return Err(Error::AlphaBudgetExceeded {
                            stage: k,
                            needed,
                            cap: options.alpha_cap,
                        });
                    }
                    explicit = None;
                    break;
                }
            }
        }
        if k > 0 {
            let ex = explicit.as_ref().expect("explicit below stage 0");
            next = prune(ex.iter().map(|a| a.values.clone()).collect());
        }
        let kept = explicit.as_ref().map_or(0, |e| e.len());
        stages[k] = Some(Stage {
            explicit,
            backups: Some(backups),
            stats: PruneStats { generated, kept },
        });
    }
    Ok(AlphaVectorSet {
        grid: *model.state_grid(),
        controls: (0..big_k).map(|k| model.controls(k).to_vec()).collect(),
        quadrature: quad,
        gaslit: effort.is_some(),
        tie_tolerance: options.tie_tolerance,
        stages: stages.into_iter().map(|s| s.expect("every stage filled")).collect(),
        stage0_decision: OnceLock::new(),
    })
}

/// Stage-`k` view of a solved set, for JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct StageView<'a> {
    pub stage: usize,
    pub generated: u128,
    pub kept: usize,
    /// `None` when the stage is held only in factored form.
    pub vectors: Option<&'a [AlphaVector]>,
}

impl AlphaVectorSet {
    pub fn horizon(&self) -> usize {
        self.stages.len() - 1
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn quadrature(&self) -> &ObsQuadrature {
        &self.quadrature
    }

    pub fn is_gaslit(&self) -> bool {
        self.gaslit
    }

    pub fn tie_tolerance(&self) -> f64 {
        self.tie_tolerance
    }

    /// Explicit vectors of stage `k`, if held.
    pub fn vectors(&self, k: usize) -> Option<&[AlphaVector]> {
        self.stages.get(k)?.explicit.as_deref()
    }

    pub fn stats(&self, k: usize) -> PruneStats {
        self.stages[k].stats
    }

    pub fn stage_views(&self) -> Vec<StageView<'_>> {
        self.stages
            .iter()
            .enumerate()
            .map(|(k, s)| StageView {
                stage: k,
                generated: s.stats.generated,
                kept: s.stats.kept,
                vectors: s.explicit.as_deref(),
            })
            .collect()
    }

    fn check(&self, sigma: &InformationState, k: usize) -> Result<()> {
        if *sigma.grid() != self.grid {
            return Err(Error::IncompatibleGrids);
        }
        if k > self.horizon() {
            return Err(Error::InvalidArgument(format!("stage {k} beyond horizon {}", self.horizon())));
        }
        Ok(())
    }

    /// One-step lookahead values `E†[Z(Σ(u, y)σ, k+1)]` for every control.
    pub fn q_values(&self, sigma: &InformationState, k: usize) -> Result<Vec<f64>> {
        self.check(sigma, k)?;
        let backups = self.stages[k]
            .backups
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("no decision at the terminal stage {k}")))?;
        Ok(backups
            .iter()
            .map(|per_u| {
                per_u
                    .iter()
                    .map(|list| {
                        list.iter()
                            .map(|a| pairing(&self.grid, sigma.values(), a))
                            .fold(f64::INFINITY, f64::min)
                    })
                    .sum()
            })
            .collect())
    }

    /// `Z(σ, k)`: minimum over stage-`k` functionals.
    pub fn value(&self, sigma: &InformationState, k: usize) -> Result<f64> {
        self.check(sigma, k)?;
        match &self.stages[k].explicit {
            Some(vs) => Ok(vs
                .iter()
                .map(|a| pairing(&self.grid, sigma.values(), &a.values))
                .fold(f64::INFINITY, f64::min)),
            None => Ok(self.q_values(sigma, k)?.into_iter().fold(f64::INFINITY, f64::min)),
        }
    }

    /// Lowest control index whose lookahead value is within the tie tolerance
    /// of the minimum.
    pub fn best_action(&self, sigma: &InformationState, k: usize) -> Result<usize> {
        if k == 0 {
            if let Some((cached, idx)) = self.stage0_decision.get() {
                if cached.as_slice() == sigma.values() {
                    return Ok(*idx);
                }
            }
        }
        let q = self.q_values(sigma, k)?;
        let idx = within_tolerance(&q, self.tie_tolerance)[0];
        if k == 0 {
            let _ = self.stage0_decision.set((sigma.values().to_vec(), idx));
        }
        Ok(idx)
    }

    /// All controls within `tol` of the best lookahead value.
    pub fn response_set(&self, sigma: &InformationState, k: usize, tol: f64) -> Result<ResponseSet> {
        let q = self.q_values(sigma, k)?;
        let members = within_tolerance(&q, tol);
        Ok(ResponseSet {
            stage: k,
            controls: members.iter().map(|&i| self.controls[k][i]).collect(),
            indices: members,
            values: q,
        })
    }
}

fn within_tolerance(q: &[f64], tol: f64) -> Vec<usize> {
    let min = q.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = tol * min.abs().max(1.0);
    q.iter()
        .enumerate()
        .filter(|(_, v)| (**v - min).abs() <= slack || tol == f64::INFINITY)
        .map(|(i, _)| i)
        .collect()
}

/// Controls at stage `k` whose lookahead value is within tolerance of the best.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSet {
    pub stage: usize,
    pub indices: Vec<usize>,
    pub controls: Vec<f64>,
    /// Lookahead value of every control, in control-set order.
    pub values: Vec<f64>,
}

/// Value of the fixed control sequence `controls` from `σ` at stage `k`:
/// a single linear functional built with the same backups, no minimization.
pub fn open_loop_value(
    model: &SystemModel,
    effort: Option<&GaslightEffort>,
    controls: &[f64],
    sigma: &InformationState,
    k: usize,
    obs_nodes: usize,
) -> Result<f64> {
    check_effort(model, effort)?;
    let big_k = model.horizon();
    if controls.len() != big_k {
        return Err(Error::InvalidArgument(format!(
            "{} controls for horizon {big_k}",
            controls.len()
        )));
    }
    if k > big_k {
        return Err(Error::InvalidArgument(format!("stage {k} beyond horizon {big_k}")));
    }
    let quad = ObsQuadrature::new(model, obs_nodes)?;
    let mut beta = model.terminal_weights();
    for j in (k..big_k).rev() {
        let scales = node_scales(model, &quad, effort, j + 1)?;
        let mut acc = vec![0.0; beta.len()];
        for (&y, &s) in quad.nodes.iter().zip(&scales) {
            for (a, b) in acc.iter_mut().zip(adjoint(model, controls[j], y, s, &beta)?) {
                *a += b;
            }
        }
        beta = acc;
    }
    Ok(pairing(model.state_grid(), sigma.values(), &beta))
}

/// Brute-force minimum over every observation-feedback policy tree, using the
/// forward filter at each quadrature node. Evaluated at the DM's prior.
pub fn enumerate_policies_oracle(
    model: &SystemModel,
    effort: Option<&GaslightEffort>,
    obs_nodes: usize,
) -> Result<f64> {
    let sigma0 = match effort.and_then(|e| e.prior()) {
        Some(p) => InformationState::from(p),
        None => InformationState::from(model.prior()),
    };
    oracle_value(model, effort, obs_nodes, &sigma0, 0)
}

/// Brute-force `Z(σ, k)` (or `V` under an effort).
pub fn oracle_value(
    model: &SystemModel,
    effort: Option<&GaslightEffort>,
    obs_nodes: usize,
    sigma: &InformationState,
    k: usize,
) -> Result<f64> {
    check_effort(model, effort)?;
    let quad = ObsQuadrature::new(model, obs_nodes)?;
    let mut leaves: u128 = 1;
    for j in k..model.horizon() {
        leaves = leaves.saturating_mul(model.controls(j).len() as u128 * quad.len() as u128);
    }
    if leaves >= ENUMERATION_CAP {
        return Err(Error::EnumerationBudgetExceeded {
            needed: leaves,
            cap: ENUMERATION_CAP,
        });
    }
    oracle_rec(model, effort, &quad, sigma, k)
}

fn oracle_rec(
    model: &SystemModel,
    effort: Option<&GaslightEffort>,
    quad: &ObsQuadrature,
    sigma: &InformationState,
    k: usize,
) -> Result<f64> {
    if k == model.horizon() {
        return filter::terminal_functional(model, sigma);
    }
    let mut best = f64::INFINITY;
    for &u in model.controls(k) {
        let mut total = 0.0;
        for (&y, &p) in quad.nodes.iter().zip(&quad.weights) {
            let next = match effort {
                Some(e) => filter::gaslit_update(model, sigma, u, y, e.stage(k + 1))?,
                None => filter::info_state_update(model, sigma, u, y)?,
            };
            total += p * oracle_rec(model, effort, quad, &next, k + 1)?;
        }
        best = best.min(total);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn horizon_zero_is_terminal_functional() {
        let mut spec = scenarios::tiny();
        spec.horizon = 0;
        let m = SystemModel::new(spec).unwrap();
        let a = backward_induction(&m, None, &DpOptions::with_nodes(3)).unwrap();
        assert_eq!(a.vectors(0).unwrap().len(), 1);
        let rho = InformationState::from(m.prior());
        assert_eq!(a.value(&rho, 0).unwrap(), filter::terminal_functional(&m, &rho).unwrap());
    }

    #[test]
    fn single_control_keeps_one_vector() {
        let mut spec = scenarios::tiny();
        spec.controls = vec![vec![0.0]];
        let m = SystemModel::new(spec).unwrap();
        let a = backward_induction(&m, None, &DpOptions::with_nodes(3)).unwrap();
        for k in 0..=m.horizon() {
            assert_eq!(a.vectors(k).unwrap().len(), 1, "stage {k}");
        }
    }

    #[test]
    fn tiny_matches_oracle() {
        let m = SystemModel::new(scenarios::tiny()).unwrap();
        let a = backward_induction(&m, None, &DpOptions::with_nodes(3)).unwrap();
        let rho = InformationState::from(m.prior());
        let dp = a.value(&rho, 0).unwrap();
        let oracle = enumerate_policies_oracle(&m, None, 3).unwrap();
        assert!((dp - oracle).abs() <= 1e-10 * oracle.abs().max(1.0), "{dp} vs {oracle}");
    }

    #[test]
    fn depth_one_oracle_is_min_over_controls() {
        let mut spec = scenarios::tiny();
        spec.horizon = 1;
        let m = SystemModel::new(spec).unwrap();
        let quad = ObsQuadrature::new(&m, 3).unwrap();
        let rho = InformationState::from(m.prior());
        let by_hand = m
            .controls(0)
            .iter()
            .map(|&u| {
                quad.nodes
                    .iter()
                    .zip(&quad.weights)
                    .map(|(&y, &p)| {
                        p * filter::terminal_functional(&m, &filter::info_state_update(&m, &rho, u, y).unwrap())
                            .unwrap()
                    })
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        let oracle = enumerate_policies_oracle(&m, None, 3).unwrap();
        assert!((by_hand - oracle).abs() < 1e-14);
    }

    #[test]
    fn nominal_effort_oracle_is_unchanged() {
        let m = SystemModel::new(scenarios::tiny()).unwrap();
        let e = GaslightEffort::nominal(&m, 1.0).unwrap();
        assert_eq!(
            enumerate_policies_oracle(&m, None, 3).unwrap(),
            enumerate_policies_oracle(&m, Some(&e), 3).unwrap()
        );
    }

    #[test]
    fn oracle_guard_trips() {
        let mut spec = scenarios::canonical();
        spec.horizon = 4;
        let m = SystemModel::new(spec).unwrap();
        assert!(matches!(
            enumerate_policies_oracle(&m, None, 40),
            Err(Error::EnumerationBudgetExceeded { .. })
        ));
    }

    #[test]
    fn zero_nodes_rejected() {
        let m = SystemModel::new(scenarios::tiny()).unwrap();
        assert!(backward_induction(&m, None, &DpOptions::with_nodes(0)).is_err());
    }

    #[test]
    fn value_zero_and_homogeneous() {
        let m = SystemModel::new(scenarios::canonical()).unwrap();
        let a = backward_induction(&m, None, &DpOptions::with_nodes(3)).unwrap();
        let z = InformationState::zeros(*m.state_grid());
        assert_eq!(a.value(&z, 0).unwrap(), 0.0);
        let rho = InformationState::from(m.prior());
        let v = a.value(&rho, 0).unwrap();
        let v3 = a.value(&rho.scaled(3.0), 0).unwrap();
        assert!((v3 - 3.0 * v).abs() < 1e-12 * v3.abs());
    }

    #[test]
    fn open_loop_dominates_optimum_and_matches_forward_average() {
        let m = SystemModel::new(scenarios::tiny()).unwrap();
        let a = backward_induction(&m, None, &DpOptions::with_nodes(3)).unwrap();
        let rho = InformationState::from(m.prior());
        let z = a.value(&rho, 0).unwrap();
        let quad = ObsQuadrature::new(&m, 3).unwrap();
        for u0 in m.controls(0).to_vec() {
            for u1 in m.controls(1).to_vec() {
                let v = open_loop_value(&m, None, &[u0, u1], &rho, 0, 3).unwrap();
                assert!(v >= z - 1e-12);
                // forward oracle: average over the node tree
                let mut fwd = 0.0;
                for (&y1, &p1) in quad.nodes.iter().zip(&quad.weights) {
                    let s1 = filter::info_state_update(&m, &rho, u0, y1).unwrap();
                    for (&y2, &p2) in quad.nodes.iter().zip(&quad.weights) {
                        let s2 = filter::info_state_update(&m, &s1, u1, y2).unwrap();
                        fwd += p1 * p2 * filter::terminal_functional(&m, &s2).unwrap();
                    }
                }
                assert!((v - fwd).abs() < 1e-12 * fwd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn pruning_preserves_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = Grid::new(0.0, 1.0, 6).unwrap();
        let vectors: Vec<Vec<f64>> = (0..300).map(|_| (0..6).map(|_| rng.gen::<f64>()).collect()).collect();
        let pruned = prune(vectors.clone());
        assert!(pruned.len() < vectors.len());
        for _ in 0..1000 {
            let s: Vec<f64> = (0..6).map(|_| rng.gen::<f64>()).collect();
            let a = vectors.iter().map(|v| pairing(&g, &s, v)).fold(f64::INFINITY, f64::min);
            let b = pruned.iter().map(|v| pairing(&g, &s, v)).fold(f64::INFINITY, f64::min);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn prune_keeps_first_duplicate() {
        let v = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![2.0, 3.0], vec![0.5, 5.0]];
        assert_eq!(prune(v), vec![vec![1.0, 2.0], vec![0.5, 5.0]]);
    }

    #[test]
    fn infinite_tolerance_returns_whole_control_set() {
        let m = SystemModel::new(scenarios::canonical()).unwrap();
        let a = backward_induction(&m, None, &DpOptions::with_nodes(3)).unwrap();
        let rho = InformationState::from(m.prior());
        let r = a.response_set(&rho, 0, f64::INFINITY).unwrap();
        assert_eq!(r.indices, vec![0, 1, 2]);
        let r = a.response_set(&rho, 0, 1e-9).unwrap();
        assert!(!r.indices.is_empty());
        assert_eq!(r.indices[0], a.best_action(&rho, 0).unwrap());
    }

    #[test]
    fn explicit_and_factored_values_agree() {
        let m = SystemModel::new(scenarios::canonical()).unwrap();
        let a = backward_induction(&m, None, &DpOptions::with_nodes(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in 0..m.horizon() {
            if a.vectors(k).is_none() {
                continue;
            }
            for _ in 0..50 {
                let s = InformationState::new(*m.state_grid(), (0..33).map(|_| rng.gen::<f64>()).collect()).unwrap();
                let explicit = a.value(&s, k).unwrap();
                let factored = a.q_values(&s, k).unwrap().into_iter().fold(f64::INFINITY, f64::min);
                assert!((explicit - factored).abs() < 1e-12 * explicit.abs().max(1.0));
            }
        }
    }
}
