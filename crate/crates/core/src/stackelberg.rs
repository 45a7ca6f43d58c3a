//! The gaslighter's side of the game: its objective, the value recursion `W`,
//! and exhaustive ε-Stackelberg search over a finite menu of effort
//! sequences against the DM's best responses.
//!
//! The gaslighter's objective for an effort `φ°` is
//! `ℐ(φ°) = E[exp(μΓ(x_K))] − γ + Σ_k H(φ°_k)`, where the first term runs
//! with observations delivered from `φ°` and the DM best-responding to `φ°`,
//! and `γ` is the same expectation with observations drawn from `φ` and the
//! DM best-responding to no effort. Both use the same trial seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{backward_induction, DpOptions};
use crate::effort::{EffortShape, GaslightEffort};
use crate::error::{Error, Result};
use crate::grid::{GridDensity, InformationState};
use crate::model::{self, RolloutStart, RunningCost, SamplingMode, SystemModel};
use crate::policy::ControlPolicy;
use crate::robustness::{compute_constants, RobustnessConstants, ZetaMode};
use crate::stats::{mix_seed, run_trials, trial_rng, trial_seed, Estimate};
use crate::stealth::{certify_effort, design_cost, ess_sufficient_integral, s_bar, EssOptions, StealthReport};

/// A named effort shape in a menu.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MenuEntry {
    pub id: String,
    pub shape: EffortShape,
}

/// Finite set of per-stage observation densities, always containing φ.
#[derive(Debug, Clone)]
pub struct EffortMenu {
    entries: Vec<MenuEntry>,
    densities: Vec<GridDensity>,
}

impl EffortMenu {
    /// Builds every entry; prepends `nominal` unless some entry already
    /// reproduces φ exactly.
    pub fn new(model: &SystemModel, entries: Vec<MenuEntry>) -> Result<Self> {
        let phi = model.obs_noise();
        let mut all = Vec::with_capacity(entries.len() + 1);
        let mut densities = Vec::with_capacity(entries.len() + 1);
        for e in &entries {
            if all.iter().any(|m: &MenuEntry| m.id == e.id) {
                return Err(Error::InvalidArgument(format!("duplicate menu id {:?}", e.id)));
            }
            all.push(e.clone());
            densities.push(e.shape.build(phi)?);
        }
        if !densities.iter().any(|d| d == phi) {
            if all.iter().any(|m| m.id == "nominal") {
                return Err(Error::InvalidArgument("menu id \"nominal\" must be the nominal shape".into()));
            }
            all.insert(
                0,
                MenuEntry {
                    id: "nominal".into(),
                    shape: EffortShape::Nominal,
                },
            );
            densities.insert(0, phi.clone());
        }
        Ok(EffortMenu { entries: all, densities })
    }

    pub fn singleton_nominal(model: &SystemModel) -> Self {
        EffortMenu::new(model, Vec::new()).expect("the nominal menu always builds")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MenuEntry] {
        &self.entries
    }

    pub fn densities(&self) -> &[GridDensity] {
        &self.densities
    }

    /// Effort using menu entry `choice[k]` at stage `k + 1`.
    pub fn effort(&self, model: &SystemModel, choice: &[usize], t: f64) -> Result<GaslightEffort> {
        GaslightEffort::new(model, choice.iter().map(|&i| self.densities[i].clone()).collect(), t)
    }

    /// Every entry repeated over all stages; the family used for constants.
    pub fn stationary_efforts(&self, model: &SystemModel, t: f64) -> Result<Vec<GaslightEffort>> {
        (0..self.len())
            .map(|i| self.effort(model, &vec![i; model.horizon()], t))
            .collect()
    }
}

/// `exp(μΓ(x_K))` along one rollout.
fn gamma_weight(model: &SystemModel, r: &model::Rollout) -> f64 {
    (model.mu() * model.gaslighter_cost(*r.trajectory.states.last().expect("x_K"))).exp()
}

fn terminal_samples(
    model: &SystemModel,
    effort: Option<&GaslightEffort>,
    policy: &ControlPolicy,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mode = if effort.is_some() {
        SamplingMode::Gaslit
    } else {
        SamplingMode::Reference
    };
    run_trials(n_trials, seed, |_, rng| {
        model::rollout(model, policy, effort, mode, rng, None).map(|r| gamma_weight(model, &r))
    })
    .into_iter()
    .collect()
}

/// `ℐ` with its two expectation terms and the design cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaslighterObjective {
    pub value: Estimate,
    pub gaslit_term: Estimate,
    pub gamma: Estimate,
    pub design_cost: f64,
}

fn combine_objective(gaslit: &[f64], gamma: &[f64], design_cost: f64) -> GaslighterObjective {
    let diffs: Vec<f64> = gaslit.iter().zip(gamma).map(|(a, b)| a - b + design_cost).collect();
    GaslighterObjective {
        value: Estimate::from_samples(&diffs),
        gaslit_term: Estimate::from_samples(gaslit),
        gamma: Estimate::from_samples(gamma),
        design_cost,
    }
}

/// Monte Carlo estimate of `ℐ(φ°)`; the standard error comes from the paired
/// per-trial differences.
pub fn gaslighter_objective(
    model: &SystemModel,
    effort: &GaslightEffort,
    dm_policy: &ControlPolicy,
    nominal_policy: &ControlPolicy,
    n_trials: usize,
    seed: u64,
) -> Result<GaslighterObjective> {
    if n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
    }
    let h = crate::stealth::total_design_cost(model, effort)?;
    let gaslit = terminal_samples(model, Some(effort), dm_policy, n_trials, seed)?;
    let gamma = terminal_samples(model, None, nominal_policy, n_trials, seed)?;
    Ok(combine_objective(&gaslit, &gamma, h))
}

/// Tower check of `W_k = H(φ°_{k+1}) + E[W_{k+1}]` at stage `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WStage {
    pub stage: usize,
    /// `W_k` averaged over harvested `(x_k, σ°_k)`.
    pub w: Estimate,
    /// `H(φ°_{k+1})`; zero at `k = K`.
    pub design_cost: f64,
    /// `W_k − H(φ°_{k+1}) − W_{k+1}` paired along each outer path.
    pub tower_gap: Estimate,
    pub holds: bool,
}

/// Nested Monte Carlo estimates of `W` along gaslit-mode paths. `W_k` at a
/// point `(x_k, σ°_k)` is the remaining design cost plus the mean of
/// `exp(μΓ(x_K))` over `n_inner` continuations from that point.
pub fn w_recursion_check(
    model: &SystemModel,
    effort: &GaslightEffort,
    dm_policy: &ControlPolicy,
    n_outer: usize,
    n_inner: usize,
    seed: u64,
) -> Result<Vec<WStage>> {
    if n_outer < 2 || n_inner == 0 {
        return Err(Error::InvalidArgument("need at least 2 outer and 1 inner trials".into()));
    }
    let big_k = model.horizon();
    let h: Vec<f64> = effort
        .stages()
        .iter()
        .map(|d| design_cost(model.obs_noise(), d, effort.design_cost_scale()))
        .collect::<Result<_>>()?;
    let outer_seed = mix_seed(seed, "w-outer");
    let inner_seed = mix_seed(seed, "w-inner");
    // paths[j][k] = Ŵ_k along outer path j
    let paths = run_trials(n_outer, outer_seed, |j, rng| -> Result<Vec<f64>> {
        let r = model::rollout(model, dm_policy, Some(effort), SamplingMode::Gaslit, rng, None)?;
        let mut w = Vec::with_capacity(big_k + 1);
        for k in 0..big_k {
            let remaining: f64 = h[k..].iter().sum();
            let point_seed = trial_seed(trial_seed(inner_seed, j as u64), k as u64);
            let mut acc = Vec::with_capacity(n_inner);
            for i in 0..n_inner {
                let mut irng = trial_rng(point_seed, i as u64);
                let start = RolloutStart {
                    stage: k,
                    state_node: r.state_nodes[k],
                    info_state: r.info_states[k].clone(),
                };
                let cont = model::rollout(model, dm_policy, Some(effort), SamplingMode::Gaslit, &mut irng, Some(start))?;
                acc.push(gamma_weight(model, &cont));
            }
            w.push(remaining + crate::stats::pairwise_sum(&acc) / n_inner as f64);
        }
        w.push(gamma_weight(model, &r));
        Ok(w)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((0..=big_k)
        .map(|k| {
            let w: Vec<f64> = paths.iter().map(|p| p[k]).collect();
            let (hk, gap) = if k < big_k {
                let gaps: Vec<f64> = paths.iter().map(|p| p[k] - h[k] - p[k + 1]).collect();
                (h[k], Estimate::from_samples(&gaps))
            } else {
                (0.0, Estimate::exact(0.0))
            };
            WStage {
                stage: k,
                w: Estimate::from_samples(&w),
                design_cost: hk,
                holds: gap.mean.abs() <= 4.0 * gap.std_error + 1e-12,
                tower_gap: gap,
            }
        })
        .collect())
}

/// Which lower bound on `ℐ` to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem5Form {
    /// `−e_Γ(φ̂^K d₀ + s Σ_{i=1}^{K−1} φ̂^i) + K·t·s̄`.
    Stated,
    /// The same without the `K·t·s̄` term.
    Conservative,
}

/// Lower bound on the gaslighter's cost for zero running cost.
pub fn theorem5_bound(constants: &RobustnessConstants, s: f64, t: f64, horizon: usize, form: Theorem5Form) -> f64 {
    let ph = constants.phi_hat;
    let base = -constants.e_gamma
        * (ph.powi(horizon as i32) * constants.d0 + s * (1..horizon).map(|i| ph.powi(i as i32)).sum::<f64>());
    match form {
        Theorem5Form::Stated => base + horizon as f64 * t * s_bar(s, constants),
        Theorem5Form::Conservative => base,
    }
}

/// Search settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchOptions {
    pub n_trials: usize,
    pub seed: u64,
    pub stealth_filter: bool,
    pub dp: DpOptions,
    pub ess: EssOptions,
    /// Largest `|menu|^K` to enumerate.
    pub candidate_budget: usize,
    /// Harvested points per stage for the pointwise ε check; zero disables it.
    pub coverage_points: usize,
    pub coverage_inner: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            n_trials: 4000,
            seed: 0,
            stealth_filter: true,
            dp: DpOptions::default(),
            ess: EssOptions {
                n_obs_trials: 500,
                harvest_trials: 8,
                ..EssOptions::default()
            },
            candidate_budget: 1000,
            coverage_points: 0,
            coverage_inner: 200,
        }
    }
}

/// One row of the candidate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub index: usize,
    pub ids: Vec<String>,
    pub stealth_pass: bool,
    pub design_cost: f64,
    /// `None` for candidates removed by the stealth filter.
    pub objective: Option<Estimate>,
    /// DM's best-response value at its initial information state.
    pub dm_value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem5Check {
    /// The bound assumes zero running cost.
    pub applicable: bool,
    pub stated: f64,
    pub conservative: f64,
    pub selected_meets_conservative: bool,
    pub selected_meets_stated: bool,
    /// Evaluated candidates below the bound by more than 4 standard errors.
    pub conservative_violations: usize,
    pub stated_violations: usize,
}

/// Pointwise check of the selected effort against alternatives that agree
/// with it on stages `1..=k`, at harvested points `(x_k, σ°_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub checked: usize,
    pub satisfied: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumResult {
    pub chosen_index: usize,
    pub chosen_ids: Vec<String>,
    pub effort: GaslightEffort,
    pub objective: GaslighterObjective,
    pub dm_value: f64,
    /// DM's best-response control at its initial information state.
    pub dm_first_control: f64,
    pub epsilon: Vec<f64>,
    pub epsilon_aggregate: f64,
    /// Evaluated candidates within `epsilon_aggregate` of the best estimate.
    pub epsilon_set: Vec<usize>,
    pub stealth: StealthReport,
    pub constants: RobustnessConstants,
    pub s: f64,
    pub t: f64,
    pub theorem5: Theorem5Check,
    pub table: Vec<CandidateRow>,
    pub coverage: Option<Coverage>,
    #[serde(skip)]
    pub dm_policy: ControlPolicy,
}

impl EquilibriumResult {
    /// Selected estimate ≤ every evaluated estimate + ε + 4·combined SE.
    pub fn table_consistent(&self) -> bool {
        let sel = self.objective.value;
        self.table.iter().filter_map(|r| r.objective).all(|o| {
            sel.mean <= o.mean + self.epsilon_aggregate + 4.0 * sel.std_error.hypot(o.std_error) + 1e-12
        })
    }
}

fn sequences(menu_len: usize, horizon: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..horizon {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..menu_len).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    out
}

struct Evaluated {
    policy: ControlPolicy,
    effort: GaslightEffort,
    objective: GaslighterObjective,
    dm_value: f64,
}

/// Exhaustive search over `menu^K` in lexicographic order.
pub fn search_equilibrium(
    model: &SystemModel,
    menu: &EffortMenu,
    epsilon: &[f64],
    s: f64,
    t: f64,
    options: &SearchOptions,
) -> Result<EquilibriumResult> {
    let big_k = model.horizon();
    let eps: Vec<f64> = match epsilon.len() {
        1 => vec![epsilon[0]; big_k],
        n if n == big_k => epsilon.to_vec(),
        n => {
            return Err(Error::InvalidArgument(format!("epsilon: expected 1 or {big_k} values, got {n}")));
        }
    };
    if eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidArgument("epsilon values must be positive".into()));
    }
    if !(s > 0.0) || !(t > 0.0) {
        return Err(Error::InvalidArgument("s and t must be positive".into()));
    }
    let count = (menu.len() as u128).saturating_pow(big_k as u32);
    if count > options.candidate_budget as u128 {
        return Err(Error::EnumerationBudgetExceeded {
            needed: count,
            cap: options.candidate_budget as u128,
        });
    }
    let family = menu.stationary_efforts(model, t)?;
    let constants = compute_constants(model, &family, ZetaMode::Analytic)?;
    let sb = s_bar(s, &constants);
    let entry_pass: Vec<bool> = menu
        .densities()
        .iter()
        .map(|d| ess_sufficient_integral(model.obs_noise(), d).map(|v| v <= sb))
        .collect::<Result<_>>()?;
    let entry_cost: Vec<f64> = menu
        .densities()
        .iter()
        .map(|d| design_cost(model.obs_noise(), d, t))
        .collect::<Result<_>>()?;

    let nominal_alphas = backward_induction(model, None, &options.dp)?;
    let nominal_policy = ControlPolicy::best_response(nominal_alphas);
    let objective_seed = mix_seed(options.seed, "objective");
    let gamma = terminal_samples(model, None, &nominal_policy, options.n_trials, objective_seed)?;

    let seqs = sequences(menu.len(), big_k);
    let evaluated: Vec<Option<Evaluated>> = seqs
        .par_iter()
        .map(|seq| -> Result<Option<Evaluated>> {
            let pass = seq.iter().all(|&i| entry_pass[i]);
            if options.stealth_filter && !pass {
                return Ok(None);
            }
            let effort = menu.effort(model, seq, t)?;
            let alphas = backward_induction(model, Some(&effort), &options.dp)?;
            let sigma0 = InformationState::from(model.prior());
            let dm_value = alphas.value(&sigma0, 0)?;
            let policy = ControlPolicy::best_response(alphas);
            let gaslit = terminal_samples(model, Some(&effort), &policy, options.n_trials, objective_seed)?;
            let h: f64 = seq.iter().map(|&i| entry_cost[i]).sum();
            Ok(Some(Evaluated {
                policy,
                effort,
                objective: combine_objective(&gaslit, &gamma, h),
                dm_value,
            }))
        })
        .collect::<Result<_>>()?;

    let table: Vec<CandidateRow> = seqs
        .iter()
        .zip(&evaluated)
        .enumerate()
        .map(|(index, (seq, ev))| CandidateRow {
            index,
            ids: seq.iter().map(|&i| menu.entries()[i].id.clone()).collect(),
            stealth_pass: seq.iter().all(|&i| entry_pass[i]),
            design_cost: seq.iter().map(|&i| entry_cost[i]).sum(),
            objective: ev.as_ref().map(|e| e.objective.value),
            dm_value: ev.as_ref().map(|e| e.dm_value),
        })
        .collect();

    let chosen_index = evaluated
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.as_ref().map(|e| (i, e.objective.value.mean)))
        .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
            Some((_, bv)) if bv <= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
        .ok_or(Error::NoStealthyCandidates)?;
    let chosen = evaluated[chosen_index].as_ref().expect("chosen candidate was evaluated");
    let eps_agg = eps.iter().copied().fold(f64::INFINITY, f64::min);
    let best = chosen.objective.value.mean;
    let epsilon_set: Vec<usize> = table
        .iter()
        .filter(|r| r.objective.is_some_and(|o| o.mean <= best + eps_agg))
        .map(|r| r.index)
        .collect();

    let stealth = certify_effort(model, &chosen.effort, s, &constants, &options.ess)?;
    let stated = theorem5_bound(&constants, s, t, big_k, Theorem5Form::Stated);
    let conservative = theorem5_bound(&constants, s, t, big_k, Theorem5Form::Conservative);
    let below = |bound: f64, o: &Estimate| o.mean < bound - 4.0 * o.std_error;
    let evaluated_objs: Vec<Estimate> = table.iter().filter_map(|r| r.objective).collect();
    let theorem5 = Theorem5Check {
        applicable: model.spec().running_cost == RunningCost::Zero,
        stated,
        conservative,
        selected_meets_conservative: !below(conservative, &chosen.objective.value),
        selected_meets_stated: !below(stated, &chosen.objective.value),
        conservative_violations: evaluated_objs.iter().filter(|o| below(conservative, o)).count(),
        stated_violations: evaluated_objs.iter().filter(|o| below(stated, o)).count(),
    };

    let coverage = if options.coverage_points > 0 {
        Some(coverage_check(
            model,
            &seqs,
            &evaluated,
            chosen_index,
            &eps,
            options,
        )?)
    } else {
        None
    };

    let sigma0 = InformationState::from(model.prior());
    Ok(EquilibriumResult {
        chosen_index,
        chosen_ids: table[chosen_index].ids.clone(),
        effort: chosen.effort.clone(),
        objective: chosen.objective,
        dm_value: chosen.dm_value,
        dm_first_control: if big_k > 0 {
            chosen.policy.control(model, &sigma0, 0)?
        } else {
            f64::NAN
        },
        epsilon: eps,
        epsilon_aggregate: eps_agg,
        epsilon_set,
        stealth,
        constants,
        s,
        t,
        theorem5,
        table,
        coverage,
        dm_policy: chosen.policy.clone(),
    })
}

/// Mean of `remaining H + exp(μΓ(x_K))` over continuations from a point.
fn continuation_samples(
    model: &SystemModel,
    ev: &Evaluated,
    start: &RolloutStart,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let remaining: f64 = ev.effort.stages()[start.stage..]
        .iter()
        .map(|d| design_cost(model.obs_noise(), d, ev.effort.design_cost_scale()))
        .sum::<Result<f64>>()?;
    (0..n)
        .map(|i| {
            let mut rng = trial_rng(seed, i as u64);
            let r = model::rollout(
                model,
                &ev.policy,
                Some(&ev.effort),
                SamplingMode::Gaslit,
                &mut rng,
                Some(start.clone()),
            )?;
            Ok(remaining + gamma_weight(model, &r))
        })
        .collect()
}

fn coverage_check(
    model: &SystemModel,
    seqs: &[Vec<usize>],
    evaluated: &[Option<Evaluated>],
    chosen: usize,
    eps: &[f64],
    options: &SearchOptions,
) -> Result<Coverage> {
    let sel = evaluated[chosen].as_ref().expect("chosen was evaluated");
    let big_k = model.horizon();
    let harvest_seed = mix_seed(options.seed, "coverage-harvest");
    let inner_seed = mix_seed(options.seed, "coverage-inner");
    let points = run_trials(options.coverage_points, harvest_seed, |_, rng| {
        model::rollout(model, &sel.policy, Some(&sel.effort), SamplingMode::Gaslit, rng, None)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut tasks = Vec::new();
    for k in 1..big_k {
        for (alt, seq) in seqs.iter().enumerate() {
            if alt != chosen && evaluated[alt].is_some() && seq[..k] == seqs[chosen][..k] {
                for p in 0..points.len() {
                    tasks.push((k, alt, p));
                }
            }
        }
    }
    let results: Vec<bool> = tasks
        .par_iter()
        .map(|&(k, alt, p)| -> Result<bool> {
            let r = &points[p];
            let start = RolloutStart {
                stage: k,
                state_node: r.state_nodes[k],
                info_state: r.info_states[k].clone(),
            };
            let seed = trial_seed(trial_seed(inner_seed, p as u64), k as u64);
            let a = continuation_samples(model, sel, &start, options.coverage_inner, seed)?;
            let b = continuation_samples(
                model,
                evaluated[alt].as_ref().expect("filtered above"),
                &start,
                options.coverage_inner,
                seed,
            )?;
            let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let d = Estimate::from_samples(&diff);
            Ok(d.mean <= eps[k - 1] + 4.0 * d.std_error + 1e-12)
        })
        .collect::<Result<_>>()?;
    let satisfied = results.iter().filter(|b| **b).count();
    Ok(Coverage {
        checked: results.len(),
        satisfied,
        fraction: if results.is_empty() {
            1.0
        } else {
            satisfied as f64 / results.len() as f64
        },
    })
}
