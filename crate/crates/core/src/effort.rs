//! Gaslighting efforts: per-stage observation densities substituted for φ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridDensity};
use crate::model::{NoiseFamily, SystemModel};

/// A sequence `φ°_1 … φ°_K` with the design-cost scale `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaslightEffort {
    stages: Vec<GridDensity>,
    design_cost_scale: f64,
    /// Initial information state the DM starts from under gaslighting (ρ°);
    /// `None` means ρ.
    prior: Option<GridDensity>,
}

impl GaslightEffort {
    pub fn new(model: &SystemModel, stages: Vec<GridDensity>, design_cost_scale: f64) -> Result<Self> {
        if stages.len() != model.horizon() {
            return Err(Error::InvalidArgument(format!(
                "effort has {} stages, horizon is {}",
                stages.len(),
                model.horizon()
            )));
        }
        if !(design_cost_scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "design cost scale must be positive, got {design_cost_scale}"
            )));
        }
        for d in &stages {
            if d.grid() != model.obs_grid() {
                return Err(Error::IncompatibleGrids);
            }
            if let Some(node) = d.values().iter().position(|v| *v <= 0.0) {
                return Err(Error::DegenerateEffortDensity { y: d.grid().node(node) });
            }
        }
        Ok(GaslightEffort {
            stages,
            design_cost_scale,
            prior: None,
        })
    }

    /// `(φ, …, φ)`: the no-op effort.
    pub fn nominal(model: &SystemModel, design_cost_scale: f64) -> Result<Self> {
        GaslightEffort::new(
            model,
            vec![model.obs_noise().clone(); model.horizon()],
            design_cost_scale,
        )
    }

    pub fn with_prior(mut self, model: &SystemModel, prior: GridDensity) -> Result<Self> {
        if prior.grid() != model.state_grid() {
            return Err(Error::IncompatibleGrids);
        }
        self.prior = Some(prior);
        Ok(self)
    }

    /// `φ°_k` for `1 ≤ k ≤ K`.
    pub fn stage(&self, k: usize) -> &GridDensity {
        &self.stages[k - 1]
    }

    pub fn stages(&self) -> &[GridDensity] {
        &self.stages
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn design_cost_scale(&self) -> f64 {
        self.design_cost_scale
    }

    pub fn prior(&self) -> Option<&GridDensity> {
        self.prior.as_ref()
    }

    pub fn is_nominal(&self, model: &SystemModel) -> bool {
        self.prior.is_none() && self.stages.iter().all(|d| d == model.obs_noise())
    }
}

/// Tail-preserving perturbations of φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EffortShape {
    Nominal,
    /// `φ(y)·(1 + slope·r(y))` with `r` rising linearly from −1 to 1 across 𝒴.
    Tilt { slope: f64 },
    /// `φ·(1+ε)` below `split`, scaled down above so the mass stays one.
    Step { split: f64, epsilon: f64 },
    /// `φ(y)·(1 + amplitude·cos²(π(y−center)/(2·width)))` on `|y − center| < width`,
    /// supported strictly inside 𝒴.
    Bump { center: f64, width: f64, amplitude: f64 },
    /// Replacement by another density family.
    Density { family: NoiseFamily },
}

impl EffortShape {
    /// Builds the perturbed density from the nominal φ.
    pub fn build(&self, phi: &GridDensity) -> Result<GridDensity> {
        let grid: Grid = *phi.grid();
        let lo = grid.lower();
        let len = grid.length();
        match *self {
            EffortShape::Nominal => Ok(phi.clone()),
            EffortShape::Tilt { slope } => {
                if !(slope.abs() < 1.0) {
                    return Err(Error::InvalidArgument(format!("tilt slope must lie in (−1, 1), got {slope}")));
                }
                let vals: Vec<f64> = grid
                    .nodes()
                    .zip(phi.values())
                    .map(|(y, p)| p * (1.0 + slope * (2.0 * (y - lo) / len - 1.0)))
                    .collect();
                renormalize(grid, vals)
            }
            EffortShape::Step { split, epsilon } => {
                if !(split > lo && split < grid.upper()) {
                    return Err(Error::InvalidArgument(format!("step split {split} must lie inside the grid")));
                }
                let tol = 1e-12 * len;
                let below: Vec<bool> = grid.nodes().map(|y| y < split - tol).collect();
                let at: Vec<bool> = grid.nodes().map(|y| (y - split).abs() <= tol).collect();
                // masses of φ on each side, by trapezoid with the split node halved
                let mut m_lo = 0.0;
                let mut m_hi = 0.0;
                for (i, p) in phi.values().iter().enumerate() {
                    let w = grid.weight(i) * p;
                    if at[i] {
                        m_lo += 0.5 * w;
                        m_hi += 0.5 * w;
                    } else if below[i] {
                        m_lo += w;
                    } else {
                        m_hi += w;
                    }
                }
                let down = epsilon * m_lo / m_hi;
                if !(epsilon > -1.0) || !(down < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "step epsilon {epsilon} makes the density nonpositive"
                    )));
                }
                let vals: Vec<f64> = phi
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        if at[i] {
                            p * (1.0 + 0.5 * (epsilon - down))
                        } else if below[i] {
                            p * (1.0 + epsilon)
                        } else {
                            p * (1.0 - down)
                        }
                    })
                    .collect();
                renormalize(grid, vals)
            }
            EffortShape::Bump {
                center,
                width,
                amplitude,
            } => {
                if !(width > 0.0) || center - width <= lo || center + width >= grid.upper() {
                    return Err(Error::InvalidArgument(format!(
                        "bump [{}, {}] must lie strictly inside the grid",
                        center - width,
                        center + width
                    )));
                }
                if !(amplitude > -1.0) {
                    return Err(Error::InvalidArgument(format!("bump amplitude must exceed −1, got {amplitude}")));
                }
                let vals: Vec<f64> = grid
                    .nodes()
                    .zip(phi.values())
                    .map(|(y, p)| {
                        let r = (y - center) / width;
                        let bump = if r.abs() < 1.0 {
                            let c = (0.5 * std::f64::consts::PI * r).cos();
                            c * c
                        } else {
                            0.0
                        };
                        p * (1.0 + amplitude * bump)
                    })
                    .collect();
                renormalize(grid, vals)
            }
            EffortShape::Density { family } => {
                let d = family.density(grid)?;
                if d.min() <= 0.0 {
                    return Err(Error::InvalidArgument("replacement density vanishes on the grid".into()));
                }
                Ok(d)
            }
        }
    }
}

fn renormalize(grid: Grid, vals: Vec<f64>) -> Result<GridDensity> {
    let d = crate::grid::normalize(&crate::grid::GridFunction::new(grid, vals)?)?;
    if d.min() <= 0.0 {
        return Err(Error::InvalidArgument("perturbed density vanishes on the grid".into()));
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_uniform() -> GridDensity {
        GridDensity::uniform(Grid::new(0.0, 1.0, 11).unwrap())
    }

    #[test]
    fn step_on_uniform_is_exactly_normalized() {
        let d = EffortShape::Step {
            split: 0.5,
            epsilon: 0.2,
        }
        .build(&unit_uniform())
        .unwrap();
        assert!((d.values()[0] - 1.2).abs() < 1e-12);
        assert!((d.values()[5] - 1.0).abs() < 1e-12);
        assert!((d.values()[10] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn shapes_reject_out_of_range_parameters() {
        let phi = unit_uniform();
        assert!(EffortShape::Tilt { slope: 1.0 }.build(&phi).is_err());
        assert!(EffortShape::Bump {
            center: 0.1,
            width: 0.2,
            amplitude: 0.5
        }
        .build(&phi)
        .is_err());
        assert!(EffortShape::Step {
            split: 0.5,
            epsilon: 1.5
        }
        .build(&phi)
        .is_err());
    }

    #[test]
    fn bump_leaves_tails_proportional() {
        let phi = unit_uniform();
        let d = EffortShape::Bump {
            center: 0.5,
            width: 0.2,
            amplitude: 0.8,
        }
        .build(&phi)
        .unwrap();
        let ratio0 = d.values()[0] / phi.values()[0];
        let ratio10 = d.values()[10] / phi.values()[10];
        assert!((ratio0 - ratio10).abs() < 1e-12);
        assert!(d.values()[5] > d.values()[0]);
    }

    #[test]
    fn nominal_shape_is_identity() {
        let phi = unit_uniform();
        assert_eq!(EffortShape::Nominal.build(&phi).unwrap(), phi);
    }
}
