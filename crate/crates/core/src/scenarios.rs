//! Built-in model presets.

use crate::grid::Grid;
use crate::model::{
    Dynamics, ModelSpec, NoiseFamily, ObservationMap, ProcessNoise, RunningCost, TerminalCost,
};

fn grid(lower: f64, upper: f64, n: usize) -> Grid {
    Grid::new(lower, upper, n).expect("preset grids are valid")
}

/// State grid [−2, 2] with 33 nodes, 𝒴 = [0, 1] with 33 nodes, K = 3, three
/// controls, μ = 0.2. The process noise never leaves the state grid.
pub fn canonical() -> ModelSpec {
    ModelSpec {
        state_grid: grid(-2.0, 2.0, 33),
        obs_grid: grid(0.0, 1.0, 33),
        horizon: 3,
        controls: vec![vec![-0.5, 0.0, 0.5]],
        dynamics: Dynamics::Linear { a: 0.5, b: 1.0 },
        observation: ObservationMap::Affine {
            slope: 0.25,
            offset: 0.0,
        },
        running_cost: RunningCost::Quadratic {
            state_weight: 0.1,
            control_weight: 0.5,
        },
        terminal_cost: TerminalCost::Quadratic {
            weight: 0.5,
            center: 0.0,
        },
        gaslighter_cost: TerminalCost::TargetWell {
            center: -1.0,
            depth: 2.0,
            width: 0.5,
        },
        process_noise: ProcessNoise {
            half_width: 0.5,
            n_points: 17,
            family: NoiseFamily::TruncatedNormal { loc: 0.0, scale: 0.2 },
        },
        observation_noise: NoiseFamily::TruncatedNormal { loc: 0.5, scale: 0.35 },
        prior: NoiseFamily::TruncatedNormal { loc: 0.0, scale: 0.5 },
        mu: 0.2,
    }
}

/// The canonical model observed on 𝒴 = [−1, 1] (length 2).
pub fn wide() -> ModelSpec {
    ModelSpec {
        obs_grid: grid(-1.0, 1.0, 33),
        observation_noise: NoiseFamily::TruncatedNormal { loc: 0.0, scale: 0.7 },
        ..canonical()
    }
}

/// Zero running cost and a gaslighter rewarded for driving the state to −1,
/// which the DM only does when it perceives the state as high.
pub fn gaslight_target() -> ModelSpec {
    ModelSpec {
        state_grid: grid(-2.0, 2.0, 25),
        obs_grid: grid(0.0, 1.0, 33),
        horizon: 3,
        controls: vec![vec![-0.5, 0.0, 0.5]],
        dynamics: Dynamics::Linear { a: 0.6, b: 1.0 },
        observation: ObservationMap::Affine {
            slope: 0.3,
            offset: 0.0,
        },
        running_cost: RunningCost::Zero,
        terminal_cost: TerminalCost::Quadratic {
            weight: 0.5,
            center: 0.0,
        },
        gaslighter_cost: TerminalCost::TargetWell {
            center: -1.0,
            depth: 2.0,
            width: 0.6,
        },
        process_noise: ProcessNoise {
            half_width: 0.3,
            n_points: 13,
            family: NoiseFamily::TruncatedNormal { loc: 0.0, scale: 0.15 },
        },
        observation_noise: NoiseFamily::TruncatedNormal { loc: 0.5, scale: 0.25 },
        prior: NoiseFamily::TruncatedNormal { loc: 0.0, scale: 0.5 },
        mu: 0.5,
    }
}

/// Three state nodes, K = 2, two controls: small enough for policy-tree
/// enumeration.
pub fn tiny() -> ModelSpec {
    ModelSpec {
        state_grid: grid(-1.0, 1.0, 3),
        obs_grid: grid(0.0, 1.0, 11),
        horizon: 2,
        controls: vec![vec![-0.5, 0.5]],
        dynamics: Dynamics::Linear { a: 0.5, b: 1.0 },
        observation: ObservationMap::Affine {
            slope: 0.3,
            offset: 0.0,
        },
        running_cost: RunningCost::Quadratic {
            state_weight: 0.1,
            control_weight: 0.2,
        },
        terminal_cost: TerminalCost::Quadratic {
            weight: 0.5,
            center: 0.0,
        },
        gaslighter_cost: TerminalCost::TargetWell {
            center: -1.0,
            depth: 1.0,
            width: 0.5,
        },
        process_noise: ProcessNoise {
            half_width: 1.0,
            n_points: 9,
            family: NoiseFamily::TruncatedNormal { loc: 0.0, scale: 0.6 },
        },
        observation_noise: NoiseFamily::TruncatedNormal { loc: 0.5, scale: 0.3 },
        prior: NoiseFamily::TruncatedNormal { loc: 0.0, scale: 0.8 },
        mu: 0.5,
    }
}

/// Preset lookup by name.
pub fn by_name(name: &str) -> Option<ModelSpec> {
    match name {
        "canonical" => Some(canonical()),
        "wide" => Some(wide()),
        "gaslight_target" => Some(gaslight_target()),
        "tiny" => Some(tiny()),
        _ => None,
    }
}

pub const NAMES: [&str; 4] = ["canonical", "wide", "gaslight_target", "tiny"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SystemModel;

    #[test]
    fn presets_build_without_truncation() {
        for name in NAMES {
            let m = SystemModel::new(by_name(name).unwrap()).unwrap();
            if name != "tiny" {
                assert_eq!(m.clamped_rows(), 0, "{name}");
            }
        }
    }
}
