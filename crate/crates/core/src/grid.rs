//! Uniform grids on compact intervals, trapezoid quadrature, and the grid
//! functions built on them.
//!
//! Every integral in the crate is a trapezoid sum `Σᵢ wᵢ f(zᵢ)` over a
//! [`Grid`]. Off-node evaluation is piecewise-linear interpolation, so the
//! trapezoid sum is the exact integral of the interpolant. Densities are
//! truncated to their grid and renormalized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::pairwise_sum;

/// Tolerance on `∫ density = 1`.
pub const DENSITY_TOLERANCE: f64 = 1e-9;

/// A uniform grid of `n_points` nodes on `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    lower: f64,
    upper: f64,
    n_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub n_points: usize,
}

impl TryFrom<GridSpec> for Grid {
    type Error = Error;
    fn try_from(s: GridSpec) -> Result<Self> {
        Grid::new(s.lower, s.upper, s.n_points)
    }
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        GridSpec {
            lower: g.lower,
            upper: g.upper,
            n_points: g.n_points,
        }
    }
}

impl Grid {
    pub fn new(lower: f64, upper: f64, n_points: usize) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if lower >= upper {
            return Err(Error::InvalidGrid(format!(
                "lower bound {lower} must be below upper bound {upper}"
            )));
        }
        if n_points < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 nodes, got {n_points}"
            )));
        }
        Ok(Grid {
            lower,
            upper,
            n_points,
        })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Interval length `upper − lower`.
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn spacing(&self) -> f64 {
        self.length() / (self.n_points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.upper
        } else {
            self.lower + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.node(i))
    }

    /// Trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        if i == 0 || i + 1 == self.n_points {
            0.5 * h
        } else {
            h
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.weight(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }

    /// Maps `x` into `[lower, upper)` by periodic extension.
    pub fn wrap(&self, x: f64) -> f64 {
        let w = (x - self.lower).rem_euclid(self.length());
        // rem_euclid may round up to the period itself
        if w >= self.length() {
            self.lower
        } else {
            self.lower + w
        }
    }

    /// Cell index and fractional position of a point already inside the grid.
    fn locate(&self, x: f64) -> (usize, f64) {
        let t = (x - self.lower) / self.spacing();
        let i = (t.floor() as isize).clamp(0, self.n_points as isize - 2) as usize;
        (i, (t - i as f64).clamp(0.0, 1.0))
    }

    /// Linear interpolation of nodal `values` at `x`, with `x` clamped to the grid.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        debug_assert_eq!(values.len(), self.n_points);
        let (i, f) = self.locate(self.clamp(x));
        values[i] + f * (values[i + 1] - values[i])
    }

    /// Linear interpolation that vanishes outside the grid.
    pub fn interpolate_or_zero(&self, values: &[f64], x: f64) -> f64 {
        if self.contains(x) {
            self.interpolate(values, x)
        } else {
            0.0
        }
    }

    /// Index of the node nearest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let t = ((self.clamp(x) - self.lower) / self.spacing()).round();
        (t as usize).min(self.n_points - 1)
    }
}

/// Nodal values of a real function on a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} nodal values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(GridFunction { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        GridFunction::new(grid, grid.nodes().map(f).collect())
    }

    pub fn zeros(grid: Grid) -> Self {
        GridFunction {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn at(&self, x: f64) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Trapezoid-rule integral `Σᵢ wᵢ f(zᵢ)`.
pub fn quadrature(f: &GridFunction) -> Result<f64> {
    if f.values.len() != f.grid.len() {
        return Err(Error::InvalidArgument("length mismatch".into()));
    }
    if f.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(weighted_sum(&f.grid, &f.values))
}

pub(crate) fn weighted_sum(grid: &Grid, values: &[f64]) -> f64 {
    let h = grid.spacing();
    let n = values.len();
    let interior: f64 = values[1..n - 1].iter().sum();
    h * (0.5 * (values[0] + values[n - 1]) + interior)
}

/// Normalizes a nonnegative grid function to unit trapezoid mass.
pub fn normalize(f: &GridFunction) -> Result<GridDensity> {
    if let Some((node, &value)) = f.values.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeDensity { node, value });
    }
    let mass = quadrature(f)?;
    if !(mass > 0.0) {
        return Err(Error::NonNormalizable { mass });
    }
    GridDensity::from_parts(f.grid, f.values.iter().map(|v| v / mass).collect())
}

/// Pointwise maximum and minimum of a density over its nodes.
///
/// Since off-node values are linear interpolants, these are also the extrema
/// over the whole interval.
pub fn density_stats(d: &GridDensity) -> (f64, f64) {
    (d.max(), d.min())
}

/// A nonnegative grid function with unit trapezoid mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridFunction", into = "GridFunction")]
pub struct GridDensity {
    base: GridFunction,
    // cumulative trapezoid mass at each node, cdf[0] = 0
    #[serde(skip)]
    cdf: Vec<f64>,
}

impl TryFrom<GridFunction> for GridDensity {
    type Error = Error;
    fn try_from(f: GridFunction) -> Result<Self> {
        GridDensity::from_parts(f.grid, f.values)
    }
}

impl From<GridDensity> for GridFunction {
    fn from(d: GridDensity) -> Self {
        d.base
    }
}

impl GridDensity {
    /// Validates an already-normalized density.
    pub fn from_parts(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let base = GridFunction::new(grid, values)?;
        if let Some((node, &value)) = base.values.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::NegativeDensity { node, value });
        }
        let h = grid.spacing();
        let mut cdf = Vec::with_capacity(grid.len());
        cdf.push(0.0);
        let mut acc = 0.0;
        for w in base.values.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            cdf.push(acc);
        }
        if (acc - 1.0).abs() > DENSITY_TOLERANCE {
            return Err(Error::NonNormalizable { mass: acc });
        }
        Ok(GridDensity { base, cdf })
    }

    /// Builds a density from an unnormalized shape evaluated at the nodes.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        normalize(&GridFunction::from_fn(grid, f)?)
    }

    pub fn uniform(grid: Grid) -> Self {
        GridDensity::from_fn(grid, |_| 1.0).expect("constant density is normalizable")
    }

    pub fn grid(&self) -> &Grid {
        &self.base.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.base.values
    }

    pub fn as_function(&self) -> &GridFunction {
        &self.base
    }

    /// Interpolated value, with the argument clamped to the grid.
    pub fn at(&self, x: f64) -> f64 {
        self.base.at(x)
    }

    /// Interpolated value, zero outside the grid.
    pub fn at_or_zero(&self, x: f64) -> f64 {
        self.base.grid.interpolate_or_zero(&self.base.values, x)
    }

    /// Interpolated value of the periodic extension over the grid interval.
    pub fn at_wrapped(&self, x: f64) -> f64 {
        self.base.at(self.base.grid.wrap(x))
    }

    pub fn max(&self) -> f64 {
        self.base.max()
    }

    pub fn min(&self) -> f64 {
        self.base.min()
    }

    /// Exact inverse-CDF draw from the piecewise-linear interpolant.
    pub fn quantile(&self, u: f64) -> f64 {
        let grid = &self.base.grid;
        let total = *self.cdf.last().unwrap();
        let target = u.clamp(0.0, 1.0) * total;
        // first cell whose upper cumulative mass reaches the target
        let cell = match self.cdf[1..].iter().position(|&c| c >= target) {
            Some(c) => c,
            None => grid.len() - 2,
        };
        let h = grid.spacing();
        let f0 = self.base.values[cell];
        let f1 = self.base.values[cell + 1];
        let r = (target - self.cdf[cell]).max(0.0);
        let slope = (f1 - f0) / h;
        let disc = (f0 * f0 + 2.0 * slope * r).max(0.0);
        let denom = f0 + disc.sqrt();
        let t = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        (grid.node(cell) + t.clamp(0.0, h)).min(grid.upper())
    }
}

/// An unnormalized nonnegative grid function: the DM's perception of the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformationState {
    base: GridFunction,
}

impl InformationState {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let base = GridFunction::new(grid, values)?;
        if let Some((node, &value)) = base.values.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::NegativeDensity { node, value });
        }
        Ok(InformationState { base })
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| *v >= 0.0 && v.is_finite()));
        InformationState {
            base: GridFunction { grid, values },
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        InformationState {
            base: GridFunction::zeros(grid),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.base.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.base.values
    }

    pub fn as_function(&self) -> &GridFunction {
        &self.base
    }

    /// `‖σ‖₁`.
    pub fn mass(&self) -> f64 {
        weighted_sum(&self.base.grid, &self.base.values)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor >= 0.0, "information states scale by nonnegative factors");
        InformationState {
            base: self.base.scaled(factor),
        }
    }

    /// `α·self + β·other` for nonnegative coefficients.
    pub fn combine(&self, alpha: f64, other: &InformationState, beta: f64) -> Result<Self> {
        if self.grid() != other.grid() {
            return Err(Error::IncompatibleGrids);
        }
        if alpha < 0.0 || beta < 0.0 {
            return Err(Error::InvalidArgument("coefficients must be nonnegative".into()));
        }
        let values = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Ok(InformationState::from_raw(*self.grid(), values))
    }
}

impl From<GridDensity> for InformationState {
    fn from(d: GridDensity) -> Self {
        InformationState { base: d.base }
    }
}

impl From<&GridDensity> for InformationState {
    fn from(d: &GridDensity) -> Self {
        InformationState {
            base: d.base.clone(),
        }
    }
}

/// `d(a, b) = ∫ |a − b|`, the L¹ metric on information states.
pub fn l1_distance(a: &InformationState, b: &InformationState) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::IncompatibleGrids);
    }
    let diff: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .collect();
    Ok(weighted_sum(a.grid(), &diff))
}

/// `⟨σ, α⟩ = Σⱼ wⱼ σ(zⱼ) α(zⱼ)`.
pub fn pairing(grid: &Grid, sigma: &[f64], alpha: &[f64]) -> f64 {
    let n = sigma.len();
    let mut acc = 0.5 * (sigma[0] * alpha[0] + sigma[n - 1] * alpha[n - 1]);
    for j in 1..n - 1 {
        acc += sigma[j] * alpha[j];
    }
    acc * grid.spacing()
}

/// Sum of `values` with the trapezoid weights but pairwise accumulation.
pub fn quadrature_pairwise(grid: &Grid, values: &[f64]) -> f64 {
    let terms: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(i, v)| grid.weight(i) * v)
        .collect();
    pairwise_sum(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Grid {
        Grid::new(0.0, 1.0, 11).unwrap()
    }

    #[test]
    fn grid_rejects_bad_bounds() {
        assert!(Grid::new(1.0, 0.0, 5).is_err());
        assert!(Grid::new(0.0, 1.0, 1).is_err());
        assert!(Grid::new(0.0, f64::NAN, 5).is_err());
    }

    #[test]
    fn weights_sum_to_length() {
        for n in [2, 3, 11, 33, 101] {
            let g = Grid::new(-2.0, 2.0, n).unwrap();
            let s: f64 = g.weights().iter().sum();
            assert!((s - 4.0).abs() < 1e-12);
            assert!(g.weights().iter().all(|w| *w > 0.0));
        }
    }

    #[test]
    fn quadrature_of_constant_and_linear() {
        let g = unit();
        let one = GridFunction::from_fn(g, |_| 1.0).unwrap();
        assert!((quadrature(&one).unwrap() - 1.0).abs() < 1e-15);
        let lin = GridFunction::from_fn(g, |y| y).unwrap();
        assert!((quadrature(&lin).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quadrature_rejects_non_finite() {
        let g = unit();
        let mut f = GridFunction::zeros(g);
        f.values[3] = f64::NAN;
        assert_eq!(quadrature(&f), Err(Error::NonFinite));
        assert_eq!(
            GridFunction::new(g, vec![f64::INFINITY; 11]),
            Err(Error::NonFinite)
        );
    }

    #[test]
    fn l1_distance_identity_and_norm() {
        let g = unit();
        let s = InformationState::new(g, g.nodes().map(|y| 1.0 + y).collect()).unwrap();
        assert_eq!(l1_distance(&s, &s).unwrap(), 0.0);
        let hat = InformationState::from(GridDensity::from_fn(g, |y| 0.5 - (y - 0.5).abs()).unwrap());
        let zero = InformationState::zeros(g);
        assert!((l1_distance(&hat, &zero).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l1_distance_rejects_mismatched_grids() {
        let a = InformationState::zeros(unit());
        let b = InformationState::zeros(Grid::new(0.0, 1.0, 12).unwrap());
        assert_eq!(l1_distance(&a, &b), Err(Error::IncompatibleGrids));
    }

    #[test]
    fn l1_distance_matches_direct_sum() {
        let g = Grid::new(0.0, 1.0, 5).unwrap();
        let a: [f64; 5] = [0.3, 1.2, 0.0, 2.5, 0.7];
        let b = [1.1, 0.2, 0.4, 2.5, 0.1];
        let h = 0.25;
        let w = [h / 2.0, h, h, h, h / 2.0];
        let oracle: f64 = (0..5).map(|i| w[i] * (a[i] - b[i]).abs()).sum();
        let sa = InformationState::new(g, a.to_vec()).unwrap();
        let sb = InformationState::new(g, b.to_vec()).unwrap();
        assert!((l1_distance(&sa, &sb).unwrap() - oracle).abs() < 1e-15);
    }

    #[test]
    fn normalize_constant_and_idempotent() {
        let g = unit();
        let two = GridFunction::from_fn(g, |_| 2.0).unwrap();
        let d = normalize(&two).unwrap();
        assert!(d.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let again = normalize(d.as_function()).unwrap();
        for (a, b) in d.values().iter().zip(again.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_zero_and_negative_mass() {
        let g = unit();
        assert!(matches!(
            normalize(&GridFunction::zeros(g)),
            Err(Error::NonNormalizable { .. })
        ));
        let neg = GridFunction::from_fn(g, |y| y - 0.5).unwrap();
        assert!(matches!(normalize(&neg), Err(Error::NegativeDensity { .. })));
    }

    #[test]
    fn density_stats_of_uniform() {
        let d = GridDensity::uniform(unit());
        assert_eq!(density_stats(&d), (1.0, 1.0));
        let d = GridDensity::uniform(Grid::new(-1.0, 1.0, 21).unwrap());
        let (mx, mn) = density_stats(&d);
        assert!((mx - 0.5).abs() < 1e-15 && (mn - 0.5).abs() < 1e-15);
    }

    #[test]
    fn wrap_is_periodic() {
        let g = Grid::new(0.0, 1.0, 5).unwrap();
        assert!((g.wrap(1.25) - 0.25).abs() < 1e-15);
        assert!((g.wrap(-0.25) - 0.75).abs() < 1e-15);
        assert_eq!(g.wrap(1.0), 0.0);
        assert!(g.wrap(-1e-18) < 1.0);
    }

    #[test]
    fn quantile_inverts_piecewise_linear_cdf() {
        let g = Grid::new(0.0, 1.0, 5).unwrap();
        let d = GridDensity::from_fn(g, |y| 1.0 + 2.0 * y).unwrap();
        // CDF of the interpolant (exactly linear here): (y + y²) / 2
        for &u in &[0.0, 0.1, 0.37, 0.5, 0.99, 1.0] {
            let y = d.quantile(u);
            assert!(((y + y * y) / 2.0 - u).abs() < 1e-12, "u={u} y={y}");
        }
    }

    #[test]
    fn interpolation_or_zero_vanishes_outside() {
        let d = GridDensity::uniform(unit());
        assert_eq!(d.at_or_zero(1.5), 0.0);
        assert_eq!(d.at_or_zero(0.5), 1.0);
        assert_eq!(d.at(1.5), 1.0);
    }
}
