use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::QuadScheme;

/// Settings shared by estimation, bootstrap and simulation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    /// Strictly increasing quantile levels in (0, 1).
    pub tau_grid: Vec<f64>,
    /// Closed search interval for each treatment coefficient.
    pub a_bounds: Vec<(f64, f64)>,
    /// Lattice points per coordinate for the coarse search.
    pub grid_points: usize,
    /// Absolute tolerance on the refined coefficient.
    pub refine_tol: f64,
    pub quad_scheme: QuadScheme,
    /// Nodes per dimension (tensor rules) or total points (Halton).
    pub quad_nodes: usize,
    pub seed: u64,
    /// Optional box for the first-step coefficients, one interval per covariate.
    pub b_bounds: Option<Vec<(f64, f64)>>,
    pub qr_tol: f64,
    pub qr_max_iter: usize,
}

impl EstimationConfig {
    pub const DEFAULT_GRID_POINTS: usize = 201;
    pub const DEFAULT_REFINE_TOL: f64 = 1e-4;
    pub const DEFAULT_QUAD_NODES: usize = 4;

    pub fn new(tau_grid: Vec<f64>, a_bounds: Vec<(f64, f64)>) -> Self {
        Self {
            tau_grid,
            a_bounds,
            grid_points: Self::DEFAULT_GRID_POINTS,
            refine_tol: Self::DEFAULT_REFINE_TOL,
            quad_scheme: QuadScheme::Auto,
            quad_nodes: Self::DEFAULT_QUAD_NODES,
            seed: 0,
            b_bounds: None,
            qr_tol: 1e-8,
            qr_max_iter: 200,
        }
    }

    /// Scalar-treatment configuration with the simulation search range `[-2, 4]`.
    pub fn simulation(tau_grid: Vec<f64>) -> Self {
        Self::new(tau_grid, vec![(-2.0, 4.0)])
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, dx: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.tau_grid.is_empty() {
            return bad("tau grid is empty".into());
        }
        for w in self.tau_grid.windows(2) {
            if w[1] <= w[0] {
                return bad("tau grid must be strictly increasing".into());
            }
        }
        if self.tau_grid.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return bad("tau grid must lie strictly inside (0, 1)".into());
        }
        if self.a_bounds.len() != dx {
            return bad(format!(
                "{} treatment bounds given for {dx} treatment columns",
                self.a_bounds.len()
            ));
        }
        if self
            .a_bounds
            .iter()
            .any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi))
        {
            return bad("treatment bounds must be finite with lo <= hi".into());
        }
        if self.grid_points < 3 {
            return bad("grid_points must be at least 3".into());
        }
        if !(self.refine_tol > 0.0) {
            return bad("refine_tol must be positive".into());
        }
        if self.quad_nodes == 0 {
            return bad("quad_nodes must be at least 1".into());
        }
        if let Some(b) = &self.b_bounds {
            if b.iter().any(|&(lo, hi)| !(lo <= hi)) {
                return bad("first-step bounds must satisfy lo <= hi".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_rules() {
        let ok = EstimationConfig::simulation(vec![0.25, 0.5, 0.75]);
        assert!(ok.validate(1).is_ok());
        assert!(ok.validate(2).is_err());
        let mut c = ok.clone();
        c.tau_grid = vec![0.5, 0.25];
        assert!(c.validate(1).is_err());
        c.tau_grid = vec![0.0, 0.5];
        assert!(c.validate(1).is_err());
        let mut c = ok.clone();
        c.grid_points = 2;
        assert!(c.validate(1).is_err());
        let mut c = ok.clone();
        c.a_bounds = vec![(1.0, 0.0)];
        assert!(c.validate(1).is_err());
        let mut c = ok;
        c.quad_nodes = 0;
        assert!(c.validate(1).is_err());
    }
}
