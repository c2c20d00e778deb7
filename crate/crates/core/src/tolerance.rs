use crate::{Error, Result};

/// Numerical thresholds shared by every decision surface.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    /// Eigenvalue cutoff for positivity, supports and ranks (relative to block norm).
    pub eig: f64,
    /// Allowed operator-norm defect of `Σ a*a − 1`.
    pub unital: f64,
    /// Dykstra constraint residual for a feasible point.
    pub feas: f64,
    /// Dykstra residual above which a stalled run is declared infeasible.
    pub plateau: f64,
    /// Dykstra iteration budget.
    pub max_iter: usize,
    /// Decision tolerance η_dec, scaled by max(‖ω‖, ‖ρ‖, 1).
    pub dec: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { eig: 1e-9, unital: 1e-9, feas: 1e-7, plateau: 1e-5, max_iter: 20_000, dec: 1e-9 }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("eig", self.eig),
            ("unital", self.unital),
            ("feas", self.feas),
            ("plateau", self.plateau),
            ("dec", self.dec),
        ];
        for (name, value) in named {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "tolerance {name} must be positive and finite, got {value}"
                )));
            }
        }
        if self.feas >= self.plateau {
            return Err(Error::InvalidArgument(format!(
                "feasibility tolerance {} must be below the plateau threshold {}",
                self.feas, self.plateau
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}
