//! The one-dimensional road solve `U = T(u)`:
//! `-D' U'' + (μ + η) U = ν trace + g(u) + η u` on the road, `U = 0` at `±ℓ`.

use crate::error::{Error, Result};
use crate::field::TopExchange;
use crate::grid::{FieldGrid, RoadFunction, Side};
use crate::linsolve::solve_tridiag;
use crate::model::{ModelParams, Reaction};

/// Data of one road solve. The bottom road uses `(D', μ, ν, g)`; a top road
/// carries its own diffusivity, exchange rates and reaction.
#[derive(Clone, Debug)]
pub struct RoadProblem {
    pub diffusivity: f64,
    pub mu: f64,
    pub nu: f64,
    pub g: Reaction,
    pub grid: FieldGrid,
    pub side: Side,
    /// Shift `η`; must dominate the Lipschitz bound of `g`.
    pub eta: f64,
}

impl RoadProblem {
    /// Bottom road with `η` set to the Lipschitz bound of `g`.
    pub fn new(params: &ModelParams, g: Reaction, grid: FieldGrid) -> Self {
        let eta = g.lipschitz();
        RoadProblem {
            diffusivity: params.d_road,
            mu: params.mu,
            nu: params.nu,
            g,
            grid,
            side: Side::Bottom,
            eta,
        }
    }

    /// Top road of a two-road field.
    pub fn top(diffusivity: f64, exchange: TopExchange, h: Reaction, grid: FieldGrid) -> Result<Self> {
        if !(diffusivity > 0.0 && diffusivity.is_finite()) {
            return Err(Error::InvalidParameter("top road diffusivity must be positive".into()));
        }
        grid.road_row(Side::Top)?;
        let eta = h.lipschitz();
        Ok(RoadProblem {
            diffusivity,
            mu: exchange.mu,
            nu: exchange.nu,
            g: h,
            grid,
            side: Side::Top,
            eta,
        })
    }

    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        if !(eta >= self.g.lipschitz()) {
            return Err(Error::InvalidParameter(format!(
                "shift {eta} is below the Lipschitz bound {}",
                self.g.lipschitz()
            )));
        }
        self.eta = eta;
        Ok(self)
    }

    fn check(&self, f: &RoadFunction) -> Result<()> {
        if f.values().len() != self.grid.nx + 1 {
            return Err(Error::GridMismatch("road function does not match the road grid".into()));
        }
        Ok(())
    }
}

/// `U = T(u)` for the field trace `trace` and previous road iterate `u`.
pub fn apply_t_road(prob: &RoadProblem, trace: &RoadFunction, u: &RoadFunction) -> Result<RoadFunction> {
    prob.check(trace)?;
    prob.check(u)?;
    let n = prob.grid.nx - 1;
    let c = prob.diffusivity / (prob.grid.h1 * prob.grid.h1);
    let diag = vec![2.0 * c + prob.mu + prob.eta; n];
    let off = vec![-c; n];
    let b: Vec<f64> = (1..=n)
        .map(|i| {
            let ui = u.at(i);
            prob.nu * trace.at(i) + prob.g.eval(ui) + prob.eta * ui
        })
        .collect();
    let x = solve_tridiag(&off, &diag, &off, &b)?;
    Ok(RoadFunction::from_interior(&prob.grid, prob.side, &x))
}

/// Signed residual `-D' u'' + μ u - g(u) - ν trace` at interior road nodes.
pub fn road_residual_vector(prob: &RoadProblem, u: &RoadFunction, trace: &RoadFunction) -> Result<Vec<f64>> {
    prob.check(trace)?;
    prob.check(u)?;
    let c = prob.diffusivity / (prob.grid.h1 * prob.grid.h1);
    Ok((1..prob.grid.nx)
        .map(|i| {
            let ui = u.at(i);
            c * (2.0 * ui - u.at(i - 1) - u.at(i + 1)) + prob.mu * ui - prob.g.eval(ui) - prob.nu * trace.at(i)
        })
        .collect())
}

/// Sup norm of [`road_residual_vector`].
pub fn road_residual(prob: &RoadProblem, u: &RoadFunction, trace: &RoadFunction) -> Result<f64> {
    Ok(road_residual_vector(prob, u, trace)?
        .iter()
        .fold(0.0, |m, r| f64::max(m, r.abs())))
}
