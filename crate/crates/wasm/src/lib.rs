//! Browser bindings: a coupled solve, the principal mode of the box and a
//! field solve with a fixed road, each returning a nodal field for plotting.
//!
//! The `*_impl` functions hold the logic and are plain Rust so they can be
//! tested natively; the exported wrappers only translate errors.

use wasm_bindgen::prelude::*;

use fieldroad::coupled::{solve_coupled, CoupledOptions, CoupledProblem};
use fieldroad::eigen::{choose_epsilon, discrete_eigenpair, lambda1_closed_form};
use fieldroad::monotone::{min_max_solutions, IterationOptions};
use fieldroad::{FieldFunction, FieldGrid, FieldProblem, ModelParams, Reaction, ReactionLaw, RoadMode, RoadState};

/// Largest grid the page will ask for; keeps a click under a few seconds.
const MAX_CELLS: usize = 128 * 128;

/// A field on the `(nx + 1) x (ny + 1)` nodes, row-major from the road up,
/// with an optional road density and a line of text for the page.
#[wasm_bindgen]
pub struct DemoField {
    nx: usize,
    ny: usize,
    field: Vec<f64>,
    road: Vec<f64>,
    info: String,
}

#[wasm_bindgen]
impl DemoField {
    #[wasm_bindgen(getter)]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[wasm_bindgen(getter)]
    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Nodal values, `(ny + 1)` rows of `(nx + 1)`.
    #[wasm_bindgen(getter)]
    pub fn field(&self) -> Vec<f64> {
        self.field.clone()
    }

    /// Road density at the `nx + 1` road nodes; empty when there is none.
    #[wasm_bindgen(getter)]
    pub fn road(&self) -> Vec<f64> {
        self.road.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn info(&self) -> String {
        self.info.clone()
    }
}

impl DemoField {
    fn new(v: &FieldFunction, road: Vec<f64>, info: String) -> Self {
        let g = v.grid();
        DemoField {
            nx: g.nx,
            ny: g.ny,
            field: v.values().to_vec(),
            road,
            info,
        }
    }

    pub fn field_values(&self) -> &[f64] {
        &self.field
    }

    pub fn road_values(&self) -> &[f64] {
        &self.road
    }

    pub fn summary(&self) -> &str {
        &self.info
    }
}

fn check_size(nx: usize, ny: usize) -> Result<(), String> {
    if nx * ny > MAX_CELLS {
        return Err(format!(
            "grid {nx}x{ny} is too large for the demo (at most {MAX_CELLS} cells)"
        ));
    }
    Ok(())
}

fn fisher_params(d: f64, mu: f64, nu: f64, ell: f64, height: f64) -> Result<ModelParams, String> {
    ModelParams::with_default_cap(d, 1.0, mu, nu, ell, height).map_err(|e| e.to_string())
}

/// Upper bracket of the coupled system with Fisher reactions.
pub fn coupled_impl(d: f64, mu: f64, nu: f64, ell: f64, height: f64, nx: usize, ny: usize) -> Result<DemoField, String> {
    check_size(nx, ny)?;
    let p = fisher_params(d, mu, nu, ell, height)?;
    let err = |e: fieldroad::Error| e.to_string();
    let f = Reaction::field(ReactionLaw::fisher(), &p).map_err(err)?;
    let g = Reaction::road(ReactionLaw::fisher(), &p).map_err(err)?;
    let prob = CoupledProblem::new(p, f, g, nx, ny).map_err(err)?;
    let opts = CoupledOptions {
        parallel: false,
        ..CoupledOptions::default()
    };
    let (lower, upper) = solve_coupled(&prob, &opts).map_err(err)?;
    let eps = choose_epsilon(&prob.params, &prob.f, &prob.grid)
        .map(|e| format!("{e:.4}"))
        .unwrap_or_else(|_| "none".into());
    let info = format!(
        "sup u = {:.4}, sup v = {:.4}, outer iterations {} / {}, bracket gap {:.2e}, epsilon {eps}",
        upper.u.max(),
        upper.v.max(),
        lower.report.iterations,
        upper.report.iterations,
        lower.u.sup_distance(&upper.u).max(lower.v.sup_distance(&upper.v)),
    );
    Ok(DemoField::new(&upper.v, upper.u.values().to_vec(), info))
}

/// Discrete principal Dirichlet eigenfunction of the box, scaled to max 1.
pub fn principal_mode_impl(ell: f64, height: f64, nx: usize, ny: usize) -> Result<DemoField, String> {
    check_size(nx, ny)?;
    let grid = FieldGrid::new(ell, height, nx, ny, RoadMode::One).map_err(|e| e.to_string())?;
    let (lambda, phi) = discrete_eigenpair(&grid, 1e-10).map_err(|e| e.to_string())?;
    let top = phi.max();
    let phi = if top > 0.0 { phi.scaled(1.0 / top) } else { phi };
    let closed = lambda1_closed_form(ell, height);
    let info = format!("discrete lambda1 = {lambda:.6}, closed form {closed:.6}");
    Ok(DemoField::new(&phi, Vec::new(), info))
}

/// Maximal field solution for a constant road density `w`.
pub fn field_only_impl(d: f64, w: f64, ell: f64, height: f64, nx: usize, ny: usize) -> Result<DemoField, String> {
    check_size(nx, ny)?;
    let p = fisher_params(d, 1.0, 1.0, ell, height)?;
    let err = |e: fieldroad::Error| e.to_string();
    let f = Reaction::field(ReactionLaw::fisher(), &p).map_err(err)?;
    let grid = FieldGrid::new(ell, height, nx, ny, RoadMode::One).map_err(err)?;
    let prob = FieldProblem::new(p, f, grid).map_err(err)?;
    let roads = RoadState::constant(&grid, w, 0.0);
    let (_, v_max, rep) = min_max_solutions(&prob, &roads, &IterationOptions::default()).map_err(err)?;
    let info = format!(
        "{} sweeps, sup v = {:.4}, |v_max - v_min| = {:.2e}",
        rep.sweeps,
        v_max.max(),
        rep.gap
    );
    Ok(DemoField::new(&v_max, roads.bottom.values().to_vec(), info))
}

#[wasm_bindgen]
pub fn solve_coupled_fisher(d: f64, mu: f64, nu: f64, ell: f64, height: f64, nx: usize, ny: usize) -> Result<DemoField, JsError> {
    coupled_impl(d, mu, nu, ell, height, nx, ny).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn principal_mode(ell: f64, height: f64, nx: usize, ny: usize) -> Result<DemoField, JsError> {
    principal_mode_impl(ell, height, nx, ny).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn field_with_constant_road(d: f64, w: f64, ell: f64, height: f64, nx: usize, ny: usize) -> Result<DemoField, JsError> {
    field_only_impl(d, w, ell, height, nx, ny).map_err(|e| JsError::new(&e))
}
