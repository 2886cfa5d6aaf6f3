//! Finite-difference discretization of the field equation and the linearized
//! solution map `S`.
//!
//! Interior nodes use the five-point stencil for `-D Δ + λ`. On a road row the
//! exchange condition `D ∂v/∂n = μ u - ν v` is imposed through a ghost node,
//! `v[i,-1] = v[i,1] + (2 h2 / D)(μ u[i] - ν v[i,0])`, and the resulting row is
//! scaled by one half. The scaling makes the operator symmetric and matches
//! the weak form with trapezoidal quadrature on the boundary row. The `ν v`
//! term lands on the diagonal, the `μ u` term on the right-hand side.
//!
//! Two forms of each row appear below. The *scaled* form is the one assembled
//! into the symmetric operator. The *strong* form divides road rows by the
//! half weight again and is what residuals and the explicit time stepper use.

use log::warn;

use crate::error::{Error, Result};
use crate::grid::{FieldFunction, FieldGrid, NodeTag, RoadFunction, RoadMode, Side};
use crate::linsolve::{solve_spd_from, SolveOptions, SparseOperator};
use crate::model::{ModelParams, Reaction};

/// Exchange rates on the top road of a two-road field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopExchange {
    pub mu: f64,
    pub nu: f64,
}

/// Everything needed to assemble and apply `S`.
#[derive(Clone, Debug)]
pub struct FieldProblem {
    pub params: ModelParams,
    pub f: Reaction,
    pub grid: FieldGrid,
    /// Shift `λ`; must dominate the Lipschitz bound of `f`.
    pub lambda: f64,
    pub top: Option<TopExchange>,
}

impl FieldProblem {
    /// One-road problem with `λ` set to the Lipschitz bound of `f`.
    pub fn new(params: ModelParams, f: Reaction, grid: FieldGrid) -> Result<Self> {
        if grid.mode != RoadMode::One {
            return Err(Error::GridMismatch("one-road problem needs a one-road grid".into()));
        }
        let lambda = f.lipschitz();
        Ok(FieldProblem {
            params,
            f,
            grid,
            lambda,
            top: None,
        })
    }

    /// Two-road problem; the top row carries the exchange rates `top`.
    pub fn two_road(params: ModelParams, f: Reaction, grid: FieldGrid, top: TopExchange) -> Result<Self> {
        if grid.mode != RoadMode::Two {
            return Err(Error::GridMismatch("two-road problem needs a two-road grid".into()));
        }
        if !(top.mu > 0.0 && top.nu > 0.0) {
            return Err(Error::InvalidParameter("top exchange rates must be positive".into()));
        }
        let lambda = f.lipschitz();
        Ok(FieldProblem {
            params,
            f,
            grid,
            lambda,
            top: Some(top),
        })
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda >= self.f.lipschitz()) {
            return Err(Error::InvalidParameter(format!(
                "shift {lambda} is below the Lipschitz bound {}",
                self.f.lipschitz()
            )));
        }
        self.lambda = lambda;
        Ok(self)
    }

    pub fn box_cap(&self) -> f64 {
        self.params.box_cap()
    }

    /// Half weight on road rows, one elsewhere.
    #[inline]
    fn row_scale(&self, j: usize) -> f64 {
        match self.grid.tag(1, j) {
            NodeTag::Road | NodeTag::TopRoad => 0.5,
            _ => 1.0,
        }
    }

    /// Calls `emit(i2, j2, coef)` for every entry of scaled row `(i, j)` of
    /// `-D Δ_h + shift` with the exchange terms, Dirichlet neighbours included.
    fn row_entries(&self, i: usize, j: usize, shift: f64, mut emit: impl FnMut(usize, usize, f64)) {
        let g = &self.grid;
        let d = self.params.d;
        let cx = d / (g.h1 * g.h1);
        let cy = d / (g.h2 * g.h2);
        match g.tag(i, j) {
            NodeTag::Interior => {
                emit(i, j, 2.0 * cx + 2.0 * cy + shift);
                emit(i - 1, j, -cx);
                emit(i + 1, j, -cx);
                emit(i, j - 1, -cy);
                emit(i, j + 1, -cy);
            }
            NodeTag::Road => {
                emit(i, j, cx + cy + self.params.nu / g.h2 + 0.5 * shift);
                emit(i - 1, j, -0.5 * cx);
                emit(i + 1, j, -0.5 * cx);
                emit(i, j + 1, -cy);
            }
            NodeTag::TopRoad => {
                let nu = self.top.map_or(0.0, |t| t.nu);
                emit(i, j, cx + cy + nu / g.h2 + 0.5 * shift);
                emit(i - 1, j, -0.5 * cx);
                emit(i + 1, j, -0.5 * cx);
                emit(i, j - 1, -cy);
            }
            NodeTag::Dirichlet => unreachable!("Dirichlet nodes carry no equation"),
        }
    }

    pub(crate) fn check_roads(&self, roads: &RoadState) -> Result<()> {
        let nx = self.grid.nx;
        if roads.bottom.values().len() != nx + 1 {
            return Err(Error::GridMismatch("bottom road does not match the field grid".into()));
        }
        match (&self.top, &roads.top) {
            (Some(_), Some(w)) if w.values().len() == nx + 1 => Ok(()),
            (None, None) => Ok(()),
            (Some(_), _) => Err(Error::GridMismatch("two-road problem needs a matching top road".into())),
            (None, Some(_)) => Err(Error::GridMismatch("one-road problem was given a top road".into())),
        }
    }

    /// Exchange source `μ u` (or `μ' w`) entering scaled row `(i, j)`.
    #[inline]
    fn exchange_source(&self, i: usize, j: usize, roads: &RoadState) -> f64 {
        let h2 = self.grid.h2;
        match self.grid.tag(i, j) {
            NodeTag::Road => self.params.mu / h2 * roads.bottom.at(i),
            NodeTag::TopRoad => match (&self.top, &roads.top) {
                (Some(t), Some(w)) => t.mu / h2 * w.at(i),
                _ => 0.0,
            },
            _ => 0.0,
        }
    }
}

/// Road densities that feed the field: the bottom road and, in two-road mode,
/// the top road.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadState {
    pub bottom: RoadFunction,
    pub top: Option<RoadFunction>,
}

impl RoadState {
    pub fn one(u: RoadFunction) -> Self {
        RoadState { bottom: u, top: None }
    }

    pub fn two(u: RoadFunction, w: RoadFunction) -> Self {
        RoadState { bottom: u, top: Some(w) }
    }

    /// Constant roads `c` (and `c_top` on the top road if the grid has one).
    pub fn constant(grid: &FieldGrid, c: f64, c_top: f64) -> Self {
        let bottom = RoadFunction::constant(grid, Side::Bottom, c);
        let top = (grid.mode == RoadMode::Two).then(|| RoadFunction::constant(grid, Side::Top, c_top));
        RoadState { bottom, top }
    }
}

fn assemble(prob: &FieldProblem, shift: f64) -> Result<SparseOperator> {
    let g = &prob.grid;
    let mut rows = Vec::with_capacity(g.n_unknowns());
    for (i, j) in g.unknowns() {
        let mut row = Vec::with_capacity(5);
        prob.row_entries(i, j, shift, |i2, j2, c| {
            if let Some(k) = g.unknown(i2, j2) {
                row.push((k, c));
            }
        });
        rows.push(row);
    }
    let op = SparseOperator::from_rows(rows)?;
    if !op.is_symmetric() {
        return Err(Error::NotMMatrix("assembled field operator is not symmetric".into()));
    }
    op.check_m_matrix().map_err(Error::NotMMatrix)?;
    Ok(op)
}

/// Assembles the scaled operator `-D Δ_h + λ` with exchange rows.
pub fn assemble_field_operator(prob: &FieldProblem) -> Result<SparseOperator> {
    assemble(prob, prob.lambda)
}

/// Scaled right-hand side of `S`: `f(z) + λ z` plus the exchange sources.
pub(crate) fn s_rhs(prob: &FieldProblem, z: &FieldFunction, roads: &RoadState) -> Vec<f64> {
    let lambda = prob.lambda;
    prob.grid
        .unknowns()
        .map(|(i, j)| {
            let zv = z.at(i, j);
            prob.row_scale(j) * (prob.f.eval(zv) + lambda * zv) + prob.exchange_source(i, j, roads)
        })
        .collect()
}

fn warn_out_of_box(prob: &FieldProblem, z: &FieldFunction, roads: &RoadState) {
    const SLACK: f64 = 1e-8;
    let k = prob.box_cap();
    let (lo, hi) = (z.min(), z.max());
    if lo < -SLACK || hi > k + SLACK {
        warn!("field iterate leaves [0, {k}]: range [{lo:e}, {hi:e}]");
    }
    let m = prob.params.m;
    let (lo, hi) = (roads.bottom.min(), roads.bottom.max());
    if lo < -SLACK || hi > m + SLACK {
        warn!("road density leaves [0, {m}]: range [{lo:e}, {hi:e}]");
    }
}

/// Operator and options for repeated applications of `S` on one problem.
#[derive(Clone, Debug)]
pub struct FieldSolver {
    prob: FieldProblem,
    op: SparseOperator,
    linear: SolveOptions,
}

impl FieldSolver {
    pub fn new(prob: FieldProblem, linear: SolveOptions) -> Result<Self> {
        let op = assemble_field_operator(&prob)?;
        Ok(FieldSolver { prob, op, linear })
    }

    pub fn problem(&self) -> &FieldProblem {
        &self.prob
    }

    pub fn operator(&self) -> &SparseOperator {
        &self.op
    }

    pub fn linear_options(&self) -> &SolveOptions {
        &self.linear
    }

    /// `y = S(z)` for the given road densities. `guess` warm-starts the
    /// linear solve.
    pub fn apply_s(&self, z: &FieldFunction, roads: &RoadState, guess: Option<&FieldFunction>) -> Result<FieldFunction> {
        self.prob.check_roads(roads)?;
        warn_out_of_box(&self.prob, z, roads);
        let b = s_rhs(&self.prob, z, roads);
        let mut x = match guess {
            Some(g) => g.to_unknowns(),
            None => z.to_unknowns(),
        };
        solve_spd_from(&self.op, &b, &mut x, &self.linear)?;
        Ok(FieldFunction::from_unknowns(&self.prob.grid, &x))
    }

    /// Solves the linear problem `(-D Δ_h + λ) y = rhs` with the exchange
    /// diagonal, where `strong_rhs` is given per unknown in strong form and
    /// `boundary(x1, x2)` prescribes the Dirichlet values. The returned
    /// function carries the Dirichlet values on its boundary nodes.
    pub fn solve_strong(&self, strong_rhs: &[f64], boundary: &dyn Fn(f64, f64) -> f64) -> Result<FieldFunction> {
        let p = &self.prob;
        let g = &p.grid;
        assert_eq!(strong_rhs.len(), g.n_unknowns());
        let mut b = Vec::with_capacity(strong_rhs.len());
        for (k, (i, j)) in g.unknowns().enumerate() {
            let mut bk = p.row_scale(j) * strong_rhs[k];
            p.row_entries(i, j, p.lambda, |i2, j2, c| {
                if g.unknown(i2, j2).is_none() {
                    bk -= c * boundary(g.x1(i2), g.x2(j2));
                }
            });
            b.push(bk);
        }
        let mut x = vec![0.0; b.len()];
        solve_spd_from(&self.op, &b, &mut x, &self.linear)?;
        let mut y = FieldFunction::from_unknowns(g, &x);
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                if g.unknown(i, j).is_none() {
                    y.set(i, j, boundary(g.x1(i), g.x2(j)));
                }
            }
        }
        Ok(y)
    }
}

/// One-shot `S(z)` for the roads `roads`.
pub fn apply_s(prob: &FieldProblem, z: &FieldFunction, roads: &RoadState) -> Result<FieldFunction> {
    FieldSolver::new(prob.clone(), SolveOptions::default())?.apply_s(z, roads, None)
}

/// Strong-form `(-D Δ_h v + exchange diagonal)` per unknown, without `λ`.
/// Neighbour values are read from `v` as stored, boundary nodes included.
pub fn strong_operator(prob: &FieldProblem, v: &FieldFunction) -> Vec<f64> {
    let g = &prob.grid;
    g.unknowns()
        .map(|(i, j)| {
            let mut acc = 0.0;
            prob.row_entries(i, j, 0.0, |i2, j2, c| acc += c * v.at(i2, j2));
            acc / prob.row_scale(j)
        })
        .collect()
}

/// Strong-form source `f(v) + (2 μ / h2) u` per unknown.
pub fn strong_source(prob: &FieldProblem, v: &FieldFunction, roads: &RoadState) -> Vec<f64> {
    prob.grid
        .unknowns()
        .map(|(i, j)| prob.f.eval(v.at(i, j)) + prob.exchange_source(i, j, roads) / prob.row_scale(j))
        .collect()
}

/// Signed strong-form residual `A v - F(v)` of the semilinear problem. A
/// function is a subsolution where this is `<= 0` and a supersolution where
/// it is `>= 0`.
pub fn residual_vector(prob: &FieldProblem, v: &FieldFunction, roads: &RoadState) -> Result<Vec<f64>> {
    prob.check_roads(roads)?;
    let a = strong_operator(prob, v);
    let s = strong_source(prob, v, roads);
    Ok(a.iter().zip(&s).map(|(x, y)| x - y).collect())
}

/// Sup norm of [`residual_vector`].
pub fn field_residual(prob: &FieldProblem, v: &FieldFunction, roads: &RoadState) -> Result<f64> {
    Ok(residual_vector(prob, v, roads)?.iter().fold(0.0, |m, r| f64::max(m, r.abs())))
}
