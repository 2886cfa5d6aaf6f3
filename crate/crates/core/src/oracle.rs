//! Independent checks for the solvers: explicit time stepping of the
//! evolution problem, dense elimination on tiny grids, and manufactured
//! solutions for the linear field operator.
//!
//! The time stepper shares the spatial stencils with the elliptic solver but
//! none of its linear algebra, so agreement of the two validates the
//! nonlinear fixed point rather than the discretization.

use std::f64::consts::PI;

use log::info;
use serde::Serialize;

use crate::coupled::{solve_coupled, CoupledOptions, CoupledProblem};
use crate::eigen::discrete_lambda1;
use crate::error::{Error, Result};
use crate::field::{assemble_field_operator, residual_vector, s_rhs, FieldProblem, FieldSolver, RoadState};
use crate::grid::{trace_to_road, FieldFunction, FieldGrid, RoadFunction, RoadMode, Side};
use crate::linsolve::SolveOptions;
use crate::model::{ModelParams, Reaction, ReactionLaw};
use crate::road::road_residual_vector;

/// Largest system the dense reference solver accepts.
pub const DENSE_LIMIT: usize = 400;

/// Gaussian elimination without row exchanges, meant for small symmetric
/// positive definite systems. Returns the solution and the pivots.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = b.len();
    let mut pivots = Vec::with_capacity(n);
    for k in 0..n {
        let piv = a[k][k];
        if !(piv.abs() > 0.0) || !piv.is_finite() {
            return Err(Error::ZeroPivot(k));
        }
        pivots.push(piv);
        for r in k + 1..n {
            let factor = a[r][k] / piv;
            if factor == 0.0 {
                continue;
            }
            for c in k..n {
                a[r][c] -= factor * a[k][c];
            }
            b[r] -= factor * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| a[k][c] * x[c]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    Ok((x, pivots))
}

/// `S(z)` by dense elimination; also returns the pivots.
pub fn dense_reference_solve(prob: &FieldProblem, z: &FieldFunction, roads: &RoadState) -> Result<(FieldFunction, Vec<f64>)> {
    let n = prob.grid.n_unknowns();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge(n));
    }
    prob.check_roads(roads)?;
    let a = assemble_field_operator(prob)?;
    let (x, pivots) = dense_solve(a.to_dense(), s_rhs(prob, z, roads))?;
    Ok((FieldFunction::from_unknowns(&prob.grid, &x), pivots))
}

#[derive(Clone, Copy, Debug)]
pub struct ParabolicOptions {
    /// Defaults to 0.9 times the stability limit.
    pub dt: Option<f64>,
    pub t_end: f64,
    /// Stop once `sup |Δ| / dt` falls below this.
    pub steady_tol: f64,
}

impl Default for ParabolicOptions {
    fn default() -> Self {
        ParabolicOptions {
            dt: None,
            t_end: 1e4,
            steady_tol: 1e-9,
        }
    }
}

/// `min(h1², h2²) / (4 max(D, D'))`.
pub fn diffusive_dt_limit(p: &ModelParams, grid: &FieldGrid) -> f64 {
    grid.h1.powi(2).min(grid.h2.powi(2)) / (4.0 * p.d.max(p.d_road))
}

/// Largest step for which every explicit update is a monotone map of the
/// old state: the diagonal of each row, including the exchange and the
/// reaction Lipschitz bound, times `dt` stays below one.
pub fn monotone_dt_limit(prob: &CoupledProblem) -> f64 {
    let p = &prob.params;
    let g = &prob.grid;
    let field_road_row = 2.0 * p.d / g.h1.powi(2) + 2.0 * p.d / g.h2.powi(2) + 2.0 * p.nu / g.h2 + prob.f.lipschitz();
    let road_row = 2.0 * p.d_road / g.h1.powi(2) + p.mu + prob.g.lipschitz();
    1.0 / field_road_row.max(road_row)
}

#[derive(Clone, Debug)]
pub struct ParabolicResult {
    pub u: RoadFunction,
    pub v: FieldFunction,
    pub steps: usize,
    pub time: f64,
    pub dt: f64,
    pub converged: bool,
    /// Last value of `sup |Δ| / dt`.
    pub rate: f64,
    /// Extremes over every step: `(u_min, u_max, v_min, v_max)`.
    pub extremes: (f64, f64, f64, f64),
}

/// Explicit Euler for `v_t = D Δv + f(v)` with the exchange condition on the
/// road and `u_t = D' u'' + g(u) + ν v(·, 0) - μ u`, until the state is
/// stationary or `t_end` is reached.
pub fn parabolic_relax(
    prob: &CoupledProblem,
    u0: &RoadFunction,
    v0: &FieldFunction,
    opts: &ParabolicOptions,
) -> Result<ParabolicResult> {
    let p = &prob.params;
    let limit = diffusive_dt_limit(p, &prob.grid);
    let dt = match opts.dt {
        Some(dt) if dt > 0.0 && dt <= limit => dt,
        Some(dt) => {
            return Err(Error::InvalidParameter(format!(
                "dt = {dt} exceeds the stability limit {limit}"
            )));
        }
        None => 0.9 * limit.min(monotone_dt_limit(prob)),
    };
    let field = prob.field_problem()?;
    let road = prob.road_problem();
    let grid = prob.grid;
    let blow_up = 10.0 * p.box_cap().max(p.m);
    let mut u = u0.clone();
    let mut v = v0.clone();
    let mut ext = (u.min(), u.max(), v.min(), v.max());
    let mut steps = 0usize;
    let mut time = 0.0;
    let mut rate = f64::INFINITY;
    while time < opts.t_end {
        let roads = RoadState::one(u.clone());
        let rv = residual_vector(&field, &v, &roads)?;
        let ru = road_residual_vector(&road, &u, &trace_to_road(&v, Side::Bottom)?)?;
        let mut change: f64 = 0.0;
        let mut vx = v.to_unknowns();
        for (x, r) in vx.iter_mut().zip(&rv) {
            *x -= dt * r;
            change = change.max((dt * r).abs());
        }
        let ux: Vec<f64> = u.interior().iter().zip(&ru).map(|(x, r)| x - dt * r).collect();
        change = ru.iter().fold(change, |m, r| m.max((dt * r).abs()));
        v = FieldFunction::from_unknowns(&grid, &vx);
        u = RoadFunction::from_interior(&grid, Side::Bottom, &ux);
        steps += 1;
        time += dt;
        let sup = u.max().max(v.max()).max(-u.min()).max(-v.min());
        if !(sup <= blow_up) {
            return Err(Error::BlowUp { step: steps, sup });
        }
        ext = (ext.0.min(u.min()), ext.1.max(u.max()), ext.2.min(v.min()), ext.3.max(v.max()));
        rate = change / dt;
        if rate < opts.steady_tol {
            break;
        }
    }
    info!("parabolic relaxation: {steps} steps, t = {time}, rate {rate:e}");
    Ok(ParabolicResult {
        u,
        v,
        steps,
        time,
        dt,
        converged: rate < opts.steady_tol,
        rate,
        extremes: ext,
    })
}

/// Linear test problem `(-D Δ + λ) v = F` with `D ∂n v + ν v = G` on the
/// road and zero Dirichlet data elsewhere.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ManufacturedCase {
    pub d: f64,
    pub nu: f64,
    pub lambda: f64,
    pub ell: f64,
    pub height: f64,
}

impl Default for ManufacturedCase {
    fn default() -> Self {
        ManufacturedCase {
            d: 0.7,
            nu: 2.0,
            lambda: 0.3,
            ell: 1.0,
            height: 1.5,
        }
    }
}

impl ManufacturedCase {
    fn solver(&self, nx: usize, ny: usize) -> Result<FieldSolver> {
        let p = ModelParams::new(self.d, 1.0, 1.0, self.nu, self.ell, self.height, self.nu)?;
        let f = Reaction::field(ReactionLaw::Zero, &p)?;
        let grid = FieldGrid::new(self.ell, self.height, nx, ny, RoadMode::One)?;
        let prob = FieldProblem::new(p, f, grid)?.with_lambda(self.lambda)?;
        FieldSolver::new(
            prob,
            SolveOptions {
                rel_tol: 1e-12,
                ..SolveOptions::default()
            },
        )
    }

    /// Solves with source `F`, road flux data `G` and Dirichlet values
    /// `boundary`, returning the sup error against `exact` over all nodes.
    fn error(
        &self,
        nx: usize,
        ny: usize,
        exact: &dyn Fn(f64, f64) -> f64,
        source: &dyn Fn(f64, f64) -> f64,
        flux: &dyn Fn(f64) -> f64,
    ) -> Result<f64> {
        let solver = self.solver(nx, ny)?;
        let g = solver.problem().grid;
        let rhs: Vec<f64> = g
            .unknowns()
            .map(|(i, j)| {
                let (x1, x2) = (g.x1(i), g.x2(j));
                let b = source(x1, x2);
                if j == 0 {
                    b + 2.0 * flux(x1) / g.h2
                } else {
                    b
                }
            })
            .collect();
        let y = solver.solve_strong(&rhs, exact)?;
        let mut err: f64 = 0.0;
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                err = err.max((y.at(i, j) - exact(g.x1(i), g.x2(j))).abs());
            }
        }
        Ok(err)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ManufacturedReport {
    pub sizes: Vec<usize>,
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
}

impl ManufacturedReport {
    pub fn min_order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Sup errors for `v* = sin(π(x1+ℓ)/(2ℓ)) sin(π x2 / L)` on `n x n` grids
/// and the observed orders between successive sizes (each twice the last).
pub fn manufactured_convergence(case: &ManufacturedCase, sizes: &[usize]) -> Result<ManufacturedReport> {
    if sizes.len() < 3 || sizes.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(Error::InvalidParameter(
            "need at least three grids, each twice as fine as the last".into(),
        ));
    }
    let (d, nu, lambda, ell, l) = (case.d, case.nu, case.lambda, case.ell, case.height);
    let a = PI / (2.0 * ell);
    let b = PI / l;
    let exact = move |x1: f64, x2: f64| (a * (x1 + ell)).sin() * (b * x2).sin();
    let source = move |x1: f64, x2: f64| (d * (a * a + b * b) + lambda) * exact(x1, x2);
    // outward normal (0, -1): D ∂n v* + ν v* = -D b sin(a(x1+ℓ)) at x2 = 0
    let flux = move |x1: f64| -d * b * (a * (x1 + ell)).sin() + nu * exact(x1, 0.0);
    let errors = sizes
        .iter()
        .map(|&n| case.error(n, n, &exact, &source, &flux))
        .collect::<Result<Vec<f64>>>()?;
    let orders = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok(ManufacturedReport {
        sizes: sizes.to_vec(),
        errors,
        orders,
    })
}

/// Sup error for the bilinear `v* = 0.3 + 0.5 x1 - 0.2 x2 + 0.4 x1 x2` with
/// its own Dirichlet values; the stencils are exact for it.
pub fn bilinear_exactness(case: &ManufacturedCase, n: usize) -> Result<f64> {
    let (d, nu, lambda) = (case.d, case.nu, case.lambda);
    let exact = |x1: f64, x2: f64| 0.3 + 0.5 * x1 - 0.2 * x2 + 0.4 * x1 * x2;
    let source = |x1: f64, x2: f64| lambda * exact(x1, x2);
    let flux = |x1: f64| -d * (-0.2 + 0.4 * x1) + nu * exact(x1, 0.0);
    case.error(n, n, &exact, &source, &flux)
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleCheck {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleSuiteReport {
    pub checks: Vec<OracleCheck>,
}

impl OracleSuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push_le(&mut self, name: &'static str, value: f64, tolerance: f64) {
        self.checks.push(OracleCheck {
            name,
            passed: value <= tolerance,
            value,
            tolerance,
        });
    }

    fn push_ge(&mut self, name: &'static str, value: f64, tolerance: f64) {
        self.checks.push(OracleCheck {
            name,
            passed: value >= tolerance,
            value,
            tolerance,
        });
    }
}

/// Runs every oracle on small problems. Takes a few seconds.
pub fn run_oracle_suite() -> Result<OracleSuiteReport> {
    let mut rep = OracleSuiteReport { checks: Vec::new() };

    let p = ModelParams::new(0.1, 1.0, 1.0, 1.0, 2.0, 2.0, 1.0)?;
    let f = Reaction::field(ReactionLaw::fisher(), &p)?;
    let grid = FieldGrid::new(2.0, 2.0, 6, 6, RoadMode::One)?;
    let field = FieldProblem::new(p, f.clone(), grid)?;
    let z = FieldFunction::from_fn(&grid, |x1, x2| 0.5 + 0.25 * (x1 * x2).sin());
    let roads = RoadState::constant(&grid, 0.8, 0.0);
    let (dense, pivots) = dense_reference_solve(&field, &z, &roads)?;
    let cg = crate::field::apply_s(&field, &z, &roads)?;
    rep.push_le("dense_vs_cg_6x6", dense.sup_distance(&cg), 1e-10);
    rep.push_ge(
        "dense_pivots_positive",
        pivots.iter().copied().fold(f64::INFINITY, f64::min),
        f64::MIN_POSITIVE,
    );

    let case = ManufacturedCase::default();
    let mms = manufactured_convergence(&case, &[16, 32, 64])?;
    rep.push_ge("manufactured_order", mms.min_order(), 1.8);
    rep.push_le("bilinear_exactness", bilinear_exactness(&case, 8)?, 1e-12);

    let errs = [16, 32, 64]
        .iter()
        .map(|&n| Ok((discrete_lambda1(&FieldGrid::new(PI / 2.0, PI, n, n, RoadMode::One)?, 1e-13)? - 2.0).abs()))
        .collect::<Result<Vec<f64>>>()?;
    let order = errs.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min);
    rep.push_ge("eigenvalue_order", order, 1.8);

    let g = Reaction::road(ReactionLaw::fisher(), &p)?;
    let coupled = CoupledProblem::new(p.with_ell(3.0), f, g, 16, 12)?;
    let zero_u = RoadFunction::zeros(&coupled.grid, Side::Bottom);
    let zero_v = FieldFunction::zeros(&coupled.grid);
    let still = parabolic_relax(&coupled, &zero_u, &zero_v, &ParabolicOptions::default())?;
    rep.push_le("parabolic_zero_equilibrium", still.u.max().max(still.v.max()), 0.0);

    let (_, upper) = solve_coupled(&coupled, &CoupledOptions::default())?;
    let start_u = RoadFunction::constant(&coupled.grid, Side::Bottom, p.m);
    let start_v = FieldFunction::from_fn(&coupled.grid, |_, _| p.box_cap());
    let relaxed = parabolic_relax(&coupled, &start_u, &start_v, &ParabolicOptions::default())?;
    let dist = relaxed.u.sup_distance(&upper.u).max(relaxed.v.sup_distance(&upper.v));
    rep.push_le("parabolic_vs_coupled_upper", dist, 1e-6);
    let (u_lo, u_hi, v_lo, v_hi) = relaxed.extremes;
    let box_excess = (-u_lo).max(u_hi - p.m).max(-v_lo).max(v_hi - p.box_cap());
    rep.push_le("parabolic_box", box_excess, 1e-9);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_solve_small_system() {
        let a = vec![vec![4.0, -1.0, 0.0], vec![-1.0, 4.0, -1.0], vec![0.0, -1.0, 4.0]];
        let (x, piv) = dense_solve(a, vec![2.0, 4.0, 10.0]).unwrap();
        for (xi, ei) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((xi - ei).abs() < 1e-14);
        }
        assert!(piv.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn dense_reference_limits() {
        let p = ModelParams::new(0.1, 1.0, 1.0, 1.0, 2.0, 2.0, 1.0).unwrap();
        let f = Reaction::field(ReactionLaw::fisher(), &p).unwrap();
        let big = FieldGrid::new(2.0, 2.0, 24, 24, RoadMode::One).unwrap();
        let prob = FieldProblem::new(p, f.clone(), big).unwrap();
        let roads = RoadState::constant(&big, 0.0, 0.0);
        assert!(matches!(
            dense_reference_solve(&prob, &FieldFunction::zeros(&big), &roads),
            Err(Error::TooLarge(_))
        ));
        let small = FieldGrid::new(2.0, 2.0, 6, 6, RoadMode::One).unwrap();
        let prob = FieldProblem::new(p, f, small).unwrap();
        let roads = RoadState::constant(&small, 0.0, 0.0);
        let (y, piv) = dense_reference_solve(&prob, &FieldFunction::zeros(&small), &roads).unwrap();
        assert_eq!(y.max(), 0.0);
        assert!(piv.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn manufactured_sine_is_second_order() {
        let rep = manufactured_convergence(&ManufacturedCase::default(), &[16, 32, 64]).unwrap();
        assert!(rep.min_order() >= 1.8, "{rep:?}");
        assert!(rep.errors[0] > rep.errors[2]);
        assert!(manufactured_convergence(&ManufacturedCase::default(), &[16, 32]).is_err());
    }

    #[test]
    fn bilinear_profile_is_reproduced() {
        assert!(bilinear_exactness(&ManufacturedCase::default(), 8).unwrap() < 1e-12);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let p = ModelParams::new(0.1, 1.0, 1.0, 1.0, 2.0, 2.0, 1.0).unwrap();
        let f = Reaction::field(ReactionLaw::fisher(), &p).unwrap();
        let g = Reaction::road(ReactionLaw::fisher(), &p).unwrap();
        let prob = CoupledProblem::new(p, f, g, 8, 8).unwrap();
        let opts = ParabolicOptions {
            dt: Some(1.0),
            ..ParabolicOptions::default()
        };
        let u = RoadFunction::zeros(&prob.grid, Side::Bottom);
        let v = FieldFunction::zeros(&prob.grid);
        assert!(parabolic_relax(&prob, &u, &v, &opts).is_err());
    }

    #[test]
    fn large_diffusion_decays() {
        let p = ModelParams::new(10.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let f = Reaction::field(ReactionLaw::fisher(), &p).unwrap();
        let g = Reaction::road(ReactionLaw::fisher(), &p).unwrap();
        let prob = CoupledProblem::new(p, f, g, 8, 8).unwrap();
        let u = RoadFunction::constant(&prob.grid, Side::Bottom, 1.0);
        let v = FieldFunction::from_fn(&prob.grid, |_, _| 1.0);
        let out = parabolic_relax(&prob, &u, &v, &ParabolicOptions::default()).unwrap();
        assert!(out.converged);
        assert!(out.u.max() < 1e-6 && out.v.max() < 1e-6);
        assert!(out.extremes.3 <= 1.0 + 1e-12 && out.extremes.2 >= 0.0);
    }

    #[test]
    fn oracle_suite_passes() {
        let rep = run_oracle_suite().unwrap();
        assert!(rep.passed(), "{rep:#?}");
    }
}
