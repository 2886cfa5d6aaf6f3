//! Outer fixed-point loop over the road density.
//!
//! `T(u)` takes the maximal field solution `v̄` for road density `u` and
//! returns the road solve fed by its trace. Starting from `u = 0` the
//! iterates increase, from `u = m` they decrease; both limits are fixed
//! points of `T` and are returned as the lower and upper brackets.

use log::{debug, warn};
use serde::Serialize;

use crate::eigen::{default_probes, kpp_condition, phi1_exact};
use crate::error::{Error, Result};
use crate::field::{field_residual, FieldProblem, FieldSolver, RoadState};
use crate::grid::{trace_to_road, FieldFunction, FieldGrid, RoadFunction, RoadMode, Side};
use crate::model::{validate_params, ModelParams, Reaction};
use crate::monotone::{iterate_from, Direction, IterationOptions};
use crate::road::{apply_t_road, road_residual, RoadProblem};

/// Tolerance on `v >= ε φ₁` in the nontriviality check.
pub const NONTRIVIAL_V_TOL: f64 = 1e-8;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "FIELDROAD_THREADS";

/// Worker threads available to independent solves: `FIELDROAD_THREADS` if
/// set to a positive integer, otherwise the machine's parallelism.
pub fn thread_budget() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Field and road data of the one-road system.
#[derive(Clone, Debug)]
pub struct CoupledProblem {
    pub params: ModelParams,
    pub f: Reaction,
    pub g: Reaction,
    pub grid: FieldGrid,
}

impl CoupledProblem {
    pub fn new(params: ModelParams, f: Reaction, g: Reaction, nx: usize, ny: usize) -> Result<Self> {
        let grid = FieldGrid::new(params.ell, params.height, nx, ny, RoadMode::One)?;
        Ok(CoupledProblem { params, f, g, grid })
    }

    pub fn field_problem(&self) -> Result<FieldProblem> {
        FieldProblem::new(self.params, self.f.clone(), self.grid)
    }

    pub fn road_problem(&self) -> RoadProblem {
        RoadProblem::new(&self.params, self.g.clone(), self.grid)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CoupledOptions {
    pub inner: IterationOptions,
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Seed each inner solve with the previous field instead of the box cap.
    pub warm_start: bool,
    /// Run the two brackets on separate threads when the budget allows.
    pub parallel: bool,
}

impl Default for CoupledOptions {
    fn default() -> Self {
        CoupledOptions {
            inner: IterationOptions::default(),
            outer_tol: 1e-8,
            max_outer: 2000,
            warm_start: true,
            parallel: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Bracket {
    /// Started from `u = 0`.
    Lower,
    /// Started from `u = m`.
    Upper,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct OuterRecord {
    pub iteration: usize,
    pub sup_step: f64,
    pub inner_sweeps: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct OuterReport {
    pub iterations: usize,
    pub final_step: f64,
    /// Smallest monotonicity margin of the outer sequence.
    pub worst_monotonicity: f64,
    pub inner_sweeps_total: usize,
    pub inner_sweeps_max: usize,
    /// Range of every outer road iterate.
    pub u_lowest: f64,
    pub u_highest: f64,
    /// Range of every inner field iterate.
    pub v_lowest: f64,
    pub v_highest: f64,
    /// Range of every top road iterate, two-road runs only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_lowest: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_highest: Option<f64>,
    pub field_residual: f64,
    pub road_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_road_residual: Option<f64>,
    #[serde(skip)]
    pub history: Vec<OuterRecord>,
}

#[derive(Clone, Debug)]
pub struct CoupledSolution {
    pub u: RoadFunction,
    pub v: FieldFunction,
    pub bracket: Bracket,
    pub report: OuterReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Nontriviality {
    pub v_nontrivial: bool,
    pub u_nontrivial: bool,
}

/// Reusable pieces of one application of `T`.
struct OuterMap {
    solver: FieldSolver,
    road: RoadProblem,
    inner: IterationOptions,
}

struct OuterStep {
    next: RoadFunction,
    v: FieldFunction,
    sweeps: usize,
    v_range: (f64, f64),
}

impl OuterMap {
    fn new(prob: &CoupledProblem, inner: IterationOptions) -> Result<Self> {
        Ok(OuterMap {
            solver: FieldSolver::new(prob.field_problem()?, inner.linear)?,
            road: prob.road_problem(),
            inner,
        })
    }

    /// Maximal field solution for `u`, either from the box cap or from a
    /// warm start that is ordered with respect to it.
    fn field(&self, u: &RoadFunction, warm: Option<(&FieldFunction, Direction)>) -> Result<(FieldFunction, usize, (f64, f64))> {
        let roads = RoadState::one(u.clone());
        let (start, dir) = match warm {
            Some((v, dir)) => (v.clone(), dir),
            None => {
                let k = self.solver.problem().box_cap();
                (FieldFunction::from_fn(&self.solver.problem().grid, |_, _| k), Direction::Down)
            }
        };
        let (v, rep) = iterate_from(&self.solver, &roads, start, dir, &self.inner)?;
        Ok((v, rep.sweeps, (rep.lowest, rep.highest)))
    }

    fn step(&self, u: &RoadFunction, warm: Option<(&FieldFunction, Direction)>) -> Result<OuterStep> {
        let (v, sweeps, v_range) = self.field(u, warm)?;
        let next = apply_t_road(&self.road, &trace_to_road(&v, Side::Bottom)?, u)?;
        Ok(OuterStep {
            next,
            v,
            sweeps,
            v_range,
        })
    }
}

/// One application of `T`: maximal field for `u`, then the road solve.
pub fn outer_t(prob: &CoupledProblem, u: &RoadFunction, opts: &CoupledOptions) -> Result<RoadFunction> {
    Ok(OuterMap::new(prob, opts.inner)?.step(u, None)?.next)
}

fn run_bracket(prob: &CoupledProblem, bracket: Bracket, opts: &CoupledOptions) -> Result<CoupledSolution> {
    let map = OuterMap::new(prob, opts.inner)?;
    let (mut u, dir) = match bracket {
        Bracket::Lower => (RoadFunction::zeros(&prob.grid, Side::Bottom), Direction::Up),
        Bracket::Upper => (
            RoadFunction::constant(&prob.grid, Side::Bottom, prob.params.m),
            Direction::Down,
        ),
    };
    let mut report = OuterReport {
        worst_monotonicity: f64::INFINITY,
        u_lowest: u.min(),
        u_highest: u.max(),
        v_lowest: f64::INFINITY,
        v_highest: f64::NEG_INFINITY,
        ..OuterReport::default()
    };
    let mut v_prev: Option<FieldFunction> = None;
    let violation_tol = 10.0 * opts.outer_tol;
    loop {
        if report.iterations >= opts.max_outer {
            return Err(Error::NonConvergence {
                what: "outer road iteration",
                limit: opts.max_outer,
                last_step: report.final_step,
            });
        }
        let warm = if opts.warm_start {
            v_prev.as_ref().map(|v| (v, dir))
        } else {
            None
        };
        let s = map.step(&u, warm)?;
        let margin = match dir {
            Direction::Up => u.min_gap_to(&s.next),
            Direction::Down => s.next.min_gap_to(&u),
        };
        let step = s.next.sup_distance(&u);
        report.iterations += 1;
        report.final_step = step;
        report.worst_monotonicity = report.worst_monotonicity.min(margin);
        report.inner_sweeps_total += s.sweeps;
        report.inner_sweeps_max = report.inner_sweeps_max.max(s.sweeps);
        report.u_lowest = report.u_lowest.min(s.next.min());
        report.u_highest = report.u_highest.max(s.next.max());
        report.v_lowest = report.v_lowest.min(s.v_range.0);
        report.v_highest = report.v_highest.max(s.v_range.1);
        report.history.push(OuterRecord {
            iteration: report.iterations,
            sup_step: step,
            inner_sweeps: s.sweeps,
        });
        debug!(
            "{bracket:?} outer {}: step {step:e}, {} inner sweeps",
            report.iterations, s.sweeps
        );
        if margin < -violation_tol {
            return Err(Error::MonotonicityViolation {
                sweep: report.iterations,
                violation: -margin,
                tolerance: violation_tol,
            });
        }
        u = s.next;
        v_prev = Some(s.v);
        if step < opts.outer_tol {
            break;
        }
    }
    // Recompute the field for the final road density so that both equations
    // are evaluated on the same pair.
    let warm = if opts.warm_start {
        v_prev.as_ref().map(|v| (v, dir))
    } else {
        None
    };
    let (v, sweeps, v_range) = map.field(&u, warm)?;
    report.inner_sweeps_total += sweeps;
    report.inner_sweeps_max = report.inner_sweeps_max.max(sweeps);
    report.v_lowest = report.v_lowest.min(v_range.0);
    report.v_highest = report.v_highest.max(v_range.1);
    report.field_residual = field_residual(map.solver.problem(), &v, &RoadState::one(u.clone()))?;
    report.road_residual = road_residual(&map.road, &u, &trace_to_road(&v, Side::Bottom)?)?;
    Ok(CoupledSolution { u, v, bracket, report })
}

/// Both outer brackets. Fails with [`Error::Assumption`] if the parameter
/// checks do not pass.
pub fn solve_coupled(prob: &CoupledProblem, opts: &CoupledOptions) -> Result<(CoupledSolution, CoupledSolution)> {
    validate_params(&prob.params, &prob.f, &prob.g).into_result()?;
    if !(opts.outer_tol > 0.0) || opts.max_outer == 0 {
        return Err(Error::InvalidParameter("outer_tol and max_outer must be positive".into()));
    }
    if !kpp_condition(&prob.params, &prob.f, &default_probes()).passed {
        warn!("KPP condition fails; the brackets may collapse to the trivial state");
    }
    let (lower, upper) = if opts.parallel && thread_budget() > 1 {
        std::thread::scope(|s| {
            let h = s.spawn(|| run_bracket(prob, Bracket::Upper, opts));
            let lower = run_bracket(prob, Bracket::Lower, opts);
            let upper = h.join().expect("upper bracket thread panicked");
            (lower, upper)
        })
    } else {
        (
            run_bracket(prob, Bracket::Lower, opts),
            run_bracket(prob, Bracket::Upper, opts),
        )
    };
    Ok((lower?, upper?))
}

/// `u` is nontrivial when `sup u > 100 sup_tol`. `v` is nontrivial when it
/// lies above `eps_bound φ₁` (up to [`NONTRIVIAL_V_TOL`]) and is not
/// identically small; `eps_bound = 0` skips the eigenfunction bound.
pub fn nontriviality_check(u: &RoadFunction, v: &FieldFunction, eps_bound: f64, sup_tol: f64) -> Result<Nontriviality> {
    let threshold = 100.0 * sup_tol;
    let mut v_nontrivial = v.max() > threshold;
    if eps_bound > 0.0 {
        let phi = phi1_exact(v.grid())?.phi1;
        v_nontrivial &= phi.scaled(eps_bound).min_gap_to(v) >= -NONTRIVIAL_V_TOL;
    }
    Ok(Nontriviality {
        v_nontrivial,
        u_nontrivial: u.max() > threshold,
    })
}
