//! Monotone sub/supersolution iteration for the field problem with fixed
//! road densities.
//!
//! The lower chain starts at `0`, the upper chain at the box cap `k`, and both
//! apply `S` until the sup-norm step drops below `sup_tol`. Ordering is
//! monitored every sweep and a violation beyond `10 * sup_tol` aborts, since
//! it can only come from a shift below the Lipschitz bound or a broken
//! operator.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{residual_vector, FieldProblem, FieldSolver, RoadState};
use crate::grid::FieldFunction;
use crate::linsolve::SolveOptions;

#[derive(Clone, Copy, Debug)]
pub struct IterationOptions {
    pub sup_tol: f64,
    pub max_sweeps: usize,
    pub record_history: bool,
    pub linear: SolveOptions,
}

impl Default for IterationOptions {
    fn default() -> Self {
        IterationOptions {
            sup_tol: 1e-10,
            max_sweeps: 10_000,
            record_history: false,
            linear: SolveOptions {
                rel_tol: 1e-13,
                ..SolveOptions::default()
            },
        }
    }
}

impl IterationOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.sup_tol > 0.0) || self.max_sweeps == 0 {
            return Err(Error::InvalidParameter("sup_tol and max_sweeps must be positive".into()));
        }
        Ok(())
    }

    /// Ordering violations up to this size are attributed to round-off.
    pub fn violation_tol(&self) -> f64 {
        10.0 * self.sup_tol
    }
}

/// One row of the per-sweep history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub sup_step: f64,
    /// Smallest ordering margin seen in this sweep; negative means violated.
    pub min_violation: f64,
    pub residual: f64,
}

/// Statistics of one monotone chain.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ChainReport {
    pub sweeps: usize,
    pub final_step: f64,
    /// Smallest monotonicity margin over all sweeps.
    pub worst_violation: f64,
    /// Smallest and largest nodal value over all iterates.
    pub lowest: f64,
    pub highest: f64,
    pub residual: f64,
    #[serde(skip)]
    pub history: Vec<SweepRecord>,
}

/// Result of a two-sided run.
#[derive(Clone, Debug, Serialize)]
pub struct MonotoneReport {
    pub sweeps: usize,
    pub lower: ChainReport,
    pub upper: ChainReport,
    /// Smallest margin of `upper - lower` over all sweeps.
    pub worst_ordering: f64,
    /// `||v_max - v_min||_sup` at convergence.
    pub gap: f64,
    #[serde(skip)]
    pub history: Vec<SweepRecord>,
}

impl MonotoneReport {
    /// Smallest of all monotonicity and ordering margins.
    pub fn worst_violation(&self) -> f64 {
        self.lower
            .worst_violation
            .min(self.upper.worst_violation)
            .min(self.worst_ordering)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

struct Chain {
    dir: Direction,
    current: FieldFunction,
    confirming: bool,
    done: bool,
    report: ChainReport,
}

impl Chain {
    fn new(dir: Direction, start: FieldFunction) -> Self {
        let report = ChainReport {
            worst_violation: f64::INFINITY,
            lowest: start.min(),
            highest: start.max(),
            final_step: f64::INFINITY,
            ..ChainReport::default()
        };
        Chain {
            dir,
            current: start,
            confirming: false,
            done: false,
            report,
        }
    }

    /// One application of `S`; returns the monotonicity margin of the step.
    fn sweep(&mut self, solver: &FieldSolver, roads: &RoadState, opts: &IterationOptions) -> Result<f64> {
        let next = solver.apply_s(&self.current, roads, Some(&self.current))?;
        let margin = match self.dir {
            Direction::Up => self.current.min_gap_to(&next),
            Direction::Down => next.min_gap_to(&self.current),
        };
        let step = next.sup_distance(&self.current);
        let r = &mut self.report;
        r.sweeps += 1;
        r.final_step = step;
        r.worst_violation = r.worst_violation.min(margin);
        r.lowest = r.lowest.min(next.min());
        r.highest = r.highest.max(next.max());
        self.current = next;
        if step < opts.sup_tol {
            self.done = self.confirming;
            self.confirming = true;
        } else {
            self.confirming = false;
        }
        Ok(margin)
    }

    fn finish(mut self, solver: &FieldSolver, roads: &RoadState) -> Result<(FieldFunction, ChainReport)> {
        self.report.residual = sup_abs(&residual_vector(solver.problem(), &self.current, roads)?);
        if self.report.worst_violation == f64::INFINITY {
            self.report.worst_violation = 0.0;
        }
        Ok((self.current, self.report))
    }
}

fn sup_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, r| f64::max(m, r.abs()))
}

fn history_residual(solver: &FieldSolver, v: &FieldFunction, roads: &RoadState, opts: &IterationOptions) -> Result<f64> {
    if opts.record_history {
        Ok(sup_abs(&residual_vector(solver.problem(), v, roads)?))
    } else {
        Ok(f64::NAN)
    }
}

fn check_roads_in_box(prob: &FieldProblem, roads: &RoadState) -> Result<()> {
    const SLACK: f64 = 1e-8;
    let m = prob.params.m;
    if roads.bottom.min() < -SLACK || roads.bottom.max() > m + SLACK {
        return Err(Error::InvalidParameter(format!("road density must lie in [0, {m}]")));
    }
    if let (Some(t), Some(w)) = (&prob.top, &roads.top) {
        // The top cap satisfies (mu'/nu') m' = k.
        let m_top = t.nu / t.mu * prob.box_cap();
        if w.min() < -SLACK || w.max() > m_top * (1.0 + 1e-12) + SLACK {
            return Err(Error::InvalidParameter(format!("top road density must lie in [0, {m_top}]")));
        }
    }
    Ok(())
}

/// Minimal and maximal solutions for the given roads, iterated in lockstep
/// from `0` and from the box cap.
pub fn min_max_solutions(
    prob: &FieldProblem,
    roads: &RoadState,
    opts: &IterationOptions,
) -> Result<(FieldFunction, FieldFunction, MonotoneReport)> {
    let solver = FieldSolver::new(prob.clone(), opts.linear)?;
    min_max_with(&solver, roads, opts)
}

/// [`min_max_solutions`] on a prepared solver.
pub fn min_max_with(
    solver: &FieldSolver,
    roads: &RoadState,
    opts: &IterationOptions,
) -> Result<(FieldFunction, FieldFunction, MonotoneReport)> {
    opts.validate()?;
    let prob = solver.problem();
    check_roads_in_box(prob, roads)?;
    let grid = prob.grid;
    let mut lo = Chain::new(Direction::Up, FieldFunction::zeros(&grid));
    let mut hi = Chain::new(Direction::Down, FieldFunction::from_fn(&grid, |_, _| prob.box_cap()));
    let mut history = Vec::new();
    let mut worst_ordering = f64::INFINITY;
    let mut sweep = 0;
    while !(lo.done && hi.done) {
        sweep += 1;
        if sweep > opts.max_sweeps {
            return Err(Error::NonConvergence {
                what: "monotone field iteration",
                limit: opts.max_sweeps,
                last_step: lo.report.final_step.max(hi.report.final_step),
            });
        }
        let mut margin = f64::INFINITY;
        let mut step: f64 = 0.0;
        for chain in [&mut lo, &mut hi] {
            if !chain.done {
                margin = margin.min(chain.sweep(solver, roads, opts)?);
                step = step.max(chain.report.final_step);
            }
        }
        let ordering = lo.current.min_gap_to(&hi.current);
        worst_ordering = worst_ordering.min(ordering);
        margin = margin.min(ordering);
        if margin < -opts.violation_tol() {
            return Err(Error::MonotonicityViolation {
                sweep,
                violation: -margin,
                tolerance: opts.violation_tol(),
            });
        }
        if opts.record_history {
            let residual =
                history_residual(solver, &hi.current, roads, opts)?.max(history_residual(solver, &lo.current, roads, opts)?);
            history.push(SweepRecord {
                sweep,
                sup_step: step,
                min_violation: margin,
                residual,
            });
        }
    }
    let (v_min, lower) = lo.finish(solver, roads)?;
    let (v_max, upper) = hi.finish(solver, roads)?;
    let gap = v_min.sup_distance(&v_max);
    let report = MonotoneReport {
        sweeps: sweep,
        lower,
        upper,
        worst_ordering,
        gap,
        history,
    };
    Ok((v_min, v_max, report))
}

/// Runs one monotone chain from `start` in direction `dir` without checking
/// that `start` is a sub- or supersolution. Used for warm starts whose
/// ordering is known from the caller's own monotone structure.
pub fn iterate_from(
    solver: &FieldSolver,
    roads: &RoadState,
    start: FieldFunction,
    dir: Direction,
    opts: &IterationOptions,
) -> Result<(FieldFunction, ChainReport)> {
    opts.validate()?;
    check_roads_in_box(solver.problem(), roads)?;
    let mut chain = Chain::new(dir, start);
    while !chain.done {
        let sweep = chain.report.sweeps + 1;
        if sweep > opts.max_sweeps {
            return Err(Error::NonConvergence {
                what: "monotone field iteration",
                limit: opts.max_sweeps,
                last_step: chain.report.final_step,
            });
        }
        let margin = chain.sweep(solver, roads, opts)?;
        if margin < -opts.violation_tol() {
            return Err(Error::MonotonicityViolation {
                sweep,
                violation: -margin,
                tolerance: opts.violation_tol(),
            });
        }
        if opts.record_history {
            let residual = history_residual(solver, &chain.current, roads, opts)?;
            chain.report.history.push(SweepRecord {
                sweep,
                sup_step: chain.report.final_step,
                min_violation: margin,
                residual,
            });
        }
    }
    chain.finish(solver, roads)
}

/// Nondecreasing iteration from a verified subsolution `v_start`.
pub fn max_solution_from(
    prob: &FieldProblem,
    roads: &RoadState,
    v_start: &FieldFunction,
    opts: &IterationOptions,
) -> Result<(FieldFunction, ChainReport)> {
    let (ok, worst) = check_subsolution(prob, v_start, roads, opts)?;
    if !ok {
        return Err(Error::NotSubsolution("starting field", worst));
    }
    let solver = FieldSolver::new(prob.clone(), opts.linear)?;
    iterate_from(&solver, roads, v_start.clone(), Direction::Up, opts)
}

/// Whether `v` satisfies `A v <= F(v)` at every unknown, with the largest
/// signed excess. Passes when the excess is at most `10 * sup_tol`.
pub fn check_subsolution(
    prob: &FieldProblem,
    v: &FieldFunction,
    roads: &RoadState,
    opts: &IterationOptions,
) -> Result<(bool, f64)> {
    let worst = residual_vector(prob, v, roads)?.into_iter().fold(f64::NEG_INFINITY, f64::max);
    Ok((worst <= opts.violation_tol(), worst))
}

/// Mirror image of [`check_subsolution`]: `A v >= F(v)` everywhere, and the
/// largest signed shortfall.
pub fn check_supersolution(
    prob: &FieldProblem,
    v: &FieldFunction,
    roads: &RoadState,
    opts: &IterationOptions,
) -> Result<(bool, f64)> {
    let worst = residual_vector(prob, v, roads)?
        .into_iter()
        .map(|r| -r)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((worst <= opts.violation_tol(), worst))
}

/// Writes `sweep,sup_step,min_violation,residual` rows.
pub fn write_history_csv<W: Write>(records: &[SweepRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "sweep,sup_step,min_violation,residual")?;
    for r in records {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e}",
            r.sweep, r.sup_step, r.min_violation, r.residual
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{FieldGrid, RoadFunction, RoadMode, Side};
    use crate::model::{ModelParams, Reaction, ReactionLaw};
    use proptest::prelude::*;

    fn problem(d: f64, ell: f64, l: f64, nx: usize, ny: usize) -> FieldProblem {
        let p = ModelParams::new(d, 1.0, 1.0, 1.0, ell, l, 1.0).unwrap();
        let f = Reaction::field(ReactionLaw::fisher(), &p).unwrap();
        let g = FieldGrid::new(ell, l, nx, ny, RoadMode::One).unwrap();
        FieldProblem::new(p, f, g).unwrap()
    }

    #[test]
    fn zero_is_subsolution_and_cap_is_supersolution() {
        let prob = problem(0.1, 4.0, 4.0, 16, 16);
        let opts = IterationOptions::default();
        let g = prob.grid;
        let roads = RoadState::constant(&g, 0.7, 0.0);
        let zero = FieldFunction::zeros(&g);
        let cap = FieldFunction::from_fn(&g, |_, _| prob.box_cap());
        let (ok, worst) = check_subsolution(&prob, &zero, &roads, &opts).unwrap();
        assert!(ok && worst <= 0.0);
        assert!(!check_subsolution(&prob, &cap, &roads, &opts).unwrap().0);
        assert!(check_supersolution(&prob, &cap, &roads, &opts).unwrap().0);
        assert!(!check_supersolution(&prob, &zero, &roads, &opts).unwrap().0);
    }

    #[test]
    fn kpp_failure_collapses_both_brackets() {
        let prob = problem(10.0, 1.0, 1.0, 16, 16);
        let roads = RoadState::constant(&prob.grid, 0.0, 0.0);
        let (lo, hi, rep) = min_max_solutions(&prob, &roads, &IterationOptions::default()).unwrap();
        assert_eq!(lo.max(), 0.0);
        assert!(hi.max() < 1e-9, "{}", hi.max());
        assert!(rep.gap < 1e-9);
    }

    #[test]
    fn kpp_regime_separates_brackets_without_road_input() {
        let prob = problem(0.1, 5.0, 5.0, 20, 20);
        let roads = RoadState::constant(&prob.grid, 0.0, 0.0);
        let (lo, hi, _) = min_max_solutions(&prob, &roads, &IterationOptions::default()).unwrap();
        assert_eq!(lo.max(), 0.0);
        assert!(hi.max() > 0.5);
    }

    #[test]
    fn positive_road_gives_unique_solution_and_history() {
        let prob = problem(0.1, 3.0, 3.0, 24, 24);
        let roads = RoadState::constant(&prob.grid, prob.params.m, 0.0);
        let opts = IterationOptions {
            record_history: true,
            ..IterationOptions::default()
        };
        let (lo, hi, rep) = min_max_solutions(&prob, &roads, &opts).unwrap();
        assert!(rep.gap <= 100.0 * opts.sup_tol, "gap {}", rep.gap);
        assert!(lo.min_gap_to(&hi) >= -opts.violation_tol());
        assert!(rep.worst_violation() >= -opts.violation_tol());
        assert!(rep.upper.residual <= 10.0 * opts.sup_tol * (1.0 + prob.lambda + prob.f.lipschitz()));
        assert_eq!(rep.history.len(), rep.sweeps);
        assert!(hi.max() <= prob.box_cap() + 1e-9);
        let mut csv = Vec::new();
        write_history_csv(&rep.history, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("sweep,sup_step,min_violation,residual\n"));
        assert_eq!(text.lines().count(), rep.sweeps + 1);

        // Restarting from the converged maximum is stationary.
        let (again, r) = max_solution_from(&prob, &roads, &hi, &opts).unwrap();
        assert!(r.sweeps <= 2);
        assert!(again.sup_distance(&hi) < 1e-9);
    }

    #[test]
    fn start_from_zero_reproduces_lower_bracket() {
        let prob = problem(0.1, 3.0, 3.0, 12, 12);
        let roads = RoadState::one(RoadFunction::from_fn(&prob.grid, Side::Bottom, |x| {
            0.5 * (1.0 - (x / 3.0).abs())
        }));
        let opts = IterationOptions::default();
        let (lo, _, _) = min_max_solutions(&prob, &roads, &opts).unwrap();
        let (v, _) = max_solution_from(&prob, &roads, &FieldFunction::zeros(&prob.grid), &opts).unwrap();
        assert!(v.sup_distance(&lo) < 1e-9);
    }

    #[test]
    fn non_subsolution_start_is_rejected() {
        let prob = problem(0.1, 3.0, 3.0, 12, 12);
        let roads = RoadState::constant(&prob.grid, 0.0, 0.0);
        let cap = FieldFunction::from_fn(&prob.grid, |_, _| prob.box_cap());
        let err = max_solution_from(&prob, &roads, &cap, &IterationOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NotSubsolution(..)));
    }

    #[test]
    fn sweep_cap_reports_non_convergence() {
        let prob = problem(0.1, 3.0, 3.0, 12, 12);
        let roads = RoadState::constant(&prob.grid, 1.0, 0.0);
        let opts = IterationOptions {
            max_sweeps: 2,
            ..IterationOptions::default()
        };
        let err = min_max_solutions(&prob, &roads, &opts).unwrap_err();
        assert!(err.is_non_convergence());
    }

    #[test]
    fn roads_outside_the_box_are_rejected() {
        let prob = problem(0.1, 3.0, 3.0, 12, 12);
        let roads = RoadState::constant(&prob.grid, 2.0, 0.0);
        assert!(min_max_solutions(&prob, &roads, &IterationOptions::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]

        #[test]
        fn maximal_solution_is_monotone_in_the_road(
            a in prop::collection::vec(0.0f64..1.0, 11),
            b in prop::collection::vec(0.0f64..1.0, 11),
        ) {
            let prob = problem(0.1, 3.0, 2.0, 12, 8);
            let g = prob.grid;
            let w1: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
            let w2: Vec<f64> = a.clone();
            let r1 = RoadState::one(RoadFunction::from_interior(&g, Side::Bottom, &w1));
            let r2 = RoadState::one(RoadFunction::from_interior(&g, Side::Bottom, &w2));
            let opts = IterationOptions::default();
            let (_, v1, _) = min_max_solutions(&prob, &r1, &opts).unwrap();
            let (_, v2, _) = min_max_solutions(&prob, &r2, &opts).unwrap();
            prop_assert!(v1.min_gap_to(&v2) >= -1e-8);
        }
    }
}
