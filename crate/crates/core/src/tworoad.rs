//! A field between two roads: exchange with `(μ, ν, g)` on the bottom edge
//! and with `(μ', ν', h)` on the top edge.
//!
//! The outer iteration runs on the pair `(u, w)` in `[0, m] x [0, m']`, with
//! `m' = (ν'/μ')(μ/ν) m` so that both roads share the field cap
//! `k = (μ/ν) m = (μ'/ν') m'`.

use log::{debug, warn};
use serde::Serialize;

use crate::coupled::{Bracket, CoupledOptions, OuterRecord, OuterReport, NONTRIVIAL_V_TOL};
use crate::eigen::{default_probes, kpp_condition, phi1_exact};
use crate::error::{Error, Result};
use crate::field::{field_residual, FieldProblem, FieldSolver, RoadState, TopExchange};
use crate::grid::{trace_to_road, FieldFunction, FieldGrid, RoadFunction, RoadMode, Side};
use crate::model::{
    check_lipschitz, check_road_reaction, validate_params, ModelParams, Reaction, ReactionLaw, ReactionRole, ValidationReport,
    ASSUMPTION_TOL,
};
use crate::monotone::{iterate_from, Direction, IterationOptions};
use crate::road::{apply_t_road, road_residual, RoadProblem};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TwoRoadParams {
    pub base: ModelParams,
    /// Diffusivity on the top road.
    #[serde(rename = "Dsecond")]
    pub d_top: f64,
    pub mu_p: f64,
    pub nu_p: f64,
    /// Top road cap `(ν'/μ')(μ/ν) m`.
    pub m_p: f64,
}

impl TwoRoadParams {
    pub fn new(base: ModelParams, d_top: f64, mu_p: f64, nu_p: f64) -> Result<Self> {
        for (name, v) in [("Dsecond", d_top), ("mu_p", mu_p), ("nu_p", nu_p)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        let m_p = nu_p / mu_p * base.box_cap();
        Ok(TwoRoadParams {
            base,
            d_top,
            mu_p,
            nu_p,
            m_p,
        })
    }

    pub fn top_exchange(&self) -> TopExchange {
        TopExchange {
            mu: self.mu_p,
            nu: self.nu_p,
        }
    }

    pub fn box_cap(&self) -> f64 {
        self.base.box_cap()
    }
}

/// Checks of the one-road model plus the ordering of the exchange ratios and
/// the top road reaction on `[0, m']`.
pub fn validate_two_road(p: &TwoRoadParams, f: &Reaction, g: &Reaction, h: &Reaction) -> ValidationReport {
    let mut report = validate_params(&p.base, f, g);
    let b = &p.base;
    let margin = p.mu_p / p.nu_p - b.mu / b.nu;
    report.push(
        "exchange_ordering",
        "mu/nu >= mu'/nu'",
        margin <= ASSUMPTION_TOL,
        Some((b.mu / b.nu, margin)),
    );
    let identity = p.mu_p / p.nu_p * p.m_p - p.box_cap();
    report.push(
        "top_cap_identity",
        "(mu'/nu') m' = (mu/nu) m",
        identity.abs() <= ASSUMPTION_TOL * p.box_cap().max(1.0),
        Some((p.m_p, identity)),
    );
    check_road_reaction(&mut report, h, p.m_p, "h_zero", "h_at_cap");
    check_lipschitz(&mut report, h, "h_lipschitz", "h_shift_monotone");
    report
}

#[derive(Clone, Debug)]
pub struct TwoRoadProblem {
    pub params: TwoRoadParams,
    pub f: Reaction,
    pub g: Reaction,
    pub h: Reaction,
    pub grid: FieldGrid,
}

impl TwoRoadProblem {
    /// `f` on `[0, k]`, `g` on `[0, m]` and `h` on `[0, m']`.
    pub fn new(params: TwoRoadParams, f: ReactionLaw, g: ReactionLaw, h: ReactionLaw, nx: usize, ny: usize) -> Result<Self> {
        let b = &params.base;
        let grid = FieldGrid::new(b.ell, b.height, nx, ny, RoadMode::Two)?;
        Ok(TwoRoadProblem {
            f: Reaction::field(f, b)?,
            g: Reaction::road(g, b)?,
            h: Reaction::new(h, ReactionRole::Road, params.m_p)?,
            params,
            grid,
        })
    }

    pub fn field_problem(&self) -> Result<FieldProblem> {
        FieldProblem::two_road(self.params.base, self.f.clone(), self.grid, self.params.top_exchange())
    }

    pub fn bottom_road(&self) -> RoadProblem {
        RoadProblem::new(&self.params.base, self.g.clone(), self.grid)
    }

    pub fn top_road(&self) -> Result<RoadProblem> {
        RoadProblem::top(self.params.d_top, self.params.top_exchange(), self.h.clone(), self.grid)
    }
}

/// `S` for the two-road field with bottom road `u_t` and top road `w_t`.
pub fn apply_s2(prob: &TwoRoadProblem, z: &FieldFunction, u_t: &RoadFunction, w_t: &RoadFunction) -> Result<FieldFunction> {
    crate::field::apply_s(&prob.field_problem()?, z, &RoadState::two(u_t.clone(), w_t.clone()))
}

#[derive(Clone, Debug)]
pub struct TwoRoadSolution {
    pub u: RoadFunction,
    pub v: FieldFunction,
    pub w: RoadFunction,
    pub bracket: Bracket,
    pub report: OuterReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Nontriviality2 {
    pub u_nontrivial: bool,
    pub v_nontrivial: bool,
    pub w_nontrivial: bool,
}

/// Field solver and road problems for the outer loop. Without a top road the
/// loop reduces to the one-road iteration on a field with a Dirichlet top.
pub(crate) struct OuterSystem {
    pub solver: FieldSolver,
    pub bottom: RoadProblem,
    pub top: Option<(RoadProblem, f64)>,
    pub m: f64,
}

fn roads_of(u: &RoadFunction, w: &Option<RoadFunction>) -> RoadState {
    RoadState {
        bottom: u.clone(),
        top: w.clone(),
    }
}

fn ordered_margin(dir: Direction, old: &RoadFunction, new: &RoadFunction) -> f64 {
    match dir {
        Direction::Up => old.min_gap_to(new),
        Direction::Down => new.min_gap_to(old),
    }
}

impl OuterSystem {
    fn field(
        &self,
        roads: &RoadState,
        warm: Option<&FieldFunction>,
        dir: Direction,
        inner: &IterationOptions,
    ) -> Result<(FieldFunction, usize, (f64, f64))> {
        let (start, dir) = match warm {
            Some(v) => (v.clone(), dir),
            None => {
                let k = self.solver.problem().box_cap();
                (FieldFunction::from_fn(&self.solver.problem().grid, |_, _| k), Direction::Down)
            }
        };
        let (v, rep) = iterate_from(&self.solver, roads, start, dir, inner)?;
        Ok((v, rep.sweeps, (rep.lowest, rep.highest)))
    }

    pub(crate) fn run(
        &self,
        bracket: Bracket,
        opts: &CoupledOptions,
    ) -> Result<(RoadFunction, FieldFunction, Option<RoadFunction>, OuterReport)> {
        let grid = self.solver.problem().grid;
        let dir = match bracket {
            Bracket::Lower => Direction::Up,
            Bracket::Upper => Direction::Down,
        };
        let level = |cap: f64| if bracket == Bracket::Lower { 0.0 } else { cap };
        let mut u = RoadFunction::constant(&grid, Side::Bottom, level(self.m));
        let mut w = self
            .top
            .as_ref()
            .map(|(_, m_top)| RoadFunction::constant(&grid, Side::Top, level(*m_top)));
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
            let roads = roads_of(&u, &w);
            let warm = if opts.warm_start { v_prev.as_ref() } else { None };
            let (v, sweeps, v_range) = self.field(&roads, warm, dir, &opts.inner)?;
            let u_next = apply_t_road(&self.bottom, &trace_to_road(&v, Side::Bottom)?, &u)?;
            let w_next = match (&self.top, &w) {
                (Some((top, _)), Some(w)) => Some(apply_t_road(top, &trace_to_road(&v, Side::Top)?, w)?),
                _ => None,
            };
            let mut margin = ordered_margin(dir, &u, &u_next);
            let mut step = u_next.sup_distance(&u);
            if let (Some(a), Some(b)) = (&w, &w_next) {
                margin = margin.min(ordered_margin(dir, a, b));
                step = step.max(b.sup_distance(a));
                report.w_lowest = Some(report.w_lowest.unwrap_or(f64::INFINITY).min(b.min()));
                report.w_highest = Some(report.w_highest.unwrap_or(f64::NEG_INFINITY).max(b.max()));
            }
            report.iterations += 1;
            report.final_step = step;
            report.worst_monotonicity = report.worst_monotonicity.min(margin);
            report.inner_sweeps_total += sweeps;
            report.inner_sweeps_max = report.inner_sweeps_max.max(sweeps);
            report.u_lowest = report.u_lowest.min(u_next.min());
            report.u_highest = report.u_highest.max(u_next.max());
            report.v_lowest = report.v_lowest.min(v_range.0);
            report.v_highest = report.v_highest.max(v_range.1);
            report.history.push(OuterRecord {
                iteration: report.iterations,
                sup_step: step,
                inner_sweeps: sweeps,
            });
            debug!("two-road {bracket:?} outer {}: step {step:e}", report.iterations);
            if margin < -violation_tol {
                return Err(Error::MonotonicityViolation {
                    sweep: report.iterations,
                    violation: -margin,
                    tolerance: violation_tol,
                });
            }
            u = u_next;
            w = w_next;
            v_prev = Some(v);
            if step < opts.outer_tol {
                break;
            }
        }
        let roads = roads_of(&u, &w);
        let warm = if opts.warm_start { v_prev.as_ref() } else { None };
        let (v, sweeps, v_range) = self.field(&roads, warm, dir, &opts.inner)?;
        report.inner_sweeps_total += sweeps;
        report.inner_sweeps_max = report.inner_sweeps_max.max(sweeps);
        report.v_lowest = report.v_lowest.min(v_range.0);
        report.v_highest = report.v_highest.max(v_range.1);
        report.field_residual = field_residual(self.solver.problem(), &v, &roads)?;
        report.road_residual = road_residual(&self.bottom, &u, &trace_to_road(&v, Side::Bottom)?)?;
        if let (Some((top, _)), Some(w)) = (&self.top, &w) {
            report.top_road_residual = Some(road_residual(top, w, &trace_to_road(&v, Side::Top)?)?);
        }
        Ok((u, v, w, report))
    }
}

/// Both outer brackets of the two-road system, started from `(0, 0)` and
/// `(m, m')`.
pub fn solve_two_road(prob: &TwoRoadProblem, opts: &CoupledOptions) -> Result<(TwoRoadSolution, TwoRoadSolution)> {
    validate_two_road(&prob.params, &prob.f, &prob.g, &prob.h).into_result()?;
    if !kpp_condition(&prob.params.base, &prob.f, &default_probes()).passed {
        warn!("KPP condition fails; the brackets may collapse to the trivial state");
    }
    let system = OuterSystem {
        solver: FieldSolver::new(prob.field_problem()?, opts.inner.linear)?,
        bottom: prob.bottom_road(),
        top: Some((prob.top_road()?, prob.params.m_p)),
        m: prob.params.base.m,
    };
    let pack = |bracket: Bracket| -> Result<TwoRoadSolution> {
        let (u, v, w, report) = system.run(bracket, opts)?;
        let w = w.expect("two-road run returns a top road");
        Ok(TwoRoadSolution {
            u,
            v,
            w,
            bracket,
            report,
        })
    };
    let (lower, upper) = if opts.parallel && crate::coupled::thread_budget() > 1 {
        std::thread::scope(|s| {
            let h = s.spawn(|| pack(Bracket::Upper));
            let lower = pack(Bracket::Lower);
            (lower, h.join().expect("upper bracket thread panicked"))
        })
    } else {
        (pack(Bracket::Lower), pack(Bracket::Upper))
    };
    Ok((lower?, upper?))
}

/// Nontriviality of all three components; see
/// [`crate::coupled::nontriviality_check`].
pub fn nontriviality_check2(
    u: &RoadFunction,
    v: &FieldFunction,
    w: &RoadFunction,
    eps_bound: f64,
    sup_tol: f64,
) -> Result<Nontriviality2> {
    let threshold = 100.0 * sup_tol;
    let mut v_nontrivial = v.max() > threshold;
    if eps_bound > 0.0 {
        let phi = phi1_exact(v.grid())?.phi1;
        v_nontrivial &= phi.scaled(eps_bound).min_gap_to(v) >= -NONTRIVIAL_V_TOL;
    }
    Ok(Nontriviality2 {
        u_nontrivial: u.max() > threshold,
        v_nontrivial,
        w_nontrivial: w.max() > threshold,
    })
}
