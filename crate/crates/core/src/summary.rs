//! Machine-readable record of a coupled run.
//!
//! The summary is built only from deterministic quantities (no timings, no
//! thread counts), so identical inputs give byte-identical JSON.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::coupled::{nontriviality_check, Bracket, CoupledOptions, CoupledProblem, CoupledSolution, OuterReport};
use crate::eigen::{choose_epsilon, default_probes, kpp_condition, KppReport};
use crate::error::Result;
use crate::grid::{norms, road_norms, FieldGrid, FieldNorms, RoadMode, RoadNorms};
use crate::model::{validate_params, ModelParams, Reaction, ReactionLaw, ReactionRole, ValidationReport};
use crate::tworoad::{nontriviality_check2, validate_two_road, TwoRoadParams, TwoRoadProblem, TwoRoadSolution};

#[derive(Clone, Debug, Serialize)]
pub struct ReactionSummary {
    pub name: String,
    pub role: ReactionRole,
    pub coefficients: BTreeMap<&'static str, f64>,
    pub interval: (f64, f64),
    pub lipschitz: f64,
}

impl ReactionSummary {
    pub fn of(r: &Reaction) -> Self {
        let coefficients = match r.law() {
            ReactionLaw::Fisher { rate } => BTreeMap::from([("rate", *rate)]),
            ReactionLaw::Logistic { rate, capacity } => BTreeMap::from([("rate", *rate), ("capacity", *capacity)]),
            ReactionLaw::Linear { slope } => BTreeMap::from([("slope", *slope)]),
            ReactionLaw::Zero | ReactionLaw::Custom { .. } => BTreeMap::new(),
        };
        ReactionSummary {
            name: r.name().to_string(),
            role: r.role(),
            coefficients,
            interval: r.working_interval(),
            lipschitz: r.lipschitz(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SolverSettings {
    pub sup_tol: f64,
    pub max_sweeps: usize,
    pub cg_tol: f64,
    pub outer_tol: f64,
    pub max_outer: usize,
}

impl From<&CoupledOptions> for SolverSettings {
    fn from(o: &CoupledOptions) -> Self {
        SolverSettings {
            sup_tol: o.inner.sup_tol,
            max_sweeps: o.inner.max_sweeps,
            cg_tol: o.inner.linear.rel_tol,
            outer_tol: o.outer_tol,
            max_outer: o.max_outer,
        }
    }
}

/// Norms and convergence data of one bracket.
#[derive(Clone, Debug, Serialize)]
pub struct BracketSummary {
    pub bracket: Bracket,
    pub u: RoadNorms,
    pub v: FieldNorms,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<RoadNorms>,
    pub u_nontrivial: bool,
    pub v_nontrivial: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_nontrivial: Option<bool>,
    pub outer: OuterReport,
}

/// Sup distances between the two brackets.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BracketGap {
    pub u: f64,
    pub v: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
}

/// Everything `summary.json` holds. The top-level flags refer to the upper
/// (maximal) bracket.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub mode: RoadMode,
    pub params: ModelParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_road: Option<TwoRoadParams>,
    pub reactions: Vec<ReactionSummary>,
    pub grid: FieldGrid,
    pub solver: SolverSettings,
    pub assumptions: ValidationReport,
    pub kpp: KppReport,
    /// `None` when no admissible `ε` exists.
    pub epsilon: Option<f64>,
    pub u_nontrivial: bool,
    pub v_nontrivial: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_nontrivial: Option<bool>,
    pub bracket_gap: BracketGap,
    pub lower: BracketSummary,
    pub upper: BracketSummary,
}

impl RunSummary {
    pub fn coupled(
        prob: &CoupledProblem,
        opts: &CoupledOptions,
        lower: &CoupledSolution,
        upper: &CoupledSolution,
    ) -> Result<Self> {
        let epsilon = choose_epsilon(&prob.params, &prob.f, &prob.grid).ok();
        let sup_tol = opts.inner.sup_tol;
        let bracket = |s: &CoupledSolution| -> Result<BracketSummary> {
            let nt = nontriviality_check(&s.u, &s.v, epsilon.unwrap_or(0.0), sup_tol)?;
            Ok(BracketSummary {
                bracket: s.bracket,
                u: road_norms(&s.u),
                v: norms(&s.v),
                w: None,
                u_nontrivial: nt.u_nontrivial,
                v_nontrivial: nt.v_nontrivial,
                w_nontrivial: None,
                outer: s.report.clone(),
            })
        };
        let (lo, hi) = (bracket(lower)?, bracket(upper)?);
        Ok(RunSummary {
            mode: RoadMode::One,
            params: prob.params,
            two_road: None,
            reactions: vec![ReactionSummary::of(&prob.f), ReactionSummary::of(&prob.g)],
            grid: prob.grid,
            solver: opts.into(),
            assumptions: validate_params(&prob.params, &prob.f, &prob.g),
            kpp: kpp_condition(&prob.params, &prob.f, &default_probes()),
            epsilon,
            u_nontrivial: hi.u_nontrivial,
            v_nontrivial: hi.v_nontrivial,
            w_nontrivial: None,
            bracket_gap: BracketGap {
                u: lower.u.sup_distance(&upper.u),
                v: lower.v.sup_distance(&upper.v),
                w: None,
            },
            lower: lo,
            upper: hi,
        })
    }

    pub fn two_road(
        prob: &TwoRoadProblem,
        opts: &CoupledOptions,
        lower: &TwoRoadSolution,
        upper: &TwoRoadSolution,
    ) -> Result<Self> {
        let base = &prob.params.base;
        let epsilon = choose_epsilon(base, &prob.f, &prob.grid).ok();
        let sup_tol = opts.inner.sup_tol;
        let bracket = |s: &TwoRoadSolution| -> Result<BracketSummary> {
            let nt = nontriviality_check2(&s.u, &s.v, &s.w, epsilon.unwrap_or(0.0), sup_tol)?;
            Ok(BracketSummary {
                bracket: s.bracket,
                u: road_norms(&s.u),
                v: norms(&s.v),
                w: Some(road_norms(&s.w)),
                u_nontrivial: nt.u_nontrivial,
                v_nontrivial: nt.v_nontrivial,
                w_nontrivial: Some(nt.w_nontrivial),
                outer: s.report.clone(),
            })
        };
        let (lo, hi) = (bracket(lower)?, bracket(upper)?);
        Ok(RunSummary {
            mode: RoadMode::Two,
            params: *base,
            two_road: Some(prob.params),
            reactions: vec![
                ReactionSummary::of(&prob.f),
                ReactionSummary::of(&prob.g),
                ReactionSummary::of(&prob.h),
            ],
            grid: prob.grid,
            solver: opts.into(),
            assumptions: validate_two_road(&prob.params, &prob.f, &prob.g, &prob.h),
            kpp: kpp_condition(base, &prob.f, &default_probes()),
            epsilon,
            u_nontrivial: hi.u_nontrivial,
            v_nontrivial: hi.v_nontrivial,
            w_nontrivial: hi.w_nontrivial,
            bracket_gap: BracketGap {
                u: lower.u.sup_distance(&upper.u),
                v: lower.v.sup_distance(&upper.v),
                w: Some(lower.w.sup_distance(&upper.w)),
            },
            lower: lo,
            upper: hi,
        })
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}
