//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! of them fails. Run with `cargo test -p fieldroad --test acceptance`.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use fieldroad::coupled::{solve_coupled, CoupledOptions, CoupledProblem, CoupledSolution};
use fieldroad::eigen::{choose_epsilon, discrete_lambda1, lambda1_closed_form, phi1_exact};
use fieldroad::exhaust::{domain_growth_study, GrowthStudyConfig};
use fieldroad::monotone::{min_max_solutions, IterationOptions};
use fieldroad::oracle::{manufactured_convergence, parabolic_relax, ManufacturedCase, ParabolicOptions};
use fieldroad::summary::RunSummary;
use fieldroad::tworoad::{nontriviality_check2, solve_two_road, TwoRoadParams, TwoRoadProblem};
use fieldroad::{
    FieldFunction, FieldGrid, FieldProblem, ModelParams, Reaction, ReactionLaw, Result, RoadFunction, RoadMode, RoadState, Side,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion<'a> = (&'static str, &'static str, Box<dyn Fn() -> Result<Outcome> + 'a>);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn fisher_params(d: f64, ell: f64, l: f64) -> ModelParams {
    ModelParams::new(d, 1.0, 1.0, 1.0, ell, l, 1.0).unwrap()
}

fn fisher_field(p: &ModelParams) -> Reaction {
    Reaction::field(ReactionLaw::fisher(), p).unwrap()
}

fn fisher_coupled(d: f64, ell: f64, l: f64, nx: usize, ny: usize) -> CoupledProblem {
    let p = fisher_params(d, ell, l);
    let g = Reaction::road(ReactionLaw::fisher(), &p).unwrap();
    CoupledProblem::new(p, fisher_field(&p), g, nx, ny).unwrap()
}

/// Shared data: the 128x64 field run with w = m and the 64x32 coupled run.
struct Shared {
    field_prob: FieldProblem,
    field_opts: IterationOptions,
    v_min: FieldFunction,
    v_max: FieldFunction,
    field_report: fieldroad::monotone::MonotoneReport,
    coupled: CoupledProblem,
    coupled_opts: CoupledOptions,
    lower: CoupledSolution,
    upper: CoupledSolution,
}

fn shared() -> Result<Shared> {
    let p = fisher_params(0.1, 10.0, 10.0);
    let grid = FieldGrid::new(10.0, 10.0, 128, 64, RoadMode::One)?;
    let field_prob = FieldProblem::new(p, fisher_field(&p), grid)?;
    let field_opts = IterationOptions {
        record_history: true,
        ..IterationOptions::default()
    };
    let roads = RoadState::constant(&grid, p.m, 0.0);
    let (v_min, v_max, field_report) = min_max_solutions(&field_prob, &roads, &field_opts)?;
    let coupled = fisher_coupled(0.1, 10.0, 10.0, 64, 32);
    let coupled_opts = CoupledOptions::default();
    let (lower, upper) = solve_coupled(&coupled, &coupled_opts)?;
    Ok(Shared {
        field_prob,
        field_opts,
        v_min,
        v_max,
        field_report,
        coupled,
        coupled_opts,
        lower,
        upper,
    })
}

fn c1_ordering(s: &Shared) -> Result<Outcome> {
    let rep = &s.field_report;
    let per_sweep = rep.history.iter().map(|r| r.min_violation).fold(f64::INFINITY, f64::min);
    let worst = per_sweep.min(rep.worst_violation());
    outcome(
        worst >= -1e-9 && !rep.history.is_empty(),
        format!(
            "{} sweeps on 128x64, smallest ordering margin {worst:.3e} (tol -1e-9)",
            rep.sweeps
        ),
    )
}

fn c2_box(s: &Shared) -> Result<Outcome> {
    let k = s.field_prob.box_cap();
    let m = s.coupled.params.m;
    let rep = &s.field_report;
    let mut lo = rep.lower.lowest.min(rep.upper.lowest).min(s.v_min.min());
    let mut hi = rep.lower.highest.max(rep.upper.highest).max(s.v_max.max());
    for sol in [&s.lower, &s.upper] {
        lo = lo.min(sol.report.v_lowest).min(sol.v.min());
        hi = hi.max(sol.report.v_highest).max(sol.v.max());
    }
    let mut u_lo = f64::INFINITY;
    let mut u_hi = f64::NEG_INFINITY;
    for sol in [&s.lower, &s.upper] {
        u_lo = u_lo.min(sol.report.u_lowest).min(sol.u.min());
        u_hi = u_hi.max(sol.report.u_highest).max(sol.u.max());
    }
    let ok = lo >= -1e-9 && hi <= k + 1e-9 && u_lo >= -1e-9 && u_hi <= m + 1e-9;
    outcome(
        ok,
        format!("field iterates in [{lo:.3e}, {hi:.12}], road iterates in [{u_lo:.3e}, {u_hi:.12}] (k = {k}, m = {m})"),
    )
}

fn c3_subsolution(s: &Shared) -> Result<Outcome> {
    let p = &s.field_prob;
    let eps = choose_epsilon(&p.params, &p.f, &p.grid)?;
    let phi = phi1_exact(&p.grid)?.phi1.scaled(eps);
    let (_, v_zero_road, _) = min_max_solutions(p, &RoadState::constant(&p.grid, 0.0, 0.0), &s.field_opts)?;
    let gap_zero = phi.min_gap_to(&v_zero_road);
    let gap_m = phi.min_gap_to(&s.v_max);
    let worst = gap_zero.min(gap_m);
    outcome(
        worst >= -1e-8,
        format!("eps = {eps:.6}; min(v_max - eps phi1) = {gap_zero:.3e} (w = 0), {gap_m:.3e} (w = m)"),
    )
}

fn c4_comparison(s: &Shared) -> Result<Outcome> {
    let p = fisher_params(0.1, 10.0, 10.0);
    let grid = FieldGrid::new(10.0, 10.0, 64, 32, RoadMode::One)?;
    let prob = FieldProblem::new(p, fisher_field(&p), grid)?;
    let opts = IterationOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(20240607);
    let mut worst = f64::INFINITY;
    for _ in 0..5 {
        let a: f64 = rng.gen_range(0.0..p.m);
        let phase: f64 = rng.gen_range(0.0..2.0 * PI);
        let lift: f64 = rng.gen_range(0.0..0.5);
        let w1 = RoadFunction::from_fn(&grid, Side::Bottom, |x| a * (0.5 + 0.5 * (x + phase).sin()));
        let w2 = RoadFunction::from_fn(&grid, Side::Bottom, |x| {
            (w1_value(a, phase, x) + lift * (1.0 + (2.0 * x).cos()) / 2.0).min(p.m)
        });
        let (_, v1, _) = min_max_solutions(&prob, &RoadState::one(w1), &opts)?;
        let (_, v2, _) = min_max_solutions(&prob, &RoadState::one(w2), &opts)?;
        worst = worst.min(v1.min_gap_to(&v2));
    }
    let gap = s.field_report.gap;
    outcome(
        worst >= -1e-8 && gap <= 1e-8,
        format!("min(v(w2) - v(w1)) over 5 pairs = {worst:.3e}; |v_max - v_min| at w = m: {gap:.3e}"),
    )
}

fn w1_value(a: f64, phase: f64, x: f64) -> f64 {
    a * (0.5 + 0.5 * (x + phase).sin())
}

fn c5_coupled(s: &Shared) -> Result<Outcome> {
    let prob = &s.coupled;
    let eps = choose_epsilon(&prob.params, &prob.f, &prob.grid)?;
    let phi = phi1_exact(&prob.grid)?.phi1.scaled(eps);
    let up = &s.upper;
    let res = [&s.lower, &s.upper]
        .iter()
        .map(|x| x.report.field_residual.max(x.report.road_residual))
        .fold(0.0, f64::max);
    let above = phi.min_gap_to(&up.v);
    let ok_kpp = up.u.max() > 1e-3 && above >= -1e-8 && res <= 1e-6;

    let collapse = fisher_coupled(10.0, 1.0, 1.0, 32, 32);
    // The decay to zero is slow, so the outer stopping step has to sit well
    // below the 1e-8 distance being checked.
    let tight = CoupledOptions {
        outer_tol: 1e-10,
        ..CoupledOptions::default()
    };
    let (lo, hi) = solve_coupled(&collapse, &tight)?;
    let trivial = [&lo, &hi]
        .iter()
        .map(|x| x.u.max().abs().max(x.u.min().abs()).max(x.v.max().abs()).max(x.v.min().abs()))
        .fold(0.0, f64::max);
    outcome(
        ok_kpp && trivial <= 1e-8,
        format!(
            "D=0.1: {}+{} outer steps, sup u = {:.6}, min(v - eps phi1) = {above:.3e}, residual {res:.3e}; D=10, l=L=1: sup |(u,v)| = {trivial:.3e}",
            s.lower.report.iterations,
            s.upper.report.iterations,
            up.u.max()
        ),
    )
}

fn c6_eigen() -> Result<Outcome> {
    let errs = [16usize, 32, 64]
        .iter()
        .map(|&n| Ok((discrete_lambda1(&FieldGrid::new(PI / 2.0, PI, n, n, RoadMode::One)?, 1e-13)? - 2.0).abs()))
        .collect::<Result<Vec<f64>>>()?;
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let closed = (lambda1_closed_form(PI / 2.0, PI) - 2.0).abs();
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        min_order >= 1.8 && closed <= 4.0 * f64::EPSILON,
        format!("errors {}, orders {orders:.3?}, closed form error {closed:.1e}", sci(&errs)),
    )
}

fn c7_manufactured() -> Result<Outcome> {
    let rep = manufactured_convergence(&ManufacturedCase::default(), &[16, 32, 64, 128])?;
    outcome(
        rep.min_order() >= 1.8,
        format!("sup errors {}, orders {:.3?}", sci(&rep.errors), rep.orders),
    )
}

fn c8_parabolic(s: &Shared) -> Result<Outcome> {
    let prob = &s.coupled;
    let u0 = RoadFunction::constant(&prob.grid, Side::Bottom, prob.params.m);
    let v0 = FieldFunction::constant(&prob.grid, prob.params.box_cap());
    let opts = ParabolicOptions {
        steady_tol: 1e-11,
        t_end: 2e4,
        ..ParabolicOptions::default()
    };
    let r = parabolic_relax(prob, &u0, &v0, &opts)?;
    let dist = r.u.sup_distance(&s.upper.u).max(r.v.sup_distance(&s.upper.v));
    outcome(
        r.converged && dist <= 1e-6,
        format!(
            "{} explicit steps to t = {:.1}, sup distance to the upper bracket {dist:.3e}",
            r.steps, r.time
        ),
    )
}

fn c9_two_road() -> Result<Outcome> {
    let base = fisher_params(0.1, 4.0, 4.0);
    let params = TwoRoadParams::new(base, 1.0, 1.0, 1.0)?;
    let prob = TwoRoadProblem::new(
        params,
        ReactionLaw::fisher(),
        ReactionLaw::fisher(),
        ReactionLaw::fisher(),
        32,
        32,
    )?;
    let opts = CoupledOptions::default();
    let (lo, hi) = solve_two_road(&prob, &opts)?;
    let g = prob.grid;
    let mut asym: f64 = 0.0;
    for sol in [&lo, &hi] {
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                asym = asym.max((sol.v.at(i, j) - sol.v.at(i, g.ny - j)).abs());
            }
        }
        asym = asym.max(
            sol.u
                .sup_distance(&RoadFunction::from_nodes(&g, Side::Bottom, sol.w.values().to_vec())?),
        );
    }
    let k = params.box_cap();
    let mut excess = f64::NEG_INFINITY;
    for sol in [&lo, &hi] {
        let r = &sol.report;
        excess = excess
            .max(r.u_highest - base.m)
            .max(r.w_highest.unwrap_or(f64::INFINITY) - params.m_p)
            .max(r.v_highest - k)
            .max(-r.u_lowest)
            .max(-r.v_lowest)
            .max(-r.w_lowest.unwrap_or(f64::NEG_INFINITY));
    }
    let eps = choose_epsilon(&base, &prob.f, &g)?;
    let flags = nontriviality_check2(&hi.u, &hi.v, &hi.w, eps, opts.inner.sup_tol)?;
    let all = flags.u_nontrivial && flags.v_nontrivial && flags.w_nontrivial;
    outcome(
        asym <= 1e-8 && excess <= 1e-9 && all,
        format!("reflection asymmetry {asym:.3e}, largest cap excess {excess:.3e}, flags {flags:?}"),
    )
}

fn c10_growth() -> Result<Outcome> {
    let p = fisher_params(0.1, 4.0, 4.0);
    let g = Reaction::road(ReactionLaw::fisher(), &p).unwrap();
    let cfg = GrowthStudyConfig {
        ell0: 2.0,
        ells: vec![4.0, 8.0, 16.0],
        h1: 0.125,
        ny: 32,
        options: CoupledOptions::default(),
    };
    let rep = domain_growth_study(&p, &fisher_field(&p), &g, &cfg)?;
    let h1: Vec<f64> = rep.entries.iter().map(|e| e.h1_field).collect();
    let h1_road: Vec<f64> = rep.entries.iter().map(|e| e.h1_road).collect();
    let mins: Vec<f64> = rep.entries.iter().map(|e| e.interior_min).collect();
    let diffs: Vec<f64> = rep.entries.iter().filter_map(|e| e.diff_prev).collect();
    let mut detail = format!(
        "H1 field {h1:.4?}, H1 road {h1_road:.4?}, interior min {mins:.4?} >= {:.4}, diffs {}",
        rep.interior_bound,
        sci(&diffs)
    );
    if !rep.passed() {
        detail.push_str(&format!("; failures: {}", rep.failures.join("; ")));
    }
    outcome(rep.passed(), detail)
}

fn c11_determinism(s: &Shared) -> Result<Outcome> {
    let first = RunSummary::coupled(&s.coupled, &s.coupled_opts, &s.lower, &s.upper)?.to_json();
    let sequential = CoupledOptions {
        parallel: false,
        ..s.coupled_opts
    };
    let (lo, hi) = solve_coupled(&s.coupled, &sequential)?;
    let second = RunSummary::coupled(&s.coupled, &s.coupled_opts, &lo, &hi)?.to_json();
    let (lo, hi) = solve_coupled(&s.coupled, &s.coupled_opts)?;
    let third = RunSummary::coupled(&s.coupled, &s.coupled_opts, &lo, &hi)?.to_json();
    outcome(
        first == second && first == third,
        format!("three runs (one sequential), summary.json of {} bytes", first.len()),
    )
}

fn report(id: &str, name: &str, started: Instant, result: Result<Outcome>) -> bool {
    let secs = started.elapsed().as_secs_f64();
    match result {
        Ok(o) => {
            let tag = if o.passed { "PASS" } else { "FAIL" };
            println!("[{tag}] {id} {name} ({secs:.1}s): {}", o.detail);
            o.passed
        }
        Err(e) => {
            println!("[FAIL] {id} {name} ({secs:.1}s): error: {e}");
            false
        }
    }
}

fn main() -> ExitCode {
    let started = Instant::now();
    let shared = match shared() {
        Ok(s) => s,
        Err(e) => {
            println!("[FAIL] setup: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!("shared runs ready ({:.1}s)", started.elapsed().as_secs_f64());
    let mut all = true;
    let s = &shared;
    let criteria: Vec<Criterion<'_>> = vec![
        ("C1", "monotone ordering", Box::new(|| c1_ordering(s))),
        ("C2", "box bounds", Box::new(|| c2_box(s))),
        ("C3", "subsolution lower bound", Box::new(|| c3_subsolution(s))),
        ("C4", "comparison and uniqueness", Box::new(|| c4_comparison(s))),
        ("C5", "coupled fixed point", Box::new(|| c5_coupled(s))),
        ("C6", "principal eigenvalue", Box::new(c6_eigen)),
        ("C7", "manufactured solution order", Box::new(c7_manufactured)),
        ("C8", "parabolic oracle", Box::new(|| c8_parabolic(s))),
        ("C9", "two roads", Box::new(c9_two_road)),
        ("C10", "domain growth", Box::new(c10_growth)),
        ("C11", "determinism", Box::new(|| c11_determinism(s))),
    ];
    for (id, name, run) in criteria {
        let t = Instant::now();
        all &= report(id, name, t, run());
    }
    println!("total {:.1}s", started.elapsed().as_secs_f64());
    if all {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
