//! Domain-growth study: solve on `(-ℓ, ℓ) x (0, L)` for increasing `ℓ`,
//! restrict each solution to the fixed box of half-width `ℓ₀`, and track the
//! quantities that stay bounded independently of `ℓ`.

use std::f64::consts::FRAC_PI_4;
use std::io::Write;

use log::info;
use serde::Serialize;

use crate::coupled::{solve_coupled, CoupledOptions, CoupledProblem};
use crate::eigen::{choose_epsilon, default_probes, kpp_condition, phi1_exact};
use crate::error::{Error, Result};
use crate::field::{FieldProblem, RoadState};
use crate::grid::{
    norms, restrict, restrict_road, road_norms, trap_weight, FieldFunction, FieldGrid, RoadFunction, RoadMode, Side,
};
use crate::model::{validate_params, ModelParams, Reaction};
use crate::monotone::check_subsolution;

/// Relative band within which the H¹ diagnostics count as a plateau.
pub const PLATEAU_TOL: f64 = 0.05;

/// Tolerance on the interior lower bound.
pub const INTERIOR_TOL: f64 = 1e-6;

/// Trapezoidal cutoff: one on `|x1| <= ℓ₀`, zero beyond `ℓ₀ + 1`, linear in
/// between. Needs `ℓ >= ℓ₀ + 1`.
pub fn cutoff_rho(grid: &FieldGrid, ell0: f64) -> Result<RoadFunction> {
    if !(ell0 > 0.0) || grid.ell < ell0 + 1.0 - 1e-12 {
        return Err(Error::GridMismatch(format!(
            "cutoff needs ell >= ell0 + 1, got ell = {} and ell0 = {ell0}",
            grid.ell
        )));
    }
    let values = (0..=grid.nx)
        .map(|i| (ell0 + 1.0 - grid.x1(i).abs()).clamp(0.0, 1.0))
        .collect();
    RoadFunction::from_nodes(grid, Side::Bottom, values)
}

/// `∫ ρ² |∇v|²` with the edge quadrature of [`norms`]; `ρ` depends on `x1`
/// only and is averaged in its square along horizontal edges.
pub fn localized_energy(v: &FieldFunction, rho: &RoadFunction) -> Result<f64> {
    let g = v.grid();
    if rho.values().len() != g.nx + 1 {
        return Err(Error::GridMismatch("cutoff does not match the field grid".into()));
    }
    let r2: Vec<f64> = rho.values().iter().map(|r| r * r).collect();
    let (nx, ny) = (g.nx, g.ny);
    let mut e = 0.0;
    for j in 0..=ny {
        let w = trap_weight(j, ny) * g.h2 / g.h1;
        for i in 0..nx {
            let d = v.at(i + 1, j) - v.at(i, j);
            e += w * 0.5 * (r2[i] + r2[i + 1]) * d * d;
        }
    }
    for i in 0..=nx {
        let w = trap_weight(i, nx) * g.h1 / g.h2 * r2[i];
        for j in 0..ny {
            let d = v.at(i, j + 1) - v.at(i, j);
            e += w * d * d;
        }
    }
    Ok(e)
}

#[derive(Clone, Debug)]
pub struct GrowthStudyConfig {
    pub ell0: f64,
    /// Strictly increasing half-widths, each at least `ell0 + 1`.
    pub ells: Vec<f64>,
    /// Cell width along the road, shared by every grid.
    pub h1: f64,
    pub ny: usize,
    pub options: CoupledOptions,
}

impl GrowthStudyConfig {
    /// Cells along the road for each `ℓ`.
    pub fn grid_sizes(&self) -> Result<Vec<usize>> {
        if self.ells.is_empty() {
            return Err(Error::InvalidParameter("growth study needs at least one ell".into()));
        }
        if self.ells.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("ells must be strictly increasing".into()));
        }
        if !(self.h1 > 0.0) {
            return Err(Error::InvalidParameter("h1 must be positive".into()));
        }
        self.ells
            .iter()
            .map(|&ell| {
                if ell < self.ell0 + 1.0 - 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "ell = {ell} leaves no room for the cutoff around ell0 = {}",
                        self.ell0
                    )));
                }
                let n = 2.0 * ell / self.h1;
                let nx = n.round();
                if (n - nx).abs() > 1e-9 * n || !(nx as usize).is_multiple_of(2) {
                    return Err(Error::InvalidParameter(format!(
                        "2 ell / h1 = {n} must be an even integer for ell = {ell}"
                    )));
                }
                Ok(nx as usize)
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthEntry {
    pub ell: f64,
    pub nx: usize,
    pub ny: usize,
    /// H¹ seminorm of `v` restricted to the reference box.
    pub h1_field: f64,
    /// H¹ norm of `u` restricted to the reference interval.
    pub h1_road: f64,
    /// `∫ ρ² |∇v|²` over the full box.
    pub localized_energy: f64,
    /// Minimum of `v` on `|x1| < ℓ/2`, `L/4 < x2 < 3L/4`.
    pub interior_min: f64,
    /// Sup distance to the previous restriction.
    pub diff_prev: Option<f64>,
    pub u_max: f64,
    pub v_max: f64,
    pub v_min: f64,
    pub u_min: f64,
    pub epsilon_subsolution: bool,
    pub field_residual: f64,
    pub road_residual: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PlateauCheck {
    /// Smallest index from which every later value is within the band.
    pub index: usize,
    pub passed: bool,
}

/// Smallest `p` with `|x[j] - x[p]| <= tol * x[p]` for all `j >= p`. The
/// check passes when the plateau spans at least two entries and no value
/// exceeds `(1 + tol) x[p]`. A single entry passes trivially.
pub fn plateau(values: &[f64], tol: f64) -> PlateauCheck {
    let n = values.len();
    let index = (0..n)
        .find(|&p| values[p..].iter().all(|&v| (v - values[p]).abs() <= tol * values[p].abs()))
        .unwrap_or(n.saturating_sub(1));
    let bounded = values.iter().all(|&v| v <= (1.0 + tol) * values[index]);
    PlateauCheck {
        index,
        passed: n == 1 || (index + 1 < n && bounded),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthChecks {
    pub h1_field_plateau: PlateauCheck,
    pub h1_road_plateau: PlateauCheck,
    pub interior_bound: bool,
    pub diffs_decreasing: bool,
    pub box_bounds: bool,
    pub epsilon_valid_everywhere: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    pub ell0: f64,
    pub epsilon: f64,
    /// `ε sin²(π/4)`.
    pub interior_bound: f64,
    pub entries: Vec<GrowthEntry>,
    pub checks: GrowthChecks,
    /// Human-readable failures naming the offending `ℓ`.
    pub failures: Vec<String>,
}

impl GrowthReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// Writes `ell,h1_field,h1_road,interior_min,diff_prev` rows; the first
    /// row has an empty difference.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "ell,h1_field,h1_road,interior_min,diff_prev")?;
        for e in &self.entries {
            let diff = e.diff_prev.map(|d| format!("{d:.16e}")).unwrap_or_default();
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{diff}",
                e.ell, e.h1_field, e.h1_road, e.interior_min
            )?;
        }
        Ok(())
    }
}

/// Minimum of `v` over nodes with `|x1| < ℓ/2` and `L/4 < x2 < 3L/4`.
pub fn interior_min(v: &FieldFunction) -> f64 {
    let g = v.grid();
    let mut m = f64::INFINITY;
    for j in 0..=g.ny {
        let x2 = g.x2(j);
        if !(x2 > 0.25 * g.height && x2 < 0.75 * g.height) {
            continue;
        }
        for i in 0..=g.nx {
            if g.x1(i).abs() < 0.5 * g.ell {
                m = m.min(v.at(i, j));
            }
        }
    }
    m
}

/// Runs the study. `template` supplies every parameter except `ℓ`.
pub fn domain_growth_study(template: &ModelParams, f: &Reaction, g: &Reaction, cfg: &GrowthStudyConfig) -> Result<GrowthReport> {
    let sizes = cfg.grid_sizes()?;
    let ell_min = cfg.ells[0];
    let ell_max = *cfg.ells.last().unwrap();
    validate_params(&template.with_ell(ell_max), f, g).into_result()?;
    let p_min = template.with_ell(ell_min);
    if !kpp_condition(&p_min, f, &default_probes()).passed {
        return Err(Error::Assumption(format!(
            "KPP condition fails at the smallest ell = {ell_min}"
        )));
    }
    // ε from the smallest box, whose λ₁ is the largest in the family.
    let grid_min = FieldGrid::new(ell_min, template.height, sizes[0], cfg.ny, RoadMode::One)?;
    let epsilon = choose_epsilon(&p_min, f, &grid_min)?;
    let interior_bound = epsilon * FRAC_PI_4.sin().powi(2);

    let mut entries: Vec<GrowthEntry> = Vec::with_capacity(cfg.ells.len());
    let mut failures = Vec::new();
    let mut prev: Option<FieldFunction> = None;
    let mut box_ok = true;
    let mut eps_ok = true;
    for (&ell, &nx) in cfg.ells.iter().zip(&sizes) {
        let p = template.with_ell(ell);
        let prob = CoupledProblem::new(p, f.clone(), g.clone(), nx, cfg.ny)?;
        info!("growth study: ell = {ell} on {nx}x{}", cfg.ny);
        let (_, upper) = solve_coupled(&prob, &cfg.options)?;

        let phi = phi1_exact(&prob.grid)?.phi1.scaled(epsilon);
        let field = FieldProblem::new(p, f.clone(), prob.grid)?;
        let zero_road = RoadState::constant(&prob.grid, 0.0, 0.0);
        let (sub_ok, worst) = check_subsolution(&field, &phi, &zero_road, &cfg.options.inner)?;
        if !sub_ok {
            eps_ok = false;
            failures.push(format!("ell = {ell}: eps phi1 is not a subsolution (excess {worst:e})"));
        }

        let v0 = restrict(&upper.v, cfg.ell0)?;
        let u0 = restrict_road(&upper.u, cfg.ell0)?;
        let rho = cutoff_rho(&prob.grid, cfg.ell0)?;
        let diff_prev = prev.as_ref().map(|pv| pv.sup_distance(&v0));
        let entry = GrowthEntry {
            ell,
            nx,
            ny: cfg.ny,
            h1_field: norms(&v0).h1_semi,
            h1_road: road_norms(&u0).h1,
            localized_energy: localized_energy(&upper.v, &rho)?,
            interior_min: interior_min(&upper.v),
            diff_prev,
            u_max: upper.u.max(),
            u_min: upper.u.min(),
            v_max: upper.v.max(),
            v_min: upper.v.min(),
            epsilon_subsolution: sub_ok,
            field_residual: upper.report.field_residual,
            road_residual: upper.report.road_residual,
        };
        const BOX_TOL: f64 = 1e-9;
        if entry.u_min < -BOX_TOL || entry.u_max > p.m + BOX_TOL || entry.v_min < -BOX_TOL || entry.v_max > p.box_cap() + BOX_TOL
        {
            box_ok = false;
            failures.push(format!("ell = {ell}: solution leaves the invariant box"));
        }
        if entry.interior_min < interior_bound - INTERIOR_TOL {
            failures.push(format!(
                "ell = {ell}: interior minimum {} is below eps sin^2(pi/4) = {interior_bound}",
                entry.interior_min
            ));
        }
        entries.push(entry);
        prev = Some(v0);
    }

    let h1_field_plateau = plateau(&entries.iter().map(|e| e.h1_field).collect::<Vec<_>>(), PLATEAU_TOL);
    let h1_road_plateau = plateau(&entries.iter().map(|e| e.h1_road).collect::<Vec<_>>(), PLATEAU_TOL);
    for (name, check) in [("field", h1_field_plateau), ("road", h1_road_plateau)] {
        if !check.passed {
            failures.push(format!("{name} H1 diagnostic does not plateau (last ell = {ell_max})"));
        }
    }
    let diffs: Vec<f64> = entries.iter().filter_map(|e| e.diff_prev).collect();
    let mut diffs_decreasing = true;
    for (k, w) in diffs.windows(2).enumerate() {
        if !(w[1] < w[0]) {
            diffs_decreasing = false;
            failures.push(format!("ell = {}: restriction difference did not decrease", cfg.ells[k + 2]));
        }
    }
    let interior_ok = entries.iter().all(|e| e.interior_min >= interior_bound - INTERIOR_TOL);
    Ok(GrowthReport {
        ell0: cfg.ell0,
        epsilon,
        interior_bound,
        entries,
        checks: GrowthChecks {
            h1_field_plateau,
            h1_road_plateau,
            interior_bound: interior_ok,
            diffs_decreasing,
            box_bounds: box_ok,
            epsilon_valid_everywhere: eps_ok,
        },
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ReactionLaw;

    #[test]
    fn cutoff_profile_values() {
        let g = FieldGrid::new(5.0, 1.0, 20, 4, RoadMode::One).unwrap();
        let rho = cutoff_rho(&g, 2.0).unwrap();
        let at = |x: f64| rho.at(((x + 5.0) / g.h1).round() as usize);
        assert_eq!(at(0.0), 1.0);
        assert_eq!(at(-2.5), 0.5);
        assert_eq!(at(4.0), 0.0);
        assert_eq!(at(2.0), 1.0);
        assert!(cutoff_rho(&g, 4.5).is_err());
    }

    #[test]
    fn localized_energy_examples() {
        let g = FieldGrid::new(3.0, 2.0, 12, 8, RoadMode::One).unwrap();
        let rho = cutoff_rho(&g, 1.5).unwrap();
        assert_eq!(localized_energy(&FieldFunction::zeros(&g), &rho).unwrap(), 0.0);
        let phi = phi1_exact(&g).unwrap().phi1;
        let semi2 = norms(&phi).h1_semi.powi(2);
        let ones = RoadFunction::from_nodes(&g, Side::Bottom, vec![1.0; 13]).unwrap();
        assert!((localized_energy(&phi, &ones).unwrap() - semi2).abs() < 1e-12 * semi2);
        assert!(localized_energy(&phi, &rho).unwrap() <= semi2);
    }

    #[test]
    fn plateau_rule() {
        assert_eq!(plateau(&[1.0, 2.0, 2.05, 2.06], 0.05).index, 1);
        assert!(plateau(&[1.0, 2.0, 2.05, 2.06], 0.05).passed);
        assert!(!plateau(&[1.0, 2.0, 3.0], 0.05).passed);
        assert!(!plateau(&[3.0, 2.0, 2.01], 0.05).passed);
        assert!(plateau(&[7.0], 0.05).passed);
    }

    #[test]
    fn config_rejects_bad_lists() {
        let mk = |ells: Vec<f64>, h1: f64| GrowthStudyConfig {
            ell0: 2.0,
            ells,
            h1,
            ny: 8,
            options: CoupledOptions::default(),
        };
        assert_eq!(mk(vec![4.0, 8.0], 0.5).grid_sizes().unwrap(), vec![16, 32]);
        assert!(mk(vec![8.0, 4.0], 0.5).grid_sizes().is_err());
        assert!(mk(vec![2.5], 0.5).grid_sizes().is_err());
        assert!(mk(vec![4.0], 0.3).grid_sizes().is_err());
        assert!(mk(vec![], 0.5).grid_sizes().is_err());
    }

    #[test]
    fn interior_bound_arithmetic() {
        assert!((0.5 * FRAC_PI_4.sin().powi(2) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn single_entry_study_has_no_differences() {
        let p = ModelParams::new(0.1, 1.0, 1.0, 1.0, 3.0, 2.0, 1.0).unwrap();
        let f = Reaction::field(ReactionLaw::fisher(), &p).unwrap();
        let g = Reaction::road(ReactionLaw::fisher(), &p).unwrap();
        let cfg = GrowthStudyConfig {
            ell0: 2.0,
            ells: vec![3.0],
            h1: 0.25,
            ny: 8,
            options: CoupledOptions::default(),
        };
        let rep = domain_growth_study(&p, &f, &g, &cfg).unwrap();
        assert_eq!(rep.entries.len(), 1);
        assert!(rep.entries[0].diff_prev.is_none());
        assert!(rep.checks.epsilon_valid_everywhere);
        let mut csv = Vec::new();
        rep.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(','));
    }
}
