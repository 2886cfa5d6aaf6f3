//! Configuration, subcommand runners and exit codes for the `fieldroad`
//! binary. Kept in a library so the runners can be tested without spawning
//! processes.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use serde::{Deserialize, Serialize};

use fieldroad::coupled::{solve_coupled, CoupledOptions, CoupledProblem};
use fieldroad::eigen::{choose_epsilon, default_probes, discrete_lambda1, kpp_condition, lambda1_closed_form};
use fieldroad::exhaust::{domain_growth_study, GrowthReport, GrowthStudyConfig};
use fieldroad::grid::{norms, RoadMode, Side};
use fieldroad::model::{validate_params, ReactionRole};
use fieldroad::monotone::{min_max_solutions, write_history_csv, IterationOptions, MonotoneReport};
use fieldroad::oracle::{run_oracle_suite, OracleSuiteReport};
use fieldroad::summary::{ReactionSummary, RunSummary};
use fieldroad::tworoad::{solve_two_road, validate_two_road, TwoRoadParams, TwoRoadProblem};
use fieldroad::{FieldGrid, FieldProblem, ModelParams, Reaction, ReactionLaw, RoadFunction, RoadState, ValidationReport};

/// Bad or incomplete configuration. Maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// A run finished but one of its own checks failed. Maps to exit code 1.
#[derive(Debug)]
pub struct ChecksFailed(pub String);

impl fmt::Display for ChecksFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "checks failed: {}", self.0)
    }
}

impl std::error::Error for ChecksFailed {}

/// 2 for configuration and assumption failures, 3 for solver
/// non-convergence, 1 for anything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    if let Some(e) = err.downcast_ref::<fieldroad::Error>() {
        if e.is_non_convergence() {
            return 3;
        }
        if matches!(
            e,
            fieldroad::Error::Assumption(_) | fieldroad::Error::InvalidParameter(_) | fieldroad::Error::NoEpsilon(_)
        ) {
            return 2;
        }
    }
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    One,
    Two,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsBlock {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "Dprime")]
    pub d_road: f64,
    #[serde(rename = "Dsecond")]
    pub d_top: Option<f64>,
    pub mu: f64,
    pub nu: f64,
    pub mu_p: Option<f64>,
    pub nu_p: Option<f64>,
    pub ell: f64,
    #[serde(rename = "L")]
    pub height: f64,
    /// Defaults to `max(1, nu/mu)`.
    pub m: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionSpec {
    pub name: String,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
}

impl ReactionSpec {
    fn law(&self, which: &str) -> Result<ReactionLaw> {
        ReactionLaw::from_name(&self.name, &self.coefficients).map_err(|e| ConfigError(format!("reactions.{which}: {e}")).into())
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionsBlock {
    pub f: ReactionSpec,
    pub g: ReactionSpec,
    pub h: Option<ReactionSpec>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub sup_tol: Option<f64>,
    pub outer_tol: Option<f64>,
    pub cg_tol: Option<f64>,
    pub max_sweeps: Option<usize>,
    pub max_outer: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamsBlock,
    pub reactions: ReactionsBlock,
    pub grid: GridBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub output: OutputBlock,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()).into())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let p = &self.params;
        let built = match p.m {
            Some(m) => ModelParams::new(p.d, p.d_road, p.mu, p.nu, p.ell, p.height, m),
            None => ModelParams::with_default_cap(p.d, p.d_road, p.mu, p.nu, p.ell, p.height),
        };
        built.map_err(|e| ConfigError(format!("params: {e}")).into())
    }

    /// Top road parameters; every missing key is named.
    pub fn two_road_params(&self) -> Result<TwoRoadParams> {
        let p = &self.params;
        let missing: Vec<&str> = [("Dsecond", p.d_top), ("mu_p", p.mu_p), ("nu_p", p.nu_p)]
            .iter()
            .filter(|(_, v)| v.is_none())
            .map(|(k, _)| *k)
            .collect();
        if !missing.is_empty() {
            return Err(ConfigError(format!("two-road mode needs params.{}", missing.join(", params."))).into());
        }
        TwoRoadParams::new(self.model_params()?, p.d_top.unwrap(), p.mu_p.unwrap(), p.nu_p.unwrap())
            .map_err(|e| ConfigError(format!("params: {e}")).into())
    }

    pub fn coupled_options(&self) -> Result<CoupledOptions> {
        let s = &self.solver;
        let mut o = CoupledOptions::default();
        if let Some(t) = s.sup_tol {
            o.inner.sup_tol = t;
        }
        if let Some(t) = s.cg_tol {
            o.inner.linear.rel_tol = t;
        }
        if let Some(n) = s.max_sweeps {
            o.inner.max_sweeps = n;
        }
        if let Some(t) = s.outer_tol {
            o.outer_tol = t;
        }
        if let Some(n) = s.max_outer {
            o.max_outer = n;
        }
        let positive = o.inner.sup_tol > 0.0 && o.inner.linear.rel_tol > 0.0 && o.outer_tol > 0.0;
        if !positive || o.inner.max_sweeps == 0 || o.max_outer == 0 {
            return Err(ConfigError("solver tolerances and iteration limits must be positive".into()).into());
        }
        Ok(o)
    }

    fn reactions(&self, p: &ModelParams) -> Result<(Reaction, Reaction)> {
        let f = Reaction::field(self.reactions.f.law("f")?, p)?;
        let g = Reaction::road(self.reactions.g.law("g")?, p)?;
        Ok((f, g))
    }

    fn out_dir(&self, cli: Option<&Path>) -> PathBuf {
        cli.map(Path::to_path_buf)
            .or_else(|| self.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let mut w = create(dir, name)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Writes the checklist next to the outputs before reporting the failure,
/// so a rejected run still leaves a record of why.
fn require(report: ValidationReport, dir: &Path) -> Result<()> {
    if report.passed() {
        return Ok(());
    }
    fs::create_dir_all(dir)?;
    write_text(dir, "assumptions.json", &pretty(&report))?;
    report.into_result()?;
    Ok(())
}

/// `solve`: both brackets of the coupled (or two-road) system. Writes
/// `u.csv`, `v.csv` (maximal bracket), `u_lower.csv`, `v_lower.csv`,
/// `w.csv` for two roads, and `summary.json`. Returns the summary.
pub fn run_solve(cfg: &RunConfig, out: Option<&Path>, force_two: bool) -> Result<RunSummary> {
    let dir = cfg.out_dir(out);
    let opts = cfg.coupled_options()?;
    let two = force_two || cfg.mode == Mode::Two;
    let summary = if two {
        let tp = cfg.two_road_params()?;
        let h = cfg
            .reactions
            .h
            .as_ref()
            .ok_or_else(|| ConfigError("two-road mode needs reactions.h".into()))?
            .law("h")?;
        let prob = TwoRoadProblem::new(
            tp,
            cfg.reactions.f.law("f")?,
            cfg.reactions.g.law("g")?,
            h,
            cfg.grid.nx,
            cfg.grid.ny,
        )?;
        require(validate_two_road(&prob.params, &prob.f, &prob.g, &prob.h), &dir)?;
        info!("solving the two-road system on {}x{}", cfg.grid.nx, cfg.grid.ny);
        let (lo, hi) = solve_two_road(&prob, &opts)?;
        fs::create_dir_all(&dir)?;
        hi.u.write_csv(create(&dir, "u.csv")?)?;
        hi.v.write_csv(create(&dir, "v.csv")?)?;
        hi.w.write_csv(create(&dir, "w.csv")?)?;
        lo.u.write_csv(create(&dir, "u_lower.csv")?)?;
        lo.v.write_csv(create(&dir, "v_lower.csv")?)?;
        lo.w.write_csv(create(&dir, "w_lower.csv")?)?;
        RunSummary::two_road(&prob, &opts, &lo, &hi)?
    } else {
        let p = cfg.model_params()?;
        let (f, g) = cfg.reactions(&p)?;
        let prob = CoupledProblem::new(p, f, g, cfg.grid.nx, cfg.grid.ny)?;
        require(validate_params(&prob.params, &prob.f, &prob.g), &dir)?;
        info!("solving the coupled system on {}x{}", cfg.grid.nx, cfg.grid.ny);
        let (lo, hi) = solve_coupled(&prob, &opts)?;
        fs::create_dir_all(&dir)?;
        hi.u.write_csv(create(&dir, "u.csv")?)?;
        hi.v.write_csv(create(&dir, "v.csv")?)?;
        lo.u.write_csv(create(&dir, "u_lower.csv")?)?;
        lo.v.write_csv(create(&dir, "v_lower.csv")?)?;
        RunSummary::coupled(&prob, &opts, &lo, &hi)?
    };
    write_text(&dir, "summary.json", &summary.to_json())?;
    Ok(summary)
}

/// Road density for `field-only`.
#[derive(Clone, Debug)]
pub enum RoadInput {
    Constant(f64),
    Csv(PathBuf),
}

#[derive(Clone, Debug, Serialize)]
pub struct FieldOnlySummary {
    pub params: ModelParams,
    pub reaction: ReactionSummary,
    pub grid: FieldGrid,
    pub road_min: f64,
    pub road_max: f64,
    pub lambda: f64,
    pub report: MonotoneReport,
    pub v_min_norms: fieldroad::grid::FieldNorms,
    pub v_max_norms: fieldroad::grid::FieldNorms,
}

/// `field-only`: minimal and maximal field solutions for a fixed road
/// density. Writes `v_min.csv`, `v_max.csv`, `history.csv` and
/// `field_summary.json`.
pub fn run_field_only(cfg: &RunConfig, road: &RoadInput, out: Option<&Path>) -> Result<FieldOnlySummary> {
    let dir = cfg.out_dir(out);
    let p = cfg.model_params()?;
    let f = Reaction::field(cfg.reactions.f.law("f")?, &p)?;
    let grid = FieldGrid::new(p.ell, p.height, cfg.grid.nx, cfg.grid.ny, RoadMode::One)?;
    let w = match road {
        RoadInput::Constant(c) => RoadFunction::constant(&grid, Side::Bottom, *c),
        RoadInput::Csv(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            RoadFunction::read_csv(&grid, Side::Bottom, BufReader::new(file))?
        }
    };
    let prob = FieldProblem::new(p, f.clone(), grid)?;
    let opts = IterationOptions {
        record_history: true,
        ..cfg.coupled_options()?.inner
    };
    let (road_min, road_max) = (w.min(), w.max());
    let (v_min, v_max, report) = min_max_solutions(&prob, &RoadState::one(w), &opts)?;
    fs::create_dir_all(&dir)?;
    v_min.write_csv(create(&dir, "v_min.csv")?)?;
    v_max.write_csv(create(&dir, "v_max.csv")?)?;
    write_history_csv(&report.history, create(&dir, "history.csv")?)?;
    let summary = FieldOnlySummary {
        params: p,
        reaction: ReactionSummary::of(&f),
        grid,
        road_min,
        road_max,
        lambda: prob.lambda,
        v_min_norms: norms(&v_min),
        v_max_norms: norms(&v_max),
        report,
    };
    write_text(&dir, "field_summary.json", &pretty(&summary))?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenSummary {
    pub ell: f64,
    #[serde(rename = "L")]
    pub height: f64,
    pub lambda1_closed: f64,
    pub nx: usize,
    pub ny: usize,
    pub lambda1_discrete: f64,
    /// Present when a field diffusivity is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kpp: Option<fieldroad::eigen::KppReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

/// `eigen`: closed-form and discrete principal Dirichlet eigenvalue of the
/// box; with `d` also the KPP check and `ε` for a Fisher field reaction.
pub fn run_eigen(ell: f64, height: f64, nx: usize, ny: usize, d: Option<f64>) -> Result<EigenSummary> {
    let grid = FieldGrid::new(ell, height, nx, ny, RoadMode::One)?;
    let lambda1_discrete = discrete_lambda1(&grid, 1e-12)?;
    let (kpp, epsilon) = match d {
        Some(d) => {
            let p = ModelParams::new(d, 1.0, 1.0, 1.0, ell, height, 1.0)?;
            let f = Reaction::new(ReactionLaw::fisher(), ReactionRole::Field, p.box_cap())?;
            (
                Some(kpp_condition(&p, &f, &default_probes())),
                choose_epsilon(&p, &f, &grid).ok(),
            )
        }
        None => (None, None),
    };
    Ok(EigenSummary {
        ell,
        height,
        lambda1_closed: lambda1_closed_form(ell, height),
        nx,
        ny,
        lambda1_discrete,
        kpp,
        epsilon,
    })
}

/// `grow`: the domain growth study with every parameter but `ℓ` taken from
/// the config. Writes `growth.csv` and `growth.json`; fails with
/// [`ChecksFailed`] when a study check does not hold.
pub fn run_grow(cfg: &RunConfig, ells: &[f64], ell0: f64, h1: f64, out: Option<&Path>) -> Result<GrowthReport> {
    let dir = cfg.out_dir(out);
    let p = cfg.model_params()?;
    let (f, g) = cfg.reactions(&p)?;
    let study = GrowthStudyConfig {
        ell0,
        ells: ells.to_vec(),
        h1,
        ny: cfg.grid.ny,
        options: cfg.coupled_options()?,
    };
    let report = domain_growth_study(&p, &f, &g, &study)?;
    fs::create_dir_all(&dir)?;
    let mut csv = create(&dir, "growth.csv")?;
    report.write_csv(&mut csv)?;
    csv.flush()?;
    write_text(&dir, "growth.json", &pretty(&report))?;
    if !report.passed() {
        return Err(ChecksFailed(report.failures.join("; ")).into());
    }
    Ok(report)
}

/// `validate`: the oracle suite. Fails with [`ChecksFailed`] if any oracle
/// disagrees.
pub fn run_validate(out: Option<&Path>) -> Result<OracleSuiteReport> {
    let report = run_oracle_suite()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_text(dir, "validate.json", &pretty(&report))?;
    }
    Ok(report)
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    pretty(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "params": {"D": 0.1, "Dprime": 1, "mu": 1, "nu": 1, "ell": 3, "L": 3, "m": 1},
        "reactions": {"f": {"name": "fisher"}, "g": {"name": "fisher"}},
        "grid": {"nx": 12, "ny": 12}
    }"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.mode, Mode::One);
        let o = cfg.coupled_options().unwrap();
        assert_eq!(o.outer_tol, CoupledOptions::default().outer_tol);
        assert_eq!(cfg.model_params().unwrap().m, 1.0);
    }

    #[test]
    fn missing_mu_is_named() {
        let text = MINIMAL.replace("\"mu\": 1, ", "");
        let err = RunConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("mu"), "{err}");
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("\"nx\": 12", "\"nx\": 12, \"nz\": 3");
        let err = RunConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("nz"), "{err}");
    }

    #[test]
    fn two_road_mode_names_missing_keys() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        let err = cfg.two_road_params().unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("Dsecond") && msg.contains("mu_p") && msg.contains("nu_p"),
            "{msg}"
        );
    }

    #[test]
    fn exit_codes_follow_the_error_kind() {
        let a: anyhow::Error = fieldroad::Error::Assumption("x".into()).into();
        assert_eq!(exit_code(&a), 2);
        let n: anyhow::Error = fieldroad::Error::NonConvergence {
            what: "t",
            limit: 1,
            last_step: 1.0,
        }
        .into();
        assert_eq!(exit_code(&n), 3);
        let c: anyhow::Error = ChecksFailed("x".into()).into();
        assert_eq!(exit_code(&c), 1);
    }

    #[test]
    fn eigen_matches_the_closed_form() {
        let e = run_eigen(10.0, 10.0, 16, 16, Some(0.1)).unwrap();
        assert!((e.lambda1_closed - 0.123370055).abs() < 1e-8);
        assert!(e.kpp.unwrap().passed);
        assert!((e.lambda1_discrete - e.lambda1_closed).abs() < 5e-3);
    }
}
