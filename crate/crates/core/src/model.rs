//! Physical parameters, reaction nonlinearities and the standing assumptions
//! every solver relies on.
//!
//! A [`ModelParams`] value carries the diffusivities, the exchange rates and the
//! geometry of the field `(-ell, ell) x (0, L)`. Reactions are scalar maps with a
//! working interval on which a Lipschitz bound is estimated by dense sampling.
//! [`validate_params`] produces a [`ValidationReport`]; solvers refuse to run on a
//! failed report.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Number of uniform samples used by every sampled assumption check.
pub const ASSUMPTION_SAMPLES: usize = 10_000;

/// Tolerance for the sampled "≤ 0" and "= 0" checks.
pub const ASSUMPTION_TOL: f64 = 1e-12;

/// Safety factor applied to sampled Lipschitz estimates.
pub const LIPSCHITZ_INFLATION: f64 = 1.1;

/// Physical constants of the one-road model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    /// Field diffusivity.
    #[serde(rename = "D")]
    pub d: f64,
    /// Road diffusivity.
    #[serde(rename = "Dprime")]
    pub d_road: f64,
    /// Rate at which the road feeds the field.
    pub mu: f64,
    /// Rate at which the field feeds the road.
    pub nu: f64,
    /// Half-width of the field.
    pub ell: f64,
    /// Height of the field.
    #[serde(rename = "L")]
    pub height: f64,
    /// Upper bound for the road density.
    pub m: f64,
}

impl ModelParams {
    /// Builds parameters, rejecting non-positive or non-finite entries.
    ///
    /// The road cap condition `m >= nu/mu` is *not* enforced here; it is one of
    /// the entries of [`validate_params`].
    pub fn new(d: f64, d_road: f64, mu: f64, nu: f64, ell: f64, height: f64, m: f64) -> Result<Self> {
        let p = ModelParams {
            d,
            d_road,
            mu,
            nu,
            ell,
            height,
            m,
        };
        if let Some((name, value)) = p.first_nonpositive() {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive and finite, got {value}"
            )));
        }
        Ok(p)
    }

    /// Same as [`ModelParams::new`] with the default cap `m = max(1, nu/mu)`.
    pub fn with_default_cap(d: f64, d_road: f64, mu: f64, nu: f64, ell: f64, height: f64) -> Result<Self> {
        let m = if mu > 0.0 { f64::max(1.0, nu / mu) } else { 1.0 };
        Self::new(d, d_road, mu, nu, ell, height, m)
    }

    fn named(&self) -> [(&'static str, f64); 7] {
        [
            ("D", self.d),
            ("Dprime", self.d_road),
            ("mu", self.mu),
            ("nu", self.nu),
            ("ell", self.ell),
            ("L", self.height),
            ("m", self.m),
        ]
    }

    fn first_nonpositive(&self) -> Option<(&'static str, f64)> {
        self.named().into_iter().find(|(_, v)| !(v.is_finite() && *v > 0.0))
    }

    /// Upper end `k = (mu/nu) m` of the invariant box for the field density.
    pub fn box_cap(&self) -> f64 {
        box_cap(self)
    }

    /// Copy of these parameters with a different half-width.
    pub fn with_ell(&self, ell: f64) -> Self {
        ModelParams { ell, ..*self }
    }
}

/// `k = (mu/nu) m`.
pub fn box_cap(p: &ModelParams) -> f64 {
    p.mu / p.nu * p.m
}

/// Which equation a reaction term enters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReactionRole {
    Field,
    Road,
}

/// The scalar law behind a [`Reaction`].
#[derive(Clone)]
pub enum ReactionLaw {
    /// `rate * s * (1 - s)`.
    Fisher { rate: f64 },
    /// `rate * s * (1 - s / capacity)`.
    Logistic { rate: f64, capacity: f64 },
    /// `slope * s`.
    Linear { slope: f64 },
    /// Identically zero.
    Zero,
    /// Any user supplied map.
    Custom {
        name: String,
        func: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for ReactionLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReactionLaw::Fisher { rate } => write!(f, "Fisher {{ rate: {rate} }}"),
            ReactionLaw::Logistic { rate, capacity } => {
                write!(f, "Logistic {{ rate: {rate}, capacity: {capacity} }}")
            }
            ReactionLaw::Linear { slope } => write!(f, "Linear {{ slope: {slope} }}"),
            ReactionLaw::Zero => write!(f, "Zero"),
            ReactionLaw::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl ReactionLaw {
    pub fn fisher() -> Self {
        ReactionLaw::Fisher { rate: 1.0 }
    }

    pub fn logistic() -> Self {
        ReactionLaw::Logistic {
            rate: 1.0,
            capacity: 1.0,
        }
    }

    pub fn custom(name: impl Into<String>, func: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ReactionLaw::Custom {
            name: name.into(),
            func: Arc::new(func),
        }
    }

    /// Looks a built-in law up by name, with optional coefficient overrides.
    ///
    /// Recognised names and coefficients: `fisher` (`rate`), `logistic`
    /// (`rate`, `capacity`), `linear` (`slope`) and `zero`.
    pub fn from_name(name: &str, coeffs: &BTreeMap<String, f64>) -> Result<Self> {
        let allowed: &[&str] = match name {
            "fisher" => &["rate"],
            "logistic" => &["rate", "capacity"],
            "linear" => &["slope"],
            "zero" => &[],
            other => return Err(Error::InvalidParameter(format!("unknown reaction `{other}`"))),
        };
        if let Some(bad) = coeffs.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidParameter(format!(
                "reaction `{name}` has no coefficient `{bad}`"
            )));
        }
        let get = |key: &str, default: f64| coeffs.get(key).copied().unwrap_or(default);
        Ok(match name {
            "fisher" => ReactionLaw::Fisher { rate: get("rate", 1.0) },
            "logistic" => ReactionLaw::Logistic {
                rate: get("rate", 1.0),
                capacity: get("capacity", 1.0),
            },
            "linear" => ReactionLaw::Linear {
                slope: get("slope", 1.0),
            },
            _ => ReactionLaw::Zero,
        })
    }

    pub fn name(&self) -> &str {
        match self {
            ReactionLaw::Fisher { .. } => "fisher",
            ReactionLaw::Logistic { .. } => "logistic",
            ReactionLaw::Linear { .. } => "linear",
            ReactionLaw::Zero => "zero",
            ReactionLaw::Custom { name, .. } => name,
        }
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ReactionLaw::Fisher { rate } => rate * s * (1.0 - s),
            ReactionLaw::Logistic { rate, capacity } => rate * s * (1.0 - s / capacity),
            ReactionLaw::Linear { slope } => slope * s,
            ReactionLaw::Zero => 0.0,
            ReactionLaw::Custom { func, .. } => func(s),
        }
    }
}

/// A reaction term together with its working interval `[0, upper]` and a
/// Lipschitz bound valid there.
#[derive(Clone, Debug)]
pub struct Reaction {
    law: ReactionLaw,
    role: ReactionRole,
    upper: f64,
    lipschitz: f64,
}

impl Reaction {
    /// Wraps `law` for use on `[0, upper]`, estimating its Lipschitz constant.
    pub fn new(law: ReactionLaw, role: ReactionRole, upper: f64) -> Result<Self> {
        if !(upper.is_finite() && upper > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "working interval upper end must be positive, got {upper}"
            )));
        }
        let lipschitz = lipschitz_bound(&law, 0.0, upper, ASSUMPTION_SAMPLES)?;
        Ok(Reaction {
            law,
            role,
            upper,
            lipschitz,
        })
    }

    /// Field reaction on `[0, k]`.
    pub fn field(law: ReactionLaw, p: &ModelParams) -> Result<Self> {
        Self::new(law, ReactionRole::Field, p.box_cap())
    }

    /// Road reaction on `[0, m]`.
    pub fn road(law: ReactionLaw, p: &ModelParams) -> Result<Self> {
        Self::new(law, ReactionRole::Road, p.m)
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        self.law.eval(s)
    }

    pub fn law(&self) -> &ReactionLaw {
        &self.law
    }

    pub fn name(&self) -> &str {
        self.law.name()
    }

    pub fn role(&self) -> ReactionRole {
        self.role
    }

    pub fn working_interval(&self) -> (f64, f64) {
        (0.0, self.upper)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// Sampled Lipschitz estimate on `[a, b]`: the largest difference quotient over
/// adjacent samples, inflated by [`LIPSCHITZ_INFLATION`].
pub fn lipschitz_bound(law: &ReactionLaw, a: f64, b: f64, n_samples: usize) -> Result<f64> {
    if !(a < b) || n_samples < 2 {
        return Err(Error::InvalidParameter(format!(
            "need a < b and at least two samples (a={a}, b={b}, n={n_samples})"
        )));
    }
    let step = (b - a) / (n_samples - 1) as f64;
    let mut prev_s = a;
    let mut prev = checked_eval(law, a)?;
    let mut slope: f64 = 0.0;
    for i in 1..n_samples {
        let s = if i == n_samples - 1 { b } else { a + step * i as f64 };
        let val = checked_eval(law, s)?;
        slope = slope.max(((val - prev) / (s - prev_s)).abs());
        prev_s = s;
        prev = val;
    }
    Ok(slope * LIPSCHITZ_INFLATION)
}

fn checked_eval(law: &ReactionLaw, s: f64) -> Result<f64> {
    let v = law.eval(s);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            name: law.name().to_string(),
            at: s,
        })
    }
}

/// Outcome of one assumption check.
#[derive(Clone, Debug, Serialize)]
pub struct AssumptionCheck {
    pub id: &'static str,
    pub description: &'static str,
    pub passed: bool,
    /// Sample point of the worst violation (or of the tightest margin).
    pub worst_at: Option<f64>,
    /// Signed value at `worst_at`; positive means violated for "≤" checks.
    pub worst_value: Option<f64>,
}

/// List of assumption checks, in a fixed order.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, id: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.id == id)
    }

    /// Converts a failed report into an [`Error::Assumption`].
    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            let ids: Vec<_> = self.failures().map(|c| c.id).collect();
            Err(Error::Assumption(ids.join(", ")))
        }
    }

    pub(crate) fn push(&mut self, id: &'static str, description: &'static str, passed: bool, worst: Option<(f64, f64)>) {
        self.checks.push(AssumptionCheck {
            id,
            description,
            passed,
            worst_at: worst.map(|w| w.0),
            worst_value: worst.map(|w| w.1),
        });
    }
}

/// Uniform samples of `[a, b]`, endpoints included.
pub(crate) fn samples(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = (b - a) / (n - 1) as f64;
    (0..n).map(move |i| if i == n - 1 { b } else { a + step * i as f64 })
}

/// Largest value of `metric` over the samples, with its location.
pub(crate) fn worst_sample(it: impl Iterator<Item = f64>, metric: impl Fn(f64) -> f64) -> Option<(f64, f64)> {
    it.map(|s| (s, metric(s)))
        .fold(None, |acc: Option<(f64, f64)>, (s, v)| match acc {
            Some((_, best)) if best >= v => acc,
            _ => Some((s, v)),
        })
}

/// Checks for the field reaction: zeros at 0 and 1, positive in between,
/// non-positive above 1, and `f(s)/s` decreasing.
pub(crate) fn check_field_reaction(report: &mut ValidationReport, f: &Reaction, k: f64) {
    let n = ASSUMPTION_SAMPLES;
    let z0 = f.eval(0.0);
    let z1 = f.eval(1.0);
    let zeros_ok = z0.abs() <= ASSUMPTION_TOL && z1.abs() <= ASSUMPTION_TOL;
    let worst = if z0.abs() >= z1.abs() { (0.0, z0) } else { (1.0, z1) };
    report.push("f_zeros", "f(0) = f(1) = 0", zeros_ok, Some(worst));

    // interior of (0, 1): report the smallest value
    let pos = worst_sample(samples(0.0, 1.0, n).skip(1).take(n - 2), |s| -f.eval(s));
    report.push(
        "f_positive",
        "f > 0 on (0, 1)",
        pos.is_none_or(|(_, v)| v < 0.0),
        pos.map(|(s, v)| (s, -v)),
    );

    if k > 1.0 {
        let above = worst_sample(samples(1.0, k, n).skip(1), |s| f.eval(s));
        report.push(
            "f_nonpositive_above_one",
            "f <= 0 on (1, k]",
            above.is_none_or(|(_, v)| v <= ASSUMPTION_TOL),
            above,
        );
    } else {
        report.push("f_nonpositive_above_one", "f <= 0 on (1, k]", true, None);
    }

    let ratio = decreasing_ratio_violation(f, k);
    report.push(
        "f_ratio_decreasing",
        "f(s)/s is decreasing on (0, k]",
        ratio.is_none_or(|(_, v)| v < 0.0),
        ratio,
    );
}

/// Worst value of `f(s_{i+1})/s_{i+1} - f(s_i)/s_i`; negative everywhere means
/// strictly decreasing on the samples.
fn decreasing_ratio_violation(f: &Reaction, k: f64) -> Option<(f64, f64)> {
    let n = ASSUMPTION_SAMPLES;
    let pts: Vec<f64> = samples(0.0, k, n + 1).skip(1).collect();
    let ratios: Vec<f64> = pts.iter().map(|&s| f.eval(s) / s).collect();
    (0..pts.len() - 1)
        .map(|i| (pts[i + 1], ratios[i + 1] - ratios[i]))
        .fold(None, |acc: Option<(f64, f64)>, (s, v)| match acc {
            Some((_, best)) if best >= v => acc,
            _ => Some((s, v)),
        })
}

/// Lipschitz and shifted-monotonicity checks for any reaction.
pub(crate) fn check_lipschitz(report: &mut ValidationReport, r: &Reaction, id_lip: &'static str, id_shift: &'static str) {
    let (a, b) = r.working_interval();
    let pts: Vec<f64> = samples(a, b, ASSUMPTION_SAMPLES).collect();
    let vals: Vec<f64> = pts.iter().map(|&s| r.eval(s)).collect();
    let lip = r.lipschitz();
    let mut worst_lip: Option<(f64, f64)> = None;
    let mut worst_shift: Option<(f64, f64)> = None;
    for i in 0..pts.len() - 1 {
        let ds = pts[i + 1] - pts[i];
        let df = vals[i + 1] - vals[i];
        let excess = df.abs() - lip * ds;
        if worst_lip.is_none_or(|(_, w)| excess > w) {
            worst_lip = Some((pts[i + 1], excess));
        }
        // s -> lip*s - r(s) must not decrease
        let drop = -(lip * ds - df);
        if worst_shift.is_none_or(|(_, w)| drop > w) {
            worst_shift = Some((pts[i + 1], drop));
        }
    }
    let ok = |w: Option<(f64, f64)>| w.is_none_or(|(_, v)| v <= ASSUMPTION_TOL);
    let (lip_desc, shift_desc) = match r.role() {
        ReactionRole::Field => (
            "|f(x) - f(y)| <= L_f |x - y| on the working interval",
            "s -> lambda s - f(s) is nondecreasing for lambda = L_f",
        ),
        ReactionRole::Road => (
            "|g(x) - g(y)| <= L_g |x - y| on the working interval",
            "s -> eta s - g(s) is nondecreasing for eta = L_g",
        ),
    };
    report.push(id_lip, lip_desc, ok(worst_lip), worst_lip);
    report.push(id_shift, shift_desc, ok(worst_shift), worst_shift);
}

/// Runs every standing assumption of the one-road model.
///
/// Never fails; a report with failed entries must not be handed to a solver.
pub fn validate_params(p: &ModelParams, f: &Reaction, g: &Reaction) -> ValidationReport {
    let mut report = ValidationReport::default();
    let bad = p.first_nonpositive();
    report.push(
        "positive_constants",
        "D, D', mu, nu, ell, L, m are positive",
        bad.is_none(),
        bad.map(|(_, v)| (v, v)),
    );
    let margin = p.nu / p.mu - p.m;
    report.push("road_cap", "m >= nu / mu", margin <= ASSUMPTION_TOL, Some((p.m, margin)));
    let k = p.box_cap();
    report.push("box_cap", "k = (mu/nu) m >= 1", k >= 1.0 - ASSUMPTION_TOL, Some((k, 1.0 - k)));

    check_field_reaction(&mut report, f, k);
    check_lipschitz(&mut report, f, "f_lipschitz", "f_shift_monotone");
    check_road_reaction(&mut report, g, p.m, "g_zero", "g_at_cap");
    check_lipschitz(&mut report, g, "g_lipschitz", "g_shift_monotone");
    report
}

pub(crate) fn check_road_reaction(
    report: &mut ValidationReport,
    g: &Reaction,
    cap: f64,
    id_zero: &'static str,
    id_cap: &'static str,
) {
    let g0 = g.eval(0.0);
    report.push(
        id_zero,
        "road reaction vanishes at 0",
        g0.abs() <= ASSUMPTION_TOL,
        Some((0.0, g0)),
    );
    let gm = g.eval(cap);
    report.push(
        id_cap,
        "road reaction is <= 0 at the road cap",
        gm <= ASSUMPTION_TOL,
        Some((cap, gm)),
    );
}
