//! Principal Dirichlet eigenpair of the box, the KPP smallness condition and
//! the amplitude of the positive subsolution `ε φ₁`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{FieldFunction, FieldGrid};
use crate::linsolve::{dot, norm2, solve_spd_from, SolveOptions, SparseOperator};
use crate::model::{ModelParams, Reaction};

/// Safety factor applied to the bisected amplitude.
pub const EPSILON_SAFETY: f64 = 0.99;

/// `(π / 2ℓ)² + (π / L)²`.
pub fn lambda1_closed_form(ell: f64, height: f64) -> f64 {
    (PI / (2.0 * ell)).powi(2) + (PI / height).powi(2)
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub lambda1: f64,
    /// Normalized so that the value at `(0, L/2)` is one.
    pub phi1: FieldFunction,
}

/// Nodal samples of `sin(π(x1 + ℓ)/(2ℓ)) sin(π x2 / L)` with the closed-form
/// eigenvalue. Needs even `nx` and `ny` so that `(0, L/2)` is a node.
pub fn phi1_exact(grid: &FieldGrid) -> Result<EigenPair> {
    if !grid.nx.is_multiple_of(2) || !grid.ny.is_multiple_of(2) {
        return Err(Error::GridMismatch(format!(
            "phi1 needs even nx and ny to contain (0, L/2), got {}x{}",
            grid.nx, grid.ny
        )));
    }
    let (ell, l) = (grid.ell, grid.height);
    let mut phi1 = FieldFunction::zeros(grid);
    // Boundary nodes stay exactly zero; the formula only rounds to zero there.
    for j in 1..grid.ny {
        for i in 1..grid.nx {
            let v = (PI * (grid.x1(i) + ell) / (2.0 * ell)).sin() * (PI * grid.x2(j) / l).sin();
            phi1.set(i, j, v);
        }
    }
    phi1.set(grid.nx / 2, grid.ny / 2, 1.0);
    Ok(EigenPair {
        lambda1: lambda1_closed_form(ell, l),
        phi1,
    })
}

/// Five-point Dirichlet Laplacian `-Δ_h` on the strictly interior nodes.
fn dirichlet_laplacian(grid: &FieldGrid) -> Result<SparseOperator> {
    let (nx, ny) = (grid.nx, grid.ny);
    let cx = 1.0 / (grid.h1 * grid.h1);
    let cy = 1.0 / (grid.h2 * grid.h2);
    let idx = |i: usize, j: usize| (j - 1) * (nx - 1) + (i - 1);
    let mut rows = Vec::with_capacity((nx - 1) * (ny - 1));
    for j in 1..ny {
        for i in 1..nx {
            let mut row = vec![(idx(i, j), 2.0 * cx + 2.0 * cy)];
            if i > 1 {
                row.push((idx(i - 1, j), -cx));
            }
            if i + 1 < nx {
                row.push((idx(i + 1, j), -cx));
            }
            if j > 1 {
                row.push((idx(i, j - 1), -cy));
            }
            if j + 1 < ny {
                row.push((idx(i, j + 1), -cy));
            }
            rows.push(row);
        }
    }
    SparseOperator::from_rows(rows)
}

/// Smallest eigenvalue of the discrete Dirichlet Laplacian together with its
/// eigenvector (scaled to unit sup norm, non-negative).
pub fn discrete_eigenpair(grid: &FieldGrid, tol: f64) -> Result<(f64, FieldFunction)> {
    const MAX_ITER: usize = 1000;
    let a = dirichlet_laplacian(grid)?;
    let n = a.dim();
    let opts = SolveOptions {
        rel_tol: 1e-13,
        ..SolveOptions::default()
    };
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut y = vec![0.0; n];
    let mut rq_prev = f64::INFINITY;
    let mut rq = f64::INFINITY;
    let mut converged = false;
    for _ in 0..MAX_ITER {
        y.copy_from_slice(&x);
        solve_spd_from(&a, &x, &mut y, &opts)?;
        let ny = norm2(&y);
        x.iter_mut().zip(&y).for_each(|(xi, yi)| *xi = yi / ny);
        rq = dot(&x, &a.mul(&x));
        if (rq - rq_prev).abs() <= tol * rq.abs() {
            converged = true;
            break;
        }
        rq_prev = rq;
    }
    if !converged {
        return Err(Error::NonConvergence {
            what: "inverse power iteration",
            limit: MAX_ITER,
            last_step: (rq - rq_prev).abs(),
        });
    }
    let scale = x.iter().fold(0.0_f64, |m, v| if v.abs() > m.abs() { *v } else { m });
    let mut phi = FieldFunction::zeros(grid);
    let mut k = 0;
    for j in 1..grid.ny {
        for i in 1..grid.nx {
            phi.set(i, j, x[k] / scale);
            k += 1;
        }
    }
    Ok((rq, phi))
}

/// Smallest eigenvalue of the discrete Dirichlet Laplacian by inverse power
/// iteration; `tol` bounds the relative change of the Rayleigh quotient.
pub fn discrete_lambda1(grid: &FieldGrid, tol: f64) -> Result<f64> {
    discrete_eigenpair(grid, tol).map(|(l, _)| l)
}

/// Probe ladder `10^-1, ..., 10^-8`.
pub fn default_probes() -> Vec<f64> {
    (1..=8).map(|k| 10f64.powi(-k)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct KppReport {
    pub passed: bool,
    pub lambda1: f64,
    /// `(s, f(s) / (D s))` for every probe.
    pub probes: Vec<(f64, f64)>,
}

/// Checks `λ₁ <= f(s) / (D s)` at every probe `s`.
pub fn kpp_condition(p: &ModelParams, f: &Reaction, probes: &[f64]) -> KppReport {
    let lambda1 = lambda1_closed_form(p.ell, p.height);
    let probes: Vec<(f64, f64)> = probes.iter().map(|&s| (s, f.eval(s) / (p.d * s))).collect();
    let passed = !probes.is_empty() && probes.iter().all(|&(_, r)| lambda1 <= r);
    KppReport { passed, lambda1, probes }
}

/// Largest `ε` in `(0, k]` with `D λ₁ ε φ₁ <= f(ε φ₁)` at every node of
/// `grid`, times [`EPSILON_SAFETY`]. `λ₁` is the closed form for the grid's
/// box.
pub fn choose_epsilon(p: &ModelParams, f: &Reaction, grid: &FieldGrid) -> Result<f64> {
    let pair = phi1_exact(grid)?;
    epsilon_for(p.d, pair.lambda1, &pair.phi1, f, p.box_cap())
}

/// [`choose_epsilon`] for an explicit eigenpair.
pub fn epsilon_for(d: f64, lambda1: f64, phi1: &FieldFunction, f: &Reaction, cap: f64) -> Result<f64> {
    const FLOOR: f64 = 1e-12;
    let admissible = |eps: f64| {
        phi1.values().iter().all(|&phi| {
            let s = eps * phi;
            d * lambda1 * s <= f.eval(s)
        })
    };
    if admissible(cap) {
        return Ok(EPSILON_SAFETY * cap);
    }
    let mut bad = cap;
    let mut good = cap / 2.0;
    while !admissible(good) {
        bad = good;
        good /= 2.0;
        if good < FLOOR {
            return Err(Error::NoEpsilon(format!(
                "D λ₁ ε φ₁ <= f(ε φ₁) fails for every ε down to {FLOOR:e} (D λ₁ = {:e})",
                d * lambda1
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (good + bad);
        if mid <= good || mid >= bad {
            break;
        }
        if admissible(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(EPSILON_SAFETY * good)
}
