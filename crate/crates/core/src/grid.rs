//! Node-centred uniform grids on `(-ell, ell) x (0, L)` and the discrete field
//! and road functions living on them.
//!
//! Node `(i, j)` sits at `x1 = -ell + i h1`, `x2 = j h2` with `0 <= i <= nx` and
//! `0 <= j <= ny`. The bottom row `j = 0` (corners excluded) is the road. In
//! two-road mode the top row `j = ny` is a second road; otherwise it is part of
//! the Dirichlet boundary together with the lateral sides.
//!
//! Functions store every node, boundary nodes included, so that traces,
//! restrictions and quadrature need no special casing. Solver outputs keep the
//! Dirichlet nodes at zero.

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};

/// Number of exchange boundaries of the field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RoadMode {
    One,
    Two,
}

/// Which horizontal side a road lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bottom,
    Top,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeTag {
    Interior,
    /// Bottom road row, corners excluded.
    Road,
    /// Top road row in two-road mode, corners excluded.
    TopRoad,
    Dirichlet,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FieldGrid {
    pub ell: f64,
    #[serde(rename = "L")]
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    pub h1: f64,
    pub h2: f64,
    pub mode: RoadMode,
}

impl FieldGrid {
    pub fn new(ell: f64, height: f64, nx: usize, ny: usize, mode: RoadMode) -> Result<Self> {
        if !(ell.is_finite() && ell > 0.0 && height.is_finite() && height > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid dimensions must be positive (ell={ell}, L={height})"
            )));
        }
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidParameter(format!("need nx, ny >= 4 (got {nx} x {ny})")));
        }
        Ok(FieldGrid {
            ell,
            height,
            nx,
            ny,
            h1: 2.0 * ell / nx as f64,
            h2: height / ny as f64,
            mode,
        })
    }

    #[inline]
    pub fn x1(&self, i: usize) -> f64 {
        if i == self.nx {
            self.ell
        } else {
            -self.ell + i as f64 * self.h1
        }
    }

    #[inline]
    pub fn x2(&self, j: usize) -> f64 {
        if j == self.ny {
            self.height
        } else {
            j as f64 * self.h2
        }
    }

    pub fn tag(&self, i: usize, j: usize) -> NodeTag {
        if i == 0 || i == self.nx {
            NodeTag::Dirichlet
        } else if j == 0 {
            NodeTag::Road
        } else if j == self.ny {
            match self.mode {
                RoadMode::One => NodeTag::Dirichlet,
                RoadMode::Two => NodeTag::TopRoad,
            }
        } else {
            NodeTag::Interior
        }
    }

    /// Total number of nodes.
    #[inline]
    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    /// Flat index of node `(i, j)`; rows are contiguous.
    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// Rows holding unknowns: `0..ny` (one road) or `0..=ny` (two roads).
    #[inline]
    pub fn unknown_rows(&self) -> std::ops::Range<usize> {
        match self.mode {
            RoadMode::One => 0..self.ny,
            RoadMode::Two => 0..self.ny + 1,
        }
    }

    #[inline]
    pub fn n_unknowns(&self) -> usize {
        (self.nx - 1) * self.unknown_rows().len()
    }

    /// Index of `(i, j)` in the unknown vector, if it is an unknown.
    #[inline]
    pub fn unknown(&self, i: usize, j: usize) -> Option<usize> {
        if i == 0 || i >= self.nx || !self.unknown_rows().contains(&j) {
            None
        } else {
            Some(j * (self.nx - 1) + i - 1)
        }
    }

    /// Iterates `(i, j)` over the unknowns in unknown-vector order.
    pub fn unknowns(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.unknown_rows().flat_map(move |j| (1..self.nx).map(move |i| (i, j)))
    }

    /// Row index of the road on `side`.
    pub fn road_row(&self, side: Side) -> Result<usize> {
        match (side, self.mode) {
            (Side::Bottom, _) => Ok(0),
            (Side::Top, RoadMode::Two) => Ok(self.ny),
            (Side::Top, RoadMode::One) => Err(Error::GridMismatch("top road requested on a one-road grid".to_string())),
        }
    }

    /// Same geometry with the other road mode.
    pub fn with_mode(&self, mode: RoadMode) -> Self {
        FieldGrid { mode, ..*self }
    }
}

/// Nodal values of the field density.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldFunction {
    grid: FieldGrid,
    values: Vec<f64>,
}

impl FieldFunction {
    pub fn zeros(grid: &FieldGrid) -> Self {
        FieldFunction {
            grid: *grid,
            values: vec![0.0; grid.n_nodes()],
        }
    }

    /// `c` at every unknown node, zero on the Dirichlet boundary.
    pub fn constant(grid: &FieldGrid, c: f64) -> Self {
        Self::from_fn(grid, |_, _| c)
    }

    /// Samples `f(x1, x2)` at the unknown nodes; Dirichlet nodes stay zero.
    pub fn from_fn(grid: &FieldGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut v = Self::zeros(grid);
        for (i, j) in grid.unknowns() {
            v.values[grid.node(i, j)] = f(grid.x1(i), grid.x2(j));
        }
        v
    }

    /// Rebuilds a function from a vector over the unknowns.
    pub fn from_unknowns(grid: &FieldGrid, x: &[f64]) -> Self {
        assert_eq!(x.len(), grid.n_unknowns(), "unknown vector has the wrong length");
        let mut v = Self::zeros(grid);
        for (k, (i, j)) in grid.unknowns().enumerate() {
            v.values[grid.node(i, j)] = x[k];
        }
        v
    }

    /// Builds a function from all nodal values (row-major).
    pub fn from_nodes(grid: &FieldGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "expected {} nodal values, got {}",
                grid.n_nodes(),
                values.len()
            )));
        }
        Ok(FieldFunction { grid: *grid, values })
    }

    pub fn to_unknowns(&self) -> Vec<f64> {
        self.grid.unknowns().map(|(i, j)| self.at(i, j)).collect()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.node(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let n = self.grid.node(i, j);
        self.values[n] = value;
    }

    pub fn grid(&self) -> &FieldGrid {
        &self.grid
    }

    /// All nodal values, row-major.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, c: f64) -> Self {
        FieldFunction {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// `max |self - other|` over all nodes.
    pub fn sup_distance(&self, other: &FieldFunction) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "grids differ");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    /// Smallest value of `other - self` over all nodes; non-negative iff
    /// `self <= other` everywhere.
    pub fn min_gap_to(&self, other: &FieldFunction) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "grids differ");
        self.values
            .iter()
            .zip(&other.values)
            .fold(f64::INFINITY, |m, (a, b)| f64::min(m, b - a))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes `x1,x2,value` rows, row-major, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x1,x2,value")?;
        let g = &self.grid;
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                writeln!(out, "{:.16e},{:.16e},{:.16e}", g.x1(i), g.x2(j), self.at(i, j))?;
            }
        }
        Ok(())
    }
}

/// Nodal values of a road density, endpoints included.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadFunction {
    grid: FieldGrid,
    side: Side,
    values: Vec<f64>,
}

impl RoadFunction {
    pub fn zeros(grid: &FieldGrid, side: Side) -> Self {
        RoadFunction {
            grid: *grid,
            side,
            values: vec![0.0; grid.nx + 1],
        }
    }

    /// `c` at the interior road nodes, zero at both endpoints.
    pub fn constant(grid: &FieldGrid, side: Side, c: f64) -> Self {
        Self::from_fn(grid, side, |_| c)
    }

    pub fn from_fn(grid: &FieldGrid, side: Side, f: impl Fn(f64) -> f64) -> Self {
        let mut u = Self::zeros(grid, side);
        for i in 1..grid.nx {
            u.values[i] = f(grid.x1(i));
        }
        u
    }

    /// From the `nx - 1` interior values.
    pub fn from_interior(grid: &FieldGrid, side: Side, x: &[f64]) -> Self {
        assert_eq!(x.len(), grid.nx - 1, "road vector has the wrong length");
        let mut u = Self::zeros(grid, side);
        u.values[1..grid.nx].copy_from_slice(x);
        u
    }

    /// From all `nx + 1` nodal values.
    pub fn from_nodes(grid: &FieldGrid, side: Side, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nx + 1 {
            return Err(Error::GridMismatch(format!(
                "expected {} road values, got {}",
                grid.nx + 1,
                values.len()
            )));
        }
        Ok(RoadFunction {
            grid: *grid,
            side,
            values,
        })
    }

    pub fn grid(&self) -> &FieldGrid {
        &self.grid
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interior(&self) -> &[f64] {
        &self.values[1..self.grid.nx]
    }

    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        self.values[i] = value;
    }

    pub fn sup_distance(&self, other: &RoadFunction) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "grids differ");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    /// Smallest value of `other - self`.
    pub fn min_gap_to(&self, other: &RoadFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(f64::INFINITY, |m, (a, b)| f64::min(m, b - a))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes `x1,value` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x1,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e}", self.grid.x1(i), v)?;
        }
        Ok(())
    }

    /// Reads an `x1,value` file whose abscissae match the grid nodes.
    pub fn read_csv<R: BufRead>(grid: &FieldGrid, side: Side, input: R) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.nx + 1);
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("x1")) {
                continue;
            }
            let bad = || Error::InvalidParameter(format!("road CSV line {}: cannot parse `{line}`", lineno + 1));
            let (x, v) = line.split_once(',').ok_or_else(bad)?;
            let x: f64 = x.trim().parse().map_err(|_| bad())?;
            let v: f64 = v.trim().parse().map_err(|_| bad())?;
            let i = values.len();
            if i > grid.nx || (x - grid.x1(i)).abs() > 1e-9 * grid.ell.max(1.0) {
                return Err(Error::GridMismatch(format!(
                    "road CSV line {}: x1 = {x} does not match grid node {i}",
                    lineno + 1
                )));
            }
            values.push(v);
        }
        Self::from_nodes(grid, side, values)
    }
}

/// Values of `v` along the road on `side`.
pub fn trace_to_road(v: &FieldFunction, side: Side) -> Result<RoadFunction> {
    let g = v.grid();
    let j = g.road_row(side)?;
    let values = (0..=g.nx).map(|i| v.at(i, j)).collect();
    RoadFunction::from_nodes(g, side, values)
}

/// Column offset of the sub-grid of half-width `ell0`, checking node alignment.
fn restriction_offset(g: &FieldGrid, ell0: f64) -> Result<(usize, usize)> {
    if !(ell0 > 0.0 && ell0 <= g.ell * (1.0 + 1e-12)) {
        return Err(Error::GridMismatch(format!(
            "cannot restrict from ell = {} to ell0 = {ell0}",
            g.ell
        )));
    }
    let shift = (g.ell - ell0) / g.h1;
    let r = shift.round();
    if (shift - r).abs() > 1e-8 * shift.max(1.0) {
        return Err(Error::GridMismatch(format!(
            "ell - ell0 = {} is not a multiple of h1 = {}",
            g.ell - ell0,
            g.h1
        )));
    }
    let r = r as usize;
    if g.nx < 2 * r + 4 {
        return Err(Error::GridMismatch(format!(
            "sub-grid for ell0 = {ell0} has fewer than 4 cells"
        )));
    }
    Ok((r, g.nx - 2 * r))
}

/// Copies `v` onto the nodes of `(-ell0, ell0) x (0, L)`.
///
/// The lateral boundary nodes of the result carry the source values, so the
/// restriction of a solution is an H¹ function on the smaller box rather than a
/// member of its Dirichlet space.
pub fn restrict(v: &FieldFunction, ell0: f64) -> Result<FieldFunction> {
    let g = v.grid();
    let (r, nx0) = restriction_offset(g, ell0)?;
    let sub = FieldGrid::new(ell0, g.height, nx0, g.ny, g.mode)?;
    let mut out = FieldFunction::zeros(&sub);
    for j in 0..=g.ny {
        for i in 0..=nx0 {
            out.set(i, j, v.at(i + r, j));
        }
    }
    Ok(out)
}

/// Road counterpart of [`restrict`].
pub fn restrict_road(u: &RoadFunction, ell0: f64) -> Result<RoadFunction> {
    let g = u.grid();
    let (r, nx0) = restriction_offset(g, ell0)?;
    let sub = FieldGrid::new(ell0, g.height, nx0, g.ny, g.mode)?;
    RoadFunction::from_nodes(&sub, u.side(), u.values()[r..=r + nx0].to_vec())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FieldNorms {
    pub sup: f64,
    pub l2: f64,
    pub h1_semi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RoadNorms {
    pub sup: f64,
    pub l2: f64,
    pub h1: f64,
}

/// Trapezoid weight of index `k` on `0..=n`.
#[inline]
pub(crate) fn trap_weight(k: usize, n: usize) -> f64 {
    if k == 0 || k == n {
        0.5
    } else {
        1.0
    }
}

/// Sup norm, trapezoidal L² norm and H¹ seminorm of a field function.
///
/// The seminorm sums squared edge differences, each weighted by the area of
/// its dual edge with half weights on boundary lines.
pub fn norms(v: &FieldFunction) -> FieldNorms {
    let g = v.grid();
    let (nx, ny) = (g.nx, g.ny);
    let mut sup: f64 = 0.0;
    let mut l2 = 0.0;
    for j in 0..=ny {
        for i in 0..=nx {
            let x = v.at(i, j);
            sup = sup.max(x.abs());
            l2 += trap_weight(i, nx) * trap_weight(j, ny) * x * x;
        }
    }
    l2 *= g.h1 * g.h2;
    let mut semi = 0.0;
    for j in 0..=ny {
        let w = trap_weight(j, ny) * g.h2 / g.h1;
        for i in 0..nx {
            let d = v.at(i + 1, j) - v.at(i, j);
            semi += w * d * d;
        }
    }
    for i in 0..=nx {
        let w = trap_weight(i, nx) * g.h1 / g.h2;
        for j in 0..ny {
            let d = v.at(i, j + 1) - v.at(i, j);
            semi += w * d * d;
        }
    }
    FieldNorms {
        sup,
        l2: l2.sqrt(),
        h1_semi: semi.sqrt(),
    }
}

/// Sup norm, trapezoidal L² norm and full H¹ norm of a road function.
pub fn road_norms(u: &RoadFunction) -> RoadNorms {
    let g = u.grid();
    let vals = u.values();
    let n = vals.len() - 1;
    let sup = vals.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let l2: f64 = vals.iter().enumerate().map(|(i, x)| trap_weight(i, n) * x * x).sum::<f64>() * g.h1;
    let semi: f64 = vals.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / g.h1;
    RoadNorms {
        sup,
        l2: l2.sqrt(),
        h1: (l2 + semi).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(ell: f64, l: f64, nx: usize, ny: usize, mode: RoadMode) -> FieldGrid {
        FieldGrid::new(ell, l, nx, ny, mode).unwrap()
    }

    #[test]
    fn smallest_grid_counts() {
        let g = grid(1.0, 1.0, 4, 4, RoadMode::One);
        assert_eq!(g.h1, 0.5);
        assert_eq!(g.h2, 0.25);
        let road = g.unknowns().filter(|&(i, j)| g.tag(i, j) == NodeTag::Road).count();
        let interior = g.unknowns().filter(|&(i, j)| g.tag(i, j) == NodeTag::Interior).count();
        assert_eq!(road, 3);
        assert_eq!(interior, 9);
        assert_eq!(g.n_unknowns(), 12);
        let g = grid(2.0, 1.0, 8, 4, RoadMode::One);
        assert_eq!(g.h1, 0.5);
    }

    #[test]
    fn two_road_tags_top_row() {
        let g = grid(1.0, 1.0, 4, 4, RoadMode::Two);
        for i in 1..4 {
            assert_eq!(g.tag(i, 4), NodeTag::TopRoad);
        }
        assert_eq!(g.tag(0, 4), NodeTag::Dirichlet);
        assert_eq!(g.tag(4, 0), NodeTag::Dirichlet);
        assert_eq!(g.n_unknowns(), 15);
        let g1 = g.with_mode(RoadMode::One);
        assert_eq!(g1.tag(2, 4), NodeTag::Dirichlet);
    }

    #[test]
    fn rejects_tiny_or_degenerate_grids() {
        assert!(FieldGrid::new(1.0, 1.0, 3, 4, RoadMode::One).is_err());
        assert!(FieldGrid::new(0.0, 1.0, 4, 4, RoadMode::One).is_err());
        assert!(FieldGrid::new(1.0, -1.0, 4, 4, RoadMode::One).is_err());
    }

    #[test]
    fn unknown_roundtrip_and_ordering() {
        let g = grid(1.0, 1.0, 6, 5, RoadMode::Two);
        for (k, (i, j)) in g.unknowns().enumerate() {
            assert_eq!(g.unknown(i, j), Some(k));
        }
        let x: Vec<f64> = (0..g.n_unknowns()).map(|k| k as f64).collect();
        assert_eq!(FieldFunction::from_unknowns(&g, &x).to_unknowns(), x);
    }

    #[test]
    fn trace_of_constant_and_of_sine() {
        let g = grid(1.0, 1.0, 8, 8, RoadMode::One);
        let v = FieldFunction::constant(&g, 0.3);
        let t = trace_to_road(&v, Side::Bottom).unwrap();
        assert!(t.interior().iter().all(|&x| x == 0.3));
        assert_eq!(t.at(0), 0.0);
        let s = FieldFunction::from_fn(&g, |x1, x2| (x1 + 1.0).sin() * (std::f64::consts::PI * x2).sin());
        let t = trace_to_road(&s, Side::Bottom).unwrap();
        assert!(t.values().iter().all(|&x| x == 0.0));
        assert!(trace_to_road(&v, Side::Top).is_err());
    }

    #[test]
    fn trace_extracts_row_zero() {
        let g = grid(1.0, 1.0, 4, 4, RoadMode::Two);
        let x: Vec<f64> = (0..g.n_unknowns()).map(|k| (k as f64 * 0.37).sin()).collect();
        let v = FieldFunction::from_unknowns(&g, &x);
        let t = trace_to_road(&v, Side::Bottom).unwrap();
        assert_eq!(t.interior(), &x[0..3]);
        let top = trace_to_road(&v, Side::Top).unwrap();
        assert_eq!(top.interior(), &x[12..15]);
    }

    #[test]
    fn restriction_copies_common_nodes() {
        let g = grid(2.0, 1.0, 16, 4, RoadMode::One);
        let v = FieldFunction::from_fn(&g, |x1, x2| x1 * 10.0 + x2);
        let r = restrict(&v, 1.0).unwrap();
        assert_eq!(r.grid().nx, 8);
        for j in 0..=4 {
            for i in 0..=8 {
                assert_eq!(r.at(i, j), v.at(i + 4, j));
            }
        }
        assert_eq!(restrict(&v, 2.0).unwrap(), v);
        let c = FieldFunction::constant(&g, 0.7);
        let rc = restrict(&c, 1.0).unwrap();
        for (i, j) in rc.grid().unknowns() {
            assert_eq!(rc.at(i, j), 0.7);
        }
    }

    #[test]
    fn restriction_rejects_misaligned_targets() {
        let g = grid(2.0, 1.0, 16, 4, RoadMode::One);
        let v = FieldFunction::zeros(&g);
        assert!(restrict(&v, 1.1).is_err());
        assert!(restrict(&v, 3.0).is_err());
        assert!(restrict(&v, 0.25).is_err());
    }

    #[test]
    fn trace_commutes_with_restriction() {
        let g = grid(3.0, 2.0, 24, 8, RoadMode::One);
        let v = FieldFunction::from_fn(&g, |x1, x2| (x1 * 0.7).cos() + x2 * x2);
        let a = trace_to_road(&restrict(&v, 1.5).unwrap(), Side::Bottom).unwrap();
        let b = restrict_road(&trace_to_road(&v, Side::Bottom).unwrap(), 1.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_has_zero_norms() {
        let g = grid(1.0, 1.0, 8, 8, RoadMode::One);
        let n = norms(&FieldFunction::zeros(&g));
        assert_eq!((n.sup, n.l2, n.h1_semi), (0.0, 0.0, 0.0));
        let r = road_norms(&RoadFunction::zeros(&g, Side::Bottom));
        assert_eq!((r.sup, r.l2, r.h1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn unit_function_l2_tends_to_area() {
        // Dirichlet zeros on three sides pull the trapezoid sum below the area
        // by O(h); the defect must shrink under refinement.
        let mut prev = f64::INFINITY;
        for n in [8, 32, 128] {
            let g = grid(0.5, 1.0, n, n, RoadMode::One);
            let l2sq = norms(&FieldFunction::constant(&g, 1.0)).l2.powi(2);
            let defect = (1.0 - l2sq).abs();
            assert!(defect < prev);
            prev = defect;
        }
        assert!(prev < 0.02);
    }

    #[test]
    fn hat_function_road_norms() {
        // nodes at -1, -0.5, 0, 0.5, 1 with a unit hat on [-1, 1]
        let g = grid(1.0, 1.0, 4, 4, RoadMode::One);
        let u = RoadFunction::from_fn(&g, Side::Bottom, |x| 1.0 - x.abs());
        let n = road_norms(&u);
        // ∫ (u')² = 2 exactly for a piecewise-linear hat; trapezoid L² sum is
        // 0.5 * (0.25 + 1 + 0.25) = 0.75
        assert!((n.l2.powi(2) - 0.75).abs() < 1e-14);
        assert!((n.h1.powi(2) - 2.75).abs() < 1e-14);
        assert_eq!(n.sup, 1.0);
    }

    #[test]
    fn norms_are_homogeneous() {
        let g = grid(1.5, 1.0, 12, 8, RoadMode::Two);
        let v = FieldFunction::from_fn(&g, |x1, x2| (x1 * 3.0).sin() + x2);
        let a = norms(&v);
        let b = norms(&v.scaled(-2.5));
        assert!((b.sup - 2.5 * a.sup).abs() <= 1e-14 * b.sup);
        assert!((b.l2 - 2.5 * a.l2).abs() <= 1e-14 * b.l2);
        assert!((b.h1_semi - 2.5 * a.h1_semi).abs() <= 1e-14 * b.h1_semi);
    }

    #[test]
    fn road_csv_roundtrip() {
        let g = grid(1.0, 1.0, 6, 4, RoadMode::One);
        let u = RoadFunction::from_fn(&g, Side::Bottom, |x| 0.25 * (1.0 - x * x));
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let back = RoadFunction::read_csv(&g, Side::Bottom, buf.as_slice()).unwrap();
        assert_eq!(back, u);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1,value\n-1.0000000000000000e0,"));
    }

    #[test]
    fn field_csv_layout() {
        let g = grid(1.0, 1.0, 4, 4, RoadMode::One);
        let v = FieldFunction::constant(&g, 1.0);
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "x1,x2,value");
        assert_eq!(lines.len(), 1 + 25);
        // second node of the first row is the first road unknown
        assert!(lines[2].ends_with(",1.0000000000000000e0"));
    }
}
