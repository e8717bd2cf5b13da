//! Discrete model: uniform cell grids, node sets, fields with a far-field
//! constant, kernel parameters, and the assembled pairwise weights.
//!
//! A field is piecewise constant on the cells of an axis-aligned box and equal
//! to `far` on the complement of the box. With that convention the energy
//! double integral becomes a double sum over cell pairs plus one far-field
//! coefficient per cell.
//!
//! Units: lengths are in box units, pair weights carry `length^(n - sp)`, and
//! far-field weights (tail integral times the cell measure) carry the same
//! units, so energies and residuals are directly comparable across nodes.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, GAUSS4_NODES, GAUSS4_WEIGHTS};

pub type Point = [f64; 2];

pub const DEFAULT_MAX_NODES: usize = 4096;

/// Relative slack used when comparing kernel values against the Λ-bounds.
const ELLIPTICITY_SLACK: f64 = 1e-12;

#[derive(Clone)]
pub struct RadialProfile {
    label: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl RadialProfile {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        RadialProfile { label: label.into(), f: Arc::new(f) }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, r: f64) -> f64 {
        (self.f)(r)
    }
}

impl fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RadialProfile({})", self.label)
    }
}

/// Interaction kernel `k(x, y)`, always a function of `|x - y|`.
#[derive(Clone, Debug, Default)]
pub enum Kernel {
    /// `|x - y|^(-n - sp)`
    #[default]
    Standard,
    Custom(RadialProfile),
}

#[derive(Clone, Debug)]
pub struct FracParams {
    pub s: f64,
    pub p: f64,
    /// Ellipticity constant Λ.
    pub lambda: f64,
    pub kernel: Kernel,
}

impl FracParams {
    /// Standard kernel with Λ = 1.
    pub fn new(s: f64, p: f64) -> Result<Self> {
        Self::with_kernel(s, p, 1.0, Kernel::Standard)
    }

    pub fn with_kernel(s: f64, p: f64, lambda: f64, kernel: Kernel) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Params(format!("s must lie in (0,1), got {s}")));
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::Params(format!("p must lie in (1,inf), got {p}")));
        }
        if !(lambda >= 1.0 && lambda.is_finite()) {
            return Err(Error::Params(format!("lambda must be >= 1, got {lambda}")));
        }
        Ok(FracParams { s, p, lambda, kernel })
    }

    pub fn sp(&self) -> f64 {
        self.s * self.p
    }

    pub fn is_standard(&self) -> bool {
        matches!(self.kernel, Kernel::Standard)
    }

    /// Same `s` and `p` with the kernel pinned to `|x - y|^(-n - sp)`.
    pub fn standard(&self) -> FracParams {
        FracParams { s: self.s, p: self.p, lambda: 1.0, kernel: Kernel::Standard }
    }

    /// Kernel value at distance `r` in dimension `dim`, checked against the Λ-bounds.
    fn kernel_at(&self, dim: usize, r: f64) -> Result<f64> {
        let expo = dim as f64 + self.sp();
        match &self.kernel {
            Kernel::Standard => Ok(r.powf(-expo)),
            Kernel::Custom(profile) => {
                let k = profile.eval(r);
                let m = k * r.powf(expo);
                let lo = (1.0 - ELLIPTICITY_SLACK) / self.lambda;
                let hi = (1.0 + ELLIPTICITY_SLACK) * self.lambda;
                if !(m >= lo && m <= hi) {
                    return Err(Error::Ellipticity(format!(
                        "k({r}) * r^(n+sp) = {m} is outside [{}, {}]",
                        1.0 / self.lambda,
                        self.lambda
                    )));
                }
                Ok(k)
            }
        }
    }
}

/// Uniform lattice of cell centers covering an axis-aligned box.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    h: f64,
    lo: Point,
    hi: Point,
    counts: [usize; 2],
}

/// Builds the grid of cell centers for `bounds` (one `(lo, hi)` per axis).
pub fn build_grid(bounds: &[(f64, f64)], h: f64, dim: usize) -> Result<Grid> {
    Grid::with_limit(bounds, h, dim, DEFAULT_MAX_NODES)
}

impl Grid {
    pub fn with_limit(bounds: &[(f64, f64)], h: f64, dim: usize, max_nodes: usize) -> Result<Grid> {
        if dim != 1 && dim != 2 {
            return Err(Error::Size(format!("dimension must be 1 or 2, got {dim}")));
        }
        if bounds.len() != dim {
            return Err(Error::Degenerate(format!("expected {dim} axis bounds, got {}", bounds.len())));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Size(format!("spacing must be positive, got {h}")));
        }
        let mut lo = [0.0; 2];
        let mut hi = [0.0; 2];
        let mut counts = [1usize; 2];
        for (axis, &(a, b)) in bounds.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::Degenerate(format!("axis {axis}: [{a}, {b}]")));
            }
            let cells = (b - a) / h;
            let rounded = cells.round();
            if rounded < 1.0 || (rounded - cells).abs() > 1e-3 {
                return Err(Error::Size(format!(
                    "spacing {h} does not divide axis {axis} of length {}",
                    b - a
                )));
            }
            lo[axis] = a;
            hi[axis] = b;
            counts[axis] = rounded as usize;
        }
        let total = counts[0] * counts[1];
        if total > max_nodes {
            return Err(Error::Size(format!("{total} nodes exceed the limit of {max_nodes}")));
        }
        Ok(Grid { dim, h, lo, hi, counts })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counts(&self) -> [usize; 2] {
        self.counts
    }

    pub fn lo(&self) -> Point {
        self.lo
    }

    pub fn hi(&self) -> Point {
        self.hi
    }

    pub fn cell_measure(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Row-major: the x index varies fastest.
    pub fn multi_index(&self, i: usize) -> [usize; 2] {
        [i % self.counts[0], i / self.counts[0]]
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.counts[0] + ix
    }

    pub fn center(&self, i: usize) -> Point {
        let [ix, iy] = self.multi_index(i);
        let x = self.lo[0] + (ix as f64 + 0.5) * self.h;
        if self.dim == 1 {
            [x, 0.0]
        } else {
            [x, self.lo[1] + (iy as f64 + 0.5) * self.h]
        }
    }

    pub fn centers(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(|i| self.center(i))
    }

    pub fn distance(&self, a: Point, b: Point) -> f64 {
        let dx = a[0] - b[0];
        let dy = if self.dim == 2 { a[1] - b[1] } else { 0.0 };
        dx.hypot(dy)
    }

    pub fn in_box(&self, x: Point) -> bool {
        (0..self.dim).all(|k| x[k] >= self.lo[k] && x[k] <= self.hi[k])
    }

    /// The same lattice with every length multiplied by `t`.
    pub fn scaled(&self, t: f64) -> Grid {
        let mut g = self.clone();
        g.h *= t;
        for k in 0..2 {
            g.lo[k] *= t;
            g.hi[k] *= t;
        }
        g
    }

    /// Gap between the closed cells of nodes `i` and `j` (0 when they touch).
    pub fn cell_gap(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.center(i), self.center(j));
        let mut sq = 0.0;
        for k in 0..self.dim {
            let g = ((a[k] - b[k]).abs() - self.h).max(0.0);
            sq += g * g;
        }
        sq.sqrt()
    }

    /// Distance from the cell of node `i` to the complement of the box.
    pub fn gap_to_box_exterior(&self, i: usize) -> f64 {
        let c = self.center(i);
        (0..self.dim)
            .map(|k| (c[k] - self.lo[k]).min(self.hi[k] - c[k]) - 0.5 * self.h)
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetRole {
    /// The open set Ω.
    Domain,
    /// A compact set K.
    Compact,
    /// A ball B.
    Ball,
    /// An exceptional set E.
    Exceptional,
}

/// Boolean mask over the nodes of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSet {
    mask: Vec<bool>,
    role: SetRole,
}

impl NodeSet {
    pub fn new(mask: Vec<bool>, role: SetRole) -> Self {
        NodeSet { mask, role }
    }

    pub fn empty(len: usize, role: SetRole) -> Self {
        NodeSet { mask: vec![false; len], role }
    }

    pub fn full(len: usize, role: SetRole) -> Self {
        NodeSet { mask: vec![true; len], role }
    }

    pub fn from_indices(len: usize, indices: &[usize], role: SetRole) -> Self {
        let mut mask = vec![false; len];
        for &i in indices {
            mask[i] = true;
        }
        NodeSet { mask, role }
    }

    pub fn from_predicate(grid: &Grid, role: SetRole, pred: impl Fn(Point) -> bool) -> Self {
        NodeSet { mask: grid.centers().map(pred).collect(), role }
    }

    pub fn role(&self) -> SetRole {
        self.role
    }

    pub fn with_role(mut self, role: SetRole) -> Self {
        self.role = role;
        self
    }

    /// Number of grid nodes the mask ranges over.
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn indices(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    pub fn insert(&mut self, i: usize) {
        self.mask[i] = true;
    }

    pub fn remove(&mut self, i: usize) {
        self.mask[i] = false;
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    fn zip_with(&self, other: &NodeSet, f: impl Fn(bool, bool) -> bool) -> NodeSet {
        NodeSet {
            mask: self.mask.iter().zip(&other.mask).map(|(&a, &b)| f(a, b)).collect(),
            role: self.role,
        }
    }

    pub fn union(&self, other: &NodeSet) -> NodeSet {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &NodeSet) -> NodeSet {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &NodeSet) -> NodeSet {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn complement(&self) -> NodeSet {
        NodeSet { mask: self.mask.iter().map(|b| !b).collect(), role: self.role }
    }
}

/// One value per node plus the constant value outside the box.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
    pub far: f64,
}

impl Field {
    pub fn new(values: Vec<f64>, far: f64) -> Result<Self> {
        if !far.is_finite() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Params("field values must be finite".into()));
        }
        Ok(Field { values, far })
    }

    pub fn constant(len: usize, c: f64) -> Self {
        Field { values: vec![c; len], far: c }
    }

    pub fn from_fn(grid: &Grid, far: f64, f: impl Fn(Point) -> f64) -> Self {
        Field { values: grid.centers().map(f).collect(), far }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { values: self.values.iter().map(|&v| f(v)).collect(), far: f(self.far) }
    }

    pub fn neg(&self) -> Field {
        self.map(|v| -v)
    }

    pub fn zip(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        Field {
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
            far: f(self.far, other.far),
        }
    }

    /// Sup-norm of the difference over the nodes of `set` (0 for an empty set).
    pub fn max_abs_diff_on(&self, other: &Field, set: &NodeSet) -> f64 {
        set.indices()
            .into_iter()
            .map(|i| (self.values[i] - other.values[i]).abs())
            .fold(0.0, f64::max)
    }
}

/// Symmetric nonnegative pair weights `W_ij ≈ ∫_{cell_i}∫_{cell_j} k` and
/// per-node tail integrals `∫_{box^c} k(x_i, y) dy`.
#[derive(Clone, Debug)]
pub struct WeightMatrix {
    grid: Grid,
    s: f64,
    p: f64,
    standard: bool,
    dense: Vec<f64>,
    tail: Vec<f64>,
    far: Vec<f64>,
}

impl WeightMatrix {
    /// Builds a weight matrix from explicit parts; `far` holds the far-field
    /// weights already multiplied by the cell measure.
    pub fn from_parts(grid: Grid, p: f64, dense: Vec<f64>, far: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if dense.len() != n * n || far.len() != n {
            return Err(Error::GridMismatch { expected: n, got: far.len() });
        }
        for i in 0..n {
            for j in 0..n {
                let w = dense[i * n + j];
                if i != j && (w < 0.0 || !w.is_finite() || w != dense[j * n + i]) {
                    return Err(Error::Params(format!("weights must be symmetric and nonnegative at ({i},{j})")));
                }
            }
            if far[i] < 0.0 || !far[i].is_finite() {
                return Err(Error::Params(format!("far weight at {i} must be nonnegative")));
            }
        }
        let measure = grid.cell_measure();
        let tail = far.iter().map(|f| f / measure).collect();
        Ok(WeightMatrix { grid, s: f64::NAN, p, standard: false, dense, tail, far })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.tail.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tail.is_empty()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// True when assembled from the standard kernel for exactly these `s`, `p`.
    pub fn is_standard_for(&self, s: f64, p: f64) -> bool {
        self.standard && self.s == s && self.p == p
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.dense[i * self.len() + j]
    }

    /// Row `i` of the dense matrix; the diagonal entry is zero and never used.
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.dense[i * n..(i + 1) * n]
    }

    /// `∫_{box^c} k(x_i, y) dy`
    pub fn tail(&self, i: usize) -> f64 {
        self.tail[i]
    }

    /// Tail integral times the cell measure: the far-field pair weight of node `i`.
    pub fn far_weight(&self, i: usize) -> f64 {
        self.far[i]
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::GridMismatch { expected: self.len(), got: len });
        }
        Ok(())
    }

    /// Writes `i,j,x_i,y_i,x_j,y_j,w_ij` for `i < j` with nonzero weight, then
    /// one `i,far,...` row per node.
    pub fn dump_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,j,xi,yi,xj,yj,weight")?;
        let n = self.len();
        for i in 0..n {
            let a = self.grid.center(i);
            for j in i + 1..n {
                let b = self.grid.center(j);
                writeln!(out, "{i},{j},{},{},{},{},{}", a[0], a[1], b[0], b[1], self.weight(i, j))?;
            }
        }
        for i in 0..n {
            let a = self.grid.center(i);
            writeln!(out, "{i},far,{},{},,,{}", a[0], a[1], self.far[i])?;
        }
        Ok(())
    }
}

/// Assembles the pair weights and tail coefficients of `params` on `grid`.
///
/// Pairs whose centers are at most `2h` apart use a 4-point tensor Gauss rule
/// per cell, farther pairs use the midpoint rule. The same-cell term is never
/// formed: piecewise-constant fields have zero difference inside a cell.
pub fn assemble_weights(grid: &Grid, params: &FracParams) -> Result<WeightMatrix> {
    let n = grid.len();
    let [nx, ny] = grid.counts();
    let dim = grid.dim();
    let h = grid.h();

    // Weights only depend on the absolute index offset.
    let offsets: Vec<(usize, usize)> =
        (0..ny).flat_map(|b| (0..nx).map(move |a| (a, b))).collect();
    let table: Vec<f64> = offsets
        .par_iter()
        .map(|&(a, b)| offset_weight(params, dim, h, a as f64, b as f64))
        .collect::<Result<_>>()?;

    let mut dense = vec![0.0; n * n];
    dense.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let [ix, iy] = grid.multi_index(i);
        for (j, w) in row.iter_mut().enumerate() {
            if j != i {
                let [jx, jy] = grid.multi_index(j);
                *w = table[ix.abs_diff(jx) + nx * iy.abs_diff(jy)];
            }
        }
    });

    let tail: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| tail_integral(grid, params, grid.center(i)))
        .collect::<Result<_>>()?;
    let measure = grid.cell_measure();
    let far = tail.iter().map(|t| t * measure).collect();

    Ok(WeightMatrix {
        grid: grid.clone(),
        s: params.s,
        p: params.p,
        standard: params.is_standard(),
        dense,
        tail,
        far,
    })
}

fn offset_weight(params: &FracParams, dim: usize, h: f64, a: f64, b: f64) -> Result<f64> {
    if a == 0.0 && b == 0.0 {
        return Ok(0.0);
    }
    let dist = h * a.hypot(b);
    if dist > 2.0 * h * (1.0 + 1e-12) {
        return Ok(h.powi(2 * dim as i32) * params.kernel_at(dim, dist)?);
    }
    // Tensor Gauss rule over both cells; points are offsets from cell centers.
    let half = 0.5 * h;
    let mut acc = 0.0;
    if dim == 1 {
        for (xi, wi) in GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS) {
            for (xj, wj) in GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS) {
                let r = (a * h + half * (xj - xi)).abs();
                acc += wi * wj * params.kernel_at(1, r)?;
            }
        }
        Ok(acc * half * half)
    } else {
        for (xi, wxi) in GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS) {
            for (yi, wyi) in GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS) {
                for (xj, wxj) in GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS) {
                    for (yj, wyj) in GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS) {
                        let dx = a * h + half * (xj - xi);
                        let dy = b * h + half * (yj - yi);
                        acc += wxi * wyi * wxj * wyj * params.kernel_at(2, dx.hypot(dy))?;
                    }
                }
            }
        }
        Ok(acc * half.powi(4))
    }
}

/// `∫_R^∞ k(r) r^(n-1) dr` (times the unit-sphere factor handled by the caller).
///
/// Writing `k(r) = m(r) r^(-n-sp)` and substituting `u = (R/r)^sp` gives
/// `R^(-sp)/sp · ∫_0^1 m(R u^(-1/sp)) du`, which is closed form for `m ≡ 1`.
fn radial_tail(params: &FracParams, dim: usize, radius: f64) -> Result<f64> {
    let sp = params.sp();
    let base = radius.powf(-sp) / sp;
    match &params.kernel {
        Kernel::Standard => Ok(base),
        Kernel::Custom(_) => {
            let expo = dim as f64 + sp;
            let failure = std::cell::RefCell::new(None);
            let mean = integrate(
                |u| {
                    if u <= 0.0 {
                        return 0.0;
                    }
                    let r = radius * u.powf(-1.0 / sp);
                    if !r.is_finite() {
                        return 0.0;
                    }
                    match params.kernel_at(dim, r) {
                        Ok(k) => k * r.powf(expo),
                        Err(e) => {
                            failure.borrow_mut().get_or_insert(e);
                            0.0
                        }
                    }
                },
                0.0,
                1.0,
                1e-11,
            );
            match failure.into_inner() {
                Some(e) => Err(e),
                None => Ok(base * mean),
            }
        }
    }
}

fn tail_integral(grid: &Grid, params: &FracParams, x: Point) -> Result<f64> {
    let lo = grid.lo();
    let hi = grid.hi();
    if grid.dim() == 1 {
        return Ok(radial_tail(params, 1, x[0] - lo[0])? + radial_tail(params, 1, hi[0] - x[0])?);
    }
    let (dl, dr) = (x[0] - lo[0], hi[0] - x[0]);
    let (db, dt) = (x[1] - lo[1], hi[1] - x[1]);
    // Each side of the rectangle is seen from x over an angular window; the
    // ray length to side at perpendicular distance d is d / cos(angle).
    let sides = [
        (dr, db.atan2(dr), dt.atan2(dr)),
        (dt, dr.atan2(dt), dl.atan2(dt)),
        (dl, dt.atan2(dl), db.atan2(dl)),
        (db, dl.atan2(db), dr.atan2(db)),
    ];
    let mut total = 0.0;
    for (d, before, after) in sides {
        let scale = (before + after) * d.powf(-params.sp()) / params.sp();
        let failure = std::cell::RefCell::new(None);
        let piece = integrate(
            |phi| match radial_tail(params, 2, d / phi.cos()) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            },
            -before,
            after,
            1e-14 * scale,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        total += piece;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        let g = build_grid(&[(-1.0, 1.0)], 0.5, 1).unwrap();
        let xs: Vec<f64> = g.centers().map(|c| c[0]).collect();
        assert_eq!(xs, vec![-0.75, -0.25, 0.25, 0.75]);

        let g = build_grid(&[(0.0, 1.0), (0.0, 1.0)], 0.5, 2).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.center(1), [0.75, 0.25]);
        assert_eq!(g.center(2), [0.25, 0.75]);

        assert!(matches!(build_grid(&[(-1.0, 1.0)], 0.3, 1), Err(Error::Size(_))));
        assert!(matches!(build_grid(&[(1.0, 1.0)], 0.1, 1), Err(Error::Degenerate(_))));
        assert!(matches!(build_grid(&[(0.0, 1.0)], 0.0, 1), Err(Error::Size(_))));
        assert!(matches!(
            Grid::with_limit(&[(0.0, 1.0)], 0.01, 1, 50),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn nodes_lie_in_box() {
        let g = build_grid(&[(-0.5, 1.5), (0.0, 0.75)], 0.25, 2).unwrap();
        assert_eq!(g.len(), 8 * 3);
        assert!(g.centers().all(|c| g.in_box(c)));
    }

    #[test]
    fn tail_closed_form_1d() {
        // ∫_{|y|>1} |y|^{-2} dy = 2 for n = 1, sp = 1.
        let g = build_grid(&[(-1.0, 1.0)], 0.4, 1).unwrap();
        let params = FracParams::new(0.5, 2.0).unwrap();
        let w = assemble_weights(&g, &params).unwrap();
        let mid = 2; // center 0.0
        assert!(g.center(mid)[0].abs() < 1e-15);
        assert!((w.tail(mid) - 2.0).abs() < 1e-12);
        assert!((w.far_weight(mid) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn tail_2d_matches_polar_brute_force() {
        let g = build_grid(&[(0.0, 1.0), (0.0, 1.0)], 0.25, 2).unwrap();
        let params = FracParams::new(0.5, 2.0).unwrap();
        let w = assemble_weights(&g, &params).unwrap();
        let i = g.index(1, 0);
        let c = g.center(i);
        // Midpoint rule in angle of R(θ)^{-sp}/sp with R the exit distance.
        let m = 400_000;
        let mut sum = 0.0;
        for k in 0..m {
            let th = (k as f64 + 0.5) * std::f64::consts::TAU / m as f64;
            let (dx, dy) = (th.cos(), th.sin());
            let tx = if dx > 0.0 { (1.0 - c[0]) / dx } else { -c[0] / dx };
            let ty = if dy > 0.0 { (1.0 - c[1]) / dy } else { -c[1] / dy };
            sum += tx.min(ty).powf(-1.0);
        }
        let brute = sum * std::f64::consts::TAU / m as f64;
        assert!((w.tail(i) - brute).abs() < 1e-6 * brute, "{} vs {brute}", w.tail(i));
    }

    #[test]
    fn zero_custom_kernel_is_rejected() {
        let k = Kernel::Custom(RadialProfile::new("0", |_| 0.0));
        let params = FracParams::with_kernel(0.5, 2.0, 1.5, k).unwrap();
        let g = build_grid(&[(-1.0, 1.0)], 0.5, 1).unwrap();
        assert!(matches!(assemble_weights(&g, &params), Err(Error::Ellipticity(_))));
    }

    #[test]
    fn custom_kernel_equal_to_standard_reproduces_weights() {
        let sp = 0.8;
        let k = Kernel::Custom(RadialProfile::new("r^-1.8", move |r: f64| r.powf(-1.0 - sp)));
        let custom = FracParams::with_kernel(0.4, 2.0, 1.0, k).unwrap();
        let standard = FracParams::new(0.4, 2.0).unwrap();
        let g = build_grid(&[(-1.0, 1.0)], 0.25, 1).unwrap();
        let a = assemble_weights(&g, &custom).unwrap();
        let b = assemble_weights(&g, &standard).unwrap();
        for i in 0..g.len() {
            assert!((a.tail(i) - b.tail(i)).abs() < 1e-9 * b.tail(i));
            for j in 0..g.len() {
                assert!((a.weight(i, j) - b.weight(i, j)).abs() <= 1e-14 * b.weight(i, j));
            }
        }
        assert!(!a.is_standard_for(0.4, 2.0));
        assert!(b.is_standard_for(0.4, 2.0));
    }

    #[test]
    fn params_validation() {
        assert!(FracParams::new(0.0, 2.0).is_err());
        assert!(FracParams::new(1.0, 2.0).is_err());
        assert!(FracParams::new(0.5, 1.0).is_err());
        assert!(FracParams::with_kernel(0.5, 2.0, 0.5, Kernel::Standard).is_err());
    }

    #[test]
    fn node_set_algebra() {
        let a = NodeSet::from_indices(5, &[0, 1, 2], SetRole::Domain);
        let b = NodeSet::from_indices(5, &[2, 3], SetRole::Compact);
        assert_eq!(a.union(&b).indices(), vec![0, 1, 2, 3]);
        assert_eq!(a.difference(&b).indices(), vec![0, 1]);
        assert_eq!(a.intersection(&b).indices(), vec![2]);
        assert_eq!(a.complement().indices(), vec![3, 4]);
        assert!(a.intersection(&b).is_subset(&a));
        assert!(!b.is_subset(&a));
    }

    #[test]
    fn cell_gaps() {
        let g = build_grid(&[(0.0, 1.0), (0.0, 1.0)], 0.25, 2).unwrap();
        assert_eq!(g.cell_gap(g.index(0, 0), g.index(1, 1)), 0.0);
        assert!((g.cell_gap(g.index(0, 0), g.index(2, 0)) - 0.25).abs() < 1e-15);
        assert!((g.gap_to_box_exterior(g.index(1, 2)) - 0.25).abs() < 1e-15);
        assert_eq!(g.gap_to_box_exterior(g.index(0, 2)), 0.0);
    }
}
