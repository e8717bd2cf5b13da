//! Boundary regularity tests: the dyadic Wiener sum, the barrier `H d_{x0}`
//! and the condenser potential near `x0`.
//!
//! Divergence of the Wiener sum cannot be observed at finite depth. The
//! verdict therefore combines three heuristic tests and reports
//! `inconclusive` whenever they disagree without a clear majority.

use rayon::prelude::*;
use serde::Serialize;

use crate::capacity::condenser_capacity;
use crate::error::{Error, Result};
use crate::model::{assemble_weights, build_grid, Field, FracParams, Grid, NodeSet, Point, SetRole, WeightMatrix};
use crate::shape::{rasterize, Shape};
use crate::solver::{solve_dirichlet, SolveOptions};

/// Cells per unit radius on the local Wiener grids.
const LOCAL_CELLS_PER_RADIUS: usize = 8;

/// Description of the trend thresholds, copied into every verdict.
pub const WIENER_HEURISTIC: &str = "heuristic thresholds: wiener regular if term_J > 0 and term_J >= 0.5*median(terms); \
     irregular if term_J <= 0.25*term_0 and the last three terms are nonincreasing";

/// An open set given by a shape, clipped to the box of a base grid.
#[derive(Clone, Debug)]
pub struct Domain {
    shape: Shape,
    grid: Grid,
    mask: NodeSet,
}

impl Domain {
    pub fn new(shape: Shape, grid: Grid) -> Result<Domain> {
        let mask = rasterize(&shape, &grid, SetRole::Domain)?;
        Ok(Domain { shape, grid, mask })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mask(&self) -> &NodeSet {
        &self.mask
    }

    /// Membership of a cell center on a grid of spacing `h`.
    pub fn contains(&self, x: Point, h: f64) -> bool {
        let (lo, hi) = (self.grid.lo(), self.grid.hi());
        (0..self.grid.dim()).all(|k| x[k] > lo[k] && x[k] < hi[k]) && self.shape.contains(x, h)
    }

    /// Nodes outside Ω with a neighbor in Ω (diagonal neighbors included).
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let g = &self.grid;
        (0..g.len())
            .filter(|&i| !self.mask.contains(i) && neighbors(g, i).any(|j| self.mask.contains(j)))
            .collect()
    }
}

fn neighbors(g: &Grid, i: usize) -> impl Iterator<Item = usize> + '_ {
    let [ix, iy] = g.multi_index(i);
    let [nx, ny] = g.counts();
    let dys: &[i64] = if g.dim() == 1 { &[0] } else { &[-1, 0, 1] };
    dys.iter().flat_map(move |&dy| {
        [-1i64, 0, 1].into_iter().filter_map(move |dx| {
            let (x, y) = (ix as i64 + dx, iy as i64 + dy);
            if (dx, dy) == (0, 0) || x < 0 || y < 0 || x >= nx as i64 || y >= ny as i64 {
                None
            } else {
                Some(g.index(x as usize, y as usize))
            }
        })
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Anchor {
    Center(usize),
    Corner,
}

/// Checks that `x0` is a cell center or cell corner of the base grid lying on
/// the boundary of the domain mask.
fn anchor(domain: &Domain, x0: Point) -> Result<Anchor> {
    let g = domain.grid();
    let h = g.h();
    let lo = g.lo();
    let dim = g.dim();
    let scaled: Vec<f64> = (0..dim).map(|k| (x0[k] - lo[k]) / h).collect();
    let near = |v: f64, target: f64| (v - target).abs() <= 1e-9 * v.abs().max(1.0);
    let is_center = scaled.iter().all(|&v| near(v - v.floor(), 0.5));
    let is_corner = scaled.iter().all(|&v| near(v, v.round()));
    let counts = g.counts();
    let in_omega = |idx: &[i64]| {
        if (0..dim).any(|k| idx[k] < 0 || idx[k] >= counts[k] as i64) {
            return false;
        }
        let iy = if dim == 2 { idx[1] as usize } else { 0 };
        domain.mask().contains(g.index(idx[0] as usize, iy))
    };
    if is_center {
        let idx: Vec<i64> = scaled.iter().map(|v| v.floor() as i64).collect();
        if (0..dim).any(|k| idx[k] < 0 || idx[k] >= counts[k] as i64) {
            return Err(Error::Params(format!("x0 = {x0:?} lies outside the grid")));
        }
        let iy = if dim == 2 { idx[1] as usize } else { 0 };
        let i = g.index(idx[0] as usize, iy);
        if domain.mask().contains(i) || !neighbors(g, i).any(|j| domain.mask().contains(j)) {
            return Err(Error::Params(format!("x0 = {x0:?} is not on the boundary of the domain")));
        }
        return Ok(Anchor::Center(i));
    }
    if is_corner {
        let base: Vec<i64> = scaled.iter().map(|v| v.round() as i64).collect();
        let mut inside = 0;
        let mut outside = 0;
        for corner in 0..(1 << dim) {
            let idx: Vec<i64> = (0..dim).map(|k| base[k] - 1 + ((corner >> k) & 1)).collect();
            if in_omega(&idx) {
                inside += 1;
            } else {
                outside += 1;
            }
        }
        if inside == 0 || outside == 0 {
            return Err(Error::Params(format!("x0 = {x0:?} is not on the boundary of the domain")));
        }
        return Ok(Anchor::Corner);
    }
    Err(Error::Params(format!("x0 = {x0:?} is neither a cell center nor a cell corner")))
}

/// Complement cells touching the boundary point `x0`: the cell centered at
/// `x0`, or the complement cells sharing the corner `x0`.
pub fn boundary_cells(domain: &Domain, x0: Point) -> Result<Vec<usize>> {
    match anchor(domain, x0)? {
        Anchor::Center(i) => Ok(vec![i]),
        Anchor::Corner => {
            let g = domain.grid();
            let h = g.h();
            Ok((0..g.len())
                .filter(|&i| {
                    let c = g.center(i);
                    !domain.mask().contains(i)
                        && (0..g.dim()).all(|k| ((c[k] - x0[k]).abs() - 0.5 * h).abs() <= 1e-9 * h)
                })
                .collect())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WienerProfile {
    pub x0: Point,
    pub radii: Vec<f64>,
    /// `cap(closure(B(x0, ρ_j)) ∖ Ω, B(x0, 2ρ_j))`
    pub capacities: Vec<f64>,
    /// `(cap_j / ρ_j^(n - sp))^(1/(p-1))`
    pub terms: Vec<f64>,
    /// Running sums of `term_j · ln 2`.
    pub partial_sums: Vec<f64>,
    /// Set when the profile stopped before the requested depth.
    pub truncated: bool,
}

/// Weights on the unit local grid `[-2, 2]^n` with spacing `1/8`. Every level
/// of a Wiener profile is this grid scaled by `ρ_j`, so the standard-kernel
/// capacities scale exactly by `ρ_j^(n - sp)`.
pub fn unit_local_weights(dim: usize, params: &FracParams) -> Result<WeightMatrix> {
    let bounds = vec![(-2.0, 2.0); dim];
    let grid = build_grid(&bounds, 1.0 / LOCAL_CELLS_PER_RADIUS as f64, dim)?;
    assemble_weights(&grid, &params.standard())
}

fn level_capacity(
    x0: Point,
    rho: f64,
    domain: &Domain,
    params: &FracParams,
    unit: &WeightMatrix,
    opts: &SolveOptions,
) -> Result<f64> {
    let g = unit.grid();
    let h = rho * g.h();
    let n = g.len();
    let mut k = NodeSet::empty(n, SetRole::Compact);
    let mut ball = NodeSet::empty(n, SetRole::Ball);
    for i in 0..n {
        let c = g.center(i);
        let r = c[0].hypot(c[1]);
        if r < 2.0 {
            ball.insert(i);
        }
        let x = [x0[0] + rho * c[0], x0[1] + rho * c[1]];
        if r <= 1.0 && !domain.contains(x, h) {
            k.insert(i);
        }
    }
    let res = condenser_capacity(&k, &ball, params, unit, opts)?;
    if !res.converged {
        return Err(Error::Params(format!("capacity solve at radius {rho} did not converge")));
    }
    Ok(res.value)
}

/// Dyadic Wiener profile at `x0` over `ρ_j = r0 2^-j`, `j = 0..=levels`.
///
/// Levels whose local spacing `ρ_j / 8` falls below `min_spacing` are dropped
/// and the profile is flagged as truncated.
pub fn wiener_profile(
    x0: Point,
    domain: &Domain,
    params: &FracParams,
    r0: f64,
    levels: usize,
    min_spacing: f64,
    unit: Option<&WeightMatrix>,
    opts: &SolveOptions,
) -> Result<WienerProfile> {
    anchor(domain, x0)?;
    let dim = domain.grid().dim();
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::Params(format!("r0 must be positive, got {r0}")));
    }
    let owned;
    let unit = match unit {
        Some(w) => w,
        None => {
            owned = unit_local_weights(dim, params)?;
            &owned
        }
    };
    let mut radii: Vec<f64> = (0..=levels).map(|j| r0 * 0.5f64.powi(j as i32)).collect();
    let resolved = radii.iter().take_while(|&&r| r / LOCAL_CELLS_PER_RADIUS as f64 >= min_spacing).count();
    if resolved == 0 {
        return Err(Error::Resolution(format!(
            "radius {r0} needs spacing {} below the minimum {min_spacing}",
            r0 / LOCAL_CELLS_PER_RADIUS as f64
        )));
    }
    let truncated = resolved < radii.len();
    radii.truncate(resolved);

    let unit_caps: Vec<f64> = radii
        .par_iter()
        .map(|&rho| level_capacity(x0, rho, domain, params, unit, opts))
        .collect::<Result<_>>()?;
    let expo = dim as f64 - params.sp();
    let capacities = unit_caps.iter().zip(&radii).map(|(c, r)| c * r.powf(expo)).collect();
    let terms: Vec<f64> = unit_caps.iter().map(|c| c.powf(1.0 / (params.p - 1.0))).collect();
    let mut acc = 0.0;
    let partial_sums = terms
        .iter()
        .map(|t| {
            acc += t * std::f64::consts::LN_2;
            acc
        })
        .collect();
    Ok(WienerProfile { x0, radii, capacities, terms, partial_sums, truncated })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Lean {
    Regular,
    Irregular,
    Undecided,
}

/// Trend test on the Wiener terms.
pub fn wiener_trend(terms: &[f64]) -> Lean {
    let Some(&last) = terms.last() else {
        return Lean::Undecided;
    };
    let mut sorted = terms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 { sorted[m / 2] } else { 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]) };
    if last > 0.0 && last >= 0.5 * median {
        return Lean::Regular;
    }
    let tail_decays = m >= 3 && terms[m - 3] >= terms[m - 2] && terms[m - 2] >= terms[m - 1];
    if last <= 0.25 * terms[0] && tail_decays {
        Lean::Irregular
    } else {
        Lean::Undecided
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BarrierResult {
    pub field: Field,
    /// Length factor applied to `d_{x0}` so that it saturates inside the box.
    pub scale: f64,
}

/// `H d_{x0}` on Ω with `d_{x0}(x) = min(1, t |x - x0|)` and far value 1.
///
/// `t = 1` unless the box is smaller than the unit ball around `x0`, in which
/// case lengths are stretched by `t = 1.5 / R` with `R` the largest distance
/// from `x0` to the box. Standard-kernel weights are reused as is because
/// stretching only rescales them by a common factor; other kernels are
/// reassembled on the stretched grid.
pub fn barrier_solution(
    x0: Point,
    omega: &NodeSet,
    params: &FracParams,
    w: &WeightMatrix,
    opts: &SolveOptions,
) -> Result<BarrierResult> {
    let grid = w.grid();
    let (lo, hi) = (grid.lo(), grid.hi());
    let reach: f64 = (0..grid.dim())
        .map(|k| (x0[k] - lo[k]).abs().max((hi[k] - x0[k]).abs()).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = if reach < 1.0 { 1.5 / reach } else { 1.0 };
    let data = Field::from_fn(grid, 1.0, |c| (scale * grid.distance(c, x0)).min(1.0));
    let stretched;
    let w = if scale == 1.0 || w.is_standard_for(params.s, params.p) {
        w
    } else {
        stretched = assemble_weights(&grid.scaled(scale), params)?;
        &stretched
    };
    let report = solve_dirichlet(&data, omega, w, opts)?;
    Ok(BarrierResult { field: report.u, scale })
}

/// Condenser potential of `closure(B(x0, ρ)) ∖ Ω` in `B(x0, 2ρ)` on the base grid.
pub fn potential(
    x0: Point,
    omega: &NodeSet,
    params: &FracParams,
    w: &WeightMatrix,
    rho: f64,
    opts: &SolveOptions,
) -> Result<Field> {
    let grid = w.grid();
    let n = grid.len();
    let mut k = NodeSet::empty(n, SetRole::Compact);
    let mut ball = NodeSet::empty(n, SetRole::Ball);
    let eps = 1e-9 * grid.h();
    for i in 0..n {
        let r = grid.distance(grid.center(i), x0);
        if r < 2.0 * rho - eps {
            ball.insert(i);
        }
        if r <= rho + eps && !omega.contains(i) {
            k.insert(i);
        }
    }
    Ok(condenser_capacity(&k, &ball, params, w, opts)?.minimizer)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityOptions {
    /// Outer Wiener radius; defaults to half the distance from `x0` to the box edge.
    pub r0: Option<f64>,
    pub levels: usize,
    pub min_spacing: f64,
    pub barrier_tol: f64,
    pub pot_tol: f64,
    /// Potential test radius in cells of the base grid.
    pub pot_radius_cells: f64,
    pub solver: SolveOptions,
}

impl RegularityOptions {
    pub fn for_p(p: f64) -> Self {
        RegularityOptions {
            r0: None,
            levels: 4,
            min_spacing: 0.0,
            barrier_tol: 0.3,
            pot_tol: 0.4,
            pot_radius_cells: 4.0,
            solver: SolveOptions::for_p(p),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Regular,
    Irregular,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evidence {
    pub wiener_trend: Lean,
    pub wiener_terms: Vec<f64>,
    /// Largest `H d_{x0}` over Ω nodes within `2h` of `x0`.
    pub barrier_limit: f64,
    pub barrier_lean: Lean,
    pub barrier_scale: f64,
    /// Smallest potential over Ω nodes within `2h` of `x0`.
    pub potential_value: f64,
    pub potential_lean: Lean,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityVerdict {
    pub x0: Point,
    pub verdict: Verdict,
    pub evidence: Evidence,
    pub heuristic: String,
}

/// Regular needs more positive than negative tests; irregular needs no
/// positive test. Truncated profiles are never decided.
pub fn aggregate(leans: &[Lean], truncated: bool) -> Verdict {
    let pos = leans.iter().filter(|&&l| l == Lean::Regular).count();
    let neg = leans.iter().filter(|&&l| l == Lean::Irregular).count();
    if truncated {
        Verdict::Inconclusive
    } else if pos > neg {
        Verdict::Regular
    } else if pos == 0 && neg > 0 && neg * 2 > leans.len() {
        Verdict::Irregular
    } else {
        Verdict::Inconclusive
    }
}

fn near_nodes(grid: &Grid, omega: &NodeSet, x0: Point) -> Vec<usize> {
    let reach = 2.0 * grid.h() * (1.0 + 1e-9);
    omega.indices().into_iter().filter(|&i| grid.distance(grid.center(i), x0) <= reach).collect()
}

pub fn default_r0(grid: &Grid, x0: Point) -> f64 {
    let (lo, hi) = (grid.lo(), grid.hi());
    0.5 * (0..grid.dim()).map(|k| (x0[k] - lo[k]).min(hi[k] - x0[k])).fold(f64::INFINITY, f64::min)
}

/// Runs the Wiener, barrier and potential tests at `x0`.
pub fn classify(
    x0: Point,
    domain: &Domain,
    params: &FracParams,
    w: &WeightMatrix,
    unit: Option<&WeightMatrix>,
    opts: &RegularityOptions,
) -> Result<RegularityVerdict> {
    anchor(domain, x0)?;
    let grid = domain.grid();
    w.check_len(grid.len())?;
    let omega = domain.mask();
    let r0 = opts.r0.unwrap_or_else(|| default_r0(grid, x0));
    if !(r0 > 0.0) {
        return Err(Error::Params(format!("x0 = {x0:?} has no margin to the box")));
    }
    let profile = wiener_profile(x0, domain, params, r0, opts.levels, opts.min_spacing, unit, &opts.solver)?;
    let wiener_trend = wiener_trend(&profile.terms);

    let near = near_nodes(grid, omega, x0);
    let barrier = barrier_solution(x0, omega, params, w, &opts.solver)?;
    let barrier_limit = near.iter().map(|&i| barrier.field.values[i]).fold(0.0, f64::max);
    let barrier_lean = if barrier_limit <= opts.barrier_tol { Lean::Regular } else { Lean::Irregular };

    let pot = potential(x0, omega, params, w, opts.pot_radius_cells * grid.h(), &opts.solver)?;
    let potential_value = near.iter().map(|&i| pot.values[i]).fold(f64::INFINITY, f64::min);
    let potential_lean = if potential_value >= 1.0 - opts.pot_tol { Lean::Regular } else { Lean::Irregular };

    let verdict = aggregate(&[wiener_trend, barrier_lean, potential_lean], profile.truncated);
    Ok(RegularityVerdict {
        x0,
        verdict,
        evidence: Evidence {
            wiener_trend,
            wiener_terms: profile.terms,
            barrier_limit,
            barrier_lean,
            barrier_scale: barrier.scale,
            potential_value,
            potential_lean,
            truncated: profile.truncated,
        },
        heuristic: format!(
            "{WIENER_HEURISTIC}; barrier regular if max H d_x0 within 2h <= {}; potential regular if min within 2h >= {}",
            opts.barrier_tol,
            1.0 - opts.pot_tol
        ),
    })
}

/// Classifies several points, sharing the local Wiener weights.
pub fn classify_points(
    points: &[Point],
    domain: &Domain,
    params: &FracParams,
    w: &WeightMatrix,
    opts: &RegularityOptions,
) -> Result<Vec<RegularityVerdict>> {
    let unit = unit_local_weights(domain.grid().dim(), params)?;
    points.par_iter().map(|&x0| classify(x0, domain, params, w, Some(&unit), opts)).collect()
}
