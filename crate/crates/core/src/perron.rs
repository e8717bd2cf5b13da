//! Discrete Perron machinery: supersolution tests, Poisson modification,
//! upper and lower Perron envelopes, and the refinement experiments on
//! perturbed data and irregular boundary sets.
//!
//! On a finite grid lower semicontinuity and the tail condition are vacuous,
//! so superharmonic functions are exactly the supersolutions.

use serde::Serialize;

use crate::capacity::sobolev_capacity;
use crate::energy::apply_operator;
use crate::error::{Error, Result};
use crate::model::{assemble_weights, Field, FracParams, Grid, NodeSet, Point, SetRole, WeightMatrix};
use crate::regularity::{boundary_cells, classify_points, Domain, RegularityOptions, Verdict};
use crate::solver::{solve_dirichlet, Init, Problem, SolveOptions};

/// `r_i >= -tol` at every node of Ω.
pub fn is_supersolution(u: &Field, omega: &NodeSet, w: &WeightMatrix, tol: f64) -> Result<bool> {
    let r = apply_operator(u, w, omega)?;
    Ok(r.values.iter().all(|&v| v >= -tol))
}

/// Replaces `u` in `G` by the solution with data `u` outside `G`.
fn modify_in_place(u: &mut Field, block: Vec<usize>, w: &WeightMatrix, opts: &SolveOptions) -> bool {
    let problem = Problem { w, free: block, lower: None, mass: 0.0 };
    problem.run(u, opts).converged
}

/// Poisson modification of the supersolution `u` in `G ⊆ Ω`.
pub fn poisson_modify(
    u: &Field,
    g_set: &NodeSet,
    omega: &NodeSet,
    w: &WeightMatrix,
    opts: &SolveOptions,
) -> Result<Field> {
    w.check_len(g_set.len())?;
    if !g_set.is_subset(omega) {
        return Err(Error::Params("the modification set must lie inside the domain".into()));
    }
    if !is_supersolution(u, omega, w, 3.0 * opts.tol)? {
        return Err(Error::Precondition("the input field is not a supersolution".into()));
    }
    let start = SolveOptions { init: Init::FromData, ..opts.clone() };
    Ok(solve_dirichlet(u, g_set, w, &start)?.u)
}

/// Overlapping blocks covering Ω: each node with its right neighbor (1D) or
/// the 2×2 square it spans (2D), restricted to Ω.
fn blocks(grid: &Grid, omega: &NodeSet) -> Vec<Vec<usize>> {
    let [nx, ny] = grid.counts();
    omega
        .indices()
        .into_iter()
        .map(|i| {
            let [ix, iy] = grid.multi_index(i);
            let dys: &[usize] = if grid.dim() == 1 { &[0] } else { &[0, 1] };
            let mut block = Vec::new();
            for &dy in dys {
                for dx in 0..2 {
                    let (x, y) = (ix + dx, iy + dy);
                    if x < nx && y < ny {
                        let j = grid.index(x, y);
                        if omega.contains(j) {
                            block.push(j);
                        }
                    }
                }
            }
            block.sort_unstable();
            block
        })
        .collect()
}

/// Result of the decreasing block iteration started from `sup g`.
#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub field: Field,
    pub sweeps: usize,
    pub final_sweep_delta: f64,
    /// Largest nodewise increase seen in any sweep.
    pub max_increase: f64,
    pub converged: bool,
}

/// Upper Perron envelope: start from `sup g` in Ω and apply Poisson
/// modifications over the block schedule until a sweep changes no node by
/// more than `tol / 10`.
pub fn upper_envelope(g: &Field, omega: &NodeSet, w: &WeightMatrix, opts: &SolveOptions) -> Result<Envelope> {
    w.check_len(g.len())?;
    w.check_len(omega.len())?;
    if g.values.iter().chain([&g.far]).any(|v| !v.is_finite()) {
        return Err(Error::Params("exterior data must be bounded".into()));
    }
    let top = g
        .values
        .iter()
        .zip(omega.mask())
        .filter(|(_, &inside)| !inside)
        .map(|(&v, _)| v)
        .fold(g.far, f64::max);
    let mut u = g.clone();
    for i in omega.indices() {
        u.values[i] = top;
    }
    let schedule = blocks(w.grid(), omega);
    let max_sweeps = opts.max_sweeps.unwrap_or(50 * w.len()).max(1);
    let mut max_increase: f64 = 0.0;
    let mut delta = 0.0;
    let mut inner_ok = true;
    for sweep in 1..=max_sweeps {
        let before = u.values.clone();
        for block in &schedule {
            inner_ok &= modify_in_place(&mut u, block.clone(), w, opts);
        }
        delta = 0.0;
        for (a, b) in u.values.iter().zip(&before) {
            delta = f64::max(delta, (a - b).abs());
            max_increase = max_increase.max(a - b);
        }
        if delta <= 0.1 * opts.tol {
            return Ok(Envelope { field: u, sweeps: sweep, final_sweep_delta: delta, max_increase, converged: inner_ok });
        }
    }
    Ok(Envelope { field: u, sweeps: max_sweeps, final_sweep_delta: delta, max_increase, converged: false })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerronReport {
    pub upper: Field,
    pub lower: Field,
    pub hg: Field,
    /// `max_Ω (upper - lower)`
    pub gap_sup: f64,
    /// `max_Ω |upper - hg|`
    pub dev_sup: f64,
    pub upper_sweeps: usize,
    pub lower_sweeps: usize,
    pub max_increase: f64,
    pub converged: bool,
}

/// Upper and lower Perron envelopes of `g`, compared with `Hg`.
pub fn upper_perron(g: &Field, omega: &NodeSet, w: &WeightMatrix, opts: &SolveOptions) -> Result<PerronReport> {
    let upper = upper_envelope(g, omega, w, opts)?;
    let lower = upper_envelope(&g.neg(), omega, w, opts)?;
    let lower_field = lower.field.neg();
    let (hg, hg_ok) = match solve_dirichlet(g, omega, w, opts) {
        Ok(rep) => (rep.u, true),
        Err(Error::NotConverged(rep)) => (rep.u, false),
        Err(e) => return Err(e),
    };
    let nodes = omega.indices();
    let gap_sup = if nodes.is_empty() {
        0.0
    } else {
        nodes.iter().map(|&i| upper.field.values[i] - lower_field.values[i]).fold(f64::NEG_INFINITY, f64::max)
    };
    let dev_sup = upper.field.max_abs_diff_on(&hg, omega);
    Ok(PerronReport {
        upper_sweeps: upper.sweeps,
        lower_sweeps: lower.sweeps,
        max_increase: upper.max_increase.max(lower.max_increase),
        converged: upper.converged && lower.converged && hg_ok,
        upper: upper.field,
        lower: lower_field,
        hg,
        gap_sup,
        dev_sup,
    })
}

/// One grid of a perturbation study: `g` is perturbed by `h_pert` on `E ⊂ Ω^c`.
#[derive(Clone, Debug)]
pub struct PerturbationCase {
    pub grid: Grid,
    pub omega: NodeSet,
    pub g: Field,
    pub h_pert: Field,
    pub e: NodeSet,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationRow {
    pub k: usize,
    pub h: f64,
    pub capacity: f64,
    /// `max_Ω |H(g + h_pert χ_E) - Hg|`
    pub deviation: f64,
}

pub fn perturbation_experiment(
    cases: &[PerturbationCase],
    params: &FracParams,
    opts: &SolveOptions,
) -> Result<Vec<PerturbationRow>> {
    cases
        .iter()
        .enumerate()
        .map(|(k, case)| {
            if case.e.intersection(&case.omega).count() > 0 {
                return Err(Error::Params("the perturbation set must lie outside the domain".into()));
            }
            let w = assemble_weights(&case.grid, params)?;
            let base = solve_dirichlet(&case.g, &case.omega, &w, opts)?.u;
            let mut bumped = case.g.clone();
            for i in case.e.indices() {
                bumped.values[i] += case.h_pert.values[i];
            }
            let perturbed = solve_dirichlet(&bumped, &case.omega, &w, opts)?.u;
            Ok(PerturbationRow {
                k,
                h: case.grid.h(),
                capacity: sobolev_capacity(&case.e, params, &w, opts)?.value,
                deviation: perturbed.max_abs_diff_on(&base, &case.omega),
            })
        })
        .collect()
}

/// Spearman rank correlation with average ranks for ties. `NaN` when either
/// series is constant or the lengths differ or are below two.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() || a.len() < 2 {
        return f64::NAN;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return f64::NAN;
    }
    cov / (va * vb).sqrt()
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut r = vec![0.0; x.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && x[order[end + 1]] == x[order[k]] {
            end += 1;
        }
        let avg = (k + end) as f64 / 2.0 + 1.0;
        for &i in &order[k..=end] {
            r[i] = avg;
        }
        k = end + 1;
    }
    r
}

/// One grid of a Kellogg study.
#[derive(Clone, Debug)]
pub struct KelloggCase {
    pub domain: Domain,
    pub points: Vec<Point>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KelloggRow {
    pub k: usize,
    pub h: f64,
    pub points: usize,
    pub irregular: Vec<Point>,
    pub inconclusive: Vec<Point>,
    /// Sobolev capacity of the complement cells touching the irregular points.
    pub capacity: f64,
}

pub fn kellogg_experiment(
    cases: &[KelloggCase],
    params: &FracParams,
    opts: &RegularityOptions,
) -> Result<Vec<KelloggRow>> {
    cases
        .iter()
        .enumerate()
        .map(|(k, case)| {
            let grid = case.domain.grid();
            let w = assemble_weights(grid, params)?;
            let verdicts = classify_points(&case.points, &case.domain, params, &w, opts)?;
            let mut mask = NodeSet::empty(grid.len(), SetRole::Exceptional);
            let mut irregular = Vec::new();
            let mut inconclusive = Vec::new();
            for v in &verdicts {
                match v.verdict {
                    Verdict::Irregular => {
                        irregular.push(v.x0);
                        for i in boundary_cells(&case.domain, v.x0)? {
                            mask.insert(i);
                        }
                    }
                    Verdict::Inconclusive => inconclusive.push(v.x0),
                    Verdict::Regular => {}
                }
            }
            Ok(KelloggRow {
                k,
                h: grid.h(),
                points: case.points.len(),
                irregular,
                inconclusive,
                capacity: sobolev_capacity(&mask, params, &w, &opts.solver)?.value,
            })
        })
        .collect()
}
