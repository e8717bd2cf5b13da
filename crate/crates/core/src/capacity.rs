//! Condenser and Sobolev capacities of node sets.
//!
//! On a fixed grid every node set is both open and compact, so the usual
//! extension of capacity from compact sets to open and arbitrary sets adds
//! nothing: only node-set values are exposed, and refinement studies stand in
//! for the continuum extension.
//!
//! Capacities do not depend on the kernel, so both routines pin the standard
//! kernel `|x - y|^(-n - sp)` and reassemble the weights whenever the given
//! matrix was built from a different kernel.

use std::borrow::Cow;

use serde::Serialize;

use crate::energy::{energy, seminorm_p};
use crate::error::{Error, Result};
use crate::model::{assemble_weights, Field, FracParams, NodeSet, SetRole, WeightMatrix};
use crate::solver::{solve_dirichlet, solve_obstacle, ObstacleSpec, Outcome, Problem, SolveOptions, SolveReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityKind {
    Condenser,
    Sobolev,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CapacityResult {
    pub value: f64,
    pub minimizer: Field,
    pub kind: CapacityKind,
    pub converged: bool,
    pub iterations: usize,
}

fn standard_weights<'a>(params: &FracParams, w: &'a WeightMatrix) -> Result<Cow<'a, WeightMatrix>> {
    if w.is_standard_for(params.s, params.p) {
        Ok(Cow::Borrowed(w))
    } else {
        Ok(Cow::Owned(assemble_weights(w.grid(), &params.standard())?))
    }
}

fn indicator(set: &NodeSet) -> Field {
    Field { values: set.mask().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(), far: 0.0 }
}

/// Non-convergence is reported through the `converged` flag instead of an error.
fn accept(result: Result<SolveReport>) -> Result<SolveReport> {
    match result {
        Err(Error::NotConverged(report)) => Ok(*report),
        other => other,
    }
}

fn check_sets(k: &NodeSet, omega: &NodeSet, w: &WeightMatrix) -> Result<()> {
    w.check_len(k.len())?;
    w.check_len(omega.len())?;
    if !k.is_subset(omega) {
        return Err(Error::Params("the compact set must lie inside the domain".into()));
    }
    Ok(())
}

/// `cap_{s,p}(K, Ω)` through the obstacle problem with obstacle `χ_K` and
/// zero exterior data. The value is the seminorm `[v]^p` over all pairs.
pub fn condenser_capacity(
    k: &NodeSet,
    omega: &NodeSet,
    params: &FracParams,
    w: &WeightMatrix,
    opts: &SolveOptions,
) -> Result<CapacityResult> {
    check_sets(k, omega, w)?;
    let n = w.len();
    if k.is_empty() {
        return Ok(CapacityResult {
            value: 0.0,
            minimizer: Field::constant(n, 0.0),
            kind: CapacityKind::Condenser,
            converged: true,
            iterations: 0,
        });
    }
    let w = standard_weights(params, w)?;
    let psi = Field {
        values: k.mask().iter().map(|&b| if b { 1.0 } else { f64::NEG_INFINITY }).collect(),
        far: 0.0,
    };
    let spec = ObstacleSpec { psi: Some(psi), g: Field::constant(n, 0.0) };
    let report = accept(solve_obstacle(&spec, omega, &w, opts))?;
    Ok(CapacityResult {
        value: seminorm_p(&report.u, &w)?,
        minimizer: report.u,
        kind: CapacityKind::Condenser,
        converged: report.converged,
        iterations: report.iterations,
    })
}

/// Condenser capacity by the direct route: the Dirichlet problem on `Ω ∖ K`
/// with data 1 on K and 0 outside Ω.
pub fn condenser_capacity_direct(
    k: &NodeSet,
    omega: &NodeSet,
    params: &FracParams,
    w: &WeightMatrix,
    opts: &SolveOptions,
) -> Result<CapacityResult> {
    check_sets(k, omega, w)?;
    let w = standard_weights(params, w)?;
    let free = omega.difference(k);
    let report = accept(solve_dirichlet(&indicator(k), &free, &w, opts))?;
    Ok(CapacityResult {
        value: seminorm_p(&report.u, &w)?,
        minimizer: report.u,
        kind: CapacityKind::Condenser,
        converged: report.converged,
        iterations: report.iterations,
    })
}

/// `C_{s,p}(E)`: minimum of `‖u‖_p^p + [u]^p` over fields with `u = 1` on E,
/// `u ≥ 0` and zero far field. The L^p term uses the cell measure.
pub fn sobolev_capacity(
    e: &NodeSet,
    params: &FracParams,
    w: &WeightMatrix,
    opts: &SolveOptions,
) -> Result<CapacityResult> {
    w.check_len(e.len())?;
    let n = w.len();
    if e.is_empty() {
        return Ok(CapacityResult {
            value: 0.0,
            minimizer: Field::constant(n, 0.0),
            kind: CapacityKind::Sobolev,
            converged: true,
            iterations: 0,
        });
    }
    let w = standard_weights(params, w)?;
    let measure = w.grid().cell_measure();
    let problem = Problem {
        w: &w,
        free: e.complement().indices(),
        lower: Some(vec![0.0; n]),
        mass: measure,
    };
    let mut u = indicator(e);
    let Outcome { iterations, converged, .. } = problem.run(&mut u, opts);
    let lp: f64 = u.values.iter().map(|v| v.abs().powf(params.p)).sum::<f64>() * measure;
    Ok(CapacityResult {
        value: lp + seminorm_p(&u, &w)?,
        minimizer: u,
        kind: CapacityKind::Sobolev,
        converged,
        iterations,
    })
}

/// Both capacities of `E ⋐ Ω` and the two ratios bounded by the comparability
/// constant:
///
/// `C(E) / ((1 + diam(Ω)^sp) cap(E, Ω))` and `cap(E, Ω) / ((1 + dist(E, Ω^c)^-p) C(E))`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparabilityReport {
    pub condenser: f64,
    pub sobolev: f64,
    pub diameter: f64,
    pub distance: f64,
    pub lower_ratio: f64,
    pub upper_ratio: f64,
    pub budget: f64,
    pub violation: bool,
}

/// Default bound on both ratios.
pub const COMPARABILITY_BUDGET: f64 = 100.0;

pub fn comparability_check(
    e: &NodeSet,
    omega: &NodeSet,
    params: &FracParams,
    w: &WeightMatrix,
    opts: &SolveOptions,
    budget: f64,
) -> Result<ComparabilityReport> {
    check_sets(e, omega, w)?;
    let grid = w.grid();
    let h = grid.h();
    let inside = omega.indices();
    let outside = omega.complement().indices();

    let mut distance = f64::INFINITY;
    for &i in &e.indices() {
        distance = distance.min(grid.gap_to_box_exterior(i));
        for &j in &outside {
            distance = distance.min(grid.cell_gap(i, j));
        }
    }
    if !e.is_empty() && distance < 0.5 * h {
        return Err(Error::Params("the set touches the complement of the domain".into()));
    }

    let mut diameter: f64 = 0.0;
    for (a, &i) in inside.iter().enumerate() {
        let ci = grid.center(i);
        for &j in &inside[a..] {
            let cj = grid.center(j);
            let sq: f64 = (0..grid.dim()).map(|k| ((ci[k] - cj[k]).abs() + h).powi(2)).sum();
            diameter = diameter.max(sq.sqrt());
        }
    }

    let cap = condenser_capacity(e, omega, params, w, opts)?.value;
    let sob = sobolev_capacity(e, params, w, opts)?.value;
    let ratio = |num: f64, den: f64| if num == 0.0 && den == 0.0 { 0.0 } else { num / den };
    let lower_ratio = ratio(sob, (1.0 + diameter.powf(params.sp())) * cap);
    let upper_ratio = ratio(cap, (1.0 + distance.powf(-params.p)) * sob);
    Ok(ComparabilityReport {
        condenser: cap,
        sobolev: sob,
        diameter,
        distance: if distance.is_finite() { distance } else { 0.0 },
        lower_ratio,
        upper_ratio,
        budget,
        violation: !(lower_ratio <= budget && upper_ratio <= budget),
    })
}

/// Energy of a capacity minimizer recomputed from scratch, used to verify
/// the stored value.
pub fn recompute_value(result: &CapacityResult, params: &FracParams, w: &WeightMatrix) -> Result<f64> {
    let w = standard_weights(params, w)?;
    let full = NodeSet::full(w.len(), SetRole::Domain);
    let semi = energy(&result.minimizer, &w, &full)?;
    Ok(match result.kind {
        CapacityKind::Condenser => semi,
        CapacityKind::Sobolev => {
            let measure = w.grid().cell_measure();
            semi + measure * result.minimizer.values.iter().map(|v| v.abs().powf(params.p)).sum::<f64>()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, Grid};

    fn setup(s: f64, p: f64) -> (Grid, FracParams, WeightMatrix) {
        let g = build_grid(&[(-1.0, 1.0)], 0.25, 1).unwrap();
        let params = FracParams::new(s, p).unwrap();
        let w = assemble_weights(&g, &params).unwrap();
        (g, params, w)
    }

    #[test]
    fn empty_sets_have_zero_capacity() {
        let (g, params, w) = setup(0.5, 2.0);
        let omega = NodeSet::from_indices(g.len(), &[2, 3, 4, 5], SetRole::Domain);
        let empty = NodeSet::empty(g.len(), SetRole::Compact);
        let opts = SolveOptions::for_p(2.0);
        let c = condenser_capacity(&empty, &omega, &params, &w, &opts).unwrap();
        assert_eq!(c.value, 0.0);
        assert!(c.minimizer.values.iter().all(|&v| v == 0.0));
        assert_eq!(sobolev_capacity(&empty, &params, &w, &opts).unwrap().value, 0.0);
        let rep = comparability_check(&empty, &omega, &params, &w, &opts, COMPARABILITY_BUDGET).unwrap();
        assert!(!rep.violation);
    }

    #[test]
    fn minimizer_is_one_on_k_and_in_unit_range() {
        let (g, params, w) = setup(0.5, 3.0);
        let omega = NodeSet::from_indices(g.len(), &[1, 2, 3, 4, 5, 6], SetRole::Domain);
        let k = NodeSet::from_indices(g.len(), &[3, 4], SetRole::Compact);
        let res = condenser_capacity(&k, &omega, &params, &w, &SolveOptions::for_p(3.0)).unwrap();
        for i in 0..g.len() {
            let v = res.minimizer.values[i];
            assert!((0.0..=1.0).contains(&v));
            if k.contains(i) {
                assert_eq!(v, 1.0);
            }
            if !omega.contains(i) {
                assert_eq!(v, 0.0);
            }
        }
        let again = recompute_value(&res, &params, &w).unwrap();
        assert!((again - res.value).abs() <= 1e-9 * res.value);
    }

    #[test]
    fn k_outside_domain_is_rejected() {
        let (g, params, w) = setup(0.5, 2.0);
        let omega = NodeSet::from_indices(g.len(), &[2, 3], SetRole::Domain);
        let k = NodeSet::from_indices(g.len(), &[5], SetRole::Compact);
        assert!(condenser_capacity(&k, &omega, &params, &w, &SolveOptions::for_p(2.0)).is_err());
    }

    #[test]
    fn sobolev_capacity_dominates_measure() {
        let (g, params, w) = setup(0.4, 2.0);
        let e = NodeSet::from_indices(g.len(), &[3, 4], SetRole::Exceptional);
        let c = sobolev_capacity(&e, &params, &w, &SolveOptions::for_p(2.0)).unwrap();
        assert!(c.value >= 2.0 * g.cell_measure());
        assert!(c.minimizer.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn touching_set_fails_comparability_precondition() {
        let (g, params, w) = setup(0.5, 2.0);
        let omega = NodeSet::from_indices(g.len(), &[2, 3, 4, 5], SetRole::Domain);
        let e = NodeSet::from_indices(g.len(), &[2], SetRole::Exceptional);
        let opts = SolveOptions::for_p(2.0);
        assert!(comparability_check(&e, &omega, &params, &w, &opts, COMPARABILITY_BUDGET).is_err());
    }
}
