//! Dirichlet and obstacle problems by projected cyclic coordinate descent on
//! the convex discrete energy.
//!
//! Each nodal subproblem `min_t Σ_j W_ij |t - u_j|^p + F_i |t - far|^p` is
//! one-dimensional and strictly convex. Its derivative is monotone, so the
//! minimizer is bracketed by the smallest and largest neighbor values and
//! located by a safeguarded Newton/bisection iteration (closed form for
//! `p = 2`), then clipped at the obstacle.

use serde::{Deserialize, Serialize};

use crate::energy::{apply_operator, energy, phi};
use crate::error::{Error, Result};
use crate::model::{Field, NodeSet, SetRole, WeightMatrix};

/// Initial interior values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Mean of the fixed (exterior) data, clamped to the obstacle.
    #[default]
    ExteriorMean,
    /// The interior entries of the data field, clamped to the obstacle.
    FromData,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Bound on the complementarity residual; sweeps stop once the largest
    /// nodal change is also below `tol / 10`.
    pub tol: f64,
    /// Nodes with `u_i > ψ_i + act_tol` count as inactive.
    pub act_tol: f64,
    /// Defaults to `50 ×` the node count.
    pub max_sweeps: Option<usize>,
    pub init: Init,
}

impl SolveOptions {
    /// `tol = 1e-8` for `p = 2`, `1e-6` otherwise.
    pub fn for_p(p: f64) -> Self {
        SolveOptions {
            tol: if p == 2.0 { 1e-8 } else { 1e-6 },
            act_tol: 1e-9,
            max_sweeps: None,
            init: Init::ExteriorMean,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

/// Obstacle `ψ` (entries may be `-inf`; `None` means `ψ ≡ -inf`) and
/// exterior data `g`.
#[derive(Clone, Debug)]
pub struct ObstacleSpec {
    pub psi: Option<Field>,
    pub g: Field,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub u: Field,
    pub iterations: usize,
    pub final_sweep_delta: f64,
    pub energy: f64,
    /// Sup-norm of `apply_operator(u)` over Ω.
    pub residual_sup: f64,
    /// Complementarity residual used by the stopping rule.
    pub complementarity: f64,
    pub active_set: NodeSet,
    pub converged: bool,
}

/// The minimization problem solved by coordinate descent. Nodes outside
/// `free` keep their values.
pub(crate) struct Problem<'a> {
    pub w: &'a WeightMatrix,
    pub free: Vec<usize>,
    /// Per-node lower bound, indexed by node.
    pub lower: Option<Vec<f64>>,
    /// Adds `mass · Σ_free |u_i|^p` to the objective.
    pub mass: f64,
}

pub(crate) struct Outcome {
    pub iterations: usize,
    pub delta: f64,
    pub complementarity: f64,
    pub converged: bool,
}

impl Problem<'_> {
    fn lower(&self, i: usize) -> f64 {
        self.lower.as_ref().map_or(f64::NEG_INFINITY, |l| l[i])
    }

    /// Gradient of the objective divided by `p`.
    pub fn residual(&self, u: &Field, i: usize) -> f64 {
        crate::energy::nodal_residual(&u.values, u.far, i, self.w) + self.mass * phi(u.values[i], self.w.p())
    }

    fn complementarity(&self, u: &Field, act_tol: f64) -> f64 {
        self.free
            .iter()
            .map(|&i| {
                let r = self.residual(u, i);
                if u.values[i] > self.lower(i) + act_tol {
                    r.abs()
                } else {
                    (-r).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    /// Minimizer of the nodal subproblem at `i` with the other values frozen.
    fn nodal_minimizer(&self, u: &Field, i: usize) -> f64 {
        let p = self.w.p();
        let row = self.w.row(i);
        let far_w = self.w.far_weight(i);
        let half_mass = 0.5 * self.mass;
        let ui = u.values[i];

        if p == 2.0 {
            let mut g = 0.0;
            let mut diag = 0.0;
            for (j, (&uj, &wij)) in u.values.iter().zip(row).enumerate() {
                if j != i {
                    g += wij * (ui - uj);
                    diag += wij;
                }
            }
            g += far_w * (ui - u.far) + half_mass * ui;
            diag += far_w + half_mass;
            if g == 0.0 || diag == 0.0 {
                return ui;
            }
            return ui - g / diag;
        }

        // Derivative (over p) of the nodal objective and its slope.
        let eval = |t: f64| {
            let mut g = 0.0;
            let mut dg = 0.0;
            let mut term = |d: f64, wt: f64| {
                if wt > 0.0 && d != 0.0 {
                    let a = d.abs().powf(p - 2.0);
                    g += wt * a * d;
                    dg += wt * a;
                } else if wt > 0.0 && p < 2.0 {
                    dg = f64::INFINITY;
                }
            };
            for (j, (&uj, &wij)) in u.values.iter().zip(row).enumerate() {
                if j != i {
                    term(t - uj, wij);
                }
            }
            term(t - u.far, far_w);
            term(t, half_mass);
            (g, (p - 1.0) * dg)
        };

        let (g0, _) = eval(ui);
        if g0 == 0.0 {
            return ui;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut widen = |v: f64| {
            lo = lo.min(v);
            hi = hi.max(v);
        };
        for (j, (&uj, &wij)) in u.values.iter().zip(row).enumerate() {
            if j != i && wij > 0.0 {
                widen(uj);
            }
        }
        if far_w > 0.0 {
            widen(u.far);
        }
        if half_mass > 0.0 {
            widen(0.0);
        }
        if lo > hi {
            return ui;
        }
        if g0 > 0.0 {
            hi = hi.min(ui);
        } else {
            lo = lo.max(ui);
        }
        let mut t = ui.clamp(lo, hi);
        for _ in 0..200 {
            if hi - lo <= 1e-12 * lo.abs().max(hi.abs()).max(1.0) {
                return 0.5 * (lo + hi);
            }
            let (g, dg) = eval(t);
            if g == 0.0 {
                return t;
            }
            if g > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let newton = t - g / dg;
            if dg.is_finite() && dg > 0.0 && newton > lo && newton < hi {
                if (newton - t).abs() <= 1e-14 * t.abs().max(1.0) {
                    return newton;
                }
                t = newton;
            } else {
                t = 0.5 * (lo + hi);
            }
        }
        t
    }

    /// Shifts every group of free nodes with nearly equal values by a common
    /// amount chosen by exact line search. Single-node moves stall on such
    /// groups when `p < 2`, since `|t|^p` has unbounded curvature at 0 and
    /// the group can only move as a whole. Returns the largest shift.
    fn cluster_moves(&self, u: &mut Field) -> f64 {
        let p = self.w.p();
        let (min, max) = u.values.iter().chain([&u.far]).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
        let eps = 1e-4 * (max - min);
        if !(eps > 0.0) {
            return 0.0;
        }
        let mut order = self.free.clone();
        order.sort_by(|&a, &b| u.values[a].total_cmp(&u.values[b]).then(a.cmp(&b)));
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for &i in &order {
            match groups.last_mut() {
                Some(g) if u.values[i] - u.values[*g.last().expect("groups are nonempty")] <= eps => g.push(i),
                _ => groups.push(vec![i]),
            }
        }
        let mut in_group = vec![false; u.values.len()];
        let mut largest = 0.0_f64;
        for group in groups.iter().filter(|g| g.len() > 1) {
            group.iter().for_each(|&i| in_group[i] = true);
            let half_mass = 0.5 * self.mass;
            let slope = |t: f64| {
                let mut g = 0.0;
                for &i in group {
                    let ui = u.values[i] + t;
                    for (j, (&uj, &wij)) in u.values.iter().zip(self.w.row(i)).enumerate() {
                        if !in_group[j] && wij > 0.0 {
                            g += wij * phi(ui - uj, p);
                        }
                    }
                    g += self.w.far_weight(i) * phi(ui - u.far, p) + half_mass * phi(ui, p);
                }
                g
            };
            let floor = group.iter().map(|&i| self.lower(i) - u.values[i]).fold(f64::NEG_INFINITY, f64::max);
            let (mut lo, mut hi) = (min - max, max - min);
            if slope(0.0) > 0.0 {
                hi = 0.0;
            } else {
                lo = 0.0;
            }
            lo = lo.max(floor.min(hi));
            if slope(lo) >= 0.0 {
                hi = lo;
            }
            for _ in 0..200 {
                if hi - lo <= 1e-15 * (max - min) {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if slope(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            group.iter().for_each(|&i| {
                u.values[i] += t;
                in_group[i] = false;
            });
            largest = largest.max(t.abs());
        }
        largest
    }

    pub fn run(&self, u: &mut Field, opts: &SolveOptions) -> Outcome {
        let max_sweeps = opts.max_sweeps.unwrap_or(50 * self.w.len()).max(1);
        let mut delta = 0.0;
        let mut complementarity = 0.0;
        if self.free.is_empty() {
            return Outcome { iterations: 0, delta, complementarity, converged: true };
        }
        for sweep in 1..=max_sweeps {
            delta = 0.0;
            for &i in &self.free {
                let t = self.nodal_minimizer(u, i).max(self.lower(i));
                delta = f64::max(delta, (t - u.values[i]).abs());
                u.values[i] = t;
            }
            if self.w.p() != 2.0 {
                delta = delta.max(self.cluster_moves(u));
            }
            if delta <= 0.1 * opts.tol {
                complementarity = self.complementarity(u, opts.act_tol);
                if complementarity <= opts.tol {
                    return Outcome { iterations: sweep, delta, complementarity, converged: true };
                }
            }
        }
        complementarity = self.complementarity(u, opts.act_tol);
        Outcome { iterations: max_sweeps, delta, complementarity, converged: false }
    }
}

/// Initial field: exterior data outside `free`, the requested start inside.
pub(crate) fn initial_field(data: &Field, free: &[usize], lower: Option<&[f64]>, init: Init) -> Field {
    let mut u = data.clone();
    let mut is_free = vec![false; data.len()];
    for &i in free {
        is_free[i] = true;
    }
    let fixed: Vec<f64> = data
        .values
        .iter()
        .zip(&is_free)
        .filter(|(_, &f)| !f)
        .map(|(&v, _)| v)
        .chain(std::iter::once(data.far))
        .collect();
    let mean = fixed.iter().sum::<f64>() / fixed.len() as f64;
    for &i in free {
        let start = match init {
            Init::ExteriorMean => mean,
            Init::FromData => data.values[i],
        };
        u.values[i] = lower.map_or(start, |l| start.max(l[i]));
    }
    u
}

fn finish(
    problem: &Problem<'_>,
    u: Field,
    omega: &NodeSet,
    outcome: Outcome,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let w = problem.w;
    let residual_sup = apply_operator(&u, w, omega)?.sup_norm;
    let mut active_set = NodeSet::empty(w.len(), SetRole::Domain);
    if problem.lower.is_some() {
        for &i in &problem.free {
            if u.values[i] <= problem.lower(i) + opts.act_tol {
                active_set.insert(i);
            }
        }
    }
    let report = SolveReport {
        energy: energy(&u, w, omega)?,
        u,
        iterations: outcome.iterations,
        final_sweep_delta: outcome.delta,
        residual_sup,
        complementarity: outcome.complementarity,
        active_set,
        converged: outcome.converged,
    };
    if report.converged {
        Ok(report)
    } else {
        Err(Error::NotConverged(Box::new(report)))
    }
}

fn check_data(g: &Field, omega: &NodeSet, w: &WeightMatrix) -> Result<()> {
    w.check_len(g.len())?;
    w.check_len(omega.len())?;
    if !g.far.is_finite() || g.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Params("exterior data must be finite".into()));
    }
    Ok(())
}

/// `Hg`: the energy minimizer in Ω among fields equal to `g` outside Ω.
pub fn solve_dirichlet(g: &Field, omega: &NodeSet, w: &WeightMatrix, opts: &SolveOptions) -> Result<SolveReport> {
    check_data(g, omega, w)?;
    let problem = Problem { w, free: omega.indices(), lower: None, mass: 0.0 };
    let mut u = initial_field(g, &problem.free, None, opts.init);
    let outcome = problem.run(&mut u, opts);
    finish(&problem, u, omega, outcome, opts)
}

/// Solution of the `K_{ψ,g}(Ω)` obstacle problem.
pub fn solve_obstacle(spec: &ObstacleSpec, omega: &NodeSet, w: &WeightMatrix, opts: &SolveOptions) -> Result<SolveReport> {
    check_data(&spec.g, omega, w)?;
    let lower = match &spec.psi {
        None => None,
        Some(psi) => {
            w.check_len(psi.len())?;
            for i in omega.indices() {
                let v = psi.values[i];
                if v.is_nan() || v == f64::INFINITY {
                    return Err(Error::Infeasible(format!("obstacle is {v} at interior node {i}")));
                }
            }
            Some(psi.values.clone())
        }
    };
    let problem = Problem { w, free: omega.indices(), lower, mass: 0.0 };
    let mut u = initial_field(&spec.g, &problem.free, problem.lower.as_deref(), opts.init);
    let outcome = problem.run(&mut u, opts);
    finish(&problem, u, omega, outcome, opts)
}
