#![allow(dead_code)]

use fracperron::model::{build_grid, Field, Grid, NodeSet, SetRole, WeightMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `cells` cells of width `h` centered on the origin.
pub fn line(cells: usize, h: f64) -> Grid {
    let half = 0.5 * cells as f64 * h;
    build_grid(&[(-half, half)], h, 1).unwrap()
}

pub fn square(cells: usize, h: f64) -> Grid {
    let half = 0.5 * cells as f64 * h;
    build_grid(&[(-half, half), (-half, half)], h, 2).unwrap()
}

/// Every node except the first and last `margin` nodes along each axis.
pub fn inner(grid: &Grid, margin: usize) -> NodeSet {
    let [nx, ny] = grid.counts();
    let mut set = NodeSet::empty(grid.len(), SetRole::Domain);
    for i in 0..grid.len() {
        let [ix, iy] = grid.multi_index(i);
        let ok_x = ix >= margin && ix + margin < nx;
        let ok_y = grid.dim() == 1 || (iy >= margin && iy + margin < ny);
        if ok_x && ok_y {
            set.insert(i);
        }
    }
    set
}

pub fn random_field(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Field {
    Field { values: (0..n).map(|_| rng.gen_range(lo..hi)).collect(), far: rng.gen_range(lo..hi) }
}

pub fn phi(t: f64, p: f64) -> f64 {
    t.abs().powf(p - 1.0) * t.signum()
}

/// `E(u, v)` by an explicit loop over ordered pairs of multi-indices.
pub fn naive_energy_form(u: &Field, v: &Field, w: &WeightMatrix, omega: &NodeSet) -> f64 {
    let grid = w.grid();
    let p = w.p();
    let [nx, ny] = grid.counts();
    let mut total = 0.0;
    for iy in 0..ny {
        for ix in 0..nx {
            let i = grid.index(ix, iy);
            for jy in 0..ny {
                for jx in 0..nx {
                    let j = grid.index(jx, jy);
                    if i == j || !(omega.contains(i) || omega.contains(j)) {
                        continue;
                    }
                    let du = u.values[i] - u.values[j];
                    let dv = v.values[i] - v.values[j];
                    total += phi(du, p) * dv * w.weight(i, j);
                }
            }
            if omega.contains(i) {
                total += 2.0 * phi(u.values[i] - u.far, p) * (v.values[i] - v.far) * w.far_weight(i);
            }
        }
    }
    total
}

pub fn naive_energy(u: &Field, w: &WeightMatrix, omega: &NodeSet) -> f64 {
    naive_energy_form(u, u, w, omega)
}

/// Linear system of the p = 2 Dirichlet problem restricted to `free`, with
/// every other node held at `fixed` values: rows
/// `Σ_j W_ij (u_i - u_j) + F_i (u_i - far) = 0`.
pub fn dense_harmonic(fixed: &Field, free: &[usize], w: &WeightMatrix) -> Vec<f64> {
    let n = w.len();
    let m = free.len();
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        pos[i] = k;
    }
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (k, &i) in free.iter().enumerate() {
        let mut diag = w.far_weight(i);
        b[k] += w.far_weight(i) * fixed.far;
        for j in 0..n {
            if j == i {
                continue;
            }
            let wij = w.weight(i, j);
            diag += wij;
            if pos[j] == usize::MAX {
                b[k] += wij * fixed.values[j];
            } else {
                a[(k, pos[j])] -= wij;
            }
        }
        a[(k, k)] += diag;
    }
    let mut out = fixed.values.clone();
    if m == 0 {
        return out;
    }
    let x = a.lu().solve(&b).expect("the Dirichlet matrix is nonsingular");
    for (k, &i) in free.iter().enumerate() {
        out[i] = x[k];
    }
    out
}

/// `2 Σ_j W_ij (u_i - u_j) + 2 F_i (u_i - far)` for p = 2 from the dense
/// matrices `2(D - A)u + 2 c_far (u - far)`.
pub fn dense_residual_p2(u: &Field, w: &WeightMatrix) -> Vec<f64> {
    let n = w.len();
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { w.weight(i, j) });
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| a.row(i).sum()));
    let x = DVector::from_column_slice(&u.values);
    let lap = (d - a) * x;
    (0..n).map(|i| 2.0 * lap[i] + 2.0 * w.far_weight(i) * (u.values[i] - u.far)).collect()
}

/// p = 2 obstacle problem by enumerating every active set: nodes in the set
/// sit on the obstacle, the rest solve the linear system. Returns the
/// feasible candidate with the smallest energy.
pub fn enumerate_active_sets(g: &Field, psi: &[f64], omega: &NodeSet, w: &WeightMatrix) -> Vec<f64> {
    let interior = omega.indices();
    let m = interior.len();
    assert!(m <= 16);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let mut fixed = g.clone();
        let mut free = Vec::new();
        for (k, &i) in interior.iter().enumerate() {
            if mask & (1 << k) != 0 {
                fixed.values[i] = psi[i];
            } else {
                free.push(i);
            }
        }
        let values = dense_harmonic(&fixed, &free, w);
        if interior.iter().any(|&i| values[i] < psi[i] - 1e-12) {
            continue;
        }
        let u = Field { values, far: g.far };
        let e = naive_energy(&u, w, omega);
        if best.as_ref().map_or(true, |(b, _)| e < *b) {
            best = Some((e, u.values));
        }
    }
    best.expect("some active set is feasible").1
}

/// Minimizes a convex function on a box by repeated grid search, shrinking
/// the box around the best point until its half-width is below `tol`.
pub fn grid_search(f: impl Fn(&[f64]) -> f64, lo: f64, hi: f64, dim: usize, tol: f64) -> Vec<f64> {
    const STEPS: usize = 20;
    let mut center = vec![0.5 * (lo + hi); dim];
    let mut half = 0.5 * (hi - lo);
    while half > tol {
        let step = 2.0 * half / STEPS as f64;
        let mut best = (f64::INFINITY, center.clone());
        let total = (STEPS + 1).pow(dim as u32);
        for code in 0..total {
            let mut x = center.clone();
            let mut c = code;
            for xk in x.iter_mut() {
                *xk += -half + (c % (STEPS + 1)) as f64 * step;
                c /= STEPS + 1;
            }
            let v = f(&x);
            if v < best.0 {
                best = (v, x);
            }
        }
        center = best.1;
        half = 3.0 * step;
    }
    center
}

/// Adaptive Simpson rule.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 30)
}
