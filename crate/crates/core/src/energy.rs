//! Discrete energy form, nodal operator residuals and node classification.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Field, NodeSet, WeightMatrix};

/// `Φ(t) = |t|^(p-2) t`
#[inline]
pub fn phi(t: f64, p: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else if p == 2.0 {
        t
    } else {
        t.abs().powf(p - 1.0).copysign(t)
    }
}

/// Discrete `(Lu)_i` restricted to interior nodes, in row-major node order.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
    pub sup_norm: f64,
}

impl Residual {
    pub fn get(&self, node: usize) -> Option<f64> {
        self.nodes.binary_search(&node).ok().map(|k| self.values[k])
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn check(u: &Field, w: &WeightMatrix, omega: &NodeSet) -> Result<()> {
    w.check_len(u.len())?;
    w.check_len(omega.len())
}

/// `E(u, v)`: ordered pairs with at least one endpoint in Ω, plus the
/// far-field interaction of every Ω node (counted for both orderings).
pub fn energy_form(u: &Field, v: &Field, w: &WeightMatrix, omega: &NodeSet) -> Result<f64> {
    check(u, w, omega)?;
    w.check_len(v.len())?;
    let p = w.p();
    let n = w.len();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = w.row(i);
            let inside = omega.contains(i);
            let mut acc = 0.0;
            for j in 0..n {
                if j == i || !(inside || omega.contains(j)) {
                    continue;
                }
                acc += phi(u.values[i] - u.values[j], p) * (v.values[i] - v.values[j]) * row[j];
            }
            if inside {
                acc += 2.0 * phi(u.values[i] - u.far, p) * (v.values[i] - v.far) * w.far_weight(i);
            }
            acc
        })
        .collect();
    Ok(rows.iter().sum())
}

/// `E(u, u)`
pub fn energy(u: &Field, w: &WeightMatrix, omega: &NodeSet) -> Result<f64> {
    energy_form(u, u, w, omega)
}

/// `[u]^p` over all pairs, including the far field: `E(u, u)` with Ω = every node.
pub fn seminorm_p(u: &Field, w: &WeightMatrix) -> Result<f64> {
    energy(u, w, &NodeSet::full(w.len(), crate::model::SetRole::Domain))
}

/// `2 Σ_j Φ(u_i - u_j) W_ij + 2 Φ(u_i - far) F_i`, which equals `E(u, e_i)`.
pub(crate) fn nodal_residual(values: &[f64], far: f64, i: usize, w: &WeightMatrix) -> f64 {
    let p = w.p();
    let row = w.row(i);
    let ui = values[i];
    let mut acc = 0.0;
    for (j, (&uj, &wij)) in values.iter().zip(row).enumerate() {
        if j != i {
            acc += phi(ui - uj, p) * wij;
        }
    }
    2.0 * (acc + phi(ui - far, p) * w.far_weight(i))
}

pub fn apply_operator(u: &Field, w: &WeightMatrix, omega: &NodeSet) -> Result<Residual> {
    check(u, w, omega)?;
    let nodes = omega.indices();
    let values: Vec<f64> =
        nodes.par_iter().map(|&i| nodal_residual(&u.values, u.far, i, w)).collect();
    let sup_norm = values.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    Ok(Residual { nodes, values, sup_norm })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeClass {
    /// `|r_i| <= tol`
    HarmonicLike,
    /// `r_i > tol`
    SupersolutionLike,
    /// `r_i < -tol`
    SubsolutionLike,
    Neither,
}

impl NodeClass {
    /// `r_i >= -tol`
    pub fn is_super(self) -> bool {
        matches!(self, NodeClass::HarmonicLike | NodeClass::SupersolutionLike)
    }

    /// `r_i <= tol`
    pub fn is_sub(self) -> bool {
        matches!(self, NodeClass::HarmonicLike | NodeClass::SubsolutionLike)
    }
}

/// Reports the most specific class of node `i`.
pub fn classify_node(u: &Field, i: usize, w: &WeightMatrix, omega: &NodeSet, tol: f64) -> Result<NodeClass> {
    check(u, w, omega)?;
    if i >= omega.len() || !omega.contains(i) {
        return Err(Error::NotInterior(i));
    }
    let r = nodal_residual(&u.values, u.far, i, w);
    Ok(if r.abs() <= tol {
        NodeClass::HarmonicLike
    } else if r > tol {
        NodeClass::SupersolutionLike
    } else if r < -tol {
        NodeClass::SubsolutionLike
    } else {
        NodeClass::Neither
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble_weights, build_grid, FracParams, SetRole, WeightMatrix};

    fn two_node(wv: f64, p: f64) -> WeightMatrix {
        let g = build_grid(&[(0.0, 2.0)], 1.0, 1).unwrap();
        WeightMatrix::from_parts(g, p, vec![0.0, wv, wv, 0.0], vec![0.0, 0.0]).unwrap()
    }

    #[test]
    fn two_node_energy() {
        let w = two_node(0.7, 2.0);
        let u = Field::new(vec![1.0, 0.0], 0.0).unwrap();
        let omega = NodeSet::from_indices(2, &[0], SetRole::Domain);
        assert!((energy(&u, &w, &omega).unwrap() - 1.4).abs() < 1e-15);
        let both = NodeSet::full(2, SetRole::Domain);
        assert!((energy(&u, &w, &both).unwrap() - 1.4).abs() < 1e-15);
    }

    #[test]
    fn constants_have_zero_energy_and_residual() {
        let g = build_grid(&[(-1.0, 1.0)], 0.25, 1).unwrap();
        let w = assemble_weights(&g, &FracParams::new(0.3, 3.0).unwrap()).unwrap();
        let omega = NodeSet::from_indices(g.len(), &[2, 3, 4, 5], SetRole::Domain);
        let u = Field::constant(g.len(), 2.5);
        let v = Field::from_fn(&g, 0.3, |c| c[0] * c[0]);
        assert_eq!(energy_form(&u, &v, &w, &omega).unwrap(), 0.0);
        let r = apply_operator(&u, &w, &omega).unwrap();
        assert_eq!(r.sup_norm, 0.0);
        for i in omega.indices() {
            assert_eq!(classify_node(&u, i, &w, &omega, 0.0).unwrap(), NodeClass::HarmonicLike);
        }
    }

    #[test]
    fn symmetric_single_node_balances_at_half() {
        // One interior node with equal weights to two exterior nodes at 0 and 1.
        let g = build_grid(&[(0.0, 3.0)], 1.0, 1).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let w = WeightMatrix::from_parts(
                g.clone(),
                p,
                vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
                vec![0.0; 3],
            )
            .unwrap();
            let omega = NodeSet::from_indices(3, &[1], SetRole::Domain);
            let r = |t: f64| {
                let u = Field::new(vec![0.0, t, 1.0], 0.0).unwrap();
                apply_operator(&u, &w, &omega).unwrap().values[0]
            };
            assert_eq!(r(0.5), 0.0);
            assert!(r(0.6) > 0.0 && r(0.4) < 0.0);
        }
    }

    #[test]
    fn strict_local_max_is_supersolution_like() {
        let g = build_grid(&[(-1.0, 1.0)], 0.25, 1).unwrap();
        let w = assemble_weights(&g, &FracParams::new(0.5, 2.0).unwrap()).unwrap();
        let omega = NodeSet::from_indices(g.len(), &[3, 4], SetRole::Domain);
        let mut u = Field::from_fn(&g, 0.0, |c| 1.0 - c[0].abs());
        u.values[3] = 5.0;
        assert_eq!(classify_node(&u, 3, &w, &omega, 1e-12).unwrap(), NodeClass::SupersolutionLike);
        assert!(matches!(classify_node(&u, 0, &w, &omega, 1e-12), Err(Error::NotInterior(0))));
    }

    #[test]
    fn mismatched_fields_are_rejected() {
        let w = two_node(1.0, 2.0);
        let u = Field::constant(3, 0.0);
        let omega = NodeSet::full(2, SetRole::Domain);
        assert!(matches!(energy(&u, &w, &omega), Err(Error::GridMismatch { .. })));
    }
}
