//! Operations checked against independent reference computations: exact
//! integrals, dense linear algebra, active-set enumeration, grid search and
//! plain nested loops.

mod common;

use common::*;
use fracperron::capacity::condenser_capacity;
use fracperron::energy::{apply_operator, classify_node, energy_form, NodeClass};
use fracperron::model::{assemble_weights, build_grid, Field, FracParams, NodeSet, SetRole};
use fracperron::solver::{solve_dirichlet, solve_obstacle, ObstacleSpec, SolveOptions};

#[test]
fn near_pair_weight_is_close_to_the_exact_double_integral() {
    // Cells [-0.25, 0.25] and [0.75, 1.25] with kernel |x - y|^-2:
    // the inner integral is 1/(0.75 - x) - 1/(1.25 - x), the outer gives ln(4/3).
    let exact = (4.0_f64 / 3.0).ln();
    let oracle = simpson(
        &|x| simpson(&|y: f64| (y - x).powi(-2), 0.75, 1.25, 1e-13),
        -0.25,
        0.25,
        1e-12,
    );
    assert!((oracle - exact).abs() < 1e-9, "oracle {oracle} vs {exact}");

    let grid = build_grid(&[(-0.25, 1.25)], 0.5, 1).unwrap();
    let w = assemble_weights(&grid, &FracParams::new(0.5, 2.0).unwrap()).unwrap();
    let midpoint = 0.25;
    assert!((w.weight(0, 2) - exact).abs() <= 0.15 * exact, "weight {}", w.weight(0, 2));
    assert!((w.weight(0, 2) - midpoint).abs() > 1e-3, "near pairs must not use the midpoint rule");
    assert_eq!(w.weight(0, 2), w.weight(2, 0));
}

#[test]
fn far_field_coefficient_of_the_centre_node() {
    // ∫_{|y|>1} |y|^-2 dy = 2
    let grid = build_grid(&[(-1.0, 1.0)], 2.0 / 3.0, 1).unwrap();
    let w = assemble_weights(&grid, &FracParams::new(0.5, 2.0).unwrap()).unwrap();
    assert!(grid.center(1)[0].abs() < 1e-15);
    assert!((w.tail(1) - 2.0).abs() < 1e-12);
    assert!((w.far_weight(1) - 2.0 * grid.cell_measure()).abs() < 1e-12);
}

#[test]
fn energy_form_matches_the_naive_loop() {
    let mut rng = rng(11);
    for (grid, p) in [(line(6, 0.25), 2.0), (line(6, 0.25), 1.5), (line(6, 0.25), 3.0), (square(3, 0.5), 2.5)] {
        let w = assemble_weights(&grid, &FracParams::new(0.4, p).unwrap()).unwrap();
        let omega = inner(&grid, 1);
        for _ in 0..5 {
            let u = random_field(&mut rng, grid.len(), -1.0, 1.0);
            let v = random_field(&mut rng, grid.len(), -1.0, 1.0);
            let fast = energy_form(&u, &v, &w, &omega).unwrap();
            let slow = naive_energy_form(&u, &v, &w, &omega);
            assert!((fast - slow).abs() <= 1e-12 * slow.abs().max(1.0), "{fast} vs {slow}");
        }
    }
}

#[test]
fn linear_residual_matches_dense_matrices() {
    let mut rng = rng(12);
    for grid in [line(9, 0.2), square(4, 0.25)] {
        let w = assemble_weights(&grid, &FracParams::new(0.6, 2.0).unwrap()).unwrap();
        let omega = inner(&grid, 1);
        let u = random_field(&mut rng, grid.len(), -2.0, 2.0);
        let r = apply_operator(&u, &w, &omega).unwrap();
        let dense = dense_residual_p2(&u, &w);
        let scale = dense.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        for (&i, &ri) in r.nodes.iter().zip(&r.values) {
            assert!((ri - dense[i]).abs() <= 1e-12 * scale, "node {i}: {ri} vs {}", dense[i]);
        }
    }
}

#[test]
fn linear_dirichlet_problem_matches_dense_solve() {
    let grid = line(5, 0.2);
    let w = assemble_weights(&grid, &FracParams::new(0.3, 2.0).unwrap()).unwrap();
    let omega = inner(&grid, 1);
    assert_eq!(omega.count(), 3);
    let g = Field { values: vec![0.7, 0.0, 0.0, 0.0, -0.4], far: 0.25 };
    let expected = dense_harmonic(&g, &omega.indices(), &w);
    let report = solve_dirichlet(&g, &omega, &w, &SolveOptions::for_p(2.0).with_tol(1e-12)).unwrap();
    for i in 0..grid.len() {
        assert!((report.u.values[i] - expected[i]).abs() < 1e-10, "node {i}");
    }
    for i in omega.indices() {
        let class = classify_node(&report.u, i, &w, &omega, 1e-12).unwrap();
        assert_eq!(class, NodeClass::HarmonicLike);
    }
}

#[test]
fn solver_output_is_harmonic_like_at_its_tolerance() {
    let mut rng = rng(13);
    for p in [1.5, 2.0, 3.0] {
        let grid = line(10, 0.2);
        let w = assemble_weights(&grid, &FracParams::new(0.5, p).unwrap()).unwrap();
        let omega = inner(&grid, 2);
        let g = random_field(&mut rng, grid.len(), 0.0, 1.0);
        let opts = SolveOptions::for_p(p);
        let report = solve_dirichlet(&g, &omega, &w, &opts).unwrap();
        for i in omega.indices() {
            assert!(classify_node(&report.u, i, &w, &omega, opts.tol).unwrap().is_super());
            assert_eq!(classify_node(&report.u, i, &w, &omega, opts.tol).unwrap(), NodeClass::HarmonicLike);
        }
    }
}

#[test]
fn obstacle_problem_matches_active_set_enumeration() {
    let mut rng = rng(14);
    for _ in 0..5 {
        let grid = line(7, 0.25);
        let w = assemble_weights(&grid, &FracParams::new(0.45, 2.0).unwrap()).unwrap();
        let omega = inner(&grid, 1);
        assert_eq!(omega.count(), 5);
        let g = random_field(&mut rng, grid.len(), -1.0, 1.0);
        let psi: Vec<f64> = (0..grid.len()).map(|_| rand::Rng::gen_range(&mut rng, -0.5..1.2)).collect();
        let expected = enumerate_active_sets(&g, &psi, &omega, &w);
        let spec = ObstacleSpec { psi: Some(Field { values: psi.clone(), far: f64::NEG_INFINITY }), g: g.clone() };
        let report = solve_obstacle(&spec, &omega, &w, &SolveOptions::for_p(2.0).with_tol(1e-12)).unwrap();
        for i in omega.indices() {
            assert!((report.u.values[i] - expected[i]).abs() < 1e-9, "node {i}: {} vs {}", report.u.values[i], expected[i]);
            assert!(report.u.values[i] >= psi[i]);
        }
    }
}

#[test]
fn nonlinear_three_node_problems_match_grid_search() {
    let mut rng = rng(15);
    for p in [1.5, 3.0] {
        let grid = line(5, 0.25);
        let w = assemble_weights(&grid, &FracParams::new(0.5, p).unwrap()).unwrap();
        let omega = inner(&grid, 1);
        let g = random_field(&mut rng, grid.len(), 0.0, 1.0);
        let nodes = omega.indices();
        let energy_at = |x: &[f64]| {
            let mut u = g.clone();
            for (&i, &xi) in nodes.iter().zip(x) {
                u.values[i] = xi;
            }
            naive_energy(&u, &w, &omega)
        };
        let best = grid_search(energy_at, 0.0, 1.0, 3, 1e-7);
        let report = solve_dirichlet(&g, &omega, &w, &SolveOptions::for_p(p).with_tol(1e-11)).unwrap();
        for (k, &i) in nodes.iter().enumerate() {
            assert!((report.u.values[i] - best[k]).abs() < 1e-6, "p = {p}, node {i}: {} vs {}", report.u.values[i], best[k]);
        }
    }
}

#[test]
fn condenser_capacity_of_the_middle_node_matches_constrained_solve() {
    let grid = line(7, 0.2);
    let params = FracParams::new(0.5, 2.0).unwrap();
    let w = assemble_weights(&grid, &params).unwrap();
    let omega = inner(&grid, 1);
    assert_eq!(omega.count(), 5);
    let k = NodeSet::from_indices(grid.len(), &[3], SetRole::Compact);
    let mut fixed = Field::constant(grid.len(), 0.0);
    fixed.values[3] = 1.0;
    let free: Vec<usize> = omega.indices().into_iter().filter(|&i| i != 3).collect();
    let v = Field { values: dense_harmonic(&fixed, &free, &w), far: 0.0 };
    let expected = naive_energy(&v, &w, &NodeSet::full(grid.len(), SetRole::Domain));
    let got = condenser_capacity(&k, &omega, &params, &w, &SolveOptions::for_p(2.0).with_tol(1e-12)).unwrap();
    assert!((got.value - expected).abs() <= 1e-9 * expected, "{} vs {expected}", got.value);
}
