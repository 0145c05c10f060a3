mod common;

use common::*;
use nonlocal_mp::discrete::{build_weight_table, DiscreteForm, DomainMask, Grid};
use nonlocal_mp::kernels::KernelSpec;
use nonlocal_mp::maxprinciple::{
    solve_dirichlet, solve_dirichlet_dense, solve_dirichlet_with, verify_supersolution, weak_mp_bound_check, ProblemData,
};
use nonlocal_mp::propagation::{build_ssp_chain, strong_mp_check, support_graph, verify_certificate, ChainOptions, ComponentVerdict};
use nonlocal_mp::spectral::{lambda1, EigenOptions};
use nonlocal_mp::{Error, Execution};
use rand::Rng;

fn interval_form(h: f64, half: f64) -> DiscreteForm {
    let table = build_weight_table(&KernelSpec::ball(1, 1.0), h, 1.0, 3).unwrap();
    let grid = Grid::covering(vec![0.0], half + (table.reach() as f64 + 1.0) * h, h).unwrap();
    let mask = DomainMask::from_fn(&grid, |x| x[0].abs() <= half + 1e-9);
    DiscreteForm::new(grid, mask, table).unwrap()
}

#[test]
fn eigenfunction_perturbation_stays_a_supersolution() {
    let f = interval_form(0.05, 0.6);
    let n = f.grid.len();
    let eig = lambda1(&f, &f.mask, &EigenOptions::default()).unwrap();
    let c = vec![-0.3; n];
    let g: Vec<f64> = f.grid.positions().iter().map(|x| x[0].cos()).collect();
    let p = ProblemData::new(f.clone(), c, g, vec![0.5; n]).unwrap();
    let s = solve_dirichlet_with(&p, 1e-13, &eig).unwrap();
    let base = verify_supersolution(&p, &s.u, 1e-9).unwrap();
    assert!(base.min_slack.abs() < 1e-9);
    let phi = f.extend(&eig.vector, &vec![0.0; n]);
    let bumped: Vec<f64> = s.u.iter().zip(&phi).map(|(a, b)| a + 2.0 * b).collect();
    let rep = verify_supersolution(&p, &bumped, 1e-9).unwrap();
    assert!(rep.is_supersolution && rep.min_slack > 0.0);
}

#[test]
fn reflection_symmetric_data_gives_a_symmetric_solution() {
    let f = interval_form(0.05, 0.5);
    let n = f.grid.len();
    let pos = f.grid.positions();
    let g: Vec<f64> = pos.iter().map(|x| 1.0 + x[0] * x[0]).collect();
    let ext: Vec<f64> = pos.iter().map(|x| x[0].abs()).collect();
    let p = ProblemData::new(f, vec![-0.2; n], g, ext).unwrap();
    let u = solve_dirichlet(&p, 1e-13).unwrap().u;
    for i in 0..n {
        assert!((u[i] - u[n - 1 - i]).abs() <= 1e-10 * (1.0 + u[i].abs()));
    }
}

#[test]
fn nonnegative_source_gives_nonnegative_solution() {
    for seed in 0..20 {
        let mut r = rng_for(101, seed);
        let k = kernel_catalog(2, &mut r);
        let f = random_form(&k, 0.15, &mut r);
        let n = f.grid.len();
        let g = uniform_vec(&mut r, n, 0.0, 1.0);
        let p = ProblemData::new(f, vec![0.0; n], g, vec![0.0; n]).unwrap();
        let s = solve_dirichlet(&p, 1e-12).unwrap();
        assert!(s.u.iter().all(|&v| v >= -1e-12));
        let eig = lambda1(&p.form, &p.form.mask, &EigenOptions::default()).unwrap();
        assert_eq!(weak_mp_bound_check(&p, &s.u, &eig).unwrap().u_minus_norm, 0.0);
    }
}

#[test]
fn coefficient_above_the_eigenvalue_breaks_positivity() {
    let mut found = 0;
    for seed in 0..10 {
        let mut r = rng_for(102, seed);
        let k = kernel_catalog(1 + seed as usize % 2, &mut r);
        let f = random_form(&k, if seed % 2 == 0 { 0.05 } else { 0.15 }, &mut r);
        let n = f.grid.len();
        let eig = lambda1(&f, &f.mask, &EigenOptions { rel_tol: 1e-12, ..Default::default() }).unwrap();
        let c = vec![eig.value * (1.0 + r.random_range(1e-3..1e-2)); n];
        let g = uniform_vec(&mut r, n, 0.0, 1.0);
        let p = ProblemData::new(f, c, g, vec![0.0; n]).unwrap();
        assert!(matches!(solve_dirichlet_with(&p, 1e-10, &eig), Err(Error::HypothesisViolation(_))));
        assert!(matches!(weak_mp_bound_check(&p, &vec![0.0; n], &eig), Err(Error::HypothesisViolation(_))));
        let u = solve_dirichlet_dense(&p).unwrap();
        if u.iter().any(|&v| v < 0.0) {
            found += 1;
        }
    }
    assert!(found >= 1);
}

#[test]
fn support_graph_examples() {
    let f = interval_form(0.1, 0.5);
    assert_eq!(support_graph(&f).components.len(), 1);
    let empty = f.with_mask(DomainMask::from_indices(&f.grid, &[])).unwrap();
    assert!(support_graph(&empty).components.is_empty());
}

#[test]
fn vanishing_function_is_identically_small() {
    let f = interval_form(0.1, 0.5);
    let n = f.grid.len();
    let p = ProblemData::new(f, vec![-1.0; n], vec![0.0; n], vec![0.0; n]).unwrap();
    let rep = strong_mp_check(&p, &vec![0.0; n], 1e-12).unwrap();
    assert!(rep.components.iter().all(|c| matches!(c.verdict, ComponentVerdict::IdenticallySmall { .. })));
}

#[test]
fn positive_exterior_data_propagates_everywhere() {
    let f = interval_form(0.05, 0.8);
    let n = f.grid.len();
    let ext: Vec<f64> = f.grid.positions().iter().map(|x| if x[0] > 0.0 { 1.0 } else { 0.0 }).collect();
    let p = ProblemData::new(f, vec![-0.5; n], vec![0.0; n], ext).unwrap();
    let u = solve_dirichlet(&p, 1e-13).unwrap().u;
    let rep = strong_mp_check(&p, &u, 1e-12).unwrap();
    assert!(matches!(rep.components[0].verdict, ComponentVerdict::StrictlyPositive { .. }));
}

#[test]
fn pushed_down_node_is_reported_not_propagated() {
    let f = interval_form(0.05, 0.8);
    let n = f.grid.len();
    let p = ProblemData::new(f, vec![0.0; n], vec![0.0; n], vec![1.0; n]).unwrap();
    let mut u = solve_dirichlet(&p, 1e-13).unwrap().u;
    let mid = p.form.grid.nearest(&[0.0]);
    u[mid] = 0.0;
    assert!(matches!(strong_mp_check(&p, &u, 1e-12), Err(Error::InvalidInput(_))));
}

/// A positive bump near the chain start forces positivity on every chain ball.
#[test]
fn certificates_are_sound_for_the_discrete_model() {
    let k = KernelSpec::ball(2, 1.0);
    let cert = build_ssp_chain(&k, &[-0.3, 0.0], &[0.4, 0.2], 0.25, 5, &ChainOptions::default()).unwrap();
    let h = 0.1;
    let table = build_weight_table(&k, h, 1.0, 2).unwrap();
    let grid = Grid::covering(vec![0.0, 0.0], 1.0 + (table.reach() as f64 + 1.0) * h, h).unwrap();
    let mask = DomainMask::ball(&grid, &[0.0, 0.0], 0.95);
    let f = DiscreteForm::new(grid.clone(), mask, table).unwrap();
    let n = grid.len();
    let mut g = vec![0.0; n];
    g[grid.nearest(&cert.path.points[0])] = 1.0;
    let p = ProblemData::new(f, vec![-0.5; n], g, vec![0.0; n]).unwrap();
    let u = solve_dirichlet(&p, 1e-13).unwrap().u;
    let rep = strong_mp_check(&p, &u, 1e-14).unwrap();
    let graph = support_graph(&p.form);
    for l in &cert.links {
        let node = grid.nearest(&l.m_center);
        let comp = graph.label[p.form.compact_index(node).unwrap()];
        assert!(matches!(rep.components[comp].verdict, ComponentVerdict::StrictlyPositive { .. }));
        assert!(u[node] > 0.0);
    }
}

#[test]
fn fresh_coupling_estimates_are_reproducible() {
    let kernels = [KernelSpec::ball(2, 1.0), cusp()];
    let ratios = Execution::Parallel.map(50, |i| {
        let mut r = rng_for(103, i as u64);
        let k = &kernels[i % 2];
        let eps1 = if i % 2 == 0 { 0.25 } else { 0.1 };
        let cert = build_ssp_chain(k, &[0.0, 0.0], &in_ball(&mut r, 2, 1.0), eps1, i as u64, &ChainOptions::default()).unwrap();
        let chk = verify_certificate(&cert, k, 5000 + i as u64);
        assert!(chk.valid, "{:?}", chk.failures);
        cert.links
            .iter()
            .zip(&chk.fresh_kappa)
            .map(|(l, &f)| (l.kappa / f).max(f / l.kappa))
            .fold(1.0, f64::max)
    });
    let worst = ratios.iter().copied().fold(1.0, f64::max);
    assert!(worst <= 3.0, "{worst}");
}
