//! End-to-end acceptance checks. Each test prints one line
//! `criterion N: PASS|FAIL ...` with its measured runtime, written straight
//! to stderr so it shows up without `--nocapture`.

mod common;

use common::*;
use nalgebra::{DMatrix, SymmetricEigen};
use nonlocal_mp::discrete::{
    build_weight_table, mollify, pointwise_pv, DiscreteForm, DomainMask, Grid, PvOptions, TestFunction,
};
use nonlocal_mp::kernels::{KernelSpec, Primitive};
use nonlocal_mp::lattice::{bfs_confined_path, construct_path, lattice_point_in_ball, verify_path};
use nonlocal_mp::maxprinciple::{solve_dirichlet_with, verify_supersolution, weak_mp_bound_check, ProblemData};
use nonlocal_mp::propagation::{
    build_ssp_chain, strong_mp_check, support_graph, verify_certificate, ChainOptions, ComponentVerdict,
};
use nonlocal_mp::spectral::{lambda1, lambda1_lower_bound, small_volume_limit_check, EigenOptions, SmallVolumeOptions};
use nonlocal_mp::Execution;
use rand::Rng;
use std::io::Write;
use std::time::{Duration, Instant};

fn report(n: u32, pass: bool, detail: String, elapsed: Duration, limit_s: f64) {
    let in_time = elapsed.as_secs_f64() <= limit_s;
    let verdict = if pass && in_time { "PASS" } else { "FAIL" };
    let line = format!("criterion {n}: {verdict} {detail} [{:.2}s of {limit_s}s]\n", elapsed.as_secs_f64());
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
    assert!(in_time, "criterion {n} exceeded its runtime budget: {:.2}s", elapsed.as_secs_f64());
}

#[test]
fn criterion_01_lattice_confinement() {
    let t0 = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for dim in 1..=4usize {
        let results = Execution::Parallel.map(1000, |i| {
            let mut r = rng_for(1, (dim * 10_000 + i) as u64);
            let lat = random_lattice(dim, 1e3, &mut r);
            let rho = lat.gram_scale() * r.random_range(1.0..4.0);
            let start = in_ball(&mut r, dim, 5.0);
            let end = loop {
                let y = in_ball(&mut r, dim, rho);
                let p = lat.point(&lat.round_coords(&y));
                let len = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                if len < rho * (1.0 - 1e-9) {
                    break start.iter().zip(&p).map(|(a, b)| a + b).collect::<Vec<f64>>();
                }
            };
            let radius = 4f64.powi(dim as i32 - 1) * rho;
            let ok = match construct_path(&lat, &start, &end, rho) {
                Ok(path) => verify_path(&path, &lat, &start, radius).valid,
                Err(_) => false,
            };
            let bfs = matches!(bfs_confined_path(&lat, &start, &end, radius, 4_000_000), Ok(Some(_)));
            (ok, bfs == ok)
        });
        let built = results.iter().filter(|r| r.0).count();
        let agree = results.iter().filter(|r| r.1).count();
        pass &= built == 1000 && agree == 1000;
        lines.push(format!("N={dim}: {built}/1000 confined, {agree}/1000 BFS agree"));
    }
    report(1, pass, lines.join("; "), t0.elapsed(), 60.0);
}

#[test]
fn criterion_02_lattice_rounding() {
    let t0 = Instant::now();
    let ok = Execution::Parallel.map(10_000, |i| {
        let mut r = rng_for(2, i as u64);
        let dim = 1 + i % 4;
        let lat = random_lattice(dim, 1e4, &mut r);
        let x0 = in_ball(&mut r, dim, 100.0);
        let half = 0.5 * lat.gram_scale();
        let p = lattice_point_in_ball(&lat, &x0, half * (1.0 + 1e-12)).unwrap();
        let d = p.iter().zip(&x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        d <= half * (1.0 + 1e-12)
    });
    let good = ok.iter().filter(|b| **b).count();
    report(2, good == ok.len(), format!("{good}/{} within ½Σ|v_k|", ok.len()), t0.elapsed(), 5.0);
}

#[test]
fn criterion_03_rearrangement_bound() {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for (dim, mass) in [(1usize, 2.0), (2, std::f64::consts::PI)] {
        let k = KernelSpec::ball(dim, 1.0);
        for frac in [0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99] {
            let r = frac * mass;
            let lb = lambda1_lower_bound(&k, r, 3).unwrap();
            let exact = mass - r;
            worst = worst.max((lb.value - exact).abs() / exact);
        }
    }
    let lb = lambda1_lower_bound(&two_level(), 0.5, 3).unwrap();
    let two = (lb.value - 2.0).abs() / 2.0;
    worst = worst.max(two);
    report(3, worst <= 1e-3, format!("max relative error {worst:e}; two-level value {}", lb.value), t0.elapsed(), 10.0);
}

#[test]
fn criterion_04_small_volume_limit() {
    let t0 = Instant::now();
    let kernels = [("ball N=1", KernelSpec::ball(1, 1.0)), ("two-level N=1", two_level()), ("ball N=2", KernelSpec::ball(2, 1.0))];
    let mut pass = true;
    let mut lines = Vec::new();
    for (name, k) in kernels {
        let opts = SmallVolumeOptions { spacing: 1.0 / 64.0, trunc_radius: 4.0, ..Default::default() };
        let cell = opts.spacing.powi(k.dimension as i32);
        let rep = small_volume_limit_check(&k, &[cell, 0.1, 0.5, 1.0], &opts).unwrap();
        let single = &rep.rows[0];
        let gap = (single.lambda1 - single.total_mass).abs();
        let single_ok = single.nodes == 1 && gap <= single.slack && single.slack <= 0.02 * single.total_mass;
        let bounds_ok = rep.rows[1..].iter().all(|row| row.bound_holds);
        pass &= single_ok && bounds_ok;
        let rows: Vec<String> = rep.rows[1..]
            .iter()
            .map(|row| format!("r={} Λ₁={:.4} lb={:.4}", row.r, row.lambda1, row.lower_bound))
            .collect();
        lines.push(format!(
            "{name}: single-cell gap {gap:.2e} slack {:.2e} ({:.2}% of mass), {}",
            single.slack,
            100.0 * single.slack / single.total_mass,
            rows.join(", ")
        ));
    }
    report(4, pass, lines.join("; "), t0.elapsed(), 120.0);
}

#[test]
fn criterion_05_eigenvalue_correctness() {
    let t0 = Instant::now();
    let errs = Execution::Parallel.map(50, |i| {
        let mut r = rng_for(5, i as u64);
        let dim = 1 + i % 2;
        let k = kernel_catalog(dim, &mut r);
        let form = loop {
            let h = if dim == 1 { r.random_range(0.01..0.04) } else { r.random_range(0.1..0.2) };
            let f = random_form(&k, h, &mut r);
            if (2..=200).contains(&f.interior_len()) {
                break f;
            }
        };
        let a = form.dense_interior_matrix();
        let n = a.len();
        let m = DMatrix::from_fn(n, n, |i, j| a[i][j]);
        let dense = SymmetricEigen::new(m).eigenvalues.min();
        let it = lambda1(&form, &form.mask, &EigenOptions::default()).unwrap();
        (it.value - dense).abs() / dense
    });
    let worst = errs.iter().copied().fold(0.0, f64::max);
    report(5, worst <= 1e-8, format!("50 instances, max relative error {worst:e}"), t0.elapsed(), 30.0);
}

#[test]
fn criterion_06_form_inequalities() {
    let t0 = Instant::now();
    let counts = Execution::Parallel.map(50, |i| {
        let mut r = rng_for(6, i as u64);
        let dim = 1 + i % 2;
        let k = kernel_catalog(dim, &mut r);
        let h = if dim == 1 { 0.05 } else { 0.15 };
        let f = random_form(&k, h, &mut r);
        let n = f.grid.len();
        let mut bad = [0usize; 4];
        for _ in 0..20 {
            let mut u = uniform_vec(&mut r, n, -1.0, 1.0);
            let mut v = uniform_vec(&mut r, n, -1.0, 1.0);
            for x in 0..n {
                if !f.mask.interior[x] {
                    u[x] = u[x].abs();
                    v[x] = 0.0;
                }
            }
            let up: Vec<f64> = u.iter().map(|a| a.max(0.0)).collect();
            let um: Vec<f64> = u.iter().map(|a| (-a).max(0.0)).collect();
            let rho_u = f.rho(&u, &f.mask);
            let scale = f.abs_pair_sum(&u, &u) + f.abs_pair_sum(&v, &v);
            let lhs = f.abs_pair_sum(&u, &v);
            if lhs > (2.0 + 2f64.sqrt()) * (rho_u * f.energy(&v, &v)).sqrt() + 1e-10 * scale {
                bad[0] += 1;
            }
            if f.rho(&up, &f.mask) > rho_u + 1e-10 * scale || f.rho(&um, &f.mask) > rho_u + 1e-10 * scale {
                bad[1] += 1;
            }
            if f.energy(&up, &um) > 1e-10 * scale {
                bad[2] += 1;
            }
            if f.energy(&um, &um) > -f.energy(&u, &um) + 1e-10 * scale {
                bad[3] += 1;
            }
        }
        bad
    });
    let mut total = [0usize; 4];
    for c in &counts {
        for k in 0..4 {
            total[k] += c[k];
        }
    }
    report(
        6,
        total.iter().all(|&c| c == 0),
        format!(
            "1000 pairs; violations: Cauchy–Schwarz {}, ρ(u±) {}, E(u⁺,u⁻) {}, E(u⁻,u⁻) {}",
            total[0], total[1], total[2], total[3]
        ),
        t0.elapsed(),
        30.0,
    );
}

fn wmp_instance(seed: u64, i: usize, signed: bool) -> (ProblemData, nonlocal_mp::spectral::Lambda1Report) {
    let mut r = rng_for(seed, i as u64);
    let dim = 1 + i % 2;
    let k = kernel_catalog(dim, &mut r);
    let h = if dim == 1 { 0.04 } else { 0.12 };
    let form = random_form(&k, h, &mut r);
    let eig = lambda1(&form, &form.mask, &EigenOptions::default()).unwrap();
    let n = form.grid.len();
    let c: Vec<f64> = (0..n).map(|_| eig.value * r.random_range(-1.0..0.9)).collect();
    let g = uniform_vec(&mut r, n, if signed { -1.0 } else { 0.0 }, 1.0);
    let ext = uniform_vec(&mut r, n, 0.0, 1.0);
    (ProblemData::new(form, c, g, ext).unwrap(), eig)
}

#[test]
fn criterion_07_weak_maximum_principle() {
    let t0 = Instant::now();
    let nonneg = Execution::Parallel.map(100, |i| {
        let (p, eig) = wmp_instance(7, i, false);
        let s = solve_dirichlet_with(&p, 1e-12, &eig).unwrap();
        let sup = s.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min = s.u.iter().copied().fold(f64::INFINITY, f64::min);
        min >= -1e-8 * sup
    });
    let signed = Execution::Parallel.map(100, |i| {
        let (p, eig) = wmp_instance(70, i, true);
        let s = solve_dirichlet_with(&p, 1e-12, &eig).unwrap();
        let w = weak_mp_bound_check(&p, &s.u, &eig).unwrap();
        (w.holds, w.tightness)
    });
    let a = nonneg.iter().filter(|b| **b).count();
    let b = signed.iter().filter(|s| s.0).count();
    let tight = signed.iter().map(|s| s.1).fold(0.0, f64::max);
    report(
        7,
        a == 100 && b == 100,
        format!("g ≥ 0: {a}/100 nonnegative; signed g: {b}/100 bound holds, max tightness {tight:.3}"),
        t0.elapsed(),
        120.0,
    );
}

/// Two separated intervals under the annulus kernel: `u = 1` on one, `0` on the other.
fn annulus_negative_control() -> (bool, String) {
    let k = annulus_1d();
    let h = 0.3;
    let table = build_weight_table(&k, h, 2.5, 3).unwrap();
    let grid = Grid::covering(vec![4.2], 4.2 + (table.reach() as f64 + 1.0) * h, h).unwrap();
    let block_a = |x: &[f64]| (-0.01..=2.41).contains(&x[0]);
    let block_b = |x: &[f64]| (5.99..=8.41).contains(&x[0]);
    let mask = DomainMask::from_fn(&grid, |x| block_a(x) || block_b(x));
    let form = DiscreteForm::new(grid.clone(), mask, table).unwrap();
    let n = grid.len();
    let u: Vec<f64> = grid.positions().iter().map(|x| if block_a(x) { 1.0 } else { 0.0 }).collect();
    let p = ProblemData::new(form, vec![0.0; n], vec![0.0; n], vec![0.0; n]).unwrap();
    let sup = verify_supersolution(&p, &u, 0.0).unwrap();
    let rep = strong_mp_check(&p, &u, 1e-12).unwrap();
    let pos = rep.components.iter().filter(|c| matches!(c.verdict, ComponentVerdict::StrictlyPositive { .. })).count();
    let small = rep.components.iter().filter(|c| matches!(c.verdict, ComponentVerdict::IdenticallySmall { .. })).count();
    let ok = sup.is_supersolution && sup.min_slack >= 0.0 && rep.components.len() == 2 && pos == 1 && small == 1 && !rep.has_violation();
    (ok, format!("annulus control: {} components, {pos} positive, {small} vanishing, min slack {:e}", rep.components.len(), sup.min_slack))
}

#[test]
fn criterion_08_strong_mp_dichotomy() {
    let t0 = Instant::now();
    let out = Execution::Parallel.map(200, |i| {
        let mut r = rng_for(8, i as u64);
        let dim = 1 + i % 2;
        let k = kernel_catalog(dim, &mut r);
        let h = if dim == 1 { 0.05 } else { 0.15 };
        let form = random_form(&k, h, &mut r);
        let connected = support_graph(&form).components.len() == 1;
        let eig = lambda1(&form, &form.mask, &EigenOptions::default()).unwrap();
        let n = form.grid.len();
        let c: Vec<f64> = (0..n).map(|_| -r.random_range(0.0..1.0) * form.degree()).collect();
        let (g, ext) = match i % 4 {
            0 => (vec![0.0; n], vec![0.0; n]),
            1 => (vec![0.0; n], uniform_vec(&mut r, n, 0.0, 1.0)),
            2 => {
                let mut g = vec![0.0; n];
                let pick = form.interior()[r.random_range(0..form.interior_len())];
                g[pick] = 1.0;
                (g, vec![0.0; n])
            }
            _ => (uniform_vec(&mut r, n, 0.0, 1.0), uniform_vec(&mut r, n, 0.0, 1.0)),
        };
        let p = ProblemData::new(form, c, g, ext).unwrap();
        let s = solve_dirichlet_with(&p, 1e-13, &eig).unwrap();
        let sup = s.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let rep = strong_mp_check(&p, &s.u, 1e-10 * sup.max(1e-300)).unwrap();
        (connected, rep.has_violation(), rep.components.len())
    });
    let disconnected = out.iter().filter(|o| !o.0).count();
    let mixed = out.iter().filter(|o| o.1).count();
    let (control, detail) = annulus_negative_control();
    report(
        8,
        disconnected == 0 && mixed == 0 && control,
        format!("200 instances: {disconnected} disconnected, {mixed} mixed verdicts; {detail}"),
        t0.elapsed(),
        180.0,
    );
}

#[test]
fn criterion_09_certificate_round_trip() {
    let t0 = Instant::now();
    let cone = KernelSpec::new(
        2,
        vec![Primitive::Cone { axis: vec![1.0, 1.0], half_angle: 0.5, radius: Some(1.5) }],
        -1.0,
        None,
    )
    .unwrap();
    let kernels = [KernelSpec::ball(2, 1.0), cusp(), cone];
    let out = Execution::Parallel.map(50, |i| {
        let mut r = rng_for(9, i as u64);
        let k = &kernels[i % 3];
        let eps1 = if i % 3 == 1 { 0.1 } else { 0.25 };
        let target = in_ball(&mut r, 2, 1.5);
        let opts = ChainOptions { exec: Execution::Sequential, ..Default::default() };
        let cert = match build_ssp_chain(k, &[0.0, 0.0], &target, eps1, i as u64, &opts) {
            Ok(c) => c,
            Err(e) => return (false, false, 0, format!("instance {i}: {e}")),
        };
        let fresh = verify_certificate(&cert, k, 1000 + i as u64);
        let mut detected = true;
        if !cert.links.is_empty() {
            let j = r.random_range(0..cert.links.len());
            let mut bad = cert.clone();
            bad.links[j].k_radius *= 0.5;
            let chk = verify_certificate(&bad, k, 2000 + i as u64);
            detected = !chk.valid && chk.first_failing_link == Some(j + 1);
        }
        (fresh.valid, detected, cert.links.len(), fresh.failures.join(","))
    });
    let valid = out.iter().filter(|o| o.0).count();
    let detected = out.iter().filter(|o| o.1).count();
    let links: usize = out.iter().map(|o| o.2).sum();
    let failures: Vec<&str> = out.iter().filter(|o| !o.0).map(|o| o.3.as_str()).collect();
    report(
        9,
        valid == 50 && detected == 50,
        format!("50 chains ({links} links): {valid} re-verify, {detected} corruptions detected {failures:?}"),
        t0.elapsed(),
        120.0,
    );
}

#[test]
fn criterion_10_representation_identity() {
    let t0 = Instant::now();
    let worst = Execution::Parallel.map(100, |i| {
        let mut r = rng_for(10, i as u64);
        let dim = 1 + i % 2;
        let k = kernel_catalog(dim, &mut r);
        let f = random_form(&k, if dim == 1 { 0.05 } else { 0.15 }, &mut r);
        let n = f.grid.len();
        let mut u = uniform_vec(&mut r, n, -1.0, 1.0);
        let mut v = uniform_vec(&mut r, n, -1.0, 1.0);
        for x in 0..n {
            if !f.mask.interior[x] {
                u[x] = 0.0;
                v[x] = 0.0;
            }
        }
        let e = f.energy(&u, &v);
        let iu = f.apply_operator(&u);
        let s: f64 = iu.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() * f.cell_volume();
        (e - s).abs() / f.abs_pair_sum(&u, &v).max(f64::MIN_POSITIVE)
    })
    .into_iter()
    .fold(0.0, f64::max);

    // First-order consistency against the principal value for |z|^{-2} in N = 1.
    let k = KernelSpec::power(1, -2.0);
    let u = TestFunction::gaussian(vec![0.0], 1.0);
    let x0 = [0.25];
    let eps: Vec<f64> = (1..=6).map(|i| 10f64.powi(-i)).collect();
    let exact = pointwise_pv(&k, &u, &x0, &eps, &PvOptions::default()).unwrap().value;
    let trunc = 8.0;
    let errors: Vec<f64> = [8.0, 16.0, 32.0, 64.0]
        .iter()
        .map(|&m| {
            let h = 1.0 / m;
            let table = build_weight_table(&k, h, trunc, 3).unwrap();
            let grid = Grid::covering(vec![0.0], trunc + 2.0, h).unwrap();
            let mask = DomainMask::nearest_nodes(&grid, &x0, 1);
            let f = DiscreteForm::new(grid.clone(), mask, table).unwrap();
            let vals = u.sample(&grid.positions());
            let node = grid.nearest(&x0);
            (f.apply_operator(&vals)[node] - exact).abs()
        })
        .collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[1] / w[0]).collect();
    let first_order = ratios.iter().all(|q| (0.35..=0.65).contains(q));
    report(
        10,
        worst <= 1e-10 && first_order,
        format!("summation by parts max rel {worst:e}; pv errors {errors:?}, ratios {ratios:.3?}"),
        t0.elapsed(),
        60.0,
    );
}

#[test]
fn criterion_11_mollification() {
    let t0 = Instant::now();
    let out = Execution::Parallel.map(20, |i| {
        let mut r = rng_for(11, i as u64);
        let dim = 1 + i % 2;
        let h = if dim == 1 { 1.0 / 64.0 } else { 1.0 / 24.0 };
        let k = kernel_catalog(dim, &mut r);
        let table = build_weight_table(&k, h, k.support_radii().1.min(2.0), 2).unwrap();
        let grid = Grid::covering(vec![0.0; dim], 1.0 + 8.0 * h + (table.reach() as f64 + 1.0) * h, h).unwrap();
        let mask = DomainMask::ball(&grid, &vec![0.0; dim], 1.0 + 8.0 * h);
        let f = DiscreteForm::new(grid.clone(), mask, table).unwrap();
        let bumps: Vec<TestFunction> = (0..3)
            .map(|_| TestFunction::PolyBump {
                center: in_ball(&mut r, dim, 0.4),
                radius: r.random_range(0.2..0.6),
                amplitude: r.random_range(-1.0..1.0),
            })
            .collect();
        let u: Vec<f64> = grid.positions().iter().map(|x| bumps.iter().map(|b| b.eval(x)).sum()).collect();
        let euu = f.energy(&u, &u);
        let es: Vec<f64> = [8.0, 4.0, 2.0, 1.0]
            .iter()
            .map(|&m| {
                let ue = mollify(&grid, &u, m * h, Execution::Sequential).unwrap();
                let d: Vec<f64> = u.iter().zip(&ue).map(|(a, b)| a - b).collect();
                f.energy(&d, &d)
            })
            .collect();
        let monotone = es.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15 * euu);
        (monotone && es[3] <= 1e-3 * euu, es[0] / euu)
    });
    let good = out.iter().filter(|o| o.0).count();
    let first = out.iter().map(|o| o.1).fold(0.0, f64::max);
    report(
        11,
        good == 20,
        format!("{good}/20 monotone along ε = 8h, 4h, 2h, h and below 1e-3·E(u,u); largest E(u−u_8h)/E(u) {first:.3e}"),
        t0.elapsed(),
        30.0,
    );
}
