use crate::config::{parse_json, ConfigResult, Failure, RunConfig};
use crate::{Outcome, Status};
use nonlocal_mp::discrete::{write_grid_function, DiscreteForm};
use nonlocal_mp::geometry::dist;
use nonlocal_mp::kernels::{check_j3, check_levy_integrability, check_nontriviality, total_mass};
use nonlocal_mp::lattice::{bfs_confined_path, construct_path_with_stats, verify_path, Lattice};
use nonlocal_mp::maxprinciple::{small_volume_radius, solve_dirichlet_with, verify_supersolution, weak_mp_bound_check, ProblemData};
use nonlocal_mp::propagation::{build_ssp_chain, default_eps1, strong_mp_check, verify_certificate, ChainOptions, PositivityCertificate};
use nonlocal_mp::quadrature::Verdict;
use nonlocal_mp::rng::derive_seed;
use nonlocal_mp::spectral::{lambda1, rearrangement_profile, EigenOptions};
use nonlocal_mp::Error;
use serde::Serialize;
use serde_json::{json, Value};
use std::fs;

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn outcome(status: Status, result: Value) -> Outcome {
    Outcome { status, result, table: None, files: Vec::new() }
}

fn verdict(ok: bool) -> Status {
    if ok {
        Status::Ok
    } else {
        Status::Negative
    }
}

fn grid_file(form: &DiscreteForm, values: &[f64], name: &str) -> ConfigResult<Vec<u8>> {
    let mut buf = Vec::new();
    write_grid_function(&mut buf, &form.grid, values, Some(name))?;
    Ok(buf)
}

fn eigen_options(cfg: &RunConfig, seed: u64) -> EigenOptions {
    EigenOptions { rel_tol: cfg.rel_tol.unwrap_or(1e-8), seed, ..Default::default() }
}

pub fn run(cmd: &str, cfg: &RunConfig, seed: u64, verify_only: bool) -> ConfigResult<Outcome> {
    match cmd {
        "kernel-check" => kernel_check(cfg, seed),
        "lambda1" => lambda1_cmd(cfg, seed),
        "lower-bound" => lower_bound(cfg, seed),
        "wmp-radius" => wmp_radius(cfg, seed),
        "solve" => solve(cfg, seed),
        "verify-supersolution" => supersolution(cfg),
        "weak-mp" => weak_mp(cfg, seed),
        "strong-mp" => strong_mp(cfg),
        "certify" if verify_only => certify_verify(cfg, seed),
        "certify" => certify(cfg, seed),
        "lattice-path" => lattice_path(cfg),
        other => Err(Failure::Config(format!("unknown command `{other}`"))),
    }
}

fn kernel_check(cfg: &RunConfig, seed: u64) -> ConfigResult<Outcome> {
    let cmd = "kernel-check";
    let k = cfg.kernel(cmd)?;
    let budget = cfg.budget.unwrap_or(1 << 24);
    let levy = check_levy_integrability(&k, cfg.tolerance.unwrap_or(1e-6), budget, seed)?;
    let radii = cfg.radii.clone().unwrap_or_else(|| vec![1.0, 0.1, 0.01]);
    let nontrivial = check_nontriviality(&k, &radii, derive_seed(seed, 1))?;
    let (mass, mass_note) = match total_mass(&k, derive_seed(seed, 2)) {
        Ok(m) => (Some(m), None),
        Err(e) if e.is_inconclusive() => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let j3 = match &cfg.xkernel {
        Some(x) => {
            let mut x = x.clone();
            x.validate().map_err(|e| Failure::Config(format!("field `xkernel`: {e}")))?;
            Some(check_j3(&x, derive_seed(seed, 3), budget)?)
        }
        None => None,
    };
    let refuted = levy.verdict == Verdict::Infinite || nontrivial.iter().any(|e| !e.positive && !e.sampling_limited);
    let undecided = levy.verdict == Verdict::Inconclusive || nontrivial.iter().any(|e| e.sampling_limited);
    let status = if refuted {
        Status::Negative
    } else if undecided {
        Status::Undecided
    } else {
        Status::Ok
    };
    let result = json!({
        "levy": to_value(&levy),
        "nontriviality": to_value(&nontrivial),
        "total_mass": to_value(&mass),
        "total_mass_note": mass_note,
        "j3": to_value(&j3),
    });
    Ok(Outcome { status, result, table: Some(to_value(&nontrivial)), files: Vec::new() })
}

fn lambda1_cmd(cfg: &RunConfig, seed: u64) -> ConfigResult<Outcome> {
    let form = cfg.form("lambda1")?;
    let rep = lambda1(&form, &form.mask, &eigen_options(cfg, seed))?;
    let full = form.extend(&rep.vector, &vec![0.0; form.grid.len()]);
    let file = grid_file(&form, &full, "eigenvector")?;
    let result = json!({
        "value": rep.value,
        "residual": rep.residual,
        "interval": [rep.value - rep.residual, rep.value + rep.residual],
        "iterations": rep.iterations,
        "inner_iterations": rep.inner_iterations,
        "nodes": rep.nodes,
    });
    Ok(Outcome { status: Status::Ok, result, table: None, files: vec![("eigenvector.bin".into(), file)] })
}

fn lower_bound(cfg: &RunConfig, seed: u64) -> ConfigResult<Outcome> {
    let k = cfg.kernel("lower-bound")?;
    let radii = cfg.require(&cfg.radii, "radii", "lower-bound")?;
    let prof = rearrangement_profile(&k, radii, seed)?;
    let table: Vec<Value> = (0..prof.radii.len())
        .map(|i| {
            json!({
                "r": prof.radii[i],
                "rearrangement": prof.rearrangement[i],
                "lower_bound": prof.lower_bound[i],
                "measure_error": prof.measure_error[i],
            })
        })
        .collect();
    let result = to_value(&prof);
    Ok(Outcome { status: Status::Ok, result, table: Some(Value::Array(table)), files: Vec::new() })
}

fn wmp_radius(cfg: &RunConfig, seed: u64) -> ConfigResult<Outcome> {
    let k = cfg.kernel("wmp-radius")?;
    let c_plus = *cfg.require(&cfg.c_plus, "c_plus", "wmp-radius")?;
    let r_max = match cfg.r_max {
        Some(r) => r,
        None => total_mass(&k, derive_seed(seed, 2)).ok().and_then(|m| m.finite()).unwrap_or(1.0),
    };
    let rep = small_volume_radius(&k, c_plus, r_max, seed)?;
    Ok(outcome(Status::Ok, to_value(&rep)))
}

fn solve(cfg: &RunConfig, seed: u64) -> ConfigResult<Outcome> {
    let p = cfg.problem("solve")?;
    let eig = lambda1(&p.form, &p.form.mask, &eigen_options(cfg, seed))?;
    let rep = solve_dirichlet_with(&p, cfg.tolerance.unwrap_or(1e-10), &eig)?;
    let file = grid_file(&p.form, &rep.u, "solution")?;
    let result = json!({
        "iterations": rep.iterations,
        "relative_residual": rep.relative_residual,
        "lambda1": rep.lambda1,
        "c_plus_norm": rep.c_plus_norm,
        "min": rep.u.iter().copied().fold(f64::INFINITY, f64::min),
        "max": rep.u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    });
    Ok(Outcome { status: Status::Ok, result, table: None, files: vec![("solution.bin".into(), file)] })
}

fn load_u(cfg: &RunConfig, p: &ProblemData, cmd: &str) -> ConfigResult<Vec<f64>> {
    cfg.require(&cfg.u, "u", cmd)?;
    cfg.field(&cfg.u, "u", &p.form.grid, None)
}

fn supersolution(cfg: &RunConfig) -> ConfigResult<Outcome> {
    let cmd = "verify-supersolution";
    let p = cfg.problem(cmd)?;
    let u = load_u(cfg, &p, cmd)?;
    let rep = verify_supersolution(&p, &u, cfg.tolerance.unwrap_or(1e-9))?;
    Ok(outcome(verdict(rep.is_supersolution), to_value(&rep)))
}

fn weak_mp(cfg: &RunConfig, seed: u64) -> ConfigResult<Outcome> {
    let p = cfg.problem("weak-mp")?;
    let u = load_u(cfg, &p, "weak-mp")?;
    let eig = lambda1(&p.form, &p.form.mask, &eigen_options(cfg, seed))?;
    let rep = weak_mp_bound_check(&p, &u, &eig)?;
    Ok(outcome(verdict(rep.holds), to_value(&rep)))
}

fn strong_mp(cfg: &RunConfig) -> ConfigResult<Outcome> {
    let p = cfg.problem("strong-mp")?;
    let u = load_u(cfg, &p, "strong-mp")?;
    let rep = strong_mp_check(&p, &u, cfg.tolerance.unwrap_or(1e-9))?;
    Ok(outcome(verdict(!rep.has_violation()), to_value(&rep)))
}

fn chain_options(cfg: &RunConfig) -> ChainOptions {
    let mut opts = ChainOptions::default();
    if let Some(r) = cfg.reach {
        opts.reach = r;
    }
    opts
}

fn certify(cfg: &RunConfig, seed: u64) -> ConfigResult<Outcome> {
    let cmd = "certify";
    let k = cfg.kernel(cmd)?;
    let source = cfg.require(&cfg.source, "source", cmd)?;
    let target = cfg.require(&cfg.target, "target", cmd)?;
    let eps1 = cfg.eps1.unwrap_or_else(|| default_eps1(cfg.eps.unwrap_or(1.0), k.dimension));
    let cert = build_ssp_chain(&k, source, target, eps1, seed, &chain_options(cfg))?;
    let check = verify_certificate(&cert, &k, derive_seed(seed, 1));
    let mut text = serde_json::to_string_pretty(&cert).expect("certificates serialize");
    text.push('\n');
    let status = if check.valid {
        Status::Ok
    } else {
        Status::Undecided
    };
    let result = json!({
        "eps1": cert.eps1,
        "links": cert.links.len(),
        "min_kappa": cert.links.iter().map(|l| l.kappa).fold(f64::INFINITY, f64::min),
        "generators_flagged": cert.generators.flagged,
        "check": to_value(&check),
        "certificate": to_value(&cert),
    });
    Ok(Outcome { status, result, table: None, files: vec![("certificate.json".into(), text.into_bytes())] })
}

fn certify_verify(cfg: &RunConfig, seed: u64) -> ConfigResult<Outcome> {
    let path = cfg.resolve(cfg.require(&cfg.certificate, "certificate", "certify --verify-only")?);
    let text = fs::read_to_string(&path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let cert: PositivityCertificate = parse_json(&text, &path.display().to_string())?;
    let kernel = if cfg.kernel.is_some() { cfg.kernel("certify")? } else { cert.kernel.clone() };
    let check = verify_certificate(&cert, &kernel, seed);
    Ok(outcome(verdict(check.valid), to_value(&check)))
}

fn lattice_path(cfg: &RunConfig) -> ConfigResult<Outcome> {
    let cmd = "lattice-path";
    let lat = Lattice::new(cfg.require(&cfg.generators, "generators", cmd)?.clone())?;
    let start = cfg.require(&cfg.start, "start", cmd)?;
    let end = cfg.require(&cfg.end, "end", cmd)?;
    let rho = cfg.rho.unwrap_or_else(|| (dist(start, end) * (1.0 + 1e-9)).max(lat.gram_scale()));
    let (path, stats) = construct_path_with_stats(&lat, start, end, rho)?;
    let check = verify_path(&path, &lat, start, stats.bound);
    let (bfs, bfs_note) = match bfs_confined_path(&lat, start, end, stats.bound, cfg.bfs_cap.unwrap_or(1_000_000)) {
        Ok(p) => (Some(p), None),
        Err(e @ Error::CapExceeded { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let status = match (&bfs, check.valid) {
        (_, false) | (Some(None), _) => Status::Negative,
        (None, true) => Status::Undecided,
        (Some(Some(_)), true) => Status::Ok,
    };
    let table: Vec<Value> = path
        .points
        .iter()
        .enumerate()
        .map(|(i, x)| json!({ "index": i, "step": if i == 0 { 0 } else { path.steps[i - 1] }, "point": x }))
        .collect();
    let result = json!({
        "rho": rho,
        "stats": to_value(&stats),
        "check": to_value(&check),
        "steps": path.steps.len(),
        "bfs_steps": bfs.as_ref().map(|b| b.as_ref().map(|p| p.steps.len())),
        "bfs_note": bfs_note,
        "path": to_value(&path),
    });
    Ok(Outcome { status, result, table: Some(Value::Array(table)), files: Vec::new() })
}
