//! Matrix-free Krylov solves on symmetric positive definite operators.

use crate::error::{Error, Result};
use crate::par::Execution;

pub fn dot(exec: Execution, a: &[f64], b: &[f64]) -> f64 {
    exec.sum(a.len(), |i| a[i] * b[i])
}

pub fn norm(exec: Execution, a: &[f64]) -> f64 {
    dot(exec, a, a).sqrt()
}

#[derive(Clone, Copy, Debug)]
pub struct CgOutcome {
    pub iterations: usize,
    /// `‖b − Ax‖ / ‖b‖`.
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for `A x = b`, starting from
/// the contents of `x`.
pub fn pcg<A>(exec: Execution, apply: A, diag: &[f64], b: &[f64], x: &mut [f64], rel_tol: f64, max_iter: usize) -> Result<CgOutcome>
where
    A: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm(exec, b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome { iterations: 0, relative_residual: 0.0 });
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(exec, &r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = norm(exec, &r) / bnorm;
    for it in 0..max_iter {
        if rel <= rel_tol {
            return Ok(CgOutcome { iterations: it, relative_residual: rel });
        }
        apply(&p, &mut ap);
        let pap = dot(exec, &p, &ap);
        if !(pap > 0.0) {
            return Err(Error::HypothesisViolation(format!("operator is not positive definite (pᵀAp = {pap:e})")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(exec, &r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rel = norm(exec, &r) / bnorm;
    }
    if rel <= rel_tol {
        return Ok(CgOutcome { iterations: max_iter, relative_residual: rel });
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: rel })
}
