use crate::error::{invalid, Error, Result};
use crate::kernels::PairKernel;
use crate::par::Execution;
use crate::quadrature::{integrate, ShellOptions, Verdict};
use serde::{Deserialize, Serialize};

/// Closed-form C² test functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    /// `a · exp(−|x − c|² / σ²)`.
    Gaussian { center: Vec<f64>, width: f64, amplitude: f64 },
    /// `a · (1 − |x − c|²/r²)³` inside the ball, 0 outside.
    PolyBump { center: Vec<f64>, radius: f64, amplitude: f64 },
    Constant { value: f64 },
}

impl TestFunction {
    pub fn gaussian(center: Vec<f64>, width: f64) -> Self {
        TestFunction::Gaussian { center, width, amplitude: 1.0 }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d2 = |c: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        match self {
            TestFunction::Gaussian { center, width, amplitude } => amplitude * (-d2(center) / (width * width)).exp(),
            TestFunction::PolyBump { center, radius, amplitude } => {
                let t = 1.0 - d2(center) / (radius * radius);
                if t <= 0.0 {
                    0.0
                } else {
                    amplitude * t * t * t
                }
            }
            TestFunction::Constant { value } => *value,
        }
    }

    /// Bound on the operator norm of the Hessian.
    pub fn hessian_bound(&self) -> f64 {
        match self {
            TestFunction::Gaussian { width, amplitude, .. } => 2.0 * amplitude.abs() / (width * width),
            TestFunction::PolyBump { radius, amplitude, .. } => 6.0 * amplitude.abs() / (radius * radius),
            TestFunction::Constant { .. } => 0.0,
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            TestFunction::Gaussian { amplitude, .. } | TestFunction::PolyBump { amplitude, .. } => amplitude.abs(),
            TestFunction::Constant { value } => value.abs(),
        }
    }

    pub fn sample(&self, points: &[Vec<f64>]) -> Vec<f64> {
        points.iter().map(|p| self.eval(p)).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PvOptions {
    /// Relative tolerance of each truncated integral.
    pub tol: f64,
    /// Cauchy criterion on the last two truncations, relative to max(1, |I|).
    pub cauchy_tol: f64,
    pub budget: u64,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for PvOptions {
    fn default() -> Self {
        PvOptions { tol: 1e-9, cauchy_tol: 1e-5, budget: 20_000_000, seed: 0, exec: Execution::default() }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PvStep {
    pub eps: f64,
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PvReport {
    pub value: f64,
    /// Aitken extrapolation was applied to the last three truncations.
    pub extrapolated: bool,
    pub trace: Vec<PvStep>,
}

/// `lim_{ε→0} ∫_{|z|>ε} (u(x) − u(x+z)) J(x, x+z) dz` from the symmetric pairing
/// `½[(2u(x) − u(x+z) − u(x−z)) J(x, x−z) + (u(x) − u(x+z))(J(x, x+z) − J(x, x−z))]`.
pub fn pointwise_pv<K: PairKernel>(
    kernel: &K,
    u: &TestFunction,
    x: &[f64],
    eps_sequence: &[f64],
    opts: &PvOptions,
) -> Result<PvReport> {
    let n = kernel.dimension();
    if x.len() != n {
        return invalid(format!("point has {} coordinates, kernel dimension is {n}", x.len()));
    }
    if eps_sequence.len() < 2 {
        return invalid("need at least two truncation radii");
    }
    if eps_sequence.iter().any(|e| !(*e > 0.0 && e.is_finite())) || eps_sequence.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("truncation radii must be positive and strictly decreasing");
    }
    let ux = u.eval(x);
    let integrand = |z: &[f64]| {
        let mut p = vec![0.0; n];
        let mut m = vec![0.0; n];
        for i in 0..n {
            p[i] = x[i] + z[i];
            m[i] = x[i] - z[i];
        }
        let jm = kernel.pair(x, &m);
        let jp = kernel.pair(x, &p);
        let up = u.eval(&p);
        let second = 2.0 * ux - up - u.eval(&m);
        let mut s = second * jm;
        if jp != jm {
            s += (ux - up) * (jp - jm);
        }
        0.5 * s
    };
    let mut trace = Vec::with_capacity(eps_sequence.len());
    for (k, &eps) in eps_sequence.iter().enumerate() {
        let mut dom = kernel.base().shell_domain(&[eps], false);
        dom.r_min = dom.r_min.max(eps);
        let (value, error) = if dom.r_min >= dom.r_max {
            (0.0, 0.0)
        } else {
            let sopts = ShellOptions {
                tol: opts.tol,
                budget: opts.budget,
                seed: crate::rng::derive_seed(opts.seed, k as u64),
                exec: opts.exec,
                ..Default::default()
            };
            let out = integrate(&dom, &integrand, &sopts);
            match out.verdict {
                Verdict::Finite => (out.value, out.error),
                Verdict::Infinite => {
                    return Err(Error::HypothesisViolation(format!("truncated integral diverges at eps = {eps}")))
                }
                Verdict::Inconclusive => {
                    return Err(Error::Inconclusive(format!(
                        "truncated integral at eps = {eps} undecided after {} evaluations",
                        out.evaluations
                    )))
                }
            }
        };
        trace.push(PvStep { eps, value, error });
    }
    let v: Vec<f64> = trace.iter().map(|s| s.value).collect();
    let last = v[v.len() - 1];
    let d2 = last - v[v.len() - 2];
    if d2.abs() > opts.cauchy_tol * last.abs().max(1.0) {
        return Err(Error::NoConvergence { iterations: v.len(), residual: d2.abs() });
    }
    let mut value = last;
    let mut extrapolated = false;
    if v.len() >= 3 {
        let d1 = v[v.len() - 2] - v[v.len() - 3];
        if d1 != d2 && d1 * d2 > 0.0 && d2.abs() < d1.abs() {
            let a = last - d2 * d2 / (d2 - d1);
            if (a - last).abs() <= 10.0 * d2.abs() {
                value = a;
                extrapolated = true;
            }
        }
    }
    Ok(PvReport { value, extrapolated, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;

    #[test]
    fn gaussian_against_the_power_kernel_in_one_dimension() {
        let k = KernelSpec::power(1, -2.0);
        let u = TestFunction::gaussian(vec![0.0], 1.0);
        let eps: Vec<f64> = (1..=6).map(|i| 10f64.powi(-i)).collect();
        let r = pointwise_pv(&k, &u, &[0.0], &eps, &PvOptions::default()).unwrap();
        let exact = 2.0 * std::f64::consts::PI.sqrt();
        assert!((r.value - exact).abs() < 1e-6, "{} vs {exact}", r.value);
    }

    #[test]
    fn constants_give_zero() {
        let k = KernelSpec::ball(2, 1.0);
        let u = TestFunction::Constant { value: 3.0 };
        let r = pointwise_pv(&k, &u, &[0.1, 0.2], &[0.1, 0.01], &PvOptions::default()).unwrap();
        assert!(r.trace.iter().all(|s| s.value == 0.0));
    }
}
