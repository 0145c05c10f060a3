//! Radial shell quadrature over R^N with divergence detection.
//!
//! The integral of `f` over `r_min ≤ |z| ≤ r_max` is split into dyadic shells
//! `[2^-k-1, 2^-k]` (towards the origin) and `[2^k, 2^k+1]` (towards
//! infinity). Each shell is integrated with Gauss–Legendre in `r`, split at
//! the declared radial breaks, and with an angular average that is exact for
//! N = 1, stratified for N = 2 and Monte Carlo for N ≥ 3. A side that runs to
//! 0 or ∞ is closed off by a geometric tail estimate once the shell ratios
//! settle below one, and declared divergent when the last three ratios are
//! all at least one.

use crate::geometry::sphere_area;
use crate::par::Execution;
use crate::rng::{self, tag};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const GL_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// 8-point Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre_nodes(a: f64, b: f64) -> [(f64, f64); 8] {
    let m = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let mut out = [(0.0, 0.0); 8];
    for i in 0..4 {
        out[2 * i] = (m - hw * GL_X[i], hw * GL_W[i]);
        out[2 * i + 1] = (m + hw * GL_X[i], hw * GL_W[i]);
    }
    out
}

/// Composite 8-point Gauss–Legendre on `[a, b]` with `pieces` equal panels.
pub fn gauss_legendre<F: Fn(f64) -> f64>(a: f64, b: f64, pieces: usize, f: F) -> f64 {
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|p| {
            let lo = a + h * p as f64;
            gauss_legendre_nodes(lo, lo + h).iter().map(|&(x, w)| w * f(x)).sum::<f64>()
        })
        .sum()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Finite,
    Infinite,
    #[default]
    Inconclusive,
}

/// Radial layout of an integrand.
#[derive(Clone, Debug)]
pub struct ShellDomain {
    pub dim: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Radii where the integrand may jump; panels are split there.
    pub breaks: Vec<f64>,
    /// Integrand depends on |z| only, so one direction per radius suffices.
    pub radial: bool,
    /// Directions outside this double cone contribute nothing.
    pub window: Option<AngularWindow>,
}

/// Double cone of directions `{θ : angle(θ, ±axis) ≤ α(r)}` containing the
/// support of the integrand on the sphere of radius `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct AngularWindow {
    pub axis: Vec<f64>,
    /// Fixed half-angle part (cones).
    pub half_angle: f64,
    /// Cusp exponent `ρ`: adds the half-angle `arcsin(min(1, r^{ρ-1}))`.
    pub cusp_exponent: Option<f64>,
}

impl AngularWindow {
    pub fn half_angle_at(&self, r: f64) -> f64 {
        let cusp = self.cusp_exponent.map_or(0.0, |rho| r.powf(rho - 1.0).min(1.0).asin());
        self.half_angle.max(cusp).min(std::f64::consts::FRAC_PI_2)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ShellOptions {
    /// Relative tolerance on the total, measured against max(|I|, 1).
    pub tol: f64,
    /// Maximum number of integrand evaluations.
    pub budget: u64,
    pub seed: u64,
    /// Initial angular samples per radial node (N ≥ 2); doubled on demand.
    pub angular: usize,
    pub exec: Execution,
}

impl Default for ShellOptions {
    fn default() -> Self {
        ShellOptions { tol: 1e-6, budget: 50_000_000, seed: 0, angular: 64, exec: Execution::default() }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ShellOutcome {
    pub value: f64,
    pub error: f64,
    pub verdict: Verdict,
    pub evaluations: u64,
    pub shells: usize,
}

const MAX_SHELLS: usize = 200;
const MIN_SHELLS: usize = 4;
const BATCH: usize = 4;

#[derive(Clone, Copy)]
enum Side {
    Inner,
    Outer,
}

#[derive(Clone, Copy, Default)]
struct ShellValue {
    value: f64,
    var: f64,
    evals: u64,
}

struct Integrator<'a, F> {
    dom: &'a ShellDomain,
    f: &'a F,
    seed: u64,
    angular: usize,
    exec: Execution,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Integrator<'_, F> {
    fn panels(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let mut cuts = vec![a];
        let mut br: Vec<f64> = self.dom.breaks.iter().copied().filter(|&x| x > a && x < b).collect();
        br.sort_by(f64::total_cmp);
        cuts.extend(br);
        cuts.push(b);
        cuts.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1])).collect()
    }

    /// Angular mean of f on the sphere of radius r and the variance of that mean.
    fn angular_mean(&self, r: f64, stream: u64) -> (f64, f64, u64) {
        let n = self.dom.dim;
        let f = self.f;
        if self.dom.radial {
            let mut z = vec![0.0; n];
            z[0] = r;
            return (f(&z), 0.0, 1);
        }
        if n == 1 {
            return (0.5 * (f(&[r]) + f(&[-r])), 0.0, 2);
        }
        if let Some(w) = &self.dom.window {
            let alpha = w.half_angle_at(r);
            if alpha < std::f64::consts::FRAC_PI_2 {
                return self.windowed_mean(r, w, alpha, stream);
            }
        }
        match n {
            2 => {
                let m = self.angular;
                let mut sets = [0.0; 2];
                for (s, out) in sets.iter_mut().enumerate() {
                    let mut g = rng::stream(self.seed, tag::SHELL, stream.wrapping_mul(2).wrapping_add(s as u64));
                    let mut acc = 0.0;
                    for i in 0..m {
                        let u: f64 = g.random();
                        let t = 2.0 * PI * (i as f64 + u) / m as f64;
                        acc += f(&[r * t.cos(), r * t.sin()]);
                    }
                    *out = acc / m as f64;
                }
                let d = 0.5 * (sets[0] - sets[1]);
                (0.5 * (sets[0] + sets[1]), d * d, 2 * m as u64)
            }
            _ => {
                let m = self.angular;
                let mut g = rng::stream(self.seed, tag::SHELL, stream);
                let mut z = vec![0.0; n];
                let (mut s1, mut s2) = (0.0, 0.0);
                for _ in 0..m {
                    rng::unit_direction(&mut g, n, &mut z);
                    z.iter_mut().for_each(|v| *v *= r);
                    let y = f(&z);
                    s1 += y;
                    s2 += y * y;
                }
                let mean = s1 / m as f64;
                let var = ((s2 / m as f64 - mean * mean).max(0.0)) / (m.max(2) - 1) as f64;
                (mean, var, m as u64)
            }
        }
    }

    /// Angular mean when the integrand vanishes outside the double cone of
    /// half-angle `alpha`. Polar angles are stratified in `[0, alpha]` and
    /// each sample is evaluated at `z` and `−z`.
    fn windowed_mean(&self, r: f64, w: &AngularWindow, alpha: f64, stream: u64) -> (f64, f64, u64) {
        let n = self.dom.dim;
        let f = self.f;
        let m = self.angular;
        let e = &w.axis;
        // ∫_S f = ∫_0^α sin^{N-2}θ ∫_{S^{N-2}} (f(z) + f(-z)) dφ dθ.
        let scale = 2.0 * alpha * sphere_area(n - 1) / sphere_area(n);
        let mut sets = [(0.0, 0.0); 2];
        let mut z = vec![0.0; n];
        let mut zm = vec![0.0; n];
        let mut phi = vec![0.0; n];
        for (s, out) in sets.iter_mut().enumerate() {
            let mut g = rng::stream(self.seed, tag::SHELL, stream.wrapping_mul(2).wrapping_add(s as u64));
            let (mut s1, mut s2) = (0.0, 0.0);
            for i in 0..m {
                let u: f64 = g.random();
                let t = if n == 2 {
                    alpha * (2.0 * (i as f64 + u) / m as f64 - 1.0)
                } else {
                    alpha * (i as f64 + u) / m as f64
                };
                if n == 2 {
                    phi[0] = -e[1];
                    phi[1] = e[0];
                } else {
                    loop {
                        rng::unit_direction(&mut g, n, &mut phi);
                        let d: f64 = phi.iter().zip(e).map(|(a, b)| a * b).sum();
                        phi.iter_mut().zip(e).for_each(|(p, a)| *p -= d * a);
                        let nn = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if nn > 1e-8 {
                            phi.iter_mut().for_each(|v| *v /= nn);
                            break;
                        }
                    }
                }
                let (st, ct) = t.sin_cos();
                for k in 0..n {
                    z[k] = r * (ct * e[k] + st * phi[k]);
                    zm[k] = -z[k];
                }
                let jac = if n == 2 { 1.0 } else { st.abs().powi(n as i32 - 2) };
                let y = jac * (f(&z) + f(&zm)) * 0.5;
                s1 += y;
                s2 += y * y;
            }
            let mean = s1 / m as f64;
            *out = (mean, ((s2 / m as f64 - mean * mean).max(0.0)) / (m.max(2) - 1) as f64);
        }
        let mean = scale * 0.5 * (sets[0].0 + sets[1].0);
        let var = if n == 2 {
            let d = 0.5 * scale * (sets[0].0 - sets[1].0);
            d * d
        } else {
            scale * scale * 0.25 * (sets[0].1 + sets[1].1)
        };
        (mean, var, 4 * m as u64)
    }

    fn shell(&self, a: f64, b: f64, id: u64) -> ShellValue {
        let n = self.dom.dim;
        let area = sphere_area(n);
        let nodes: Vec<(f64, f64)> =
            self.panels(a, b).into_iter().flat_map(|(lo, hi)| gauss_legendre_nodes(lo, hi)).collect();
        let parts = self.exec.map(nodes.len(), |i| {
            let (r, w) = nodes[i];
            let (mean, var, evals) = self.angular_mean(r, (id << 12) | i as u64);
            let scale = w * area * r.powi(n as i32 - 1);
            (scale * mean, scale * scale * var, evals)
        });
        parts.into_iter().fold(ShellValue::default(), |acc, (v, var, e)| ShellValue {
            value: acc.value + v,
            var: acc.var + var,
            evals: acc.evals + e,
        })
    }

    fn shell_bounds(&self, side: Side, k: usize) -> Option<(f64, f64)> {
        let (a, b) = match side {
            Side::Inner => (0.5f64.powi(k as i32 + 1), 0.5f64.powi(k as i32)),
            Side::Outer => (2f64.powi(k as i32), 2f64.powi(k as i32 + 1)),
        };
        let lo = a.max(self.dom.r_min);
        let hi = b.min(self.dom.r_max);
        (hi > lo).then_some((lo, hi))
    }

    fn side_is_open(&self, side: Side) -> bool {
        match side {
            Side::Inner => self.dom.r_min <= 0.0,
            Side::Outer => self.dom.r_max.is_infinite(),
        }
    }

    fn side_done(&self, side: Side, k: usize) -> bool {
        match side {
            Side::Inner => 0.5f64.powi(k as i32) <= self.dom.r_min,
            Side::Outer => 2f64.powi(k as i32) >= self.dom.r_max,
        }
    }

    /// Integrate one side; `known` is the running total used for the
    /// absolute tolerance.
    fn side(&self, side: Side, known: f64, tol: f64, budget: u64) -> SideResult {
        let open = self.side_is_open(side);
        let side_id: u64 = match side {
            Side::Inner => 0,
            Side::Outer => 1,
        };
        let mut contributions: Vec<(f64, f64)> = Vec::new();
        let mut res = SideResult::default();
        let mut k = 0;
        while k < MAX_SHELLS {
            let batch: Vec<usize> = (k..k + BATCH).collect();
            let vals: Vec<Option<ShellValue>> = batch
                .iter()
                .map(|&kk| self.shell_bounds(side, kk).map(|(a, b)| self.shell(a, b, (side_id << 16) | kk as u64)))
                .collect();
            for (j, v) in vals.into_iter().enumerate() {
                let kk = k + j;
                if !open && self.side_done(side, kk) {
                    res.verdict = Verdict::Finite;
                    return res;
                }
                let Some(v) = v else { continue };
                res.value += v.value;
                res.var += v.var;
                res.evals += v.evals;
                res.shells += 1;
                contributions.push((v.value.abs(), 2.0 * v.var.sqrt()));
                if res.evals > budget {
                    res.verdict = Verdict::Inconclusive;
                    return res;
                }
                if !open || contributions.len() < MIN_SHELLS {
                    continue;
                }
                let c = &contributions[contributions.len() - 4..];
                let ratio = |a: f64, b: f64| match (a > 0.0, b > 0.0) {
                    (_, false) => 0.0,
                    (false, true) => f64::INFINITY,
                    (true, true) => b / a,
                };
                let q: Vec<f64> = c.windows(2).map(|w| ratio(w[0].0, w[1].0)).collect();
                // Divergence must survive the sampling noise of each shell.
                let q_low: Vec<f64> =
                    c.windows(2).map(|w| ratio(w[0].0 + w[0].1, (w[1].0 - w[1].1).max(0.0))).collect();
                if q_low.iter().all(|&x| x >= 1.0 - 1e-6) {
                    res.verdict = Verdict::Infinite;
                    return res;
                }
                if q.iter().all(|&x| x < 1.0) {
                    let qmax = q.iter().cloned().fold(0.0, f64::max);
                    let qmin = q.iter().cloned().fold(1.0, f64::min);
                    let last = v.value;
                    let tail = |q: f64| last * q / (1.0 - q);
                    let t = tail(qmax);
                    let unc = (t - tail(qmin)).abs() + 1e-3 * t.abs();
                    let tol_abs = tol * (known + res.value + t).abs().max(1.0);
                    if unc <= 0.25 * tol_abs {
                        res.value += t;
                        res.tail_err = unc;
                        res.verdict = Verdict::Finite;
                        return res;
                    }
                }
            }
            k += BATCH;
        }
        if !open {
            res.verdict = Verdict::Finite;
        }
        res
    }
}

#[derive(Clone, Copy, Default)]
struct SideResult {
    value: f64,
    var: f64,
    tail_err: f64,
    evals: u64,
    shells: usize,
    verdict: Verdict,
}

/// Integrate `f` over the shell domain.
///
/// The angular sample count is doubled until the Monte Carlo error fits the
/// tolerance or the budget runs out. Random streams are indexed by shell and
/// node, so a rerun with a larger budget reuses every earlier sample.
pub fn integrate<F: Fn(&[f64]) -> f64 + Sync>(dom: &ShellDomain, f: &F, opts: &ShellOptions) -> ShellOutcome {
    let mut angular = opts.angular.max(2);
    let mut spent = 0u64;
    loop {
        let it = Integrator { dom, f, seed: opts.seed, angular, exec: opts.exec };
        let remaining = opts.budget.saturating_sub(spent);
        let inner = it.side(Side::Inner, 0.0, opts.tol, remaining);
        let outer = it.side(Side::Outer, inner.value, opts.tol, remaining.saturating_sub(inner.evals));
        spent += inner.evals + outer.evals;
        let value = inner.value + outer.value;
        let error = 2.0 * (inner.var + outer.var).sqrt() + inner.tail_err + outer.tail_err;
        let shells = inner.shells + outer.shells;
        let verdict = match (inner.verdict, outer.verdict) {
            (Verdict::Infinite, _) | (_, Verdict::Infinite) => Verdict::Infinite,
            (Verdict::Finite, Verdict::Finite) => Verdict::Finite,
            _ => Verdict::Inconclusive,
        };
        let out = ShellOutcome { value, error, verdict, evaluations: spent, shells };
        match verdict {
            Verdict::Infinite => return ShellOutcome { value: f64::INFINITY, ..out },
            Verdict::Finite if error <= opts.tol * value.abs().max(1.0) => return out,
            Verdict::Finite if !dom.radial && dom.dim >= 2 && spent.saturating_mul(3) <= opts.budget => {
                angular *= 2;
            }
            Verdict::Finite => return ShellOutcome { verdict: Verdict::Inconclusive, ..out },
            Verdict::Inconclusive if !dom.radial && dom.dim >= 2 && spent.saturating_mul(3) <= opts.budget => {
                angular *= 2;
            }
            Verdict::Inconclusive => return out,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dom(dim: usize, r_min: f64, r_max: f64, breaks: Vec<f64>, radial: bool) -> ShellDomain {
        ShellDomain { dim, r_min, r_max, breaks, radial, window: None }
    }

    #[test]
    fn gauss_legendre_is_exact_for_degree_15() {
        let v = gauss_legendre(0.0, 2.0, 1, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_in_three_dimensions() {
        let d = dom(3, 0.0, f64::INFINITY, vec![], true);
        let out = integrate(&d, &|z: &[f64]| (-z.iter().map(|v| v * v).sum::<f64>()).exp(), &ShellOptions::default());
        assert_eq!(out.verdict, Verdict::Finite);
        assert!((out.value - PI.powf(1.5)).abs() < 1e-6, "{}", out.value);
    }

    #[test]
    fn log_divergence_detected() {
        let d = dom(1, 0.0, 1.0, vec![], true);
        let out = integrate(&d, &|z: &[f64]| 1.0 / z[0].abs(), &ShellOptions::default());
        assert_eq!(out.verdict, Verdict::Infinite);
    }

    #[test]
    fn annular_support_is_closed_form() {
        let d = dom(2, 1.0, 2.0, vec![], false);
        let out = integrate(&d, &|_: &[f64]| 1.0, &ShellOptions::default());
        assert_eq!(out.verdict, Verdict::Finite);
        assert!((out.value - 3.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn same_result_in_both_modes() {
        let d = dom(3, 0.0, f64::INFINITY, vec![1.0], false);
        let f = |z: &[f64]| (-(z[0] - 0.3).powi(2) - z[1] * z[1] - 2.0 * z[2] * z[2]).exp();
        let mut o = ShellOptions { tol: 1e-2, ..Default::default() };
        o.exec = Execution::Sequential;
        let a = integrate(&d, &f, &o);
        o.exec = Execution::Parallel;
        let b = integrate(&d, &f, &o);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }
}
