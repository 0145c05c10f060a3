use super::{power_integral, KernelSpec, XKernelSpec};
use crate::error::{invalid, Error, Result};
use crate::geometry::{ball_volume, norm, sphere_area};
use crate::par::Execution;
use crate::quadrature::{integrate, ShellOptions, ShellOutcome, Verdict};
use crate::rng::{self, tag};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IntegrabilityReport {
    /// `∫ (1 ∧ |z|²) j(z) dz`; `null` in JSON when infinite.
    pub integral_estimate: f64,
    pub verdict: Verdict,
    pub error_estimate: f64,
    pub samples_used: u64,
}

/// Audit the Lévy condition `∫ (1 ∧ |z|²) j < ∞`.
pub fn check_levy_integrability(spec: &KernelSpec, tolerance: f64, budget: u64, seed: u64) -> Result<IntegrabilityReport> {
    if !(tolerance > 0.0) || budget == 0 {
        return invalid("tolerance and budget must be positive");
    }
    let dom = spec.shell_domain(&[1.0], true);
    let f = |z: &[f64]| {
        let r2: f64 = z.iter().map(|v| v * v).sum();
        let j = spec.eval(z);
        if j == 0.0 {
            0.0
        } else {
            r2.min(1.0) * j
        }
    };
    let opts = ShellOptions { tol: tolerance, budget, seed, ..Default::default() };
    let out = integrate(&dom, &f, &opts);
    Ok(IntegrabilityReport {
        integral_estimate: out.value,
        verdict: out.verdict,
        error_estimate: out.error,
        samples_used: out.evaluations,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NontrivialityEntry {
    pub radius: f64,
    pub positive: bool,
    /// Estimate of `|{j > 0} ∩ B_r|`.
    pub measure: f64,
    pub exact: bool,
    /// No positive sample was found; the set may still have positive measure.
    pub sampling_limited: bool,
    pub samples: u64,
}

const NONTRIVIAL_SAMPLES: usize = 1 << 16;
const BATCH: usize = 1024;

/// Check that `{j > 0}` meets every requested ball around the origin.
///
/// A sampled radius is positive when at least one of the `2^16` uniform
/// points in `B_r` hits the support, i.e. the detection floor is
/// `|B_r| / 2^16`.
pub fn check_nontriviality(spec: &KernelSpec, radii: &[f64], seed: u64) -> Result<Vec<NontrivialityEntry>> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return invalid("radii must be nonempty and positive");
    }
    let dim = spec.dimension;
    radii
        .iter()
        .enumerate()
        .map(|(ri, &r)| {
            if let Some(m) = spec.radial_support_measure(r) {
                return Ok(NontrivialityEntry {
                    radius: r,
                    positive: m > 0.0,
                    measure: m,
                    exact: true,
                    sampling_limited: false,
                    samples: 0,
                });
            }
            let batches = NONTRIVIAL_SAMPLES / BATCH;
            let hits = Execution::default().sum(batches, |b| {
                let mut g = rng::stream(seed, tag::NONTRIVIAL, ((ri as u64) << 32) | b as u64);
                let mut z = vec![0.0; dim];
                let mut h = 0.0;
                for _ in 0..BATCH {
                    rng::in_ball(&mut g, dim, r, &mut z);
                    if spec.eval(&z) > 0.0 {
                        h += 1.0;
                    }
                }
                h
            });
            let vol = ball_volume(dim) * r.powi(dim as i32);
            Ok(NontrivialityEntry {
                radius: r,
                positive: hits >= 1.0,
                measure: vol * hits / NONTRIVIAL_SAMPLES as f64,
                exact: false,
                sampling_limited: hits == 0.0,
                samples: NONTRIVIAL_SAMPLES as u64,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SphereProfile {
    pub radius: f64,
    /// `(N−1)`-dimensional measure of `A ∩ S_r`.
    pub value: f64,
    pub error: f64,
    pub exact: bool,
}

const SPHERE_SAMPLES: usize = 1 << 16;

/// Surface measure of `A ∩ S_r` for indicator-set kernels.
pub fn sphere_profile(spec: &KernelSpec, r: f64, seed: u64) -> Result<SphereProfile> {
    if spec.profile.is_some() {
        return Err(Error::UnsupportedShape("sphere profile of a tabulated radial kernel".into()));
    }
    if !(r > 0.0) {
        return invalid("sphere radius must be positive");
    }
    let n = spec.dimension;
    let area = sphere_area(n) * r.powi(n as i32 - 1);
    let member = |z: &[f64]| if spec.contains(z) { 1.0 } else { 0.0 };
    if spec.is_radial() || n == 1 {
        let mut z = vec![0.0; n];
        z[0] = r;
        let frac = if n == 1 { 0.5 * (member(&[r]) + member(&[-r])) } else { member(&z) };
        return Ok(SphereProfile { radius: r, value: area * frac, error: 0.0, exact: true });
    }
    let batches = SPHERE_SAMPLES / BATCH;
    let parts = Execution::default().map(batches, |b| {
        let mut g = rng::stream(seed, tag::SPHERE, b as u64);
        let mut z = vec![0.0; n];
        let mut hits = 0.0;
        for i in 0..BATCH {
            if n == 2 {
                let u: f64 = g.random();
                let t = 2.0 * PI * ((b * BATCH + i) as f64 + u) / SPHERE_SAMPLES as f64;
                z[0] = r * t.cos();
                z[1] = r * t.sin();
            } else {
                rng::unit_direction(&mut g, n, &mut z);
                z.iter_mut().for_each(|v| *v *= r);
            }
            hits += member(&z);
        }
        hits
    });
    let p = parts.iter().sum::<f64>() / SPHERE_SAMPLES as f64;
    let m = SPHERE_SAMPLES as f64;
    // Stratified angles on the circle: each boundary crossing contributes at
    // most one misclassified stratum.
    let error = if n == 2 { area * 8.0 / m } else { area * 3.0 * (p * (1.0 - p) / m).sqrt().max(1.0 / m) };
    Ok(SphereProfile { radius: r, value: area * p, error, exact: false })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MassReport {
    /// `∫ j`; `null` in JSON when infinite.
    pub value: f64,
    pub infinite: bool,
    pub error: f64,
    pub exact: bool,
}

impl MassReport {
    pub fn finite(&self) -> Option<f64> {
        (!self.infinite).then_some(self.value)
    }
}

/// `∫ j` with default tolerance `1e-6`.
pub fn total_mass(spec: &KernelSpec, seed: u64) -> Result<MassReport> {
    total_mass_with(spec, &ShellOptions { seed, ..Default::default() })
}

pub fn total_mass_with(spec: &KernelSpec, opts: &ShellOptions) -> Result<MassReport> {
    if let Some(m) = spec.analytic_total_mass() {
        return Ok(MassReport { value: m, infinite: m.is_infinite(), error: 0.0, exact: true });
    }
    let dom = spec.shell_domain(&[], true);
    let f = |z: &[f64]| spec.eval(z);
    let out = integrate(&dom, &f, opts);
    mass_from(out)
}

/// `(∫_{|z|>R} j, error)`.
pub fn mass_tail(spec: &KernelSpec, radius: f64, seed: u64) -> Result<(f64, f64)> {
    let mass = if let Some(pieces) = spec.radial_pieces() {
        let n = spec.dimension;
        let alpha = n as f64 - 1.0 + spec.exponent;
        let m: f64 =
            pieces.iter().map(|p| p.value * sphere_area(n) * power_integral(p.lo.max(radius), p.hi.max(radius), alpha)).sum();
        MassReport { value: m, infinite: m.is_infinite(), error: 0.0, exact: true }
    } else {
        let mut dom = spec.shell_domain(&[], true);
        dom.r_min = dom.r_min.max(radius);
        if dom.r_min >= dom.r_max {
            return Ok((0.0, 0.0));
        }
        let f = |z: &[f64]| spec.eval(z);
        mass_from(integrate(&dom, &f, &ShellOptions { seed, tol: 1e-8, ..Default::default() }))?
    };
    if mass.infinite {
        return Err(Error::HypothesisViolation(format!("kernel mass outside radius {radius} is infinite")));
    }
    Ok((mass.value, mass.error))
}

pub(crate) fn mass_from(out: ShellOutcome) -> Result<MassReport> {
    match out.verdict {
        Verdict::Finite => Ok(MassReport { value: out.value, infinite: false, error: out.error, exact: false }),
        Verdict::Infinite => Ok(MassReport { value: f64::INFINITY, infinite: true, error: 0.0, exact: false }),
        Verdict::Inconclusive => Err(Error::Inconclusive(format!(
            "kernel mass undecided after {} evaluations (estimate {:.6e} ± {:.2e})",
            out.evaluations, out.value, out.error
        ))),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EnvelopeOptions {
    /// Number of base points `x` sampled.
    pub samples: usize,
    /// The `x` samples are uniform in `[-half_width, half_width]^N`.
    pub half_width: f64,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        EnvelopeOptions { samples: 256, half_width: PI }
    }
}

/// Sampled lower envelope `min_x min(J(x, x+z), J(x, x−z))` at each offset,
/// with the certified floor `m_min·j(z)` alongside.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeTable {
    pub offsets: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub floor: Vec<f64>,
    pub x_samples: Vec<Vec<f64>>,
    /// Largest `values − floor`; the true envelope lies in `[floor, values]`.
    pub max_gap: f64,
}

impl EnvelopeTable {
    /// Piecewise-constant lookup: value at the nearest tabulated offset.
    pub fn nearest(&self, z: &[f64]) -> f64 {
        let d = |o: &Vec<f64>| o.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        self.offsets
            .iter()
            .enumerate()
            .min_by(|a, b| d(a.1).total_cmp(&d(b.1)))
            .map_or(0.0, |(i, _)| self.values[i])
    }
}

pub fn lower_envelope(xspec: &XKernelSpec, offsets: &[Vec<f64>], seed: u64, opts: &EnvelopeOptions) -> Result<EnvelopeTable> {
    let n = xspec.base.dimension;
    if offsets.iter().any(|o| o.len() != n) {
        return invalid("offset dimension mismatch");
    }
    if opts.samples == 0 {
        return invalid("envelope needs at least one x sample");
    }
    let mut g = rng::stream(seed, tag::ENVELOPE, 0);
    let xs: Vec<Vec<f64>> = (0..opts.samples)
        .map(|_| (0..n).map(|_| opts.half_width * (2.0 * g.random::<f64>() - 1.0)).collect())
        .collect();
    let (m_min, _) = xspec.multiplier.bounds();
    let values = Execution::default().map(offsets.len(), |i| {
        let z = &offsets[i];
        let mz: Vec<f64> = z.iter().map(|v| -v).collect();
        xs.iter().map(|x| xspec.at_offset(x, z).min(xspec.at_offset(x, &mz))).fold(f64::INFINITY, f64::min)
    });
    let floor: Vec<f64> = offsets.iter().map(|z| m_min * xspec.base.eval(z)).collect();
    let max_gap = values.iter().zip(&floor).map(|(v, f)| v - f).filter(|g| g.is_finite()).fold(0.0, f64::max);
    Ok(EnvelopeTable { offsets: offsets.to_vec(), values, floor, x_samples: xs, max_gap })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct J3Report {
    /// `max_x ∫ (1 ∧ |z|) |J(x,x+z) − J(x,x−z)| dz` over the sampled `x`.
    pub estimate: f64,
    pub error: f64,
    pub worst_x: Vec<f64>,
    pub per_x: Vec<f64>,
    pub evaluations: u64,
}

const J3_POINTS: usize = 32;

/// Audit the asymmetry condition on sampled base points.
pub fn check_j3(xspec: &XKernelSpec, seed: u64, budget: u64) -> Result<J3Report> {
    if budget == 0 {
        return invalid("budget must be positive");
    }
    let n = xspec.base.dimension;
    let mut g = rng::stream(seed, tag::J3, u64::MAX);
    let xs: Vec<Vec<f64>> =
        (0..J3_POINTS).map(|_| (0..n).map(|_| PI * (2.0 * g.random::<f64>() - 1.0)).collect()).collect();
    let dom = xspec.base.shell_domain(&[1.0], false);
    let per_budget = (budget / J3_POINTS as u64).max(1);
    let outs: Vec<ShellOutcome> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = |z: &[f64]| {
                let mz: Vec<f64> = z.iter().map(|v| -v).collect();
                let d = (xspec.at_offset(x, z) - xspec.at_offset(x, &mz)).abs();
                if d == 0.0 {
                    0.0
                } else {
                    norm(z).min(1.0) * d
                }
            };
            let opts = ShellOptions {
                tol: 1e-3,
                budget: per_budget,
                seed: rng::derive_seed(seed, i as u64),
                angular: 128,
                exec: Execution::Parallel,
            };
            integrate(&dom, &f, &opts)
        })
        .collect();
    let evaluations = outs.iter().map(|o| o.evaluations).sum();
    if let Some((i, o)) = outs.iter().enumerate().find(|(_, o)| o.verdict != Verdict::Finite) {
        return Err(Error::Inconclusive(format!(
            "asymmetry integral at x = {:?} is {:?} after {} evaluations",
            xs[i], o.verdict, o.evaluations
        )));
    }
    let (wi, worst) = outs.iter().enumerate().max_by(|a, b| a.1.value.total_cmp(&b.1.value)).expect("nonempty");
    Ok(J3Report {
        estimate: worst.value,
        error: worst.error,
        worst_x: xs[wi].clone(),
        per_x: outs.iter().map(|o| o.value).collect(),
        evaluations,
    })
}
