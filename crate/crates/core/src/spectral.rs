//! First Dirichlet eigenvalue and the rearrangement lower bound.

use crate::discrete::{build_weight_table_with, DiscreteForm, DomainMask, Grid, WeightOptions};
use crate::error::{invalid, Error, Result};
use crate::geometry::{ball_volume, radius_for_volume, sphere_area};
use crate::kernels::{power_integral, total_mass, KernelSpec, RadialPiece};
use crate::linalg::{dot, norm, pcg};
use crate::par::Execution;
use crate::rng::{self, tag};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Clone, Copy, Debug)]
pub struct EigenOptions {
    /// Stop when `‖Lv − λv‖ ≤ rel_tol·λ` for unit `v`.
    pub rel_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { rel_tol: 1e-8, max_iter: 20_000, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lambda1Report {
    pub value: f64,
    /// `‖Lv − λv‖` for the unit eigenvector.
    pub residual: f64,
    pub iterations: usize,
    pub inner_iterations: usize,
    pub nodes: usize,
    /// Eigenvector on interior nodes (compact order), unit ℓ² norm, positive sum.
    #[serde(skip)]
    pub vector: Vec<f64>,
}

/// Smallest eigenvalue of `L_Ω` by inverse iteration with Jacobi-PCG solves.
pub fn lambda1(form: &DiscreteForm, mask: &DomainMask, opts: &EigenOptions) -> Result<Lambda1Report> {
    if mask != &form.mask {
        return lambda1(&form.with_mask(mask.clone())?, mask, opts);
    }
    let n = form.interior_len();
    if n == 0 {
        return invalid("the domain has no interior nodes");
    }
    if !(opts.rel_tol > 0.0) {
        return invalid("rel_tol must be positive");
    }
    let d = form.degree();
    if !(d > 0.0) {
        return Err(Error::HypothesisViolation(
            "the kernel has no mass on this grid, so every node is decoupled and Λ₁ = 0".into(),
        ));
    }
    let exec = form.exec;
    let apply = |v: &[f64], out: &mut [f64]| form.apply_interior(v, out);
    let diag = vec![d; n];
    let mut r = rng::stream(opts.seed, tag::EIGEN, 0);
    let mut v: Vec<f64> = (0..n).map(|_| 0.5 + r.random::<f64>()).collect();
    let s = norm(exec, &v);
    v.iter_mut().for_each(|x| *x /= s);
    let mut lv = vec![0.0; n];
    let inner_tol = (opts.rel_tol * 1e-2).min(1e-10);
    let mut lambda = d;
    let mut inner_total = 0;
    for it in 0..opts.max_iter {
        apply(&v, &mut lv);
        lambda = dot(exec, &v, &lv);
        let residual = exec.sum(n, |i| (lv[i] - lambda * v[i]).powi(2)).sqrt();
        if !(lambda > 0.0) {
            return Err(Error::HypothesisViolation(format!("Rayleigh quotient {lambda:e} is not positive")));
        }
        if residual <= opts.rel_tol * lambda {
            if v.iter().sum::<f64>() < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            return Ok(Lambda1Report { value: lambda, residual, iterations: it, inner_iterations: inner_total, nodes: n, vector: v });
        }
        let mut y: Vec<f64> = v.iter().map(|x| x / lambda).collect();
        let out = pcg(exec, apply, &diag, &v, &mut y, inner_tol, 10 * n + 1000)?;
        inner_total += out.iterations;
        let s = norm(exec, &y);
        v = y.into_iter().map(|x| x / s).collect();
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: lambda })
}

/// Where the superlevel sets `{j ≥ c}` come from.
enum Levels {
    Radial { pieces: Vec<RadialPiece>, tau: f64, dim: usize },
    /// Kernel values at uniform samples of `B_R`, sorted descending.
    Sampled { values: Vec<f64>, volume: f64 },
}

const LEVEL_SAMPLES: usize = 1 << 18;
const LEVEL_BATCH: usize = 1024;

impl Levels {
    fn new(kernel: &KernelSpec, seed: u64) -> Result<Self> {
        if let Some(pieces) = kernel.radial_pieces() {
            return Ok(Levels::Radial { pieces, tau: kernel.exponent, dim: kernel.dimension });
        }
        let (_, hi) = kernel.support_radii();
        if !hi.is_finite() {
            return Err(Error::UnsupportedShape(
                "level-set sampling needs a non-radial kernel with bounded support".into(),
            ));
        }
        let n = kernel.dimension;
        let batches = LEVEL_SAMPLES / LEVEL_BATCH;
        let chunks: Vec<Vec<f64>> = Execution::default().map(batches, |b| {
            let mut r = rng::stream(seed, tag::LEVEL, b as u64);
            let mut z = vec![0.0; n];
            (0..LEVEL_BATCH)
                .map(|_| {
                    rng::in_ball(&mut r, n, hi, &mut z);
                    kernel.eval(&z)
                })
                .collect()
        });
        let mut values: Vec<f64> = chunks.into_iter().flatten().collect();
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Levels::Sampled { values, volume: ball_volume(n) * hi.powi(n as i32) })
    }

    fn exact(&self) -> bool {
        matches!(self, Levels::Radial { .. })
    }

    /// Radial interval of a piece where `value·t^τ ≥ c` (or `< c` with `below`).
    fn piece_range(p: &RadialPiece, tau: f64, c: f64, below: bool) -> Vec<(f64, f64)> {
        let (lo, hi) = (p.lo, p.hi);
        let above = if tau == 0.0 {
            if p.value >= c {
                Some((lo, hi))
            } else {
                None
            }
        } else if c <= 0.0 {
            Some((lo, hi))
        } else {
            let t = (c / p.value).powf(1.0 / tau);
            let (a, b) = if tau < 0.0 { (lo, hi.min(t)) } else { (lo.max(t), hi) };
            (a < b).then_some((a, b))
        };
        if !below {
            return above.into_iter().collect();
        }
        match above {
            None => vec![(lo, hi)],
            Some((a, b)) => [(lo, a), (b, hi)].into_iter().filter(|(x, y)| x < y).collect(),
        }
    }

    /// `|{j ≥ c}|` for `c > 0`.
    fn superlevel_measure(&self, c: f64) -> f64 {
        match self {
            Levels::Radial { pieces, tau, dim } => {
                let n = *dim as i32;
                pieces
                    .iter()
                    .flat_map(|p| Self::piece_range(p, *tau, c, false))
                    .map(|(a, b)| ball_volume(*dim) * (b.powi(n) - a.powi(n)))
                    .sum()
            }
            Levels::Sampled { values, volume } => {
                let k = values.partition_point(|&v| v >= c);
                volume * k as f64 / values.len() as f64
            }
        }
    }

    /// `∫_{j < c} j`.
    fn sublevel_mass(&self, c: f64) -> f64 {
        match self {
            Levels::Radial { pieces, tau, dim } => {
                let alpha = *dim as f64 - 1.0 + tau;
                pieces
                    .iter()
                    .map(|p| {
                        Self::piece_range(p, *tau, c, true)
                            .into_iter()
                            .map(|(a, b)| p.value * sphere_area(*dim) * power_integral(a, b, alpha))
                            .sum::<f64>()
                    })
                    .sum()
            }
            Levels::Sampled { values, volume } => {
                let k = values.partition_point(|&v| v >= c);
                volume * values[k..].iter().sum::<f64>() / values.len() as f64
            }
        }
    }

    /// `d(r) = sup{c ≥ 0 : |{j ≥ c}| ≥ r}`.
    fn rearrangement(&self, r: f64) -> f64 {
        match self {
            Levels::Radial { pieces, tau, .. } if *tau == 0.0 => pieces
                .iter()
                .map(|p| p.value)
                .filter(|&v| self.superlevel_measure(v) >= r)
                .fold(0.0, f64::max),
            Levels::Radial { .. } => {
                let mut hi = 1.0;
                while self.superlevel_measure(hi) >= r {
                    hi *= 2.0;
                    if hi > 1e300 {
                        return f64::INFINITY;
                    }
                }
                let mut lo = 0.0;
                if self.superlevel_measure(f64::MIN_POSITIVE) < r {
                    return 0.0;
                }
                for _ in 0..2000 {
                    let mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.superlevel_measure(mid) >= r {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            }
            Levels::Sampled { values, volume } => {
                let k = (r / volume * values.len() as f64).ceil() as usize;
                if k == 0 {
                    return values.first().copied().unwrap_or(0.0);
                }
                match values.get(k - 1) {
                    Some(&v) if v > 0.0 => v,
                    _ => 0.0,
                }
            }
        }
    }

    /// One-sigma binomial error of a sampled measure `m`.
    fn measure_error(&self, m: f64) -> f64 {
        match self {
            Levels::Radial { .. } => 0.0,
            Levels::Sampled { values, volume } => {
                let p = (m / volume).clamp(0.0, 1.0);
                volume * (p * (1.0 - p) / values.len() as f64).sqrt().max(1.0 / values.len() as f64)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Rearrangement {
    pub r: f64,
    /// `d(r)`.
    pub value: f64,
    /// `|{j ≥ d(r)}|`.
    pub superlevel_measure: f64,
    /// `∫_{j < d(r)} j`.
    pub sublevel_mass: f64,
    pub measure_error: f64,
    pub exact: bool,
}

fn rearrange_with(levels: &Levels, r: f64) -> Result<Rearrangement> {
    if !(r > 0.0 && r.is_finite()) {
        return invalid(format!("volume must be positive and finite, got {r}"));
    }
    let d = levels.rearrangement(r);
    if d.is_infinite() {
        return Err(Error::Inconclusive(format!("superlevel sets stay larger than {r} at every tested level")));
    }
    let (m, sub) = if d > 0.0 { (levels.superlevel_measure(d), levels.sublevel_mass(d)) } else { (f64::INFINITY, 0.0) };
    Ok(Rearrangement {
        r,
        value: d,
        superlevel_measure: m,
        sublevel_mass: sub,
        measure_error: if m.is_finite() { levels.measure_error(m) } else { 0.0 },
        exact: levels.exact(),
    })
}

/// `d(r)`, the decreasing rearrangement of `j` at volume `r`.
pub fn decreasing_rearrangement(kernel: &KernelSpec, r: f64, seed: u64) -> Result<Rearrangement> {
    rearrange_with(&Levels::new(kernel, seed)?, r)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LowerBound {
    pub r: f64,
    /// `∫_{j<d} j + d·(|{j ≥ d}| − r)`.
    pub value: f64,
    pub d: f64,
    pub sublevel_mass: f64,
    pub surplus: f64,
    pub error: f64,
    pub exact: bool,
}

fn bound_from(rr: Rearrangement, levels: &Levels) -> LowerBound {
    let surplus = if rr.value > 0.0 { rr.value * (rr.superlevel_measure - rr.r) } else { 0.0 };
    let error = match levels {
        Levels::Radial { .. } => 0.0,
        Levels::Sampled { values, volume } => {
            // Spread of the level-set estimates, plus the mass estimate's spread.
            let mean2 = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
            rr.value * rr.measure_error + 2.0 * volume * (mean2 / values.len() as f64).sqrt()
        }
    };
    LowerBound {
        r: rr.r,
        value: rr.sublevel_mass + surplus,
        d: rr.value,
        sublevel_mass: rr.sublevel_mass,
        surplus,
        error,
        exact: rr.exact,
    }
}

/// The rearrangement lower bound for `Λ₁` over sets of volume `r`.
pub fn lambda1_lower_bound(kernel: &KernelSpec, r: f64, seed: u64) -> Result<LowerBound> {
    let levels = Levels::new(kernel, seed)?;
    Ok(bound_from(rearrange_with(&levels, r)?, &levels))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RearrangementProfile {
    pub radii: Vec<f64>,
    pub rearrangement: Vec<f64>,
    pub lower_bound: Vec<f64>,
    pub measure_error: Vec<f64>,
    pub total_mass: Option<f64>,
}

/// `d(r)` and the lower bound over a list of volumes, sharing one level-set sample.
pub fn rearrangement_profile(kernel: &KernelSpec, radii: &[f64], seed: u64) -> Result<RearrangementProfile> {
    let levels = Levels::new(kernel, seed)?;
    let mut out = RearrangementProfile {
        radii: radii.to_vec(),
        rearrangement: Vec::new(),
        lower_bound: Vec::new(),
        measure_error: Vec::new(),
        total_mass: total_mass(kernel, seed).ok().and_then(|m| m.finite()),
    };
    for &r in radii {
        let rr = rearrange_with(&levels, r)?;
        let b = bound_from(rr, &levels);
        out.rearrangement.push(rr.value);
        out.lower_bound.push(b.value);
        out.measure_error.push(rr.measure_error);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct SmallVolumeOptions {
    pub spacing: f64,
    pub trunc_radius: f64,
    pub subdivision: usize,
    pub eigen: EigenOptions,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for SmallVolumeOptions {
    fn default() -> Self {
        SmallVolumeOptions {
            spacing: 1.0 / 64.0,
            trunc_radius: 4.0,
            subdivision: 3,
            eigen: EigenOptions::default(),
            seed: 0,
            exec: Execution::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SmallVolumeRow {
    pub r: f64,
    /// Volume of the node set actually used, `nodes·h^N`.
    pub volume: f64,
    pub nodes: usize,
    pub lambda1: f64,
    pub lower_bound: f64,
    pub total_mass: f64,
    pub slack: f64,
    pub bound_holds: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmallVolumeReport {
    pub rows: Vec<SmallVolumeRow>,
    /// Mass the stencil misses: the omitted diagonal cell.
    pub diagonal_mass: f64,
    pub refinement_delta: f64,
    pub tail_error: f64,
    /// `|d − ∫ j|`, the discrepancy of the single-cell eigenvalue.
    pub degree_gap: f64,
}

impl SmallVolumeReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "r,volume,nodes,lambda1,lower_bound,total_mass,slack")?;
        for row in &self.rows {
            writeln!(
                out,
                "{:e},{:e},{},{:e},{:e},{:e},{:e}",
                row.r, row.volume, row.nodes, row.lambda1, row.lower_bound, row.total_mass, row.slack
            )?;
        }
        Ok(())
    }
}

/// Discrete `Λ₁` of ball-like node sets of prescribed volume against the
/// rearrangement bound and the total mass.
pub fn small_volume_limit_check(kernel: &KernelSpec, volumes: &[f64], opts: &SmallVolumeOptions) -> Result<SmallVolumeReport> {
    let mass = total_mass(kernel, opts.seed)?;
    let mass = mass
        .finite()
        .ok_or_else(|| Error::HypothesisViolation("the small-volume limit needs a kernel of finite total mass".into()))?;
    if volumes.is_empty() || volumes.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return invalid("volumes must be a nonempty list of positive reals");
    }
    let n = kernel.dimension;
    let h = opts.spacing;
    let wopts = WeightOptions {
        trunc_radius: opts.trunc_radius,
        subdivision: opts.subdivision,
        refine_check: true,
        seed: opts.seed,
        exec: opts.exec,
    };
    let table = build_weight_table_with(kernel, h, &wopts)?;
    let vmax = volumes.iter().copied().fold(0.0, f64::max);
    let half = radius_for_volume(n, vmax) + (table.reach() as f64 + 2.0) * h;
    let grid = Grid::covering(vec![0.0; n], half, h)?;
    let cell = grid.cell_volume();
    let levels = Levels::new(kernel, opts.seed)?;
    let refinement_delta = table.refinement_delta.unwrap_or(0.0);
    let base_slack = table.diagonal_mass + refinement_delta + table.tail_error;
    let degree_gap = (table.degree() - mass).abs();
    let mut form = DiscreteForm::new(grid.clone(), DomainMask::from_indices(&grid, &[]), table.clone())?.with_execution(opts.exec);
    let mut rows = Vec::with_capacity(volumes.len());
    for &r in volumes {
        let count = ((r / cell).round() as usize).max(1);
        let mask = DomainMask::nearest_nodes(&grid, &vec![0.0; n], count);
        form = form.with_mask(mask.clone())?;
        let eig = lambda1(&form, &mask, &opts.eigen)?;
        let volume = count as f64 * cell;
        let lb = bound_from(rearrange_with(&levels, volume)?, &levels);
        let slack = base_slack + lb.error + 2.0 * opts.eigen.rel_tol * eig.value;
        rows.push(SmallVolumeRow {
            r,
            volume,
            nodes: count,
            lambda1: eig.value,
            lower_bound: lb.value,
            total_mass: mass,
            slack,
            bound_holds: eig.value >= lb.value - slack,
        });
    }
    Ok(SmallVolumeReport { rows, diagonal_mass: table.diagonal_mass, refinement_delta, tail_error: table.tail_error, degree_gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::build_weight_table;
    use crate::kernels::{Primitive, RadialProfile};
    use std::f64::consts::PI;

    fn two_level() -> KernelSpec {
        KernelSpec::new(1, vec![Primitive::FullSpace], 0.0, Some(RadialProfile { breaks: vec![0.5, 1.0], values: vec![2.0, 1.0] }))
            .unwrap()
    }

    #[test]
    fn rearrangement_examples() {
        let b2 = KernelSpec::ball(2, 1.0);
        assert_eq!(decreasing_rearrangement(&b2, 1.0, 0).unwrap().value, 1.0);
        assert_eq!(decreasing_rearrangement(&b2, 4.0, 0).unwrap().value, 0.0);
        assert_eq!(decreasing_rearrangement(&two_level(), 0.5, 0).unwrap().value, 2.0);
        let lb = lambda1_lower_bound(&b2, 1.0, 0).unwrap();
        assert!((lb.value - (PI - 1.0)).abs() < 1e-14);
        let lb = lambda1_lower_bound(&two_level(), 0.5, 0).unwrap();
        assert!((lb.value - 2.0).abs() < 1e-14);
        assert_eq!(lambda1_lower_bound(&b2, 4.0, 0).unwrap().value, 0.0);
    }

    #[test]
    fn power_kernel_rearrangement_inverts_the_level_measure() {
        // j = |z|^{-2} in N = 1: |{j ≥ c}| = 2 c^{-1/2}, so d(r) = 4 / r².
        let k = KernelSpec::power(1, -2.0);
        let d = decreasing_rearrangement(&k, 0.5, 0).unwrap();
        assert!((d.value - 16.0).abs() < 1e-9 * 16.0, "{}", d.value);
        // ∫_{|z| > r/2} z^{-2} = 4 / r.
        let lb = lambda1_lower_bound(&k, 0.5, 0).unwrap();
        assert!((lb.value - 8.0).abs() < 1e-8, "{}", lb.value);
    }

    #[test]
    fn single_node_eigenvalue_is_the_degree() {
        let h = 0.05;
        let grid = Grid::covering(vec![0.0], 2.0, h).unwrap();
        let mask = DomainMask::nearest_nodes(&grid, &[0.0], 1);
        let form = DiscreteForm::new(grid, mask.clone(), build_weight_table(&KernelSpec::ball(1, 1.0), h, 2.0, 3).unwrap()).unwrap();
        let e = lambda1(&form, &mask, &EigenOptions::default()).unwrap();
        assert!((e.value - form.degree()).abs() < 1e-14);
    }

    #[test]
    fn matches_dense_eigensolver() {
        let h = 1.0 / 40.0;
        let grid = Grid::covering(vec![0.0], 6.0, h).unwrap();
        let mask = DomainMask::from_fn(&grid, |x| x[0].abs() < 1.0);
        let table = build_weight_table(&KernelSpec::power(1, -2.0), h, 4.0, 3).unwrap();
        let form = DiscreteForm::new(grid, mask.clone(), table).unwrap();
        let e = lambda1(&form, &mask, &EigenOptions::default()).unwrap();
        let a = form.dense_interior_matrix();
        let m = nalgebra::DMatrix::from_fn(a.len(), a.len(), |i, j| a[i][j]);
        let dense = m.symmetric_eigen().eigenvalues.min();
        assert!((e.value - dense).abs() <= 1e-8 * dense, "{} vs {dense}", e.value);
    }

    #[test]
    fn sampled_levels_agree_with_the_radial_formula() {
        // A cone of half-angle π/2 is the whole space; force the sampled path
        // with a full-aperture cone cut at radius 1.
        let cone = KernelSpec::new(2, vec![Primitive::Cone { axis: vec![1.0, 0.0], half_angle: PI / 2.0, radius: Some(1.0) }], 0.0, None)
            .unwrap();
        let lb = lambda1_lower_bound(&cone, 1.0, 3).unwrap();
        assert!(!lb.exact);
        assert!((lb.value - (PI - 1.0)).abs() < 4.0 * lb.error.max(1e-3), "{} ± {}", lb.value, lb.error);
    }
}
