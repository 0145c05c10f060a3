//! Lattices `G = Σ Z v_k`, nearest-point rounding, confined lattice paths
//! built by induction over the flag `W_1 ⊂ … ⊂ W_N`, and a best-first
//! search oracle.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

/// Tolerance factor for lattice-membership checks, relative to `gram_scale`.
pub const STEP_TOL: f64 = 1e-9;
const DECOMPOSE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "LatticeRepr", into = "LatticeRepr")]
pub struct Lattice {
    dim: usize,
    generators: Vec<Vec<f64>>,
    gram_scale: f64,
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    /// Upper-triangular factor of `V = QR`; column `j` holds `v_j` in the
    /// orthonormal frame adapted to the flag.
    r: DMatrix<f64>,
    /// `proj[j]`: coordinates of the projection of `v_j` onto `W_{j-1}` in
    /// the basis `v_1 … v_{j-1}`.
    proj: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeRepr {
    generators: Vec<Vec<f64>>,
    /// Informational on output; recomputed on input.
    #[serde(default)]
    gram_scale: Option<f64>,
}

impl TryFrom<LatticeRepr> for Lattice {
    type Error = Error;
    fn try_from(r: LatticeRepr) -> Result<Self> {
        Lattice::new(r.generators)
    }
}

impl From<Lattice> for LatticeRepr {
    fn from(l: Lattice) -> Self {
        LatticeRepr { generators: l.generators, gram_scale: Some(l.gram_scale) }
    }
}

impl PartialEq for Lattice {
    fn eq(&self, other: &Self) -> bool {
        self.generators == other.generators
    }
}

impl Lattice {
    pub fn new(generators: Vec<Vec<f64>>) -> Result<Self> {
        let dim = generators.len();
        if dim == 0 || generators.iter().any(|g| g.len() != dim) {
            return Err(Error::InvalidInput(format!("need N generators of length N, got {dim} generators")));
        }
        if generators.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("generator entries must be finite".into()));
        }
        let v = DMatrix::from_fn(dim, dim, |i, j| generators[j][i]);
        let sv = v.clone().svd(false, false).singular_values;
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > 1e-10 * smax) {
            return Err(Error::InvalidInput(format!(
                "generators are numerically dependent (σ_min/σ_max = {:.3e})",
                smin / smax
            )));
        }
        let v_inv = v.clone().try_inverse().ok_or_else(|| Error::InvalidInput("singular generator matrix".into()))?;
        let r = v.clone().qr().r();
        let mut proj = vec![Vec::new(); dim];
        for (j, pj) in proj.iter_mut().enumerate().skip(1) {
            let rj = r.view((0, 0), (j, j)).into_owned();
            let rhs = DVector::from_fn(j, |i, _| r[(i, j)]);
            let sol = rj.solve_upper_triangular(&rhs).expect("nonsingular leading block");
            *pj = sol.iter().copied().collect();
        }
        let gram_scale = generators.iter().map(|g| g.iter().map(|x| x * x).sum::<f64>().sqrt()).sum();
        Ok(Lattice { dim, generators, gram_scale, v, v_inv, r, proj })
    }

    pub fn standard(dim: usize) -> Self {
        Lattice::new((0..dim).map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect())
            .expect("identity basis")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generators(&self) -> &[Vec<f64>] {
        &self.generators
    }

    /// `Σ |v_k|`.
    pub fn gram_scale(&self) -> f64 {
        self.gram_scale
    }

    /// Ratio of extreme singular values of the generator matrix.
    pub fn condition_number(&self) -> f64 {
        let sv = self.v.clone().svd(false, false).singular_values;
        sv.max() / sv.min()
    }

    /// `V k`.
    pub fn point(&self, k: &[i64]) -> Vec<f64> {
        (0..self.dim).map(|i| (0..self.dim).map(|j| self.v[(i, j)] * k[j] as f64).sum()).collect()
    }

    /// Real coordinates `V⁻¹ x`.
    pub fn coords(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|i| (0..self.dim).map(|j| self.v_inv[(i, j)] * x[j]).sum()).collect()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::InvalidInput(format!("point has {} coordinates, lattice dimension is {}", x.len(), self.dim)));
        }
        Ok(())
    }

    /// Integer coordinates of the rounding `V·round(V⁻¹x)` (ties to even).
    pub fn round_coords(&self, x: &[f64]) -> Vec<i64> {
        self.coords(x).iter().map(|c| c.round_ties_even() as i64).collect()
    }

    /// Integer coordinates of a lattice point.
    pub fn decompose(&self, x: &[f64]) -> Result<Vec<i64>> {
        self.check_point(x)?;
        let k = self.round_coords(x);
        let p = self.point(&k);
        let residual = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if residual > DECOMPOSE_TOL * self.gram_scale {
            return Err(Error::NotALatticePoint { residual });
        }
        Ok(k)
    }

    /// Distance from `V a` to `W_j` (span of the first `j` generators).
    fn dist_to_flag(&self, a: &[i64], j: usize) -> f64 {
        (j..self.dim)
            .map(|i| {
                let c: f64 = (i..self.dim).map(|l| self.r[(i, l)] * a[l] as f64).sum();
                c * c
            })
            .sum::<f64>()
            .sqrt()
    }

    fn norm_of(&self, a: &[i64]) -> f64 {
        self.point(a).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn half_sum(&self, j: usize) -> f64 {
        0.5 * self.generators[..j].iter().map(|g| g.iter().map(|x| x * x).sum::<f64>().sqrt()).sum::<f64>()
    }
}

/// Nearest-point rounding; the result lies within `½ Σ|v_k|` of `x0`.
pub fn lattice_point_in_ball(lat: &Lattice, x0: &[f64], r: f64) -> Result<Vec<f64>> {
    lat.check_point(x0)?;
    let bound = 0.5 * lat.gram_scale;
    if !(r > bound) {
        return Err(Error::RadiusTooSmall { radius: r, bound });
    }
    Ok(lat.point(&lat.round_coords(x0)))
}

pub fn decompose(lat: &Lattice, x: &[f64]) -> Result<Vec<i64>> {
    lat.decompose(x)
}

/// A walk whose consecutive differences are `±v_k`. `steps[l]` is the signed
/// 1-based generator index taking `points[l]` to `points[l + 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GPath {
    pub points: Vec<Vec<f64>>,
    pub steps: Vec<i32>,
}

impl GPath {
    fn from_steps(lat: &Lattice, start: &[f64], steps: Vec<i32>) -> Self {
        let mut acc = vec![0i64; lat.dim];
        let mut points = Vec::with_capacity(steps.len() + 1);
        points.push(start.to_vec());
        for &s in &steps {
            acc[s.unsigned_abs() as usize - 1] += s.signum() as i64;
            let p = lat.point(&acc);
            points.push(start.iter().zip(&p).map(|(a, b)| a + b).collect());
        }
        GPath { points, steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `max_l |w_l − center|`.
    pub fn max_excursion(&self, center: &[f64]) -> f64 {
        self.points
            .iter()
            .map(|p| p.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

struct Builder<'a> {
    lat: &'a Lattice,
    depth: usize,
    max_depth: usize,
}

impl Builder<'_> {
    fn invariant(&self, ok: bool, what: impl FnOnce() -> String) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::Internal(what()))
        }
    }

    /// Path from 0 to `V x` with `x ∈ G_level`, inside `B_{4^{level-1} rho}(0)`.
    fn claim(&mut self, level: usize, rho: f64, x: &[i64]) -> Result<Vec<i32>> {
        let lat = self.lat;
        let tol = STEP_TOL * lat.gram_scale;
        self.invariant(x[level..].iter().all(|&c| c == 0), || format!("point outside G_{level}"))?;
        self.invariant(lat.norm_of(x) < rho + lat.half_sum(level - 1) + tol, || {
            format!("level {level}: |x| = {} exceeds ρ + ½Σ|v_i| with ρ = {rho}", lat.norm_of(x))
        })?;
        self.invariant(lat.dist_to_flag(x, level - 1) < rho + tol, || {
            format!("level {level}: dist(x, W) = {} exceeds ρ = {rho}", lat.dist_to_flag(x, level - 1))
        })?;
        self.depth += 1;
        self.max_depth = self.max_depth.max(self.depth);
        self.invariant(self.depth <= lat.dim, || format!("recursion depth {} exceeds dimension", self.depth))?;
        let out = self.claim_inner(level, rho, x);
        self.depth -= 1;
        out
    }

    fn claim_inner(&mut self, level: usize, rho: f64, x: &[i64]) -> Result<Vec<i32>> {
        let lat = self.lat;
        let tol = STEP_TOL * lat.gram_scale;
        let j = level - 1;
        let mut k = x[j];
        if level == 1 {
            let s = if k >= 0 { 1 } else { -1 };
            return Ok(vec![s; k.unsigned_abs() as usize]);
        }
        if k == 0 {
            return self.claim(level - 1, 2.0 * rho, x);
        }
        let s = k.signum();
        let mut cur = x.to_vec();
        let mut segments: Vec<Vec<i64>> = Vec::new();
        while k != 0 {
            // x1 = cur − s v_level; round its projection onto W_{level-1}.
            let c = &lat.proj[j];
            let y_star: Vec<i64> =
                (0..j).map(|i| (cur[i] as f64 + (k - s) as f64 * c[i]).round_ties_even() as i64).collect();
            let mut next = vec![0i64; lat.dim];
            for i in 0..j {
                next[i] = cur[i] - y_star[i];
            }
            next[j] = k - s;
            let mut ys = vec![0i64; lat.dim];
            ys[..j].copy_from_slice(&y_star);
            self.invariant(lat.norm_of(&next) < rho + lat.half_sum(j) + tol, || {
                format!("level {level}: |x'| bound violated")
            })?;
            self.invariant(lat.dist_to_flag(&next, j) < rho + tol, || format!("level {level}: dist(x', W) bound violated"))?;
            self.invariant(lat.norm_of(&ys) < 2.0 * rho + tol, || format!("level {level}: |y*| ≥ 2ρ"))?;
            self.invariant((k - s).abs() < k.abs(), || "coefficient did not decrease".into())?;
            segments.push(ys);
            cur = next;
            k -= s;
        }
        let mut steps = self.claim(level - 1, 2.0 * rho, &cur)?;
        for ys in segments.iter().rev() {
            steps.extend(self.claim(level - 1, 2.0 * rho, ys)?);
            steps.push(s as i32 * level as i32);
        }
        Ok(steps)
    }
}

/// Statistics of a constructed path.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PathStats {
    pub bound: f64,
    pub max_excursion: f64,
    /// `max_excursion / rho`; the proven bound is `4^{N-1}`.
    pub excursion_ratio: f64,
    pub recursion_depth: usize,
}

/// Confined lattice path from `x_start` to `x_end` (whose difference must lie
/// in the lattice) inside `B_{4^{N-1} rho}(x_start)`.
pub fn construct_path(lat: &Lattice, x_start: &[f64], x_end: &[f64], rho: f64) -> Result<GPath> {
    construct_path_with_stats(lat, x_start, x_end, rho).map(|(p, _)| p)
}

pub fn construct_path_with_stats(lat: &Lattice, x_start: &[f64], x_end: &[f64], rho: f64) -> Result<(GPath, PathStats)> {
    lat.check_point(x_start)?;
    lat.check_point(x_end)?;
    if !(rho >= lat.gram_scale) {
        return Err(Error::InvalidInput(format!("ρ = {rho} must be at least Σ|v_k| = {}", lat.gram_scale)));
    }
    let diff: Vec<f64> = x_end.iter().zip(x_start).map(|(a, b)| a - b).collect();
    let dist = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(dist < rho) {
        return Err(Error::InvalidInput(format!("endpoints are {dist} apart, need less than ρ = {rho}")));
    }
    let k = lat.decompose(&diff)?;
    let mut b = Builder { lat, depth: 0, max_depth: 0 };
    let steps = b.claim(lat.dim, rho, &k)?;
    let path = GPath::from_steps(lat, x_start, steps);
    let bound = 4f64.powi(lat.dim as i32 - 1) * rho;
    let exc = path.max_excursion(x_start);
    let stats = PathStats { bound, max_excursion: exc, excursion_ratio: exc / rho, recursion_depth: b.max_depth };
    if exc > bound + STEP_TOL * lat.gram_scale {
        return Err(Error::Internal(format!("path leaves the confinement ball: {exc} > {bound}")));
    }
    Ok((path, stats))
}

/// Shortest path in `B_radius(x_start)` by best-first search with the exact
/// coordinate-distance heuristic. Neighbors are tried in the order
/// `+v_1, −v_1, +v_2, −v_2, …`. `Ok(None)` means no confined path exists.
pub fn bfs_confined_path(
    lat: &Lattice,
    x_start: &[f64],
    x_end: &[f64],
    radius: f64,
    node_cap: usize,
) -> Result<Option<GPath>> {
    lat.check_point(x_start)?;
    lat.check_point(x_end)?;
    if node_cap == 0 {
        return Err(Error::InvalidInput("node_cap must be positive".into()));
    }
    let diff: Vec<f64> = x_end.iter().zip(x_start).map(|(a, b)| a - b).collect();
    let target = lat.decompose(&diff)?;
    let n = lat.dim;
    let inside = |c: &[i64]| lat.norm_of(c) <= radius + STEP_TOL * lat.gram_scale;
    let origin = vec![0i64; n];
    if !inside(&target) {
        return Ok(None);
    }
    let h = |c: &[i64]| c.iter().zip(&target).map(|(a, b)| (a - b).unsigned_abs()).sum::<u64>();
    let mut parent: HashMap<Vec<i64>, (u64, i32)> = HashMap::new();
    parent.insert(origin.clone(), (0, 0));
    let mut heap = BinaryHeap::new();
    let mut counter = 0u64;
    heap.push(Reverse((h(&origin), 0u64, counter, origin.clone())));
    while let Some(Reverse((_, _, _, c))) = heap.pop() {
        if c == target {
            let mut steps = Vec::new();
            let mut cur = c;
            while cur != origin {
                let s = parent[&cur].1;
                steps.push(s);
                cur[s.unsigned_abs() as usize - 1] -= s.signum() as i64;
            }
            steps.reverse();
            return Ok(Some(GPath::from_steps(lat, x_start, steps)));
        }
        let g = parent[&c].0;
        for i in 0..n {
            for sign in [1i64, -1] {
                let mut nb = c.clone();
                nb[i] += sign;
                if !inside(&nb) {
                    continue;
                }
                let better = parent.get(&nb).is_none_or(|&(gn, _)| g + 1 < gn);
                if better {
                    parent.insert(nb.clone(), (g + 1, sign as i32 * (i as i32 + 1)));
                    if parent.len() > node_cap {
                        return Err(Error::CapExceeded { cap: node_cap });
                    }
                    counter += 1;
                    let f = g + 1 + h(&nb);
                    // Among equal estimates prefer the deepest node.
                    heap.push(Reverse((f, u64::MAX - (g + 1), counter, nb)));
                }
            }
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathCheck {
    pub valid: bool,
    /// Index of the first offending point (or step target).
    pub first_violation: Option<usize>,
    pub reason: Option<String>,
}

impl PathCheck {
    fn fail(i: usize, why: String) -> Self {
        PathCheck { valid: false, first_violation: Some(i), reason: Some(why) }
    }
}

/// Check step membership and confinement `|w_l − center| ≤ radius`.
pub fn verify_path(path: &GPath, lat: &Lattice, center: &[f64], radius: f64) -> PathCheck {
    let tol = STEP_TOL * lat.gram_scale;
    if path.points.len() != path.steps.len() + 1 {
        return PathCheck::fail(0, format!("{} points for {} steps", path.points.len(), path.steps.len()));
    }
    for (l, p) in path.points.iter().enumerate() {
        if p.len() != lat.dim {
            return PathCheck::fail(l, "point dimension mismatch".into());
        }
        if l > 0 {
            let s = path.steps[l - 1];
            let idx = s.unsigned_abs() as usize;
            if s == 0 || idx > lat.dim {
                return PathCheck::fail(l, format!("step label {s} is not a generator"));
            }
            let g = &lat.generators[idx - 1];
            let sg = s.signum() as f64;
            let err = p
                .iter()
                .zip(&path.points[l - 1])
                .zip(g)
                .map(|((a, b), v)| (a - b - sg * v).powi(2))
                .sum::<f64>()
                .sqrt();
            if err > tol {
                return PathCheck::fail(l, format!("step {l} differs from the labelled generator by {err:e}"));
            }
        }
        let d = p.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if d > radius + tol {
            return PathCheck::fail(l, format!("point {l} at distance {d} exceeds radius {radius}"));
        }
    }
    PathCheck { valid: true, first_violation: None, reason: None }
}
