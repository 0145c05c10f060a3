//! Strong maximum principle: support connectivity, the discrete dichotomy,
//! and positivity certificates built from chains of ball pairs.

use crate::discrete::DiscreteForm;
use crate::error::{invalid, Error, Result};
use crate::geometry::{dist, norm, sub};
use crate::kernels::{check_nontriviality, KernelSpec};
use crate::lattice::{construct_path_with_stats, lattice_point_in_ball, GPath, Lattice};
use crate::maxprinciple::{verify_supersolution, ProblemData};
use crate::par::Execution;
use crate::rng::{self, tag};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SupportGraph {
    /// Connected components as sorted grid node indices, ordered by first node.
    pub components: Vec<Vec<usize>>,
    /// Component of each interior node, in compact order.
    pub label: Vec<usize>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Components of the graph on interior nodes with edges where the weight is positive.
pub fn support_graph(form: &DiscreteForm) -> SupportGraph {
    let n = form.interior_len();
    let mut parent: Vec<usize> = (0..n).collect();
    for c in 0..n {
        for d in form.interior_neighbors(c) {
            let (a, b) = (find(&mut parent, c), find(&mut parent, d));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut root_label = vec![usize::MAX; n];
    for c in 0..n {
        let r = find(&mut parent, c);
        if root_label[r] == usize::MAX {
            root_label[r] = components.len();
            components.push(Vec::new());
        }
        label[c] = root_label[r];
        components[root_label[r]].push(form.interior()[c]);
    }
    SupportGraph { components, label }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ComponentVerdict {
    /// Some node is at most `tol` and the nodal inequalities force every
    /// other node of the component below its propagated bound.
    IdenticallySmall { max_value: f64, max_bound: f64 },
    /// Every node exceeds `tol`.
    StrictlyPositive { min_value: f64 },
    /// A node exceeds the bound its neighbor's smallness forces on it.
    Violation { node: usize, position: Vec<f64>, value: f64, bound: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrongMpReport {
    pub components: Vec<ComponentReport>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComponentReport {
    pub nodes: usize,
    pub first_node: usize,
    #[serde(flatten)]
    pub verdict: ComponentVerdict,
}

impl StrongMpReport {
    pub fn has_violation(&self) -> bool {
        self.components.iter().any(|c| matches!(c.verdict, ComponentVerdict::Violation { .. }))
    }
}

#[derive(PartialEq)]
struct Bound(f64, usize);

impl Eq for Bound {}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bound {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Per-component dichotomy for a nonnegative supersolution.
///
/// With slack `s(x) ≥ −tol`, every neighbor `y = x + z` satisfies
/// `H w_z u(y) ≤ (d + c⁻(x)) u(x) + g⁻(x) + tol + (d + c⁺(x))·tol`, so
/// smallness at one node bounds its neighbors; bounds are propagated
/// smallest first.
pub fn strong_mp_check(p: &ProblemData, u: &[f64], tol: f64) -> Result<StrongMpReport> {
    let f = &p.form;
    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let slack_tol = tol + 1e-12 * f.degree() * scale;
    let sup = verify_supersolution(p, u, slack_tol)?;
    if !sup.is_supersolution {
        return invalid(format!("u is not a supersolution: slack {:e} at {:?}", sup.min_slack, sup.worst_position));
    }
    if let Some(i) = u.iter().position(|&v| v < -tol) {
        return invalid(format!("u = {:e} < −tol at {:?}", u[i], f.grid.position(i)));
    }
    let graph = support_graph(f);
    let hn = f.cell_volume();
    let d = f.degree();
    let stencil: Vec<(Vec<i64>, f64)> = f.stencil().map(|(k, w)| (k.to_vec(), w)).collect();
    let mut components = Vec::with_capacity(graph.components.len());
    for nodes in &graph.components {
        let (argmin, min_value) =
            nodes.iter().map(|&i| (i, u[i])).min_by(|a, b| a.1.total_cmp(&b.1)).expect("components are nonempty");
        let first_node = nodes[0];
        if min_value > tol {
            components.push(ComponentReport {
                nodes: nodes.len(),
                first_node,
                verdict: ComponentVerdict::StrictlyPositive { min_value },
            });
            continue;
        }
        let mut bound = std::collections::HashMap::with_capacity(nodes.len());
        let mut heap = BinaryHeap::new();
        bound.insert(argmin, tol.max(min_value));
        heap.push(Bound(tol.max(min_value), argmin));
        let mut verdict = None;
        let mut max_bound = 0.0f64;
        while let Some(Bound(b, x)) = heap.pop() {
            if bound.get(&x).is_some_and(|&cur| cur < b) {
                continue;
            }
            max_bound = max_bound.max(b);
            let c = p.c[x];
            let push = (d + (-c).max(0.0)) * b + (-p.g[x]).max(0.0) + slack_tol + (d + c.max(0.0)) * tol;
            for (k, w) in &stencil {
                let Some(y) = f.grid.shift(x, k) else { continue };
                if !f.mask.interior[y] {
                    continue;
                }
                let by = push / (hn * w);
                if u[y] > by * (1.0 + 1e-12) {
                    verdict = Some(ComponentVerdict::Violation {
                        node: y,
                        position: f.grid.position(y),
                        value: u[y],
                        bound: by,
                    });
                    break;
                }
                if bound.get(&y).is_none_or(|&cur| by < cur) {
                    bound.insert(y, by);
                    heap.push(Bound(by, y));
                }
            }
            if verdict.is_some() {
                break;
            }
        }
        let verdict = verdict.unwrap_or_else(|| ComponentVerdict::IdenticallySmall {
            max_value: nodes.iter().map(|&i| u[i]).fold(f64::NEG_INFINITY, f64::max),
            max_bound,
        });
        components.push(ComponentReport { nodes: nodes.len(), first_node, verdict });
    }
    Ok(StrongMpReport { components })
}

/// Cap on the default annulus scale.
pub const EPS1_CAP: f64 = 0.25;

/// `min(ε / 4N, EPS1_CAP)` for a positivity radius `ε`.
pub fn default_eps1(eps: f64, dim: usize) -> f64 {
    (eps / (4.0 * dim as f64)).min(EPS1_CAP)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generators {
    pub vectors: Vec<Vec<f64>>,
    /// Kernel threshold met at every generator.
    pub theta: f64,
    /// The threshold also holds at probe points this far from each generator.
    pub margin: f64,
    /// `σ_min / σ_max` of the generator matrix.
    pub conditioning: f64,
    /// Conditioning below [`GeneratorOptions::flag_below`].
    pub flagged: bool,
    pub samples: usize,
    pub positive_samples: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct GeneratorOptions {
    /// Quantile of the positive sampled values used as threshold.
    pub quantile: f64,
    pub samples: usize,
    /// Candidates considered by the greedy selection.
    pub candidates: usize,
    /// Smallest acceptable conditioning.
    pub floor: f64,
    pub flag_below: f64,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        GeneratorOptions { quantile: 0.25, samples: 1 << 16, candidates: 4096, floor: 1e-6, flag_below: 0.25 }
    }
}

fn singular_values(rows: &[Vec<f64>]) -> (f64, f64) {
    let n = rows[0].len();
    let m = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let s = m.singular_values();
    (s.min(), s.max())
}

/// Linearly independent points of `{j ≥ θ}` in the annulus `B_{2ε₁} ∖ B_{ε₁}`.
pub fn choose_generators(kernel: &KernelSpec, eps1: f64, seed: u64, opts: &GeneratorOptions) -> Result<Generators> {
    if !(eps1 > 0.0 && eps1.is_finite()) {
        return invalid(format!("eps1 must be positive, got {eps1}"));
    }
    let n = kernel.dimension;
    let nt = check_nontriviality(kernel, &[2.0 * eps1], seed)?;
    if !nt[0].positive {
        return Err(Error::InsufficientPositivity(format!(
            "no positive kernel mass found in B_{}; sampling-limited, (j2) is not claimed to fail",
            2.0 * eps1
        )));
    }
    let batches = opts.samples.div_ceil(1024);
    let chunks: Vec<Vec<(Vec<f64>, f64)>> = Execution::default().map(batches, |b| {
        let mut r = rng::stream(seed, tag::GENERATORS, b as u64);
        let mut z = vec![0.0; n];
        let mut out = Vec::new();
        for _ in 0..1024 {
            // Uniform in the annulus by radial inversion.
            rng::unit_direction(&mut r, n, &mut z);
            let t: f64 = rand::Rng::random(&mut r);
            let (a, bb) = (eps1.powi(n as i32), (2.0 * eps1).powi(n as i32));
            let rad = (a + t * (bb - a)).powf(1.0 / n as f64);
            let p: Vec<f64> = z.iter().map(|v| v * rad).collect();
            let j = kernel.eval(&p);
            if j > 0.0 {
                out.push((p, j));
            }
        }
        out
    });
    let positive: Vec<(Vec<f64>, f64)> = chunks.into_iter().flatten().collect();
    let samples = batches * 1024;
    if positive.len() < n {
        return Err(Error::InsufficientPositivity(format!(
            "only {} of {samples} annulus samples hit the kernel support; sampling-limited",
            positive.len()
        )));
    }
    let mut vals: Vec<f64> = positive.iter().map(|p| p.1).collect();
    vals.sort_by(f64::total_cmp);
    let theta = vals[((opts.quantile * vals.len() as f64).floor() as usize).min(vals.len() - 1)];
    let probes = probe_directions(n);
    let mut last = None;
    for margin in [eps1 / 8.0, eps1 / 16.0, eps1 / 32.0, eps1 / 64.0, 0.0] {
        let cands: Vec<&Vec<f64>> = positive
            .iter()
            .filter(|p| p.1 >= theta && robust(kernel, &p.0, theta, margin, &probes))
            .map(|p| &p.0)
            .take(opts.candidates)
            .collect();
        match greedy_basis(&cands, n) {
            Some((chosen, conditioning)) if conditioning >= opts.floor => {
                return Ok(Generators {
                    vectors: chosen,
                    theta,
                    margin,
                    conditioning,
                    flagged: conditioning < opts.flag_below,
                    samples,
                    positive_samples: positive.len(),
                })
            }
            other => last = other.map(|o| o.1),
        }
    }
    Err(Error::InsufficientPositivity(match last {
        Some(c) => format!("best generator conditioning {c:e} is below the floor {:e}; sampling-limited", opts.floor),
        None => format!("fewer than {n} independent directions in {{j ≥ {theta:e}}}; sampling-limited"),
    }))
}

/// Unit axis and diagonal directions.
fn probe_directions(n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = s;
            out.push(e);
        }
    }
    if n > 1 {
        let a = 1.0 / (n as f64).sqrt();
        for mask in 0..1usize << n {
            out.push((0..n).map(|i| if mask >> i & 1 == 1 { -a } else { a }).collect());
        }
    }
    out
}

/// `j ≥ θ` at `v` and at the probe points at distance `margin`.
fn robust(kernel: &KernelSpec, v: &[f64], theta: f64, margin: f64, probes: &[Vec<f64>]) -> bool {
    margin == 0.0
        || probes.iter().all(|d| {
            let p: Vec<f64> = v.iter().zip(d).map(|(a, b)| a + margin * b).collect();
            kernel.eval(&p) >= theta
        })
}

/// Greedy selection maximizing the smallest singular value; `None` when the
/// candidates do not span.
fn greedy_basis(cands: &[&Vec<f64>], n: usize) -> Option<(Vec<Vec<f64>>, f64)> {
    if cands.len() < n {
        return None;
    }
    let mut chosen: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best: Option<(f64, &Vec<f64>)> = None;
        for c in cands {
            let mut rows = chosen.clone();
            rows.push((*c).clone());
            let (smin, _) = singular_values(&rows);
            if best.is_none_or(|(b, _)| smin > b) {
                best = Some((smin, c));
            }
        }
        let (smin, c) = best?;
        if !(smin > 0.0) {
            return None;
        }
        chosen.push(c.clone());
    }
    let (smin, smax) = singular_values(&chosen);
    Some((chosen, smin / smax))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    /// 1-based link index `j`.
    pub index: usize,
    pub k_center: Vec<f64>,
    pub k_radius: f64,
    pub m_center: Vec<f64>,
    pub m_radius: f64,
    /// Conservative `inf_{x∈M} ∫_K j(x − y) dy`.
    pub kappa: f64,
    pub kappa_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositivityCertificate {
    pub kernel: KernelSpec,
    pub eps1: f64,
    pub generators: Generators,
    pub source: Vec<f64>,
    pub target: Vec<f64>,
    /// Point of `target + G` near the source where the chain starts.
    pub start: Vec<f64>,
    /// Confinement scale of the lattice path.
    pub rho: f64,
    pub path: GPath,
    pub links: Vec<Link>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct ChainOptions {
    pub generators: GeneratorOptions,
    /// Largest allowed `|source − target|`.
    pub reach: f64,
    /// Points sampled in each `M_{j+1}`.
    pub x_samples: usize,
    /// Inner quadrature cells per `K_j` radius.
    pub resolution: usize,
    pub exec: Execution,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions {
            generators: GeneratorOptions::default(),
            reach: 10.0,
            x_samples: 64,
            resolution: 8,
            exec: Execution::default(),
        }
    }
}

/// Midpoint rule for `∫_{B_r(c)} j` with cells of side `r / res`.
fn ball_integral(kernel: &KernelSpec, center: &[f64], r: f64, res: usize) -> f64 {
    let n = center.len();
    let delta = r / res as f64;
    let per = 2 * res;
    let mut z = vec![0.0; n];
    let mut acc = 0.0;
    for idx in 0..per.pow(n as u32) {
        let mut rem = idx;
        let mut r2 = 0.0;
        for zi in z.iter_mut() {
            let t = (rem % per) as f64 + 0.5 - res as f64;
            rem /= per;
            *zi = t * delta;
            r2 += *zi * *zi;
        }
        if r2 <= r * r {
            let p: Vec<f64> = center.iter().zip(&z).map(|(c, o)| c + o).collect();
            acc += kernel.eval(&p);
        }
    }
    acc * delta.powi(n as i32)
}

/// `(κ, error)` for the pair `K = B_{rk}(wk)`, `M = B_{rm}(wm)`: the sampled
/// minimum over `x ∈ M` minus twice the resolution-halving difference at the minimizer.
fn estimate_kappa(kernel: &KernelSpec, wk: &[f64], rk: f64, wm: &[f64], rm: f64, samples: usize, res: usize, seed: u64, index: usize) -> (f64, f64) {
    let n = wk.len();
    let mut r = rng::stream(seed, tag::LINK, index as u64);
    let mut o = vec![0.0; n];
    let mut best = (f64::INFINITY, Vec::new());
    for s in 0..samples {
        // The center of M is always tested.
        if s > 0 {
            rng::in_ball(&mut r, n, rm, &mut o);
        }
        let x: Vec<f64> = wm.iter().zip(&o).map(|(a, b)| a + b).collect();
        let zc = sub(&x, wk);
        let v = ball_integral(kernel, &zc, rk, res);
        if v < best.0 {
            best = (v, zc);
        }
    }
    let fine = ball_integral(kernel, &best.1, rk, 2 * res);
    let err = 2.0 * (best.0 - fine).abs();
    (best.0 - err, err)
}

/// Chain of ball pairs from the source to the target along a confined lattice path.
pub fn build_ssp_chain(kernel: &KernelSpec, source: &[f64], target: &[f64], eps1: f64, seed: u64, opts: &ChainOptions) -> Result<PositivityCertificate> {
    let n = kernel.dimension;
    if source.len() != n || target.len() != n {
        return invalid("source and target must have the kernel's dimension");
    }
    let gap = dist(source, target);
    if gap > opts.reach {
        return invalid(format!("source and target are {gap} apart, beyond the reach {}", opts.reach));
    }
    let generators = choose_generators(kernel, eps1, seed, &opts.generators)?;
    let lat = Lattice::new(generators.vectors.clone())?;
    let radius = 0.5 * lat.gram_scale() * (1.0 + 1e-9) + 1e-300;
    let offset = lattice_point_in_ball(&lat, &sub(source, target), radius)?;
    let start: Vec<f64> = target.iter().zip(&offset).map(|(t, o)| t + o).collect();
    let span = dist(&start, target);
    let rho = (span * (1.0 + 1e-9) + 1e-12).max(lat.gram_scale());
    let (path, _) = construct_path_with_stats(&lat, &start, target, rho)?;
    let links = chain_links(kernel, &path, eps1, seed, opts)?;
    Ok(PositivityCertificate {
        kernel: kernel.clone(),
        eps1,
        generators,
        source: source.to_vec(),
        target: target.to_vec(),
        start,
        rho,
        path,
        links,
        seed,
    })
}

fn link_geometry(path: &GPath, eps1: f64) -> Vec<Link> {
    (1..path.points.len())
        .map(|j| Link {
            index: j,
            k_center: path.points[j - 1].clone(),
            k_radius: eps1 / (2 * j) as f64,
            m_center: path.points[j].clone(),
            m_radius: eps1 / (2 * j + 1) as f64,
            kappa: 0.0,
            kappa_error: 0.0,
        })
        .collect()
}

fn kappas(kernel: &KernelSpec, links: &[Link], seed: u64, opts: &ChainOptions) -> Vec<(f64, f64)> {
    opts.exec.map(links.len(), |i| {
        let l = &links[i];
        estimate_kappa(kernel, &l.k_center, l.k_radius, &l.m_center, l.m_radius, opts.x_samples, opts.resolution, seed, l.index)
    })
}

fn chain_links(kernel: &KernelSpec, path: &GPath, eps1: f64, seed: u64, opts: &ChainOptions) -> Result<Vec<Link>> {
    let mut links = link_geometry(path, eps1);
    let ks = kappas(kernel, &links, seed, opts);
    for (l, (k, e)) in links.iter_mut().zip(ks) {
        if !(k > 0.0) {
            return Err(Error::LinkCertification {
                index: l.index,
                reason: format!("coupling estimate {k:e} (quadrature error {e:e}) is not positive"),
            });
        }
        l.kappa = k;
        l.kappa_error = e;
    }
    Ok(links)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub valid: bool,
    pub failures: Vec<String>,
    pub first_failing_link: Option<usize>,
    /// Fresh-seed coupling estimates, one per link.
    pub fresh_kappa: Vec<f64>,
    pub max_excursion: f64,
    pub confinement_radius: f64,
}

/// Recheck every claim of a certificate, with new coupling samples.
pub fn verify_certificate(cert: &PositivityCertificate, kernel: &KernelSpec, seed: u64) -> CertificateCheck {
    verify_certificate_with(cert, kernel, seed, &ChainOptions::default())
}

pub fn verify_certificate_with(cert: &PositivityCertificate, kernel: &KernelSpec, seed: u64, opts: &ChainOptions) -> CertificateCheck {
    let mut failures = Vec::new();
    let mut first_link: Option<usize> = None;
    let mut fail_link = |i: usize, msg: String, failures: &mut Vec<String>| {
        first_link = Some(first_link.map_or(i, |f: usize| f.min(i)));
        failures.push(msg);
    };
    let n = kernel.dimension;
    let tol = 1e-9;
    if &cert.kernel != kernel {
        failures.push("certificate was issued for a different kernel".into());
    }
    let g = &cert.generators;
    let eps1 = cert.eps1;
    if g.vectors.len() != n || g.vectors.iter().any(|v| v.len() != n) {
        failures.push(format!("need {n} generators of dimension {n}"));
        return CertificateCheck { valid: false, failures, first_failing_link: None, fresh_kappa: Vec::new(), max_excursion: 0.0, confinement_radius: 0.0 };
    }
    for (i, v) in g.vectors.iter().enumerate() {
        let r = norm(v);
        if r < eps1 * (1.0 - tol) || r > 2.0 * eps1 * (1.0 + tol) {
            failures.push(format!("generator {} has length {r}, outside [ε₁, 2ε₁]", i + 1));
        }
        if !(g.theta > 0.0 && kernel.eval(v) >= g.theta) {
            failures.push(format!("kernel at generator {} is below θ = {:e}", i + 1, g.theta));
        } else if !robust(kernel, v, g.theta, g.margin, &probe_directions(n)) {
            failures.push(format!("kernel drops below θ within {:e} of generator {}", g.margin, i + 1));
        }
    }
    let lat = match Lattice::new(g.vectors.clone()) {
        Ok(l) => Some(l),
        Err(e) => {
            failures.push(format!("generators are not a lattice basis: {e}"));
            None
        }
    };
    let path = &cert.path;
    let mut max_excursion = 0.0;
    let confinement_radius = 2.0 * 4f64.powi(n as i32) * cert.rho;
    if let Some(lat) = &lat {
        if dist(&cert.start, &cert.source) > 0.5 * lat.gram_scale() * (1.0 + tol) {
            failures.push("chain start is farther from the source than ½Σ|v_k|".into());
        }
        if dist(&cert.start, &cert.target) >= cert.rho {
            failures.push("target is not within ρ of the chain start".into());
        }
        let pc = crate::lattice::verify_path(path, lat, &cert.start, confinement_radius);
        if !pc.valid {
            failures.push(format!("path check failed: {}", pc.reason.unwrap_or_default()));
        }
        max_excursion = path.max_excursion(&cert.start);
    }
    match (path.points.first(), path.points.last()) {
        (Some(a), Some(b)) => {
            if dist(a, &cert.start) > tol * (1.0 + norm(a)) {
                failures.push("path does not begin at the chain start".into());
            }
            if dist(b, &cert.target) > tol * (1.0 + norm(b)) {
                failures.push("path does not end at the target".into());
            }
        }
        _ => failures.push("path is empty".into()),
    }
    let expected = link_geometry(path, eps1);
    if expected.len() != cert.links.len() {
        failures.push(format!("{} links for a path of {} steps", cert.links.len(), path.len()));
    }
    for (l, e) in cert.links.iter().zip(&expected) {
        let same = l.index == e.index
            && dist(&l.k_center, &e.k_center) <= tol
            && dist(&l.m_center, &e.m_center) <= tol
            && (l.k_radius - e.k_radius).abs() <= tol * e.k_radius
            && (l.m_radius - e.m_radius).abs() <= tol * e.m_radius;
        if !same {
            fail_link(l.index, format!("link {} does not match the path's balls", l.index), &mut failures);
        }
        let sep = dist(&l.k_center, &l.m_center) - l.k_radius - l.m_radius;
        if !(sep > 0.0) {
            fail_link(l.index, format!("link {}: K and M are not separated ({sep:e})", l.index), &mut failures);
        }
        if !(l.kappa > 0.0) {
            fail_link(l.index, format!("link {}: recorded coupling {:e} is not positive", l.index, l.kappa), &mut failures);
        }
    }
    let fresh = kappas(kernel, &cert.links, rng::derive_seed(seed, 0x5eed), opts);
    for (l, (k, _)) in cert.links.iter().zip(&fresh) {
        if !(*k > 0.0) {
            fail_link(l.index, format!("link {}: fresh coupling estimate {k:e} is not positive", l.index), &mut failures);
        }
    }
    CertificateCheck {
        valid: failures.is_empty(),
        failures,
        first_failing_link: first_link,
        fresh_kappa: fresh.into_iter().map(|p| p.0).collect(),
        max_excursion,
        confinement_radius,
    }
}
