//! Supersolutions, Dirichlet solves and the weak maximum principle.

use crate::discrete::DiscreteForm;
use crate::error::{invalid, Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg::pcg;
use crate::spectral::{lambda1, lambda1_lower_bound, EigenOptions, Lambda1Report};
use serde::{Deserialize, Serialize};

/// `Iu = c u + g` in Ω with `u = exterior` off Ω. Coefficients are full grid
/// functions; only their interior values are used.
#[derive(Clone, Debug)]
pub struct ProblemData {
    pub form: DiscreteForm,
    pub c: Vec<f64>,
    pub g: Vec<f64>,
    pub exterior: Vec<f64>,
}

impl ProblemData {
    pub fn new(form: DiscreteForm, c: Vec<f64>, g: Vec<f64>, exterior: Vec<f64>) -> Result<Self> {
        let n = form.grid.len();
        for (name, v) in [("c", &c), ("g", &g), ("exterior", &exterior)] {
            if v.len() != n {
                return invalid(format!("{name} has {} values, grid has {n} nodes", v.len()));
            }
        }
        for &i in form.interior() {
            if !c[i].is_finite() || !g[i].is_finite() {
                return invalid(format!("c and g must be finite; node {:?} is not", form.grid.position(i)));
            }
        }
        if exterior.iter().any(|v| !v.is_finite()) {
            return invalid("exterior data must be finite");
        }
        if form.interior_len() == 0 {
            return invalid("the domain has no interior nodes");
        }
        Ok(ProblemData { form, c, g, exterior })
    }

    /// `‖c⁺‖_∞` over Ω.
    pub fn c_plus_norm(&self) -> f64 {
        self.form.interior().iter().map(|&i| self.c[i].max(0.0)).fold(0.0, f64::max)
    }

    /// `‖g⁻‖_{L²(Ω)}`.
    pub fn g_minus_norm(&self) -> f64 {
        l2_interior(&self.form, |i| (-self.g[i]).max(0.0))
    }
}

fn l2_interior(form: &DiscreteForm, f: impl Fn(usize) -> f64) -> f64 {
    (form.interior().iter().map(|&i| f(i).powi(2)).sum::<f64>() * form.cell_volume()).sqrt()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SupersolutionReport {
    pub is_supersolution: bool,
    /// `min_x (Iu)(x) − c(x)u(x) − g(x)` over Ω.
    pub min_slack: f64,
    pub worst_node: usize,
    pub worst_position: Vec<f64>,
    /// Largest `|u − exterior|` off Ω.
    pub exterior_mismatch: f64,
    pub tolerance: f64,
}

/// Nodal slacks `(Iu)(x) − c(x)u(x) − g(x)` on interior nodes, in compact order.
pub fn nodal_slacks(p: &ProblemData, u: &[f64]) -> Vec<f64> {
    let iu = p.form.apply_operator(u);
    p.form.interior().iter().map(|&i| iu[i] - p.c[i] * u[i] - p.g[i]).collect()
}

fn exterior_mismatch(p: &ProblemData, u: &[f64]) -> f64 {
    (0..u.len()).filter(|&i| !p.form.mask.interior[i]).map(|i| (u[i] - p.exterior[i]).abs()).fold(0.0, f64::max)
}

/// Testing against node indicators: `u` is a supersolution iff every nodal slack is ≥ 0.
pub fn verify_supersolution(p: &ProblemData, u: &[f64], tol: f64) -> Result<SupersolutionReport> {
    if u.len() != p.form.grid.len() {
        return invalid(format!("u has {} values, grid has {} nodes", u.len(), p.form.grid.len()));
    }
    let mismatch = exterior_mismatch(p, u);
    if mismatch > tol {
        return invalid(format!("u differs from the exterior data by {mismatch:e} off the domain"));
    }
    let slacks = nodal_slacks(p, u);
    let (c, &min_slack) = slacks.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty interior");
    let worst_node = p.form.interior()[c];
    Ok(SupersolutionReport {
        is_supersolution: min_slack >= -tol,
        min_slack,
        worst_node,
        worst_position: p.form.grid.position(worst_node),
        exterior_mismatch: mismatch,
        tolerance: tol,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub u: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub lambda1: f64,
    pub c_plus_norm: f64,
}

/// Right side `g + H Σ w·exterior` collecting the known exterior values.
fn dirichlet_rhs(p: &ProblemData) -> Vec<f64> {
    let f = &p.form;
    let mut ext = p.exterior.clone();
    for &i in f.interior() {
        ext[i] = 0.0;
    }
    f.interior().iter().map(|&i| p.g[i] + f.neighbor_sum(i, &ext)).collect()
}

/// Solve the Dirichlet problem by CG on `L_Ω − c`, after checking `‖c⁺‖ < Λ₁`.
pub fn solve_dirichlet(p: &ProblemData, rel_tol: f64) -> Result<SolveReport> {
    let eig = lambda1(&p.form, &p.form.mask, &EigenOptions::default())?;
    solve_dirichlet_with(p, rel_tol, &eig)
}

/// As [`solve_dirichlet`] with a precomputed `Λ₁(Ω)`.
pub fn solve_dirichlet_with(p: &ProblemData, rel_tol: f64, eig: &Lambda1Report) -> Result<SolveReport> {
    let cp = p.c_plus_norm();
    let lam_lo = eig.value - eig.residual;
    if cp >= lam_lo {
        return Err(Error::HypothesisViolation(format!(
            "‖c⁺‖ = {cp} is not below Λ₁(Ω) = {} so the problem is not coercive",
            eig.value
        )));
    }
    let f = &p.form;
    let c: Vec<f64> = f.interior().iter().map(|&i| p.c[i]).collect();
    let b = dirichlet_rhs(p);
    let diag: Vec<f64> = c.iter().map(|ci| f.degree() - ci).collect();
    let apply = |v: &[f64], out: &mut [f64]| {
        f.apply_interior(v, out);
        for ((o, vi), ci) in out.iter_mut().zip(v).zip(&c) {
            *o -= ci * vi;
        }
    };
    let mut x: Vec<f64> = b.iter().zip(&diag).map(|(b, d)| b / d).collect();
    let out = pcg(f.exec, apply, &diag, &b, &mut x, rel_tol, 20 * b.len() + 1000)?;
    Ok(SolveReport {
        u: f.extend(&x, &p.exterior),
        iterations: out.iterations,
        relative_residual: out.relative_residual,
        lambda1: eig.value,
        c_plus_norm: cp,
    })
}

/// Dense LU solve without the coercivity check, for small and possibly
/// indefinite instances.
pub fn solve_dirichlet_dense(p: &ProblemData) -> Result<Vec<f64>> {
    let f = &p.form;
    let a = f.dense_interior_matrix();
    let n = a.len();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j] - if i == j { p.c[f.interior()[i]] } else { 0.0 });
    let b = nalgebra::DVector::from_vec(dirichlet_rhs(p));
    let x = m.lu().solve(&b).ok_or_else(|| Error::HypothesisViolation("L_Ω − c is singular".into()))?;
    Ok(f.extend(x.as_slice(), &p.exterior))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeakMpReport {
    /// `‖u⁻‖_{L²(Ω)}`.
    pub u_minus_norm: f64,
    pub g_minus_norm: f64,
    pub lambda1: f64,
    pub c_plus_norm: f64,
    /// `‖g⁻‖ / (Λ₁ − ‖c⁺‖)`.
    pub bound: f64,
    pub holds: bool,
    /// `‖u⁻‖ / bound` (0 when both vanish).
    pub tightness: f64,
}

/// `‖u⁻‖_{L²(Ω)} ≤ ‖g⁻‖_{L²(Ω)} / (Λ₁(Ω) − ‖c⁺‖_∞)` for a supersolution `u ≥ 0` off Ω.
pub fn weak_mp_bound_check(p: &ProblemData, u: &[f64], eig: &Lambda1Report) -> Result<WeakMpReport> {
    let cp = p.c_plus_norm();
    if cp >= eig.value {
        return Err(Error::HypothesisViolation(format!("‖c⁺‖ = {cp} ≥ Λ₁(Ω) = {}", eig.value)));
    }
    let scale = u.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let sup = verify_supersolution(p, u, 1e-9 * scale * p.form.degree().max(1.0))?;
    if !sup.is_supersolution {
        return invalid(format!("u is not a supersolution (slack {:e} at {:?})", sup.min_slack, sup.worst_position));
    }
    if let Some(i) = (0..u.len()).find(|&i| !p.form.mask.interior[i] && u[i] < 0.0) {
        return invalid(format!("u is negative off the domain at {:?}", p.form.grid.position(i)));
    }
    let u_minus = l2_interior(&p.form, |i| (-u[i]).max(0.0));
    let g_minus = p.g_minus_norm();
    // The eigenvalue is known to within its residual.
    let gap = eig.value - eig.residual - cp;
    let bound = g_minus / gap;
    let slack = 1e-10 * bound.max(u_minus).max(f64::MIN_POSITIVE);
    Ok(WeakMpReport {
        u_minus_norm: u_minus,
        g_minus_norm: g_minus,
        lambda1: eig.value,
        c_plus_norm: cp,
        bound,
        holds: u_minus <= bound + slack,
        tightness: if bound > 0.0 { u_minus / bound } else { 0.0 },
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RadiusReport {
    /// Largest tested volume with `Λ₁-bound(r) > ‖c⁺‖`.
    pub radius: f64,
    /// Smallest tested volume where the predicate fails, if any.
    pub failing_radius: Option<f64>,
    pub lower_bound_at_radius: f64,
}

/// Volume below which every domain satisfies `Λ₁(Ω) > ‖c⁺‖`, by bisection on
/// the rearrangement bound.
pub fn small_volume_radius(kernel: &KernelSpec, c_plus_norm: f64, r_max: f64, seed: u64) -> Result<RadiusReport> {
    if !(c_plus_norm >= 0.0 && c_plus_norm.is_finite()) {
        return invalid(format!("‖c⁺‖ must be finite and nonnegative, got {c_plus_norm}"));
    }
    if !(r_max > 0.0 && r_max.is_finite()) {
        return invalid(format!("r_max must be positive, got {r_max}"));
    }
    let mass = crate::kernels::total_mass(kernel, seed)?;
    if !mass.infinite && c_plus_norm >= mass.value {
        return Err(Error::HypothesisViolation(format!(
            "‖c⁺‖ = {c_plus_norm} is not below the kernel mass {}",
            mass.value
        )));
    }
    let lb = |r: f64| lambda1_lower_bound(kernel, r, seed);
    let at_max = lb(r_max)?;
    if at_max.value - at_max.error > c_plus_norm {
        return Ok(RadiusReport { radius: r_max, failing_radius: None, lower_bound_at_radius: at_max.value });
    }
    let mut hi = r_max;
    let mut lo = r_max;
    let mut lo_val;
    let mut halvings = 0;
    loop {
        lo *= 0.5;
        halvings += 1;
        let b = lb(lo)?;
        if b.value - b.error > c_plus_norm {
            lo_val = b.value;
            break;
        }
        hi = lo;
        if halvings > 200 {
            return Err(Error::Inconclusive(format!("no volume down to {lo:e} certifies Λ₁ > {c_plus_norm}")));
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let b = lb(mid)?;
        if b.value - b.error > c_plus_norm {
            lo = mid;
            lo_val = b.value;
        } else {
            hi = mid;
        }
    }
    Ok(RadiusReport { radius: lo, failing_radius: Some(hi), lower_bound_at_radius: lo_val })
}

/// `c̃(x) = c(x) + H Σ_{x+z ∉ Ω} w_z + tail`, turning the regional operator
/// into the full one for functions vanishing off Ω.
pub fn regional_to_full(form: &DiscreteForm, c: &[f64]) -> Vec<f64> {
    let mut out = c.to_vec();
    let inside: Vec<f64> = form.mask.interior.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    for &i in form.interior() {
        out[i] = c[i] + form.degree() - form.neighbor_sum(i, &inside);
    }
    out
}

/// `(I_Ω u)(x) = H Σ_{x+z ∈ Ω} w_z (u(x) − u(x+z))` on interior nodes, compact order.
pub fn apply_regional(form: &DiscreteForm, u: &[f64]) -> Vec<f64> {
    let masked: Vec<f64> = u.iter().zip(&form.mask.interior).map(|(&v, &b)| if b { v } else { 0.0 }).collect();
    let inside: Vec<f64> = form.mask.interior.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    form.interior().iter().map(|&i| form.neighbor_sum(i, &inside) * u[i] - form.neighbor_sum(i, &masked)).collect()
}
