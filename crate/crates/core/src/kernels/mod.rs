//! Even kernels `j(z) = 1_A(z) · p(|z|) · |z|^τ` and x-dependent kernels
//! `J(x, y) = m(x, y) · j(x − y)`.

mod audit;
mod xkernel;

pub use audit::{
    check_j3, check_levy_integrability, check_nontriviality, lower_envelope, mass_tail, sphere_profile, total_mass,
    total_mass_with, EnvelopeOptions, EnvelopeTable, IntegrabilityReport, J3Report, MassReport, NontrivialityEntry,
    SphereProfile,
};
pub use xkernel::{Multiplier, XKernelSpec};

use crate::error::{invalid, Result};
use crate::geometry::{ball_volume, norm2, sphere_area};
use crate::quadrature::{AngularWindow, ShellDomain};
use serde::{Deserialize, Serialize};

/// A symmetric primitive set. Every predicate depends on `z` only through
/// squares or absolute values, so membership of `z` and `−z` agree exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    FullSpace,
    Ball {
        radius: f64,
    },
    Annulus {
        inner: f64,
        outer: f64,
    },
    /// Double cone `|z·a| ≥ cos(half_angle)|z|`, optionally cut at `radius`.
    Cone {
        axis: Vec<f64>,
        half_angle: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
    },
    /// `{|z'| ≤ |z_a|^exponent, |z_a| ≤ 1}` where `z'` collects the other coordinates.
    Cusp {
        exponent: f64,
        #[serde(default)]
        axis: usize,
    },
}

/// Piecewise-constant radial factor: `values[i]` on `(breaks[i-1], breaks[i]]`, 0 beyond.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialProfile {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl RadialProfile {
    pub fn at(&self, r: f64) -> f64 {
        let i = self.breaks.partition_point(|&b| b < r);
        self.values.get(i).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub dimension: usize,
    pub shape: Vec<Primitive>,
    pub exponent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<RadialProfile>,
}

/// Radial piece `[lo, hi]` of a radial kernel where `j(z) = value · |z|^τ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialPiece {
    pub lo: f64,
    pub hi: f64,
    pub value: f64,
}

impl Primitive {
    fn contains(&self, z: &[f64], r2: f64) -> bool {
        match self {
            Primitive::FullSpace => true,
            Primitive::Ball { radius } => r2 <= radius * radius,
            Primitive::Annulus { inner, outer } => r2 >= inner * inner && r2 <= outer * outer,
            Primitive::Cone { axis, half_angle, radius } => {
                if let Some(rad) = radius {
                    if r2 > rad * rad {
                        return false;
                    }
                }
                let d: f64 = axis.iter().zip(z).map(|(a, b)| a * b).sum();
                let c = half_angle.cos();
                d * d >= c * c * r2
            }
            Primitive::Cusp { exponent, axis } => {
                let t = z[*axis].abs();
                if t > 1.0 {
                    return false;
                }
                let rest = r2 - z[*axis] * z[*axis];
                rest <= t.powf(2.0 * exponent)
            }
        }
    }

    fn radial_range(&self) -> (f64, f64) {
        match self {
            Primitive::FullSpace => (0.0, f64::INFINITY),
            Primitive::Ball { radius } => (0.0, *radius),
            Primitive::Annulus { inner, outer } => (*inner, *outer),
            Primitive::Cone { radius, .. } => (0.0, radius.unwrap_or(f64::INFINITY)),
            Primitive::Cusp { .. } => (0.0, std::f64::consts::SQRT_2),
        }
    }

    fn is_radial(&self) -> bool {
        matches!(self, Primitive::FullSpace | Primitive::Ball { .. } | Primitive::Annulus { .. })
    }

    fn validate(&mut self, dim: usize) -> Result<()> {
        let pos = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                invalid(format!("{what} must be positive and finite, got {v}"))
            }
        };
        match self {
            Primitive::FullSpace => Ok(()),
            Primitive::Ball { radius } => pos(*radius, "ball radius"),
            Primitive::Annulus { inner, outer } => {
                if !(inner.is_finite() && *inner >= 0.0 && outer.is_finite() && outer > inner) {
                    return invalid(format!("annulus needs 0 ≤ inner < outer, got [{inner}, {outer}]"));
                }
                Ok(())
            }
            Primitive::Cone { axis, half_angle, radius } => {
                if axis.len() != dim {
                    return invalid(format!("cone axis has {} entries, kernel dimension is {dim}", axis.len()));
                }
                let n = norm2(axis).sqrt();
                if !(n.is_finite() && n > 0.0) {
                    return invalid("cone axis must be a nonzero vector");
                }
                axis.iter_mut().for_each(|a| *a /= n);
                if !(*half_angle > 0.0 && *half_angle <= std::f64::consts::FRAC_PI_2) {
                    return invalid(format!("cone half_angle must lie in (0, π/2], got {half_angle}"));
                }
                if let Some(r) = radius {
                    pos(*r, "cone radius")?;
                }
                Ok(())
            }
            Primitive::Cusp { exponent, axis } => {
                pos(*exponent, "cusp exponent")?;
                if *axis >= dim {
                    return invalid(format!("cusp axis {axis} out of range for dimension {dim}"));
                }
                Ok(())
            }
        }
    }

    fn breaks(&self, out: &mut Vec<f64>) {
        match self {
            Primitive::FullSpace => {}
            Primitive::Ball { radius } => out.push(*radius),
            Primitive::Annulus { inner, outer } => out.extend([*inner, *outer]),
            Primitive::Cone { radius, .. } => out.extend(radius.iter().copied()),
            Primitive::Cusp { .. } => out.extend([1.0, std::f64::consts::SQRT_2]),
        }
    }
}

/// `∫_a^b r^α dr`, possibly infinite.
pub(crate) fn power_integral(a: f64, b: f64, alpha: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if alpha == -1.0 {
        if a == 0.0 || b.is_infinite() {
            return f64::INFINITY;
        }
        return (b / a).ln();
    }
    let p = alpha + 1.0;
    if (a == 0.0 && p < 0.0) || (b.is_infinite() && p > 0.0) {
        return f64::INFINITY;
    }
    let pw = |x: f64| if x == 0.0 || x.is_infinite() { 0.0 } else { x.powf(p) };
    (pw(b) - pw(a)) / p
}

impl KernelSpec {
    /// Validate parameters and normalize cone axes.
    pub fn new(dimension: usize, shape: Vec<Primitive>, exponent: f64, profile: Option<RadialProfile>) -> Result<Self> {
        let mut k = KernelSpec { dimension, shape, exponent, profile };
        k.validate()?;
        Ok(k)
    }

    /// `1_{B_r}(z)` in dimension `dim`.
    pub fn ball(dim: usize, radius: f64) -> Self {
        Self::new(dim, vec![Primitive::Ball { radius }], 0.0, None).expect("valid ball kernel")
    }

    /// `|z|^τ` on all of R^N.
    pub fn power(dim: usize, tau: f64) -> Self {
        Self::new(dim, vec![Primitive::FullSpace], tau, None).expect("valid power kernel")
    }

    pub fn validate(&mut self) -> Result<()> {
        if self.dimension == 0 || self.dimension > 8 {
            return invalid(format!("dimension must be in 1..=8, got {}", self.dimension));
        }
        if self.shape.is_empty() {
            return invalid("shape needs at least one primitive (use full_space for R^N)");
        }
        if !self.exponent.is_finite() {
            return invalid("exponent must be finite");
        }
        let dim = self.dimension;
        for p in &mut self.shape {
            p.validate(dim)?;
        }
        if let Some(p) = &self.profile {
            if p.breaks.is_empty() || p.breaks.len() != p.values.len() {
                return invalid("profile needs equally many breaks and values, at least one");
            }
            if p.breaks[0] <= 0.0 || p.breaks.windows(2).any(|w| w[1] <= w[0]) || !p.breaks.iter().all(|b| b.is_finite()) {
                return invalid("profile breaks must be positive, finite and strictly increasing");
            }
            if p.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return invalid("profile values must be finite and nonnegative");
            }
        }
        Ok(())
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        let r2 = norm2(z);
        self.shape.iter().any(|p| p.contains(z, r2))
    }

    /// `j(z)`. At the origin this is `∞` for τ < 0 and `1_A(0)·p(0)` otherwise.
    pub fn eval(&self, z: &[f64]) -> f64 {
        let r2 = norm2(z);
        if r2 == 0.0 {
            if self.exponent < 0.0 {
                return f64::INFINITY;
            }
            let inside = self.shape.iter().any(|p| p.contains(z, 0.0));
            let p0 = self.profile.as_ref().map_or(1.0, |p| p.at(0.0));
            return if inside { p0 } else { 0.0 };
        }
        if !self.shape.iter().any(|p| p.contains(z, r2)) {
            return 0.0;
        }
        let r = r2.sqrt();
        let p = self.profile.as_ref().map_or(1.0, |p| p.at(r));
        if p == 0.0 {
            return 0.0;
        }
        if self.exponent == 0.0 {
            p
        } else {
            p * r.powf(self.exponent)
        }
    }

    /// All primitives depend on |z| only.
    pub fn is_radial(&self) -> bool {
        self.shape.iter().all(Primitive::is_radial)
    }

    /// Smallest and largest |z| at which the kernel can be positive.
    pub fn support_radii(&self) -> (f64, f64) {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for p in &self.shape {
            let (a, b) = p.radial_range();
            lo = lo.min(a);
            hi = hi.max(b);
        }
        if let Some(p) = &self.profile {
            hi = hi.min(*p.breaks.last().expect("validated profile"));
        }
        (lo, hi)
    }

    /// Radii where the kernel may jump.
    pub fn breaks(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for p in &self.shape {
            p.breaks(&mut out);
        }
        if let Some(p) = &self.profile {
            out.extend(p.breaks.iter().copied());
        }
        out.retain(|b| b.is_finite() && *b > 0.0);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Shell layout covering the support, with `extra` breaks added.
    pub(crate) fn shell_domain(&self, extra: &[f64], radial_integrand: bool) -> ShellDomain {
        let (lo, hi) = self.support_radii();
        let mut breaks = self.breaks();
        breaks.extend_from_slice(extra);
        ShellDomain {
            dim: self.dimension,
            r_min: lo,
            r_max: hi,
            breaks,
            radial: radial_integrand && self.is_radial(),
            window: self.angular_window(),
        }
    }

    /// Common double cone containing every primitive, when all primitives
    /// are cones or cusps along one axis.
    pub(crate) fn angular_window(&self) -> Option<AngularWindow> {
        let n = self.dimension;
        let mut axis: Option<Vec<f64>> = None;
        let mut half = 0.0f64;
        let mut cusp: Option<f64> = None;
        for p in &self.shape {
            let a = match p {
                Primitive::Cone { axis, half_angle, .. } => {
                    half = half.max(*half_angle);
                    axis.clone()
                }
                Primitive::Cusp { exponent, axis } => {
                    cusp = Some(cusp.map_or(*exponent, |c: f64| c.min(*exponent)));
                    let mut e = vec![0.0; n];
                    e[*axis] = 1.0;
                    e
                }
                _ => return None,
            };
            match &axis {
                None => axis = Some(a),
                Some(b) => {
                    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                    if (d.abs() - 1.0).abs() > 1e-12 {
                        return None;
                    }
                }
            }
        }
        Some(AngularWindow { axis: axis?, half_angle: half, cusp_exponent: cusp })
    }

    /// For radial kernels, disjoint radial intervals on which `j = value·|z|^τ`.
    pub fn radial_pieces(&self) -> Option<Vec<RadialPiece>> {
        if !self.is_radial() {
            return None;
        }
        let mut cuts = vec![0.0];
        cuts.extend(self.breaks());
        cuts.push(f64::INFINITY);
        let mut out: Vec<RadialPiece> = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let mid = if b.is_infinite() { a + 1.0 } else { 0.5 * (a + b) };
            let mut z = vec![0.0; self.dimension];
            z[0] = mid;
            if !self.contains(&z) {
                continue;
            }
            let value = self.profile.as_ref().map_or(1.0, |p| p.at(mid));
            if value <= 0.0 {
                continue;
            }
            match out.last_mut() {
                Some(last) if last.hi == a && last.value == value => last.hi = b,
                _ => out.push(RadialPiece { lo: a, hi: b, value }),
            }
        }
        Some(out)
    }

    /// Closed-form `∫ j`, available for radial kernels.
    pub fn analytic_total_mass(&self) -> Option<f64> {
        let pieces = self.radial_pieces()?;
        let n = self.dimension;
        let alpha = n as f64 - 1.0 + self.exponent;
        Some(pieces.iter().map(|p| p.value * sphere_area(n) * power_integral(p.lo, p.hi, alpha)).sum())
    }

    /// Closed-form `∫ (1 ∧ |z|²) j`, available for radial kernels.
    pub fn analytic_levy_integral(&self) -> Option<f64> {
        let pieces = self.radial_pieces()?;
        let n = self.dimension;
        let alpha = n as f64 - 1.0 + self.exponent;
        let s = sphere_area(n);
        Some(
            pieces
                .iter()
                .map(|p| {
                    let near = power_integral(p.lo.min(1.0), p.hi.min(1.0), alpha + 2.0);
                    let far = power_integral(p.lo.max(1.0), p.hi.max(1.0), alpha);
                    p.value * s * (near + far)
                })
                .sum(),
        )
    }

    /// Exact `|{j > 0} ∩ B_r|` for radial kernels.
    pub fn radial_support_measure(&self, r: f64) -> Option<f64> {
        let pieces = self.radial_pieces()?;
        let n = self.dimension as i32;
        Some(pieces.iter().map(|p| ball_volume(self.dimension) * (p.hi.min(r).powi(n) - p.lo.min(r).powi(n))).sum())
    }
}

/// Kernels that can be evaluated on point pairs.
pub trait PairKernel: Sync {
    fn dimension(&self) -> usize;
    /// `J(x, y)`.
    fn pair(&self, x: &[f64], y: &[f64]) -> f64;
    /// The translation-invariant factor, used for radial layout.
    fn base(&self) -> &KernelSpec;
}

impl PairKernel for KernelSpec {
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn pair(&self, x: &[f64], y: &[f64]) -> f64 {
        let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        self.eval(&z)
    }
    fn base(&self) -> &KernelSpec {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_examples() {
        assert_eq!(KernelSpec::ball(2, 1.0).eval(&[0.5, 0.0]), 1.0);
        assert_eq!(KernelSpec::power(1, -2.0).eval(&[0.5]), 4.0);
        let cusp = KernelSpec::new(2, vec![Primitive::Cusp { exponent: 2.0, axis: 0 }], -4.5, None).unwrap();
        assert_eq!(cusp.eval(&[0.5, 0.3]), 0.0);
        assert!(cusp.eval(&[0.5, 0.2]) > 0.0);
    }

    #[test]
    fn origin_convention() {
        assert!(KernelSpec::power(2, -1.0).eval(&[0.0, 0.0]).is_infinite());
        assert_eq!(KernelSpec::ball(2, 1.0).eval(&[0.0, 0.0]), 1.0);
        let ann = KernelSpec::new(1, vec![Primitive::Annulus { inner: 1.0, outer: 2.0 }], 0.0, None).unwrap();
        assert_eq!(ann.eval(&[0.0]), 0.0);
    }

    #[test]
    fn two_level_profile() {
        let k = KernelSpec::new(
            1,
            vec![Primitive::FullSpace],
            0.0,
            Some(RadialProfile { breaks: vec![0.5, 1.0], values: vec![2.0, 1.0] }),
        )
        .unwrap();
        assert_eq!(k.eval(&[0.3]), 2.0);
        assert_eq!(k.eval(&[-0.5]), 2.0);
        assert_eq!(k.eval(&[0.7]), 1.0);
        assert_eq!(k.eval(&[1.2]), 0.0);
        assert!((k.analytic_total_mass().unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn analytic_masses() {
        use std::f64::consts::PI;
        assert!((KernelSpec::ball(2, 1.0).analytic_total_mass().unwrap() - PI).abs() < 1e-14);
        assert!(KernelSpec::power(1, -2.0).analytic_total_mass().unwrap().is_infinite());
        let ann = KernelSpec::new(1, vec![Primitive::Annulus { inner: 1.0, outer: 2.0 }], -1.0, None).unwrap();
        assert!((ann.analytic_total_mass().unwrap() - 2.0 * 2f64.ln()).abs() < 1e-14);
        assert!((KernelSpec::power(1, -2.0).analytic_levy_integral().unwrap() - 4.0).abs() < 1e-14);
        assert!(KernelSpec::power(1, -3.0).analytic_levy_integral().unwrap().is_infinite());
    }

    #[test]
    fn json_round_trip() {
        let txt = r#"{"dimension":2,"shape":[{"type":"cone","axis":[2.0,0.0],"half_angle":0.5},{"type":"ball","radius":0.25}],"exponent":-2.5}"#;
        let mut k: KernelSpec = serde_json::from_str(txt).unwrap();
        k.validate().unwrap();
        assert_eq!(k.shape[0], Primitive::Cone { axis: vec![1.0, 0.0], half_angle: 0.5, radius: None });
        let back: KernelSpec = serde_json::from_str(&serde_json::to_string(&k).unwrap()).unwrap();
        assert_eq!(back, k);
        assert!(serde_json::from_str::<KernelSpec>(r#"{"dimension":1,"shape":[],"exponent":0,"bogus":1}"#).is_err());
    }
}
