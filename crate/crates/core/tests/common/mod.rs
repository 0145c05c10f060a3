#![allow(dead_code)]

use nonlocal_mp::discrete::{build_weight_table, DiscreteForm, DomainMask, Grid};
use nonlocal_mp::kernels::{KernelSpec, Primitive, RadialProfile};
use nonlocal_mp::lattice::Lattice;
use nonlocal_mp::rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const TAG: u64 = 0x7465_7374;

pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    rng::stream(seed, TAG, index)
}

pub fn two_level() -> KernelSpec {
    KernelSpec::new(1, vec![Primitive::FullSpace], 0.0, Some(RadialProfile { breaks: vec![0.5, 1.0], values: vec![2.0, 1.0] })).unwrap()
}

pub fn cusp() -> KernelSpec {
    KernelSpec::new(2, vec![Primitive::Cusp { exponent: 2.0, axis: 0 }], 0.0, None).unwrap()
}

pub fn annulus_1d() -> KernelSpec {
    KernelSpec::new(1, vec![Primitive::Annulus { inner: 1.0, outer: 2.0 }], 0.0, None).unwrap()
}

/// Kernels satisfying nontriviality with bounded support, for small grids.
pub fn kernel_catalog(dim: usize, r: &mut ChaCha8Rng) -> KernelSpec {
    let radius = r.random_range(0.6..1.2);
    match r.random_range(0..4) {
        0 => KernelSpec::ball(dim, radius),
        1 => KernelSpec::new(dim, vec![Primitive::Ball { radius }], r.random_range(-1.5..0.0), None).unwrap(),
        2 if dim == 2 => {
            let a: f64 = r.random_range(0.0..std::f64::consts::PI);
            KernelSpec::new(dim, vec![Primitive::Cone { axis: vec![a.cos(), a.sin()], half_angle: r.random_range(0.3..1.0), radius: Some(radius) }], 0.0, None)
                .unwrap()
        }
        _ => KernelSpec::new(
            dim,
            vec![Primitive::FullSpace],
            0.0,
            Some(RadialProfile { breaks: vec![0.5 * radius, radius], values: vec![r.random_range(1.0..3.0), 1.0] }),
        )
        .unwrap(),
    }
}

/// A form on a box around a random ball-or-box mask, with room for the stencil.
pub fn random_form(kernel: &KernelSpec, h: f64, r: &mut ChaCha8Rng) -> DiscreteForm {
    let dim = kernel.dimension;
    let (_, rmax) = kernel.support_radii();
    let trunc = rmax.min(2.0).max(2.0 * h);
    let table = build_weight_table(kernel, h, trunc, 2).unwrap();
    let extent = r.random_range(0.3..0.9);
    let half = extent + (table.reach() as f64 + 1.0) * h;
    let grid = Grid::covering(vec![0.0; dim], half, h).unwrap();
    let mask = if r.random_bool(0.5) {
        DomainMask::ball(&grid, &vec![0.0; dim], extent)
    } else {
        DomainMask::from_fn(&grid, |x| x.iter().all(|v| v.abs() <= extent))
    };
    DiscreteForm::new(grid, mask, table).unwrap()
}

pub fn uniform_vec(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

/// Random basis with condition number at most `max_cond`.
pub fn random_lattice(dim: usize, max_cond: f64, r: &mut ChaCha8Rng) -> Lattice {
    loop {
        let scale: f64 = r.random_range(0.2..2.0);
        let g: Vec<Vec<f64>> = (0..dim).map(|_| (0..dim).map(|_| scale * r.random_range(-1.0..1.0)).collect()).collect();
        if let Ok(l) = Lattice::new(g) {
            if l.condition_number() <= max_cond {
                return l;
            }
        }
    }
}

pub fn in_ball(r: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let p: Vec<f64> = (0..dim).map(|_| r.random_range(-radius..radius)).collect();
        if p.iter().map(|v| v * v).sum::<f64>() <= radius * radius {
            return p;
        }
    }
}
