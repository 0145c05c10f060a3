//! Small vector helpers and unit-ball constants.

use std::f64::consts::PI;

/// Volume of the unit ball in `dim` dimensions.
pub fn ball_volume(dim: usize) -> f64 {
    match dim {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / dim as f64 * ball_volume(dim - 2),
    }
}

/// Surface area of the unit sphere S^{dim-1}.
pub fn sphere_area(dim: usize) -> f64 {
    dim as f64 * ball_volume(dim)
}

/// Radius of the ball with the given volume.
pub fn radius_for_volume(dim: usize, volume: f64) -> f64 {
    (volume / ball_volume(dim)).powf(1.0 / dim as f64)
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    norm2(v).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}
