use super::grid::Grid;
use crate::error::{invalid, Result};
use crate::par::Execution;

/// Standard bump `exp(−1/(1 − |x|²/ε²))` sampled on the grid offsets with
/// `|k|h < ε` and normalized to unit discrete mass.
pub fn mollifier_stencil(grid: &Grid, eps: f64) -> Result<Vec<(Vec<i64>, f64)>> {
    let h = grid.spacing;
    if !(eps >= h * (1.0 - 1e-12) && eps.is_finite()) {
        return invalid(format!("mollification radius {eps} must be at least the spacing {h}"));
    }
    let n = grid.dim();
    let reach = (eps / h).ceil() as i64;
    let width = (2 * reach + 1) as usize;
    let mut out = Vec::new();
    let mut k = vec![0i64; n];
    for idx in 0..width.pow(n as u32) {
        let mut rem = idx;
        for ki in k.iter_mut().rev() {
            *ki = (rem % width) as i64 - reach;
            rem /= width;
        }
        let t: f64 = k.iter().map(|&v| (v as f64 * h / eps).powi(2)).sum();
        if t < 1.0 {
            out.push((k.clone(), (-1.0 / (1.0 - t)).exp()));
        }
    }
    let total: f64 = out.iter().map(|p| p.1).sum();
    for p in &mut out {
        p.1 /= total;
    }
    Ok(out)
}

/// `u_ε = ρ_ε * u` on the grid, with `u` extended by zero outside the box.
pub fn mollify(grid: &Grid, u: &[f64], eps: f64, exec: Execution) -> Result<Vec<f64>> {
    if u.len() != grid.len() {
        return invalid(format!("grid function has {} values, grid has {} nodes", u.len(), grid.len()));
    }
    let stencil = mollifier_stencil(grid, eps)?;
    Ok(exec.map(u.len(), |x| {
        stencil.iter().filter_map(|(k, w)| grid.shift(x, &k.iter().map(|v| -v).collect::<Vec<_>>()).map(|y| w * u[y])).sum()
    }))
}
