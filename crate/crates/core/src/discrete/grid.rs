use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_NODE_CAP: usize = 2_000_000;

/// Uniform node-centered grid on a box: node `m` sits at
/// `center + h·(m − (n−1)/2)` along each axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub center: Vec<f64>,
    pub spacing: f64,
    pub counts: Vec<usize>,
}

impl Grid {
    pub fn new(center: Vec<f64>, spacing: f64, counts: Vec<usize>) -> Result<Self> {
        Self::with_cap(center, spacing, counts, DEFAULT_NODE_CAP)
    }

    pub fn with_cap(center: Vec<f64>, spacing: f64, counts: Vec<usize>, cap: usize) -> Result<Self> {
        if center.is_empty() || center.len() != counts.len() {
            return invalid("grid center and counts must have the same nonzero length");
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return invalid(format!("grid spacing must be positive, got {spacing}"));
        }
        if counts.contains(&0) {
            return invalid("every axis needs at least one node");
        }
        let total = counts.iter().try_fold(1usize, |a, &c| a.checked_mul(c));
        match total {
            Some(t) if t <= cap => Ok(Grid { center, spacing, counts }),
            _ => invalid(format!("grid {counts:?} exceeds the node cap {cap}")),
        }
    }

    /// Smallest grid with spacing `h` covering `[center − half, center + half]`
    /// on every axis, with a node at the center.
    pub fn covering(center: Vec<f64>, half_width: f64, h: f64) -> Result<Self> {
        let per = 2 * ((half_width / h - 1e-9).ceil().max(0.0) as usize) + 1;
        let n = center.len();
        Grid::new(center, h, vec![per; n])
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `h^N`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim() as i32)
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for i in (0..self.dim().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.counts[i + 1];
        }
        s
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut m = vec![0; self.dim()];
        for i in (0..self.dim()).rev() {
            m[i] = idx % self.counts[i];
            idx /= self.counts[i];
        }
        m
    }

    pub fn linear_index(&self, m: &[usize]) -> usize {
        m.iter().zip(&self.counts).fold(0, |acc, (&mi, &c)| acc * c + mi)
    }

    pub fn position(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .zip(&self.counts)
            .zip(&self.center)
            .map(|((&m, &n), &c)| c + self.spacing * (m as f64 - 0.5 * (n as f64 - 1.0)))
            .collect()
    }

    pub fn positions(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.position(i)).collect()
    }

    /// Node reached from `idx` by the integer offset, if inside the box.
    pub fn shift(&self, idx: usize, offset: &[i64]) -> Option<usize> {
        let m = self.multi_index(idx);
        let mut out = 0usize;
        for ((&mi, &o), &n) in m.iter().zip(offset).zip(&self.counts) {
            let t = mi as i64 + o;
            if t < 0 || t >= n as i64 {
                return None;
            }
            out = out * n + t as usize;
        }
        Some(out)
    }

    /// Number of nodes from `idx` to the nearest box face, per axis minimum.
    pub fn margin(&self, idx: usize) -> usize {
        self.multi_index(idx).iter().zip(&self.counts).map(|(&m, &n)| m.min(n - 1 - m)).min().unwrap_or(0)
    }

    /// Nearest node to a point (clamped into the box).
    pub fn nearest(&self, x: &[f64]) -> usize {
        let m: Vec<usize> = x
            .iter()
            .zip(&self.center)
            .zip(&self.counts)
            .map(|((&xi, &c), &n)| {
                let t = ((xi - c) / self.spacing + 0.5 * (n as f64 - 1.0)).round();
                t.clamp(0.0, n as f64 - 1.0) as usize
            })
            .collect();
        self.linear_index(&m)
    }
}

/// Interior marker per node: `true` for nodes of Ω.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainMask {
    pub interior: Vec<bool>,
}

impl DomainMask {
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> bool) -> Self {
        DomainMask { interior: (0..grid.len()).map(|i| f(&grid.position(i))).collect() }
    }

    pub fn from_indices(grid: &Grid, idx: &[usize]) -> Self {
        let mut interior = vec![false; grid.len()];
        for &i in idx {
            interior[i] = true;
        }
        DomainMask { interior }
    }

    /// Nodes inside the closed ball.
    pub fn ball(grid: &Grid, center: &[f64], radius: f64) -> Self {
        Self::from_fn(grid, |x| x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= radius * radius)
    }

    /// The `count` nodes nearest to `center` (ties broken by index), a
    /// discrete ball of prescribed volume `count·h^N`.
    pub fn nearest_nodes(grid: &Grid, center: &[f64], count: usize) -> Self {
        let mut d: Vec<(f64, usize)> = (0..grid.len())
            .map(|i| (grid.position(i).iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let idx: Vec<usize> = d.iter().take(count).map(|p| p.1).collect();
        Self::from_indices(grid, &idx)
    }

    pub fn count(&self) -> usize {
        self.interior.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.interior.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect()
    }

    pub fn fits(&self, grid: &Grid) -> bool {
        self.interior.len() == grid.len()
    }

    /// `self ⊆ other`.
    pub fn is_subset_of(&self, other: &DomainMask) -> bool {
        self.interior.iter().zip(&other.interior).all(|(&a, &b)| !a || b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let g = Grid::new(vec![0.0, 1.0, -1.0], 0.5, vec![3, 4, 5]).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.linear_index(&g.multi_index(i)), i);
        }
        let c = g.linear_index(&[1, 1, 2]);
        assert_eq!(g.position(c)[0], 0.0);
        assert_eq!(g.shift(c, &[1, 0, -2]), Some(g.linear_index(&[2, 1, 0])));
        assert_eq!(g.shift(c, &[2, 0, 0]), None);
        assert_eq!(g.nearest(&g.position(17)), 17);
    }

    #[test]
    fn cap_is_enforced() {
        assert!(Grid::new(vec![0.0; 3], 0.01, vec![200; 3]).is_err());
    }
}
