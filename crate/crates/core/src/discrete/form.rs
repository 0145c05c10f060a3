use super::grid::{DomainMask, Grid};
use super::weights::WeightTable;
use crate::error::{invalid, Result};
use crate::par::Execution;

const NONE: u32 = u32::MAX;

/// The bilinear form and operator of a kernel on a grid, with functions
/// extended by zero outside the box and the kernel mass beyond the
/// truncation radius acting as a killing term.
///
/// With `H = h^N`, `w_z` the table weights and `ext(x) = H Σ_{x+z ∉ box} w_z + tail`:
///
/// * `(Iu)(x) = d·u(x) − H Σ_{x+z ∈ box} w_z u(x+z)`, `d = H Σ w_z + tail`
/// * `E(u,v) = ½ H² Σ_x Σ_{x+z ∈ box} w_z Δu Δv + H Σ_x ext(x) u(x) v(x)`
///
/// so that `E(u,v) = H Σ_x (Iu)(x) v(x)` for all grid functions.
#[derive(Clone, Debug)]
pub struct DiscreteForm {
    pub grid: Grid,
    pub mask: DomainMask,
    pub table: WeightTable,
    pub exec: Execution,
    /// Offsets with positive weight, as multi-indices and linear deltas.
    offsets: Vec<Vec<i64>>,
    deltas: Vec<isize>,
    weights: Vec<f64>,
    reach: usize,
    degree: f64,
    /// Interior node → position in `interior`, `NONE` elsewhere.
    compact: Vec<u32>,
    interior: Vec<usize>,
}

impl DiscreteForm {
    /// Requires every interior node to see all its kernel neighbors inside the box.
    pub fn new(grid: Grid, mask: DomainMask, table: WeightTable) -> Result<Self> {
        if table.dim != grid.dim() {
            return invalid(format!("weight table is {}-dimensional, grid is {}-dimensional", table.dim, grid.dim()));
        }
        if (table.spacing - grid.spacing).abs() > 1e-12 * grid.spacing {
            return invalid(format!("weight table spacing {} differs from grid spacing {}", table.spacing, grid.spacing));
        }
        if !mask.fits(&grid) {
            return invalid(format!("mask has {} entries, grid has {} nodes", mask.interior.len(), grid.len()));
        }
        let reach = table.reach();
        let interior = mask.indices();
        if let Some(&bad) = interior.iter().find(|&&i| grid.margin(i) < reach) {
            return invalid(format!(
                "interior node {:?} is {} nodes from the box boundary; the kernel stencil needs {reach}",
                grid.position(bad),
                grid.margin(bad)
            ));
        }
        if grid.len() >= NONE as usize {
            return invalid("grid too large for 32-bit node indices");
        }
        let strides = grid.strides();
        let mut offsets = Vec::new();
        let mut deltas = Vec::new();
        let mut weights = Vec::new();
        for (k, &w) in table.offsets.iter().zip(&table.weights) {
            if w > 0.0 {
                deltas.push(k.iter().zip(&strides).map(|(&a, &s)| a as isize * s as isize).sum());
                offsets.push(k.clone());
                weights.push(w);
            }
        }
        let mut compact = vec![NONE; grid.len()];
        for (c, &i) in interior.iter().enumerate() {
            compact[i] = c as u32;
        }
        let degree = table.degree();
        Ok(DiscreteForm {
            grid,
            mask,
            table,
            exec: Execution::default(),
            offsets,
            deltas,
            weights,
            reach,
            degree,
            compact,
            interior,
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    /// Same grid and weights, different domain.
    pub fn with_mask(&self, mask: DomainMask) -> Result<Self> {
        Ok(DiscreteForm::new(self.grid.clone(), mask, self.table.clone())?.with_execution(self.exec))
    }

    pub fn degree(&self) -> f64 {
        self.degree
    }

    pub fn cell_volume(&self) -> f64 {
        self.grid.cell_volume()
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Position of a box node among the interior nodes.
    pub fn compact_index(&self, node: usize) -> Option<usize> {
        let c = self.compact[node];
        (c != NONE).then_some(c as usize)
    }

    /// `(offset, weight)` pairs with positive weight.
    pub fn stencil(&self) -> impl Iterator<Item = (&[i64], f64)> {
        self.offsets.iter().map(|k| k.as_slice()).zip(self.weights.iter().copied())
    }

    /// Calls `f(neighbor, weight)` for every in-box neighbor of `x`.
    #[inline]
    fn for_neighbors(&self, x: usize, mut f: impl FnMut(usize, f64)) {
        if self.grid.margin(x) >= self.reach {
            for (&d, &w) in self.deltas.iter().zip(&self.weights) {
                f((x as isize + d) as usize, w);
            }
            return;
        }
        let m = self.grid.multi_index(x);
        'offs: for ((k, &d), &w) in self.offsets.iter().zip(&self.deltas).zip(&self.weights) {
            for ((&mi, &ki), &n) in m.iter().zip(k).zip(&self.grid.counts) {
                let t = mi as i64 + ki;
                if t < 0 || t >= n as i64 {
                    continue 'offs;
                }
            }
            f((x as isize + d) as usize, w);
        }
    }

    /// `ext(x)`: killing density seen by node `x`.
    pub fn exterior_coupling(&self, x: usize) -> f64 {
        if self.grid.margin(x) >= self.reach {
            return self.table.tail_mass;
        }
        let mut inside = 0.0;
        self.for_neighbors(x, |_, w| inside += w);
        let total: f64 = self.weights.iter().sum();
        self.cell_volume() * (total - inside).max(0.0) + self.table.tail_mass
    }

    fn check_len(&self, u: &[f64]) {
        assert_eq!(u.len(), self.grid.len(), "grid function length must match the grid");
    }

    pub fn apply_operator(&self, u: &[f64]) -> Vec<f64> {
        self.check_len(u);
        let hn = self.cell_volume();
        self.exec.map(u.len(), |x| {
            let mut s = 0.0;
            self.for_neighbors(x, |y, w| s += w * u[y]);
            self.degree * u[x] - hn * s
        })
    }

    /// `E(u, v)` with zero extension outside the box.
    pub fn energy(&self, u: &[f64], v: &[f64]) -> f64 {
        self.check_len(u);
        self.check_len(v);
        let hn = self.cell_volume();
        self.exec.sum(u.len(), |x| {
            let mut pair = 0.0;
            self.for_neighbors(x, |y, w| pair += w * (u[x] - u[y]) * (v[x] - v[y]));
            0.5 * hn * hn * pair + hn * self.exterior_coupling(x) * u[x] * v[x]
        })
    }

    /// Pair energy over in-box pairs only, without the exterior and tail terms.
    pub fn energy_restricted(&self, u: &[f64], v: &[f64]) -> f64 {
        self.check_len(u);
        self.check_len(v);
        let hn = self.cell_volume();
        self.exec.sum(u.len(), |x| {
            let mut pair = 0.0;
            self.for_neighbors(x, |y, w| pair += w * (u[x] - u[y]) * (v[x] - v[y]));
            0.5 * hn * hn * pair
        })
    }

    /// `ρ(u, Ω) = ½ Σ_{x∈Ω} [H² Σ_z w_z (u(x) − u(x+z))² + H ext(x) u(x)²]`.
    pub fn rho(&self, u: &[f64], mask: &DomainMask) -> f64 {
        self.check_len(u);
        assert!(mask.fits(&self.grid), "mask must fit the grid");
        let hn = self.cell_volume();
        self.exec.sum(u.len(), |x| {
            if !mask.interior[x] {
                return 0.0;
            }
            let mut pair = 0.0;
            self.for_neighbors(x, |y, w| pair += w * (u[x] - u[y]).powi(2));
            0.5 * (hn * hn * pair + hn * self.exterior_coupling(x) * u[x] * u[x])
        })
    }

    /// `∫∫ |Δu| |Δv| J` over ordered pairs in R^N × R^N.
    pub fn abs_pair_sum(&self, u: &[f64], v: &[f64]) -> f64 {
        self.check_len(u);
        self.check_len(v);
        let hn = self.cell_volume();
        self.exec.sum(u.len(), |x| {
            let mut pair = 0.0;
            self.for_neighbors(x, |y, w| pair += w * (u[x] - u[y]).abs() * (v[x] - v[y]).abs());
            hn * hn * pair + 2.0 * hn * self.exterior_coupling(x) * u[x].abs() * v[x].abs()
        })
    }

    pub fn interior_len(&self) -> usize {
        self.interior.len()
    }

    /// `L_Ω v` on interior nodes, with `v` given in compact interior order
    /// and exterior values zero.
    pub fn apply_interior(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.interior.len());
        let hn = self.cell_volume();
        self.exec.fill(out, |c| {
            let x = self.interior[c];
            let mut s = 0.0;
            for (&d, &w) in self.deltas.iter().zip(&self.weights) {
                let y = self.compact[(x as isize + d) as usize];
                if y != NONE {
                    s += w * v[y as usize];
                }
            }
            self.degree * v[c] - hn * s
        });
    }

    /// Interior values of a full grid function.
    pub fn restrict(&self, u: &[f64]) -> Vec<f64> {
        self.interior.iter().map(|&i| u[i]).collect()
    }

    /// Full grid function from interior values, with `fill` elsewhere.
    pub fn extend(&self, v: &[f64], fill: &[f64]) -> Vec<f64> {
        let mut u = fill.to_vec();
        for (&i, &x) in self.interior.iter().zip(v) {
            u[i] = x;
        }
        u
    }

    /// Interior nodes adjacent to `x` through a positive weight.
    pub fn interior_neighbors(&self, c: usize) -> Vec<usize> {
        let x = self.interior[c];
        self.deltas
            .iter()
            .filter_map(|&d| {
                let y = self.compact[(x as isize + d) as usize];
                (y != NONE).then_some(y as usize)
            })
            .collect()
    }

    /// `H Σ_z w_z u(x+z)` over all in-box neighbors of a box node.
    pub fn neighbor_sum(&self, x: usize, u: &[f64]) -> f64 {
        let mut s = 0.0;
        self.for_neighbors(x, |y, w| s += w * u[y]);
        self.cell_volume() * s
    }

    /// Dense interior matrix of `L_Ω`, for small problems.
    pub fn dense_interior_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.interior.len();
        let hn = self.cell_volume();
        let mut a = vec![vec![0.0; n]; n];
        for (c, row) in a.iter_mut().enumerate() {
            row[c] = self.degree;
            let x = self.interior[c];
            for (&d, &w) in self.deltas.iter().zip(&self.weights) {
                let y = self.compact[(x as isize + d) as usize];
                if y != NONE {
                    row[y as usize] -= hn * w;
                }
            }
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::super::weights::build_weight_table;
    use super::*;
    use crate::kernels::KernelSpec;

    fn line(h: f64, half: f64, kernel: &KernelSpec, trunc: f64, omega: f64) -> DiscreteForm {
        let grid = Grid::covering(vec![0.0], half, h).unwrap();
        let mask = DomainMask::ball(&grid, &[0.0], omega);
        let t = build_weight_table(kernel, h, trunc, 3).unwrap();
        DiscreteForm::new(grid, mask, t).unwrap()
    }

    #[test]
    fn single_node_energy_is_degree() {
        let f = line(0.1, 3.0, &KernelSpec::ball(1, 1.0), 2.0, 0.5);
        let mut u = vec![0.0; f.grid.len()];
        let x0 = f.grid.nearest(&[0.0]);
        u[x0] = 1.0;
        let e = f.energy(&u, &u);
        let brute: f64 = f.table.weights.iter().sum::<f64>() * 0.01;
        assert!((e - brute).abs() < 1e-14, "{e} {brute}");
        assert!((e - f.degree() * 0.1).abs() < 1e-14);
    }

    #[test]
    fn quadratic_action_of_the_unit_ball_kernel() {
        let h = 1.0 / 64.0;
        let f = line(h, 3.0, &KernelSpec::ball(1, 1.0), 2.0, 0.5);
        let u: Vec<f64> = f.grid.positions().iter().map(|x| x[0] * x[0]).collect();
        let iu = f.apply_operator(&u);
        let x0 = f.grid.nearest(&[0.0]);
        assert!((iu[x0] + 2.0 / 3.0).abs() < 0.02, "{}", iu[x0]);
    }

    #[test]
    fn margin_is_validated() {
        let grid = Grid::covering(vec![0.0], 1.0, 0.1).unwrap();
        let mask = DomainMask::ball(&grid, &[0.0], 0.5);
        let t = build_weight_table(&KernelSpec::ball(1, 1.0), 0.1, 2.0, 3).unwrap();
        assert!(DiscreteForm::new(grid, mask, t).is_err());
    }

    #[test]
    fn restricted_energy_of_constants_vanishes() {
        let f = line(0.1, 3.0, &KernelSpec::ball(1, 1.0), 2.0, 0.5);
        let one = vec![1.0; f.grid.len()];
        assert_eq!(f.energy_restricted(&one, &one), 0.0);
        assert!(f.energy(&one, &one) > 0.0);
    }
}
