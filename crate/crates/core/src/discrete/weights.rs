use crate::error::{invalid, Error, Result};
use crate::kernels::{mass_tail, KernelSpec};
use crate::par::Execution;
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightOptions {
    pub trunc_radius: f64,
    /// Midpoint sub-cells per axis.
    pub subdivision: usize,
    /// Also rebuild at `2·subdivision` and record the degree change.
    pub refine_check: bool,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for WeightOptions {
    fn default() -> Self {
        WeightOptions { trunc_radius: 4.0, subdivision: 3, refine_check: true, seed: 0, exec: Execution::Parallel }
    }
}

/// Cell-averaged kernel weights on integer offsets `0 < |k|·h ≤ R`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightTable {
    pub dim: usize,
    pub spacing: f64,
    pub trunc_radius: f64,
    pub subdivision: usize,
    pub offsets: Vec<Vec<i64>>,
    pub weights: Vec<f64>,
    /// `∫_{|z|>R} j`.
    pub tail_mass: f64,
    pub tail_error: f64,
    /// `h^N · Σ |w_s − w_{2s}|`, when computed.
    pub refinement_delta: Option<f64>,
    /// Midpoint estimate of `∫` over the omitted cell around 0 (∞ for
    /// non-integrable singularities).
    pub diagonal_mass: f64,
}

/// Average of `j` over the cell centered at `h·k`, from `s^N` midpoints.
fn cell_average(kernel: &KernelSpec, h: f64, k: &[i64], s: usize) -> f64 {
    let n = k.len();
    let total = s.pow(n as u32);
    let mut z = vec![0.0; n];
    let mut acc = 0.0;
    for idx in 0..total {
        let mut rem = idx;
        for (i, zi) in z.iter_mut().enumerate() {
            let t = rem % s;
            rem /= s;
            *zi = h * (k[i] as f64 + (t as f64 + 0.5) / s as f64 - 0.5);
        }
        acc += kernel.eval(&z);
    }
    acc / total as f64
}

/// One representative per ± pair: the first nonzero coordinate is positive.
fn representatives(dim: usize, reach: i64, h: f64, trunc: f64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let width = (2 * reach + 1) as usize;
    let total = width.pow(dim as u32);
    let mut k = vec![0i64; dim];
    for idx in 0..total {
        let mut rem = idx;
        for ki in k.iter_mut().rev() {
            *ki = (rem % width) as i64 - reach;
            rem /= width;
        }
        let lead = k.iter().find(|&&v| v != 0);
        if lead.is_none_or(|&v| v < 0) {
            continue;
        }
        let r2: f64 = k.iter().map(|&v| (v as f64 * h).powi(2)).sum();
        if r2.sqrt() <= trunc * (1.0 + 1e-12) {
            out.push(k.clone());
        }
    }
    out
}

pub fn build_weight_table(kernel: &KernelSpec, h: f64, trunc_radius: f64, subdivision: usize) -> Result<WeightTable> {
    build_weight_table_with(kernel, h, &WeightOptions { trunc_radius, subdivision, ..Default::default() })
}

pub fn build_weight_table_with(kernel: &KernelSpec, h: f64, opts: &WeightOptions) -> Result<WeightTable> {
    let n = kernel.dimension;
    if !(h > 0.0 && h.is_finite()) {
        return invalid(format!("spacing must be positive, got {h}"));
    }
    if !(opts.trunc_radius >= 2.0 * h && opts.trunc_radius.is_finite()) {
        return invalid(format!("truncation radius {} must be finite and at least 2h = {}", opts.trunc_radius, 2.0 * h));
    }
    if opts.subdivision == 0 {
        return invalid("subdivision must be at least 1");
    }
    let reach = (opts.trunc_radius / h + 1e-9).floor() as i64;
    let reps = representatives(n, reach, h, opts.trunc_radius);
    let s = opts.subdivision;
    let half: Vec<f64> = opts.exec.map(reps.len(), |i| cell_average(kernel, h, &reps[i], s));
    if let Some(i) = half.iter().position(|w| !w.is_finite()) {
        return Err(Error::InfiniteWeight { offset: reps[i].clone() });
    }
    let cell = h.powi(n as i32);
    let refinement_delta = opts.refine_check.then(|| {
        let fine: Vec<f64> = opts.exec.map(reps.len(), |i| cell_average(kernel, h, &reps[i], 2 * s));
        2.0 * cell * half.iter().zip(&fine).map(|(a, b)| (a - b).abs()).sum::<f64>()
    });
    let (tail_mass, tail_error) = mass_tail(kernel, opts.trunc_radius, opts.seed)?;
    let diagonal_mass = cell * cell_average(kernel, h, &vec![0; n], 2 * s.div_ceil(2));

    let mut offsets = Vec::with_capacity(2 * reps.len());
    let mut weights = Vec::with_capacity(2 * reps.len());
    for (k, &w) in reps.iter().zip(&half) {
        offsets.push(k.clone());
        weights.push(w);
        offsets.push(k.iter().map(|v| -v).collect());
        weights.push(w);
    }
    Ok(WeightTable {
        dim: n,
        spacing: h,
        trunc_radius: opts.trunc_radius,
        subdivision: s,
        offsets,
        weights,
        tail_mass,
        tail_error,
        refinement_delta,
        diagonal_mass,
    })
}

impl WeightTable {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// `h^N Σ w`.
    pub fn stencil_mass(&self) -> f64 {
        self.cell_volume() * self.weights.iter().sum::<f64>()
    }

    /// `h^N Σ w + tail`, the degree of every node.
    pub fn degree(&self) -> f64 {
        self.stencil_mass() + self.tail_mass
    }

    pub fn weight(&self, k: &[i64]) -> Option<f64> {
        self.offsets.iter().position(|o| o == k).map(|i| self.weights[i])
    }

    /// Largest `|k_i|` over offsets with positive weight.
    pub fn reach(&self) -> usize {
        self.offsets
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .flat_map(|(k, _)| k.iter().map(|v| v.unsigned_abs() as usize))
            .max()
            .unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let head: Vec<String> = (0..self.dim).map(|i| format!("k{i}")).collect();
        writeln!(out, "{},weight", head.join(","))?;
        for (k, w) in self.offsets.iter().zip(&self.weights) {
            let ks: Vec<String> = k.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{},{w:e}", ks.join(","))?;
        }
        Ok(())
    }
}
