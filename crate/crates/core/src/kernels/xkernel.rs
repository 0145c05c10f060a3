use super::{KernelSpec, PairKernel};
use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

/// Symmetric multipliers `m(x, y) = m(y, x)`. Every entry depends on
/// `x_a + y_a`, which is commutative in floating point, so symmetry is exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Multiplier {
    Constant {
        value: f64,
    },
    /// `mean + amplitude · sin(frequency · (x_a + y_a))`
    Periodic {
        mean: f64,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        axis: usize,
    },
    /// `low` where `x_a + y_a < 0`, `high` elsewhere.
    Step {
        low: f64,
        high: f64,
        #[serde(default)]
        axis: usize,
    },
}

impl Multiplier {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Multiplier::Constant { value } => value,
            Multiplier::Periodic { mean, amplitude, frequency, axis } => {
                mean + amplitude * (frequency * (x[axis] + y[axis])).sin()
            }
            Multiplier::Step { low, high, axis } => {
                if x[axis] + y[axis] < 0.0 {
                    low
                } else {
                    high
                }
            }
        }
    }

    /// Declared `(m_min, m_max)`.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Multiplier::Constant { value } => (value, value),
            Multiplier::Periodic { mean, amplitude, .. } => (mean - amplitude.abs(), mean + amplitude.abs()),
            Multiplier::Step { low, high, .. } => (low.min(high), low.max(high)),
        }
    }

    fn axis(&self) -> Option<usize> {
        match *self {
            Multiplier::Constant { .. } => None,
            Multiplier::Periodic { axis, .. } | Multiplier::Step { axis, .. } => Some(axis),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XKernelSpec {
    pub base: KernelSpec,
    pub multiplier: Multiplier,
}

impl XKernelSpec {
    pub fn new(mut base: KernelSpec, multiplier: Multiplier) -> Result<Self> {
        base.validate()?;
        let (lo, hi) = multiplier.bounds();
        if !(lo > 0.0 && hi.is_finite()) {
            return invalid(format!("multiplier bounds must satisfy 0 < m_min ≤ m_max < ∞, got [{lo}, {hi}]"));
        }
        if let Some(a) = multiplier.axis() {
            if a >= base.dimension {
                return invalid(format!("multiplier axis {a} out of range for dimension {}", base.dimension));
            }
        }
        Ok(XKernelSpec { base, multiplier })
    }

    pub fn validate(&mut self) -> Result<()> {
        *self = XKernelSpec::new(self.base.clone(), self.multiplier.clone())?;
        Ok(())
    }

    /// `J(x, x + z)`.
    pub fn at_offset(&self, x: &[f64], z: &[f64]) -> f64 {
        let y: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + b).collect();
        self.pair(x, &y)
    }
}

impl PairKernel for XKernelSpec {
    fn dimension(&self) -> usize {
        self.base.dimension
    }
    fn pair(&self, x: &[f64], y: &[f64]) -> f64 {
        let j = self.base.pair(x, y);
        if j == 0.0 {
            return 0.0;
        }
        self.multiplier.eval(x, y) * j
    }
    fn base(&self) -> &KernelSpec {
        &self.base
    }
}
