//! Right-open piecewise-constant curves on a tenor partition.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::kernels::KernelSpec;

/// f(t) = values[i] for t ∈ [T_i, T_{i+1}), extended flat on both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseCurve {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseCurve {
    /// `knots` = {T₀ < T₁ < … < Tₙ}, `values` has n entries.
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        ensure(knots.len() >= 2, || "a curve needs at least two knots".into())?;
        ensure(values.len() + 1 == knots.len(), || {
            format!("{} knots need {} values, got {}", knots.len(), knots.len() - 1, values.len())
        })?;
        ensure(knots.windows(2).all(|w| w[0] < w[1]), || "knots must be strictly increasing".into())?;
        ensure(knots.iter().chain(&values).all(|x| x.is_finite()), || {
            "curve knots and values must be finite".into()
        })?;
        Ok(Self { knots, values })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            knots: vec![0.0, f64::MAX],
            values: vec![value],
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.knots.partition_point(|&k| k <= t);
        let i = idx.saturating_sub(1).min(self.values.len() - 1);
        self.values[i]
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Pieces (lo, hi, value) covering [a, b], flat extension included.
    fn pieces(&self, a: f64, b: f64) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        let n = self.values.len();
        for i in 0..n {
            let lo = if i == 0 { f64::NEG_INFINITY } else { self.knots[i] };
            let hi = if i + 1 == n { f64::INFINITY } else { self.knots[i + 1] };
            let (l, h) = (lo.max(a), hi.min(b));
            if l < h {
                out.push((l, h, self.values[i]));
            }
        }
        out
    }

    /// ∫_a^b f(u) du.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.pieces(a, b).iter().map(|(l, h, v)| v * (h - l)).sum()
    }

    /// ∫_0^t k(t - u) f(u) du, exact per piece.
    pub fn kernel_convolution(&self, kernel: &KernelSpec, t: f64) -> Result<f64> {
        ensure(t >= 0.0, || format!("convolution time must be nonnegative, got {t}"))?;
        let mut acc = 0.0;
        for (l, h, v) in self.pieces(0.0, t) {
            if v != 0.0 {
                acc += v * kernel.interval_integral(t, l, h)?;
            }
        }
        Ok(acc)
    }
}
