use serde::{Deserialize, Serialize};

use crate::error::{Result, ThsError};

pub const DEFAULT_U_MAX: f64 = 10.0;

/// A piecewise-constant real function on `[0, horizon]` with `M` uniform
/// subintervals. Intervals are right-open except the last, which is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlField {
    horizon: f64,
    amplitudes: Vec<f64>,
    u_max: f64,
}

impl ControlField {
    pub fn new(horizon: f64, amplitudes: Vec<f64>) -> Result<Self> {
        Self::with_bound(horizon, amplitudes, DEFAULT_U_MAX)
    }

    pub fn with_bound(horizon: f64, amplitudes: Vec<f64>, u_max: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ThsError::InvalidInput(format!(
                "field horizon must be positive and finite, got {horizon}"
            )));
        }
        if amplitudes.is_empty() {
            return Err(ThsError::InvalidInput("field needs at least one interval".into()));
        }
        if !(u_max > 0.0) {
            return Err(ThsError::InvalidInput(format!("u_max must be positive, got {u_max}")));
        }
        if let Some(a) = amplitudes.iter().find(|a| !a.is_finite() || a.abs() > u_max) {
            return Err(ThsError::InvalidInput(format!(
                "field amplitude {a} outside [-{u_max}, {u_max}]"
            )));
        }
        Ok(Self {
            horizon,
            amplitudes,
            u_max,
        })
    }

    pub fn constant(horizon: f64, intervals: usize, value: f64) -> Result<Self> {
        Self::new(horizon, vec![value; intervals])
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intervals(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    pub fn width(&self) -> f64 {
        self.horizon / self.intervals() as f64
    }

    /// Replaces the amplitudes, clipping each to `[-u_max, u_max]`.
    pub fn set_clipped(&mut self, amplitudes: &[f64]) {
        assert_eq!(amplitudes.len(), self.amplitudes.len());
        for (dst, &src) in self.amplitudes.iter_mut().zip(amplitudes) {
            *dst = src.clamp(-self.u_max, self.u_max);
        }
    }

    /// Copy with new amplitudes, bypassing the bound check. Used for
    /// finite-difference probes that may step just outside `u_max`.
    pub(crate) fn with_amplitudes_unchecked(&self, amplitudes: Vec<f64>) -> Self {
        debug_assert_eq!(amplitudes.len(), self.amplitudes.len());
        Self {
            horizon: self.horizon,
            amplitudes,
            u_max: self.u_max,
        }
    }

    pub fn interval_index(&self, t: f64) -> usize {
        let m = self.intervals();
        if t <= 0.0 {
            return 0;
        }
        ((t / self.width()).floor() as usize).min(m - 1)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.amplitudes[self.interval_index(t)]
    }

    /// Interval boundaries `0, T/M, …, T`.
    pub fn boundaries(&self) -> Vec<f64> {
        let m = self.intervals();
        (0..=m)
            .map(|k| if k == m { self.horizon } else { k as f64 * self.width() })
            .collect()
    }

    /// `∫₀ᵗ u(s) ds` in closed form, with `t` clamped to `[0, horizon]`.
    pub fn integral(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.horizon);
        let w = self.width();
        let k = self.interval_index(t);
        let full: f64 = self.amplitudes[..k].iter().sum::<f64>() * w;
        full + self.amplitudes[k] * (t - k as f64 * w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_uses_right_open_intervals() {
        let f = ControlField::new(2.0, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(f.value(0.0), 1.0);
        assert_eq!(f.value(0.5), 2.0);
        assert_eq!(f.value(0.49), 1.0);
        assert_eq!(f.value(2.0), 4.0);
        assert_eq!(f.value(5.0), 4.0);
    }

    #[test]
    fn integral_is_piecewise_linear() {
        let f = ControlField::new(2.0, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((f.integral(0.25) - 0.25).abs() < 1e-15);
        assert!((f.integral(0.75) - (0.5 + 0.5)).abs() < 1e-15);
        assert!((f.integral(2.0) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn bound_is_enforced() {
        assert!(ControlField::new(1.0, vec![11.0]).is_err());
        assert!(ControlField::new(0.0, vec![1.0]).is_err());
        assert!(ControlField::new(1.0, vec![]).is_err());
        let mut f = ControlField::new(1.0, vec![0.0, 0.0]).unwrap();
        f.set_clipped(&[20.0, -20.0]);
        assert_eq!(f.amplitudes(), &[10.0, -10.0]);
    }
}
