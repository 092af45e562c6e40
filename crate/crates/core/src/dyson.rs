//! Time-dependent Dyson maps `Ω(t) = Ω₀ + Σₙ vₙ(t) Ωₙ` and the operators
//! derived from them: the metric `Θ = Ω†Ω`, the Coriolis term
//! `Σ = iħ Ω⁻¹ Ω̇`, the dressed Hamiltonian `Ω⁻¹ h Ω` and the generator
//! `G = H − Σ`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Result, ThsError};
use crate::field::ControlField;
use crate::linalg::{check_operator, inverse_with_condition, CMatrix, C64, I};

pub const DEFAULT_COND_MAX: f64 = 1e12;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A real coefficient function together with its time derivative.
#[derive(Clone)]
pub enum TimeFunction {
    Constant(f64),
    /// Ascending coefficients `c₀ + c₁t + c₂t² + …`.
    Polynomial(Vec<f64>),
    /// `amplitude · e^{rate·t}`
    Exp {
        amplitude: f64,
        rate: f64,
    },
    /// `amplitude · sin(omega·t + phase)`
    Sin {
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    /// `amplitude · cos(omega·t + phase)`
    Cos {
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    /// Piecewise constant; the derivative is taken as zero inside intervals.
    Piecewise(ControlField),
    Custom {
        value: ScalarFn,
        derivative: ScalarFn,
    },
    /// Derivative replaced by a central finite difference with the given step.
    /// Only accurate to `O(step²)`.
    Numeric {
        inner: Box<TimeFunction>,
        step: f64,
    },
}

impl fmt::Debug for TimeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeFunction::Constant(c) => write!(f, "Constant({c})"),
            TimeFunction::Polynomial(c) => write!(f, "Polynomial({c:?})"),
            TimeFunction::Exp { amplitude, rate } => write!(f, "Exp({amplitude}, {rate})"),
            TimeFunction::Sin {
                amplitude,
                omega,
                phase,
            } => {
                write!(f, "Sin({amplitude}, {omega}, {phase})")
            }
            TimeFunction::Cos {
                amplitude,
                omega,
                phase,
            } => {
                write!(f, "Cos({amplitude}, {omega}, {phase})")
            }
            TimeFunction::Piecewise(field) => write!(f, "Piecewise({:?})", field.amplitudes()),
            TimeFunction::Custom { .. } => write!(f, "Custom"),
            TimeFunction::Numeric { inner, step } => write!(f, "Numeric({inner:?}, {step})"),
        }
    }
}

impl TimeFunction {
    pub fn custom(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        TimeFunction::Custom {
            value: Arc::new(value),
            derivative: Arc::new(derivative),
        }
    }

    /// Wraps `self` so its derivative is a central difference with step `h`.
    pub fn numeric(self, step: f64) -> Self {
        TimeFunction::Numeric {
            inner: Box::new(self),
            step,
        }
    }

    /// Default finite-difference step `1e-6 · max(T, 1)`.
    pub fn default_fd_step(horizon: f64) -> f64 {
        1e-6 * horizon.max(1.0)
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            TimeFunction::Constant(c) => *c,
            TimeFunction::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * t + ck),
            TimeFunction::Exp { amplitude, rate } => amplitude * (rate * t).exp(),
            TimeFunction::Sin {
                amplitude,
                omega,
                phase,
            } => amplitude * (omega * t + phase).sin(),
            TimeFunction::Cos {
                amplitude,
                omega,
                phase,
            } => amplitude * (omega * t + phase).cos(),
            TimeFunction::Piecewise(field) => field.value(t),
            TimeFunction::Custom { value, .. } => value(t),
            TimeFunction::Numeric { inner, .. } => inner.value(t),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            TimeFunction::Constant(_) | TimeFunction::Piecewise(_) => 0.0,
            TimeFunction::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, &ck)| acc * t + k as f64 * ck),
            TimeFunction::Exp { amplitude, rate } => amplitude * rate * (rate * t).exp(),
            TimeFunction::Sin {
                amplitude,
                omega,
                phase,
            } => amplitude * omega * (omega * t + phase).cos(),
            TimeFunction::Cos {
                amplitude,
                omega,
                phase,
            } => -amplitude * omega * (omega * t + phase).sin(),
            TimeFunction::Custom { derivative, .. } => derivative(t),
            TimeFunction::Numeric { inner, step } => (inner.value(t + step) - inner.value(t - step)) / (2.0 * step),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TimeFunction::Constant(_))
    }
}

/// `base + Σₖ fₖ(t)·opₖ`, the multinomial operator shape shared by Dyson
/// maps and Hamiltonian families.
#[derive(Debug, Clone)]
pub struct OperatorSeries {
    base: CMatrix,
    terms: Vec<(TimeFunction, CMatrix)>,
}

impl OperatorSeries {
    pub fn new(base: CMatrix) -> Result<Self> {
        check_operator(&base, "series base")?;
        Ok(Self {
            base,
            terms: Vec::new(),
        })
    }

    pub fn constant(base: CMatrix) -> Result<Self> {
        Self::new(base)
    }

    pub fn with_term(mut self, coefficient: TimeFunction, op: CMatrix) -> Result<Self> {
        self.push_term(coefficient, op)?;
        Ok(self)
    }

    pub fn push_term(&mut self, coefficient: TimeFunction, op: CMatrix) -> Result<()> {
        check_operator(&op, "series term")?;
        if op.nrows() != self.dim() {
            return Err(ThsError::DimensionMismatch(format!(
                "term operator is {}x{}, base is {}x{}",
                op.nrows(),
                op.ncols(),
                self.dim(),
                self.dim()
            )));
        }
        self.terms.push((coefficient, op));
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.base.nrows()
    }

    pub fn base(&self) -> &CMatrix {
        &self.base
    }

    pub fn terms(&self) -> &[(TimeFunction, CMatrix)] {
        &self.terms
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|(f, _)| f.is_constant())
    }

    pub fn evaluate(&self, t: f64) -> CMatrix {
        let mut out = self.base.clone();
        for (f, op) in &self.terms {
            out += op * C64::new(f.value(t), 0.0);
        }
        out
    }

    pub fn derivative(&self, t: f64) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim(), self.dim());
        for (f, op) in &self.terms {
            out += op * C64::new(f.derivative(t), 0.0);
        }
        out
    }
}

/// A time-parameterized invertible map `Ω(t)`.
#[derive(Debug, Clone)]
pub struct DysonMap {
    series: OperatorSeries,
    cond_max: f64,
    hbar: f64,
}

impl DysonMap {
    pub fn new(series: OperatorSeries) -> Self {
        Self {
            series,
            cond_max: DEFAULT_COND_MAX,
            hbar: 1.0,
        }
    }

    pub fn constant(base: CMatrix) -> Result<Self> {
        Ok(Self::new(OperatorSeries::new(base)?))
    }

    pub fn with_cond_max(mut self, cond_max: f64) -> Self {
        self.cond_max = cond_max;
        self
    }

    pub fn with_hbar(mut self, hbar: f64) -> Self {
        self.hbar = hbar;
        self
    }

    pub fn series(&self) -> &OperatorSeries {
        &self.series
    }

    pub fn dim(&self) -> usize {
        self.series.dim()
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn evaluate_map(&self, t: f64) -> CMatrix {
        self.series.evaluate(t)
    }

    pub fn map_derivative(&self, t: f64) -> CMatrix {
        self.series.derivative(t)
    }

    /// `(Ω(t), Ω⁻¹(t))`, failing when the condition bound is violated.
    pub fn map_and_inverse(&self, t: f64) -> Result<(CMatrix, CMatrix)> {
        let omega = self.evaluate_map(t);
        let inv = checked_inverse(&omega, t, self.cond_max)?;
        Ok((omega, inv))
    }

    pub fn metric_at(&self, t: f64) -> Result<CMatrix> {
        let (omega, _) = self.map_and_inverse(t)?;
        Ok(omega.adjoint() * &omega)
    }

    pub fn coriolis_at(&self, t: f64) -> Result<CMatrix> {
        let (_, inv) = self.map_and_inverse(t)?;
        Ok(inv * self.map_derivative(t) * (I * self.hbar))
    }

    /// `G(t) = H(t) − Σ(t)` for an already-dressed `H(t)`.
    pub fn generator_at(&self, h_of_t: impl Fn(f64) -> Result<CMatrix>, t: f64) -> Result<CMatrix> {
        let h = h_of_t(t)?;
        let sigma = self.coriolis_at(t)?;
        if h.shape() != sigma.shape() {
            return Err(ThsError::DimensionMismatch(format!(
                "H(t) is {:?}, map is {:?}",
                h.shape(),
                sigma.shape()
            )));
        }
        Ok(h - sigma)
    }

    /// `G(t) = Ω⁻¹ h Ω − iħ Ω⁻¹ Ω̇` for a P-space Hamiltonian `h`, using a
    /// single inversion.
    pub fn generator_from_physical(&self, h: &CMatrix, t: f64) -> Result<CMatrix> {
        let (omega, inv) = self.map_and_inverse(t)?;
        let dot = self.map_derivative(t);
        Ok(&inv * (h * omega - dot * (I * self.hbar)))
    }
}

fn checked_inverse(omega: &CMatrix, t: f64, cond_max: f64) -> Result<CMatrix> {
    match inverse_with_condition(omega) {
        Some((inv, cond)) if cond <= cond_max => Ok(inv),
        Some((_, cond)) => Err(ThsError::SingularMap {
            t,
            condition: cond,
            limit: cond_max,
        }),
        None => Err(ThsError::SingularMap {
            t,
            condition: f64::INFINITY,
            limit: cond_max,
        }),
    }
}

/// `H = Ω⁻¹ h Ω`.
pub fn dress_hamiltonian(h: &CMatrix, omega: &CMatrix) -> Result<CMatrix> {
    dress_with_limit(h, omega, DEFAULT_COND_MAX)
}

pub fn dress_with_limit(h: &CMatrix, omega: &CMatrix, cond_max: f64) -> Result<CMatrix> {
    check_operator(h, "Hamiltonian")?;
    check_operator(omega, "Dyson map")?;
    if h.nrows() != omega.nrows() {
        return Err(ThsError::DimensionMismatch(format!(
            "Hamiltonian is {0}x{0}, map is {1}x{1}",
            h.nrows(),
            omega.nrows()
        )));
    }
    let inv = checked_inverse(omega, 0.0, cond_max)?;
    Ok(inv * h * omega)
}
