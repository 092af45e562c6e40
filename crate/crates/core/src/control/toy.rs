use std::sync::Arc;

use crate::control::{BilinearSystem, ControlProblem, SystemKind, DEFAULT_CONDITIONS_TOL};
use crate::dyson::{DysonMap, OperatorSeries, TimeFunction};
use crate::error::{Result, ThsError};
use crate::evolution::TimeGrid;
use crate::field::ControlField;
use crate::linalg::{herm_sqrt, CMatrix, CVector, DEFAULT_TOL_PD, I};
use crate::metric::elementwise_conditions;

/// The scalar-map model `Ω(t) = v(t)·Θ₁^{1/2}` with generator
/// `G(t) = H₀ + u(t)H₁ + w(t)·iI` and `v(t) = v₀·exp(−∫₀ᵗ w/ħ)`.
#[derive(Debug, Clone)]
pub struct ToyModel {
    pub system: BilinearSystem,
    pub map: DysonMap,
    pub theta1: CMatrix,
    pub w: ControlField,
    pub v0: f64,
    pub hbar: f64,
}

pub fn build_toy_model(
    h0: &CMatrix,
    h1: &CMatrix,
    theta1: &CMatrix,
    w: ControlField,
    v0: f64,
    hbar: f64,
) -> Result<ToyModel> {
    if !(v0 > 0.0) {
        return Err(ThsError::InvalidInput(format!("v0 must be positive, got {v0}")));
    }
    let residuals = elementwise_conditions(&[h0.clone(), h1.clone()], theta1)?;
    let scale = theta1.norm() * h0.norm().max(h1.norm()).max(1.0);
    let tol = DEFAULT_CONDITIONS_TOL * scale;
    if residuals.iter().any(|&r| r > tol) {
        return Err(ThsError::ConditionsViolated { residuals, tol });
    }
    let root = herm_sqrt(theta1, DEFAULT_TOL_PD)?;
    let n = h0.nrows();
    let system = BilinearSystem::new(
        SystemKind::Generator,
        h0.clone(),
        vec![h1.clone(), CMatrix::identity(n, n) * I],
    )?;

    let wf = Arc::new(w.clone());
    let wd = Arc::clone(&wf);
    let v = move |t: f64| v0 * (-wf.integral(t) / hbar).exp();
    let v_for_derivative = v.clone();
    let coefficient = TimeFunction::custom(v, move |t| -wd.value(t) / hbar * v_for_derivative(t));
    let series = OperatorSeries::new(CMatrix::zeros(n, n))?.with_term(coefficient, root)?;
    let map = DysonMap::new(series).with_hbar(hbar);

    Ok(ToyModel {
        system,
        map,
        theta1: theta1.clone(),
        w,
        v0,
        hbar,
    })
}

impl ToyModel {
    pub fn v(&self, t: f64) -> f64 {
        self.v0 * (-self.w.integral(t) / self.hbar).exp()
    }

    /// `Θ(t) = v²(t)·Θ₁` in closed form.
    pub fn metric(&self, t: f64) -> CMatrix {
        self.theta1.scale(self.v(t).powi(2))
    }

    /// A control problem optimizing `u` with `w` held fixed.
    pub fn problem(
        &self,
        u: ControlField,
        initial: CVector,
        target: CVector,
        grid: TimeGrid,
    ) -> Result<ControlProblem> {
        let mut problem = ControlProblem::new(
            self.system.clone(),
            Some(self.map.clone()),
            vec![u, self.w.clone()],
            initial,
            target,
            grid,
        )?;
        problem.free = vec![true, false];
        problem.evolution.hbar = self.hbar;
        Ok(problem)
    }
}
