//! Metric operators for quasi-Hermitian Hamiltonians.
//!
//! Given a diagonalizable `H` with real spectrum, every Hermitian solution of
//! `H†Θ = ΘH` is a real combination `Σₙ κₙ lₙ lₙ†` of left-eigenvector
//! projectors; positive weights give a positive-definite metric.

use crate::dyson::DysonMap;
use crate::error::{Result, ThsError};
use crate::linalg::{
    check_operator, eig_general, herm_sqrt, hermitian_part, hermitian_residual, min_herm_eigenvalue, CMatrix,
    EigOptions, DEFAULT_TOL_PD,
};

pub const DEFAULT_TOL_REAL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct MetricCandidate {
    pub theta: CMatrix,
    pub weights: Vec<f64>,
    /// `‖H†Θ − ΘH‖_F` for the Hamiltonian the candidate was built from.
    pub residual: f64,
    pub min_eig: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct MetricOptions {
    pub eig: EigOptions,
    /// Relative to `‖H‖_F`.
    pub tol_real: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            eig: EigOptions::default(),
            tol_real: DEFAULT_TOL_REAL,
        }
    }
}

/// `‖H†Θ − ΘH‖_F`.
pub fn dieudonne_residual(h: &CMatrix, theta: &CMatrix) -> f64 {
    (h.adjoint() * theta - theta * h).norm()
}

pub fn solve_metric(h: &CMatrix, weights: &[f64], opts: &MetricOptions) -> Result<MetricCandidate> {
    check_operator(h, "Hamiltonian")?;
    let n = h.nrows();
    if weights.len() != n {
        return Err(ThsError::CountMismatch {
            what: "metric weights".into(),
            expected: n,
            actual: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(ThsError::InvalidInput(format!("metric weight {w} is not positive")));
    }

    let sys = eig_general(h, &opts.eig)?;
    let norm = h.norm();
    let tol = opts.tol_real * norm;
    if let Some(lambda) = sys.eigenvalues.iter().find(|l| l.im.abs() > tol) {
        return Err(ThsError::ComplexSpectrum {
            eigenvalue: format!("{lambda}"),
            tol,
        });
    }

    let mut theta = CMatrix::zeros(n, n);
    for (k, &kappa) in weights.iter().enumerate() {
        let l = sys.left.column(k);
        let l = l.unscale(l.norm());
        theta += (&l * l.adjoint()).scale(kappa);
    }
    let theta = hermitian_part(&theta);

    let residual = dieudonne_residual(h, &theta);
    let min_eig = min_herm_eigenvalue(&theta);
    let limit = 1e-10 * norm.max(1.0) * theta.norm();
    if residual > limit {
        return Err(ThsError::NonConvergence(format!(
            "metric residual {residual:e} exceeds {limit:e}"
        )));
    }
    if !(min_eig > 0.0) {
        return Err(ThsError::NotPositiveDefinite {
            eigenvalue: min_eig,
            tol: 0.0,
        });
    }
    Ok(MetricCandidate {
        theta,
        weights: weights.to_vec(),
        residual,
        min_eig,
    })
}

/// Unit weights: the default member of the metric family.
pub fn solve_metric_default(h: &CMatrix) -> Result<MetricCandidate> {
    solve_metric(h, &vec![1.0; h.nrows()], &MetricOptions::default())
}

/// The constant Dyson map `Ω = Θ^{1/2}`.
pub fn factor_metric(theta: &CMatrix) -> Result<DysonMap> {
    DysonMap::constant(herm_sqrt(theta, DEFAULT_TOL_PD)?)
}

/// Dieudonné residuals of each operator against a common `Θ₁`. A series
/// `H₀ + Σ zₖ(t)Hₖ` with real coefficients is quasi-Hermitian w.r.t. `Θ₁` for
/// every `t` exactly when all of them vanish.
pub fn elementwise_conditions(ops: &[CMatrix], theta1: &CMatrix) -> Result<Vec<f64>> {
    check_operator(theta1, "metric")?;
    ops.iter()
        .map(|op| {
            check_operator(op, "operator")?;
            if op.nrows() != theta1.nrows() {
                return Err(ThsError::DimensionMismatch(format!(
                    "operator is {0}x{0}, metric is {1}x{1}",
                    op.nrows(),
                    theta1.nrows()
                )));
            }
            Ok(dieudonne_residual(op, theta1))
        })
        .collect()
}

/// `Θ^{1/2} H Θ^{-1/2}`, which is Hermitian whenever `H†Θ = ΘH`.
pub fn hermitize(h: &CMatrix, theta: &CMatrix) -> Result<CMatrix> {
    let root = herm_sqrt(theta, DEFAULT_TOL_PD)?;
    let inv = root.clone().try_inverse().ok_or(ThsError::NotPositiveDefinite {
        eigenvalue: 0.0,
        tol: DEFAULT_TOL_PD,
    })?;
    Ok(root * h * inv)
}

pub fn is_quasi_hermitian(h: &CMatrix, theta: &CMatrix, tol: f64) -> bool {
    dieudonne_residual(h, theta) <= tol * h.norm().max(1.0) * theta.norm()
        && hermitian_residual(theta) <= tol * theta.norm()
}
