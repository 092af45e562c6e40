//! Dense complex linear algebra shared by every other module.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. All norms are Frobenius
//! unless stated otherwise.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Result, ThsError};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub const DEFAULT_TOL_EIG: f64 = 1e-10;
pub const DEFAULT_TOL_PD: f64 = 1e-10;
pub const DEFAULT_TOL_DEGENERACY: f64 = 1e-8;
pub const DEFAULT_MAX_DIM: usize = 64;

/// Builds a matrix from rows of real entries.
pub fn real_matrix(rows: &[&[f64]]) -> CMatrix {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    CMatrix::from_fn(n, m, |i, j| C64::new(rows[i][j], 0.0))
}

/// Builds a vector from `(re, im)` pairs.
pub fn cvector(entries: &[(f64, f64)]) -> CVector {
    CVector::from_iterator(entries.len(), entries.iter().map(|&(re, im)| C64::new(re, im)))
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn sigma_x() -> CMatrix {
    real_matrix(&[&[0.0, 1.0], &[1.0, 0.0]])
}

pub fn sigma_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[C64::ZERO, -I, I, C64::ZERO])
}

pub fn sigma_z() -> CMatrix {
    real_matrix(&[&[1.0, 0.0], &[0.0, -1.0]])
}

pub fn diag(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(
        values.len(),
        values.iter().map(|&v| C64::new(v, 0.0)),
    ))
}

/// Checks the structural invariants every operator must satisfy: square,
/// non-empty and finite.
pub fn check_operator(a: &CMatrix, what: &str) -> Result<()> {
    if a.nrows() == 0 || a.nrows() != a.ncols() {
        return Err(ThsError::DimensionMismatch(format!(
            "{what} must be square and non-empty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(ThsError::InvalidInput(format!("{what} has non-finite entries")));
    }
    Ok(())
}

pub fn check_vector(v: &CVector, dim: usize, what: &str) -> Result<()> {
    if v.len() != dim {
        return Err(ThsError::DimensionMismatch(format!(
            "{what} has length {}, expected {dim}",
            v.len()
        )));
    }
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(ThsError::InvalidInput(format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// `‖A − A†‖_F`.
pub fn hermitian_residual(a: &CMatrix) -> f64 {
    (a - a.adjoint()).norm()
}

/// Projects onto the Hermitian part, `(A + A†)/2`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Eigenvalues and biorthonormal right/left eigenvectors of a general matrix.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: Vec<C64>,
    /// Unit-length right eigenvectors, one per column.
    pub right: CMatrix,
    /// Left eigenvectors (right eigenvectors of `A†` for `conj(λ)`), scaled so
    /// that `left[:, m]† · right[:, n] = δ_mn`.
    pub left: CMatrix,
}

#[derive(Debug, Clone, Copy)]
pub struct EigOptions {
    pub tol_eig: f64,
    /// Relative to `‖A‖_F`.
    pub tol_degeneracy: f64,
    pub max_dim: usize,
    pub max_iters: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            tol_eig: DEFAULT_TOL_EIG,
            tol_degeneracy: DEFAULT_TOL_DEGENERACY,
            max_dim: DEFAULT_MAX_DIM,
            max_iters: 0,
        }
    }
}

/// Orders eigenvalues by real part, then imaginary part. Real parts that agree
/// to `scale * 1e-12` count as ties so conjugate pairs sort deterministically.
fn spectral_order(a: &C64, b: &C64, scale: f64) -> Ordering {
    let tie = 1e-12 * scale.max(1.0);
    if (a.re - b.re).abs() <= tie {
        a.im.partial_cmp(&b.im).unwrap_or(Ordering::Equal)
    } else {
        a.re.partial_cmp(&b.re).unwrap_or(Ordering::Equal)
    }
}

pub fn sort_spectrum(values: &mut [C64], scale: f64) {
    values.sort_by(|a, b| spectral_order(a, b, scale));
}

/// Full eigendecomposition of a nondegenerate complex matrix via the complex
/// Schur form `A = Q T Q†`.
pub fn eig_general(a: &CMatrix, opts: &EigOptions) -> Result<EigenSystem> {
    check_operator(a, "matrix")?;
    let n = a.nrows();
    if n > opts.max_dim {
        return Err(ThsError::InvalidInput(format!(
            "dimension {n} exceeds the configured maximum {}",
            opts.max_dim
        )));
    }
    let norm = a.norm();
    let max_iters = if opts.max_iters == 0 { 1000 * n } else { opts.max_iters };
    let schur = Schur::try_new(a.clone(), f64::EPSILON, max_iters)
        .ok_or_else(|| ThsError::NonConvergence(format!("Schur iteration exceeded {max_iters} sweeps")))?;
    let (q, t) = schur.unpack();

    for j in 0..n {
        for i in (j + 1)..n {
            if t[(i, j)].norm() > opts.tol_eig * norm.max(f64::MIN_POSITIVE) {
                return Err(ThsError::NonConvergence(format!(
                    "Schur factor not triangular: |T[{i},{j}]| = {:e}",
                    t[(i, j)].norm()
                )));
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| spectral_order(&t[(x, x)], &t[(y, y)], norm));
    let eigenvalues: Vec<C64> = order.iter().map(|&k| t[(k, k)]).collect();

    let tol_deg = opts.tol_degeneracy * norm;
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (eigenvalues[i] - eigenvalues[j]).norm();
            if gap < tol_deg || gap == 0.0 {
                return Err(ThsError::DegenerateSpectrum {
                    a: format!("{}", eigenvalues[i]),
                    b: format!("{}", eigenvalues[j]),
                    tol: tol_deg,
                });
            }
        }
    }

    let mut right = CMatrix::zeros(n, n);
    let mut left = CMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let lambda = t[(k, k)];

        // T y = λ y, upper triangular back-substitution.
        let mut y = CVector::zeros(n);
        y[k] = C64::ONE;
        for j in (0..k).rev() {
            let mut acc = C64::ZERO;
            for m in (j + 1)..=k {
                acc += t[(j, m)] * y[m];
            }
            y[j] = -acc / (t[(j, j)] - lambda);
        }

        // T† z = conj(λ) z, lower triangular forward substitution.
        let mut z = CVector::zeros(n);
        z[k] = C64::ONE;
        for j in (k + 1)..n {
            let mut acc = C64::ZERO;
            for m in k..j {
                acc += t[(m, j)].conj() * z[m];
            }
            z[j] = -acc / (t[(j, j)] - lambda).conj();
        }

        let r = &q * y;
        let r = r.unscale(r.norm());
        let l = &q * z;
        let overlap = l.dotc(&r);
        let l = l.map(|x| x / overlap.conj());

        right.set_column(col, &r);
        left.set_column(col, &l);
    }

    let adj = a.adjoint();
    for (col, &lambda) in eigenvalues.iter().enumerate() {
        let r = right.column(col);
        let l = left.column(col);
        let res_r = (a * r - r * lambda).norm();
        let res_l = (&adj * l - l * lambda.conj()).norm() / l.norm();
        let limit = opts.tol_eig * norm.max(f64::MIN_POSITIVE);
        if res_r > limit || res_l > limit {
            return Err(ThsError::NonConvergence(format!(
                "eigenpair {col} residuals {res_r:e}/{res_l:e} exceed {limit:e}"
            )));
        }
    }

    Ok(EigenSystem {
        eigenvalues,
        right,
        left,
    })
}

/// `e^A` by Padé scaling-and-squaring.
pub fn mat_exp(a: &CMatrix) -> CMatrix {
    a.exp()
}

/// Ascending real eigenvalues and matching orthonormal eigenvectors of a
/// Hermitian matrix. Only the Hermitian part of the input is used.
pub fn herm_eig(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[x]
            .partial_cmp(&eig.eigenvalues[y])
            .unwrap_or(Ordering::Equal)
    });
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

pub fn min_herm_eigenvalue(a: &CMatrix) -> f64 {
    herm_eig(a).0.first().copied().unwrap_or(f64::NAN)
}

/// The Hermitian positive-definite square root of `theta`.
pub fn herm_sqrt(theta: &CMatrix, tol_pd: f64) -> Result<CMatrix> {
    check_operator(theta, "metric")?;
    let residual = hermitian_residual(theta);
    let limit = tol_pd * theta.norm();
    if residual > limit {
        return Err(ThsError::NonHermitianInput {
            context: "square root argument".into(),
            residual,
            limit,
        });
    }
    let (values, vectors) = herm_eig(theta);
    if let Some(&bad) = values.iter().find(|&&v| v <= tol_pd) {
        return Err(ThsError::NotPositiveDefinite {
            eigenvalue: bad,
            tol: tol_pd,
        });
    }
    let roots = CVector::from_iterator(values.len(), values.iter().map(|v| C64::new(v.sqrt(), 0.0)));
    let s = &vectors * CMatrix::from_diagonal(&roots) * vectors.adjoint();
    Ok(hermitian_part(&s))
}

/// Inverse together with the Frobenius condition number `‖A‖·‖A⁻¹‖`.
pub fn inverse_with_condition(a: &CMatrix) -> Option<(CMatrix, f64)> {
    let inv = a.clone().try_inverse()?;
    let cond = a.norm() * inv.norm();
    if cond.is_finite() {
        Some((inv, cond))
    } else {
        None
    }
}

/// True when every eigenvalue of the Hermitian part of `a` exceeds `threshold`.
pub fn is_positive_above(a: &CMatrix, threshold: f64) -> bool {
    min_herm_eigenvalue(&hermitian_part(a)) > threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn hermitian_residual_examples() {
        assert_eq!(hermitian_residual(&sigma_x()), 0.0);
        let a = real_matrix(&[&[0.0, 2.0], &[0.5, 0.0]]);
        assert!((hermitian_residual(&a) - 1.5 * SQRT_2).abs() < 1e-15);
        let ii = identity(2).scale(1.0) * I;
        assert!((hermitian_residual(&ii) - 2.0 * SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn eig_diagonal() {
        let sys = eig_general(&diag(&[2.0, 1.0]), &EigOptions::default()).unwrap();
        assert!((sys.eigenvalues[0] - C64::new(1.0, 0.0)).norm() < 1e-14);
        assert!((sys.eigenvalues[1] - C64::new(2.0, 0.0)).norm() < 1e-14);
        assert!((sys.right[(1, 0)].norm() - 1.0).abs() < 1e-14);
        assert!((sys.right[(0, 1)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_similarity_transformed_sigma_x() {
        let a = real_matrix(&[&[0.0, 2.0], &[0.5, 0.0]]);
        let sys = eig_general(&a, &EigOptions::default()).unwrap();
        assert!((sys.eigenvalues[0] - C64::new(-1.0, 0.0)).norm() < 1e-14);
        assert!((sys.eigenvalues[1] - C64::new(1.0, 0.0)).norm() < 1e-14);
        let bi = sys.left.adjoint() * &sys.right;
        assert!(close(&bi, &identity(2), 1e-12));
    }

    #[test]
    fn eig_rejects_jordan_block() {
        let a = real_matrix(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let err = eig_general(&a, &EigOptions::default()).unwrap_err();
        assert_eq!(err.name(), "DegenerateSpectrum");
    }

    #[test]
    fn eig_orders_conjugate_pair_by_imaginary_part() {
        let a = real_matrix(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let sys = eig_general(&a, &EigOptions::default()).unwrap();
        assert!((sys.eigenvalues[0] - C64::new(0.0, -1.0)).norm() < 1e-14);
        assert!((sys.eigenvalues[1] - C64::new(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn eig_rejects_oversized_input() {
        let opts = EigOptions {
            max_dim: 2,
            ..EigOptions::default()
        };
        assert!(eig_general(&diag(&[1.0, 2.0, 3.0]), &opts).is_err());
    }

    #[test]
    fn mat_exp_examples() {
        assert!(close(&mat_exp(&CMatrix::zeros(3, 3)), &identity(3), 1e-15));

        let a = sigma_x() * (-I * FRAC_PI_2);
        let expected = CMatrix::from_row_slice(2, 2, &[C64::ZERO, -I, -I, C64::ZERO]);
        assert!(close(&mat_exp(&a), &expected, 1e-12));

        let e = std::f64::consts::E;
        assert!(close(&mat_exp(&diag(&[1.0, -1.0])), &diag(&[e, 1.0 / e]), 1e-12 * e));
    }

    #[test]
    fn herm_sqrt_examples() {
        assert!(close(&herm_sqrt(&identity(2), 1e-10).unwrap(), &identity(2), 1e-14));
        assert!(close(
            &herm_sqrt(&diag(&[1.0, 4.0]), 1e-10).unwrap(),
            &diag(&[1.0, 2.0]),
            1e-14
        ));
        let err = herm_sqrt(&diag(&[1.0, -1.0]), 1e-10).unwrap_err();
        assert_eq!(err.name(), "NotPositiveDefinite");
    }

    #[test]
    fn herm_sqrt_rejects_non_hermitian() {
        let a = real_matrix(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert_eq!(herm_sqrt(&a, 1e-10).unwrap_err().name(), "NonHermitianInput");
    }

    #[test]
    fn check_operator_rejects_nan() {
        let mut a = identity(2);
        a[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert!(check_operator(&a, "a").is_err());
        assert!(check_operator(&CMatrix::zeros(2, 3), "a").is_err());
    }

    #[test]
    fn positivity_threshold() {
        assert!(is_positive_above(&diag(&[1.0, 4.0]), 0.5));
        assert!(!is_positive_above(&diag(&[1.0, 4.0]), 1.5));
    }
}
