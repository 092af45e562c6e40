#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use thsq_core::dyson::{DysonMap, OperatorSeries, TimeFunction};
use thsq_core::evolution::{propagate_p, propagate_ths, EvolutionOptions, StatePair, TimeGrid, Trajectory};
use thsq_core::linalg::{inverse_with_condition, CMatrix, CVector, C64};
use thsq_core::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries with independent real and imaginary parts uniform in [-1, 1].
pub fn random_matrix(rng: &mut impl Rng, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
    let b = random_matrix(rng, n);
    &b + b.adjoint()
}

pub fn random_vector(rng: &mut impl Rng, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// `M†M + εI`.
pub fn random_metric(rng: &mut impl Rng, n: usize, eps: f64) -> CMatrix {
    let m = random_matrix(rng, n);
    m.adjoint() * &m + CMatrix::identity(n, n).scale(eps)
}

/// A random matrix whose Frobenius condition number is at most `cond_max`.
pub fn random_invertible(rng: &mut impl Rng, n: usize, cond_max: f64) -> CMatrix {
    loop {
        let m = random_matrix(rng, n);
        if matches!(inverse_with_condition(&m), Some((_, c)) if c <= cond_max) {
            return m;
        }
    }
}

/// Hermitian `h(t) = h₀ + sin(t)·h₁` seen through `Ω(t) = I + 0.3·sin(2t)·Ω₁`.
pub struct DysonScenario {
    pub h0: CMatrix,
    pub h1: CMatrix,
    pub map: DysonMap,
    pub psi0: CVector,
}

impl DysonScenario {
    pub fn random(seed: u64, n: usize) -> Self {
        let mut rng = rng(seed);
        let h0 = random_hermitian(&mut rng, n);
        let h1 = random_hermitian(&mut rng, n);
        // Reject Ω₁ until Ω(t) is well conditioned on [0, 1].
        let omega1 = loop {
            let candidate = random_matrix(&mut rng, n);
            let map = Self::map_for(&candidate);
            let worst = (0..=100)
                .map(|k| inverse_with_condition(&map.evaluate_map(k as f64 / 100.0)).map_or(f64::INFINITY, |(_, c)| c))
                .fold(0.0, f64::max);
            if worst <= 50.0 {
                break candidate;
            }
        };
        let mut psi0 = random_vector(&mut rng, n);
        psi0.unscale_mut(psi0.norm());
        Self {
            h0,
            h1,
            map: Self::map_for(&omega1),
            psi0,
        }
    }

    fn map_for(omega1: &CMatrix) -> DysonMap {
        let n = omega1.nrows();
        let series = OperatorSeries::new(CMatrix::identity(n, n))
            .unwrap()
            .with_term(
                TimeFunction::Sin {
                    amplitude: 0.3,
                    omega: 2.0,
                    phase: 0.0,
                },
                omega1.clone(),
            )
            .unwrap();
        DysonMap::new(series)
    }

    pub fn h(&self, t: f64) -> CMatrix {
        &self.h0 + self.h1.scale(t.sin())
    }

    pub fn generator(&self, t: f64) -> Result<CMatrix> {
        self.map.generator_from_physical(&self.h(t), t)
    }

    /// `ψ_F(0) = Ω(0)⁻¹ψ_P(0)` with dual `Θ(0)ψ_F(0)`.
    pub fn initial_pair(&self) -> StatePair {
        let (omega, inv) = self.map.map_and_inverse(0.0).unwrap();
        let ket = &inv * &self.psi0;
        StatePair::from_metric(ket, &(omega.adjoint() * &omega)).unwrap()
    }

    pub fn physical(&self, grid: &TimeGrid) -> Trajectory {
        propagate_p(|t| Ok(self.h(t)), &self.psi0, grid, &EvolutionOptions::default()).unwrap()
    }

    pub fn ths(&self, grid: &TimeGrid) -> Trajectory {
        propagate_ths(
            |t| self.generator(t),
            &self.initial_pair(),
            grid,
            &EvolutionOptions::default(),
        )
        .unwrap()
    }

    /// `max_k ‖Ω(t_k)ψ_F(t_k) − ψ_P(t_k)‖`.
    pub fn equivalence_error(&self, grid: &TimeGrid) -> f64 {
        let p = self.physical(grid);
        let f = self.ths(grid);
        f.times
            .iter()
            .zip(f.kets.iter().zip(&p.kets))
            .map(|(&t, (kf, kp))| (self.map.evaluate_map(t) * kf - kp).norm())
            .fold(0.0, f64::max)
    }
}

/// Real coordinates of a Hermitian matrix in the basis
/// `{Eᵢᵢ} ∪ {Eᵢⱼ + Eⱼᵢ} ∪ {i(Eᵢⱼ − Eⱼᵢ)}`, `i < j`.
pub fn hermitian_coords(theta: &CMatrix) -> Vec<f64> {
    let n = theta.nrows();
    let mut c: Vec<f64> = (0..n).map(|i| theta[(i, i)].re).collect();
    for i in 0..n {
        for j in i + 1..n {
            c.push(theta[(i, j)].re);
            c.push(theta[(i, j)].im);
        }
    }
    c
}

fn hermitian_basis(n: usize) -> Vec<CMatrix> {
    let mut basis = Vec::new();
    for i in 0..n {
        let mut e = CMatrix::zeros(n, n);
        e[(i, i)] = C64::new(1.0, 0.0);
        basis.push(e);
    }
    for i in 0..n {
        for j in i + 1..n {
            let mut s = CMatrix::zeros(n, n);
            s[(i, j)] = C64::new(1.0, 0.0);
            s[(j, i)] = C64::new(1.0, 0.0);
            basis.push(s);
            let mut a = CMatrix::zeros(n, n);
            a[(i, j)] = C64::new(0.0, 1.0);
            a[(j, i)] = C64::new(0.0, -1.0);
            basis.push(a);
        }
    }
    basis
}

/// Brute-force solution space of `H†Θ − ΘH = 0` over Hermitian `Θ`: the
/// linear map is written as a real `2N² × N²` matrix and its null space is
/// read off an SVD. Returns an orthonormal basis, one coordinate vector per
/// row (coordinates as in [`hermitian_coords`]).
pub fn dieudonne_null_space(h: &CMatrix) -> nalgebra::DMatrix<f64> {
    let n = h.nrows();
    let basis = hermitian_basis(n);
    let cols: Vec<Vec<f64>> = basis
        .iter()
        .map(|b| {
            let image = h.adjoint() * b - b * h;
            image.iter().flat_map(|z| [z.re, z.im]).collect()
        })
        .collect();
    let m = nalgebra::DMatrix::from_fn(2 * n * n, n * n, |r, c| cols[c][r]);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let smax = svd.singular_values.max();
    let rows: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] <= 1e-10 * smax.max(1.0))
        .collect();
    nalgebra::DMatrix::from_fn(rows.len(), n * n, |r, c| v_t[(rows[r], c)])
}

/// `‖c − P c‖ / ‖c‖` for the orthogonal projector `P` onto the row space of `basis`.
pub fn projection_residual(basis: &nalgebra::DMatrix<f64>, c: &[f64]) -> f64 {
    let c = nalgebra::DVector::from_column_slice(c);
    let proj = basis.transpose() * (basis * &c);
    (&c - proj).norm() / c.norm()
}
