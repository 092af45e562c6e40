//! Time propagation: Hermitian P-space evolution, stationary F-space
//! evolution, the coupled ket/dual-ket system and the metric Cauchy problem.
//!
//! Every ODE is integrated with the classical fixed-step RK4 scheme. Sample
//! times are uniformly spaced and include both endpoints; the integrator steps
//! are distributed over the sample intervals as evenly as possible.

use log::debug;

use crate::error::{Result, ThsError};
use crate::linalg::{
    check_operator, check_vector, hermitian_part, hermitian_residual, is_positive_above, mat_exp, CMatrix, CVector,
    C64, DEFAULT_TOL_PD, I,
};

pub const DEFAULT_NORM_TOL: f64 = 1e-8;
pub const DEFAULT_HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub steps: usize,
    pub samples: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, steps: usize, samples: usize) -> Result<Self> {
        Self::span(0.0, t_end, steps, samples)
    }

    pub fn span(t_start: f64, t_end: f64, steps: usize, samples: usize) -> Result<Self> {
        let grid = Self {
            t_start,
            t_end,
            steps,
            samples,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.t_end > self.t_start) {
            return Err(ThsError::InvalidInput(format!(
                "grid needs t_end > t_start, got [{}, {}]",
                self.t_start, self.t_end
            )));
        }
        if self.samples < 2 {
            return Err(ThsError::InvalidInput("grid needs at least 2 samples".into()));
        }
        if self.steps + 1 < self.samples {
            return Err(ThsError::InvalidInput(format!(
                "grid has {} steps for {} samples; need steps >= samples - 1",
                self.steps, self.samples
            )));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn sample_times(&self) -> Vec<f64> {
        let last = self.samples - 1;
        (0..self.samples)
            .map(|k| {
                if k == last {
                    self.t_end
                } else {
                    self.t_start + self.duration() * k as f64 / last as f64
                }
            })
            .collect()
    }

    /// `(t_a, t_b, steps)` for each interval between consecutive samples.
    pub fn segments(&self) -> Vec<(f64, f64, usize)> {
        let times = self.sample_times();
        let intervals = self.samples - 1;
        let base = self.steps / intervals;
        let rem = self.steps % intervals;
        times
            .windows(2)
            .enumerate()
            .map(|(i, w)| (w[0], w[1], base + usize::from(i < rem)))
            .collect()
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvolutionOptions {
    pub hbar: f64,
    /// Relative S-norm (or Euclidean norm) drift tolerance.
    pub norm_tol: f64,
    /// Relative Hermiticity tolerance for P-space Hamiltonians.
    pub hermitian_tol: f64,
    pub tol_pd: f64,
}

impl Default for EvolutionOptions {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            norm_tol: DEFAULT_NORM_TOL,
            hermitian_tol: DEFAULT_HERMITIAN_TOL,
            tol_pd: DEFAULT_TOL_PD,
        }
    }
}

/// A ket and its dual ket `Θ|ψ⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePair {
    pub ket: CVector,
    pub dual: CVector,
}

impl StatePair {
    pub fn new(ket: CVector, dual: CVector) -> Result<Self> {
        check_vector(&ket, ket.len(), "ket")?;
        check_vector(&dual, ket.len(), "dual ket")?;
        Ok(Self { ket, dual })
    }

    pub fn from_metric(ket: CVector, theta: &CMatrix) -> Result<Self> {
        check_operator(theta, "metric")?;
        check_vector(&ket, theta.nrows(), "ket")?;
        let dual = theta * &ket;
        Ok(Self { ket, dual })
    }

    /// Pair for the trivial metric: the dual equals the ket.
    pub fn euclidean(ket: CVector) -> Self {
        Self { dual: ket.clone(), ket }
    }

    pub fn s_norm(&self) -> f64 {
        self.dual.dotc(&self.ket).re
    }
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub kets: Vec<CVector>,
    /// Empty unless the dual ket was co-propagated.
    pub duals: Vec<CVector>,
    /// Empty in metric mode.
    pub s_norms: Vec<f64>,
    /// Empty unless the metric was propagated.
    pub metrics: Vec<CMatrix>,
    /// Largest `‖Θ − Θ†‖_F` removed by re-symmetrization (metric mode only).
    pub max_resymmetrization: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.kets
            .first()
            .map(|k| k.len())
            .or_else(|| self.metrics.first().map(|m| m.nrows()))
            .unwrap_or(0)
    }

    pub fn final_ket(&self) -> Option<&CVector> {
        self.kets.last()
    }

    pub fn final_pair(&self) -> Option<StatePair> {
        Some(StatePair {
            ket: self.kets.last()?.clone(),
            dual: self.duals.last()?.clone(),
        })
    }
}

fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn rk4_step<F>(t: f64, dt: f64, y: &CMatrix, rhs: &mut F) -> Result<CMatrix>
where
    F: FnMut(f64, &CMatrix) -> Result<CMatrix>,
{
    let half = 0.5 * dt;
    let k1 = rhs(t, y)?;
    let k2 = rhs(t + half, &(y + &k1 * C64::new(half, 0.0)))?;
    let k3 = rhs(t + half, &(y + &k2 * C64::new(half, 0.0)))?;
    let k4 = rhs(t + dt, &(y + &k3 * C64::new(dt, 0.0)))?;
    let sum = k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4;
    Ok(y + sum * C64::new(dt / 6.0, 0.0))
}

/// Drives `rk4_step` across `grid`, calling `after_step` after every step and
/// `at_sample` at every sample time (including the start).
fn integrate<F, A, S>(grid: &TimeGrid, y0: CMatrix, mut rhs: F, mut after_step: A, mut at_sample: S) -> Result<()>
where
    F: FnMut(f64, &CMatrix) -> Result<CMatrix>,
    A: FnMut(f64, &mut CMatrix) -> Result<()>,
    S: FnMut(f64, &CMatrix) -> Result<()>,
{
    grid.validate()?;
    let mut y = y0;
    at_sample(grid.t_start, &y)?;
    for (ta, tb, n) in grid.segments() {
        let dt = (tb - ta) / n as f64;
        for i in 0..n {
            let t = ta + i as f64 * dt;
            y = rk4_step(t, dt, &y, &mut rhs)?;
            let t_next = if i + 1 == n { tb } else { t + dt };
            if !is_finite(&y) {
                return Err(ThsError::NonFiniteState { t: t_next });
            }
            after_step(t_next, &mut y)?;
        }
        at_sample(tb, &y)?;
    }
    Ok(())
}

fn column_matrix(v: &CVector) -> CMatrix {
    CMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn check_drift(traj: &Trajectory, opts: &EvolutionOptions) -> Result<f64> {
    let drift = norm_drift(traj);
    let limit = 100.0 * opts.norm_tol;
    if drift > limit {
        return Err(ThsError::NormDrift { drift, limit });
    }
    if drift > opts.norm_tol {
        log::warn!("norm drift {drift:e} exceeds tolerance {:e}", opts.norm_tol);
    }
    Ok(drift)
}

/// Solves `iħ ∂ₜψ = h(t)ψ` for Hermitian `h(t)`.
pub fn propagate_p<H>(h_of_t: H, psi0: &CVector, grid: &TimeGrid, opts: &EvolutionOptions) -> Result<Trajectory>
where
    H: Fn(f64) -> Result<CMatrix>,
{
    let scale = -I / opts.hbar;
    let dim = psi0.len();
    let rhs = |t: f64, y: &CMatrix| -> Result<CMatrix> {
        let h = h_of_t(t)?;
        check_operator(&h, "Hamiltonian")?;
        if h.nrows() != dim {
            return Err(ThsError::DimensionMismatch(format!(
                "Hamiltonian is {0}x{0}, state has length {dim}",
                h.nrows()
            )));
        }
        let residual = hermitian_residual(&h);
        let limit = opts.hermitian_tol * h.norm();
        if residual > limit {
            return Err(ThsError::NonHermitianInput {
                context: format!("h(t) at t = {t}"),
                residual,
                limit,
            });
        }
        Ok(h * y * scale)
    };

    let mut traj = Trajectory::default();
    integrate(
        grid,
        column_matrix(psi0),
        rhs,
        |_, _| Ok(()),
        |t, y| {
            let ket = CVector::from_column_slice(y.as_slice());
            traj.s_norms.push(ket.norm_squared());
            traj.kets.push(ket);
            traj.times.push(t);
            Ok(())
        },
    )?;
    check_drift(&traj, opts)?;
    Ok(traj)
}

/// Stationary F-space evolution `ψ(t) = exp(−iH(t − t₀)/ħ) ψ₀` using the
/// exact propagator at every sample. `s_norms` holds Euclidean norms, which
/// are not conserved for non-Hermitian `H`.
pub fn propagate_f(h: &CMatrix, psi0: &CVector, grid: &TimeGrid, opts: &EvolutionOptions) -> Result<Trajectory> {
    check_operator(h, "Hamiltonian")?;
    check_vector(psi0, h.nrows(), "initial state")?;
    grid.validate()?;
    let mut traj = Trajectory::default();
    for t in grid.sample_times() {
        let u = mat_exp(&(h * (-I * ((t - grid.t_start) / opts.hbar))));
        let ket = u * psi0;
        traj.times.push(t);
        traj.s_norms.push(ket.norm_squared());
        traj.kets.push(ket);
    }
    Ok(traj)
}

/// Co-integrates `iħ ∂ₜ|ψ⟩ = G|ψ⟩` and `iħ ∂ₜ|ψ⟩⟩ = G†|ψ⟩⟩`.
pub fn propagate_ths<G>(g_of_t: G, pair0: &StatePair, grid: &TimeGrid, opts: &EvolutionOptions) -> Result<Trajectory>
where
    G: Fn(f64) -> Result<CMatrix>,
{
    let traj = propagate_ths_unchecked(g_of_t, pair0, grid, opts)?;
    check_drift(&traj, opts)?;
    Ok(traj)
}

/// As [`propagate_ths`] but without the final drift check; used when the
/// caller wants to inspect the drift itself.
pub fn propagate_ths_unchecked<G>(
    g_of_t: G,
    pair0: &StatePair,
    grid: &TimeGrid,
    opts: &EvolutionOptions,
) -> Result<Trajectory>
where
    G: Fn(f64) -> Result<CMatrix>,
{
    let dim = pair0.ket.len();
    check_vector(&pair0.dual, dim, "dual ket")?;
    let s0 = pair0.s_norm();
    if !(s0 > 0.0) {
        return Err(ThsError::DegenerateState { s_norm: s0 });
    }
    let scale = -I / opts.hbar;
    let rhs = |t: f64, y: &CMatrix| -> Result<CMatrix> {
        let g = g_of_t(t)?;
        if g.nrows() != dim || g.ncols() != dim {
            return Err(ThsError::DimensionMismatch(format!(
                "generator is {}x{}, state has length {dim}",
                g.nrows(),
                g.ncols()
            )));
        }
        Ok(ths_rhs(&g, y, scale))
    };

    let mut y0 = CMatrix::zeros(dim, 2);
    y0.set_column(0, &pair0.ket);
    y0.set_column(1, &pair0.dual);

    let mut traj = Trajectory::default();
    integrate(
        grid,
        y0,
        rhs,
        |_, _| Ok(()),
        |t, y| {
            let ket = CVector::from(y.column(0));
            let dual = CVector::from(y.column(1));
            traj.s_norms.push(dual.dotc(&ket).re);
            traj.kets.push(ket);
            traj.duals.push(dual);
            traj.times.push(t);
            Ok(())
        },
    )?;
    Ok(traj)
}

/// Right-hand side of the coupled system for a state stored as the columns
/// `[ket, dual]`: `(−i/ħ)[G·ket, G†·dual]`.
pub fn ths_rhs(g: &CMatrix, y: &CMatrix, scale: C64) -> CMatrix {
    let mut out = CMatrix::zeros(y.nrows(), 2);
    out.set_column(0, &(g * y.column(0) * scale));
    out.set_column(1, &(g.adjoint() * y.column(1) * scale));
    out
}

/// Right-hand side of the metric equation `iħ ∂ₜΘ = G†Θ − ΘG`.
pub fn metric_rhs(g: &CMatrix, theta: &CMatrix, hbar: f64) -> CMatrix {
    (g.adjoint() * theta - theta * g) * (-I / hbar)
}

/// Integrates the metric Cauchy problem from `theta0`, re-symmetrizing after
/// each step.
pub fn propagate_metric<G>(g_of_t: G, theta0: &CMatrix, grid: &TimeGrid, opts: &EvolutionOptions) -> Result<Trajectory>
where
    G: Fn(f64) -> Result<CMatrix>,
{
    check_operator(theta0, "initial metric")?;
    let dim = theta0.nrows();
    let residual = hermitian_residual(theta0);
    let limit = opts.hermitian_tol * theta0.norm();
    if residual > limit {
        return Err(ThsError::NonHermitianInput {
            context: "initial metric".into(),
            residual,
            limit,
        });
    }
    if !is_positive_above(theta0, opts.tol_pd * theta0.norm()) {
        return Err(ThsError::NotPositiveDefinite {
            eigenvalue: crate::linalg::min_herm_eigenvalue(theta0),
            tol: opts.tol_pd * theta0.norm(),
        });
    }

    let hbar = opts.hbar;
    let rhs = |t: f64, theta: &CMatrix| -> Result<CMatrix> {
        let g = g_of_t(t)?;
        if g.nrows() != dim || g.ncols() != dim {
            return Err(ThsError::DimensionMismatch(format!(
                "generator is {}x{}, metric is {dim}x{dim}",
                g.nrows(),
                g.ncols()
            )));
        }
        Ok(metric_rhs(&g, theta, hbar))
    };

    let mut max_resym = 0.0f64;
    let mut traj = Trajectory::default();
    integrate(
        grid,
        hermitian_part(theta0),
        rhs,
        |t, theta| {
            let off = hermitian_residual(theta);
            max_resym = max_resym.max(off);
            *theta = hermitian_part(theta);
            let threshold = opts.tol_pd * theta.norm();
            if !is_positive_above(theta, threshold) {
                return Err(ThsError::PositivityLoss { t, threshold });
            }
            Ok(())
        },
        |t, theta| {
            traj.times.push(t);
            traj.metrics.push(theta.clone());
            Ok(())
        },
    )?;
    debug!("metric propagation: max re-symmetrization {max_resym:e}");
    traj.max_resymmetrization = max_resym;
    Ok(traj)
}

/// `⟨⟨φ|ψ⟩ = φ†Θψ`.
pub fn s_inner(phi: &CVector, psi: &CVector, theta: &CMatrix) -> C64 {
    phi.dotc(&(theta * psi))
}

/// `max_t |s(t) − s(0)| / s(0)` over the stored S-norms.
pub fn norm_drift(traj: &Trajectory) -> f64 {
    let Some(&s0) = traj.s_norms.first() else {
        return 0.0;
    };
    traj.s_norms.iter().map(|s| (s - s0).abs()).fold(0.0, f64::max) / s0
}
