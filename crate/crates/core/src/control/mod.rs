//! Bilinear quantum control on top of the evolution layer.
//!
//! A [`BilinearSystem`] is `drift + Σₖ uₖ(t)·controlₖ` with real
//! piecewise-constant fields. Depending on its [`SystemKind`] the assembled
//! operator is a P-space Hamiltonian, an F-space observable Hamiltonian or the
//! evolution generator itself.

mod lie;
mod optimize;
mod toy;

pub use lie::lie_rank;
pub use optimize::{fidelity_gradient, optimize, OptimizationResult, OptimizerSettings};
pub use toy::{build_toy_model, ToyModel};

use crate::dyson::DysonMap;
use crate::error::{Result, ThsError};
use crate::evolution::{propagate_ths_unchecked, s_inner, EvolutionOptions, StatePair, TimeGrid, Trajectory};
use crate::field::ControlField;
use crate::linalg::{check_operator, check_vector, hermitian_residual, CMatrix, CVector, C64};
use crate::metric::elementwise_conditions;

pub const DEFAULT_KIND_TOL: f64 = 1e-10;
pub const DEFAULT_CONDITIONS_TOL: f64 = 1e-8;
/// S-norms at or below this are treated as zero.
pub const DEGENERATE_STATE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    /// P-space Hamiltonian `h(t)`; Hermitian operators required.
    Hermitian,
    /// The evolution generator `G(t)` directly; may have complex spectrum.
    Generator,
    /// F-space observable `H(t)`, quasi-Hermitian w.r.t. a common `Θ₁`.
    Observable,
}

impl SystemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SystemKind::Hermitian => "hermitian",
            SystemKind::Generator => "generator",
            SystemKind::Observable => "observable",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BilinearSystem {
    drift: CMatrix,
    controls: Vec<CMatrix>,
    kind: SystemKind,
}

impl BilinearSystem {
    /// Builds a system of kind `Hermitian` or `Generator`. Use
    /// [`BilinearSystem::observable`] for the observable kind.
    pub fn new(kind: SystemKind, drift: CMatrix, controls: Vec<CMatrix>) -> Result<Self> {
        check_operator(&drift, "drift")?;
        let n = drift.nrows();
        for op in &controls {
            check_operator(op, "control operator")?;
            if op.nrows() != n {
                return Err(ThsError::DimensionMismatch(format!(
                    "control operator is {0}x{0}, drift is {n}x{n}",
                    op.nrows()
                )));
            }
        }
        if kind == SystemKind::Hermitian {
            for (k, op) in std::iter::once(&drift).chain(&controls).enumerate() {
                let residual = hermitian_residual(op);
                let limit = DEFAULT_KIND_TOL * op.norm();
                if residual > limit {
                    return Err(ThsError::NonHermitianInput {
                        context: format!("operator {k} of a hermitian system"),
                        residual,
                        limit,
                    });
                }
            }
        }
        Ok(Self { drift, controls, kind })
    }

    /// An observable-kind system whose operators all satisfy the Dieudonné
    /// relation with `theta1` to within `tol` (relative).
    pub fn observable(drift: CMatrix, controls: Vec<CMatrix>, theta1: &CMatrix, tol: f64) -> Result<Self> {
        let mut sys = Self::new(SystemKind::Generator, drift, controls)?;
        let ops: Vec<CMatrix> = sys.operators().cloned().collect();
        let residuals = elementwise_conditions(&ops, theta1)?;
        let scale = theta1.norm() * ops.iter().map(|o| o.norm()).fold(1.0, f64::max);
        if residuals.iter().any(|&r| r > tol * scale) {
            return Err(ThsError::ConditionsViolated {
                residuals,
                tol: tol * scale,
            });
        }
        sys.kind = SystemKind::Observable;
        Ok(sys)
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn drift(&self) -> &CMatrix {
        &self.drift
    }

    pub fn controls(&self) -> &[CMatrix] {
        &self.controls
    }

    pub fn operators(&self) -> impl Iterator<Item = &CMatrix> {
        std::iter::once(&self.drift).chain(&self.controls)
    }

    /// `drift + Σₖ aₖ·controlₖ` for fixed amplitudes.
    pub fn assemble_amplitudes(&self, amplitudes: &[f64]) -> CMatrix {
        let mut out = self.drift.clone();
        for (a, op) in amplitudes.iter().zip(&self.controls) {
            out += op * C64::new(*a, 0.0);
        }
        out
    }

    fn check_fields(&self, fields: &[ControlField]) -> Result<()> {
        if fields.len() != self.controls.len() {
            return Err(ThsError::CountMismatch {
                what: "control fields".into(),
                expected: self.controls.len(),
                actual: fields.len(),
            });
        }
        if let Some(first) = fields.first() {
            if let Some(bad) = fields
                .iter()
                .find(|f| (f.horizon() - first.horizon()).abs() > 1e-12 * first.horizon())
            {
                return Err(ThsError::InvalidInput(format!(
                    "field horizons disagree: {} vs {}",
                    first.horizon(),
                    bad.horizon()
                )));
            }
        }
        Ok(())
    }
}

/// `drift + Σₖ uₖ(t)·controlₖ`.
pub fn assemble(system: &BilinearSystem, fields: &[ControlField], t: f64) -> Result<CMatrix> {
    system.check_fields(fields)?;
    let amplitudes: Vec<f64> = fields.iter().map(|f| f.value(t)).collect();
    Ok(system.assemble_amplitudes(&amplitudes))
}

/// Normalized metric-weighted overlap `|⟨⟨φ|ψ⟩|² / (⟨⟨φ|φ⟩⟨⟨ψ|ψ⟩)`.
pub fn fidelity(psi_t: &CVector, target: &CVector, theta: &CMatrix) -> Result<f64> {
    let s_target = s_inner(target, target, theta).re;
    let s_psi = s_inner(psi_t, psi_t, theta).re;
    for s in [s_target, s_psi] {
        if !(s > DEGENERATE_STATE_TOL * theta.norm()) {
            return Err(ThsError::DegenerateState { s_norm: s });
        }
    }
    Ok(s_inner(target, psi_t, theta).norm_sqr() / (s_target * s_psi))
}

/// A complete state-transfer task.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub system: BilinearSystem,
    /// Supplies `Θ(t)` (and `Σ(t)` for the hermitian/observable kinds).
    pub map: Option<DysonMap>,
    /// Initial guesses, one per control operator.
    pub fields: Vec<ControlField>,
    /// Which fields the optimizer may change.
    pub free: Vec<bool>,
    pub initial: CVector,
    pub target: CVector,
    /// Total integrator steps over `[0, T]`; `samples` is ignored since
    /// trajectories are sampled at field breakpoints.
    pub grid: TimeGrid,
    pub settings: OptimizerSettings,
    pub evolution: EvolutionOptions,
}

impl ControlProblem {
    pub fn new(
        system: BilinearSystem,
        map: Option<DysonMap>,
        fields: Vec<ControlField>,
        initial: CVector,
        target: CVector,
        grid: TimeGrid,
    ) -> Result<Self> {
        let free = vec![true; fields.len()];
        let problem = Self {
            system,
            map,
            fields,
            free,
            initial,
            target,
            grid,
            settings: OptimizerSettings::default(),
            evolution: EvolutionOptions::default(),
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.system.dim();
        self.system.check_fields(&self.fields)?;
        if self.free.len() != self.fields.len() {
            return Err(ThsError::CountMismatch {
                what: "free flags".into(),
                expected: self.fields.len(),
                actual: self.free.len(),
            });
        }
        check_vector(&self.initial, n, "initial state")?;
        check_vector(&self.target, n, "target state")?;
        self.grid.validate()?;
        if self.grid.t_start != 0.0 {
            return Err(ThsError::InvalidInput("control grids must start at t = 0".into()));
        }
        if let Some(f) = self.fields.first() {
            if (f.horizon() - self.grid.t_end).abs() > 1e-12 * self.grid.t_end {
                return Err(ThsError::InvalidInput(format!(
                    "field horizon {} differs from grid end {}",
                    f.horizon(),
                    self.grid.t_end
                )));
            }
        }
        if let Some(map) = &self.map {
            if map.dim() != n {
                return Err(ThsError::DimensionMismatch(format!(
                    "map is {0}x{0}, system is {n}x{n}",
                    map.dim()
                )));
            }
        } else if self.system.kind() == SystemKind::Observable {
            return Err(ThsError::InvalidInput(
                "observable-kind systems need a Dyson map for the metric".into(),
            ));
        }
        for (state, t) in [(&self.initial, 0.0), (&self.target, self.grid.t_end)] {
            let theta = self.metric_at(t)?;
            let s = s_inner(state, state, &theta).re;
            if !(s > DEGENERATE_STATE_TOL) {
                return Err(ThsError::DegenerateState { s_norm: s });
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.grid.t_end
    }

    pub fn metric_at(&self, t: f64) -> Result<CMatrix> {
        match &self.map {
            Some(map) => map.metric_at(t),
            None => Ok(CMatrix::identity(self.system.dim(), self.system.dim())),
        }
    }

    /// The evolution generator for fixed amplitudes at time `t`.
    pub fn generator(&self, amplitudes: &[f64], t: f64) -> Result<CMatrix> {
        let op = self.system.assemble_amplitudes(amplitudes);
        match (self.system.kind(), &self.map) {
            (SystemKind::Generator, _) | (_, None) => Ok(op),
            (SystemKind::Hermitian, Some(map)) => map.generator_from_physical(&op, t),
            (SystemKind::Observable, Some(map)) => Ok(op - map.coriolis_at(t)?),
        }
    }

    /// Sorted union of all field breakpoints on `[0, T]`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let t_end = self.horizon();
        let mut points: Vec<f64> = self.fields.iter().flat_map(|f| f.boundaries()).collect();
        points.push(0.0);
        points.push(t_end);
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        points.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * t_end);
        points
    }

    /// Propagates ket and dual ket under `fields`, one segment per interval
    /// between breakpoints so that each RK4 step sees constant amplitudes.
    pub fn evolve(&self, fields: &[ControlField]) -> Result<Trajectory> {
        self.system.check_fields(fields)?;
        let theta0 = self.metric_at(0.0)?;
        let mut pair = StatePair::from_metric(self.initial.clone(), &theta0)?;
        let points = self.breakpoints();
        let total = self.grid.steps.max(1) as f64;
        let t_end = self.horizon();

        let mut traj = Trajectory::default();
        traj.times.push(0.0);
        traj.s_norms.push(pair.s_norm());
        traj.kets.push(pair.ket.clone());
        traj.duals.push(pair.dual.clone());

        for w in points.windows(2) {
            let (ta, tb) = (w[0], w[1]);
            let mid = 0.5 * (ta + tb);
            let amplitudes: Vec<f64> = fields.iter().map(|f| f.value(mid)).collect();
            let steps = ((total * (tb - ta) / t_end).round() as usize).max(1);
            let segment = TimeGrid::span(ta, tb, steps, 2)?;
            let part = propagate_ths_unchecked(|t| self.generator(&amplitudes, t), &pair, &segment, &self.evolution)?;
            pair = part.final_pair().expect("segment has samples");
            traj.times.push(tb);
            traj.s_norms.push(pair.s_norm());
            traj.kets.push(pair.ket.clone());
            traj.duals.push(pair.dual.clone());
        }
        Ok(traj)
    }

    /// Fidelity at `T` against the target.
    pub fn final_fidelity(&self, fields: &[ControlField]) -> Result<f64> {
        let traj = self.evolve(fields)?;
        let ket = traj.final_ket().expect("trajectory has samples");
        fidelity(ket, &self.target, &self.metric_at(self.horizon())?)
    }

    /// Fidelity against the target at every breakpoint.
    pub fn fidelity_profile(&self, fields: &[ControlField]) -> Result<Vec<f64>> {
        let traj = self.evolve(fields)?;
        traj.times
            .iter()
            .zip(&traj.kets)
            .map(|(&t, ket)| fidelity(ket, &self.target, &self.metric_at(t)?))
            .collect()
    }
}
