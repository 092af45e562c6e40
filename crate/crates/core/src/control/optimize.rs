//! Gradient ascent on the final-time fidelity over piecewise-constant
//! amplitudes, with central finite-difference gradients and a backtracking
//! line search.

use log::{debug, info, warn};
use rayon::prelude::*;

use crate::control::{lie_rank, ControlProblem, SystemKind};
use crate::error::{Result, ThsError};
use crate::evolution::norm_drift;
use crate::field::ControlField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    pub max_iters: usize,
    /// Initial line-search step.
    pub learning_rate: f64,
    pub fd_step: f64,
    /// Stop when one iteration improves the fidelity by less than this.
    pub stop_tol: f64,
    pub max_backtracks: usize,
    /// Gradient max-norm below which the ascent direction counts as zero.
    pub flat_gradient_tol: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iters: 200,
            learning_rate: 1.0,
            fd_step: 1e-6,
            stop_tol: 1e-10,
            max_backtracks: 40,
            flat_gradient_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub fields: Vec<ControlField>,
    /// Fidelity after each accepted iteration; entry 0 is the initial guess.
    pub history: Vec<f64>,
    pub final_fidelity: f64,
    pub s_norm_drift: f64,
    pub lie_rank: usize,
}

/// Maps a flat parameter vector onto the free fields of a problem.
struct Layout {
    /// `(field index, amplitude index)` per parameter.
    slots: Vec<(usize, usize)>,
}

impl Layout {
    fn new(problem: &ControlProblem) -> Self {
        let slots = problem
            .fields
            .iter()
            .enumerate()
            .filter(|(k, _)| problem.free[*k])
            .flat_map(|(k, f)| (0..f.intervals()).map(move |j| (k, j)))
            .collect();
        Self { slots }
    }

    fn params(&self, fields: &[ControlField]) -> Vec<f64> {
        self.slots.iter().map(|&(k, j)| fields[k].amplitudes()[j]).collect()
    }

    fn fields(&self, base: &[ControlField], params: &[f64]) -> Vec<ControlField> {
        let mut amps: Vec<Vec<f64>> = base.iter().map(|f| f.amplitudes().to_vec()).collect();
        for (&(k, j), &p) in self.slots.iter().zip(params) {
            amps[k][j] = p;
        }
        base.iter()
            .zip(amps)
            .map(|(f, a)| f.with_amplitudes_unchecked(a))
            .collect()
    }
}

/// Central finite-difference gradient of the final fidelity with respect to
/// every free amplitude, in field order.
pub fn fidelity_gradient(problem: &ControlProblem, fields: &[ControlField]) -> Result<Vec<f64>> {
    let layout = Layout::new(problem);
    let params = layout.params(fields);
    gradient(problem, &layout, fields, &params)
}

fn gradient(problem: &ControlProblem, layout: &Layout, base: &[ControlField], params: &[f64]) -> Result<Vec<f64>> {
    let h = problem.settings.fd_step;
    (0..params.len())
        .into_par_iter()
        .map(|i| {
            let mut plus = params.to_vec();
            let mut minus = params.to_vec();
            plus[i] += h;
            minus[i] -= h;
            let f_plus = problem.final_fidelity(&layout.fields(base, &plus))?;
            let f_minus = problem.final_fidelity(&layout.fields(base, &minus))?;
            Ok((f_plus - f_minus) / (2.0 * h))
        })
        .collect()
}

pub fn optimize(problem: &ControlProblem) -> Result<OptimizationResult> {
    problem.validate()?;
    let settings = problem.settings;
    let n = problem.system.dim();
    let rank = lie_rank(&problem.system.operators().cloned().collect::<Vec<_>>());
    if problem.system.kind() == SystemKind::Hermitian && rank < n * n - 1 {
        warn!("Lie rank {rank} < {}: the system may not be controllable", n * n - 1);
    }

    let layout = Layout::new(problem);
    let base = problem.fields.clone();
    let u_max: Vec<f64> = layout.slots.iter().map(|&(k, _)| base[k].u_max()).collect();
    let mut params = layout.params(&base);
    let mut current = problem.final_fidelity(&base)?;
    let mut history = vec![current];
    let mut step = settings.learning_rate;
    info!("optimize: {} parameters, initial fidelity {current}", params.len());

    for iter in 0..settings.max_iters {
        if current >= 1.0 - settings.stop_tol || params.is_empty() {
            break;
        }
        let grad = gradient(problem, &layout, &base, &params)?;
        let gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gnorm <= settings.flat_gradient_tol {
            if iter < 10 {
                return Err(ThsError::NoImprovement {
                    fidelity: current,
                    gradient_norm: gnorm,
                });
            }
            break;
        }

        let mut accepted = None;
        for _ in 0..settings.max_backtracks {
            let candidate: Vec<f64> = params
                .iter()
                .zip(&grad)
                .zip(&u_max)
                .map(|((p, g), m)| (p + step * g).clamp(-m, *m))
                .collect();
            match problem.final_fidelity(&layout.fields(&base, &candidate)) {
                Ok(f) if f > current => {
                    accepted = Some((candidate, f));
                    break;
                }
                Ok(_) => {}
                Err(e) => debug!("line search rejected a step: {e}"),
            }
            step *= 0.5;
        }
        let Some((candidate, f)) = accepted else {
            debug!("line search exhausted at iteration {iter}");
            break;
        };
        let gain = f - current;
        params = candidate;
        current = f;
        history.push(current);
        step *= 2.0;
        debug!("iteration {iter}: fidelity {current} (gain {gain:e})");
        if gain < settings.stop_tol {
            break;
        }
    }

    let fields: Vec<ControlField> = layout
        .fields(&base, &params)
        .into_iter()
        .map(|f| {
            let amps = f.amplitudes().to_vec();
            let mut clipped = f;
            clipped.set_clipped(&amps);
            clipped
        })
        .collect();
    let traj = problem.evolve(&fields)?;
    let drift = norm_drift(&traj);
    let limit = 100.0 * problem.evolution.norm_tol;
    if drift > limit {
        return Err(ThsError::NormDrift { drift, limit });
    }
    Ok(OptimizationResult {
        fields,
        history,
        final_fidelity: current,
        s_norm_drift: drift,
        lie_rank: rank,
    })
}
