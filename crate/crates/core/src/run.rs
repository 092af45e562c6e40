//! Executes a [`Scenario`] and writes its outputs.
//!
//! Every run writes `<name>.csv` into the output directory. Its columns are
//! `t`, the real and imaginary parts of each ket component, the same for the
//! dual ket when one is propagated, and the S-norm. Mode-specific files sit
//! next to it.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, Mode, Scenario};
use crate::control::{build_toy_model, optimize, BilinearSystem, ControlProblem, OptimizerSettings, SystemKind};
use crate::dyson::DysonMap;
use crate::error::{Result, ThsError};
use crate::evolution::{
    norm_drift, propagate_f, propagate_metric, propagate_p, propagate_ths, EvolutionOptions, StatePair, Trajectory,
};
use crate::linalg::{min_herm_eigenvalue, CMatrix, EigOptions};
use crate::metric::{solve_metric, MetricOptions};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("IoError: {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Numerical(#[from] ThsError),
}

impl RunError {
    pub fn name(&self) -> &'static str {
        match self {
            RunError::Config(e) => e.name(),
            RunError::Io { .. } => "IoError",
            RunError::Numerical(e) => e.name(),
        }
    }

    /// 1 for configuration and I/O problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Io { .. } => 1,
            RunError::Numerical(_) => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
}

/// Outcome of a successful run: headline quantities and the files written.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub name: String,
    pub mode: Mode,
    pub dim: usize,
    pub values: Vec<(String, f64)>,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    fn new(s: &Scenario) -> Self {
        Self {
            name: s.name.clone(),
            mode: s.mode,
            dim: s.dim(),
            values: Vec::new(),
            files: Vec::new(),
        }
    }

    fn push(&mut self, key: &str, value: f64) {
        self.values.push((key.to_string(), value));
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// Deterministic `key=value` line.
    pub fn summary_line(&self) -> String {
        let mut line = format!("name={} mode={} n={} status=ok", self.name, self.mode, self.dim);
        for (k, v) in &self.values {
            line.push_str(&format!(" {k}={v:e}"));
        }
        line
    }
}

/// `key=value` line for a failed run.
pub fn failure_line(name: &str, mode: Option<Mode>, err: &RunError) -> String {
    let mode = mode.map(|m| m.as_str()).unwrap_or("unknown");
    format!("name={name} mode={mode} status={}", err.name())
}

pub fn evolution_options(s: &Scenario) -> EvolutionOptions {
    EvolutionOptions {
        hbar: s.hbar,
        norm_tol: s.tolerances.norm_tol,
        hermitian_tol: s.tolerances.hermitian_tol,
        tol_pd: s.tolerances.tol_pd,
    }
}

pub fn run_scenario(s: &Scenario, opts: &RunOptions) -> std::result::Result<RunReport, RunError> {
    std::fs::create_dir_all(&opts.out_dir).map_err(io_err(&opts.out_dir))?;
    let mut report = RunReport::new(s);
    let main_csv = opts.out_dir.join(format!("{}.csv", s.name));
    let evo = evolution_options(s);

    match s.mode {
        Mode::EvolveP => {
            let traj = run_p(s, &evo)?;
            report.push("norm_drift", norm_drift(&traj));
            write_file(&main_csv, |w| write_trajectory(&traj, w))?;
        }
        Mode::EvolveF => {
            let h = s.series(s.hamiltonian.as_ref().expect("validated"));
            let psi0 = initial_state(s);
            let traj = propagate_f(&h.evaluate(s.grid.t_start), &psi0, &s.grid, &evo)?;
            let n0 = traj.s_norms[0];
            let n1 = *traj.s_norms.last().unwrap();
            report.push("norm_ratio", n1 / n0);
            write_file(&main_csv, |w| write_trajectory(&traj, w))?;
        }
        Mode::EvolveThs => {
            let traj = run_ths(s, &evo)?;
            report.push("norm_drift", norm_drift(&traj));
            write_file(&main_csv, |w| write_trajectory(&traj, w))?;
        }
        Mode::EvolveMetric => run_metric(s, &evo, opts, &mut report, &main_csv)?,
        Mode::SolveMetric => {
            let spec = s.solve.as_ref().expect("validated");
            let h = &s.matrices[&spec.operator];
            let weights = spec.weights.clone().unwrap_or_else(|| vec![1.0; h.nrows()]);
            let candidate = solve_metric(h, &weights, &metric_options(s))?;
            report.push("residual", candidate.residual);
            report.push("min_eig", candidate.min_eig);
            let path = opts.out_dir.join(format!("{}_theta.csv", s.name));
            write_file(&path, |w| write_matrix(&candidate.theta, w))?;
            report.files.push(path);
        }
        Mode::ControlOptimize => run_control(s, &evo, opts, &mut report, &main_csv)?,
        Mode::Verify => run_verify(s, &evo, &mut report, &main_csv)?,
    }
    report.files.insert(0, main_csv);
    Ok(report)
}

fn metric_options(s: &Scenario) -> MetricOptions {
    MetricOptions {
        eig: EigOptions {
            tol_eig: s.tolerances.tol_eig,
            tol_degeneracy: s.tolerances.tol_degeneracy,
            ..EigOptions::default()
        },
        tol_real: s.tolerances.tol_real,
    }
}

fn initial_state(s: &Scenario) -> crate::linalg::CVector {
    s.states[&s.evolve.as_ref().expect("validated").initial].clone()
}

fn run_p(s: &Scenario, evo: &EvolutionOptions) -> Result<Trajectory> {
    let h = s.series(s.hamiltonian.as_ref().expect("validated"));
    propagate_p(|t| Ok(h.evaluate(t)), &initial_state(s), &s.grid, evo)
}

type GeneratorFn = Box<dyn Fn(f64) -> Result<CMatrix> + Send + Sync>;

/// `G(t)` from `[generator]`, or built from `[hamiltonian]` and `[map]`.
fn generator(s: &Scenario) -> GeneratorFn {
    if let Some(spec) = &s.generator {
        let g = s.series(spec);
        return Box::new(move |t| Ok(g.evaluate(t)));
    }
    let h = s.series(s.hamiltonian.as_ref().expect("validated"));
    let map = s.dyson_map().expect("validated");
    Box::new(move |t| map.generator_from_physical(&h.evaluate(t), t))
}

fn initial_pair(s: &Scenario, map: Option<&DysonMap>) -> Result<StatePair> {
    let e = s.evolve.as_ref().expect("validated");
    let ket = s.states[&e.initial].clone();
    if let Some(dual) = &e.dual {
        return StatePair::new(ket, s.states[dual].clone());
    }
    if let Some(m) = &e.metric {
        return StatePair::from_metric(ket, &s.matrices[m]);
    }
    match map {
        Some(map) => StatePair::from_metric(ket, &map.metric_at(s.grid.t_start)?),
        None => Ok(StatePair::euclidean(ket)),
    }
}

fn run_ths(s: &Scenario, evo: &EvolutionOptions) -> Result<Trajectory> {
    let map = s.dyson_map();
    let pair = initial_pair(s, map.as_ref())?;
    propagate_ths(generator(s), &pair, &s.grid, evo)
}

fn run_metric(
    s: &Scenario,
    evo: &EvolutionOptions,
    opts: &RunOptions,
    report: &mut RunReport,
    main_csv: &Path,
) -> std::result::Result<(), RunError> {
    let map = s.dyson_map();
    let e = s.evolve.as_ref().expect("validated");
    let theta0 = match (&e.metric, &map) {
        (Some(m), _) => s.matrices[m].clone(),
        (None, Some(map)) => map.metric_at(s.grid.t_start)?,
        (None, None) => unreachable!("validated"),
    };
    let g = generator(s);
    let traj = propagate_metric(&g, &theta0, &s.grid, evo)?;

    // The ket under the same generator: ψ†Θ(t)ψ must stay constant.
    let pair = StatePair::from_metric(s.states[&e.initial].clone(), &theta0)?;
    let kets = propagate_ths(&g, &pair, &s.grid, evo)?;
    let s0 = pair.s_norm();
    let drift = kets
        .kets
        .iter()
        .zip(&traj.metrics)
        .map(|(k, m)| (k.dotc(&(m * k)).re - s0).abs() / s0)
        .fold(0.0, f64::max);
    report.push("norm_drift", drift);
    report.push("max_resymmetrization", traj.max_resymmetrization);
    report.push("final_min_eig", min_herm_eigenvalue(traj.metrics.last().unwrap()));
    if let Some(map) = &map {
        let mut worst = 0.0f64;
        for (t, m) in traj.times.iter().zip(&traj.metrics) {
            let exact = map.metric_at(*t)?;
            worst = worst.max((m - &exact).norm() / exact.norm());
        }
        report.push("map_metric_residual", worst);
    }

    write_file(main_csv, |w| {
        writeln!(w, "t,trace,min_eig")?;
        for (t, m) in traj.times.iter().zip(&traj.metrics) {
            writeln!(w, "{},{},{}", num(*t), num(m.trace().re), num(min_herm_eigenvalue(m)))?;
        }
        Ok(())
    })?;
    for (k, m) in traj.metrics.iter().enumerate() {
        let path = opts.out_dir.join(format!("{}_theta_{k:04}.csv", s.name));
        write_file(&path, |w| write_matrix(m, w))?;
        report.files.push(path);
    }
    Ok(())
}

fn control_problem(s: &Scenario, evo: &EvolutionOptions) -> Result<ControlProblem> {
    let c = s.control.as_ref().expect("validated");
    let m = |name: &String| s.matrices[name].clone();
    let fields: Vec<_> = c.fields.iter().map(|f| s.fields[f].clone()).collect();
    let initial = s.states[&c.initial].clone();
    let target = s.states[&c.target].clone();

    let mut problem = if let Some(toy) = &c.toy {
        let model = build_toy_model(
            &m(&c.drift),
            &m(&c.controls[0]),
            &m(&toy.theta1),
            s.fields[&toy.w].clone(),
            toy.v0,
            s.hbar,
        )?;
        model.problem(fields[0].clone(), initial, target, s.grid)?
    } else {
        let controls = c.controls.iter().map(m).collect();
        let system = match SystemKind::from(c.kind) {
            SystemKind::Observable => {
                let theta1 = m(c.theta1.as_ref().expect("validated"));
                BilinearSystem::observable(m(&c.drift), controls, &theta1, s.tolerances.conditions_tol)?
            }
            kind => BilinearSystem::new(kind, m(&c.drift), controls)?,
        };
        ControlProblem::new(system, s.dyson_map(), fields, initial, target, s.grid)?
    };
    for (k, name) in c.fields.iter().enumerate() {
        if c.fixed.contains(name) {
            problem.free[k] = false;
        }
    }
    let defaults = OptimizerSettings::default();
    problem.settings = OptimizerSettings {
        max_iters: c.max_iters.unwrap_or(defaults.max_iters),
        learning_rate: c.learning_rate.unwrap_or(defaults.learning_rate),
        fd_step: c.fd_step.unwrap_or(defaults.fd_step),
        stop_tol: c.stop_tol.unwrap_or(defaults.stop_tol),
        ..defaults
    };
    problem.evolution = *evo;
    Ok(problem)
}

fn run_control(
    s: &Scenario,
    evo: &EvolutionOptions,
    opts: &RunOptions,
    report: &mut RunReport,
    main_csv: &Path,
) -> std::result::Result<(), RunError> {
    let problem = control_problem(s, evo)?;
    let result = optimize(&problem)?;
    report.push("fidelity", result.final_fidelity);
    report.push("initial_fidelity", result.history[0]);
    report.push("iterations", (result.history.len() - 1) as f64);
    report.push("lie_rank", result.lie_rank as f64);
    report.push("norm_drift", result.s_norm_drift);

    let traj = problem.evolve(&result.fields)?;
    write_file(main_csv, |w| write_trajectory(&traj, w))?;

    let names = &s.control.as_ref().unwrap().fields;
    let fields_path = opts.out_dir.join(format!("{}_fields.csv", s.name));
    write_file(&fields_path, |w| {
        writeln!(w, "field,interval,t_start,t_end,amplitude")?;
        for (name, f) in names.iter().zip(&result.fields) {
            let b = f.boundaries();
            for (j, a) in f.amplitudes().iter().enumerate() {
                writeln!(w, "{name},{j},{},{},{}", num(b[j]), num(b[j + 1]), num(*a))?;
            }
        }
        Ok(())
    })?;
    let history_path = opts.out_dir.join(format!("{}_history.csv", s.name));
    write_file(&history_path, |w| {
        writeln!(w, "iteration,fidelity")?;
        for (k, f) in result.history.iter().enumerate() {
            writeln!(w, "{k},{}", num(*f))?;
        }
        Ok(())
    })?;
    report.files.push(fields_path);
    report.files.push(history_path);
    Ok(())
}

/// Runs the physical, THS and metric pictures side by side and checks that
/// they agree.
fn run_verify(
    s: &Scenario,
    evo: &EvolutionOptions,
    report: &mut RunReport,
    main_csv: &Path,
) -> std::result::Result<(), RunError> {
    let map = s.dyson_map().expect("validated");
    let t0 = s.grid.t_start;
    let psi_p0 = initial_state(s);
    let (omega0, omega0_inv) = map.map_and_inverse(t0)?;
    let psi_f0 = &omega0_inv * &psi_p0;
    let theta0 = omega0.adjoint() * &omega0;
    let g = generator(s);

    let (p, (ths, metric)) = rayon::join(
        || run_p(s, evo),
        || {
            rayon::join(
                || propagate_ths(&g, &StatePair::from_metric(psi_f0.clone(), &theta0)?, &s.grid, evo),
                || propagate_metric(&g, &theta0, &s.grid, evo),
            )
        },
    );
    let (p, ths, metric) = (p?, ths?, metric?);

    let scale = psi_p0.norm();
    let mut equivalence = 0.0f64;
    let mut dual_residual = 0.0f64;
    let mut metric_residual = 0.0f64;
    for (k, &t) in ths.times.iter().enumerate() {
        let omega = map.evaluate_map(t);
        let theta = map.metric_at(t)?;
        equivalence = equivalence.max((&omega * &ths.kets[k] - &p.kets[k]).norm() / scale);
        dual_residual = dual_residual.max((&ths.duals[k] - &theta * &ths.kets[k]).norm() / ths.duals[0].norm());
        metric_residual = metric_residual.max((&metric.metrics[k] - &theta).norm() / theta.norm());
    }
    let drift = norm_drift(&ths);
    report.push("equivalence", equivalence);
    report.push("dual_residual", dual_residual);
    report.push("metric_residual", metric_residual);
    report.push("norm_drift", drift);
    write_file(main_csv, |w| write_trajectory(&ths, w))?;

    let tol = s.tolerances.equivalence_tol;
    let failures: Vec<String> = [
        ("equivalence", equivalence, tol),
        ("dual_residual", dual_residual, tol),
        ("metric_residual", metric_residual, tol),
        ("norm_drift", drift, s.tolerances.norm_tol),
    ]
    .iter()
    .filter(|(_, v, lim)| !(v <= lim))
    .map(|(k, v, lim)| format!("{k} = {v:e} > {lim:e}"))
    .collect();
    if !failures.is_empty() {
        return Err(ThsError::VerificationFailed(failures.join(", ")).into());
    }
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file<F>(path: &Path, body: F) -> std::result::Result<(), RunError>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Trajectory CSV: `t`, ket components, dual components (if any), S-norm.
pub fn write_trajectory<W: Write>(traj: &Trajectory, w: &mut W) -> io::Result<()> {
    let n = traj.dim();
    let with_dual = !traj.duals.is_empty();
    let mut header = vec!["t".to_string()];
    for j in 0..n {
        header.push(format!("re_psi_{j}"));
        header.push(format!("im_psi_{j}"));
    }
    if with_dual {
        for j in 0..n {
            header.push(format!("re_dual_{j}"));
            header.push(format!("im_dual_{j}"));
        }
    }
    header.push("s_norm".into());
    writeln!(w, "{}", header.join(","))?;

    for (k, t) in traj.times.iter().enumerate() {
        let mut row = vec![num(*t)];
        let mut push = |v: &crate::linalg::CVector| {
            for z in v.iter() {
                row.push(num(z.re));
                row.push(num(z.im));
            }
        };
        push(&traj.kets[k]);
        if with_dual {
            push(&traj.duals[k]);
        }
        row.push(num(traj.s_norms[k]));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// One matrix row per line as `re_0,im_0,re_1,im_1,...`.
pub fn write_matrix<W: Write>(m: &CMatrix, w: &mut W) -> io::Result<()> {
    let header: Vec<String> = (0..m.ncols())
        .flat_map(|j| [format!("re_{j}"), format!("im_{j}")])
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .flat_map(|j| [num(m[(i, j)].re), num(m[(i, j)].im)])
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Writes the summary line to `<out_dir>/<name>.summary.log`.
pub fn write_summary(out_dir: &Path, name: &str, line: &str) -> std::result::Result<PathBuf, RunError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let path = out_dir.join(format!("{name}.summary.log"));
    std::fs::write(&path, format!("{line}\n")).map_err(io_err(&path))?;
    Ok(path)
}
