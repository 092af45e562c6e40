//! Scenario files.
//!
//! A scenario is a TOML document; see `docs/config.md` for the full grammar.
//! Complex numbers are written as `[re, im]` pairs, matrices as arrays of rows.
//! Parsing resolves every name reference and checks dimensions eagerly, so a
//! [`Scenario`] that exists is runnable.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

use crate::control::{SystemKind, DEFAULT_CONDITIONS_TOL};
use crate::dyson::{DysonMap, OperatorSeries, TimeFunction, DEFAULT_COND_MAX};
use crate::evolution::{TimeGrid, DEFAULT_HERMITIAN_TOL, DEFAULT_NORM_TOL};
use crate::field::{ControlField, DEFAULT_U_MAX};
use crate::linalg::{hermitian_residual, CMatrix, CVector, C64};
use crate::linalg::{DEFAULT_MAX_DIM, DEFAULT_TOL_DEGENERACY, DEFAULT_TOL_EIG, DEFAULT_TOL_PD};
use crate::metric::DEFAULT_TOL_REAL;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("ParseError: {}{message}", fmt_line(*line))]
    Parse { line: Option<usize>, message: String },
    #[error("ValidationError: {}{message}", fmt_line(*line))]
    Validation { line: Option<usize>, message: String },
}

fn fmt_line(line: Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

impl ConfigError {
    pub fn name(&self) -> &'static str {
        match self {
            ConfigError::Parse { .. } => "ParseError",
            ConfigError::Validation { .. } => "ValidationError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    EvolveP,
    EvolveF,
    EvolveThs,
    EvolveMetric,
    SolveMetric,
    ControlOptimize,
    Verify,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::EvolveP => "evolve-p",
            Mode::EvolveF => "evolve-f",
            Mode::EvolveThs => "evolve-ths",
            Mode::EvolveMetric => "evolve-metric",
            Mode::SolveMetric => "solve-metric",
            Mode::ControlOptimize => "control-optimize",
            Mode::Verify => "verify",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A coefficient function in a series term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FunctionSpec {
    Constant {
        value: f64,
    },
    Polynomial {
        coeffs: Vec<f64>,
    },
    Exp {
        #[serde(default = "one")]
        amplitude: f64,
        rate: f64,
    },
    Sin {
        #[serde(default = "one")]
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    Cos {
        #[serde(default = "one")]
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Piecewise constant, taken from `[fields.<name>]`.
    Field {
        name: String,
    },
}

fn one() -> f64 {
    1.0
}

fn none<T>() -> Option<T> {
    None
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec<R> {
    pub matrix: R,
    pub function: FunctionSpec,
    #[serde(default, skip_serializing_if = "is_false")]
    pub numeric_derivative: bool,
}

/// `base + Σ f(t)·matrix`, by matrix name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSpec<R> {
    pub base: R,
    #[serde(default = "Vec::new", skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<TermSpec<R>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSpec<R> {
    pub initial: R,
    #[serde(default = "none", skip_serializing_if = "Option::is_none")]
    pub dual: Option<R>,
    #[serde(default = "none", skip_serializing_if = "Option::is_none")]
    pub metric: Option<R>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSpec<R> {
    pub operator: R,
    #[serde(default = "none", skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySpec<R> {
    pub theta1: R,
    pub w: R,
    #[serde(default = "one")]
    pub v0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindSpec {
    Hermitian,
    Generator,
    Observable,
}

impl From<KindSpec> for SystemKind {
    fn from(k: KindSpec) -> Self {
        match k {
            KindSpec::Hermitian => SystemKind::Hermitian,
            KindSpec::Generator => SystemKind::Generator,
            KindSpec::Observable => SystemKind::Observable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec<R> {
    #[serde(default = "default_kind")]
    pub kind: KindSpec,
    pub drift: R,
    pub controls: Vec<R>,
    pub fields: Vec<R>,
    #[serde(default = "Vec::new", skip_serializing_if = "Vec::is_empty")]
    pub fixed: Vec<R>,
    pub initial: R,
    pub target: R,
    /// Observable kind: the common metric the operators are checked against.
    #[serde(default = "none", skip_serializing_if = "Option::is_none")]
    pub theta1: Option<R>,
    #[serde(default = "none", skip_serializing_if = "Option::is_none")]
    pub toy: Option<ToySpec<R>>,
    #[serde(default = "none", skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default = "none", skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default = "none", skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
    #[serde(default = "none", skip_serializing_if = "Option::is_none")]
    pub stop_tol: Option<f64>,
}

fn default_kind() -> KindSpec {
    KindSpec::Hermitian
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub norm_tol: f64,
    pub tol_eig: f64,
    pub tol_pd: f64,
    pub tol_real: f64,
    pub tol_degeneracy: f64,
    pub cond_max: f64,
    pub hermitian_tol: f64,
    pub conditions_tol: f64,
    /// Verify mode: bound on `‖Ωψ_F − ψ_P‖`.
    pub equivalence_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            norm_tol: DEFAULT_NORM_TOL,
            tol_eig: DEFAULT_TOL_EIG,
            tol_pd: DEFAULT_TOL_PD,
            tol_real: DEFAULT_TOL_REAL,
            tol_degeneracy: DEFAULT_TOL_DEGENERACY,
            cond_max: DEFAULT_COND_MAX,
            hermitian_tol: DEFAULT_HERMITIAN_TOL,
            conditions_tol: DEFAULT_CONDITIONS_TOL,
            equivalence_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    #[serde(default)]
    t_start: f64,
    t_end: f64,
    steps: usize,
    samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldSpec {
    #[serde(default = "none", skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
    #[serde(default = "none", skip_serializing_if = "Option::is_none")]
    amplitudes: Option<Vec<f64>>,
    #[serde(default = "none", skip_serializing_if = "Option::is_none")]
    intervals: Option<usize>,
    #[serde(default = "none", skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    /// Uniform random amplitudes in `[-random, random]`, seeded.
    #[serde(default = "none", skip_serializing_if = "Option::is_none")]
    random: Option<f64>,
    #[serde(default = "none", skip_serializing_if = "Option::is_none")]
    u_max: Option<f64>,
}

type Name = Spanned<String>;
type MatrixLiteral = Vec<Vec<[f64; 2]>>;
type VectorLiteral = Vec<[f64; 2]>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    mode: Mode,
    #[serde(default = "one")]
    hbar: f64,
    grid: Spanned<GridSpec>,
    #[serde(default)]
    tolerances: Tolerances,
    #[serde(default)]
    matrices: BTreeMap<String, Spanned<MatrixLiteral>>,
    #[serde(default)]
    states: BTreeMap<String, Spanned<VectorLiteral>>,
    #[serde(default)]
    fields: BTreeMap<String, Spanned<FieldSpec>>,
    hamiltonian: Option<Spanned<SeriesSpec<Name>>>,
    generator: Option<Spanned<SeriesSpec<Name>>>,
    map: Option<Spanned<SeriesSpec<Name>>>,
    evolve: Option<Spanned<EvolveSpec<Name>>>,
    solve: Option<Spanned<SolveSpec<Name>>>,
    control: Option<Spanned<ControlSpec<Name>>>,
}

/// A validated scenario with every reference resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    pub hbar: f64,
    pub grid: TimeGrid,
    pub tolerances: Tolerances,
    pub matrices: BTreeMap<String, CMatrix>,
    pub states: BTreeMap<String, CVector>,
    pub fields: BTreeMap<String, ControlField>,
    pub hamiltonian: Option<SeriesSpec<String>>,
    pub generator: Option<SeriesSpec<String>>,
    pub map: Option<SeriesSpec<String>>,
    pub evolve: Option<EvolveSpec<String>>,
    pub solve: Option<SolveSpec<String>>,
    pub control: Option<ControlSpec<String>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Seed for fields declared with `random = <scale>`.
    pub seed: u64,
}

pub fn parse_config(text: &str) -> Result<Scenario, ConfigError> {
    parse_config_with(text, &ParseOptions::default())
}

pub fn parse_config_with(text: &str, opts: &ParseOptions) -> Result<Scenario, ConfigError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    Resolver { text, raw: &raw, opts }.resolve()
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

struct Resolver<'a> {
    text: &'a str,
    raw: &'a RawScenario,
    opts: &'a ParseOptions,
}

impl Resolver<'_> {
    fn err<T>(&self, at: &Spanned<T>, message: impl Into<String>) -> ConfigError {
        ConfigError::Validation {
            line: Some(line_of(self.text, at.span().start)),
            message: message.into(),
        }
    }

    fn resolve(&self) -> Result<Scenario, ConfigError> {
        let raw = self.raw;
        if !(raw.hbar > 0.0 && raw.hbar.is_finite()) {
            return Err(ConfigError::Validation {
                line: None,
                message: format!("hbar must be positive, got {}", raw.hbar),
            });
        }
        let g = raw.grid.get_ref();
        let grid =
            TimeGrid::span(g.t_start, g.t_end, g.steps, g.samples).map_err(|e| self.err(&raw.grid, e.to_string()))?;

        let mut dim: Option<(usize, String)> = None;
        let mut check_dim = |n: usize, what: &str, at: &dyn Fn(String) -> ConfigError| match &dim {
            None => {
                dim = Some((n, what.to_string()));
                Ok(())
            }
            Some((m, first)) if *m != n => Err(at(format!("{what} has dimension {n}, but {first} has dimension {m}"))),
            _ => Ok(()),
        };

        let mut matrices = BTreeMap::new();
        for (name, lit) in &raw.matrices {
            let m =
                matrix_from_literal(lit.get_ref()).map_err(|msg| self.err(lit, format!("matrix '{name}': {msg}")))?;
            if m.nrows() > DEFAULT_MAX_DIM {
                return Err(self.err(
                    lit,
                    format!("matrix '{name}' exceeds the maximum dimension {DEFAULT_MAX_DIM}"),
                ));
            }
            check_dim(m.nrows(), &format!("matrix '{name}'"), &|msg| self.err(lit, msg))?;
            matrices.insert(name.clone(), m);
        }
        let mut states = BTreeMap::new();
        for (name, lit) in &raw.states {
            let v =
                vector_from_literal(lit.get_ref()).map_err(|msg| self.err(lit, format!("state '{name}': {msg}")))?;
            check_dim(v.len(), &format!("state '{name}'"), &|msg| self.err(lit, msg))?;
            states.insert(name.clone(), v);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        let mut fields = BTreeMap::new();
        for (name, spec) in &raw.fields {
            let f = self
                .field(spec.get_ref(), grid.t_end, &mut rng)
                .map_err(|msg| self.err(spec, format!("field '{name}': {msg}")))?;
            fields.insert(name.clone(), f);
        }

        let scenario = Scenario {
            name: raw.name.clone(),
            mode: raw.mode,
            hbar: raw.hbar,
            grid,
            tolerances: raw.tolerances,
            hamiltonian: raw
                .hamiltonian
                .as_ref()
                .map(|s| self.series(s, &matrices, &fields))
                .transpose()?,
            generator: raw
                .generator
                .as_ref()
                .map(|s| self.series(s, &matrices, &fields))
                .transpose()?,
            map: raw
                .map
                .as_ref()
                .map(|s| self.series(s, &matrices, &fields))
                .transpose()?,
            evolve: raw
                .evolve
                .as_ref()
                .map(|s| self.evolve(s, &matrices, &states))
                .transpose()?,
            solve: raw.solve.as_ref().map(|s| self.solve(s, &matrices)).transpose()?,
            control: raw
                .control
                .as_ref()
                .map(|s| self.control(s, &matrices, &states, &fields))
                .transpose()?,
            matrices,
            states,
            fields,
        };
        self.check_mode(&scenario)?;
        Ok(scenario)
    }

    fn field(&self, spec: &FieldSpec, default_horizon: f64, rng: &mut ChaCha8Rng) -> Result<ControlField, String> {
        let horizon = spec.horizon.unwrap_or(default_horizon);
        let u_max = spec.u_max.unwrap_or(DEFAULT_U_MAX);
        let amplitudes = match (&spec.amplitudes, spec.intervals) {
            (Some(a), None) => {
                if spec.value.is_some() || spec.random.is_some() {
                    return Err("'amplitudes' excludes 'value' and 'random'".into());
                }
                a.clone()
            }
            (None, Some(m)) => match (spec.value, spec.random) {
                (Some(_), Some(_)) => return Err("give either 'value' or 'random', not both".into()),
                (_, Some(scale)) => (0..m).map(|_| rng.random_range(-1.0..=1.0) * scale).collect(),
                (v, None) => vec![v.unwrap_or(0.0); m],
            },
            (Some(_), Some(_)) => return Err("give either 'amplitudes' or 'intervals', not both".into()),
            (None, None) => return Err("needs 'amplitudes' or 'intervals'".into()),
        };
        ControlField::with_bound(horizon, amplitudes, u_max).map_err(|e| e.to_string())
    }

    fn name_in<T>(&self, name: &Name, table: &BTreeMap<String, T>, what: &str) -> Result<String, ConfigError> {
        if table.contains_key(name.get_ref()) {
            Ok(name.get_ref().clone())
        } else {
            Err(self.err(name, format!("unknown {what} '{}'", name.get_ref())))
        }
    }

    fn series(
        &self,
        spec: &Spanned<SeriesSpec<Name>>,
        matrices: &BTreeMap<String, CMatrix>,
        fields: &BTreeMap<String, ControlField>,
    ) -> Result<SeriesSpec<String>, ConfigError> {
        let s = spec.get_ref();
        let base = self.name_in(&s.base, matrices, "matrix")?;
        let mut terms = Vec::new();
        for term in &s.terms {
            let matrix = self.name_in(&term.matrix, matrices, "matrix")?;
            if let FunctionSpec::Field { name } = &term.function {
                if !fields.contains_key(name) {
                    return Err(self.err(&term.matrix, format!("unknown field '{name}'")));
                }
            }
            if let FunctionSpec::Polynomial { coeffs } = &term.function {
                if coeffs.is_empty() {
                    return Err(self.err(&term.matrix, "polynomial needs at least one coefficient"));
                }
            }
            terms.push(TermSpec {
                matrix,
                function: term.function.clone(),
                numeric_derivative: term.numeric_derivative,
            });
        }
        Ok(SeriesSpec { base, terms })
    }

    fn evolve(
        &self,
        spec: &Spanned<EvolveSpec<Name>>,
        matrices: &BTreeMap<String, CMatrix>,
        states: &BTreeMap<String, CVector>,
    ) -> Result<EvolveSpec<String>, ConfigError> {
        let s = spec.get_ref();
        Ok(EvolveSpec {
            initial: self.name_in(&s.initial, states, "state")?,
            dual: s.dual.as_ref().map(|n| self.name_in(n, states, "state")).transpose()?,
            metric: s
                .metric
                .as_ref()
                .map(|n| self.name_in(n, matrices, "matrix"))
                .transpose()?,
        })
    }

    fn solve(
        &self,
        spec: &Spanned<SolveSpec<Name>>,
        matrices: &BTreeMap<String, CMatrix>,
    ) -> Result<SolveSpec<String>, ConfigError> {
        let s = spec.get_ref();
        let operator = self.name_in(&s.operator, matrices, "matrix")?;
        if let Some(w) = &s.weights {
            let n = matrices[&operator].nrows();
            if w.len() != n {
                return Err(self.err(spec, format!("{} weights given for dimension {n}", w.len())));
            }
            if w.iter().any(|x| !(*x > 0.0)) {
                return Err(self.err(spec, "metric weights must be positive"));
            }
        }
        Ok(SolveSpec {
            operator,
            weights: s.weights.clone(),
        })
    }

    fn control(
        &self,
        spec: &Spanned<ControlSpec<Name>>,
        matrices: &BTreeMap<String, CMatrix>,
        states: &BTreeMap<String, CVector>,
        fields: &BTreeMap<String, ControlField>,
    ) -> Result<ControlSpec<String>, ConfigError> {
        let s = spec.get_ref();
        let controls = s
            .controls
            .iter()
            .map(|n| self.name_in(n, matrices, "matrix"))
            .collect::<Result<Vec<_>, _>>()?;
        let field_names = s
            .fields
            .iter()
            .map(|n| self.name_in(n, fields, "field"))
            .collect::<Result<Vec<_>, _>>()?;
        let fixed = s
            .fixed
            .iter()
            .map(|n| {
                let name = self.name_in(n, fields, "field")?;
                if field_names.contains(&name) {
                    Ok(name)
                } else {
                    Err(self.err(n, format!("fixed field '{name}' is not listed in 'fields'")))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        if controls.len() != field_names.len() {
            return Err(self.err(
                spec,
                format!("{} control operators but {} fields", controls.len(), field_names.len()),
            ));
        }
        let horizon = self.raw.grid.get_ref().t_end;
        for name in &field_names {
            let h = fields[name].horizon();
            if (h - horizon).abs() > 1e-12 * horizon {
                return Err(self.err(spec, format!("field '{name}' has horizon {h}, grid ends at {horizon}")));
            }
        }
        let toy = match &s.toy {
            Some(t) => {
                if s.kind != KindSpec::Generator && s.kind != KindSpec::Hermitian {
                    return Err(self.err(spec, "the toy model builds a generator-kind system"));
                }
                if controls.len() != 1 {
                    return Err(self.err(spec, "the toy model takes exactly one control operator (H1)"));
                }
                let w = self.name_in(&t.w, fields, "field")?;
                let h = fields[&w].horizon();
                if (h - horizon).abs() > 1e-12 * horizon {
                    return Err(self.err(&t.w, format!("field '{w}' has horizon {h}, grid ends at {horizon}")));
                }
                Some(ToySpec {
                    theta1: self.name_in(&t.theta1, matrices, "matrix")?,
                    w,
                    v0: t.v0,
                })
            }
            None => None,
        };
        let kind = if toy.is_some() { KindSpec::Generator } else { s.kind };
        let drift = self.name_in(&s.drift, matrices, "matrix")?;
        if kind == KindSpec::Hermitian {
            for name in std::iter::once(&drift).chain(&controls) {
                let m = &matrices[name];
                if hermitian_residual(m) > self.raw.tolerances.hermitian_tol * m.norm() {
                    return Err(self.err(
                        spec,
                        format!("matrix '{name}' is not Hermitian but kind = \"hermitian\""),
                    ));
                }
            }
        }
        let theta1 = s
            .theta1
            .as_ref()
            .map(|n| self.name_in(n, matrices, "matrix"))
            .transpose()?;
        if kind == KindSpec::Observable && theta1.is_none() {
            return Err(self.err(spec, "kind = \"observable\" needs 'theta1'"));
        }
        if kind == KindSpec::Observable && self.raw.map.is_none() {
            return Err(self.err(spec, "kind = \"observable\" needs a [map] section"));
        }
        Ok(ControlSpec {
            kind,
            drift,
            controls,
            fields: field_names,
            fixed,
            initial: self.name_in(&s.initial, states, "state")?,
            target: self.name_in(&s.target, states, "state")?,
            theta1,
            toy,
            max_iters: s.max_iters,
            learning_rate: s.learning_rate,
            fd_step: s.fd_step,
            stop_tol: s.stop_tol,
        })
    }

    fn check_mode(&self, s: &Scenario) -> Result<(), ConfigError> {
        let missing = |section: &str| ConfigError::Validation {
            line: None,
            message: format!("mode '{}' needs a [{section}] section", s.mode),
        };
        let raw = self.raw;
        match s.mode {
            Mode::EvolveP | Mode::Verify => {
                let h = s.hamiltonian.as_ref().ok_or_else(|| missing("hamiltonian"))?;
                s.evolve.as_ref().ok_or_else(|| missing("evolve"))?;
                let at = raw.hamiltonian.as_ref().unwrap();
                for name in h.matrix_names() {
                    let m = &s.matrices[name];
                    if hermitian_residual(m) > s.tolerances.hermitian_tol * m.norm() {
                        return Err(self.err(at, format!("matrix '{name}' in [hamiltonian] is not Hermitian")));
                    }
                }
                if s.mode == Mode::Verify && s.map.is_none() {
                    return Err(missing("map"));
                }
            }
            Mode::EvolveF => {
                let h = s.hamiltonian.as_ref().ok_or_else(|| missing("hamiltonian"))?;
                s.evolve.as_ref().ok_or_else(|| missing("evolve"))?;
                if h.terms
                    .iter()
                    .any(|t| !matches!(t.function, FunctionSpec::Constant { .. }))
                {
                    return Err(self.err(
                        raw.hamiltonian.as_ref().unwrap(),
                        "mode 'evolve-f' needs a time-independent [hamiltonian]",
                    ));
                }
            }
            Mode::EvolveThs | Mode::EvolveMetric => {
                s.evolve.as_ref().ok_or_else(|| missing("evolve"))?;
                if s.generator.is_none() && (s.hamiltonian.is_none() || s.map.is_none()) {
                    return Err(ConfigError::Validation {
                        line: None,
                        message: format!(
                            "mode '{}' needs [generator], or [hamiltonian] together with [map]",
                            s.mode
                        ),
                    });
                }
                if s.mode == Mode::EvolveMetric {
                    let e = s.evolve.as_ref().unwrap();
                    if e.metric.is_none() && s.map.is_none() {
                        return Err(ConfigError::Validation {
                            line: None,
                            message: "mode 'evolve-metric' needs evolve.metric or a [map]".into(),
                        });
                    }
                }
            }
            Mode::SolveMetric => {
                s.solve.as_ref().ok_or_else(|| missing("solve"))?;
            }
            Mode::ControlOptimize => {
                s.control.as_ref().ok_or_else(|| missing("control"))?;
                if s.grid.t_start != 0.0 {
                    return Err(self.err(&raw.grid, "control grids must start at t_start = 0"));
                }
            }
        }
        Ok(())
    }
}

impl SeriesSpec<String> {
    pub fn matrix_names(&self) -> impl Iterator<Item = &String> {
        std::iter::once(&self.base).chain(self.terms.iter().map(|t| &t.matrix))
    }
}

fn matrix_from_literal(lit: &MatrixLiteral) -> Result<CMatrix, String> {
    let n = lit.len();
    if n == 0 {
        return Err("empty matrix".into());
    }
    if let Some((i, row)) = lit.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(format!(
            "row {i} has {} entries, expected {n} (matrices must be square)",
            row.len()
        ));
    }
    let m = CMatrix::from_fn(n, n, |i, j| C64::new(lit[i][j][0], lit[i][j][1]));
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err("non-finite entry".into());
    }
    Ok(m)
}

fn vector_from_literal(lit: &VectorLiteral) -> Result<CVector, String> {
    if lit.is_empty() {
        return Err("empty state".into());
    }
    let v = CVector::from_iterator(lit.len(), lit.iter().map(|z| C64::new(z[0], z[1])));
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err("non-finite entry".into());
    }
    Ok(v)
}

fn matrix_literal(m: &CMatrix) -> MatrixLiteral {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// Serializable mirror of [`Scenario`].
#[derive(Serialize)]
struct ScenarioOut<'a> {
    name: &'a str,
    mode: Mode,
    hbar: f64,
    grid: GridSpec,
    tolerances: Tolerances,
    matrices: BTreeMap<&'a str, MatrixLiteral>,
    states: BTreeMap<&'a str, VectorLiteral>,
    fields: BTreeMap<&'a str, FieldSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hamiltonian: Option<&'a SeriesSpec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    generator: Option<&'a SeriesSpec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    map: Option<&'a SeriesSpec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    evolve: Option<&'a EvolveSpec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solve: Option<&'a SolveSpec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    control: Option<&'a ControlSpec<String>>,
}

impl Scenario {
    /// Dimension shared by every matrix and state.
    pub fn dim(&self) -> usize {
        self.matrices
            .values()
            .next()
            .map(|m| m.nrows())
            .or_else(|| self.states.values().next().map(|v| v.len()))
            .unwrap_or(0)
    }

    pub fn to_toml(&self) -> String {
        let out = ScenarioOut {
            name: &self.name,
            mode: self.mode,
            hbar: self.hbar,
            grid: GridSpec {
                t_start: self.grid.t_start,
                t_end: self.grid.t_end,
                steps: self.grid.steps,
                samples: self.grid.samples,
            },
            tolerances: self.tolerances,
            matrices: self
                .matrices
                .iter()
                .map(|(k, m)| (k.as_str(), matrix_literal(m)))
                .collect(),
            states: self
                .states
                .iter()
                .map(|(k, v)| (k.as_str(), v.iter().map(|z| [z.re, z.im]).collect()))
                .collect(),
            fields: self
                .fields
                .iter()
                .map(|(k, f)| {
                    (
                        k.as_str(),
                        FieldSpec {
                            horizon: Some(f.horizon()),
                            amplitudes: Some(f.amplitudes().to_vec()),
                            intervals: None,
                            value: None,
                            random: None,
                            u_max: Some(f.u_max()),
                        },
                    )
                })
                .collect(),
            hamiltonian: self.hamiltonian.as_ref(),
            generator: self.generator.as_ref(),
            map: self.map.as_ref(),
            evolve: self.evolve.as_ref(),
            solve: self.solve.as_ref(),
            control: self.control.as_ref(),
        };
        toml::to_string(&out).expect("scenario serializes")
    }

    pub fn time_function(&self, spec: &FunctionSpec, numeric: bool) -> TimeFunction {
        let f = match spec {
            FunctionSpec::Constant { value } => TimeFunction::Constant(*value),
            FunctionSpec::Polynomial { coeffs } => TimeFunction::Polynomial(coeffs.clone()),
            FunctionSpec::Exp { amplitude, rate } => TimeFunction::Exp {
                amplitude: *amplitude,
                rate: *rate,
            },
            FunctionSpec::Sin {
                amplitude,
                omega,
                phase,
            } => TimeFunction::Sin {
                amplitude: *amplitude,
                omega: *omega,
                phase: *phase,
            },
            FunctionSpec::Cos {
                amplitude,
                omega,
                phase,
            } => TimeFunction::Cos {
                amplitude: *amplitude,
                omega: *omega,
                phase: *phase,
            },
            FunctionSpec::Field { name } => TimeFunction::Piecewise(self.fields[name].clone()),
        };
        if numeric {
            f.numeric(TimeFunction::default_fd_step(self.grid.t_end))
        } else {
            f
        }
    }

    pub fn series(&self, spec: &SeriesSpec<String>) -> OperatorSeries {
        let mut series = OperatorSeries::new(self.matrices[&spec.base].clone()).expect("validated base");
        for term in &spec.terms {
            series
                .push_term(
                    self.time_function(&term.function, term.numeric_derivative),
                    self.matrices[&term.matrix].clone(),
                )
                .expect("validated term");
        }
        series
    }

    pub fn dyson_map(&self) -> Option<DysonMap> {
        self.map.as_ref().map(|spec| {
            DysonMap::new(self.series(spec))
                .with_cond_max(self.tolerances.cond_max)
                .with_hbar(self.hbar)
        })
    }
}
