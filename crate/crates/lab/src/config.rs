//! Experiment configuration (TOML) and its validation.
//!
//! Every quantity is nondimensional, so keys carry no unit suffixes.

use std::fmt;
use std::path::{Path, PathBuf};

use hemivar::fem::{Discretization, FeField};
use hemivar::geometry::build_rect_mesh;
use hemivar::laws::{
    law_linear, law_nonmonotone, law_zero, penalty_p0, penalty_p2, BoundaryLaw, DirichletDatum, PenaltyLaw,
};
use hemivar::solver::{ConstraintMode, HviProblem, InnerSolver, SolveOptions};
use hemivar::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::expr::Expr;
use crate::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Solve,
    PenaltyCurve,
    ApproxSequence,
    Control,
    MuConvergence,
    OracleCheck,
    GAxioms,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Solve => "solve",
            ExperimentKind::PenaltyCurve => "penalty_curve",
            ExperimentKind::ApproxSequence => "approx_sequence",
            ExperimentKind::Control => "control",
            ExperimentKind::MuConvergence => "mu_convergence",
            ExperimentKind::OracleCheck => "oracle_check",
            ExperimentKind::GAxioms => "g_axioms",
        }
    }

    /// Experiments that draw random numbers and therefore need a seed.
    pub fn randomized(self) -> bool {
        matches!(
            self,
            ExperimentKind::Control
                | ExperimentKind::MuConvergence
                | ExperimentKind::OracleCheck
                | ExperimentKind::GAxioms
        )
    }

    fn uses_schedule(self) -> bool {
        matches!(
            self,
            ExperimentKind::PenaltyCurve | ExperimentKind::ApproxSequence | ExperimentKind::MuConvergence
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub law: LawSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub penalty: PenaltySection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSection {
    pub alpha: f64,
    pub beta: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection {
            alpha: 1.0,
            beta: 1.0,
            nx: 16,
            ny: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    #[default]
    Zero,
    Linear,
    Nonmonotone,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LawSection {
    pub kind: LawKind,
    /// linear: `q0 r + k r^2 / 2`
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    /// nonmonotone: rising slope `a` up to `r0`, then decaying at `slope_drop`
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_drop: Option<f64>,
    /// nonmonotone alternative: pick `a = slope_drop` so that the smallness
    /// product `alpha c0_h^2 c3_h^2` equals this value on the configured mesh
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smallness_target: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Source `f(x, y)`.
    pub f: String,
    /// Dirichlet trace `phi(y) >= 0` on `x = alpha`.
    pub phi: String,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            f: "0".into(),
            phi: "0".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    #[default]
    Exact,
    PenaltyDomain,
    PenaltyGamma2,
    PenaltyFull,
}

impl From<ModeName> for ConstraintMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Exact => ConstraintMode::Exact,
            ModeName::PenaltyDomain => ConstraintMode::PenaltyDomain,
            ModeName::PenaltyGamma2 => ConstraintMode::PenaltyGamma2,
            ModeName::PenaltyFull => ConstraintMode::PenaltyFull,
        }
    }
}

/// `floor = 1e-3` or `floor = "two_mesh"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Floor {
    Value(f64),
    Named(FloorName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorName {
    TwoMesh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltySection {
    pub mode: ModeName,
    /// Constant of `p0(r) = c max(-r, 0)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0_c: Option<f64>,
    /// Constant of `p2(r) = c r`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p2_c: Option<f64>,
    pub lambda: f64,
    /// Decreasing schedule for penalty_curve, approx_sequence, mu_convergence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    /// penalty_curve: errors must decrease until they reach this floor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floor: Option<Floor>,
}

impl Default for PenaltySection {
    fn default() -> Self {
        PenaltySection {
            mode: ModeName::Exact,
            p0_c: None,
            p2_c: None,
            lambda: 1.0,
            lambdas: None,
            floor: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerName {
    #[default]
    Auto,
    Psor,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Outer stopping tolerance on the V-norm increment.
    pub tol: f64,
    pub max_outer: usize,
    pub inner: InnerName,
    pub psor_omega: f64,
    pub psor_tol: f64,
    pub psor_max_sweeps: usize,
    pub newton_max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolveOptions::default();
        SolverSection {
            tol: d.tol,
            max_outer: d.max_outer,
            inner: InnerName::Auto,
            psor_omega: 1.3,
            psor_tol: d.psor_tol,
            psor_max_sweeps: d.psor_max_sweeps,
            newton_max_iter: d.newton_max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Constant,
    #[default]
    WeakOscillation,
    StrongPerturb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceSection {
    pub rule: RuleKind,
    /// weak_oscillation: `f_n = f + amplitude sin(k_n pi x / alpha)`
    pub amplitude: f64,
    /// `k_n`; empty means `k_n = n`
    pub frequencies: Vec<f64>,
    /// strong_perturb: `f_n = f + (eps / n) g(x, y)`
    pub g: String,
    pub eps: f64,
    /// Number of terms; defaults to the schedule length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_terms: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floor: Option<Floor>,
}

impl Default for SequenceSection {
    fn default() -> Self {
        SequenceSection {
            rule: RuleKind::WeakOscillation,
            amplitude: 1.0,
            frequencies: Vec::new(),
            g: "1".into(),
            eps: 1.0,
            n_terms: None,
            floor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    pub a0: f64,
    pub a2: f64,
    /// Tracking target on `Gamma2`.
    pub phi: String,
    /// Weight `omega(mu)`; must equal 1 at `mu = 0`.
    pub omega: String,
    pub mu: f64,
    pub basis_size: usize,
    pub starts: usize,
    pub init_range: f64,
    pub initial_step: f64,
    pub ftol: f64,
    pub xtol: f64,
    pub max_evals: usize,
    pub max_restarts: usize,
    /// Inverse crime: replace `phi` by the state of the control with these
    /// coefficients.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub planted: Option<Vec<f64>>,
    /// mu_convergence schedule (paired with `penalty.lambdas`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mus: Option<Vec<f64>>,
    /// mu_convergence: also run the frozen-mu negative control.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frozen_mu: Option<f64>,
}

impl Default for ControlSection {
    fn default() -> Self {
        ControlSection {
            a0: 1e-2,
            a2: 1.0,
            phi: "0".into(),
            omega: "1 + mu".into(),
            mu: 0.0,
            basis_size: 3,
            starts: 4,
            init_range: 1.0,
            initial_step: 0.5,
            ftol: 1e-8,
            xtol: 1e-6,
            max_evals: 20_000,
            max_restarts: 5,
            planted: None,
            mus: None,
            frozen_mu: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSection {
    /// oracle_check: random instances, sources uniform in `[f_min, f_max]`,
    /// traces uniform in `[0, b_max]`
    pub instances: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub b_max: f64,
    /// oracle_check: required max-norm agreement
    pub agreement_tol: f64,
    /// g_axioms: trials per mode
    pub trials: usize,
    pub modes: Vec<ModeName>,
}

impl Default for CheckSection {
    fn default() -> Self {
        CheckSection {
            instances: 20,
            f_min: -20.0,
            f_max: 5.0,
            b_max: 2.0,
            agreement_tol: 1e-10,
            trials: 1000,
            modes: vec![ModeName::PenaltyDomain, ModeName::PenaltyGamma2, ModeName::PenaltyFull],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Also dump the mesh (nodes, triangles, boundary edges).
    pub mesh: bool,
    /// Also dump the assembled matrices in COO form.
    pub operators: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, LabError> {
        toml::from_str(text).map_err(|e| LabError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|source| LabError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Fills in the sections the experiment uses and drops the others.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        let kind = self.experiment;
        c.sequence = (kind == ExperimentKind::ApproxSequence).then(|| c.sequence.take().unwrap_or_default());
        c.control = matches!(kind, ExperimentKind::Control | ExperimentKind::MuConvergence)
            .then(|| c.control.take().unwrap_or_default());
        c.check = matches!(kind, ExperimentKind::OracleCheck | ExperimentKind::GAxioms)
            .then(|| c.check.take().unwrap_or_default());
        c
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// One finding of [`validate`], tied to a config key.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub errors: Vec<Diagnostic>,
    /// Informational lines (discrete constants, smallness product, ...).
    pub notes: Vec<String>,
    /// The configuration with all defaults filled in.
    pub resolved: String,
}

impl Diagnostics {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok() {
            writeln!(f, "ok")?;
        } else {
            for e in &self.errors {
                writeln!(f, "error: {e}")?;
            }
        }
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        if self.ok() {
            writeln!(f, "resolved configuration:")?;
            write!(f, "{}", self.resolved)?;
        }
        Ok(())
    }
}

/// Everything an experiment needs, built from a validated config.
#[derive(Debug)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub disc: Discretization,
    pub f: FeField,
    pub datum: DirichletDatum,
    pub law: BoundaryLaw,
    pub p0: Option<PenaltyLaw>,
    pub p2: Option<PenaltyLaw>,
    pub options: SolveOptions,
}

impl Setup {
    /// The configured problem, in the configured mode.
    pub fn problem(&self) -> HviProblem<'_> {
        let pen = &self.config.penalty;
        HviProblem::new(&self.disc, self.f.clone(), self.datum.clone(), self.law).penalized(
            pen.mode.into(),
            self.p0,
            self.p2,
            pen.lambda,
        )
    }

    /// Same data in `mode`, with only the penalty laws that mode needs.
    pub fn problem_in(&self, mode: ConstraintMode) -> HviProblem<'_> {
        HviProblem::new(&self.disc, self.f.clone(), self.datum.clone(), self.law).penalized(
            mode,
            self.p0.filter(|_| mode.needs_p0()),
            self.p2.filter(|_| mode.needs_p2()),
            self.config.penalty.lambda,
        )
    }

    pub fn field(&self, expr: &Expr) -> Result<FeField, String> {
        self.disc
            .mesh
            .nodes
            .iter()
            .map(|&[x, y]| expr.eval_xy(x, y))
            .collect::<Result<Vec<_>, _>>()
            .map(FeField::new)
    }
}

struct Collector {
    errors: Vec<Diagnostic>,
}

impl Collector {
    fn err(&mut self, key: &str, message: impl Into<String>) {
        self.errors.push(Diagnostic {
            key: key.into(),
            message: message.into(),
        });
    }

    fn positive(&mut self, key: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.err(key, format!("must be positive and finite, got {v}"));
        }
    }

    fn expr(&mut self, key: &str, src: &str, vars: &[&str]) -> Option<Expr> {
        Expr::parse(src, vars).map_err(|m| self.err(key, m)).ok()
    }
}

fn solve_options(s: &SolverSection) -> SolveOptions {
    SolveOptions {
        tol: s.tol,
        max_outer: s.max_outer,
        inner: match s.inner {
            InnerName::Auto => InnerSolver::Auto,
            InnerName::Psor => InnerSolver::Psor { omega: s.psor_omega },
            InnerName::Newton => InnerSolver::Newton,
        },
        psor_tol: s.psor_tol,
        psor_max_sweeps: s.psor_max_sweeps,
        newton_max_iter: s.newton_max_iter,
        initial: None,
    }
}

fn check_schedule(c: &mut Collector, key: &str, s: &[f64]) {
    if s.len() < 2 {
        c.err(key, "needs at least two entries");
    } else if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        c.err(key, "entries must be positive");
    } else if s.windows(2).any(|w| w[1] >= w[0]) {
        c.err(key, "must be strictly decreasing");
    }
}

/// Checks the configuration without running any solve. Builds the mesh and
/// the discrete constants, so the smallness condition is checked on the
/// configured mesh.
pub fn validate(config: &ExperimentConfig) -> (Diagnostics, Option<Setup>) {
    let config = config.resolved();
    let mut c = Collector { errors: Vec::new() };
    let mut notes = Vec::new();
    let kind = config.experiment;

    if kind.randomized() && config.seed.is_none() {
        c.err(
            "seed",
            format!("experiment `{}` is randomized and needs a seed", kind.as_str()),
        );
    }

    let m = &config.mesh;
    c.positive("mesh.alpha", m.alpha);
    c.positive("mesh.beta", m.beta);
    if m.nx == 0 {
        c.err("mesh.nx", "must be at least 1");
    }
    if m.ny == 0 {
        c.err("mesh.ny", "must be at least 1");
    }

    let s = &config.solver;
    c.positive("solver.tol", s.tol);
    c.positive("solver.psor_tol", s.psor_tol);
    if !(s.psor_omega > 0.0 && s.psor_omega < 2.0) {
        c.err("solver.psor_omega", format!("must lie in (0, 2), got {}", s.psor_omega));
    }
    if s.max_outer == 0 {
        c.err("solver.max_outer", "must be at least 1");
    }

    let f_expr = c.expr("data.f", &config.data.f, &["x", "y"]);
    let phi_expr = c.expr("data.phi", &config.data.phi, &["y"]);

    let pen = &config.penalty;
    let mut penalty_law = |key: &str, v: Option<f64>, make: fn(f64) -> hemivar::Result<PenaltyLaw>| {
        v.and_then(|x| make(x).map_err(|e| c.err(key, e.to_string())).ok())
    };
    let p0 = penalty_law("penalty.p0_c", pen.p0_c, penalty_p0);
    let p2 = penalty_law("penalty.p2_c", pen.p2_c, penalty_p2);
    if kind.uses_schedule() {
        match &pen.lambdas {
            None => c.err(
                "penalty.lambdas",
                format!("experiment `{}` needs a schedule", kind.as_str()),
            ),
            Some(s) if kind == ExperimentKind::ApproxSequence => {
                // criterion violations are reported by the experiment itself
                if s.len() < 3 {
                    c.err("penalty.lambdas", "needs at least three entries");
                }
            }
            Some(s) => check_schedule(&mut c, "penalty.lambdas", s),
        }
        if pen.mode == ModeName::Exact {
            c.err(
                "penalty.mode",
                format!("experiment `{}` needs a penalty mode", kind.as_str()),
            );
        }
    }
    if let Some(Floor::Value(v)) = pen.floor {
        c.positive("penalty.floor", v);
    }

    if let Some(seq) = &config.sequence {
        if let Some(n) = seq.n_terms {
            let len = pen.lambdas.as_ref().map_or(0, Vec::len);
            if n < 3 || n > len {
                c.err("sequence.n_terms", format!("must lie in 3..={len}"));
            }
        }
        if seq.rule == RuleKind::StrongPerturb {
            c.expr("sequence.g", &seq.g, &["x", "y"]);
        }
        if let Some(Floor::Value(v)) = seq.floor {
            c.positive("sequence.floor", v);
        }
    }

    if let Some(ctl) = &config.control {
        c.positive("control.a0", ctl.a0);
        c.positive("control.a2", ctl.a2);
        c.expr("control.phi", &ctl.phi, &["x", "y"]);
        if let Some(w) = c.expr("control.omega", &ctl.omega, &["mu"]) {
            match w.eval(&[("mu", 0.0)]) {
                Ok(v) if v == 1.0 => {}
                Ok(v) => c.err("control.omega", format!("must equal 1 at mu = 0, got {v}")),
                Err(e) => c.err("control.omega", e),
            }
        }
        if !(ctl.mu >= 0.0) {
            c.err("control.mu", "must be nonnegative");
        }
        if ctl.basis_size == 0 || ctl.basis_size > hemivar::control::MAX_CONTROLS {
            c.err(
                "control.basis_size",
                format!("must lie in 1..={}", hemivar::control::MAX_CONTROLS),
            );
        }
        if ctl.starts == 0 {
            c.err("control.starts", "must be at least 1");
        }
        c.positive("control.initial_step", ctl.initial_step);
        c.positive("control.ftol", ctl.ftol);
        c.positive("control.xtol", ctl.xtol);
        if let Some(p) = &ctl.planted {
            if p.len() != ctl.basis_size {
                c.err("control.planted", format!("needs {} coefficients", ctl.basis_size));
            }
        }
        if kind == ExperimentKind::MuConvergence {
            match &ctl.mus {
                None => c.err("control.mus", "mu_convergence needs a mu schedule"),
                Some(mus) => {
                    if mus.iter().any(|v| !(*v >= 0.0)) {
                        c.err("control.mus", "entries must be nonnegative");
                    }
                    if Some(mus.len()) != pen.lambdas.as_ref().map(Vec::len) {
                        c.err("control.mus", "must have as many entries as penalty.lambdas");
                    }
                }
            }
        }
        if pen.mode == ModeName::Exact {
            notes.push(
                "control with mode = \"exact\" pins u = b on Gamma2, so the tracking term ignores the control".into(),
            );
        }
    }

    if let Some(chk) = &config.check {
        if kind == ExperimentKind::OracleCheck {
            if chk.instances == 0 {
                c.err("check.instances", "must be at least 1");
            }
            if !(chk.f_min <= chk.f_max) {
                c.err("check.f_max", "must not be below check.f_min");
            }
            if !(chk.b_max >= 0.0) {
                c.err("check.b_max", "must be nonnegative");
            }
            c.positive("check.agreement_tol", chk.agreement_tol);
            if pen.mode != ModeName::Exact {
                c.err(
                    "penalty.mode",
                    "oracle_check compares against the exact formulation; use \"exact\"",
                );
            }
        } else {
            if chk.trials == 0 {
                c.err("check.trials", "must be at least 1");
            }
            if chk.modes.is_empty() {
                c.err("check.modes", "needs at least one mode");
            }
            for &mode in &chk.modes {
                let mode: ConstraintMode = mode.into();
                if mode.needs_p0() && p0.is_none() {
                    c.err("penalty.p0_c", format!("missing penalty law p0: mode {mode} needs it"));
                }
                if mode.needs_p2() && p2.is_none() {
                    c.err("penalty.p2_c", format!("missing penalty law p2: mode {mode} needs it"));
                }
            }
        }
    }

    // Mesh, constants and the data-dependent checks.
    let disc = if c.errors.iter().any(|d| d.key.starts_with("mesh.")) {
        None
    } else {
        match build_rect_mesh(m.alpha, m.beta, m.nx, m.ny).and_then(Discretization::new) {
            Ok(d) => Some(d),
            Err(e) => {
                c.err("mesh", e.to_string());
                None
            }
        }
    };
    let mut setup = None;
    if let Some(disc) = disc {
        let k = disc.constants.c0.powi(2) * disc.constants.c3.powi(2);
        notes.push(format!(
            "discrete constants c0_h = {:.6}, c3_h = {:.6} (c0_h^2 c3_h^2 = {k:.6})",
            disc.constants.c0, disc.constants.c3
        ));
        let law = build_law(&mut c, &config.law, k);
        if let Some(law) = law {
            let product = disc.constants.smallness_product(law.alpha_jnu());
            notes.push(format!(
                "smallness product alpha_jnu c0_h^2 c3_h^2 = {product:.6} (alpha_jnu = {})",
                law.alpha_jnu()
            ));
            if product >= 1.0 {
                report_core(
                    &mut c,
                    CoreError::SmallnessViolated {
                        product,
                        alpha_jnu: law.alpha_jnu(),
                        c0: disc.constants.c0,
                        c3: disc.constants.c3,
                    },
                );
            }
        }
        // penalty laws vs mode; independent of the data so they show up
        // alongside expression errors
        let mode: ConstraintMode = pen.mode.into();
        if kind != ExperimentKind::GAxioms && mode != ConstraintMode::Exact {
            for (needs, given, name) in [
                (mode.needs_p0(), pen.p0_c.is_some(), "p0"),
                (mode.needs_p2(), pen.p2_c.is_some(), "p2"),
            ] {
                if needs && !given {
                    report_core(&mut c, CoreError::MissingPenaltyLaw(name));
                } else if given && !needs {
                    c.err(&format!("penalty.{name}_c"), format!("mode {mode} does not use {name}"));
                }
            }
        }
        let f = f_expr.and_then(|e| {
            disc.mesh
                .nodes
                .iter()
                .map(|&[x, y]| e.eval_xy(x, y))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|m| c.err("data.f", m))
                .ok()
        });
        let datum = phi_expr.and_then(|e| {
            let mesh = &disc.mesh;
            let vals = (0..=mesh.ny)
                .map(|j| e.eval(&[("y", j as f64 * mesh.hy())]))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|m| c.err("data.phi", m))
                .ok()?;
            DirichletDatum::from_gamma2_values(mesh, &vals)
                .map_err(|e| c.err("data.phi", e.to_string()))
                .ok()
        });
        if let (Some(law), Some(f), Some(datum)) = (law, f, datum) {
            let s = Setup {
                disc,
                f: f.into(),
                datum,
                law,
                p0,
                p2,
                options: solve_options(&config.solver),
                config: config.clone(),
            };
            // g_axioms builds its own modes; everything else runs the configured problem.
            if kind != ExperimentKind::GAxioms {
                let mut p = s.problem();
                if p.mode == ConstraintMode::Exact {
                    // penalty laws are ignored in exact mode
                    p.p0 = None;
                    p.p2 = None;
                }
                if let Err(e) = p.validate() {
                    report_core(&mut c, e);
                }
            } else if let Err(e) = s.problem_in(ConstraintMode::Exact).validate() {
                report_core(&mut c, e);
            }
            if kind == ExperimentKind::OracleCheck && !(law.alpha_jnu() == 0.0 && law.explicit_lipschitz() == 0.0) {
                c.err("law.kind", "the oracle handles convex laws only (zero or linear)");
            }
            setup = Some(s);
        }
    }

    let ok = c.errors.is_empty();
    let diagnostics = Diagnostics {
        errors: c.errors,
        notes,
        resolved: config.to_toml(),
    };
    (diagnostics, setup.filter(|_| ok))
}

fn report_core(c: &mut Collector, e: CoreError) {
    let key = match &e {
        CoreError::SmallnessViolated { .. } => "law.slope_drop".to_string(),
        CoreError::MissingPenaltyLaw(name) => format!("penalty.{name}_c"),
        _ => String::new(),
    };
    // already reported by the data-independent checks
    if c.errors.iter().any(|d| d.key == key) {
        return;
    }
    match e {
        CoreError::SmallnessViolated {
            product,
            alpha_jnu,
            c0,
            c3,
        } => c.err(
            "law.slope_drop",
            format!(
                "smallness condition violated: alpha_jnu c0_h^2 c3_h^2 = {alpha_jnu} * {c0:.6}^2 * {c3:.6}^2 = {product:.6} >= 1"
            ),
        ),
        CoreError::MissingPenaltyLaw(name) => c.err(
            &format!("penalty.{name}_c"),
            format!("missing penalty law {name} for the configured mode"),
        ),
        CoreError::InvalidDatum(m) => c.err("data.phi", m),
        other => c.err("penalty", other.to_string()),
    }
}

fn build_law(c: &mut Collector, law: &LawSection, k: f64) -> Option<BoundaryLaw> {
    let stray = |c: &mut Collector, keys: &[(&str, bool)]| {
        for (key, present) in keys {
            if *present {
                c.err(&format!("law.{key}"), format!("not used by law kind {:?}", law.kind));
            }
        }
    };
    match law.kind {
        LawKind::Zero => {
            stray(
                c,
                &[
                    ("q0", law.q0.is_some()),
                    ("k", law.k.is_some()),
                    ("a", law.a.is_some()),
                    ("r0", law.r0.is_some()),
                    ("slope_drop", law.slope_drop.is_some()),
                    ("smallness_target", law.smallness_target.is_some()),
                ],
            );
            Some(law_zero())
        }
        LawKind::Linear => {
            stray(
                c,
                &[
                    ("a", law.a.is_some()),
                    ("r0", law.r0.is_some()),
                    ("slope_drop", law.slope_drop.is_some()),
                    ("smallness_target", law.smallness_target.is_some()),
                ],
            );
            law_linear(law.q0.unwrap_or(0.0), law.k.unwrap_or(0.0))
                .map_err(|e| c.err("law.k", e.to_string()))
                .ok()
        }
        LawKind::Nonmonotone => {
            stray(c, &[("q0", law.q0.is_some()), ("k", law.k.is_some())]);
            let Some(r0) = law.r0 else {
                c.err("law.r0", "required for the nonmonotone law");
                return None;
            };
            let (a, sd) = match (law.smallness_target, law.slope_drop) {
                (Some(t), None) => {
                    if !(t > 0.0) {
                        c.err("law.smallness_target", "must be positive");
                        return None;
                    }
                    let sd = t / k;
                    (law.a.unwrap_or(sd), sd)
                }
                (None, Some(sd)) => (law.a.unwrap_or(sd), sd),
                (Some(_), Some(_)) => {
                    c.err(
                        "law.smallness_target",
                        "give either slope_drop or smallness_target, not both",
                    );
                    return None;
                }
                (None, None) => {
                    c.err(
                        "law.slope_drop",
                        "required for the nonmonotone law (or set smallness_target)",
                    );
                    return None;
                }
            };
            law_nonmonotone(a, r0, sd).map_err(|e| c.err("law", e.to_string())).ok()
        }
    }
}
