//! Discrete hemivariational inequality on `K` and its penalized versions.
//!
//! The outer loop is the Banach iteration behind the existence proof: freeze
//! the boundary subgradient at the current iterate, solve the resulting
//! convex problem, repeat. Under the smallness condition the map is a
//! contraction in the `V` norm.

mod axioms;
mod inner;
mod oracle;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fem::{Discretization, FeField};
use crate::geometry::NodeClass;
use crate::laws::{BoundaryLaw, DirichletDatum, PenaltyKind, PenaltyLaw};
use crate::linalg;

pub use axioms::{check_G_axioms, AxiomReport, AxiomViolation};
pub use oracle::{brute_force_oracle, ORACLE_MAX_NODES};

use inner::ConvexProblem;

/// Which constraint set the solution lives in and which penalty operator
/// replaces the dropped constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintMode {
    /// `K = {v >= 0 in D, v = b on Gamma2}`; no penalty.
    Exact,
    /// `K~ = {v = b on Gamma2}`, positivity penalized by `p0` (problem H0).
    PenaltyDomain,
    /// `K~ = {v >= 0 in D}`, the trace condition penalized by `p2` (problem H2).
    PenaltyGamma2,
    /// `K~ = V`, both conditions penalized (problem H02).
    PenaltyFull,
}

impl ConstraintMode {
    pub const ALL: [ConstraintMode; 4] = [
        ConstraintMode::Exact,
        ConstraintMode::PenaltyDomain,
        ConstraintMode::PenaltyGamma2,
        ConstraintMode::PenaltyFull,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintMode::Exact => "exact",
            ConstraintMode::PenaltyDomain => "penalty_domain",
            ConstraintMode::PenaltyGamma2 => "penalty_gamma2",
            ConstraintMode::PenaltyFull => "penalty_full",
        }
    }

    pub fn needs_p0(self) -> bool {
        matches!(self, ConstraintMode::PenaltyDomain | ConstraintMode::PenaltyFull)
    }

    pub fn needs_p2(self) -> bool {
        matches!(self, ConstraintMode::PenaltyGamma2 | ConstraintMode::PenaltyFull)
    }
}

impl fmt::Display for ConstraintMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConstraintMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConstraintMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown constraint mode `{s}`")))
    }
}

/// A discrete problem: data on a shared [`Discretization`].
#[derive(Debug, Clone)]
pub struct HviProblem<'a> {
    pub disc: &'a Discretization,
    pub f: FeField,
    pub datum: DirichletDatum,
    pub law: BoundaryLaw,
    pub mode: ConstraintMode,
    pub p0: Option<PenaltyLaw>,
    pub p2: Option<PenaltyLaw>,
    pub lambda: f64,
}

impl<'a> HviProblem<'a> {
    /// Exact-mode problem.
    pub fn new(disc: &'a Discretization, f: FeField, datum: DirichletDatum, law: BoundaryLaw) -> Self {
        HviProblem {
            disc,
            f,
            datum,
            law,
            mode: ConstraintMode::Exact,
            p0: None,
            p2: None,
            lambda: 1.0,
        }
    }

    /// Switches to a penalty formulation. Only the penalty laws the mode
    /// needs should be given.
    pub fn penalized(
        mut self,
        mode: ConstraintMode,
        p0: Option<PenaltyLaw>,
        p2: Option<PenaltyLaw>,
        lambda: f64,
    ) -> Self {
        self.mode = mode;
        self.p0 = p0;
        self.p2 = p2;
        self.lambda = lambda;
        self
    }

    pub fn with_f(&self, f: FeField) -> Self {
        HviProblem { f, ..self.clone() }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        HviProblem { lambda, ..self.clone() }
    }

    /// Checks data consistency and the smallness condition
    /// `alpha_jnu c0_h^2 c3_h^2 < 1`.
    pub fn validate(&self) -> Result<()> {
        let n = self.disc.num_nodes();
        if self.f.len() != n {
            return Err(Error::InvalidArgument(format!(
                "source has {} values, mesh has {n} nodes",
                self.f.len()
            )));
        }
        if self.f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("source has non-finite values".into()));
        }
        self.datum.validate(&self.disc.mesh)?;
        check_penalty(self.mode.needs_p0(), self.p0, PenaltyKind::DomainNonneg, "p0")?;
        check_penalty(self.mode.needs_p2(), self.p2, PenaltyKind::BoundaryEq, "p2")?;
        if self.mode != ConstraintMode::Exact && !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        let alpha_jnu = self.law.alpha_jnu();
        let product = self.disc.constants.smallness_product(alpha_jnu);
        if product >= 1.0 {
            return Err(Error::SmallnessViolated {
                product,
                alpha_jnu,
                c0: self.disc.constants.c0,
                c3: self.disc.constants.c3,
            });
        }
        Ok(())
    }

    fn formulation(&self) -> Formulation {
        let exact = self.mode == ConstraintMode::Exact;
        Formulation {
            nonneg: matches!(self.mode, ConstraintMode::Exact | ConstraintMode::PenaltyGamma2),
            gamma2_pinned: matches!(self.mode, ConstraintMode::Exact | ConstraintMode::PenaltyDomain),
            p0: if exact { None } else { self.p0 },
            p2: if exact { None } else { self.p2 },
            lambda: self.lambda,
        }
    }

    /// Nodal membership in `K_h`.
    pub fn in_k(&self, u: &[f64]) -> bool {
        let mesh = &self.disc.mesh;
        (0..mesh.num_nodes()).all(|n| match mesh.node_class(n) {
            NodeClass::Gamma1 => u[n] == 0.0,
            NodeClass::Gamma2 => u[n] == self.datum.b(n),
            NodeClass::Free => u[n] >= 0.0,
        })
    }

    /// Nodal membership in the constraint set of the current mode.
    pub fn in_k_tilde(&self, u: &[f64]) -> bool {
        let form = self.formulation();
        let mesh = &self.disc.mesh;
        (0..mesh.num_nodes()).all(|n| match mesh.node_class(n) {
            NodeClass::Gamma1 => u[n] == 0.0,
            NodeClass::Gamma2 if form.gamma2_pinned => u[n] == self.datum.b(n),
            _ => !form.nonneg || u[n] >= 0.0,
        })
    }

    /// Nodal projection onto `K_h`: clamp at zero, impose `b` on `Gamma2`.
    pub fn project_onto_k(&self, u: &[f64]) -> FeField {
        let mesh = &self.disc.mesh;
        (0..mesh.num_nodes())
            .map(|n| match mesh.node_class(n) {
                NodeClass::Gamma1 => 0.0,
                NodeClass::Gamma2 => self.datum.b(n),
                NodeClass::Free => u[n].max(0.0),
            })
            .collect::<Vec<_>>()
            .into()
    }

    /// Nodal values of the penalty operator `G u` (lumped quadrature), so that
    /// `<G u, v> = sum_i g_i v_i`.
    fn penalty_vector(&self, form: &Formulation, u: &[f64]) -> Vec<f64> {
        let ops = &self.disc.ops;
        let mut g = vec![0.0; u.len()];
        if let Some(p0) = form.p0 {
            for (i, gi) in g.iter_mut().enumerate() {
                *gi += ops.lumped_mass[i] * p0.value(u[i]);
            }
        }
        if let Some(p2) = form.p2 {
            for (i, gi) in g.iter_mut().enumerate() {
                if ops.gamma2_weights[i] != 0.0 {
                    *gi += ops.gamma2_weights[i] * p2.value(u[i] - self.datum.b(i));
                }
            }
        }
        g
    }
}

fn check_penalty(needed: bool, law: Option<PenaltyLaw>, kind: PenaltyKind, name: &'static str) -> Result<()> {
    match (needed, law) {
        (true, None) => Err(Error::MissingPenaltyLaw(name)),
        (false, Some(_)) => Err(Error::InvalidArgument(format!(
            "penalty law {name} is not used by this mode"
        ))),
        (true, Some(p)) if p.kind != kind => Err(Error::InvalidArgument(format!(
            "penalty law {name} has the wrong kind ({:?})",
            p.kind
        ))),
        _ => Ok(()),
    }
}

/// Constraint and penalty structure of a solve, decoupled from the mode
/// names so that degenerate combinations can be exercised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Formulation {
    pub nonneg: bool,
    pub gamma2_pinned: bool,
    pub p0: Option<PenaltyLaw>,
    pub p2: Option<PenaltyLaw>,
    pub lambda: f64,
}

/// `<G u, v>` for the penalty operator of the problem's mode.
#[allow(non_snake_case)]
pub fn apply_penalty_G(problem: &HviProblem, u: &[f64], v: &[f64]) -> Result<f64> {
    if problem.mode == ConstraintMode::Exact {
        return Err(Error::ExactModeHasNoPenalty);
    }
    Ok(linalg::dot(&problem.penalty_vector(&problem.formulation(), u), v))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum InnerSolver {
    /// PSOR for the modes with bound constraints, Newton for `PenaltyFull`.
    #[default]
    Auto,
    Psor {
        omega: f64,
    },
    Newton,
}

impl InnerSolver {
    pub const PSOR: InnerSolver = InnerSolver::Psor { omega: 1.3 };

    fn resolve(self, mode: ConstraintMode) -> InnerSolver {
        match (self, mode) {
            (InnerSolver::Auto, ConstraintMode::PenaltyFull) => InnerSolver::Newton,
            (InnerSolver::Auto, _) => InnerSolver::PSOR,
            (s, _) => s,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InnerSolver::Auto => "auto",
            InnerSolver::Psor { .. } => "psor",
            InnerSolver::Newton => "newton",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Outer stopping tolerance on `||u^{k+1} - u^k||_V`.
    pub tol: f64,
    pub max_outer: usize,
    pub inner: InnerSolver,
    /// PSOR stops when the largest nodal update, relative to `max(1, |u|_inf)`,
    /// falls below this.
    pub psor_tol: f64,
    pub psor_max_sweeps: usize,
    pub newton_max_iter: usize,
    /// Starting point; defaults to the lifting clamped at zero. Constrained
    /// entries are overwritten.
    pub initial: Option<FeField>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_outer: 200,
            inner: InnerSolver::Auto,
            psor_tol: 1e-13,
            psor_max_sweeps: 200_000,
            newton_max_iter: 500,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InnerStats {
    pub solver: &'static str,
    pub calls: usize,
    /// PSOR sweeps or Newton steps, summed over calls.
    pub total_iterations: usize,
    pub max_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: FeField,
    pub outer_iters: usize,
    /// Successive increments `||u^{k+1} - u^k||_V`.
    pub increments: Vec<f64>,
    /// `q_k = increments[k] / increments[k - 1]`.
    pub contraction_estimates: Vec<f64>,
    pub final_increment: f64,
    pub inner: InnerStats,
    /// Projected optimality residual of the convex problem at the fixed
    /// point, in the dual norm of `V_h`.
    pub residual: f64,
}

impl SolveReport {
    /// Largest `q_k` over the second half of the recorded estimates; `None`
    /// when there are none.
    pub fn tail_contraction(&self) -> Option<f64> {
        let q = &self.contraction_estimates;
        q[q.len() / 2..].iter().copied().reduce(f64::max)
    }
}

pub fn solve(problem: &HviProblem, tol: f64, max_outer: usize) -> Result<SolveReport> {
    solve_with(
        problem,
        &SolveOptions {
            tol,
            max_outer,
            ..SolveOptions::default()
        },
    )
}

pub fn solve_with(problem: &HviProblem, opts: &SolveOptions) -> Result<SolveReport> {
    problem.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let inner = opts.inner.resolve(problem.mode);
    solve_formulation(problem, &problem.formulation(), inner, opts)
}

pub(crate) fn solve_formulation(
    problem: &HviProblem,
    form: &Formulation,
    inner: InnerSolver,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let disc = problem.disc;
    let ops = &disc.ops;
    let mesh = &disc.mesh;
    let n = disc.num_nodes();
    let law = problem.law;
    let kappa = law.implicit_coefficient();
    let load = ops.load(&problem.f);

    let mut pinned = vec![false; n];
    let mut values = vec![0.0; n];
    let mut nonneg = vec![false; n];
    for i in 0..n {
        match mesh.node_class(i) {
            NodeClass::Gamma1 => pinned[i] = true,
            NodeClass::Gamma2 if form.gamma2_pinned => {
                pinned[i] = true;
                values[i] = problem.datum.b(i);
            }
            _ => nonneg[i] = form.nonneg,
        }
    }
    let inv_lambda = 1.0 / form.lambda;
    let mut cp = ConvexProblem {
        a: &ops.stiffness,
        diag: ops.gamma3_weights.iter().map(|w| kappa * w).collect(),
        rhs: vec![0.0; n],
        pinned,
        values,
        nonneg,
        pen0: match form.p0 {
            Some(p) => ops.lumped_mass.iter().map(|m| p.c * m * inv_lambda).collect(),
            None => vec![0.0; n],
        },
        pen2: match form.p2 {
            Some(p) => ops.gamma2_weights.iter().map(|w| p.c * w * inv_lambda).collect(),
            None => vec![0.0; n],
        },
        b: problem.datum.lifting.values.clone(),
    };

    let mut u: Vec<f64> = match &opts.initial {
        Some(init) if init.len() == n => init.values.clone(),
        Some(init) => {
            return Err(Error::InvalidArgument(format!(
                "initial guess has {} values, mesh has {n} nodes",
                init.len()
            )))
        }
        None => problem.datum.lifting.iter().map(|v| v.max(0.0)).collect(),
    };
    for i in 0..n {
        if cp.pinned[i] {
            u[i] = cp.values[i];
        } else if cp.nonneg[i] {
            u[i] = u[i].max(0.0);
        }
    }

    let mut stats = InnerStats {
        solver: inner.name(),
        ..InnerStats::default()
    };
    let mut increments = Vec::new();
    let mut q = Vec::new();
    for k in 1..=opts.max_outer {
        for i in 0..n {
            cp.rhs[i] = load[i] - ops.gamma3_weights[i] * law.explicit_subgrad(u[i]);
        }
        let mut next = u.clone();
        let iters = match inner {
            InnerSolver::Psor { omega } => inner::psor(&cp, &mut next, omega, opts.psor_tol, opts.psor_max_sweeps),
            InnerSolver::Newton => inner::newton(&cp, &mut next, opts.newton_max_iter),
            InnerSolver::Auto => unreachable!("resolved before the loop"),
        }
        .map_err(|reason| Error::InnerSolver { outer: k, reason })?;
        stats.calls += 1;
        stats.total_iterations += iters;
        stats.max_iterations = stats.max_iterations.max(iters);

        let diff: Vec<f64> = next.iter().zip(&u).map(|(a, b)| a - b).collect();
        let inc = disc.v_norm(&diff);
        if let Some(&prev) = increments.last() {
            if prev > 0.0 {
                q.push(inc / prev);
            }
        }
        increments.push(inc);
        u = next;
        if inc <= opts.tol {
            let residual = kkt_residual(problem, form, &cp, &u);
            return Ok(SolveReport {
                solution: FeField::new(u),
                outer_iters: k,
                final_increment: inc,
                increments,
                contraction_estimates: q,
                inner: stats,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_outer,
        last_increment: increments.last().copied().unwrap_or(f64::NAN),
        contraction_history: q,
    })
}

/// Optimality residual of the convex problem with the subgradient taken at
/// `u` itself: the gradient on free nodes, its negative part on active
/// constrained nodes, nothing on pinned nodes.
fn kkt_residual(problem: &HviProblem, form: &Formulation, cp: &ConvexProblem, u: &[f64]) -> f64 {
    let ops = &problem.disc.ops;
    let mut r = linalg::matvec(&ops.stiffness, u);
    let g = problem.penalty_vector(form, u);
    let load = ops.load(&problem.f);
    for i in 0..u.len() {
        r[i] += g[i] / form.lambda - load[i] + ops.gamma3_weights[i] * problem.law.subgrad(u[i]);
        if cp.pinned[i] {
            r[i] = 0.0;
        } else if cp.nonneg[i] && u[i] <= 0.0 {
            r[i] = r[i].min(0.0);
        }
    }
    problem.disc.dual_norm(&r)
}

#[cfg(test)]
mod tests;
