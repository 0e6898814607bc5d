//! Tykhonov triples for the unilateral problem: index `theta = (lambda, f)`,
//! approximating sets `Omega(theta)` = solutions of the penalized inequality,
//! and the criterion `lambda_n -> 0`, `f_n -> f` weakly.
//!
//! Weak convergence of the sources is certified through a fixed set of probe
//! functionals, which is all a finite computation can check.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{Discretization, FeField};
use crate::geometry::{build_rect_mesh, TriMesh};
use crate::laws::DirichletDatum;
use crate::solver::{solve_with, ConstraintMode, HviProblem, SolveOptions};

/// `theta = (lambda, f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TykhonovIndex {
    pub lambda: f64,
    pub f: FeField,
}

impl TykhonovIndex {
    pub fn new(lambda: f64, f: FeField) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
        }
        Ok(TykhonovIndex { lambda, f })
    }
}

/// How `f_n` is generated from the target `f`.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceRule {
    /// `f_n = f`.
    Constant,
    /// `f_n = f + A sin(k_n pi x1 / alpha)`, with `k_n = frequencies[n - 1]`,
    /// or `k_n = n` when no frequencies are given. Converges weakly, not strongly.
    WeakOscillation { amplitude: f64, frequencies: Vec<f64> },
    /// `f_n = f + (eps / n) g`.
    StrongPerturb { g: FeField, eps: f64 },
}

impl SourceRule {
    /// `f_n` for the 1-based index `n`.
    pub fn source(&self, target: &FeField, mesh: &TriMesh, n: usize) -> FeField {
        match self {
            SourceRule::Constant => target.clone(),
            SourceRule::WeakOscillation { amplitude, frequencies } => {
                let k = frequencies.get(n - 1).copied().unwrap_or(n as f64);
                let osc = FeField::interpolate(mesh, |[x, _]| (k * PI * x / mesh.alpha).sin());
                target.axpy(*amplitude, &osc)
            }
            SourceRule::StrongPerturb { g, eps } => target.axpy(eps / n as f64, g),
        }
    }

    fn check(&self, len: usize) -> std::result::Result<(), String> {
        match self {
            SourceRule::Constant => Ok(()),
            SourceRule::WeakOscillation { amplitude, frequencies } => {
                if !amplitude.is_finite() {
                    return Err("oscillation amplitude is not finite".into());
                }
                if !frequencies.is_empty() {
                    if frequencies.len() < len {
                        return Err(format!("{} frequencies for {len} terms", frequencies.len()));
                    }
                    if frequencies.windows(2).any(|w| !(w[1] > w[0])) || !(frequencies[0] > 0.0) {
                        return Err("frequencies must be positive and strictly increasing".into());
                    }
                }
                Ok(())
            }
            SourceRule::StrongPerturb { eps, .. } if !eps.is_finite() => Err("perturbation size is not finite".into()),
            SourceRule::StrongPerturb { .. } => Ok(()),
        }
    }
}

/// An approximating-sequence experiment. The template fixes the mesh, law,
/// datum, penalty mode and laws; its source is the target `f`.
#[derive(Debug, Clone)]
pub struct ApproxSequenceSpec<'a> {
    pub template: HviProblem<'a>,
    pub lambdas: Vec<f64>,
    pub rule: SourceRule,
    /// Discretization floor below which errors are not required to decrease.
    pub floor: Option<f64>,
    pub options: SolveOptions,
}

/// Finite-sequence version of the criterion: positive, strictly decreasing,
/// and at least two decades between the first and the last term.
pub fn check_criterion(lambdas: &[f64], rule: &SourceRule) -> std::result::Result<(), String> {
    if lambdas.len() < 2 {
        return Err("need at least two penalty parameters".into());
    }
    if lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err("penalty parameters must be positive".into());
    }
    if lambdas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err("penalty parameters are not strictly decreasing".into());
    }
    if lambdas[lambdas.len() - 1] > 1e-2 * lambdas[0] {
        return Err("penalty parameters do not tend to zero (less than two decades)".into());
    }
    rule.check(lambdas.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub lambda: f64,
    /// `max_j |(f_n - f, w_j)|` over the probes.
    pub weak_gap: f64,
    /// `||f_n - f||_{L^2(D)}`.
    pub strong_gap: f64,
    /// `||u(lambda_n, f_n) - u(f)||_V`.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub rows: Vec<ConvergenceRow>,
    /// Set when the sequence fails the criterion; no solves are run then.
    pub violation: Option<String>,
    /// Errors nonincreasing over the second half of the sequence.
    pub monotone_tail: bool,
    pub final_error: f64,
    pub floor: Option<f64>,
    /// `error(N) < error(1)` and `error(N) <= floor` (when a floor is set).
    pub success: bool,
}

impl ConvergenceRecord {
    pub fn is_approximating(&self) -> bool {
        self.violation.is_none()
    }

    /// Writes `n,lambda,weak_gap,strong_gap,error`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["n", "lambda", "weak_gap", "strong_gap", "error"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                format!("{:?}", r.lambda),
                format!("{:?}", r.weak_gap),
                format!("{:?}", r.strong_gap),
                format!("{:?}", r.error),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// The probe functionals `1, x1, x2, x1^2, x1 x2`.
pub fn probes(mesh: &TriMesh) -> Vec<FeField> {
    let fns: [fn(f64, f64) -> f64; 5] = [|_, _| 1.0, |x, _| x, |_, y| y, |x, _| x * x, |x, y| x * y];
    fns.iter()
        .map(|g| FeField::interpolate(mesh, |[x, y]| g(x, y)))
        .collect()
}

fn exact_of<'a>(p: &HviProblem<'a>) -> HviProblem<'a> {
    p.clone().penalized(ConstraintMode::Exact, None, None, 1.0)
}

/// Solves the penalized problems along the first `n_terms` terms and
/// compares them with the Exact-mode solution for the target source.
pub fn run_approximating_sequence(spec: &ApproxSequenceSpec, n_terms: usize) -> Result<ConvergenceRecord> {
    if n_terms < 3 || n_terms > spec.lambdas.len() {
        return Err(Error::InvalidArgument(format!(
            "need 3 <= N <= {} terms, got {n_terms}",
            spec.lambdas.len()
        )));
    }
    let lambdas = &spec.lambdas[..n_terms];
    if let Err(reason) = check_criterion(lambdas, &spec.rule) {
        return Ok(ConvergenceRecord {
            rows: Vec::new(),
            violation: Some(format!("not an approximating sequence: {reason}")),
            monotone_tail: false,
            final_error: f64::NAN,
            floor: spec.floor,
            success: false,
        });
    }
    let disc = spec.template.disc;
    let ops = &disc.ops;
    let target = &spec.template.f;
    let reference = solve_with(&exact_of(&spec.template), &spec.options)?.solution;
    let probes = probes(&disc.mesh);

    let rows = lambdas
        .par_iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let n = k + 1;
            let f_n = spec.rule.source(target, &disc.mesh, n);
            let df = f_n.sub(target);
            let p = spec.template.with_f(f_n).with_lambda(lambda);
            let u = solve_with(&p, &spec.options)
                .map_err(|e| Error::Sequence {
                    index: n,
                    source: Box::new(e),
                })?
                .solution;
            Ok(ConvergenceRow {
                n,
                lambda,
                weak_gap: probes.iter().map(|w| ops.l2_inner(&df, w).abs()).fold(0.0, f64::max),
                strong_gap: ops.l2_norm(&df),
                error: disc.v_norm(&u.sub(&reference)),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let final_error = errors[errors.len() - 1];
    let monotone_tail = errors[errors.len() / 2..].windows(2).all(|w| w[1] <= w[0]);
    let success = final_error < errors[0] && spec.floor.is_none_or(|fl| final_error <= fl);
    Ok(ConvergenceRecord {
        rows,
        violation: None,
        monotone_tail,
        final_error,
        floor: spec.floor,
        success,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyCurveRow {
    pub lambda: f64,
    /// `||u_lambda - u||_V` against the Exact-mode solution.
    pub error: f64,
    /// `||u_lambda^-||_{L^2(D)}`.
    pub negative_part: f64,
    /// `||u_lambda - b||_{L^2(Gamma2)}`.
    pub gamma2_mismatch: f64,
    pub outer_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyCurve {
    pub rows: Vec<PenaltyCurveRow>,
    /// `last error <= first error / 100`, checked when the parameters span at
    /// least four decades.
    pub decay_ok: Option<bool>,
}

impl PenaltyCurve {
    /// Writes `lambda,error,negative_part,gamma2_mismatch`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["lambda", "error", "negative_part", "gamma2_mismatch"])?;
        for r in &self.rows {
            w.write_record([
                format!("{:?}", r.lambda),
                format!("{:?}", r.error),
                format!("{:?}", r.negative_part),
                format!("{:?}", r.gamma2_mismatch),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Errors strictly decrease as long as they stay above `floor`.
    pub fn decreasing_to_floor(&self, floor: f64) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[0].error <= floor || w[1].error < w[0].error)
    }
}

/// `||v^-||_{L^2(D)}` for the nodal negative part.
pub fn negative_part_norm(disc: &Discretization, u: &[f64]) -> f64 {
    let neg: Vec<f64> = u.iter().map(|v| v.min(0.0)).collect();
    disc.ops.l2_norm(&neg)
}

/// `||u - b||_{L^2(Gamma2)}`.
pub fn gamma2_mismatch(disc: &Discretization, datum: &DirichletDatum, u: &[f64]) -> f64 {
    let d: Vec<f64> = u.iter().zip(datum.lifting.iter()).map(|(a, b)| a - b).collect();
    disc.ops.gamma2_norm(&d)
}

/// Penalized solutions of `problem` for each `lambda`, measured against the
/// Exact-mode solution.
pub fn penalty_convergence_curve(problem: &HviProblem, lambdas: &[f64], opts: &SolveOptions) -> Result<PenaltyCurve> {
    if problem.mode == ConstraintMode::Exact {
        return Err(Error::ExactModeHasNoPenalty);
    }
    let disc = problem.disc;
    let reference = solve_with(&exact_of(problem), opts)?.solution;
    let rows = lambdas
        .par_iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let report = solve_with(&problem.with_lambda(lambda), opts).map_err(|e| Error::Sequence {
                index: k + 1,
                source: Box::new(e),
            })?;
            let u = &report.solution;
            Ok(PenaltyCurveRow {
                lambda,
                error: disc.v_norm(&u.sub(&reference)),
                negative_part: negative_part_norm(disc, u),
                gamma2_mismatch: gamma2_mismatch(disc, &problem.datum, u),
                outer_iters: report.outer_iters,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let decay_ok = match (lambdas.first(), lambdas.last()) {
        (Some(a), Some(b)) if (a / b).log10() >= 4.0 - 1e-9 => {
            Some(rows[rows.len() - 1].error <= rows[0].error / 100.0)
        }
        _ => None,
    };
    Ok(PenaltyCurve { rows, decay_ok })
}

/// Discrete stand-in for `u in Omega(theta)`: `u` lies within `tol` (in the
/// `V` norm) of the unique solution of the penalized problem at `theta`.
pub fn membership_check(
    template: &HviProblem,
    theta: &TykhonovIndex,
    u: &[f64],
    tol: f64,
    opts: &SolveOptions,
) -> Result<bool> {
    let p = template.with_f(theta.f.clone()).with_lambda(theta.lambda);
    let sol = solve_with(&p, opts)?.solution;
    let d: Vec<f64> = u.iter().zip(sol.iter()).map(|(a, b)| a - b).collect();
    Ok(template.disc.v_norm(&d) <= tol)
}

/// Two-mesh estimate of the discretization error of the Exact-mode
/// solution: `||u_h - I u_2h||_V`, where `u_2h` solves the same problem on
/// the mesh with half the subdivisions (data restricted by injection) and
/// `I` is P1 interpolation. Needs even `nx`, `ny`.
pub fn two_mesh_floor(problem: &HviProblem, opts: &SolveOptions) -> Result<f64> {
    let fine = &problem.disc.mesh;
    if !fine.nx.is_multiple_of(2) || !fine.ny.is_multiple_of(2) {
        return Err(Error::InvalidArgument("two-mesh floor needs even subdivisions".into()));
    }
    let coarse_mesh = build_rect_mesh(fine.alpha, fine.beta, fine.nx / 2, fine.ny / 2)?;
    let inject = |v: &[f64]| -> Vec<f64> {
        (0..coarse_mesh.num_nodes())
            .map(|c| {
                let (i, j) = (c / (coarse_mesh.ny + 1), c % (coarse_mesh.ny + 1));
                v[fine.node_id(2 * i, 2 * j)]
            })
            .collect()
    };
    let coarse = Discretization::new(coarse_mesh.clone())?;
    let datum = DirichletDatum {
        lifting: inject(&problem.datum.lifting).into(),
    };
    let coarse_problem = HviProblem::new(&coarse, inject(&problem.f).into(), datum, problem.law);
    let u_2h = solve_with(&coarse_problem, opts)?.solution;
    let u_h = solve_with(&exact_of(problem), opts)?.solution;
    let prolonged = fine.prolongate_from(&coarse_mesh, &u_2h);
    let d: Vec<f64> = u_h.iter().zip(&prolonged).map(|(a, b)| a - b).collect();
    Ok(problem.disc.v_norm(&d))
}
