//! Optimal control of the source: minimize
//! `L_mu(u, f) = a0 ||f||^2 + a2 ||u - omega(mu) phi||^2_{L^2(Gamma2)}` over
//! admissible pairs, i.e. `u` solving the state inequality (exact or
//! penalized) for `f`. The control is restricted to a small fixed basis.

mod simplex;

pub use simplex::{nelder_mead, NelderMeadOptions, NelderMeadResult};

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{Discretization, FeField, FeOperators};
use crate::geometry::TriMesh;
use crate::linalg;
use crate::solver::{solve_with, ConstraintMode, HviProblem, SolveOptions, SolveReport};

pub type Omega = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Coefficients of the cost family `L_mu`.
#[derive(Clone)]
pub struct CostSpec {
    pub a0: f64,
    pub a2: f64,
    /// Target trace; only the `Gamma2` values matter.
    pub phi: FeField,
    pub omega: Omega,
    pub mu: f64,
}

impl fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostSpec")
            .field("a0", &self.a0)
            .field("a2", &self.a2)
            .field("mu", &self.mu)
            .field("omega(mu)", &(self.omega)(self.mu))
            .finish_non_exhaustive()
    }
}

/// `omega(mu) = 1 + mu`.
pub fn omega_linear() -> Omega {
    Arc::new(|mu| 1.0 + mu)
}

impl CostSpec {
    pub fn new(a0: f64, a2: f64, phi: FeField, omega: Omega, mu: f64) -> Result<Self> {
        if !(a0 > 0.0 && a0.is_finite()) || !(a2 > 0.0 && a2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cost weights must be positive (a0 = {a0}, a2 = {a2})"
            )));
        }
        if omega(0.0) != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "omega(0) must be 1, got {}",
                omega(0.0)
            )));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidArgument(format!("mu must be nonnegative, got {mu}")));
        }
        Ok(CostSpec { a0, a2, phi, omega, mu })
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        CostSpec { mu, ..self.clone() }
    }

    /// The coercivity minorant `h(f) = a0 ||f||^2`.
    pub fn minorant(&self, ops: &FeOperators, f: &[f64]) -> f64 {
        self.a0 * linalg::quad_form(&ops.mass, f)
    }
}

/// `L_mu(u, f)`.
pub fn eval_cost(spec: &CostSpec, ops: &FeOperators, u: &[f64], f: &[f64]) -> f64 {
    let w = (spec.omega)(spec.mu);
    let d: Vec<f64> = u.iter().zip(spec.phi.iter()).map(|(u, p)| u - w * p).collect();
    spec.minorant(ops, f) + spec.a2 * linalg::quad_form(&ops.gamma2_mass, &d)
}

/// Control subspace `f = sum_j theta_j psi_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlParam {
    pub basis: Vec<FeField>,
}

pub const MAX_CONTROLS: usize = 12;

impl ControlParam {
    /// Checks the size and the conditioning of the `L^2` Gram matrix.
    pub fn from_basis(basis: Vec<FeField>, ops: &FeOperators) -> Result<Self> {
        let m = basis.len();
        if m == 0 || m > MAX_CONTROLS {
            return Err(Error::InvalidArgument(format!(
                "need 1..={MAX_CONTROLS} basis functions, got {m}"
            )));
        }
        let cond = gram_condition(&basis, ops);
        if !(cond < 1e8) {
            return Err(Error::InvalidArgument(format!(
                "control basis is nearly dependent (Gram condition {cond:e})"
            )));
        }
        Ok(ControlParam { basis })
    }

    /// `cos(j pi x1 / alpha) cos(k pi x2 / beta)` for the first `m` pairs
    /// ordered by `j + k`, then `j`.
    pub fn tensor_cosine(mesh: &TriMesh, ops: &FeOperators, m: usize) -> Result<Self> {
        let mut pairs = Vec::new();
        for s in 0..=2 * MAX_CONTROLS {
            for j in 0..=s {
                pairs.push((j, s - j));
            }
        }
        let basis = pairs
            .into_iter()
            .take(m)
            .map(|(j, k)| {
                let (a, b) = (mesh.alpha, mesh.beta);
                FeField::interpolate(mesh, |[x, y]| {
                    (j as f64 * std::f64::consts::PI * x / a).cos() * (k as f64 * std::f64::consts::PI * y / b).cos()
                })
            })
            .collect();
        Self::from_basis(basis, ops)
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn field(&self, theta: &[f64]) -> FeField {
        let mut f = FeField::zeros(self.basis[0].len());
        for (t, psi) in theta.iter().zip(&self.basis) {
            for (fi, pi) in f.iter_mut().zip(psi.iter()) {
                *fi += t * pi;
            }
        }
        f
    }
}

fn gram_condition(basis: &[FeField], ops: &FeOperators) -> f64 {
    let m = basis.len();
    let gram = DMatrix::from_fn(m, m, |i, j| ops.l2_inner(&basis[i], &basis[j]));
    let eig = SymmetricEigen::new(gram).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOptions {
    pub solve: SolveOptions,
    pub simplex: NelderMeadOptions,
    /// Random starting coefficients are drawn uniformly from `[-r, r]`.
    pub init_range: f64,
}

impl Default for ControlOptions {
    fn default() -> Self {
        ControlOptions {
            solve: SolveOptions::default(),
            simplex: NelderMeadOptions::default(),
            init_range: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartRecord {
    pub start: usize,
    pub initial: Vec<f64>,
    pub theta: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Best cost after each simplex iteration.
    pub trace: Vec<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct OptReport {
    pub best_theta: Vec<f64>,
    pub best_f: FeField,
    pub best_u: FeField,
    pub best_cost: f64,
    pub best_start: usize,
    /// Sorted by start index.
    pub starts: Vec<StartRecord>,
    /// Optimality residual of the state problem at `best_f`.
    pub admissibility_residual: f64,
    /// Visited pairs with `L(u, f) < a0 ||f||^2 - 1e-12`; zero when the
    /// coercivity bound holds.
    pub coercivity_violations: usize,
    /// Smallest `L(u, f) - a0 ||f||^2` over every visited pair.
    pub min_coercivity_slack: f64,
    pub evaluations: usize,
}

impl OptReport {
    /// Writes `start,iter,cost` for every simplex iteration.
    pub fn write_trace(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["start", "iter", "cost"])?;
        for s in &self.starts {
            for (i, c) in s.trace.iter().enumerate() {
                w.write_record([s.start.to_string(), (i + 1).to_string(), format!("{c:?}")])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// State solve plus cost for one control vector.
pub fn evaluate(
    spec: &CostSpec,
    template: &HviProblem,
    param: &ControlParam,
    theta: &[f64],
    opts: &SolveOptions,
) -> Result<(f64, FeField, SolveReport)> {
    let f = param.field(theta);
    let report = solve_with(&template.with_f(f.clone()), opts)?;
    let cost = eval_cost(spec, &template.disc.ops, &report.solution, &f);
    Ok((cost, f, report))
}

struct StartOutcome {
    record: StartRecord,
    coercivity_violations: usize,
    min_slack: f64,
}

/// Multi-start simplex search over the control coefficients. Each start
/// draws its initial point from stream `start` of a generator seeded with
/// `seed`, so results do not depend on scheduling.
pub fn solve_control(
    spec: &CostSpec,
    template: &HviProblem,
    param: &ControlParam,
    starts: usize,
    seed: u64,
    opts: &ControlOptions,
) -> Result<OptReport> {
    if starts == 0 {
        return Err(Error::InvalidArgument("need at least one start".into()));
    }
    template.validate()?;
    let ops = &template.disc.ops;
    let m = param.dim();

    let outcomes: Vec<StartOutcome> = (0..starts)
        .into_par_iter()
        .map(|start| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(start as u64);
            let initial: Vec<f64> = (0..m)
                .map(|_| rng.random_range(-opts.init_range..=opts.init_range))
                .collect();
            let mut violations = 0;
            let mut min_slack = f64::INFINITY;
            let objective = |theta: &[f64]| -> Result<f64> {
                let (cost, f, _) = evaluate(spec, template, param, theta, &opts.solve)?;
                let slack = cost - spec.minorant(ops, &f);
                min_slack = min_slack.min(slack);
                if slack < -1e-12 {
                    violations += 1;
                }
                Ok(cost)
            };
            let result = nelder_mead(objective, &initial, &opts.simplex);
            let record = match result {
                Ok(r) => StartRecord {
                    start,
                    initial,
                    theta: r.x,
                    cost: r.fx,
                    iterations: r.iterations,
                    evaluations: r.evaluations,
                    trace: r.best_trace,
                    failure: None,
                },
                Err(e) => StartRecord {
                    start,
                    theta: initial.clone(),
                    initial,
                    cost: f64::INFINITY,
                    iterations: 0,
                    evaluations: 0,
                    trace: Vec::new(),
                    failure: Some(e.to_string()),
                },
            };
            StartOutcome {
                record,
                coercivity_violations: violations,
                min_slack,
            }
        })
        .collect();

    let best = outcomes.iter().filter(|o| o.record.failure.is_none()).min_by(|a, b| {
        a.record
            .cost
            .total_cmp(&b.record.cost)
            .then(a.record.start.cmp(&b.record.start))
    });
    let Some(best) = best else {
        return Err(Error::AllStartsFailed {
            starts,
            first: outcomes[0].record.failure.clone().unwrap_or_default(),
        });
    };
    let best_theta = best.record.theta.clone();
    let best_start = best.record.start;
    let (best_cost, best_f, report) = evaluate(spec, template, param, &best_theta, &opts.solve)?;
    Ok(OptReport {
        best_theta,
        best_f,
        best_u: report.solution,
        best_cost,
        best_start,
        admissibility_residual: report.residual,
        coercivity_violations: outcomes.iter().map(|o| o.coercivity_violations).sum(),
        min_coercivity_slack: outcomes.iter().map(|o| o.min_slack).fold(f64::INFINITY, f64::min),
        evaluations: outcomes.iter().map(|o| o.record.evaluations).sum(),
        starts: outcomes.into_iter().map(|o| o.record).collect(),
    })
}

/// Exact minimizer when the control-to-state map is affine (e.g. a convex
/// law and no active constraint): the state is sampled at `theta = 0` and
/// at each unit vector, the affinity is confirmed at one more point, and
/// the quadratic cost is minimized through its normal equations.
pub fn affine_reference(
    spec: &CostSpec,
    template: &HviProblem,
    param: &ControlParam,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, f64)> {
    let disc = template.disc;
    let ops = &disc.ops;
    let m = param.dim();
    let state =
        |theta: &[f64]| -> Result<FeField> { Ok(solve_with(&template.with_f(param.field(theta)), opts)?.solution) };
    let u0 = state(&vec![0.0; m])?;
    let mut z = Vec::with_capacity(m);
    for j in 0..m {
        let mut e = vec![0.0; m];
        e[j] = 1.0;
        z.push(state(&e)?.sub(&u0));
    }
    let probe: Vec<f64> = (0..m).map(|j| 0.5 - 0.13 * j as f64).collect();
    let mut predicted = u0.clone();
    for (t, zj) in probe.iter().zip(&z) {
        predicted = predicted.axpy(*t, zj);
    }
    let gap = disc.v_norm(&state(&probe)?.sub(&predicted));
    if gap > 1e-8 * (1.0 + disc.v_norm(&u0)) {
        return Err(Error::InvalidArgument(format!(
            "control-to-state map is not affine here (gap {gap:e})"
        )));
    }

    // cost(theta) = a0 theta^T G theta + a2 |u0 - w phi + Z theta|^2_{B2}
    let w = (spec.omega)(spec.mu);
    let r0: Vec<f64> = u0.iter().zip(spec.phi.iter()).map(|(u, p)| u - w * p).collect();
    let mut h = DMatrix::zeros(m, m);
    let mut g = DVector::zeros(m);
    for i in 0..m {
        for j in 0..m {
            h[(i, j)] = spec.a0 * ops.l2_inner(&param.basis[i], &param.basis[j])
                + spec.a2 * linalg::bilinear(&ops.gamma2_mass, &z[i], &z[j]);
        }
        g[i] = -spec.a2 * linalg::bilinear(&ops.gamma2_mass, &z[i], &r0);
    }
    let theta = h
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("reduced cost Hessian is not positive definite".into()))?
        .solve(&g);
    let theta: Vec<f64> = theta.iter().copied().collect();
    let (cost, _, _) = evaluate(spec, template, param, &theta, opts)?;
    Ok((theta, cost))
}

fn exact_of<'a>(p: &HviProblem<'a>) -> HviProblem<'a> {
    p.clone().penalized(ConstraintMode::Exact, None, None, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuRow {
    pub n: usize,
    pub mu: f64,
    pub lambda: f64,
    /// Optimal value of the perturbed problem.
    pub cost: f64,
    /// `|L_mu_n(u_n*, f_n*) - L(u*, f*)|`.
    pub cost_gap: f64,
    /// `L(u_n*, f_n*) - L(u*, f*)`: the unperturbed cost at the perturbed optimum.
    pub unperturbed_gap: f64,
    /// `||u_n* - u*||_V`.
    pub state_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuTable {
    pub reference_cost: f64,
    pub rows: Vec<MuRow>,
}

impl MuTable {
    pub fn cost_gaps_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].cost_gap < w[0].cost_gap)
    }

    /// Writes `n,mu,lambda,cost,cost_gap,unperturbed_gap,state_gap`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["n", "mu", "lambda", "cost", "cost_gap", "unperturbed_gap", "state_gap"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                format!("{:?}", r.mu),
                format!("{:?}", r.lambda),
                format!("{:?}", r.cost),
                format!("{:?}", r.cost_gap),
                format!("{:?}", r.unperturbed_gap),
                format!("{:?}", r.state_gap),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Solves the perturbed control problems `min L_mu_n` over the penalized
/// admissible set with `lambda_n`, and compares each with the solution of
/// the unperturbed problem (`mu = 0`, Exact mode).
#[allow(clippy::too_many_arguments)]
pub fn mu_convergence(
    spec: &CostSpec,
    template: &HviProblem,
    mus: &[f64],
    lambdas: &[f64],
    param: &ControlParam,
    starts: usize,
    seed: u64,
    opts: &ControlOptions,
) -> Result<MuTable> {
    if mus.len() != lambdas.len() || mus.is_empty() {
        return Err(Error::InvalidArgument(
            "mu and lambda schedules must have the same nonzero length".into(),
        ));
    }
    if template.mode == ConstraintMode::Exact {
        return Err(Error::ExactModeHasNoPenalty);
    }
    let disc: &Discretization = template.disc;
    let base = spec.with_mu(0.0);
    let reference = solve_control(&base, &exact_of(template), param, starts, seed, opts)?;
    let rows =
        mus.iter()
            .zip(lambdas)
            .enumerate()
            .map(|(k, (&mu, &lambda))| {
                let perturbed = spec.with_mu(mu);
                let opt = solve_control(&perturbed, &template.with_lambda(lambda), param, starts, seed, opts).map_err(
                    |e| Error::Sequence {
                        index: k + 1,
                        source: Box::new(e),
                    },
                )?;
                let unperturbed = eval_cost(&base, &disc.ops, &opt.best_u, &opt.best_f);
                Ok(MuRow {
                    n: k + 1,
                    mu,
                    lambda,
                    cost: opt.best_cost,
                    cost_gap: (opt.best_cost - reference.best_cost).abs(),
                    unperturbed_gap: unperturbed - reference.best_cost,
                    state_gap: disc.v_norm(&opt.best_u.sub(&reference.best_u)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
    Ok(MuTable {
        reference_cost: reference.best_cost,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetProbe {
    pub best_cost: f64,
    /// Start indices whose minimizer is within `1e-6` relative cost of the best.
    pub members: Vec<usize>,
    /// Largest `sqrt(||u_i - u_j||_V^2 + ||f_i - f_j||^2)` over the members.
    pub diameter: f64,
    /// Groups of members closer than `cluster_radius` (single linkage).
    pub clusters: Vec<Vec<usize>>,
    pub cluster_radius: f64,
    /// Every member satisfies `a0 ||f||^2 <= best_cost + 1e-6`.
    pub coercivity_bound_holds: bool,
}

/// Multi-start picture of the near-optimal set of the control problem.
pub fn solution_set_probe(
    spec: &CostSpec,
    template: &HviProblem,
    param: &ControlParam,
    starts: usize,
    seed: u64,
    opts: &ControlOptions,
) -> Result<SetProbe> {
    let report = solve_control(spec, template, param, starts, seed, opts)?;
    let disc = template.disc;
    let ops = &disc.ops;
    let best = report.best_cost;
    let mut members = Vec::new();
    let mut pairs = Vec::new();
    for s in report.starts.iter().filter(|s| s.failure.is_none()) {
        if s.cost <= best + 1e-6 * best.abs().max(f64::MIN_POSITIVE) {
            let (_, f, rep) = evaluate(spec, template, param, &s.theta, &opts.solve)?;
            members.push(s.start);
            pairs.push((rep.solution, f));
        }
    }
    let dist = |i: usize, j: usize| {
        let du = disc.v_norm(&pairs[i].0.sub(&pairs[j].0));
        let df = ops.l2_norm(&pairs[i].1.sub(&pairs[j].1));
        (du * du + df * df).sqrt()
    };
    let k = pairs.len();
    let mut diameter = 0.0f64;
    for i in 0..k {
        for j in i + 1..k {
            diameter = diameter.max(dist(i, j));
        }
    }
    let cluster_radius = 1e-3;
    let mut label: Vec<usize> = (0..k).collect();
    for i in 0..k {
        for j in i + 1..k {
            if dist(i, j) <= cluster_radius {
                let (a, b) = (label[i], label[j]);
                label.iter_mut().filter(|l| **l == b).for_each(|l| *l = a);
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    for i in 0..k {
        match seen.iter().position(|&l| l == label[i]) {
            Some(c) => clusters[c].push(members[i]),
            None => {
                seen.push(label[i]);
                clusters.push(vec![members[i]]);
            }
        }
    }
    let coercivity_bound_holds = pairs.iter().all(|(_, f)| spec.minorant(ops, f) <= best + 1e-6);
    Ok(SetProbe {
        best_cost: best,
        members,
        diameter,
        clusters,
        cluster_radius,
        coercivity_bound_holds,
    })
}
