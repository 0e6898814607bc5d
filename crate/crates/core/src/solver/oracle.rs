use nalgebra::{DMatrix, DVector};

use super::{ConstraintMode, HviProblem};
use crate::error::{Error, Result};
use crate::fem::FeField;
use crate::geometry::NodeClass;
use crate::linalg;

/// Largest number of constrained nodes the enumeration accepts.
pub const ORACLE_MAX_NODES: usize = 14;

const FEAS_TOL: f64 = 1e-12;

/// Solves an Exact-mode problem with a convex law by enumerating every
/// active set of the nodal constraints `u_i >= 0` and keeping the candidate
/// that is primal and dual feasible. Independent of the iterative solvers.
pub fn brute_force_oracle(problem: &HviProblem) -> Result<FeField> {
    problem.validate()?;
    if problem.mode != ConstraintMode::Exact {
        return Err(Error::InvalidArgument("the oracle handles Exact mode only".into()));
    }
    if problem.law.alpha_jnu() != 0.0 || problem.law.explicit_lipschitz() != 0.0 {
        return Err(Error::InvalidArgument(
            "the oracle needs a convex law with affine subgradient".into(),
        ));
    }
    let disc = problem.disc;
    let ops = &disc.ops;
    let mesh = &disc.mesh;
    let n = disc.num_nodes();
    let free: Vec<usize> = (0..n).filter(|&i| mesh.node_class(i) == NodeClass::Free).collect();
    let m = free.len();
    if m > ORACLE_MAX_NODES {
        return Err(Error::InvalidArgument(format!(
            "{m} constrained nodes exceed the oracle limit of {ORACLE_MAX_NODES}"
        )));
    }

    // Reduced system A x = r on the constrained nodes, Dirichlet values lifted.
    let kappa = problem.law.implicit_coefficient();
    let mut fixed = vec![0.0; n];
    for i in 0..n {
        if mesh.node_class(i) == NodeClass::Gamma2 {
            fixed[i] = problem.datum.b(i);
        }
    }
    let load = ops.load(&problem.f);
    let s_fixed = linalg::matvec(&ops.stiffness, &fixed);
    let mut a = DMatrix::zeros(m, m);
    let mut r = DVector::zeros(m);
    for (p, &i) in free.iter().enumerate() {
        for (q, &j) in free.iter().enumerate() {
            a[(p, q)] = ops.stiffness.get_entry(i, j).map(|e| e.into_value()).unwrap_or(0.0);
        }
        a[(p, p)] += kappa * ops.gamma3_weights[i];
        r[p] = load[i] - s_fixed[i] - ops.gamma3_weights[i] * problem.law.explicit_subgrad(0.0);
    }

    let mut found: Option<DVector<f64>> = None;
    for mask in 0u32..(1u32 << m) {
        let inactive: Vec<usize> = (0..m).filter(|&p| mask & (1 << p) == 0).collect();
        let mut x = DVector::zeros(m);
        if !inactive.is_empty() {
            let sub = a.select_rows(&inactive).select_columns(&inactive);
            let rhs = DVector::from_iterator(inactive.len(), inactive.iter().map(|&p| r[p]));
            let Some(sol) = sub.lu().solve(&rhs) else {
                continue;
            };
            for (k, &p) in inactive.iter().enumerate() {
                x[p] = sol[k];
            }
        }
        let multiplier = &a * &x - &r;
        let feasible = (0..m).all(|p| {
            if mask & (1 << p) == 0 {
                x[p] >= -FEAS_TOL
            } else {
                multiplier[p] >= -FEAS_TOL
            }
        });
        if !feasible {
            continue;
        }
        match &found {
            None => found = Some(x),
            // Degenerate nodes (zero value and zero multiplier) let several
            // active sets pass; they must describe the same point.
            Some(prev) if (prev - &x).amax() > 1e-8 => {
                return Err(Error::Oracle(
                    "two feasible active sets give different solutions".into(),
                ));
            }
            Some(_) => {}
        }
    }
    let x = found.ok_or_else(|| Error::Oracle("no active set is primal and dual feasible".into()))?;
    for (p, &i) in free.iter().enumerate() {
        fixed[i] = x[p].max(0.0);
    }
    Ok(FeField::new(fixed))
}
