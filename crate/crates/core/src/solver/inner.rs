//! Inner convex solves of the fixed-point iteration.
//!
//! With the boundary subgradient frozen, each outer step minimizes
//! `1/2 u^T (S + kappa W3) u + (1/lambda) Phi(u) - r^T u` over the nodal
//! constraint set, where `Phi` is the lumped penalty potential. Both shipped
//! penalty functions are piecewise linear with slope `c` (`p0` on `r < 0`,
//! `p2` everywhere), so the nonlinearity is carried by per-node weights.

use nalgebra_sparse::CsrMatrix;

use crate::linalg;

#[derive(Debug, Clone)]
pub(crate) struct ConvexProblem<'a> {
    pub a: &'a CsrMatrix<f64>,
    /// Implicit Robin part `kappa w3_i`, added to the diagonal.
    pub diag: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Nodes held at `values` (Gamma1, and Gamma2 when pinned).
    pub pinned: Vec<bool>,
    pub values: Vec<f64>,
    pub nonneg: Vec<bool>,
    /// `c0 m_i / lambda`, acting on `min(u_i, 0)`.
    pub pen0: Vec<f64>,
    /// `c2 w2_i / lambda`, acting on `u_i - b_i`.
    pub pen2: Vec<f64>,
    pub b: Vec<f64>,
}

impl ConvexProblem<'_> {
    fn n(&self) -> usize {
        self.rhs.len()
    }

    /// Gradient of the convex energy at `u`.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g = linalg::matvec(self.a, u);
        for i in 0..self.n() {
            g[i] +=
                self.diag[i] * u[i] + self.pen0[i] * u[i].min(0.0) + self.pen2[i] * (u[i] - self.b[i]) - self.rhs[i];
        }
        g
    }
}

/// Projected SOR. Returns the number of sweeps.
pub(crate) fn psor(
    cp: &ConvexProblem,
    u: &mut [f64],
    omega: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<usize, String> {
    let n = cp.n();
    let mut diag_a = vec![0.0; n];
    for (i, j, v) in cp.a.triplet_iter() {
        if i == j {
            diag_a[i] = *v;
        }
    }
    let order: Vec<usize> = (0..n).filter(|&i| !cp.pinned[i]).collect();
    let mut last = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        let mut max_delta = 0.0f64;
        let mut scale = 1.0f64;
        for &i in &order {
            let row = cp.a.row(i);
            let mut off = 0.0;
            for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                if j != i {
                    off += v * u[j];
                }
            }
            let d = diag_a[i] + cp.diag[i];
            // Exact minimizer along coordinate i of the piecewise quadratic.
            let base = cp.rhs[i] - off + cp.pen2[i] * cp.b[i];
            let mut z = base / (d + cp.pen2[i]);
            if z < 0.0 && cp.pen0[i] > 0.0 {
                z = base / (d + cp.pen2[i] + cp.pen0[i]);
            }
            let old = u[i];
            // Over-relax only where the coordinate energy is a single quadratic.
            let smooth = cp.pen0[i] == 0.0 || (old >= 0.0 && z >= 0.0);
            let mut new = if smooth { old + omega * (z - old) } else { z };
            if cp.nonneg[i] && new < 0.0 {
                new = 0.0;
            }
            max_delta = max_delta.max((new - old).abs());
            scale = scale.max(new.abs());
            u[i] = new;
        }
        last = max_delta / scale;
        if !last.is_finite() {
            return Err(format!("PSOR diverged at sweep {sweep}"));
        }
        if last <= tol {
            return Ok(sweep);
        }
    }
    Err(format!(
        "PSOR did not converge in {max_sweeps} sweeps (last scaled increment {last:e})"
    ))
}

/// Semismooth Newton / primal-dual active set method. Each step fixes the
/// active constraint set and the set where `p0` is switched on, solves the
/// resulting linear system, and updates both sets; it stops when they repeat.
pub(crate) fn newton(cp: &ConvexProblem, u: &mut [f64], max_iter: usize) -> Result<usize, String> {
    let n = cp.n();
    let mut active: Vec<bool> = (0..n).map(|i| cp.nonneg[i] && !cp.pinned[i] && u[i] <= 0.0).collect();
    let mut neg: Vec<bool> = (0..n).map(|i| cp.pen0[i] > 0.0 && u[i] < 0.0).collect();
    for it in 1..=max_iter {
        let pinned: Vec<bool> = (0..n).map(|i| cp.pinned[i] || active[i]).collect();
        let values: Vec<f64> = (0..n).map(|i| if cp.pinned[i] { cp.values[i] } else { 0.0 }).collect();
        let diag: Vec<f64> = (0..n)
            .map(|i| cp.diag[i] + cp.pen2[i] + if neg[i] { cp.pen0[i] } else { 0.0 })
            .collect();
        let rhs: Vec<f64> = (0..n).map(|i| cp.rhs[i] + cp.pen2[i] * cp.b[i]).collect();
        let next = linalg::solve_pinned(cp.a, &diag, &pinned, &values, &rhs).map_err(|e| e.to_string())?;
        u.copy_from_slice(&next);

        // Multipliers live on the active set; primal violations on the rest.
        // Roundoff-sized values are treated as zero so degenerate nodes
        // cannot make the sets cycle.
        let grad = cp.gradient(u);
        let tol_u = 1e-14 * u.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let tol_g = 1e-14 * rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let new_active: Vec<bool> = (0..n)
            .map(|i| cp.nonneg[i] && !cp.pinned[i] && if active[i] { grad[i] > -tol_g } else { u[i] < -tol_u })
            .collect();
        let new_neg: Vec<bool> = (0..n).map(|i| cp.pen0[i] > 0.0 && u[i] < 0.0).collect();
        if new_active == active && new_neg == neg {
            for i in 0..n {
                if cp.nonneg[i] && u[i] < 0.0 {
                    u[i] = 0.0;
                }
            }
            return Ok(it);
        }
        active = new_active;
        neg = new_neg;
    }
    Err(format!(
        "semismooth Newton did not settle its active sets in {max_iter} steps"
    ))
}
