//! P1 finite-element operators on a [`TriMesh`].
//!
//! All operators are assembled over the full node set. The space `V_h` is the
//! set of nodal vectors vanishing on the `Gamma1` nodes; `free_dofs` lists the
//! remaining nodes.

use std::ops::{Deref, DerefMut};
use std::path::Path;

use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};
use crate::geometry::{edge_length, BoundaryTag, NodeClass, Point, TriMesh};
use crate::linalg::{self, BandMatrix, BandedCholesky};

/// Nodal coefficient vector of a P1 function.
#[derive(Debug, Clone, PartialEq)]
pub struct FeField {
    pub values: Vec<f64>,
}

impl FeField {
    pub fn new(values: Vec<f64>) -> Self {
        FeField { values }
    }

    pub fn zeros(n: usize) -> Self {
        FeField { values: vec![0.0; n] }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        FeField { values: vec![c; n] }
    }

    pub fn interpolate(mesh: &TriMesh, g: impl FnMut(Point) -> f64) -> Self {
        FeField {
            values: mesh.interpolate(g),
        }
    }

    pub fn axpy(&self, a: f64, other: &FeField) -> FeField {
        FeField {
            values: self.values.iter().zip(&other.values).map(|(x, y)| x + a * y).collect(),
        }
    }

    pub fn sub(&self, other: &FeField) -> FeField {
        self.axpy(-1.0, other)
    }

    /// True when the field vanishes on every `Gamma1` node, i.e. represents
    /// an element of `V_h`.
    pub fn is_in_v(&self, mesh: &TriMesh) -> bool {
        (0..mesh.num_nodes()).all(|n| mesh.node_class(n) != NodeClass::Gamma1 || self.values[n] == 0.0)
    }
}

impl Deref for FeField {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl DerefMut for FeField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

impl From<Vec<f64>> for FeField {
    fn from(values: Vec<f64>) -> Self {
        FeField { values }
    }
}

/// Assembled operators of the discrete problem.
#[derive(Debug, Clone)]
pub struct FeOperators {
    /// `a(u, v) = int grad u . grad v`.
    pub stiffness: CsrMatrix<f64>,
    /// `L^2(D)` inner product.
    pub mass: CsrMatrix<f64>,
    /// `L^2(Gamma3)` inner product.
    pub gamma3_mass: CsrMatrix<f64>,
    /// `L^2(Gamma2)` inner product.
    pub gamma2_mass: CsrMatrix<f64>,
    /// Row sums of `gamma3_mass`; nodal quadrature weights of the exchange boundary.
    pub gamma3_weights: Vec<f64>,
    /// Row sums of `gamma2_mass`.
    pub gamma2_weights: Vec<f64>,
    /// Row sums of `mass`.
    pub lumped_mass: Vec<f64>,
    /// Nodes not on `Gamma1`.
    pub free_dofs: Vec<usize>,
    /// `S + M`, the Gram matrix of the `V` inner product.
    pub v_gram: CsrMatrix<f64>,
}

/// Assembles the P1 stiffness, mass and boundary mass matrices.
pub fn assemble(mesh: &TriMesh) -> Result<FeOperators> {
    let n = mesh.num_nodes();
    let mut stiff = CooMatrix::new(n, n);
    let mut mass = CooMatrix::new(n, n);

    for (t, tri) in mesh.triangles.iter().enumerate() {
        let det = mesh.signed_double_area(t);
        let area = 0.5 * det;
        if !(area > 1e-14 * mesh.alpha * mesh.beta) {
            return Err(Error::DegenerateTriangle { index: t, area });
        }
        let [a, b, c] = tri.map(|k| mesh.nodes[k]);
        // Gradients of the barycentric coordinates times det.
        let grads = [
            [b[1] - c[1], c[0] - b[0]],
            [c[1] - a[1], a[0] - c[0]],
            [a[1] - b[1], b[0] - a[0]],
        ];
        for p in 0..3 {
            for q in 0..3 {
                let s = (grads[p][0] * grads[q][0] + grads[p][1] * grads[q][1]) / (2.0 * det);
                stiff.push(tri[p], tri[q], s);
                let m = if p == q { area / 6.0 } else { area / 12.0 };
                mass.push(tri[p], tri[q], m);
            }
        }
    }

    let boundary_mass = |tag: BoundaryTag| {
        let mut coo = CooMatrix::new(n, n);
        for e in mesh.boundary_edges.iter().filter(|e| e.tag == tag) {
            let [i, j] = e.nodes;
            let len = edge_length(mesh.nodes[i], mesh.nodes[j]);
            coo.push(i, i, len / 3.0);
            coo.push(j, j, len / 3.0);
            coo.push(i, j, len / 6.0);
            coo.push(j, i, len / 6.0);
        }
        CsrMatrix::from(&coo)
    };

    let stiffness = CsrMatrix::from(&stiff);
    let mass = CsrMatrix::from(&mass);
    let gamma3_mass = boundary_mass(BoundaryTag::Gamma3);
    let gamma2_mass = boundary_mass(BoundaryTag::Gamma2);
    let row_sums = |a: &CsrMatrix<f64>| -> Vec<f64> { a.row_iter().map(|r| r.values().iter().sum()).collect() };
    let v_gram = &stiffness + &mass;

    Ok(FeOperators {
        gamma3_weights: row_sums(&gamma3_mass),
        gamma2_weights: row_sums(&gamma2_mass),
        lumped_mass: row_sums(&mass),
        free_dofs: (0..n).filter(|&k| mesh.node_class(k) != NodeClass::Gamma1).collect(),
        stiffness,
        mass,
        gamma3_mass,
        gamma2_mass,
        v_gram,
    })
}

impl FeOperators {
    pub fn num_nodes(&self) -> usize {
        self.stiffness.nrows()
    }

    /// Mask of the `Gamma1` nodes.
    pub fn gamma1_mask(&self) -> Vec<bool> {
        let mut mask = vec![true; self.num_nodes()];
        for &k in &self.free_dofs {
            mask[k] = false;
        }
        mask
    }

    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        linalg::quad_form(&self.mass, v).max(0.0).sqrt()
    }

    pub fn gamma2_norm(&self, v: &[f64]) -> f64 {
        linalg::quad_form(&self.gamma2_mass, v).max(0.0).sqrt()
    }

    pub fn gamma3_norm(&self, v: &[f64]) -> f64 {
        linalg::quad_form(&self.gamma3_mass, v).max(0.0).sqrt()
    }

    pub fn grad_norm(&self, v: &[f64]) -> f64 {
        linalg::quad_form(&self.stiffness, v).max(0.0).sqrt()
    }

    /// `(f, v)_{L^2(D)}` for nodal `f` and `v`.
    pub fn l2_inner(&self, f: &[f64], v: &[f64]) -> f64 {
        linalg::bilinear(&self.mass, f, v)
    }

    /// Load vector `M f` of the `L^2(D)` functional `v -> (f, v)`.
    pub fn load(&self, f: &[f64]) -> Vec<f64> {
        linalg::matvec(&self.mass, f)
    }

    /// Exports every operator in coordinate text format.
    pub fn write_coo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        linalg::write_coo(&self.stiffness, &dir.join("stiffness.coo"))?;
        linalg::write_coo(&self.mass, &dir.join("mass.coo"))?;
        linalg::write_coo(&self.gamma2_mass, &dir.join("gamma2_mass.coo"))?;
        linalg::write_coo(&self.gamma3_mass, &dir.join("gamma3_mass.coo"))?;
        Ok(())
    }
}

/// `sqrt(v^T (S + M) v)`, the `H^1(D)` norm of the P1 function `v`.
pub fn v_norm(ops: &FeOperators, v: &[f64]) -> f64 {
    linalg::quad_form(&ops.v_gram, v).max(0.0).sqrt()
}

/// Sharp discrete constants of the Friedrichs-Poincare and trace inequalities
/// on `V_h`, with the maximizing modes.
#[derive(Debug, Clone)]
pub struct DiscreteConstants {
    /// `max ||v||_V / ||grad v||`.
    pub c0: f64,
    /// `max ||v||_{L^2(Gamma3)} / ||v||_V`.
    pub c3: f64,
    pub c0_mode: Vec<f64>,
    pub c3_mode: Vec<f64>,
    pub iterations: [usize; 2],
}

impl DiscreteConstants {
    /// `alpha * c0^2 * c3^2`; the discrete problem is uniquely solvable and
    /// the fixed-point iteration contracts when this is below one.
    pub fn smallness_product(&self, alpha_jnu: f64) -> f64 {
        alpha_jnu * self.c0.powi(2) * self.c3.powi(2)
    }
}

const EIG_TOL: f64 = 1e-8;
const EIG_MAX_ITER: usize = 20_000;

/// Computes `c0_h` and `c3_h` by power iteration on the generalized problems
/// `M v = (mu - 1) S v` and `B3 v = mu (S + M) v` restricted to `V_h`.
pub fn discrete_constants(ops: &FeOperators) -> Result<DiscreteConstants> {
    if ops.free_dofs.is_empty() {
        return Err(Error::InvalidArgument("mesh has no free degrees of freedom".into()));
    }
    let pinned = ops.gamma1_mask();
    let zeros = vec![0.0; ops.num_nodes()];
    let s_chol = BandMatrix::from_csr_pinned(&ops.stiffness, &zeros, &pinned).cholesky()?;
    let v_chol = BandMatrix::from_csr_pinned(&ops.v_gram, &zeros, &pinned).cholesky()?;

    let (mass_ratio, c0_mode, it0) = power_iteration("c0", &ops.mass, &ops.stiffness, &s_chol, &pinned)?;
    let (trace_ratio, c3_mode, it3) = power_iteration("c3", &ops.gamma3_mass, &ops.v_gram, &v_chol, &pinned)?;

    Ok(DiscreteConstants {
        c0: (1.0 + mass_ratio).sqrt(),
        c3: trace_ratio.sqrt(),
        c0_mode,
        c3_mode,
        iterations: [it0, it3],
    })
}

/// Largest `mu` with `A v = mu B v` on the unpinned nodes, given a
/// factorization of `B`.
fn power_iteration(
    what: &'static str,
    a: &CsrMatrix<f64>,
    b: &CsrMatrix<f64>,
    b_chol: &BandedCholesky,
    pinned: &[bool],
) -> Result<(f64, Vec<f64>, usize)> {
    let restrict = |v: &mut [f64]| {
        for (x, &p) in v.iter_mut().zip(pinned) {
            if p {
                *x = 0.0;
            }
        }
    };
    let mut x: Vec<f64> = pinned.iter().map(|&p| if p { 0.0 } else { 1.0 }).collect();
    let mut residual = f64::INFINITY;
    for it in 1..=EIG_MAX_ITER {
        let mut ax = linalg::matvec(a, &x);
        restrict(&mut ax);
        let mut bx = linalg::matvec(b, &x);
        restrict(&mut bx);
        let rho = linalg::dot(&x, &ax) / linalg::dot(&x, &bx);
        let r_norm = ax
            .iter()
            .zip(&bx)
            .map(|(p, q)| (p - rho * q).powi(2))
            .sum::<f64>()
            .sqrt();
        let a_norm = linalg::dot(&ax, &ax).sqrt();
        residual = if a_norm > 0.0 { r_norm / a_norm } else { 0.0 };
        if residual <= EIG_TOL {
            let scale = linalg::dot(&x, &bx).sqrt();
            x.iter_mut().for_each(|v| *v /= scale);
            return Ok((rho, x, it));
        }
        b_chol.solve_in_place(&mut ax);
        restrict(&mut ax);
        let norm = linalg::dot(&ax, &ax).sqrt();
        if !(norm > 0.0) {
            return Err(Error::EigenNonConvergence {
                what,
                iterations: it,
                residual,
            });
        }
        x = ax.into_iter().map(|v| v / norm).collect();
    }
    Err(Error::EigenNonConvergence {
        what,
        iterations: EIG_MAX_ITER,
        residual,
    })
}

/// Mesh, operators and the discrete constants, shared by every problem
/// posed on the same mesh.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: TriMesh,
    pub ops: FeOperators,
    pub constants: DiscreteConstants,
    riesz: BandedCholesky,
}

impl Discretization {
    pub fn new(mesh: TriMesh) -> Result<Self> {
        let ops = assemble(&mesh)?;
        let constants = discrete_constants(&ops)?;
        let zeros = vec![0.0; ops.num_nodes()];
        let riesz = BandMatrix::from_csr_pinned(&ops.v_gram, &zeros, &ops.gamma1_mask()).cholesky()?;
        Ok(Discretization {
            mesh,
            ops,
            constants,
            riesz,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_nodes()
    }

    pub fn v_norm(&self, v: &[f64]) -> f64 {
        v_norm(&self.ops, v)
    }

    /// Norm in the dual of `V_h` of the functional with nodal coefficients
    /// `r` (entries on `Gamma1` are ignored).
    pub fn dual_norm(&self, r: &[f64]) -> f64 {
        let mut x = vec![0.0; r.len()];
        for &k in &self.ops.free_dofs {
            x[k] = r[k];
        }
        let rhs = x.clone();
        self.riesz.solve_in_place(&mut x);
        linalg::dot(&rhs, &x).max(0.0).sqrt()
    }
}

// Degree-5 seven-point rule on the reference triangle (barycentric, weights sum to 1).
const QUAD7: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    (
        [0.059715871789770, 0.470142064105115, 0.470142064105115],
        0.132394152788506,
    ),
    (
        [0.470142064105115, 0.059715871789770, 0.470142064105115],
        0.132394152788506,
    ),
    (
        [0.470142064105115, 0.470142064105115, 0.059715871789770],
        0.132394152788506,
    ),
    (
        [0.797426985353087, 0.101286507323456, 0.101286507323456],
        0.125939180544827,
    ),
    (
        [0.101286507323456, 0.797426985353087, 0.101286507323456],
        0.125939180544827,
    ),
    (
        [0.101286507323456, 0.101286507323456, 0.797426985353087],
        0.125939180544827,
    ),
];

/// `||u_h - u||_{L^2(D)}` by seven-point quadrature on every triangle.
pub fn l2_error(mesh: &TriMesh, u_h: &[f64], exact: impl Fn(Point) -> f64) -> f64 {
    let mut sum = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = 0.5 * mesh.signed_double_area(t);
        let pts = tri.map(|k| mesh.nodes[k]);
        let vals = tri.map(|k| u_h[k]);
        for (bary, w) in QUAD7 {
            let p = [
                bary[0] * pts[0][0] + bary[1] * pts[1][0] + bary[2] * pts[2][0],
                bary[0] * pts[0][1] + bary[1] * pts[1][1] + bary[2] * pts[2][1],
            ];
            let uh = bary[0] * vals[0] + bary[1] * vals[1] + bary[2] * vals[2];
            sum += w * area * (uh - exact(p)).powi(2);
        }
    }
    sum.sqrt()
}

/// `||grad u_h - grad u||_{L^2(D)}` by seven-point quadrature.
pub fn grad_error(mesh: &TriMesh, u_h: &[f64], exact_grad: impl Fn(Point) -> [f64; 2]) -> f64 {
    let mut sum = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let det = mesh.signed_double_area(t);
        let pts = tri.map(|k| mesh.nodes[k]);
        let [a, b, c] = pts;
        let [ua, ub, uc] = tri.map(|k| u_h[k]);
        let gx = (ua * (b[1] - c[1]) + ub * (c[1] - a[1]) + uc * (a[1] - b[1])) / det;
        let gy = (ua * (c[0] - b[0]) + ub * (a[0] - c[0]) + uc * (b[0] - a[0])) / det;
        for (bary, w) in QUAD7 {
            let p = [
                bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
                bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
            ];
            let g = exact_grad(p);
            sum += w * 0.5 * det * ((gx - g[0]).powi(2) + (gy - g[1]).powi(2));
        }
    }
    sum.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_rect_mesh;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn ops(nx: usize, ny: usize) -> (TriMesh, FeOperators) {
        let mesh = build_rect_mesh(1.0, 1.0, nx, ny).unwrap();
        let ops = assemble(&mesh).unwrap();
        (mesh, ops)
    }

    #[test]
    fn stiffness_kills_constants() {
        let (_, ops) = ops(1, 1);
        for row in ops.stiffness.row_iter() {
            let s: f64 = row.values().iter().sum();
            assert!(s.abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_integrals() {
        for (nx, ny) in [(1, 1), (3, 5), (8, 8)] {
            let (mesh, ops) = ops(nx, ny);
            let x1 = mesh.interpolate(|p| p[0]);
            let one = vec![1.0; mesh.num_nodes()];
            assert!((linalg::quad_form(&ops.stiffness, &x1) - 1.0).abs() < 1e-12);
            assert!((linalg::quad_form(&ops.gamma3_mass, &one) - 2.0).abs() < 1e-12);
            assert!((linalg::quad_form(&ops.gamma2_mass, &one) - 1.0).abs() < 1e-12);
            assert!((linalg::quad_form(&ops.mass, &x1) - 1.0 / 3.0).abs() < 1e-12);
            // Mass is exact for products of P1 functions.
            let xy = mesh.interpolate(|p| p[0] + 2.0 * p[1]);
            // int (x + 2y)^2 = 1/3 + 4 * 1/4 + 4/3
            assert!((linalg::quad_form(&ops.mass, &xy) - 8.0 / 3.0).abs() < 1e-12);
            assert!((ops.gamma3_weights.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            assert!((ops.lumped_mass.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn v_norm_examples() {
        let (mesh, ops) = ops(4, 4);
        assert_eq!(v_norm(&ops, &vec![0.0; mesh.num_nodes()]), 0.0);
        assert!((v_norm(&ops, &vec![1.0; mesh.num_nodes()]) - 1.0).abs() < 1e-13);
        let x1 = mesh.interpolate(|p| p[0]);
        assert!((v_norm(&ops, &x1) - (1.0f64 + 1.0 / 3.0).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn degenerate_triangle_reported() {
        let mut mesh = build_rect_mesh(1.0, 1.0, 2, 2).unwrap();
        let t = 3;
        let [a, _, c] = mesh.triangles[t];
        mesh.triangles[t] = [a, c, c];
        match assemble(&mesh) {
            Err(Error::DegenerateTriangle { index, .. }) => assert_eq!(index, t),
            other => panic!("expected degenerate triangle error, got {other:?}"),
        }
    }

    fn dense(a: &CsrMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), idx.len(), |p, q| {
            a.get_entry(idx[p], idx[q]).map(|e| e.into_value()).unwrap_or(0.0)
        })
    }

    /// Largest eigenvalue of `A v = mu B v` via `L^{-1} A L^{-T}`.
    fn dense_generalized_max(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let l = b.clone().cholesky().unwrap().l();
        let linv = l.clone().try_inverse().unwrap();
        let c = &linv * a * linv.transpose();
        let c = (&c + c.transpose()) * 0.5;
        SymmetricEigen::new(c).eigenvalues.max()
    }

    #[test]
    fn constants_match_dense_oracle() {
        let (_, ops) = ops(8, 8);
        let k = discrete_constants(&ops).unwrap();
        let idx = &ops.free_dofs;
        assert_eq!(idx.len(), 72);
        let s = dense(&ops.stiffness, idx);
        let m = dense(&ops.mass, idx);
        let b3 = dense(&ops.gamma3_mass, idx);
        let c0_sq = dense_generalized_max(&(&s + &m), &s);
        let c3_sq = dense_generalized_max(&b3, &(&s + &m));
        assert!((k.c0 - c0_sq.sqrt()).abs() < 1e-6, "{} vs {}", k.c0, c0_sq.sqrt());
        assert!((k.c3 - c3_sq.sqrt()).abs() < 1e-6, "{} vs {}", k.c3, c3_sq.sqrt());
        assert!(k.c0 > 1.0 && k.c3 > 0.0);
    }

    #[test]
    fn modes_attain_the_constants() {
        let (_, ops) = ops(6, 6);
        let k = discrete_constants(&ops).unwrap();
        let ratio0 = v_norm(&ops, &k.c0_mode) / ops.grad_norm(&k.c0_mode);
        let ratio3 = ops.gamma3_norm(&k.c3_mode) / v_norm(&ops, &k.c3_mode);
        assert!((ratio0 - k.c0).abs() <= 1e-6);
        assert!((ratio3 - k.c3).abs() <= 1e-6);
    }

    #[test]
    fn c0_nondecreasing_under_refinement() {
        let c0: Vec<f64> = [4, 8, 16]
            .iter()
            .map(|&n| discrete_constants(&ops(n, n).1).unwrap().c0)
            .collect();
        assert!(c0[0] <= c0[1] + 1e-12 && c0[1] <= c0[2] + 1e-12, "{c0:?}");
        assert!((c0[2] - c0[1]).abs() < (c0[1] - c0[0]).abs());
        // Continuous value for this geometry: sqrt(1 + 4 / pi^2).
        let limit = (1.0 + 4.0 / std::f64::consts::PI.powi(2)).sqrt();
        assert!(c0[2] <= limit + 1e-12);
    }

    #[test]
    fn quadrature_errors_vanish_for_linear_functions() {
        let (mesh, _) = ops(3, 2);
        let u = mesh.interpolate(|p| 1.0 + p[0] - 3.0 * p[1]);
        assert!(l2_error(&mesh, &u, |p| 1.0 + p[0] - 3.0 * p[1]) < 1e-13);
        assert!(grad_error(&mesh, &u, |_| [1.0, -3.0]) < 1e-13);
    }

    #[test]
    fn manufactured_solution_converges_at_optimal_orders() {
        use std::f64::consts::PI;
        // u = sin(pi x / 2) (2 + cos(pi y)): zero on Gamma1, zero flux on Gamma3.
        let exact = |[x, y]: Point| (0.5 * PI * x).sin() * (2.0 + (PI * y).cos());
        let grad = |[x, y]: Point| {
            [
                0.5 * PI * (0.5 * PI * x).cos() * (2.0 + (PI * y).cos()),
                -PI * (0.5 * PI * x).sin() * (PI * y).sin(),
            ]
        };
        let source =
            |[x, y]: Point| (0.5 * PI * x).sin() * (0.25 * PI * PI * (2.0 + (PI * y).cos()) + PI * PI * (PI * y).cos());
        let errors: Vec<(f64, f64)> = [8, 16, 32]
            .iter()
            .map(|&n| {
                let (mesh, ops) = ops(n, n);
                let pinned: Vec<bool> = (0..mesh.num_nodes())
                    .map(|i| mesh.node_class(i) != NodeClass::Free)
                    .collect();
                let boundary = mesh.interpolate(|p| if p[0] > 0.5 { exact(p) } else { 0.0 });
                let load = ops.load(&mesh.interpolate(source));
                let zeros = vec![0.0; mesh.num_nodes()];
                let u = linalg::solve_pinned(&ops.stiffness, &zeros, &pinned, &boundary, &load).unwrap();
                (l2_error(&mesh, &u, exact), grad_error(&mesh, &u, grad))
            })
            .collect();
        for w in errors.windows(2) {
            let l2_order = (w[0].0 / w[1].0).log2();
            let h1_order = (w[0].1 / w[1].1).log2();
            assert!(l2_order >= 1.9, "L2 order {l2_order}");
            assert!(h1_order >= 0.9, "H1 order {h1_order}");
        }
    }
}
