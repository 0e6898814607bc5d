//! Constitutive data: the heat-exchange potential on `Gamma3`, the penalty
//! functions, and the Dirichlet datum with its nonnegative lifting.
//!
//! Every shipped potential is piecewise `C^1`, so its Clarke directional
//! derivative is evaluated from the one-sided derivatives,
//! `j0(r; s) = max(j'_-(r) s, j'_+(r) s)`, and the generalized gradient is the
//! interval between them.

use crate::error::{Error, Result};
use crate::fem::FeField;
use crate::geometry::{NodeClass, TriMesh};

/// Potential `j_nu` of the boundary law `-du/dnu in d j_nu(u)` on `Gamma3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryLaw {
    /// `j_nu = 0`: homogeneous flux condition.
    Zero,
    /// `j_nu(r) = q0 r + k r^2 / 2`: prescribed flux `q0` plus a Robin term.
    Linear { q0: f64, k: f64 },
    /// Piecewise quadratic potential whose derivative is the nonmonotone
    /// exchange rate `a r` up to `r0`, then decreasing with slope
    /// `-slope_drop` until it reaches zero, then zero.
    Nonmonotone { a: f64, r0: f64, slope_drop: f64 },
}

pub fn law_zero() -> BoundaryLaw {
    BoundaryLaw::Zero
}

pub fn law_linear(q0: f64, k: f64) -> Result<BoundaryLaw> {
    if !q0.is_finite() || !(k >= 0.0 && k.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "linear law needs finite q0 and k >= 0 (q0 = {q0}, k = {k})"
        )));
    }
    Ok(BoundaryLaw::Linear { q0, k })
}

pub fn law_nonmonotone(a: f64, r0: f64, slope_drop: f64) -> Result<BoundaryLaw> {
    let positive = |v: f64| v > 0.0 && v.is_finite();
    if !(positive(a) && positive(r0) && positive(slope_drop)) {
        return Err(Error::InvalidArgument(format!(
            "nonmonotone law needs a, r0, slope_drop > 0 (a = {a}, r0 = {r0}, slope_drop = {slope_drop})"
        )));
    }
    Ok(BoundaryLaw::Nonmonotone { a, r0, slope_drop })
}

impl BoundaryLaw {
    /// `j_nu(r)`.
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            BoundaryLaw::Zero => 0.0,
            BoundaryLaw::Linear { q0, k } => q0 * r + 0.5 * k * r * r,
            BoundaryLaw::Nonmonotone { a, r0, slope_drop } => {
                let r1 = r0 + a * r0 / slope_drop;
                let rising = |r: f64| 0.5 * a * r * r;
                let falling = |r: f64| {
                    let d = r - r0;
                    rising(r0) + a * r0 * d - 0.5 * slope_drop * d * d
                };
                if r <= r0 {
                    rising(r)
                } else if r <= r1 {
                    falling(r)
                } else {
                    falling(r1)
                }
            }
        }
    }

    /// Left and right derivatives of `j_nu` at `r`.
    pub fn one_sided(&self, r: f64) -> (f64, f64) {
        match *self {
            BoundaryLaw::Zero => (0.0, 0.0),
            BoundaryLaw::Linear { q0, k } => (q0 + k * r, q0 + k * r),
            BoundaryLaw::Nonmonotone { a, r0, slope_drop } => {
                let rate = if r <= r0 {
                    a * r
                } else {
                    (a * r0 - slope_drop * (r - r0)).max(0.0)
                };
                (rate, rate)
            }
        }
    }

    /// Clarke directional derivative `j0_nu(r; s)`.
    pub fn dir_deriv(&self, r: f64, s: f64) -> f64 {
        let (left, right) = self.one_sided(r);
        (left * s).max(right * s)
    }

    /// Midpoint of the generalized gradient `d j_nu(r)`.
    pub fn subgrad(&self, r: f64) -> f64 {
        let (left, right) = self.one_sided(r);
        0.5 * (left + right)
    }

    /// Generalized gradient as an interval.
    pub fn subdifferential(&self, r: f64) -> (f64, f64) {
        let (left, right) = self.one_sided(r);
        (left.min(right), left.max(right))
    }

    /// `(c0, c1)` with `|xi| <= c0 + c1 |r|` for every `xi` in `d j_nu(r)`.
    pub fn growth_constants(&self) -> (f64, f64) {
        match *self {
            BoundaryLaw::Zero => (0.0, 0.0),
            BoundaryLaw::Linear { q0, k } => (q0.abs(), k),
            BoundaryLaw::Nonmonotone { a, .. } => (0.0, a),
        }
    }

    pub fn c_bar0(&self) -> f64 {
        self.growth_constants().0
    }

    pub fn c_bar1(&self) -> f64 {
        self.growth_constants().1
    }

    /// Relaxed monotonicity constant: the sharp `alpha` with
    /// `j0(r1; r2 - r1) + j0(r2; r1 - r2) <= alpha |r1 - r2|^2`.
    pub fn alpha_jnu(&self) -> f64 {
        match *self {
            BoundaryLaw::Zero | BoundaryLaw::Linear { .. } => 0.0,
            BoundaryLaw::Nonmonotone { slope_drop, .. } => slope_drop,
        }
    }

    /// Coefficient of the monotone quadratic part `kappa r^2 / 2` that the
    /// solver treats implicitly. The remainder `j_nu - kappa r^2 / 2` enters
    /// the fixed-point iteration through its subgradient.
    pub fn implicit_coefficient(&self) -> f64 {
        match *self {
            BoundaryLaw::Linear { k, .. } => k,
            _ => 0.0,
        }
    }

    /// Subgradient of the explicitly treated remainder.
    pub fn explicit_subgrad(&self, r: f64) -> f64 {
        self.subgrad(r) - self.implicit_coefficient() * r
    }

    /// Lipschitz constant of `r -> explicit_subgrad(r)`.
    pub fn explicit_lipschitz(&self) -> f64 {
        match *self {
            BoundaryLaw::Zero | BoundaryLaw::Linear { .. } => 0.0,
            BoundaryLaw::Nonmonotone { a, slope_drop, .. } => a.max(slope_drop),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyKind {
    /// `p0`, vanishing exactly on `r >= 0`; penalizes `u < 0` in `D`.
    DomainNonneg,
    /// `p2`, vanishing exactly at `r = 0`; penalizes `u != b` on `Gamma2`.
    BoundaryEq,
}

/// The penalty functions `p0(r) = -c r^-` and `p2(r) = c r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyLaw {
    pub kind: PenaltyKind,
    pub c: f64,
}

pub fn penalty_p0(c: f64) -> Result<PenaltyLaw> {
    PenaltyLaw::new(PenaltyKind::DomainNonneg, c)
}

pub fn penalty_p2(c: f64) -> Result<PenaltyLaw> {
    PenaltyLaw::new(PenaltyKind::BoundaryEq, c)
}

impl PenaltyLaw {
    pub fn new(kind: PenaltyKind, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "penalty constant must be positive, got {c}"
            )));
        }
        Ok(PenaltyLaw { kind, c })
    }

    pub fn value(&self, r: f64) -> f64 {
        match self.kind {
            PenaltyKind::DomainNonneg => -self.c * (-r).max(0.0),
            PenaltyKind::BoundaryEq => self.c * r,
        }
    }

    /// Slope of the active linear piece at `r` (an element of the
    /// generalized derivative).
    pub fn slope(&self, r: f64) -> f64 {
        match self.kind {
            PenaltyKind::DomainNonneg if r >= 0.0 => 0.0,
            _ => self.c,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        self.c
    }

    /// `value(r) == 0`, decided from the definition rather than by a tolerance.
    pub fn vanishes_at(&self, r: f64) -> bool {
        match self.kind {
            PenaltyKind::DomainNonneg => r >= 0.0,
            PenaltyKind::BoundaryEq => r == 0.0,
        }
    }
}

/// Dirichlet datum `b` on `Gamma2` together with a lifting `u_b in V`,
/// `u_b >= 0` in `D`, `u_b = b` on `Gamma2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletDatum {
    pub lifting: FeField,
}

/// The lifting `u_b(x1, x2) = (x1 / alpha) phi(x2)`, interpolated at the nodes.
pub fn dirichlet_example(phi: impl Fn(f64) -> f64, mesh: &TriMesh) -> Result<DirichletDatum> {
    let mut values = Vec::with_capacity(mesh.num_nodes());
    for &[x1, x2] in &mesh.nodes {
        let p = phi(x2);
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::InvalidDatum(format!(
                "phi({x2}) = {p} is not a finite nonnegative value"
            )));
        }
        values.push(x1 / mesh.alpha * p);
    }
    Ok(DirichletDatum {
        lifting: FeField::new(values),
    })
}

impl DirichletDatum {
    pub fn zero(mesh: &TriMesh) -> Self {
        DirichletDatum {
            lifting: FeField::zeros(mesh.num_nodes()),
        }
    }

    /// Datum given by its values at the `Gamma2` nodes, ordered by `x2`.
    pub fn from_gamma2_values(mesh: &TriMesh, values: &[f64]) -> Result<Self> {
        if values.len() != mesh.ny + 1 {
            return Err(Error::InvalidDatum(format!(
                "expected {} boundary values, got {}",
                mesh.ny + 1,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidDatum(format!(
                "negative or non-finite boundary value {v}"
            )));
        }
        let lifting = (0..mesh.num_nodes())
            .map(|n| {
                let j = n % (mesh.ny + 1);
                mesh.nodes[n][0] / mesh.alpha * values[j]
            })
            .collect();
        Ok(DirichletDatum {
            lifting: FeField::new(lifting),
        })
    }

    /// `b` at a `Gamma2` node.
    pub fn b(&self, node: usize) -> f64 {
        self.lifting[node]
    }

    /// Checks the defining properties against `mesh`.
    pub fn validate(&self, mesh: &TriMesh) -> Result<()> {
        if self.lifting.len() != mesh.num_nodes() {
            return Err(Error::InvalidDatum("lifting length does not match the mesh".into()));
        }
        for (n, &v) in self.lifting.iter().enumerate() {
            if !(v >= 0.0) {
                return Err(Error::InvalidDatum(format!("lifting is negative at node {n}")));
            }
            if mesh.node_class(n) == NodeClass::Gamma1 && v != 0.0 {
                return Err(Error::InvalidDatum(format!(
                    "lifting does not vanish on Gamma1 at node {n}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_rect_mesh;
    use proptest::prelude::*;

    fn laws() -> Vec<BoundaryLaw> {
        vec![
            law_zero(),
            law_linear(1.0, 0.0).unwrap(),
            law_linear(-0.5, 2.0).unwrap(),
            law_nonmonotone(0.5, 0.3, 1.2).unwrap(),
            law_nonmonotone(2.0, 1.0, 0.7).unwrap(),
        ]
    }

    #[test]
    fn zero_law() {
        let law = law_zero();
        assert_eq!(law.value(5.0), 0.0);
        assert_eq!(law.dir_deriv(1.0, -3.0), 0.0);
        assert_eq!(law.subgrad(2.0), 0.0);
        assert_eq!((law.c_bar0(), law.c_bar1(), law.alpha_jnu()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn linear_law() {
        let flux = law_linear(1.0, 0.0).unwrap();
        // -du/dnu in d j_nu(u) = {1}: prescribed flux q = 1.
        assert_eq!(flux.subdifferential(-4.0), (1.0, 1.0));
        let robin = law_linear(0.0, 1.0).unwrap();
        assert_eq!(robin.dir_deriv(2.0, -1.0), -2.0);
        assert_eq!(law_linear(-3.0, 0.5).unwrap().growth_constants(), (3.0, 0.5));
        assert!(law_linear(0.0, -1.0).is_err());
    }

    #[test]
    fn nonmonotone_law() {
        let (a, r0, sd) = (0.5, 0.3, 1.2);
        let law = law_nonmonotone(a, r0, sd).unwrap();
        assert_eq!(law.dir_deriv(0.1, 2.0), a * 0.1 * 2.0);
        // At the kink of the exchange rate the potential is still C^1: both
        // one-sided derivatives of j_nu equal a r0.
        assert_eq!(law.one_sided(r0), (a * r0, a * r0));
        assert_eq!(law.dir_deriv(r0, 1.0), a * r0);
        assert_eq!(law.alpha_jnu(), sd);
        // Rate reaches zero at r1 and stays there.
        let r1 = r0 + a * r0 / sd;
        assert!(law.subgrad(r1 + 1.0).abs() < 1e-15);
        assert!((law.value(r1 + 3.0) - law.value(r1)).abs() < 1e-15);
        assert!(law_nonmonotone(0.0, 1.0, 1.0).is_err());
        assert!(law_nonmonotone(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn value_is_antiderivative_of_rate() {
        for law in laws() {
            for k in -40..40 {
                let r = k as f64 * 0.07;
                let h = 1e-6;
                let fd = (law.value(r + h) - law.value(r - h)) / (2.0 * h);
                assert!((fd - law.subgrad(r)).abs() < 1e-6, "{law:?} at {r}");
            }
        }
    }

    #[test]
    fn relaxed_monotonicity_on_grid() {
        let n = 200;
        let grid: Vec<f64> = (0..n).map(|k| -3.0 + 6.0 * k as f64 / (n - 1) as f64).collect();
        for law in laws() {
            let alpha = law.alpha_jnu();
            for &r1 in &grid {
                for &r2 in &grid {
                    let lhs = law.dir_deriv(r1, r2 - r1) + law.dir_deriv(r2, r1 - r2);
                    assert!(lhs <= alpha * (r1 - r2).powi(2) + 1e-9, "{law:?} at ({r1}, {r2})");
                }
            }
        }
    }

    #[test]
    fn alpha_is_sharp_for_nonmonotone() {
        let law = law_nonmonotone(0.5, 0.3, 1.2).unwrap();
        let (r1, r2) = (0.35, 0.4);
        let lhs = law.dir_deriv(r1, r2 - r1) + law.dir_deriv(r2, r1 - r2);
        assert!((lhs - 1.2 * (r1 - r2).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn penalty_examples() {
        let c = 3.0;
        let p0 = penalty_p0(c).unwrap();
        assert_eq!(p0.value(-2.0), -2.0 * c);
        assert_eq!(p0.value(3.0), 0.0);
        assert_eq!(p0.value(0.0), 0.0);
        assert!((p0.value(-1.0) - p0.value(1.0)) * (-2.0) >= 0.0);

        let p2 = penalty_p2(c).unwrap();
        assert_eq!(p2.value(2.0), 2.0 * c);
        assert_eq!(p2.value(0.0), 0.0);
        assert!(!p2.vanishes_at(1e-300));
        assert_eq!(p2.lipschitz(), c);

        assert!(penalty_p0(0.0).is_err());
        assert!(penalty_p2(-1.0).is_err());
    }

    #[test]
    fn lifting_examples() {
        let mesh = build_rect_mesh(2.0, 1.0, 4, 4).unwrap();
        let datum = dirichlet_example(|_| 1.0, &mesh).unwrap();
        datum.validate(&mesh).unwrap();
        for (n, p) in mesh.nodes.iter().enumerate() {
            assert_eq!(datum.lifting[n], p[0] / 2.0);
            match mesh.node_class(n) {
                NodeClass::Gamma2 => assert_eq!(datum.b(n), 1.0),
                NodeClass::Gamma1 => assert_eq!(datum.lifting[n], 0.0),
                NodeClass::Free => {}
            }
        }

        let phi = |x2: f64| x2 * (1.0 - x2);
        let datum = dirichlet_example(phi, &mesh).unwrap();
        assert!(datum.lifting.iter().all(|&v| v >= 0.0));
        for n in 0..mesh.num_nodes() {
            if mesh.node_class(n) == NodeClass::Gamma2 {
                assert_eq!(datum.b(n), phi(mesh.nodes[n][1]));
            }
        }
        assert!(matches!(
            dirichlet_example(|x2| x2 - 0.5, &mesh),
            Err(Error::InvalidDatum(_))
        ));
    }

    #[test]
    fn lifting_from_values() {
        let mesh = build_rect_mesh(1.0, 1.0, 3, 2).unwrap();
        let datum = DirichletDatum::from_gamma2_values(&mesh, &[0.5, 1.0, 2.0]).unwrap();
        datum.validate(&mesh).unwrap();
        assert_eq!(datum.b(mesh.node_id(3, 2)), 2.0);
        assert!(DirichletDatum::from_gamma2_values(&mesh, &[1.0, -1.0, 1.0]).is_err());
        assert!(DirichletDatum::from_gamma2_values(&mesh, &[1.0]).is_err());
    }

    fn any_law() -> impl Strategy<Value = BoundaryLaw> {
        prop_oneof![
            Just(BoundaryLaw::Zero),
            (-5.0..5.0f64, 0.0..5.0f64).prop_map(|(q0, k)| BoundaryLaw::Linear { q0, k }),
            (0.01..5.0f64, 0.01..3.0f64, 0.01..5.0f64).prop_map(|(a, r0, slope_drop)| BoundaryLaw::Nonmonotone {
                a,
                r0,
                slope_drop
            }),
        ]
    }

    proptest! {
        #[test]
        fn clarke_calculus_invariants(law in any_law(), r in -10.0..10.0f64, s in -10.0..10.0f64, lam in 0.0..10.0f64) {
            // positive homogeneity in the direction
            let lhs = law.dir_deriv(r, lam * s);
            prop_assert!((lhs - lam * law.dir_deriv(r, s)).abs() <= 1e-9 * (1.0 + lhs.abs()));
            // max formula: the derivative dominates every selection
            let (lo, hi) = law.subdifferential(r);
            prop_assert!(law.dir_deriv(r, s) >= law.subgrad(r) * s - 1e-12);
            prop_assert!(law.dir_deriv(r, s) >= lo * s - 1e-12 && law.dir_deriv(r, s) >= hi * s - 1e-12);
            // growth bound
            let (c0, c1) = law.growth_constants();
            prop_assert!(lo.abs().max(hi.abs()) <= c0 + c1 * r.abs() + 1e-12);
        }

        #[test]
        fn relaxed_monotonicity_random(law in any_law(), r1 in -10.0..10.0f64, r2 in -10.0..10.0f64) {
            let lhs = law.dir_deriv(r1, r2 - r1) + law.dir_deriv(r2, r1 - r2);
            prop_assert!(lhs <= law.alpha_jnu() * (r1 - r2).powi(2) + 1e-9);
        }

        #[test]
        fn penalty_invariants(c in 0.01..100.0f64, r in -10.0..10.0f64, s in -10.0..10.0f64) {
            for p in [penalty_p0(c).unwrap(), penalty_p2(c).unwrap()] {
                prop_assert!((p.value(r) - p.value(s)).abs() <= p.lipschitz() * (r - s).abs() + 1e-12 * c * (r.abs() + s.abs()));
                prop_assert!((p.value(r) - p.value(s)) * (r - s) >= 0.0);
                prop_assert_eq!(p.value(r) == 0.0, p.vanishes_at(r));
            }
            prop_assert_eq!(penalty_p0(c).unwrap().vanishes_at(r), r >= 0.0);
            prop_assert_eq!(penalty_p2(c).unwrap().vanishes_at(r), r == 0.0);
        }
    }
}
