use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::build_rect_mesh;
use crate::laws::{dirichlet_example, law_linear, law_nonmonotone, law_zero, penalty_p0, penalty_p2};

fn disc(nx: usize, ny: usize) -> Discretization {
    Discretization::new(build_rect_mesh(1.0, 1.0, nx, ny).unwrap()).unwrap()
}

fn constant(d: &Discretization, c: f64) -> FeField {
    FeField::constant(d.num_nodes(), c)
}

fn ones(d: &Discretization) -> DirichletDatum {
    dirichlet_example(|_| 1.0, &d.mesh).unwrap()
}

fn penalized<'a>(p: HviProblem<'a>, mode: ConstraintMode, lambda: f64) -> HviProblem<'a> {
    let p0 = mode.needs_p0().then(|| penalty_p0(1.0).unwrap());
    let p2 = mode.needs_p2().then(|| penalty_p2(1.0).unwrap());
    p.penalized(mode, p0, p2, lambda)
}

/// Nonmonotone law with `alpha c0^2 c3^2 = target` on `d`.
fn tuned_law(d: &Discretization, target: f64) -> BoundaryLaw {
    let k = d.constants.c0.powi(2) * d.constants.c3.powi(2);
    let sd = target / k;
    law_nonmonotone(sd, 0.3, sd).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    linalg::max_abs_diff(a, b)
}

#[test]
fn zero_data_gives_zero() {
    let d = disc(4, 4);
    let p = HviProblem::new(&d, constant(&d, 0.0), DirichletDatum::zero(&d.mesh), law_zero());
    let r = solve(&p, 1e-10, 50).unwrap();
    assert!(r.solution.iter().all(|&v| v == 0.0));
}

#[test]
fn harmonic_extension_when_constraint_inactive() {
    let d = disc(6, 5);
    let datum = ones(&d);
    let p = HviProblem::new(&d, constant(&d, 0.0), datum.clone(), law_zero());
    let r = solve(&p, 1e-10, 50).unwrap();

    let pinned: Vec<bool> = (0..d.num_nodes())
        .map(|i| d.mesh.node_class(i) != NodeClass::Free)
        .collect();
    let zeros = vec![0.0; d.num_nodes()];
    let direct = linalg::solve_pinned(&d.ops.stiffness, &zeros, &pinned, &datum.lifting, &zeros).unwrap();
    assert!(max_diff(&r.solution, &direct) < 1e-10);
    // x1 is discretely harmonic, so the constraint is nowhere active.
    let inactive = (0..d.num_nodes())
        .filter(|&i| d.mesh.node_class(i) == NodeClass::Free)
        .all(|i| r.solution[i] > 0.0);
    assert!(inactive);
}

#[test]
fn strong_sink_matches_oracle() {
    let d = disc(3, 3);
    let p = HviProblem::new(&d, constant(&d, -10.0), ones(&d), law_zero());
    let oracle = brute_force_oracle(&p).unwrap();
    for inner in [InnerSolver::PSOR, InnerSolver::Newton] {
        let opts = SolveOptions {
            inner,
            ..SolveOptions::default()
        };
        let r = solve_with(&p, &opts).unwrap();
        assert!(max_diff(&r.solution, &oracle) < 1e-10, "{inner:?}");
    }
    // The sink pushes the nodes away from Gamma2 onto the obstacle.
    assert!(oracle.iter().filter(|&&v| v == 0.0).count() > d.mesh.ny + 1);
}

#[test]
fn random_instances_match_oracle() {
    let d = disc(3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let f = FeField::new((0..d.num_nodes()).map(|_| rng.random_range(-20.0..5.0)).collect());
        let bvals: Vec<f64> = (0..=d.mesh.ny).map(|_| rng.random_range(0.0..2.0)).collect();
        let datum = DirichletDatum::from_gamma2_values(&d.mesh, &bvals).unwrap();
        let p = HviProblem::new(&d, f, datum, law_linear(0.5, 1.0).unwrap());
        let oracle = brute_force_oracle(&p).unwrap();
        let r = solve(&p, 1e-10, 50).unwrap();
        assert!(max_diff(&r.solution, &oracle) < 1e-10);
    }
}

#[test]
fn oracle_without_active_constraints_is_the_linear_solve() {
    let d = disc(3, 3);
    let datum = ones(&d);
    let p = HviProblem::new(&d, constant(&d, 0.0), datum.clone(), law_zero());
    let oracle = brute_force_oracle(&p).unwrap();
    let pinned: Vec<bool> = (0..d.num_nodes())
        .map(|i| d.mesh.node_class(i) != NodeClass::Free)
        .collect();
    let zeros = vec![0.0; d.num_nodes()];
    let direct = linalg::solve_pinned(&d.ops.stiffness, &zeros, &pinned, &datum.lifting, &zeros).unwrap();
    assert!(max_diff(&oracle, &direct) < 1e-12);
}

#[test]
fn oracle_rejects_unsupported_problems() {
    let d = disc(4, 4);
    let p = HviProblem::new(&d, constant(&d, 0.0), ones(&d), law_zero());
    assert!(brute_force_oracle(&p).is_err());
    let d = disc(3, 3);
    let p = HviProblem::new(&d, constant(&d, 0.0), ones(&d), tuned_law(&d, 0.5));
    assert!(brute_force_oracle(&p).is_err());
    let p = penalized(
        HviProblem::new(&d, constant(&d, 0.0), ones(&d), law_zero()),
        ConstraintMode::PenaltyDomain,
        1.0,
    );
    assert!(brute_force_oracle(&p).is_err());
}

#[test]
fn penalty_pairing_examples() {
    let d = disc(4, 4);
    let n = d.num_nodes();
    let base = HviProblem::new(&d, constant(&d, 0.0), ones(&d), law_zero());
    assert!(matches!(
        apply_penalty_G(&base, &vec![0.0; n], &vec![1.0; n]),
        Err(Error::ExactModeHasNoPenalty)
    ));

    let dom = penalized(base.clone(), ConstraintMode::PenaltyDomain, 1.0);
    let u_pos: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
    assert_eq!(apply_penalty_G(&dom, &u_pos, &vec![1.0; n]).unwrap(), 0.0);
    let g = apply_penalty_G(&dom, &vec![-1.0; n], &vec![1.0; n]).unwrap();
    assert!((g + 1.0).abs() < 1e-12);

    let g2 = penalized(base, ConstraintMode::PenaltyGamma2, 1.0);
    let lifting = g2.datum.lifting.clone();
    assert_eq!(apply_penalty_G(&g2, &lifting, &vec![3.0; n]).unwrap(), 0.0);
}

#[test]
fn penalty_axioms_hold() {
    let d = disc(4, 4);
    let phi = |x2: f64| 1.0 + x2 * (1.0 - x2);
    let base = HviProblem::new(
        &d,
        constant(&d, 0.0),
        dirichlet_example(phi, &d.mesh).unwrap(),
        law_zero(),
    );
    for mode in [
        ConstraintMode::PenaltyDomain,
        ConstraintMode::PenaltyGamma2,
        ConstraintMode::PenaltyFull,
    ] {
        let p = penalized(base.clone(), mode, 0.1);
        let report = check_G_axioms(&p, 1000, 42).unwrap();
        assert_eq!(report.violations(), 0, "{mode}: {:?}", report.counterexamples.first());
        assert!(report.samples_in_k >= 500 && report.samples_in_k < 1000, "{mode}");
        assert!(report.max_sign_pairing <= 0.0);
        assert!(report.min_monotone_pairing >= 0.0);
    }
    assert!(matches!(
        check_G_axioms(&base, 10, 0),
        Err(Error::ExactModeHasNoPenalty)
    ));
}

#[test]
fn one_negative_node_gives_negative_pairing() {
    let d = disc(4, 4);
    let p = penalized(
        HviProblem::new(&d, constant(&d, 0.0), ones(&d), law_zero()),
        ConstraintMode::PenaltyDomain,
        1.0,
    );
    let v = p.datum.lifting.clone();
    let mut u = v.clone();
    let node = d.mesh.node_id(2, 2);
    u[node] = -0.5;
    let du: Vec<f64> = v.iter().zip(u.iter()).map(|(a, b)| a - b).collect();
    assert!(apply_penalty_G(&p, &u, &du).unwrap() < 0.0);
    assert_eq!(apply_penalty_G(&p, &v, &du).unwrap(), 0.0);
}

#[test]
fn contraction_tail_within_smallness_bound() {
    let d = disc(8, 8);
    let law = tuned_law(&d, 0.5);
    let p = HviProblem::new(&d, constant(&d, 1.0), ones(&d), law);
    let product = d.constants.smallness_product(law.alpha_jnu());
    assert!((product - 0.5).abs() < 1e-12);
    let r = solve(&p, 1e-10, 100).unwrap();
    let tail = r.tail_contraction().unwrap();
    assert!(tail <= product + 0.05, "tail {tail}, q {:?}", r.contraction_estimates);
    assert!(r.outer_iters <= 40);
    assert!(r.residual <= 1e-9, "residual {}", r.residual);
}

#[test]
fn exact_solutions_respect_the_constraints() {
    let d = disc(8, 8);
    let phi = |x2: f64| 0.5 + x2;
    let datum = dirichlet_example(phi, &d.mesh).unwrap();
    let law = tuned_law(&d, 0.3);
    let f = FeField::interpolate(&d.mesh, |[x, y]| -20.0 * (1.0 - x) + 5.0 * y);
    let p = HviProblem::new(&d, f, datum, law);
    let r = solve(&p, 1e-10, 100).unwrap();
    for i in 0..d.num_nodes() {
        match d.mesh.node_class(i) {
            NodeClass::Gamma1 => assert_eq!(r.solution[i], 0.0),
            NodeClass::Gamma2 => assert_eq!(r.solution[i], phi(d.mesh.nodes[i][1])),
            NodeClass::Free => assert!(r.solution[i] >= -1e-12),
        }
    }
    assert!(p.in_k(&r.solution));
    assert!(r.solution.contains(&0.0));
}

#[test]
fn domain_penalty_sign() {
    let d = disc(8, 8);
    let f = constant(&d, -10.0);
    for lambda in [1.0, 1e-2, 1e-4] {
        let p = penalized(
            HviProblem::new(&d, f.clone(), ones(&d), law_zero()),
            ConstraintMode::PenaltyDomain,
            lambda,
        );
        let u = solve(&p, 1e-10, 50).unwrap().solution;
        assert!(u.iter().any(|&v| v < 0.0));
        let proj = p.project_onto_k(&u);
        let diff: Vec<f64> = u.iter().zip(proj.iter()).map(|(a, b)| a - b).collect();
        assert!(apply_penalty_G(&p, &u, &diff).unwrap() >= 0.0);
    }
}

#[test]
fn exact_is_the_penalty_path_with_vanishing_operator() {
    let d = disc(8, 8);
    let law = tuned_law(&d, 0.4);
    let exact = HviProblem::new(&d, constant(&d, -6.0), ones(&d), law);
    let pen = penalized(exact.clone(), ConstraintMode::PenaltyDomain, 1e-3);
    // K~ = K and G = 0, run through the penalty problem's code path.
    let form = Formulation {
        nonneg: true,
        p0: None,
        ..pen.formulation()
    };
    let opts = SolveOptions::default();
    let via_penalty = solve_formulation(&pen, &form, InnerSolver::PSOR, &opts).unwrap();
    let direct = solve_with(&exact, &opts).unwrap();
    assert!(max_diff(&via_penalty.solution, &direct.solution) <= 1e-12);
}

#[test]
fn inner_solvers_agree_in_every_mode() {
    let d = disc(8, 8);
    let law = tuned_law(&d, 0.4);
    let f = FeField::interpolate(&d.mesh, |[x, y]| -8.0 + 6.0 * x * y);
    let base = HviProblem::new(&d, f, ones(&d), law);
    for mode in ConstraintMode::ALL {
        let p = if mode == ConstraintMode::Exact {
            base.clone()
        } else {
            penalized(base.clone(), mode, 1e-2)
        };
        let run = |inner| {
            solve_with(
                &p,
                &SolveOptions {
                    inner,
                    ..SolveOptions::default()
                },
            )
            .unwrap()
        };
        let a = run(InnerSolver::PSOR);
        let b = run(InnerSolver::Newton);
        assert!(d.v_norm(&a.solution.sub(&b.solution)) < 1e-9, "{mode}");
        assert!(
            a.residual <= 1e-9 && b.residual <= 1e-9,
            "{mode}: {} {}",
            a.residual,
            b.residual
        );
    }
}

#[test]
fn unique_from_different_starts() {
    let d = disc(8, 8);
    let law = tuned_law(&d, 0.5);
    let p = penalized(
        HviProblem::new(&d, constant(&d, -3.0), ones(&d), law),
        ConstraintMode::PenaltyFull,
        0.05,
    );
    let a = solve(&p, 1e-10, 100).unwrap();
    let start = FeField::interpolate(&d.mesh, |[x, y]| 3.0 * x * (1.0 + y * y));
    let b = solve_with(
        &p,
        &SolveOptions {
            initial: Some(start),
            ..SolveOptions::default()
        },
    )
    .unwrap();
    assert!(d.v_norm(&a.solution.sub(&b.solution)) < 1e-9);
}

#[test]
fn convex_laws_converge_immediately() {
    let d = disc(6, 6);
    let p = HviProblem::new(&d, constant(&d, 2.0), ones(&d), law_linear(1.0, 2.0).unwrap());
    let r = solve(&p, 1e-10, 10).unwrap();
    assert!(r.outer_iters <= 2);
    assert!(r.residual <= 1e-9);
}

#[test]
fn non_convergence_carries_history() {
    let d = disc(6, 6);
    let p = HviProblem::new(&d, constant(&d, 1.0), ones(&d), tuned_law(&d, 0.5));
    match solve(&p, 1e-10, 3) {
        Err(Error::NonConvergence {
            iterations,
            contraction_history,
            ..
        }) => {
            assert_eq!(iterations, 3);
            assert_eq!(contraction_history.len(), 2);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn validation() {
    let d = disc(4, 4);
    let base = HviProblem::new(&d, constant(&d, 0.0), ones(&d), law_zero());
    let p0 = penalty_p0(1.0).unwrap();
    let p2 = penalty_p2(1.0).unwrap();

    let missing = base.clone().penalized(ConstraintMode::PenaltyGamma2, None, None, 1.0);
    assert!(matches!(missing.validate(), Err(Error::MissingPenaltyLaw("p2"))));
    let missing = base.clone().penalized(ConstraintMode::PenaltyFull, None, Some(p2), 1.0);
    assert!(matches!(missing.validate(), Err(Error::MissingPenaltyLaw("p0"))));
    let extra = base.clone().penalized(ConstraintMode::Exact, Some(p0), None, 1.0);
    assert!(matches!(extra.validate(), Err(Error::InvalidArgument(_))));
    let swapped = base
        .clone()
        .penalized(ConstraintMode::PenaltyDomain, Some(p2), None, 1.0);
    assert!(matches!(swapped.validate(), Err(Error::InvalidArgument(_))));
    let bad_lambda = base
        .clone()
        .penalized(ConstraintMode::PenaltyDomain, Some(p0), None, 0.0);
    assert!(matches!(bad_lambda.validate(), Err(Error::InvalidArgument(_))));

    let too_big = HviProblem {
        law: tuned_law(&d, 1.2),
        ..base.clone()
    };
    match too_big.validate() {
        Err(Error::SmallnessViolated { product, .. }) => assert!((product - 1.2).abs() < 1e-9),
        other => panic!("expected smallness violation, got {other:?}"),
    }
    assert!("penalty_full".parse::<ConstraintMode>().unwrap() == ConstraintMode::PenaltyFull);
    assert!("nope".parse::<ConstraintMode>().is_err());
}
