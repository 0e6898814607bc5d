//! Randomized check of the penalty-operator axioms:
//! (a) monotonicity, (b) `<G u, v - u> <= 0` for `u in K~`, `v in K`,
//! (c) `u in K~` with `<G u, v - u> = 0` for all `v in K` implies `u in K`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ConstraintMode, HviProblem};
use crate::error::{Error, Result};
use crate::fem::FeField;
use crate::geometry::NodeClass;
use crate::linalg;

const SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum AxiomViolation {
    Monotonicity {
        u: FeField,
        w: FeField,
        value: f64,
    },
    Sign {
        u: FeField,
        v: FeField,
        value: f64,
    },
    /// The witness family certified `u in K` (all pairings zero) while the
    /// feasibility predicate disagrees, or the reverse.
    Witness {
        u: FeField,
        pairings_vanish: bool,
        in_k: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    pub trials: usize,
    pub monotonicity_violations: usize,
    pub sign_violations: usize,
    pub witness_failures: usize,
    /// Largest `<G u, v - u>` seen; nonpositive when (b) holds.
    pub max_sign_pairing: f64,
    /// Smallest `<G u - G w, u - w>` seen; nonnegative when (a) holds.
    pub min_monotone_pairing: f64,
    /// Trials whose `u` was already in `K`.
    pub samples_in_k: usize,
    /// At most the first ten counterexamples.
    pub counterexamples: Vec<AxiomViolation>,
}

impl AxiomReport {
    pub fn violations(&self) -> usize {
        self.monotonicity_violations + self.sign_violations + self.witness_failures
    }
}

/// Runs `trials` random instances of the three checks.
#[allow(non_snake_case)]
pub fn check_G_axioms(problem: &HviProblem, trials: usize, seed: u64) -> Result<AxiomReport> {
    problem.validate()?;
    if problem.mode == ConstraintMode::Exact {
        return Err(Error::ExactModeHasNoPenalty);
    }
    let form = problem.formulation();
    let mesh = &problem.disc.mesh;
    let n = mesh.num_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pair = |u: &[f64], v: &[f64]| linalg::dot(&problem.penalty_vector(&form, u), v);
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };

    // Witness family: the lifting and the lifting plus each unit bump, all in K.
    let v0 = problem.datum.lifting.clone();
    let mut family = vec![v0.clone()];
    for i in (0..n).filter(|&i| mesh.node_class(i) == NodeClass::Free) {
        let mut v = v0.clone();
        v[i] += 1.0;
        family.push(v);
    }

    let mut report = AxiomReport {
        trials,
        monotonicity_violations: 0,
        sign_violations: 0,
        witness_failures: 0,
        max_sign_pairing: f64::NEG_INFINITY,
        min_monotone_pairing: f64::INFINITY,
        samples_in_k: 0,
        counterexamples: Vec::new(),
    };
    let record = |report: &mut AxiomReport, v: AxiomViolation| {
        if report.counterexamples.len() < 10 {
            report.counterexamples.push(v);
        }
    };

    for t in 0..trials {
        let mut u = sample_k_tilde(problem, &mut rng);
        // Every other trial starts inside K so both sides of (c) are exercised.
        if t % 2 == 1 {
            u = problem.project_onto_k(&u);
        }
        let w = sample_k_tilde(problem, &mut rng);
        let v = sample_k(problem, &mut rng);

        let gu = problem.penalty_vector(&form, &u);
        let gw = problem.penalty_vector(&form, &w);
        let mono = linalg::dot(&diff(&gu, &gw), &diff(&u, &w));
        report.min_monotone_pairing = report.min_monotone_pairing.min(mono);
        if mono < -SLACK {
            report.monotonicity_violations += 1;
            record(
                &mut report,
                AxiomViolation::Monotonicity {
                    u: u.clone(),
                    w: w.clone(),
                    value: mono,
                },
            );
        }

        let sign = linalg::dot(&gu, &diff(&v, &u));
        report.max_sign_pairing = report.max_sign_pairing.max(sign);
        if sign > SLACK {
            report.sign_violations += 1;
            record(
                &mut report,
                AxiomViolation::Sign {
                    u: u.clone(),
                    v: v.clone(),
                    value: sign,
                },
            );
        }

        let pairings_vanish = family.iter().all(|v| pair(&u, &diff(v, &u)) == 0.0);
        let in_k = problem.in_k(&u);
        report.samples_in_k += usize::from(in_k);
        if pairings_vanish != in_k {
            report.witness_failures += 1;
            record(
                &mut report,
                AxiomViolation::Witness {
                    u: u.clone(),
                    pairings_vanish,
                    in_k,
                },
            );
        }
    }
    Ok(report)
}

/// Random element of `K~_h` for the problem's mode, values in `[-2, 2]` where
/// unconstrained.
fn sample_k_tilde(problem: &HviProblem, rng: &mut ChaCha8Rng) -> FeField {
    let form = problem.formulation();
    let mesh = &problem.disc.mesh;
    let lo = if form.nonneg { 0.0 } else { -2.0 };
    (0..mesh.num_nodes())
        .map(|i| match mesh.node_class(i) {
            NodeClass::Gamma1 => 0.0,
            NodeClass::Gamma2 if form.gamma2_pinned => problem.datum.b(i),
            _ => rng.random_range(lo..2.0),
        })
        .collect::<Vec<_>>()
        .into()
}

fn sample_k(problem: &HviProblem, rng: &mut ChaCha8Rng) -> FeField {
    let mesh = &problem.disc.mesh;
    (0..mesh.num_nodes())
        .map(|i| match mesh.node_class(i) {
            NodeClass::Gamma1 => 0.0,
            NodeClass::Gamma2 => problem.datum.b(i),
            NodeClass::Free => rng.random_range(0.0..2.0),
        })
        .collect::<Vec<_>>()
        .into()
}
