//! The seven experiment kinds. Each writes its tables through [`RunDir`] and
//! returns the run summary.

use std::sync::Arc;

use hemivar::control::{
    mu_convergence, solve_control, ControlOptions, ControlParam, CostSpec, MuTable, NelderMeadOptions, Omega,
};
use hemivar::fem::FeField;
use hemivar::geometry::NodeClass;
use hemivar::laws::DirichletDatum;
use hemivar::linalg::max_abs_diff;
use hemivar::solver::{brute_force_oracle, check_G_axioms, solve_with, ConstraintMode, HviProblem};
use hemivar::tykhonov::{
    penalty_convergence_curve, run_approximating_sequence, two_mesh_floor, ApproxSequenceSpec, SourceRule,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentKind, Floor, RuleKind, Setup};
use crate::expr::Expr;
use crate::output::{RunDir, Summary};
use crate::LabError;

pub fn dispatch(setup: &Setup, dir: &mut RunDir) -> Result<Summary, LabError> {
    let kind = setup.config.experiment;
    let wrap = |source| LabError::Experiment {
        experiment: kind.as_str(),
        source,
    };
    let mut s = Summary::default();
    s.set("experiment", kind.as_str());
    s.set("seed", setup.config.seed.map_or("none".into(), |v| v.to_string()));
    let m = &setup.disc.mesh;
    s.set("mesh", format!("{}x{} on (0,{})x(0,{})", m.nx, m.ny, m.alpha, m.beta));
    s.set("nodes", m.num_nodes());
    s.set("c0_h", setup.disc.constants.c0);
    s.set("c3_h", setup.disc.constants.c3);
    s.set("alpha_jnu", setup.law.alpha_jnu());
    s.set(
        "smallness_product",
        setup.disc.constants.smallness_product(setup.law.alpha_jnu()),
    );

    if setup.config.output.mesh {
        m.write_csv(&dir.root).map_err(wrap)?;
        for f in ["nodes.csv", "tris.csv", "edges.csv"] {
            dir.register(f);
        }
    }
    if setup.config.output.operators {
        setup.disc.ops.write_coo(&dir.root).map_err(wrap)?;
        for f in ["stiffness.coo", "mass.coo", "gamma2_mass.coo", "gamma3_mass.coo"] {
            dir.register(f);
        }
    }

    match kind {
        ExperimentKind::Solve => solve(setup, dir, &mut s),
        ExperimentKind::PenaltyCurve => penalty_curve(setup, dir, &mut s),
        ExperimentKind::ApproxSequence => approx_sequence(setup, dir, &mut s),
        ExperimentKind::Control => control(setup, dir, &mut s),
        ExperimentKind::MuConvergence => mu(setup, dir, &mut s),
        ExperimentKind::OracleCheck => oracle_check(setup, dir, &mut s),
        ExperimentKind::GAxioms => g_axioms(setup, dir, &mut s),
    }
    .map_err(|e| match e {
        LabError::Core(source) => wrap(source),
        other => other,
    })?;
    Ok(s)
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn write_field(dir: &mut RunDir, setup: &Setup, name: &str, columns: &[(&str, &[f64])]) -> Result<(), LabError> {
    let mut header = vec!["node", "x", "y"];
    header.extend(columns.iter().map(|c| c.0));
    let rows = setup.disc.mesh.nodes.iter().enumerate().map(|(n, p)| {
        let mut r = vec![n.to_string(), num(p[0]), num(p[1])];
        r.extend(columns.iter().map(|c| num(c.1[n])));
        r
    });
    dir.csv(name, &header, rows)
}

fn floor_value(setup: &Setup, floor: Option<Floor>, problem: &HviProblem) -> Result<Option<f64>, LabError> {
    Ok(match floor {
        None => None,
        Some(Floor::Value(v)) => Some(v),
        Some(Floor::Named(_)) => Some(two_mesh_floor(problem, &setup.options)?),
    })
}

fn solve(setup: &Setup, dir: &mut RunDir, s: &mut Summary) -> Result<(), LabError> {
    let problem = setup.problem();
    let report = solve_with(&problem, &setup.options)?;
    let u = &report.solution;
    write_field(dir, setup, "solution.csv", &[("value", u)])?;
    let rows = report.increments.iter().enumerate().map(|(k, inc)| {
        let q = if k == 0 {
            String::new()
        } else {
            report
                .contraction_estimates
                .get(k - 1)
                .map_or(String::new(), |q| num(*q))
        };
        vec![(k + 1).to_string(), num(*inc), q]
    });
    dir.csv("contraction.csv", &["k", "increment", "q"], rows)?;

    let mesh = &setup.disc.mesh;
    let active = (0..mesh.num_nodes())
        .filter(|&n| mesh.node_class(n) == NodeClass::Free && u[n] == 0.0)
        .count();
    s.set("mode", problem.mode);
    s.set("lambda", problem.lambda);
    s.set("outer_iters", report.outer_iters);
    s.set("final_increment", report.final_increment);
    s.set("tail_contraction", report.tail_contraction().map_or("none".into(), num));
    s.set(
        "max_contraction",
        report
            .contraction_estimates
            .iter()
            .copied()
            .reduce(f64::max)
            .map_or("none".into(), num),
    );
    s.set("residual", report.residual);
    s.set("inner_solver", report.inner.solver);
    s.set("inner_calls", report.inner.calls);
    s.set("inner_iterations", report.inner.total_iterations);
    s.set("active_nodes", active);
    s.set("max_abs_value", u.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    s.set("v_norm", setup.disc.v_norm(u));
    Ok(())
}

fn penalty_curve(setup: &Setup, dir: &mut RunDir, s: &mut Summary) -> Result<(), LabError> {
    let problem = setup.problem();
    let lambdas = setup.config.penalty.lambdas.clone().unwrap_or_default();
    let curve = penalty_convergence_curve(&problem, &lambdas, &setup.options)?;
    let path = dir.path("penalty_curve.csv");
    curve.write_csv(&path)?;
    dir.register("penalty_curve.csv");
    let plot: Vec<Vec<f64>> = curve
        .rows
        .iter()
        .map(|r| vec![r.lambda, r.error, r.negative_part, r.gamma2_mismatch])
        .collect();
    dir.plot_data(
        "penalty_curve.dat",
        &["lambda", "error", "negative_part", "gamma2_mismatch"],
        &plot,
    )?;

    let floor = floor_value(setup, setup.config.penalty.floor, &problem)?;
    let last = curve.rows.last().expect("schedule is nonempty");
    s.set("mode", problem.mode);
    s.set("terms", curve.rows.len());
    s.set("all_errors_positive", curve.rows.iter().all(|r| r.error > 0.0));
    s.set(
        "strictly_decreasing",
        curve.rows.windows(2).all(|w| w[1].error < w[0].error),
    );
    s.set("decay_ok", curve.decay_ok.map_or("none".into(), |b| b.to_string()));
    if let Some(fl) = floor {
        s.set("floor", fl);
        s.set("decreasing_to_floor", curve.decreasing_to_floor(fl));
    }
    s.set("first_error", curve.rows[0].error);
    s.set("final_error", last.error);
    s.set("final_negative_part", last.negative_part);
    s.set("final_gamma2_mismatch", last.gamma2_mismatch);
    s.set(
        "max_outer_iters",
        curve.rows.iter().map(|r| r.outer_iters).max().unwrap_or(0),
    );
    Ok(())
}

fn approx_sequence(setup: &Setup, dir: &mut RunDir, s: &mut Summary) -> Result<(), LabError> {
    let seq = setup.config.sequence.clone().unwrap_or_default();
    let lambdas = setup.config.penalty.lambdas.clone().unwrap_or_default();
    let rule = match seq.rule {
        RuleKind::Constant => SourceRule::Constant,
        RuleKind::WeakOscillation => SourceRule::WeakOscillation {
            amplitude: seq.amplitude,
            frequencies: seq.frequencies.clone(),
        },
        RuleKind::StrongPerturb => {
            let g = Expr::parse(&seq.g, &["x", "y"]).map_err(expr_error("sequence.g"))?;
            SourceRule::StrongPerturb {
                g: setup.field(&g).map_err(expr_error("sequence.g"))?,
                eps: seq.eps,
            }
        }
    };
    let problem = setup.problem();
    let floor = floor_value(setup, seq.floor, &problem)?;
    let n_terms = seq.n_terms.unwrap_or(lambdas.len());
    let spec = ApproxSequenceSpec {
        template: problem,
        lambdas,
        rule,
        floor,
        options: setup.options.clone(),
    };
    let rec = run_approximating_sequence(&spec, n_terms)?;
    let path = dir.path("sequence.csv");
    rec.write_csv(&path)?;
    dir.register("sequence.csv");
    let plot: Vec<Vec<f64>> = rec
        .rows
        .iter()
        .map(|r| vec![r.n as f64, r.lambda, r.weak_gap, r.strong_gap, r.error])
        .collect();
    dir.plot_data(
        "sequence.dat",
        &["n", "lambda", "weak_gap", "strong_gap", "error"],
        &plot,
    )?;

    s.set("mode", spec.template.mode);
    s.set("approximating", rec.is_approximating());
    if let Some(v) = &rec.violation {
        s.set("violation", v);
    }
    s.set("terms", rec.rows.len());
    if let (Some(first), Some(last)) = (rec.rows.first(), rec.rows.last()) {
        s.set("first_error", first.error);
        s.set("final_error", last.error);
        s.set("error_decay", first.error / last.error);
        s.set("weak_gap_decay", first.weak_gap / last.weak_gap);
        s.set("strong_gap_ratio", last.strong_gap / first.strong_gap);
    }
    s.set("monotone_tail", rec.monotone_tail);
    if let Some(fl) = rec.floor {
        s.set("floor", fl);
    }
    s.set("success", rec.success);
    Ok(())
}

fn expr_error(key: &str) -> impl Fn(String) -> LabError + '_ {
    move |message| LabError::Expression {
        key: key.into(),
        message,
    }
}

struct ControlSetup {
    spec: CostSpec,
    param: ControlParam,
    opts: ControlOptions,
    starts: usize,
    seed: u64,
}

fn control_setup(setup: &Setup, template: &HviProblem) -> Result<ControlSetup, LabError> {
    let ctl = setup.config.control.clone().unwrap_or_default();
    let param = ControlParam::tensor_cosine(&setup.disc.mesh, &setup.disc.ops, ctl.basis_size)?;
    let opts = ControlOptions {
        solve: setup.options.clone(),
        simplex: NelderMeadOptions {
            initial_step: ctl.initial_step,
            ftol: ctl.ftol,
            xtol: ctl.xtol,
            max_evals: ctl.max_evals,
            max_restarts: ctl.max_restarts,
        },
        init_range: ctl.init_range,
    };
    let phi = match &ctl.planted {
        Some(theta) => solve_with(&template.with_f(param.field(theta)), &opts.solve)?.solution,
        None => setup
            .field(&Expr::parse(&ctl.phi, &["x", "y"]).map_err(expr_error("control.phi"))?)
            .map_err(expr_error("control.phi"))?,
    };
    let w = Expr::parse(&ctl.omega, &["mu"]).map_err(expr_error("control.omega"))?;
    let omega: Omega = Arc::new(move |mu| w.eval(&[("mu", mu)]).unwrap_or(f64::NAN));
    let spec = CostSpec::new(ctl.a0, ctl.a2, phi, omega, ctl.mu)?;
    Ok(ControlSetup {
        spec,
        param,
        opts,
        starts: ctl.starts,
        seed: setup.config.seed.unwrap_or_default(),
    })
}

fn control(setup: &Setup, dir: &mut RunDir, s: &mut Summary) -> Result<(), LabError> {
    let template = setup.problem();
    let c = control_setup(setup, &template)?;
    let report = solve_control(&c.spec, &template, &c.param, c.starts, c.seed, &c.opts)?;

    let path = dir.path("trace.csv");
    report.write_trace(&path)?;
    dir.register("trace.csv");
    let m = c.param.dim();
    let mut header: Vec<String> = ["start", "cost", "iterations", "evaluations", "failure"]
        .map(String::from)
        .into();
    header.extend((0..m).map(|k| format!("theta_{k}")));
    header.extend((0..m).map(|k| format!("initial_{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = report.starts.iter().map(|r| {
        let mut row = vec![
            r.start.to_string(),
            num(r.cost),
            r.iterations.to_string(),
            r.evaluations.to_string(),
            r.failure.clone().unwrap_or_default(),
        ];
        row.extend((0..m).map(|k| r.theta.get(k).map_or(String::new(), |v| num(*v))));
        row.extend(r.initial.iter().map(|v| num(*v)));
        row
    });
    dir.csv("starts.csv", &header, rows)?;
    write_field(dir, setup, "best.csv", &[("f", &report.best_f), ("u", &report.best_u)])?;

    s.set("mode", template.mode);
    s.set("basis_size", m);
    s.set("starts", c.starts);
    s.set(
        "failed_starts",
        report.starts.iter().filter(|r| r.failure.is_some()).count(),
    );
    s.set("best_cost", report.best_cost);
    s.set("best_start", report.best_start);
    s.set(
        "best_theta",
        report.best_theta.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" "),
    );
    s.set("admissibility_residual", report.admissibility_residual);
    s.set("coercivity_violations", report.coercivity_violations);
    s.set("min_coercivity_slack", report.min_coercivity_slack);
    s.set("evaluations", report.evaluations);
    Ok(())
}

fn write_mu(dir: &mut RunDir, name: &str, table: &MuTable) -> Result<(), LabError> {
    let path = dir.path(name);
    table.write_csv(&path)?;
    dir.register(name);
    Ok(())
}

fn mu(setup: &Setup, dir: &mut RunDir, s: &mut Summary) -> Result<(), LabError> {
    let template = setup.problem();
    let c = control_setup(setup, &template)?;
    let ctl = setup.config.control.clone().unwrap_or_default();
    let mus = ctl.mus.clone().unwrap_or_default();
    let lambdas = setup.config.penalty.lambdas.clone().unwrap_or_default();
    let table = mu_convergence(&c.spec, &template, &mus, &lambdas, &c.param, c.starts, c.seed, &c.opts)?;
    write_mu(dir, "mu.csv", &table)?;
    let plot: Vec<Vec<f64>> = table
        .rows
        .iter()
        .map(|r| vec![r.n as f64, r.mu, r.lambda, r.cost_gap, r.state_gap])
        .collect();
    dir.plot_data("mu.dat", &["n", "mu", "lambda", "cost_gap", "state_gap"], &plot)?;

    s.set("mode", template.mode);
    s.set("terms", table.rows.len());
    s.set("reference_cost", table.reference_cost);
    s.set("cost_gaps_decreasing", table.cost_gaps_decreasing());
    let last = table.rows.last().expect("schedule is nonempty");
    s.set("first_cost_gap", table.rows[0].cost_gap);
    s.set("final_cost_gap", last.cost_gap);
    s.set("final_state_gap", last.state_gap);
    if let Some(frozen) = ctl.frozen_mu {
        let fixed = vec![frozen; lambdas.len()];
        let stalled = mu_convergence(
            &c.spec, &template, &fixed, &lambdas, &c.param, c.starts, c.seed, &c.opts,
        )?;
        write_mu(dir, "mu_frozen.csv", &stalled)?;
        s.set("frozen_mu", frozen);
        s.set(
            "frozen_min_cost_gap",
            stalled.rows.iter().map(|r| r.cost_gap).fold(f64::INFINITY, f64::min),
        );
    }
    Ok(())
}

fn oracle_check(setup: &Setup, dir: &mut RunDir, s: &mut Summary) -> Result<(), LabError> {
    let chk = setup.config.check.clone().unwrap_or_default();
    let disc = &setup.disc;
    let mut rng = ChaCha8Rng::seed_from_u64(setup.config.seed.unwrap_or_default());
    let mut rows = Vec::with_capacity(chk.instances);
    let mut worst = 0.0f64;
    for i in 0..chk.instances {
        let f = FeField::new(
            (0..disc.num_nodes())
                .map(|_| rng.random_range(chk.f_min..=chk.f_max))
                .collect(),
        );
        let b: Vec<f64> = (0..=disc.mesh.ny).map(|_| rng.random_range(0.0..=chk.b_max)).collect();
        let datum = DirichletDatum::from_gamma2_values(&disc.mesh, &b)?;
        let p = HviProblem::new(disc, f, datum, setup.law);
        let oracle = brute_force_oracle(&p)?;
        let report = solve_with(&p, &setup.options)?;
        let diff = max_abs_diff(&report.solution, &oracle);
        worst = worst.max(diff);
        let active = oracle
            .iter()
            .enumerate()
            .filter(|&(n, &v)| disc.mesh.node_class(n) == NodeClass::Free && v == 0.0)
            .count();
        rows.push(vec![
            i.to_string(),
            num(diff),
            report.outer_iters.to_string(),
            active.to_string(),
        ]);
    }
    dir.csv(
        "oracle.csv",
        &["instance", "max_diff", "outer_iters", "active_nodes"],
        rows,
    )?;
    s.set("instances", chk.instances);
    s.set("max_diff", worst);
    s.set("agreement_tol", chk.agreement_tol);
    s.set("pass", worst <= chk.agreement_tol);
    Ok(())
}

fn g_axioms(setup: &Setup, dir: &mut RunDir, s: &mut Summary) -> Result<(), LabError> {
    let chk = setup.config.check.clone().unwrap_or_default();
    let seed = setup.config.seed.unwrap_or_default();
    let mut rows = Vec::new();
    let mut examples = String::new();
    let mut total = 0;
    for &mode in &chk.modes {
        let mode: ConstraintMode = mode.into();
        let rep = check_G_axioms(&setup.problem_in(mode), chk.trials, seed)?;
        total += rep.violations();
        for ex in &rep.counterexamples {
            examples.push_str(&format!("{mode}: {ex:?}\n"));
        }
        rows.push(vec![
            mode.to_string(),
            rep.trials.to_string(),
            rep.monotonicity_violations.to_string(),
            rep.sign_violations.to_string(),
            rep.witness_failures.to_string(),
            num(rep.max_sign_pairing),
            num(rep.min_monotone_pairing),
            rep.samples_in_k.to_string(),
        ]);
        s.set(&format!("violations.{mode}"), rep.violations());
    }
    dir.csv(
        "axioms.csv",
        &[
            "mode",
            "trials",
            "monotonicity_violations",
            "sign_violations",
            "witness_failures",
            "max_sign_pairing",
            "min_monotone_pairing",
            "samples_in_k",
        ],
        rows,
    )?;
    if !examples.is_empty() {
        dir.text("counterexamples.txt", &examples)?;
    }
    s.set("trials_per_mode", chk.trials);
    s.set("total_violations", total);
    s.set("pass", total == 0);
    Ok(())
}
