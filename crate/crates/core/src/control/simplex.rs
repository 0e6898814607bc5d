//! Nelder–Mead simplex search with restarts, using the dimension-adapted
//! coefficients of Gao and Han.

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOptions {
    /// Edge length of the initial simplex.
    pub initial_step: f64,
    /// Stop when the spread of simplex values is at most this.
    pub ftol: f64,
    /// ... and every vertex is within this distance of the best one.
    pub xtol: f64,
    pub max_evals: usize,
    /// Fresh simplices built around the best point after convergence; the
    /// search ends once a restart improves the value by less than `ftol`.
    pub max_restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            initial_step: 0.5,
            ftol: 1e-8,
            xtol: 1e-6,
            max_evals: 20_000,
            max_restarts: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Best value after each iteration (nonincreasing).
    pub best_trace: Vec<f64>,
    pub converged: bool,
}

/// Minimizes `f` from `x0`. Errors from `f` abort the search.
pub fn nelder_mead<E>(
    mut f: impl FnMut(&[f64]) -> Result<f64, E>,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> Result<NelderMeadResult, E> {
    let n = x0.len();
    let nf = n.max(1) as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    let mut best_x = x0.to_vec();
    let mut best_f = eval(x0, &mut evals)?;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut step = opts.initial_step;

    for restart in 0..=opts.max_restarts {
        let start_f = best_f;
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(best_x.clone(), best_f)];
        for i in 0..n {
            let mut x = best_x.clone();
            x[i] += step;
            let fx = eval(&x, &mut evals)?;
            simplex.push((x, fx));
        }
        converged = false;
        while evals < opts.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            iterations += 1;
            let lo = simplex[0].1;
            let hi = simplex[n].1;
            trace.push(lo.min(best_f));
            let diameter = simplex[1..]
                .iter()
                .map(|(x, _)| dist(x, &simplex[0].0))
                .fold(0.0, f64::max);
            if hi - lo <= opts.ftol && diameter <= opts.xtol {
                converged = true;
                break;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|k| simplex[..n].iter().map(|(x, _)| x[k]).sum::<f64>() / nf)
                .collect();
            let along = |t: f64, worst: &[f64]| -> Vec<f64> {
                centroid.iter().zip(worst).map(|(c, w)| c + t * (c - w)).collect()
            };
            let worst = simplex[n].0.clone();
            let xr = along(alpha, &worst);
            let fr = eval(&xr, &mut evals)?;
            if fr < lo {
                let xe = along(alpha * gamma, &worst);
                let fe = eval(&xe, &mut evals)?;
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < hi {
                let xc = along(alpha * rho, &worst);
                let fc = eval(&xc, &mut evals)?;
                (xc, fc)
            } else {
                let xc = along(-rho, &worst);
                let fc = eval(&xc, &mut evals)?;
                (xc, fc)
            };
            if fc < fr.min(hi) {
                simplex[n] = (xc, fc);
                continue;
            }
            let x0 = simplex[0].0.clone();
            for v in simplex.iter_mut().skip(1) {
                let x: Vec<f64> = x0.iter().zip(&v.0).map(|(a, b)| a + sigma * (b - a)).collect();
                let fx = eval(&x, &mut evals)?;
                *v = (x, fx);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 < best_f {
            best_f = simplex[0].1;
            best_x = simplex[0].0.clone();
        }
        if let Some(last) = trace.last_mut() {
            *last = last.min(best_f);
        }
        if evals >= opts.max_evals || (restart > 0 && start_f - best_f < opts.ftol) {
            break;
        }
        step = (step * 0.1).max(10.0 * opts.xtol);
    }
    Ok(NelderMeadResult {
        x: best_x,
        fx: best_f,
        iterations,
        evaluations: evals,
        best_trace: trace,
        converged,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
