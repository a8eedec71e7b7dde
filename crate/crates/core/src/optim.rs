//! Unconstrained minimizers used by the maximum-likelihood fit.
//!
//! Objectives may return `f64::INFINITY` to mark points outside the domain;
//! both methods treat such points as rejected trial steps.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BfgsStatus {
    Converged,
    LineSearchFailed,
    NonFiniteGradient,
    MaxIterations,
    InfeasibleStart,
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub status: BfgsStatus,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS on the inverse Hessian with a backtracking Armijo line search.
///
/// Stops when the gradient sup-norm drops to `gtol`. Where objective
/// differences fall below rounding level the approximate Wolfe conditions
/// replace the Armijo test. A failed line search is retried once along the
/// steepest-descent direction before giving up.
pub fn bfgs_minimize<F, G>(f: F, grad: G, x0: &[f64], gtol: f64, max_iter: usize) -> BfgsOutcome
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    const ARMIJO: f64 = 1e-4;
    const SHRINK: f64 = 0.5;
    const MAX_HALVINGS: usize = 60;
    const FLAT_REL: f64 = 1e-10;
    const WOLFE: f64 = 0.9;
    const ARMIJO_APPROX: f64 = 0.1;

    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return BfgsOutcome {
            x,
            f: fx,
            grad: vec![f64::NAN; n],
            iterations: 0,
            status: BfgsStatus::InfeasibleStart,
        };
    }
    let mut g = grad(&x);
    let identity = |h: &mut Vec<f64>| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
    };
    let mut h = vec![0.0; n * n];
    identity(&mut h);
    let mut fresh = true;

    for iter in 0..max_iter {
        if g.iter().any(|v| !v.is_finite()) {
            return BfgsOutcome { x, f: fx, grad: g, iterations: iter, status: BfgsStatus::NonFiniteGradient };
        }
        if sup_norm(&g) <= gtol {
            return BfgsOutcome { x, f: fx, grad: g, iterations: iter, status: BfgsStatus::Converged };
        }

        let mut accepted = None;
        for attempt in 0..2 {
            if attempt == 1 {
                if fresh {
                    break;
                }
                identity(&mut h);
                fresh = true;
            }
            let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
            let mut slope = dot(&g, &d);
            if !(slope < 0.0) {
                identity(&mut h);
                fresh = true;
                d = g.iter().map(|v| -v).collect();
                slope = dot(&g, &d);
            }
            let mut t = if fresh { (1.0 / sup_norm(&g)).min(1.0) } else { 1.0 };
            for _ in 0..MAX_HALVINGS {
                let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
                let ft = f(&trial);
                if ft.is_finite() && ft <= fx + ARMIJO * t * slope {
                    accepted = Some((trial, ft, t, d.clone(), None));
                    break;
                }
                // Function differences below rounding level carry no
                // information; judge the step by the directional derivative.
                if ft.is_finite() && (ft - fx).abs() <= FLAT_REL * (1.0 + fx.abs()) {
                    let gt = grad(&trial);
                    let dt = dot(&gt, &d);
                    if dt.is_finite() && dt >= WOLFE * slope && dt <= (2.0 * ARMIJO_APPROX - 1.0) * slope {
                        accepted = Some((trial, ft, t, d.clone(), Some(gt)));
                        break;
                    }
                }
                t *= SHRINK;
            }
            if accepted.is_some() {
                break;
            }
        }

        let Some((x_new, f_new, t, d, g_cached)) = accepted else {
            return BfgsOutcome { x, f: fx, grad: g, iterations: iter, status: BfgsStatus::LineSearchFailed };
        };
        let g_new = g_cached.unwrap_or_else(|| grad(&x_new));
        let s: Vec<f64> = d.iter().map(|v| t * v).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy.is_finite() {
            if fresh {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
            }
            // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            fresh = false;
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    let status = if g.iter().all(|v| v.is_finite()) && sup_norm(&g) <= gtol {
        BfgsStatus::Converged
    } else {
        BfgsStatus::MaxIterations
    };
    BfgsOutcome { x, f: fx, grad: g, iterations: max_iter, status }
}

#[derive(Debug, Clone)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
}

/// Nelder-Mead simplex search with the standard coefficients
/// (reflection 1, expansion 2, contraction 0.5, shrink 0.5).
pub fn nelder_mead<F>(f: F, x0: &[f64], step: f64, max_evals: usize, ftol: f64) -> SimplexOutcome
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(x0);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        let fv = eval(&v);
        simplex.push((v, fv));
    }

    while evals.get() < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if worst.is_finite() && (worst - best).abs() <= ftol * (best.abs() + ftol) {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(p, _)| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for k in 1..=n {
                    let xs: Vec<f64> = best
                        .iter()
                        .zip(&simplex[k].0)
                        .map(|(b, v)| b + 0.5 * (v - b))
                        .collect();
                    let fs = eval(&xs);
                    simplex[k] = (xs, fs);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    SimplexOutcome { x, f: fx, evaluations: evals.get() }
}
