//! Minimizers used by the null-model fits: limited-memory quasi-Newton
//! (L-BFGS, two-loop recursion with a weak-Wolfe line search) and a damped
//! Newton method with dense Cholesky solves.
//!
//! The fit objectives are smooth and concave (their negations convex), but on
//! small graphs the constraint systems are often quasi-separable: the optimum
//! sits at infinity along a ray and the gradient decays like exp(-distance).
//! L-BFGS creeps along such rays; Newton advances a full e-folding per
//! iteration, so fits finish with L-BFGS for the interior directions and a
//! Newton stage for the final residual push.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            grad_tol: 1e-8,
            max_iters: 500,
        }
    }
}

#[derive(Debug)]
pub struct LbfgsOutcome<S> {
    pub x: Vec<S>,
    pub value: S,
    /// Max-norm of the gradient at the returned point.
    pub grad_norm: S,
    pub iterations: usize,
    pub converged: bool,
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn inf_norm<S: Scalar>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |m, &x| m.max(x.abs()))
}

/// Minimize `f` starting from `x0`. `f` writes the gradient into its second
/// argument and returns the objective value.
pub fn minimize<S, F>(mut f: F, x0: Vec<S>, opts: &LbfgsOptions) -> LbfgsOutcome<S>
where
    S: Scalar,
    F: FnMut(&[S], &mut [S]) -> S,
{
    let n = x0.len();
    let tol = S::cast(opts.grad_tol);
    let c1 = S::cast(1e-4);

    let mut x = x0;
    let mut grad = vec![S::zero(); n];
    let mut fx = f(&x, &mut grad);

    let mut s_hist: Vec<Vec<S>> = Vec::new();
    let mut y_hist: Vec<Vec<S>> = Vec::new();
    let mut rho_hist: Vec<S> = Vec::new();

    let mut x_new = vec![S::zero(); n];
    let mut grad_new = vec![S::zero(); n];

    let mut iterations = 0;
    while iterations < opts.max_iters {
        let gnorm = inf_norm(&grad);
        if gnorm <= tol {
            return LbfgsOutcome {
                x,
                value: fx,
                grad_norm: gnorm,
                iterations,
                converged: true,
            };
        }
        iterations += 1;

        // two-loop recursion for d = -H g
        let mut q = grad.clone();
        let m = s_hist.len();
        let mut alphas = vec![S::zero(); m];
        for i in (0..m).rev() {
            let a = rho_hist[i] * dot(&s_hist[i], &q);
            alphas[i] = a;
            for (qk, yk) in q.iter_mut().zip(&y_hist[i]) {
                *qk -= a * *yk;
            }
        }
        if m > 0 {
            let last = m - 1;
            let gamma = dot(&s_hist[last], &y_hist[last]) / dot(&y_hist[last], &y_hist[last]);
            for qk in &mut q {
                *qk *= gamma;
            }
        }
        for i in 0..m {
            let beta = rho_hist[i] * dot(&y_hist[i], &q);
            let corr = alphas[i] - beta;
            for (qk, sk) in q.iter_mut().zip(&s_hist[i]) {
                *qk += corr * *sk;
            }
        }
        let mut dir: Vec<S> = q.into_iter().map(|v| -v).collect();
        let mut dg = dot(&dir, &grad);
        if dg >= S::zero() || dg.is_nan() {
            // not a descent direction: restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            dir = grad.iter().map(|&g| -g).collect();
            dg = dot(&dir, &grad);
        }

        let mut alpha = if m == 0 {
            S::one() / S::one().max(inf_norm(&dir))
        } else {
            S::one()
        };

        // weak-Wolfe bracketing: sufficient decrease plus a curvature
        // condition, so stored (s, y) pairs always have positive s.y and the
        // implicit Hessian stays well-scaled
        let c2 = S::cast(0.9);
        let mut lo = S::zero();
        let mut hi = S::infinity();
        let mut accepted = None;
        let mut fallback: Option<(S, S)> = None; // (alpha, f) best Armijo point
        for _ in 0..60 {
            for k in 0..n {
                x_new[k] = x[k] + alpha * dir[k];
            }
            let f_new = f(&x_new, &mut grad_new);
            if !f_new.is_finite() || f_new > fx + c1 * alpha * dg {
                hi = alpha;
                alpha = (lo + hi) * S::cast(0.5);
            } else if dot(&grad_new, &dir) < c2 * dg {
                if fallback.is_none_or(|(_, fb)| f_new < fb) {
                    fallback = Some((alpha, f_new));
                }
                lo = alpha;
                alpha = if hi.is_finite() {
                    (lo + hi) * S::cast(0.5)
                } else {
                    alpha + alpha
                };
            } else {
                accepted = Some(f_new);
                break;
            }
            if alpha <= lo || alpha >= hi || alpha.is_nan() {
                break; // bracket collapsed to machine precision
            }
        }
        let f_new = match accepted {
            Some(v) => v,
            None => match fallback {
                // curvature never satisfied (e.g. near-flat valley): take the
                // best sufficient-decrease point and skip the (s, y) update
                Some((a, v)) => {
                    for k in 0..n {
                        x_new[k] = x[k] + a * dir[k];
                    }
                    f(&x_new, &mut grad_new);
                    v
                }
                None => {
                    // flat to machine precision along every tried step
                    return LbfgsOutcome {
                        x,
                        value: fx,
                        grad_norm: inf_norm(&grad),
                        iterations,
                        converged: false,
                    };
                }
            },
        };

        let mut s_vec = vec![S::zero(); n];
        let mut y_vec = vec![S::zero(); n];
        for k in 0..n {
            s_vec[k] = x_new[k] - x[k];
            y_vec[k] = grad_new[k] - grad[k];
        }
        let sy = dot(&s_vec, &y_vec);
        let s_n: S = dot(&s_vec, &s_vec).sqrt();
        let y_n: S = dot(&y_vec, &y_vec).sqrt();
        if sy > S::cast(1e-12) * s_n * y_n {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            s_hist.push(s_vec);
            y_hist.push(y_vec);
            rho_hist.push(S::one() / sy);
        }

        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut grad, &mut grad_new);
        fx = f_new;
    }

    let gnorm = inf_norm(&grad);
    LbfgsOutcome {
        converged: gnorm <= tol,
        grad_norm: gnorm,
        x,
        value: fx,
        iterations,
    }
}

/// In-place Cholesky factorization of a dense row-major SPD matrix.
/// Returns false if a pivot is not strictly positive.
fn cholesky<S: Scalar>(a: &mut [S], n: usize) -> bool {
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if sum <= S::zero() || sum.is_nan() {
                    return false;
                }
                a[i * n + i] = sum.sqrt();
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
    }
    true
}

/// Solve L L^T x = b in place given the Cholesky factor in `a`'s lower triangle.
fn cholesky_solve<S: Scalar>(a: &[S], n: usize, b: &mut [S]) {
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= a[i * n + k] * b[k];
        }
        b[i] = sum / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut sum = b[i];
        for k in (i + 1)..n {
            sum -= a[k * n + i] * b[k];
        }
        b[i] = sum / a[i * n + i];
    }
}

/// Damped Newton minimization. `hessian` writes the dim*dim Hessian of the
/// minimized function (positive semidefinite for our convex objectives);
/// a Levenberg shift is escalated until the factorization succeeds.
pub fn newton_minimize<S, F, H>(
    mut f: F,
    mut hessian: H,
    x0: Vec<S>,
    opts: &LbfgsOptions,
) -> LbfgsOutcome<S>
where
    S: Scalar,
    F: FnMut(&[S], &mut [S]) -> S,
    H: FnMut(&[S], &mut [S]),
{
    let n = x0.len();
    let tol = S::cast(opts.grad_tol);
    let c1 = S::cast(1e-4);

    let mut x = x0;
    let mut grad = vec![S::zero(); n];
    let mut fx = f(&x, &mut grad);
    let mut h = vec![S::zero(); n * n];
    let mut h_work = vec![S::zero(); n * n];
    let mut dir = vec![S::zero(); n];
    let mut x_new = vec![S::zero(); n];
    let mut grad_new = vec![S::zero(); n];

    let mut iterations = 0;
    while iterations < opts.max_iters {
        let gnorm = inf_norm(&grad);
        if gnorm <= tol {
            return LbfgsOutcome {
                x,
                value: fx,
                grad_norm: gnorm,
                iterations,
                converged: true,
            };
        }
        iterations += 1;

        hessian(&x, &mut h);
        let mut max_diag = S::zero();
        for i in 0..n {
            max_diag = max_diag.max(h[i * n + i].abs());
        }
        let mut tau = S::zero();
        let mut factored = false;
        for _ in 0..40 {
            h_work.copy_from_slice(&h);
            if tau > S::zero() {
                for i in 0..n {
                    h_work[i * n + i] += tau;
                }
            }
            if cholesky(&mut h_work, n) {
                factored = true;
                break;
            }
            tau = if tau == S::zero() {
                max_diag.max(S::one()) * S::cast(1e-12)
            } else {
                tau * S::cast(100.0)
            };
        }
        if !factored {
            break;
        }
        for k in 0..n {
            dir[k] = -grad[k];
        }
        cholesky_solve(&h_work, n, &mut dir);
        let mut dg = dot(&dir, &grad);
        if dg >= S::zero() || dg.is_nan() {
            for k in 0..n {
                dir[k] = -grad[k];
            }
            dg = dot(&dir, &grad);
        }

        let mut alpha = S::one();
        let mut accepted = None;
        for _ in 0..60 {
            for k in 0..n {
                x_new[k] = x[k] + alpha * dir[k];
            }
            let f_new = f(&x_new, &mut grad_new);
            let sufficient_decrease = f_new.is_finite() && f_new <= fx + c1 * alpha * dg;
            // Once the predicted decrease sinks below the value's float
            // resolution, Armijo is pure noise; a shrinking gradient norm
            // then carries the quadratic endgame.
            let noise_regime =
                alpha * dg.abs() <= S::cast(64.0) * S::epsilon() * (S::one() + fx.abs());
            let gradient_shrunk = noise_regime
                && f_new.is_finite()
                && inf_norm(&grad_new) <= S::cast(0.9) * gnorm;
            if sufficient_decrease || gradient_shrunk {
                accepted = Some(f_new);
                break;
            }
            alpha *= S::cast(0.5);
        }
        let Some(f_new) = accepted else { break };
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut grad, &mut grad_new);
        fx = f_new;
    }

    let gnorm = inf_norm(&grad);
    LbfgsOutcome {
        converged: gnorm <= tol,
        grad_norm: gnorm,
        x,
        value: fx,
        iterations,
    }
}
