//! Minimal L-BFGS minimizer with Armijo backtracking.
//!
//! Sized for the smooth, convex objectives in this crate (a few hundred
//! parameters); not a general-purpose optimizer.

pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Convergence threshold on the Euclidean gradient norm.
    pub grad_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { memory: 10, max_iters: 500, grad_tol: 1e-8 }
    }
}

#[derive(Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimize `f`, which returns `(value, gradient)`.
pub fn minimize<F>(f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut pairs: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new(); // (s, y, rho)

    for iter in 0..opts.max_iters {
        let gnorm = norm(&g);
        if gnorm <= opts.grad_tol {
            return LbfgsResult { x, value: fx, grad_norm: gnorm, iterations: iter, converged: true };
        }

        // Two-loop recursion for d = -H * g.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = pairs
            .last()
            .map(|(s, y, _)| dot(s, y) / dot(y, y).max(1e-300))
            .unwrap_or(1.0);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut dg = dot(&d, &g);
        if dg >= 0.0 {
            // Not a descent direction; fall back to steepest descent.
            d = g.iter().map(|v| -v).collect();
            dg = -dot(&g, &g);
            pairs.clear();
        }

        // Armijo backtracking.
        let mut step = 1.0;
        let c1 = 1e-4;
        let mut accepted = None;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = f(&xt);
            if ft.is_finite() && ft <= fx + c1 * step * dg {
                accepted = Some((xt, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xt, ft, gt)) = accepted else {
            // Line search stalled; report the best point found.
            return LbfgsResult {
                x,
                value: fx,
                grad_norm: gnorm,
                iterations: iter,
                converged: gnorm <= opts.grad_tol,
            };
        };

        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * norm(&s) * norm(&yv) {
            if pairs.len() == opts.memory {
                pairs.remove(0);
            }
            pairs.push((s, yv, 1.0 / sy));
        }
        x = xt;
        fx = ft;
        g = gt;
        let _ = n;
    }

    let gnorm = norm(&g);
    LbfgsResult {
        x,
        value: fx,
        grad_norm: gnorm,
        iterations: opts.max_iters,
        converged: gnorm <= opts.grad_tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn solves_a_quadratic() {
        // f(x) = 0.5 x'Ax - b'x with A = diag(1, 10, 100)
        let a = [1.0, 10.0, 100.0];
        let b = [1.0, 2.0, 3.0];
        let f = |x: &[f64]| {
            let val: f64 =
                x.iter().zip(&a).zip(&b).map(|((xi, ai), bi)| 0.5 * ai * xi * xi - bi * xi).sum();
            let grad: Vec<f64> =
                x.iter().zip(&a).zip(&b).map(|((xi, ai), bi)| ai * xi - bi).collect();
            (val, grad)
        };
        let res = minimize(f, vec![5.0, -3.0, 2.0], &LbfgsOptions::default());
        assert!(res.converged);
        for (xi, (ai, bi)) in res.x.iter().zip(a.iter().zip(&b)) {
            assert_abs_diff_eq!(*xi, bi / ai, epsilon = 1e-6);
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let val = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let grad = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            (val, grad)
        };
        let res = minimize(f, vec![-1.2, 1.0], &LbfgsOptions { max_iters: 2000, ..Default::default() });
        assert!(res.converged, "grad_norm={}", res.grad_norm);
        assert_abs_diff_eq!(res.x[0], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(res.x[1], 1.0, epsilon = 1e-5);
    }
}
